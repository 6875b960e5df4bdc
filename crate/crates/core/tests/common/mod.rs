#![allow(dead_code)]

use std::path::PathBuf;

use impedance_synth::config::{load_problem, ProblemConfig};
use impedance_synth::dynamics::{LinkParam, ManipulatorModel, ModelKind, RigidTransform};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn two_link_config() -> ProblemConfig {
    load_problem(&configs_dir().join("twolink.cfg")).unwrap()
}

pub fn arm7_config() -> ProblemConfig {
    load_problem(&configs_dir().join("iiwa7.cfg")).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// Three-joint spatial arm with mixed joint axes and off-axis link frames.
pub fn spatial_three_link() -> ManipulatorModel {
    let mut links = Vec::new();
    let axes = [Vector3::z(), Vector3::y(), Vector3::x()];
    let origins = [
        RigidTransform::from_xyz_rpy([0.0, 0.0, 0.3], [0.0, 0.0, 0.0]),
        RigidTransform::from_xyz_rpy([0.0, 0.05, 0.4], [0.1, 0.0, 0.0]),
        RigidTransform::from_xyz_rpy([0.35, 0.0, 0.0], [0.0, 0.2, -0.1]),
    ];
    for (i, (axis, origin)) in axes.into_iter().zip(origins).enumerate() {
        let mut link = LinkParam::uniform_rod(0.4 - 0.05 * i as f64, 2.0 - 0.5 * i as f64);
        link.joint_axis = axis;
        link.joint_origin = origin;
        link.direction = Vector3::new(0.0, 0.0, 1.0);
        link.inertia_about_com = nalgebra::Matrix3::from_diagonal(&Vector3::new(0.03, 0.025, 0.01 + 0.002 * i as f64));
        links.push(link);
    }
    ManipulatorModel::new(ModelKind::Spatial, links, Vector3::new(0.0, 0.0, -9.81)).unwrap()
}

/// Two-link planar arm, its 7-axis configuration and a three-joint spatial arm.
pub fn all_models() -> Vec<ManipulatorModel> {
    vec![
        ManipulatorModel::two_link_uniform(),
        spatial_three_link(),
        arm7_config().problem.model,
    ]
}
