mod common;

use common::{random_vector, rng, spatial_three_link, v};
use impedance_synth::controller::ImpedanceController;
use impedance_synth::dynamics::{ManipulatorModel, RigidTransform};
use impedance_synth::sim::{simulate, DisturbanceProfile, DisturbanceSegment};
use impedance_synth::synthesis::ControllerGains;
use impedance_synth::taskspace::TaskMap;
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

fn spatial_controller(reference: DVector<f64>, model: &ManipulatorModel) -> ImpedanceController {
    let gains = ControllerGains::diagonal(v(&[40.0, 60.0, 80.0]), v(&[5.0, 6.0, 7.0]), reference).unwrap();
    ImpedanceController::new(gains, TaskMap::end_effector(model), model).unwrap()
}

fn two_link_controller() -> (ManipulatorModel, ImpedanceController) {
    let model = ManipulatorModel::two_link_uniform();
    let gains = ControllerGains::diagonal(v(&[240.9, 2883.5]), v(&[15.0, 142.5]), v(&[1.0, 1.0])).unwrap();
    let ctrl = ImpedanceController::new(gains, TaskMap::end_effector(&model), &model).unwrap();
    (model, ctrl)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Translating the base moves every end-effector position by a constant; moving r along keeps F_c.
    #[test]
    fn force_is_shift_equivariant(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let model = spatial_three_link();
        let shift = random_vector(&mut r, 3, 2.0);
        let mut links = model.links().to_vec();
        let base = links[0].joint_origin.translation + Vector3::new(shift[0], shift[1], shift[2]);
        links[0].joint_origin = RigidTransform { translation: base, ..links[0].joint_origin };
        let moved = ManipulatorModel::new(model.kind(), links, *model.gravity()).unwrap();
        let reference = random_vector(&mut r, 3, 1.0);
        let a = spatial_controller(reference.clone(), &model);
        let b = spatial_controller(reference + &shift, &moved);
        let q = random_vector(&mut r, 3, 3.0);
        let qd = random_vector(&mut r, 3, 2.0);
        let fa = a.control_force(&model, &q, &qd).unwrap();
        let fb = b.control_force(&moved, &q, &qd).unwrap();
        prop_assert!((&fa.f_c - &fb.f_c).amax() < 1e-10 * fa.f_c.amax().max(1.0));
        prop_assert!((&fa.u - &fb.u).amax() < 1e-10 * fa.u.amax().max(1.0));
    }

    #[test]
    fn desired_energy_is_nonnegative(seed in 0u64..10_000) {
        let (model, ctrl) = two_link_controller();
        let mut r = rng(seed);
        let q = random_vector(&mut r, 2, 3.0);
        let qd = random_vector(&mut r, 2, 2.0);
        prop_assert!(ctrl.desired_energy(&model, &q, &qd).unwrap() >= 0.0);
    }
}

#[test]
fn energy_rate_matches_dissipation_plus_supply() {
    let (model, ctrl) = two_link_controller();
    let ee = TaskMap::end_effector(&model);
    let f_d = v(&[4.0, -3.0]);
    let dist = DisturbanceProfile::new(2, vec![DisturbanceSegment { t_start: 0.0, t_end: 2.0, force: f_d.clone() }]).unwrap();
    let traj = simulate(&model, &ctrl, &ee, &dist, 1.0, 1e-3, &v(&[0.1, 1.4]), &v(&[0.2, -0.3])).unwrap();
    for k in (0..traj.len()).step_by(50) {
        let (q, qd) = (&traj.q[k], &traj.qdot[k]);
        let tau = ctrl.control_force(&model, q, qd).unwrap().u + ee.jacobian(&model, q).unwrap().transpose() * &f_d;
        let qdd = model.forward_dynamics(q, qd, &tau).unwrap();
        let h = 1e-6;
        let plus = ctrl.desired_energy(&model, &(q + qd * h), &(qd + &qdd * h)).unwrap();
        let minus = ctrl.desired_energy(&model, &(q - qd * h), &(qd - &qdd * h)).unwrap();
        let rate = (plus - minus) / (2.0 * h);
        let zd = ee.jacobian(&model, q).unwrap() * qd;
        let expected = -ctrl.dissipation(&model, q, qd).unwrap() + zd.dot(&f_d);
        assert!((rate - expected).abs() < 1e-5 * expected.abs().max(1.0), "t = {}: {rate} vs {expected}", traj.t[k]);
    }
}

#[test]
fn unforced_energy_never_increases() {
    let (model, ctrl) = two_link_controller();
    let ee = TaskMap::end_effector(&model);
    let traj = simulate(&model, &ctrl, &ee, &DisturbanceProfile::zero(2), 3.0, 1e-3, &v(&[0.1, 1.4]), &v(&[0.0, 0.0])).unwrap();
    for w in traj.h_d.windows(2) {
        assert!(w[1] - w[0] <= 1e-6, "energy rose by {}", w[1] - w[0]);
    }
}

#[test]
fn gains_must_match_map_dimension() {
    let model = ManipulatorModel::two_link_uniform();
    let gains = ControllerGains::diagonal(v(&[1.0]), v(&[1.0]), v(&[1.0])).unwrap();
    assert!(ImpedanceController::new(gains, TaskMap::end_effector(&model), &model).is_err());
}
