//! Rigid-body dynamics of open-chain revolute manipulators.
//!
//! The mass matrix is assembled from per-link Jacobians,
//! `M(q) = Σ mᵢ Jvᵢᵀ Jvᵢ + Jωᵢᵀ Iᵢ Jωᵢ`, and its partial derivatives are
//! evaluated in closed form from the revolute-chain identity
//! `∂x/∂q_k = ω_k × (x − o_k)`. The Coriolis matrix is built from the
//! Christoffel symbols of `M`, so `Ṁ − 2C` is skew-symmetric by construction.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, Rotation3, Unit, Vector3};

use crate::error::{check_dim, Error, Result};

/// Rigid transform from a parent link frame to a joint frame (at zero joint angle).
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub translation: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: Matrix3::identity(),
        }
    }

    pub fn translation(translation: Vector3<f64>) -> Self {
        Self {
            translation,
            rotation: Matrix3::identity(),
        }
    }

    /// Translation followed by a roll-pitch-yaw rotation (extrinsic x, y, z).
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self {
            translation: Vector3::from(xyz),
            rotation: *Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).matrix(),
        }
    }
}

/// Geometric and inertial parameters of one link and the joint that drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParam {
    pub length: f64,
    pub mass: f64,
    /// Distance of the center of mass from the proximal joint, along `direction`.
    pub com_offset: f64,
    /// Inertia tensor about the center of mass, in the link frame.
    pub inertia_about_com: Matrix3<f64>,
    /// Joint axis in the joint frame.
    pub joint_axis: Vector3<f64>,
    pub joint_origin: RigidTransform,
    /// Unit vector along the link body, in the link frame.
    pub direction: Vector3<f64>,
}

impl LinkParam {
    /// Planar link rotating about z and extending along its local x axis.
    pub fn planar(length: f64, mass: f64, com_offset: f64, inertia_about_com: f64) -> Self {
        Self {
            length,
            mass,
            com_offset,
            inertia_about_com: Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, inertia_about_com)),
            joint_axis: Vector3::z(),
            joint_origin: RigidTransform::identity(),
            direction: Vector3::x(),
        }
    }

    /// Uniform thin rod: center of mass at mid-length, inertia m·L²/12.
    pub fn uniform_rod(length: f64, mass: f64) -> Self {
        Self::planar(length, mass, 0.5 * length, mass * length * length / 12.0)
    }

    fn com_local(&self) -> Vector3<f64> {
        self.direction * self.com_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Motion in the x-y plane; task positions are 2-vectors.
    Planar,
    Spatial,
}

/// Joint-space rigid-body model of a serial revolute manipulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ManipulatorModel {
    kind: ModelKind,
    links: Vec<LinkParam>,
    gravity: Vector3<f64>,
}

/// Joint positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        check_dim("joint state velocity", q.len(), qdot.len())?;
        Ok(Self { q, qdot })
    }
}

/// World-frame quantities of every joint and link at one configuration.
#[derive(Debug, Clone)]
pub(crate) struct Frames {
    /// Joint axes ωⱼ in the world frame.
    pub axes: Vec<Vector3<f64>>,
    /// A point on each joint axis (the joint frame origin).
    pub origins: Vec<Vector3<f64>>,
    /// Orientation of each link frame.
    pub rotations: Vec<Matrix3<f64>>,
}

impl Frames {
    pub fn point(&self, link: usize, local: &Vector3<f64>) -> Vector3<f64> {
        self.origins[link] + self.rotations[link] * local
    }

    /// Linear-velocity Jacobian (3×N) of a world point rigidly attached to `link`.
    pub fn point_jacobian(&self, link: usize, x: &Vector3<f64>) -> Matrix3xX<f64> {
        let n = self.axes.len();
        let mut jac = Matrix3xX::zeros(n);
        for j in 0..=link {
            jac.set_column(j, &self.axes[j].cross(&(x - self.origins[j])));
        }
        jac
    }

    /// ∂(point Jacobian)/∂q_k for a world point rigidly attached to `link`.
    pub fn point_jacobian_partial(&self, link: usize, x: &Vector3<f64>, k: usize) -> Matrix3xX<f64> {
        let n = self.axes.len();
        let mut d = Matrix3xX::zeros(n);
        if k > link {
            return d;
        }
        let wk = self.axes[k];
        let ok = self.origins[k];
        let dx = wk.cross(&(x - ok));
        for j in 0..=link {
            let (dw, dor) = if k < j {
                (wk.cross(&self.axes[j]), wk.cross(&(self.origins[j] - ok)))
            } else {
                (Vector3::zeros(), Vector3::zeros())
            };
            let col = dw.cross(&(x - self.origins[j])) + self.axes[j].cross(&(dx - dor));
            d.set_column(j, &col);
        }
        d
    }

    /// Angular-velocity Jacobian (3×N) of `link`.
    pub fn angular_jacobian(&self, link: usize) -> Matrix3xX<f64> {
        let n = self.axes.len();
        let mut jac = Matrix3xX::zeros(n);
        for j in 0..=link {
            jac.set_column(j, &self.axes[j]);
        }
        jac
    }

    pub fn angular_jacobian_partial(&self, link: usize, k: usize) -> Matrix3xX<f64> {
        let n = self.axes.len();
        let mut d = Matrix3xX::zeros(n);
        for j in (k + 1)..=link {
            d.set_column(j, &self.axes[k].cross(&self.axes[j]));
        }
        d
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl ManipulatorModel {
    pub fn new(kind: ModelKind, links: Vec<LinkParam>, gravity: Vector3<f64>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidModel("model has no links".into()));
        }
        for (i, link) in links.iter().enumerate() {
            if !(link.mass > 0.0) {
                return Err(Error::InvalidModel(format!("link {i}: mass must be > 0")));
            }
            if !(link.length > 0.0) {
                return Err(Error::InvalidModel(format!("link {i}: length must be > 0")));
            }
            if !(0.0..=link.length).contains(&link.com_offset) {
                return Err(Error::InvalidModel(format!(
                    "link {i}: com_offset {} outside [0, {}]",
                    link.com_offset, link.length
                )));
            }
            let inertia = &link.inertia_about_com;
            if (inertia - inertia.transpose()).abs().max() > 1e-12 * (1.0 + inertia.abs().max()) {
                return Err(Error::InvalidModel(format!("link {i}: inertia not symmetric")));
            }
            let min_eig = inertia.symmetric_eigenvalues().min();
            if min_eig < -1e-12 * (1.0 + inertia.abs().max()) {
                return Err(Error::InvalidModel(format!(
                    "link {i}: inertia not positive semidefinite"
                )));
            }
            for (name, v) in [("joint_axis", link.joint_axis), ("direction", link.direction)] {
                if (v.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidModel(format!("link {i}: {name} must be a unit vector")));
                }
            }
            if kind == ModelKind::Planar {
                if (link.joint_axis - Vector3::z()).norm() > 1e-12
                    || link.joint_origin.rotation != Matrix3::identity()
                    || link.joint_origin.translation.z != 0.0
                    || link.direction.z != 0.0
                {
                    return Err(Error::InvalidModel(format!(
                        "link {i}: planar models rotate about z in the x-y plane"
                    )));
                }
            }
        }
        if kind == ModelKind::Planar && gravity.z != 0.0 {
            return Err(Error::InvalidModel("planar gravity must lie in the x-y plane".into()));
        }
        Ok(Self {
            kind,
            links,
            gravity,
        })
    }

    /// Planar chain: each joint sits at the tip of the previous link.
    pub fn planar_chain(mut links: Vec<LinkParam>, gravity: Vector3<f64>) -> Result<Self> {
        let mut prev_tip = Vector3::zeros();
        for link in links.iter_mut() {
            link.joint_origin = RigidTransform::translation(prev_tip);
            prev_tip = link.direction * link.length;
        }
        Self::new(ModelKind::Planar, links, gravity)
    }

    /// The two-link planar arm with uniform 1 m, 3 kg rods under standard gravity along −y.
    pub fn two_link_uniform() -> Self {
        Self::planar_chain(
            vec![LinkParam::uniform_rod(1.0, 3.0), LinkParam::uniform_rod(1.0, 3.0)],
            Vector3::new(0.0, -9.81, 0.0),
        )
        .expect("valid built-in model")
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn joint_count(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[LinkParam] {
        &self.links
    }

    pub fn gravity(&self) -> &Vector3<f64> {
        &self.gravity
    }

    pub fn with_gravity(&self, gravity: Vector3<f64>) -> Self {
        Self {
            gravity,
            ..self.clone()
        }
    }

    /// Cartesian dimension of task-space positions (2 for planar, 3 for spatial).
    pub fn workspace_dim(&self) -> usize {
        match self.kind {
            ModelKind::Planar => 2,
            ModelKind::Spatial => 3,
        }
    }

    pub(crate) fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        check_dim("joint vector", self.joint_count(), q.len())
    }

    pub(crate) fn frames(&self, q: &DVector<f64>) -> Frames {
        let n = self.joint_count();
        let mut axes = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut rotations = Vec::with_capacity(n);
        let mut parent_rot = Matrix3::identity();
        let mut parent_pos = Vector3::zeros();
        for (link, &angle) in self.links.iter().zip(q.iter()) {
            let origin = parent_pos + parent_rot * link.joint_origin.translation;
            let base_rot = parent_rot * link.joint_origin.rotation;
            let axis = base_rot * link.joint_axis;
            let joint_rot = Rotation3::from_axis_angle(&Unit::new_unchecked(link.joint_axis), angle);
            let rot = base_rot * joint_rot.matrix();
            axes.push(axis);
            origins.push(origin);
            rotations.push(rot);
            parent_pos = origin;
            parent_rot = rot;
        }
        Frames {
            axes,
            origins,
            rotations,
        }
    }

    pub(crate) fn link_com(&self, frames: &Frames, i: usize) -> Vector3<f64> {
        frames.point(i, &self.links[i].com_local())
    }

    fn world_inertia(&self, frames: &Frames, i: usize) -> Matrix3<f64> {
        let r = &frames.rotations[i];
        r * self.links[i].inertia_about_com * r.transpose()
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        let frames = self.frames(q);
        Ok(self.mass_matrix_at(&frames))
    }

    fn mass_matrix_at(&self, frames: &Frames) -> DMatrix<f64> {
        let n = self.joint_count();
        let mut m = DMatrix::zeros(n, n);
        for (i, link) in self.links.iter().enumerate() {
            let p = self.link_com(frames, i);
            let jv = frames.point_jacobian(i, &p);
            let jw = frames.angular_jacobian(i);
            let iw = self.world_inertia(frames, i);
            m += (jv.transpose() * &jv) * link.mass + jw.transpose() * iw * &jw;
        }
        symmetrize(&mut m);
        m
    }

    /// ∂M/∂q_k for k = 0..N.
    pub fn mass_matrix_partials(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.check_q(q)?;
        let frames = self.frames(q);
        Ok(self.mass_matrix_partials_at(&frames))
    }

    fn mass_matrix_partials_at(&self, frames: &Frames) -> Vec<DMatrix<f64>> {
        let n = self.joint_count();
        let per_link: Vec<_> = self
            .links
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let p = self.link_com(frames, i);
                (
                    p,
                    frames.point_jacobian(i, &p),
                    frames.angular_jacobian(i),
                    self.world_inertia(frames, i),
                )
            })
            .collect();
        (0..n)
            .map(|k| {
                let mut dm = DMatrix::zeros(n, n);
                let s = skew(&frames.axes[k]);
                for (i, link) in self.links.iter().enumerate().skip(k) {
                    let (p, jv, jw, iw) = &per_link[i];
                    let djv = frames.point_jacobian_partial(i, p, k);
                    let djw = frames.angular_jacobian_partial(i, k);
                    let diw = s * iw - iw * s;
                    let jv_t_djv = jv.transpose() * &djv;
                    let djw_t_iw_jw = djw.transpose() * iw * jw;
                    dm += (&jv_t_djv + jv_t_djv.transpose()) * link.mass
                        + &djw_t_iw_jw
                        + djw_t_iw_jw.transpose()
                        + jw.transpose() * diw * jw;
                }
                dm
            })
            .collect()
    }

    /// Ṁ(q, q̇) = Σ_k ∂M/∂q_k · q̇_k.
    pub fn mass_matrix_dot(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        check_dim("joint velocity", self.joint_count(), qdot.len())?;
        let partials = self.mass_matrix_partials(q)?;
        let n = self.joint_count();
        Ok(partials
            .iter()
            .zip(qdot.iter())
            .fold(DMatrix::zeros(n, n), |acc, (dm, &v)| acc + dm * v))
    }

    /// Coriolis matrix from Christoffel symbols of the first kind.
    pub fn coriolis_matrix(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        check_dim("joint velocity", self.joint_count(), qdot.len())?;
        let frames = self.frames(q);
        Ok(self.coriolis_at(&frames, qdot))
    }

    fn coriolis_at(&self, frames: &Frames, qdot: &DVector<f64>) -> DMatrix<f64> {
        let n = self.joint_count();
        let dm = self.mass_matrix_partials_at(frames);
        DMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * qdot[k])
                .sum()
        })
    }

    /// g(q) = ∂U/∂q.
    pub fn gravity_torque(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_q(q)?;
        let frames = self.frames(q);
        Ok(self.gravity_at(&frames))
    }

    fn gravity_at(&self, frames: &Frames) -> DVector<f64> {
        let n = self.joint_count();
        let mut g = DVector::zeros(n);
        for (i, link) in self.links.iter().enumerate() {
            let p = self.link_com(frames, i);
            let jv = frames.point_jacobian(i, &p);
            g -= jv.transpose() * self.gravity * link.mass;
        }
        g
    }

    /// Gravitational potential energy, datum at the base-frame origin.
    pub fn potential_energy(&self, q: &DVector<f64>) -> Result<f64> {
        self.check_q(q)?;
        let frames = self.frames(q);
        Ok(self
            .links
            .iter()
            .enumerate()
            .map(|(i, link)| -link.mass * self.gravity.dot(&self.link_com(&frames, i)))
            .sum())
    }

    pub fn kinetic_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<f64> {
        check_dim("joint velocity", self.joint_count(), qdot.len())?;
        let m = self.mass_matrix(q)?;
        Ok(0.5 * qdot.dot(&(m * qdot)))
    }

    /// Total mechanical energy ½q̇ᵀMq̇ + U.
    pub fn total_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<f64> {
        Ok(self.kinetic_energy(q, qdot)? + self.potential_energy(q)?)
    }

    /// M q̈ + C q̇ + g.
    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_q(q)?;
        check_dim("joint velocity", self.joint_count(), qdot.len())?;
        check_dim("joint acceleration", self.joint_count(), qddot.len())?;
        let frames = self.frames(q);
        let m = self.mass_matrix_at(&frames);
        let c = self.coriolis_at(&frames, qdot);
        Ok(m * qddot + c * qdot + self.gravity_at(&frames))
    }

    /// Solves M q̈ = τ − C q̇ − g for q̈.
    pub fn forward_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_q(q)?;
        check_dim("joint velocity", self.joint_count(), qdot.len())?;
        check_dim("joint torque", self.joint_count(), tau.len())?;
        let frames = self.frames(q);
        let m = self.mass_matrix_at(&frames);
        let rhs = tau - self.coriolis_at(&frames, qdot) * qdot - self.gravity_at(&frames);
        match m.clone().cholesky() {
            Some(chol) => Ok(chol.solve(&rhs)),
            None => Err(Error::Singular {
                context: "mass matrix",
                condition: condition_number_sym(&m),
            }),
        }
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Ratio of extreme absolute eigenvalues of a symmetric matrix.
pub(crate) fn condition_number_sym(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    /// Closed-form Lagrangian terms of a planar 2-link arm.
    struct TwoLinkOracle {
        m1: f64,
        m2: f64,
        l1: f64,
        c1: f64,
        c2: f64,
        i1: f64,
        i2: f64,
        g: f64,
    }

    impl TwoLinkOracle {
        fn uniform() -> Self {
            Self {
                m1: 3.0,
                m2: 3.0,
                l1: 1.0,
                c1: 0.5,
                c2: 0.5,
                i1: 0.25,
                i2: 0.25,
                g: 9.81,
            }
        }

        fn mass(&self, q2: f64) -> [[f64; 2]; 2] {
            let h = self.m2 * self.l1 * self.c2 * q2.cos();
            let m22 = self.i2 + self.m2 * self.c2 * self.c2;
            let m11 = self.i1
                + self.m1 * self.c1 * self.c1
                + self.m2 * (self.l1 * self.l1 + self.c2 * self.c2)
                + self.i2
                + 2.0 * h;
            let m12 = m22 + h;
            [[m11, m12], [m12, m22]]
        }

        fn coriolis_force(&self, q2: f64, qd: [f64; 2]) -> [f64; 2] {
            let s = self.m2 * self.l1 * self.c2 * q2.sin();
            [-s * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), s * qd[0] * qd[0]]
        }

        fn gravity(&self, q: [f64; 2]) -> [f64; 2] {
            let c12 = (q[0] + q[1]).cos();
            [
                (self.m1 * self.c1 + self.m2 * self.l1) * self.g * q[0].cos()
                    + self.m2 * self.c2 * self.g * c12,
                self.m2 * self.c2 * self.g * c12,
            ]
        }
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn two_link_mass_matches_lagrangian() {
        let model = ManipulatorModel::two_link_uniform();
        let oracle = TwoLinkOracle::uniform();
        for q in [[0.0, 0.0], [0.3, -1.2], [-2.0, 2.9], [1.1, FRAC_PI_2]] {
            let m = model.mass_matrix(&v(&q)).unwrap();
            let expected = oracle.mass(q[1]);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((m[(i, j)] - expected[i][j]).abs() < 1e-10, "{q:?} {i}{j}");
                }
            }
        }
    }

    #[test]
    fn m22_independent_of_configuration() {
        let model = ManipulatorModel::two_link_uniform();
        let a = model.mass_matrix(&v(&[0.0, 0.0])).unwrap();
        let b = model.mass_matrix(&v(&[0.3, 0.0])).unwrap();
        assert!((a[(1, 1)] - b[(1, 1)]).abs() < 1e-12);
        assert!((a - b).abs().max() < 1e-12);
    }

    #[test]
    fn coriolis_and_gravity_match_lagrangian() {
        let model = ManipulatorModel::two_link_uniform();
        let oracle = TwoLinkOracle::uniform();
        for (q, qd) in [([0.4, -0.7], [1.3, -2.1]), ([2.0, 1.0], [-0.5, 0.25])] {
            let c = model.coriolis_matrix(&v(&q), &v(&qd)).unwrap();
            let cq = c * v(&qd);
            let expected = oracle.coriolis_force(q[1], qd);
            assert!((cq[0] - expected[0]).abs() < 1e-10);
            assert!((cq[1] - expected[1]).abs() < 1e-10);
            let g = model.gravity_torque(&v(&q)).unwrap();
            let ge = oracle.gravity(q);
            assert!((g[0] - ge[0]).abs() < 1e-10 && (g[1] - ge[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_velocity_gives_zero_coriolis_force() {
        let model = ManipulatorModel::two_link_uniform();
        let c = model.coriolis_matrix(&v(&[0.2, 0.9]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!((c * v(&[0.0, 0.0])).norm(), 0.0);
    }

    #[test]
    fn upright_arm_has_no_gravity_torque() {
        let model = ManipulatorModel::two_link_uniform();
        let g = model.gravity_torque(&v(&[FRAC_PI_2, 0.0])).unwrap();
        assert!(g.norm() < 1e-12, "{g}");
    }

    #[test]
    fn zero_gravity_means_no_potential() {
        let model = ManipulatorModel::two_link_uniform().with_gravity(Vector3::zeros());
        let q = v(&[0.7, -0.4]);
        assert_eq!(model.gravity_torque(&q).unwrap().norm(), 0.0);
        assert_eq!(model.potential_energy(&q).unwrap(), 0.0);
    }

    #[test]
    fn horizontal_arm_at_datum() {
        let model = ManipulatorModel::two_link_uniform();
        assert!(model.potential_energy(&v(&[0.0, 0.0])).unwrap().abs() < 1e-12);
    }

    #[test]
    fn static_equilibrium_has_zero_acceleration() {
        let model = ManipulatorModel::two_link_uniform();
        let q = v(&[0.3, 0.8]);
        let tau = model.gravity_torque(&q).unwrap();
        let qdd = model.forward_dynamics(&q, &v(&[0.0, 0.0]), &tau).unwrap();
        assert!(qdd.norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = ManipulatorModel::two_link_uniform();
        assert!(matches!(
            model.mass_matrix(&v(&[0.0, 0.0, 0.0])),
            Err(Error::Dimension { .. })
        ));
        assert!(model.coriolis_matrix(&v(&[0.0, 0.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn invalid_links_are_rejected() {
        let g = Vector3::new(0.0, -9.81, 0.0);
        assert!(ManipulatorModel::planar_chain(vec![LinkParam::uniform_rod(1.0, 0.0)], g).is_err());
        assert!(ManipulatorModel::planar_chain(vec![LinkParam::uniform_rod(-1.0, 1.0)], g).is_err());
        let mut bad = LinkParam::uniform_rod(1.0, 1.0);
        bad.com_offset = 1.5;
        assert!(ManipulatorModel::planar_chain(vec![bad], g).is_err());
        assert!(ManipulatorModel::planar_chain(vec![], g).is_err());
    }
}
