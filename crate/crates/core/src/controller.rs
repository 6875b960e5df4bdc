//! Energy-shaping impedance law in operation space.
//!
//! ```text
//! F_c = diag(k)(r − h_c(q)) − diag(b) J_c(q) q̇
//! u   = J_c(q)ᵀ F_c + g(q)
//! H_d = ½ q̇ᵀ M(q) q̇ + ½ (h_c(q) − r)ᵀ diag(k) (h_c(q) − r)
//! ```

use nalgebra::{DMatrix, DVector};

use crate::dynamics::ManipulatorModel;
use crate::error::{check_dim, Result};
use crate::synthesis::{ControllerGains, SynthesisMode};
use crate::taskspace::TaskMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// Operation-space force.
    pub f_c: DVector<f64>,
    /// Joint torque.
    pub u: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ImpedanceController {
    pub gains: ControllerGains,
    pub c_map: TaskMap,
    pub gravity_compensation: bool,
}

impl ImpedanceController {
    pub fn new(gains: ControllerGains, c_map: TaskMap, model: &ManipulatorModel) -> Result<Self> {
        c_map.validate(model)?;
        let n = model.joint_count();
        check_dim("control map output", n, c_map.output_dim(model))?;
        check_dim("stiffness gains", n, gains.stiffness.len())?;
        check_dim("damping gains", n, gains.damping.len())?;
        check_dim("reference", n, gains.reference.len())?;
        check_dim("gain matrix rows", n, gains.k_matrix.nrows())?;
        check_dim("gain matrix columns", 2 * n, gains.k_matrix.ncols())?;
        Ok(Self {
            gains,
            c_map,
            gravity_compensation: true,
        })
    }

    pub fn without_gravity_compensation(mut self) -> Self {
        self.gravity_compensation = false;
        self
    }

    pub fn control_force(&self, model: &ManipulatorModel, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<ControlOutput> {
        check_dim("joint velocity", q.len(), qdot.len())?;
        let h = self.c_map.eval(model, q)?;
        let jac = self.c_map.jacobian(model, q)?;
        let zdot = &jac * qdot;
        let g = &self.gains;
        let f_c = match g.mode {
            SynthesisMode::Lmi2 => {
                (&g.reference - &h).component_mul(&g.stiffness) - zdot.component_mul(&g.damping)
            }
            SynthesisMode::Lmi1 => {
                let n = h.len();
                let mut x = DVector::zeros(2 * n);
                x.rows_mut(0, n).copy_from(&(&h - &g.reference));
                x.rows_mut(n, n).copy_from(&zdot);
                -(&g.k_matrix * x)
            }
        };
        let mut u = jac.transpose() * &f_c;
        if self.gravity_compensation {
            u += model.gravity_torque(q)?;
        }
        Ok(ControlOutput { f_c, u })
    }

    /// Kinetic energy plus the shaped potential `½ (h_c − r)ᵀ diag(k) (h_c − r)`.
    pub fn desired_energy(&self, model: &ManipulatorModel, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<f64> {
        let e = self.c_map.eval(model, q)? - &self.gains.reference;
        let shaped = 0.5 * e.component_mul(&self.gains.stiffness).dot(&e);
        Ok(model.kinetic_energy(q, qdot)? + shaped)
    }

    /// Power dissipated by damping injection, `q̇ᵀ J_cᵀ diag(b) J_c q̇`.
    pub fn dissipation(&self, model: &ManipulatorModel, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<f64> {
        let zdot = self.c_map.jacobian(model, q)? * qdot;
        Ok(zdot.component_mul(&self.gains.damping).dot(&zdot))
    }

    /// Feedback gain as used by the linearization, `F_c = −K x`.
    pub fn gain_matrix(&self) -> &DMatrix<f64> {
        &self.gains.k_matrix
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn setup(k: [f64; 2], b: [f64; 2], q: &DVector<f64>) -> (ManipulatorModel, ImpedanceController) {
        let model = ManipulatorModel::two_link_uniform();
        let map = TaskMap::end_effector(&model);
        let r = map.eval(&model, q).unwrap();
        let gains = ControllerGains::diagonal(v(&k), v(&b), r).unwrap();
        let ctrl = ImpedanceController::new(gains, map, &model).unwrap();
        (model, ctrl)
    }

    #[test]
    fn equilibrium_needs_only_gravity() {
        let q = v(&[0.0, FRAC_PI_2]);
        let (model, ctrl) = setup([35.38, 293.61], [5.0, 7.0], &q);
        let out = ctrl.control_force(&model, &q, &v(&[0.0, 0.0])).unwrap();
        assert!(out.f_c.norm() < 1e-14);
        assert!((out.u - model.gravity_torque(&q).unwrap()).norm() < 1e-12);
        assert_eq!(ctrl.desired_energy(&model, &q, &v(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn displacement_along_x_gives_x_force() {
        let q = v(&[0.0, FRAC_PI_2]);
        let (model, mut ctrl) = setup([35.38, 293.61], [5.0, 7.0], &q);
        // Shift the reference instead of the arm: same task-space offset of −δ along x.
        let delta = 1e-3;
        ctrl.gains.reference[0] -= delta;
        let out = ctrl.control_force(&model, &q, &v(&[0.0, 0.0])).unwrap();
        assert!((out.f_c[0] - 35.38 * (-delta)).abs() < 1e-12);
        assert_eq!(out.f_c[1], 0.0);
    }

    #[test]
    fn unit_offset_energy_is_half_stiffness() {
        let q = v(&[0.3, 1.2]);
        let (model, mut ctrl) = setup([35.0, 290.0], [1.0, 1.0], &q);
        ctrl.gains.reference[1] += 1.0;
        let h = ctrl.desired_energy(&model, &q, &v(&[0.0, 0.0])).unwrap();
        assert!((h - 145.0).abs() < 1e-12);
    }

    #[test]
    fn full_gain_law_matches_diagonal_law() {
        let q = v(&[0.2, 1.4]);
        let qd = v(&[0.3, -0.7]);
        let (model, ctrl) = setup([30.0, 200.0], [4.0, 9.0], &v(&[0.0, FRAC_PI_2]));
        let mut full = ctrl.clone();
        full.gains.mode = SynthesisMode::Lmi1;
        let a = ctrl.control_force(&model, &q, &qd).unwrap();
        let b = full.control_force(&model, &q, &qd).unwrap();
        assert!((a.f_c - b.f_c).norm() < 1e-12);
    }

    #[test]
    fn gravity_compensation_toggle() {
        let q = v(&[0.4, 0.4]);
        let (model, ctrl) = setup([1.0, 1.0], [1.0, 1.0], &q);
        let ctrl = ctrl.without_gravity_compensation();
        let out = ctrl.control_force(&model, &q, &v(&[0.0, 0.0])).unwrap();
        assert!(out.u.norm() < 1e-14);
    }
}
