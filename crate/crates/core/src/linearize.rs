//! Operation-space linearization of the manipulator at an equilibrium pose.
//!
//! With `x = [z_c − z*; ż_c]` and `y = [W1(z_d − h_d(q*)); W2 ż_d]` the
//! linearized plant is
//!
//! ```text
//! ẋ = A x + B1 F_c + B2 F_d,    y = C x
//! A  = [0 I; 0 0]
//! B1 = [0; Δ⁻¹]
//! B2 = [0; Δ⁻¹ J_c⁻ᵀ J_dᵀ]
//! C  = [W1 J_d J_c⁻¹  0; 0  W2 J_d J_c⁻¹]
//! ```

use nalgebra::{DMatrix, DVector, LU};

use crate::dynamics::{symmetrize, ManipulatorModel};
use crate::error::{check_dim, Error, Result};
use crate::taskspace::{Invertibility, TaskMap};

/// Constant output weights on displacement (`w1`) and velocity (`w2`).
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceWeights {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
}

impl PerformanceWeights {
    pub fn new(w1: DMatrix<f64>, w2: DMatrix<f64>) -> Result<Self> {
        let d = w1.nrows();
        for (name, w) in [("W1", &w1), ("W2", &w2)] {
            if !w.is_square() {
                return Err(Error::InvalidInput(format!("{name} must be square")));
            }
            if !w.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} has non-finite entries")));
            }
        }
        check_dim("weight W2", d, w2.nrows())?;
        Ok(Self { w1, w2 })
    }

    pub fn diagonal(w1: &[f64], w2: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(w1)),
            DMatrix::from_diagonal(&DVector::from_column_slice(w2)),
        )
    }

    pub fn identity(d: usize) -> Self {
        Self {
            w1: DMatrix::identity(d, d),
            w2: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.nrows()
    }
}

/// Operation-space inertia Δ(q) and velocity coupling μ(q, q̇).
#[derive(Debug, Clone, PartialEq)]
pub struct OperationSpaceDynamicsTerms {
    pub delta: DMatrix<f64>,
    pub mu: DMatrix<f64>,
}

/// State-space matrices of the linearized plant at one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseLinearization {
    pub q_star: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    /// `h_c(q*)`.
    pub z_star: DVector<f64>,
    /// `h_d(q*)`.
    pub zd_star: DVector<f64>,
}

impl PoseLinearization {
    /// Degrees of freedom N.
    pub fn n(&self) -> usize {
        self.delta.nrows()
    }

    /// Performance dimension d (also the disturbance dimension).
    pub fn d(&self) -> usize {
        self.b2.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// LU factorization of the transpose of a guarded, square control Jacobian.
pub(crate) struct FactoredJacobian {
    lu_t: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl FactoredJacobian {
    pub fn new(c_map: &TaskMap, model: &ManipulatorModel, q: &DVector<f64>) -> Result<Self> {
        match c_map.check_invertibility(model, q)? {
            Invertibility::Ok { .. } => {}
            Invertibility::Singular { condition_number, .. } => {
                return Err(Error::Singular {
                    context: "control-map Jacobian",
                    condition: condition_number,
                })
            }
        }
        let jac = c_map.jacobian(model, q)?;
        Ok(Self {
            lu_t: jac.transpose().lu(),
        })
    }

    /// J⁻ᵀ X.
    pub fn solve_transposed(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu_t.solve(x).expect("guarded Jacobian is nonsingular")
    }

    /// X J⁻¹.
    pub fn right_solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.solve_transposed(&x.transpose()).transpose()
    }

    /// J⁻ᵀ M J⁻¹.
    pub fn congruence(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.right_solve(&self.solve_transposed(m));
        symmetrize(&mut out);
        out
    }
}

/// Δ = J_c⁻ᵀ M J_c⁻¹ and μ = J_c⁻ᵀ C J_c⁻¹ − Δ J̇_c J_c⁻¹.
pub fn operation_space_terms(
    model: &ManipulatorModel,
    c_map: &TaskMap,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> Result<OperationSpaceDynamicsTerms> {
    let jac = FactoredJacobian::new(c_map, model, q)?;
    let m = model.mass_matrix(q)?;
    let c = model.coriolis_matrix(q, qdot)?;
    let jdot = c_map.jacobian_dot(model, q, qdot)?;
    let delta = jac.congruence(&m);
    let mu = jac.right_solve(&jac.solve_transposed(&c)) - &delta * jac.right_solve(&jdot);
    Ok(OperationSpaceDynamicsTerms { delta, mu })
}

pub fn linearize_at_pose(
    model: &ManipulatorModel,
    c_map: &TaskMap,
    d_map: &TaskMap,
    weights: &PerformanceWeights,
    q_star: &DVector<f64>,
) -> Result<PoseLinearization> {
    let n = model.joint_count();
    check_dim("pose", n, q_star.len())?;
    check_dim("control map output", n, c_map.output_dim(model))?;
    d_map.validate(model)?;
    let d = d_map.output_dim(model);
    check_dim("performance weights", d, weights.dim())?;

    let jac = FactoredJacobian::new(c_map, model, q_star)?;
    let m = model.mass_matrix(q_star)?;
    let delta = jac.congruence(&m);
    let delta_chol = delta.clone().cholesky().ok_or(Error::Singular {
        context: "operation-space inertia",
        condition: crate::dynamics::condition_number_sym(&delta),
    })?;
    let mut delta_inv = delta_chol.inverse();
    symmetrize(&mut delta_inv);

    let jd = d_map.jacobian(model, q_star)?;
    // J_c⁻ᵀ J_dᵀ (N×d); its transpose is J_d J_c⁻¹.
    let force_map = jac.solve_transposed(&jd.transpose());
    let out_map = force_map.transpose();

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).fill_with_identity();

    let mut b1 = DMatrix::zeros(2 * n, n);
    b1.view_mut((n, 0), (n, n)).copy_from(&delta_inv);

    let mut b2 = DMatrix::zeros(2 * n, d);
    b2.view_mut((n, 0), (n, d)).copy_from(&(&delta_inv * &force_map));

    let mut c = DMatrix::zeros(2 * d, 2 * n);
    c.view_mut((0, 0), (d, n)).copy_from(&(&weights.w1 * &out_map));
    c.view_mut((d, n), (d, n)).copy_from(&(&weights.w2 * &out_map));

    Ok(PoseLinearization {
        q_star: q_star.clone(),
        a,
        b1,
        b2,
        c,
        delta,
        z_star: c_map.eval(model, q_star)?,
        zd_star: d_map.eval(model, q_star)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn identity_map_reduces_to_joint_space() {
        let model = ManipulatorModel::two_link_uniform();
        let map = TaskMap::identity(2);
        let q = v(&[0.4, -1.1]);
        let qd = v(&[0.7, 0.2]);
        let terms = operation_space_terms(&model, &map, &q, &qd).unwrap();
        assert!((terms.delta - model.mass_matrix(&q).unwrap()).norm() < 1e-12);
        assert!((terms.mu - model.coriolis_matrix(&q, &qd).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn identity_maps_give_identity_output() {
        let model = ManipulatorModel::two_link_uniform();
        let map = TaskMap::identity(2);
        let lin = linearize_at_pose(&model, &map, &map, &PerformanceWeights::identity(2), &v(&[0.3, 0.9]))
            .unwrap();
        assert!((&lin.b2 - &lin.b1).norm() < 1e-12);
        assert!((&lin.c - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn drift_matrix_is_pose_independent() {
        let model = ManipulatorModel::two_link_uniform();
        let ee = TaskMap::end_effector(&model);
        let w = PerformanceWeights::diagonal(&[1.0, 10.0], &[0.01, 0.1]).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected[(0, 2)] = 1.0;
        expected[(1, 3)] = 1.0;
        for q in [[-1.0, FRAC_PI_2 + 1.0], [0.0, FRAC_PI_2], [1.0, FRAC_PI_2 - 1.0]] {
            let lin = linearize_at_pose(&model, &ee, &ee, &w, &v(&q)).unwrap();
            assert_eq!(lin.a, expected);
            assert!((&lin.delta - lin.delta.transpose()).norm() < 1e-10);
            assert!(lin.delta.clone().symmetric_eigenvalues().min() > 0.0);
            let bottom = lin.b1.view((2, 0), (2, 2)).clone_owned();
            assert!((&bottom - bottom.transpose()).norm() < 1e-10);
            assert!(bottom.symmetric_eigenvalues().min() > 0.0);
            assert_eq!(lin.b1.view((0, 0), (2, 2)).norm(), 0.0);
        }
    }

    #[test]
    fn singular_pose_is_rejected() {
        let model = ManipulatorModel::two_link_uniform();
        let ee = TaskMap::end_effector(&model);
        let err = linearize_at_pose(&model, &ee, &ee, &PerformanceWeights::identity(2), &v(&[0.0, 0.0]));
        assert!(matches!(err, Err(Error::Singular { .. })));
    }

    #[test]
    fn weight_dimension_mismatch() {
        let model = ManipulatorModel::two_link_uniform();
        let ee = TaskMap::end_effector(&model);
        let err = linearize_at_pose(&model, &ee, &ee, &PerformanceWeights::identity(3), &v(&[0.0, 1.0]));
        assert!(matches!(err, Err(Error::Dimension { .. })));
        assert!(PerformanceWeights::new(DMatrix::identity(2, 2), DMatrix::identity(3, 3)).is_err());
    }
}
