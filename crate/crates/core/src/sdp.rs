//! Feasibility of small dense LMI systems by a log-det barrier method.
//!
//! Every block is first brought to the standard form `G_j(x) ≻ 0`. The
//! solver maximizes the common slack `t` subject to `G_j(x) − tI ⪰ 0` and a
//! box `|x_i| ≤ R`, following the central path of
//!
//! ```text
//! φ_τ(x, t) = −τ t − Σ_j log det(G_j(x) − tI) − Σ_i log(R² − x_i²)
//! ```
//!
//! with damped Newton steps. At a central point the matrices
//! `Z_j = (G_j − tI)⁻¹ / τ` are dual feasible up to the box multipliers;
//! they bound `t* ≤ t + m/τ` and, when that bound is negative, serve as an
//! infeasibility certificate that can be checked independently.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::lmi::{BlockShape, LmiConstraintSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOptions {
    /// Newton iterations allowed per centering phase.
    pub max_iterations: usize,
    /// Newton iterations allowed over the whole solve.
    pub max_total_iterations: usize,
    /// Initial barrier weight τ₀.
    pub initial_barrier: f64,
    /// Factor by which τ grows between centering phases.
    pub barrier_growth: f64,
    /// Centering stops when the Newton decrement λ²/2 falls below this.
    pub newton_tolerance: f64,
    /// Relative gap `m/τ ≤ rel·max(|t|, scale)` ends the path.
    pub gap_tolerance: f64,
    /// Bound on every decision variable.
    pub box_radius: f64,
    /// Return as soon as a centered point has positive slack.
    pub stop_when_feasible: bool,
    /// Infeasibility threshold δ on the certified upper bound of t*.
    pub infeasibility_threshold: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            max_total_iterations: 2000,
            initial_barrier: 1.0,
            barrier_growth: 10.0,
            newton_tolerance: 1e-10,
            gap_tolerance: 1e-7,
            box_radius: 1e4,
            stop_when_feasible: false,
            infeasibility_threshold: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Feasible,
    InfeasibleCertificate,
    NumericalFailure,
}

/// Dual evidence that no point of the box satisfies every block.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    /// One positive semidefinite multiplier per block, `Σ tr Z_j = 1`.
    pub multipliers: Vec<DMatrix<f64>>,
    pub box_radius: f64,
    /// Trace of the residual gradient at each centering phase.
    pub dual_residual_trace: Vec<f64>,
}

impl InfeasibilityCertificate {
    /// Value of `max_x Σ tr(Z_j G_j(x))` over the box, recomputed from the system.
    /// Negative means no point in the box satisfies all blocks.
    pub fn bound(&self, system: &LmiConstraintSystem) -> f64 {
        let mut c0 = 0.0;
        let mut r = vec![0.0; system.var_count];
        for (block, z) in system.blocks.iter().zip(&self.multipliers) {
            let (g0, gi) = block.standardized_terms();
            c0 += z.dot(&g0);
            for (ri, f) in r.iter_mut().zip(&gi) {
                *ri += z.dot(f);
            }
        }
        c0 + self.box_radius * r.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Independent validity check of the certificate.
    pub fn is_valid(&self, system: &LmiConstraintSystem) -> bool {
        if self.multipliers.len() != system.blocks.len() {
            return false;
        }
        let mut trace = 0.0;
        for (block, z) in system.blocks.iter().zip(&self.multipliers) {
            if z.nrows() != block.expr.dim() {
                return false;
            }
            let eig = SymmetricEigen::new(z.clone()).eigenvalues;
            if eig.min() < -1e-12 * eig.amax().max(1.0) {
                return false;
            }
            trace += z.trace();
        }
        (trace - 1.0).abs() < 1e-6 && self.bound(system) < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpResult {
    pub status: SdpStatus,
    /// The final iterate; meaningful when `status` is `Feasible`.
    pub assignment: Option<DVector<f64>>,
    /// Common slack t reached by the returned iterate.
    pub margin: f64,
    /// Upper bound on the optimal common slack.
    pub margin_upper_bound: f64,
    /// Minimum eigenvalue of each standardized block at the assignment (independent re-check).
    pub achieved_margins: Vec<f64>,
    pub iterations: usize,
    pub certificate: Option<InfeasibilityCertificate>,
    pub message: String,
}

impl SdpResult {
    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::Feasible
    }
}

/// A solver able to maximize the common slack of an LMI system.
pub trait SdpBackend {
    fn solve_max_margin(&self, system: &LmiConstraintSystem, options: &SdpOptions) -> SdpResult;
}

/// Built-in reference backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct BarrierSolver;

impl SdpBackend for BarrierSolver {
    fn solve_max_margin(&self, system: &LmiConstraintSystem, options: &SdpOptions) -> SdpResult {
        Problem::new(system, options).run()
    }
}

/// Maximizes the common slack to optimality.
pub fn solve_max_margin(system: &LmiConstraintSystem, options: &SdpOptions) -> SdpResult {
    BarrierSolver.solve_max_margin(system, options)
}

/// Returns the first centered strictly feasible point (or a certificate).
pub fn solve_feasibility(system: &LmiConstraintSystem, options: &SdpOptions) -> SdpResult {
    let opts = SdpOptions {
        stop_when_feasible: true,
        ..options.clone()
    };
    BarrierSolver.solve_max_margin(system, &opts)
}

/// Minimum eigenvalue of every standardized block at `x`, by a dense symmetric eigensolver.
pub fn block_slacks(system: &LmiConstraintSystem, x: &DVector<f64>) -> Vec<f64> {
    system
        .blocks
        .iter()
        .map(|b| {
            let g = b.standardized(x);
            if g.nrows() == 0 {
                f64::INFINITY
            } else {
                SymmetricEigen::new(g).eigenvalues.min()
            }
        })
        .collect()
}

struct Block {
    dim: usize,
    diagonal: bool,
    constant: DMatrix<f64>,
    /// Nonzero coefficients only.
    terms: Vec<(usize, DMatrix<f64>)>,
    scale: f64,
}

impl Block {
    fn slack_matrix(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (i, f) in &self.terms {
            if x[*i] != 0.0 {
                s += f * x[*i];
            }
        }
        for k in 0..self.dim {
            s[(k, k)] -= t;
        }
        s
    }
}

enum Factor {
    Dense(Cholesky<f64, Dyn>),
    Diagonal(DVector<f64>),
}

struct Problem<'a> {
    opts: &'a SdpOptions,
    blocks: Vec<Block>,
    n: usize,
    degree: f64,
    scale: f64,
    system: &'a LmiConstraintSystem,
}

struct Iterate {
    x: DVector<f64>,
    t: f64,
}

impl<'a> Problem<'a> {
    fn new(system: &'a LmiConstraintSystem, opts: &'a SdpOptions) -> Self {
        let blocks: Vec<Block> = system
            .blocks
            .iter()
            .map(|b| {
                let (constant, coeffs) = b.standardized_terms();
                let terms: Vec<_> = coeffs
                    .into_iter()
                    .enumerate()
                    .filter(|(_, f)| f.iter().any(|&v| v != 0.0))
                    .collect();
                let scale = terms
                    .iter()
                    .map(|(_, f)| f.amax())
                    .fold(constant.amax(), f64::max)
                    .max(f64::MIN_POSITIVE);
                Block {
                    dim: b.expr.dim(),
                    diagonal: b.shape == BlockShape::Diagonal,
                    constant,
                    terms,
                    scale,
                }
            })
            .collect();
        let n = system.var_count;
        let degree = blocks.iter().map(|b| b.dim as f64).sum::<f64>() + 2.0 * n as f64;
        let scale = blocks.iter().map(|b| b.scale).fold(0.0, f64::max).max(1e-300);
        Self {
            opts,
            blocks,
            n,
            degree,
            scale,
            system,
        }
    }

    fn factor(&self, block: &Block, it: &Iterate) -> Option<Factor> {
        let s = block.slack_matrix(&it.x, it.t);
        if block.diagonal {
            let d = s.diagonal();
            d.iter().all(|&v| v > 0.0 && v.is_finite()).then_some(Factor::Diagonal(d))
        } else {
            if !s.iter().all(|v| v.is_finite()) {
                return None;
            }
            s.cholesky().map(Factor::Dense)
        }
    }

    fn in_box(&self, x: &DVector<f64>) -> bool {
        let r = self.opts.box_radius;
        x.iter().all(|&v| v.abs() < r)
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, it: &Iterate, tau: f64) -> Option<f64> {
        if !self.in_box(&it.x) {
            return None;
        }
        let r2 = self.opts.box_radius * self.opts.box_radius;
        let mut f = -tau * it.t - it.x.iter().map(|&v| (r2 - v * v).ln()).sum::<f64>();
        for block in &self.blocks {
            match self.factor(block, it)? {
                Factor::Dense(ch) => {
                    f -= 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                }
                Factor::Diagonal(d) => f -= d.iter().map(|v| v.ln()).sum::<f64>(),
            }
        }
        Some(f)
    }

    /// Gradient and Hessian of the barrier over `(x, t)`.
    fn derivatives(&self, it: &Iterate, tau: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = self.n + 1;
        let ti = self.n;
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        grad[ti] = -tau;
        let r2 = self.opts.box_radius * self.opts.box_radius;
        for (i, &v) in it.x.iter().enumerate() {
            let s = r2 - v * v;
            grad[i] += 2.0 * v / s;
            hess[(i, i)] += 2.0 / s + 4.0 * v * v / (s * s);
        }
        for block in &self.blocks {
            match self.factor(block, it)? {
                Factor::Diagonal(d) => {
                    // Scalar constraints s_k = c_k + Σ a_ik x_i − t.
                    let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
                    let mut rows: Vec<(usize, DVector<f64>)> = block
                        .terms
                        .iter()
                        .map(|(i, f)| (*i, f.diagonal().component_mul(&DVector::from_vec(inv.clone()))))
                        .collect();
                    rows.push((ti, DVector::from_vec(inv.iter().map(|v| -v).collect())));
                    for (a, ua) in &rows {
                        grad[*a] -= ua.sum();
                        for (b, ub) in &rows {
                            hess[(*a, *b)] += ua.dot(ub);
                        }
                    }
                }
                Factor::Dense(ch) => {
                    let l = ch.l();
                    let whiten = |f: &DMatrix<f64>| -> DMatrix<f64> {
                        // L⁻¹ F L⁻ᵀ
                        let y = l.solve_lower_triangular(f).expect("nonsingular factor");
                        l.solve_lower_triangular(&y.transpose()).expect("nonsingular factor")
                    };
                    let mut whitened: Vec<(usize, DMatrix<f64>)> =
                        block.terms.iter().map(|(i, f)| (*i, whiten(f))).collect();
                    let eye = DMatrix::<f64>::identity(block.dim, block.dim);
                    whitened.push((ti, -whiten(&eye)));
                    for (ai, (a, wa)) in whitened.iter().enumerate() {
                        grad[*a] -= wa.trace();
                        for (b, wb) in whitened.iter().skip(ai) {
                            let v = wa.dot(wb);
                            hess[(*a, *b)] += v;
                            if a != b {
                                hess[(*b, *a)] += v;
                            }
                        }
                    }
                }
            }
        }
        Some((grad, hess))
    }

    fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
        if let Some(ch) = hess.clone().cholesky() {
            return Some(-ch.solve(grad));
        }
        let reg = hess.diagonal().amax().max(1.0) * 1e-12;
        let mut h = hess.clone();
        for k in 0..h.nrows() {
            h[(k, k)] += reg;
        }
        h.cholesky().map(|ch| -ch.solve(grad))
    }

    fn multipliers(&self, it: &Iterate, tau: f64) -> Option<Vec<DMatrix<f64>>> {
        self.blocks
            .iter()
            .map(|b| {
                Some(match self.factor(b, it)? {
                    Factor::Dense(ch) => ch.inverse() / tau,
                    Factor::Diagonal(d) => DMatrix::from_diagonal(&d.map(|v| 1.0 / (v * tau))),
                })
            })
            .collect()
    }

    /// Norm of the x-gradient of Σ tr(Z_j G_j(x)) for the current multipliers.
    fn dual_residual(&self, z: &[DMatrix<f64>]) -> f64 {
        let mut r = vec![0.0; self.n];
        for (b, zj) in self.blocks.iter().zip(z) {
            for (i, f) in &b.terms {
                r[*i] += zj.dot(f);
            }
        }
        r.iter().map(|v| v.abs()).sum()
    }

    fn initial_iterate(&self) -> Option<Iterate> {
        let mut x = self.system.initial_point();
        if x.len() != self.n {
            x = DVector::zeros(self.n);
        }
        let r = self.opts.box_radius;
        x.iter_mut().for_each(|v| *v = v.clamp(-0.5 * r, 0.5 * r));
        let slacks = block_slacks(self.system, &x);
        let min = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return None;
        }
        Some(Iterate {
            x,
            t: min - 1.0 - 0.1 * min.abs(),
        })
    }

    fn result(
        &self,
        status: SdpStatus,
        it: &Iterate,
        upper: f64,
        iterations: usize,
        certificate: Option<InfeasibilityCertificate>,
        message: impl Into<String>,
    ) -> SdpResult {
        let achieved = block_slacks(self.system, &it.x);
        let mut status = status;
        let mut message = message.into();
        if status == SdpStatus::Feasible {
            let sound = self
                .system
                .blocks
                .iter()
                .zip(&achieved)
                .zip(&self.blocks)
                .all(|((_, &s), b)| s >= -1e-9 * b.scale);
            if !sound {
                status = SdpStatus::NumericalFailure;
                message = "feasible iterate failed the independent eigenvalue re-check".into();
            }
        }
        SdpResult {
            status,
            assignment: Some(it.x.clone()),
            margin: it.t,
            margin_upper_bound: upper,
            achieved_margins: achieved,
            iterations,
            certificate,
            message,
        }
    }

    fn run(&self) -> SdpResult {
        let Some(mut it) = self.initial_iterate() else {
            return SdpResult {
                status: SdpStatus::NumericalFailure,
                assignment: None,
                margin: f64::NAN,
                margin_upper_bound: f64::NAN,
                achieved_margins: Vec::new(),
                iterations: 0,
                certificate: None,
                message: "non-finite initial slacks".into(),
            };
        };
        if self.blocks.is_empty() {
            return self.result(SdpStatus::Feasible, &it, f64::INFINITY, 0, None, "no constraints");
        }
        let mut tau = self.opts.initial_barrier / self.scale;
        let mut total = 0;
        let mut residual_trace = Vec::new();
        loop {
            // Centering.
            let mut centered = false;
            for _ in 0..self.opts.max_iterations {
                if total >= self.opts.max_total_iterations {
                    break;
                }
                total += 1;
                let Some((grad, hess)) = self.derivatives(&it, tau) else {
                    return self.result(SdpStatus::NumericalFailure, &it, f64::NAN, total, None, "iterate left the domain");
                };
                let Some(dir) = Self::newton_direction(&grad, &hess) else {
                    return self.result(SdpStatus::NumericalFailure, &it, f64::NAN, total, None, "singular Newton system");
                };
                let decrement = -grad.dot(&dir);
                let f0 = self.value(&it, tau).unwrap_or(f64::INFINITY);
                // Below the rounding resolution of φ further steps are noise.
                if decrement * 0.5 <= self.opts.newton_tolerance.max(16.0 * f64::EPSILON * f0.abs()) {
                    centered = true;
                    break;
                }
                let mut step = 1.0;
                let mut accepted = false;
                while step > 1e-12 {
                    let trial = Iterate {
                        x: &it.x + dir.rows(0, self.n) * step,
                        t: it.t + dir[self.n] * step,
                    };
                    if let Some(f1) = self.value(&trial, tau) {
                        if f1 <= f0 - 0.25 * step * decrement {
                            it = trial;
                            accepted = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !accepted {
                    // No progress possible at this τ; treat as centered to machine precision.
                    centered = true;
                    break;
                }
            }
            let gap = self.degree / tau;
            let upper = it.t + gap;
            let z = self.multipliers(&it, tau);
            if let Some(z) = &z {
                residual_trace.push(self.dual_residual(z));
            }
            if !centered {
                return self.result(
                    SdpStatus::NumericalFailure,
                    &it,
                    upper,
                    total,
                    None,
                    "iteration limit reached before centering converged",
                );
            }
            if self.opts.stop_when_feasible && it.t > 0.0 {
                return self.result(SdpStatus::Feasible, &it, upper, total, None, "strictly feasible point found");
            }
            if upper < -self.opts.infeasibility_threshold * self.scale {
                if let Some(z) = z {
                    let cert = InfeasibilityCertificate {
                        multipliers: z,
                        box_radius: self.opts.box_radius,
                        dual_residual_trace: residual_trace.clone(),
                    };
                    if cert.is_valid(self.system) {
                        return self.result(
                            SdpStatus::InfeasibleCertificate,
                            &it,
                            upper,
                            total,
                            Some(cert),
                            "slack upper bound is negative",
                        );
                    }
                }
            }
            if gap <= self.opts.gap_tolerance * it.t.abs().max(1e-3 * self.scale) {
                let status = if it.t > 0.0 {
                    SdpStatus::Feasible
                } else {
                    SdpStatus::NumericalFailure
                };
                let msg = if it.t > 0.0 {
                    "maximal common slack reached"
                } else {
                    "optimal slack is not positive but infeasibility could not be certified"
                };
                return self.result(status, &it, upper, total, None, msg);
            }
            if total >= self.opts.max_total_iterations {
                let status = if it.t > 0.0 {
                    SdpStatus::Feasible
                } else {
                    SdpStatus::NumericalFailure
                };
                return self.result(status, &it, upper, total, None, "total iteration limit reached");
            }
            tau *= self.opts.barrier_growth;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{AffineSymMatrix, Sense};

    fn scalar(c: f64, a: f64) -> AffineSymMatrix {
        AffineSymMatrix {
            constant: DMatrix::from_element(1, 1, c),
            coefficients: vec![DMatrix::from_element(1, 1, a)],
        }
    }

    #[test]
    fn trivial_positive_scalar() {
        let mut sys = LmiConstraintSystem::new(1, 1e-6);
        sys.push("q", scalar(0.0, 1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
        let res = solve_feasibility(&sys, &SdpOptions::default());
        assert_eq!(res.status, SdpStatus::Feasible);
        assert!(res.assignment.unwrap()[0] >= 1e-6);
    }

    #[test]
    fn contradictory_scalars_are_infeasible() {
        let mut sys = LmiConstraintSystem::new(1, 1e-6);
        sys.push("q>I", scalar(-1.0, 1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
        sys.push("-q>I", scalar(-1.0, -1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
        let res = solve_max_margin(&sys, &SdpOptions::default());
        assert_eq!(res.status, SdpStatus::InfeasibleCertificate, "{}", res.message);
        let cert = res.certificate.unwrap();
        assert!(cert.is_valid(&sys));
        assert!(res.margin_upper_bound <= 0.0);
    }

    #[test]
    fn interval_midpoint_maximizes_margin() {
        let mut sys = LmiConstraintSystem::new(1, 0.0);
        sys.push("q>0", scalar(0.0, 1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
        sys.push("q<2", scalar(-2.0, 1.0), Sense::NegativeDefinite, BlockShape::Matrix).unwrap();
        let res = solve_max_margin(&sys, &SdpOptions::default());
        assert_eq!(res.status, SdpStatus::Feasible);
        assert!((res.margin - 1.0).abs() < 1e-6, "{}", res.margin);
        assert!((res.assignment.unwrap()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn diagonal_blocks_match_dense_blocks() {
        let build = |shape| {
            let mut sys = LmiConstraintSystem::new(2, 1e-6);
            let expr = AffineSymMatrix {
                constant: DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 3.0])),
                coefficients: vec![
                    DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
                    DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, -1.0])),
                ],
            };
            sys.push("d", expr, Sense::PositiveDefinite, shape).unwrap();
            let bound = AffineSymMatrix {
                constant: DMatrix::from_element(1, 1, 5.0),
                coefficients: vec![DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 0.0)],
            };
            sys.push("x0<5", bound, Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
            sys
        };
        let a = solve_max_margin(&build(BlockShape::Matrix), &SdpOptions::default());
        let b = solve_max_margin(&build(BlockShape::Diagonal), &SdpOptions::default());
        assert!((a.margin - b.margin).abs() < 1e-8);
        assert!((a.assignment.unwrap() - b.assignment.unwrap()).norm() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let mut sys = LmiConstraintSystem::new(1, 1e-6);
        sys.push("q>0", scalar(0.0, 1.0), Sense::PositiveDefinite, BlockShape::Matrix).unwrap();
        sys.push("q<3", scalar(-3.0, 1.0), Sense::NegativeDefinite, BlockShape::Matrix).unwrap();
        let a = solve_max_margin(&sys, &SdpOptions::default());
        let b = solve_max_margin(&sys, &SdpOptions::default());
        assert_eq!(a, b);
    }
}
