//! Gain synthesis: linearize at each pose, solve the LMI system, recover `K = L Q⁻¹`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::ManipulatorModel;
use crate::error::{check_dim, Error, Result};
use crate::linearize::{linearize_at_pose, PerformanceWeights, PoseLinearization};
use crate::lmi::{build_lmi1, build_lmi2, LmiConstraintSystem, DEFAULT_EPSILON};
use crate::sdp::{solve_max_margin, SdpOptions, SdpResult, SdpStatus};
use crate::taskspace::TaskMap;
use crate::verify::{
    hinf_norm, hinf_norm_grid, hurwitz_check, revalidate_lmi, storage_decrement_check, BlockSlack,
    ClosedLoopSystem, DEFAULT_HINF_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisMode {
    /// Dense `Q`, dense `K`; no passivity claim.
    Lmi1,
    /// Diagonal structure, positive stiffness and damping.
    Lmi2,
}

impl fmt::Display for SynthesisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthesisMode::Lmi1 => "lmi1",
            SynthesisMode::Lmi2 => "lmi2",
        })
    }
}

impl FromStr for SynthesisMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmi1" => Ok(SynthesisMode::Lmi1),
            "lmi2" => Ok(SynthesisMode::Lmi2),
            other => Err(Error::InvalidInput(format!("unknown mode {other:?} (expected lmi1 or lmi2)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisProblem {
    pub model: ManipulatorModel,
    pub c_map: TaskMap,
    pub d_map: TaskMap,
    pub weights: PerformanceWeights,
    pub poses: Vec<DVector<f64>>,
    pub gamma: f64,
    pub mode: SynthesisMode,
    /// Operation-space reference; `h_c` of the first pose when absent.
    pub reference: Option<DVector<f64>>,
    pub epsilon: f64,
    /// Defaults to returning the first centered point with positive slack.
    pub solver: SdpOptions,
    /// Points per frequency-grid cross-check; 0 skips it.
    pub grid_points: usize,
}

impl SynthesisProblem {
    pub fn new(
        model: ManipulatorModel,
        c_map: TaskMap,
        d_map: TaskMap,
        weights: PerformanceWeights,
        poses: Vec<DVector<f64>>,
        gamma: f64,
        mode: SynthesisMode,
    ) -> Self {
        Self {
            model,
            c_map,
            d_map,
            weights,
            poses,
            gamma,
            mode,
            reference: None,
            epsilon: DEFAULT_EPSILON,
            solver: SdpOptions {
                stop_when_feasible: true,
                ..SdpOptions::default()
            },
            grid_points: 100_000,
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..self.clone() }
    }

    /// One linearization per pose; a singular pose is rejected with its index.
    pub fn linearize(&self) -> Result<Vec<PoseLinearization>> {
        if self.poses.is_empty() {
            return Err(Error::InvalidInput("at least one synthesis pose is required".into()));
        }
        self.poses
            .iter()
            .enumerate()
            .map(|(index, q)| {
                linearize_at_pose(&self.model, &self.c_map, &self.d_map, &self.weights, q).map_err(|e| match e {
                    Error::Dimension { .. } => e,
                    other => Error::PoseRejected {
                        index,
                        reason: other.to_string(),
                    },
                })
            })
            .collect()
    }

    pub fn reference_or_default(&self) -> Result<DVector<f64>> {
        match &self.reference {
            Some(r) => {
                check_dim("reference", self.c_map.output_dim(&self.model), r.len())?;
                Ok(r.clone())
            }
            None => self.c_map.eval(&self.model, &self.poses[0]),
        }
    }

    pub fn build_system(&self, lins: &[PoseLinearization]) -> Result<LmiConstraintSystem> {
        match self.mode {
            SynthesisMode::Lmi1 => build_lmi1(lins, self.gamma, self.epsilon),
            SynthesisMode::Lmi2 => build_lmi2(lins, self.gamma, self.epsilon),
        }
    }
}

/// Operation-space impedance gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub mode: SynthesisMode,
    pub gamma: f64,
    /// Diagonal of `K1`.
    pub stiffness: DVector<f64>,
    /// Diagonal of `K2`.
    pub damping: DVector<f64>,
    pub reference: DVector<f64>,
    /// Full `K = [K1 K2]` (N×2N).
    pub k_matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    pub stiffness_units: Vec<String>,
    pub damping_units: Vec<String>,
}

impl ControllerGains {
    /// Diagonal gains `K = [diag(k) diag(b)]`.
    pub fn diagonal(stiffness: DVector<f64>, damping: DVector<f64>, reference: DVector<f64>) -> Result<Self> {
        let n = stiffness.len();
        check_dim("damping gains", n, damping.len())?;
        check_dim("reference", n, reference.len())?;
        Ok(Self {
            mode: SynthesisMode::Lmi2,
            gamma: f64::NAN,
            k_matrix: diagonal_gain_matrix(&stiffness, &damping),
            stiffness,
            damping,
            reference,
            labels: (0..n).map(|i| format!("c{i}")).collect(),
            stiffness_units: vec![String::new(); n],
            damping_units: vec![String::new(); n],
        })
    }

    pub fn n(&self) -> usize {
        self.stiffness.len()
    }

    pub fn lemma1(&self) -> Lemma1Verdict {
        lemma1_structure(&self.k_matrix)
    }
}

pub fn diagonal_gain_matrix(stiffness: &DVector<f64>, damping: &DVector<f64>) -> DMatrix<f64> {
    let n = stiffness.len();
    let mut k = DMatrix::zeros(n, 2 * n);
    for j in 0..n {
        k[(j, j)] = stiffness[j];
        k[(j, n + j)] = damping[j];
    }
    k
}

/// Structure verdict for `K = [K1 K2]`: both halves diagonal with positive diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Verdict {
    pub max_off_diagonal: f64,
    pub min_stiffness: f64,
    pub min_damping: f64,
}

impl Lemma1Verdict {
    pub fn holds(&self) -> bool {
        self.max_off_diagonal == 0.0 && self.min_stiffness > 0.0 && self.min_damping > 0.0
    }
}

pub fn lemma1_structure(k: &DMatrix<f64>) -> Lemma1Verdict {
    let n = k.nrows();
    let mut max_off_diagonal: f64 = 0.0;
    let mut min_stiffness = f64::INFINITY;
    let mut min_damping = f64::INFINITY;
    for r in 0..n {
        for c in 0..k.ncols().min(2 * n) {
            let v = k[(r, c)];
            if c == r {
                min_stiffness = min_stiffness.min(v);
            } else if c == n + r {
                min_damping = min_damping.min(v);
            } else {
                max_off_diagonal = max_off_diagonal.max(v.abs());
            }
        }
    }
    Lemma1Verdict {
        max_off_diagonal,
        min_stiffness,
        min_damping,
    }
}

/// `K = L Q⁻¹` together with `P = Q⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedGains {
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

pub fn extract_gains(q: &DMatrix<f64>, l: &DMatrix<f64>, mode: SynthesisMode) -> Result<ExtractedGains> {
    let m = q.nrows();
    check_dim("Q (square)", m, q.ncols())?;
    check_dim("L columns", m, l.ncols())?;
    let singular = || Error::Singular {
        context: "Q",
        condition: crate::dynamics::condition_number_sym(q),
    };
    let chol = q.clone().cholesky().ok_or_else(singular)?;
    let (k, p) = match mode {
        SynthesisMode::Lmi1 => {
            let mut p = chol.inverse();
            crate::dynamics::symmetrize(&mut p);
            (chol.solve(&l.transpose()).transpose(), p)
        }
        SynthesisMode::Lmi2 => {
            if m % 2 != 0 || l.nrows() * 2 != m {
                return Err(Error::InvalidInput("lmi2 gains need Q of size 2N and L of size N×2N".into()));
            }
            let n = m / 2;
            let inv = block_inversion_identity(
                &q.view((0, 0), (n, n)).clone_owned(),
                &q.view((0, n), (n, n)).clone_owned(),
                &q.view((n, n), (n, n)).clone_owned(),
            )?;
            let p = inv.p;
            // With diagonal blocks every entry of K outside the two diagonals is exactly zero.
            let mut k = DMatrix::zeros(n, m);
            for j in 0..n {
                let (l1, l2) = (l[(j, j)], l[(j, n + j)]);
                k[(j, j)] = l1 * p[(j, j)] + l2 * p[(n + j, j)];
                k[(j, n + j)] = l1 * p[(j, n + j)] + l2 * p[(n + j, n + j)];
            }
            (k, p)
        }
    };
    let residual = (&k * q - l).amax();
    if residual > 1e-9 * l.amax().max(1.0) * crate::dynamics::condition_number_sym(q).max(1.0).sqrt() {
        return Err(Error::InvalidInput(format!(
            "extracted gain fails K·Q = L (residual {residual:.3e}); Q does not have the required structure"
        )));
    }
    Ok(ExtractedGains { k, p })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockInversion {
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

/// `Q⁻¹ = R1 R2` with `R1 = blockdiag(S1⁻¹, S2⁻¹)` built from the two Schur complements.
pub fn block_inversion_identity(q11: &DMatrix<f64>, q12: &DMatrix<f64>, q22: &DMatrix<f64>) -> Result<BlockInversion> {
    let n = q11.nrows();
    check_dim("Q12 rows", n, q12.nrows())?;
    check_dim("Q22 size", q12.ncols(), q22.nrows())?;
    let m = q22.nrows();
    let inv = |a: &DMatrix<f64>, context: &'static str| {
        a.clone().try_inverse().ok_or(Error::Singular {
            context,
            condition: f64::INFINITY,
        })
    };
    let q11_inv = inv(q11, "Q11")?;
    let q22_inv = inv(q22, "Q22")?;
    let s1 = q11 - q12 * &q22_inv * q12.transpose();
    let s2 = q22 - q12.transpose() * &q11_inv * q12;
    let s1_inv = inv(&s1, "Schur complement of Q22")?;
    let s2_inv = inv(&s2, "Schur complement of Q11")?;
    let mut r1 = DMatrix::zeros(n + m, n + m);
    r1.view_mut((0, 0), (n, n)).copy_from(&s1_inv);
    r1.view_mut((n, n), (m, m)).copy_from(&s2_inv);
    let mut r2 = DMatrix::identity(n + m, n + m);
    r2.view_mut((0, n), (n, m)).copy_from(&(-(q12 * &q22_inv)));
    r2.view_mut((n, 0), (m, n)).copy_from(&(-(q12.transpose() * &q11_inv)));
    let p = &r1 * &r2;
    Ok(BlockInversion { r1, r2, p })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseVerification {
    pub index: usize,
    pub q_star: DVector<f64>,
    pub spectral_abscissa: f64,
    pub eigenvalues: Vec<nalgebra::Complex<f64>>,
    pub hinf_norm: Option<f64>,
    pub hinf_norm_grid: Option<f64>,
    pub storage_max_eigenvalue: f64,
    pub storage_holds: bool,
}

impl PoseVerification {
    /// Relative gap between the Hamiltonian and frequency-grid norms, when both exist.
    pub fn oracle_disagreement(&self) -> Option<f64> {
        match (self.hinf_norm, self.hinf_norm_grid) {
            (Some(h), Some(g)) if h > 0.0 => Some((h - g).abs() / h),
            (Some(_), Some(g)) => Some(g.abs()),
            _ => None,
        }
    }

    pub fn certified(&self, gamma: f64) -> bool {
        self.spectral_abscissa < 0.0
            && self.hinf_norm.is_some_and(|h| h <= gamma * (1.0 + 1e-6))
            && self.hinf_norm_grid.is_none_or(|g| g <= gamma * (1.0 + 1e-6))
            && self.oracle_disagreement().is_none_or(|d| d < 0.01)
    }
}

/// Closed-loop checks of `K` at every linearization.
pub fn verify_poses(
    lins: &[PoseLinearization],
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
    gamma: f64,
    grid_points: usize,
) -> Result<Vec<PoseVerification>> {
    lins.iter()
        .enumerate()
        .map(|(index, lin)| {
            let sys = ClosedLoopSystem::from_feedback(lin, k)?;
            let hw = hurwitz_check(&sys.a_cl);
            let hinf = if hw.stable { hinf_norm(&sys, DEFAULT_HINF_TOL).ok() } else { None };
            let grid = (hw.stable && grid_points > 0).then(|| hinf_norm_grid(&sys, grid_points));
            let storage = storage_decrement_check(lin, k, p, gamma)?;
            Ok(PoseVerification {
                index,
                q_star: lin.q_star.clone(),
                spectral_abscissa: hw.spectral_abscissa,
                eigenvalues: hw.eigenvalues,
                hinf_norm: hinf,
                hinf_norm_grid: grid,
                storage_max_eigenvalue: storage.max_eigenvalue,
                storage_holds: storage.holds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    pub mode: SynthesisMode,
    pub gamma: f64,
    pub status: SdpStatus,
    pub message: String,
    pub gains: Option<ControllerGains>,
    pub q: Option<DMatrix<f64>>,
    pub l: Option<DMatrix<f64>>,
    pub p: Option<DMatrix<f64>>,
    pub poses: Vec<PoseVerification>,
    pub block_slacks: Vec<BlockSlack>,
    pub solver_margin: f64,
    pub solver_iterations: usize,
    pub certificate_bound: Option<f64>,
}

impl SynthesisReport {
    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::Feasible && self.gains.is_some()
    }

    /// Feasible, every block re-validated, every pose certified, and (lmi2) the gain structure holds.
    pub fn is_certified(&self) -> bool {
        self.is_feasible()
            && self.block_slacks.iter().all(BlockSlack::is_satisfied)
            && self.poses.iter().all(|p| p.certified(self.gamma))
            && (self.mode == SynthesisMode::Lmi1 || self.gains.as_ref().is_some_and(|g| g.lemma1().holds()))
    }

    /// Largest `‖P Q − I‖` entry.
    pub fn inverse_residual(&self) -> Option<f64> {
        let (p, q) = (self.p.as_ref()?, self.q.as_ref()?);
        Some((p * q - DMatrix::<f64>::identity(q.nrows(), q.nrows())).amax())
    }

    /// `(P11, P12, P22)`.
    pub fn p_blocks(&self) -> Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let p = self.p.as_ref()?;
        let n = p.nrows() / 2;
        Some((
            p.view((0, 0), (n, n)).clone_owned(),
            p.view((0, n), (n, n)).clone_owned(),
            p.view((n, n), (n, n)).clone_owned(),
        ))
    }

    /// Deterministic plain-text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "synthesis report");
        let _ = writeln!(out, "mode = {}", self.mode);
        let _ = writeln!(out, "gamma = {:.16e}", self.gamma);
        let status = match self.status {
            SdpStatus::Feasible => "feasible",
            SdpStatus::InfeasibleCertificate => "infeasible",
            SdpStatus::NumericalFailure => "numerical_failure",
        };
        let _ = writeln!(out, "status = {status}");
        let _ = writeln!(out, "solver_message = {}", self.message);
        let _ = writeln!(out, "solver_margin = {:.16e}", self.solver_margin);
        let _ = writeln!(out, "solver_iterations = {}", self.solver_iterations);
        if let Some(b) = self.certificate_bound {
            let _ = writeln!(out, "certificate_bound = {b:.16e}");
        }
        if let Some(g) = &self.gains {
            let _ = writeln!(out, "\n[gains]");
            for j in 0..g.n() {
                let _ = writeln!(
                    out,
                    "{}: k = {:.16e} {}  b = {:.16e} {}  r = {:.16e}",
                    g.labels[j], g.stiffness[j], g.stiffness_units[j], g.damping[j], g.damping_units[j], g.reference[j]
                );
            }
            let verdict = g.lemma1();
            match self.mode {
                SynthesisMode::Lmi2 => {
                    let _ = writeln!(
                        out,
                        "structure: diagonal = {}, positive = {}, max_off_diagonal = {:.3e}",
                        verdict.max_off_diagonal == 0.0,
                        verdict.min_stiffness > 0.0 && verdict.min_damping > 0.0,
                        verdict.max_off_diagonal
                    );
                    let _ = writeln!(out, "passivity: claimed (diagonal positive stiffness and damping)");
                }
                SynthesisMode::Lmi1 => {
                    let _ = writeln!(out, "passivity: not claimed (full state feedback)");
                    write_matrix(&mut out, "K", &g.k_matrix);
                }
            }
        }
        if let Some(res) = self.inverse_residual() {
            let _ = writeln!(out, "\n[storage]");
            let _ = writeln!(out, "max |PQ - I| = {res:.3e}");
            if let Some((p11, p12, p22)) = self.p_blocks() {
                write_matrix(&mut out, "P11", &p11);
                write_matrix(&mut out, "P12", &p12);
                write_matrix(&mut out, "P22", &p22);
            }
        }
        if !self.block_slacks.is_empty() {
            let _ = writeln!(out, "\n[lmi blocks]");
            for b in &self.block_slacks {
                let _ = writeln!(
                    out,
                    "{}: slack = {:.6e} norm = {:.6e} ok = {}",
                    b.name,
                    b.slack,
                    b.block_norm,
                    b.is_satisfied()
                );
            }
        }
        for p in &self.poses {
            let _ = writeln!(out, "\n[pose {}]", p.index);
            let q: Vec<String> = p.q_star.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(out, "q = [{}]", q.join(", "));
            let _ = writeln!(out, "spectral_abscissa = {:.6e}", p.spectral_abscissa);
            let eig: Vec<String> = p.eigenvalues.iter().map(|l| format!("{:.6e}{:+.6e}i", l.re, l.im)).collect();
            let _ = writeln!(out, "eigenvalues = [{}]", eig.join(", "));
            match p.hinf_norm {
                Some(h) => {
                    let _ = writeln!(out, "hinf_norm = {h:.10e}");
                }
                None => {
                    let _ = writeln!(out, "hinf_norm = unavailable");
                }
            }
            if let Some(g) = p.hinf_norm_grid {
                let _ = writeln!(out, "hinf_norm_grid = {g:.10e}");
            }
            let _ = writeln!(out, "storage_max_eigenvalue = {:.6e} holds = {}", p.storage_max_eigenvalue, p.storage_holds);
            let _ = writeln!(out, "certified = {}", p.certified(self.gamma));
        }
        let _ = writeln!(out, "\ncertified = {}", self.is_certified());
        out
    }
}

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} =");
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.10e}", m[(r, c)])).collect();
        let _ = writeln!(out, "  {}", row.join(" "));
    }
}

fn report_from(
    problem: &SynthesisProblem,
    lins: &[PoseLinearization],
    system: &LmiConstraintSystem,
    res: SdpResult,
) -> Result<SynthesisReport> {
    let mut report = SynthesisReport {
        mode: problem.mode,
        gamma: problem.gamma,
        status: res.status,
        message: res.message.clone(),
        gains: None,
        q: None,
        l: None,
        p: None,
        poses: Vec::new(),
        block_slacks: Vec::new(),
        solver_margin: res.margin,
        solver_iterations: res.iterations,
        certificate_bound: res.certificate.as_ref().map(|c| c.bound(system)),
    };
    if res.status != SdpStatus::Feasible {
        return Ok(report);
    }
    let x = res.assignment.expect("feasible result carries an assignment");
    let layout = system.layout.expect("synthesis systems carry a layout");
    let (q, l) = layout.decode(&x);
    let extracted = extract_gains(&q, &l, problem.mode)?;
    let n = layout.n;
    let kinds = problem.c_map.coordinate_kinds(&problem.model);
    let gains = ControllerGains {
        mode: problem.mode,
        gamma: problem.gamma,
        stiffness: DVector::from_fn(n, |j, _| extracted.k[(j, j)]),
        damping: DVector::from_fn(n, |j, _| extracted.k[(j, n + j)]),
        reference: problem.reference_or_default()?,
        k_matrix: extracted.k.clone(),
        labels: problem.c_map.coordinate_labels(&problem.model),
        stiffness_units: kinds.iter().map(|k| k.stiffness_unit().to_string()).collect(),
        damping_units: kinds.iter().map(|k| k.damping_unit().to_string()).collect(),
    };
    report.block_slacks = revalidate_lmi(system, &x)?;
    report.poses = verify_poses(lins, &extracted.k, &extracted.p, problem.gamma, problem.grid_points)?;
    report.gains = Some(gains);
    report.q = Some(q);
    report.l = Some(l);
    report.p = Some(extracted.p);
    Ok(report)
}

/// Solves the problem at its γ. Infeasibility is reported through `status`, not as an error.
pub fn synthesize(problem: &SynthesisProblem) -> Result<SynthesisReport> {
    if !(problem.gamma > 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be > 0, got {}", problem.gamma)));
    }
    let lins = problem.linearize()?;
    let system = problem.build_system(&lins)?;
    let res = solve_max_margin(&system, &problem.solver);
    report_from(problem, &lins, &system, res)
}

#[derive(Debug, Clone)]
pub struct MinGammaResult {
    pub gamma_star: f64,
    pub report: SynthesisReport,
    pub probes: usize,
}

/// Smallest feasible γ in `[gamma_lo, gamma_hi]` to within `tol`, by bisection.
pub fn min_gamma(problem: &SynthesisProblem, gamma_lo: f64, gamma_hi: f64, tol: f64) -> Result<MinGammaResult> {
    if !(gamma_lo > 0.0 && gamma_hi > gamma_lo && tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bisection needs 0 < lo < hi and tol > 0 (got lo = {gamma_lo}, hi = {gamma_hi}, tol = {tol})"
        )));
    }
    let lins = problem.linearize()?;
    let mut probes = 0;
    let mut probe = |gamma: f64| -> Result<SynthesisReport> {
        probes += 1;
        let p = problem.with_gamma(gamma);
        let system = p.build_system(&lins)?;
        let res = solve_max_margin(&system, &p.solver);
        report_from(&p, &lins, &system, res)
    };
    let lo_report = probe(gamma_lo)?;
    if lo_report.is_feasible() {
        return Ok(MinGammaResult {
            gamma_star: gamma_lo,
            report: lo_report,
            probes,
        });
    }
    let mut best = probe(gamma_hi)?;
    if !best.is_feasible() {
        return Err(Error::InvalidInput(format!("LMI is not feasible at the upper bracket gamma = {gamma_hi}")));
    }
    let (mut lo, mut hi) = (gamma_lo, gamma_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let r = probe(mid)?;
        if r.is_feasible() {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    Ok(MinGammaResult {
        gamma_star: hi,
        report: best,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, xs)
    }

    #[test]
    fn scalar_extraction_by_hand() {
        let q = m(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let l = m(1, 2, &[1.0, 1.0]);
        for mode in [SynthesisMode::Lmi1, SynthesisMode::Lmi2] {
            let g = extract_gains(&q, &l, mode).unwrap();
            assert!((g.k[(0, 0)] - 1.0).abs() < 1e-12 && (g.k[(0, 1)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_q_returns_l() {
        let l = m(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 2.0]);
        let g = extract_gains(&DMatrix::identity(4, 4), &l, SynthesisMode::Lmi2).unwrap();
        assert_eq!(g.k, l);
    }

    #[test]
    fn decoupled_block_inversion() {
        let q11 = m(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let q22 = m(2, 2, &[5.0, 0.0, 0.0, 0.5]);
        let inv = block_inversion_identity(&q11, &DMatrix::zeros(2, 2), &q22).unwrap();
        assert_eq!(inv.r2, DMatrix::identity(4, 4));
        let expected = m(4, 4, &[0.5, 0., 0., 0., 0., 0.25, 0., 0., 0., 0., 0.2, 0., 0., 0., 0., 2.0]);
        assert!((inv.p - expected).amax() < 1e-15);
    }

    #[test]
    fn negative_coupling_gives_positive_p12() {
        let q11 = m(1, 1, &[2.0]);
        let q12 = m(1, 1, &[-0.5]);
        let q22 = m(1, 1, &[1.0]);
        let inv = block_inversion_identity(&q11, &q12, &q22).unwrap();
        assert!(inv.p[(0, 1)] > 0.0);
        // P12 = P11·(−Q12)·Q22⁻¹
        assert!((inv.p[(0, 1)] - inv.p[(0, 0)] * 0.5).abs() < 1e-15);
    }

    #[test]
    fn structure_verdict() {
        let k = diagonal_gain_matrix(&DVector::from_vec(vec![1.0, 2.0]), &DVector::from_vec(vec![3.0, -1.0]));
        assert!(!lemma1_structure(&k).holds());
        let mut k = diagonal_gain_matrix(&DVector::from_vec(vec![1.0, 2.0]), &DVector::from_vec(vec![3.0, 1.0]));
        assert!(lemma1_structure(&k).holds());
        k[(0, 1)] = 1e-3;
        assert!(!lemma1_structure(&k).holds());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("lmi2".parse::<SynthesisMode>().unwrap(), SynthesisMode::Lmi2);
        assert!("lmi3".parse::<SynthesisMode>().is_err());
        assert_eq!(SynthesisMode::Lmi1.to_string(), "lmi1");
    }
}
