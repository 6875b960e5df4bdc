//! Certification oracles that do not depend on the LMI solver.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::linearize::PoseLinearization;
use crate::lmi::LmiConstraintSystem;

/// `ẋ = A_cl x + B2 w,  y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopSystem {
    pub a_cl: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl ClosedLoopSystem {
    pub fn new(a_cl: DMatrix<f64>, b2: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a_cl.nrows();
        check_dim("closed-loop A (square)", n, a_cl.ncols())?;
        check_dim("closed-loop B2 rows", n, b2.nrows())?;
        check_dim("closed-loop C columns", n, c.ncols())?;
        Ok(Self { a_cl, b2, c })
    }

    /// `A − B1 K` with the pose's B2 and C.
    pub fn from_feedback(lin: &PoseLinearization, k: &DMatrix<f64>) -> Result<Self> {
        check_dim("feedback gain rows", lin.b1.ncols(), k.nrows())?;
        check_dim("feedback gain columns", lin.state_dim(), k.ncols())?;
        Self::new(&lin.a - &lin.b1 * k, lin.b2.clone(), lin.c.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HurwitzResult {
    pub stable: bool,
    pub spectral_abscissa: f64,
    pub eigenvalues: Vec<Complex<f64>>,
}

pub fn hurwitz_check(a: &DMatrix<f64>) -> HurwitzResult {
    let mut eigenvalues: Vec<Complex<f64>> = a.clone().complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let spectral_abscissa = eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    HurwitzResult {
        stable: spectral_abscissa < 0.0,
        spectral_abscissa,
        eigenvalues,
    }
}

pub const DEFAULT_HINF_TOL: f64 = 1e-6;
const IMAGINARY_AXIS_TOL: f64 = 1e-8;

fn hamiltonian(sys: &ClosedLoopSystem, gamma: f64) -> DMatrix<f64> {
    let n = sys.a_cl.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&sys.a_cl);
    h.view_mut((0, n), (n, n))
        .copy_from(&(&sys.b2 * sys.b2.transpose() / (gamma * gamma)));
    h.view_mut((n, 0), (n, n)).copy_from(&(-(sys.c.transpose() * &sys.c)));
    h.view_mut((n, n), (n, n)).copy_from(&(-sys.a_cl.transpose()));
    h
}

/// Largest gain found at the frequencies of near-imaginary Hamiltonian eigenvalues.
/// Candidates whose gain falls short of `gamma` are spurious and ignored.
fn imaginary_crossing(sys: &ClosedLoopSystem, gamma: f64) -> Option<f64> {
    let h = hamiltonian(sys, gamma);
    let scale = h.norm();
    h.complex_eigenvalues()
        .iter()
        .filter(|l| l.re.abs() < IMAGINARY_AXIS_TOL * scale)
        .map(|l| frequency_gain(sys, l.im.abs()))
        .filter(|g| *g >= gamma * (1.0 - 1e-9))
        .reduce(f64::max)
}

/// `‖C(sI − A_cl)⁻¹B2‖∞` by bisection on the Hamiltonian imaginary-axis test.
pub fn hinf_norm(sys: &ClosedLoopSystem, tol: f64) -> Result<f64> {
    let hw = hurwitz_check(&sys.a_cl);
    if !hw.stable {
        return Err(Error::InvalidInput(format!(
            "closed loop is not Hurwitz (spectral abscissa {:.3e}); H-infinity norm is infinite",
            hw.spectral_abscissa
        )));
    }
    if sys.b2.norm() == 0.0 || sys.c.norm() == 0.0 {
        return Ok(0.0);
    }
    let dc = sys
        .a_cl
        .clone()
        .lu()
        .solve(&sys.b2)
        .ok_or(Error::Singular {
            context: "closed-loop A",
            condition: f64::INFINITY,
        })?;
    let mut lo = (&sys.c * dc).singular_values().max();
    let mut hi = if lo > 0.0 { 2.0 * lo } else { 1.0 };
    let mut guard = 0;
    while let Some(g) = imaginary_crossing(sys, hi) {
        lo = lo.max(g);
        hi = 2.0 * hi.max(g);
        guard += 1;
        if guard > 200 {
            return Err(Error::InvalidInput("H-infinity bracket did not close".into()));
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if let Some(g) = imaginary_crossing(sys, mid) {
            lo = g.min(hi).max(mid);
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest singular value of `C(jωI − A)⁻¹B`.
pub fn frequency_gain(sys: &ClosedLoopSystem, omega: f64) -> f64 {
    let n = sys.a_cl.nrows();
    let m = DMatrix::<Complex<f64>>::from_fn(n, n, |r, c| {
        let diag = if r == c { Complex::new(0.0, omega) } else { Complex::new(0.0, 0.0) };
        diag - Complex::new(sys.a_cl[(r, c)], 0.0)
    });
    let b = sys.b2.map(|v| Complex::new(v, 0.0));
    let c = sys.c.map(|v| Complex::new(v, 0.0));
    match m.lu().solve(&b) {
        Some(x) => (c * x).singular_values().max(),
        None => f64::INFINITY,
    }
}

/// H∞ norm estimate from a log-spaced frequency grid, refined around its peaks.
pub fn hinf_norm_grid(sys: &ClosedLoopSystem, points: usize) -> f64 {
    let eig = hurwitz_check(&sys.a_cl).eigenvalues;
    let mags: Vec<f64> = eig.iter().map(|l| l.norm()).filter(|m| *m > 0.0).collect();
    let wmin = mags.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0) * 1e-3;
    let wmax = mags.iter().cloned().fold(0.0, f64::max).max(1.0) * 1e3;
    let (l0, l1) = (wmin.log10(), wmax.log10());
    let points = points.max(2);
    let step = (l1 - l0) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| 10f64.powf(l0 + step * i as f64)).collect();
    let values: Vec<f64> = grid.iter().map(|&w| frequency_gain(sys, w)).collect();
    let mut best = frequency_gain(sys, 0.0).max(values.iter().cloned().fold(0.0, f64::max));

    // Golden-section refinement inside the bracket of each local maximum, largest first.
    let mut peaks: Vec<usize> = (0..points)
        .filter(|&i| {
            (i == 0 || values[i] >= values[i - 1]) && (i + 1 == points || values[i] >= values[i + 1])
        })
        .collect();
    peaks.sort_by(|a, b| values[*b].total_cmp(&values[*a]));
    for &i in peaks.iter().take(5) {
        let mut a = l0 + step * (i as f64 - 1.0);
        let mut b = l0 + step * (i as f64 + 1.0);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let f = |x: f64| frequency_gain(sys, 10f64.powf(x));
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..60 {
            if f1 > f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2);
            }
        }
        best = best.max(f1).max(f2);
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSlack {
    pub name: String,
    /// Minimum eigenvalue of `sign·F(x) − margin·I`.
    pub slack: f64,
    pub block_norm: f64,
}

impl BlockSlack {
    pub fn is_satisfied(&self) -> bool {
        self.slack >= -1e-9 * self.block_norm.max(1.0)
    }
}

pub fn revalidate_lmi(system: &LmiConstraintSystem, assignment: &nalgebra::DVector<f64>) -> Result<Vec<BlockSlack>> {
    check_dim("LMI assignment", system.var_count, assignment.len())?;
    Ok(system
        .blocks
        .iter()
        .map(|b| {
            let g = b.standardized(assignment);
            let block_norm = b.expr.eval(assignment).norm();
            let slack = if g.nrows() == 0 {
                f64::INFINITY
            } else {
                SymmetricEigen::new(g).eigenvalues.min()
            };
            BlockSlack {
                name: b.name.clone(),
                slack,
                block_norm,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageCheck {
    pub max_eigenvalue: f64,
    pub holds: bool,
}

/// Checks `[[A_clᵀP + P A_cl + CᵀC/γ, P B2], [B2ᵀP, −γI]] ⪯ 0`, the matrix form of
/// `V̇ ≤ −|y|²/γ + γ|w|²` for `V = xᵀPx`.
pub fn storage_decrement_check(
    lin: &PoseLinearization,
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
    gamma: f64,
) -> Result<StorageCheck> {
    let sys = ClosedLoopSystem::from_feedback(lin, k)?;
    let n = sys.a_cl.nrows();
    check_dim("storage matrix P", n, p.nrows())?;
    let d = sys.b2.ncols();
    let mut m = DMatrix::zeros(n + d, n + d);
    let top = sys.a_cl.transpose() * p + p * &sys.a_cl + sys.c.transpose() * &sys.c / gamma;
    m.view_mut((0, 0), (n, n)).copy_from(&top);
    let pb = p * &sys.b2;
    m.view_mut((0, n), (n, d)).copy_from(&pb);
    m.view_mut((n, 0), (d, n)).copy_from(&pb.transpose());
    for i in n..n + d {
        m[(i, i)] = -gamma;
    }
    let sym = (&m + m.transpose()) * 0.5;
    let scale = sym.norm().max(1.0);
    let max_eigenvalue = SymmetricEigen::new(sym).eigenvalues.max();
    Ok(StorageCheck {
        max_eigenvalue,
        holds: max_eigenvalue <= 1e-8 * scale,
    })
}
