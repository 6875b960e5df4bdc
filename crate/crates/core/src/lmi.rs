//! Affine LMI systems for multi-pose state-feedback H∞ synthesis.
//!
//! Both problem shapes constrain the block matrix
//!
//! ```text
//!        ⎡ QAᵀ − LᵀB1ᵀ + AQ − B1L   B2    QCᵀ ⎤
//! M̄  =  ⎢ B2ᵀ                     −γI    0  ⎥  ≺ 0
//!        ⎣ CQ                       0    −γI ⎦
//! ```
//!
//! at every pose, together with `Q ≻ 0`. The sparse passive layout restricts
//! `Q11, Q12, Q22, L1, L2` to diagonal matrices (structurally, through the
//! choice of decision variables) and adds the sign constraints
//! `Q12 ≺ 0, L1 ≻ 0, L2 ≻ 0` as elementwise bounds.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linearize::PoseLinearization;

/// Default strictness margin, relative to the Frobenius norm of each block's constant term.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    /// Dense symmetric `Q` and dense `L`.
    Full,
    /// Diagonal `Q11, Q12, Q22, L1, L2`.
    SparsePassive,
}

/// Enumeration of the scalar decision variables behind `(Q, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LmiVariableLayout {
    pub kind: LayoutKind,
    pub n: usize,
}

impl LmiVariableLayout {
    pub fn full(n: usize) -> Self {
        Self {
            kind: LayoutKind::Full,
            n,
        }
    }

    pub fn sparse_passive(n: usize) -> Self {
        Self {
            kind: LayoutKind::SparsePassive,
            n,
        }
    }

    pub fn var_count(&self) -> usize {
        let n = self.n;
        match self.kind {
            LayoutKind::SparsePassive => 5 * n,
            LayoutKind::Full => n * (2 * n + 1) + 2 * n * n,
        }
    }

    fn q_var_count(&self) -> usize {
        match self.kind {
            LayoutKind::SparsePassive => 3 * self.n,
            LayoutKind::Full => self.n * (2 * self.n + 1),
        }
    }

    /// Coefficient matrices `(∂Q/∂x_i, ∂L/∂x_i)` of variable `i`.
    pub fn basis(&self, i: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        let mut l = DMatrix::zeros(n, 2 * n);
        match self.kind {
            LayoutKind::SparsePassive => {
                let (group, j) = (i / n, i % n);
                match group {
                    0 => q[(j, j)] = 1.0,
                    1 => {
                        q[(j, n + j)] = 1.0;
                        q[(n + j, j)] = 1.0;
                    }
                    2 => q[(n + j, n + j)] = 1.0,
                    3 => l[(j, j)] = 1.0,
                    _ => l[(j, n + j)] = 1.0,
                }
            }
            LayoutKind::Full => {
                if i < self.q_var_count() {
                    let (r, c) = upper_triangle_index(2 * n, i);
                    q[(r, c)] = 1.0;
                    q[(c, r)] = 1.0;
                } else {
                    let k = i - self.q_var_count();
                    l[(k / (2 * n), k % (2 * n))] = 1.0;
                }
            }
        }
        (q, l)
    }

    pub fn variable_name(&self, i: usize) -> String {
        let n = self.n;
        match self.kind {
            LayoutKind::SparsePassive => {
                let group = ["q11", "q12", "q22", "l1", "l2"][i / n];
                format!("{group}[{}]", i % n)
            }
            LayoutKind::Full => {
                if i < self.q_var_count() {
                    let (r, c) = upper_triangle_index(2 * n, i);
                    format!("Q[{r},{c}]")
                } else {
                    let k = i - self.q_var_count();
                    format!("L[{},{}]", k / (2 * n), k % (2 * n))
                }
            }
        }
    }

    pub fn q_of(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.decode(x).0
    }

    pub fn l_of(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.decode(x).1
    }

    pub fn decode(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        let mut l = DMatrix::zeros(n, 2 * n);
        match self.kind {
            LayoutKind::SparsePassive => {
                for j in 0..n {
                    q[(j, j)] = x[j];
                    q[(j, n + j)] = x[n + j];
                    q[(n + j, j)] = x[n + j];
                    q[(n + j, n + j)] = x[2 * n + j];
                    l[(j, j)] = x[3 * n + j];
                    l[(j, n + j)] = x[4 * n + j];
                }
            }
            LayoutKind::Full => {
                let mut i = 0;
                for r in 0..2 * n {
                    for c in r..2 * n {
                        q[(r, c)] = x[i];
                        q[(c, r)] = x[i];
                        i += 1;
                    }
                }
                for r in 0..n {
                    for c in 0..2 * n {
                        l[(r, c)] = x[i];
                        i += 1;
                    }
                }
            }
        }
        (q, l)
    }

    /// Inverse of [`decode`](Self::decode). Off-pattern entries are ignored for the sparse layout.
    pub fn encode(&self, q: &DMatrix<f64>, l: &DMatrix<f64>) -> DVector<f64> {
        let n = self.n;
        let mut x = DVector::zeros(self.var_count());
        match self.kind {
            LayoutKind::SparsePassive => {
                for j in 0..n {
                    x[j] = q[(j, j)];
                    x[n + j] = q[(j, n + j)];
                    x[2 * n + j] = q[(n + j, n + j)];
                    x[3 * n + j] = l[(j, j)];
                    x[4 * n + j] = l[(j, n + j)];
                }
            }
            LayoutKind::Full => {
                let mut i = 0;
                for r in 0..2 * n {
                    for c in r..2 * n {
                        x[i] = q[(r, c)];
                        i += 1;
                    }
                }
                for r in 0..n {
                    for c in 0..2 * n {
                        x[i] = l[(r, c)];
                        i += 1;
                    }
                }
            }
        }
        x
    }

    /// Q-diagonals 1, Q12 diagonal −0.1, L1 = L2 = I.
    pub fn initial_point(&self) -> DVector<f64> {
        let n = self.n;
        let mut q = DMatrix::<f64>::identity(2 * n, 2 * n);
        for j in 0..n {
            q[(j, n + j)] = -0.1;
            q[(n + j, j)] = -0.1;
        }
        let mut l = DMatrix::zeros(n, 2 * n);
        for j in 0..n {
            l[(j, j)] = 1.0;
            l[(j, n + j)] = 1.0;
        }
        self.encode(&q, &l)
    }
}

fn upper_triangle_index(dim: usize, mut i: usize) -> (usize, usize) {
    for r in 0..dim {
        let row_len = dim - r;
        if i < row_len {
            return (r, r + i);
        }
        i -= row_len;
    }
    panic!("upper-triangle index out of range");
}

/// `F(x) = F0 + Σ x_i F_i` with symmetric `F0, F_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSymMatrix {
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
}

impl AffineSymMatrix {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.coefficients
            .iter()
            .zip(x.iter())
            .fold(self.constant.clone(), |acc, (f, &xi)| if xi == 0.0 { acc } else { acc + f * xi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(x) ≻ margin·I`.
    PositiveDefinite,
    /// `F(x) ≺ −margin·I`.
    NegativeDefinite,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Self::PositiveDefinite => 1.0,
            Self::NegativeDefinite => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockShape {
    Matrix,
    /// Diagonal expression treated as independent scalar bounds.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixConstraint {
    pub name: String,
    pub expr: AffineSymMatrix,
    pub sense: Sense,
    pub margin: f64,
    pub shape: BlockShape,
}

impl AffineMatrixConstraint {
    /// Margin `ε·max(1, ‖F0‖_F)`.
    pub fn new(name: impl Into<String>, expr: AffineSymMatrix, sense: Sense, epsilon: f64, shape: BlockShape) -> Self {
        let margin = epsilon * expr.constant.norm().max(1.0);
        Self {
            name: name.into(),
            expr,
            sense,
            margin,
            shape,
        }
    }

    /// `sign·F(x) − margin·I`; the constraint holds iff this is positive definite.
    pub fn standardized(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.expr.dim();
        self.expr.eval(x) * self.sense.sign() - DMatrix::identity(n, n) * self.margin
    }

    /// Constant and coefficient terms of [`standardized`](Self::standardized).
    pub fn standardized_terms(&self) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let s = self.sense.sign();
        let n = self.expr.dim();
        (
            &self.expr.constant * s - DMatrix::identity(n, n) * self.margin,
            self.expr.coefficients.iter().map(|f| f * s).collect(),
        )
    }
}

/// A conjunction of affine matrix constraints over a common variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraintSystem {
    pub var_count: usize,
    pub blocks: Vec<AffineMatrixConstraint>,
    pub epsilon: f64,
    pub layout: Option<LmiVariableLayout>,
    pub gamma: Option<f64>,
}

impl LmiConstraintSystem {
    pub fn new(var_count: usize, epsilon: f64) -> Self {
        Self {
            var_count,
            blocks: Vec::new(),
            epsilon,
            layout: None,
            gamma: None,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, expr: AffineSymMatrix, sense: Sense, shape: BlockShape) -> Result<()> {
        check_dim("constraint coefficient count", self.var_count, expr.coefficients.len())?;
        let d = expr.dim();
        for f in std::iter::once(&expr.constant).chain(expr.coefficients.iter()) {
            if f.nrows() != d || f.ncols() != d {
                return Err(Error::InvalidInput("inconsistent block dimensions".into()));
            }
            if (f - f.transpose()).abs().max() > 1e-12 * (1.0 + f.abs().max()) {
                return Err(Error::InvalidInput("coefficient matrix not symmetric".into()));
            }
        }
        self.blocks.push(AffineMatrixConstraint::new(name, expr, sense, self.epsilon, shape));
        Ok(())
    }

    /// Starting point suggested by the layout (zeros when there is none).
    pub fn initial_point(&self) -> DVector<f64> {
        self.layout
            .map(|l| l.initial_point())
            .unwrap_or_else(|| DVector::zeros(self.var_count))
    }

    /// Plain-text dump: one section per block, row-major, 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lmi_system vars {} blocks {} epsilon {:.16e}", self.var_count, self.blocks.len(), self.epsilon);
        if let Some(g) = self.gamma {
            let _ = writeln!(out, "gamma {g:.16e}");
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            let sense = match b.sense {
                Sense::PositiveDefinite => "gt",
                Sense::NegativeDefinite => "lt",
            };
            let shape = match b.shape {
                BlockShape::Matrix => "matrix",
                BlockShape::Diagonal => "diagonal",
            };
            let _ = writeln!(
                out,
                "\n[block {bi}] name {} sense {sense} shape {shape} size {} margin {:.16e}",
                b.name,
                b.expr.dim(),
                b.margin
            );
            let _ = writeln!(out, "constant");
            write_matrix(&mut out, &b.expr.constant);
            for (vi, f) in b.expr.coefficients.iter().enumerate() {
                if f.iter().any(|&v| v != 0.0) {
                    let label = self
                        .layout
                        .map(|l| l.variable_name(vi))
                        .unwrap_or_else(|| format!("x[{vi}]"));
                    let _ = writeln!(out, "coef {vi} {label}");
                    write_matrix(&mut out, f);
                }
            }
        }
        out
    }
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Direct evaluation of M̄ at given `(Q, L)`.
pub fn mbar_value(lin: &PoseLinearization, gamma: f64, q: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    let ns = lin.state_dim();
    let d_f = lin.b2.ncols();
    let d_y = lin.c.nrows();
    let size = ns + d_f + d_y;
    let mut m = DMatrix::zeros(size, size);
    let top = q * lin.a.transpose() - l.transpose() * lin.b1.transpose() + &lin.a * q - &lin.b1 * l;
    m.view_mut((0, 0), (ns, ns)).copy_from(&top);
    m.view_mut((0, ns), (ns, d_f)).copy_from(&lin.b2);
    m.view_mut((ns, 0), (d_f, ns)).copy_from(&lin.b2.transpose());
    let qc = q * lin.c.transpose();
    m.view_mut((0, ns + d_f), (ns, d_y)).copy_from(&qc);
    m.view_mut((ns + d_f, 0), (d_y, ns)).copy_from(&qc.transpose());
    for i in ns..size {
        m[(i, i)] = -gamma;
    }
    m
}

/// M̄(P, γ, Q, L) as an affine expression over the layout's variables.
pub fn build_mbar(lin: &PoseLinearization, gamma: f64, layout: &LmiVariableLayout) -> Result<AffineSymMatrix> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be > 0, got {gamma}")));
    }
    check_dim("layout degrees of freedom", lin.n(), layout.n)?;
    let n2 = 2 * layout.n;
    let zero_q = DMatrix::zeros(n2, n2);
    let zero_l = DMatrix::zeros(layout.n, n2);
    let constant = mbar_value(lin, gamma, &zero_q, &zero_l);
    let coefficients = (0..layout.var_count())
        .map(|i| {
            let (qi, li) = layout.basis(i);
            // Linear part only: subtract the constant term.
            mbar_value(lin, gamma, &qi, &li) - &constant
        })
        .collect();
    Ok(AffineSymMatrix { constant, coefficients })
}

fn check_consistent(lins: &[PoseLinearization]) -> Result<()> {
    let first = lins
        .first()
        .ok_or_else(|| Error::InvalidInput("at least one linearization required".into()))?;
    for lin in lins {
        check_dim("linearization N", first.n(), lin.n())?;
        check_dim("linearization d_F", first.d(), lin.d())?;
        check_dim("linearization output", first.c.nrows(), lin.c.nrows())?;
    }
    Ok(())
}

fn q_block(layout: &LmiVariableLayout) -> AffineSymMatrix {
    let n2 = 2 * layout.n;
    AffineSymMatrix {
        constant: DMatrix::zeros(n2, n2),
        coefficients: (0..layout.var_count()).map(|i| layout.basis(i).0).collect(),
    }
}

/// Diagonal expression `diag(x[offset..offset+n])`.
fn diagonal_selector(layout: &LmiVariableLayout, offset: usize) -> AffineSymMatrix {
    let n = layout.n;
    let coefficients = (0..layout.var_count())
        .map(|i| {
            let mut f = DMatrix::zeros(n, n);
            if (offset..offset + n).contains(&i) {
                f[(i - offset, i - offset)] = 1.0;
            }
            f
        })
        .collect();
    AffineSymMatrix {
        constant: DMatrix::zeros(n, n),
        coefficients,
    }
}

fn push_mbar_blocks(sys: &mut LmiConstraintSystem, lins: &[PoseLinearization], gamma: f64, layout: &LmiVariableLayout) -> Result<()> {
    for (i, lin) in lins.iter().enumerate() {
        let expr = build_mbar(lin, gamma, layout)?;
        sys.push(format!("Mbar[{i}]"), expr, Sense::NegativeDefinite, BlockShape::Matrix)?;
    }
    Ok(())
}

/// Q ≻ 0 and M̄(P_i) ≺ 0 over dense `(Q, L)`.
pub fn build_lmi1(lins: &[PoseLinearization], gamma: f64, epsilon: f64) -> Result<LmiConstraintSystem> {
    check_consistent(lins)?;
    let layout = LmiVariableLayout::full(lins[0].n());
    let mut sys = LmiConstraintSystem::new(layout.var_count(), epsilon);
    sys.layout = Some(layout);
    sys.gamma = Some(gamma);
    sys.push("Q", q_block(&layout), Sense::PositiveDefinite, BlockShape::Matrix)?;
    push_mbar_blocks(&mut sys, lins, gamma, &layout)?;
    Ok(sys)
}

/// The sparse passive problem: blocks `Q`, `Q12`, `L1`, `L2`, then one M̄ per pose.
pub fn build_lmi2(lins: &[PoseLinearization], gamma: f64, epsilon: f64) -> Result<LmiConstraintSystem> {
    check_consistent(lins)?;
    let layout = LmiVariableLayout::sparse_passive(lins[0].n());
    let n = layout.n;
    let mut sys = LmiConstraintSystem::new(layout.var_count(), epsilon);
    sys.layout = Some(layout);
    sys.gamma = Some(gamma);
    sys.push("Q", q_block(&layout), Sense::PositiveDefinite, BlockShape::Matrix)?;
    sys.push("Q12", diagonal_selector(&layout, n), Sense::NegativeDefinite, BlockShape::Diagonal)?;
    sys.push("L1", diagonal_selector(&layout, 3 * n), Sense::PositiveDefinite, BlockShape::Diagonal)?;
    sys.push("L2", diagonal_selector(&layout, 4 * n), Sense::PositiveDefinite, BlockShape::Diagonal)?;
    push_mbar_blocks(&mut sys, lins, gamma, &layout)?;
    Ok(sys)
}
