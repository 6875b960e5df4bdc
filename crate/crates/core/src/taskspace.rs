//! Operation-space maps `z = h(q)` built from stacked components.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::dynamics::{Frames, ManipulatorModel};
use crate::error::{check_dim, Error, Result};

/// Condition number above which a square task Jacobian is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e8;
/// Absolute determinant below which a square task Jacobian is treated as singular.
pub const SINGULAR_DETERMINANT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum TaskComponent {
    /// Cartesian position of a point fixed on a link (2D for planar models).
    EndEffectorPosition { link: usize, point: Vector3<f64> },
    /// A single Cartesian coordinate of a point fixed on a link.
    LinkCoordinate {
        link: usize,
        point: Vector3<f64>,
        axis: usize,
    },
    /// Sub-vector of joint angles.
    JointSelection { joints: Vec<usize> },
}

/// Physical kind of an operation-space coordinate; decides gain units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateKind {
    Translational,
    Angular,
}

impl CoordinateKind {
    pub fn stiffness_unit(self) -> &'static str {
        match self {
            Self::Translational => "N/m",
            Self::Angular => "N*m/rad",
        }
    }

    pub fn damping_unit(self) -> &'static str {
        match self {
            Self::Translational => "N*s/m",
            Self::Angular => "N*m*s/rad",
        }
    }
}

impl TaskComponent {
    pub fn dim(&self, model: &ManipulatorModel) -> usize {
        match self {
            Self::EndEffectorPosition { .. } => model.workspace_dim(),
            Self::LinkCoordinate { .. } => 1,
            Self::JointSelection { joints } => joints.len(),
        }
    }

    fn coordinate_kind(&self) -> CoordinateKind {
        match self {
            Self::JointSelection { .. } => CoordinateKind::Angular,
            _ => CoordinateKind::Translational,
        }
    }

    /// Rows of the world-frame 3-vector retained by this component.
    fn cartesian_rows(&self, model: &ManipulatorModel) -> Vec<usize> {
        match self {
            Self::EndEffectorPosition { .. } => (0..model.workspace_dim()).collect(),
            Self::LinkCoordinate { axis, .. } => vec![*axis],
            Self::JointSelection { .. } => Vec::new(),
        }
    }
}

/// Ordered stack of task components. Rows follow declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMap {
    components: Vec<TaskComponent>,
    labels: Vec<String>,
}

/// Result of the invertibility guard on a square task Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Invertibility {
    Ok { condition_number: f64, determinant: f64 },
    Singular { condition_number: f64, determinant: f64 },
}

impl Invertibility {
    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok { .. })
    }

    pub fn condition_number(&self) -> f64 {
        match self {
            Self::Ok { condition_number, .. } | Self::Singular { condition_number, .. } => {
                *condition_number
            }
        }
    }
}

impl TaskMap {
    pub fn new(components: Vec<TaskComponent>) -> Self {
        let labels = (0..components.len()).map(|i| format!("c{i}")).collect();
        Self { components, labels }
    }

    pub fn with_labels(components: Vec<TaskComponent>, labels: Vec<String>) -> Result<Self> {
        if components.len() != labels.len() {
            return Err(Error::InvalidTaskMap(format!(
                "{} components but {} labels",
                components.len(),
                labels.len()
            )));
        }
        Ok(Self { components, labels })
    }

    /// Map `h(q) = q`.
    pub fn identity(n: usize) -> Self {
        Self::new(vec![TaskComponent::JointSelection {
            joints: (0..n).collect(),
        }])
    }

    /// Cartesian position of the tip of the last link.
    pub fn end_effector(model: &ManipulatorModel) -> Self {
        let link = model.joint_count() - 1;
        let params = &model.links()[link];
        Self::new(vec![TaskComponent::EndEffectorPosition {
            link,
            point: params.direction * params.length,
        }])
    }

    pub fn components(&self) -> &[TaskComponent] {
        &self.components
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn output_dim(&self, model: &ManipulatorModel) -> usize {
        self.components.iter().map(|c| c.dim(model)).sum()
    }

    /// Row ranges of each component in the stacked output.
    pub fn row_ranges(&self, model: &ManipulatorModel) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.components
            .iter()
            .map(|c| {
                let r = start..start + c.dim(model);
                start = r.end;
                r
            })
            .collect()
    }

    /// Name of every output row: the component label, suffixed by axis or joint for multi-row components.
    pub fn coordinate_labels(&self, model: &ManipulatorModel) -> Vec<String> {
        let mut out = Vec::new();
        for (c, label) in self.components.iter().zip(&self.labels) {
            match c {
                TaskComponent::EndEffectorPosition { .. } => {
                    for axis in ["x", "y", "z"].iter().take(c.dim(model)) {
                        out.push(format!("{label}.{axis}"));
                    }
                }
                TaskComponent::JointSelection { joints } if joints.len() > 1 => {
                    out.extend(joints.iter().map(|j| format!("{label}.q{j}")));
                }
                _ => out.push(label.clone()),
            }
        }
        out
    }

    /// Coordinate kind of every output row.
    pub fn coordinate_kinds(&self, model: &ManipulatorModel) -> Vec<CoordinateKind> {
        self.components
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.coordinate_kind(), c.dim(model)))
            .collect()
    }

    pub fn validate(&self, model: &ManipulatorModel) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidTaskMap("task map has no components".into()));
        }
        let n = model.joint_count();
        let mut selected = vec![false; n];
        for (ci, c) in self.components.iter().enumerate() {
            match c {
                TaskComponent::EndEffectorPosition { link, point }
                | TaskComponent::LinkCoordinate { link, point, .. } => {
                    if *link >= n {
                        return Err(Error::InvalidTaskMap(format!(
                            "component {ci}: link index {link} out of range (N = {n})"
                        )));
                    }
                    if !point.iter().all(|x| x.is_finite()) {
                        return Err(Error::InvalidTaskMap(format!("component {ci}: non-finite point")));
                    }
                }
                TaskComponent::JointSelection { joints } => {
                    if joints.is_empty() {
                        return Err(Error::InvalidTaskMap(format!("component {ci}: empty joint selection")));
                    }
                    for &j in joints {
                        if j >= n {
                            return Err(Error::InvalidTaskMap(format!(
                                "component {ci}: joint index {j} out of range (N = {n})"
                            )));
                        }
                        if selected[j] {
                            return Err(Error::InvalidTaskMap(format!(
                                "component {ci}: joint {j} selected twice"
                            )));
                        }
                        selected[j] = true;
                    }
                }
            }
            if let TaskComponent::LinkCoordinate { axis, .. } = c {
                if *axis >= model.workspace_dim() {
                    return Err(Error::InvalidTaskMap(format!(
                        "component {ci}: axis {axis} out of range"
                    )));
                }
            }
        }
        Ok(())
    }

    fn prepare(&self, model: &ManipulatorModel, q: &DVector<f64>) -> Result<Frames> {
        self.validate(model)?;
        check_dim("task map joint vector", model.joint_count(), q.len())?;
        Ok(model.frames(q))
    }

    pub fn eval(&self, model: &ManipulatorModel, q: &DVector<f64>) -> Result<DVector<f64>> {
        let frames = self.prepare(model, q)?;
        let mut out = Vec::with_capacity(self.output_dim(model));
        for c in &self.components {
            match c {
                TaskComponent::EndEffectorPosition { link, point }
                | TaskComponent::LinkCoordinate { link, point, .. } => {
                    let x = frames.point(*link, point);
                    out.extend(c.cartesian_rows(model).into_iter().map(|r| x[r]));
                }
                TaskComponent::JointSelection { joints } => out.extend(joints.iter().map(|&j| q[j])),
            }
        }
        Ok(DVector::from_vec(out))
    }

    pub fn jacobian(&self, model: &ManipulatorModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let frames = self.prepare(model, q)?;
        let n = model.joint_count();
        let mut jac = DMatrix::zeros(self.output_dim(model), n);
        let mut row = 0;
        for c in &self.components {
            match c {
                TaskComponent::EndEffectorPosition { link, point }
                | TaskComponent::LinkCoordinate { link, point, .. } => {
                    let x = frames.point(*link, point);
                    let jp = frames.point_jacobian(*link, &x);
                    for r in c.cartesian_rows(model) {
                        jac.row_mut(row).copy_from(&jp.row(r));
                        row += 1;
                    }
                }
                TaskComponent::JointSelection { joints } => {
                    for &j in joints {
                        jac[(row, j)] = 1.0;
                        row += 1;
                    }
                }
            }
        }
        Ok(jac)
    }

    /// dJ/dt along the joint velocity `qdot`.
    pub fn jacobian_dot(
        &self,
        model: &ManipulatorModel,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let frames = self.prepare(model, q)?;
        let n = model.joint_count();
        check_dim("task map joint velocity", n, qdot.len())?;
        let mut jdot = DMatrix::zeros(self.output_dim(model), n);
        let mut row = 0;
        for c in &self.components {
            match c {
                TaskComponent::EndEffectorPosition { link, point }
                | TaskComponent::LinkCoordinate { link, point, .. } => {
                    let x = frames.point(*link, point);
                    let mut dp = nalgebra::Matrix3xX::zeros(n);
                    for (k, &v) in qdot.iter().enumerate().take(link + 1) {
                        if v != 0.0 {
                            dp += frames.point_jacobian_partial(*link, &x, k) * v;
                        }
                    }
                    for r in c.cartesian_rows(model) {
                        jdot.row_mut(row).copy_from(&dp.row(r));
                        row += 1;
                    }
                }
                TaskComponent::JointSelection { joints } => row += joints.len(),
            }
        }
        Ok(jdot)
    }

    /// Guards the inversion of a square control-map Jacobian.
    pub fn check_invertibility(&self, model: &ManipulatorModel, q: &DVector<f64>) -> Result<Invertibility> {
        let m = self.output_dim(model);
        if m != model.joint_count() {
            return Err(Error::InvalidTaskMap(format!(
                "invertibility requires a square map: output dim {m}, N = {}",
                model.joint_count()
            )));
        }
        let jac = self.jacobian(model, q)?;
        Ok(classify_square(&jac))
    }
}

pub(crate) fn classify_square(jac: &DMatrix<f64>) -> Invertibility {
    let sv = jac.singular_values();
    let max = sv.max();
    let min = sv.min();
    let condition_number = if min == 0.0 { f64::INFINITY } else { max / min };
    let determinant = jac.determinant();
    if !(condition_number <= SINGULAR_CONDITION) || determinant.abs() < SINGULAR_DETERMINANT {
        Invertibility::Singular {
            condition_number,
            determinant,
        }
    } else {
        Invertibility::Ok {
            condition_number,
            determinant,
        }
    }
}
