//! TOML robot descriptions, problem configs and gains files.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{LinkParam, ManipulatorModel, ModelKind, RigidTransform};
use crate::error::{Error, Result};
use crate::linearize::PerformanceWeights;
use crate::lmi::DEFAULT_EPSILON;
use crate::sdp::SdpOptions;
use crate::sim::{DisturbanceProfile, DisturbanceSegment, DEFAULT_DT};
use crate::synthesis::{diagonal_gain_matrix, ControllerGains, SynthesisMode, SynthesisProblem};
use crate::taskspace::{TaskComponent, TaskMap};

pub const SCHEMA_VERSION: u32 = 1;

fn cfg_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, file: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let location = e
            .span()
            .map(|s| {
                let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                format!(" (line {line})")
            })
            .unwrap_or_default();
        cfg_err(file, format!("{message}{location}"))
    })
}

fn check_version(version: u32, file: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(cfg_err(
            format!("{file}: version"),
            format!("unsupported schema version {version} (expected {SCHEMA_VERSION})"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------- robot file

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    version: u32,
    kind: String,
    joint_count: Option<usize>,
    gravity: [f64; 3],
    link: Vec<LinkEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum InertiaEntry {
    Scalar(f64),
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OriginEntry {
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    length: f64,
    mass: f64,
    com_offset: Option<f64>,
    inertia: Option<InertiaEntry>,
    axis: Option<[f64; 3]>,
    direction: Option<[f64; 3]>,
    origin: Option<OriginEntry>,
}

pub fn parse_robot(text: &str, file: &str) -> Result<ManipulatorModel> {
    let raw: RobotFile = parse_toml(text, file)?;
    check_version(raw.version, file)?;
    let kind = match raw.kind.as_str() {
        "planar" => ModelKind::Planar,
        "spatial" => ModelKind::Spatial,
        other => {
            return Err(cfg_err(
                format!("{file}: kind"),
                format!("expected \"planar\" or \"spatial\", got {other:?}"),
            ))
        }
    };
    if let Some(n) = raw.joint_count {
        if n != raw.link.len() {
            return Err(cfg_err(
                format!("{file}: joint_count"),
                format!("joint_count = {n} but {} [[link]] entries", raw.link.len()),
            ));
        }
    }
    let planar = kind == ModelKind::Planar;
    let any_origin = raw.link.iter().any(|l| l.origin.is_some());
    let mut links = Vec::with_capacity(raw.link.len());
    for (i, entry) in raw.link.iter().enumerate() {
        let field = |name: &str| format!("{file}: link[{i}].{name}");
        let inertia = match (&entry.inertia, planar) {
            (None, _) => {
                let i_rod = entry.mass * entry.length * entry.length / 12.0;
                if planar {
                    Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, i_rod))
                } else {
                    Matrix3::from_diagonal(&Vector3::new(i_rod, i_rod, 0.0))
                }
            }
            (Some(InertiaEntry::Scalar(v)), true) => Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, *v)),
            (Some(InertiaEntry::Scalar(_)), false) => {
                return Err(cfg_err(field("inertia"), "spatial links need [ixx, iyy, izz] or a 3x3 tensor"))
            }
            (Some(InertiaEntry::Diagonal(d)), _) => Matrix3::from_diagonal(&Vector3::from(*d)),
            (Some(InertiaEntry::Full(m)), _) => Matrix3::from_fn(|r, c| m[r][c]),
        };
        let default_dir = if planar { Vector3::x() } else { Vector3::z() };
        let link = LinkParam {
            length: entry.length,
            mass: entry.mass,
            com_offset: entry.com_offset.unwrap_or(0.5 * entry.length),
            inertia_about_com: inertia,
            joint_axis: entry.axis.map(Vector3::from).unwrap_or_else(Vector3::z),
            joint_origin: entry
                .origin
                .as_ref()
                .map(|o| RigidTransform::from_xyz_rpy(o.xyz, o.rpy))
                .unwrap_or_else(RigidTransform::identity),
            direction: entry.direction.map(Vector3::from).unwrap_or(default_dir),
        };
        links.push(link);
    }
    let gravity = Vector3::from(raw.gravity);
    let model = if planar && !any_origin {
        ManipulatorModel::planar_chain(links, gravity)
    } else {
        ManipulatorModel::new(kind, links, gravity)
    };
    model.map_err(|e| cfg_err(file, e.to_string()))
}

pub fn load_robot(path: &Path) -> Result<ManipulatorModel> {
    parse_robot(&read_file(path)?, &path.display().to_string())
}

// -------------------------------------------------------------- problem file

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    version: u32,
    robot: String,
    synthesis: SynthesisEntry,
    solver: Option<SolverEntry>,
    weights: WeightsEntry,
    control_map: Vec<ComponentEntry>,
    performance_map: Option<Vec<ComponentEntry>>,
    simulation: Option<SimulationEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthesisEntry {
    mode: Option<String>,
    gamma: f64,
    epsilon: Option<f64>,
    poses: Vec<Vec<f64>>,
    reference: Option<Vec<f64>>,
    grid_points: Option<usize>,
    bisection: Option<BisectionEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bisection {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

type BisectionEntry = Bisection;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverEntry {
    max_iter: Option<usize>,
    box_radius: Option<f64>,
    objective: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsEntry {
    w1: WeightEntry,
    w2: WeightEntry,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightEntry {
    diag: Option<Vec<f64>>,
    dense: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentEntry {
    kind: String,
    name: Option<String>,
    link: Option<usize>,
    point: Option<[f64; 3]>,
    axis: Option<String>,
    joints: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentEntry {
    t_start: f64,
    t_end: f64,
    force: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationEntry {
    t_final: f64,
    dt: Option<f64>,
    initial_q: Option<Vec<f64>>,
    initial_pose: Option<usize>,
    initial_qdot: Option<Vec<f64>>,
    disturbance: Option<Vec<SegmentEntry>>,
    audit: Option<AuditEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditEntry {
    pose: usize,
    t_final: f64,
    pulse: Vec<SegmentEntry>,
}

/// Small-pulse run from rest at a synthesis pose, for the local gain audit.
#[derive(Debug, Clone, PartialEq)]
pub struct L2AuditConfig {
    pub pose_index: usize,
    pub t_final: f64,
    pub pulse: DisturbanceProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub t_final: f64,
    pub dt: f64,
    pub q0: DVector<f64>,
    pub qdot0: DVector<f64>,
    pub disturbance: DisturbanceProfile,
    pub audit: Option<L2AuditConfig>,
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub path: PathBuf,
    pub robot_path: PathBuf,
    pub problem: SynthesisProblem,
    pub bisection: Option<Bisection>,
    pub simulation: Option<SimulationConfig>,
}

fn vector(values: &[f64], expected: usize, path: impl Into<String>, what: &str) -> Result<DVector<f64>> {
    if values.len() != expected {
        return Err(cfg_err(path, format!("expected {expected} {what}, got {}", values.len())));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(cfg_err(path, format!("non-finite value {bad}")));
    }
    Ok(DVector::from_column_slice(values))
}

fn weight_matrix(entry: &WeightEntry, d: usize, path: &str) -> Result<DMatrix<f64>> {
    match (&entry.diag, &entry.dense) {
        (Some(diag), None) => Ok(DMatrix::from_diagonal(&vector(diag, d, format!("{path}.diag"), "entries")?)),
        (None, Some(rows)) => {
            if rows.len() != d {
                return Err(cfg_err(format!("{path}.dense"), format!("expected {d} rows, got {}", rows.len())));
            }
            let mut m = DMatrix::zeros(d, d);
            for (r, row) in rows.iter().enumerate() {
                let v = vector(row, d, format!("{path}.dense[{r}]"), "columns")?;
                m.row_mut(r).copy_from(&v.transpose());
            }
            Ok(m)
        }
        _ => Err(cfg_err(path, "give exactly one of `diag` or `dense`")),
    }
}

fn task_map(entries: &[ComponentEntry], model: &ManipulatorModel, path: &str) -> Result<TaskMap> {
    if entries.is_empty() {
        return Err(cfg_err(path, "at least one component is required"));
    }
    let last = model.joint_count() - 1;
    let mut components = Vec::new();
    let mut labels = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let field = |name: &str| format!("{path}[{i}].{name}");
        let link = e.link.unwrap_or(last);
        let point = |link: usize| {
            e.point.map(Vector3::from).unwrap_or_else(|| {
                let p = &model.links()[link.min(last)];
                p.direction * p.length
            })
        };
        let component = match e.kind.as_str() {
            "end_effector" => TaskComponent::EndEffectorPosition {
                link,
                point: point(link),
            },
            "link_coordinate" => {
                let axis = match e.axis.as_deref() {
                    Some("x") => 0,
                    Some("y") => 1,
                    Some("z") => 2,
                    other => return Err(cfg_err(field("axis"), format!("expected \"x\", \"y\" or \"z\", got {other:?}"))),
                };
                TaskComponent::LinkCoordinate {
                    link: e.link.ok_or_else(|| cfg_err(field("link"), "required for link_coordinate"))?,
                    point: point(link),
                    axis,
                }
            }
            "joints" => TaskComponent::JointSelection {
                joints: e.joints.clone().ok_or_else(|| cfg_err(field("joints"), "required for kind = \"joints\""))?,
            },
            other => {
                return Err(cfg_err(
                    field("kind"),
                    format!("expected end_effector, link_coordinate or joints, got {other:?}"),
                ))
            }
        };
        components.push(component);
        labels.push(e.name.clone().unwrap_or_else(|| format!("c{i}")));
    }
    let map = TaskMap::with_labels(components, labels).map_err(|e| cfg_err(path, e.to_string()))?;
    map.validate(model).map_err(|e| cfg_err(path, e.to_string()))?;
    Ok(map)
}

fn segments(entries: &[SegmentEntry], d: usize, path: &str) -> Result<DisturbanceProfile> {
    let mut segs = Vec::with_capacity(entries.len());
    for (i, s) in entries.iter().enumerate() {
        segs.push(DisturbanceSegment {
            t_start: s.t_start,
            t_end: s.t_end,
            force: vector(&s.force, d, format!("{path}[{i}].force"), "force entries")?,
        });
    }
    DisturbanceProfile::new(d, segs).map_err(|e| cfg_err(path, e.to_string()))
}

pub fn parse_problem(text: &str, path: &Path) -> Result<ProblemConfig> {
    let file = path.display().to_string();
    let raw: ProblemFile = parse_toml(text, &file)?;
    check_version(raw.version, &file)?;
    let robot_path = path.parent().unwrap_or(Path::new(".")).join(&raw.robot);
    let model = load_robot(&robot_path)?;
    let n = model.joint_count();

    let c_map = task_map(&raw.control_map, &model, "control_map")?;
    if c_map.output_dim(&model) != n {
        return Err(cfg_err(
            "control_map",
            format!("output dimension {} must equal the joint count {n}", c_map.output_dim(&model)),
        ));
    }
    let d_map = match &raw.performance_map {
        Some(entries) => task_map(entries, &model, "performance_map")?,
        None => c_map.clone(),
    };
    let d = d_map.output_dim(&model);
    let weights = PerformanceWeights::new(
        weight_matrix(&raw.weights.w1, d, "weights.w1")?,
        weight_matrix(&raw.weights.w2, d, "weights.w2")?,
    )
    .map_err(|e| cfg_err("weights", e.to_string()))?;

    let s = &raw.synthesis;
    if !(s.gamma > 0.0) {
        return Err(cfg_err("synthesis.gamma", format!("must be > 0, got {}", s.gamma)));
    }
    if s.poses.is_empty() {
        return Err(cfg_err("synthesis.poses", "at least one pose is required"));
    }
    let poses = s
        .poses
        .iter()
        .enumerate()
        .map(|(i, p)| vector(p, n, format!("synthesis.poses[{i}]"), "joint angles"))
        .collect::<Result<Vec<_>>>()?;
    let mode = match s.mode.as_deref() {
        None => SynthesisMode::Lmi2,
        Some(m) => m.parse().map_err(|e: Error| cfg_err("synthesis.mode", e.to_string()))?,
    };
    let reference = s
        .reference
        .as_ref()
        .map(|r| vector(r, n, "synthesis.reference", "entries"))
        .transpose()?;
    if let Some(b) = &s.bisection {
        if !(b.lo > 0.0 && b.hi > b.lo && b.tol > 0.0) {
            return Err(cfg_err("synthesis.bisection", "need 0 < lo < hi and tol > 0"));
        }
    }

    let mut problem = SynthesisProblem::new(model.clone(), c_map, d_map.clone(), weights, poses.clone(), s.gamma, mode);
    problem.reference = reference;
    problem.epsilon = s.epsilon.unwrap_or(DEFAULT_EPSILON);
    if !(problem.epsilon >= 0.0) {
        return Err(cfg_err("synthesis.epsilon", "must be >= 0"));
    }
    if let Some(g) = s.grid_points {
        problem.grid_points = g;
    }
    if let Some(solver) = &raw.solver {
        apply_solver(&mut problem.solver, solver)?;
    }

    let simulation = raw
        .simulation
        .as_ref()
        .map(|sim| -> Result<SimulationConfig> {
            let dt = sim.dt.unwrap_or(DEFAULT_DT);
            if !(dt > 0.0) {
                return Err(cfg_err("simulation.dt", "must be > 0"));
            }
            if !(sim.t_final >= 0.0) {
                return Err(cfg_err("simulation.t_final", "must be >= 0"));
            }
            let q0 = match (&sim.initial_q, sim.initial_pose) {
                (Some(q), None) => vector(q, n, "simulation.initial_q", "joint angles")?,
                (None, Some(i)) => poses
                    .get(i)
                    .cloned()
                    .ok_or_else(|| cfg_err("simulation.initial_pose", format!("no pose with index {i}")))?,
                (None, None) => poses[0].clone(),
                (Some(_), Some(_)) => {
                    return Err(cfg_err("simulation", "give at most one of initial_q and initial_pose"))
                }
            };
            let qdot0 = match &sim.initial_qdot {
                Some(v) => vector(v, n, "simulation.initial_qdot", "joint velocities")?,
                None => DVector::zeros(n),
            };
            let disturbance = match &sim.disturbance {
                Some(s) => segments(s, d, "simulation.disturbance")?,
                None => DisturbanceProfile::zero(d),
            };
            let audit = sim
                .audit
                .as_ref()
                .map(|a| -> Result<L2AuditConfig> {
                    if a.pose >= poses.len() {
                        return Err(cfg_err("simulation.audit.pose", format!("no pose with index {}", a.pose)));
                    }
                    Ok(L2AuditConfig {
                        pose_index: a.pose,
                        t_final: a.t_final,
                        pulse: segments(&a.pulse, d, "simulation.audit.pulse")?,
                    })
                })
                .transpose()?;
            Ok(SimulationConfig {
                t_final: sim.t_final,
                dt,
                q0,
                qdot0,
                disturbance,
                audit,
            })
        })
        .transpose()?;

    Ok(ProblemConfig {
        path: path.to_path_buf(),
        robot_path,
        problem,
        bisection: s.bisection,
        simulation,
    })
}

fn apply_solver(options: &mut SdpOptions, entry: &SolverEntry) -> Result<()> {
    if let Some(m) = entry.max_iter {
        if m == 0 {
            return Err(cfg_err("solver.max_iter", "must be > 0"));
        }
        options.max_iterations = m;
    }
    if let Some(r) = entry.box_radius {
        if !(r > 0.0) {
            return Err(cfg_err("solver.box_radius", "must be > 0"));
        }
        options.box_radius = r;
    }
    match entry.objective.as_deref() {
        None => {}
        Some("first_feasible") => options.stop_when_feasible = true,
        Some("max_margin") => options.stop_when_feasible = false,
        Some(other) => {
            return Err(cfg_err(
                "solver.objective",
                format!("expected \"first_feasible\" or \"max_margin\", got {other:?}"),
            ))
        }
    }
    Ok(())
}

pub fn load_problem(path: &Path) -> Result<ProblemConfig> {
    parse_problem(&read_file(path)?, path)
}

// ---------------------------------------------------------------- gains file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsFile {
    version: u32,
    mode: String,
    gamma: f64,
    labels: Vec<String>,
    stiffness: Vec<f64>,
    damping: Vec<f64>,
    reference: Vec<f64>,
    stiffness_units: Vec<String>,
    damping_units: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<CertificateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateEntry {
    q: Vec<Vec<f64>>,
    l: Vec<Vec<f64>>,
}

/// `(Q, L)` behind a set of gains, kept for independent re-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCertificate {
    pub q: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(cfg_err(path, "rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

pub fn write_gains(gains: &ControllerGains, certificate: Option<&GainCertificate>) -> String {
    let file = GainsFile {
        version: SCHEMA_VERSION,
        mode: gains.mode.to_string(),
        gamma: gains.gamma,
        labels: gains.labels.clone(),
        stiffness: gains.stiffness.iter().copied().collect(),
        damping: gains.damping.iter().copied().collect(),
        reference: gains.reference.iter().copied().collect(),
        stiffness_units: gains.stiffness_units.clone(),
        damping_units: gains.damping_units.clone(),
        k_matrix: (gains.mode == SynthesisMode::Lmi1).then(|| rows(&gains.k_matrix)),
        certificate: certificate.map(|c| CertificateEntry {
            q: rows(&c.q),
            l: rows(&c.l),
        }),
    };
    toml::to_string(&file).expect("gains serialize to TOML")
}

pub fn parse_gains(text: &str, file: &str) -> Result<(ControllerGains, Option<GainCertificate>)> {
    let raw: GainsFile = parse_toml(text, file)?;
    check_version(raw.version, file)?;
    let mode: SynthesisMode = raw.mode.parse().map_err(|e: Error| cfg_err(format!("{file}: mode"), e.to_string()))?;
    let n = raw.stiffness.len();
    let stiffness = DVector::from_vec(raw.stiffness);
    let damping = vector(&raw.damping, n, format!("{file}: damping"), "entries")?;
    let reference = vector(&raw.reference, n, format!("{file}: reference"), "entries")?;
    for (name, len) in [
        ("labels", raw.labels.len()),
        ("stiffness_units", raw.stiffness_units.len()),
        ("damping_units", raw.damping_units.len()),
    ] {
        if len != n {
            return Err(cfg_err(format!("{file}: {name}"), format!("expected {n} entries, got {len}")));
        }
    }
    let k_matrix = match (mode, &raw.k_matrix) {
        (SynthesisMode::Lmi2, None) => diagonal_gain_matrix(&stiffness, &damping),
        (SynthesisMode::Lmi2, Some(_)) => {
            return Err(cfg_err(format!("{file}: k_matrix"), "lmi2 gains are diagonal; remove k_matrix"))
        }
        (SynthesisMode::Lmi1, None) => return Err(cfg_err(format!("{file}: k_matrix"), "required for lmi1 gains")),
        (SynthesisMode::Lmi1, Some(rows)) => {
            let k = matrix(rows, &format!("{file}: k_matrix"))?;
            if k.nrows() != n || k.ncols() != 2 * n {
                return Err(cfg_err(format!("{file}: k_matrix"), format!("expected {n}x{} matrix", 2 * n)));
            }
            k
        }
    };
    let certificate = raw
        .certificate
        .as_ref()
        .map(|c| -> Result<GainCertificate> {
            let q = matrix(&c.q, &format!("{file}: certificate.q"))?;
            let l = matrix(&c.l, &format!("{file}: certificate.l"))?;
            if q.nrows() != 2 * n || q.ncols() != 2 * n || l.nrows() != n || l.ncols() != 2 * n {
                return Err(cfg_err(format!("{file}: certificate"), "Q must be 2N x 2N and L must be N x 2N"));
            }
            Ok(GainCertificate { q, l })
        })
        .transpose()?;
    Ok((
        ControllerGains {
            mode,
            gamma: raw.gamma,
            stiffness,
            damping,
            reference,
            k_matrix,
            labels: raw.labels,
            stiffness_units: raw.stiffness_units,
            damping_units: raw.damping_units,
        },
        certificate,
    ))
}

pub fn load_gains(path: &Path) -> Result<(ControllerGains, Option<GainCertificate>)> {
    parse_gains(&read_file(path)?, &path.display().to_string())
}
