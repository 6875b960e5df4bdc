//! Closed-loop simulation `M q̈ + C q̇ + g = u + J_dᵀ F_d` with fixed-step RK4.

use std::io::Write;

use nalgebra::DVector;

use crate::controller::ImpedanceController;
use crate::dynamics::ManipulatorModel;
use crate::error::{check_dim, Error, Result};
use crate::linearize::PerformanceWeights;
use crate::taskspace::TaskMap;

pub const DEFAULT_DT: f64 = 1e-3;
/// Joint-speed threshold for declaring blow-up.
pub const BLOWUP_SPEED: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub force: DVector<f64>,
}

/// Piecewise-constant disturbance force, zero outside every segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceProfile {
    dim: usize,
    segments: Vec<DisturbanceSegment>,
}

impl DisturbanceProfile {
    pub fn new(dim: usize, mut segments: Vec<DisturbanceSegment>) -> Result<Self> {
        for s in &segments {
            check_dim("disturbance force", dim, s.force.len())?;
            if !(s.t_start < s.t_end) || !s.t_start.is_finite() || !s.t_end.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "disturbance segment needs t_start < t_end (got {} and {})",
                    s.t_start, s.t_end
                )));
            }
        }
        segments.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        for w in segments.windows(2) {
            if w[1].t_start < w[0].t_end {
                return Err(Error::InvalidInput(format!(
                    "disturbance segments overlap at t = {}",
                    w[1].t_start
                )));
            }
        }
        Ok(Self { dim, segments })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            segments: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[DisturbanceSegment] {
        &self.segments
    }

    /// Force on `[t_start, t_end)`.
    pub fn force_at(&self, t: f64) -> DVector<f64> {
        self.segments
            .iter()
            .find(|s| s.t_start <= t && t < s.t_end)
            .map(|s| s.force.clone())
            .unwrap_or_else(|| DVector::zeros(self.dim))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            segments: self
                .segments
                .iter()
                .map(|s| DisturbanceSegment {
                    force: &s.force * factor,
                    ..s.clone()
                })
                .collect(),
        }
    }
}

/// Sampled closed-loop trajectory. Sample `n` is the state at `t[n]`; `f_d[n]` is the force
/// held over the step that starts there.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub qdot: Vec<DVector<f64>>,
    pub z_c: Vec<DVector<f64>>,
    pub z_d: Vec<DVector<f64>>,
    pub zd_dot: Vec<DVector<f64>>,
    pub f_c: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub f_d: Vec<DVector<f64>>,
    pub h_d: Vec<f64>,
    /// `∫ ż_dᵀ F_d dt` from 0 to `t[n]`.
    pub supply: Vec<f64>,
    /// `∫ q̇ᵀ u dt` from 0 to `t[n]`.
    pub control_work: Vec<f64>,
    /// Plant energy `½ q̇ᵀ M q̇ + U`.
    pub plant_energy: Vec<f64>,
    pub reference: DVector<f64>,
    pub c_labels: Vec<String>,
    pub d_labels: Vec<String>,
    /// `(label, rows)` of every control-map component.
    pub c_components: Vec<(String, std::ops::Range<usize>)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn delta(&self, n: usize) -> DVector<f64> {
        &self.z_c[n] - &self.reference
    }

    /// Largest `|z_c − r|` per coordinate over the whole run.
    pub fn peak_delta(&self) -> DVector<f64> {
        let mut peak = DVector::zeros(self.reference.len());
        for n in 0..self.len() {
            peak = peak.zip_map(&self.delta(n), |a: f64, b: f64| a.max(b.abs()));
        }
        peak
    }

    /// Largest `‖z_c − r‖` over the run.
    pub fn peak_delta_norm(&self) -> f64 {
        (0..self.len()).map(|n| self.delta(n).norm()).fold(0.0, f64::max)
    }

    /// Index of the last sample at or before `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.t.partition_point(|&s| s <= t + 1e-12 * self.dt).saturating_sub(1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.q.first().map_or(0, |q| q.len());
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((1..=n).map(|i| format!("q_{i}")));
        header.extend((1..=n).map(|i| format!("qd_{i}")));
        header.extend(self.c_labels.iter().map(|l| format!("zc_{l}")));
        header.extend(self.d_labels.iter().map(|l| format!("zd_{l}")));
        header.extend(self.c_labels.iter().map(|l| format!("Fc_{l}")));
        header.extend(self.d_labels.iter().map(|l| format!("Fd_{l}")));
        header.push("H_d".into());
        header.extend(self.c_labels.iter().map(|l| format!("delta_{l}")));
        header.extend(self.c_components.iter().map(|(l, _)| format!("delta_norm_{l}")));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let delta = self.delta(k);
            let mut row: Vec<f64> = vec![self.t[k]];
            row.extend(self.q[k].iter());
            row.extend(self.qdot[k].iter());
            row.extend(self.z_c[k].iter());
            row.extend(self.z_d[k].iter());
            row.extend(self.f_c[k].iter());
            row.extend(self.f_d[k].iter());
            row.push(self.h_d[k]);
            row.extend(delta.iter());
            row.extend(self.c_components.iter().map(|(_, r)| delta.rows(r.start, r.len()).norm()));
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

struct Stage {
    qddot: DVector<f64>,
    power: f64,
}

fn closed_loop_rhs(
    model: &ManipulatorModel,
    ctrl: &ImpedanceController,
    d_map: &TaskMap,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    f_d: &DVector<f64>,
) -> Result<Stage> {
    let out = ctrl.control_force(model, q, qdot)?;
    let tau = &out.u + d_map.jacobian(model, q)?.transpose() * f_d;
    Ok(Stage {
        qddot: model.forward_dynamics(q, qdot, &tau)?,
        power: qdot.dot(&out.u),
    })
}

fn check_state(t: f64, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<()> {
    if !q.iter().chain(qdot.iter()).all(|v| v.is_finite()) {
        return Err(Error::SimulationAborted {
            time: t,
            reason: "non-finite state".into(),
        });
    }
    let speed = qdot.norm();
    if speed > BLOWUP_SPEED {
        return Err(Error::SimulationAborted {
            time: t,
            reason: format!("joint speed {speed:.3e} exceeds {BLOWUP_SPEED:.0e}"),
        });
    }
    Ok(())
}

/// Integrates the closed loop from `(q0, qdot0)` to `t_final` with step `dt`.
/// The disturbance is sampled at each step's midpoint and held over the step.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    model: &ManipulatorModel,
    ctrl: &ImpedanceController,
    d_map: &TaskMap,
    disturbance: &DisturbanceProfile,
    t_final: f64,
    dt: f64,
    q0: &DVector<f64>,
    qdot0: &DVector<f64>,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step must be > 0, got {dt}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon must be >= 0, got {t_final}")));
    }
    let n = model.joint_count();
    check_dim("initial joint angles", n, q0.len())?;
    check_dim("initial joint velocities", n, qdot0.len())?;
    d_map.validate(model)?;
    check_dim("disturbance dimension", d_map.output_dim(model), disturbance.dim())?;
    check_state(0.0, q0, qdot0)?;

    let steps = (t_final / dt).round() as usize;
    let mut traj = Trajectory {
        dt,
        t: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        qdot: Vec::with_capacity(steps + 1),
        z_c: Vec::with_capacity(steps + 1),
        z_d: Vec::with_capacity(steps + 1),
        zd_dot: Vec::with_capacity(steps + 1),
        f_c: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        f_d: Vec::with_capacity(steps + 1),
        h_d: Vec::with_capacity(steps + 1),
        supply: Vec::with_capacity(steps + 1),
        control_work: Vec::with_capacity(steps + 1),
        plant_energy: Vec::with_capacity(steps + 1),
        reference: ctrl.gains.reference.clone(),
        c_labels: ctrl.c_map.coordinate_labels(model),
        d_labels: d_map.coordinate_labels(model),
        c_components: ctrl
            .c_map
            .labels()
            .iter()
            .cloned()
            .zip(ctrl.c_map.row_ranges(model))
            .collect(),
    };

    let mut q = q0.clone();
    let mut qdot = qdot0.clone();
    let mut supply = 0.0;
    let mut work = 0.0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let f_d = if k < steps {
            disturbance.force_at(t + 0.5 * dt)
        } else {
            disturbance.force_at(t)
        };
        let out = ctrl.control_force(model, &q, &qdot)?;
        let z_d = d_map.eval(model, &q)?;
        traj.t.push(t);
        traj.zd_dot.push(d_map.jacobian(model, &q)? * &qdot);
        traj.z_c.push(ctrl.c_map.eval(model, &q)?);
        traj.h_d.push(ctrl.desired_energy(model, &q, &qdot)?);
        traj.plant_energy.push(model.total_energy(&q, &qdot)?);
        traj.f_c.push(out.f_c);
        traj.u.push(out.u);
        traj.supply.push(supply);
        traj.control_work.push(work);
        traj.q.push(q.clone());
        traj.qdot.push(qdot.clone());
        if k == steps {
            traj.f_d.push(f_d);
            traj.z_d.push(z_d);
            break;
        }

        let h = dt;
        let s1 = closed_loop_rhs(model, ctrl, d_map, &q, &qdot, &f_d)?;
        let q2 = &q + &qdot * (0.5 * h);
        let v2 = &qdot + &s1.qddot * (0.5 * h);
        let s2 = closed_loop_rhs(model, ctrl, d_map, &q2, &v2, &f_d)?;
        let q3 = &q + &v2 * (0.5 * h);
        let v3 = &qdot + &s2.qddot * (0.5 * h);
        let s3 = closed_loop_rhs(model, ctrl, d_map, &q3, &v3, &f_d)?;
        let q4 = &q + &v3 * h;
        let v4 = &qdot + &s3.qddot * h;
        let s4 = closed_loop_rhs(model, ctrl, d_map, &q4, &v4, &f_d)?;

        q += (&qdot + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
        qdot += (&s1.qddot + &s2.qddot * 2.0 + &s3.qddot * 2.0 + &s4.qddot) * (h / 6.0);
        work += (s1.power + 2.0 * s2.power + 2.0 * s3.power + s4.power) * (h / 6.0);
        check_state(t + h, &q, &qdot)?;

        // Exact for a force held constant over the step.
        let z_next = d_map.eval(model, &q)?;
        supply += f_d.dot(&(&z_next - &z_d));
        traj.f_d.push(f_d);
        traj.z_d.push(z_d);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassivityAudit {
    /// `max_t [H_d(t) − H_d(0) − ∫ ż_dᵀ F_d]`.
    pub max_violation: f64,
    pub max_h_d: f64,
}

impl PassivityAudit {
    pub fn relative_violation(&self) -> f64 {
        self.max_violation / self.max_h_d.max(f64::MIN_POSITIVE)
    }

    pub fn holds(&self, rel_tol: f64) -> bool {
        self.max_violation <= rel_tol * self.max_h_d
    }
}

/// Checks `H_d(t) − H_d(0) ≤ ∫ ż_dᵀ F_d` at every sample, using the disturbance port.
pub fn passivity_audit(traj: &Trajectory) -> PassivityAudit {
    let h0 = traj.h_d.first().copied().unwrap_or(0.0);
    let max_violation = traj
        .h_d
        .iter()
        .zip(&traj.supply)
        .map(|(h, s)| h - h0 - s)
        .fold(f64::NEG_INFINITY, f64::max);
    PassivityAudit {
        max_violation,
        max_h_d: traj.h_d.iter().cloned().fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2Audit {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Relative allowance for trapezoidal quadrature of the output energy.
pub const L2_QUADRATURE_TOL: f64 = 0.02;

/// `‖[W1(z_d − z_d*); W2 ż_d]‖₂ ≤ γ ‖F_d‖₂` over the simulated horizon.
pub fn l2_gain_audit(traj: &Trajectory, weights: &PerformanceWeights, zd_star: &DVector<f64>, gamma: f64) -> Result<L2Audit> {
    if traj.is_empty() {
        return Err(Error::AuditRefused("empty trajectory".into()));
    }
    let offset = traj.delta(0).norm();
    if offset > 1e-9 * traj.reference.norm().max(1.0) {
        return Err(Error::AuditRefused(format!(
            "trajectory must start at z_c = r (offset {offset:.3e})"
        )));
    }
    let speed = traj.qdot[0].norm();
    if speed != 0.0 {
        return Err(Error::AuditRefused(format!("trajectory must start at rest (|qdot| = {speed:.3e})")));
    }
    check_dim("reference disturbance output", weights.dim(), zd_star.len())?;
    check_dim("performance output", weights.dim(), traj.z_d[0].len())?;
    let power: Vec<f64> = (0..traj.len())
        .map(|k| {
            let a = &weights.w1 * (&traj.z_d[k] - zd_star);
            let b = &weights.w2 * &traj.zd_dot[k];
            a.norm_squared() + b.norm_squared()
        })
        .collect();
    let mut energy = 0.0;
    for k in 1..traj.len() {
        energy += 0.5 * (power[k - 1] + power[k]) * (traj.t[k] - traj.t[k - 1]);
    }
    let input: f64 = (0..traj.len().saturating_sub(1))
        .map(|k| traj.f_d[k].norm_squared() * (traj.t[k + 1] - traj.t[k]))
        .sum();
    let lhs = energy.sqrt();
    let rhs = gamma * input.sqrt();
    Ok(L2Audit {
        lhs,
        rhs,
        satisfied: lhs <= rhs * (1.0 + L2_QUADRATURE_TOL),
    })
}
