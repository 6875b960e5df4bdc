//! Command-line pipelines: `synth`, `simulate`, `verify`, `min-gamma`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::config::{load_gains, load_problem, write_gains, GainCertificate, ProblemConfig};
use crate::controller::ImpedanceController;
use crate::error::{Error, Result};
use crate::lmi::LmiVariableLayout;
use crate::sdp::SdpStatus;
use crate::sim::{l2_gain_audit, passivity_audit, simulate, Trajectory};
use crate::synthesis::{extract_gains, min_gamma, synthesize, verify_poses, SynthesisMode, SynthesisReport};
use crate::verify::revalidate_lmi;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNCERTIFIED: i32 = 2;

/// Relative tolerance of the passivity audit.
pub const PASSIVITY_TOL: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "impedance-synth", version, about = "Impedance gain synthesis and certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the LMI problem and write a report and gains file.
    Synth(CommonArgs),
    /// Simulate the closed loop with a gains file and audit the trajectory.
    Simulate(CommonArgs),
    /// Re-check a gains file against the config's poses.
    Verify(CommonArgs),
    /// Bisect for the smallest feasible gamma.
    MinGamma(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "PATH")]
    gains: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[arg(long, value_name = "F")]
    gamma: Option<f64>,
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    #[arg(long, value_name = "F")]
    epsilon: Option<f64>,
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::MinGamma(a) => cmd_min_gamma(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn load(args: &CommonArgs) -> Result<ProblemConfig> {
    let mut cfg = load_problem(&args.config)?;
    let p = &mut cfg.problem;
    if let Some(g) = args.gamma {
        if !(g > 0.0) {
            return Err(Error::InvalidInput(format!("--gamma must be > 0, got {g}")));
        }
        p.gamma = g;
    }
    if let Some(m) = &args.mode {
        p.mode = m.parse()?;
    }
    if let Some(e) = args.epsilon {
        if !(e >= 0.0) {
            return Err(Error::InvalidInput(format!("--epsilon must be >= 0, got {e}")));
        }
        p.epsilon = e;
    }
    if let Some(n) = args.max_iter {
        if n == 0 {
            return Err(Error::InvalidInput("--max-iter must be > 0".into()));
        }
        p.solver.max_iterations = n;
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn save_synthesis(report: &SynthesisReport, out: &Path, stdout: &mut dyn Write) -> Result<i32> {
    write_file(&out.join("report.txt"), report.render().as_bytes())?;
    let _ = writeln!(stdout, "report: {}", out.join("report.txt").display());
    if let (Some(gains), Some(q), Some(l)) = (&report.gains, &report.q, &report.l) {
        let cert = GainCertificate { q: q.clone(), l: l.clone() };
        write_file(&out.join("gains.toml"), write_gains(gains, Some(&cert)).as_bytes())?;
        let _ = writeln!(stdout, "gains: {}", out.join("gains.toml").display());
        for j in 0..gains.n() {
            let _ = writeln!(
                stdout,
                "  {}: k = {:.6} {}, b = {:.6} {}",
                gains.labels[j], gains.stiffness[j], gains.stiffness_units[j], gains.damping[j], gains.damping_units[j]
            );
        }
    }
    let status = match report.status {
        SdpStatus::Feasible => "feasible",
        SdpStatus::InfeasibleCertificate => "infeasible",
        SdpStatus::NumericalFailure => "numerical failure",
    };
    let _ = writeln!(stdout, "status: {status}, certified: {}", report.is_certified());
    Ok(if report.is_certified() { EXIT_OK } else { EXIT_UNCERTIFIED })
}

fn cmd_synth(args: &CommonArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = load(args)?;
    let report = synthesize(&cfg.problem)?;
    save_synthesis(&report, &args.out, stdout)
}

fn cmd_min_gamma(args: &CommonArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = load(args)?;
    let hi_default = cfg.problem.gamma;
    let bracket = cfg.bisection.unwrap_or(crate::config::Bisection {
        lo: hi_default * 1e-3,
        hi: hi_default,
        tol: hi_default * 1e-3,
    });
    let hi = args.gamma.unwrap_or(bracket.hi);
    let res = min_gamma(&cfg.problem, bracket.lo, hi, bracket.tol)?;
    let _ = writeln!(stdout, "gamma*: {:.10e} ({} probes)", res.gamma_star, res.probes);
    save_synthesis(&res.report, &args.out, stdout)
}

fn load_controller(cfg: &ProblemConfig, args: &CommonArgs) -> Result<(ImpedanceController, Option<GainCertificate>)> {
    let path = args
        .gains
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--gains PATH is required".into()))?;
    let (gains, cert) = load_gains(path)?;
    let p = &cfg.problem;
    let ctrl = ImpedanceController::new(gains, p.c_map.clone(), &p.model)?;
    Ok((ctrl, cert))
}

fn audit_summary(traj: &Trajectory, out: &mut String) -> bool {
    let pa = passivity_audit(traj);
    let ok = pa.holds(PASSIVITY_TOL);
    let _ = writeln!(
        out,
        "passivity: max_violation = {:.6e}, max_H_d = {:.6e}, relative = {:.6e}, holds = {ok}",
        pa.max_violation,
        pa.max_h_d,
        pa.relative_violation()
    );
    let peak = traj.peak_delta();
    for (label, v) in traj.c_labels.iter().zip(peak.iter()) {
        let _ = writeln!(out, "peak |delta_{label}| = {v:.6e}");
    }
    for (label, rows) in &traj.c_components {
        let m = (0..traj.len())
            .map(|k| traj.delta(k).rows(rows.start, rows.len()).norm())
            .fold(0.0, f64::max);
        let _ = writeln!(out, "peak |delta_norm_{label}| = {m:.6e}");
    }
    let last = traj.len() - 1;
    let _ = writeln!(out, "terminal |z_c - r| = {:.6e}", traj.delta(last).norm());
    ok
}

fn cmd_simulate(args: &CommonArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = load(args)?;
    let (ctrl, _) = load_controller(&cfg, args)?;
    let sim = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| Error::Config {
            path: "simulation".into(),
            message: "section required for simulate".into(),
        })?;
    let p = &cfg.problem;
    let gamma = if args.gamma.is_some() { p.gamma } else { ctrl.gains.gamma };
    let traj = simulate(&p.model, &ctrl, &p.d_map, &sim.disturbance, sim.t_final, sim.dt, &sim.q0, &sim.qdot0)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(|source| Error::Io {
        path: "trajectory.csv".into(),
        source,
    })?;
    write_file(&args.out.join("trajectory.csv"), &csv)?;

    let mut text = String::new();
    let _ = writeln!(text, "simulation audit");
    let _ = writeln!(text, "gamma = {gamma:.16e}");
    let _ = writeln!(text, "\n[trajectory]");
    let mut ok = audit_summary(&traj, &mut text);
    let zd_start = p.d_map.eval(&p.model, &sim.q0)?;
    match l2_gain_audit(&traj, &p.weights, &zd_start, gamma) {
        Ok(a) => {
            let _ = writeln!(text, "l2: lhs = {:.6e}, rhs = {:.6e}, satisfied = {}", a.lhs, a.rhs, a.satisfied);
        }
        Err(e) => {
            let _ = writeln!(text, "l2: {e}");
        }
    }
    if let Some(audit) = &sim.audit {
        let q = &p.poses[audit.pose_index];
        let mut pulse_ctrl = ctrl.clone();
        pulse_ctrl.gains.reference = p.c_map.eval(&p.model, q)?;
        let pulse = simulate(&p.model, &pulse_ctrl, &p.d_map, &audit.pulse, audit.t_final, sim.dt, q, &nalgebra::DVector::zeros(q.len()))?;
        let zd_star = p.d_map.eval(&p.model, q)?;
        let a = l2_gain_audit(&pulse, &p.weights, &zd_star, gamma)?;
        let pa = passivity_audit(&pulse);
        let _ = writeln!(text, "\n[pulse at pose {}]", audit.pose_index);
        let _ = writeln!(text, "l2: lhs = {:.6e}, rhs = {:.6e}, satisfied = {}", a.lhs, a.rhs, a.satisfied);
        let _ = writeln!(text, "passivity: relative = {:.6e}, holds = {}", pa.relative_violation(), pa.holds(PASSIVITY_TOL));
        ok &= a.satisfied && pa.holds(PASSIVITY_TOL);
    }
    write_file(&args.out.join("audit.txt"), text.as_bytes())?;
    let _ = write!(stdout, "{text}");
    let _ = writeln!(stdout, "trajectory: {}", args.out.join("trajectory.csv").display());
    Ok(if ok { EXIT_OK } else { EXIT_UNCERTIFIED })
}

fn cmd_verify(args: &CommonArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = load(args)?;
    let (ctrl, cert) = load_controller(&cfg, args)?;
    let p = &cfg.problem;
    let gains = &ctrl.gains;
    let gamma = if args.gamma.is_some() { p.gamma } else { gains.gamma };
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput("gains file has no valid gamma; pass --gamma".into()));
    }
    let lins = p.linearize()?;
    let mut text = String::new();
    let _ = writeln!(text, "verification");
    let _ = writeln!(text, "mode = {}", gains.mode);
    let _ = writeln!(text, "gamma = {gamma:.16e}");
    let mut certified = true;

    match gains.mode {
        SynthesisMode::Lmi2 => {
            let v = gains.lemma1();
            let _ = writeln!(
                text,
                "structure: diagonal = {}, min_k = {:.6e}, min_b = {:.6e}, holds = {}",
                v.max_off_diagonal == 0.0,
                v.min_stiffness,
                v.min_damping,
                v.holds()
            );
            let _ = writeln!(text, "passivity: {}", if v.holds() { "claimed" } else { "not established" });
            certified &= v.holds();
        }
        SynthesisMode::Lmi1 => {
            let _ = writeln!(text, "passivity: not claimed (full state feedback)");
        }
    }

    let p_matrix = match &cert {
        Some(c) => {
            let mut sys_problem = p.clone();
            sys_problem.gamma = gamma;
            sys_problem.mode = gains.mode;
            let system = sys_problem.build_system(&lins)?;
            let layout = system.layout.unwrap_or(LmiVariableLayout::full(gains.n()));
            let x = layout.encode(&c.q, &c.l);
            let slacks = revalidate_lmi(&system, &x)?;
            for s in &slacks {
                let _ = writeln!(text, "lmi {}: slack = {:.6e}, ok = {}", s.name, s.slack, s.is_satisfied());
                certified &= s.is_satisfied();
            }
            let extracted = extract_gains(&c.q, &c.l, gains.mode)?;
            let mismatch = (&extracted.k - &gains.k_matrix).amax();
            let consistent = mismatch <= 1e-9 * gains.k_matrix.amax().max(1.0);
            let _ = writeln!(text, "certificate: max |LQ^-1 - K| = {mismatch:.3e}, consistent = {consistent}");
            certified &= consistent;
            extracted.p
        }
        None => {
            let _ = writeln!(text, "certificate: absent (LMI slacks and storage check skipped)");
            DMatrix::identity(2 * gains.n(), 2 * gains.n())
        }
    };

    let poses = verify_poses(&lins, &gains.k_matrix, &p_matrix, gamma, p.grid_points)?;
    for pv in &poses {
        let _ = writeln!(text, "\n[pose {}]", pv.index);
        let _ = writeln!(text, "spectral_abscissa = {:.6e}, hurwitz = {}", pv.spectral_abscissa, pv.spectral_abscissa < 0.0);
        match pv.hinf_norm {
            Some(h) => {
                let _ = writeln!(text, "hinf_norm = {h:.10e}, bound = {}", h <= gamma * (1.0 + 1e-6));
            }
            None => {
                let _ = writeln!(text, "hinf_norm = unavailable (closed loop not Hurwitz)");
            }
        }
        if let Some(g) = pv.hinf_norm_grid {
            let _ = writeln!(text, "hinf_norm_grid = {g:.10e}");
        }
        if let Some(d) = pv.oracle_disagreement() {
            let _ = writeln!(text, "oracle_disagreement = {d:.3e}, agree = {}", d < 0.01);
        }
        if cert.is_some() {
            let _ = writeln!(text, "storage: max_eigenvalue = {:.6e}, holds = {}", pv.storage_max_eigenvalue, pv.storage_holds);
            certified &= pv.storage_holds;
        }
        certified &= pv.certified(gamma);
    }
    let _ = writeln!(text, "\ncertified = {certified}");
    if args.out != Path::new(".") {
        write_file(&args.out.join("verify.txt"), text.as_bytes())?;
    }
    let _ = write!(stdout, "{text}");
    Ok(if certified { EXIT_OK } else { EXIT_UNCERTIFIED })
}
