//! Experiment runs: traces, snapshots, summaries and blow-up certificates.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{
    certify, domination_check, domination_margin, phi_coefficients, phi_min, subsolution_field,
    Certificate, CertificateOutcome,
};
use crate::config::{parse_config, ConfigError, ExperimentConfig};
use crate::driver::{LevelCrossing, SchemeParams, Simulation, StepReport, Termination, BLOWUP_LEVELS};
use crate::error::SchemeError;
use crate::mesh::NodalField;

pub const TRACE_HEADER: &str = "t,dt,sup_u,sup_v,l1_v,s_minus,s_plus,lemma23_slack,eq210_slack";
pub const TRACE_FILE: &str = "trace.csv";
pub const VIOLATIONS_FILE: &str = "violations.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Scheme(#[from] SchemeError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl ExperimentError {
    /// 2 for bad input, 3 for an aborted run, 4 for file system failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Scheme(SchemeError::Monitor { .. }) => 3,
            ExperimentError::Scheme(
                SchemeError::InvalidParameter(_)
                | SchemeError::InvalidGrid(_)
                | SchemeError::Regime { .. }
                | SchemeError::ZeroField,
            ) => 2,
            ExperimentError::Scheme(_) => 3,
            ExperimentError::Io { .. } => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Floats in output files: 17 significant digits, enough to round-trip.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_config(&text)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub termination: Termination,
    pub steps: usize,
    pub final_time: f64,
    pub m: f64,
    pub p: f64,
    pub q: f64,
    pub initial_sup: f64,
    pub final_sup: f64,
    /// Guaranteed existence time `T1`.
    pub lifetime: f64,
    pub threshold: f64,
    pub blowup_time: Option<f64>,
    pub crossings: Vec<LevelCrossing>,
    /// Steps that recorded at least one monitor violation.
    pub violation_steps: usize,
    pub certificate: Option<CertificateOutcome>,
}

impl RunSummary {
    /// `key = value` lines, in a fixed order.
    pub fn to_key_values(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), num);
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("termination", self.termination.to_string());
        kv("blowup_detected", (self.termination == Termination::BlowUp).to_string());
        kv("steps", self.steps.to_string());
        kv("final_time", num(self.final_time));
        kv("m", num(self.m));
        kv("p", num(self.p));
        kv("q", num(self.q));
        kv("initial_sup", num(self.initial_sup));
        kv("final_sup", num(self.final_sup));
        kv("T1", num(self.lifetime));
        kv("blowup_threshold", num(self.threshold));
        kv("blowup_time", opt(self.blowup_time));
        for (factor, c) in BLOWUP_LEVELS.iter().zip(&self.crossings) {
            kv(&format!("crossing_{factor:e}"), opt(c.time));
        }
        kv("violation_steps", self.violation_steps.to_string());
        match &self.certificate {
            None => kv("certificate", "not_requested".into()),
            Some(CertificateOutcome::NotFound { delta }) => {
                kv("certificate", "none".into());
                kv("delta", num(*delta));
            }
            Some(CertificateOutcome::Found(c)) => {
                kv("certificate", "found".into());
                for (k, v) in certificate_fields(c) {
                    kv(k, num(v));
                }
            }
        }
        out
    }
}

fn certificate_fields(c: &Certificate) -> [(&'static str, f64); 9] {
    [
        ("x0", c.plateau.x0),
        ("eps", c.plateau.eps),
        ("rho", c.plateau.rho),
        ("lambda", c.params.lambda),
        ("a", c.params.a),
        ("T", c.params.blowup_time),
        ("delta", c.params.delta()),
        ("phi_min", c.report.phi_min),
        ("T_star", c.t_star),
    ]
}

/// Human-readable certificate report.
pub fn certificate_report(outcome: &CertificateOutcome) -> String {
    match outcome {
        CertificateOutcome::Found(c) => {
            let mut out = String::from("certificate found\n");
            for (k, v) in certificate_fields(c) {
                let _ = writeln!(out, "{k} = {}", num(v));
            }
            out
        }
        CertificateOutcome::NotFound { delta } => {
            format!("no certificate at this mesh\ndelta = {}\n", num(*delta))
        }
    }
}

/// Runs the certificate search on the config's initial data.
pub fn certify_blowup(config: &ExperimentConfig) -> Result<CertificateOutcome, ExperimentError> {
    let initial = config.initial_field()?;
    Ok(certify(&initial, config.m, config.q)?)
}

fn trace_row(r: &StepReport) -> String {
    let eq210 = r.eq210_slack.map_or_else(String::new, num);
    format!(
        "{},{},{},{},{},{},{},{},{}",
        num(r.t),
        num(r.dt),
        num(r.sup_u),
        num(r.sup_v),
        num(r.l1_v),
        num(r.s_minus),
        num(r.s_plus),
        num(r.lemma23_slack),
        eq210,
    )
}

/// Writes `x,u` rows, closing the support with zeros at both ends.
pub fn write_snapshot(field: &NodalField, path: &Path) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let grid = field.grid();
    let mut rows = vec![(grid.left_end(), 0.0)];
    rows.extend(grid.nodes().zip(field.values().iter().copied()));
    rows.push((grid.right_end(), 0.0));
    let mut text = String::from("x,u\n");
    for (x, u) in rows {
        let _ = writeln!(text, "{},{}", num(x), num(u));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_{t}.csv")
}

struct TraceWriter {
    trace: BufWriter<File>,
    violations: BufWriter<File>,
    trace_path: PathBuf,
    violations_path: PathBuf,
}

impl TraceWriter {
    fn create(dir: &Path) -> Result<Self, ExperimentError> {
        let trace_path = dir.join(TRACE_FILE);
        let violations_path = dir.join(VIOLATIONS_FILE);
        let mut trace = BufWriter::new(File::create(&trace_path).map_err(io_err(&trace_path))?);
        let mut violations =
            BufWriter::new(File::create(&violations_path).map_err(io_err(&violations_path))?);
        writeln!(trace, "{TRACE_HEADER}").map_err(io_err(&trace_path))?;
        writeln!(violations, "step,t,violation").map_err(io_err(&violations_path))?;
        Ok(Self { trace, violations, trace_path, violations_path })
    }

    fn push(&mut self, r: &StepReport) -> Result<(), ExperimentError> {
        writeln!(self.trace, "{}", trace_row(r)).map_err(io_err(&self.trace_path))?;
        for v in &r.violations {
            writeln!(self.violations, "{},{},\"{v}\"", r.step, num(r.t))
                .map_err(io_err(&self.violations_path))?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<(), ExperimentError> {
        self.trace.flush().map_err(io_err(&self.trace_path))?;
        self.violations.flush().map_err(io_err(&self.violations_path))
    }
}

/// Tolerance for treating the current time as a scheduled snapshot time.
fn at_time(t: f64, target: f64) -> bool {
    (t - target).abs() <= 1e-12 * target.abs().max(1.0)
}

/// Runs the configured simulation, writing the trace, the snapshots and the
/// summary into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let initial = config.initial_field()?;
    let params = config.scheme_params()?;
    let certificate = if config.certify {
        Some(certify(&initial, config.m, config.q)?)
    } else {
        None
    };

    let mut times = config.snapshots.times.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut pending = times.into_iter().peekable();
    let every = config.snapshots.every;

    let mut sim = Simulation::new(initial, params)?;
    let mut trace = TraceWriter::create(out_dir)?;
    let mut violation_steps = 0;
    if every.is_some() {
        write_snapshot(sim.field(), &out_dir.join(snapshot_name(0.0)))?;
    }
    loop {
        while let Some(&ts) = pending.peek() {
            if !at_time(sim.time(), ts) {
                break;
            }
            if !(every.is_some() && sim.time() == 0.0) {
                write_snapshot(sim.field(), &out_dir.join(snapshot_name(ts)))?;
            }
            pending.next();
        }
        let cap = pending.peek().map(|&ts| ts - sim.time());
        let report = match sim.step(cap) {
            Ok(Some(r)) => r,
            Ok(None) => break,
            Err(e) => {
                trace.finish()?;
                return Err(e.into());
            }
        };
        trace.push(&report)?;
        if !report.violations.is_empty() {
            violation_steps += 1;
        }
        if let Some(k) = every {
            let on_schedule = pending.peek().is_some_and(|&ts| at_time(report.t, ts));
            if sim.steps() % k == 0 && !on_schedule {
                write_snapshot(sim.field(), &out_dir.join(snapshot_name(report.t)))?;
            }
        }
    }
    trace.finish()?;

    let summary = RunSummary {
        termination: sim.termination().unwrap_or(Termination::Horizon),
        steps: sim.steps(),
        final_time: sim.time(),
        m: config.m,
        p: config.p,
        q: config.q,
        initial_sup: sim.initial_sup(),
        final_sup: sim.field().sup_norm(),
        lifetime: sim.lifetime(),
        threshold: sim.threshold(),
        blowup_time: (sim.termination() == Some(Termination::BlowUp)).then(|| sim.time()),
        crossings: sim.crossings().to_vec(),
        violation_steps,
        certificate,
    };
    let path = out_dir.join(SUMMARY_FILE);
    fs::write(&path, summary.to_key_values()).map_err(io_err(&path))?;
    Ok(summary)
}

/// Outcome of running the scheme alongside a certified subsolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedRun {
    pub steps: usize,
    pub termination: Option<Termination>,
    pub final_time: f64,
    /// Whether the subsolution stayed below the solution at every step.
    pub dominated: bool,
    /// Smallest `min (u - u_hat)` relative to `||u||_inf`.
    pub min_relative_margin: f64,
    /// Smallest per-step minimum of `Phi_n` over `[0, 1]`.
    pub min_phi: f64,
    pub blowup_time: Option<f64>,
}

/// Steps the scheme from `initial` with steps capped so that the subsolution
/// analysis applies, checking domination and the sign of `Phi_n` after every
/// step. Stops at the run's termination or when the subsolution expires.
pub fn track_subsolution(
    initial: NodalField,
    params: SchemeParams,
    certificate: &Certificate,
) -> Result<TrackedRun, SchemeError> {
    let sub = &certificate.params;
    let mu_bound = sub.delta();
    let lambda_pow_q = sub.lambda.powf(sub.q);
    let mut sim = Simulation::new(initial, params)?;
    let mut run = TrackedRun {
        steps: 0,
        termination: None,
        final_time: 0.0,
        dominated: true,
        min_relative_margin: f64::INFINITY,
        min_phi: f64::INFINITY,
        blowup_time: None,
    };
    let check = |field: &NodalField, t: f64, run: &mut TrackedRun| -> Result<(), SchemeError> {
        let lower = subsolution_field(sub, t)?;
        run.dominated &= domination_check(&lower, field);
        let scale = field.sup_norm().max(f64::MIN_POSITIVE);
        run.min_relative_margin = run.min_relative_margin.min(domination_margin(&lower, field) / scale);
        Ok(())
    };
    check(sim.field(), 0.0, &mut run)?;
    loop {
        let t = sim.time();
        let cap = sub.max_step(t, mu_bound);
        let Some(report) = sim.step(Some(cap))? else {
            break;
        };
        let (a, b, c) = phi_coefficients(sub, t, report.dt);
        run.min_phi = run.min_phi.min(phi_min(a, lambda_pow_q, b, c, sub.q));
        if report.t >= sub.blowup_time {
            break;
        }
        check(sim.field(), report.t, &mut run)?;
    }
    run.steps = sim.steps();
    run.termination = sim.termination();
    run.final_time = sim.time();
    run.blowup_time = (run.termination == Some(Termination::BlowUp)).then(|| sim.time());
    Ok(run)
}

#[derive(Debug)]
pub struct SweepEntry {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub result: Result<RunSummary, ExperimentError>,
}

/// Runs every `*.cfg` in `dir` concurrently, each into `out_root/<stem>`.
/// Entries come back sorted by config path.
pub fn sweep(dir: &Path, out_root: &Path) -> Result<Vec<SweepEntry>, ExperimentError> {
    let mut configs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    configs.sort();
    Ok(configs
        .into_par_iter()
        .map(|config| {
            let stem = config.file_stem().unwrap_or_default().to_os_string();
            let out_dir = out_root.join(stem);
            let result = read_config(&config).and_then(|c| run_experiment(&c, &out_dir));
            SweepEntry { config, out_dir, result }
        })
        .collect())
}
