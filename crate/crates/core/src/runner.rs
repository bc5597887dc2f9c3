//! Experiment orchestration: single runs, parameter sweeps, cutoff checks and
//! the on-disk run directory.
//!
//! A run directory holds
//!
//! - `config.echo`: the effective configuration as `key = value` lines; it
//!   parses back to the same configuration,
//! - `frames.csv`: one row per sampled time (see [`crate::observables::csv_header`]),
//! - `summary.json`: detector result, fate label, convergence report and
//!   integrator diagnostics,
//! - `manifest.json`: package name, version and the list of files.
//!
//! A sweep directory holds one run directory per value, named `<key>=<value>`,
//! plus the aggregated `sweep.csv`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianOperator, Variant};
use crate::observables::{frames_to_csv, measure_frame, Fate, ObservableFrame};
use crate::oracle::{dense_assemble, kron_assemble};
use crate::params::{parse_pairs, SystemParams};
use crate::propagator::{evolve_and_sample, krylov_step, PropagationPlan};
use crate::sbt::{detect_sbt, fate_at_tau, SbtKind, SbtResult};
use crate::semiclassical::{run_semiclassical, DEFAULT_DT};
use crate::space::{build_initial_state, string_spins, HilbertSpace, PhononInit};

pub const DEFAULT_MEMORY_BUDGET_GIB: f64 = 8.0;
/// Keys a sweep may vary.
pub const SWEEP_KEYS: [&str; 5] = ["g", "omega0", "h_x", "lambda", "n_max"];
/// Configuration keys beyond the physical parameters.
pub const RUN_KEYS: [&str; 6] = [
    "backend",
    "memory_budget_gib",
    "sc_dt",
    "paired_convergence",
    "sweep_key",
    "sweep_values",
];

const GIB: f64 = (1u64 << 30) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Full,
    Semiclassical,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Full => "full",
            Backend::Semiclassical => "semiclassical",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Backend::Full),
            "semiclassical" => Ok(Backend::Semiclassical),
            other => Err(format!("expected `full` or `semiclassical`, got `{other}`")),
        }
    }
}

/// A parameter axis for [`run_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Everything a run needs: physical parameters plus backend settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub backend: Backend,
    pub memory_budget_gib: f64,
    /// RK4 step of the semiclassical backend.
    pub sc_dt: f64,
    /// Repeat the run at `n_max + 1` and report the largest deviation.
    pub paired_convergence: bool,
    pub sweep: Option<SweepAxis>,
}

impl RunConfig {
    pub fn new(params: SystemParams) -> Self {
        Self {
            params,
            backend: Backend::Full,
            memory_budget_gib: DEFAULT_MEMORY_BUDGET_GIB,
            sc_dt: DEFAULT_DT,
            paired_convergence: false,
            sweep: None,
        }
    }

    /// Builds a configuration from ordered pairs; later pairs win, so
    /// overrides are simply appended.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let mut physical = Vec::new();
        let mut cfg = RunConfig::new(SystemParams::default());
        let (mut sweep_key, mut sweep_values) = (None, None);
        for (k, v) in pairs {
            let (k, v) = (k.as_ref(), v.as_ref().trim());
            match k {
                "backend" => cfg.backend = v.parse().map_err(|e| Error::config(k, e))?,
                "memory_budget_gib" => cfg.memory_budget_gib = parse_f64(k, v)?,
                "sc_dt" => cfg.sc_dt = parse_f64(k, v)?,
                "paired_convergence" => {
                    cfg.paired_convergence = v
                        .parse()
                        .map_err(|_| Error::config(k, format!("expected true or false, got `{v}`")))?
                }
                "sweep_key" => sweep_key = Some(v.to_string()),
                "sweep_values" => {
                    sweep_values = Some(
                        v.split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(String::from)
                            .collect::<Vec<_>>(),
                    )
                }
                _ => physical.push((k, v)),
            }
        }
        cfg.params = SystemParams::from_pairs(&physical)?;
        cfg.sweep = match (sweep_key, sweep_values) {
            (None, None) => None,
            (Some(key), values) => Some(SweepAxis {
                key,
                values: values.unwrap_or_default(),
            }),
            (None, Some(_)) => return Err(Error::config("sweep_key", "sweep_values given without sweep_key")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// Reads a config file and appends `overrides`.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::config("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        let mut pairs = parse_pairs(&text)?;
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(&pairs)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.memory_budget_gib > 0.0 && self.memory_budget_gib.is_finite()) {
            return Err(Error::config("memory_budget_gib", "must be positive"));
        }
        if !(self.sc_dt > 0.0 && self.sc_dt.is_finite()) {
            return Err(Error::config("sc_dt", "must be positive"));
        }
        if let Some(axis) = &self.sweep {
            if !SWEEP_KEYS.contains(&axis.key.as_str()) {
                return Err(Error::config(
                    "sweep_key",
                    format!("`{}` is not one of {}", axis.key, SWEEP_KEYS.join(", ")),
                ));
            }
        }
        Ok(())
    }

    /// Effective configuration, physical keys first.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs = self.params.to_pairs();
        pairs.push(("backend", self.backend.to_string()));
        pairs.push(("memory_budget_gib", self.memory_budget_gib.to_string()));
        pairs.push(("sc_dt", self.sc_dt.to_string()));
        pairs.push(("paired_convergence", self.paired_convergence.to_string()));
        if let Some(axis) = &self.sweep {
            pairs.push(("sweep_key", axis.key.clone()));
            pairs.push(("sweep_values", axis.values.join(",")));
        }
        pairs
    }

    /// Body of `config.echo`.
    pub fn echo(&self) -> String {
        let mut out = String::from("# effective configuration\n");
        for (k, v) in self.to_pairs() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Bytes the full backend needs: state, Krylov basis and two work vectors.
    pub fn full_memory_bytes(&self) -> Result<f64> {
        let dim = HilbertSpace::for_params(&self.params)?.dim() as f64;
        Ok(dim * 16.0 * (self.params.krylov_dim as f64 + 3.0))
    }

    fn check_memory(&self) -> Result<()> {
        let space = HilbertSpace::for_params(&self.params)?;
        let need = self.full_memory_bytes()?;
        if need > self.memory_budget_gib * GIB {
            return Err(Error::Capacity(format!(
                "dim = {} with krylov_dim = {} needs {:.2} GiB, above memory_budget_gib = {}",
                space.dim(),
                self.params.krylov_dim,
                need / GIB,
                self.memory_budget_gib
            )));
        }
        Ok(())
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub n_max_used: usize,
    /// Largest `n_mean + 2 n_std` over sites and times.
    pub max_occupation: f64,
    /// `n_max > max_occupation`.
    pub pass: bool,
    /// Largest absolute deviation of any observable against a run at `n_max + 1`.
    pub paired_deviation: Option<f64>,
}

pub fn check_convergence(frames: &[ObservableFrame], n_max: usize) -> ConvergenceReport {
    let max_occupation = frames
        .iter()
        .flat_map(|f| f.n_mean.iter().zip(&f.n_std).map(|(m, s)| m + 2.0 * s))
        .fold(0.0, f64::max);
    ConvergenceReport {
        n_max_used: n_max,
        max_occupation,
        pass: n_max as f64 > max_occupation,
        paired_deviation: None,
    }
}

/// Largest absolute difference over every observable of time-aligned frames.
pub fn max_frame_deviation(a: &[ObservableFrame], b: &[ObservableFrame]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("{} frames vs {} frames", a.len(), b.len())));
    }
    let mut dev: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        if (x.t - y.t).abs() > 1e-9 {
            return Err(Error::domain(format!("frame times differ: {} vs {}", x.t, y.t)));
        }
        let scalars = [
            (x.energy, y.energy),
            (x.d_in, y.d_in),
            (x.d_bd, y.d_bd),
            (x.delta_in, y.delta_in),
            (x.delta_bd, y.delta_bd),
            (x.s_cr, y.s_cr),
            (x.s_ed, y.s_ed),
        ];
        for (u, v) in scalars {
            dev = dev.max((u - v).abs());
        }
        for (u, v) in [
            (&x.d_bond, &y.d_bond),
            (&x.sigma_z, &y.sigma_z),
            (&x.n_mean, &y.n_mean),
            (&x.n_std, &y.n_std),
        ] {
            for (p, q) in u.iter().zip(v) {
                dev = dev.max((p - q).abs());
            }
        }
    }
    Ok(dev)
}

/// Integrator diagnostics common to both backends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub steps: usize,
    /// Hamiltonian applications; full backend only.
    pub matvecs: Option<usize>,
    pub energy0: f64,
    pub max_norm_drift: f64,
    pub max_rel_energy_drift: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub backend: Backend,
    pub frames: Vec<ObservableFrame>,
    pub sbt: SbtResult,
    pub fate: Option<Fate>,
    pub convergence: ConvergenceReport,
    pub diagnostics: Diagnostics,
}

/// Frames and diagnostics of one evolution, before detection.
pub fn simulate(cfg: &RunConfig) -> Result<(Vec<ObservableFrame>, Diagnostics)> {
    cfg.validate()?;
    let p = &cfg.params;
    match cfg.backend {
        Backend::Full => {
            cfg.check_memory()?;
            let h = HamiltonianOperator::bare(p)?;
            let psi = build_initial_state(p, &PhononInit::Vacuum)?;
            let mut frames = Vec::new();
            let (report, _) = evolve_and_sample(&h, psi, &PropagationPlan::from_params(p), |s| {
                frames.push(measure_frame(s.state, p, s.t, s.energy)?);
                Ok(())
            })?;
            Ok((
                frames,
                Diagnostics {
                    steps: report.steps,
                    matvecs: Some(report.matvecs),
                    energy0: report.energy0,
                    max_norm_drift: report.max_norm_drift,
                    max_rel_energy_drift: report.max_rel_energy_drift,
                },
            ))
        }
        Backend::Semiclassical => {
            let spins = string_spins(p.sites, p.left, p.width)?;
            let alpha = vec![Complex64::new(0.0, 0.0); p.sites];
            let run = run_semiclassical(p, &spins, &alpha, cfg.sc_dt)?;
            Ok((
                run.frames,
                Diagnostics {
                    steps: run.report.steps,
                    matvecs: None,
                    energy0: run.report.energy0,
                    max_norm_drift: run.report.max_norm_drift,
                    max_rel_energy_drift: run.report.max_rel_energy_drift,
                },
            ))
        }
    }
}

/// Evolution, detection at `params.lambda`, fate at τ and cutoff check.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    let (frames, diagnostics) = simulate(cfg)?;
    let sbt = detect_sbt(&frames, cfg.params.lambda)?;
    let fate = fate_at_tau(&sbt, &frames, cfg.params.width);
    let mut convergence = check_convergence(&frames, cfg.params.n_max);
    if cfg.paired_convergence && cfg.backend == Backend::Full {
        let mut bigger = cfg.clone();
        bigger.params.n_max += 1;
        bigger.paired_convergence = false;
        let (paired, _) = simulate(&bigger)?;
        convergence.paired_deviation = Some(max_frame_deviation(&frames, &paired)?);
    }
    Ok(RunOutcome {
        backend: cfg.backend,
        frames,
        sbt,
        fate,
        convergence,
        diagnostics,
    })
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    backend: Backend,
    lambda: f64,
    tau: Option<f64>,
    kind: SbtKind,
    fate_at_tau: Option<Fate>,
    band_margin: f64,
    frames: usize,
    final_t: f64,
    convergence: &'a ConvergenceReport,
    diagnostics: &'a Diagnostics,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    package: &'a str,
    version: &'a str,
    files: &'a [&'a str],
}

pub const RUN_FILES: [&str; 4] = ["config.echo", "frames.csv", "summary.json", "manifest.json"];

/// Writes the run directory, creating it if needed.
pub fn write_run_dir(dir: &Path, cfg: &RunConfig, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.echo"), cfg.echo())?;
    fs::write(
        dir.join("frames.csv"),
        frames_to_csv(&outcome.frames, &outcome.backend.to_string()),
    )?;
    let summary = Summary {
        backend: outcome.backend,
        lambda: cfg.params.lambda,
        tau: outcome.sbt.tau,
        kind: outcome.sbt.kind,
        fate_at_tau: outcome.fate,
        band_margin: outcome.sbt.band_margin,
        frames: outcome.frames.len(),
        final_t: outcome.frames.last().map_or(0.0, |f| f.t),
        convergence: &outcome.convergence,
        diagnostics: &outcome.diagnostics,
    };
    fs::write(dir.join("summary.json"), to_json(&summary)? + "\n")?;
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        files: &RUN_FILES,
    };
    fs::write(dir.join("manifest.json"), to_json(&manifest)? + "\n")?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub tau: Option<f64>,
    pub kind: Option<SbtKind>,
    pub fate: Option<Fate>,
    pub convergence_pass: Option<bool>,
    pub error: Option<String>,
    /// Reused from an existing run directory with the same configuration.
    pub reused: bool,
}

/// Configurations of the individual sweep points, one per value. Values that
/// do not form a valid configuration yield an error in their slot.
pub fn sweep_configs(cfg: &RunConfig) -> Result<Vec<(String, Result<RunConfig>)>> {
    let axis = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep_key", "no sweep axis configured"))?;
    let points: Vec<_> = axis
        .values
        .iter()
        .map(|v| {
            let mut point = cfg.clone();
            point.sweep = None;
            let r = point
                .params
                .set(&axis.key, v)
                .and_then(|_| point.validate())
                .map(|_| point);
            (v.clone(), r)
        })
        .collect();
    if !points.iter().any(|(_, r)| r.is_ok()) {
        return Err(Error::config(
            "sweep_values",
            format!("no valid value for `{}` in [{}]", axis.key, axis.values.join(", ")),
        ));
    }
    Ok(points)
}

fn point_dir(out: &Path, key: &str, value: &str) -> PathBuf {
    out.join(format!("{key}={value}"))
}

/// Reads τ, kind and fate back from a finished run directory whose echo
/// matches `cfg`.
fn reuse_point(dir: &Path, cfg: &RunConfig) -> Option<SweepRow> {
    let echo = fs::read_to_string(dir.join("config.echo")).ok()?;
    if echo != cfg.echo() {
        return None;
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).ok()?).ok()?;
    let kind = match summary.get("kind")?.as_str()? {
        "crossing-detected" => SbtKind::CrossingDetected,
        "none-in-window" => SbtKind::NoneInWindow,
        _ => return None,
    };
    let fate = match summary.get("fate_at_tau")?.as_str() {
        Some("breaking") => Some(Fate::Breaking),
        Some("contraction") => Some(Fate::Contraction),
        Some("ambiguous") => Some(Fate::Ambiguous),
        _ => None,
    };
    Some(SweepRow {
        value: String::new(),
        tau: summary.get("tau")?.as_f64(),
        kind: Some(kind),
        fate,
        convergence_pass: summary.get("convergence")?.get("pass")?.as_bool(),
        error: None,
        reused: true,
    })
}

/// Runs every sweep point into its own subdirectory of `out` and writes
/// `sweep.csv`. Failed points are recorded and the sweep continues. Points
/// whose directory already holds a finished run with the same configuration
/// are not recomputed.
pub fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<Vec<SweepRow>> {
    let points = sweep_configs(cfg)?;
    let key = &cfg.sweep.as_ref().expect("checked by sweep_configs").key;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.echo"), cfg.echo())?;
    let mut rows = Vec::with_capacity(points.len());
    for (value, point) in points {
        let dir = point_dir(out, key, &value);
        let row = match point {
            Err(e) => failed_row(&value, &e),
            Ok(point) => match reuse_point(&dir, &point) {
                Some(row) => SweepRow { value: value.clone(), ..row },
                None => match run_experiment(&point).and_then(|o| {
                    write_run_dir(&dir, &point, &o)?;
                    Ok(o)
                }) {
                    Ok(o) => SweepRow {
                        value: value.clone(),
                        tau: o.sbt.tau,
                        kind: Some(o.sbt.kind),
                        fate: o.fate,
                        convergence_pass: Some(o.convergence.pass),
                        error: None,
                        reused: false,
                    },
                    Err(e) => failed_row(&value, &e),
                },
            },
        };
        rows.push(row);
    }
    fs::write(out.join("sweep.csv"), sweep_csv(key, &rows))?;
    Ok(rows)
}

fn failed_row(value: &str, e: &Error) -> SweepRow {
    SweepRow {
        value: value.to_string(),
        tau: None,
        kind: None,
        fate: None,
        convergence_pass: None,
        error: Some(e.to_string()),
        reused: false,
    }
}

/// `key,tau,kind,fate,convergence_pass,error`, one row per value.
pub fn sweep_csv(key: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{key},tau,kind,fate,convergence_pass,error\n");
    for r in rows {
        let kind = r.kind.map(|k| match k {
            SbtKind::CrossingDetected => "crossing-detected",
            SbtKind::NoneInWindow => "none-in-window",
        });
        let error = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        out.push_str(&format!(
            "{},{},{},{},{},\"{}\"\n",
            r.value,
            r.tau.map_or(String::new(), |t| format!("{t:.16e}")),
            kind.unwrap_or(""),
            r.fate.map_or(String::new(), |f| f.to_string()),
            r.convergence_pass.map_or(String::new(), |b| b.to_string()),
            error
        ));
    }
    out
}

/// Krylov propagation checked against dense exponentiation, plus the
/// matrix-free operator against an independent Kronecker assembly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub dim: usize,
    pub t: f64,
    pub propagation_error: f64,
    pub assembly_error: f64,
    pub hermiticity_defect: f64,
}

pub fn oracle_check(params: &SystemParams) -> Result<OracleCheck> {
    let h = HamiltonianOperator::bare(params)?;
    let dense = dense_assemble(&h)?;
    let kron = kron_assemble(params, Variant::Bare)?;
    let psi0 = build_initial_state(params, &PhononInit::Vacuum)?;
    let exact = dense.dense_evolve(&psi0, params.t_max)?;
    let mut psi = psi0;
    let n = (params.t_max / params.dt_step).round().max(1.0) as usize;
    let dt = params.t_max / n as f64;
    if params.t_max > 0.0 {
        for _ in 0..n {
            psi = krylov_step(&h, &psi, dt, params.krylov_dim, params.krylov_tol)?;
        }
    }
    Ok(OracleCheck {
        dim: h.space().dim(),
        t: params.t_max,
        propagation_error: psi.max_abs_diff(&exact),
        assembly_error: dense.max_abs_diff(&kron),
        hermiticity_defect: dense.hermiticity_defect(),
    })
}
