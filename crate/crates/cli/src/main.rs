//! `stringbreak` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage, config or domain errors (the
//! message names the offending key or path), 2 when a problem exceeds a
//! capacity limit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use stringbreak_core::params::parse_override;
use stringbreak_core::runner::{
    oracle_check, run_experiment, run_sweep, write_run_dir, RunOutcome,
};
use stringbreak_core::{Backend, Error, RunConfig};

#[derive(Parser)]
#[command(name = "stringbreak", version, about = "Ising-Holstein string-breaking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the string state, detect τ and write a run directory.
    Run(Common),
    /// One run per `sweep_values` entry of `sweep_key`, plus sweep.csv.
    Sweep(Common),
    /// `run` with the coherent-state backend.
    Semiclassical(Common),
    /// `run` plus a paired run at n_max + 1.
    Convergence(Common),
    /// Compare Krylov propagation with dense exponentiation (small systems).
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: ./runs/run-<unix seconds>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key; applied after the file, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_parser = ["full", "semiclassical"])]
    backend: Option<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut pairs = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(b) = &self.backend {
            pairs.push(("backend".to_string(), b.clone()));
        }
        RunConfig::load(&self.config, &pairs)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            Path::new("runs").join(format!("run-{secs}"))
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_capacity() { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(c) => single(&c, c.load()?),
        Command::Semiclassical(c) => {
            let mut cfg = c.load()?;
            cfg.backend = Backend::Semiclassical;
            single(&c, cfg)
        }
        Command::Convergence(c) => {
            let mut cfg = c.load()?;
            cfg.paired_convergence = true;
            single(&c, cfg)
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let out = c.out_dir();
            let rows = run_sweep(&cfg, &out)?;
            let key = &cfg.sweep.as_ref().expect("sweep checked by run_sweep").key;
            for r in &rows {
                match &r.error {
                    Some(e) => println!("{key} = {}: failed: {e}", r.value),
                    None => println!("{key} = {}: tau = {}, fate = {}", r.value, fmt_tau(r.tau), fmt_opt(r.fate)),
                }
            }
            eprintln!("wrote {}", out.join("sweep.csv").display());
            Ok(())
        }
        Command::OracleCheck(c) => {
            let cfg = c.load()?;
            let r = oracle_check(&cfg.params)?;
            println!(
                "dim = {}, t = {}: propagation error {:.3e}, assembly error {:.3e}, hermiticity defect {:.3e}",
                r.dim, r.t, r.propagation_error, r.assembly_error, r.hermiticity_defect
            );
            if r.propagation_error < 1e-8 && r.assembly_error < 1e-12 {
                Ok(())
            } else {
                Err(Error::Domain("oracle mismatch above 1e-8".into()))
            }
        }
    }
}

fn single(c: &Common, cfg: RunConfig) -> Result<(), Error> {
    let out = c.out_dir();
    eprintln!("{} backend, L = {}, n_max = {}, t_max = {}", cfg.backend, cfg.params.sites, cfg.params.n_max, cfg.params.t_max);
    let outcome = run_experiment(&cfg)?;
    write_run_dir(&out, &cfg, &outcome)?;
    report(&cfg, &outcome);
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn report(cfg: &RunConfig, o: &RunOutcome) {
    println!(
        "tau = {} (lambda = {}, fate = {})",
        fmt_tau(o.sbt.tau),
        cfg.params.lambda,
        fmt_opt(o.fate)
    );
    let conv = &o.convergence;
    print!(
        "cutoff: n_max = {}, max(n + 2 dn) = {:.4}, pass = {}",
        conv.n_max_used, conv.max_occupation, conv.pass
    );
    match conv.paired_deviation {
        Some(d) => println!(", deviation vs n_max + 1 = {d:.3e}"),
        None => println!(),
    }
}

fn fmt_tau(tau: Option<f64>) -> String {
    tau.map_or("none".into(), |t| format!("{t:.4}"))
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or("-".into(), |v| v.to_string())
}
