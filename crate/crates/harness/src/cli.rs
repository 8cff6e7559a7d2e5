//! `inrl` command line.
//!
//! Exit status: 0 on success, 1 on any runtime or validation error, 2 on a
//! usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use inrl_core::arith::{SigmoidTable, DEFAULT_BUCKETS};
use inrl_core::sim::SimError;
use inrl_core::Backend;

use crate::config::{ConfigError, ExperimentSpec, Overrides, Scenario};
use crate::exec::Execution;
use crate::experiment;
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "inrl", version, about = "Run path-selection experiments and write CSV")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and list every violation found.
    Validate { scenario: PathBuf },
    /// Single time-series run (timeseries.csv, agent.csv, summary.csv).
    Run(ExperimentArgs),
    /// Parameter sweep over all seeds (sweep.csv, sweep_runs.csv, sweep_trend.csv).
    Sweep(ExperimentArgs),
    /// Agent against a static single-path baseline (compare.csv).
    Compare(ExperimentArgs),
    /// Lookup tables as loaded into the data plane.
    #[command(subcommand)]
    Table(TableCommand),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment spec (TOML).
    pub spec: PathBuf,
    /// First seed; the others follow consecutively.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub horizon_us: Option<u64>,
    /// Run seeds one after another on the calling thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum TableCommand {
    /// Print the sigmoid lookup table as `upper_bound,output_q16`.
    DumpSigmoid {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        steepness: f64,
        #[arg(long, default_value_t = DEFAULT_BUCKETS)]
        buckets: usize,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: inrl_core::arith::ArithError| e.to_string())
}

impl ExperimentArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            backend: self.backend,
            horizon_us: self.horizon_us,
        }
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            1
        }
    }
}

fn report(e: &HarnessError) {
    let violations = match e {
        HarnessError::Config(ConfigError::Topology(v))
        | HarnessError::Config(ConfigError::Sim(SimError::Topology(v)))
        | HarnessError::Sim(SimError::Topology(v)) => Some(v),
        _ => None,
    };
    eprintln!("error: {e}");
    if let Some(v) = violations {
        for x in v {
            eprintln!("  - {x}");
        }
    }
}

pub fn execute(cmd: &Command) -> Result<(), HarnessError> {
    let mut out = std::io::stdout().lock();
    match cmd {
        Command::Validate { scenario } => {
            let s = Scenario::load(scenario)?;
            s.validate()?;
            let _ = writeln!(
                out,
                "{}: ok ({} nodes, {} domain(s), {} flow(s), {} event(s))",
                scenario.display(),
                s.sim.topology.nodes().len(),
                s.sim.domains.len(),
                s.sim.flows.len(),
                s.sim.events.len()
            );
        }
        Command::Run(a) => {
            let spec = load(a)?;
            let r = experiment::run_timeseries(&spec)?;
            let _ = writeln!(
                out,
                "seed {}: goodput {:.0} bit/s, convergence {}, {} path switch(es)",
                r.seed,
                r.trace.total_goodput_bps(),
                r.trace
                    .convergence_time_us()
                    .map_or("none".to_string(), |t| format!("{t} us")),
                r.trace.path_switches()
            );
            list_files(&mut out, &r.files);
        }
        Command::Sweep(a) => {
            let spec = load(a)?;
            let r = experiment::run_alpha_sweep(&spec, a.execution())?;
            for p in &r.points {
                let _ = writeln!(
                    out,
                    "{}={}: mean {:.1} us, std {:.1} us, {} censored of {}",
                    r.parameter.name(),
                    p.value,
                    p.mean_us,
                    p.std_us,
                    p.censored(),
                    p.runs.len()
                );
            }
            if let Some(t) = r.trend {
                let _ = writeln!(out, "spearman rho {:.4}, p {:.3e}", t.rho, t.p_value);
            }
            list_files(&mut out, &r.files);
        }
        Command::Compare(a) => {
            let spec = load(a)?;
            let r = experiment::run_throughput_compare(&spec, a.execution())?;
            let _ = writeln!(
                out,
                "baseline {:.0} bit/s, agent {:.0} bit/s, relative {:+.4}",
                r.mean_baseline_bps,
                r.mean_sla_bps,
                r.relative_delta()
            );
            list_files(&mut out, &r.files);
        }
        Command::Table(TableCommand::DumpSigmoid {
            tau,
            steepness,
            buckets,
            output,
        }) => {
            let table = SigmoidTable::build(*tau, *steepness, *buckets)
                .map_err(|e| HarnessError::Invalid(e.to_string()))?;
            let text = table.to_text();
            match output {
                Some(p) => std::fs::write(p, text).map_err(|source| HarnessError::Io {
                    path: p.clone(),
                    source,
                })?,
                None => {
                    let _ = out.write_all(text.as_bytes());
                }
            }
        }
    }
    Ok(())
}

fn load(a: &ExperimentArgs) -> Result<ExperimentSpec, HarnessError> {
    let spec = ExperimentSpec::load(&a.spec, &a.overrides())?;
    spec.scenario.validate()?;
    if let Some(b) = &spec.baseline {
        b.validate()?;
    }
    Ok(spec)
}

fn list_files(out: &mut impl Write, files: &[PathBuf]) {
    for f in files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
}
