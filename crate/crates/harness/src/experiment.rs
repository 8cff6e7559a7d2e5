//! The three experiments and their CSV outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use inrl_core::agent::Phase;
use inrl_core::sim::{self, Control, SimError, SimulationTrace};

use crate::config::{ExperimentSpec, Scenario, SweepParameter};
use crate::exec::{map_runs_with, Execution};
use crate::stats::{self, Spearman};
use crate::HarnessError;

/// Runs `scenario` once with `seed`.
pub fn simulate(scenario: &Scenario, seed: u64) -> Result<SimulationTrace, SimError> {
    let mut cfg = scenario.sim.clone();
    cfg.seed = seed;
    sim::run(&cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct TimeseriesResult {
    pub seed: u64,
    pub trace: SimulationTrace,
    pub files: Vec<PathBuf>,
}

/// Single run of the experiment's scenario with its first seed. Writes
/// `timeseries.csv`, `agent.csv` and `summary.csv`.
pub fn run_timeseries(spec: &ExperimentSpec) -> Result<TimeseriesResult, HarnessError> {
    let seed = spec.seeds[0];
    let trace = simulate(&spec.scenario, seed)?;
    let files = vec![
        write_file(&spec.out_dir, "timeseries.csv", &trace.timeseries_csv())?,
        write_file(&spec.out_dir, "agent.csv", &trace.agent_csv())?,
        write_file(&spec.out_dir, "summary.csv", &trace.summary_csv())?,
    ];
    Ok(TimeseriesResult { seed, trace, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub seed: u64,
    /// Time from the first steered data packet to convergence, or to the
    /// horizon for a censored run.
    pub time_us: u64,
    pub censored: bool,
    pub updates: Option<u64>,
    pub final_path: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub runs: Vec<SweepRun>,
    pub mean_us: f64,
    pub std_us: f64,
}

impl SweepPoint {
    pub fn censored(&self) -> usize {
        self.runs.iter().filter(|r| r.censored).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
    /// Rank correlation between the swept value and the mean convergence time.
    pub trend: Option<Spearman>,
    pub files: Vec<PathBuf>,
}

/// Convergence outcome of one run, censored at the horizon when the agent
/// never reached steering.
pub fn convergence_run(seed: u64, trace: &SimulationTrace, flow_start_us: u64) -> SweepRun {
    let d = trace.domains.first();
    let start = d.and_then(|d| d.first_data_us).unwrap_or(flow_start_us);
    match trace.convergence_time_us() {
        Some(t) => SweepRun {
            seed,
            time_us: t,
            censored: false,
            updates: trace.convergence_updates(),
            final_path: d.and_then(|d| d.final_learned_path),
        },
        None => SweepRun {
            seed,
            time_us: trace.horizon_us.saturating_sub(start),
            censored: true,
            updates: None,
            final_path: None,
        },
    }
}

/// Convergence time across a parameter grid, every seed at every point.
/// Writes `sweep.csv` (one row per value, per-seed columns), `sweep_runs.csv`
/// (one row per run) and `sweep_trend.csv`.
pub fn run_alpha_sweep(spec: &ExperimentSpec, exec: Execution) -> Result<SweepResult, HarnessError> {
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid(format!("experiment {} has no [sweep] section", spec.name)))?;
    let flow_start = spec.scenario.sim.flows.iter().map(|f| f.start_us).min().unwrap_or(0);

    let jobs: Vec<(usize, u64)> = (0..sweep.values.len())
        .flat_map(|i| spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = map_runs_with(exec, &jobs, |&(i, seed)| {
        let mut scenario = spec.scenario.clone();
        sweep.parameter.apply(&mut scenario.sim.agent, sweep.values[i]);
        simulate(&scenario, seed).map(|t| (i, convergence_run(seed, &t, flow_start)))
    });

    let mut points: Vec<SweepPoint> = sweep
        .values
        .iter()
        .map(|&value| SweepPoint {
            value,
            runs: Vec::new(),
            mean_us: 0.0,
            std_us: 0.0,
        })
        .collect();
    for r in results {
        let (i, run) = r?;
        points[i].runs.push(run);
    }
    for p in &mut points {
        let times: Vec<f64> = p.runs.iter().map(|r| r.time_us as f64).collect();
        p.mean_us = stats::mean(&times);
        p.std_us = stats::std_dev(&times);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.value).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_us).collect();
    let trend = stats::spearman(&xs, &ys);

    let name = sweep.parameter.name();
    let mut summary = format!("{name},runs,censored,mean_convergence_us,std_convergence_us,mean_updates");
    for s in &spec.seeds {
        write!(summary, ",seed_{s}_us").unwrap();
    }
    summary.push('\n');
    let mut runs = format!("{name},seed,convergence_us,censored,updates,final_path\n");
    for p in &points {
        let updates: Vec<f64> = p.runs.iter().filter_map(|r| r.updates).map(|u| u as f64).collect();
        let mean_updates = if updates.is_empty() {
            String::new()
        } else {
            format!("{:.3}", stats::mean(&updates))
        };
        write!(
            summary,
            "{},{},{},{:.3},{:.3},{}",
            p.value,
            p.runs.len(),
            p.censored(),
            p.mean_us,
            p.std_us,
            mean_updates
        )
        .unwrap();
        for r in &p.runs {
            write!(summary, ",{}", r.time_us).unwrap();
            writeln!(
                runs,
                "{},{},{},{},{},{}",
                p.value,
                r.seed,
                r.time_us,
                u8::from(r.censored),
                r.updates.map_or(String::new(), |u| u.to_string()),
                r.final_path.map_or(String::new(), |u| u.to_string()),
            )
            .unwrap();
        }
        summary.push('\n');
    }
    let mut trend_csv = String::from("points,spearman_rho,p_value\n");
    match trend {
        Some(t) => writeln!(trend_csv, "{},{:.6},{:.6e}", t.n, t.rho, t.p_value).unwrap(),
        None => writeln!(trend_csv, "{},,", points.len()).unwrap(),
    }

    let files = vec![
        write_file(&spec.out_dir, "sweep.csv", &summary)?,
        write_file(&spec.out_dir, "sweep_runs.csv", &runs)?,
        write_file(&spec.out_dir, "sweep_trend.csv", &trend_csv)?,
    ];
    Ok(SweepResult {
        parameter: sweep.parameter,
        points,
        trend,
        files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub seed: u64,
    pub baseline_bps: f64,
    pub sla_bps: f64,
}

impl CompareRow {
    pub fn relative_delta(&self) -> f64 {
        relative(self.baseline_bps, self.sla_bps)
    }
}

fn relative(base: f64, sla: f64) -> f64 {
    if base == 0.0 {
        if sla == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        sla / base - 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
    pub mean_baseline_bps: f64,
    pub mean_sla_bps: f64,
    pub files: Vec<PathBuf>,
}

impl CompareResult {
    /// `mean_sla / mean_baseline - 1`.
    pub fn relative_delta(&self) -> f64 {
        relative(self.mean_baseline_bps, self.mean_sla_bps)
    }
}

/// Goodput of the agent-driven scenario against a static baseline pinned to
/// one path, seed by seed. Writes `compare.csv`.
pub fn run_throughput_compare(spec: &ExperimentSpec, exec: Execution) -> Result<CompareResult, HarnessError> {
    let cmp = spec
        .compare
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid(format!("experiment {} has no [compare] section", spec.name)))?;
    let mut baseline = spec.baseline.clone().unwrap_or_else(|| spec.scenario.clone());
    baseline.sim.control = Control::Static {
        path: cmp.baseline_path,
    };
    let mut sla = spec.scenario.clone();
    sla.sim.control = Control::Agent;

    let jobs: Vec<(bool, u64)> = spec
        .seeds
        .iter()
        .flat_map(|&s| [(false, s), (true, s)])
        .collect();
    let results = map_runs_with(exec, &jobs, |&(agent, seed)| {
        simulate(if agent { &sla } else { &baseline }, seed).map(|t| t.total_goodput_bps())
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<CompareRow> = spec
        .seeds
        .iter()
        .zip(results.chunks(2))
        .map(|(&seed, g)| CompareRow {
            seed,
            baseline_bps: g[0],
            sla_bps: g[1],
        })
        .collect();
    let mean_baseline_bps = stats::mean(&rows.iter().map(|r| r.baseline_bps).collect::<Vec<_>>());
    let mean_sla_bps = stats::mean(&rows.iter().map(|r| r.sla_bps).collect::<Vec<_>>());

    let mut csv = String::from("row_type,seed,baseline_goodput_bps,sla_goodput_bps,relative_delta\n");
    for r in &rows {
        writeln!(
            csv,
            "run,{},{:.3},{:.3},{:.6}",
            r.seed,
            r.baseline_bps,
            r.sla_bps,
            r.relative_delta()
        )
        .unwrap();
    }
    let mut result = CompareResult {
        rows,
        mean_baseline_bps,
        mean_sla_bps,
        files: Vec::new(),
    };
    writeln!(
        csv,
        "mean,,{:.3},{:.3},{:.6}",
        mean_baseline_bps,
        mean_sla_bps,
        result.relative_delta()
    )
    .unwrap();
    result.files.push(write_file(&spec.out_dir, "compare.csv", &csv)?);
    Ok(result)
}

/// How the first domain's agent handled a congestion shift.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adaptation {
    pub shift_us: u64,
    /// Path the agent was steering on when the shift happened.
    pub steering_at_shift: Option<usize>,
    /// First path the agent converged to after the shift that differs from
    /// `steering_at_shift`.
    pub new_path: Option<usize>,
    /// Data packets steered between the shift and that convergence.
    pub switch_packets: Option<u64>,
    pub stable_windows: usize,
    /// Largest number of register changes inside one steering window caused
    /// by directives issued inside it.
    pub max_switches_per_window: usize,
}

/// Needs a trace recorded with detailed logs.
pub fn adaptation(trace: &SimulationTrace, shift_us: u64) -> Adaptation {
    let domain = trace.domains.first().map(|d| d.domain_id);
    let changes: Vec<_> = trace
        .phase_changes
        .iter()
        .filter(|c| Some(c.domain_id) == domain)
        .collect();

    let steering_at_shift = changes
        .iter()
        .rev()
        .find(|c| c.time <= shift_us)
        .filter(|c| c.phase == Phase::OptimizedSteering)
        .and_then(|c| c.learned_path);

    let switched = changes.iter().find(|c| {
        c.time > shift_us && c.phase == Phase::OptimizedSteering && c.learned_path != steering_at_shift
    });
    let new_path = switched.and_then(|c| c.learned_path);
    let switch_packets = switched.and_then(|c| {
        let log = trace.detailed.as_ref()?;
        Some(
            log.embeds
                .iter()
                .filter(|e| !e.probe && Some(e.domain_id) == domain && e.time > shift_us && e.time <= c.time)
                .count() as u64,
        )
    });

    let mut windows = Vec::new();
    for (i, c) in changes.iter().enumerate() {
        if c.phase == Phase::OptimizedSteering {
            let end = changes.get(i + 1).map_or(trace.horizon_us, |n| n.time);
            windows.push((c.time, end));
        }
    }
    let max_switches_per_window = windows
        .iter()
        .map(|&(start, end)| {
            trace
                .register_changes
                .iter()
                .filter(|r| Some(r.domain_id) == domain && r.time >= start && r.time < end && r.issued_at >= start)
                .count()
        })
        .max()
        .unwrap_or(0);

    Adaptation {
        shift_us,
        steering_at_shift,
        new_path,
        switch_packets,
        stable_windows: windows.len(),
        max_switches_per_window,
    }
}
