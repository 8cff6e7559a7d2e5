//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any failed.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bytes::Bytes;
use inrl_core::agent::{
    compute_reward, sla_update, sla_update_fixed, ProbabilityVector, RewardParams,
};
use inrl_core::arith::{sigmoid_exact, FixedPoint, ShiftPair, SigmoidTable, DEFAULT_BUCKETS};
use inrl_core::sim::{Change, SimulationTrace};
use inrl_core::telemetry::{extract_and_clone, HopRecord, IntFrame, IntHeader, MAX_HOPS};
use inrl_core::{Backend, SegmentMetrics};
use inrl_harness::config::{ExperimentSpec, Overrides, Scenario};
use inrl_harness::exec::{map_runs, Execution};
use inrl_harness::experiment::{
    adaptation, run_alpha_sweep, run_throughput_compare, run_timeseries, simulate, SweepResult,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn experiment(name: &str, out: &Path, backend: Option<Backend>) -> ExperimentSpec {
    let overrides = Overrides {
        out_dir: Some(out.to_path_buf()),
        backend,
        ..Overrides::default()
    };
    ExperimentSpec::load(&root().join("experiments").join(name), &overrides).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn simplex_invariant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51);
    let steps = 1_000_000;
    let mut worst_exact = 0.0f64;
    let mut worst_fixed = 0u64;
    let mut out_of_range = 0u64;
    let one = u64::from(FixedPoint::ONE.raw());

    let mut n = 2;
    let mut p = ProbabilityVector::uniform(n);
    let mut q = ProbabilityVector::uniform_fixed(n);
    for step in 0..steps {
        if step % 1000 == 0 {
            n = rng.random_range(2..=6);
            p = ProbabilityVector::uniform(n);
            q = ProbabilityVector::uniform_fixed(n);
        }
        let selected = rng.random_range(0..n);
        let reward: f64 = rng.random();
        let alpha: f64 = rng.random_range(0.01..=1.0);

        p = sla_update(&p, selected, reward, alpha);
        worst_exact = worst_exact.max((p.sum() - 1.0).abs());
        out_of_range += p.as_slice().iter().filter(|x| !(0.0..=1.0).contains(*x)).count() as u64;

        q = sla_update_fixed(&q, selected, FixedPoint::from_f64(reward), ShiftPair::for_factor(alpha));
        worst_fixed = worst_fixed.max(q.sum_raw().abs_diff(one));
        out_of_range += q.as_slice().iter().filter(|x| x.raw() as u64 > one).count() as u64;
    }
    let fixed_err = worst_fixed as f64 / one as f64;
    outcome(
        worst_exact <= 1e-9 && fixed_err <= 1.0 / 4096.0 && out_of_range == 0,
        format!(
            "{steps} steps, exact max |sum-1| {worst_exact:.2e}, constrained max |sum-1| {fixed_err:.2e}, {out_of_range} entries outside [0,1]"
        ),
    )
}

fn closed_form() -> Outcome {
    let mut worst = 0.0f64;
    for alpha in [0.1, 0.25, 0.5, 0.9] {
        for r in [0.25, 0.5, 1.0] {
            let mut p = ProbabilityVector::uniform(2);
            for t in 1..=50 {
                p = sla_update(&p, 0, r, alpha);
                let expect = 1.0 - 0.5 * (1.0 - alpha * r).powi(t);
                worst = worst.max((p[0] - expect).abs());
            }
        }
    }
    outcome(worst <= 1e-9, format!("12 trajectories of 50 steps, max deviation {worst:.2e}"))
}

fn reward_anchors() -> Outcome {
    let params = RewardParams::default();
    let mid = compute_reward(
        SegmentMetrics {
            queue: params.tau_queue as u64,
            delay: params.tau_delay as u64,
        },
        &params,
    );
    let mid_err = (mid - 0.5).abs();

    let mut worst = 0.0f64;
    for (tau, c) in [(params.tau_queue, params.steepness_queue), (params.tau_delay, params.steepness_delay), (50.0, 0.2)] {
        let table = SigmoidTable::build(tau, c, DEFAULT_BUCKETS).unwrap();
        let lo = (tau - 12.0 / c).max(0.0);
        let hi = tau + 12.0 / c;
        for i in 0..1000 {
            let m = lo + (hi - lo) * f64::from(i) / 999.0;
            let err = (table.lookup(m).to_f64() - sigmoid_exact(m, tau, c).unwrap()).abs();
            worst = worst.max(err);
        }
    }
    outcome(
        mid_err <= 1e-9 && worst <= 0.05,
        format!("reward at thresholds {mid:.12}, worst table deviation {worst:.4} over 3 x 1000 points"),
    )
}

fn convergence_trend(sweep: &SweepResult, elapsed_s: f64) -> Outcome {
    let means: Vec<f64> = sweep.points.iter().map(|p| p.mean_us).collect();
    let head: Vec<f64> = sweep
        .points
        .iter()
        .filter(|p| p.value <= 0.5 + 1e-9)
        .map(|p| p.mean_us)
        .collect();
    let strictly = head.len() == 5 && head.windows(2).all(|w| w[1] < w[0]);
    let censored: usize = sweep.points.iter().map(|p| p.censored()).sum();
    let trend = sweep.trend;
    let pass = strictly && trend.is_some_and(|t| t.rho < 0.0 && t.p_value < 0.05) && elapsed_s < 120.0;
    outcome(
        pass,
        format!(
            "means {:?} us, strictly decreasing to 0.5: {strictly}, spearman {}, {censored} censored, {elapsed_s:.1} s",
            means.iter().map(|m| m.round() as i64).collect::<Vec<_>>(),
            trend.map_or("n/a".to_string(), |t| format!("rho {:.3} p {:.2e}", t.rho, t.p_value)),
        ),
    )
}

/// Path with no background traffic before `shift_us`.
fn clear_path_before(scenario: &Scenario, shift_us: u64) -> usize {
    let busy: BTreeSet<usize> = scenario
        .sim
        .events
        .iter()
        .filter(|e| e.at_us < shift_us)
        .filter_map(|e| match e.change {
            Change::BackgroundStart { path, .. } => Some(path),
            _ => None,
        })
        .collect();
    (0..scenario.sim.domains[0].num_paths())
        .find(|p| !busy.contains(p))
        .expect("a clear path")
}

fn shift_runs(backend: Backend) -> (Scenario, Vec<SimulationTrace>) {
    let mut scenario = Scenario::load(&root().join("scenarios/poc-shift.toml")).unwrap();
    scenario.sim.agent.alpha = 0.5;
    scenario.sim.agent.backend = backend;
    scenario.sim.detailed = true;
    let seeds: Vec<u64> = (1..=20).collect();
    let traces = map_runs(&seeds, |&s| simulate(&scenario, s).unwrap());
    (scenario, traces)
}

fn adaptation_check(scenario: &Scenario, traces: &[SimulationTrace]) -> Outcome {
    let shift = scenario.first_shift_us().unwrap();
    let clear = clear_path_before(scenario, shift);
    let n = traces.len();
    let mut before = 0;
    let mut switched = 0;
    let mut worst_window = 0;
    let mut latencies = Vec::new();
    for t in traces {
        let a = adaptation(t, shift);
        before += usize::from(a.steering_at_shift == Some(clear));
        if let Some(k) = a.switch_packets.filter(|&k| k <= 2000) {
            switched += 1;
            latencies.push(k);
        }
        worst_window = worst_window.max(a.max_switches_per_window);
    }
    latencies.sort_unstable();
    let pass = before * 100 >= 95 * n && switched * 100 >= 90 * n && worst_window <= 1;
    outcome(
        pass,
        format!(
            "{before}/{n} on path {clear} before the shift, {switched}/{n} switched within 2000 packets (median {}), max {worst_window} switch per stable window",
            latencies.get(latencies.len() / 2).map_or("-".into(), |k| k.to_string())
        ),
    )
}

fn header_strategy() -> impl Strategy<Value = (IntHeader, Vec<u8>)> {
    let record = (any::<u32>(), any::<u32>(), any::<u32>()).prop_map(|(s, q, d)| HopRecord {
        switch_id: s,
        queue_length: q,
        dequeue_delay: d,
    });
    (
        any::<u8>(),
        any::<bool>(),
        any::<u32>(),
        prop::collection::vec(record, 0..=MAX_HOPS),
        prop::collection::vec(any::<u8>(), 0..1500),
    )
        .prop_map(|(path, probe, seq, records, payload)| {
            let mut h = IntHeader::new(path, probe, seq);
            for r in records {
                h.append_hop(r).unwrap();
            }
            (h, payload)
        })
}

fn telemetry_round_trip(scenario: &Scenario, trace: &SimulationTrace) -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 10_000,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let prop = runner.run(&header_strategy(), |(h, payload)| {
        prop_assert_eq!(IntHeader::parse(&h.serialize()).unwrap(), h.clone());
        let payload = Bytes::from(payload);
        let frame = IntFrame {
            header: Some(h.clone()),
            payload: payload.clone(),
        };
        let back = IntFrame::from_wire(frame.to_wire(), true).unwrap();
        prop_assert_eq!(&back, &frame);
        if h.hop_count() > 0 {
            let (stripped, report) = extract_and_clone(back, 1, 0).unwrap();
            prop_assert!(stripped.header.is_none());
            prop_assert_eq!(stripped.payload, payload);
            prop_assert_eq!(report.unwrap().records, h.records().to_vec());
        }
        Ok(())
    });

    let log = trace.detailed.as_ref().unwrap();
    let hops: HashMap<(u64, u32), _> = log.hops.iter().map(|h| ((h.packet_id, h.switch_id), *h)).collect();
    let mut checked = 0u64;
    let mut mismatched = 0u64;
    for (packet, report) in &log.reports {
        for r in &report.records {
            checked += 1;
            match hops.get(&(*packet, r.switch_id)) {
                Some(h) if u64::from(r.dequeue_delay) == h.dequeued_at - h.enqueued_at => {}
                _ => mismatched += 1,
            }
        }
    }
    outcome(
        prop.is_ok() && checked > 0 && mismatched == 0,
        format!(
            "10000 generated headers: {}; {checked} reported hops in {}, {mismatched} disagree with the simulator",
            match &prop {
                Ok(()) => "all round-trip".to_string(),
                Err(e) => format!("failed ({e})"),
            },
            scenario.name
        ),
    )
}

fn overhead_bound(out: &Path) -> Outcome {
    let spec = experiment("compare.toml", &out.join("compare"), None);
    let r = run_throughput_compare(&spec, Execution::Parallel).unwrap();
    let ratio = r.mean_sla_bps / r.mean_baseline_bps;
    let per_seed = r.rows.iter().all(|x| x.sla_bps >= 0.95 * x.baseline_bps);
    outcome(
        r.rows.len() >= 6 && ratio >= 0.95 && per_seed,
        format!(
            "{} seeds, baseline {:.0} bit/s, agent {:.0} bit/s, ratio {ratio:.4}",
            r.rows.len(),
            r.mean_baseline_bps,
            r.mean_sla_bps
        ),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(out: &Path) -> Outcome {
    let mut compared = 0;
    let mut differing = Vec::new();
    for name in ["timeseries.toml", "alpha-sweep.toml", "compare.toml", "compare-shift.toml"] {
        let mut dirs = Vec::new();
        for (i, exec) in [Execution::Parallel, Execution::Parallel, Execution::Sequential].into_iter().enumerate() {
            let dir = out.join(format!("det-{name}-{i}"));
            let spec = experiment(name, &dir, None);
            if spec.sweep.is_some() {
                run_alpha_sweep(&spec, exec).unwrap();
            } else if spec.compare.is_some() {
                run_throughput_compare(&spec, exec).unwrap();
            } else {
                run_timeseries(&spec).unwrap();
            }
            dirs.push(read_dir_bytes(&dir));
        }
        compared += dirs[0].len();
        if dirs.iter().any(|d| d != &dirs[0]) {
            differing.push(name);
        }
    }
    outcome(
        differing.is_empty(),
        format!("{compared} CSV files from 4 experiments, 3 runs each, differing: {differing:?}"),
    )
}

fn backend_invariance(exact_sweep: &SweepResult, out: &Path, exact_shift: &[SimulationTrace]) -> Outcome {
    let spec = experiment("alpha-sweep.toml", &out.join("sweep-constrained"), Some(Backend::Constrained));
    let constrained = run_alpha_sweep(&spec, Execution::Parallel).unwrap();
    let mut runs = 0;
    let mut mismatches = Vec::new();
    for (e, c) in exact_sweep.points.iter().zip(&constrained.points) {
        for (a, b) in e.runs.iter().zip(&c.runs) {
            runs += 1;
            if a.final_path.is_none() || a.final_path != b.final_path {
                mismatches.push(format!("alpha {} seed {}", e.value, a.seed));
            }
        }
    }
    // final learned path at the horizon
    let (_, shifted) = shift_runs(Backend::Constrained);
    for (a, b) in exact_shift.iter().zip(&shifted) {
        runs += 1;
        let pa = a.domains[0].final_learned_path;
        if pa.is_none() || pa != b.domains[0].final_learned_path {
            mismatches.push(format!("shift seed {}", a.seed));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{runs} paired runs, mismatches: {mismatches:?}"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();

    results.push((1, "probability simplex", simplex_invariant()));
    results.push((2, "closed-form trajectory", closed_form()));
    results.push((3, "reward anchors and lookup table", reward_anchors()));

    let started = Instant::now();
    let sweep_spec = experiment("alpha-sweep.toml", &out.join("sweep"), None);
    let sweep = run_alpha_sweep(&sweep_spec, Execution::Parallel).unwrap();
    results.push((4, "convergence trend over alpha", convergence_trend(&sweep, started.elapsed().as_secs_f64())));

    let (scenario, traces) = shift_runs(Backend::Exact);
    results.push((5, "adaptation to a congestion shift", adaptation_check(&scenario, &traces)));
    results.push((6, "telemetry round trip", telemetry_round_trip(&scenario, &traces[0])));
    results.push((7, "overhead bound", overhead_bound(out)));
    results.push((8, "determinism", determinism(out)));
    results.push((9, "backend decision invariance", backend_invariance(&sweep, out, &traces)));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n} ({name}): {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
