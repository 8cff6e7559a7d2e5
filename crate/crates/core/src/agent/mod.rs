//! The path-selection agent hosted on the collector switch.
//!
//! Each telemetry report is turned into a reward, the reward drives a
//! linear reward-inaction update of the path distribution, and the agent
//! answers with the path the decision node should use next. Once one path's
//! probability reaches `p_conv` the distribution is frozen and all traffic is
//! pinned to it; probe reports keep a per-path reward EMA fresh and a
//! sustained degradation sends the agent back to learning.

mod backend;
mod reward;
mod update;

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{ArithError, Backend};
use crate::telemetry::{aggregate_with, Aggregation, TelemetryReport};

pub use backend::{Arithmetic, ConstrainedArith, ExactArith};
pub use reward::{compute_reward, RewardParams, RewardTables};
pub use update::{
    select_path, select_path_fixed, sla_update, sla_update_fixed, ProbabilityVector,
    EXACT_SUM_TOLERANCE, FIXED_SUM_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid agent configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Arith(#[from] ArithError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("report names path {path} but the domain has {paths} paths")]
    UnknownPath { path: usize, paths: usize },
    #[error("report for domain {got} delivered to the agent of domain {expected}")]
    WrongDomain { expected: u32, got: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Learning,
    OptimizedSteering,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Learning => "learning",
            Phase::OptimizedSteering => "steering",
        })
    }
}

/// Agent knobs. Every field has a default; see the README table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Learning rate.
    pub alpha: f64,
    /// Probability at which the distribution is frozen.
    pub p_conv: f64,
    /// Data packets between probes at the decision node.
    pub probe_interval: u64,
    pub ema_gamma: f64,
    /// Learned-path EMA below this counts as degraded.
    pub theta_low: f64,
    /// Alternate-path EMA this far above the learned path counts as degraded.
    pub delta_improve: f64,
    /// Consecutive degraded probes before re-entering learning.
    pub window: u32,
    pub reward: RewardParams,
    pub backend: Backend,
    pub table_buckets: usize,
    pub aggregation: Aggregation,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            p_conv: 0.9,
            probe_interval: 100,
            ema_gamma: 0.125,
            theta_low: 0.4,
            delta_improve: 0.1,
            window: 3,
            reward: RewardParams::default(),
            backend: Backend::Exact,
            table_buckets: crate::arith::DEFAULT_BUCKETS,
            aggregation: Aggregation::Sum,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, num_paths: usize) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if num_paths < 2 {
            return bad(format!("need at least 2 paths, got {num_paths}"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        let floor = 1.0 / num_paths as f64;
        if !(self.p_conv > floor && self.p_conv < 1.0) {
            return bad(format!("p_conv must be in ({floor}, 1), got {}", self.p_conv));
        }
        if !(self.ema_gamma > 0.0 && self.ema_gamma < 1.0) {
            return bad(format!("ema_gamma must be in (0, 1), got {}", self.ema_gamma));
        }
        if !(0.0..=1.0).contains(&self.theta_low) || !(0.0..=1.0).contains(&self.delta_improve) {
            return bad("theta_low and delta_improve must be in [0, 1]".into());
        }
        if self.probe_interval == 0 || self.window == 0 {
            return bad("probe_interval and window must be at least 1".into());
        }
        if self.table_buckets < 2 {
            return bad(format!("table_buckets must be at least 2, got {}", self.table_buckets));
        }
        self.reward.validate()
    }
}

/// Collector-to-decision-node control message.
///
/// Wire format, big-endian: `domain_id: u32 | path: u8 | flags: u8`,
/// flags bit 0 marks a probe directive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlDirective {
    pub domain_id: u32,
    pub path: u8,
    pub probe: bool,
}

impl ControlDirective {
    pub const WIRE_LEN: usize = 6;

    pub fn encode(&self) -> [u8; Self::WIRE_LEN] {
        let d = self.domain_id.to_be_bytes();
        [d[0], d[1], d[2], d[3], self.path, u8::from(self.probe)]
    }

    pub fn decode(buf: &[u8]) -> Option<Self> {
        if buf.len() < Self::WIRE_LEN {
            return None;
        }
        Some(Self {
            domain_id: u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]),
            path: buf[4],
            probe: buf[5] & 1 != 0,
        })
    }
}

/// Learned state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<V> {
    pub phase: Phase,
    pub probs: ProbabilityVector<V>,
    pub learned_path: Option<usize>,
    pub ema: Vec<V>,
    pub probes_since_switch: u64,
    pub degradation_streak: u32,
}

/// Uniform distribution, neutral 0.5 EMAs, learning phase.
pub fn initial_state<A: Arithmetic>(num_paths: usize) -> AgentState<A::Value> {
    AgentState {
        phase: Phase::Learning,
        probs: A::uniform(num_paths),
        learned_path: None,
        ema: vec![A::from_real(0.5); num_paths],
        probes_since_switch: 0,
        degradation_streak: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgentStats {
    pub reports: u64,
    pub updates: u64,
    pub rejected: u64,
    pub reentries: u64,
}

/// What the agent did with one report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub reward: f64,
    pub directive: Option<ControlDirective>,
}

#[derive(Debug, Clone)]
pub struct Agent<A: Arithmetic> {
    domain_id: u32,
    config: AgentConfig,
    arith: A,
    state: AgentState<A::Value>,
    rng: ChaCha8Rng,
    stats: AgentStats,
}

impl<A: Arithmetic> Agent<A> {
    pub fn with_arith(domain_id: u32, num_paths: usize, config: AgentConfig, arith: A, seed: u64) -> Self {
        Self {
            domain_id,
            config,
            arith,
            state: initial_state::<A>(num_paths),
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: AgentStats::default(),
        }
    }

    pub fn state(&self) -> &AgentState<A::Value> {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut AgentState<A::Value> {
        &mut self.state
    }

    pub fn stats(&self) -> AgentStats {
        self.stats
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn num_paths(&self) -> usize {
        self.state.probs.len()
    }

    /// Draws a path from the current distribution.
    pub fn select(&mut self) -> usize {
        A::select(&self.state.probs, self.rng.next_u64())
    }

    fn directive(&self, path: usize) -> ControlDirective {
        ControlDirective {
            domain_id: self.domain_id,
            path: path as u8,
            probe: false,
        }
    }

    pub fn on_report(&mut self, report: &TelemetryReport) -> Result<Decision, AgentError> {
        if report.domain_id != self.domain_id {
            self.stats.rejected += 1;
            return Err(AgentError::WrongDomain {
                expected: self.domain_id,
                got: report.domain_id,
            });
        }
        let n = self.num_paths();
        let path = report.path_index;
        if path >= n {
            self.stats.rejected += 1;
            return Err(AgentError::UnknownPath { path, paths: n });
        }
        self.stats.reports += 1;

        let metrics = aggregate_with(report, self.config.aggregation);
        let reward = self.arith.reward(metrics);
        self.state.ema[path] = self.arith.ema_step(self.state.ema[path], reward);

        let directive = match (self.state.phase, report.is_probe) {
            (Phase::Learning, false) => {
                self.state.probs = self.arith.update(&self.state.probs, path, reward);
                self.stats.updates += 1;
                let best = self.state.probs.argmax();
                if self.arith.reached(self.state.probs[best]) {
                    self.state.phase = Phase::OptimizedSteering;
                    self.state.learned_path = Some(best);
                    self.state.probes_since_switch = 0;
                    self.state.degradation_streak = 0;
                    Some(self.directive(best))
                } else {
                    let next = self.select();
                    Some(self.directive(next))
                }
            }
            // Probes never touch the distribution. During learning they still
            // trigger a fresh draw so a decision node stuck on a path whose
            // packets never reach the sink gets moved.
            (Phase::Learning, true) => {
                self.state.probes_since_switch += 1;
                let next = self.select();
                Some(self.directive(next))
            }
            (Phase::OptimizedSteering, false) => {
                let learned = self.state.learned_path.expect("steering has a learned path");
                Some(self.directive(learned))
            }
            (Phase::OptimizedSteering, true) => {
                self.state.probes_since_switch += 1;
                self.check_degradation();
                None
            }
        };

        Ok(Decision {
            reward: A::to_real(reward),
            directive,
        })
    }

    fn check_degradation(&mut self) {
        let learned = self.state.learned_path.expect("steering has a learned path");
        let own = A::to_real(self.state.ema[learned]);
        let best_alt = self
            .state
            .ema
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != learned)
            .map(|(_, &e)| A::to_real(e))
            .fold(0.0, f64::max);
        let degraded = own < self.config.theta_low || best_alt > own + self.config.delta_improve;
        if degraded {
            self.state.degradation_streak += 1;
        } else {
            self.state.degradation_streak = 0;
        }
        if self.state.degradation_streak >= self.config.window {
            self.state.phase = Phase::Learning;
            self.state.probs = A::uniform(self.num_paths());
            self.state.learned_path = None;
            self.state.degradation_streak = 0;
            self.state.probes_since_switch = 0;
            self.stats.reentries += 1;
        }
    }

    pub fn probs_real(&self) -> Vec<f64> {
        self.state.probs.as_slice().iter().map(|&v| A::to_real(v)).collect()
    }

    pub fn ema_real(&self) -> Vec<f64> {
        self.state.ema.iter().map(|&v| A::to_real(v)).collect()
    }
}

impl Agent<ExactArith> {
    pub fn exact(domain_id: u32, num_paths: usize, config: AgentConfig, seed: u64) -> Self {
        let arith = ExactArith::new(&config);
        Self::with_arith(domain_id, num_paths, config, arith, seed)
    }
}

impl Agent<ConstrainedArith> {
    pub fn constrained(
        domain_id: u32,
        num_paths: usize,
        config: AgentConfig,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        let arith = ConstrainedArith::new(&config)?;
        Ok(Self::with_arith(domain_id, num_paths, config, arith, seed))
    }
}

/// An agent on whichever backend the configuration selects.
#[derive(Debug, Clone)]
pub enum AnyAgent {
    Exact(Agent<ExactArith>),
    Constrained(Agent<ConstrainedArith>),
}

macro_rules! dispatch {
    ($self:ident, $a:ident => $e:expr) => {
        match $self {
            AnyAgent::Exact($a) => $e,
            AnyAgent::Constrained($a) => $e,
        }
    };
}

impl AnyAgent {
    pub fn new(domain_id: u32, num_paths: usize, config: AgentConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate(num_paths)?;
        Ok(match config.backend {
            Backend::Exact => AnyAgent::Exact(Agent::exact(domain_id, num_paths, config, seed)),
            Backend::Constrained => {
                AnyAgent::Constrained(Agent::constrained(domain_id, num_paths, config, seed)?)
            }
        })
    }

    pub fn on_report(&mut self, report: &TelemetryReport) -> Result<Decision, AgentError> {
        dispatch!(self, a => a.on_report(report))
    }

    pub fn select(&mut self) -> usize {
        dispatch!(self, a => a.select())
    }

    pub fn phase(&self) -> Phase {
        dispatch!(self, a => a.state().phase)
    }

    pub fn learned_path(&self) -> Option<usize> {
        dispatch!(self, a => a.state().learned_path)
    }

    pub fn probs(&self) -> Vec<f64> {
        dispatch!(self, a => a.probs_real())
    }

    pub fn ema(&self) -> Vec<f64> {
        dispatch!(self, a => a.ema_real())
    }

    pub fn stats(&self) -> AgentStats {
        dispatch!(self, a => a.stats())
    }

    pub fn backend(&self) -> Backend {
        match self {
            AnyAgent::Exact(_) => Backend::Exact,
            AnyAgent::Constrained(_) => Backend::Constrained,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::HopRecord;

    fn report(path: usize, probe: bool, q: u32, d: u32) -> TelemetryReport {
        TelemetryReport {
            domain_id: 1,
            path_index: path,
            is_probe: probe,
            packet_seq: 0,
            records: vec![HopRecord {
                switch_id: 2,
                queue_length: q,
                dequeue_delay: d,
            }],
            sink_timestamp: 0,
        }
    }

    #[test]
    fn initial_state_is_uniform_learning() {
        let s = initial_state::<ExactArith>(2);
        assert_eq!(s.probs.as_slice(), &[0.5, 0.5]);
        assert_eq!(s.phase, Phase::Learning);
        let s = initial_state::<ExactArith>(4);
        assert_eq!(s.probs.as_slice(), &[0.25; 4]);
        assert_eq!(s.ema, vec![0.5; 4]);
        assert_eq!(s.learned_path, None);
    }

    #[test]
    fn learning_update_matches_oracle() {
        let mut a = Agent::exact(1, 2, AgentConfig::default(), 7);
        let d = a.on_report(&report(0, false, 0, 0)).unwrap();
        // 0.5 + 0.5 * 0.9954172629595402 * 0.5, mpmath
        let oracle = 0.748_854_315_739_885;
        assert!((a.probs_real()[0] - oracle).abs() < 1e-12);
        assert!((d.reward - 0.995_417_262_959_540_2).abs() < 1e-12);
        assert!(d.directive.is_some());
        assert_eq!(a.state().phase, Phase::Learning);
    }

    #[test]
    fn crossing_threshold_freezes() {
        let mut a = Agent::exact(1, 2, AgentConfig::default(), 7);
        a.state_mut().probs = ProbabilityVector::from_vec(vec![0.88, 0.12]);
        let d = a.on_report(&report(0, false, 0, 0)).unwrap();
        assert_eq!(a.state().phase, Phase::OptimizedSteering);
        assert_eq!(a.state().learned_path, Some(0));
        assert_eq!(d.directive.unwrap().path, 0);

        // frozen: a data report on the other path changes nothing but the EMA
        let before = a.state().probs.clone();
        let d = a.on_report(&report(1, false, 0, 0)).unwrap();
        assert_eq!(a.state().probs, before);
        assert_eq!(d.directive.unwrap().path, 0);
    }

    #[test]
    fn degraded_probes_reenter_learning() {
        let cfg = AgentConfig::default();
        let w = cfg.window;
        let mut a = Agent::exact(1, 2, cfg, 7);
        a.state_mut().probs = ProbabilityVector::from_vec(vec![0.88, 0.12]);
        a.on_report(&report(0, false, 0, 0)).unwrap();
        // drag the learned path's EMA down with congested data reports
        for _ in 0..20 {
            a.on_report(&report(0, false, 64, 6400)).unwrap();
        }
        for i in 0..w {
            assert_eq!(a.state().phase, Phase::OptimizedSteering, "probe {i}");
            let d = a.on_report(&report(1, true, 0, 0)).unwrap();
            assert!(d.directive.is_none());
        }
        assert_eq!(a.state().phase, Phase::Learning);
        assert_eq!(a.probs_real(), vec![0.5, 0.5]);
        assert_eq!(a.state().learned_path, None);
        assert_eq!(a.stats().reentries, 1);
    }

    #[test]
    fn healthy_probe_resets_streak() {
        let mut a = Agent::exact(1, 2, AgentConfig::default(), 7);
        a.state_mut().probs = ProbabilityVector::from_vec(vec![0.88, 0.12]);
        a.on_report(&report(0, false, 0, 0)).unwrap();
        for _ in 0..20 {
            a.on_report(&report(0, false, 64, 6400)).unwrap();
        }
        a.on_report(&report(1, true, 0, 0)).unwrap();
        a.on_report(&report(1, true, 0, 0)).unwrap();
        assert_eq!(a.state().degradation_streak, 2);
        for _ in 0..40 {
            a.on_report(&report(0, false, 0, 0)).unwrap();
        }
        for _ in 0..40 {
            a.on_report(&report(1, false, 64, 6400)).unwrap();
        }
        a.on_report(&report(1, true, 64, 6400)).unwrap();
        assert_eq!(a.state().degradation_streak, 0);
        assert_eq!(a.state().phase, Phase::OptimizedSteering);
    }

    #[test]
    fn probes_do_not_update_probabilities_while_learning() {
        let mut a = Agent::exact(1, 2, AgentConfig::default(), 7);
        let d = a.on_report(&report(1, true, 0, 0)).unwrap();
        assert_eq!(a.probs_real(), vec![0.5, 0.5]);
        assert!(d.directive.is_some());
        assert_eq!(a.stats().updates, 0);
    }

    #[test]
    fn unknown_path_is_rejected_without_state_change() {
        let mut a = Agent::exact(1, 2, AgentConfig::default(), 7);
        let before = a.state().clone();
        assert_eq!(
            a.on_report(&report(5, false, 0, 0)),
            Err(AgentError::UnknownPath { path: 5, paths: 2 })
        );
        let mut other = report(0, false, 0, 0);
        other.domain_id = 9;
        assert!(a.on_report(&other).is_err());
        assert_eq!(a.state(), &before);
        assert_eq!(a.stats().rejected, 2);
    }

    #[test]
    fn steering_never_names_another_path() {
        let mut a = Agent::exact(1, 2, AgentConfig::default(), 3);
        a.state_mut().probs = ProbabilityVector::from_vec(vec![0.1, 0.95]);
        a.on_report(&report(1, false, 0, 0)).unwrap();
        for i in 0..500 {
            let d = a.on_report(&report(i % 2, i % 7 == 0, (i % 80) as u32, 0)).unwrap();
            if a.state().phase == Phase::OptimizedSteering {
                if let Some(dir) = d.directive {
                    assert!(dir.path == 1 || dir.probe);
                }
            }
        }
    }

    #[test]
    fn identical_inputs_identical_trajectories() {
        let run = |backend| {
            let cfg = AgentConfig {
                backend,
                ..AgentConfig::default()
            };
            let mut a = AnyAgent::new(1, 2, cfg, 11).unwrap();
            let mut trace = Vec::new();
            for i in 0..300u32 {
                let r = report((i % 3 == 0) as usize, i % 50 == 0, i % 70, (i * 37) % 900);
                let d = a.on_report(&r).unwrap();
                trace.push((a.probs(), a.ema(), d.directive));
            }
            trace
        };
        for b in [Backend::Exact, Backend::Constrained] {
            assert_eq!(run(b), run(b));
        }
    }

    #[test]
    fn directive_wire_format() {
        let d = ControlDirective {
            domain_id: 0x0102_0304,
            path: 1,
            probe: true,
        };
        assert_eq!(d.encode(), [1, 2, 3, 4, 1, 1]);
        assert_eq!(ControlDirective::decode(&d.encode()), Some(d));
        assert_eq!(ControlDirective::decode(&[0; 5]), None);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate(2).is_ok());
        let with = |f: fn(&mut AgentConfig)| {
            let mut c = AgentConfig::default();
            f(&mut c);
            c.validate(2)
        };
        assert!(with(|c| c.alpha = 0.0).is_err());
        assert!(with(|c| c.alpha = 1.0).is_ok());
        assert!(with(|c| c.p_conv = 0.5).is_err());
        assert!(with(|c| c.p_conv = 1.0).is_err());
        assert!(with(|c| c.window = 0).is_err());
        assert!(with(|c| c.reward.beta_queue = 0.7).is_err());
        assert!(AgentConfig::default().validate(1).is_err());
    }
}
