use serde::{Deserialize, Serialize};

use crate::arith::{sigmoid_unchecked, FixedPoint, ShiftPair, SigmoidTable, ArithError};
use crate::telemetry::SegmentMetrics;

use super::ConfigError;

/// Weights and sigmoid shapes for the two congestion signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub beta_queue: f64,
    pub beta_delay: f64,
    /// Queue-length threshold, packets.
    pub tau_queue: f64,
    /// Dequeue-delay threshold, microseconds.
    pub tau_delay: f64,
    pub steepness_queue: f64,
    pub steepness_delay: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            beta_queue: 0.5,
            beta_delay: 0.5,
            tau_queue: 20.0,
            tau_delay: 500.0,
            steepness_queue: 0.3,
            steepness_delay: 0.01,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let in_unit = |b: f64| (0.0..=1.0).contains(&b);
        if !in_unit(self.beta_queue) || !in_unit(self.beta_delay) {
            return Err(ConfigError::Invalid("reward weights must lie in [0, 1]".into()));
        }
        if (self.beta_queue + self.beta_delay - 1.0).abs() > f64::EPSILON {
            return Err(ConfigError::Invalid(format!(
                "reward weights must sum to 1, got {} + {}",
                self.beta_queue, self.beta_delay
            )));
        }
        if !(self.steepness_queue > 0.0) || !(self.steepness_delay > 0.0) {
            return Err(ConfigError::Invalid("sigmoid steepness must be positive".into()));
        }
        Ok(())
    }
}

/// `beta_q * f(Q) + beta_d * f(D)` in exact arithmetic.
pub fn compute_reward(metrics: SegmentMetrics, params: &RewardParams) -> f64 {
    let fq = sigmoid_unchecked(metrics.queue as f64, params.tau_queue, params.steepness_queue);
    let fd = sigmoid_unchecked(metrics.delay as f64, params.tau_delay, params.steepness_delay);
    params.beta_queue * fq + params.beta_delay * fd
}

/// The constrained reward pipeline: two lookup tables and shift-weighted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTables {
    pub queue: SigmoidTable,
    pub delay: SigmoidTable,
    pub beta_queue: ShiftPair,
    pub beta_delay: ShiftPair,
}

impl RewardTables {
    pub fn build(params: &RewardParams, buckets: usize) -> Result<Self, ArithError> {
        Ok(Self {
            queue: SigmoidTable::build(params.tau_queue, params.steepness_queue, buckets)?,
            delay: SigmoidTable::build(params.tau_delay, params.steepness_delay, buckets)?,
            beta_queue: ShiftPair::for_factor(params.beta_queue),
            beta_delay: ShiftPair::for_factor(params.beta_delay),
        })
    }

    pub fn reward(&self, metrics: SegmentMetrics) -> FixedPoint {
        let q = self.beta_queue.apply(self.queue.lookup(metrics.queue as f64));
        let d = self.beta_delay.apply(self.delay.lookup(metrics.delay as f64));
        q.saturating_add(d).min(FixedPoint::ONE)
    }
}
