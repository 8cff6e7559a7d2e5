use std::fmt::Debug;

use crate::arith::{ema_step_exact, ema_step_fixed, ArithError, Backend, FixedPoint, ShiftPair};
use crate::telemetry::SegmentMetrics;

use super::reward::{compute_reward, RewardParams, RewardTables};
use super::update::{select_path, select_path_fixed, sla_update, sla_update_fixed, ProbabilityVector};
use super::AgentConfig;

/// The arithmetic an agent runs on. Implemented once with `f64` and once
/// with Q16.16 registers, shifts and lookup tables.
pub trait Arithmetic: Clone + Send + Sync {
    type Value: Copy + PartialEq + PartialOrd + Debug + Send + Sync;

    const BACKEND: Backend;

    fn to_real(v: Self::Value) -> f64;
    fn from_real(x: f64) -> Self::Value;
    fn uniform(n: usize) -> ProbabilityVector<Self::Value>;
    fn reward(&self, metrics: SegmentMetrics) -> Self::Value;
    fn update(
        &self,
        probs: &ProbabilityVector<Self::Value>,
        selected: usize,
        reward: Self::Value,
    ) -> ProbabilityVector<Self::Value>;
    fn ema_step(&self, ema: Self::Value, reward: Self::Value) -> Self::Value;
    fn select(probs: &ProbabilityVector<Self::Value>, draw: u64) -> usize;
    fn reached(&self, p: Self::Value) -> bool;
}

#[derive(Debug, Clone)]
pub struct ExactArith {
    params: RewardParams,
    alpha: f64,
    gamma: f64,
    p_conv: f64,
}

impl ExactArith {
    pub fn new(config: &AgentConfig) -> Self {
        Self {
            params: config.reward,
            alpha: config.alpha,
            gamma: config.ema_gamma,
            p_conv: config.p_conv,
        }
    }
}

impl Arithmetic for ExactArith {
    type Value = f64;

    const BACKEND: Backend = Backend::Exact;

    fn to_real(v: f64) -> f64 {
        v
    }

    fn from_real(x: f64) -> f64 {
        x
    }

    fn uniform(n: usize) -> ProbabilityVector<f64> {
        ProbabilityVector::uniform(n)
    }

    fn reward(&self, metrics: SegmentMetrics) -> f64 {
        compute_reward(metrics, &self.params)
    }

    fn update(&self, probs: &ProbabilityVector<f64>, selected: usize, reward: f64) -> ProbabilityVector<f64> {
        sla_update(probs, selected, reward, self.alpha)
    }

    fn ema_step(&self, ema: f64, reward: f64) -> f64 {
        ema_step_exact(ema, reward, self.gamma)
    }

    fn select(probs: &ProbabilityVector<f64>, draw: u64) -> usize {
        select_path(probs, draw)
    }

    fn reached(&self, p: f64) -> bool {
        p >= self.p_conv
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedArith {
    tables: RewardTables,
    alpha: ShiftPair,
    gamma: ShiftPair,
    p_conv: FixedPoint,
}

impl ConstrainedArith {
    pub fn new(config: &AgentConfig) -> Result<Self, ArithError> {
        Ok(Self {
            tables: RewardTables::build(&config.reward, config.table_buckets)?,
            alpha: ShiftPair::for_factor(config.alpha),
            gamma: ShiftPair::for_factor(config.ema_gamma),
            p_conv: FixedPoint::from_f64(config.p_conv),
        })
    }

    pub fn tables(&self) -> &RewardTables {
        &self.tables
    }
}

impl Arithmetic for ConstrainedArith {
    type Value = FixedPoint;

    const BACKEND: Backend = Backend::Constrained;

    fn to_real(v: FixedPoint) -> f64 {
        v.to_f64()
    }

    fn from_real(x: f64) -> FixedPoint {
        FixedPoint::from_f64(x)
    }

    fn uniform(n: usize) -> ProbabilityVector<FixedPoint> {
        ProbabilityVector::uniform_fixed(n)
    }

    fn reward(&self, metrics: SegmentMetrics) -> FixedPoint {
        self.tables.reward(metrics)
    }

    fn update(
        &self,
        probs: &ProbabilityVector<FixedPoint>,
        selected: usize,
        reward: FixedPoint,
    ) -> ProbabilityVector<FixedPoint> {
        sla_update_fixed(probs, selected, reward, self.alpha)
    }

    fn ema_step(&self, ema: FixedPoint, reward: FixedPoint) -> FixedPoint {
        ema_step_fixed(ema, reward, self.gamma)
    }

    fn select(probs: &ProbabilityVector<FixedPoint>, draw: u64) -> usize {
        select_path_fixed(probs, draw)
    }

    fn reached(&self, p: FixedPoint) -> bool {
        p >= self.p_conv
    }
}
