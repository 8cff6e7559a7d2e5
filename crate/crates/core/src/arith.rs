//! Arithmetic used by the agent, in two flavours.
//!
//! The exact backend is plain `f64`. The constrained backend mirrors what a
//! switch pipeline can do: values live in 32-bit registers as Q16.16, scalar
//! multiplications are at most two right-shifts and an add, and the sigmoid
//! is a range-match lookup table built offline.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArithError {
    #[error("steepness must be positive, got {0}")]
    NonPositiveSteepness(f64),
    #[error("a sigmoid table needs at least 2 buckets, got {0}")]
    TooFewBuckets(usize),
    #[error("unknown backend {0:?} (expected \"exact\" or \"constrained\")")]
    UnknownBackend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Exact,
    Constrained,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Constrained => "constrained",
        })
    }
}

impl FromStr for Backend {
    type Err = ArithError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Backend::Exact),
            "constrained" => Ok(Backend::Constrained),
            other => Err(ArithError::UnknownBackend(other.to_string())),
        }
    }
}

pub const FRAC_BITS: u32 = 16;
/// Largest shift the constrained backend will use; anything smaller than
/// one LSB of a Q16.16 probability is gone anyway.
pub const MAX_SHIFT: u8 = FRAC_BITS as u8;

/// Unsigned Q16.16 register value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FixedPoint(u32);

impl FixedPoint {
    pub const ZERO: FixedPoint = FixedPoint(0);
    pub const ONE: FixedPoint = FixedPoint(1 << FRAC_BITS);

    pub const fn from_raw(raw: u32) -> Self {
        FixedPoint(raw)
    }

    pub const fn raw(self) -> u32 {
        self.0
    }

    /// Rounds to the nearest representable value; negatives clamp to zero.
    pub fn from_f64(x: f64) -> Self {
        let scaled = (x * f64::from(1u32 << FRAC_BITS)).round();
        if scaled <= 0.0 {
            FixedPoint(0)
        } else if scaled >= f64::from(u32::MAX) {
            FixedPoint(u32::MAX)
        } else {
            FixedPoint(scaled as u32)
        }
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / f64::from(1u32 << FRAC_BITS)
    }

    pub fn saturating_add(self, o: Self) -> Self {
        FixedPoint(self.0.saturating_add(o.0))
    }

    pub fn saturating_sub(self, o: Self) -> Self {
        FixedPoint(self.0.saturating_sub(o.0))
    }

    pub fn min(self, o: Self) -> Self {
        FixedPoint(self.0.min(o.0))
    }

    /// `self >> s`.
    pub fn shr(self, s: u8) -> Self {
        FixedPoint(self.0 >> s)
    }
}

impl fmt::Display for FixedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// A multiplier realised as `x >> first` plus optionally `x >> second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShiftPair {
    pub first: u8,
    pub second: Option<u8>,
}

impl ShiftPair {
    pub fn factor(&self) -> f64 {
        let p = |s: u8| (-(f64::from(s))).exp2();
        p(self.first) + self.second.map_or(0.0, p)
    }

    pub fn apply(&self, x: FixedPoint) -> FixedPoint {
        let a = x.0 >> self.first;
        let b = self.second.map_or(0, |s| x.0 >> s);
        FixedPoint(a + b)
    }

    /// Best approximation of `factor` in `[0, 1]` by one or two shifts.
    ///
    /// The largest power of two not above `factor` is the only useful
    /// leading term for a pair, so only a handful of candidates are scored.
    /// Ties prefer fewer terms, then smaller shifts.
    pub fn for_factor(factor: f64) -> ShiftPair {
        let factor = factor.clamp(0.0, 1.0);
        let pow = |s: u8| (-(f64::from(s))).exp2();

        // smallest shift whose power does not exceed the factor
        let mut lead = 0u8;
        while lead < MAX_SHIFT && pow(lead) > factor {
            lead += 1;
        }

        let mut candidates = vec![ShiftPair {
            first: lead,
            second: None,
        }];
        if lead > 0 {
            candidates.push(ShiftPair {
                first: lead - 1,
                second: None,
            });
        }
        let rest = factor - pow(lead);
        if rest > 0.0 && lead < MAX_SHIFT {
            let mut b = lead + 1;
            while b < MAX_SHIFT && pow(b) > rest {
                b += 1;
            }
            candidates.push(ShiftPair {
                first: lead,
                second: Some(b),
            });
            if b > lead + 1 {
                candidates.push(ShiftPair {
                    first: lead,
                    second: Some(b - 1),
                });
            }
        }

        let err = |c: &ShiftPair| (c.factor() - factor).abs();
        let terms = |c: &ShiftPair| 1 + usize::from(c.second.is_some());
        candidates
            .into_iter()
            .min_by(|x, y| {
                err(x)
                    .total_cmp(&err(y))
                    .then(terms(x).cmp(&terms(y)))
                    .then(x.first.cmp(&y.first))
                    .then(x.second.cmp(&y.second))
            })
            .expect("at least one candidate")
    }
}

/// Like [`ShiftPair`] but may be empty, for runtime factors that can be zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Multiplier(Option<ShiftPair>);

impl Multiplier {
    pub fn for_factor(factor: f64) -> Self {
        let pair = ShiftPair::for_factor(factor);
        if factor.abs() < (pair.factor() - factor).abs() {
            Multiplier(None)
        } else {
            Multiplier(Some(pair))
        }
    }

    pub fn for_fixed(factor: FixedPoint) -> Self {
        if factor == FixedPoint::ZERO {
            Multiplier(None)
        } else {
            Self::for_factor(factor.to_f64())
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_none()
    }

    pub fn factor(&self) -> f64 {
        self.0.map_or(0.0, |p| p.factor())
    }

    pub fn apply(&self, x: FixedPoint) -> FixedPoint {
        self.0.map_or(FixedPoint::ZERO, |p| p.apply(x))
    }
}

/// `x * alpha` using at most two right-shifts of `x`. `alpha` in `(0, 1]`.
pub fn shift_mul(x: FixedPoint, alpha: f64) -> FixedPoint {
    ShiftPair::for_factor(alpha).apply(x)
}

/// `1 - 1 / (1 + e^{-c (m - tau)})`: near 1 below the threshold, near 0
/// well above it.
pub fn sigmoid_exact(m: f64, tau: f64, c: f64) -> Result<f64, ArithError> {
    if !(c > 0.0) {
        return Err(ArithError::NonPositiveSteepness(c));
    }
    Ok(sigmoid_unchecked(m, tau, c))
}

// Same value written as 1/(1+e^{c(m-tau)}) so large arguments do not
// cancel catastrophically.
pub(crate) fn sigmoid_unchecked(m: f64, tau: f64, c: f64) -> f64 {
    1.0 / (1.0 + (c * (m - tau)).exp())
}

/// Half-width of the tabulated region, in units of `1 / c`.
pub const TABLE_SPAN: f64 = 8.0;
pub const DEFAULT_BUCKETS: usize = 64;

/// Lookup-table sigmoid as it would be installed in a range-match table.
///
/// Buckets split `[tau - 8/c, tau + 8/c]` evenly; anything below lands in the
/// first bucket and anything above in the last.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmoidTable {
    tau: f64,
    steepness: f64,
    lower: f64,
    width: f64,
    outputs: Vec<FixedPoint>,
}

impl SigmoidTable {
    pub fn build(tau: f64, steepness: f64, bucket_count: usize) -> Result<Self, ArithError> {
        if !(steepness > 0.0) {
            return Err(ArithError::NonPositiveSteepness(steepness));
        }
        if bucket_count < 2 {
            return Err(ArithError::TooFewBuckets(bucket_count));
        }
        let lower = tau - TABLE_SPAN / steepness;
        let width = 2.0 * TABLE_SPAN / steepness / bucket_count as f64;
        let outputs = (0..bucket_count)
            .map(|i| {
                let mid = lower + (i as f64 + 0.5) * width;
                FixedPoint::from_f64(sigmoid_unchecked(mid, tau, steepness)).min(FixedPoint::ONE)
            })
            .collect();
        Ok(Self {
            tau,
            steepness,
            lower,
            width,
            outputs,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steepness(&self) -> f64 {
        self.steepness
    }

    pub fn bucket_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn bucket_width(&self) -> f64 {
        self.width
    }

    pub fn outputs(&self) -> &[FixedPoint] {
        &self.outputs
    }

    /// Upper bound of bucket `i`; the last bucket is unbounded.
    pub fn upper_bound(&self, i: usize) -> f64 {
        if i + 1 >= self.outputs.len() {
            f64::INFINITY
        } else {
            self.lower + (i + 1) as f64 * self.width
        }
    }

    pub fn bucket_of(&self, m: f64) -> usize {
        let pos = ((m - self.lower) / self.width).floor();
        if pos.is_nan() || pos < 0.0 {
            0
        } else {
            (pos as usize).min(self.outputs.len() - 1)
        }
    }

    pub fn lookup(&self, m: f64) -> FixedPoint {
        self.outputs[self.bucket_of(m)]
    }

    /// Two columns: bucket upper bound (`inf` for the last) and the Q16.16
    /// raw output.
    pub fn to_text(&self) -> String {
        let mut s = String::from("upper_bound,output_q16\n");
        for (i, out) in self.outputs.iter().enumerate() {
            let ub = self.upper_bound(i);
            if ub.is_finite() {
                let _ = writeln!(s, "{ub:.6},{}", out.raw());
            } else {
                let _ = writeln!(s, "inf,{}", out.raw());
            }
        }
        s
    }
}

/// Inputs for [`backend_gap`].
#[derive(Debug, Clone)]
pub struct GapInputs {
    pub tau: f64,
    pub steepness: f64,
    pub bucket_count: usize,
    pub metrics: Vec<f64>,
    /// `(x, alpha)` pairs, `x` in `[0, 1]`.
    pub products: Vec<(f64, f64)>,
    /// `(ema, reward)` pairs in `[0, 1]`.
    pub ema_steps: Vec<(f64, f64)>,
    pub ema_gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BackendGap {
    pub sigmoid: f64,
    pub multiply: f64,
    pub ema_step: f64,
}

/// Constrained EMA step: `ema + gamma*reward - gamma*ema` with both products
/// done by shifts, clamped to `[0, 1]`.
pub fn ema_step_fixed(ema: FixedPoint, reward: FixedPoint, gamma: ShiftPair) -> FixedPoint {
    ema.saturating_sub(gamma.apply(ema))
        .saturating_add(gamma.apply(reward))
        .min(FixedPoint::ONE)
}

pub fn ema_step_exact(ema: f64, reward: f64, gamma: f64) -> f64 {
    gamma * reward + (1.0 - gamma) * ema
}

/// Largest absolute disagreement between the two backends for each primitive.
///
/// The exact side is fed the already-quantised inputs, so the numbers measure
/// the arithmetic approximation alone.
pub fn backend_gap(inputs: &GapInputs) -> Result<BackendGap, ArithError> {
    let table = SigmoidTable::build(inputs.tau, inputs.steepness, inputs.bucket_count)?;
    let mut gap = BackendGap::default();
    for &m in &inputs.metrics {
        let exact = sigmoid_exact(m, inputs.tau, inputs.steepness)?;
        gap.sigmoid = gap.sigmoid.max((table.lookup(m).to_f64() - exact).abs());
    }
    for &(x, alpha) in &inputs.products {
        let xf = FixedPoint::from_f64(x);
        let exact = xf.to_f64() * alpha;
        gap.multiply = gap.multiply.max((shift_mul(xf, alpha).to_f64() - exact).abs());
    }
    let gamma = ShiftPair::for_factor(inputs.ema_gamma);
    for &(e, r) in &inputs.ema_steps {
        let (ef, rf) = (FixedPoint::from_f64(e), FixedPoint::from_f64(r));
        let exact = ema_step_exact(ef.to_f64(), rf.to_f64(), inputs.ema_gamma);
        let fixed = ema_step_fixed(ef, rf, gamma).to_f64();
        gap.ema_step = gap.ema_step.max((fixed - exact).abs());
    }
    Ok(gap)
}
