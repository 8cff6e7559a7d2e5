//! Linear reward-inaction probability update and sampling.

use std::ops::Index;

use crate::arith::{FixedPoint, Multiplier, ShiftPair};

/// Exact-backend tolerance on the probability sum.
pub const EXACT_SUM_TOLERANCE: f64 = 1e-9;
/// Constrained-backend tolerance on the probability sum, 2^-12.
pub const FIXED_SUM_TOLERANCE: f64 = 1.0 / 4096.0;
const FIXED_SUM_TOLERANCE_RAW: u32 = 1 << 4;
// renormalise far below the published tolerance so it holds after every step
const EXACT_RENORM_TRIGGER: f64 = 1e-12;

/// Action distribution over path segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<V>(Vec<V>);

impl<V: Copy + PartialOrd> ProbabilityVector<V> {
    pub fn from_vec(v: Vec<V>) -> Self {
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[V] {
        &self.0
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.0.iter().enumerate().skip(1) {
            if *v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> V {
        self.0[self.argmax()]
    }
}

impl<V> Index<usize> for ProbabilityVector<V> {
    type Output = V;

    fn index(&self, i: usize) -> &V {
        &self.0[i]
    }
}

impl ProbabilityVector<f64> {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl ProbabilityVector<FixedPoint> {
    /// Uniform split; the rounding remainder goes to the first entries.
    pub fn uniform_fixed(n: usize) -> Self {
        let one = FixedPoint::ONE.raw();
        let base = one / n as u32;
        let extra = (one - base * n as u32) as usize;
        Self(
            (0..n)
                .map(|i| FixedPoint::from_raw(base + u32::from(i < extra)))
                .collect(),
        )
    }

    pub fn sum_raw(&self) -> u64 {
        self.0.iter().map(|p| u64::from(p.raw())).sum()
    }

    pub fn to_real(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.to_f64()).collect()
    }

    fn renormalize(&mut self) {
        let total = self.sum_raw();
        let one = u64::from(FixedPoint::ONE.raw());
        if total == 0 {
            *self = Self::uniform_fixed(self.0.len());
            return;
        }
        for p in &mut self.0 {
            *p = FixedPoint::from_raw((u64::from(p.raw()) * one / total) as u32);
        }
        let rest = one - self.sum_raw();
        let top = self.argmax();
        self.0[top] = FixedPoint::from_raw(self.0[top].raw() + rest as u32);
    }
}

/// Exact update: the selected entry moves toward 1 by `alpha * reward` of its
/// gap, every other entry shrinks by the same fraction.
pub fn sla_update(
    probs: &ProbabilityVector<f64>,
    selected: usize,
    reward: f64,
    alpha: f64,
) -> ProbabilityVector<f64> {
    let step = alpha * reward;
    if step == 0.0 {
        return probs.clone();
    }
    let mut next: Vec<f64> = probs
        .0
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let v = if j == selected {
                p + step * (1.0 - p)
            } else {
                p - step * p
            };
            v.clamp(0.0, 1.0)
        })
        .collect();
    let sum: f64 = next.iter().sum();
    if (sum - 1.0).abs() > EXACT_RENORM_TRIGGER {
        next.iter_mut().for_each(|p| *p /= sum);
    }
    ProbabilityVector(next)
}

/// Constrained update. `alpha * reward` is formed by shifting the reward
/// register, then applied to each entry through its own two-shift
/// decomposition. Drift past 2^-12 triggers an integer renormalisation.
pub fn sla_update_fixed(
    probs: &ProbabilityVector<FixedPoint>,
    selected: usize,
    reward: FixedPoint,
    alpha: ShiftPair,
) -> ProbabilityVector<FixedPoint> {
    let step = Multiplier::for_fixed(alpha.apply(reward));
    if step.is_zero() {
        return probs.clone();
    }
    let next: Vec<FixedPoint> = probs
        .0
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if j == selected {
                p.saturating_add(step.apply(FixedPoint::ONE.saturating_sub(p)))
                    .min(FixedPoint::ONE)
            } else {
                p.saturating_sub(step.apply(p))
            }
        })
        .collect();
    let mut next = ProbabilityVector(next);
    let drift = next.sum_raw().abs_diff(u64::from(FixedPoint::ONE.raw()));
    if drift > u64::from(FIXED_SUM_TOLERANCE_RAW) {
        next.renormalize();
    }
    next
}

/// Inverse-CDF sampling from a uniform 53-bit draw.
pub fn select_path(probs: &ProbabilityVector<f64>, draw: u64) -> usize {
    let u = (draw >> 11) as f64 * (-53f64).exp2();
    let mut acc = 0.0;
    for (i, &p) in probs.0.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_nonzero(probs.0.iter().map(|&p| p > 0.0))
}

/// Same as [`select_path`] with a 16-bit draw compared against the
/// cumulative register values.
pub fn select_path_fixed(probs: &ProbabilityVector<FixedPoint>, draw: u64) -> usize {
    let u = (draw >> 48) as u32;
    let mut acc = 0u32;
    for (i, p) in probs.0.iter().enumerate() {
        acc = acc.saturating_add(p.raw());
        if u < acc {
            return i;
        }
    }
    last_nonzero(probs.0.iter().map(|p| p.raw() > 0))
}

fn last_nonzero(mut nonzero: impl DoubleEndedIterator<Item = bool> + ExactSizeIterator) -> usize {
    let n = nonzero.len();
    nonzero
        .rposition(|nz| nz)
        .unwrap_or(n.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(v: &[f64]) -> ProbabilityVector<f64> {
        ProbabilityVector::from_vec(v.to_vec())
    }

    #[test]
    fn update_examples() {
        let p = sla_update(&pv(&[0.5, 0.5]), 0, 1.0, 0.5);
        assert_eq!(p.as_slice(), &[0.75, 0.25]);
        let p = sla_update(&pv(&[0.5, 0.5]), 0, 0.0, 0.5);
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        let p = sla_update(&pv(&[0.9, 0.1]), 0, 0.5, 0.5);
        assert!((p[0] - 0.925).abs() < 1e-15 && (p[1] - 0.075).abs() < 1e-15);
    }

    #[test]
    fn fixed_update_examples() {
        let half = ShiftPair::for_factor(0.5);
        let p = ProbabilityVector::uniform_fixed(2);
        let q = sla_update_fixed(&p, 0, FixedPoint::ONE, half);
        assert_eq!(q.to_real(), vec![0.75, 0.25]);
        assert_eq!(sla_update_fixed(&p, 1, FixedPoint::ZERO, half), p);
    }

    #[test]
    fn uniform_fixed_sums_to_one() {
        for n in 2..10 {
            assert_eq!(ProbabilityVector::uniform_fixed(n).sum_raw(), 65536);
        }
        assert_eq!(ProbabilityVector::uniform_fixed(4).to_real(), vec![0.25; 4]);
    }

    #[test]
    fn degenerate_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = rng.next_u64();
            assert_eq!(select_path(&pv(&[1.0, 0.0]), d), 0);
            assert_eq!(select_path(&pv(&[0.0, 1.0]), d), 1);
            let one = ProbabilityVector::from_vec(vec![FixedPoint::ONE, FixedPoint::ZERO]);
            assert_eq!(select_path_fixed(&one, d), 0);
        }
        assert_eq!(select_path(&pv(&[0.0, 1.0]), u64::MAX), 1);
    }

    #[test]
    fn fair_coin_frequency() {
        // n = 10^4, p = 1/2: sd = 0.005, so [0.48, 0.52] is +-4 sd (99.99%)
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = pv(&[0.5, 0.5]);
        let zeros = (0..10_000)
            .filter(|_| select_path(&p, rng.next_u64()) == 0)
            .count();
        let f = zeros as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&f), "{f}");

        let pf = ProbabilityVector::uniform_fixed(2);
        let zeros = (0..10_000)
            .filter(|_| select_path_fixed(&pf, rng.next_u64()) == 0)
            .count();
        let f = zeros as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&f), "{f}");
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(pv(&[0.4, 0.4, 0.2]).argmax(), 0);
        assert_eq!(pv(&[0.2, 0.4, 0.4]).argmax(), 1);
    }

    proptest! {
        #[test]
        fn reinforcement_is_monotone(
            p0 in 0.01f64..0.99,
            reward in 0.001f64..=1.0,
            alpha in 0.01f64..1.0,
            sel in 0usize..2,
        ) {
            let p = pv(&[p0, 1.0 - p0]);
            let q = sla_update(&p, sel, reward, alpha);
            prop_assert!(q[sel] > p[sel]);
            prop_assert!(q[1 - sel] < p[1 - sel]);
            prop_assert!((q.sum() - 1.0).abs() <= EXACT_SUM_TOLERANCE);
        }

        #[test]
        fn zero_reward_is_inaction(raw in 0u32..=65536, sel in 0usize..2, alpha in 0.01f64..1.0) {
            let p = ProbabilityVector::from_vec(vec![FixedPoint::from_raw(raw), FixedPoint::from_raw(65536 - raw)]);
            prop_assert_eq!(sla_update_fixed(&p, sel, FixedPoint::ZERO, ShiftPair::for_factor(alpha)), p);
            let e = pv(&[raw as f64 / 65536.0, 1.0 - raw as f64 / 65536.0]);
            prop_assert_eq!(sla_update(&e, sel, 0.0, alpha), e);
        }
    }
}
