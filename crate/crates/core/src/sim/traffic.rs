use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("flow {flow}: {reason}")]
    Invalid { flow: String, reason: String },
}

/// How a source paces its packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TrafficMode {
    /// Constant bit rate.
    Cbr { rate_pps: f64 },
    /// Sends at `rate_pps` during exponentially distributed on periods and
    /// stays silent during exponentially distributed off periods.
    OnOff {
        rate_pps: f64,
        mean_on_us: f64,
        mean_off_us: f64,
    },
    /// Additive increase per delivered batch, halving on loss.
    RateResponsive {
        initial_pps: f64,
        #[serde(default = "defaults::min_pps")]
        min_pps: f64,
        max_pps: f64,
        #[serde(default = "defaults::increase_pps")]
        increase_pps: f64,
        #[serde(default = "defaults::batch")]
        batch: u64,
        #[serde(default = "defaults::holdoff_us")]
        holdoff_us: u64,
    },
}

mod defaults {
    pub fn min_pps() -> f64 {
        100.0
    }
    pub fn increase_pps() -> f64 {
        500.0
    }
    pub fn batch() -> u64 {
        50
    }
    pub fn holdoff_us() -> u64 {
        2_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub name: String,
    pub source: NodeId,
    pub destination: NodeId,
    #[serde(default)]
    pub start_us: u64,
    #[serde(default)]
    pub stop_us: Option<u64>,
    #[serde(default = "default_packet_bytes")]
    pub packet_bytes: u32,
    #[serde(flatten)]
    pub mode: TrafficMode,
}

fn default_packet_bytes() -> u32 {
    1000
}

impl FlowSpec {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |reason: &str| {
            Err(TrafficError::Invalid {
                flow: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if self.source == self.destination {
            return bad("source and destination are the same node");
        }
        if self.packet_bytes == 0 {
            return bad("packet_bytes must be positive");
        }
        if let Some(stop) = self.stop_us {
            if stop <= self.start_us {
                return bad("stop_us must be after start_us");
            }
        }
        match self.mode {
            TrafficMode::Cbr { rate_pps } => {
                if !positive(rate_pps) {
                    return bad("rate_pps must be positive");
                }
            }
            TrafficMode::OnOff {
                rate_pps,
                mean_on_us,
                mean_off_us,
            } => {
                if !positive(rate_pps) || !positive(mean_on_us) || !positive(mean_off_us) {
                    return bad("rate_pps, mean_on_us and mean_off_us must be positive");
                }
            }
            TrafficMode::RateResponsive {
                initial_pps,
                min_pps,
                max_pps,
                increase_pps,
                batch,
                ..
            } => {
                if !positive(min_pps) || !(min_pps <= initial_pps && initial_pps <= max_pps) {
                    return bad("need 0 < min_pps <= initial_pps <= max_pps");
                }
                if !positive(increase_pps) || batch == 0 {
                    return bad("increase_pps and batch must be positive");
                }
            }
        }
        Ok(())
    }
}

fn interval_us(rate_pps: f64, k: u64) -> u64 {
    (k as f64 * 1e6 / rate_pps).round() as u64
}

/// Runtime state of one source.
#[derive(Debug, Clone)]
pub struct Source {
    spec: FlowSpec,
    rng: ChaCha8Rng,
    /// Start of the current on period (or of the flow).
    epoch: u64,
    /// Packets sent in the current epoch.
    sent: u64,
    on_until: u64,
    rate: f64,
    delivered_in_batch: u64,
    last_cut: Option<u64>,
}

impl Source {
    pub fn new(spec: FlowSpec, seed: u64) -> Self {
        let rate = match spec.mode {
            TrafficMode::Cbr { rate_pps } | TrafficMode::OnOff { rate_pps, .. } => rate_pps,
            TrafficMode::RateResponsive { initial_pps, .. } => initial_pps,
        };
        let mut s = Self {
            epoch: spec.start_us,
            sent: 0,
            on_until: u64::MAX,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rate,
            delivered_in_batch: 0,
            last_cut: None,
            spec,
        };
        if let TrafficMode::OnOff { mean_on_us, .. } = s.spec.mode {
            s.on_until = s.epoch + s.draw(mean_on_us);
        }
        s
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    /// Current sending rate, packets per second.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn draw(&mut self, mean: f64) -> u64 {
        let exp = Exp::new(1.0 / mean).expect("validated mean");
        (exp.sample(&mut self.rng).round() as u64).max(1)
    }

    pub fn first_tick(&self) -> u64 {
        self.spec.start_us
    }

    /// Records a send at `now` and returns the next tick time, if the flow
    /// has not ended.
    pub fn advance(&mut self, now: u64) -> Option<u64> {
        self.sent += 1;
        let next = match self.spec.mode {
            TrafficMode::Cbr { rate_pps } => self.epoch + interval_us(rate_pps, self.sent),
            TrafficMode::OnOff {
                rate_pps,
                mean_on_us,
                mean_off_us,
            } => {
                let mut t = self.epoch + interval_us(rate_pps, self.sent);
                while t >= self.on_until {
                    let off = self.draw(mean_off_us);
                    self.epoch = self.on_until + off;
                    self.sent = 0;
                    self.on_until = self.epoch + self.draw(mean_on_us);
                    t = self.epoch;
                }
                t
            }
            TrafficMode::RateResponsive { .. } => now + interval_us(self.rate, 1).max(1),
        };
        match self.spec.stop_us {
            Some(stop) if next >= stop => None,
            _ => Some(next),
        }
    }

    pub fn on_loss(&mut self, now: u64) {
        if let TrafficMode::RateResponsive {
            min_pps, holdoff_us, ..
        } = self.spec.mode
        {
            if self.last_cut.is_some_and(|t| now < t + holdoff_us) {
                return;
            }
            self.rate = (self.rate / 2.0).max(min_pps);
            self.last_cut = Some(now);
            self.delivered_in_batch = 0;
        }
    }

    pub fn on_delivered(&mut self) {
        if let TrafficMode::RateResponsive {
            max_pps,
            increase_pps,
            batch,
            ..
        } = self.spec.mode
        {
            self.delivered_in_batch += 1;
            if self.delivered_in_batch >= batch {
                self.delivered_in_batch = 0;
                self.rate = (self.rate + increase_pps).min(max_pps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow(mode: TrafficMode) -> FlowSpec {
        FlowSpec {
            name: "f".into(),
            source: NodeId(0),
            destination: NodeId(1),
            start_us: 0,
            stop_us: Some(1_000_000),
            packet_bytes: 1000,
            mode,
        }
    }

    fn ticks(mut s: Source) -> Vec<u64> {
        let mut out = vec![];
        let mut t = Some(s.first_tick());
        while let Some(now) = t {
            out.push(now);
            t = s.advance(now);
        }
        out
    }

    #[test]
    fn cbr_spacing() {
        let t = ticks(Source::new(flow(TrafficMode::Cbr { rate_pps: 1000.0 }), 1));
        assert_eq!(t.len(), 1000);
        assert!(t.windows(2).all(|w| w[1] - w[0] == 1000));
    }

    #[test]
    fn on_off_is_reproducible_and_bursty() {
        let mode = TrafficMode::OnOff {
            rate_pps: 10_000.0,
            mean_on_us: 10_000.0,
            mean_off_us: 10_000.0,
        };
        let a = ticks(Source::new(flow(mode.clone()), 9));
        let b = ticks(Source::new(flow(mode.clone()), 9));
        let c = ticks(Source::new(flow(mode), 10));
        assert_eq!(a, b);
        assert_ne!(a, c);
        // roughly half the time is spent off
        assert!(a.len() > 2_500 && a.len() < 7_500, "{}", a.len());
        assert!(a.windows(2).any(|w| w[1] - w[0] > 1_000));
    }

    #[test]
    fn rate_responsive_reacts() {
        let mode = TrafficMode::RateResponsive {
            initial_pps: 8000.0,
            min_pps: 100.0,
            max_pps: 20000.0,
            increase_pps: 500.0,
            batch: 10,
            holdoff_us: 1000,
        };
        let mut s = Source::new(flow(mode), 1);
        s.on_loss(0);
        assert_eq!(s.rate(), 4000.0);
        s.on_loss(500);
        assert_eq!(s.rate(), 4000.0, "holdoff");
        for _ in 0..10 {
            s.on_delivered();
        }
        assert_eq!(s.rate(), 4500.0);
    }

    #[test]
    fn validation() {
        assert!(flow(TrafficMode::Cbr { rate_pps: 0.0 }).validate().is_err());
        let mut f = flow(TrafficMode::Cbr { rate_pps: 1.0 });
        f.destination = f.source;
        assert!(f.validate().is_err());
    }
}
