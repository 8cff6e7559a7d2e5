use std::collections::BTreeMap;
use std::fmt::Write;

use crate::agent::{AgentStats, Phase};
use crate::telemetry::TelemetryReport;

use super::packet::FlowTag;

/// A data packet that reached its destination host.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub packet_id: u64,
    pub flow: usize,
    pub created_at: u64,
    pub delivered_at: u64,
    /// Path taken through the first domain crossed, if any.
    pub path: Option<usize>,
    pub payload_bytes: u32,
}

/// Agent state right after it handled one report.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSnapshot {
    pub time: u64,
    pub domain_id: u32,
    pub path_index: usize,
    pub is_probe: bool,
    pub reward: f64,
    pub phase: Phase,
    pub probs: Vec<f64>,
    pub ema: Vec<f64>,
    /// Path named by the directive sent in response, if one was sent.
    pub selected: Option<usize>,
}

/// Periodic sample of the first domain, as seen by its collector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: u64,
    /// Latest reported segment queue length per path, packets.
    pub queue: Vec<u64>,
    /// Latest reported segment dequeue delay per path, microseconds.
    pub delay: Vec<u64>,
    /// Decision-node register.
    pub selected_path: usize,
    pub phase: Option<Phase>,
}

/// A directive that changed a decision node's register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterChange {
    pub time: u64,
    pub domain_id: u32,
    pub from: usize,
    pub to: usize,
    /// When the collector sent the directive.
    pub issued_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseChange {
    pub time: u64,
    pub domain_id: u32,
    pub phase: Phase,
    pub learned_path: Option<usize>,
    /// Probability updates applied so far.
    pub updates: u64,
    /// Maximum path probability right after the report that caused it.
    pub max_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

impl Counts {
    pub fn balanced(&self) -> bool {
        self.injected == self.delivered + self.dropped + self.in_flight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DropCounts {
    pub queue_full: u64,
    pub link_down: u64,
    pub misrouted: u64,
    pub telemetry: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.queue_full + self.link_down + self.misrouted + self.telemetry
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSummary {
    pub name: String,
    pub counts: Counts,
    pub delivered_bytes: u64,
    /// Delivered payload over the interval from flow start to horizon, bits/s.
    pub goodput_bps: f64,
}

/// Per-hop bookkeeping kept by the simulator itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopCheck {
    pub packet_id: u64,
    pub switch_id: u32,
    pub enqueued_at: u64,
    pub dequeued_at: u64,
    pub queue_length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedRecord {
    pub time: u64,
    pub domain_id: u32,
    pub packet_id: u64,
    pub path: usize,
    pub probe: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectiveApplied {
    pub time: u64,
    pub domain_id: u32,
    pub path: usize,
    pub probe: bool,
}

/// Optional fine-grained logs for cross-checking.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetailedLog {
    pub hops: Vec<HopCheck>,
    /// Reports as extracted at the sink, with the id of the packet they came from.
    pub reports: Vec<(u64, TelemetryReport)>,
    pub embeds: Vec<EmbedRecord>,
    pub directives: Vec<DirectiveApplied>,
    /// Events scheduled earlier than the event that scheduled them.
    pub causality_violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSummary {
    pub domain_id: u32,
    /// First data packet steered by the decision node.
    pub first_data_us: Option<u64>,
    pub stats: Option<AgentStats>,
    pub final_phase: Option<Phase>,
    pub final_learned_path: Option<usize>,
    pub final_probs: Vec<f64>,
    pub final_register: usize,
    pub data_steered: u64,
    pub probes_sent: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub seed: u64,
    pub horizon_us: u64,
    pub num_paths: usize,
    pub deliveries: Vec<DeliveryRecord>,
    pub snapshots: Vec<AgentSnapshot>,
    pub samples: Vec<Sample>,
    pub register_changes: Vec<RegisterChange>,
    pub phase_changes: Vec<PhaseChange>,
    pub flows: Vec<FlowSummary>,
    pub conservation: BTreeMap<FlowTag, Counts>,
    pub drops: DropCounts,
    pub domains: Vec<DomainSummary>,
    pub events_processed: u64,
    pub detailed: Option<DetailedLog>,
}

impl SimulationTrace {
    /// First time the first domain's agent entered steering, measured from
    /// its first steered data packet.
    pub fn convergence_time_us(&self) -> Option<u64> {
        let d = self.domains.first()?;
        let start = d.first_data_us?;
        self.phase_changes
            .iter()
            .find(|c| c.domain_id == d.domain_id && c.phase == Phase::OptimizedSteering)
            .map(|c| c.time - start)
    }

    /// Updates applied before the first convergence.
    pub fn convergence_updates(&self) -> Option<u64> {
        let d = self.domains.first()?;
        self.phase_changes
            .iter()
            .find(|c| c.domain_id == d.domain_id && c.phase == Phase::OptimizedSteering)
            .map(|c| c.updates)
    }

    pub fn total_goodput_bps(&self) -> f64 {
        self.flows.iter().map(|f| f.goodput_bps).sum()
    }

    pub fn path_switches(&self) -> usize {
        self.register_changes.len()
    }

    pub fn timeseries_csv(&self) -> String {
        let mut out = String::from("time_us");
        for p in 0..self.num_paths {
            write!(out, ",queue_pkts_p{p}").unwrap();
        }
        for p in 0..self.num_paths {
            write!(out, ",delay_us_p{p}").unwrap();
        }
        out.push_str(",selected_path,phase\n");
        for s in &self.samples {
            write!(out, "{}", s.time).unwrap();
            for q in &s.queue {
                write!(out, ",{q}").unwrap();
            }
            for d in &s.delay {
                write!(out, ",{d}").unwrap();
            }
            let phase = s.phase.map_or("static".to_string(), |p| p.to_string());
            writeln!(out, ",{},{}", s.selected_path, phase).unwrap();
        }
        out
    }

    pub fn agent_csv(&self) -> String {
        let n = self.num_paths;
        let mut out = String::from("time_us,domain_id,path_index,is_probe,reward,phase");
        for p in 0..n {
            write!(out, ",p{p}").unwrap();
        }
        for p in 0..n {
            write!(out, ",ema{p}").unwrap();
        }
        out.push_str(",selected\n");
        for s in &self.snapshots {
            write!(
                out,
                "{},{},{},{},{:.6},{}",
                s.time,
                s.domain_id,
                s.path_index,
                u8::from(s.is_probe),
                s.reward,
                s.phase
            )
            .unwrap();
            for p in &s.probs {
                write!(out, ",{p:.6}").unwrap();
            }
            for e in &s.ema {
                write!(out, ",{e:.6}").unwrap();
            }
            match s.selected {
                Some(p) => writeln!(out, ",{p}").unwrap(),
                None => out.push_str(",\n"),
            }
        }
        out
    }

    /// One `metric,value,unit` row per summary figure.
    pub fn summary_csv(&self) -> String {
        let mut rows: Vec<(String, String, &str)> = vec![
            ("seed".into(), self.seed.to_string(), "-"),
            ("horizon".into(), self.horizon_us.to_string(), "us"),
            (
                "goodput_total".into(),
                format!("{:.3}", self.total_goodput_bps()),
                "bit/s",
            ),
        ];
        for f in &self.flows {
            rows.push((format!("goodput.{}", f.name), format!("{:.3}", f.goodput_bps), "bit/s"));
            rows.push((format!("injected.{}", f.name), f.counts.injected.to_string(), "packets"));
            rows.push((format!("delivered.{}", f.name), f.counts.delivered.to_string(), "packets"));
            rows.push((format!("dropped.{}", f.name), f.counts.dropped.to_string(), "packets"));
        }
        rows.push(("drops_queue_full".into(), self.drops.queue_full.to_string(), "packets"));
        rows.push(("drops_link_down".into(), self.drops.link_down.to_string(), "packets"));
        rows.push(("drops_misrouted".into(), self.drops.misrouted.to_string(), "packets"));
        rows.push((
            "convergence_time".into(),
            self.convergence_time_us().map_or(String::new(), |t| t.to_string()),
            "us",
        ));
        rows.push((
            "convergence_updates".into(),
            self.convergence_updates().map_or(String::new(), |t| t.to_string()),
            "updates",
        ));
        rows.push(("path_switches".into(), self.path_switches().to_string(), "count"));
        for d in &self.domains {
            if let Some(st) = d.stats {
                rows.push((format!("reports.d{}", d.domain_id), st.reports.to_string(), "count"));
                rows.push((format!("reentries.d{}", d.domain_id), st.reentries.to_string(), "count"));
            }
            rows.push((
                format!("final_path.d{}", d.domain_id),
                d.final_learned_path.unwrap_or(d.final_register).to_string(),
                "index",
            ));
        }
        let mut out = String::from("metric,value,unit\n");
        for (m, v, u) in rows {
            writeln!(out, "{m},{v},{u}").unwrap();
        }
        out
    }
}
