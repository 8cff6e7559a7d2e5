//! Deterministic discrete-event packet simulator.
//!
//! Time is kept in whole microseconds. Every directed link has an egress
//! port at its tail: a bounded FIFO served at the link's capacity, followed
//! by the propagation delay. Decision nodes embed telemetry headers and steer
//! data packets onto the segment named by their path register; segment nodes
//! append a hop record when a packet leaves their queue; the domain endpoint
//! strips the header and sends a report to the collector, whose agent answers
//! with control packets that travel back over the network.

mod event;
mod packet;
mod port;
mod scenario;
mod trace;
mod traffic;

use std::collections::{BTreeMap, HashMap};

use bytes::Bytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{AgentConfig, AnyAgent, ConfigError, ControlDirective, Phase};
use crate::telemetry::{aggregate_with, extract_and_clone, HopRecord, IntFrame, IntHeader, TelemetryReport};
use crate::topology::{validate_topology, Domain, LinkId, NodeId, Topology, Violation};

pub use event::{Event, EventKind, EventQueue};
pub use packet::{FlowTag, IntContext, Packet, PacketKind};
pub use port::{measure_dequeue, DequeueSample, Port, REFERENCE_PACKET_BYTES};
pub use scenario::{Change, ScenarioEvent};
pub use trace::{
    AgentSnapshot, Counts, DeliveryRecord, DetailedLog, DirectiveApplied, DomainSummary, DropCounts,
    EmbedRecord, FlowSummary, HopCheck, PhaseChange, RegisterChange, Sample, SimulationTrace,
};
pub use traffic::{FlowSpec, Source, TrafficError, TrafficMode};

/// Who drives the decision-node registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Control {
    /// One agent per domain, fed by telemetry.
    #[default]
    Agent,
    /// Agents disabled, no telemetry; every domain forwards on this path.
    Static { path: usize },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub topology: Topology,
    pub domains: Vec<Domain>,
    pub agent: AgentConfig,
    pub control: Control,
    pub flows: Vec<FlowSpec>,
    pub events: Vec<ScenarioEvent>,
    pub seed: u64,
    pub horizon_us: u64,
    /// Spacing of time-series samples; 0 disables sampling.
    pub sample_interval_us: u64,
    /// Size of background cross-traffic packets.
    pub background_packet_bytes: u32,
    /// Keep per-hop, per-embed and per-directive logs.
    pub detailed: bool,
}

impl SimConfig {
    pub fn new(topology: Topology, domains: Vec<Domain>) -> Self {
        Self {
            topology,
            domains,
            agent: AgentConfig::default(),
            control: Control::Agent,
            flows: Vec::new(),
            events: Vec::new(),
            seed: 0,
            horizon_us: 1_000_000,
            sample_interval_us: 1_000,
            background_packet_bytes: 1000,
            detailed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid topology: {}", join(.0))]
    Topology(Vec<Violation>),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Agent(#[from] ConfigError),
    #[error("invalid scenario event: {0}")]
    Scenario(String),
    #[error("horizon must be positive")]
    ZeroHorizon,
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Checks a configuration without running it.
pub fn validate(config: &SimConfig) -> Result<(), SimError> {
    Simulator::new(config).map(|_| ())
}

/// Runs one simulation to the horizon.
pub fn run(config: &SimConfig) -> Result<SimulationTrace, SimError> {
    Simulator::new(config)?.run()
}

/// Derives an independent stream seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
struct DecisionState {
    register: usize,
    probe_target: Option<usize>,
    data_steered: u64,
    probes_sent: u64,
    probe_rr: usize,
    first_data: Option<u64>,
}

#[derive(Debug, Clone)]
struct Background {
    domain: usize,
    path: usize,
    rate_pps: f64,
    active: bool,
    generation: u64,
    epoch: u64,
    sent: u64,
}

#[derive(Debug, Clone, Default)]
struct FlowTally {
    counts: Counts,
    delivered_bytes: u64,
}

struct Simulator<'a> {
    cfg: &'a SimConfig,
    now: u64,
    queue: EventQueue,
    ports: Vec<Port>,
    routes: BTreeMap<NodeId, BTreeMap<NodeId, LinkId>>,
    decision_of: HashMap<NodeId, Vec<usize>>,
    decisions: Vec<DecisionState>,
    agents: Vec<Option<AnyAgent>>,
    sources: Vec<Source>,
    background: Vec<Background>,
    background_index: HashMap<(usize, usize), usize>,
    last_metrics: Vec<Vec<(u64, u64)>>,
    next_packet_id: u64,
    tallies: BTreeMap<FlowTag, FlowTally>,
    drops: DropCounts,
    deliveries: Vec<DeliveryRecord>,
    snapshots: Vec<AgentSnapshot>,
    samples: Vec<Sample>,
    register_changes: Vec<RegisterChange>,
    phase_changes: Vec<PhaseChange>,
    detailed: Option<DetailedLog>,
    events_processed: u64,
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self, SimError> {
        if cfg.horizon_us == 0 {
            return Err(SimError::ZeroHorizon);
        }
        validate_topology(&cfg.topology, &cfg.domains).map_err(SimError::Topology)?;
        for f in &cfg.flows {
            f.validate()?;
            for n in [f.source, f.destination] {
                if !cfg.topology.is_host(n) {
                    return Err(TrafficError::Invalid {
                        flow: f.name.clone(),
                        reason: format!("{n} is not a host"),
                    }
                    .into());
                }
            }
        }

        let mut background = Vec::new();
        let mut background_index = HashMap::new();
        for e in &cfg.events {
            if e.at_us > cfg.horizon_us {
                return Err(SimError::Scenario(format!(
                    "event at {} us is past the horizon",
                    e.at_us
                )));
            }
            match e.change {
                Change::LinkCapacity {
                    from, to, multiplier, ..
                } => {
                    if cfg.topology.link_between(from, to).is_none() {
                        return Err(SimError::Scenario(format!("no link {from} -> {to}")));
                    }
                    if !(multiplier >= 0.0 && multiplier.is_finite()) {
                        return Err(SimError::Scenario(format!("bad capacity multiplier {multiplier}")));
                    }
                }
                Change::BackgroundStart { domain, path, .. } | Change::BackgroundStop { domain, path } => {
                    let d = cfg
                        .domains
                        .iter()
                        .position(|x| x.id == domain)
                        .ok_or_else(|| SimError::Scenario(format!("unknown domain {domain}")))?;
                    if path >= cfg.domains[d].num_paths() {
                        return Err(SimError::Scenario(format!("domain {domain} has no path {path}")));
                    }
                    if let Change::BackgroundStart { load, .. } = e.change {
                        if !(load > 0.0 && load.is_finite()) {
                            return Err(SimError::Scenario(format!("bad background load {load}")));
                        }
                    }
                    background_index.entry((d, path)).or_insert_with(|| {
                        background.push(Background {
                            domain: d,
                            path,
                            rate_pps: 0.0,
                            active: false,
                            generation: 0,
                            epoch: 0,
                            sent: 0,
                        });
                        background.len() - 1
                    });
                }
            }
        }

        let mut agents = Vec::new();
        let mut decisions = Vec::new();
        let mut decision_of: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, d) in cfg.domains.iter().enumerate() {
            decision_of.entry(d.decision_node).or_default().push(i);
            let (agent, register) = match cfg.control {
                Control::Agent => {
                    let mut a = AnyAgent::new(d.id, d.num_paths(), cfg.agent.clone(), sub_seed(cfg.seed, 1 + i as u64))?;
                    let first = a.select();
                    (Some(a), first)
                }
                Control::Static { path } => {
                    if path >= d.num_paths() {
                        return Err(SimError::Scenario(format!(
                            "static path {path} but domain {} has {} paths",
                            d.id,
                            d.num_paths()
                        )));
                    }
                    (None, path)
                }
            };
            agents.push(agent);
            decisions.push(DecisionState {
                register,
                probe_target: None,
                data_steered: 0,
                probes_sent: 0,
                probe_rr: 0,
                first_data: None,
            });
        }

        let mut destinations: Vec<NodeId> = cfg.flows.iter().map(|f| f.destination).collect();
        for d in &cfg.domains {
            destinations.push(d.collector_node);
            destinations.push(d.decision_node);
            destinations.push(d.endpoint_node);
        }
        destinations.sort();
        destinations.dedup();
        let routes = destinations
            .into_iter()
            .map(|n| (n, cfg.topology.next_hops_toward(n)))
            .collect();

        let ports = cfg
            .topology
            .links()
            .iter()
            .map(|l| Port::new(l.params.queue_capacity, l.params.capacity_pps))
            .collect();
        let sources = cfg
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| Source::new(f.clone(), sub_seed(cfg.seed, 1000 + i as u64)))
            .collect();

        Ok(Self {
            cfg,
            now: 0,
            queue: EventQueue::default(),
            ports,
            routes,
            decision_of,
            decisions,
            agents,
            sources,
            background,
            background_index,
            last_metrics: cfg.domains.iter().map(|d| vec![(0, 0); d.num_paths()]).collect(),
            next_packet_id: 0,
            tallies: BTreeMap::new(),
            drops: DropCounts::default(),
            deliveries: Vec::new(),
            snapshots: Vec::new(),
            samples: Vec::new(),
            register_changes: Vec::new(),
            phase_changes: Vec::new(),
            detailed: cfg.detailed.then(DetailedLog::default),
            events_processed: 0,
        })
    }

    fn schedule(&mut self, time: u64, kind: EventKind) {
        if time < self.now {
            if let Some(d) = self.detailed.as_mut() {
                d.causality_violations += 1;
            }
        }
        self.queue.push(time, kind);
    }

    fn run(mut self) -> Result<SimulationTrace, SimError> {
        for i in 0..self.sources.len() {
            let t = self.sources[i].first_tick();
            self.schedule(t, EventKind::SourceTick { flow: i });
        }
        for i in 0..self.cfg.events.len() {
            self.schedule(self.cfg.events[i].at_us, EventKind::ScenarioChange { index: i });
        }
        if self.cfg.sample_interval_us > 0 && !self.cfg.domains.is_empty() {
            self.schedule(0, EventKind::Sample);
        }

        while let Some(t) = self.queue.peek_time() {
            if t > self.cfg.horizon_us {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.now = ev.time;
            self.events_processed += 1;
            self.handle(ev.kind);
        }
        Ok(self.finish())
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::Arrival { node, packet } => self.arrive(node, packet),
            EventKind::DequeueComplete { link } => {
                let packet = self.ports[link.0].finish_service().expect("port was busy");
                let delay = self.cfg.topology.link(link).params.propagation_us;
                self.schedule(self.now + delay, EventKind::LinkDelivery { link, packet });
                self.try_start(link);
            }
            EventKind::LinkDelivery { link, packet } => {
                let to = self.cfg.topology.link(link).to;
                self.arrive(to, packet);
            }
            EventKind::SourceTick { flow } => self.source_tick(flow),
            EventKind::BackgroundTick { stream, generation } => self.background_tick(stream, generation),
            EventKind::ScenarioChange { index } => self.apply_change(index),
            EventKind::Sample => self.sample(),
        }
    }

    fn new_packet(&mut self, kind: PacketKind, tag: FlowTag, payload_size: u32, destination: NodeId) -> Packet {
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        self.tallies.entry(tag).or_default().counts.injected += 1;
        Packet {
            id,
            kind,
            tag,
            payload_size,
            created_at: self.now,
            destination,
            int: None,
            body: Bytes::new(),
            pinned: None,
            report: None,
            steered: None,
        }
    }

    fn source_tick(&mut self, flow: usize) {
        let spec = self.sources[flow].spec();
        let (src, dst, size) = (spec.source, spec.destination, spec.packet_bytes);
        let p = self.new_packet(PacketKind::Data, FlowTag::Flow(flow), size, dst);
        if let Some(next) = self.sources[flow].advance(self.now) {
            self.schedule(next, EventKind::SourceTick { flow });
        }
        self.arrive(src, p);
    }

    fn background_tick(&mut self, stream: usize, generation: u64) {
        let bg = &self.background[stream];
        if !bg.active || bg.generation != generation {
            return;
        }
        let (d, path) = (bg.domain, bg.path);
        let seg = &self.cfg.domains[d].segments[path];
        let (entry, endpoint) = (seg.nodes[1], self.cfg.domains[d].endpoint_node);
        let mut p = self.new_packet(
            PacketKind::Background,
            FlowTag::Background(stream),
            self.cfg.background_packet_bytes,
            endpoint,
        );
        p.pinned = Some((d, path));
        let bg = &mut self.background[stream];
        bg.sent += 1;
        let next = bg.epoch + (bg.sent as f64 * 1e6 / bg.rate_pps).round() as u64;
        self.schedule(next, EventKind::BackgroundTick { stream, generation });
        self.arrive(entry, p);
    }

    fn apply_change(&mut self, index: usize) {
        match self.cfg.events[index].change {
            Change::LinkCapacity { from, to, multiplier } => {
                let link = self.cfg.topology.link_between(from, to).expect("validated");
                let port = &mut self.ports[link.0];
                port.set_multiplier(multiplier);
                if port.is_down() {
                    let flushed = port.flush();
                    for p in flushed {
                        self.drop_packet(p, DropReason::LinkDown);
                    }
                } else {
                    self.try_start(link);
                }
            }
            Change::BackgroundStart { domain, path, load } => {
                let d = self.domain_index(domain).expect("validated");
                let stream = self.background_index[&(d, path)];
                let seg = &self.cfg.domains[d].segments[path];
                let link = self
                    .cfg
                    .topology
                    .link_between(seg.nodes[1], seg.nodes[2])
                    .or_else(|| self.cfg.topology.link_between(seg.nodes[0], seg.nodes[1]))
                    .expect("validated segment");
                let rate = load * self.cfg.topology.link(link).params.capacity_pps;
                let bg = &mut self.background[stream];
                bg.rate_pps = rate;
                bg.active = true;
                bg.generation += 1;
                bg.epoch = self.now;
                bg.sent = 0;
                let generation = bg.generation;
                self.schedule(self.now, EventKind::BackgroundTick { stream, generation });
            }
            Change::BackgroundStop { domain, path } => {
                let d = self.domain_index(domain).expect("validated");
                let stream = self.background_index[&(d, path)];
                let bg = &mut self.background[stream];
                bg.active = false;
                bg.generation += 1;
            }
        }
    }

    fn domain_index(&self, id: u32) -> Option<usize> {
        self.cfg.domains.iter().position(|d| d.id == id)
    }

    fn sample(&mut self) {
        let d = 0;
        let (queue, delay) = self.last_metrics[d].iter().copied().unzip();
        let phase = self.agents[d].as_ref().map(|a| a.phase());
        self.samples.push(Sample {
            time: self.now,
            queue,
            delay,
            selected_path: self.decisions[d].register,
            phase,
        });
        let next = self.now + self.cfg.sample_interval_us;
        self.schedule(next, EventKind::Sample);
    }

    /// Forwarding decision for a packet present at `node`.
    fn arrive(&mut self, node: NodeId, mut packet: Packet) {
        if node == packet.destination {
            self.consume(node, packet);
            return;
        }

        if packet.kind == PacketKind::Data && packet.int.is_none() {
            if let Some(ds) = self.decision_of.get(&node) {
                let d = ds[0];
                self.steer(d, &mut packet);
            }
        }

        let next_link = self.next_link(node, &packet);
        match next_link {
            Some(link) => self.enqueue(link, packet),
            None => self.drop_packet(packet, DropReason::Misrouted),
        }
    }

    /// Decision-node ingress: embed the header, steer, maybe spawn a probe.
    fn steer(&mut self, d: usize, packet: &mut Packet) {
        let cfg = self.cfg;
        let domain = &cfg.domains[d];
        let now = self.now;
        let st = &mut self.decisions[d];
        st.first_data.get_or_insert(now);
        st.data_steered += 1;
        let path = st.register;
        packet.steered.get_or_insert(path);
        if self.agents[d].is_none() {
            return;
        }
        let alt = if st.data_steered.is_multiple_of(cfg.agent.probe_interval) {
            let alt = match st.probe_target {
                Some(t) if t != path => t,
                _ => {
                    let others: Vec<usize> = (0..domain.num_paths()).filter(|&i| i != path).collect();
                    let pick = others[st.probe_rr % others.len()];
                    st.probe_rr += 1;
                    pick
                }
            };
            st.probes_sent += 1;
            Some(alt)
        } else {
            None
        };

        packet.int = Some(IntContext {
            domain: d,
            header: IntHeader::new(path as u8, false, packet.id as u32),
        });
        self.log_embed(d, packet.id, path, false);

        if let Some(alt) = alt {
            let mut probe = self.new_packet(PacketKind::Probe, FlowTag::Probe, packet.payload_size, packet.destination);
            probe.int = Some(IntContext {
                domain: d,
                header: IntHeader::new(alt as u8, true, probe.id as u32),
            });
            self.log_embed(d, probe.id, alt, true);
            match self.next_link(domain.decision_node, &probe) {
                Some(link) => self.enqueue(link, probe),
                None => self.drop_packet(probe, DropReason::Misrouted),
            }
        }
    }

    fn log_embed(&mut self, d: usize, packet_id: u64, path: usize, probe: bool) {
        let domain_id = self.cfg.domains[d].id;
        let time = self.now;
        if let Some(log) = self.detailed.as_mut() {
            log.embeds.push(EmbedRecord {
                time,
                domain_id,
                packet_id,
                path,
                probe,
            });
        }
    }

    fn next_link(&self, node: NodeId, packet: &Packet) -> Option<LinkId> {
        let on_segment = packet
            .int
            .as_ref()
            .map(|c| (c.domain, usize::from(c.header.path_index)))
            .or(packet.pinned);
        if let Some((d, path)) = on_segment {
            if let Some(next) = self.cfg.domains[d].segments.get(path).and_then(|s| s.next_after(node)) {
                return self.cfg.topology.link_between(node, next);
            }
        }
        self.routes.get(&packet.destination)?.get(&node).copied()
    }

    fn enqueue(&mut self, link: LinkId, packet: Packet) {
        let now = self.now;
        match self.ports[link.0].enqueue(packet, now) {
            Ok(()) => self.try_start(link),
            Err(p) => {
                let reason = if self.ports[link.0].is_down() {
                    DropReason::LinkDown
                } else {
                    DropReason::QueueFull
                };
                self.drop_packet(p, reason);
            }
        }
    }

    /// Starts serving the head of `link`'s queue if the port is idle. This is
    /// the dequeue instant: telemetry is appended and, at a domain endpoint,
    /// extracted here.
    fn try_start(&mut self, link: LinkId) {
        let now = self.now;
        let from = self.cfg.topology.link(link).from;
        let Some((packet, sample)) = self.ports[link.0].start_service(now) else {
            return;
        };
        let mut report = None;
        let mut telemetry_error = false;
        if let Some(ctx) = packet.int.as_mut() {
            let domain = &self.cfg.domains[ctx.domain];
            let on_segment = domain
                .segments
                .get(usize::from(ctx.header.path_index))
                .is_some_and(|s| s.contains(from));
            if on_segment && from != domain.decision_node {
                let record = HopRecord {
                    switch_id: from.0,
                    queue_length: sample.queue_length,
                    dequeue_delay: sample.dequeue_delay.min(u64::from(u32::MAX)) as u32,
                };
                if ctx.header.append_hop(record).is_ok() {
                    if let Some(log) = self.detailed.as_mut() {
                        log.hops.push(HopCheck {
                            packet_id: packet.id,
                            switch_id: from.0,
                            enqueued_at: sample.enqueued_at,
                            dequeued_at: now,
                            queue_length: sample.queue_length,
                        });
                    }
                }
                if from == domain.endpoint_node {
                    let frame = IntFrame {
                        header: Some(ctx.header.clone()),
                        payload: Bytes::new(),
                    };
                    match extract_and_clone(frame, domain.id, now) {
                        Ok((_, r)) => report = r.map(|r| (ctx.domain, r, packet.id)),
                        Err(_) => telemetry_error = true,
                    }
                    packet.int = None;
                }
            }
        }
        let wire = packet.wire_size();
        let service = self.ports[link.0].service_time(wire);
        self.schedule(now + service, EventKind::DequeueComplete { link });
        if telemetry_error {
            self.drops.telemetry += 1;
        }
        if let Some((d, r, packet_id)) = report {
            self.send_report(d, r, packet_id, from);
        }
    }

    fn send_report(&mut self, d: usize, report: TelemetryReport, packet_id: u64, at: NodeId) {
        if let Some(log) = self.detailed.as_mut() {
            log.reports.push((packet_id, report.clone()));
        }
        let collector = self.cfg.domains[d].collector_node;
        let mut p = self.new_packet(PacketKind::Report, FlowTag::Report, 0, collector);
        let mut h = IntHeader::new(report.path_index as u8, report.is_probe, report.packet_seq);
        for r in &report.records {
            let _ = h.append_hop(*r);
        }
        p.body = Bytes::from(h.serialize());
        p.report = Some(Box::new(report));
        self.arrive(at, p);
    }

    fn consume(&mut self, node: NodeId, packet: Packet) {
        let tally = self.tallies.entry(packet.tag).or_default();
        tally.counts.delivered += 1;
        match packet.kind {
            PacketKind::Data => {
                tally.delivered_bytes += u64::from(packet.payload_size);
                if let FlowTag::Flow(flow) = packet.tag {
                    self.sources[flow].on_delivered();
                    self.deliveries.push(DeliveryRecord {
                        packet_id: packet.id,
                        flow,
                        created_at: packet.created_at,
                        delivered_at: self.now,
                        path: packet.steered,
                        payload_bytes: packet.payload_size,
                    });
                }
            }
            PacketKind::Report => {
                let report = packet.report.expect("report packets carry a report");
                self.deliver_report(node, *report);
            }
            PacketKind::Control => {
                if let Some(dir) = ControlDirective::decode(&packet.body) {
                    self.apply_directive(dir, packet.created_at);
                }
            }
            PacketKind::Probe | PacketKind::Background => {}
        }
    }

    fn deliver_report(&mut self, collector: NodeId, report: TelemetryReport) {
        let Some(d) = self.domain_index(report.domain_id) else {
            return;
        };
        let Some(agent) = self.agents[d].as_mut() else {
            return;
        };
        let m = aggregate_with(&report, self.cfg.agent.aggregation);
        if let Some(slot) = self.last_metrics[d].get_mut(report.path_index) {
            *slot = (m.queue, m.delay);
        }
        let before = agent.phase();
        let Ok(decision) = agent.on_report(&report) else {
            return;
        };
        let phase = agent.phase();
        let probs = agent.probs();
        let domain_id = self.cfg.domains[d].id;
        if phase != before {
            self.phase_changes.push(PhaseChange {
                time: self.now,
                domain_id,
                phase,
                learned_path: agent.learned_path(),
                updates: agent.stats().updates,
                max_prob: probs.iter().copied().fold(0.0, f64::max),
            });
        }
        self.snapshots.push(AgentSnapshot {
            time: self.now,
            domain_id,
            path_index: report.path_index,
            is_probe: report.is_probe,
            reward: decision.reward,
            phase,
            probs,
            ema: agent.ema(),
            selected: decision.directive.map(|x| usize::from(x.path)),
        });
        if let Some(dir) = decision.directive {
            let target = self.cfg.domains[d].decision_node;
            let mut p = self.new_packet(PacketKind::Control, FlowTag::Control, 0, target);
            p.body = Bytes::copy_from_slice(&dir.encode());
            self.arrive(collector, p);
        }
    }

    fn apply_directive(&mut self, dir: ControlDirective, issued_at: u64) {
        let Some(d) = self.domain_index(dir.domain_id) else {
            return;
        };
        let path = usize::from(dir.path);
        if path >= self.cfg.domains[d].num_paths() {
            return;
        }
        if let Some(log) = self.detailed.as_mut() {
            log.directives.push(DirectiveApplied {
                time: self.now,
                domain_id: dir.domain_id,
                path,
                probe: dir.probe,
            });
        }
        let st = &mut self.decisions[d];
        if dir.probe {
            st.probe_target = Some(path);
            return;
        }
        if st.register != path {
            self.register_changes.push(RegisterChange {
                time: self.now,
                domain_id: dir.domain_id,
                from: st.register,
                to: path,
                issued_at,
            });
            st.register = path;
        }
    }

    fn drop_packet(&mut self, packet: Packet, reason: DropReason) {
        match reason {
            DropReason::QueueFull => self.drops.queue_full += 1,
            DropReason::LinkDown => self.drops.link_down += 1,
            DropReason::Misrouted => self.drops.misrouted += 1,
        }
        self.tallies.entry(packet.tag).or_default().counts.dropped += 1;
        if let FlowTag::Flow(f) = packet.tag {
            self.sources[f].on_loss(self.now);
        }
    }

    fn finish(mut self) -> SimulationTrace {
        // in-flight: whatever ports hold plus packets inside pending events
        let mut in_flight: BTreeMap<FlowTag, u64> = BTreeMap::new();
        for port in &self.ports {
            for p in port.held() {
                *in_flight.entry(p.tag).or_default() += 1;
            }
        }
        for e in self.queue.iter() {
            if let EventKind::Arrival { packet, .. } | EventKind::LinkDelivery { packet, .. } = &e.kind {
                *in_flight.entry(packet.tag).or_default() += 1;
            }
        }
        for (tag, n) in in_flight {
            self.tallies.entry(tag).or_default().counts.in_flight = n;
        }
        let conservation: BTreeMap<FlowTag, Counts> =
            self.tallies.iter().map(|(k, v)| (*k, v.counts)).collect();

        let horizon = self.cfg.horizon_us;
        let flows = self
            .cfg
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let t = self.tallies.get(&FlowTag::Flow(i)).cloned().unwrap_or_default();
                let active = horizon.saturating_sub(f.start_us).max(1) as f64 / 1e6;
                FlowSummary {
                    name: f.name.clone(),
                    counts: t.counts,
                    delivered_bytes: t.delivered_bytes,
                    goodput_bps: t.delivered_bytes as f64 * 8.0 / active,
                }
            })
            .collect();

        let domains = self
            .cfg
            .domains
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let a = self.agents[i].as_ref();
                DomainSummary {
                    domain_id: d.id,
                    first_data_us: self.decisions[i].first_data,
                    stats: a.map(|a| a.stats()),
                    final_phase: a.map(|a| a.phase()),
                    final_learned_path: a.and_then(|a| a.learned_path()),
                    final_probs: a.map(|a| a.probs()).unwrap_or_default(),
                    final_register: self.decisions[i].register,
                    data_steered: self.decisions[i].data_steered,
                    probes_sent: self.decisions[i].probes_sent,
                }
            })
            .collect();

        SimulationTrace {
            seed: self.cfg.seed,
            horizon_us: horizon,
            num_paths: self.cfg.domains.first().map_or(0, |d| d.num_paths()),
            deliveries: self.deliveries,
            snapshots: self.snapshots,
            samples: self.samples,
            register_changes: self.register_changes,
            phase_changes: self.phase_changes,
            flows,
            conservation,
            drops: self.drops,
            domains,
            events_processed: self.events_processed,
            detailed: self.detailed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum DropReason {
    QueueFull,
    LinkDown,
    Misrouted,
}

/// Phase of the first domain's agent at the end of a run, if agents are on.
pub fn final_phase(trace: &SimulationTrace) -> Option<Phase> {
    trace.domains.first().and_then(|d| d.final_phase)
}

/// Seed for a derived RNG stream; exposed so callers can reproduce streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream))
}
