use bytes::Bytes;

use crate::telemetry::{IntHeader, TelemetryReport};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketKind {
    Data,
    Probe,
    Control,
    Report,
    Background,
}

/// Conservation bucket a packet is accounted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowTag {
    /// Index into the configured flows.
    Flow(usize),
    Probe,
    Control,
    Report,
    /// Index into the scenario's background streams.
    Background(usize),
}

/// In-band telemetry state while a packet crosses a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct IntContext {
    /// Index into the simulator's domain list.
    pub domain: usize,
    pub header: IntHeader,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub kind: PacketKind,
    pub tag: FlowTag,
    /// Payload bytes, excluding any telemetry header.
    pub payload_size: u32,
    pub created_at: u64,
    pub destination: NodeId,
    pub int: Option<IntContext>,
    /// Opaque body for control and report packets.
    pub body: Bytes,
    /// Segment followed by background and probe traffic: (domain, path).
    pub pinned: Option<(usize, usize)>,
    pub report: Option<Box<TelemetryReport>>,
    /// Path chosen by the first decision node that steered this packet.
    pub steered: Option<usize>,
}

impl Packet {
    /// Bytes on the wire, header included.
    pub fn wire_size(&self) -> u32 {
        let header = self.int.as_ref().map_or(0, |c| c.header.encoded_len() as u32);
        self.payload_size + header + self.body.len() as u32
    }
}
