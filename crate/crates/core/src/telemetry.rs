//! In-band telemetry: the per-hop metadata stack carried by data packets,
//! sink-side extraction into collector reports, and aggregation into
//! segment-level metrics.
//!
//! Wire layout of the header (big-endian):
//!
//! ```text
//! 0        1           2       3         4             8
//! +--------+-----------+-------+---------+-------------+---------------------+
//! |hop_cnt | path_index| flags |reserved | packet_seq  | hop_cnt x 12B recs  |
//! +--------+-----------+-------+---------+-------------+---------------------+
//! record: switch_id u32 | queue_length u32 | dequeue_delay u32
//! flags bit 0: probe
//! ```

use arrayvec::ArrayVec;
use bytes::{Bytes, BytesMut};
use serde::Serialize;
use thiserror::Error;

pub const MAX_HOPS: usize = 8;
pub const HEADER_FIXED_LEN: usize = 8;
pub const RECORD_LEN: usize = 12;
const FLAG_PROBE: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TelemetryError {
    #[error("packet already carries a telemetry header")]
    AlreadyEmbedded,
    #[error("telemetry header carries no hop records")]
    NoRecords,
    #[error("buffer truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("reserved header byte is {0:#04x}, expected zero")]
    ReservedNonZero(u8),
    #[error("hop count {0} exceeds the maximum of {MAX_HOPS}")]
    TooManyHops(u8),
}

/// The hop stack is full; the record was not added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("telemetry hop stack full ({MAX_HOPS} records)")]
pub struct HopStackFull;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct HopRecord {
    pub switch_id: u32,
    /// Packets in the egress queue at dequeue, this one included.
    pub queue_length: u32,
    /// Microseconds spent waiting in the queue.
    pub dequeue_delay: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntHeader {
    pub path_index: u8,
    pub is_probe: bool,
    pub packet_seq: u32,
    records: ArrayVec<HopRecord, MAX_HOPS>,
}

impl IntHeader {
    pub fn new(path_index: u8, is_probe: bool, packet_seq: u32) -> Self {
        Self {
            path_index,
            is_probe,
            packet_seq,
            records: ArrayVec::new(),
        }
    }

    pub fn hop_count(&self) -> u8 {
        self.records.len() as u8
    }

    pub fn records(&self) -> &[HopRecord] {
        &self.records
    }

    /// Pushes a record on the stack. A full stack leaves the header untouched.
    pub fn append_hop(&mut self, record: HopRecord) -> Result<(), HopStackFull> {
        self.records.try_push(record).map_err(|_| HopStackFull)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_FIXED_LEN + RECORD_LEN * self.records.len()
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out);
        out
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        out.push(self.hop_count());
        out.push(self.path_index);
        out.push(if self.is_probe { FLAG_PROBE } else { 0 });
        out.push(0);
        out.extend_from_slice(&self.packet_seq.to_be_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.switch_id.to_be_bytes());
            out.extend_from_slice(&r.queue_length.to_be_bytes());
            out.extend_from_slice(&r.dequeue_delay.to_be_bytes());
        }
    }

    /// Parses a header from the front of `buf`, returning it and the number
    /// of bytes consumed.
    pub fn parse_prefix(buf: &[u8]) -> Result<(Self, usize), TelemetryError> {
        if buf.len() < HEADER_FIXED_LEN {
            return Err(TelemetryError::Truncated {
                needed: HEADER_FIXED_LEN,
                have: buf.len(),
            });
        }
        let hops = buf[0];
        if usize::from(hops) > MAX_HOPS {
            return Err(TelemetryError::TooManyHops(hops));
        }
        if buf[3] != 0 {
            return Err(TelemetryError::ReservedNonZero(buf[3]));
        }
        let len = HEADER_FIXED_LEN + RECORD_LEN * usize::from(hops);
        if buf.len() < len {
            return Err(TelemetryError::Truncated {
                needed: len,
                have: buf.len(),
            });
        }
        let word = |at: usize| u32::from_be_bytes([buf[at], buf[at + 1], buf[at + 2], buf[at + 3]]);
        let mut header = IntHeader::new(buf[1], buf[2] & FLAG_PROBE != 0, word(4));
        for i in 0..usize::from(hops) {
            let at = HEADER_FIXED_LEN + i * RECORD_LEN;
            header.records.push(HopRecord {
                switch_id: word(at),
                queue_length: word(at + 4),
                dequeue_delay: word(at + 8),
            });
        }
        Ok((header, len))
    }

    /// Parses a header that must occupy the whole buffer prefix.
    pub fn parse(buf: &[u8]) -> Result<Self, TelemetryError> {
        Self::parse_prefix(buf).map(|(h, _)| h)
    }
}

/// A packet as the telemetry pipeline sees it: an optional header in front of
/// an opaque payload.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntFrame {
    pub header: Option<IntHeader>,
    pub payload: Bytes,
}

impl IntFrame {
    pub fn new(payload: Bytes) -> Self {
        Self {
            header: None,
            payload,
        }
    }

    /// Source role: attach an empty header.
    pub fn embed_header(
        &mut self,
        path_index: u8,
        is_probe: bool,
        seq: u32,
    ) -> Result<(), TelemetryError> {
        if self.header.is_some() {
            return Err(TelemetryError::AlreadyEmbedded);
        }
        self.header = Some(IntHeader::new(path_index, is_probe, seq));
        Ok(())
    }

    /// Header bytes (if any) followed by the payload.
    pub fn to_wire(&self) -> Bytes {
        match &self.header {
            None => self.payload.clone(),
            Some(h) => {
                let mut buf = BytesMut::with_capacity(h.encoded_len() + self.payload.len());
                let mut head = Vec::with_capacity(h.encoded_len());
                h.write_to(&mut head);
                buf.extend_from_slice(&head);
                buf.extend_from_slice(&self.payload);
                buf.freeze()
            }
        }
    }

    /// Inverse of [`to_wire`](Self::to_wire). Whether a header is present is
    /// signalled out of band (an ethertype or DSCP mark on a real network).
    pub fn from_wire(wire: Bytes, has_header: bool) -> Result<Self, TelemetryError> {
        if !has_header {
            return Ok(Self::new(wire));
        }
        let (header, used) = IntHeader::parse_prefix(&wire)?;
        Ok(Self {
            header: Some(header),
            payload: wire.slice(used..),
        })
    }
}

/// Sink role: strip the header and build the report clone.
///
/// Frames without a header pass through with no report.
pub fn extract_and_clone(
    mut frame: IntFrame,
    domain_id: u32,
    sink_timestamp: u64,
) -> Result<(IntFrame, Option<TelemetryReport>), TelemetryError> {
    let Some(header) = frame.header.take() else {
        return Ok((frame, None));
    };
    if header.records.is_empty() {
        frame.header = Some(header);
        return Err(TelemetryError::NoRecords);
    }
    let report = TelemetryReport {
        domain_id,
        path_index: usize::from(header.path_index),
        is_probe: header.is_probe,
        packet_seq: header.packet_seq,
        records: header.records.to_vec(),
        sink_timestamp,
    };
    Ok((frame, Some(report)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelemetryReport {
    pub domain_id: u32,
    pub path_index: usize,
    pub is_probe: bool,
    pub packet_seq: u32,
    pub records: Vec<HopRecord>,
    pub sink_timestamp: u64,
}

impl TelemetryReport {
    pub const CSV_HEADER: &'static str = "domain_id,path_index,is_probe,seq,sink_timestamp_us,queue_pkts,delay_us";

    pub fn to_csv_line(&self) -> String {
        let m = aggregate(self);
        format!(
            "{},{},{},{},{},{},{}",
            self.domain_id,
            self.path_index,
            u8::from(self.is_probe),
            self.packet_seq,
            self.sink_timestamp,
            m.queue,
            m.delay
        )
    }
}

/// Segment-level congestion signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SegmentMetrics {
    /// Total queue length along the segment, packets.
    pub queue: u64,
    /// Total dequeue delay along the segment, microseconds.
    pub delay: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Max,
}

/// Sums queue length and delay over all hops of the report.
pub fn aggregate(report: &TelemetryReport) -> SegmentMetrics {
    aggregate_with(report, Aggregation::Sum)
}

pub fn aggregate_with(report: &TelemetryReport, how: Aggregation) -> SegmentMetrics {
    let q = report.records.iter().map(|r| u64::from(r.queue_length));
    let d = report.records.iter().map(|r| u64::from(r.dequeue_delay));
    match how {
        Aggregation::Sum => SegmentMetrics {
            queue: q.sum(),
            delay: d.sum(),
        },
        Aggregation::Max => SegmentMetrics {
            queue: q.max().unwrap_or(0),
            delay: d.max().unwrap_or(0),
        },
    }
}
