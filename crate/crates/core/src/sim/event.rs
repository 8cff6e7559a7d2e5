use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::topology::{LinkId, NodeId};

use super::packet::Packet;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// A packet reaches a node, either from a link or freshly created there.
    Arrival { node: NodeId, packet: Packet },
    /// The port on `link` finished serialising its current packet.
    DequeueComplete { link: LinkId },
    /// Propagation over `link` finished.
    LinkDelivery { link: LinkId, packet: Packet },
    SourceTick { flow: usize },
    BackgroundTick { stream: usize, generation: u64 },
    ScenarioChange { index: usize },
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: u64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Deterministic priority queue: earliest time first, insertion order
/// among equal times.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: u64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.heap.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_pop_in_insertion_order() {
        let mut q = EventQueue::default();
        q.push(5, EventKind::SourceTick { flow: 0 });
        q.push(3, EventKind::SourceTick { flow: 1 });
        q.push(5, EventKind::SourceTick { flow: 2 });
        q.push(3, EventKind::SourceTick { flow: 3 });
        let order: Vec<_> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::SourceTick { flow } => (e.time, flow),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![(3, 1), (3, 3), (5, 0), (5, 2)]);
    }
}
