use std::collections::VecDeque;

use super::packet::Packet;

/// Bytes per packet at which `capacity_pps` is quoted.
pub const REFERENCE_PACKET_BYTES: f64 = 1000.0;

/// Egress port of a directed link: a bounded FIFO in front of a single server.
#[derive(Debug, Clone)]
pub struct Port {
    queue: VecDeque<(Packet, u64)>,
    in_service: Option<Packet>,
    capacity: usize,
    capacity_pps: f64,
    multiplier: f64,
    pub drops: u64,
}

/// Queue state seen by a packet as it leaves the FIFO.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DequeueSample {
    /// Packets in the queue at that instant, the departing one included.
    pub queue_length: u32,
    /// Time spent waiting in the queue, microseconds.
    pub dequeue_delay: u64,
    pub enqueued_at: u64,
}

/// Queue length and wait for the packet at the head of `queue` leaving at `now`.
pub fn measure_dequeue(queue_len: usize, enqueued_at: u64, now: u64) -> (u32, u64) {
    (queue_len as u32, now - enqueued_at)
}

impl Port {
    pub fn new(capacity: usize, capacity_pps: f64) -> Self {
        Self {
            queue: VecDeque::new(),
            in_service: None,
            capacity,
            capacity_pps,
            multiplier: 1.0,
            drops: 0,
        }
    }

    pub fn is_down(&self) -> bool {
        self.multiplier <= 0.0
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn set_multiplier(&mut self, m: f64) {
        self.multiplier = m.max(0.0);
    }

    /// Waiting packets, excluding the one being transmitted.
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn busy(&self) -> bool {
        self.in_service.is_some()
    }

    /// Packets held by the port, waiting or in service.
    pub fn held(&self) -> impl Iterator<Item = &Packet> {
        self.queue.iter().map(|(p, _)| p).chain(self.in_service.iter())
    }

    /// Serialisation time of `bytes` at the current rate, whole microseconds.
    pub fn service_time(&self, bytes: u32) -> u64 {
        let rate = self.capacity_pps * self.multiplier * REFERENCE_PACKET_BYTES;
        ((f64::from(bytes) * 1e6 / rate).round() as u64).max(1)
    }

    /// Appends to the FIFO. A full queue or a downed link drops the arrival
    /// and hands it back.
    pub fn enqueue(&mut self, packet: Packet, now: u64) -> Result<(), Packet> {
        if self.is_down() || self.queue.len() >= self.capacity {
            self.drops += 1;
            return Err(packet);
        }
        self.queue.push_back((packet, now));
        Ok(())
    }

    /// Moves the head of the FIFO into service if the server is idle.
    pub fn start_service(&mut self, now: u64) -> Option<(&mut Packet, DequeueSample)> {
        if self.in_service.is_some() || self.is_down() {
            return None;
        }
        let queue_len = self.queue.len();
        let (packet, enqueued_at) = self.queue.pop_front()?;
        let (queue_length, dequeue_delay) = measure_dequeue(queue_len, enqueued_at, now);
        self.in_service = Some(packet);
        Some((
            self.in_service.as_mut().expect("just set"),
            DequeueSample {
                queue_length,
                dequeue_delay,
                enqueued_at,
            },
        ))
    }

    pub fn finish_service(&mut self) -> Option<Packet> {
        self.in_service.take()
    }

    /// Empties the FIFO, returning what was waiting. Used when a link goes down.
    pub fn flush(&mut self) -> Vec<Packet> {
        let out: Vec<Packet> = self.queue.drain(..).map(|(p, _)| p).collect();
        self.drops += out.len() as u64;
        out
    }
}
