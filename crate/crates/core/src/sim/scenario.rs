use serde::{Deserialize, Serialize};

use crate::topology::NodeId;

/// A timed change to the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub at_us: u64,
    #[serde(flatten)]
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "kebab-case")]
pub enum Change {
    /// Scales the service rate of the `from -> to` port. Zero takes the link
    /// down: its queue is flushed and arrivals are dropped.
    LinkCapacity {
        from: NodeId,
        to: NodeId,
        multiplier: f64,
    },
    /// Starts constant-rate cross traffic on one segment of a domain, entering
    /// after the decision node and leaving at the endpoint. `load` is a
    /// fraction of the capacity of the segment's first transit link.
    BackgroundStart { domain: u32, path: usize, load: f64 },
    BackgroundStop { domain: u32, path: usize },
}
