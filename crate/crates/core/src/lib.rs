//! Congestion-aware path selection with a stochastic learning automaton that
//! lives next to the data plane.
//!
//! The crate is split along the pipeline:
//!
//! * [`topology`]: network graph, decision domains and candidate path segments.
//! * [`arith`]: exact and register-constrained (Q16.16, shift, lookup table)
//!   arithmetic backends.
//! * [`telemetry`]: in-band telemetry header, sink-side extraction and
//!   collector aggregation.
//! * [`agent`]: reward, probability update, two-phase agent with probe
//!   monitoring.
//! * [`sim`]: deterministic discrete-event packet simulator wiring it all up.

pub mod agent;
pub mod arith;
pub mod sim;
pub mod telemetry;
pub mod topology;

pub use agent::{AgentConfig, Phase, RewardParams};
pub use arith::{Backend, FixedPoint, SigmoidTable};
pub use sim::{run, SimConfig, SimulationTrace};
pub use telemetry::{IntHeader, SegmentMetrics, TelemetryReport};
pub use topology::{Domain, NodeId, Topology};
