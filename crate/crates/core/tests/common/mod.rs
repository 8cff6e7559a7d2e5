#![allow(dead_code)]

use inrl_core::sim::{Change, FlowSpec, ScenarioEvent, SimConfig, TrafficMode};
use inrl_core::topology::{build_poc_topology, poc, LinkParams};

pub fn poc_config(seed: u64) -> SimConfig {
    let (t, d) = build_poc_topology(LinkParams::default());
    let mut c = SimConfig::new(t, d);
    c.seed = seed;
    c
}

pub fn cbr(rate_pps: f64, start_us: u64) -> FlowSpec {
    FlowSpec {
        name: "main".into(),
        source: poc::H_S,
        destination: poc::H_D,
        start_us,
        stop_us: None,
        packet_bytes: 1000,
        mode: TrafficMode::Cbr { rate_pps },
    }
}

pub fn background(at_us: u64, path: usize, load: f64) -> ScenarioEvent {
    ScenarioEvent {
        at_us,
        change: Change::BackgroundStart { domain: 1, path, load },
    }
}

pub fn background_stop(at_us: u64, path: usize) -> ScenarioEvent {
    ScenarioEvent {
        at_us,
        change: Change::BackgroundStop { domain: 1, path },
    }
}

/// Path 0 congested, then the congestion moves to path 1 at `shift_us`.
pub fn shift_config(seed: u64, shift_us: u64, horizon_us: u64) -> SimConfig {
    let mut c = poc_config(seed);
    c.horizon_us = horizon_us;
    c.flows.push(cbr(9000.0, 50_000));
    c.events.push(background(0, 0, 1.2));
    c.events.push(background_stop(shift_us, 0));
    c.events.push(background(shift_us, 1, 1.2));
    c
}
