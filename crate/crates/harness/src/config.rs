//! Scenario and experiment files.
//!
//! Both are TOML. Paths inside an experiment file are resolved relative to
//! the file's own directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use inrl_core::agent::AgentConfig;
use inrl_core::sim::{self, Change, Control, FlowSpec, ScenarioEvent, SimConfig, TrafficMode};
use inrl_core::topology::{
    build_poc_topology, Domain, LinkParams, NodeId, PathSegment, Role, Topology, Violation,
};
use inrl_core::Backend;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{} topology violation(s)", .0.len())]
    Topology(Vec<Violation>),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Two hosts, five switches, one two-path domain.
    Poc,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub name: String,
    pub role: Role,
}

/// A bidirectional cable, or a single directed link when `directed` is set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CableEntry {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub directed: bool,
    pub capacity_pps: Option<f64>,
    pub propagation_us: Option<u64>,
    pub queue_capacity: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainEntry {
    pub id: u32,
    pub decision: String,
    pub endpoint: String,
    pub collector: String,
    pub segments: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub preset: Option<Preset>,
    /// Defaults for every link.
    #[serde(default)]
    pub link: LinkParams,
    #[serde(default)]
    pub nodes: Vec<NodeEntry>,
    #[serde(default)]
    pub cables: Vec<CableEntry>,
    #[serde(default)]
    pub domains: Vec<DomainEntry>,
    #[serde(default)]
    pub sources: Vec<String>,
    #[serde(default)]
    pub destinations: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlSection {
    #[default]
    Agent,
    Static {
        path: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct FlowEntry {
    pub name: String,
    pub source: String,
    pub destination: String,
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

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "change", rename_all = "kebab-case")]
pub enum ChangeEntry {
    LinkCapacity { from: String, to: String, multiplier: f64 },
    BackgroundStart { domain: u32, path: usize, load: f64 },
    BackgroundStop { domain: u32, path: usize },
}

#[derive(Debug, Clone, Deserialize)]
pub struct EventEntry {
    pub at_us: u64,
    #[serde(flatten)]
    pub change: ChangeEntry,
}

fn default_seed() -> u64 {
    1
}

fn default_sample_interval() -> u64 {
    1_000
}

/// On-disk scenario: topology, agent settings, traffic and timed events.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub horizon_us: u64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval_us: u64,
    #[serde(default = "default_packet_bytes")]
    pub background_packet_bytes: u32,
    pub topology: TopologySection,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub flows: Vec<FlowEntry>,
    #[serde(default)]
    pub events: Vec<EventEntry>,
}

/// A loaded scenario ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub path: PathBuf,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        Self::from_toml(path, &text)
    }

    pub fn from_toml(path: &Path, text: &str) -> Result<Self, ConfigError> {
        let file: ScenarioFile = parse(path, text)?;
        let sim = build(&file)?;
        Ok(Self {
            name: file.name,
            description: file.description,
            path: path.to_path_buf(),
            sim,
        })
    }

    /// Full structural and semantic check: every topology violation is
    /// collected, then agent, traffic and event settings are checked.
    pub fn validate(&self) -> Result<(), ConfigError> {
        inrl_core::topology::validate_topology(&self.sim.topology, &self.sim.domains)
            .map_err(ConfigError::Topology)?;
        sim::validate(&self.sim)?;
        Ok(())
    }

    /// Time of the first scenario event after t = 0, if any.
    pub fn first_shift_us(&self) -> Option<u64> {
        self.sim.events.iter().map(|e| e.at_us).filter(|&t| t > 0).min()
    }
}

fn build(file: &ScenarioFile) -> Result<SimConfig, ConfigError> {
    let (topology, domains) = build_topology(&file.topology)?;
    let names: HashMap<String, NodeId> = topology
        .nodes()
        .iter()
        .map(|n| (n.name.clone(), n.id))
        .collect();
    let lookup = |name: &str| {
        names
            .get(name)
            .copied()
            .ok_or_else(|| ConfigError::Invalid(format!("unknown node name {name:?}")))
    };

    let flows = file
        .flows
        .iter()
        .map(|f| {
            Ok(FlowSpec {
                name: f.name.clone(),
                source: lookup(&f.source)?,
                destination: lookup(&f.destination)?,
                start_us: f.start_us,
                stop_us: f.stop_us,
                packet_bytes: f.packet_bytes,
                mode: f.mode.clone(),
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;

    let events = file
        .events
        .iter()
        .map(|e| {
            let change = match &e.change {
                ChangeEntry::LinkCapacity { from, to, multiplier } => Change::LinkCapacity {
                    from: lookup(from)?,
                    to: lookup(to)?,
                    multiplier: *multiplier,
                },
                ChangeEntry::BackgroundStart { domain, path, load } => Change::BackgroundStart {
                    domain: *domain,
                    path: *path,
                    load: *load,
                },
                ChangeEntry::BackgroundStop { domain, path } => Change::BackgroundStop {
                    domain: *domain,
                    path: *path,
                },
            };
            Ok(ScenarioEvent { at_us: e.at_us, change })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;

    let mut sim = SimConfig::new(topology, domains);
    sim.agent = file.agent.clone();
    sim.control = match file.control {
        ControlSection::Agent => Control::Agent,
        ControlSection::Static { path } => Control::Static { path },
    };
    sim.flows = flows;
    sim.events = events;
    sim.seed = file.seed;
    sim.horizon_us = file.horizon_us;
    sim.sample_interval_us = file.sample_interval_us;
    sim.background_packet_bytes = file.background_packet_bytes;
    Ok(sim)
}

fn build_topology(t: &TopologySection) -> Result<(Topology, Vec<Domain>), ConfigError> {
    if let Some(Preset::Poc) = t.preset {
        if !(t.nodes.is_empty() && t.cables.is_empty() && t.domains.is_empty()) {
            return Err(ConfigError::Invalid(
                "a topology preset cannot be combined with nodes, cables or domains".into(),
            ));
        }
        return Ok(build_poc_topology(t.link));
    }

    let mut topo = Topology::new();
    let mut ids: HashMap<&str, NodeId> = HashMap::new();
    for (i, n) in t.nodes.iter().enumerate() {
        let id = NodeId(i as u32);
        if ids.insert(n.name.as_str(), id).is_some() {
            return Err(ConfigError::Invalid(format!("duplicate node name {:?}", n.name)));
        }
        topo.add_node(id, n.name.clone(), n.role);
    }
    let lookup = |name: &str| {
        ids.get(name)
            .copied()
            .ok_or_else(|| ConfigError::Invalid(format!("unknown node name {name:?}")))
    };
    for c in &t.cables {
        let params = LinkParams {
            capacity_pps: c.capacity_pps.unwrap_or(t.link.capacity_pps),
            propagation_us: c.propagation_us.unwrap_or(t.link.propagation_us),
            queue_capacity: c.queue_capacity.unwrap_or(t.link.queue_capacity),
        };
        let (a, b) = (lookup(&c.a)?, lookup(&c.b)?);
        if c.directed {
            topo.add_link(a, b, params);
        } else {
            topo.add_cable(a, b, params);
        }
    }
    for s in &t.sources {
        topo.mark_source(lookup(s)?);
    }
    for d in &t.destinations {
        topo.mark_destination(lookup(d)?);
    }
    let domains = t
        .domains
        .iter()
        .map(|d| {
            let segments = d
                .segments
                .iter()
                .enumerate()
                .map(|(i, s)| Ok(PathSegment::new(i, s.iter().map(|n| lookup(n)).collect::<Result<_, _>>()?)))
                .collect::<Result<Vec<_>, ConfigError>>()?;
            Ok(Domain {
                id: d.id,
                decision_node: lookup(&d.decision)?,
                endpoint_node: lookup(&d.endpoint)?,
                collector_node: lookup(&d.collector)?,
                segments,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    Ok((topo, domains))
}

/// Parameters an experiment may sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Alpha,
    PConv,
    EmaGamma,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::PConv => "p_conv",
            SweepParameter::EmaGamma => "ema_gamma",
        }
    }

    pub fn apply(self, agent: &mut AgentConfig, value: f64) {
        match self {
            SweepParameter::Alpha => agent.alpha = value,
            SweepParameter::PConv => agent.p_conv = value,
            SweepParameter::EmaGamma => agent.ema_gamma = value,
        }
    }

    fn legal(self, v: f64) -> bool {
        match self {
            SweepParameter::Alpha => v > 0.0 && v <= 1.0,
            SweepParameter::PConv | SweepParameter::EmaGamma => v > 0.0 && v < 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Path the static baseline is pinned to.
    pub baseline_path: usize,
    /// Scenario for the baseline; defaults to the experiment's scenario.
    pub baseline_scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    name: String,
    scenario: PathBuf,
    seeds: Vec<u64>,
    out_dir: Option<PathBuf>,
    backend: Option<Backend>,
    horizon_us: Option<u64>,
    sweep: Option<SweepSection>,
    compare: Option<CompareSection>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub sweep: Option<SweepSection>,
    pub compare: Option<CompareSection>,
    /// Loaded baseline scenario for comparisons.
    pub baseline: Option<Scenario>,
}

/// Command-line overrides applied on top of an experiment file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces the first seed; further seeds follow consecutively.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub backend: Option<Backend>,
    pub horizon_us: Option<u64>,
}

impl ExperimentSpec {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let file: ExperimentFile = parse(path, &text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        let mut scenario = Scenario::load(&resolve(&file.scenario))?;
        let mut baseline = match &file.compare {
            Some(c) => Some(match &c.baseline_scenario {
                Some(p) => Scenario::load(&resolve(p))?,
                None => scenario.clone(),
            }),
            None => None,
        };

        let backend = overrides.backend.or(file.backend);
        let horizon = overrides.horizon_us.or(file.horizon_us);
        for s in std::iter::once(&mut scenario).chain(baseline.as_mut()) {
            if let Some(b) = backend {
                s.sim.agent.backend = b;
            }
            if let Some(h) = horizon {
                s.sim.horizon_us = h;
            }
        }

        let mut seeds = file.seeds;
        if seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        if let Some(s) = overrides.seed {
            seeds = (0..seeds.len() as u64).map(|i| s + i).collect();
        }
        if let Some(sw) = &file.sweep {
            if sw.values.is_empty() {
                return Err(ConfigError::Invalid("sweep values must not be empty".into()));
            }
            if let Some(v) = sw.values.iter().find(|&&v| !sw.parameter.legal(v)) {
                return Err(ConfigError::Invalid(format!(
                    "sweep value {v} is outside the legal range of {}",
                    sw.parameter.name()
                )));
            }
        }

        let out_dir = match &overrides.out_dir {
            Some(d) => d.clone(),
            None => match &file.out_dir {
                Some(d) => resolve(d),
                None => PathBuf::from("out").join(&file.name),
            },
        };

        Ok(Self {
            name: file.name,
            scenario,
            seeds,
            out_dir,
            sweep: file.sweep,
            compare: file.compare,
            baseline,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const POC: &str = r#"
name = "t"
horizon_us = 1000
[topology]
preset = "poc"
[[flows]]
name = "main"
source = "h_s"
destination = "h_d"
mode = "cbr"
rate_pps = 100.0
[[events]]
at_us = 10
change = "background-start"
domain = 1
path = 0
load = 0.5
"#;

    #[test]
    fn preset_scenario_loads() {
        let s = Scenario::from_toml(Path::new("t.toml"), POC).unwrap();
        s.validate().unwrap();
        assert_eq!(s.sim.flows[0].mode, TrafficMode::Cbr { rate_pps: 100.0 });
        assert_eq!(s.sim.agent, AgentConfig::default());
        assert_eq!(s.first_shift_us(), Some(10));
    }

    #[test]
    fn unknown_traffic_mode_is_rejected() {
        let text = POC.replace("mode = \"cbr\"", "mode = \"poisson\"");
        let e = Scenario::from_toml(Path::new("t.toml"), &text).unwrap_err();
        assert!(e.to_string().contains("poisson"), "{e}");
    }

    #[test]
    fn unknown_agent_field_is_rejected() {
        let text = format!("{POC}\n[agent]\nlearning_rate = 0.3\n");
        assert!(Scenario::from_toml(Path::new("t.toml"), &text).is_err());
    }

    #[test]
    fn explicit_topology_collects_violations() {
        let text = r#"
name = "bad"
horizon_us = 1000
[topology]
nodes = [
  { name = "h", role = "host" },
  { name = "a", role = "switch" },
  { name = "b", role = "switch" },
]
cables = [{ a = "h", b = "a" }, { a = "a", b = "b" }]
[[topology.domains]]
id = 1
decision = "a"
endpoint = "b"
collector = "h"
segments = [["a", "b"]]
"#;
        let s = Scenario::from_toml(Path::new("t.toml"), text).unwrap();
        match s.validate() {
            Err(ConfigError::Topology(v)) => assert!(v.len() >= 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }
}
