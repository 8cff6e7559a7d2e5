//! Network graph, decision domains and candidate path segments.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Index into [`Topology::links`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Host,
    Switch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkParams {
    /// Service rate of the egress port, packets per second.
    pub capacity_pps: f64,
    pub propagation_us: u64,
    /// Waiting room of the egress FIFO, packets.
    pub queue_capacity: usize,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            capacity_pps: 10_000.0,
            propagation_us: 100,
            queue_capacity: 64,
        }
    }
}

/// A directed link. A bidirectional cable is two links.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub params: LinkParams,
}

#[derive(Debug, Clone, Default)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    sources: BTreeSet<NodeId>,
    destinations: BTreeSet<NodeId>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: NodeId, name: impl Into<String>, role: Role) -> &mut Self {
        self.nodes.push(Node {
            id,
            name: name.into(),
            role,
        });
        self
    }

    pub fn add_link(&mut self, from: NodeId, to: NodeId, params: LinkParams) -> LinkId {
        self.links.push(Link { from, to, params });
        LinkId(self.links.len() - 1)
    }

    /// Adds `a -> b` and `b -> a` with the same parameters.
    pub fn add_cable(&mut self, a: NodeId, b: NodeId, params: LinkParams) {
        self.add_link(a, b, params);
        self.add_link(b, a, params);
    }

    pub fn mark_source(&mut self, host: NodeId) {
        self.sources.insert(host);
    }

    pub fn mark_destination(&mut self, host: NodeId) {
        self.destinations.insert(host);
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn sources(&self) -> &BTreeSet<NodeId> {
        &self.sources
    }

    pub fn destinations(&self) -> &BTreeSet<NodeId> {
        &self.destinations
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_by_name(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn role(&self, id: NodeId) -> Option<Role> {
        self.node(id).map(|n| n.role)
    }

    pub fn is_switch(&self, id: NodeId) -> bool {
        self.role(id) == Some(Role::Switch)
    }

    pub fn is_host(&self, id: NodeId) -> bool {
        self.role(id) == Some(Role::Host)
    }

    /// First link from `from` to `to`, if any.
    pub fn link_between(&self, from: NodeId, to: NodeId) -> Option<LinkId> {
        self.links
            .iter()
            .position(|l| l.from == from && l.to == to)
            .map(LinkId)
    }

    /// Static next-hop table toward `dest`: for every node that can reach it,
    /// the outgoing link on a hop-count shortest path. Ties go to the lower
    /// neighbour id so the table is deterministic.
    pub fn next_hops_toward(&self, dest: NodeId) -> BTreeMap<NodeId, LinkId> {
        let mut incoming: HashMap<NodeId, Vec<(NodeId, LinkId)>> = HashMap::new();
        for (i, l) in self.links.iter().enumerate() {
            incoming.entry(l.to).or_default().push((l.from, LinkId(i)));
        }
        let mut dist: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut table: BTreeMap<NodeId, LinkId> = BTreeMap::new();
        dist.insert(dest, 0);
        let mut frontier = VecDeque::from([dest]);
        while let Some(n) = frontier.pop_front() {
            let d = dist[&n];
            let mut preds = incoming.get(&n).cloned().unwrap_or_default();
            preds.sort();
            for (p, link) in preds {
                match dist.get(&p) {
                    None => {
                        dist.insert(p, d + 1);
                        table.insert(p, link);
                        frontier.push_back(p);
                    }
                    Some(&pd) if pd == d + 1 => {
                        // keep the lower next-hop id among equal-length routes
                        let current = self.links[table[&p].0].to;
                        if n < current {
                            table.insert(p, link);
                        }
                    }
                    _ => {}
                }
            }
        }
        table
    }
}

/// One candidate route through a domain. `index` is zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSegment {
    pub index: usize,
    pub nodes: Vec<NodeId>,
}

impl PathSegment {
    pub fn new(index: usize, nodes: Vec<NodeId>) -> Self {
        Self { index, nodes }
    }

    /// The node following `at` on this segment.
    pub fn next_after(&self, at: NodeId) -> Option<NodeId> {
        let pos = self.nodes.iter().position(|&n| n == at)?;
        self.nodes.get(pos + 1).copied()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.contains(&n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub id: u32,
    pub decision_node: NodeId,
    pub endpoint_node: NodeId,
    pub collector_node: NodeId,
    pub segments: Vec<PathSegment>,
}

impl Domain {
    pub fn num_paths(&self) -> usize {
        self.segments.len()
    }

    pub fn segment(&self, index: usize) -> Option<&PathSegment> {
        self.segments.get(index)
    }

    /// Nodes of the domain subgraph (union of its segments).
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.segments
            .iter()
            .flat_map(|s| s.nodes.iter().copied())
            .collect()
    }
}

/// A broken structural invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("node id {0} is used more than once")]
    DuplicateNode(NodeId),
    #[error("link {from} -> {to} references unknown node {missing}")]
    UnknownLinkEndpoint {
        from: NodeId,
        to: NodeId,
        missing: NodeId,
    },
    #[error("link {from} -> {to} has invalid parameters: {reason}")]
    InvalidLinkParams {
        from: NodeId,
        to: NodeId,
        reason: &'static str,
    },
    #[error("{node} is listed as a source or destination host but is not a host")]
    NotAHost { node: NodeId },
    #[error("domain {domain}: {count} segment(s), a decision needs at least 2 (I_k < 2)")]
    TooFewSegments { domain: u32, count: usize },
    #[error("domain {domain}: {what} node {node} is not a switch in the topology")]
    RoleNotSwitch {
        domain: u32,
        what: &'static str,
        node: NodeId,
    },
    #[error("domain {domain}: segment {segment} has index field {found}")]
    SegmentIndexMismatch {
        domain: u32,
        segment: usize,
        found: usize,
    },
    #[error("domain {domain}: segment {segment} is shorter than two nodes")]
    SegmentTooShort { domain: u32, segment: usize },
    #[error("domain {domain}: segment {segment} does not start at the decision node")]
    SegmentStartMismatch { domain: u32, segment: usize },
    #[error("domain {domain}: segment endpoint mismatch on segment {segment}")]
    SegmentEndpointMismatch { domain: u32, segment: usize },
    #[error("domain {domain}: segment {segment} uses missing link {from} -> {to}")]
    SegmentNotAWalk {
        domain: u32,
        segment: usize,
        from: NodeId,
        to: NodeId,
    },
    #[error("domain {domain}: segment {segment} passes through non-switch {node}")]
    SegmentInteriorNotSwitch {
        domain: u32,
        segment: usize,
        node: NodeId,
    },
    #[error("domain {domain}: collector {collector} is not adjacent to the endpoint")]
    CollectorNotAdjacent { domain: u32, collector: NodeId },
}

/// Checks every structural invariant and returns all violations found.
pub fn validate_topology(t: &Topology, domains: &[Domain]) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();

    let mut seen = BTreeSet::new();
    for n in t.nodes() {
        if !seen.insert(n.id) {
            out.push(Violation::DuplicateNode(n.id));
        }
    }

    for l in t.links() {
        for end in [l.from, l.to] {
            if t.node(end).is_none() {
                out.push(Violation::UnknownLinkEndpoint {
                    from: l.from,
                    to: l.to,
                    missing: end,
                });
            }
        }
        let p = &l.params;
        let bad = if !(p.capacity_pps > 0.0 && p.capacity_pps.is_finite()) {
            Some("capacity must be positive")
        } else if p.queue_capacity < 1 {
            Some("queue capacity must be at least 1")
        } else {
            None
        };
        if let Some(reason) = bad {
            out.push(Violation::InvalidLinkParams {
                from: l.from,
                to: l.to,
                reason,
            });
        }
    }

    for &h in t.sources().iter().chain(t.destinations()) {
        if !t.is_host(h) {
            out.push(Violation::NotAHost { node: h });
        }
    }

    for d in domains {
        validate_domain(t, d, &mut out);
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn validate_domain(t: &Topology, d: &Domain, out: &mut Vec<Violation>) {
    let domain = d.id;
    if d.segments.len() < 2 {
        out.push(Violation::TooFewSegments {
            domain,
            count: d.segments.len(),
        });
    }
    for (what, node) in [
        ("decision", d.decision_node),
        ("endpoint", d.endpoint_node),
        ("collector", d.collector_node),
    ] {
        if !t.is_switch(node) {
            out.push(Violation::RoleNotSwitch { domain, what, node });
        }
    }
    if t.link_between(d.endpoint_node, d.collector_node).is_none() {
        out.push(Violation::CollectorNotAdjacent {
            domain,
            collector: d.collector_node,
        });
    }

    for (i, seg) in d.segments.iter().enumerate() {
        if seg.index != i {
            out.push(Violation::SegmentIndexMismatch {
                domain,
                segment: i,
                found: seg.index,
            });
        }
        if seg.nodes.len() < 2 {
            out.push(Violation::SegmentTooShort { domain, segment: i });
            continue;
        }
        if seg.nodes[0] != d.decision_node {
            out.push(Violation::SegmentStartMismatch { domain, segment: i });
        }
        if seg.nodes[seg.nodes.len() - 1] != d.endpoint_node {
            out.push(Violation::SegmentEndpointMismatch { domain, segment: i });
        }
        for pair in seg.nodes.windows(2) {
            if t.link_between(pair[0], pair[1]).is_none() {
                out.push(Violation::SegmentNotAWalk {
                    domain,
                    segment: i,
                    from: pair[0],
                    to: pair[1],
                });
            }
        }
        for &n in &seg.nodes[1..seg.nodes.len() - 1] {
            if !t.is_switch(n) {
                out.push(Violation::SegmentInteriorNotSwitch {
                    domain,
                    segment: i,
                    node: n,
                });
            }
        }
    }
}

/// Node ids of the five-switch, two-host proof-of-concept network.
pub mod poc {
    use super::NodeId;

    pub const H_S: NodeId = NodeId(0);
    pub const S1: NodeId = NodeId(1);
    pub const S2: NodeId = NodeId(2);
    pub const S3: NodeId = NodeId(3);
    pub const S4: NodeId = NodeId(4);
    pub const S5: NodeId = NodeId(5);
    pub const H_D: NodeId = NodeId(6);
}

/// The proof-of-concept network: `h_s -> S1`, two segments `S1 S2 S3` and
/// `S1 S4 S3`, `S3 -> h_d`, collector `S5` hanging off the sink. All cables
/// are bidirectional and share `params`.
pub fn build_poc_topology(params: LinkParams) -> (Topology, Vec<Domain>) {
    use poc::*;
    let mut t = Topology::new();
    t.add_node(H_S, "h_s", Role::Host)
        .add_node(S1, "S1", Role::Switch)
        .add_node(S2, "S2", Role::Switch)
        .add_node(S3, "S3", Role::Switch)
        .add_node(S4, "S4", Role::Switch)
        .add_node(S5, "S5", Role::Switch)
        .add_node(H_D, "h_d", Role::Host);
    for (a, b) in [(H_S, S1), (S1, S2), (S1, S4), (S2, S3), (S4, S3), (S3, H_D), (S3, S5)] {
        t.add_cable(a, b, params);
    }
    t.mark_source(H_S);
    t.mark_destination(H_D);

    let domain = Domain {
        id: 1,
        decision_node: S1,
        endpoint_node: S3,
        collector_node: S5,
        segments: vec![
            PathSegment::new(0, vec![S1, S2, S3]),
            PathSegment::new(1, vec![S1, S4, S3]),
        ],
    };
    (t, vec![domain])
}

#[cfg(test)]
mod tests {
    use super::poc::*;
    use super::*;

    #[test]
    fn poc_shape() {
        let (t, d) = build_poc_topology(LinkParams::default());
        let switches = t.nodes().iter().filter(|n| n.role == Role::Switch).count();
        let hosts = t.nodes().iter().filter(|n| n.role == Role::Host).count();
        assert_eq!((switches, hosts, d.len(), d[0].num_paths()), (5, 2, 1, 2));
        assert_eq!(d[0].segments[0].nodes, vec![S1, S2, S3]);
        assert_eq!(d[0].segments[1].nodes, vec![S1, S4, S3]);
        assert_eq!(validate_topology(&t, &d), Ok(()));
    }

    #[test]
    fn single_segment_domain_is_rejected() {
        let (t, mut d) = build_poc_topology(LinkParams::default());
        d[0].segments.truncate(1);
        let v = validate_topology(&t, &d).unwrap_err();
        assert_eq!(v, vec![Violation::TooFewSegments { domain: 1, count: 1 }]);
        assert!(v[0].to_string().contains("I_k < 2"));
    }

    #[test]
    fn endpoint_mismatch_is_reported() {
        let (t, mut d) = build_poc_topology(LinkParams::default());
        d[0].segments[1].nodes = vec![S1, S4];
        let v = validate_topology(&t, &d).unwrap_err();
        assert!(v.contains(&Violation::SegmentEndpointMismatch {
            domain: 1,
            segment: 1
        }));
        assert!(v
            .iter()
            .any(|x| x.to_string().contains("segment endpoint mismatch")));
    }

    #[test]
    fn all_violations_are_collected() {
        let (mut t, mut d) = build_poc_topology(LinkParams::default());
        t.add_link(
            S2,
            NodeId(99),
            LinkParams {
                capacity_pps: 0.0,
                ..LinkParams::default()
            },
        );
        d[0].segments[0].nodes = vec![S1, H_D, S3];
        d[0].collector_node = S1;
        let v = validate_topology(&t, &d).unwrap_err();
        assert!(v.len() >= 5, "{v:?}");
        assert!(v.iter().any(|x| matches!(x, Violation::UnknownLinkEndpoint { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::InvalidLinkParams { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::SegmentNotAWalk { .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::SegmentInteriorNotSwitch { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::CollectorNotAdjacent { .. })));
    }

    #[test]
    fn overlapping_domains_are_fine() {
        let (t, mut d) = build_poc_topology(LinkParams::default());
        let mut second = d[0].clone();
        second.id = 2;
        d.push(second);
        assert_eq!(validate_topology(&t, &d), Ok(()));
    }

    #[test]
    fn next_hops_are_shortest_and_deterministic() {
        let (t, _) = build_poc_topology(LinkParams::default());
        let to_s1 = t.next_hops_toward(S1);
        // S5 -> S3 -> S2 -> S1 (S2 beats S4 on the tie)
        assert_eq!(t.link(to_s1[&S5]).to, S3);
        assert_eq!(t.link(to_s1[&S3]).to, S2);
        let to_hd = t.next_hops_toward(H_D);
        assert_eq!(t.link(to_hd[&S3]).to, H_D);
        assert_eq!(t.link(to_hd[&H_S]).to, S1);
    }
}
