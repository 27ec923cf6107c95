//! Deterministic network fabric.
//!
//! Models the emulated data plane: switches and hosts joined by
//! fixed-latency links, per-switch flow rules installed by the
//! controller, latency injections that stand in for traffic-control
//! delay shaping, and a virtual-time event queue. Delay is the only
//! impairment modeled — no loss, no queueing, no bandwidth limits.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::rng::SimRng;
use crate::time::SimTime;

/// Switch or host identifier.
pub type NodeId = String;
/// Identifier of a forwarded flow (audio stream or pinned probe flow).
pub type FlowId = String;

/// Canonical path identifier: the switch sequence joined by hyphens,
/// e.g. `"1-3-5"`. Ordering is lexicographic on that string.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathId(String);

impl PathId {
    pub fn new(id: impl Into<String>) -> Self {
        PathId(id.into())
    }

    pub fn from_hops(hops: &[NodeId]) -> Self {
        PathId(hops.join("-"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Undirected link between two declared nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    /// One-way latency floor in milliseconds.
    pub base_latency_ms: f64,
    /// Upper bound of the uniform jitter drawn per traversal.
    pub jitter_ms: f64,
}

/// Key of an undirected link: endpoints in sorted order.
pub type LinkKey = (NodeId, NodeId);

pub fn link_key(a: &str, b: &str) -> LinkKey {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Switches, hosts, and the links joining them.
#[derive(Clone, Debug, Default)]
pub struct Topology {
    pub switches: BTreeSet<NodeId>,
    pub hosts: BTreeSet<NodeId>,
    pub links: Vec<Link>,
}

impl Topology {
    /// Structural violations, all of them; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut seen: BTreeSet<LinkKey> = BTreeSet::new();
        for link in &self.links {
            for end in [&link.a, &link.b] {
                if !self.switches.contains(end) && !self.hosts.contains(end) {
                    problems.push(format!("link references undeclared node `{end}`"));
                }
            }
            if link.a == link.b {
                problems.push(format!("self-loop link at `{}`", link.a));
            }
            if self.hosts.contains(&link.a) && self.hosts.contains(&link.b) {
                problems.push(format!(
                    "link `{}`-`{}` joins two hosts; hosts must attach to switches",
                    link.a, link.b
                ));
            }
            if !seen.insert(link_key(&link.a, &link.b)) {
                problems.push(format!("duplicate link `{}`-`{}`", link.a, link.b));
            }
            if !(link.base_latency_ms >= 0.0) || !link.base_latency_ms.is_finite() {
                problems.push(format!(
                    "link `{}`-`{}` has negative base latency",
                    link.a, link.b
                ));
            }
            if !(link.jitter_ms >= 0.0) || !link.jitter_ms.is_finite() {
                problems.push(format!("link `{}`-`{}` has negative jitter", link.a, link.b));
            }
        }
        for switch in self.switches.intersection(&self.hosts) {
            problems.push(format!("node `{switch}` declared as both switch and host"));
        }
        problems
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        let problems = self.violations();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(NetsimError::InvalidTopology(problems.join("; ")))
        }
    }

    pub fn link_between(&self, a: &str, b: &str) -> Option<&Link> {
        let key = link_key(a, b);
        self.links.iter().find(|l| link_key(&l.a, &l.b) == key)
    }

    fn neighbors<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a NodeId> {
        self.links.iter().filter_map(move |l| {
            if l.a == node {
                Some(&l.b)
            } else if l.b == node {
                Some(&l.a)
            } else {
                None
            }
        })
    }

    /// All simple switch paths from `src_host` to `dst_host`, ordered by
    /// canonical path id ascending. Hosts never relay, so every interior
    /// hop is a switch. Disconnected hosts yield an empty list.
    pub fn enumerate_paths(&self, src_host: &str, dst_host: &str) -> Result<Vec<PathRoute>, NetsimError> {
        for host in [src_host, dst_host] {
            if !self.hosts.contains(host) {
                return Err(NetsimError::UnknownNode(host.to_string()));
            }
        }
        let mut found = Vec::new();
        let mut hops: Vec<NodeId> = Vec::new();
        let mut visited: BTreeSet<NodeId> = BTreeSet::new();
        self.walk(src_host, src_host, dst_host, &mut hops, &mut visited, &mut found);
        found.sort_by(|a: &PathRoute, b: &PathRoute| a.path_id.cmp(&b.path_id));
        Ok(found)
    }

    fn walk(
        &self,
        at: &str,
        src: &str,
        dst: &str,
        hops: &mut Vec<NodeId>,
        visited: &mut BTreeSet<NodeId>,
        found: &mut Vec<PathRoute>,
    ) {
        for next in self.neighbors(at).cloned().collect::<Vec<_>>() {
            if next == dst {
                if !hops.is_empty() {
                    found.push(PathRoute::new(hops.clone()));
                }
                continue;
            }
            if next == src || !self.switches.contains(&next) || visited.contains(&next) {
                continue;
            }
            visited.insert(next.clone());
            hops.push(next.clone());
            self.walk(&next, src, dst, hops, visited, found);
            hops.pop();
            visited.remove(&next);
        }
    }
}

/// One forwarding path: the ordered switch sequence between the hosts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathRoute {
    pub path_id: PathId,
    /// Switches from source-adjacent to destination-adjacent.
    pub hops: Vec<NodeId>,
}

impl PathRoute {
    pub fn new(hops: Vec<NodeId>) -> Self {
        PathRoute {
            path_id: PathId::from_hops(&hops),
            hops,
        }
    }

    /// Full node sequence including both hosts.
    pub fn route_nodes(&self, src_host: &str, dst_host: &str) -> Vec<NodeId> {
        let mut nodes = Vec::with_capacity(self.hops.len() + 2);
        nodes.push(src_host.to_string());
        nodes.extend(self.hops.iter().cloned());
        nodes.push(dst_host.to_string());
        nodes
    }

    /// Undirected link keys traversed from source to destination.
    pub fn route_links(&self, src_host: &str, dst_host: &str) -> Vec<LinkKey> {
        let nodes = self.route_nodes(src_host, dst_host);
        nodes.windows(2).map(|w| link_key(&w[0], &w[1])).collect()
    }
}

/// One per-switch forwarding entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowRule {
    pub switch_id: NodeId,
    pub flow_id: FlowId,
    pub next_hop: NodeId,
}

/// Target of a latency injection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InjectionTarget {
    /// Applied to the path's first link not shared with any other
    /// enumerated path, so parallel paths stay independent.
    Path(PathId),
    Link { a: NodeId, b: NodeId },
}

/// A scheduled change to injected link latency. Negative values remove
/// previously added delay; the injected component floors at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyInjection {
    pub at: SimTime,
    pub target: InjectionTarget,
    pub added_latency_ms: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NetsimError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown path `{0}`")]
    UnknownPath(String),
    #[error("unknown link `{0}`-`{1}`")]
    UnknownLink(String, String),
    #[error("path `{0}` is not connected in the topology")]
    BrokenPath(String),
    #[error("no route for flow `{0}`")]
    NoRoute(String),
    #[error("endpoints not registered with the fabric")]
    EndpointsNotRegistered,
}

// ---------------------------------------------------------------------------
// Event queue
// ---------------------------------------------------------------------------

/// An event drawn from the queue: virtual timestamp, insertion sequence,
/// and the caller's payload. Events at equal timestamps pop in insertion
/// order, which keeps runs deterministic.
#[derive(Clone, Debug)]
pub struct ScheduledEvent<T> {
    pub time: SimTime,
    pub seq: u64,
    pub payload: T,
}

struct QueueEntry<T>(ScheduledEvent<T>);

impl<T> PartialEq for QueueEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.0.time == other.0.time && self.0.seq == other.0.seq
    }
}

impl<T> Eq for QueueEntry<T> {}

impl<T> Ord for QueueEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we pop earliest first.
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

impl<T> PartialOrd for QueueEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap of future events ordered by `(time, seq)`.
pub struct EventQueue<T> {
    heap: BinaryHeap<QueueEntry<T>>,
    next_seq: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: SimTime, payload: T) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(QueueEntry(ScheduledEvent { time, seq, payload }));
        seq
    }

    pub fn pop(&mut self) -> Option<ScheduledEvent<T>> {
        self.heap.pop().map(|e| e.0)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

// ---------------------------------------------------------------------------
// Fabric
// ---------------------------------------------------------------------------

/// A packet hand-off computed by the fabric: when it arrives and the
/// transit delay it experienced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delivery {
    pub deliver_at: SimTime,
    pub transit_ms: f64,
}

#[derive(Clone, Debug)]
struct FlowAssignment {
    /// Node the flow enters from.
    origin: NodeId,
    /// Node the flow exits to.
    terminus: NodeId,
    /// Switch hops in forwarding order for this flow.
    hops: Vec<NodeId>,
    path_id: PathId,
}

impl FlowAssignment {
    fn route_nodes(&self) -> Vec<NodeId> {
        let mut nodes = Vec::with_capacity(self.hops.len() + 2);
        nodes.push(self.origin.clone());
        nodes.extend(self.hops.iter().cloned());
        nodes.push(self.terminus.clone());
        nodes
    }
}

/// The data plane: topology plus mutable forwarding and latency state.
///
/// A fabric serves one source/destination host pair, registered once at
/// setup; that registration fixes the enumerated path universe used for
/// path-targeted injections and path-id lookups.
pub struct Fabric {
    topology: Topology,
    /// Injected latency per undirected link, always >= 0.
    added_ms: BTreeMap<LinkKey, f64>,
    /// Optional per-switch forwarding time.
    switch_processing_ms: BTreeMap<NodeId, f64>,
    rules: BTreeMap<(NodeId, FlowId), NodeId>,
    assignments: BTreeMap<FlowId, FlowAssignment>,
    src_host: Option<NodeId>,
    dst_host: Option<NodeId>,
    paths: BTreeMap<PathId, PathRoute>,
    rng: SimRng,
}

impl Fabric {
    pub fn new(topology: Topology, seed: u64) -> Result<Self, NetsimError> {
        topology.validate()?;
        Ok(Fabric {
            topology,
            added_ms: BTreeMap::new(),
            switch_processing_ms: BTreeMap::new(),
            rules: BTreeMap::new(),
            assignments: BTreeMap::new(),
            src_host: None,
            dst_host: None,
            paths: BTreeMap::new(),
            rng: SimRng::seed_from_u64(seed),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn set_switch_processing_ms(&mut self, switch: &str, ms: f64) -> Result<(), NetsimError> {
        if !self.topology.switches.contains(switch) {
            return Err(NetsimError::UnknownNode(switch.to_string()));
        }
        self.switch_processing_ms.insert(switch.to_string(), ms);
        Ok(())
    }

    /// Fixes the host pair and enumerates the path universe between them.
    pub fn register_endpoints(&mut self, src_host: &str, dst_host: &str) -> Result<Vec<PathRoute>, NetsimError> {
        let paths = self.topology.enumerate_paths(src_host, dst_host)?;
        self.src_host = Some(src_host.to_string());
        self.dst_host = Some(dst_host.to_string());
        self.paths = paths
            .iter()
            .map(|p| (p.path_id.clone(), p.clone()))
            .collect();
        Ok(paths)
    }

    pub fn path(&self, path_id: &PathId) -> Result<&PathRoute, NetsimError> {
        self.paths
            .get(path_id)
            .ok_or_else(|| NetsimError::UnknownPath(path_id.to_string()))
    }

    fn hosts(&self) -> Result<(&NodeId, &NodeId), NetsimError> {
        match (&self.src_host, &self.dst_host) {
            (Some(s), Some(d)) => Ok((s, d)),
            _ => Err(NetsimError::EndpointsNotRegistered),
        }
    }

    fn link_latency_ms(&self, key: &LinkKey) -> Result<f64, NetsimError> {
        let link = self
            .topology
            .link_between(&key.0, &key.1)
            .ok_or_else(|| NetsimError::UnknownLink(key.0.clone(), key.1.clone()))?;
        Ok(link.base_latency_ms + self.added_ms.get(key).copied().unwrap_or(0.0))
    }

    /// Current one-way delay of `path_id` without jitter: the sum of the
    /// link latencies (including both host links) plus any per-switch
    /// forwarding time. This is the deterministic ground truth the probe
    /// estimator is measured against.
    pub fn base_transit_ms(&self, path_id: &PathId) -> Result<f64, NetsimError> {
        let (src, dst) = self.hosts()?;
        let path = self
            .paths
            .get(path_id)
            .ok_or_else(|| NetsimError::UnknownPath(path_id.to_string()))?;
        let nodes = path.route_nodes(src, dst);
        self.route_base_ms(&nodes)
    }

    fn route_base_ms(&self, nodes: &[NodeId]) -> Result<f64, NetsimError> {
        let mut total = 0.0;
        for pair in nodes.windows(2) {
            total += self.link_latency_ms(&link_key(&pair[0], &pair[1]))?;
        }
        for node in &nodes[1..nodes.len() - 1] {
            total += self.switch_processing_ms.get(node).copied().unwrap_or(0.0);
        }
        Ok(total)
    }

    /// Base delay plus one fresh jitter draw per traversed link with
    /// jitter configured.
    fn route_transit_ms(&mut self, nodes: &[NodeId]) -> Result<f64, NetsimError> {
        let base = self.route_base_ms(nodes)?;
        let mut jitter = 0.0;
        for pair in nodes.windows(2) {
            let link = self
                .topology
                .link_between(&pair[0], &pair[1])
                .expect("link verified by route_base_ms");
            if link.jitter_ms > 0.0 {
                jitter += self.rng.uniform_ms(link.jitter_ms);
            }
        }
        Ok(base + jitter)
    }

    /// One-way delay of `path_id` for one traversal: base transit plus a
    /// fresh uniform jitter draw per link with jitter configured.
    pub fn transit_delay_ms(&mut self, path_id: &PathId) -> Result<f64, NetsimError> {
        let (src, dst) = {
            let (s, d) = self.hosts()?;
            (s.clone(), d.clone())
        };
        let path = self
            .paths
            .get(path_id)
            .ok_or_else(|| NetsimError::UnknownPath(path_id.to_string()))?;
        let nodes = path.route_nodes(&src, &dst);
        self.route_transit_ms(&nodes)
    }

    /// Installs one rule per hop for `flow_id` along `path_id` and drops
    /// any rules the flow held on other switches, all in the same virtual
    /// instant — the flow is never left with rules on a strict subset of
    /// a path. In-flight packets are unaffected. Reinstalling the active
    /// path is idempotent.
    pub fn install_rules(&mut self, flow_id: &str, path_id: &PathId) -> Result<Vec<FlowRule>, NetsimError> {
        self.install_oriented(flow_id, path_id, false)
    }

    /// Same as `install_rules` but forwarding from the destination host
    /// back to the source, for echo traffic pinned to the same path.
    pub fn install_rules_reverse(&mut self, flow_id: &str, path_id: &PathId) -> Result<Vec<FlowRule>, NetsimError> {
        self.install_oriented(flow_id, path_id, true)
    }

    fn install_oriented(
        &mut self,
        flow_id: &str,
        path_id: &PathId,
        reverse: bool,
    ) -> Result<Vec<FlowRule>, NetsimError> {
        let (src, dst) = {
            let (s, d) = self.hosts()?;
            (s.clone(), d.clone())
        };
        let path = self
            .paths
            .get(path_id)
            .ok_or_else(|| NetsimError::UnknownPath(path_id.to_string()))?
            .clone();
        // Verify connectivity before touching the rule table.
        for key in path.route_links(&src, &dst) {
            if self.topology.link_between(&key.0, &key.1).is_none() {
                return Err(NetsimError::BrokenPath(path_id.to_string()));
            }
        }
        let (origin, terminus) = if reverse { (dst, src) } else { (src, dst) };
        let mut hops = path.hops.clone();
        if reverse {
            hops.reverse();
        }
        self.rules.retain(|(_, f), _| f != flow_id);
        let mut installed = Vec::with_capacity(hops.len());
        for (i, switch) in hops.iter().enumerate() {
            let next_hop = hops.get(i + 1).cloned().unwrap_or_else(|| terminus.clone());
            self.rules
                .insert((switch.clone(), flow_id.to_string()), next_hop.clone());
            installed.push(FlowRule {
                switch_id: switch.clone(),
                flow_id: flow_id.to_string(),
                next_hop,
            });
        }
        self.assignments.insert(
            flow_id.to_string(),
            FlowAssignment {
                origin,
                terminus,
                hops,
                path_id: path.path_id.clone(),
            },
        );
        Ok(installed)
    }

    pub fn remove_flow(&mut self, flow_id: &str) {
        self.rules.retain(|(_, f), _| f != flow_id);
        self.assignments.remove(flow_id);
    }

    /// Removes a single rule. Only used to exercise fault paths.
    pub fn remove_rule(&mut self, switch: &str, flow_id: &str) {
        self.rules.remove(&(switch.to_string(), flow_id.to_string()));
    }

    pub fn rule(&self, switch: &str, flow_id: &str) -> Option<&NodeId> {
        self.rules.get(&(switch.to_string(), flow_id.to_string()))
    }

    pub fn rules_for_flow(&self, flow_id: &str) -> Vec<FlowRule> {
        self.rules
            .iter()
            .filter(|((_, f), _)| f == flow_id)
            .map(|((switch, flow), next)| FlowRule {
                switch_id: switch.clone(),
                flow_id: flow.clone(),
                next_hop: next.clone(),
            })
            .collect()
    }

    /// Path a flow is currently assigned to, if its rules are complete.
    pub fn active_path(&self, flow_id: &str) -> Option<&PathId> {
        let assignment = self.assignments.get(flow_id)?;
        self.flow_route(flow_id).ok()?;
        Some(&assignment.path_id)
    }

    /// Verifies every hop of the flow's assigned path still holds the
    /// matching rule; returns the assignment on success.
    fn flow_route(&self, flow_id: &str) -> Result<&FlowAssignment, NetsimError> {
        let assignment = self
            .assignments
            .get(flow_id)
            .ok_or_else(|| NetsimError::NoRoute(flow_id.to_string()))?;
        for (i, switch) in assignment.hops.iter().enumerate() {
            let expected = assignment.hops.get(i + 1).unwrap_or(&assignment.terminus);
            match self.rules.get(&(switch.clone(), flow_id.to_string())) {
                Some(next) if next == expected => {}
                _ => return Err(NetsimError::NoRoute(flow_id.to_string())),
            }
        }
        Ok(assignment)
    }

    pub fn flow_routable(&self, flow_id: &str) -> bool {
        self.flow_route(flow_id).is_ok()
    }

    /// Forwards one packet of `flow_id`, computing its full transit at
    /// send time. Rerouting after the send leaves the packet on its old
    /// path; a missing rule on any hop is a no-route error.
    pub fn send_packet(&mut self, flow_id: &str, now: SimTime) -> Result<Delivery, NetsimError> {
        let nodes = self.flow_route(flow_id)?.route_nodes();
        let transit_ms = self.route_transit_ms(&nodes)?;
        Ok(Delivery {
            deliver_at: now.after_ms(transit_ms),
            transit_ms,
        })
    }

    /// Applies a latency injection. Path targets land on the path's first
    /// link not shared with any other enumerated path (falling back to
    /// the first link when every link is shared). The injected component
    /// floors at zero. Already-scheduled deliveries are unaffected.
    pub fn apply_injection(&mut self, injection: &LatencyInjection) -> Result<LinkKey, NetsimError> {
        let key = match &injection.target {
            InjectionTarget::Link { a, b } => {
                let key = link_key(a, b);
                if self.topology.link_between(&key.0, &key.1).is_none() {
                    return Err(NetsimError::UnknownLink(key.0, key.1));
                }
                key
            }
            InjectionTarget::Path(path_id) => self.private_link_of(path_id)?,
        };
        let slot = self.added_ms.entry(key.clone()).or_insert(0.0);
        *slot = (*slot + injection.added_latency_ms).max(0.0);
        Ok(key)
    }

    /// First link of `path_id` that no other enumerated path traverses.
    fn private_link_of(&self, path_id: &PathId) -> Result<LinkKey, NetsimError> {
        let (src, dst) = self.hosts()?;
        let path = self
            .paths
            .get(path_id)
            .ok_or_else(|| NetsimError::UnknownPath(path_id.to_string()))?;
        let own_links = path.route_links(src, dst);
        let shared: BTreeSet<LinkKey> = self
            .paths
            .values()
            .filter(|p| &p.path_id != path_id)
            .flat_map(|p| p.route_links(src, dst))
            .collect();
        Ok(own_links
            .iter()
            .find(|k| !shared.contains(*k))
            .unwrap_or(&own_links[0])
            .clone())
    }

    /// Injected latency currently applied to a link.
    pub fn injected_ms(&self, a: &str, b: &str) -> f64 {
        self.added_ms.get(&link_key(a, b)).copied().unwrap_or(0.0)
    }
}
