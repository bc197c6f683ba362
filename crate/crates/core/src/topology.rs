//! Experiment topologies. Builders return an immutable `Topology`; per-port
//! queue state lives in `net::Network`, built from it.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::net::{self, FlowTuple, LinkId, NodeId, PortId};
use crate::sim::{RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Host,
    Switch,
}

impl NodeKind {
    pub fn is_switch(self) -> bool {
        self == NodeKind::Switch
    }
}

#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct LinkSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub rate_bps: u64,
    pub delay: SimTime,
}

#[derive(Debug, Clone, Copy)]
pub struct Adjacency {
    pub peer: NodeId,
    pub link: LinkId,
    pub egress: PortId,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    /// Named egress ports of interest, e.g. the data direction of a bottleneck.
    pub labels: BTreeMap<String, PortId>,
    adjacency: Vec<Vec<Adjacency>>,
}

impl Topology {
    pub fn new(name: impl Into<String>) -> Self {
        Topology {
            name: name.into(),
            nodes: Vec::new(),
            links: Vec::new(),
            labels: BTreeMap::new(),
            adjacency: Vec::new(),
        }
    }

    pub fn add_node(&mut self, name: impl Into<String>, kind: NodeKind) -> NodeId {
        self.nodes.push(NodeSpec { name: name.into(), kind });
        self.adjacency.push(Vec::new());
        (self.nodes.len() - 1) as NodeId
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, rate_bps: u64, delay: SimTime) -> LinkId {
        assert!(a != b, "self loop");
        let id = self.links.len() as LinkId;
        self.links.push(LinkSpec { a, b, rate_bps, delay });
        self.adjacency[a as usize].push(Adjacency { peer: b, link: id, egress: net::port_of(id, true) });
        self.adjacency[b as usize].push(Adjacency { peer: a, link: id, egress: net::port_of(id, false) });
        id
    }

    /// Labels the egress port on `from` for link `link`.
    pub fn label(&mut self, name: impl Into<String>, link: LinkId, from: NodeId) {
        let l = &self.links[link as usize];
        debug_assert!(l.a == from || l.b == from);
        self.labels.insert(name.into(), net::port_of(link, l.a == from));
    }

    pub fn adjacency(&self, node: NodeId) -> &[Adjacency] {
        &self.adjacency[node as usize]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(|i| i as NodeId)
    }

    pub fn host(&self, name: &str) -> Option<NodeId> {
        self.node_by_name(name)
            .filter(|&n| self.nodes[n as usize].kind == NodeKind::Host)
    }

    pub fn hosts(&self) -> Vec<NodeId> {
        (0..self.nodes.len() as NodeId)
            .filter(|&n| self.nodes[n as usize].kind == NodeKind::Host)
            .collect()
    }

    pub fn port_count(&self) -> usize {
        self.links.len() * 2
    }

    pub fn port_owner(&self, port: PortId) -> NodeId {
        let l = &self.links[net::link_of(port) as usize];
        if port.is_multiple_of(2) {
            l.a
        } else {
            l.b
        }
    }

    pub fn port_rate(&self, port: PortId) -> u64 {
        self.links[net::link_of(port) as usize].rate_bps
    }

    pub fn port_delay(&self, port: PortId) -> SimTime {
        self.links[net::link_of(port) as usize].delay
    }

    pub fn is_switch_port(&self, port: PortId) -> bool {
        self.nodes[self.port_owner(port) as usize].kind.is_switch()
    }

    /// Sum of propagation delays one way along `ports`.
    pub fn path_delay(&self, ports: &[PortId]) -> SimTime {
        ports.iter().fold(SimTime::ZERO, |acc, &p| acc + self.port_delay(p))
    }

    /// Access-link rate of a host. Hosts have exactly one link in every builder.
    pub fn host_rate(&self, host: NodeId) -> u64 {
        self.adjacency(host)
            .iter()
            .map(|a| self.links[a.link as usize].rate_bps)
            .max()
            .unwrap_or(0)
    }

    /// Connectivity check plus a symmetric-routing self-test over random host pairs.
    pub fn self_test(&self, pairs: usize, seed: u64) -> Result<()> {
        let hosts = self.hosts();
        if hosts.len() < 2 {
            return Err(Error::config(format!("topology {} has fewer than two hosts", self.name)));
        }
        for &h in &hosts[1..] {
            net::route_flow(self, &FlowTuple { src: hosts[0], dst: h, sport: 1, dport: 1 })?;
        }
        let mut rng = RngStream::new(seed, u64::MAX);
        for _ in 0..pairs {
            let a = hosts[rng.below(hosts.len() as u64) as usize];
            let b = hosts[rng.below(hosts.len() as u64) as usize];
            if a == b {
                continue;
            }
            let t = FlowTuple { src: a, dst: b, sport: rng.below(65536) as u16, dport: 5000 };
            let route = net::route_flow(self, &t)?;
            if !route.is_symmetric() {
                return Err(Error::Routing(format!("asymmetric route for {t:?}")));
            }
        }
        Ok(())
    }
}

fn split_delay(rtt: SimTime, one_way_links: u64) -> SimTime {
    SimTime(rtt.0 / (2 * one_way_links))
}

/// `n_pairs` senders `s*` on switch `sw0`, `n_pairs` receivers `r*` on `sw1`.
/// Every link runs at `rate`; per-link delay is `rtt / 6`. Label `bottleneck`
/// is the `sw0 -> sw1` data direction.
pub fn dumbbell(n_pairs: usize, rate_bps: u64, rtt: SimTime) -> Result<Topology> {
    if n_pairs == 0 {
        return Err(Error::config("dumbbell needs at least one pair"));
    }
    let d = split_delay(rtt, 3);
    let mut t = Topology::new(format!("dumbbell-{n_pairs}"));
    let senders: Vec<_> = (0..n_pairs).map(|i| t.add_node(format!("s{i}"), NodeKind::Host)).collect();
    let receivers: Vec<_> = (0..n_pairs).map(|i| t.add_node(format!("r{i}"), NodeKind::Host)).collect();
    let sw0 = t.add_node("sw0", NodeKind::Switch);
    let sw1 = t.add_node("sw1", NodeKind::Switch);
    for &s in &senders {
        t.add_link(s, sw0, rate_bps, d);
    }
    let mid = t.add_link(sw0, sw1, rate_bps, d);
    t.label("bottleneck", mid, sw0);
    for &r in &receivers {
        t.add_link(sw1, r, rate_bps, d);
    }
    Ok(t)
}

/// Chain `sw0 .. swN`. The long flow runs `long_src`(sw0) to `long_dst`(swN);
/// cross flow `i` runs `x{i}_src`(sw{i-1}) to `x{i}_dst`(sw{i}). Labels `link{i}`
/// are the data directions. Delays give the long flow a round trip of `rtt`.
pub fn parking_lot(n_bottlenecks: usize, rate_bps: u64, rtt: SimTime) -> Result<Topology> {
    if n_bottlenecks == 0 {
        return Err(Error::config("parking lot needs at least one bottleneck"));
    }
    let d = split_delay(rtt, n_bottlenecks as u64 + 2);
    let mut t = Topology::new(format!("parking-lot-{n_bottlenecks}"));
    let sw: Vec<_> = (0..=n_bottlenecks)
        .map(|i| t.add_node(format!("sw{i}"), NodeKind::Switch))
        .collect();
    let long_src = t.add_node("long_src", NodeKind::Host);
    t.add_link(long_src, sw[0], rate_bps, d);
    let long_dst = t.add_node("long_dst", NodeKind::Host);
    t.add_link(sw[n_bottlenecks], long_dst, rate_bps, d);
    for i in 1..=n_bottlenecks {
        let l = t.add_link(sw[i - 1], sw[i], rate_bps, d);
        t.label(format!("link{i}"), l, sw[i - 1]);
        let xs = t.add_node(format!("x{i}_src"), NodeKind::Host);
        t.add_link(xs, sw[i - 1], rate_bps, d);
        let xd = t.add_node(format!("x{i}_dst"), NodeKind::Host);
        t.add_link(sw[i], xd, rate_bps, d);
    }
    Ok(t)
}

/// Two-link chain `sw2 -> sw1 -> sw0` (data direction). Flows `1..=n` run from
/// `f{i}_src`(sw2) to `f{i}_dst`(sw0) across Link 2 and Link 1; flow 0 runs from
/// `f0_src`(sw2) to `f0_dst`(sw1) across Link 2 only. Their credits meet Link 1
/// first, so Link 2's credit port sees flows 1..n already thinned.
pub fn multi_bottleneck(n_left_flows: usize, rate_bps: u64, rtt: SimTime) -> Result<Topology> {
    if n_left_flows == 0 {
        return Err(Error::config("multi-bottleneck needs at least one flow on link 1"));
    }
    let d = split_delay(rtt, 4);
    let mut t = Topology::new(format!("multi-bottleneck-{n_left_flows}"));
    let sw0 = t.add_node("sw0", NodeKind::Switch);
    let sw1 = t.add_node("sw1", NodeKind::Switch);
    let sw2 = t.add_node("sw2", NodeKind::Switch);
    let l1 = t.add_link(sw1, sw0, rate_bps, d);
    t.label("link1", l1, sw1);
    let l2 = t.add_link(sw2, sw1, rate_bps, d);
    t.label("link2", l2, sw2);
    for i in 0..=n_left_flows {
        let src = t.add_node(format!("f{i}_src"), NodeKind::Host);
        t.add_link(src, sw2, rate_bps, d);
        let dst = t.add_node(format!("f{i}_dst"), NodeKind::Host);
        let edge = if i == 0 { sw1 } else { sw0 };
        // flow 0 gets an extra hop of delay so every flow has the same base RTT
        let dd = if i == 0 { SimTime(d.0 * 2) } else { d };
        t.add_link(edge, dst, rate_bps, dd);
    }
    Ok(t)
}

/// `hosts` hosts `h*` on one switch `tor`.
pub fn single_tor(hosts: usize, rate_bps: u64, link_delay: SimTime) -> Result<Topology> {
    if hosts < 2 {
        return Err(Error::config("single-ToR topology needs at least two hosts"));
    }
    let mut t = Topology::new(format!("single-tor-{hosts}"));
    let tor = t.add_node("tor", NodeKind::Switch);
    for i in 0..hosts {
        let h = t.add_node(format!("h{i}"), NodeKind::Host);
        let l = t.add_link(h, tor, rate_bps, link_delay);
        t.label(format!("h{i}_down"), l, tor);
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct FatTreeSpec {
    pub cores: usize,
    pub aggs: usize,
    pub tors: usize,
    pub hosts: usize,
    pub rate_bps: u64,
    pub link_delay: SimTime,
    /// Added to each host access link.
    pub host_delay: SimTime,
}

impl FatTreeSpec {
    /// Three-tier shape with 4 us links and 1 us host delay.
    pub fn new(cores: usize, aggs: usize, tors: usize, hosts: usize, rate_bps: u64) -> Self {
        FatTreeSpec {
            cores,
            aggs,
            tors,
            hosts,
            rate_bps,
            link_delay: SimTime::from_micros(4),
            host_delay: SimTime::from_micros(1),
        }
    }

    /// Canonical k-ary fat-tree: k^3/4 hosts, (k/2)^2 cores.
    pub fn k_ary(k: usize, rate_bps: u64) -> Self {
        FatTreeSpec::new((k / 2) * (k / 2), k * k / 2, k * k / 2, k * k * k / 4, rate_bps)
    }
}

/// Derived wiring of a three-tier Clos.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FatTreeShape {
    pub pods: usize,
    pub aggs_per_pod: usize,
    pub tors_per_pod: usize,
    pub cores_per_group: usize,
    pub hosts_per_tor: usize,
    /// Parallel links per ToR-agg pair.
    pub tor_agg_links: usize,
    /// Parallel links per agg-core pair.
    pub agg_core_links: usize,
}

/// Pods follow from equal agg up/down radix: pods^2 = tors * aggs / cores.
/// ToR-agg and agg-core groups get enough parallel links to be non-blocking.
pub fn fat_tree_shape(spec: &FatTreeSpec) -> Result<FatTreeShape> {
    let bad = |why: &str| {
        Err(Error::config(format!(
            "inconsistent fat-tree radix (cores={}, aggs={}, tors={}, hosts={}): {why}",
            spec.cores, spec.aggs, spec.tors, spec.hosts
        )))
    };
    if spec.cores == 0 || spec.aggs == 0 || spec.tors == 0 || spec.hosts == 0 {
        return bad("all tiers must be non-empty");
    }
    let prod = spec.tors * spec.aggs;
    if !prod.is_multiple_of(spec.cores) {
        return bad("tors*aggs not divisible by cores");
    }
    let sq = prod / spec.cores;
    let pods = (sq as f64).sqrt().round() as usize;
    if pods * pods != sq {
        return bad("tors*aggs/cores is not a perfect square");
    }
    if !spec.aggs.is_multiple_of(pods) || !spec.tors.is_multiple_of(pods) {
        return bad("pods do not divide aggs and tors");
    }
    let aggs_per_pod = spec.aggs / pods;
    let tors_per_pod = spec.tors / pods;
    if !spec.cores.is_multiple_of(aggs_per_pod) {
        return bad("cores not divisible by aggs per pod");
    }
    if !spec.hosts.is_multiple_of(spec.tors) {
        return bad("hosts not divisible by tors");
    }
    let cores_per_group = spec.cores / aggs_per_pod;
    let hosts_per_tor = spec.hosts / spec.tors;
    let tor_agg_links = hosts_per_tor.div_ceil(aggs_per_pod);
    let agg_core_links = (tors_per_pod * tor_agg_links).div_ceil(cores_per_group);
    Ok(FatTreeShape {
        pods,
        aggs_per_pod,
        tors_per_pod,
        cores_per_group,
        hosts_per_tor,
        tor_agg_links,
        agg_core_links,
    })
}

pub fn fat_tree(spec: &FatTreeSpec) -> Result<Topology> {
    let shape = fat_tree_shape(spec)?;
    let rate = spec.rate_bps;
    let mut t = Topology::new(format!(
        "fat-tree-{}-{}-{}-{}",
        spec.cores, spec.aggs, spec.tors, spec.hosts
    ));
    let cores: Vec<_> = (0..spec.cores)
        .map(|i| t.add_node(format!("core{i}"), NodeKind::Switch))
        .collect();
    let mut host_idx = 0;
    for pod in 0..shape.pods {
        let aggs: Vec<_> = (0..shape.aggs_per_pod)
            .map(|j| t.add_node(format!("agg{pod}_{j}"), NodeKind::Switch))
            .collect();
        for (j, &agg) in aggs.iter().enumerate() {
            for c in 0..shape.cores_per_group {
                let core = cores[j * shape.cores_per_group + c];
                for _ in 0..shape.agg_core_links {
                    t.add_link(agg, core, rate, spec.link_delay);
                }
            }
        }
        for k in 0..shape.tors_per_pod {
            let tor = t.add_node(format!("tor{pod}_{k}"), NodeKind::Switch);
            for &agg in &aggs {
                for _ in 0..shape.tor_agg_links {
                    t.add_link(tor, agg, rate, spec.link_delay);
                }
            }
            for _ in 0..shape.hosts_per_tor {
                let h = t.add_node(format!("h{host_idx}"), NodeKind::Host);
                t.add_link(h, tor, rate, spec.link_delay + spec.host_delay);
                host_idx += 1;
            }
        }
    }
    Ok(t)
}

pub fn fat_tree_k(k: usize, rate_bps: u64) -> Result<Topology> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::config(format!("fat-tree k must be even and >= 2, got {k}")));
    }
    fat_tree(&FatTreeSpec::k_ary(k, rate_bps))
}
