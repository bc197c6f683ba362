//! Links, ports and forwarding.
//!
//! Every link is full duplex. Link `l` owns two egress ports: `2l` leaves
//! endpoint `a` towards `b`, `2l + 1` leaves `b` towards `a`. Each port carries a
//! byte-capacity data FIFO and a packet-count drop-tail credit queue behind a
//! credit shaper, so both traffic classes share the same wire.

mod ecmp;
mod packet;
mod port;

pub use ecmp::{pair_salt, symmetric_ecmp_select, symmetric_hash, FlowTuple};
pub use packet::*;
pub use port::{
    ecn_mark, CreditEnqueue, CreditShaper, DataEnqueue, Port, PortCounters, PortParams, TxDecision,
};

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::topology::Topology;

pub type NodeId = u32;
pub type PortId = u32;

pub fn port_of(link: LinkId, from_a: bool) -> PortId {
    2 * link + if from_a { 0 } else { 1 }
}

pub fn link_of(port: PortId) -> LinkId {
    port / 2
}

/// The opposite direction of the same link.
pub fn reverse_port(port: PortId) -> PortId {
    port ^ 1
}

/// Egress ports for both directions of a flow. `data[i]` and
/// `credit[len-1-i]` are the two directions of the same link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    /// Sender to receiver.
    pub data: Vec<PortId>,
    /// Receiver to sender.
    pub credit: Vec<PortId>,
}

impl Route {
    pub fn data_links(&self) -> Vec<LinkId> {
        self.data.iter().map(|&p| link_of(p)).collect()
    }
    pub fn credit_links(&self) -> Vec<LinkId> {
        self.credit.iter().map(|&p| link_of(p)).collect()
    }
    pub fn is_symmetric(&self) -> bool {
        let mut c = self.credit_links();
        c.reverse();
        c == self.data_links()
            && self
                .data
                .iter()
                .zip(self.credit.iter().rev())
                .all(|(&d, &c)| reverse_port(d) == c)
    }
    pub fn hops(&self) -> usize {
        self.data.len()
    }
}

/// Hop distances towards `target`, forwarding only through switches.
fn distances_to(topo: &Topology, target: NodeId) -> Vec<Option<u32>> {
    let mut dist = vec![None; topo.nodes.len()];
    dist[target as usize] = Some(0);
    let mut q = VecDeque::from([target]);
    while let Some(u) = q.pop_front() {
        let du = dist[u as usize].expect("visited");
        if u != target && !topo.nodes[u as usize].kind.is_switch() {
            continue;
        }
        for adj in topo.adjacency(u) {
            if dist[adj.peer as usize].is_none() {
                dist[adj.peer as usize] = Some(du + 1);
                q.push_back(adj.peer);
            }
        }
    }
    dist
}

/// Routes a flow. The credit path is chosen hop by hop from the receiver with
/// symmetric ECMP; the data path is its exact reverse, so path symmetry holds by
/// construction.
pub fn route_flow(topo: &Topology, tuple: &FlowTuple) -> Result<Route> {
    let n = topo.nodes.len() as u32;
    if tuple.src >= n || tuple.dst >= n {
        return Err(Error::Routing(format!(
            "flow endpoints {}->{} outside topology of {n} nodes",
            tuple.src, tuple.dst
        )));
    }
    if tuple.src == tuple.dst {
        return Err(Error::Routing(format!("flow from node {} to itself", tuple.src)));
    }
    let dist = distances_to(topo, tuple.src);
    let Some(mut remaining) = dist[tuple.dst as usize] else {
        return Err(Error::Routing(format!(
            "no path between {} and {}",
            topo.nodes[tuple.src as usize].name, topo.nodes[tuple.dst as usize].name
        )));
    };
    let mut credit = Vec::with_capacity(remaining as usize);
    let mut at = tuple.dst;
    while at != tuple.src {
        let mut next_hops: Vec<NodeId> = topo
            .adjacency(at)
            .iter()
            .filter(|a| dist[a.peer as usize] == Some(remaining - 1))
            .filter(|a| a.peer == tuple.src || topo.nodes[a.peer as usize].kind.is_switch())
            .map(|a| a.peer)
            .collect();
        next_hops.sort_unstable();
        next_hops.dedup();
        let pick = symmetric_ecmp_select(tuple, next_hops.len(), at as u64)?;
        let next = next_hops[pick];
        let mut group: Vec<(LinkId, PortId)> = topo
            .adjacency(at)
            .iter()
            .filter(|a| a.peer == next)
            .map(|a| (a.link, a.egress))
            .collect();
        group.sort_unstable();
        let member = symmetric_ecmp_select(tuple, group.len(), pair_salt(at, next))?;
        credit.push(group[member].1);
        at = next;
        remaining -= 1;
    }
    let data = credit.iter().rev().map(|&p| reverse_port(p)).collect();
    Ok(Route { data, credit })
}

/// All ports of a built topology.
#[derive(Debug, Clone)]
pub struct Network {
    pub ports: Vec<Port>,
}

impl Network {
    pub fn build(topo: &Topology, mut params: impl FnMut(PortId) -> PortParams) -> Network {
        let mut ports = Vec::with_capacity(topo.links.len() * 2);
        for (l, link) in topo.links.iter().enumerate() {
            let l = l as LinkId;
            for (from_a, node, peer) in [(true, link.a, link.b), (false, link.b, link.a)] {
                let id = port_of(l, from_a);
                ports.push(Port::new(id, node, peer, l, link.rate_bps, link.delay, params(id)));
            }
        }
        Network { ports }
    }

    pub fn port(&self, id: PortId) -> &Port {
        &self.ports[id as usize]
    }
    pub fn port_mut(&mut self, id: PortId) -> &mut Port {
        &mut self.ports[id as usize]
    }
}
