// SPDX-License-Identifier: Apache-2.0

//! Topology construction and shortest-path ECMP routing.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, TenantId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("fat-tree arity must be even and at least 2, got {0}")]
    OddFatTree(u32),
    #[error("dumbbell needs at least one sender and one receiver")]
    EmptyDumbbell,
    #[error("duplicate node name {0:?}")]
    DuplicateNode(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("link {index}: {reason}")]
    BadLink { index: usize, reason: String },
    #[error("no path from {0} to {1}")]
    Disconnected(String, String),
    #[error("explicit path {0:?} is not a chain of links from source to destination")]
    BadPath(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NodeKind {
    Host,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    /// Bits per second.
    pub capacity: f64,
    /// Seconds.
    #[serde(default = "default_delay")]
    pub delay: f64,
}

fn default_delay() -> f64 {
    5e-6
}

fn default_buffer() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum TopologySpec {
    /// `senders` hosts `h0..` on switch `s0`, `receivers` hosts `r0..` on
    /// switch `s1`, and the bottleneck `s0 -> s1`.
    #[serde(rename_all = "camelCase")]
    Dumbbell {
        senders: u32,
        #[serde(default = "one")]
        receivers: u32,
        capacity: f64,
        /// Host link capacity; defaults to the bottleneck capacity.
        #[serde(default)]
        access_capacity: Option<f64>,
        #[serde(default = "default_delay")]
        delay: f64,
        #[serde(default = "default_buffer")]
        buffer_bytes: u64,
    },
    /// Standard k-ary fat-tree: hosts `h0..`, edge `e<pod>_<i>`, aggregation
    /// `a<pod>_<i>`, core `c<i>`.
    #[serde(rename_all = "camelCase")]
    FatTree {
        k: u32,
        capacity: f64,
        #[serde(default = "default_delay")]
        delay: f64,
        #[serde(default = "default_buffer")]
        buffer_bytes: u64,
    },
    #[serde(rename_all = "camelCase")]
    Explicit {
        nodes: Vec<NodeSpec>,
        links: Vec<LinkSpec>,
        #[serde(default = "default_buffer")]
        buffer_bytes: u64,
    },
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub capacity: f64,
    pub delay: f64,
}

#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    links: Vec<Link>,
    by_name: BTreeMap<String, NodeId>,
    /// Per node: (neighbour, link index), in link order.
    adjacency: Vec<Vec<(NodeId, usize)>>,
    pub buffer_bytes: u64,
}

impl Topology {
    pub fn build(spec: &TopologySpec) -> Result<Topology, TopologyError> {
        let (nodes, links, buffer) = match spec {
            TopologySpec::Dumbbell {
                senders,
                receivers,
                capacity,
                access_capacity,
                delay,
                buffer_bytes,
            } => {
                if *senders == 0 || *receivers == 0 {
                    return Err(TopologyError::EmptyDumbbell);
                }
                let access = access_capacity.unwrap_or(*capacity);
                let mut nodes = vec![switch("s0"), switch("s1")];
                let mut links = vec![link("s0", "s1", *capacity, *delay)];
                for i in 0..*senders {
                    let h = format!("h{i}");
                    nodes.push(host(&h));
                    links.push(link(&h, "s0", access, *delay));
                }
                for i in 0..*receivers {
                    let r = format!("r{i}");
                    nodes.push(host(&r));
                    links.push(link("s1", &r, access, *delay));
                }
                (nodes, links, *buffer_bytes)
            }
            TopologySpec::FatTree {
                k,
                capacity,
                delay,
                buffer_bytes,
            } => {
                let (nodes, links) = fat_tree(*k, *capacity, *delay)?;
                (nodes, links, *buffer_bytes)
            }
            TopologySpec::Explicit {
                nodes,
                links,
                buffer_bytes,
            } => (nodes.clone(), links.clone(), *buffer_bytes),
        };
        Self::from_parts(nodes, links, buffer)
    }

    fn from_parts(
        nodes: Vec<NodeSpec>,
        links: Vec<LinkSpec>,
        buffer_bytes: u64,
    ) -> Result<Topology, TopologyError> {
        let mut by_name = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if by_name.insert(n.name.clone(), NodeId(i as u32)).is_some() {
                return Err(TopologyError::DuplicateNode(n.name.clone()));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut built = Vec::with_capacity(links.len());
        for (index, l) in links.iter().enumerate() {
            let a = *by_name
                .get(&l.a)
                .ok_or_else(|| TopologyError::UnknownNode(l.a.clone()))?;
            let b = *by_name
                .get(&l.b)
                .ok_or_else(|| TopologyError::UnknownNode(l.b.clone()))?;
            if a == b {
                return Err(TopologyError::BadLink {
                    index,
                    reason: "self loop".into(),
                });
            }
            if !(l.capacity > 0.0) || !l.capacity.is_finite() {
                return Err(TopologyError::BadLink {
                    index,
                    reason: format!("capacity {} must be positive", l.capacity),
                });
            }
            if !(l.delay >= 0.0) || !l.delay.is_finite() {
                return Err(TopologyError::BadLink {
                    index,
                    reason: format!("delay {} must be non-negative", l.delay),
                });
            }
            adjacency[a.0 as usize].push((b, index));
            adjacency[b.0 as usize].push((a, index));
            built.push(Link {
                a,
                b,
                capacity: l.capacity,
                delay: l.delay,
            });
        }
        let topo = Topology {
            nodes,
            links: built,
            by_name,
            adjacency,
            buffer_bytes,
        };
        topo.check_connected()?;
        Ok(topo)
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let hosts = self.hosts();
        let Some(&first) = hosts.first() else {
            return Ok(());
        };
        let dist = self.distances_to(first);
        for &h in &hosts {
            if dist[h.0 as usize].is_none() {
                return Err(TopologyError::Disconnected(
                    self.name(first).to_string(),
                    self.name(h).to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, name: &str) -> Result<NodeId, TopologyError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| TopologyError::UnknownNode(name.to_string()))
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0 as usize].name
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.0 as usize].kind
    }

    pub fn hosts(&self) -> Vec<NodeId> {
        (0..self.nodes.len() as u32)
            .map(NodeId)
            .filter(|&n| self.kind(n) == NodeKind::Host)
            .collect()
    }

    pub fn switches(&self) -> Vec<NodeId> {
        (0..self.nodes.len() as u32)
            .map(NodeId)
            .filter(|&n| self.kind(n) == NodeKind::Switch)
            .collect()
    }

    /// Link joining two adjacent nodes, lowest index first.
    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.adjacency[a.0 as usize]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|&(_, l)| l)
    }

    /// Hop distances to `dst`. Hosts other than `dst` are never transit nodes.
    fn distances_to(&self, dst: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.nodes.len()];
        dist[dst.0 as usize] = Some(0);
        let mut queue = VecDeque::from([dst]);
        while let Some(n) = queue.pop_front() {
            let d = dist[n.0 as usize].unwrap();
            if n != dst && self.kind(n) == NodeKind::Host {
                continue;
            }
            for &(m, _) in &self.adjacency[n.0 as usize] {
                if dist[m.0 as usize].is_none() {
                    dist[m.0 as usize] = Some(d + 1);
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    /// Shortest path from `src` to `dst`. Among equal-cost next hops each node
    /// picks one by hashing the flow identity with the scenario seed.
    pub fn ecmp_path(
        &self,
        src: NodeId,
        dst: NodeId,
        tenant: TenantId,
        salt: u64,
        seed: u64,
    ) -> Result<Vec<NodeId>, TopologyError> {
        let dist = self.distances_to(dst);
        let disconnected =
            || TopologyError::Disconnected(self.name(src).to_string(), self.name(dst).to_string());
        let mut d = dist[src.0 as usize].ok_or_else(disconnected)?;
        let mut path = vec![src];
        let mut at = src;
        while at != dst {
            let mut choices: Vec<NodeId> = self.adjacency[at.0 as usize]
                .iter()
                .map(|&(m, _)| m)
                .filter(|m| dist[m.0 as usize] == Some(d - 1))
                .filter(|&m| m == dst || self.kind(m) == NodeKind::Switch)
                .collect();
            choices.sort();
            choices.dedup();
            if choices.is_empty() {
                return Err(disconnected());
            }
            let h = ecmp_hash(&[seed, tenant.0 as u64, src.0 as u64, dst.0 as u64, salt, at.0 as u64]);
            at = choices[(h % choices.len() as u64) as usize];
            path.push(at);
            d -= 1;
        }
        Ok(path)
    }

    /// Validates an explicit node path.
    pub fn named_path(&self, names: &[String], src: NodeId, dst: NodeId) -> Result<Vec<NodeId>, TopologyError> {
        let bad = || TopologyError::BadPath(names.to_vec());
        let path = names
            .iter()
            .map(|n| self.node(n))
            .collect::<Result<Vec<_>, _>>()?;
        if path.first() != Some(&src) || path.last() != Some(&dst) {
            return Err(bad());
        }
        for pair in path.windows(2) {
            if self.link_between(pair[0], pair[1]).is_none() {
                return Err(bad());
            }
        }
        Ok(path)
    }
}

fn host(name: &str) -> NodeSpec {
    NodeSpec {
        name: name.to_string(),
        kind: NodeKind::Host,
    }
}

fn switch(name: &str) -> NodeSpec {
    NodeSpec {
        name: name.to_string(),
        kind: NodeKind::Switch,
    }
}

fn link(a: &str, b: &str, capacity: f64, delay: f64) -> LinkSpec {
    LinkSpec {
        a: a.to_string(),
        b: b.to_string(),
        capacity,
        delay,
    }
}

fn fat_tree(k: u32, capacity: f64, delay: f64) -> Result<(Vec<NodeSpec>, Vec<LinkSpec>), TopologyError> {
    if k < 2 || k % 2 != 0 {
        return Err(TopologyError::OddFatTree(k));
    }
    let half = k / 2;
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for c in 0..half * half {
        nodes.push(switch(&format!("c{c}")));
    }
    let mut host_index = 0;
    for pod in 0..k {
        for i in 0..half {
            nodes.push(switch(&format!("a{pod}_{i}")));
            nodes.push(switch(&format!("e{pod}_{i}")));
        }
        for e in 0..half {
            let edge = format!("e{pod}_{e}");
            for _ in 0..half {
                let h = format!("h{host_index}");
                host_index += 1;
                nodes.push(host(&h));
                links.push(link(&h, &edge, capacity, delay));
            }
            for a in 0..half {
                links.push(link(&edge, &format!("a{pod}_{a}"), capacity, delay));
            }
        }
        for a in 0..half {
            for j in 0..half {
                links.push(link(&format!("a{pod}_{a}"), &format!("c{}", a * half + j), capacity, delay));
            }
        }
    }
    Ok((nodes, links))
}

/// splitmix64 folded over the words.
pub fn ecmp_hash(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}
