//! Time-dependent road network: arcs carry periodic FIFO travel-time
//! profiles, searches return earliest-arrival paths.

mod file;
mod profile;
mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use file::{ArcRecord, LoadError, NetworkFile, NodeRecord, ProfileRecord};
pub use profile::{ProfileError, TravelTimeProfile, DAY_SECONDS};
pub use search::{Penalties, SearchTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ArcId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for ArcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown arc {0}")]
    UnknownArc(ArcId),
    #[error("no path from {origin} to {dest}")]
    Unreachable { origin: NodeId, dest: NodeId },
    #[error("arc {0} is not reversible")]
    NonReversibleArc(ArcId),
    #[error("penalty factor {factor} on arc {arc} is below 1")]
    InvalidPenalty { arc: ArcId, factor: f64 },
    #[error("arc {arc}: {reason}")]
    InvalidArc { arc: ArcId, reason: &'static str },
    #[error("{kind} ids must be dense 0..n; missing {missing}")]
    NonDenseIds { kind: &'static str, missing: u32 },
    #[error("arc {arc}: {source}")]
    Profile { arc: ArcId, source: ProfileError },
    #[error("arc {arc} does not continue the walk at node {at}")]
    BrokenWalk { arc: ArcId, at: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc<T> {
    pub id: ArcId,
    pub from: NodeId,
    pub to: NodeId,
    pub profile: TravelTimeProfile<T>,
    /// Meters.
    pub length: T,
    pub reversible: bool,
    pub blocked: bool,
}

/// Directed road graph with an outgoing-arc index. Immutable once built;
/// transformations return new networks.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDependentNetwork<T> {
    nodes: Vec<Node>,
    arcs: Vec<Arc<T>>,
    outgoing: Vec<Vec<ArcId>>,
}

/// Earliest-arrival walk through the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedPath<T> {
    pub departure: T,
    pub arcs: Vec<ArcId>,
    /// Visited nodes, origin first; one longer than `arcs`.
    pub nodes: Vec<NodeId>,
    /// Arrival time at each entry of `nodes`; the first entry is `departure`.
    pub node_arrivals: Vec<T>,
    pub arrival: T,
}

impl<T: Scalar> TimedPath<T> {
    pub fn empty(at: NodeId, departure: T) -> Self {
        Self {
            departure,
            arcs: Vec::new(),
            nodes: vec![at],
            node_arrivals: vec![departure],
            arrival: departure,
        }
    }

    pub fn travel_time(&self) -> T {
        self.arrival - self.departure
    }

    pub fn origin(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.nodes.last().expect("path has at least one node")
    }
}

impl<T: Scalar> TimeDependentNetwork<T> {
    /// Builds a network. Node and arc ids must be dense (`0..n`) in any order.
    pub fn new(mut nodes: Vec<Node>, mut arcs: Vec<Arc<T>>) -> Result<Self, NetError> {
        nodes.sort_by_key(|n| n.id);
        for (i, n) in nodes.iter().enumerate() {
            if n.id.index() != i {
                return Err(NetError::NonDenseIds {
                    kind: "node",
                    missing: i as u32,
                });
            }
        }
        arcs.sort_by_key(|a| a.id);
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, a) in arcs.iter().enumerate() {
            if a.id.index() != i {
                return Err(NetError::NonDenseIds {
                    kind: "arc",
                    missing: i as u32,
                });
            }
            if a.from.index() >= nodes.len() {
                return Err(NetError::UnknownNode(a.from));
            }
            if a.to.index() >= nodes.len() {
                return Err(NetError::UnknownNode(a.to));
            }
            if a.from == a.to {
                return Err(NetError::InvalidArc {
                    arc: a.id,
                    reason: "self loop",
                });
            }
            if !(a.length > T::zero()) {
                return Err(NetError::InvalidArc {
                    arc: a.id,
                    reason: "length must be positive",
                });
            }
            outgoing[a.from.index()].push(a.id);
        }
        Ok(Self {
            nodes,
            arcs,
            outgoing,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc<T>] {
        &self.arcs
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc(&self, id: ArcId) -> Result<&Arc<T>, NetError> {
        self.arcs.get(id.index()).ok_or(NetError::UnknownArc(id))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.nodes.len()
    }

    pub fn check_node(&self, node: NodeId) -> Result<(), NetError> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(NetError::UnknownNode(node))
        }
    }

    /// Outgoing arcs of `node` in ascending id order, including blocked ones.
    pub fn outgoing(&self, node: NodeId) -> &[ArcId] {
        &self.outgoing[node.index()]
    }

    /// Reverses every listed arc. All of them must be reversible.
    pub fn apply_contraflow(&self, arcs: &BTreeSet<ArcId>) -> Result<Self, NetError> {
        for &id in arcs {
            if !self.arc(id)?.reversible {
                return Err(NetError::NonReversibleArc(id));
            }
        }
        let mut reversed = self.arcs.clone();
        for &id in arcs {
            let a = &mut reversed[id.index()];
            std::mem::swap(&mut a.from, &mut a.to);
        }
        Self::new(self.nodes.clone(), reversed)
    }

    /// Blocks every arc entering the zone. Arcs leaving it stay usable.
    pub fn block_zone(&self, zone: &BTreeSet<NodeId>) -> Result<Self, NetError> {
        for &n in zone {
            self.check_node(n)?;
        }
        let mut arcs = self.arcs.clone();
        for a in arcs.iter_mut() {
            if zone.contains(&a.to) {
                a.blocked = true;
            }
        }
        Ok(Self {
            nodes: self.nodes.clone(),
            arcs,
            outgoing: self.outgoing.clone(),
        })
    }

    /// Times a given walk departing at `departure`, applying `penalties`.
    pub fn replay(
        &self,
        origin: NodeId,
        arcs: &[ArcId],
        departure: T,
        penalties: Option<&Penalties<T>>,
    ) -> Result<TimedPath<T>, NetError> {
        self.check_node(origin)?;
        let mut path = TimedPath::empty(origin, departure);
        let mut at = origin;
        let mut t = departure;
        for &id in arcs {
            let arc = self.arc(id)?;
            if arc.from != at {
                return Err(NetError::BrokenWalk { arc: id, at });
            }
            t = t + self.arc_cost(arc, t, penalties);
            at = arc.to;
            path.arcs.push(id);
            path.nodes.push(at);
            path.node_arrivals.push(t);
        }
        path.arrival = t;
        Ok(path)
    }

    pub(crate) fn arc_cost(&self, arc: &Arc<T>, t: T, penalties: Option<&Penalties<T>>) -> T {
        let tt = arc.profile.evaluate(t);
        match penalties.and_then(|p| p.factor(arc.id)) {
            Some(f) => tt * f,
            None => tt,
        }
    }
}

/// Incremental construction, mostly for tests and generated instances.
#[derive(Debug, Clone)]
pub struct NetworkBuilder<T> {
    nodes: Vec<Node>,
    arcs: Vec<Arc<T>>,
}

impl<T: Scalar> Default for NetworkBuilder<T> {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            arcs: Vec::new(),
        }
    }
}

impl<T: Scalar> NetworkBuilder<T> {
    pub fn with_nodes(n: usize) -> Self {
        let mut b = Self::default();
        for i in 0..n {
            b.node(i as f64, 0.0);
        }
        b
    }

    pub fn node(&mut self, x: f64, y: f64) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { id, x, y });
        id
    }

    pub fn arc(&mut self, from: u32, to: u32, profile: TravelTimeProfile<T>) -> ArcId {
        self.push(from, to, profile, false)
    }

    pub fn reversible_arc(&mut self, from: u32, to: u32, profile: TravelTimeProfile<T>) -> ArcId {
        self.push(from, to, profile, true)
    }

    /// Arc with a time-invariant travel time.
    pub fn constant_arc(&mut self, from: u32, to: u32, travel_time: T) -> ArcId {
        self.arc(from, to, TravelTimeProfile::constant(travel_time))
    }

    /// Pair of opposite constant arcs.
    pub fn road(&mut self, a: u32, b: u32, travel_time: T) -> (ArcId, ArcId) {
        (
            self.constant_arc(a, b, travel_time),
            self.constant_arc(b, a, travel_time),
        )
    }

    fn push(
        &mut self,
        from: u32,
        to: u32,
        profile: TravelTimeProfile<T>,
        reversible: bool,
    ) -> ArcId {
        let id = ArcId(self.arcs.len() as u32);
        let length = T::lit(100.0);
        self.arcs.push(Arc {
            id,
            from: NodeId(from),
            to: NodeId(to),
            profile,
            length,
            reversible,
            blocked: false,
        });
        id
    }

    pub fn build(self) -> Result<TimeDependentNetwork<T>, NetError> {
        TimeDependentNetwork::new(self.nodes, self.arcs)
    }
}

/// Ids of arcs keyed by endpoints, for tests that look arcs up by shape.
pub fn arc_index<T: Scalar>(
    net: &TimeDependentNetwork<T>,
) -> BTreeMap<(NodeId, NodeId), Vec<ArcId>> {
    let mut map: BTreeMap<(NodeId, NodeId), Vec<ArcId>> = BTreeMap::new();
    for a in net.arcs() {
        map.entry((a.from, a.to)).or_default().push(a.id);
    }
    map
}
