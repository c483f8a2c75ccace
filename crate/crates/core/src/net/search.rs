use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::{ArcId, NetError, NodeId, TimeDependentNetwork, TimedPath};
use crate::scalar::Scalar;

/// Multiplicative travel-time penalties (factor >= 1) on selected arcs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Penalties<T> {
    factors: BTreeMap<ArcId, T>,
}

impl<T: Scalar> Penalties<T> {
    pub fn new() -> Self {
        Self {
            factors: BTreeMap::new(),
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (ArcId, T)>) -> Result<Self, NetError> {
        let mut p = Self::new();
        for (arc, factor) in pairs {
            p.insert(arc, factor)?;
        }
        Ok(p)
    }

    pub fn insert(&mut self, arc: ArcId, factor: T) -> Result<(), NetError> {
        if !(factor >= T::one()) || !factor.is_finite_value() {
            return Err(NetError::InvalidPenalty {
                arc,
                factor: factor.as_f64(),
            });
        }
        self.factors.insert(arc, factor);
        Ok(())
    }

    pub fn factor(&self, arc: ArcId) -> Option<T> {
        self.factors.get(&arc).copied()
    }

    pub fn contains(&self, arc: ArcId) -> bool {
        self.factors.contains_key(&arc)
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ArcId, T)> + '_ {
        self.factors.iter().map(|(&a, &f)| (a, f))
    }
}

#[derive(Debug, Clone, Copy)]
struct Label<T> {
    arrival: T,
    hops: u32,
    pred: Option<ArcId>,
}

struct QueueEntry<T> {
    arrival: T,
    hops: u32,
    node: NodeId,
}

impl<T: Scalar> QueueEntry<T> {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.arrival
            .total_cmp(&other.arrival)
            .then(self.hops.cmp(&other.hops))
            .then(self.node.cmp(&other.node))
    }
}

impl<T: Scalar> PartialEq for QueueEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for QueueEntry<T> {}

impl<T: Scalar> PartialOrd for QueueEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for QueueEntry<T> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Earliest-arrival labels from one origin at one departure time.
#[derive(Debug, Clone)]
pub struct SearchTree<T> {
    origin: NodeId,
    departure: T,
    labels: Vec<Option<Label<T>>>,
}

impl<T: Scalar> SearchTree<T> {
    pub fn origin(&self) -> NodeId {
        self.origin
    }

    pub fn departure(&self) -> T {
        self.departure
    }

    pub fn arrival(&self, node: NodeId) -> Option<T> {
        self.labels.get(node.index())?.map(|l| l.arrival)
    }

    pub fn reachable(&self, node: NodeId) -> bool {
        self.arrival(node).is_some()
    }

    fn arc_sequence(&self, net: &TimeDependentNetwork<T>, node: NodeId) -> Vec<ArcId> {
        let mut arcs = Vec::new();
        let mut at = node;
        while let Some(Label {
            pred: Some(arc), ..
        }) = self.labels[at.index()]
        {
            arcs.push(arc);
            at = net.arcs[arc.index()].from;
        }
        arcs.reverse();
        arcs
    }

    /// Path to `dest`, timed exactly as the search relaxed it.
    pub fn path_to(&self, net: &TimeDependentNetwork<T>, dest: NodeId) -> Option<TimedPath<T>> {
        self.labels.get(dest.index())?.as_ref()?;
        let arcs = self.arc_sequence(net, dest);
        let mut path = TimedPath::empty(self.origin, self.departure);
        for &arc in &arcs {
            let to = net.arcs[arc.index()].to;
            path.arcs.push(arc);
            path.nodes.push(to);
            path.node_arrivals
                .push(self.labels[to.index()].expect("label on tree path").arrival);
        }
        path.arrival = *path.node_arrivals.last().expect("non-empty");
        Some(path)
    }
}

impl<T: Scalar> TimeDependentNetwork<T> {
    /// Label-setting earliest-arrival search from `origin`. Labels compare by
    /// arrival, then hop count, then arc-id sequence. Waiting at nodes is not
    /// modelled. Blocked arcs are skipped.
    pub fn earliest_arrivals(
        &self,
        origin: NodeId,
        departure: T,
        penalties: Option<&Penalties<T>>,
        target: Option<NodeId>,
    ) -> Result<SearchTree<T>, NetError> {
        self.check_node(origin)?;
        let n = self.nodes.len();
        let mut tree = SearchTree {
            origin,
            departure,
            labels: vec![None; n],
        };
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        tree.labels[origin.index()] = Some(Label {
            arrival: departure,
            hops: 0,
            pred: None,
        });
        heap.push(QueueEntry {
            arrival: departure,
            hops: 0,
            node: origin,
        });

        while let Some(QueueEntry {
            arrival,
            hops,
            node,
        }) = heap.pop()
        {
            if settled[node.index()] {
                continue;
            }
            let label = tree.labels[node.index()].expect("queued node has a label");
            if label.arrival.total_cmp(&arrival) != Ordering::Equal || label.hops != hops {
                continue;
            }
            settled[node.index()] = true;
            if Some(node) == target {
                break;
            }
            for &arc_id in self.outgoing(node) {
                let arc = &self.arcs[arc_id.index()];
                if arc.blocked || settled[arc.to.index()] {
                    continue;
                }
                let cand = Label {
                    arrival: arrival + self.arc_cost(arc, arrival, penalties),
                    hops: hops + 1,
                    pred: Some(arc_id),
                };
                let better = match tree.labels[arc.to.index()] {
                    None => true,
                    Some(cur) => match cand
                        .arrival
                        .total_cmp(&cur.arrival)
                        .then(cand.hops.cmp(&cur.hops))
                    {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => {
                            let mut seq = tree.arc_sequence(self, node);
                            seq.push(arc_id);
                            seq < tree.arc_sequence(self, arc.to)
                        }
                    },
                };
                if better {
                    tree.labels[arc.to.index()] = Some(cand);
                    heap.push(QueueEntry {
                        arrival: cand.arrival,
                        hops: cand.hops,
                        node: arc.to,
                    });
                }
            }
        }
        Ok(tree)
    }

    /// Earliest-arrival path from `origin` to `dest` leaving at `departure`.
    pub fn shortest_time_path(
        &self,
        origin: NodeId,
        dest: NodeId,
        departure: T,
    ) -> Result<TimedPath<T>, NetError> {
        self.query(origin, dest, departure, None)
    }

    /// Same as [`shortest_time_path`](Self::shortest_time_path) with each
    /// penalized arc's travel time multiplied by its factor.
    pub fn reroute_query(
        &self,
        origin: NodeId,
        dest: NodeId,
        departure: T,
        penalties: &Penalties<T>,
    ) -> Result<TimedPath<T>, NetError> {
        self.query(origin, dest, departure, Some(penalties))
    }

    fn query(
        &self,
        origin: NodeId,
        dest: NodeId,
        departure: T,
        penalties: Option<&Penalties<T>>,
    ) -> Result<TimedPath<T>, NetError> {
        self.check_node(dest)?;
        let tree = self.earliest_arrivals(origin, departure, penalties, Some(dest))?;
        tree.path_to(self, dest)
            .ok_or(NetError::Unreachable { origin, dest })
    }
}
