//! Memoized one-to-all searches over a fixed network.
//!
//! Solvers ask for the same `(origin, departure)` pair many times while they
//! enumerate or evolve schedules. Results are exactly those of
//! [`TimeDependentNetwork::shortest_time_path`]: a settled label does not
//! depend on whether the search stopped at a target.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::net::{NetError, NodeId, Penalties, SearchTree, TimeDependentNetwork, TimedPath};
use crate::scalar::Scalar;

const MAX_CACHED_TREES: usize = 100_000;

type TreeCache<T> = HashMap<(NodeId, u128), Arc<SearchTree<T>>>;

pub struct TravelTimes<'a, T> {
    net: &'a TimeDependentNetwork<T>,
    penalties: Option<&'a Penalties<T>>,
    cache: Mutex<TreeCache<T>>,
}

impl<'a, T: Scalar> TravelTimes<'a, T> {
    pub fn new(net: &'a TimeDependentNetwork<T>) -> Self {
        Self {
            net,
            penalties: None,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_penalties(net: &'a TimeDependentNetwork<T>, penalties: &'a Penalties<T>) -> Self {
        Self {
            net,
            penalties: Some(penalties),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn network(&self) -> &'a TimeDependentNetwork<T> {
        self.net
    }

    fn tree(&self, origin: NodeId, departure: T) -> Arc<SearchTree<T>> {
        let key = (origin, departure.hash_key());
        if let Some(t) = self.cache.lock().expect("cache lock").get(&key) {
            return Arc::clone(t);
        }
        let tree = Arc::new(
            self.net
                .earliest_arrivals(origin, departure, self.penalties, None)
                .expect("origin validated by caller"),
        );
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= MAX_CACHED_TREES {
            cache.clear();
        }
        cache.insert(key, Arc::clone(&tree));
        tree
    }

    /// Earliest arrival at `to` leaving `from` at `departure`; `None` if
    /// unreachable.
    pub fn arrival(&self, from: NodeId, to: NodeId, departure: T) -> Option<T> {
        if from == to {
            return Some(departure);
        }
        self.tree(from, departure).arrival(to)
    }

    pub fn path(&self, from: NodeId, to: NodeId, departure: T) -> Result<TimedPath<T>, NetError> {
        self.net.check_node(from)?;
        self.net.check_node(to)?;
        if from == to {
            return Ok(TimedPath::empty(from, departure));
        }
        self.tree(from, departure)
            .path_to(self.net, to)
            .ok_or(NetError::Unreachable {
                origin: from,
                dest: to,
            })
    }

    /// Whether `to` is reachable from `from` at all. Blocking is static, so
    /// reachability does not depend on the departure time.
    pub fn connected(&self, from: NodeId, to: NodeId) -> bool {
        self.arrival(from, to, T::zero()).is_some()
    }
}
