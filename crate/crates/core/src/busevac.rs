//! Emergency bus pickup and delivery: buses leave their depots, collect
//! evacuees at pickup points under a per-visit boarding cap, and unload them
//! at shelters, all before a deadline.
//!
//! A plan is a site sequence per bus. Its outcome is fixed by simulating all
//! visits in `(arrival, bus, visit index)` order: a pickup visit boards
//! `min(remaining demand, boarding cap, free seats)` and dwells
//! `dwell + per_evacuee * boarded`; a shelter visit unloads
//! `min(onboard, remaining capacity)` instantly. Every visit must move at
//! least one evacuee and every bus must finish empty.
//!
//! The objective is lexicographic: most evacuees sheltered, then the
//! earliest completion (last shelter arrival, or `t0` when nobody moves).

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evo::{evolve, EvoConfig, EvoError, EvoRng, Problem, SolveInfo, SolverMode};
use crate::net::{NetError, NodeId, TimeDependentNetwork, TimedPath};
use crate::scalar::Scalar;
use crate::travel::TravelTimes;

pub const EXACT_MAX_BUSES: usize = 2;
pub const EXACT_MAX_PICKUPS: usize = 3;
pub const EXACT_MAX_SHELTERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PickupId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShelterId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DepotId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickupPoint {
    pub id: PickupId,
    pub location: NodeId,
    pub demand: u32,
    pub boarding_cap: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shelter {
    pub id: ShelterId,
    pub location: NodeId,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusDepot {
    pub id: DepotId,
    pub location: NodeId,
    pub fleet: u32,
    pub bus_capacity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boarding<T> {
    pub per_evacuee: T,
    pub dwell: T,
}

impl<T: Scalar> Default for Boarding<T> {
    fn default() -> Self {
        Self {
            per_evacuee: T::lit(2.0),
            dwell: T::lit(30.0),
        }
    }
}

impl<T: Scalar> Boarding<T> {
    pub fn duration(&self, boarded: u32) -> T {
        self.dwell + self.per_evacuee * T::from_u32(boarded).expect("count fits")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EbpdInstance<T> {
    pub depots: Vec<BusDepot>,
    pub pickups: Vec<PickupPoint>,
    pub shelters: Vec<Shelter>,
    pub deadline: T,
    pub t0: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum SiteRef {
    Pickup(PickupId),
    Shelter(ShelterId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit<T> {
    pub site: SiteRef,
    pub location: NodeId,
    pub arrival: T,
    pub depart: T,
    pub boarded: u32,
    pub alighted: u32,
    /// Evacuees on board after the visit.
    pub onboard: u32,
    pub leg: TimedPath<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRoute<T> {
    pub bus: BusId,
    pub depot: DepotId,
    pub capacity: u32,
    pub start: NodeId,
    pub start_time: T,
    pub visits: Vec<Visit<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacPlan<T> {
    pub t0: T,
    pub deadline: T,
    pub routes: Vec<BusRoute<T>>,
    /// Pickups with evacuees left behind.
    pub unserved: BTreeMap<PickupId, u32>,
    /// Sites no bus can serve.
    pub excluded: Vec<SiteRef>,
    pub total_evacuated: u32,
    pub completion_time: T,
}

impl<T: Scalar> EvacPlan<T> {
    pub fn objective(&self) -> (u32, T) {
        (self.total_evacuated, self.completion_time)
    }
}

/// `true` when `a` is strictly better than `b` on (more evacuated, earlier).
pub fn better_objective<T: Scalar>(a: (u32, T), b: (u32, T)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[derive(Debug, Clone)]
pub struct EbpdOptions<T> {
    pub mode: SolverMode,
    pub evo: EvoConfig,
    pub boarding: Boarding<T>,
}

impl<T: Scalar> Default for EbpdOptions<T> {
    fn default() -> Self {
        Self {
            mode: SolverMode::default(),
            evo: EvoConfig::default(),
            boarding: Boarding::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EbpdError {
    #[error("no buses in any depot")]
    NoFleet,
    #[error("deadline must be after the start time")]
    InvalidDeadline,
    #[error("invalid {0}")]
    Invalid(String),
    #[error("unknown pickup {0:?}")]
    UnknownPickup(PickupId),
    #[error("passengers on board cannot reach any shelter with room before the deadline")]
    Stranded,
    #[error("instance with {buses} buses, {pickups} pickups and {shelters} shelters exceeds exact bounds")]
    TooLarge {
        buses: usize,
        pickups: usize,
        shelters: usize,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Evo(#[from] EvoError),
}

impl<T: Scalar> EbpdInstance<T> {
    pub fn bus_count(&self) -> usize {
        self.depots.iter().map(|d| d.fleet as usize).sum()
    }

    pub fn within_exact_bounds(&self) -> bool {
        self.bus_count() <= EXACT_MAX_BUSES
            && self.pickups.len() <= EXACT_MAX_PICKUPS
            && self.shelters.len() <= EXACT_MAX_SHELTERS
    }

    pub fn total_demand(&self) -> u64 {
        self.pickups.iter().map(|p| p.demand as u64).sum()
    }

    pub fn validate(&self, net: &TimeDependentNetwork<T>) -> Result<(), EbpdError> {
        if !(self.deadline > self.t0) {
            return Err(EbpdError::InvalidDeadline);
        }
        let mut ids = BTreeSet::new();
        for d in &self.depots {
            net.check_node(d.location)?;
            if !ids.insert(("depot", d.id.0)) {
                return Err(EbpdError::Invalid(format!("duplicate depot {}", d.id.0)));
            }
            if d.fleet > 0 && d.bus_capacity == 0 {
                return Err(EbpdError::Invalid(format!(
                    "depot {} bus capacity 0",
                    d.id.0
                )));
            }
        }
        for p in &self.pickups {
            net.check_node(p.location)?;
            if !ids.insert(("pickup", p.id.0)) {
                return Err(EbpdError::Invalid(format!("duplicate pickup {}", p.id.0)));
            }
            if p.boarding_cap == 0 {
                return Err(EbpdError::Invalid(format!(
                    "pickup {} boarding cap 0",
                    p.id.0
                )));
            }
        }
        for s in &self.shelters {
            net.check_node(s.location)?;
            if !ids.insert(("shelter", s.id.0)) {
                return Err(EbpdError::Invalid(format!("duplicate shelter {}", s.id.0)));
            }
        }
        if self.bus_count() == 0 {
            return Err(EbpdError::NoFleet);
        }
        Ok(())
    }
}

/// Where a bus stands when planning starts: at its depot at `t0`, or
/// mid-route when re-planning.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BusStart<T> {
    bus: BusId,
    depot: DepotId,
    capacity: u32,
    at: NodeId,
    ready: T,
    onboard: u32,
    /// Shelter the previous plan was taking the passengers on board to.
    unload_hint: Option<ShelterId>,
}

/// A planning problem over indexed sites: pickups are `0..P`, shelters
/// `P..P+S`, both in id order.
pub(crate) struct Ctx<'a, T> {
    tt: TravelTimes<'a, T>,
    pickups: Vec<PickupPoint>,
    shelters: Vec<Shelter>,
    starts: Vec<BusStart<T>>,
    demand: Vec<u32>,
    room: Vec<u32>,
    usable: Vec<bool>,
    deadline: T,
    t0: T,
    boarding: Boarding<T>,
}

/// Outcome of one simulated visit.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Step<T> {
    site: usize,
    arrival: T,
    depart: T,
    boarded: u32,
    alighted: u32,
    onboard: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SimFailure {
    Unreachable,
    Deadline,
    NoTransfer,
    NotEmpty,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    fn new(
        net: &'a TimeDependentNetwork<T>,
        inst: &EbpdInstance<T>,
        starts: Vec<BusStart<T>>,
        demand: Vec<u32>,
        room: Vec<u32>,
        boarding: Boarding<T>,
    ) -> Self {
        let mut pickups = inst.pickups.clone();
        pickups.sort_by_key(|p| p.id);
        let mut shelters = inst.shelters.clone();
        shelters.sort_by_key(|s| s.id);
        let tt = TravelTimes::new(net);
        let n = pickups.len() + shelters.len();
        let mut ctx = Self {
            tt,
            pickups,
            shelters,
            starts,
            demand,
            room,
            usable: vec![true; n],
            deadline: inst.deadline,
            t0: inst.t0,
            boarding,
        };
        ctx.mark_usable();
        ctx
    }

    fn from_instance(
        net: &'a TimeDependentNetwork<T>,
        inst: &EbpdInstance<T>,
        boarding: Boarding<T>,
    ) -> Self {
        let mut depots = inst.depots.clone();
        depots.sort_by_key(|d| d.id);
        let mut starts = Vec::new();
        for d in &depots {
            for _ in 0..d.fleet {
                starts.push(BusStart {
                    bus: BusId(starts.len() as u32),
                    depot: d.id,
                    capacity: d.bus_capacity,
                    at: d.location,
                    ready: inst.t0,
                    onboard: 0,
                    unload_hint: None,
                });
            }
        }
        let mut pickups = inst.pickups.clone();
        pickups.sort_by_key(|p| p.id);
        let mut shelters = inst.shelters.clone();
        shelters.sort_by_key(|s| s.id);
        let demand = pickups.iter().map(|p| p.demand).collect();
        let room = shelters.iter().map(|s| s.capacity).collect();
        Self::new(net, inst, starts, demand, room, boarding)
    }

    fn n_pickups(&self) -> usize {
        self.pickups.len()
    }

    fn n_sites(&self) -> usize {
        self.pickups.len() + self.shelters.len()
    }

    fn is_pickup(&self, site: usize) -> bool {
        site < self.pickups.len()
    }

    fn node(&self, site: usize) -> NodeId {
        if self.is_pickup(site) {
            self.pickups[site].location
        } else {
            self.shelters[site - self.pickups.len()].location
        }
    }

    fn site_ref(&self, site: usize) -> SiteRef {
        if self.is_pickup(site) {
            SiteRef::Pickup(self.pickups[site].id)
        } else {
            SiteRef::Shelter(self.shelters[site - self.pickups.len()].id)
        }
    }

    /// A pickup is usable when some bus reaches it and it reaches some
    /// shelter; a shelter when some bus or usable pickup reaches it.
    fn mark_usable(&mut self) {
        let p = self.n_pickups();
        let shelter_nodes: Vec<NodeId> = self.shelters.iter().map(|s| s.location).collect();
        for i in 0..p {
            let at = self.pickups[i].location;
            let from_bus = self.starts.iter().any(|b| self.tt.connected(b.at, at));
            let to_shelter = shelter_nodes.iter().any(|&s| self.tt.connected(at, s));
            self.usable[i] = from_bus && to_shelter;
        }
        for j in 0..self.shelters.len() {
            let at = self.shelters[j].location;
            let from_bus = self
                .starts
                .iter()
                .any(|b| b.onboard > 0 && self.tt.connected(b.at, at));
            let from_pickup =
                (0..p).any(|i| self.usable[i] && self.tt.connected(self.pickups[i].location, at));
            self.usable[p + j] = from_bus || from_pickup;
        }
    }

    fn excluded(&self) -> Vec<SiteRef> {
        (0..self.n_sites())
            .filter(|&s| !self.usable[s])
            .map(|s| self.site_ref(s))
            .collect()
    }

    fn arrival(&self, from: NodeId, site: usize, t: T) -> Option<T> {
        self.tt.arrival(from, self.node(site), t)
    }

    /// Simulates site sequences in key order.
    fn simulate(&self, routes: &[Vec<usize>]) -> Result<Vec<Vec<Step<T>>>, SimFailure> {
        let mut demand = self.demand.clone();
        let mut room = self.room.clone();
        let mut out: Vec<Vec<Step<T>>> =
            routes.iter().map(|r| Vec::with_capacity(r.len())).collect();
        let mut at: Vec<NodeId> = self.starts.iter().map(|b| b.at).collect();
        let mut ready: Vec<T> = self.starts.iter().map(|b| b.ready).collect();
        let mut onboard: Vec<u32> = self.starts.iter().map(|b| b.onboard).collect();
        let mut next: Vec<Option<T>> = Vec::with_capacity(routes.len());
        for (b, r) in routes.iter().enumerate() {
            next.push(match r.first() {
                Some(&s) => Some(
                    self.arrival(at[b], s, ready[b])
                        .ok_or(SimFailure::Unreachable)?,
                ),
                None => None,
            });
        }
        loop {
            let Some(b) = (0..routes.len())
                .filter(|&b| next[b].is_some())
                .min_by(|&x, &y| {
                    next[x]
                        .unwrap()
                        .total_cmp(&next[y].unwrap())
                        .then(x.cmp(&y))
                })
            else {
                break;
            };
            let arrival = next[b].expect("filtered");
            if arrival > self.deadline {
                return Err(SimFailure::Deadline);
            }
            let k = out[b].len();
            let site = routes[b][k];
            let (boarded, alighted, depart) = if self.is_pickup(site) {
                let free = self.starts[b].capacity - onboard[b];
                let n = demand[site].min(self.pickups[site].boarding_cap).min(free);
                demand[site] -= n;
                onboard[b] += n;
                (n, 0, arrival + self.boarding.duration(n))
            } else {
                let j = site - self.n_pickups();
                let n = onboard[b].min(room[j]);
                room[j] -= n;
                onboard[b] -= n;
                (0, n, arrival)
            };
            if boarded + alighted == 0 {
                return Err(SimFailure::NoTransfer);
            }
            out[b].push(Step {
                site,
                arrival,
                depart,
                boarded,
                alighted,
                onboard: onboard[b],
            });
            at[b] = self.node(site);
            ready[b] = depart;
            next[b] = match routes[b].get(k + 1) {
                Some(&s) => Some(
                    self.arrival(at[b], s, ready[b])
                        .ok_or(SimFailure::Unreachable)?,
                ),
                None => None,
            };
        }
        if onboard.iter().any(|&o| o > 0) {
            return Err(SimFailure::NotEmpty);
        }
        Ok(out)
    }

    /// (evacuated, completion) of simulated steps.
    fn objective(&self, steps: &[Vec<Step<T>>]) -> (u32, T) {
        let mut evac = 0;
        let mut completion = self.t0;
        for s in steps.iter().flatten() {
            if s.alighted > 0 {
                evac += s.alighted;
                completion = completion.max_of(s.arrival);
            }
        }
        (evac, completion)
    }

    fn evaluate(&self, routes: &[Vec<usize>]) -> Option<(u32, T)> {
        self.simulate(routes).ok().map(|s| self.objective(&s))
    }

    fn build_routes(&self, steps: &[Vec<Step<T>>]) -> Result<Vec<BusRoute<T>>, NetError> {
        let mut routes = Vec::with_capacity(steps.len());
        for (b, bus_steps) in steps.iter().enumerate() {
            let start = &self.starts[b];
            let mut at = start.at;
            let mut t = start.ready;
            let mut visits = Vec::with_capacity(bus_steps.len());
            for s in bus_steps {
                let leg = self.tt.path(at, self.node(s.site), t)?;
                debug_assert!(leg.arrival == s.arrival);
                visits.push(Visit {
                    site: self.site_ref(s.site),
                    location: self.node(s.site),
                    arrival: s.arrival,
                    depart: s.depart,
                    boarded: s.boarded,
                    alighted: s.alighted,
                    onboard: s.onboard,
                    leg,
                });
                at = self.node(s.site);
                t = s.depart;
            }
            routes.push(BusRoute {
                bus: start.bus,
                depot: start.depot,
                capacity: start.capacity,
                start: start.at,
                start_time: start.ready,
                visits,
            });
        }
        Ok(routes)
    }

    fn unserved(&self, steps: &[Vec<Step<T>>]) -> BTreeMap<PickupId, u32> {
        let mut left = self.demand.clone();
        for s in steps.iter().flatten() {
            if self.is_pickup(s.site) {
                left[s.site] -= s.boarded;
            }
        }
        left.iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(i, &d)| (self.pickups[i].id, d))
            .collect()
    }
}

/// Exhaustive search that commits visits in simulation key order. Each bus
/// picks its next site when it becomes free; the pending visit with the
/// smallest `(arrival, bus)` is then executed. Every valid plan corresponds
/// to exactly one branch.
struct Exhaustive<'c, 'a, T> {
    c: &'c Ctx<'a, T>,
    at: Vec<NodeId>,
    ready: Vec<T>,
    onboard: Vec<u32>,
    done: Vec<bool>,
    pending: Vec<Option<(usize, T)>>,
    demand: Vec<u32>,
    room: Vec<u32>,
    routes: Vec<Vec<usize>>,
    evacuated: u32,
    completion: T,
    best: Option<(Vec<Vec<usize>>, (u32, T))>,
}

impl<T: Scalar> Exhaustive<'_, '_, T> {
    fn run(c: &Ctx<T>) -> Vec<Vec<usize>> {
        let nb = c.starts.len();
        let mut e = Exhaustive {
            c,
            at: c.starts.iter().map(|b| b.at).collect(),
            ready: c.starts.iter().map(|b| b.ready).collect(),
            onboard: c.starts.iter().map(|b| b.onboard).collect(),
            done: vec![false; nb],
            pending: vec![None; nb],
            demand: c.demand.clone(),
            room: c.room.clone(),
            routes: vec![Vec::new(); nb],
            evacuated: 0,
            completion: c.t0,
            best: None,
        };
        e.search();
        e.best.map(|b| b.0).unwrap_or_else(|| vec![Vec::new(); nb])
    }

    /// Evacuees that could still reach a shelter, ignoring time.
    fn upper_bound(&self) -> u32 {
        let waiting: u32 = (0..self.c.n_pickups())
            .filter(|&i| self.c.usable[i])
            .map(|i| self.demand[i])
            .sum();
        let carried: u32 = self.onboard.iter().sum();
        let room: u32 = self.room.iter().sum();
        self.evacuated + (waiting + carried).min(room)
    }

    fn pruned(&self) -> bool {
        let Some((_, (be, bc))) = &self.best else {
            return false;
        };
        let ub = self.upper_bound();
        ub < *be || (ub == *be && self.completion >= *bc)
    }

    fn search(&mut self) {
        if self.pruned() {
            return;
        }
        let nb = self.c.starts.len();
        if let Some(b) = (0..nb).find(|&b| !self.done[b] && self.pending[b].is_none()) {
            self.branch(b);
            return;
        }
        let next = (0..nb)
            .filter_map(|b| self.pending[b].map(|(_, t)| (b, t)))
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        match next {
            Some((b, _)) => self.commit(b),
            None => {
                let score = (self.evacuated, self.completion);
                let replace = match &self.best {
                    None => true,
                    Some((_, s)) => better_objective(score, *s),
                };
                if replace {
                    self.best = Some((self.routes.clone(), score));
                }
            }
        }
    }

    fn branch(&mut self, b: usize) {
        let cap = self.c.starts[b].capacity;
        for site in 0..self.c.n_sites() {
            if !self.c.usable[site] {
                continue;
            }
            let useful = if self.c.is_pickup(site) {
                self.demand[site] > 0 && self.onboard[b] < cap
            } else {
                self.onboard[b] > 0 && self.room[site - self.c.n_pickups()] > 0
            };
            if !useful {
                continue;
            }
            let Some(arrival) = self.c.arrival(self.at[b], site, self.ready[b]) else {
                continue;
            };
            if arrival > self.c.deadline {
                continue;
            }
            self.pending[b] = Some((site, arrival));
            self.search();
            self.pending[b] = None;
        }
        if self.onboard[b] == 0 {
            self.done[b] = true;
            self.search();
            self.done[b] = false;
        }
    }

    fn commit(&mut self, b: usize) {
        let (site, arrival) = self.pending[b].expect("pending visit");
        let saved = (
            self.at[b],
            self.ready[b],
            self.onboard[b],
            self.evacuated,
            self.completion,
        );
        let (moved, depart) = if self.c.is_pickup(site) {
            let free = self.c.starts[b].capacity - self.onboard[b];
            let n = self.demand[site]
                .min(self.c.pickups[site].boarding_cap)
                .min(free);
            self.demand[site] -= n;
            self.onboard[b] += n;
            (n, arrival + self.c.boarding.duration(n))
        } else {
            let j = site - self.c.n_pickups();
            let n = self.onboard[b].min(self.room[j]);
            self.room[j] -= n;
            self.onboard[b] -= n;
            self.evacuated += n;
            if n > 0 {
                self.completion = self.completion.max_of(arrival);
            }
            (n, arrival)
        };
        if moved > 0 {
            self.at[b] = self.c.node(site);
            self.ready[b] = depart;
            self.pending[b] = None;
            self.routes[b].push(site);
            self.search();
            self.routes[b].pop();
            self.pending[b] = Some((site, arrival));
        }
        if self.c.is_pickup(site) {
            self.demand[site] += moved;
        } else {
            self.room[site - self.c.n_pickups()] += moved;
        }
        (
            self.at[b],
            self.ready[b],
            self.onboard[b],
            self.evacuated,
            self.completion,
        ) = saved;
    }
}

/// Constructive planner shared by the greedy baseline and the evolutionary
/// search. Buses decide in order of readiness. A bus starting a trip picks a
/// pickup and reserves one shelter that can take everything it will board;
/// it keeps collecting while another pickup fits that reservation and the
/// deadline, then unloads at the quickest shelter with room for the load. Evacuees are claimed when a bus commits to a
/// pickup, and a claim is only allowed after every earlier claim at that
/// pickup in simulation order, so the simulated boarding equals the claim.
struct Decoder<'c, 'a, T> {
    c: &'c Ctx<'a, T>,
}

type Key<T> = (T, usize);

fn key_after<T: Scalar>(k: Key<T>, last: Option<Key<T>>) -> bool {
    match last {
        None => true,
        Some(l) => match k.0.total_cmp(&l.0) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => k.1 > l.1,
        },
    }
}

struct Candidate<T> {
    pickup: usize,
    arrival: T,
    claim: u32,
    shelter: usize,
}

impl<T: Scalar> Decoder<'_, '_, T> {
    fn decode(&self, prefs: &[Vec<u32>]) -> Vec<Vec<usize>> {
        let c = self.c;
        let nb = c.starts.len();
        let np = c.n_pickups();
        let mut at: Vec<NodeId> = c.starts.iter().map(|b| b.at).collect();
        let mut ready: Vec<T> = c.starts.iter().map(|b| b.ready).collect();
        let mut onboard: Vec<u32> = c.starts.iter().map(|b| b.onboard).collect();
        let mut target: Vec<Option<usize>> = vec![None; nb];
        let mut done = vec![false; nb];
        let mut cursor = vec![0usize; nb];
        let mut routes = vec![Vec::new(); nb];
        let mut unclaimed = c.demand.clone();
        let mut last_claim: Vec<Option<Key<T>>> = vec![None; np];
        let mut free_room = c.room.clone();
        let mut last_reserve: Vec<Option<Key<T>>> = vec![None; c.shelters.len()];
        let mut outstanding = vec![0u32; c.shelters.len()];
        // Passengers already aboard get their room before anyone claims more,
        // where the previous plan was taking them first: those fit together.
        let mut aboard: Vec<usize> = (0..nb).filter(|&b| onboard[b] > 0).collect();
        aboard.sort_by_key(|&b| c.starts[b].unload_hint.is_none());
        for b in aboard {
            let fits = |s: usize| -> Option<T> {
                if !c.usable[s] || free_room[s - np] < onboard[b] {
                    return None;
                }
                c.arrival(at[b], s, ready[b]).filter(|&t| t <= c.deadline)
            };
            let hinted = c.starts[b]
                .unload_hint
                .and_then(|id| c.shelters.iter().position(|x| x.id == id))
                .map(|j| np + j)
                .and_then(|s| fits(s).map(|t| (s, t)));
            let best = hinted.or_else(|| {
                (np..c.n_sites())
                    .filter_map(|s| fits(s).map(|t| (s, t)))
                    .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
            });
            if let Some((s, _)) = best {
                free_room[s - np] -= onboard[b];
                outstanding[s - np] += 1;
                target[b] = Some(s);
            }
        }

        while let Some(b) = (0..nb)
            .filter(|&b| !done[b])
            .min_by(|&x, &y| ready[x].total_cmp(&ready[y]).then(x.cmp(&y)))
        {
            // Leftover passengers without a reservation (re-planning only).
            if onboard[b] > 0 && target[b].is_none() {
                let pick = (0..c.shelters.len())
                    .filter(|&j| free_room[j] > 0 && c.usable[np + j])
                    .filter_map(|j| {
                        let arr = c.arrival(at[b], np + j, ready[b])?;
                        let n = onboard[b].min(free_room[j]);
                        let partial = n < onboard[b];
                        let ok = arr <= c.deadline
                            && (!partial
                                || (outstanding[j] == 0 && key_after((arr, b), last_reserve[j])));
                        ok.then_some((j, arr, n))
                    })
                    .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
                match pick {
                    Some((j, arr, n)) => {
                        free_room[j] -= n;
                        last_reserve[j] = Some((arr, b));
                        onboard[b] -= n;
                        routes[b].push(np + j);
                        at[b] = c.node(np + j);
                        ready[b] = arr;
                    }
                    // Unplaceable passengers: the route is left for the
                    // simulator to reject.
                    None => done[b] = true,
                }
                continue;
            }
            let cand = self.choose_pickup(
                b,
                at[b],
                ready[b],
                onboard[b],
                target[b],
                &unclaimed,
                &last_claim,
                &free_room,
                &prefs_for(prefs, b),
                &mut cursor[b],
            );
            match cand {
                Some(k) => {
                    unclaimed[k.pickup] -= k.claim;
                    last_claim[k.pickup] = Some((k.arrival, b));
                    free_room[k.shelter - np] -= k.claim;
                    if target[b].is_none() {
                        outstanding[k.shelter - np] += 1;
                    }
                    target[b] = Some(k.shelter);
                    onboard[b] += k.claim;
                    routes[b].push(k.pickup);
                    at[b] = c.node(k.pickup);
                    ready[b] = k.arrival + c.boarding.duration(k.claim);
                }
                None => match target[b].take() {
                    Some(reserved) => {
                        // Unload wherever is now quickest with room for the whole load.
                        free_room[reserved - np] += onboard[b];
                        outstanding[reserved - np] -= 1;
                        let (s, arr) = (np..c.n_sites())
                            .filter(|&s| c.usable[s] && free_room[s - np] >= onboard[b])
                            .filter_map(|s| {
                                c.arrival(at[b], s, ready[b])
                                    .filter(|&t| t <= c.deadline)
                                    .map(|t| (s, t))
                            })
                            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
                            .expect("checked when claiming");
                        free_room[s - np] -= onboard[b];
                        last_reserve[s - np] = Some(last_reserve[s - np].map_or((arr, b), |l| {
                            if key_after((arr, b), Some(l)) {
                                (arr, b)
                            } else {
                                l
                            }
                        }));
                        onboard[b] = 0;
                        routes[b].push(s);
                        at[b] = c.node(s);
                        ready[b] = arr;
                    }
                    None => done[b] = true,
                },
            }
        }
        routes
    }

    #[allow(clippy::too_many_arguments)]
    fn choose_pickup(
        &self,
        b: usize,
        at: NodeId,
        ready: T,
        onboard: u32,
        target: Option<usize>,
        unclaimed: &[u32],
        last_claim: &[Option<Key<T>>],
        free_room: &[u32],
        prefs: &[u32],
        cursor: &mut usize,
    ) -> Option<Candidate<T>> {
        let c = self.c;
        let np = c.n_pickups();
        let cap = c.starts[b].capacity;
        let evaluate = |p: usize| -> Option<Candidate<T>> {
            if p >= np || !c.usable[p] || onboard >= cap {
                return None;
            }
            let claim = unclaimed[p]
                .min(c.pickups[p].boarding_cap)
                .min(cap - onboard);
            if claim == 0 {
                return None;
            }
            let arrival = c.arrival(at, p, ready)?;
            if arrival > c.deadline || !key_after((arrival, b), last_claim[p]) {
                return None;
            }
            let depart = arrival + c.boarding.duration(claim);
            let fits = |s: usize| -> Option<T> {
                if !c.usable[s] || free_room[s - np] < claim {
                    return None;
                }
                let arr = c.tt.arrival(c.pickups[p].location, c.node(s), depart)?;
                (arr <= c.deadline).then_some(arr)
            };
            let shelter = match target {
                Some(s) => fits(s).map(|_| s)?,
                None => {
                    (np..c.n_sites())
                        .filter_map(|s| fits(s).map(|t| (s, t)))
                        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))?
                        .0
                }
            };
            Some(Candidate {
                pickup: p,
                arrival,
                claim,
                shelter,
            })
        };
        while *cursor < prefs.len() {
            let p = prefs[*cursor] as usize;
            *cursor += 1;
            if p == np && target.is_some() {
                return None;
            }
            if let Some(k) = evaluate(p) {
                return Some(k);
            }
        }
        (0..np).filter_map(evaluate).min_by(|x, y| {
            x.arrival
                .total_cmp(&y.arrival)
                .then(x.pickup.cmp(&y.pickup))
        })
    }
}

fn prefs_for(prefs: &[Vec<u32>], b: usize) -> Vec<u32> {
    prefs.get(b).cloned().unwrap_or_default()
}

/// Genome: a pickup preference queue per bus, consumed front to back, with
/// nearest-pickup fallback once exhausted. The value `np` ends a loaded trip.
struct EbpdProblem<'d, 'c, 'a, T> {
    d: &'d Decoder<'c, 'a, T>,
    max_len: usize,
}

impl<T: Scalar> Problem for EbpdProblem<'_, '_, '_, T> {
    type Genome = Vec<Vec<u32>>;
    /// (infeasible, fewer evacuated, completion)
    type Fitness = (bool, Reverse<u32>, T);

    fn fitness(&self, g: &Self::Genome) -> Self::Fitness {
        match self.d.c.evaluate(&self.d.decode(g)) {
            Some((e, t)) => (false, Reverse(e), t),
            None => (true, Reverse(0), self.d.c.t0),
        }
    }

    fn crossover(&self, a: &Self::Genome, b: &Self::Genome, rng: &mut EvoRng) -> Self::Genome {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                if rng.random_bool(0.5) {
                    x.clone()
                } else {
                    y.clone()
                }
            })
            .collect()
    }

    fn mutate(&self, g: &mut Self::Genome, rng: &mut EvoRng) {
        let np = self.d.c.n_pickups();
        if g.is_empty() || np == 0 {
            return;
        }
        let b = rng.random_range(0..g.len());
        match rng.random_range(0..4) {
            0 => {
                let pos = rng.random_range(0..=g[b].len());
                g[b].insert(pos, rng.random_range(0..=np) as u32);
            }
            1 if !g[b].is_empty() => {
                let pos = rng.random_range(0..g[b].len());
                g[b].remove(pos);
            }
            2 if g[b].len() >= 2 => {
                let i = rng.random_range(0..g[b].len());
                let j = rng.random_range(0..g[b].len());
                g[b].swap(i, j);
            }
            _ if !g[b].is_empty() => {
                let pos = rng.random_range(0..g[b].len());
                let x = g[b].remove(pos);
                let other = rng.random_range(0..g.len());
                let at = rng.random_range(0..=g[other].len());
                g[other].insert(at, x);
            }
            _ => {}
        }
    }

    fn repair(&self, g: &mut Self::Genome) {
        for q in g.iter_mut() {
            q.truncate(self.max_len);
        }
    }
}

fn solve_ctx<T: Scalar>(
    c: &Ctx<T>,
    mode: SolverMode,
    exact_ok: bool,
    evo: &EvoConfig,
) -> Result<(Vec<Vec<usize>>, SolveInfo), EbpdError> {
    let exact = match mode {
        SolverMode::Exact => true,
        SolverMode::Auto => exact_ok,
        SolverMode::Evo | SolverMode::Greedy => false,
    };
    if exact {
        return Ok((Exhaustive::run(c), SolveInfo::exact()));
    }
    let d = Decoder { c };
    let empty = vec![Vec::new(); c.starts.len()];
    let greedy = d.decode(&empty);
    let Some(seed_score) = c.evaluate(&greedy) else {
        return Err(EbpdError::Stranded);
    };
    if mode == SolverMode::Greedy {
        return Ok((greedy, SolveInfo::greedy()));
    }
    let problem = EbpdProblem {
        d: &d,
        max_len: 2 * c.n_pickups() + 4,
    };
    let out = evolve(evo, vec![empty], &problem)?;
    let info = SolveInfo {
        mode: SolverMode::Evo,
        history: out
            .history
            .iter()
            .map(|(_, e, t)| vec![e.0 as f64, t.as_f64()])
            .collect(),
    };
    let (inf, e, t) = out.best_fitness;
    let routes = if !inf && better_objective((e.0, t), seed_score) {
        d.decode(&out.best)
    } else {
        greedy
    };
    Ok((routes, info))
}

fn assemble<T: Scalar>(
    c: &Ctx<T>,
    routes: &[Vec<usize>],
    deadline: T,
) -> Result<EvacPlan<T>, EbpdError> {
    let steps = c
        .simulate(routes)
        .map_err(|f| EbpdError::Invalid(format!("internal plan rejected by simulation: {f:?}")))?;
    let (total_evacuated, completion_time) = c.objective(&steps);
    Ok(EvacPlan {
        t0: c.t0,
        deadline,
        routes: c.build_routes(&steps)?,
        unserved: c.unserved(&steps),
        excluded: c.excluded(),
        total_evacuated,
        completion_time,
    })
}

pub fn solve_ebpd<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &EbpdInstance<T>,
    opts: &EbpdOptions<T>,
) -> Result<EvacPlan<T>, EbpdError> {
    solve_ebpd_traced(net, inst, opts).map(|(p, _)| p)
}

pub fn solve_ebpd_traced<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &EbpdInstance<T>,
    opts: &EbpdOptions<T>,
) -> Result<(EvacPlan<T>, SolveInfo), EbpdError> {
    inst.validate(net)?;
    if opts.mode == SolverMode::Exact && !inst.within_exact_bounds() {
        return Err(EbpdError::TooLarge {
            buses: inst.bus_count(),
            pickups: inst.pickups.len(),
            shelters: inst.shelters.len(),
        });
    }
    let c = Ctx::from_instance(net, inst, opts.boarding);
    let (routes, info) = solve_ctx(&c, opts.mode, inst.within_exact_bounds(), &opts.evo)?;
    Ok((assemble(&c, &routes, inst.deadline)?, info))
}

/// Re-plannable evacuation: tracks declared demand per pickup and re-solves
/// from the buses' current positions when it changes.
#[derive(Debug, Clone)]
pub struct EvacState<T> {
    inst: EbpdInstance<T>,
    opts: EbpdOptions<T>,
    plan: EvacPlan<T>,
    info: SolveInfo,
    dirty: bool,
}

impl<T: Scalar> EvacState<T> {
    pub fn new(
        net: &TimeDependentNetwork<T>,
        inst: EbpdInstance<T>,
        opts: EbpdOptions<T>,
    ) -> Result<Self, EbpdError> {
        let (plan, info) = solve_ebpd_traced(net, &inst, &opts)?;
        Ok(Self {
            inst,
            opts,
            plan,
            info,
            dirty: false,
        })
    }

    pub fn plan(&self) -> &EvacPlan<T> {
        &self.plan
    }

    /// How the most recent plan was found.
    pub fn solve_info(&self) -> &SolveInfo {
        &self.info
    }

    pub fn instance(&self) -> &EbpdInstance<T> {
        &self.inst
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    /// Sets the total demand of a pickup (evacuees already collected
    /// included). Returns whether anything changed.
    pub fn update_demand(&mut self, pickup: PickupId, demand: u32) -> Result<bool, EbpdError> {
        let p = self
            .inst
            .pickups
            .iter_mut()
            .find(|p| p.id == pickup)
            .ok_or(EbpdError::UnknownPickup(pickup))?;
        if p.demand == demand {
            return Ok(false);
        }
        p.demand = demand;
        self.dirty = true;
        Ok(true)
    }

    /// Keeps every visit reached by `now`, lets buses already driving finish
    /// their current leg, and plans the rest from there.
    pub fn replan(
        &mut self,
        net: &TimeDependentNetwork<T>,
        now: T,
    ) -> Result<&EvacPlan<T>, EbpdError> {
        let mut starts = Vec::with_capacity(self.plan.routes.len());
        let mut frozen: Vec<Vec<Visit<T>>> = Vec::with_capacity(self.plan.routes.len());
        let mut in_flight: Vec<Option<TimedPath<T>>> = Vec::with_capacity(self.plan.routes.len());
        let mut boarded: BTreeMap<PickupId, u32> = BTreeMap::new();
        let mut alighted: BTreeMap<ShelterId, u32> = BTreeMap::new();
        for r in &self.plan.routes {
            let kept: Vec<Visit<T>> = r
                .visits
                .iter()
                .take_while(|v| v.arrival <= now)
                .cloned()
                .collect();
            for v in &kept {
                match v.site {
                    SiteRef::Pickup(id) => *boarded.entry(id).or_default() += v.boarded,
                    SiteRef::Shelter(id) => *alighted.entry(id).or_default() += v.alighted,
                }
            }
            let (mut at, mut ready, onboard) = match kept.last() {
                Some(v) => (v.location, v.depart, v.onboard),
                None => (r.start, r.start_time, 0),
            };
            let mut flight = None;
            if let Some(next) = r.visits.get(kept.len()) {
                if next.leg.departure < now {
                    at = next.location;
                    ready = next.arrival;
                    flight = Some(next.leg.clone());
                }
            }
            if flight.is_none() {
                ready = T::max_of(ready, now);
            }
            let unload_hint = r.visits[kept.len()..]
                .iter()
                .find(|v| matches!(v.site, SiteRef::Shelter(_)))
                .filter(|v| v.alighted >= onboard)
                .and_then(|v| match v.site {
                    SiteRef::Shelter(id) => Some(id),
                    SiteRef::Pickup(_) => None,
                });
            starts.push(BusStart {
                bus: r.bus,
                depot: r.depot,
                capacity: r.capacity,
                at,
                ready,
                onboard,
                unload_hint,
            });
            frozen.push(kept);
            in_flight.push(flight);
        }
        // Whoever already boarded was there, whatever the update says.
        for p in self.inst.pickups.iter_mut() {
            p.demand = p.demand.max(boarded.get(&p.id).copied().unwrap_or(0));
        }
        let mut pickups = self.inst.pickups.clone();
        pickups.sort_by_key(|p| p.id);
        let mut shelters = self.inst.shelters.clone();
        shelters.sort_by_key(|s| s.id);
        let demand = pickups
            .iter()
            .map(|p| {
                p.demand
                    .saturating_sub(boarded.get(&p.id).copied().unwrap_or(0))
            })
            .collect();
        let room = shelters
            .iter()
            .map(|s| {
                s.capacity
                    .saturating_sub(alighted.get(&s.id).copied().unwrap_or(0))
            })
            .collect();
        let c = Ctx::new(net, &self.inst, starts, demand, room, self.opts.boarding);
        let exact_ok = self.inst.within_exact_bounds();
        let mode = if self.opts.mode == SolverMode::Exact && !exact_ok {
            SolverMode::Auto
        } else {
            self.opts.mode
        };
        let (routes, info) = solve_ctx(&c, mode, exact_ok, &self.opts.evo)?;
        self.info = info;
        let tail = assemble(&c, &routes, self.inst.deadline)?;

        let mut merged = Vec::with_capacity(tail.routes.len());
        for ((old, kept), (mut fresh, flight)) in self
            .plan
            .routes
            .iter()
            .zip(frozen)
            .zip(tail.routes.into_iter().zip(in_flight))
        {
            if let (Some(f), Some(first)) = (flight, fresh.visits.first_mut()) {
                let mut leg = f;
                leg.arcs.extend(first.leg.arcs.iter().copied());
                leg.nodes.extend(first.leg.nodes.iter().skip(1).copied());
                leg.node_arrivals
                    .extend(first.leg.node_arrivals.iter().skip(1).copied());
                leg.arrival = first.leg.arrival;
                first.leg = leg;
            }
            let mut visits = kept;
            visits.append(&mut fresh.visits);
            merged.push(BusRoute {
                bus: old.bus,
                depot: old.depot,
                capacity: old.capacity,
                start: old.start,
                start_time: old.start_time,
                visits,
            });
        }
        let total_evacuated: u32 = merged
            .iter()
            .flat_map(|r| &r.visits)
            .map(|v| v.alighted)
            .sum();
        let completion_time = merged
            .iter()
            .flat_map(|r| &r.visits)
            .filter(|v| v.alighted > 0)
            .map(|v| v.arrival)
            .fold(self.inst.t0, |a, b| a.max_of(b));
        self.plan = EvacPlan {
            t0: self.inst.t0,
            deadline: self.inst.deadline,
            routes: merged,
            unserved: tail.unserved,
            excluded: tail.excluded,
            total_evacuated,
            completion_time,
        };
        self.dirty = false;
        Ok(&self.plan)
    }
}

/// Checks capacity, boarding, shelter, deadline, conservation and replay
/// invariants of a plan against the instance it claims to solve.
pub fn check_plan<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &EbpdInstance<T>,
    plan: &EvacPlan<T>,
    boarding: &Boarding<T>,
) -> Result<(), String> {
    let pickups: BTreeMap<PickupId, &PickupPoint> =
        inst.pickups.iter().map(|p| (p.id, p)).collect();
    let shelters: BTreeMap<ShelterId, &Shelter> = inst.shelters.iter().map(|s| (s.id, s)).collect();
    let mut boarded: BTreeMap<PickupId, u32> = BTreeMap::new();
    let mut intake: BTreeMap<ShelterId, u32> = BTreeMap::new();
    let mut total_boarded = 0u64;
    let mut total_alighted = 0u64;
    for r in &plan.routes {
        let mut onboard = 0u32;
        let mut at = r.start;
        let mut t = r.start_time;
        for (i, v) in r.visits.iter().enumerate() {
            // A bus may wait before leaving, never leave early.
            if v.leg.departure < t {
                return Err(format!(
                    "{:?} visit {i} leaves before the bus is free",
                    r.bus
                ));
            }
            let replay = net
                .replay(at, &v.leg.arcs, v.leg.departure, None)
                .map_err(|e| e.to_string())?;
            if replay.arrival != v.arrival || replay.destination() != v.location {
                return Err(format!("{:?} visit {i} does not replay", r.bus));
            }
            if v.arrival > plan.deadline {
                return Err(format!("{:?} visit {i} after deadline", r.bus));
            }
            match v.site {
                SiteRef::Pickup(id) => {
                    let p = pickups.get(&id).ok_or(format!("unknown pickup {id:?}"))?;
                    if v.alighted != 0
                        || v.boarded > p.boarding_cap
                        || v.boarded + onboard > r.capacity
                    {
                        return Err(format!("{:?} visit {i} boarding out of bounds", r.bus));
                    }
                    if v.depart != v.arrival + boarding.duration(v.boarded) {
                        return Err(format!("{:?} visit {i} dwell", r.bus));
                    }
                    *boarded.entry(id).or_default() += v.boarded;
                    onboard += v.boarded;
                    total_boarded += v.boarded as u64;
                }
                SiteRef::Shelter(id) => {
                    shelters.get(&id).ok_or(format!("unknown shelter {id:?}"))?;
                    if v.boarded != 0 || v.alighted > onboard || v.depart != v.arrival {
                        return Err(format!("{:?} visit {i} unloading out of bounds", r.bus));
                    }
                    *intake.entry(id).or_default() += v.alighted;
                    onboard -= v.alighted;
                    total_alighted += v.alighted as u64;
                }
            }
            if v.onboard != onboard {
                return Err(format!("{:?} visit {i} onboard count", r.bus));
            }
            at = v.location;
            t = v.depart;
        }
        if onboard != 0 {
            return Err(format!("{:?} ends with passengers", r.bus));
        }
    }
    for (id, n) in &boarded {
        if *n > pickups[id].demand {
            return Err(format!("pickup {id:?} over-collected"));
        }
    }
    for (id, n) in &intake {
        if *n > shelters[id].capacity {
            return Err(format!("shelter {id:?} over capacity"));
        }
    }
    if total_boarded != total_alighted || total_alighted != plan.total_evacuated as u64 {
        return Err("boarded, alighted and evacuated totals disagree".into());
    }
    let unserved: u64 = plan.unserved.values().map(|&u| u as u64).sum();
    if unserved + plan.total_evacuated as u64 != inst.total_demand() {
        return Err("unserved plus evacuated differs from demand".into());
    }
    Ok(())
}
