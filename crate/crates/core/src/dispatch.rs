//! Ambulance routing: the single household pickup-and-return, and group
//! dispatch of hospital fleets to many patients minimizing the longest wait.
//!
//! Slightly injured patients are treated where they are; seriously injured
//! ones are picked up and delivered to a hospital, one per trip.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cover::HospitalId;
use crate::evo::{
    evolve, insert_mutation, order_crossover, swap_mutation, EvoConfig, EvoError, EvoRng, Problem,
    SolveInfo, SolverMode,
};
use crate::net::{NetError, NodeId, TimeDependentNetwork, TimedPath};
use crate::scalar::Scalar;
use crate::travel::TravelTimes;
use rand::Rng;

pub const EXACT_MAX_AMBULANCES: usize = 3;
pub const EXACT_MAX_PATIENTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AmbulanceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Slight,
    Serious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient<T> {
    pub id: PatientId,
    pub location: NodeId,
    pub group: Group,
    pub onset: T,
}

/// A hospital together with the ambulances stationed there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetHospital {
    pub id: HospitalId,
    pub location: NodeId,
    pub ambulances: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ambulance {
    pub id: AmbulanceId,
    pub home: HospitalId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceTimes<T> {
    pub on_site: T,
    pub pickup: T,
    pub handover: T,
}

impl<T: Scalar> Default for ServiceTimes<T> {
    fn default() -> Self {
        Self {
            on_site: T::lit(300.0),
            pickup: T::lit(180.0),
            handover: T::lit(120.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryPolicy {
    #[default]
    HomeHospital,
    /// Earliest-arrival hospital from the pickup, ties to the smaller id.
    NearestHospital,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    TreatOnSite,
    Pickup,
    DeliverHospital,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop<T> {
    pub kind: StopKind,
    pub patient: PatientId,
    /// Set on delivery stops.
    pub hospital: Option<HospitalId>,
    pub location: NodeId,
    pub arrival: T,
    pub service_start: T,
    pub depart: T,
    /// Leg driven from the previous stop (or the home hospital).
    pub leg: TimedPath<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbulanceRoute<T> {
    pub ambulance: AmbulanceId,
    pub home: HospitalId,
    pub start: NodeId,
    pub stops: Vec<Stop<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPlan<T> {
    pub t0: T,
    pub routes: Vec<AmbulanceRoute<T>>,
    /// Service start minus onset, per patient.
    pub wait: BTreeMap<PatientId, T>,
    /// Largest wait; zero without patients.
    pub objective: T,
    /// Sum of waits, the secondary criterion.
    pub total_wait: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchInstance<T> {
    pub hospitals: Vec<FleetHospital>,
    pub patients: Vec<Patient<T>>,
    pub t0: T,
}

#[derive(Debug, Clone)]
pub struct DispatchOptions<T> {
    pub mode: SolverMode,
    pub evo: EvoConfig,
    pub service: ServiceTimes<T>,
    pub delivery: DeliveryPolicy,
}

impl<T: Scalar> Default for DispatchOptions<T> {
    fn default() -> Self {
        Self {
            mode: SolverMode::default(),
            evo: EvoConfig::default(),
            service: ServiceTimes::default(),
            delivery: DeliveryPolicy::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("no ambulances in any fleet")]
    EmptyFleet,
    #[error("patient {0:?} cannot be served from any hospital")]
    UnreachablePatient(PatientId),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("patient {0:?} has negative onset")]
    NegativeOnset(PatientId),
    #[error("instance with {ambulances} ambulances and {patients} patients exceeds exact bounds")]
    TooLarge { ambulances: usize, patients: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Evo(#[from] EvoError),
}

/// Outbound and return legs of a household call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleRoute<T> {
    pub outbound: TimedPath<T>,
    pub back: TimedPath<T>,
}

impl<T: Scalar> SingleRoute<T> {
    pub fn total_time(&self) -> T {
        self.back.arrival - self.outbound.departure
    }
}

/// Hospital to demand and back, the return leaving after `service` on scene.
pub fn route_single<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    hospital: NodeId,
    demand: NodeId,
    departure: T,
    service: T,
) -> Result<SingleRoute<T>, NetError> {
    let outbound = net.shortest_time_path(hospital, demand, departure)?;
    let back = net.shortest_time_path(demand, hospital, outbound.arrival + service)?;
    Ok(SingleRoute { outbound, back })
}

impl<T: Scalar> DispatchInstance<T> {
    /// Ambulances numbered from zero across hospitals in id order.
    pub fn ambulances(&self) -> Vec<Ambulance> {
        let mut hospitals: Vec<&FleetHospital> = self.hospitals.iter().collect();
        hospitals.sort_by_key(|h| h.id);
        let mut out = Vec::new();
        for h in hospitals {
            for _ in 0..h.ambulances {
                out.push(Ambulance {
                    id: AmbulanceId(out.len() as u32),
                    home: h.id,
                });
            }
        }
        out
    }

    pub fn within_exact_bounds(&self) -> bool {
        self.ambulances().len() <= EXACT_MAX_AMBULANCES && self.patients.len() <= EXACT_MAX_PATIENTS
    }

    pub fn validate(&self, net: &TimeDependentNetwork<T>) -> Result<(), DispatchError> {
        let mut hs = BTreeSet::new();
        for h in &self.hospitals {
            net.check_node(h.location)?;
            if !hs.insert(h.id) {
                return Err(DispatchError::DuplicateId(format!("hospital {}", h.id.0)));
            }
        }
        let mut ps = BTreeSet::new();
        for p in &self.patients {
            net.check_node(p.location)?;
            if !ps.insert(p.id) {
                return Err(DispatchError::DuplicateId(format!("patient {}", p.id.0)));
            }
            if p.onset < T::zero() {
                return Err(DispatchError::NegativeOnset(p.id));
            }
        }
        if self.ambulances().is_empty() {
            return Err(DispatchError::EmptyFleet);
        }
        Ok(())
    }
}

/// Shared schedule evaluator over cached travel times.
struct Model<'a, T> {
    tt: TravelTimes<'a, T>,
    hospitals: Vec<FleetHospital>,
    ambulances: Vec<Ambulance>,
    patients: Vec<Patient<T>>,
    t0: T,
    service: ServiceTimes<T>,
    delivery: DeliveryPolicy,
}

/// Position and clock of an ambulance between stops.
#[derive(Clone, Copy)]
struct Cursor<T> {
    at: NodeId,
    free: T,
}

/// One served patient: its service start and where the ambulance ends up.
struct Served<T> {
    service_start: T,
    next: Cursor<T>,
}

impl<'a, T: Scalar> Model<'a, T> {
    fn new(
        net: &'a TimeDependentNetwork<T>,
        inst: &DispatchInstance<T>,
        opts: &DispatchOptions<T>,
    ) -> Self {
        let mut hospitals = inst.hospitals.clone();
        hospitals.sort_by_key(|h| h.id);
        let mut patients = inst.patients.clone();
        patients.sort_by_key(|p| p.id);
        Self {
            tt: TravelTimes::new(net),
            ambulances: inst.ambulances(),
            hospitals,
            patients,
            t0: inst.t0,
            service: opts.service,
            delivery: opts.delivery,
        }
    }

    fn hospital(&self, id: HospitalId) -> &FleetHospital {
        self.hospitals
            .iter()
            .find(|h| h.id == id)
            .expect("known hospital")
    }

    fn start(&self, a: usize) -> Cursor<T> {
        Cursor {
            at: self.hospital(self.ambulances[a].home).location,
            free: self.t0,
        }
    }

    /// Delivery hospital and arrival there, leaving the pickup at `t`.
    fn delivery(&self, a: usize, from: NodeId, t: T) -> Option<(HospitalId, T)> {
        match self.delivery {
            DeliveryPolicy::HomeHospital => {
                let h = self.hospital(self.ambulances[a].home);
                Some((h.id, self.tt.arrival(from, h.location, t)?))
            }
            DeliveryPolicy::NearestHospital => self
                .hospitals
                .iter()
                .filter_map(|h| Some((h.id, self.tt.arrival(from, h.location, t)?)))
                .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0))),
        }
    }

    fn serve(&self, a: usize, cur: Cursor<T>, p: usize) -> Option<Served<T>> {
        let patient = &self.patients[p];
        let arrival = self.tt.arrival(cur.at, patient.location, cur.free)?;
        let service_start = arrival.max_of(patient.onset);
        let next = match patient.group {
            Group::Slight => Cursor {
                at: patient.location,
                free: service_start + self.service.on_site,
            },
            Group::Serious => {
                let leave = service_start + self.service.pickup;
                let (h, at_h) = self.delivery(a, patient.location, leave)?;
                Cursor {
                    at: self.hospital(h).location,
                    free: at_h + self.service.handover,
                }
            }
        };
        Some(Served {
            service_start,
            next,
        })
    }

    /// (max wait, total wait) of per-ambulance patient sequences, `None` if a
    /// leg is unreachable.
    fn score(&self, routes: &[Vec<usize>]) -> Option<(T, T)> {
        let mut max = T::zero();
        let mut total = T::zero();
        for (a, seq) in routes.iter().enumerate() {
            let mut cur = self.start(a);
            for &p in seq {
                let s = self.serve(a, cur, p)?;
                let w = s.service_start - self.patients[p].onset;
                max = max.max_of(w);
                total = total + w;
                cur = s.next;
            }
        }
        Some((max, total))
    }

    fn build_plan(&self, routes: &[Vec<usize>]) -> Result<DispatchPlan<T>, DispatchError> {
        let mut out = Vec::with_capacity(routes.len());
        let mut wait = BTreeMap::new();
        let mut max = T::zero();
        let mut total = T::zero();
        for (a, seq) in routes.iter().enumerate() {
            let amb = self.ambulances[a];
            let start = self.start(a);
            let mut cur = start;
            let mut stops = Vec::new();
            for &p in seq {
                let patient = &self.patients[p];
                let leg = self.tt.path(cur.at, patient.location, cur.free)?;
                let service_start = leg.arrival.max_of(patient.onset);
                let w = service_start - patient.onset;
                wait.insert(patient.id, w);
                max = max.max_of(w);
                total = total + w;
                match patient.group {
                    Group::Slight => {
                        let depart = service_start + self.service.on_site;
                        stops.push(Stop {
                            kind: StopKind::TreatOnSite,
                            patient: patient.id,
                            hospital: None,
                            location: patient.location,
                            arrival: leg.arrival,
                            service_start,
                            depart,
                            leg,
                        });
                        cur = Cursor {
                            at: patient.location,
                            free: depart,
                        };
                    }
                    Group::Serious => {
                        let depart = service_start + self.service.pickup;
                        stops.push(Stop {
                            kind: StopKind::Pickup,
                            patient: patient.id,
                            hospital: None,
                            location: patient.location,
                            arrival: leg.arrival,
                            service_start,
                            depart,
                            leg,
                        });
                        let (h, _) = self
                            .delivery(a, patient.location, depart)
                            .ok_or(DispatchError::UnreachablePatient(patient.id))?;
                        let h_loc = self.hospital(h).location;
                        let leg = self.tt.path(patient.location, h_loc, depart)?;
                        let done = leg.arrival + self.service.handover;
                        stops.push(Stop {
                            kind: StopKind::DeliverHospital,
                            patient: patient.id,
                            hospital: Some(h),
                            location: h_loc,
                            arrival: leg.arrival,
                            service_start: leg.arrival,
                            depart: done,
                            leg,
                        });
                        cur = Cursor {
                            at: h_loc,
                            free: done,
                        };
                    }
                }
            }
            out.push(AmbulanceRoute {
                ambulance: amb.id,
                home: amb.home,
                start: start.at,
                stops,
            });
        }
        Ok(DispatchPlan {
            t0: self.t0,
            routes: out,
            wait,
            objective: max,
            total_wait: total,
        })
    }

    /// Every patient must be servable by some ambulance fresh from its base.
    fn check_reachable(&self) -> Result<(), DispatchError> {
        for (p, patient) in self.patients.iter().enumerate() {
            let ok = (0..self.ambulances.len()).any(|a| self.serve(a, self.start(a), p).is_some());
            if !ok {
                return Err(DispatchError::UnreachablePatient(patient.id));
            }
        }
        Ok(())
    }
}

fn lex_less<T: Scalar>(a: (T, T), b: (T, T)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Earliest-free ambulance takes the patient it reaches first.
fn greedy<T: Scalar>(m: &Model<T>) -> Result<Vec<Vec<usize>>, DispatchError> {
    let mut routes = vec![Vec::new(); m.ambulances.len()];
    let mut cursors: Vec<Cursor<T>> = (0..m.ambulances.len()).map(|a| m.start(a)).collect();
    let mut active: Vec<bool> = vec![true; m.ambulances.len()];
    let mut pending: BTreeSet<usize> = (0..m.patients.len()).collect();
    while !pending.is_empty() {
        let Some(a) = (0..cursors.len())
            .filter(|&a| active[a])
            .min_by(|&x, &y| cursors[x].free.total_cmp(&cursors[y].free).then(x.cmp(&y)))
        else {
            let p = *pending.first().expect("nonempty");
            return Err(DispatchError::UnreachablePatient(m.patients[p].id));
        };
        let pick = pending
            .iter()
            .filter_map(|&p| {
                let arr =
                    m.tt.arrival(cursors[a].at, m.patients[p].location, cursors[a].free)?;
                m.serve(a, cursors[a], p)?;
                Some((p, arr))
            })
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        match pick {
            Some((p, _)) => {
                let s = m.serve(a, cursors[a], p).expect("checked above");
                cursors[a] = s.next;
                routes[a].push(p);
                pending.remove(&p);
            }
            None => active[a] = false,
        }
    }
    Ok(routes)
}

/// Depth-first search filling ambulances in order, pruning on the
/// lexicographic (max, total) wait.
struct Exhaustive<'m, 'a, T> {
    m: &'m Model<'a, T>,
    routes: Vec<Vec<usize>>,
    served: Vec<bool>,
    remaining: usize,
    best: Option<(Vec<Vec<usize>>, (T, T))>,
}

impl<T: Scalar> Exhaustive<'_, '_, T> {
    fn run(m: &Model<T>) -> Option<Vec<Vec<usize>>> {
        let mut e = Exhaustive {
            m,
            routes: vec![Vec::new(); m.ambulances.len()],
            served: vec![false; m.patients.len()],
            remaining: m.patients.len(),
            best: None,
        };
        e.search(0, m.start(0), (T::zero(), T::zero()));
        e.best.map(|b| b.0)
    }

    fn pruned(&self, score: (T, T)) -> bool {
        match &self.best {
            Some((_, b)) => !lex_less(score, *b),
            None => false,
        }
    }

    /// Ambulances with the same base are interchangeable: a later one may
    /// only open with a higher first patient than its twin.
    fn symmetric_skip(&self, a: usize, p: usize) -> bool {
        if a == 0 || !self.routes[a].is_empty() {
            return false;
        }
        if self.m.ambulances[a - 1].home != self.m.ambulances[a].home {
            return false;
        }
        match self.routes[a - 1].first() {
            Some(&q) => p < q,
            None => true,
        }
    }

    fn search(&mut self, a: usize, cur: Cursor<T>, score: (T, T)) {
        if self.remaining == 0 {
            if !self.pruned(score) {
                self.best = Some((self.routes.clone(), score));
            }
            return;
        }
        for p in 0..self.m.patients.len() {
            if self.served[p] || self.symmetric_skip(a, p) {
                continue;
            }
            let Some(s) = self.m.serve(a, cur, p) else {
                continue;
            };
            let w = s.service_start - self.m.patients[p].onset;
            let next = (score.0.max_of(w), score.1 + w);
            if self.pruned(next) {
                continue;
            }
            self.served[p] = true;
            self.remaining -= 1;
            self.routes[a].push(p);
            self.search(a, s.next, next);
            self.routes[a].pop();
            self.remaining += 1;
            self.served[p] = false;
        }
        if a + 1 < self.m.ambulances.len() {
            self.search(a + 1, self.m.start(a + 1), score);
        }
    }
}

/// Genome: patients `0..n` and ambulance separators `n..n+A-1`.
struct DispatchProblem<'m, 'a, T> {
    m: &'m Model<'a, T>,
}

impl<T: Scalar> DispatchProblem<'_, '_, T> {
    fn decode(&self, g: &[usize]) -> Vec<Vec<usize>> {
        let n = self.m.patients.len();
        let mut routes = vec![Vec::new()];
        for &x in g {
            if x >= n {
                routes.push(Vec::new());
            } else {
                routes.last_mut().expect("nonempty").push(x);
            }
        }
        routes
    }

    fn encode(&self, routes: &[Vec<usize>]) -> Vec<usize> {
        let n = self.m.patients.len();
        let mut g = Vec::new();
        for (a, r) in routes.iter().enumerate() {
            if a > 0 {
                g.push(n + a - 1);
            }
            g.extend(r);
        }
        g
    }
}

impl<T: Scalar> Problem for DispatchProblem<'_, '_, T> {
    type Genome = Vec<usize>;
    /// (infeasible, max wait, total wait)
    type Fitness = (bool, T, T);

    fn fitness(&self, g: &Vec<usize>) -> Self::Fitness {
        match self.m.score(&self.decode(g)) {
            Some((max, total)) => (false, max, total),
            None => (true, T::zero(), T::zero()),
        }
    }

    fn crossover(&self, a: &Vec<usize>, b: &Vec<usize>, rng: &mut EvoRng) -> Vec<usize> {
        order_crossover(a, b, rng)
    }

    fn mutate(&self, g: &mut Vec<usize>, rng: &mut EvoRng) {
        if rng.random_bool(0.5) {
            swap_mutation(g, rng);
        } else {
            insert_mutation(g, rng);
        }
    }
}

/// Group dispatch from every fleet at `t0`.
pub fn solve_group_dispatch<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &DispatchInstance<T>,
    opts: &DispatchOptions<T>,
) -> Result<DispatchPlan<T>, DispatchError> {
    solve_group_dispatch_traced(net, inst, opts).map(|(p, _)| p)
}

pub fn solve_group_dispatch_traced<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &DispatchInstance<T>,
    opts: &DispatchOptions<T>,
) -> Result<(DispatchPlan<T>, SolveInfo), DispatchError> {
    inst.validate(net)?;
    let m = Model::new(net, inst, opts);
    m.check_reachable()?;
    let exact = match opts.mode {
        SolverMode::Exact if !inst.within_exact_bounds() => {
            return Err(DispatchError::TooLarge {
                ambulances: m.ambulances.len(),
                patients: m.patients.len(),
            })
        }
        SolverMode::Exact => true,
        SolverMode::Auto => inst.within_exact_bounds(),
        SolverMode::Evo | SolverMode::Greedy => false,
    };
    let (routes, info) = if exact {
        let routes = Exhaustive::run(&m).ok_or_else(|| {
            DispatchError::UnreachablePatient(m.patients.first().map_or(PatientId(0), |p| p.id))
        })?;
        (routes, SolveInfo::exact())
    } else if opts.mode == SolverMode::Greedy {
        (greedy(&m)?, SolveInfo::greedy())
    } else {
        let seed = greedy(&m)?;
        let seed_score = m.score(&seed).expect("greedy only takes reachable legs");
        let problem = DispatchProblem { m: &m };
        let out = evolve(&opts.evo, vec![problem.encode(&seed)], &problem)?;
        let info = SolveInfo {
            mode: SolverMode::Evo,
            history: out
                .history
                .iter()
                .map(|(_, a, b)| vec![a.as_f64(), b.as_f64()])
                .collect(),
        };
        let (inf, max, total) = out.best_fitness;
        let routes = if !inf && lex_less((max, total), seed_score) {
            problem.decode(&out.best)
        } else {
            seed
        };
        (routes, info)
    };
    Ok((m.build_plan(&routes)?, info))
}

/// Structural checks: each patient served once, serious pickups followed by
/// delivery, slight patients never carried, waits and objective consistent,
/// and every leg reproduced by replaying it on `net`.
pub fn check_plan<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &DispatchInstance<T>,
    plan: &DispatchPlan<T>,
    service: &ServiceTimes<T>,
) -> Result<(), String> {
    let patients: BTreeMap<PatientId, &Patient<T>> =
        inst.patients.iter().map(|p| (p.id, p)).collect();
    let mut seen = BTreeSet::new();
    let mut max = T::zero();
    for r in &plan.routes {
        let mut at = r.start;
        let mut free = plan.t0;
        let mut i = 0;
        while i < r.stops.len() {
            let s = &r.stops[i];
            let replay = net
                .replay(at, &s.leg.arcs, free, None)
                .map_err(|e| e.to_string())?;
            if replay != s.leg || s.leg.destination() != s.location || replay.arrival != s.arrival {
                return Err(format!("stop {i} of {:?} does not replay", r.ambulance));
            }
            if s.service_start < s.arrival {
                return Err(format!(
                    "stop {i} of {:?} starts before arrival",
                    r.ambulance
                ));
            }
            let p = patients
                .get(&s.patient)
                .ok_or(format!("unknown patient {:?}", s.patient))?;
            let duration = match (s.kind, p.group) {
                (StopKind::TreatOnSite, Group::Slight) => service.on_site,
                (StopKind::Pickup, Group::Serious) => {
                    let next = r.stops.get(i + 1).ok_or("pickup without delivery")?;
                    if next.kind != StopKind::DeliverHospital || next.patient != s.patient {
                        return Err(format!(
                            "pickup of {:?} not followed by delivery",
                            s.patient
                        ));
                    }
                    service.pickup
                }
                (StopKind::DeliverHospital, _) => {
                    return Err(format!("delivery of {:?} without pickup", s.patient))
                }
                _ => return Err(format!("{:?} served with the wrong stop kind", s.patient)),
            };
            if s.service_start != s.arrival.max_of(p.onset)
                || s.depart != s.service_start + duration
            {
                return Err(format!("stop timing of {:?}", s.patient));
            }
            if !seen.insert(s.patient) {
                return Err(format!("{:?} served twice", s.patient));
            }
            let w = s.service_start - p.onset;
            if plan.wait.get(&s.patient) != Some(&w) {
                return Err(format!("recorded wait of {:?}", s.patient));
            }
            max = max.max_of(w);
            at = s.location;
            free = s.depart;
            i += 1;
            if s.kind == StopKind::Pickup {
                let d = &r.stops[i];
                let replay = net
                    .replay(at, &d.leg.arcs, free, None)
                    .map_err(|e| e.to_string())?;
                if replay != d.leg
                    || d.arrival != replay.arrival
                    || d.depart != d.arrival + service.handover
                {
                    return Err(format!("delivery of {:?} does not replay", d.patient));
                }
                at = d.location;
                free = d.depart;
                i += 1;
            }
        }
    }
    if seen.len() != inst.patients.len() {
        return Err("not every patient served".into());
    }
    if max != plan.objective {
        return Err("objective is not the largest wait".into());
    }
    Ok(())
}
