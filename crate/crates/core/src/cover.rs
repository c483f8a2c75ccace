//! Adaptive community covering: assign communities to hospitals using the
//! travel times of the moment.
//!
//! The objective is lexicographic: maximize covered population, then minimize
//! the summed hospital-to-community response time. A pair is admissible when
//! the response time is within the coverage threshold and the hospital's
//! population capacity is not exceeded.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evo::{evolve, EvoConfig, EvoError, EvoRng, Problem, SolveInfo, SolverMode};
use crate::net::{NetError, NodeId, TimeDependentNetwork};
use crate::scalar::Scalar;
use crate::travel::TravelTimes;

/// Instances at or below these sizes are solved exactly.
pub const EXACT_MAX_HOSPITALS: usize = 4;
pub const EXACT_MAX_COMMUNITIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HospitalId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommunityId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hospital {
    pub id: HospitalId,
    pub location: NodeId,
    /// Largest population the hospital may cover.
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: CommunityId,
    pub location: NodeId,
    pub population: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverInstance<T> {
    pub hospitals: Vec<Hospital>,
    pub communities: Vec<Community>,
    /// Coverage threshold in seconds.
    pub threshold: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverAssignment<T> {
    pub instant: T,
    pub assignment: BTreeMap<CommunityId, HospitalId>,
    pub uncovered: BTreeSet<CommunityId>,
    pub covered_population: u64,
    pub total_response_time: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverChange {
    pub community: CommunityId,
    pub from: Option<HospitalId>,
    pub to: Option<HospitalId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverUpdate<T> {
    pub assignment: CoverAssignment<T>,
    pub changes: Vec<CoverChange>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("coverage threshold must be positive")]
    InvalidThreshold,
    #[error("community {0:?} has zero population")]
    EmptyCommunity(CommunityId),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error(
        "instance with {hospitals} hospitals and {communities} communities exceeds exact bounds"
    )]
    TooLarge {
        hospitals: usize,
        communities: usize,
    },
    #[error("previous assignment covers a different community set")]
    MismatchedUpdate,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Evo(#[from] EvoError),
}

impl<T: Scalar> CoverInstance<T> {
    pub fn validate(&self, net: &TimeDependentNetwork<T>) -> Result<(), CoverError> {
        if !(self.threshold > T::zero()) || !self.threshold.is_finite_value() {
            return Err(CoverError::InvalidThreshold);
        }
        let mut hs = BTreeSet::new();
        for h in &self.hospitals {
            net.check_node(h.location)?;
            if !hs.insert(h.id) {
                return Err(CoverError::DuplicateId(format!("hospital {}", h.id.0)));
            }
        }
        let mut cs = BTreeSet::new();
        for c in &self.communities {
            net.check_node(c.location)?;
            if c.population == 0 {
                return Err(CoverError::EmptyCommunity(c.id));
            }
            if !cs.insert(c.id) {
                return Err(CoverError::DuplicateId(format!("community {}", c.id.0)));
            }
        }
        Ok(())
    }

    pub fn within_exact_bounds(&self) -> bool {
        self.hospitals.len() <= EXACT_MAX_HOSPITALS
            && self.communities.len() <= EXACT_MAX_COMMUNITIES
    }

    fn sorted(&self) -> (Vec<Hospital>, Vec<Community>) {
        let mut hospitals = self.hospitals.clone();
        hospitals.sort_by_key(|h| h.id);
        let mut communities = self.communities.clone();
        communities.sort_by_key(|c| c.id);
        (hospitals, communities)
    }
}

/// Hospital-by-community response times, `None` where beyond the threshold or
/// unreachable.
struct Admissible<T> {
    hospitals: Vec<Hospital>,
    communities: Vec<Community>,
    time: Vec<Vec<Option<T>>>,
}

impl<T: Scalar> Admissible<T> {
    fn build(net: &TimeDependentNetwork<T>, inst: &CoverInstance<T>, instant: T) -> Self {
        let (hospitals, communities) = inst.sorted();
        let tt = TravelTimes::new(net);
        let time = hospitals
            .iter()
            .map(|h| {
                communities
                    .iter()
                    .map(|c| {
                        let rt = tt.arrival(h.location, c.location, instant)? - instant;
                        (rt <= inst.threshold).then_some(rt)
                    })
                    .collect()
            })
            .collect();
        Self {
            hospitals,
            communities,
            time,
        }
    }

    fn options(&self, c: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (0..self.hospitals.len()).filter_map(move |h| self.time[h][c].map(|t| (h, t)))
    }

    /// Objective of a full choice vector (hospital index per community).
    /// Response times are summed in community order.
    fn score(&self, choice: &[Option<usize>]) -> (u64, T) {
        let mut covered = 0;
        let mut total = T::zero();
        for (c, h) in choice.iter().enumerate() {
            if let Some(h) = *h {
                covered += self.communities[c].population;
                total = total + self.time[h][c].expect("admissible pair");
            }
        }
        (covered, total)
    }

    fn feasible(&self, choice: &[Option<usize>]) -> bool {
        let mut load = vec![0u64; self.hospitals.len()];
        for (c, h) in choice.iter().enumerate() {
            if let Some(h) = *h {
                if self.time[h][c].is_none() {
                    return false;
                }
                load[h] += self.communities[c].population;
            }
        }
        load.iter()
            .zip(&self.hospitals)
            .all(|(l, h)| *l <= h.capacity)
    }

    /// Sorted (hospital id, community id) pairs, the final tie-break.
    fn pair_key(&self, choice: &[Option<usize>]) -> Vec<(HospitalId, CommunityId)> {
        let mut pairs: Vec<_> = choice
            .iter()
            .enumerate()
            .filter_map(|(c, h)| h.map(|h| (self.hospitals[h].id, self.communities[c].id)))
            .collect();
        pairs.sort();
        pairs
    }

    fn better(&self, a: &[Option<usize>], b: &[Option<usize>]) -> bool {
        let (ca, ta) = self.score(a);
        let (cb, tb) = self.score(b);
        match cb.cmp(&ca) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => match ta.total_cmp(&tb) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => self.pair_key(a) < self.pair_key(b),
            },
        }
    }

    fn into_assignment(&self, choice: &[Option<usize>], instant: T) -> CoverAssignment<T> {
        let (covered_population, total_response_time) = self.score(choice);
        let mut assignment = BTreeMap::new();
        let mut uncovered = BTreeSet::new();
        for (c, h) in choice.iter().enumerate() {
            match h {
                Some(h) => {
                    assignment.insert(self.communities[c].id, self.hospitals[*h].id);
                }
                None => {
                    uncovered.insert(self.communities[c].id);
                }
            }
        }
        CoverAssignment {
            instant,
            assignment,
            uncovered,
            covered_population,
            total_response_time,
        }
    }
}

/// Depth-first branch and bound over communities in id order.
struct BranchAndBound<'a, T> {
    adm: &'a Admissible<T>,
    /// Population of communities `c..` that have at least one admissible hospital.
    coverable_suffix: Vec<u64>,
    choice: Vec<Option<usize>>,
    load: Vec<u64>,
    best: Option<Vec<Option<usize>>>,
    best_score: (u64, T),
}

impl<T: Scalar> BranchAndBound<'_, T> {
    fn run(adm: &Admissible<T>) -> Vec<Option<usize>> {
        let n = adm.communities.len();
        let mut coverable_suffix = vec![0u64; n + 1];
        for c in (0..n).rev() {
            let coverable = adm.options(c).next().is_some();
            coverable_suffix[c] = coverable_suffix[c + 1]
                + if coverable {
                    adm.communities[c].population
                } else {
                    0
                };
        }
        let mut bb = BranchAndBound {
            adm,
            coverable_suffix,
            choice: Vec::with_capacity(n),
            load: vec![0; adm.hospitals.len()],
            best: None,
            best_score: (0, T::zero()),
        };
        bb.search(0, 0, T::zero());
        bb.best.expect("the all-uncovered leaf is always reached")
    }

    fn search(&mut self, c: usize, covered: u64, time: T) {
        if self.best.is_some() {
            let (bc, bt) = self.best_score;
            let bound = covered + self.coverable_suffix[c];
            if bound < bc || (bound == bc && time > bt) {
                return;
            }
        }
        if c == self.adm.communities.len() {
            let replace = match &self.best {
                None => true,
                Some(b) => self.adm.better(&self.choice, b),
            };
            if replace {
                self.best = Some(self.choice.clone());
                self.best_score = (covered, time);
            }
            return;
        }
        let pop = self.adm.communities[c].population;
        let opts: Vec<(usize, T)> = self.adm.options(c).collect();
        for (h, t) in opts {
            if self.load[h] + pop > self.adm.hospitals[h].capacity {
                continue;
            }
            self.load[h] += pop;
            self.choice.push(Some(h));
            self.search(c + 1, covered + pop, time + t);
            self.choice.pop();
            self.load[h] -= pop;
        }
        self.choice.push(None);
        self.search(c + 1, covered, time);
        self.choice.pop();
    }
}

/// Largest communities first, each to its fastest admissible hospital with room.
fn greedy<T: Scalar>(adm: &Admissible<T>) -> Vec<Option<usize>> {
    let mut choice = vec![None; adm.communities.len()];
    fill_greedily(adm, &mut choice);
    choice
}

fn fill_greedily<T: Scalar>(adm: &Admissible<T>, choice: &mut [Option<usize>]) {
    let mut load = vec![0u64; adm.hospitals.len()];
    for (c, h) in choice.iter().enumerate() {
        if let Some(h) = h {
            load[*h] += adm.communities[c].population;
        }
    }
    let mut order: Vec<usize> = (0..adm.communities.len())
        .filter(|&c| choice[c].is_none())
        .collect();
    order.sort_by_key(|&c| (Reverse(adm.communities[c].population), c));
    for c in order {
        let pop = adm.communities[c].population;
        let pick = adm
            .options(c)
            .filter(|&(h, _)| load[h] + pop <= adm.hospitals[h].capacity)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((h, _)) = pick {
            load[h] += pop;
            choice[c] = Some(h);
        }
    }
}

struct CoverProblem<'a, T> {
    adm: &'a Admissible<T>,
}

impl<T: Scalar> Problem for CoverProblem<'_, T> {
    type Genome = Vec<Option<usize>>;
    type Fitness = (Reverse<u64>, T);

    fn fitness(&self, g: &Self::Genome) -> Self::Fitness {
        let (c, t) = self.adm.score(g);
        (Reverse(c), t)
    }

    fn crossover(&self, a: &Self::Genome, b: &Self::Genome, rng: &mut EvoRng) -> Self::Genome {
        a.iter()
            .zip(b)
            .map(|(x, y)| if rng.random_bool(0.5) { *x } else { *y })
            .collect()
    }

    fn mutate(&self, g: &mut Self::Genome, rng: &mut EvoRng) {
        if g.is_empty() {
            return;
        }
        let c = rng.random_range(0..g.len());
        let opts: Vec<usize> = self.adm.options(c).map(|(h, _)| h).collect();
        let k = rng.random_range(0..=opts.len());
        g[c] = opts.get(k).copied();
    }

    /// Drops inadmissible pairs and capacity overflow (in community order),
    /// then refills uncovered communities greedily.
    fn repair(&self, g: &mut Self::Genome) {
        let mut load = vec![0u64; self.adm.hospitals.len()];
        for (c, slot) in g.iter_mut().enumerate() {
            if let Some(h) = *slot {
                let pop = self.adm.communities[c].population;
                if self.adm.time[h][c].is_none() || load[h] + pop > self.adm.hospitals[h].capacity {
                    *slot = None;
                } else {
                    load[h] += pop;
                }
            }
        }
        fill_greedily(self.adm, g);
    }
}

#[derive(Debug, Clone, Default)]
pub struct CoverOptions {
    pub mode: SolverMode,
    pub evo: EvoConfig,
}

/// Solves the covering problem at `instant`.
pub fn solve_accp<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &CoverInstance<T>,
    instant: T,
    opts: &CoverOptions,
) -> Result<CoverAssignment<T>, CoverError> {
    solve_accp_traced(net, inst, instant, opts).map(|(a, _)| a)
}

/// [`solve_accp`] also reporting which search produced the answer.
pub fn solve_accp_traced<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &CoverInstance<T>,
    instant: T,
    opts: &CoverOptions,
) -> Result<(CoverAssignment<T>, SolveInfo), CoverError> {
    inst.validate(net)?;
    let adm = Admissible::build(net, inst, instant);
    let exact = match opts.mode {
        SolverMode::Exact if !inst.within_exact_bounds() => {
            return Err(CoverError::TooLarge {
                hospitals: inst.hospitals.len(),
                communities: inst.communities.len(),
            })
        }
        SolverMode::Exact => true,
        SolverMode::Auto => inst.within_exact_bounds(),
        SolverMode::Evo | SolverMode::Greedy => false,
    };
    let (choice, info) = if exact {
        (BranchAndBound::run(&adm), SolveInfo::exact())
    } else if opts.mode == SolverMode::Greedy {
        (greedy(&adm), SolveInfo::greedy())
    } else {
        let seed = greedy(&adm);
        let problem = CoverProblem { adm: &adm };
        let out = evolve(&opts.evo, vec![seed.clone()], &problem)?;
        let info = SolveInfo {
            mode: SolverMode::Evo,
            history: out
                .history
                .iter()
                .map(|(c, t)| vec![c.0 as f64, t.as_f64()])
                .collect(),
        };
        let best = if adm.better(&out.best, &seed) {
            out.best
        } else {
            seed
        };
        (best, info)
    };
    debug_assert!(adm.feasible(&choice));
    Ok((adm.into_assignment(&choice, instant), info))
}

/// Re-solves on an updated network and instant, reporting moved communities.
pub fn resolve_on_update<T: Scalar>(
    prev: &CoverAssignment<T>,
    net: &TimeDependentNetwork<T>,
    inst: &CoverInstance<T>,
    instant: T,
    opts: &CoverOptions,
) -> Result<CoverUpdate<T>, CoverError> {
    let ids: BTreeSet<CommunityId> = inst.communities.iter().map(|c| c.id).collect();
    let prev_ids: BTreeSet<CommunityId> = prev
        .assignment
        .keys()
        .chain(prev.uncovered.iter())
        .copied()
        .collect();
    if ids != prev_ids {
        return Err(CoverError::MismatchedUpdate);
    }
    let assignment = solve_accp(net, inst, instant, opts)?;
    let changes = ids
        .iter()
        .filter_map(|&c| {
            let from = prev.assignment.get(&c).copied();
            let to = assignment.assignment.get(&c).copied();
            (from != to).then_some(CoverChange {
                community: c,
                from,
                to,
            })
        })
        .collect();
    Ok(CoverUpdate {
        assignment,
        changes,
    })
}

/// Checks capacity, threshold and partition invariants of an assignment.
pub fn check_assignment<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &CoverInstance<T>,
    a: &CoverAssignment<T>,
) -> Result<(), String> {
    let hospitals: BTreeMap<_, _> = inst.hospitals.iter().map(|h| (h.id, h)).collect();
    let mut load: BTreeMap<HospitalId, u64> = BTreeMap::new();
    for c in &inst.communities {
        let assigned = a.assignment.get(&c.id);
        let uncovered = a.uncovered.contains(&c.id);
        if assigned.is_some() == uncovered {
            return Err(format!(
                "community {:?} must be exactly one of assigned/uncovered",
                c.id
            ));
        }
        if let Some(hid) = assigned {
            let h = hospitals
                .get(hid)
                .ok_or(format!("unknown hospital {hid:?}"))?;
            let rt = net
                .shortest_time_path(h.location, c.location, a.instant)
                .map_err(|e| e.to_string())?
                .travel_time();
            if rt > inst.threshold {
                return Err(format!("community {:?} beyond threshold", c.id));
            }
            *load.entry(*hid).or_default() += c.population;
        }
    }
    for (hid, l) in load {
        if l > hospitals[&hid].capacity {
            return Err(format!("hospital {hid:?} over capacity"));
        }
    }
    Ok(())
}
