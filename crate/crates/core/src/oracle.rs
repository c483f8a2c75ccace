//! Brute-force reference solvers for small instances.
//!
//! Each one enumerates its whole search space and evaluates candidates from
//! scratch with plain path queries, sharing no search or evaluation code
//! with the production solvers. They exist to check those solvers.

use std::collections::HashMap;

use crate::busevac::{Boarding, EbpdInstance};
use crate::cover::CoverInstance;
use crate::dispatch::{DeliveryPolicy, DispatchInstance, Group, ServiceTimes};
use crate::net::{NodeId, TimeDependentNetwork};
use crate::scalar::Scalar;

/// Earliest arrival over every simple path, by depth-first enumeration.
pub fn tdsp_brute<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    origin: NodeId,
    dest: NodeId,
    departure: T,
) -> Option<T> {
    fn walk<T: Scalar>(
        net: &TimeDependentNetwork<T>,
        at: NodeId,
        t: T,
        dest: NodeId,
        seen: &mut Vec<bool>,
        best: &mut Option<T>,
    ) {
        if at == dest {
            if best.is_none_or(|b| t < b) {
                *best = Some(t);
            }
            return;
        }
        for arc in net.arcs() {
            if arc.from != at || arc.blocked || seen[arc.to.index()] {
                continue;
            }
            let next = t + arc.profile.evaluate(t);
            seen[arc.to.index()] = true;
            walk(net, arc.to, next, dest, seen, best);
            seen[arc.to.index()] = false;
        }
    }
    let mut seen = vec![false; net.node_count()];
    seen[origin.index()] = true;
    let mut best = None;
    walk(net, origin, departure, dest, &mut seen, &mut best);
    best
}

/// Memoized point-to-point arrival queries.
struct Arrivals<'a, T> {
    net: &'a TimeDependentNetwork<T>,
    memo: HashMap<(NodeId, NodeId, u128), Option<T>>,
}

impl<'a, T: Scalar> Arrivals<'a, T> {
    fn new(net: &'a TimeDependentNetwork<T>) -> Self {
        Self {
            net,
            memo: HashMap::new(),
        }
    }

    fn get(&mut self, from: NodeId, to: NodeId, t: T) -> Option<T> {
        let net = self.net;
        *self
            .memo
            .entry((from, to, t.hash_key()))
            .or_insert_with(|| net.shortest_time_path(from, to, t).ok().map(|p| p.arrival))
    }
}

/// Best (covered population, total response time) over all `(H+1)^C`
/// assignments.
pub fn accp_brute<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &CoverInstance<T>,
    instant: T,
) -> (u64, T) {
    let mut hospitals = inst.hospitals.clone();
    hospitals.sort_by_key(|h| h.id);
    let mut communities = inst.communities.clone();
    communities.sort_by_key(|c| c.id);
    let mut q = Arrivals::new(net);
    let rt: Vec<Vec<Option<T>>> = hospitals
        .iter()
        .map(|h| {
            communities
                .iter()
                .map(|c| q.get(h.location, c.location, instant).map(|a| a - instant))
                .collect()
        })
        .collect();
    let nh = hospitals.len();
    let nc = communities.len();
    let mut best: (u64, T) = (0, T::zero());
    let mut digits = vec![0usize; nc];
    loop {
        let mut load = vec![0u64; nh];
        let mut ok = true;
        let mut covered = 0;
        let mut total = T::zero();
        for (c, &d) in digits.iter().enumerate() {
            if d == nh {
                continue;
            }
            match rt[d][c] {
                Some(t) if t <= inst.threshold => {
                    load[d] += communities[c].population;
                    covered += communities[c].population;
                    total = total + t;
                }
                _ => ok = false,
            }
        }
        ok &= load.iter().zip(&hospitals).all(|(l, h)| *l <= h.capacity);
        if ok && (covered > best.0 || (covered == best.0 && total < best.1)) {
            best = (covered, total);
        }
        // Next assignment in base H+1.
        let mut i = 0;
        while i < nc && digits[i] == nh {
            digits[i] = 0;
            i += 1;
        }
        if i == nc {
            break;
        }
        digits[i] += 1;
    }
    best
}

/// Best (max wait, total wait) over every assignment of patients to
/// ambulances and every visiting order. `None` if no schedule is reachable.
pub fn dispatch_brute<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &DispatchInstance<T>,
    service: &ServiceTimes<T>,
    delivery: DeliveryPolicy,
) -> Option<(T, T)> {
    let mut hospitals = inst.hospitals.clone();
    hospitals.sort_by_key(|h| h.id);
    let bases: Vec<NodeId> = hospitals
        .iter()
        .flat_map(|h| std::iter::repeat_n(h.location, h.ambulances as usize))
        .collect();
    let mut patients = inst.patients.clone();
    patients.sort_by_key(|p| p.id);
    let na = bases.len();
    let np = patients.len();
    if np == 0 {
        return Some((T::zero(), T::zero()));
    }
    if na == 0 {
        return None;
    }
    let mut q = Arrivals::new(net);
    let mut best: Option<(T, T)> = None;

    // Waits of one ambulance serving `order`, or `None` if a leg fails.
    let run = |q: &mut Arrivals<T>, base: NodeId, order: &[usize]| -> Option<Vec<T>> {
        let mut at = base;
        let mut t = inst.t0;
        let mut waits = Vec::new();
        for &i in order {
            let p = &patients[i];
            let arrive = q.get(at, p.location, t)?;
            let start = if arrive > p.onset { arrive } else { p.onset };
            waits.push(start - p.onset);
            match p.group {
                Group::Slight => {
                    at = p.location;
                    t = start + service.on_site;
                }
                Group::Serious => {
                    let leave = start + service.pickup;
                    let (h_at, h_time) = match delivery {
                        DeliveryPolicy::HomeHospital => (base, q.get(p.location, base, leave)?),
                        DeliveryPolicy::NearestHospital => {
                            let mut pick: Option<(NodeId, T)> = None;
                            for h in &hospitals {
                                if let Some(a) = q.get(p.location, h.location, leave) {
                                    if pick.is_none_or(|(_, b)| a < b) {
                                        pick = Some((h.location, a));
                                    }
                                }
                            }
                            pick?
                        }
                    };
                    at = h_at;
                    t = h_time + service.handover;
                }
            }
        }
        Some(waits)
    };

    let mut owner = vec![0usize; np];
    loop {
        let groups: Vec<Vec<usize>> = (0..na)
            .map(|a| (0..np).filter(|&i| owner[i] == a).collect())
            .collect();
        // All orderings of every group, as a mixed-radix product.
        let mut orders: Vec<Vec<usize>> = groups.clone();
        'perm: loop {
            let mut waits: Vec<(usize, T)> = Vec::new();
            let mut ok = true;
            for (a, ord) in orders.iter().enumerate() {
                match run(&mut q, bases[a], ord) {
                    Some(w) => waits.extend(ord.iter().copied().zip(w)),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let max = waits
                    .iter()
                    .fold(T::zero(), |m, &(_, w)| if w > m { w } else { m });
                let total = waits.iter().fold(T::zero(), |s, &(_, w)| s + w);
                if best.is_none_or(|(bm, bt)| max < bm || (max == bm && total < bt)) {
                    best = Some((max, total));
                }
            }
            for ord in orders.iter_mut() {
                if next_permutation(ord) {
                    continue 'perm;
                }
            }
            break;
        }
        let mut i = 0;
        while i < np && owner[i] + 1 == na {
            owner[i] = 0;
            i += 1;
        }
        if i == np {
            break;
        }
        owner[i] += 1;
    }
    best
}

/// Advances to the next lexicographic permutation; on the last one, resets
/// to the first and returns `false`.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Best (evacuated, completion) over every valid bus plan.
///
/// Plans are grown one visit at a time, and a visit may only be appended if
/// it becomes the last one processed when the whole plan is re-simulated
/// from the start; every valid plan is thus generated exactly once.
pub fn ebpd_brute<T: Scalar>(
    net: &TimeDependentNetwork<T>,
    inst: &EbpdInstance<T>,
    boarding: &Boarding<T>,
) -> (u32, T) {
    let mut depots = inst.depots.clone();
    depots.sort_by_key(|d| d.id);
    let buses: Vec<(NodeId, u32)> = depots
        .iter()
        .flat_map(|d| std::iter::repeat_n((d.location, d.bus_capacity), d.fleet as usize))
        .collect();
    let mut pickups = inst.pickups.clone();
    pickups.sort_by_key(|p| p.id);
    let mut shelters = inst.shelters.clone();
    shelters.sort_by_key(|s| s.id);
    // (node, Some(pickup index) | None for shelter, shelter index)
    let sites: Vec<(NodeId, Option<usize>, usize)> = pickups
        .iter()
        .enumerate()
        .map(|(i, p)| (p.location, Some(i), 0))
        .chain(
            shelters
                .iter()
                .enumerate()
                .map(|(j, s)| (s.location, None, j)),
        )
        .collect();

    struct Outcome<T> {
        last: (usize, usize),
        empty: bool,
        evacuated: u32,
        completion: T,
    }

    let mut q = Arrivals::new(net);
    let simulate = |q: &mut Arrivals<T>, routes: &[Vec<usize>]| -> Option<Outcome<T>> {
        let mut demand: Vec<u32> = pickups.iter().map(|p| p.demand).collect();
        let mut room: Vec<u32> = shelters.iter().map(|s| s.capacity).collect();
        let mut pos: Vec<(NodeId, T, u32, usize)> =
            buses.iter().map(|&(n, _)| (n, inst.t0, 0, 0)).collect();
        let mut last = (usize::MAX, usize::MAX);
        let mut evacuated = 0;
        let mut completion = inst.t0;
        loop {
            let mut pick: Option<(T, usize)> = None;
            for (b, r) in routes.iter().enumerate() {
                let (at, t, _, k) = pos[b];
                if k < r.len() {
                    let arr = q.get(at, sites[r[k]].0, t)?;
                    if pick.is_none_or(|(pt, _)| arr < pt) {
                        pick = Some((arr, b));
                    }
                }
            }
            let Some((arr, b)) = pick else { break };
            if arr > inst.deadline {
                return None;
            }
            let (_, _, onboard, k) = pos[b];
            let (node, pickup, shelter) = sites[routes[b][k]];
            let (moved, depart, onboard) = match pickup {
                Some(i) => {
                    let n = demand[i]
                        .min(pickups[i].boarding_cap)
                        .min(buses[b].1 - onboard);
                    demand[i] -= n;
                    let dwell =
                        boarding.dwell + boarding.per_evacuee * T::from_u32(n).expect("small");
                    (n, arr + dwell, onboard + n)
                }
                None => {
                    let n = onboard.min(room[shelter]);
                    room[shelter] -= n;
                    evacuated += n;
                    if n > 0 && arr > completion {
                        completion = arr;
                    }
                    (n, arr, onboard - n)
                }
            };
            if moved == 0 {
                return None;
            }
            pos[b] = (node, depart, onboard, k + 1);
            last = (b, k);
        }
        Some(Outcome {
            last,
            empty: pos.iter().all(|p| p.2 == 0),
            evacuated,
            completion,
        })
    };

    let mut best = (0u32, inst.t0);
    let mut routes: Vec<Vec<usize>> = vec![Vec::new(); buses.len()];
    // Explicit stack of (bus, next site to try, bus appended to on entry).
    let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(0, 0, None)];
    while let Some(frame) = stack.last_mut() {
        let (b, s, via) = *frame;
        if b == buses.len() {
            stack.pop();
            if let Some(pb) = via {
                routes[pb].pop();
            }
            continue;
        }
        *frame = if s + 1 == sites.len() {
            (b + 1, 0, via)
        } else {
            (b, s + 1, via)
        };
        routes[b].push(s);
        match simulate(&mut q, &routes) {
            Some(o) if o.last == (b, routes[b].len() - 1) => {
                if o.empty
                    && (o.evacuated > best.0 || (o.evacuated == best.0 && o.completion < best.1))
                {
                    best = (o.evacuated, o.completion);
                }
                stack.push((0, 0, Some(b)));
            }
            _ => {
                routes[b].pop();
            }
        }
    }
    best
}
