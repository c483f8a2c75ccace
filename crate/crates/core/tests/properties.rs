//! Property tests for the invariants each module promises.

mod common;

use std::collections::BTreeSet;

use common::*;
use evac_core::busevac::{self, better_objective, solve_ebpd, Boarding, EbpdOptions, SiteRef};
use evac_core::ccu::{
    departments_for, Classification, Classifier, Department, EmergencyType, IncidentId,
    IncidentMessage, Level, NotificationBus, RuleClassifier, Scene,
};
use evac_core::cover::{check_assignment, solve_accp, CoverOptions};
use evac_core::dispatch::{self, solve_group_dispatch, DispatchOptions, ServiceTimes};
use evac_core::evo::{evolve, EvoConfig, EvoRng, Problem, SolverMode};
use evac_core::net::{ArcId, NetworkBuilder, NodeId, Penalties};
use evac_core::oracle::{accp_brute, dispatch_brute, ebpd_brute, tdsp_brute};
use evac_core::signal::{
    glosa_advise, priority_score, Advice, ApproachingVehicle, BusAttributes, ControllerConfig,
    Phase, PhaseId, PreemptionRequest, PriorityWeights, ServiceEvent, SignalController, SignalPlan,
    VehicleClass, VehicleId,
};
use evac_core::{Exact, Scalar};
use proptest::prelude::*;
use rand::Rng;

fn small_evo(seed: u64) -> EvoConfig {
    EvoConfig {
        population_size: 16,
        generations: 30,
        seed,
        ..EvoConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn profiles_keep_fifo(seed in any::<u64>(), a in 0u32..86_400, b in 0u32..86_400) {
        let mut r = rng(seed);
        let p = random_profile::<f64>(&mut r, 86_400, 5, 900);
        let (t1, t2) = (a.min(b) as f64, a.max(b) as f64);
        prop_assert!(t1 + p.evaluate(t1) <= t2 + p.evaluate(t2));
    }

    #[test]
    fn exact_profiles_keep_fifo(seed in any::<u64>(), a in 0u32..3_600, b in 0u32..3_600) {
        let mut r = rng(seed);
        let p = random_profile::<Exact>(&mut r, 3_600, 5, 300);
        let (t1, t2) = (Exact::from_integer(a.min(b) as i64), Exact::from_integer(a.max(b) as i64));
        prop_assert!(t1 + p.evaluate(t1) <= t2 + p.evaluate(t2));
    }

    #[test]
    fn search_matches_enumeration(seed in any::<u64>(), o in 0u32..6, d in 0u32..6, dep in 0u32..3_600) {
        let mut r = rng(seed);
        let net = random_network::<Exact>(&mut r, 6, 14, 3_600);
        let dep = Exact::from_integer(dep as i64);
        let got = net.shortest_time_path(NodeId(o), NodeId(d), dep).ok().map(|p| p.arrival);
        prop_assert_eq!(got, tdsp_brute(&net, NodeId(o), NodeId(d), dep));
    }

    #[test]
    fn later_departure_never_arrives_earlier(seed in any::<u64>(), o in 0u32..7, d in 0u32..7, a in 0u32..7_200, b in 0u32..7_200) {
        let mut r = rng(seed);
        let net = connected_network::<f64>(&mut r, 7, 5, 3_600);
        let early = net.shortest_time_path(NodeId(o), NodeId(d), a.min(b) as f64).unwrap();
        let late = net.shortest_time_path(NodeId(o), NodeId(d), a.max(b) as f64).unwrap();
        prop_assert!(early.arrival <= late.arrival);
    }

    #[test]
    fn contraflow_twice_is_identity(seed in any::<u64>(), pick in 0usize..8) {
        let mut r = rng(seed);
        let mut b = NetworkBuilder::<f64>::with_nodes(5);
        let mut ids = Vec::new();
        for _ in 0..8 {
            let from = r.random_range(0..5);
            let to = (from + r.random_range(1..5)) % 5;
            ids.push(b.reversible_arc(from, to, random_profile(&mut r, 3_600, 10, 200)));
        }
        let net = b.build().unwrap();
        let one: BTreeSet<ArcId> = [ids[pick]].into();
        let back = net.apply_contraflow(&one).unwrap().apply_contraflow(&one).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn unit_penalties_change_nothing(seed in any::<u64>(), o in 0u32..6, d in 0u32..6, dep in 0u32..3_600) {
        let mut r = rng(seed);
        let net = random_network::<f64>(&mut r, 6, 14, 3_600);
        let ones = Penalties::from_pairs(net.arcs().iter().map(|a| (a.id, 1.0))).unwrap();
        let plain = net.shortest_time_path(NodeId(o), NodeId(d), dep as f64);
        let penalized = net.reroute_query(NodeId(o), NodeId(d), dep as f64, &ones);
        prop_assert_eq!(plain, penalized);
    }
}

fn tokens() -> Vec<&'static str> {
    RuleClassifier::default().tokens().collect()
}

fn message(id: u64, timestamp: u32, condition: &str) -> IncidentMessage {
    IncidentMessage {
        id: IncidentId(id),
        timestamp: timestamp as f64,
        scene: Scene::Road,
        location: NodeId(0),
        condition: condition.into(),
        population_impacted: 0,
        congestion: None,
        attachment: None,
    }
}

#[test]
fn every_classification_reaches_a_department() {
    use EmergencyType::*;
    for emergency_type in [Medical, Traffic, Fire, Attack] {
        for level in [Level::Major, Level::Minor] {
            let cls = Classification {
                emergency_type,
                level,
            };
            assert!(!departments_for(cls).is_empty(), "{cls:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn classification_is_pure(k in 0usize..64, id in any::<u64>(), ts in 0u32..10_000) {
        let all = tokens();
        let m = message(id, ts, all[k % all.len()]);
        let c = RuleClassifier::default();
        prop_assert_eq!(c.classify(&m), c.classify(&m.clone()));
    }

    #[test]
    fn queues_stay_ordered(events in prop::collection::vec((0u32..50, 0usize..64), 1..40)) {
        let all = tokens();
        let mut bus = NotificationBus::default();
        for (i, &(ts, k)) in events.iter().enumerate() {
            // Ids run against arrival order so ties exercise the id rule.
            let id = (events.len() - i) as u64;
            bus.ingest(message(id, ts, all[k % all.len()])).unwrap();
        }
        for d in Department::ALL {
            let keys: Vec<(u32, u64)> = bus
                .queue(d)
                .iter()
                .map(|n| (n.payload.timestamp as u32, n.incident.0))
                .collect();
            prop_assert!(keys.windows(2).all(|w| w[0] < w[1]), "{:?}: {:?}", d, keys);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coverage_is_feasible_and_optimal(seed in any::<u64>(), instant in 0u32..3_600) {
        let mut r = rng(seed);
        let net = connected_network::<f64>(&mut r, 6, 4, 3_600);
        let inst = cover_instance(&mut r, 6, 4, 8);
        let a = solve_accp(&net, &inst, instant as f64, &CoverOptions::default()).unwrap();
        prop_assert_eq!(check_assignment(&net, &inst, &a), Ok(()));
        prop_assert_eq!((a.covered_population, a.total_response_time), accp_brute(&net, &inst, instant as f64));
    }

    #[test]
    fn dispatch_plans_replay_and_are_optimal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = connected_network::<f64>(&mut r, 6, 4, 3_600);
        let a = r.random_range(1..=2);
        let b = r.random_range(1..=3);
        let inst = dispatch_instance(&mut r, 6, a, b);
        let opts = DispatchOptions::default();
        let p = solve_group_dispatch(&net, &inst, &opts).unwrap();
        prop_assert_eq!(dispatch::check_plan(&net, &inst, &p, &opts.service), Ok(()));
        let want = dispatch_brute(&net, &inst, &opts.service, opts.delivery);
        prop_assert_eq!(want, Some((p.objective, p.total_wait)));
    }

    #[test]
    fn evo_dispatch_never_loses_to_greedy(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = connected_network::<f64>(&mut r, 8, 6, 3_600);
        let a = r.random_range(1..=4);
        let b = r.random_range(1..=7);
        let inst = dispatch_instance(&mut r, 8, a, b);
        let greedy = DispatchOptions { mode: SolverMode::Greedy, ..DispatchOptions::default() };
        let evo = DispatchOptions { mode: SolverMode::Evo, evo: small_evo(seed), ..DispatchOptions::default() };
        let g = solve_group_dispatch(&net, &inst, &greedy).unwrap();
        let e = solve_group_dispatch(&net, &inst, &evo).unwrap();
        prop_assert_eq!(dispatch::check_plan(&net, &inst, &e, &ServiceTimes::default()), Ok(()));
        prop_assert!(e.objective <= g.objective);
    }

    #[test]
    fn evacuation_plans_conserve_and_are_optimal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = connected_network::<f64>(&mut r, 6, 4, 3_600);
        let a = r.random_range(1..=2);
        let b = r.random_range(1..=3);
        let c = r.random_range(1..=2);
        let inst = ebpd_instance(&mut r, 6, a, b, c);
        let p = solve_ebpd(&net, &inst, &EbpdOptions::default()).unwrap();
        let boarding = Boarding::default();
        prop_assert_eq!(busevac::check_plan(&net, &inst, &p, &boarding), Ok(()));
        prop_assert_eq!(p.objective(), ebpd_brute(&net, &inst, &boarding));
    }

    #[test]
    fn evacuation_counts_add_up(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = connected_network::<f64>(&mut r, 8, 6, 3_600);
        let a = r.random_range(1..=3);
        let b = r.random_range(1..=5);
        let c = r.random_range(1..=3);
        let inst = ebpd_instance(&mut r, 8, a, b, c);
        let opts = EbpdOptions { mode: SolverMode::Evo, evo: small_evo(seed), ..EbpdOptions::default() };
        let p = solve_ebpd(&net, &inst, &opts).unwrap();
        prop_assert_eq!(busevac::check_plan(&net, &inst, &p, &opts.boarding), Ok(()));
        let boarded: u64 = p.routes.iter().flat_map(|r| &r.visits).map(|v| v.boarded as u64).sum();
        let alighted: u64 = p.routes.iter().flat_map(|r| &r.visits).map(|v| v.alighted as u64).sum();
        let unserved: u64 = p.unserved.values().map(|&u| u as u64).sum();
        prop_assert_eq!(boarded, alighted);
        prop_assert_eq!(boarded, p.total_evacuated as u64);
        prop_assert_eq!(unserved + boarded, inst.total_demand());
        for route in &p.routes {
            prop_assert!(route.visits.iter().all(|v| v.onboard <= route.capacity && v.arrival <= inst.deadline));
            prop_assert_eq!(route.visits.last().map_or(0, |v| v.onboard), 0);
        }
        for s in &inst.shelters {
            let intake: u32 = p
                .routes
                .iter()
                .flat_map(|r| &r.visits)
                .filter(|v| v.site == SiteRef::Shelter(s.id))
                .map(|v| v.alighted)
                .sum();
            prop_assert!(intake <= s.capacity);
        }
        let greedy = solve_ebpd(&net, &inst, &EbpdOptions { mode: SolverMode::Greedy, ..EbpdOptions::default() }).unwrap();
        prop_assert!(!better_objective(greedy.objective(), p.objective()));
    }
}

/// Minimizes the number of positions where a permutation disagrees with
/// the identity, then the position sum of element 0.
struct Sorting(usize);

impl Problem for Sorting {
    type Genome = Vec<usize>;
    type Fitness = (usize, usize);

    fn fitness(&self, g: &Vec<usize>) -> (usize, usize) {
        let wrong = g.iter().enumerate().filter(|(i, v)| i != *v).count();
        (wrong, g.iter().position(|&v| v == 0).unwrap_or(0))
    }

    fn crossover(&self, a: &Vec<usize>, b: &Vec<usize>, rng: &mut EvoRng) -> Vec<usize> {
        evac_core::evo::order_crossover(a, b, rng)
    }

    fn mutate(&self, g: &mut Vec<usize>, rng: &mut EvoRng) {
        evac_core::evo::swap_mutation(g, rng);
    }

    fn repair(&self, g: &mut Vec<usize>) {
        let mut seen = vec![false; self.0];
        g.retain(|&v| v < self.0 && !std::mem::replace(&mut seen[v], true));
        g.extend((0..self.0).filter(|&v| !seen[v]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evolution_is_elitist_deterministic_and_closed(seed in any::<u64>(), n in 2usize..12, pop in 4usize..20, gens in 1usize..40) {
        let problem = Sorting(n);
        let config = EvoConfig { population_size: pop, generations: gens, seed, elitism: 1 + (seed as usize % (pop - 1)), ..EvoConfig::default() };
        let start: Vec<usize> = (0..n).rev().collect();
        let a = evolve(&config, vec![start.clone()], &problem).unwrap();
        let b = evolve(&config, vec![start], &problem).unwrap();
        prop_assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(&a.best, &b.best);
        prop_assert_eq!(&a.history, &b.history);
        let mut sorted = a.best.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }
}

fn two_phase_plan<T: Scalar>(g0: u32, g1: u32, i0: u32, i1: u32, offset: u32) -> SignalPlan<T> {
    let lit = |x: u32| T::lit(x as f64);
    SignalPlan::new(
        vec![
            Phase {
                id: PhaseId(0),
                approaches: vec![0, 2],
                green: lit(g0),
                intergreen: lit(i0),
            },
            Phase {
                id: PhaseId(1),
                approaches: vec![1],
                green: lit(g1),
                intergreen: lit(i1),
            },
        ],
        lit(offset),
        T::lit(5.0),
    )
    .unwrap()
}

/// Green test written against the cycle arithmetic directly.
fn green_for(g0: i64, g1: i64, i0: i64, i1: i64, offset: i64, approach: u32, t: Exact) -> bool {
    let cycle = Exact::from_integer(g0 + i0 + g1 + i1);
    let mut u = t - Exact::from_integer(offset);
    u = u - (u / cycle).floor() * cycle;
    let first = u < Exact::from_integer(g0);
    let second = u >= Exact::from_integer(g0 + i0) && u < Exact::from_integer(g0 + i0 + g1);
    if approach == 1 {
        second
    } else {
        first
    }
}

fn bus(
    vehicle: u64,
    approach: u32,
    eta: f64,
    now: f64,
    demand: u32,
    dist: f64,
    left: u32,
) -> PreemptionRequest<f64> {
    PreemptionRequest {
        vehicle: VehicleId(vehicle),
        class: VehicleClass::EmergencyBus,
        approach,
        eta,
        requested_at: now,
        bus: Some(BusAttributes {
            demand,
            shelter_distance: dist,
            remaining_pickups: left,
        }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn glosa_speeds_land_on_green(
        g0 in 5u32..60, g1 in 5u32..60, i0 in 0u32..8, i1 in 0u32..8, offset in 0u32..120,
        approach in 0u32..3, dist in 20u32..2_000, vmin in 1u32..10, span in 0u32..20, now in 0u32..600,
    ) {
        let plan = two_phase_plan::<Exact>(g0, g1, i0, i1, offset);
        let v = ApproachingVehicle {
            vehicle: VehicleId(1),
            distance: Exact::from_integer(dist as i64),
            v_min: Exact::from_integer(vmin as i64),
            v_max: Exact::from_integer((vmin + span) as i64),
            approach,
        };
        let now = Exact::from_integer(now as i64);
        if let Advice::Speed { speed } = glosa_advise(&plan, &v, now).unwrap().advice {
            prop_assert!(speed >= v.v_min && speed <= v.v_max);
            let arrival = now + v.distance / speed;
            prop_assert!(green_for(g0 as i64, g1 as i64, i0 as i64, i1 as i64, offset as i64, approach, arrival));
        }
    }

    #[test]
    fn scaling_weights_keeps_bus_order(
        buses in prop::collection::vec((0u32..80, 0u32..5_000, 0u32..6), 2..8), k in 1u32..1_000,
    ) {
        let w = PriorityWeights::<f64>::default();
        let ws = w.scaled(k as f64 / 7.0);
        let reqs: Vec<_> = buses
            .iter()
            .enumerate()
            .map(|(i, &(d, s, l))| bus(i as u64, 0, 10.0, 0.0, d, s as f64, l))
            .collect();
        for a in &reqs {
            for b in &reqs {
                let (sa, sb) = (priority_score(a, &w).unwrap(), priority_score(b, &w).unwrap());
                let (ta, tb) = (priority_score(a, &ws).unwrap(), priority_score(b, &ws).unwrap());
                // Exact ties are the only place rounding could flip an order.
                if sa != sb {
                    prop_assert_eq!(sa.partial_cmp(&sb), ta.partial_cmp(&tb));
                }
            }
        }
    }

    #[test]
    fn served_vehicle_outranks_everyone_waiting(
        g0 in 5u32..40, g1 in 5u32..40, i0 in 0u32..6, i1 in 0u32..6,
        events in prop::collection::vec((0u32..20, 0u32..3, 0u32..60, 0u32..80, 0u32..4, any::<bool>()), 1..30),
    ) {
        let plan = two_phase_plan::<f64>(g0, g1, i0, i1, 0);
        let mut c = SignalController::new(plan, ControllerConfig::default(), 0.0);
        let mut now = 0.0;
        for (i, &(dt, approach, lead, demand, left, ambulance)) in events.iter().enumerate() {
            now += dt as f64;
            c.tick(now, &[]).unwrap();
            let mut req = bus(i as u64, approach, now + lead as f64, now, demand, 100.0, left);
            if ambulance {
                req.class = VehicleClass::Ambulance;
                req.bus = None;
            }
            c.request_preemption(req, now).unwrap();
            if i % 3 == 2 {
                if let Some(v) = c.serving() {
                    c.tick(now, &[v]).unwrap();
                }
            }
        }
        for r in c.service_log().iter().filter(|r| r.event == ServiceEvent::Served) {
            for p in &r.pending {
                prop_assert!(r.score.partial_cmp(p) != Some(std::cmp::Ordering::Less), "{:?} below {:?}", r.score, p);
            }
        }
    }
}
