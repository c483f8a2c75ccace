//! Acceptance run: one line per criterion, nonzero exit if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hasher};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use evac_core::busevac::{
    check_plan, solve_ebpd, Boarding, EbpdInstance, EbpdOptions, EvacPlan, EvacState, PickupId,
    SiteRef,
};
use evac_core::ccu::{
    departments_for, Classification, Classifier, EmergencyType, IncidentId, IncidentMessage, Level,
    RuleClassifier, Scene,
};
use evac_core::cover::{solve_accp, CoverOptions};
use evac_core::dispatch::{solve_group_dispatch, DeliveryPolicy, DispatchOptions, ServiceTimes};
use evac_core::evo::{EvoConfig, SolverMode};
use evac_core::net::{NodeId, TimeDependentNetwork};
use evac_core::oracle::{accp_brute, dispatch_brute, ebpd_brute, tdsp_brute};
use evac_core::signal::{
    glosa_advise, Advice, ApproachingVehicle, BusAttributes, ControllerConfig, Phase, PhaseId,
    PreemptionRequest, PriorityWeights, ServiceEvent, SignalController, SignalPlan, Stage,
    VehicleClass, VehicleId,
};
use evac_core::sim::trace::write_trace;
use evac_core::sim::{run, RunOptions, TraceEvent};
use evac_core::{Exact, Scalar};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let d = start.elapsed();
    ensure(d <= limit, || format!("took {:.1?}, limit {:?}", d, limit))?;
    Ok(d)
}

fn tdsp_case<T: Scalar>(rng: &mut TestRng) -> Result<(), String> {
    let n = rng.random_range(2..=8);
    let net: TimeDependentNetwork<T> = random_network(rng, n, 16, 3600);
    let o = NodeId(rng.random_range(0..n));
    let d = NodeId(rng.random_range(0..n));
    let dep = T::lit(rng.random_range(0..7200) as f64);
    let got = net.shortest_time_path(o, d, dep).ok().map(|p| p.arrival);
    let want = tdsp_brute(&net, o, d, dep);
    ensure(got == want, || {
        format!("{o:?}->{d:?} at {dep:?}: solver {got:?}, enumeration {want:?}")
    })
}

fn tdsp() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(1);
    for i in 0..500 {
        tdsp_case::<f64>(&mut rng).map_err(|e| format!("network {i}: {e}"))?;
    }
    let mut rng = common::rng(2);
    for i in 0..500 {
        tdsp_case::<Exact>(&mut rng).map_err(|e| format!("rational network {i}: {e}"))?;
    }
    let d = within(start, Duration::from_secs(60))?;
    Ok(format!(
        "500 float + 500 rational networks match enumeration in {d:.1?}"
    ))
}

fn fifo() -> Outcome {
    let mut rng = rng(3);
    for i in 0..10_000 {
        let p = random_profile::<f64>(&mut rng, 3600, 5, 600);
        let t1 = rng.random_range(0.0..10_000.0);
        let t2 = t1 + rng.random_range(1e-3..4000.0);
        ensure(t1 + p.evaluate(t1) <= t2 + p.evaluate(t2), || {
            format!("pair {i}: departing {t1} arrives after departing {t2}")
        })?;
    }
    let mut pairs = 0;
    while pairs < 1000 {
        let n = rng.random_range(2..=8);
        let net: TimeDependentNetwork<f64> = random_network(&mut rng, n, 16, 3600);
        let o = NodeId(rng.random_range(0..n));
        let d = NodeId(rng.random_range(0..n));
        let mut deps: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..8000.0)).collect();
        deps.sort_by(f64::total_cmp);
        let arr: Vec<Option<f64>> = deps
            .iter()
            .map(|&t| net.shortest_time_path(o, d, t).ok().map(|p| p.arrival))
            .collect();
        if arr[0].is_none() {
            continue;
        }
        for w in arr.windows(2) {
            let (a, b) = (
                w[0].unwrap(),
                w[1].ok_or("reachability changed with departure time")?,
            );
            ensure(a <= b, || {
                format!("{o:?}->{d:?}: arrival fell from {a} to {b}")
            })?;
        }
        pairs += 1;
    }
    Ok("10000 profile pairs and 1000 origin/destination pairs monotone".into())
}

fn accp() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(4);
    for i in 0..200 {
        let n = rng.random_range(3..=8);
        let net = connected_network::<f64>(&mut rng, n, 5, 3600);
        let inst = cover_instance(&mut rng, n, 4, 8);
        let instant = rng.random_range(0..7200) as f64;
        let a = solve_accp(&net, &inst, instant, &CoverOptions::default())
            .map_err(|e| e.to_string())?;
        let got = (a.covered_population, a.total_response_time);
        let want = accp_brute(&net, &inst, instant);
        ensure(got == want, || {
            format!("instance {i}: solver {got:?}, enumeration {want:?}")
        })?;
    }
    let d = within(start, Duration::from_secs(120))?;
    Ok(format!(
        "200 instances equal the exhaustive optimum in {d:.1?}"
    ))
}

fn dispatch() -> Outcome {
    let mut rng = rng(5);
    for i in 0..200 {
        let n = rng.random_range(3..=8);
        let net = connected_network::<f64>(&mut rng, n, 5, 3600);
        let na = rng.random_range(1..=3);
        let np = rng.random_range(0..=6);
        let inst = dispatch_instance(&mut rng, n, na, np);
        let a = solve_group_dispatch(&net, &inst, &DispatchOptions::default())
            .map_err(|e| e.to_string())?;
        let want = dispatch_brute(
            &net,
            &inst,
            &ServiceTimes::default(),
            DeliveryPolicy::HomeHospital,
        )
        .ok_or(format!("instance {i}: enumeration found no schedule"))?;
        ensure(a.objective == want.0, || {
            format!(
                "instance {i}: solver {}, enumeration {}",
                a.objective, want.0
            )
        })?;
    }
    let evo = EvoConfig {
        population_size: 24,
        generations: 60,
        ..EvoConfig::default()
    };
    let mut wins = 0;
    for i in 0..50 {
        let net = connected_network::<f64>(&mut rng, 20, 30, 3600);
        let inst = dispatch_instance(&mut rng, 20, 10, 40);
        let opts = |mode| DispatchOptions {
            mode,
            evo: EvoConfig {
                seed: i,
                ..evo.clone()
            },
            ..DispatchOptions::default()
        };
        let g = solve_group_dispatch(&net, &inst, &opts(SolverMode::Greedy))
            .map_err(|e| e.to_string())?;
        let e =
            solve_group_dispatch(&net, &inst, &opts(SolverMode::Evo)).map_err(|e| e.to_string())?;
        ensure(e.objective <= g.objective, || {
            format!(
                "large instance {i}: evo {} above greedy {}",
                e.objective, g.objective
            )
        })?;
        if e.objective < g.objective {
            wins += 1;
        }
    }
    Ok(format!(
        "200 micro instances optimal; evo <= greedy on 50/50 large ones ({wins} strictly better)"
    ))
}

/// Conservation and capacity, recomputed from the visits alone.
fn conserve(inst: &EbpdInstance<f64>, plan: &EvacPlan<f64>) -> Result<(), String> {
    let demand: BTreeMap<PickupId, u32> = inst.pickups.iter().map(|p| (p.id, p.demand)).collect();
    let cap: BTreeMap<_, _> = inst
        .pickups
        .iter()
        .map(|p| (p.id, p.boarding_cap))
        .collect();
    let room: BTreeMap<_, _> = inst.shelters.iter().map(|s| (s.id, s.capacity)).collect();
    let mut boarded: BTreeMap<PickupId, u32> = BTreeMap::new();
    let mut alighted: BTreeMap<_, u32> = BTreeMap::new();
    let mut total = 0u32;
    for r in &plan.routes {
        let mut onboard = 0u32;
        let mut t = r.start_time;
        for v in &r.visits {
            ensure(v.arrival >= t && v.depart >= v.arrival, || {
                format!("bus {:?} goes back in time", r.bus)
            })?;
            t = v.depart;
            match v.site {
                SiteRef::Pickup(p) => {
                    ensure(v.alighted == 0 && v.boarded <= cap[&p], || {
                        format!("pickup {p:?} boarding cap")
                    })?;
                    *boarded.entry(p).or_default() += v.boarded;
                    onboard += v.boarded;
                }
                SiteRef::Shelter(s) => {
                    ensure(v.boarded == 0 && v.alighted <= onboard, || {
                        format!("shelter {s:?} unloads too much")
                    })?;
                    *alighted.entry(s).or_default() += v.alighted;
                    onboard -= v.alighted;
                    total += v.alighted;
                    ensure(v.arrival <= inst.deadline, || {
                        format!("shelter {s:?} reached after the deadline")
                    })?;
                }
            }
            ensure(onboard <= r.capacity && onboard == v.onboard, || {
                format!("bus {:?} load", r.bus)
            })?;
        }
        ensure(onboard == 0, || {
            format!("bus {:?} ends with {onboard} aboard", r.bus)
        })?;
    }
    for (p, b) in &boarded {
        ensure(*b <= demand[p], || {
            format!("pickup {p:?} gave {b} of {}", demand[p])
        })?;
    }
    for (s, a) in &alighted {
        ensure(*a <= room[s], || {
            format!("shelter {s:?} took {a} of {}", room[s])
        })?;
    }
    ensure(total == plan.total_evacuated, || {
        format!("plan claims {} but moves {total}", plan.total_evacuated)
    })
}

fn ebpd() -> Outcome {
    let mut rng = rng(6);
    let boarding = Boarding::default();
    for i in 0..100 {
        let n = rng.random_range(3..=7);
        let net = connected_network::<f64>(&mut rng, n, 4, 3600);
        let b = rng.random_range(1..=2);
        let p = rng.random_range(1..=3);
        let s = rng.random_range(1..=2);
        let inst = ebpd_instance(&mut rng, n, b, p, s);
        let plan = solve_ebpd(&net, &inst, &EbpdOptions::default()).map_err(|e| e.to_string())?;
        let want = ebpd_brute(&net, &inst, &boarding);
        ensure(plan.objective() == want, || {
            format!(
                "instance {i}: solver {:?}, enumeration {want:?}",
                plan.objective()
            )
        })?;
        conserve(&inst, &plan).map_err(|e| format!("instance {i}: {e}"))?;
    }
    let evo = EvoConfig {
        population_size: 16,
        generations: 30,
        ..EvoConfig::default()
    };
    let mut plans = 0;
    for i in 0..1000u64 {
        let n = rng.random_range(3..=9);
        let net = connected_network::<f64>(&mut rng, n, 6, 3600);
        let (b, p, s) = (
            rng.random_range(1..=4),
            rng.random_range(0..=5),
            rng.random_range(1..=3),
        );
        let inst = ebpd_instance(&mut rng, n, b, p, s);
        let mode = [SolverMode::Auto, SolverMode::Evo, SolverMode::Greedy][(i % 3) as usize];
        let opts = EbpdOptions {
            mode,
            evo: EvoConfig {
                seed: i,
                ..evo.clone()
            },
            boarding,
        };
        let mut state =
            EvacState::new(&net, inst.clone(), opts).map_err(|e| format!("fuzz {i}: {e}"))?;
        let mut check = |state: &EvacState<f64>| -> Result<(), String> {
            plans += 1;
            check_plan(&net, state.instance(), state.plan(), &boarding)
                .map_err(|e| format!("fuzz {i}: {e}"))?;
            conserve(state.instance(), state.plan()).map_err(|e| format!("fuzz {i}: {e}"))
        };
        check(&state)?;
        if !inst.pickups.is_empty() {
            let p = inst.pickups[rng.random_range(0..inst.pickups.len())].id;
            let now = inst.t0 + rng.random_range(0.0..inst.deadline);
            state
                .update_demand(p, rng.random_range(0..=60))
                .map_err(|e| e.to_string())?;
            if let Err(e) = state.replan(&net, now) {
                return Err(format!("fuzz {i}: {e}"));
            }
            check(&state)?;
        }
    }
    Ok(format!(
        "100 micro instances optimal; {plans} fuzzed plans conserve people and capacity"
    ))
}

fn random_plan(rng: &mut TestRng) -> SignalPlan<f64> {
    let k = rng.random_range(2..=4);
    let mut approaches: Vec<Vec<u32>> = (0..k).map(|i| vec![i]).collect();
    for a in k..6 {
        approaches[rng.random_range(0..k as usize)].push(a);
    }
    let phases = approaches
        .into_iter()
        .enumerate()
        .map(|(i, approaches)| Phase {
            id: PhaseId(i as u32),
            approaches,
            green: rng.random_range(5..=60) as f64,
            intergreen: rng.random_range(0..=6) as f64,
        })
        .collect();
    SignalPlan::new(phases, rng.random_range(0..120) as f64, 5.0).expect("valid plan")
}

/// Intergreen, extension cap and priority order, checked on the finished
/// controller's timeline and service log.
fn audit(c: &SignalController<f64>, cfg: &ControllerConfig<f64>) -> Result<(), String> {
    let phases = c.plan().phases();
    let by_id: BTreeMap<PhaseId, &Phase<f64>> = phases.iter().map(|p| (p.id, p)).collect();
    // Collapse to stage changes.
    let mut stages: Vec<(f64, PhaseId, Stage)> = Vec::new();
    for r in c.timeline() {
        match stages.last() {
            Some(&(_, p, s)) if p == r.phase && s == r.stage => {}
            _ => stages.push((r.t, r.phase, r.stage)),
        }
    }
    // The first stage may have started before the log, so its length is
    // not checked.
    for (k, w) in stages.windows(2).enumerate() {
        let ((t0, p0, s0), (t1, p1, s1)) = (w[0], w[1]);
        match (s0, s1) {
            (Stage::Green, Stage::Clearance) => {
                ensure(p0 == p1, || {
                    format!("clearance of {p1:?} after green of {p0:?}")
                })?;
            }
            (Stage::Clearance, Stage::Green) if k == 0 => {}
            (Stage::Clearance, Stage::Green) => {
                let need = by_id[&p0].intergreen;
                ensure(t1 >= t0 + need, || {
                    format!("{p0:?} cleared for {} < {need} before {p1:?}", t1 - t0)
                })?;
            }
            _ => {
                return Err(format!(
                    "{s0:?} of {p0:?} followed by {s1:?} of {p1:?} at {t1}"
                ))
            }
        }
    }
    for w in stages.windows(2).skip(1) {
        let ((t0, p0, s0), (t1, _, _)) = (w[0], w[1]);
        if s0 == Stage::Green {
            let limit = by_id[&p0].green + cfg.max_extension;
            ensure(t1 <= t0 + by_id[&p0].green + cfg.max_extension, || {
                format!("{p0:?} green for {} > {limit} at {t0}", t1 - t0)
            })?;
        }
    }
    for r in c.service_log() {
        if r.event == ServiceEvent::Served {
            let top = r.pending.iter().all(|p| !(p > &r.score));
            ensure(top, || {
                format!("{:?} served at {} below a pending request", r.vehicle, r.t)
            })?;
        }
    }
    Ok(())
}

fn signal_case(rng: &mut TestRng) -> Result<usize, String> {
    let plan = random_plan(rng);
    let cfg = ControllerConfig {
        min_green: 5.0,
        max_extension: rng.random_range(0..=60) as f64,
        weights: PriorityWeights::default(),
    };
    let mut t = rng.random_range(0..200) as f64;
    let mut c = SignalController::new(plan, cfg, t);
    let mut pending: Vec<(VehicleId, f64)> = Vec::new();
    let steps = rng.random_range(5..40);
    for k in 0..steps {
        t += rng.random_range(0.0..25.0);
        let (due, rest): (Vec<_>, Vec<_>) = pending.iter().partition(|(_, eta)| *eta <= t);
        pending = rest;
        let crossed: Vec<VehicleId> = due
            .iter()
            .filter(|_| rng.random_bool(0.8))
            .map(|(v, _)| *v)
            .collect();
        c.tick(t, &crossed).map_err(|e| e.to_string())?;
        match rng.random_range(0..10) {
            0 if !pending.is_empty() => {
                let (v, _) = pending.remove(rng.random_range(0..pending.len()));
                c.withdraw(v, t).map_err(|e| e.to_string())?;
            }
            0..=6 => {
                let v = VehicleId(k as u64 % 7);
                let eta = t + rng.random_range(0.0..90.0);
                let bus = rng.random_bool(0.6);
                let req = PreemptionRequest {
                    vehicle: v,
                    class: if bus {
                        VehicleClass::EmergencyBus
                    } else {
                        VehicleClass::Ambulance
                    },
                    approach: rng.random_range(0..6),
                    eta,
                    requested_at: t,
                    bus: bus.then(|| BusAttributes {
                        demand: rng.random_range(0..50),
                        shelter_distance: rng.random_range(0.0..5000.0),
                        remaining_pickups: rng.random_range(0..4),
                    }),
                };
                c.request_preemption(req, t).map_err(|e| e.to_string())?;
                pending.retain(|(p, _)| *p != v);
                pending.push((v, eta));
            }
            _ => {}
        }
    }
    c.tick(t + 400.0, &[]).map_err(|e| e.to_string())?;
    audit(&c, &cfg)?;
    Ok(c.service_log()
        .iter()
        .filter(|r| r.event == ServiceEvent::Served)
        .count())
}

fn signal_safety() -> Outcome {
    let mut rng = rng(7);
    let mut served = 0;
    for i in 0..1000 {
        served += signal_case(&mut rng).map_err(|e| format!("scenario {i}: {e}"))?;
    }
    ensure(served > 1000, || {
        format!("only {served} services exercised")
    })?;
    Ok(format!("1000 scenarios, {served} services, no violation"))
}

/// Fixed-time green check written directly from the phase list.
fn green_at(plan: &SignalPlan<f64>, approach: u32, t: f64) -> bool {
    let phases = plan.phases();
    let cycle: f64 = phases.iter().map(|p| p.green + p.intergreen).sum();
    let mut u = (t - plan.offset()).rem_euclid(cycle);
    for p in phases {
        if u < p.green {
            return p.approaches.contains(&approach);
        }
        u -= p.green + p.intergreen;
        if u < 0.0 {
            return false;
        }
    }
    false
}

/// Every green window start in `[from - cycle, to]`, by walking cycles.
fn any_window(plan: &SignalPlan<f64>, approach: u32, from: f64, to: f64) -> bool {
    let phases = plan.phases();
    let cycle: f64 = phases.iter().map(|p| p.green + p.intergreen).sum();
    let mut base = plan.offset() + ((from - plan.offset()) / cycle).floor() * cycle - cycle;
    while base <= to {
        let mut s = base;
        for p in phases {
            let e = s + p.green;
            if p.approaches.contains(&approach) && s.max(from) < e && s.max(from) <= to {
                return true;
            }
            s = e + p.intergreen;
        }
        base += cycle;
    }
    false
}

fn glosa() -> Outcome {
    let mut rng = rng(8);
    let (mut speeds, mut stops) = (0, 0);
    while speeds < 1000 {
        let plan = random_plan(&mut rng);
        let v_min = rng.random_range(1.0..8.0);
        let v = ApproachingVehicle {
            vehicle: VehicleId(speeds),
            distance: rng.random_range(10.0..3000.0),
            v_min,
            v_max: v_min + rng.random_range(0.0..20.0),
            approach: rng.random_range(0..6),
        };
        let now = rng.random_range(0.0..1000.0);
        let adv = glosa_advise(&plan, &v, now).map_err(|e| e.to_string())?;
        match adv.advice {
            Advice::Speed { speed } => {
                speeds += 1;
                let at = now + v.distance / speed;
                ensure(speed >= v.v_min && speed <= v.v_max, || {
                    format!("{speed} outside bounds")
                })?;
                ensure(green_at(&plan, v.approach, at), || {
                    format!("advised {speed} arrives on red at {at}")
                })?;
            }
            Advice::Stop => {
                stops += 1;
                let cycle: f64 = plan.phases().iter().map(|p| p.green + p.intergreen).sum();
                let from = now + v.distance / v.v_max;
                let to = (now + v.distance / v.v_min).min(now + 2.0 * cycle);
                ensure(!any_window(&plan, v.approach, from, to), || {
                    format!("stop advised but a window opens in [{from}, {to}]")
                })?;
            }
        }
    }
    ensure(stops > 0, || "no stop case generated".into())?;
    Ok(format!(
        "{speeds} speed advisories land on green; {stops} stop cases have no window"
    ))
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    h.write(bytes);
    h.finish()
}

fn scenes() -> Outcome {
    let mut notes = Vec::new();
    for name in ["household", "road", "facility"] {
        let b = scene(name);
        let net = b.load().map_err(|e| e.to_string())?;
        let mut sums = BTreeSet::new();
        let mut last = None;
        for _ in 0..5 {
            let out = run(&b, &RunOptions::default()).map_err(|e| format!("{name}: {e}"))?;
            let mut buf = Vec::new();
            write_trace(&mut buf, &out.trace).map_err(|e| e.to_string())?;
            sums.insert(checksum(&buf));
            last = Some(out);
        }
        ensure(sums.len() == 1, || {
            format!("{name}: {} distinct traces in 5 runs", sums.len())
        })?;
        let out = last.expect("ran");
        let mut arrivals = 0;
        for r in &out.trace {
            if let TraceEvent::VehicleArrival { executed, legs, .. } = &r.event {
                arrivals += 1;
                ensure(*executed == r.t, || {
                    format!("{name}: planned {} replayed {executed}", r.t)
                })?;
                for l in legs {
                    let arc = net.arc(l.arc).map_err(|e| e.to_string())?;
                    let ends = (arc.from, arc.to) == (l.from, l.to)
                        || (arc.to, arc.from) == (l.from, l.to);
                    let tt = arc.profile.evaluate(l.enter);
                    let dt = l.exit - l.enter;
                    let timed = dt == tt || dt == tt * b.scenario.crash_penalty;
                    ensure(ends && timed, || {
                        format!("{name}: arc {:?} traversal does not replay", l.arc)
                    })?;
                }
            }
        }
        if name == "facility" {
            let plan = out
                .plans
                .evacuation
                .as_ref()
                .ok_or("facility: no evacuation plan")?;
            ensure(
                out.metrics.total_evacuated == u64::from(plan.total_evacuated),
                || {
                    format!(
                        "facility: executed {} planned {}",
                        out.metrics.total_evacuated, plan.total_evacuated
                    )
                },
            )?;
            notes.push(format!("facility evacuated {}", plan.total_evacuated));
        }
        notes.push(format!(
            "{name} {arrivals} arrivals {:016x}",
            sums.first().unwrap()
        ));
    }
    Ok(notes.join(", "))
}

/// Condition tokens and their levels as listed for the household scene,
/// with crash, fire and attack alerts from the other two scenes.
const LISTED_TOKENS: &[(&str, EmergencyType, Level)] = &[
    ("cardiac_arrest", EmergencyType::Medical, Level::Major),
    ("unconsciousness", EmergencyType::Medical, Level::Major),
    ("difficulty_breathing", EmergencyType::Medical, Level::Major),
    ("seizures", EmergencyType::Medical, Level::Major),
    ("severe_injuries", EmergencyType::Medical, Level::Major),
    ("strokes", EmergencyType::Medical, Level::Major),
    ("head_trauma", EmergencyType::Medical, Level::Major),
    ("bone_fractures", EmergencyType::Medical, Level::Major),
    ("asthma_attacks", EmergencyType::Medical, Level::Major),
    (
        "chronic_condition_elderly",
        EmergencyType::Medical,
        Level::Major,
    ),
    ("sick_children", EmergencyType::Medical, Level::Major),
    ("bleeding_cuts", EmergencyType::Medical, Level::Major),
    ("bruising_swelling", EmergencyType::Medical, Level::Major),
    ("minor_injuries", EmergencyType::Medical, Level::Major),
    ("persistent_fevers", EmergencyType::Medical, Level::Major),
    ("constipation", EmergencyType::Medical, Level::Minor),
    ("chronic_cough", EmergencyType::Medical, Level::Minor),
    ("diarrhoea", EmergencyType::Medical, Level::Minor),
    ("skin_rash", EmergencyType::Medical, Level::Minor),
    ("vehicle_crash", EmergencyType::Traffic, Level::Major),
    ("collision", EmergencyType::Traffic, Level::Major),
    (
        "vibration_crash_alert",
        EmergencyType::Traffic,
        Level::Major,
    ),
    ("fire_alarm", EmergencyType::Fire, Level::Major),
    ("fire", EmergencyType::Fire, Level::Major),
    ("smoke_detected", EmergencyType::Fire, Level::Major),
    ("terrorist_attack", EmergencyType::Attack, Level::Major),
    ("intrusion_alarm", EmergencyType::Attack, Level::Major),
    ("armed_attack", EmergencyType::Attack, Level::Major),
];

fn ccu() -> Outcome {
    let types = [
        EmergencyType::Medical,
        EmergencyType::Traffic,
        EmergencyType::Fire,
        EmergencyType::Attack,
    ];
    for emergency_type in types {
        for level in [Level::Major, Level::Minor] {
            let cls = Classification {
                emergency_type,
                level,
            };
            ensure(!departments_for(cls).is_empty(), || {
                format!("{cls:?} notifies nobody")
            })?;
        }
    }
    let c = RuleClassifier::default();
    for (i, &(token, emergency_type, level)) in LISTED_TOKENS.iter().enumerate() {
        let msg = IncidentMessage {
            id: IncidentId(i as u64),
            timestamp: 0.0,
            scene: Scene::Household,
            location: NodeId(0),
            condition: token.into(),
            population_impacted: 0,
            congestion: None,
            attachment: None,
        };
        let got = c.classify(&msg).map_err(|e| e.to_string())?;
        ensure(
            got == Classification {
                emergency_type,
                level,
            },
            || format!("{token}: {got:?}"),
        )?;
    }
    let table: BTreeSet<&str> = LISTED_TOKENS.iter().map(|t| t.0).collect();
    let known: BTreeSet<&str> = c.tokens().collect();
    ensure(table == known, || {
        format!(
            "classifier tokens differ: {:?}",
            known.symmetric_difference(&table)
        )
    })?;
    Ok(format!(
        "8 classifications routed; {} tokens classify as listed",
        table.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("TDSP oracle equivalence", tdsp),
        ("FIFO and arrival monotonicity", fifo),
        ("ACCP oracle", accp),
        ("group dispatch oracle", dispatch),
        ("EBPD oracle and plan invariants", ebpd),
        ("signal safety", signal_safety),
        ("GLOSA feasibility", glosa),
        ("end-to-end determinism and consistency", scenes),
        ("CCU totality and token table", ccu),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
