//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use evac_core::busevac::{
    BusDepot, DepotId, EbpdInstance, PickupId, PickupPoint, Shelter, ShelterId,
};
use evac_core::cover::{Community, CommunityId, CoverInstance, Hospital, HospitalId};
use evac_core::dispatch::{DispatchInstance, FleetHospital, Group, Patient, PatientId};
use evac_core::net::{NetworkBuilder, NodeId, TimeDependentNetwork, TravelTimeProfile};
use evac_core::Scalar;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// FIFO profile with integer breakpoints: each step may drop by at most the
/// offset gap, and the wrap segment is checked the same way.
pub fn random_profile<T: Scalar>(
    rng: &mut TestRng,
    period: u32,
    lo: u32,
    hi: u32,
) -> TravelTimeProfile<T> {
    loop {
        let k = rng.random_range(1..=4);
        let mut offsets: Vec<u32> = (0..k).map(|_| rng.random_range(0..period)).collect();
        offsets.sort();
        offsets.dedup();
        let mut pts: Vec<(u32, u32)> = Vec::new();
        for &o in &offsets {
            let mut tt = rng.random_range(lo..=hi);
            if let Some(&(po, pt)) = pts.last() {
                let floor = pt.saturating_sub(o - po).max(1);
                tt = tt.max(floor);
            }
            pts.push((o, tt));
        }
        let (fo, ft) = pts[0];
        let (lo_, lt) = *pts.last().unwrap();
        if (ft as i64) + (fo as i64) + (period as i64) - (lo_ as i64) < lt as i64 {
            continue;
        }
        let bp = pts
            .iter()
            .map(|&(o, t)| (T::lit(o as f64), T::lit(t as f64)))
            .collect();
        return TravelTimeProfile::new(bp, T::lit(period as f64)).expect("generated FIFO");
    }
}

/// Up to `max_arcs` random arcs among `n` nodes, no self loops.
pub fn random_network<T: Scalar>(
    rng: &mut TestRng,
    n: u32,
    max_arcs: usize,
    period: u32,
) -> TimeDependentNetwork<T> {
    let mut b = NetworkBuilder::with_nodes(n as usize);
    let m = rng.random_range(1..=max_arcs);
    for _ in 0..m {
        let from = rng.random_range(0..n);
        let mut to = rng.random_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        b.arc(from, to, random_profile(rng, period, 5, 200));
    }
    b.build().unwrap()
}

/// Strongly connected: a bidirectional ring plus random chords.
pub fn connected_network<T: Scalar>(
    rng: &mut TestRng,
    n: u32,
    chords: usize,
    period: u32,
) -> TimeDependentNetwork<T> {
    let mut b = NetworkBuilder::with_nodes(n as usize);
    for i in 0..n {
        let j = (i + 1) % n;
        if n == 2 && i == 1 {
            break;
        }
        b.arc(i, j, random_profile(rng, period, 20, 200));
        b.arc(j, i, random_profile(rng, period, 20, 200));
    }
    for _ in 0..chords {
        let from = rng.random_range(0..n);
        let mut to = rng.random_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        b.arc(from, to, random_profile(rng, period, 20, 300));
    }
    b.build().unwrap()
}

pub fn cover_instance(rng: &mut TestRng, n: u32, max_h: u32, max_c: u32) -> CoverInstance<f64> {
    let nh = rng.random_range(1..=max_h);
    let nc = rng.random_range(1..=max_c);
    CoverInstance {
        hospitals: (0..nh)
            .map(|i| Hospital {
                id: HospitalId(i),
                location: NodeId(rng.random_range(0..n)),
                capacity: rng.random_range(0..=300),
            })
            .collect(),
        communities: (0..nc)
            .map(|i| Community {
                id: CommunityId(i),
                location: NodeId(rng.random_range(0..n)),
                population: rng.random_range(1..=120),
            })
            .collect(),
        threshold: rng.random_range(100..=500) as f64,
    }
}

pub fn dispatch_instance(
    rng: &mut TestRng,
    n: u32,
    ambulances: u32,
    patients: u32,
) -> DispatchInstance<f64> {
    let nh = rng.random_range(1..=ambulances.min(3));
    let mut fleets: Vec<u32> = vec![1; nh as usize];
    for _ in nh..ambulances {
        let i = rng.random_range(0..nh as usize);
        fleets[i] += 1;
    }
    DispatchInstance {
        hospitals: fleets
            .iter()
            .enumerate()
            .map(|(i, &k)| FleetHospital {
                id: HospitalId(i as u32),
                location: NodeId(rng.random_range(0..n)),
                ambulances: k,
            })
            .collect(),
        patients: (0..patients)
            .map(|i| Patient {
                id: PatientId(i),
                location: NodeId(rng.random_range(0..n)),
                group: if rng.random_bool(0.5) {
                    Group::Serious
                } else {
                    Group::Slight
                },
                onset: rng.random_range(0..=600) as f64,
            })
            .collect(),
        t0: 0.0,
    }
}

pub fn ebpd_instance(
    rng: &mut TestRng,
    n: u32,
    buses: u32,
    pickups: u32,
    shelters: u32,
) -> EbpdInstance<f64> {
    let nd = rng.random_range(1..=buses.max(1));
    let mut fleets = vec![0u32; nd as usize];
    for _ in 0..buses {
        let i = rng.random_range(0..nd as usize);
        fleets[i] += 1;
    }
    EbpdInstance {
        depots: fleets
            .iter()
            .enumerate()
            .map(|(i, &k)| BusDepot {
                id: DepotId(i as u32),
                location: NodeId(rng.random_range(0..n)),
                fleet: k,
                bus_capacity: rng.random_range(20..=40),
            })
            .collect(),
        pickups: (0..pickups)
            .map(|i| PickupPoint {
                id: PickupId(i),
                location: NodeId(rng.random_range(0..n)),
                demand: rng.random_range(0..=45),
                boarding_cap: rng.random_range(15..=40),
            })
            .collect(),
        shelters: (0..shelters)
            .map(|i| Shelter {
                id: ShelterId(i),
                location: NodeId(rng.random_range(0..n)),
                capacity: rng.random_range(10..=80),
            })
            .collect(),
        deadline: rng.random_range(600..=2000) as f64,
        t0: 0.0,
    }
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

pub fn scene(name: &str) -> evac_core::sim::ScenarioBundle {
    evac_core::sim::ScenarioBundle::read(&scenario_path(name)).expect("bundled scenario")
}

/// Random scenario over a strongly connected network: crashes, medical
/// calls, signals on busy nodes and, half the time, a facility fire with a
/// small bus evacuation.
pub fn random_scenario(rng: &mut TestRng) -> evac_core::sim::ScenarioBundle {
    use evac_core::net::NetworkFile;
    use serde_json::json;

    let n = rng.random_range(4..=9);
    let chords = rng.random_range(0..=6);
    let net: TimeDependentNetwork<f64> = connected_network(rng, n, chords, 3600);
    let file = NetworkFile::from_network(&net);
    let node = |rng: &mut TestRng| rng.random_range(0..n);

    let hospitals: Vec<_> = (0..rng.random_range(1..=2))
        .map(|i| json!({"id": i, "location": node(rng), "capacity": 500, "ambulances": rng.random_range(1..=2)}))
        .collect();
    let communities: Vec<_> = (0..rng.random_range(0..=3))
        .map(|i| json!({"id": i, "location": node(rng), "population": rng.random_range(1..=200)}))
        .collect();
    let mut signals = Vec::new();
    for v in 0..n {
        if !rng.random_bool(0.4) {
            continue;
        }
        let incoming: Vec<_> = net.arcs().iter().filter(|a| a.to.0 == v).collect();
        if incoming.is_empty() {
            continue;
        }
        let approaches: Vec<_> = incoming
            .iter()
            .enumerate()
            .map(|(k, a)| json!({"arc": a.id.0, "approach": k % 3}))
            .collect();
        signals.push(json!({
            "node": v,
            "offset": rng.random_range(0..60),
            "phases": [
                {"id": 0, "approaches": [0, 2], "green": rng.random_range(5..=40), "intergreen": rng.random_range(0..=6)},
                {"id": 1, "approaches": [1], "green": rng.random_range(5..=40), "intergreen": rng.random_range(0..=6)}
            ],
            "approaches": approaches
        }));
    }
    let conditions = [
        "vehicle_crash",
        "cardiac_arrest",
        "skin_rash",
        "collision",
        "strokes",
    ];
    let mut incidents: Vec<_> = (0..rng.random_range(0..=4))
        .map(|i| {
            json!({
                "id": i + 1,
                "timestamp": rng.random_range(0..=900),
                "scene": "road",
                "location": node(rng),
                "condition": conditions[rng.random_range(0..conditions.len())]
            })
        })
        .collect();
    let mut extra = json!({});
    if rng.random_bool(0.5) {
        let fire = node(rng);
        incidents.push(json!({
            "id": 99, "timestamp": rng.random_range(0..=600), "scene": "facility",
            "location": fire, "condition": "fire_alarm"
        }));
        let pickups: Vec<_> = (0..rng.random_range(1..=3))
            .map(|i| json!({"id": i, "location": node(rng), "demand": rng.random_range(0..=30), "boarding_cap": rng.random_range(10..=30)}))
            .collect();
        let np = pickups.len() as u32;
        extra = json!({
            "depots": [{"id": 0, "location": node(rng), "fleet": rng.random_range(1..=2), "bus_capacity": rng.random_range(15..=30)}],
            "pickups": pickups,
            "shelters": [{"id": 0, "location": node(rng), "capacity": rng.random_range(20..=80)},
                         {"id": 1, "location": node(rng), "capacity": rng.random_range(20..=80)}],
            "evacuation_window": rng.random_range(1200..=4000),
            "demand_updates": [{"time": rng.random_range(0..=1500), "pickup": rng.random_range(0..np), "demand": rng.random_range(0..=40)}],
            "hazard": {"zone": if rng.random_bool(0.5) { vec![fire] } else { vec![] }}
        });
    }
    let mut doc = json!({
        "name": "random",
        "network": "random.network.json",
        "seed": rng.random_range(0..1000),
        "horizon": rng.random_range(0..=600),
        "hospitals": hospitals,
        "communities": communities,
        "signals": signals,
        "incidents": incidents,
        "solver": {"evo": {"generations": 30, "population_size": 16}}
    });
    for (k, v) in extra.as_object().unwrap() {
        doc[k] = v.clone();
    }
    evac_core::sim::ScenarioBundle {
        scenario: serde_json::from_value(doc).expect("generated scenario"),
        network: file,
        path: "random.json".into(),
    }
}
