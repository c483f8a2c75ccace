//! Deterministic discrete-event simulation of a whole scenario: incidents
//! go through the command-and-control unit, departments call the solvers,
//! vehicles drive their planned legs and signals grant them priority.

pub mod scenario;
pub mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::Serialize;
use thiserror::Error;

use crate::busevac::{
    BusId, EbpdError, EbpdInstance, EbpdOptions, EvacPlan, EvacState, PickupId, SiteRef,
};
use crate::ccu::{
    CcuError, Classification, Department, EmergencyType, IncidentId, IncidentMessage, Level,
    Notification, NotificationBus,
};
use crate::cover::{
    solve_accp_traced, CoverAssignment, CoverError, CoverInstance, CoverOptions, Hospital,
    HospitalId,
};
use crate::dispatch::{
    solve_group_dispatch_traced, DispatchError, DispatchInstance, DispatchOptions, DispatchPlan,
    FleetHospital, SingleRoute, StopKind,
};
use crate::evo::{SolveInfo, SolverMode};
use crate::net::{ArcId, NetError, NodeId, Penalties, TimeDependentNetwork, TimedPath};
use crate::signal::{
    glosa_advise, Approach, ApproachingVehicle, BusAttributes, PreemptionRequest, SignalController,
    SignalError, SignalPlan, VehicleClass as SignalClass, VehicleId,
};

pub use scenario::{Report, Scenario, ScenarioBundle, ScenarioError};
pub use trace::{compute_metrics, Metrics, TraceEvent, TraceRecord, Traversal, VehicleClass};

use scenario::{DemandUpdate, SolverSettings};

type Net = TimeDependentNetwork<f64>;

const AMBULANCE_BASE: u64 = 1_000_000;
const RESPONDER_BASE: u64 = 2_000_000;
const BUS_BASE: u64 = 3_000_000;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub solver: Option<SolverMode>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Ccu(#[from] CcuError),
    #[error("covering: {0}")]
    Cover(#[from] CoverError),
    #[error("dispatch: {0}")]
    Dispatch(#[from] DispatchError),
    #[error("evacuation: {0}")]
    Ebpd(#[from] EbpdError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("signal: {0}")]
    Signal(#[from] SignalError),
    #[error("no hospital can reach incident {0:?}")]
    NoResponder(IncidentId),
    #[error(transparent)]
    Trace(#[from] trace::TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponderPlan {
    pub incident: IncidentId,
    pub hospital: HospitalId,
    pub route: SingleRoute<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Plans {
    pub cover: Option<CoverAssignment<f64>>,
    pub responders: Vec<ResponderPlan>,
    pub dispatch: Option<DispatchPlan<f64>>,
    /// Evacuation plan as first issued.
    pub evacuation_initial: Option<EvacPlan<f64>>,
    /// Evacuation plan after the last re-plan.
    pub evacuation: Option<EvacPlan<f64>>,
}

/// A solver call as the engine made it: network, instance and instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningCase<I> {
    pub network: TimeDependentNetwork<f64>,
    pub instance: I,
    pub instant: f64,
}

/// First call of each planner during a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanningInputs {
    pub cover: Option<PlanningCase<CoverInstance<f64>>>,
    pub dispatch: Option<PlanningCase<DispatchInstance<f64>>>,
    pub evacuation: Option<PlanningCase<EbpdInstance<f64>>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
    pub plans: Plans,
    /// Controllers by signal node, in their final state.
    pub signals: Vec<(NodeId, SignalController<f64>)>,
    /// Solver provenance per planning call, in call order.
    pub solves: Vec<(String, SolveInfo)>,
    pub inputs: PlanningInputs,
}

/// Validates and runs a scenario bundle.
pub fn run(bundle: &ScenarioBundle, opts: &RunOptions) -> Result<RunOutput, SimError> {
    let net = bundle.load()?;
    Engine::new(&bundle.scenario, net, opts)?.run()
}

#[derive(Debug, Clone)]
struct Arrival {
    vehicle: usize,
    version: u32,
    net: usize,
    penalties: usize,
    leg: TimedPath<f64>,
    site: String,
    alighted: u32,
    rescued: u32,
    patient_wait: Option<f64>,
}

#[derive(Debug, Clone)]
enum Payload {
    Ingest(IncidentMessage),
    Deliver(IncidentMessage, Classification, Vec<Notification>),
    Demand(DemandUpdate),
    SignalCycle(usize),
    SignalRequest {
        signal: usize,
        vehicle: usize,
        version: u32,
        request: PreemptionRequest<f64>,
    },
    Advisory(usize),
    Crossing {
        signal: usize,
        vehicle: usize,
        version: u32,
        approach: Approach,
    },
    Arrival(Box<Arrival>),
    Boarding {
        vehicle: usize,
        version: u32,
        node: NodeId,
        site: String,
        boarded: u32,
        onboard: u32,
        rescued: u32,
    },
}

impl Payload {
    /// Tie order among events at one instant.
    fn rank(&self) -> u8 {
        match self {
            Payload::Ingest(_) | Payload::Deliver(..) => 0,
            Payload::Demand(_) => 1,
            Payload::SignalCycle(_) | Payload::SignalRequest { .. } | Payload::Advisory(_) => 2,
            Payload::Crossing { .. } => 3,
            Payload::Arrival(_) => 4,
            Payload::Boarding { .. } => 5,
        }
    }
}

#[derive(Debug)]
struct Queued {
    t: f64,
    rank: u8,
    id: u64,
    payload: Payload,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.rank.cmp(&other.rank))
            .then(self.id.cmp(&other.id))
    }
}

struct SignalSlot {
    node: NodeId,
    controller: SignalController<f64>,
    approach_of: BTreeMap<ArcId, Approach>,
    emitted: usize,
    pending_ticks: BTreeSet<u64>,
}

struct Vehicle {
    name: String,
    class: VehicleClass,
    signal_id: VehicleId,
    version: u32,
}

struct Engine<'s> {
    s: &'s Scenario,
    settings: SolverSettings,
    nets: Vec<Net>,
    /// Index into `nets` used by emergency responders and by buses.
    responder_net: usize,
    bus_net: usize,
    penalty_sets: Vec<Penalties<f64>>,
    /// When each arc was first penalized.
    penalized_since: BTreeMap<ArcId, f64>,
    bus: NotificationBus,
    queue: BinaryHeap<Reverse<Queued>>,
    next_id: u64,
    now: f64,
    /// Latest time of any scheduled non-cycle event.
    frontier: f64,
    trace: Vec<TraceRecord>,
    signals: Vec<SignalSlot>,
    signal_at: BTreeMap<NodeId, usize>,
    vehicles: Vec<Vehicle>,
    bus_vehicle: BTreeMap<BusId, usize>,
    plans: Plans,
    evac: Option<EvacState<f64>>,
    pending_demand: BTreeMap<PickupId, u32>,
    hazard_active: bool,
    solves: Vec<(String, SolveInfo)>,
    inputs: PlanningInputs,
}

impl<'s> Engine<'s> {
    fn new(s: &'s Scenario, net: Net, opts: &RunOptions) -> Result<Self, SimError> {
        let mut settings = s.solver.clone();
        settings.evo.seed = opts.seed.unwrap_or(s.seed);
        if let Some(mode) = opts.solver {
            settings.mode = mode;
        }
        let mut signals = Vec::new();
        let mut signal_at = BTreeMap::new();
        for spec in &s.signals {
            let plan =
                SignalPlan::new(spec.phases.clone(), spec.offset, settings.signal.min_green)?;
            signal_at.insert(spec.node, signals.len());
            signals.push(SignalSlot {
                node: spec.node,
                controller: SignalController::new(plan, settings.signal, 0.0),
                approach_of: spec
                    .approaches
                    .iter()
                    .map(|a| (a.arc, a.approach))
                    .collect(),
                emitted: 0,
                pending_ticks: BTreeSet::new(),
            });
        }
        let mut e = Self {
            s,
            settings,
            nets: vec![net],
            responder_net: 0,
            bus_net: 0,
            penalty_sets: vec![Penalties::new()],
            penalized_since: BTreeMap::new(),
            bus: NotificationBus::default(),
            queue: BinaryHeap::new(),
            next_id: 0,
            now: 0.0,
            frontier: s.horizon,
            trace: Vec::new(),
            signals,
            signal_at,
            vehicles: Vec::new(),
            bus_vehicle: BTreeMap::new(),
            plans: Plans::default(),
            evac: None,
            pending_demand: BTreeMap::new(),
            hazard_active: false,
            solves: Vec::new(),
            inputs: PlanningInputs::default(),
        };
        for m in &s.incidents {
            e.push(m.timestamp, Payload::Ingest(m.clone()));
        }
        for u in &s.demand_updates {
            e.push(u.time, Payload::Demand(*u));
        }
        for (i, a) in s.approaching.iter().enumerate() {
            e.push(a.time, Payload::Advisory(i));
        }
        Ok(e)
    }

    fn push(&mut self, t: f64, payload: Payload) {
        if !matches!(payload, Payload::SignalCycle(_)) {
            self.frontier = self.frontier.max(t);
        }
        let rank = payload.rank();
        self.queue.push(Reverse(Queued {
            t,
            rank,
            id: self.next_id,
            payload,
        }));
        self.next_id += 1;
    }

    fn record(&mut self, t: f64, event: TraceEvent) {
        debug_assert!(
            t == self.now,
            "record at {t} while the clock reads {}",
            self.now
        );
        let seq = self.trace.len() as u64;
        self.trace.push(TraceRecord { seq, t, event });
    }

    fn run(mut self) -> Result<RunOutput, SimError> {
        self.solve_cover()?;
        for i in 0..self.signals.len() {
            self.emit_signal(i);
        }
        self.ensure_ticks();
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.now = ev.t;
            self.handle(ev.payload)?;
            self.ensure_ticks();
        }
        if let Some(st) = &self.evac {
            self.plans.evacuation = Some(st.plan().clone());
        }
        let metrics = compute_metrics(&self.trace)?;
        Ok(RunOutput {
            trace: self.trace,
            metrics,
            plans: self.plans,
            signals: self
                .signals
                .into_iter()
                .map(|x| (x.node, x.controller))
                .collect(),
            solves: self.solves,
            inputs: self.inputs,
        })
    }

    fn solve_cover(&mut self) -> Result<(), SimError> {
        if self.s.hospitals.is_empty() || self.s.communities.is_empty() {
            return Ok(());
        }
        let inst = CoverInstance {
            hospitals: self
                .s
                .hospitals
                .iter()
                .map(|h| Hospital {
                    id: h.id,
                    location: h.location,
                    capacity: h.capacity,
                })
                .collect(),
            communities: self.s.communities.clone(),
            threshold: self.s.coverage_threshold,
        };
        let instant = self
            .s
            .incidents
            .iter()
            .map(|m| m.timestamp)
            .fold(f64::INFINITY, f64::min);
        let instant = if instant.is_finite() { instant } else { 0.0 };
        let opts = CoverOptions {
            mode: self.settings.mode,
            evo: self.settings.evo.clone(),
        };
        let (a, info) = solve_accp_traced(&self.nets[0], &inst, instant, &opts)?;
        self.inputs.cover = Some(PlanningCase {
            network: self.nets[0].clone(),
            instance: inst,
            instant,
        });
        self.plans.cover = Some(a);
        self.solves.push(("cover".into(), info));
        Ok(())
    }

    fn handle(&mut self, p: Payload) -> Result<(), SimError> {
        let now = self.now;
        match p {
            Payload::Ingest(msg) => {
                let notes = self.bus.ingest(msg.clone())?;
                let cls = notes
                    .first()
                    .map(|n| n.classification)
                    .expect("every classification reaches a department");
                self.record(
                    now,
                    TraceEvent::Ingest {
                        incident: msg.id,
                        scene: msg.scene,
                        location: msg.location,
                        condition: msg.condition.clone(),
                        classification: cls,
                    },
                );
                self.push(
                    now + self.s.notification_latency,
                    Payload::Deliver(msg, cls, notes),
                );
            }
            Payload::Deliver(msg, cls, notes) => self.deliver(&msg, cls, &notes)?,
            Payload::Demand(u) => self.demand_update(u)?,
            Payload::SignalCycle(i) => {
                self.signals[i].pending_ticks.remove(&now.to_bits());
                self.signals[i].controller.tick(now, &[])?;
                self.emit_signal(i);
            }
            Payload::SignalRequest {
                signal,
                vehicle,
                version,
                request,
            } => {
                if self.vehicles[vehicle].version != version {
                    return Ok(());
                }
                let action = self.signals[signal]
                    .controller
                    .request_preemption(request.clone(), now)?;
                self.emit_signal(signal);
                self.record(
                    now,
                    TraceEvent::PreemptionRequest {
                        node: self.signals[signal].node,
                        vehicle: request.vehicle,
                        approach: request.approach,
                        eta: request.eta,
                        action,
                    },
                );
            }
            Payload::Advisory(i) => {
                let a = self.s.approaching[i];
                let slot = &self.signals[self.signal_at[&a.node]];
                let adv = glosa_advise(
                    slot.controller.plan(),
                    &ApproachingVehicle {
                        vehicle: a.vehicle,
                        distance: a.distance,
                        v_min: a.v_min,
                        v_max: a.v_max,
                        approach: a.approach,
                    },
                    now,
                )?;
                self.record(
                    now,
                    TraceEvent::Advisory {
                        node: a.node,
                        vehicle: a.vehicle,
                        advice: adv.advice,
                    },
                );
            }
            Payload::Crossing {
                signal,
                vehicle,
                version,
                approach,
            } => {
                if self.vehicles[vehicle].version != version {
                    return Ok(());
                }
                let vid = self.vehicles[vehicle].signal_id;
                let slot = &mut self.signals[signal];
                slot.controller.tick(now, &[])?;
                let green = slot.controller.is_green_for(approach);
                slot.controller.tick(now, &[vid])?;
                let node = slot.node;
                self.emit_signal(signal);
                self.record(
                    now,
                    TraceEvent::CrossingConfirm {
                        node,
                        vehicle: vid,
                        approach,
                        green,
                    },
                );
            }
            Payload::Arrival(a) => {
                if self.vehicles[a.vehicle].version != a.version {
                    return Ok(());
                }
                let leg = &a.leg;
                let executed = self.nets[a.net].replay(
                    leg.origin(),
                    &leg.arcs,
                    leg.departure,
                    Some(&self.penalty_sets[a.penalties]),
                )?;
                let legs = executed
                    .arcs
                    .iter()
                    .enumerate()
                    .map(|(k, &arc)| Traversal {
                        arc,
                        from: executed.nodes[k],
                        to: executed.nodes[k + 1],
                        enter: executed.node_arrivals[k],
                        exit: executed.node_arrivals[k + 1],
                        penalized: self
                            .penalized_since
                            .get(&arc)
                            .is_some_and(|&t| t <= executed.node_arrivals[k]),
                    })
                    .collect();
                let v = &self.vehicles[a.vehicle];
                let ev = TraceEvent::VehicleArrival {
                    vehicle: v.name.clone(),
                    class: v.class,
                    from: leg.origin(),
                    node: leg.destination(),
                    site: a.site.clone(),
                    departed: leg.departure,
                    executed: executed.arrival,
                    legs,
                    alighted: a.alighted,
                    rescued: a.rescued,
                    patient_wait: a.patient_wait,
                };
                self.record(now, ev);
            }
            Payload::Boarding {
                vehicle,
                version,
                node,
                site,
                boarded,
                onboard,
                rescued,
            } => {
                if self.vehicles[vehicle].version != version {
                    return Ok(());
                }
                let name = self.vehicles[vehicle].name.clone();
                self.record(
                    now,
                    TraceEvent::BoardingComplete {
                        vehicle: name,
                        node,
                        site,
                        boarded,
                        onboard,
                        rescued,
                    },
                );
            }
        }
        Ok(())
    }

    fn emit_signal(&mut self, i: usize) {
        let slot = &self.signals[i];
        let rows: Vec<_> = slot.controller.timeline()[slot.emitted..].to_vec();
        let node = slot.node;
        self.signals[i].emitted += rows.len();
        for r in rows {
            self.record(
                r.t,
                TraceEvent::SignalTick {
                    node,
                    phase: r.phase,
                    stage: r.stage,
                    mode: r.mode,
                    serving: r.serving,
                },
            );
        }
    }

    /// Keeps one cycle event pending per controller while anything else is
    /// still scheduled, or up to the horizon.
    fn ensure_ticks(&mut self) {
        for i in 0..self.signals.len() {
            let slot = &self.signals[i];
            let next = slot.controller.next_change();
            let busy = slot.controller.serving().is_some() || !slot.controller.queue().is_empty();
            if next < self.now || slot.pending_ticks.contains(&next.to_bits()) {
                continue;
            }
            // A tick left over from an earlier hold would otherwise catch up
            // on this change late.
            let later = slot.pending_ticks.iter().any(|b| f64::from_bits(*b) > next);
            if busy || later || next <= self.frontier {
                self.signals[i].pending_ticks.insert(next.to_bits());
                self.push(next, Payload::SignalCycle(i));
            }
        }
    }

    fn deliver(
        &mut self,
        msg: &IncidentMessage,
        cls: Classification,
        notes: &[Notification],
    ) -> Result<(), SimError> {
        let now = self.now;
        for n in notes {
            self.record(
                now,
                TraceEvent::Notification {
                    incident: n.incident,
                    department: n.department,
                    reported: msg.timestamp,
                },
            );
        }
        let to = |d: Department| notes.iter().any(|n| n.department == d);
        let major = cls.level == Level::Major;
        let hazard = matches!(
            cls.emergency_type,
            EmergencyType::Fire | EmergencyType::Attack
        );

        if to(Department::TrafficControl) {
            match cls.emergency_type {
                EmergencyType::Traffic => self.penalize_crash(msg)?,
                _ if hazard && major => self.activate_hazard(msg)?,
                _ => {}
            }
        }
        if to(Department::Hospital) && major {
            if hazard && !self.s.patients.is_empty() && self.plans.dispatch.is_none() {
                self.group_dispatch()?;
            } else {
                self.send_responder(msg)?;
            }
        }
        if to(Department::BusTerminal) && major && !self.s.pickups.is_empty() && self.evac.is_none()
        {
            self.evacuate()?;
        }
        Ok(())
    }

    fn penalize_crash(&mut self, msg: &IncidentMessage) -> Result<(), SimError> {
        let net = &self.nets[self.responder_net];
        let mut pen = self.penalty_sets.last().expect("base set").clone();
        let mut hit = Vec::new();
        for a in net.arcs() {
            if a.to == msg.location && !a.blocked && !pen.contains(a.id) {
                pen.insert(a.id, self.s.crash_penalty)?;
                hit.push(a.id);
                self.penalized_since.insert(a.id, self.now);
            }
        }
        self.penalty_sets.push(pen);
        self.record(
            self.now,
            TraceEvent::Mitigation {
                incident: msg.id,
                zone: Vec::new(),
                contraflow: Vec::new(),
                penalized: hit,
            },
        );
        Ok(())
    }

    fn activate_hazard(&mut self, msg: &IncidentMessage) -> Result<(), SimError> {
        if self.hazard_active {
            return Ok(());
        }
        self.hazard_active = true;
        let h = &self.s.hazard;
        let flow: BTreeSet<ArcId> = h.contraflow.iter().copied().collect();
        let zone: BTreeSet<NodeId> = h.zone.iter().copied().collect();
        let cf = self.nets[0].apply_contraflow(&flow)?;
        let blocked = cf.block_zone(&zone)?;
        self.nets.push(cf);
        self.responder_net = self.nets.len() - 1;
        self.nets.push(blocked);
        self.bus_net = self.nets.len() - 1;
        self.record(
            self.now,
            TraceEvent::Mitigation {
                incident: msg.id,
                zone: zone.into_iter().collect(),
                contraflow: flow.into_iter().collect(),
                penalized: Vec::new(),
            },
        );
        Ok(())
    }

    fn current_penalties(&self) -> usize {
        self.penalty_sets.len() - 1
    }

    fn add_vehicle(&mut self, name: String, class: VehicleClass, signal_id: VehicleId) -> usize {
        self.vehicles.push(Vehicle {
            name,
            class,
            signal_id,
            version: 0,
        });
        self.vehicles.len() - 1
    }

    /// Household and road calls: one ambulance out and back.
    fn send_responder(&mut self, msg: &IncidentMessage) -> Result<(), SimError> {
        let now = self.now;
        let net = &self.nets[self.responder_net];
        let pi = self.current_penalties();
        let pen = &self.penalty_sets[pi];
        let assigned = self.plans.cover.as_ref().and_then(|c| {
            let community = self
                .s
                .communities
                .iter()
                .find(|x| x.location == msg.location)?;
            c.assignment.get(&community.id).copied()
        });
        let mut hospitals: Vec<_> = self.s.hospitals.iter().collect();
        hospitals.sort_by_key(|h| h.id);
        let mut best: Option<(HospitalId, TimedPath<f64>)> = None;
        for h in hospitals {
            if assigned.is_some_and(|a| a != h.id) {
                continue;
            }
            if let Ok(p) = net.reroute_query(h.location, msg.location, now, pen) {
                if best.as_ref().is_none_or(|(_, b)| p.arrival < b.arrival) {
                    best = Some((h.id, p));
                }
            }
        }
        let (hid, outbound) = best.ok_or(SimError::NoResponder(msg.id))?;
        let home = self
            .s
            .hospitals
            .iter()
            .find(|h| h.id == hid)
            .expect("chosen")
            .location;
        let back = net.reroute_query(
            msg.location,
            home,
            outbound.arrival + self.settings.service.on_site,
            pen,
        )?;
        let v = self.add_vehicle(
            format!("responder:{}", msg.id.0),
            VehicleClass::Ambulance,
            VehicleId(RESPONDER_BASE + msg.id.0),
        );
        let legs = [
            (
                outbound.clone(),
                format!("incident:{}", msg.id.0),
                0,
                Some(outbound.arrival - msg.timestamp),
            ),
            (back.clone(), format!("hospital:{}", hid.0), 1, None),
        ];
        for (leg, site, rescued, wait) in legs {
            self.request_signals(v, &leg, None);
            self.push(
                leg.arrival,
                Payload::Arrival(Box::new(Arrival {
                    vehicle: v,
                    version: 0,
                    net: self.responder_net,
                    penalties: pi,
                    leg,
                    site,
                    alighted: 0,
                    rescued,
                    patient_wait: wait,
                })),
            );
        }
        self.plans.responders.push(ResponderPlan {
            incident: msg.id,
            hospital: hid,
            route: SingleRoute { outbound, back },
        });
        Ok(())
    }

    fn group_dispatch(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let inst = DispatchInstance {
            hospitals: self
                .s
                .hospitals
                .iter()
                .map(|h| FleetHospital {
                    id: h.id,
                    location: h.location,
                    ambulances: h.ambulances,
                })
                .collect(),
            patients: self.s.patients.clone(),
            t0: now,
        };
        let opts = DispatchOptions {
            mode: self.settings.mode,
            evo: self.settings.evo.clone(),
            service: self.settings.service,
            delivery: self.settings.delivery,
        };
        let (plan, info) =
            solve_group_dispatch_traced(&self.nets[self.responder_net], &inst, &opts)?;
        self.solves.push(("dispatch".into(), info));
        self.inputs.dispatch = Some(PlanningCase {
            network: self.nets[self.responder_net].clone(),
            instance: inst,
            instant: now,
        });
        for r in &plan.routes {
            let v = self.add_vehicle(
                format!("ambulance:{}", r.ambulance.0),
                VehicleClass::Ambulance,
                VehicleId(AMBULANCE_BASE + u64::from(r.ambulance.0)),
            );
            for st in &r.stops {
                self.request_signals(v, &st.leg, None);
                let (site, rescued, wait) = match st.kind {
                    StopKind::TreatOnSite | StopKind::Pickup => (
                        format!("patient:{}", st.patient.0),
                        0,
                        plan.wait.get(&st.patient).copied(),
                    ),
                    StopKind::DeliverHospital => (
                        format!("hospital:{}", st.hospital.expect("delivery stop").0),
                        1,
                        None,
                    ),
                };
                self.push(
                    st.arrival,
                    Payload::Arrival(Box::new(Arrival {
                        vehicle: v,
                        version: 0,
                        net: self.responder_net,
                        penalties: 0,
                        leg: st.leg.clone(),
                        site: site.clone(),
                        alighted: 0,
                        rescued,
                        patient_wait: wait,
                    })),
                );
                let (boarded, onboard, rescued) = match st.kind {
                    StopKind::TreatOnSite => (0, 0, 1),
                    StopKind::Pickup => (1, 1, 0),
                    StopKind::DeliverHospital => continue,
                };
                self.push(
                    st.depart,
                    Payload::Boarding {
                        vehicle: v,
                        version: 0,
                        node: st.location,
                        site,
                        boarded,
                        onboard,
                        rescued,
                    },
                );
            }
        }
        self.plans.dispatch = Some(plan);
        Ok(())
    }

    fn evacuate(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let closed: BTreeSet<_> = if self.hazard_active {
            self.s.hazard.closed_shelters.iter().copied().collect()
        } else {
            BTreeSet::new()
        };
        let mut pickups = self.s.pickups.clone();
        for p in pickups.iter_mut() {
            if let Some(&d) = self.pending_demand.get(&p.id) {
                p.demand = d;
            }
        }
        let inst = EbpdInstance {
            depots: self.s.depots.clone(),
            pickups,
            shelters: self
                .s
                .shelters
                .iter()
                .filter(|x| !closed.contains(&x.id))
                .cloned()
                .collect(),
            deadline: now + self.s.evacuation_window,
            t0: now,
        };
        let opts = EbpdOptions {
            mode: self.settings.mode,
            evo: self.settings.evo.clone(),
            boarding: self.settings.boarding,
        };
        self.inputs.evacuation = Some(PlanningCase {
            network: self.nets[self.bus_net].clone(),
            instance: inst.clone(),
            instant: now,
        });
        let state = EvacState::new(&self.nets[self.bus_net], inst, opts)?;
        self.solves
            .push(("evacuation".into(), state.solve_info().clone()));
        let plan = state.plan().clone();
        for r in &plan.routes {
            let v = self.add_vehicle(
                format!("bus:{}", r.bus.0),
                VehicleClass::Bus,
                VehicleId(BUS_BASE + u64::from(r.bus.0)),
            );
            self.bus_vehicle.insert(r.bus, v);
        }
        self.plans.evacuation_initial = Some(plan.clone());
        self.evac = Some(state);
        self.schedule_buses(&plan, f64::NEG_INFINITY);
        Ok(())
    }

    /// Schedules every bus event of `plan` not yet due before `from`.
    fn schedule_buses(&mut self, plan: &EvacPlan<f64>, from: f64) {
        for r in &plan.routes {
            let v = self.bus_vehicle[&r.bus];
            let version = self.vehicles[v].version;
            for (k, visit) in r.visits.iter().enumerate() {
                let site = match visit.site {
                    SiteRef::Pickup(id) => format!("pickup:{}", id.0),
                    SiteRef::Shelter(id) => format!("shelter:{}", id.0),
                };
                if visit.arrival >= from {
                    let attrs = bus_attributes(&self.nets[self.bus_net], &r.visits, k);
                    self.request_signals(v, &visit.leg, Some(attrs));
                    self.push(
                        visit.arrival,
                        Payload::Arrival(Box::new(Arrival {
                            vehicle: v,
                            version,
                            net: self.bus_net,
                            penalties: 0,
                            leg: visit.leg.clone(),
                            site: site.clone(),
                            alighted: visit.alighted,
                            rescued: visit.alighted,
                            patient_wait: None,
                        })),
                    );
                }
                if visit.boarded > 0 && visit.depart >= from {
                    self.push(
                        visit.depart,
                        Payload::Boarding {
                            vehicle: v,
                            version,
                            node: visit.location,
                            site,
                            boarded: visit.boarded,
                            onboard: visit.onboard,
                            rescued: 0,
                        },
                    );
                }
            }
        }
    }

    fn demand_update(&mut self, u: DemandUpdate) -> Result<(), SimError> {
        let now = self.now;
        let mut replanned = false;
        match self.evac.as_mut() {
            None => {
                self.pending_demand.insert(u.pickup, u.demand);
            }
            Some(st) => {
                if st.update_demand(u.pickup, u.demand)? {
                    let plan = st.replan(&self.nets[self.bus_net], now)?.clone();
                    self.solves
                        .push(("evacuation_replan".into(), st.solve_info().clone()));
                    replanned = true;
                    let buses: Vec<usize> = self.bus_vehicle.values().copied().collect();
                    for v in buses {
                        self.vehicles[v].version += 1;
                        let vid = self.vehicles[v].signal_id;
                        for i in 0..self.signals.len() {
                            self.signals[i].controller.withdraw(vid, now)?;
                            self.emit_signal(i);
                        }
                    }
                    self.schedule_buses(&plan, now);
                }
            }
        }
        self.record(
            now,
            TraceEvent::DemandUpdate {
                pickup: u.pickup.0,
                demand: u.demand,
                replanned,
            },
        );
        Ok(())
    }

    /// Schedules a priority request and a crossing confirmation at every
    /// signal the leg passes from now on.
    fn request_signals(
        &mut self,
        vehicle: usize,
        leg: &TimedPath<f64>,
        bus: Option<Vec<BusAttributes<f64>>>,
    ) {
        let now = self.now;
        let version = self.vehicles[vehicle].version;
        let vid = self.vehicles[vehicle].signal_id;
        let class = match self.vehicles[vehicle].class {
            VehicleClass::Ambulance => SignalClass::Ambulance,
            VehicleClass::Bus => SignalClass::EmergencyBus,
        };
        for k in 1..leg.nodes.len() {
            let Some(&signal) = self.signal_at.get(&leg.nodes[k]) else {
                continue;
            };
            let Some(&approach) = self.signals[signal].approach_of.get(&leg.arcs[k - 1]) else {
                continue;
            };
            let eta = leg.node_arrivals[k];
            if eta < now {
                continue;
            }
            let request = PreemptionRequest {
                vehicle: vid,
                class,
                approach,
                eta,
                requested_at: (eta - self.settings.request_lead).max(now),
                bus: bus.as_ref().map(|b| b[k]),
            };
            self.push(
                request.requested_at,
                Payload::SignalRequest {
                    signal,
                    vehicle,
                    version,
                    request,
                },
            );
            self.push(
                eta,
                Payload::Crossing {
                    signal,
                    vehicle,
                    version,
                    approach,
                },
            );
        }
    }
}

/// Priority attributes of a bus at each node of the leg into visit `k`.
fn bus_attributes(
    net: &Net,
    visits: &[crate::busevac::Visit<f64>],
    k: usize,
) -> Vec<BusAttributes<f64>> {
    let visit = &visits[k];
    let onboard_before = if k == 0 { 0 } else { visits[k - 1].onboard };
    let demand = onboard_before + visit.boarded;
    let remaining_pickups = visits[k..]
        .iter()
        .filter(|v| matches!(v.site, SiteRef::Pickup(_)))
        .count() as u32;
    let length = |leg: &TimedPath<f64>| -> f64 {
        leg.arcs
            .iter()
            .map(|&a| net.arc(a).map(|x| x.length).unwrap_or(0.0))
            .sum()
    };
    // Distance from the end of this leg to the next shelter on the route.
    let mut beyond = 0.0;
    if !matches!(visit.site, SiteRef::Shelter(_)) {
        for v in &visits[k + 1..] {
            beyond += length(&v.leg);
            if matches!(v.site, SiteRef::Shelter(_)) {
                break;
            }
        }
    }
    let mut out = vec![
        BusAttributes {
            demand,
            shelter_distance: 0.0,
            remaining_pickups,
        };
        visit.leg.nodes.len()
    ];
    let mut acc = beyond;
    for i in (0..visit.leg.arcs.len()).rev() {
        out[i + 1].shelter_distance = acc;
        acc += net.arc(visit.leg.arcs[i]).map(|x| x.length).unwrap_or(0.0);
    }
    out[0].shelter_distance = acc;
    out
}
