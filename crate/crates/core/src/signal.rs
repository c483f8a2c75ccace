//! Intersection signal control: fixed-time plans, green light speed
//! advisories, and an emergency preemption controller.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u64);

/// Approach (incoming movement) index at an intersection.
pub type Approach = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase<T> {
    pub id: PhaseId,
    pub approaches: Vec<Approach>,
    pub green: T,
    pub intergreen: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPlan<T> {
    phases: Vec<Phase<T>>,
    offset: T,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("a plan needs at least two phases")]
    TooFewPhases,
    #[error("phase {0:?} green below the minimum")]
    ShortGreen(PhaseId),
    #[error("phase {0:?} has negative intergreen")]
    NegativeIntergreen(PhaseId),
    #[error("duplicate phase {0:?}")]
    DuplicatePhase(PhaseId),
    #[error("invalid speed bounds")]
    InvalidSpeedBounds,
    #[error("distance to the stop line must be positive")]
    InvalidDistance,
    #[error("request for {0:?} has an arrival before now")]
    StaleRequest(VehicleId),
    #[error("bus attributes must be given for buses and only for buses ({0:?})")]
    BusAttributes(VehicleId),
    #[error("no phase serves approach {0}")]
    UnservedApproach(Approach),
    #[error("time moved backwards")]
    TimeRegression,
}

pub const DEFAULT_MIN_GREEN: f64 = 5.0;
pub const DEFAULT_MAX_EXTENSION: f64 = 60.0;
pub const GLOSA_HORIZON_CYCLES: u32 = 2;

/// Where a plan stands at some instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAt<T> {
    pub phase: PhaseId,
    pub index: usize,
    pub elapsed: T,
    pub green: bool,
}

impl<T: Scalar> SignalPlan<T> {
    pub fn new(phases: Vec<Phase<T>>, offset: T, min_green: T) -> Result<Self, SignalError> {
        if phases.len() < 2 {
            return Err(SignalError::TooFewPhases);
        }
        let mut ids = std::collections::BTreeSet::new();
        for p in &phases {
            if !ids.insert(p.id) {
                return Err(SignalError::DuplicatePhase(p.id));
            }
            if p.green < min_green || !(p.green > T::zero()) {
                return Err(SignalError::ShortGreen(p.id));
            }
            if p.intergreen < T::zero() {
                return Err(SignalError::NegativeIntergreen(p.id));
            }
        }
        Ok(Self { phases, offset })
    }

    pub fn phases(&self) -> &[Phase<T>] {
        &self.phases
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn cycle(&self) -> T {
        self.phases
            .iter()
            .fold(T::zero(), |acc, p| acc + p.green + p.intergreen)
    }

    pub fn serves(&self, index: usize, approach: Approach) -> bool {
        self.phases[index].approaches.contains(&approach)
    }

    pub fn phase_at(&self, t: T) -> PhaseAt<T> {
        let mut u = (t - self.offset).wrap(self.cycle());
        for (index, p) in self.phases.iter().enumerate() {
            let len = p.green + p.intergreen;
            if u < len || index + 1 == self.phases.len() {
                return PhaseAt {
                    phase: p.id,
                    index,
                    elapsed: u,
                    green: u < p.green,
                };
            }
            u = u - len;
        }
        unreachable!("plan has phases")
    }

    /// Green intervals `[start, end)` for `approach` overlapping `[from, to]`,
    /// in time order, under fixed-time operation.
    pub fn green_windows(&self, approach: Approach, from: T, to: T) -> Vec<(T, T)> {
        let cycle = self.cycle();
        let into = (from - self.offset).wrap(cycle);
        let mut base = from - into;
        let mut out: Vec<(T, T)> = Vec::new();
        while base <= to {
            let mut s = base;
            for (i, p) in self.phases.iter().enumerate() {
                let e = s + p.green;
                if self.serves(i, approach) && e > from && s <= to {
                    match out.last_mut() {
                        Some(last) if last.1 == s => last.1 = e,
                        _ => out.push((s, e)),
                    }
                }
                s = e + p.intergreen;
            }
            base = base + cycle;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachingVehicle<T> {
    pub vehicle: VehicleId,
    pub distance: T,
    pub v_min: T,
    pub v_max: T,
    pub approach: Approach,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "advice", rename_all = "snake_case")]
pub enum Advice<T> {
    Speed { speed: T },
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlosaAdvisory<T> {
    pub vehicle: VehicleId,
    pub advice: Advice<T>,
}

/// Speed that brings the vehicle to the stop line inside the earliest
/// reachable green window within the horizon, or stop advice.
pub fn glosa_advise<T: Scalar>(
    plan: &SignalPlan<T>,
    v: &ApproachingVehicle<T>,
    now: T,
) -> Result<GlosaAdvisory<T>, SignalError> {
    if !(v.distance > T::zero()) {
        return Err(SignalError::InvalidDistance);
    }
    if !(v.v_min > T::zero()) || v.v_min > v.v_max {
        return Err(SignalError::InvalidSpeedBounds);
    }
    let earliest = now + v.distance / v.v_max;
    let latest = now + v.distance / v.v_min;
    let horizon = now + plan.cycle() * T::from_u32(GLOSA_HORIZON_CYCLES).expect("small");
    let stop = GlosaAdvisory {
        vehicle: v.vehicle,
        advice: Advice::Stop,
    };
    for (s, e) in plan.green_windows(v.approach, earliest, latest.min_of(horizon)) {
        let entry = s.max_of(earliest);
        if entry >= e || entry > latest || entry > horizon {
            continue;
        }
        let mut speed = (v.distance / (entry - now)).max_of(v.v_min).min_of(v.v_max);
        // Rounding may land a hair before the window opens.
        let mut guard = 0;
        while now + v.distance / speed < s && guard < 64 {
            let lower = speed.step_down();
            if lower == speed || lower < v.v_min {
                break;
            }
            speed = lower;
            guard += 1;
        }
        let arrival = now + v.distance / speed;
        if arrival >= s && arrival < e {
            return Ok(GlosaAdvisory {
                vehicle: v.vehicle,
                advice: Advice::Speed { speed },
            });
        }
    }
    Ok(stop)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    EmergencyBus,
    Ambulance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusAttributes<T> {
    pub demand: u32,
    pub shelter_distance: T,
    pub remaining_pickups: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreemptionRequest<T> {
    pub vehicle: VehicleId,
    pub class: VehicleClass,
    pub approach: Approach,
    pub eta: T,
    pub requested_at: T,
    pub bus: Option<BusAttributes<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityWeights<T> {
    pub demand: T,
    pub shelter_distance: T,
    pub remaining_pickups: T,
}

impl<T: Scalar> Default for PriorityWeights<T> {
    fn default() -> Self {
        Self {
            demand: T::lit(1.0),
            shelter_distance: T::lit(0.001),
            remaining_pickups: T::lit(5.0),
        }
    }
}

impl<T: Scalar> PriorityWeights<T> {
    pub fn scaled(&self, k: T) -> Self {
        Self {
            demand: self.demand * k,
            shelter_distance: self.shelter_distance * k,
            remaining_pickups: self.remaining_pickups * k,
        }
    }
}

/// Class rank first (ambulances above buses), then the bus linear score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityScore<T> {
    pub class: VehicleClass,
    pub value: T,
}

impl<T: Scalar> PartialOrd for PriorityScore<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(
            self.class
                .cmp(&other.class)
                .then_with(|| self.value.total_cmp(&other.value)),
        )
    }
}

pub fn priority_score<T: Scalar>(
    req: &PreemptionRequest<T>,
    w: &PriorityWeights<T>,
) -> Result<PriorityScore<T>, SignalError> {
    let value = match (req.class, &req.bus) {
        (VehicleClass::Ambulance, None) => T::zero(),
        (VehicleClass::EmergencyBus, Some(b)) => {
            w.demand * T::from_u32(b.demand).expect("count")
                - w.shelter_distance * b.shelter_distance
                + w.remaining_pickups * T::from_u32(b.remaining_pickups).expect("count")
        }
        _ => return Err(SignalError::BusAttributes(req.vehicle)),
    };
    Ok(PriorityScore {
        class: req.class,
        value,
    })
}

/// Service order: higher score, then earlier arrival, earlier request,
/// smaller vehicle id.
fn service_order<T: Scalar>(a: &Pending<T>, b: &Pending<T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.request.eta.total_cmp(&b.request.eta))
        .then_with(|| a.request.requested_at.total_cmp(&b.request.requested_at))
        .then_with(|| a.request.vehicle.cmp(&b.request.vehicle))
}

#[derive(Debug, Clone, PartialEq)]
struct Pending<T> {
    request: PreemptionRequest<T>,
    score: PriorityScore<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Normal,
    Extended,
    Preempting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Green,
    Clearance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Extend,
    Switch,
    Queue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig<T> {
    pub min_green: T,
    pub max_extension: T,
    pub weights: PriorityWeights<T>,
}

impl<T: Scalar> Default for ControllerConfig<T> {
    fn default() -> Self {
        Self {
            min_green: T::lit(DEFAULT_MIN_GREEN),
            max_extension: T::lit(DEFAULT_MAX_EXTENSION),
            weights: PriorityWeights::default(),
        }
    }
}

/// One row per state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow<T> {
    pub t: T,
    pub phase: PhaseId,
    pub stage: Stage,
    pub mode: Mode,
    pub serving: Option<VehicleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceEvent {
    /// The vehicle's approach is green and held for it.
    Served,
    /// Crossing confirmed while held.
    Crossed,
    /// Hold ended at the extension cap before confirmation.
    Expired,
    /// A higher-priority request took over.
    Bumped,
    /// The vehicle cancelled its request.
    Withdrawn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRecord<T> {
    pub t: T,
    pub vehicle: VehicleId,
    pub event: ServiceEvent,
    pub score: PriorityScore<T>,
    /// Scores of requests still waiting at that moment.
    pub pending: Vec<PriorityScore<T>>,
}

/// Preemption state machine for one intersection. Callers feed requests
/// and ticks with nondecreasing times.
#[derive(Debug, Clone)]
pub struct SignalController<T> {
    plan: SignalPlan<T>,
    config: ControllerConfig<T>,
    now: T,
    phase: usize,
    stage: Stage,
    stage_start: T,
    /// End of the current green, or of the current clearance.
    stage_end: T,
    next_phase: Option<usize>,
    serving: Option<(Pending<T>, usize, Action)>,
    held: bool,
    queue: Vec<Pending<T>>,
    timeline: Vec<TimelineRow<T>>,
    log: Vec<ServiceRecord<T>>,
}

impl<T: Scalar> SignalController<T> {
    /// Starts in the fixed-time state of `plan` at `t`.
    pub fn new(plan: SignalPlan<T>, config: ControllerConfig<T>, t: T) -> Self {
        let at = plan.phase_at(t);
        let p = &plan.phases[at.index];
        let (stage, stage_start, stage_end) = if at.green {
            let s = t - at.elapsed;
            (Stage::Green, s, s + p.green)
        } else {
            let s = t - at.elapsed + p.green;
            (Stage::Clearance, s, s + p.intergreen)
        };
        let mut c = Self {
            phase: at.index,
            plan,
            config,
            now: t,
            stage,
            stage_start,
            stage_end,
            next_phase: None,
            serving: None,
            held: false,
            queue: Vec::new(),
            timeline: Vec::new(),
            log: Vec::new(),
        };
        c.record(t);
        c
    }

    pub fn plan(&self) -> &SignalPlan<T> {
        &self.plan
    }

    pub fn now(&self) -> T {
        self.now
    }

    pub fn current_phase(&self) -> PhaseId {
        self.plan.phases[self.phase].id
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn mode(&self) -> Mode {
        match &self.serving {
            None => Mode::Normal,
            Some((_, _, Action::Extend)) => Mode::Extended,
            Some(_) => Mode::Preempting,
        }
    }

    pub fn serving(&self) -> Option<VehicleId> {
        self.serving.as_ref().map(|(p, _, _)| p.request.vehicle)
    }

    pub fn queue(&self) -> Vec<VehicleId> {
        self.queue.iter().map(|p| p.request.vehicle).collect()
    }

    pub fn timeline(&self) -> &[TimelineRow<T>] {
        &self.timeline
    }

    pub fn service_log(&self) -> &[ServiceRecord<T>] {
        &self.log
    }

    /// Whether `approach` has green right now.
    pub fn is_green_for(&self, approach: Approach) -> bool {
        self.stage == Stage::Green && self.plan.serves(self.phase, approach)
    }

    /// Time of the next internal state change.
    pub fn next_change(&self) -> T {
        self.stage_end
    }

    fn record(&mut self, t: T) {
        let row = TimelineRow {
            t,
            phase: self.current_phase(),
            stage: self.stage,
            mode: self.mode(),
            serving: self.serving(),
        };
        if let Some(last) = self.timeline.last() {
            if last.phase == row.phase
                && last.stage == row.stage
                && last.mode == row.mode
                && last.serving == row.serving
            {
                return;
            }
        }
        self.timeline.push(row);
    }

    fn log_event(&mut self, t: T, who: &Pending<T>, event: ServiceEvent) {
        self.log.push(ServiceRecord {
            t,
            vehicle: who.request.vehicle,
            event,
            score: who.score,
            pending: self.queue.iter().map(|p| p.score).collect(),
        });
    }

    fn nominal_end(&self) -> T {
        self.stage_start + self.plan.phases[self.phase].green
    }

    fn cap(&self) -> T {
        self.nominal_end() + self.config.max_extension
    }

    fn enqueue(&mut self, p: Pending<T>) {
        let pos = self
            .queue
            .partition_point(|q| service_order(q, &p) != Ordering::Greater);
        self.queue.insert(pos, p);
    }

    /// Applies every scheduled change up to and including `t`.
    fn advance(&mut self, t: T) {
        while self.stage_end <= t {
            let at = self.stage_end;
            match self.stage {
                Stage::Green => {
                    if self.held {
                        // Hold ran into the cap without a confirmation.
                        self.held = false;
                        if let Some((p, _, _)) = self.serving.take() {
                            self.log_event(at, &p, ServiceEvent::Expired);
                        }
                    }
                    self.stage = Stage::Clearance;
                    self.stage_start = at;
                    self.stage_end = at + self.plan.phases[self.phase].intergreen;
                    self.record(at);
                    if self.serving.is_none() {
                        self.serve_next(at);
                    }
                }
                Stage::Clearance => {
                    let n = self.plan.phases.len();
                    self.phase = self.next_phase.take().unwrap_or((self.phase + 1) % n);
                    self.stage = Stage::Green;
                    self.stage_start = at;
                    self.stage_end = at + self.plan.phases[self.phase].green;
                    let target = self.serving.as_ref().map(|(_, target, _)| *target);
                    if target == Some(self.phase) {
                        self.held = true;
                        self.stage_end = self.cap();
                        let who = self.serving.as_ref().expect("serving").0.clone();
                        self.log_event(at, &who, ServiceEvent::Served);
                    }
                    self.record(at);
                }
            }
        }
        self.now = t;
    }

    fn target_for(&self, approach: Approach) -> Result<usize, SignalError> {
        let n = self.plan.phases.len();
        (1..=n)
            .map(|k| (self.phase + k) % n)
            .find(|&i| self.plan.serves(i, approach))
            .ok_or(SignalError::UnservedApproach(approach))
    }

    /// Gives right of way to `p`, which must be the top request.
    fn serve(&mut self, p: Pending<T>, t: T) -> Action {
        if let Some((old, _, _)) = self.serving.take() {
            self.log_event(t, &old, ServiceEvent::Bumped);
            self.enqueue(old);
        }
        if self.is_green_for(p.request.approach) {
            self.held = true;
            self.stage_end = self.cap();
            self.next_phase = None;
            self.serving = Some((p.clone(), self.phase, Action::Extend));
            self.log_event(t, &p, ServiceEvent::Served);
            self.record(t);
            return Action::Extend;
        }
        let target = self
            .target_for(p.request.approach)
            .expect("approach checked on request");
        self.next_phase = Some(target);
        if self.stage == Stage::Green {
            self.held = false;
            let earliest = self.stage_start + self.config.min_green;
            let end = earliest.max_of(t);
            if end < self.stage_end {
                self.stage_end = end;
            }
        }
        self.serving = Some((p, target, Action::Switch));
        self.record(t);
        self.advance(t);
        Action::Switch
    }

    fn serve_next(&mut self, t: T) {
        if self.queue.is_empty() {
            return;
        }
        let p = self.queue.remove(0);
        self.serve(p, t);
    }

    pub fn request_preemption(
        &mut self,
        req: PreemptionRequest<T>,
        now: T,
    ) -> Result<Action, SignalError> {
        if now < self.now {
            return Err(SignalError::TimeRegression);
        }
        if req.eta < now {
            return Err(SignalError::StaleRequest(req.vehicle));
        }
        let score = priority_score(&req, &self.config.weights)?;
        self.target_for(req.approach)?;
        self.advance(now);
        // A repeated request replaces the earlier one.
        self.queue.retain(|p| p.request.vehicle != req.vehicle);
        let p = Pending {
            request: req,
            score,
        };
        if let Some((cur, _, action)) = &self.serving {
            if cur.request.vehicle == p.request.vehicle {
                let still_top = self
                    .queue
                    .first()
                    .is_none_or(|q| service_order(&p, q) != Ordering::Greater);
                if cur.request.approach == p.request.approach && still_top {
                    let action = *action;
                    self.serving.as_mut().expect("serving").0 = p;
                    return Ok(action);
                }
                // Otherwise it competes afresh.
                self.release(now, ServiceEvent::Withdrawn);
            }
        }
        let top = match &self.serving {
            None => true,
            Some((cur, _, _)) => service_order(&p, cur) == Ordering::Less,
        };
        if top {
            Ok(self.serve(p, now))
        } else {
            self.enqueue(p);
            Ok(Action::Queue)
        }
    }

    /// Advances the clock to `now` and handles crossing confirmations.
    pub fn tick(&mut self, now: T, crossed: &[VehicleId]) -> Result<(), SignalError> {
        if now < self.now {
            return Err(SignalError::TimeRegression);
        }
        self.advance(now);
        self.queue.retain(|p| !crossed.contains(&p.request.vehicle));
        if matches!(&self.serving, Some((p, _, _)) if crossed.contains(&p.request.vehicle)) {
            self.release(now, ServiceEvent::Crossed);
        }
        Ok(())
    }

    /// Drops any request from `vehicle`. A hold granted to it ends as if the
    /// vehicle had crossed.
    pub fn withdraw(&mut self, vehicle: VehicleId, now: T) -> Result<(), SignalError> {
        if now < self.now {
            return Err(SignalError::TimeRegression);
        }
        self.advance(now);
        self.queue.retain(|p| p.request.vehicle != vehicle);
        if self.serving() == Some(vehicle) {
            self.release(now, ServiceEvent::Withdrawn);
        }
        Ok(())
    }

    /// Ends service of the current request and moves on to the next one.
    fn release(&mut self, now: T, event: ServiceEvent) {
        let (p, target, _) = self.serving.take().expect("serving");
        self.log_event(now, &p, event);
        if self.held && self.stage == Stage::Green && self.phase == target {
            self.held = false;
            self.stage_end = now.max_of(self.nominal_end()).min_of(self.cap());
        }
        self.next_phase = None;
        self.record(now);
        self.serve_next(now);
        self.advance(now);
    }

    /// Timeline as CSV rows `t,phase,stage,mode,vehicle`.
    pub fn write_trace_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t,phase,stage,mode,vehicle")?;
        for r in &self.timeline {
            let stage = match r.stage {
                Stage::Green => "green",
                Stage::Clearance => "clearance",
            };
            let mode = match r.mode {
                Mode::Normal => "normal",
                Mode::Extended => "extended",
                Mode::Preempting => "preempting",
            };
            let v = r.serving.map(|v| v.0.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", r.t.as_f64(), r.phase.0, stage, mode, v)?;
        }
        Ok(())
    }
}
