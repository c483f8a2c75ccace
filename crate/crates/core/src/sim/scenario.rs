//! Scenario documents: one JSON file naming a network file (relative to
//! itself) and embedding every module's inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::busevac::{Boarding, BusDepot, PickupId, PickupPoint, Shelter, ShelterId};
use crate::ccu::{Classifier, IncidentMessage, RuleClassifier};
use crate::cover::{Community, HospitalId};
use crate::dispatch::{DeliveryPolicy, Patient, ServiceTimes};
use crate::evo::{EvoConfig, SolverMode};
use crate::net::{ArcId, LoadError, NetworkFile, NodeId, TimeDependentNetwork, TravelTimeProfile};
use crate::signal::{Approach, ControllerConfig, Phase, SignalPlan, VehicleId};

fn one() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    600.0
}

fn default_window() -> f64 {
    3600.0
}

fn default_penalty() -> f64 {
    2.0
}

fn default_lead() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HospitalSpec {
    pub id: HospitalId,
    pub location: NodeId,
    /// Population the hospital may cover.
    pub capacity: u64,
    #[serde(default)]
    pub ambulances: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachArc {
    pub arc: ArcId,
    pub approach: Approach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub node: NodeId,
    pub phases: Vec<Phase<f64>>,
    #[serde(default)]
    pub offset: f64,
    /// Incoming arcs and the approach each one feeds.
    pub approaches: Vec<ApproachArc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HazardSpec {
    /// Nodes closed to evacuation traffic once a major fire or attack is
    /// confirmed.
    #[serde(default)]
    pub zone: Vec<NodeId>,
    #[serde(default)]
    pub contraflow: Vec<ArcId>,
    #[serde(default)]
    pub closed_shelters: Vec<ShelterId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandUpdate {
    pub time: f64,
    pub pickup: PickupId,
    /// New total demand at the pickup.
    pub demand: u32,
}

/// An ordinary vehicle asking a signal for a speed advisory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachingSpec {
    pub time: f64,
    pub node: NodeId,
    pub vehicle: VehicleId,
    pub approach: Approach,
    pub distance: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    #[serde(default)]
    pub mode: SolverMode,
    #[serde(default)]
    pub evo: EvoConfig,
    #[serde(default)]
    pub service: ServiceTimes<f64>,
    #[serde(default)]
    pub delivery: DeliveryPolicy,
    #[serde(default)]
    pub boarding: Boarding<f64>,
    #[serde(default)]
    pub signal: ControllerConfig<f64>,
    /// Seconds before reaching a signal that a vehicle asks for priority.
    #[serde(default = "default_lead")]
    pub request_lead: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mode: SolverMode::default(),
            evo: EvoConfig::default(),
            service: ServiceTimes::default(),
            delivery: DeliveryPolicy::default(),
            boarding: Boarding::default(),
            signal: ControllerConfig::default(),
            request_lead: default_lead(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Network file path, relative to the scenario file.
    pub network: String,
    pub seed: u64,
    #[serde(default = "one")]
    pub notification_latency: f64,
    /// Signal cycling is simulated up to this time.
    #[serde(default)]
    pub horizon: f64,
    #[serde(default)]
    pub hospitals: Vec<HospitalSpec>,
    #[serde(default)]
    pub communities: Vec<Community>,
    #[serde(default = "default_threshold")]
    pub coverage_threshold: f64,
    #[serde(default)]
    pub patients: Vec<Patient<f64>>,
    #[serde(default)]
    pub depots: Vec<BusDepot>,
    #[serde(default)]
    pub pickups: Vec<PickupPoint>,
    #[serde(default)]
    pub shelters: Vec<Shelter>,
    /// Seconds from the evacuation order to the bus deadline.
    #[serde(default = "default_window")]
    pub evacuation_window: f64,
    #[serde(default)]
    pub signals: Vec<SignalSpec>,
    #[serde(default)]
    pub incidents: Vec<IncidentMessage>,
    #[serde(default)]
    pub hazard: HazardSpec,
    #[serde(default)]
    pub demand_updates: Vec<DemandUpdate>,
    #[serde(default)]
    pub approaching: Vec<ApproachingSpec>,
    /// Travel-time factor on roads into a crash site.
    #[serde(default = "default_penalty")]
    pub crash_penalty: f64,
    #[serde(default)]
    pub solver: SolverSettings,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("network {path}: {source}")]
    Network { path: String, source: LoadError },
    #[error("scenario is invalid:\n{0}")]
    Invalid(Report),
}

/// Everything wrong with a scenario, one line each.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Report {
    pub violations: Vec<String>,
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// A scenario with its network file parsed but not yet validated.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub scenario: Scenario,
    pub network: NetworkFile,
    pub path: PathBuf,
}

impl ScenarioBundle {
    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        let net_path = path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&scenario.network);
        let network = NetworkFile::read(&net_path).map_err(|source| ScenarioError::Network {
            path: net_path.display().to_string(),
            source,
        })?;
        Ok(Self {
            scenario,
            network,
            path: path.to_path_buf(),
        })
    }

    pub fn validate(&self) -> Report {
        validate(&self.scenario, &self.network)
    }

    /// Validates, then builds the network.
    pub fn load(&self) -> Result<TimeDependentNetwork<f64>, ScenarioError> {
        let report = self.validate();
        if !report.is_empty() {
            return Err(ScenarioError::Invalid(report));
        }
        let net = self.network.build().map_err(|e| ScenarioError::Network {
            path: self.scenario.network.clone(),
            source: LoadError::Invalid(e),
        })?;
        Ok(net)
    }
}

fn duplicates<K: Ord + Copy + fmt::Debug>(
    report: &mut Report,
    what: &str,
    ids: impl IntoIterator<Item = K>,
) {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            report.push(format!("duplicate {what} id {id:?}"));
        }
    }
}

fn finite_nonneg(report: &mut Report, what: &str, x: f64) {
    if !(x.is_finite() && x >= 0.0) {
        report.push(format!("{what} must be finite and non-negative, got {x}"));
    }
}

/// Collects every violation instead of stopping at the first one.
pub fn validate(s: &Scenario, net: &NetworkFile) -> Report {
    let mut r = Report::default();

    let nodes: BTreeSet<u32> = net.nodes.iter().map(|n| n.id).collect();
    duplicates(&mut r, "node", net.nodes.iter().map(|n| n.id));
    duplicates(&mut r, "arc", net.arcs.iter().map(|a| a.id));
    let arcs: BTreeMap<u32, _> = net.arcs.iter().map(|a| (a.id, a)).collect();
    for a in &net.arcs {
        for end in [a.from, a.to] {
            if !nodes.contains(&end) {
                r.push(format!("arc {} references missing node {end}", a.id));
            }
        }
        if !(a.length_m.is_finite() && a.length_m >= 0.0) {
            r.push(format!("arc {} has invalid length {}", a.id, a.length_m));
        }
        let bps = a.profile.breakpoints.iter().map(|&[o, t]| (o, t)).collect();
        if let Err(e) = TravelTimeProfile::new(bps, a.profile.period_s) {
            r.push(format!("arc {}: {e}", a.id));
        }
    }
    if r.is_empty() {
        if let Err(e) = net.build::<f64>() {
            r.push(format!("network: {e}"));
        }
    }
    let node_ok = |r: &mut Report, what: String, n: NodeId| {
        if !nodes.contains(&n.0) {
            r.push(format!("{what} references missing node {}", n.0));
        }
    };

    if s.name.trim().is_empty() {
        r.push("scenario name is empty");
    }
    finite_nonneg(&mut r, "notification_latency", s.notification_latency);
    finite_nonneg(&mut r, "horizon", s.horizon);
    if !(s.coverage_threshold > 0.0 && s.coverage_threshold.is_finite()) {
        r.push(format!(
            "coverage_threshold must be positive, got {}",
            s.coverage_threshold
        ));
    }
    if !(s.evacuation_window > 0.0 && s.evacuation_window.is_finite()) {
        r.push(format!(
            "evacuation_window must be positive, got {}",
            s.evacuation_window
        ));
    }
    if !(s.crash_penalty >= 1.0 && s.crash_penalty.is_finite()) {
        r.push(format!(
            "crash_penalty must be at least 1, got {}",
            s.crash_penalty
        ));
    }

    duplicates(&mut r, "hospital", s.hospitals.iter().map(|h| h.id));
    for h in &s.hospitals {
        node_ok(&mut r, format!("hospital {}", h.id.0), h.location);
        if h.capacity == 0 {
            r.push(format!("hospital {} has zero capacity", h.id.0));
        }
    }
    duplicates(&mut r, "community", s.communities.iter().map(|c| c.id));
    for c in &s.communities {
        node_ok(&mut r, format!("community {}", c.id.0), c.location);
        if c.population == 0 {
            r.push(format!("community {} has zero population", c.id.0));
        }
    }
    duplicates(&mut r, "patient", s.patients.iter().map(|p| p.id));
    for p in &s.patients {
        node_ok(&mut r, format!("patient {}", p.id.0), p.location);
        finite_nonneg(&mut r, &format!("patient {} onset", p.id.0), p.onset);
    }
    if !s.patients.is_empty() && s.hospitals.iter().all(|h| h.ambulances == 0) {
        r.push("patients listed but no hospital has ambulances");
    }

    duplicates(&mut r, "depot", s.depots.iter().map(|d| d.id));
    for d in &s.depots {
        node_ok(&mut r, format!("depot {}", d.id.0), d.location);
        if d.fleet == 0 {
            r.push(format!("depot {} has an empty fleet", d.id.0));
        }
        if d.bus_capacity == 0 {
            r.push(format!("depot {} has zero bus capacity", d.id.0));
        }
    }
    duplicates(&mut r, "pickup", s.pickups.iter().map(|p| p.id));
    for p in &s.pickups {
        node_ok(&mut r, format!("pickup {}", p.id.0), p.location);
        if p.boarding_cap == 0 {
            r.push(format!("pickup {} has zero boarding cap", p.id.0));
        }
    }
    duplicates(&mut r, "shelter", s.shelters.iter().map(|x| x.id));
    for x in &s.shelters {
        node_ok(&mut r, format!("shelter {}", x.id.0), x.location);
        if x.capacity == 0 {
            r.push(format!("shelter {} has zero capacity", x.id.0));
        }
    }
    if !s.pickups.is_empty() && s.depots.is_empty() {
        r.push("pickups listed but no bus depot");
    }
    if !s.pickups.is_empty() && s.shelters.is_empty() {
        r.push("pickups listed but no shelter");
    }
    let pickups: BTreeSet<PickupId> = s.pickups.iter().map(|p| p.id).collect();
    let shelters: BTreeSet<ShelterId> = s.shelters.iter().map(|x| x.id).collect();

    for (i, sig) in s.signals.iter().enumerate() {
        node_ok(&mut r, format!("signal {i}"), sig.node);
        if let Err(e) = SignalPlan::new(sig.phases.clone(), sig.offset, s.solver.signal.min_green) {
            r.push(format!("signal at node {}: {e}", sig.node.0));
        }
        for a in &sig.approaches {
            match arcs.get(&a.arc.0) {
                None => r.push(format!(
                    "signal at node {} references missing arc {}",
                    sig.node.0, a.arc.0
                )),
                Some(arc) if arc.to != sig.node.0 => r.push(format!(
                    "signal at node {}: arc {} does not end at the signal",
                    sig.node.0, a.arc.0
                )),
                Some(_) => {}
            }
            if !sig
                .phases
                .iter()
                .any(|p| p.approaches.contains(&a.approach))
            {
                r.push(format!(
                    "signal at node {}: no phase serves approach {}",
                    sig.node.0, a.approach
                ));
            }
        }
    }
    duplicates(&mut r, "signal node", s.signals.iter().map(|x| x.node));

    duplicates(&mut r, "incident", s.incidents.iter().map(|m| m.id));
    let classifier = RuleClassifier::default();
    for m in &s.incidents {
        node_ok(&mut r, format!("incident {}", m.id.0), m.location);
        finite_nonneg(
            &mut r,
            &format!("incident {} timestamp", m.id.0),
            m.timestamp,
        );
        if let Err(e) = classifier.classify(m) {
            r.push(format!("incident {}: {e}", m.id.0));
        }
    }

    for n in &s.hazard.zone {
        node_ok(&mut r, "hazard zone".into(), *n);
    }
    for a in &s.hazard.contraflow {
        match arcs.get(&a.0) {
            None => r.push(format!("contraflow references missing arc {}", a.0)),
            Some(arc) if !arc.reversible => {
                r.push(format!("contraflow arc {} is not reversible", a.0))
            }
            Some(_) => {}
        }
    }
    for x in &s.hazard.closed_shelters {
        if !shelters.contains(x) {
            r.push(format!("hazard closes missing shelter {}", x.0));
        }
    }
    for u in &s.demand_updates {
        finite_nonneg(&mut r, "demand update time", u.time);
        if !pickups.contains(&u.pickup) {
            r.push(format!(
                "demand update references missing pickup {}",
                u.pickup.0
            ));
        }
    }
    for a in &s.approaching {
        finite_nonneg(&mut r, "approaching vehicle time", a.time);
        if !s.signals.iter().any(|x| x.node == a.node) {
            r.push(format!(
                "approaching vehicle {} references node {} without a signal",
                a.vehicle.0, a.node.0
            ));
        }
        if !(a.distance > 0.0 && a.v_min > 0.0 && a.v_min <= a.v_max) {
            r.push(format!(
                "approaching vehicle {} has invalid distance or speeds",
                a.vehicle.0
            ));
        }
    }
    if let Err(e) = s.solver.evo.validate() {
        r.push(format!("solver.evo: {e}"));
    }
    finite_nonneg(&mut r, "solver.request_lead", s.solver.request_lead);
    r
}
