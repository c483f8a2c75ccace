//! Command-and-control unit: incident triage and department notification.
//!
//! Classification sits behind [`Classifier`]; the bundled
//! [`RuleClassifier`] is a fixed condition-token table.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IncidentId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scene {
    Household,
    Road,
    Facility,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionSnapshot {
    /// Vehicles per hour.
    pub link_flow: f64,
    /// Meters per second.
    pub avg_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentMessage {
    pub id: IncidentId,
    pub timestamp: f64,
    pub scene: Scene,
    pub location: NodeId,
    pub condition: String,
    #[serde(default)]
    pub population_impacted: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congestion: Option<CongestionSnapshot>,
    /// Opaque attachment reference (uploaded image or clip).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmergencyType {
    Medical,
    Traffic,
    Fire,
    Attack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Classification {
    pub emergency_type: EmergencyType,
    pub level: Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Department {
    Hospital,
    Police,
    Fire,
    BusTerminal,
    TrafficControl,
}

impl Department {
    pub const ALL: [Department; 5] = [
        Department::Hospital,
        Department::Police,
        Department::Fire,
        Department::BusTerminal,
        Department::TrafficControl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Department::Hospital => "hospital",
            Department::Police => "police",
            Department::Fire => "fire",
            Department::BusTerminal => "bus_terminal",
            Department::TrafficControl => "traffic_control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub incident: IncidentId,
    pub department: Department,
    pub classification: Classification,
    pub payload: IncidentMessage,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcuError {
    #[error("unknown condition token {0:?}")]
    UnknownCondition(String),
    #[error("incident {0:?} already ingested")]
    DuplicateIncident(IncidentId),
    #[error("incident {id:?}: {reason}")]
    InvalidMessage {
        id: IncidentId,
        reason: &'static str,
    },
}

/// Maps an incident to its emergency type and severity.
pub trait Classifier {
    fn classify(&self, msg: &IncidentMessage) -> Result<Classification, CcuError>;
}

/// Conditions triaged as major medical emergencies.
pub const MAJOR_MEDICAL: [&str; 15] = [
    "cardiac_arrest",
    "unconsciousness",
    "difficulty_breathing",
    "seizures",
    "severe_injuries",
    "strokes",
    "head_trauma",
    "bone_fractures",
    "asthma_attacks",
    "chronic_condition_elderly",
    "sick_children",
    "bleeding_cuts",
    "bruising_swelling",
    "minor_injuries",
    "persistent_fevers",
];

/// Conditions triaged as minor medical emergencies.
pub const MINOR_MEDICAL: [&str; 4] = ["constipation", "chronic_cough", "diarrhoea", "skin_rash"];

pub const TRAFFIC_CRASH: [&str; 3] = ["vehicle_crash", "collision", "vibration_crash_alert"];

pub const FIRE: [&str; 3] = ["fire_alarm", "fire", "smoke_detected"];

pub const ATTACK: [&str; 3] = ["terrorist_attack", "intrusion_alarm", "armed_attack"];

/// Deterministic token lookup. Unknown tokens are errors.
#[derive(Debug, Clone)]
pub struct RuleClassifier {
    table: BTreeMap<&'static str, Classification>,
}

impl Default for RuleClassifier {
    fn default() -> Self {
        let mut table = BTreeMap::new();
        let groups: [(&[&'static str], EmergencyType, Level); 5] = [
            (&MAJOR_MEDICAL, EmergencyType::Medical, Level::Major),
            (&MINOR_MEDICAL, EmergencyType::Medical, Level::Minor),
            (&TRAFFIC_CRASH, EmergencyType::Traffic, Level::Major),
            (&FIRE, EmergencyType::Fire, Level::Major),
            (&ATTACK, EmergencyType::Attack, Level::Major),
        ];
        for (tokens, emergency_type, level) in groups {
            for &t in tokens {
                table.insert(
                    t,
                    Classification {
                        emergency_type,
                        level,
                    },
                );
            }
        }
        Self { table }
    }
}

impl RuleClassifier {
    pub fn tokens(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.table.keys().copied()
    }
}

impl Classifier for RuleClassifier {
    fn classify(&self, msg: &IncidentMessage) -> Result<Classification, CcuError> {
        self.table
            .get(msg.condition.as_str())
            .copied()
            .ok_or_else(|| CcuError::UnknownCondition(msg.condition.clone()))
    }
}

/// Departments to notify for a classification, in notification order.
pub fn departments_for(cls: Classification) -> &'static [Department] {
    use Department::*;
    use EmergencyType as E;
    match (cls.emergency_type, cls.level) {
        (E::Medical, _) => &[Hospital],
        (E::Traffic, Level::Major) => &[Police, Hospital, TrafficControl],
        (E::Traffic, Level::Minor) => &[Police, TrafficControl],
        (E::Fire | E::Attack, Level::Major) => {
            &[Fire, Hospital, BusTerminal, Police, TrafficControl]
        }
        (E::Fire, Level::Minor) => &[Fire],
        (E::Attack, Level::Minor) => &[Police],
    }
}

pub fn route_notifications(cls: Classification, msg: &IncidentMessage) -> Vec<Notification> {
    departments_for(cls)
        .iter()
        .map(|&department| Notification {
            incident: msg.id,
            department,
            classification: cls,
            payload: msg.clone(),
        })
        .collect()
}

fn validate(msg: &IncidentMessage) -> Result<(), CcuError> {
    if !(msg.timestamp >= 0.0) || !msg.timestamp.is_finite() {
        return Err(CcuError::InvalidMessage {
            id: msg.id,
            reason: "timestamp must be finite and non-negative",
        });
    }
    Ok(())
}

/// Ingestion state: per-department queues plus the emission log.
///
/// Single writer. Queues are ordered by (timestamp, incident id) no matter
/// the arrival order of messages.
#[derive(Debug, Clone)]
pub struct NotificationBus<C = RuleClassifier> {
    classifier: C,
    seen: BTreeSet<IncidentId>,
    queues: BTreeMap<Department, Vec<Notification>>,
    log: Vec<Notification>,
}

impl Default for NotificationBus<RuleClassifier> {
    fn default() -> Self {
        Self::new(RuleClassifier::default())
    }
}

impl<C: Classifier> NotificationBus<C> {
    pub fn new(classifier: C) -> Self {
        Self {
            classifier,
            seen: BTreeSet::new(),
            queues: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn classifier(&self) -> &C {
        &self.classifier
    }

    /// Classifies and routes one message. On error nothing changes.
    pub fn ingest(&mut self, msg: IncidentMessage) -> Result<Vec<Notification>, CcuError> {
        if self.seen.contains(&msg.id) {
            return Err(CcuError::DuplicateIncident(msg.id));
        }
        validate(&msg)?;
        let cls = self.classifier.classify(&msg)?;
        let out = route_notifications(cls, &msg);
        self.seen.insert(msg.id);
        for n in &out {
            let q = self.queues.entry(n.department).or_default();
            let key = (n.payload.timestamp, n.incident);
            let pos = q.partition_point(|x| {
                (x.payload.timestamp, x.incident)
                    .partial_cmp(&key)
                    .is_some_and(|o| o.is_le())
            });
            q.insert(pos, n.clone());
        }
        self.log.extend(out.iter().cloned());
        Ok(out)
    }

    pub fn queue(&self, dept: Department) -> &[Notification] {
        self.queues.get(&dept).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every notification in emission order.
    pub fn log(&self) -> &[Notification] {
        &self.log
    }

    pub fn ingested(&self) -> usize {
        self.seen.len()
    }
}

/// Reads a JSON-lines incident stream. Blank lines are skipped.
pub fn read_incidents(reader: impl BufRead) -> Result<Vec<IncidentMessage>, serde_json::Error> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(serde_json::Error::io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes notifications as JSON lines in the given order.
pub fn write_notification_log(mut w: impl Write, log: &[Notification]) -> std::io::Result<()> {
    for n in log {
        serde_json::to_writer(&mut w, n)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
