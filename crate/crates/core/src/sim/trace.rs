//! Trace records and the metrics computed from them.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccu::{Classification, Department, IncidentId, Scene};
use crate::net::{ArcId, NodeId};
use crate::signal::{Action, Advice, Approach, Mode, PhaseId, Stage, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Ambulance,
    Bus,
}

/// One arc crossed by a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    pub arc: ArcId,
    pub from: NodeId,
    pub to: NodeId,
    pub enter: f64,
    pub exit: f64,
    pub penalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Ingest {
        incident: IncidentId,
        scene: Scene,
        location: NodeId,
        condition: String,
        classification: Classification,
    },
    Notification {
        incident: IncidentId,
        department: Department,
        reported: f64,
    },
    Mitigation {
        incident: IncidentId,
        zone: Vec<NodeId>,
        contraflow: Vec<ArcId>,
        penalized: Vec<ArcId>,
    },
    VehicleArrival {
        vehicle: String,
        class: VehicleClass,
        from: NodeId,
        node: NodeId,
        site: String,
        departed: f64,
        /// Arrival obtained by replaying the leg; the record time is the planned one.
        executed: f64,
        legs: Vec<Traversal>,
        #[serde(default)]
        alighted: u32,
        /// People brought to safety or care by this arrival.
        #[serde(default)]
        rescued: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        patient_wait: Option<f64>,
    },
    BoardingComplete {
        vehicle: String,
        node: NodeId,
        site: String,
        boarded: u32,
        onboard: u32,
        #[serde(default)]
        rescued: u32,
    },
    SignalTick {
        node: NodeId,
        phase: PhaseId,
        stage: Stage,
        mode: Mode,
        serving: Option<VehicleId>,
    },
    PreemptionRequest {
        node: NodeId,
        vehicle: VehicleId,
        approach: Approach,
        eta: f64,
        action: Action,
    },
    CrossingConfirm {
        node: NodeId,
        vehicle: VehicleId,
        approach: Approach,
        green: bool,
    },
    DemandUpdate {
        pickup: u32,
        demand: u32,
        replanned: bool,
    },
    Advisory {
        node: NodeId,
        vehicle: VehicleId,
        advice: Advice<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub t: f64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    /// First incident to the last person rescued.
    pub tet: f64,
    /// Vehicle time spent on penalized arcs.
    pub ct: f64,
    pub max_patient_wait: f64,
    pub total_evacuated: u64,
    /// Largest delay between an incident and the notification of each
    /// department.
    pub notification_latency: BTreeMap<Department, f64>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_trace(mut w: impl Write, trace: &[TraceRecord]) -> std::io::Result<()> {
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(reader: impl BufRead) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| TraceError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

/// Pure aggregation over a trace.
pub fn compute_metrics(trace: &[TraceRecord]) -> Result<Metrics, TraceError> {
    let mut m = Metrics::default();
    let mut first_incident: Option<f64> = None;
    let mut last_rescue: Option<f64> = None;
    let mut reported: BTreeMap<IncidentId, f64> = BTreeMap::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (i, r) in trace.iter().enumerate() {
        let line = i + 1;
        if !r.t.is_finite() || r.t < prev_t {
            return Err(TraceError::Malformed {
                line,
                reason: format!("time {} is not after {}", r.t, prev_t),
            });
        }
        prev_t = r.t;
        let mut rescue = |n: u32, t: f64| {
            if n > 0 {
                last_rescue = Some(last_rescue.map_or(t, |x: f64| x.max(t)));
            }
        };
        match &r.event {
            TraceEvent::Ingest { incident, .. } => {
                first_incident = Some(first_incident.map_or(r.t, |x| x.min(r.t)));
                reported.insert(*incident, r.t);
            }
            TraceEvent::Notification {
                incident,
                department,
                ..
            } => {
                let at = reported
                    .get(incident)
                    .ok_or_else(|| TraceError::Malformed {
                        line,
                        reason: format!("notification for unknown incident {}", incident.0),
                    })?;
                let e = m.notification_latency.entry(*department).or_insert(0.0);
                *e = e.max(r.t - at);
            }
            TraceEvent::VehicleArrival {
                legs,
                alighted,
                rescued,
                patient_wait,
                ..
            } => {
                for leg in legs {
                    if leg.penalized {
                        m.ct += leg.exit - leg.enter;
                    }
                }
                m.total_evacuated += u64::from(*alighted);
                if let Some(w) = patient_wait {
                    m.max_patient_wait = m.max_patient_wait.max(*w);
                }
                rescue(*rescued, r.t);
            }
            TraceEvent::BoardingComplete { rescued, .. } => rescue(*rescued, r.t),
            _ => {}
        }
    }
    if let (Some(a), Some(b)) = (first_incident, last_rescue) {
        m.tet = (b - a).max(0.0);
    }
    Ok(m)
}

pub fn write_metrics_csv(mut w: impl Write, m: &Metrics) -> std::io::Result<()> {
    writeln!(w, "metric,value")?;
    writeln!(w, "tet,{}", m.tet)?;
    writeln!(w, "ct,{}", m.ct)?;
    writeln!(w, "max_patient_wait,{}", m.max_patient_wait)?;
    writeln!(w, "total_evacuated,{}", m.total_evacuated)?;
    for (d, l) in &m.notification_latency {
        writeln!(w, "latency_{},{}", d.name(), l)?;
    }
    Ok(())
}
