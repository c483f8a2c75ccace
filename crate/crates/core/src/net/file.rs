//! JSON network file format.
//!
//! ```json
//! { "nodes": [{"id": 0, "x": 0.0, "y": 0.0}],
//!   "arcs":  [{"id": 0, "from": 0, "to": 1, "length_m": 250.0, "reversible": false,
//!              "profile": {"period_s": 86400, "breakpoints": [[0, 60], [3600, 120]]}}] }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Arc, ArcId, NetError, Node, NodeId, TimeDependentNetwork, TravelTimeProfile, DAY_SECONDS,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed network JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u32,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
}

fn default_period() -> f64 {
    DAY_SECONDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    #[serde(default = "default_period")]
    pub period_s: f64,
    pub breakpoints: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcRecord {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub length_m: f64,
    #[serde(default)]
    pub reversible: bool,
    pub profile: ProfileRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<NodeRecord>,
    pub arcs: Vec<ArcRecord>,
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Validates and converts. FIFO violations name the offending arc.
    pub fn build<T: Scalar>(&self) -> Result<TimeDependentNetwork<T>, NetError> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                id: NodeId(n.id),
                x: n.x,
                y: n.y,
            })
            .collect();
        let arcs = self
            .arcs
            .iter()
            .map(|a| {
                let id = ArcId(a.id);
                let lit = |x: f64| {
                    T::from_f64(x).ok_or(NetError::InvalidArc {
                        arc: id,
                        reason: "value not representable",
                    })
                };
                let bps = a
                    .profile
                    .breakpoints
                    .iter()
                    .map(|&[o, t]| Ok((lit(o)?, lit(t)?)))
                    .collect::<Result<Vec<_>, NetError>>()?;
                let profile = TravelTimeProfile::new(bps, lit(a.profile.period_s)?)
                    .map_err(|source| NetError::Profile { arc: id, source })?;
                Ok(Arc {
                    id,
                    from: NodeId(a.from),
                    to: NodeId(a.to),
                    profile,
                    length: lit(a.length_m)?,
                    reversible: a.reversible,
                    blocked: false,
                })
            })
            .collect::<Result<Vec<_>, NetError>>()?;
        TimeDependentNetwork::new(nodes, arcs)
    }

    pub fn from_network<T: Scalar>(net: &TimeDependentNetwork<T>) -> Self {
        Self {
            nodes: net
                .nodes()
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.0,
                    x: n.x,
                    y: n.y,
                })
                .collect(),
            arcs: net
                .arcs()
                .iter()
                .map(|a| ArcRecord {
                    id: a.id.0,
                    from: a.from.0,
                    to: a.to.0,
                    length_m: a.length.as_f64(),
                    reversible: a.reversible,
                    profile: ProfileRecord {
                        period_s: a.profile.period().as_f64(),
                        breakpoints: a
                            .profile
                            .breakpoints()
                            .iter()
                            .map(|&(o, t)| [o.as_f64(), t.as_f64()])
                            .collect(),
                    },
                })
                .collect(),
        }
    }
}
