//! Emergency response toolkit: time-dependent routing, incident triage,
//! hospital covering, ambulance and bus dispatch, signal preemption, and a
//! deterministic discrete-event simulator tying them together.

pub mod busevac;
pub mod ccu;
pub mod cover;
pub mod dispatch;
pub mod evo;
pub mod net;
pub mod oracle;
pub mod scalar;
pub mod signal;
pub mod sim;
pub mod travel;

pub use scalar::Scalar;

/// Exact rational scalar for tie-sensitive checks.
pub type Exact = num_rational::Ratio<i64>;

/// Network over `f64` seconds and meters.
pub type Network = net::TimeDependentNetwork<f64>;
pub type Profile = net::TravelTimeProfile<f64>;
pub type Path = net::TimedPath<f64>;
