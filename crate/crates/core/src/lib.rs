//! Tracking a stochastically diffusing optical phase with quantum-limited
//! measurements.
//!
//! Two measurement families are simulated:
//!
//! * [`dyne`]: continuous homodyne-type detection of a coherent or broadband
//!   squeezed beam, with adaptive (`Phi = phi_hat + pi/2`) or heterodyne
//!   local-oscillator control;
//! * [`mzi`]: photon counting at the outputs of a Mach-Zehnder
//!   interferometer with exact Bayesian tracking of the phase posterior.
//!
//! Everything is dimensionless: time is in units of the inverse photon flux,
//! `N` is the number of photons per coherence time and `X` the filter
//! bandwidth in the same units. [`theory`] holds the matching closed-form
//! predictions and [`harness`] the parameter sweeps and optimum search used
//! by the command-line tool.

pub mod dyne;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod mzi;
pub mod noise;
pub mod optimize;
pub mod params;
pub mod stats;
pub mod theory;

pub use ensemble::{simulate, simulate_until, EnsembleResult};
pub use error::{Error, Result};
pub use params::{Mode, Regime, Scheme, SimParams};
pub use stats::{Estimate, Schedule, VarianceAccumulator};
