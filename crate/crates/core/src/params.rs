//! Dimensionless experiment description.
//!
//! Time is measured in units of `1/|alpha|^2`, so the photon flux is 1, the
//! phase diffusion rate is `kappa = 1/N` and the filter bandwidth is
//! `chi = X`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::Schedule;

/// Which detection scheme and beam a simulation describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    DyneCoherent,
    DyneSqueezed,
    Mzi,
}

/// Feedback policy. For dyne detection the nonadaptive policy is heterodyne.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Adaptive,
    Nonadaptive,
}

/// A regime together with a feedback mode, e.g. `adaptive-squeezed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scheme {
    pub regime: Regime,
    pub mode: Mode,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::DyneCoherent => "dyne-coherent",
            Regime::DyneSqueezed => "dyne-squeezed",
            Regime::Mzi => "mzi",
        }
    }

    pub fn is_dyne(self) -> bool {
        !matches!(self, Regime::Mzi)
    }
}

impl Mode {
    /// Label used in result tables; dyne nonadaptive detection is heterodyne.
    pub fn label_for(self, regime: Regime) -> &'static str {
        match (self, regime) {
            (Mode::Adaptive, _) => "adaptive",
            (Mode::Nonadaptive, Regime::Mzi) => "nonadaptive",
            (Mode::Nonadaptive, _) => "heterodyne",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dyne-coherent" | "coherent" => Ok(Regime::DyneCoherent),
            "dyne-squeezed" | "squeezed" => Ok(Regime::DyneSqueezed),
            "mzi" | "interferometer" => Ok(Regime::Mzi),
            other => Err(Error::UnknownLabel {
                kind: "regime",
                value: other.to_string(),
            }),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adaptive" => Ok(Mode::Adaptive),
            "heterodyne" | "nonadaptive" => Ok(Mode::Nonadaptive),
            other => Err(Error::UnknownLabel {
                kind: "mode",
                value: other.to_string(),
            }),
        }
    }
}

impl Scheme {
    pub const ADAPTIVE_COHERENT: Scheme = Scheme::new(Regime::DyneCoherent, Mode::Adaptive);
    pub const HETERODYNE_COHERENT: Scheme = Scheme::new(Regime::DyneCoherent, Mode::Nonadaptive);
    pub const ADAPTIVE_SQUEEZED: Scheme = Scheme::new(Regime::DyneSqueezed, Mode::Adaptive);
    pub const HETERODYNE_SQUEEZED: Scheme = Scheme::new(Regime::DyneSqueezed, Mode::Nonadaptive);
    pub const MZI_ADAPTIVE: Scheme = Scheme::new(Regime::Mzi, Mode::Adaptive);
    pub const MZI_NONADAPTIVE: Scheme = Scheme::new(Regime::Mzi, Mode::Nonadaptive);

    pub const fn new(regime: Regime, mode: Mode) -> Self {
        Scheme { regime, mode }
    }

    pub fn label(self) -> &'static str {
        match (self.regime, self.mode) {
            (Regime::DyneCoherent, Mode::Adaptive) => "adaptive-coherent",
            (Regime::DyneCoherent, Mode::Nonadaptive) => "heterodyne-coherent",
            (Regime::DyneSqueezed, Mode::Adaptive) => "adaptive-squeezed",
            (Regime::DyneSqueezed, Mode::Nonadaptive) => "heterodyne-squeezed",
            (Regime::Mzi, Mode::Adaptive) => "mzi",
            (Regime::Mzi, Mode::Nonadaptive) => "mzi-nonadaptive",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let scheme = match s.trim().to_ascii_lowercase().as_str() {
            "adaptive-coherent" => Scheme::ADAPTIVE_COHERENT,
            "heterodyne-coherent" => Scheme::HETERODYNE_COHERENT,
            "adaptive-squeezed" => Scheme::ADAPTIVE_SQUEEZED,
            "heterodyne-squeezed" => Scheme::HETERODYNE_SQUEEZED,
            "mzi" | "mzi-adaptive" => Scheme::MZI_ADAPTIVE,
            "mzi-nonadaptive" => Scheme::MZI_NONADAPTIVE,
            other => {
                return Err(Error::UnknownLabel {
                    kind: "regime",
                    value: other.to_string(),
                })
            }
        };
        Ok(scheme)
    }
}

/// Full description of one Monte Carlo experiment at a single parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Photons per coherence time.
    pub n: f64,
    /// Filter bandwidth `chi/|alpha|^2`. Ignored for the interferometer.
    pub x: f64,
    /// Squeezing magnitude; only used by the squeezed regime.
    pub r: f64,
    /// Feedback interpolation between `arg C` (0) and `arg A` (1).
    pub epsilon: f64,
    pub regime: Regime,
    pub mode: Mode,
    pub trajectories: usize,
    pub seed: u64,
    /// Overrides the regime's default sampling schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
}

impl SimParams {
    pub fn new(scheme: Scheme, n: f64, x: f64) -> Self {
        SimParams {
            n,
            x,
            r: 0.0,
            epsilon: 1.0,
            regime: scheme.regime,
            mode: scheme.mode,
            trajectories: match scheme.regime {
                Regime::Mzi => 100,
                _ => 1024,
            },
            seed: 0,
            schedule: None,
        }
    }

    pub fn mzi(mode: Mode, n: f64) -> Self {
        SimParams::new(Scheme::new(Regime::Mzi, mode), n, 1.0)
    }

    pub fn with_squeezing(mut self, r: f64, epsilon: f64) -> Self {
        self.r = r;
        self.epsilon = epsilon;
        self
    }

    pub fn with_trajectories(mut self, trajectories: usize) -> Self {
        self.trajectories = trajectories;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn scheme(&self) -> Scheme {
        Scheme::new(self.regime, self.mode)
    }

    /// Phase diffusion rate in simulation units.
    pub fn kappa(&self) -> f64 {
        1.0 / self.n
    }

    /// Filter rate in simulation units.
    pub fn chi(&self) -> f64 {
        self.x
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule.unwrap_or_else(|| Schedule::for_regime(self.regime))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(invalid("N", format!("must be finite and positive, got {}", self.n)));
        }
        if self.regime.is_dyne() && !(self.x.is_finite() && self.x > 0.0) {
            return Err(invalid("X", format!("must be finite and positive, got {}", self.x)));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(invalid("r", format!("must be finite and non-negative, got {}", self.r)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid("epsilon", format!("must lie in [0, 1], got {}", self.epsilon)));
        }
        if self.trajectories == 0 {
            return Err(invalid("trajectories", "must be at least 1"));
        }
        if let Some(schedule) = self.schedule {
            schedule.validate(self.regime)?;
        }
        Ok(())
    }
}
