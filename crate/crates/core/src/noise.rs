//! Random-number streams and the small pieces of phase arithmetic shared by
//! both simulators.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Open01, StandardNormal};

use crate::error::{invalid, Error, Result};

/// Deterministic per-trajectory source of normal, exponential and uniform
/// draws. Streams with the same `(seed, index)` are identical; different
/// indices select disjoint ChaCha streams.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        NoiseStream { rng }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Unit-mean exponential draw.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }
}

/// One Euler step of the phase random walk `dphi = sqrt(kappa) dW'`.
/// The phase is kept on the real line; nothing is wrapped here.
pub fn step_phase(phi: f64, kappa: f64, dt: f64, xi: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if !(kappa >= 0.0) {
        return Err(invalid("kappa", format!("must be non-negative, got {kappa}")));
    }
    Ok(phi + (kappa * dt).sqrt() * xi)
}

/// Maps an angle into `(-pi, pi]`. Values already in range are returned
/// unchanged, which makes the map exactly idempotent.
#[inline]
pub fn wrap_to_pi(delta: f64) -> f64 {
    if delta > -PI && delta <= PI {
        return delta;
    }
    let y = delta.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Waiting time until the next photodetection, by inverting the exponential
/// CDF at the uniform draw `u`.
pub fn sample_interval(flux: f64, u: f64) -> Result<f64> {
    if !(flux > 0.0) {
        return Err(invalid("flux", format!("must be positive, got {flux}")));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::UniformOutOfRange(u));
    }
    Ok(-u.ln() / flux)
}
