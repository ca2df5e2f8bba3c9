//! Closed-form equilibrium variances and optimal parameters, in units where
//! `|alpha| = 1` (so `kappa = 1/N`, `chi = X`).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{Mode, Regime, Scheme};

fn check_nx(n: f64, x: f64) -> Result<()> {
    if !(n.is_finite() && n > 0.0) {
        return Err(invalid("N", format!("must be finite and positive, got {n}")));
    }
    if !(x.is_finite() && x > 0.0) {
        return Err(invalid("X", format!("must be finite and positive, got {x}")));
    }
    Ok(())
}

fn check_r(r: f64) -> Result<()> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(invalid("r", format!("must be finite and non-negative, got {r}")));
    }
    Ok(())
}

/// Mark II feedback on a coherent beam: `X/8 + 1/(2NX)`.
pub fn adaptive_coherent_variance(n: f64, x: f64) -> Result<f64> {
    check_nx(n, x)?;
    Ok(x / 8.0 + 1.0 / (2.0 * n * x))
}

/// Heterodyne detection of a coherent beam: the measurement term doubles.
pub fn heterodyne_coherent_variance(n: f64, x: f64) -> Result<f64> {
    check_nx(n, x)?;
    Ok(x / 4.0 + 1.0 / (2.0 * n * x))
}

/// Self-consistent linearized variance for adaptive detection of a
/// broadband squeezed beam,
///
/// `V = (X/8)(e^{-2r} + e^{2r} V) + 1/(2NX)`,
///
/// solved exactly for `V`. The fixed point only exists while
/// `X e^{2r} / 8 < 1`.
pub fn adaptive_squeezed_variance(n: f64, x: f64, r: f64) -> Result<f64> {
    check_nx(n, x)?;
    check_r(r)?;
    let gain = x * (2.0 * r).exp() / 8.0;
    if !(gain < 1.0) {
        return Err(Error::UnstableFixedPoint(gain));
    }
    Ok((x * (-2.0 * r).exp() / 8.0 + 1.0 / (2.0 * n * x)) / (1.0 - gain))
}

/// Heterodyne detection of a broadband squeezed beam. The noise multiplier
/// `cosh 2r - sinh(2r)/2` is minimal (`sqrt(3)/2`) at `r = ln(3)/4`.
pub fn heterodyne_squeezed_variance(n: f64, x: f64, r: f64) -> Result<f64> {
    check_nx(n, x)?;
    check_r(r)?;
    let multiplier = (2.0 * r).cosh() - 0.5 * (2.0 * r).sinh();
    Ok(1.0 / (2.0 * n * x) + x * multiplier / 4.0)
}

/// Equilibrium variance of the interferometer with all photons in one port.
pub fn mzi_variance(n: f64) -> Result<f64> {
    if !(n.is_finite() && n > 0.0) {
        return Err(invalid("N", format!("must be finite and positive, got {n}")));
    }
    Ok(1.0 / n.sqrt())
}

/// Optimal operating point and the variance it achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub regime: &'static str,
    pub n: f64,
    pub variance: f64,
    /// Optimal filter bandwidth; `None` for the interferometer.
    pub optimal_x: Option<f64>,
    /// Optimal squeezing; zero for coherent beams, `None` for the interferometer.
    pub optimal_r: Option<f64>,
}

impl TheoryPrediction {
    /// `e^{-2r}` at the optimal squeezing.
    pub fn optimal_squeeze_factor(&self) -> Option<f64> {
        self.optimal_r.map(|r| (-2.0 * r).exp())
    }
}

pub fn optimal_parameters(scheme: Scheme, n: f64) -> Result<TheoryPrediction> {
    if !(n.is_finite() && n > 0.0) {
        return Err(invalid("N", format!("must be finite and positive, got {n}")));
    }
    let sqrt_n = n.sqrt();
    let (variance, optimal_x, optimal_r) = match (scheme.regime, scheme.mode) {
        (Regime::DyneCoherent, Mode::Adaptive) => (0.5 / sqrt_n, Some(2.0 / sqrt_n), Some(0.0)),
        (Regime::DyneCoherent, Mode::Nonadaptive) => {
            ((2.0 * n).sqrt().recip(), Some((2.0 / n).sqrt()), Some(0.0))
        }
        (Regime::DyneSqueezed, Mode::Adaptive) => {
            // e^{-2r} = (2N)^{-1/3}  =>  r = ln(2N)/6
            let r = (2.0 * n).ln() / 6.0;
            ((2.0 * n).powf(-2.0 / 3.0), Some((n / 4.0).powf(-1.0 / 3.0)), Some(r))
        }
        (Regime::DyneSqueezed, Mode::Nonadaptive) => {
            let q = 3.0f64.powf(0.25);
            (q / (2.0 * sqrt_n), Some(2.0 / (sqrt_n * q)), Some(3.0f64.ln() / 4.0))
        }
        (Regime::Mzi, _) => (1.0 / sqrt_n, None, None),
    };
    Ok(TheoryPrediction {
        regime: scheme.label(),
        n,
        variance,
        optimal_x,
        optimal_r,
    })
}

/// Theory value at an arbitrary operating point, or `None` where the formula
/// has no stable solution.
pub fn predicted_variance(scheme: Scheme, n: f64, x: f64, r: f64) -> Result<Option<f64>> {
    let v = match (scheme.regime, scheme.mode) {
        (Regime::DyneCoherent, Mode::Adaptive) => adaptive_coherent_variance(n, x),
        (Regime::DyneCoherent, Mode::Nonadaptive) => heterodyne_coherent_variance(n, x),
        (Regime::DyneSqueezed, Mode::Adaptive) => match adaptive_squeezed_variance(n, x, r) {
            Err(Error::UnstableFixedPoint(_)) => return Ok(None),
            other => other,
        },
        (Regime::DyneSqueezed, Mode::Nonadaptive) => heterodyne_squeezed_variance(n, x, r),
        (Regime::Mzi, _) => mzi_variance(n),
    }?;
    Ok(Some(v))
}
