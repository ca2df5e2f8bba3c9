//! Browser bindings for the phase-tracking simulations.
//!
//! Every export returns a flat `Float64Array`; the layout is documented on
//! the plain Rust function it wraps. The plain functions are what the tests
//! exercise, since `JsError` only exists inside a wasm host.

use std::f64::consts::TAU;

use wasm_bindgen::prelude::*;

use phasetrack::dyne::DyneSimulator;
use phasetrack::mzi::MziTracker;
use phasetrack::noise::wrap_to_pi;
use phasetrack::theory::{optimal_parameters, predicted_variance};
use phasetrack::{simulate, Mode, Regime, Result, Scheme, SimParams};

/// Upper limits that keep a browser tab responsive.
const MAX_POINTS: usize = 64;
const MAX_TRAJECTORIES: usize = 256;
const MAX_DETECTIONS: u32 = 200_000;

fn scheme(label: &str) -> Result<Scheme> {
    label.parse()
}

/// Squeezing to use: `r` if non-negative, otherwise the theoretical optimum.
fn squeezing(scheme: Scheme, n: f64, r: f64) -> Result<f64> {
    if scheme.regime != Regime::DyneSqueezed {
        return Ok(0.0);
    }
    if r >= 0.0 {
        Ok(r)
    } else {
        Ok(optimal_parameters(scheme, n)?.optimal_r.unwrap_or(0.0))
    }
}

/// Holevo variance against `X` from a quarter to four times the theoretical
/// optimum. Layout: `points` records of `[X, theory, simulated, se]`;
/// theory is NaN where the linear theory has no stable solution.
pub fn variance_curve_data(
    label: &str,
    n: f64,
    r: f64,
    points: usize,
    trajectories: usize,
    seed: u32,
) -> Result<Vec<f64>> {
    let scheme = scheme(label)?;
    let points = points.clamp(2, MAX_POINTS);
    let trajectories = trajectories.clamp(1, MAX_TRAJECTORIES);
    let best = optimal_parameters(scheme, n)?;
    let x0 = best.optimal_x.unwrap_or(2.0 / n.sqrt());
    let r = squeezing(scheme, n, r)?;
    let mut out = Vec::with_capacity(4 * points);
    for i in 0..points {
        let x = x0 * 4f64.powf(2.0 * i as f64 / (points - 1) as f64 - 1.0);
        let params = SimParams::new(scheme, n, x)
            .with_squeezing(r, 1.0)
            .with_trajectories(trajectories)
            .with_seed(u64::from(seed));
        let measured = simulate(&params)?.holevo()?;
        let theory = predicted_variance(scheme, n, x, r)?.unwrap_or(f64::NAN);
        out.extend([x, theory, measured.value, measured.se]);
    }
    Ok(out)
}

/// One dyne trajectory. Layout: up to `points` records of
/// `[t, phi, estimate]`, where the estimate is unwrapped to lie within pi
/// of the true phase (NaN before one exists).
pub fn dyne_trace_data(label: &str, n: f64, x: f64, r: f64, epsilon: f64, seed: u32, points: usize) -> Result<Vec<f64>> {
    let scheme = scheme(label)?;
    let r = squeezing(scheme, n, r)?;
    let params = SimParams::new(scheme, n, x)
        .with_squeezing(r, epsilon)
        .with_seed(u64::from(seed));
    let mut sim = DyneSimulator::new(&params, 0)?;
    let total = sim.setup().total_steps;
    let every = (total / points.clamp(1, 10_000) as u64).max(1);
    let mut out = Vec::new();
    for k in 1..=total {
        sim.step();
        if k % every == 0 {
            let st = sim.state();
            let est = sim.error().map_or(f64::NAN, |d| st.phi + d);
            out.extend([st.t, st.phi, est]);
        }
    }
    Ok(out)
}

/// Interferometer posterior after `detections` photons. Layout:
/// `[phi, estimate, k_max, p(theta_0), ..., p(theta_{grid-1})]` with
/// `theta_j = 2 pi j / grid`, phases wrapped to `[0, 2 pi)` and the density
/// normalized to integrate to one.
pub fn mzi_posterior_data(n: f64, adaptive: bool, detections: u32, seed: u32, grid: usize) -> Result<Vec<f64>> {
    let mode = if adaptive { Mode::Adaptive } else { Mode::Nonadaptive };
    let params = SimParams::mzi(mode, n).with_seed(u64::from(seed));
    let mut tracker = MziTracker::new(&params, 0)?;
    for _ in 0..detections.min(MAX_DETECTIONS) {
        tracker.step()?;
    }
    let post = tracker.posterior();
    let phi = tracker.phi().rem_euclid(TAU);
    let est = post.phase_estimate().map_or(f64::NAN, |e| e.rem_euclid(TAU));
    let grid = grid.clamp(8, 4096);
    let mut out = vec![phi, est, post.k_max() as f64];
    out.extend((0..grid).map(|j| post.density(TAU * j as f64 / grid as f64) / TAU));
    Ok(out)
}

/// Wrapped difference `a - b` in `(-pi, pi]`, for plotting errors.
pub fn phase_difference(a: f64, b: f64) -> f64 {
    wrap_to_pi(a - b)
}

fn js(e: phasetrack::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = varianceCurve)]
pub fn variance_curve(
    scheme: &str,
    n: f64,
    r: f64,
    points: usize,
    trajectories: usize,
    seed: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    variance_curve_data(scheme, n, r, points, trajectories, seed).map_err(js)
}

#[wasm_bindgen(js_name = dyneTrace)]
pub fn dyne_trace(
    scheme: &str,
    n: f64,
    x: f64,
    r: f64,
    epsilon: f64,
    seed: u32,
    points: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    dyne_trace_data(scheme, n, x, r, epsilon, seed, points).map_err(js)
}

#[wasm_bindgen(js_name = mziPosterior)]
pub fn mzi_posterior(
    n: f64,
    adaptive: bool,
    detections: u32,
    seed: u32,
    grid: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    mzi_posterior_data(n, adaptive, detections, seed, grid).map_err(js)
}

#[wasm_bindgen(js_name = theoryVariance)]
pub fn theory_variance(scheme: &str, n: f64, x: f64, r: f64) -> f64 {
    self::scheme(scheme)
        .and_then(|s| predicted_variance(s, n, x, r))
        .ok()
        .flatten()
        .unwrap_or(f64::NAN)
}
