//! Bayesian tracking of a diffusing phase in a Mach-Zehnder interferometer
//! fed with a coherent beam in one port.
//!
//! The phase distribution is kept as its Fourier series
//! `p(phi) = sum_k P_k e^{ik phi}` with `P_0 = 1` and `P_{-k} = conj(P_k)`,
//! so only `k >= 0` is stored. A detection at port `u` multiplies the
//! density by `sin^2((phi - Phi + u pi)/2)`, which couples neighbouring
//! coefficients; diffusion for a time `dt` damps `P_k` by
//! `e^{-k^2 kappa dt / 2}`.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::noise::{sample_interval, wrap_to_pi, NoiseStream};
use crate::optimize::golden_section;
use crate::params::{Mode, Regime, SimParams};
use crate::stats::{Schedule, VarianceAccumulator};

/// Coefficients with magnitude below this are dropped from the tail.
pub const DEFAULT_THRESHOLD: f64 = 1e-20;

/// Coarse grid used to bracket the feedback phase before refinement.
pub const FEEDBACK_GRID: usize = 256;

/// Final bracket width of the feedback-phase refinement.
pub const FEEDBACK_TOLERANCE: f64 = 1e-6;

/// Probability that the photon leaves by port `u` (0 or 1).
pub fn detection_probability(phi: f64, lo_phase: f64, u: u8) -> Result<f64> {
    if u > 1 {
        return Err(Error::InvalidDetector(u));
    }
    // port 1 as the complement, so the two probabilities sum to exactly 1
    let p0 = 0.5 * (1.0 - (phi - lo_phase).cos());
    Ok(if u == 0 { p0 } else { 1.0 - p0 })
}

/// Phase posterior as a truncated Fourier series.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPosterior {
    coeffs: Vec<Complex64>,
    threshold: f64,
    kappa: f64,
}

impl FourierPosterior {
    /// Flat prior, `P_0 = 1` only.
    pub fn uniform(kappa: f64) -> Self {
        FourierPosterior {
            coeffs: vec![Complex64::new(1.0, 0.0)],
            threshold: DEFAULT_THRESHOLD,
            kappa,
        }
    }

    /// Builds a posterior from `P_0, P_1, ...`; `P_0` must be 1.
    pub fn from_coeffs(coeffs: Vec<Complex64>, kappa: f64) -> Result<Self> {
        if coeffs.first() != Some(&Complex64::new(1.0, 0.0)) {
            return Err(invalid("coeffs", "P_0 must equal 1"));
        }
        if coeffs.iter().any(|c| c.norm() > 1.0 + 1e-12) {
            return Err(invalid("coeffs", "|P_k| must not exceed 1"));
        }
        Ok(FourierPosterior {
            coeffs,
            threshold: DEFAULT_THRESHOLD,
            kappa,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self.truncate();
        self
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Highest stored Fourier index.
    pub fn k_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    /// Folds in the outcome `u` of a detection at feedback phase `lo_phase`:
    /// `P'_k = P_k - e^{-i psi} P_{k-1}/2 - e^{i psi} P_{k+1}/2` with
    /// `psi = Phi - u pi`, then renormalizes to `P_0 = 1`.
    pub fn bayes_update(&mut self, lo_phase: f64, u: u8) -> Result<()> {
        if u > 1 {
            return Err(Error::InvalidDetector(u));
        }
        let sign = if u == 0 { 0.5 } else { -0.5 };
        let (s, c) = lo_phase.sin_cos();
        // w = e^{i psi} / 2
        let w = Complex64::new(sign * c, sign * s);
        let wc = w.conj();

        let len = self.coeffs.len();
        let p1 = if len > 1 { self.coeffs[1] } else { Complex64::default() };
        let norm = 1.0 - 2.0 * (w * p1).re;
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroProbabilityOutcome(norm));
        }
        let mut prev = if len > 1 { self.coeffs[1].conj() } else { Complex64::default() };
        self.coeffs.push(Complex64::default());
        for k in 0..=len {
            let cur = self.coeffs[k];
            let next = if k < len { self.coeffs[k + 1] } else { Complex64::default() };
            self.coeffs[k] = cur - wc * prev - w * next;
            prev = cur;
        }
        let inv = 1.0 / norm;
        self.coeffs[0] = Complex64::new(1.0, 0.0);
        for p in &mut self.coeffs[1..] {
            *p *= inv;
        }
        self.truncate();
        Ok(())
    }

    /// Phase diffusion over `dt`.
    pub fn diffuse(&mut self, dt: f64) -> Result<()> {
        if !(dt >= 0.0) {
            return Err(invalid("dt", format!("must be non-negative, got {dt}")));
        }
        if dt == 0.0 || self.kappa == 0.0 {
            return Ok(());
        }
        // e^{-k^2 g} built up as a product of e^{-(2k-1) g}
        let q = (-0.5 * self.kappa * dt).exp();
        let q2 = q * q;
        let mut step = q;
        let mut factor = 1.0;
        for p in &mut self.coeffs[1..] {
            factor *= step;
            step *= q2;
            *p *= factor;
        }
        self.truncate();
        Ok(())
    }

    fn truncate(&mut self) {
        while self.coeffs.len() > 1 && self.coeffs[self.coeffs.len() - 1].norm() < self.threshold {
            self.coeffs.pop();
        }
    }

    /// `arg <e^{i phi}> = arg P_{-1}`; `None` when `P_1 = 0`.
    pub fn phase_estimate(&self) -> Option<f64> {
        let p1 = self.coeff(1);
        if p1 == Complex64::default() {
            None
        } else {
            Some(p1.conj().arg())
        }
    }

    /// `(a, b, c) = (P_{-1}, P_{-2}/2, P_0/2)` for the feedback cost.
    pub fn abc(&self) -> (Complex64, Complex64, Complex64) {
        (
            self.coeff(1).conj(),
            self.coeff(2).conj() * 0.5,
            self.coeffs[0] * 0.5,
        )
    }

    /// Density value `sum_k P_k e^{ik phi}` (the `1/2pi` normalization omitted).
    pub fn density(&self, phi: f64) -> f64 {
        let e = Complex64::from_polar(1.0, phi);
        let mut z = e;
        let mut total = self.coeffs[0].re;
        for p in &self.coeffs[1..] {
            total += 2.0 * (p * z).re;
            z *= e;
        }
        total
    }

    /// Shifts the represented density by `beta`: `p(phi) -> p(phi - beta)`.
    pub fn rotate(&mut self, beta: f64) {
        let e = Complex64::from_polar(1.0, -beta);
        let mut z = e;
        for p in &mut self.coeffs[1..] {
            *p *= z;
            z *= e;
        }
    }
}

/// Sum over outcomes of `|integral P(u|phi) p(phi) e^{i phi}|`, up to the
/// common normalization. Larger values mean a sharper expected posterior.
pub fn expected_cost(a: Complex64, b: Complex64, c: Complex64, lo_phase: f64) -> f64 {
    let e = Complex64::from_polar(1.0, lo_phase);
    cost_at(a, b, c, e)
}

#[inline]
fn cost_at(a: Complex64, b: Complex64, c: Complex64, e: Complex64) -> f64 {
    let w = b * e.conj() + c * e;
    (a - w).norm() + (a + w).norm()
}

fn grid() -> &'static [Complex64] {
    static GRID: OnceLock<Vec<Complex64>> = OnceLock::new();
    GRID.get_or_init(|| {
        (0..FEEDBACK_GRID)
            .map(|j| Complex64::from_polar(1.0, TAU * j as f64 / FEEDBACK_GRID as f64))
            .collect()
    })
}

/// Which extremum of the cost the feedback seeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostObjective {
    Minimize,
    Maximize,
}

/// Global extremum of `expected_cost` over `[0, 2 pi)`: a 256-point grid
/// followed by golden-section refinement. Returns 0 for a constant cost.
pub fn optimize_cost(a: Complex64, b: Complex64, c: Complex64, objective: CostObjective) -> f64 {
    let sign = match objective {
        CostObjective::Minimize => 1.0,
        CostObjective::Maximize => -1.0,
    };
    let pts = grid();
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    let mut worst_val = f64::NEG_INFINITY;
    for (j, &e) in pts.iter().enumerate() {
        let v = sign * cost_at(a, b, c, e);
        if v < best_val {
            best_val = v;
            best = j;
        }
        worst_val = worst_val.max(v);
    }
    if worst_val - best_val <= 1e-14 * best_val.abs().max(1e-300) {
        return 0.0;
    }
    let h = TAU / FEEDBACK_GRID as f64;
    let centre = best as f64 * h;
    let m = golden_section(
        |x| sign * expected_cost(a, b, c, x),
        centre - h,
        centre + h,
        FEEDBACK_TOLERANCE,
        200,
    );
    let x = if m.value <= best_val { m.x } else { centre };
    x.rem_euclid(TAU)
}

/// Adaptive feedback phase for the next detection.
pub fn adaptive_phi(post: &FourierPosterior) -> f64 {
    let (a, b, c) = post.abc();
    optimize_cost(a, b, c, CostObjective::Maximize)
}

/// Nonadaptive ramp `Phi_0 + m pi / sqrt(N)`, or `Phi_0 + m pi / 2` for `N <= 1`.
pub fn nonadaptive_phi(m: u64, phi0: f64, n: f64) -> f64 {
    let step = if n > 1.0 { PI / n.sqrt() } else { PI / 2.0 };
    phi0 + m as f64 * step
}

/// One photodetection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub index: u64,
    pub t: f64,
    pub u: u8,
    pub lo_phase: f64,
    /// True phase at the detection, unwrapped.
    pub phi: f64,
    /// Estimate after the detection was folded in.
    pub estimate: Option<f64>,
}

/// Ordered history of detections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MziRecord {
    pub detections: Vec<Detection>,
}

impl MziRecord {
    pub fn outcomes(&self) -> impl Iterator<Item = u8> + '_ {
        self.detections.iter().map(|d| d.u)
    }
}

/// One interferometer trajectory stepped detection by detection.
#[derive(Debug, Clone)]
pub struct MziTracker {
    n: f64,
    kappa: f64,
    mode: Mode,
    noise: NoiseStream,
    posterior: FourierPosterior,
    phi: f64,
    phi0: f64,
    t: f64,
    detections: u64,
    max_k: usize,
}

impl MziTracker {
    pub fn new(params: &SimParams, trajectory: u64) -> Result<Self> {
        params.validate()?;
        if params.regime != Regime::Mzi {
            return Err(invalid("regime", "interferometer simulation needs the mzi regime"));
        }
        let mut noise = NoiseStream::new(params.seed, trajectory);
        let phi = TAU * noise.uniform();
        let phi0 = TAU * noise.uniform();
        let kappa = params.kappa();
        Ok(MziTracker {
            n: params.n,
            kappa,
            mode: params.mode,
            noise,
            posterior: FourierPosterior::uniform(kappa),
            phi,
            phi0,
            t: 0.0,
            detections: 0,
            max_k: 0,
        })
    }

    pub fn posterior(&self) -> &FourierPosterior {
        &self.posterior
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn detections(&self) -> u64 {
        self.detections
    }

    /// Largest Fourier index held so far.
    pub fn max_k(&self) -> usize {
        self.max_k
    }

    /// Rotates the whole problem by `beta`: true phase, posterior and the
    /// nonadaptive ramp offset.
    pub fn rotate(&mut self, beta: f64) {
        self.phi += beta;
        self.phi0 += beta;
        self.posterior.rotate(beta);
    }

    /// Waits for the next photon, chooses the feedback phase, samples the
    /// output port and updates the posterior.
    pub fn step(&mut self) -> Result<Detection> {
        let dt = sample_interval(1.0, self.noise.uniform())?;
        let xi = self.noise.normal();
        self.phi += (self.kappa * dt).sqrt() * xi;
        self.t += dt;
        self.posterior.diffuse(dt)?;
        self.detections += 1;
        let lo_phase = match self.mode {
            Mode::Adaptive => adaptive_phi(&self.posterior),
            Mode::Nonadaptive => nonadaptive_phi(self.detections, self.phi0, self.n),
        };
        let p1 = detection_probability(self.phi, lo_phase, 1)?;
        let u = u8::from(self.noise.uniform() < p1);
        self.posterior.bayes_update(lo_phase, u)?;
        self.max_k = self.max_k.max(self.posterior.k_max());
        Ok(Detection {
            index: self.detections,
            t: self.t,
            u,
            lo_phase,
            phi: self.phi,
            estimate: self.posterior.phase_estimate(),
        })
    }

    /// Wrapped error of the current estimate.
    pub fn error(&self) -> Option<f64> {
        self.posterior.phase_estimate().map(|est| wrap_to_pi(est - self.phi))
    }

    pub fn record(&mut self, detections: usize) -> Result<MziRecord> {
        let mut record = MziRecord::default();
        for _ in 0..detections {
            record.detections.push(self.step()?);
        }
        Ok(record)
    }
}

/// Statistics from one interferometer run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MziTrajectory {
    pub errors: VarianceAccumulator,
    pub max_k: usize,
}

/// Runs repetition `index`: burn-in, then one error sample per detection.
pub fn run_mzi_trajectory(params: &SimParams, index: u64) -> Result<MziTrajectory> {
    let mut tracker = MziTracker::new(params, index)?;
    let Schedule::Mzi { burn_in_per_sqrt_n, min_burn_in, detections, .. } = params.schedule() else {
        return Err(invalid("schedule", "mzi regime needs an mzi schedule"));
    };
    let burn_in = Schedule::mzi_burn_in(params.n, burn_in_per_sqrt_n, min_burn_in);
    let mut errors = VarianceAccumulator::new();
    for m in 1..=detections {
        tracker.step()?;
        if m > burn_in {
            match tracker.error() {
                Some(delta) => errors.push(delta),
                None => errors.record_degenerate(),
            }
        }
    }
    Ok(MziTrajectory {
        errors,
        max_k: tracker.max_k(),
    })
}
