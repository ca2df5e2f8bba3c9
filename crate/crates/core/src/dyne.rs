//! Continuous dyne detection of a diffusing phase.
//!
//! A coherent or broadband-squeezed beam is mixed with a local oscillator of
//! phase `Phi`. The photocurrent drives two exponentially weighted filters
//!
//! ```text
//! dA = e^{i Phi} I dt - chi A dt
//! dB = -e^{2i Phi} dt - chi B dt
//! ```
//!
//! and the running phase estimate is `arg C` with `C = A + chi B A*`.
//! Adaptive detection sets `Phi = phi_hat + pi/2` from the filter state;
//! heterodyne detection ramps `Phi` at a fixed detuning.
//!
//! Units: time in `1/|alpha|^2`, so `kappa = 1/N` and `chi = X`.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::noise::NoiseStream;
use crate::params::{Mode, Regime, SimParams};
use crate::stats::{Cadence, Schedule, VarianceAccumulator};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Integration steps per filter memory time `1/X`.
pub const STEPS_PER_MEMORY_TIME: f64 = 1000.0;

/// Heterodyne ramp rotations per filter memory time.
pub const HETERODYNE_ROTATIONS_PER_MEMORY_TIME: f64 = 50.0;

/// Minimum integration steps per heterodyne rotation.
pub const STEPS_PER_ROTATION: f64 = 20.0;

/// Live state of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyneState {
    pub t: f64,
    /// True system phase, unwrapped.
    pub phi: f64,
    pub a: Complex64,
    pub b: Complex64,
    /// Local-oscillator phase.
    pub lo_phase: f64,
}

impl Default for DyneState {
    fn default() -> Self {
        DyneState {
            t: 0.0,
            phi: 0.0,
            a: Complex64::new(0.0, 0.0),
            b: Complex64::new(0.0, 0.0),
            lo_phase: 0.0,
        }
    }
}

/// `I dt = 2 Re(e^{i phi} e^{-i Phi}) dt + dW` for a coherent beam with `|alpha| = 1`.
pub fn coherent_increment(phi: f64, lo_phase: f64, dt: f64, dw: f64) -> f64 {
    2.0 * (phi - lo_phase).cos() * dt + dw
}

/// Photocurrent increment for a broadband squeezed beam whose squeezing
/// phase follows the system phase (`phi_zeta = 2 phi + pi`). The shot noise
/// is scaled by `sqrt(e^{-2r} cos^2(Phi - phi_zeta/2) + e^{2r} sin^2(Phi - phi_zeta/2))`.
pub fn squeezed_increment(phi: f64, lo_phase: f64, r: f64, dt: f64, dw: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(invalid("r", format!("must be non-negative, got {r}")));
    }
    if r == 0.0 {
        return Ok(coherent_increment(phi, lo_phase, dt, dw));
    }
    let half_zeta = phi + FRAC_PI_2;
    let (s, c) = (lo_phase - half_zeta).sin_cos();
    let factor = ((-2.0 * r).exp() * c * c + (2.0 * r).exp() * s * s).sqrt();
    Ok(2.0 * (phi - lo_phase).cos() * dt + dw * factor)
}

/// One Euler-Maruyama step of the `A` and `B` filters at the current
/// local-oscillator phase.
pub fn update_filter(state: DyneState, i_dt: f64, chi: f64, dt: f64) -> DyneState {
    let lo = Complex64::from_polar(1.0, state.lo_phase);
    let (a, b) = filter_step(state.a, state.b, lo, i_dt, chi, dt);
    DyneState { a, b, ..state }
}

#[inline]
fn filter_step(a: Complex64, b: Complex64, lo: Complex64, i_dt: f64, chi: f64, dt: f64) -> (Complex64, Complex64) {
    let decay = chi * dt;
    (a + lo * i_dt - a * decay, b - lo * lo * dt - b * decay)
}

/// Mark II feedback `Phi = arg A + pi/2`; holds `previous` while `A = 0`.
pub fn mark2_feedback(a: Complex64, previous: f64) -> f64 {
    if a == Complex64::new(0.0, 0.0) {
        previous
    } else {
        a.arg() + FRAC_PI_2
    }
}

/// `C = A + chi B A*`.
#[inline]
pub fn combined(a: Complex64, b: Complex64, chi: f64) -> Complex64 {
    a + b * a.conj() * chi
}

/// Feedback from the intermediate estimate `arg(C^{1-eps} A^eps)`, taken as
/// the geodesic interpolation `arg C + eps * wrap(arg A - arg C)`.
pub fn epsilon_feedback(a: Complex64, b: Complex64, chi: f64, epsilon: f64, previous: f64) -> f64 {
    let zero = Complex64::new(0.0, 0.0);
    if a == zero {
        return previous;
    }
    let c = combined(a, b, chi);
    if c == zero {
        return a.arg() + FRAC_PI_2;
    }
    let turn = (a * c.conj()).arg();
    c.arg() + epsilon * turn + FRAC_PI_2
}

/// Heterodyne local-oscillator phase `delta * t mod 2 pi`.
pub fn heterodyne_feedback(t: f64, delta: f64) -> f64 {
    (delta * t).rem_euclid(TAU)
}

/// Ramp rate used for heterodyne detection at filter rate `chi`.
pub fn heterodyne_detuning(chi: f64) -> f64 {
    TAU * HETERODYNE_ROTATIONS_PER_MEMORY_TIME * chi
}

/// Best running estimate `arg C`, or `None` when `C = 0`.
pub fn best_estimate(a: Complex64, b: Complex64, chi: f64) -> Option<f64> {
    let c = combined(a, b, chi);
    if c == Complex64::new(0.0, 0.0) {
        None
    } else {
        Some(c.arg())
    }
}

/// Heterodyne estimate `arg A`; `B` averages away under the ramp.
pub fn heterodyne_estimate(a: Complex64) -> Option<f64> {
    if a == Complex64::new(0.0, 0.0) {
        None
    } else {
        Some(a.arg())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Feedback {
    Mark2,
    Epsilon(f64),
    Heterodyne { detuning: f64 },
}

/// Step size, filter rates and sampling plan derived from `SimParams`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyneSetup {
    pub chi: f64,
    pub kappa: f64,
    pub dt: f64,
    /// `Some(r)` for the squeezed photocurrent.
    pub squeezing: Option<f64>,
    feedback: Feedback,
    pub burn_in_steps: u64,
    /// `None` samples every step.
    pub sample_every: Option<u64>,
    pub total_steps: u64,
}

impl DyneSetup {
    pub fn new(params: &SimParams) -> Result<Self> {
        params.validate()?;
        if !params.regime.is_dyne() {
            return Err(invalid("regime", "dyne simulation needs a dyne regime"));
        }
        let chi = params.chi();
        let mut dt = 1.0 / (STEPS_PER_MEMORY_TIME * params.x);
        let feedback = match (params.mode, params.regime) {
            (Mode::Nonadaptive, _) => {
                let detuning = heterodyne_detuning(chi);
                dt = dt.min(TAU / STEPS_PER_ROTATION / detuning);
                Feedback::Heterodyne { detuning }
            }
            (Mode::Adaptive, Regime::DyneSqueezed) if params.epsilon < 1.0 => Feedback::Epsilon(params.epsilon),
            (Mode::Adaptive, _) => Feedback::Mark2,
        };
        let squeezing = match params.regime {
            Regime::DyneSqueezed => Some(params.r),
            _ => None,
        };
        let Schedule::Dyne { burn_in, cadence, horizon } = params.schedule() else {
            return Err(invalid("schedule", "dyne regime needs a dyne schedule"));
        };
        let memory = 1.0 / params.x;
        let steps = |time: f64| (time * memory / dt).round() as u64;
        let sample_every = match cadence {
            Cadence::Interval(i) => Some(steps(i).max(1)),
            _ => None,
        };
        Ok(DyneSetup {
            chi,
            kappa: params.kappa(),
            dt,
            squeezing,
            feedback,
            burn_in_steps: steps(burn_in),
            sample_every,
            total_steps: steps(horizon),
        })
    }

    pub fn is_heterodyne(&self) -> bool {
        matches!(self.feedback, Feedback::Heterodyne { .. })
    }

    /// Same schedule with the step divided by `factor`, for convergence checks.
    pub fn refined(mut self, factor: u64) -> Self {
        let factor = factor.max(1);
        self.dt /= factor as f64;
        self.burn_in_steps *= factor;
        self.total_steps *= factor;
        self.sample_every = self.sample_every.map(|s| s * factor);
        self
    }

    /// True if step number `step` (1-based) is a sampling point.
    pub fn is_sample_step(&self, step: u64) -> bool {
        if step < self.burn_in_steps {
            return false;
        }
        match self.sample_every {
            Some(every) => (step - self.burn_in_steps) % every == 0,
            None => true,
        }
    }
}

/// One dyne trajectory stepped in place. The local oscillator is carried as
/// the unit phasor `e^{i Phi}`.
#[derive(Debug, Clone)]
pub struct DyneSimulator {
    setup: DyneSetup,
    noise: NoiseStream,
    phase_sd: f64,
    noise_sd: f64,
    squeeze_lo: f64,
    squeeze_hi: f64,
    state: DyneState,
    lo: Complex64,
    step: u64,
}

impl DyneSimulator {
    pub fn new(params: &SimParams, trajectory: u64) -> Result<Self> {
        let setup = DyneSetup::new(params)?;
        Ok(Self::from_setup(setup, NoiseStream::new(params.seed, trajectory)))
    }

    pub fn from_setup(setup: DyneSetup, noise: NoiseStream) -> Self {
        let r = setup.squeezing.unwrap_or(0.0);
        DyneSimulator {
            setup,
            noise,
            phase_sd: (setup.kappa * setup.dt).sqrt(),
            noise_sd: setup.dt.sqrt(),
            squeeze_lo: (-2.0 * r).exp(),
            squeeze_hi: (2.0 * r).exp(),
            state: DyneState::default(),
            lo: Complex64::new(1.0, 0.0),
            step: 0,
        }
    }

    pub fn setup(&self) -> &DyneSetup {
        &self.setup
    }

    pub fn state(&self) -> DyneState {
        DyneState {
            lo_phase: self.lo.arg(),
            ..self.state
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Advances one `dt`: photocurrent over `[t, t+dt)`, filter update,
    /// phase diffusion, then new feedback phase.
    #[inline]
    pub fn step(&mut self) {
        let setup = &self.setup;
        let dw = self.noise_sd * self.noise.normal();
        let xi = self.noise.normal();
        let st = &mut self.state;

        let (s, c) = st.phi.sin_cos();
        let signal = Complex64::new(c, s);
        // z = e^{i(Phi - phi)}
        let z = self.lo * signal.conj();
        let noise = match setup.squeezing {
            Some(r) if r != 0.0 => {
                let f2 = self.squeeze_lo * z.im * z.im + self.squeeze_hi * z.re * z.re;
                dw * f2.sqrt()
            }
            _ => dw,
        };
        let i_dt = 2.0 * z.re * setup.dt + noise;
        let (a, b) = filter_step(st.a, st.b, self.lo, i_dt, setup.chi, setup.dt);
        st.a = a;
        st.b = b;
        st.phi += self.phase_sd * xi;
        self.step += 1;
        st.t = self.step as f64 * setup.dt;

        let zero = Complex64::new(0.0, 0.0);
        match setup.feedback {
            Feedback::Mark2 => {
                if a != zero {
                    self.lo = I * (a / a.norm());
                }
            }
            Feedback::Epsilon(eps) => {
                if a != zero {
                    let cc = combined(a, b, setup.chi);
                    if cc == zero {
                        self.lo = I * (a / a.norm());
                    } else {
                        let unit_c = cc / cc.norm();
                        let turn = (a * unit_c.conj()).arg();
                        self.lo = I * unit_c * Complex64::from_polar(1.0, eps * turn);
                    }
                }
            }
            Feedback::Heterodyne { detuning } => {
                self.lo = Complex64::from_polar(1.0, heterodyne_feedback(st.t, detuning));
            }
        }
    }

    /// Current estimate of the system phase, if defined.
    pub fn estimate(&self) -> Option<f64> {
        if self.setup.is_heterodyne() {
            heterodyne_estimate(self.state.a)
        } else {
            best_estimate(self.state.a, self.state.b, self.setup.chi)
        }
    }

    /// Wrapped tracking error `Theta - phi`, if an estimate exists.
    #[inline]
    pub fn error(&self) -> Option<f64> {
        let st = &self.state;
        let est = if self.setup.is_heterodyne() {
            st.a
        } else {
            combined(st.a, st.b, self.setup.chi)
        };
        if est == Complex64::new(0.0, 0.0) {
            return None;
        }
        let (s, c) = st.phi.sin_cos();
        Some((est * Complex64::new(c, -s)).arg())
    }

    /// Runs the full schedule and returns the sampled statistics.
    pub fn run(mut self) -> DyneTrajectory {
        let mut errors = VarianceAccumulator::new();
        let mut amplitude = MeanAccumulator::default();
        for k in 1..=self.setup.total_steps {
            self.step();
            if self.setup.is_sample_step(k) {
                match self.error() {
                    Some(delta) => errors.push(delta),
                    None => errors.record_skipped(),
                }
                amplitude.push(self.state.a.norm_sqr());
            }
        }
        DyneTrajectory { errors, amplitude }
    }
}

/// Plain running mean and variance, used for `|A|^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &MeanAccumulator) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// Statistics from one dyne trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyneTrajectory {
    pub errors: VarianceAccumulator,
    /// `|A|^2` at the sampling times.
    pub amplitude: MeanAccumulator,
}

/// Runs trajectory `index` of the experiment described by `params`.
pub fn run_dyne_trajectory(params: &SimParams, index: u64) -> Result<DyneTrajectory> {
    Ok(DyneSimulator::new(params, index)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Scheme;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn coherent_increment_examples() {
        assert_abs_diff_eq!(coherent_increment(0.0, FRAC_PI_2, 1e-3, 0.0), 0.0, epsilon = 1e-18);
        assert_abs_diff_eq!(coherent_increment(0.0, 0.0, 1e-3, 0.0), 2e-3, epsilon = 1e-18);
        // 2 sin(0.1) * 1e-3 by direct evaluation
        assert_abs_diff_eq!(coherent_increment(0.1, FRAC_PI_2, 1e-3, 0.0), 1.99667e-4, epsilon = 1e-9);
    }

    #[test]
    fn squeezed_increment_examples() {
        for (phi, lo, dw) in [(0.3, 1.1, 0.01), (-2.0, 0.4, -0.03), (0.0, 0.0, 0.0)] {
            assert_eq!(
                squeezed_increment(phi, lo, 0.0, 1e-3, dw).unwrap(),
                coherent_increment(phi, lo, 1e-3, dw)
            );
        }
        let e = 1f64.exp();
        assert_abs_diff_eq!(
            squeezed_increment(0.0, FRAC_PI_2, 1.0, 1e-3, 1e-2).unwrap(),
            1e-2 / e,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            squeezed_increment(0.0, 0.0, 1.0, 1e-3, 1e-2).unwrap(),
            2e-3 + 1e-2 * e,
            epsilon = 1e-15
        );
        assert!(squeezed_increment(0.0, 0.0, -0.5, 1e-3, 0.0).is_err());
    }

    #[test]
    fn squeezed_noise_factor_in_terms_of_estimate_error() {
        // With Phi = phi_hat + pi/2 the factor depends only on phi_hat - phi.
        let r = 0.7;
        for (phi, phi_hat) in [(0.2, 0.25), (-1.0, 0.5), (3.0, -3.0)] {
            let dw = 0.01;
            let lo = phi_hat + FRAC_PI_2;
            let got = squeezed_increment(phi, lo, r, 1e-3, dw).unwrap() - coherent_increment(phi, lo, 1e-3, 0.0);
            let d: f64 = phi_hat - phi;
            let want = dw * ((-2.0 * r).exp() * d.cos().powi(2) + (2.0 * r).exp() * d.sin().powi(2)).sqrt();
            assert_abs_diff_eq!(got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn filter_examples() {
        let s = DyneState::default();
        let s = update_filter(s, 1e-3, 1.0, 1e-3);
        assert_abs_diff_eq!(s.a.re, 1e-3, epsilon = 1e-18);
        assert_abs_diff_eq!(s.a.im, 0.0, epsilon = 1e-18);
        assert_abs_diff_eq!(s.b.re, -1e-3, epsilon = 1e-18);

        let s = DyneState {
            a: Complex64::new(1.0, 0.0),
            ..DyneState::default()
        };
        let s = update_filter(s, 0.0, 1.0, 1e-3);
        assert_abs_diff_eq!(s.a.re, 0.999, epsilon = 1e-15);
        assert_abs_diff_eq!(s.b.re, -1e-3, epsilon = 1e-18);
    }

    #[test]
    fn mark2_examples() {
        assert_abs_diff_eq!(mark2_feedback(Complex64::new(1.0, 0.0), 0.0), FRAC_PI_2);
        assert_abs_diff_eq!(mark2_feedback(Complex64::new(0.0, 1.0), 0.0), PI);
        assert_abs_diff_eq!(mark2_feedback(Complex64::new(-1.0, -1.0), 0.0), -PI / 4.0, epsilon = 1e-15);
        assert_eq!(mark2_feedback(Complex64::new(0.0, 0.0), 0.7), 0.7);
    }

    #[test]
    fn epsilon_examples() {
        let chi = 2.0;
        let a = Complex64::new(0.3, -0.8);
        let b = Complex64::new(0.1, 0.2);
        let c = combined(a, b, chi);
        assert_abs_diff_eq!(epsilon_feedback(a, b, chi, 0.0, 0.0), c.arg() + FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(epsilon_feedback(a, b, chi, 1.0, 0.0), mark2_feedback(a, 0.0), epsilon = 1e-15);
        // A = 1, chi B = i: C = 1 + i, halfway between pi/4 and 0
        let got = epsilon_feedback(Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0 / chi), chi, 0.5, 0.0);
        assert_abs_diff_eq!(got, PI / 8.0 + FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(epsilon_feedback(Complex64::new(0.0, 0.0), b, chi, 0.5, -1.0), -1.0);
    }

    #[test]
    fn heterodyne_examples() {
        assert_eq!(heterodyne_feedback(0.0, 1e3), 0.0);
        assert_abs_diff_eq!(heterodyne_feedback(PI * 1e-3, 1e3), PI, epsilon = 1e-12);
        // trapezoid rule is exact for trigonometric polynomials on a full period
        let delta = 1e3;
        let period = TAU / delta;
        let m = 4096;
        let mean: Complex64 = (0..m)
            .map(|j| {
                let t = period * j as f64 / m as f64;
                Complex64::from_polar(1.0, 2.0 * heterodyne_feedback(t, delta))
            })
            .sum::<Complex64>()
            / m as f64;
        assert!(mean.norm() < 1e-12);
    }

    #[test]
    fn estimate_examples() {
        let chi = 3.0;
        assert_eq!(best_estimate(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), chi), Some(0.0));
        assert_abs_diff_eq!(
            best_estimate(Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0), chi).unwrap(),
            FRAC_PI_2
        );
        let b = Complex64::new(-0.5 / chi, 0.0);
        assert_eq!(best_estimate(Complex64::new(1.0, 0.0), b, chi), Some(0.0));
        let b = Complex64::new(-1.0 / chi, 0.0);
        assert_eq!(best_estimate(Complex64::new(1.0, 0.0), b, chi), None);
    }

    #[test]
    fn setup_follows_schedule() {
        let p = SimParams::new(Scheme::ADAPTIVE_COHERENT, 1e4, 0.02);
        let s = DyneSetup::new(&p).unwrap();
        assert_abs_diff_eq!(s.dt, 1.0 / 20.0, epsilon = 1e-15);
        assert_eq!(s.burn_in_steps, 10_000);
        assert_eq!(s.sample_every, Some(1000));
        assert_eq!(s.total_steps, 100_000);

        let p = SimParams::new(Scheme::ADAPTIVE_SQUEEZED, 1e4, 0.02);
        let s = DyneSetup::new(&p).unwrap();
        assert_eq!(s.burn_in_steps, 30_000);
        assert_eq!(s.sample_every, None);
        assert_eq!(s.total_steps, 130_000);

        // heterodyne keeps at least 20 steps per ramp rotation
        for x in [1e-3, 0.5, 5.0] {
            let p = SimParams::new(Scheme::HETERODYNE_COHERENT, 1e2, x);
            let s = DyneSetup::new(&p).unwrap();
            let Feedback::Heterodyne { detuning } = s.feedback else { panic!() };
            assert!(detuning * s.dt <= TAU / 20.0 * (1.0 + 1e-12));
            assert!(detuning / s.chi >= TAU * 50.0 * (1.0 - 1e-12));
        }
        assert!(DyneSetup::new(&SimParams::mzi(Mode::Adaptive, 4.0)).is_err());
    }

    #[test]
    fn b_filter_bounded() {
        let p = SimParams::new(Scheme::ADAPTIVE_COHERENT, 100.0, 0.5);
        let mut sim = DyneSimulator::new(&p, 0).unwrap();
        for _ in 0..20_000 {
            sim.step();
            assert!(sim.state().b.norm() <= 1.0 / 0.5 + 1e-12);
        }
        let p = SimParams::new(Scheme::HETERODYNE_COHERENT, 100.0, 0.5);
        let mut sim = DyneSimulator::new(&p, 0).unwrap();
        for _ in 0..20_000 {
            sim.step();
            assert!(sim.state().b.norm() <= 1.0 / 0.5 + 1e-12);
        }
    }

    #[test]
    fn zero_squeezing_is_bit_identical_to_coherent() {
        for mode in [Mode::Adaptive, Mode::Nonadaptive] {
            let coherent = SimParams::new(Scheme::new(Regime::DyneCoherent, mode), 1e3, 0.06).with_seed(5);
            let squeezed = SimParams {
                regime: Regime::DyneSqueezed,
                r: 0.0,
                epsilon: 1.0,
                schedule: Some(Schedule::DYNE_COHERENT),
                ..coherent.clone()
            };
            for k in 0..3 {
                let a = run_dyne_trajectory(&coherent, k).unwrap();
                let b = run_dyne_trajectory(&squeezed, k).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn trajectories_reproducible() {
        let p = SimParams::new(Scheme::ADAPTIVE_COHERENT, 1e2, 0.2).with_seed(3);
        assert_eq!(run_dyne_trajectory(&p, 4).unwrap(), run_dyne_trajectory(&p, 4).unwrap());
        assert_ne!(run_dyne_trajectory(&p, 4).unwrap(), run_dyne_trajectory(&p, 5).unwrap());
    }
}
