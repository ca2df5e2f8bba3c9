//! Streaming circular statistics of tracking errors and the equilibrium
//! sampling schedules.
//!
//! Sums are kept in 2^-62 fixed point so that merging accumulators is exact
//! integer addition: the result never depends on merge order or on how
//! trajectories were split across workers.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::Regime;

const FIXED_SCALE: f64 = (1u64 << 62) as f64;

#[inline]
fn to_fixed(x: f64) -> i128 {
    (x * FIXED_SCALE).round() as i128
}

#[inline]
fn from_fixed(x: i128) -> f64 {
    x as f64 / FIXED_SCALE
}

/// Sufficient statistics for the Holevo and standard variance of wrapped
/// tracking errors `delta = Theta - phi`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct VarianceAccumulator {
    count: u64,
    sum_cos: i128,
    sum_sin: i128,
    sum: i128,
    sum_sq: i128,
    skipped: u64,
}

impl VarianceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a wrapped error sample; rejects values outside `[-pi, pi]`.
    pub fn add_sample(&mut self, delta: f64) -> Result<()> {
        if !(delta.abs() <= PI) {
            return Err(Error::UnwrappedSample(delta));
        }
        self.push(delta);
        Ok(())
    }

    #[inline]
    pub(crate) fn push(&mut self, delta: f64) {
        debug_assert!(delta.abs() <= PI);
        let (s, c) = delta.sin_cos();
        self.count += 1;
        self.sum_cos += to_fixed(c);
        self.sum_sin += to_fixed(s);
        self.sum += to_fixed(delta);
        self.sum_sq += to_fixed(delta * delta);
    }

    /// Records a sample for which no estimate could be formed.
    pub fn record_skipped(&mut self) {
        self.skipped += 1;
    }

    /// Records an undefined estimate as a worst-case error of `pi`.
    pub fn record_degenerate(&mut self) {
        self.push(PI);
        self.skipped += 1;
    }

    pub fn merge(&mut self, other: &VarianceAccumulator) {
        self.count += other.count;
        self.sum_cos += other.sum_cos;
        self.sum_sin += other.sum_sin;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.skipped += other.skipped;
    }

    pub fn merged(mut self, other: &VarianceAccumulator) -> Self {
        self.merge(other);
        self
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Sum of `e^{i delta}` over all samples.
    pub fn sum_exp(&self) -> Complex64 {
        Complex64::new(from_fixed(self.sum_cos), from_fixed(self.sum_sin))
    }

    pub fn sum(&self) -> f64 {
        from_fixed(self.sum)
    }

    pub fn sum_sq(&self) -> f64 {
        from_fixed(self.sum_sq)
    }

    /// `|<e^{i delta}>|^-2 - 1`, infinite for a zero mean resultant.
    pub fn holevo_variance(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::InsufficientSamples { needed: 1, have: 0 });
        }
        let r = self.sum_exp().norm() / self.count as f64;
        if r == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok((1.0 / (r * r) - 1.0).max(0.0))
    }

    /// Plain second central moment of the wrapped errors.
    pub fn standard_variance(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                have: self.count,
            });
        }
        let n = self.count as f64;
        let mean = self.sum() / n;
        Ok((self.sum_sq() / n - mean * mean).max(0.0))
    }
}

/// A point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Default number of batches for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 32;

/// Point estimate from the merge of all per-trajectory accumulators, with a
/// standard error from contiguous batches of trajectories. Time samples
/// inside one trajectory are correlated, so batches never split one.
pub fn batch_estimate<F>(per_trajectory: &[VarianceAccumulator], batches: usize, statistic: F) -> Result<Estimate>
where
    F: Fn(&VarianceAccumulator) -> Result<f64>,
{
    let total = per_trajectory
        .iter()
        .fold(VarianceAccumulator::new(), |acc, a| acc.merged(a));
    let value = statistic(&total)?;
    let b = batches.min(per_trajectory.len());
    if b < 2 {
        return Ok(Estimate { value, se: f64::NAN });
    }
    let len = per_trajectory.len();
    let mut batch_values = Vec::with_capacity(b);
    for i in 0..b {
        let lo = i * len / b;
        let hi = (i + 1) * len / b;
        let acc = per_trajectory[lo..hi]
            .iter()
            .fold(VarianceAccumulator::new(), |acc, a| acc.merged(a));
        batch_values.push(statistic(&acc)?);
    }
    let m = b as f64;
    let mean = batch_values.iter().sum::<f64>() / m;
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(Estimate {
        value,
        se: (var / m).sqrt(),
    })
}

/// When error samples are taken during an equilibrium run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cadence {
    /// Every `interval` in units of `1/X`.
    Interval(f64),
    EveryStep,
    EveryDetection,
}

/// Burn-in, cadence and horizon of one equilibrium run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Times are multiples of the filter memory time `1/X`.
    Dyne {
        burn_in: f64,
        cadence: Cadence,
        horizon: f64,
    },
    /// Burn-in of `max(min_burn_in, ceil(burn_in_per_sqrt_n * sqrt(N)))`
    /// detections, then every detection up to `detections`.
    Mzi {
        burn_in_per_sqrt_n: f64,
        min_burn_in: u64,
        detections: u64,
        repetitions: usize,
    },
}

impl Schedule {
    pub const DYNE_COHERENT: Schedule = Schedule::Dyne {
        burn_in: 10.0,
        cadence: Cadence::Interval(1.0),
        horizon: 100.0,
    };
    pub const DYNE_SQUEEZED: Schedule = Schedule::Dyne {
        burn_in: 30.0,
        cadence: Cadence::EveryStep,
        horizon: 130.0,
    };
    pub const MZI: Schedule = Schedule::Mzi {
        burn_in_per_sqrt_n: 10.0,
        min_burn_in: 10,
        detections: 100_000,
        repetitions: 100,
    };

    pub fn for_regime(regime: Regime) -> Schedule {
        match regime {
            Regime::DyneCoherent => Self::DYNE_COHERENT,
            Regime::DyneSqueezed => Self::DYNE_SQUEEZED,
            Regime::Mzi => Self::MZI,
        }
    }

    /// Looks a schedule up by regime label.
    pub fn for_label(label: &str) -> Result<Schedule> {
        Ok(Self::for_regime(label.parse()?))
    }

    /// Number of discarded detections before sampling starts.
    pub fn mzi_burn_in(n: f64, per_sqrt_n: f64, floor: u64) -> u64 {
        ((per_sqrt_n * n.sqrt()).ceil() as u64).max(floor)
    }

    pub(crate) fn validate(&self, regime: Regime) -> Result<()> {
        match (*self, regime.is_dyne()) {
            (Schedule::Dyne { burn_in, cadence, horizon }, true) => {
                if !(burn_in >= 0.0 && horizon > burn_in) {
                    return Err(invalid("schedule", "need 0 <= burn-in < horizon"));
                }
                match cadence {
                    Cadence::Interval(i) if !(i > 0.0) => {
                        Err(invalid("schedule", "sampling interval must be positive"))
                    }
                    Cadence::EveryDetection => {
                        Err(invalid("schedule", "per-detection cadence needs the interferometer"))
                    }
                    _ => Ok(()),
                }
            }
            (Schedule::Mzi { detections, repetitions, .. }, false) => {
                if detections == 0 || repetitions == 0 {
                    return Err(invalid("schedule", "detections and repetitions must be positive"));
                }
                Ok(())
            }
            _ => Err(invalid("schedule", format!("does not match regime {regime}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{wrap_to_pi, NoiseStream};
    use proptest::prelude::*;

    fn filled(samples: &[f64]) -> VarianceAccumulator {
        let mut acc = VarianceAccumulator::new();
        for &d in samples {
            acc.add_sample(d).unwrap();
        }
        acc
    }

    #[test]
    fn single_samples() {
        let acc = filled(&[0.0]);
        assert_eq!(acc.count(), 1);
        assert!((acc.sum_exp().norm() - 1.0).abs() < 1e-15);
        let acc = filled(&[PI]);
        assert!((acc.sum_exp() - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_unwrapped() {
        let mut acc = VarianceAccumulator::new();
        assert!(acc.add_sample(3.5).is_err());
        assert!(acc.add_sample(f64::NAN).is_err());
        assert_eq!(acc.count(), 0);
    }

    #[test]
    fn empty_rejected() {
        let acc = VarianceAccumulator::new();
        assert!(acc.holevo_variance().is_err());
        assert!(filled(&[0.1]).standard_variance().is_err());
    }

    #[test]
    fn degenerate_values() {
        assert_eq!(filled(&[0.0; 10]).holevo_variance().unwrap(), 0.0);
        assert_eq!(filled(&[0.3; 10]).standard_variance().unwrap(), 0.0);
        let a = 0.4;
        let v = filled(&[-a, a, -a, a]).standard_variance().unwrap();
        assert!((v - a * a).abs() < 1e-15);
        // evenly spaced points on the circle have zero resultant
        let ring: Vec<f64> = (0..8).map(|k| wrap_to_pi(k as f64 * PI / 4.0)).collect();
        assert!(filled(&ring).holevo_variance().unwrap() > 1e15);
    }

    #[test]
    fn gaussian_errors() {
        let sigma: f64 = 0.05;
        let mut noise = NoiseStream::new(3, 0);
        let n = 1_000_000;
        let mut acc = VarianceAccumulator::new();
        for _ in 0..n {
            acc.add_sample(wrap_to_pi(sigma * noise.normal())).unwrap();
        }
        let holevo = acc.holevo_variance().unwrap();
        let standard = acc.standard_variance().unwrap();
        let s2 = sigma * sigma;
        // wrapped Gaussian: <cos d> = exp(-s2/2), so V_H = exp(s2) - 1
        let expected_holevo = s2.exp() - 1.0;
        // both estimators have a relative error of about sqrt(2/n)
        let se = s2 * (2.0 / n as f64).sqrt();
        assert!((holevo - expected_holevo).abs() < 3.0 * se, "{holevo} vs {expected_holevo}");
        assert!((standard - s2).abs() < 3.0 * se, "{standard} vs {s2}");
        assert!((holevo / standard - 1.0).abs() < 3e-3);
    }

    #[test]
    fn merge_matches_sequential_insertion() {
        let mut noise = NoiseStream::new(9, 0);
        let xs: Vec<f64> = (0..2000).map(|_| wrap_to_pi(noise.normal())).collect();
        let whole = filled(&xs);
        let merged = filled(&xs[..1000]).merged(&filled(&xs[1000..]));
        assert_eq!(merged.count(), 2000);
        assert_eq!(merged, whole);
    }

    #[test]
    fn schedules() {
        assert_eq!(
            Schedule::for_label("dyne-coherent").unwrap(),
            Schedule::Dyne { burn_in: 10.0, cadence: Cadence::Interval(1.0), horizon: 100.0 }
        );
        assert_eq!(
            Schedule::for_label("dyne-squeezed").unwrap(),
            Schedule::Dyne { burn_in: 30.0, cadence: Cadence::EveryStep, horizon: 130.0 }
        );
        assert_eq!(Schedule::for_label("mzi").unwrap(), Schedule::MZI);
        assert!(Schedule::for_label("pulsed").is_err());
        assert_eq!(Schedule::mzi_burn_in(100.0, 10.0, 10), 100);
        assert_eq!(Schedule::mzi_burn_in(2.0, 10.0, 10), 15);
        assert_eq!(Schedule::mzi_burn_in(0.1, 10.0, 10), 10);
    }

    #[test]
    fn batch_means_on_synthetic_data() {
        // 256 "trajectories" of iid Gaussian errors with sigma = 0.1
        let mut noise = NoiseStream::new(21, 0);
        let accs: Vec<VarianceAccumulator> = (0..256)
            .map(|_| {
                let xs: Vec<f64> = (0..200).map(|_| wrap_to_pi(0.1 * noise.normal())).collect();
                filled(&xs)
            })
            .collect();
        let e32 = batch_estimate(&accs, 32, VarianceAccumulator::holevo_variance).unwrap();
        let e16 = batch_estimate(&accs, 16, VarianceAccumulator::holevo_variance).unwrap();
        assert_eq!(e32.value, e16.value);
        let expected_se = 0.01 * (2.0 / (256.0 * 200.0f64)).sqrt();
        assert!(e32.se > 0.5 * expected_se && e32.se < 2.0 * expected_se, "{}", e32.se);
        let s = batch_estimate(&accs, 32, VarianceAccumulator::standard_variance).unwrap();
        assert!((s.value - 0.01).abs() < 3.0 * s.se);
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(
            a in prop::collection::vec(-PI..PI, 0..50),
            b in prop::collection::vec(-PI..PI, 0..50),
            c in prop::collection::vec(-PI..PI, 0..50),
        ) {
            let (fa, fb, fc) = (filled(&a), filled(&b), filled(&c));
            prop_assert_eq!(fa.merged(&fb).merged(&fc), fa.merged(&fb.merged(&fc)));
            prop_assert_eq!(fa.merged(&fb), fb.merged(&fa));
        }

        #[test]
        fn permutation_invariant(mut xs in prop::collection::vec(-PI..PI, 2..60), seed in any::<u64>()) {
            let before = filled(&xs);
            let k = (seed as usize) % xs.len();
            xs.rotate_left(k);
            xs.reverse();
            prop_assert_eq!(filled(&xs), before);
        }

        #[test]
        fn resultant_bounded_by_count(xs in prop::collection::vec(-PI..PI, 1..60)) {
            let acc = filled(&xs);
            prop_assert!(acc.sum_exp().norm() <= acc.count() as f64 * (1.0 + 1e-12));
        }

        #[test]
        fn holevo_tracks_standard_when_concentrated(sigma in 0.01f64..0.1, seed in any::<u64>()) {
            let mut noise = NoiseStream::new(seed, 0);
            let xs: Vec<f64> = (0..4000).map(|_| sigma * noise.normal()).collect();
            let acc = filled(&xs);
            let h = acc.holevo_variance().unwrap();
            let s = acc.standard_variance().unwrap();
            prop_assert!((h / s - 1.0).abs() < 0.01);
        }
    }
}
