//! Runs many independent trajectories of one experiment and aggregates them.

use std::ops::Range;
use std::time::Instant;

use crate::dyne::{run_dyne_trajectory, MeanAccumulator};
use crate::error::Result;
use crate::mzi::run_mzi_trajectory;
use crate::params::SimParams;
use crate::stats::{batch_estimate, Estimate, VarianceAccumulator, DEFAULT_BATCHES};

/// Trajectories launched between deadline checks.
const CHUNK: u64 = 32;

/// Per-trajectory results of one experiment, in trajectory order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub params: SimParams,
    pub per_trajectory: Vec<VarianceAccumulator>,
    /// `|A|^2` statistics per trajectory (dyne only).
    pub amplitude: Vec<MeanAccumulator>,
    /// Largest Fourier index any interferometer posterior reached.
    pub max_k: usize,
}

impl EnsembleResult {
    pub fn total(&self) -> VarianceAccumulator {
        self.per_trajectory
            .iter()
            .fold(VarianceAccumulator::new(), |acc, a| acc.merged(a))
    }

    pub fn completed(&self) -> usize {
        self.per_trajectory.len()
    }

    /// True if a deadline stopped the run early.
    pub fn is_partial(&self) -> bool {
        self.per_trajectory.len() < self.params.trajectories
    }

    pub fn holevo(&self) -> Result<Estimate> {
        batch_estimate(&self.per_trajectory, DEFAULT_BATCHES, VarianceAccumulator::holevo_variance)
    }

    pub fn standard(&self) -> Result<Estimate> {
        batch_estimate(&self.per_trajectory, DEFAULT_BATCHES, VarianceAccumulator::standard_variance)
    }

    /// Ensemble mean of `|A|^2` with the standard error across trajectories.
    pub fn amplitude_mean(&self) -> Option<Estimate> {
        if self.amplitude.is_empty() {
            return None;
        }
        let means: Vec<f64> = self.amplitude.iter().map(MeanAccumulator::mean).collect();
        let m = means.len() as f64;
        let mean = means.iter().sum::<f64>() / m;
        let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        Some(Estimate {
            value: mean,
            se: (var / m).sqrt(),
        })
    }
}

#[cfg(feature = "parallel")]
fn map_range<T, F>(range: Range<u64>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_range<T, F>(range: Range<u64>, f: F) -> Result<Vec<T>>
where
    F: Fn(u64) -> Result<T>,
{
    range.map(f).collect()
}

enum Outcome {
    Dyne(VarianceAccumulator, MeanAccumulator),
    Mzi(VarianceAccumulator, usize),
}

fn run_one(params: &SimParams, index: u64) -> Result<Outcome> {
    if params.regime.is_dyne() {
        let t = run_dyne_trajectory(params, index)?;
        Ok(Outcome::Dyne(t.errors, t.amplitude))
    } else {
        let t = run_mzi_trajectory(params, index)?;
        Ok(Outcome::Mzi(t.errors, t.max_k))
    }
}

/// Runs every trajectory of `params`.
pub fn simulate(params: &SimParams) -> Result<EnsembleResult> {
    simulate_until(params, None)
}

/// Runs trajectories in index order until all are done or `deadline`
/// passes; trajectory `i` always uses stream `(seed, i)`, so a partial run
/// is a prefix of the full one.
pub fn simulate_until(params: &SimParams, deadline: Option<Instant>) -> Result<EnsembleResult> {
    params.validate()?;
    let total = params.trajectories as u64;
    let mut result = EnsembleResult {
        params: params.clone(),
        per_trajectory: Vec::with_capacity(params.trajectories),
        amplitude: Vec::new(),
        max_k: 0,
    };
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        for outcome in map_range(start..end, |i| run_one(params, i))? {
            match outcome {
                Outcome::Dyne(errors, amplitude) => {
                    result.per_trajectory.push(errors);
                    result.amplitude.push(amplitude);
                }
                Outcome::Mzi(errors, max_k) => {
                    result.per_trajectory.push(errors);
                    result.max_k = result.max_k.max(max_k);
                }
            }
        }
        start = end;
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
    }
    Ok(result)
}
