//! Parameter sweeps, optimum search and result emission.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ensemble::{simulate_until, EnsembleResult};
use crate::error::{invalid, Error, Result};
use crate::optimize::golden_section;
use crate::params::{Regime, Scheme, SimParams};
use crate::stats::{Estimate, Schedule};
use crate::theory::{optimal_parameters, predicted_variance};

/// Column names of the CSV output, in order.
pub const CSV_HEADER: &str =
    "regime,N,X,r,epsilon,mode,holevo_var,holevo_se,std_var,std_se,theory_var,ratio,samples,wall_s";

/// How the filter bandwidths of a sweep are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum XGrid {
    /// Fixed values used at every `N`.
    Values(Vec<f64>),
    /// Multiples of the theoretical optimum at each `N`.
    Factors(Vec<f64>),
}

impl Default for XGrid {
    fn default() -> Self {
        XGrid::Factors(vec![1.0])
    }
}

/// A grid of experiments sharing one measurement scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scheme: Scheme,
    pub n: Vec<f64>,
    pub x: XGrid,
    /// Squeezing values; `None` means the theoretical optimum (0 for coherent beams).
    pub r: Option<Vec<f64>>,
    pub epsilon: Vec<f64>,
    /// Trajectories per point; `None` uses the scheme default.
    pub trajectories: Option<usize>,
    pub seed: u64,
    pub schedule: Option<Schedule>,
    /// Wall-clock allowance per grid point.
    pub budget: Option<Duration>,
}

impl SweepConfig {
    pub fn new(scheme: Scheme, n: Vec<f64>) -> Self {
        SweepConfig {
            scheme,
            n,
            x: XGrid::default(),
            r: None,
            epsilon: vec![1.0],
            trajectories: None,
            seed: 0,
            schedule: None,
            budget: Some(Duration::from_secs(600)),
        }
    }

    /// Expands the grid into simulation parameters sorted by `(N, X, r, eps)`.
    pub fn points(&self) -> Result<Vec<SimParams>> {
        if self.n.is_empty() {
            return Err(Error::InvalidGrid("N grid is empty".into()));
        }
        if self.epsilon.is_empty() {
            return Err(Error::InvalidGrid("epsilon grid is empty".into()));
        }
        if self.r.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::InvalidGrid("r grid is empty".into()));
        }
        match &self.x {
            XGrid::Values(v) | XGrid::Factors(v) if v.is_empty() => {
                return Err(Error::InvalidGrid("X grid is empty".into()));
            }
            _ => {}
        }
        let mut points = Vec::new();
        for &n in &self.n {
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidGrid(format!("N must be positive, got {n}")));
            }
            let base = |x: f64| {
                let mut p = if self.scheme.regime == Regime::Mzi {
                    SimParams::mzi(self.scheme.mode, n)
                } else {
                    SimParams::new(self.scheme, n, x)
                };
                p.seed = self.seed;
                if let Some(t) = self.trajectories {
                    p.trajectories = t;
                }
                p.schedule = self.schedule;
                p
            };
            if self.scheme.regime == Regime::Mzi {
                points.push(base(1.0));
                continue;
            }
            let theory = optimal_parameters(self.scheme, n)?;
            let xs: Vec<f64> = match &self.x {
                XGrid::Values(v) => v.clone(),
                XGrid::Factors(f) => {
                    let x0 = theory.optimal_x.unwrap_or(1.0);
                    f.iter().map(|k| k * x0).collect()
                }
            };
            let rs = match (&self.r, self.scheme.regime) {
                (Some(r), Regime::DyneSqueezed) => r.clone(),
                (None, Regime::DyneSqueezed) => vec![theory.optimal_r.unwrap_or(0.0)],
                _ => vec![0.0],
            };
            for &x in &xs {
                for &r in &rs {
                    for &eps in &self.epsilon {
                        let p = base(x).with_squeezing(r, eps);
                        p.validate()?;
                        points.push(p);
                    }
                }
            }
        }
        points.sort_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).unwrap_or(Ordering::Equal));
        Ok(points)
    }
}

fn sort_key(p: &SimParams) -> [f64; 4] {
    [p.n, p.x, p.r, p.epsilon]
}

/// One line of sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub regime: String,
    #[serde(rename = "N")]
    pub n: f64,
    /// Absent for interferometry.
    #[serde(rename = "X")]
    pub x: Option<f64>,
    pub r: Option<f64>,
    pub epsilon: Option<f64>,
    pub mode: String,
    pub holevo_var: f64,
    pub holevo_se: f64,
    pub std_var: f64,
    pub std_se: f64,
    pub theory_var: Option<f64>,
    pub ratio: Option<f64>,
    pub samples: u64,
    pub wall_s: f64,
}

impl SweepRow {
    /// Summarizes a finished ensemble; `wall` is the time it took.
    pub fn from_result(result: &EnsembleResult, wall: Duration) -> Result<Self> {
        let p = &result.params;
        let holevo = result.holevo()?;
        let standard = result.standard()?;
        let theory = predicted_variance(p.scheme(), p.n, p.x, p.r)?;
        let dyne = p.regime.is_dyne();
        let squeezed = p.regime == Regime::DyneSqueezed;
        Ok(SweepRow {
            regime: p.regime.label().to_string(),
            n: p.n,
            x: dyne.then_some(p.x),
            r: dyne.then_some(if squeezed { p.r } else { 0.0 }),
            epsilon: dyne.then_some(p.epsilon),
            mode: p.mode.label_for(p.regime).to_string(),
            holevo_var: holevo.value,
            holevo_se: holevo.se,
            std_var: standard.value,
            std_se: standard.se,
            theory_var: theory,
            ratio: theory.map(|t| holevo.value / t),
            samples: result.total().count(),
            wall_s: wall.as_secs_f64(),
        })
    }
}

/// Rows of a sweep; `partial` is set if any point ran out of budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub partial: bool,
}

/// Runs one grid point under an optional wall-clock allowance.
pub fn run_point(params: &SimParams, budget: Option<Duration>) -> Result<(SweepRow, bool)> {
    let start = Instant::now();
    let result = simulate_until(params, budget.map(|b| start + b))?;
    let row = SweepRow::from_result(&result, start.elapsed())?;
    Ok((row, result.is_partial()))
}

/// Runs every point of `config` in `(N, X, r, eps)` order.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    let mut rows = Vec::new();
    let mut partial = false;
    for p in config.points()? {
        let (row, cut) = run_point(&p, config.budget)?;
        partial |= cut;
        rows.push(row);
    }
    Ok(SweepOutcome { rows, partial })
}

/// Controls for [`find_optimum`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchControls {
    /// Trajectories per objective evaluation during the search.
    pub search_trajectories: usize,
    /// Trajectories for the final evaluation at the chosen point.
    pub final_trajectories: usize,
    pub seed: u64,
    /// Stop once a full sweep over the coordinates improves by less than this.
    pub tolerance: f64,
    pub max_rounds: usize,
    /// Objective evaluations allowed per coordinate line search.
    pub line_evaluations: usize,
    pub schedule: Option<Schedule>,
    pub budget: Option<Duration>,
}

impl Default for SearchControls {
    fn default() -> Self {
        SearchControls {
            search_trajectories: 64,
            final_trajectories: 1024,
            seed: 0,
            tolerance: 0.02,
            max_rounds: 4,
            line_evaluations: 8,
            schedule: None,
            budget: None,
        }
    }
}

/// Best point found by [`find_optimum`].
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: f64,
    pub r: f64,
    pub epsilon: f64,
    pub variance: Estimate,
    /// Search objective at the chosen point (fewer trajectories).
    pub search_variance: f64,
    pub evaluations: usize,
    /// True once a full round improved by less than the tolerance.
    pub converged: bool,
    /// True if the wall-clock budget cut the search short.
    pub budget_exhausted: bool,
    pub row: SweepRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coord {
    X,
    /// `ln e^{-2r} = -2r`
    Squeeze,
    Epsilon,
}

/// Point in log coordinates: `ln X`, `-2r`, `ln eps`.
#[derive(Debug, Clone, Copy)]
struct Point {
    ln_x: f64,
    neg_2r: f64,
    ln_eps: f64,
}

impl Point {
    fn set(mut self, c: Coord, v: f64) -> Self {
        match c {
            Coord::X => self.ln_x = v,
            Coord::Squeeze => self.neg_2r = v,
            Coord::Epsilon => self.ln_eps = v,
        }
        self
    }

    fn params(&self, scheme: Scheme, n: f64, trajectories: usize, controls: &SearchControls) -> SimParams {
        let mut p = SimParams::new(scheme, n, self.ln_x.exp())
            .with_squeezing(-0.5 * self.neg_2r, self.ln_eps.exp().min(1.0))
            .with_trajectories(trajectories)
            .with_seed(controls.seed);
        p.schedule = controls.schedule;
        p
    }
}

/// Coordinate-descent search for the lowest simulated Holevo variance of a
/// dyne scheme at photon number `n`, started from the theoretical optimum.
///
/// Each coordinate is refined by golden section in log space. All
/// evaluations share one seed, so differences between points are not
/// swamped by sampling noise.
pub fn find_optimum(scheme: Scheme, n: f64, controls: &SearchControls) -> Result<Optimum> {
    if !scheme.regime.is_dyne() {
        return Err(invalid("regime", "optimum search needs a dyne regime"));
    }
    if controls.search_trajectories == 0 || controls.final_trajectories == 0 {
        return Err(invalid("trajectories", "must be at least 1"));
    }
    let start = Instant::now();
    let expired = || controls.budget.is_some_and(|b| start.elapsed() >= b);
    let theory = optimal_parameters(scheme, n)?;
    let x0 = theory.optimal_x.unwrap_or(2.0 / n.sqrt());
    let r0 = theory.optimal_r.unwrap_or(0.0);
    let (coords, eps0): (&[Coord], f64) = match (scheme.regime, scheme.mode) {
        (Regime::DyneCoherent, _) => (&[Coord::X], 1.0),
        (Regime::DyneSqueezed, crate::params::Mode::Nonadaptive) => (&[Coord::X, Coord::Squeeze], 1.0),
        (Regime::DyneSqueezed, crate::params::Mode::Adaptive) => (
            &[Coord::X, Coord::Squeeze, Coord::Epsilon],
            (1.5 * n.powf(-0.35)).min(1.0),
        ),
        (Regime::Mzi, _) => unreachable!(),
    };
    let seed = Point {
        ln_x: x0.ln(),
        neg_2r: -2.0 * r0,
        ln_eps: eps0.ln(),
    };
    // Brackets: X from 1/16 to 4 times the seed, e^{-2r} from 1/4 to 32 times
    // (capped at r = 0), eps from 1/8 of the seed up to 1.
    let bracket = |c: Coord, at: Point| -> (f64, f64) {
        match c {
            Coord::X => (seed.ln_x - 16f64.ln(), seed.ln_x + 4f64.ln()),
            Coord::Squeeze => (seed.neg_2r - 4f64.ln(), (seed.neg_2r + 32f64.ln()).min(0.0)),
            Coord::Epsilon => ((seed.ln_eps - 8f64.ln()).min(at.ln_eps), 0.0),
        }
    };

    let mut evaluations = 0;
    let mut first_error = None;
    let mut objective = |pt: Point| -> f64 {
        evaluations += 1;
        let p = pt.params(scheme, n, controls.search_trajectories, controls);
        match crate::ensemble::simulate(&p).and_then(|res| res.holevo()) {
            Ok(e) if e.value.is_finite() => e.value,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                first_error.get_or_insert(e);
                f64::INFINITY
            }
        }
    };

    let mut best = seed;
    let mut best_value = objective(best);
    let mut converged = false;
    for _ in 0..controls.max_rounds {
        if expired() {
            break;
        }
        let round_start = best_value;
        for &c in coords {
            if expired() {
                break;
            }
            let (lo, hi) = bracket(c, best);
            if hi <= lo {
                continue;
            }
            let base = best;
            // keep the best point evaluated anywhere on the line, not just
            // the final bracket
            let mut line_best = (f64::INFINITY, base);
            golden_section(
                |v| {
                    let pt = base.set(c, v);
                    let value = objective(pt);
                    if value < line_best.0 {
                        line_best = (value, pt);
                    }
                    value
                },
                lo,
                hi,
                1e-3 * (hi - lo),
                controls.line_evaluations,
            );
            if line_best.0 < best_value {
                (best_value, best) = line_best;
            }
        }
        if best_value.is_finite() && round_start.is_finite() && (round_start - best_value) < controls.tolerance * round_start {
            converged = true;
            break;
        }
    }
    if !best_value.is_finite() {
        return Err(first_error.unwrap_or(Error::InsufficientSamples { needed: 1, have: 0 }));
    }

    let budget_exhausted = !converged && expired();
    let final_params = best.params(scheme, n, controls.final_trajectories, controls);
    let (row, _) = run_point(&final_params, None)?;
    Ok(Optimum {
        x: final_params.x,
        r: final_params.r,
        epsilon: final_params.epsilon,
        variance: Estimate {
            value: row.holevo_var,
            se: row.holevo_se,
        },
        search_variance: best_value,
        evaluations,
        converged,
        budget_exhausted,
        row,
    })
}

/// Output encodings for [`emit_results`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::UnknownLabel {
                kind: "format",
                value: s.to_string(),
            }),
        }
    }
}

/// Renders a float with 9 significant digits in the shortest of fixed or
/// exponent notation, trailing zeros removed.
pub fn format_g(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_g).unwrap_or_default()
}

/// CSV text for `rows`, header first.
pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.regime,
            format_g(r.n),
            opt(r.x),
            opt(r.r),
            opt(r.epsilon),
            r.mode,
            format_g(r.holevo_var),
            format_g(r.holevo_se),
            format_g(r.std_var),
            format_g(r.std_se),
            opt(r.theory_var),
            opt(r.ratio),
            r.samples,
            format_g(r.wall_s),
        );
    }
    out
}

/// Encodes `rows` in the requested format.
pub fn render(rows: &[SweepRow], format: Format) -> Result<String> {
    if rows.is_empty() {
        return Err(invalid("rows", "nothing to emit"));
    }
    match format {
        Format::Csv => Ok(to_csv(rows)),
        Format::Json => serde_json::to_string_pretty(rows)
            .map(|s| s + "\n")
            .map_err(|e| invalid("rows", e.to_string())),
    }
}

/// Writes `rows` to `path`.
pub fn emit_results(rows: &[SweepRow], path: &std::path::Path, format: Format) -> Result<()> {
    let text = render(rows, format)?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}
