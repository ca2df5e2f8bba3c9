mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use phasetrack::harness::{
    find_optimum, format_g, render, run_sweep, Format, SearchControls, SweepConfig, SweepRow, XGrid,
};
use phasetrack::theory::{optimal_parameters, predicted_variance};
use phasetrack::{Error, Mode, Regime, Scheme};

use config::{parse_list, Settings};

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

const DEFAULT_N: [f64; 5] = [1.0, 10.0, 1e2, 1e3, 1e4];
const DEFAULT_BUDGET_SECS: f64 = 600.0;

#[derive(Parser, Debug)]
#[command(name = "phasetrack", version, about = "Monte Carlo tracking of a diffusing optical phase")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dyne detection on a coherent or squeezed beam (X defaults to the theoretical optimum)
    Dyne(RunArgs),
    /// Photon counting in a Mach-Zehnder interferometer
    Mzi(RunArgs),
    /// Grid sweep; X defaults to 1/4..4 times the theoretical optimum
    Sweep(RunArgs),
    /// Numerical search for the lowest variance at each N
    Optimum(RunArgs),
    /// Closed-form predictions, no simulation
    Theory(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// key = value file; flags given on the command line take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// dyne-coherent, dyne-squeezed or mzi
    #[arg(long)]
    regime: Option<String>,
    /// adaptive, heterodyne or nonadaptive
    #[arg(long)]
    mode: Option<String>,
    /// Photon number per coherence time; repeatable, comma lists and A:B:K log ranges accepted
    #[arg(long = "n", value_name = "N", allow_hyphen_values = true)]
    n: Vec<String>,
    /// Filter bandwidth X (same list syntax as --n)
    #[arg(long, allow_hyphen_values = true)]
    x: Vec<String>,
    /// Squeezing parameter r
    #[arg(long, allow_hyphen_values = true)]
    r: Vec<String>,
    /// Feedback interpolation in [0, 1]
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Vec<String>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// Wall-clock allowance per grid point, in seconds
    #[arg(long)]
    budget_secs: Option<f64>,
}

impl RunArgs {
    fn settings(&self) -> phasetrack::Result<Settings> {
        let lists = |v: &[String]| -> phasetrack::Result<Vec<f64>> {
            let mut out = Vec::new();
            for item in v {
                out.extend(parse_list(item)?);
            }
            Ok(out)
        };
        let cli = Settings {
            regime: self.regime.as_deref().map(str::parse).transpose()?,
            mode: self.mode.as_deref().map(str::parse).transpose()?,
            n: lists(&self.n)?,
            x: lists(&self.x)?,
            r: lists(&self.r)?,
            epsilon: lists(&self.epsilon)?,
            trajectories: self.trajectories,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format.as_deref().map(str::parse).transpose()?,
            jobs: self.jobs,
            budget_secs: self.budget_secs,
        };
        Ok(match &self.config {
            Some(path) => cli.or(Settings::load(path)?),
            None => cli,
        })
    }
}

enum Failure {
    Validation(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

/// Text written and whether any result is partial.
struct Output {
    text: String,
    partial: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(partial) if partial => {
            eprintln!("warning: time budget exhausted; results are partial");
            ExitCode::from(EXIT_PARTIAL)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let (args, kind) = match &cli.command {
        Command::Dyne(a) => (a, "dyne"),
        Command::Mzi(a) => (a, "mzi"),
        Command::Sweep(a) => (a, "sweep"),
        Command::Optimum(a) => (a, "optimum"),
        Command::Theory(a) => (a, "theory"),
    };
    let s = args.settings()?;
    if let Some(jobs) = s.jobs {
        if jobs == 0 {
            return Err(Failure::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Validation(e.to_string()))?;
    }
    let regime = match (kind, s.regime) {
        ("mzi", None | Some(Regime::Mzi)) => Regime::Mzi,
        ("mzi", Some(_)) => return Err(Failure::Validation("the mzi command needs --regime mzi".into())),
        ("dyne", Some(Regime::Mzi)) => {
            return Err(Failure::Validation("the dyne command needs a dyne regime".into()))
        }
        (_, r) => r.unwrap_or(Regime::DyneCoherent),
    };
    let scheme = Scheme::new(regime, s.mode.unwrap_or(Mode::Adaptive));
    let format = s.format.unwrap_or(Format::Csv);
    let n = if s.n.is_empty() { DEFAULT_N.to_vec() } else { s.n.clone() };
    let budget = budget(s.budget_secs)?;

    let output = match kind {
        "theory" => theory_table(scheme, &n, &s, format)?,
        "optimum" => optimum_rows(scheme, &n, &s, budget, format)?,
        _ => {
            let mut config = SweepConfig::new(scheme, n);
            config.x = if !s.x.is_empty() {
                XGrid::Values(s.x.clone())
            } else if kind == "sweep" {
                XGrid::Factors((0..9).map(|i| 4f64.powf((i as f64 - 4.0) / 4.0)).collect())
            } else {
                XGrid::Factors(vec![1.0])
            };
            config.r = (!s.r.is_empty()).then(|| s.r.clone());
            if !s.epsilon.is_empty() {
                config.epsilon = s.epsilon.clone();
            }
            config.trajectories = s.trajectories;
            config.seed = s.seed.unwrap_or(0);
            config.budget = budget;
            let outcome = run_sweep(&config)?;
            Output {
                text: render(&outcome.rows, format)?,
                partial: outcome.partial,
            }
        }
    };
    write_output(s.out.as_deref(), &output.text)?;
    Ok(output.partial)
}

fn budget(secs: Option<f64>) -> Result<Option<Duration>, Failure> {
    let secs = secs.unwrap_or(DEFAULT_BUDGET_SECS);
    if secs.is_nan() || secs < 0.0 {
        return Err(Failure::Validation(format!("--budget-secs must be non-negative, got {secs}")));
    }
    Ok(if secs.is_finite() { Some(Duration::from_secs_f64(secs)) } else { None })
}

fn optimum_rows(
    scheme: Scheme,
    n: &[f64],
    s: &Settings,
    budget: Option<Duration>,
    format: Format,
) -> Result<Output, Failure> {
    let final_trajectories = s.trajectories.unwrap_or(1024);
    let controls = SearchControls {
        search_trajectories: final_trajectories.min(64),
        final_trajectories,
        seed: s.seed.unwrap_or(0),
        budget,
        ..SearchControls::default()
    };
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut partial = false;
    for &n in n {
        let opt = find_optimum(scheme, n, &controls)?;
        partial |= opt.budget_exhausted;
        rows.push(opt.row);
    }
    Ok(Output {
        text: render(&rows, format)?,
        partial,
    })
}

#[derive(serde::Serialize)]
struct TheoryRow {
    regime: &'static str,
    mode: &'static str,
    #[serde(rename = "N")]
    n: f64,
    #[serde(rename = "X")]
    x: Option<f64>,
    r: Option<f64>,
    theory_var: Option<f64>,
}

fn theory_table(scheme: Scheme, n: &[f64], s: &Settings, format: Format) -> Result<Output, Failure> {
    let mut rows = Vec::new();
    for &n in n {
        let best = optimal_parameters(scheme, n)?;
        if s.x.is_empty() || scheme.regime == Regime::Mzi {
            rows.push(TheoryRow {
                regime: scheme.regime.label(),
                mode: scheme.mode.label_for(scheme.regime),
                n,
                x: best.optimal_x,
                r: best.optimal_r,
                theory_var: Some(best.variance),
            });
            continue;
        }
        let rs = if s.r.is_empty() { vec![best.optimal_r.unwrap_or(0.0)] } else { s.r.clone() };
        for &x in &s.x {
            for &r in &rs {
                rows.push(TheoryRow {
                    regime: scheme.regime.label(),
                    mode: scheme.mode.label_for(scheme.regime),
                    n,
                    x: Some(x),
                    r: Some(r),
                    theory_var: predicted_variance(scheme, n, x, r)?,
                });
            }
        }
    }
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&rows).map_err(|e| Failure::Validation(e.to_string()))? + "\n",
        Format::Csv => {
            let opt = |v: Option<f64>| v.map(format_g).unwrap_or_default();
            let mut t = String::from("regime,mode,N,X,r,theory_var\n");
            for r in &rows {
                t.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.regime,
                    r.mode,
                    format_g(r.n),
                    opt(r.x),
                    opt(r.r),
                    opt(r.theory_var)
                ));
            }
            t
        }
    };
    Ok(Output { text, partial: false })
}

fn write_output(path: Option<&std::path::Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}
