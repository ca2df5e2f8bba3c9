//! Run settings merged from defaults, a `key = value` file and flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use phasetrack::harness::Format;
use phasetrack::{Error, Mode, Regime, Result};

/// Settings after merging; `None` and empty lists mean "use the default".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub regime: Option<Regime>,
    pub mode: Option<Mode>,
    pub n: Vec<f64>,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub trajectories: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub budget_secs: Option<f64>,
}

impl Settings {
    /// Fills every unset field of `self` from `lower`.
    pub fn or(mut self, lower: Settings) -> Settings {
        fn list(a: &mut Vec<f64>, b: Vec<f64>) {
            if a.is_empty() {
                *a = b;
            }
        }
        self.regime = self.regime.or(lower.regime);
        self.mode = self.mode.or(lower.mode);
        list(&mut self.n, lower.n);
        list(&mut self.x, lower.x);
        list(&mut self.r, lower.r);
        list(&mut self.epsilon, lower.epsilon);
        self.trajectories = self.trajectories.or(lower.trajectories);
        self.seed = self.seed.or(lower.seed);
        self.out = self.out.or(lower.out);
        self.format = self.format.or(lower.format);
        self.jobs = self.jobs.or(lower.jobs);
        self.budget_secs = self.budget_secs.or(lower.budget_secs);
        self
    }

    /// Parses a config file body. Blank lines and `#` comments are ignored;
    /// list values are comma separated.
    pub fn parse_file(text: &str) -> Result<Settings> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("config", format!("line {}: expected key = value", lineno + 1)))?;
            entries.insert(key.trim().replace('_', "-"), value.trim().to_string());
        }
        let mut s = Settings::default();
        for (key, value) in entries {
            match key.as_str() {
                "regime" => s.regime = Some(value.parse()?),
                "mode" => s.mode = Some(value.parse()?),
                "n" => s.n = parse_list(&value)?,
                "x" => s.x = parse_list(&value)?,
                "r" => s.r = parse_list(&value)?,
                "epsilon" => s.epsilon = parse_list(&value)?,
                "trajectories" => s.trajectories = Some(parse_num(&key, &value)?),
                "seed" => s.seed = Some(parse_num(&key, &value)?),
                "out" => s.out = Some(PathBuf::from(value)),
                "format" => s.format = Some(value.parse()?),
                "jobs" => s.jobs = Some(parse_num(&key, &value)?),
                "budget-secs" => s.budget_secs = Some(parse_num(&key, &value)?),
                other => return Err(bad("config", format!("unknown key {other:?}"))),
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        Settings::parse_file(&text)
    }
}

fn bad(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad("config", format!("{key}: cannot parse {value:?}")))
}

/// Parses one grid item: a number, or `a:b:k` for `k` log-spaced points
/// from `a` to `b` inclusive.
pub fn parse_grid(item: &str) -> Result<Vec<f64>> {
    let number = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidGrid(format!("cannot parse {s:?} as a number")))
    };
    let parts: Vec<&str> = item.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![number(v)?]),
        [a, b, k] => {
            let (a, b) = (number(a)?, number(b)?);
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::InvalidGrid(format!("bad point count in {item:?}")))?;
            if !(a > 0.0 && b > 0.0) || k == 0 {
                return Err(Error::InvalidGrid(format!(
                    "log grid {item:?} needs positive ends and at least one point"
                )));
            }
            if k == 1 {
                return Ok(vec![a]);
            }
            let (la, lb) = (a.ln(), b.ln());
            Ok((0..k)
                .map(|i| {
                    if i == 0 {
                        a
                    } else if i == k - 1 {
                        b
                    } else {
                        (la + (lb - la) * i as f64 / (k - 1) as f64).exp()
                    }
                })
                .collect())
        }
        _ => Err(Error::InvalidGrid(format!("cannot parse grid {item:?}"))),
    }
}

/// Parses a comma-separated list of grid items.
pub fn parse_list(value: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in value.split(',').filter(|s| !s.trim().is_empty()) {
        out.extend(parse_grid(item)?);
    }
    Ok(out)
}
