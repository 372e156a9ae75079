//! Scenario files.
//!
//! Line-oriented sections with `key = value` pairs; `#` starts a comment.
//!
//! ```text
//! [queue]
//! k = 2
//! B = 3
//! mu = 1
//!
//! [rate]
//! lambda = sinusoid a=0.5 b=0.3 omega=1 phi=0
//!
//! [grid]          # optional, defaults: x_max = 25/mu, dt = 1e-3, N = max(5B, 40)
//! N = 40
//! x_max = 25
//! dt = 0.001
//!
//! [run]
//! horizon = 10
//! checkpoints = 0.1, 1, 5
//!
//! [spectral]      # optional
//! gamma = 0.5, 1+0.5i
//! sweep = -0.5:2:51
//! nb = 10
//! lambda = 1      # frozen intensity; defaults to the rate when it is constant
//!
//! [sim]           # optional
//! reps = 100000
//! seed = 1
//! ```
//!
//! Unknown sections and keys are rejected.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use bulkq_core::model::default_levels;
use bulkq_core::{GridConfig, QueueConfig, RateFunction};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridOverrides {
    pub levels: Option<usize>,
    pub x_max: Option<f64>,
    pub cells: Option<usize>,
    pub dt: Option<f64>,
}

/// Real `γ` values `from..=to` in `count` equally spaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.from];
        }
        let step = (self.to - self.from) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.from + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSettings {
    pub gammas: Vec<Complex64>,
    pub sweep: Option<Sweep>,
    pub nb: usize,
    pub lambda: Option<f64>,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        Self { gammas: Vec::new(), sweep: None, nb: 10, lambda: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub reps: u64,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { reps: 100_000, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub queue: QueueConfig,
    pub rate: RateFunction,
    pub grid_overrides: GridOverrides,
    pub horizon: f64,
    pub checkpoints: Vec<f64>,
    pub spectral: SpectralSettings,
    pub sim: SimSettings,
    pub out: Option<PathBuf>,
}

impl Scenario {
    /// Grid with the documented defaults applied.
    pub fn grid(&self) -> Result<GridConfig, ConfigError> {
        resolve_grid(&self.queue, &self.grid_overrides)
    }

    /// Frozen intensity for spectral work.
    pub fn spectral_lambda(&self) -> Result<f64, ConfigError> {
        self.spectral.lambda.or_else(|| self.rate.is_constant()).ok_or_else(|| {
            ConfigError::new(0, "[spectral] lambda is required when the rate is not constant")
        })
    }

    /// Serializes back to the scenario format.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let q = &self.queue;
        let _ = writeln!(s, "[queue]\nk = {}\nB = {}\nmu = {}\n", q.k(), q.batch(), q.mu());
        let _ = writeln!(s, "[rate]\nlambda = {}\n", self.rate);
        let g = &self.grid_overrides;
        if *g != GridOverrides::default() {
            s.push_str("[grid]\n");
            if let Some(v) = g.levels {
                let _ = writeln!(s, "N = {v}");
            }
            if let Some(v) = g.x_max {
                let _ = writeln!(s, "x_max = {v}");
            }
            if let Some(v) = g.cells {
                let _ = writeln!(s, "M = {v}");
            }
            if let Some(v) = g.dt {
                let _ = writeln!(s, "dt = {v}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "[run]\nhorizon = {}\ncheckpoints = {}", self.horizon, join(&self.checkpoints));
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        s.push('\n');
        let sp = &self.spectral;
        s.push_str("[spectral]\n");
        if !sp.gammas.is_empty() {
            let list: Vec<String> = sp.gammas.iter().map(|g| format_complex(*g)).collect();
            let _ = writeln!(s, "gamma = {}", list.join(", "));
        }
        if let Some(w) = sp.sweep {
            let _ = writeln!(s, "sweep = {}:{}:{}", w.from, w.to, w.count);
        }
        let _ = writeln!(s, "nb = {}", sp.nb);
        if let Some(l) = sp.lambda {
            let _ = writeln!(s, "lambda = {l}");
        }
        let _ = writeln!(s, "\n[sim]\nreps = {}\nseed = {}", self.sim.reps, self.sim.seed);
        s
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im < 0.0 {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(i) => (body[..i].parse::<f64>().ok()?, &body[i..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().ok()?,
    };
    Some(Complex64::new(re, im))
}

fn resolve_grid(queue: &QueueConfig, g: &GridOverrides) -> Result<GridConfig, ConfigError> {
    let levels = g.levels.unwrap_or_else(|| default_levels(queue));
    let x_max = g.x_max.unwrap_or(25.0 / queue.mu());
    let grid = match (g.cells, g.dt) {
        (Some(m), dt) => {
            let grid = GridConfig::new(queue, levels, x_max, m);
            if let (Ok(grid), Some(dt)) = (&grid, dt) {
                if (grid.dx() - dt).abs() > 1e-12 * dt {
                    return Err(ConfigError::new(
                        0,
                        format!("dt = {dt} does not equal x_max/M = {}", grid.dx()),
                    ));
                }
            }
            grid
        }
        (None, Some(dt)) => GridConfig::with_step(queue, levels, x_max, dt),
        (None, None) => {
            GridConfig::new(queue, levels, x_max, ((x_max / 1e-3).round() as usize).max(2))
        }
    };
    grid.map_err(|e| ConfigError::new(0, format!("[grid] {e}")))
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("queue", &["k", "B", "mu"]),
    ("rate", &["lambda"]),
    ("grid", &["N", "x_max", "M", "dt"]),
    ("run", &["horizon", "checkpoints", "out"]),
    ("spectral", &["gamma", "sweep", "nb", "lambda"]),
    ("sim", &["reps", "seed"]),
];

struct Entry {
    line: usize,
    value: String,
}

struct Raw {
    entries: Vec<(String, String, Entry)>,
}

impl Raw {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|(s, k, _)| s == section && k == key).map(|(_, _, e)| e)
    }

    fn required(&self, section: &str, key: &str) -> Result<&Entry, ConfigError> {
        self.get(section, key)
            .ok_or_else(|| ConfigError::new(0, format!("missing required key [{section}] {key}")))
    }
}

fn num<T: std::str::FromStr>(e: &Entry, key: &str) -> Result<T, ConfigError> {
    e.value
        .parse::<T>()
        .map_err(|_| ConfigError::new(e.line, format!("malformed number for {key}: '{}'", e.value)))
}

fn num_list(e: &Entry, key: &str) -> Result<Vec<f64>, ConfigError> {
    e.value
        .split(',')
        .map(|x| {
            x.trim().parse::<f64>().map_err(|_| {
                ConfigError::new(e.line, format!("malformed number in {key}: '{}'", x.trim()))
            })
        })
        .collect()
}

pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let mut raw = Raw { entries: Vec::new() };
    let mut section: Option<&str> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            let Some((known, _)) = SECTIONS.iter().find(|(s, _)| *s == name) else {
                return Err(ConfigError::new(lineno, format!("unknown section [{name}]")));
            };
            section = Some(known);
            continue;
        }
        let Some(sec) = section else {
            return Err(ConfigError::new(lineno, "key outside of any section"));
        };
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::new(lineno, format!("expected key = value, got '{line}'")));
        };
        let (key, value) = (key.trim(), value.trim());
        let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(ConfigError::new(lineno, format!("unknown key '{key}' in [{sec}]")));
        }
        if raw.get(sec, key).is_some() {
            return Err(ConfigError::new(lineno, format!("duplicate key '{key}' in [{sec}]")));
        }
        raw.entries.push((sec.to_string(), key.to_string(), Entry { line: lineno, value: value.to_string() }));
    }

    let k_entry = raw.required("queue", "k")?;
    let b_entry = raw.required("queue", "B")?;
    let mu_entry = raw.required("queue", "mu")?;
    let queue = QueueConfig::new(num(k_entry, "k")?, num(b_entry, "B")?, num(mu_entry, "mu")?)
        .map_err(|e| ConfigError::new(k_entry.line, inner_message(&e)))?;

    let rate_entry = raw.required("rate", "lambda")?;
    let rate: RateFunction = rate_entry
        .value
        .parse()
        .map_err(|e| ConfigError::new(rate_entry.line, inner_message(&e)))?;

    let grid_overrides = GridOverrides {
        levels: raw.get("grid", "N").map(|e| num(e, "N")).transpose()?,
        x_max: raw.get("grid", "x_max").map(|e| num(e, "x_max")).transpose()?,
        cells: raw.get("grid", "M").map(|e| num(e, "M")).transpose()?,
        dt: raw.get("grid", "dt").map(|e| num(e, "dt")).transpose()?,
    };
    let grid_line = ["N", "x_max", "M", "dt"]
        .iter()
        .find_map(|k| raw.get("grid", k))
        .map_or(0, |e| e.line);
    resolve_grid(&queue, &grid_overrides).map_err(|e| ConfigError::new(grid_line, e.message))?;

    let horizon_entry = raw.required("run", "horizon")?;
    let horizon: f64 = num(horizon_entry, "horizon")?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(ConfigError::new(horizon_entry.line, "horizon must be finite and nonnegative"));
    }
    let cp_entry = raw.required("run", "checkpoints")?;
    let checkpoints = num_list(cp_entry, "checkpoints")?;
    if checkpoints.is_empty() {
        return Err(ConfigError::new(cp_entry.line, "checkpoint list is empty"));
    }
    if checkpoints.iter().any(|&c| !(c >= 0.0) || c > horizon) {
        return Err(ConfigError::new(cp_entry.line, "checkpoints must lie in [0, horizon]"));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::new(cp_entry.line, "checkpoints must be strictly ascending"));
    }
    let out = raw.get("run", "out").map(|e| PathBuf::from(&e.value));

    let mut spectral = SpectralSettings::default();
    if let Some(e) = raw.get("spectral", "gamma") {
        spectral.gammas = e
            .value
            .split(',')
            .map(|g| {
                parse_complex(g).ok_or_else(|| {
                    ConfigError::new(e.line, format!("malformed complex number '{}'", g.trim()))
                })
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(e) = raw.get("spectral", "sweep") {
        let parts: Vec<&str> = e.value.split(':').collect();
        let bad = || ConfigError::new(e.line, format!("sweep must be from:to:count, got '{}'", e.value));
        if parts.len() != 3 {
            return Err(bad());
        }
        let from = parts[0].trim().parse::<f64>().map_err(|_| bad())?;
        let to = parts[1].trim().parse::<f64>().map_err(|_| bad())?;
        let count = parts[2].trim().parse::<usize>().map_err(|_| bad())?;
        if count == 0 || !(from <= to) {
            return Err(bad());
        }
        spectral.sweep = Some(Sweep { from, to, count });
    }
    if let Some(e) = raw.get("spectral", "nb") {
        spectral.nb = num(e, "nb")?;
        let levels = resolve_grid(&queue, &grid_overrides)?.levels();
        if spectral.nb == 0 || spectral.nb > levels {
            return Err(ConfigError::new(e.line, format!("nb must lie in 1..={levels}")));
        }
    }
    if let Some(e) = raw.get("spectral", "lambda") {
        let l: f64 = num(e, "lambda")?;
        if !(l >= 0.0) || !l.is_finite() {
            return Err(ConfigError::new(e.line, "intensity must be nonnegative"));
        }
        spectral.lambda = Some(l);
    }

    let mut sim = SimSettings::default();
    if let Some(e) = raw.get("sim", "reps") {
        sim.reps = num(e, "reps")?;
        if sim.reps == 0 {
            return Err(ConfigError::new(e.line, "reps must be at least 1"));
        }
    }
    if let Some(e) = raw.get("sim", "seed") {
        sim.seed = num(e, "seed")?;
    }

    Ok(Scenario { queue, rate, grid_overrides, horizon, checkpoints, spectral, sim, out })
}

/// Core error text without the variant prefix.
fn inner_message(e: &bulkq_core::Error) -> String {
    match e {
        bulkq_core::Error::InvalidParameter(m) => m.clone(),
        bulkq_core::Error::NegativeIntensity(m) => format!("intensity must be nonnegative: {m}"),
        other => other.to_string(),
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_config_string())
    }
}
