//! The `solve`, `simulate`, `spectral` and `verify` workflows.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use bulkq_core::dessim::{binomial_se, SimEstimate};
use bulkq_core::operators::{assemble, OperatorAssembly};
use bulkq_core::spectral::{
    char_indicator, dirichlet, residual, residual_of_state, BoundaryData, ReportEntry, ResidualMode,
    SpectralPoint, CLOSED_FORM_TOL,
};
use bulkq_core::transient::{solve, uniformization, Trajectory};
use bulkq_core::{Error, GridConfig};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{format_complex, ConfigError, Scenario};
use crate::output::{self, ResidualRow};
use crate::parallel::estimate_parallel;

pub const CONSERVATION_RATE: f64 = 1e-6;
pub const SOLVER_TOL: f64 = 5e-3;
pub const SE_MULTIPLIER: f64 = 3.0;
pub const NEGATIVITY_TOL: f64 = -1e-12;
pub const UNIFORMIZATION_TOL: f64 = 1e-10;
/// Kernel columns whose residuals are tabulated per `γ`.
pub const RESIDUAL_COLUMNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Simulate,
    Spectral,
    Verify,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Warn,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Warn => "WARN",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub metric: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: impl Into<String>, metric: f64, threshold: f64) -> Self {
        let status = if metric <= threshold { Status::Pass } else { Status::Fail };
        Self { name: name.into(), status, metric, threshold }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {:e} {:e}", self.name, self.status, self.metric, self.threshold)
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().any(|c| c.status == Status::Fail) {
            1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Also write `a_m`, the trace and `Φ` as sparse triplets (spectral only).
    pub dump_operators: bool,
}

pub fn run(cmd: Command, scenario: &Scenario, opts: &RunOptions) -> Result<Outcome, RunError> {
    fs::create_dir_all(&opts.out)?;
    let mut outcome = Outcome::default();
    match cmd {
        Command::Solve => {
            run_solve(scenario, &opts.out, &mut outcome)?;
        }
        Command::Simulate => {
            run_simulate(scenario, &opts.out, &mut outcome)?;
        }
        Command::Spectral => {
            if scenario.spectral.gammas.is_empty() && scenario.spectral.sweep.is_none() {
                return Err(ConfigError { line: 0, message: "[spectral] needs gamma or sweep".into() }.into());
            }
            run_spectral(scenario, opts, &mut outcome)?;
        }
        Command::Verify => run_verify(scenario, opts, &mut outcome)?,
    }
    Ok(outcome)
}

/// Checkpoints that are not grid times are a configuration problem.
fn solve_scenario(scenario: &Scenario, grid: &GridConfig) -> Result<Trajectory, RunError> {
    solve(&scenario.queue, grid, &scenario.rate, scenario.horizon, &scenario.checkpoints).map_err(|e| match e {
        Error::OffGrid(t) => ConfigError {
            line: 0,
            message: format!("checkpoint {t} is not a multiple of dt = {}", grid.dt()),
        }
        .into(),
        other => other.into(),
    })
}

fn run_solve(scenario: &Scenario, out: &Path, outcome: &mut Outcome) -> Result<Trajectory, RunError> {
    let grid = scenario.grid()?;
    let traj = solve_scenario(scenario, &grid)?;
    let path = out.join("trajectory.csv");
    output::write_trajectory(&path, &traj)?;
    outcome.artifacts.push(path);
    Ok(traj)
}

fn run_simulate(scenario: &Scenario, out: &Path, outcome: &mut Outcome) -> Result<SimEstimate, RunError> {
    let grid = scenario.grid()?;
    let est = estimate_parallel(
        &scenario.queue,
        &scenario.rate,
        &scenario.checkpoints,
        grid.levels(),
        scenario.sim.reps,
        scenario.sim.seed,
    )?;
    let path = out.join("simulation.csv");
    output::write_estimate(&path, &est)?;
    outcome.artifacts.push(path);
    Ok(est)
}

fn spectral_point(gamma: Complex64, lambda: f64, mu: f64) -> Result<SpectralPoint, RunError> {
    SpectralPoint::new(gamma, lambda, mu).map_err(|e| {
        ConfigError { line: 0, message: format!("gamma = {}: {e}", format_complex(gamma)) }.into()
    })
}

/// Closed forms the comparison is expected to confirm; the rest are reported
/// as warnings when they deviate.
fn is_hard_entry(e: &ReportEntry, k: usize) -> bool {
    match e.object {
        "d" => false,
        "a1" => e.index.parse::<usize>().is_ok_and(|i| i > k),
        _ => true,
    }
}

fn run_spectral(scenario: &Scenario, opts: &RunOptions, outcome: &mut Outcome) -> Result<(), RunError> {
    let grid = scenario.grid()?;
    let lambda = scenario.spectral_lambda()?;
    let cfg = &scenario.queue;
    let nb = scenario.spectral.nb;

    let mut residual_rows = Vec::new();
    let mut report_rows = Vec::new();
    if !scenario.spectral.gammas.is_empty() {
        let assembly = assemble(cfg, &grid, lambda)?;
        if opts.dump_operators {
            dump_operators(&assembly, &opts.out, outcome)?;
        }
        for &gamma in &scenario.spectral.gammas {
            let sp = spectral_point(gamma, lambda, cfg.mu())?;
            let tag = format_complex(gamma);
            let art = dirichlet(&sp, cfg, &grid, nb)?;

            let mut worst_semi: f64 = 0.0;
            for (j, col) in art.columns.iter().enumerate().take(RESIDUAL_COLUMNS) {
                let semi = residual(&sp, &BoundaryData::unit(j), cfg, &grid, &assembly, ResidualMode::SemiAnalytic)?;
                let discrete = residual_of_state(&sp, &col.state, &col.boundary, &grid, &assembly)?;
                worst_semi = worst_semi.max(semi);
                residual_rows.push(ResidualRow { gamma, column: j, semi_analytic: semi, discrete });
            }
            outcome.checks.push(Check::at_most(format!("eigen_residual[gamma={tag}]"), worst_semi, CLOSED_FORM_TOL));
            let identity = art.boundary_identity_holds();
            outcome.checks.push(Check {
                name: format!("dirichlet_boundary_identity[gamma={tag}]"),
                status: if identity { Status::Pass } else { Status::Fail },
                metric: if identity { 0.0 } else { 1.0 },
                threshold: 0.0,
            });
            outcome.checks.push(Check::at_most(
                format!("phid_toeplitz[gamma={tag}]"),
                art.toeplitz_deviation(cfg.batch()),
                CLOSED_FORM_TOL,
            ));
            let hard = art
                .report
                .iter()
                .filter(|e| is_hard_entry(e, cfg.k()))
                .map(|e| e.rel_dev)
                .fold(0.0, f64::max);
            outcome.checks.push(Check::at_most(format!("phid_closed_forms[gamma={tag}]"), hard, CLOSED_FORM_TOL));
            for e in art.warnings().filter(|e| !is_hard_entry(e, cfg.k())) {
                outcome.checks.push(Check {
                    name: format!("printed_{}[{}][gamma={tag}]", e.object, e.index),
                    status: Status::Warn,
                    metric: e.rel_dev,
                    threshold: CLOSED_FORM_TOL,
                });
                outcome.warnings.push(format!(
                    "printed {} {} at gamma={tag}: printed {} vs derived {} (relative deviation {:e})",
                    e.object,
                    e.index,
                    format_complex(e.printed),
                    format_complex(e.derived),
                    e.rel_dev
                ));
            }
            for note in &art.notes {
                if !outcome.warnings.contains(note) {
                    outcome.warnings.push(note.clone());
                }
            }
            report_rows.extend(art.report.into_iter().map(|e| (gamma, e)));
        }
        let path = opts.out.join("residuals.csv");
        output::write_residuals(&path, &residual_rows)?;
        outcome.artifacts.push(path);
        let path = opts.out.join("dgamma_report.csv");
        output::write_report(&path, &report_rows)?;
        outcome.artifacts.push(path);
    }

    let sweep_points: Vec<Complex64> = match scenario.spectral.sweep {
        Some(s) => s.points().into_iter().map(|g| Complex64::new(g, 0.0)).collect(),
        None => scenario.spectral.gammas.clone(),
    };
    let points: Vec<SpectralPoint> =
        sweep_points.iter().map(|&g| spectral_point(g, lambda, cfg.mu())).collect::<Result<_, _>>()?;
    let values: Vec<f64> =
        points.par_iter().map(|sp| char_indicator(sp, cfg, &grid, nb)).collect::<Result<_, _>>()?;
    let path = opts.out.join("indicator_sweep.csv");
    output::write_sweep(&path, &sweep_points.into_iter().zip(values).collect::<Vec<_>>())?;
    outcome.artifacts.push(path);
    Ok(())
}

fn dump_operators(a: &OperatorAssembly, out: &Path, outcome: &mut Outcome) -> io::Result<()> {
    for (name, m) in [("a_m.txt", &a.a_m), ("trace.txt", &a.trace), ("phi.txt", &a.phi)] {
        let path = out.join(name);
        output::write_triplets(&path, m)?;
        outcome.artifacts.push(path);
    }
    Ok(())
}

/// States whose expected count `n·p` is below this are pooled before the
/// normal-approximation test.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

fn z_score(p_hat: f64, p: f64, n: u64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let se = binomial_se(p, n);
    let gap = (p_hat - p).abs();
    if se > 0.0 {
        gap / se
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Largest `|p̂ − p| / se(p)` over all states, with `se` the binomial
/// standard error at the reference probability. Per checkpoint, states with
/// expected count below [`MIN_EXPECTED_COUNT`] are tested as one pooled tail
/// state.
pub fn max_z_score(est: &SimEstimate, reference: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let n = est.n_reps;
    let mut worst: f64 = 0.0;
    for (i, (idle, busy)) in reference.iter().enumerate() {
        let (mut tail_hat, mut tail) = (0.0, 0.0);
        let pairs = est.idle_prob[i].iter().zip(idle).chain(est.queue_prob[i].iter().zip(busy));
        for (&p_hat, &p) in pairs {
            if p * (n as f64) < MIN_EXPECTED_COUNT {
                tail_hat += p_hat;
                tail += p;
            } else {
                worst = worst.max(z_score(p_hat, p, n));
            }
        }
        if tail > 0.0 || tail_hat > 0.0 {
            worst = worst.max(z_score(tail_hat, tail, n));
        }
    }
    worst
}

/// Idle and busy-level probabilities per checkpoint.
type Marginals = Vec<(Vec<f64>, Vec<f64>)>;

fn marginal_rows(traj: &Trajectory) -> Result<Marginals, Error> {
    traj.states.iter().map(|s| s.marginals(&traj.grid)).collect()
}

fn max_abs_gap(a: &[(Vec<f64>, Vec<f64>)], b: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|((ai, ab), (bi, bb))| ai.iter().zip(bi).chain(ab.iter().zip(bb)))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn run_verify(scenario: &Scenario, opts: &RunOptions, outcome: &mut Outcome) -> Result<(), RunError> {
    let out = &opts.out;
    let scenario_path = out.join("scenario.cfg");
    fs::write(&scenario_path, scenario.to_config_string())?;
    outcome.artifacts.push(scenario_path);

    let traj = run_solve(scenario, out, outcome)?;
    let grid = traj.grid;
    let defects = traj.conservation_defects();
    let excess = traj
        .times
        .iter()
        .zip(&defects)
        .map(|(t, d)| d - CONSERVATION_RATE * t)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_defect = defects.iter().copied().fold(0.0, f64::max);
    let mut conservation = Check::at_most("conservation", worst_defect, CONSERVATION_RATE * scenario.horizon);
    if excess > 1e-12 {
        conservation.status = Status::Fail;
    }
    outcome.checks.push(conservation);
    let min_entry = traj.states.iter().map(|s| s.min_entry()).fold(f64::INFINITY, f64::min);
    outcome.checks.push(Check {
        name: "nonnegativity".into(),
        status: if min_entry >= NEGATIVITY_TOL { Status::Pass } else { Status::Fail },
        metric: min_entry,
        threshold: NEGATIVITY_TOL,
    });

    let solver_rows = marginal_rows(&traj)?;
    let est = run_simulate(scenario, out, outcome)?;

    if let Some(lambda) = scenario.rate.is_constant() {
        let reference: Marginals = scenario
            .checkpoints
            .iter()
            .map(|&t| uniformization(&scenario.queue, lambda, grid.levels(), t, UNIFORMIZATION_TOL))
            .collect::<Result<_, _>>()?;
        let path = out.join("uniformization.csv");
        output::write_reference(&path, &scenario.checkpoints, &reference)?;
        outcome.artifacts.push(path);
        outcome.checks.push(Check::at_most(
            "solver_vs_uniformization",
            max_abs_gap(&solver_rows, &reference),
            SOLVER_TOL,
        ));
        outcome.checks.push(Check::at_most(
            "simulation_vs_uniformization",
            max_z_score(&est, &reference),
            SE_MULTIPLIER,
        ));
    } else {
        outcome.checks.push(Check::at_most("simulation_vs_solver", max_z_score(&est, &solver_rows), SE_MULTIPLIER));
    }

    if !scenario.spectral.gammas.is_empty() || scenario.spectral.sweep.is_some() {
        run_spectral(scenario, &RunOptions { out: out.clone(), dump_operators: false }, outcome)?;
    }

    let summary_path = out.join("verify_summary.txt");
    let mut text = String::new();
    for c in &outcome.checks {
        text.push_str(&c.to_string());
        text.push('\n');
    }
    fs::write(&summary_path, text)?;
    outcome.artifacts.push(summary_path);
    Ok(())
}
