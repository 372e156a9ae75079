//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL ...`
//! line to stderr.

use std::fs;
use std::io::Write;
use std::time::Instant;

use bulkq::commands::{max_z_score, SE_MULTIPLIER};
use bulkq::{parse_config, run, Command, RunOptions, Status};
use bulkq_core::dessim::{count_arrivals, estimate, replication_rng};
use bulkq_core::operators::assemble;
use bulkq_core::spectral::{dirichlet, eigenfunction, residual, BoundaryData, ResidualMode, SpectralPoint};
use bulkq_core::transient::{solve, uniformization};
use bulkq_core::{GridConfig, QueueConfig, RateFunction};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

const SEED: u64 = 2026;

fn report(n: u32, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    // straight to the stream so the line survives the harness's output capture
    #[allow(clippy::explicit_write)]
    writeln!(std::io::stderr(), "criterion {n}: {status} {detail}").unwrap();
    assert!(pass, "criterion {n}: {detail}");
}

#[test]
fn criterion_01_conservation() {
    let cfg = QueueConfig::new(2, 3, 1.0).unwrap();
    let rf = RateFunction::sinusoid(0.5, 0.3, 1.0, 0.0).unwrap();
    let grid = GridConfig::with_step(&cfg, 40, 25.0, 1e-3).unwrap();
    let cps: Vec<f64> = (0..=10).map(f64::from).collect();
    let start = Instant::now();
    let traj = solve(&cfg, &grid, &rf, 10.0, &cps).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = traj.conservation_defects().into_iter().fold(0.0, f64::max);
    report(1, worst <= 1e-5 && secs <= 60.0, format!("max defect {worst:e} (<= 1e-5), runtime {secs:.2}s (<= 60s)"));
}

#[test]
fn criterion_02_triple_agreement() {
    let cps = [0.1, 1.0, 5.0];
    let levels = 50;
    let mut solver_gap: f64 = 0.0;
    let mut z: f64 = 0.0;
    let mut p00 = 0.0;
    for &(k, batch, lambda) in &[(1, 1, 1.0), (2, 3, 0.8)] {
        let cfg = QueueConfig::new(k, batch, 1.0).unwrap();
        let rf = RateFunction::constant(lambda).unwrap();
        let grid = GridConfig::with_step(&cfg, levels, 25.0, 1e-3).unwrap();
        let traj = solve(&cfg, &grid, &rf, 5.0, &cps).unwrap();
        let reference: Vec<_> = cps.iter().map(|&t| uniformization(&cfg, lambda, levels, t, 1e-10).unwrap()).collect();
        for (s, (ui, ub)) in traj.states.iter().zip(&reference) {
            let (idle, q) = s.marginals(&grid).unwrap();
            for (a, b) in idle.iter().chain(&q).zip(ui.iter().chain(ub)) {
                solver_gap = solver_gap.max((a - b).abs());
            }
        }
        if k == 1 {
            p00 = reference[0].0[0];
        }
        let est = estimate(&cfg, &rf, &cps, levels, 100_000, SEED).unwrap();
        z = z.max(max_z_score(&est, &reference));
    }
    let pass = solver_gap <= 5e-3 && z <= SE_MULTIPLIER && (p00 - 0.9092).abs() < 1e-4;
    report(
        2,
        pass,
        format!("solver gap {solver_gap:e} (<= 5e-3), max z {z:.3} (<= 3), p00(0.1) = {p00:.6} (~0.9092)"),
    );
}

#[test]
fn criterion_03_first_order_convergence() {
    let cfg = QueueConfig::new(1, 1, 1.0).unwrap();
    let rf = RateFunction::constant(1.0).unwrap();
    let levels = 40;
    let (ui, ub) = uniformization(&cfg, 1.0, levels, 1.0, 1e-12).unwrap();
    let error = |dt: f64| {
        let grid = GridConfig::with_step(&cfg, levels, 25.0, dt).unwrap();
        let traj = solve(&cfg, &grid, &rf, 1.0, &[1.0]).unwrap();
        let (idle, q) = traj.states[0].marginals(&grid).unwrap();
        idle.iter().chain(&q).zip(ui.iter().chain(&ub)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (error(1e-2), error(5e-3));
    let ratio = e2 / e1;
    report(3, (0.4..=0.6).contains(&ratio), format!("error {e1:e} -> {e2:e}, ratio {ratio:.4} (in [0.4, 0.6])"));
}

struct Draw {
    cfg: QueueConfig,
    grid: GridConfig,
    sp: SpectralPoint,
    c: BoundaryData,
}

fn kernel_draws() -> Vec<Draw> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(SEED);
    (0..100)
        .map(|_| {
            let mu = rng.random_range(0.5..3.0);
            let lambda = rng.random_range(0.0..2.0f64).max(1e-6);
            let gamma = Complex64::new(rng.random_range(-mu + 0.1..2.0), rng.random_range(-2.0..2.0));
            let k = rng.random_range(1..=3);
            let batch = rng.random_range(k..=4);
            let cfg = QueueConfig::new(k, batch, mu).unwrap();
            let grid = GridConfig::new(&cfg, 20, 20.0, 2000).unwrap();
            let support = rng.random_range(1..=5);
            let mut coeffs: Vec<Complex64> =
                (0..support).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            coeffs[support - 1] += Complex64::new(1.0, 0.0);
            let sp = SpectralPoint::new(gamma, lambda, mu).unwrap();
            Draw { cfg, grid, sp, c: BoundaryData::new(coeffs).unwrap() }
        })
        .collect()
}

#[test]
fn criterion_04_kernel_property() {
    let draws = kernel_draws();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for d in &draws {
        let a = assemble(&d.cfg, &d.grid, d.sp.lambda()).unwrap();
        worst = worst.max(residual(&d.sp, &d.c, &d.cfg, &d.grid, &a, ResidualMode::SemiAnalytic).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    report(4, worst <= 1e-10 && secs <= 10.0, format!("max residual {worst:e} (<= 1e-10) over 100 draws, {secs:.2}s (<= 10s)"));
}

#[test]
fn criterion_05_norm_bound() {
    let mut checked = 0;
    let mut worst_slack = f64::INFINITY;
    for d in kernel_draws() {
        let re = d.sp.big_gamma().re;
        if d.sp.lambda() >= re {
            continue;
        }
        let p = eigenfunction(&d.sp, &d.c, &d.cfg, &d.grid).unwrap();
        let bound = d.c.l1_norm() / re / (1.0 - d.sp.lambda() / re);
        worst_slack = worst_slack.min(bound + 1e-8 - p.busy_norm(&d.grid).unwrap());
        checked += 1;
    }
    report(5, checked > 0 && worst_slack >= 0.0, format!("{checked} draws with lambda < Re Gamma, min slack {worst_slack:e} (>= 0)"));
}

fn reference_point() -> (QueueConfig, GridConfig, SpectralPoint) {
    let cfg = QueueConfig::new(2, 3, 2.0).unwrap();
    let grid = GridConfig::new(&cfg, 20, 12.5, 2500).unwrap();
    let sp = SpectralPoint::new(Complex64::new(0.5, 0.0), 1.0, 2.0).unwrap();
    (cfg, grid, sp)
}

#[test]
fn criterion_06_boundary_identity() {
    let (cfg, grid, sp) = reference_point();
    let art = dirichlet(&sp, &cfg, &grid, 10).unwrap();
    report(6, art.columns.len() == 10 && art.boundary_identity_holds(), "analytic x=0 values equal e_j for j < 10".into());
}

#[test]
fn criterion_07_phid_structure() {
    let (cfg, grid, sp) = reference_point();
    let art = dirichlet(&sp, &cfg, &grid, 10).unwrap();
    let toeplitz = art.toeplitz_deviation(cfg.batch());
    let gamma = sp.big_gamma().re;
    let mut closed = 0.0f64;
    for n in 1..grid.levels() - cfg.batch() {
        for j in 0..10 {
            if n + cfg.batch() >= j {
                let expected = 2.0 / gamma * (1.0 / gamma).powi((n + cfg.batch() - j) as i32);
                closed = closed.max((art.phi_d[n][j].re - expected).abs() / expected);
            }
        }
    }
    let a1: f64 = art
        .report
        .iter()
        .filter(|e| e.object == "a1" && e.index.parse::<usize>().unwrap() > cfg.k())
        .map(|e| e.rel_dev)
        .fold(0.0, f64::max);
    let values = (art.phi_d[0][2].re, art.phi_d[0][3].re);
    // column 2 collects psi from levels 2 and 3, column 3 from level 3 only
    let expected_values = (2.0 / 3.5 + 2.0 / 12.25, 2.0 / 3.5);
    let value_gap =
        ((values.0 - expected_values.0).abs() / expected_values.0).max((values.1 - expected_values.1).abs() / expected_values.1);
    let worst = toeplitz.max(closed).max(a1).max(value_gap);
    report(
        7,
        worst <= 1e-10,
        format!("Toeplitz {toeplitz:e}, row entries {closed:e}, a1 {a1:e}, first row {:.6} {:.6}", values.0, values.1),
    );
}

#[test]
fn criterion_08_discrepancy_detection() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = parse_config(
        "[queue]\nk = 2\nB = 3\nmu = 2\n[rate]\nlambda = constant 1\n[grid]\nN = 20\nx_max = 12.5\nM = 2500\n\
         [run]\nhorizon = 1\ncheckpoints = 1\n[spectral]\ngamma = 0.5\nnb = 10\n",
    )
    .unwrap();
    let opts = RunOptions { out: dir.path().to_path_buf(), dump_operators: false };
    let outcome = run(Command::Spectral, &scenario, &opts).unwrap();
    let warned = outcome.checks.iter().any(|c| c.name.starts_with("printed_d[1;1]") && c.status == Status::Warn);
    let mut rdr = csv::Reader::from_path(dir.path().join("dgamma_report.csv")).unwrap();
    let row = rdr
        .records()
        .map(Result::unwrap)
        .find(|r| &r[2] == "d" && &r[3] == "1;1")
        .expect("d 1;1 row");
    let derived: f64 = row[6].parse().unwrap();
    let printed: f64 = row[4].parse().unwrap();
    let pass = warned && outcome.exit_code() == 0 && (derived - 2.0 / 5.25).abs() < 1e-12 && (printed - derived).abs() > 1e-3;
    report(8, pass, format!("d11 derived {derived:.6} vs printed {printed:.6}, WARN row emitted, exit {}", outcome.exit_code()));
}

#[test]
fn criterion_09_thinning_chi_squared() {
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
    let rf = RateFunction::sinusoid(0.5, 0.3, 1.0, 0.0).unwrap();
    let window = 2.0 * std::f64::consts::PI;
    let mean = rf.integrate(0.0, window).unwrap();
    let n = 100_000u64;
    let mut counts = vec![0u64; 64];
    for i in 0..n {
        let c = count_arrivals(&rf, 0.0, window, &mut replication_rng(SEED, i)).unwrap() as usize;
        counts[c.min(63)] += 1;
    }
    let poisson = Poisson::new(mean).unwrap();
    // bins 0..last-1 individually, the tail pooled; every expected count >= 5
    let mut last = 0;
    while (1.0 - (0..=last + 1).map(|x| poisson.pmf(x as u64)).sum::<f64>()) * n as f64 >= 5.0 {
        last += 1;
    }
    let mut stat = 0.0;
    let mut tail_obs = 0u64;
    let mut head_prob = 0.0;
    for (x, &obs) in counts.iter().enumerate() {
        if x <= last {
            let p = poisson.pmf(x as u64);
            head_prob += p;
            let e = p * n as f64;
            stat += (obs as f64 - e).powi(2) / e;
        } else {
            tail_obs += obs;
        }
    }
    let tail_e = (1.0 - head_prob) * n as f64;
    stat += (tail_obs as f64 - tail_e).powi(2) / tail_e;
    let df = (last + 1) as f64;
    let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
    report(9, stat <= critical, format!("chi2 {stat:.3} on {df} df (critical {critical:.3} at 0.01)"));
}

#[test]
fn criterion_10_reproducible_verify() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/spectral.cfg")).unwrap();
    let scenario = parse_config(&text).unwrap();
    let mut runs = Vec::new();
    for threads in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { out: dir.path().to_path_buf(), dump_operators: false };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let outcome = pool.install(|| run(Command::Verify, &scenario, &opts)).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = outcome
            .artifacts
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
            .collect();
        files.sort();
        runs.push((files, dir));
    }
    let identical = runs[0].0 == runs[1].0;
    report(10, identical, format!("{} artifacts byte-identical across runs with 1 and 4 threads", runs[0].0.len()));
}
