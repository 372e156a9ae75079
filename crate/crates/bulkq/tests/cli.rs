use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bulkq(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bulkq"));
    cmd.args(args).env_remove("BULKQ_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "[queue]\nk = 1\nB = 2\nmu = 1\n[rate]\nlambda = RATE\n[grid]\nN = 20\nx_max = 15\ndt = 0.01\n\
                     [run]\nhorizon = 2\ncheckpoints = 0.5, 1, 2\n[sim]\nreps = 20000\nseed = 5\n";

#[test]
fn solve_without_arrivals_stays_idle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("RATE", "constant 0"));
    let out = dir.path().join("out");
    let o = bulkq(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("trajectory.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[1], "idle_0");
    assert_eq!(headers.len(), 1 + 1 + 20 + 2);
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r[1].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("k = 1\nB = 2", "k = 3\nB = 2").replace("RATE", "constant 1"));
    let o = bulkq(&["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("k must not exceed B"), "{err}");

    let missing = dir.path().join("nope.cfg");
    let o = bulkq(&["solve", "--config", missing.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), &SMALL.replace("RATE", "constant 1").replace("0.5, 1, 2", "0.505, 1"));
    let o = bulkq(&["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unwritable_output_is_a_runtime_fault() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("RATE", "constant 1"));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = bulkq(&["solve", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("RATE", "constant 1"));
    let env_out = dir.path().join("from_env");
    let o = bulkq(&["solve", "--config", &cfg], &[("BULKQ_OUT", &env_out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(env_out.join("trajectory.csv").exists());
}

#[test]
fn verify_summary_has_one_line_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("RATE", "constant 0.8"));
    let out = dir.path().join("v");
    let o = bulkq(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let summary = fs::read_to_string(out.join("verify_summary.txt")).unwrap();
    let names: Vec<&str> = summary.lines().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(names, ["conservation", "nonnegativity", "solver_vs_uniformization", "simulation_vs_uniformization"]);
    for line in summary.lines() {
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts.len(), 4, "{line}");
        assert_eq!(parts[1], "PASS");
        parts[2].parse::<f64>().unwrap();
        parts[3].parse::<f64>().unwrap();
    }
    let mut rdr = csv::Reader::from_path(out.join("simulation.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "state_label", "probability", "std_error"]);
}

#[test]
fn simulation_output_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("RATE", "sinusoid a=0.5 b=0.3"));
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = bulkq(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads], &[]);
        assert_eq!(o.status.code(), Some(0));
        files.push(fs::read(out.join("simulation.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn spectral_writes_reports_and_operator_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[queue]\nk = 2\nB = 3\nmu = 2\n[rate]\nlambda = constant 1\n[grid]\nN = 8\nx_max = 5\nM = 50\n\
                [run]\nhorizon = 1\ncheckpoints = 1\n[spectral]\ngamma = 0.5\nsweep = 0:2:5\nnb = 4\n";
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join("s");
    let o = bulkq(&["spectral", "--config", &cfg, "--out", out.to_str().unwrap(), "--dump-operators"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: printed d 1;1"));
    let a_m = fs::read_to_string(out.join("a_m.txt")).unwrap();
    let header: Vec<usize> = a_m.lines().next().unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
    assert_eq!(header[0], 2 + 8 * 50);
    assert_eq!(a_m.lines().count(), header[2] + 1);
    let sweep = fs::read_to_string(out.join("indicator_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 6);
    assert!(out.join("residuals.csv").exists() && out.join("dgamma_report.csv").exists());
}

#[test]
fn spectral_without_gamma_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("RATE", "constant 1"));
    let o = bulkq(&["spectral", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
}
