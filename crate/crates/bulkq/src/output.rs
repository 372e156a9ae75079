//! CSV and text artifacts.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use bulkq_core::dessim::SimEstimate;
use bulkq_core::sparse::SparseMatrix;
use bulkq_core::spectral::ReportEntry;
use bulkq_core::transient::Trajectory;
use num_complex::Complex64;

pub type CsvResult = Result<(), csv::Error>;

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, csv::Error> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// `t, idle_0.., Q_0.., total_mass, lost_mass`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> CsvResult {
    let mut w = writer(path)?;
    let k = traj.queue.k();
    let levels = traj.grid.levels();
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|r| format!("idle_{r}")));
    header.extend((0..levels).map(|n| format!("Q_{n}")));
    header.push("total_mass".into());
    header.push("lost_mass".into());
    w.write_record(&header)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let (idle, q) = s.marginals(&traj.grid).map_err(io::Error::other)?;
        let mut row = vec![t.to_string()];
        row.extend(idle.iter().map(f64::to_string));
        row.extend(q.iter().map(f64::to_string));
        let total = idle.iter().sum::<f64>() + q.iter().sum::<f64>();
        row.push(total.to_string());
        row.push(s.lost_mass.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t, state_label, probability, std_error`; labels are `idle_r` and `busy_n`.
pub fn write_estimate(path: &Path, est: &SimEstimate) -> CsvResult {
    let mut w = writer(path)?;
    w.write_record(["t", "state_label", "probability", "std_error"])?;
    for (i, t) in est.checkpoints.iter().enumerate() {
        for (r, (p, se)) in est.idle_prob[i].iter().zip(&est.idle_se[i]).enumerate() {
            w.write_record([t.to_string(), format!("idle_{r}"), p.to_string(), se.to_string()])?;
        }
        for (n, (p, se)) in est.queue_prob[i].iter().zip(&est.queue_se[i]).enumerate() {
            w.write_record([t.to_string(), format!("busy_{n}"), p.to_string(), se.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Same layout as the trajectory file, for the uniformization oracle.
pub fn write_reference(path: &Path, times: &[f64], rows: &[(Vec<f64>, Vec<f64>)]) -> CsvResult {
    let mut w = writer(path)?;
    let (k, levels) = rows.first().map_or((0, 0), |(i, b)| (i.len(), b.len()));
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|r| format!("idle_{r}")));
    header.extend((0..levels).map(|n| format!("Q_{n}")));
    w.write_record(&header)?;
    for (t, (idle, busy)) in times.iter().zip(rows) {
        let mut row = vec![t.to_string()];
        row.extend(idle.iter().chain(busy).map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_header() -> [&'static str; 10] {
    [
        "gamma_re",
        "gamma_im",
        "object",
        "index",
        "printed_value_re",
        "printed_value_im",
        "derived_value_re",
        "derived_value_im",
        "abs_dev",
        "rel_dev",
    ]
}

pub fn write_report(path: &Path, rows: &[(Complex64, ReportEntry)]) -> CsvResult {
    let mut w = writer(path)?;
    w.write_record(report_header())?;
    for (g, e) in rows {
        w.write_record([
            g.re.to_string(),
            g.im.to_string(),
            e.object.to_string(),
            e.index.clone(),
            e.printed.re.to_string(),
            e.printed.im.to_string(),
            e.derived.re.to_string(),
            e.derived.im.to_string(),
            e.abs_dev.to_string(),
            e.rel_dev.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct ResidualRow {
    pub gamma: Complex64,
    pub column: usize,
    pub semi_analytic: f64,
    pub discrete: f64,
}

pub fn write_residuals(path: &Path, rows: &[ResidualRow]) -> CsvResult {
    let mut w = writer(path)?;
    w.write_record(["gamma_re", "gamma_im", "column", "residual_semi_analytic", "residual_discrete"])?;
    for r in rows {
        w.write_record([
            r.gamma.re.to_string(),
            r.gamma.im.to_string(),
            r.column.to_string(),
            r.semi_analytic.to_string(),
            r.discrete.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[(Complex64, f64)]) -> CsvResult {
    let mut w = writer(path)?;
    w.write_record(["gamma_re", "gamma_im", "indicator"])?;
    for (g, v) in rows {
        w.write_record([g.re.to_string(), g.im.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One `row col value` line per stored entry, preceded by `rows cols nnz`.
pub fn write_triplets(path: &Path, m: &SparseMatrix) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for (r, c, v) in m.triplets() {
        writeln!(w, "{r} {c} {v}")?;
    }
    w.flush()
}
