//! Discrete-event Monte Carlo oracle with exact thinning of the
//! non-homogeneous Poisson arrival stream.
//!
//! The simulated state is `(q, busy)`: `q` counts waiting customers only, the
//! batch in service is not part of it. A batch of `min(q, B)` starts whenever
//! the server is free and `q ≥ k`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::QueueConfig;
use crate::rates::RateFunction;

/// Next arrival epoch after `t`, or `f64::INFINITY` when the intensity
/// vanishes from `t` on.
pub fn next_arrival<R: Rng + ?Sized>(rf: &RateFunction, t: f64, rng: &mut R) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let mut now = t;
    loop {
        let (end, bound) = rf.majorant_window(now);
        if bound <= 0.0 {
            if end.is_infinite() {
                return Ok(f64::INFINITY);
            }
            now = end;
            continue;
        }
        let gap: f64 = rng.sample(Exp1);
        let candidate = now + gap / bound;
        if candidate >= end {
            // memoryless: restart the proposal stream at the window end
            now = end;
            continue;
        }
        let u: f64 = rng.random();
        if u * bound < rf.eval_unchecked(candidate) {
            return Ok(candidate);
        }
        now = candidate;
    }
}

/// Number of arrivals in `(t0, t1]`.
pub fn count_arrivals<R: Rng + ?Sized>(rf: &RateFunction, t0: f64, t1: f64, rng: &mut R) -> Result<u64> {
    if !(t0 <= t1) {
        return Err(Error::ReversedInterval(t0, t1));
    }
    let mut n = 0;
    let mut t = next_arrival(rf, t0, rng)?;
    while t <= t1 {
        n += 1;
        t = next_arrival(rf, t, rng)?;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueState {
    pub waiting: usize,
    pub busy: bool,
}

/// Random stream of replication `index`: the master seed keys a ChaCha8
/// generator and the replication index selects its stream.
pub fn replication_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn check_checkpoints(horizon: f64, checkpoints: &[f64]) -> Result<()> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid horizon {horizon}")));
    }
    if checkpoints.iter().any(|&c| !(c >= 0.0) || c > horizon) {
        return Err(Error::InvalidParameter("checkpoints must lie in [0, horizon]".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("checkpoints must be ascending".into()));
    }
    Ok(())
}

/// One sample path from the empty, idle system; returns the state at each
/// checkpoint.
pub fn simulate_path<R: Rng + ?Sized>(
    cfg: &QueueConfig,
    rf: &RateFunction,
    horizon: f64,
    checkpoints: &[f64],
    rng: &mut R,
) -> Result<Vec<QueueState>> {
    check_checkpoints(horizon, checkpoints)?;
    let (k, batch, mu) = (cfg.k(), cfg.batch(), cfg.mu());
    let mut q = 0usize;
    let mut busy = false;
    let mut next_arr = next_arrival(rf, 0.0, rng)?;
    let mut next_done = f64::INFINITY;
    let mut out = Vec::with_capacity(checkpoints.len());

    for &cp in checkpoints {
        loop {
            let next = next_arr.min(next_done);
            if next > cp {
                break;
            }
            // ties go to the arrival
            let start = if next_arr <= next_done {
                let t = next_arr;
                q += 1;
                next_arr = next_arrival(rf, t, rng)?;
                (!busy && q >= k).then_some(t)
            } else {
                let t = next_done;
                if q >= k {
                    Some(t)
                } else {
                    busy = false;
                    next_done = f64::INFINITY;
                    None
                }
            };
            if let Some(t) = start {
                q -= q.min(batch);
                busy = true;
                let service: f64 = rng.sample(Exp1);
                next_done = t + service / mu;
            }
        }
        out.push(QueueState { waiting: q, busy });
    }
    Ok(out)
}

/// Integer state counts per checkpoint; merging is exact, so the result does
/// not depend on how replications are grouped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTally {
    pub idle: Vec<Vec<u64>>,
    pub busy: Vec<Vec<u64>>,
    pub n_reps: u64,
}

impl SimTally {
    pub fn new(n_checkpoints: usize, k: usize, levels: usize) -> Self {
        Self {
            idle: vec![vec![0; k]; n_checkpoints],
            busy: vec![vec![0; levels]; n_checkpoints],
            n_reps: 0,
        }
    }

    /// Records one path. Busy queue lengths `≥ N−1` land in the last bucket.
    pub fn record(&mut self, path: &[QueueState]) {
        for (i, s) in path.iter().enumerate() {
            if s.busy {
                let last = self.busy[i].len() - 1;
                self.busy[i][s.waiting.min(last)] += 1;
            } else {
                self.idle[i][s.waiting] += 1;
            }
        }
        self.n_reps += 1;
    }

    pub fn merge(&mut self, other: &SimTally) {
        for (a, b) in self.idle.iter_mut().zip(&other.idle) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.busy.iter_mut().zip(&other.busy) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.n_reps += other.n_reps;
    }
}

/// Replications `range` of the experiment keyed by `master_seed`.
pub fn simulate_replications(
    cfg: &QueueConfig,
    rf: &RateFunction,
    checkpoints: &[f64],
    levels: usize,
    master_seed: u64,
    range: core::ops::Range<u64>,
) -> Result<SimTally> {
    let horizon = checkpoints.iter().copied().fold(0.0, f64::max);
    let mut tally = SimTally::new(checkpoints.len(), cfg.k(), levels);
    for index in range {
        let mut rng = replication_rng(master_seed, index);
        tally.record(&simulate_path(cfg, rf, horizon, checkpoints, &mut rng)?);
    }
    Ok(tally)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub checkpoints: Vec<f64>,
    pub idle_prob: Vec<Vec<f64>>,
    pub idle_se: Vec<Vec<f64>>,
    pub queue_prob: Vec<Vec<f64>>,
    pub queue_se: Vec<Vec<f64>>,
    pub n_reps: u64,
    pub seed: u64,
}

impl SimEstimate {
    pub fn from_tally(tally: &SimTally, checkpoints: &[f64], seed: u64) -> Self {
        let n = tally.n_reps as f64;
        let freq = |rows: &[Vec<u64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|&c| c as f64 / n).collect()).collect()
        };
        let se = |probs: &[Vec<f64>]| -> Vec<Vec<f64>> {
            probs.iter().map(|r| r.iter().map(|&p| binomial_se(p, tally.n_reps)).collect()).collect()
        };
        let idle_prob = freq(&tally.idle);
        let queue_prob = freq(&tally.busy);
        Self {
            checkpoints: checkpoints.to_vec(),
            idle_se: se(&idle_prob),
            queue_se: se(&queue_prob),
            idle_prob,
            queue_prob,
            n_reps: tally.n_reps,
            seed,
        }
    }
}

/// `sqrt(p(1−p)/n)`.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    libm::sqrt(p * (1.0 - p) / n as f64)
}

/// Runs `n_reps` replications sequentially.
pub fn estimate(
    cfg: &QueueConfig,
    rf: &RateFunction,
    checkpoints: &[f64],
    levels: usize,
    n_reps: u64,
    master_seed: u64,
) -> Result<SimEstimate> {
    if n_reps == 0 {
        return Err(Error::InvalidParameter("n_reps must be at least 1".into()));
    }
    if levels < cfg.batch() + 1 {
        return Err(Error::InvalidParameter(format!("N must be at least B + 1 = {}", cfg.batch() + 1)));
    }
    let tally = simulate_replications(cfg, rf, checkpoints, levels, master_seed, 0..n_reps)?;
    Ok(SimEstimate::from_tally(&tally, checkpoints, master_seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_never_arrives() {
        let mut rng = replication_rng(1, 0);
        let rf = RateFunction::constant(0.0).unwrap();
        assert_eq!(next_arrival(&rf, 3.0, &mut rng).unwrap(), f64::INFINITY);
        let pw = RateFunction::piecewise(vec![1.0, 2.0], vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(next_arrival(&pw, 0.0, &mut rng).unwrap(), f64::INFINITY);
        let cfg = QueueConfig::new(2, 3, 1.0).unwrap();
        let path = simulate_path(&cfg, &rf, 5.0, &[0.0, 1.0, 5.0], &mut rng).unwrap();
        assert!(path.iter().all(|s| *s == QueueState { waiting: 0, busy: false }));
    }

    #[test]
    fn piecewise_gap_is_skipped() {
        let pw = RateFunction::piecewise(vec![1.0, 2.0], vec![0.0, 0.0, 3.0]).unwrap();
        let mut rng = replication_rng(7, 3);
        for _ in 0..100 {
            assert!(next_arrival(&pw, 0.0, &mut rng).unwrap() >= 2.0);
        }
    }

    #[test]
    fn constant_rate_interarrival_mean() {
        let rf = RateFunction::constant(2.0).unwrap();
        let mut rng = replication_rng(42, 0);
        let n = 100_000;
        let mut t = 0.0;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let next = next_arrival(&rf, t, &mut rng).unwrap();
            let gap = next - t;
            sum += gap;
            sum_sq += gap * gap;
            t = next;
        }
        let mean = sum / n as f64;
        let se = libm::sqrt((sum_sq / n as f64 - mean * mean) / n as f64);
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn single_replication_gives_indicators() {
        let cfg = QueueConfig::new(1, 2, 1.0).unwrap();
        let rf = RateFunction::constant(1.0).unwrap();
        let est = estimate(&cfg, &rf, &[0.5, 2.0], 10, 1, 9).unwrap();
        for i in 0..2 {
            let all: Vec<f64> = est.idle_prob[i].iter().chain(&est.queue_prob[i]).copied().collect();
            assert!(all.iter().all(|&p| p == 0.0 || p == 1.0));
            assert_eq!(all.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn same_seed_same_estimate() {
        let cfg = QueueConfig::new(2, 3, 1.0).unwrap();
        let rf = RateFunction::sinusoid(0.5, 0.3, 1.0, 0.0).unwrap();
        let a = estimate(&cfg, &rf, &[1.0, 5.0], 20, 500, 11).unwrap();
        let b = estimate(&cfg, &rf, &[1.0, 5.0], 20, 500, 11).unwrap();
        assert_eq!(a, b);
        let c = estimate(&cfg, &rf, &[1.0, 5.0], 20, 500, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_tallies_merge_to_whole() {
        let cfg = QueueConfig::new(1, 1, 1.0).unwrap();
        let rf = RateFunction::constant(1.0).unwrap();
        let whole = simulate_replications(&cfg, &rf, &[1.0], 10, 5, 0..300).unwrap();
        let mut parts = simulate_replications(&cfg, &rf, &[1.0], 10, 5, 200..300).unwrap();
        parts.merge(&simulate_replications(&cfg, &rf, &[1.0], 10, 5, 0..200).unwrap());
        assert_eq!(whole, parts);
    }

    #[test]
    fn fast_service_keeps_queue_short() {
        let cfg = QueueConfig::new(1, 1000, 100.0).unwrap();
        let rf = RateFunction::constant(1.0).unwrap();
        let est = estimate(&cfg, &rf, &[5.0], 1001, 20_000, 3).unwrap();
        let waiting_while_busy: f64 = est.queue_prob[0][1..].iter().sum();
        assert!(waiting_while_busy < 0.05);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = QueueConfig::new(1, 1, 1.0).unwrap();
        let rf = RateFunction::constant(1.0).unwrap();
        assert!(estimate(&cfg, &rf, &[1.0], 10, 0, 1).is_err());
        assert!(estimate(&cfg, &rf, &[2.0, 1.0], 10, 5, 1).is_err());
        assert!(estimate(&cfg, &rf, &[1.0], 1, 5, 1).is_err());
        let mut rng = replication_rng(0, 0);
        assert!(next_arrival(&rf, -1.0, &mut rng).is_err());
    }
}
