//! Forward integration of the state-probability system and the constant-rate
//! uniformization oracle.
//!
//! The busy densities are transported along characteristics: with `Δt = Δx`
//! a step shifts every level by exactly one age cell. Events inside a step are
//! split with the midpoint intensity `λ̄ = λ(t + Δt/2)`: a cell of mass `m`
//! keeps `e^{-(λ̄+μ)Δt}·m`, sends the arrival share to the next queue level at
//! the same age, and the service share to the boundary cell (or an idle
//! level) of its completion target. Every split sums to `m`, so probability
//! only leaves the grid through the recorded `lost_mass`.
//!
//! Internally each busy level is a ring buffer over age cells; the shift is a
//! head rotation and only cells that can hold mass are touched.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{GridConfig, QueueConfig, StateVector};
use crate::rates::RateFunction;

/// Upper bound on the number of steps of a single solve.
pub const MAX_STEPS: u64 = 1_000_000_000;

const NEGATIVE_GUARD: f64 = -1e-9;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector<f64>>,
    pub queue: QueueConfig,
    pub grid: GridConfig,
    pub rate: RateFunction,
}

impl Trajectory {
    /// `|total_mass + lost_mass − 1|` at each checkpoint.
    pub fn conservation_defects(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| (s.total_mass(&self.grid).unwrap_or(f64::NAN) + s.lost_mass - 1.0).abs())
            .collect()
    }
}

/// Step-by-step solver state.
pub struct Integrator<'a> {
    queue: QueueConfig,
    grid: GridConfig,
    rate: &'a RateFunction,
    idle: Vec<f64>,
    ring: Vec<f64>,
    head: usize,
    live: usize,
    lost: f64,
    steps: u64,
    t0: f64,
    level_mass: Vec<f64>,
    inflow: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(
        queue: &QueueConfig,
        grid: &GridConfig,
        rate: &'a RateFunction,
        state: &StateVector<f64>,
        t0: f64,
    ) -> Result<Self> {
        state.check_shape(grid)?;
        if state.idle.len() != queue.k() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} idle entries", queue.k()),
                found: format!("{}", state.idle.len()),
            });
        }
        if !(t0 >= 0.0) {
            return Err(Error::NegativeTime(t0));
        }
        let cells = grid.cells();
        let live = (0..grid.levels())
            .filter_map(|n| state.level(n).iter().rposition(|&v| v != 0.0))
            .max()
            .map_or(0, |j| j + 1);
        Ok(Self {
            queue: *queue,
            grid: *grid,
            rate,
            idle: state.idle.clone(),
            ring: state.busy().to_vec(),
            head: 0,
            live: live.min(cells),
            lost: state.lost_mass,
            steps: 0,
            t0,
            level_mass: vec![0.0; grid.levels()],
            inflow: vec![0.0; grid.levels()],
        })
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.grid.dt()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Contiguous slot ranges holding the live cells, in age order.
    fn live_segments(&self) -> [(usize, usize); 2] {
        let cells = self.grid.cells();
        let end = self.head + self.live;
        if end <= cells {
            [(self.head, end), (0, 0)]
        } else {
            [(self.head, cells), (0, end - cells)]
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let (k, batch, mu) = (self.queue.k(), self.queue.batch(), self.queue.mu());
        let (levels, cells, dx) = (self.grid.levels(), self.grid.cells(), self.grid.dx());
        let dt = dx;
        let lam = self.rate.eval(self.time() + 0.5 * dt)?;

        let total = lam + mu;
        let p_event = -libm::expm1(-total * dt);
        let survive = 1.0 - p_event;
        let p_arrival = p_event * lam / total;
        let p_service = p_event * mu / total;
        let q_idle = -libm::expm1(-lam * dt);

        // decay, arrival coupling and level masses in one descending pass
        let segments = self.live_segments();
        for n in (0..levels).rev() {
            let (below, rest) = self.ring.split_at_mut(n * cells);
            let cur = &mut rest[..cells];
            let mut sum = 0.0;
            if n > 0 {
                let prev = &below[(n - 1) * cells..];
                for &(a, b) in &segments {
                    for (c, &p) in cur[a..b].iter_mut().zip(&prev[a..b]) {
                        sum += *c;
                        *c = survive * *c + p_arrival * p;
                    }
                }
            } else {
                for &(a, b) in &segments {
                    for c in &mut cur[a..b] {
                        sum += *c;
                        *c *= survive;
                    }
                }
            }
            self.level_mass[n] = sum * dx;
        }
        self.lost += p_arrival * self.level_mass[levels - 1];

        // shift: the slot before the head becomes age cell 0
        let slot = (self.head + cells - 1) % cells;
        if self.live == cells {
            for n in 0..levels {
                self.lost += self.ring[n * cells + slot] * dx;
            }
        }

        // boundary inflow masses from the pre-step state
        self.inflow.fill(0.0);
        self.inflow[0] = q_idle * self.idle[k - 1];
        for n in 0..levels {
            let done = p_service * self.level_mass[n];
            if n < k {
                continue;
            } else if n <= batch {
                self.inflow[0] += done;
            } else {
                self.inflow[n - batch] += done;
            }
        }
        for n in 0..levels {
            self.ring[n * cells + slot] = self.inflow[n] / dx;
        }

        // idle levels
        let mut carry = 0.0;
        for r in 0..k {
            let leaving = q_idle * self.idle[r];
            self.idle[r] += carry - leaving + p_service * self.level_mass[r];
            carry = leaving;
            if self.idle[r] < NEGATIVE_GUARD {
                return Err(Error::Instability {
                    step: self.steps,
                    detail: format!("idle level {r} reached {}", self.idle[r]),
                });
            }
        }

        self.head = slot;
        self.live = (self.live + 1).min(cells);
        self.steps += 1;
        Ok(())
    }

    pub fn state(&self) -> StateVector<f64> {
        let cells = self.grid.cells();
        let mut busy = vec![0.0; self.ring.len()];
        for (dst, src) in busy.chunks_exact_mut(cells).zip(self.ring.chunks_exact(cells)) {
            dst[..cells - self.head].copy_from_slice(&src[self.head..]);
            dst[cells - self.head..].copy_from_slice(&src[..self.head]);
        }
        let mut s = StateVector::from_parts(self.idle.clone(), busy, &self.grid)
            .expect("ring matches grid");
        s.lost_mass = self.lost;
        s
    }
}

/// Advances `s` from time `t` by one step `Δt = Δx`.
pub fn step(
    s: &StateVector<f64>,
    t: f64,
    queue: &QueueConfig,
    grid: &GridConfig,
    rate: &RateFunction,
) -> Result<StateVector<f64>> {
    let mut it = Integrator::new(queue, grid, rate, s, t)?;
    it.step()?;
    let out = it.state();
    let min = out.min_entry();
    if min < NEGATIVE_GUARD {
        return Err(Error::Instability { step: 0, detail: format!("entry reached {min}") });
    }
    Ok(out)
}

fn steps_for(t: f64, dt: f64) -> Result<u64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    let ratio = t / dt;
    if ratio > MAX_STEPS as f64 {
        return Err(Error::InvalidParameter(format!(
            "{t} needs more than {MAX_STEPS} steps of {dt}"
        )));
    }
    let n = libm::round(ratio);
    if (ratio - n).abs() > 1e-6 {
        return Err(Error::OffGrid(t));
    }
    Ok(n as u64)
}

/// Integrates from the empty-system initial state and records the state at
/// each checkpoint (strictly ascending, within `[0, horizon]`, multiples of `Δt`).
pub fn solve(
    queue: &QueueConfig,
    grid: &GridConfig,
    rate: &RateFunction,
    horizon: f64,
    checkpoints: &[f64],
) -> Result<Trajectory> {
    solve_with_progress(queue, grid, rate, horizon, checkpoints, |_| {})
}

pub fn solve_with_progress(
    queue: &QueueConfig,
    grid: &GridConfig,
    rate: &RateFunction,
    horizon: f64,
    checkpoints: &[f64],
    mut on_checkpoint: impl FnMut(usize),
) -> Result<Trajectory> {
    let dt = grid.dt();
    let total = steps_for(horizon, dt)?;
    let mut targets = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        if c > horizon {
            return Err(Error::InvalidParameter(format!("checkpoint {c} beyond horizon {horizon}")));
        }
        let n = steps_for(c, dt)?;
        if targets.last().is_some_and(|&last| n <= last) {
            return Err(Error::InvalidParameter("checkpoints must be strictly ascending".into()));
        }
        targets.push(n);
    }

    let init = StateVector::initial(queue.k(), grid);
    let mut it = Integrator::new(queue, grid, rate, &init, 0.0)?;
    let mut states = Vec::with_capacity(targets.len());
    for (i, &target) in targets.iter().enumerate() {
        while it.steps() < target {
            it.step()?;
        }
        let s = it.state();
        let min = s.min_entry();
        if min < NEGATIVE_GUARD {
            return Err(Error::Instability { step: it.steps(), detail: format!("entry reached {min}") });
        }
        states.push(s);
        on_checkpoint(i);
    }
    debug_assert!(targets.last().is_none_or(|&t| t <= total));
    Ok(Trajectory {
        times: checkpoints.to_vec(),
        states,
        queue: *queue,
        grid: *grid,
        rate: rate.clone(),
    })
}

/// Transient distribution of the constant-rate chain on
/// `{(r,0): r<k} ∪ {(n,1): n<N}` by uniformization. Returns the idle
/// probabilities and the busy queue-length probabilities.
pub fn uniformization(
    queue: &QueueConfig,
    lambda: f64,
    levels: usize,
    t: f64,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    for (name, v) in [("lambda", lambda), ("t", t), ("tol", tol)] {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
        }
    }
    if lambda < 0.0 {
        return Err(Error::NegativeIntensity(format!("lambda = {lambda}")));
    }
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    if levels < queue.batch() + 1 {
        return Err(Error::InvalidParameter(format!(
            "N must be at least B + 1 = {}",
            queue.batch() + 1
        )));
    }
    let (k, batch, mu) = (queue.k(), queue.batch(), queue.mu());
    let dim = k + levels;
    let rate = lambda + mu;
    let qt = rate * t;

    let jump = |v: &[f64], w: &mut [f64]| {
        w.fill(0.0);
        for r in 0..k {
            let m = v[r];
            let to = if r + 1 < k { r + 1 } else { k };
            w[to] += m * lambda / rate;
            w[r] += m * (1.0 - lambda / rate);
        }
        for n in 0..levels {
            let m = v[k + n];
            let arrival = if n + 1 < levels { lambda } else { 0.0 };
            if arrival > 0.0 {
                w[k + n + 1] += m * arrival / rate;
            }
            let done = if n < k {
                n
            } else if n <= batch {
                k
            } else {
                k + n - batch
            };
            w[done] += m * mu / rate;
            w[k + n] += m * (1.0 - (arrival + mu) / rate);
        }
    };

    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    let mut next = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    let mut cumulative = 0.0;
    let mut log_fact = 0.0;
    let log_qt = if qt > 0.0 { libm::log(qt) } else { f64::NEG_INFINITY };
    let cap = (qt + 20.0 * libm::sqrt(qt) + 1000.0) as u64;
    let mut m: u64 = 0;
    loop {
        if m > 0 {
            log_fact += libm::log(m as f64);
        }
        let weight = if m == 0 {
            libm::exp(-qt)
        } else {
            libm::exp(-qt + m as f64 * log_qt - log_fact)
        };
        for (a, &x) in acc.iter_mut().zip(&v) {
            *a += weight * x;
        }
        cumulative += weight;
        if 1.0 - cumulative <= tol || (m as f64 > qt && weight == 0.0) || m >= cap {
            break;
        }
        jump(&v, &mut next);
        core::mem::swap(&mut v, &mut next);
        m += 1;
    }
    let busy = acc.split_off(k);
    Ok((acc, busy))
}
