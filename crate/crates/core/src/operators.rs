//! Matrix realizations of the maximal operator `A_m`, the boundary trace `L`
//! and the boundary perturbation `Φ` on the truncated grid.
//!
//! Unknowns are ordered as the flattened [`StateVector`]: idle levels
//! `0..k` first, then busy cell `(n, j)` at `k + n·M + j`. Busy unknowns are
//! densities, so a column sum of a generator is only zero after weighting busy
//! rows by `Δx` (see [`OperatorAssembly::mass_weights`]).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::model::{GridConfig, Modulus, QueueConfig, StateVector};
use crate::sparse::SparseMatrix;

/// Default cap on `k + N·M` for assembly.
pub const ASSEMBLY_CAP: usize = 1 << 24;

/// `ψ(f) = ∫ f dx` by midpoint quadrature over one busy level.
pub fn psi<T: Scalar>(level: &[T], dx: f64) -> T {
    level.iter().fold(T::default(), |acc, &v| acc + v) * dx
}

/// Entry type of real or complex states.
pub trait Scalar: Modulus + Add<Output = Self> + Mul<f64, Output = Self> {}

impl Scalar for f64 {}
impl Scalar for num_complex::Complex64 {}

#[derive(Debug, Clone)]
pub struct OperatorAssembly {
    /// Maximal operator with zero inflow at `x = 0`.
    pub a_m: SparseMatrix,
    /// `N × dim`, extracts the first-cell value of each busy level.
    pub trace: SparseMatrix,
    /// `N × dim`, boundary inflow in terms of the interior state.
    pub phi: SparseMatrix,
    pub k: usize,
    pub levels: usize,
    pub cells: usize,
    pub dx: f64,
    pub lambda: f64,
}

impl OperatorAssembly {
    pub fn dim(&self) -> usize {
        self.k + self.levels * self.cells
    }

    pub fn busy_index(&self, n: usize, j: usize) -> usize {
        self.k + n * self.cells + j
    }

    /// 1 for idle unknowns, `Δx` for busy cells: converts densities to masses.
    pub fn mass_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dx; self.dim()];
        w[..self.k].fill(1.0);
        w
    }

    /// `A_m` with the boundary row fed by `Φ`: the upwind inflow into cell 0
    /// of level `n` is `(Φp)_n / Δx`.
    pub fn closed_generator(&self) -> SparseMatrix {
        let inv_dx = 1.0 / self.dx;
        let inflow = (0..self.levels)
            .flat_map(|n| self.phi.row(n).map(move |(c, v)| (n, c, v)))
            .map(|(n, c, v)| (self.busy_index(n, 0), c, v * inv_dx))
            .collect();
        self.a_m.add(&SparseMatrix::from_triplets(self.dim(), self.dim(), inflow))
    }

    /// Columns whose mass leaves the truncated grid: busy level `N−1`
    /// (arrivals overflow) and the last age cell (shift past `x_max`).
    pub fn is_truncation_column(&self, col: usize) -> bool {
        if col < self.k {
            return false;
        }
        let n = (col - self.k) / self.cells;
        let j = (col - self.k) % self.cells;
        n + 1 == self.levels || j + 1 == self.cells
    }
}

pub fn assemble(cfg: &QueueConfig, grid: &GridConfig, lambda: f64) -> Result<OperatorAssembly> {
    assemble_with_cap(cfg, grid, lambda, ASSEMBLY_CAP)
}

pub fn assemble_with_cap(
    cfg: &QueueConfig,
    grid: &GridConfig,
    lambda: f64,
    cap: usize,
) -> Result<OperatorAssembly> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let (k, levels, cells) = (cfg.k(), grid.levels(), grid.cells());
    let dim = k + levels * cells;
    if dim > cap {
        return Err(Error::DimensionOverflow { dim, cap });
    }
    let (mu, dx) = (cfg.mu(), grid.dx());
    let busy = |n: usize, j: usize| k + n * cells + j;

    let mut a = Vec::with_capacity(k * (2 + cells) + levels * cells * 3);
    // L block and the μψ coupling of idle r to busy level r
    for r in 0..k {
        a.push((r, r, -lambda));
        if r > 0 {
            a.push((r, r - 1, lambda));
        }
        for j in 0..cells {
            a.push((r, busy(r, j), mu * dx));
        }
    }
    // K block: D on the diagonal, λ on the sub-diagonal
    let inv_dx = 1.0 / dx;
    for n in 0..levels {
        for j in 0..cells {
            let row = busy(n, j);
            a.push((row, row, -(lambda + mu) - inv_dx));
            if j > 0 {
                a.push((row, busy(n, j - 1), inv_dx));
            }
            if n > 0 {
                a.push((row, busy(n - 1, j), lambda));
            }
        }
    }
    let a_m = SparseMatrix::from_triplets(dim, dim, a);

    let trace = SparseMatrix::from_triplets(
        levels,
        dim,
        (0..levels).map(|n| (n, busy(n, 0), 1.0)).collect(),
    );

    let mut p = Vec::new();
    p.push((0, k - 1, lambda));
    for i in cfg.k()..=cfg.batch() {
        for j in 0..cells {
            p.push((0, busy(i, j), mu * dx));
        }
    }
    for n in 1..levels {
        let src = n + cfg.batch();
        if src < levels {
            for j in 0..cells {
                p.push((n, busy(src, j), mu * dx));
            }
        }
    }
    let phi = SparseMatrix::from_triplets(levels, dim, p);

    Ok(OperatorAssembly { a_m, trace, phi, k, levels, cells, dx, lambda })
}

/// Boundary inflow: entry 0 is `μ Σ_{i=k}^{B} ψ(p_i) + λ p_{k−1,0}`, entry
/// `n ≥ 1` is `μ ψ(p_{n+B})` while `n + B < N`.
pub fn apply_phi<T: Scalar>(
    cfg: &QueueConfig,
    grid: &GridConfig,
    lambda: f64,
    s: &StateVector<T>,
) -> Result<Vec<T>> {
    s.check_shape(grid)?;
    if s.idle.len() != cfg.k() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} idle entries", cfg.k()),
            found: format!("{}", s.idle.len()),
        });
    }
    let (mu, dx, levels) = (cfg.mu(), grid.dx(), grid.levels());
    let mut out = vec![T::default(); levels];
    out[0] = (cfg.k()..=cfg.batch()).fold(T::default(), |acc, i| acc + psi(s.level(i), dx)) * mu
        + s.idle[cfg.k() - 1] * lambda;
    for (n, slot) in out.iter_mut().enumerate().skip(1) {
        let src = n + cfg.batch();
        if src < levels {
            *slot = psi(s.level(src), dx) * mu;
        }
    }
    Ok(out)
}

/// First-cell value of every busy level (first-order trace at `x = 0`).
pub fn boundary_trace<T: Modulus>(s: &StateVector<T>, grid: &GridConfig) -> Result<Vec<T>> {
    s.check_shape(grid)?;
    Ok((0..grid.levels()).map(|n| s.level(n)[0]).collect())
}

/// Flattened view of a state in assembly order.
pub fn flatten<T: Modulus>(s: &StateVector<T>) -> Vec<T> {
    s.idle.iter().chain(s.busy().iter()).copied().collect()
}
