//! Truncated, discretized state space `C^k × l¹(L¹[0, ∞))`.
//!
//! Idle probabilities `p_{r,0}` are stored directly. Busy densities `p_{n,1}(x)`
//! are stored cell-centred on a uniform age grid, level-major, so that level
//! `n` occupies `busy[n*M .. (n+1)*M]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Service threshold `k`, maximum batch `B` and service rate `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueConfig {
    k: usize,
    batch: usize,
    mu: f64,
}

impl QueueConfig {
    pub fn new(k: usize, batch: usize, mu: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if k > batch {
            return Err(Error::InvalidParameter("k must not exceed B".into()));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { k, batch, mu })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Maximum batch size `B`.
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Largest number of unknowns accepted by grids and operator assembly.
pub const MAX_UNKNOWNS: usize = 1 << 28;

/// Queue-length truncation `N`, age horizon `x_max` and `M` age cells.
/// The time step is tied to the cell width (`Δt = Δx`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    levels: usize,
    x_max: f64,
    cells: usize,
}

impl GridConfig {
    pub fn new(cfg: &QueueConfig, levels: usize, x_max: f64, cells: usize) -> Result<Self> {
        if levels < cfg.batch + 1 {
            return Err(Error::InvalidParameter(format!(
                "N must be at least B + 1 = {}, got {levels}",
                cfg.batch + 1
            )));
        }
        if cells < 2 {
            return Err(Error::InvalidParameter(format!("M must be at least 2, got {cells}")));
        }
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(Error::InvalidParameter(format!("x_max must be positive, got {x_max}")));
        }
        let dim = levels
            .checked_mul(cells)
            .and_then(|d| d.checked_add(cfg.k))
            .unwrap_or(usize::MAX);
        if dim > MAX_UNKNOWNS {
            return Err(Error::DimensionOverflow { dim, cap: MAX_UNKNOWNS });
        }
        Ok(Self { levels, x_max, cells })
    }

    /// Grid with `M = round(x_max / dt)` cells; `dt` must divide `x_max`
    /// up to a relative 1e-9.
    pub fn with_step(cfg: &QueueConfig, levels: usize, x_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let ratio = x_max / dt;
        let cells = libm::round(ratio);
        if (ratio - cells).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} does not divide x_max = {x_max}"
            )));
        }
        if cells > MAX_UNKNOWNS as f64 {
            return Err(Error::DimensionOverflow { dim: usize::MAX, cap: MAX_UNKNOWNS });
        }
        Self::new(cfg, levels, x_max, cells as usize)
    }

    /// `x_max = 25/μ`, `Δx ≈ 1e-3`, `N = max(5B, 40)`.
    pub fn default_for(cfg: &QueueConfig) -> Result<Self> {
        let x_max = 25.0 / cfg.mu;
        let cells = (libm::round(x_max / 1e-3) as usize).max(2);
        Self::new(cfg, default_levels(cfg), x_max, cells)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.cells as f64
    }

    pub fn dt(&self) -> f64 {
        self.dx()
    }

    /// Midpoint of age cell `j`.
    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }
}

pub fn default_levels(cfg: &QueueConfig) -> usize {
    (5 * cfg.batch).max(40)
}

/// Absolute value used by the `X` norm.
pub trait Modulus: Copy + Default {
    fn modulus(self) -> f64;
}

impl Modulus for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Modulus for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Truncated state: `k` idle entries plus an `N × M` grid of busy densities.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T = f64> {
    pub idle: Vec<T>,
    busy: Vec<T>,
    levels: usize,
    cells: usize,
    /// Probability discarded at the truncation boundaries so far.
    pub lost_mass: f64,
}

impl<T: Modulus> StateVector<T> {
    pub fn zeros(k: usize, grid: &GridConfig) -> Self {
        Self {
            idle: vec![T::default(); k],
            busy: vec![T::default(); grid.levels * grid.cells],
            levels: grid.levels,
            cells: grid.cells,
            lost_mass: 0.0,
        }
    }

    pub fn from_parts(idle: Vec<T>, busy: Vec<T>, grid: &GridConfig) -> Result<Self> {
        if busy.len() != grid.levels * grid.cells {
            return Err(Error::ShapeMismatch {
                expected: format!("{} busy entries", grid.levels * grid.cells),
                found: format!("{}", busy.len()),
            });
        }
        Ok(Self { idle, busy, levels: grid.levels, cells: grid.cells, lost_mass: 0.0 })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn busy(&self) -> &[T] {
        &self.busy
    }

    pub fn busy_mut(&mut self) -> &mut [T] {
        &mut self.busy
    }

    pub fn level(&self, n: usize) -> &[T] {
        &self.busy[n * self.cells..(n + 1) * self.cells]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [T] {
        &mut self.busy[n * self.cells..(n + 1) * self.cells]
    }

    pub fn check_shape(&self, grid: &GridConfig) -> Result<()> {
        if self.levels != grid.levels || self.cells != grid.cells {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} busy grid", grid.levels, grid.cells),
                found: format!("{}x{}", self.levels, self.cells),
            });
        }
        Ok(())
    }

    /// Discretized `C^k × l¹(L¹)` norm.
    pub fn x_norm(&self, grid: &GridConfig) -> Result<f64> {
        self.check_shape(grid)?;
        let idle: f64 = self.idle.iter().map(|v| v.modulus()).sum();
        let busy: f64 = self.busy.iter().map(|v| v.modulus()).sum();
        Ok(idle + busy * grid.dx())
    }

    /// `Σ_n ‖p_{n,1}‖_{L¹}` by midpoint quadrature.
    pub fn busy_norm(&self, grid: &GridConfig) -> Result<f64> {
        self.check_shape(grid)?;
        Ok(self.busy.iter().map(|v| v.modulus()).sum::<f64>() * grid.dx())
    }
}

impl StateVector<f64> {
    /// Initial condition: empty system, server idle.
    pub fn initial(k: usize, grid: &GridConfig) -> Self {
        let mut s = Self::zeros(k, grid);
        s.idle[0] = 1.0;
        s
    }

    /// `Σ_r p_{r,0} + Σ_n ∫ p_{n,1}(x) dx` (midpoint quadrature).
    pub fn total_mass(&self, grid: &GridConfig) -> Result<f64> {
        let (idle, q) = self.marginals(grid)?;
        Ok(idle.iter().sum::<f64>() + q.iter().sum::<f64>())
    }

    /// Idle probabilities and `Q_n = ∫ p_{n,1}(x) dx` for each busy level.
    pub fn marginals(&self, grid: &GridConfig) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_shape(grid)?;
        let dx = grid.dx();
        let q = (0..self.levels).map(|n| self.level(n).iter().sum::<f64>() * dx).collect();
        Ok((self.idle.clone(), q))
    }

    pub fn min_entry(&self) -> f64 {
        self.idle.iter().chain(self.busy.iter()).copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(levels: usize, x_max: f64, cells: usize) -> (QueueConfig, GridConfig) {
        let cfg = QueueConfig::new(1, 1, 1.0).unwrap();
        let g = GridConfig::new(&cfg, levels, x_max, cells).unwrap();
        (cfg, g)
    }

    #[test]
    fn queue_config_invariants() {
        assert!(QueueConfig::new(0, 1, 1.0).is_err());
        let err = QueueConfig::new(3, 2, 1.0).unwrap_err();
        assert!(alloc::string::ToString::to_string(&err).contains("k must not exceed B"));
        assert!(QueueConfig::new(1, 1, 0.0).is_err());
        assert!(QueueConfig::new(2, 3, 1.0).is_ok());
    }

    #[test]
    fn grid_invariants() {
        let cfg = QueueConfig::new(2, 3, 1.0).unwrap();
        assert!(GridConfig::new(&cfg, 3, 1.0, 10).is_err());
        assert!(GridConfig::new(&cfg, 4, 1.0, 1).is_err());
        assert!(GridConfig::new(&cfg, 4, 0.0, 10).is_err());
        let g = GridConfig::with_step(&cfg, 40, 25.0, 1e-3).unwrap();
        assert_eq!(g.cells(), 25_000);
        assert!((g.dt() - 1e-3).abs() < 1e-15);
        assert!(GridConfig::with_step(&cfg, 40, 1.0, 0.3).is_err());
        let d = GridConfig::default_for(&cfg).unwrap();
        assert_eq!(d.levels(), 40);
        assert!((d.x_max() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn total_mass_examples() {
        let (_, g) = grid(3, 40.0, 4000);
        assert_eq!(StateVector::initial(2, &g).total_mass(&g).unwrap(), 1.0);
        assert_eq!(StateVector::<f64>::zeros(2, &g).total_mass(&g).unwrap(), 0.0);
        let mut s = StateVector::<f64>::zeros(2, &g);
        for j in 0..g.cells() {
            s.level_mut(0)[j] = libm::exp(-g.midpoint(j));
        }
        assert!((s.total_mass(&g).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (_, g) = grid(3, 1.0, 10);
        let (_, other) = grid(4, 1.0, 10);
        let s = StateVector::initial(1, &g);
        assert!(matches!(s.total_mass(&other), Err(Error::ShapeMismatch { .. })));
        assert!(s.x_norm(&other).is_err());
        assert!(StateVector::from_parts(vec![1.0], vec![0.0; 5], &g).is_err());
    }

    #[test]
    fn x_norm_examples() {
        let (_, g) = grid(3, 1.0, 10);
        let mut s = StateVector::<f64>::zeros(2, &g);
        s.idle[0] = -0.5;
        assert_eq!(s.x_norm(&g).unwrap(), 0.5);
        let mut t = StateVector::initial(2, &g);
        t.level_mut(1).fill(0.3);
        assert!((t.x_norm(&g).unwrap() - t.total_mass(&g).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn marginals_examples() {
        let (_, g) = grid(3, 2.0, 200);
        let (idle, q) = StateVector::initial(1, &g).marginals(&g).unwrap();
        assert_eq!(idle, vec![1.0]);
        assert!(q.iter().all(|&v| v == 0.0));
        let mut s = StateVector::<f64>::zeros(1, &g);
        s.level_mut(2).fill(1.0 / g.x_max());
        let (_, q) = s.marginals(&g).unwrap();
        assert!((q[2] - 1.0).abs() < 1e-12);
        assert_eq!(q[0], 0.0);
        assert_eq!(q[1], 0.0);
    }
}
