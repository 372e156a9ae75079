//! Kernel of `γI − A_m`, the Dirichlet operator `D_γ` and the matrix `ΦD_γ`.
//!
//! For `γ` with `Re γ > −μ`, `γ ≠ −λ`, every kernel element is determined by
//! its boundary values `c_n = p_{n−1,1}(0)`:
//!
//! ```text
//! p_{0,0}   = μ c_1 / (ΓΛ)
//! p_{r,0}   = (λ p_{r−1,0} + μ Σ_{i=1}^{r+1} c_i λ^{r+1−i} / Γ^{r+2−i}) / Λ
//! p_{n,1}(x) = e^{−Γx} Σ_{i=1}^{n+1} c_i (λx)^{n+1−i} / (n+1−i)!
//! ```
//!
//! with `Γ = γ + λ + μ` and `Λ = γ + λ`. Integrals of the busy densities use
//! `∫ x^i e^{−cx} dx = i!/c^{i+1}` instead of quadrature, so closed-form
//! comparisons carry no grid error.
//!
//! The intensity is a frozen constant here.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{GridConfig, QueueConfig, StateVector};
use crate::operators::{apply_phi, flatten, OperatorAssembly};

/// Relative deviation above which a printed closed form is reported as
/// inconsistent with the derived value.
pub const CLOSED_FORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    gamma: Complex64,
    lambda: f64,
    mu: f64,
}

impl SpectralPoint {
    pub fn new(gamma: Complex64, lambda: f64, mu: f64) -> Result<Self> {
        if !(gamma.re.is_finite() && gamma.im.is_finite() && lambda.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidParameter("spectral parameters must be finite".into()));
        }
        if lambda < 0.0 {
            return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
        }
        if !(mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        if !(gamma.re > -mu) {
            return Err(Error::OutsideAdmissibleSet(format!("Re γ = {} ≤ −μ = {}", gamma.re, -mu)));
        }
        if (gamma + lambda).norm() <= 1e-12 * (1.0 + lambda) {
            return Err(Error::OutsideAdmissibleSet(format!("γ = −λ = {}", -lambda)));
        }
        Ok(Self { gamma, lambda, mu })
    }

    pub fn gamma(&self) -> Complex64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `Γ = γ + λ + μ`.
    pub fn big_gamma(&self) -> Complex64 {
        self.gamma + self.lambda + self.mu
    }

    /// `Λ = γ + λ`.
    pub fn big_lambda(&self) -> Complex64 {
        self.gamma + self.lambda
    }

    fn check_queue(&self, cfg: &QueueConfig) -> Result<()> {
        if (cfg.mu() - self.mu).abs() > 1e-15 * self.mu {
            return Err(Error::InvalidParameter(format!(
                "queue μ = {} differs from spectral μ = {}",
                cfg.mu(),
                self.mu
            )));
        }
        Ok(())
    }
}

/// Boundary values `c_1, c_2, …` (finite support, implicitly zero beyond).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    coeffs: Vec<Complex64>,
}

impl BoundaryData {
    pub fn new(mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidParameter("boundary data must be finite".into()));
        }
        while coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        Ok(Self { coeffs })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// `e_j`: boundary value 1 at busy level `j` (0-based), zero elsewhere.
    pub fn unit(j: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); j + 1];
        coeffs[j] = Complex64::new(1.0, 0.0);
        Self { coeffs }
    }

    /// Coefficient `c_{n+1}`, the boundary value of busy level `n`.
    pub fn at_level(&self, n: usize) -> Complex64 {
        self.coeffs.get(n).copied().unwrap_or_default()
    }

    pub fn support(&self) -> usize {
        self.coeffs.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }
}

/// Analytic kernel element for fixed `(γ, c)`.
struct Kernel<'a> {
    sp: &'a SpectralPoint,
    c: &'a [Complex64],
    ln_fact: Vec<f64>,
}

impl<'a> Kernel<'a> {
    fn new(sp: &'a SpectralPoint, c: &'a BoundaryData, levels: usize) -> Self {
        let mut ln_fact = vec![0.0; levels + 1];
        for m in 1..ln_fact.len() {
            ln_fact[m] = ln_fact[m - 1] + libm::log(m as f64);
        }
        Self { sp, c: c.coeffs(), ln_fact }
    }

    /// `(λx)^m / m! · e^{−Γx}`.
    fn term(&self, m: usize, x: f64) -> Complex64 {
        let g = self.sp.big_gamma();
        if m == 0 {
            return (-g * x).exp();
        }
        let lx = self.sp.lambda * x;
        if lx == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let mag = libm::exp(m as f64 * libm::log(lx) - self.ln_fact[m] - g.re * x);
        Complex64::from_polar(mag, -g.im * x)
    }

    fn density(&self, n: usize, x: f64) -> Complex64 {
        self.c
            .iter()
            .enumerate()
            .take(n + 1)
            .map(|(i, &ci)| ci * self.term(n - i, x))
            .sum()
    }

    /// Term-wise derivative of `density` by the product rule.
    fn derivative(&self, n: usize, x: f64) -> Complex64 {
        let g = self.sp.big_gamma();
        self.c
            .iter()
            .enumerate()
            .take(n + 1)
            .map(|(i, &ci)| {
                let m = n - i;
                let power = if m == 0 { Complex64::new(0.0, 0.0) } else { self.term(m - 1, x) * self.sp.lambda };
                ci * (power - g * self.term(m, x))
            })
            .sum()
    }

    /// `ψ(p_{n,1}) = Σ_{i=1}^{n+1} c_i λ^{n+1−i} / Γ^{n+2−i}`.
    fn psi(&self, n: usize) -> Complex64 {
        let g = self.sp.big_gamma();
        self.c
            .iter()
            .enumerate()
            .take(n + 1)
            .map(|(i, &ci)| {
                let m = (n - i) as i32;
                ci * libm::pow(self.sp.lambda, m as f64) / g.powi(m + 1)
            })
            .sum()
    }

    /// Idle entries by the first-level formula and the forward recursion.
    fn idle(&self, k: usize) -> Vec<Complex64> {
        let (g, big_l) = (self.sp.big_gamma(), self.sp.big_lambda());
        let (lam, mu) = (self.sp.lambda, self.sp.mu);
        let c = |i: usize| self.c.get(i - 1).copied().unwrap_or_default();
        let mut out = Vec::with_capacity(k);
        out.push(c(1) * mu / (g * big_l));
        for r in 1..k {
            let mut sum = Complex64::new(0.0, 0.0);
            for i in 1..=r + 1 {
                sum += c(i) * libm::pow(lam, (r + 1 - i) as f64) / g.powi((r + 2 - i) as i32);
            }
            let prev = out[r - 1];
            out.push((prev * lam + sum * mu) / big_l);
        }
        out
    }
}

/// Samples the kernel element with boundary data `c` on the grid midpoints.
pub fn eigenfunction(
    sp: &SpectralPoint,
    c: &BoundaryData,
    cfg: &QueueConfig,
    grid: &GridConfig,
) -> Result<StateVector<Complex64>> {
    sp.check_queue(cfg)?;
    if c.support() > grid.levels() {
        return Err(Error::InvalidParameter(format!(
            "boundary data support {} exceeds N = {}",
            c.support(),
            grid.levels()
        )));
    }
    let kernel = Kernel::new(sp, c, grid.levels());
    let mut s = StateVector::<Complex64>::zeros(cfg.k(), grid);
    s.idle = kernel.idle(cfg.k());
    if c.support() == 0 {
        return Ok(s);
    }
    for n in 0..grid.levels() {
        for (j, v) in s.level_mut(n).iter_mut().enumerate() {
            *v = kernel.density(n, grid.midpoint(j));
        }
    }
    Ok(s)
}

/// Closed-form values `p_{n,1}(0)` for `n < levels`.
pub fn analytic_boundary_values(sp: &SpectralPoint, c: &BoundaryData, levels: usize) -> Vec<Complex64> {
    let kernel = Kernel::new(sp, c, levels);
    (0..levels).map(|n| kernel.density(n, 0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    /// Exact derivative of the busy densities and closed-form `ψ`.
    SemiAnalytic,
    /// The assembled upwind matrix with the exact boundary values as inflow.
    Discrete,
}

/// `‖(γI − A_m)p‖ / ‖p‖` for the kernel element with boundary data `c`.
pub fn residual(
    sp: &SpectralPoint,
    c: &BoundaryData,
    cfg: &QueueConfig,
    grid: &GridConfig,
    assembly: &OperatorAssembly,
    mode: ResidualMode,
) -> Result<f64> {
    if (assembly.lambda - sp.lambda).abs() > 1e-15 * (1.0 + sp.lambda) {
        return Err(Error::InvalidParameter(format!(
            "assembly built with λ = {}, spectral point has λ = {}",
            assembly.lambda, sp.lambda
        )));
    }
    let s = eigenfunction(sp, c, cfg, grid)?;
    match mode {
        ResidualMode::Discrete => {
            let boundary = analytic_boundary_values(sp, c, grid.levels());
            residual_of_state(sp, &s, &boundary, grid, assembly)
        }
        ResidualMode::SemiAnalytic => {
            let norm = s.x_norm(grid)?;
            if norm == 0.0 {
                return Err(Error::ZeroInput("residual of a zero state"));
            }
            let kernel = Kernel::new(sp, c, grid.levels());
            let (gamma, lam, mu) = (sp.gamma, sp.lambda, sp.mu);
            let mut total = 0.0;
            for r in 0..cfg.k() {
                let below = if r > 0 { s.idle[r - 1] * lam } else { Complex64::new(0.0, 0.0) };
                let applied = -s.idle[r] * lam + below + kernel.psi(r) * mu;
                total += (s.idle[r] * gamma - applied).norm();
            }
            let mut busy = 0.0;
            for n in 0..grid.levels() {
                for j in 0..grid.cells() {
                    let x = grid.midpoint(j);
                    let p = s.level(n)[j];
                    let below = if n > 0 { s.level(n - 1)[j] * lam } else { Complex64::new(0.0, 0.0) };
                    let applied = -kernel.derivative(n, x) - p * (lam + mu) + below;
                    busy += (p * gamma - applied).norm();
                }
            }
            total += busy * grid.dx();
            Ok(total / norm)
        }
    }
}

/// Discrete residual of an arbitrary complex state whose busy levels take the
/// values `boundary` at `x = 0`.
pub fn residual_of_state(
    sp: &SpectralPoint,
    s: &StateVector<Complex64>,
    boundary: &[Complex64],
    grid: &GridConfig,
    assembly: &OperatorAssembly,
) -> Result<f64> {
    s.check_shape(grid)?;
    if s.idle.len() != assembly.k || boundary.len() != grid.levels() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} idle and {} boundary values", assembly.k, grid.levels()),
            found: format!("{} and {}", s.idle.len(), boundary.len()),
        });
    }
    let norm = s.x_norm(grid)?;
    if norm == 0.0 {
        return Err(Error::ZeroInput("residual of a zero state"));
    }
    let v = flatten(s);
    let applied = assembly.a_m.mul_vec(&v);
    let mut r: Vec<Complex64> = v.iter().zip(&applied).map(|(&x, &a)| x * sp.gamma - a).collect();
    let inv_dx = 1.0 / grid.dx();
    for (n, &b) in boundary.iter().enumerate() {
        r[assembly.busy_index(n, 0)] -= b * inv_dx;
    }
    let weights = assembly.mass_weights();
    Ok(r.iter().zip(&weights).map(|(x, w)| x.norm() * w).sum::<f64>() / norm)
}

/// `ε_i(value)(x) = value · λ^i/i! · x^i · e^{−Γx}` sampled at the midpoints.
pub fn epsilon(i: usize, sp: &SpectralPoint, value: Complex64, grid: &GridConfig) -> Vec<Complex64> {
    let unit = BoundaryData::unit(0);
    let kernel = Kernel::new(sp, &unit, i);
    (0..grid.cells()).map(|j| value * kernel.term(i, grid.midpoint(j))).collect()
}

/// `ψ(ε_i(1)) = λ^i / Γ^{i+1}`.
pub fn epsilon_psi(i: usize, sp: &SpectralPoint) -> Complex64 {
    libm::pow(sp.lambda, i as f64) / sp.big_gamma().powi(i as i32 + 1)
}

/// `ΦD_γ` truncated to `levels × nb`, from closed-form integrals.
pub fn phi_dirichlet(
    sp: &SpectralPoint,
    cfg: &QueueConfig,
    levels: usize,
    nb: usize,
) -> Result<Vec<Vec<Complex64>>> {
    sp.check_queue(cfg)?;
    if nb > levels {
        return Err(Error::InvalidParameter(format!("N_b = {nb} exceeds N = {levels}")));
    }
    let (k, batch) = (cfg.k(), cfg.batch());
    let mut out = vec![vec![Complex64::new(0.0, 0.0); nb]; levels];
    for j in 0..nb {
        let unit = BoundaryData::unit(j);
        let kernel = Kernel::new(sp, &unit, levels);
        let idle = kernel.idle(k);
        out[0][j] = (k..=batch).map(|n| kernel.psi(n)).sum::<Complex64>() * sp.mu
            + idle[k - 1] * sp.lambda;
        for (n, row) in out.iter_mut().enumerate().skip(1) {
            if n + batch < levels {
                row[j] = kernel.psi(n + batch) * sp.mu;
            }
        }
    }
    Ok(out)
}

/// One comparison of a printed closed form against the derived value.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub object: &'static str,
    pub index: String,
    pub printed: Complex64,
    pub derived: Complex64,
    pub abs_dev: f64,
    pub rel_dev: f64,
}

impl ReportEntry {
    fn new(object: &'static str, index: String, printed: Complex64, derived: Complex64) -> Self {
        let abs_dev = (printed - derived).norm();
        let rel_dev = if abs_dev == 0.0 {
            0.0
        } else if derived.norm() > 0.0 {
            abs_dev / derived.norm()
        } else {
            f64::INFINITY
        };
        Self { object, index, printed, derived, abs_dev, rel_dev }
    }

    pub fn is_consistent(&self) -> bool {
        self.rel_dev <= CLOSED_FORM_TOL
    }
}

/// Printed `d_{i,r} = μλ^{i+1−r}/(ΓΛ^{i+2}) Σ_{j=0}^{i+1−r} Λ^{r+j}/Γ^j` (1-based).
pub fn printed_d(sp: &SpectralPoint, i: usize, r: usize) -> Complex64 {
    let (g, big_l, lam, mu) = (sp.big_gamma(), sp.big_lambda(), sp.lambda, sp.mu);
    let top = i + 1 - r;
    let sum: Complex64 = (0..=top).map(|j| big_l.powi((r + j) as i32) / g.powi(j as i32)).sum();
    sum * mu * libm::pow(lam, top as f64) / (g * big_l.powi(i as i32 + 2))
}

/// Printed first-row entries `a_{1,i}` of `ΦD_γ` (1-based, `1 ≤ i ≤ B+1`).
pub fn printed_a1(sp: &SpectralPoint, cfg: &QueueConfig, i: usize) -> Complex64 {
    let (g, big_l) = (sp.big_gamma(), sp.big_lambda());
    let ratio = sp.lambda / g;
    let lead = sp.mu / g;
    let (k, batch) = (cfg.k(), cfg.batch());
    let geometric = |from: usize, to: usize| -> Complex64 {
        (from..=to).map(|j| ratio.powi(j as i32)).sum()
    };
    if i <= k {
        let idle_part: Complex64 = (0..=k - i).map(|j| (big_l / g).powi(j as i32)).sum();
        lead * ratio.powi((k + 1 - i) as i32) * idle_part + lead * geometric(k + 1 - i, batch + 1 - i)
    } else {
        lead * geometric(0, batch + 1 - i)
    }
}

/// Printed geometric rows of `ΦD_γ`: entry `(n, j)` (0-based, `n ≥ 1`) is
/// `(μ/Γ)(λ/Γ)^{n+B−j}` for `j ≤ n + B`.
pub fn printed_phid_row(sp: &SpectralPoint, cfg: &QueueConfig, n: usize, j: usize) -> Complex64 {
    let g = sp.big_gamma();
    let top = n + cfg.batch();
    if j > top {
        return Complex64::new(0.0, 0.0);
    }
    (sp.mu / g) * (sp.lambda / g).powi((top - j) as i32)
}

#[derive(Debug, Clone)]
pub struct DirichletColumn {
    /// Exact `p_{n,1}(0)` from the closed form.
    pub boundary: Vec<Complex64>,
    pub state: StateVector<Complex64>,
}

#[derive(Debug, Clone)]
pub struct DirichletArtifacts {
    pub point: SpectralPoint,
    pub columns: Vec<DirichletColumn>,
    /// `N × N_b`.
    pub phi_d: Vec<Vec<Complex64>>,
    pub report: Vec<ReportEntry>,
    /// Largest `|busy level n of column j − ε_{n−j}(1)|` over all samples.
    pub epsilon_layout_deviation: f64,
    /// Largest gap between `ΦD_γ` by closed form and by grid quadrature.
    pub quadrature_deviation: f64,
    pub notes: Vec<String>,
}

impl DirichletArtifacts {
    /// Whether every column's boundary values are exactly the unit vector.
    pub fn boundary_identity_holds(&self) -> bool {
        self.columns.iter().enumerate().all(|(j, col)| {
            col.boundary.iter().enumerate().all(|(n, &v)| {
                v == if n == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
            })
        })
    }

    /// Largest relative gap between `(n, j)` and `(n+1, j+1)` over rows
    /// `n ≥ 1` inside the truncation.
    pub fn toeplitz_deviation(&self, batch: usize) -> f64 {
        let levels = self.phi_d.len();
        let nb = self.phi_d.first().map_or(0, |r| r.len());
        let mut worst: f64 = 0.0;
        for n in 1..levels {
            if n + 1 + batch >= levels {
                break;
            }
            for j in 0..nb.saturating_sub(1) {
                let (a, b) = (self.phi_d[n][j], self.phi_d[n + 1][j + 1]);
                let scale = a.norm().max(b.norm());
                if scale > 0.0 {
                    worst = worst.max((a - b).norm() / scale);
                }
            }
        }
        worst
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ReportEntry> {
        self.report.iter().filter(|e| !e.is_consistent())
    }
}

/// Builds `D_γ` column by column (`c = e_j`, `j < nb`), `ΦD_γ`, and the
/// comparison of the printed closed forms against them.
pub fn dirichlet(
    sp: &SpectralPoint,
    cfg: &QueueConfig,
    grid: &GridConfig,
    nb: usize,
) -> Result<DirichletArtifacts> {
    let levels = grid.levels();
    let phi_d = phi_dirichlet(sp, cfg, levels, nb)?;
    let (k, batch) = (cfg.k(), cfg.batch());

    let mut columns = Vec::with_capacity(nb);
    let mut layout: f64 = 0.0;
    let mut quadrature: f64 = 0.0;
    let eps: Vec<Vec<Complex64>> =
        (0..levels).map(|i| epsilon(i, sp, Complex64::new(1.0, 0.0), grid)).collect();
    for j in 0..nb {
        let unit = BoundaryData::unit(j);
        let state = eigenfunction(sp, &unit, cfg, grid)?;
        for n in 0..levels {
            for (cell, &v) in state.level(n).iter().enumerate() {
                let expected = if n >= j { eps[n - j][cell] } else { Complex64::new(0.0, 0.0) };
                layout = layout.max((v - expected).norm());
            }
        }
        let numeric = apply_phi(cfg, grid, sp.lambda, &state)?;
        for (n, v) in numeric.iter().enumerate() {
            quadrature = quadrature.max((v - phi_d[n][j]).norm());
        }
        columns.push(DirichletColumn { boundary: analytic_boundary_values(sp, &unit, levels), state });
    }

    let mut report = Vec::new();
    for i in 1..=k {
        for r in 1..=i.min(nb) {
            let derived = columns[r - 1].state.idle[i - 1];
            report.push(ReportEntry::new("d", format!("{i};{r}"), printed_d(sp, i, r), derived));
        }
    }
    for i in 1..=(batch + 1).min(nb) {
        report.push(ReportEntry::new("a1", format!("{i}"), printed_a1(sp, cfg, i), phi_d[0][i - 1]));
    }
    for (n, row) in phi_d.iter().enumerate().take(levels.saturating_sub(batch)).skip(1) {
        for (j, &value) in row.iter().enumerate() {
            report.push(ReportEntry::new("phid_row", format!("{n};{j}"), printed_phid_row(sp, cfg, n, j), value));
        }
    }

    let notes = vec![
        String::from(
            "first printed row of ΦD_γ ends with a repeated a_{1,1} label; entries are compared by the a_{1,i} formulas for 1 ≤ i ≤ B+1",
        ),
        format!("rows n with n + B ≥ N = {levels} fall outside the truncation and are zero"),
    ];
    Ok(DirichletArtifacts {
        point: *sp,
        columns,
        phi_d,
        report,
        epsilon_layout_deviation: layout,
        quadrature_deviation: quadrature,
        notes,
    })
}

/// Smallest singular value of `I − ΦD_γ` truncated to `nb × nb`; values near
/// zero flag candidate spectrum of the full operator.
pub fn char_indicator(sp: &SpectralPoint, cfg: &QueueConfig, grid: &GridConfig, nb: usize) -> Result<f64> {
    if nb == 0 {
        return Err(Error::InvalidParameter("N_b must be positive".into()));
    }
    let phi_d = phi_dirichlet(sp, cfg, grid.levels(), nb)?;
    let m = DMatrix::<Complex64>::from_fn(nb, nb, |r, c| {
        let id = if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        id - phi_d[r][c]
    });
    Ok(m.singular_values().min())
}
