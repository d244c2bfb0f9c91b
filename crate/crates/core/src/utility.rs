//! Utility models `U(x, μ, t)` evaluated at the cell midpoints.
//!
//! Models receive raw cell masses rather than a validated [`GridMeasure`]:
//! the MFG fixed-point iteration evaluates utilities on damped iterates
//! whose total mass is not yet one. Integrals against μ are therefore
//! taken literally (`∫ c μ(dy) = c Σ m_j`).

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridMeasure, UniformGrid, UtilityField};

pub trait UtilityModel: Send + Sync {
    /// Writes `U(x_i, μ, t)` into `out`.
    fn evaluate_into(&self, grid: &UniformGrid, masses: &[f64], t: f64, out: &mut [f64]) -> Result<()>;

    /// Whether `t` enters the evaluation.
    fn time_dependent(&self) -> bool {
        false
    }

    fn evaluate(&self, mu: &GridMeasure, t: f64) -> Result<UtilityField> {
        let grid = mu.grid();
        let mut out = vec![0.0; grid.n_cells()];
        self.evaluate_into(grid, mu.masses(), t, &mut out)?;
        UtilityField::new(grid.clone(), out)
    }
}

fn check_shapes(grid: &UniformGrid, masses: &[f64], out: &[f64]) -> Result<()> {
    grid.check_len("mass vector", masses.len())?;
    grid.check_len("output vector", out.len())
}

/// `U ≡ value`, independent of μ and t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantUtility {
    pub value: f64,
}

impl ConstantUtility {
    pub fn zero() -> Self {
        Self { value: 0.0 }
    }
}

impl UtilityModel for ConstantUtility {
    fn evaluate_into(&self, grid: &UniformGrid, masses: &[f64], _t: f64, out: &mut [f64]) -> Result<()> {
        check_shapes(grid, masses, out)?;
        out.fill(self.value);
        Ok(())
    }
}

pub type OuterFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One term `g(Σ_k F_ik m_k)` of a kernel utility.
#[derive(Clone)]
pub struct KernelTerm {
    n: usize,
    matrix: Vec<f64>,
    outer: OuterFn,
}

impl fmt::Debug for KernelTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelTerm").field("n", &self.n).finish_non_exhaustive()
    }
}

impl KernelTerm {
    /// Row-major N×N kernel matrix with an outer map.
    pub fn new(n: usize, matrix: Vec<f64>, outer: OuterFn) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::shape(format!("kernel matrix has {} entries, expected {}", matrix.len(), n * n)));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("kernel matrix entries must be finite"));
        }
        Ok(Self { n, matrix, outer })
    }

    /// Samples `f(x_i, x_j)` at the grid midpoints.
    pub fn from_fn(grid: &UniformGrid, f: impl Fn(f64, f64) -> f64, outer: OuterFn) -> Result<Self> {
        let x = grid.midpoints();
        let matrix = x.iter().flat_map(|&xi| x.iter().map(move |&yj| (xi, yj))).map(|(a, b)| f(a, b)).collect();
        Self::new(grid.n_cells(), matrix, outer)
    }

    /// Identity outer map.
    pub fn linear(grid: &UniformGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, f, Arc::new(|z| z))
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

/// `U_i = Σ_m g_m(Σ_k F^(m)_ik m_k)`.
#[derive(Debug, Clone)]
pub struct KernelUtility {
    terms: Vec<KernelTerm>,
}

impl KernelUtility {
    pub fn new(terms: Vec<KernelTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::domain("a kernel utility needs at least one term"));
        }
        let n = terms[0].n;
        if terms.iter().any(|t| t.n != n) {
            return Err(Error::shape("kernel terms disagree on the grid size"));
        }
        Ok(Self { terms })
    }

    pub fn single(term: KernelTerm) -> Self {
        Self { terms: vec![term] }
    }
}

impl UtilityModel for KernelUtility {
    fn evaluate_into(&self, grid: &UniformGrid, masses: &[f64], _t: f64, out: &mut [f64]) -> Result<()> {
        check_shapes(grid, masses, out)?;
        let n = grid.n_cells();
        if self.terms[0].n != n {
            return Err(Error::shape(format!("kernel is {0}x{0}, grid has {n} cells", self.terms[0].n)));
        }
        out.fill(0.0);
        for term in &self.terms {
            for (i, o) in out.iter_mut().enumerate() {
                let row = &term.matrix[i * n..(i + 1) * n];
                let inner: f64 = row.iter().zip(masses).map(|(f, m)| f * m).sum();
                *o += (term.outer)(inner);
            }
        }
        Ok(())
    }
}

/// Parameters of the angler utility and the logistic body-weight curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglerParams {
    /// Cost slope.
    pub a1: f64,
    /// Coupling to the mean arrival intensity.
    pub a2: f64,
    /// Harvest exponent.
    pub a3: f64,
    /// Asymptotic body weight (g).
    pub w_max: f64,
    /// Initial body weight (g).
    pub w0: f64,
    /// Growth rate (1/day).
    pub r: f64,
}

impl Default for AnglerParams {
    fn default() -> Self {
        Self { a1: 0.5, a2: 1.0, a3: 0.5, w_max: 106.0, w0: 17.0, r: 0.0223 }
    }
}

impl AnglerParams {
    pub fn validate(&self) -> Result<()> {
        if [self.a1, self.a2, self.a3].iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::domain("angler coefficients a1, a2, a3 must be finite and nonnegative"));
        }
        if !(self.w0 > 0.0 && self.w0 <= self.w_max && self.w_max.is_finite()) {
            return Err(Error::domain(format!("need 0 < w0 <= w_max, got w0={} w_max={}", self.w0, self.w_max)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::domain(format!("growth rate must be positive, got {}", self.r)));
        }
        Ok(())
    }
}

/// `W_t / W_max` under logistic growth.
pub fn logistic_weight_ratio(t: f64, p: &AnglerParams) -> f64 {
    1.0 / (1.0 + (p.w_max / p.w0 - 1.0) * (-p.r * t).exp())
}

/// Angler arrival-intensity utility with time-dependent fish weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglerUtility {
    params: AnglerParams,
}

impl AnglerUtility {
    pub fn new(params: AnglerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &AnglerParams {
        &self.params
    }
}

impl UtilityModel for AnglerUtility {
    fn evaluate_into(&self, grid: &UniformGrid, masses: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        check_shapes(grid, masses, out)?;
        let p = &self.params;
        let x = grid.midpoints();
        let mass: f64 = masses.iter().sum();
        // ∫ y μ(dy); the only part of the integrand that depends on y.
        let first_moment: f64 = x.iter().zip(masses).map(|(y, m)| y * m).sum();
        let w = logistic_weight_ratio(t, p);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = mass * (-p.a1 * xi + (w * xi).powf(p.a3)) - p.a1 * p.a2 * xi * first_moment;
        }
        Ok(())
    }

    fn time_dependent(&self) -> bool {
        true
    }
}

/// Parameters of the competition utility with the regularised award term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitionParams {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    /// Awarded fraction.
    pub alpha: f64,
    /// Width of the tail regularisation; `None` means one cell width.
    pub epsilon: Option<f64>,
}

impl CompetitionParams {
    /// `B3 = B4 = 1`, `α = 0.2`, `ε = 1/N`.
    pub fn with_costs(b1: f64, b2: f64) -> Self {
        Self { b1, b2, b3: 1.0, b4: 1.0, alpha: 0.2, epsilon: None }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.b1, self.b2, self.b3, self.b4].iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::domain("competition coefficients b1..b4 must be finite and nonnegative"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::domain(format!("epsilon must be positive, got {eps}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitionUtility {
    params: CompetitionParams,
}

impl CompetitionUtility {
    pub fn new(params: CompetitionParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &CompetitionParams {
        &self.params
    }
}

impl UtilityModel for CompetitionUtility {
    fn evaluate_into(&self, grid: &UniformGrid, masses: &[f64], _t: f64, out: &mut [f64]) -> Result<()> {
        check_shapes(grid, masses, out)?;
        let p = &self.params;
        let x = grid.midpoints();
        let n = x.len();
        let eps = p.epsilon.unwrap_or_else(|| grid.cell_width());
        let inv_eps = 1.0 / eps;
        // Suffix sums over j >= i of m_j and x_j m_j.
        let mut tail_mass = vec![0.0; n + 1];
        let mut tail_moment = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tail_mass[i] = tail_mass[i + 1] + masses[i];
            tail_moment[i] = tail_moment[i + 1] + x[i] * masses[i];
        }
        let mass = tail_mass[0];
        let (mut head_mass, mut head_moment) = (0.0, 0.0);
        for (i, (o, &xi)) in out.iter_mut().zip(x).enumerate() {
            let spread = if p.b3 == 1.0 {
                xi * head_mass - head_moment + tail_moment[i] - xi * tail_mass[i]
            } else {
                x.iter().zip(masses).map(|(y, m)| (xi - y).abs().powf(p.b3) * m).sum()
            };
            // Regularised ∫_x^1 μ(dy): full weight for y >= x, a linear ramp
            // on (x - ε, x).
            let mut tail = tail_mass[i];
            for j in (0..i).rev() {
                let w = (x[j] - xi + eps) * inv_eps;
                if w <= 0.0 {
                    break;
                }
                tail += w.min(1.0) * masses[j];
            }
            *o = -p.b1 * xi * xi * mass + p.b2 * spread + p.b4 * (p.alpha - tail).max(0.0);
            head_mass += masses[i];
            head_moment += xi * masses[i];
        }
        Ok(())
    }
}

/// Outcome of [`monotonicity_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub pairs: usize,
    /// Pairs with `Σ (U(μ) - U(ν))(μ - ν) > MONOTONICITY_SLACK`.
    pub violations: usize,
    /// Largest value of the pairing over all sampled pairs.
    pub worst_value: f64,
}

/// Values at or below this are treated as satisfying the `≤ 0` condition.
pub const MONOTONICITY_SLACK: f64 = 1e-12;

/// Samples random measure pairs and evaluates `Σ_i (U_i(μ) - U_i(ν))(m_i - n_i)`.
pub fn monotonicity_probe(
    model: &dyn UtilityModel,
    grid: &UniformGrid,
    num_pairs: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_cells();
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        // Normalised exponentials: a flat Dirichlet draw.
        let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    };
    let mut u_mu = vec![0.0; n];
    let mut u_nu = vec![0.0; n];
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..num_pairs {
        let mu = sample(&mut rng);
        let nu = sample(&mut rng);
        model.evaluate_into(grid, &mu, 0.0, &mut u_mu)?;
        model.evaluate_into(grid, &nu, 0.0, &mut u_nu)?;
        let pairing: f64 = (0..n).map(|i| (u_mu[i] - u_nu[i]) * (mu[i] - nu[i])).sum();
        if pairing > MONOTONICITY_SLACK {
            violations += 1;
        }
        worst = worst.max(pairing);
    }
    Ok(MonotonicityReport { pairs: num_pairs, violations, worst_value: worst })
}
