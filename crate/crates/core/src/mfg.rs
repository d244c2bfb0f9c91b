//! Discrete mean field game: explicit backward HJB sweep, explicit forward
//! Fokker–Planck sweep under the optimal jump intensity, and the damped
//! forward–backward fixed-point iteration that couples them.

use crate::error::{Error, Result};
use crate::gpl::FluxAssembler;
use crate::grid::{FieldTrajectory, GridMeasure, UniformGrid, UtilityField};
use crate::kappa::KappaLogit;
use crate::kernels::{hamiltonian_sums, Scratch};
use crate::utility::UtilityModel;

#[derive(Debug, Clone, PartialEq)]
pub struct MfgConfig {
    pub grid: UniformGrid,
    pub kl: KappaLogit,
    /// Horizon T.
    pub t_end: f64,
    /// Number of time steps M.
    pub n_steps: usize,
    /// Damping factor ω of the fixed-point update.
    pub omega: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Evaluate the control cost by quadrature when κ has no closed form.
    pub allow_quadrature_cost: bool,
    pub acceleration: Acceleration,
    /// Give up early once the best residual has not dropped by at least
    /// 0.1% for this many consecutive iterations.
    pub stall_window: Option<usize>,
}

/// Update rule of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Acceleration {
    /// Plain damped update with weight ω.
    Damped,
    /// Anderson mixing over the last `depth` iterates with mixing weight ω,
    /// applied to the measure iterate only.
    Anderson { depth: usize },
}

impl MfgConfig {
    /// Defaults: `ω = 0.125`, `tol = 1e-10`, at most 2000 iterations.
    pub fn new(grid: UniformGrid, kl: KappaLogit, t_end: f64, n_steps: usize) -> Self {
        Self { grid, kl, t_end, n_steps, omega: 0.125, tol: 1e-10, max_iters: 2000, allow_quadrature_cost: false, acceleration: Acceleration::Damped, stall_window: None }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_steps).map(|k| k as f64 * dt).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) || self.n_steps == 0 {
            return Err(Error::domain("need a positive horizon and at least one time step"));
        }
        if self.dt() > 1.0 {
            return Err(Error::domain(format!(
                "time step T/M = {} exceeds 1; the explicit sweeps need dt <= 1",
                self.dt()
            )));
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(Error::domain(format!("damping must lie in (0, 1), got {}", self.omega)));
        }
        if self.acceleration == (Acceleration::Anderson { depth: 0 }) {
            return Err(Error::domain("Anderson depth must be positive"));
        }
        if self.stall_window == Some(0) {
            return Err(Error::domain("stall window must be positive"));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::domain("tolerance and max_iters must be positive"));
        }
        if !self.kl.has_closed_form_cost() && !self.allow_quadrature_cost {
            return Err(Error::UnsupportedKappa(self.kl.kappa()));
        }
        Ok(())
    }
}

/// Converged forward–backward solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MfgSolution {
    pub grid: UniformGrid,
    /// Cell masses at `t_0..t_M`.
    pub mu: FieldTrajectory,
    /// Value function at `t_0..t_M`; the last row is zero.
    pub phi: FieldTrajectory,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

impl MfgSolution {
    pub fn measure_at(&self, k: usize) -> GridMeasure {
        GridMeasure::from_parts(self.grid.clone(), self.mu.row(k).to_vec())
    }

    pub fn value_at(&self, k: usize) -> UtilityField {
        UtilityField::from_parts(self.grid.clone(), self.phi.row(k).to_vec())
    }
}

/// `a*_ij = (F')⁻¹(Φ_j - Φ_i)`, row-major N×N.
pub fn optimal_control(phi: &UtilityField, kl: &KappaLogit) -> Vec<f64> {
    let v = phi.values();
    v.iter().flat_map(|&pi| v.iter().map(move |&pj| kl.cost_prime_inv(pj - pi))).collect()
}

/// Per-step HJB assembly with reusable scratch space.
struct HjbAssembler {
    kl: KappaLogit,
    allow_quadrature: bool,
    sums: Vec<f64>,
    scratch: Scratch,
}

impl HjbAssembler {
    fn new(kl: KappaLogit, allow_quadrature: bool, n: usize) -> Self {
        Self { kl, allow_quadrature, sums: vec![0.0; n], scratch: Scratch::new(n) }
    }

    /// `Ξ_i = (1/N) Σ_j [(Φ_i - Φ_j) a*_ij + F(a*_ij)] - U_i`.
    fn rhs(&mut self, phi: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        if !hamiltonian_sums(&self.kl, self.allow_quadrature, phi, &mut self.sums, &mut self.scratch) {
            return Err(Error::UnsupportedKappa(self.kl.kappa()));
        }
        let inv_n = 1.0 / phi.len() as f64;
        for ((o, s), ui) in out.iter_mut().zip(&self.sums).zip(u) {
            *o = inv_n * s - ui;
        }
        Ok(())
    }
}

/// HJB right-hand side `Ξ(Φ, U)` at one time level.
pub fn hjb_rhs(phi: &UtilityField, u: &UtilityField, kl: &KappaLogit) -> Result<Vec<f64>> {
    if phi.grid() != u.grid() {
        return Err(Error::shape("value function and utility live on different grids"));
    }
    if !kl.has_closed_form_cost() {
        return Err(Error::UnsupportedKappa(kl.kappa()));
    }
    let n = phi.grid().n_cells();
    let mut out = vec![0.0; n];
    HjbAssembler::new(*kl, false, n).rhs(phi.values(), u.values(), &mut out)?;
    Ok(out)
}

fn check_trajectory(cfg: &MfgConfig, traj: &FieldTrajectory, what: &str) -> Result<()> {
    if traj.len() != cfg.n_steps + 1 || traj.n_cells() != cfg.grid.n_cells() {
        return Err(Error::shape(format!(
            "{what} trajectory is {}x{}, expected {}x{}",
            traj.len(),
            traj.n_cells(),
            cfg.n_steps + 1,
            cfg.grid.n_cells()
        )));
    }
    Ok(())
}

/// Workspace for repeated sweeps.
struct Sweeper<'a> {
    cfg: &'a MfgConfig,
    hjb: HjbAssembler,
    flux: FluxAssembler,
    u: Vec<f64>,
    xi: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    fn new(cfg: &'a MfgConfig) -> Self {
        let n = cfg.grid.n_cells();
        Self {
            cfg,
            hjb: HjbAssembler::new(cfg.kl, cfg.allow_quadrature_cost, n),
            flux: FluxAssembler::new(n),
            u: vec![0.0; n],
            xi: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }

    /// `Φ^M = 0`, `Φ^{k-1} = Φ^k - Ξ(μ^k, Φ^k) Δt`.
    fn backward(&mut self, model: &dyn UtilityModel, mu: &FieldTrajectory, phi: &mut FieldTrajectory) -> Result<()> {
        let m_steps = self.cfg.n_steps;
        let dt = self.cfg.dt();
        let n = self.cfg.grid.n_cells();
        phi.row_mut(m_steps).fill(0.0);
        for k in (1..=m_steps).rev() {
            let t = k as f64 * dt;
            model.evaluate_into(&self.cfg.grid, mu.row(k), t, &mut self.u)?;
            let flat = phi.as_flat_mut();
            let (lower, upper) = flat.split_at_mut(k * n);
            let current = &upper[..n];
            self.hjb.rhs(current, &self.u, &mut self.xi)?;
            let prev = &mut lower[(k - 1) * n..];
            for ((p, c), x) in prev.iter_mut().zip(current).zip(&self.xi) {
                *p = c - x * dt;
            }
            if let Some(bad) = prev.iter().position(|v| !v.is_finite()) {
                return Err(Error::Stability { step: k - 1, detail: format!("value function at cell {bad} is not finite") });
            }
        }
        Ok(())
    }

    /// `μ^0 = μ_0`, `μ^k = μ^{k-1} + Λ(μ^{k-1}, Φ^{k-1}) Δt`.
    fn forward(&mut self, phi: &FieldTrajectory, mu0: &[f64], mu: &mut FieldTrajectory) -> Result<()> {
        let dt = self.cfg.dt();
        let n = self.cfg.grid.n_cells();
        mu.row_mut(0).copy_from_slice(mu0);
        for k in 1..=self.cfg.n_steps {
            let flat = mu.as_flat_mut();
            let (lower, upper) = flat.split_at_mut(k * n);
            let next = &mut upper[..n];
            next.copy_from_slice(&lower[(k - 1) * n..]);
            self.flux.euler_step(&self.cfg.kl, dt, phi.row(k - 1), next, &mut self.rhs, k)?;
        }
        Ok(())
    }
}

/// Backward HJB sweep against a fixed measure trajectory.
pub fn backward_sweep(mu_traj: &FieldTrajectory, model: &dyn UtilityModel, cfg: &MfgConfig) -> Result<FieldTrajectory> {
    cfg.validate()?;
    check_trajectory(cfg, mu_traj, "measure")?;
    let mut phi = FieldTrajectory::zeros(cfg.grid.n_cells(), cfg.times());
    Sweeper::new(cfg).backward(model, mu_traj, &mut phi)?;
    Ok(phi)
}

/// Forward Fokker–Planck sweep under the control induced by `phi_traj`.
pub fn forward_sweep(phi_traj: &FieldTrajectory, mu0: &GridMeasure, cfg: &MfgConfig) -> Result<FieldTrajectory> {
    cfg.validate()?;
    check_trajectory(cfg, phi_traj, "value function")?;
    if mu0.grid() != &cfg.grid {
        return Err(Error::shape("initial measure and config disagree on the grid"));
    }
    let mut mu = FieldTrajectory::zeros(cfg.grid.n_cells(), cfg.times());
    Sweeper::new(cfg).forward(phi_traj, mu0.masses(), &mut mu)?;
    Ok(mu)
}

/// Tracks the best residual to detect a stalled iteration.
struct StallGuard {
    window: Option<usize>,
    best: f64,
    since: usize,
}

impl StallGuard {
    fn new(window: Option<usize>) -> Self {
        Self { window, best: f64::INFINITY, since: 0 }
    }

    /// True once the residual has stalled for the whole window.
    fn stalled(&mut self, residual: f64) -> bool {
        if residual < self.best * (1.0 - 1e-3) {
            self.best = residual;
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.window.is_some_and(|w| self.since >= w)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn damp(iterate: &mut [f64], fresh: &[f64], omega: f64) {
    for (z, f) in iterate.iter_mut().zip(fresh) {
        *z = omega * f + (1.0 - omega) * *z;
    }
}

/// Damped forward–backward iteration from zero initial guesses.
///
/// Each iteration runs the backward sweep against the current measure
/// iterate, the forward sweep against the fresh value function, records
/// `max |fresh - iterate|` over both fields and all space–time points, and
/// relaxes the iterates towards the fresh fields with weight ω. On
/// convergence the fresh sweep outputs are returned, so every measure slice
/// is an exact forward-sweep output.
pub fn solve_mfg(cfg: &MfgConfig, model: &dyn UtilityModel, mu0: &GridMeasure) -> Result<MfgSolution> {
    cfg.validate()?;
    if mu0.grid() != &cfg.grid {
        return Err(Error::shape("initial measure and config disagree on the grid"));
    }
    let n = cfg.grid.n_cells();
    let times = cfg.times();
    let mut mu_iter = FieldTrajectory::zeros(n, times.clone());
    let mut phi_iter = FieldTrajectory::zeros(n, times.clone());
    let mut mu_new = FieldTrajectory::zeros(n, times.clone());
    let mut phi_new = FieldTrajectory::zeros(n, times);
    let mut sweeper = Sweeper::new(cfg);
    let mut history = Vec::new();

    if let Acceleration::Anderson { depth } = cfg.acceleration {
        return anderson(cfg, model, mu0, depth, &mut sweeper, mu_iter, phi_iter, mu_new, phi_new);
    }
    let mut stall = StallGuard::new(cfg.stall_window);
    for iteration in 1..=cfg.max_iters {
        sweeper.backward(model, &mu_iter, &mut phi_new)?;
        sweeper.forward(&phi_new, mu0.masses(), &mut mu_new)?;
        let residual = max_abs_diff(phi_new.as_flat(), phi_iter.as_flat())
            .max(max_abs_diff(mu_new.as_flat(), mu_iter.as_flat()));
        history.push(residual);
        if !residual.is_finite() || stall.stalled(residual) {
            return Err(Error::NonConvergence { iterations: iteration, residual, history });
        }
        if residual <= cfg.tol {
            return Ok(MfgSolution {
                grid: cfg.grid.clone(),
                mu: mu_new,
                phi: phi_new,
                iterations: iteration,
                residual_history: history,
            });
        }
        damp(phi_iter.as_flat_mut(), phi_new.as_flat(), cfg.omega);
        damp(mu_iter.as_flat_mut(), mu_new.as_flat(), cfg.omega);
    }
    let residual = *history.last().unwrap_or(&f64::INFINITY);
    Err(Error::NonConvergence { iterations: cfg.max_iters, residual, history })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Anderson-accelerated iteration on `μ ↦ FP(HJB(μ))`. The value function
/// iterate is the previous backward-sweep output.
#[allow(clippy::too_many_arguments)]
fn anderson(
    cfg: &MfgConfig,
    model: &dyn UtilityModel,
    mu0: &GridMeasure,
    depth: usize,
    sweeper: &mut Sweeper,
    mut x: FieldTrajectory,
    mut phi_prev: FieldTrajectory,
    mut g: FieldTrajectory,
    mut phi_new: FieldTrajectory,
) -> Result<MfgSolution> {
    use std::collections::VecDeque;
    let beta = cfg.omega;
    let size = x.as_flat().len();
    let mut f = vec![0.0; size];
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut dx: VecDeque<Vec<f64>> = VecDeque::new();
    let mut df: VecDeque<Vec<f64>> = VecDeque::new();
    let mut history = Vec::new();
    let mut stall = StallGuard::new(cfg.stall_window);
    for iteration in 1..=cfg.max_iters {
        sweeper.backward(model, &x, &mut phi_new)?;
        sweeper.forward(&phi_new, mu0.masses(), &mut g)?;
        let residual = max_abs_diff(phi_new.as_flat(), phi_prev.as_flat()).max(max_abs_diff(g.as_flat(), x.as_flat()));
        history.push(residual);
        if !residual.is_finite() || stall.stalled(residual) {
            return Err(Error::NonConvergence { iterations: iteration, residual, history });
        }
        if residual <= cfg.tol {
            return Ok(MfgSolution {
                grid: cfg.grid.clone(),
                mu: g,
                phi: phi_new,
                iterations: iteration,
                residual_history: history,
            });
        }
        std::mem::swap(&mut phi_prev, &mut phi_new);
        for ((fi, gi), xi) in f.iter_mut().zip(g.as_flat()).zip(x.as_flat()) {
            *fi = gi - xi;
        }
        if let Some((x_old, f_old)) = last.take() {
            let mut ddx = x_old;
            let mut ddf = f_old;
            for ((a, b), xi) in ddx.iter_mut().zip(ddf.iter_mut()).zip(x.as_flat()) {
                *a = xi - *a;
                *b = 0.0 - *b;
            }
            for (b, fi) in ddf.iter_mut().zip(&f) {
                *b += fi;
            }
            if dx.len() == depth {
                dx.pop_front();
                df.pop_front();
            }
            dx.push_back(ddx);
            df.push_back(ddf);
        }
        let m = df.len();
        let gamma = if m == 0 {
            Vec::new()
        } else {
            let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| dot(&df[i], &df[j]));
            let rhs = nalgebra::DVector::from_fn(m, |i, _| dot(&df[i], &f));
            let svd = gram.svd(true, true);
            let cutoff = svd.singular_values.max() * 1e-14;
            svd.solve(&rhs, cutoff).map(|v| v.iter().copied().collect()).unwrap_or_else(|_| vec![0.0; m])
        };
        last = Some((x.as_flat().to_vec(), f.clone()));
        let xs = x.as_flat_mut();
        for (k, xi) in xs.iter_mut().enumerate() {
            let mut v = *xi + beta * f[k];
            for (c, (a, b)) in gamma.iter().zip(dx.iter().zip(df.iter())) {
                v -= c * (a[k] + beta * b[k]);
            }
            *xi = v;
        }
    }
    let residual = *history.last().unwrap_or(&f64::INFINITY);
    Err(Error::NonConvergence { iterations: cfg.max_iters, residual, history })
}

/// Mid-horizon slice of a long-horizon solution.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiStationary {
    pub mu_mid: GridMeasure,
    /// Spatial mean of the centred time difference of Φ at `k = M/2`.
    pub phi_slope: f64,
}

pub fn quasi_stationary_slice(sol: &MfgSolution, cfg: &MfgConfig) -> Result<QuasiStationary> {
    if cfg.n_steps < 2 || sol.phi.len() != cfg.n_steps + 1 {
        return Err(Error::shape("need a solution with at least two time steps matching the config"));
    }
    let k = cfg.n_steps / 2;
    let dt = cfg.dt();
    let (up, down) = (sol.phi.row(k + 1), sol.phi.row(k - 1));
    let slope = up.iter().zip(down).map(|(a, b)| (a - b) / (2.0 * dt)).sum::<f64>() / up.len() as f64;
    Ok(QuasiStationary { mu_mid: sol.measure_at(k), phi_slope: slope })
}

/// Writes `t,x,mass,density,phi` rows for every `every`-th time level and
/// the last one.
pub fn write_solution_csv<W: std::io::Write>(out: &mut W, sol: &MfgSolution, every: usize) -> std::io::Result<()> {
    use crate::grid::fmt_num;
    writeln!(out, "t,x,mass,density,phi")?;
    let n = sol.grid.n_cells() as f64;
    let last = sol.mu.len().saturating_sub(1);
    let every = every.max(1);
    for (k, t) in sol.mu.times().iter().enumerate() {
        if k % every != 0 && k != last {
            continue;
        }
        for ((x, m), p) in sol.grid.midpoints().iter().zip(sol.mu.row(k)).zip(sol.phi.row(k)) {
            writeln!(out, "{},{},{},{},{}", fmt_num(*t), fmt_num(*x), fmt_num(*m), fmt_num(n * m), fmt_num(*p))?;
        }
    }
    Ok(())
}

/// Writes `iter,residual` rows.
pub fn write_residual_csv<W: std::io::Write>(out: &mut W, history: &[f64]) -> std::io::Result<()> {
    writeln!(out, "iter,residual")?;
    for (i, r) in history.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, crate::grid::fmt_num(*r))?;
    }
    Ok(())
}
