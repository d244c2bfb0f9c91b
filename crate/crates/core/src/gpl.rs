//! Semi-discrete generalized pair-wise logit dynamic: a nonlinear Markov
//! chain on the grid cells, advanced with forward Euler.

use crate::error::{Error, Result};
use crate::grid::{l1_distance, FieldTrajectory, GridMeasure, UniformGrid, UtilityField};
use crate::kappa::KappaLogit;
use crate::kernels::{flux_rhs, Scratch};
use crate::utility::UtilityModel;

/// Time-stepping configuration for the GPL dynamic.
#[derive(Debug, Clone, PartialEq)]
pub struct GplConfig {
    pub grid: UniformGrid,
    pub kl: KappaLogit,
    pub dt: f64,
    pub t_end: f64,
    pub stationary_tol: f64,
    pub max_steps: usize,
}

impl GplConfig {
    /// Defaults: `dt = 0.1`, stationary tolerance `1e-10`, at most 10⁶ steps.
    pub fn new(grid: UniformGrid, kl: KappaLogit) -> Self {
        Self { grid, kl, dt: 0.1, t_end: 1.0, stationary_tol: 1e-10, max_steps: 1_000_000 }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::domain(format!(
                "time step must lie in (0, 1] for the explicit scheme to stay nonnegative, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::domain(format!("horizon must be positive, got {}", self.t_end)));
        }
        if !(self.stationary_tol > 0.0) {
            return Err(Error::domain("stationary tolerance must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::domain("max_steps must be positive"));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_end]`; `t_end / dt` must be an integer.
    pub fn n_steps(&self) -> Result<usize> {
        let ratio = self.t_end / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * steps.max(1.0) || steps < 1.0 {
            return Err(Error::domain(format!(
                "horizon {} is not an integer multiple of dt {}",
                self.t_end, self.dt
            )));
        }
        let steps = steps as usize;
        if steps > self.max_steps {
            return Err(Error::domain(format!("{steps} steps exceed max_steps {}", self.max_steps)));
        }
        Ok(steps)
    }
}

/// Assembly of the Markov-chain generator applied to a mass vector. Shared
/// with the Fokker–Planck sweep of the MFG solver.
#[derive(Debug, Clone, Default)]
pub(crate) struct FluxAssembler {
    scratch: Scratch,
}

impl FluxAssembler {
    pub(crate) fn new(n: usize) -> Self {
        Self { scratch: Scratch::new(n) }
    }

    /// `rhs_i = (1/N) Σ_j a_ji m_j - ((1/N) Σ_j a_ij) m_i` with
    /// `a_ij = 1 / (1 + e_κ((u_i - u_j)/η))`, summed as pairwise net flows
    /// so that the total is conserved term by term.
    pub(crate) fn rhs(&mut self, kl: &KappaLogit, u: &[f64], m: &[f64], rhs: &mut [f64]) {
        flux_rhs(kl, u, m, rhs, &mut self.scratch);
    }

    /// One explicit Euler step in place; fails if a mass turns negative.
    pub(crate) fn euler_step(
        &mut self,
        kl: &KappaLogit,
        dt: f64,
        u: &[f64],
        m: &mut [f64],
        rhs: &mut [f64],
        step: usize,
    ) -> Result<()> {
        self.rhs(kl, u, m, rhs);
        for (i, (mi, r)) in m.iter_mut().zip(rhs.iter()).enumerate() {
            *mi += dt * r;
            if !(*mi >= 0.0) {
                return Err(Error::Stability {
                    step,
                    detail: format!("mass of cell {i} became {mi}; reduce dt"),
                });
            }
        }
        Ok(())
    }
}

/// Right-hand side of the semi-discrete dynamic. Sums to zero.
pub fn gpl_rhs(mu: &GridMeasure, u: &UtilityField, kl: &KappaLogit) -> Result<Vec<f64>> {
    if mu.grid() != u.grid() {
        return Err(Error::shape("measure and utility live on different grids"));
    }
    let n = mu.grid().n_cells();
    let mut rhs = vec![0.0; n];
    FluxAssembler::new(n).rhs(kl, u.values(), mu.masses(), &mut rhs);
    Ok(rhs)
}

/// One forward Euler step `m' = m + dt · rhs`.
pub fn gpl_step(mu: &GridMeasure, u: &UtilityField, cfg: &GplConfig) -> Result<GridMeasure> {
    cfg.validate()?;
    if mu.grid() != u.grid() || mu.grid() != &cfg.grid {
        return Err(Error::shape("measure, utility and config disagree on the grid"));
    }
    let n = mu.grid().n_cells();
    let mut m = mu.masses().to_vec();
    let mut rhs = vec![0.0; n];
    FluxAssembler::new(n).euler_step(&cfg.kl, cfg.dt, u.values(), &mut m, &mut rhs, 0)?;
    Ok(GridMeasure::from_parts(mu.grid().clone(), m))
}

fn check_start(cfg: &GplConfig, mu0: &GridMeasure) -> Result<()> {
    cfg.validate()?;
    if mu0.grid() != &cfg.grid {
        return Err(Error::shape(format!(
            "initial measure has {} cells, config grid has {}",
            mu0.grid().n_cells(),
            cfg.grid.n_cells()
        )));
    }
    Ok(())
}

/// Explicit time integration that keeps its own scratch space.
pub(crate) struct GplStepper<'a> {
    cfg: &'a GplConfig,
    model: &'a dyn UtilityModel,
    flux: FluxAssembler,
    u: Vec<f64>,
    rhs: Vec<f64>,
    pub(crate) masses: Vec<f64>,
    pub(crate) step: usize,
}

impl<'a> GplStepper<'a> {
    pub(crate) fn new(cfg: &'a GplConfig, model: &'a dyn UtilityModel, mu0: &GridMeasure) -> Self {
        let n = cfg.grid.n_cells();
        Self {
            cfg,
            model,
            flux: FluxAssembler::new(n),
            u: vec![0.0; n],
            rhs: vec![0.0; n],
            masses: mu0.masses().to_vec(),
            step: 0,
        }
    }

    pub(crate) fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub(crate) fn advance(&mut self) -> Result<()> {
        let t = self.time();
        self.model.evaluate_into(&self.cfg.grid, &self.masses, t, &mut self.u)?;
        self.step += 1;
        self.flux.euler_step(&self.cfg.kl, self.cfg.dt, &self.u, &mut self.masses, &mut self.rhs, self.step)
    }
}

/// Snapshots of a transient run.
#[derive(Debug, Clone, PartialEq)]
pub struct GplTrajectory {
    pub grid: UniformGrid,
    /// Cell masses at the snapshot times.
    pub masses: FieldTrajectory,
    pub steps: usize,
}

impl GplTrajectory {
    pub fn measure_at(&self, k: usize) -> GridMeasure {
        GridMeasure::from_parts(self.grid.clone(), self.masses.row(k).to_vec())
    }

    pub fn final_measure(&self) -> GridMeasure {
        self.measure_at(self.masses.len() - 1)
    }
}

/// Integrates to `t_end`, recording every `snapshot_every`-th step plus the
/// initial and final states. Time-dependent utilities see the current time.
pub fn gpl_transient(
    cfg: &GplConfig,
    model: &dyn UtilityModel,
    mu0: &GridMeasure,
    snapshot_every: usize,
) -> Result<GplTrajectory> {
    check_start(cfg, mu0)?;
    if snapshot_every == 0 {
        return Err(Error::domain("snapshot_every must be positive"));
    }
    let steps = cfg.n_steps()?;
    let mut stepper = GplStepper::new(cfg, model, mu0);
    let mut masses = FieldTrajectory::new(cfg.grid.n_cells());
    masses.push(0.0, &stepper.masses);
    while stepper.step < steps {
        stepper.advance()?;
        if stepper.step % snapshot_every == 0 || stepper.step == steps {
            masses.push(stepper.time(), &stepper.masses);
        }
    }
    Ok(GplTrajectory { grid: cfg.grid.clone(), masses, steps })
}

/// Fixed point of the dynamic and how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryOutcome {
    pub measure: GridMeasure,
    /// `TV(μ^{k+1}, μ^k) / dt` at the last step.
    pub residual: f64,
    pub steps: usize,
}

/// Steps until the total-variation change per unit time drops below
/// `stationary_tol`.
pub fn gpl_stationary(cfg: &GplConfig, model: &dyn UtilityModel, mu0: &GridMeasure) -> Result<StationaryOutcome> {
    check_start(cfg, mu0)?;
    if model.time_dependent() {
        return Err(Error::domain("stationary solves need a time-independent utility"));
    }
    let mut stepper = GplStepper::new(cfg, model, mu0);
    let mut previous = stepper.masses.clone();
    let mut residual = f64::INFINITY;
    while stepper.step < cfg.max_steps {
        stepper.advance()?;
        residual = l1_distance(&stepper.masses, &previous) / cfg.dt;
        if residual < cfg.stationary_tol {
            return Ok(StationaryOutcome {
                measure: GridMeasure::from_parts(cfg.grid.clone(), stepper.masses),
                residual,
                steps: stepper.step,
            });
        }
        previous.copy_from_slice(&stepper.masses);
    }
    Err(Error::NonConvergence { iterations: stepper.step, residual, history: vec![residual] })
}

/// Sup-in-time TV gap between runs at `kappa_center` and `kappa_center + δ`
/// for each δ.
pub fn kappa_continuity_probe(
    cfg: &GplConfig,
    model: &dyn UtilityModel,
    mu0: &GridMeasure,
    kappa_center: f64,
    deltas: &[f64],
) -> Result<Vec<f64>> {
    check_start(cfg, mu0)?;
    let steps = cfg.n_steps()?;
    let eta = cfg.kl.eta();
    deltas
        .iter()
        .map(|&delta| {
            let a_cfg = GplConfig { kl: KappaLogit::new(kappa_center, eta)?, ..cfg.clone() };
            let b_cfg = GplConfig { kl: KappaLogit::new(kappa_center + delta, eta)?, ..cfg.clone() };
            let mut a = GplStepper::new(&a_cfg, model, mu0);
            let mut b = GplStepper::new(&b_cfg, model, mu0);
            let mut gap = 0.0f64;
            for _ in 0..steps {
                a.advance()?;
                b.advance()?;
                gap = gap.max(l1_distance(&a.masses, &b.masses));
            }
            Ok(gap)
        })
        .collect()
}
