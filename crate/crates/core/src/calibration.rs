//! Parameter identification: moment matching of the competition model's
//! stationary state, and least-squares fitting of the logistic growth curve.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gpl::{gpl_stationary, GplConfig};
use crate::grid::{fmt_num, uniform_measure, Moments};
use crate::kappa::KappaLogit;
use crate::utility::{CompetitionParams, CompetitionUtility};

/// `(Ave_e - Ave_m)² + (Std_e - Std_m)²`.
pub fn moment_error(modeled: Moments, target: Moments) -> f64 {
    (target.mean - modeled.mean).powi(2) + (target.std - modeled.std).powi(2)
}

/// Empirical moments of the observed action distribution.
pub const EMPIRICAL_MOMENTS: Moments = Moments { mean: 0.32471, std: 0.30352 };

/// One point of the (B₁, B₂, κ) search grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub b1: f64,
    pub b2: f64,
    pub kappa: f64,
}

impl Candidate {
    fn lex_key(&self) -> (f64, f64, f64) {
        (self.b1, self.b2, self.kappa)
    }
}

/// Which candidates are evaluated for each η.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchMode {
    /// Every (B₁, B₂, κ) combination of the grids.
    Full,
    /// For each listed `(η, centre)`, the centre and its grid neighbours in
    /// B₁ and B₂ (same κ). Neighbours falling off the grid are skipped.
    Neighborhood(Vec<(f64, Candidate)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    pub b1_grid: Vec<f64>,
    pub b2_grid: Vec<f64>,
    pub kappa_set: Vec<f64>,
    pub eta_list: Vec<f64>,
    pub target: Moments,
    /// Grid, step and stopping rule of the stationary solves; its κ and η are
    /// replaced per candidate.
    pub solver: GplConfig,
    pub mode: SearchMode,
}

/// Triplets identified for η = 0.01, 0.05 and 0.1 on the default grids.
pub const REFERENCE_TRIPLETS: [(f64, Candidate); 3] = [
    (0.01, Candidate { b1: 0.2, b2: 0.1, kappa: 1.0 }),
    (0.05, Candidate { b1: 0.4, b2: 0.4, kappa: 0.0 }),
    (0.10, Candidate { b1: 1.3, b2: 2.3, kappa: 1.0 }),
];

impl CalibrationSpec {
    /// B₁, B₂ ∈ {0.1, ..., 3.0}, κ ∈ {0, 0.5, 1}, η ∈ {0.01, 0.05, 0.1},
    /// N = 500, dt = 0.1, full search.
    pub fn standard() -> Result<Self> {
        let steps: Vec<f64> = (1..=30).map(|i| i as f64 / 10.0).collect();
        let grid = crate::grid::UniformGrid::new(500)?;
        Ok(Self {
            b1_grid: steps.clone(),
            b2_grid: steps,
            kappa_set: vec![0.0, 0.5, 1.0],
            eta_list: vec![0.01, 0.05, 0.1],
            target: EMPIRICAL_MOMENTS,
            solver: GplConfig::new(grid, KappaLogit::new(1.0, 0.1)?),
            mode: SearchMode::Full,
        })
    }

    /// The standard grids restricted to the reference triplets' neighbourhoods.
    pub fn reference_neighborhoods() -> Result<Self> {
        Ok(Self { mode: SearchMode::Neighborhood(REFERENCE_TRIPLETS.to_vec()), ..Self::standard()? })
    }

    pub fn validate(&self) -> Result<()> {
        if self.b1_grid.is_empty() || self.b2_grid.is_empty() || self.kappa_set.is_empty() || self.eta_list.is_empty() {
            return Err(Error::domain("calibration grids must be non-empty"));
        }
        if !(self.target.mean.is_finite() && self.target.std.is_finite()) {
            return Err(Error::domain("calibration targets must be finite"));
        }
        for &k in &self.kappa_set {
            if !(0.0..=1.0).contains(&k) {
                return Err(Error::domain(format!("kappa {k} outside [0, 1]")));
            }
        }
        for &e in &self.eta_list {
            KappaLogit::new(0.0, e)?;
        }
        self.solver.validate()
    }

    fn candidates(&self, eta: f64) -> Result<Vec<Candidate>> {
        let mut out = Vec::new();
        match &self.mode {
            SearchMode::Full => {
                for &b1 in &self.b1_grid {
                    for &b2 in &self.b2_grid {
                        for &kappa in &self.kappa_set {
                            out.push(Candidate { b1, b2, kappa });
                        }
                    }
                }
            }
            SearchMode::Neighborhood(centres) => {
                let centre = centres
                    .iter()
                    .find(|(e, _)| (e - eta).abs() <= 1e-12)
                    .map(|(_, c)| *c)
                    .ok_or_else(|| Error::domain(format!("no neighbourhood centre given for eta = {eta}")))?;
                let i = grid_index(&self.b1_grid, centre.b1, "b1")?;
                let j = grid_index(&self.b2_grid, centre.b2, "b2")?;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (Some(&b1), Some(&b2)) = (offset(&self.b1_grid, i, di), offset(&self.b2_grid, j, dj)) else {
                            continue;
                        };
                        out.push(Candidate { b1, b2, kappa: centre.kappa });
                    }
                }
            }
        }
        out.sort_by(|a, b| a.lex_key().partial_cmp(&b.lex_key()).expect("finite grid values"));
        Ok(out)
    }
}

fn grid_index(grid: &[f64], v: f64, what: &str) -> Result<usize> {
    grid.iter()
        .position(|g| (g - v).abs() <= 1e-9)
        .ok_or_else(|| Error::domain(format!("{what} = {v} is not on the search grid")))
}

fn offset(grid: &[f64], i: usize, d: i64) -> Option<&f64> {
    let k = i as i64 + d;
    if k < 0 {
        None
    } else {
        grid.get(k as usize)
    }
}

/// Outcome of one stationary solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub candidate: Candidate,
    /// `None` if the stationary solve failed.
    pub moments: Option<Moments>,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaCalibration {
    pub eta: f64,
    pub best: Candidate,
    pub best_moments: Moments,
    pub best_error: f64,
    /// Candidates whose stationary solve failed.
    pub failed: usize,
    /// Every evaluated candidate, in lexicographic (B₁, B₂, κ) order.
    pub evaluations: Vec<Evaluation>,
}

/// Stationary moments of the competition model for one candidate.
pub fn evaluate_candidate(solver: &GplConfig, eta: f64, c: Candidate) -> Result<Moments> {
    let cfg = GplConfig { kl: KappaLogit::new(c.kappa, eta)?, ..solver.clone() };
    let model = CompetitionUtility::new(CompetitionParams::with_costs(c.b1, c.b2))?;
    let out = gpl_stationary(&cfg, &model, &uniform_measure(&cfg.grid))?;
    Ok(out.measure.moments())
}

/// Grid search per η. Candidates are evaluated in parallel; the selection
/// is the first minimum in lexicographic order, independent of scheduling.
pub fn calibrate_competition(spec: &CalibrationSpec) -> Result<Vec<EtaCalibration>> {
    spec.validate()?;
    let mut results = Vec::with_capacity(spec.eta_list.len());
    for &eta in &spec.eta_list {
        let candidates = spec.candidates(eta)?;
        let evaluations: Vec<Evaluation> = candidates
            .par_iter()
            .map(|&candidate| match evaluate_candidate(&spec.solver, eta, candidate) {
                Ok(m) => Evaluation { candidate, moments: Some(m), error: Some(moment_error(m, spec.target)) },
                Err(_) => Evaluation { candidate, moments: None, error: None },
            })
            .collect();
        results.push(summarize(eta, evaluations)?);
    }
    Ok(results)
}

/// First minimum of the moment error over successful evaluations.
fn summarize(eta: f64, evaluations: Vec<Evaluation>) -> Result<EtaCalibration> {
    let failed = evaluations.iter().filter(|e| e.error.is_none()).count();
    let mut best: Option<&Evaluation> = None;
    for e in &evaluations {
        if let Some(err) = e.error {
            if best.map_or(true, |b| err < b.error.unwrap_or(f64::INFINITY)) {
                best = Some(e);
            }
        }
    }
    let best = best.ok_or_else(|| Error::domain(format!("every candidate failed for eta = {eta}")))?;
    Ok(EtaCalibration {
        eta,
        best: best.candidate,
        best_moments: best.moments.expect("successful evaluation"),
        best_error: best.error.expect("successful evaluation"),
        failed,
        evaluations: evaluations.clone(),
    })
}

/// Writes `eta,b1,b2,kappa,mean,std,error,selected`; failed candidates
/// have empty moment and error fields.
pub fn write_calibration_csv<W: std::io::Write>(out: &mut W, results: &[EtaCalibration]) -> std::io::Result<()> {
    writeln!(out, "eta,b1,b2,kappa,mean,std,error,selected")?;
    for r in results {
        for e in &r.evaluations {
            let c = e.candidate;
            let (mean, std, err) = match (e.moments, e.error) {
                (Some(m), Some(err)) => (fmt_num(m.mean), fmt_num(m.std), fmt_num(err)),
                _ => (String::new(), String::new(), String::new()),
            };
            let selected = u8::from(c == r.best);
            writeln!(out, "{},{},{},{},{mean},{std},{err},{selected}", r.eta, c.b1, c.b2, c.kappa)?;
        }
    }
    Ok(())
}

/// Fitted logistic growth `W(t) = W_max / (1 + (W_max/W_0 - 1) e^{-rt})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFit {
    pub w_max: f64,
    pub w0: f64,
    pub r: f64,
    /// Sum of squared residuals.
    pub sse: f64,
    /// False if the restarted simplex search was still improving when its
    /// budget ran out.
    pub converged: bool,
}

impl LogisticFit {
    pub fn weight(&self, t: f64) -> f64 {
        logistic_weight(t, self.w_max, self.w0, self.r)
    }
}

fn logistic_weight(t: f64, w_max: f64, w0: f64, r: f64) -> f64 {
    w_max / (1.0 + (w_max / w0 - 1.0) * (-r * t).exp())
}

struct GrowthSse<'a> {
    samples: &'a [(f64, f64)],
}

impl CostFunction for GrowthSse<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let (w_max, w0, r) = (p[0], p[1], p[2]);
        if !(w_max > 0.0 && w0 > 0.0) {
            return Ok(1e100);
        }
        let sse = self.samples.iter().map(|&(t, w)| (w - logistic_weight(t, w_max, w0, r)).powi(2)).sum::<f64>();
        Ok(if sse.is_finite() { sse } else { 1e100 })
    }
}

const SIMPLEX_ITERS: u64 = 20_000;
const SIMPLEX_RESTARTS: usize = 12;

/// Least-squares fit by Nelder–Mead from `(1.1 max w, first w, 0.02)`,
/// restarted from the incumbent with a fresh simplex until it stalls.
/// `converged` is false if the restart budget ran out first.
pub fn fit_logistic(samples: &[(f64, f64)]) -> Result<LogisticFit> {
    if samples.len() < 3 {
        return Err(Error::domain("logistic fit needs at least three samples"));
    }
    if samples.iter().any(|&(t, w)| !(t.is_finite() && w.is_finite() && w > 0.0)) {
        return Err(Error::domain("samples need finite times and positive weights"));
    }
    let t0 = samples[0].0;
    if samples.iter().all(|&(t, _)| t == t0) {
        return Err(Error::domain("samples must span more than one time"));
    }
    let w_top = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let scale: f64 = samples.iter().map(|s| s.1 * s.1).sum();
    let mut best = vec![1.1 * w_top, samples[0].1, 0.02];
    let problem = GrowthSse { samples };
    let mut best_cost = problem.cost(&best).map_err(|e| Error::domain(e.to_string()))?;
    let mut converged = false;
    let mut step = 0.1;
    for _ in 0..SIMPLEX_RESTARTS {
        let mut simplex = vec![best.clone()];
        for k in 0..3 {
            let mut v = best.clone();
            v[k] *= 1.0 + step;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-30 * scale.max(1.0))
            .map_err(|e| Error::domain(e.to_string()))?;
        let res = Executor::new(GrowthSse { samples }, solver)
            .configure(|s| s.max_iters(SIMPLEX_ITERS))
            .run()
            .map_err(|e| Error::domain(e.to_string()))?;
        let state = res.state();
        let cost = state.get_best_cost();
        let param = state.get_best_param().cloned().unwrap_or_else(|| best.clone());
        let gain = best_cost - cost;
        if cost <= best_cost {
            best = param;
            best_cost = cost;
        }
        if gain <= 1e-15 * best_cost.max(1e-300) || best_cost <= 1e-24 * scale {
            converged = true;
            break;
        }
        step = (step * 0.5).max(1e-3);
    }
    Ok(LogisticFit { w_max: best[0], w0: best[1], r: best[2], sse: best_cost, converged })
}
