//! Executes a validated config and writes its CSV outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use logitfield::calibration::{
    calibrate_competition, fit_logistic, write_calibration_csv, CalibrationSpec, Candidate, SearchMode,
};
use logitfield::convergence::{
    run_convergence_study, write_study_csv, Resolution, ResolutionLadder, StudyConfig, StudyProblem,
};
use logitfield::grid::{fmt_num, write_measure_csv, FieldTrajectory, Moments, UniformGrid};
use logitfield::mfg::{quasi_stationary_slice, solve_mfg, write_residual_csv, write_solution_csv, MfgConfig};
use logitfield::{gpl_stationary, gpl_transient, kappa_exp, kappa_log, Error, GplConfig, KappaLogit};

use crate::config::*;

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ConfigError,
    NonConvergence,
    InternalError,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::ConfigError => 2,
            Outcome::NonConvergence => 3,
            Outcome::InternalError => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::ConfigError => "config_error",
            Outcome::NonConvergence => "non_convergence",
            Outcome::InternalError => "internal_error",
        }
    }
}

/// A failed run: its outcome class and a message.
#[derive(Debug)]
pub struct Failure {
    pub outcome: Outcome,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let outcome = match &e {
            Error::NonConvergence { .. } => Outcome::NonConvergence,
            Error::Study { source, .. } if matches!(**source, Error::NonConvergence { .. }) => Outcome::NonConvergence,
            Error::Domain(_) | Error::Shape(_) | Error::UnsupportedKappa(_) => Outcome::ConfigError,
            _ => Outcome::InternalError,
        };
        Failure { outcome, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { outcome: Outcome::InternalError, message: format!("i/o error: {e}") }
    }
}

/// Key-value lines for the run summary, plus the files written.
#[derive(Debug, Default)]
pub struct Report {
    pub entries: Vec<(String, String)>,
    pub files: Vec<PathBuf>,
}

impl Report {
    fn put(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn moments(&mut self, prefix: &str, m: Moments) {
        self.put(&format!("{prefix}mean"), fmt_num(m.mean));
        self.put(&format!("{prefix}std"), fmt_num(m.std));
    }

    fn create(&mut self, dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
        let path = dir.join(name);
        let file = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }
}

/// Runs `config`, writing outputs under `out`. `config_dir` resolves paths
/// given inside the config. On failure the partial report is kept.
pub fn execute(config: &RunConfig, out: &Path, config_dir: &Path, report: &mut Report) -> Result<(), Failure> {
    std::fs::create_dir_all(out)?;
    match config {
        RunConfig::KappaEval(c) => kappa_eval(c, out, report),
        RunConfig::GplRun(c) => gpl_run(c, out, report),
        RunConfig::GplStationary(c) => stationary(c, out, report),
        RunConfig::MfgRun(c) => mfg_run(c, out, report),
        RunConfig::Calibrate(c) => calibrate(c, out, report),
        RunConfig::FitLogistic(c) => logistic(c, out, config_dir, report),
        RunConfig::Converge(c) => converge(c, out, report),
    }
}

fn opt(v: logitfield::Result<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// `z,exp,log,rate,cost`; `rate` is the switching rate towards a strategy
/// whose utility is higher by `z`, and `cost` is `F(z)` for `z` in `[0, 1]`.
fn kappa_eval(c: &KappaEvalConfig, out: &Path, report: &mut Report) -> Result<(), Failure> {
    let kl = KappaLogit::new(c.kappa, c.eta)?;
    let mut w = report.create(out, "kappa_eval.csv")?;
    writeln!(w, "z,exp,log,rate,cost")?;
    for &z in &c.z {
        let log = if z > 0.0 { opt(kappa_log(z, c.kappa)) } else { String::new() };
        let cost = if (0.0..=1.0).contains(&z) { opt(kl.cost_with(z, true)) } else { String::new() };
        let rate = kl.logit_rate(0.0, z);
        writeln!(w, "{},{},{log},{},{cost}", fmt_num(z), opt(kappa_exp(z, c.kappa)), fmt_num(rate))?;
    }
    w.flush()?;
    report.put("points", c.z.len());
    Ok(())
}

fn gpl_config(cells: usize, kappa: f64, eta: f64, dt: f64) -> logitfield::Result<GplConfig> {
    Ok(GplConfig::new(UniformGrid::new(cells)?, KappaLogit::new(kappa, eta)?).with_dt(dt))
}

fn gpl_run(c: &GplRunConfig, out: &Path, report: &mut Report) -> Result<(), Failure> {
    let cfg = gpl_config(c.cells, c.kappa, c.eta, c.dt)?.with_t_end(c.t_end);
    let model = c.utility.build()?;
    let mu0 = c.initial.build(&cfg.grid)?;
    let traj = gpl_transient(&cfg, model.as_ref(), &mu0, c.snapshot_every)?;
    let mut w = report.create(out, "gpl_trajectory.csv")?;
    write_measure_csv(&mut w, &cfg.grid, &traj.masses)?;
    w.flush()?;
    report.put("steps", traj.steps);
    report.moments("final_", traj.final_measure().moments());
    Ok(())
}

fn stationary(c: &GplStationaryConfig, out: &Path, report: &mut Report) -> Result<(), Failure> {
    let mut cfg = gpl_config(c.cells, c.kappa, c.eta, c.dt)?;
    cfg.stationary_tol = c.stationary_tol;
    cfg.max_steps = c.max_steps;
    let model = c.utility.build()?;
    let mu0 = c.initial.build(&cfg.grid)?;
    let res = gpl_stationary(&cfg, model.as_ref(), &mu0)?;
    let mut traj = FieldTrajectory::new(c.cells);
    traj.push(res.steps as f64 * c.dt, res.measure.masses());
    let mut w = report.create(out, "gpl_stationary.csv")?;
    write_measure_csv(&mut w, &cfg.grid, &traj)?;
    w.flush()?;
    report.put("steps", res.steps);
    report.put("final_residual", fmt_num(res.residual));
    report.moments("", res.measure.moments());
    Ok(())
}

fn mfg_run(c: &MfgRunConfig, out: &Path, report: &mut Report) -> Result<(), Failure> {
    let grid = UniformGrid::new(c.cells)?;
    let mut cfg = MfgConfig::new(grid, KappaLogit::new(c.kappa, c.eta)?, c.t_end, c.n_steps()).with_omega(c.omega);
    cfg.tol = c.tol;
    cfg.max_iters = c.max_iters;
    cfg.acceleration = c.acceleration.build();
    cfg.stall_window = c.stall_window;
    let model = c.utility.build()?;
    let mu0 = c.initial.build(&cfg.grid)?;
    match solve_mfg(&cfg, model.as_ref(), &mu0) {
        Ok(sol) => {
            let mut w = report.create(out, "mfg_residuals.csv")?;
            write_residual_csv(&mut w, &sol.residual_history)?;
            w.flush()?;
            let mut w = report.create(out, "mfg_solution.csv")?;
            write_solution_csv(&mut w, &sol, c.snapshot_every)?;
            w.flush()?;
            report.put("iterations", sol.iterations);
            report.put("final_residual", fmt_num(sol.residual_history.last().copied().unwrap_or(0.0)));
            if let Ok(q) = quasi_stationary_slice(&sol, &cfg) {
                report.moments("mid_", q.mu_mid.moments());
                report.put("mid_phi_slope", fmt_num(q.phi_slope));
            }
            Ok(())
        }
        Err(Error::NonConvergence { iterations, residual, history }) => {
            let mut w = report.create(out, "mfg_residuals.csv")?;
            write_residual_csv(&mut w, &history)?;
            w.flush()?;
            report.put("iterations", iterations);
            report.put("final_residual", fmt_num(residual));
            Err(Error::NonConvergence { iterations, residual, history }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn calibrate(c: &CalibrateConfig, out: &Path, report: &mut Report) -> Result<(), Failure> {
    let mut solver = gpl_config(c.cells, 1.0, 0.1, c.dt)?;
    solver.stationary_tol = c.stationary_tol;
    solver.max_steps = c.max_steps;
    let mode = match &c.search {
        SearchSpec::Full => SearchMode::Full,
        SearchSpec::Neighborhood { centres } => SearchMode::Neighborhood(
            centres.iter().map(|ct| (ct.eta, Candidate { b1: ct.b1, b2: ct.b2, kappa: ct.kappa })).collect(),
        ),
    };
    let spec = CalibrationSpec {
        b1_grid: c.b1_grid.clone(),
        b2_grid: c.b2_grid.clone(),
        kappa_set: c.kappa_set.clone(),
        eta_list: c.eta_list.clone(),
        target: Moments { mean: c.target.mean, std: c.target.std },
        solver,
        mode,
    };
    let results = calibrate_competition(&spec)?;
    let mut w = report.create(out, "calibration.csv")?;
    write_calibration_csv(&mut w, &results)?;
    w.flush()?;
    for r in &results {
        let key = format!("eta_{}", r.eta);
        report.put(
            &format!("{key}_best"),
            format!("b1={} b2={} kappa={} error={}", r.best.b1, r.best.b2, r.best.kappa, fmt_num(r.best_error)),
        );
        report.put(&format!("{key}_failed"), r.failed);
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    let bad = |m: String| Failure { outcome: Outcome::ConfigError, message: m };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["t_days", "weight_g"] {
        return Err(bad(format!("{} must have the header t_days,weight_g", path.display())));
    }
    let mut samples = Vec::new();
    for (i, row) in reader.deserialize::<(f64, f64)>().enumerate() {
        samples.push(row.map_err(|e| bad(format!("{} row {}: {e}", path.display(), i + 2)))?);
    }
    Ok(samples)
}

fn logistic(c: &FitLogisticConfig, out: &Path, config_dir: &Path, report: &mut Report) -> Result<(), Failure> {
    let samples = match (&c.samples, &c.samples_csv) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => read_samples(&config_dir.join(p))?,
        (None, None) => unreachable!("validated"),
    };
    let fit = fit_logistic(&samples)?;
    let mut w = report.create(out, "logistic_fit.csv")?;
    writeln!(w, "w_max,w0,r,sse,converged")?;
    writeln!(w, "{},{},{},{},{}", fmt_num(fit.w_max), fmt_num(fit.w0), fmt_num(fit.r), fmt_num(fit.sse), fit.converged)?;
    w.flush()?;
    report.put("samples", samples.len());
    report.put("converged", fit.converged);
    if !fit.converged {
        report.put("warning", "least-squares search hit its iteration limit; best parameters reported");
    }
    Ok(())
}

fn converge(c: &ConvergeConfig, out: &Path, report: &mut Report) -> Result<(), Failure> {
    let res = |r: &ResolutionSpec| Resolution { n: r.cells, m: r.steps };
    let ladder = ResolutionLadder::new(c.ladder.levels.iter().map(res).collect(), res(&c.ladder.benchmark))?;
    let mut cfg = StudyConfig::new(KappaLogit::new(c.kappa, c.eta)?);
    cfg.ladder = ladder;
    cfg.t_end = c.t_end;
    cfg.omega = c.omega;
    cfg.tol = c.tol;
    cfg.max_iters = c.max_iters;
    cfg.acceleration = c.acceleration.build();
    let model = c.utility.build()?;
    let mut reports = Vec::new();
    for p in &c.problems {
        let problem = match p {
            ProblemSpec::Gpl => StudyProblem::Gpl,
            ProblemSpec::Mfg => StudyProblem::Mfg,
        };
        reports.push(run_convergence_study(problem, model.as_ref(), &cfg)?);
    }
    let mut w = report.create(out, "convergence.csv")?;
    write_study_csv(&mut w, &reports)?;
    w.flush()?;
    for r in &reports {
        for f in &r.fields {
            let join = |v: &[f64]| v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ");
            report.put(&format!("{}_{}_errors", r.problem.name(), f.field), join(&f.errors));
            let rates = f.rates.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
            report.put(&format!("{}_{}_rates", r.problem.name(), f.field), rates);
        }
    }
    Ok(())
}
