//! Typed run configurations and their validation.
//!
//! Each subcommand reads one JSON document. Unknown keys are rejected, and
//! omitted optional keys take the documented defaults, so the canonical
//! serialization of a parsed config spells out every setting of the run.

use std::fmt;

use logitfield::calibration::{Candidate, EMPIRICAL_MOMENTS, REFERENCE_TRIPLETS};
use logitfield::grid::{uniform_measure, GridMeasure, Moments, UniformGrid};
use logitfield::mfg::Acceleration;
use logitfield::utility::{
    AnglerParams, AnglerUtility, CompetitionParams, CompetitionUtility, ConstantUtility, UtilityModel,
};
use logitfield::KappaLogit;
use serde::{Deserialize, Serialize};

/// The seven subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    KappaEval,
    GplRun,
    GplStationary,
    MfgRun,
    Calibrate,
    FitLogistic,
    Converge,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KappaEval => "kappa-eval",
            Command::GplRun => "gpl-run",
            Command::GplStationary => "gpl-stationary",
            Command::MfgRun => "mfg-run",
            Command::Calibrate => "calibrate",
            Command::FitLogistic => "fit-logistic",
            Command::Converge => "converge",
        }
    }
}

/// A field-level problem with a config document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Dotted path of the offending field; empty for document-level errors.
    pub path: String,
    pub message: String,
    /// Byte offset of the last byte read before the error, for parse and
    /// type errors.
    pub offset: Option<usize>,
}

impl Diagnostic {
    fn at(path: &str, message: impl Into<String>) -> Self {
        Self { path: path.to_string(), message: message.into(), offset: None }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "<document>" } else { &self.path };
        match self.offset {
            Some(o) => write!(f, "{path} (byte {o}): {}", self.message),
            None => write!(f, "{path}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    Constant {
        #[serde(default)]
        value: f64,
    },
    Competition {
        b1: f64,
        b2: f64,
        #[serde(default = "one")]
        b3: f64,
        #[serde(default = "one")]
        b4: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        /// `None` means one cell width.
        #[serde(default)]
        epsilon: Option<f64>,
    },
    Angler {
        #[serde(default = "half")]
        a1: f64,
        #[serde(default = "one")]
        a2: f64,
        #[serde(default = "half")]
        a3: f64,
        #[serde(default = "default_w_max")]
        w_max: f64,
        #[serde(default = "default_w0")]
        w0: f64,
        #[serde(default = "default_growth")]
        r: f64,
    },
}

impl UtilitySpec {
    pub fn build(&self) -> logitfield::Result<Box<dyn UtilityModel>> {
        Ok(match *self {
            UtilitySpec::Constant { value } => Box::new(ConstantUtility { value }),
            UtilitySpec::Competition { b1, b2, b3, b4, alpha, epsilon } => {
                Box::new(CompetitionUtility::new(CompetitionParams { b1, b2, b3, b4, alpha, epsilon })?)
            }
            UtilitySpec::Angler { a1, a2, a3, w_max, w0, r } => {
                Box::new(AnglerUtility::new(AnglerParams { a1, a2, a3, w_max, w0, r })?)
            }
        })
    }

    fn time_dependent(&self) -> bool {
        matches!(self, UtilitySpec::Angler { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Uniform,
    PointMass { cell: usize },
    /// Nonnegative cell weights, normalized to unit mass.
    Weights { weights: Vec<f64> },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Uniform
    }
}

impl InitialSpec {
    pub fn build(&self, grid: &UniformGrid) -> logitfield::Result<GridMeasure> {
        match self {
            InitialSpec::Uniform => Ok(uniform_measure(grid)),
            InitialSpec::PointMass { cell } => GridMeasure::point_mass(grid.clone(), *cell),
            InitialSpec::Weights { weights } => GridMeasure::from_weights(grid.clone(), weights),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AccelerationSpec {
    Damped,
    Anderson { depth: usize },
}

impl Default for AccelerationSpec {
    fn default() -> Self {
        AccelerationSpec::Damped
    }
}

impl AccelerationSpec {
    pub fn build(self) -> Acceleration {
        match self {
            AccelerationSpec::Damped => Acceleration::Damped,
            AccelerationSpec::Anderson { depth } => Acceleration::Anderson { depth },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaEvalConfig {
    pub kappa: f64,
    #[serde(default = "one")]
    pub eta: f64,
    /// Evaluation points.
    pub z: Vec<f64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GplRunConfig {
    pub cells: usize,
    pub kappa: f64,
    pub eta: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one_usize")]
    pub snapshot_every: usize,
    pub utility: UtilitySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GplStationaryConfig {
    pub cells: usize,
    pub kappa: f64,
    pub eta: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stationary_tol")]
    pub stationary_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    pub utility: UtilitySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfgRunConfig {
    pub cells: usize,
    pub kappa: f64,
    pub eta: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub acceleration: AccelerationSpec,
    /// Give up once the best residual has stalled for this many iterations.
    #[serde(default)]
    pub stall_window: Option<usize>,
    /// Time levels between rows of the solution CSV.
    #[serde(default = "one_usize")]
    pub snapshot_every: usize,
    pub utility: UtilitySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl MfgRunConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentreSpec {
    pub eta: f64,
    pub b1: f64,
    pub b2: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSpec {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchSpec {
    Full,
    Neighborhood {
        #[serde(default = "default_centres")]
        centres: Vec<CentreSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default = "default_calibration_cells")]
    pub cells: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stationary_tol")]
    pub stationary_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_cost_grid")]
    pub b1_grid: Vec<f64>,
    #[serde(default = "default_cost_grid")]
    pub b2_grid: Vec<f64>,
    #[serde(default = "default_kappa_set")]
    pub kappa_set: Vec<f64>,
    #[serde(default = "default_eta_list")]
    pub eta_list: Vec<f64>,
    #[serde(default = "default_target")]
    pub target: MomentsSpec,
    pub search: SearchSpec,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitLogisticConfig {
    /// CSV with header `t_days,weight_g`, relative to the config file.
    #[serde(default)]
    pub samples_csv: Option<String>,
    /// Inline `[t, w]` pairs.
    #[serde(default)]
    pub samples: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSpec {
    Gpl,
    Mfg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSpec {
    pub cells: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub levels: Vec<ResolutionSpec>,
    pub benchmark: ResolutionSpec,
}

impl Default for LadderSpec {
    fn default() -> Self {
        let r = |cells, steps| ResolutionSpec { cells, steps };
        Self { levels: vec![r(64, 2000), r(128, 4000), r(256, 8000)], benchmark: r(512, 16000) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub kappa: f64,
    pub eta: f64,
    pub utility: UtilitySpec,
    #[serde(default = "default_problems")]
    pub problems: Vec<ProblemSpec>,
    #[serde(default = "default_horizon")]
    pub t_end: f64,
    #[serde(default)]
    pub ladder: LadderSpec,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub acceleration: AccelerationSpec,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// A parsed and validated configuration for one subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RunConfig {
    KappaEval(KappaEvalConfig),
    GplRun(GplRunConfig),
    GplStationary(GplStationaryConfig),
    MfgRun(MfgRunConfig),
    Calibrate(CalibrateConfig),
    FitLogistic(FitLogisticConfig),
    Converge(ConvergeConfig),
}

impl RunConfig {
    pub fn command(&self) -> Command {
        match self {
            RunConfig::KappaEval(_) => Command::KappaEval,
            RunConfig::GplRun(_) => Command::GplRun,
            RunConfig::GplStationary(_) => Command::GplStationary,
            RunConfig::MfgRun(_) => Command::MfgRun,
            RunConfig::Calibrate(_) => Command::Calibrate,
            RunConfig::FitLogistic(_) => Command::FitLogistic,
            RunConfig::Converge(_) => Command::Converge,
        }
    }

    pub fn out_dir(&self) -> Option<&str> {
        match self {
            RunConfig::KappaEval(c) => c.out_dir.as_deref(),
            RunConfig::GplRun(c) => c.out_dir.as_deref(),
            RunConfig::GplStationary(c) => c.out_dir.as_deref(),
            RunConfig::MfgRun(c) => c.out_dir.as_deref(),
            RunConfig::Calibrate(c) => c.out_dir.as_deref(),
            RunConfig::FitLogistic(c) => c.out_dir.as_deref(),
            RunConfig::Converge(c) => c.out_dir.as_deref(),
        }
    }

    /// Pretty-printed JSON with every default spelled out.
    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }
}

/// Parses `document` as the config of `command` and checks every field
/// against the constraints of the module it configures.
pub fn validate_config(command: Command, document: &str) -> Result<RunConfig, Vec<Diagnostic>> {
    let config = match command {
        Command::KappaEval => parse(document).map(RunConfig::KappaEval),
        Command::GplRun => parse(document).map(RunConfig::GplRun),
        Command::GplStationary => parse(document).map(RunConfig::GplStationary),
        Command::MfgRun => parse(document).map(RunConfig::MfgRun),
        Command::Calibrate => parse(document).map(RunConfig::Calibrate),
        Command::FitLogistic => parse(document).map(RunConfig::FitLogistic),
        Command::Converge => parse(document).map(RunConfig::Converge),
    }
    .map_err(|d| vec![d])?;
    let mut v = Checker::default();
    match &config {
        RunConfig::KappaEval(c) => {
            v.kappa("kappa", c.kappa);
            v.positive("eta", c.eta);
            if c.z.is_empty() {
                v.push("z", "need at least one evaluation point");
            }
            for (i, z) in c.z.iter().enumerate() {
                if !z.is_finite() {
                    v.push(&format!("z[{i}]"), "evaluation points must be finite");
                }
            }
        }
        RunConfig::GplRun(c) => {
            v.cells("cells", c.cells);
            v.kappa("kappa", c.kappa);
            v.positive("eta", c.eta);
            v.dt("dt", c.dt);
            v.positive("t_end", c.t_end);
            v.divides("t_end", c.t_end, c.dt);
            if c.snapshot_every == 0 {
                v.push("snapshot_every", "must be at least 1");
            }
            v.utility(&c.utility);
            v.initial(&c.initial, c.cells);
        }
        RunConfig::GplStationary(c) => {
            v.cells("cells", c.cells);
            v.kappa("kappa", c.kappa);
            v.positive("eta", c.eta);
            v.dt("dt", c.dt);
            v.positive("stationary_tol", c.stationary_tol);
            if c.max_steps == 0 {
                v.push("max_steps", "must be at least 1");
            }
            v.utility(&c.utility);
            if c.utility.time_dependent() {
                v.push("utility", "stationary solves need a time-independent utility");
            }
            v.initial(&c.initial, c.cells);
        }
        RunConfig::MfgRun(c) => {
            v.cells("cells", c.cells);
            v.mfg_kappa("kappa", c.kappa);
            v.positive("eta", c.eta);
            v.dt("dt", c.dt);
            v.positive("t_end", c.t_end);
            v.divides("t_end", c.t_end, c.dt);
            v.omega("omega", c.omega);
            v.positive("tol", c.tol);
            v.iteration_limits(c.max_iters, c.acceleration, c.stall_window);
            if c.snapshot_every == 0 {
                v.push("snapshot_every", "must be at least 1");
            }
            v.utility(&c.utility);
            v.initial(&c.initial, c.cells);
        }
        RunConfig::Calibrate(c) => {
            v.cells("cells", c.cells);
            v.dt("dt", c.dt);
            v.positive("stationary_tol", c.stationary_tol);
            if c.max_steps == 0 {
                v.push("max_steps", "must be at least 1");
            }
            for (name, grid) in [("b1_grid", &c.b1_grid), ("b2_grid", &c.b2_grid)] {
                if grid.is_empty() {
                    v.push(name, "must not be empty");
                }
                for (i, b) in grid.iter().enumerate() {
                    if !(*b >= 0.0 && b.is_finite()) {
                        v.push(&format!("{name}[{i}]"), "cost coefficients must be finite and nonnegative");
                    }
                }
            }
            if c.kappa_set.is_empty() {
                v.push("kappa_set", "must not be empty");
            }
            for (i, k) in c.kappa_set.iter().enumerate() {
                v.kappa(&format!("kappa_set[{i}]"), *k);
            }
            if c.eta_list.is_empty() {
                v.push("eta_list", "must not be empty");
            }
            for (i, e) in c.eta_list.iter().enumerate() {
                v.positive(&format!("eta_list[{i}]"), *e);
            }
            if !(c.target.mean.is_finite() && c.target.std.is_finite()) {
                v.push("target", "target moments must be finite");
            }
            if let SearchSpec::Neighborhood { centres } = &c.search {
                for eta in &c.eta_list {
                    if !centres.iter().any(|ct| (ct.eta - eta).abs() <= 1e-12) {
                        v.push("search.centres", format!("no centre given for eta = {eta}"));
                    }
                }
                for (i, ct) in centres.iter().enumerate() {
                    let path = format!("search.centres[{i}]");
                    v.kappa(&format!("{path}.kappa"), ct.kappa);
                    if !on_grid(&c.b1_grid, ct.b1) {
                        v.push(&format!("{path}.b1"), format!("{} is not on b1_grid", ct.b1));
                    }
                    if !on_grid(&c.b2_grid, ct.b2) {
                        v.push(&format!("{path}.b2"), format!("{} is not on b2_grid", ct.b2));
                    }
                }
            }
        }
        RunConfig::FitLogistic(c) => match (&c.samples_csv, &c.samples) {
            (None, None) => v.push("samples", "give either samples or samples_csv"),
            (Some(_), Some(_)) => v.push("samples", "give only one of samples and samples_csv"),
            (None, Some(s)) => {
                if s.len() < 3 {
                    v.push("samples", "need at least 3 samples");
                }
                for (i, (t, w)) in s.iter().enumerate() {
                    if !(t.is_finite() && *w > 0.0 && w.is_finite()) {
                        v.push(&format!("samples[{i}]"), "need a finite time and a positive finite weight");
                    }
                }
            }
            (Some(_), None) => {}
        },
        RunConfig::Converge(c) => {
            v.mfg_kappa("kappa", c.kappa);
            v.positive("eta", c.eta);
            v.utility(&c.utility);
            if c.utility.time_dependent() {
                v.push("utility", "convergence studies need a time-independent utility");
            }
            if c.problems.is_empty() {
                v.push("problems", "must not be empty");
            }
            v.positive("t_end", c.t_end);
            v.omega("omega", c.omega);
            v.positive("tol", c.tol);
            v.iteration_limits(c.max_iters, c.acceleration, None);
            v.ladder(&c.ladder, c.t_end);
        }
    }
    if v.0.is_empty() {
        Ok(config)
    } else {
        Err(v.0)
    }
}

fn parse<T: serde::de::DeserializeOwned>(document: &str) -> Result<T, Diagnostic> {
    let mut de = serde_json::Deserializer::from_str(document);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let path = if path == "." { String::new() } else { path };
        json_diagnostic(document, path, err.into_inner())
    })?;
    de.end().map_err(|e| json_diagnostic(document, String::new(), e))?;
    Ok(value)
}

fn json_diagnostic(document: &str, path: String, err: serde_json::Error) -> Diagnostic {
    let offset = byte_offset(document, err.line(), err.column());
    let text = err.to_string();
    let message = match text.rsplit_once(" at line ") {
        Some((head, _)) => head.to_string(),
        None => text,
    };
    Diagnostic { path, message, offset: Some(offset) }
}

/// Converts serde_json's 1-based line and column into a byte offset.
fn byte_offset(document: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = document.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(document.len())
}

fn on_grid(grid: &[f64], v: f64) -> bool {
    grid.iter().any(|g| (g - v).abs() <= 1e-9)
}

#[derive(Default)]
struct Checker(Vec<Diagnostic>);

impl Checker {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(Diagnostic::at(path, message));
    }

    fn cells(&mut self, path: &str, n: usize) {
        if n < 2 {
            self.push(path, format!("need at least 2 cells, got {n}"));
        }
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(path, format!("must be positive and finite, got {v}"));
        }
    }

    fn kappa(&mut self, path: &str, k: f64) {
        if !(0.0..=1.0).contains(&k) {
            self.push(path, format!("kappa must lie in [0, 1], got {k}"));
        }
    }

    fn mfg_kappa(&mut self, path: &str, k: f64) {
        self.kappa(path, k);
        if (0.0..=1.0).contains(&k) && !KappaLogit::new(k, 1.0).is_ok_and(|kl| kl.has_closed_form_cost()) {
            self.push(
                path,
                format!("the MFG solver needs the closed-form control cost F, available only for kappa in {{0, 0.5, 1}}; got {k}"),
            );
        }
    }

    fn dt(&mut self, path: &str, dt: f64) {
        if !(dt > 0.0) {
            self.push(path, format!("time step must be positive, got {dt}"));
        } else if dt > 1.0 {
            self.push(
                path,
                format!("time step {dt} exceeds the stability bound dt <= 1 of the explicit scheme"),
            );
        }
    }

    fn divides(&mut self, path: &str, t_end: f64, dt: f64) {
        if !(t_end > 0.0 && dt > 0.0) {
            return;
        }
        let ratio = t_end / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            self.push(path, format!("horizon {t_end} is not a whole number of steps of {dt}"));
        }
    }

    fn omega(&mut self, path: &str, w: f64) {
        if !(w > 0.0 && w < 1.0) {
            self.push(path, format!("damping factor must lie in (0, 1), got {w}"));
        }
    }

    fn iteration_limits(&mut self, max_iters: usize, acc: AccelerationSpec, stall: Option<usize>) {
        if max_iters == 0 {
            self.push("max_iters", "must be at least 1");
        }
        if acc == (AccelerationSpec::Anderson { depth: 0 }) {
            self.push("acceleration.depth", "must be at least 1");
        }
        if stall == Some(0) {
            self.push("stall_window", "must be at least 1 when given");
        }
    }

    fn utility(&mut self, spec: &UtilitySpec) {
        if let Err(e) = spec.build() {
            self.push("utility", e.to_string());
        }
    }

    fn initial(&mut self, spec: &InitialSpec, cells: usize) {
        let Ok(grid) = UniformGrid::new(cells) else { return };
        if let Err(e) = spec.build(&grid) {
            self.push("initial", e.to_string());
        }
    }

    fn ladder(&mut self, spec: &LadderSpec, t_end: f64) {
        let res = |r: &ResolutionSpec| logitfield::convergence::Resolution { n: r.cells, m: r.steps };
        let levels = spec.levels.iter().map(res).collect();
        if let Err(e) = logitfield::convergence::ResolutionLadder::new(levels, res(&spec.benchmark)) {
            self.push("ladder", e.to_string());
        }
        for (i, r) in spec.levels.iter().chain([&spec.benchmark]).enumerate() {
            if r.steps > 0 && t_end / r.steps as f64 > 1.0 {
                self.push(&format!("ladder[{i}].steps"), "time step exceeds the stability bound dt <= 1");
            }
        }
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn one_usize() -> usize {
    1
}
fn default_alpha() -> f64 {
    0.2
}
fn default_w_max() -> f64 {
    AnglerParams::default().w_max
}
fn default_w0() -> f64 {
    AnglerParams::default().w0
}
fn default_growth() -> f64 {
    AnglerParams::default().r
}
fn default_dt() -> f64 {
    0.1
}
fn default_stationary_tol() -> f64 {
    1e-10
}
fn default_max_steps() -> usize {
    1_000_000
}
fn default_omega() -> f64 {
    0.125
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    2000
}
fn default_horizon() -> f64 {
    160.0
}
fn default_calibration_cells() -> usize {
    500
}
fn default_cost_grid() -> Vec<f64> {
    (1..=30).map(|i| i as f64 / 10.0).collect()
}
fn default_kappa_set() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn default_eta_list() -> Vec<f64> {
    REFERENCE_TRIPLETS.iter().map(|(eta, _)| *eta).collect()
}
fn default_target() -> MomentsSpec {
    let Moments { mean, std } = EMPIRICAL_MOMENTS;
    MomentsSpec { mean, std }
}
fn default_centres() -> Vec<CentreSpec> {
    REFERENCE_TRIPLETS
        .iter()
        .map(|&(eta, Candidate { b1, b2, kappa })| CentreSpec { eta, b1, b2, kappa })
        .collect()
}
fn default_problems() -> Vec<ProblemSpec> {
    vec![ProblemSpec::Gpl, ProblemSpec::Mfg]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_offsets_follow_lines() {
        let doc = "{\n  \"a\": 1,\n  x\n}";
        assert_eq!(byte_offset(doc, 3, 3), doc.find('x').unwrap());
        assert_eq!(byte_offset(doc, 1, 1), 0);
    }

    #[test]
    fn trailing_garbage_is_a_parse_error() {
        let err = validate_config(Command::KappaEval, r#"{"kappa": 1, "z": [0]} junk"#).unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].offset, Some(23));
    }
}
