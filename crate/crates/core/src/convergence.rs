//! Multi-resolution convergence study: coarse solutions are compared with a
//! fine benchmark after averaging the benchmark onto the coarse cells and
//! subsampling it onto the coarse time grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gpl::{gpl_transient, GplConfig};
use crate::grid::{coarsen_field, fmt_num, uniform_measure, FieldTrajectory, UniformGrid};
use crate::kappa::KappaLogit;
use crate::mfg::{solve_mfg, Acceleration, MfgConfig};
use crate::utility::UtilityModel;

/// Number of cells and time steps of one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionLadder {
    levels: Vec<Resolution>,
    benchmark: Resolution,
}

impl ResolutionLadder {
    /// Levels must divide the benchmark in both N (by a power of two) and M.
    pub fn new(levels: Vec<Resolution>, benchmark: Resolution) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::domain("a ladder needs at least one level"));
        }
        for (i, r) in levels.iter().enumerate() {
            let ok = r.n >= 2
                && r.m >= 1
                && benchmark.n % r.n == 0
                && (benchmark.n / r.n).is_power_of_two()
                && benchmark.m % r.m == 0;
            if !ok {
                return Err(Error::domain(format!(
                    "level {} ({}, {}) does not divide the benchmark ({}, {})",
                    i + 1,
                    r.n,
                    r.m,
                    benchmark.n,
                    benchmark.m
                )));
            }
        }
        Ok(Self { levels, benchmark })
    }

    /// `(N_i, M_i) = (2^(5+i), 2^i · 1000)` for `i = 1..=3`, benchmark `(512, 16000)`.
    pub fn standard() -> Self {
        let levels = (1..=3).map(|i| Resolution { n: 1 << (5 + i), m: (1 << i) * 1000 }).collect();
        Self { levels, benchmark: Resolution { n: 512, m: 16_000 } }
    }

    /// The standard ladder with every N and M divided by `2^k`.
    pub fn standard_scaled_down(k: u32) -> Result<Self> {
        let s = Self::standard();
        let div = |r: Resolution| Resolution { n: r.n >> k, m: r.m >> k };
        Self::new(s.levels.iter().map(|&r| div(r)).collect(), div(s.benchmark))
    }

    pub fn levels(&self) -> &[Resolution] {
        &self.levels
    }

    pub fn benchmark(&self) -> Resolution {
        self.benchmark
    }

    /// 1-based level lookup.
    fn level(&self, level: usize) -> Result<Resolution> {
        level
            .checked_sub(1)
            .and_then(|i| self.levels.get(i))
            .copied()
            .ok_or_else(|| Error::domain(format!("ladder has no level {level}")))
    }
}

/// How a trajectory's values are compared across resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Pointwise values such as Φ.
    Value,
    /// Cell masses, compared as densities `N · mass`.
    Measure,
}

/// Sup over the coarse space–time grid of `|coarse - coarsened benchmark|`.
pub fn field_error(
    coarse: &FieldTrajectory,
    benchmark: &FieldTrajectory,
    ladder: &ResolutionLadder,
    level: usize,
    kind: FieldKind,
) -> Result<f64> {
    let r = ladder.level(level)?;
    let b = ladder.benchmark;
    if coarse.n_cells() != r.n || coarse.len() != r.m + 1 {
        return Err(Error::shape(format!(
            "coarse trajectory is {}x{}, level {level} expects {}x{}",
            coarse.len(),
            coarse.n_cells(),
            r.m + 1,
            r.n
        )));
    }
    if benchmark.n_cells() != b.n || benchmark.len() != b.m + 1 {
        return Err(Error::shape(format!(
            "benchmark trajectory is {}x{}, expected {}x{}",
            benchmark.len(),
            benchmark.n_cells(),
            b.m + 1,
            b.n
        )));
    }
    let (space, time) = (b.n / r.n, b.m / r.m);
    let scale = match kind {
        FieldKind::Value => (1.0, 1.0),
        FieldKind::Measure => (r.n as f64, b.n as f64),
    };
    let mut worst: f64 = 0.0;
    for k in 0..=r.m {
        let avg = coarsen_field(benchmark.row(k * time), space)?;
        for (c, f) in coarse.row(k).iter().zip(&avg) {
            worst = worst.max((scale.0 * c - scale.1 * f).abs());
        }
    }
    Ok(worst)
}

/// `log2(e_i / e_{i+1})`, positive for decreasing errors.
pub fn convergence_rates(errors: &[f64]) -> Result<Vec<f64>> {
    if let Some(e) = errors.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::domain(format!("errors must be positive and finite, got {e}")));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyProblem {
    Gpl,
    Mfg,
}

impl StudyProblem {
    pub fn name(self) -> &'static str {
        match self {
            StudyProblem::Gpl => "gpl",
            StudyProblem::Mfg => "mfg",
        }
    }
}

/// Settings shared by every resolution of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub ladder: ResolutionLadder,
    pub kl: KappaLogit,
    pub t_end: f64,
    pub omega: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub acceleration: Acceleration,
}

impl StudyConfig {
    /// Standard ladder, horizon 160, damped iteration with ω = 0.125.
    pub fn new(kl: KappaLogit) -> Self {
        Self {
            ladder: ResolutionLadder::standard(),
            kl,
            t_end: 160.0,
            omega: 0.125,
            tol: 1e-10,
            max_iters: 2000,
            acceleration: Acceleration::Damped,
        }
    }
}

/// Errors and rates of one field along the ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStudy {
    pub field: &'static str,
    pub errors: Vec<f64>,
    /// Empty for a single-level ladder.
    pub rates: Vec<f64>,
}

impl FieldStudy {
    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub problem: StudyProblem,
    pub ladder: ResolutionLadder,
    pub fields: Vec<FieldStudy>,
}

impl StudyReport {
    pub fn field(&self, name: &str) -> Option<&FieldStudy> {
        self.fields.iter().find(|f| f.field == name)
    }
}

/// Solved trajectories at one resolution: `(μ masses, Φ)`; Φ is absent for GPL.
type LevelSolution = (FieldTrajectory, Option<FieldTrajectory>);

fn solve_level(
    problem: StudyProblem,
    model: &dyn UtilityModel,
    cfg: &StudyConfig,
    res: Resolution,
) -> Result<LevelSolution> {
    let grid = UniformGrid::new(res.n)?;
    let mu0 = uniform_measure(&grid);
    match problem {
        StudyProblem::Gpl => {
            let gcfg = GplConfig { dt: cfg.t_end / res.m as f64, t_end: cfg.t_end, ..GplConfig::new(grid, cfg.kl) };
            let traj = gpl_transient(&gcfg, model, &mu0, 1)?;
            Ok((traj.masses, None))
        }
        StudyProblem::Mfg => {
            let mcfg = MfgConfig {
                omega: cfg.omega,
                tol: cfg.tol,
                max_iters: cfg.max_iters,
                acceleration: cfg.acceleration,
                ..MfgConfig::new(grid, cfg.kl, cfg.t_end, res.m)
            };
            let sol = solve_mfg(&mcfg, model, &mu0)?;
            Ok((sol.mu, Some(sol.phi)))
        }
    }
}

/// Runs the benchmark, then every level (in parallel), and reports the
/// errors of μ (and Φ for the MFG) with their rates.
pub fn run_convergence_study(problem: StudyProblem, model: &dyn UtilityModel, cfg: &StudyConfig) -> Result<StudyReport> {
    let ladder = &cfg.ladder;
    let bench_level = ladder.levels.len() + 1;
    let study_err = |level: usize| move |e: Error| Error::Study { level, source: Box::new(e) };
    let (bench_mu, bench_phi) = solve_level(problem, model, cfg, ladder.benchmark).map_err(study_err(bench_level))?;

    let per_level: Vec<(f64, Option<f64>)> = ladder
        .levels
        .par_iter()
        .enumerate()
        .map(|(i, &res)| -> Result<(f64, Option<f64>)> {
            let level = i + 1;
            let (mu, phi) = solve_level(problem, model, cfg, res).map_err(study_err(level))?;
            let e_mu = field_error(&mu, &bench_mu, ladder, level, FieldKind::Measure)?;
            let e_phi = match (&phi, &bench_phi) {
                (Some(p), Some(bp)) => Some(field_error(p, bp, ladder, level, FieldKind::Value)?),
                _ => None,
            };
            Ok((e_mu, e_phi))
        })
        .collect::<Result<_>>()?;

    let mut fields = Vec::new();
    let mu_errors: Vec<f64> = per_level.iter().map(|e| e.0).collect();
    fields.push(FieldStudy { field: "mu", rates: convergence_rates(&mu_errors)?, errors: mu_errors });
    if problem == StudyProblem::Mfg {
        let phi_errors: Vec<f64> = per_level.iter().filter_map(|e| e.1).collect();
        fields.push(FieldStudy { field: "phi", rates: convergence_rates(&phi_errors)?, errors: phi_errors });
    }
    Ok(StudyReport { problem, ladder: ladder.clone(), fields })
}

/// Writes `problem,field,level,N,M,error,rate`; the first level has no rate.
pub fn write_study_csv<W: std::io::Write>(out: &mut W, reports: &[StudyReport]) -> std::io::Result<()> {
    writeln!(out, "problem,field,level,N,M,error,rate")?;
    for r in reports {
        for f in &r.fields {
            for (i, (e, res)) in f.errors.iter().zip(r.ladder.levels()).enumerate() {
                let rate = if i == 0 { String::new() } else { fmt_num(f.rates[i - 1]) };
                writeln!(out, "{},{},{},{},{},{},{rate}", r.problem.name(), f.field, i + 1, res.n, res.m, fmt_num(*e))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::{CompetitionParams, CompetitionUtility};
    use proptest::prelude::*;

    fn traj(n: usize, m: usize, f: impl Fn(f64, f64) -> f64) -> FieldTrajectory {
        let grid = UniformGrid::new(n).unwrap();
        let mut t = FieldTrajectory::new(n);
        for k in 0..=m {
            let tk = k as f64 / m as f64;
            let row: Vec<f64> = grid.midpoints().iter().map(|&x| f(tk, x)).collect();
            t.push(tk, &row);
        }
        t
    }

    fn small_ladder() -> ResolutionLadder {
        ResolutionLadder::new(vec![Resolution { n: 4, m: 2 }, Resolution { n: 8, m: 4 }], Resolution { n: 16, m: 8 })
            .unwrap()
    }

    #[test]
    fn ladder_shapes() {
        let s = ResolutionLadder::standard();
        let got: Vec<(usize, usize)> = s.levels().iter().map(|r| (r.n, r.m)).collect();
        assert_eq!(got, vec![(64, 2000), (128, 4000), (256, 8000)]);
        assert_eq!(s.benchmark(), Resolution { n: 512, m: 16000 });
        assert!(ResolutionLadder::new(vec![Resolution { n: 48, m: 10 }], Resolution { n: 512, m: 100 }).is_err());
        assert!(ResolutionLadder::new(vec![Resolution { n: 64, m: 30 }], Resolution { n: 512, m: 100 }).is_err());
        assert!(ResolutionLadder::new(vec![], Resolution { n: 512, m: 100 }).is_err());
        let d = ResolutionLadder::standard_scaled_down(2).unwrap();
        assert_eq!(d.benchmark(), Resolution { n: 128, m: 4000 });
    }

    #[test]
    fn field_error_examples() {
        let ladder = small_ladder();
        let bench = traj(16, 8, |t, x| (3.0 * x).sin() + t * t);
        let coarse = FieldTrajectory::zeros(8, vec![0.0; 5]);
        // zero coarse field: error is the sup of the coarsened benchmark
        let mut expect: f64 = 0.0;
        for k in 0..=4 {
            for v in coarsen_field(bench.row(2 * k), 2).unwrap() {
                expect = expect.max(v.abs());
            }
        }
        assert_eq!(field_error(&coarse, &bench, &ladder, 2, FieldKind::Value).unwrap(), expect);

        let c1 = traj(4, 2, |_, _| 1.5);
        let c2 = traj(16, 8, |_, _| -0.25);
        assert_eq!(field_error(&c1, &c2, &ladder, 1, FieldKind::Value).unwrap(), 1.75);

        // averages of a linear field are its midpoint values
        let lin = |_: f64, x: f64| 2.0 * x - 0.3;
        let e = field_error(&traj(4, 2, lin), &traj(16, 8, lin), &ladder, 1, FieldKind::Value).unwrap();
        assert!(e < 1e-15);

        // uniform measures at different resolutions have the same density
        let u4 = traj(4, 2, |_, _| 0.25);
        let u16 = traj(16, 8, |_, _| 1.0 / 16.0);
        assert_eq!(field_error(&u4, &u16, &ladder, 1, FieldKind::Measure).unwrap(), 0.0);

        assert!(matches!(field_error(&u16, &u16, &ladder, 1, FieldKind::Value), Err(Error::Shape(_))));
        assert!(field_error(&u4, &u16, &ladder, 3, FieldKind::Value).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(convergence_rates(&[4.0, 2.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        let r = convergence_rates(&[1.52e-1, 6.25e-2, 1.95e-2]).unwrap();
        assert!((r[0] - 1.28).abs() < 5e-3 && (r[1] - 1.68).abs() < 5e-3, "{r:?}");
        let r = convergence_rates(&[1.45e-2, 6.81e-3, 2.38e-3]).unwrap();
        assert!((r[0] - 1.09).abs() < 5e-3 && (r[1] - 1.52).abs() < 5e-3, "{r:?}");
        let r = convergence_rates(&[4.70e-1, 1.65e-1, 4.89e-2]).unwrap();
        // printed rates come from unrounded errors
        assert!((r[0] - 1.51).abs() < 1e-2 && (r[1] - 1.76).abs() < 1e-2, "{r:?}");
        assert!(convergence_rates(&[1.0, 0.0]).is_err());
        assert!(convergence_rates(&[1.0, f64::NAN]).is_err());
        assert!(convergence_rates(&[0.3]).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn manufactured_first_order_rates(c in 1e-6f64..1e3, n0 in 1u32..6) {
            let errors: Vec<f64> = (0..4).map(|i| c / f64::from(1u32 << (n0 + i))).collect();
            for r in convergence_rates(&errors).unwrap() {
                prop_assert_eq!(r, 1.0);
            }
        }

        #[test]
        fn field_error_is_a_sup_norm(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ladder = small_ladder();
            let mut rand_traj = |n: usize, m: usize| {
                let mut t = FieldTrajectory::new(n);
                for k in 0..=m {
                    let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    t.push(k as f64, &row);
                }
                t
            };
            let (a, b, bench) = (rand_traj(8, 4), rand_traj(8, 4), rand_traj(16, 8));
            let e = |t: &FieldTrajectory| field_error(t, &bench, &ladder, 2, FieldKind::Value).unwrap();
            // subadditive: |a + b - 2B| <= |a - B| + |b - B|
            let mut sum = a.clone();
            for (s, v) in sum.as_flat_mut().iter_mut().zip(b.as_flat()) {
                *s += v;
            }
            let mut twice = bench.clone();
            for v in twice.as_flat_mut() {
                *v *= 2.0;
            }
            let lhs = field_error(&sum, &twice, &ladder, 2, FieldKind::Value).unwrap();
            prop_assert!(lhs <= e(&a) + e(&b) + 1e-12);
            // a trajectory against its own coarsening has zero error
            let mut own = FieldTrajectory::new(8);
            for k in 0..=4 {
                own.push(k as f64, &coarsen_field(bench.row(2 * k), 2).unwrap());
            }
            prop_assert_eq!(e(&own), 0.0);
        }
    }

    #[test]
    fn small_studies() {
        let model = CompetitionUtility::new(CompetitionParams::with_costs(1.3, 2.3)).unwrap();
        let kl = KappaLogit::new(1.0, 0.1).unwrap();
        let cfg = StudyConfig {
            ladder: ResolutionLadder::new(
                vec![Resolution { n: 8, m: 40 }, Resolution { n: 16, m: 80 }],
                Resolution { n: 64, m: 320 },
            )
            .unwrap(),
            t_end: 4.0,
            acceleration: Acceleration::Anderson { depth: 5 },
            omega: 0.25,
            ..StudyConfig::new(kl)
        };
        let gpl = run_convergence_study(StudyProblem::Gpl, &model, &cfg).unwrap();
        assert_eq!(gpl.fields.len(), 1);
        assert!(gpl.fields[0].strictly_decreasing(), "{gpl:?}");
        let mfg = run_convergence_study(StudyProblem::Mfg, &model, &cfg).unwrap();
        assert_eq!(mfg.fields.len(), 2);
        for f in &mfg.fields {
            assert!(f.strictly_decreasing(), "{mfg:?}");
            assert_eq!(f.rates.len(), 1);
        }
        let mut buf = Vec::new();
        write_study_csv(&mut buf, &[gpl, mfg]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 4);
        assert!(lines[1].starts_with("gpl,mu,1,8,40,") && lines[1].ends_with(','));
        assert!(lines[6].starts_with("mfg,phi,2,16,80,"));

        let single = StudyConfig {
            ladder: ResolutionLadder::new(vec![Resolution { n: 8, m: 40 }], Resolution { n: 16, m: 80 }).unwrap(),
            ..cfg.clone()
        };
        let r = run_convergence_study(StudyProblem::Gpl, &model, &single).unwrap();
        assert_eq!(r.fields[0].errors.len(), 1);
        assert!(r.fields[0].rates.is_empty());

        let failing = StudyConfig { max_iters: 2, ..cfg };
        match run_convergence_study(StudyProblem::Mfg, &model, &failing) {
            Err(Error::Study { level, source }) => {
                assert_eq!(level, 3);
                assert!(matches!(*source, Error::NonConvergence { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
