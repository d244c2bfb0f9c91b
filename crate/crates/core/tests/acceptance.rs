//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute in
//! order and their report lines appear in the test log. The process fails
//! if any criterion fails.

use std::time::Instant;

use logitfield::calibration::{calibrate_competition, CalibrationSpec, REFERENCE_TRIPLETS};
use logitfield::convergence::{run_convergence_study, ResolutionLadder, StudyConfig, StudyProblem};
use logitfield::grid::FieldTrajectory;
use logitfield::mfg::{forward_sweep, optimal_control, quasi_stationary_slice, Acceleration};
use logitfield::utility::{
    AnglerParams, AnglerUtility, CompetitionParams, CompetitionUtility, ConstantUtility, KernelTerm, KernelUtility,
};
use logitfield::{
    gpl_stationary, gpl_step, gpl_transient, kappa_continuity_probe, kappa_exp, kappa_log, solve_mfg, uniform_measure,
    Error, GplConfig, GridMeasure, KappaLogit, MfgConfig, Moments, UniformGrid, UtilityField, UtilityModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Resolution of the long-horizon MFG runs behind criteria 4 and 5.
const QS_CELLS: usize = 64;
const QS_DT: f64 = 0.01;
/// Resolution of the small-noise MFG runs of criterion 7.
const NC_CELLS: usize = 128;
const NC_DT: f64 = 0.01;
const NC_STALL_WINDOW: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn pass_if(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn competition(b1: f64, b2: f64) -> CompetitionUtility {
    CompetitionUtility::new(CompetitionParams::with_costs(b1, b2)).unwrap()
}

fn grid(n: usize) -> UniformGrid {
    UniformGrid::new(n).unwrap()
}

fn stationary_moments(n: usize, eta: f64, b1: f64, b2: f64, kappa: f64) -> Moments {
    let cfg = GplConfig::new(grid(n), KappaLogit::new(kappa, eta).unwrap());
    gpl_stationary(&cfg, &competition(b1, b2), &uniform_measure(&cfg.grid)).unwrap().measure.moments()
}

fn table1() -> Outcome {
    let reported = [(0.30242, 0.31250), (0.32360, 0.29960), (0.32386, 0.30355)];
    let mut pass = true;
    let mut parts = Vec::new();
    for ((eta, c), (mean, std)) in REFERENCE_TRIPLETS.iter().zip(reported) {
        let m = stationary_moments(500, *eta, c.b1, c.b2, c.kappa);
        let ok = (m.mean - mean).abs() <= 5e-3 && (m.std - std).abs() <= 5e-3;
        pass &= ok;
        parts.push(format!("eta={eta}: mean {:.5} std {:.5}", m.mean, m.std));
    }
    pass_if(pass, parts.join("; "))
}

fn calibration_argmin() -> Outcome {
    let spec = CalibrationSpec::reference_neighborhoods().unwrap();
    let results = calibrate_competition(&spec).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for ((eta, centre), r) in REFERENCE_TRIPLETS.iter().zip(&results) {
        let centre_error = r.evaluations.iter().find(|e| e.candidate == *centre).and_then(|e| e.error).unwrap();
        let min = r.evaluations.iter().filter_map(|e| e.error).fold(f64::INFINITY, f64::min);
        // Neighbours off the grid (B = 0) are not candidates.
        let in_grid = |grid: &[f64], v: f64| grid.iter().any(|g| (g - v).abs() < 1e-9);
        let expected = [-0.1, 0.0, 0.1]
            .iter()
            .flat_map(|d1| [-0.1, 0.0, 0.1].map(|d2| (*d1, d2)))
            .filter(|(d1, d2)| in_grid(&spec.b1_grid, centre.b1 + d1) && in_grid(&spec.b2_grid, centre.b2 + d2))
            .count();
        let ok = r.failed == 0 && r.evaluations.len() == expected && r.best == *centre && centre_error <= min;
        pass &= ok;
        parts.push(format!(
            "eta={eta}: best (b1={}, b2={}) error {:.3e} over {}/{expected} candidates",
            r.best.b1,
            r.best.b2,
            r.best_error,
            r.evaluations.len()
        ));
    }
    pass_if(pass, parts.join("; "))
}

fn convergence_rates() -> Outcome {
    let model = competition(1.3, 2.3);
    let mut cfg = StudyConfig::new(KappaLogit::new(1.0, 0.1).unwrap());
    cfg.ladder = ResolutionLadder::standard();
    // Same fixed point as plain damping, reached in far fewer sweeps.
    cfg.acceleration = Acceleration::Anderson { depth: 5 };
    cfg.omega = 0.25;
    let gpl = run_convergence_study(StudyProblem::Gpl, &model, &cfg).unwrap();
    let mfg = run_convergence_study(StudyProblem::Mfg, &model, &cfg).unwrap();
    let reference = [
        ("gpl", "mu", [1.09, 1.52]),
        ("mfg", "mu", [1.28, 1.68]),
        ("mfg", "phi", [1.51, 1.76]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (problem, field, rates) in reference {
        let report = if problem == "gpl" { &gpl } else { &mfg };
        let f = report.field(field).unwrap();
        let ok = f.strictly_decreasing()
            && f.rates.iter().all(|r| *r >= 0.9)
            && f.rates.iter().zip(rates).all(|(r, want)| (r - want).abs() <= 0.4);
        pass &= ok;
        parts.push(format!(
            "{problem}-{field} errors {:.3e} {:.3e} {:.3e} rates {:.2} {:.2}",
            f.errors[0], f.errors[1], f.errors[2], f.rates[0], f.rates[1]
        ));
    }
    pass_if(pass, parts.join("; "))
}

struct QuasiStationaryRun {
    eta: f64,
    slope: f64,
    mid: Moments,
    gpl: Moments,
}

fn quasi_stationary_runs() -> Vec<QuasiStationaryRun> {
    [(0.05, 0.4, 0.4, 0.0), (0.1, 1.3, 2.3, 1.0)]
        .into_iter()
        .map(|(eta, b1, b2, kappa)| {
            let t_end = 160.0;
            let kl = KappaLogit::new(kappa, eta).unwrap();
            let cfg = MfgConfig::new(grid(QS_CELLS), kl, t_end, (t_end / QS_DT).round() as usize);
            let model = competition(b1, b2);
            let sol = solve_mfg(&cfg, &model, &uniform_measure(&cfg.grid)).unwrap();
            let q = quasi_stationary_slice(&sol, &cfg).unwrap();
            QuasiStationaryRun {
                eta,
                slope: q.phi_slope,
                mid: q.mu_mid.moments(),
                gpl: stationary_moments(QS_CELLS, eta, b1, b2, kappa),
            }
        })
        .collect()
}

fn slopes(runs: &[QuasiStationaryRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (run, reported) in runs.iter().zip([0.071, 0.53]) {
        // The value grows backward in time, so dΦ/dt is negative; the
        // reported figures are magnitudes.
        let ok = run.slope < 0.0 && (run.slope.abs() / reported - 1.0).abs() <= 0.2;
        pass &= ok;
        parts.push(format!("eta={}: dPhi/dt at T/2 = {:.4} (reported {reported})", run.eta, run.slope));
    }
    pass_if(pass, parts.join("; "))
}

fn ordering(runs: &[QuasiStationaryRun]) -> Outcome {
    let pass = runs.iter().all(|r| r.mid.mean < r.gpl.mean);
    let parts: Vec<_> = runs
        .iter()
        .map(|r| format!("eta={}: MFG mid mean {:.4} vs GPL stationary {:.4}", r.eta, r.mid.mean, r.gpl.mean))
        .collect();
    pass_if(pass, parts.join("; "))
}

fn sustainability() -> Outcome {
    let cfg = GplConfig::new(grid(500), KappaLogit::new(0.5, 0.01).unwrap()).with_dt(0.01).with_t_end(120.0);
    let mu0 = uniform_measure(&cfg.grid);
    let means: Vec<f64> = [0.0, 1.0, 2.0]
        .iter()
        .map(|&a2| {
            let model = AnglerUtility::new(AnglerParams { a2, ..AnglerParams::default() }).unwrap();
            gpl_transient(&cfg, &model, &mu0, 1000).unwrap().final_measure().moments().mean
        })
        .collect();
    pass_if(
        means[0] > means[1] && means[1] > means[2],
        format!("mean at t=120 for A2=0,1,2: {:.4} {:.4} {:.4}", means[0], means[1], means[2]),
    )
}

fn small_noise_non_convergence() -> Outcome {
    let model = competition(0.2, 0.1);
    let mut pass = true;
    let mut parts = Vec::new();
    for t_end in [40.0, 80.0, 160.0] {
        let kl = KappaLogit::new(1.0, 0.01).unwrap();
        let mut cfg = MfgConfig::new(grid(NC_CELLS), kl, t_end, (t_end / NC_DT).round() as usize);
        cfg.stall_window = Some(NC_STALL_WINDOW);
        match solve_mfg(&cfg, &model, &uniform_measure(&cfg.grid)) {
            Err(Error::NonConvergence { iterations, residual, .. }) => {
                parts.push(format!("T={t_end}: no convergence after {iterations} iterations, residual {residual:.3e}"));
            }
            Ok(sol) => {
                pass = false;
                let last = sol.residual_history.last().copied().unwrap_or(0.0);
                parts.push(format!("T={t_end}: converged in {} iterations (residual {last:.1e})", sol.iterations));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("T={t_end}: unexpected error {e}"));
            }
        }
    }
    pass_if(pass, parts.join("; "))
}

/// Each property returns `Err(description)` on failure.
type Property = (&'static str, fn() -> Result<String, String>);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn kappa_identities() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = [0.0f64; 3];
    for _ in 0..20_000 {
        let kappa = if rng.gen_bool(0.3) { [0.0, 0.5, 1.0][rng.gen_range(0..3)] } else { rng.gen_range(0.0..=1.0) };
        let z: f64 = rng.gen_range(-30.0..30.0);
        let (e, e_neg) = (kappa_exp(z, kappa).unwrap(), kappa_exp(-z, kappa).unwrap());
        worst[0] = worst[0].max((e * e_neg - 1.0).abs());
        worst[1] = worst[1].max((kappa_log(e, kappa).unwrap() - z).abs());
        let kl = KappaLogit::new(kappa, rng.gen_range(0.01..2.0)).unwrap();
        let (u, v) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        worst[2] = worst[2].max((kl.logit_rate(u, v) + kl.logit_rate(v, u) - 1.0).abs());
    }
    check(worst[0] <= 1e-12 && worst[1] <= 1e-10 && worst[2] <= 1e-14, || format!("worst deviations {worst:?}"))?;
    Ok(format!("reciprocal {:.1e}, log inverse {:.1e}, complement {:.1e}", worst[0], worst[1], worst[2]))
}

fn cost_symmetry() -> Result<String, String> {
    let mut worst = 0.0f64;
    for kappa in [0.0, 0.5, 1.0] {
        for eta in [0.01, 0.1, 1.0] {
            let kl = KappaLogit::new(kappa, eta).unwrap();
            worst = worst.max(kl.cost(0.5).unwrap().abs());
            for k in 1..1000 {
                let u = k as f64 / 1000.0;
                worst = worst.max((kl.cost(u).unwrap() - kl.cost(1.0 - u).unwrap()).abs());
            }
        }
    }
    check(worst <= 1e-12, || format!("worst |F(u) - F(1-u)| or |F(1/2)| = {worst:e}"))?;
    Ok(format!("worst {worst:.1e}"))
}

fn hamiltonian_maximizer() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scan: Vec<f64> = (0..10_000).map(|k| (k as f64 + 0.5) / 10_000.0).collect();
    let mut worst_gain = f64::NEG_INFINITY;
    for trial in 0..100 {
        let kappa = if trial % 4 == 3 { rng.gen_range(0.0..=1.0) } else { [0.0, 0.5, 1.0][trial % 4] };
        let eta = rng.gen_range(0.01..1.0);
        let dphi = rng.gen_range(-2.0..2.0);
        let kl = KappaLogit::new(kappa, eta).unwrap();
        // Jumping from x to y gains a ΔΦ at cost F(a).
        let h = |a: f64| a * dphi - kl.cost_with(a, true).unwrap();
        let a_star = kl.cost_prime_inv(dphi);
        let best = h(a_star);
        let scale = best.abs().max(1e-3);
        for &a in &scan {
            let gain = h(a) - best;
            worst_gain = worst_gain.max(gain / scale);
            check(gain <= 1e-9 * scale, || {
                format!("kappa={kappa} eta={eta} dphi={dphi}: a={a} beats a*={a_star} by {gain:e}")
            })?;
        }
    }
    Ok(format!("largest relative scan gain {worst_gain:.1e}"))
}

fn random_kernel(rng: &mut ChaCha8Rng, g: &UniformGrid) -> KernelUtility {
    let n = g.n_cells();
    let matrix = (0..n * n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    KernelUtility::single(KernelTerm::new(n, matrix, std::sync::Arc::new(|z| z)).unwrap())
}

fn random_measure(rng: &mut ChaCha8Rng, g: &UniformGrid) -> GridMeasure {
    let w: Vec<f64> = (0..g.n_cells()).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() }).collect();
    let w = if w.iter().all(|v| *v == 0.0) { vec![1.0; w.len()] } else { w };
    GridMeasure::from_weights(g.clone(), &w).unwrap()
}

fn mass_and_sign() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut steps = 0;
    let mut worst_mass = 0.0f64;
    while steps < 100_000 {
        let g = grid(rng.gen_range(2..16));
        let kl = KappaLogit::new(rng.gen_range(0.0..=1.0), rng.gen_range(0.005..2.0)).unwrap();
        let cfg = GplConfig::new(g.clone(), kl).with_dt(rng.gen_range(1e-3..=1.0));
        let model = random_kernel(&mut rng, &g);
        let mut mu = random_measure(&mut rng, &g);
        let mut u = vec![0.0; g.n_cells()];
        for _ in 0..100 {
            model.evaluate_into(&g, mu.masses(), 0.0, &mut u).unwrap();
            let field = UtilityField::new(g.clone(), u.clone()).unwrap();
            let next = gpl_step(&mu, &field, &cfg).map_err(|e| format!("step failed: {e}"))?;
            let drift = (next.total_mass() - mu.total_mass()).abs();
            worst_mass = worst_mass.max(drift);
            check(drift <= 1e-13, || format!("mass drift {drift:e} in one step"))?;
            check(next.masses().iter().all(|m| *m >= 0.0), || format!("negative mass {:?}", next.masses()))?;
            mu = next;
            steps += 1;
        }
    }
    // forward sweeps driven by arbitrary value functions
    let mut fp_steps = 0;
    for _ in 0..200 {
        let g = grid(rng.gen_range(2..16));
        let n_steps = 100;
        let kappa = [0.0, 0.5, 1.0][rng.gen_range(0..3)];
        let kl = KappaLogit::new(kappa, rng.gen_range(0.005..2.0)).unwrap();
        let cfg = MfgConfig::new(g.clone(), kl, 0.5 * n_steps as f64, n_steps);
        let mut phi = FieldTrajectory::new(g.n_cells());
        for (k, t) in cfg.times().iter().enumerate() {
            let row: Vec<f64> = (0..g.n_cells()).map(|_| rng.gen_range(-3.0..3.0) * (1.0 + k as f64 / 50.0)).collect();
            phi.push(*t, &row);
        }
        let mu0 = random_measure(&mut rng, &g);
        let traj = forward_sweep(&phi, &mu0, &cfg).map_err(|e| format!("forward sweep failed: {e}"))?;
        for k in 1..traj.len() {
            let (a, b): (f64, f64) = (traj.row(k - 1).iter().sum(), traj.row(k).iter().sum());
            worst_mass = worst_mass.max((a - b).abs());
            check((a - b).abs() <= 1e-13, || format!("forward sweep mass drift {:e}", (a - b).abs()))?;
            check(traj.row(k).iter().all(|m| *m >= 0.0), || "negative mass in forward sweep".to_string())?;
            fp_steps += 1;
        }
    }
    Ok(format!("{steps} GPL and {fp_steps} FP steps, worst mass drift {worst_mass:.1e}"))
}

fn fixed_points() -> Result<String, String> {
    let mut worst = 0.0f64;
    for n in [2, 7, 64, 500] {
        let g = grid(n);
        for kappa in [0.0, 0.3, 0.5, 1.0] {
            let cfg = GplConfig::new(g.clone(), KappaLogit::new(kappa, 0.05).unwrap()).with_dt(1.0);
            let mu = uniform_measure(&g);
            let next = gpl_step(&mu, &UtilityField::constant(&g, 3.7), &cfg).unwrap();
            for (a, b) in next.masses().iter().zip(mu.masses()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(worst <= 1e-14, || format!("uniform state moved by {worst:e}"))?;
    let g = grid(40);
    let cfg = MfgConfig::new(g.clone(), KappaLogit::new(0.5, 0.1).unwrap(), 5.0, 50);
    let sol = solve_mfg(&cfg, &ConstantUtility::zero(), &uniform_measure(&g)).unwrap();
    check(sol.phi.as_flat().iter().all(|p| *p == 0.0), || "zero utility gave a nonzero value function".to_string())?;
    let control = optimal_control(&sol.value_at(0), &cfg.kl);
    check(control.iter().all(|a| *a == 0.5), || "zero value function gave a non-uniform control".to_string())?;
    Ok(format!("uniform drift {worst:.1e}; zero-utility value function exactly 0"))
}

fn kappa_continuity() -> Result<String, String> {
    let g = grid(100);
    let cfg = GplConfig::new(g.clone(), KappaLogit::new(0.5, 0.05).unwrap()).with_dt(0.05).with_t_end(10.0);
    let model = competition(0.4, 0.4);
    let gaps = kappa_continuity_probe(&cfg, &model, &uniform_measure(&g), 0.5, &[0.1, 0.01, 0.001]).unwrap();
    check(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] > 0.0, || format!("gaps {gaps:?}"))?;
    Ok(format!("sup-time TV gaps {:.2e} {:.2e} {:.2e}", gaps[0], gaps[1], gaps[2]))
}

/// Exact cell masses of the density 1.5 on [0, 1/3), 0.75 on [1/3, 1].
fn step_initial(g: &UniformGrid) -> GridMeasure {
    let n = g.n_cells();
    let h = 1.0 / n as f64;
    let cut = 1.0 / 3.0;
    let cdf = |x: f64| if x < cut { 1.5 * x } else { 0.5 + 0.75 * (x - cut) };
    let w: Vec<f64> = (0..n).map(|i| cdf((i + 1) as f64 * h) - cdf(i as f64 * h)).collect();
    GridMeasure::from_weights(g.clone(), &w).unwrap()
}

fn discretization_halving() -> Result<String, String> {
    let kl = KappaLogit::new(0.5, 0.1).unwrap();
    // U(x, μ) = ∫ (x - x² - |x - y| / 2) μ(dy), Lipschitz in both arguments.
    let kernel = |x: f64, y: f64| x - x * x - 0.5 * (x - y).abs();
    let densities = |n: usize| -> Vec<Vec<f64>> {
        let g = grid(n);
        let model = KernelUtility::single(KernelTerm::linear(&g, kernel).unwrap());
        let cfg = GplConfig::new(g.clone(), kl).with_dt(0.01).with_t_end(2.0);
        let traj = gpl_transient(&cfg, &model, &step_initial(&g), 1).unwrap();
        traj.masses.rows().map(|r| r.iter().map(|m| m * n as f64).collect()).collect()
    };
    let sizes = [64, 128, 256, 512];
    let runs: Vec<_> = sizes.iter().map(|&n| densities(n)).collect();
    let errors: Vec<f64> = (0..3)
        .map(|i| {
            runs[i]
                .iter()
                .zip(&runs[i + 1])
                .map(|(coarse, fine)| {
                    let fine = logitfield::coarsen_field(fine, 2).unwrap();
                    coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    check(ratios.iter().all(|r| (1.4..=2.6).contains(r)), || format!("errors {errors:?} ratios {ratios:?}"))?;
    Ok(format!(
        "errors {:.3e} {:.3e} {:.3e}, ratios {:.2} {:.2}",
        errors[0], errors[1], errors[2], ratios[0], ratios[1]
    ))
}

fn properties() -> Outcome {
    let props: [Property; 7] = [
        ("kappa identities", kappa_identities),
        ("cost symmetry", cost_symmetry),
        ("hamiltonian maximizer", hamiltonian_maximizer),
        ("mass and sign", mass_and_sign),
        ("fixed points", fixed_points),
        ("kappa continuity", kappa_continuity),
        ("discretization halving", discretization_halving),
    ];
    let mut failed = Vec::new();
    for (name, f) in props {
        let started = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(name);
                ("FAIL", d)
            }
        };
        println!("    {tag} {name}: {detail} [{:.1}s]", started.elapsed().as_secs_f64());
    }
    let detail = if failed.is_empty() { "7/7 properties hold".to_string() } else { format!("failed: {}", failed.join(", ")) };
    pass_if(failed.is_empty(), detail)
}

fn main() {
    // Honour `cargo test -- --list` and filters without running anything.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }
    // ACCEPTANCE_CRITERIA=1,8 runs a subset.
    let selected: Option<Vec<u32>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let wanted = |id: u32| selected.as_ref().map_or(true, |s| s.contains(&id));

    let mut failures = 0;
    let mut report = |id: u32, name: &str, started: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failures += 1;
        }
        println!("criterion {id} {tag} {name}: {} [{:.1}s]", o.detail, started.elapsed().as_secs_f64());
    };

    if wanted(8) {
        report(8, "property suite", Instant::now(), properties());
    }
    if wanted(1) {
        report(1, "stationary moments", Instant::now(), table1());
    }
    if wanted(2) {
        report(2, "calibration argmin", Instant::now(), calibration_argmin());
    }
    if wanted(4) || wanted(5) {
        let t = Instant::now();
        let runs = quasi_stationary_runs();
        report(4, "quasi-stationary slope", t, slopes(&runs));
        report(5, "MFG left of GPL", t, ordering(&runs));
    }
    if wanted(6) {
        report(6, "sustainability ordering", Instant::now(), sustainability());
    }
    if wanted(7) {
        report(7, "small-noise non-convergence", Instant::now(), small_noise_non_convergence());
    }
    if wanted(3) {
        report(3, "convergence rates", Instant::now(), convergence_rates());
    }

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
