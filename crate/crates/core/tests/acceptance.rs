//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use hslab::blowup::{self, bubble_deviation, rescale};
use hslab::bubble::BubbleProfile;
use hslab::constants::{b0_lower_bound, bubble_scale_constant, k_opt, k_opt_inv, Params};
use hslab::expansion::{b0_search, default_eps_ladder, expansion_fit, FitOptions};
use hslab::geometry::ManifoldModel;
use hslab::radial::build_grid;
use hslab::solver::{minimize, sweep_alpha, GridPolicy, MinimizationResult, SolverOptions, SweepOptions};

struct Verdict {
    passed: bool,
    detail: String,
    budget: Duration,
}

fn verdict(passed: bool, detail: String, budget_secs: u64) -> Verdict {
    Verdict {
        passed,
        detail,
        budget: Duration::from_secs(budget_secs),
    }
}

/// `Γ(x)` for positive integers and half-integers.
fn gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round() as u64;
    assert!(twice >= 1 && (2.0 * x - twice as f64).abs() < 1e-12);
    let (mut value, mut t) = if twice % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while t < x - 1e-12 {
        value *= t;
        t += 1.0;
    }
    value
}

fn talenti(n: usize) -> f64 {
    let n_f = n as f64;
    let sphere = 2.0 * PI.powf((n_f + 1.0) / 2.0) / gamma_half_integer((n_f + 1.0) / 2.0);
    4.0 / (n_f * (n_f - 2.0) * sphere.powf(2.0 / n_f))
}

fn criterion_1() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in 3..=8 {
        let p = Params::new(n, 0.0, 0.0).unwrap();
        worst = worst.max((k_opt(&p) / talenti(n) - 1.0).abs());
    }
    verdict(worst <= 1e-10, format!("max rel. error vs Talenti {worst:.2e} (<= 1e-10)"), 1)
}

fn criterion_2() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, s) in [(3, 1.0), (4, 1.0), (5, 0.5)] {
        let p = Params::new(n, s, 0.0).unwrap();
        let b = BubbleProfile::unit(p);
        let m = ManifoldModel::flat_disk(n, 50.0 * b.k()).unwrap();
        let fine = build_grid(&m, &p, 2048, 2.0).unwrap();
        let mass_err = (b.weighted_mass(&fine).unwrap() - 1.0).abs();
        let energy_err = (b.dirichlet_energy(&fine).unwrap() / k_opt_inv(&p) - 1.0).abs();
        let res: Vec<f64> = [512, 1024, 2048]
            .iter()
            .map(|&c| b.pde_residual(&build_grid(&m, &p, c, 2.0).unwrap()).unwrap())
            .collect();
        let order = (res[0] / res[1]).log2().min((res[1] / res[2]).log2());
        ok &= mass_err <= 1e-6 && energy_err <= 1e-6 && order >= 3.0;
        parts.push(format!("({n},{s}) mass {mass_err:.1e} energy {energy_err:.1e} order {order:.2}"));
    }
    verdict(ok, format!("{} (1e-6, 1e-6, >= 3)", parts.join("; ")), 10)
}

fn criterion_3() -> Verdict {
    let p = Params::new(4, 1.0, 0.0).unwrap();
    let k = bubble_scale_constant(&p);
    let m = ManifoldModel::flat_disk(4, 1e3 * k).unwrap();
    let grid = Arc::new(build_grid(&m, &p, 4000, 2.0).unwrap());
    let run = minimize(grid, &p, &SolverOptions::default()).unwrap();
    let gap = (run.lambda / k_opt_inv(&p) - 1.0).abs();
    let window = 5.0 * k;
    let uhat = rescale(&run.u, run.mu, window).unwrap();
    let dev = bubble_deviation(&uhat, &p, window).unwrap();
    verdict(
        gap <= 1e-3 && dev <= 1e-2,
        format!("|lambda*K - 1| {gap:.2e} (<= 1e-3), sup deviation on r <= 5k {dev:.2e} (<= 1e-2)"),
        60,
    )
}

fn sphere_sweep() -> (Params, Vec<MinimizationResult>) {
    let p = Params::new(4, 1.0, 0.0).unwrap();
    let m = ManifoldModel::round_sphere(4).unwrap();
    let runs = sweep_alpha(&m, &p, &[1.0, 4.0, 16.0, 64.0, 256.0], &SweepOptions::default())
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
    (p, runs)
}

fn criterion_4(p: &Params, runs: &[MinimizationResult]) -> Verdict {
    let k_inv = k_opt_inv(p);
    let lambdas: Vec<f64> = runs.iter().map(|r| r.lambda).collect();
    let mus: Vec<f64> = runs.iter().map(|r| r.mu).collect();
    let lambda_up = lambdas.windows(2).all(|w| w[0] < w[1]);
    let lambda_last = lambdas.last().unwrap() / k_inv;
    let mu_down = mus.windows(2).all(|w| w[0] > w[1]);
    let slope = blowup::vanishing_a_check(runs).unwrap().slope;
    let last = runs.last().unwrap();
    let report = blowup::report(last, p, 5.0, 10.0).unwrap();
    let first_offset = runs[0].peak_radius / runs[0].mu;
    let last_offset = report.peak_offset_ratio;
    let checks = [
        lambda_up,
        lambda_last >= 0.95,
        mu_down,
        slope < 0.0,
        report.sup_deviation <= 5e-2,
        report.concentration_tail <= 0.05,
        last_offset < first_offset,
    ];
    verdict(
        checks.iter().all(|&c| c),
        format!(
            "lambda increasing {lambda_up}, lambda_last*K {lambda_last:.6} (>= 0.95), mu decreasing {mu_down}, \
             alpha mu^2 slope {slope:.3} (< 0), deviation(R=5) {:.2e} (<= 5e-2), tail(R=10) {:.2e} (<= 0.05), \
             peak offset ratio first {first_offset:.2e} last {last_offset:.2e} (last < first)",
            report.sup_deviation, report.concentration_tail
        ),
        600,
    )
}

/// `max_r r^{n/2−1} û(r)` of the unit bubble by golden-section search on the
/// closed form.
fn bubble_sup_oracle(p: &Params) -> f64 {
    let n = p.n() as f64;
    let s = p.s();
    let k = bubble_scale_constant(p);
    let f = |r: f64| {
        let kb = k.powf(2.0 - s);
        r.powf(n / 2.0 - 1.0) * (kb / (kb + r.powf(2.0 - s))).powf((n - 2.0) / (2.0 - s))
    };
    let (mut a, mut b) = (0.0, 100.0 * k);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

fn criterion_5(p: &Params, runs: &[MinimizationResult]) -> Verdict {
    let sup = bubble_sup_oracle(p);
    let (alpha, bound) = runs
        .iter()
        .map(|r| (r.alpha, blowup::pointwise_bound(&r.u)))
        .fold((f64::NAN, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let ratio = bound / sup;
    verdict(
        ratio <= 2.0,
        format!("max sup r^(n/2-1) u = {bound:.4} at alpha {alpha}, bubble sup {sup:.4}, ratio {ratio:.3} (<= 2)"),
        600,
    )
}

fn criterion_6() -> Verdict {
    let p = Params::new(5, 1.0, 0.0).unwrap();
    let m = ManifoldModel::round_sphere(5).unwrap();
    let critical = k_opt(&p) * 3.0 * 5.0 / (12.0 * 7.0) * 20.0;
    let ladder = default_eps_ladder(&m);
    let c = |b: f64| expansion_fit(&m, &p, b, &ladder, FitOptions::default()).unwrap().fitted_coeff;
    let (c0, below, above) = (c(0.0), c(0.8 * critical), c(1.2 * critical));
    verdict(
        c0 < 0.0 && below < 0.0 && above > 0.0,
        format!("critical B {critical:.5}; c(0) {c0:.3e} (< 0), c(0.8B) {below:.3e} (< 0), c(1.2B) {above:.3e} (> 0)"),
        300,
    )
}

fn criterion_7() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [4, 5] {
        let p = Params::new(n, 1.0, 0.0).unwrap();
        let m = ManifoldModel::round_sphere(n).unwrap();
        let bound = b0_lower_bound(&p, m.scalar_curvature_at_base());
        let e = b0_search(&m, &p, &GridPolicy::default(), 1e-4).unwrap();
        ok &= e.b_high >= 0.95 * bound;
        parts.push(format!("n={n}: B_high {:.5} bound {bound:.5} ratio {:.4}", e.b_high, e.b_high / bound));
    }
    verdict(ok, format!("{} (ratio >= 0.95, tol 1e-4)", parts.join("; ")), 900)
}

fn cli_run(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_hslab"))
        .args(["sweep", "--model", "sphere", "--n", "4", "--s", "1", "--alphas", "1,4,16,64,256", "--out"])
        .arg(dir)
        .output()
        .unwrap()
        .status;
    assert!(status.code().is_some());
    (
        std::fs::read(dir.join("results.csv")).unwrap(),
        std::fs::read(dir.join("blowup.csv")).unwrap(),
    )
}

fn criterion_8() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let a = cli_run(&tmp.path().join("a"));
    let b = cli_run(&tmp.path().join("b"));
    verdict(
        a == b && !a.0.is_empty(),
        format!("results.csv {} bytes, blowup.csv {} bytes, identical {}", a.0.len(), a.1.len(), a == b),
        600,
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut record = |id: usize, name: &str, run: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= v.budget;
        let passed = v.passed && in_time;
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {id} {} {name}: {} [{:.2}s, budget {}s]",
            if passed { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            v.budget.as_secs()
        );
    };
    record(1, "constant cross-check", &mut criterion_1);
    record(2, "bubble ground truth", &mut criterion_2);
    record(3, "flat chart recovers the bubble", &mut criterion_3);
    let start = Instant::now();
    let (p, runs) = sphere_sweep();
    let sweep_time = start.elapsed();
    println!("sphere sweep n=4 s=1 alpha 1..256: {:.2}s", sweep_time.as_secs_f64());
    record(4, "sphere sweep blow-up picture", &mut || criterion_4(&p, &runs));
    record(5, "pointwise bound", &mut || criterion_5(&p, &runs));
    record(6, "expansion sign test", &mut criterion_6);
    record(7, "empirical B0 vs curvature bound", &mut criterion_7);
    record(8, "CLI determinism", &mut criterion_8);
    println!("acceptance: {} of 8 criteria failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
