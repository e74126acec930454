//! Damped nonlinear inverse iteration for the radial minimization of `I_α`
//! under `‖u‖_{2⋆(s),s} = 1`, and α-sweeps with warm starts.

use std::io::Write;
use std::sync::Arc;

use crate::bubble::BubbleProfile;
use crate::constants::{k_opt_inv, Params};
use crate::error::{Error, Result};
use crate::functional::{el_residual, quotient, ElResidual};
use crate::geometry::{ManifoldModel, ModelKind};
use crate::radial::{build_grid, l2_norm, Measure, RadialFunction, RadialGrid};

/// Number of consecutive λ increases that counts as divergence.
const DIVERGENCE_STEPS: usize = 10;

/// Starting profile of the iteration.
#[derive(Clone, Debug)]
pub enum Seed {
    /// Euclidean bubble at scale `min(k, r_max/10)`.
    Bubble,
    Constant,
    /// Any positive profile; resampled if it lives on another grid.
    Custom(RadialFunction),
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when the relative change of λ drops below this.
    pub tolerance: f64,
    pub damping: f64,
    pub seed: Seed,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 50_000,
            tolerance: 1e-8,
            damping: 0.7,
            seed: Seed::Bubble,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MinimizationResult {
    /// Normalized minimizer, `‖u‖_{2⋆(s),s} = 1`.
    pub u: RadialFunction,
    pub alpha: f64,
    pub lambda: f64,
    /// `(max u)^{−2/(n−2)}`
    pub mu: f64,
    pub peak_radius: f64,
    pub l2_norm: f64,
    pub el_residual: ElResidual,
    pub iterations: usize,
    /// Newton steps accepted after the iteration converged.
    pub polish_steps: usize,
    pub converged: bool,
    /// `λ ≥ K(n,s)⁻¹`: the run is not a strict-inequality minimizer.
    pub above_critical: bool,
}

/// LU factors of a symmetric tridiagonal matrix (Thomas algorithm).
struct Tridiagonal {
    off: Vec<f64>,
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    fn factor(diag: &[f64], off: &[f64]) -> Result<Self> {
        Self::factor_checked(diag, off, |pivot, d| pivot > 1e-14 * d.abs())
    }

    fn factor_indefinite(diag: &[f64], off: &[f64]) -> Result<Self> {
        Self::factor_checked(diag, off, |pivot, d| pivot.abs() > 1e-12 * d.abs())
    }

    fn factor_checked(diag: &[f64], off: &[f64], ok: impl Fn(f64, f64) -> bool) -> Result<Self> {
        let n = diag.len();
        let mut pivots = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let pivot = if i == 0 {
                diag[0]
            } else {
                diag[i] - off[i - 1] * upper[i - 1]
            };
            if !ok(pivot, diag[i]) {
                return Err(Error::LinearSolve { row: i, pivot });
            }
            pivots.push(pivot);
            if i + 1 < n {
                upper.push(off[i] / pivot);
            }
        }
        Ok(Tridiagonal {
            off: off.to_vec(),
            pivots,
            upper,
        })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.pivots.len();
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let carry = if i == 0 { 0.0 } else { self.off[i - 1] * y[i - 1] };
            y.push((rhs[i] - carry) / self.pivots[i]);
        }
        for i in (0..n - 1).rev() {
            y[i] -= self.upper[i] * y[i + 1];
        }
        y
    }
}

/// Linear interpolation of `u` onto `grid`, zero at `r_max` when Dirichlet.
pub fn resample(u: &RadialFunction, grid: Arc<RadialGrid>) -> RadialFunction {
    if Arc::ptr_eq(u.grid(), &grid) {
        return u.clone();
    }
    let mut values: Vec<f64> = grid.nodes().iter().map(|&r| u.value_at(r)).collect();
    if u.is_dirichlet() {
        *values.last_mut().unwrap() = 0.0;
    }
    RadialFunction::from_parts(grid, values, u.is_dirichlet())
}

fn seed_profile(grid: &Arc<RadialGrid>, p: &Params, seed: &Seed) -> Result<RadialFunction> {
    let u = match seed {
        Seed::Bubble => {
            let k = BubbleProfile::unit(*p).k();
            let b = BubbleProfile::new(*p, k.min(0.1 * grid.r_max()))?;
            RadialFunction::from_fn(grid.clone(), |r| b.eval(r), true)?
        }
        Seed::Constant => RadialFunction::from_fn(grid.clone(), |_| 1.0, true)?,
        Seed::Custom(f) => resample(f, grid.clone()),
    };
    let interior = grid.count() - 1;
    if let Some(node) = u.values()[..interior].iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive {
            node,
            value: u.values()[node],
        });
    }
    Ok(u)
}

/// `v ↦ v^e` with an integer fast path.
#[derive(Clone, Copy)]
struct Power {
    e: f64,
    int: Option<i32>,
}

impl Power {
    fn new(e: f64) -> Self {
        let int = (e.fract() == 0.0 && e.abs() < 64.0).then_some(e as i32);
        Power { e, int }
    }

    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self.int {
            Some(k) => v.powi(k),
            None => v.powf(self.e),
        }
    }
}

/// Divides `values` by their singular `q`-norm, with `pow = v ↦ v^q`.
fn normalize(values: &mut [f64], grid: &RadialGrid, pow: Power) -> Result<()> {
    let integral = grid.integrate_interpolant(values, Measure::Singular, |v| pow.apply(v.abs()));
    let norm = (grid.omega() * integral).powf(1.0 / pow.e);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::ZeroFunction);
    }
    for v in values.iter_mut() {
        *v /= norm;
    }
    Ok(())
}

/// Minimizes `I_α` (with `α = p.alpha()`) over Dirichlet profiles on `grid`.
pub fn minimize(grid: Arc<RadialGrid>, p: &Params, opts: &SolverOptions) -> Result<MinimizationResult> {
    opts.validate()?;
    if p.alpha() == 0.0 && grid.model().kind() != ModelKind::Flat {
        return Err(Error::InvalidParameter(
            "alpha = 0 is only coercive on the flat model".into(),
        ));
    }
    let q = p.critical_exponent();
    let pow_q = Power::new(q);
    let pow_load = Power::new(q - 1.0);
    let (diag, off) = grid.operator(p.alpha());
    let system = Tridiagonal::factor(&diag, &off)?;
    let interior = grid.count() - 1;

    let mut values = seed_profile(&grid, p, &opts.seed)?.values().to_vec();
    normalize(&mut values, &grid, pow_q)?;
    // Valid for normalized values: the denominator is 1.
    let lambda_of = |v: &[f64]| grid.energy_up_to(v, f64::INFINITY) * grid.omega() + p.alpha() * mass_of(&grid, v);
    let mut lambda = lambda_of(&values);
    let mut increases = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let load = grid.singular_load(&values, |v| pow_load.apply(v.max(0.0)));
        let mut w = system.solve(&load[..interior]);
        if let Some(node) = w.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositive { node, value: w[node] });
        }
        w.push(0.0);
        normalize(&mut w, &grid, pow_q)?;
        for (u, wi) in values.iter_mut().zip(&w) {
            *u = (1.0 - opts.damping) * *u + opts.damping * wi;
        }
        normalize(&mut values, &grid, pow_q)?;
        let next = lambda_of(&values);
        if !next.is_finite() {
            return Err(Error::Divergence {
                steps: iterations,
                lambda: next,
            });
        }
        let change = (next - lambda).abs() / lambda;
        if next > lambda * (1.0 + 1e-14) {
            increases += 1;
            if increases >= DIVERGENCE_STEPS {
                return Err(Error::Divergence {
                    steps: iterations,
                    lambda: next,
                });
            }
        } else {
            increases = 0;
        }
        lambda = next;
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }

    // With α = 0 on the flat chart the scale direction is exactly neutral and
    // the Newton step would follow discretization error along it.
    let polish_steps = if converged && p.alpha() > 0.0 {
        polish(&grid, p, &diag, &off, &mut values, pow_q)
    } else {
        0
    };

    let u = RadialFunction::from_parts(grid.clone(), values, true);
    let lambda = quotient(&u, p)?.lambda;
    let (max, idx) = u.max_with_index();
    let n = p.n() as f64;
    let el_residual = el_residual(&u, p, lambda)?;
    Ok(MinimizationResult {
        alpha: p.alpha(),
        lambda,
        mu: max.powf(-2.0 / (n - 2.0)),
        peak_radius: grid.nodes()[idx],
        l2_norm: l2_norm(&u),
        el_residual,
        iterations,
        polish_steps,
        converged,
        above_critical: lambda >= k_opt_inv(p),
        u,
    })
}

const POLISH_STEPS: usize = 30;

/// Newton refinement of a converged iterate on the bordered system
/// `K u − λ b(u) = 0`, `ω∫u^q θ r^{n−1−s} = 1`, where the inverse iteration
/// only crawls along the nearly neutral scale mode. A step is kept only if
/// it keeps `u` positive and either lowers λ or, with λ unchanged to
/// rounding, lowers `|K u − λ b(u)|`.
/// Returns the number of accepted steps.
fn polish(grid: &Arc<RadialGrid>, p: &Params, k_diag: &[f64], k_off: &[f64], values: &mut [f64], pow_q: Power) -> usize {
    let q = pow_q.e;
    let pow_load = Power::new(q - 1.0);
    let pow_tangent = Power::new(q - 2.0);
    let m = grid.count() - 1;
    let weights = grid.volume_weights();
    let lambda_of = |v: &[f64]| grid.energy_up_to(v, f64::INFINITY) * grid.omega() + p.alpha() * mass_of(grid, v);
    let residual = |v: &[f64], lambda: f64| -> (Vec<f64>, Vec<f64>, f64) {
        let ku = grid.apply_operator(v, p.alpha());
        let b = grid.singular_load(v, |x| pow_load.apply(x.max(0.0)));
        let f: Vec<f64> = (0..m).map(|i| ku[i] - lambda * b[i]).collect();
        // Strong-form size, as reported by the Euler–Lagrange residual.
        let norm = f.iter().zip(weights).fold(0.0f64, |a, (x, w)| a.max((x / w).abs()));
        (f, b, norm)
    };

    let mut lambda = lambda_of(values);
    let (mut f, mut b, mut fnorm) = residual(values, lambda);
    let mut accepted = 0;
    for _ in 0..POLISH_STEPS {
        let (dd, dof) = grid.singular_tangent(values, |x| pow_tangent.apply(x.max(0.0)));
        let c = lambda * (q - 1.0);
        let jd: Vec<f64> = k_diag.iter().zip(&dd).map(|(k, d)| k - c * d).collect();
        let jo: Vec<f64> = k_off.iter().zip(&dof).map(|(k, d)| k - c * d).collect();
        let Ok(jac) = Tridiagonal::factor_indefinite(&jd, &jo) else {
            break;
        };
        let neg_f: Vec<f64> = f.iter().map(|x| -x).collect();
        let x1 = jac.solve(&neg_f);
        let x2 = jac.solve(&b[..m]);
        let bx1: f64 = b.iter().zip(&x1).map(|(a, x)| a * x).sum();
        let bx2: f64 = b.iter().zip(&x2).map(|(a, x)| a * x).sum();
        if !(bx2.abs() > 0.0) {
            break;
        }
        // The constraint holds to rounding after normalization.
        let dlambda = -bx1 / bx2;
        let step: Vec<f64> = x1.iter().zip(&x2).map(|(a, c)| a + dlambda * c).collect();
        let peak = values.iter().fold(0.0f64, |a, &v| a.max(v));
        let size = step.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if size <= 1e-14 * peak {
            break;
        }
        let mut t = 1.0;
        let mut taken = false;
        for _ in 0..12 {
            let mut trial: Vec<f64> = values.iter().zip(&step).map(|(v, d)| v + t * d).collect();
            trial.push(0.0);
            if trial[..m].iter().all(|&v| v > 0.0) && normalize(&mut trial, grid, pow_q).is_ok() {
                let l = lambda_of(&trial);
                let (tf, tb, tn) = residual(&trial, l);
                let lower = l < lambda * (1.0 - 1e-14);
                let flat = l <= lambda * (1.0 + 1e-14) && tn < fnorm;
                if lower || flat {
                    values.copy_from_slice(&trial);
                    (lambda, f, b, fnorm) = (l, tf, tb, tn);
                    taken = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !taken {
            break;
        }
        accepted += 1;
    }
    accepted
}

fn mass_of(grid: &Arc<RadialGrid>, values: &[f64]) -> f64 {
    let l2 = l2_norm(&RadialFunction::from_parts(grid.clone(), values.to_vec(), true));
    l2 * l2
}

/// How the sweep chooses and refines its grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPolicy {
    pub count: usize,
    pub grading: f64,
    /// Refine while fewer than this many nodes lie in `[0, μ]`.
    pub min_cells: usize,
    pub max_count: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            count: 4000,
            grading: 2.0,
            min_cells: 10,
            max_count: 64_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub policy: GridPolicy,
    pub solver: SolverOptions,
    /// Seed each α with the previous minimizer. Forces sequential execution.
    pub warm_start: bool,
    /// Worker threads when `warm_start` is off.
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            policy: GridPolicy::default(),
            solver: SolverOptions::default(),
            warm_start: true,
            jobs: 1,
        }
    }
}

fn solve_refined(
    m: &ManifoldModel,
    p: &Params,
    mut grid: Arc<RadialGrid>,
    policy: &GridPolicy,
    solver: &SolverOptions,
) -> Result<MinimizationResult> {
    let mut result = minimize(grid.clone(), p, solver)?;
    while grid.nodes_within(result.mu) < policy.min_cells && 2 * grid.count() <= policy.max_count {
        grid = Arc::new(build_grid(m, p, 2 * grid.count(), policy.grading)?);
        let opts = SolverOptions {
            seed: Seed::Custom(result.u.clone()),
            ..solver.clone()
        };
        result = minimize(grid.clone(), p, &opts)?;
    }
    Ok(result)
}

/// Minimizes for each α of an increasing list. A failure at one α is
/// reported in its slot and does not stop the sweep.
pub fn sweep_alpha(
    m: &ManifoldModel,
    p_base: &Params,
    alphas: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<Result<MinimizationResult>>> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("empty alpha list".into()));
    }
    if alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("alphas must be strictly increasing".into()));
    }
    let params = alphas
        .iter()
        .map(|&a| p_base.with_alpha(a))
        .collect::<Result<Vec<_>>>()?;
    let base_grid = Arc::new(build_grid(m, p_base, opts.policy.count, opts.policy.grading)?);

    if opts.warm_start {
        let mut out = Vec::with_capacity(alphas.len());
        let mut grid = base_grid;
        let mut previous: Option<RadialFunction> = None;
        for p in &params {
            let solver = match &previous {
                Some(u) => SolverOptions {
                    seed: Seed::Custom(u.clone()),
                    ..opts.solver.clone()
                },
                None => opts.solver.clone(),
            };
            let result = solve_refined(m, p, grid.clone(), &opts.policy, &solver);
            if let Ok(r) = &result {
                grid = r.u.grid().clone();
                previous = Some(r.u.clone());
            }
            out.push(result);
        }
        return Ok(out);
    }

    let jobs = opts.jobs.max(1).min(params.len());
    let mut slots: Vec<Option<Result<MinimizationResult>>> = (0..params.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = slots.chunks_mut(params.len().div_ceil(jobs)).collect();
        let mut start = 0;
        for chunk in chunks {
            let len = chunk.len();
            let ps = &params[start..start + len];
            let grid = base_grid.clone();
            let policy = &opts.policy;
            let solver = &opts.solver;
            scope.spawn(move || {
                for (slot, p) in chunk.iter_mut().zip(ps) {
                    *slot = Some(solve_refined(m, p, grid.clone(), policy, solver));
                }
            });
            start += len;
        }
    });
    Ok(slots.into_iter().map(|s| s.unwrap()).collect())
}

/// Header of the run CSV.
pub const RUN_COLUMNS: [&str; 8] = [
    "alpha",
    "lambda",
    "mu",
    "peak_radius",
    "l2_norm",
    "el_residual",
    "iterations",
    "converged",
];

/// Writes one row per successful run.
pub fn write_run_csv<W: Write>(results: &[MinimizationResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for r in results {
        w.write_record([
            r.alpha.to_string(),
            r.lambda.to_string(),
            r.mu.to_string(),
            r.peak_radius.to_string(),
            r.l2_norm.to_string(),
            r.el_residual.weighted.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("run csv", e))?;
    Ok(())
}
