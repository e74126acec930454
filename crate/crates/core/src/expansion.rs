//! Concentrating test functions, the small-scale expansion of the quotient
//! along them, and a bisection search for the smallest admissible second
//! constant in the radial class.

use std::io::Write;
use std::sync::Arc;

use crate::constants::{k_opt, k_opt_inv, Params};
use crate::error::{Error, Result};
use crate::functional::{profile_quotient, QuotientValue};
use crate::geometry::ManifoldModel;
use crate::radial::{build_grid, RadialFunction, RadialGrid};
use crate::solver::{minimize, GridPolicy, SolverOptions};

/// Gauss points per grid cell for the quotient of a test function.
const PROFILE_POINTS: usize = 20;
/// Smallest number of nodes inside `[0, ε]` for the quotient grid.
const NODES_PER_PEAK: usize = 20;
/// Bisection steps of [`b0_search`] after the bracket is found.
pub const BISECTION_STEPS: usize = 14;
const MAX_DOUBLINGS: usize = 40;

/// Gauge of the leading correction as a function of the concentration scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaRule {
    /// `ε²`
    Square,
    /// `ε² ln(1/ε)`
    SquareLog,
}

impl ThetaRule {
    /// `ε² ln(1/ε)` in dimension 4, `ε²` above.
    pub fn for_dim(n: usize) -> Result<Self> {
        match n {
            0..=3 => Err(Error::Domain(format!(
                "the expansion needs n >= 4, got n = {n}"
            ))),
            4 => Ok(ThetaRule::SquareLog),
            _ => Ok(ThetaRule::Square),
        }
    }

    pub fn eval(self, eps: f64) -> f64 {
        match self {
            ThetaRule::Square => eps * eps,
            ThetaRule::SquareLog => eps * eps * (1.0 / eps).ln(),
        }
    }
}

/// `u_ε(r) = η(r) (ε^{1−s/2} / (ε^{2−s} + r^{2−s}))^{(n−2)/(2−s)}` with a
/// quintic smoothstep cutoff `η ≡ 1` on `r ≤ r_max/2`, `η ≡ 0` on
/// `r ≥ 3r_max/4`.
#[derive(Clone, Copy, Debug)]
pub struct TestFunction {
    n: usize,
    s: f64,
    eps: f64,
    r_max: f64,
}

impl TestFunction {
    pub fn new(m: &ManifoldModel, p: &Params, eps: f64) -> Result<Self> {
        if p.n() < 4 {
            return Err(Error::Domain(format!("test functions need n >= 4, got {}", p.n())));
        }
        if p.n() != m.dim() {
            return Err(Error::InvalidParameter("model and params disagree on n".into()));
        }
        let limit = m.r_max() / 10.0;
        if !(eps > 0.0 && eps < limit) {
            return Err(Error::EpsTooLarge { eps, limit });
        }
        Ok(TestFunction {
            n: p.n(),
            s: p.s(),
            eps,
            r_max: m.r_max(),
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn exponent(&self) -> f64 {
        (self.n as f64 - 2.0) / (2.0 - self.s)
    }

    fn core(&self, r: f64) -> f64 {
        let b = 2.0 - self.s;
        let e = self.eps;
        (e.powf(1.0 - self.s / 2.0) / (e.powf(b) + r.powf(b))).powf(self.exponent())
    }

    fn core_derivative(&self, r: f64) -> f64 {
        if r == 0.0 {
            return if self.s < 1.0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let b = 2.0 - self.s;
        let denom = self.eps.powf(b) + r.powf(b);
        -self.exponent() * self.core(r) * b * r.powf(b - 1.0) / denom
    }

    fn cutoff(&self, r: f64) -> (f64, f64) {
        let (lo, width) = (0.5 * self.r_max, 0.25 * self.r_max);
        let t = (r - lo) / width;
        if t <= 0.0 {
            (1.0, 0.0)
        } else if t >= 1.0 {
            (0.0, 0.0)
        } else {
            let step = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
            let slope = 30.0 * t * t * (1.0 - t) * (1.0 - t);
            (1.0 - step, -slope / width)
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.cutoff(r).0 * self.core(r)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let (eta, deta) = self.cutoff(r);
        if eta == 1.0 {
            return self.core_derivative(r);
        }
        eta * self.core_derivative(r) + deta * self.core(r)
    }

    /// Grid for the quotient of this test function: graded so that at least
    /// 20 nodes fall inside `[0, ε]`.
    pub fn quotient_grid(&self, m: &ManifoldModel, p: &Params) -> Result<RadialGrid> {
        let grading = 2.0;
        let fraction = (self.eps / self.r_max).powf(1.0 / grading);
        let count = ((NODES_PER_PEAK as f64 / fraction).ceil() as usize).max(400);
        build_grid(m, p, count, grading)
    }
}

/// Samples `u_ε` at the nodes of `grid`.
pub fn test_function(m: &ManifoldModel, p: &Params, eps: f64, grid: Arc<RadialGrid>) -> Result<RadialFunction> {
    let f = TestFunction::new(m, p, eps)?;
    RadialFunction::from_fn(grid, |r| f.eval(r), true)
}

/// `I_{K⁻¹B}(u_ε)` evaluated by quadrature of the closed form.
pub fn test_quotient(m: &ManifoldModel, p: &Params, b: f64, eps: f64) -> Result<QuotientValue> {
    let f = TestFunction::new(m, p, eps)?;
    let p = p.with_alpha(k_opt_inv(p) * b)?;
    let grid = f.quotient_grid(m, &p)?;
    profile_quotient(&grid, &p, PROFILE_POINTS, |r| f.eval(r), |r| f.derivative(r))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FitOptions {
    /// Exponent `δ` of an extra `ε^{2+δ}` column absorbing the remainder.
    pub nuisance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionFit {
    pub rule: ThetaRule,
    pub b: f64,
    pub epsilons: Vec<f64>,
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    /// Coefficient of `θ_ε` in `I(u_ε) − K⁻¹`.
    pub fitted_coeff: f64,
    pub nuisance_coeff: Option<f64>,
    /// Root mean square of the fit residuals.
    pub fit_residual: f64,
}

/// Least squares for `y ≈ Σ_j c_j x_j` without intercept. Returns the
/// coefficients and the rms residual.
fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = columns.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = columns[i].iter().zip(&columns[j]).map(|(x, z)| x * z).sum();
        }
        a[i][k] = columns[i].iter().zip(y).map(|(x, z)| x * z).sum();
    }
    let scale = (0..k).map(|i| a[i][i]).fold(0.0, f64::max);
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&x, &z| a[x][c].abs().total_cmp(&a[z][c].abs()))
            .unwrap();
        a.swap(c, piv);
        if !(a[c][c].abs() > 1e-12 * scale) {
            return Err(Error::FitDegenerate("normal equations are singular".into()));
        }
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    let coeffs: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    let ss: f64 = y
        .iter()
        .enumerate()
        .map(|(i, yi)| {
            let fit: f64 = coeffs.iter().zip(columns).map(|(c, col)| c * col[i]).sum();
            (yi - fit).powi(2)
        })
        .sum();
    Ok((coeffs, (ss / y.len() as f64).sqrt()))
}

/// Fits `I_{K⁻¹B}(u_ε) − K⁻¹ ≈ c θ_ε` over a decreasing ε ladder, with the
/// θ rule of dimension `p.n()`.
pub fn expansion_fit(m: &ManifoldModel, p: &Params, b: f64, epsilons: &[f64], opts: FitOptions) -> Result<ExpansionFit> {
    expansion_fit_with(m, p, b, epsilons, ThetaRule::for_dim(p.n())?, opts)
}

/// [`expansion_fit`] with an explicit θ rule.
pub fn expansion_fit_with(
    m: &ManifoldModel,
    p: &Params,
    b: f64,
    epsilons: &[f64],
    rule: ThetaRule,
    opts: FitOptions,
) -> Result<ExpansionFit> {
    ThetaRule::for_dim(p.n())?;
    if epsilons.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: epsilons.len(),
        });
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("epsilons must decrease strictly".into()));
    }
    let k_inv = k_opt_inv(p);
    let values = epsilons
        .iter()
        .map(|&e| Ok(test_quotient(m, p, b, e)?.lambda))
        .collect::<Result<Vec<f64>>>()?;
    fit_values(b, epsilons, values, rule, opts, k_inv)
}

fn fit_values(
    b: f64,
    epsilons: &[f64],
    values: Vec<f64>,
    rule: ThetaRule,
    opts: FitOptions,
    k_inv: f64,
) -> Result<ExpansionFit> {
    let gaps: Vec<f64> = values.iter().map(|v| v - k_inv).collect();
    if !(gaps.last().unwrap().abs() < gaps[0].abs()) {
        return Err(Error::NonConvergentTrend(format!(
            "|I(u_eps) - 1/K| went from {:e} to {:e} as eps decreased",
            gaps[0].abs(),
            gaps.last().unwrap().abs()
        )));
    }
    let thetas: Vec<f64> = epsilons.iter().map(|&e| rule.eval(e)).collect();
    let mut columns = vec![thetas.clone()];
    if let Some(delta) = opts.nuisance {
        columns.push(epsilons.iter().map(|e| e.powf(2.0 + delta)).collect());
    }
    let (coeffs, fit_residual) = least_squares(&columns, &gaps)?;
    Ok(ExpansionFit {
        rule,
        b,
        epsilons: epsilons.to_vec(),
        thetas,
        values,
        fitted_coeff: coeffs[0],
        nuisance_coeff: coeffs.get(1).copied(),
        fit_residual,
    })
}

/// Ladder `r_max·{0.08, 0.04, 0.02, 0.01, 0.005}`.
pub fn default_eps_ladder(m: &ManifoldModel) -> Vec<f64> {
    [0.08, 0.04, 0.02, 0.01, 0.005].iter().map(|f| f * m.r_max()).collect()
}

pub const FIT_COLUMNS: [&str; 4] = ["eps", "theta", "I_value", "I_minus_K_inv"];

pub fn write_fit_csv<W: Write>(fit: &ExpansionFit, k_inv: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIT_COLUMNS)?;
    for ((e, t), v) in fit.epsilons.iter().zip(&fit.thetas).zip(&fit.values) {
        w.write_record([e.to_string(), t.to_string(), v.to_string(), (v - k_inv).to_string()])?;
    }
    w.flush().map_err(|e| Error::io("fit csv", e))?;
    Ok(())
}

/// Bracket `[b_low, b_high]` of the smallest `B` for which the radial
/// minimum of `I_{K⁻¹B}` reaches `K⁻¹(1 − tol)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct B0Estimate {
    pub b_low: f64,
    pub b_high: f64,
    /// Minimized quotient at `b_high`.
    pub lambda_at_b: f64,
    /// Number of minimizations run.
    pub iterations: usize,
}

/// Doubling from `B = K` until the minimized quotient reaches
/// `K⁻¹(1 − tol)`, then a fixed number of bisection steps. Every candidate
/// starts from the same seed, so the predicate depends on `B` alone and a
/// looser `tol` never yields a larger `b_high`.
pub fn b0_search(m: &ManifoldModel, p: &Params, policy: &GridPolicy, tol: f64) -> Result<B0Estimate> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("tol must lie in (0, 1), got {tol}")));
    }
    let grid = Arc::new(build_grid(m, p, policy.count, policy.grading)?);
    let k = k_opt(p);
    let k_inv = k_opt_inv(p);
    let opts = SolverOptions::default();
    let mut runs = 0;
    let mut attempt = |b: f64| -> Result<(bool, f64)> {
        runs += 1;
        let q = p.with_alpha(k_inv * b)?;
        let r = minimize(grid.clone(), &q, &opts)?;
        Ok((r.lambda >= k_inv * (1.0 - tol), r.lambda))
    };

    let flat = m.kind() == crate::geometry::ModelKind::Flat;
    if flat {
        let (ok, lambda) = attempt(0.0)?;
        if ok {
            return Ok(B0Estimate {
                b_low: 0.0,
                b_high: 0.0,
                lambda_at_b: lambda,
                iterations: runs,
            });
        }
    }
    let mut low = 0.0;
    let mut high = k;
    let mut lambda_high = f64::NAN;
    let mut found = false;
    for _ in 0..MAX_DOUBLINGS {
        let (ok, lambda) = attempt(high)?;
        if ok {
            lambda_high = lambda;
            found = true;
            break;
        }
        low = high;
        high *= 2.0;
    }
    if !found {
        return Err(Error::BracketNotFound(high));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (low + high);
        let (ok, lambda) = attempt(mid)?;
        if ok {
            high = mid;
            lambda_high = lambda;
        } else {
            low = mid;
        }
    }
    Ok(B0Estimate {
        b_low: low,
        b_high: high,
        lambda_at_b: lambda_high,
        iterations: runs,
    })
}
