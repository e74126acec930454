//! Blow-up diagnostics of converged minimizers: rescaling to unit peak,
//! comparison with the bubble, concentration of the singular mass and the
//! scale-invariant pointwise bound.

use std::io::Write;
use std::sync::Arc;

use crate::bubble::BubbleProfile;
use crate::constants::Params;
use crate::error::{Error, Result};
use crate::geometry::ManifoldModel;
use crate::radial::{build_grid, dirichlet_energy, Measure, MonotoneCubic, RadialFunction, PANEL_POINTS};
use crate::solver::MinimizationResult;

/// Rescaled grid nodes per unit of `X`.
pub const RESCALE_DENSITY: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupReport {
    pub alpha: f64,
    pub mu: f64,
    /// `α μ²`
    pub alpha_mu2: f64,
    /// Sup distance to the unit bubble on `|X| ≤ window`.
    pub sup_deviation: f64,
    /// Singular mass fraction outside `r = tail_window·μ`.
    pub concentration_tail: f64,
    /// `sup r^{n/2−1} u(r)`
    pub pointwise_bound: f64,
    /// `peak_radius / μ`
    pub peak_offset_ratio: f64,
    pub window: f64,
    pub tail_window: f64,
}

/// `X ↦ μ^{n/2−1} u(μX)` sampled on a uniform grid of `[0, window]`,
/// interpolated monotonically in `ln r`.
pub fn rescale(u: &RadialFunction, mu: f64, window: f64) -> Result<RadialFunction> {
    let grid = u.grid();
    if !(mu > 0.0 && window > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rescaling needs mu > 0 and window > 0, got {mu} and {window}"
        )));
    }
    if window * mu > grid.r_max() {
        return Err(Error::WindowExceedsChart {
            window: window * mu,
            r_max: grid.r_max(),
        });
    }
    let n = grid.dim();
    let p = Params::new(n, grid.s(), 0.0)?;
    let flat = ManifoldModel::flat_disk(n, window)?;
    let count = ((RESCALE_DENSITY * window).ceil() as usize).max(crate::radial::MIN_NODES);
    let target = Arc::new(build_grid(&flat, &p, count, 1.0)?);
    let cubic = MonotoneCubic::new(u);
    let amp = mu.powf(n as f64 / 2.0 - 1.0);
    RadialFunction::from_fn(target, |x| amp * cubic.eval(mu * x), false)
}

/// `sup_{|X| ≤ window} |û(X) − bubble(X)|` over the nodes of `uhat`, the
/// bubble taken at unit peak.
pub fn bubble_deviation(uhat: &RadialFunction, p: &Params, window: f64) -> Result<f64> {
    if window > uhat.grid().r_max() * (1.0 + 1e-12) {
        return Err(Error::WindowExceedsChart {
            window,
            r_max: uhat.grid().r_max(),
        });
    }
    let b = BubbleProfile::unit(*p);
    Ok(uhat
        .grid()
        .nodes()
        .iter()
        .zip(uhat.values())
        .take_while(|(&x, _)| x <= window * (1.0 + 1e-12))
        .fold(0.0, |m: f64, (&x, &v)| m.max((v - b.eval(x)).abs())))
}

/// `∫_{r > window·μ} |u|^{2⋆(s)} r^{−s} dv / ∫ |u|^{2⋆(s)} r^{−s} dv`.
pub fn concentration_tail(u: &RadialFunction, p: &Params, mu: f64, window: f64) -> Result<f64> {
    let g = u.grid();
    let q = p.critical_exponent();
    let f = |v: f64| v.abs().powf(q);
    let total = g.integrate_interpolant(u.values(), Measure::Singular, f);
    if total == 0.0 {
        return Err(Error::ZeroFunction);
    }
    let inner = g.integrate_interpolant_range(u.values(), Measure::Singular, 0.0, window * mu, f);
    Ok(((total - inner) / total).clamp(0.0, 1.0))
}

/// `max_i r_i^{n/2−1} |u_i|`.
pub fn pointwise_bound(u: &RadialFunction) -> f64 {
    let e = u.grid().dim() as f64 / 2.0 - 1.0;
    u.grid()
        .nodes()
        .iter()
        .zip(u.values())
        .fold(0.0, |m: f64, (&r, &v)| m.max(r.powf(e) * v.abs()))
}

/// `α μ²` at the last point and the least-squares slope of `ln(α μ²)`
/// against `ln α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VanishingFit {
    pub last: f64,
    pub slope: f64,
    /// `slope < 0`
    pub vanishing: bool,
}

pub fn vanishing_a_check(runs: &[MinimizationResult]) -> Result<VanishingFit> {
    let points: Vec<(f64, f64)> = runs.iter().map(|r| (r.alpha, r.mu)).collect();
    vanishing_a_fit(&points)
}

/// [`vanishing_a_check`] on `(α, μ)` pairs.
pub fn vanishing_a_fit(points: &[(f64, f64)]) -> Result<VanishingFit> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: points.len(),
        });
    }
    if let Some(&(a, m)) = points.iter().find(|(a, m)| !(*a > 0.0 && *m > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "log-log fit needs alpha > 0 and mu > 0, got ({a}, {m})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(a, _)| a.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(a, m)| (a * m * m).ln()).collect();
    let slope = least_squares_slope(&xs, &ys)?;
    let (a, m) = *points.last().unwrap();
    Ok(VanishingFit {
        last: a * m * m,
        slope,
        vanishing: slope < 0.0,
    })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitDegenerate("abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Sup of `u` on `[r1 + δ, r2 − δ]` over its `L²` norm on `[r1, r2]`,
/// `δ = (r2 − r1)/4`.
pub fn local_sup_diagnostic(u: &RadialFunction, annulus: (f64, f64)) -> Result<f64> {
    let (r1, r2) = annulus;
    let g = u.grid();
    if !(r1 >= 0.0 && r2 > r1 && r2 <= g.r_max()) {
        return Err(Error::EmptyAnnulus(r1, r2));
    }
    let delta = (r2 - r1) / 4.0;
    let (lo, hi) = (r1 + delta, r2 - delta);
    let inner = g
        .nodes()
        .iter()
        .zip(u.values())
        .filter(|(&r, _)| r >= lo && r <= hi)
        .fold(0.0f64, |m, (_, &v)| m.max(v.abs()));
    let sup = inner.max(u.value_at(lo).abs()).max(u.value_at(hi).abs());
    let l2 = (g.omega() * g.integrate_interpolant_range(u.values(), Measure::Volume, r1, r2, |v| v * v)).sqrt();
    if l2 == 0.0 {
        return Err(Error::ZeroFunction);
    }
    Ok(sup / l2)
}

/// Weighted mass and energy of a rescaled profile on its window, next to
/// the bubble's on the same window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowRecovery {
    pub mass: f64,
    pub bubble_mass: f64,
    pub energy: f64,
    pub bubble_energy: f64,
}

pub fn window_recovery(uhat: &RadialFunction, p: &Params) -> WindowRecovery {
    let g = uhat.grid();
    let q = p.critical_exponent();
    let omega = g.omega();
    let b = BubbleProfile::unit(*p);
    let window = g.r_max();
    let mass = omega * g.integrate_interpolant(uhat.values(), Measure::Singular, |v| v.abs().powf(q));
    let bubble_mass = omega * g.integrate_profile(Measure::Singular, 0.0, window, PANEL_POINTS, |x| b.eval(x).powf(q));
    let bubble_energy =
        omega * g.integrate_profile(Measure::Volume, 0.0, window, PANEL_POINTS, |x| b.derivative(x).powi(2));
    WindowRecovery {
        mass,
        bubble_mass,
        energy: dirichlet_energy(uhat),
        bubble_energy,
    }
}

/// All diagnostics for one converged run.
pub fn report(run: &MinimizationResult, p: &Params, window: f64, tail_window: f64) -> Result<BlowupReport> {
    let uhat = rescale(&run.u, run.mu, window)?;
    Ok(BlowupReport {
        alpha: run.alpha,
        mu: run.mu,
        alpha_mu2: run.alpha * run.mu * run.mu,
        sup_deviation: bubble_deviation(&uhat, p, window)?,
        concentration_tail: concentration_tail(&run.u, p, run.mu, tail_window)?,
        pointwise_bound: pointwise_bound(&run.u),
        peak_offset_ratio: run.peak_radius / run.mu,
        window,
        tail_window,
    })
}

pub const BLOWUP_COLUMNS: [&str; 9] = [
    "alpha",
    "mu",
    "alpha_mu2",
    "sup_deviation",
    "concentration_tail",
    "pointwise_bound",
    "peak_offset_ratio",
    "window",
    "tail_window",
];

pub fn write_blowup_csv<W: Write>(reports: &[BlowupReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BLOWUP_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.alpha.to_string(),
            r.mu.to_string(),
            r.alpha_mu2.to_string(),
            r.sup_deviation.to_string(),
            r.concentration_tail.to_string(),
            r.pointwise_bound.to_string(),
            r.peak_offset_ratio.to_string(),
            r.window.to_string(),
            r.tail_window.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("blowup csv", e))?;
    Ok(())
}
