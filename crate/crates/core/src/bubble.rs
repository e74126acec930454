//! The Euclidean extremal profiles
//! `û(r) = (a^{(2−s)/2} k^{(2−s)/2} / (a^{2−s} + r^{2−s}))^{(n−2)/(2−s)}`
//! and their weighted integrals.
//!
//! Integrals over ℝⁿ are split at the chart radius of a flat grid: the inner
//! part uses high-order Gauss–Legendre panels on the grid cells, the outer
//! part is summed in closed form from the binomial series of the decaying
//! tail, so truncation is not an error source.

use crate::constants::{bubble_scale_constant, critical_exponent, k_opt_inv, Params};
use crate::error::{Error, Result};
use crate::geometry::ModelKind;
use crate::radial::{Measure, RadialGrid};
use crate::stencil::fd_weights;

const FINE_POINTS: usize = 20;
const COARSE_POINTS: usize = 12;
/// Relative tolerance on the quadrature error estimate.
pub const QUADRATURE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BubbleProfile {
    p: Params,
    a: f64,
    k: f64,
    center_offset: f64,
}

impl BubbleProfile {
    /// Centered bubble with scale `a`.
    pub fn new(p: Params, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("bubble scale a = {a} must be positive")));
        }
        Ok(BubbleProfile {
            p,
            a,
            k: bubble_scale_constant(&p),
            center_offset: 0.0,
        })
    }

    /// The normalized extremal `a = k`, with value 1 at the center.
    pub fn unit(p: Params) -> Self {
        let k = bubble_scale_constant(&p);
        BubbleProfile {
            p,
            a: k,
            k,
            center_offset: 0.0,
        }
    }

    /// Records a translated center `X₀`; evaluation stays radial about `X₀`.
    pub fn with_center_offset(mut self, offset: f64) -> Result<Self> {
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(Error::InvalidParameter("center offset must be >= 0".into()));
        }
        self.center_offset = offset;
        Ok(self)
    }

    pub fn params(&self) -> &Params {
        &self.p
    }

    pub fn scale(&self) -> f64 {
        self.a
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn center_offset(&self) -> f64 {
        self.center_offset
    }

    fn exponent(&self) -> f64 {
        (self.p.n() as f64 - 2.0) / (2.0 - self.p.s())
    }

    /// `û(r)`, `r` being the distance to the bubble center.
    pub fn eval(&self, r: f64) -> f64 {
        let e = 2.0 - self.p.s();
        let num = (self.a * self.k).powf(e / 2.0);
        (num / (self.a.powf(e) + r.powf(e))).powf(self.exponent())
    }

    /// `û'(r)`.
    pub fn derivative(&self, r: f64) -> f64 {
        if r == 0.0 {
            return if self.p.s() < 1.0 {
                0.0
            } else if self.p.s() == 1.0 {
                -(self.p.n() as f64 - 2.0) * self.eval(0.0) / self.a
            } else {
                f64::NEG_INFINITY
            };
        }
        let e = 2.0 - self.p.s();
        let n = self.p.n() as f64;
        -(n - 2.0) * r.powf(1.0 - self.p.s()) / (self.a.powf(e) + r.powf(e)) * self.eval(r)
    }

    /// Value at the center, `(k/a)^{(n−2)/2}`.
    pub fn peak(&self) -> f64 {
        (self.k / self.a).powf((self.p.n() as f64 - 2.0) / 2.0)
    }

    /// `ω ∫ f r^β dr` over `[r_max, ∞)` for `f r^β = C r^{−γ} (1 + (a/r)^{2−s})^{−m}`.
    fn tail_series(&self, coeff: f64, gamma: f64, m: f64, r_cut: f64) -> f64 {
        let e = 2.0 - self.p.s();
        let x = (self.a / r_cut).powf(e);
        let mut binom = 1.0;
        let mut xj = 1.0;
        let mut sum = 0.0;
        for j in 0..400 {
            let jf = j as f64;
            let term = binom * xj / (gamma + e * jf - 1.0);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
            binom *= -(m + jf) / (jf + 1.0);
            xj *= x;
        }
        coeff * r_cut.powf(1.0 - gamma) * sum
    }

    fn check_grid(&self, grid: &RadialGrid) -> Result<()> {
        if grid.model().kind() != ModelKind::Flat {
            return Err(Error::InvalidParameter("bubble integrals need a flat chart".into()));
        }
        if grid.dim() != self.p.n() || grid.s() != self.p.s() {
            return Err(Error::InvalidParameter("grid built for different (n, s)".into()));
        }
        if grid.r_max() <= self.a {
            return Err(Error::InvalidParameter(
                "flat chart must extend beyond the bubble scale".into(),
            ));
        }
        Ok(())
    }

    fn inner_integral(&self, grid: &RadialGrid, measure: Measure, f: impl Fn(f64) -> f64 + Copy) -> Result<f64> {
        let fine = grid.integrate_profile(measure, 0.0, grid.r_max(), FINE_POINTS, f);
        let coarse = grid.integrate_profile(measure, 0.0, grid.r_max(), COARSE_POINTS, f);
        let estimate = (fine - coarse).abs() / fine.abs().max(f64::MIN_POSITIVE);
        if estimate > QUADRATURE_TOL {
            return Err(Error::Quadrature {
                estimate,
                tolerance: QUADRATURE_TOL,
            });
        }
        Ok(fine)
    }

    /// `∫_{ℝⁿ} û^{2⋆(s)} |X|^{−s} dX`.
    pub fn weighted_mass(&self, grid: &RadialGrid) -> Result<f64> {
        self.check_grid(grid)?;
        let p = critical_exponent(&self.p);
        let inner = self.inner_integral(grid, Measure::Singular, |r| self.eval(r).powf(p))?;
        let n = self.p.n() as f64;
        let s = self.p.s();
        let m = 2.0 * (n - s) / (2.0 - s);
        let coeff = (self.a * self.k).powf((n - 2.0) * p / 2.0);
        let tail = self.tail_series(coeff, n + 1.0 - s, m, grid.r_max());
        Ok(grid.omega() * (inner + tail))
    }

    /// `∫_{ℝⁿ} |∇û|² dX`, from the analytic derivative.
    pub fn dirichlet_energy(&self, grid: &RadialGrid) -> Result<f64> {
        self.check_grid(grid)?;
        let inner = self.inner_integral(grid, Measure::Volume, |r| self.derivative(r).powi(2))?;
        let n = self.p.n() as f64;
        let s = self.p.s();
        let m = 2.0 * (n - s) / (2.0 - s);
        let coeff = (self.a * self.k).powf(n - 2.0) * (n - 2.0) * (n - 2.0);
        let tail = self.tail_series(coeff, n - 1.0, m, grid.r_max());
        Ok(grid.omega() * (inner + tail))
    }

    /// `max |−û'' − (n−1)û'/r − K⁻¹ û^{2⋆(s)−1} r^{−s}|` over nodes in the
    /// default window `[a/8, 8a]`, with five-point stencils.
    pub fn pde_residual(&self, grid: &RadialGrid) -> Result<f64> {
        self.pde_residual_with(grid, ResidualWindow::around(self.a), 1.0)
    }

    /// Residual on `window` with the nonlinearity scaled by `coupling·K⁻¹`.
    pub fn pde_residual_with(&self, grid: &RadialGrid, window: ResidualWindow, coupling: f64) -> Result<f64> {
        let nodes = grid.nodes();
        let values: Vec<f64> = nodes.iter().map(|&r| self.eval(r)).collect();
        let n = self.p.n() as f64;
        let s = self.p.s();
        let pm1 = critical_exponent(&self.p) - 1.0;
        let kinv = coupling * k_opt_inv(&self.p);
        let mut worst = 0.0f64;
        let mut used = 0;
        for i in 2..nodes.len().saturating_sub(2) {
            let r = nodes[i];
            if r < window.lo || r > window.hi {
                continue;
            }
            let h = (nodes[i + 1] - nodes[i - 1]) / 2.0;
            if h / r > 0.25 {
                return Err(Error::GridTooCoarse(format!(
                    "spacing {h:.3e} at r = {r:.3e} is too wide for the stencil"
                )));
            }
            let w = fd_weights(r, &nodes[i - 2..=i + 2], 2);
            let d1: f64 = w[1].iter().zip(&values[i - 2..=i + 2]).map(|(c, v)| c * v).sum();
            let d2: f64 = w[2].iter().zip(&values[i - 2..=i + 2]).map(|(c, v)| c * v).sum();
            let lap = -d2 - (n - 1.0) * d1 / r;
            let res = (lap - kinv * values[i].powf(pm1) * r.powf(-s)).abs();
            worst = worst.max(res);
            used += 1;
        }
        if used < 5 {
            return Err(Error::GridTooCoarse(format!(
                "only {used} nodes inside [{:.3e}, {:.3e}]",
                window.lo, window.hi
            )));
        }
        Ok(worst)
    }

    /// `sup_r r^{(n−2)/2} û(r) = k^{(n−2)/2} 2^{−(n−2)/(2−s)}`, attained at `r = a`.
    pub fn pointwise_sup(&self) -> f64 {
        let n = self.p.n() as f64;
        self.k.powf((n - 2.0) / 2.0) * 0.5f64.powf(self.exponent())
    }
}

/// Radial window `[lo, hi]` on which a pointwise residual is measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualWindow {
    pub lo: f64,
    pub hi: f64,
}

impl ResidualWindow {
    pub fn around(scale: f64) -> Self {
        ResidualWindow {
            lo: scale / 8.0,
            hi: 8.0 * scale,
        }
    }
}
