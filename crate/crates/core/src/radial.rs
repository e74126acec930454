//! Graded radial grids, singular-weight quadrature and the discrete function
//! space used by every downstream module.
//!
//! A radial function is represented by its nodal values on
//! `r_i = r_max (i/count)^grading`, `i = 1..=count`. Between nodes it is
//! piecewise linear; on the origin cell `[0, r_1]` it is constant (the ghost
//! reflection `u(−r_1) = u(r_1)` that imposes `u'(0) = 0`). When tagged
//! Dirichlet, the value at `r_count = r_max` is zero.
//!
//! All integrals are taken exactly on that interpolant (Gauss–Legendre per
//! panel, with a power substitution on the origin cell), so the energy, the
//! `L²` mass and the singular norm are the continuum functionals of an actual
//! `H¹` function. Reductions run in a fixed order and are bit-reproducible.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::constants::{unit_sphere_volume, Params};
use crate::error::{Error, Result};
use crate::geometry::ManifoldModel;
use crate::quadrature::GaussLegendre;

/// Gauss points per panel for integrals of nonlinear functions of `u`.
pub const PANEL_POINTS: usize = 10;
const WEIGHT_POINTS: usize = 20;
/// Smallest admissible node count.
pub const MIN_NODES: usize = 16;

/// Which polar measure a quadrature refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    /// `θ(r) r^{n−1} dr`
    Volume,
    /// `θ(r) r^{n−1−s} dr`
    Singular,
}

#[derive(Clone, Debug)]
pub struct RadialGrid {
    model: ManifoldModel,
    s: f64,
    count: usize,
    grading: f64,
    omega: f64,
    nodes: Vec<f64>,
    w_vol: Vec<f64>,
    w_sing: Vec<f64>,
    origin_vol: f64,
    origin_sing: f64,
    // Per cell j = [nodes[j], nodes[j+1]].
    stiffness: Vec<f64>,
    mass_ll: Vec<f64>,
    mass_lr: Vec<f64>,
    mass_rr: Vec<f64>,
    gauss_t: Vec<f64>,
    gauss_vol: Vec<f64>,
    gauss_sing: Vec<f64>,
}

/// Builds the graded grid `r_i = r_max (i/count)^grading` for `(m, p)`.
pub fn build_grid(m: &ManifoldModel, p: &Params, count: usize, grading: f64) -> Result<RadialGrid> {
    if count < MIN_NODES {
        return Err(Error::InvalidParameter(format!(
            "node count {count} below minimum {MIN_NODES}"
        )));
    }
    if !(grading > 0.0 && grading.is_finite()) {
        return Err(Error::InvalidParameter(format!("grading {grading} must be positive")));
    }
    let nodes: Vec<f64> = (1..=count)
        .map(|i| m.r_max() * (i as f64 / count as f64).powf(grading))
        .collect();
    RadialGrid::assemble(m, p, nodes, count, grading)
}

impl RadialGrid {
    /// Grid on explicit nodes (strictly increasing, positive, last = r_max).
    pub fn from_nodes(m: &ManifoldModel, p: &Params, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < MIN_NODES {
            return Err(Error::InvalidParameter(format!(
                "node count {} below minimum {MIN_NODES}",
                nodes.len()
            )));
        }
        let increasing = nodes.windows(2).all(|w| w[0] < w[1]);
        if !increasing || nodes[0] <= 0.0 || *nodes.last().unwrap() != m.r_max() {
            return Err(Error::InvalidParameter(
                "nodes must increase strictly from r > 0 up to r_max".into(),
            ));
        }
        let count = nodes.len();
        RadialGrid::assemble(m, p, nodes, count, f64::NAN)
    }

    fn assemble(m: &ManifoldModel, p: &Params, nodes: Vec<f64>, count: usize, grading: f64) -> Result<Self> {
        if p.n() != m.dim() {
            return Err(Error::InvalidParameter(format!(
                "params dimension {} does not match model dimension {}",
                p.n(),
                m.dim()
            )));
        }
        let n = m.dim() as f64;
        let s = p.s();
        let beta_vol = n - 1.0;
        let beta_sing = n - 1.0 - s;
        let weight_rule = GaussLegendre::new(WEIGHT_POINTS);
        let (wt, ww) = weight_rule.unit_interval();
        let panel_rule = GaussLegendre::new(PANEL_POINTS);
        let (gauss_t, gauss_w) = panel_rule.unit_interval();

        let origin_vol = origin_moment(m, beta_vol, nodes[0], &weight_rule);
        let origin_sing = origin_moment(m, beta_sing, nodes[0], &weight_rule);

        let cells = count - 1;
        let mut w_vol = vec![0.0; count];
        let mut w_sing = vec![0.0; count];
        w_vol[0] = origin_vol;
        w_sing[0] = origin_sing;
        let mut stiffness = Vec::with_capacity(cells);
        let mut mass_ll = Vec::with_capacity(cells);
        let mut mass_lr = Vec::with_capacity(cells);
        let mut mass_rr = Vec::with_capacity(cells);
        let mut gauss_vol = Vec::with_capacity(cells * PANEL_POINTS);
        let mut gauss_sing = Vec::with_capacity(cells * PANEL_POINTS);

        for j in 0..cells {
            let (a, b) = (nodes[j], nodes[j + 1]);
            let h = b - a;
            let (mut v0, mut vl, mut vr, mut sl, mut sr) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let (mut mll, mut mlr, mut mrr) = (0.0, 0.0, 0.0);
            for (&t, &w) in wt.iter().zip(&ww) {
                let r = a + h * t;
                let theta = m.density(r);
                let dv = w * h * theta * r.powf(beta_vol);
                let ds = w * h * theta * r.powf(beta_sing);
                let (phi_l, phi_r) = (1.0 - t, t);
                v0 += dv;
                vl += dv * phi_l;
                vr += dv * phi_r;
                sl += ds * phi_l;
                sr += ds * phi_r;
                mll += dv * phi_l * phi_l;
                mlr += dv * phi_l * phi_r;
                mrr += dv * phi_r * phi_r;
            }
            w_vol[j] += vl;
            w_vol[j + 1] += vr;
            w_sing[j] += sl;
            w_sing[j + 1] += sr;
            stiffness.push(v0 / (h * h));
            mass_ll.push(mll);
            mass_lr.push(mlr);
            mass_rr.push(mrr);
            for (&t, &w) in gauss_t.iter().zip(&gauss_w) {
                let r = a + h * t;
                let theta = m.density(r);
                gauss_vol.push(w * h * theta * r.powf(beta_vol));
                gauss_sing.push(w * h * theta * r.powf(beta_sing));
            }
        }

        Ok(RadialGrid {
            model: m.clone(),
            s,
            count,
            grading,
            omega: unit_sphere_volume(m.dim())?,
            nodes,
            w_vol,
            w_sing,
            origin_vol,
            origin_sing,
            stiffness,
            mass_ll,
            mass_lr,
            mass_rr,
            gauss_t,
            gauss_vol,
            gauss_sing,
        })
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Grading exponent; NaN for grids built from explicit nodes.
    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn r_max(&self) -> f64 {
        self.model.r_max()
    }

    /// `ω_{n−1}`.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Nodal weights with `Σ w_i f_i = ∫ f θ r^{n−1} dr` for piecewise-linear `f`.
    pub fn volume_weights(&self) -> &[f64] {
        &self.w_vol
    }

    /// Nodal weights with `Σ w_i f_i = ∫ f θ r^{n−1−s} dr` for piecewise-linear `f`.
    pub fn singular_weights(&self) -> &[f64] {
        &self.w_sing
    }

    pub fn weights(&self, measure: Measure) -> &[f64] {
        match measure {
            Measure::Volume => &self.w_vol,
            Measure::Singular => &self.w_sing,
        }
    }

    fn beta(&self, measure: Measure) -> f64 {
        let n = self.dim() as f64;
        match measure {
            Measure::Volume => n - 1.0,
            Measure::Singular => n - 1.0 - self.s,
        }
    }

    /// Number of nodes with `r ≤ radius`.
    pub fn nodes_within(&self, radius: f64) -> usize {
        self.nodes.partition_point(|&r| r <= radius)
    }

    /// `∫₀^{r_max} f(u_h(r)) θ(r) r^β dr` for the interpolant of `values`
    /// (no `ω` factor).
    pub fn integrate_interpolant(&self, values: &[f64], measure: Measure, f: impl Fn(f64) -> f64) -> f64 {
        debug_assert_eq!(values.len(), self.count);
        let (origin, gauss) = match measure {
            Measure::Volume => (self.origin_vol, &self.gauss_vol),
            Measure::Singular => (self.origin_sing, &self.gauss_sing),
        };
        let mut total = origin * f(values[0]);
        for j in 0..self.count - 1 {
            let (ul, ur) = (values[j], values[j + 1]);
            let g = &gauss[j * PANEL_POINTS..(j + 1) * PANEL_POINTS];
            let mut cell = 0.0;
            for (&t, &w) in self.gauss_t.iter().zip(g) {
                cell += w * f(ul + (ur - ul) * t);
            }
            total += cell;
        }
        total
    }

    /// `∫_lo^hi f(u_h(r)) θ(r) r^β dr`, clipped to the chart (no `ω` factor).
    pub fn integrate_interpolant_range(
        &self,
        values: &[f64],
        measure: Measure,
        lo: f64,
        hi: f64,
        f: impl Fn(f64) -> f64,
    ) -> f64 {
        let lo = lo.max(0.0);
        let hi = hi.min(self.r_max());
        if hi <= lo {
            return 0.0;
        }
        let beta = self.beta(measure);
        let rule = GaussLegendre::new(PANEL_POINTS);
        let r1 = self.nodes[0];
        let mut total = 0.0;
        if lo < r1 {
            let b = hi.min(r1);
            let moment = origin_moment(&self.model, beta, b, &rule) - origin_moment(&self.model, beta, lo, &rule);
            total += moment * f(values[0]);
        }
        let first = self.nodes.partition_point(|&r| r <= lo).saturating_sub(1);
        for j in first..self.count - 1 {
            let (a, b) = (self.nodes[j], self.nodes[j + 1]);
            if a >= hi {
                break;
            }
            let (ca, cb) = (a.max(lo), b.min(hi));
            if cb <= ca {
                continue;
            }
            let (ul, ur) = (values[j], values[j + 1]);
            total += rule.integrate(ca, cb, |r| {
                let t = (r - a) / (b - a);
                f(ul + (ur - ul) * t) * self.model.density(r) * r.powf(beta)
            });
        }
        total
    }

    /// `∫ f(r) θ(r) r^β dr` over `[lo, hi]` for an analytic integrand, using
    /// the grid cells as panels with a `points`-point rule on each. The origin
    /// cell is handled with the substitution `r = r_1 τ²`.
    pub fn integrate_profile(
        &self,
        measure: Measure,
        lo: f64,
        hi: f64,
        points: usize,
        f: impl Fn(f64) -> f64,
    ) -> f64 {
        let beta = self.beta(measure);
        let rule = GaussLegendre::new(points);
        let integrand = |r: f64| f(r) * self.model.density(r) * r.powf(beta);
        let hi = hi.min(self.r_max());
        let r1 = self.nodes[0];
        let mut total = 0.0;
        if lo < r1 {
            let (ta, tb) = ((lo.max(0.0) / r1).sqrt(), (hi.min(r1) / r1).sqrt());
            total += rule.integrate(ta, tb, |tau| 2.0 * r1 * tau * integrand(r1 * tau * tau));
        }
        for j in 0..self.count - 1 {
            let (a, b) = (self.nodes[j].max(lo), self.nodes[j + 1].min(hi));
            if b > a {
                total += rule.integrate(a, b, integrand);
            }
        }
        total
    }

    /// Galerkin load `b_i = ω ∫ φ_i f(u_h) θ r^{n−1−s} dr`.
    pub(crate) fn singular_load(&self, values: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut load = vec![0.0; self.count];
        load[0] = self.origin_sing * f(values[0]);
        for j in 0..self.count - 1 {
            let (ul, ur) = (values[j], values[j + 1]);
            let g = &self.gauss_sing[j * PANEL_POINTS..(j + 1) * PANEL_POINTS];
            let (mut left, mut right) = (0.0, 0.0);
            for (&t, &w) in self.gauss_t.iter().zip(g) {
                let v = w * f(ul + (ur - ul) * t);
                left += v * (1.0 - t);
                right += v * t;
            }
            load[j] += left;
            load[j + 1] += right;
        }
        for b in &mut load {
            *b *= self.omega;
        }
        load
    }

    /// Tridiagonal `ω ∫ φ_i φ_j f(u_h) θ r^{n−1−s} dr` over the first
    /// `count − 1` nodes. Returns `(diag, off)`.
    pub(crate) fn singular_tangent(&self, values: &[f64], f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let unknowns = self.count - 1;
        let mut diag = vec![0.0; unknowns];
        let mut off = vec![0.0; unknowns.saturating_sub(1)];
        diag[0] += self.origin_sing * f(values[0]);
        for j in 0..self.count - 1 {
            let (ul, ur) = (values[j], values[j + 1]);
            let g = &self.gauss_sing[j * PANEL_POINTS..(j + 1) * PANEL_POINTS];
            let (mut ll, mut lr, mut rr) = (0.0, 0.0, 0.0);
            for (&t, &w) in self.gauss_t.iter().zip(g) {
                let v = w * f(ul + (ur - ul) * t);
                ll += v * (1.0 - t) * (1.0 - t);
                lr += v * (1.0 - t) * t;
                rr += v * t * t;
            }
            diag[j] += ll;
            if j + 1 < unknowns {
                diag[j + 1] += rr;
                off[j] += lr;
            }
        }
        for v in diag.iter_mut().chain(off.iter_mut()) {
            *v *= self.omega;
        }
        (diag, off)
    }

    /// Tridiagonal `ω (A + αM)` restricted to the first `count − 1` nodes
    /// (the last node carries the Dirichlet value). Returns `(diag, off)`.
    pub(crate) fn operator(&self, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        let unknowns = self.count - 1;
        let mut diag = vec![0.0; unknowns];
        let mut off = vec![0.0; unknowns.saturating_sub(1)];
        diag[0] += alpha * self.origin_vol;
        for j in 0..self.count - 1 {
            let c = self.stiffness[j];
            diag[j] += c + alpha * self.mass_ll[j];
            if j + 1 < unknowns {
                diag[j + 1] += c + alpha * self.mass_rr[j];
                off[j] += -c + alpha * self.mass_lr[j];
            }
        }
        for v in diag.iter_mut().chain(off.iter_mut()) {
            *v *= self.omega;
        }
        (diag, off)
    }

    /// `ω ((A + αM) u)_i` at every node (including the boundary row).
    pub(crate) fn apply_operator(&self, values: &[f64], alpha: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        out[0] += alpha * self.origin_vol * values[0];
        for j in 0..self.count - 1 {
            let (ul, ur) = (values[j], values[j + 1]);
            let c = self.stiffness[j];
            let flux = c * (ul - ur);
            out[j] += flux + alpha * (self.mass_ll[j] * ul + self.mass_lr[j] * ur);
            out[j + 1] += -flux + alpha * (self.mass_lr[j] * ul + self.mass_rr[j] * ur);
        }
        for v in &mut out {
            *v *= self.omega;
        }
        out
    }

    /// Energy `∫ |u_h'|² θ r^{n−1}` (no `ω`), optionally limited to `r ≤ hi`.
    pub(crate) fn energy_up_to(&self, values: &[f64], hi: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..self.count - 1 {
            let (a, b) = (self.nodes[j], self.nodes[j + 1]);
            if a >= hi {
                break;
            }
            let du = values[j + 1] - values[j];
            if b <= hi {
                total += self.stiffness[j] * du * du;
            } else {
                let h = b - a;
                let slope = du / h;
                let partial = self.integrate_profile(Measure::Volume, a, hi, PANEL_POINTS, |_| 1.0);
                total += slope * slope * partial;
            }
        }
        total
    }
}

/// `∫₀^b θ(r) r^β dr` via `t = (r/b)^{β+1}`, exact for the flat model.
fn origin_moment(m: &ManifoldModel, beta: f64, b: f64, rule: &GaussLegendre) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    let e = beta + 1.0;
    let scale = b.powf(e) / e;
    scale * rule.integrate(0.0, 1.0, |t| m.density(b * t.powf(1.0 / e)))
}

/// Nodal values on a shared grid.
#[derive(Clone, Debug)]
pub struct RadialFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    dirichlet: bool,
}

impl RadialFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, dirichlet: bool) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::InvalidParameter(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at node {i}")));
        }
        if dirichlet && *values.last().unwrap() != 0.0 {
            return Err(Error::InvalidParameter(
                "Dirichlet function must vanish at r_max".into(),
            ));
        }
        Ok(RadialFunction {
            grid,
            values,
            dirichlet,
        })
    }

    /// Samples `f` at the nodes; a Dirichlet function gets a zero at `r_max`.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64, dirichlet: bool) -> Result<Self> {
        let mut values: Vec<f64> = grid.nodes().iter().map(|&r| f(r)).collect();
        if dirichlet {
            *values.last_mut().unwrap() = 0.0;
        }
        RadialFunction::new(grid, values, dirichlet)
    }

    pub(crate) fn from_parts(grid: Arc<RadialGrid>, values: Vec<f64>, dirichlet: bool) -> Self {
        debug_assert_eq!(values.len(), grid.count());
        RadialFunction {
            grid,
            values,
            dirichlet,
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_dirichlet(&self) -> bool {
        self.dirichlet
    }

    pub fn scaled(&self, c: f64) -> Self {
        let values = self.values.iter().map(|v| c * v).collect();
        RadialFunction::from_parts(self.grid.clone(), values, self.dirichlet)
    }

    /// Value of the interpolant at `r` (constant on the origin cell, zero
    /// beyond `r_max`).
    pub fn value_at(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        if r <= nodes[0] {
            return self.values[0];
        }
        if r > self.grid.r_max() {
            return 0.0;
        }
        let j = nodes.partition_point(|&x| x < r);
        let (a, b) = (nodes[j - 1], nodes[j]);
        let t = (r - a) / (b - a);
        self.values[j - 1] + (self.values[j] - self.values[j - 1]) * t
    }

    /// Largest nodal value and the first node attaining it within `1e−12`
    /// relative.
    pub fn max_with_index(&self) -> (f64, usize) {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let threshold = max - 1e-12 * max.abs();
        let idx = self.values.iter().position(|&v| v >= threshold).unwrap_or(0);
        (max, idx)
    }
}

/// Monotone piecewise-cubic (Fritsch–Carlson) interpolant of a radial
/// function in the variable `ln r`. Constant on the origin cell, zero beyond
/// `r_max`.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    r_first: f64,
    r_max: f64,
}

impl MonotoneCubic {
    pub fn new(u: &RadialFunction) -> Self {
        let x: Vec<f64> = u.grid().nodes().iter().map(|r| r.ln()).collect();
        let y = u.values().to_vec();
        let m = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..m - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; m];
        d[0] = delta[0];
        d[m - 1] = delta[m - 2];
        for k in 1..m - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        MonotoneCubic {
            x,
            y,
            d,
            r_first: u.grid().nodes()[0],
            r_max: u.grid().r_max(),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= self.r_first {
            return self.y[0];
        }
        if r > self.r_max {
            return 0.0;
        }
        let t = r.ln();
        let k = (self.x.partition_point(|&x| x < t)).clamp(1, self.x.len() - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let z = ((t - self.x[k]) / h).clamp(0.0, 1.0);
        let z2 = z * z;
        let z3 = z2 * z;
        let h00 = 2.0 * z3 - 3.0 * z2 + 1.0;
        let h10 = z3 - 2.0 * z2 + z;
        let h01 = -2.0 * z3 + 3.0 * z2;
        let h11 = z3 - z2;
        h00 * self.y[k] + h * (h10 * self.d[k] + h11 * self.d[k + 1]) + h01 * self.y[k + 1]
    }
}

/// `‖u‖_{q,s} = (ω ∫ |u|^q θ r^{n−1−s} dr)^{1/q}`.
pub fn weighted_norm(u: &RadialFunction, q: f64) -> f64 {
    assert!(q >= 1.0, "weighted norm exponent must be >= 1");
    let g = u.grid();
    let integral = g.integrate_interpolant(u.values(), Measure::Singular, |v| v.abs().powf(q));
    (g.omega() * integral).powf(1.0 / q)
}

/// `∫ |∇u|² dv_g` of the interpolant.
pub fn dirichlet_energy(u: &RadialFunction) -> f64 {
    let g = u.grid();
    g.omega() * g.energy_up_to(u.values(), f64::INFINITY)
}

/// `‖u‖₂` of the interpolant.
pub fn l2_norm(u: &RadialFunction) -> f64 {
    let g = u.grid();
    let v = u.values();
    let mut total = g.origin_vol * v[0] * v[0];
    for j in 0..g.count - 1 {
        let (a, b) = (v[j], v[j + 1]);
        total += g.mass_ll[j] * a * a + 2.0 * g.mass_lr[j] * a * b + g.mass_rr[j] * b * b;
    }
    (g.omega() * total).sqrt()
}

/// Header of the grid CSV layout.
#[derive(Clone, Debug, PartialEq)]
pub struct GridHeader {
    pub n: usize,
    pub s: f64,
    pub model: String,
    pub count: usize,
    pub grading: f64,
}

/// Rows `(r, w_vol, w_sing[, u])` of a grid CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCsv {
    pub header: GridHeader,
    pub rows: Vec<Vec<f64>>,
}

/// Writes the grid (and optionally nodal values) as
/// `n,s,model,count,grading` / values / `r,w_vol,w_sing[,u]` / rows.
pub fn write_grid_csv<W: Write>(grid: &RadialGrid, values: Option<&[f64]>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["n", "s", "model", "count", "grading"])?;
    w.write_record([
        grid.dim().to_string(),
        grid.s().to_string(),
        grid.model().label().to_string(),
        grid.count().to_string(),
        grid.grading().to_string(),
    ])?;
    if values.is_some() {
        w.write_record(["r", "w_vol", "w_sing", "u"])?;
    } else {
        w.write_record(["r", "w_vol", "w_sing"])?;
    }
    for i in 0..grid.count() {
        let mut row = vec![
            grid.nodes()[i].to_string(),
            grid.w_vol[i].to_string(),
            grid.w_sing[i].to_string(),
        ];
        if let Some(v) = values {
            row.push(v[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<grid csv>", e))?;
    Ok(())
}

pub fn read_grid_csv<R: Read>(input: R) -> Result<GridCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(input);
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    let bad = |what: &str| Error::Config {
        key: what.to_string(),
        message: "malformed grid csv".into(),
    };
    if records.len() < 3 {
        return Err(bad("header"));
    }
    let h = &records[1];
    let parse = |rec: &csv::StringRecord, i: usize, key: &str| -> Result<f64> {
        rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| bad(key))
    };
    let header = GridHeader {
        n: parse(h, 0, "n")? as usize,
        s: parse(h, 1, "s")?,
        model: h.get(2).ok_or_else(|| bad("model"))?.to_string(),
        count: parse(h, 3, "count")? as usize,
        grading: parse(h, 4, "grading")?,
    };
    let rows = records[3..]
        .iter()
        .map(|rec| (0..rec.len()).map(|i| parse(rec, i, "row")).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(GridCsv { header, rows })
}
