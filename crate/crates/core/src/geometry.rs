//! Rotationally symmetric model manifolds in geodesic polar coordinates
//! around the base point `x₀`.
//!
//! Only the polar volume density `θ(r)` (with `dv_g = θ(r) r^{n−1} dr dσ`) and
//! the scalar curvature at the base point are modeled; the metric tensor is
//! never materialized.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Unit round sphere, chart up to `π − SPHERE_MARGIN`.
    Sphere,
    /// Euclidean ball of configurable radius.
    Flat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldModel {
    n: usize,
    r_max: f64,
    kind: ModelKind,
}

impl ManifoldModel {
    /// Distance kept from the antipode, where polar coordinates degenerate.
    pub const SPHERE_MARGIN: f64 = 1e-3;

    pub fn round_sphere(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(ManifoldModel {
            n,
            r_max: PI - Self::SPHERE_MARGIN,
            kind: ModelKind::Sphere,
        })
    }

    pub fn flat_disk(n: usize, r_max: f64) -> Result<Self> {
        check_dim(n)?;
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("chart radius {r_max} must be positive")));
        }
        Ok(ManifoldModel {
            n,
            r_max,
            kind: ModelKind::Flat,
        })
    }

    /// Model from its CLI label. `flat_radius` is only used by `"flat"`.
    pub fn from_label(label: &str, n: usize, flat_radius: f64) -> Result<Self> {
        match label {
            "sphere" => Self::round_sphere(n),
            "flat" => Self::flat_disk(n, flat_radius),
            other => Err(Error::InvalidParameter(format!(
                "unknown model `{other}` (expected `sphere` or `flat`)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            ModelKind::Sphere => "sphere",
            ModelKind::Flat => "flat",
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn scalar_curvature_at_base(&self) -> f64 {
        match self.kind {
            ModelKind::Sphere => (self.n * (self.n - 1)) as f64,
            ModelKind::Flat => 0.0,
        }
    }

    /// `θ(r)`, checked against the chart `[0, r_max]`.
    pub fn volume_density(&self, r: f64) -> Result<f64> {
        if !(0.0..=self.r_max).contains(&r) {
            return Err(Error::Domain(format!(
                "radius {r} outside the chart [0, {}]",
                self.r_max
            )));
        }
        Ok(self.density(r))
    }

    /// `θ(r)` without the chart check; callers guarantee `0 ≤ r ≤ r_max`.
    pub(crate) fn density(&self, r: f64) -> f64 {
        match self.kind {
            ModelKind::Flat => 1.0,
            ModelKind::Sphere => sinc(r).powi(self.n as i32 - 1),
        }
    }
}

impl fmt::Display for ManifoldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(n={}, r_max={})", self.label(), self.n, self.r_max)
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("model dimension {n} must be >= 2")));
    }
    Ok(())
}

fn sinc(r: f64) -> f64 {
    if r.abs() < 1e-4 {
        let r2 = r * r;
        1.0 - r2 / 6.0 + r2 * r2 / 120.0
    } else {
        r.sin() / r
    }
}

/// Result of fitting the quadratic coefficient of `θ(r) = 1 + c r² + O(r⁴)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartanFit {
    pub coeff: f64,
    /// `−Scal_g(x₀)/(6n)`, the value predicted by Cartan's expansion.
    pub expected: f64,
    pub deviation: f64,
}

/// Fits `(θ(r) − 1)/r² = c + d r² + e r⁴` on the given radii and compares `c`
/// with `−Scal_g(x₀)/(6n)`.
pub fn cartan_check(m: &ManifoldModel, radii: &[f64]) -> Result<CartanFit> {
    if radii.len() < 3 {
        return Err(Error::FitDegenerate(format!(
            "cartan fit needs at least 3 radii, got {}",
            radii.len()
        )));
    }
    let limit = m.r_max / 4.0;
    if let Some(r) = radii.iter().find(|&&r| !(r > 0.0 && r < limit)) {
        return Err(Error::Domain(format!("radius {r} outside (0, {limit})")));
    }
    // Normal equations for the basis {1, r², r⁴}.
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for &r in radii {
        let r2 = r * r;
        let y = (m.density(r) - 1.0) / r2;
        let row = [1.0, r2, r2 * r2];
        for i in 0..3 {
            atb[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let sol = solve3(ata, atb)
        .ok_or_else(|| Error::FitDegenerate("radii do not determine a quadratic fit".into()))?;
    let expected = -m.scalar_curvature_at_base() / (6.0 * m.n as f64);
    Ok(CartanFit {
        coeff: sol[0],
        expected,
        deviation: (sol[0] - expected).abs(),
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}
