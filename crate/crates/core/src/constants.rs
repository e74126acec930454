//! Hardy–Sobolev exponent, sphere volumes and the optimal Euclidean constant.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Problem parameters: dimension `n`, singularity exponent `s` and penalty
/// `alpha` of the quotient `I_α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params {
    n: usize,
    s: f64,
    alpha: f64,
}

impl Params {
    pub fn new(n: usize, s: f64, alpha: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("dimension n = {n} must be >= 3")));
        }
        if !(0.0..2.0).contains(&s) {
            return Err(Error::InvalidParameter(format!("s = {s} must lie in [0, 2)")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must be finite and >= 0")));
        }
        Ok(Params { n, s, alpha })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Params::new(self.n, self.s, alpha)
    }

    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self)
    }
}

/// `2⋆(s) = 2(n − s)/(n − 2)`.
pub fn critical_exponent(p: &Params) -> f64 {
    let n = p.n as f64;
    2.0 * (n - p.s) / (n - 2.0)
}

// Lanczos approximation, g = 7, nine terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of Γ(x) for x > 0.
///
/// Lanczos series (g = 7, 9 coefficients, the set published with the GNU
/// Scientific Library) for x ≥ 1/2 and the reflection formula below that.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires finite x > 0, got {x}")));
    }
    Ok(ln_gamma_positive(x))
}

fn ln_gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x)Γ(1 − x) = π / sin(πx); sin(πx) > 0 on (0, 1/2).
        return (PI / (PI * x).sin()).ln() - ln_gamma_positive(1.0 - x);
    }
    let z = x - 1.0;
    let mut series = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + series.ln()
}

/// Measure of the unit sphere `S^{n−1} ⊂ ℝⁿ`, `ω_{n−1} = 2π^{n/2}/Γ(n/2)`.
pub fn unit_sphere_volume(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("unit sphere volume needs n >= 2, got {n}")));
    }
    let half = n as f64 / 2.0;
    Ok(2.0 * (half * PI.ln() - ln_gamma_positive(half)).exp())
}

/// The optimal constant `K(n, s)` of the Euclidean Hardy–Sobolev inequality.
pub fn k_opt(p: &Params) -> f64 {
    let n = p.n as f64;
    let s = p.s;
    let omega = unit_sphere_volume(p.n).expect("n >= 3 by construction");
    let q = (n - s) / (2.0 - s);
    let ln_ratio = 2.0 * ln_gamma_positive(q) - ln_gamma_positive(2.0 * q);
    let ln_inner = omega.ln() - (2.0 - s).ln() + ln_ratio;
    let ln_k = -((n - 2.0) * (n - s)).ln() - (2.0 - s) / (n - s) * ln_inner;
    ln_k.exp()
}

/// `K(n, s)⁻¹`, the infimum of the Euclidean quotient.
pub fn k_opt_inv(p: &Params) -> f64 {
    1.0 / k_opt(p)
}

/// Bubble scale `k` with `k^{2−s} = (n − 2)(n − s)K(n, s)`.
pub fn bubble_scale_constant(p: &Params) -> f64 {
    let n = p.n as f64;
    ((n - 2.0) * (n - p.s) * k_opt(p)).powf(1.0 / (2.0 - p.s))
}

/// The `(min:B0)` curvature factor `(n − 2)(6 − s)/(12(2n − 2 − s))`.
pub fn curvature_factor(p: &Params) -> f64 {
    let n = p.n as f64;
    (n - 2.0) * (6.0 - p.s) / (12.0 * (2.0 * n - 2.0 - p.s))
}

/// Lower bound `K(n,s)·(n−2)(6−s)/(12(2n−2−s))·Scal` on `B₀` for `n ≥ 4`.
pub fn b0_lower_bound(p: &Params, scalar_curvature: f64) -> f64 {
    k_opt(p) * curvature_factor(p) * scalar_curvature
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(n: usize, s: f64) -> Params {
        Params::new(n, s, 0.0).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(2, 0.5, 0.0).is_err());
        assert!(Params::new(3, 2.0, 0.0).is_err());
        assert!(Params::new(3, -0.1, 0.0).is_err());
        assert!(Params::new(3, 1.0, -1.0).is_err());
        assert!(Params::new(3, 1.0, f64::NAN).is_err());
        assert!(Params::new(3, 0.0, 0.0).is_ok());
    }

    #[test]
    fn critical_exponent_examples() {
        assert_eq!(critical_exponent(&params(3, 1.0)), 4.0);
        assert_eq!(critical_exponent(&params(4, 0.0)), 4.0);
        assert_relative_eq!(critical_exponent(&params(5, 0.5)), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn log_gamma_examples() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
        assert_relative_eq!(log_gamma(0.5).unwrap(), PI.sqrt().ln(), max_relative = 1e-14);
        assert_relative_eq!(log_gamma(5.0).unwrap(), 24f64.ln(), max_relative = 1e-14);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
    }

    #[test]
    fn log_gamma_recurrence() {
        for x in [0.5, 1.3, 7.7, 23.1] {
            let lhs = log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap() - x.ln();
            assert!(lhs.abs() <= 1e-11, "x = {x}: {lhs:e}");
        }
    }

    #[test]
    fn log_gamma_reflection() {
        for x in [0.1, 0.25, 0.3, 0.45] {
            let lhs = log_gamma(x).unwrap() + log_gamma(1.0 - x).unwrap();
            let rhs = (PI / (PI * x).sin()).ln();
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn unit_sphere_volume_examples() {
        assert_relative_eq!(unit_sphere_volume(2).unwrap(), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_volume(3).unwrap(), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_volume(4).unwrap(), 2.0 * PI * PI, max_relative = 1e-14);
        assert!(unit_sphere_volume(1).is_err());
    }

    #[test]
    fn bubble_scale_identity() {
        for (n, s) in [(3, 1.0), (4, 0.5), (6, 1.7), (5, 0.0)] {
            let p = params(n, s);
            let k = bubble_scale_constant(&p);
            let lhs = k.powf(2.0 - s) / k_opt(&p);
            assert_relative_eq!(lhs, ((n - 2) as f64) * (n as f64 - s), max_relative = 1e-12);
            assert_relative_eq!(k_opt(&p) * k_opt_inv(&p), 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn classical_instanton_scale_at_s_zero() {
        for n in 3..=8 {
            let p = params(n, 0.0);
            let classical = ((n * (n - 2)) as f64).sqrt() * k_opt(&p).sqrt();
            assert_relative_eq!(bubble_scale_constant(&p), classical, max_relative = 1e-13);
        }
    }
}
