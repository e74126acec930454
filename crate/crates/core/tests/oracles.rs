use std::f64::consts::PI;

use hslab::constants::{k_opt, log_gamma, unit_sphere_volume, Params};

/// Stirling series for ln Γ(x), accurate to ~1e-16 relative for x ≥ 10.
fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

#[test]
fn log_gamma_matches_stirling() {
    for x in [10.0, 12.5, 31.7, 100.0, 1e3, 1e5] {
        let a = log_gamma(x).unwrap();
        assert!((a - stirling(x)).abs() <= 1e-13 * a.abs(), "x = {x}: {a} vs {}", stirling(x));
    }
}

#[test]
fn log_gamma_matches_factorials() {
    let mut fact = 1.0f64;
    for m in 1..=20u32 {
        assert!((log_gamma(m as f64).unwrap() - fact.ln()).abs() <= 1e-13 * fact.ln().max(1.0));
        fact *= m as f64;
    }
    // Γ(m + 1/2) = (2m)! √π / (4^m m!)
    let mut value = PI.sqrt();
    for m in 0..15 {
        let x = m as f64 + 0.5;
        assert!((log_gamma(x).unwrap() - value.ln()).abs() <= 1e-13 * value.ln().abs().max(1.0));
        value *= x;
    }
}

#[test]
fn small_arguments_use_reflection() {
    for x in [1e-8, 0.01, 0.25, 0.49] {
        let lhs = log_gamma(x).unwrap() + log_gamma(1.0 - x).unwrap();
        let rhs = (PI / (PI * x).sin()).ln();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "x = {x}");
    }
}

#[test]
fn sphere_volumes() {
    assert!((unit_sphere_volume(2).unwrap() - 2.0 * PI).abs() < 1e-14);
    assert!((unit_sphere_volume(3).unwrap() - 4.0 * PI).abs() < 1e-13);
    assert!((unit_sphere_volume(4).unwrap() - 2.0 * PI * PI).abs() < 1e-13);
    assert!((unit_sphere_volume(5).unwrap() - 8.0 * PI * PI / 3.0).abs() < 1e-13);
}

#[test]
fn sobolev_constant_in_dimension_three() {
    // K(3, 0) = 4 / (3 (2π²)^{2/3})
    let p = Params::new(3, 0.0, 0.0).unwrap();
    let expected = 4.0 / (3.0 * (2.0 * PI * PI).powf(2.0 / 3.0));
    assert!((k_opt(&p) / expected - 1.0).abs() < 1e-13);
}
