//! The constrained quotient `I_α`, the Euler–Lagrange residual and the
//! inequality verdict.

use crate::constants::Params;
use crate::error::{Error, Result};
use crate::radial::{dirichlet_energy, l2_norm, weighted_norm, Measure, RadialFunction, RadialGrid};

/// Components of `I_α(u) = (∫|∇u|² + α∫u²) / ‖u‖²_{2⋆(s),s}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuotientValue {
    pub energy: f64,
    pub mass2: f64,
    pub constraint_norm: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl QuotientValue {
    fn assemble(energy: f64, mass2: f64, constraint_norm: f64, alpha: f64) -> Result<Self> {
        if constraint_norm == 0.0 {
            return Err(Error::ZeroFunction);
        }
        let lambda = (energy + alpha * mass2) / (constraint_norm * constraint_norm);
        Ok(QuotientValue {
            energy,
            mass2,
            constraint_norm,
            alpha,
            lambda,
        })
    }
}

fn check_params(grid: &RadialGrid, p: &Params) -> Result<()> {
    if grid.dim() != p.n() || grid.s() != p.s() {
        return Err(Error::InvalidParameter(format!(
            "grid built for (n={}, s={}) used with (n={}, s={})",
            grid.dim(),
            grid.s(),
            p.n(),
            p.s()
        )));
    }
    Ok(())
}

/// `I_α(u)` with `α = p.alpha()`, the denominator taken on `u` itself.
pub fn quotient(u: &RadialFunction, p: &Params) -> Result<QuotientValue> {
    check_params(u.grid(), p)?;
    let norm = weighted_norm(u, p.critical_exponent());
    let mass = l2_norm(u);
    QuotientValue::assemble(dirichlet_energy(u), mass * mass, norm, p.alpha())
}

/// `I_α` of an analytic profile `f` (with derivative `df`) over the chart of
/// `grid`, integrated with a `points`-point rule per grid cell rather than on
/// a nodal interpolant. Used where the signal sits far below the
/// interpolation error.
pub fn profile_quotient(
    grid: &RadialGrid,
    p: &Params,
    points: usize,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
) -> Result<QuotientValue> {
    check_params(grid, p)?;
    let q = p.critical_exponent();
    let (lo, hi) = (0.0, grid.r_max());
    let omega = grid.omega();
    let energy = omega * grid.integrate_profile(Measure::Volume, lo, hi, points, |r| df(r).powi(2));
    let mass2 = omega * grid.integrate_profile(Measure::Volume, lo, hi, points, |r| f(r).powi(2));
    let norm_q = omega * grid.integrate_profile(Measure::Singular, lo, hi, points, |r| f(r).abs().powf(q));
    QuotientValue::assemble(energy, mass2, norm_q.powf(1.0 / q), p.alpha())
}

/// Max-norm of the Euler–Lagrange residual over interior nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElResidual {
    /// `max |R_i| / (1 + u_i)`
    pub weighted: f64,
    /// `max |R_i|`
    pub raw: f64,
}

/// Residual of `Δ_g u + αu = λ u^{2⋆(s)−1} r^{−s}` with `α = p.alpha()`.
///
/// Both sides are tested against the hat function of each interior node and
/// divided by its volume, so for a smooth `u` on a smoothly graded grid the
/// nodal value is the strong residual up to `O(h²)`, and for the discrete
/// minimizer it is exactly the stopping error of the iteration.
pub fn el_residual(u: &RadialFunction, p: &Params, lambda: f64) -> Result<ElResidual> {
    el_residual_window(u, p, lambda, 0.0, f64::INFINITY)
}

/// [`el_residual`] restricted to nodes with `lo ≤ r ≤ hi`.
pub fn el_residual_window(u: &RadialFunction, p: &Params, lambda: f64, lo: f64, hi: f64) -> Result<ElResidual> {
    let grid = u.grid();
    check_params(grid, p)?;
    let values = u.values();
    let interior = grid.count() - 1;
    if let Some(node) = values[..interior].iter().position(|&v| v <= 0.0) {
        return Err(Error::NonPositive {
            node,
            value: values[node],
        });
    }
    let exponent = p.critical_exponent() - 1.0;
    let lhs = grid.apply_operator(values, p.alpha());
    let rhs = grid.singular_load(values, |v| v.max(0.0).powf(exponent));
    let weights = grid.volume_weights();
    let omega = grid.omega();
    let mut weighted: f64 = 0.0;
    let mut raw: f64 = 0.0;
    for (i, &r) in grid.nodes()[..interior].iter().enumerate() {
        if r < lo || r > hi {
            continue;
        }
        let res = ((lhs[i] - lambda * rhs[i]) / (omega * weights[i])).abs();
        raw = raw.max(res);
        weighted = weighted.max(res / (1.0 + values[i]));
    }
    Ok(ElResidual { weighted, raw })
}

/// Outcome of testing `‖u‖²_{2⋆(s),s} ≤ A‖∇u‖² + B‖u‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityVerdict {
    /// `A·energy + B·mass2 − ‖u‖²_{2⋆(s),s}`
    pub margin: f64,
    pub holds: bool,
}

pub fn inequality_holds(u: &RadialFunction, p: &Params, a: f64, b: f64) -> InequalityVerdict {
    let norm = weighted_norm(u, p.critical_exponent());
    let mass = l2_norm(u);
    let margin = a * dirichlet_energy(u) + b * mass * mass - norm * norm;
    InequalityVerdict {
        margin,
        holds: margin >= 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::BubbleProfile;
    use crate::constants::{bubble_scale_constant, k_opt, k_opt_inv};
    use crate::geometry::ManifoldModel;
    use crate::radial::build_grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn flat_bubble(n: usize, s: f64, width: f64, count: usize) -> (Params, RadialFunction) {
        let p = Params::new(n, s, 0.0).unwrap();
        let k = bubble_scale_constant(&p);
        let m = ManifoldModel::flat_disk(n, width * k).unwrap();
        let g = Arc::new(build_grid(&m, &p, count, 3.0).unwrap());
        let b = BubbleProfile::unit(p);
        (p, RadialFunction::from_fn(g, |r| b.eval(r), false).unwrap())
    }

    #[test]
    fn bubble_quotient_is_optimal_constant() {
        for (n, s) in [(4, 1.0), (5, 0.5), (6, 0.0)] {
            let (p, u) = flat_bubble(n, s, 1e4, 4000);
            let q = quotient(&u, &p).unwrap();
            assert!((q.lambda / k_opt_inv(&p) - 1.0).abs() < 1e-3, "{n} {s} {q:?}");
        }
    }

    #[test]
    fn profile_quotient_resolves_the_bubble() {
        let p = Params::new(5, 1.0, 0.0).unwrap();
        let k = bubble_scale_constant(&p);
        let m = ManifoldModel::flat_disk(5, 1e5 * k).unwrap();
        let g = build_grid(&m, &p, 400, 4.0).unwrap();
        let b = BubbleProfile::unit(p);
        let q = profile_quotient(&g, &p, 20, |r| b.eval(r), |r| b.derivative(r)).unwrap();
        assert!((q.lambda / k_opt_inv(&p) - 1.0).abs() < 1e-8, "{q:?}");
    }

    #[test]
    fn zero_function_is_rejected() {
        let (p, u) = flat_bubble(4, 1.0, 50.0, 64);
        let zero = u.scaled(0.0);
        assert!(matches!(quotient(&zero, &p), Err(Error::ZeroFunction)));
        let v = inequality_holds(&zero, &p, 1.0, 1.0);
        assert_eq!(v.margin, 0.0);
        assert!(v.holds);
    }

    #[test]
    fn mismatched_params_are_rejected() {
        let (_, u) = flat_bubble(4, 1.0, 50.0, 64);
        let other = Params::new(4, 0.5, 0.0).unwrap();
        assert!(quotient(&u, &other).is_err());
    }

    #[test]
    fn inequality_examples() {
        let (p, u) = flat_bubble(4, 1.0, 1e4, 4000);
        let k = k_opt(&p);
        assert!(inequality_holds(&u, &p, k + 0.1, 0.0).holds);
        let half = inequality_holds(&u, &p, k / 2.0, 0.0);
        assert!(!half.holds && half.margin < 0.0);
    }

    #[test]
    fn bubble_residual_converges() {
        let p = Params::new(4, 1.0, 0.0).unwrap();
        let lambda = k_opt_inv(&p);
        let k = bubble_scale_constant(&p);
        let window = (0.2 * k, 5.0 * k);
        let mut prev = f64::NAN;
        for count in [400, 800, 1600] {
            let (_, u) = flat_bubble(4, 1.0, 1e3, count);
            let res = el_residual_window(&u, &p, lambda, window.0, window.1).unwrap();
            let wrong = el_residual_window(&u, &p, 1.05 * lambda, window.0, window.1).unwrap();
            assert!(wrong.weighted > 1e-3, "{wrong:?}");
            if prev.is_finite() {
                assert!(prev / res.weighted > 3.0, "{prev} {res:?}");
            }
            prev = res.weighted;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn nonpositive_values_are_rejected() {
        let (p, u) = flat_bubble(4, 1.0, 50.0, 64);
        let mut v = u.values().to_vec();
        v[5] = -1e-3;
        let bad = RadialFunction::new(u.grid().clone(), v, false).unwrap();
        assert!(matches!(el_residual(&bad, &p, 1.0), Err(Error::NonPositive { node: 5, .. })));
    }

    proptest! {
        #[test]
        fn quotient_is_scale_invariant(c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
            let (p, u) = flat_bubble(5, 0.5, 30.0, 64);
            let p = p.with_alpha(2.0).unwrap();
            let a = quotient(&u, &p).unwrap().lambda;
            let b = quotient(&u.scaled(c), &p).unwrap().lambda;
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn quotient_is_affine_in_alpha(a1 in 0.0f64..10.0, da in 1e-3f64..10.0) {
            let (p, u) = flat_bubble(4, 1.0, 30.0, 64);
            let q1 = quotient(&u, &p.with_alpha(a1).unwrap()).unwrap();
            let q2 = quotient(&u, &p.with_alpha(a1 + da).unwrap()).unwrap();
            prop_assert!(q2.lambda > q1.lambda);
            let slope = q1.mass2 / q1.constraint_norm.powi(2);
            assert_relative_eq!(q2.lambda - q1.lambda, slope * da, max_relative = 1e-9);
        }
    }
}
