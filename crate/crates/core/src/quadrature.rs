//! Gauss–Legendre rules on `[-1, 1]`.

use std::f64::consts::PI;

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes in increasing order.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "Gauss-Legendre rule needs at least one point");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let half = m.div_ceil(2);
        for i in 0..half {
            // Tricomi initial guess, then Newton on P_m.
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(m, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Points mapped to `[0, 1]` with weights summing to one.
    pub fn unit_interval(&self) -> (Vec<f64>, Vec<f64>) {
        let t = self.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let w = self.weights.iter().map(|w| 0.5 * w).collect();
        (t, w)
    }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for m in [1, 2, 5, 8, 10, 20, 33] {
            let gl = GaussLegendre::new(m);
            let total: f64 = gl.weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-14, "m={m}: {total}");
        }
    }

    #[test]
    fn exact_on_polynomials_of_degree_2m_minus_1() {
        let gl = GaussLegendre::new(6);
        for deg in 0..12 {
            let exact = (3f64.powi(deg + 1) - 1.0) / (deg + 1) as f64;
            let got = gl.integrate(1.0, 3.0, |x| x.powi(deg));
            assert!((got - exact).abs() < 1e-12 * exact, "deg {deg}");
        }
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let gl = GaussLegendre::new(9);
        for w in gl.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        for i in 0..9 {
            assert!((gl.nodes[i] + gl.nodes[8 - i]).abs() < 1e-15);
        }
    }
}
