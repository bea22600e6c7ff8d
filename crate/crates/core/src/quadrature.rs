//! Gauss rules on the unit interval and on the standard simplex.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre rule with `n` points on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule1D {
    assert!(n >= 1, "Gauss–Legendre order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule1D { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Gauss–Legendre rule with `n` points on `(lo, hi)`.
pub fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> Rule1D {
    let base = gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Rule1D {
        nodes: base.nodes.iter().map(|&y| mid + half * y).collect(),
        weights: base.weights.iter().map(|&w| half * w).collect(),
    }
}

/// Gauss–Jacobi rule for `∫₀¹ f(x) (1 − x)^α dx`, from the Golub–Welsch
/// eigenproblem.
pub fn gauss_jacobi_unit(n: usize, alpha: u32) -> Rule1D {
    if alpha == 0 {
        return gauss_legendre_on(n, 0.0, 1.0);
    }
    let a = alpha as f64;
    // recurrence for the weight (1 − y)^α on [-1, 1]
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a;
        jac[(k, k)] = if k == 0 {
            -a / (a + 2.0)
        } else {
            -a * a / (s * (s + 2.0))
        };
        if k + 1 < n {
            let k1 = kf + 1.0;
            let s1 = 2.0 * k1 + a;
            let b =
                (4.0 * k1 * (k1 + a) * k1 * (k1 + a) / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0))).sqrt();
            jac[(k, k + 1)] = b;
            jac[(k + 1, k)] = b;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mu0 = 2f64.powf(a + 1.0) / (a + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let scale = 2f64.powf(-a - 1.0);
    Rule1D {
        nodes: pairs.iter().map(|p| 0.5 * (1.0 + p.0)).collect(),
        weights: pairs.iter().map(|p| scale * p.1).collect(),
    }
}

/// Tensor-product rule on the simplex `{r_i > 0, Σ r_i = 1}` in `k` barycentric
/// variables, built from collapsed coordinates.
///
/// With `x ∈ (0,1)^{k−1}`, `r_1 = x_1`, `r_i = x_i Π_{j<i}(1 − x_j)` and the
/// last variable takes the remainder. The Jacobian `Π (1 − x_i)^{k−1−i}` is
/// absorbed into Gauss–Jacobi weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexRule {
    k: usize,
    order: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SimplexRule {
    /// Rule with `order` points per collapsed coordinate.
    pub fn new(k: usize, order: usize) -> Self {
        assert!(k >= 2, "simplex rules need k >= 2");
        assert!(order >= 1);
        let dims = k - 1;
        let rules: Vec<Rule1D> = (0..dims)
            .map(|i| gauss_jacobi_unit(order, (dims - 1 - i) as u32))
            .collect();
        let total = order.pow(dims as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims];
        for _ in 0..total {
            let mut r = vec![0.0; k];
            let mut rest = 1.0;
            let mut w = 1.0;
            for (i, rule) in rules.iter().enumerate() {
                let x = rule.nodes[idx[i]];
                w *= rule.weights[idx[i]];
                r[i] = rest * x;
                rest *= 1.0 - x;
            }
            r[k - 1] = rest;
            nodes.push(r);
            weights.push(w);
            for d in (0..dims).rev() {
                idx[d] += 1;
                if idx[d] < order {
                    break;
                }
                idx[d] = 0;
            }
        }
        Self {
            k,
            order,
            nodes,
            weights,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn describe(&self) -> String {
        format!(
            "collapsed Gauss-Jacobi, k={}, {} per axis",
            self.k, self.order
        )
    }
}

/// Settings for an integral over `(0, 1)` by Gauss–Legendre with order doubling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VRule {
    /// Starting number of nodes.
    pub order: usize,
    /// Largest order tried before giving up.
    pub max_order: usize,
    /// Relative change between successive orders accepted as converged.
    pub tol: f64,
    /// Integrate over `(0, ½)` and double, for integrands symmetric under `v ↔ 1 − v`.
    pub symmetric: bool,
}

impl Default for VRule {
    fn default() -> Self {
        Self {
            order: 16,
            max_order: 2048,
            tol: 1e-14,
            symmetric: false,
        }
    }
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adaptive {
    pub value: f64,
    /// `|I_{2N} − I_N|` at the last doubling, but no less than the rounding bound
    /// `N ε Σ|w_i f(x_i)|` of the final sum.
    pub error: f64,
    pub order: usize,
    pub converged: bool,
}

/// Integrates `f` over `(0, 1)` by doubling the Gauss–Legendre order until
/// successive values agree to `rule.tol` relative.
pub fn integrate_unit(rule: &VRule, f: impl Fn(f64) -> f64) -> Adaptive {
    let hi = if rule.symmetric { 0.5 } else { 1.0 };
    let factor = if rule.symmetric { 2.0 } else { 1.0 };
    let apply = |n: usize| {
        let r = gauss_legendre_on(n, 0.0, hi);
        let (mut sum, mut abs) = (0.0, 0.0);
        for (&x, &w) in r.nodes.iter().zip(&r.weights) {
            let term = w * f(x);
            sum += term;
            abs += term.abs();
        }
        (factor * sum, factor * abs * n as f64 * f64::EPSILON)
    };
    let mut n = rule.order.max(1);
    let mut prev = apply(n).0;
    loop {
        let next_n = 2 * n;
        let (next, rounding) = apply(next_n);
        let change = (next - prev).abs();
        let converged = change <= rule.tol * next.abs();
        if converged || next_n >= rule.max_order {
            return Adaptive {
                value: next,
                error: change.max(rounding),
                order: next_n,
                converged,
            };
        }
        prev = next;
        n = next_n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in 1..12 {
            let r = gauss_legendre(n);
            assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for p in 0..(2 * n) {
                let exact = if p % 2 == 0 {
                    2.0 / (p as f64 + 1.0)
                } else {
                    0.0
                };
                let got = r.integrate(|x| x.powi(p as i32));
                assert!((got - exact).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn legendre_high_order_nodes_sorted() {
        let r = gauss_legendre(200);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        let got = r.integrate(|x| (3.0 * x).exp());
        let exact = ((3.0f64).exp() - (-3.0f64).exp()) / 3.0;
        assert!((got - exact).abs() < 1e-13 * exact);
    }

    #[test]
    fn jacobi_moments() {
        // ∫₀¹ x^p (1-x)^α dx = p! α! / (p+α+1)!
        fn beta(p: u32, a: u32) -> f64 {
            let f = |m: u32| (1..=m).map(|i| i as f64).product::<f64>();
            f(p) * f(a) / f(p + a + 1)
        }
        for alpha in 0..4 {
            for n in 1..8 {
                let r = gauss_jacobi_unit(n, alpha);
                assert!(r.nodes.iter().all(|&x| x > 0.0 && x < 1.0));
                for p in 0..(2 * n as u32) {
                    let got = r.integrate(|x| x.powi(p as i32));
                    let exact = beta(p, alpha);
                    assert!(
                        (got - exact).abs() < 1e-14,
                        "alpha={alpha} n={n} p={p}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn simplex_volume_and_interior() {
        for k in 2..=5 {
            let rule = SimplexRule::new(k, 5);
            let vol: f64 = rule.weights().iter().sum();
            let fact: f64 = (1..k).map(|i| i as f64).product();
            assert!((vol - 1.0 / fact).abs() < 1e-14, "k={k}");
            for r in rule.nodes() {
                assert!(r.iter().all(|&x| x > 0.0));
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn simplex_monomials() {
        // Dirichlet moment: ∫ r_1^a r_2^b r_3^c dr = a! b! c! / (a+b+c+2)!
        let rule = SimplexRule::new(3, 6);
        let f = |m: i32| (1..=m).map(|i| i as f64).product::<f64>();
        for (a, b, c) in [(1, 0, 0), (0, 0, 2), (2, 1, 3), (0, 4, 1)] {
            let got: f64 = rule
                .nodes()
                .iter()
                .zip(rule.weights())
                .map(|(r, w)| w * r[0].powi(a) * r[1].powi(b) * r[2].powi(c))
                .sum();
            let exact = f(a) * f(b) * f(c) / f(a + b + c + 2);
            assert!((got - exact).abs() < 1e-15, "{a}{b}{c}");
        }
    }

    #[test]
    fn adaptive_symmetric_matches_full() {
        let f = |v: f64| (-(40.0 * v * (1.0 - v))).exp();
        let full = integrate_unit(&VRule::default(), f);
        let half = integrate_unit(
            &VRule {
                symmetric: true,
                ..VRule::default()
            },
            f,
        );
        assert!(full.converged && half.converged);
        assert!((full.value - half.value).abs() < 1e-14 * full.value);
    }
}
