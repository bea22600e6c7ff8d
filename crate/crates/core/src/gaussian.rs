//! Gaussian calculus on the simplex forms `Q_r(u)` that appear in the `W_k` analysis.
//!
//! Everything here is closed form: determinants, inverses and Gaussian moments.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::torus::TorusSpec;

/// Symmetric real matrix together with its quadratic form `u ↦ (Qu)·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
}

impl QuadraticForm {
    /// Accepts a matrix whose asymmetry is below `1e-14` (relative to its largest entry)
    /// and stores its symmetric part.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(invalid(
                "matrix",
                format!(
                    "expected a non-empty square matrix, got {}x{}",
                    matrix.nrows(),
                    matrix.ncols()
                ),
            ));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(invalid("matrix", "entries must be finite"));
        }
        let scale = matrix.amax().max(1.0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-14 * scale {
            return Err(invalid(
                "matrix",
                format!("asymmetry {asym:.3e} exceeds 1e-14"),
            ));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { matrix: sym })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        (&self.matrix * u).dot(u)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Ratio of extreme eigenvalues; infinite unless positive definite.
    pub fn condition(&self) -> f64 {
        let ev = self.eigenvalues();
        if ev[0] <= 0.0 {
            f64::INFINITY
        } else {
            ev[ev.len() - 1] / ev[0]
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.matrix.clone().cholesky().is_some()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.matrix
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::NotPositiveDefinite)
    }
}

/// `Q_r(u) = r_k^{-1}|u_k|² + r_{k-1}^{-1}|u_k − u_{k-1}|² + … + r_2^{-1}|u_3 − u_2|² + r_1^{-1}|u_2|²`
/// on `u = (u_2, …, u_k) ∈ R^{n(k-1)}`, coordinates ordered block by block.
pub fn simplex_form(r: &[f64], n: usize) -> Result<QuadraticForm> {
    let k = r.len();
    if k < 2 {
        return Err(invalid("r", "need at least two simplex coordinates"));
    }
    if !(1..=3).contains(&n) {
        return Err(invalid(
            "n",
            format!("dimension must be 1, 2 or 3, got {n}"),
        ));
    }
    if r.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(invalid("r", "every coordinate must be strictly positive"));
    }
    let total: f64 = r.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid("r", format!("coordinates sum to {total}, not 1")));
    }
    // scalar chain on blocks 0..k-2, where block b holds u_{b+2}
    let m = k - 1;
    let mut chain = DMatrix::<f64>::zeros(m, m);
    chain[(0, 0)] += 1.0 / r[0];
    chain[(m - 1, m - 1)] += 1.0 / r[k - 1];
    for b in 0..m - 1 {
        // r_{b+2}^{-1} |u_{b+3} − u_{b+2}|²
        let w = 1.0 / r[b + 1];
        chain[(b, b)] += w;
        chain[(b + 1, b + 1)] += w;
        chain[(b, b + 1)] -= w;
        chain[(b + 1, b)] -= w;
    }
    QuadraticForm::new(chain.kronecker(&DMatrix::<f64>::identity(n, n)))
}

/// Relative defect of
/// `B(u) e^{-Q(u)/4t} = (4t² B'(∂_u) + 2t tr(Q^{-1}B)) e^{-Q(u)/4t}`, `B' = Q^{-1} B Q^{-1}`.
///
/// The right side applies the second-derivative formula entry by entry. The common
/// factor `e^{-Q(u)/4t} > 0` cancels from the ratio and is left out so that large
/// `Q(u)/t` cannot underflow both sides to zero. The denominator is
/// `|LHS| + |RHS| + Σ|RHS terms|`; it is zero only when every term vanishes, and the
/// residual is then zero.
pub fn quadexp_identity_residual(
    b: &QuadraticForm,
    q: &QuadraticForm,
    t: f64,
    u: &DVector<f64>,
) -> Result<f64> {
    let d = q.dim();
    if b.dim() != d || u.len() != d {
        return Err(invalid(
            "u",
            format!("dimensions differ: B {}, Q {d}, u {}", b.dim(), u.len()),
        ));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", format!("time must be positive, got {t}")));
    }
    let qinv = q.inverse()?;
    let lhs = b.eval(u);
    let bp = &qinv * b.matrix() * &qinv;
    let qu = q.matrix() * u;
    // 4t² Σ_ij B'_ij ((Qu)_i (Qu)_j / 4t² − Q_ij / 2t)
    let mut second_order = 0.0;
    let mut first_order = 0.0;
    for i in 0..d {
        for j in 0..d {
            second_order += bp[(i, j)] * qu[i] * qu[j];
            first_order -= 2.0 * t * bp[(i, j)] * q.matrix()[(i, j)];
        }
    }
    let trace_term = 2.0 * t * (&qinv * b.matrix()).trace();
    let rhs = second_order + first_order + trace_term;
    let floor = second_order.abs() + first_order.abs() + trace_term.abs();
    let denom = lhs.abs() + rhs.abs() + floor;
    Ok(if denom == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / denom
    })
}

/// `E|u_i u_l| |z|^{2j}`-type moments for `u = √(2t) Q^{-1/2} z`, `z` standard normal in `R^N`.
///
/// Returns `(4πt)^{-N/2} (Π r_j^{-n/2}) ∫ |u^α| Q(u)^j e^{-Q(u)/4t} du`.
fn moment_integral(
    q: &QuadraticForm,
    r: &[f64],
    n: usize,
    t: f64,
    j: u32,
    alpha: &[usize],
) -> Result<f64> {
    let dim = q.dim();
    let cov = q.inverse()?;
    let nn = dim as f64;
    // ∫ e^{-Q(u)/4t} du = (4πt)^{N/2} det(Q)^{-1/2}
    let prefactor = r
        .iter()
        .map(|&x| x.powf(-(n as f64) / 2.0))
        .product::<f64>()
        / q.determinant().sqrt();
    let scale = (2.0 * t).powi(j as i32) * (2.0 * t).powf(alpha.len() as f64 / 2.0);
    let rising = |start: f64| {
        (1..=j)
            .map(|i| nn + 2.0 * i as f64 - start)
            .product::<f64>()
    };
    let moment = match *alpha {
        [] => rising(2.0),
        // a·z = |a| z_1 and E|z_1| |z|^{2j} = √(2/π) Π (N + 2i − 1)
        [i] => cov[(i, i)].sqrt() * (2.0 / PI).sqrt() * rising(1.0),
        [i, l] => {
            // polar coordinates in the plane of a = Q^{-1/2}e_i, b = Q^{-1/2}e_l:
            // E_θ|cos θ cos(θ − φ)| = (c asin c + √(1 − c²)) / π, E ρ²(ρ² + R)^j = 2 Π (N + 2i)
            let aa = cov[(i, i)];
            let bb = cov[(l, l)];
            let c = (cov[(i, l)] / (aa * bb).sqrt()).clamp(-1.0, 1.0);
            let angular = (c * c.asin() + (1.0 - c * c).sqrt()) / PI;
            (aa * bb).sqrt() * angular * 2.0 * rising(0.0)
        }
        _ => return Err(invalid("alpha", "only |α| ≤ 2 is supported")),
    };
    Ok(prefactor * scale * moment)
}

/// Summary of `sup_r LHS / t^{j+|α|/2}` over sampled interior simplex points.
#[derive(Debug, Clone, Serialize)]
pub struct ProdBound {
    pub sup: f64,
    pub median: f64,
    pub samples: usize,
    /// Sampled points discarded for having a coordinate below `floor`.
    pub rejected: usize,
    pub floor: f64,
    /// Point at which the sup is attained.
    pub argmax: Vec<f64>,
}

/// Lowest simplex coordinate a sampled point may have.
pub const SIMPLEX_FLOOR: f64 = 1e-4;

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    let step = inv;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv *= step;
    }
    out
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Halton points of the open `(k−1)`-simplex, mapped from the cube by sorted spacings.
pub fn simplex_points(k: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    if !(2..=PRIMES.len() + 1).contains(&k) {
        return Err(invalid(
            "k",
            format!("simplex size must be in 2..={}, got {k}", PRIMES.len() + 1),
        ));
    }
    Ok((1..=count as u64)
        .map(|i| {
            let mut cuts: Vec<f64> = PRIMES[..k - 1]
                .iter()
                .map(|&p| radical_inverse(i, p))
                .collect();
            cuts.sort_by(f64::total_cmp);
            let mut r = Vec::with_capacity(k);
            let mut prev = 0.0;
            for c in cuts {
                r.push(c - prev);
                prev = c;
            }
            r.push(1.0 - prev);
            r
        })
        .collect())
}

/// Ratio `LHS / t^{j+|α|/2}` for one simplex point. `alpha` lists the coordinates of `u`
/// appearing in the monomial, with repetition.
pub fn prodbound_ratio(
    spec: &TorusSpec,
    r: &[f64],
    t: f64,
    j: u32,
    alpha: &[usize],
) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", format!("time must be positive, got {t}")));
    }
    if j > 2 {
        return Err(invalid("j", format!("j ≤ 2 required, got {j}")));
    }
    let n = spec.dim();
    let q = simplex_form(r, n)?;
    if let Some(&bad) = alpha.iter().find(|&&i| i >= q.dim()) {
        return Err(invalid(
            "alpha",
            format!("coordinate {bad} outside 0..{}", q.dim()),
        ));
    }
    let lhs = moment_integral(&q, r, n, t, j, alpha)?;
    Ok(lhs / t.powf(j as f64 + alpha.len() as f64 / 2.0))
}

/// Empirical sup over `samples` Halton points of [`prodbound_ratio`].
pub fn prodbound_sup(
    spec: &TorusSpec,
    k: usize,
    t: f64,
    j: u32,
    alpha: &[usize],
    samples: usize,
) -> Result<ProdBound> {
    if !(2..=4).contains(&k) {
        return Err(invalid("k", format!("k must be in 2..=4, got {k}")));
    }
    if alpha.len() > 2 {
        return Err(invalid("alpha", "only |α| ≤ 2 is supported"));
    }
    let mut ratios = Vec::with_capacity(samples);
    let mut rejected = 0;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for r in simplex_points(k, samples)? {
        if r.iter().any(|&x| x < SIMPLEX_FLOOR) {
            rejected += 1;
            continue;
        }
        // renormalize away rounding in the spacings
        let total: f64 = r.iter().sum();
        let r: Vec<f64> = r.iter().map(|x| x / total).collect();
        let v = prodbound_ratio(spec, &r, t, j, alpha)?;
        if v > best.0 {
            best = (v, r);
        }
        ratios.push(v);
    }
    if ratios.is_empty() {
        return Err(Error::InsufficientSamples(
            "no simplex sample above the floor".into(),
        ));
    }
    ratios.sort_by(f64::total_cmp);
    Ok(ProdBound {
        sup: best.0,
        median: ratios[ratios.len() / 2],
        samples: ratios.len(),
        rejected,
        floor: SIMPLEX_FLOOR,
        argmax: best.1,
    })
}

/// Smallest eigenvalue of `Q_r` over sampled `r` with every coordinate at least `floor`.
pub fn simplex_coercivity(k: usize, n: usize, samples: usize, floor: f64) -> Result<f64> {
    let mut lowest = f64::INFINITY;
    for r in simplex_points(k, samples)? {
        if r.iter().any(|&x| x < floor) {
            continue;
        }
        let total: f64 = r.iter().sum();
        let r: Vec<f64> = r.iter().map(|x| x / total).collect();
        lowest = lowest.min(simplex_form(&r, n)?.min_eigenvalue());
    }
    if lowest.is_finite() {
        Ok(lowest)
    } else {
        Err(Error::InsufficientSamples(format!(
            "no simplex sample above floor {floor}"
        )))
    }
}
