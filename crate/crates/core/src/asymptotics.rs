//! Small-time expansion `(4πt)^{n/2} τ(t) = c₁t + … + c_{m+1}t^{m+1} + r_{m+2}(t) t^{m+2}`
//! of a relative trace `τ`, fitted from samples, and the closed-form coefficients
//! it is compared against.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::potential::FourierPotential;
use crate::sample::TraceSample;
use crate::torus::TorusSpec;

/// Fits with a larger condition estimate are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `(t, (4πt)^{n/2} · value)`.
pub fn normalize(spec: &TorusSpec, sample: &TraceSample) -> (f64, f64) {
    normalize_value(spec, sample.t, sample.value)
}

pub fn normalize_value(spec: &TorusSpec, t: f64, value: f64) -> (f64, f64) {
    (t, (4.0 * PI * t).powf(spec.dim() as f64 / 2.0) * value)
}

/// Row weights of the least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `t^{-(m+2)}`: the weighted residual is the remainder `r_{m+2}`.
    Remainder,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub weighting: Weighting,
    /// Minimum span of the sample times, in decades.
    pub min_decades: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Remainder,
            min_decades: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Ratio of extreme singular values of the column-scaled design matrix.
    pub condition: f64,
    pub samples: usize,
    pub decades: f64,
    /// Root mean square of the weighted residuals.
    pub residual_rms: f64,
    /// Largest `|g − Σc_k t^k − r t^{m+2}|` relative to `|g|`, a definitional check.
    pub reconstruction_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub m: usize,
    /// `c₁ … c_{m+1}`.
    pub coefficients: Vec<f64>,
    /// One-sigma errors from the residual scatter.
    pub standard_errors: Vec<f64>,
    /// Largest coefficient shift a remainder of size `remainder_sup` can induce:
    /// `Σ_i |P_{ki}| · sup|r|` with `P` the weighted least-squares solution map.
    pub truncation_bounds: Vec<f64>,
    /// `|c_k − c_k'|` with `c'` refitted at order `m + 1` on the same samples; zero
    /// when that refit is impossible.
    pub order_shifts: Vec<f64>,
    /// `(t_i, r_{m+2}(t_i))`.
    pub remainder_samples: Vec<(f64, f64)>,
    pub remainder_sup: f64,
    pub diagnostics: FitDiagnostics,
    influence: Vec<Vec<f64>>,
}

impl ExpansionFit {
    /// `c_k`, one-based.
    pub fn coefficient(&self, k: usize) -> f64 {
        self.coefficients[k - 1]
    }

    pub fn standard_error(&self, k: usize) -> f64 {
        self.standard_errors[k - 1]
    }

    /// Largest change of `c_k` when each remainder sample `i` moves by at most `delta[i]`.
    pub fn coefficient_bound(&self, k: usize, delta: &[f64]) -> f64 {
        self.influence[k - 1]
            .iter()
            .zip(delta)
            .map(|(p, d)| p * d)
            .sum()
    }

    /// Standard error, truncation bound and order shift of `c_k`.
    pub fn error_bar(&self, k: usize) -> f64 {
        self.standard_errors[k - 1] + self.truncation_bounds[k - 1] + self.order_shifts[k - 1]
    }

    /// `Σ c_k t^k`.
    pub fn polynomial(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c * t.powi(i as i32 + 1))
            .sum()
    }
}

/// Least-squares fit of `g(t) ≈ Σ_{k=1}^{m+1} c_k t^k`.
///
/// The remainder left by the fit has already absorbed part of the omitted orders,
/// so the error bar also carries the shift of each coefficient under a refit at
/// order `m + 1`.
pub fn fit_expansion(
    samples: &[(f64, f64)],
    m: usize,
    options: FitOptions,
) -> Result<ExpansionFit> {
    let mut fit = fit_at_order(samples, m, options)?;
    if let Ok(next) = fit_at_order(samples, m + 1, options) {
        fit.order_shifts = fit
            .coefficients
            .iter()
            .zip(&next.coefficients)
            .map(|(a, b)| (a - b).abs())
            .collect();
    }
    Ok(fit)
}

fn fit_at_order(samples: &[(f64, f64)], m: usize, options: FitOptions) -> Result<ExpansionFit> {
    let p = m + 1;
    let need = 2 * (m + 2);
    if samples.len() < need {
        return Err(Error::InsufficientSamples(format!(
            "order m = {m} needs at least {need} samples, got {}",
            samples.len()
        )));
    }
    if let Some(&(t, _)) = samples.iter().find(|(t, _)| !(*t > 0.0 && *t <= 1.0)) {
        return Err(invalid(
            "samples",
            format!("sample time {t} outside (0, 1]"),
        ));
    }
    let t_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let t_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let decades = (t_max / t_min).log10();
    if decades + 1e-9 < options.min_decades {
        return Err(Error::InsufficientSamples(format!(
            "sample times span {decades:.2} decades, at least {} required",
            options.min_decades
        )));
    }
    let rows = samples.len();
    let power = (m + 2) as i32;
    let weight = |t: f64| match options.weighting {
        Weighting::Remainder => t.powi(-power),
        Weighting::Uniform => 1.0,
    };
    let mut a = DMatrix::<f64>::zeros(rows, p);
    let mut b = DVector::<f64>::zeros(rows);
    for (i, &(t, g)) in samples.iter().enumerate() {
        let w = weight(t);
        for j in 0..p {
            a[(i, j)] = w * t.powi(j as i32 + 1);
        }
        b[i] = w * g;
    }
    let norms: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            a.column_mut(j).scale_mut(1.0 / nj);
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            cond: condition,
            limit: CONDITION_LIMIT,
        });
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Parse(format!("least-squares solve failed: {e}")))?;
    let coefficients: Vec<f64> = (0..p).map(|j| x[j] / norms[j]).collect();

    let mut remainder_samples = Vec::with_capacity(rows);
    let mut weighted_sq = 0.0;
    let mut reconstruction_error: f64 = 0.0;
    for &(t, g) in samples {
        let poly: f64 = coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c * t.powi(i as i32 + 1))
            .sum();
        let tp = t.powi(power);
        let r = (g - poly) / tp;
        remainder_samples.push((t, r));
        let wr = weight(t) * (g - poly);
        weighted_sq += wr * wr;
        let back = poly + r * tp;
        let scale = g.abs().max(poly.abs()).max(f64::MIN_POSITIVE);
        reconstruction_error = reconstruction_error.max((back - g).abs() / scale);
    }
    let remainder_sup = remainder_samples
        .iter()
        .map(|r| r.1.abs())
        .fold(0.0, f64::max);
    let dof = (rows - p).max(1) as f64;
    let sigma2 = weighted_sq / dof;
    // cov(x_scaled) = σ² V Σ^{-2} Vᵀ
    let vt = svd.v_t.as_ref().expect("requested V");
    let standard_errors = (0..p)
        .map(|j| {
            let var: f64 = (0..svd.singular_values.len())
                .map(|s| (vt[(s, j)] / svd.singular_values[s]).powi(2))
                .sum();
            (sigma2 * var).sqrt() / norms[j]
        })
        .collect();
    // P = V Σ^{-1} Uᵀ, rows rescaled to unscaled coefficients
    let u = svd.u.as_ref().expect("requested U");
    let influence: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..rows)
                .map(|i| {
                    let pji: f64 = (0..svd.singular_values.len())
                        .map(|s| vt[(s, j)] * u[(i, s)] / svd.singular_values[s])
                        .sum();
                    pji.abs() / norms[j]
                })
                .collect()
        })
        .collect();
    let truncation_bounds = influence
        .iter()
        .map(|row| row.iter().sum::<f64>() * remainder_sup)
        .collect();
    Ok(ExpansionFit {
        m,
        coefficients,
        standard_errors,
        truncation_bounds,
        order_shifts: vec![0.0; p],
        influence,
        remainder_samples,
        remainder_sup,
        diagnostics: FitDiagnostics {
            condition,
            samples: rows,
            decades,
            residual_rms: (weighted_sq / rows as f64).sqrt(),
            reconstruction_error,
        },
    })
}

/// `c₁ = −∫V = −Lⁿ v₀`.
pub fn c1_oracle(v: &FourierPotential) -> f64 {
    -v.integral()
}

/// Contribution of `W₂` to `c_{2+k}`: `½ (−1)^k k!/(2k+1)! Σ_ξ ρ_ξ^k |b_ξ|²`.
pub fn w2_coefficient_oracle(v: &FourierPotential, k: u32) -> f64 {
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let kf: f64 = (1..=k).map(|i| i as f64).product();
    let f2: f64 = (1..=2 * k + 1).map(|i| i as f64).product();
    0.5 * sign * kf / f2 * v.moment_sum(k)
}

/// A limit `h(0)` extrapolated from samples on a geometric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    /// Difference between the last two extrapolation levels.
    pub error_estimate: f64,
    pub levels: usize,
}

/// Richardson extrapolation of `h(t) = h₀ + h₁ t^{p₁} + h₂ t^{p₂} + …` to `t = 0`.
///
/// `orders` lists the exponents to eliminate; when empty, `1, 2, 3, …` are used.
/// Sample times must form a geometric sequence in either order.
pub fn richardson_limit(samples: &[(f64, f64)], orders: &[f64]) -> Result<Extrapolation> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples(
            "Richardson extrapolation needs two samples".into(),
        ));
    }
    let mut pts: Vec<(f64, f64)> = samples.to_vec();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let ratios: Vec<f64> = pts.windows(2).map(|w| w[1].0 / w[0].0).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    if !(lo > 0.0 && hi < 1.0) || (hi - lo) > 1e-9 * hi {
        return Err(Error::NonGeometricGrid {
            min_ratio: lo,
            max_ratio: hi,
        });
    }
    let q = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let exps: Vec<f64> = if orders.is_empty() {
        (1..pts.len()).map(|i| i as f64).collect()
    } else {
        orders.to_vec()
    };
    let levels = pts.len().min(exps.len() + 1);
    // table[i] holds level j for samples i..; rebuilt in place
    let mut col: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mut prev_best = *col.last().unwrap();
    let mut best = prev_best;
    for j in 1..levels {
        let f = q.powf(exps[j - 1]);
        let next: Vec<f64> = (1..col.len())
            .map(|i| (col[i] - f * col[i - 1]) / (1.0 - f))
            .collect();
        prev_best = best;
        best = *next.last().unwrap();
        col = next;
    }
    Ok(Extrapolation {
        value: best,
        error_estimate: (best - prev_best).abs(),
        levels,
    })
}

/// `n` times `t_max · q^i` with `q = (t_min/t_max)^{1/(n−1)}`, ascending.
pub fn geometric_grid(t_min: f64, t_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![t_min];
    }
    let ratio = (t_max / t_min).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                t_max
            } else {
                t_min * (ratio * i as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Frequency;
    use num_complex::Complex64;

    fn spec1() -> TorusSpec {
        TorusSpec::standard(1).unwrap()
    }

    #[test]
    fn normalize_unit_prefactor() {
        let (t, g) = normalize_value(&spec1(), 1.0 / (4.0 * PI), 7.0);
        assert!((t - 1.0 / (4.0 * PI)).abs() < 1e-18);
        assert!((g - 7.0).abs() < 1e-14);
        assert_eq!(normalize_value(&spec1(), 0.3, 0.0).1, 0.0);
    }

    #[test]
    fn polynomial_recovery() {
        let ts = geometric_grid(1e-2, 1.0, 40);
        let data: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 3.0 * t - 5.0 * t * t)).collect();
        let fit = fit_expansion(&data, 1, FitOptions::default()).unwrap();
        assert!((fit.coefficient(1) - 3.0).abs() < 1e-10);
        assert!((fit.coefficient(2) + 5.0).abs() < 1e-9);
        assert!(fit.remainder_sup < 1e-10);
        assert!(fit.diagnostics.reconstruction_error < 1e-12);
    }

    #[test]
    fn shift_law_coefficients() {
        // 2π(e^{-t} − 1) = −2πt + πt² − (π/3)t³ + …
        let ts = geometric_grid(1e-3, 0.3, 40);
        let data: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 2.0 * PI * (-t).exp_m1())).collect();
        let fit = fit_expansion(&data, 3, FitOptions::default()).unwrap();
        assert!((fit.coefficient(1) / (-2.0 * PI) - 1.0).abs() < 1e-4);
        assert!((fit.coefficient(2) / PI - 1.0).abs() < 1e-4);
        assert!((fit.coefficient(3) / (-PI / 3.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn fit_preconditions() {
        let ts = geometric_grid(1e-2, 0.5, 40);
        let data: Vec<(f64, f64)> = ts.iter().map(|&t| (t, t)).collect();
        assert!(matches!(
            fit_expansion(&data, 1, FitOptions::default()),
            Err(Error::InsufficientSamples(_))
        ));
        let ts = geometric_grid(1e-3, 0.5, 5);
        let data: Vec<(f64, f64)> = ts.iter().map(|&t| (t, t)).collect();
        assert!(fit_expansion(&data, 1, FitOptions::default()).is_err());
        let bad = vec![
            (1e-3, 0.0),
            (1e-2, 0.0),
            (0.1, 0.0),
            (2.0, 0.0),
            (0.5, 0.0),
            (0.2, 0.0),
        ];
        assert!(fit_expansion(&bad, 1, FitOptions::default()).is_err());
    }

    #[test]
    fn ill_conditioned_fit_rejected() {
        // many powers over a narrow window
        let ts = geometric_grid(0.5, 1.0, 40);
        let data: Vec<(f64, f64)> = ts.iter().map(|&t| (t, t.sin())).collect();
        let r = fit_expansion(
            &data,
            12,
            FitOptions {
                min_decades: 0.0,
                ..FitOptions::default()
            },
        );
        assert!(matches!(r, Err(Error::IllConditioned { .. })), "{r:?}");
    }

    #[test]
    fn refit_stability() {
        let ts = geometric_grid(1e-3, 0.5, 40);
        let data: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 2.0 * PI * (-t).exp_m1())).collect();
        let a = fit_expansion(&data, 2, FitOptions::default()).unwrap();
        let b = fit_expansion(&data, 4, FitOptions::default()).unwrap();
        for k in 1..=3 {
            assert!(a.order_shifts[k - 1] > 0.0);
            assert!(
                (a.coefficient(k) - b.coefficient(k)).abs() <= a.error_bar(k) + b.error_bar(k),
                "k={k}"
            );
        }
    }

    #[test]
    fn oracles() {
        let s = spec1();
        let c = FourierPotential::constant(s, 0.7);
        assert!((c1_oracle(&c) + 2.0 * PI * 0.7).abs() < 1e-14);
        let cosx = FourierPotential::make_band_limited(
            s,
            &[(Frequency([1, 0, 0]), Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        assert_eq!(c1_oracle(&cosx), 0.0);
        assert!((c1_oracle(&cosx.shifted(0.7)) - c1_oracle(&c)).abs() < 1e-14);
        assert!((w2_coefficient_oracle(&cosx, 0) - 2.0 * PI).abs() < 1e-13);
        assert!((w2_coefficient_oracle(&cosx, 1) + PI / 3.0).abs() < 1e-13);
        assert_eq!(w2_coefficient_oracle(&c, 1), 0.0);
    }

    #[test]
    fn richardson_linear() {
        let data: Vec<(f64, f64)> = (0..6)
            .map(|j| 2f64.powi(-j))
            .map(|t| (t, 5.0 + 2.0 * t))
            .collect();
        let e = richardson_limit(&data, &[]).unwrap();
        assert!((e.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn richardson_exponential_quotient() {
        let h = |t: f64| (-t).exp_m1() / (-t);
        let three: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&t| (t, h(t))).collect();
        let e3 = richardson_limit(&three, &[]).unwrap();
        // Lagrange interpolant through the three points, evaluated at 0
        let (t0, t1, t2) = (0.2, 0.1, 0.05);
        let lag = h(t0) * (t1 * t2) / ((t0 - t1) * (t0 - t2))
            + h(t1) * (t0 * t2) / ((t1 - t0) * (t1 - t2))
            + h(t2) * (t0 * t1) / ((t2 - t0) * (t2 - t1));
        assert!((e3.value - lag).abs() < 1e-14);
        assert!((e3.value - 1.0).abs() < 1e-4);
        // the residual of three levels is ≈ t³/24 · 8 halvings; five halvings reach 1e-8
        let six: Vec<(f64, f64)> = (0..6)
            .map(|j| 0.2 * 2f64.powi(-j))
            .map(|t| (t, h(t)))
            .collect();
        let e6 = richardson_limit(&six, &[]).unwrap();
        assert!((e6.value - 1.0).abs() < 1e-8);
        assert!(e6.error_estimate < 1e-6);
    }

    #[test]
    fn richardson_rejects_irregular_grid() {
        let data = vec![(0.2, 1.0), (0.1, 1.0), (0.04, 1.0)];
        assert!(matches!(
            richardson_limit(&data, &[]),
            Err(Error::NonGeometricGrid { .. })
        ));
    }

    #[test]
    fn grid_endpoints() {
        let g = geometric_grid(1e-3, 0.5, 40);
        assert_eq!(g.len(), 40);
        assert!((g[0] - 1e-3).abs() < 1e-18);
        assert!((g[39] - 0.5).abs() < 1e-14);
    }
}
