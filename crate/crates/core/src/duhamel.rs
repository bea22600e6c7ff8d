//! Terms `trace W_k(t)` of the Duhamel expansion of `e^{-tP_V}` about `e^{-tP_0}`.
//!
//! Expanding every free kernel in the eigenbasis turns the cyclic trace formula into
//!
//! ```text
//!   trace W_k(t) = (−1)^k (t^k / k) ∫_Λ Σ_{ξ_1..ξ_k} Π_j e^{-t r_j ρ_{ξ_j}} Π_j v_{ξ_j − ξ_{j−1}} dr
//! ```
//!
//! with indices taken cyclically. Writing `ξ_j = ξ + Q_j` along a closed chain of
//! steps in the support of `V`, the free sum over `ξ` is a shifted Gaussian lattice
//! sum in closed form.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{invalid, Result};
use crate::potential::FourierPotential;
use crate::quadrature::{integrate_unit, SimplexRule, VRule};
use crate::sample::{Method, TraceSample};
use crate::torus::{
    image_gaussian_sum, kernel_product_scale, shifted_gaussian, theta_trace_with, Frequency,
    Representation, TorusSpec,
};

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(invalid("t", format!("time must be positive, got {t}")))
    }
}

/// `trace W_1(t) = −t Θ_n(t) v₀`.
pub fn trace_w1(v: &FourierPotential, t: f64, tol: f64) -> Result<TraceSample> {
    check_time(t)?;
    let theta = theta_trace_with(v.spec(), t, tol, Representation::Auto)?;
    let v0 = v.mean();
    let mut s = TraceSample::new(t, -t * theta.value * v0, Method::DuhamelTerm(1));
    s.tail_bound = t * theta.tail_bound * v0.abs();
    Ok(s)
}

fn quadrature_flag(sample: &mut TraceSample, converged: bool, tol: f64) {
    if !converged || sample.quadrature_error > tol * sample.value.abs() {
        sample.flags.push(format!(
            "quadrature error {:.3e} above tolerance {:.1e} relative to |value| {:.3e}",
            sample.quadrature_error,
            tol,
            sample.value.abs()
        ));
    }
}

/// `trace W_2(t)` as the double lattice sum over the frequency lattice.
///
/// Completing the square in `ξ` leaves, for each frequency `q` of `V`,
/// `e^{-a v(1−v)|q|²} Π_d Σ_k e^{-a (k − v q_d)²}` with `a = t(2π/L)²`; the
/// inner sums are taken directly over `k`.
pub fn trace_w2(v: &FourierPotential, t: f64, rule: &VRule, tol: f64) -> Result<TraceSample> {
    check_time(t)?;
    let spec = *v.spec();
    let a = spec.gaussian_exponent(t);
    let n = spec.dim();
    let modes: Vec<([f64; 3], f64)> = v
        .coefficients()
        .map(|(k, c)| ([k.0[0] as f64, k.0[1] as f64, k.0[2] as f64], c.norm_sqr()))
        .collect();
    let lattice_tol = 1e-16;
    let integrand = |s: f64| -> f64 {
        modes
            .iter()
            .map(|(q, w)| {
                let q2: f64 = q[..n].iter().map(|x| x * x).sum();
                let mut f = w * (-a * s * (1.0 - s) * q2).exp();
                for &qd in &q[..n] {
                    f *= image_gaussian_sum(a, -s * qd, lattice_tol).value;
                }
                f
            })
            .sum()
    };
    let integral = integrate_unit(rule, integrand);
    let pre = 0.5 * t * t;
    let value = pre * integral.value;
    let mut sample = TraceSample::new(t, value, Method::DuhamelTerm(2));
    sample.quadrature_error = pre * integral.error;
    sample.tail_bound = value.abs() * ((1.0 + lattice_tol).powi(n as i32) - 1.0);
    sample.rule = Some(format!("gauss-legendre, {} nodes", integral.order));
    quadrature_flag(&mut sample, integral.converged, tol);
    Ok(sample)
}

/// `½ t² (4πt)^{-n/2} ∫₀¹ Σ_ξ e^{-v(1−v) t ρ_ξ} |b_ξ|² dv`, the second Duhamel term
/// through the flat parametrix.
pub fn spectral_w2(v: &FourierPotential, t: f64, rule: &VRule) -> Result<TraceSample> {
    check_time(t)?;
    let spec = *v.spec();
    let modes: Vec<(f64, f64)> = v
        .coefficients()
        .map(|(k, _)| (spec.eigenvalue(k), v.basis_coefficient_sq(k)))
        .collect();
    let integral = integrate_unit(rule, |s| {
        let tv = t * s * (1.0 - s);
        modes.iter().map(|&(rho, b2)| b2 * (-tv * rho).exp()).sum()
    });
    let pre = 0.5 * t * t * (4.0 * PI * t).powf(-(spec.dim() as f64) / 2.0);
    let mut sample = TraceSample::new(t, pre * integral.value, Method::SpectralW2);
    sample.quadrature_error = pre * integral.error;
    sample.rule = Some(format!(
        "gauss-legendre, {} nodes (flat parametrix route)",
        integral.order
    ));
    quadrature_flag(&mut sample, integral.converged, rule.tol);
    Ok(sample)
}

/// Bound on `|trace_w2 − spectral_w2|`: `½ t^{2−n} e^{-L²/(32t)} (Lⁿ Σ|v_k|)²`.
///
/// The routes differ only through the defect of the kernel product rule, which is
/// at most `t^{-n} e^{-L²/(32t)}` pointwise, integrated against `|V(x)||V(y)|`.
pub fn w2_route_gap_bound(v: &FourierPotential, t: f64) -> f64 {
    let spec = v.spec();
    let mass = spec.volume() * v.abs_coefficient_sum();
    0.5 * t * t * kernel_product_scale(spec, t) * mass * mass
}

/// Controls for the simplex integral in `trace W_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexSettings {
    /// Points per collapsed coordinate at the first level.
    pub start_order: usize,
    /// Refinement stops once the next rule would exceed this many nodes.
    pub max_nodes: usize,
    /// Relative change between successive orders accepted as converged.
    pub tol: f64,
    /// Relative truncation tolerance of each shifted lattice sum.
    pub lattice_tol: f64,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self {
            start_order: 4,
            max_nodes: 1 << 16,
            tol: 1e-12,
            lattice_tol: 1e-16,
        }
    }
}

/// A closed chain `0 = Q_1, Q_2, …, Q_k` of partial sums of support frequencies.
#[derive(Debug, Clone)]
struct Chain {
    q: Vec<[f64; 3]>,
    weight: Complex64,
}

/// Precomputed chains of `V` for repeated evaluation of `trace W_k` over `t`.
#[derive(Debug)]
pub struct WkEvaluator {
    spec: TorusSpec,
    k: usize,
    chains: Vec<Chain>,
    abs_weight: f64,
    settings: SimplexSettings,
    rules: Vec<OnceLock<SimplexRule>>,
    orders: Vec<usize>,
}

impl WkEvaluator {
    pub fn new(v: &FourierPotential, k: usize, settings: SimplexSettings) -> Result<Self> {
        if k < 2 {
            return Err(invalid(
                "k",
                format!("simplex evaluation needs k >= 2, got {k}"),
            ));
        }
        let spec = *v.spec();
        let coeffs: Vec<(Frequency, Complex64)> = v.coefficients().collect();
        let mut chains = Vec::new();
        if !coeffs.is_empty() {
            // steps q_2..q_k range over the support; q_1 closes the loop
            let mut idx = vec![0usize; k - 1];
            'outer: loop {
                let mut partial = Frequency::ZERO;
                let mut weight = Complex64::new(1.0, 0.0);
                let mut q = Vec::with_capacity(k);
                q.push([0.0; 3]);
                for &i in &idx {
                    let (f, c) = coeffs[i];
                    partial = partial + f;
                    weight *= c;
                    q.push([
                        partial.0[0] as f64,
                        partial.0[1] as f64,
                        partial.0[2] as f64,
                    ]);
                }
                let close = v.coefficient(-partial);
                if close != Complex64::new(0.0, 0.0) {
                    chains.push(Chain {
                        q,
                        weight: weight * close,
                    });
                }
                for d in (0..k - 1).rev() {
                    idx[d] += 1;
                    if idx[d] < coeffs.len() {
                        continue 'outer;
                    }
                    idx[d] = 0;
                }
                break;
            }
        }
        let abs_weight = chains.iter().map(|c| c.weight.norm()).sum();
        let mut orders = Vec::new();
        let mut p = settings.start_order.max(1);
        loop {
            orders.push(p);
            let next = 2 * p;
            if next
                .checked_pow((k - 1) as u32)
                .is_none_or(|m| m > settings.max_nodes)
            {
                break;
            }
            p = next;
        }
        let rules = orders.iter().map(|_| OnceLock::new()).collect();
        Ok(Self {
            spec,
            k,
            chains,
            abs_weight,
            settings,
            rules,
            orders,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of closed chains contributing.
    pub fn chain_count(&self) -> usize {
        self.chains.len()
    }

    fn rule(&self, level: usize) -> &SimplexRule {
        self.rules[level].get_or_init(|| SimplexRule::new(self.k, self.orders[level]))
    }

    fn simplex_sum(&self, a: f64, rule: &SimplexRule) -> f64 {
        let n = self.spec.dim();
        let tol = self.settings.lattice_tol;
        let per_node: Vec<f64> = rule
            .nodes()
            .par_iter()
            .zip(rule.weights().par_iter())
            .map(|(r, &w)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for chain in &self.chains {
                    let mut mu = [0.0; 3];
                    let mut second = 0.0;
                    for (rj, qj) in r.iter().zip(&chain.q) {
                        for d in 0..n {
                            mu[d] += rj * qj[d];
                            second += rj * qj[d] * qj[d];
                        }
                    }
                    let mu2: f64 = mu[..n].iter().map(|m| m * m).sum();
                    let spread = (second - mu2).max(0.0);
                    let mut f = (-a * spread).exp();
                    for &md in &mu[..n] {
                        f *= shifted_gaussian(a, md, tol, Representation::Auto).value;
                    }
                    acc += chain.weight * f;
                }
                w * acc.re
            })
            .collect();
        per_node.iter().sum()
    }

    /// `trace W_k(t)` with the simplex order doubled until converged.
    pub fn evaluate(&self, t: f64) -> Result<TraceSample> {
        check_time(t)?;
        let k = self.k;
        let a = self.spec.gaussian_exponent(t);
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let pre = sign * t.powi(k as i32) / k as f64;
        let mut sample = TraceSample::new(t, 0.0, Method::DuhamelTerm(k));
        if self.chains.is_empty() {
            sample.rule = Some("no closed chains".into());
            return Ok(sample);
        }
        let theta = theta_trace_with(&self.spec, t, 1e-15, Representation::Auto)?.value;
        let fact: f64 = (1..k).map(|i| i as f64).product();
        // |raw integral| ≤ Σ|w| · Θ · vol(Λ)
        let scale = self.abs_weight * theta / fact;
        let mut prev = self.simplex_sum(a, self.rule(0));
        let mut level = 0;
        let mut error = f64::INFINITY;
        let mut converged = false;
        while level + 1 < self.orders.len() {
            level += 1;
            let cur = self.simplex_sum(a, self.rule(level));
            error = (cur - prev).abs();
            prev = cur;
            if error <= self.settings.tol * cur.abs() + 1e-15 * scale {
                converged = true;
                break;
            }
        }
        if !error.is_finite() {
            error = scale;
        }
        sample.value = pre * prev;
        sample.quadrature_error = pre.abs() * error;
        sample.tail_bound = pre.abs()
            * scale
            * ((1.0 + self.settings.lattice_tol).powi(self.spec.dim() as i32) - 1.0);
        sample.rule = Some(self.rule(level).describe());
        if !converged {
            sample.flags.push(format!(
                "simplex refinement stopped at order {} with change {:.3e}",
                self.orders[level], sample.quadrature_error
            ));
        }
        Ok(sample)
    }
}

/// `trace W_k(t)` for `k ≥ 2` by simplex quadrature.
pub fn trace_wk(
    v: &FourierPotential,
    t: f64,
    k: usize,
    settings: SimplexSettings,
) -> Result<TraceSample> {
    WkEvaluator::new(v, k, settings)?.evaluate(t)
}

/// Partial sums `Σ_{k≤K} trace W_k` with a fitted tail bound.
#[derive(Debug)]
pub struct DuhamelSeries {
    v: FourierPotential,
    order: usize,
    v_rule: VRule,
    evaluators: Vec<WkEvaluator>,
    constant: OnceLock<f64>,
    calibration: Vec<f64>,
}

/// Default times at which the tail constant is fitted.
pub const CALIBRATION_TIMES: [f64; 4] = [0.5, 0.125, 0.03125, 0.0078125];

impl DuhamelSeries {
    pub fn new(
        v: &FourierPotential,
        order: usize,
        v_rule: VRule,
        settings: SimplexSettings,
    ) -> Result<Self> {
        if order < 1 {
            return Err(invalid("K", "partial sums need K >= 1"));
        }
        let evaluators = (3..=order)
            .map(|k| WkEvaluator::new(v, k, settings))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            v: v.clone(),
            order,
            v_rule,
            evaluators,
            constant: OnceLock::new(),
            calibration: CALIBRATION_TIMES.to_vec(),
        })
    }

    /// Replaces the times used to fit the tail constant.
    pub fn with_calibration(mut self, times: Vec<f64>) -> Self {
        self.calibration = times;
        self.constant = OnceLock::new();
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `trace W_1 … trace W_K` at time `t`.
    pub fn terms(&self, t: f64) -> Result<Vec<TraceSample>> {
        let mut out = vec![trace_w1(&self.v, t, 1e-16)?];
        if self.order >= 2 {
            out.push(trace_w2(&self.v, t, &self.v_rule, self.v_rule.tol)?);
        }
        for ev in &self.evaluators {
            out.push(ev.evaluate(t)?);
        }
        Ok(out)
    }

    fn scale(&self, k: usize, t: f64) -> f64 {
        let n = self.v.spec().dim() as f64;
        let w = self.v.abs_coefficient_sum();
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        (k as f64).powf(n / 2.0) / fact * w.powi(k as i32) * t.powf(k as f64 - n / 2.0)
    }

    /// Largest `|trace W_k(t)| / (k^{n/2}/k! · W^k · t^{k−n/2})` over `k ≤ K` and the
    /// calibration times, with `W = Σ|v_k|`.
    pub fn tail_constant(&self) -> Result<f64> {
        if let Some(&c) = self.constant.get() {
            return Ok(c);
        }
        let mut c: f64 = 0.0;
        if !self.v.is_zero() {
            for &t in &self.calibration {
                for (i, term) in self.terms(t)?.iter().enumerate() {
                    c = c.max(term.value.abs() / self.scale(i + 1, t));
                }
            }
        }
        Ok(*self.constant.get_or_init(|| c))
    }

    /// `C Σ_{k>K} k^{n/2}/k! · W^k · t^{k−n/2}`.
    pub fn tail_bound(&self, t: f64) -> Result<f64> {
        let c = self.tail_constant()?;
        let mut total = 0.0;
        let mut k = self.order + 1;
        loop {
            let term = c * self.scale(k, t);
            total += term;
            if term <= 1e-17 * total || k > self.order + 200 {
                break;
            }
            k += 1;
        }
        Ok(total)
    }

    /// The partial sum, its series tail bound, and the accumulated quadrature error.
    pub fn partial_sum(&self, t: f64) -> Result<TraceSample> {
        let terms = self.terms(t)?;
        let mut s = TraceSample::new(t, 0.0, Method::DuhamelSum(self.order));
        for term in &terms {
            s.value += term.value;
            s.quadrature_error += term.quadrature_error;
            s.tail_bound += term.tail_bound;
            s.flags.extend(term.flags.iter().cloned());
        }
        // rounding of the accumulated terms
        s.quadrature_error +=
            terms.len() as f64 * f64::EPSILON * terms.iter().map(|x| x.value.abs()).sum::<f64>();
        s.tail_bound += self.tail_bound(t)?;
        s.rule = Some(format!(
            "K={}, tail constant {:.6e}",
            self.order,
            self.tail_constant()?
        ));
        Ok(s)
    }
}
