//! Flat-torus geometry, the Laplace spectrum, and the free heat kernel.
//!
//! Every lattice sum in this crate reduces to one of two one-dimensional
//! Gaussian sums related by Poisson summation:
//!
//! ```text
//!   Σ_k e^{-a k²} cos(2π k x)  =  √(π/a) · Σ_m e^{-(π²/a)(m + x)²}
//! ```
//!
//! The left side is the frequency ("Fourier") form, the right side the
//! image form. Each converges quickly on one side of `a = π`, which for a
//! heat kernel at time `t` is the crossover `t = L²/(4π)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Default period; makes the eigenvalues exactly `|k|²`.
pub const DEFAULT_PERIOD: f64 = 2.0 * PI;

/// Hard cap on the number of shells a single lattice sum may add.
const MAX_SHELLS: usize = 50_000_000;

/// Flat torus `(ℝ/Lℤ)ⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    dim: usize,
    period: f64,
}

impl TorusSpec {
    pub fn new(dim: usize, period: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(invalid(
                "dimension",
                format!("must be 1, 2 or 3, got {dim}"),
            ));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(invalid("period", format!("must be positive, got {period}")));
        }
        Ok(Self { dim, period })
    }

    /// Torus of period 2π.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(dim, DEFAULT_PERIOD)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(self.dim as i32)
    }

    /// Spacing `2π/L` of the dual lattice.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// Laplace eigenvalue `ρ = |2πk/L|²` of the mode `k`.
    pub fn eigenvalue(&self, k: Frequency) -> f64 {
        let w = self.wavenumber();
        w * w * k.norm_sq(self.dim) as f64
    }

    /// Time at which the frequency and image sums need equally many shells.
    pub fn crossover_time(&self) -> f64 {
        self.period * self.period / (4.0 * PI)
    }

    /// Gaussian exponent `a = t (2π/L)²` of the one-dimensional sums at time `t`.
    pub fn gaussian_exponent(&self, t: f64) -> f64 {
        let w = self.wavenumber();
        t * w * w
    }

    /// Reduces each component of a displacement to `(-L/2, L/2]`.
    pub fn reduce_displacement(&self, d: &[f64]) -> Vec<f64> {
        d.iter()
            .map(|&x| {
                let y = x / self.period;
                (y - (y - 0.5).ceil()) * self.period
            })
            .collect()
    }
}

/// Integer frequency vector. Components past the torus dimension are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frequency(pub [i32; 3]);

impl Frequency {
    pub const ZERO: Frequency = Frequency([0; 3]);

    pub fn from_slice(k: &[i32]) -> Self {
        let mut out = [0; 3];
        out[..k.len()].copy_from_slice(k);
        Frequency(out)
    }

    pub fn components(&self, dim: usize) -> &[i32] {
        &self.0[..dim]
    }

    pub fn norm_sq(&self, dim: usize) -> i64 {
        self.0[..dim].iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn sup_norm(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 3]
    }
}

impl std::ops::Add for Frequency {
    type Output = Frequency;
    fn add(self, o: Frequency) -> Frequency {
        Frequency([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl std::ops::Sub for Frequency {
    type Output = Frequency;
    fn sub(self, o: Frequency) -> Frequency {
        Frequency([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl std::ops::Neg for Frequency {
    type Output = Frequency;
    fn neg(self) -> Frequency {
        Frequency([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// All integer vectors with sup-norm at most `cutoff`, in lexicographic order.
pub fn frequencies_within(spec: &TorusSpec, cutoff: u32) -> Vec<Frequency> {
    let c = cutoff as i32;
    let side = (2 * cutoff + 1) as usize;
    let mut out = Vec::with_capacity(side.pow(spec.dim() as u32));
    let range = |active: bool| if active { -c..=c } else { 0..=0 };
    for k0 in range(true) {
        for k1 in range(spec.dim() >= 2) {
            for k2 in range(spec.dim() >= 3) {
                out.push(Frequency([k0, k1, k2]));
            }
        }
    }
    out
}

/// Which side of the Poisson pair a lattice sum is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Sum over the dual (frequency) lattice.
    Fourier,
    /// Sum over periodic images in position space.
    Image,
    /// Image sum below the crossover time, Fourier sum above it.
    Auto,
}

/// Value of a truncated lattice sum together with its certified tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSum {
    pub value: f64,
    /// Upper bound on the absolute value of the discarded terms.
    pub tail_bound: f64,
    /// Number of lattice points summed.
    pub terms: usize,
}

/// `Σ_k e^{-a k²} cos(2π k x)` summed directly over `k`.
///
/// Shells are added until the Gaussian tail bound for the rest falls below
/// `tol` times the running sum of absolute values.
pub fn fourier_gaussian_sum(a: f64, x: f64, tol: f64) -> LatticeSum {
    debug_assert!(a > 0.0);
    let mut value = 1.0;
    let mut abs_sum = 1.0;
    let mut j = 0usize;
    loop {
        let next = (j + 1) as f64;
        let tail = 2.0 * (-a * next * next).exp() / (-(a * (2.0 * next + 1.0))).exp_m1().abs();
        if tail <= tol * abs_sum || j >= MAX_SHELLS {
            return LatticeSum {
                value,
                tail_bound: tail,
                terms: 2 * j + 1,
            };
        }
        j += 1;
        let jf = j as f64;
        let w = 2.0 * (-a * jf * jf).exp();
        value += w * (2.0 * PI * jf * x).cos();
        abs_sum += w;
    }
}

/// `Σ_m e^{-b (m + x)²}` summed directly over `m`.
pub fn image_gaussian_sum(b: f64, x: f64, tol: f64) -> LatticeSum {
    debug_assert!(b > 0.0);
    // shift x into (-1/2, 1/2]; the sum is 1-periodic in x
    let x = x - (x - 0.5).ceil();
    let mut value = (-b * x * x).exp();
    let mut abs_sum = value;
    let mut j = 0usize;
    loop {
        // every image with |m| > j sits at distance at least j + 1/2
        let r = j as f64 + 0.5;
        let tail = 2.0 * (-b * r * r).exp() / (-(2.0 * b * r)).exp_m1().abs();
        if tail <= tol * abs_sum || j >= MAX_SHELLS {
            return LatticeSum {
                value,
                tail_bound: tail,
                terms: 2 * j + 1,
            };
        }
        j += 1;
        let m = j as f64;
        let plus = (-b * (m + x) * (m + x)).exp();
        let minus = (-b * (x - m) * (x - m)).exp();
        value += plus + minus;
        abs_sum += plus + minus;
    }
}

fn resolve(repr: Representation, a: f64) -> Representation {
    match repr {
        Representation::Auto if a >= PI => Representation::Fourier,
        Representation::Auto => Representation::Image,
        r => r,
    }
}

/// One-dimensional periodic Gaussian `Σ_k e^{-a k²} cos(2π k x)`.
pub fn periodic_gaussian(a: f64, x: f64, tol: f64, repr: Representation) -> LatticeSum {
    match resolve(repr, a) {
        Representation::Fourier => fourier_gaussian_sum(a, x, tol),
        _ => {
            let scale = (PI / a).sqrt();
            let s = image_gaussian_sum(PI * PI / a, x, tol);
            LatticeSum {
                value: scale * s.value,
                tail_bound: scale * s.tail_bound,
                terms: s.terms,
            }
        }
    }
}

/// One-dimensional shifted Gaussian `Σ_k e^{-a (k + x)²}`.
///
/// The `Fourier` side is the direct sum over `k`; the `Image` side is its
/// Poisson dual.
pub fn shifted_gaussian(a: f64, x: f64, tol: f64, repr: Representation) -> LatticeSum {
    match resolve(repr, a) {
        Representation::Fourier => image_gaussian_sum(a, x, tol),
        _ => {
            let scale = (PI / a).sqrt();
            let s = fourier_gaussian_sum(PI * PI / a, x, tol);
            LatticeSum {
                value: scale * s.value,
                tail_bound: scale * s.tail_bound,
                terms: s.terms,
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(invalid("t", format!("time must be positive, got {t}")))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(invalid("tol", format!("must lie in (0, 1), got {tol}")))
    }
}

/// Free heat trace `Θ_n(t) = Σ_ξ e^{-t ρ_ξ}` with an explicit representation.
pub fn theta_trace_with(
    spec: &TorusSpec,
    t: f64,
    tol: f64,
    repr: Representation,
) -> Result<LatticeSum> {
    check_time(t)?;
    check_tol(tol)?;
    let n = spec.dim() as i32;
    let one = periodic_gaussian(spec.gaussian_exponent(t), 0.0, tol / n as f64, repr);
    let value = one.value.powi(n);
    // (θ + δ)^n - θ^n for the per-factor tail δ
    let tail_bound = (one.value + one.tail_bound).powi(n) - value;
    Ok(LatticeSum {
        value,
        tail_bound,
        terms: one.terms.pow(n as u32),
    })
}

/// Free heat trace `Θ_n(t)`, switching representation at the crossover time.
pub fn theta_trace(spec: &TorusSpec, t: f64, tol: f64) -> Result<f64> {
    Ok(theta_trace_with(spec, t, tol, Representation::Auto)?.value)
}

/// `Σ_{|k|∞ > radius} e^{-t ρ_k}`, the part of `Θ_n` outside a cube of frequencies.
pub fn theta_outside_cube(spec: &TorusSpec, t: f64, radius: u32, tol: f64) -> Result<f64> {
    check_time(t)?;
    let a = spec.gaussian_exponent(t);
    let n = spec.dim() as i32;
    let mut inside = 0.0;
    for k in -(radius as i64)..=(radius as i64) {
        inside += (-a * (k * k) as f64).exp();
    }
    // one-sided tail summed outward from radius + 1
    let mut outside = 0.0;
    let mut k = radius as f64 + 1.0;
    loop {
        let term = 2.0 * (-a * k * k).exp();
        outside += term;
        let rest =
            2.0 * (-a * (k + 1.0) * (k + 1.0)).exp() / (-(a * (2.0 * k + 3.0))).exp_m1().abs();
        if rest <= tol * (outside + inside) * 1e-3 || term == 0.0 {
            outside += rest;
            break;
        }
        k += 1.0;
    }
    // full^n - inside^n = outside * Σ full^i inside^{n-1-i}, free of cancellation
    let full = inside + outside;
    let mut factor = 0.0;
    for i in 0..n {
        factor += full.powi(i) * inside.powi(n - 1 - i);
    }
    Ok(outside * factor)
}

/// Free heat kernel `H₀(t, x, y)` at displacement `d = x − y`, using the
/// requested representation in every coordinate.
pub fn heat_kernel_with(
    spec: &TorusSpec,
    t: f64,
    d: &[f64],
    tol: f64,
    repr: Representation,
) -> Result<LatticeSum> {
    check_time(t)?;
    check_tol(tol)?;
    if d.len() != spec.dim() {
        return Err(invalid(
            "d",
            format!(
                "displacement has {} components, torus dimension is {}",
                d.len(),
                spec.dim()
            ),
        ));
    }
    let a = spec.gaussian_exponent(t);
    let l = spec.period();
    let per_tol = tol / spec.dim() as f64;
    let mut value = 1.0;
    let mut upper = 1.0;
    let mut terms = 1;
    for x in spec.reduce_displacement(d) {
        let s = periodic_gaussian(a, x / l, per_tol, repr);
        value *= s.value / l;
        upper *= (s.value.abs() + s.tail_bound) / l;
        terms *= s.terms;
    }
    Ok(LatticeSum {
        value,
        tail_bound: upper - value.abs(),
        terms,
    })
}

/// Free heat kernel `H₀(t, x, y)` at displacement `d = x − y`.
pub fn heat_kernel(spec: &TorusSpec, t: f64, d: &[f64], tol: f64) -> Result<f64> {
    Ok(heat_kernel_with(spec, t, d, tol, Representation::Auto)?.value)
}

/// `|H₀(vt, d) H₀((1−v)t, d) − (4πt)^{-n/2} H₀(v(1−v)t, d)|`.
///
/// On `Rⁿ` the product rule is exact; on the torus only the cross terms between
/// distinct images survive.
pub fn kernel_product_defect(spec: &TorusSpec, t: f64, v: f64, d: &[f64], tol: f64) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) {
        return Err(invalid("v", format!("must lie in (0, 1), got {v}")));
    }
    let left = heat_kernel(spec, v * t, d, tol)? * heat_kernel(spec, (1.0 - v) * t, d, tol)?;
    let n = spec.dim() as f64;
    let right = (4.0 * PI * t).powf(-n / 2.0) * heat_kernel(spec, v * (1.0 - v) * t, d, tol)?;
    Ok((left - right).abs())
}

/// `t^{-n} e^{-L²/(32t)}`, the size of [`kernel_product_defect`] up to a constant.
pub fn kernel_product_scale(spec: &TorusSpec, t: f64) -> f64 {
    let l = spec.period();
    t.powi(-(spec.dim() as i32)) * (-l * l / (32.0 * t)).exp()
}

/// `∫_{Tⁿ} H₀(s, d − y) H₀(t, y) dy` by the trapezoid rule on `points` nodes per axis,
/// with both kernels in the Fourier representation.
///
/// The kernel factorizes over coordinates, so the integral is a product of
/// one-dimensional convolutions.
pub fn periodic_convolution(
    spec: &TorusSpec,
    s: f64,
    t: f64,
    d: &[f64],
    points: usize,
    tol: f64,
) -> Result<f64> {
    check_time(s)?;
    check_time(t)?;
    if d.len() != spec.dim() {
        return Err(invalid(
            "d",
            format!(
                "displacement has {} components, torus dimension is {}",
                d.len(),
                spec.dim()
            ),
        ));
    }
    if points < 2 {
        return Err(invalid("points", "need at least two nodes"));
    }
    let line = TorusSpec::new(1, spec.period())?;
    let h = spec.period() / points as f64;
    let mut value = 1.0;
    for &x in d {
        let mut acc = 0.0;
        for i in 0..points {
            let y = i as f64 * h;
            let a = heat_kernel_with(&line, s, &[x - y], tol, Representation::Fourier)?.value;
            let b = heat_kernel_with(&line, t, &[y], tol, Representation::Fourier)?.value;
            acc += a * b;
        }
        value *= acc * h;
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1() -> TorusSpec {
        TorusSpec::standard(1).unwrap()
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(TorusSpec::new(0, 1.0).is_err());
        assert!(TorusSpec::new(4, 1.0).is_err());
        assert!(TorusSpec::new(2, 0.0).is_err());
        assert!(TorusSpec::new(2, -1.0).is_err());
        let s = TorusSpec::new(3, 2.0).unwrap();
        assert_eq!(s.volume(), 8.0);
    }

    #[test]
    fn frequency_enumeration() {
        let s = spec1();
        let f0 = frequencies_within(&s, 0);
        assert_eq!(f0, vec![Frequency::ZERO]);
        let f2: Vec<i32> = frequencies_within(&s, 2).iter().map(|f| f.0[0]).collect();
        assert_eq!(f2, vec![-2, -1, 0, 1, 2]);
        let s2 = TorusSpec::standard(2).unwrap();
        let f = frequencies_within(&s2, 1);
        assert_eq!(f.len(), 9);
        assert!(f.windows(2).all(|w| w[0] < w[1]));
        let s3 = TorusSpec::standard(3).unwrap();
        assert_eq!(frequencies_within(&s3, 2).len(), 125);
    }

    #[test]
    fn eigenvalues_vanish_only_at_zero() {
        let s = TorusSpec::new(2, 3.0).unwrap();
        for k in frequencies_within(&s, 3) {
            let rho = s.eigenvalue(k);
            assert!(rho >= 0.0);
            assert_eq!(rho == 0.0, k.is_zero());
        }
        assert_eq!(spec1().eigenvalue(Frequency([3, 0, 0])), 9.0);
    }

    #[test]
    fn theta_at_unit_time() {
        // direct lattice sum, eight terms
        let direct: f64 = (-8i32..=8).map(|k| (-(k * k) as f64).exp()).sum();
        let v = theta_trace(&spec1(), 1.0, 1e-14).unwrap();
        assert!((v - 1.7726372).abs() < 1e-6);
        assert!((v - direct).abs() < 1e-14);
        let s2 = TorusSpec::standard(2).unwrap();
        let v2 = theta_trace(&s2, 1.0, 1e-14).unwrap();
        assert!((v2 - v * v).abs() < 1e-13);
    }

    #[test]
    fn theta_large_time_tends_to_one() {
        // the excess 2e^{-50} is below the spacing of doubles at 1
        let v = theta_trace(&spec1(), 50.0, 1e-14).unwrap();
        assert!(v >= 1.0 && v - 1.0 < 1e-20);
        let excess = theta_trace(&spec1(), 50.0, 1e-14).unwrap() - 1.0;
        assert!(excess < 2.0 * (-50f64).exp() + 1e-30);
    }

    #[test]
    fn theta_rejects_nonpositive_time() {
        assert!(theta_trace(&spec1(), 0.0, 1e-12).is_err());
        assert!(theta_trace(&spec1(), -1.0, 1e-12).is_err());
        assert!(heat_kernel(&spec1(), 0.0, &[0.0], 1e-12).is_err());
    }

    #[test]
    fn theta_small_time_weyl_law() {
        for n in 1..=3 {
            let s = TorusSpec::new(n, 1.7).unwrap();
            let t = s.period().powi(2) / 100.0;
            let th = theta_trace(&s, t, 1e-15).unwrap();
            let weyl = (4.0 * PI * t / s.period().powi(2)).powf(n as f64 / 2.0);
            assert!((th * weyl - 1.0).abs() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn kernel_at_small_time_is_gaussian() {
        let v = heat_kernel(&spec1(), 0.01, &[0.0], 1e-15).unwrap();
        let e = (4.0 * PI * 0.01_f64).powf(-0.5);
        assert!((v / e - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_is_even() {
        let s = TorusSpec::standard(2).unwrap();
        for &(t, d) in &[(0.3, [0.7, -1.1]), (2.0, [2.5, 0.4]), (5.0, [-3.0, 3.0])] {
            let a = heat_kernel(&s, t, &d, 1e-14).unwrap();
            let b = heat_kernel(&s, t, &[-d[0], -d[1]], 1e-14).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn representations_agree() {
        let s = TorusSpec::standard(1).unwrap();
        for &t in &[0.05, 0.5, 3.0, 10.0] {
            for &d in &[0.0, 0.4, 2.0, 3.1] {
                let f = heat_kernel_with(&s, t, &[d], 1e-15, Representation::Fourier).unwrap();
                let i = heat_kernel_with(&s, t, &[d], 1e-15, Representation::Image).unwrap();
                let scale = heat_kernel(&s, t, &[0.0], 1e-15).unwrap();
                assert!((f.value - i.value).abs() < 1e-13 * scale, "t={t} d={d}");
            }
        }
    }

    #[test]
    fn displacement_reduction() {
        let s = TorusSpec::new(1, 2.0).unwrap();
        let r = s.reduce_displacement(&[1.0, -1.0, 3.5, 2.0, -0.2]);
        let want = [1.0, 1.0, -0.5, 0.0, -0.2];
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn outside_cube_matches_difference() {
        let s = TorusSpec::standard(2).unwrap();
        let t = 0.05;
        let full = theta_trace(&s, t, 1e-15).unwrap();
        let inside: f64 = frequencies_within(&s, 6)
            .iter()
            .map(|&k| (-t * s.eigenvalue(k)).exp())
            .sum();
        let out = theta_outside_cube(&s, t, 6, 1e-14).unwrap();
        assert!((out - (full - inside)).abs() < 1e-12 * full);
    }

    #[test]
    fn shifted_gaussian_sides_agree() {
        for &a in &[0.01, 0.7, 3.0, 9.0] {
            for &x in &[0.0, 0.13, 0.5, -0.37, 2.25] {
                let f = shifted_gaussian(a, x, 1e-16, Representation::Fourier).value;
                let i = shifted_gaussian(a, x, 1e-16, Representation::Image).value;
                assert!(
                    (f - i).abs() < 1e-12 * f.abs().max(1.0),
                    "a={a} x={x}: {f} {i}"
                );
            }
        }
    }

    #[test]
    fn semigroup_by_convolution() {
        for n in 1..=3 {
            let sp = TorusSpec::standard(n).unwrap();
            for &(s, t) in &[(0.01, 0.02), (0.3, 0.05), (1.0, 2.5)] {
                let d: Vec<f64> = (0..n).map(|i| 0.9 - 0.7 * i as f64).collect();
                let conv = periodic_convolution(&sp, s, t, &d, 512, 1e-16).unwrap();
                let direct = heat_kernel(&sp, s + t, &d, 1e-16).unwrap();
                let scale = heat_kernel(&sp, s + t, &vec![0.0; n], 1e-16).unwrap();
                assert!((conv - direct).abs() < 1e-10 * scale, "n={n} s={s} t={t}");
            }
        }
    }

    #[test]
    fn product_rule_defect_is_exponentially_small() {
        for n in 1..=3 {
            let sp = TorusSpec::standard(n).unwrap();
            let l = sp.period();
            for &t in &[0.05, 0.3, 1.0, l * l / 10.0] {
                for &v in &[0.01, 0.25, 0.5, 0.9] {
                    for &x in &[0.0, 1.0, 3.0] {
                        let d = vec![x; n];
                        let defect = kernel_product_defect(&sp, t, v, &d, 1e-16).unwrap();
                        assert!(
                            defect <= kernel_product_scale(&sp, t),
                            "n={n} t={t} v={v} x={x}"
                        );
                    }
                }
            }
        }
    }
}
