//! Real potentials on the torus given by finitely many Fourier coefficients.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::torus::{frequencies_within, Frequency, TorusSpec};

/// Largest mismatch between a supplied `v(-k)` and `conj v(k)` accepted as round-off.
const SYMMETRY_TOL: f64 = 1e-12;

/// `V(x) = Σ_k v_k e^{i (2π/L) k·x}` with `v_{-k} = conj v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPotential {
    spec: TorusSpec,
    coeffs: BTreeMap<Frequency, Complex64>,
    band: u32,
}

impl FourierPotential {
    /// Builds a potential from a coefficient list, completing Hermitian partners
    /// that are missing.
    pub fn make_band_limited(spec: TorusSpec, coeffs: &[(Frequency, Complex64)]) -> Result<Self> {
        let mut given: BTreeMap<Frequency, Complex64> = BTreeMap::new();
        for &(k, v) in coeffs {
            if k.0[spec.dim()..].iter().any(|&c| c != 0) {
                return Err(invalid(
                    "coefficients",
                    format!(
                        "frequency {:?} has components beyond dimension {}",
                        k.0,
                        spec.dim()
                    ),
                ));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(invalid(
                    "coefficients",
                    format!("non-finite value at {:?}", k.0),
                ));
            }
            if given.insert(k, v).is_some() {
                return Err(invalid(
                    "coefficients",
                    format!("frequency {:?} given twice", k.0),
                ));
            }
        }
        let mut out = BTreeMap::new();
        for (&k, &v) in &given {
            let partner = given.get(&-k).copied();
            let sym = match partner {
                Some(p) => {
                    let defect = (p - v.conj()).norm();
                    if defect > SYMMETRY_TOL * v.norm().max(1.0) {
                        return Err(Error::NonHermitian {
                            k: k.components(spec.dim()).to_vec(),
                            defect,
                        });
                    }
                    0.5 * (v + p.conj())
                }
                None => v,
            };
            if sym != Complex64::new(0.0, 0.0) {
                out.insert(k, sym);
                out.insert(-k, sym.conj());
            }
        }
        if let Some(v0) = out.get_mut(&Frequency::ZERO) {
            v0.im = 0.0;
        }
        Ok(Self::from_map(spec, out))
    }

    fn from_map(spec: TorusSpec, coeffs: BTreeMap<Frequency, Complex64>) -> Self {
        let band = coeffs.keys().map(|k| k.sup_norm()).max().unwrap_or(0);
        Self { spec, coeffs, band }
    }

    /// `V ≡ c`.
    pub fn constant(spec: TorusSpec, c: f64) -> Self {
        let mut coeffs = BTreeMap::new();
        if c != 0.0 {
            coeffs.insert(Frequency::ZERO, Complex64::new(c, 0.0));
        }
        Self::from_map(spec, coeffs)
    }

    pub fn zero(spec: TorusSpec) -> Self {
        Self::from_map(spec, BTreeMap::new())
    }

    /// `V + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        let v0 = coeffs
            .entry(Frequency::ZERO)
            .or_insert(Complex64::new(0.0, 0.0));
        v0.re += c;
        if *v0 == Complex64::new(0.0, 0.0) {
            coeffs.remove(&Frequency::ZERO);
        }
        Self::from_map(self.spec, coeffs)
    }

    /// `λ V`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let coeffs = if lambda == 0.0 {
            BTreeMap::new()
        } else {
            self.coeffs.iter().map(|(&k, &v)| (k, v * lambda)).collect()
        };
        Self::from_map(self.spec, coeffs)
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    /// Sup-norm radius of the support.
    pub fn band(&self) -> u32 {
        self.band
    }

    /// Nonzero coefficients in lexicographic frequency order.
    pub fn coefficients(&self) -> impl Iterator<Item = (Frequency, Complex64)> + '_ {
        self.coeffs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficient(&self, k: Frequency) -> Complex64 {
        self.coeffs.get(&k).copied().unwrap_or_default()
    }

    /// Zero-mode coefficient `v₀`, the mean of `V`.
    pub fn mean(&self) -> f64 {
        self.coefficient(Frequency::ZERO).re
    }

    /// `∫ V dμ = Lⁿ v₀`.
    pub fn integral(&self) -> f64 {
        self.spec.volume() * self.mean()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `Σ |v_k|`, an upper bound for `‖V‖_∞`.
    pub fn abs_coefficient_sum(&self) -> f64 {
        self.coeffs.values().map(|v| v.norm()).sum()
    }

    /// `|b_k|² = Lⁿ |v_k|²`, the squared coefficient in the orthonormal eigenbasis.
    pub fn basis_coefficient_sq(&self, k: Frequency) -> f64 {
        self.spec.volume() * self.coefficient(k).norm_sqr()
    }

    /// `Σ_ξ (1 + ρ_ξ^m) |b_ξ|²`.
    pub fn sobolev_norm_sq(&self, m: u32) -> f64 {
        let vol = self.spec.volume();
        self.coeffs
            .iter()
            .map(|(&k, v)| (1.0 + self.spec.eigenvalue(k).powi(m as i32)) * vol * v.norm_sqr())
            .sum()
    }

    /// `Σ_ξ ρ_ξ^m |b_ξ|²` with `ρ⁰ = 1`.
    pub fn moment_sum(&self, m: u32) -> f64 {
        let vol = self.spec.volume();
        self.coeffs
            .iter()
            .map(|(&k, v)| self.spec.eigenvalue(k).powi(m as i32) * vol * v.norm_sqr())
            .sum()
    }

    /// `V(x)` as the complex trigonometric sum; the imaginary part is round-off.
    pub fn evaluate_complex(&self, x: &[f64]) -> Complex64 {
        let w = self.spec.wavenumber();
        self.coeffs
            .iter()
            .map(|(k, v)| {
                let phase: f64 = k
                    .components(self.spec.dim())
                    .iter()
                    .zip(x)
                    .map(|(&c, &xi)| c as f64 * xi)
                    .sum();
                v * Complex64::from_polar(1.0, w * phase)
            })
            .sum()
    }

    /// `V(x)`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_complex(x).re
    }

    /// Maximum of `|V|` over a uniform grid with `resolution` points per axis.
    ///
    /// The resolution is raised to at least `4·band`.
    pub fn l_inf_norm(&self, resolution: usize) -> LInfEstimate {
        let n = self.spec.dim();
        let res = resolution.max(4 * self.band as usize).max(1);
        let h = self.spec.period() / res as f64;
        let mut max: f64 = 0.0;
        let mut idx = vec![0usize; n];
        let total = res.pow(n as u32);
        let mut x = vec![0.0; n];
        for _ in 0..total {
            for d in 0..n {
                x[d] = idx[d] as f64 * h;
            }
            max = max.max(self.evaluate(&x).abs());
            for d in (0..n).rev() {
                idx[d] += 1;
                if idx[d] < res {
                    break;
                }
                idx[d] = 0;
            }
        }
        LInfEstimate {
            value: max,
            spacing: h,
            resolution: res,
        }
    }

    pub fn to_record(&self) -> PotentialRecord {
        PotentialRecord {
            dimension: self.spec.dim(),
            period: self.spec.period(),
            coefficients: self
                .coeffs
                .iter()
                .map(|(k, v)| CoefficientRecord {
                    k: k.components(self.spec.dim()).to_vec(),
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
    }

    pub fn from_record(rec: &PotentialRecord) -> Result<Self> {
        let spec = TorusSpec::new(rec.dimension, rec.period)?;
        let mut list = Vec::with_capacity(rec.coefficients.len());
        for c in &rec.coefficients {
            if c.k.len() != spec.dim() {
                return Err(invalid(
                    "coefficients",
                    format!(
                        "frequency {:?} does not have {} components",
                        c.k,
                        spec.dim()
                    ),
                ));
            }
            list.push((Frequency::from_slice(&c.k), Complex64::new(c.re, c.im)));
        }
        Self::make_band_limited(spec, &list)
    }
}

/// Grid estimate of `‖V‖_∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LInfEstimate {
    pub value: f64,
    /// Grid spacing used.
    pub spacing: f64,
    pub resolution: usize,
}

/// Serializable form of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialRecord {
    pub dimension: usize,
    pub period: f64,
    pub coefficients: Vec<CoefficientRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub k: Vec<i32>,
    pub re: f64,
    pub im: f64,
}

/// A member of the power-law family together with its nominal regularity.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLaw {
    pub potential: FourierPotential,
    pub exponent: f64,
    /// Largest integer `m` with `m < s − n/2`: the Sobolev order of the
    /// infinite-band limit.
    pub nominal_order: u32,
}

/// Orders each `±k` pair; the representative with `k > −k` draws the phase.
fn is_representative(k: Frequency) -> bool {
    k > -k
}

/// `v_k = (1 + |k|)^{-s} e^{iθ_k}` for `0 < |k|_∞ ≤ band`, with phases drawn
/// from `seed` and `θ_{-k} = −θ_k`.
pub fn make_power_law(spec: TorusSpec, s: f64, band: u32, seed: u64) -> Result<PowerLaw> {
    let n = spec.dim() as f64;
    if !(s > n) {
        return Err(invalid(
            "s",
            format!("decay exponent must exceed the dimension {n}, got {s}"),
        ));
    }
    if band < 1 {
        return Err(invalid("band", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = BTreeMap::new();
    for k in frequencies_within(&spec, band) {
        if !is_representative(k) {
            continue;
        }
        let norm = (k.norm_sq(spec.dim()) as f64).sqrt();
        let theta: f64 = rng.gen_range(0.0..2.0 * PI);
        let v = Complex64::from_polar((1.0 + norm).powf(-s), theta);
        coeffs.insert(k, v);
        coeffs.insert(-k, v.conj());
    }
    let nominal_order = ((s - n / 2.0).ceil() - 1.0).max(0.0) as u32;
    Ok(PowerLaw {
        potential: FourierPotential::from_map(spec, coeffs),
        exponent: s,
        nominal_order,
    })
}

/// Random band-limited potential with the given mean and `Σ_{k≠0} |v_k| = amplitude`,
/// so that `‖V − mean‖_∞ ≤ amplitude`.
///
/// Each `±k` pair is switched on with probability ½ (at least one pair always is),
/// with a random modulus and phase.
pub fn make_random(
    spec: TorusSpec,
    band: u32,
    mean: f64,
    amplitude: f64,
    seed: u64,
) -> Result<FourierPotential> {
    if band < 1 {
        return Err(invalid("band", "must be at least 1"));
    }
    if !(amplitude > 0.0) {
        return Err(invalid("amplitude", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps: Vec<Frequency> = frequencies_within(&spec, band)
        .into_iter()
        .filter(|&k| is_representative(k))
        .collect();
    let forced = rng.gen_range(0..reps.len());
    let mut coeffs = BTreeMap::new();
    for (i, &k) in reps.iter().enumerate() {
        let on = rng.gen_bool(0.5);
        let modulus: f64 = rng.gen_range(0.2..1.0);
        let theta: f64 = rng.gen_range(0.0..2.0 * PI);
        if on || i == forced {
            let v = Complex64::from_polar(modulus, theta);
            coeffs.insert(k, v);
            coeffs.insert(-k, v.conj());
        }
    }
    let total: f64 = coeffs.values().map(|v| v.norm()).sum();
    for v in coeffs.values_mut() {
        *v *= amplitude / total;
    }
    if mean != 0.0 {
        coeffs.insert(Frequency::ZERO, Complex64::new(mean, 0.0));
    }
    Ok(FourierPotential::from_map(spec, coeffs))
}
