//! Truncated Fourier–Galerkin discretization of `P_V = −Δ + V`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::potential::FourierPotential;
use crate::sample::{Method, TraceSample};
use crate::torus::{frequencies_within, theta_outside_cube, Frequency, TorusSpec};

/// Default bound on the matrix dimension.
pub const DEFAULT_DIMENSION_LIMIT: usize = 4096;

/// Eigenvalues of `P_V` restricted to the modes with `|k|_∞ ≤ cutoff`.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    spec: TorusSpec,
    cutoff: u32,
    band: u32,
    basis: Vec<Frequency>,
    eigenvalues: Vec<f64>,
    free: Vec<f64>,
    coupling_bound: f64,
}

fn basis_index(k: Frequency, dim: usize, cutoff: i32) -> Option<usize> {
    let side = (2 * cutoff + 1) as usize;
    let mut idx = 0usize;
    for &c in k.components(dim) {
        if c.abs() > cutoff {
            return None;
        }
        idx = idx * side + (c + cutoff) as usize;
    }
    Some(idx)
}

impl GalerkinSystem {
    pub fn build(v: &FourierPotential, cutoff: u32) -> Result<Self> {
        Self::build_with(v, cutoff, DEFAULT_DIMENSION_LIMIT)
    }

    /// Assembles `A[ξ,η] = ρ_ξ δ_{ξη} + v_{ξ−η}` and diagonalizes it.
    pub fn build_with(v: &FourierPotential, cutoff: u32, limit: usize) -> Result<Self> {
        let spec = *v.spec();
        if cutoff < v.band() {
            return Err(Error::CutoffBelowBand {
                cutoff,
                band: v.band(),
            });
        }
        let side = 2 * cutoff as usize + 1;
        let dim = side.checked_pow(spec.dim() as u32).unwrap_or(usize::MAX);
        if dim > limit {
            return Err(Error::DimensionLimit { dim, limit });
        }
        let basis = frequencies_within(&spec, cutoff);
        let coeffs: Vec<(Frequency, Complex64)> = v.coefficients().collect();
        let mut a = DMatrix::<Complex64>::zeros(dim, dim);
        for (i, &xi) in basis.iter().enumerate() {
            a[(i, i)] += Complex64::new(spec.eigenvalue(xi), 0.0);
            for &(q, vq) in &coeffs {
                // A[ξ, ξ − q] = v_q
                if let Some(j) = basis_index(xi - q, spec.dim(), cutoff as i32) {
                    a[(i, j)] += vq;
                }
            }
        }
        let mut eigenvalues: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let mut free: Vec<f64> = basis.iter().map(|&k| spec.eigenvalue(k)).collect();
        free.sort_by(f64::total_cmp);
        Ok(Self {
            spec,
            cutoff,
            band: v.band(),
            basis,
            eigenvalues,
            free,
            coupling_bound: v.abs_coefficient_sum(),
        })
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Frequency] {
        &self.basis
    }

    /// Perturbed eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Free eigenvalues of the same basis, ascending.
    pub fn free_eigenvalues(&self) -> &[f64] {
        &self.free
    }

    /// `Σ_j (e^{-tλ_j} − e^{-tρ_j})` with eigenvalues paired in ascending order.
    ///
    /// The tail bound is `t W e^{tW} Σ_{|k|∞ > N − band} e^{-tρ_k}` with
    /// `W = Σ|v_k| ≥ ‖V‖_∞`.
    pub fn relative_trace(&self, t: f64) -> Result<TraceSample> {
        if !(t.is_finite() && t > 0.0) {
            return Err(invalid("t", format!("time must be positive, got {t}")));
        }
        let value: f64 = self
            .eigenvalues
            .iter()
            .zip(&self.free)
            .map(|(&lam, &rho)| (-t * rho).exp() * (-t * (lam - rho)).exp_m1())
            .sum();
        let w = self.coupling_bound;
        let tail_bound = if w == 0.0 {
            0.0
        } else {
            let radius = self.cutoff - self.band;
            t * w * (t * w).exp() * theta_outside_cube(&self.spec, t, radius, 1e-6)?
        };
        let mut sample = TraceSample::new(t, value, Method::Galerkin);
        sample.cutoff = Some(self.cutoff);
        sample.tail_bound = tail_bound;
        Ok(sample)
    }

    /// Like [`relative_trace`](Self::relative_trace), flagging a tail bound above `tol`
    /// relative to the value.
    pub fn relative_trace_checked(&self, t: f64, tol: f64) -> Result<TraceSample> {
        let mut s = self.relative_trace(t)?;
        if s.tail_bound > tol * s.value.abs() {
            s.flags.push(format!(
                "tail bound {:.3e} exceeds tolerance {:.1e} relative to |value| {:.3e}",
                s.tail_bound,
                tol,
                s.value.abs()
            ));
        }
        Ok(s)
    }

    /// Writes `index,lambda,rho` rows.
    pub fn write_eigen_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,lambda,rho")?;
        for (i, (lam, rho)) in self.eigenvalues.iter().zip(&self.free).enumerate() {
            writeln!(out, "{i},{lam:.17e},{rho:.17e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::theta_trace;

    fn spec1() -> TorusSpec {
        TorusSpec::standard(1).unwrap()
    }

    fn cos_mode(spec: TorusSpec, k: i32, amp: f64) -> FourierPotential {
        FourierPotential::make_band_limited(
            spec,
            &[(Frequency([k, 0, 0]), Complex64::new(amp, 0.0))],
        )
        .unwrap()
    }

    #[test]
    fn free_spectrum() {
        let sys = GalerkinSystem::build(&FourierPotential::zero(spec1()), 2).unwrap();
        assert_eq!(sys.eigenvalues(), &[0.0, 1.0, 1.0, 4.0, 4.0]);
        assert_eq!(sys.relative_trace(0.7).unwrap().value, 0.0);
    }

    #[test]
    fn constant_shift() {
        let c = 0.75;
        let sys = GalerkinSystem::build(&FourierPotential::constant(spec1(), c), 5).unwrap();
        for (lam, rho) in sys.eigenvalues().iter().zip(sys.free_eigenvalues()) {
            assert!((lam - rho - c).abs() < 1e-14);
        }
        let t = 0.3;
        let direct: f64 = (-5i32..=5)
            .map(|k| (-t * (k * k) as f64).exp())
            .sum::<f64>()
            * (-(c * t)).exp_m1();
        let got = sys.relative_trace(t).unwrap().value;
        assert!((got - direct).abs() < 1e-14);
    }

    #[test]
    fn constant_shift_tail_bound_holds() {
        let c = 2.0;
        let sys = GalerkinSystem::build(&FourierPotential::constant(spec1(), c), 3).unwrap();
        for &t in &[0.01, 0.1, 1.0] {
            let s = sys.relative_trace(t).unwrap();
            let exact = (-(c * t)).exp_m1() * theta_trace(&spec1(), t, 1e-15).unwrap();
            assert!((s.value - exact).abs() <= s.tail_bound, "t={t}");
        }
    }

    #[test]
    fn mathieu_ground_state() {
        // −y'' + 2cos(2x) y = λ y is Mathieu's equation with q = 1, λ = a
        let v = cos_mode(spec1(), 2, 1.0);
        let low = GalerkinSystem::build(&v, 10).unwrap().eigenvalues()[0];
        let high = GalerkinSystem::build(&v, 40).unwrap().eigenvalues()[0];
        assert!((low - high).abs() < 1e-12);
        assert!((low + 0.455139).abs() < 1e-6, "{low}");
    }

    #[test]
    fn ground_state_above_minus_sup() {
        let v = cos_mode(spec1(), 1, 1.0);
        let sys = GalerkinSystem::build(&v, 12).unwrap();
        assert!(sys.eigenvalues()[0] >= -2.0);
        let s2 = TorusSpec::standard(2).unwrap();
        let v2 = crate::potential::make_random(s2, 2, 0.0, 1.5, 3).unwrap();
        let sys2 = GalerkinSystem::build(&v2, 6).unwrap();
        assert!(sys2.eigenvalues()[0] >= -v2.l_inf_norm(64).value - 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        let v = cos_mode(spec1(), 3, 1.0);
        assert!(matches!(
            GalerkinSystem::build(&v, 2),
            Err(Error::CutoffBelowBand { .. })
        ));
        let s3 = TorusSpec::standard(3).unwrap();
        assert!(matches!(
            GalerkinSystem::build(&FourierPotential::zero(s3), 8),
            Err(Error::DimensionLimit { .. })
        ));
        let sys = GalerkinSystem::build(&v, 4).unwrap();
        assert!(sys.relative_trace(0.0).is_err());
    }

    #[test]
    fn eigen_csv() {
        let sys = GalerkinSystem::build(&FourierPotential::zero(spec1()), 1).unwrap();
        let mut buf = Vec::new();
        sys.write_eigen_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "index,lambda,rho");
        assert!(lines[3].starts_with("2,1.00000000000000000e0"));
    }
}
