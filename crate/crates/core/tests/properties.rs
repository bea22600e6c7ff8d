use proptest::prelude::*;

use heat_trace::asymptotics::{fit_expansion, geometric_grid, richardson_limit, FitOptions};
use heat_trace::galerkin::GalerkinSystem;
use heat_trace::gaussian::{prodbound_ratio, simplex_form, simplex_points};
use heat_trace::io::RunConfig;
use heat_trace::potential::{make_power_law, make_random};
use heat_trace::regularity::{e_m, increment_exponent};
use heat_trace::torus::{heat_kernel, theta_trace};
use heat_trace::{FourierPotential, Method, TorusSpec};

fn spec(n: usize) -> TorusSpec {
    TorusSpec::standard(n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_potentials_are_real(
        n in 1usize..=3,
        band in 1u32..=3,
        mean in -2.0f64..2.0,
        seed in any::<u64>(),
        x in proptest::collection::vec(0.0f64..6.3, 3),
    ) {
        let v = make_random(spec(n), band, mean, 0.5, seed).unwrap();
        let z = v.evaluate_complex(&x[..n]);
        prop_assert!(z.im.abs() <= 1e-12 * (1.0 + z.re.abs()));
        prop_assert!((v.mean() - mean).abs() < 1e-14);
        prop_assert!((v.evaluate(&x[..n]) - mean).abs() <= 0.5 + 1e-12);
        prop_assert!((v.abs_coefficient_sum() - mean.abs() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn power_law_conjugate_pairs(s in 1.1f64..5.0, band in 1u32..20, seed in any::<u64>()) {
        let pl = make_power_law(spec(1), s, band, seed).unwrap();
        for (k, c) in pl.potential.coefficients() {
            prop_assert!((pl.potential.coefficient(-k) - c.conj()).norm() < 1e-15);
        }
        prop_assert_eq!(pl.potential.mean(), 0.0);
    }

    #[test]
    fn heat_kernel_is_positive_even_and_periodic(
        n in 1usize..=3,
        t in 1e-3f64..4.0,
        d in proptest::collection::vec(-3.2f64..3.2, 3),
    ) {
        let sp = spec(n);
        let d = &d[..n];
        let h = heat_kernel(&sp, t, d, 1e-16).unwrap();
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        let shifted: Vec<f64> = d.iter().map(|x| x + sp.period()).collect();
        let peak = heat_kernel(&sp, t, &vec![0.0; n], 1e-16).unwrap();
        prop_assert!(h > 0.0);
        prop_assert!(h <= peak * (1.0 + 1e-14));
        prop_assert!((heat_kernel(&sp, t, &neg, 1e-16).unwrap() - h).abs() <= 1e-13 * peak);
        prop_assert!((heat_kernel(&sp, t, &shifted, 1e-16).unwrap() - h).abs() <= 1e-13 * peak);
    }

    #[test]
    fn theta_trace_decreases(n in 1usize..=3, t in 1e-3f64..2.0, f in 1.01f64..3.0) {
        let sp = spec(n);
        prop_assert!(theta_trace(&sp, t * f, 1e-16).unwrap() < theta_trace(&sp, t, 1e-16).unwrap());
        prop_assert!(theta_trace(&sp, t, 1e-16).unwrap() > 1.0);
    }

    #[test]
    fn simplex_forms_are_positive_definite(k in 2usize..=6, n in 1usize..=3, i in 1usize..500) {
        let r = &simplex_points(k, i).unwrap()[i - 1];
        prop_assume!(r.iter().all(|&x| x > 1e-6));
        let total: f64 = r.iter().sum();
        let r: Vec<f64> = r.iter().map(|x| x / total).collect();
        let q = simplex_form(&r, n).unwrap();
        prop_assert_eq!(q.dim(), n * (k - 1));
        prop_assert!(q.is_positive_definite());
        prop_assert!(q.min_eigenvalue() > 0.0);
    }

    #[test]
    fn prodbound_ratio_is_scale_free(
        k in 2usize..=4,
        j in 0u32..=2,
        i in 1usize..200,
        t in 1e-3f64..1.0,
        s in 1e-3f64..1.0,
    ) {
        let r = &simplex_points(k, i).unwrap()[i - 1];
        prop_assume!(r.iter().all(|&x| x > 1e-4));
        let total: f64 = r.iter().sum();
        let r: Vec<f64> = r.iter().map(|x| x / total).collect();
        let alpha = [0usize, k - 2];
        let a = prodbound_ratio(&spec(1), &r, t, j, &alpha).unwrap();
        let b = prodbound_ratio(&spec(1), &r, s, j, &alpha).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn remainder_function_is_bounded(m in 0u32..6, s in 0.0f64..200.0) {
        let e = e_m(m, s);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e), "e_{}({}) = {}", m, s, e);
    }

    #[test]
    fn richardson_is_exact_on_polynomials(
        c in proptest::collection::vec(-3.0f64..3.0, 4),
        t0 in 0.05f64..0.5,
    ) {
        let data: Vec<(f64, f64)> = (0..5)
            .map(|j| t0 * 0.5f64.powi(j))
            .map(|t| (t, c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t))
            .collect();
        let e = richardson_limit(&data, &[]).unwrap();
        prop_assert!((e.value - c[0]).abs() < 1e-9);
    }

    #[test]
    fn fit_recovers_polynomials(c in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let data: Vec<(f64, f64)> = geometric_grid(1e-3, 0.5, 24)
            .into_iter()
            .map(|t| (t, c[0] * t + c[1] * t * t + c[2] * t * t * t))
            .collect();
        let fit = fit_expansion(&data, 2, FitOptions::default()).unwrap();
        for k in 1..=3 {
            prop_assert!((fit.coefficient(k) - c[k - 1]).abs() < 1e-8);
        }
    }

    #[test]
    fn increment_exponent_of_a_power(e in 0.3f64..3.0, a in 0.1f64..10.0) {
        let taus: Vec<f64> = (0..6).map(|j| 1e-3 * 4f64.powi(j)).collect();
        let levels: Vec<f64> = taus.iter().map(|t| 2.0 + a * t.powf(e)).collect();
        let floors = vec![0.0; taus.len()];
        let got = increment_exponent(&taus, &levels, &floors).unwrap();
        prop_assert!((got - e).abs() < 1e-9);
    }

    #[test]
    fn galerkin_shift_law(c in -2.0f64..2.0, seed in any::<u64>()) {
        let v = make_random(spec(1), 2, 0.0, 0.5, seed).unwrap();
        let a = GalerkinSystem::build(&v, 24).unwrap();
        let b = GalerkinSystem::build(&v.shifted(c), 24).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            prop_assert!((y - x - c).abs() < 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn galerkin_min_eigenvalue_respects_potential(seed in any::<u64>(), mean in -1.0f64..1.0) {
        let v = make_random(spec(1), 3, mean, 0.5, seed).unwrap();
        let sys = GalerkinSystem::build(&v, 32).unwrap();
        let low = sys.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(low >= mean - 0.5 - 1e-10);
    }

    #[test]
    fn method_tags_round_trip(k in 1usize..12, which in 0usize..5) {
        let m = [
            Method::Galerkin,
            Method::DuhamelTerm(k),
            Method::DuhamelSum(k),
            Method::SpectralW2,
            Method::ShiftLaw,
        ][which];
        prop_assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }

    #[test]
    fn config_round_trips_through_toml(seed in any::<u64>(), count in 12usize..60, lo in -3.0f64..-2.0) {
        let mut cfg = RunConfig { seed, ..RunConfig::default() };
        cfg.grid.count = count;
        cfg.grid.t_min = 10f64.powf(lo);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

#[test]
fn zero_potential_has_zero_trace() {
    let v = FourierPotential::zero(spec(2));
    let sys = GalerkinSystem::build(&v, 6).unwrap();
    assert_eq!(sys.relative_trace(0.1).unwrap().value, 0.0);
}

#[test]
fn unknown_method_tag_is_rejected() {
    assert!("w".parse::<Method>().is_err());
    assert!("duhamel_kx".parse::<Method>().is_err());
    assert!("spectral".parse::<Method>().is_err());
}
