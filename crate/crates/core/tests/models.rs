use d2ps_core::geometry::{geometry_coefficients, SkyView};
use d2ps_core::oracle;
use d2ps_core::statmodels::{
    chi2_cdf, chi2_inv, offset_variance, sum_pdf, variance_h0, variance_h1, variance_partial_sats,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sum_pdf_equals_convolution(a in 0.5f64..3000.0, b in 0.5f64..3000.0, t in -1.1f64..1.1) {
        let h = t * (a + b);
        let got = sum_pdf(h, a, b).unwrap();
        let want = oracle::triangle_convolution(h, a, b);
        prop_assert!((got - want).abs() * (a + b) < 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn chi2_inverse_round_trips(p in 1e-6f64..0.999_999, dof in 1usize..300) {
        let x = chi2_inv(p, dof).unwrap();
        prop_assert!((chi2_cdf(x, dof).unwrap() - p).abs() < 1e-9);
    }

    #[test]
    fn offset_moment_matches_quadrature(f in -3000f64..3000.0, lo in -1000f64..0.0, w in 1f64..2000.0) {
        let got = offset_variance(f, lo, lo + w);
        let want = oracle::offset_mixture_second_moment(f, lo, lo + w);
        prop_assert!((got / want - 1.0).abs() < 1e-8);
    }

    #[test]
    fn geometry_sums_match_raw_angles(n in 2usize..=12) {
        let sky = SkyView::sky12().truncated(n).unwrap();
        let g = geometry_coefficients(&sky).unwrap();
        let (sx, sy, pairs) = oracle::pairwise_geometry_sums(&sky);
        prop_assert_eq!(g.n_pairs, pairs);
        prop_assert!((g.sum_ex2 - sx).abs() < 1e-12 && (g.sum_ey2 - sy).abs() < 1e-12);
    }

    #[test]
    fn h0_variance_is_quadratic_in_size(d in 1f64..5000.0, k in 0.1f64..10.0) {
        let sky = SkyView::sky12();
        let a = variance_h0(d, d, &sky).unwrap().sigma2;
        let b = variance_h0(k * d, k * d, &sky).unwrap().sigma2;
        prop_assert!((b / a / (k * k) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn chi2_quantile_matches_quadrature() {
    for (p, dof) in [(0.95, 10), (0.005, 20), (0.5, 1), (0.999, 100)] {
        let got = chi2_inv(p, dof).unwrap();
        let want = oracle::chi2_inv_quadrature(p, dof);
        assert!(
            (got / want - 1.0).abs() < 1e-6,
            "p={p} dof={dof}: {got} vs {want}"
        );
    }
}

#[test]
fn partial_satellite_limits() {
    let auth = 2500.0;
    let none = variance_partial_sats(0, 12, auth, 5.0).unwrap().sigma2;
    let one = variance_partial_sats(1, 12, auth, 5.0).unwrap().sigma2;
    let all = variance_partial_sats(12, 12, auth, 5.0).unwrap().sigma2;
    assert_eq!(none, auth);
    assert_eq!(one, auth);
    assert_eq!(all, variance_h1(5.0, 1).unwrap().sigma2);
    assert!(variance_partial_sats(13, 12, auth, 5.0).is_err());
}

#[test]
fn chi2_is_monotone_with_known_median() {
    assert!((chi2_inv(0.5, 2).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-8);
    for dof in [1, 5, 40] {
        let mut last_x = 0.0;
        let mut last_c = 0.0;
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let x = chi2_inv(p, dof).unwrap();
            assert!(x > last_x);
            let c = chi2_cdf(i as f64 * 0.5, dof).unwrap();
            assert!(c >= last_c);
            last_x = x;
            last_c = c;
        }
    }
    assert!(chi2_inv(0.0, 3).is_err() && chi2_inv(1.0, 3).is_err());
}
