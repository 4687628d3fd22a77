use proptest::prelude::*;

use hybrid_cov::kernels::{
    hybrid_cm, hybrid_hm, CauchyParams, HybridCMParams, HybridHMParams, MaternParams,
};
use hybrid_cov::mixture_oracle::{
    eval_mixture, eval_mixture_with, hybrid_cm_segments, hybrid_hm_segments, MixingDensity,
    MixtureSegment, OracleScheme,
};
use hybrid_cov::quadrature::QuadratureSettings;
use hybrid_cov::specfun::{reg_lower_gamma, reg_upper_gamma};

fn cm_strategy() -> impl Strategy<Value = HybridCMParams> {
    (
        (0.02f64..0.5, 0.2f64..3.0, 0.02f64..0.5, 0.2f64..3.0),
        (0.1f64..2.0, 0.1f64..2.0, 0.5f64..200.0, 0.5f64..200.0),
    )
        .prop_map(|((a1, n1, a2, n2), (w1, w2, x1, x2))| HybridCMParams {
            lambda1: CauchyParams::new(a1, n1).unwrap(),
            lambda2: MaternParams::new(a2, n2).unwrap(),
            omega1: w1,
            omega2: w2,
            xi1: x1,
            xi2: x2,
        })
}

fn hm_strategy() -> impl Strategy<Value = HybridHMParams> {
    (
        (0.05f64..0.5, 0.2f64..3.0, 0.05f64..0.5, 0.2f64..3.0),
        (0.1f64..2.0, 0.1f64..2.0, 0.5f64..200.0, 0.5f64..200.0),
        (1.2f64..3.0, 0.05f64..0.95, 1usize..=3),
    )
        .prop_map(|((a1, n1, a2, n2), (w1, w2, x1, x2), (tau, frac, dim))| {
            let upper = tau.powf(2.0 / dim as f64);
            HybridHMParams {
                lambda1: MaternParams::new(a1, n1).unwrap(),
                lambda2: MaternParams::new(a2, n2).unwrap(),
                omega1: w1,
                omega2: w2,
                xi1: x1,
                xi2: x2,
                tau,
                eta: 1.0 + frac * (upper - 1.0),
                dim,
            }
        })
}

fn grid() -> impl Iterator<Item = f64> {
    (0..=200).map(|i| 0.05 * i as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn closed_form_cm_matches_oracle(p in cm_strategy()) {
        let s = QuadratureSettings::default();
        let seg = hybrid_cm_segments(&p).unwrap();
        let scale = (p.omega1 + p.omega2).max(1.0);
        for h in grid() {
            let closed = hybrid_cm(h, &p).unwrap();
            let oracle = eval_mixture(&seg, h, &s).unwrap();
            prop_assert!((closed - oracle).abs() <= 1e-8 * scale, "h={h}: {closed} vs {oracle}");
        }
    }

    #[test]
    fn closed_form_hm_matches_oracle(p in hm_strategy()) {
        let s = QuadratureSettings::default();
        let seg = hybrid_hm_segments(&p).unwrap();
        let scale = hybrid_hm(0.0, &p).unwrap().max(1.0);
        for h in grid() {
            let closed = hybrid_hm(h, &p).unwrap();
            let oracle = eval_mixture(&seg, h, &s).unwrap();
            prop_assert!((closed - oracle).abs() <= 1e-8 * scale, "h={h}: {closed} vs {oracle}");
        }
    }

    #[test]
    fn schemes_agree(p in cm_strategy(), h in 0.0f64..10.0) {
        let s = QuadratureSettings::default();
        let seg = hybrid_cm_segments(&p).unwrap();
        let gk = eval_mixture_with(&seg, h, &s, OracleScheme::GaussKronrod).unwrap();
        let de = eval_mixture_with(&seg, h, &s, OracleScheme::DoubleExponential).unwrap();
        prop_assert!((gk - de).abs() <= 1e-9, "{gk} vs {de}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_in_weights(w in 0.01f64..10.0, alpha in 0.05f64..1.0, nu in 0.2f64..3.0, h in 0.0f64..5.0) {
        let s = QuadratureSettings::default();
        let m = MixingDensity::Matern(MaternParams::new(alpha, nu).unwrap());
        let one = [MixtureSegment::new(0.5, f64::INFINITY, w, m.clone()).unwrap()];
        let two = [MixtureSegment::new(0.5, f64::INFINITY, 2.0 * w, m).unwrap()];
        let (a, b) = (eval_mixture(&one, h, &s).unwrap(), eval_mixture(&two, h, &s).unwrap());
        prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs().max(1.0));
    }

    /// At h = 0 the Gaussian base kernel is 1, leaving the mixing mass.
    #[test]
    fn zero_lag_gives_mixing_mass(
        alpha in 0.05f64..1.0,
        nu in 0.2f64..3.0,
        lo in 0.0f64..50.0,
        width in 0.1f64..200.0,
    ) {
        let s = QuadratureSettings::default();
        let hi = lo + width;
        let c = CauchyParams::new(alpha, nu).unwrap();
        let seg = [MixtureSegment::new(lo, hi, 1.0, MixingDensity::Cauchy(c)).unwrap()];
        let mass = reg_lower_gamma(nu / 2.0, alpha * hi).unwrap() - reg_lower_gamma(nu / 2.0, alpha * lo).unwrap();
        prop_assert!((eval_mixture(&seg, 0.0, &s).unwrap() - mass).abs() <= 1e-10);

        let m = MaternParams::new(alpha, nu).unwrap();
        let beta = 0.25 / (alpha * alpha);
        let seg = [MixtureSegment::new(lo, hi, 1.0, MixingDensity::Matern(m)).unwrap()];
        let upper = |u: f64| if u == 0.0 { 0.0 } else { reg_upper_gamma(nu, beta / u).unwrap() };
        let mass = upper(hi) - upper(lo);
        prop_assert!((eval_mixture(&seg, 0.0, &s).unwrap() - mass).abs() <= 1e-10);
    }
}
