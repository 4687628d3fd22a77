use proptest::prelude::*;

use hybrid_cov::kernels::{
    cauchy, hybrid_cm, hybrid_hm, matern, CauchyParams, Covariance, HybridHMParams, Kernel,
    KernelSpec, MaternParams, ParsimoniousCM,
};
use hybrid_cov::linalg::{Cholesky, DEFAULT_LADDER};
use hybrid_cov::quadrature::QuadratureSettings;
use hybrid_cov::randfield::{covariance_matrix, sample_uniform_locations};
use hybrid_cov::specfun::{
    gamma_fn, gen_inc_gamma, gen_lower_inc_gamma, reg_lower_gamma, reg_upper_gamma,
};

fn parsimonious(omega: f64, alpha: f64, nu1: f64, nu2: f64, xi: f64) -> ParsimoniousCM {
    ParsimoniousCM {
        omega,
        alpha,
        nu1,
        nu2,
        xi_tilde: alpha * xi.sqrt(),
    }
}

fn hole(nu: f64, xi: f64, tau: f64, eta: f64) -> HybridHMParams {
    let m = MaternParams::new(0.125, nu).unwrap();
    HybridHMParams {
        lambda1: m,
        lambda2: m,
        omega1: 1.0,
        omega2: 1.0,
        xi1: xi,
        xi2: xi,
        tau,
        eta,
        dim: 1,
    }
}

fn grid_min(p: &HybridHMParams, h_max: f64) -> f64 {
    let k = Kernel::new(&KernelSpec::hybrid_hm(p)).unwrap();
    let n = (h_max / 0.01).round() as usize;
    (0..=n)
        .map(|i| k.covariance(0.01 * i as f64).unwrap())
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Matérn splits at the truncation point into the lower and upper
    /// generalized incomplete gammas.
    #[test]
    fn matern_decomposes_at_truncation(
        alpha in 0.05f64..1.0,
        nu in 0.2f64..3.0,
        xi in 0.1f64..200.0,
        h in 0.01f64..5.0,
    ) {
        let s = QuadratureSettings::default();
        let b = 1.0 / (4.0 * xi * alpha * alpha);
        let c = h * h / (4.0 * alpha * alpha);
        let g = gamma_fn(nu).unwrap();
        let sum = (gen_lower_inc_gamma(nu, b, c, &s).unwrap() + gen_inc_gamma(nu, b, c, &s).unwrap()) / g;
        let m = matern(h, &MaternParams::new(alpha, nu).unwrap()).unwrap();
        prop_assert!((sum - m).abs() <= 1e-10, "{sum} vs {m}");
    }

    /// As ξ → 0 the hybrid tends to ω·Matérn and as ξ → ∞ to ω·Cauchy. The
    /// gap is checked against the mixing mass left on the wrong side, which
    /// bounds it rigorously.
    #[test]
    fn limits_in_the_split_point(
        omega in 0.2f64..2.0,
        alpha in 0.05f64..0.5,
        nu1 in 0.25f64..3.0,
        nu2 in 0.25f64..3.0,
        h in 0.0f64..3.0,
    ) {
        let small = parsimonious(omega, alpha, nu1, nu2, 1e-6);
        let p = hybrid_cov::kernels::expand_parsimonious(&small);
        let b = 1.0 / (4.0 * p.xi2 * alpha * alpha);
        let gap = (hybrid_cm(h, &p).unwrap() - omega * matern(h, &p.lambda2).unwrap()).abs();
        let mass = reg_lower_gamma(nu1 / 2.0, (h * h + alpha) * p.xi1).unwrap().max(reg_upper_gamma(nu2, b).unwrap());
        prop_assert!(gap <= omega * mass * (1.0 + 1e-9) + 1e-14, "xi=1e-6: gap {gap}, mass {mass}");
        if mass <= 1e-5 {
            prop_assert!(gap <= 1e-4);
        }

        let large = parsimonious(omega, alpha, nu1, nu2, 1e6);
        let p = hybrid_cov::kernels::expand_parsimonious(&large);
        let b = 1.0 / (4.0 * p.xi2 * alpha * alpha);
        let c = CauchyParams::new(alpha, nu1).unwrap();
        let gap = (hybrid_cm(h, &p).unwrap() - omega * cauchy(h, &c).unwrap()).abs();
        let mass = reg_upper_gamma(nu1 / 2.0, (h * h + alpha) * p.xi1).unwrap().max(reg_lower_gamma(nu2, b).unwrap());
        prop_assert!(gap <= omega * mass * (1.0 + 1e-9) + 1e-14, "xi=1e6: gap {gap}, mass {mass}");
        if mass <= 1e-5 {
            prop_assert!(gap <= 1e-4);
        }
    }

    #[test]
    fn small_random_configurations_factorize(
        seed in 0u64..10_000,
        alpha in 0.05f64..0.3,
        nu1 in 0.25f64..1.5,
        nu2 in 0.25f64..2.0,
        xi in 1.0f64..200.0,
    ) {
        let spec = KernelSpec::parsimonious_cm(&parsimonious(1.0, alpha, nu1, nu2, xi), 2);
        let loc = sample_uniform_locations(40, &[0.0, 0.0], &[3.0, 3.0], seed).unwrap();
        let sigma = covariance_matrix(&spec, &loc).unwrap();
        let chol = Cholesky::factor_with_ladder(&sigma, &DEFAULT_LADDER, 1.0).unwrap();
        prop_assert!(chol.jitter() <= 1e-8);
        for i in 0..sigma.n() {
            for j in 0..i {
                prop_assert_eq!(sigma.get(i, j).to_bits(), sigma.get(j, i).to_bits());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// A larger η gives a deeper hole.
    #[test]
    fn hole_deepens_with_eta(
        nu in prop::sample::select(vec![0.5, 1.5]),
        xi in 5.0f64..100.0,
        e1 in 1.1f64..3.9,
        e2 in 1.1f64..3.9,
    ) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let shallow = grid_min(&hole(nu, xi, 2.0, lo), 10.0);
        let deep = grid_min(&hole(nu, xi, 2.0, hi), 10.0);
        prop_assert!(deep <= shallow + 1e-15, "eta {lo} -> {shallow}, eta {hi} -> {deep}");
    }
}

#[test]
fn hole_effect_is_rejected_outside_validity() {
    for (tau, eta, dim) in [(2.0, 4.1, 1), (2.0, 2.5, 2), (2.0, 1.0, 1), (0.5, 1.2, 1)] {
        let mut p = hole(0.5, 10.0, tau, eta);
        p.dim = dim;
        assert!(hybrid_hm(0.3, &p).is_err(), "tau={tau} eta={eta} d={dim}");
    }
}

#[test]
fn spec_json_round_trip() {
    let spec = KernelSpec::parsimonious_cm(&parsimonious(1.0, 0.125, 0.75, 1.5, 40.0), 2);
    let back = KernelSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(back, spec);
    let k1 = Kernel::new(&spec).unwrap();
    let k2 = Kernel::new(&back).unwrap();
    for h in [0.0, 0.1, 1.0, 10.0] {
        assert_eq!(
            k1.covariance(h).unwrap().to_bits(),
            k2.covariance(h).unwrap().to_bits()
        );
    }
    let raw = r#"{"family":"matern","params":{"alpha":0.125,"nu":0.5}}"#;
    let m = KernelSpec::from_json(raw).unwrap();
    assert_eq!(m.dim, 2);
    assert!((Kernel::new(&m).unwrap().covariance(0.25).unwrap() - (-2f64).exp()).abs() < 1e-15);
    let bad = r#"{"family":"matern","params":{"alpha":0.125,"nu":0.5,"beta":1}}"#;
    assert!(Kernel::new(&KernelSpec::from_json(bad).unwrap()).is_err());
}
