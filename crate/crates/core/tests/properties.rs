use levy_probe::asymptotics::{sigma_alpha_sq, sigma_j, Backend};
use levy_probe::estimate::{score, threshold_psi, z_estimate_phi, PsiSpace};
use levy_probe::exponent::LevyExponentModel;
use levy_probe::simulate::{simulate_probed_workload, ProbedSample, SimulationConfig};
use levy_probe::Mm1Oracle;
use proptest::prelude::*;

/// Stable models with a negative drift and a mix of the three input parts.
fn stable_model() -> impl Strategy<Value = LevyExponentModel> {
    (
        0.0..3.0f64,
        0.5..4.0f64,
        0.5..5.0f64,
        0.0..2.0f64,
        0.0..2.0f64,
        0.5..5.0f64,
        0.2..0.9f64,
    )
        .prop_map(|(lambda, eta, mu, s2, beta, gamma, load)| {
            let mean_in = lambda * eta / mu + beta / gamma;
            let d = -(mean_in / load).max(0.1);
            LevyExponentModel::new(lambda, eta, mu, d, s2, beta, gamma).unwrap()
        })
}

fn mm1_model() -> impl Strategy<Value = (f64, f64)> {
    (0.5..3.0f64, 0.1..0.9f64).prop_map(|(mu, rho)| (rho * mu, mu))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_inverts_phi(m in stable_model(), xi in 0.01..20.0f64) {
        let p = m.psi(xi).unwrap();
        prop_assert!(p > 0.0);
        prop_assert!((m.phi(p) - xi).abs() <= 1e-8 * xi.max(1.0));
        prop_assert!(m.phi_prime(p) > 0.0);
    }

    #[test]
    fn psi_is_increasing(m in stable_model(), a in 0.01..10.0f64, b in 0.01..10.0f64) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(m.psi(lo).unwrap() < m.psi(hi).unwrap());
    }

    #[test]
    fn phi_is_convex(m in stable_model(), a in 0.0..10.0f64) {
        prop_assert!(m.phi_second(a) >= 0.0);
        let h = 1e-3;
        let mid = m.phi(a + h);
        prop_assert!(m.phi(a) + m.phi(a + 2.0 * h) - 2.0 * mid >= -1e-9);
    }

    #[test]
    fn gpk_transform_is_a_transform(m in stable_model(), a in 0.001..20.0f64, b in 0.001..20.0f64) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (l, h) = (m.stationary_lst(lo).unwrap(), m.stationary_lst(hi).unwrap());
        prop_assert!(0.0 < h && h <= l && l <= 1.0 + 1e-12);
    }

    #[test]
    fn z_estimator_recovers_xi_at_psi(
        values in prop::collection::vec(0.0..10.0f64, 2..200),
        xi in 0.1..5.0f64,
        psi in 0.05..5.0f64,
    ) {
        let s = ProbedSample::from_values(xi, values, true).unwrap();
        let z = z_estimate_phi(&s, psi, psi).unwrap();
        prop_assert!((z - xi).abs() <= 1e-9 * xi, "{z} vs {xi}");
    }

    #[test]
    fn threshold_root_solves_its_equation(
        values in prop::collection::vec(0.0..5.0f64, 3..100),
        theta in -2.0..0.0f64,
    ) {
        let xi = 1.0;
        let s = ProbedSample::from_values(xi, values.clone(), true).unwrap();
        let (p, fallback) = threshold_psi(&s, theta, 1e6).unwrap();
        let n = values.len() - 1;
        let lhs = values[n] - values[0] - n as f64 * theta / xi;
        prop_assert_eq!(fallback, !(lhs > 0.0));
        if !fallback {
            let rhs: f64 = values[..n].iter().map(|v| (-p * v).exp()).sum::<f64>() / p;
            prop_assert!((rhs - lhs).abs() <= 1e-9 * lhs.max(1.0));
        }
    }

    #[test]
    fn sigma_j_diagonal_matches_sigma_alpha((lam, mu) in mm1_model(), xi in 0.1..5.0f64, a in 0.05..20.0f64) {
        let m = LevyExponentModel::mm1(lam, mu).unwrap();
        let p = m.psi(xi).unwrap();
        prop_assume!((a - p).abs() > 0.05 * p);
        let d = sigma_j(&m, xi, a, a).unwrap();
        let s = sigma_alpha_sq(&m, xi, a).unwrap();
        prop_assert!((d - s).abs() <= 1e-8 * s.abs().max(1.0));
        prop_assert!(s >= 0.0);
    }

    #[test]
    fn sigma_j_is_symmetric((lam, mu) in mm1_model(), a in 0.05..10.0f64, b in 0.05..10.0f64) {
        let m = LevyExponentModel::mm1(lam, mu).unwrap();
        let p = m.psi(1.0).unwrap();
        prop_assume!((a - p).abs() > 0.05 && (b - p).abs() > 0.05);
        let x = sigma_j(&m, 1.0, a, b).unwrap();
        let y = sigma_j(&m, 1.0, b, a).unwrap();
        prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        // Cauchy-Schwarz.
        let (va, vb) = (sigma_alpha_sq(&m, 1.0, a).unwrap(), sigma_alpha_sq(&m, 1.0, b).unwrap());
        prop_assert!(x * x <= va * vb * (1.0 + 1e-8));
    }

    #[test]
    fn exact_backend_agrees_with_closed_forms((lam, mu) in mm1_model(), beta in 0.0..10.0f64) {
        let o = Mm1Oracle::new(lam, mu).unwrap();
        let b = Backend::ExactMm1(o);
        let viaquad = b.expect(|v| (-beta * v).exp()).unwrap();
        prop_assert!((viaquad - o.lst(beta)).abs() <= 1e-8);
        prop_assert!((o.lst(beta) - o.model().stationary_lst(beta).unwrap()).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_nonnegative_and_reproducible(m in stable_model(), xi in 0.2..5.0f64, seed in any::<u64>()) {
        let cfg = SimulationConfig::new(m, xi, 200).with_seed(seed, 0);
        let a = simulate_probed_workload(&cfg).unwrap();
        let b = simulate_probed_workload(&cfg).unwrap();
        prop_assert!(a.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn csv_round_trip((lam, mu) in mm1_model(), seed in any::<u64>()) {
        let m = LevyExponentModel::mm1(lam, mu).unwrap();
        let cfg = SimulationConfig::new(m, 1.0, 100).with_seed(seed, 3);
        let s = simulate_probed_workload(&cfg).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ProbedSample::read_csv(&buf[..], 1.0, true).unwrap();
        prop_assert_eq!(s.values, back.values);
    }

    #[test]
    fn score_changes_sign_across_the_mle((lam, mu) in mm1_model(), seed in any::<u64>()) {
        let m = LevyExponentModel::mm1(lam, mu).unwrap();
        let xi = 1.0;
        let cfg = SimulationConfig::new(m, xi, 2000).with_seed(seed, 1);
        let s = simulate_probed_workload(&cfg).unwrap();
        let space = PsiSpace::for_likelihood(xi, Some(lam));
        let est = levy_probe::estimate::mle_psi(&s, space).unwrap();
        prop_assert!(est.value >= space.lo && est.value <= space.hi);
        if !est.at_boundary {
            let h = 1e-4 * est.value;
            prop_assert!(score(&s, est.value - h) >= 0.0);
            prop_assert!(score(&s, est.value + h) <= 0.0);
        }
    }
}
