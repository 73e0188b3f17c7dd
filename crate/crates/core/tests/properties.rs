use nested_occupancy::fraglaw::{sample_prefix, LawParams};
use nested_occupancy::limits::{
    c_coeff, cov_limit, cstar_coeff, limit_covariance, min_eigenvalue, normalize_with_log_n, BaseProcess,
    CurveMatrix, LimitSpec,
};
use nested_occupancy::occupancy::{allocate_children, ceil_root, counting_function, simulate, OccupancyConfig};
use nested_occupancy::rng::seeded;
use nested_occupancy::special::{beta, exp_integral_e1, exp_integral_e1_inv};
use nested_occupancy::{Executor, FragmentationLaw};
use num_bigint::BigUint;
use proptest::prelude::*;

fn law_strategy() -> impl Strategy<Value = FragmentationLaw> {
    prop_oneof![
        (0.3f64..4.0).prop_map(|t| FragmentationLaw::gem(t).unwrap()),
        (0.5f64..3.0, 0.5f64..3.0).prop_map(|(a, b)| FragmentationLaw::beta_stick(a, b).unwrap()),
        (0.05f64..0.95).prop_map(|u| FragmentationLaw::constant_stick(u).unwrap()),
        // single balls sit near stick index n^{α/(1−α)}, so α stays well below 1/2
        (0.1f64..0.4, 0.5f64..3.0).prop_map(|(a, t)| FragmentationLaw::pitman_yor(a, t).unwrap()),
        (0.5f64..3.0).prop_map(|t| FragmentationLaw::gamma_poisson_kingman(t).unwrap()),
        (0.5f64..3.0).prop_map(|l| FragmentationLaw::gamma_subordinator(l).unwrap()),
    ]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn prefix_mass_is_conserved(law in law_strategy(), threshold in 1e-4f64..0.5, seed: u64) {
        let p = sample_prefix(&law, threshold, &mut seeded(seed)).unwrap();
        prop_assert!((p.total_mass() - 1.0).abs() < 1e-12, "{}", p.total_mass());
        match law.params {
            LawParams::PoissonKingman(_) => {
                prop_assert_eq!(p.tail_mass, 0.0);
                prop_assert!(p.probs.windows(2).all(|w| w[0] >= w[1]));
            }
            LawParams::StickBreaking(_) => {
                // residuals U_1⋯U_k strictly decrease
                let mut residual = 1.0;
                for &q in &p.probs {
                    prop_assert!(q > 0.0);
                    let next = residual - q;
                    prop_assert!(next < residual);
                    residual = next;
                }
            }
            LawParams::MultiplicativeSubordinator(_) => prop_assert!(p.mass_deficit <= p.tail_mass),
        }
        let again = sample_prefix(&law, threshold, &mut seeded(seed)).unwrap();
        prop_assert_eq!(p, again);
    }

    #[test]
    fn allocation_conserves_balls(count in 0u64..10_000_000, seed: u64, theta in 0.3f64..3.0) {
        let law = FragmentationLaw::gem(theta).unwrap();
        let prefix = sample_prefix(&law, 1e-3, &mut seeded(seed)).unwrap();
        let a = allocate_children(count, &prefix, &mut seeded(seed ^ 1)).unwrap();
        prop_assert_eq!(a.counts.len(), prefix.probs.len());
        prop_assert_eq!(a.counts.iter().sum::<u64>() + a.tail, count);
    }

    #[test]
    fn ceil_root_is_the_least_integer_root(n in 1u64..1_000_000_000_000, k in 0u32..=20) {
        // m = ⌈n^{k/20}⌉ is the least m with m^20 ≥ n^k
        let m = ceil_root(n, 1.0 - k as f64 / 20.0);
        let target = BigUint::from(n).pow(k);
        prop_assert!(BigUint::from(m).pow(20) >= target);
        prop_assert!(m == 1 || BigUint::from(m - 1).pow(20) < target);
    }

    #[test]
    fn c_coeff_recursion(omega in 0.3f64..2.5, c in 0.3f64..3.0, k in 2usize..=6) {
        let spec = LimitSpec::new(omega, omega - omega.min(1.0) / 2.0, c, 1.0, BaseProcess::BrownianMotion).unwrap();
        let w = omega * (k - 1) as f64;
        let via_recursion = c_coeff(&spec, k - 1).unwrap() * w * c * beta(w, 1.0 + omega);
        prop_assert!(rel(c_coeff(&spec, k).unwrap(), via_recursion) < 1e-10);
    }

    #[test]
    fn cstar_is_a_level_constant(c0 in 0.2f64..5.0, m in 0.2f64..5.0, q in 0.2f64..2.5, j in 1usize..=4) {
        let omega = q + 1.0;
        let spec = LimitSpec::new(omega, omega - 0.5, c0 / (m * omega), 1.0, BaseProcess::BrownianMotion).unwrap();
        prop_assert!(rel(cstar_coeff(c0, m, q, j).unwrap(), c_coeff(&spec, j).unwrap()) < 1e-10);
    }

    #[test]
    fn e1_inverse_round_trips(x in 1e-6f64..40.0) {
        let y = exp_integral_e1(x);
        prop_assert!(rel(exp_integral_e1_inv(y).unwrap(), x) < 1e-9);
    }

    #[test]
    fn exact_centering_normalizes_to_zero(omega in 0.5f64..2.0, c in 0.3f64..3.0, log_n in 2.0f64..40.0) {
        let spec = LimitSpec::new(omega, omega / 2.0, c, 0.7, BaseProcess::BrownianMotion).unwrap();
        let grid = vec![0.0, 0.3, 0.8, 1.0];
        let values = (1..=3)
            .map(|j| grid.iter().map(|s| c_coeff(&spec, j).unwrap() * (s * log_n).powf(omega * j as f64)).collect())
            .collect();
        let curves = CurveMatrix { s_grid: grid, levels: vec![1, 2, 3], values };
        let out = normalize_with_log_n(&curves, &spec, log_n).unwrap();
        for (li, row) in out.values.iter().enumerate() {
            for (si, v) in row.iter().enumerate() {
                prop_assert!(v.abs() < 1e-9 * curves.values[li][si].max(1.0), "{v}");
            }
        }
    }
}

fn spec_strategy() -> impl Strategy<Value = LimitSpec> {
    let base = prop_oneof![
        Just(BaseProcess::BrownianMotion),
        (0.3f64..2.0).prop_map(|q| BaseProcess::RiemannLiouville { q }),
        (0.3f64..2.0).prop_map(|q| BaseProcess::TimeChangedBm { q }),
    ];
    (0.5f64..2.0, 0.2f64..3.0, base).prop_map(|(omega, c, base)| {
        LimitSpec::new(omega, omega / 2.0, c, 1.0, base).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn limit_covariance_is_symmetric(
        spec in spec_strategy(),
        k in 1usize..=3, j in 1usize..=3,
        s in 0.05f64..1.0, u in 0.05f64..1.0,
    ) {
        let a = cov_limit(&spec, k, s, j, u).unwrap();
        let b = cov_limit(&spec, j, u, k, s).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn limit_covariance_is_psd(spec in spec_strategy(), mut grid in prop::collection::vec(0.05f64..1.0, 2..5)) {
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let cov = limit_covariance(&spec, &grid, &[1, 2], &Executor::Sequential).unwrap();
        prop_assert!(min_eigenvalue(&cov.matrix) >= -1e-8 * cov.matrix.trace());
    }

    #[test]
    fn simulation_invariants_hold(
        law in law_strategy(),
        n in 1u64..200_000,
        depth in 1usize..=3,
        seed: u64,
    ) {
        let cfg = OccupancyConfig::new(n, depth);
        let r = simulate(&law, &cfg, &mut seeded(seed)).unwrap();
        prop_assert!(r.check_invariants().is_ok(), "{:?}", r.check_invariants());
        prop_assert_eq!(r.levels.len(), depth);
        let again = simulate(&law, &cfg, &mut seeded(seed)).unwrap();
        prop_assert_eq!(&r, &again);
        if matches!(law.params, LawParams::StickBreaking(_)) {
            let top = (n as f64).ln();
            let mut prev = 0;
            for i in 0..=16 {
                let v = counting_function(&r, depth, top * i as f64 / 16.0).unwrap();
                prop_assert!(v >= prev);
                prev = v;
            }
        }
    }
}

#[test]
fn heavy_pitman_yor_tail_reports_the_cap() {
    let law = FragmentationLaw::pitman_yor(0.9, 1.0).unwrap().with_prefix_cap(10_000);
    let err = simulate(&law, &OccupancyConfig::new(100_000, 1), &mut seeded(5)).unwrap_err();
    assert!(matches!(err, nested_occupancy::Error::PrefixCapExceeded { cap: 10_000 }), "{err:?}");
}
