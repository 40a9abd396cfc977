use proptest::prelude::*;

use selbo::distributions::{BetaParams, DiagGaussian, DirichletParams};
use selbo::metrics;
use selbo::prior::{forward_map, solve_targets};
use selbo::special::softplus_inv;
use selbo::summary::{floor_renormalize, hard_histogram, Partition};
use selbo::Tensor;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_kl_is_non_negative(
        mu in prop::collection::vec(-3.0f64..3.0, 1..8),
        sigma in 0.05f64..4.0,
        prior_std in 0.1f64..3.0,
    ) {
        let n = mu.len();
        let q = DiagGaussian::new(Tensor::vector(mu), Tensor::vector(vec![softplus_inv(sigma); n])).unwrap();
        prop_assert!(q.kl(prior_std) >= -1e-12);
    }

    #[test]
    fn gaussian_kl_vanishes_only_at_the_prior(prior_std in 0.1f64..3.0, shift in 0.01f64..1.0) {
        let at = |mu: f64, sigma: f64| {
            DiagGaussian::new(Tensor::vector(vec![mu; 3]), Tensor::vector(vec![softplus_inv(sigma); 3]))
                .unwrap()
                .kl(prior_std)
        };
        prop_assert!(at(0.0, prior_std).abs() < 1e-12);
        prop_assert!(at(shift, prior_std) > 1e-12);
        prop_assert!(at(0.0, prior_std * (1.0 + shift)) > 1e-12);
    }

    #[test]
    fn beta_cdf_is_monotone(a in 0.2f64..20.0, b in 0.2f64..20.0, xs in prop::collection::vec(0.0f64..1.0, 2..12)) {
        let p = BetaParams::new(a, b).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let cdf: Vec<f64> = xs.iter().map(|&x| p.cdf(x)).collect();
        for w in cdf.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        prop_assert!((p.cdf(1.0) - 1.0).abs() < 1e-6 && p.cdf(0.0).abs() < 1e-6);
    }

    #[test]
    fn expected_accuracy_is_at_least_half(a in 0.1f64..30.0, b in 0.1f64..30.0) {
        let (gamma0, ea) = forward_map(&BetaParams::new(a, b).unwrap());
        prop_assert!((0.0..=1.0).contains(&gamma0));
        prop_assert!((0.5 - 1e-9..1.0).contains(&ea), "E_a = {ea}");
    }

    #[test]
    fn dirichlet_samples_lie_in_the_open_simplex(alpha in prop::collection::vec(0.05f64..50.0, 2..6), seed in any::<u64>()) {
        use rand::SeedableRng;
        let d = DirichletParams::new(alpha).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let s = d.sample(&mut rng);
            prop_assert!(s.iter().all(|&x| x > 0.0));
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn floor_renormalize_is_idempotent_and_keeps_order(mass in prop::collection::vec(0.0f64..1.0, 2..10)) {
        prop_assume!(mass.iter().sum::<f64>() > 1e-3);
        let once = floor_renormalize(&mass, 1e-6).unwrap();
        let twice = floor_renormalize(&once, 1e-6).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-15);
        }
        for i in 0..mass.len() {
            for j in 0..mass.len() {
                if mass[i] < mass[j] {
                    prop_assert!(once[i] <= once[j]);
                }
            }
        }
    }

    #[test]
    fn simplex_points_fall_in_exactly_one_region(rows in prop::collection::vec(simplex(4), 1..40)) {
        let n = rows.len();
        let probs = Tensor::matrix(n, 4, rows.concat()).unwrap();
        for partition in [Partition::argmax(4).unwrap(), Partition::shells(4, &[0.5, 0.8]).unwrap()] {
            for r in 0..n {
                let region = partition.region_of(probs.row(r)).unwrap();
                prop_assert!(region < partition.region_count());
            }
            let hist = hard_histogram(&probs, &partition).unwrap();
            prop_assert_eq!(hist.iter().sum::<f64>(), n as f64);
        }
    }

    #[test]
    fn auroc_ignores_monotone_transforms(
        pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 4..60),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let positive: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| (s - 0.3).powi(3)).collect();
        prop_assert_eq!(metrics::auroc_binary(&scores, &positive), metrics::auroc_binary(&cubed, &positive));
    }
}

#[test]
fn solver_is_deterministic() {
    let a = solve_targets(0.8, 0.96).unwrap();
    let b = solve_targets(0.8, 0.96).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.residual.to_bits(), b.residual.to_bits());
}
