use entsamp_core::analysis::{approx_report, disc_area_with};
use entsamp_core::channel::{entropy_envelope, TwoPointChannel};
use entsamp_core::mixture::{sample_target, two_point};
use entsamp_core::schedule::{
    geometric_time_grid, grid_refine, hybrid_grid, uniform_eta_grid, uniform_time_grid,
};
use entsamp_core::score::{posterior_weights, ScoreOnly};
use entsamp_core::{MixtureModel, Perturbation, ScoreModel, ScoreOracle, Sequential};
use proptest::prelude::*;

fn mixture() -> impl Strategy<Value = MixtureModel> {
    (1usize..4, 1usize..6, 0.0f64..1.0).prop_flat_map(|(dim, j, eps)| {
        (
            prop::collection::vec(-4.0f64..4.0, dim * j),
            prop::collection::vec(0.01f64..1.0, j),
        )
            .prop_map(move |(centers, w)| {
                let s: f64 = w.iter().sum();
                let w = w.iter().map(|x| x / s).collect();
                MixtureModel::new(dim, centers, w, eps).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_weights_are_a_distribution(m in mixture(), t in 1e-4f64..50.0, x0 in -20.0f64..20.0) {
        let x = vec![x0; m.dim()];
        let w = posterior_weights(&m, &x, t).unwrap();
        prop_assert!(w.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_only_wrapper_is_bit_identical(m in mixture(), t in 1e-3f64..20.0, x0 in -5.0f64..5.0) {
        let x = vec![x0; m.dim()];
        let oracle = ScoreOracle::exact(&m);
        let wrapped = ScoreOnly(ScoreOracle::exact(&m));
        let mut s = entsamp_core::score::Scratch::new();
        let (mut a, mut b) = (vec![0.0; m.dim()], vec![0.0; m.dim()]);
        oracle.latent_mean_into(&x, t, &mut a, &mut s).unwrap();
        wrapped.latent_mean_into(&x, t, &mut b, &mut s).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn entropy_is_at_most_log_components(m in mixture()) {
        prop_assert!(m.entropy() >= 0.0);
        prop_assert!(m.entropy() <= (m.components() as f64).ln() + 1e-12);
    }

    #[test]
    fn two_point_mmse_respects_envelope(sep in 0.1f64..8.0, log_eta in -4.0f64..4.0) {
        let m = two_point(1, 0.0, sep, 0.5).unwrap();
        let q = TwoPointChannel::new(&m).unwrap();
        let eta = 10f64.powf(log_eta);
        let v = q.mmse(eta);
        prop_assert!(v >= 0.0);
        prop_assert!(v <= entropy_envelope(&m, eta));
        prop_assert!(q.mmse(eta * 1.1) <= v);
        prop_assert!(q.mutual_information(eta) <= m.entropy());
    }

    #[test]
    fn grids_are_monotone(k in 1usize..64, eps in 0.0f64..0.5, kind in 0u8..3) {
        let g = match kind {
            0 => uniform_time_grid(10.0, 0.01, eps, k),
            1 => geometric_time_grid(10.0, 0.01, eps, k),
            _ => uniform_eta_grid(10.0, 0.01, eps, k),
        }
        .unwrap();
        prop_assert_eq!(g.steps(), k);
        prop_assert!(g.t().windows(2).all(|w| w[0] > w[1]));
        prop_assert!(g.eta().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(g.a().iter().all(|&a| a > 0.0 && a < 1.0));
        prop_assert!(g.gamma().iter().zip(g.eta()).all(|(gm, e)| gm >= e));
    }

    #[test]
    fn refinement_never_increases_area(k in 1usize..16, extra in 1usize..16, sep in 0.5f64..6.0) {
        let m = two_point(1, 0.0, sep, 0.5).unwrap();
        let q = TwoPointChannel::new(&m).unwrap();
        let g = uniform_eta_grid(50.0, 0.02, 0.0, k).unwrap();
        let fine = grid_refine(&g, k + extra).unwrap();
        prop_assert_eq!(fine.steps(), k + extra);
        prop_assert!(g.eta().iter().all(|e| fine.eta().contains(e)));
        let coarse = disc_area_with(|e| q.mmse(e), &g, 32).total.value;
        let refined = disc_area_with(|e| q.mmse(e), &fine, 32).total.value;
        prop_assert!(refined <= coarse * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn hybrid_area_below_both_bounds(k in 32usize..300, sep in 0.5f64..4.0, delta in 1e-3f64..0.1) {
        let m = two_point(1, 0.0, sep, 0.5).unwrap();
        let s = m.summary();
        let q = TwoPointChannel::new(&m).unwrap();
        if let Ok((g, b)) = hybrid_grid(s.entropy_nats, s.second_moment, 100.0, delta, 0.0, k) {
            let area = disc_area_with(|e| q.mmse(e), &g, 16).total.value;
            prop_assert!(area >= 0.0);
            prop_assert!(area <= b.disc_bound);
            prop_assert!(area <= b.hybrid_area_bound());
        }
    }

    #[test]
    fn latent_energy_below_x0_energy(k in 2usize..40, eps in 0.0f64..1.0, bias in -1.0f64..1.0) {
        let m = two_point(1, eps, 2.0, 0.5).unwrap();
        let g = geometric_time_grid(20.0, 0.01, eps, k).unwrap();
        let o = ScoreOracle::perturbed(&m, Perturbation::ConstantBias(vec![bias])).unwrap();
        let r = approx_report(&o, &g, 8, 3, &Sequential).unwrap();
        prop_assert!(r.e_apx_m.value <= r.e_apx_sum.value * (1.0 + 1e-12));
    }

    #[test]
    fn target_samples_are_seed_deterministic(m in mixture(), seed in any::<u64>()) {
        let (a, la) = sample_target(&m, 16, seed).unwrap();
        let (b, lb) = sample_target(&m, 16, seed).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(la, lb);
    }
}
