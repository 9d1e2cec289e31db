//! Values frozen from independent high-precision evaluations.

use entsamp_core::analysis::disc_area;
use entsamp_core::channel::{immse_check, mutual_information, Backend, Channel, TwoPointChannel};
use entsamp_core::mixture::{entropy, token_entropy_bound, two_point};
use entsamp_core::schedule::{hybrid_grid, kl_bound, uniform_eta_grid};
use entsamp_core::score::{latent_posterior_mean, posterior_weights};
use entsamp_core::{Error, Sequential};

fn close(got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "got {got:e}, want {want:e}, tol {tol:e}");
}

#[test]
fn binary_entropy_in_nats() {
    close(entropy(&[0.9, 0.1]).unwrap(), 0.325_082_973_391_448_24, 1e-15);
    close(entropy(&[0.5, 0.5]).unwrap(), std::f64::consts::LN_2, 1e-16);
}

#[test]
fn token_entropy_bounds() {
    close(token_entropy_bound(32, 4096).unwrap(), 266.168_517_335_019, 1e-12);
    close(token_entropy_bound(16, 256).unwrap(), 88.722_839_111_673, 1e-12);
}

#[test]
fn posterior_of_symmetric_pair() {
    let m = two_point(1, 0.0, 2.0, 0.5).unwrap();
    let w = posterior_weights(&m, &[1.0], 1.0).unwrap();
    close(w[0], 0.880_797_077_977_882_4, 1e-15);
    close(latent_posterior_mean(&m, &[1.0], 1.0).unwrap()[0], 0.761_594_155_955_764_9, 1e-15);
}

#[test]
fn two_point_channel_values() {
    let m = two_point(1, 0.0, 2.0, 0.5).unwrap();
    let q = TwoPointChannel::new(&m).unwrap();
    close(q.mmse(1.0), 0.449_599_509_206_672_8, 1e-13);
    close(q.mutual_information(1.0), 0.336_830_820_346_831_6, 1e-13);
    let mi = mutual_information(&m, 4.0, Backend::Quadrature, &Sequential).unwrap();
    close(mi.value, 0.632_720_193_736_867, 1e-13);
    let mi = mutual_information(&m, 0.5, Backend::Quadrature, &Sequential).unwrap();
    close(mi.value, 0.201_345_471_584_805_14, 1e-13);
}

#[test]
fn immse_integral_matches_mutual_information() {
    let m = two_point(1, 0.0, 2.0, 0.5).unwrap();
    for (eta, mi) in [
        (0.5, 0.201_345_471_584_805_14),
        (1.0, 0.336_830_820_346_831_6),
        (4.0, 0.632_720_193_736_867),
    ] {
        let r = immse_check(&m, eta, Backend::Quadrature, 8, &Sequential).unwrap();
        close(r.rhs.value, mi, 1e-9 * mi);
        assert!(r.pass);
    }
}

#[test]
fn worked_bound() {
    let b = kl_bound(std::f64::consts::LN_2, 1.0, 100.0, 0.01, 0.0, 64, 0.0).unwrap();
    close(b.alpha, 1.386_294_361_119_890_6, 1e-15);
    close(b.ell, 4.278_535_926_009_81, 1e-13);
    close(b.big_l, 6.278_535_926_009_81, 1e-13);
    assert_eq!(b.min_steps, 26);
    close(b.h, 0.543_993_684_394_753, 1e-13);
    close(b.kl_disc_term, 1.707_741_945_497_45, 1e-12);
    close(b.kl_total, 1.712_741_945_497_45, 1e-12);
    assert!(matches!(
        kl_bound(std::f64::consts::LN_2, 1.0, 100.0, 0.01, 0.0, 25, 0.0),
        Err(Error::TooFewSteps { steps: 25, min_steps: 26 })
    ));
}

#[test]
fn hybrid_grid_has_exactly_k_steps() {
    for k in [26, 32, 64, 128, 256] {
        let (g, _) = hybrid_grid(std::f64::consts::LN_2, 1.0, 100.0, 0.01, 0.0, k).unwrap();
        assert_eq!(g.steps(), k);
        assert_eq!(g.t()[0], 100.0);
        assert_eq!(g.t()[k], 0.01);
    }
}

#[test]
fn golden_disc_area() {
    let m = two_point(1, 0.0, 2.0, 0.5).unwrap();
    let g = uniform_eta_grid(100.0, 0.01, 0.0, 8).unwrap();
    let ch = Channel::new(&m, Backend::Quadrature).unwrap();
    let area = disc_area(&ch, &m, &g, 64, &Sequential).unwrap();
    close(area.total.value, 11.006_484_495_338_249, 1e-10);
    assert_eq!(area.negative_cells(), 0);
}
