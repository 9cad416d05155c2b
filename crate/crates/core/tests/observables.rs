mod common;

use common::{kt_axes_oracle, pt_mass_oracle, random_image, rel_err, rng, tau_oracle};
use lagan_core::jet::{JetImage, Label, Origin};
use lagan_core::observables::*;
use lagan_core::preprocess::parity_flip;
use lagan_core::Error;
use proptest::prelude::*;

fn scaled(img: &JetImage, c: f64) -> JetImage {
    JetImage::from_pixels(img.pixels().iter().map(|v| v * c).collect(), img.label, img.origin).unwrap()
}

#[test]
fn kinematics_match_direct_summation() {
    let mut r = rng(21);
    for _ in 0..300 {
        let img = random_image(&mut r, 80);
        let (pt, m) = pt_mass_oracle(&img);
        assert!(rel_err(image_pt(&img), pt) < 1e-12);
        // mass is a difference of large squares; compare on the scale of the energy
        assert!((image_mass(&img) - m).abs() <= 1e-12 * img.sum().max(m));
    }
}

#[test]
fn axes_and_tau_match_exhaustive_clustering() {
    let mut r = rng(22);
    for _ in 0..150 {
        let img = random_image(&mut r, 40);
        let nz = img.nonzero().count();
        for n in 1..=2.min(nz) {
            let mut got = find_axes(&img, n).unwrap().axes;
            let mut want = kt_axes_oracle(&img, n);
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g.0 - w.0).abs() < 1e-12 && (g.1 - w.1).abs() < 1e-12, "{got:?} vs {want:?}");
            }
            let t = tau_n(&img, n).unwrap();
            let o = tau_oracle(&img, n);
            assert!(rel_err(t, o) < 1e-12, "{t} vs {o}");
        }
    }
}

#[test]
fn tau_of_as_many_axes_as_pixels_is_zero() {
    let mut r = rng(5);
    let img = random_image(&mut r, 6);
    let n = img.nonzero().count();
    assert_eq!(tau_n(&img, n).unwrap(), 0.0);
    assert!(matches!(find_axes(&img, n + 1), Err(Error::InsufficientConstituents { .. })));
    assert!(find_axes(&img, 0).is_err());
}

#[test]
fn single_pixel_image_has_undefined_tau21() {
    let mut px = vec![0.0; 625];
    px[100] = 3.0;
    let img = JetImage::from_pixels(px, Label::Signal, Origin::Real).unwrap();
    let o = observables(&img);
    assert_eq!(o.tau1, Some(0.0));
    assert_eq!(o.tau21, None);
    let (_, diag) = observables_batch(&[img]);
    assert_eq!(diag.undefined_tau21, 1);
}

#[test]
fn mass_of_two_pixels_matches_closed_form() {
    // two massless deposits at equal eta separated by dphi: m^2 = 2 a b (1 - cos dphi)
    let mut px = vec![0.0; 625];
    px[12 * 25 + 10] = 40.0;
    px[12 * 25 + 16] = 60.0;
    let img = JetImage::from_pixels(px, Label::Signal, Origin::Real).unwrap();
    let expect = (2.0 * 40.0 * 60.0 * (1.0 - 0.6f64.cos())).sqrt();
    assert!(rel_err(image_mass(&img), expect) < 1e-12);
}

#[test]
fn histogram_counts_every_pixel_in_range() {
    let mut r = rng(30);
    let imgs: Vec<_> = (0..50).map(|_| random_image(&mut r, 30)).collect();
    let edges = intensity_edges(&imgs, INTENSITY_FLOOR, 20).unwrap();
    let h = pixel_intensity_histogram(&imgs, &edges);
    let expect = imgs.iter().flat_map(|i| i.pixels().iter()).filter(|&&v| v >= INTENSITY_FLOOR).count() as u64;
    assert_eq!(h.iter().sum::<u64>(), expect);
    for w in edges.windows(3) {
        assert!(rel_err(w[1] / w[0], w[2] / w[1]) < 1e-9);
    }
    assert!(log_edges(0.0, 1.0, 3).is_err());
}

proptest! {
    #[test]
    fn tau21_is_scale_invariant(seed in 0u64..100_000, c in 1e-3f64..1e3) {
        let img = random_image(&mut rng(seed), 60);
        if let Ok(t) = tau21(&img) {
            let s = tau21(&scaled(&img, c)).unwrap();
            prop_assert!(rel_err(s, t) < 1e-12, "{} vs {}", s, t);
        }
    }

    #[test]
    fn mass_is_parity_invariant(seed in 0u64..100_000) {
        let img = random_image(&mut rng(seed), 60);
        let mut px = vec![0.0; 625];
        for i in 0..25 {
            for j in 0..25 {
                px[(24 - i) * 25 + j] = img.get(i, j);
            }
        }
        let mirrored = JetImage::from_pixels(px, img.label, img.origin).unwrap();
        let m = image_mass(&img);
        prop_assert!((image_mass(&mirrored) - m).abs() <= 1e-12 * img.sum());
        prop_assert!((image_mass(&parity_flip(&img)) - m).abs() <= 1e-12 * img.sum());
    }

    #[test]
    fn tau_values_are_bounded(seed in 0u64..100_000) {
        let img = random_image(&mut rng(seed), 60);
        let o = observables(&img);
        if let (Some(t1), Some(t2)) = (o.tau1, o.tau2) {
            prop_assert!(t1 >= 0.0 && t2 >= 0.0);
            // no pixel is farther than the image diagonal from any axis
            prop_assert!(t1 <= 2.4f64.hypot(2.4));
        }
        prop_assert!(o.pt <= img.sum() * (1.0 + 1e-12));
    }
}
