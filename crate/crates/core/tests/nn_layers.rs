mod common;

use common::{
    batchnorm_oracle, conv_oracle, layer_fd, local_oracle, max_abs_diff, minibatch_oracle, randn, rng,
    upsample_oracle,
};
use lagan_core::nn::{output_extent, Border, NormMode, Tape};
use lagan_core::{Error, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn conv(x: &Tensor, w: &Tensor, b: &Tensor, border: Border, stride: usize) -> Tensor {
    let mut t = Tape::new();
    let (x, w, b) = (t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone()));
    let y = t.conv2d(x, w, Some(b), border, stride).unwrap();
    t.value(y).clone()
}

fn local(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize) -> Tensor {
    let mut t = Tape::new();
    let (x, w) = (t.constant(x.clone()), t.constant(w.clone()));
    let b = b.map(|b| t.constant(b.clone()));
    let y = t.local2d(x, w, b, stride).unwrap();
    t.value(y).clone()
}

/// Local weights with every location bank equal to the conv filter.
fn tie(w: &Tensor, out: usize) -> Tensor {
    let bank = w.data();
    let mut s = vec![out, out];
    s.extend_from_slice(w.shape());
    Tensor::from_fn(&s, |k| bank[k % bank.len()])
}

#[test]
fn conv_valid_extent_matches_shape_law() {
    let mut r = rng(1);
    let x = randn(&mut r, &[1, 25, 25, 1]);
    let w = randn(&mut r, &[5, 5, 1, 2]);
    let y = conv(&x, &w, &Tensor::zeros(&[2]), Border::Valid, 1);
    assert_eq!(y.shape(), &[1, 21, 21, 2]);
}

#[test]
fn conv_identity_kernel() {
    let mut r = rng(2);
    let x = randn(&mut r, &[2, 7, 7, 1]);
    let w = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
    let y = conv(&x, &w, &Tensor::zeros(&[1]), Border::Valid, 1);
    assert_eq!(y.data(), x.data());
    let y = conv(&x, &w, &Tensor::zeros(&[1]), Border::Same, 1);
    assert_eq!(y.data(), x.data());
}

#[test]
fn conv_matches_sliding_window_oracle() {
    let mut r = rng(3);
    for (border, pad) in [(Border::Valid, 0), (Border::Same, 1)] {
        let x = randn(&mut r, &[2, 6, 6, 2]);
        let w = randn(&mut r, &[3, 3, 2, 3]);
        let b = randn(&mut r, &[3]);
        let y = conv(&x, &w, &b, border, 1);
        let want = conv_oracle(&x, &w, Some(&b), pad, 1);
        assert_eq!(y.shape(), want.shape());
        assert!(max_abs_diff(y.data(), want.data()) < 1e-12);
    }
    let x = randn(&mut r, &[1, 7, 7, 1]);
    let w = randn(&mut r, &[3, 3, 1, 2]);
    let b = randn(&mut r, &[2]);
    let y = conv(&x, &w, &b, Border::Valid, 2);
    assert!(max_abs_diff(y.data(), conv_oracle(&x, &w, Some(&b), 0, 2).data()) < 1e-12);
}

#[test]
fn conv_channel_mismatch() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros(&[1, 5, 5, 2]));
    let w = t.constant(Tensor::zeros(&[3, 3, 1, 4]));
    assert!(matches!(t.conv2d(x, w, None, Border::Valid, 1), Err(Error::Dimension(_))));
}

#[test]
fn local_extent_and_oracle() {
    let mut r = rng(4);
    let x = randn(&mut r, &[1, 28, 28, 1]);
    let w = randn(&mut r, &[26, 26, 3, 3, 1, 6]);
    assert_eq!(local(&x, &w, None, 1).shape(), &[1, 26, 26, 6]);

    let x = randn(&mut r, &[3, 5, 5, 2]);
    let w = randn(&mut r, &[4, 4, 2, 2, 2, 3]);
    let b = randn(&mut r, &[4, 4, 3]);
    let y = local(&x, &w, Some(&b), 1);
    assert!(max_abs_diff(y.data(), local_oracle(&x, &w, Some(&b), 1).data()) < 1e-12);

    let x = randn(&mut r, &[2, 7, 7, 1]);
    let w = randn(&mut r, &[3, 3, 3, 3, 1, 2]);
    let y = local(&x, &w, None, 2);
    assert!(max_abs_diff(y.data(), local_oracle(&x, &w, None, 2).data()) < 1e-12);
}

#[test]
fn local_rejects_non_tiling_stride() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros(&[1, 6, 6, 1]));
    let w = t.constant(Tensor::zeros(&[2, 2, 3, 3, 1, 1]));
    assert!(matches!(t.local2d(x, w, None, 2), Err(Error::Dimension(_))));
}

#[test]
fn batchnorm_train_statistics() {
    let mut r = rng(5);
    let x = randn(&mut r, &[6, 3, 3, 4]);
    let gamma = vec![1.0; 4];
    let beta = vec![0.0; 4];
    let mut t = Tape::new();
    let (xv, g, b) = (
        t.constant(x.clone()),
        t.constant(Tensor::new(&[4], gamma.clone()).unwrap()),
        t.constant(Tensor::new(&[4], beta.clone()).unwrap()),
    );
    let (y, stats) = t.batchnorm(xv, g, b, 1e-5, NormMode::Train).unwrap();
    let y = t.value(y).data().to_vec();
    let (want, mean, var) = batchnorm_oracle(&x, &gamma, &beta, 1e-5);
    assert!(max_abs_diff(&y, &want) < 1e-12);
    let stats = stats.unwrap();
    assert!(max_abs_diff(&stats.mean, &mean) < 1e-12);
    assert!(max_abs_diff(&stats.var, &var) < 1e-12);
    for c in 0..4 {
        let col: Vec<f64> = y.iter().skip(c).step_by(4).copied().collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-3);
    }
}

#[test]
fn batchnorm_constant_channel_gives_beta() {
    let x = Tensor::filled(&[4, 2, 2, 1], 3.7);
    let mut t = Tape::new();
    let (xv, g, b) = (
        t.constant(x),
        t.constant(Tensor::filled(&[1], 2.0)),
        t.constant(Tensor::filled(&[1], -0.4)),
    );
    let (y, _) = t.batchnorm(xv, g, b, 1e-5, NormMode::Train).unwrap();
    assert!(t.value(y).data().iter().all(|&v| (v + 0.4).abs() < 1e-12));
}

#[test]
fn batchnorm_single_sample_train_is_degenerate() {
    let mut t = Tape::new();
    let (xv, g, b) = (
        t.constant(Tensor::zeros(&[1, 3, 3, 2])),
        t.constant(Tensor::filled(&[2], 1.0)),
        t.constant(Tensor::zeros(&[2])),
    );
    assert!(matches!(t.batchnorm(xv, g, b, 1e-5, NormMode::Train), Err(Error::DegenerateBatch(_))));
}

#[test]
fn upsample_matches_block_replication() {
    let mut r = rng(6);
    let x = randn(&mut r, &[2, 14, 14, 3]);
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let y = t.upsample2x(xv).unwrap();
    assert_eq!(t.value(y).shape(), &[2, 28, 28, 3]);
    assert_eq!(t.value(y).data(), upsample_oracle(&x).data());
    assert!((t.value(y).sum() - 4.0 * x.sum()).abs() < 1e-9);
}

#[test]
fn minibatch_disc_cases() {
    // identical samples: each sees exp(0) from the other
    let mut t = Tape::new();
    let x = t.constant(Tensor::new(&[2, 2], vec![0.3, -1.0, 0.3, -1.0]).unwrap());
    let k = t.constant(Tensor::from_fn(&[2, 3, 2], |i| i as f64 * 0.1));
    let y = t.minibatch_disc(x, k).unwrap();
    assert!(t.value(y).data().iter().all(|&v| (v - 1.0).abs() < 1e-15));

    // L1 distance d in a kernel contributes exp(-d)
    let mut t = Tape::new();
    let x = t.constant(Tensor::new(&[2, 1], vec![0.0, 1.5]).unwrap());
    let k = t.constant(Tensor::new(&[1, 1, 2], vec![1.0, -1.0]).unwrap());
    let y = t.minibatch_disc(x, k).unwrap();
    let want = (-3.0f64).exp();
    assert!(t.value(y).data().iter().all(|&v| (v - want).abs() < 1e-15));

    let mut r = rng(7);
    let xs = randn(&mut r, &[4, 3]);
    let ks = randn(&mut r, &[3, 2, 2]);
    let mut t = Tape::new();
    let (x, k) = (t.constant(xs.clone()), t.constant(ks.clone()));
    let y = t.minibatch_disc(x, k).unwrap();
    assert!(max_abs_diff(t.value(y).data(), &minibatch_oracle(&xs, &ks)) < 1e-12);

    let mut t = Tape::new();
    let (x, k) = (t.constant(Tensor::zeros(&[1, 3])), t.constant(ks.clone()));
    let y = t.minibatch_disc(x, k).unwrap();
    assert_eq!(t.value(y).data(), &[0.0, 0.0]);

    let mut t = Tape::new();
    let (x, k) = (t.constant(Tensor::zeros(&[0, 3])), t.constant(ks));
    assert!(matches!(t.minibatch_disc(x, k), Err(Error::DegenerateBatch(_))));
}

#[test]
fn hadamard_embed_cases() {
    let mut r = rng(8);
    let z = randn(&mut r, &[3, 200]);
    let table = randn(&mut r, &[2, 200]);
    let classes = [1, 0, 1];

    let mut t = Tape::new();
    let (zv, ones) = (t.constant(z.clone()), t.constant(Tensor::filled(&[2, 200], 1.0)));
    let y = t.hadamard_embed(zv, ones, &classes).unwrap();
    assert_eq!(t.value(y).data(), z.data());

    let mut t = Tape::new();
    let (zv, tv) = (t.constant(Tensor::zeros(&[3, 200])), t.constant(table.clone()));
    let y = t.hadamard_embed(zv, tv, &classes).unwrap();
    assert!(t.value(y).data().iter().all(|&v| v == 0.0));

    let mut t = Tape::new();
    let (zv, tv) = (t.constant(z.clone()), t.constant(table.clone()));
    let y = t.hadamard_embed(zv, tv, &classes).unwrap();
    for (i, &c) in classes.iter().enumerate() {
        for d in 0..200 {
            assert_eq!(t.value(y).data()[i * 200 + d], z.data()[i * 200 + d] * table.data()[c * 200 + d]);
        }
    }
}

#[test]
fn every_layer_kind_matches_finite_differences() {
    for (name, err) in layer_fd::layer_gradient_errors(11, 5) {
        assert!(err < 1e-4, "{name}: max relative error {err:.3e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shape_law_holds(f in 1usize..6, s in 1usize..4, steps in 0usize..4, cin in 1usize..3) {
        let l = f + s * steps;
        let want = (l - f) / s + 1;
        prop_assert_eq!(output_extent(l, f, s, Border::Valid).unwrap(), want);
        let mut r = rng((l * 100 + f * 10 + s) as u64);
        let x = randn(&mut r, &[1, l, l, cin]);
        let w = randn(&mut r, &[f, f, cin, 1]);
        prop_assert_eq!(conv(&x, &w, &Tensor::zeros(&[1]), Border::Valid, s).shape()[1], want);
        let lw = randn(&mut r, &[want, want, f, f, cin, 1]);
        prop_assert_eq!(local(&x, &lw, None, s).shape()[1], want);
    }

    #[test]
    fn tied_local_equals_conv_bitwise(seed in 0u64..1000) {
        let mut r = rng(seed);
        let f = r.random_range(1..4);
        let l = f + r.random_range(0..4);
        let (cin, n) = (r.random_range(1..3), r.random_range(1..4));
        let x = randn(&mut r, &[2, l, l, cin]);
        let w = randn(&mut r, &[f, f, cin, n]);
        let out = l - f + 1;
        let y_conv = conv(&x, &w, &Tensor::zeros(&[n]), Border::Valid, 1);
        let y_loc = local(&x, &tie(&w, out), None, 1);
        prop_assert_eq!(y_conv.data(), y_loc.data());
    }

    #[test]
    fn conv_and_local_are_linear(seed in 0u64..1000, a in -2.0f64..2.0) {
        let mut r = rng(seed);
        let x1 = randn(&mut r, &[1, 5, 5, 2]);
        let x2 = randn(&mut r, &[1, 5, 5, 2]);
        let w = randn(&mut r, &[3, 3, 2, 2]);
        let lw = randn(&mut r, &[3, 3, 3, 3, 2, 2]);
        let combo = Tensor::from_fn(&[1, 5, 5, 2], |i| a * x1.data()[i] + x2.data()[i]);
        let z = Tensor::zeros(&[2]);
        let lhs = conv(&combo, &w, &z, Border::Same, 1);
        let (c1, c2) = (conv(&x1, &w, &z, Border::Same, 1), conv(&x2, &w, &z, Border::Same, 1));
        let rhs: Vec<f64> = c1.data().iter().zip(c2.data()).map(|(p, q)| a * p + q).collect();
        prop_assert!(max_abs_diff(lhs.data(), &rhs) < 1e-10);
        let lhs = local(&combo, &lw, None, 1);
        let (l1, l2) = (local(&x1, &lw, None, 1), local(&x2, &lw, None, 1));
        let rhs: Vec<f64> = l1.data().iter().zip(l2.data()).map(|(p, q)| a * p + q).collect();
        prop_assert!(max_abs_diff(lhs.data(), &rhs) < 1e-10);
    }

    #[test]
    fn minibatch_disc_is_permutation_equivariant(seed in 0u64..1000) {
        let mut r = rng(seed);
        let n = 5;
        let x = randn(&mut r, &[n, 3]);
        let k = randn(&mut r, &[3, 4, 2]);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let xp = Tensor::from_fn(&[n, 3], |i| x.data()[perm[i / 3] * 3 + i % 3]);
        let run = |x: &Tensor| {
            let mut t = Tape::new();
            let (xv, kv) = (t.constant(x.clone()), t.constant(k.clone()));
            let y = t.minibatch_disc(xv, kv).unwrap();
            t.value(y).data().to_vec()
        };
        let (y, yp) = (run(&x), run(&xp));
        for i in 0..n {
            for b in 0..4 {
                prop_assert!((yp[i * 4 + b] - y[perm[i] * 4 + b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relu_is_non_negative(v in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(&[v.len()], v).unwrap());
        let y = t.relu(x);
        prop_assert!(t.value(y).data().iter().all(|&v| v >= 0.0));
    }
}
