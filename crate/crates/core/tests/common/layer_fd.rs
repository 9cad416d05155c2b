//! Finite-difference checks for every layer kind on random small shapes.

use lagan_core::nn::{Border, NormMode, Tape, Var};
use rand::Rng;

use super::{grad_check, randn, randn_away_from_zero, rng};

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-3;

/// Projects an output onto fixed random weights so every element of the
/// output contributes to the scalar under test.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let mut r = rng(seed ^ 0x9e37);
    let n = tape.value(y).len();
    let w: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    tape.dot(y, &w).unwrap()
}

/// Runs `instances` random checks per layer kind and returns the worst
/// relative error for each.
pub fn layer_gradient_errors(seed: u64, instances: usize) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut worst = |name: &'static str, f: &mut dyn FnMut(u64) -> f64| {
        let mut w = 0.0f64;
        for k in 0..instances {
            w = w.max(f(seed.wrapping_mul(31).wrapping_add(k as u64)));
        }
        out.push((name, w));
    };

    worst("dense", &mut |s| {
        let mut r = rng(s);
        let (b, a, o) = (r.random_range(1..4), r.random_range(1..5), r.random_range(1..4));
        let inputs = [randn(&mut r, &[b, a]), randn(&mut r, &[a, o]), randn(&mut r, &[o])];
        grad_check(&inputs, &|t, v| {
            let y = t.dense(v[0], v[1], Some(v[2])).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("conv2d_same", &mut |s| {
        let mut r = rng(s);
        let (b, l, cin, n) = (r.random_range(1..3), r.random_range(3..6), r.random_range(1..3), r.random_range(1..3));
        let f = [1, 3][r.random_range(0..2)];
        let inputs = [randn(&mut r, &[b, l, l, cin]), randn(&mut r, &[f, f, cin, n]), randn(&mut r, &[n])];
        grad_check(&inputs, &|t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), Border::Same, 1).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("conv2d_valid", &mut |s| {
        let mut r = rng(s);
        let (b, cin, n) = (r.random_range(1..3), r.random_range(1..3), r.random_range(1..3));
        let f = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let l = f + stride * r.random_range(1..3);
        let inputs = [randn(&mut r, &[b, l, l, cin]), randn(&mut r, &[f, f, cin, n]), randn(&mut r, &[n])];
        grad_check(&inputs, &|t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), Border::Valid, stride).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("local2d", &mut |s| {
        let mut r = rng(s);
        let (b, cin, n) = (r.random_range(1..3), r.random_range(1..3), r.random_range(1..3));
        let f = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let w_out = r.random_range(1..4);
        let l = f + stride * (w_out - 1);
        let bias = r.random_bool(0.5);
        let mut inputs = vec![randn(&mut r, &[b, l, l, cin]), randn(&mut r, &[w_out, w_out, f, f, cin, n])];
        if bias {
            inputs.push(randn(&mut r, &[w_out, w_out, n]));
        }
        grad_check(&inputs, &|t, v| {
            let y = t.local2d(v[0], v[1], v.get(2).copied(), stride).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("batchnorm_train", &mut |s| {
        let mut r = rng(s);
        let (b, l, c) = (r.random_range(2..4), r.random_range(1..3), r.random_range(1..4));
        let inputs = [randn(&mut r, &[b, l, l, c]), randn(&mut r, &[c]), randn(&mut r, &[c])];
        grad_check(&inputs, &|t, v| {
            let (y, _) = t.batchnorm(v[0], v[1], v[2], 1e-5, NormMode::Train).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("batchnorm_inference", &mut |s| {
        let mut r = rng(s);
        let (b, c) = (r.random_range(1..4), r.random_range(1..4));
        let mean: Vec<f64> = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
        let var: Vec<f64> = (0..c).map(|_| r.random_range(0.2..2.0)).collect();
        let inputs = [randn(&mut r, &[b, 2, 2, c]), randn(&mut r, &[c]), randn(&mut r, &[c])];
        grad_check(&inputs, &|t, v| {
            let (y, _) = t
                .batchnorm(v[0], v[1], v[2], 1e-5, NormMode::Inference { mean: &mean, var: &var })
                .unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("upsample2x", &mut |s| {
        let mut r = rng(s);
        let (b, l, c) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..3));
        let inputs = [randn(&mut r, &[b, l, l, c])];
        grad_check(&inputs, &|t, v| {
            let y = t.upsample2x(v[0]).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("relu", &mut |s| {
        let mut r = rng(s);
        let n = r.random_range(1..10);
        let inputs = [randn_away_from_zero(&mut r, &[n], 1e-3)];
        grad_check(&inputs, &|t, v| {
            let y = t.relu(v[0]);
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("leaky_relu", &mut |s| {
        let mut r = rng(s);
        let n = r.random_range(1..10);
        let inputs = [randn_away_from_zero(&mut r, &[n], 1e-3)];
        grad_check(&inputs, &|t, v| {
            let y = t.leaky_relu(v[0], 0.2);
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("sigmoid", &mut |s| {
        let mut r = rng(s);
        let n = r.random_range(1..10);
        let inputs = [randn(&mut r, &[n])];
        grad_check(&inputs, &|t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("minibatch_disc", &mut |s| {
        let mut r = rng(s);
        let (n, a, b, c) = (r.random_range(2..5), r.random_range(1..4), r.random_range(1..3), r.random_range(1..3));
        let inputs = [randn(&mut r, &[n, a]), randn(&mut r, &[a, b, c])];
        grad_check(&inputs, &|t, v| {
            let y = t.minibatch_disc(v[0], v[1]).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("hadamard_embed", &mut |s| {
        let mut r = rng(s);
        let (n, d) = (r.random_range(1..5), r.random_range(1..5));
        let classes: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        let inputs = [randn(&mut r, &[n, d]), randn(&mut r, &[2, d])];
        grad_check(&inputs, &|t, v| {
            let y = t.hadamard_embed(v[0], v[1], &classes).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    worst("bce_with_logits", &mut |s| {
        let mut r = rng(s);
        let n = r.random_range(1..6);
        let targets: Vec<f64> = (0..n).map(|_| r.random_range(0..2) as f64).collect();
        let inputs = [randn(&mut r, &[n])];
        grad_check(&inputs, &|t, v| t.bce_with_logits(v[0], &targets).unwrap(), STEP, FLOOR)
    });

    worst("concat_reshape", &mut |s| {
        let mut r = rng(s);
        let (n, a, b) = (r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
        let inputs = [randn(&mut r, &[n, a, 1]), randn(&mut r, &[n, b])];
        grad_check(&inputs, &|t, v| {
            let flat = t.reshape(v[0], &[n, a]).unwrap();
            let y = t.concat(flat, v[1]).unwrap();
            project(t, y, s)
        }, STEP, FLOOR)
    });

    out
}
