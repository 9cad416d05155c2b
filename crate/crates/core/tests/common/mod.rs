#![allow(dead_code)]
//! Independent oracles shared by the integration and acceptance tests.

pub mod layer_fd;


use lagan_core::nn::{Tape, Var};
use lagan_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        // Box-Muller, kept local so the oracle does not share code paths.
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

/// Normal samples pushed at least `gap` away from zero.
pub fn randn_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    let mut t = randn(rng, shape);
    for v in t.data_mut() {
        if v.abs() < gap {
            *v = if *v >= 0.0 { gap + v.abs() } else { -gap - v.abs() };
        }
    }
    t
}

// ---------------------------------------------------------------------------
// brute-force layer oracles (NHWC)

pub fn conv_oracle(x: &Tensor, w: &Tensor, b: Option<&Tensor>, pad: usize, stride: usize) -> Tensor {
    let (bs, l, cin) = (x.shape()[0], x.shape()[1], x.shape()[3]);
    let (f, n) = (w.shape()[0], w.shape()[3]);
    let out = (l + 2 * pad - f) / stride + 1;
    let mut y = Tensor::zeros(&[bs, out, out, n]);
    for s in 0..bs {
        for i in 0..out {
            for j in 0..out {
                for o in 0..n {
                    let mut acc = b.map_or(0.0, |b| b.data()[o]);
                    for p in 0..f {
                        for q in 0..f {
                            let ii = (i * stride + p) as isize - pad as isize;
                            let jj = (j * stride + q) as isize - pad as isize;
                            if ii < 0 || jj < 0 || ii >= l as isize || jj >= l as isize {
                                continue;
                            }
                            for c in 0..cin {
                                let xv = x.data()[((s * l + ii as usize) * l + jj as usize) * cin + c];
                                let wv = w.data()[((p * f + q) * cin + c) * n + o];
                                acc += xv * wv;
                            }
                        }
                    }
                    y.data_mut()[((s * out + i) * out + j) * n + o] = acc;
                }
            }
        }
    }
    y
}

pub fn local_oracle(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize) -> Tensor {
    let (bs, l, cin) = (x.shape()[0], x.shape()[1], x.shape()[3]);
    let (out, f, n) = (w.shape()[0], w.shape()[2], w.shape()[5]);
    let mut y = Tensor::zeros(&[bs, out, out, n]);
    for s in 0..bs {
        for i in 0..out {
            for j in 0..out {
                for o in 0..n {
                    let mut acc = b.map_or(0.0, |b| b.data()[(i * out + j) * n + o]);
                    for p in 0..f {
                        for q in 0..f {
                            for c in 0..cin {
                                let xv = x.data()[((s * l + i * stride + p) * l + j * stride + q) * cin + c];
                                let widx = ((((i * out + j) * f + p) * f + q) * cin + c) * n + o;
                                acc += xv * w.data()[widx];
                            }
                        }
                    }
                    y.data_mut()[((s * out + i) * out + j) * n + o] = acc;
                }
            }
        }
    }
    y
}

/// `(y, mean, var)` from the textbook batch-normalization formula.
pub fn batchnorm_oracle(x: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = gamma.len();
    let rows = x.len() / c;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let vals: Vec<f64> = (0..rows).map(|r| x.data()[r * c + ch]).collect();
        let m = vals.iter().sum::<f64>() / rows as f64;
        let v = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / rows as f64;
        mean[ch] = m;
        var[ch] = v;
    }
    let y = (0..x.len())
        .map(|k| {
            let ch = k % c;
            gamma[ch] * (x.data()[k] - mean[ch]) / (var[ch] + eps).sqrt() + beta[ch]
        })
        .collect();
    (y, mean, var)
}

pub fn upsample_oracle(x: &Tensor) -> Tensor {
    let (bs, l, c) = (x.shape()[0], x.shape()[1], x.shape()[3]);
    let mut y = Tensor::zeros(&[bs, 2 * l, 2 * l, c]);
    for s in 0..bs {
        for i in 0..l {
            for j in 0..l {
                for ch in 0..c {
                    let v = x.data()[((s * l + i) * l + j) * c + ch];
                    for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        y.data_mut()[((s * 2 * l + 2 * i + di) * 2 * l + 2 * j + dj) * c + ch] = v;
                    }
                }
            }
        }
    }
    y
}

pub fn minibatch_oracle(x: &Tensor, kernel: &Tensor) -> Vec<f64> {
    let (n, a) = (x.shape()[0], x.shape()[1]);
    let (kb, kc) = (kernel.shape()[1], kernel.shape()[2]);
    let mut m = vec![vec![vec![0.0; kc]; kb]; n];
    for i in 0..n {
        for b in 0..kb {
            for c in 0..kc {
                m[i][b][c] = (0..a).map(|f| x.data()[i * a + f] * kernel.data()[(f * kb + b) * kc + c]).sum();
            }
        }
    }
    let mut out = vec![0.0; n * kb];
    for i in 0..n {
        for b in 0..kb {
            for j in 0..n {
                if i != j {
                    let l1: f64 = (0..kc).map(|c| (m[i][b][c] - m[j][b][c]).abs()).sum();
                    out[i * kb + b] += (-l1).exp();
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// finite differences

/// Maximum relative error between analytic gradients of `f` and central
/// differences with step `h`, over every element of every input. The
/// denominator is floored at `floor` so that vanishing gradients compare on
/// an absolute scale.
pub fn grad_check(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var, h: f64, floor: f64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).expect("backward");
    let eval = |inputs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).item()
    };
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for e in 0..inputs[k].len() {
            let orig = work[k].data()[e];
            work[k].data_mut()[e] = orig + h;
            let up = eval(&work);
            work[k].data_mut()[e] = orig - h;
            let down = eval(&work);
            work[k].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst relative error between the analytic gradient of the joint tiny-model
/// objective and central differences, over every trainable parameter.
/// Outcome of the finite-difference check over every trainable parameter of
/// the tiny model.
#[derive(Debug)]
pub struct JointGradCheck {
    pub worst: f64,
    /// Coordinates whose stencil straddles a kink (relu, leaky relu, L1):
    /// the one-sided slopes disagree, so no central difference is meaningful.
    pub kinks: usize,
    pub checked: usize,
}

pub fn tiny_joint_gradient_check(seed: u64, batch: usize) -> JointGradCheck {
    use lagan_core::model::{joint_loss, FlipRates, Lagan, LaganConfig, StepInputs};

    let h = 1e-5;
    let mut model = Lagan::new(LaganConfig::tiny(), seed).unwrap();
    let mut r = rng(seed ^ 0x51);
    let s = model.config.image_size;
    let real = Tensor::from_fn(&[batch, s, s, 1], |_| r.random::<f64>() * r.random::<f64>());
    let classes: Vec<f64> = (0..batch).map(|i| (i % 2) as f64).collect();
    let inputs = StepInputs::draw(&mut r, batch, model.config.latent_dim, &FlipRates::default()).unwrap();

    let loss_of = |m: &Lagan| {
        let mut tape = Tape::new();
        let (l, _) = joint_loss(m, &mut tape, &real, &classes, &inputs).unwrap();
        tape.value(l).item()
    };
    let mut tape = Tape::new();
    let (loss, bound) = joint_loss(&model, &mut tape, &real, &classes, &inputs).unwrap();
    let f0 = tape.value(loss).item();
    let grads = tape.backward(loss).unwrap();

    let ids: Vec<_> = model.params.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    let mut out = JointGradCheck { worst: 0.0, kinks: 0, checked: 0 };
    for id in ids {
        let mut analytic = vec![0.0; model.params.tensor(id).len()];
        for (pid, v) in &bound {
            if *pid == id {
                if let Some(g) = grads.get(*v) {
                    analytic.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
        }
        for e in 0..analytic.len() {
            let orig = model.params.tensor(id).data()[e];
            model.params.tensor_mut(id).data_mut()[e] = orig + h;
            let up = loss_of(&model);
            model.params.tensor_mut(id).data_mut()[e] = orig - h;
            let down = loss_of(&model);
            model.params.tensor_mut(id).data_mut()[e] = orig;
            let (right, left) = ((up - f0) / h, (f0 - down) / h);
            let scale = right.abs().max(left.abs()).max(1e-3);
            if (right - left).abs() / scale > 1e-3 {
                out.kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic[e] - numeric).abs() / analytic[e].abs().max(numeric.abs()).max(1e-3);
            out.worst = out.worst.max(rel);
            out.checked += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// images and observables

use lagan_core::jet::{JetImage, Label, Origin};

/// Sparse random image: `1..=max_nonzero` pixels with log-uniform intensities
/// between 1e-2 and 1e2 GeV.
pub fn random_image(r: &mut ChaCha8Rng, max_nonzero: usize) -> JetImage {
    let mut px = vec![0.0; 625];
    let count = r.random_range(1..=max_nonzero);
    for _ in 0..count {
        let k = r.random_range(0..625);
        px[k] = 10f64.powf(r.random_range(-2.0..2.0));
    }
    JetImage::from_pixels(px, Label::Signal, Origin::Real).unwrap()
}

pub fn coord(i: usize) -> f64 {
    (i as f64 - 12.0) * 0.1
}

/// Direct summation over all 625 cells with intensity as energy.
pub fn pt_mass_oracle(img: &JetImage) -> (f64, f64) {
    let (mut e, mut px, mut py, mut pz) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..25 {
        for j in 0..25 {
            let v = img.get(i, j);
            e += v;
            px += v * coord(j).cos();
            py += v * coord(j).sin();
            pz += v * coord(i).sinh();
        }
    }
    let pt = (px * px + py * py).sqrt();
    (pt, (e * e - px * px - py * py - pz * pz).max(0.0).sqrt())
}

/// Exclusive kt with winner-take-all recombination by exhaustive pair search
/// at every merge. Separations are compared in integer pixel units, so equal
/// lattice distances tie exactly; ties go to the lexicographically smallest
/// pair and the merged pseudojet keeps the lower index.
pub fn kt_axes_oracle(img: &JetImage, n: usize) -> Vec<(f64, f64)> {
    let mut ps: Vec<Option<(f64, i64, i64)>> = (0..625)
        .filter(|&k| img.pixels()[k] > 0.0)
        .map(|k| Some((img.pixels()[k], (k / 25) as i64, (k % 25) as i64)))
        .collect();
    let mut alive = ps.len();
    while alive > n {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..ps.len() {
            for b in a + 1..ps.len() {
                if let (Some(x), Some(y)) = (ps[a], ps[b]) {
                    let d = x.0.min(y.0).powi(2) * ((x.1 - y.1).pow(2) + (x.2 - y.2).pow(2)) as f64;
                    if d < best.0 {
                        best = (d, a, b);
                    }
                }
            }
        }
        let (_, a, b) = best;
        let (x, y) = (ps[a].unwrap(), ps[b].unwrap());
        let w = if y.0 > x.0 { y } else { x };
        ps[a] = Some((x.0 + y.0, w.1, w.2));
        ps[b] = None;
        alive -= 1;
    }
    ps.into_iter().flatten().map(|p| (coord(p.1 as usize), coord(p.2 as usize))).collect()
}

pub fn tau_oracle(img: &JetImage, n: usize) -> f64 {
    let axes = kt_axes_oracle(img, n);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..25 {
        for j in 0..25 {
            let v = img.get(i, j);
            if v > 0.0 {
                let d = axes.iter().map(|a| ((coord(i) - a.0).powi(2) + (coord(j) - a.1).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
                num += v * d;
                den += v;
            }
        }
    }
    num / den
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---------------------------------------------------------------------------
// transport

/// Dense LP formulation of the transport problem between two weighted point
/// sets with Euclidean cost, solved by a general-purpose simplex.
pub fn lp_emd(p: &[((f64, f64), f64)], q: &[((f64, f64), f64)]) -> f64 {
    use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<Variable>> = p
        .iter()
        .map(|a| q.iter().map(|b| lp.add_var((a.0 .0 - b.0 .0).hypot(a.0 .1 - b.0 .1), (0.0, f64::INFINITY))).collect())
        .collect();
    for (i, a) in p.iter().enumerate() {
        let row: Vec<(Variable, f64)> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(&row[..], ComparisonOp::Eq, a.1);
    }
    for (j, b) in q.iter().enumerate() {
        let col: Vec<(Variable, f64)> = vars.iter().map(|r| (r[j], 1.0)).collect();
        lp.add_constraint(&col[..], ComparisonOp::Eq, b.1);
    }
    lp.solve().expect("feasible transport").objective()
}

/// Random normalized PMF on an `nm x nt` grid with `1..=max_support` cells.
pub fn random_pmf(r: &mut ChaCha8Rng, nm: usize, nt: usize, max_support: usize) -> Vec<f64> {
    let mut v = vec![0.0; nm * nt];
    for _ in 0..r.random_range(1..=max_support) {
        v[r.random_range(0..nm * nt)] += r.random_range(0.05..1.0);
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn pmf_points(v: &[f64], nt: usize) -> Vec<((f64, f64), f64)> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(k, &x)| (((k / nt) as f64, (k % nt) as f64), x))
        .collect()
}
