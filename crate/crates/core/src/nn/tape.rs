//! Per-forward-pass computation tape with reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and whatever the
//! backward pass needs. [`Tape::backward`] walks the nodes in reverse and
//! returns a gradient for every node that (transitively) depends on a leaf
//! created with `requires_grad`.

use super::kernels::{self, SpatialGeom};
use super::layers::Border;
use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

/// Batch normalization mode.
#[derive(Clone, Debug)]
pub enum NormMode<'a> {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with the supplied running statistics.
    Inference { mean: &'a [f64], var: &'a [f64] },
}

/// Per-channel statistics measured by a train-mode batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

enum Op {
    Leaf,
    Dense { x: Var, w: Var, b: Option<Var> },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: SpatialGeom },
    Local2d { x: Var, w: Var, b: Option<Var>, geom: SpatialGeom },
    BatchNormTrain { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    BatchNormInfer { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Upsample2x { x: Var },
    Act { x: Var, kind: Activation },
    MinibatchDisc { x: Var, kernel: Var, m: Vec<f64> },
    HadamardEmbed { z: Var, table: Var, classes: Vec<usize> },
    Reshape { x: Var },
    Concat { a: Var, b: Var },
    BceWithLogits { logits: Var, targets: Vec<f64> },
    Add { a: Var, b: Var },
    Sum { x: Var },
    Scale { x: Var, c: f64 },
    Dot { x: Var, weights: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn rg_opt(&self, v: Option<Var>) -> bool {
        v.is_some_and(|v| self.rg(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Adds an input tensor. Gradients are produced for it only if
    /// `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn variable(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        let (&[batch, a], &[wa, o]) = (xs, ws) else {
            return dim_err(format!("dense expects [B,A] x [A,O], got {xs:?} x {ws:?}"));
        };
        if a != wa {
            return dim_err(format!("dense input width {a} vs weight rows {wa}"));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [o] {
                return dim_err(format!("dense bias must be [{o}]"));
            }
        }
        let y = kernels::dense_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            batch,
            a,
            o,
        );
        let rg = self.rg(x) || self.rg(w) || self.rg_opt(b);
        Ok(self.push(Tensor::new(&[batch, o], y)?, Op::Dense { x, w, b }, rg))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, border: Border, stride: usize) -> Result<Var> {
        let geom = SpatialGeom::conv(self.value(x).shape(), self.value(w).shape(), border, stride)?;
        if let Some(b) = b {
            if self.value(b).shape() != [geom.cout] {
                return dim_err(format!("conv bias must be [{}]", geom.cout));
            }
        }
        let y = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let rg = self.rg(x) || self.rg(w) || self.rg_opt(b);
        Ok(self.push(Tensor::new(&geom.out_shape(), y)?, Op::Conv2d { x, w, b, geom }, rg))
    }

    pub fn local2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let geom = SpatialGeom::local(self.value(x).shape(), self.value(w).shape(), stride)?;
        if let Some(b) = b {
            let want = [geom.out_size, geom.out_size, geom.cout];
            if self.value(b).shape() != want {
                return dim_err(format!("locally connected bias must be {want:?}"));
            }
        }
        let y = kernels::local2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let rg = self.rg(x) || self.rg(w) || self.rg_opt(b);
        Ok(self.push(Tensor::new(&geom.out_shape(), y)?, Op::Local2d { x, w, b, geom }, rg))
    }

    /// Channel-wise batch normalization over every axis but the last.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        mode: NormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let shape = self.value(x).shape().to_vec();
        let c = *shape.last().ok_or_else(|| Error::Dimension("batchnorm on a scalar".into()))?;
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return dim_err(format!("batchnorm scale/shift must be [{c}]"));
        }
        let batch = shape[0];
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        match mode {
            NormMode::Train => {
                if batch < 2 {
                    return Err(Error::DegenerateBatch(
                        "train-mode batch normalization needs a batch of at least 2".into(),
                    ));
                }
                let out = kernels::batchnorm_train_forward(xv, c, g, bt, eps)?;
                let stats = BatchStats { mean: out.mean, var: out.var };
                let op = Op::BatchNormTrain { x, gamma, beta, xhat: out.xhat, inv_std: out.inv_std };
                Ok((self.push(Tensor::new(&shape, out.y)?, op, rg), Some(stats)))
            }
            NormMode::Inference { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return dim_err(format!("running statistics must have {c} channels"));
                }
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                let mut xhat = vec![0.0; xv.len()];
                let mut y = vec![0.0; xv.len()];
                for ((xr, hr), yr) in xv.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(y.chunks_exact_mut(c)) {
                    for k in 0..c {
                        hr[k] = (xr[k] - mean[k]) * inv_std[k];
                        yr[k] = g[k] * hr[k] + bt[k];
                    }
                }
                let op = Op::BatchNormInfer { x, gamma, beta, xhat, inv_std };
                Ok((self.push(Tensor::new(&shape, y)?, op, rg), None))
            }
        }
    }

    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let &[b, h, w, c] = self.value(x).shape() else {
            return dim_err("upsample2x expects NHWC input");
        };
        if h != w {
            return dim_err("upsample2x expects square images");
        }
        let y = kernels::upsample2x_forward(self.value(x).data(), b, h, c);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[b, 2 * h, 2 * w, c], y)?, Op::Upsample2x { x }, rg))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let xv = self.value(x);
        let y: Vec<f64> = match kind {
            Activation::Relu => xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Activation::LeakyRelu(a) => xv.data().iter().map(|&v| if v > 0.0 { v } else { a * v }).collect(),
            Activation::Sigmoid => xv.data().iter().map(|&v| sigmoid(v)).collect(),
        };
        let t = Tensor::new(xv.shape(), y).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Act { x, kind }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.activation(x, Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    /// Minibatch discrimination with `kernel: [A, B, C]` over `x: [batch, A]`,
    /// returning `[batch, B]`.
    pub fn minibatch_disc(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let (xs, ks) = (self.value(x).shape(), self.value(kernel).shape());
        let (&[batch, a], &[ka, kb, kc]) = (xs, ks) else {
            return dim_err(format!("minibatch discrimination expects [N,A] and [A,B,C], got {xs:?}, {ks:?}"));
        };
        if a != ka {
            return dim_err(format!("feature width {a} vs kernel rows {ka}"));
        }
        let out = kernels::minibatch_disc_forward(
            self.value(x).data(),
            self.value(kernel).data(),
            batch,
            a,
            kb,
            kc,
        )?;
        let rg = self.rg(x) || self.rg(kernel);
        Ok(self.push(Tensor::new(&[batch, kb], out.out)?, Op::MinibatchDisc { x, kernel, m: out.m }, rg))
    }

    /// Elementwise product of each latent row with the embedding row of its class.
    pub fn hadamard_embed(&mut self, z: Var, table: Var, classes: &[usize]) -> Result<Var> {
        let (zs, ts) = (self.value(z).shape(), self.value(table).shape());
        let (&[batch, d], &[k, td]) = (zs, ts) else {
            return dim_err(format!("hadamard embedding expects [N,D] and [K,D], got {zs:?}, {ts:?}"));
        };
        if d != td {
            return dim_err(format!("latent width {d} vs embedding width {td}"));
        }
        if classes.len() != batch {
            return dim_err(format!("{} class indices for a batch of {batch}", classes.len()));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= k) {
            return Err(Error::Lookup(format!("class index {bad} outside embedding table of {k} rows")));
        }
        let zv = self.value(z).data();
        let tv = self.value(table).data();
        let mut y = vec![0.0; batch * d];
        for (i, &c) in classes.iter().enumerate() {
            for t in 0..d {
                y[i * d + t] = zv[i * d + t] * tv[c * d + t];
            }
        }
        let rg = self.rg(z) || self.rg(table);
        let op = Op::HadamardEmbed { z, table, classes: classes.to_vec() };
        Ok(self.push(Tensor::new(&[batch, d], y)?, op, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape { x }, rg))
    }

    /// Concatenates two `[N, *]` matrices along the feature axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (&[na, wa], &[nb, wb]) = (self.value(a).shape(), self.value(b).shape()) else {
            return dim_err("concat expects two rank-2 tensors");
        };
        if na != nb {
            return dim_err(format!("concat batch mismatch {na} vs {nb}"));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut y = Vec::with_capacity(na * (wa + wb));
        for i in 0..na {
            y.extend_from_slice(&av[i * wa..(i + 1) * wa]);
            y.extend_from_slice(&bv[i * wb..(i + 1) * wb]);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[na, wa + wb], y)?, Op::Concat { a, b }, rg))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let lv = self.value(logits).data();
        if lv.len() != targets.len() || lv.is_empty() {
            return dim_err(format!("{} logits vs {} targets", lv.len(), targets.len()));
        }
        let loss = lv.iter().zip(targets).map(|(&x, &t)| bce_logit(x, t)).sum::<f64>() / lv.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits { logits, targets: targets.to_vec() }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return dim_err("add requires identical shapes");
        }
        let y: Vec<f64> = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(self.value(a).shape(), y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let xv = self.value(x);
        let t = Tensor::new(xv.shape(), xv.data().iter().map(|v| v * c).collect()).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Scale { x, c }, rg)
    }

    /// Scalar `sum_i weights[i] * x[i]`.
    pub fn dot(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        let xv = self.value(x).data();
        if xv.len() != weights.len() {
            return dim_err("dot weights must match the tensor length");
        }
        let s = xv.iter().zip(weights).map(|(a, b)| a * b).sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::Dot { x, weights: weights.to_vec() }, rg))
    }

    /// Differentiates the scalar `loss` with respect to every node it depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::State(format!(
                "backward on node {} but the tape holds {} nodes; run the forward pass first",
                loss.0,
                self.nodes.len()
            )));
        };
        if node.value.len() != 1 {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.backprop_node(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, g: Vec<f64>| match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let (&[batch, a], &[_, o]) = (self.value(*x).shape(), self.value(*w).shape()) else {
                    unreachable!()
                };
                use super::gemm::{gemm, MatRef};
                if self.rg(*x) {
                    let mut dx = vec![0.0; batch * a];
                    gemm(batch, o, a, MatRef::rm(gy, o), MatRef::rm_t(self.value(*w).data(), o), 0.0, &mut dx, a);
                    acc(*x, dx);
                }
                if self.rg(*w) {
                    let mut dw = vec![0.0; a * o];
                    gemm(a, batch, o, MatRef::rm_t(self.value(*x).data(), a), MatRef::rm(gy, o), 0.0, &mut dw, o);
                    acc(*w, dw);
                }
                if let Some(b) = b.filter(|b| self.rg(*b)) {
                    let mut db = vec![0.0; o];
                    for row in gy.chunks_exact(o) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    acc(b, db);
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let g = kernels::conv2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gy,
                    geom,
                    self.rg(*x),
                    self.rg(*w),
                    self.rg_opt(*b),
                );
                if let Some(dx) = g.dx {
                    acc(*x, dx);
                }
                if let Some(dw) = g.dw {
                    acc(*w, dw);
                }
                if let (Some(b), Some(db)) = (b, g.db) {
                    acc(*b, db);
                }
            }
            Op::Local2d { x, w, b, geom } => {
                let g = kernels::local2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gy,
                    geom,
                    self.rg(*x),
                    self.rg(*w),
                    self.rg_opt(*b),
                );
                if let Some(dx) = g.dx {
                    acc(*x, dx);
                }
                if let Some(dw) = g.dw {
                    acc(*w, dw);
                }
                if let (Some(b), Some(db)) = (b, g.db) {
                    acc(*b, db);
                }
            }
            Op::BatchNormTrain { x, gamma, beta, xhat, inv_std } => {
                let (dx, dgamma, dbeta) =
                    kernels::batchnorm_train_backward(gy, xhat, inv_std, self.value(*gamma).data());
                if self.rg(*x) {
                    acc(*x, dx);
                }
                if self.rg(*gamma) {
                    acc(*gamma, dgamma);
                }
                if self.rg(*beta) {
                    acc(*beta, dbeta);
                }
            }
            Op::BatchNormInfer { x, gamma, beta, xhat, inv_std } => {
                let gv = self.value(*gamma).data();
                let c = gv.len();
                if self.rg(*x) {
                    let mut dx = gy.to_vec();
                    for row in dx.chunks_exact_mut(c) {
                        for k in 0..c {
                            row[k] *= gv[k] * inv_std[k];
                        }
                    }
                    acc(*x, dx);
                }
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (dr, hr) in gy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for k in 0..c {
                        dgamma[k] += dr[k] * hr[k];
                        dbeta[k] += dr[k];
                    }
                }
                if self.rg(*gamma) {
                    acc(*gamma, dgamma);
                }
                if self.rg(*beta) {
                    acc(*beta, dbeta);
                }
            }
            Op::Upsample2x { x } => {
                let &[b, h, _, c] = self.value(*x).shape() else { unreachable!() };
                acc(*x, kernels::upsample2x_backward(gy, b, h, c));
            }
            Op::Act { x, kind } => {
                let xv = self.value(*x).data();
                let dx: Vec<f64> = match *kind {
                    Activation::Relu => xv.iter().zip(gy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
                    Activation::LeakyRelu(a) => {
                        xv.iter().zip(gy).map(|(&v, &g)| if v > 0.0 { g } else { a * g }).collect()
                    }
                    Activation::Sigmoid => node
                        .value
                        .data()
                        .iter()
                        .zip(gy)
                        .map(|(&s, &g)| g * s * (1.0 - s))
                        .collect(),
                };
                acc(*x, dx);
            }
            Op::MinibatchDisc { x, kernel, m } => {
                let &[batch, a] = self.value(*x).shape() else { unreachable!() };
                let &[_, kb, kc] = self.value(*kernel).shape() else { unreachable!() };
                let (dx, dk) = kernels::minibatch_disc_backward(
                    self.value(*x).data(),
                    self.value(*kernel).data(),
                    m,
                    gy,
                    batch,
                    a,
                    kb,
                    kc,
                    self.rg(*x),
                    self.rg(*kernel),
                );
                if let Some(dx) = dx {
                    acc(*x, dx);
                }
                if let Some(dk) = dk {
                    acc(*kernel, dk);
                }
            }
            Op::HadamardEmbed { z, table, classes } => {
                let d = self.value(*z).shape()[1];
                let zv = self.value(*z).data();
                let tv = self.value(*table).data();
                if self.rg(*z) {
                    let mut dz = vec![0.0; zv.len()];
                    for (i, &c) in classes.iter().enumerate() {
                        for t in 0..d {
                            dz[i * d + t] = gy[i * d + t] * tv[c * d + t];
                        }
                    }
                    acc(*z, dz);
                }
                if self.rg(*table) {
                    let mut dt = vec![0.0; tv.len()];
                    for (i, &c) in classes.iter().enumerate() {
                        for t in 0..d {
                            dt[c * d + t] += gy[i * d + t] * zv[i * d + t];
                        }
                    }
                    acc(*table, dt);
                }
            }
            Op::Reshape { x } => acc(*x, gy.to_vec()),
            Op::Concat { a, b } => {
                let wa = self.value(*a).shape()[1];
                let wb = self.value(*b).shape()[1];
                let n = self.value(*a).shape()[0];
                if self.rg(*a) {
                    let mut da = Vec::with_capacity(n * wa);
                    for i in 0..n {
                        da.extend_from_slice(&gy[i * (wa + wb)..][..wa]);
                    }
                    acc(*a, da);
                }
                if self.rg(*b) {
                    let mut db = Vec::with_capacity(n * wb);
                    for i in 0..n {
                        db.extend_from_slice(&gy[i * (wa + wb) + wa..][..wb]);
                    }
                    acc(*b, db);
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let n = targets.len() as f64;
                let dx = self
                    .value(*logits)
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&x, &t)| gy[0] * (sigmoid(x) - t) / n)
                    .collect();
                acc(*logits, dx);
            }
            Op::Add { a, b } => {
                if self.rg(*a) {
                    acc(*a, gy.to_vec());
                }
                if self.rg(*b) {
                    acc(*b, gy.to_vec());
                }
            }
            Op::Sum { x } => acc(*x, vec![gy[0]; self.value(*x).len()]),
            Op::Scale { x, c } => acc(*x, gy.iter().map(|g| g * c).collect()),
            Op::Dot { x, weights } => acc(*x, weights.iter().map(|w| w * gy[0]).collect()),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `-t log s(x) - (1 - t) log(1 - s(x))`.
#[inline]
pub fn bce_logit(x: f64, t: f64) -> f64 {
    x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::from_fn(&[2, 3], |i| i as f64 - 2.5));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn bce_at_zero_logit() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::new(&[1], vec![0.0]).unwrap());
        let l = tape.bce_with_logits(x, &[1.0]).unwrap();
        assert!((tape.value(l).item() - 2f64.ln()).abs() < 1e-15);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap(), &[-0.5]);
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let tape = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(Error::State(_))));
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::zeros(&[3]));
        assert!(matches!(tape.backward(x), Err(Error::State(_))));
    }

    #[test]
    fn activations() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[3], vec![-3.2, 1.5, 0.0]).unwrap());
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 1.5, 0.0]);
        let x = tape.constant(Tensor::new(&[1], vec![-1.0]).unwrap());
        let l = tape.leaky_relu(x, 0.2);
        assert_eq!(tape.value(l).data(), &[-0.2]);
        let x = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(s).item(), 0.5);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[2], 1.0));
        let w = tape.variable(Tensor::filled(&[2], 3.0));
        let p = tape.add(x, w).unwrap();
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.get(w).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn hadamard_lookup_error() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[2, 3]));
        let t = tape.variable(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.hadamard_embed(z, t, &[0, 2]), Err(Error::Lookup(_))));
    }
}
