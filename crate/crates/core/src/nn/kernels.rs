//! Forward and backward kernels for the spatial and batch-level layers.
//!
//! All image tensors are NHWC: `[batch, rows, cols, channels]` with square
//! spatial extents.

use super::gemm::{gemm, MatRef};
use super::layers::{output_extent, Border};
use crate::error::{dim_err, Error, Result};

/// Geometry of a conv2d or local2d application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpatialGeom {
    pub batch: usize,
    pub in_size: usize,
    pub cin: usize,
    pub field: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_size: usize,
}

fn image_dims(x_shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *x_shape {
        [b, h, w, c] if h == w => Ok((b, h, c)),
        _ => dim_err(format!("expected square NHWC input, got {x_shape:?}")),
    }
}

impl SpatialGeom {
    pub fn conv(x_shape: &[usize], w_shape: &[usize], border: Border, stride: usize) -> Result<Self> {
        let (batch, in_size, cin) = image_dims(x_shape)?;
        let [f1, f2, wc, cout] = *w_shape else {
            return dim_err(format!("conv weights must be [F,F,Cin,N], got {w_shape:?}"));
        };
        if f1 != f2 {
            return dim_err(format!("non-square receptive field {w_shape:?}"));
        }
        if wc != cin {
            return dim_err(format!("input has {cin} channels, weights expect {wc}"));
        }
        let out_size = output_extent(in_size, f1, stride, border)?;
        let pad = match border {
            Border::Same => (f1 - 1) / 2,
            Border::Valid => 0,
        };
        Ok(Self { batch, in_size, cin, field: f1, cout, stride, pad, out_size })
    }

    pub fn local(x_shape: &[usize], w_shape: &[usize], stride: usize) -> Result<Self> {
        let (batch, in_size, cin) = image_dims(x_shape)?;
        let [w1, w2, f1, f2, wc, cout] = *w_shape else {
            return dim_err(format!(
                "locally connected weights must be [W,W,F,F,Cin,N], got {w_shape:?}"
            ));
        };
        if f1 != f2 || w1 != w2 {
            return dim_err(format!("non-square locally connected weights {w_shape:?}"));
        }
        if wc != cin {
            return dim_err(format!("input has {cin} channels, weights expect {wc}"));
        }
        let out_size = output_extent(in_size, f1, stride, Border::Valid)?;
        if out_size != w1 {
            return dim_err(format!(
                "weights hold {w1}x{w1} filter banks but the output extent is {out_size}"
            ));
        }
        Ok(Self { batch, in_size, cin, field: f1, cout, stride, pad: 0, out_size })
    }

    #[inline]
    pub fn patch_len(&self) -> usize {
        self.field * self.field * self.cin
    }

    #[inline]
    pub fn locations(&self) -> usize {
        self.out_size * self.out_size
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.batch, self.out_size, self.out_size, self.cout]
    }

    pub fn in_len(&self) -> usize {
        self.batch * self.in_size * self.in_size * self.cin
    }

    pub fn out_len(&self) -> usize {
        self.batch * self.locations() * self.cout
    }
}

// ---------------------------------------------------------------------------
// conv2d (shared weights)

/// Unrolls the receptive fields of sample `b` into `col` as `[W*W, F*F*Cin]`.
fn im2col(x: &[f64], g: &SpatialGeom, b: usize, col: &mut [f64]) {
    let k = g.patch_len();
    let l = g.in_size as isize;
    let cin = g.cin;
    for oi in 0..g.out_size {
        for oj in 0..g.out_size {
            let row = &mut col[(oi * g.out_size + oj) * k..][..k];
            for p in 0..g.field {
                let ii = (oi * g.stride + p) as isize - g.pad as isize;
                for q in 0..g.field {
                    let jj = (oj * g.stride + q) as isize - g.pad as isize;
                    let dst = &mut row[(p * g.field + q) * cin..][..cin];
                    if ii < 0 || jj < 0 || ii >= l || jj >= l {
                        dst.fill(0.0);
                    } else {
                        let src = ((b * g.in_size + ii as usize) * g.in_size + jj as usize) * cin;
                        dst.copy_from_slice(&x[src..src + cin]);
                    }
                }
            }
        }
    }
}

fn col2im_add(col: &[f64], g: &SpatialGeom, b: usize, dx: &mut [f64]) {
    let k = g.patch_len();
    let l = g.in_size as isize;
    let cin = g.cin;
    for oi in 0..g.out_size {
        for oj in 0..g.out_size {
            let row = &col[(oi * g.out_size + oj) * k..][..k];
            for p in 0..g.field {
                let ii = (oi * g.stride + p) as isize - g.pad as isize;
                if ii < 0 || ii >= l {
                    continue;
                }
                for q in 0..g.field {
                    let jj = (oj * g.stride + q) as isize - g.pad as isize;
                    if jj < 0 || jj >= l {
                        continue;
                    }
                    let dst = ((b * g.in_size + ii as usize) * g.in_size + jj as usize) * cin;
                    let src = &row[(p * g.field + q) * cin..][..cin];
                    for (d, s) in dx[dst..dst + cin].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &SpatialGeom) -> Vec<f64> {
    let k = g.patch_len();
    let locs = g.locations();
    let mut out = vec![0.0; g.out_len()];
    let mut col = vec![0.0; locs * k];
    for b in 0..g.batch {
        im2col(x, g, b, &mut col);
        let ob = &mut out[b * locs * g.cout..][..locs * g.cout];
        gemm(locs, k, g.cout, MatRef::rm(&col, k), MatRef::rm(w, g.cout), 0.0, ob, g.cout);
        if let Some(bias) = bias {
            for row in ob.chunks_exact_mut(g.cout) {
                for (o, bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
    }
    out
}

/// Gradients of a conv2d application. Each requested output is freshly
/// allocated.
pub struct SpatialGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &SpatialGeom,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> SpatialGrads {
    let k = g.patch_len();
    let locs = g.locations();
    let mut dx = need_dx.then(|| vec![0.0; g.in_len()]);
    let mut dw = need_dw.then(|| vec![0.0; k * g.cout]);
    let db = need_db.then(|| {
        let mut db = vec![0.0; g.cout];
        for row in dy.chunks_exact(g.cout) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        db
    });
    let mut col = vec![0.0; locs * k];
    for b in 0..g.batch {
        let dyb = &dy[b * locs * g.cout..][..locs * g.cout];
        if let Some(dw) = dw.as_mut() {
            im2col(x, g, b, &mut col);
            gemm(k, locs, g.cout, MatRef::rm_t(&col, k), MatRef::rm(dyb, g.cout), 1.0, dw, g.cout);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(locs, g.cout, k, MatRef::rm(dyb, g.cout), MatRef::rm_t(w, g.cout), 0.0, &mut col, k);
            col2im_add(&col, g, b, dx);
        }
    }
    SpatialGrads { dx, dw, db }
}

// ---------------------------------------------------------------------------
// local2d (one filter bank per output location)

/// Gathers the patch at output location `(i, j)` for every sample into
/// `patch` as `[B, F*F*Cin]`.
fn gather_patches(x: &[f64], g: &SpatialGeom, i: usize, j: usize, patch: &mut [f64]) {
    let k = g.patch_len();
    let run = g.field * g.cin;
    for b in 0..g.batch {
        for p in 0..g.field {
            let src = ((b * g.in_size + i * g.stride + p) * g.in_size + j * g.stride) * g.cin;
            patch[b * k + p * run..][..run].copy_from_slice(&x[src..src + run]);
        }
    }
}

fn scatter_patches_add(patch: &[f64], g: &SpatialGeom, i: usize, j: usize, dx: &mut [f64]) {
    let k = g.patch_len();
    let run = g.field * g.cin;
    for b in 0..g.batch {
        for p in 0..g.field {
            let dst = ((b * g.in_size + i * g.stride + p) * g.in_size + j * g.stride) * g.cin;
            for (d, s) in dx[dst..dst + run].iter_mut().zip(&patch[b * k + p * run..][..run]) {
                *d += s;
            }
        }
    }
}

pub fn local2d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &SpatialGeom) -> Vec<f64> {
    let k = g.patch_len();
    let n = g.cout;
    let locs = g.locations();
    let mut out = vec![0.0; g.out_len()];
    let mut patch = vec![0.0; g.batch * k];
    for i in 0..g.out_size {
        for j in 0..g.out_size {
            let loc = i * g.out_size + j;
            gather_patches(x, g, i, j, &mut patch);
            let wl = &w[loc * k * n..][..k * n];
            gemm(g.batch, k, n, MatRef::rm(&patch, k), MatRef::rm(wl, n), 0.0, &mut out[loc * n..], locs * n);
        }
    }
    if let Some(bias) = bias {
        for sample in out.chunks_exact_mut(locs * n) {
            for (o, bv) in sample.iter_mut().zip(bias) {
                *o += bv;
            }
        }
    }
    out
}

pub fn local2d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &SpatialGeom,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> SpatialGrads {
    let k = g.patch_len();
    let n = g.cout;
    let locs = g.locations();
    let mut dx = need_dx.then(|| vec![0.0; g.in_len()]);
    let mut dw = need_dw.then(|| vec![0.0; locs * k * n]);
    let db = need_db.then(|| {
        let mut db = vec![0.0; locs * n];
        for sample in dy.chunks_exact(locs * n) {
            for (d, v) in db.iter_mut().zip(sample) {
                *d += v;
            }
        }
        db
    });
    let mut patch = vec![0.0; g.batch * k];
    for i in 0..g.out_size {
        for j in 0..g.out_size {
            let loc = i * g.out_size + j;
            let dyl = MatRef { data: &dy[loc * n..], rs: locs * n, cs: 1 };
            if let Some(dw) = dw.as_mut() {
                gather_patches(x, g, i, j, &mut patch);
                gemm(k, g.batch, n, MatRef::rm_t(&patch, k), dyl, 0.0, &mut dw[loc * k * n..][..k * n], n);
            }
            if let Some(dx) = dx.as_mut() {
                let wl = &w[loc * k * n..][..k * n];
                gemm(g.batch, n, k, dyl, MatRef::rm_t(wl, n), 0.0, &mut patch, k);
                scatter_patches_add(&patch, g, i, j, dx);
            }
        }
    }
    SpatialGrads { dx, dw, db }
}

// ---------------------------------------------------------------------------
// dense

/// `y[B, O] = x[B, A] · w[A, O] + b`.
pub fn dense_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, batch: usize, a: usize, o: usize) -> Vec<f64> {
    let mut y = vec![0.0; batch * o];
    if let Some(bias) = bias {
        for row in y.chunks_exact_mut(o) {
            row.copy_from_slice(bias);
        }
        gemm(batch, a, o, MatRef::rm(x, a), MatRef::rm(w, o), 1.0, &mut y, o);
    } else {
        gemm(batch, a, o, MatRef::rm(x, a), MatRef::rm(w, o), 0.0, &mut y, o);
    }
    y
}

// ---------------------------------------------------------------------------
// batch normalization over all non-channel axes

pub struct BatchNormTrain {
    pub y: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub fn batchnorm_train_forward(
    x: &[f64],
    channels: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<BatchNormTrain> {
    let rows = x.len() / channels;
    if rows < 2 {
        return Err(Error::DegenerateBatch(
            "batch normalization in train mode needs at least two values per channel".into(),
        ));
    }
    let inv_rows = 1.0 / rows as f64;
    let mut mean = vec![0.0; channels];
    for row in x.chunks_exact(channels) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_rows);
    let mut var = vec![0.0; channels];
    for row in x.chunks_exact(channels) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s *= inv_rows);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for ((xr, hr), yr) in x
        .chunks_exact(channels)
        .zip(xhat.chunks_exact_mut(channels))
        .zip(y.chunks_exact_mut(channels))
    {
        for c in 0..channels {
            let h = (xr[c] - mean[c]) * inv_std[c];
            hr[c] = h;
            yr[c] = gamma[c] * h + beta[c];
        }
    }
    Ok(BatchNormTrain { y, xhat, inv_std, mean, var })
}

/// Returns `(dx, dgamma, dbeta)` for a train-mode batch normalization.
pub fn batchnorm_train_backward(
    dy: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let channels = gamma.len();
    let rows = dy.len() / channels;
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    for (dr, hr) in dy.chunks_exact(channels).zip(xhat.chunks_exact(channels)) {
        for c in 0..channels {
            dbeta[c] += dr[c];
            dgamma[c] += dr[c] * hr[c];
        }
    }
    let n = rows as f64;
    let mut dx = vec![0.0; dy.len()];
    for ((dxr, dr), hr) in dx
        .chunks_exact_mut(channels)
        .zip(dy.chunks_exact(channels))
        .zip(xhat.chunks_exact(channels))
    {
        for c in 0..channels {
            // sum(dxhat) = gamma * dbeta, sum(dxhat * xhat) = gamma * dgamma
            dxr[c] = gamma[c] * inv_std[c] / n * (n * dr[c] - dbeta[c] - hr[c] * dgamma[c]);
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// nearest-neighbour 2x upsampling

pub fn upsample2x_forward(x: &[f64], batch: usize, size: usize, channels: usize) -> Vec<f64> {
    let out_size = 2 * size;
    let mut y = vec![0.0; batch * out_size * out_size * channels];
    for b in 0..batch {
        for i in 0..out_size {
            for j in 0..out_size {
                let src = ((b * size + i / 2) * size + j / 2) * channels;
                let dst = ((b * out_size + i) * out_size + j) * channels;
                y[dst..dst + channels].copy_from_slice(&x[src..src + channels]);
            }
        }
    }
    y
}

pub fn upsample2x_backward(dy: &[f64], batch: usize, size: usize, channels: usize) -> Vec<f64> {
    let out_size = 2 * size;
    let mut dx = vec![0.0; batch * size * size * channels];
    for b in 0..batch {
        for i in 0..out_size {
            for j in 0..out_size {
                let dst = ((b * size + i / 2) * size + j / 2) * channels;
                let src = ((b * out_size + i) * out_size + j) * channels;
                for (d, s) in dx[dst..dst + channels].iter_mut().zip(&dy[src..src + channels]) {
                    *d += s;
                }
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// minibatch discrimination

/// Output of minibatch discrimination: `o[i, b] = sum_{j != i} exp(-|M_ib - M_jb|_1)`.
pub struct MinibatchDisc {
    pub out: Vec<f64>,
    /// Projected features `M`, `[batch, kernels * dim]`.
    pub m: Vec<f64>,
}

pub fn minibatch_disc_forward(
    x: &[f64],
    kernel: &[f64],
    batch: usize,
    features: usize,
    kernels: usize,
    dim: usize,
) -> Result<MinibatchDisc> {
    // a lone sample has nobody to be compared with and gets all-zero features
    if batch == 0 {
        return Err(Error::DegenerateBatch("minibatch discrimination on an empty batch".into()));
    }
    let width = kernels * dim;
    let mut m = vec![0.0; batch * width];
    gemm(batch, features, width, MatRef::rm(x, features), MatRef::rm(kernel, width), 0.0, &mut m, width);
    let mut out = vec![0.0; batch * kernels];
    for i in 0..batch {
        for j in i + 1..batch {
            for kb in 0..kernels {
                let mi = &m[i * width + kb * dim..][..dim];
                let mj = &m[j * width + kb * dim..][..dim];
                let l1: f64 = mi.iter().zip(mj).map(|(a, b)| (a - b).abs()).sum();
                let e = (-l1).exp();
                out[i * kernels + kb] += e;
                out[j * kernels + kb] += e;
            }
        }
    }
    Ok(MinibatchDisc { out, m })
}

/// Returns `(dx, dkernel)` given the upstream gradient `dout[batch, kernels]`.
#[allow(clippy::too_many_arguments)]
pub fn minibatch_disc_backward(
    x: &[f64],
    kernel: &[f64],
    m: &[f64],
    dout: &[f64],
    batch: usize,
    features: usize,
    kernels: usize,
    dim: usize,
    need_dx: bool,
    need_dk: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let width = kernels * dim;
    let mut dm = vec![0.0; batch * width];
    for i in 0..batch {
        for j in i + 1..batch {
            for kb in 0..kernels {
                let oi = i * width + kb * dim;
                let oj = j * width + kb * dim;
                let l1: f64 = (0..dim).map(|c| (m[oi + c] - m[oj + c]).abs()).sum();
                // d/dM_i of exp(-|M_i - M_j|) = -e * sign(M_i - M_j); the pair
                // feeds both o[i] and o[j].
                let coef = -(-l1).exp() * (dout[i * kernels + kb] + dout[j * kernels + kb]);
                for c in 0..dim {
                    let d = m[oi + c] - m[oj + c];
                    let s = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    dm[oi + c] += coef * s;
                    dm[oj + c] -= coef * s;
                }
            }
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = vec![0.0; batch * features];
        gemm(batch, width, features, MatRef::rm(&dm, width), MatRef::rm_t(kernel, width), 0.0, &mut dx, features);
        dx
    });
    let dk = need_dk.then(|| {
        let mut dk = vec![0.0; features * width];
        gemm(features, batch, width, MatRef::rm_t(x, features), MatRef::rm(&dm, width), 0.0, &mut dk, width);
        dk
    });
    (dx, dk)
}
