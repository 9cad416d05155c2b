//! The LAGAN generator and discriminator, their losses, and training.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::binio;
use crate::error::{Error, Result};
use crate::eval::{class_points, score_points, ScoreReport, Window};
use crate::jet::{JetImage, Label, Origin, IMAGE_SIZE, NUM_PIXELS};
use crate::nn::{
    bce_logit, checkpoint, output_extent, sigmoid, Adam, AdamConfig, BatchStats, Border, NormMode, ParamId, ParamStore,
    Tape, Var,
};
use crate::tensor::Tensor;

/// Architecture hyperparameters. `(maps, field)` pairs describe weighted layers.
#[derive(Clone, Debug, PartialEq)]
pub struct LaganConfig {
    pub latent_dim: usize,
    pub image_size: usize,
    /// Spatial extent of the projected latent volume.
    pub proj_size: usize,
    pub proj_channels: usize,
    /// Same-border convolution right after the projection.
    pub gen_conv: (usize, usize),
    /// Each entry is preceded by a 2x upsampling.
    pub gen_local: Vec<(usize, usize)>,
    /// Field of the final single-map, bias-free, ReLU layer.
    pub gen_head_field: usize,
    pub disc_conv: (usize, usize),
    pub disc_local: Vec<(usize, usize)>,
    /// Minibatch discrimination `(kernels, kernel_dim)`.
    pub minibatch: (usize, usize),
    pub slope: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    /// Locally connected layers when set; shared-weight convolutions otherwise.
    pub locally_connected: bool,
    /// Pixel intensities are divided by this before entering the discriminator
    /// and generator outputs are multiplied by it.
    pub intensity_scale: f64,
}

impl LaganConfig {
    /// Full layer widths.
    pub fn full() -> Self {
        Self {
            latent_dim: 200,
            image_size: IMAGE_SIZE,
            proj_size: 9,
            proj_channels: 64,
            gen_conv: (64, 5),
            gen_local: vec![(6, 5), (6, 3)],
            gen_head_field: 2,
            disc_conv: (32, 5),
            disc_local: vec![(8, 5), (8, 5), (8, 3)],
            minibatch: (20, 10),
            slope: 0.2,
            bn_eps: 1e-5,
            bn_momentum: 0.99,
            locally_connected: true,
            intensity_scale: 100.0,
        }
    }

    /// Same layer structure with fewer feature maps in the wide layers.
    pub fn narrow() -> Self {
        Self { latent_dim: 64, proj_channels: 16, gen_conv: (16, 5), disc_conv: (16, 5), ..Self::full() }
    }

    /// Narrow widths down to 8 maps, for desk-scale training runs.
    pub fn toy() -> Self {
        Self { latent_dim: 32, proj_channels: 8, gen_conv: (8, 5), disc_conv: (8, 5), ..Self::full() }
    }

    /// 7x7 images with every field scaled down, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            latent_dim: 4,
            image_size: 7,
            proj_size: 3,
            proj_channels: 2,
            gen_conv: (2, 3),
            gen_local: vec![(2, 2), (2, 3)],
            gen_head_field: 2,
            disc_conv: (2, 3),
            disc_local: vec![(2, 3), (2, 2), (2, 2)],
            minibatch: (3, 2),
            slope: 0.2,
            bn_eps: 1e-5,
            bn_momentum: 0.99,
            locally_connected: true,
            intensity_scale: 1.0,
        }
    }

    /// Shared-weight baseline with the same layer sizes.
    pub fn dcgan(mut self) -> Self {
        self.locally_connected = false;
        self
    }

    /// Spatial extents after every generator stage, ending at the image size.
    pub fn generator_extents(&self) -> Result<Vec<usize>> {
        let mut s = self.proj_size;
        let mut out = vec![s];
        s = output_extent(s, self.gen_conv.1, 1, Border::Same)?;
        out.push(s);
        for &(_, f) in &self.gen_local {
            s = output_extent(2 * s, f, 1, Border::Valid)?;
            out.push(s);
        }
        s = output_extent(s, self.gen_head_field, 1, Border::Valid)?;
        out.push(s);
        if s != self.image_size {
            return Err(Error::Config(format!("generator ends at {s}x{s}, expected {0}x{0}", self.image_size)));
        }
        Ok(out)
    }

    pub fn discriminator_extents(&self) -> Result<Vec<usize>> {
        let mut s = output_extent(self.image_size, self.disc_conv.1, 1, Border::Same)?;
        let mut out = vec![s];
        for &(_, f) in &self.disc_local {
            s = output_extent(s, f, 1, Border::Valid)?;
            out.push(s);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.latent_dim,
            self.image_size,
            self.proj_size,
            self.proj_channels,
            self.gen_conv.0,
            self.disc_conv.0,
            self.minibatch.0,
            self.minibatch.1,
        ];
        if positive.contains(&0) || self.gen_local.iter().chain(&self.disc_local).any(|&(m, f)| m == 0 || f == 0) {
            return Err(Error::Config("layer widths and fields must be positive".into()));
        }
        if !(self.intensity_scale > 0.0) || !(self.bn_eps > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("scale, epsilon and momentum out of range".into()));
        }
        self.generator_extents()?;
        self.discriminator_extents()?;
        Ok(())
    }

    fn to_meta(&self) -> Tensor {
        let mut v = vec![
            self.latent_dim,
            self.image_size,
            self.proj_size,
            self.proj_channels,
            self.gen_conv.0,
            self.gen_conv.1,
            self.gen_head_field,
            self.disc_conv.0,
            self.disc_conv.1,
            self.minibatch.0,
            self.minibatch.1,
            self.locally_connected as usize,
            self.gen_local.len(),
            self.disc_local.len(),
        ]
        .into_iter()
        .map(|x| x as f64)
        .collect::<Vec<_>>();
        for &(m, f) in self.gen_local.iter().chain(&self.disc_local) {
            v.extend([m as f64, f as f64]);
        }
        v.extend([self.slope, self.bn_eps, self.bn_momentum, self.intensity_scale]);
        let n = v.len();
        Tensor::new(&[n], v).expect("length matches")
    }

    fn from_meta(t: &Tensor) -> Result<Self> {
        let v = t.data();
        let bad = || Error::Input("malformed model metadata in checkpoint".into());
        if v.len() < 14 {
            return Err(bad());
        }
        let u = |k: usize| v[k] as usize;
        let (ng, nd) = (u(12), u(13));
        if v.len() != 14 + 2 * (ng + nd) + 4 {
            return Err(bad());
        }
        let pairs = |start: usize, n: usize| (0..n).map(|k| (u(start + 2 * k), u(start + 2 * k + 1))).collect();
        let tail = 14 + 2 * (ng + nd);
        let c = Self {
            latent_dim: u(0),
            image_size: u(1),
            proj_size: u(2),
            proj_channels: u(3),
            gen_conv: (u(4), u(5)),
            gen_head_field: u(6),
            disc_conv: (u(7), u(8)),
            minibatch: (u(9), u(10)),
            locally_connected: v[11] != 0.0,
            gen_local: pairs(14, ng),
            disc_local: pairs(14 + 2 * ng, nd),
            slope: v[tail],
            bn_eps: v[tail + 1],
            bn_momentum: v[tail + 2],
            intensity_scale: v[tail + 3],
        };
        c.validate()?;
        Ok(c)
    }
}

const META: &str = "meta.config";

/// Multiplies the He standard deviation of the generator's output layer.
pub const HEAD_INIT_GAIN: f64 = 0.01;

/// Normal initializer with the given standard deviation.
fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let d = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| d.sample(rng))
}

/// Batch normalization parameters and running statistics of one layer.
#[derive(Clone, Copy, Debug)]
struct NormIds {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

/// A weighted layer: weight, optional bias.
#[derive(Clone, Copy, Debug)]
struct Weighted {
    w: ParamId,
    b: Option<ParamId>,
}

#[derive(Clone, Debug)]
struct Layout {
    embed: ParamId,
    proj: Weighted,
    gen_conv: Weighted,
    gen_local: Vec<Weighted>,
    gen_head: ParamId,
    gen_norm: Vec<NormIds>,
    disc_conv: Weighted,
    disc_local: Vec<Weighted>,
    disc_norm: Vec<NormIds>,
    mbd: ParamId,
    real_head: Weighted,
    aux_head: Weighted,
}

/// Discriminator outputs on a tape.
pub struct DiscVars {
    pub real_logit: Var,
    pub aux_logit: Var,
    /// Named intermediate activations, in order.
    pub trace: Vec<(String, Var)>,
    bound: Vec<(ParamId, Var)>,
    stats: Vec<BatchStats>,
}

pub struct GenVars {
    /// Generated images in model units, `[batch, S, S, 1]`.
    pub images: Var,
    pub trace: Vec<(String, Var)>,
    bound: Vec<(ParamId, Var)>,
    stats: Vec<BatchStats>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Clone, Debug)]
pub struct Lagan {
    pub config: LaganConfig,
    pub params: ParamStore,
    layout: Layout,
}

impl Lagan {
    pub fn new(config: LaganConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let c = &config;
        let lc = c.locally_connected;
        let ge = c.generator_extents()?;
        let de = c.discriminator_extents()?;

        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let layer = |ps: &mut ParamStore,
                         rng: &mut ChaCha8Rng,
                         name: &str,
                         out: usize,
                         field: usize,
                         cin: usize,
                         maps: usize,
                         local: bool,
                         bias: bool|
         -> Result<Weighted> {
            let std = he(field * field * cin);
            let (wshape, bshape) = if local {
                (vec![out, out, field, field, cin, maps], vec![out, out, maps])
            } else {
                (vec![field, field, cin, maps], vec![maps])
            };
            let w = ps.insert(format!("{name}.w"), normal(rng, &wshape, std), true)?;
            let b = if bias { Some(ps.insert(format!("{name}.b"), Tensor::zeros(&bshape), true)?) } else { None };
            Ok(Weighted { w, b })
        };
        let norm = |ps: &mut ParamStore, name: &str, ch: usize| -> Result<NormIds> {
            Ok(NormIds {
                gamma: ps.insert(format!("{name}.gamma"), Tensor::filled(&[ch], 1.0), true)?,
                beta: ps.insert(format!("{name}.beta"), Tensor::zeros(&[ch]), true)?,
                mean: ps.insert(format!("{name}.running_mean"), Tensor::zeros(&[ch]), false)?,
                var: ps.insert(format!("{name}.running_var"), Tensor::filled(&[ch], 1.0), false)?,
            })
        };

        ps.insert(META, c.to_meta(), false)?;
        let embed = ps.insert("gen.embed", normal(&mut rng, &[2, c.latent_dim], 1.0), true)?;
        let proj_out = c.proj_size * c.proj_size * c.proj_channels;
        let proj = Weighted {
            w: ps.insert("gen.proj.w", normal(&mut rng, &[c.latent_dim, proj_out], he(c.latent_dim)), true)?,
            b: Some(ps.insert("gen.proj.b", Tensor::zeros(&[proj_out]), true)?),
        };
        let gen_conv = layer(&mut ps, &mut rng, "gen.conv", ge[1], c.gen_conv.1, c.proj_channels, c.gen_conv.0, false, true)?;
        let mut gen_norm = vec![norm(&mut ps, "gen.bn0", c.gen_conv.0)?];
        let mut gen_local = Vec::new();
        let mut cin = c.gen_conv.0;
        for (k, &(maps, field)) in c.gen_local.iter().enumerate() {
            gen_local.push(layer(&mut ps, &mut rng, &format!("gen.local{k}"), ge[2 + k], field, cin, maps, lc, true)?);
            gen_norm.push(norm(&mut ps, &format!("gen.bn{}", k + 1), maps)?);
            cin = maps;
        }
        // starts the generator near the intensity of real jets instead of
        // O(1) per pixel in model units
        let head_std = HEAD_INIT_GAIN * he(c.gen_head_field * c.gen_head_field * cin);
        let head_shape = if lc {
            vec![c.image_size, c.image_size, c.gen_head_field, c.gen_head_field, cin, 1]
        } else {
            vec![c.gen_head_field, c.gen_head_field, cin, 1]
        };
        let gen_head = ps.insert("gen.head.w", normal(&mut rng, &head_shape, head_std), true)?;

        let disc_conv = layer(&mut ps, &mut rng, "disc.conv", de[0], c.disc_conv.1, 1, c.disc_conv.0, false, true)?;
        let mut disc_local = Vec::new();
        let mut disc_norm = Vec::new();
        let mut cin = c.disc_conv.0;
        for (k, &(maps, field)) in c.disc_local.iter().enumerate() {
            disc_local.push(layer(&mut ps, &mut rng, &format!("disc.local{k}"), de[k + 1], field, cin, maps, lc, true)?);
            disc_norm.push(norm(&mut ps, &format!("disc.bn{k}"), maps)?);
            cin = maps;
        }
        let last = *de.last().expect("at least the conv stage");
        let features = last * last * cin;
        let (kb, kc) = c.minibatch;
        let mbd = ps.insert("disc.mbd.kernel", normal(&mut rng, &[features, kb, kc], 0.1 / (features as f64).sqrt()), true)?;
        let head_in = features + kb;
        let mut head = |ps: &mut ParamStore, name: &str| -> Result<Weighted> {
            Ok(Weighted {
                w: ps.insert(format!("{name}.w"), normal(&mut rng, &[head_in, 1], (1.0 / head_in as f64).sqrt()), true)?,
                b: Some(ps.insert(format!("{name}.b"), Tensor::zeros(&[1]), true)?),
            })
        };
        let real_head = head(&mut ps, "disc.real")?;
        let aux_head = head(&mut ps, "disc.aux")?;

        let layout = Layout {
            embed,
            proj,
            gen_conv,
            gen_local,
            gen_head,
            gen_norm,
            disc_conv,
            disc_local,
            disc_norm,
            mbd,
            real_head,
            aux_head,
        };
        Ok(Self { config, params: ps, layout })
    }

    /// Trainable generator parameters.
    pub fn generator_ids(&self) -> Vec<ParamId> {
        self.params.ids_with_prefix("gen.")
    }

    pub fn discriminator_ids(&self) -> Vec<ParamId> {
        self.params.ids_with_prefix("disc.")
    }

    fn bind(&self, tape: &mut Tape, id: ParamId, grad: bool, bound: &mut Vec<(ParamId, Var)>) -> Var {
        let v = self.params.bind(tape, id, grad);
        bound.push((id, v));
        v
    }

    fn weighted(&self, tape: &mut Tape, x: Var, l: Weighted, local: bool, border: Border, grad: bool, bound: &mut Vec<(ParamId, Var)>) -> Result<Var> {
        let w = self.bind(tape, l.w, grad, bound);
        let b = l.b.map(|b| self.bind(tape, b, grad, bound));
        if local {
            tape.local2d(x, w, b, 1)
        } else {
            tape.conv2d(x, w, b, border, 1)
        }
    }

    fn norm(&self, tape: &mut Tape, x: Var, n: NormIds, mode: Mode, grad: bool, bound: &mut Vec<(ParamId, Var)>, stats: &mut Vec<BatchStats>) -> Result<Var> {
        let g = self.bind(tape, n.gamma, grad, bound);
        let b = self.bind(tape, n.beta, grad, bound);
        let nm = match mode {
            Mode::Train => NormMode::Train,
            Mode::Inference => NormMode::Inference {
                mean: self.params.tensor(n.mean).data(),
                var: self.params.tensor(n.var).data(),
            },
        };
        let (y, s) = tape.batchnorm(x, g, b, self.config.bn_eps, nm)?;
        stats.extend(s);
        Ok(y)
    }

    /// Generator forward pass for latent rows `z: [batch, latent]` and class
    /// indices (0 = background, 1 = signal).
    pub fn generator_forward(&self, tape: &mut Tape, z: Var, classes: &[usize], mode: Mode, grad: bool) -> Result<GenVars> {
        let c = &self.config;
        let l = &self.layout;
        let batch = tape.value(z).shape()[0];
        let mut bound = Vec::new();
        let mut stats = Vec::new();
        let mut trace = Vec::new();
        let a = c.slope;

        let table = self.bind(tape, l.embed, grad, &mut bound);
        let h = tape.hadamard_embed(z, table, classes)?;
        let w = self.bind(tape, l.proj.w, grad, &mut bound);
        let b = l.proj.b.map(|b| self.bind(tape, b, grad, &mut bound));
        let h = tape.dense(h, w, b)?;
        let h = tape.reshape(h, &[batch, c.proj_size, c.proj_size, c.proj_channels])?;
        let mut h = tape.leaky_relu(h, a);
        trace.push(("projection".to_string(), h));

        h = self.weighted(tape, h, l.gen_conv, false, Border::Same, grad, &mut bound)?;
        h = tape.leaky_relu(h, a);
        h = self.norm(tape, h, l.gen_norm[0], mode, grad, &mut bound, &mut stats)?;
        trace.push(("conv".to_string(), h));
        for (k, &lw) in l.gen_local.iter().enumerate() {
            h = tape.upsample2x(h)?;
            trace.push((format!("upsample{k}"), h));
            h = self.weighted(tape, h, lw, c.locally_connected, Border::Valid, grad, &mut bound)?;
            h = tape.leaky_relu(h, a);
            h = self.norm(tape, h, l.gen_norm[k + 1], mode, grad, &mut bound, &mut stats)?;
            trace.push((format!("local{k}"), h));
        }
        let w = self.bind(tape, l.gen_head, grad, &mut bound);
        h = if c.locally_connected { tape.local2d(h, w, None, 1)? } else { tape.conv2d(h, w, None, Border::Valid, 1)? };
        h = tape.relu(h);
        trace.push(("output".to_string(), h));
        Ok(GenVars { images: h, trace, bound, stats })
    }

    /// Discriminator forward pass on images in model units.
    pub fn discriminator_forward(&self, tape: &mut Tape, x: Var, mode: Mode, grad: bool) -> Result<DiscVars> {
        let c = &self.config;
        let l = &self.layout;
        let batch = tape.value(x).shape()[0];
        if batch < 2 && mode == Mode::Train {
            return Err(Error::DegenerateBatch("the discriminator needs a batch of at least 2".into()));
        }
        let mut bound = Vec::new();
        let mut stats = Vec::new();
        let mut trace = Vec::new();
        let a = c.slope;

        let mut h = self.weighted(tape, x, l.disc_conv, false, Border::Same, grad, &mut bound)?;
        h = tape.leaky_relu(h, a);
        trace.push(("conv".to_string(), h));
        for (k, &lw) in l.disc_local.iter().enumerate() {
            h = self.weighted(tape, h, lw, c.locally_connected, Border::Valid, grad, &mut bound)?;
            h = tape.leaky_relu(h, a);
            h = self.norm(tape, h, l.disc_norm[k], mode, grad, &mut bound, &mut stats)?;
            trace.push((format!("local{k}"), h));
        }
        let features = tape.value(h).len() / batch;
        let flat = tape.reshape(h, &[batch, features])?;
        let kernel = self.bind(tape, l.mbd, grad, &mut bound);
        let mb = tape.minibatch_disc(flat, kernel)?;
        trace.push(("minibatch".to_string(), mb));
        let joined = tape.concat(flat, mb)?;
        let mut head = |hw: Weighted, tape: &mut Tape| -> Result<Var> {
            let w = self.bind(tape, hw.w, grad, &mut bound);
            let b = hw.b.map(|b| self.bind(tape, b, grad, &mut bound));
            let y = tape.dense(joined, w, b)?;
            tape.reshape(y, &[batch])
        };
        let real_logit = head(l.real_head, tape)?;
        let aux_logit = head(l.aux_head, tape)?;
        Ok(DiscVars { real_logit, aux_logit, trace, bound, stats })
    }

    fn check_latent(&self, z: &Tensor, classes: &[usize]) -> Result<()> {
        if z.shape() != [classes.len(), self.config.latent_dim] {
            return Err(Error::Dimension(format!(
                "latent batch {:?} does not match {} classes of width {}",
                z.shape(),
                classes.len(),
                self.config.latent_dim
            )));
        }
        if !z.is_finite() {
            return Err(Error::Input("latent vectors must be finite".into()));
        }
        Ok(())
    }

    /// Inference-mode generation; returns intensities in GeV, `[batch, S, S, 1]`.
    pub fn generate(&self, z: &Tensor, classes: &[usize]) -> Result<Tensor> {
        self.check_latent(z, classes)?;
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone());
        let g = self.generator_forward(&mut tape, zv, classes, Mode::Inference, false)?;
        let s = self.config.intensity_scale;
        let out = tape.value(g.images);
        Tensor::new(out.shape(), out.data().iter().map(|v| v * s).collect())
    }

    /// `(p_real, p_signal)` per image; `images` in GeV, `[batch, S, S, 1]`.
    pub fn discriminate(&self, images: &Tensor, mode: Mode) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.config.intensity_scale;
        let x = Tensor::new(images.shape(), images.data().iter().map(|v| v / s).collect())?;
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let d = self.discriminator_forward(&mut tape, xv, mode, false)?;
        let p = |v: Var| tape.value(v).data().iter().map(|&l| sigmoid(l)).collect();
        Ok((p(d.real_logit), p(d.aux_logit)))
    }

    /// Stage output shapes of both networks for a batch of `batch`.
    pub fn stage_shapes(&self, batch: usize) -> Result<(Vec<(String, Vec<usize>)>, Vec<(String, Vec<usize>)>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = latent(&mut rng, batch, self.config.latent_dim);
        let classes: Vec<usize> = (0..batch).map(|i| i % 2).collect();
        let mut tape = Tape::new();
        let zv = tape.constant(z);
        let g = self.generator_forward(&mut tape, zv, &classes, Mode::Train, false)?;
        let d = self.discriminator_forward(&mut tape, g.images, Mode::Train, false)?;
        let shapes = |t: &[(String, Var)]| t.iter().map(|(n, v)| (n.clone(), tape.value(*v).shape().to_vec())).collect();
        Ok((shapes(&g.trace), shapes(&d.trace)))
    }

    fn update_running(&mut self, norms: &[NormIds], stats: &[BatchStats]) {
        let m = self.config.bn_momentum;
        for (n, s) in norms.iter().zip(stats) {
            for (r, b) in self.params.tensor_mut(n.mean).data_mut().iter_mut().zip(&s.mean) {
                *r = m * *r + (1.0 - m) * b;
            }
            for (r, b) in self.params.tensor_mut(n.var).data_mut().iter_mut().zip(&s.var) {
                *r = m * *r + (1.0 - m) * b;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let entries: Vec<(&str, &Tensor)> = self.params.iter().map(|(_, p)| (p.name.as_str(), &p.tensor)).collect();
        checkpoint::save(path, &entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries = checkpoint::load(path)?;
        let meta = entries
            .iter()
            .find(|(n, _)| n == META)
            .ok_or_else(|| Error::Input(format!("{} has no model metadata", path.display())))?;
        let mut model = Self::new(LaganConfig::from_meta(&meta.1)?, 0)?;
        if entries.len() != model.params.len() {
            return Err(Error::Input(format!(
                "checkpoint has {} entries, model expects {}",
                entries.len(),
                model.params.len()
            )));
        }
        for (name, t) in entries {
            model.params.set(&name, t)?;
        }
        Ok(model)
    }

    /// Names of parameters holding non-finite values or gradients.
    pub fn non_finite_params(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|(_, p)| !p.tensor.is_finite() || p.tensor.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())))
            .map(|(_, p)| p.name.clone())
            .collect()
    }
}

/// Standard-normal latent rows `[n, dim]`.
pub fn latent(rng: &mut impl Rng, n: usize, dim: usize) -> Tensor {
    Tensor::from_fn(&[n, dim], |_| rng.sample(StandardNormal))
}

/// Copies images into a `[batch, 25, 25, 1]` tensor, dividing by `scale`.
pub fn images_to_tensor(images: &[&JetImage], scale: f64) -> Tensor {
    let mut data = Vec::with_capacity(images.len() * NUM_PIXELS);
    for img in images {
        data.extend(img.pixels().iter().map(|v| v / scale));
    }
    Tensor::new(&[images.len(), IMAGE_SIZE, IMAGE_SIZE, 1], data).expect("625 pixels per image")
}

/// Splits a `[batch, 25, 25, 1]` GeV tensor into generated images.
pub fn tensor_to_images(t: &Tensor, classes: &[usize]) -> Result<Vec<JetImage>> {
    if t.shape() != [classes.len(), IMAGE_SIZE, IMAGE_SIZE, 1] {
        return Err(Error::Dimension(format!("expected [{}, 25, 25, 1] images, got {:?}", classes.len(), t.shape())));
    }
    t.data()
        .chunks_exact(NUM_PIXELS)
        .zip(classes)
        .map(|(px, &c)| JetImage::from_pixels(px.to_vec(), Label::from_index(c)?, Origin::Generated))
        .collect()
}

/// Generates `count` images of one class in batches of at most `batch`.
pub fn generate_class(model: &Lagan, label: Label, count: usize, seed: u64, batch: usize) -> Result<Vec<JetImage>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut left = count;
    while left > 0 {
        let n = left.min(batch.max(1));
        let z = latent(&mut rng, n, model.config.latent_dim);
        let classes = vec![label.index(); n];
        out.extend(tensor_to_images(&model.generate(&z, &classes)?, &classes)?);
        left -= n;
    }
    Ok(out)
}

/// `per_class` images of each class, signal first.
pub fn generate_images(model: &Lagan, per_class: usize, seed: u64, batch: usize) -> Result<Vec<JetImage>> {
    let mut out = generate_class(model, Label::Signal, per_class, seed, batch)?;
    out.extend(generate_class(model, Label::Background, per_class, seed ^ 1, batch)?);
    Ok(out)
}

/// Flips each binary target independently with probability `rate`.
pub fn flip_labels(targets: &[f64], rate: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("flip rate {rate} outside [0, 1]")));
    }
    Ok(targets.iter().map(|&t| if rng.random::<f64>() < rate { 1.0 - t } else { t }).collect())
}

/// Mean binary cross-entropy of probabilities `p` against `targets`, with
/// probabilities clamped away from 0 and 1.
pub fn bce(p: &[f64], targets: &[f64]) -> f64 {
    const EPS: f64 = 1e-12;
    let s: f64 = p
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    s / p.len() as f64
}

/// Discriminator adversarial loss: cross-entropy on real and fake outputs
/// against their (possibly flipped) targets.
pub fn adversarial_loss(p_real_on_real: &[f64], p_real_on_fake: &[f64], t_real: &[f64], t_fake: &[f64]) -> f64 {
    bce(p_real_on_real, t_real) + bce(p_real_on_fake, t_fake)
}

/// Non-saturating generator loss `-log D(G(z))`.
pub fn generator_loss(p_real_on_fake: &[f64]) -> f64 {
    bce(p_real_on_fake, &vec![1.0; p_real_on_fake.len()])
}

pub fn auxiliary_loss(p_signal: &[f64], class_targets: &[f64]) -> f64 {
    bce(p_signal, class_targets)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlipRates {
    /// Real/fake targets of the primary head.
    pub primary: f64,
    /// Class targets of the auxiliary head on fake batches.
    pub aux_fake: f64,
    /// Class targets the generator is asked to match.
    pub class_swap: f64,
}

impl Default for FlipRates {
    fn default() -> Self {
        Self { primary: 0.05, aux_fake: 0.05, class_swap: 0.09 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub flips: FlipRates,
    pub seed: u64,
    /// Generated images per class for the end-of-epoch score; 0 disables it.
    pub eval_per_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 100, epochs: 40, adam: AdamConfig::default(), flips: FlipRates::default(), seed: 0, eval_per_class: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let f = self.flips;
        if [f.primary, f.aux_fake, f.class_swap].iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("flip rates must lie in [0, 1]".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub d_loss: f64,
    pub g_loss: f64,
    pub aux_real: f64,
    pub aux_fake: f64,
    pub mean_p_real_on_fake: f64,
}

/// Everything `train_step` needs besides the real batch, drawn up front so
/// the same inputs can be replayed.
#[derive(Clone, Debug)]
pub struct StepInputs {
    pub z: Tensor,
    pub fake_classes: Vec<usize>,
    pub t_real: Vec<f64>,
    pub t_fake: Vec<f64>,
    pub aux_fake: Vec<f64>,
    pub gen_aux: Vec<f64>,
}

impl StepInputs {
    pub fn draw(rng: &mut impl Rng, batch: usize, latent_dim: usize, flips: &FlipRates) -> Result<Self> {
        let z = latent(rng, batch, latent_dim);
        let fake_classes: Vec<usize> = (0..batch).map(|_| rng.random_range(0..2)).collect();
        let cls: Vec<f64> = fake_classes.iter().map(|&c| c as f64).collect();
        Ok(Self {
            z,
            t_real: flip_labels(&vec![1.0; batch], flips.primary, rng)?,
            t_fake: flip_labels(&vec![0.0; batch], flips.primary, rng)?,
            aux_fake: flip_labels(&cls, flips.aux_fake, rng)?,
            gen_aux: flip_labels(&cls, flips.class_swap, rng)?,
            fake_classes,
        })
    }
}

fn finite_or(model: &Lagan, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.to_string(), params: model.non_finite_params() })
    }
}

pub struct Trainer {
    pub model: Lagan,
    pub config: TrainConfig,
    d_opt: Adam,
    g_opt: Adam,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Lagan, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let d_opt = Adam::new(config.adam, &model.params, model.discriminator_ids());
        let g_opt = Adam::new(config.adam, &model.params, model.generator_ids());
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6c61_6761_6e00);
        Ok(Self { model, config, d_opt, g_opt, rng })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// One discriminator update on a real batch and a fake batch, then one
    /// generator update through the frozen discriminator.
    pub fn train_step(&mut self, real: &[&JetImage]) -> Result<StepMetrics> {
        let inputs = StepInputs::draw(&mut self.rng, real.len(), self.model.config.latent_dim, &self.config.flips)?;
        let x = images_to_tensor(real, self.model.config.intensity_scale);
        let classes: Vec<f64> = real.iter().map(|i| i.label.index() as f64).collect();
        self.step_with(&x, &classes, &inputs)
    }

    /// `train_step` with explicit real images (model units) and random inputs.
    pub fn step_with(&mut self, real: &Tensor, real_classes: &[f64], inp: &StepInputs) -> Result<StepMetrics> {
        let batch = real.shape()[0];
        if batch < 2 || inp.fake_classes.len() != batch {
            return Err(Error::DegenerateBatch("training needs matching real and fake batches of at least 2".into()));
        }
        let model = &self.model;

        let mut gt = Tape::new();
        let zv = gt.constant(inp.z.clone());
        let g = model.generator_forward(&mut gt, zv, &inp.fake_classes, Mode::Train, true)?;
        let fake = gt.value(g.images).clone();

        // discriminator update on a real-only and a fake-only batch
        let mut dt = Tape::new();
        let xr = dt.constant(real.clone());
        let xf = dt.constant(fake);
        let dr = model.discriminator_forward(&mut dt, xr, Mode::Train, true)?;
        let df = model.discriminator_forward(&mut dt, xf, Mode::Train, true)?;
        let l_real = dt.bce_with_logits(dr.real_logit, &inp.t_real)?;
        let l_fake = dt.bce_with_logits(df.real_logit, &inp.t_fake)?;
        let l_aux_real = dt.bce_with_logits(dr.aux_logit, real_classes)?;
        let l_aux_fake = dt.bce_with_logits(df.aux_logit, &inp.aux_fake)?;
        let s1 = dt.add(l_real, l_fake)?;
        let s2 = dt.add(l_aux_real, l_aux_fake)?;
        let d_loss = dt.add(s1, s2)?;
        let d_val = dt.value(d_loss).item();
        finite_or(model, "discriminator loss", d_val)?;
        let p_fake = dt.value(df.real_logit).data().iter().map(|&l| sigmoid(l)).sum::<f64>() / batch as f64;
        let aux_real = dt.value(l_aux_real).item();
        let aux_fake = dt.value(l_aux_fake).item();
        let grads = dt.backward(d_loss)?;

        self.model.params.accumulate(&grads, &dr.bound)?;
        self.model.params.accumulate(&grads, &df.bound)?;
        let bad = self.model.non_finite_params();
        if !bad.is_empty() {
            return Err(Error::NonFinite { what: "discriminator gradient".into(), params: bad });
        }
        self.d_opt.step(&mut self.model.params);
        let norms = self.model.layout.disc_norm.clone();
        self.model.update_running(&norms, &dr.stats);
        self.model.update_running(&norms, &df.stats);

        // generator update through the freshly updated discriminator
        let model = &self.model;
        let dg = model.discriminator_forward(&mut gt, g.images, Mode::Train, false)?;
        let ones = vec![1.0; batch];
        let l_adv = gt.bce_with_logits(dg.real_logit, &ones)?;
        let l_aux = gt.bce_with_logits(dg.aux_logit, &inp.gen_aux)?;
        let g_loss = gt.add(l_adv, l_aux)?;
        let g_val = gt.value(g_loss).item();
        finite_or(model, "generator loss", g_val)?;
        let grads = gt.backward(g_loss)?;
        self.model.params.accumulate(&grads, &g.bound)?;
        self.g_opt.step(&mut self.model.params);
        let norms = self.model.layout.gen_norm.clone();
        self.model.update_running(&norms, &g.stats);

        Ok(StepMetrics { d_loss: d_val, g_loss: g_val, aux_real, aux_fake, mean_p_real_on_fake: p_fake })
    }
}

/// Differentiable sum of the discriminator and generator objectives for
/// fixed inputs, with every parameter bound for gradients. Used to check
/// end-to-end derivatives.
pub fn joint_loss(model: &Lagan, tape: &mut Tape, real: &Tensor, real_classes: &[f64], inp: &StepInputs) -> Result<(Var, Vec<(ParamId, Var)>)> {
    let zv = tape.constant(inp.z.clone());
    let g = model.generator_forward(tape, zv, &inp.fake_classes, Mode::Train, true)?;
    let xr = tape.constant(real.clone());
    let dr = model.discriminator_forward(tape, xr, Mode::Train, true)?;
    let df = model.discriminator_forward(tape, g.images, Mode::Train, true)?;
    let parts = [
        tape.bce_with_logits(dr.real_logit, &inp.t_real)?,
        tape.bce_with_logits(df.real_logit, &inp.t_fake)?,
        tape.bce_with_logits(dr.aux_logit, real_classes)?,
        tape.bce_with_logits(df.aux_logit, &inp.aux_fake)?,
        tape.bce_with_logits(df.real_logit, &vec![1.0; inp.t_fake.len()])?,
        tape.bce_with_logits(df.aux_logit, &inp.gen_aux)?,
    ];
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = tape.add(total, p)?;
    }
    let mut bound = g.bound;
    bound.extend(dr.bound);
    bound.extend(df.bound);
    Ok((total, bound))
}

/// Cross-entropy for one logit, exposed for oracle comparisons.
pub fn logit_bce(logit: f64, target: f64) -> f64 {
    bce_logit(logit, target)
}

#[derive(Clone, Debug)]
pub struct EpochReport {
    pub epoch: usize,
    pub checkpoint: Option<PathBuf>,
    pub score: Option<ScoreReport>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// `(epoch, step, metrics)` for every step.
    pub steps: Vec<(usize, usize, StepMetrics)>,
    pub epochs: Vec<EpochReport>,
    pub model: Lagan,
}

impl TrainReport {
    /// Epoch with the lowest score, if epochs were scored.
    pub fn best_epoch(&self) -> Option<&EpochReport> {
        self.epochs
            .iter()
            .filter(|e| e.score.is_some())
            .min_by(|a, b| a.score.as_ref().unwrap().sigma.total_cmp(&b.score.as_ref().unwrap().sigma))
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("epoch,step,d_loss,g_loss,aux_real,aux_fake,mean_p_real_on_fake\n");
        for (e, k, m) in &self.steps {
            s.push_str(&format!(
                "{e},{k},{},{},{},{},{}\n",
                m.d_loss, m.g_loss, m.aux_real, m.aux_fake, m.mean_p_real_on_fake
            ));
        }
        s
    }
}

/// Shuffled-epoch training. With `out_dir`, writes `epoch_NNN.lgn` after each
/// epoch and the step metric log `metrics.csv`. With `eval_per_class > 0`,
/// scores each epoch against `dataset` on a window fixed from the real data.
pub fn train(model: Lagan, config: TrainConfig, dataset: &[JetImage], out_dir: Option<&Path>, mut on_epoch: impl FnMut(&EpochReport)) -> Result<TrainReport> {
    config.validate()?;
    if dataset.len() < config.batch_size {
        return Err(Error::Config(format!("dataset of {} images is smaller than one batch of {}", dataset.len(), config.batch_size)));
    }
    for l in Label::ALL {
        if !dataset.iter().any(|i| i.label == l) {
            return Err(Error::Config(format!("dataset has no {} images", l.name())));
        }
    }
    let reference = if config.eval_per_class > 0 {
        let pts = class_points(dataset, "real")?;
        let window = Window::covering(pts.iter().flat_map(|c| c.points.iter()))?;
        Some((pts, window))
    } else {
        None
    };
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = TrainReport { steps: Vec::new(), epochs: Vec::new(), model: trainer.model.clone() };
    let steps_per_epoch = dataset.len() / config.batch_size;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        shuffle(&mut order, trainer.rng());
        for k in 0..steps_per_epoch {
            let batch: Vec<&JetImage> = order[k * config.batch_size..(k + 1) * config.batch_size].iter().map(|&i| &dataset[i]).collect();
            let m = trainer.train_step(&batch)?;
            report.steps.push((epoch, (epoch - 1) * steps_per_epoch + k, m));
        }
        let checkpoint = match out_dir {
            Some(dir) => {
                let p = dir.join(format!("epoch_{epoch:03}.lgn"));
                trainer.model.save(&p)?;
                binio::atomic_write_str(&dir.join("metrics.csv"), &report.metrics_csv())?;
                Some(p)
            }
            None => None,
        };
        let score = match &reference {
            Some((real, window)) => {
                let seed = config.seed.wrapping_add(epoch as u64);
                let generated = generate_images(&trainer.model, config.eval_per_class, seed, 250)?;
                Some(score_points(real, &class_points(&generated, "generated")?, Some(*window))?)
            }
            None => None,
        };
        let e = EpochReport { epoch, checkpoint, score, seconds: start.elapsed().as_secs_f64() };
        on_epoch(&e);
        report.epochs.push(e);
    }
    report.model = trainer.model;
    Ok(report)
}

/// Pooled `(m, tau21)` range of a real dataset, used to score every epoch on
/// the same grid.
pub fn real_window(dataset: &[JetImage]) -> Result<Window> {
    let pts = class_points(dataset, "real")?;
    Window::covering(pts.iter().flat_map(|c| c.points.iter()))
}

fn shuffle(v: &mut [usize], rng: &mut impl Rng) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub batch: usize,
    /// Images per second of each trial.
    pub trials: Vec<f64>,
    /// Headline figure; a trial slowed by other load on the host moves it
    /// far less than the mean.
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub hardware: String,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let trials: Vec<String> = self.trials.iter().map(|t| format!("{t:.2}")).collect();
        format!(
            "images_per_second_median = {:.3}\nimages_per_second_mean = {:.3}\nimages_per_second_std = {:.3}\nbatch = {}\ntrials = [{}]\nhardware = {}\n",
            self.median,
            self.mean,
            self.std,
            self.batch,
            trials.join(", "),
            self.hardware
        )
    }
}

/// Describes the host in one line: CPU model, logical cores, arithmetic.
pub fn hardware_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|s| s.trim().to_string()))
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu}; {cores} logical cores; single-threaded f64 inference")
}

/// Repeated inference-mode generation for `seconds` per trial after one
/// warm-up batch; reports images/second over `trials` trials (at least 5).
pub fn throughput_bench(model: &Lagan, batch: usize, seconds: f64, trials: usize, warmup: f64, seed: u64) -> Result<BenchReport> {
    if batch == 0 || !(seconds > 0.0) || !(warmup >= 0.0) {
        return Err(Error::Config("benchmark needs a positive batch and duration and a non-negative warm-up".into()));
    }
    let trials = trials.max(5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = latent(&mut rng, batch, model.config.latent_dim);
    let classes: Vec<usize> = (0..batch).map(|i| i % 2).collect();
    // untimed generation until the warm-up period is over, at least one batch
    let start = Instant::now();
    loop {
        model.generate(&z, &classes)?;
        if start.elapsed().as_secs_f64() >= warmup {
            break;
        }
    }
    let mut rates = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        let mut images = 0usize;
        while start.elapsed().as_secs_f64() < seconds {
            model.generate(&z, &classes)?;
            images += batch;
        }
        rates.push(images as f64 / start.elapsed().as_secs_f64());
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let std = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rates.len() - 1) as f64).sqrt();
    let mut sorted = rates.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    Ok(BenchReport { batch, trials: rates, median, mean, std, hardware: hardware_note() })
}
