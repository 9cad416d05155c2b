//! Event standardization: translate, rotate, pixelize, flip, truncate.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::jet::{pixel_of, wrap_phi, Constituent, EtaPhi, JetEvent, JetImage, Origin, CENTER, IMAGE_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotationMode {
    /// Proper rotation of every constituent four-vector about the x axis.
    Constituent,
    /// Bicubic resampling of the pixelized image.
    ImageCubic,
    None,
}

impl RotationMode {
    pub fn name(self) -> &'static str {
        match self {
            RotationMode::Constituent => "constituent",
            RotationMode::ImageCubic => "cubic",
            RotationMode::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub rotation: RotationMode,
    pub renormalize: bool,
    pub truncation_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { rotation: RotationMode::Constituent, renormalize: true, truncation_threshold: 1e-3 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_threshold >= 0.0) || !self.truncation_threshold.is_finite() {
            return Err(Error::Config(format!("truncation threshold {} must be >= 0", self.truncation_threshold)));
        }
        Ok(())
    }
}

/// Shifts the event so the leading subjet sits at the origin.
pub fn translate(event: &JetEvent) -> JetEvent {
    let s = event.subjet1;
    let shift = |p: EtaPhi| EtaPhi::new(p.eta - s.eta, wrap_phi(p.phi - s.phi));
    JetEvent {
        constituents: event
            .constituents
            .iter()
            .map(|c| Constituent::new(c.pt, c.eta - s.eta, c.phi - s.phi))
            .collect(),
        subjet1: EtaPhi::new(0.0, 0.0),
        subjet2: event.subjet2.map(shift),
        label: event.label,
    }
}

/// Intensity-weighted leading principal direction of `(eta, phi)` about the
/// origin, pointing toward the more energetic side.
pub fn principal_axis(event: &JetEvent) -> Result<EtaPhi> {
    let (mut see, mut sep, mut spp) = (0.0, 0.0, 0.0);
    for c in &event.constituents {
        see += c.pt * c.eta * c.eta;
        sep += c.pt * c.eta * c.phi;
        spp += c.pt * c.phi * c.phi;
    }
    // leading eigenvector of [[see, sep], [sep, spp]]
    let half_diff = 0.5 * (see - spp);
    let lambda = 0.5 * (see + spp) + half_diff.hypot(sep);
    let (mut ve, mut vp) = if sep.abs() > 0.0 {
        (lambda - spp, sep)
    } else if see >= spp {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = ve.hypot(vp);
    if !(lambda > 0.0) || !(norm > 0.0) {
        return Err(Error::DegenerateAxis("all constituents sit at the leading subjet".into()));
    }
    ve /= norm;
    vp /= norm;
    let (mut pos, mut neg) = (0.0, 0.0);
    for c in &event.constituents {
        let proj = c.eta * ve + c.phi * vp;
        if proj > 0.0 {
            pos += c.pt;
        } else if proj < 0.0 {
            neg += c.pt;
        }
    }
    if neg > pos {
        ve = -ve;
        vp = -vp;
    }
    Ok(EtaPhi::new(ve, vp))
}

fn axis_direction(event: &JetEvent) -> Result<EtaPhi> {
    match event.subjet2 {
        Some(s) => Ok(s),
        None => principal_axis(event),
    }
}

/// Rotation angle about the x axis that carries `sub2` (translated frame)
/// to angle -pi/2 in the eta-phi plane.
pub fn rotation_beta(sub2: EtaPhi) -> Result<f64> {
    let py = sub2.phi.sin();
    let pz = sub2.eta.sinh();
    if py == 0.0 && pz == 0.0 {
        return Err(Error::DegenerateAxis("subleading subjet coincides with the leading one".into()));
    }
    Ok(-py.atan2(pz) - FRAC_PI_2)
}

fn rotate_x(c: &Constituent, cos_b: f64, sin_b: f64) -> Constituent {
    let p = c.momentum();
    let py = p.py * cos_b + p.pz * sin_b;
    let pz = p.pz * cos_b - p.py * sin_b;
    Constituent::from_momentum(p.px, py, pz)
}

/// Rotates every constituent about the x axis so the subleading subjet (or the
/// principal axis when absent) points to -pi/2. Expects a translated event.
pub fn rotate_constituents(event: &JetEvent) -> Result<JetEvent> {
    let beta = rotation_beta(axis_direction(event)?)?;
    let (sin_b, cos_b) = beta.sin_cos();
    let rot = |p: EtaPhi| rotate_x(&Constituent::new(1.0, p.eta, p.phi), cos_b, sin_b).coords();
    Ok(JetEvent {
        constituents: event.constituents.iter().map(|c| rotate_x(c, cos_b, sin_b)).collect(),
        subjet1: rot(event.subjet1),
        subjet2: event.subjet2.map(rot),
        label: event.label,
    })
}

/// Angle of a point in the translated plane with eta as the horizontal axis.
pub fn plane_angle(p: EtaPhi) -> f64 {
    p.phi.atan2(p.eta)
}

/// Adds each constituent's pt to its cell; out-of-window constituents are dropped.
pub fn pixelize(event: &JetEvent) -> JetImage {
    let mut img = JetImage::zeros(event.label, Origin::Real);
    let px = img.pixels_mut();
    for c in &event.constituents {
        if let Some((i, j)) = pixel_of(c.eta, c.phi) {
            px[i * IMAGE_SIZE + j] += c.pt;
        }
    }
    img
}

fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Rotates the image content counterclockwise by `angle` about the central
/// pixel (eta horizontal, phi vertical) with Catmull-Rom bicubic sampling.
/// Negative lobes are clamped to zero; `renormalize` restores the input sum.
pub fn rotate_image_cubic(image: &JetImage, angle: f64, renormalize: bool) -> JetImage {
    let (s, c) = angle.sin_cos();
    let src = image.pixels();
    let n = IMAGE_SIZE as isize;
    let lim = CENTER as f64 + 0.5;
    let mut out = JetImage::zeros(image.label, image.origin);
    let dst = out.pixels_mut();
    for i in 0..IMAGE_SIZE {
        for j in 0..IMAGE_SIZE {
            let x = i as f64 - CENTER as f64;
            let y = j as f64 - CENTER as f64;
            let xs = x * c + y * s;
            let ys = -x * s + y * c;
            if xs.abs() > lim || ys.abs() > lim {
                continue;
            }
            let u = xs + CENTER as f64;
            let v = ys + CENTER as f64;
            let (u0, v0) = (u.floor(), v.floor());
            let (tu, tv) = (u - u0, v - v0);
            let mut acc = 0.0;
            for a in -1..=2isize {
                let wu = catmull_rom(tu - a as f64);
                if wu == 0.0 {
                    continue;
                }
                let ii = (u0 as isize + a).clamp(0, n - 1) as usize;
                for b in -1..=2isize {
                    let wv = catmull_rom(tv - b as f64);
                    if wv == 0.0 {
                        continue;
                    }
                    let jj = (v0 as isize + b).clamp(0, n - 1) as usize;
                    acc += wu * wv * src[ii * IMAGE_SIZE + jj];
                }
            }
            dst[i * IMAGE_SIZE + j] = acc.max(0.0);
        }
    }
    if renormalize {
        let (before, after) = (image.sum(), out.sum());
        if after > 0.0 {
            let k = before / after;
            out.pixels_mut().iter_mut().for_each(|p| *p *= k);
        }
    }
    out
}

/// Energy in the two halves along eta, excluding the central row.
pub fn half_energies(image: &JetImage) -> (f64, f64) {
    let mut left = 0.0;
    let mut right = 0.0;
    for (i, _, v) in image.nonzero() {
        if i < CENTER {
            left += v;
        } else if i > CENTER {
            right += v;
        }
    }
    (left, right)
}

/// Mirrors the eta axis when the negative-eta half carries more energy.
pub fn parity_flip(image: &JetImage) -> JetImage {
    let (left, right) = half_energies(image);
    if left <= right {
        return image.clone();
    }
    let mut out = JetImage::zeros(image.label, image.origin);
    let src = image.pixels();
    let dst = out.pixels_mut();
    for i in 0..IMAGE_SIZE {
        let m = IMAGE_SIZE - 1 - i;
        dst[m * IMAGE_SIZE..(m + 1) * IMAGE_SIZE].copy_from_slice(&src[i * IMAGE_SIZE..(i + 1) * IMAGE_SIZE]);
    }
    out
}

pub fn truncate_low_intensity(image: &JetImage, threshold: f64) -> JetImage {
    let mut out = image.clone();
    out.pixels_mut().iter_mut().filter(|p| **p < threshold).for_each(|p| *p = 0.0);
    out
}

/// Full pipeline: translate, rotate, pixelize, parity flip, truncate.
pub fn preprocess(event: &JetEvent, config: &PreprocessConfig) -> Result<JetImage> {
    config.validate()?;
    let moved = translate(event);
    let image = match config.rotation {
        RotationMode::Constituent => pixelize(&rotate_constituents(&moved)?),
        RotationMode::ImageCubic => {
            let target = plane_angle(axis_direction(&moved)?);
            rotate_image_cubic(&pixelize(&moved), -FRAC_PI_2 - target, config.renormalize)
        }
        RotationMode::None => pixelize(&moved),
    };
    Ok(truncate_low_intensity(&parity_flip(&image), config.truncation_threshold))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    /// Fraction of the `before` sample at or above the threshold.
    pub eff_before: f64,
    /// Fraction of the `after` sample at or above the threshold.
    pub eff_after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    /// Set when both samples are single-valued, so the curve carries no shape.
    pub degenerate: bool,
}

impl RocCurve {
    /// `(eff_before, 1 / eff_after)` pairs, skipping points with zero `after` efficiency.
    pub fn inverse_pairs(&self) -> Vec<(f64, f64)> {
        self.points.iter().filter(|p| p.eff_after > 0.0).map(|p| (p.eff_before, 1.0 / p.eff_after)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,eff_before,eff_after,inv_eff_after\n");
        for p in &self.points {
            let inv = if p.eff_after > 0.0 { 1.0 / p.eff_after } else { f64::INFINITY };
            s.push_str(&format!("{},{},{},{}\n", p.threshold, p.eff_before, p.eff_after, inv));
        }
        s
    }
}

/// ROC curve separating `before` from `after` by thresholding the pooled
/// values; AUC equals `P(X > Y) + P(X = Y) / 2` with X from `before`.
pub fn roc_info_loss(before: &[f64], after: &[f64]) -> Result<RocCurve> {
    if before.is_empty() || after.is_empty() {
        return Err(Error::Empty("roc needs two non-empty samples".into()));
    }
    if before.iter().chain(after).any(|v| !v.is_finite()) {
        return Err(Error::Input("roc samples must be finite".into()));
    }
    let mut pooled: Vec<(f64, bool)> =
        before.iter().map(|&v| (v, true)).chain(after.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (nb, na) = (before.len() as f64, after.len() as f64);
    let mut points = vec![RocPoint { threshold: f64::INFINITY, eff_before: 0.0, eff_after: 0.0 }];
    let (mut cb, mut ca) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < pooled.len() {
        let t = pooled[k].0;
        let (pb, pa) = (cb, ca);
        while k < pooled.len() && pooled[k].0 == t {
            if pooled[k].1 {
                cb += 1;
            } else {
                ca += 1;
            }
            k += 1;
        }
        // trapezoid over the tied block yields the half-credit for ties
        auc += (ca - pa) as f64 * (cb + pb) as f64 * 0.5;
        points.push(RocPoint { threshold: t, eff_before: cb as f64 / nb, eff_after: ca as f64 / na });
    }
    let single = |xs: &[f64]| xs.iter().all(|&v| v == xs[0]);
    Ok(RocCurve { points, auc: auc / (nb * na), degenerate: single(before) && single(after) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Label;

    fn event(cs: &[(f64, f64, f64)], s1: (f64, f64), s2: Option<(f64, f64)>) -> JetEvent {
        let cs = cs.iter().map(|&(pt, e, p)| Constituent::new(pt, e, p)).collect();
        JetEvent::new(cs, EtaPhi::new(s1.0, s1.1), s2.map(|(e, p)| EtaPhi::new(e, p)), Label::Signal).unwrap()
    }

    #[test]
    fn translate_wraps_phi() {
        let ev = event(&[(1.0, 0.0, 3.1)], (0.0, -0.2), None);
        let t = translate(&ev);
        assert!((t.constituents[0].phi - (3.3 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_rotation_is_identity() {
        let ev = event(&[(10.0, 0.1, 0.2), (5.0, -0.3, 0.05)], (0.0, 0.0), Some((0.0, -0.4)));
        let r = rotate_constituents(&ev).unwrap();
        for (a, b) in ev.constituents.iter().zip(&r.constituents) {
            assert!((a.pt - b.pt).abs() < 1e-12 && (a.eta - b.eta).abs() < 1e-12 && (a.phi - b.phi).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_axis() {
        let ev = event(&[(1.0, 0.0, 0.0)], (0.0, 0.0), Some((0.0, 0.0)));
        assert!(matches!(rotate_constituents(&ev), Err(Error::DegenerateAxis(_))));
        let ev = event(&[(1.0, 0.0, 0.0)], (0.0, 0.0), None);
        assert!(matches!(rotate_constituents(&ev), Err(Error::DegenerateAxis(_))));
    }

    #[test]
    fn principal_axis_points_to_heavier_side() {
        let ev = event(&[(1.0, 0.0, 0.0), (5.0, 0.3, 0.0), (1.0, -0.3, 0.0)], (0.0, 0.0), None);
        let a = principal_axis(&ev).unwrap();
        assert!((a.eta - 1.0).abs() < 1e-12 && a.phi.abs() < 1e-12);
    }

    #[test]
    fn catmull_rom_partition_of_unity() {
        for k in 0..20 {
            let t = k as f64 / 20.0;
            let s: f64 = (-1..=2).map(|a| catmull_rom(t - a as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn roc_ties_and_disjoint() {
        let r = roc_info_loss(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert!(r.degenerate);
        let r = roc_info_loss(&[3.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert!(!r.degenerate);
        assert!(roc_info_loss(&[], &[1.0]).is_err());
    }
}
