//! Jet constituents, events and 25x25 jet images.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of pixels along each image axis.
pub const IMAGE_SIZE: usize = 25;
pub const NUM_PIXELS: usize = IMAGE_SIZE * IMAGE_SIZE;
/// Pixel width in both eta and phi.
pub const PIXEL_WIDTH: f64 = 0.1;
/// Images span `[-WINDOW, WINDOW]` in eta and phi.
pub const WINDOW: f64 = 1.25;
/// Index of the central row and column.
pub const CENTER: usize = IMAGE_SIZE / 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Background = 0,
    Signal = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Background, Label::Signal];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::Background),
            1 => Ok(Label::Signal),
            _ => Err(Error::Input(format!("invalid class label {i}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Background => "background",
            Label::Signal => "signal",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Background => Label::Signal,
            Label::Signal => Label::Background,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Real = 0,
    Generated = 1,
}

impl Origin {
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Origin::Real),
            1 => Ok(Origin::Generated),
            _ => Err(Error::Input(format!("invalid origin tag {i}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::Generated => "generated",
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phi(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaPhi {
    pub eta: f64,
    pub phi: f64,
}

impl EtaPhi {
    pub fn new(eta: f64, phi: f64) -> Self {
        Self { eta, phi }
    }
}

/// Cartesian four-momentum `(E, px, py, pz)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourMomentum {
    pub e: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

/// A massless calorimeter cell or particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constituent {
    pub pt: f64,
    pub eta: f64,
    pub phi: f64,
}

impl Constituent {
    pub fn new(pt: f64, eta: f64, phi: f64) -> Self {
        Self { pt, eta, phi: wrap_phi(phi) }
    }

    pub fn momentum(&self) -> FourMomentum {
        FourMomentum {
            e: self.pt * self.eta.cosh(),
            px: self.pt * self.phi.cos(),
            py: self.pt * self.phi.sin(),
            pz: self.pt * self.eta.sinh(),
        }
    }

    /// Rebuilds `(pt, eta, phi)` from a three-momentum, treating it as massless.
    pub fn from_momentum(px: f64, py: f64, pz: f64) -> Self {
        let pt = px.hypot(py);
        let eta = if pt > 0.0 { (pz / pt).asinh() } else { 0.0 };
        Self { pt, eta, phi: py.atan2(px) }
    }

    pub fn energy(&self) -> f64 {
        self.pt * self.eta.cosh()
    }

    pub fn coords(&self) -> EtaPhi {
        EtaPhi::new(self.eta, self.phi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JetEvent {
    pub constituents: Vec<Constituent>,
    /// Leading subjet direction.
    pub subjet1: EtaPhi,
    /// Subleading subjet direction, when one was found.
    pub subjet2: Option<EtaPhi>,
    pub label: Label,
}

impl JetEvent {
    pub fn new(constituents: Vec<Constituent>, subjet1: EtaPhi, subjet2: Option<EtaPhi>, label: Label) -> Result<Self> {
        if constituents.is_empty() {
            return Err(Error::Input("a jet event needs at least one constituent".into()));
        }
        if let Some(c) = constituents.iter().find(|c| !(c.pt >= 0.0) || !c.eta.is_finite() || !c.phi.is_finite()) {
            return Err(Error::Input(format!("invalid constituent {c:?}")));
        }
        Ok(Self { constituents, subjet1, subjet2, label })
    }

    pub fn total_pt(&self) -> f64 {
        self.constituents.iter().map(|c| c.pt).sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.constituents.iter().map(Constituent::energy).sum()
    }
}

/// A 25x25 grid of non-negative pixel intensities (GeV). Row `i` is the eta
/// bin and column `j` the phi bin.
#[derive(Clone, Debug, PartialEq)]
pub struct JetImage {
    pixels: Vec<f64>,
    pub label: Label,
    pub origin: Origin,
}

impl JetImage {
    pub fn zeros(label: Label, origin: Origin) -> Self {
        Self { pixels: vec![0.0; NUM_PIXELS], label, origin }
    }

    pub fn from_pixels(pixels: Vec<f64>, label: Label, origin: Origin) -> Result<Self> {
        if pixels.len() != NUM_PIXELS {
            return Err(Error::Dimension(format!("jet image needs {NUM_PIXELS} pixels, got {}", pixels.len())));
        }
        if let Some(p) = pixels.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::Input(format!("pixel intensity {p} is not a finite non-negative value")));
        }
        Ok(Self { pixels, label, origin })
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Mutable pixel access; callers keep intensities non-negative.
    #[inline]
    pub(crate) fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * IMAGE_SIZE + j]
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(k, &v)| (k / IMAGE_SIZE, k % IMAGE_SIZE, v))
    }
}

/// Center `(eta, phi)` of pixel `(i, j)`.
pub fn pixel_center(i: usize, j: usize) -> Result<(f64, f64)> {
    if i >= IMAGE_SIZE || j >= IMAGE_SIZE {
        return Err(Error::IndexOutOfRange(format!("pixel ({i}, {j}) outside {IMAGE_SIZE}x{IMAGE_SIZE}")));
    }
    Ok((center_coord(i), center_coord(j)))
}

#[inline]
pub(crate) fn center_coord(i: usize) -> f64 {
    (i as f64 - CENTER as f64) / 10.0
}

/// Bin index along one axis; `None` outside `[-1.25, 1.25]`.
pub fn bin_index(x: f64) -> Option<usize> {
    if !(-WINDOW..=WINDOW).contains(&x) {
        return None;
    }
    let k = ((x + WINDOW) / PIXEL_WIDTH).floor() as usize;
    Some(k.min(IMAGE_SIZE - 1))
}

pub fn pixel_of(eta: f64, phi: f64) -> Option<(usize, usize)> {
    Some((bin_index(eta)?, bin_index(phi)?))
}

/// Fraction of pixels with intensity strictly above `threshold`.
pub fn occupancy(image: &JetImage, threshold: f64) -> f64 {
    image.pixels.iter().filter(|&&p| p > threshold).count() as f64 / NUM_PIXELS as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_centers() {
        assert_eq!(pixel_center(12, 12).unwrap(), (0.0, 0.0));
        assert_eq!(pixel_center(0, 0).unwrap(), (-1.2, -1.2));
        assert_eq!(pixel_center(24, 24).unwrap(), (1.2, 1.2));
        assert!(matches!(pixel_center(25, 0), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn center_bin_round_trip() {
        for i in 0..IMAGE_SIZE {
            for j in 0..IMAGE_SIZE {
                let (eta, phi) = pixel_center(i, j).unwrap();
                assert_eq!(pixel_of(eta, phi), Some((i, j)));
            }
        }
        assert_eq!(bin_index(1.25), Some(24));
        assert_eq!(bin_index(-1.25), Some(0));
        assert_eq!(bin_index(1.2500001), None);
    }

    #[test]
    fn occupancy_counts() {
        let mut img = JetImage::zeros(Label::Signal, Origin::Real);
        assert_eq!(occupancy(&img, 0.0), 0.0);
        img.pixels_mut()[7] = 3.0;
        assert_eq!(occupancy(&img, 0.0), 1.0 / 625.0);
    }

    #[test]
    fn wraps_phi() {
        assert!((wrap_phi(3.1 + 0.2) - (3.3 - 2.0 * PI)).abs() < 1e-12);
        assert_eq!(wrap_phi(PI), PI);
        assert_eq!(wrap_phi(-PI), PI);
    }

    #[test]
    fn four_momentum_is_massless() {
        let c = Constituent::new(37.0, 0.4, -1.1);
        let p = c.momentum();
        let m2 = p.e * p.e - p.px * p.px - p.py * p.py - p.pz * p.pz;
        assert!(m2.abs() < 1e-9);
        let back = Constituent::from_momentum(p.px, p.py, p.pz);
        assert!((back.pt - c.pt).abs() < 1e-12 && (back.eta - c.eta).abs() < 1e-12 && (back.phi - c.phi).abs() < 1e-12);
    }
}
