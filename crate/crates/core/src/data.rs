//! Synthetic jet events and the binary dataset formats.
//!
//! The generator is a stand-in for a physics event generator, not a
//! simulation. It produces two overlapping classes with controllable mass and
//! n-subjettiness structure: signal jets are two hard prongs whose invariant
//! mass is pinned to a resonance mass, background jets are one hard core with
//! a soft secondary emission and broader radiation.

use std::f64::consts::PI;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use sha2::{Digest, Sha256};

use crate::binio::{self, put_f64s, put_u32, put_u64, Reader};
use crate::error::{Error, Result};
use crate::jet::{wrap_phi, Constituent, EtaPhi, JetEvent, JetImage, Label, Origin, NUM_PIXELS, PIXEL_WIDTH};
use crate::preprocess::{preprocess, PreprocessConfig};

pub const IMAGE_MAGIC: [u8; 4] = *b"JIM1";
pub const EVENT_MAGIC: [u8; 4] = *b"JEV1";

/// Largest opening angle a prong may have and still land inside the image.
const MAX_OPENING: f64 = 1.2;
/// Range of the secondary emission's opening angle in background jets.
const BACKGROUND_OPENING: (f64, f64) = (0.15, 1.0);
/// Signal masses are drawn from a Gaussian truncated at this many widths.
const MASS_TAIL: f64 = 3.0;
/// Jets are placed uniformly in this pseudorapidity range.
const ETA_SPREAD: f64 = 1.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub label: Label,
    /// Total jet pt range (GeV), measured in the aligned jet frame.
    pub pt_range: (f64, f64),
    /// Target two-prong mass for signal jets (GeV).
    pub resonance_mass: f64,
    /// Relative Gaussian spread of the signal two-prong mass around `resonance_mass`.
    pub mass_resolution: f64,
    /// Typical pt share of the second prong.
    pub prong_fraction: f64,
    /// Angular smearing width of the soft radiation.
    pub dispersion: f64,
    /// Share of each prong's pt carried by soft radiation.
    pub soft_fraction: f64,
    /// Inclusive range of constituent counts per jet.
    pub constituent_count_range: (usize, usize),
}

impl SyntheticConfig {
    pub fn signal() -> Self {
        Self {
            label: Label::Signal,
            pt_range: (250.0, 300.0),
            resonance_mass: 80.0,
            mass_resolution: 0.08,
            prong_fraction: 0.35,
            dispersion: 0.1,
            soft_fraction: 0.25,
            constituent_count_range: (80, 160),
        }
    }

    pub fn background() -> Self {
        Self {
            label: Label::Background,
            prong_fraction: 0.2,
            dispersion: 0.2,
            soft_fraction: 0.45,
            ..Self::signal()
        }
    }

    pub fn for_label(label: Label) -> Self {
        match label {
            Label::Signal => Self::signal(),
            Label::Background => Self::background(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.pt_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("pt range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
        }
        if !(0.0..=1.0).contains(&self.prong_fraction) {
            return Err(Error::Config(format!("prong fraction {} outside [0, 1]", self.prong_fraction)));
        }
        if !(0.0..1.0).contains(&self.soft_fraction) {
            return Err(Error::Config(format!("soft fraction {} outside [0, 1)", self.soft_fraction)));
        }
        if !(0.0..0.5).contains(&self.mass_resolution) {
            return Err(Error::Config(format!("mass resolution {} outside [0, 0.5)", self.mass_resolution)));
        }
        if !(self.dispersion >= 0.0 && self.dispersion.is_finite()) {
            return Err(Error::Config(format!("dispersion {} must be >= 0", self.dispersion)));
        }
        let (nlo, nhi) = self.constituent_count_range;
        if nlo < 2 || nhi < nlo {
            return Err(Error::Config(format!("constituent count range ({nlo}, {nhi}) needs 2 <= lo <= hi")));
        }
        if self.label == Label::Signal {
            if !(self.resonance_mass > 0.0) {
                return Err(Error::Config("resonance mass must be positive".into()));
            }
            // the widest opening is needed at the lowest pt with an even split
            if min_opening(self.resonance_mass * (1.0 + MASS_TAIL * self.mass_resolution), lo) > MAX_OPENING {
                return Err(Error::Config(format!(
                    "resonance mass {} unreachable at pt {lo}: prongs would fall outside the image",
                    self.resonance_mass
                )));
            }
        }
        Ok(())
    }

    /// Stable digest of every field, for manifests and config echoes.
    pub fn digest(&self) -> String {
        hex_digest(format!("{self:?}").as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Opening angle needed for `mass` when the pt is split evenly.
fn min_opening(mass: f64, pt: f64) -> f64 {
    let c = 1.0 - 2.0 * mass * mass / (pt * pt);
    if c < -1.0 {
        f64::INFINITY
    } else {
        c.acos()
    }
}

/// RNG for event `index` of a stream family keyed by `seed`.
pub fn event_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

struct Prong {
    eta: f64,
    phi: f64,
    pt: f64,
}

/// Builds the jet in its aligned frame (leading prong at the origin, second
/// prong straight down in phi), then orients and places it at random.
pub fn synth_event(config: &SyntheticConfig, rng: &mut impl Rng) -> Result<JetEvent> {
    config.validate()?;
    let pt = rng.random_range(config.pt_range.0..=config.pt_range.1);
    let pf = config.prong_fraction;

    let (z, opening) = match config.label {
        Label::Signal => signal_split(config, pt, rng)?,
        Label::Background => {
            let z = if pf > 0.0 { rng.random_range(0.5 * pf..=(1.5 * pf).min(0.5)) } else { 0.0 };
            (z, rng.random_range(BACKGROUND_OPENING.0..BACKGROUND_OPENING.1))
        }
    };
    let mut prongs = vec![Prong { eta: 0.0, phi: 0.0, pt: (1.0 - z) * pt }];
    if z > 0.0 {
        prongs.push(Prong { eta: 0.0, phi: -opening, pt: z * pt });
    }

    let n = rng.random_range(config.constituent_count_range.0..=config.constituent_count_range.1);
    let soft_count = n.saturating_sub(prongs.len());
    let soft_share = if soft_count > 0 { config.soft_fraction } else { 0.0 };
    let mut constituents: Vec<Constituent> =
        prongs.iter().map(|p| Constituent::new(p.pt * (1.0 - soft_share), p.eta, p.phi)).collect();

    if soft_count > 0 {
        let smear = Normal::new(0.0, config.dispersion).map_err(|e| Error::Config(e.to_string()))?;
        // soft constituents are shared between prongs in proportion to their pt
        let mut per_prong = vec![soft_count];
        if prongs.len() == 2 {
            let second = if soft_count >= 2 {
                ((z * soft_count as f64).round() as usize).clamp(1, soft_count - 1)
            } else {
                0
            };
            per_prong = vec![soft_count - second, second];
        }
        for (k, (p, &count)) in prongs.iter().zip(&per_prong).enumerate() {
            if count == 0 {
                // no soft partner: the prong keeps its full pt
                constituents[k].pt = p.pt;
                continue;
            }
            let weights: Vec<f64> = (0..count).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = weights.iter().sum();
            for w in weights {
                let eta = p.eta + smear.sample(rng);
                let phi = p.phi + smear.sample(rng);
                constituents.push(Constituent::new(p.pt * soft_share * w / total, eta, phi));
            }
        }
    }

    let gamma = rng.random_range(-PI..PI);
    let eta0 = rng.random_range(-ETA_SPREAD..ETA_SPREAD);
    let phi0 = rng.random_range(-PI..PI);
    let (sin_g, cos_g) = gamma.sin_cos();
    let place = |c: &Constituent| {
        let p = c.momentum();
        let r = Constituent::from_momentum(p.px, p.py * cos_g + p.pz * sin_g, p.pz * cos_g - p.py * sin_g);
        Constituent::new(r.pt, r.eta + eta0, wrap_phi(r.phi + phi0))
    };
    let direction = |p: &Prong| place(&Constituent::new(1.0, p.eta, p.phi)).coords();
    let subjet1 = EtaPhi::new(eta0, wrap_phi(phi0));
    let subjet2 = prongs.get(1).map(direction);
    JetEvent::new(constituents.iter().map(place).collect(), subjet1, subjet2, config.label)
}

/// Second-prong share and opening angle for a signal jet. The opening is
/// snapped to the pixel lattice and the share re-solved so the two-prong
/// mass stays on target.
fn signal_split(config: &SyntheticConfig, pt: f64, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let m = if config.mass_resolution > 0.0 {
        let w = config.mass_resolution;
        let d: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal).clamp(-MASS_TAIL, MASS_TAIL);
        config.resonance_mass * (1.0 + w * d)
    } else {
        config.resonance_mass
    };
    let pf = config.prong_fraction.clamp(0.05, 0.5);
    let z0 = rng.random_range((pf - 0.1).max(0.05)..=(pf + 0.1).min(0.5));
    let d0 = (1.0 - m * m / (2.0 * pt * pt * z0 * (1.0 - z0))).max(-1.0).acos();
    let dmin = min_opening(m, pt);
    let k = (d0 / PIXEL_WIDTH).round().max((dmin / PIXEL_WIDTH - 1e-9).ceil());
    let opening = k * PIXEL_WIDTH;
    if opening > MAX_OPENING + 1e-9 {
        return Err(Error::Config(format!("resonance mass {m} unreachable at pt {pt}")));
    }
    let s = m * m / (2.0 * pt * pt * (1.0 - opening.cos()));
    let z = 0.5 * (1.0 - (1.0 - 4.0 * s).max(0.0).sqrt());
    Ok((z, opening))
}

/// Events `0..count` of one class; event `k` uses its own RNG stream.
pub fn synth_events(config: &SyntheticConfig, count: usize, seed: u64) -> Result<Vec<JetEvent>> {
    (0..count)
        .map(|k| synth_event(config, &mut event_rng(seed, 2 * k as u64 + config.label.index() as u64)))
        .collect()
}

/// Alternating signal/background events built from the class presets.
pub fn synth_mixed(signal: &SyntheticConfig, background: &SyntheticConfig, count: usize, seed: u64) -> Result<Vec<JetEvent>> {
    (0..count)
        .map(|k| {
            let cfg = if k % 2 == 0 { signal } else { background };
            synth_event(cfg, &mut event_rng(seed, 2 * k as u64 + cfg.label.index() as u64))
        })
        .collect()
}

/// Preprocessed images for `per_class` events of each class, signal first.
pub fn synth_images(per_class: usize, seed: u64, pre: &PreprocessConfig) -> Result<Vec<JetImage>> {
    let mut out = Vec::with_capacity(2 * per_class);
    for label in [Label::Signal, Label::Background] {
        for ev in synth_events(&SyntheticConfig::for_label(label), per_class, seed)? {
            out.push(preprocess(&ev, pre)?);
        }
    }
    Ok(out)
}

pub fn write_images(path: &Path, images: &[JetImage]) -> Result<()> {
    binio::atomic_write(path, |w| {
        w.write_all(&IMAGE_MAGIC)?;
        put_u64(w, images.len() as u64)?;
        for img in images {
            w.write_all(&[img.label as u8, img.origin as u8])?;
            put_f64s(w, img.pixels())?;
        }
        Ok(())
    })
}

pub fn read_images(path: &Path) -> Result<Vec<JetImage>> {
    let mut r = Reader::new(binio::open(path)?, path.display().to_string());
    r.magic(IMAGE_MAGIC)?;
    let n = r.u64()?;
    let mut out = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        let [l, o] = r.bytes::<2>()?;
        let label = Label::from_index(l as usize)?;
        let origin = Origin::from_index(o as usize)?;
        out.push(JetImage::from_pixels(r.f64s(NUM_PIXELS)?, label, origin)?);
    }
    r.finish()?;
    Ok(out)
}

pub fn write_events(path: &Path, events: &[JetEvent]) -> Result<()> {
    binio::atomic_write(path, |w| {
        w.write_all(&EVENT_MAGIC)?;
        put_u64(w, events.len() as u64)?;
        for ev in events {
            w.write_all(&[ev.label as u8])?;
            put_u32(w, ev.constituents.len() as u32)?;
            for c in &ev.constituents {
                put_f64s(w, &[c.pt, c.eta, c.phi])?;
            }
            put_f64s(w, &[ev.subjet1.eta, ev.subjet1.phi])?;
            let s2 = ev.subjet2.unwrap_or(EtaPhi::new(0.0, 0.0));
            w.write_all(&[ev.subjet2.is_some() as u8])?;
            put_f64s(w, &[s2.eta, s2.phi])?;
        }
        Ok(())
    })
}

pub fn read_events(path: &Path) -> Result<Vec<JetEvent>> {
    let mut r = Reader::new(binio::open(path)?, path.display().to_string());
    r.magic(EVENT_MAGIC)?;
    let n = r.u64()?;
    let mut out = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        let label = Label::from_index(r.u8()? as usize)?;
        let count = r.u32()? as usize;
        let raw = r.f64s(3 * count)?;
        // raw phi is kept as stored so round trips are bit-exact
        let constituents = raw.chunks_exact(3).map(|c| Constituent { pt: c[0], eta: c[1], phi: c[2] }).collect();
        let s1 = r.f64s(2)?;
        let has2 = r.u8()? != 0;
        let s2 = r.f64s(2)?;
        let subjet2 = has2.then(|| EtaPhi::new(s2[0], s2[1]));
        out.push(JetEvent::new(constituents, EtaPhi::new(s1[0], s1[1]), subjet2, label)?);
    }
    r.finish()?;
    Ok(out)
}

/// Plain-text summary written next to a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub format: String,
    pub path: PathBuf,
    /// `(label, origin, count)` for every non-empty combination.
    pub counts: Vec<(Label, Origin, usize)>,
    pub config_digest: Option<String>,
}

impl DatasetManifest {
    pub fn for_images(path: &Path, images: &[JetImage], config_digest: Option<String>) -> Self {
        let mut counts = Vec::new();
        for label in Label::ALL {
            for origin in [Origin::Real, Origin::Generated] {
                let n = images.iter().filter(|i| i.label == label && i.origin == origin).count();
                if n > 0 {
                    counts.push((label, origin, n));
                }
            }
        }
        Self { format: "JIM1".into(), path: path.to_path_buf(), counts, config_digest }
    }

    pub fn for_events(path: &Path, events: &[JetEvent], config_digest: Option<String>) -> Self {
        let counts = Label::ALL
            .iter()
            .map(|&l| (l, Origin::Real, events.iter().filter(|e| e.label == l).count()))
            .filter(|c| c.2 > 0)
            .collect();
        Self { format: "JEV1".into(), path: path.to_path_buf(), counts, config_digest }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|c| c.2).sum()
    }

    pub fn manifest_path(data: &Path) -> PathBuf {
        let mut s = data.as_os_str().to_owned();
        s.push(".manifest");
        PathBuf::from(s)
    }

    pub fn to_text(&self) -> String {
        let file = self.path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        let mut s = format!("format = {}\nfile = {}\n", self.format, file);
        for (l, o, n) in &self.counts {
            s.push_str(&format!("count.{}.{} = {}\n", l.name(), o.name(), n));
        }
        if let Some(d) = &self.config_digest {
            s.push_str(&format!("config_sha256 = {d}\n"));
        }
        s
    }

    pub fn write(&self) -> Result<()> {
        binio::atomic_write_str(&Self::manifest_path(&self.path), &self.to_text())
    }

    pub fn read(data: &Path) -> Result<Self> {
        let mut text = String::new();
        binio::open(&Self::manifest_path(data))?.read_to_string(&mut text)?;
        let mut m = Self { format: String::new(), path: data.to_path_buf(), counts: Vec::new(), config_digest: None };
        for line in text.as_bytes().lines() {
            let line = line?;
            let Some((k, v)) = line.split_once(" = ") else { continue };
            match k {
                "format" => m.format = v.to_string(),
                "config_sha256" => m.config_digest = Some(v.to_string()),
                _ => {
                    if let Some(rest) = k.strip_prefix("count.") {
                        let (l, o) = rest
                            .split_once('.')
                            .ok_or_else(|| Error::Input(format!("bad manifest key {k}")))?;
                        let label = parse_label(l)?;
                        let origin = match o {
                            "real" => Origin::Real,
                            "generated" => Origin::Generated,
                            _ => return Err(Error::Input(format!("bad origin {o} in manifest"))),
                        };
                        let n = v.parse().map_err(|_| Error::Input(format!("bad count {v} in manifest")))?;
                        m.counts.push((label, origin, n));
                    }
                }
            }
        }
        Ok(m)
    }
}

pub fn parse_label(s: &str) -> Result<Label> {
    Label::ALL
        .into_iter()
        .find(|l| l.name() == s)
        .ok_or_else(|| Error::Input(format!("unknown class {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        SyntheticConfig::signal().validate().unwrap();
        SyntheticConfig::background().validate().unwrap();
        let bad = SyntheticConfig { resonance_mass: 400.0, ..SyntheticConfig::signal() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn streams_are_independent_of_order() {
        let cfg = SyntheticConfig::signal();
        let all = synth_events(&cfg, 5, 3).unwrap();
        let fourth = synth_event(&cfg, &mut event_rng(3, 2 * 4 + 1)).unwrap();
        assert_eq!(all[4], fourth);
    }

    #[test]
    fn signal_split_hits_mass() {
        let cfg = SyntheticConfig { mass_resolution: 0.0, ..SyntheticConfig::signal() };
        let mut r = event_rng(9, 0);
        for _ in 0..100 {
            let pt = r.random_range(250.0..300.0);
            let (z, d) = signal_split(&cfg, pt, &mut r).unwrap();
            let m = (2.0 * z * (1.0 - z) * pt * pt * (1.0 - d.cos())).sqrt();
            assert!((m - 80.0).abs() < 1e-9);
            assert!(((d / PIXEL_WIDTH).round() * PIXEL_WIDTH - d).abs() < 1e-12);
        }
    }
}
