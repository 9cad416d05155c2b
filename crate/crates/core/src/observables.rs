//! Jet observables computed directly from pixel intensities.

use crate::error::{Error, Result};
use crate::jet::{center_coord, JetImage};

/// Jet radius used in the kt distance and the n-subjettiness normalization.
pub const JET_RADIUS: f64 = 1.0;

/// Default truncation threshold for intensity histograms (GeV).
pub const INTENSITY_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservableSet {
    pub pt: f64,
    pub mass: f64,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub tau21: Option<f64>,
    /// True when the mass radicand was negative and clamped to zero.
    pub mass_clamped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxisSet {
    pub axes: Vec<(f64, f64)>,
}

fn sums(image: &JetImage) -> (f64, f64, f64, f64) {
    let (mut total, mut cx, mut sy, mut sh) = (0.0, 0.0, 0.0, 0.0);
    for (i, j, v) in image.nonzero() {
        let (eta, phi) = (center_coord(i), center_coord(j));
        total += v;
        cx += v * phi.cos();
        sy += v * phi.sin();
        sh += v * eta.sinh();
    }
    (total, cx, sy, sh)
}

pub fn image_pt(image: &JetImage) -> f64 {
    let (_, cx, sy, _) = sums(image);
    (cx * cx + sy * sy).sqrt()
}

/// Squared image mass before clamping; may be slightly negative.
pub fn mass_squared(image: &JetImage) -> f64 {
    let (total, cx, sy, sh) = sums(image);
    total * total - (cx * cx + sy * sy) - sh * sh
}

/// Mass and whether the radicand had to be clamped.
pub fn image_mass_checked(image: &JetImage) -> (f64, bool) {
    let m2 = mass_squared(image);
    if m2 < 0.0 {
        (0.0, true)
    } else {
        (m2.sqrt(), false)
    }
}

pub fn image_mass(image: &JetImage) -> f64 {
    image_mass_checked(image).0
}

/// Pseudojet on the pixel lattice. Positions stay integer so that equal
/// angular separations compare exactly equal.
#[derive(Clone, Copy)]
struct Pseudo {
    pt: f64,
    row: i64,
    col: i64,
}

/// kt distance up to the constant factor (pixel pitch / R)^2, which cannot
/// change the clustering order.
fn kt_distance(a: &Pseudo, b: &Pseudo) -> f64 {
    let (dr, dc) = (a.row - b.row, a.col - b.col);
    a.pt.min(b.pt).powi(2) * (dr * dr + dc * dc) as f64
}

/// Exclusive kt clustering of the nonzero pixels down to `n` clusters with
/// winner-take-all recombination.
pub fn find_axes(image: &JetImage, n: usize) -> Result<AxisSet> {
    if n == 0 {
        return Err(Error::Input("axis count must be at least 1".into()));
    }
    let mut ps: Vec<Pseudo> =
        image.nonzero().map(|(i, j, v)| Pseudo { pt: v, row: i as i64, col: j as i64 }).collect();
    if ps.len() < n {
        return Err(Error::InsufficientConstituents { needed: n, found: ps.len() });
    }
    let len = ps.len();
    let mut active = vec![true; len];
    let mut nn = vec![usize::MAX; len];
    let mut nnd = vec![f64::INFINITY; len];

    let nearest = |ps: &[Pseudo], active: &[bool], i: usize| {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in (0..ps.len()).filter(|&j| j != i && active[j]) {
            let d = kt_distance(&ps[i], &ps[j]);
            if d < best.0 {
                best = (d, j);
            }
        }
        best
    };
    for i in 0..len {
        (nnd[i], nn[i]) = nearest(&ps, &active, i);
    }

    let mut remaining = len;
    while remaining > n {
        let mut a = usize::MAX;
        for i in (0..len).filter(|&i| active[i]) {
            if a == usize::MAX || nnd[i] < nnd[a] {
                a = i;
            }
        }
        let b = nn[a];
        let (lo, hi) = (a.min(b), a.max(b));
        let winner = if ps[hi].pt > ps[lo].pt { ps[hi] } else { ps[lo] };
        ps[lo] = Pseudo { pt: ps[lo].pt + ps[hi].pt, ..winner };
        active[hi] = false;
        remaining -= 1;

        for k in (0..len).filter(|&k| active[k]) {
            if k == lo || nn[k] == lo || nn[k] == hi {
                (nnd[k], nn[k]) = nearest(&ps, &active, k);
            } else {
                let d = kt_distance(&ps[k], &ps[lo]);
                if d < nnd[k] || (d == nnd[k] && lo < nn[k]) {
                    (nnd[k], nn[k]) = (d, lo);
                }
            }
        }
    }
    let axes = (0..len)
        .filter(|&i| active[i])
        .map(|i| (center_coord(ps[i].row as usize), center_coord(ps[i].col as usize)))
        .collect();
    Ok(AxisSet { axes })
}

/// n-subjettiness given explicit axes, normalized by `sum(I) * R`.
pub fn tau_with_axes(image: &JetImage, axes: &[(f64, f64)]) -> Result<f64> {
    let total = image.sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedObservable("n-subjettiness of an empty image".into()));
    }
    let mut acc = 0.0;
    for (i, j, v) in image.nonzero() {
        let (eta, phi) = (center_coord(i), center_coord(j));
        let dr = axes.iter().map(|&(ea, pa)| (eta - ea).hypot(phi - pa)).fold(f64::INFINITY, f64::min);
        acc += v * dr;
    }
    Ok(acc / (total * JET_RADIUS))
}

pub fn tau_n(image: &JetImage, n: usize) -> Result<f64> {
    if !(image.sum() > 0.0) {
        return Err(Error::UndefinedObservable("n-subjettiness of an empty image".into()));
    }
    tau_with_axes(image, &find_axes(image, n)?.axes)
}

pub fn tau21(image: &JetImage) -> Result<f64> {
    let t1 = tau_n(image, 1)?;
    if !(t1 > 0.0) {
        return Err(Error::UndefinedObservable("tau21 with tau1 = 0".into()));
    }
    Ok(tau_n(image, 2)? / t1)
}

pub fn observables(image: &JetImage) -> ObservableSet {
    let (mass, mass_clamped) = image_mass_checked(image);
    let tau1 = tau_n(image, 1).ok();
    let tau2 = tau_n(image, 2).ok();
    let tau21 = match (tau1, tau2) {
        (Some(t1), Some(t2)) if t1 > 0.0 => Some(t2 / t1),
        _ => None,
    };
    ObservableSet { pt: image_pt(image), mass, tau1, tau2, tau21, mass_clamped }
}

/// Counters for values the formulas could not produce cleanly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub clamped_mass: usize,
    pub undefined_tau21: usize,
}

pub fn observables_batch(images: &[JetImage]) -> (Vec<ObservableSet>, Diagnostics) {
    let mut diag = Diagnostics::default();
    let out = images
        .iter()
        .map(|img| {
            let o = observables(img);
            diag.clamped_mass += o.mass_clamped as usize;
            diag.undefined_tau21 += o.tau21.is_none() as usize;
            o
        })
        .collect();
    (out, diag)
}

/// `bins + 1` logarithmically spaced edges from `lo` to `hi`.
pub fn log_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || bins == 0 {
        return Err(Error::Input(format!("log edges need 0 < lo < hi and bins > 0 (lo={lo}, hi={hi})")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut edges: Vec<f64> = (0..=bins).map(|k| (a + (b - a) * k as f64 / bins as f64).exp()).collect();
    edges[0] = lo;
    edges[bins] = hi;
    Ok(edges)
}

/// Edges from `floor` up to the largest pixel in the dataset (or `10 * floor`
/// when nothing exceeds the floor).
pub fn intensity_edges(images: &[JetImage], floor: f64, bins: usize) -> Result<Vec<f64>> {
    let max = images.iter().flat_map(|i| i.pixels().iter().copied()).fold(0.0, f64::max);
    log_edges(floor, if max > floor { max } else { 10.0 * floor }, bins)
}

/// Pixel intensity counts over all images; values in `[edges[0], edges[last]]`
/// are counted, the last bin being closed.
pub fn pixel_intensity_histogram(images: &[JetImage], edges: &[f64]) -> Vec<u64> {
    let bins = edges.len().saturating_sub(1);
    let mut counts = vec![0u64; bins];
    if bins == 0 {
        return counts;
    }
    let (lo, hi) = (edges[0], edges[bins]);
    for v in images.iter().flat_map(|i| i.pixels().iter().copied()) {
        if v < lo || v > hi {
            continue;
        }
        let k = edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1);
        counts[k] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{Label, Origin, IMAGE_SIZE};

    fn img(px: &[(usize, usize, f64)]) -> JetImage {
        let mut v = vec![0.0; IMAGE_SIZE * IMAGE_SIZE];
        for &(i, j, x) in px {
            v[i * IMAGE_SIZE + j] = x;
        }
        JetImage::from_pixels(v, Label::Signal, Origin::Real).unwrap()
    }

    #[test]
    fn single_pixel_at_origin() {
        let im = img(&[(12, 12, 100.0)]);
        assert_eq!(image_pt(&im), 100.0);
        assert_eq!(image_mass(&im), 0.0);
        assert_eq!(tau_n(&im, 1).unwrap(), 0.0);
        assert_eq!(find_axes(&im, 1).unwrap().axes, vec![(0.0, 0.0)]);
    }

    #[test]
    fn empty_image() {
        let im = JetImage::zeros(Label::Signal, Origin::Real);
        assert_eq!(image_pt(&im), 0.0);
        assert!(matches!(tau_n(&im, 1), Err(Error::UndefinedObservable(_))));
        assert!(matches!(find_axes(&im, 1), Err(Error::InsufficientConstituents { .. })));
    }

    #[test]
    fn two_prongs_give_zero_tau2() {
        let im = img(&[(12, 8, 50.0), (12, 16, 50.0)]);
        assert_eq!(tau_n(&im, 2).unwrap(), 0.0);
        assert_eq!(tau21(&im).unwrap(), 0.0);
    }

    #[test]
    fn histogram_single_pixel() {
        let im = img(&[(3, 4, 10.0)]);
        let edges = log_edges(1e-3, 100.0, 10).unwrap();
        let h = pixel_intensity_histogram(&[im], &edges);
        assert_eq!(h.iter().sum::<u64>(), 1);
        let k = h.iter().position(|&c| c == 1).unwrap();
        assert!(edges[k] <= 10.0 && 10.0 < edges[k + 1]);
    }
}
