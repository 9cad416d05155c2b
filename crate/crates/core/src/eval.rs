//! Generative-model assessment: (m, tau21) PMFs, exact EMD, the minimax
//! score, and the image-level analysis tools.

use std::fmt::Write as _;
use std::path::Path;

use crate::binio;
use crate::error::{Error, Result};
use crate::jet::{JetImage, Label, Origin, NUM_PIXELS};
use crate::nn::{Border, Tape};
use crate::observables::{image_mass, tau21};
use crate::tensor::Tensor;

/// Default PMF resolution per axis.
pub const GRID: usize = 40;

/// Rectangular `(m, tau21)` region covered by a PMF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub m_min: f64,
    pub m_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Window {
    /// Smallest window containing every sample.
    pub fn covering<'a>(samples: impl IntoIterator<Item = &'a (f64, f64)>) -> Result<Self> {
        let mut w = Window { m_min: f64::INFINITY, m_max: f64::NEG_INFINITY, t_min: f64::INFINITY, t_max: f64::NEG_INFINITY };
        for &(m, t) in samples {
            w.m_min = w.m_min.min(m);
            w.m_max = w.m_max.max(m);
            w.t_min = w.t_min.min(t);
            w.t_max = w.t_max.max(t);
        }
        if !w.m_min.is_finite() {
            return Err(Error::Empty("no samples to span a window".into()));
        }
        Ok(w)
    }

    pub fn contains(&self, (m, t): (f64, f64)) -> bool {
        (self.m_min..=self.m_max).contains(&m) && (self.t_min..=self.t_max).contains(&t)
    }
}

fn bin(x: f64, lo: f64, hi: f64, n: usize) -> usize {
    if hi > lo {
        (((x - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
    } else {
        0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmfGrid {
    /// Bins along mass (rows).
    pub nm: usize,
    /// Bins along tau21 (columns).
    pub nt: usize,
    pub bins: Vec<f64>,
    pub window: Window,
    /// Samples outside the window that were clipped into edge bins.
    pub clipped: usize,
}

impl PmfGrid {
    /// Wraps raw masses, normalizing them to unit total.
    pub fn from_masses(nm: usize, nt: usize, masses: Vec<f64>, window: Window) -> Result<Self> {
        if masses.len() != nm * nt || nm == 0 || nt == 0 {
            return Err(Error::Dimension(format!("pmf needs {nm}x{nt} bins, got {}", masses.len())));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::Input("pmf masses must be finite and non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Empty("pmf has no mass".into()));
        }
        Ok(Self { nm, nt, bins: masses.into_iter().map(|m| m / total).collect(), window, clipped: 0 })
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.bins[i * self.nt + j]
    }

    /// Non-empty bins as `(row, col, mass)`.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        self.bins
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(k, &v)| (k / self.nt, k % self.nt, v))
            .collect()
    }

    /// Row `i` (mass index) and column of the heaviest bin.
    pub fn mode(&self) -> (usize, usize) {
        let k = (0..self.bins.len()).fold(0, |b, k| if self.bins[k] > self.bins[b] { k } else { b });
        (k / self.nt, k % self.nt)
    }
}

/// Equispaced histogram of `(m, tau21)` samples over `window`. Samples outside
/// the window land in the nearest edge bin and are counted in `clipped`.
pub fn build_pmf(samples: &[(f64, f64)], window: Window, nm: usize, nt: usize) -> Result<PmfGrid> {
    if nm == 0 || nt == 0 {
        return Err(Error::Dimension("pmf grid needs at least one bin per axis".into()));
    }
    if samples.is_empty() {
        return Err(Error::Empty("pmf of an empty sample".into()));
    }
    let mut bins = vec![0.0; nm * nt];
    let mut clipped = 0usize;
    for &(m, t) in samples {
        if !m.is_finite() || !t.is_finite() {
            return Err(Error::Input(format!("non-finite sample ({m}, {t})")));
        }
        if !window.contains((m, t)) {
            clipped += 1;
        }
        let i = bin(m, window.m_min, window.m_max, nm);
        let j = bin(t, window.t_min, window.t_max, nt);
        bins[i * nt + j] += 1.0;
    }
    let n = samples.len() as f64;
    bins.iter_mut().for_each(|b| *b /= n);
    Ok(PmfGrid { nm, nt, bins, window, clipped })
}

/// Exact transport cost between two distributions given as weighted points,
/// with Euclidean ground distance between the points. Both must carry the
/// same total mass (within 1e-9).
pub fn transport_cost(supply: &[((f64, f64), f64)], demand: &[((f64, f64), f64)]) -> Result<f64> {
    let ts: f64 = supply.iter().map(|s| s.1).sum();
    let td: f64 = demand.iter().map(|d| d.1).sum();
    if (ts - td).abs() > 1e-9 * ts.max(td).max(1.0) {
        return Err(Error::Input(format!("mass mismatch: {ts} vs {td}")));
    }
    if supply.iter().chain(demand).any(|p| !(p.1 >= 0.0)) {
        return Err(Error::Input("transport masses must be non-negative".into()));
    }
    let s: Vec<_> = supply.iter().filter(|p| p.1 > 0.0).collect();
    let d: Vec<_> = demand.iter().filter(|p| p.1 > 0.0).collect();
    if s.is_empty() || d.is_empty() {
        return if s.is_empty() && d.is_empty() { Ok(0.0) } else { Err(Error::Empty("one side has no mass".into())) };
    }
    let cost: Vec<f64> = s
        .iter()
        .flat_map(|a| d.iter().map(move |b| (a.0 .0 - b.0 .0).hypot(a.0 .1 - b.0 .1)))
        .collect();
    let sv: Vec<f64> = s.iter().map(|p| p.1).collect();
    let dv: Vec<f64> = d.iter().map(|p| p.1).collect();
    TransportSimplex::new(&sv, &dv, cost).solve()
}

/// Earth mover's distance with the bin-index Euclidean ground metric.
pub fn emd(p: &PmfGrid, q: &PmfGrid) -> Result<f64> {
    if (p.nm, p.nt) != (q.nm, q.nt) {
        return Err(Error::Dimension(format!("pmf grids {}x{} and {}x{} differ", p.nm, p.nt, q.nm, q.nt)));
    }
    if p.window != q.window {
        return Err(Error::Input("pmfs were built on different windows".into()));
    }
    for g in [p, q] {
        if (g.total() - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("pmf total {} is not normalized", g.total())));
        }
    }
    let pts = |g: &PmfGrid| g.support().into_iter().map(|(i, j, v)| ((i as f64, j as f64), v)).collect::<Vec<_>>();
    transport_cost(&pts(p), &pts(q))
}

/// Transportation simplex over a spanning-tree basis of `m + n - 1` cells.
struct TransportSimplex {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Basic cells touching each node; rows are `0..m`, columns `m..m+n`.
    adj: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl TransportSimplex {
    fn new(supply: &[f64], demand: &[f64], cost: Vec<f64>) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut t = Self {
            m,
            n,
            cost,
            flow: vec![0.0; m * n],
            basic: vec![false; m * n],
            adj: vec![Vec::new(); m + n],
            u: vec![0.0; m],
            v: vec![0.0; n],
        };
        // northwest corner start: exactly m + n - 1 cells forming a tree
        let (mut s, mut d) = (supply.to_vec(), demand.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let x = s[i].min(d[j]);
            t.add_basic(i, j, x);
            s[i] -= x;
            d[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && s[i] <= d[j]) {
                d[j] += s[i].max(0.0);
                s[i] = 0.0;
                i += 1;
            } else {
                s[i] += d[j].max(0.0);
                d[j] = 0.0;
                j += 1;
            }
        }
        t
    }

    fn add_basic(&mut self, i: usize, j: usize, x: f64) {
        let k = i * self.n + j;
        self.flow[k] = x;
        self.basic[k] = true;
        self.adj[i].push(k);
        self.adj[self.m + j].push(k);
    }

    fn remove_basic(&mut self, k: usize) {
        let (i, j) = (k / self.n, k % self.n);
        self.basic[k] = false;
        self.flow[k] = 0.0;
        self.adj[i].retain(|&c| c != k);
        self.adj[self.m + j].retain(|&c| c != k);
    }

    fn other_end(&self, node: usize, k: usize) -> usize {
        if node < self.m {
            self.m + k % self.n
        } else {
            k / self.n
        }
    }

    /// Potentials with `u[0] = 0` and `u_i + v_j = c_ij` on basic cells.
    fn potentials(&mut self) {
        let mut seen = vec![false; self.m + self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for idx in 0..self.adj[node].len() {
                let k = self.adj[node][idx];
                let next = self.other_end(node, k);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                if next < self.m {
                    self.u[next] = self.cost[k] - self.v[k % self.n];
                } else {
                    self.v[next - self.m] = self.cost[k] - self.u[k / self.n];
                }
                stack.push(next);
            }
        }
    }

    /// Basic cells on the tree path from `from` to `to`, in order.
    fn tree_path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut via = vec![usize::MAX; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(node) = stack.pop() {
            if node == to {
                break;
            }
            for &k in &self.adj[node] {
                let next = self.other_end(node, k);
                if !seen[next] {
                    seen[next] = true;
                    via[next] = k;
                    stack.push(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = to;
        while node != from {
            let k = via[node];
            path.push(k);
            node = self.other_end(node, k);
        }
        path.reverse();
        path
    }

    fn solve(mut self) -> Result<f64> {
        let limit = 50 * (self.m + self.n) * (self.m + self.n) + 1000;
        for _ in 0..limit {
            self.potentials();
            let mut best = (-1e-12, usize::MAX);
            for i in 0..self.m {
                let row = &self.cost[i * self.n..(i + 1) * self.n];
                let ui = self.u[i];
                for (j, &c) in row.iter().enumerate() {
                    let r = c - ui - self.v[j];
                    if r < best.0 && !self.basic[i * self.n + j] {
                        best = (r, i * self.n + j);
                    }
                }
            }
            if best.1 == usize::MAX {
                return Ok(self.flow.iter().zip(&self.cost).map(|(f, c)| f * c).sum());
            }
            let enter = best.1;
            let (ei, ej) = (enter / self.n, enter % self.n);
            // cycle: enter (+), then the tree path from column ej back to row ei alternates -, +, ...
            let path = self.tree_path(self.m + ej, ei);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for &k in path.iter().step_by(2) {
                if self.flow[k] < theta {
                    theta = self.flow[k];
                    leave = k;
                }
            }
            for (step, &k) in path.iter().enumerate() {
                if step % 2 == 0 {
                    self.flow[k] = (self.flow[k] - theta).max(0.0);
                } else {
                    self.flow[k] += theta;
                }
            }
            self.remove_basic(leave);
            self.add_basic(ei, ej, theta);
        }
        Err(Error::State("transport simplex did not converge".into()))
    }
}

/// `(m, tau21)` per image; images with undefined tau21 are skipped and counted.
pub fn mass_tau_points(images: &[&JetImage]) -> (Vec<(f64, f64)>, usize) {
    let mut pts = Vec::with_capacity(images.len());
    let mut skipped = 0;
    for img in images {
        match tau21(img) {
            Ok(t) => pts.push((image_mass(img), t)),
            Err(_) => skipped += 1,
        }
    }
    (pts, skipped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassScore {
    pub label: Label,
    pub emd: f64,
    pub real_count: usize,
    pub generated_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub per_class: Vec<ClassScore>,
    pub sigma: f64,
    pub window: Window,
    /// Images dropped because tau21 was undefined.
    pub skipped: usize,
    /// Samples clipped into edge bins (only possible with a fixed window).
    pub clipped: usize,
}

impl ScoreReport {
    pub fn emd_for(&self, label: Label) -> Option<f64> {
        self.per_class.iter().find(|c| c.label == label).map(|c| c.emd)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("{\n");
        let w = &self.window;
        let _ = writeln!(s, "  \"sigma\": {},", self.sigma);
        let _ = writeln!(
            s,
            "  \"window\": {{\"m_min\": {}, \"m_max\": {}, \"tau21_min\": {}, \"tau21_max\": {}}},",
            w.m_min, w.m_max, w.t_min, w.t_max
        );
        let _ = writeln!(s, "  \"skipped_undefined_tau21\": {},", self.skipped);
        let _ = writeln!(s, "  \"clipped\": {},", self.clipped);
        s.push_str("  \"classes\": [\n");
        for (k, c) in self.per_class.iter().enumerate() {
            let comma = if k + 1 < self.per_class.len() { "," } else { "" };
            let _ = writeln!(
                s,
                "    {{\"class\": \"{}\", \"emd\": {}, \"real\": {}, \"generated\": {}}}{comma}",
                c.label.name(),
                c.emd,
                c.real_count,
                c.generated_count
            );
        }
        s.push_str("  ]\n}\n");
        s
    }
}

/// `(m, tau21)` points of one class, with the count of skipped images.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPoints {
    pub label: Label,
    pub points: Vec<(f64, f64)>,
    pub skipped: usize,
}

/// Points of every class; fails when a class is absent or has no defined tau21.
pub fn class_points(images: &[JetImage], what: &str) -> Result<Vec<ClassPoints>> {
    Label::ALL
        .into_iter()
        .map(|label| {
            let sel: Vec<&JetImage> = images.iter().filter(|i| i.label == label).collect();
            if sel.is_empty() {
                return Err(Error::Config(format!("class {} missing from the {what} set", label.name())));
            }
            let (points, skipped) = mass_tau_points(&sel);
            if points.is_empty() {
                return Err(Error::Empty(format!("{what} class {} has no image with defined tau21", label.name())));
            }
            Ok(ClassPoints { label, points, skipped })
        })
        .collect()
}

/// Worst-case per-class EMD between real and generated `(m, tau21)` PMFs.
/// The window is the pooled range of both datasets unless one is given.
pub fn minimax_score(real: &[JetImage], generated: &[JetImage], window: Option<Window>) -> Result<ScoreReport> {
    score_points(&class_points(real, "real")?, &class_points(generated, "generated")?, window)
}

/// [`minimax_score`] on precomputed points.
pub fn score_points(real: &[ClassPoints], generated: &[ClassPoints], window: Option<Window>) -> Result<ScoreReport> {
    let window = match window {
        Some(w) => w,
        None => Window::covering(real.iter().chain(generated).flat_map(|c| c.points.iter()))?,
    };
    let mut per_class = Vec::new();
    let (mut clipped, mut skipped) = (0, 0);
    for label in Label::ALL {
        let find = |set: &[ClassPoints]| {
            set.iter()
                .find(|c| c.label == label)
                .cloned()
                .ok_or_else(|| Error::Config(format!("class {} missing", label.name())))
        };
        let (r, g) = (find(real)?, find(generated)?);
        skipped += r.skipped + g.skipped;
        let p = build_pmf(&r.points, window, GRID, GRID)?;
        let q = build_pmf(&g.points, window, GRID, GRID)?;
        clipped += p.clipped + q.clipped;
        per_class.push(ClassScore { label, emd: emd(&p, &q)?, real_count: r.points.len(), generated_count: g.points.len() });
    }
    let sigma = per_class.iter().map(|c| c.emd).fold(0.0, f64::max);
    Ok(ScoreReport { per_class, sigma, window, skipped, clipped })
}

pub fn select(images: &[JetImage], label: Option<Label>, origin: Option<Origin>) -> Vec<&JetImage> {
    images
        .iter()
        .filter(|i| label.is_none_or(|l| i.label == l) && origin.is_none_or(|o| i.origin == o))
        .collect()
}

/// Images whose score lies between the `lo` and `hi` quantiles (inclusive).
pub fn quantile_subset<'a>(images: &[&'a JetImage], scores: &[f64], lo: f64, hi: f64) -> Result<Vec<&'a JetImage>> {
    if images.len() != scores.len() {
        return Err(Error::Dimension("one score per image required".into()));
    }
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |q: f64| sorted[((q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).round()) as usize];
    let (a, b) = (at(lo), at(hi));
    Ok(images.iter().zip(scores).filter(|(_, &s)| s >= a && s <= b).map(|(i, _)| *i).collect())
}

pub fn average_image(images: &[&JetImage]) -> Result<Vec<f64>> {
    if images.is_empty() {
        return Err(Error::Empty("average of an empty image set".into()));
    }
    let mut acc = vec![0.0; NUM_PIXELS];
    for img in images {
        acc.iter_mut().zip(img.pixels()).for_each(|(a, p)| *a += p);
    }
    let n = images.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Indices of the `k` highest scores; ties keep input order.
pub fn top_k_by(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::Input(format!("k = {k} exceeds {} images", scores.len())));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(k);
    Ok(idx)
}

/// Index of the generated image closest in pixel space and its distance.
pub fn nearest_generated_neighbor(real: &JetImage, generated: &[JetImage]) -> Result<(usize, f64)> {
    let mut best = (usize::MAX, f64::INFINITY);
    for (k, g) in generated.iter().enumerate() {
        let d2: f64 = real.pixels().iter().zip(g.pixels()).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 {
            best = (k, d2);
        }
    }
    if best.0 == usize::MAX {
        return Err(Error::Empty("no generated images to search".into()));
    }
    Ok((best.0, best.1.sqrt()))
}

/// Row-normalized 2x2 matrix, rows = truth (background, signal), columns =
/// prediction. Rows with no samples stay zero.
pub fn confusion_matrix(p_signal: &[f64], truth: &[Label], threshold: f64) -> Result<[[f64; 2]; 2]> {
    if p_signal.len() != truth.len() {
        return Err(Error::Dimension("one prediction per label required".into()));
    }
    if p_signal.is_empty() {
        return Err(Error::Empty("confusion matrix of nothing".into()));
    }
    let mut m = [[0.0; 2]; 2];
    for (&p, &t) in p_signal.iter().zip(truth) {
        let pred = if p > threshold { Label::Signal } else { Label::Background };
        m[t.index()][pred.index()] += 1.0;
    }
    for row in &mut m {
        let s = row[0] + row[1];
        if s > 0.0 {
            row[0] /= s;
            row[1] /= s;
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMap {
    /// `[value_bin][response_bin]`, each non-empty value column summing to 1.
    pub cells: Vec<Vec<f64>>,
    pub empty_columns: usize,
}

/// 2D histogram of `(value, response)` normalized within each value bin.
pub fn conditional_response_map(values: &[f64], responses: &[f64], value_edges: &[f64], response_edges: &[f64]) -> Result<ResponseMap> {
    if values.len() != responses.len() {
        return Err(Error::Dimension("one response per value required".into()));
    }
    if values.is_empty() {
        return Err(Error::Empty("response map of nothing".into()));
    }
    if value_edges.len() < 2 || response_edges.len() < 2 {
        return Err(Error::Input("need at least one bin per axis".into()));
    }
    let (nv, nr) = (value_edges.len() - 1, response_edges.len() - 1);
    let find = |edges: &[f64], x: f64| -> Option<usize> {
        let n = edges.len() - 1;
        if x < edges[0] || x > edges[n] {
            return None;
        }
        Some(edges.partition_point(|&e| e <= x).saturating_sub(1).min(n - 1))
    };
    let mut cells = vec![vec![0.0; nr]; nv];
    for (&v, &r) in values.iter().zip(responses) {
        if let (Some(a), Some(b)) = (find(value_edges, v), find(response_edges, r)) {
            cells[a][b] += 1.0;
        }
    }
    let mut empty_columns = 0;
    for col in &mut cells {
        let s: f64 = col.iter().sum();
        if s > 0.0 {
            col.iter_mut().for_each(|c| *c /= s);
        } else {
            empty_columns += 1;
        }
    }
    Ok(ResponseMap { cells, empty_columns })
}

/// Pearson correlation of each pixel with the outputs. Pixels (or outputs)
/// without variance get 0 and are counted.
pub fn pixel_output_correlation(images: &[&JetImage], outputs: &[f64]) -> Result<(Vec<f64>, usize)> {
    if images.len() != outputs.len() {
        return Err(Error::Dimension("one output per image required".into()));
    }
    if images.len() < 2 {
        return Err(Error::Input("correlation needs at least two images".into()));
    }
    let n = images.len() as f64;
    let mean_o = outputs.iter().sum::<f64>() / n;
    let var_o: f64 = outputs.iter().map(|o| (o - mean_o).powi(2)).sum();
    let mean = average_image(images)?;
    let mut cov = vec![0.0; NUM_PIXELS];
    let mut var = vec![0.0; NUM_PIXELS];
    for (img, &o) in images.iter().zip(outputs) {
        let d_o = o - mean_o;
        for (k, &p) in img.pixels().iter().enumerate() {
            let d = p - mean[k];
            cov[k] += d * d_o;
            var[k] += d * d;
        }
    }
    let mut degenerate = 0;
    let corr = (0..NUM_PIXELS)
        .map(|k| {
            if var[k] > 0.0 && var_o > 0.0 {
                (cov[k] / (var[k] * var_o).sqrt()).clamp(-1.0, 1.0)
            } else {
                degenerate += 1;
                0.0
            }
        })
        .collect();
    Ok((corr, degenerate))
}

/// First-layer filters `[F, F, 1, N]` as N separate `F*F` grids, plus their
/// same-border responses to `probe` as N 25x25 maps.
pub fn conv_filter_visualization(weights: &Tensor, probe: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let s = weights.shape();
    if s.len() != 4 || s[2] != 1 || s[0] != s[1] {
        return Err(Error::Dimension(format!("expected [F, F, 1, N] filters, got {s:?}")));
    }
    if probe.len() != NUM_PIXELS {
        return Err(Error::Dimension(format!("probe needs {NUM_PIXELS} pixels")));
    }
    let (f, n) = (s[0], s[3]);
    let filters = (0..n).map(|c| (0..f * f).map(|k| weights.data()[k * n + c]).collect()).collect();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[1, 25, 25, 1], probe.to_vec())?);
    let w = tape.constant(weights.clone());
    let y = tape.conv2d(x, w, None, Border::Same, 1)?;
    let y = tape.value(y);
    let maps = (0..n).map(|c| (0..NUM_PIXELS).map(|k| y.data()[k * n + c]).collect()).collect();
    Ok((filters, maps))
}

/// Writes a 25x25 grid as a binary greymap scaled to its own range.
pub fn write_pgm(path: &Path, grid: &[f64], side: usize) -> Result<()> {
    if grid.len() != side * side {
        return Err(Error::Dimension("pgm grid must be square".into()));
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    binio::atomic_write(path, |w| {
        use std::io::Write;
        write!(w, "P5\n{side} {side}\n255\n")?;
        let bytes: Vec<u8> = grid.iter().map(|v| ((v - lo) / span * 255.0).round() as u8).collect();
        w.write_all(&bytes)
    })
}
