//! Rollout and dataset analysis: pair factors, Spearman correlation,
//! success tables, coverage curves and turn histograms, plus CSV/PNG output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Difficulty;
use crate::render::{visible_vertices, CameraIntrinsics, RenderConfig, RenderedView};
use crate::scene::Scene;
use crate::se3::{position_distance, rotation_distance, unified_distance, Pose, StepSizes};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples, got {0}")]
    TooFew(usize),
    #[error("constant input; rank correlation undefined")]
    Constant,
    #[error("unknown pair or instance id {0}")]
    UnknownId(String),
    #[error("unknown scene {0}")]
    UnknownScene(String),
    #[error("png: {0}")]
    Png(String),
}

const DEGENERATE_DISPLACEMENT_M: f64 = 1e-9;

/// Twelve per-pair factors. Directional factors are `None` for zero
/// displacement; overlap factors are `None` without visibility sets or when
/// a set is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorVector {
    pub pos_dist: f64,
    pub rot_dist: f64,
    pub unified_dist: f64,
    pub horiz_dist: f64,
    pub height_diff: f64,
    pub vis_init_norm: Option<f64>,
    pub vis_target_norm: Option<f64>,
    pub vis_iou: Option<f64>,
    pub forward_alignment: Option<f64>,
    pub target_bearing: Option<f64>,
    pub target_elevation: Option<f64>,
    pub orientation_agreement: f64,
}

pub const FACTOR_NAMES: [&str; 12] = [
    "pos_dist",
    "rot_dist",
    "unified_dist",
    "horiz_dist",
    "height_diff",
    "vis_init_norm",
    "vis_target_norm",
    "vis_iou",
    "forward_alignment",
    "target_bearing",
    "target_elevation",
    "orientation_agreement",
];

impl FactorVector {
    pub fn values(&self) -> [Option<f64>; 12] {
        [
            Some(self.pos_dist),
            Some(self.rot_dist),
            Some(self.unified_dist),
            Some(self.horiz_dist),
            Some(self.height_diff),
            self.vis_init_norm,
            self.vis_target_norm,
            self.vis_iou,
            self.forward_alignment,
            self.target_bearing,
            self.target_elevation,
            Some(self.orientation_agreement),
        ]
    }
}

/// Forward direction used by the factor analysis: the negated third column
/// of the camera-to-world rotation.
pub fn analysis_forward(p: &Pose) -> Vector3<f64> {
    -p.axis(2)
}

/// Size of the intersection of two sorted index lists.
pub fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

pub fn compute_factors(
    init: &Pose,
    target: &Pose,
    steps: &StepSizes,
    visibility: Option<(&[usize], &[usize])>,
) -> FactorVector {
    let pos_dist = position_distance(init, target);
    let rot_dist = rotation_distance(init, target);
    let delta = target.position() - init.position();
    let horiz = delta.xy().norm();
    let f_init = analysis_forward(init);
    let f_tgt = analysis_forward(target);
    let (forward_alignment, target_bearing, target_elevation) = if pos_dist > DEGENERATE_DISPLACEMENT_M {
        let d = delta / pos_dist;
        let a = f_init.dot(&d).clamp(-1.0, 1.0);
        (Some(a), Some(a.acos().to_degrees()), Some(delta.z.atan2(horiz).to_degrees()))
    } else {
        (None, None, None)
    };
    let (vi, vt, iou) = match visibility {
        Some((a, b)) => {
            let inter = sorted_intersection(a, b) as f64;
            let union = (a.len() + b.len()) as f64 - inter;
            let frac = |n: usize| (n > 0).then(|| inter / n as f64);
            (frac(a.len()), frac(b.len()), (union > 0.0).then(|| inter / union))
        }
        None => (None, None, None),
    };
    FactorVector {
        pos_dist,
        rot_dist,
        unified_dist: unified_distance(pos_dist, rot_dist, steps),
        horiz_dist: horiz,
        height_diff: delta.z.abs(),
        vis_init_norm: vi,
        vis_target_norm: vt,
        vis_iou: iou,
        forward_alignment,
        target_bearing,
        target_elevation,
        orientation_agreement: f_init.dot(&f_tgt).clamp(-1.0, 1.0),
    }
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooFew(xs.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys)).ok_or(AnalysisError::Constant)
}

/// Spearman ρ of each factor against an outcome, skipping samples where
/// the factor is undefined. `None` where undefined.
pub fn factor_correlations(factors: &[FactorVector], outcome: &[f64]) -> Vec<(&'static str, Option<f64>, usize)> {
    (0..12)
        .map(|k| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = factors
                .iter()
                .zip(outcome)
                .filter_map(|(f, y)| f.values()[k].map(|x| (x, *y)))
                .unzip();
            (FACTOR_NAMES[k], spearman(&xs, &ys).ok(), xs.len())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInfo {
    pub difficulty: Difficulty,
    pub d_pos: f64,
    pub d_rot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: usize,
    pub count: usize,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.successes as f64 / self.count as f64)
    }

    fn add(&mut self, ok: bool) {
        self.count += 1;
        self.successes += usize::from(ok);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRate {
    pub lo: f64,
    /// `f64::INFINITY` for the open last bin (serialized as null).
    pub hi: f64,
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub rotation_deg: Vec<f64>,
    pub position_m: Vec<f64>,
}

impl Default for BinEdges {
    fn default() -> Self {
        Self {
            rotation_deg: vec![30.0, 60.0, 90.0],
            position_m: vec![0.5, 1.0, 2.0],
        }
    }
}

/// Bins `[0, e0), [e0, e1), …, [e_last, ∞)`.
fn bin_index(edges: &[f64], v: f64) -> usize {
    edges.iter().take_while(|e| v >= **e).count()
}

fn empty_bins(edges: &[f64]) -> Vec<BinRate> {
    let mut lo = 0.0;
    let mut out = Vec::with_capacity(edges.len() + 1);
    for &e in edges.iter().chain(std::iter::once(&f64::INFINITY)) {
        out.push(BinRate {
            lo,
            hi: e,
            rate: Rate { successes: 0, count: 0 },
        });
        lo = e;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessTable {
    pub short: Rate,
    pub long: Rate,
    pub all: Rate,
    pub by_rotation: Vec<BinRate>,
    pub by_position: Vec<BinRate>,
}

/// Success rates by difficulty and distance bin for `(pair id, success)`.
pub fn success_table(
    outcomes: &[(String, bool)],
    pairs: &BTreeMap<String, PairInfo>,
    edges: &BinEdges,
) -> Result<SuccessTable, AnalysisError> {
    let zero = Rate { successes: 0, count: 0 };
    let mut t = SuccessTable {
        short: zero,
        long: zero,
        all: zero,
        by_rotation: empty_bins(&edges.rotation_deg),
        by_position: empty_bins(&edges.position_m),
    };
    for (id, ok) in outcomes {
        let p = pairs.get(id).ok_or_else(|| AnalysisError::UnknownId(id.clone()))?;
        match p.difficulty {
            Difficulty::Short => t.short.add(*ok),
            Difficulty::Long => t.long.add(*ok),
        }
        t.all.add(*ok);
        t.by_rotation[bin_index(&edges.rotation_deg, p.d_rot)].rate.add(*ok);
        t.by_position[bin_index(&edges.position_m, p.d_pos)].rate.add(*ok);
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Per-trajectory cumulative ratios, turn by turn.
pub fn cumulative_ratios(sets: &[Vec<usize>], reference: Option<&[usize]>, total: usize) -> Vec<f64> {
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    sets.iter()
        .map(|s| {
            seen.extend(s.iter().copied());
            match reference {
                Some(r) => {
                    if r.is_empty() {
                        0.0
                    } else {
                        r.iter().filter(|v| seen.contains(v)).count() as f64 / r.len() as f64
                    }
                }
                None => seen.len() as f64 / total.max(1) as f64,
            }
        })
        .collect()
}

/// Aggregates per-trajectory curves; turns reached by fewer than 1% of the
/// maximum per-turn trajectory count are dropped.
pub fn aggregate_curves(curves: &[Vec<f64>]) -> CoverageCurve {
    let max_len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let counts: Vec<usize> = (0..max_len)
        .map(|t| curves.iter().filter(|c| c.len() > t).count())
        .collect();
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let keep = counts
        .iter()
        .take_while(|&&c| (c as f64) >= 0.01 * max_count as f64)
        .count();
    let mut out = CoverageCurve {
        mean: Vec::with_capacity(keep),
        std: Vec::with_capacity(keep),
        counts: counts[..keep].to_vec(),
    };
    for t in 0..keep {
        let vals: Vec<f64> = curves.iter().filter_map(|c| c.get(t).copied()).collect();
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        out.mean.push(m);
        out.std.push(var.sqrt());
    }
    out
}

/// A replayed episode: the pose after each turn (index 0 = initial pose).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    pub scene_id: String,
    pub poses: Vec<Pose>,
    pub target: Pose,
}

/// Scene-coverage and target-intersection curves over tracks.
pub fn coverage_curves(
    tracks: &[PoseTrack],
    scenes: &BTreeMap<String, Scene>,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> Result<(CoverageCurve, CoverageCurve), AnalysisError> {
    let mut scene_curves = Vec::with_capacity(tracks.len());
    let mut target_curves = Vec::with_capacity(tracks.len());
    for t in tracks {
        let scene = scenes
            .get(&t.scene_id)
            .ok_or_else(|| AnalysisError::UnknownScene(t.scene_id.clone()))?;
        let sets: Vec<Vec<usize>> = t
            .poses
            .iter()
            .map(|p| visible_vertices(scene, p, intr, cfg))
            .collect();
        let tgt = visible_vertices(scene, &t.target, intr, cfg);
        scene_curves.push(cumulative_ratios(&sets, None, scene.len()));
        target_curves.push(cumulative_ratios(&sets, Some(&tgt), scene.len()));
    }
    Ok((aggregate_curves(&scene_curves), aggregate_curves(&target_curves)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnBucket {
    pub count: usize,
    pub successes: usize,
    pub rate: f64,
}

/// Histogram over turns used, from `(turns, success)` pairs.
pub fn turn_distribution(outcomes: &[(u32, bool)]) -> BTreeMap<u32, TurnBucket> {
    let mut m: BTreeMap<u32, TurnBucket> = BTreeMap::new();
    for &(t, ok) in outcomes {
        let b = m.entry(t).or_insert(TurnBucket {
            count: 0,
            successes: 0,
            rate: 0.0,
        });
        b.count += 1;
        b.successes += usize::from(ok);
    }
    for b in m.values_mut() {
        b.rate = b.successes as f64 / b.count as f64;
    }
    m
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn success_table_csv(t: &SuccessTable) -> String {
    let mut s = String::from("group,lo,hi,successes,count,rate\n");
    for (name, r) in [("short", t.short), ("long", t.long), ("all", t.all)] {
        s.push_str(&format!("{name},,,{},{},{}\n", r.successes, r.count, fmt_opt(r.value())));
    }
    for (name, bins) in [("rotation_deg", &t.by_rotation), ("position_m", &t.by_position)] {
        for b in bins {
            let hi = if b.hi.is_finite() { b.hi.to_string() } else { String::new() };
            s.push_str(&format!(
                "{name},{},{hi},{},{},{}\n",
                b.lo,
                b.rate.successes,
                b.rate.count,
                fmt_opt(b.rate.value())
            ));
        }
    }
    s
}

pub fn coverage_csv(scene: &CoverageCurve, target: &CoverageCurve) -> String {
    let cell = |v: &[f64], t: usize| v.get(t).map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut s = String::from("turn,scene_mean,scene_std,target_mean,target_std,count\n");
    for t in 0..scene.mean.len().max(target.mean.len()) {
        s.push_str(&format!(
            "{t},{},{},{},{},{}\n",
            cell(&scene.mean, t),
            cell(&scene.std, t),
            cell(&target.mean, t),
            cell(&target.std, t),
            scene.counts.get(t).or(target.counts.get(t)).copied().unwrap_or(0)
        ));
    }
    s
}

pub fn turn_distribution_csv(d: &BTreeMap<u32, TurnBucket>) -> String {
    let mut s = String::from("turns,count,successes,rate\n");
    for (t, b) in d {
        s.push_str(&format!("{t},{},{},{:.6}\n", b.count, b.successes, b.rate));
    }
    s
}

pub fn factors_csv(rows: &[(String, FactorVector, bool)]) -> String {
    let mut s = String::from("id,");
    s.push_str(&FACTOR_NAMES.join(","));
    s.push_str(",success\n");
    for (id, f, ok) in rows {
        let vals: Vec<String> = f.values().iter().map(|v| fmt_opt(*v)).collect();
        s.push_str(&format!("{id},{},{}\n", vals.join(","), u8::from(*ok)));
    }
    s
}

/// A minimal line chart: axes, light grid, one polyline per series. No text;
/// the accompanying CSV carries the numbers.
pub fn line_plot(series: &[Vec<(f64, f64)>], width: u32, height: u32) -> RenderedView {
    const PALETTE: [[u8; 3]; 6] = [
        [31, 119, 180],
        [255, 127, 14],
        [44, 160, 44],
        [214, 39, 40],
        [148, 103, 189],
        [140, 86, 75],
    ];
    let mut px = vec![[255u8; 3]; (width * height) as usize];
    let pts: Vec<&(f64, f64)> = series.iter().flatten().collect();
    let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, 1.0f64, 0.0f64, 1.0f64);
    if !pts.is_empty() {
        x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
        y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).max(y0 + 1e-9);
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
    }
    let margin = 20i64;
    let (w, h) = (width as i64, height as i64);
    let to_px = |x: f64, y: f64| {
        let u = margin + ((x - x0) / (x1 - x0) * (w - 2 * margin) as f64).round() as i64;
        let v = h - margin - ((y - y0) / (y1 - y0) * (h - 2 * margin) as f64).round() as i64;
        (u, v)
    };
    let mut put = |u: i64, v: i64, c: [u8; 3]| {
        if (0..w).contains(&u) && (0..h).contains(&v) {
            px[(v * w + u) as usize] = c;
        }
    };
    for k in 0..=4 {
        let v = h - margin - k * (h - 2 * margin) / 4;
        for u in margin..w - margin {
            put(u, v, [225, 225, 225]);
        }
    }
    for u in margin..w - margin {
        put(u, h - margin, [0, 0, 0]);
    }
    for v in margin..h - margin {
        put(margin, v, [0, 0, 0]);
    }
    for (si, s) in series.iter().enumerate() {
        let c = PALETTE[si % PALETTE.len()];
        for seg in s.windows(2) {
            let (a, b) = (to_px(seg[0].0, seg[0].1), to_px(seg[1].0, seg[1].1));
            let n = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1);
            for i in 0..=n {
                let u = a.0 + (b.0 - a.0) * i / n;
                let v = a.1 + (b.1 - a.1) * i / n;
                put(u, v, c);
                put(u, v + 1, c);
            }
        }
        for p in s {
            let (u, v) = to_px(p.0, p.1);
            for du in -2..=2 {
                for dv in -2..=2 {
                    put(u + du, v + dv, c);
                }
            }
        }
    }
    RenderedView::from_pixels(width, height, px)
}

pub fn write_plot(path: &Path, series: &[Vec<(f64, f64)>]) -> Result<(), AnalysisError> {
    line_plot(series, 480, 320)
        .write_png(path)
        .map_err(|e| AnalysisError::Png(e.to_string()))
}

/// Table-2-style rates for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub short: Option<f64>,
    pub long: Option<f64>,
    pub all: Option<f64>,
    pub count: usize,
}

impl From<&SuccessTable> for TaskSummary {
    fn from(t: &SuccessTable) -> Self {
        Self {
            short: t.short.value(),
            long: t.long.value(),
            all: t.all.value(),
            count: t.all.count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::EulerAngles;

    fn at(x: f64, y: f64, z: f64) -> Pose {
        Pose::from_euler(Vector3::new(x, y, z), EulerAngles::zero()).unwrap()
    }

    #[test]
    fn factor_analytic_cases() {
        let s = StepSizes::default();
        let init = at(0.0, 0.0, 0.0);
        // Identity rotation: the analysis forward is -Z.
        let ahead = at(0.0, 0.0, -2.0);
        let f = compute_factors(&init, &ahead, &s, None);
        assert!((f.forward_alignment.unwrap() - 1.0).abs() < 1e-12);
        assert!(f.target_bearing.unwrap().abs() < 1e-6);
        assert_eq!(f.orientation_agreement, 1.0);
        let up = at(1.0, 0.0, 1.0);
        let f = compute_factors(&init, &up, &s, None);
        assert!((f.target_elevation.unwrap() - 45.0).abs() < 1e-12);
        assert!((f.horiz_dist - 1.0).abs() < 1e-12);
        assert!((f.height_diff - 1.0).abs() < 1e-12);
        let same = compute_factors(&init, &init, &s, None);
        assert!(same.forward_alignment.is_none() && same.target_elevation.is_none());
    }

    #[test]
    fn visibility_factors() {
        let s = StepSizes::default();
        let p = at(0.0, 0.0, 0.0);
        let a = [1, 2, 3, 4];
        let f = compute_factors(&p, &p, &s, Some((&a, &a)));
        assert_eq!((f.vis_iou, f.vis_init_norm, f.vis_target_norm), (Some(1.0), Some(1.0), Some(1.0)));
        let b = [3, 4, 5];
        let f = compute_factors(&p, &p, &s, Some((&a, &b)));
        assert_eq!(f.vis_init_norm, Some(0.5));
        assert!((f.vis_target_norm.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((f.vis_iou.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn spearman_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 5]), Err(AnalysisError::Constant));
        assert_eq!(spearman(&[1.0], &[1.0]), Err(AnalysisError::TooFew(1)));
        // Ties {(1,1),(1,2),(2,3)}: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3).
        // Centered: x (-0.5, -0.5, 1), y (-1, 0, 1); cov 1.5, |x| √1.5, |y| √2.
        let rho = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((rho - 1.5 / (1.5f64.sqrt() * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn success_table_basics() {
        let mut pairs = BTreeMap::new();
        for (i, d) in [(0, Difficulty::Short), (1, Difficulty::Short), (2, Difficulty::Long), (3, Difficulty::Long)] {
            pairs.insert(
                format!("p{i}"),
                PairInfo {
                    difficulty: d,
                    d_pos: 0.6 * i as f64,
                    d_rot: 30.0 * i as f64,
                },
            );
        }
        let outcomes: Vec<(String, bool)> = (0..4).map(|i| (format!("p{i}"), i % 2 == 0)).collect();
        let t = success_table(&outcomes, &pairs, &BinEdges::default()).unwrap();
        assert_eq!(t.all.value(), Some(0.5));
        assert_eq!(t.short.value(), Some(0.5));
        assert_eq!(t.by_rotation.iter().map(|b| b.rate.count).collect::<Vec<_>>(), vec![1, 1, 1, 1]);
        assert!(success_table(&[("zz".into(), true)], &pairs, &BinEdges::default()).is_err());
    }

    #[test]
    fn curves_and_turns() {
        let sets = vec![vec![0, 1], vec![1, 2], vec![4]];
        assert_eq!(cumulative_ratios(&sets, None, 5), vec![0.4, 0.6, 0.8]);
        assert_eq!(cumulative_ratios(&sets, Some(&[2, 4]), 5), vec![0.0, 0.5, 1.0]);
        let agg = aggregate_curves(&[vec![0.2, 0.4], vec![0.4]]);
        assert_eq!(agg.counts, vec![2, 1]);
        assert!((agg.mean[0] - 0.3).abs() < 1e-12);
        assert!((agg.std[0] - 0.1).abs() < 1e-12);
        let d = turn_distribution(&[(10, true), (10, false), (3, true)]);
        assert_eq!(d[&10].count, 2);
        assert_eq!(d[&3].rate, 1.0);
        assert!(turn_distribution(&[]).is_empty());
    }

    #[test]
    fn plot_has_series_pixels() {
        let v = line_plot(&[vec![(0.0, 0.0), (1.0, 1.0)]], 100, 80);
        assert!(v.pixels().contains(&[31, 119, 180]));
    }
}
