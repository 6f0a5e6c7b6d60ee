//! Fin candidate detection from pools of closed region contours.
//!
//! Region pools are pruned (short boundaries dropped, near-duplicate regions
//! clustered), every surviving region is cut between pairs of corner
//! keypoints into open "strokes", and strokes are scored by a quality
//! regressor over a histogram of boundary normals. Greedy non-maximum
//! suppression on contour overlap yields the final detections.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::boundary::{contour_f_measure, DEFAULT_TOLERANCE};
use crate::curve::{self, detect_keypoints, resample, PlanarCurve, ScaleSpaceParams};
use crate::ensemble::{Forest, Targets, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{pr_curve, PrCurve};

/// Regions whose boundary is shorter than this (pixels) are discarded.
pub const MIN_BOUNDARY_LENGTH: f64 = 70.0;
/// Regions overlapping at least this much (intersection over union) cluster.
pub const CLUSTER_OVERLAP: f64 = 0.95;
pub const DEFAULT_K: usize = 12;
pub const DEFAULT_N: usize = 7;
pub const NMS_OVERLAP: f64 = 0.2;

pub const SPATIAL_BINS: usize = 20;
pub const ORIENTATION_BINS: usize = 8;
pub const HISTOGRAM_DIM: usize = SPATIAL_BINS * ORIENTATION_BINS;
/// Samples per stroke when building the normal histogram.
pub const HISTOGRAM_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionContour {
    pub boundary: PlanarCurve,
    /// Level of the hierarchy the region first appears at; lower is earlier.
    pub hierarchy_rank: u32,
}

impl RegionContour {
    pub fn new(boundary: PlanarCurve, hierarchy_rank: u32) -> Result<Self> {
        if !boundary.is_closed() {
            return Err(Error::InvalidCurve("region boundary must be closed".into()));
        }
        Ok(Self {
            boundary,
            hierarchy_rank,
        })
    }
}

/// Filled pixel area of a closed polygon, as horizontal runs per row.
/// A pixel `(x, y)` is inside when its centre `(x + 0.5, y + 0.5)` is
/// (even-odd rule).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionMask {
    rows: BTreeMap<i64, Vec<(i64, i64)>>,
    area: u64,
}

impl RegionMask {
    pub fn from_polygon(curve: &PlanarCurve) -> Self {
        let pts = curve.points();
        let n = pts.len();
        let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let mut rows = BTreeMap::new();
        let mut area = 0u64;
        let mut xs = Vec::new();
        for row in (min_y - 0.5).floor() as i64..=(max_y - 0.5).ceil() as i64 {
            let yc = row as f64 + 0.5;
            xs.clear();
            for i in 0..n {
                let a = pts[i];
                let b = pts[(i + 1) % n];
                if (a.y <= yc) != (b.y <= yc) {
                    xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            xs.sort_by(f64::total_cmp);
            let mut runs = Vec::new();
            for pair in xs.chunks_exact(2) {
                let lo = (pair[0] - 0.5).ceil() as i64;
                let hi = (pair[1] - 0.5).ceil() as i64;
                if hi > lo {
                    runs.push((lo, hi));
                    area += (hi - lo) as u64;
                }
            }
            if !runs.is_empty() {
                rows.insert(row, runs);
            }
        }
        Self { rows, area }
    }

    pub fn area(&self) -> u64 {
        self.area
    }

    pub fn intersection_area(&self, other: &RegionMask) -> u64 {
        let mut total = 0u64;
        for (row, a) in &self.rows {
            let Some(b) = other.rows.get(row) else {
                continue;
            };
            let (mut i, mut j) = (0, 0);
            while i < a.len() && j < b.len() {
                let lo = a[i].0.max(b[j].0);
                let hi = a[i].1.min(b[j].1);
                if hi > lo {
                    total += (hi - lo) as u64;
                }
                if a[i].1 < b[j].1 {
                    i += 1;
                } else {
                    j += 1;
                }
            }
        }
        total
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn overlap(&self, other: &RegionMask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area + other.area - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Region rejection and ranking.
///
/// Drops boundaries shorter than [`MIN_BOUNDARY_LENGTH`], clusters the rest
/// so every pair within a cluster overlaps by at least [`CLUSTER_OVERLAP`]
/// (visiting regions in rank order, so each cluster's first member is its
/// top-ranked one), keeps one region per cluster and returns the `k`
/// best-ranked survivors. Ties in rank keep input order.
pub fn filter_regions(pool: &[RegionContour], k: usize) -> Vec<RegionContour> {
    let mut order: Vec<usize> = (0..pool.len())
        .filter(|&i| pool[i].boundary.length() >= MIN_BOUNDARY_LENGTH)
        .collect();
    order.sort_by_key(|&i| (pool[i].hierarchy_rank, i));

    let masks: BTreeMap<usize, RegionMask> = order
        .iter()
        .map(|&i| (i, RegionMask::from_polygon(&pool[i].boundary)))
        .collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        let home = clusters.iter_mut().find(|c| {
            c.iter()
                .all(|&j| masks[&i].overlap(&masks[&j]) >= CLUSTER_OVERLAP)
        });
        match home {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }
    // Clusters were opened in rank order, so their heads are already sorted.
    clusters
        .iter()
        .take(k)
        .map(|c| pool[c[0]].clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// Open arc of a region boundary between two keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    /// Index of the parent region in the pool passed to
    /// [`generate_stroke_pool`].
    pub parent: usize,
    /// Keypoint sample indices on the parent's resampled boundary.
    pub start_kp: usize,
    pub end_kp: usize,
    pub direction: Direction,
    pub points: PlanarCurve,
}

impl Stroke {
    pub fn reversed(&self) -> Stroke {
        Stroke {
            parent: self.parent,
            start_kp: self.end_kp,
            end_kp: self.start_kp,
            direction: self.direction.flipped(),
            points: self.points.reversed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokePool {
    pub strokes: Vec<Stroke>,
    /// Keypoints actually used per region (`min(n, peaks found)`).
    pub keypoints_per_region: Vec<usize>,
}

/// Cuts every region between all ordered pairs of its `n` most prominent
/// keypoints. Ordered pair `(a, b)` yields the arc running forward from `a`
/// to `b`, so each unordered pair contributes both complementary arcs and a
/// region with `n'` keypoints contributes `n'^2 - n'` strokes.
pub fn generate_stroke_pool(
    regions: &[RegionContour],
    n: usize,
    params: &ScaleSpaceParams,
) -> Result<StrokePool> {
    let mut strokes = Vec::new();
    let mut keypoints_per_region = Vec::with_capacity(regions.len());
    for (r, region) in regions.iter().enumerate() {
        let mut kps = detect_keypoints(&region.boundary, n, params, false)?;
        if kps.len() < n {
            warn!("region {r}: only {} of {n} keypoints found", kps.len());
        }
        kps.sort_by_key(|k| k.index);
        keypoints_per_region.push(kps.len());
        let arc = |i: usize| curve::arc_of_sample(&region.boundary, params.resample_len, i);
        for a in &kps {
            for b in &kps {
                if a.index == b.index {
                    continue;
                }
                let points = region.boundary.sub_arc(arc(a.index), arc(b.index))?;
                strokes.push(Stroke {
                    parent: r,
                    start_kp: a.index,
                    end_kp: b.index,
                    direction: Direction::Forward,
                    points,
                });
            }
        }
    }
    Ok(StrokePool {
        strokes,
        keypoints_per_region,
    })
}

fn orientation_bin(nx: f64, ny: f64) -> usize {
    // Bins are centred on multiples of 45 degrees.
    let angle = ny.atan2(nx);
    let step = std::f64::consts::FRAC_PI_4;
    ((angle / step).round() as i64).rem_euclid(ORIENTATION_BINS as i64) as usize
}

/// Unit normals (left of the traversal direction) at every sample of an open
/// curve, from central differences (one-sided at the ends).
pub(crate) fn left_normals(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            let tx = xs[b] - xs[a];
            let ty = ys[b] - ys[a];
            let len = tx.hypot(ty);
            if len > 0.0 {
                (-ty / len, tx / len)
            } else {
                (0.0, 0.0)
            }
        })
        .collect()
}

/// Histogram of boundary normals: 20 equal arc-length bins along the stroke
/// by 8 orientation bins, L2-normalized. Layout is `spatial * 8 + orientation`.
pub fn normal_histogram(stroke: &Stroke) -> Result<Vec<f64>> {
    let sampled = resample(&stroke.points, HISTOGRAM_SAMPLES)?;
    let normals = left_normals(&sampled.xs(), &sampled.ys());
    let mut hist = vec![0.0; HISTOGRAM_DIM];
    for (i, &(nx, ny)) in normals.iter().enumerate() {
        if nx == 0.0 && ny == 0.0 {
            continue;
        }
        let spatial = i * SPATIAL_BINS / HISTOGRAM_SAMPLES;
        hist[spatial * ORIENTATION_BINS + orientation_bin(nx, ny)] += 1.0;
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate("stroke has no usable normals".into()));
    }
    hist.iter_mut().for_each(|v| *v /= norm);
    Ok(hist)
}

/// Appearance cue concatenated to the shape histogram.
pub trait AppearanceFeature: Send + Sync {
    fn dim(&self) -> usize;
    fn extract(&self, stroke: &Stroke) -> Vec<f64>;
}

/// No appearance cue: strokes are described by shape alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShapeOnly;

impl AppearanceFeature for ShapeOnly {
    fn dim(&self) -> usize {
        0
    }

    fn extract(&self, _stroke: &Stroke) -> Vec<f64> {
        Vec::new()
    }
}

/// Normal histogram followed by the L2-normalized appearance vector.
pub fn stroke_feature(stroke: &Stroke, appearance: &dyn AppearanceFeature) -> Result<Vec<f64>> {
    let mut f = normal_histogram(stroke)?;
    let mut a = appearance.extract(stroke);
    if a.len() != appearance.dim() {
        return Err(Error::DimensionMismatch {
            expected: appearance.dim(),
            got: a.len(),
        });
    }
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        a.iter_mut().for_each(|v| *v /= norm);
    }
    f.extend(a);
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeScore {
    /// Ground-truth quality against a labelled contour, when known.
    pub f_true: Option<f64>,
    /// Predicted quality.
    pub f_pred: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredStroke {
    pub stroke: Stroke,
    pub score: StrokeScore,
}

/// Predicted quality of a stroke: the maximum over both traversal
/// directions.
pub fn predict_stroke_quality(
    stroke: &Stroke,
    model: &Forest,
    appearance: &dyn AppearanceFeature,
) -> Result<f64> {
    let fwd = model.predict_quality(&stroke_feature(stroke, appearance)?)?;
    let rev = model.predict_quality(&stroke_feature(&stroke.reversed(), appearance)?)?;
    Ok(fwd.max(rev))
}

/// Contour overlap between two strokes: boundary F-measure at the default
/// pixel tolerance.
pub fn stroke_overlap(a: &Stroke, b: &Stroke) -> Result<f64> {
    Ok(contour_f_measure(&a.points, &b.points, DEFAULT_TOLERANCE)?.f)
}

/// Scores every stroke and keeps them greedily in descending predicted
/// quality, dropping any stroke whose overlap with an already kept stroke
/// exceeds `overlap`.
pub fn score_and_nms(
    strokes: &[Stroke],
    model: &Forest,
    overlap: f64,
    appearance: &dyn AppearanceFeature,
) -> Result<Vec<ScoredStroke>> {
    let scores = strokes
        .iter()
        .map(|s| predict_stroke_quality(s, model, appearance))
        .collect::<Result<Vec<f64>>>()?;
    nms(strokes, &scores, overlap)
}

/// Greedy suppression given precomputed scores (ties keep input order).
pub fn nms(strokes: &[Stroke], scores: &[f64], overlap: f64) -> Result<Vec<ScoredStroke>> {
    let mut order: Vec<usize> = (0..strokes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let mut suppressed = false;
        for &j in &kept {
            if stroke_overlap(&strokes[i], &strokes[j])? > overlap {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(i);
        }
    }
    Ok(kept
        .into_iter()
        .map(|i| ScoredStroke {
            stroke: strokes[i].clone(),
            score: StrokeScore {
                f_true: None,
                f_pred: scores[i],
            },
        })
        .collect())
}

/// Regression rows for the quality model: each stroke described in the
/// direction that runs the same way as `truth`, targeted at its F-measure
/// against `truth`.
pub fn quality_training_rows(
    strokes: &[Stroke],
    truth: &PlanarCurve,
    tol: f64,
    appearance: &dyn AppearanceFeature,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let t0 = truth.points()[0];
    let t1 = *truth.points().last().unwrap();
    let mut xs = Vec::with_capacity(strokes.len());
    let mut ys = Vec::with_capacity(strokes.len());
    for s in strokes {
        let p0 = s.points.points()[0];
        let p1 = *s.points.points().last().unwrap();
        let aligned = p0.dist(t0) + p1.dist(t1) <= p0.dist(t1) + p1.dist(t0);
        let oriented = if aligned { s.clone() } else { s.reversed() };
        xs.push(stroke_feature(&oriented, appearance)?);
        ys.push(contour_f_measure(&s.points, truth, tol)?.f);
    }
    Ok((xs, ys))
}

/// One detection as seen by the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDetection {
    pub f_pred: f64,
    /// Ground-truth quality against each truth contour of the image.
    pub quality: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionImage {
    pub detections: Vec<EvalDetection>,
    pub n_truths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// `(t, AP at quality threshold t, PR curve)`.
    pub per_threshold: Vec<(f64, PrCurve)>,
    /// Mean AP over the thresholds.
    pub ap_vol: f64,
    pub warnings: Vec<String>,
}

impl DetectionReport {
    pub fn ap_at(&self, t: f64) -> Option<f64> {
        self.per_threshold
            .iter()
            .find(|(x, _)| *x == t)
            .map(|(_, c)| c.average_precision)
    }
}

/// `k + 1` evenly spaced thresholds covering `[0, 1]`.
pub fn uniform_thresholds(k: usize) -> Vec<f64> {
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

/// Detection AP per quality threshold and the volume under the PR surface.
///
/// Detections from all images are pooled and visited in descending `f_pred`
/// (ties by image, then detection order). A detection is a true positive at
/// threshold `t` when some still unmatched truth of its image has quality at
/// least `t`; it claims the best such truth.
pub fn evaluate_detection(images: &[DetectionImage], thresholds: &[f64]) -> DetectionReport {
    let mut warnings = Vec::new();
    let mut pooled: Vec<(usize, usize)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, im)| (0..im.detections.len()).map(move |d| (i, d)))
        .collect();
    if pooled.is_empty() {
        let msg = "no detections to evaluate; AP is 0".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    pooled.sort_by(|&(ia, da), &(ib, db)| {
        let fa = images[ia].detections[da].f_pred;
        let fb = images[ib].detections[db].f_pred;
        fb.total_cmp(&fa).then((ia, da).cmp(&(ib, db)))
    });
    let n_truths: usize = images.iter().map(|im| im.n_truths).sum();

    let per_threshold: Vec<(f64, PrCurve)> = thresholds
        .iter()
        .map(|&t| {
            let mut taken: Vec<Vec<bool>> =
                images.iter().map(|im| vec![false; im.n_truths]).collect();
            let scored: Vec<(f64, bool)> = pooled
                .iter()
                .map(|&(i, d)| {
                    let det = &images[i].detections[d];
                    let best = det
                        .quality
                        .iter()
                        .enumerate()
                        .take(images[i].n_truths)
                        .filter(|&(g, &q)| q >= t && !taken[i][g])
                        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)));
                    let tp = match best {
                        Some((g, _)) => {
                            taken[i][g] = true;
                            true
                        }
                        None => false,
                    };
                    (det.f_pred, tp)
                })
                .collect();
            (t, pr_curve(&scored, n_truths))
        })
        .collect();
    let ap_vol = if per_threshold.is_empty() {
        0.0
    } else {
        per_threshold
            .iter()
            .map(|(_, c)| c.average_precision)
            .sum::<f64>()
            / per_threshold.len() as f64
    };
    DetectionReport {
        per_threshold,
        ap_vol,
        warnings,
    }
}


/// Settings of the full detection pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub regions: usize,
    pub keypoints: usize,
    pub scale_space: ScaleSpaceParams,
    pub nms_overlap: f64,
    pub tolerance: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            regions: DEFAULT_K,
            keypoints: DEFAULT_N,
            scale_space: ScaleSpaceParams::DETECTION,
            nms_overlap: NMS_OVERLAP,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

fn candidate_strokes(pool: &[RegionContour], params: &DetectParams) -> Result<Vec<Stroke>> {
    let kept = filter_regions(pool, params.regions);
    Ok(generate_stroke_pool(&kept, params.keypoints, &params.scale_space)?.strokes)
}

/// Trains the stroke quality regressor on region pools with known fin
/// contours.
pub fn train_quality_model(
    images: &[(Vec<RegionContour>, PlanarCurve)],
    params: &DetectParams,
    config: &TrainConfig,
    appearance: &dyn AppearanceFeature,
) -> Result<Forest> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (pool, truth) in images {
        let strokes = candidate_strokes(pool, params)?;
        let (xs, ys) = quality_training_rows(&strokes, truth, params.tolerance, appearance)?;
        x.extend(xs);
        y.extend(ys);
    }
    Forest::train(&x, &Targets::Regression(y), config)
}

/// Candidate strokes of one region pool after scoring and suppression,
/// best first.
pub fn detect_fins(
    pool: &[RegionContour],
    params: &DetectParams,
    model: &Forest,
    appearance: &dyn AppearanceFeature,
) -> Result<Vec<ScoredStroke>> {
    let strokes = candidate_strokes(pool, params)?;
    score_and_nms(&strokes, model, params.nms_overlap, appearance)
}
