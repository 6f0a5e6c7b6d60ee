//! Planar-curve primitives.
//!
//! Everything downstream (stroke detection, descriptor encoding, fin-space
//! partitioning) works on [`PlanarCurve`]s: ordered point sequences that are
//! either open or closed. This module provides arc-length resampling,
//! Gaussian scale-space smoothing, the difference-of-Gaussians corner
//! response and prominence-ranked peak selection on that response.
//!
//! Smoothing conventions:
//! - kernels are truncated at `ceil(4 * sigma)` samples and renormalized to
//!   unit sum;
//! - closed signals are convolved circularly;
//! - open signals are extended by point reflection through the end samples
//!   (`x[-k] = 2 x[0] - x[k]`), which reproduces linear signals exactly so a
//!   straight open curve has a zero corner response everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Ordered 2D point sequence, open or closed.
///
/// Closed curves do not repeat their first point at the end; the closing
/// segment is implicit. Open curves need at least two points, closed curves
/// at least three, and no two consecutive points may coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarCurve {
    points: Vec<Point>,
    closed: bool,
}

impl PlanarCurve {
    pub fn new(points: Vec<Point>, closed: bool) -> Result<Self> {
        let min = if closed { 3 } else { 2 };
        if points.len() < min {
            return Err(Error::InvalidCurve(format!(
                "{} curve needs at least {min} points, got {}",
                if closed { "closed" } else { "open" },
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite point at {i}")));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidCurve(format!(
                "consecutive points {i} and {} coincide",
                i + 1
            )));
        }
        if closed && points.first() == points.last() {
            return Err(Error::InvalidCurve(
                "closed curve repeats its first point".into(),
            ));
        }
        Ok(Self { points, closed })
    }

    /// Builds a curve after dropping consecutive duplicates (and, for closed
    /// curves, a trailing copy of the first point).
    pub fn from_points_dedup(mut points: Vec<Point>, closed: bool) -> Result<Self> {
        points.dedup();
        if closed {
            while points.len() > 1 && points.first() == points.last() {
                points.pop();
            }
        }
        Self::new(points, closed)
    }

    /// Skips validation; callers guarantee the invariants up to rounding.
    pub(crate) fn from_raw(points: Vec<Point>, closed: bool) -> Self {
        Self { points, closed }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    fn segment(&self, i: usize) -> (Point, Point) {
        let n = self.points.len();
        (self.points[i], self.points[(i + 1) % n])
    }

    /// Cumulative arc length at every vertex; for closed curves a final entry
    /// holds the full perimeter (arc length on returning to the start).
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.segment_count() + 1);
        out.push(0.0);
        for i in 0..self.segment_count() {
            let (a, b) = self.segment(i);
            acc += a.dist(b);
            out.push(acc);
        }
        out
    }

    /// Total polyline length (perimeter for closed curves).
    pub fn length(&self) -> f64 {
        (0..self.segment_count())
            .map(|i| {
                let (a, b) = self.segment(i);
                a.dist(b)
            })
            .sum()
    }

    /// Point at arc length `s`, clamped to `[0, length]` for open curves and
    /// wrapped for closed ones.
    pub fn point_at(&self, s: f64) -> Point {
        let cum = self.cumulative_lengths();
        let total = *cum.last().unwrap();
        let s = if self.closed {
            s.rem_euclid(total)
        } else {
            s.clamp(0.0, total)
        };
        let seg = locate_segment(&cum, s);
        let (a, b) = self.segment(seg);
        let len = cum[seg + 1] - cum[seg];
        if len <= 0.0 {
            a
        } else {
            a.lerp(b, (s - cum[seg]) / len)
        }
    }

    /// The contiguous arc from arc length `s0` to `s1` in traversal order.
    ///
    /// On closed curves the arc wraps through the start when `s1 <= s0`. The
    /// result is open and contains the interpolated end points plus every
    /// original vertex strictly between them.
    pub fn sub_arc(&self, s0: f64, s1: f64) -> Result<PlanarCurve> {
        let cum = self.cumulative_lengths();
        let total = *cum.last().unwrap();
        let n = self.points.len();
        let mut pts = Vec::new();
        if self.closed {
            let s0 = s0.rem_euclid(total);
            let mut s1 = s1.rem_euclid(total);
            if s1 <= s0 {
                s1 += total;
            }
            pts.push(self.point_at(s0));
            // Vertices in (s0, s1), visiting up to two laps of the index space.
            for lap in 0..2 {
                for (i, &c) in cum[..n].iter().enumerate() {
                    let c = c + lap as f64 * total;
                    if c > s0 && c < s1 {
                        pts.push(self.points[i]);
                    }
                }
            }
            pts.push(self.point_at(s1));
        } else {
            let (s0, s1) = (s0.clamp(0.0, total), s1.clamp(0.0, total));
            if s1 <= s0 {
                return Err(Error::Degenerate(format!(
                    "empty arc [{s0}, {s1}] on an open curve"
                )));
            }
            pts.push(self.point_at(s0));
            for (i, &c) in cum.iter().enumerate() {
                if c > s0 && c < s1 {
                    pts.push(self.points[i]);
                }
            }
            pts.push(self.point_at(s1));
        }
        PlanarCurve::from_points_dedup(pts, false)
    }

    pub fn reversed(&self) -> PlanarCurve {
        let mut points = self.points.clone();
        points.reverse();
        PlanarCurve {
            points,
            closed: self.closed,
        }
    }

    /// Rotation by `angle` about the origin, uniform scaling, then
    /// translation.
    pub fn transformed(&self, angle: f64, scale: f64, translation: Point) -> PlanarCurve {
        let (s, c) = angle.sin_cos();
        let points = self
            .points
            .iter()
            .map(|p| {
                Point::new(
                    scale * (c * p.x - s * p.y) + translation.x,
                    scale * (s * p.x + c * p.y) + translation.y,
                )
            })
            .collect();
        PlanarCurve {
            points,
            closed: self.closed,
        }
    }

    /// Index of the vertex whose arc-length parameter is nearest to `s`.
    pub fn nearest_vertex_at(&self, s: f64) -> usize {
        let cum = self.cumulative_lengths();
        let n = self.points.len();
        let total = *cum.last().unwrap();
        let s = if self.closed {
            s.rem_euclid(total)
        } else {
            s.clamp(0.0, total)
        };
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &c) in cum.iter().enumerate() {
            let d = (c - s).abs();
            if d < best_d {
                best_d = d;
                best = i % n;
            }
        }
        best
    }
}

fn locate_segment(cum: &[f64], s: f64) -> usize {
    // Last segment start <= s.
    let segs = cum.len() - 1;
    match cum[..segs].binary_search_by(|c| c.total_cmp(&s)) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    }
    .min(segs - 1)
}

/// Resamples `curve` to `n` points uniformly spaced in arc length.
///
/// Closed curves get spacing `L / n` starting at the first vertex; open
/// curves get spacing `L / (n - 1)` and keep both end points exactly.
pub fn resample(curve: &PlanarCurve, n: usize) -> Result<PlanarCurve> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "resample count must be >= 3, got {n}"
        )));
    }
    let cum = curve.cumulative_lengths();
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Degenerate("curve has zero length".into()));
    }
    let step = if curve.closed {
        total / n as f64
    } else {
        total / (n - 1) as f64
    };
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let segs = cum.len() - 1;
    for k in 0..n {
        if !curve.closed && k == n - 1 {
            out.push(*curve.points.last().unwrap());
            break;
        }
        let s = k as f64 * step;
        while seg + 1 < segs && cum[seg + 1] <= s {
            seg += 1;
        }
        let (a, b) = curve.segment(seg);
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(a.lerp(b, t.clamp(0.0, 1.0)));
    }
    Ok(PlanarCurve::from_raw(out, curve.closed))
}

/// Sampled Gaussian truncated at `ceil(4 sigma)` and normalized to unit sum.
/// Index `radius` is the centre tap.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma.is_finite() && sigma > 0.0, "sigma must be > 0");
    let radius = ((4.0 * sigma).ceil() as usize).max(1);
    let two_var = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-(x * x) / two_var).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for w in &mut k {
        *w /= sum;
    }
    k
}

/// Value of the point-reflected extension of `x` at (possibly out of range)
/// index `i`.
fn odd_extension(x: &[f64], i: isize) -> f64 {
    let last = x.len() as isize - 1;
    if i < 0 {
        2.0 * x[0] - odd_extension(x, -i)
    } else if i > last {
        2.0 * x[last as usize] - odd_extension(x, 2 * last - i)
    } else {
        x[i as usize]
    }
}

/// Gaussian smoothing of a 1D signal; output length equals input length.
///
/// Panics if `sigma <= 0`.
pub fn gaussian_smooth(signal: &[f64], sigma: f64, closed: bool) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return signal.to_vec();
    }
    let r = (kernel.len() / 2) as isize;
    let ni = n as isize;
    (0..ni)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, &w)| {
                    let j = i + k as isize - r;
                    let v = if closed {
                        signal[j.rem_euclid(ni) as usize]
                    } else if (0..ni).contains(&j) {
                        signal[j as usize]
                    } else {
                        odd_extension(signal, j)
                    };
                    w * v
                })
                .sum()
        })
        .collect()
}

/// Parameters of the difference-of-Gaussians corner response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpaceParams {
    /// Inner scale in samples.
    pub sigma: f64,
    /// Ratio between the outer and inner scale.
    pub m: f64,
    /// Sample count the curve is resampled to before filtering.
    pub resample_len: usize,
}

impl ScaleSpaceParams {
    pub fn new(sigma: f64, m: f64, resample_len: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be > 0, got {sigma}"
            )));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!("m must be > 0, got {m}")));
        }
        if resample_len < 3 {
            return Err(Error::InvalidParameter(format!(
                "resample_len must be >= 3, got {resample_len}"
            )));
        }
        Ok(Self {
            sigma,
            m,
            resample_len,
        })
    }

    /// Stroke keypointing: 128 samples, sigma 1, m 4.
    pub const DETECTION: ScaleSpaceParams = ScaleSpaceParams {
        sigma: 1.0,
        m: 4.0,
        resample_len: 128,
    };

    /// Fin subsection keypointing: 1024 samples, sigma 2, m 8.
    pub const ENCODING: ScaleSpaceParams = ScaleSpaceParams {
        sigma: 2.0,
        m: 8.0,
        resample_len: 1024,
    };
}

/// `D(u) = (G_{m sigma} * x - G_sigma * x)^2 + (G_{m sigma} * y - G_sigma * y)^2`
/// evaluated on the curve's samples as given (resample first).
pub fn dog_response(curve: &PlanarCurve, sigma: f64, m: f64) -> Vec<f64> {
    let closed = curve.is_closed();
    let xs = curve.xs();
    let ys = curve.ys();
    let x_fine = gaussian_smooth(&xs, sigma, closed);
    let x_coarse = gaussian_smooth(&xs, m * sigma, closed);
    let y_fine = gaussian_smooth(&ys, sigma, closed);
    let y_coarse = gaussian_smooth(&ys, m * sigma, closed);
    (0..xs.len())
        .map(|i| {
            let dx = x_coarse[i] - x_fine[i];
            let dy = y_coarse[i] - y_fine[i];
            dx * dx + dy * dy
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Sample index on the resampled curve.
    pub index: usize,
    pub response: f64,
    pub prominence: f64,
}

/// Indices of interior local maxima. A flat-topped maximum is reported once,
/// at the left edge of its plateau.
pub fn local_maxima(signal: &[f64]) -> Vec<usize> {
    let n = signal.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if signal[i] > signal[i - 1] {
            let mut j = i;
            while j + 1 < n && signal[j + 1] == signal[i] {
                j += 1;
            }
            if j + 1 < n && signal[j + 1] < signal[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Prominence of the local maximum at `peak`.
///
/// From the peak a horizontal line is extended left and right until it meets
/// a strictly higher sample; the minimum of the signal over each swept
/// interval gives `min_L` / `min_R`, and the reference level is the larger of
/// the two. An interval that runs off the end of the signal imposes no
/// constraint: its minimum is taken as the signal floor (global minimum).
pub fn peak_prominence(signal: &[f64], peak: usize, floor: f64) -> f64 {
    let h = signal[peak];
    let mut min_l = h;
    let mut hit_l = false;
    for &v in signal[..peak].iter().rev() {
        if v > h {
            hit_l = true;
            break;
        }
        min_l = min_l.min(v);
    }
    let mut min_r = h;
    let mut hit_r = false;
    for &v in &signal[peak + 1..] {
        if v > h {
            hit_r = true;
            break;
        }
        min_r = min_r.min(v);
    }
    let min_l = if hit_l { min_l } else { floor };
    let min_r = if hit_r { min_r } else { floor };
    h - min_l.max(min_r)
}

/// Peaks whose prominence does not exceed this fraction of the signal's
/// largest magnitude are rounding noise and are dropped.
pub const PROMINENCE_NOISE_FLOOR: f64 = 1e-9;

/// Local maxima ranked by prominence (descending, ties by lower index),
/// truncated to `n`. Peaks at or below [`PROMINENCE_NOISE_FLOOR`] (relative
/// to `max |signal|`) are suppressed.
pub fn prominence_peaks(signal: &[f64], n: usize) -> Vec<Keypoint> {
    if signal.is_empty() || n == 0 {
        return Vec::new();
    }
    let floor = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise = PROMINENCE_NOISE_FLOOR * scale;
    let mut peaks: Vec<Keypoint> = local_maxima(signal)
        .into_iter()
        .map(|i| Keypoint {
            index: i,
            response: signal[i],
            prominence: peak_prominence(signal, i, floor),
        })
        .filter(|k| k.prominence > noise)
        .collect();
    peaks.sort_by(|a, b| {
        b.prominence
            .total_cmp(&a.prominence)
            .then(a.index.cmp(&b.index))
    });
    peaks.truncate(n);
    peaks
}

/// Prominence peaks of a periodic signal. The signal is rotated to start at
/// its (first) global minimum so no maximum straddles the seam; indices are
/// reported in the original frame.
pub fn prominence_peaks_periodic(signal: &[f64], n: usize) -> Vec<Keypoint> {
    if signal.is_empty() {
        return Vec::new();
    }
    let shift = signal
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap();
    let len = signal.len();
    let rotated: Vec<f64> = (0..len).map(|i| signal[(i + shift) % len]).collect();
    let mut peaks = prominence_peaks(&rotated, n);
    for p in &mut peaks {
        p.index = (p.index + shift) % len;
    }
    // Restore the global tie-break on original indices.
    peaks.sort_by(|a, b| {
        b.prominence
            .total_cmp(&a.prominence)
            .then(a.index.cmp(&b.index))
    });
    peaks
}

/// Resamples the curve, computes its DoG response and returns the `n` most
/// prominent maxima. Closed curves are treated as periodic. With
/// `with_endpoints`, the first and last samples of an open curve are appended
/// (prominence 0).
pub fn detect_keypoints(
    curve: &PlanarCurve,
    n: usize,
    params: &ScaleSpaceParams,
    with_endpoints: bool,
) -> Result<Vec<Keypoint>> {
    let resampled = resample(curve, params.resample_len)?;
    let response = dog_response(&resampled, params.sigma, params.m);
    let mut peaks = if curve.is_closed() {
        prominence_peaks_periodic(&response, n)
    } else {
        prominence_peaks(&response, n)
    };
    if with_endpoints && !curve.is_closed() {
        let last = response.len() - 1;
        for index in [0, last] {
            peaks.push(Keypoint {
                index,
                response: response[index],
                prominence: 0.0,
            });
        }
    }
    Ok(peaks)
}

/// Arc-length parameter on `curve` of sample `index` from a resampling to
/// `resample_len` points.
pub fn arc_of_sample(curve: &PlanarCurve, resample_len: usize, index: usize) -> f64 {
    let total = curve.length();
    let spacing = if curve.is_closed() {
        total / resample_len as f64
    } else {
        total / (resample_len - 1) as f64
    };
    index as f64 * spacing
}

/// Maps a resampled keypoint index back to the nearest original vertex.
pub fn map_to_original(curve: &PlanarCurve, resample_len: usize, index: usize) -> usize {
    curve.nearest_vertex_at(arc_of_sample(curve, resample_len, index))
}
