//! Combinatorial biometric encoding of fin contours.
//!
//! A fin contour is resampled to a fixed resolution, its most prominent DoG
//! corners plus both end points become keypoints, and the contour between
//! every keypoint pair is described at several filter scales by two
//! descriptor families:
//!
//! - **DoG norm**: the DoG response of the subsection itself, with the outer
//!   scale fixed at twice the inner one;
//! - **aligned normals**: unit normals of the smoothed subsection after
//!   rotating it so its chord lies on the positive x-axis.
//!
//! Subsections are resampled to a fixed length and expressed in units of
//! their own sample spacing, which makes both families invariant to rigid
//! motion and uniform scaling of the input.

use serde::{Deserialize, Serialize};

use crate::curve::{
    dog_response, gaussian_smooth, prominence_peaks, resample, PlanarCurve, Point, ScaleSpaceParams,
};
use crate::error::{Error, Result};
use crate::stroke::{left_normals, Direction};

/// Energy (sum of squares before normalization) below which a DoG
/// descriptor is considered flat.
pub const DEGENERATE_ENERGY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinContour {
    curve: PlanarCurve,
    tip_index: usize,
    pub source_quality: Option<f64>,
}

/// Vertex farthest from the chord joining the end points (lowest index on
/// ties).
pub fn locate_tip(curve: &PlanarCurve) -> Result<usize> {
    let pts = curve.points();
    let a = pts[0];
    let b = *pts.last().unwrap();
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let chord = dx.hypot(dy);
    let dist = |p: &Point| {
        if chord > 0.0 {
            ((p.x - a.x) * dy - (p.y - a.y) * dx).abs() / chord
        } else {
            p.dist(a)
        }
    };
    let mut best = 0;
    let mut best_d = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let d = dist(p);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    if best == 0 || best == pts.len() - 1 {
        return Err(Error::Degenerate("fin contour has no interior tip".into()));
    }
    Ok(best)
}

impl FinContour {
    /// Open contour running from the leading-edge end to the trailing-edge
    /// end; the tip is located geometrically.
    pub fn new(curve: PlanarCurve) -> Result<Self> {
        let tip = if curve.is_closed() {
            0
        } else {
            locate_tip(&curve)?
        };
        Self::with_tip(curve, tip)
    }

    pub fn with_tip(curve: PlanarCurve, tip_index: usize) -> Result<Self> {
        if curve.is_closed() {
            return Err(Error::InvalidCurve("fin contour must be open".into()));
        }
        if tip_index == 0 || tip_index + 1 >= curve.len() {
            return Err(Error::InvalidCurve(format!(
                "tip index {tip_index} is not interior to a {}-point contour",
                curve.len()
            )));
        }
        Ok(Self {
            curve,
            tip_index,
            source_quality: None,
        })
    }

    pub fn curve(&self) -> &PlanarCurve {
        &self.curve
    }

    pub fn tip_index(&self) -> usize {
        self.tip_index
    }

    /// Arc-length position of the tip as a fraction of the contour length.
    pub fn tip_proportion(&self) -> f64 {
        let cum = self.curve.cumulative_lengths();
        cum[self.tip_index] / cum.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DescriptorType {
    DogN,
    Normal,
}

impl DescriptorType {
    pub const ALL: [DescriptorType; 2] = [DescriptorType::DogN, DescriptorType::Normal];

    pub fn index(self) -> usize {
        match self {
            DescriptorType::DogN => 0,
            DescriptorType::Normal => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DescriptorType::DogN => "dogn",
            DescriptorType::Normal => "normal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dogn" => Some(DescriptorType::DogN),
            "normal" => Some(DescriptorType::Normal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeConfig {
    /// Keypointing of the whole contour.
    pub contour: ScaleSpaceParams,
    /// Interior maxima used as keypoints (end points are added on top).
    pub interior_keypoints: usize,
    /// Samples per subsection.
    pub descriptor_len: usize,
    /// Filter scales, in subsection samples.
    pub scales: Vec<f64>,
    /// Outer/inner scale ratio of the DoG norm descriptor.
    pub dog_m: f64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            contour: ScaleSpaceParams::ENCODING,
            interior_keypoints: 48,
            descriptor_len: 256,
            scales: vec![1.0, 2.0, 4.0, 8.0],
            dog_m: 2.0,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self) -> Result<()> {
        ScaleSpaceParams::new(
            self.contour.sigma,
            self.contour.m,
            self.contour.resample_len,
        )?;
        if self.descriptor_len < 3 {
            return Err(Error::InvalidParameter(
                "descriptor_len must be >= 3".into(),
            ));
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter(
                "scales must be non-empty and positive".into(),
            ));
        }
        if !(self.dog_m > 0.0) {
            return Err(Error::InvalidParameter("dog_m must be > 0".into()));
        }
        Ok(())
    }

    pub fn dim(&self, dtype: DescriptorType) -> usize {
        match dtype {
            DescriptorType::DogN => self.descriptor_len,
            DescriptorType::Normal => 2 * self.descriptor_len,
        }
    }
}

/// Contour section between two keypoints of the resampled fin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subsection {
    pub start_kp: usize,
    pub end_kp: usize,
    /// Length as a fraction of the full contour.
    pub p: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiometricDescriptor {
    pub vector: Vec<f64>,
    pub dtype: DescriptorType,
    /// Position of the filter scale in [`EncodeConfig::scales`].
    pub scale_index: usize,
    pub scale: f64,
    pub subsection: Subsection,
    pub degenerate: bool,
    pub class_label: Option<u32>,
}

/// Fin contour resampled at the encoding resolution.
#[derive(Debug, Clone)]
pub struct PreparedFin {
    pub resampled: PlanarCurve,
    pub tip_proportion: f64,
}

impl PreparedFin {
    pub fn new(fin: &FinContour, cfg: &EncodeConfig) -> Result<Self> {
        Ok(Self {
            resampled: resample(fin.curve(), cfg.contour.resample_len)?,
            tip_proportion: fin.tip_proportion(),
        })
    }

    /// Subsection geometry in traversal order, resampled to `len` points and
    /// scaled to unit sample spacing with its start at the origin.
    fn section(&self, sub: &Subsection, len: usize) -> Result<PlanarCurve> {
        let pts = &self.resampled.points()[sub.start_kp..=sub.end_kp];
        let raw = PlanarCurve::from_points_dedup(pts.to_vec(), false)?;
        let raw = match sub.direction {
            Direction::Forward => raw,
            Direction::Reverse => raw.reversed(),
        };
        let total = raw.length();
        if !(total > 0.0) {
            return Err(Error::Degenerate("zero-length subsection".into()));
        }
        let sampled = resample(&raw, len)?;
        let origin = sampled.points()[0];
        let k = (len - 1) as f64 / total;
        Ok(PlanarCurve::from_raw(
            sampled
                .points()
                .iter()
                .map(|p| Point::new((p.x - origin.x) * k, (p.y - origin.y) * k))
                .collect(),
            false,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsectionSet {
    /// Keypoint sample indices (sorted, end points included).
    pub keypoints: Vec<usize>,
    pub subsections: Vec<Subsection>,
}

/// Keypoints of the resampled fin (most prominent interior maxima plus both
/// end points) and one forward subsection per unordered keypoint pair.
pub fn generate_subsections(prepared: &PreparedFin, cfg: &EncodeConfig) -> SubsectionSet {
    let response = dog_response(&prepared.resampled, cfg.contour.sigma, cfg.contour.m);
    let peaks = prominence_peaks(&response, cfg.interior_keypoints);
    if peaks.len() < cfg.interior_keypoints {
        log::debug!(
            "only {} of {} interior keypoints available",
            peaks.len(),
            cfg.interior_keypoints
        );
    }
    let last = prepared.resampled.len() - 1;
    let mut keypoints: Vec<usize> = peaks.iter().map(|k| k.index).collect();
    keypoints.push(0);
    keypoints.push(last);
    keypoints.sort_unstable();
    keypoints.dedup();
    let mut subsections = Vec::with_capacity(keypoints.len() * (keypoints.len() - 1) / 2);
    for (i, &a) in keypoints.iter().enumerate() {
        for &b in &keypoints[i + 1..] {
            subsections.push(Subsection {
                start_kp: a,
                end_kp: b,
                p: (b - a) as f64 / last as f64,
                direction: Direction::Forward,
            });
        }
    }
    SubsectionSet {
        keypoints,
        subsections,
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let energy: f64 = v.iter().map(|x| x * x).sum();
    let norm = energy.sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    energy
}

/// DoG norm descriptors of one subsection, one per filter scale.
pub fn encode_dogn(
    sub: &Subsection,
    fin: &PreparedFin,
    cfg: &EncodeConfig,
) -> Result<Vec<BiometricDescriptor>> {
    let section = fin.section(sub, cfg.descriptor_len)?;
    Ok(cfg
        .scales
        .iter()
        .enumerate()
        .map(|(j, &sigma)| {
            let mut v = dog_response(&section, sigma, cfg.dog_m);
            let energy = normalize(&mut v);
            BiometricDescriptor {
                vector: v,
                dtype: DescriptorType::DogN,
                scale_index: j,
                scale: sigma,
                subsection: *sub,
                degenerate: energy < DEGENERATE_ENERGY,
                class_label: None,
            }
        })
        .collect())
}

/// Aligned boundary-normal descriptors of one subsection, one per filter
/// scale: x components of all unit normals followed by their y components.
pub fn encode_normal(
    sub: &Subsection,
    fin: &PreparedFin,
    cfg: &EncodeConfig,
) -> Result<Vec<BiometricDescriptor>> {
    let section = fin.section(sub, cfg.descriptor_len)?;
    let end = *section.points().last().unwrap();
    if end.x.hypot(end.y) == 0.0 {
        return Err(Error::Degenerate("subsection end points coincide".into()));
    }
    let aligned = section.transformed(-end.y.atan2(end.x), 1.0, Point::default());
    let xs = aligned.xs();
    let ys = aligned.ys();
    let n = xs.len();
    Ok(cfg
        .scales
        .iter()
        .enumerate()
        .map(|(j, &sigma)| {
            let sx = gaussian_smooth(&xs, sigma, false);
            let sy = gaussian_smooth(&ys, sigma, false);
            let normals = left_normals(&sx, &sy);
            let mut v = vec![0.0; 2 * n];
            for (i, (nx, ny)) in normals.into_iter().enumerate() {
                v[i] = nx;
                v[n + i] = ny;
            }
            let energy = normalize(&mut v);
            BiometricDescriptor {
                vector: v,
                dtype: DescriptorType::Normal,
                scale_index: j,
                scale: sigma,
                subsection: *sub,
                degenerate: energy < DEGENERATE_ENERGY,
                class_label: None,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Encoded in both traversal directions.
    Reference,
    /// Encoded forward only.
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFin {
    pub keypoints: Vec<usize>,
    pub tip_proportion: f64,
    /// Non-degenerate descriptors in subsection order.
    pub descriptors: Vec<BiometricDescriptor>,
    /// Descriptors dropped as degenerate.
    pub degenerate: usize,
}

/// Encodes every subsection with both families at all scales. Degenerate
/// descriptors (flat DoG responses, closed-loop subsections) are counted
/// and left out.
pub fn encode_fin(fin: &FinContour, role: Role, cfg: &EncodeConfig) -> Result<EncodedFin> {
    cfg.validate()?;
    let prepared = PreparedFin::new(fin, cfg)?;
    let set = generate_subsections(&prepared, cfg);
    let directions: &[Direction] = match role {
        Role::Query => &[Direction::Forward],
        Role::Reference => &[Direction::Forward, Direction::Reverse],
    };
    let mut descriptors = Vec::new();
    let mut degenerate = 0;
    for sub in &set.subsections {
        for &direction in directions {
            let sub = Subsection { direction, ..*sub };
            let mut batch = encode_dogn(&sub, &prepared, cfg)?;
            match encode_normal(&sub, &prepared, cfg) {
                Ok(n) => batch.extend(n),
                Err(Error::Degenerate(_)) => degenerate += cfg.scales.len(),
                Err(e) => return Err(e),
            }
            for d in batch {
                if d.degenerate {
                    degenerate += 1;
                } else {
                    descriptors.push(d);
                }
            }
        }
    }
    Ok(EncodedFin {
        keypoints: set.keypoints,
        tip_proportion: prepared.tip_proportion,
        descriptors,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(points: Vec<Point>) -> PlanarCurve {
        PlanarCurve::new(points, false).unwrap()
    }

    fn line_fin() -> PreparedFin {
        let c = open((0..50).map(|i| Point::new(i as f64 * 2.0, 0.0)).collect());
        PreparedFin {
            resampled: resample(&c, 1024).unwrap(),
            tip_proportion: 0.5,
        }
    }

    fn sub(a: usize, b: usize) -> Subsection {
        Subsection {
            start_kp: a,
            end_kp: b,
            p: (b - a) as f64 / 1023.0,
            direction: Direction::Forward,
        }
    }

    /// Bumpy open curve with a known number of well separated corners.
    fn zigzag(teeth: usize) -> PlanarCurve {
        let mut pts = Vec::new();
        for i in 0..=teeth * 2 {
            let y = if i % 2 == 0 { 0.0 } else { 40.0 };
            pts.push(Point::new(i as f64 * 40.0, y));
        }
        open(pts)
    }

    #[test]
    fn tip_is_farthest_from_chord() {
        let c = open(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 5.0),
            Point::new(5.0, 8.0),
            Point::new(10.0, 0.0),
        ]);
        assert_eq!(locate_tip(&c).unwrap(), 2);
        let fin = FinContour::new(c).unwrap();
        assert_eq!(fin.tip_index(), 2);
        let straight = open(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
        ]);
        assert!(FinContour::new(straight).is_err());
    }

    #[test]
    fn tip_must_be_interior() {
        let c = open(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 0.0),
        ]);
        assert!(FinContour::with_tip(c.clone(), 0).is_err());
        assert!(FinContour::with_tip(c.clone(), 2).is_err());
        assert!(FinContour::with_tip(c, 1).is_ok());
    }

    #[test]
    fn subsection_count_is_pairs_of_keypoints() {
        let fin = FinContour::new(zigzag(5)).unwrap();
        let cfg = EncodeConfig::default();
        let prepared = PreparedFin::new(&fin, &cfg).unwrap();
        let set = generate_subsections(&prepared, &cfg);
        let k = set.keypoints.len();
        assert_eq!(set.subsections.len(), k * (k - 1) / 2);
        assert!(set.keypoints.contains(&0) && set.keypoints.contains(&1023));
        let full = set
            .subsections
            .iter()
            .find(|s| s.start_kp == 0 && s.end_kp == 1023)
            .unwrap();
        assert_eq!(full.p, 1.0);
    }

    #[test]
    fn ten_interior_maxima_give_66_subsections() {
        // 15 interior corners available, 10 kept.
        let fin = FinContour::new(zigzag(8)).unwrap();
        let cfg = EncodeConfig {
            interior_keypoints: 10,
            ..EncodeConfig::default()
        };
        let prepared = PreparedFin::new(&fin, &cfg).unwrap();
        let set = generate_subsections(&prepared, &cfg);
        assert_eq!(set.keypoints.len(), 12);
        assert_eq!(set.subsections.len(), 66);
    }

    #[test]
    fn straight_subsection_dogn_is_degenerate() {
        let fin = line_fin();
        let d = encode_dogn(&sub(100, 700), &fin, &EncodeConfig::default()).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|d| d.degenerate));
    }

    #[test]
    fn straight_subsection_normals_point_up() {
        let fin = line_fin();
        let d = encode_normal(&sub(10, 900), &fin, &EncodeConfig::default()).unwrap();
        let v = &d[0].vector;
        assert!(v[..256].iter().all(|x| x.abs() < 1e-12));
        assert!(v[256..].iter().all(|y| (y - 1.0 / 16.0).abs() < 1e-12));
        // Same after reversing: alignment maps the new start to the origin.
        let rev = Subsection {
            direction: Direction::Reverse,
            ..sub(10, 900)
        };
        let d = encode_normal(&rev, &fin, &EncodeConfig::default()).unwrap();
        assert!(d[0].vector[256..]
            .iter()
            .all(|y| (y - 1.0 / 16.0).abs() < 1e-12));
    }

    #[test]
    fn semicircle_normals_match_analytic_arc() {
        // Upper half circle traversed clockwise from (-r, 0) to (r, 0); the
        // left normal is the outward radial direction.
        let r = 100.0;
        let pts: Vec<Point> = (0..=2000)
            .map(|i| {
                let t = std::f64::consts::PI * (1.0 - i as f64 / 2000.0);
                Point::new(r * t.cos(), r * t.sin())
            })
            .collect();
        let fin = PreparedFin {
            resampled: resample(&open(pts), 1024).unwrap(),
            tip_proportion: 0.5,
        };
        let cfg = EncodeConfig {
            scales: vec![1.0],
            ..EncodeConfig::default()
        };
        let d = &encode_normal(&sub(0, 1023), &fin, &cfg).unwrap()[0];
        let n = 256;
        let mut expected = vec![0.0; 2 * n];
        for i in 0..n {
            let t = std::f64::consts::PI * (1.0 - i as f64 / (n - 1) as f64);
            expected[i] = t.cos();
            expected[n + i] = t.sin();
        }
        let norm = expected.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, e) in d.vector.iter().zip(&expected) {
            assert!((a - e / norm).abs() < 1e-3, "{a} vs {}", e / norm);
        }
    }

    #[test]
    fn descriptors_are_similarity_invariant() {
        let base = FinContour::new(zigzag(4)).unwrap();
        let moved =
            FinContour::new(base.curve().transformed(0.7, 2.5, Point::new(-40.0, 13.0))).unwrap();
        let cfg = EncodeConfig::default();
        let a = PreparedFin::new(&base, &cfg).unwrap();
        let b = PreparedFin::new(&moved, &cfg).unwrap();
        let set = generate_subsections(&a, &cfg);
        assert_eq!(set, generate_subsections(&b, &cfg));
        for s in set.subsections.iter().step_by(3) {
            for (x, y) in encode_dogn(s, &a, &cfg)
                .unwrap()
                .iter()
                .chain(&encode_normal(s, &a, &cfg).unwrap())
                .zip(
                    encode_dogn(s, &b, &cfg)
                        .unwrap()
                        .iter()
                        .chain(&encode_normal(s, &b, &cfg).unwrap()),
                )
            {
                let d = x
                    .vector
                    .iter()
                    .zip(&y.vector)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max);
                assert!(d < 1e-6, "{d}");
            }
        }
    }

    #[test]
    fn reference_encoding_doubles_query() {
        let fin = FinContour::new(zigzag(4)).unwrap();
        let cfg = EncodeConfig {
            interior_keypoints: 6,
            ..EncodeConfig::default()
        };
        let q = encode_fin(&fin, Role::Query, &cfg).unwrap();
        let r = encode_fin(&fin, Role::Reference, &cfg).unwrap();
        assert_eq!(r.descriptors.len(), 2 * q.descriptors.len());
        let subs = q.keypoints.len() * (q.keypoints.len() - 1) / 2;
        assert!(q.descriptors.len() + q.degenerate == subs * 8);
        for d in &r.descriptors {
            let n: f64 = d.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
        let again = encode_fin(&fin, Role::Reference, &cfg).unwrap();
        assert_eq!(r, again);
    }
}
