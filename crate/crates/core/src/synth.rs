//! Deterministic synthetic fin populations.
//!
//! An individual is a smooth fin outline (two cubic Bezier edges meeting at
//! the tip) whose trailing edge carries a personal signature of Gaussian
//! notches. Observations apply occlusion from the leading-edge end, point
//! jitter, rotation and scaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{resample, PlanarCurve, Point};
use crate::encode::{FinContour, Role};
use crate::error::{Error, Result};
use crate::stroke::{left_normals, RegionContour};

/// Shape variation across a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    /// Half-width in pixels of the uniform jitter of Bezier control points.
    pub shape_jitter: f64,
    pub min_jags: usize,
    pub max_jags: usize,
    /// Notch depth range in pixels.
    pub jag_depth: (f64, f64),
    /// Notch width range in pixels.
    pub jag_width: (f64, f64),
    /// Minimum trailing-edge Hausdorff distance between two individuals.
    pub min_separation: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            shape_jitter: 10.0,
            min_jags: 4,
            max_jags: 8,
            jag_depth: (2.0, 8.0),
            jag_width: (2.0, 6.0),
            min_separation: 2.0,
        }
    }
}

const EDGE_SAMPLES: usize = 180;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jag {
    /// Position along the trailing edge as a fraction of its length.
    pub position: f64,
    /// Notch depth in pixels.
    pub depth: f64,
    /// Gaussian width in pixels of arc length.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticIndividual {
    pub id: u32,
    /// Bezier control points, base to tip.
    pub leading: [Point; 4],
    /// Bezier control points, tip to base.
    pub trailing: [Point; 4],
    pub jags: Vec<Jag>,
}

fn bezier(c: &[Point; 4], n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            let u = 1.0 - t;
            let w = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
            Point::new(
                w.iter().zip(c).map(|(w, p)| w * p.x).sum(),
                w.iter().zip(c).map(|(w, p)| w * p.y).sum(),
            )
        })
        .collect()
}

impl SyntheticIndividual {
    fn random(id: u32, cfg: &PopulationConfig, rng: &mut ChaCha8Rng) -> Self {
        let r = cfg.shape_jitter;
        let mut j = |x: f64, y: f64, k: f64| {
            if r > 0.0 {
                Point::new(
                    x + rng.gen_range(-k * r..k * r),
                    y + rng.gen_range(-k * r..k * r),
                )
            } else {
                Point::new(x, y)
            }
        };
        let tip = j(150.0, 220.0, 1.5);
        let leading = [
            Point::new(0.0, 0.0),
            j(30.0, 110.0, 1.0),
            j(80.0, 200.0, 1.0),
            tip,
        ];
        let trailing = [
            tip,
            j(135.0, 150.0, 1.0),
            j(150.0, 60.0, 1.0),
            j(200.0, 0.0, 0.8),
        ];
        let n_jags = rng.gen_range(cfg.min_jags..=cfg.max_jags);
        let mut jags: Vec<Jag> = (0..n_jags)
            .map(|_| Jag {
                position: rng.gen_range(0.08..0.92),
                depth: rng.gen_range(cfg.jag_depth.0..=cfg.jag_depth.1),
                width: rng.gen_range(cfg.jag_width.0..=cfg.jag_width.1),
            })
            .collect();
        jags.sort_by(|a, b| a.position.total_cmp(&b.position));
        Self {
            id,
            leading,
            trailing,
            jags,
        }
    }

    /// Trailing edge from tip to base with the notch signature applied.
    pub fn trailing_edge(&self) -> Vec<Point> {
        let smooth = PlanarCurve::from_raw(bezier(&self.trailing, 400), false);
        let edge = resample(&smooth, EDGE_SAMPLES).expect("non-degenerate edge");
        let len = edge.length();
        let normals = left_normals(&edge.xs(), &edge.ys());
        let step = len / (EDGE_SAMPLES - 1) as f64;
        edge.points()
            .iter()
            .zip(normals)
            .enumerate()
            .map(|(i, (p, (nx, ny)))| {
                let s = i as f64 * step;
                let d: f64 = self
                    .jags
                    .iter()
                    .map(|j| {
                        let z = (s - j.position * len) / j.width;
                        j.depth * (-0.5 * z * z).exp()
                    })
                    .sum();
                // Left of the downward trailing edge is outside the fin.
                Point::new(p.x - d * nx, p.y - d * ny)
            })
            .collect()
    }

    pub fn leading_edge(&self) -> Vec<Point> {
        let smooth = PlanarCurve::from_raw(bezier(&self.leading, 400), false);
        resample(&smooth, EDGE_SAMPLES)
            .expect("non-degenerate edge")
            .into_points()
    }

    /// Canonical outline from the leading-edge base to the trailing-edge
    /// base.
    pub fn base_curve(&self) -> PlanarCurve {
        let mut pts = self.leading_edge();
        pts.pop();
        pts.extend(self.trailing_edge());
        PlanarCurve::from_raw(pts, false)
    }

    pub fn base_contour(&self) -> Result<FinContour> {
        FinContour::new(self.base_curve())
    }
}

/// Symmetric Hausdorff distance between point sets.
pub fn hausdorff(a: &[Point], b: &[Point]) -> f64 {
    let directed = |a: &[Point], b: &[Point]| {
        a.iter()
            .map(|p| b.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// `n` individuals with the default shape variation.
pub fn generate_population(n: usize, seed: u64) -> Result<Vec<SyntheticIndividual>> {
    generate_population_with(n, seed, &PopulationConfig::default())
}

/// `n` individuals with pairwise trailing-edge Hausdorff distances above
/// `cfg.min_separation`.
pub fn generate_population_with(
    n: usize,
    seed: u64,
    cfg: &PopulationConfig,
) -> Result<Vec<SyntheticIndividual>> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "population needs >= 2 individuals".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<SyntheticIndividual> = Vec::with_capacity(n);
    let mut edges: Vec<Vec<Point>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 100 * n {
            return Err(Error::InsufficientData(
                "could not place well separated individuals".into(),
            ));
        }
        let ind = SyntheticIndividual::random(out.len() as u32, cfg, &mut rng);
        let edge = ind.trailing_edge();
        if edges
            .iter()
            .all(|e| hausdorff(e, &edge) > cfg.min_separation)
        {
            edges.push(edge);
            out.push(ind);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub rotation: f64,
    pub scale: f64,
    /// Per-point jitter std as a fraction of contour length.
    pub noise: f64,
    /// Fraction of the contour removed from the leading-edge end.
    pub occlusion: f64,
    pub seed: u64,
}

impl PerturbationConfig {
    pub const IDENTITY: PerturbationConfig = PerturbationConfig {
        rotation: 0.0,
        scale: 1.0,
        noise: 0.0,
        occlusion: 0.0,
        seed: 0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.occlusion >= 0.0 && self.occlusion < 0.75) {
            return Err(Error::InvalidParameter(format!(
                "occlusion {} not in [0, 0.75)",
                self.occlusion
            )));
        }
        if !(self.scale > 0.0) || !(self.noise >= 0.0) || !self.rotation.is_finite() {
            return Err(Error::InvalidParameter("invalid perturbation".into()));
        }
        Ok(())
    }
}

pub fn render_observation(
    ind: &SyntheticIndividual,
    cfg: &PerturbationConfig,
) -> Result<FinContour> {
    cfg.validate()?;
    let base = ind.base_curve();
    let total = base.length();
    let mut curve = base.clone();
    if cfg.occlusion > 0.0 {
        let tip_arc = base.cumulative_lengths()[EDGE_SAMPLES - 1];
        let cut = cfg.occlusion * total;
        if cut >= tip_arc {
            return Err(Error::InvalidObservation(format!(
                "occlusion {} removes the fin tip",
                cfg.occlusion
            )));
        }
        curve = base.sub_arc(cut, total)?;
    }
    if cfg.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let std = cfg.noise * total;
        let pts = curve
            .points()
            .iter()
            .map(|p| {
                let (a, b) = gaussian_pair(&mut rng);
                Point::new(p.x + std * a, p.y + std * b)
            })
            .collect();
        curve = PlanarCurve::from_points_dedup(pts, false)?;
    }
    if cfg.rotation != 0.0 || cfg.scale != 1.0 {
        curve = curve.transformed(cfg.rotation, cfg.scale, Point::default());
    }
    FinContour::new(curve)
        .map_err(|e| Error::InvalidObservation(format!("tip not recoverable: {e}")))
}

/// Two independent standard normal draws (Box-Muller).
fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let t = std::f64::consts::TAU * u2;
    (r * t.cos(), r * t.sin())
}

/// Bounds from which perturbations are drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRanges {
    pub max_rotation: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    pub max_noise: f64,
    pub max_occlusion: f64,
}

impl PerturbationRanges {
    pub const NONE: PerturbationRanges = PerturbationRanges {
        max_rotation: 0.0,
        min_scale: 1.0,
        max_scale: 1.0,
        max_noise: 0.0,
        max_occlusion: 0.0,
    };

    /// Up to 15 degrees, +-25% scale, 0.3% jitter and 20% occlusion.
    pub fn mild() -> Self {
        Self {
            max_rotation: 15f64.to_radians(),
            min_scale: 0.8,
            max_scale: 1.25,
            max_noise: 0.003,
            max_occlusion: 0.2,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> PerturbationConfig {
        let mut uniform = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        PerturbationConfig {
            rotation: uniform(-self.max_rotation, self.max_rotation),
            scale: uniform(self.min_scale, self.max_scale),
            noise: uniform(0.0, self.max_noise),
            occlusion: uniform(0.0, self.max_occlusion),
            seed: rng.gen(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub class: u32,
    pub role: Role,
    pub perturbation: PerturbationConfig,
    pub fin: FinContour,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn references(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(|e| e.role == Role::Reference)
    }

    pub fn queries(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(|e| e.role == Role::Query)
    }
}

/// One unperturbed reference plus `per_individual - 1` perturbed queries
/// for every individual.
pub fn generate_dataset(
    population: &[SyntheticIndividual],
    per_individual: usize,
    ranges: &PerturbationRanges,
    seed: u64,
) -> Result<Dataset> {
    if per_individual < 2 {
        return Err(Error::InvalidParameter(
            "per_individual must be >= 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(population.len() * per_individual);
    for ind in population {
        entries.push(DatasetEntry {
            name: format!("ind{:03}_ref", ind.id),
            class: ind.id,
            role: Role::Reference,
            perturbation: PerturbationConfig::IDENTITY,
            fin: ind.base_contour()?,
        });
        for q in 1..per_individual {
            let p = ranges.sample(&mut rng);
            entries.push(DatasetEntry {
                name: format!("ind{:03}_q{:02}", ind.id, q),
                class: ind.id,
                role: Role::Query,
                perturbation: p,
                fin: render_observation(ind, &p)?,
            });
        }
    }
    Ok(Dataset { seed, entries })
}

fn ellipse(
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    wobble: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> PlanarCurve {
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let pts = (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            let r = 1.0 + wobble * (3.0 * t + phase).sin();
            Point::new(cx + a * r * t.cos(), cy + b * r * t.sin())
        })
        .collect();
    PlanarCurve::from_raw(pts, true)
}

/// Closed region candidates around one fin, as a segmentation hierarchy
/// might propose them, and the true fin contour.
///
/// The fin region continues into a synthetic body below the fin base;
/// distractor blobs, tiny regions and near-duplicates of the fin region
/// are mixed in.
pub fn region_pool(
    ind: &SyntheticIndividual,
    seed: u64,
) -> Result<(Vec<RegionContour>, PlanarCurve)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fin = ind.base_curve();
    let pts = fin.points();
    let (start, end) = (pts[0], *pts.last().unwrap());
    let mid = Point::new(0.5 * (start.x + end.x), 0.5 * (start.y + end.y));
    let half = 0.5 * start.dist(end) + 120.0;
    // Body arc from the trailing base round underneath to the leading base.
    let mut body = Vec::new();
    let n_body = 120;
    for i in 1..n_body {
        let t = std::f64::consts::PI * i as f64 / n_body as f64;
        let bulge = Point::new(mid.x + half * t.cos(), mid.y - 70.0 * t.sin());
        // Blend so the arc starts at the trailing base and ends at the
        // leading base.
        let w = i as f64 / n_body as f64;
        let anchor = end.lerp(start, w);
        let fade = (std::f64::consts::PI * w).sin();
        body.push(anchor.lerp(bulge, fade));
    }
    let mut whole = pts.to_vec();
    whole.extend(body);
    let whole = PlanarCurve::new(whole, true)?;

    let mut regions = vec![RegionContour::new(whole.clone(), 0)?];
    // Fin closed along its base chord.
    regions.push(RegionContour::new(
        PlanarCurve::new(pts.to_vec(), true)?,
        1,
    )?);
    for r in 0..3 {
        let jitter: Vec<Point> = whole
            .points()
            .iter()
            .map(|p| {
                Point::new(
                    p.x + rng.gen_range(-0.3..0.3),
                    p.y + rng.gen_range(-0.3..0.3),
                )
            })
            .collect();
        regions.push(RegionContour::new(PlanarCurve::new(jitter, true)?, 2 + r)?);
    }
    for r in 0..8 {
        let cx = rng.gen_range(-300.0..500.0);
        let cy = rng.gen_range(-250.0..450.0);
        let a = rng.gen_range(25.0..120.0);
        let b = rng.gen_range(25.0..120.0);
        regions.push(RegionContour::new(
            ellipse(cx, cy, a, b, 0.15, 160, &mut rng),
            5 + r,
        )?);
    }
    for r in 0..4 {
        let cx = rng.gen_range(-200.0..400.0);
        let cy = rng.gen_range(-200.0..400.0);
        regions.push(RegionContour::new(
            ellipse(cx, cy, 5.0, 4.0, 0.0, 12, &mut rng),
            13 + r,
        )?);
    }
    Ok((regions, fin))
}
