//! Fin space: descriptors indexed by type, spatial extent on the fin and
//! global filter scale, and the reliability model learned over sum-pooled
//! local match scores in that space.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::{DescriptorType, EncodeConfig, Subsection};
use crate::ensemble::{Forest, Targets, TrainConfig};
use crate::error::{Error, Result};
use crate::lnbnn::{IdentityIndex, QueryMatches, RankedResult};
use crate::metrics::average_precision;

/// Partition boundaries (as arc-length fractions) of a fin contour: `n`
/// equal partitions on the leading edge, `n` on the trailing edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePartitioning {
    pub boundaries: Vec<f64>,
}

impl EdgePartitioning {
    pub fn new(tip_proportion: f64, per_edge: usize) -> Result<Self> {
        if !(tip_proportion > 0.0 && tip_proportion < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tip proportion {tip_proportion} not in (0, 1)"
            )));
        }
        if per_edge == 0 {
            return Err(Error::InvalidParameter("per_edge must be >= 1".into()));
        }
        let mut boundaries = Vec::with_capacity(2 * per_edge + 1);
        for k in 0..per_edge {
            boundaries.push(tip_proportion * k as f64 / per_edge as f64);
        }
        for k in 0..per_edge {
            boundaries.push(tip_proportion + (1.0 - tip_proportion) * k as f64 / per_edge as f64);
        }
        boundaries.push(1.0);
        Ok(Self { boundaries })
    }

    pub fn partitions(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Interval `[i, j]` (1-based, inclusive) of partitions covered by more
    /// than half by the arc `[a, b]`; `None` if no partition qualifies.
    pub fn occupied(&self, a: f64, b: f64) -> Option<(usize, usize)> {
        let mut first = None;
        let mut last = 0;
        for k in 0..self.partitions() {
            let (lo, hi) = (self.boundaries[k], self.boundaries[k + 1]);
            let cover = (b.min(hi) - a.max(lo)).max(0.0);
            if cover > 0.5 * (hi - lo) {
                if first.is_none() {
                    first = Some(k + 1);
                } else {
                    assert_eq!(last, k, "occupied partitions must be contiguous");
                }
                last = k + 1;
            }
        }
        first.map(|i| (i, last))
    }
}

/// Index of the contiguous partition interval `[i, j]` out of `n`
/// partitions (1-based, `i <= j`).
pub fn spatial_bin_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(1 <= i && i <= j && j <= n);
    (i - 1) * n - (i - 1) * (i.saturating_sub(2)) / 2 + (j - i)
}

/// Inverse of [`spatial_bin_index`].
pub fn spatial_bin_interval(idx: usize, n: usize) -> (usize, usize) {
    let mut rest = idx;
    for i in 1..=n {
        let row = n - i + 1;
        if rest < row {
            return (i, i + rest);
        }
        rest -= row;
    }
    panic!("spatial bin {idx} out of range for {n} partitions");
}

/// Global filter scale of a descriptor: its scale relative to the whole fin.
pub fn sigma_global(sigma_j: f64, l_n: usize, p: f64) -> f64 {
    sigma_j / l_n as f64 * p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinSpaceConfig {
    pub partitions_per_edge: usize,
    /// Scale-bin edges; bin `k` is `(edges[k], edges[k+1]]`, values outside
    /// the range are clamped to the end bins.
    pub scale_edges: Vec<f64>,
}

impl FinSpaceConfig {
    pub const SCALE_BINS: usize = 5;
    pub const PARTITIONS_PER_EDGE: usize = 5;

    /// Log-spaced scale bins over the attainable global scale range of an
    /// encoder configuration.
    pub fn for_encoding(cfg: &EncodeConfig) -> Self {
        let smin = cfg.scales.iter().copied().fold(f64::INFINITY, f64::min);
        let smax = cfg.scales.iter().copied().fold(0.0, f64::max);
        let pmin = 1.0 / (cfg.contour.resample_len - 1) as f64;
        let lo = sigma_global(smin, cfg.descriptor_len, pmin).ln();
        let hi = sigma_global(smax, cfg.descriptor_len, 1.0).ln();
        let n = Self::SCALE_BINS;
        let scale_edges = (0..=n)
            .map(|k| (lo + (hi - lo) * k as f64 / n as f64).exp())
            .collect();
        Self {
            partitions_per_edge: Self::PARTITIONS_PER_EDGE,
            scale_edges,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.partitions_per_edge == 0 || self.scale_edges.len() < 2 {
            return Err(Error::InvalidParameter(
                "empty fin-space configuration".into(),
            ));
        }
        if self.scale_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("scale edges must increase".into()));
        }
        Ok(())
    }

    pub fn partitions(&self) -> usize {
        2 * self.partitions_per_edge
    }

    pub fn spatial_bins(&self) -> usize {
        let n = self.partitions();
        n * (n + 1) / 2
    }

    pub fn scale_bins(&self) -> usize {
        self.scale_edges.len() - 1
    }

    pub fn dim(&self) -> usize {
        DescriptorType::ALL.len() * self.spatial_bins() * self.scale_bins()
    }

    pub fn scale_bin(&self, sigma_g: f64) -> usize {
        let inner = &self.scale_edges[1..self.scale_edges.len() - 1];
        inner.iter().take_while(|&&e| sigma_g > e).count()
    }

    pub fn flat_index(&self, c: &FinSpaceCoordinate) -> usize {
        (c.dtype.index() * self.spatial_bins() + c.spatial_bin as usize) * self.scale_bins()
            + c.scale_bin as usize
    }

    pub fn coordinate_of(&self, flat: usize) -> FinSpaceCoordinate {
        let scale_bin = flat % self.scale_bins();
        let rest = flat / self.scale_bins();
        FinSpaceCoordinate {
            dtype: DescriptorType::ALL[rest / self.spatial_bins()],
            spatial_bin: (rest % self.spatial_bins()) as u16,
            scale_bin: scale_bin as u16,
        }
    }

    /// Coordinate of a descriptor of subsection `sub` at filter scale
    /// `sigma` on a fin with the given tip position; `None` if the
    /// subsection occupies no partition.
    pub fn coordinate(
        &self,
        dtype: DescriptorType,
        sub: &Subsection,
        sigma: f64,
        tip_proportion: f64,
        encode: &EncodeConfig,
    ) -> Result<Option<FinSpaceCoordinate>> {
        let part = EdgePartitioning::new(tip_proportion, self.partitions_per_edge)?;
        Ok(
            assign_spatial_bin(sub, &part, encode.contour.resample_len).map(|spatial| {
                FinSpaceCoordinate {
                    dtype,
                    spatial_bin: spatial as u16,
                    scale_bin: self.scale_bin(sigma_global(sigma, encode.descriptor_len, sub.p))
                        as u16,
                }
            }),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FinSpaceCoordinate {
    pub dtype: DescriptorType,
    pub spatial_bin: u16,
    pub scale_bin: u16,
}

/// Spatial bin of a subsection of a contour resampled to `samples` points.
pub fn assign_spatial_bin(
    sub: &Subsection,
    part: &EdgePartitioning,
    samples: usize,
) -> Option<usize> {
    let last = (samples - 1) as f64;
    part.occupied(sub.start_kp as f64 / last, sub.end_kp as f64 / last)
        .map(|(i, j)| spatial_bin_index(i, j, part.partitions()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringVector {
    pub class: u32,
    pub values: Vec<f64>,
    /// Set when the class has no reference descriptors.
    pub flag: Option<String>,
}

/// Sum-pools the local match scores of a query against `class` into fin
/// space, at the coordinates of the matched reference descriptors.
pub fn build_scoring_vector(
    matches: &QueryMatches,
    class: u32,
    index: &IdentityIndex,
) -> ScoringVector {
    let cfg = index.finspace();
    let mut values = vec![0.0; cfg.dim()];
    let Some(ord) = index.class_ordinal(class) else {
        return ScoringVector {
            class,
            values,
            flag: Some(format!("class {class} not in index")),
        };
    };
    for m in &matches.descriptors {
        let rec = m.local_score(ord);
        if rec.f > 0.0 {
            if let Some(coord) = rec.matched_ref.and_then(|r| index.reference(r).coordinate) {
                values[cfg.flat_index(&coord)] += rec.f;
            }
        }
    }
    ScoringVector {
        class,
        values,
        flag: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityConfig {
    pub forest: TrainConfig,
    /// Negative classes sampled per training query.
    pub negatives_per_query: usize,
    pub seed: u64,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        Self {
            forest: TrainConfig::classification_default(),
            negatives_per_query: 5,
            seed: 0,
        }
    }
}

/// Forest over scoring vectors predicting whether a query shows the
/// candidate individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityModel {
    pub finspace: FinSpaceConfig,
    pub forest: Forest,
}

/// Class output of the forest meaning "same individual".
pub const SAME: usize = 1;

impl ReliabilityModel {
    pub fn p_same(&self, v: &ScoringVector) -> Result<f64> {
        Ok(self.forest.predict_proba(&v.values)?[SAME])
    }
}

/// A query with its precomputed matches and ground-truth class.
pub struct LabelledQuery<'a> {
    pub matches: &'a QueryMatches,
    pub class: u32,
}

fn training_set(
    queries: &[&LabelledQuery],
    index: &IdentityIndex,
    negatives: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for q in queries {
        let mut others: Vec<u32> = index
            .classes()
            .iter()
            .copied()
            .filter(|&c| c != q.class)
            .collect();
        others.shuffle(rng);
        others.truncate(negatives);
        x.push(build_scoring_vector(q.matches, q.class, index).values);
        y.push(SAME);
        for c in others {
            x.push(build_scoring_vector(q.matches, c, index).values);
            y.push(1 - SAME);
        }
    }
    (x, y)
}

fn fit(
    x: &[Vec<f64>],
    y: Vec<usize>,
    cfg: &TrainConfig,
    finspace: &FinSpaceConfig,
) -> Result<ReliabilityModel> {
    let forest = Forest::train(
        x,
        &Targets::Classification {
            labels: y,
            n_classes: 2,
        },
        cfg,
    )?;
    Ok(ReliabilityModel {
        finspace: finspace.clone(),
        forest,
    })
}

#[derive(Debug, Clone)]
pub struct ReliabilityOutcome {
    /// Trained on every query; used for deployment.
    pub model: ReliabilityModel,
    /// Individuals of each cross-validation fold (sorted).
    pub folds: [Vec<u32>; 2],
    /// Held-out ranking per input query, in input order.
    pub held_out: Vec<RankedResult>,
}

/// Two-fold cross-validation split by individual. Each fold's forest is
/// trained on the queries of its own individuals and ranks the queries of
/// the other fold.
pub fn train_reliability_model(
    queries: &[LabelledQuery],
    index: &IdentityIndex,
    cfg: &ReliabilityConfig,
) -> Result<ReliabilityOutcome> {
    let mut individuals: Vec<u32> = queries.iter().map(|q| q.class).collect();
    individuals.sort_unstable();
    individuals.dedup();
    if individuals.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "reliability training needs >= 4 individuals, got {}",
            individuals.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    individuals.shuffle(&mut rng);
    let half = individuals.len() / 2;
    let mut folds = [individuals[..half].to_vec(), individuals[half..].to_vec()];
    folds.iter_mut().for_each(|f| f.sort_unstable());
    let fold_of = |c: u32| usize::from(folds[0].binary_search(&c).is_err());

    let mut models = Vec::with_capacity(2);
    for (k, fold) in folds.iter().enumerate() {
        let own: Vec<&LabelledQuery> = queries.iter().filter(|q| fold_of(q.class) == k).collect();
        let (x, y) = training_set(&own, index, cfg.negatives_per_query, &mut rng);
        if !y.contains(&SAME) || !y.contains(&(1 - SAME)) {
            return Err(Error::InsufficientData(format!(
                "fold {k} ({} individuals) lacks both labels",
                fold.len()
            )));
        }
        models.push(fit(&x, y, &cfg.forest, &index.finspace().clone())?);
    }
    let all: Vec<&LabelledQuery> = queries.iter().collect();
    let (x, y) = training_set(&all, index, cfg.negatives_per_query, &mut rng);
    let model = fit(&x, y, &cfg.forest, index.finspace())?;

    let held_out = queries
        .iter()
        .map(|q| rank_identities(q.matches, index, &models[1 - fold_of(q.class)]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReliabilityOutcome {
        model,
        folds,
        held_out,
    })
}

/// Ranks every indexed class by predicted probability of being the query's
/// individual; ties fall back to the baseline total over both descriptor
/// families.
pub fn rank_identities(
    matches: &QueryMatches,
    index: &IdentityIndex,
    model: &ReliabilityModel,
) -> Result<RankedResult> {
    if &model.finspace != index.finspace() {
        return Err(Error::ConfigMismatch(
            "model fin-space configuration differs from the index".into(),
        ));
    }
    let baseline = index.class_totals(
        matches,
        &crate::lnbnn::ClassifyOptions::both_families(index.n_scales()),
    );
    let scored = index
        .classes()
        .par_iter()
        .map(|&c| model.p_same(&build_scoring_vector(matches, c, index)))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .total_cmp(&scored[a])
            .then(baseline[b].total_cmp(&baseline[a]))
            .then(index.classes()[a].cmp(&index.classes()[b]))
    });
    Ok(RankedResult {
        entries: order
            .into_iter()
            .map(|i| (index.classes()[i], scored[i]))
            .collect(),
        flag: matches.flag.clone(),
    })
}

/// Discriminative power of each fin-space bin: AP of ranking held-out
/// (query, class) pairs by that bin's pooled score alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStatistic {
    pub coordinate: FinSpaceCoordinate,
    pub interval: (usize, usize),
    pub ap: f64,
}

pub fn per_bin_ap(queries: &[LabelledQuery], index: &IdentityIndex) -> Vec<BinStatistic> {
    let cfg = index.finspace();
    let rows: Vec<(Vec<f64>, bool)> = queries
        .iter()
        .flat_map(|q| {
            index.classes().iter().map(move |&c| {
                (
                    build_scoring_vector(q.matches, c, index).values,
                    c == q.class,
                )
            })
        })
        .collect();
    let positives = rows.iter().filter(|r| r.1).count();
    (0..cfg.dim())
        .map(|b| {
            let scored: Vec<(f64, bool)> = rows.iter().map(|(v, t)| (v[b], *t)).collect();
            let coordinate = cfg.coordinate_of(b);
            BinStatistic {
                coordinate,
                interval: spatial_bin_interval(coordinate.spatial_bin as usize, cfg.partitions()),
                ap: average_precision(&scored, positives),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stroke::Direction;

    fn sub(a: usize, b: usize) -> Subsection {
        Subsection {
            start_kp: a,
            end_kp: b,
            p: (b - a) as f64 / 1023.0,
            direction: Direction::Forward,
        }
    }

    #[test]
    fn spatial_index_is_a_bijection() {
        let n = 10;
        let mut seen = [false; 55];
        for i in 1..=n {
            for j in i..=n {
                let k = spatial_bin_index(i, j, n);
                assert!(!seen[k]);
                seen[k] = true;
                assert_eq!(spatial_bin_interval(k, n), (i, j));
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(spatial_bin_index(1, 10, 10), 9);
        assert_eq!(spatial_bin_index(10, 10, 10), 54);
    }

    #[test]
    fn partitions_split_at_tip() {
        let p = EdgePartitioning::new(0.4, 5).unwrap();
        assert_eq!(p.partitions(), 10);
        assert!((p.boundaries[5] - 0.4).abs() < 1e-15);
        assert!((p.boundaries[1] - 0.08).abs() < 1e-15);
        assert!((p.boundaries[6] - 0.52).abs() < 1e-15);
        assert_eq!(p.boundaries[10], 1.0);
    }

    #[test]
    fn occupancy_rules() {
        let p = EdgePartitioning::new(0.5, 5).unwrap();
        // Partitions 2..4 exactly.
        assert_eq!(p.occupied(0.1, 0.4), Some((2, 4)));
        // 40% of partition 5 only.
        assert_eq!(p.occupied(0.4, 0.44), None);
        assert_eq!(p.occupied(0.0, 1.0), Some((1, 10)));
        let full = assign_spatial_bin(&sub(0, 1023), &p, 1024).unwrap();
        assert_eq!(full, spatial_bin_index(1, 10, 10));
        // Spanning the tip is allowed.
        assert_eq!(p.occupied(0.36, 0.64), Some((5, 6)));
        assert_eq!(p.occupied(0.29, 0.71), Some((4, 7)));
    }

    #[test]
    fn sigma_global_values() {
        assert_eq!(sigma_global(4.0, 256, 0.5), 0.0078125);
        assert_eq!(
            sigma_global(1.0, 256, 0.6),
            2.0 * sigma_global(1.0, 256, 0.3)
        );
        assert_eq!(sigma_global(8.0, 256, 1.0), 0.03125);
    }

    #[test]
    fn default_space_has_550_dims() {
        let cfg = FinSpaceConfig::for_encoding(&EncodeConfig::default());
        assert_eq!(cfg.spatial_bins(), 55);
        assert_eq!(cfg.scale_bins(), 5);
        assert_eq!(cfg.dim(), 550);
        cfg.validate().unwrap();
        assert_eq!(cfg.scale_bin(0.0), 0);
        assert_eq!(cfg.scale_bin(0.03125), 4);
        assert_eq!(cfg.scale_bin(1.0), 4);
        for flat in 0..550 {
            assert_eq!(cfg.flat_index(&cfg.coordinate_of(flat)), flat);
        }
    }
}
