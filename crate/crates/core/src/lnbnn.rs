//! Local naive-Bayes nearest-neighbour identification.
//!
//! Reference descriptors live in one flat sub-index per (descriptor type,
//! filter scale). A query descriptor is scanned once against its sub-index,
//! recording the nearest reference of every class; all per-class scores are
//! derived from that table. A descriptor contributes to class `c` the margin
//! by which its nearest neighbour in `c` beats the nearest neighbour outside
//! `c`, or nothing when it does not.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::{
    encode_fin, BiometricDescriptor, DescriptorType, EncodeConfig, EncodedFin, FinContour, Role,
    Subsection,
};
use crate::error::{Error, Result};
use crate::finspace::{FinSpaceConfig, FinSpaceCoordinate};
use crate::metrics::{pr_curve, PrCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFin {
    pub class: u32,
    pub tip_proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDescriptor {
    pub class: u32,
    /// Position of the source fin in [`IdentityIndex::fins`].
    pub fin: u32,
    pub dtype: DescriptorType,
    pub scale_index: u16,
    pub subsection: Subsection,
    pub coordinate: Option<FinSpaceCoordinate>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SubIndex {
    pub(crate) dim: usize,
    pub(crate) data: Vec<f64>,
    pub(crate) data32: Vec<f32>,
    pub(crate) class_ord: Vec<u32>,
    pub(crate) ref_ids: Vec<u32>,
}

impl SubIndex {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
            data32: Vec::new(),
            class_ord: Vec::new(),
            ref_ids: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.ref_ids.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Squared Euclidean distance, abandoning (and returning a value above
/// `bound`) once the partial sum exceeds `bound`.
#[inline]
fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut total = 0.0;
    for (ca, cb) in a.chunks(64).zip(b.chunks(64)) {
        let mut acc = [0.0f64; 8];
        let mut ia = ca.chunks_exact(8);
        let mut ib = cb.chunks_exact(8);
        for (x, y) in (&mut ia).zip(&mut ib) {
            for k in 0..8 {
                let d = x[k] - y[k];
                acc[k] += d * d;
            }
        }
        for (x, y) in ia.remainder().iter().zip(ib.remainder()) {
            acc[0] += (x - y) * (x - y);
        }
        total += ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
        if total > bound {
            return total;
        }
    }
    total
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist_bounded(a, b, f64::INFINITY)
}

#[inline]
fn sq_dist32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let mut ia = a.chunks_exact(8);
    let mut ib = b.chunks_exact(8);
    for (x, y) in (&mut ia).zip(&mut ib) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    for (x, y) in ia.remainder().iter().zip(ib.remainder()) {
        acc[0] += (x - y) * (x - y);
    }
    acc.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbour {
    pub dist: f64,
    pub ref_id: u32,
}

/// Nearest reference of every class for one query descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatches {
    pub query_descriptor: usize,
    pub dtype: DescriptorType,
    pub scale_index: usize,
    /// Indexed by class ordinal; `None` when the class has no descriptor
    /// in this sub-index.
    pub per_class: Vec<Option<Neighbour>>,
    first: Option<(usize, f64)>,
    second: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreFlag {
    ClassAbsent,
    NoOtherClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub query_descriptor: usize,
    pub class_ord: usize,
    pub delta_c: Option<f64>,
    pub delta_other: Option<f64>,
    pub f: f64,
    pub matched_ref: Option<u32>,
    pub flag: Option<ScoreFlag>,
}

/// Local score: the positive part of `delta_other - delta_c`.
pub fn lnbnn_margin(delta_c: f64, delta_other: f64) -> f64 {
    let f = delta_other - delta_c;
    if f > 0.0 {
        f
    } else {
        0.0
    }
}

impl DescriptorMatches {
    fn new(
        query_descriptor: usize,
        dtype: DescriptorType,
        scale_index: usize,
        per_class: Vec<Option<Neighbour>>,
    ) -> Self {
        let mut first: Option<(usize, f64)> = None;
        let mut second: Option<(usize, f64)> = None;
        for (c, n) in per_class.iter().enumerate() {
            let Some(n) = n else { continue };
            if first.is_none_or(|(_, d)| n.dist < d) {
                second = first;
                first = Some((c, n.dist));
            } else if second.is_none_or(|(_, d)| n.dist < d) {
                second = Some((c, n.dist));
            }
        }
        Self {
            query_descriptor,
            dtype,
            scale_index,
            per_class,
            first,
            second,
        }
    }

    /// Distance to the nearest reference outside class `ord`.
    pub fn nearest_other(&self, ord: usize) -> Option<f64> {
        match self.first {
            Some((c, _)) if c == ord => self.second.map(|s| s.1),
            f => f.map(|f| f.1),
        }
    }

    pub fn local_score(&self, ord: usize) -> MatchRecord {
        let nn = self.per_class.get(ord).copied().flatten();
        let other = self.nearest_other(ord);
        let (f, flag) = match (nn, other) {
            (None, _) => (0.0, Some(ScoreFlag::ClassAbsent)),
            (Some(_), None) => (0.0, Some(ScoreFlag::NoOtherClass)),
            (Some(n), Some(o)) => (lnbnn_margin(n.dist, o), None),
        };
        MatchRecord {
            query_descriptor: self.query_descriptor,
            class_ord: ord,
            delta_c: nn.map(|n| n.dist),
            delta_other: other,
            f,
            matched_ref: nn.map(|n| n.ref_id),
            flag,
        }
    }
}

/// Per-descriptor nearest-class tables of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMatches {
    pub descriptors: Vec<DescriptorMatches>,
    /// Set when the query produced no usable descriptors.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Weight per filter scale.
    pub weights: Vec<f64>,
    /// Descriptor families whose scores are summed.
    pub families: Vec<DescriptorType>,
}

impl ClassifyOptions {
    /// All scales weighted equally, DoG norm descriptors only.
    pub fn dogn(n_scales: usize) -> Self {
        Self {
            weights: vec![1.0; n_scales],
            families: vec![DescriptorType::DogN],
        }
    }

    pub fn both_families(n_scales: usize) -> Self {
        Self {
            weights: vec![1.0; n_scales],
            families: DescriptorType::ALL.to_vec(),
        }
    }

    pub fn single_scale(n_scales: usize, scale: usize, family: DescriptorType) -> Self {
        let mut weights = vec![0.0; n_scales];
        weights[scale] = 1.0;
        Self {
            weights,
            families: vec![family],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    /// `(class, score)`, best first.
    pub entries: Vec<(u32, f64)>,
    pub flag: Option<String>,
}

impl RankedResult {
    pub fn top(&self) -> Option<u32> {
        self.entries.first().map(|e| e.0)
    }

    pub fn score_of(&self, class: u32) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == class).map(|e| e.1)
    }
}

/// Ranks classes by score, highest first, ties by class id.
pub fn rank_scores(classes: &[u32], scores: &[f64]) -> Vec<(u32, f64)> {
    let mut entries: Vec<(u32, f64)> = classes
        .iter()
        .copied()
        .zip(scores.iter().copied())
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    entries
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityIndex {
    pub(crate) encode: EncodeConfig,
    pub(crate) finspace: FinSpaceConfig,
    pub(crate) exact_mode: bool,
    pub(crate) classes: Vec<u32>,
    pub(crate) fins: Vec<ReferenceFin>,
    pub(crate) refs: Vec<ReferenceDescriptor>,
    pub(crate) subs: Vec<SubIndex>,
}

impl IdentityIndex {
    /// Encodes every reference fin (both traversal directions) and indexes
    /// the descriptors under the given class labels.
    pub fn build(
        references: &[(FinContour, u32)],
        cfg: &EncodeConfig,
        exact_mode: bool,
    ) -> Result<Self> {
        let encoded = references
            .par_iter()
            .map(|(fin, class)| Ok((*class, encode_fin(fin, Role::Reference, cfg)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_encoded(encoded, cfg, exact_mode)
    }

    pub fn from_encoded(
        fins: Vec<(u32, EncodedFin)>,
        cfg: &EncodeConfig,
        exact_mode: bool,
    ) -> Result<Self> {
        let mut meta = Vec::with_capacity(fins.len());
        let mut descs = Vec::new();
        for (f, (class, enc)) in fins.into_iter().enumerate() {
            meta.push(ReferenceFin {
                class,
                tip_proportion: enc.tip_proportion,
            });
            descs.extend(enc.descriptors.into_iter().map(|d| (f as u32, d)));
        }
        Self::assemble(meta, descs, cfg, exact_mode)
    }

    /// Index over loose descriptors, each treated as coming from its own
    /// fin with the tip at mid-contour.
    pub fn from_descriptors(
        items: Vec<(u32, BiometricDescriptor)>,
        cfg: &EncodeConfig,
        exact_mode: bool,
    ) -> Result<Self> {
        let mut meta = Vec::with_capacity(items.len());
        let mut descs = Vec::with_capacity(items.len());
        for (f, (class, d)) in items.into_iter().enumerate() {
            meta.push(ReferenceFin {
                class,
                tip_proportion: 0.5,
            });
            descs.push((f as u32, d));
        }
        Self::assemble(meta, descs, cfg, exact_mode)
    }

    fn assemble(
        fins: Vec<ReferenceFin>,
        descs: Vec<(u32, BiometricDescriptor)>,
        cfg: &EncodeConfig,
        exact_mode: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let finspace = FinSpaceConfig::for_encoding(cfg);
        let mut classes: Vec<u32> = fins.iter().map(|f| f.class).collect();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "index needs >= 2 classes, got {}",
                classes.len()
            )));
        }
        let n_scales = cfg.scales.len();
        let mut subs: Vec<SubIndex> = DescriptorType::ALL
            .iter()
            .flat_map(|&t| (0..n_scales).map(move |_| t))
            .map(|t| SubIndex::new(cfg.dim(t)))
            .collect();
        let mut refs = Vec::with_capacity(descs.len());
        for (fin, d) in descs {
            if d.degenerate {
                continue;
            }
            if d.scale_index >= n_scales {
                return Err(Error::InvalidParameter(format!(
                    "scale index {} out of range",
                    d.scale_index
                )));
            }
            let s = d.dtype.index() * n_scales + d.scale_index;
            let sub = &mut subs[s];
            if d.vector.len() != sub.dim {
                return Err(Error::DimensionMismatch {
                    expected: sub.dim,
                    got: d.vector.len(),
                });
            }
            let class = fins[fin as usize].class;
            let coordinate = finspace.coordinate(
                d.dtype,
                &d.subsection,
                cfg.scales[d.scale_index],
                fins[fin as usize].tip_proportion,
                cfg,
            )?;
            let id = refs.len() as u32;
            sub.data.extend_from_slice(&d.vector);
            sub.class_ord
                .push(classes.binary_search(&class).unwrap() as u32);
            sub.ref_ids.push(id);
            refs.push(ReferenceDescriptor {
                class,
                fin,
                dtype: d.dtype,
                scale_index: d.scale_index as u16,
                subsection: d.subsection,
                coordinate,
            });
        }
        let mut index = Self {
            encode: cfg.clone(),
            finspace,
            exact_mode,
            classes,
            fins,
            refs,
            subs,
        };
        index.refresh_screening();
        Ok(index)
    }

    /// Replaces the fin-space layout and recomputes every reference
    /// coordinate.
    pub fn with_finspace(mut self, finspace: FinSpaceConfig) -> Result<Self> {
        finspace.validate()?;
        for r in &mut self.refs {
            r.coordinate = finspace.coordinate(
                r.dtype,
                &r.subsection,
                self.encode.scales[r.scale_index as usize],
                self.fins[r.fin as usize].tip_proportion,
                &self.encode,
            )?;
        }
        self.finspace = finspace;
        Ok(self)
    }

    /// Rebuilds the reduced-precision copy used by approximate search.
    pub(crate) fn refresh_screening(&mut self) {
        for s in &mut self.subs {
            s.data32 = if self.exact_mode {
                Vec::new()
            } else {
                s.data.iter().map(|&v| v as f32).collect()
            };
        }
    }

    pub fn set_exact_mode(&mut self, exact: bool) {
        self.exact_mode = exact;
        self.refresh_screening();
    }

    pub fn exact_mode(&self) -> bool {
        self.exact_mode
    }

    pub fn encode_config(&self) -> &EncodeConfig {
        &self.encode
    }

    pub fn finspace(&self) -> &FinSpaceConfig {
        &self.finspace
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn class_ordinal(&self, class: u32) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }

    pub fn fins(&self) -> &[ReferenceFin] {
        &self.fins
    }

    pub fn references(&self) -> &[ReferenceDescriptor] {
        &self.refs
    }

    pub fn reference(&self, id: u32) -> &ReferenceDescriptor {
        &self.refs[id as usize]
    }

    pub fn n_scales(&self) -> usize {
        self.encode.scales.len()
    }

    /// Stored vector of a reference descriptor.
    pub fn reference_vector(&self, id: u32) -> &[f64] {
        let r = &self.refs[id as usize];
        let sub = &self.subs[self.sub_of(r.dtype, r.scale_index as usize)];
        let pos = sub.ref_ids.binary_search(&id).unwrap();
        sub.row(pos)
    }

    fn sub_of(&self, dtype: DescriptorType, scale_index: usize) -> usize {
        dtype.index() * self.n_scales() + scale_index
    }

    fn nearest_per_class(&self, sub: &SubIndex, q: &[f64]) -> Vec<Option<Neighbour>> {
        let mut best: Vec<Option<Neighbour>> = vec![None; self.classes.len()];
        if self.exact_mode {
            for i in 0..sub.len() {
                let c = sub.class_ord[i] as usize;
                let bound = best[c].map_or(f64::INFINITY, |n| n.dist);
                let d = sq_dist_bounded(q, sub.row(i), bound);
                if d < bound {
                    best[c] = Some(Neighbour {
                        dist: d,
                        ref_id: sub.ref_ids[i],
                    });
                }
            }
        } else {
            let q32: Vec<f32> = q.iter().map(|&v| v as f32).collect();
            let mut pick: Vec<Option<(f32, usize)>> = vec![None; self.classes.len()];
            for i in 0..sub.len() {
                let c = sub.class_ord[i] as usize;
                let d = sq_dist32(&q32, &sub.data32[i * sub.dim..(i + 1) * sub.dim]);
                if pick[c].is_none_or(|(b, _)| d < b) {
                    pick[c] = Some((d, i));
                }
            }
            for (c, p) in pick.into_iter().enumerate() {
                best[c] = p.map(|(_, i)| Neighbour {
                    dist: sq_dist(q, sub.row(i)),
                    ref_id: sub.ref_ids[i],
                });
            }
        }
        best
    }

    /// Nearest reference of every class for each query descriptor.
    /// Degenerate descriptors are skipped.
    pub fn match_descriptors(&self, descriptors: &[BiometricDescriptor]) -> Result<QueryMatches> {
        for d in descriptors {
            if d.scale_index >= self.n_scales() {
                return Err(Error::InvalidParameter(format!(
                    "scale index {} out of range",
                    d.scale_index
                )));
            }
            let dim = self.encode.dim(d.dtype);
            if d.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: d.vector.len(),
                });
            }
        }
        let matches: Vec<DescriptorMatches> = descriptors
            .par_iter()
            .enumerate()
            .filter(|(_, d)| !d.degenerate)
            .map(|(i, d)| {
                let sub = &self.subs[self.sub_of(d.dtype, d.scale_index)];
                DescriptorMatches::new(
                    i,
                    d.dtype,
                    d.scale_index,
                    self.nearest_per_class(sub, &d.vector),
                )
            })
            .collect();
        let flag = matches
            .is_empty()
            .then(|| "query has no usable descriptors".to_string());
        Ok(QueryMatches {
            descriptors: matches,
            flag,
        })
    }

    /// Encodes a query fin (forward direction only) and matches it.
    pub fn match_query(&self, fin: &FinContour) -> Result<QueryMatches> {
        let enc = encode_fin(fin, Role::Query, &self.encode)?;
        self.match_descriptors(&enc.descriptors)
    }

    pub fn local_score(&self, d: &BiometricDescriptor, class: u32) -> Result<MatchRecord> {
        let m = self.match_descriptors(std::slice::from_ref(d))?;
        let Some(dm) = m.descriptors.first() else {
            return Err(Error::Degenerate("descriptor is flagged degenerate".into()));
        };
        Ok(match self.class_ordinal(class) {
            Some(ord) => dm.local_score(ord),
            None => MatchRecord {
                query_descriptor: 0,
                class_ord: usize::MAX,
                delta_c: None,
                delta_other: dm.first.map(|f| f.1),
                f: 0.0,
                matched_ref: None,
                flag: Some(ScoreFlag::ClassAbsent),
            },
        })
    }

    /// Weighted score total per class ordinal.
    pub fn class_totals(&self, matches: &QueryMatches, opts: &ClassifyOptions) -> Vec<f64> {
        let mut totals = vec![0.0; self.classes.len()];
        for m in &matches.descriptors {
            if !opts.families.contains(&m.dtype) {
                continue;
            }
            let w = opts.weights.get(m.scale_index).copied().unwrap_or(0.0);
            if w == 0.0 {
                continue;
            }
            for (c, t) in totals.iter_mut().enumerate() {
                let f = m.local_score(c).f;
                if f > 0.0 {
                    *t += w * f;
                }
            }
        }
        totals
    }

    pub fn classify(&self, matches: &QueryMatches, opts: &ClassifyOptions) -> RankedResult {
        if matches.descriptors.is_empty() {
            return RankedResult {
                entries: Vec::new(),
                flag: Some(matches.flag.clone().unwrap_or_else(|| "empty query".into())),
            };
        }
        RankedResult {
            entries: rank_scores(&self.classes, &self.class_totals(matches, opts)),
            flag: None,
        }
    }

    pub fn classify_query(&self, fin: &FinContour, opts: &ClassifyOptions) -> Result<RankedResult> {
        Ok(self.classify(&self.match_query(fin)?, opts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualAp {
    pub class: u32,
    pub queries: usize,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    /// Pooled over all (query, class) scores.
    pub ap: f64,
    /// Mean of per-individual APs.
    pub map: f64,
    pub top1: f64,
    pub pr: PrCurve,
    pub per_individual: Vec<IndividualAp>,
}

/// Pooled AP over every (query, class) score, and mAP over the individuals
/// that have queries: for each such individual, the AP of retrieving its
/// queries from all queries by their score for that individual.
pub fn evaluate_identification(results: &[(RankedResult, u32)]) -> IdentificationReport {
    let pooled: Vec<(f64, bool)> = results
        .iter()
        .flat_map(|(r, truth)| r.entries.iter().map(move |&(c, s)| (s, c == *truth)))
        .collect();
    let pr = pr_curve(&pooled, results.len());

    let mut individuals: Vec<u32> = results.iter().map(|r| r.1).collect();
    individuals.sort_unstable();
    individuals.dedup();
    let per_individual: Vec<IndividualAp> = individuals
        .iter()
        .map(|&c| {
            let scored: Vec<(f64, bool)> = results
                .iter()
                .filter_map(|(r, truth)| r.score_of(c).map(|s| (s, *truth == c)))
                .collect();
            let queries = results.iter().filter(|r| r.1 == c).count();
            IndividualAp {
                class: c,
                queries,
                ap: pr_curve(&scored, queries).average_precision,
            }
        })
        .collect();
    let map = if per_individual.is_empty() {
        0.0
    } else {
        per_individual.iter().map(|i| i.ap).sum::<f64>() / per_individual.len() as f64
    };
    let top1 = if results.is_empty() {
        0.0
    } else {
        results.iter().filter(|(r, t)| r.top() == Some(*t)).count() as f64 / results.len() as f64
    };
    IdentificationReport {
        ap: pr.average_precision,
        map,
        top1,
        pr,
        per_individual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stroke::Direction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_cfg(len: usize) -> EncodeConfig {
        EncodeConfig {
            descriptor_len: len,
            scales: vec![1.0, 2.0],
            ..EncodeConfig::default()
        }
    }

    fn desc(v: Vec<f64>, dtype: DescriptorType, scale_index: usize) -> BiometricDescriptor {
        BiometricDescriptor {
            vector: v,
            dtype,
            scale_index,
            scale: [1.0, 2.0][scale_index],
            subsection: Subsection {
                start_kp: 100,
                end_kp: 600,
                p: 500.0 / 1023.0,
                direction: Direction::Forward,
            },
            degenerate: false,
            class_label: None,
        }
    }

    fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    fn naive_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn margin_formula() {
        assert!((lnbnn_margin(0.2, 0.5) - 0.3).abs() < 1e-15);
        assert_eq!(lnbnn_margin(0.5, 0.2), 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let cfg = toy_cfg(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let items = vec![(3, desc(unit(&mut rng, 8), DescriptorType::DogN, 0))];
        assert!(IdentityIndex::from_descriptors(items, &cfg, true).is_err());
    }

    #[test]
    fn toy_index_matches_brute_force() {
        let cfg = toy_cfg(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let refs: Vec<(u32, Vec<f64>)> = (0..20).map(|i| (i % 4, unit(&mut rng, 8))).collect();
        let index = IdentityIndex::from_descriptors(
            refs.iter()
                .map(|(c, v)| (*c, desc(v.clone(), DescriptorType::DogN, 0)))
                .collect(),
            &cfg,
            true,
        )
        .unwrap();
        for _ in 0..30 {
            let q = unit(&mut rng, 8);
            for c in 0..4u32 {
                let dc = refs
                    .iter()
                    .filter(|r| r.0 == c)
                    .map(|r| naive_dist(&q, &r.1))
                    .fold(f64::INFINITY, f64::min);
                let dn = refs
                    .iter()
                    .filter(|r| r.0 != c)
                    .map(|r| naive_dist(&q, &r.1))
                    .fold(f64::INFINITY, f64::min);
                let rec = index
                    .local_score(&desc(q.clone(), DescriptorType::DogN, 0), c)
                    .unwrap();
                assert!((rec.delta_c.unwrap() - dc).abs() < 1e-12);
                assert!((rec.delta_other.unwrap() - dn).abs() < 1e-12);
                assert!((rec.f - (dn - dc).max(0.0)).abs() < 1e-12);
                if rec.f > 0.0 {
                    assert!(rec.delta_c < rec.delta_other);
                }
            }
        }
    }

    #[test]
    fn identical_references_under_two_labels() {
        let cfg = toy_cfg(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = unit(&mut rng, 8);
        let items = vec![
            (1, desc(v.clone(), DescriptorType::DogN, 0)),
            (2, desc(v.clone(), DescriptorType::DogN, 0)),
        ];
        let index = IdentityIndex::from_descriptors(items, &cfg, true).unwrap();
        assert_eq!(index.references().len(), 2);
        let rec = index
            .local_score(&desc(v, DescriptorType::DogN, 0), 1)
            .unwrap();
        assert_eq!(rec.delta_other, Some(0.0));
        assert_eq!(rec.f, 0.0);
    }

    #[test]
    fn absent_class_is_flagged() {
        let cfg = toy_cfg(8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let items = vec![
            (1, desc(unit(&mut rng, 8), DescriptorType::DogN, 0)),
            (2, desc(unit(&mut rng, 8), DescriptorType::DogN, 1)),
        ];
        let index = IdentityIndex::from_descriptors(items, &cfg, true).unwrap();
        // Class 2 has nothing at scale 0.
        let rec = index
            .local_score(&desc(unit(&mut rng, 8), DescriptorType::DogN, 0), 2)
            .unwrap();
        assert_eq!(rec.flag, Some(ScoreFlag::ClassAbsent));
        assert_eq!(rec.f, 0.0);
        let rec = index
            .local_score(&desc(unit(&mut rng, 8), DescriptorType::DogN, 0), 9)
            .unwrap();
        assert_eq!(rec.flag, Some(ScoreFlag::ClassAbsent));
    }

    #[test]
    fn approximate_mode_agrees_with_exact() {
        let cfg = toy_cfg(64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let items: Vec<_> = (0..1000)
            .map(|i| (i % 10, desc(unit(&mut rng, 64), DescriptorType::DogN, 0)))
            .collect();
        let mut index = IdentityIndex::from_descriptors(items, &cfg, true).unwrap();
        let queries: Vec<_> = (0..200)
            .map(|_| desc(unit(&mut rng, 64), DescriptorType::DogN, 0))
            .collect();
        let exact = index.match_descriptors(&queries).unwrap();
        index.set_exact_mode(false);
        let approx = index.match_descriptors(&queries).unwrap();
        let agree = exact
            .descriptors
            .iter()
            .zip(&approx.descriptors)
            .filter(|(a, b)| {
                a.per_class
                    .iter()
                    .map(|n| n.map(|n| n.ref_id))
                    .eq(b.per_class.iter().map(|n| n.map(|n| n.ref_id)))
            })
            .count();
        assert!(agree as f64 >= 0.99 * queries.len() as f64, "{agree}");
    }

    #[test]
    fn scale_sums_are_linear() {
        // Class 10 gains 1 at scale 0 and 2 at scale 1; class 20 gains 2 at
        // scale 0 only. Built from 1-D geometry on the first axis.
        let cfg = toy_cfg(8);
        let e = |x: f64, y: f64| {
            let mut v = vec![0.0; 8];
            v[0] = x;
            v[1] = y;
            v
        };
        let items = vec![
            (10, desc(e(0.0, 0.0), DescriptorType::DogN, 0)),
            (20, desc(e(3.0f64.sqrt(), 0.0), DescriptorType::DogN, 0)),
            (10, desc(e(0.0, 0.0), DescriptorType::DogN, 1)),
            (20, desc(e(2.0f64.sqrt(), 0.0), DescriptorType::DogN, 1)),
        ];
        let index = IdentityIndex::from_descriptors(items, &cfg, true).unwrap();
        let q = vec![
            desc(e(0.0, 0.0), DescriptorType::DogN, 0),
            desc(e(0.0, 0.0), DescriptorType::DogN, 1),
            desc(e(3.0f64.sqrt(), 0.0), DescriptorType::DogN, 0),
        ];
        let m = index.match_descriptors(&q).unwrap();
        // scale 0: q0 gives 10 +3; q2 gives 20 +3. scale 1: q1 gives 10 +2.
        let r = index.classify(&m, &ClassifyOptions::dogn(2));
        assert_eq!(r.entries[0].0, 10);
        assert!((r.entries[0].1 - 5.0).abs() < 1e-12);
        assert!((r.entries[1].1 - 3.0).abs() < 1e-12);
        let s0 = index.classify(
            &m,
            &ClassifyOptions::single_scale(2, 0, DescriptorType::DogN),
        );
        assert!((s0.score_of(10).unwrap() - 3.0).abs() < 1e-12);
        assert!((s0.score_of(20).unwrap() - 3.0).abs() < 1e-12);
        // Tie broken by class id.
        assert_eq!(s0.top(), Some(10));
    }

    #[test]
    fn ranking_survives_label_permutation() {
        let cfg = toy_cfg(8);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let refs: Vec<(u32, Vec<f64>)> = (0..40).map(|i| (i % 5, unit(&mut rng, 8))).collect();
        let perm = [3u32, 0, 4, 1, 2];
        let a = IdentityIndex::from_descriptors(
            refs.iter()
                .map(|(c, v)| (*c, desc(v.clone(), DescriptorType::DogN, 0)))
                .collect(),
            &cfg,
            true,
        )
        .unwrap();
        let b = IdentityIndex::from_descriptors(
            refs.iter()
                .map(|(c, v)| (perm[*c as usize], desc(v.clone(), DescriptorType::DogN, 0)))
                .collect(),
            &cfg,
            true,
        )
        .unwrap();
        let q: Vec<_> = (0..10)
            .map(|_| desc(unit(&mut rng, 8), DescriptorType::DogN, 0))
            .collect();
        let ra = a.classify(&a.match_descriptors(&q).unwrap(), &ClassifyOptions::dogn(2));
        let rb = b.classify(&b.match_descriptors(&q).unwrap(), &ClassifyOptions::dogn(2));
        for c in 0..5u32 {
            assert_eq!(ra.score_of(c), rb.score_of(perm[c as usize]));
        }
    }

    #[test]
    fn more_references_never_increase_delta_c() {
        let cfg = toy_cfg(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut items: Vec<(u32, BiometricDescriptor)> = (0..10)
            .map(|i| (i % 2, desc(unit(&mut rng, 8), DescriptorType::DogN, 0)))
            .collect();
        let q = desc(unit(&mut rng, 8), DescriptorType::DogN, 0);
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let index = IdentityIndex::from_descriptors(items.clone(), &cfg, true).unwrap();
            let d = index.local_score(&q, 0).unwrap().delta_c.unwrap();
            assert!(d <= prev);
            prev = d;
            items.push((0, desc(unit(&mut rng, 8), DescriptorType::DogN, 0)));
        }
    }

    #[test]
    fn empty_query_is_flagged() {
        let cfg = toy_cfg(8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let items = vec![
            (1, desc(unit(&mut rng, 8), DescriptorType::DogN, 0)),
            (2, desc(unit(&mut rng, 8), DescriptorType::DogN, 0)),
        ];
        let index = IdentityIndex::from_descriptors(items, &cfg, true).unwrap();
        let r = index.classify(
            &index.match_descriptors(&[]).unwrap(),
            &ClassifyOptions::dogn(2),
        );
        assert!(r.entries.is_empty());
        assert!(r.flag.is_some());
    }

    #[test]
    fn perfect_identification_scores_one() {
        let results = vec![
            (
                RankedResult {
                    entries: vec![(1, 5.0), (2, 1.0)],
                    flag: None,
                },
                1,
            ),
            (
                RankedResult {
                    entries: vec![(2, 4.0), (1, 0.5)],
                    flag: None,
                },
                2,
            ),
        ];
        let r = evaluate_identification(&results);
        assert_eq!(r.ap, 1.0);
        assert_eq!(r.map, 1.0);
        assert_eq!(r.top1, 1.0);
    }

    #[test]
    fn hand_built_table() {
        // Pooled ranking: 0.9(+) 0.8(-) 0.7(+) 0.4(-) 0.3(-) 0.2(+)
        let results = vec![
            (
                RankedResult {
                    entries: vec![(1, 0.9), (2, 0.3)],
                    flag: None,
                },
                1,
            ),
            (
                RankedResult {
                    entries: vec![(1, 0.8), (2, 0.7)],
                    flag: None,
                },
                2,
            ),
            (
                RankedResult {
                    entries: vec![(1, 0.4), (2, 0.2)],
                    flag: None,
                },
                2,
            ),
        ];
        let r = evaluate_identification(&results);
        let expected = (1.0 / 3.0) * 1.0 + (1.0 / 3.0) * (2.0 / 3.0) + (1.0 / 3.0) * 0.5;
        assert!((r.ap - expected).abs() < 1e-12);
        // Individual 1: scores 0.9(+) 0.8(-) 0.4(-) -> AP 1.
        // Individual 2: 0.7(+) 0.3(-) 0.2(+) -> 0.5 + 0.5*2/3.
        assert!((r.map - (1.0 + 0.5 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn random_scores_give_base_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let results: Vec<_> = (0..4000)
            .map(|i| {
                let r = RankedResult {
                    entries: rank_scores(&[0, 1], &[rng.gen(), rng.gen()]),
                    flag: None,
                };
                (r, i % 2)
            })
            .collect();
        let r = evaluate_identification(&results);
        assert!((r.ap - 0.5).abs() < 0.03, "{}", r.ap);
    }
}
