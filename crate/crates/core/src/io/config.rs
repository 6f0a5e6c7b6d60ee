//! Run configuration: every tunable of the pipeline as a flat TOML document.
//! Missing keys take their defaults, unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curve::ScaleSpaceParams;
use crate::encode::EncodeConfig;
use crate::ensemble::TrainConfig;
use crate::error::{Error, Result};
use crate::finspace::{FinSpaceConfig, ReliabilityConfig};
use crate::stroke;
use crate::synth::PerturbationRanges;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub detect_regions: usize,
    pub detect_keypoints: usize,
    pub detect_sigma: f64,
    pub detect_m: f64,
    pub detect_len: usize,
    pub nms_overlap: f64,
    pub boundary_tolerance: f64,
    pub quality_trees: usize,
    pub quality_min_leaf: usize,

    /// Keypoints per fin, end points included.
    pub encode_keypoints: usize,
    pub encode_sigma: f64,
    pub encode_m: f64,
    pub encode_len: usize,
    pub descriptor_len: usize,
    pub descriptor_scales: Vec<f64>,
    pub descriptor_m: f64,
    pub exact_mode: bool,

    pub forest_trees: usize,
    /// 0 means unlimited.
    pub forest_max_depth: usize,
    pub forest_min_leaf: usize,
    /// 0 means the square root of the feature count, rounded up.
    pub forest_features_per_split: usize,
    pub negatives_per_query: usize,

    pub finspace_partitions_per_edge: usize,
    /// Explicit scale-bin edges; empty derives five log-spaced bins from the
    /// descriptor settings.
    pub finspace_scale_edges: Vec<f64>,

    pub synth_max_rotation_deg: f64,
    pub synth_min_scale: f64,
    pub synth_max_scale: f64,
    pub synth_max_noise: f64,
    pub synth_max_occlusion: f64,

    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncodeConfig::default();
        let mild = PerturbationRanges::mild();
        Self {
            detect_regions: stroke::DEFAULT_K,
            detect_keypoints: stroke::DEFAULT_N,
            detect_sigma: ScaleSpaceParams::DETECTION.sigma,
            detect_m: ScaleSpaceParams::DETECTION.m,
            detect_len: ScaleSpaceParams::DETECTION.resample_len,
            nms_overlap: stroke::NMS_OVERLAP,
            boundary_tolerance: crate::boundary::DEFAULT_TOLERANCE,
            quality_trees: 100,
            quality_min_leaf: 1,
            encode_keypoints: enc.interior_keypoints + 2,
            encode_sigma: enc.contour.sigma,
            encode_m: enc.contour.m,
            encode_len: enc.contour.resample_len,
            descriptor_len: enc.descriptor_len,
            descriptor_scales: enc.scales,
            descriptor_m: enc.dog_m,
            exact_mode: true,
            forest_trees: 100,
            forest_max_depth: 0,
            forest_min_leaf: 5,
            forest_features_per_split: 0,
            negatives_per_query: 5,
            finspace_partitions_per_edge: FinSpaceConfig::PARTITIONS_PER_EDGE,
            finspace_scale_edges: Vec::new(),
            synth_max_rotation_deg: mild.max_rotation.to_degrees(),
            synth_min_scale: mild.min_scale,
            synth_max_scale: mild.max_scale,
            synth_max_noise: mild.max_noise,
            synth_max_occlusion: mild.max_occlusion,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.encode_config().validate()?;
        self.detection_params()?;
        self.finspace_config().validate()?;
        if self.encode_keypoints < 2 {
            return Err(Error::InvalidParameter(
                "encode_keypoints must be >= 2".into(),
            ));
        }
        if self.forest_trees == 0
            || self.forest_min_leaf == 0
            || self.quality_trees == 0
            || self.quality_min_leaf == 0
        {
            return Err(Error::InvalidParameter("forest sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn detection_params(&self) -> Result<ScaleSpaceParams> {
        ScaleSpaceParams::new(self.detect_sigma, self.detect_m, self.detect_len)
    }

    pub fn encode_config(&self) -> EncodeConfig {
        EncodeConfig {
            contour: ScaleSpaceParams {
                sigma: self.encode_sigma,
                m: self.encode_m,
                resample_len: self.encode_len,
            },
            interior_keypoints: self.encode_keypoints.saturating_sub(2),
            descriptor_len: self.descriptor_len,
            scales: self.descriptor_scales.clone(),
            dog_m: self.descriptor_m,
        }
    }

    pub fn finspace_config(&self) -> FinSpaceConfig {
        let mut fs = FinSpaceConfig::for_encoding(&self.encode_config());
        fs.partitions_per_edge = self.finspace_partitions_per_edge;
        if !self.finspace_scale_edges.is_empty() {
            fs.scale_edges = self.finspace_scale_edges.clone();
        }
        fs
    }

    fn forest(&self, trees: usize, min_leaf: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            n_trees: trees,
            max_depth: (self.forest_max_depth > 0).then_some(self.forest_max_depth),
            min_leaf,
            features_per_split: (self.forest_features_per_split > 0)
                .then_some(self.forest_features_per_split),
            bootstrap: true,
            seed,
        }
    }

    pub fn quality_forest(&self) -> TrainConfig {
        self.forest(self.quality_trees, self.quality_min_leaf, self.seed)
    }

    pub fn reliability(&self) -> ReliabilityConfig {
        ReliabilityConfig {
            forest: self.forest(self.forest_trees, self.forest_min_leaf, self.seed),
            negatives_per_query: self.negatives_per_query,
            seed: self.seed,
        }
    }

    pub fn perturbation_ranges(&self) -> PerturbationRanges {
        PerturbationRanges {
            max_rotation: self.synth_max_rotation_deg.to_radians(),
            min_scale: self.synth_min_scale,
            max_scale: self.synth_max_scale,
            max_noise: self.synth_max_noise,
            max_occlusion: self.synth_max_occlusion,
        }
    }

    /// Hash of the settings that determine index contents (encoding and
    /// fin-space layout).
    pub fn index_hash(&self) -> [u8; 32] {
        config_hash(&self.encode_config(), &self.finspace_config())
    }
}

pub(crate) fn config_hash(encode: &EncodeConfig, finspace: &FinSpaceConfig) -> [u8; 32] {
    let doc = serde_json::to_vec(&(encode, finspace)).expect("config serializes");
    Sha256::digest(doc).into()
}
