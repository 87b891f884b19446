//! Keypoint-triplet decoding.
//!
//! Corner keypoints are paired into candidate boxes, and a candidate is kept
//! only if a center keypoint of its class falls inside the box's central
//! region (see [`central_region`]). Two pipelines are provided:
//!
//! - [`decode_sr`]: one set of heatmaps with associative embeddings decides
//!   which corners belong together.
//! - [`decode_mr`]: per-level sub-box regressions propose corners and centers,
//!   which are snapped onto heatmap peaks before pairing; a candidate needs
//!   both predicted centers inside its central region.

mod multi;
mod region;
mod single;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxGeometry, Detection, Keypoint};

pub use multi::{
    center_filter_mr, decode_mr, decode_mr_candidates, pair_subboxes, predict_subboxes, refine_subboxes, Branch,
    RefinedSubBox, SubBoxPrediction,
};
pub use region::{central_region, select_n, CentralRegion};
pub use single::{center_filter_sr, decode_sr, decode_sr_candidates, pair_corners, sr_keypoints};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Keypoints taken from each heatmap.
    pub k_peaks: usize,
    pub peak_window: usize,
    /// Corners pair only if their embeddings differ by less than this.
    pub embed_threshold: f64,
    /// Central-region divisor for boxes whose scale is below `scale_split`.
    pub n_small: u32,
    pub n_large: u32,
    /// Box scale (longest side, pixels) separating small from large.
    pub scale_split: f64,
    /// Snap radius for regressed keypoints, in multiples of the level stride.
    pub snap_radius_factor: f64,
    /// Feature points taken per level and branch.
    pub k_per_level: usize,
    /// Feature points must score strictly above this.
    pub feature_score_floor: f32,
    pub require_both_centers: bool,
    /// Disable to get plain corner pairing with no center check.
    pub center_filter: bool,
    /// Snap regressed keypoints onto heatmap peaks.
    pub refine: bool,
    /// Pair sub-box corners only within a pyramid level.
    pub pair_within_level: bool,
    /// Candidate boxes kept per image after pairing.
    pub max_candidates: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            k_peaks: 70,
            peak_window: 3,
            embed_threshold: 0.5,
            n_small: 3,
            n_large: 5,
            scale_split: 150.0,
            snap_radius_factor: 2.0,
            k_per_level: 70,
            feature_score_floor: 0.0,
            require_both_centers: true,
            center_filter: true,
            refine: true,
            pair_within_level: false,
            max_candidates: 1000,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_small", self.n_small), ("n_large", self.n_large)] {
            if n == 0 || n.is_multiple_of(2) {
                return Err(Error::Config(format!("{name} must be odd and positive, got {n}")));
            }
        }
        if self.scale_split.is_nan() || self.scale_split <= 0.0 {
            return Err(Error::Config("scale_split must be positive".into()));
        }
        if self.k_peaks == 0 || self.k_per_level == 0 || self.max_candidates == 0 {
            return Err(Error::Config(
                "k_peaks, k_per_level and max_candidates must be >= 1".into(),
            ));
        }
        if self.peak_window.is_multiple_of(2) {
            return Err(Error::Config("peak_window must be odd".into()));
        }
        Ok(())
    }

    pub(crate) fn peak_config(&self) -> crate::keypoints::PeakConfig {
        crate::keypoints::PeakConfig {
            k: self.k_peaks,
            window: self.peak_window,
            score_floor: 0.0,
        }
    }
}

/// A box proposed by a corner pair, with the keypoints that formed it.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBox {
    pub class_id: usize,
    pub geometry: BoxGeometry,
    pub score: f64,
    pub tl_source: Keypoint,
    pub br_source: Keypoint,
    /// Confirming centers after filtering; predicted centers before the
    /// multi-resolution filter.
    pub center_sources: Vec<Keypoint>,
}

impl CandidateBox {
    pub fn to_detection(&self, image_id: u64) -> Detection {
        Detection::new(image_id, self.class_id, self.geometry, self.score)
    }
}

pub fn to_detections(cands: &[CandidateBox], image_id: u64) -> Vec<Detection> {
    cands.iter().map(|c| c.to_detection(image_id)).collect()
}

/// Wall time spent in each decode stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub peaks: Duration,
    pub pairing: Duration,
    pub filter: Duration,
    pub suppress: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.peaks + self.pairing + self.filter + self.suppress
    }

    pub fn accumulate(&mut self, other: &StageTimes) {
        self.peaks += other.peaks;
        self.pairing += other.pairing;
        self.filter += other.filter;
        self.suppress += other.suppress;
    }
}

/// Arithmetic mean clamped into `[min, max]` of the inputs, so that rounding
/// never pushes a rescored box outside the range of its keypoint scores.
pub(crate) fn mean_score(scores: &[f64]) -> f64 {
    let n = scores.len() as f64;
    let sum: f64 = scores.iter().sum();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (sum / n).clamp(lo, hi)
}

/// Stable sort by score descending, then truncation.
pub(crate) fn rank_and_cap(cands: &mut Vec<CandidateBox>, cap: usize) {
    cands.sort_by(|a, b| b.score.total_cmp(&a.score));
    cands.truncate(cap);
}
