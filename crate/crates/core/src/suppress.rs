//! Duplicate suppression and final selection.
//!
//! Everything here is per (image, class): boxes of different classes never
//! suppress each other. Scores only ever go down and geometry is never
//! touched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rank_detections, BoxGeometry, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuppressMethod {
    SoftGaussian,
    SoftLinear,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuppressConfig {
    pub method: SuppressMethod,
    pub sigma: f64,
    pub iou_threshold: f64,
    /// Soft-suppressed boxes scoring below this are dropped.
    pub score_prune: f64,
    pub top_n: usize,
}

impl Default for SuppressConfig {
    fn default() -> Self {
        Self {
            method: SuppressMethod::SoftGaussian,
            sigma: 0.5,
            iou_threshold: 0.6,
            score_prune: 0.001,
            top_n: 100,
        }
    }
}

impl SuppressConfig {
    pub fn hard(iou_threshold: f64) -> Self {
        Self {
            method: SuppressMethod::Hard,
            iou_threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "iou_threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

/// IoU together with a flag raised when either box has no area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouReport {
    pub value: f64,
    pub degenerate: bool,
}

pub fn iou_report(a: &BoxGeometry, b: &BoxGeometry) -> IouReport {
    let (aa, ab) = (a.area(), b.area());
    if !(aa > 0.0 && ab > 0.0) {
        return IouReport {
            value: 0.0,
            degenerate: true,
        };
    }
    let iw = (a.br_x.min(b.br_x) - a.tl_x.max(b.tl_x)).max(0.0);
    let ih = (a.br_y.min(b.br_y) - a.tl_y.max(b.tl_y)).max(0.0);
    let inter = iw * ih;
    IouReport {
        value: (inter / (aa + ab - inter)).clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// Intersection over union; 0 for disjoint or zero-area boxes.
pub fn iou(a: &BoxGeometry, b: &BoxGeometry) -> f64 {
    iou_report(a, b).value
}

fn by_image_and_class(dets: &[Detection]) -> BTreeMap<(u64, usize), Vec<Detection>> {
    let mut groups: BTreeMap<(u64, usize), Vec<Detection>> = BTreeMap::new();
    for d in dets {
        groups.entry((d.image_id, d.class_id)).or_default().push(*d);
    }
    groups
}

/// Greedy suppression with a per-method decay. `decay(iou)` returns the
/// factor applied to a remaining box's score; `None` removes the box.
fn greedy(dets: &[Detection], prune: f64, decay: impl Fn(f64) -> Option<f64>) -> Vec<Detection> {
    let mut out = Vec::with_capacity(dets.len());
    for (_, mut rest) in by_image_and_class(dets) {
        rest.retain(|d| d.score >= prune);
        while !rest.is_empty() {
            let best = (0..rest.len())
                .min_by(|&i, &j| rank_detections(&rest[i], &rest[j]))
                .expect("non-empty");
            let top = rest.swap_remove(best);
            rest.retain_mut(|d| match decay(iou(&top.geometry, &d.geometry)) {
                Some(f) => {
                    d.score *= f;
                    d.score >= prune
                }
                None => false,
            });
            out.push(top);
        }
    }
    out.sort_by(rank_detections);
    out
}

/// Soft suppression (gaussian or linear, per `cfg.method`); a hard config
/// falls through to [`hard_nms`].
pub fn soft_nms(dets: &[Detection], cfg: &SuppressConfig) -> Vec<Detection> {
    let sigma = cfg.sigma;
    let thr = cfg.iou_threshold;
    match cfg.method {
        SuppressMethod::SoftGaussian => greedy(dets, cfg.score_prune, |o| Some((-o * o / sigma).exp())),
        SuppressMethod::SoftLinear => greedy(dets, cfg.score_prune, |o| Some(if o > thr { 1.0 - o } else { 1.0 })),
        SuppressMethod::Hard => hard_nms(dets, cfg),
    }
}

/// Classic greedy NMS: a box is dropped when its IoU with a kept,
/// higher-ranked box reaches `iou_threshold`.
pub fn hard_nms(dets: &[Detection], cfg: &SuppressConfig) -> Vec<Detection> {
    let thr = cfg.iou_threshold;
    greedy(dets, f64::NEG_INFINITY, |o| (o < thr).then_some(1.0))
}

/// Maps detections made on the mirrored image back and appends them.
pub fn flip_merge(original: &[Detection], flipped: &[Detection], image_width: f64) -> Vec<Detection> {
    original
        .iter()
        .copied()
        .chain(flipped.iter().map(|d| Detection {
            geometry: d.geometry.flip_horizontal(image_width),
            ..*d
        }))
        .collect()
}

/// Highest `top_n` detections per image, in rank order.
pub fn top_select(dets: &[Detection], top_n: usize) -> Vec<Detection> {
    let mut per_image: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        per_image.entry(d.image_id).or_default().push(*d);
    }
    per_image
        .into_values()
        .flat_map(|mut v| {
            v.sort_by(rank_detections);
            v.truncate(top_n);
            v
        })
        .collect()
}

/// Suppression by `cfg.method` followed by top-`n` selection.
pub fn suppress(dets: &[Detection], cfg: &SuppressConfig) -> Vec<Detection> {
    top_select(&soft_nms(dets, cfg), cfg.top_n)
}
