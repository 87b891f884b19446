//! COCO-style evaluation: AP/AR, the AF rate, and recall binned by box
//! geometry.
//!
//! Matching follows the COCO protocol: per image and class, detections in
//! score order greedily take the unmatched ground truth with the highest IoU
//! at or above the threshold, preferring in-range ground truth when an area
//! range is active. One deliberate difference: equal IoUs go to the lowest
//! ground-truth index. Precision is integrated at 101 recall points.
//!
//! AF ("average false discovery") is `1 − AP` over the low thresholds
//! 0.05..0.50, so it grows with the share of detections that do not even
//! loosely overlap an object.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::geometry::{rank_detections, BoxGeometry, Detection, GroundTruthBox};
use crate::suppress::iou;

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + step * k as f64).collect()
}

/// IoU thresholds for AP and AR: 0.50, 0.55, ..., 0.95.
pub fn ap_thresholds() -> Vec<f64> {
    linspace(0.5, 0.95, 10)
}

/// IoU thresholds for AF: 0.05, 0.10, ..., 0.50.
pub fn af_thresholds() -> Vec<f64> {
    linspace(0.05, 0.5, 10)
}

/// Ground-truth area range. Small is below 32², large above 96².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub fn contains(&self, b: &BoxGeometry) -> bool {
        let a = b.area();
        match self {
            AreaRange::All => true,
            AreaRange::Small => a < 32.0 * 32.0,
            AreaRange::Medium => (32.0 * 32.0..=96.0 * 96.0).contains(&a),
            AreaRange::Large => a > 96.0 * 96.0,
        }
    }
}

/// Outcome for one detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetMatch {
    /// Index into the detection input.
    pub det: usize,
    /// Index into the ground-truth input.
    pub gt: Option<usize>,
    pub iou: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Considered detections, per image in score order.
    pub detections: Vec<DetMatch>,
    /// Per ground-truth box, in input order.
    pub gt_matched: Vec<bool>,
}

/// Detections and ground truth of one image (and one class when
/// class-aware), with their IoU matrix.
#[derive(Default)]
struct Group {
    dets: Vec<usize>,
    gts: Vec<usize>,
    ious: Vec<Vec<f64>>,
}

/// One evaluated detection within a group.
#[derive(Debug, Clone, Copy)]
struct Scored {
    det: usize,
    score: f64,
    gt: Option<usize>,
    iou: f64,
    ignored: bool,
}

struct Evaluator<'a> {
    dets: &'a [Detection],
    gts: &'a [GroundTruthBox],
    /// Keyed by (class, image); class is 0 for class-agnostic evaluation.
    groups: BTreeMap<(usize, u64), Group>,
}

impl<'a> Evaluator<'a> {
    fn new(dets: &'a [Detection], gts: &'a [GroundTruthBox], class_aware: bool) -> Self {
        let class = |c: usize| if class_aware { c } else { 0 };
        let mut groups: BTreeMap<(usize, u64), Group> = BTreeMap::new();
        for (k, d) in dets.iter().enumerate() {
            groups.entry((class(d.class_id), d.image_id)).or_default().dets.push(k);
        }
        for (k, g) in gts.iter().enumerate() {
            groups.entry((class(g.class_id), g.image_id)).or_default().gts.push(k);
        }
        for g in groups.values_mut() {
            g.dets.sort_by(|&a, &b| rank_detections(&dets[a], &dets[b]));
            g.ious = g
                .dets
                .iter()
                .map(|&d| {
                    g.gts
                        .iter()
                        .map(|&t| iou(&dets[d].geometry, &gts[t].geometry))
                        .collect()
                })
                .collect();
        }
        Self { dets, gts, groups }
    }

    /// Greedy matching within one group.
    fn match_group(
        &self,
        g: &Group,
        thr: f64,
        max_dets: usize,
        range: &dyn Fn(&BoxGeometry) -> bool,
    ) -> (Vec<Scored>, usize) {
        // in-range ground truth first, input order otherwise
        let mut order: Vec<usize> = (0..g.gts.len()).collect();
        let gt_ignored: Vec<bool> = g.gts.iter().map(|&t| !range(&self.gts[t].geometry)).collect();
        order.sort_by_key(|&k| gt_ignored[k]);
        let mut taken = vec![false; g.gts.len()];
        let mut out = Vec::new();
        for (row, &d) in g.dets.iter().enumerate().take(max_dets) {
            let mut best: Option<(usize, f64)> = None;
            for &k in &order {
                if taken[k] {
                    continue;
                }
                if let Some((b, _)) = best {
                    if !gt_ignored[b] && gt_ignored[k] {
                        break;
                    }
                }
                let v = g.ious[row][k];
                if v >= thr && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((k, v));
                }
            }
            let det = &self.dets[d];
            let scored = match best {
                Some((k, v)) => {
                    taken[k] = true;
                    Scored {
                        det: d,
                        score: det.score,
                        gt: Some(g.gts[k]),
                        iou: v,
                        ignored: gt_ignored[k],
                    }
                }
                None => Scored {
                    det: d,
                    score: det.score,
                    gt: None,
                    iou: 0.0,
                    ignored: !range(&det.geometry),
                },
            };
            out.push(scored);
        }
        let positives = gt_ignored.iter().filter(|i| !**i).count();
        (out, positives)
    }

    /// Per class: the considered detections in global score order, flagged
    /// as true positives, and the number of in-range ground-truth boxes.
    fn per_class(
        &self,
        thr: f64,
        max_dets: usize,
        range: &dyn Fn(&BoxGeometry) -> bool,
    ) -> BTreeMap<usize, (Vec<(f64, bool)>, usize)> {
        let mut out: BTreeMap<usize, (Vec<(f64, bool)>, usize)> = BTreeMap::new();
        for (&(class, _), g) in &self.groups {
            let (scored, positives) = self.match_group(g, thr, max_dets, range);
            let slot = out.entry(class).or_default();
            slot.0
                .extend(scored.iter().filter(|s| !s.ignored).map(|s| (s.score, s.gt.is_some())));
            slot.1 += positives;
        }
        for (list, _) in out.values_mut() {
            list.sort_by(|a, b| b.0.total_cmp(&a.0));
        }
        out
    }

    /// Mean over classes with ground truth of `f(list, positives)`, where
    /// `f` sees one class at one threshold; then mean over thresholds.
    fn summarize(
        &self,
        thrs: &[f64],
        max_dets: usize,
        range: &dyn Fn(&BoxGeometry) -> bool,
        f: fn(&[(f64, bool)], usize) -> f64,
    ) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for &thr in thrs {
            for (list, positives) in self.per_class(thr, max_dets, range).values() {
                if *positives == 0 {
                    continue;
                }
                total += f(list, *positives);
                count += 1;
            }
        }
        (count > 0).then(|| total / count as f64)
    }
}

/// 101-point interpolated AP of one score-ordered TP/FP list.
fn interpolated_ap(list: &[(f64, bool)], positives: usize) -> f64 {
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(list.len());
    let mut precision = Vec::with_capacity(list.len());
    for (k, &(_, hit)) in list.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (1..precision.len()).rev() {
        if precision[k] > precision[k - 1] {
            precision[k - 1] = precision[k];
        }
    }
    let sum: f64 = linspace(0.0, 1.0, 101)
        .iter()
        .map(|&r| {
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    sum / 101.0
}

fn final_recall(list: &[(f64, bool)], positives: usize) -> f64 {
    list.iter().filter(|(_, hit)| *hit).count() as f64 / positives as f64
}

fn area(range: AreaRange) -> impl Fn(&BoxGeometry) -> bool {
    move |b| range.contains(b)
}

/// Greedy matching at one IoU threshold, up to `max_dets` detections per
/// image (and class, when class-aware).
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
    max_dets: usize,
    class_aware: bool,
) -> MatchResult {
    let ev = Evaluator::new(dets, gts, class_aware);
    let mut detections = Vec::new();
    let mut gt_matched = vec![false; gts.len()];
    let all = area(AreaRange::All);
    for g in ev.groups.values() {
        for s in ev.match_group(g, iou_threshold, max_dets, &all).0 {
            if let Some(t) = s.gt {
                gt_matched[t] = true;
            }
            detections.push(DetMatch {
                det: s.det,
                gt: s.gt,
                iou: s.iou,
                score: s.score,
            });
        }
    }
    MatchResult { detections, gt_matched }
}

/// Class-aware AP at one IoU threshold, 100 detections per image and class.
/// `None` when there is no ground truth.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> Option<f64> {
    let ev = Evaluator::new(dets, gts, true);
    ev.summarize(&[iou_threshold], 100, &area(AreaRange::All), interpolated_ap)
}

/// Which AF number to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AfVariant {
    /// Averaged over 0.05..0.50.
    Overall,
    /// At one IoU threshold.
    AtIou(f64),
    /// Averaged over 0.05..0.50 within an area range.
    Scale(AreaRange),
}

pub fn af_rate(dets: &[Detection], gts: &[GroundTruthBox], variant: AfVariant) -> Option<f64> {
    let ev = Evaluator::new(dets, gts, true);
    let (thrs, range) = match variant {
        AfVariant::Overall => (af_thresholds(), AreaRange::All),
        AfVariant::AtIou(t) => (vec![t], AreaRange::All),
        AfVariant::Scale(r) => (af_thresholds(), r),
    };
    ev.summarize(&thrs, 100, &area(range), interpolated_ap)
        .map(|ap| 1.0 - ap)
}

/// Class-agnostic recall by ground-truth geometry, 1000 proposals per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRecall {
    pub ar_all: Option<f64>,
    /// Area bins (96², 200²], (200², 300²], (300², 400²], (400², ∞).
    pub ar_area: [Option<f64>; 4],
    /// Aspect bins [5, 6), [6, 7), [7, 8), [8, ∞) on `max(w, h) / min(w, h)`.
    pub ar_aspect: [Option<f64>; 4],
}

pub const GEOMETRY_MAX_DETS: usize = 1000;

fn area_bin(k: usize) -> impl Fn(&BoxGeometry) -> bool {
    let edges = [96.0f64, 200.0, 300.0, 400.0];
    move |b| {
        let a = b.area();
        a > edges[k].powi(2) && edges.get(k + 1).is_none_or(|hi| a <= hi.powi(2))
    }
}

fn aspect_bin(k: usize) -> impl Fn(&BoxGeometry) -> bool {
    let lo = (5 + k) as f64;
    move |b| {
        let r = b.aspect_ratio();
        r >= lo && (k == 3 || r < lo + 1.0)
    }
}

pub fn geometry_recall(dets: &[Detection], gts: &[GroundTruthBox]) -> GeometryRecall {
    let ev = Evaluator::new(dets, gts, false);
    let thrs = ap_thresholds();
    let ar = |range: &dyn Fn(&BoxGeometry) -> bool| ev.summarize(&thrs, GEOMETRY_MAX_DETS, range, final_recall);
    GeometryRecall {
        ar_all: ar(&area(AreaRange::All)),
        ar_area: [0, 1, 2, 3].map(|k| ar(&area_bin(k))),
        ar_aspect: [0, 1, 2, 3].map(|k| ar(&aspect_bin(k))),
    }
}

/// Every number the evaluator reports, as fractions in [0, 1]; `None` where
/// no ground truth falls in scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub ar1: Option<f64>,
    pub ar10: Option<f64>,
    pub ar100: Option<f64>,
    pub ar_small: Option<f64>,
    pub ar_medium: Option<f64>,
    pub ar_large: Option<f64>,
    pub af: Option<f64>,
    pub af5: Option<f64>,
    pub af25: Option<f64>,
    pub af50: Option<f64>,
    pub af_small: Option<f64>,
    pub af_medium: Option<f64>,
    pub af_large: Option<f64>,
    pub geometry: GeometryRecall,
}

pub fn evaluate(dets: &[Detection], gts: &[GroundTruthBox]) -> EvalReport {
    let ev = Evaluator::new(dets, gts, true);
    let ap_t = ap_thresholds();
    let af_t = af_thresholds();
    let ap = |thrs: &[f64], r: AreaRange| ev.summarize(thrs, 100, &area(r), interpolated_ap);
    let ar = |max_dets: usize, r: AreaRange| ev.summarize(&ap_t, max_dets, &area(r), final_recall);
    let af = |thrs: &[f64], r: AreaRange| ap(thrs, r).map(|v| 1.0 - v);
    EvalReport {
        ap: ap(&ap_t, AreaRange::All),
        ap50: ap(&[0.5], AreaRange::All),
        ap75: ap(&[0.75], AreaRange::All),
        ap_small: ap(&ap_t, AreaRange::Small),
        ap_medium: ap(&ap_t, AreaRange::Medium),
        ap_large: ap(&ap_t, AreaRange::Large),
        ar1: ar(1, AreaRange::All),
        ar10: ar(10, AreaRange::All),
        ar100: ar(100, AreaRange::All),
        ar_small: ar(100, AreaRange::Small),
        ar_medium: ar(100, AreaRange::Medium),
        ar_large: ar(100, AreaRange::Large),
        af: af(&af_t, AreaRange::All),
        af5: af(&[0.05], AreaRange::All),
        af25: af(&[0.25], AreaRange::All),
        af50: af(&[0.5], AreaRange::All),
        af_small: af(&af_t, AreaRange::Small),
        af_medium: af(&af_t, AreaRange::Medium),
        af_large: af(&af_t, AreaRange::Large),
        geometry: geometry_recall(dets, gts),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", x * 100.0))
}

fn table(out: &mut String, heads: &[&str], vals: &[Option<f64>]) {
    let cells: Vec<String> = vals.iter().map(|v| pct(*v)).collect();
    let widths: Vec<usize> = heads.iter().zip(&cells).map(|(h, c)| h.len().max(c.len())).collect();
    let line = |items: &[String]| {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let heads: Vec<String> = heads.iter().map(|h| h.to_string()).collect();
    let _ = writeln!(out, "{}", line(&heads));
    let _ = writeln!(out, "{}", line(&cells));
}

impl fmt::Display for EvalReport {
    /// Percentages with one decimal, `-` where undefined.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        table(
            &mut s,
            &[
                "AP", "AP50", "AP75", "AP_S", "AP_M", "AP_L", "AR1", "AR10", "AR100", "AR_S", "AR_M", "AR_L",
            ],
            &[
                self.ap,
                self.ap50,
                self.ap75,
                self.ap_small,
                self.ap_medium,
                self.ap_large,
                self.ar1,
                self.ar10,
                self.ar100,
                self.ar_small,
                self.ar_medium,
                self.ar_large,
            ],
        );
        s.push('\n');
        table(
            &mut s,
            &["AF", "AF5", "AF25", "AF50", "AF_S", "AF_M", "AF_L"],
            &[
                self.af,
                self.af5,
                self.af25,
                self.af50,
                self.af_small,
                self.af_medium,
                self.af_large,
            ],
        );
        s.push('\n');
        let g = &self.geometry;
        table(
            &mut s,
            &[
                "AR", "AR_1+", "AR_2+", "AR_3+", "AR_4+", "AR_5:1", "AR_6:1", "AR_7:1", "AR_8:1",
            ],
            &[
                g.ar_all,
                g.ar_area[0],
                g.ar_area[1],
                g.ar_area[2],
                g.ar_area[3],
                g.ar_aspect[0],
                g.ar_aspect[1],
                g.ar_aspect[2],
                g.ar_aspect[3],
            ],
        );
        f.write_str(s.trim_end())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(b: (f64, f64, f64, f64)) -> GroundTruthBox {
        GroundTruthBox::new(0, 0, BoxGeometry::new(b.0, b.1, b.2, b.3))
    }

    fn det(score: f64, b: (f64, f64, f64, f64)) -> Detection {
        Detection::new(0, 0, BoxGeometry::new(b.0, b.1, b.2, b.3), score)
    }

    const A: (f64, f64, f64, f64) = (0.0, 0.0, 10.0, 10.0);
    const B: (f64, f64, f64, f64) = (50.0, 50.0, 60.0, 60.0);
    const NOWHERE: (f64, f64, f64, f64) = (200.0, 200.0, 210.0, 210.0);

    #[test]
    fn hand_traced_ap() {
        let gts = [gt(A), gt(B)];
        let dets = [det(0.9, A), det(0.8, NOWHERE), det(0.7, B)];
        let ap = average_precision(&dets, &gts, 0.5).unwrap();
        assert!((ap - (51.0 + 50.0 * 2.0 / 3.0) / 101.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_is_false_positive() {
        let m = match_detections(&[det(0.9, A), det(0.8, A)], &[gt(A)], 0.5, 100, true);
        assert_eq!(m.detections[0].gt, Some(0));
        assert_eq!(m.detections[1].gt, None);
        assert!(m.gt_matched[0]);
        let low = match_detections(&[det(0.9, (0.0, 0.0, 10.0, 4.0))], &[gt(A)], 0.5, 100, true);
        assert_eq!(low.detections[0].gt, None);
    }

    #[test]
    fn perfect_empty_and_absent() {
        let gts = [gt(A), gt(B)];
        assert_eq!(average_precision(&[det(0.9, A), det(0.8, B)], &gts, 0.5), Some(1.0));
        assert_eq!(average_precision(&[], &gts, 0.5), Some(0.0));
        assert_eq!(average_precision(&[det(0.9, A)], &[], 0.5), None);
        assert_eq!(af_rate(&[det(0.9, NOWHERE)], &gts, AfVariant::Overall), Some(1.0));
        assert_eq!(
            af_rate(&[det(0.9, A), det(0.8, B)], &gts, AfVariant::Overall),
            Some(0.0)
        );
    }

    #[test]
    fn geometry_bins() {
        let wide = GroundTruthBox::new(0, 0, BoxGeometry::new(0.0, 0.0, 400.0, 50.0));
        let six = GroundTruthBox::new(0, 1, BoxGeometry::new(0.0, 100.0, 300.0, 150.0));
        let dets = [Detection::new(0, 3, wide.geometry, 0.1)];
        let g = geometry_recall(&dets, &[wide, six]);
        assert_eq!(g.ar_aspect[3], Some(1.0));
        assert_eq!(g.ar_aspect[1], Some(0.0));
        assert_eq!(g.ar_aspect[0], None);
        assert_eq!(g.ar_all, Some(0.5));
    }

    #[test]
    fn proposal_cutoff() {
        let target = gt(A);
        let mut dets: Vec<Detection> = (0..1000)
            .map(|k| det(1.0 - k as f64 * 1e-4, (300.0 + k as f64, 0.0, 310.0 + k as f64, 5.0)))
            .collect();
        dets.push(det(0.001, A));
        assert_eq!(geometry_recall(&dets, &[target]).ar_all, Some(0.0));
        dets.remove(0);
        assert_eq!(geometry_recall(&dets, &[target]).ar_all, Some(1.0));
    }

    #[test]
    fn report_table_marks_absent() {
        let r = evaluate(&[], &[gt(A)]);
        assert_eq!(r.ap, Some(0.0));
        assert_eq!(r.af, Some(1.0));
        assert_eq!(r.ap_large, None);
        let text = r.to_string();
        assert!(text.contains("100.0"));
        assert!(text.contains('-'));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("af_large").unwrap().is_null());
    }
}
