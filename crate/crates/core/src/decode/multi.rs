use std::collections::HashMap;
use std::time::Instant;

use super::{central_region, mean_score, rank_and_cap, select_n, sr_keypoints, CandidateBox, DecodeConfig, StageTimes};
use crate::error::{Error, Result};
use crate::geometry::{BoxGeometry, Detection, GridCell, Keypoint};
use crate::grid::LevelSpec;
use crate::keypoints::refine_keypoint;
use crate::scene::{LevelGrids, SceneGrids};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    TopLeft,
    BottomRight,
}

/// One feature point's vote for a sub-box corner and the box center.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBoxPrediction {
    pub level: LevelSpec,
    pub branch: Branch,
    pub class_id: usize,
    pub cell: GridCell,
    pub feature_point: (f64, f64),
    pub cls_score: f64,
    pub corner_vector: (f64, f64),
    pub center_vector: (f64, f64),
}

impl SubBoxPrediction {
    pub fn corner(&self) -> (f64, f64) {
        (
            self.feature_point.0 + self.corner_vector.0,
            self.feature_point.1 + self.corner_vector.1,
        )
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.feature_point.0 + self.center_vector.0,
            self.feature_point.1 + self.center_vector.1,
        )
    }
}

/// A prediction whose corner and center have been snapped onto heatmap
/// peaks (or left at the regressed location when no peak is close).
///
/// Unsnapped points carry the feature point's class score.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSubBox {
    pub level: LevelSpec,
    pub branch: Branch,
    pub class_id: usize,
    pub cls_score: f64,
    pub corner: Keypoint,
    pub center: Keypoint,
}

/// Top `k_per_level` feature points of one branch at one level, ranked by
/// class score (desc), then class, then cell.
pub fn predict_subboxes(level: &LevelGrids, branch: Branch, cfg: &DecodeConfig) -> Vec<SubBoxPrediction> {
    let (cls, reg) = match branch {
        Branch::TopLeft => (&level.tl_cls, &level.tl_reg),
        Branch::BottomRight => (&level.br_cls, &level.br_reg),
    };
    let (h, w) = (cls.height(), cls.width());
    let mut hits = Vec::new();
    for c in 0..cls.channels() {
        for (idx, &v) in cls.plane(c).iter().enumerate() {
            if v > cfg.feature_score_floor {
                hits.push((v, c, idx));
            }
        }
    }
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    hits.truncate(cfg.k_per_level);

    let s = f64::from(level.spec.stride);
    hits.into_iter()
        .map(|(v, c, idx)| {
            let (i, j) = (idx / w, idx % w);
            debug_assert!(i < h);
            let r = |ch| f64::from(reg.get(ch, i, j));
            SubBoxPrediction {
                level: level.spec.clone(),
                branch,
                class_id: c,
                cell: GridCell { row: i, col: j },
                feature_point: ((j as f64 + 0.5) * s, (i as f64 + 0.5) * s),
                cls_score: f64::from(v),
                corner_vector: (r(0), r(1)),
                center_vector: (r(2), r(3)),
            }
        })
        .collect()
}

/// Snaps each prediction's corner onto `corner_peaks` and its center onto
/// `center_peaks`, within `snap_radius_factor · stride` pixels.
pub fn refine_subboxes(
    preds: &[SubBoxPrediction],
    corner_peaks: &[Keypoint],
    center_peaks: &[Keypoint],
    cfg: &DecodeConfig,
) -> Vec<RefinedSubBox> {
    preds
        .iter()
        .map(|p| {
            let radius = cfg.snap_radius_factor * f64::from(p.level.stride);
            let (cx, cy) = p.corner();
            let (mx, my) = p.center();
            let corner = Keypoint::new(p.class_id, cx, cy, p.cls_score);
            let center = Keypoint::new(p.class_id, mx, my, p.cls_score);
            RefinedSubBox {
                level: p.level.clone(),
                branch: p.branch,
                class_id: p.class_id,
                cls_score: p.cls_score,
                corner: refine_keypoint(&corner, corner_peaks, radius),
                center: refine_keypoint(&center, center_peaks, radius),
            }
        })
        .collect()
}

// Positions closer than 1/1024 px count as the same corner.
fn quantize(v: f64) -> i64 {
    (v * 1024.0).round() as i64
}

/// Collapses feature points that landed on the same corner, keeping the one
/// with the highest class score (earliest on ties).
fn merge_duplicates(subs: Vec<RefinedSubBox>, per_level: bool) -> Vec<RefinedSubBox> {
    let mut slot: HashMap<(Branch, usize, Option<String>, i64, i64), usize> = HashMap::new();
    let mut out: Vec<RefinedSubBox> = Vec::new();
    for s in subs {
        let key = (
            s.branch,
            s.class_id,
            per_level.then(|| s.level.level_id.clone()),
            quantize(s.corner.x),
            quantize(s.corner.y),
        );
        match slot.get(&key) {
            Some(&i) => {
                if s.cls_score > out[i].cls_score {
                    out[i] = s;
                }
            }
            None => {
                slot.insert(key, out.len());
                out.push(s);
            }
        }
    }
    out
}

/// Every same-class, correctly ordered (top-left, bottom-right) pair, scored
/// by the mean corner score. Both branches' centers are carried along.
pub fn pair_subboxes(tl: &[RefinedSubBox], br: &[RefinedSubBox], cfg: &DecodeConfig) -> Vec<CandidateBox> {
    let mut out = Vec::new();
    for a in tl {
        for b in br {
            if a.class_id != b.class_id || !(a.corner.x < b.corner.x && a.corner.y < b.corner.y) {
                continue;
            }
            if cfg.pair_within_level && a.level != b.level {
                continue;
            }
            out.push(CandidateBox {
                class_id: a.class_id,
                geometry: BoxGeometry::new(a.corner.x, a.corner.y, b.corner.x, b.corner.y),
                score: mean_score(&[a.corner.score, b.corner.score]),
                tl_source: a.corner,
                br_source: b.corner,
                center_sources: vec![a.center, b.center],
            });
        }
    }
    rank_and_cap(&mut out, cfg.max_candidates);
    out
}

/// Keeps candidates whose predicted centers fall in the central region.
///
/// With `require_both_centers` every carried center must be inside and of
/// the box's class; otherwise one suffices. Survivors are rescored as the
/// mean of the corner scores and the inside centers' scores.
pub fn center_filter_mr(cands: &[CandidateBox], cfg: &DecodeConfig) -> Vec<CandidateBox> {
    cands
        .iter()
        .filter_map(|cand| {
            let region = central_region(&cand.geometry, select_n(&cand.geometry, cfg)).ok()?;
            let inside: Vec<Keypoint> = cand
                .center_sources
                .iter()
                .filter(|c| c.class_id == cand.class_id && region.contains(c.x, c.y))
                .copied()
                .collect();
            let enough = if cfg.require_both_centers {
                !cand.center_sources.is_empty() && inside.len() == cand.center_sources.len()
            } else {
                !inside.is_empty()
            };
            if !enough {
                return None;
            }
            let mut scores = vec![cand.tl_source.score, cand.br_source.score];
            scores.extend(inside.iter().map(|c| c.score));
            let mut kept = cand.clone();
            kept.score = mean_score(&scores);
            kept.center_sources = inside;
            Some(kept)
        })
        .collect()
}

/// Multi-resolution decode returning candidates and per-stage timings.
///
/// Heatmap keypoints are needed only when refinement is on.
pub fn decode_mr_candidates(grids: &SceneGrids, cfg: &DecodeConfig) -> Result<(Vec<CandidateBox>, StageTimes)> {
    cfg.validate()?;
    let mut times = StageTimes::default();

    let t = Instant::now();
    let [tl_peaks, br_peaks, ct_peaks] = if cfg.refine {
        let maps = grids
            .keypoints
            .as_ref()
            .ok_or_else(|| Error::Config("missing grid `tl_heat` (needed for refinement)".into()))?;
        maps.validate()?;
        sr_keypoints(maps, cfg)?
    } else {
        [Vec::new(), Vec::new(), Vec::new()]
    };
    let mut tl = Vec::new();
    let mut br = Vec::new();
    for level in &grids.levels {
        level.validate()?;
        let p = predict_subboxes(level, Branch::TopLeft, cfg);
        tl.extend(refine_subboxes(&p, &tl_peaks, &ct_peaks, cfg));
        let p = predict_subboxes(level, Branch::BottomRight, cfg);
        br.extend(refine_subboxes(&p, &br_peaks, &ct_peaks, cfg));
    }
    let tl = merge_duplicates(tl, cfg.pair_within_level);
    let br = merge_duplicates(br, cfg.pair_within_level);
    times.peaks = t.elapsed();

    let t = Instant::now();
    let cands = pair_subboxes(&tl, &br, cfg);
    times.pairing = t.elapsed();

    let t = Instant::now();
    let cands = if cfg.center_filter {
        center_filter_mr(&cands, cfg)
    } else {
        cands
    };
    times.filter = t.elapsed();
    Ok((cands, times))
}

pub fn decode_mr(image_id: u64, grids: &SceneGrids, cfg: &DecodeConfig) -> Result<Vec<Detection>> {
    let (cands, _) = decode_mr_candidates(grids, cfg)?;
    Ok(super::to_detections(&cands, image_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(branch: Branch, level: &str, stride: u32, class: usize, x: f64, y: f64, score: f64) -> RefinedSubBox {
        RefinedSubBox {
            level: LevelSpec::new(level, stride),
            branch,
            class_id: class,
            cls_score: score,
            corner: Keypoint::new(class, x, y, score),
            center: Keypoint::new(class, 0.0, 0.0, score),
        }
    }

    #[test]
    fn three_by_two_gives_six() {
        let cfg = DecodeConfig::default();
        let tl: Vec<_> = (0..3)
            .map(|i| sub(Branch::TopLeft, "P3", 8, 1, i as f64, i as f64, 0.5))
            .collect();
        let br: Vec<_> = (0..2)
            .map(|i| sub(Branch::BottomRight, "P3", 8, 1, 50.0 + i as f64, 60.0, 0.5))
            .collect();
        assert_eq!(pair_subboxes(&tl, &br, &cfg).len(), 6);
    }

    #[test]
    fn cross_level_pairs_unless_restricted() {
        let tl = [sub(Branch::TopLeft, "P3", 8, 0, 10.0, 10.0, 0.9)];
        let br = [sub(Branch::BottomRight, "P4", 16, 0, 90.0, 90.0, 0.7)];
        let c = pair_subboxes(&tl, &br, &DecodeConfig::default());
        assert_eq!(c.len(), 1);
        assert!((c[0].score - 0.8).abs() < 1e-12);
        assert_eq!(c[0].center_sources.len(), 2);
        let within = DecodeConfig {
            pair_within_level: true,
            ..DecodeConfig::default()
        };
        assert!(pair_subboxes(&tl, &br, &within).is_empty());
    }

    fn candidate(centers: Vec<Keypoint>) -> CandidateBox {
        CandidateBox {
            class_id: 0,
            geometry: BoxGeometry::new(10.0, 10.0, 40.0, 40.0),
            score: 0.85,
            tl_source: Keypoint::new(0, 10.0, 10.0, 0.9),
            br_source: Keypoint::new(0, 40.0, 40.0, 0.8),
            center_sources: centers,
        }
    }

    #[test]
    fn both_centers_inside_averages_four() {
        let cfg = DecodeConfig::default();
        let c = candidate(vec![
            Keypoint::new(0, 25.0, 25.0, 0.7),
            Keypoint::new(0, 24.0, 26.0, 0.6),
        ]);
        let kept = center_filter_mr(&[c], &cfg);
        assert_eq!(kept.len(), 1);
        assert!((kept[0].score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn one_center_outside_removes() {
        let cfg = DecodeConfig::default();
        let one = candidate(vec![
            Keypoint::new(0, 25.0, 25.0, 0.7),
            Keypoint::new(0, 12.0, 12.0, 0.6),
        ]);
        assert!(center_filter_mr(std::slice::from_ref(&one), &cfg).is_empty());
        let none = candidate(vec![
            Keypoint::new(0, 12.0, 12.0, 0.7),
            Keypoint::new(0, 38.0, 12.0, 0.6),
        ]);
        assert!(center_filter_mr(&[none], &cfg).is_empty());
        let wrong_class = candidate(vec![
            Keypoint::new(0, 25.0, 25.0, 0.7),
            Keypoint::new(2, 25.0, 25.0, 0.6),
        ]);
        assert!(center_filter_mr(&[wrong_class], &cfg).is_empty());

        let lenient = DecodeConfig {
            require_both_centers: false,
            ..DecodeConfig::default()
        };
        let kept = center_filter_mr(&[one], &lenient);
        assert!((kept[0].score - 0.8).abs() < 1e-12);
    }

    #[test]
    fn merge_keeps_best_duplicate() {
        let a = sub(Branch::TopLeft, "P3", 8, 0, 10.0, 10.0, 0.4);
        let b = sub(Branch::TopLeft, "P3", 8, 0, 10.0, 10.0, 0.9);
        let c = sub(Branch::TopLeft, "P4", 16, 0, 10.0, 10.0, 0.5);
        let merged = merge_duplicates(vec![a.clone(), b.clone(), c.clone()], false);
        assert_eq!(merged, vec![b.clone()]);
        let merged = merge_duplicates(vec![a, b.clone(), c.clone()], true);
        assert_eq!(merged, vec![b, c]);
    }

    #[test]
    fn predictions_read_vectors_from_feature_point() {
        let mut level = LevelGrids::zeros(LevelSpec::new("P3", 8), 2, 4, 4);
        level.tl_cls.set(1, 2, 1, 0.6);
        level.tl_cls.set(0, 0, 0, 0.9);
        for (ch, v) in [(0, -4.0), (1, -2.0), (2, 6.0), (3, 10.0)] {
            level.tl_reg.set(ch, 2, 1, v);
        }
        let cfg = DecodeConfig {
            k_per_level: 1,
            ..DecodeConfig::default()
        };
        assert_eq!(predict_subboxes(&level, Branch::TopLeft, &cfg)[0].class_id, 0);
        let preds = predict_subboxes(&level, Branch::TopLeft, &DecodeConfig::default());
        assert_eq!(preds.len(), 2);
        let p = &preds[1];
        assert_eq!(p.feature_point, (12.0, 20.0));
        assert_eq!(p.corner(), (8.0, 18.0));
        assert_eq!(p.center(), (18.0, 30.0));
        assert!(predict_subboxes(&level, Branch::BottomRight, &cfg).is_empty());
    }

    #[test]
    fn refinement_snaps_within_radius_only() {
        let pred = SubBoxPrediction {
            level: LevelSpec::new("P4", 16),
            branch: Branch::TopLeft,
            class_id: 0,
            cell: GridCell { row: 0, col: 0 },
            feature_point: (8.0, 8.0),
            cls_score: 0.5,
            corner_vector: (20.0, 0.0),
            center_vector: (0.0, 0.0),
        };
        let near = Keypoint::new(0, 8.0, 8.0, 0.95).with_cell(2, 2);
        let r = refine_subboxes(std::slice::from_ref(&pred), &[near], &[], &DecodeConfig::default());
        assert_eq!((r[0].corner.x, r[0].corner.y, r[0].corner.score), (8.0, 8.0, 0.95));
        assert_eq!(r[0].center.score, 0.5);
        let tight = DecodeConfig {
            snap_radius_factor: 1.0,
            ..DecodeConfig::default()
        };
        let r = refine_subboxes(&[pred], &[near], &[], &tight);
        assert_eq!((r[0].corner.x, r[0].corner.y), (28.0, 8.0));
    }
}
