use std::time::Instant;

use super::{central_region, mean_score, rank_and_cap, select_n, CandidateBox, DecodeConfig, StageTimes};
use crate::error::Result;
use crate::geometry::{BoxGeometry, Detection, Keypoint};
use crate::keypoints::{apply_offsets, attach_embeddings, extract_peaks};
use crate::scene::KeypointMaps;

/// Candidate boxes from every compatible (top-left, bottom-right) pair.
///
/// A pair is compatible when both corners share a class, the top-left lies
/// strictly above and left of the bottom-right, and their embeddings differ
/// by less than `embed_threshold` (a corner without an embedding matches
/// anything). The box score is the mean of the two corner scores. Output is
/// sorted by score, ties in (tl, br) input order, and capped at
/// `max_candidates`.
pub fn pair_corners(tl: &[Keypoint], br: &[Keypoint], cfg: &DecodeConfig) -> Vec<CandidateBox> {
    let mut out = Vec::new();
    for a in tl {
        for b in br {
            if a.class_id != b.class_id || !(a.x < b.x && a.y < b.y) {
                continue;
            }
            if let (Some(ea), Some(eb)) = (a.embedding, b.embedding) {
                if f64::from(ea - eb).abs() >= cfg.embed_threshold {
                    continue;
                }
            }
            out.push(CandidateBox {
                class_id: a.class_id,
                geometry: BoxGeometry::new(a.x, a.y, b.x, b.y),
                score: mean_score(&[a.score, b.score]),
                tl_source: *a,
                br_source: *b,
                center_sources: Vec::new(),
            });
        }
    }
    rank_and_cap(&mut out, cfg.max_candidates);
    out
}

/// Keeps candidates whose central region holds a same-class center keypoint.
///
/// The best-scoring qualifying center (first in `centers` order on ties) is
/// recorded and the box is rescored as the mean of the three keypoint
/// scores. Input order is preserved.
pub fn center_filter_sr(cands: &[CandidateBox], centers: &[Keypoint], cfg: &DecodeConfig) -> Vec<CandidateBox> {
    cands
        .iter()
        .filter_map(|cand| {
            let region = central_region(&cand.geometry, select_n(&cand.geometry, cfg)).ok()?;
            let best = centers
                .iter()
                .filter(|c| c.class_id == cand.class_id && region.contains(c.x, c.y))
                .fold(None::<&Keypoint>, |best, c| match best {
                    Some(b) if b.score >= c.score => Some(b),
                    _ => Some(c),
                })?;
            let mut kept = cand.clone();
            kept.score = mean_score(&[cand.tl_source.score, cand.br_source.score, best.score]);
            kept.center_sources = vec![*best];
            Some(kept)
        })
        .collect()
}

/// Top-left, bottom-right and center keypoints in image coordinates, corners
/// carrying their embeddings.
pub fn sr_keypoints(maps: &KeypointMaps, cfg: &DecodeConfig) -> Result<[Vec<Keypoint>; 3]> {
    let peak_cfg = cfg.peak_config();
    let mut tl = extract_peaks(&maps.tl_heat, &peak_cfg);
    attach_embeddings(&mut tl, &maps.tl_embed)?;
    let tl = apply_offsets(&tl, &maps.tl_offset, maps.stride)?;
    let mut br = extract_peaks(&maps.br_heat, &peak_cfg);
    attach_embeddings(&mut br, &maps.br_embed)?;
    let br = apply_offsets(&br, &maps.br_offset, maps.stride)?;
    let ct = extract_peaks(&maps.ct_heat, &peak_cfg);
    let ct = apply_offsets(&ct, &maps.ct_offset, maps.stride)?;
    Ok([tl, br, ct])
}

/// Single-resolution decode returning candidates and per-stage timings.
pub fn decode_sr_candidates(maps: &KeypointMaps, cfg: &DecodeConfig) -> Result<(Vec<CandidateBox>, StageTimes)> {
    cfg.validate()?;
    maps.validate()?;
    let mut times = StageTimes::default();

    let t = Instant::now();
    let [tl, br, ct] = sr_keypoints(maps, cfg)?;
    times.peaks = t.elapsed();

    let t = Instant::now();
    let cands = pair_corners(&tl, &br, cfg);
    times.pairing = t.elapsed();

    let t = Instant::now();
    let cands = if cfg.center_filter {
        center_filter_sr(&cands, &ct, cfg)
    } else {
        cands
    };
    times.filter = t.elapsed();
    Ok((cands, times))
}

pub fn decode_sr(image_id: u64, maps: &KeypointMaps, cfg: &DecodeConfig) -> Result<Vec<Detection>> {
    let (cands, _) = decode_sr_candidates(maps, cfg)?;
    Ok(super::to_detections(&cands, image_id))
}
