//! Synthetic scenes and the grids a perfect detector head would produce.
//!
//! A scene is a handful of random boxes. Rendering turns them into keypoint
//! heatmaps (Gaussian blobs peaking at each corner and center), embeddings,
//! sub-cell offsets and, for a pyramid, per-level sub-box classification
//! and regression grids. Decoding a rendered scene should give the boxes
//! back, which is what most of the tests in this crate lean on.
//!
//! Box coordinates are multiples of 1/8 px. Every offset and regression
//! value is then a dyadic rational that `f32` stores exactly, so decoded
//! geometry matches the ground truth bit for bit.
//!
//! Generation is rejection sampling: a candidate scene is rendered and
//! thrown away unless every ground-truth keypoint is a strict local maximum
//! of its heatmap and no two keypoints of one type share a cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::{central_region, Branch};
use crate::error::{Error, Result};
use crate::geometry::{BoxGeometry, GroundTruthBox};
use crate::grid::{validate_levels, DenseGrid, LevelSpec};
use crate::keypoints::is_local_max;
use crate::scene::{KeypointMaps, LevelGrids, Scene, SceneGrids, SpuriousPair};
use crate::suppress::iou;

/// Coordinates are quantized to this many steps per pixel.
pub const SUBPIXEL: f64 = 8.0;

/// How sampled boxes may overlap each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapPolicy {
    Any,
    DisjointSameClass,
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub num_classes: usize,
    /// Inclusive range of boxes per scene.
    pub box_count: (usize, usize),
    /// Range of the longer box side, pixels.
    pub long_side: (f64, f64),
    pub min_short_side: f64,
    /// Range of `long / short`.
    pub aspect: (f64, f64),
    pub overlap: OverlapPolicy,
    /// Stride of the keypoint heatmaps.
    pub stride: u32,
    /// Pyramid levels for sub-box grids; empty renders keypoint maps only.
    pub levels: Vec<LevelSpec>,
    /// Peak height of each ground-truth keypoint, drawn per keypoint.
    pub confidence: (f32, f32),
    /// Spurious corner pairs planted per scene.
    pub noise_pairs: usize,
    pub noise_score: (f32, f32),
    /// Also render the horizontally mirrored image.
    pub flip: bool,
    pub min_overlap: f64,
    pub max_attempts: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 512,
            height: 512,
            num_classes: 4,
            box_count: (1, 8),
            long_side: (24.0, 256.0),
            min_short_side: 8.0,
            aspect: (1.0, 3.0),
            overlap: OverlapPolicy::DisjointSameClass,
            stride: 4,
            levels: Vec::new(),
            confidence: (1.0, 1.0),
            noise_pairs: 0,
            noise_score: (0.5, 0.9),
            flip: false,
            min_overlap: 0.3,
            max_attempts: 500,
        }
    }
}

impl SceneSpec {
    /// A pyramid scene: 768 px square, heatmaps at stride 8, levels P3–P5.
    pub fn multi_resolution(seed: u64) -> Self {
        Self {
            seed,
            width: 768,
            height: 768,
            long_side: (32.0, 480.0),
            overlap: OverlapPolicy::Disjoint,
            stride: 8,
            levels: LevelSpec::standard_pyramid().into_iter().take(3).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Spec(msg));
        if self.width == 0 || self.height == 0 || self.stride == 0 {
            return bad("image size and stride must be positive".into());
        }
        if self.num_classes == 0 {
            return bad("need at least one class".into());
        }
        if self.box_count.0 > self.box_count.1 {
            return bad(format!("box_count range {:?} is empty", self.box_count));
        }
        if !(self.aspect.0 >= 1.0 && self.aspect.1 >= self.aspect.0) {
            return bad(format!("aspect range {:?} must satisfy 1 <= min <= max", self.aspect));
        }
        if !(self.long_side.0 > 0.0 && self.long_side.1 >= self.long_side.0 && self.min_short_side > 0.0) {
            return bad(format!("long_side range {:?} is invalid", self.long_side));
        }
        let smallest_long = self.long_side.0.max(self.min_short_side * self.aspect.0);
        if smallest_long > self.long_side.1 {
            return bad(format!(
                "no box satisfies long side <= {} with short side >= {} at aspect {}",
                self.long_side.1, self.min_short_side, self.aspect.0
            ));
        }
        let room = f64::from(self.width.max(self.height)) - 2.0 / SUBPIXEL;
        if smallest_long >= room {
            return bad(format!(
                "smallest box ({smallest_long} px) does not fit a {}x{} image",
                self.width, self.height
            ));
        }
        for (what, (lo, hi)) in [("confidence", self.confidence), ("noise_score", self.noise_score)] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return bad(format!("{what} range ({lo}, {hi}) must lie in (0, 1]"));
            }
        }
        if !(self.min_overlap > 0.0 && self.min_overlap < 1.0) {
            return bad("min_overlap must lie in (0, 1)".into());
        }
        if !self.levels.is_empty() {
            validate_levels(&self.levels).map_err(|e| Error::Spec(e.to_string()))?;
        }
        Ok(())
    }
}

/// Peak heights of one object's three keypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitudes {
    pub tl: f32,
    pub br: f32,
    pub ct: f32,
}

impl Default for Amplitudes {
    fn default() -> Self {
        Self {
            tl: 1.0,
            br: 1.0,
            ct: 1.0,
        }
    }
}

/// Keypoint type, matching the three heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Tl,
    Br,
    Ct,
}

fn keypoint_of(b: &BoxGeometry, kind: Kind) -> (f64, f64) {
    match kind {
        Kind::Tl => (b.tl_x, b.tl_y),
        Kind::Br => (b.br_x, b.br_y),
        Kind::Ct => b.center(),
    }
}

/// Heatmap cell of an image point and the in-cell offset, both at `stride`.
pub fn cell_and_offset(x: f64, y: f64, stride: u32) -> ((usize, usize), (f64, f64)) {
    let s = f64::from(stride);
    let (gx, gy) = (x / s, y / s);
    let (col, row) = (gx.floor(), gy.floor());
    ((row as usize, col as usize), (gx - col, gy - row))
}

/// Largest corner displacement (in the same units as `w`, `h`) that keeps
/// a box's IoU with the original at or above `min_overlap`, taking the worst
/// of three cases: both corners shifted the same way, both pulled inward,
/// both pushed outward.
pub fn gaussian_radius(w: f64, h: f64, min_overlap: f64) -> f64 {
    let o = min_overlap;
    let smaller_root = |a: f64, b: f64, c: f64| (b - (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    let shifted = smaller_root(1.0, w + h, w * h * (1.0 - o) / (1.0 + o));
    let shrunk = smaller_root(4.0, 2.0 * (w + h), (1.0 - o) * w * h);
    let b3 = 2.0 * o * (w + h);
    let grown = (-b3 + (b3 * b3 + 16.0 * o * (1.0 - o) * w * h).sqrt()) / (8.0 * o);
    shifted.min(shrunk).min(grown).max(0.0)
}

fn blob_radius(b: &BoxGeometry, stride: u32, min_overlap: f64) -> usize {
    let s = f64::from(stride);
    gaussian_radius(b.width() / s, b.height() / s, min_overlap).floor() as usize
}

/// Max-combines a Gaussian of height `amp` and `σ = radius / 3` centered on
/// `(row, col)` into channel `c`. Radius 0 sets the single cell.
fn draw_gaussian(grid: &mut DenseGrid, c: usize, row: usize, col: usize, radius: usize, amp: f32) {
    let (h, w) = (grid.height(), grid.width());
    let sigma = radius as f64 / 3.0;
    for i in row.saturating_sub(radius)..=(row + radius).min(h - 1) {
        for j in col.saturating_sub(radius)..=(col + radius).min(w - 1) {
            let (di, dj) = (i as f64 - row as f64, j as f64 - col as f64);
            let v = if radius == 0 {
                amp
            } else {
                (f64::from(amp) * (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()) as f32
            };
            if v > grid.get(c, i, j) {
                grid.set(c, i, j, v);
            }
        }
    }
}

/// Keypoint maps for `boxes` with unit peaks. Object `k` gets embedding `k`.
pub fn render_sr(boxes: &[GroundTruthBox], width: u32, height: u32, num_classes: usize, stride: u32) -> KeypointMaps {
    let amps = vec![Amplitudes::default(); boxes.len()];
    render_sr_with(boxes, &amps, width, height, num_classes, stride, 0.3)
}

/// [`render_sr`] with per-object peak heights and blob overlap.
pub fn render_sr_with(
    boxes: &[GroundTruthBox],
    amps: &[Amplitudes],
    width: u32,
    height: u32,
    num_classes: usize,
    stride: u32,
    min_overlap: f64,
) -> KeypointMaps {
    let (h, w) = (height.div_ceil(stride) as usize, width.div_ceil(stride) as usize);
    let mut maps = KeypointMaps::zeros(stride, num_classes, h, w);
    for (k, (gt, amp)) in boxes.iter().zip(amps).enumerate() {
        let radius = blob_radius(&gt.geometry, stride, min_overlap);
        for (kind, a) in [(Kind::Tl, amp.tl), (Kind::Br, amp.br), (Kind::Ct, amp.ct)] {
            let (x, y) = keypoint_of(&gt.geometry, kind);
            let ((row, col), (dx, dy)) = cell_and_offset(x, y, stride);
            let (heat, offset, embed) = match kind {
                Kind::Tl => (&mut maps.tl_heat, &mut maps.tl_offset, Some(&mut maps.tl_embed)),
                Kind::Br => (&mut maps.br_heat, &mut maps.br_offset, Some(&mut maps.br_embed)),
                Kind::Ct => (&mut maps.ct_heat, &mut maps.ct_offset, None),
            };
            draw_gaussian(heat, gt.class_id, row, col, radius, a);
            offset.set(0, row, col, dx as f32);
            offset.set(1, row, col, dy as f32);
            if let Some(e) = embed {
                e.set(0, row, col, k as f32);
            }
        }
    }
    maps
}

/// Index into `levels` for a box: the last level whose stride is at most
/// the longer side over 8, or the first level when none is.
pub fn assign_level(b: &BoxGeometry, levels: &[LevelSpec]) -> usize {
    let target = b.width().max(b.height()) / 8.0;
    levels.iter().rposition(|l| f64::from(l.stride) <= target).unwrap_or(0)
}

/// The quadrant of `b` a branch's feature points are sampled from.
pub fn sub_box(b: &BoxGeometry, branch: Branch) -> BoxGeometry {
    let (cx, cy) = b.center();
    match branch {
        Branch::TopLeft => BoxGeometry::new(b.tl_x, b.tl_y, cx, cy),
        Branch::BottomRight => BoxGeometry::new(cx, cy, b.br_x, b.br_y),
    }
}

/// Feature cells of a sub-box with their class scores.
///
/// A cell belongs to the sub-box when its center lies in the half-open
/// `[tl, br)` rectangle; if none does, the cell containing the sub-box
/// center stands in. Scores are centerness normalised so the best cell of
/// the sub-box scores 1.
pub fn sub_box_cells(sub: &BoxGeometry, stride: u32, grid_h: usize, grid_w: usize) -> Vec<(usize, usize, f32)> {
    let s = f64::from(stride);
    let span = |lo: f64, hi: f64, n: usize| {
        let first = (lo / s).floor().max(0.0) as usize;
        let last = ((hi / s).floor() as usize).min(n - 1);
        (first..=last).filter(move |&k| {
            let c = (k as f64 + 0.5) * s;
            c >= lo && c < hi
        })
    };
    let mut cells = Vec::new();
    for i in span(sub.tl_y, sub.br_y, grid_h) {
        for j in span(sub.tl_x, sub.br_x, grid_w) {
            let (px, py) = ((j as f64 + 0.5) * s, (i as f64 + 0.5) * s);
            let ratio = |a: f64, b: f64| if a.max(b) > 0.0 { a.min(b) / a.max(b) } else { 0.0 };
            let c = (ratio(px - sub.tl_x, sub.br_x - px) * ratio(py - sub.tl_y, sub.br_y - py)).sqrt();
            cells.push((i, j, c));
        }
    }
    if cells.is_empty() {
        let (cx, cy) = sub.center();
        let i = ((cy / s).floor() as usize).min(grid_h - 1);
        let j = ((cx / s).floor() as usize).min(grid_w - 1);
        return vec![(i, j, 1.0)];
    }
    let best = cells.iter().map(|c| c.2).fold(0.0, f64::max);
    cells
        .into_iter()
        .map(|(i, j, c)| {
            let score = if best > 0.0 { (c / best).max(0.01) } else { 1.0 };
            (i, j, score as f32)
        })
        .collect()
}

/// Per-level sub-box grids. Each box is drawn on its assigned level only;
/// where two boxes claim one cell, the smaller box wins.
pub fn render_mr(
    boxes: &[GroundTruthBox],
    width: u32,
    height: u32,
    num_classes: usize,
    levels: &[LevelSpec],
) -> Vec<LevelGrids> {
    let mut out: Vec<LevelGrids> = levels
        .iter()
        .map(|l| LevelGrids::zeros(l.clone(), num_classes, l.cells(height), l.cells(width)))
        .collect();
    let mut order: Vec<&GroundTruthBox> = boxes.iter().collect();
    order.sort_by(|a, b| b.geometry.area().total_cmp(&a.geometry.area()));
    for gt in order {
        let grids = &mut out[assign_level(&gt.geometry, levels)];
        let (gh, gw) = (grids.tl_cls.height(), grids.tl_cls.width());
        let s = f64::from(grids.spec.stride);
        let (cx, cy) = gt.geometry.center();
        for branch in [Branch::TopLeft, Branch::BottomRight] {
            let (corner, cls, reg) = match branch {
                Branch::TopLeft => (
                    (gt.geometry.tl_x, gt.geometry.tl_y),
                    &mut grids.tl_cls,
                    &mut grids.tl_reg,
                ),
                Branch::BottomRight => (
                    (gt.geometry.br_x, gt.geometry.br_y),
                    &mut grids.br_cls,
                    &mut grids.br_reg,
                ),
            };
            for (i, j, score) in sub_box_cells(&sub_box(&gt.geometry, branch), grids.spec.stride, gh, gw) {
                let (px, py) = ((j as f64 + 0.5) * s, (i as f64 + 0.5) * s);
                for c in 0..num_classes {
                    cls.set(c, i, j, if c == gt.class_id { score } else { 0.0 });
                }
                for (ch, v) in [corner.0 - px, corner.1 - py, cx - px, cy - py].into_iter().enumerate() {
                    reg.set(ch, i, j, v as f32);
                }
            }
        }
    }
    out
}

/// Do the sub-box feature cells of boxes sharing a level stay apart?
fn mr_cells_disjoint(boxes: &[GroundTruthBox], width: u32, height: u32, levels: &[LevelSpec]) -> bool {
    let mut claimed = std::collections::HashSet::new();
    for gt in boxes {
        let li = assign_level(&gt.geometry, levels);
        let l = &levels[li];
        for branch in [Branch::TopLeft, Branch::BottomRight] {
            for (i, j, _) in sub_box_cells(
                &sub_box(&gt.geometry, branch),
                l.stride,
                l.cells(height),
                l.cells(width),
            ) {
                if !claimed.insert((li, branch, i, j)) {
                    return false;
                }
            }
        }
    }
    true
}

fn heat_for(maps: &KeypointMaps, kind: Kind) -> &DenseGrid {
    match kind {
        Kind::Tl => &maps.tl_heat,
        Kind::Br => &maps.br_heat,
        Kind::Ct => &maps.ct_heat,
    }
}

/// Every ground-truth keypoint is a strict local max of its class channel
/// and no two keypoints of one type share a cell.
fn keypoints_recoverable(maps: &KeypointMaps, boxes: &[GroundTruthBox]) -> bool {
    let (h, w) = (maps.height(), maps.width());
    for kind in [Kind::Tl, Kind::Br, Kind::Ct] {
        let heat = heat_for(maps, kind);
        let mut seen = std::collections::HashSet::new();
        for gt in boxes {
            let (x, y) = keypoint_of(&gt.geometry, kind);
            let ((row, col), _) = cell_and_offset(x, y, maps.stride);
            if row >= h || col >= w || !seen.insert((row, col)) {
                return false;
            }
            let plane = heat.plane(gt.class_id);
            if !(plane[row * w + col] > 0.0 && is_local_max(plane, h, w, row, col, 3)) {
                return false;
            }
        }
    }
    true
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn uniform_f32(rng: &mut ChaCha8Rng, (lo, hi): (f32, f32)) -> f32 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn quantize(v: f64) -> i64 {
    (v * SUBPIXEL).round() as i64
}

/// A box on the 1/8 px lattice, at least one step away from every image
/// border so that its mirror image is also inside the image.
fn sample_box(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Option<BoxGeometry> {
    let ratio = uniform(rng, spec.aspect);
    let lo = spec.long_side.0.max(spec.min_short_side * ratio);
    if lo > spec.long_side.1 {
        return None;
    }
    let long = uniform(rng, (lo, spec.long_side.1));
    let short = long / ratio;
    let (w, h) = if rng.gen_bool(0.5) {
        (long, short)
    } else {
        (short, long)
    };
    let (wu, hu) = (quantize(w).max(1), quantize(h).max(1));
    let (iw, ih) = (i64::from(spec.width) * 8, i64::from(spec.height) * 8);
    if wu + 2 > iw || hu + 2 > ih {
        return None;
    }
    let q = (wu.max(hu) as f64) / (wu.min(hu) as f64);
    if q < spec.aspect.0 || q > spec.aspect.1 || (wu.min(hu) as f64) < spec.min_short_side * SUBPIXEL {
        return None;
    }
    let xu = rng.gen_range(1..iw - wu);
    let yu = rng.gen_range(1..ih - hu);
    let step = 1.0 / SUBPIXEL;
    Some(BoxGeometry::new(
        xu as f64 * step,
        yu as f64 * step,
        (xu + wu) as f64 * step,
        (yu + hu) as f64 * step,
    ))
}

fn placement_ok(policy: OverlapPolicy, placed: &[GroundTruthBox], cand: &GroundTruthBox) -> bool {
    placed.iter().all(|p| {
        let clash = p.geometry.intersects(&cand.geometry);
        match policy {
            OverlapPolicy::Any => true,
            OverlapPolicy::DisjointSameClass => !(clash && p.class_id == cand.class_id),
            OverlapPolicy::Disjoint => !clash,
        }
    })
}

fn render_all(boxes: &[GroundTruthBox], amps: &[Amplitudes], spec: &SceneSpec) -> SceneGrids {
    SceneGrids {
        keypoints: Some(render_sr_with(
            boxes,
            amps,
            spec.width,
            spec.height,
            spec.num_classes,
            spec.stride,
            spec.min_overlap,
        )),
        levels: if spec.levels.is_empty() {
            Vec::new()
        } else {
            render_mr(boxes, spec.width, spec.height, spec.num_classes, &spec.levels)
        },
    }
}

fn scene_rng(seed: u64, image_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(image_id);
    rng
}

/// One scene for `spec`, reproducible from `(spec.seed, image_id)`.
pub fn generate_scene(spec: &SceneSpec, image_id: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = scene_rng(spec.seed, image_id);
    for _ in 0..spec.max_attempts {
        if let Some(scene) = try_scene(&mut rng, spec, image_id) {
            return Ok(scene);
        }
    }
    Err(Error::Spec(format!(
        "no valid scene after {} attempts; loosen box count, sizes or overlap policy",
        spec.max_attempts
    )))
}

fn try_scene(rng: &mut ChaCha8Rng, spec: &SceneSpec, image_id: u64) -> Option<Scene> {
    let n = rng.gen_range(spec.box_count.0..=spec.box_count.1);
    let mut boxes: Vec<GroundTruthBox> = Vec::with_capacity(n);
    for _ in 0..n {
        let placed = (0..200).find_map(|_| {
            let geometry = sample_box(rng, spec)?;
            let gt = GroundTruthBox::new(image_id, rng.gen_range(0..spec.num_classes), geometry);
            placement_ok(spec.overlap, &boxes, &gt).then_some(gt)
        })?;
        boxes.push(placed);
    }
    let amps: Vec<Amplitudes> = boxes
        .iter()
        .map(|_| Amplitudes {
            tl: uniform_f32(rng, spec.confidence),
            br: uniform_f32(rng, spec.confidence),
            ct: uniform_f32(rng, spec.confidence),
        })
        .collect();

    let grids = render_all(&boxes, &amps, spec);
    if !keypoints_recoverable(grids.keypoints.as_ref()?, &boxes) {
        return None;
    }
    if !spec.levels.is_empty() && !mr_cells_disjoint(&boxes, spec.width, spec.height, &spec.levels) {
        return None;
    }
    let flipped = if spec.flip {
        let mirrored: Vec<GroundTruthBox> = boxes
            .iter()
            .map(|b| GroundTruthBox {
                geometry: b.geometry.flip_horizontal(f64::from(spec.width)),
                ..*b
            })
            .collect();
        let g = render_all(&mirrored, &amps, spec);
        if !keypoints_recoverable(g.keypoints.as_ref()?, &mirrored) {
            return None;
        }
        if !spec.levels.is_empty() && !mr_cells_disjoint(&mirrored, spec.width, spec.height, &spec.levels) {
            return None;
        }
        Some(g)
    } else {
        None
    };

    let mut scene = Scene {
        image_id,
        width: spec.width,
        height: spec.height,
        num_classes: spec.num_classes,
        ground_truth: boxes,
        grids,
        flipped,
        noise: Vec::new(),
    };
    for _ in 0..spec.noise_pairs {
        let pair = (0..200).find_map(|_| propose_noise(rng, spec, &scene))?;
        plant_noise(&mut scene, &pair);
    }
    Some(scene)
}

/// Cells of every keypoint of one type already in the scene, GT and noise.
fn occupied_cells(scene: &Scene, kind: Kind, stride: u32) -> Vec<(usize, usize)> {
    let gt = scene.ground_truth.iter().map(|b| keypoint_of(&b.geometry, kind));
    let noise = scene.noise.iter().filter_map(|p| match kind {
        Kind::Tl => Some(p.tl),
        Kind::Br => Some(p.br),
        Kind::Ct => None,
    });
    gt.chain(noise).map(|(x, y)| cell_and_offset(x, y, stride).0).collect()
}

/// Can a spike of height `score` go at `cell` of channel `class` and be a
/// strict local max without disturbing any existing peak?
fn spike_fits(heat: &DenseGrid, class: usize, cell: (usize, usize), score: f32, occupied: &[(usize, usize)]) -> bool {
    let (h, w) = (heat.height(), heat.width());
    let (row, col) = cell;
    if row >= h || col >= w {
        return false;
    }
    let far = occupied.iter().all(|&(r, c)| r.abs_diff(row).max(c.abs_diff(col)) >= 2);
    if !far {
        return false;
    }
    for i in row.saturating_sub(1)..=(row + 1).min(h - 1) {
        for j in col.saturating_sub(1)..=(col + 1).min(w - 1) {
            if heat.get(class, i, j) >= score {
                return false;
            }
        }
    }
    true
}

fn propose_noise(rng: &mut ChaCha8Rng, spec: &SceneSpec, scene: &Scene) -> Option<SpuriousPair> {
    let maps = scene.grids.keypoints.as_ref()?;
    let geometry = sample_box(rng, spec)?;
    let class_id = rng.gen_range(0..spec.num_classes);
    if scene.ground_truth.iter().any(|gt| iou(&gt.geometry, &geometry) >= 0.3) {
        return None;
    }
    // no same-class center may confirm the pair, whatever n the decoder picks
    let region = central_region(&geometry, 3).ok()?;
    let confirmed = scene.ground_truth.iter().any(|gt| {
        let (x, y) = gt.geometry.center();
        gt.class_id == class_id && region.contains(x, y)
    });
    if confirmed {
        return None;
    }
    let tl_score = uniform_f32(rng, spec.noise_score);
    let br_score = uniform_f32(rng, spec.noise_score);
    let tl_cell = cell_and_offset(geometry.tl_x, geometry.tl_y, spec.stride).0;
    let br_cell = cell_and_offset(geometry.br_x, geometry.br_y, spec.stride).0;
    if !spike_fits(
        &maps.tl_heat,
        class_id,
        tl_cell,
        tl_score,
        &occupied_cells(scene, Kind::Tl, spec.stride),
    ) || !spike_fits(
        &maps.br_heat,
        class_id,
        br_cell,
        br_score,
        &occupied_cells(scene, Kind::Br, spec.stride),
    ) {
        return None;
    }
    // whole units away from every object embedding, so the pair only
    // ever matches itself
    let embedding = (scene.ground_truth.len() + scene.noise.len()) as f32 + rng.gen_range(-0.2f32..0.2);
    Some(SpuriousPair {
        class_id,
        tl: (geometry.tl_x, geometry.tl_y),
        br: (geometry.br_x, geometry.br_y),
        tl_score,
        br_score,
        embedding,
    })
}

fn plant_noise(scene: &mut Scene, pair: &SpuriousPair) {
    let Some(maps) = scene.grids.keypoints.as_mut() else {
        return;
    };
    let stride = maps.stride;
    for (point, score, heat, offset, embed) in [
        (
            pair.tl,
            pair.tl_score,
            &mut maps.tl_heat,
            &mut maps.tl_offset,
            &mut maps.tl_embed,
        ),
        (
            pair.br,
            pair.br_score,
            &mut maps.br_heat,
            &mut maps.br_offset,
            &mut maps.br_embed,
        ),
    ] {
        let ((row, col), (dx, dy)) = cell_and_offset(point.0, point.1, stride);
        heat.set(pair.class_id, row, col, score);
        offset.set(0, row, col, dx as f32);
        offset.set(1, row, col, dy as f32);
        embed.set(0, row, col, pair.embedding);
    }
    scene.noise.push(*pair);
}

/// Plants `count` spurious corner pairs in an already generated scene.
///
/// Each pair is a top-left and a bottom-right spike of one class with a
/// shared embedding, forming a box that overlaps no ground truth much and
/// whose central region holds no center of its class. Nothing is added to
/// the center heatmap.
pub fn inject_noise(scene: &mut Scene, spec: &SceneSpec, count: usize, seed: u64) -> Result<()> {
    if scene.grids.keypoints.is_none() {
        return Err(Error::Config("scene has no keypoint maps to corrupt".into()));
    }
    let mut rng = scene_rng(seed, scene.image_id);
    for k in 0..count {
        let pair = (0..2000)
            .find_map(|_| propose_noise(&mut rng, spec, scene))
            .ok_or_else(|| Error::Spec(format!("could not place spurious pair {k} of {count}")))?;
        plant_noise(scene, &pair);
    }
    Ok(())
}

/// Adds `(dx, dy)` pixels to the corner vector of every feature cell of one
/// object's branch, simulating a regression head that is off by that much.
pub fn corrupt_regression(scene: &mut Scene, object: usize, branch: Branch, dx: f32, dy: f32) -> Result<()> {
    let gt = scene
        .ground_truth
        .get(object)
        .ok_or_else(|| Error::Contract(format!("scene has no object {object}")))?
        .geometry;
    if scene.grids.levels.is_empty() {
        return Err(Error::Config("scene has no pyramid levels".into()));
    }
    let specs: Vec<LevelSpec> = scene.grids.levels.iter().map(|l| l.spec.clone()).collect();
    let level = &mut scene.grids.levels[assign_level(&gt, &specs)];
    let (gh, gw) = (level.tl_reg.height(), level.tl_reg.width());
    let reg = match branch {
        Branch::TopLeft => &mut level.tl_reg,
        Branch::BottomRight => &mut level.br_reg,
    };
    for (i, j, _) in sub_box_cells(&sub_box(&gt, branch), level.spec.stride, gh, gw) {
        reg.set(0, i, j, reg.get(0, i, j) + dx);
        reg.set(1, i, j, reg.get(1, i, j) + dy);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(class: usize, b: (f64, f64, f64, f64)) -> GroundTruthBox {
        GroundTruthBox::new(0, class, BoxGeometry::new(b.0, b.1, b.2, b.3))
    }

    #[test]
    fn corner_cells_and_offsets() {
        assert_eq!(cell_and_offset(20.0, 20.0, 4), ((5, 5), (0.0, 0.0)));
        assert_eq!(cell_and_offset(22.0, 21.0, 4), ((5, 5), (0.5, 0.25)));
        let maps = render_sr(&[gt(1, (20.0, 20.0, 60.0, 52.0))], 128, 128, 2, 4);
        assert_eq!(maps.tl_heat.get(1, 5, 5), 1.0);
        assert_eq!(maps.tl_offset.get(0, 5, 5), 0.0);
        assert_eq!(maps.br_heat.get(1, 13, 15), 1.0);
        assert_eq!(maps.ct_heat.get(1, 9, 10), 1.0);
    }

    #[test]
    fn embeddings_distinct_per_object() {
        let boxes = [gt(0, (4.0, 4.0, 40.0, 40.0)), gt(0, (60.0, 60.0, 100.0, 90.0))];
        let maps = render_sr(&boxes, 128, 128, 1, 4);
        assert_eq!(maps.tl_embed.get(0, 1, 1), maps.br_embed.get(0, 10, 10));
        assert_eq!(maps.tl_embed.get(0, 15, 15), maps.br_embed.get(0, 22, 25));
        assert_ne!(maps.tl_embed.get(0, 1, 1), maps.tl_embed.get(0, 15, 15));
    }

    #[test]
    fn radius_keeps_min_overlap() {
        for (w, h) in [(10.0, 10.0), (40.0, 5.0), (3.0, 25.0), (100.0, 80.0)] {
            let r = gaussian_radius(w, h, 0.3);
            assert!(r > 0.0);
            let shifted = (w - r) * (h - r) / (2.0 * w * h - (w - r) * (h - r));
            let shrunk = (w - 2.0 * r) * (h - 2.0 * r) / (w * h);
            let grown = w * h / ((w + 2.0 * r) * (h + 2.0 * r));
            let worst = shifted.min(shrunk).min(grown);
            assert!((worst - 0.3).abs() < 1e-9, "{w}x{h}: {worst}");
        }
    }

    #[test]
    fn sub_box_split() {
        let b = BoxGeometry::new(0.0, 0.0, 40.0, 60.0);
        assert_eq!(sub_box(&b, Branch::TopLeft), BoxGeometry::new(0.0, 0.0, 20.0, 30.0));
        assert_eq!(
            sub_box(&b, Branch::BottomRight),
            BoxGeometry::new(20.0, 30.0, 40.0, 60.0)
        );
    }

    #[test]
    fn sub_box_vectors() {
        let boxes = [gt(0, (0.0, 0.0, 40.0, 60.0))];
        let levels = [LevelSpec::new("P3", 16)];
        let grids = &render_mr(&boxes, 64, 64, 1, &levels)[0];
        // feature point of cell (0, 0) sits at (8, 8)
        assert!(grids.tl_cls.get(0, 0, 0) > 0.0);
        let reg: Vec<f32> = (0..4).map(|c| grids.tl_reg.get(c, 0, 0)).collect();
        assert_eq!(reg, vec![-8.0, -8.0, 12.0, 22.0]);
        let best = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| grids.tl_cls.get(0, i, j));
        assert_eq!(best.fold(0.0, f32::max), 1.0);
    }

    #[test]
    fn level_assignment() {
        let levels = LevelSpec::standard_pyramid();
        let side = |s: f64| BoxGeometry::new(0.0, 0.0, s, s / 2.0);
        assert_eq!(assign_level(&side(20.0), &levels), 0);
        assert_eq!(assign_level(&side(127.0), &levels), 0);
        assert_eq!(assign_level(&side(128.0), &levels), 1);
        assert_eq!(assign_level(&side(300.0), &levels), 2);
        assert_eq!(assign_level(&side(5000.0), &levels), 4);
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SceneSpec {
            seed: 7,
            ..SceneSpec::default()
        };
        assert_eq!(generate_scene(&spec, 3).unwrap(), generate_scene(&spec, 3).unwrap());
        assert_ne!(generate_scene(&spec, 3).unwrap(), generate_scene(&spec, 4).unwrap());
    }

    #[test]
    fn exact_count_and_aspect() {
        let spec = SceneSpec {
            seed: 1,
            box_count: (3, 3),
            aspect: (8.0, 9.0),
            long_side: (96.0, 300.0),
            ..SceneSpec::default()
        };
        for id in 0..5 {
            let scene = generate_scene(&spec, id).unwrap();
            assert_eq!(scene.ground_truth.len(), 3);
            assert!(scene.ground_truth.iter().all(|b| b.geometry.aspect_ratio() >= 8.0));
        }
    }

    #[test]
    fn impossible_spec_is_rejected() {
        let spec = SceneSpec {
            long_side: (600.0, 700.0),
            ..SceneSpec::default()
        };
        assert!(matches!(generate_scene(&spec, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn noise_adds_isolated_spikes() {
        let spec = SceneSpec {
            seed: 11,
            box_count: (3, 3),
            ..SceneSpec::default()
        };
        let clean = generate_scene(&spec, 0).unwrap();
        let mut noisy = clean.clone();
        inject_noise(&mut noisy, &spec, 0, 5).unwrap();
        assert_eq!(noisy, clean);
        inject_noise(&mut noisy, &spec, 5, 5).unwrap();
        assert_eq!(noisy.noise.len(), 5);
        let (a, b) = (clean.grids.keypoints.unwrap(), noisy.grids.keypoints.unwrap());
        assert_eq!(a.ct_heat, b.ct_heat);
        let changed = a
            .tl_heat
            .values()
            .iter()
            .zip(b.tl_heat.values())
            .filter(|(x, y)| x != y)
            .count();
        assert_eq!(changed, 5);
    }
}
