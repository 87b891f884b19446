//! Heatmap peak extraction, sub-pixel remapping and regression refinement.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridCell, Keypoint};
use crate::grid::DenseGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Peaks kept across all classes.
    pub k: usize,
    /// Side of the square local-max neighbourhood; odd.
    pub window: usize,
    /// A peak must score strictly above this value.
    pub score_floor: f32,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            k: 70,
            window: 3,
            score_floor: 0.0,
        }
    }
}

impl PeakConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("peak k must be at least 1".into()));
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("peak window must be odd, got {}", self.window)));
        }
        Ok(())
    }
}

/// Is `(i, j)` a local maximum of `plane` under the plateau rule?
///
/// The cell must be `>=` every neighbour in the window, and strictly `>`
/// every neighbour that precedes it in row-major order, so that a plateau
/// yields only its row-major-first cell.
pub fn is_local_max(plane: &[f32], h: usize, w: usize, i: usize, j: usize, window: usize) -> bool {
    let r = window / 2;
    let v = plane[i * w + j];
    for ii in i.saturating_sub(r)..=(i + r).min(h - 1) {
        for jj in j.saturating_sub(r)..=(j + r).min(w - 1) {
            if (ii, jj) == (i, j) {
                continue;
            }
            let n = plane[ii * w + jj];
            let before = (ii, jj) < (i, j);
            if n > v || (before && n == v) {
                return false;
            }
        }
    }
    true
}

fn rank_peaks(a: &Keypoint, b: &Keypoint) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.cell.cmp(&b.cell))
}

/// Top-`k` local maxima over all classes, in heatmap cell coordinates
/// (`x = col`, `y = row`), sorted by score desc, class asc, row-major asc.
pub fn extract_peaks(heatmap: &DenseGrid, cfg: &PeakConfig) -> Vec<Keypoint> {
    let (h, w) = (heatmap.height(), heatmap.width());
    if h == 0 || w == 0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for c in 0..heatmap.channels() {
        let plane = heatmap.plane(c);
        for i in 0..h {
            for j in 0..w {
                let v = plane[i * w + j];
                if v > cfg.score_floor && is_local_max(plane, h, w, i, j, cfg.window) {
                    peaks.push(Keypoint::new(c, j as f64, i as f64, f64::from(v)).with_cell(i, j));
                }
            }
        }
    }
    peaks.sort_by(rank_peaks);
    peaks.truncate(cfg.k);
    peaks
}

fn peak_cell(p: &Keypoint) -> Result<GridCell> {
    p.cell
        .ok_or_else(|| Error::Contract("keypoint has no source heatmap cell".into()))
}

/// Maps cell peaks to image pixels: `x = (col + dx)·stride`, `y = (row + dy)·stride`.
///
/// `offsets` is a 2-channel grid (`dx`, `dy`) in cell units.
pub fn apply_offsets(peaks: &[Keypoint], offsets: &DenseGrid, stride: u32) -> Result<Vec<Keypoint>> {
    if offsets.channels() != 2 {
        return Err(Error::Contract(format!(
            "offset grid needs 2 channels, got {}",
            offsets.channels()
        )));
    }
    let s = f64::from(stride);
    peaks
        .iter()
        .map(|p| {
            let cell = peak_cell(p)?;
            if cell.row >= offsets.height() || cell.col >= offsets.width() {
                return Err(Error::Contract(format!(
                    "peak cell ({}, {}) outside offset grid {:?}",
                    cell.row,
                    cell.col,
                    offsets.shape()
                )));
            }
            let dx = f64::from(offsets.get(0, cell.row, cell.col));
            let dy = f64::from(offsets.get(1, cell.row, cell.col));
            Ok(Keypoint {
                x: (cell.col as f64 + dx) * s,
                y: (cell.row as f64 + dy) * s,
                ..*p
            })
        })
        .collect()
}

/// Reads each peak's embedding from channel 0 of `embeddings` at its cell.
pub fn attach_embeddings(peaks: &mut [Keypoint], embeddings: &DenseGrid) -> Result<()> {
    for p in peaks.iter_mut() {
        let cell = peak_cell(p)?;
        if cell.row >= embeddings.height() || cell.col >= embeddings.width() {
            return Err(Error::Contract("peak cell outside embedding grid".into()));
        }
        p.embedding = Some(embeddings.get(0, cell.row, cell.col));
    }
    Ok(())
}

/// Snaps a regressed point to the nearest same-class heatmap peak within
/// `radius` pixels, returning the peak (with the peak's score). Equal
/// distances resolve to the smaller row-major cell. When nothing is close
/// enough the regressed point is returned unchanged.
pub fn refine_keypoint(regressed: &Keypoint, peaks: &[Keypoint], radius: f64) -> Keypoint {
    nearest_peak(regressed, peaks, radius)
        .map(|idx| peaks[idx])
        .unwrap_or(*regressed)
}

/// Index into `peaks` of the snap target, if any.
pub fn nearest_peak(regressed: &Keypoint, peaks: &[Keypoint], radius: f64) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (idx, p) in peaks.iter().enumerate() {
        if p.class_id != regressed.class_id {
            continue;
        }
        let d = p.distance_to(regressed.x, regressed.y);
        if d > radius {
            continue;
        }
        let better = match best {
            None => true,
            Some((bd, bi)) => match d.total_cmp(&bd) {
                Ordering::Less => true,
                Ordering::Equal => cell_order(p, &peaks[bi]) == Ordering::Less,
                Ordering::Greater => false,
            },
        };
        if better {
            best = Some((d, idx));
        }
    }
    best.map(|(_, idx)| idx)
}

// Cell-less peaks sort after every peak with a cell.
fn cell_order(a: &Keypoint, b: &Keypoint) -> Ordering {
    match (a.cell, b.cell) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_spike_is_one_peak() {
        let mut g = DenseGrid::zeros(1, 5, 5);
        g.set(0, 2, 3, 1.0);
        let peaks = extract_peaks(&g, &PeakConfig::default());
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].cell, Some(GridCell { row: 2, col: 3 }));
        assert_eq!((peaks[0].x, peaks[0].y, peaks[0].score), (3.0, 2.0, 1.0));
    }

    #[test]
    fn plateau_keeps_row_major_first() {
        let mut g = DenseGrid::zeros(1, 6, 6);
        for (i, j) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            g.set(0, i, j, 0.9);
        }
        let peaks = extract_peaks(&g, &PeakConfig::default());
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].cell, Some(GridCell { row: 2, col: 2 }));
    }

    #[test]
    fn empty_and_zero_heatmaps_give_no_peaks() {
        assert!(extract_peaks(&DenseGrid::zeros(3, 0, 0), &PeakConfig::default()).is_empty());
        assert!(extract_peaks(&DenseGrid::zeros(2, 8, 8), &PeakConfig::default()).is_empty());
    }

    #[test]
    fn top_k_keeps_the_highest() {
        let mut g = DenseGrid::zeros(2, 20, 20);
        let mut n = 0;
        for i in (0..20).step_by(2) {
            for j in (0..20).step_by(4) {
                // 100 isolated peaks with distinct scores, split over two classes
                let c = (n % 2) as usize;
                g.set(c, i, j, 0.001 + n as f32 * 0.005);
                n += 1;
            }
        }
        assert_eq!(n, 50);
        for i in (1..20).step_by(2) {
            for j in (2..20).step_by(4) {
                g.set(0, i, j, 0.0015 + n as f32 * 0.005);
                n += 1;
            }
        }
        assert_eq!(n, 100);
        let all = extract_peaks(&g, &PeakConfig::with_k(1000));
        assert_eq!(all.len(), 100);
        let top = extract_peaks(&g, &PeakConfig::with_k(70));
        assert_eq!(top.len(), 70);
        assert_eq!(top[..], all[..70]);
        assert!(top.windows(2).all(|w| w[0].score >= w[1].score));
        let cutoff = top[69].score;
        assert!(all[70..].iter().all(|p| p.score <= cutoff));
    }

    #[test]
    fn offsets_remap_to_pixels() {
        let p = Keypoint::new(0, 5.0, 5.0, 1.0).with_cell(5, 5);
        let mut off = DenseGrid::zeros(2, 8, 8);
        let out = apply_offsets(&[p], &off, 4).unwrap();
        assert_eq!((out[0].x, out[0].y), (20.0, 20.0));
        off.set(0, 5, 5, 0.5);
        off.set(1, 5, 5, 0.25);
        let out = apply_offsets(&[p], &off, 4).unwrap();
        assert_eq!((out[0].x, out[0].y), (22.0, 21.0));
        let out = apply_offsets(&[p], &DenseGrid::zeros(2, 8, 8), 1).unwrap();
        assert_eq!((out[0].x, out[0].y), (5.0, 5.0));
        assert_eq!(out[0].score, 1.0);
    }

    #[test]
    fn refine_snaps_to_close_peak() {
        let reg = Keypoint::new(2, 10.2, 11.8, 0.4);
        let peak = Keypoint::new(2, 10.0, 12.0, 0.9).with_cell(3, 2);
        let out = refine_keypoint(&reg, &[peak], 3.0);
        assert_eq!((out.x, out.y, out.score), (10.0, 12.0, 0.9));
    }

    #[test]
    fn refine_falls_back_to_regression() {
        let reg = Keypoint::new(2, 10.0, 10.0, 0.4);
        let far = Keypoint::new(2, 20.0, 20.0, 0.9).with_cell(5, 5);
        let other_class = Keypoint::new(1, 10.0, 10.5, 0.9).with_cell(2, 2);
        assert_eq!(refine_keypoint(&reg, &[far, other_class], 3.0), reg);
    }

    #[test]
    fn refine_tie_prefers_row_major_first() {
        let reg = Keypoint::new(0, 10.0, 10.0, 0.4);
        let right = Keypoint::new(0, 12.0, 10.0, 0.8).with_cell(2, 3);
        let above = Keypoint::new(0, 10.0, 8.0, 0.7).with_cell(2, 2);
        let out = refine_keypoint(&reg, &[right, above], 5.0);
        assert_eq!(out, above);
    }
}
