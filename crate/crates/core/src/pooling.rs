//! Directional cumulative-max scans and the pooling operators built on them.
//!
//! Every operator here is a composition of [`scan_max`]: the value at a cell
//! becomes the maximum over a ray that starts at the cell (inclusive) and runs
//! to the grid border.
//!
//! ```text
//!  TowardRight   (i,j) ──────────▶ border      max over j' ≥ j
//!  TowardLeft    border ◀──────── (i,j)        max over j' ≤ j
//!  TowardBottom  (i,j) down to the last row    max over i' ≥ i
//!  TowardTop     first row down to (i,j)       max over i' ≤ i
//! ```
//!
//! Top-left corners pool over rays going *down and right*, into the object
//! interior; bottom-right corners pool *up and left*:
//!
//! ```text
//!  TL ●───────▶           ▲
//!     │                   │
//!     │                   │
//!     ▼          ◀────────● BR
//! ```
//!
//! The learnable convolution blocks that sit between scans in a trained
//! network are not part of this module; callers that need them can compose
//! [`scan_max`] with their own transforms. Only values are produced, never
//! argmax positions.

use crate::error::{Error, Result};
use crate::grid::DenseGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanDirection {
    TowardLeft,
    TowardRight,
    TowardTop,
    TowardBottom,
}

impl ScanDirection {
    pub const ALL: [ScanDirection; 4] = [
        ScanDirection::TowardLeft,
        ScanDirection::TowardRight,
        ScanDirection::TowardTop,
        ScanDirection::TowardBottom,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Corner {
    TopLeft,
    BottomRight,
}

fn require_single_channel(grid: &DenseGrid, what: &str) -> Result<()> {
    if grid.channels() != 1 {
        return Err(Error::Contract(format!(
            "{what} must have 1 channel, got {}",
            grid.channels()
        )));
    }
    Ok(())
}

fn require_same_shape(a: &DenseGrid, b: &DenseGrid) -> Result<()> {
    require_single_channel(a, "first grid")?;
    require_single_channel(b, "second grid")?;
    if !a.same_shape(b) {
        return Err(Error::Contract(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// One-pass cumulative max over rays in direction `dir`.
pub fn scan_max(grid: &DenseGrid, dir: ScanDirection) -> Result<DenseGrid> {
    require_single_channel(grid, "scan input")?;
    let mut out = grid.clone();
    scan_plane(out.plane_mut(0), grid.height(), grid.width(), dir);
    Ok(out)
}

fn scan_plane(p: &mut [f32], h: usize, w: usize, dir: ScanDirection) {
    match dir {
        ScanDirection::TowardRight => {
            for row in p.chunks_exact_mut(w) {
                for j in (0..w.saturating_sub(1)).rev() {
                    row[j] = row[j].max(row[j + 1]);
                }
            }
        }
        ScanDirection::TowardLeft => {
            for row in p.chunks_exact_mut(w) {
                for j in 1..w {
                    row[j] = row[j].max(row[j - 1]);
                }
            }
        }
        ScanDirection::TowardBottom => {
            for i in (0..h.saturating_sub(1)).rev() {
                for j in 0..w {
                    p[i * w + j] = p[i * w + j].max(p[(i + 1) * w + j]);
                }
            }
        }
        ScanDirection::TowardTop => {
            for i in 1..h {
                for j in 0..w {
                    p[i * w + j] = p[i * w + j].max(p[(i - 1) * w + j]);
                }
            }
        }
    }
}

fn scan2(grid: &DenseGrid, first: ScanDirection, second: ScanDirection) -> Result<DenseGrid> {
    scan_max(&scan_max(grid, first)?, second)
}

fn add(a: DenseGrid, b: &DenseGrid) -> DenseGrid {
    let mut out = a;
    for (x, y) in out.values_mut().iter_mut().zip(b.values()) {
        *x += *y;
    }
    out
}

/// Full-row max of `grid_h` plus full-column max of `grid_v`.
pub fn center_pool(grid_h: &DenseGrid, grid_v: &DenseGrid) -> Result<DenseGrid> {
    require_same_shape(grid_h, grid_v)?;
    let rows = scan2(grid_h, ScanDirection::TowardRight, ScanDirection::TowardLeft)?;
    let cols = scan2(grid_v, ScanDirection::TowardBottom, ScanDirection::TowardTop)?;
    Ok(add(rows, &cols))
}

/// Vertical ray max of `grid_v` plus horizontal ray max of `grid_h`, rays
/// pointing into the object from the given corner.
pub fn corner_pool(grid_v: &DenseGrid, grid_h: &DenseGrid, corner: Corner) -> Result<DenseGrid> {
    require_same_shape(grid_v, grid_h)?;
    let (vertical, horizontal) = match corner {
        Corner::TopLeft => (ScanDirection::TowardBottom, ScanDirection::TowardRight),
        Corner::BottomRight => (ScanDirection::TowardTop, ScanDirection::TowardLeft),
    };
    Ok(add(scan_max(grid_v, vertical)?, &scan_max(grid_h, horizontal)?))
}

/// Boundary-then-interior pooling.
///
/// For a top-left corner, `grid_a` is scanned along the top boundary
/// (rightward) and then into the object (downward); `grid_b` along the left
/// boundary (downward) and then inward (rightward). The two results are
/// summed. Bottom-right mirrors every ray.
pub fn cascade_corner_pool(grid_a: &DenseGrid, grid_b: &DenseGrid, corner: Corner) -> Result<DenseGrid> {
    require_same_shape(grid_a, grid_b)?;
    let (horizontal, vertical) = match corner {
        Corner::TopLeft => (ScanDirection::TowardRight, ScanDirection::TowardBottom),
        Corner::BottomRight => (ScanDirection::TowardLeft, ScanDirection::TowardTop),
    };
    let along_top = scan2(grid_a, horizontal, vertical)?;
    let along_left = scan2(grid_b, vertical, horizontal)?;
    Ok(add(along_top, &along_left))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[f32]]) -> DenseGrid {
        DenseGrid::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn toward_right_takes_suffix_max() {
        let g = grid(&[&[1.0, 3.0, 2.0]]);
        assert_eq!(
            scan_max(&g, ScanDirection::TowardRight).unwrap().values(),
            &[3.0, 3.0, 2.0]
        );
        assert_eq!(
            scan_max(&g, ScanDirection::TowardLeft).unwrap().values(),
            &[1.0, 3.0, 3.0]
        );
    }

    #[test]
    fn vertical_scans() {
        let g = grid(&[&[1.0], &[3.0], &[2.0]]);
        assert_eq!(
            scan_max(&g, ScanDirection::TowardBottom).unwrap().values(),
            &[3.0, 3.0, 2.0]
        );
        assert_eq!(
            scan_max(&g, ScanDirection::TowardTop).unwrap().values(),
            &[1.0, 3.0, 3.0]
        );
    }

    #[test]
    fn constant_grid_is_unchanged() {
        let g = DenseGrid::filled(1, 4, 5, 0.25);
        for dir in ScanDirection::ALL {
            assert_eq!(scan_max(&g, dir).unwrap(), g);
        }
    }

    #[test]
    fn multi_channel_is_rejected() {
        let g = DenseGrid::zeros(2, 2, 2);
        assert!(matches!(
            scan_max(&g, ScanDirection::TowardTop),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn center_pool_hand_example() {
        let g = grid(&[&[0.0, 1.0], &[2.0, 0.0]]);
        let out = center_pool(&g, &g).unwrap();
        assert_eq!(out.values(), &[3.0, 2.0, 4.0, 3.0]);
        let z = DenseGrid::zeros(1, 3, 3);
        assert_eq!(center_pool(&z, &z).unwrap(), z);
    }

    #[test]
    fn corner_pool_hand_example() {
        let g = grid(&[&[0.0, 0.0], &[0.0, 5.0]]);
        let tl = corner_pool(&g, &g, Corner::TopLeft).unwrap();
        // the 5 sits on the column ray of (0,1) and on the row ray of (1,0)
        assert_eq!(tl.values(), &[0.0, 5.0, 5.0, 10.0]);
        let br = corner_pool(&g, &g, Corner::BottomRight).unwrap();
        assert_eq!(br.values(), &[0.0, 0.0, 0.0, 10.0]);
    }

    #[test]
    fn single_cell_doubles() {
        let g = grid(&[&[1.5]]);
        for corner in [Corner::TopLeft, Corner::BottomRight] {
            assert_eq!(corner_pool(&g, &g, corner).unwrap().values(), &[3.0]);
            assert_eq!(cascade_corner_pool(&g, &g, corner).unwrap().values(), &[3.0]);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = DenseGrid::zeros(1, 2, 2);
        let b = DenseGrid::zeros(1, 2, 3);
        assert!(center_pool(&a, &b).is_err());
        assert!(corner_pool(&a, &b, Corner::TopLeft).is_err());
        assert!(cascade_corner_pool(&a, &b, Corner::BottomRight).is_err());
    }
}
