use serde::{Deserialize, Serialize};

use super::DecodeConfig;
use crate::error::{Error, Result};
use crate::geometry::BoxGeometry;

/// Scale-aware inner box in which a confirming center keypoint must fall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralRegion {
    pub ctl_x: f64,
    pub ctl_y: f64,
    pub cbr_x: f64,
    pub cbr_y: f64,
}

impl CentralRegion {
    /// Boundary-inclusive containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.ctl_x && x <= self.cbr_x && y >= self.ctl_y && y <= self.cbr_y
    }

    pub fn width(&self) -> f64 {
        self.cbr_x - self.ctl_x
    }

    pub fn height(&self) -> f64 {
        self.cbr_y - self.ctl_y
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.ctl_x + self.cbr_x) / 2.0, (self.ctl_y + self.cbr_y) / 2.0)
    }
}

/// Central region for divisor `n` (odd): the region is `1/n` of the box on
/// each axis and shares the box center.
///
/// ```text
/// ctl = ((n+1)·tl + (n-1)·br) / 2n
/// cbr = ((n-1)·tl + (n+1)·br) / 2n
/// ```
pub fn central_region(b: &BoxGeometry, n: u32) -> Result<CentralRegion> {
    if n == 0 || n.is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "central region divisor must be odd and positive, got {n}"
        )));
    }
    let n = f64::from(n);
    let (hi, lo, den) = (n + 1.0, n - 1.0, 2.0 * n);
    Ok(CentralRegion {
        ctl_x: (hi * b.tl_x + lo * b.br_x) / den,
        ctl_y: (hi * b.tl_y + lo * b.br_y) / den,
        cbr_x: (lo * b.tl_x + hi * b.br_x) / den,
        cbr_y: (lo * b.tl_y + hi * b.br_y) / den,
    })
}

/// `n_small` for boxes whose longest side is below `scale_split`, otherwise
/// `n_large`.
pub fn select_n(b: &BoxGeometry, cfg: &DecodeConfig) -> u32 {
    let scale = b.width().max(b.height());
    if scale < cfg.scale_split {
        cfg.n_small
    } else {
        cfg.n_large
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirds_and_fifths() {
        let b = BoxGeometry::new(0.0, 0.0, 30.0, 30.0);
        let r = central_region(&b, 3).unwrap();
        assert_eq!((r.ctl_x, r.ctl_y, r.cbr_x, r.cbr_y), (10.0, 10.0, 20.0, 20.0));
        let r = central_region(&b, 5).unwrap();
        assert_eq!((r.ctl_x, r.ctl_y, r.cbr_x, r.cbr_y), (12.0, 12.0, 18.0, 18.0));
    }

    #[test]
    fn n_one_is_the_box() {
        let b = BoxGeometry::new(3.25, -7.5, 91.0, 12.125);
        let r = central_region(&b, 1).unwrap();
        assert_eq!((r.ctl_x, r.ctl_y, r.cbr_x, r.cbr_y), (b.tl_x, b.tl_y, b.br_x, b.br_y));
    }

    #[test]
    fn even_or_zero_n_is_rejected() {
        let b = BoxGeometry::new(0.0, 0.0, 1.0, 1.0);
        assert!(central_region(&b, 0).is_err());
        assert!(central_region(&b, 4).is_err());
    }

    #[test]
    fn scale_selection() {
        let cfg = DecodeConfig::default();
        assert_eq!(select_n(&BoxGeometry::new(0.0, 0.0, 100.0, 80.0), &cfg), 3);
        assert_eq!(select_n(&BoxGeometry::new(0.0, 0.0, 100.0, 160.0), &cfg), 5);
        assert_eq!(select_n(&BoxGeometry::new(0.0, 0.0, 150.0, 10.0), &cfg), 5);
    }

    #[test]
    fn boundary_counts_as_inside() {
        let r = central_region(&BoxGeometry::new(0.0, 0.0, 30.0, 30.0), 3).unwrap();
        assert!(r.contains(10.0, 20.0));
        assert!(!r.contains(9.999, 15.0));
    }
}
