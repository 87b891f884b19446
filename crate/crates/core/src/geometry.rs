//! Boxes, keypoints and detections in image-pixel coordinates.
//!
//! All geometry is corner form (`tl`, `br`) in `f64`; the `[x, y, w, h]`
//! layout only appears at the JSON boundary (see [`crate::io`]).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeometry {
    pub tl_x: f64,
    pub tl_y: f64,
    pub br_x: f64,
    pub br_y: f64,
}

impl BoxGeometry {
    pub const fn new(tl_x: f64, tl_y: f64, br_x: f64, br_y: f64) -> Self {
        Self { tl_x, tl_y, br_x, br_y }
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.br_x - self.tl_x
    }

    pub fn height(&self) -> f64 {
        self.br_y - self.tl_y
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.tl_x + self.br_x) / 2.0, (self.tl_y + self.br_y) / 2.0)
    }

    /// `tl < br` on both axes with finite coordinates.
    pub fn is_valid(&self) -> bool {
        [self.tl_x, self.tl_y, self.br_x, self.br_y]
            .iter()
            .all(|v| v.is_finite())
            && self.tl_x < self.br_x
            && self.tl_y < self.br_y
    }

    /// Inclusive point containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.tl_x && x <= self.br_x && y >= self.tl_y && y <= self.br_y
    }

    pub fn intersects(&self, other: &BoxGeometry) -> bool {
        self.tl_x < other.br_x && other.tl_x < self.br_x && self.tl_y < other.br_y && other.tl_y < self.br_y
    }

    /// `max(w, h) / min(w, h)`, orientation agnostic.
    pub fn aspect_ratio(&self) -> f64 {
        let (w, h) = (self.width(), self.height());
        w.max(h) / w.min(h)
    }

    /// Mirror about the vertical axis of an image `image_width` pixels wide.
    pub fn flip_horizontal(&self, image_width: f64) -> BoxGeometry {
        BoxGeometry::new(image_width - self.br_x, self.tl_y, image_width - self.tl_x, self.br_y)
    }

    /// Row-major ordering on the corners: `tl_y`, `tl_x`, `br_y`, `br_x`.
    pub fn row_major_cmp(&self, other: &BoxGeometry) -> Ordering {
        self.tl_y
            .total_cmp(&other.tl_y)
            .then(self.tl_x.total_cmp(&other.tl_x))
            .then(self.br_y.total_cmp(&other.br_y))
            .then(self.br_x.total_cmp(&other.br_x))
    }
}

/// Heatmap cell a keypoint was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub class_id: usize,
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub embedding: Option<f32>,
    /// Source cell on the heatmap, when the keypoint came from one.
    pub cell: Option<GridCell>,
}

impl Keypoint {
    pub fn new(class_id: usize, x: f64, y: f64, score: f64) -> Self {
        Self {
            class_id,
            x,
            y,
            score,
            embedding: None,
            cell: None,
        }
    }

    pub fn with_embedding(mut self, embedding: f32) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_cell(mut self, row: usize, col: usize) -> Self {
        self.cell = Some(GridCell { row, col });
        self
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    pub class_id: usize,
    pub geometry: BoxGeometry,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: u64, class_id: usize, geometry: BoxGeometry, score: f64) -> Self {
        Self {
            image_id,
            class_id,
            geometry,
            score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: u64,
    pub class_id: usize,
    pub geometry: BoxGeometry,
}

impl GroundTruthBox {
    pub fn new(image_id: u64, class_id: usize, geometry: BoxGeometry) -> Self {
        Self {
            image_id,
            class_id,
            geometry,
        }
    }
}

/// Total order used wherever detections are ranked: score descending, then
/// class, then row-major geometry.
pub fn rank_detections(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then_with(|| a.geometry.row_major_cmp(&b.geometry))
}
