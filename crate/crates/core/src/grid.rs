//! Dense `C×H×W` float grids and pyramid level descriptors.
//!
//! A [`DenseGrid`] carries every per-cell map the decoder consumes: class
//! heatmaps, embedding maps, offset maps and regression maps. Storage is a
//! flat row-major `Vec<f32>` indexed as `(c·H + i)·W + j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl DenseGrid {
    /// A zero-filled grid.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        let expected = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::Contract("grid shape overflows usize".into()))?;
        if values.len() != expected {
            return Err(Error::Contract(format!(
                "grid shape {channels}x{height}x{width} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    /// Single-channel grid from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Contract("ragged rows".into()));
        }
        Self::from_vec(1, height, width, rows.concat())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, j: usize) -> usize {
        assert!(
            c < self.channels && i < self.height && j < self.width,
            "grid index ({c},{i},{j}) out of range for shape {:?}",
            self.shape()
        );
        (c * self.height + i) * self.width + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        self.values[self.index(c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, value: f32) {
        let idx = self.index(c, i, j);
        self.values[idx] = value;
    }

    /// Row-major slice of one channel.
    pub fn plane(&self, c: usize) -> &[f32] {
        assert!(c < self.channels, "channel {c} out of range");
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        assert!(c < self.channels, "channel {c} out of range");
        let n = self.height * self.width;
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Copy of a single channel as a 1-channel grid.
    pub fn channel(&self, c: usize) -> DenseGrid {
        DenseGrid {
            channels: 1,
            height: self.height,
            width: self.width,
            values: self.plane(c).to_vec(),
        }
    }

    pub fn same_shape(&self, other: &DenseGrid) -> bool {
        self.shape() == other.shape()
    }

    /// Index of the first NaN or infinite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    /// Mirror every channel left-to-right.
    pub fn flip_horizontal(&self) -> DenseGrid {
        let mut out = self.clone();
        for c in 0..self.channels {
            for i in 0..self.height {
                for j in 0..self.width {
                    out.set(c, i, j, self.get(c, i, self.width - 1 - j));
                }
            }
        }
        out
    }
}

/// One prediction layer of a feature pyramid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level_id: String,
    /// Image pixels per grid cell.
    pub stride: u32,
}

impl LevelSpec {
    pub fn new(level_id: impl Into<String>, stride: u32) -> Self {
        Self {
            level_id: level_id.into(),
            stride,
        }
    }

    /// The usual P3–P7 pyramid: strides 8, 16, 32, 64, 128.
    pub fn standard_pyramid() -> Vec<LevelSpec> {
        (3..=7).map(|p| LevelSpec::new(format!("P{p}"), 1 << p)).collect()
    }

    /// Grid extent covering `pixels` image pixels.
    pub fn cells(&self, pixels: u32) -> usize {
        pixels.div_ceil(self.stride) as usize
    }
}

/// Checks `stride ≥ 1` and strictly increasing strides.
pub fn validate_levels(levels: &[LevelSpec]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config("at least one pyramid level is required".into()));
    }
    for (k, level) in levels.iter().enumerate() {
        if level.stride == 0 {
            return Err(Error::Config(format!("level {} has stride 0", level.level_id)));
        }
        if k > 0 && levels[k - 1].stride >= level.stride {
            return Err(Error::Config(format!(
                "strides must strictly increase: {} ({}) then {} ({})",
                levels[k - 1].level_id,
                levels[k - 1].stride,
                level.level_id,
                level.stride
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_reads_what_set_wrote() {
        let mut g = DenseGrid::zeros(2, 3, 4);
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    g.set(c, i, j, (c * 100 + i * 10 + j) as f32);
                }
            }
        }
        assert_eq!(g.get(1, 2, 3), 123.0);
        assert_eq!(g.values()[g.index(1, 2, 3)], 123.0);
        assert_eq!(g.index(1, 0, 0), 12);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn out_of_range_access_panics() {
        let g = DenseGrid::zeros(1, 2, 2);
        g.get(0, 0, 2);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(DenseGrid::from_vec(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(DenseGrid::from_vec(1, 2, 2, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn flip_twice_is_identity() {
        let g = DenseGrid::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let f = g.flip_horizontal();
        assert_eq!(f.plane(0), &[3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        assert_eq!(f.flip_horizontal(), g);
    }

    #[test]
    fn level_validation() {
        assert!(validate_levels(&LevelSpec::standard_pyramid()).is_ok());
        assert!(validate_levels(&[LevelSpec::new("a", 8), LevelSpec::new("b", 8)]).is_err());
        assert!(validate_levels(&[LevelSpec::new("a", 0)]).is_err());
        assert!(validate_levels(&[]).is_err());
        assert_eq!(LevelSpec::new("P3", 8).cells(513), 65);
    }
}
