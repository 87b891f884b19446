//! Scenes: ground truth plus the grids a detector head would emit for it.
//!
//! On disk a scene is a directory holding `manifest.json` and one CNGRID file
//! per grid. The manifest names every grid file and records strides:
//!
//! ```json
//! {
//!   "image_id": 3, "width": 512, "height": 512, "num_classes": 4,
//!   "ground_truth": [{"category_id": 1, "bbox": [x, y, w, h]}],
//!   "keypoints": {"stride": 4, "grids": {"tl_heat": "tl_heat.cngrid", ...}},
//!   "num_levels": 0, "levels": [],
//!   "noise": [],
//!   "flipped": null
//! }
//! ```
//!
//! `levels` entries carry `level_id`, `stride` and `grids` with the keys
//! `tl_cls`, `br_cls`, `tl_reg`, `br_reg`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxGeometry, GroundTruthBox};
use crate::grid::{validate_levels, DenseGrid, LevelSpec};
use crate::io::{load_grid, read_json, save_named_grid, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Keypoint heatmaps with their embedding and offset maps, all at one stride.
///
/// Heatmaps are `C×H×W` (one channel per class); embeddings `1×H×W`;
/// offsets `2×H×W` holding (`dx`, `dy`) in cell units.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointMaps {
    pub stride: u32,
    pub tl_heat: DenseGrid,
    pub br_heat: DenseGrid,
    pub ct_heat: DenseGrid,
    pub tl_embed: DenseGrid,
    pub br_embed: DenseGrid,
    pub tl_offset: DenseGrid,
    pub br_offset: DenseGrid,
    pub ct_offset: DenseGrid,
}

pub const KEYPOINT_GRID_NAMES: [&str; 8] = [
    "tl_heat", "br_heat", "ct_heat", "tl_embed", "br_embed", "tl_off", "br_off", "ct_off",
];

impl KeypointMaps {
    pub fn zeros(stride: u32, classes: usize, height: usize, width: usize) -> Self {
        let heat = DenseGrid::zeros(classes, height, width);
        let embed = DenseGrid::zeros(1, height, width);
        let off = DenseGrid::zeros(2, height, width);
        Self {
            stride,
            tl_heat: heat.clone(),
            br_heat: heat.clone(),
            ct_heat: heat,
            tl_embed: embed.clone(),
            br_embed: embed,
            tl_offset: off.clone(),
            br_offset: off.clone(),
            ct_offset: off,
        }
    }

    pub fn named(&self) -> [(&'static str, &DenseGrid); 8] {
        [
            ("tl_heat", &self.tl_heat),
            ("br_heat", &self.br_heat),
            ("ct_heat", &self.ct_heat),
            ("tl_embed", &self.tl_embed),
            ("br_embed", &self.br_embed),
            ("tl_off", &self.tl_offset),
            ("br_off", &self.br_offset),
            ("ct_off", &self.ct_offset),
        ]
    }

    /// Assembles maps from named grids; a missing name is a configuration error.
    pub fn from_named(stride: u32, mut grids: BTreeMap<String, DenseGrid>) -> Result<Self> {
        let mut take = |name: &str| {
            grids
                .remove(name)
                .ok_or_else(|| Error::Config(format!("missing grid `{name}`")))
        };
        let maps = Self {
            stride,
            tl_heat: take("tl_heat")?,
            br_heat: take("br_heat")?,
            ct_heat: take("ct_heat")?,
            tl_embed: take("tl_embed")?,
            br_embed: take("br_embed")?,
            tl_offset: take("tl_off")?,
            br_offset: take("br_off")?,
            ct_offset: take("ct_off")?,
        };
        maps.validate()?;
        Ok(maps)
    }

    pub fn num_classes(&self) -> usize {
        self.tl_heat.channels()
    }

    pub fn height(&self) -> usize {
        self.tl_heat.height()
    }

    pub fn width(&self) -> usize {
        self.tl_heat.width()
    }

    /// Shape consistency between the eight grids.
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("keypoint stride must be at least 1".into()));
        }
        let [c, h, w] = self.tl_heat.shape();
        for (name, grid) in self.named() {
            let expected = match name {
                "tl_heat" | "br_heat" | "ct_heat" => [c, h, w],
                "tl_embed" | "br_embed" => [1, h, w],
                _ => [2, h, w],
            };
            if grid.shape() != expected {
                return Err(Error::Config(format!(
                    "grid `{name}` has shape {:?}, expected {expected:?}",
                    grid.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Per-level regression head outputs for the two sub-box branches.
///
/// `*_cls` is `C×H×W`; `*_reg` is `4×H×W` with channels (corner dx, corner
/// dy, center dx, center dy) in pixels, measured from the feature point at
/// `((col + 0.5)·stride, (row + 0.5)·stride)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrids {
    pub spec: LevelSpec,
    pub tl_cls: DenseGrid,
    pub br_cls: DenseGrid,
    pub tl_reg: DenseGrid,
    pub br_reg: DenseGrid,
}

pub const LEVEL_GRID_NAMES: [&str; 4] = ["tl_cls", "br_cls", "tl_reg", "br_reg"];

impl LevelGrids {
    pub fn zeros(spec: LevelSpec, classes: usize, height: usize, width: usize) -> Self {
        Self {
            spec,
            tl_cls: DenseGrid::zeros(classes, height, width),
            br_cls: DenseGrid::zeros(classes, height, width),
            tl_reg: DenseGrid::zeros(4, height, width),
            br_reg: DenseGrid::zeros(4, height, width),
        }
    }

    pub fn named(&self) -> [(&'static str, &DenseGrid); 4] {
        [
            ("tl_cls", &self.tl_cls),
            ("br_cls", &self.br_cls),
            ("tl_reg", &self.tl_reg),
            ("br_reg", &self.br_reg),
        ]
    }

    pub fn from_named(spec: LevelSpec, mut grids: BTreeMap<String, DenseGrid>) -> Result<Self> {
        let level_id = spec.level_id.clone();
        let mut take = |name: &str| {
            grids
                .remove(name)
                .ok_or_else(|| Error::Config(format!("level {level_id}: missing grid `{name}`")))
        };
        let level = Self {
            tl_cls: take("tl_cls")?,
            br_cls: take("br_cls")?,
            tl_reg: take("tl_reg")?,
            br_reg: take("br_reg")?,
            spec,
        };
        level.validate()?;
        Ok(level)
    }

    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.tl_cls.shape();
        for (name, grid) in self.named() {
            let expected = if name.ends_with("cls") { [c, h, w] } else { [4, h, w] };
            if grid.shape() != expected {
                return Err(Error::Config(format!(
                    "level {}: grid `{name}` has shape {:?}, expected {expected:?}",
                    self.spec.level_id,
                    grid.shape()
                )));
            }
        }
        Ok(())
    }
}

/// All grids rendered for one view of an image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneGrids {
    pub keypoints: Option<KeypointMaps>,
    pub levels: Vec<LevelGrids>,
}

impl SceneGrids {
    /// Every grid must cover the image exactly: `ceil(dim / stride)` cells.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        let check = |what: &str, stride: u32, grid: &DenseGrid| {
            let expected = (height.div_ceil(stride) as usize, width.div_ceil(stride) as usize);
            if (grid.height(), grid.width()) != expected {
                return Err(Error::Config(format!(
                    "{what}: grid is {}x{}, image {width}x{height} at stride {stride} needs {}x{}",
                    grid.height(),
                    grid.width(),
                    expected.0,
                    expected.1
                )));
            }
            Ok(())
        };
        if let Some(kp) = &self.keypoints {
            kp.validate()?;
            check("keypoint maps", kp.stride, &kp.tl_heat)?;
        }
        if !self.levels.is_empty() {
            let specs: Vec<LevelSpec> = self.levels.iter().map(|l| l.spec.clone()).collect();
            validate_levels(&specs)?;
        }
        for level in &self.levels {
            level.validate()?;
            check(
                &format!("level {}", level.spec.level_id),
                level.spec.stride,
                &level.tl_cls,
            )?;
        }
        Ok(())
    }
}

/// A spurious corner pair planted by the noise injector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousPair {
    pub class_id: usize,
    pub tl: (f64, f64),
    pub br: (f64, f64),
    pub tl_score: f32,
    pub br_score: f32,
    pub embedding: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub num_classes: usize,
    pub ground_truth: Vec<GroundTruthBox>,
    pub grids: SceneGrids,
    /// Grids rendered for the horizontally mirrored image, if requested.
    pub flipped: Option<SceneGrids>,
    pub noise: Vec<SpuriousPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GtEntry {
    category_id: usize,
    bbox: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KeypointEntry {
    stride: u32,
    grids: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevelEntry {
    level_id: String,
    stride: u32,
    grids: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridsEntry {
    keypoints: Option<KeypointEntry>,
    num_levels: usize,
    levels: Vec<LevelEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    image_id: u64,
    width: u32,
    height: u32,
    num_classes: usize,
    ground_truth: Vec<GtEntry>,
    #[serde(flatten)]
    grids: GridsEntry,
    noise: Vec<SpuriousPair>,
    flipped: Option<GridsEntry>,
}

fn write_grids(dir: &Path, prefix: &str, grids: &SceneGrids) -> Result<GridsEntry> {
    let keypoints = match &grids.keypoints {
        Some(kp) => {
            let mut files = BTreeMap::new();
            for (name, grid) in kp.named() {
                let file = format!("{prefix}{name}.cngrid");
                save_named_grid(grid, Some(name), dir.join(&file))?;
                files.insert(name.to_string(), file);
            }
            Some(KeypointEntry {
                stride: kp.stride,
                grids: files,
            })
        }
        None => None,
    };
    let mut levels = Vec::with_capacity(grids.levels.len());
    for level in &grids.levels {
        let mut files = BTreeMap::new();
        for (name, grid) in level.named() {
            let file = format!("{prefix}{}_{name}.cngrid", level.spec.level_id);
            save_named_grid(grid, Some(name), dir.join(&file))?;
            files.insert(name.to_string(), file);
        }
        levels.push(LevelEntry {
            level_id: level.spec.level_id.clone(),
            stride: level.spec.stride,
            grids: files,
        });
    }
    Ok(GridsEntry {
        keypoints,
        num_levels: levels.len(),
        levels,
    })
}

fn read_named(dir: &Path, files: &BTreeMap<String, String>) -> Result<BTreeMap<String, DenseGrid>> {
    files
        .iter()
        .map(|(name, file)| Ok((name.clone(), load_grid(dir.join(file))?)))
        .collect()
}

fn read_grids(dir: &Path, entry: &GridsEntry) -> Result<SceneGrids> {
    if entry.num_levels != entry.levels.len() {
        return Err(Error::Config(format!(
            "manifest declares {} levels but lists {}",
            entry.num_levels,
            entry.levels.len()
        )));
    }
    let keypoints = match &entry.keypoints {
        Some(kp) => Some(KeypointMaps::from_named(kp.stride, read_named(dir, &kp.grids)?)?),
        None => None,
    };
    let levels = entry
        .levels
        .iter()
        .map(|l| LevelGrids::from_named(LevelSpec::new(l.level_id.clone(), l.stride), read_named(dir, &l.grids)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneGrids { keypoints, levels })
}

impl Scene {
    /// Writes `manifest.json` and all grid files into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let grids = write_grids(dir, "", &self.grids)?;
        let flipped = match &self.flipped {
            Some(f) => Some(write_grids(dir, "flip_", f)?),
            None => None,
        };
        let manifest = Manifest {
            image_id: self.image_id,
            width: self.width,
            height: self.height,
            num_classes: self.num_classes,
            ground_truth: self
                .ground_truth
                .iter()
                .map(|b| GtEntry {
                    category_id: b.class_id,
                    bbox: [
                        b.geometry.tl_x,
                        b.geometry.tl_y,
                        b.geometry.width(),
                        b.geometry.height(),
                    ],
                })
                .collect(),
            grids,
            noise: self.noise.clone(),
            flipped,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        let grids = read_grids(dir, &manifest.grids)?;
        grids.validate(manifest.width, manifest.height)?;
        let flipped = match &manifest.flipped {
            Some(f) => {
                let g = read_grids(dir, f)?;
                g.validate(manifest.width, manifest.height)?;
                Some(g)
            }
            None => None,
        };
        let ground_truth = manifest
            .ground_truth
            .iter()
            .map(|e| {
                let [x, y, w, h] = e.bbox;
                GroundTruthBox::new(manifest.image_id, e.category_id, BoxGeometry::from_xywh(x, y, w, h))
            })
            .collect();
        Ok(Scene {
            image_id: manifest.image_id,
            width: manifest.width,
            height: manifest.height,
            num_classes: manifest.num_classes,
            ground_truth,
            grids,
            flipped,
            noise: manifest.noise,
        })
    }
}
