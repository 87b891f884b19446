//! File formats.
//!
//! # CNGRID tensor container
//!
//! ```text
//! offset  size  content
//! 0       8     magic  b"CNGRID1\n"
//! 8       4     header length L, u32 little-endian
//! 12      L     UTF-8 JSON {"dtype":"f32le","shape":[C,H,W],"name":<string|null>}
//! 12+L    4·CHW payload, f32 little-endian, row-major (c, i, j)
//! ```
//!
//! Loading rejects a bad magic, malformed header, payload size mismatch and
//! any non-finite value.
//!
//! # Detections and ground truth
//!
//! Detections use the COCO result layout
//! `[{"image_id", "category_id", "bbox": [x, y, w, h], "score"}]`; ground
//! truth uses `{"images": [{id, width, height}], "annotations": [{image_id,
//! category_id, bbox}]}`. Boxes are corner form everywhere else in the crate.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxGeometry, Detection, GroundTruthBox};
use crate::grid::DenseGrid;

pub const GRID_MAGIC: &[u8; 8] = b"CNGRID1\n";
const GRID_DTYPE: &str = "f32le";

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    dtype: String,
    shape: Vec<usize>,
    #[serde(default)]
    name: Option<String>,
}

/// Serializes a grid into CNGRID bytes.
pub fn encode_grid(grid: &DenseGrid, name: Option<&str>) -> Vec<u8> {
    let header = GridHeader {
        dtype: GRID_DTYPE.into(),
        shape: grid.shape().to_vec(),
        name: name.map(str::to_owned),
    };
    let header = serde_json::to_vec(&header).expect("grid header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + grid.values().len() * 4);
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses CNGRID bytes, returning the grid and its optional name.
pub fn decode_grid(bytes: &[u8]) -> Result<(DenseGrid, Option<String>)> {
    if bytes.len() < GRID_MAGIC.len() || &bytes[..GRID_MAGIC.len()] != GRID_MAGIC {
        return Err(Error::format("magic", "expected CNGRID1 magic bytes"));
    }
    let rest = &bytes[GRID_MAGIC.len()..];
    if rest.len() < 4 {
        return Err(Error::format("header_len", "file ends before header length"));
    }
    let header_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let rest = &rest[4..];
    if rest.len() < header_len {
        return Err(Error::format(
            "header_len",
            format!("header length {header_len} exceeds remaining {} bytes", rest.len()),
        ));
    }
    let header: GridHeader =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| Error::format("header", e.to_string()))?;
    if header.dtype != GRID_DTYPE {
        return Err(Error::format(
            "dtype",
            format!("unsupported dtype {:?}, expected {GRID_DTYPE:?}", header.dtype),
        ));
    }
    let [c, h, w]: [usize; 3] = header
        .shape
        .as_slice()
        .try_into()
        .map_err(|_| Error::format("shape", format!("expected 3 dims, got {}", header.shape.len())))?;
    let count = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::format("shape", "element count overflows"))?;
    let payload = &rest[header_len..];
    if payload.len() != count * 4 {
        return Err(Error::format(
            "payload",
            format!(
                "size mismatch: shape needs {} bytes, found {}",
                count * 4,
                payload.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format("payload", format!("non-finite value at index {k}")));
        }
        values.push(v);
    }
    let grid = DenseGrid::from_vec(c, h, w, values)?;
    Ok((grid, header.name))
}

pub fn save_grid(grid: &DenseGrid, path: impl AsRef<Path>) -> Result<()> {
    save_named_grid(grid, None, path)
}

pub fn save_named_grid(grid: &DenseGrid, name: Option<&str>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_grid(grid, name))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<DenseGrid> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes).map(|(g, _)| g)
}

/// One entry of a COCO-style result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: u64,
    pub category_id: usize,
    pub bbox: [f64; 4],
    pub score: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        let g = &d.geometry;
        DetectionRecord {
            image_id: d.image_id,
            category_id: d.class_id,
            bbox: [g.tl_x, g.tl_y, g.width(), g.height()],
            score: d.score,
        }
    }
}

fn bbox_to_geometry(bbox: [f64; 4], field: &str) -> Result<BoxGeometry> {
    let [x, y, w, h] = bbox;
    if !bbox.iter().all(|v| v.is_finite()) {
        return Err(Error::format(field, "non-finite bbox coordinate"));
    }
    if w < 0.0 || h < 0.0 {
        return Err(Error::format(field, format!("negative width/height ({w}, {h})")));
    }
    Ok(BoxGeometry::from_xywh(x, y, w, h))
}

impl DetectionRecord {
    pub fn to_detection(&self, index: usize) -> Result<Detection> {
        let field = format!("[{index}].bbox");
        let geometry = bbox_to_geometry(self.bbox, &field)?;
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::format(
                format!("[{index}].score"),
                format!("score {} outside [0, 1]", self.score),
            ));
        }
        Ok(Detection::new(self.image_id, self.category_id, geometry, self.score))
    }
}

pub fn detections_to_json(dets: &[Detection]) -> String {
    let records: Vec<DetectionRecord> = dets.iter().map(DetectionRecord::from).collect();
    serde_json::to_string_pretty(&records).expect("detections serialize")
}

pub fn detections_from_json(text: &str) -> Result<Vec<Detection>> {
    let records: Vec<DetectionRecord> =
        serde_json::from_str(text).map_err(|e| Error::format("detections", e.to_string()))?;
    records.iter().enumerate().map(|(k, r)| r.to_detection(k)).collect()
}

pub fn save_detections(dets: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), detections_to_json(dets).as_bytes())
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    detections_from_json(&read_text(path.as_ref())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: u64,
    pub category_id: usize,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GroundTruthFile {
    images: Vec<ImageInfo>,
    annotations: Vec<AnnotationRecord>,
}

/// A ground-truth dataset: image sizes plus boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub images: Vec<ImageInfo>,
    pub boxes: Vec<GroundTruthBox>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        let file = GroundTruthFile {
            images: self.images.clone(),
            annotations: self
                .boxes
                .iter()
                .map(|b| AnnotationRecord {
                    image_id: b.image_id,
                    category_id: b.class_id,
                    bbox: [
                        b.geometry.tl_x,
                        b.geometry.tl_y,
                        b.geometry.width(),
                        b.geometry.height(),
                    ],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("ground truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GroundTruthFile =
            serde_json::from_str(text).map_err(|e| Error::format("ground_truth", e.to_string()))?;
        let boxes = file
            .annotations
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let geometry = bbox_to_geometry(a.bbox, &format!("annotations[{k}].bbox"))?;
                Ok(GroundTruthBox::new(a.image_id, a.category_id, geometry))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroundTruth {
            images: file.images,
            boxes,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_text(path.as_ref())?)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    write_file(path, text.as_bytes())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_layout_and_round_trip() {
        let g = DenseGrid::from_vec(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let bytes = encode_grid(&g, None);
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(&bytes[..8], GRID_MAGIC);
        assert_eq!(bytes.len(), 8 + 4 + header_len + 16);
        let header = std::str::from_utf8(&bytes[12..12 + header_len]).unwrap();
        assert_eq!(header, r#"{"dtype":"f32le","shape":[1,2,2],"name":null}"#);
        assert_eq!(decode_grid(&bytes).unwrap().0, g);
    }

    #[test]
    fn name_survives_round_trip() {
        let g = DenseGrid::zeros(2, 1, 3);
        let (back, name) = decode_grid(&encode_grid(&g, Some("tl_heat"))).unwrap();
        assert_eq!(back, g);
        assert_eq!(name.as_deref(), Some("tl_heat"));
    }

    #[test]
    fn rejects_nan_with_index() {
        let mut g = DenseGrid::zeros(1, 2, 2);
        g.set(0, 1, 0, f32::NAN);
        let err = decode_grid(&encode_grid(&g, None)).unwrap_err().to_string();
        assert!(err.contains("non-finite value at index 2"), "{err}");
    }

    #[test]
    fn truncated_payload_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.cngrid");
        save_grid(&DenseGrid::filled(1, 3, 3, 0.5), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        let err = load_grid(&path).unwrap_err();
        match err {
            Error::Format { field, detail } => {
                assert_eq!(field, "payload");
                assert!(detail.contains("size mismatch"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_magic_and_header_name_their_field() {
        let g = DenseGrid::zeros(1, 1, 1);
        let mut bytes = encode_grid(&g, None);
        bytes[0] = b'X';
        assert!(matches!(decode_grid(&bytes), Err(Error::Format { field, .. }) if field == "magic"));

        let mut bytes = encode_grid(&g, None);
        bytes[8..12].copy_from_slice(&10_000u32.to_le_bytes());
        assert!(matches!(decode_grid(&bytes), Err(Error::Format { field, .. }) if field == "header_len"));

        let header = br#"{"dtype":"f64le","shape":[1,1,1]}"#;
        let mut bytes = GRID_MAGIC.to_vec();
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0; 4]);
        assert!(matches!(decode_grid(&bytes), Err(Error::Format { field, .. }) if field == "dtype"));
    }

    #[test]
    fn detection_serializes_as_xywh() {
        let d = Detection::new(1, 3, BoxGeometry::new(10.0, 10.0, 40.0, 60.0), 0.5);
        let rec = DetectionRecord::from(&d);
        assert_eq!(rec.bbox, [10.0, 10.0, 30.0, 50.0]);
        assert_eq!(detections_to_json(&[]), "[]");
        let back = detections_from_json(&detections_to_json(&[d])).unwrap();
        assert_eq!(back, vec![d]);
    }

    #[test]
    fn negative_extent_is_rejected() {
        let text = r#"[{"image_id":1,"category_id":0,"bbox":[0,0,-1,2],"score":0.5}]"#;
        let err = detections_from_json(text).unwrap_err();
        assert!(
            matches!(err, Error::Format { ref field, .. } if field == "[0].bbox"),
            "{err}"
        );
    }

    #[test]
    fn ground_truth_round_trip() {
        let gt = GroundTruth {
            images: vec![ImageInfo {
                id: 4,
                width: 64,
                height: 48,
            }],
            boxes: vec![GroundTruthBox::new(4, 2, BoxGeometry::new(1.5, 2.0, 9.25, 20.0))],
        };
        assert_eq!(GroundTruth::from_json(&gt.to_json()).unwrap(), gt);
    }
}
