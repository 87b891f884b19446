//! Post-processing for keypoint-triplet object detectors.
//!
//! A detector of this family predicts per-class heatmaps for top-left
//! corners, bottom-right corners and box centers. Boxes come from pairing
//! corners and are kept only when a center keypoint of the same class lands
//! in the box's central region. This crate does everything after the network:
//!
//! - [`pooling`]: directional max scans and the corner/center pooling built on them
//! - [`keypoints`]: peak extraction, offsets, embeddings
//! - [`decode`]: single-resolution (embedding) and multi-resolution (sub-box
//!   regression) decoding, central regions
//! - [`suppress`]: soft and hard NMS, flip merging
//! - [`losses`]: training objectives with analytic gradients
//! - [`synth`]: seeded scenes whose grids decode back to their ground truth exactly
//! - [`metrics`]: COCO-style AP/AR, the false-discovery rate AF, recall by box geometry
//! - [`io`], [`scene`]: `.cngrid` tensors, detections and ground-truth JSON, scene directories
//! - [`commands`]: the operations behind the `keytriplet` binary
//!
//! ```
//! use keytriplet::decode::{decode_sr, DecodeConfig};
//! use keytriplet::synth::{generate_scene, SceneSpec};
//!
//! let scene = generate_scene(&SceneSpec::default(), 0).unwrap();
//! let maps = scene.grids.keypoints.as_ref().unwrap();
//! let dets = decode_sr(scene.image_id, maps, &DecodeConfig::default()).unwrap();
//! assert!(dets.len() >= scene.ground_truth.len());
//! ```

pub mod commands;
pub mod decode;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod keypoints;
pub mod losses;
pub mod metrics;
pub mod pooling;
pub mod scene;
pub mod suppress;
pub mod synth;

pub use error::{Error, Result};
