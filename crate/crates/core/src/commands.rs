//! The operations behind the `keytriplet` binary, callable as a library.
//!
//! Every command that writes a directory also writes `run_config.json`
//! describing how it was invoked. Nothing time- or host-dependent goes into
//! it, so reruns with the same inputs produce identical files.
//!
//! Directory layout produced by [`synth`] and read by the other commands:
//!
//! ```text
//! DIR/run_config.json
//! DIR/ground_truth.json
//! DIR/scenes/00000/manifest.json
//! DIR/scenes/00000/*.cngrid
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{decode_mr_candidates, decode_sr_candidates, to_detections, DecodeConfig, StageTimes};
use crate::error::{Error, Result};
use crate::geometry::Detection;
use crate::io::{
    detections_to_json, load_detections, read_json, save_detections, write_file, write_json, GroundTruth, ImageInfo,
};
use crate::metrics::{evaluate, EvalReport};
use crate::scene::{Scene, SceneGrids};
use crate::suppress::{flip_merge, suppress, SuppressConfig};
use crate::synth::{generate_scene, SceneSpec};

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const DETECTIONS_FILE: &str = "detections.json";
pub const SCENES_DIR: &str = "scenes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Single resolution: corner embeddings plus one center heatmap.
    Sr,
    /// Multi resolution: per-level sub-box regressions.
    Mr,
}

/// Everything that shapes a decode run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub mode: DecodeMode,
    pub decode: DecodeConfig,
    pub suppress: SuppressConfig,
    /// Merge detections from the mirrored grids when a scene has them.
    pub flip: bool,
}

impl DecodeOptions {
    /// Soft-NMS for single resolution, hard NMS at 0.6 for multi
    /// resolution; top 100 either way.
    pub fn for_mode(mode: DecodeMode) -> Self {
        Self {
            mode,
            decode: DecodeConfig::default(),
            suppress: match mode {
                DecodeMode::Sr => SuppressConfig::default(),
                DecodeMode::Mr => SuppressConfig::hard(0.6),
            },
            flip: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.decode.validate()?;
        self.suppress.validate()
    }
}

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_spec: Option<SceneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<DecodeOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl RunConfig {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            input: None,
            scenes: None,
            scene_spec: None,
            options: None,
            threads: None,
        }
    }
}

fn scene_dir(root: &Path, image_id: u64) -> PathBuf {
    root.join(SCENES_DIR).join(format!("{image_id:05}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub scenes: usize,
    pub boxes: usize,
    pub noise_pairs: usize,
}

/// Generates `count` scenes (image ids `0..count`) into `out`.
pub fn synth(spec: &SceneSpec, count: usize, out: &Path) -> Result<SynthSummary> {
    spec.validate()?;
    let scenes: Vec<Scene> = (0..count as u64)
        .into_par_iter()
        .map(|id| {
            let scene = generate_scene(spec, id)?;
            scene.save(scene_dir(out, id))?;
            Ok(scene)
        })
        .collect::<Result<_>>()?;
    let gt = GroundTruth {
        images: scenes
            .iter()
            .map(|s| ImageInfo {
                id: s.image_id,
                width: s.width,
                height: s.height,
            })
            .collect(),
        boxes: scenes.iter().flat_map(|s| s.ground_truth.iter().copied()).collect(),
    };
    gt.save(out.join(GROUND_TRUTH_FILE))?;
    let mut rc = RunConfig::new("synth");
    rc.scenes = Some(count);
    rc.scene_spec = Some(spec.clone());
    write_json(&out.join(RUN_CONFIG_FILE), &rc)?;
    Ok(SynthSummary {
        scenes: count,
        boxes: gt.boxes.len(),
        noise_pairs: scenes.iter().map(|s| s.noise.len()).sum(),
    })
}

/// Scene directories under `root/scenes`, sorted by name.
pub fn scene_paths(root: &Path) -> Result<Vec<PathBuf>> {
    let dir = root.join(SCENES_DIR);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.is_dir() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn decode_grids(grids: &SceneGrids, opts: &DecodeOptions) -> Result<(Vec<crate::decode::CandidateBox>, StageTimes)> {
    match opts.mode {
        DecodeMode::Sr => {
            let maps = grids
                .keypoints
                .as_ref()
                .ok_or_else(|| Error::Config("sr decoding needs keypoint maps; scene has none".into()))?;
            decode_sr_candidates(maps, &opts.decode)
        }
        DecodeMode::Mr => {
            if grids.levels.is_empty() {
                return Err(Error::Config("mr decoding needs pyramid levels; scene has none".into()));
            }
            decode_mr_candidates(grids, &opts.decode)
        }
    }
}

/// Decode, optional flip merge and suppression for one scene.
pub fn decode_scene(scene: &Scene, opts: &DecodeOptions) -> Result<(Vec<Detection>, StageTimes)> {
    let (cands, mut times) = decode_grids(&scene.grids, opts)?;
    let mut dets = to_detections(&cands, scene.image_id);
    if opts.flip {
        if let Some(flipped) = &scene.flipped {
            let (fc, ft) = decode_grids(flipped, opts)?;
            times.accumulate(&ft);
            dets = flip_merge(&dets, &to_detections(&fc, scene.image_id), f64::from(scene.width));
        }
    }
    let t = Instant::now();
    let dets = suppress(&dets, &opts.suppress);
    times.suppress = t.elapsed();
    Ok((dets, times))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
}

/// Decodes every scene under `root` on `threads` workers. Output is ordered
/// by scene and therefore independent of the thread count.
pub fn decode_dir(root: &Path, opts: &DecodeOptions, threads: usize) -> Result<Vec<Detection>> {
    opts.validate()?;
    let paths = scene_paths(root)?;
    let per_scene: Vec<Vec<Detection>> = pool(threads)?.install(|| {
        paths
            .par_iter()
            .map(|p| decode_scene(&Scene::load(p)?, opts).map(|(d, _)| d))
            .collect::<Result<_>>()
    })?;
    Ok(per_scene.into_iter().flatten().collect())
}

/// [`decode_dir`] plus `out/detections.json` and `out/run_config.json`.
pub fn decode(root: &Path, opts: &DecodeOptions, threads: usize, out: &Path) -> Result<Vec<Detection>> {
    let dets = decode_dir(root, opts, threads)?;
    save_detections(&dets, out.join(DETECTIONS_FILE))?;
    let mut rc = RunConfig::new("decode");
    rc.input = Some(root.display().to_string());
    rc.options = Some(opts.clone());
    rc.threads = Some(threads);
    write_json(&out.join(RUN_CONFIG_FILE), &rc)?;
    Ok(dets)
}

/// Evaluates a detections file against a ground-truth file, writing
/// `out/report.json` when `out` is given.
pub fn eval(dets: &Path, gt: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let dets = load_detections(dets)?;
    let gt = GroundTruth::load(gt)?;
    let report = evaluate(&dets, &gt.boxes);
    if let Some(out) = out {
        write_json(&out.join("report.json"), &report)?;
        write_file(&out.join("report.txt"), format!("{report}\n").as_bytes())?;
    }
    Ok(report)
}

/// One arm of the center-filter comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub run_config: RunConfig,
    pub detections: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub filtered: AblationArm,
    pub unfiltered: AblationArm,
    pub delta_ap: Option<f64>,
    pub delta_af: Option<f64>,
    pub delta_af5: Option<f64>,
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

impl std::fmt::Display for AblationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:+.1}", x * 100.0));
        writeln!(f, "center filter ON ({} detections)", self.filtered.detections)?;
        writeln!(f, "{}\n", self.filtered.report)?;
        writeln!(f, "center filter OFF ({} detections)", self.unfiltered.detections)?;
        writeln!(f, "{}\n", self.unfiltered.report)?;
        write!(
            f,
            "delta (on - off): AP {}  AF {}  AF5 {}",
            pct(self.delta_ap),
            pct(self.delta_af),
            pct(self.delta_af5)
        )
    }
}

/// Decodes `root` with and without the center filter and compares both
/// against `root/ground_truth.json`. Each arm's detections and run config
/// go to `out/filtered` and `out/unfiltered`; the comparison to
/// `out/ablation.json`.
pub fn ablate(root: &Path, base: &DecodeOptions, threads: usize, out: &Path) -> Result<AblationReport> {
    let gt = GroundTruth::load(root.join(GROUND_TRUTH_FILE))?;
    let arm = |center_filter: bool, name: &str| -> Result<AblationArm> {
        let mut opts = base.clone();
        opts.decode.center_filter = center_filter;
        let dir = out.join(name);
        let dets = decode(root, &opts, threads, &dir)?;
        Ok(AblationArm {
            run_config: read_json(&dir.join(RUN_CONFIG_FILE))?,
            detections: dets.len(),
            report: evaluate(&dets, &gt.boxes),
        })
    };
    let filtered = arm(true, "filtered")?;
    let unfiltered = arm(false, "unfiltered")?;
    let report = AblationReport {
        delta_ap: delta(filtered.report.ap, unfiltered.report.ap),
        delta_af: delta(filtered.report.af, unfiltered.report.af),
        delta_af5: delta(filtered.report.af5, unfiltered.report.af5),
        filtered,
        unfiltered,
    };
    write_json(&out.join("ablation.json"), &report)?;
    let mut rc = RunConfig::new("ablate");
    rc.input = Some(root.display().to_string());
    rc.options = Some(base.clone());
    rc.threads = Some(threads);
    write_json(&out.join(RUN_CONFIG_FILE), &rc)?;
    Ok(report)
}

/// Per-stage time in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMillis {
    pub peaks: f64,
    pub pairing: f64,
    pub filter: f64,
    pub suppress: f64,
}

impl From<StageTimes> for StageMillis {
    fn from(t: StageTimes) -> Self {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        Self {
            peaks: ms(t.peaks),
            pairing: ms(t.pairing),
            filter: ms(t.filter),
            suppress: ms(t.suppress),
        }
    }
}

impl StageMillis {
    pub fn total(&self) -> f64 {
        self.peaks + self.pairing + self.filter + self.suppress
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    /// Single-threaded pass with per-stage timers.
    pub staged_wall_ms: f64,
    pub stages: StageMillis,
    /// Pass on the requested number of threads.
    pub wall_ms: f64,
    pub images_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub images: usize,
    pub threads: usize,
    pub samples: Vec<BenchSample>,
    pub median_images_per_sec: f64,
    pub median_stages: StageMillis,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} images, {} threads, {} repeats",
            self.images,
            self.threads,
            self.samples.len()
        )?;
        for (k, s) in self.samples.iter().enumerate() {
            writeln!(f, "  run {k}: {:.1} ms, {:.1} images/s", s.wall_ms, s.images_per_sec)?;
        }
        let m = &self.median_stages;
        writeln!(f, "median throughput: {:.1} images/s", self.median_images_per_sec)?;
        write!(
            f,
            "median stages (single thread, ms): peaks {:.2}  pairing {:.2}  filter {:.2}  nms {:.2}",
            m.peaks, m.pairing, m.filter, m.suppress
        )
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times decoding of every scene under `root`, `repeat` times.
///
/// Scenes are loaded once up front so only decoding is timed. Each repeat
/// makes a single-threaded pass with per-stage timers and a pass on
/// `threads` workers; the latter's detections must equal the
/// single-threaded ones exactly, otherwise this fails.
///
/// With `out`, the detections of the last pass go to `out/detections.json`
/// and the report to `out/bench.json`.
pub fn bench(
    root: &Path,
    opts: &DecodeOptions,
    threads: usize,
    repeat: usize,
    out: Option<&Path>,
) -> Result<BenchReport> {
    opts.validate()?;
    let scenes: Vec<Scene> = scene_paths(root)?.iter().map(Scene::load).collect::<Result<_>>()?;
    let workers = pool(threads)?;
    let mut samples = Vec::with_capacity(repeat);
    let mut last = Vec::new();
    for _ in 0..repeat.max(1) {
        let t = Instant::now();
        let mut stages = StageTimes::default();
        let mut reference = Vec::new();
        for scene in &scenes {
            let (dets, times) = decode_scene(scene, opts)?;
            stages.accumulate(&times);
            reference.extend(dets);
        }
        let staged_wall_ms = t.elapsed().as_secs_f64() * 1e3;

        let t = Instant::now();
        let parallel: Vec<Vec<Detection>> = workers.install(|| {
            scenes
                .par_iter()
                .map(|s| decode_scene(s, opts).map(|(d, _)| d))
                .collect::<Result<_>>()
        })?;
        let wall = t.elapsed();
        let parallel: Vec<Detection> = parallel.into_iter().flatten().collect();
        if detections_to_json(&parallel) != detections_to_json(&reference) {
            return Err(Error::Contract(format!(
                "detections on {threads} threads differ from the single-threaded run"
            )));
        }
        samples.push(BenchSample {
            staged_wall_ms,
            stages: stages.into(),
            wall_ms: wall.as_secs_f64() * 1e3,
            images_per_sec: scenes.len() as f64 / wall.as_secs_f64().max(1e-9),
        });
        last = parallel;
    }
    let pick = |f: fn(&BenchSample) -> f64| median(samples.iter().map(f).collect());
    let median_stages = StageMillis {
        peaks: pick(|s| s.stages.peaks),
        pairing: pick(|s| s.stages.pairing),
        filter: pick(|s| s.stages.filter),
        suppress: pick(|s| s.stages.suppress),
    };
    let report = BenchReport {
        images: scenes.len(),
        threads,
        median_images_per_sec: pick(|s| s.images_per_sec),
        median_stages,
        samples,
    };
    if let Some(out) = out {
        save_detections(&last, out.join(DETECTIONS_FILE))?;
        write_json(&out.join("bench.json"), &report)?;
        let mut rc = RunConfig::new("bench");
        rc.input = Some(root.display().to_string());
        rc.options = Some(opts.clone());
        rc.threads = Some(threads);
        write_json(&out.join(RUN_CONFIG_FILE), &rc)?;
    }
    Ok(report)
}
