use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use keytriplet::commands::{self, DecodeMode, DecodeOptions};
use keytriplet::suppress::{SuppressConfig, SuppressMethod};
use keytriplet::synth::{OverlapPolicy, SceneSpec};
use keytriplet::Error;

/// Keypoint-triplet detection decoding, synthetic scenes and evaluation.
#[derive(Parser)]
#[command(name = "keytriplet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth.
    Synth(SynthArgs),
    /// Decode every scene in a directory into detections.
    Decode(DecodeArgs),
    /// Score a detections file against ground truth.
    Eval(EvalArgs),
    /// Compare decoding with and without the center filter.
    Ablate(DecodeArgs),
    /// Time decoding and check that threading does not change the output.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    scenes: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
    /// JSON scene spec; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Start from the pyramid preset (768 px, levels P3-P5).
    #[arg(long)]
    multi_resolution: bool,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    min_boxes: Option<usize>,
    #[arg(long)]
    max_boxes: Option<usize>,
    #[arg(long)]
    min_side: Option<f64>,
    #[arg(long)]
    max_side: Option<f64>,
    #[arg(long)]
    aspect_min: Option<f64>,
    #[arg(long)]
    aspect_max: Option<f64>,
    #[arg(long, value_enum)]
    overlap: Option<Overlap>,
    #[arg(long)]
    stride: Option<u32>,
    /// Spurious corner pairs per scene.
    #[arg(long)]
    noise_corners: Option<usize>,
    #[arg(long)]
    noise_min: Option<f32>,
    #[arg(long)]
    noise_max: Option<f32>,
    /// Lowest keypoint peak of a real object.
    #[arg(long)]
    confidence_min: Option<f32>,
    #[arg(long)]
    confidence_max: Option<f32>,
    /// Also render mirrored grids.
    #[arg(long)]
    flip: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Overlap {
    Any,
    DisjointSameClass,
    Disjoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sr,
    Mr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Nms {
    Soft,
    Linear,
    Hard,
}

#[derive(Args)]
struct DecodeOpts {
    /// Scene directory written by `synth`.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "sr")]
    mode: Mode,
    #[arg(long)]
    no_center_filter: bool,
    #[arg(long)]
    no_refine: bool,
    /// Merge detections from mirrored grids.
    #[arg(long)]
    flip: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Suppression method; defaults to soft for sr and hard for mr.
    #[arg(long, value_enum)]
    nms: Option<Nms>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    opts: DecodeOpts,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    opts: DecodeOpts,
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    /// Directory for detections.json, bench.json and run_config.json.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Spec(_) => 1,
            Error::Format { .. } | Error::Io { .. } | Error::Config(_) => 2,
            Error::Contract(_) => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 1, message }
}

fn scene_spec(a: &SynthArgs) -> Result<SceneSpec, Failure> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::from(Error::Io {
                    path: path.clone(),
                    source: e,
                })
            })?;
            serde_json::from_str(&text).map_err(|e| Failure {
                code: 2,
                message: format!("{}: {e}", path.display()),
            })?
        }
        None if a.multi_resolution => SceneSpec::multi_resolution(0),
        None => SceneSpec::default(),
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(a.width, spec.width);
    set!(a.height, spec.height);
    set!(a.classes, spec.num_classes);
    set!(a.min_boxes, spec.box_count.0);
    set!(a.max_boxes, spec.box_count.1);
    set!(a.min_side, spec.long_side.0);
    set!(a.max_side, spec.long_side.1);
    set!(a.aspect_min, spec.aspect.0);
    set!(a.aspect_max, spec.aspect.1);
    set!(a.stride, spec.stride);
    set!(a.noise_corners, spec.noise_pairs);
    set!(a.noise_min, spec.noise_score.0);
    set!(a.noise_max, spec.noise_score.1);
    set!(a.confidence_min, spec.confidence.0);
    set!(a.confidence_max, spec.confidence.1);
    if let Some(o) = a.overlap {
        spec.overlap = match o {
            Overlap::Any => OverlapPolicy::Any,
            Overlap::DisjointSameClass => OverlapPolicy::DisjointSameClass,
            Overlap::Disjoint => OverlapPolicy::Disjoint,
        };
    }
    spec.flip |= a.flip;
    Ok(spec)
}

fn decode_options(a: &DecodeOpts) -> Result<DecodeOptions, Failure> {
    if a.threads == 0 {
        return Err(usage("--threads must be at least 1".into()));
    }
    let mut opts = DecodeOptions::for_mode(match a.mode {
        Mode::Sr => DecodeMode::Sr,
        Mode::Mr => DecodeMode::Mr,
    });
    opts.decode.center_filter = !a.no_center_filter;
    opts.decode.refine = !a.no_refine;
    opts.flip = a.flip;
    if let Some(nms) = a.nms {
        let method = match nms {
            Nms::Soft => SuppressMethod::SoftGaussian,
            Nms::Linear => SuppressMethod::SoftLinear,
            Nms::Hard => SuppressMethod::Hard,
        };
        opts.suppress = SuppressConfig {
            method,
            ..if method == SuppressMethod::Hard {
                SuppressConfig::hard(0.6)
            } else {
                SuppressConfig::default()
            }
        };
    }
    if let Some(t) = a.iou_threshold {
        opts.suppress.iou_threshold = t;
    }
    if let Some(n) = a.top {
        opts.suppress.top_n = n;
    }
    opts.validate().map_err(|e| usage(e.to_string()))?;
    Ok(opts)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => {
            let spec = scene_spec(&a)?;
            let s = commands::synth(&spec, a.scenes, &a.out)?;
            println!(
                "wrote {} scenes ({} boxes, {} spurious pairs) to {}",
                s.scenes,
                s.boxes,
                s.noise_pairs,
                a.out.display()
            );
        }
        Command::Decode(a) => {
            let opts = decode_options(&a.opts)?;
            let dets = commands::decode(&a.opts.input, &opts, a.opts.threads, &a.out)?;
            println!("wrote {} detections to {}", dets.len(), a.out.display());
        }
        Command::Eval(a) => {
            let report = commands::eval(&a.dets, &a.gt, a.out.as_deref())?;
            println!("{report}");
        }
        Command::Ablate(a) => {
            let opts = decode_options(&a.opts)?;
            let report = commands::ablate(&a.opts.input, &opts, a.opts.threads, &a.out)?;
            println!("{report}");
        }
        Command::Bench(a) => {
            let opts = decode_options(&a.opts)?;
            let report = commands::bench(&a.opts.input, &opts, a.opts.threads, a.repeat, a.out.as_deref())?;
            println!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
