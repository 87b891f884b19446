//! Center-filter ablation on scenes with planted spurious corner pairs.
//! Writes to a temporary directory, or the one given as the first argument.

use keytriplet::commands::{ablate, synth, DecodeMode, DecodeOptions};
use keytriplet::synth::SceneSpec;

fn main() -> keytriplet::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("keytriplet-ablation"));
    let spec = SceneSpec {
        seed: 21,
        box_count: (2, 6),
        confidence: (0.4, 1.0),
        noise_pairs: 4,
        noise_score: (0.5, 0.95),
        ..SceneSpec::default()
    };
    let summary = synth(&spec, 50, &root.join("scenes"))?;
    println!(
        "{} scenes, {} objects, {} spurious pairs",
        summary.scenes, summary.boxes, summary.noise_pairs
    );
    let report = ablate(
        &root.join("scenes"),
        &DecodeOptions::for_mode(DecodeMode::Sr),
        4,
        &root.join("ablation"),
    )?;
    println!("{report}");
    Ok(())
}
