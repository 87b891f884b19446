//! Decode throughput over a synthetic set, with per-stage timing and a
//! check that thread count does not change the output.

use keytriplet::commands::{bench, synth, DecodeMode, DecodeOptions};
use keytriplet::synth::SceneSpec;

fn main() -> keytriplet::Result<()> {
    let threads: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let root = std::env::temp_dir().join("keytriplet-bench");
    synth(
        &SceneSpec {
            seed: 5,
            ..SceneSpec::default()
        },
        100,
        &root,
    )?;
    println!(
        "{}",
        bench(&root, &DecodeOptions::for_mode(DecodeMode::Sr), threads, 5, None)?
    );

    let pyramid = std::env::temp_dir().join("keytriplet-bench-mr");
    synth(&SceneSpec::multi_resolution(5), 50, &pyramid)?;
    println!(
        "{}",
        bench(&pyramid, &DecodeOptions::for_mode(DecodeMode::Mr), threads, 3, None)?
    );
    Ok(())
}
