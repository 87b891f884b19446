//! Heatmap peak extraction: local maxima, plateaus, top-k ordering and
//! sub-pixel offsets.

use keytriplet::grid::DenseGrid;
use keytriplet::keypoints::{apply_offsets, attach_embeddings, extract_peaks, PeakConfig};

fn main() -> keytriplet::Result<()> {
    // Two classes on a 5x6 grid. Class 1 has a flat 0.7 plateau.
    let mut heat = DenseGrid::zeros(2, 5, 6);
    heat.set(0, 1, 1, 0.9);
    heat.set(0, 1, 2, 0.4);
    heat.set(0, 3, 4, 0.6);
    heat.set(1, 2, 2, 0.7);
    heat.set(1, 2, 3, 0.7);

    let mut offsets = DenseGrid::zeros(2, 5, 6);
    offsets.set(0, 1, 1, 0.25);
    offsets.set(1, 1, 1, 0.5);
    let mut embed = DenseGrid::zeros(1, 5, 6);
    embed.set(0, 1, 1, 2.0);

    let mut peaks = extract_peaks(&heat, &PeakConfig::with_k(10));
    attach_embeddings(&mut peaks, &embed)?;
    let peaks = apply_offsets(&peaks, &offsets, 4)?;
    println!("{:>5} {:>8} {:>8} {:>6} {:>6}", "class", "x", "y", "score", "embed");
    for p in &peaks {
        println!(
            "{:>5} {:>8.2} {:>8.2} {:>6.2} {:>6}",
            p.class_id,
            p.x,
            p.y,
            p.score,
            p.embedding.map_or("-".into(), |e| e.to_string())
        );
    }

    let floor = PeakConfig {
        score_floor: 0.7,
        ..PeakConfig::with_k(10)
    };
    println!("above 0.7: {}", extract_peaks(&heat, &floor).len());
    Ok(())
}
