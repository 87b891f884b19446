//! Multi-resolution decoding: sub-box regressions on P3-P5, snapping onto
//! heatmap peaks, and what happens when a regression is off by 20 px.

use keytriplet::decode::{decode_mr, Branch, DecodeConfig};
use keytriplet::geometry::Detection;
use keytriplet::scene::Scene;
use keytriplet::suppress::iou;
use keytriplet::synth::{assign_level, corrupt_regression, generate_scene, SceneSpec};

fn matched(scene: &Scene, dets: &[Detection], object: usize) -> f64 {
    let gt = &scene.ground_truth[object];
    dets.iter()
        .filter(|d| d.class_id == gt.class_id)
        .map(|d| iou(&d.geometry, &gt.geometry))
        .fold(0.0, f64::max)
}

fn main() -> keytriplet::Result<()> {
    let spec = SceneSpec::multi_resolution(4);
    let scene = generate_scene(&spec, 2)?;
    let levels: Vec<_> = scene.grids.levels.iter().map(|l| l.spec.clone()).collect();

    let cfg = DecodeConfig::default();
    let dets = decode_mr(scene.image_id, &scene.grids, &cfg)?;
    for (k, gt) in scene.ground_truth.iter().enumerate() {
        let level = &levels[assign_level(&gt.geometry, &levels)];
        println!(
            "object {k}: {:.1}x{:.1} on {} (stride {}), best iou {:.4}",
            gt.geometry.width(),
            gt.geometry.height(),
            level.level_id,
            level.stride,
            matched(&scene, &dets, k)
        );
    }

    // Push one object's top-left regression 20 px off and decode again with
    // and without snapping.
    let object = (0..scene.ground_truth.len())
        .find(|&k| levels[assign_level(&scene.ground_truth[k].geometry, &levels)].stride >= 16)
        .unwrap_or(0);
    let mut corrupted = scene.clone();
    corrupt_regression(&mut corrupted, object, Branch::TopLeft, 20.0, 0.0)?;
    let snapped = decode_mr(scene.image_id, &corrupted.grids, &cfg)?;
    let raw = decode_mr(scene.image_id, &corrupted.grids, &DecodeConfig { refine: false, ..cfg })?;
    println!(
        "object {object} after a 20 px error: iou {:.4} with snapping, {:.4} without",
        matched(&corrupted, &snapped, object),
        matched(&corrupted, &raw, object)
    );
    Ok(())
}
