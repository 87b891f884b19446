//! Single-resolution decoding of a synthetic scene: corner pairing by
//! embedding, center confirmation and soft-NMS.

use keytriplet::decode::{decode_sr, DecodeConfig};
use keytriplet::suppress::{iou, suppress, SuppressConfig};
use keytriplet::synth::{generate_scene, SceneSpec};

fn main() -> keytriplet::Result<()> {
    let spec = SceneSpec {
        seed: 11,
        box_count: (3, 6),
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec, 0)?;
    let maps = scene.grids.keypoints.as_ref().expect("sr scene has keypoint maps");
    println!(
        "scene {}x{}, heatmaps {}x{} at stride {}",
        scene.width,
        scene.height,
        maps.width(),
        maps.height(),
        maps.stride
    );

    let dets = suppress(
        &decode_sr(scene.image_id, maps, &DecodeConfig::default())?,
        &SuppressConfig::default(),
    );
    for gt in &scene.ground_truth {
        let best = dets
            .iter()
            .filter(|d| d.class_id == gt.class_id)
            .max_by(|a, b| iou(&a.geometry, &gt.geometry).total_cmp(&iou(&b.geometry, &gt.geometry)))
            .expect("every object is decoded");
        let g = gt.geometry;
        println!(
            "class {} [{:7.3} {:7.3} {:7.3} {:7.3}]  score {:.3}  iou {:.4}",
            gt.class_id,
            g.tl_x,
            g.tl_y,
            g.br_x,
            g.br_y,
            best.score,
            iou(&best.geometry, &g)
        );
    }
    println!("{} detections for {} objects", dets.len(), scene.ground_truth.len());
    Ok(())
}
