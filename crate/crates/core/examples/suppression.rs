//! Soft-NMS, hard NMS and merging detections from a mirrored image.

use keytriplet::geometry::{BoxGeometry, Detection};
use keytriplet::suppress::{flip_merge, hard_nms, iou, soft_nms, SuppressConfig, SuppressMethod};

fn print(label: &str, dets: &[Detection]) {
    println!("{label}:");
    for d in dets {
        let g = d.geometry;
        println!(
            "  class {} [{:5.1} {:5.1} {:5.1} {:5.1}] {:.4}",
            d.class_id, g.tl_x, g.tl_y, g.br_x, g.br_y, d.score
        );
    }
}

fn main() {
    let a = BoxGeometry::new(0.0, 0.0, 10.0, 10.0);
    let b = BoxGeometry::new(5.0, 0.0, 15.0, 10.0);
    println!("iou = {:.4}", iou(&a, &b));

    let dets = vec![
        Detection::new(0, 0, a, 0.9),
        Detection::new(0, 0, b, 0.8),
        Detection::new(0, 0, BoxGeometry::new(1.0, 0.0, 11.0, 10.0), 0.77),
        Detection::new(0, 1, b, 0.5),
    ];
    print("gaussian soft-nms", &soft_nms(&dets, &SuppressConfig::default()));
    let linear = SuppressConfig {
        method: SuppressMethod::SoftLinear,
        iou_threshold: 0.3,
        ..SuppressConfig::default()
    };
    print("linear soft-nms", &soft_nms(&dets, &linear));
    print("hard nms at 0.6", &hard_nms(&dets, &SuppressConfig::hard(0.6)));

    // A detection found on the mirrored image maps back via x -> W - x.
    let flipped = vec![Detection::new(0, 0, a.flip_horizontal(100.0), 0.95)];
    print("flip merge", &flip_merge(&dets[..1], &flipped, 100.0));
}
