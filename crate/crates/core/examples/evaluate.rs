//! COCO-style scoring, the false-discovery rate and geometry recall on a
//! small hand-made set.

use keytriplet::geometry::{BoxGeometry, Detection, GroundTruthBox};
use keytriplet::metrics::{af_rate, average_precision, evaluate, AfVariant};

fn main() {
    let gts = vec![
        GroundTruthBox::new(0, 0, BoxGeometry::from_xywh(10.0, 10.0, 20.0, 20.0)),
        GroundTruthBox::new(0, 0, BoxGeometry::from_xywh(100.0, 100.0, 60.0, 40.0)),
        GroundTruthBox::new(1, 1, BoxGeometry::from_xywh(0.0, 0.0, 200.0, 25.0)),
    ];
    let dets = vec![
        Detection::new(0, 0, BoxGeometry::from_xywh(10.0, 10.0, 20.0, 20.0), 0.95),
        Detection::new(0, 0, BoxGeometry::from_xywh(300.0, 300.0, 30.0, 30.0), 0.9),
        Detection::new(0, 0, BoxGeometry::from_xywh(102.0, 100.0, 60.0, 40.0), 0.7),
        Detection::new(1, 1, BoxGeometry::from_xywh(0.0, 0.0, 190.0, 25.0), 0.6),
    ];
    println!(
        "AP@0.5 = {:.4}",
        average_precision(&dets, &gts, 0.5).unwrap_or(f64::NAN)
    );
    println!(
        "AF@0.05 = {:.4}",
        af_rate(&dets, &gts, AfVariant::AtIou(0.05)).unwrap_or(f64::NAN)
    );
    println!();
    println!("{}", evaluate(&dets, &gts));
}
