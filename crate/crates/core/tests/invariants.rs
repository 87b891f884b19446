use proptest::prelude::*;

use keytriplet::decode::central_region;
use keytriplet::geometry::{rank_detections, BoxGeometry, Detection, GroundTruthBox};
use keytriplet::grid::DenseGrid;
use keytriplet::io::{decode_grid, detections_from_json, detections_to_json, encode_grid};
use keytriplet::keypoints::{extract_peaks, is_local_max, PeakConfig};
use keytriplet::metrics::average_precision;
use keytriplet::pooling::{scan_max, ScanDirection};
use keytriplet::suppress::{hard_nms, iou, soft_nms, SuppressConfig};

fn grid(max: usize) -> impl Strategy<Value = DenseGrid> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        prop::collection::vec(-10.0f32..10.0, h * w).prop_map(move |v| DenseGrid::from_vec(1, h, w, v).unwrap())
    })
}

fn geometry() -> impl Strategy<Value = BoxGeometry> {
    (-100.0..100.0f64, -100.0..100.0f64, 0.5..80.0f64, 0.5..80.0f64)
        .prop_map(|(x, y, w, h)| BoxGeometry::from_xywh(x, y, w, h))
}

fn detections() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((0..2u64, 0..3usize, geometry(), 0.0..1.0f64), 0..30).prop_map(|v| {
        v.into_iter()
            .map(|(img, c, g, s)| Detection::new(img, c, g, s))
            .collect()
    })
}

proptest! {
    #[test]
    fn scans_are_idempotent_and_dominate_input(g in grid(12)) {
        for dir in ScanDirection::ALL {
            let once = scan_max(&g, dir).unwrap();
            prop_assert_eq!(&scan_max(&once, dir).unwrap(), &once);
            for (o, v) in once.values().iter().zip(g.values()) {
                prop_assert!(o >= v);
            }
        }
    }

    #[test]
    fn central_regions_nest_inside_the_box(b in geometry()) {
        let r3 = central_region(&b, 3).unwrap();
        let r5 = central_region(&b, 5).unwrap();
        prop_assert!(b.contains(r3.ctl_x, r3.ctl_y) && b.contains(r3.cbr_x, r3.cbr_y));
        prop_assert!(r3.contains(r5.ctl_x, r5.ctl_y) && r3.contains(r5.cbr_x, r5.cbr_y));
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in geometry(), b in geometry()) {
        let (x, y) = (iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_nms_only_lowers_scores(dets in detections()) {
        let out = soft_nms(&dets, &SuppressConfig::default());
        prop_assert!(out.len() <= dets.len());
        prop_assert!(out.windows(2).all(|w| rank_detections(&w[0], &w[1]).is_le()));
        for d in &out {
            let origin = dets.iter().find(|o| o.geometry == d.geometry && o.class_id == d.class_id && o.image_id == d.image_id);
            prop_assert!(origin.is_some_and(|o| d.score <= o.score));
        }
    }

    #[test]
    fn hard_nms_leaves_no_overlapping_pair(dets in detections(), thr in 0.1..0.9f64) {
        let out = hard_nms(&dets, &SuppressConfig::hard(thr));
        for (k, a) in out.iter().enumerate() {
            for b in &out[k + 1..] {
                if a.image_id == b.image_id && a.class_id == b.class_id {
                    prop_assert!(iou(&a.geometry, &b.geometry) < thr);
                }
            }
        }
    }

    #[test]
    fn peaks_are_ranked_local_maxima(g in grid(10), k in 1..20usize) {
        let peaks = extract_peaks(&g, &PeakConfig::with_k(k));
        prop_assert!(peaks.len() <= k);
        prop_assert!(peaks.windows(2).all(|w| w[0].score >= w[1].score));
        for p in &peaks {
            let cell = p.cell.unwrap();
            prop_assert!(p.score > 0.0);
            prop_assert!(is_local_max(g.plane(0), g.height(), g.width(), cell.row, cell.col, 3));
        }
    }

    #[test]
    fn grid_bytes_round_trip(g in grid(9)) {
        let (back, name) = decode_grid(&encode_grid(&g, Some("x"))).unwrap();
        prop_assert_eq!(back, g);
        prop_assert_eq!(name.as_deref(), Some("x"));
    }

    #[test]
    fn detections_json_round_trip(dets in detections()) {
        let back = detections_from_json(&detections_to_json(&dets)).unwrap();
        prop_assert_eq!(back, dets);
    }

    #[test]
    fn flipping_twice_is_identity(b in geometry(), w in 200.0..400.0f64) {
        let back = b.flip_horizontal(w).flip_horizontal(w);
        prop_assert!((back.tl_x - b.tl_x).abs() < 1e-9 && (back.br_x - b.br_x).abs() < 1e-9);
    }

    #[test]
    fn ap_is_a_fraction_and_exact_copies_score_one(dets in detections()) {
        let gts: Vec<GroundTruthBox> = dets.iter().map(|d| GroundTruthBox::new(d.image_id, d.class_id, d.geometry)).collect();
        if let Some(ap) = average_precision(&dets, &gts, 0.5) {
            prop_assert!((0.0..=1.0).contains(&ap));
        }
        let noisy: Vec<Detection> = dets.iter().map(|d| Detection::new(d.image_id, d.class_id, BoxGeometry::from_xywh(1e4, 1e4, 1.0, 1.0), d.score)).collect();
        if let Some(ap) = average_precision(&noisy, &gts, 0.5) {
            prop_assert_eq!(ap, 0.0);
        }
    }
}
