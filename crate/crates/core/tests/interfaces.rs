//! The interchange formats external model adapters write: detection JSON,
//! wall and human masks, plane label maps, line segments and features.

use vpp_core::imaging::{load_label_image, load_mask, save_label_image, save_mask};
use vpp_core::regions::LabelMap;
use vpp_core::scene::{classify_scene, DetectionSet, SceneRule};
use vpp_core::tracker::{Descriptor, FeatureSet, Keypoint};
use vpp_core::{BinaryMask, Error, LineSegmentSet, Point};

#[test]
fn detections_parse_clip_and_gate() {
    let json = r#"{"detections": [
        {"label": "person", "score": 0.93, "bbox": [-10, 20, 50, 200]},
        {"label": "Cup", "score": 0.81, "bbox": [150, 40, 30, 30]}
    ]}"#;
    let set = DetectionSet::from_json(json, Some((160, 96))).unwrap();
    assert_eq!(set.detections[0].bbox, [0.0, 20.0, 40.0, 76.0]);
    assert_eq!(set.detections[1].bbox, [150.0, 40.0, 10.0, 30.0]);
    // artifact labels match without regard to case
    assert!(classify_scene(&set.detections, &SceneRule::evaluated()).is_kitchen);
    assert!(!classify_scene(&set.detections, &SceneRule::strict()).is_kitchen);

    let back = DetectionSet::from_json(&set.to_json(), None).unwrap();
    assert_eq!(back, set);
}

#[test]
fn malformed_detections_are_rejected() {
    for bad in [
        r#"{"detections": [{"label": "person", "score": 1.5, "bbox": [0, 0, 1, 1]}]}"#,
        r#"{"detections": [{"label": "person", "score": 0.5, "bbox": [0, 0, -1, 1]}]}"#,
        r#"{"detections": [{"label": "person", "score": 0.5}]}"#,
        r#"[1, 2, 3]"#,
    ] {
        assert!(DetectionSet::from_json(bad, None).is_err(), "{bad}");
    }
}

#[test]
fn detections_file_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("detections.json");
    std::fs::write(
        &path,
        r#"{"detections": [{"label": "cup", "score": 2, "bbox": [0, 0, 1, 1]}]}"#,
    )
    .unwrap();
    let err = DetectionSet::load(&path, None).unwrap_err();
    assert!(err.to_string().contains("detections.json"), "{err}");
    assert!(matches!(
        DetectionSet::load(dir.path().join("missing.json"), None),
        Err(Error::Io { .. })
    ));
}

#[test]
fn masks_round_trip_through_png() {
    let dir = tempfile::tempdir().unwrap();
    let mask = BinaryMask::from_fn(37, 21, |x, y| (x * 3 + y * 5) % 7 < 3);
    let path = dir.path().join("wall.png");
    save_mask(&mask, &path).unwrap();
    assert_eq!(load_mask(&path).unwrap(), mask);
}

#[test]
fn plane_labels_round_trip_at_sixteen_bits() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u32> = (0..40 * 30).map(|i| (i * 977 % 65_536) as u32).collect();
    let path = dir.path().join("planes.png");
    save_label_image(40, 30, &labels, &path).unwrap();
    assert_eq!(load_label_image(&path).unwrap(), (40, 30, labels.clone()));
    let map = LabelMap::load(&path).unwrap();
    assert_eq!(map.dims(), (40, 30));
    assert_eq!(map.get(3, 2), labels[2 * 40 + 3]);
    assert!(save_label_image(1, 1, &[70_000], dir.path().join("big.png")).is_err());
}

#[test]
fn line_segments_round_trip_and_drop_degenerates() {
    let json = r#"{"segments": [[0, 0, 10, 0], [5, 5, 5, 5], [1, 2, 3, 40]]}"#;
    let set = LineSegmentSet::from_json(json).unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(LineSegmentSet::from_json(&set.to_json()).unwrap(), set);
}

#[test]
fn features_round_trip_and_require_matching_lengths() {
    let set = FeatureSet {
        keypoints: vec![Keypoint {
            position: Point::new(12.5, 7.25),
            response: 33.0,
            orientation: -1.25,
        }],
        descriptors: vec![Descriptor([0x0123_4567_89ab_cdef, 0, u64::MAX, 42])],
    };
    let back = FeatureSet::from_json(&set.to_json()).unwrap();
    assert_eq!(back, set);
    let bad = r#"{"keypoints": [[1, 2, 3, 0], [4, 5, 6, 0]], "descriptors": []}"#;
    assert!(matches!(FeatureSet::from_json(bad), Err(Error::LengthMismatch(2, 0))));
}
