//! Kitchen-scene gate over object detections.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
}

impl Detection {
    pub fn new(label: impl Into<String>, score: f64, bbox: [f64; 4]) -> Result<Self> {
        let d = Detection {
            label: label.into(),
            score,
            bbox,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidParameter(format!("score {} not in [0, 1]", self.score)));
        }
        if self.bbox.iter().any(|v| !v.is_finite()) || self.bbox[2] < 0.0 || self.bbox[3] < 0.0 {
            return Err(Error::InvalidParameter(format!("bad bbox {:?}", self.bbox)));
        }
        Ok(())
    }

    /// Clips the box to a `width` x `height` frame.
    pub fn clipped(&self, width: f64, height: f64) -> Detection {
        let [x, y, w, h] = self.bbox;
        let x0 = x.clamp(0.0, width);
        let y0 = y.clamp(0.0, height);
        let x1 = (x + w).clamp(0.0, width);
        let y1 = (y + h).clamp(0.0, height);
        Detection {
            bbox: [x0, y0, x1 - x0, y1 - y0],
            ..self.clone()
        }
    }
}

/// Detections for one frame. JSON: `{"detections": [{"label", "score", "bbox"}]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    /// Parses and validates; boxes are clipped to the frame when `frame` is
    /// given.
    pub fn from_json(s: &str, frame: Option<(usize, usize)>) -> Result<Self> {
        let mut set: DetectionSet = serde_json::from_str(s)?;
        for d in &mut set.detections {
            d.validate()?;
            if let Some((w, h)) = frame {
                *d = d.clipped(w as f64, h as f64);
            }
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>, frame: Option<(usize, usize)>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, frame).map_err(|e| match e {
            Error::InvalidParameter(reason) => Error::format(path, reason),
            e => e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("detections serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneRule {
    pub person_threshold: f64,
    pub artifact_threshold: f64,
    pub artifact_classes: BTreeSet<String>,
}

const KITCHEN_ARTIFACTS: [&str; 7] = ["bottle", "wine glass", "cup", "fork", "knife", "spoon", "bowl"];

impl Default for SceneRule {
    fn default() -> Self {
        Self::evaluated()
    }
}

impl SceneRule {
    /// Person at 0.90, artifacts at 0.80.
    pub fn evaluated() -> Self {
        Self {
            person_threshold: 0.90,
            artifact_threshold: 0.80,
            artifact_classes: KITCHEN_ARTIFACTS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The stricter person threshold of 0.95.
    pub fn strict() -> Self {
        Self {
            person_threshold: 0.95,
            ..Self::evaluated()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in [self.person_threshold, self.artifact_threshold] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidParameter(format!("threshold {t} not in (0, 1]")));
            }
        }
        if self.artifact_classes.is_empty() {
            return Err(Error::InvalidParameter("artifact_classes is empty".into()));
        }
        Ok(())
    }

    fn is_artifact(&self, label: &str) -> bool {
        self.artifact_classes.iter().any(|c| c.eq_ignore_ascii_case(label))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneVerdict {
    pub is_kitchen: bool,
    /// Persons at or above the person threshold.
    pub persons: Vec<Detection>,
    /// Artifacts at or above the artifact threshold.
    pub artifacts: Vec<Detection>,
}

pub fn classify_scene(dets: &[Detection], rule: &SceneRule) -> SceneVerdict {
    let persons: Vec<Detection> = dets
        .iter()
        .filter(|d| d.label.eq_ignore_ascii_case("person") && d.score >= rule.person_threshold)
        .cloned()
        .collect();
    let artifacts: Vec<Detection> = dets
        .iter()
        .filter(|d| rule.is_artifact(&d.label) && d.score >= rule.artifact_threshold)
        .cloned()
        .collect();
    SceneVerdict {
        is_kitchen: !persons.is_empty() && !artifacts.is_empty(),
        persons,
        artifacts,
    }
}

/// Fraction of positions where prediction and ground truth agree.
pub fn score_classifier(predictions: &[bool], ground_truth: &[bool]) -> Result<f64> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(predictions.len(), ground_truth.len()));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let agree = predictions.iter().zip(ground_truth).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(label: &str, score: f64) -> Detection {
        Detection::new(label, score, [0.0, 0.0, 10.0, 10.0]).unwrap()
    }

    #[test]
    fn kitchen_rule_examples() {
        let rule = SceneRule::default();
        assert!(classify_scene(&[det("person", 0.96), det("bowl", 0.85)], &rule).is_kitchen);
        assert!(!classify_scene(&[det("person", 0.96)], &rule).is_kitchen);
        assert!(!classify_scene(&[det("person", 0.89), det("knife", 0.99)], &rule).is_kitchen);
        assert!(!classify_scene(&[det("person", 0.92), det("bowl", 0.85)], &SceneRule::strict()).is_kitchen);
    }

    #[test]
    fn labels_match_case_insensitively() {
        let v = classify_scene(&[det("Person", 0.95), det("Wine Glass", 0.9)], &SceneRule::default());
        assert!(v.is_kitchen);
        assert_eq!(v.artifacts.len(), 1);
        assert!(!classify_scene(&[det("person", 0.95), det("wine_glass", 0.9)], &SceneRule::default()).is_kitchen);
    }

    #[test]
    fn accuracy_examples() {
        let v = [true, false, true];
        assert_eq!(score_classifier(&v, &v).unwrap(), 1.0);
        assert_eq!(score_classifier(&v, &[false, true, false]).unwrap(), 0.0);
        let gt = vec![true; 30];
        let mut pred = gt.clone();
        pred[..3].fill(false);
        assert!((score_classifier(&pred, &gt).unwrap() - 0.9).abs() < 1e-12);
        assert!(matches!(
            score_classifier(&v, &v[..2]),
            Err(Error::LengthMismatch(3, 2))
        ));
        assert!(matches!(score_classifier(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn detections_json_clips_and_validates() {
        let s = r#"{"detections":[{"label":"person","score":0.97,"bbox":[-5,10,50,300]}]}"#;
        let set = DetectionSet::from_json(s, Some((100, 200))).unwrap();
        assert_eq!(set.detections[0].bbox, [0.0, 10.0, 45.0, 190.0]);
        let bad = r#"{"detections":[{"label":"cup","score":1.5,"bbox":[0,0,1,1]}]}"#;
        assert!(DetectionSet::from_json(bad, None).is_err());
    }

    #[test]
    fn rule_validation() {
        assert!(SceneRule::default().validate().is_ok());
        let mut r = SceneRule::default();
        r.artifact_classes.clear();
        assert!(r.validate().is_err());
        assert!(SceneRule {
            person_threshold: 0.0,
            ..SceneRule::default()
        }
        .validate()
        .is_err());
    }

    fn arb_det() -> impl Strategy<Value = Detection> {
        (
            prop::sample::select(vec!["person", "bowl", "cup", "chair", "knife"]),
            0.0..=1.0f64,
        )
            .prop_map(|(l, s)| det(l, s))
    }

    proptest! {
        #[test]
        fn adding_detection_never_unsets(dets in prop::collection::vec(arb_det(), 0..8), extra in arb_det()) {
            let rule = SceneRule::default();
            let before = classify_scene(&dets, &rule).is_kitchen;
            let mut more = dets.clone();
            more.push(extra);
            prop_assert!(!before || classify_scene(&more, &rule).is_kitchen);
        }

        #[test]
        fn order_does_not_matter(dets in prop::collection::vec(arb_det(), 0..8)) {
            let rule = SceneRule::default();
            let mut rev = dets.clone();
            rev.reverse();
            prop_assert_eq!(classify_scene(&dets, &rule).is_kitchen, classify_scene(&rev, &rule).is_kitchen);
        }
    }
}
