use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vpp_core::geometry::LineDetectParams;
use vpp_core::photometric::{RelightMethod, StatsRegion};
use vpp_core::regions::{AlignParams, RegionFilters};
use vpp_core::scene::SceneRule;
use vpp_core::tracker::TrackerParams;

use crate::error::{PipelineError, Result};

/// Everything `run_pipeline` needs. Relative paths in a config file are
/// resolved against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of PNG or PPM frames, processed in file-name order.
    pub frames: PathBuf,
    pub ad: PathBuf,
    /// Holds one subdirectory per frame stem with any of `wall.png`,
    /// `planes.png`, `human.png`, `detections.json` and `lines.json`.
    pub artifacts: PathBuf,
    pub output: PathBuf,
    /// Optional `[{"frame": i, "quad": ...}]` file scored into `metrics.json`.
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    #[serde(default)]
    pub light_method: RelightMethod,
    #[serde(default)]
    pub stats_region: StatsRegion,
    #[serde(default)]
    pub scene_rule: SceneRule,
    /// Treat a frame without `detections.json` as failing the scene gate.
    #[serde(default = "default_true")]
    pub require_detections: bool,
    /// Defaults to [`RegionFilters::for_frame`] when absent.
    #[serde(default)]
    pub region_filters: Option<RegionFilters>,
    #[serde(default)]
    pub align: AlignParams,
    /// Run the built-in line detector when a frame has no `lines.json`.
    #[serde(default)]
    pub detect_lines: Option<LineDetectParams>,
    #[serde(default)]
    pub tracker: TrackerParams,
    #[serde(default = "default_redetect_interval")]
    pub redetect_interval: usize,
    /// A fresh proposal replaces a healthy tracked quad only below this IoU.
    #[serde(default = "default_redetect_iou")]
    pub redetect_iou: f64,
    #[serde(default = "default_occlusion_dilation")]
    pub occlusion_dilation: usize,
    /// IoU above which a prediction counts as overlapping its ground truth.
    #[serde(default)]
    pub overlap_threshold: f64,
}

fn default_true() -> bool {
    true
}

fn default_redetect_interval() -> usize {
    30
}

fn default_redetect_iou() -> f64 {
    0.3
}

fn default_occlusion_dilation() -> usize {
    2
}

impl PipelineConfig {
    /// Config with default settings for the given locations.
    pub fn new(
        frames: impl Into<PathBuf>,
        ad: impl Into<PathBuf>,
        artifacts: impl Into<PathBuf>,
        output: impl Into<PathBuf>,
    ) -> Self {
        Self {
            frames: frames.into(),
            ad: ad.into(),
            artifacts: artifacts.into(),
            output: output.into(),
            ground_truth: None,
            light_method: RelightMethod::default(),
            stats_region: StatsRegion::default(),
            scene_rule: SceneRule::default(),
            require_detections: true,
            region_filters: None,
            align: AlignParams::default(),
            detect_lines: None,
            tracker: TrackerParams::default(),
            redetect_interval: default_redetect_interval(),
            redetect_iou: default_redetect_iou(),
            occlusion_dilation: default_occlusion_dilation(),
            overlap_threshold: 0.0,
        }
    }

    pub fn from_json(s: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = serde_json::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        for p in [&mut cfg.frames, &mut cfg.ad, &mut cfg.artifacts, &mut cfg.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(gt) = cfg.ground_truth.as_mut() {
            if gt.is_relative() {
                *gt = base.join(&*gt);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks parameters and that every input path exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.redetect_interval < 1 {
            return bad("redetect_interval must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.redetect_iou) {
            return bad(format!("redetect_iou {} not in [0, 1]", self.redetect_iou));
        }
        if !(0.0..1.0).contains(&self.overlap_threshold) {
            return bad(format!("overlap_threshold {} not in [0, 1)", self.overlap_threshold));
        }
        self.scene_rule
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if !self.frames.is_dir() {
            return bad(format!("frame directory {} not found", self.frames.display()));
        }
        if !self.ad.is_file() {
            return bad(format!("ad image {} not found", self.ad.display()));
        }
        if !self.artifacts.is_dir() {
            return bad(format!("artifact directory {} not found", self.artifacts.display()));
        }
        if let Some(gt) = &self.ground_truth {
            if !gt.is_file() {
                return bad(format!("ground truth {} not found", gt.display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_takes_defaults_and_resolves_paths() {
        let cfg = PipelineConfig::from_json(
            r#"{"frames": "f", "ad": "ad.png", "artifacts": "a", "output": "/abs/out"}"#,
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.frames, PathBuf::from("/base/f"));
        assert_eq!(cfg.output, PathBuf::from("/abs/out"));
        assert_eq!(cfg.redetect_interval, 30);
        assert_eq!(cfg.light_method, RelightMethod::LabLight);
        assert!(cfg.require_detections);
        assert_eq!(
            cfg,
            PipelineConfig::new("/base/f", "/base/ad.png", "/base/a", "/abs/out")
        );
    }

    #[test]
    fn unknown_fields_and_bad_values_are_config_errors() {
        let e = PipelineConfig::from_json(
            r#"{"frames": "f", "ad": "a", "artifacts": "a", "output": "o", "x": 1}"#,
            Path::new("."),
        );
        assert!(matches!(e, Err(PipelineError::Config(_))));
        let e = PipelineConfig::from_json(
            r#"{"frames": "f", "ad": "a", "artifacts": "a", "output": "o", "light_method": "sepia"}"#,
            Path::new("."),
        );
        assert!(matches!(e, Err(PipelineError::Config(_))));

        let mut cfg = PipelineConfig::new(".", "Cargo.toml", ".", "out");
        cfg.redetect_interval = 0;
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn missing_paths_fail_validation() {
        let cfg = PipelineConfig::new("/nonexistent/frames", "ad.png", ".", "out");
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = PipelineConfig::new("/f", "/ad.png", "/a", "/o");
        cfg.light_method = RelightMethod::Histogram;
        cfg.redetect_interval = 7;
        let back = PipelineConfig::from_json(&cfg.to_json(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, cfg);
    }
}
