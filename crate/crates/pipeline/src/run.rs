//! The per-frame loop: scene gate, detect or track, relight, composite,
//! write.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use vpp_core::compositor::place_ad;
use vpp_core::geometry::detect_line_segments;
use vpp_core::imaging::{load_image, save_png};
use vpp_core::photometric::{background_region, relight};
use vpp_core::regions::{align_region_or_bbox, empty_space_mask, propose_regions, select_plane_id, RegionFilters};
use vpp_core::scene::classify_scene;
use vpp_core::tracker::{reprojection_error, track_quad, TraceRecord, Tracker};
use vpp_core::{BinaryMask, ImageGray, ImageRgb, LineSegmentSet, Quad};

use crate::artifacts::FrameArtifacts;
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::metrics::{load_ground_truth, quad_iou, report_metrics, MetricsReport};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const TRACKING_FILE: &str = "tracking.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

/// Where a frame's placement quad came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementSource {
    #[default]
    None,
    Detected,
    Tracked,
}

/// One line of `results.jsonl`. A quad is only reported on frames that
/// pass the scene gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: usize,
    pub stem: String,
    pub is_kitchen: bool,
    pub quad: Option<Quad>,
    pub source: PlacementSource,
    pub relight: String,
    pub tracker: String,
    pub n_matches: Option<usize>,
    pub n_inliers: Option<usize>,
    /// On frames with both a tracked quad and a fresh detection: how far
    /// the detection lands from the previous quad once mapped back.
    pub reproj_error: Option<f64>,
    pub error: Option<String>,
}

/// Wall-clock milliseconds per stage for one frame; one line of
/// `timing.jsonl`. Kept apart from the results so those stay reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub frame: usize,
    pub load_ms: f64,
    pub scene_ms: f64,
    pub track_ms: f64,
    pub detect_ms: f64,
    pub render_ms: f64,
    pub write_ms: f64,
    pub total_ms: f64,
}

impl StageTiming {
    pub fn stages(&self) -> [(&'static str, f64); 6] {
        [
            ("load", self.load_ms),
            ("scene", self.scene_ms),
            ("track", self.track_ms),
            ("detect", self.detect_ms),
            ("render", self.render_ms),
            ("write", self.write_ms),
        ]
    }

    pub fn stage_sum(&self) -> f64 {
        self.stages().iter().map(|s| s.1).sum()
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub results: Vec<FrameResult>,
    pub timings: Vec<StageTiming>,
    pub metrics: MetricsReport,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

fn is_frame_file(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("ppm"))
}

/// PNG and PPM files in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        if is_frame_file(&p) {
            frames.push(p);
        }
    }
    frames.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(frames)
}

fn stem_of(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

struct Lap(Instant);

impl Lap {
    fn ms(&mut self) -> f64 {
        let now = Instant::now();
        let d = now.duration_since(self.0).as_secs_f64() * 1000.0;
        self.0 = now;
        d
    }
}

/// Largest aligned proposal from the frame's wall and plane masks, or
/// `None` when either mask is missing or nothing qualifies.
pub fn best_proposal(
    art: &FrameArtifacts,
    gray: &ImageGray,
    filters: &RegionFilters,
    config: &PipelineConfig,
) -> vpp_core::Result<Option<Quad>> {
    let (Some(wall), Some(planes)) = (&art.wall, &art.planes) else {
        return Ok(None);
    };
    let Some(plane_id) = select_plane_id(wall, planes)? else {
        return Ok(None);
    };
    let mask = empty_space_mask(wall, planes, plane_id)?;
    let detected;
    let lines = match (&art.lines, &config.detect_lines) {
        (Some(l), _) => l,
        (None, Some(p)) => {
            detected = detect_line_segments(gray, p)?;
            &detected
        }
        (None, None) => {
            detected = LineSegmentSet::default();
            &detected
        }
    };
    let mut best: Option<Quad> = None;
    for r in propose_regions(&mask, filters)? {
        let q = align_region_or_bbox(&r, lines, &config.align)?;
        if best.is_none_or(|b| q.area() > b.area()) {
            best = Some(q);
        }
    }
    Ok(best)
}

struct Pipeline<'a> {
    config: &'a PipelineConfig,
    ad: ImageRgb,
    tracker: Tracker,
    quad: Option<Quad>,
    last_detect: Option<usize>,
}

struct Rendered {
    result: FrameResult,
    /// `None` when the frame could not be decoded.
    image: Option<ImageRgb>,
    modified: bool,
}

impl Pipeline<'_> {
    fn process(&mut self, index: usize, path: &Path, lap: &mut Lap, timing: &mut StageTiming) -> Rendered {
        let cfg = self.config;
        let stem = stem_of(path);
        let mut result = FrameResult {
            frame: index,
            stem: stem.clone(),
            is_kitchen: false,
            quad: None,
            source: PlacementSource::None,
            relight: cfg.light_method.name().to_string(),
            tracker: cfg.tracker.method_label(),
            n_matches: None,
            n_inliers: None,
            reproj_error: None,
            error: None,
        };
        let mut errors: Vec<String> = Vec::new();

        let frame = match load_image(path) {
            Ok(f) => f,
            Err(e) => {
                result.error = Some(e.to_string());
                timing.load_ms = lap.ms();
                return Rendered {
                    result,
                    image: None,
                    modified: false,
                };
            }
        };
        let art = FrameArtifacts::load(&cfg.artifacts, &stem, frame.dims()).unwrap_or_else(|e| {
            errors.push(format!("artifacts: {e}"));
            FrameArtifacts::default()
        });
        timing.load_ms = lap.ms();

        result.is_kitchen = match &art.detections {
            Some(d) => classify_scene(&d.detections, &cfg.scene_rule).is_kitchen,
            None => !cfg.require_detections,
        };
        timing.scene_ms = lap.ms();

        // tracking runs on every frame so the chain survives gate failures
        let gray = frame.to_gray();
        let prev = self.quad;
        let mut tracked = None;
        let mut motion_h = None;
        match self.tracker.observe(&gray, art.human.as_ref()) {
            Ok(Some(m)) => {
                result.n_matches = Some(m.n_matches);
                result.n_inliers = Some(m.n_inliers);
                if let Some(q) = prev {
                    match track_quad(&q, &m.h) {
                        Ok(t) => tracked = Some(t),
                        Err(e) => errors.push(format!("track: {e}")),
                    }
                }
                motion_h = Some(m.h);
            }
            Ok(None) => {}
            Err(e) if prev.is_some() => errors.push(format!("track: {e}")),
            Err(_) => {}
        }
        let track_failed = prev.is_some() && tracked.is_none();
        timing.track_ms = lap.ms();

        let due = self.last_detect.is_none_or(|l| index - l >= cfg.redetect_interval);
        let mut fresh = None;
        if result.is_kitchen && (prev.is_none() || track_failed || due) {
            let filters = cfg
                .region_filters
                .unwrap_or_else(|| RegionFilters::for_frame(frame.width(), frame.height()));
            match best_proposal(&art, &gray, &filters, cfg) {
                Ok(b) => {
                    if art.wall.is_some() && art.planes.is_some() {
                        self.last_detect = Some(index);
                    }
                    fresh = b;
                }
                Err(e) => errors.push(format!("detect: {e}")),
            }
        }
        let (next, source) = match (tracked, fresh) {
            (Some(t), Some(b)) => {
                if let (Some(h), Some(p)) = (&motion_h, &prev) {
                    result.reproj_error = reprojection_error(h, p, &b).ok();
                }
                if quad_iou(&t, &b) < cfg.redetect_iou {
                    (Some(b), PlacementSource::Detected)
                } else {
                    (Some(t), PlacementSource::Tracked)
                }
            }
            (Some(t), None) => (Some(t), PlacementSource::Tracked),
            (None, Some(b)) => (Some(b), PlacementSource::Detected),
            (None, None) => (None, PlacementSource::None),
        };
        self.quad = next;
        timing.detect_ms = lap.ms();

        let mut image = None;
        if result.is_kitchen {
            if let Some(q) = next {
                result.quad = Some(q);
                result.source = source;
                let bg = background_region(&frame, &q, cfg.stats_region);
                let relit = relight(cfg.light_method, &self.ad, &bg);
                let occlusion = art
                    .human
                    .clone()
                    .unwrap_or_else(|| BinaryMask::new(frame.width(), frame.height()));
                match place_ad(&frame, &relit, &q, &occlusion, cfg.occlusion_dilation) {
                    Ok(out) => image = Some(out),
                    Err(e) => errors.push(format!("render: {e}")),
                }
            }
        }
        timing.render_ms = lap.ms();

        if !errors.is_empty() {
            result.error = Some(errors.join("; "));
        }
        Rendered {
            result,
            modified: image.is_some(),
            image: Some(image.unwrap_or(frame)),
        }
    }
}

fn write_output(path: &Path, source: &Path, rendered: Option<&ImageRgb>, unchanged: bool) -> Result<()> {
    let is_png = source
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if unchanged && is_png {
        fs::copy(source, path).map_err(|e| PipelineError::io(path, e))?;
        return Ok(());
    }
    if let Some(img) = rendered {
        save_png(img, path)?;
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    f.write_all(&buf).map_err(|e| PipelineError::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Processes every frame in order and writes `frame_NNNNNN.png`,
/// `results.jsonl`, `tracking.jsonl`, `timing.jsonl` and `metrics.json`
/// under the output directory. Frames that fail the scene gate or carry no
/// placement are written unmodified.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate()?;
    let frames = list_frames(&config.frames)?;
    if frames.is_empty() {
        return Err(PipelineError::EmptySequence(config.frames.clone()));
    }
    let ad = load_image(&config.ad)?;
    let ground_truth = config.ground_truth.as_ref().map(load_ground_truth).transpose()?;
    fs::create_dir_all(&config.output).map_err(|e| PipelineError::io(&config.output, e))?;

    let mut pipe = Pipeline {
        config,
        ad,
        tracker: Tracker::new(config.tracker.clone()),
        quad: None,
        last_detect: None,
    };
    let mut results = Vec::with_capacity(frames.len());
    let mut timings = Vec::with_capacity(frames.len());
    for (i, path) in frames.iter().enumerate() {
        let start = Instant::now();
        let mut lap = Lap(start);
        let mut timing = StageTiming {
            frame: i,
            ..StageTiming::default()
        };
        let rendered = pipe.process(i, path, &mut lap, &mut timing);
        let out = config.output.join(frame_file_name(i));
        write_output(&out, path, rendered.image.as_ref(), !rendered.modified)?;
        timing.write_ms = lap.ms();
        timing.total_ms = start.elapsed().as_secs_f64() * 1000.0;
        results.push(rendered.result);
        timings.push(timing);
    }

    let trace: Vec<TraceRecord> = results
        .iter()
        .map(|r| TraceRecord {
            frame: r.frame,
            quad: r.quad,
            n_matches: r.n_matches.unwrap_or(0),
            n_inliers: r.n_inliers.unwrap_or(0),
            reproj_error: r.reproj_error,
            method: r.tracker.clone(),
        })
        .collect();
    write_jsonl(&config.output.join(RESULTS_FILE), &results)?;
    write_jsonl(&config.output.join(TRACKING_FILE), &trace)?;
    write_jsonl(&config.output.join(TIMING_FILE), &timings)?;
    let metrics = report_metrics(&results, ground_truth.as_deref(), &timings, config.overlap_threshold);
    let mpath = config.output.join(METRICS_FILE);
    fs::write(
        &mpath,
        serde_json::to_string_pretty(&metrics).expect("report serializes"),
    )
    .map_err(|e| PipelineError::io(&mpath, e))?;

    Ok(RunSummary {
        results,
        timings,
        metrics,
    })
}
