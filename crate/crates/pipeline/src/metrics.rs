//! Placement accuracy against ground-truth quads and throughput summaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vpp_core::{Error, Point, Quad};

use crate::error::{PipelineError, Result};
use crate::run::{FrameResult, StageTiming};

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Counter-clockwise in a y-up sense, i.e. positive shoelace sum.
fn oriented(mut t: [Point; 3]) -> [Point; 3] {
    if cross(t[0], t[1], t[2]) < 0.0 {
        t.swap(1, 2);
    }
    t
}

/// Sutherland-Hodgman clip of a convex polygon by a positively oriented
/// triangle.
fn clip_convex(subject: &[Point], clip: &[Point; 3]) -> Vec<Point> {
    let mut out = subject.to_vec();
    for i in 0..3 {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % 3]);
        let input = std::mem::take(&mut out);
        let n = input.len();
        for j in 0..n {
            let (p, q) = (input[j], input[(j + 1) % n]);
            let (sp, sq) = (cross(a, b, p), cross(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push(Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)));
            }
        }
    }
    out
}

/// Area of the intersection of two simple quads. Each quad splits into two
/// disjoint triangles, so the intersection area is the sum over the four
/// convex triangle pairs.
pub fn intersection_area(a: &Quad, b: &Quad) -> f64 {
    let mut total = 0.0;
    for ta in a.triangles() {
        for tb in b.triangles() {
            let poly = clip_convex(&oriented(ta), &oriented(tb));
            if poly.len() >= 3 {
                total += polygon_area(&poly);
            }
        }
    }
    total
}

/// Intersection over union of two simple quads.
pub fn quad_iou(a: &Quad, b: &Quad) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Mean over the four corresponding edges of the unsigned angle between
/// their directions, folded into [0, 90] degrees.
pub fn angle_deviation(a: &Quad, b: &Quad) -> Result<f64> {
    let (ca, cb) = (a.corners(), b.corners());
    let mut sum = 0.0;
    for i in 0..4 {
        let j = (i + 1) % 4;
        let (da, db) = (ca[j] - ca[i], cb[j] - cb[i]);
        if da.x.hypot(da.y) < 1e-12 || db.x.hypot(db.y) < 1e-12 {
            return Err(Error::DegenerateQuad(format!("edge {i} has zero length")).into());
        }
        let diff = (da.y.atan2(da.x) - db.y.atan2(db.x)).to_degrees().rem_euclid(180.0);
        sum += diff.min(180.0 - diff);
    }
    Ok(sum / 4.0)
}

/// One ground-truth record, `{"frame": i, "quad": [[x, y] x4] | null}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub frame: usize,
    pub quad: Option<Quad>,
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthFrame>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

/// Aggregates written to `metrics.json`. Means over empty sets are `null`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub kitchen_frames: usize,
    pub placed_frames: usize,
    pub failed_frames: usize,
    /// Frames whose ground truth has a quad.
    pub gt_frames: usize,
    /// Ground-truth frames whose prediction has IoU above `overlap_threshold`.
    pub gt_overlap: usize,
    pub overlap_threshold: f64,
    /// Over ground-truth frames; a missing prediction scores 0.
    pub mean_iou: Option<f64>,
    /// Over ground-truth frames that have a prediction.
    pub mean_angle_deviation: Option<f64>,
    pub mean_reproj_error: Option<f64>,
    /// Mean milliseconds per frame for each stage.
    pub stage_ms: BTreeMap<String, f64>,
    /// Frames per second implied by each stage's mean time.
    pub stage_fps: BTreeMap<String, f64>,
    pub fps: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn report_metrics(
    results: &[FrameResult],
    ground_truth: Option<&[GroundTruthFrame]>,
    timings: &[StageTiming],
    overlap_threshold: f64,
) -> MetricsReport {
    let mut r = MetricsReport {
        frames: results.len(),
        kitchen_frames: results.iter().filter(|f| f.is_kitchen).count(),
        placed_frames: results.iter().filter(|f| f.quad.is_some()).count(),
        failed_frames: results.iter().filter(|f| f.error.is_some()).count(),
        overlap_threshold,
        ..MetricsReport::default()
    };

    if let Some(gt) = ground_truth {
        let by_frame: BTreeMap<usize, &FrameResult> = results.iter().map(|f| (f.frame, f)).collect();
        let (mut ious, mut devs) = (Vec::new(), Vec::new());
        for g in gt {
            let Some(gq) = &g.quad else { continue };
            r.gt_frames += 1;
            match by_frame.get(&g.frame).and_then(|f| f.quad.as_ref()) {
                Some(pq) => {
                    let iou = quad_iou(pq, gq);
                    if iou > overlap_threshold {
                        r.gt_overlap += 1;
                    }
                    ious.push(iou);
                    if let Ok(d) = angle_deviation(pq, gq) {
                        devs.push(d);
                    }
                }
                None => ious.push(0.0),
            }
        }
        r.mean_iou = mean(&ious);
        r.mean_angle_deviation = mean(&devs);
    }

    let reproj: Vec<f64> = results.iter().filter_map(|f| f.reproj_error).collect();
    r.mean_reproj_error = mean(&reproj);

    if !timings.is_empty() {
        let n = timings.len() as f64;
        for (name, _) in timings[0].stages() {
            let total: f64 = timings
                .iter()
                .map(|t| t.stages().iter().find(|s| s.0 == name).map_or(0.0, |s| s.1))
                .sum();
            let ms = total / n;
            r.stage_ms.insert(name.to_string(), ms);
            if ms > 0.0 {
                r.stage_fps.insert(name.to_string(), 1000.0 / ms);
            }
        }
        let total_ms: f64 = timings.iter().map(|t| t.total_ms).sum();
        r.stage_ms.insert("total".into(), total_ms / n);
        if total_ms > 0.0 {
            r.fps = Some(1000.0 * n / total_ms);
        }
    }
    r
}
