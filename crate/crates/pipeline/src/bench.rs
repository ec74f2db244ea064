//! Reprojection benchmark over matcher and estimator combinations.
//!
//! Each consecutive frame pair is matched, Gaussian noise of `sigma` pixels
//! is added to both ends of every match, and the homography is fitted. The
//! keypoint error is the mean forward transfer distance over the fit's
//! inliers; the quad error maps the ground-truth quad back from the next
//! frame when ground truth is available.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use vpp_core::imaging::load_image;
use vpp_core::tracker::{
    estimate_homography, extract_features, match_features, reprojection_error, EstimatorKind, FrameFeatures,
    MatcherKind, TrackerParams,
};
use vpp_core::{BinaryMask, ImageGray, Point, Quad};

use crate::artifacts::FrameArtifacts;
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::metrics::load_ground_truth;
use crate::run::list_frames;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchParams {
    /// Standard deviation of the keypoint noise, pixels.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self { sigma: 0.5, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub pairs: usize,
    /// Pairs where matching or estimation failed.
    pub failures: usize,
    pub mean_matches: f64,
    pub mean_inliers: f64,
    pub keypoint_error: Option<f64>,
    pub quad_error: Option<f64>,
    pub ms_per_pair: f64,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One row for a single tracker configuration.
pub fn bench_method(
    features: &[FrameFeatures],
    truth: Option<&[Quad]>,
    params: &TrackerParams,
    bench: &BenchParams,
) -> BenchRow {
    let noise = Normal::new(0.0, bench.sigma.max(0.0)).expect("finite sigma");
    let (mut kp_err, mut quad_err) = (Vec::new(), Vec::new());
    let (mut matches_n, mut inliers_n) = (Vec::new(), Vec::new());
    let mut failures = 0;
    let start = Instant::now();
    for (i, pair) in features.windows(2).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(bench.seed.wrapping_add(i as u64));
        let Ok(matches) = match_features(&pair[0], &pair[1], params) else {
            failures += 1;
            continue;
        };
        let mut jitter = |p: Point| Point::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng));
        let src: Vec<Point> = matches
            .iter()
            .map(|m| jitter(pair[0].keypoints[m.query_idx].position))
            .collect();
        let dst: Vec<Point> = matches
            .iter()
            .map(|m| jitter(pair[1].keypoints[m.train_idx].position))
            .collect();
        let Ok(fit) = estimate_homography(&src, &dst, params) else {
            failures += 1;
            continue;
        };
        let residuals: Vec<f64> = src
            .iter()
            .zip(&dst)
            .zip(&fit.inlier_mask)
            .filter(|(_, &inlier)| inlier)
            .filter_map(|((s, d), _)| fit.h.apply(*s).ok().map(|p| p.distance(*d)))
            .collect();
        if let Some(e) = mean(&residuals) {
            kp_err.push(e);
        }
        if let Some(t) = truth {
            if let Ok(e) = reprojection_error(&fit.h, &t[i], &t[i + 1]) {
                quad_err.push(e);
            }
        }
        matches_n.push(matches.len() as f64);
        inliers_n.push(fit.inlier_count() as f64);
    }
    let pairs = features.len().saturating_sub(1);
    BenchRow {
        method: params.method_label(),
        pairs,
        failures,
        mean_matches: mean(&matches_n).unwrap_or(0.0),
        mean_inliers: mean(&inliers_n).unwrap_or(0.0),
        keypoint_error: mean(&kp_err),
        quad_error: mean(&quad_err),
        ms_per_pair: start.elapsed().as_secs_f64() * 1000.0 / pairs.max(1) as f64,
    }
}

/// Every matcher crossed with every estimator, other settings from `base`.
pub fn bench_sequence(
    frames: &[ImageGray],
    humans: &[Option<BinaryMask>],
    truth: Option<&[Quad]>,
    base: &TrackerParams,
    bench: &BenchParams,
) -> Result<Vec<BenchRow>> {
    if frames.len() < 2 {
        return Err(PipelineError::Config("benchmark needs at least two frames".into()));
    }
    if let Some(t) = truth {
        if t.len() != frames.len() {
            return Err(PipelineError::Config(format!(
                "{} ground-truth quads for {} frames",
                t.len(),
                frames.len()
            )));
        }
    }
    let features = frames
        .iter()
        .enumerate()
        .map(|(i, f)| extract_features(f, humans.get(i).and_then(|h| h.as_ref()), base))
        .collect::<vpp_core::Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for matcher in MatcherKind::ALL {
        for estimator in EstimatorKind::ALL {
            let params = TrackerParams {
                matcher,
                estimator,
                ..base.clone()
            };
            rows.push(bench_method(&features, truth, &params, bench));
        }
    }
    Ok(rows)
}

/// Loads the configured sequence, its human masks and, if configured, its
/// ground truth, and benchmarks every combination.
pub fn bench_tracking(config: &PipelineConfig, bench: &BenchParams) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let paths = list_frames(&config.frames)?;
    if paths.is_empty() {
        return Err(PipelineError::EmptySequence(config.frames.clone()));
    }
    let mut frames = Vec::with_capacity(paths.len());
    let mut humans = Vec::with_capacity(paths.len());
    for p in &paths {
        let img = load_image(p)?;
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let art = FrameArtifacts::load(&config.artifacts, &stem, img.dims())?;
        humans.push(art.human);
        frames.push(img.to_gray());
    }
    let truth = match &config.ground_truth {
        Some(path) => {
            let gt = load_ground_truth(path)?;
            let quads: Option<Vec<Quad>> = (0..frames.len())
                .map(|i| gt.iter().find(|g| g.frame == i).and_then(|g| g.quad))
                .collect();
            quads
        }
        None => None,
    };
    bench_sequence(&frames, &humans, truth.as_deref(), &config.tracker, bench)
}
