//! Robust homography estimation from noisy correspondences.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_homography, fit_homography_weighted, has_collinear_triple, Homography, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    /// Inlier threshold on the symmetric transfer error, pixels.
    pub threshold: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Inlier ratio below which the fit is reported as no model.
    pub min_score: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            confidence: 0.995,
            max_iters: 2000,
            seed: 0,
            min_score: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MagsacParams {
    /// Upper end of the noise scales marginalized over, pixels.
    pub max_sigma: f64,
    /// Number of noise scales evenly spanning `(0, max_sigma]`.
    pub partitions: usize,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Quality below which the fit is reported as no model.
    pub min_score: f64,
}

impl Default for MagsacParams {
    fn default() -> Self {
        Self {
            max_sigma: 10.0,
            partitions: 10,
            confidence: 0.995,
            max_iters: 2000,
            seed: 0,
            min_score: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustFitResult {
    pub h: Homography,
    pub inlier_mask: Vec<bool>,
    /// RANSAC: inlier ratio. MAGSAC: mean marginalized quality in `[0, 1]`.
    pub score: f64,
    pub iterations: usize,
}

impl RobustFitResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

/// Root mean square of the forward and backward transfer distances.
pub fn symmetric_transfer_error(h: &Homography, h_inv: &Homography, p: Point, q: Point) -> f64 {
    let (fx, fy) = h.apply_raw(p.x, p.y);
    let (bx, by) = h_inv.apply_raw(q.x, q.y);
    let e = (((fx - q.x).powi(2) + (fy - q.y).powi(2) + (bx - p.x).powi(2) + (by - p.y).powi(2)) / 2.0).sqrt();
    if e.is_finite() {
        e
    } else {
        f64::INFINITY
    }
}

fn residuals(h: &Homography, src: &[Point], dst: &[Point], out: &mut Vec<f64>) -> bool {
    let Ok(inv) = h.inverse() else {
        return false;
    };
    out.clear();
    out.extend(
        src.iter()
            .zip(dst)
            .map(|(&p, &q)| symmetric_transfer_error(h, &inv, p, q)),
    );
    true
}

fn check_input(src: &[Point], dst: &[Point]) -> Result<()> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch(src.len(), dst.len()));
    }
    if src.len() < 4 {
        return Err(Error::InsufficientMatches {
            required: 4,
            actual: src.len(),
        });
    }
    Ok(())
}

/// Iterations needed to draw one all-inlier sample with the given confidence.
fn needed_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let p_good = inlier_ratio.powi(4);
    if p_good >= 1.0 {
        return 1;
    }
    if p_good <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Draws minimal samples until `confidence` is reached, keeping the
/// hypothesis with the highest `quality`.
fn search(
    src: &[Point],
    dst: &[Point],
    seed: u64,
    max_iters: usize,
    confidence: f64,
    quality: impl Fn(&[f64]) -> (f64, f64),
) -> Result<(Homography, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Homography)> = None;
    let mut needed = max_iters.max(1);
    let mut res = Vec::with_capacity(src.len());
    let mut iter = 0;
    while iter < needed {
        iter += 1;
        let idx = sample(&mut rng, src.len(), 4);
        let s = [0, 1, 2, 3].map(|k| src[idx.index(k)]);
        let d = [0, 1, 2, 3].map(|k| dst[idx.index(k)]);
        if has_collinear_triple(&s) || has_collinear_triple(&d) {
            continue;
        }
        let Ok(h) = fit_homography(&s, &d) else {
            continue;
        };
        if !residuals(&h, src, dst, &mut res) {
            continue;
        }
        let (q, inlier_ratio) = quality(&res);
        if best.as_ref().is_none_or(|(bq, _)| q > *bq) {
            best = Some((q, h));
            needed = needed.min(needed_iterations(inlier_ratio, confidence, max_iters.max(1)));
        }
    }
    best.map(|(_, h)| (h, iter)).ok_or(Error::NoModel)
}

fn select(points: &[Point], mask: &[bool]) -> Vec<Point> {
    points.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect()
}

/// Classic RANSAC over minimal 4-point fits, refit by least squares on the
/// final inlier set.
pub fn estimate_homography_ransac(src: &[Point], dst: &[Point], params: &RansacParams) -> Result<RobustFitResult> {
    check_input(src, dst)?;
    if params.threshold.is_nan() || params.threshold <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold {} must be positive",
            params.threshold
        )));
    }
    let n = src.len() as f64;
    let t = params.threshold;
    let count = |res: &[f64]| res.iter().filter(|&&r| r < t).count();
    let (mut h, iterations) = search(src, dst, params.seed, params.max_iters, params.confidence, |res| {
        let c = count(res) as f64 / n;
        (c, c)
    })?;

    let mut res = Vec::new();
    residuals(&h, src, dst, &mut res);
    let mut mask: Vec<bool> = res.iter().map(|&r| r < t).collect();
    for _ in 0..3 {
        let inliers = mask.iter().filter(|&&m| m).count();
        if inliers < 4 {
            break;
        }
        let Ok(refit) = fit_homography(&select(src, &mask), &select(dst, &mask)) else {
            break;
        };
        if !residuals(&refit, src, dst, &mut res) {
            break;
        }
        let new_mask: Vec<bool> = res.iter().map(|&r| r < t).collect();
        let new_count = new_mask.iter().filter(|&&m| m).count();
        if new_count < inliers {
            break;
        }
        let stable = new_mask == mask;
        h = refit;
        mask = new_mask;
        if stable {
            break;
        }
    }
    let inliers = mask.iter().filter(|&&m| m).count();
    let score = inliers as f64 / n;
    if inliers < 4 || score < params.min_score {
        return Err(Error::NoModel);
    }
    Ok(RobustFitResult {
        h,
        inlier_mask: mask,
        score,
        iterations,
    })
}

fn sigma_weights(res: &[f64], sigmas: &[f64]) -> Vec<f64> {
    res.iter()
        .map(|&r| {
            let r2 = r * r;
            sigmas.iter().map(|s| (1.0 - r2 / (s * s)).max(0.0)).sum::<f64>() / sigmas.len() as f64
        })
        .collect()
}

/// Robust fit without a single inlier threshold. Each hypothesis is scored
/// by averaging a truncated quadratic kernel over `partitions` noise scales;
/// the winner is refined by weighted least squares using each point's
/// averaged kernel value as its weight. Inliers are the points with
/// residual below `max_sigma`.
pub fn estimate_homography_magsac(src: &[Point], dst: &[Point], params: &MagsacParams) -> Result<RobustFitResult> {
    check_input(src, dst)?;
    if params.max_sigma.is_nan() || params.max_sigma <= 0.0 || params.partitions == 0 {
        return Err(Error::InvalidParameter(
            "max_sigma and partitions must be positive".into(),
        ));
    }
    let n = src.len() as f64;
    let sigmas: Vec<f64> = (1..=params.partitions)
        .map(|k| k as f64 * params.max_sigma / params.partitions as f64)
        .collect();
    let quality = |res: &[f64]| sigma_weights(res, &sigmas).iter().sum::<f64>() / n;
    let max_sigma = params.max_sigma;
    let (mut h, iterations) = search(src, dst, params.seed, params.max_iters, params.confidence, |res| {
        let inliers = res.iter().filter(|&&r| r < max_sigma).count() as f64 / n;
        (quality(res), inliers)
    })?;

    let mut res = Vec::new();
    residuals(&h, src, dst, &mut res);
    let mut q = quality(&res);
    for _ in 0..5 {
        let w = sigma_weights(&res, &sigmas);
        let Ok(refit) = fit_homography_weighted(src, dst, &w) else {
            break;
        };
        let mut new_res = Vec::new();
        if !residuals(&refit, src, dst, &mut new_res) {
            break;
        }
        let new_q = quality(&new_res);
        if new_q < q {
            break;
        }
        let converged = new_q - q < 1e-9;
        h = refit;
        q = new_q;
        res = new_res;
        if converged {
            break;
        }
    }
    let mask: Vec<bool> = res.iter().map(|&r| r < max_sigma).collect();
    if mask.iter().filter(|&&m| m).count() < 4 || q < params.min_score {
        return Err(Error::NoModel);
    }
    Ok(RobustFitResult {
        h,
        inlier_mask: mask,
        score: q,
        iterations,
    })
}
