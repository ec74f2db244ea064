//! Frame-to-frame ad tracking.
//!
//! Each frame is masked where humans are, reduced to oriented FAST corners
//! with rotated-BRIEF descriptors, and stripped of features on or near the
//! human mask. Features are matched against the previous frame, a robust
//! homography is fitted to the matches, and the previous ad quad is carried
//! through it.

mod brief;
mod fast;
mod matching;
mod robust;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use brief::{describe, describe_smoothed, Described, Descriptor, BORDER};
pub use fast::{detect_keypoints, intensity_orientation, FastParams};
pub use matching::{
    filter_gms, match_bruteforce, match_fginn, match_mutual_nn, match_symmetric, FginnParams, GmsParams, Match,
    SymmetricMode,
};
pub use robust::{
    estimate_homography_magsac, estimate_homography_ransac, symmetric_transfer_error, MagsacParams, RansacParams,
    RobustFitResult,
};

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point, Quad};
use crate::imaging::{dilate, BinaryMask, ImageGray};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    /// Continuous image coordinates; pixel `(x, y)` has centre `(x + 0.5, y + 0.5)`.
    pub position: Point,
    pub response: f64,
    /// Radians.
    pub orientation: f64,
}

/// Keypoints with descriptors, in the interchange form
/// `{"keypoints": [[x, y, response, orientation]], "descriptors": [hex]}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

#[derive(Serialize, Deserialize)]
struct FeatureJson {
    keypoints: Vec<[f64; 4]>,
    descriptors: Vec<Descriptor>,
}

impl FeatureSet {
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: FeatureJson = serde_json::from_str(s)?;
        if raw.keypoints.len() != raw.descriptors.len() {
            return Err(Error::LengthMismatch(raw.keypoints.len(), raw.descriptors.len()));
        }
        Ok(FeatureSet {
            keypoints: raw
                .keypoints
                .iter()
                .map(|&[x, y, response, orientation]| Keypoint {
                    position: Point::new(x, y),
                    response,
                    orientation,
                })
                .collect(),
            descriptors: raw.descriptors,
        })
    }

    pub fn to_json(&self) -> String {
        let raw = FeatureJson {
            keypoints: self
                .keypoints
                .iter()
                .map(|k| [k.position.x, k.position.y, k.response, k.orientation])
                .collect(),
            descriptors: self.descriptors.clone(),
        };
        serde_json::to_string(&raw).expect("features serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn pixel_of(p: Point) -> (i64, i64) {
    (p.x.floor() as i64, p.y.floor() as i64)
}

/// Drops keypoints lying on `human_mask` grown by `margin` pixels, keeping
/// descriptors paired.
pub fn filter_keypoints_by_mask(
    kps: &[Keypoint],
    descs: &[Descriptor],
    human_mask: &BinaryMask,
    margin: usize,
    frame_size: (usize, usize),
) -> Result<(Vec<Keypoint>, Vec<Descriptor>)> {
    human_mask.expect_dims(frame_size)?;
    if kps.len() != descs.len() {
        return Err(Error::LengthMismatch(kps.len(), descs.len()));
    }
    let grown = dilate(human_mask, margin);
    Ok(kps
        .iter()
        .zip(descs)
        .filter(|(k, _)| {
            let (x, y) = pixel_of(k.position);
            !grown.get_checked(x, y)
        })
        .map(|(k, d)| (*k, *d))
        .unzip())
}

/// Carries a quad through `h`. Fails when the result is not a simple
/// polygon or its area changes by more than 4x.
pub fn track_quad(prev: &Quad, h: &Homography) -> Result<Quad> {
    let mut corners = [Point::default(); 4];
    for (c, p) in corners.iter_mut().zip(prev.corners()) {
        *c = h
            .apply(*p)
            .map_err(|_| Error::DegenerateTrack("corner mapped to infinity".into()))?;
    }
    let q = Quad::new(corners).map_err(|e| Error::DegenerateTrack(e.to_string()))?;
    let ratio = q.area() / prev.area();
    if !(0.25..=4.0).contains(&ratio) {
        return Err(Error::DegenerateTrack(format!("area changed by {ratio:.3}x")));
    }
    Ok(q)
}

/// Mean corner distance between `prev` and `curr` pulled back through `h`.
pub fn reprojection_error(h: &Homography, prev: &Quad, curr: &Quad) -> Result<f64> {
    let inv = h.inverse()?;
    let mut total = 0.0;
    for (p, c) in prev.corners().iter().zip(curr.corners()) {
        let back = inv.apply(*c).map_err(|_| Error::DegenerateHomography)?;
        total += back.distance(*p);
    }
    Ok(total / 4.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    BruteForce,
    MutualNn,
    Fginn,
    #[default]
    SymFginnIntersection,
    SymFginnUnion,
}

impl MatcherKind {
    pub const ALL: [MatcherKind; 5] = [
        MatcherKind::BruteForce,
        MatcherKind::MutualNn,
        MatcherKind::Fginn,
        MatcherKind::SymFginnIntersection,
        MatcherKind::SymFginnUnion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatcherKind::BruteForce => "brute_force",
            MatcherKind::MutualNn => "mutual_nn",
            MatcherKind::Fginn => "fginn",
            MatcherKind::SymFginnIntersection => "sym_fginn_intersection",
            MatcherKind::SymFginnUnion => "sym_fginn_union",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Ransac,
    Magsac,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::Ransac, EstimatorKind::Magsac];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ransac => "ransac",
            EstimatorKind::Magsac => "magsac",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub fast: FastParams,
    /// Keypoints within this many pixels of a human are discarded.
    pub human_margin: usize,
    pub matcher: MatcherKind,
    pub fginn: FginnParams,
    pub gms: bool,
    pub gms_params: GmsParams,
    pub estimator: EstimatorKind,
    pub ransac: RansacParams,
    pub magsac: MagsacParams,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            fast: FastParams::default(),
            human_margin: 5,
            matcher: MatcherKind::default(),
            fginn: FginnParams::default(),
            gms: false,
            gms_params: GmsParams::default(),
            estimator: EstimatorKind::default(),
            ransac: RansacParams::default(),
            magsac: MagsacParams::default(),
        }
    }
}

impl TrackerParams {
    /// Short label such as `orb+sym_fginn_intersection+ransac`.
    pub fn method_label(&self) -> String {
        let gms = if self.gms { "+gms" } else { "" };
        format!("orb+{}{}+{}", self.matcher.name(), gms, self.estimator.name())
    }
}

/// Features of one frame ready for matching.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameFeatures {
    pub size: (usize, usize),
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    pub dropped_border: usize,
    pub dropped_human: usize,
}

/// Blanks human pixels, detects and describes keypoints, and removes those
/// on or near the human mask.
pub fn extract_features(gray: &ImageGray, human: Option<&BinaryMask>, params: &TrackerParams) -> Result<FrameFeatures> {
    let size = gray.dims();
    let masked;
    let img = match human {
        Some(m) => {
            m.expect_dims(size)?;
            let data = gray
                .data()
                .iter()
                .zip(m.bits())
                .map(|(&v, &h)| if h { 0 } else { v })
                .collect();
            masked = ImageGray::new(size.0, size.1, data)?;
            &masked
        }
        None => gray,
    };
    let kps = detect_keypoints(img, &params.fast)?;
    let described = describe(img, &kps);
    let described_count = described.descriptors.len();
    let (keypoints, descriptors) = match human {
        Some(m) => filter_keypoints_by_mask(
            &described.keypoints,
            &described.descriptors,
            m,
            params.human_margin,
            size,
        )?,
        None => (described.keypoints, described.descriptors),
    };
    Ok(FrameFeatures {
        size,
        dropped_human: described_count - descriptors.len(),
        dropped_border: described.dropped,
        keypoints,
        descriptors,
    })
}

/// Matches `a` (query) against `b` (train) with the configured matcher and
/// optional grid filter.
pub fn match_features(a: &FrameFeatures, b: &FrameFeatures, params: &TrackerParams) -> Result<Vec<Match>> {
    if a.descriptors.is_empty() || b.descriptors.is_empty() {
        return Err(Error::InsufficientMatches { required: 4, actual: 0 });
    }
    let fginn = |q: &FrameFeatures, t: &FrameFeatures| {
        match_fginn(
            &q.keypoints,
            &q.descriptors,
            &t.keypoints,
            &t.descriptors,
            &params.fginn,
        )
    };
    let matches = match params.matcher {
        MatcherKind::BruteForce => match_bruteforce(&a.descriptors, &b.descriptors)?,
        MatcherKind::MutualNn => match_mutual_nn(&a.descriptors, &b.descriptors)?,
        MatcherKind::Fginn => fginn(a, b)?,
        MatcherKind::SymFginnIntersection => match_symmetric(SymmetricMode::Intersection, &fginn(a, b)?, &fginn(b, a)?),
        MatcherKind::SymFginnUnion => match_symmetric(SymmetricMode::Union, &fginn(a, b)?, &fginn(b, a)?),
    };
    if params.gms && !matches.is_empty() {
        return filter_gms(&a.keypoints, &b.keypoints, &matches, a.size, b.size, &params.gms_params);
    }
    Ok(matches)
}

/// Robust fit over matched keypoint positions, mapping `src` onto `dst`.
pub fn estimate_homography(src: &[Point], dst: &[Point], params: &TrackerParams) -> Result<RobustFitResult> {
    match params.estimator {
        EstimatorKind::Ransac => estimate_homography_ransac(src, dst, &params.ransac),
        EstimatorKind::Magsac => estimate_homography_magsac(src, dst, &params.magsac),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionEstimate {
    /// Maps previous-frame coordinates to current-frame coordinates.
    pub h: Homography,
    pub n_matches: usize,
    pub n_inliers: usize,
    pub score: f64,
    pub iterations: usize,
}

pub fn estimate_motion(prev: &FrameFeatures, curr: &FrameFeatures, params: &TrackerParams) -> Result<MotionEstimate> {
    let matches = match_features(prev, curr, params)?;
    let src: Vec<Point> = matches.iter().map(|m| prev.keypoints[m.query_idx].position).collect();
    let dst: Vec<Point> = matches.iter().map(|m| curr.keypoints[m.train_idx].position).collect();
    let fit = estimate_homography(&src, &dst, params)?;
    Ok(MotionEstimate {
        n_matches: matches.len(),
        n_inliers: fit.inlier_count(),
        score: fit.score,
        iterations: fit.iterations,
        h: fit.h,
    })
}

/// Holds the previous frame's features across calls.
#[derive(Clone, Debug, Default)]
pub struct Tracker {
    params: TrackerParams,
    prev: Option<FrameFeatures>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self { params, prev: None }
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// Extracts features for a new frame and returns the motion from the
    /// previous one; `Ok(None)` on the first frame. The new frame becomes the
    /// reference even when estimation fails.
    pub fn observe(&mut self, gray: &ImageGray, human: Option<&BinaryMask>) -> Result<Option<MotionEstimate>> {
        let curr = extract_features(gray, human, &self.params)?;
        let prev = self.prev.replace(curr);
        match prev {
            None => Ok(None),
            Some(p) => estimate_motion(&p, self.prev.as_ref().expect("just stored"), &self.params).map(Some),
        }
    }
}

/// One line of the tracking trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub frame: usize,
    pub quad: Option<Quad>,
    pub n_matches: usize,
    pub n_inliers: usize,
    pub reproj_error: Option<f64>,
    pub method: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint {
            position: Point::new(x, y),
            response: 1.0,
            orientation: 0.0,
        }
    }

    #[test]
    fn mask_filter_examples() {
        let kps: Vec<Keypoint> = (0..10).map(|i| kp(i as f64 * 10.0 + 0.5, 20.5)).collect();
        let descs: Vec<Descriptor> = (0..10).map(|i| Descriptor([i, 0, 0, 0])).collect();
        let size = (100, 40);
        let (k, d) = filter_keypoints_by_mask(&kps, &descs, &BinaryMask::new(100, 40), 5, size).unwrap();
        assert_eq!((k.len(), d.len()), (10, 10));
        let (k, _) = filter_keypoints_by_mask(&kps, &descs, &BinaryMask::full(100, 40), 0, size).unwrap();
        assert!(k.is_empty());
        // left half masked, grown by 5: x < 55 removed
        let half = BinaryMask::from_fn(100, 40, |x, _| x < 50);
        let (k, d) = filter_keypoints_by_mask(&kps, &descs, &half, 5, size).unwrap();
        assert_eq!(
            k.iter().map(|k| k.position.x).collect::<Vec<_>>(),
            vec![60.5, 70.5, 80.5, 90.5]
        );
        assert_eq!(d.iter().map(|d| d.0[0]).collect::<Vec<_>>(), vec![6, 7, 8, 9]);
        assert!(filter_keypoints_by_mask(&kps, &descs, &BinaryMask::new(3, 3), 5, size).is_err());
    }

    #[test]
    fn track_quad_examples() {
        let q = Quad::from_rect(10.0, 20.0, 100.0, 50.0).unwrap();
        assert_eq!(track_quad(&q, &Homography::identity()).unwrap(), q);
        let t = track_quad(&q, &Homography::translation(3.0, -2.0)).unwrap();
        assert_eq!(t, q.translated(3.0, -2.0));
        let scale = Homography::new(nalgebra::Matrix3::new(3.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        assert!(matches!(track_quad(&q, &scale), Err(Error::DegenerateTrack(_))));
        let h = Homography::new(nalgebra::Matrix3::new(
            1.02, 0.01, 4.0, -0.02, 0.99, 1.5, 1e-5, -2e-5, 1.0,
        ))
        .unwrap();
        let got = track_quad(&q, &h).unwrap();
        for (c, p) in got.corners().iter().zip(q.corners()) {
            let m = h.matrix();
            let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
            let x = (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w;
            let y = (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w;
            assert!((c.x - x).abs() < 1e-9 && (c.y - y).abs() < 1e-9);
        }
    }

    #[test]
    fn reprojection_examples() {
        let q = Quad::from_rect(0.0, 0.0, 50.0, 30.0).unwrap();
        let h = Homography::translation(5.0, 1.0);
        assert!(reprojection_error(&h, &q, &track_quad(&q, &h).unwrap()).unwrap() < 1e-9);
        let shifted = q.translated(1.0, 0.0);
        assert!((reprojection_error(&Homography::identity(), &q, &shifted).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn features_json_round_trip() {
        let f = FeatureSet {
            keypoints: vec![kp(1.5, 2.5)],
            descriptors: vec![Descriptor([1, 2, 3, u64::MAX])],
        };
        assert_eq!(FeatureSet::from_json(&f.to_json()).unwrap(), f);
        assert!(FeatureSet::from_json(r#"{"keypoints":[[0,0,1,0]],"descriptors":[]}"#).is_err());
    }

    fn textured(w: usize, h: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = vec![120u8; w * h];
        for _ in 0..(w * h / 150) {
            let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
            let (bw, bh) = (rng.random_range(3..16), rng.random_range(3..16));
            let v: u8 = rng.random();
            for y in y0..(y0 + bh).min(h) {
                for x in x0..(x0 + bw).min(w) {
                    img[y * w + x] = v;
                }
            }
        }
        img
    }

    #[test]
    fn tracker_recovers_translation() {
        let (w, h) = (400, 300);
        let big = textured(w + 20, h + 20, 9);
        let crop = |dx: usize, dy: usize| ImageGray::from_fn(w, h, |x, y| big[(y + dy) * (w + 20) + x + dx]).unwrap();
        for estimator in EstimatorKind::ALL {
            let mut t = Tracker::new(TrackerParams {
                estimator,
                ..TrackerParams::default()
            });
            assert!(t.observe(&crop(10, 10), None).unwrap().is_none());
            // camera moves right by 3 and down by 2: content shifts left and up
            let m = t.observe(&crop(13, 12), None).unwrap().unwrap();
            let p = m.h.apply(Point::new(200.0, 150.0)).unwrap();
            assert!((p.x - 197.0).abs() < 0.2 && (p.y - 148.0).abs() < 0.2, "{p:?}");
            assert!(m.n_inliers >= 20);
        }
    }

    #[test]
    fn human_features_removed() {
        let (w, h) = (200, 160);
        let img = ImageGray::new(w, h, textured(w, h, 4)).unwrap();
        let human = BinaryMask::from_fn(w, h, |x, y| (80..120).contains(&x) && (40..160).contains(&y));
        let f = extract_features(&img, Some(&human), &TrackerParams::default()).unwrap();
        assert!(f.dropped_human > 0);
        assert!(f.keypoints.iter().all(|k| {
            let (x, y) = (k.position.x, k.position.y);
            !((75.0..125.0).contains(&x) && (35.0..).contains(&y))
        }));
    }

    proptest! {
        #[test]
        fn tracked_quad_reprojects_to_zero(
            x in 0.0..300.0f64, y in 0.0..200.0f64, w in 20.0..150.0f64, hgt in 20.0..150.0f64,
            a in -0.05..0.05f64, b in -0.05..0.05f64, tx in -10.0..10.0f64, ty in -10.0..10.0f64,
            g in -1e-4..1e-4f64, k in -1e-4..1e-4f64,
        ) {
            let q = Quad::from_rect(x, y, w, hgt).unwrap();
            let h = Homography::new(nalgebra::Matrix3::new(1.0 + a, b, tx, -b, 1.0 - a, ty, g, k, 1.0)).unwrap();
            let t = track_quad(&q, &h).unwrap();
            prop_assert!(reprojection_error(&h, &q, &t).unwrap() < 1e-9);
        }
    }
}
