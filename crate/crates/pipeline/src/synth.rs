//! Deterministic synthetic kitchen sequences with exact ground truth.
//!
//! A wide backdrop (brick wall with a blank painted panel above a counter
//! with cabinets and clutter) is rendered once; each frame is an integer
//! crop of it shifted by the camera step, so the true inter-frame motion is
//! an exact translation. A person walks across in frame coordinates and is
//! drawn on top, with a matching human mask.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vpp_core::imaging::save_png;
use vpp_core::regions::LabelMap;
use vpp_core::scene::{Detection, DetectionSet};
use vpp_core::{BinaryMask, ImageRgb, LineSegment, LineSegmentSet, Point, Quad};

use crate::artifacts::FrameArtifacts;
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::metrics::GroundTruthFrame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Camera motion per frame in whole pixels; scene content moves the
    /// opposite way.
    pub step: (i64, i64),
    pub seed: u64,
    pub person: bool,
    /// Emit detections that pass the default scene rule.
    pub kitchen: bool,
    pub lines: bool,
    pub ad_size: (usize, usize),
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 512,
            height: 288,
            frames: 31,
            step: (2, 0),
            seed: 7,
            person: true,
            kitchen: true,
            lines: true,
            ad_size: (600, 300),
        }
    }
}

pub struct SynthScene {
    pub params: SynthParams,
    pub frames: Vec<ImageRgb>,
    pub artifacts: Vec<FrameArtifacts>,
    /// The blank panel in each frame's coordinates.
    pub truth: Vec<Quad>,
    pub ad: ImageRgb,
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[u8; 3]>,
}

impl Canvas {
    fn fill_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, c: [u8; 3]) {
        for y in y0.max(0)..(y0 + h).min(self.h as i64) {
            for x in x0.max(0)..(x0 + w).min(self.w as i64) {
                self.px[y as usize * self.w + x as usize] = c;
            }
        }
    }

    fn fill_disc(&mut self, cx: f64, cy: f64, r: f64, c: [u8; 3]) {
        for y in (cy - r).floor().max(0.0) as usize..((cy + r).ceil() as usize).min(self.h) {
            for x in (cx - r).floor().max(0.0) as usize..((cx + r).ceil() as usize).min(self.w) {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    self.px[y * self.w + x] = c;
                }
            }
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, c: [u8; 3], amount: i32) -> [u8; 3] {
    c.map(|v| (v as i32 + rng.random_range(-amount..=amount)).clamp(0, 255) as u8)
}

fn random_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// Panel rectangle `(x, y, w, h)` in backdrop coordinates.
fn panel_rect(p: &SynthParams, margin: (i64, i64)) -> (i64, i64, i64, i64) {
    let (w, h) = (p.width as i64, p.height as i64);
    (margin.0 + w * 7 / 20, margin.1 + h / 8, w * 3 / 10, h * 7 / 20)
}

fn wall_bottom(p: &SynthParams, margin: (i64, i64)) -> i64 {
    margin.1 + p.height as i64 * 3 / 5
}

fn backdrop(p: &SynthParams, bw: usize, bh: usize, margin: (i64, i64), rng: &mut ChaCha8Rng) -> Canvas {
    let mut c = Canvas {
        w: bw,
        h: bh,
        px: vec![[0; 3]; bw * bh],
    };
    let wall_y = wall_bottom(p, margin);

    // bricks with per-brick shade
    let (bw_, bh_) = (34i64, 15i64);
    c.fill_rect(0, 0, bw as i64, wall_y, [200, 196, 188]);
    let mut row = 0;
    let mut y = 0;
    while y < wall_y {
        let offset = if row % 2 == 0 { 0 } else { -bw_ / 2 };
        let mut x = offset;
        while x < bw as i64 {
            let base = [
                150 + rng.random_range(0..60),
                60 + rng.random_range(0..40),
                40 + rng.random_range(0..30),
            ];
            c.fill_rect(x + 1, y + 1, bw_ - 2, bh_ - 2, base);
            x += bw_;
        }
        y += bh_;
        row += 1;
    }
    // posters and tiles break the brick periodicity
    for _ in 0..(bw * bh / 4000) {
        let (x, y) = (rng.random_range(0..bw as i64), rng.random_range(0..wall_y.max(1)));
        let (w, h) = (rng.random_range(6..30), rng.random_range(6..30));
        let color = random_color(rng);
        c.fill_rect(x, y, w, h, color);
    }

    // counter, cabinets and clutter
    c.fill_rect(0, wall_y, bw as i64, bh as i64 - wall_y, [120, 84, 52]);
    c.fill_rect(0, wall_y, bw as i64, 8, [60, 60, 66]);
    let door_w = 56;
    let mut x = 4;
    while x + door_w < bw as i64 {
        let shade = jitter(rng, [150, 110, 70], 25);
        c.fill_rect(x, wall_y + 16, door_w - 8, bh as i64 - wall_y - 20, shade);
        c.fill_rect(x + door_w - 20, wall_y + 28, 4, 14, [220, 220, 210]);
        x += door_w;
    }
    for _ in 0..(bw / 25) {
        let cx = rng.random_range(0.0..bw as f64);
        let r = rng.random_range(4.0..12.0);
        let color = random_color(rng);
        c.fill_disc(cx, wall_y as f64 - r * 0.6, r, color);
    }
    for _ in 0..(bw / 20) {
        let (x, y) = (rng.random_range(0..bw as i64), rng.random_range(wall_y + 10..bh as i64));
        let color = random_color(rng);
        c.fill_rect(x, y, rng.random_range(5..20), rng.random_range(5..20), color);
    }

    // sensor noise, then the blank panel on top
    for v in c.px.iter_mut() {
        *v = jitter(rng, *v, 4);
    }
    let (px, py, pw, ph) = panel_rect(p, margin);
    for y in py..py + ph {
        for x in px..px + pw {
            let v = jitter(rng, [226, 222, 208], 2);
            c.px[y as usize * bw + x as usize] = v;
        }
    }
    c
}

fn ad_image(size: (usize, usize), rng: &mut ChaCha8Rng) -> ImageRgb {
    let (w, h) = size;
    let stripes: Vec<[u8; 3]> = (0..6).map(|_| random_color(rng)).collect();
    ImageRgb::from_fn(w, h, |x, y| {
        let band = (x * 6 / w.max(1)).min(5);
        let base = stripes[band];
        // a bright diagonal logo bar over vertical stripes
        let on_bar = (x as i64 - 2 * y as i64).rem_euclid(w as i64) < (w as i64 / 8);
        if on_bar {
            [250, 250, 245]
        } else {
            base.map(|v| (v as usize * (h + y) / (2 * h.max(1))) as u8)
        }
    })
    .expect("non-empty ad")
}

/// Person silhouette in frame coordinates for frame `i`.
fn person_mask(p: &SynthParams, i: usize) -> BinaryMask {
    let (w, h) = (p.width as f64, p.height as f64);
    let cx = 0.12 * w + 4.0 * i as f64;
    let head_r = 0.06 * h;
    let head_cy = 0.30 * h;
    let body = (cx - 0.055 * w, head_cy + head_r * 0.9, 0.11 * w, h);
    BinaryMask::from_fn(p.width, p.height, |x, y| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let in_head = (fx - cx).powi(2) + (fy - head_cy).powi(2) <= head_r * head_r;
        let in_body = fx >= body.0 && fx < body.0 + body.2 && fy >= body.1;
        in_head || in_body
    })
}

fn mask_bbox(m: &BinaryMask) -> Option<[f64; 4]> {
    let (w, h) = m.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    (x0 < x1).then(|| [x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64])
}

pub fn generate(params: &SynthParams) -> Result<SynthScene> {
    let p = params;
    if p.width < 64 || p.height < 64 || p.frames == 0 {
        return Err(PipelineError::Config(
            "synthetic frames must be at least 64x64 and one frame long".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let travel = |s: i64| s.unsigned_abs() as usize * (p.frames - 1);
    let margin = (
        if p.step.0 < 0 { travel(p.step.0) as i64 } else { 0 },
        if p.step.1 < 0 { travel(p.step.1) as i64 } else { 0 },
    );
    let (bw, bh) = (p.width + travel(p.step.0), p.height + travel(p.step.1));
    let canvas = backdrop(p, bw, bh, margin, &mut rng);
    let ad = ad_image(p.ad_size, &mut rng);
    let (px, py, pw, ph) = panel_rect(p, margin);
    let wall_y = wall_bottom(p, margin);

    let mut frames = Vec::with_capacity(p.frames);
    let mut artifacts = Vec::with_capacity(p.frames);
    let mut truth = Vec::with_capacity(p.frames);
    for i in 0..p.frames {
        let ox = margin.0 + p.step.0 * i as i64;
        let oy = margin.1 + p.step.1 * i as i64;
        let human = p.person.then(|| person_mask(p, i));
        let mut frame = ImageRgb::from_fn(p.width, p.height, |x, y| {
            canvas.px[(y as i64 + oy) as usize * bw + (x as i64 + ox) as usize]
        })
        .expect("non-empty frame");
        if let Some(m) = &human {
            for y in 0..p.height {
                for x in 0..p.width {
                    if m.get(x, y) {
                        let head = (y as f64) < 0.36 * p.height as f64;
                        let shade = if head {
                            [224, 180, 150]
                        } else {
                            [40, 70, 150 + (x % 7) as u8 * 6]
                        };
                        frame.put_pixel(x, y, shade);
                    }
                }
            }
        }

        let (fx, fy) = ((px - ox) as f64, (py - oy) as f64);
        let quad = Quad::from_rect(fx, fy, pw as f64, ph as f64)?;
        truth.push(quad);

        let in_panel = |x: usize, y: usize| {
            let (bx, by) = (x as i64 + ox, y as i64 + oy);
            (px..px + pw).contains(&bx) && (py..py + ph).contains(&by)
        };
        let wall = BinaryMask::from_fn(p.width, p.height, |x, y| {
            in_panel(x, y) && !human.as_ref().is_some_and(|m| m.get(x, y))
        });
        let labels = (0..p.height)
            .flat_map(|y| (0..p.width).map(move |_| if (y as i64 + oy) < wall_y { 1 } else { 2 }))
            .collect();
        let planes = LabelMap::new(p.width, p.height, labels)?;

        let mut dets = Vec::new();
        if let Some(b) = human.as_ref().and_then(mask_bbox) {
            dets.push(Detection::new("person", 0.97, b)?);
        }
        // [x, y, w, h] boxes on whole pixels, inside the frame
        let counter = (wall_y - oy) as f64;
        let fw = p.width as f64;
        let whole = |v: f64| v.round();
        let (art_score, cup_score) = if p.kitchen { (0.91, 0.86) } else { (0.42, 0.3) };
        dets.push(Detection::new(
            "bowl",
            art_score,
            [whole(0.1 * fw), counter - 14.0, whole(0.12 * fw), 14.0],
        )?);
        dets.push(Detection::new(
            "cup",
            cup_score,
            [whole(0.6 * fw), counter - 12.0, whole(0.04 * fw), 12.0],
        )?);
        dets.push(Detection::new(
            "oven",
            0.7,
            [0.0, counter + 10.0, whole(0.25 * fw), p.height as f64 - counter - 10.0],
        )?);

        let lines = p.lines.then(|| {
            let seg = |x1: f64, y1: f64, x2: f64, y2: f64| {
                LineSegment::new(Point::new(x1, y1), Point::new(x2, y2)).expect("distinct endpoints")
            };
            let (x1, y1) = (fx + pw as f64, fy + ph as f64);
            LineSegmentSet::new(vec![
                seg(fx, fy, x1, fy),
                seg(fx, y1, x1, y1),
                seg(fx, fy, fx, y1),
                seg(x1, fy, x1, y1),
                seg(0.0, counter, p.width as f64, counter),
            ])
        });

        artifacts.push(FrameArtifacts {
            wall: Some(wall),
            planes: Some(planes),
            human,
            detections: Some(DetectionSet { detections: dets }),
            lines,
        });
        frames.push(frame);
    }
    Ok(SynthScene {
        params: p.clone(),
        frames,
        artifacts,
        truth,
        ad,
    })
}

pub const FRAMES_DIR: &str = "frames";
pub const ARTIFACTS_DIR: &str = "artifacts";
pub const AD_FILE: &str = "ad.png";
pub const TRUTH_FILE: &str = "ground_truth.json";
pub const CONFIG_FILE: &str = "config.json";

impl SynthScene {
    pub fn stem(i: usize) -> String {
        format!("{i:04}")
    }

    /// Ground truth in the evaluation format; the panel counts only on
    /// frames that pass the scene gate.
    pub fn ground_truth(&self) -> Vec<GroundTruthFrame> {
        self.truth
            .iter()
            .enumerate()
            .map(|(frame, q)| GroundTruthFrame {
                frame,
                quad: self.params.kitchen.then_some(*q),
            })
            .collect()
    }

    /// Writes frames, artifacts, the ad, ground truth and a `config.json`
    /// with relative paths, returning the loaded config.
    pub fn write(&self, dir: &Path) -> Result<PipelineConfig> {
        let frames_dir = dir.join(FRAMES_DIR);
        let art_dir = dir.join(ARTIFACTS_DIR);
        for d in [&frames_dir, &art_dir] {
            fs::create_dir_all(d).map_err(|e| PipelineError::io(d, e))?;
        }
        for (i, (f, a)) in self.frames.iter().zip(&self.artifacts).enumerate() {
            save_png(f, frames_dir.join(format!("{}.png", Self::stem(i))))?;
            a.save(&art_dir, &Self::stem(i))?;
        }
        save_png(&self.ad, dir.join(AD_FILE))?;
        let gt = dir.join(TRUTH_FILE);
        fs::write(&gt, serde_json::to_string(&self.ground_truth()).expect("serializes"))
            .map_err(|e| PipelineError::io(&gt, e))?;

        let mut cfg = PipelineConfig::new(FRAMES_DIR, AD_FILE, ARTIFACTS_DIR, "out");
        cfg.ground_truth = Some(TRUTH_FILE.into());
        let cpath = dir.join(CONFIG_FILE);
        fs::write(&cpath, cfg.to_json()).map_err(|e| PipelineError::io(&cpath, e))?;
        PipelineConfig::load(&cpath)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthParams {
        SynthParams {
            width: 160,
            height: 96,
            frames: 4,
            ..SynthParams::default()
        }
    }

    #[test]
    fn frames_are_exact_shifts_outside_the_person() {
        let p = SynthParams {
            person: false,
            ..small()
        };
        let s = generate(&p).unwrap();
        let (a, b) = (&s.frames[0], &s.frames[1]);
        for y in 0..p.height {
            for x in 0..p.width - 2 {
                assert_eq!(b.pixel(x, y), a.pixel(x + 2, y));
            }
        }
        let shift = s.truth[0].corners()[0] - s.truth[1].corners()[0];
        assert_eq!((shift.x, shift.y), (2.0, 0.0));
    }

    #[test]
    fn negative_steps_stay_on_the_canvas() {
        let p = SynthParams {
            step: (-3, 1),
            ..small()
        };
        let s = generate(&p).unwrap();
        let d = s.truth[1].corners()[0] - s.truth[0].corners()[0];
        assert_eq!((d.x, d.y), (3.0, -1.0));
    }

    #[test]
    fn artifacts_match_frame_dims_and_pass_the_gate() {
        use vpp_core::scene::{classify_scene, SceneRule};
        let s = generate(&small()).unwrap();
        for a in &s.artifacts {
            assert_eq!(a.wall.as_ref().unwrap().dims(), (160, 96));
            assert_eq!(a.planes.as_ref().unwrap().dims(), (160, 96));
            assert_eq!(a.human.as_ref().unwrap().dims(), (160, 96));
            let v = classify_scene(&a.detections.as_ref().unwrap().detections, &SceneRule::default());
            assert!(v.is_kitchen);
        }
        let off = generate(&SynthParams {
            kitchen: false,
            ..small()
        })
        .unwrap();
        let v = classify_scene(
            &off.artifacts[0].detections.as_ref().unwrap().detections,
            &SceneRule::default(),
        );
        assert!(!v.is_kitchen);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.ad, b.ad);
        assert_eq!(a.artifacts, b.artifacts);
    }
}
