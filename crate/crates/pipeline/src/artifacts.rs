use std::fs;
use std::path::{Path, PathBuf};

use vpp_core::imaging::{load_mask, save_mask};
use vpp_core::regions::LabelMap;
use vpp_core::scene::DetectionSet;
use vpp_core::{BinaryMask, Error, LineSegmentSet};

use crate::error::{PipelineError, Result};

pub const WALL: &str = "wall.png";
pub const PLANES: &str = "planes.png";
pub const HUMAN: &str = "human.png";
pub const DETECTIONS: &str = "detections.json";
pub const LINES: &str = "lines.json";

/// Model outputs for one frame, each optional.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameArtifacts {
    pub wall: Option<BinaryMask>,
    pub planes: Option<LabelMap>,
    pub human: Option<BinaryMask>,
    pub detections: Option<DetectionSet>,
    pub lines: Option<LineSegmentSet>,
}

fn existing(dir: &Path, name: &str) -> Option<PathBuf> {
    let p = dir.join(name);
    p.is_file().then_some(p)
}

fn check_dims(actual: (usize, usize), frame: (usize, usize)) -> Result<()> {
    if actual != frame {
        return Err(Error::DimensionMismatch {
            expected: frame,
            actual,
        }
        .into());
    }
    Ok(())
}

impl FrameArtifacts {
    /// Loads whatever exists under `root/stem`; a missing directory yields
    /// no artifacts. Rasters must match `frame_size` and detection boxes are
    /// clipped to it.
    pub fn load(root: &Path, stem: &str, frame_size: (usize, usize)) -> Result<Self> {
        let dir = root.join(stem);
        let mut out = FrameArtifacts::default();
        if !dir.is_dir() {
            return Ok(out);
        }
        if let Some(p) = existing(&dir, WALL) {
            let m = load_mask(&p)?;
            check_dims(m.dims(), frame_size)?;
            out.wall = Some(m);
        }
        if let Some(p) = existing(&dir, PLANES) {
            let m = LabelMap::load(&p)?;
            check_dims(m.dims(), frame_size)?;
            out.planes = Some(m);
        }
        if let Some(p) = existing(&dir, HUMAN) {
            let m = load_mask(&p)?;
            check_dims(m.dims(), frame_size)?;
            out.human = Some(m);
        }
        if let Some(p) = existing(&dir, DETECTIONS) {
            out.detections = Some(DetectionSet::load(&p, Some(frame_size))?);
        }
        if let Some(p) = existing(&dir, LINES) {
            out.lines = Some(LineSegmentSet::load(&p)?);
        }
        Ok(out)
    }

    /// Writes the present artifacts under `root/stem`; plane labels go out
    /// as 16-bit grayscale.
    pub fn save(&self, root: &Path, stem: &str) -> Result<()> {
        let dir = root.join(stem);
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        if let Some(m) = &self.wall {
            save_mask(m, dir.join(WALL))?;
        }
        if let Some(m) = &self.planes {
            m.save(dir.join(PLANES))?;
        }
        if let Some(m) = &self.human {
            save_mask(m, dir.join(HUMAN))?;
        }
        if let Some(d) = &self.detections {
            let p = dir.join(DETECTIONS);
            fs::write(&p, d.to_json()).map_err(|e| PipelineError::io(&p, e))?;
        }
        if let Some(l) = &self.lines {
            l.save(dir.join(LINES))?;
        }
        Ok(())
    }
}
