//! Empty-wall region proposals.
//!
//! The wall mask and the plane label map come from upstream segmentation.
//! Their intersection is split into 8-connected blobs, each blob yields a
//! bounding-box proposal, and proposals are sheared to follow the nearest
//! vertical and horizontal wall lines.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    adjust_point, adjust_point_swapped, classify_line, region_line_distance_with, DistanceMode, LineSegment,
    LineSegmentSet, Orientation, Point, Quad,
};
use crate::imaging::{load_label_image, save_label_image, BinaryMask};

/// Per-pixel integer labels (plane ids).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::InvalidDimensions {
                width,
                height,
                len: labels.len(),
            });
        }
        Ok(Self { width, height, labels })
    }

    /// Loads a 16-bit (or 8-bit) grayscale PNG; the pixel value is the label.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (w, h, labels) = load_label_image(path)?;
        Self::new(w, h, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_label_image(self.width, self.height, &self.labels, path)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

/// Axis-aligned pixel rectangle, serialized as `[x, y, w, h]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl From<[usize; 4]> for Rect {
    fn from([x, y, w, h]: [usize; 4]) -> Self {
        Rect { x, y, w, h }
    }
}

impl From<Rect> for [usize; 4] {
    fn from(r: Rect) -> Self {
        [r.x, r.y, r.w, r.h]
    }
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn center(&self) -> Point {
        Point::new(self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.w as f64).hypot(self.h as f64)
    }

    /// The rectangle's outline as a quad over pixel edges.
    pub fn to_quad(&self) -> Quad {
        Quad::from_rect(self.x as f64, self.y as f64, self.w as f64, self.h as f64)
            .expect("non-empty rectangle is a valid quad")
    }
}

/// Selected pixels where the wall mask is set and the plane label equals
/// `plane_id`.
pub fn empty_space_mask(wall: &BinaryMask, plane: &LabelMap, plane_id: u32) -> Result<BinaryMask> {
    wall.expect_dims(plane.dims())?;
    let bits = wall
        .bits()
        .iter()
        .zip(plane.labels())
        .map(|(&w, &l)| w && l == plane_id)
        .collect();
    BinaryMask::from_bits(wall.width(), wall.height(), bits)
}

/// The plane label covering the most wall pixels; ties go to the smaller
/// label. `None` when the wall mask is empty.
pub fn select_plane_id(wall: &BinaryMask, plane: &LabelMap) -> Result<Option<u32>> {
    wall.expect_dims(plane.dims())?;
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for (&w, &l) in wall.bits().iter().zip(plane.labels()) {
        if w {
            *counts.entry(l).or_default() += 1;
        }
    }
    Ok(counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    /// Row-major pixel indices in scan order.
    pub pixels: Vec<usize>,
    pub bbox: Rect,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// 8-connected components, ordered by descending area and then by the scan
/// position of each component's first pixel. Ids follow that order.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut label = vec![usize::MAX; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        label[start] = id;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if bits[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        comps.push(Component {
            id,
            pixels,
            bbox: Rect {
                x: x0,
                y: y0,
                w: x1 - x0 + 1,
                h: y1 - y0 + 1,
            },
        });
    }
    // discovery order is already scan order of first pixels
    comps.sort_by(|a, b| b.area().cmp(&a.area()).then(a.pixels[0].cmp(&b.pixels[0])));
    for (i, c) in comps.iter_mut().enumerate() {
        c.id = i;
    }
    comps
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionFilters {
    pub min_area: usize,
    /// Minimum blob area / bbox area.
    pub min_fill: f64,
    /// Bounds on bbox width / height.
    pub min_aspect: f64,
    pub max_aspect: f64,
}

impl Default for RegionFilters {
    fn default() -> Self {
        Self {
            min_area: 1,
            min_fill: 0.6,
            min_aspect: 0.25,
            max_aspect: 4.0,
        }
    }
}

impl RegionFilters {
    /// Defaults with `min_area` set to 0.5% of the frame.
    pub fn for_frame(width: usize, height: usize) -> Self {
        Self {
            min_area: ((width * height) as f64 * 0.005).ceil().max(1.0) as usize,
            ..Self::default()
        }
    }
}

/// JSON: `{"bbox": [x, y, w, h], "area": n, "quad": [[x, y] x4] | null}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionProposal {
    pub bbox: Rect,
    #[serde(rename = "area")]
    pub blob_area: usize,
    #[serde(rename = "quad")]
    pub aligned: Option<Quad>,
}

pub fn propose_regions(mask: &BinaryMask, filters: &RegionFilters) -> Result<Vec<RegionProposal>> {
    if filters.min_area < 1 {
        return Err(Error::InvalidParameter("min_area must be at least 1".into()));
    }
    if !(filters.min_fill > 0.0 && filters.min_fill <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "min_fill {} not in (0, 1]",
            filters.min_fill
        )));
    }
    Ok(connected_components(mask)
        .into_iter()
        .filter(|c| {
            let fill = c.area() as f64 / c.bbox.area() as f64;
            let aspect = c.bbox.w as f64 / c.bbox.h as f64;
            c.area() >= filters.min_area
                && fill >= filters.min_fill
                && aspect >= filters.min_aspect
                && aspect <= filters.max_aspect
        })
        .map(|c| RegionProposal {
            bbox: c.bbox,
            blob_area: c.area(),
            aligned: None,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignParams {
    /// Tolerance for calling a line vertical or horizontal, degrees.
    pub angle_tol: f64,
    /// Lines farther than this multiple of the bbox diagonal are ignored.
    pub budget_factor: f64,
    pub distance_mode: DistanceMode,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            angle_tol: 20.0,
            budget_factor: 1.5,
            distance_mode: DistanceMode::Endpoint,
        }
    }
}

fn closest<'a>(
    lines: &'a LineSegmentSet,
    want: Orientation,
    center: Point,
    params: &AlignParams,
    budget: f64,
) -> Result<Option<&'a LineSegment>> {
    let mut best: Option<(f64, &LineSegment)> = None;
    for seg in &lines.segments {
        if classify_line(seg, params.angle_tol)? != want {
            continue;
        }
        let d = region_line_distance_with(params.distance_mode, center, seg);
        if d <= budget && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, seg));
        }
    }
    Ok(best.map(|(_, s)| s))
}

/// Shears a proposal's bounding box to follow the nearest wall lines.
///
/// The top and bottom edges adopt the slope of the closest horizontal line
/// and the left and right edges that of the closest vertical line. Each
/// corner is displaced along the adopted slope by its signed distance from
/// its edge midpoint; when both axes adopt a line the two displacements add.
/// An axis with no line inside the distance budget stays axis-aligned.
pub fn align_region(r: &RegionProposal, lines: &LineSegmentSet, params: &AlignParams) -> Result<Quad> {
    let b = r.bbox;
    if b.w == 0 || b.h == 0 {
        return Err(Error::DegenerateOutput);
    }
    let center = b.center();
    let budget = params.budget_factor * b.diagonal();
    let horizontal = closest(lines, Orientation::Horizontal, center, params, budget)?;
    let vertical = closest(lines, Orientation::Vertical, center, params, budget)?;

    let rect = b.to_quad();
    let [tl, tr, br, bl] = *rect.corners();
    let (hw, hh) = (b.w as f64 / 2.0, b.h as f64 / 2.0);
    let mut offsets = [Point::default(); 4];

    if let Some(seg) = horizontal {
        let m = seg.slope();
        let top_mid = Point::new(center.x, tl.y);
        let bottom_mid = Point::new(center.x, bl.y);
        offsets[0] = offsets[0] + (adjust_point(top_mid, m, -hw) - tl);
        offsets[1] = offsets[1] + (adjust_point(top_mid, m, hw) - tr);
        offsets[2] = offsets[2] + (adjust_point(bottom_mid, m, hw) - br);
        offsets[3] = offsets[3] + (adjust_point(bottom_mid, m, -hw) - bl);
    }
    if let Some(seg) = vertical {
        let k = seg.inverse_slope();
        let left_mid = Point::new(tl.x, center.y);
        let right_mid = Point::new(tr.x, center.y);
        offsets[0] = offsets[0] + (adjust_point_swapped(left_mid, k, -hh) - tl);
        offsets[1] = offsets[1] + (adjust_point_swapped(right_mid, k, -hh) - tr);
        offsets[2] = offsets[2] + (adjust_point_swapped(right_mid, k, hh) - br);
        offsets[3] = offsets[3] + (adjust_point_swapped(left_mid, k, hh) - bl);
    }

    let corners = [tl, tr, br, bl];
    let moved = [0, 1, 2, 3].map(|i| corners[i] + offsets[i]);
    let quad = Quad::new(moved).map_err(|_| Error::DegenerateOutput)?;
    let ratio = quad.area() / b.area() as f64;
    if !(0.5..=2.0).contains(&ratio) {
        return Err(Error::DegenerateOutput);
    }
    Ok(quad)
}

/// [`align_region`], falling back to the axis-aligned bbox on degenerate
/// output.
pub fn align_region_or_bbox(r: &RegionProposal, lines: &LineSegmentSet, params: &AlignParams) -> Result<Quad> {
    match align_region(r, lines, params) {
        Ok(q) => Ok(q),
        Err(Error::DegenerateOutput) => Ok(r.bbox.to_quad()),
        Err(e) => Err(e),
    }
}
