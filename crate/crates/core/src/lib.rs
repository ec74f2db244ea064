//! Building blocks for inserting a flat advertisement into a video frame
//! sequence: raster types and color spaces, planar geometry, empty-wall
//! region proposals, a kitchen-scene gate, relighting, compositing behind
//! occluders, and feature-based homography tracking.

pub mod compositor;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod photometric;
pub mod regions;
pub mod scene;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{Homography, LineSegment, LineSegmentSet, Orientation, Point, Quad};

pub use imaging::{BinaryMask, Cdf, ImageGray, ImageLab, ImageRgb};
