//! Frame-sequence orchestration for ad placement: configuration, per-frame
//! artifact loading, the detect-or-track loop, evaluation metrics, a
//! synthetic scene generator and the tracking benchmark behind the `vpp`
//! command.

pub mod artifacts;
pub mod bench;
pub mod config;
pub mod error;
pub mod metrics;
pub mod run;
pub mod synth;

pub use artifacts::FrameArtifacts;
pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
pub use metrics::{angle_deviation, quad_iou, report_metrics, MetricsReport};
pub use run::{run_pipeline, FrameResult, PlacementSource, StageTiming};
