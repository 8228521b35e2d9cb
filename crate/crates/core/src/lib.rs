//! Subglottic stenosis measurement from bronchoscopy video.
//!
//! The pipeline segments the darkest region in every frame, tracks it with
//! an IoU state machine until it is lost past the vocal cords, reconstructs
//! that keyframe in 3D from depth, and compares the stenosis cross-section
//! with the widest healthy section in front of it.

pub mod camera;
pub mod config;
pub mod depth;
pub mod evaluation;
pub mod frame;
pub mod geometry;
pub mod phantom;
pub mod pipeline;
pub mod report;
pub mod segmentation;
pub mod tracking;

pub use camera::CameraIntrinsics;
pub use config::PipelineConfig;
pub use depth::{DepthMap, PhotometricModel};
pub use frame::Frame;
pub use report::{Severity, StenosisReport};
pub use segmentation::{SegmentMask, Segmenter};
