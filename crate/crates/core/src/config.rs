use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("invalid pipeline configuration: {0}")]
pub struct ConfigError(pub String);

/// Tunables shared by segmentation, tracking and the cross-section geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
/// Missing fields in a config file take their defaults.
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Pixels strictly darker than this are lumen candidates.
    pub intensity_threshold: u8,
    /// Minimum IoU for a segment to continue the track.
    pub min_iou: f64,
    /// Consecutive misses tolerated before the track is lost.
    pub max_missed_frames: usize,
    /// Half thickness of the intersection slab, as a fraction of the median cloud depth.
    pub slab_half_thickness: f64,
    /// Number of reference planes swept between the near cloud and the stenosis.
    pub plane_sweep_steps: usize,
    /// Smallest admissible dark segment.
    pub min_segment_pixels: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            intensity_threshold: 50,
            min_iou: 0.5,
            max_missed_frames: 25,
            slab_half_thickness: 0.01,
            plane_sweep_steps: 64,
            min_segment_pixels: 25,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.min_iou > 0.0 && self.min_iou <= 1.0) {
            return Err(ConfigError(format!(
                "min_iou must lie in (0, 1], got {}",
                self.min_iou
            )));
        }
        if !(self.slab_half_thickness.is_finite() && self.slab_half_thickness > 0.0) {
            return Err(ConfigError(format!(
                "slab_half_thickness must be positive, got {}",
                self.slab_half_thickness
            )));
        }
        if self.plane_sweep_steps < 2 {
            return Err(ConfigError(format!(
                "plane_sweep_steps must be at least 2, got {}",
                self.plane_sweep_steps
            )));
        }
        if self.min_segment_pixels == 0 {
            return Err(ConfigError("min_segment_pixels must be at least 1".into()));
        }
        Ok(())
    }
}
