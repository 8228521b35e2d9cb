//! The stenosis report and its canonical text form.
//!
//! Areas and diameters are in the arbitrary units of an up-to-scale depth
//! map; only the PSA/PSD ratios carry clinical meaning.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

/// How the measured frame was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeSource {
    Tracked,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: PipelineConfig,
    pub depth_provider: String,
    pub segmenter: String,
    pub keyframe_source: KeyframeSource,
}

/// Geometric by-products kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stenosis_plane_normal: [f64; 3],
    pub stenosis_plane_offset: f64,
    pub reference_plane_z: f64,
    pub stenosis_section_points: usize,
    pub reference_section_points: usize,
    pub cloud_points: usize,
}

/// PSA/PSD together with the areas and diameters they derive from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Severity {
    pub area_stenosis: f64,
    pub area_reference: f64,
    pub diameter_stenosis: f64,
    pub diameter_reference: f64,
    pub psa: f64,
    pub psd: f64,
}

impl Severity {
    pub fn from_measurements(
        area_stenosis: f64,
        area_reference: f64,
        diameter_stenosis: f64,
        diameter_reference: f64,
    ) -> Self {
        Self {
            area_stenosis,
            area_reference,
            diameter_stenosis,
            diameter_reference,
            psa: percent_reduction(area_stenosis, area_reference),
            psd: percent_reduction(diameter_stenosis, diameter_reference),
        }
    }

    /// True when the stored percentages equal the ones recomputed from the
    /// stored areas and diameters, bit for bit.
    pub fn is_consistent(&self) -> bool {
        self.psa == percent_reduction(self.area_stenosis, self.area_reference)
            && self.psd == percent_reduction(self.diameter_stenosis, self.diameter_reference)
    }
}

/// `(1 - measured / reference) * 100`.
#[inline]
pub fn percent_reduction(measured: f64, reference: f64) -> f64 {
    (1.0 - measured / reference) * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StenosisReport {
    pub keyframe_index: usize,
    #[serde(flatten)]
    pub severity: Severity,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
    pub diagnostics: Diagnostics,
}

impl StenosisReport {
    pub fn psa(&self) -> f64 {
        self.severity.psa
    }

    pub fn psd(&self) -> f64 {
        self.severity.psd
    }

    /// Pretty JSON with a fixed field order and a trailing newline.
    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
