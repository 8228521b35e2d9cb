//! Single-view reconstruction and cross-section measurement.
//!
//! Everything works in camera coordinates, z forward, in the arbitrary units
//! of the depth map.

mod circle;
mod cloud;
mod export;
mod hull;
mod plane;
mod section;

pub use circle::{kasa_fit, Circle};
pub use cloud::{backproject, percentile, PointCloud, MIN_CLOUD_POINTS};
pub use export::write_obj;
pub use hull::{convex_hull, shoelace_area};
pub use plane::{fit_plane_tls, stenosis_plane, Plane, PlaneFit, MIN_CONTOUR_POINTS};
pub use section::{
    compute_psa_psd, cross_section, reference_sweep, CrossSection, SweepResult, MIN_SECTION_POINTS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("only {found} valid depth pixels, need {needed}")]
    TooFewPoints { found: usize, needed: usize },
    #[error("depth map is {found:?}, camera expects {expected:?}")]
    Shape {
        found: (usize, usize),
        expected: (usize, usize),
    },
    #[error("stenosis contour maps to {found} cloud points, need {needed}")]
    SparseContour { found: usize, needed: usize },
    #[error("stenosis contour is degenerate (collinear points)")]
    DegenerateContour,
    #[error("cross-section holds {found} points, need {needed}")]
    EmptySection { found: usize, needed: usize },
    #[error("cross-section points are collinear")]
    DegenerateSection,
    #[error("reference sweep invalid: {0}")]
    Sweep(String),
    #[error("reference section has zero area or radius")]
    ZeroReference,
}
