use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::report::Severity;

use super::{
    convex_hull, kasa_fit, percentile, shoelace_area, Circle, GeometryError, Plane, PointCloud,
};

pub const MIN_SECTION_POINTS: usize = 20;

/// Lower end of the reference sweep, as a quantile of cloud z.
const SWEEP_FLOOR_QUANTILE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub plane: Plane,
    /// In-plane basis the 2D coordinates refer to.
    pub basis: ([f64; 3], [f64; 3]),
    /// Convex hull, counter-clockwise.
    pub boundary2d: Vec<[f64; 2]>,
    pub area: f64,
    pub circle: Circle,
    /// Cloud indices of the slab points.
    pub members: Vec<usize>,
}

impl CrossSection {
    /// Lifts a point in the in-plane basis back to camera coordinates.
    pub fn lift(&self, p: [f64; 2]) -> [f64; 3] {
        let (u, v) = self.basis;
        let o = self.plane.offset;
        let n = self.plane.normal;
        std::array::from_fn(|k| o * n[k] + p[0] * u[k] + p[1] * v[k])
    }

    pub fn boundary3d(&self) -> Vec<[f64; 3]> {
        self.boundary2d.iter().map(|p| self.lift(*p)).collect()
    }
}

/// Intersects the cloud with a slab around `plane` whose half thickness is
/// `slab_half_thickness` times the median cloud depth.
pub fn cross_section(
    cloud: &PointCloud,
    plane: &Plane,
    cfg: &PipelineConfig,
) -> Result<CrossSection, GeometryError> {
    let tol = cfg.slab_half_thickness * cloud.median_z();
    let members: Vec<usize> = cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| plane.signed_distance(**p).abs() <= tol)
        .map(|(i, _)| i)
        .collect();
    if members.len() < MIN_SECTION_POINTS {
        return Err(GeometryError::EmptySection {
            found: members.len(),
            needed: MIN_SECTION_POINTS,
        });
    }
    let (u, v) = plane.basis();
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let projected: Vec<[f64; 2]> = members
        .iter()
        .map(|&i| {
            let p = cloud.points()[i];
            [dot(p, u), dot(p, v)]
        })
        .collect();
    let boundary2d = convex_hull(&projected);
    if boundary2d.len() < 3 {
        return Err(GeometryError::DegenerateSection);
    }
    let area = shoelace_area(&boundary2d);
    let circle = kasa_fit(&boundary2d).ok_or(GeometryError::DegenerateSection)?;
    if !(area > 0.0) {
        return Err(GeometryError::DegenerateSection);
    }
    Ok(CrossSection {
        plane: *plane,
        basis: (u, v),
        boundary2d,
        area,
        circle,
        members,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best: CrossSection,
    pub best_step: usize,
    /// Plane depth and section area (if any) for every step.
    pub profile: Vec<(f64, Option<f64>)>,
}

/// Sweeps frontal planes from the 5th percentile of cloud z to where the
/// stenosis plane crosses the optical axis and keeps the largest section.
/// Equal areas go to the nearer plane.
pub fn reference_sweep(
    cloud: &PointCloud,
    stenosis: &Plane,
    cfg: &PipelineConfig,
) -> Result<SweepResult, GeometryError> {
    let steps = cfg.plane_sweep_steps;
    if steps < 2 {
        return Err(GeometryError::Sweep(format!(
            "need at least 2 planes, got {steps}"
        )));
    }
    let z: Vec<f64> = cloud.points().iter().map(|p| p[2]).collect();
    let z_lo = percentile(&z, SWEEP_FLOOR_QUANTILE).ok_or(GeometryError::TooFewPoints {
        found: 0,
        needed: 1,
    })?;
    let z_hi = stenosis.z_intercept().ok_or_else(|| {
        GeometryError::Sweep("stenosis plane is parallel to the optical axis".into())
    })?;
    if !(z_hi > z_lo) {
        return Err(GeometryError::Sweep(format!(
            "stenosis plane at z={z_hi} does not lie beyond the near cloud (z={z_lo})"
        )));
    }
    let dz = (z_hi - z_lo) / (steps - 1) as f64;
    let sections: Vec<(f64, Result<CrossSection, GeometryError>)> = (0..steps)
        .into_par_iter()
        .map(|k| {
            let zk = if k + 1 == steps {
                z_hi
            } else {
                z_lo + k as f64 * dz
            };
            (zk, cross_section(cloud, &Plane::frontal(zk), cfg))
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, (_, s)) in sections.iter().enumerate() {
        if let Ok(s) = s {
            let better = match best {
                None => true,
                Some(b) => {
                    s.area
                        > sections[b]
                            .1
                            .as_ref()
                            .map(|x| x.area)
                            .unwrap_or(f64::NEG_INFINITY)
                }
            };
            if better {
                best = Some(k);
            }
        }
    }
    let best_step = best
        .ok_or_else(|| GeometryError::Sweep(format!("all {steps} reference sections are empty")))?;
    let profile = sections
        .iter()
        .map(|(zk, s)| (*zk, s.as_ref().ok().map(|x| x.area)))
        .collect();
    let best = sections
        .into_iter()
        .nth(best_step)
        .and_then(|(_, s)| s.ok())
        .expect("best section");
    Ok(SweepResult {
        best,
        best_step,
        profile,
    })
}

/// PSA and PSD from the two sections. Negative values are returned as is,
/// each with a warning.
pub fn compute_psa_psd(
    stenosis: &CrossSection,
    reference: &CrossSection,
) -> Result<(Severity, Vec<String>), GeometryError> {
    if !(reference.area > 0.0 && reference.circle.radius > 0.0) {
        return Err(GeometryError::ZeroReference);
    }
    let sev = Severity::from_measurements(
        stenosis.area,
        reference.area,
        stenosis.circle.diameter(),
        reference.circle.diameter(),
    );
    let mut warnings = Vec::new();
    if sev.psa < 0.0 {
        warnings.push(format!(
            "negative PSA ({:.2}): reference section smaller than stenosis section",
            sev.psa
        ));
    }
    if sev.psd < 0.0 {
        warnings.push(format!(
            "negative PSD ({:.2}): reference diameter smaller than stenosis diameter",
            sev.psd
        ));
    }
    Ok((sev, warnings))
}
