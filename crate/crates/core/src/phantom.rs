//! Synthetic airway sequences with exact ground truth.
//!
//! The airway is a surface of revolution about the optical axis, sampled as
//! a dense piecewise-linear radius profile so every ray/surface hit is a
//! closed-form cone-frustum intersection. A triangular annular ridge stands
//! in for the vocal cords and a quarter-cosine taper for the stenosis. The
//! tube is open where the profile ends.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::depth::{depth_file_name, DepthMap};
use crate::frame::Frame;

/// Spacing of the uniform part of the profile sampling.
const PROFILE_STEP: f64 = 0.005;

#[derive(Debug, thiserror::Error)]
pub enum PhantomError {
    #[error("invalid phantom: {0}")]
    Invalid(String),
    #[error("phantom spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing frame: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Depth(#[from] crate::depth::DepthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StenosisShape {
    /// Axial position of the narrowest section.
    pub z: f64,
    pub r_min: f64,
    /// Axial half length of the taper on each side.
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocalCords {
    pub z: f64,
    pub opening_radius: f64,
    pub half_thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub tube_radius: f64,
    pub stenosis: StenosisShape,
    pub vocal_cords: VocalCords,
    /// The tube is open beyond this z.
    pub tube_end: f64,
    /// On-axis camera positions, one per frame, looking down +z.
    pub camera_z: Vec<f64>,
    pub albedo: f64,
    pub gamma: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    /// The 200-frame layout used by the evaluation grid: 60 frames up to the
    /// vocal cords, a jump across them, then 140 frames toward the stenosis.
    /// The tube is open at the throat, so the lumen behind it renders black.
    pub fn standard(r_min_ratio: f64, noise_sigma: f64, seed: u64) -> Self {
        let (z_v, z_s) = (1.5, 4.5);
        let before: Vec<f64> = (0..60)
            .map(|i| z_v - 0.19 - 0.02 * f64::from(59 - i))
            .collect();
        let after: Vec<f64> = (0..140)
            .map(|i| z_v + 0.06 + 0.0135 * f64::from(i))
            .collect();
        Self {
            tube_radius: 1.0,
            stenosis: StenosisShape {
                z: z_s,
                r_min: r_min_ratio,
                half_width: 1.0,
            },
            vocal_cords: VocalCords {
                z: z_v,
                opening_radius: 0.15,
                half_thickness: 0.05,
            },
            tube_end: z_s,
            camera_z: before.into_iter().chain(after).collect(),
            albedo: 1.0,
            gamma: crate::camera::DEFAULT_GAMMA,
            noise_sigma,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PhantomError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::Invalid(m));
        let (r, s, v) = (self.tube_radius, &self.stenosis, &self.vocal_cords);
        if !(r.is_finite() && r > 0.0) {
            return bad(format!("tube radius must be positive, got {r}"));
        }
        if !(s.r_min > 0.0 && s.r_min <= r) {
            return bad(format!("r_min must lie in (0, R], got {}", s.r_min));
        }
        if !(v.opening_radius > 0.0 && v.opening_radius < r) {
            return bad(format!(
                "vocal-cord opening must lie in (0, R), got {}",
                v.opening_radius
            ));
        }
        if !(s.half_width > 0.0 && v.half_thickness > 0.0) {
            return bad("taper and cord widths must be positive".into());
        }
        if !(v.z + v.half_thickness < s.z - s.half_width) {
            return bad("vocal cords must lie in front of the stenosis taper".into());
        }
        if !(self.tube_end >= s.z) {
            return bad("tube must extend to the stenosis".into());
        }
        if self.camera_z.is_empty() {
            return bad("camera path is empty".into());
        }
        if self.camera_z.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("camera poses must strictly advance".into());
        }
        if self
            .camera_z
            .last()
            .is_some_and(|&c| c >= s.z - s.half_width)
        {
            return bad("camera path runs into the stenosis taper".into());
        }
        if !(self.albedo > 0.0 && self.albedo <= 1.0) {
            return bad(format!("albedo must lie in (0, 1], got {}", self.albedo));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            ));
        }
        Ok(())
    }

    /// Analytic airway radius at axial position `z`.
    pub fn radius_at(&self, z: f64) -> f64 {
        let big_r = self.tube_radius;
        let s = &self.stenosis;
        let v = &self.vocal_cords;
        let mut r = big_r;
        let ds = (z - s.z).abs();
        if ds < s.half_width {
            r = r.min(s.r_min + (big_r - s.r_min) * (FRAC_PI_2 * ds / s.half_width).sin());
        }
        let dv = (z - v.z).abs();
        if dv < v.half_thickness {
            r = r.min(v.opening_radius + (big_r - v.opening_radius) * dv / v.half_thickness);
        }
        r
    }

    fn profile(&self) -> Profile {
        let start = self.camera_z[0].min(self.vocal_cords.z) - 1.0;
        let n = ((self.tube_end - start) / PROFILE_STEP).ceil() as usize;
        let s = &self.stenosis;
        let v = &self.vocal_cords;
        let mut z: Vec<f64> = (0..=n).map(|i| start + i as f64 * PROFILE_STEP).collect();
        z.retain(|&x| x < self.tube_end);
        z.extend([
            self.tube_end,
            s.z,
            s.z - s.half_width,
            s.z + s.half_width,
            v.z,
            v.z - v.half_thickness,
            v.z + v.half_thickness,
        ]);
        z.retain(|&x| x <= self.tube_end);
        z.sort_by(f64::total_cmp);
        z.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let r = z.iter().map(|&x| self.radius_at(x)).collect();
        Profile { z, r }
    }

    pub fn truth(&self) -> PhantomTruth {
        let ratio = self.stenosis.r_min / self.tube_radius;
        let first = self.camera_z.iter().position(|&c| c > self.vocal_cords.z);
        let last = self.camera_z.iter().rposition(|&c| c < self.stenosis.z);
        PhantomTruth {
            psa_true: (1.0 - ratio * ratio) * 100.0,
            psd_true: (1.0 - ratio) * 100.0,
            keyframe_interval: match (first, last) {
                (Some(a), Some(b)) if a <= b => Some((a, b)),
                _ => None,
            },
            frames: self.camera_z.len(),
        }
    }
}

/// Analytic ground truth of a phantom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub psa_true: f64,
    pub psd_true: f64,
    /// First frame past the vocal cords to the last frame before the stenosis.
    pub keyframe_interval: Option<(usize, usize)>,
    pub frames: usize,
}

pub fn ground_truth_report(spec: &PhantomSpec) -> PhantomTruth {
    spec.truth()
}

/// Surface hit along the ray `t · dir` with `dir.z = 1`, so `t` is the
/// z-depth. `normal` faces the camera side of the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub normal: [f64; 3],
}

pub trait RayCaster: Sync {
    /// `dir` has unit z component.
    fn cast(&self, dir: [f64; 3]) -> Option<Hit>;
}

#[derive(Debug, Clone)]
struct Profile {
    z: Vec<f64>,
    r: Vec<f64>,
}

/// The tube seen from one on-axis camera position.
pub struct TubeView<'a> {
    profile: &'a Profile,
    camera_z: f64,
    /// First profile knot ahead of the camera.
    first: usize,
    /// Running minimum over knots of `r_k / (z_k − c)`: a ray whose radial
    /// slope reaches it has met the wall by knot k.
    reach: Vec<f64>,
}

impl<'a> TubeView<'a> {
    fn new(profile: &'a Profile, camera_z: f64) -> Self {
        let first = profile.z.partition_point(|&z| z <= camera_z);
        assert!(first > 0, "camera lies outside the tube");
        let mut reach = Vec::with_capacity(profile.z.len() - first);
        let mut m = f64::INFINITY;
        for k in first..profile.z.len() {
            m = m.min(profile.r[k] / (profile.z[k] - camera_z));
            reach.push(m);
        }
        Self {
            profile,
            camera_z,
            first,
            reach,
        }
    }
}

impl RayCaster for TubeView<'_> {
    fn cast(&self, dir: [f64; 3]) -> Option<Hit> {
        let q = dir[0].hypot(dir[1]);
        let j = self.reach.partition_point(|&m| m > q);
        if j == self.reach.len() {
            return None;
        }
        let k = self.first + j;
        let (z0, z1) = (self.profile.z[k - 1], self.profile.z[k]);
        let (r0, r1) = (self.profile.r[k - 1], self.profile.r[k]);
        let slope = (r1 - r0) / (z1 - z0);
        let t = (r0 + slope * (self.camera_z - z0)) / (q - slope);
        let rho = t * q;
        let (ex, ey) = if rho > 0.0 {
            (t * dir[0] / rho, t * dir[1] / rho)
        } else {
            (0.0, 0.0)
        };
        let norm = (1.0 + slope * slope).sqrt();
        Some(Hit {
            t,
            normal: [-ex / norm, -ey / norm, slope / norm],
        })
    }
}

/// Frontal planes split into angular sectors about the optical axis, each at
/// its own depth; the camera sits at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontalPatches {
    pub depths: Vec<f64>,
}

impl RayCaster for FrontalPatches {
    fn cast(&self, dir: [f64; 3]) -> Option<Hit> {
        let angle = dir[1].atan2(dir[0]) + std::f64::consts::PI;
        let n = self.depths.len();
        let sector = ((angle / std::f64::consts::TAU * n as f64) as usize).min(n - 1);
        Some(Hit {
            t: self.depths[sector],
            normal: [0.0, 0.0, -1.0],
        })
    }
}

/// Shading parameters of one render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shading {
    pub albedo: f64,
    pub gamma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Co-located point light: `255 · clamp((ρ·max(cos θ, 0)/d²)^(1/γ) · g)`
/// with `g` mapping the 95th-percentile pixel to 0.95. The depth map holds
/// exact z-depth and is invalid where the ray escapes.
pub fn render_view(
    scene: &dyn RayCaster,
    k: &CameraIntrinsics,
    shading: &Shading,
    index: usize,
) -> (Frame, DepthMap) {
    let (w, h) = (k.width, k.height);
    let samples: Vec<(f64, f64)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let dir = k.ray((i % w) as f64, (i / w) as f64);
            match scene.cast(dir) {
                None => (0.0, 0.0),
                Some(hit) => {
                    let len = (dir[0] * dir[0] + dir[1] * dir[1] + 1.0).sqrt();
                    let d = hit.t * len;
                    let cos =
                        -(hit.normal[0] * dir[0] + hit.normal[1] * dir[1] + hit.normal[2]) / len;
                    let radiance = shading.albedo * cos.max(0.0) / (d * d);
                    (radiance.powf(1.0 / shading.gamma), hit.t)
                }
            }
        })
        .collect();
    let mut values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let p95 = crate::geometry::percentile(&values, 0.95).unwrap_or(0.0);
    let gain = if p95 > 0.0 { 0.95 / p95 } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(
        shading.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    let noise = (shading.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, shading.noise_sigma).expect("finite sigma"));
    for v in values.iter_mut() {
        *v = 255.0 * (*v * gain).clamp(0.0, 1.0);
        if let Some(n) = &noise {
            *v += n.sample(&mut rng);
        }
    }
    let pixels = values
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    let frame = Frame::new(index, w, h, pixels).expect("buffer matches camera");
    let depth = DepthMap::from_values(w, h, samples.iter().map(|s| s.1).collect());
    (frame, depth)
}

#[derive(Debug, Clone)]
pub struct RenderedSequence {
    pub frames: Vec<Frame>,
    pub depths: Vec<DepthMap>,
    pub truth: PhantomTruth,
}

pub fn render_sequence(
    spec: &PhantomSpec,
    k: &CameraIntrinsics,
) -> Result<RenderedSequence, PhantomError> {
    spec.validate()?;
    k.validate()
        .map_err(|e| PhantomError::Invalid(e.to_string()))?;
    let profile = spec.profile();
    let shading = Shading {
        albedo: spec.albedo,
        gamma: spec.gamma,
        noise_sigma: spec.noise_sigma,
        seed: spec.seed,
    };
    let (frames, depths) = spec
        .camera_z
        .iter()
        .enumerate()
        .map(|(i, &c)| render_view(&TubeView::new(&profile, c), k, &shading, i))
        .unzip();
    Ok(RenderedSequence {
        frames,
        depths,
        truth: spec.truth(),
    })
}

/// Writes frames, depth rasters, calibration and truth into `dir`.
pub fn write_sequence(
    seq: &RenderedSequence,
    k: &CameraIntrinsics,
    dir: &Path,
) -> Result<(), PhantomError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PhantomError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for (frame, depth) in seq.frames.iter().zip(&seq.depths) {
        frame.save_png(&dir.join(format!("frame_{:06}.png", frame.index())))?;
        depth.save(&dir.join(depth_file_name(frame.index())))?;
    }
    let calib = dir.join("calibration.txt");
    std::fs::write(&calib, k.to_text()).map_err(io(&calib))?;
    let truth = dir.join("truth.json");
    let mut text = serde_json::to_string_pretty(&seq.truth).expect("truth serializes");
    text.push('\n');
    std::fs::write(&truth, text).map_err(io(&truth))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_camera() -> CameraIntrinsics {
        CameraIntrinsics::centered(64, 32.0, 2.2).unwrap()
    }

    #[test]
    fn truth_arithmetic() {
        let t = PhantomSpec::standard(0.5, 0.0, 0).truth();
        assert!((t.psa_true - 75.0).abs() < 1e-12 && (t.psd_true - 50.0).abs() < 1e-12);
        let t = PhantomSpec::standard(0.3, 0.0, 0).truth();
        assert!((t.psa_true - 91.0).abs() < 1e-9 && (t.psd_true - 70.0).abs() < 1e-9);
        let t = PhantomSpec::standard(1.0, 0.0, 0).truth();
        assert_eq!((t.psa_true, t.psd_true), (0.0, 0.0));
        assert!(t.psa_true >= t.psd_true);
    }

    #[test]
    fn keyframe_interval_brackets_the_crossing() {
        let spec = PhantomSpec::standard(0.5, 0.0, 0);
        let (a, b) = spec.truth().keyframe_interval.unwrap();
        assert!(
            spec.camera_z[a] > spec.vocal_cords.z && spec.camera_z[a - 1] <= spec.vocal_cords.z
        );
        assert!(spec.camera_z[b] < spec.stenosis.z);
        assert_eq!(b, spec.camera_z.len() - 1);
        assert_eq!(spec.camera_z.len(), 200);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = PhantomSpec::standard(0.5, 0.0, 0);
        s.stenosis.r_min = 1.5;
        assert!(s.validate().is_err());
        let mut s = PhantomSpec::standard(0.5, 0.0, 0);
        s.camera_z.swap(3, 4);
        assert!(s.validate().is_err());
        let mut s = PhantomSpec::standard(0.5, 0.0, 0);
        s.vocal_cords.z = 5.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = PhantomSpec::standard(0.4, 2.0, 9);
        assert_eq!(PhantomSpec::from_json(&s.to_json()).unwrap(), s);
        assert!(PhantomSpec::from_json("{\"tube_radius\": 1}").is_err());
    }

    #[test]
    fn radius_profile() {
        let s = PhantomSpec::standard(0.5, 0.0, 0);
        assert_eq!(s.radius_at(s.stenosis.z), 0.5);
        assert_eq!(s.radius_at(s.vocal_cords.z), s.vocal_cords.opening_radius);
        assert_eq!(s.radius_at(3.0), 1.0);
        assert!(s.radius_at(4.0) > 0.5 && s.radius_at(4.0) < 1.0);
    }

    #[test]
    fn inverse_square_at_gamma_one() {
        // Left half at d=2, right half at d=4.
        let k = CameraIntrinsics::centered(64, 4000.0, 1.0).unwrap();
        let s = Shading {
            albedo: 1.0,
            gamma: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        };
        let (f, depth) = render_view(
            &FrontalPatches {
                depths: vec![4.0, 2.0],
            },
            &k,
            &s,
            0,
        );
        assert_eq!(depth.get(10, 40), Some(2.0));
        assert_eq!(depth.get(10, 20), Some(4.0));
        let ratio = f64::from(f.get(10, 40)) / f64::from(f.get(10, 20));
        // Both levels are rounded to integers.
        assert!(
            (ratio - 4.0).abs() < 4.0 * (0.5 / 60.0 + 0.5 / 242.0),
            "{ratio}"
        );
    }

    #[test]
    fn frontal_patch_model_holds_on_axis() {
        let k = CameraIntrinsics::centered(33, 4000.0, 2.2).unwrap();
        let s = Shading {
            albedo: 0.8,
            gamma: 2.2,
            noise_sigma: 0.0,
            seed: 0,
        };
        let (frame, depth) = render_view(&FrontalPatches { depths: vec![2.0] }, &k, &s, 0);
        assert!(depth.depth().iter().all(|&d| d == 2.0));
        // A single patch fills the frame, so the gain puts it at 0.95.
        assert_eq!(frame.get(16, 16), (0.95f64 * 255.0).round() as u8);
    }

    #[test]
    fn straight_tube_is_radially_symmetric() {
        let mut spec = PhantomSpec::standard(1.0, 0.0, 0);
        spec.camera_z = vec![0.0];
        let profile = spec.profile();
        let view = TubeView::new(&profile, 0.0);
        let s = Shading {
            albedo: 1.0,
            gamma: 2.2,
            noise_sigma: 0.0,
            seed: 0,
        };
        let k = CameraIntrinsics::centered(65, 32.0, 2.2).unwrap();
        let (f, d) = render_view(&view, &k, &s, 0);
        for (x, y) in [(40usize, 32usize), (20, 40), (10, 10), (60, 5)] {
            let (xr, yr) = (64 - y, x);
            assert_eq!(f.get(x, y), f.get(xr, yr), "rotated by 90 degrees");
            assert_eq!(f.get(x, y), f.get(64 - x, 64 - y), "point reflection");
            let (a, b) = (d.get(x, y).unwrap(), d.get(xr, yr).unwrap());
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hits_lie_on_the_surface() {
        let spec = PhantomSpec::standard(0.4, 0.0, 0);
        let profile = spec.profile();
        for &c in &[spec.camera_z[0], spec.camera_z[70], spec.camera_z[199]] {
            let view = TubeView::new(&profile, c);
            for i in 0..200 {
                let a = -1.2 + 0.012 * f64::from(i);
                let dir = [a, 0.3 * a, 1.0];
                if let Some(hit) = view.cast(dir) {
                    let z = c + hit.t;
                    let rho = hit.t * dir[0].hypot(dir[1]);
                    // The piecewise-linear profile sits within chord error of the analytic one.
                    assert!((rho - spec.radius_at(z)).abs() < 2e-4, "rho {rho} z {z}");
                    assert!(hit.t > 0.0);
                    // No earlier intersection: sample the ray before the hit.
                    for s in 1..50 {
                        let tt = hit.t * f64::from(s) / 50.0;
                        assert!(tt * dir[0].hypot(dir[1]) < spec.radius_at(c + tt) + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn rays_escape_through_the_open_end() {
        let spec = PhantomSpec::standard(0.5, 0.0, 0);
        let profile = spec.profile();
        let view = TubeView::new(&profile, spec.camera_z[100]);
        assert!(view.cast([0.0, 0.0, 1.0]).is_none());
        assert!(view.cast([0.001, 0.0, 1.0]).is_none());
    }

    #[test]
    fn deterministic_with_noise() {
        let mut spec = PhantomSpec::standard(0.5, 2.0, 7);
        spec.camera_z.truncate(3);
        let a = render_sequence(&spec, &small_camera()).unwrap();
        let b = render_sequence(&spec, &small_camera()).unwrap();
        assert_eq!(a.frames, b.frames);
        spec.seed = 8;
        let c = render_sequence(&spec, &small_camera()).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn lumen_is_darkest_past_the_cords() {
        let spec = PhantomSpec::standard(0.5, 0.0, 0);
        let k = CameraIntrinsics::centered(96, 48.0, 2.2).unwrap();
        let profile = spec.profile();
        let s = Shading {
            albedo: 1.0,
            gamma: 2.2,
            noise_sigma: 0.0,
            seed: 0,
        };
        let (f, _) = render_view(&TubeView::new(&profile, spec.camera_z[80]), &k, &s, 0);
        let min = *f.pixels().iter().min().unwrap();
        assert_eq!(f.get(47, 47), min);
        assert_eq!(min, 0);
    }
}
