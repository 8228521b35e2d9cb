//! Up-to-scale depth for the keyframe.
//!
//! Two providers exist: an analytic inversion of the co-located-light
//! illumination decline `I ≈ (1/d²)^(1/γ)`, and a loader for depth rasters
//! computed elsewhere (for example by a learned monocular model).
//!
//! The analytic inversion ignores the surface-orientation term of the full
//! spotlight model, so oblique walls come out too deep.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::frame::Frame;

/// Leading bytes of a depth raster file.
pub const DEPTH_MAGIC: &[u8; 8] = b"SGSDEPTH";

#[derive(Debug, thiserror::Error)]
pub enum DepthError {
    #[error("only {valid} of {total} pixels carry usable depth")]
    TooFewValid { valid: usize, total: usize },
    #[error("depth raster is {found:?}, keyframe is {expected:?}")]
    Shape {
        found: (usize, usize),
        expected: (usize, usize),
    },
    #[error("{non_finite} of {total} depth values are not finite")]
    NonFinite { non_finite: usize, total: usize },
    #[error("invalid photometric model: {0}")]
    Model(String),
    #[error("malformed depth raster {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("depth raster {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Pixels are valid where the depth is positive and finite.
    pub fn from_values(width: usize, height: usize, depth: Vec<f64>) -> Self {
        assert_eq!(depth.len(), width * height, "depth buffer size");
        let valid = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Self {
            width,
            height,
            depth,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.depth[i])
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Every depth multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        assert!(s > 0.0 && s.is_finite(), "scale must be positive");
        Self {
            width: self.width,
            height: self.height,
            depth: self.depth.iter().map(|d| d * s).collect(),
            valid: self.valid.clone(),
        }
    }

    pub fn median_valid(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .depth
            .iter()
            .zip(&self.valid)
            .filter_map(|(d, ok)| ok.then_some(*d))
            .collect();
        median(&mut v)
    }

    /// Rescales so the median valid depth is 1.
    pub fn normalized(&self) -> Option<Self> {
        self.median_valid().map(|m| self.scaled(1.0 / m))
    }

    /// Writes the raster format: magic, u32 LE width and height, then
    /// row-major f32 LE depths with invalid pixels stored as 0.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(DEPTH_MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * self.depth.len());
        for (d, ok) in self.depth.iter().zip(&self.valid) {
            let v = if *ok { *d as f32 } else { 0.0 };
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<(), DepthError> {
        let io = |source| DepthError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out).map_err(io)?;
        out.flush().map_err(io)
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Reads a depth raster and checks it against the keyframe resolution.
pub fn load_depth(path: &Path, expected: (usize, usize)) -> Result<DepthMap, DepthError> {
    let io = |source| DepthError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io)?;
    let format = |msg: &str| DepthError::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 16 || &bytes[..8] != DEPTH_MAGIC {
        return Err(format("missing header"));
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (width, height) = (word(8), word(12));
    if bytes.len() != 16 + 4 * width * height {
        return Err(format("payload size does not match header"));
    }
    if (width, height) != expected {
        return Err(DepthError::Shape {
            found: (width, height),
            expected,
        });
    }
    let depth: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let total = depth.len();
    let non_finite = depth.iter().filter(|d| !d.is_finite()).count();
    if 2 * non_finite > total {
        return Err(DepthError::NonFinite { non_finite, total });
    }
    let map = DepthMap::from_values(width, height, depth);
    if map.valid_count() == 0 {
        return Err(DepthError::TooFewValid { valid: 0, total });
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotometricModel {
    pub gamma: f64,
    /// Constant albedo in (0, 1].
    pub albedo: f64,
    /// Intensities at or below this carry too little signal.
    pub low_intensity_cutoff: u8,
    /// Intensities at or above this are treated as saturated.
    pub saturation_cutoff: u8,
}

impl Default for PhotometricModel {
    fn default() -> Self {
        Self {
            gamma: crate::camera::DEFAULT_GAMMA,
            albedo: 1.0,
            low_intensity_cutoff: 5,
            saturation_cutoff: 250,
        }
    }
}

impl PhotometricModel {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DepthError> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(DepthError::Model(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.albedo > 0.0 && self.albedo <= 1.0) {
            return Err(DepthError::Model(format!(
                "albedo must lie in (0, 1], got {}",
                self.albedo
            )));
        }
        if self.low_intensity_cutoff >= self.saturation_cutoff {
            return Err(DepthError::Model(format!(
                "low cutoff {} must be below saturation cutoff {}",
                self.low_intensity_cutoff, self.saturation_cutoff
            )));
        }
        Ok(())
    }
}

/// Distance from a normalized intensity in (0, 1]: linearize with γ, divide
/// out the albedo, invert the inverse-square fall-off.
#[inline]
pub fn invert_intensity(normalized: f64, gamma: f64, albedo: f64) -> f64 {
    let linear = normalized.powf(gamma) / albedo;
    linear.powf(-0.5)
}

/// Photometric depth, median-normalized to 1 over valid pixels.
pub fn photometric_depth(frame: &Frame, model: &PhotometricModel) -> Result<DepthMap, DepthError> {
    model.validate()?;
    let depth: Vec<f64> = frame
        .pixels()
        .iter()
        .map(|&p| {
            if p <= model.low_intensity_cutoff || p >= model.saturation_cutoff {
                0.0
            } else {
                invert_intensity(f64::from(p) / 255.0, model.gamma, model.albedo)
            }
        })
        .collect();
    let map = DepthMap::from_values(frame.width(), frame.height(), depth);
    let (valid, total) = (map.valid_count(), frame.pixels().len());
    if 100 * valid < total {
        return Err(DepthError::TooFewValid { valid, total });
    }
    Ok(map.normalized().expect("valid pixels exist"))
}

/// Source of keyframe depth.
pub trait DepthProvider {
    fn id(&self) -> String;
    fn depth_for(&self, frame: &Frame) -> Result<DepthMap, DepthError>;
}

#[derive(Debug, Clone, Copy)]
pub struct PhotometricProvider(pub PhotometricModel);

impl DepthProvider for PhotometricProvider {
    fn id(&self) -> String {
        format!(
            "photometric(gamma={}, albedo={})",
            self.0.gamma, self.0.albedo
        )
    }

    fn depth_for(&self, frame: &Frame) -> Result<DepthMap, DepthError> {
        photometric_depth(frame, &self.0)
    }
}

/// Depth rasters on disk: either one file, or a directory holding
/// `depth_<index:06>.bin` per frame.
#[derive(Debug, Clone)]
pub struct FileProvider {
    pub path: PathBuf,
}

pub fn depth_file_name(index: usize) -> String {
    format!("depth_{index:06}.bin")
}

impl DepthProvider for FileProvider {
    fn id(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn depth_for(&self, frame: &Frame) -> Result<DepthMap, DepthError> {
        let path = if self.path.is_dir() {
            self.path.join(depth_file_name(frame.index()))
        } else {
            self.path.clone()
        };
        load_depth(&path, (frame.width(), frame.height()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn analytic_inversion() {
        // γ=2: I = 1/d, so I=0.25 gives d=4.
        assert!((invert_intensity(0.25, 2.0, 1.0) - 4.0).abs() < 1e-12);
        // γ=1: I = 1/d², so I=1/16 gives d=4.
        assert!((invert_intensity(0.0625, 1.0, 1.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_frame_gives_flat_depth() {
        let f = Frame::filled(0, 8, 8, 120);
        let d = photometric_depth(&f, &PhotometricModel::default()).unwrap();
        assert!(d.depth().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cutoffs_invalidate_pixels() {
        let mut px = vec![100u8; 100];
        px[0] = 5;
        px[1] = 250;
        px[2] = 6;
        let f = Frame::new(0, 10, 10, px).unwrap();
        let d = photometric_depth(&f, &PhotometricModel::default()).unwrap();
        assert_eq!(d.get(0, 0), None);
        assert_eq!(d.get(1, 0), None);
        assert!(d.get(2, 0).is_some());
    }

    #[test]
    fn mostly_dark_frame_is_rejected() {
        let mut px = vec![0u8; 1000];
        for p in px.iter_mut().take(9) {
            *p = 100;
        }
        let f = Frame::new(0, 100, 10, px).unwrap();
        assert!(matches!(
            photometric_depth(&f, &PhotometricModel::default()),
            Err(DepthError::TooFewValid {
                valid: 9,
                total: 1000
            })
        ));
    }

    #[test]
    fn bad_model_rejected() {
        let m = PhotometricModel {
            low_intensity_cutoff: 200,
            saturation_cutoff: 100,
            ..Default::default()
        };
        assert!(photometric_depth(&Frame::filled(0, 4, 4, 150), &m).is_err());
    }

    #[test]
    fn raster_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        DepthMap::from_values(4, 4, vec![1.0; 16])
            .save(&path)
            .unwrap();
        let d = load_depth(&path, (4, 4)).unwrap();
        assert_eq!(d.valid_count(), 16);
        assert!(d.depth().iter().all(|&v| v == 1.0));

        let mut vals = vec![1.0; 16];
        vals[5] = 0.0;
        DepthMap::from_values(4, 4, vals).save(&path).unwrap();
        let d = load_depth(&path, (4, 4)).unwrap();
        assert_eq!(d.get(1, 1), None);
        assert_eq!(d.valid_count(), 15);

        DepthMap::from_values(3, 3, vec![1.0; 9])
            .save(&path)
            .unwrap();
        assert!(matches!(
            load_depth(&path, (4, 4)),
            Err(DepthError::Shape { .. })
        ));

        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(
            load_depth(&path, (4, 4)),
            Err(DepthError::Format { .. })
        ));
    }

    #[test]
    fn non_finite_majority_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.bin");
        let mut bytes = DEPTH_MAGIC.to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for v in [f32::NAN, f32::INFINITY, f32::NAN, 1.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_depth(&path, (2, 2)),
            Err(DepthError::NonFinite { non_finite: 3, .. })
        ));
    }

    #[test]
    fn file_provider_picks_frame_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        DepthMap::from_values(2, 2, vec![3.0; 4])
            .save(&dir.path().join(depth_file_name(7)))
            .unwrap();
        let p = FileProvider {
            path: dir.path().to_path_buf(),
        };
        let d = p.depth_for(&Frame::filled(7, 2, 2, 0)).unwrap();
        assert_eq!(d.get(0, 0), Some(3.0));
        assert!(p.depth_for(&Frame::filled(8, 2, 2, 0)).is_err());
    }

    proptest! {
        #[test]
        fn brighter_is_strictly_nearer(a in 6u8..249, b in 6u8..249, gamma in 0.5f64..3.0, albedo in 0.1f64..1.0) {
            prop_assume!(a != b);
            let (lo, hi) = (a.min(b), a.max(b));
            let d_lo = invert_intensity(f64::from(lo) / 255.0, gamma, albedo);
            let d_hi = invert_intensity(f64::from(hi) / 255.0, gamma, albedo);
            prop_assert!(d_hi < d_lo);
        }

        #[test]
        fn normalization_removes_scale(vals in proptest::collection::vec(0.1f64..10.0, 16), s in 0.01f64..100.0) {
            let d = DepthMap::from_values(4, 4, vals);
            let a = d.normalized().unwrap();
            let b = d.scaled(s).normalized().unwrap();
            for (x, y) in a.depth().iter().zip(b.depth()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
