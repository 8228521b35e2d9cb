//! Grayscale frames and frame-sequence ingestion.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};

use crate::camera::{CalibrationError, CameraIntrinsics};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("no frames found in {0}")]
    Empty(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("frame file name {0} carries no numeric index")]
    NoIndex(PathBuf),
    #[error("frame index {0} appears more than once")]
    DuplicateIndex(usize),
    #[error("frame indices are not contiguous: expected {expected}, found {found}")]
    MissingFrame { expected: usize, found: usize },
    #[error("unsupported pixel layout in {0}; expected 8-bit gray or RGB")]
    PixelFormat(PathBuf),
    #[error("pixel buffer has {len} values, expected {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// One 8-bit grayscale image of a sequence, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    index: usize,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(
        index: usize,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, IngestError> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(IngestError::BufferSize {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            index,
            width,
            height,
            pixels,
        })
    }

    /// Builds a frame of constant intensity.
    pub fn filled(index: usize, width: usize, height: usize, value: u8) -> Self {
        Self {
            index,
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Converts interleaved RGB triples to luma.
    pub fn from_rgb(
        index: usize,
        width: usize,
        height: usize,
        rgb: &[u8],
    ) -> Result<Self, IngestError> {
        if rgb.len() != 3 * width * height {
            return Err(IngestError::BufferSize {
                width,
                height,
                len: rgb.len() / 3,
            });
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|p| to_grayscale([p[0], p[1], p[2]]))
            .collect();
        Self::new(index, width, height, pixels)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("frame buffer size is checked on construction")
    }

    pub fn save_png(&self, path: &Path) -> Result<(), image::ImageError> {
        self.to_image()
            .save_with_format(path, image::ImageFormat::Png)
    }

    /// Decodes a PNG (or any format the `image` crate is built with).
    pub fn load(path: &Path, index: usize) -> Result<Self, IngestError> {
        let img = image::open(path).map_err(|source| IngestError::Decode {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_dynamic(img, index, path)
    }

    fn from_dynamic(img: DynamicImage, index: usize, path: &Path) -> Result<Self, IngestError> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(g) => Self::new(index, w, h, g.into_raw()),
            DynamicImage::ImageLumaA8(g) => {
                let pixels = g.pixels().map(|p| p.0[0]).collect();
                Self::new(index, w, h, pixels)
            }
            DynamicImage::ImageRgb8(rgb) => Self::from_rgb(index, w, h, rgb.as_raw()),
            DynamicImage::ImageRgba8(rgba) => {
                let pixels = rgba
                    .pixels()
                    .map(|p| to_grayscale([p.0[0], p.0[1], p.0[2]]))
                    .collect();
                Self::new(index, w, h, pixels)
            }
            _ => Err(IngestError::PixelFormat(path.to_path_buf())),
        }
    }
}

/// BT.601 luma, rounded and clamped to 8 bits.
pub fn to_grayscale(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(f64::from);
    (0.299 * r + 0.587 * g + 0.114 * b)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Extracts the last run of ASCII digits in a file stem.
fn index_from_name(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let bytes = stem.as_bytes();
    let end = bytes.iter().rposition(u8::is_ascii_digit)? + 1;
    let start = bytes[..end]
        .iter()
        .rposition(|b| !b.is_ascii_digit())
        .map_or(0, |p| p + 1);
    stem[start..end].parse().ok()
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Lists the numerically indexed PNG files of a directory, sorted by index.
pub fn list_frame_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>, IngestError> {
    let io_err = |source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if !path.is_file() || !is_image_file(&path) {
            continue;
        }
        let index = index_from_name(&path).ok_or_else(|| IngestError::NoIndex(path.clone()))?;
        files.push((index, path));
    }
    if files.is_empty() {
        return Err(IngestError::Empty(dir.to_path_buf()));
    }
    files.sort_by_key(|(i, _)| *i);
    for pair in files.windows(2) {
        let (a, b) = (pair[0].0, pair[1].0);
        if a == b {
            return Err(IngestError::DuplicateIndex(a));
        }
        if b != a + 1 {
            return Err(IngestError::MissingFrame {
                expected: a + 1,
                found: b,
            });
        }
    }
    Ok(files)
}

/// Loads an ordered frame sequence and its calibration; every frame must
/// match the calibrated resolution.
pub fn load_sequence(
    dir: &Path,
    calib: &Path,
) -> Result<(Vec<Frame>, CameraIntrinsics), IngestError> {
    let intrinsics = CameraIntrinsics::from_file(calib)?;
    let frames = list_frame_files(dir)?
        .into_iter()
        .map(|(index, path)| {
            let frame = Frame::load(&path, index)?;
            intrinsics.check_resolution(frame.width(), frame.height())?;
            Ok(frame)
        })
        .collect::<Result<Vec<_>, IngestError>>()?;
    Ok((frames, intrinsics))
}
