//! Pinhole intrinsics and the key-value calibration file.
//!
//! The calibration document is plain UTF-8, one `key = value` pair per line.
//! Blank lines and `#` comments are ignored. Recognised keys are `fx`, `fy`,
//! `cx`, `cy`, `width`, `height` and the optional `gamma` (display gamma,
//! 2.2 when absent). Any other key is rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const DEFAULT_GAMMA: f64 = 2.2;

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("cannot read calibration {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown calibration key `{0}`")]
    UnknownKey(String),
    #[error("missing calibration key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid intrinsics: {0}")]
    Invalid(String),
    #[error(
        "frame is {width}x{height} but calibration expects {expected_width}x{expected_height}"
    )]
    Resolution {
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub gamma: f64,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        gamma: f64,
    ) -> Result<Self, CalibrationError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            gamma,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square image with the principal point at the pixel-grid centre.
    pub fn centered(size: usize, focal: f64, gamma: f64) -> Result<Self, CalibrationError> {
        let c = (size as f64 - 1.0) / 2.0;
        Self::new(focal, focal, c, c, size, size, gamma)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::Invalid(m));
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return bad(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            ));
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero".into());
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return bad(format!(
                "principal point ({}, {}) outside the image",
                self.cx, self.cy
            ));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        Ok(())
    }

    pub fn check_resolution(&self, width: usize, height: usize) -> Result<(), CalibrationError> {
        if width != self.width || height != self.height {
            return Err(CalibrationError::Resolution {
                width,
                height,
                expected_width: self.width,
                expected_height: self.height,
            });
        }
        Ok(())
    }

    /// Ray direction through pixel `(u, v)` scaled to unit z.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }

    /// Projects a camera-frame point with z > 0 to pixel coordinates.
    #[inline]
    pub fn project(&self, p: [f64; 3]) -> [f64; 2] {
        [
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ]
    }

    pub fn parse(text: &str) -> Result<Self, CalibrationError> {
        let mut fx = None;
        let mut fy = None;
        let mut cx = None;
        let mut cy = None;
        let mut width = None;
        let mut height = None;
        let mut gamma = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CalibrationError::Syntax {
                    line,
                    msg: format!("expected `key = value`, got `{content}`"),
                })?;
            let (key, value) = (key.trim(), value.trim());
            let real = || {
                value.parse::<f64>().map_err(|_| CalibrationError::Syntax {
                    line,
                    msg: format!("`{key}` expects a number, got `{value}`"),
                })
            };
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| CalibrationError::Syntax {
                        line,
                        msg: format!("`{key}` expects a non-negative integer, got `{value}`"),
                    })
            };
            let slot_set = match key {
                "fx" => fx.replace(real()?).is_some(),
                "fy" => fy.replace(real()?).is_some(),
                "cx" => cx.replace(real()?).is_some(),
                "cy" => cy.replace(real()?).is_some(),
                "gamma" => gamma.replace(real()?).is_some(),
                "width" => width.replace(int()?).is_some(),
                "height" => height.replace(int()?).is_some(),
                other => return Err(CalibrationError::UnknownKey(other.to_string())),
            };
            if slot_set {
                return Err(CalibrationError::Syntax {
                    line,
                    msg: format!("`{key}` given twice"),
                });
            }
        }
        Self::new(
            fx.ok_or(CalibrationError::MissingKey("fx"))?,
            fy.ok_or(CalibrationError::MissingKey("fy"))?,
            cx.ok_or(CalibrationError::MissingKey("cx"))?,
            cy.ok_or(CalibrationError::MissingKey("cy"))?,
            width.ok_or(CalibrationError::MissingKey("width"))?,
            height.ok_or(CalibrationError::MissingKey("height"))?,
            gamma.unwrap_or(DEFAULT_GAMMA),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path).map_err(|source| CalibrationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Serializes to the calibration document; `parse` reads it back exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("fx", self.fx),
            ("fy", self.fy),
            ("cx", self.cx),
            ("cy", self.cy),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str =
        "# bronchoscope\nfx = 160\nfy = 160.0\ncx = 159.5\ncy = 159.5\nwidth = 320\nheight = 320\n";

    #[test]
    fn parses_with_default_gamma() {
        let k = CameraIntrinsics::parse(DOC).unwrap();
        assert_eq!(k.fx, 160.0);
        assert_eq!(k.width, 320);
        assert_eq!(k.gamma, DEFAULT_GAMMA);
    }

    #[test]
    fn text_round_trip() {
        let k = CameraIntrinsics::new(161.25, 159.0, 100.1, 80.7, 200, 160, 1.8).unwrap();
        assert_eq!(CameraIntrinsics::parse(&k.to_text()).unwrap(), k);
    }

    #[test]
    fn rejects_unknown_key() {
        let doc = format!("{DOC}skew = 0\n");
        assert!(matches!(
            CameraIntrinsics::parse(&doc),
            Err(CalibrationError::UnknownKey(k)) if k == "skew"
        ));
    }

    #[test]
    fn rejects_invalid_values() {
        let neg = DOC.replace("fx = 160", "fx = -1");
        assert!(matches!(
            CameraIntrinsics::parse(&neg),
            Err(CalibrationError::Invalid(_))
        ));
        let outside = DOC.replace("cx = 159.5", "cx = 320");
        assert!(matches!(
            CameraIntrinsics::parse(&outside),
            Err(CalibrationError::Invalid(_))
        ));
        let gamma = format!("{DOC}gamma = 0\n");
        assert!(matches!(
            CameraIntrinsics::parse(&gamma),
            Err(CalibrationError::Invalid(_))
        ));
        let missing = DOC.replace("fy = 160.0\n", "");
        assert!(matches!(
            CameraIntrinsics::parse(&missing),
            Err(CalibrationError::MissingKey("fy"))
        ));
        let dup = format!("{DOC}fx = 1\n");
        assert!(matches!(
            CameraIntrinsics::parse(&dup),
            Err(CalibrationError::Syntax { .. })
        ));
    }

    #[test]
    fn project_inverts_ray() {
        let k = CameraIntrinsics::centered(64, 50.0, 2.2).unwrap();
        let r = k.ray(10.0, 40.0);
        let p = k.project([r[0] * 3.0, r[1] * 3.0, 3.0]);
        assert!((p[0] - 10.0).abs() < 1e-12 && (p[1] - 40.0).abs() < 1e-12);
    }
}
