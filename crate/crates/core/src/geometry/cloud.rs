use crate::camera::CameraIntrinsics;
use crate::depth::DepthMap;

use super::GeometryError;

pub const MIN_CLOUD_POINTS: usize = 100;

const NO_POINT: u32 = u32::MAX;

/// Back-projected keyframe, one point per valid depth pixel, in row-major
/// pixel order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
    pixel_of: Vec<(usize, usize)>,
    width: usize,
    height: usize,
    lookup: Vec<u32>,
    median_z: f64,
}

impl PointCloud {
    /// A cloud without an image behind it; point `i` is attributed to pixel
    /// `(i, 0)` of a one-row image.
    pub fn from_points(points: Vec<[f64; 3]>) -> Self {
        let n = points.len();
        Self {
            pixel_of: (0..n).map(|i| (i, 0)).collect(),
            width: n,
            height: 1,
            lookup: (0..n as u32).collect(),
            median_z: median_z(&points),
            points,
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn pixel_of(&self, i: usize) -> (usize, usize) {
        self.pixel_of[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Index of the point back-projected from pixel (x, y), if any.
    pub fn point_at(&self, x: usize, y: usize) -> Option<usize> {
        if x >= self.width || y >= self.height {
            return None;
        }
        match self.lookup[y * self.width + x] {
            NO_POINT => None,
            i => Some(i as usize),
        }
    }

    pub fn median_z(&self) -> f64 {
        self.median_z
    }

    /// Applies `f` to every point, keeping the pixel association.
    pub fn map_points(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let points: Vec<[f64; 3]> = self.points.iter().map(|p| f(*p)).collect();
        let median_z = median_z(&points);
        Self {
            points,
            median_z,
            ..self.clone()
        }
    }
}

fn median_z(points: &[[f64; 3]]) -> f64 {
    let mut z: Vec<f64> = points.iter().map(|p| p[2]).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        z[n / 2]
    } else {
        0.5 * (z[n / 2 - 1] + z[n / 2])
    }
}

/// Nearest-rank percentile, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize).max(1);
    Some(v[rank - 1])
}

/// `X = d · ((u − cx)/fx, (v − cy)/fy, 1)` for each valid pixel, with the
/// depth taken as z-depth.
pub fn backproject(depth: &DepthMap, k: &CameraIntrinsics) -> Result<PointCloud, GeometryError> {
    let (w, h) = (depth.width(), depth.height());
    if (w, h) != (k.width, k.height) {
        return Err(GeometryError::Shape {
            found: (w, h),
            expected: (k.width, k.height),
        });
    }
    let found = depth.valid_count();
    if found < MIN_CLOUD_POINTS {
        return Err(GeometryError::TooFewPoints {
            found,
            needed: MIN_CLOUD_POINTS,
        });
    }
    let mut points = Vec::with_capacity(found);
    let mut pixel_of = Vec::with_capacity(found);
    let mut lookup = vec![NO_POINT; w * h];
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = depth.get(x, y) {
                let r = k.ray(x as f64, y as f64);
                lookup[y * w + x] = points.len() as u32;
                points.push([d * r[0], d * r[1], d * r[2]]);
                pixel_of.push((x, y));
            }
        }
    }
    let median_z = median_z(&points);
    Ok(PointCloud {
        points,
        pixel_of,
        width: w,
        height: h,
        lookup,
        median_z,
    })
}
