use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::segmentation::SegmentMask;

use super::{GeometryError, PointCloud};

pub const MIN_CONTOUR_POINTS: usize = 20;

/// `{X : normal · X = offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    /// Normalizes `normal` and rescales `offset` to match.
    pub fn new(normal: [f64; 3], offset: f64) -> Self {
        let n = Vector3::from(normal);
        let len = n.norm();
        assert!(
            len > 0.0 && len.is_finite(),
            "plane normal must be non-zero"
        );
        Self {
            normal: (n / len).into(),
            offset: offset / len,
        }
    }

    /// Plane z = `z`.
    pub fn frontal(z: f64) -> Self {
        Self {
            normal: [0.0, 0.0, 1.0],
            offset: z,
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] - self.offset
    }

    /// Where the optical axis pierces the plane, if it does.
    pub fn z_intercept(&self) -> Option<f64> {
        (self.normal[2].abs() > 1e-12).then(|| self.offset / self.normal[2])
    }

    /// In-plane orthonormal basis `(u, v)` with `u × v = normal`.
    pub fn basis(&self) -> ([f64; 3], [f64; 3]) {
        let n = Vector3::from(self.normal);
        let axis = (0..3)
            .min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()))
            .expect("three axes");
        let e = Vector3::ith(axis, 1.0);
        let u = (e - n * n.dot(&e)).normalize();
        let v = n.cross(&u);
        (u.into(), v.into())
    }

    /// The angle between the two normals in radians, ignoring orientation.
    pub fn angle_to(&self, other: &Plane) -> f64 {
        let d = Vector3::from(self.normal)
            .dot(&Vector3::from(other.normal))
            .abs();
        d.min(1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub plane: Plane,
    /// Root-mean-square orthogonal distance of the input points.
    pub rms_residual: f64,
}

/// Total-least-squares plane: normal is the eigenvector of the centered
/// scatter matrix with the smallest eigenvalue, oriented toward +z.
pub fn fit_plane_tls(points: &[[f64; 3]]) -> Result<PlaneFit, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::DegenerateContour);
    }
    let n = points.len() as f64;
    let centroid = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p))
        / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = Vector3::from(*p) - centroid;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (lo, mid, hi) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    // Collinear or coincident input spans at most one direction.
    if hi <= 0.0 || mid <= 1e-12 * hi {
        return Err(GeometryError::DegenerateContour);
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).normalize();
    if normal.z < 0.0 || (normal.z == 0.0 && (normal.x, normal.y) < (0.0, 0.0)) {
        normal = -normal;
    }
    let plane = Plane {
        normal: normal.into(),
        offset: normal.dot(&centroid),
    };
    Ok(PlaneFit {
        plane,
        rms_residual: (lo.max(0.0) / n).sqrt(),
    })
}

/// Fits the stenosis plane through the cloud points of the pixels just
/// outside the stenosis mask (8-adjacent exterior ring).
pub fn stenosis_plane(cloud: &PointCloud, mask: &SegmentMask) -> Result<PlaneFit, GeometryError> {
    let contour: Vec<[f64; 3]> = mask
        .mask
        .outer_ring()
        .into_iter()
        .filter_map(|(x, y)| cloud.point_at(x, y))
        .map(|i| cloud.points()[i])
        .collect();
    if contour.len() < MIN_CONTOUR_POINTS {
        return Err(GeometryError::SparseContour {
            found: contour.len(),
            needed: MIN_CONTOUR_POINTS,
        });
    }
    fit_plane_tls(&contour)
}
