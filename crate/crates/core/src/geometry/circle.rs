use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Kåsa algebraic fit: least squares on `x² + y² = 2ax + 2by + c`, solved
/// on centroid-shifted coordinates. `None` for fewer than three points or a
/// rank-deficient system.
pub fn kasa_fit(points: &[[f64; 2]]) -> Option<Circle> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n as f64;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n as f64;
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 2.0 * (points[i][0] - mx),
        1 => 2.0 * (points[i][1] - my),
        _ => 1.0,
    });
    let b = DVector::from_fn(n, |i, _| {
        let (x, y) = (points[i][0] - mx, points[i][1] - my);
        x * x + y * y
    });
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return None;
    }
    let sol = svd.solve(&b, 0.0).ok()?;
    let (cx, cy, c) = (sol[0], sol[1], sol[2]);
    let r2 = c + cx * cx + cy * cy;
    (r2 > 0.0).then(|| Circle {
        center: [cx + mx, cy + my],
        radius: r2.sqrt(),
    })
}
