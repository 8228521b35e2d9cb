use std::io::{self, Write};

use super::{CrossSection, PointCloud};

/// Wavefront OBJ: the cloud as bare vertices, then each section boundary as
/// a named closed polyline.
pub fn write_obj(
    mut w: impl Write,
    cloud: &PointCloud,
    sections: &[(&str, &CrossSection)],
) -> io::Result<()> {
    writeln!(w, "# {} cloud points", cloud.len())?;
    writeln!(w, "o cloud")?;
    for p in cloud.points() {
        writeln!(w, "v {:.6} {:.6} {:.6}", p[0], p[1], p[2])?;
    }
    let mut next = cloud.len() + 1;
    for (name, section) in sections {
        let boundary = section.boundary3d();
        writeln!(w, "o {name}")?;
        for p in &boundary {
            writeln!(w, "v {:.6} {:.6} {:.6}", p[0], p[1], p[2])?;
        }
        write!(w, "l")?;
        for i in 0..boundary.len() {
            write!(w, " {}", next + i)?;
        }
        writeln!(w, " {next}")?;
        next += boundary.len();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::geometry::{cross_section, Plane};

    #[test]
    fn polyline_indices_follow_cloud() {
        let pts: Vec<[f64; 3]> = (0..24)
            .map(|i| {
                let t = std::f64::consts::TAU * f64::from(i) / 24.0;
                [t.cos(), t.sin(), 2.0]
            })
            .collect();
        let cloud = PointCloud::from_points(pts);
        let s = cross_section(&cloud, &Plane::frontal(2.0), &PipelineConfig::default()).unwrap();
        let mut out = Vec::new();
        write_obj(&mut out, &cloud, &[("stenosis", &s)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 48);
        let line = text.lines().last().unwrap();
        assert!(line.starts_with("l 25 26 "));
        assert!(line.ends_with(" 48 25"));
    }
}
