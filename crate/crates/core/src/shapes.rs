//! Reference scatterer geometries and their rasterization onto a mesh.

use crate::error::{Error, Result};
use crate::forward::ScattererField;
use crate::mesh::{BoundaryTrace, Mesh};

/// Built-in true-scatterer regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `x^2 + (y - cbrt(x^2))^2 <= 1`, clipped to the disk interior.
    Love,
    /// Union of two centered axis-aligned bars, 1.0 long and 0.3 wide.
    Cross,
    /// Two disks of radius 0.2 centered at (-0.3, 0.3) and (0.3, -0.3).
    TwoCircles,
}

impl Shape {
    pub fn parse(name: &str) -> Result<Shape> {
        match name {
            "love" => Ok(Shape::Love),
            "cross" => Ok(Shape::Cross),
            "two_circles" => Ok(Shape::TwoCircles),
            other => Err(Error::InvalidParameter(format!(
                "unknown scatterer shape `{other}` (expected love, cross, or two_circles)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Love => "love",
            Shape::Cross => "cross",
            Shape::TwoCircles => "two_circles",
        }
    }

    /// Contrast level used by the corresponding published experiment.
    pub fn default_contrast(&self) -> f64 {
        match self {
            Shape::Love | Shape::Cross => 1.0,
            Shape::TwoCircles => 3.0,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (x, y) = (p[0], p[1]);
        match self {
            Shape::Love => {
                let shift = y - (x * x).cbrt();
                x * x + shift * shift <= 1.0
            }
            Shape::Cross => {
                (x.abs() <= 0.5 && y.abs() <= 0.15) || (x.abs() <= 0.15 && y.abs() <= 0.5)
            }
            Shape::TwoCircles => {
                let d1 = (x + 0.3).hypot(y - 0.3);
                let d2 = (x - 0.3).hypot(y + 0.3);
                d1 <= 0.2 || d2 <= 0.2
            }
        }
    }
}

/// Element-centroid membership rasterization. Elements touching the
/// artificial boundary are forced to background so the result stays in the
/// admissible class (the love shape in particular reaches `Gamma_R`).
pub fn rasterize<F: Fn([f64; 2]) -> bool>(
    mesh: &Mesh,
    trace: &BoundaryTrace,
    contains: F,
    contrast: f64,
) -> Result<ScattererField> {
    if !(contrast > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "contrast must be positive, got {contrast}"
        )));
    }
    let on_boundary: std::collections::HashSet<usize> =
        trace.node_indices.iter().copied().collect();
    let values: Vec<f64> = (0..mesh.num_elements())
        .map(|e| {
            let touches = mesh.elements()[e].iter().any(|p| on_boundary.contains(p));
            if !touches && contains(mesh.element_centroid(e)) {
                contrast
            } else {
                0.0
            }
        })
        .collect();
    ScattererField::new(values, contrast)
}

pub fn rasterize_shape(
    mesh: &Mesh,
    trace: &BoundaryTrace,
    shape: Shape,
    contrast: f64,
) -> Result<ScattererField> {
    rasterize(mesh, trace, |p| shape.contains(p), contrast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{boundary_trace, generate_disk_mesh};

    #[test]
    fn shape_names_round_trip() {
        for s in [Shape::Love, Shape::Cross, Shape::TwoCircles] {
            assert_eq!(Shape::parse(s.name()).unwrap(), s);
        }
        assert!(Shape::parse("blob").is_err());
    }

    #[test]
    fn love_contains_its_center_and_excludes_far_left() {
        assert!(Shape::Love.contains([0.0, 0.0]));
        assert!(Shape::Love.contains([0.0, -0.99]));
        assert!(!Shape::Love.contains([-0.9, -0.4]));
    }

    #[test]
    fn two_circles_membership() {
        assert!(Shape::TwoCircles.contains([-0.3, 0.3]));
        assert!(Shape::TwoCircles.contains([0.3, -0.3]));
        assert!(!Shape::TwoCircles.contains([0.0, 0.0]));
        assert!(!Shape::TwoCircles.contains([-0.3, 0.51 + 0.001]));
    }

    #[test]
    fn cross_membership() {
        assert!(Shape::Cross.contains([0.4, 0.0]));
        assert!(Shape::Cross.contains([0.0, 0.4]));
        assert!(!Shape::Cross.contains([0.4, 0.4]));
    }

    #[test]
    fn rasterized_shapes_are_admissible() {
        let mesh = generate_disk_mesh(1.0, 4.9e-2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        for shape in [Shape::Love, Shape::Cross, Shape::TwoCircles] {
            let q = rasterize_shape(&mesh, &trace, shape, shape.default_contrast()).unwrap();
            assert!(
                q.is_admissible(&mesh, &trace),
                "{} not admissible",
                shape.name()
            );
            assert!(q.support().count() > 0, "{} rasterized empty", shape.name());
        }
    }

    #[test]
    fn two_circles_area_close_to_analytic() {
        let mesh = generate_disk_mesh(1.0, 2.45e-2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let q = rasterize_shape(&mesh, &trace, Shape::TwoCircles, 3.0).unwrap();
        let area: f64 = q.support().map(|e| mesh.element_area(e)).sum();
        let exact = 2.0 * core::f64::consts::PI * 0.04;
        assert!(
            (area - exact).abs() / exact < 0.05,
            "rasterized area {area} vs {exact}"
        );
    }
}
