//! Level-set parameterization: map a continuous nodal function to a
//! piecewise-constant scatterer by thresholding at element centroids, plus
//! the Jaccard shape metric used to score reconstructions.

use crate::error::{Error, Result};
use crate::forward::ScattererField;
use crate::mesh::Mesh;

/// Continuous level-set function given by nodal values, optionally carrying
/// the KL coefficient vector it was synthesized from.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    pub values: Vec<f64>,
    pub coefficients: Option<Vec<f64>>,
}

impl LevelSetField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite level-set value {v}"
            )));
        }
        Ok(LevelSetField {
            values,
            coefficients: None,
        })
    }

    /// Value at an element centroid: mean of the three nodal values.
    pub fn centroid_value(&self, mesh: &Mesh, e: usize) -> f64 {
        let t = mesh.elements()[e];
        (self.values[t[0]] + self.values[t[1]] + self.values[t[2]]) / 3.0
    }

    /// Writes per-node lines `x y value` for plotting.
    pub fn write_table<W: std::io::Write>(&self, mesh: &Mesh, w: &mut W) -> Result<()> {
        for (p, v) in mesh.nodes().iter().zip(self.values.iter()) {
            writeln!(w, "{} {} {}", p[0], p[1], v)?;
        }
        Ok(())
    }
}

/// Thresholds `-inf = c_0 < c_1 < ... < c_L = +inf` with one contrast value
/// per bin; bin `i` is the half-open interval `[c_{i-1}, c_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetSpec {
    /// Interior thresholds `c_1 .. c_{L-1}`.
    pub thresholds: Vec<f64>,
    /// Bin values `b_1 .. b_L`, each either `0` or the common contrast `b`.
    pub values: Vec<f64>,
}

impl LevelSetSpec {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != thresholds.len() + 1 {
            return Err(Error::InvalidSpec(format!(
                "{} thresholds require {} bin values, got {}",
                thresholds.len(),
                thresholds.len() + 1,
                values.len()
            )));
        }
        for w in thresholds.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidSpec(format!(
                    "thresholds must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if !values.iter().any(|&v| v == 0.0) {
            return Err(Error::InvalidSpec(
                "at least one bin must carry the zero background".to_string(),
            ));
        }
        let nonzero: Vec<f64> = values.iter().copied().filter(|&v| v != 0.0).collect();
        if let Some(&b) = nonzero.first() {
            if b <= 0.0 || nonzero.iter().any(|&v| v != b) {
                return Err(Error::InvalidSpec(
                    "nonzero bin values must all equal one positive contrast".to_string(),
                ));
            }
        }
        Ok(LevelSetSpec { thresholds, values })
    }

    /// The standard two-bin spec: background below zero, contrast `b` at and
    /// above zero.
    pub fn binary(contrast: f64) -> Result<Self> {
        LevelSetSpec::new(vec![0.0], vec![0.0, contrast])
    }

    /// Contrast level of the nonzero bins (0 when all bins are background).
    pub fn contrast(&self) -> f64 {
        self.values.iter().copied().find(|&v| v != 0.0).unwrap_or(0.0)
    }

    fn bin_of(&self, phi: f64) -> usize {
        // number of thresholds <= phi; exact threshold hits go to the upper bin
        self.thresholds.partition_point(|&c| c <= phi)
    }
}

/// Applies the level-set map: each element is classified by the value of
/// `phi` at its centroid.
pub fn apply_level_set(
    phi: &LevelSetField,
    spec: &LevelSetSpec,
    mesh: &Mesh,
) -> Result<ScattererField> {
    if phi.values.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "level-set field has {} values for {} nodes",
            phi.values.len(),
            mesh.num_nodes()
        )));
    }
    let values: Vec<f64> = (0..mesh.num_elements())
        .map(|e| spec.values[spec.bin_of(phi.centroid_value(mesh, e))])
        .collect();
    ScattererField::new(values, spec.contrast())
}

/// Identity ("regular Bayesian") alternative to thresholding: the contrast is
/// the centroid value itself, clipped below at `floor` to keep `1 + q > 0`.
pub fn apply_direct(phi: &LevelSetField, mesh: &Mesh, floor: f64) -> Result<ScattererField> {
    if phi.values.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "level-set field has {} values for {} nodes",
            phi.values.len(),
            mesh.num_nodes()
        )));
    }
    let values: Vec<f64> = (0..mesh.num_elements())
        .map(|e| phi.centroid_value(mesh, e).max(floor))
        .collect();
    ScattererField::new(values, 0.0)
}

/// Either shape map, selectable from configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ContrastMap {
    LevelSet(LevelSetSpec),
    Direct { floor: f64 },
}

impl ContrastMap {
    pub fn apply(&self, phi: &LevelSetField, mesh: &Mesh) -> Result<ScattererField> {
        match self {
            ContrastMap::LevelSet(spec) => apply_level_set(phi, spec, mesh),
            ContrastMap::Direct { floor } => apply_direct(phi, mesh, *floor),
        }
    }
}

/// Area-weighted Jaccard index of the supports of two scatterer fields:
/// `area(supp q1 and supp q2) / area(supp q1 or supp q2)`, 1 when both empty.
pub fn jaccard_index(q1: &ScattererField, q2: &ScattererField, mesh: &Mesh) -> Result<f64> {
    if q1.values.len() != mesh.num_elements() || q2.values.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch(format!(
            "fields of length {} and {} on a mesh with {} elements",
            q1.values.len(),
            q2.values.len(),
            mesh.num_elements()
        )));
    }
    let mut inter = 0.0;
    let mut union = 0.0;
    for e in 0..mesh.num_elements() {
        let (s1, s2) = (q1.values[e] != 0.0, q2.values[e] != 0.0);
        if s1 || s2 {
            let a = mesh.element_area(e);
            union += a;
            if s1 && s2 {
                inter += a;
            }
        }
    }
    Ok(if union == 0.0 { 1.0 } else { inter / union })
}
