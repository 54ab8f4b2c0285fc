//! P1 assembly of the stiffness and weighted mass matrices.

use crate::error::{Error, Result};
use crate::fem::sparse::SparseSymMatrix;
use crate::mesh::Mesh;

/// Assembles the P1 stiffness matrix (Dirichlet energy of hat functions).
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseSymMatrix> {
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for (e, t) in mesh.elements().iter().enumerate() {
        let p = [
            mesh.nodes()[t[0]],
            mesh.nodes()[t[1]],
            mesh.nodes()[t[2]],
        ];
        let area = mesh.element_area(e);
        if !(area > f64::MIN_POSITIVE) {
            return Err(Error::DegenerateElement {
                element: e,
                detail: format!("area {area} too small for stiffness assembly"),
            });
        }
        // gradient coefficients of the linear shape functions
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        for i in 0..3 {
            for j in 0..3 {
                let v = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                triplets.push((t[i], t[j], v));
            }
        }
    }
    SparseSymMatrix::from_triplets(mesh.num_nodes(), &triplets)
}

/// Assembles the P1 mass matrix with a constant weight per element.
pub fn assemble_weighted_mass(mesh: &Mesh, element_weights: &[f64]) -> Result<SparseSymMatrix> {
    if element_weights.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch(format!(
            "weight array length {} vs {} elements",
            element_weights.len(),
            mesh.num_elements()
        )));
    }
    if let Some(w) = element_weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite element weight {w}"
        )));
    }
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for (e, t) in mesh.elements().iter().enumerate() {
        let scale = element_weights[e] * mesh.element_area(e) / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                let v = scale * if i == j { 2.0 } else { 1.0 };
                triplets.push((t[i], t[j], v));
            }
        }
    }
    SparseSymMatrix::from_triplets(mesh.num_nodes(), &triplets)
}
