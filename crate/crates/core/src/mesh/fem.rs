use super::Mesh;
use crate::error::{Error, Result};
use crate::sparse::SparseSymmetric;

/// Lumped mass matrix `C` (stored as its diagonal) and stiffness matrix `G`
/// of the piecewise-linear basis on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FemMatrices {
    pub mass_diag: Vec<f64>,
    pub stiffness: SparseSymmetric,
}

impl FemMatrices {
    pub fn mass(&self) -> SparseSymmetric {
        SparseSymmetric::from_diagonal(&self.mass_diag).expect("mesh has vertices")
    }
}

pub(super) fn assemble(mesh: &Mesh) -> Result<FemMatrices> {
    let g = mesh.n_vertices();
    let mut mass_diag = vec![0.0; g];
    let mut triplets = Vec::with_capacity(6 * mesh.n_triangles() + g);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|v| mesh.vertices()[v]);
        let area = mesh.triangle_area(t);
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle(t));
        }
        // Gradients of the barycentric coordinates are (b_i, c_i) / (2A).
        let mut b = [0.0; 3];
        let mut c = [0.0; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            b[i] = p[j][1] - p[k][1];
            c[i] = p[k][0] - p[j][0];
        }
        for i in 0..3 {
            mass_diag[tri[i]] += area / 3.0;
            for j in 0..=i {
                let k = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                triplets.push((tri[i], tri[j], k));
            }
        }
    }
    // Vertices not used by any triangle would make C singular.
    if let Some(i) = mass_diag.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::InvalidParameters(format!(
            "vertex {i} does not belong to any triangle"
        )));
    }
    for i in 0..g {
        triplets.push((i, i, 0.0));
    }
    Ok(FemMatrices {
        mass_diag,
        stiffness: SparseSymmetric::from_triplets(g, triplets)?,
    })
}
