//! P1 (continuous piecewise linear) element helpers shared by the forward
//! stepping, the layer-stripping solves and the coefficient recovery.

use crate::geometry::Point2;
use crate::mesh::TriMesh;
use crate::sparse::SparseMatrix;

/// Gradients of the three nodal basis functions on a triangle, constant
/// per element. Returned together with the (positive) triangle area.
pub fn p1_gradients(a: &Point2, b: &Point2, c: &Point2) -> ([[f64; 2]; 3], f64) {
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let area = 0.5 * det;
    let g = [
        [(b.y - c.y) / det, (c.x - b.x) / det],
        [(c.y - a.y) / det, (a.x - c.x) / det],
        [(a.y - b.y) / det, (b.x - a.x) / det],
    ];
    (g, area)
}

/// Stiffness matrix: K_ij = sum_T area_T grad(phi_i) . grad(phi_j).
pub fn assemble_stiffness(mesh: &TriMesh) -> SparseMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let (g, area) = p1_gradients(&mesh.nodes[tri[0]], &mesh.nodes[tri[1]], &mesh.nodes[tri[2]]);
        for i in 0..3 {
            for j in 0..3 {
                let v = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                triplets.push((tri[i], tri[j], v));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.n_nodes(), &triplets)
}

/// Row-sum lumped mass: m_i = sum of adjacent triangle areas / 3.
pub fn lumped_mass(mesh: &TriMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.n_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let third = mesh.tri_area(t) / 3.0;
        for &n in tri {
            m[n] += third;
        }
    }
    m
}

/// Per-element gradient of a P1 nodal field.
pub fn element_gradients(mesh: &TriMesh, u: &[f64]) -> Vec<[f64; 2]> {
    mesh.triangles
        .iter()
        .map(|tri| {
            let (g, _) = p1_gradients(&mesh.nodes[tri[0]], &mesh.nodes[tri[1]], &mesh.nodes[tri[2]]);
            let mut grad = [0.0, 0.0];
            for k in 0..3 {
                grad[0] += u[tri[k]] * g[k][0];
                grad[1] += u[tri[k]] * g[k][1];
            }
            grad
        })
        .collect()
}

/// Area-weighted nodal average of the element gradients.
pub fn nodal_gradients(mesh: &TriMesh, u: &[f64]) -> Vec<[f64; 2]> {
    let eg = element_gradients(mesh, u);
    let mut acc = vec![[0.0; 2]; mesh.n_nodes()];
    let mut wsum = vec![0.0; mesh.n_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.tri_area(t);
        for &n in tri {
            acc[n][0] += area * eg[t][0];
            acc[n][1] += area * eg[t][1];
            wsum[n] += area;
        }
    }
    for n in 0..mesh.n_nodes() {
        acc[n][0] /= wsum[n];
        acc[n][1] /= wsum[n];
    }
    acc
}

/// Lumped-mass L2 norm of a nodal field.
pub fn l2_norm(mass: &[f64], u: &[f64]) -> f64 {
    mass.iter().zip(u).map(|(m, v)| m * v * v).sum::<f64>().sqrt()
}
