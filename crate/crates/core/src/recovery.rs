//! Explicit coefficient recovery from the accumulated function v:
//!
//!   w = e^{s_n^2 v},   a = Delta w / (s_n^2 w)  (equivalently
//!   a = Delta v + s_n^2 |grad v|^2),
//!
//! realized weakly: the w-weighted mass matrix M_{j,k} = w_k (phi_k, phi_j)
//! is lumped by row sums, the stiffness G and the Neumann boundary load F
//! give
//!
//!   a_j = [-(G w)_j + F_j] / (s_n^2 M^L_j)
//!
//! at interior nodes; boundary nodes take the background value 1 and the
//! result is clamped to [1, d]. The pointwise formula (`recover_a_direct`)
//! serves as an independent cross-check.

use crate::error::{Result, WaveError};
use crate::fem::{assemble_stiffness, lumped_mass, nodal_gradients, p1_gradients};
use crate::forward::{FieldRole, NodalField};
use crate::mesh::TriMesh;
use crate::sparse::SparseMatrix;

/// Exponent budget for w = e^{s^2 v} in double precision.
const OVERFLOW_LIMIT: f64 = 700.0;

/// Operators of the weak recovery formula.
pub struct RecoveryOperators {
    /// w-weighted mass matrix M_{j,k} = w_k (phi_k, phi_j)
    pub mass: SparseMatrix,
    /// row sums of `mass`
    pub lumped: Vec<f64>,
    /// P1 stiffness
    pub stiffness: SparseMatrix,
    /// Neumann boundary load F_j = sum_e f_e |e| / 2 over edges at j
    pub load: Vec<f64>,
}

/// w = e^{s_n^2 v}, nodewise, with an overflow guard.
pub fn w_from_v(v: &[f64], s_n: f64) -> Result<Vec<f64>> {
    let s2 = s_n * s_n;
    v.iter()
        .enumerate()
        .map(|(node, &vi)| {
            let exponent = s2 * vi;
            if exponent > OVERFLOW_LIMIT {
                Err(WaveError::TransformOverflow { node, exponent })
            } else {
                Ok(exponent.exp())
            }
        })
        .collect()
}

/// Neumann data f = s_n^2 (grad v . n) e^{s_n^2 v} per boundary edge,
/// using the adjacent triangle's P1 gradient, the outward edge normal and
/// the edge-midpoint value of v.
pub fn neumann_data(mesh: &TriMesh, v: &[f64], s_n: f64) -> Result<Vec<f64>> {
    let s2 = s_n * s_n;
    let mut out = Vec::with_capacity(mesh.boundary_edges.len());
    for edge in &mesh.boundary_edges {
        let tri = mesh.triangles[edge.triangle];
        let (g, _) = p1_gradients(&mesh.nodes[tri[0]], &mesh.nodes[tri[1]], &mesh.nodes[tri[2]]);
        let mut grad = [0.0, 0.0];
        for k in 0..3 {
            grad[0] += v[tri[k]] * g[k][0];
            grad[1] += v[tri[k]] * g[k][1];
        }
        let (a, b) = (mesh.nodes[edge.nodes[0]], mesh.nodes[edge.nodes[1]]);
        let mut n = [b.y - a.y, a.x - b.x];
        let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
        n[0] /= len;
        n[1] /= len;
        // orient away from the opposite vertex of the adjacent triangle
        let opp = tri
            .iter()
            .copied()
            .find(|&k| k != edge.nodes[0] && k != edge.nodes[1])
            .expect("boundary edge without opposite vertex");
        let mid = [(a.x + b.x) * 0.5, (a.y + b.y) * 0.5];
        let to_mid = [mid[0] - mesh.nodes[opp].x, mid[1] - mesh.nodes[opp].y];
        if n[0] * to_mid[0] + n[1] * to_mid[1] < 0.0 {
            n[0] = -n[0];
            n[1] = -n[1];
        }
        let v_mid = 0.5 * (v[edge.nodes[0]] + v[edge.nodes[1]]);
        let exponent = s2 * v_mid;
        if exponent > OVERFLOW_LIMIT {
            return Err(WaveError::TransformOverflow { node: edge.nodes[0], exponent });
        }
        out.push(s2 * (grad[0] * n[0] + grad[1] * n[1]) * exponent.exp());
    }
    Ok(out)
}

/// Assemble the weak-recovery operators from nodal w and per-edge Neumann
/// data `f` (one value per `mesh.boundary_edges` entry).
pub fn assemble_recovery(mesh: &TriMesh, w: &[f64], f: &[f64]) -> Result<RecoveryOperators> {
    if w.len() != mesh.n_nodes() || f.len() != mesh.boundary_edges.len() {
        return Err(WaveError::DimMismatch(format!(
            "assemble_recovery: {} w values / {} nodes, {} edge values / {} edges",
            w.len(),
            mesh.n_nodes(),
            f.len(),
            mesh.boundary_edges.len()
        )));
    }
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.tri_area(t);
        for j in 0..3 {
            for k in 0..3 {
                let base = if j == k { area / 6.0 } else { area / 12.0 };
                triplets.push((tri[j], tri[k], w[tri[k]] * base));
            }
        }
    }
    let mass = SparseMatrix::from_triplets(mesh.n_nodes(), &triplets);
    let ones = vec![1.0; mesh.n_nodes()];
    let lumped = mass.spmv(&ones)?;
    for (node, &m) in lumped.iter().enumerate() {
        if m <= 0.0 {
            return Err(WaveError::SingularLumping { node, value: m });
        }
    }
    let mut load = vec![0.0; mesh.n_nodes()];
    for (e, edge) in mesh.boundary_edges.iter().enumerate() {
        let len = mesh.nodes[edge.nodes[0]].dist(&mesh.nodes[edge.nodes[1]]);
        load[edge.nodes[0]] += 0.5 * len * f[e];
        load[edge.nodes[1]] += 0.5 * len * f[e];
    }
    Ok(RecoveryOperators {
        mass,
        lumped,
        stiffness: assemble_stiffness(mesh),
        load,
    })
}

/// Pre-clamp weak recovery: a_j = [-(G w)_j + F_j] / (s_n^2 M^L_j) at
/// interior nodes, background 1 on the boundary.
pub fn recover_a_raw(mesh: &TriMesh, v: &[f64], s_n: f64) -> Result<Vec<f64>> {
    let w = w_from_v(v, s_n)?;
    let f = neumann_data(mesh, v, s_n)?;
    let ops = assemble_recovery(mesh, &w, &f)?;
    let gw = ops.stiffness.spmv(&w)?;
    let boundary = mesh.boundary_node_mask();
    let s2 = s_n * s_n;
    Ok((0..mesh.n_nodes())
        .map(|j| {
            if boundary[j] {
                1.0
            } else {
                (-gw[j] + ops.load[j]) / (s2 * ops.lumped[j])
            }
        })
        .collect())
}

/// Weak recovery clamped to the admissible range [1, d].
pub fn recover_a(mesh: &TriMesh, v: &NodalField, s_n: f64, d: f64) -> Result<NodalField> {
    let raw = recover_a_raw(mesh, &v.values, s_n)?;
    NodalField::coefficient(raw.into_iter().map(|a| a.clamp(1.0, d)).collect(), d)
}

/// Pre-clamp pointwise formula a = Delta v + s^2 |grad v|^2 with the
/// lumped discrete Laplacian and area-averaged nodal gradients.
pub fn recover_a_direct_raw(mesh: &TriMesh, v: &[f64], s: f64) -> Result<Vec<f64>> {
    let k = assemble_stiffness(mesh);
    let mass = lumped_mass(mesh);
    let kv = k.spmv(v)?;
    let grads = nodal_gradients(mesh, v);
    let boundary = mesh.boundary_node_mask();
    Ok((0..mesh.n_nodes())
        .map(|j| {
            if boundary[j] {
                1.0
            } else {
                let laplacian = -kv[j] / mass[j];
                laplacian + s * s * (grads[j][0] * grads[j][0] + grads[j][1] * grads[j][1])
            }
        })
        .collect())
}

/// Pointwise recovery clamped to [1, d].
pub fn recover_a_direct(mesh: &TriMesh, v: &NodalField, s: f64, d: f64) -> Result<NodalField> {
    let raw = recover_a_direct_raw(mesh, &v.values, s)?;
    NodalField::coefficient(raw.into_iter().map(|a| a.clamp(1.0, d)).collect(), d)
}

/// Exponent of the transform pair: v = ln w / s^2.
pub fn v_from_w(w: &NodalField, s: f64) -> Result<NodalField> {
    let vals = w
        .values
        .iter()
        .map(|&wi| wi.ln() / (s * s))
        .collect::<Vec<_>>();
    NodalField::new(FieldRole::V, vals)
}
