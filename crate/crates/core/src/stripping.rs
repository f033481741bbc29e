//! Carleman-weight layer stripping in pseudo frequency. Per interval
//! (s_n, s_{n-1}] the elliptic problem
//!
//!   Delta q_n - A_{1,n} (h sum grad q_j) . grad q_n + A_{1,n} grad q_n . grad V
//!     - eps q_n
//!   = 2 (I_{1,n}/I_0) |grad q_n|^2 - A_{2,n} h^2 |sum grad q_j|^2
//!     + 2 A_{2,n} grad V . (h sum grad q_j) - A_{2,n} |grad V|^2
//!
//! is solved on the circular submesh with Dirichlet data psi_n, the
//! |grad q_n|^2 term lagged at the previous iterate (its influence is
//! bounded by |I_{1,n}|/I_0 <= 4 s_bar^2 / lambda for lambda h >= 1). The
//! accumulated v = -h q_n - h sum q_j + V feeds the coefficient recovery,
//! and the tail V = ln w(x, s_bar) / s_bar^2 is refreshed by a forward
//! solve with the newly recovered coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WaveError};
use crate::fem::{element_gradients, lumped_mass, p1_gradients};
use crate::forward::{run_forward_laplace, NodalField, SimConfig};
use crate::laplace::{PseudoFreqData, PseudoFreqGrid};
use crate::mesh::{HybridDomain, SubMesh, TriMesh};
use crate::quad::integrate;
use crate::recovery::recover_a_raw;
use crate::sparse::{solve_bicgstab, SparseMatrix};

const QUAD_TOL: f64 = 1e-12;

/// Analytic/quadrature values of the per-interval weight integrals.
#[derive(Clone, Copy, Debug)]
pub struct CarlemanCoeffs {
    pub i0: f64,
    pub i1: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Evaluate I_0 (closed form) and I_{1,n}, A_{1,n}, A_{2,n} (adaptive
/// quadrature of the printed integrands) for interval n.
pub fn carleman_coeffs(n: usize, grid: &PseudoFreqGrid) -> CarlemanCoeffs {
    let (s_lo, s_hi) = grid.interval(n);
    let (lambda, h) = (grid.lambda, grid.step);
    let cwf = move |s: f64| (lambda * (s - s_hi)).exp();
    let i0 = (1.0 - (-lambda * h).exp()) / lambda;
    let i1 = integrate(
        &|s| (s_hi - s) * (s * s - s * (s_hi - s)) * cwf(s),
        s_lo,
        s_hi,
        QUAD_TOL,
    );
    let a1 = 2.0 / i0
        * integrate(&|s| (s * s - 2.0 * s * (s_hi - s)) * cwf(s), s_lo, s_hi, QUAD_TOL);
    let a2 = 2.0 / i0 * integrate(&|s| s * cwf(s), s_lo, s_hi, QUAD_TOL);
    CarlemanCoeffs { i0, i1, a1, a2 }
}

/// Assembled interval problem. The matrix (Laplacian + convection +
/// reaction, Dirichlet rows replaced) is fixed over the lag loop; only the
/// lagged right-hand side changes.
pub struct QnProblem<'m> {
    pub mesh: &'m TriMesh,
    pub coeffs: CarlemanCoeffs,
    pub matrix: SparseMatrix,
    /// right-hand side without the lagged |grad q|^2 term
    pub rhs_base: Vec<f64>,
    pub boundary: Vec<bool>,
}

/// Weak form of the interval problem on `mesh` (the circle submesh).
/// `sum_grad` holds h sum_{j<n} grad q_j per element, `grad_v` the tail
/// gradient per element, `psi_n` the Dirichlet data (one value per node;
/// only boundary entries are used).
pub fn assemble_qn<'m>(
    mesh: &'m TriMesh,
    coeffs: &CarlemanCoeffs,
    sum_grad: &[[f64; 2]],
    grad_v: &[[f64; 2]],
    psi_n: &[f64],
    epsilon: f64,
) -> Result<QnProblem<'m>> {
    let n_nodes = mesh.n_nodes();
    let n_tris = mesh.triangles.len();
    if sum_grad.len() != n_tris || grad_v.len() != n_tris || psi_n.len() != n_nodes {
        return Err(WaveError::DimMismatch(format!(
            "assemble_qn: {} / {} element fields for {n_tris} triangles, {} psi values for {n_nodes} nodes",
            sum_grad.len(),
            grad_v.len(),
            psi_n.len()
        )));
    }
    let mass = lumped_mass(mesh);
    let mut triplets = Vec::with_capacity(12 * n_tris + n_nodes);
    let mut rhs = vec![0.0; n_nodes];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) =
            p1_gradients(&mesh.nodes[tri[0]], &mesh.nodes[tri[1]], &mesh.nodes[tri[2]]);
        // convection velocity c = A_1 (h sum grad q_j - grad V)
        let c = [
            coeffs.a1 * (sum_grad[t][0] - grad_v[t][0]),
            coeffs.a1 * (sum_grad[t][1] - grad_v[t][1]),
        ];
        for j in 0..3 {
            for k in 0..3 {
                let stiff = area * (g[j][0] * g[k][0] + g[j][1] * g[k][1]);
                let conv = (c[0] * g[k][0] + c[1] * g[k][1]) * area / 3.0;
                triplets.push((tri[j], tri[k], stiff + conv));
            }
        }
        // fixed part of R (element-wise constant), tested against phi_j
        let sg2 = sum_grad[t][0] * sum_grad[t][0] + sum_grad[t][1] * sum_grad[t][1];
        let vg2 = grad_v[t][0] * grad_v[t][0] + grad_v[t][1] * grad_v[t][1];
        let cross = grad_v[t][0] * sum_grad[t][0] + grad_v[t][1] * sum_grad[t][1];
        let r_fixed = -coeffs.a2 * sg2 + 2.0 * coeffs.a2 * cross - coeffs.a2 * vg2;
        for &node in tri {
            rhs[node] -= r_fixed * area / 3.0;
        }
    }
    // reaction term on the lumped mass
    for (j, m) in mass.iter().enumerate() {
        triplets.push((j, j, epsilon * m));
    }
    let mut matrix = SparseMatrix::from_triplets(n_nodes, &triplets);
    let boundary = mesh.boundary_node_mask();
    for (j, b) in boundary.iter().enumerate() {
        if *b {
            matrix.set_identity_row(j);
            rhs[j] = psi_n[j];
        }
    }
    Ok(QnProblem { mesh, coeffs: *coeffs, matrix, rhs_base: rhs, boundary })
}

impl QnProblem<'_> {
    /// Full right-hand side with the lagged nonlinear term evaluated at
    /// `q_lag`.
    pub fn rhs_with_lag(&self, q_lag: &[f64]) -> Vec<f64> {
        let mut rhs = self.rhs_base.clone();
        let factor = 2.0 * self.coeffs.i1 / self.coeffs.i0;
        let grads = element_gradients(self.mesh, q_lag);
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let area = self.mesh.tri_area(t);
            let g2 = grads[t][0] * grads[t][0] + grads[t][1] * grads[t][1];
            for &node in tri {
                if !self.boundary[node] {
                    rhs[node] -= factor * g2 * area / 3.0;
                }
            }
        }
        rhs
    }
}

/// Fixed-point iteration on the lagged |grad q_n|^2 term. Returns the
/// final iterate, whether the lag loop met `tol`, and the iteration count.
pub fn solve_qn(
    problem: &QnProblem<'_>,
    q_start: &[f64],
    max_lag: usize,
    tol: f64,
) -> Result<(Vec<f64>, bool, usize)> {
    let mut q = q_start.to_vec();
    for it in 1..=max_lag {
        let rhs = problem.rhs_with_lag(&q);
        let (q_new, _) = solve_bicgstab(&problem.matrix, &rhs, Some(&q), 1e-10, 20_000)?;
        let mut diff: f64 = 0.0;
        let mut norm: f64 = 0.0;
        for (a, b) in q.iter().zip(&q_new) {
            diff += (a - b) * (a - b);
            norm += b * b;
        }
        let rel = diff.sqrt() / norm.sqrt().max(1e-300);
        q = q_new;
        if rel <= tol || norm == 0.0 {
            return Ok((q, true, it));
        }
    }
    Ok((q, false, max_lag))
}

/// v = -h q_current - h sum_j q_j + V, nodewise.
pub fn accumulate_v(q_history: &[Vec<f64>], q_current: &[f64], v_tail: &[f64], h: f64) -> Vec<f64> {
    (0..q_current.len())
        .map(|i| {
            let hist: f64 = q_history.iter().map(|q| q[i]).sum();
            -h * q_current[i] - h * hist + v_tail[i]
        })
        .collect()
}

/// Tail from a transform field: V = ln w / s_bar^2.
pub fn tail_from_w(w: &[f64], s_bar: f64) -> Result<Vec<f64>> {
    w.iter()
        .enumerate()
        .map(|(node, &wi)| {
            if wi <= 0.0 {
                Err(WaveError::NonpositiveTransform { node, s: s_bar, value: wi })
            } else {
                Ok(wi.ln() / (s_bar * s_bar))
            }
        })
        .collect()
}

/// Forward solve with the current coefficient, Laplace transform at s_bar,
/// tail V = ln w(x, s_bar) / s_bar^2 on the full FEM mesh.
pub fn update_tail(
    domain: &HybridDomain,
    a: &NodalField,
    s_bar: f64,
    cfg: &SimConfig,
) -> Result<Vec<f64>> {
    let w = run_forward_laplace(domain, a, cfg, s_bar)?;
    tail_from_w(&w, s_bar)
}

/// Tail initialization strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailInit {
    /// forward solve with the homogeneous background a = 1
    Background,
    /// V(x, s_bar) = 0
    Zero,
    /// V = ln phi(x, s_bar) / s_bar^2 from the measured transform itself
    /// (available because the data are recorded inside the circle); the
    /// only initialization whose tail carries interior structure
    Measured,
}

/// Reconstruction loop configuration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GcmConfig {
    pub m_inner_max: usize,
    pub inner_tol: f64,
    pub d: f64,
    pub tail_init: TailInit,
}

impl Default for GcmConfig {
    fn default() -> Self {
        GcmConfig { m_inner_max: 5, inner_tol: 1e-3, d: 10.0, tail_init: TailInit::Background }
    }
}

/// Per-interval reconstruction output. The coefficient lives on the full
/// FEM mesh (background 1 outside the circle).
#[derive(Clone, Debug)]
pub struct IntervalResult {
    pub n: usize,
    /// lower interval endpoint s_n (used in the recovery formula)
    pub s_lower: f64,
    /// upper endpoint s_{n-1} (reporting label)
    pub s_upper: f64,
    pub a: NodalField,
    pub max_a: f64,
    pub lag_converged: bool,
    pub inner_iterations: usize,
}

/// The globally convergent algorithm: outer loop over pseudo-frequency
/// intervals, inner loop with tail refresh via forward solves.
pub fn run_gcm(
    domain: &HybridDomain,
    data: &PseudoFreqData,
    gcm: &GcmConfig,
    sim: &SimConfig,
) -> Result<Vec<IntervalResult>> {
    let sub = domain.fem.circle_submesh()?;
    let n_sub = sub.mesh.n_nodes();
    if data.psi_n.len() != n_sub {
        return Err(WaveError::MeshMismatch(format!(
            "psi data covers {} nodes, circle submesh has {n_sub}",
            data.psi_n.len()
        )));
    }
    let grid = data.grid;
    let n_full = domain.fem.n_nodes();
    let background = NodalField::coefficient(vec![1.0; n_full], gcm.d)?;
    // Nodes on or next to the circle boundary keep the background value:
    // recovery on the one-sided snapped-element patches is unreliable, and
    // feeding its artifacts into the tail solves destabilizes the sweep.
    let pinned = boundary_collar(&sub.mesh);

    let mut v_tail_full = match gcm.tail_init {
        TailInit::Background => update_tail(domain, &background, grid.s_bar, sim)?,
        TailInit::Zero => vec![0.0; n_full],
        TailInit::Measured => {
            // phi[i][0] sits at s_0 = s_bar; build_pseudo_freq_data has
            // already rejected nonpositive transforms. Values outside the
            // circle never enter the sweep (only the restriction is used).
            let sb2 = grid.s_bar * grid.s_bar;
            let v_sub: Vec<f64> = (0..n_sub).map(|i| data.phi[i][0].ln() / sb2).collect();
            sub.embed(&v_sub, n_full, 0.0)
        }
    };
    let mut q_history: Vec<Vec<f64>> = vec![vec![0.0; n_sub]];
    let mut results = Vec::with_capacity(grid.n_intervals());

    for n in 1..=grid.n_intervals() {
        let coeffs = carleman_coeffs(n, &grid);
        let (s_lower, s_upper) = grid.interval(n);
        let psi_n: Vec<f64> = (0..n_sub).map(|i| data.psi_n[i][n - 1]).collect();
        // h sum_{j<n} grad q_j per element, constant over the inner loop
        let hist_sum = accumulate_history(&q_history, grid.step, n_sub);
        let sum_grad = element_gradients(&sub.mesh, &hist_sum);

        let mut q_n = q_history.last().expect("q0 always present").clone();
        let mut lag_converged = true;
        let mut inner_used = 0;
        for i in 1..=gcm.m_inner_max {
            inner_used = i;
            let v_tail_sub = sub.restrict(&v_tail_full);
            let grad_v = element_gradients(&sub.mesh, &v_tail_sub);
            let problem =
                assemble_qn(&sub.mesh, &coeffs, &sum_grad, &grad_v, &psi_n, grid.epsilon)?;
            let (q_new, converged, _) = solve_qn(&problem, &q_n, gcm.m_inner_max, gcm.inner_tol)?;
            lag_converged = converged;
            let rel = relative_change(&q_n, &q_new);
            q_n = q_new;

            // With a measured tail V(x, s_bar) is data, not a model estimate:
            // refreshing it from a forward solve with the clamped coefficient
            // only loses amplitude, so it stays fixed.
            if gcm.tail_init != TailInit::Measured {
                let v_sub = accumulate_v(&q_history, &q_n, &v_tail_sub, grid.step);
                let a_sub =
                    clamp_recovered(recover_a_raw(&sub.mesh, &v_sub, s_lower)?, &pinned, gcm.d);
                let a_full = NodalField::coefficient(sub.embed(&a_sub, n_full, 1.0), gcm.d)?;
                v_tail_full = update_tail(domain, &a_full, grid.s_bar, sim)?;
            }

            if rel <= gcm.inner_tol && i > 1 {
                break;
            }
        }

        // final coefficient of this interval from the refreshed tail
        let v_tail_sub = sub.restrict(&v_tail_full);
        let v_sub = accumulate_v(&q_history, &q_n, &v_tail_sub, grid.step);
        let a_sub = clamp_recovered(recover_a_raw(&sub.mesh, &v_sub, s_lower)?, &pinned, gcm.d);
        let a_full = NodalField::coefficient(sub.embed(&a_sub, n_full, 1.0), gcm.d)?;
        let max_a = a_full.values.iter().cloned().fold(f64::MIN, f64::max);

        q_history.push(q_n);
        results.push(IntervalResult {
            n,
            s_lower,
            s_upper,
            a: a_full,
            max_a,
            lag_converged,
            inner_iterations: inner_used,
        });
    }
    Ok(results)
}

/// The circle submesh used by the reconstruction, exposed for callers that
/// need the node mapping (data extraction, reporting).
pub fn reconstruction_submesh(domain: &HybridDomain) -> Result<SubMesh> {
    domain.fem.circle_submesh()
}

/// Boundary nodes plus their one-ring: the collar where the explicit
/// recovery formula sits on one-sided patches of snapped elements.
fn boundary_collar(mesh: &TriMesh) -> Vec<bool> {
    let boundary = mesh.boundary_node_mask();
    let mut collar = boundary.clone();
    for (i, neigh) in mesh.node_neighbors().iter().enumerate() {
        if neigh.iter().any(|&j| boundary[j]) {
            collar[i] = true;
        }
    }
    collar
}

fn clamp_recovered(raw: Vec<f64>, pinned: &[bool], d: f64) -> Vec<f64> {
    raw.into_iter()
        .zip(pinned)
        .map(|(a, &pin)| if pin { 1.0 } else { a.clamp(1.0, d) })
        .collect()
}

fn accumulate_history(q_history: &[Vec<f64>], h: f64, n_nodes: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_nodes];
    for q in q_history {
        for (s, v) in sum.iter_mut().zip(q) {
            *s += h * v;
        }
    }
    sum
}

fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for (a, b) in old.iter().zip(new) {
        diff += (a - b) * (a - b);
        norm += b * b;
    }
    diff.sqrt() / norm.sqrt().max(1e-300)
}
