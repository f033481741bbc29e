//! Reconstruction quality metrics: peak contrast, background statistics away
//! from the true inclusions, threshold-based inclusion detection with cluster
//! centroids, and a lumped-mass weighted relative L2 error against the truth.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WaveError};
use crate::fem::lumped_mass;
use crate::geometry::Point2;
use crate::mesh::TriMesh;

/// Centroid and size of one detected cluster of above-threshold nodes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Cluster {
    pub x: f64,
    pub y: f64,
    pub n_nodes: usize,
    pub max_value: f64,
}

/// Summary of one reconstructed coefficient field against the ground truth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub max_a: f64,
    /// Mean over nodes where the truth is 1 and which sit farther than the
    /// exclusion distance from every true-inclusion node.
    pub background_mean: f64,
    pub background_std: f64,
    /// Detection threshold: midway between the background mean and the peak.
    pub threshold: f64,
    pub clusters: Vec<Cluster>,
    /// Lumped-mass weighted relative L2 error against the truth.
    pub relative_l2: f64,
}

/// Compute metrics for `recon` against `truth` on `mesh`. `exclusion` is the
/// distance from true-inclusion nodes beyond which a truth==1 node counts as
/// background (typically three mesh cells).
pub fn compute_metrics(
    mesh: &TriMesh,
    truth: &[f64],
    recon: &[f64],
    exclusion: f64,
) -> Result<Metrics> {
    let n = mesh.n_nodes();
    if truth.len() != n || recon.len() != n {
        return Err(WaveError::DimMismatch(format!(
            "metrics: mesh has {n} nodes, truth {} and reconstruction {}",
            truth.len(),
            recon.len()
        )));
    }
    let max_a = recon.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let inclusion_nodes: Vec<usize> = (0..n).filter(|&i| truth[i] != 1.0).collect();
    let is_background = |i: usize| {
        truth[i] == 1.0
            && inclusion_nodes
                .iter()
                .all(|&j| mesh.nodes[i].dist(&mesh.nodes[j]) > exclusion)
    };
    let bg: Vec<f64> = (0..n).filter(|&i| is_background(i)).map(|i| recon[i]).collect();
    if bg.is_empty() {
        return Err(WaveError::DimMismatch(
            "metrics: no background nodes left after exclusion".into(),
        ));
    }
    let background_mean = bg.iter().sum::<f64>() / bg.len() as f64;
    let background_std = (bg.iter().map(|v| (v - background_mean).powi(2)).sum::<f64>()
        / bg.len() as f64)
        .sqrt();

    let threshold = 0.5 * (background_mean + max_a);
    // a flat field has no detectable inclusions; thresholding it would mark
    // every node as one giant cluster
    let clusters = if max_a - background_mean > 1e-6 {
        detect_clusters(mesh, recon, threshold)
    } else {
        Vec::new()
    };

    let m = lumped_mass(mesh);
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    for i in 0..n {
        err2 += m[i] * (recon[i] - truth[i]).powi(2);
        ref2 += m[i] * truth[i].powi(2);
    }
    let relative_l2 = (err2 / ref2).sqrt();

    Ok(Metrics {
        max_a,
        background_mean,
        background_std,
        threshold,
        clusters,
        relative_l2,
    })
}

/// Connected components (over the node one-ring) of nodes with
/// `values >= threshold`, each reported with its centroid.
pub fn detect_clusters(mesh: &TriMesh, values: &[f64], threshold: f64) -> Vec<Cluster> {
    let neighbors = mesh.node_neighbors();
    let marked: Vec<bool> = values.iter().map(|v| *v >= threshold).collect();
    let mut seen = vec![false; mesh.n_nodes()];
    let mut clusters = Vec::new();
    for start in 0..mesh.n_nodes() {
        if !marked[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            for &j in &neighbors[i] {
                if marked[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        let (mut cx, mut cy, mut peak) = (0.0, 0.0, f64::NEG_INFINITY);
        for &i in &members {
            cx += mesh.nodes[i].x;
            cy += mesh.nodes[i].y;
            peak = peak.max(values[i]);
        }
        let k = members.len() as f64;
        clusters.push(Cluster {
            x: cx / k,
            y: cy / k,
            n_nodes: members.len(),
            max_value: peak,
        });
    }
    clusters
}

/// Distance from `p` to the nearest of the given centers.
pub fn nearest_center_dist(p: &Point2, centers: &[Point2]) -> f64 {
    centers
        .iter()
        .map(|c| p.dist(c))
        .fold(f64::INFINITY, f64::min)
}
