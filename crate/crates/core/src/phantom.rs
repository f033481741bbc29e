//! Synthetic coefficient phantoms: tumor-like inclusions (value ~5 against
//! a unit background) placed inside the reconstruction circle, either as
//! single-node "point" targets (nearest node plus its one-ring) or as discs.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WaveError};
use crate::forward::NodalField;
use crate::geometry::{Circle, Point2};
use crate::mesh::TriMesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionShape {
    Point,
    Disc,
}

/// One inclusion of the phantom. `radius` is ignored for point inclusions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Inclusion {
    pub shape: InclusionShape,
    pub center: Point2,
    #[serde(default)]
    pub radius: f64,
    pub value: f64,
}

/// Three-point phantom coordinates used throughout the test battery.
pub const THREE_POINTS: [Point2; 3] = [
    Point2::new(-0.090234, 0.280903),
    Point2::new(-0.221014, 0.096346),
    Point2::new(0.166988, -0.126124),
];

/// Build the coefficient field: background 1, each inclusion painted on the
/// mesh. Point inclusions mark the nearest node and its one-ring; disc
/// inclusions mark every node within the radius.
pub fn build_phantom(
    mesh: &TriMesh,
    circle: &Circle,
    inclusions: &[Inclusion],
    d: f64,
) -> Result<NodalField> {
    let mut a = vec![1.0; mesh.n_nodes()];
    let neighbors = mesh.node_neighbors();
    for (k, inc) in inclusions.iter().enumerate() {
        if !circle.contains(&inc.center) {
            return Err(WaveError::InvalidPhantom(format!(
                "inclusion {k} center ({}, {}) lies outside the reconstruction circle",
                inc.center.x, inc.center.y
            )));
        }
        if inc.value < 1.0 || inc.value > d {
            return Err(WaveError::InvalidPhantom(format!(
                "inclusion {k} value {} outside [1, {d}]",
                inc.value
            )));
        }
        match inc.shape {
            InclusionShape::Point => {
                let nearest = (0..mesh.n_nodes())
                    .min_by(|&i, &j| {
                        mesh.nodes[i]
                            .dist(&inc.center)
                            .total_cmp(&mesh.nodes[j].dist(&inc.center))
                    })
                    .ok_or_else(|| WaveError::InvalidPhantom("empty mesh".into()))?;
                a[nearest] = inc.value;
                for &n in &neighbors[nearest] {
                    a[n] = inc.value;
                }
            }
            InclusionShape::Disc => {
                if inc.radius <= 0.0 {
                    return Err(WaveError::InvalidPhantom(format!(
                        "disc inclusion {k} needs a positive radius, got {}",
                        inc.radius
                    )));
                }
                for (n, p) in mesh.nodes.iter().enumerate() {
                    if p.dist(&inc.center) <= inc.radius {
                        a[n] = inc.value;
                    }
                }
            }
        }
    }
    NodalField::coefficient(a, d)
}
