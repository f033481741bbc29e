//! Hybrid geometry: structured collar grid, triangulated inner domain and
//! the circular reconstruction region resolved by node snapping.

use std::collections::BTreeMap;

use crate::error::{Result, WaveError};
use crate::geometry::{Circle, Point2, Rect};

pub const ON_CIRCLE_TOL: f64 = 1e-8;
const COINCIDENCE_TOL: f64 = 1e-12;

/// Per-node subset flags.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NodeMarkers {
    pub in_circle: bool,
    pub on_circle: bool,
    pub on_outer: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMarker {
    OuterOmega,
    Circle,
}

/// Boundary edge with the single triangle it is associated with. For
/// `Circle` edges that is the adjacent triangle inside the circle.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub marker: EdgeMarker,
    pub triangle: usize,
}

/// Conforming triangulation of the inner domain.
#[derive(Clone, Debug)]
pub struct TriMesh {
    pub nodes: Vec<Point2>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub node_markers: Vec<NodeMarkers>,
}

fn signed_area(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

impl TriMesh {
    /// Structured triangulation of `rect` with target spacing `h`; each
    /// background cell is split along its lower-left/upper-right diagonal.
    /// When a circle is given, nodes of mesh edges crossing it are snapped
    /// onto the circle so the interface is resolved by on-circle nodes.
    pub fn structured(rect: &Rect, h: f64, circle: Option<&Circle>) -> Result<TriMesh> {
        if h <= 0.0 {
            return Err(WaveError::InvalidGeometry(format!("mesh spacing must be positive, got {h}")));
        }
        let nx = (rect.width() / h).round() as usize;
        let ny = (rect.height() / h).round() as usize;
        if nx == 0 || ny == 0 {
            return Err(WaveError::MeshTooCoarse(format!(
                "spacing {h} leaves no cells in a {} x {} rectangle",
                rect.width(),
                rect.height()
            )));
        }
        let dx = rect.width() / nx as f64;
        let dy = rect.height() / ny as f64;
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = if i == nx { rect.xmax } else { rect.xmin + i as f64 * dx };
                let y = if j == ny { rect.ymax } else { rect.ymin + j as f64 * dy };
                nodes.push(Point2::new(x, y));
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let a = idx(i, j);
                let b = idx(i + 1, j);
                let c = idx(i + 1, j + 1);
                let d = idx(i, j + 1);
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let mut mesh = TriMesh {
            nodes,
            triangles,
            boundary_edges: Vec::new(),
            node_markers: Vec::new(),
        };
        if let Some(circ) = circle {
            mesh.snap_to_circle(circ, rect)?;
        }
        mesh.compute_markers(rect, circle);
        mesh.compute_boundary_edges()?;
        mesh.validate(rect.area())?;
        Ok(mesh)
    }

    /// Snap the closer endpoint of every mesh edge that strictly crosses
    /// the circle onto the circle. After this pass no triangle edge crosses
    /// the interface, so the circle polygon is traced by on-circle nodes.
    fn snap_to_circle(&mut self, circle: &Circle, rect: &Rect) -> Result<()> {
        let mut edges = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)), ());
            }
        }
        for (&(a, b), _) in edges.iter() {
            let da = circle.signed_dist(&self.nodes[a]);
            let db = circle.signed_dist(&self.nodes[b]);
            if da * db < 0.0 {
                let snap = if da.abs() <= db.abs() { a } else { b };
                let p = self.nodes[snap];
                if on_rect_boundary(&p, rect) {
                    return Err(WaveError::InvalidGeometry(
                        "circle interface reaches the outer mesh boundary".into(),
                    ));
                }
                let r = p.dist(&circle.center);
                let f = circle.radius / r;
                self.nodes[snap] = Point2::new(
                    circle.center.x + f * (p.x - circle.center.x),
                    circle.center.y + f * (p.y - circle.center.y),
                );
            }
        }
        // snapping can stretch a few edges slightly past the 2h diameter
        // contract; pull the free endpoint of each such edge toward its
        // snapped neighbor (displacements are well below the node-circle
        // clearance, so no new interface crossings appear)
        let h = edges
            .keys()
            .next()
            .map(|&(a, b)| self.nodes[a].dist(&self.nodes[b]))
            .unwrap_or(0.0);
        let target = 1.995 * h;
        for _ in 0..10 {
            let mut moved = false;
            for (&(a, b), _) in edges.iter() {
                let len = self.nodes[a].dist(&self.nodes[b]);
                if len <= target {
                    continue;
                }
                let on_a = circle.signed_dist(&self.nodes[a]).abs() <= ON_CIRCLE_TOL;
                let on_b = circle.signed_dist(&self.nodes[b]).abs() <= ON_CIRCLE_TOL;
                let free = match (on_a, on_b) {
                    (true, false) => b,
                    (false, true) => a,
                    _ => continue,
                };
                let anchor = if free == a { b } else { a };
                if on_rect_boundary(&self.nodes[free], rect) {
                    continue;
                }
                let shift = len - target;
                let (pa, pf) = (self.nodes[anchor], self.nodes[free]);
                self.nodes[free] = Point2::new(
                    pf.x + shift * (pa.x - pf.x) / len,
                    pf.y + shift * (pa.y - pf.y) / len,
                );
                moved = true;
            }
            if !moved {
                break;
            }
        }
        Ok(())
    }

    fn compute_markers(&mut self, rect: &Rect, circle: Option<&Circle>) {
        self.node_markers = self
            .nodes
            .iter()
            .map(|p| {
                let (in_circle, on_circle) = match circle {
                    Some(c) => {
                        let d = c.signed_dist(p);
                        (d <= ON_CIRCLE_TOL, d.abs() <= ON_CIRCLE_TOL)
                    }
                    None => (false, false),
                };
                NodeMarkers {
                    in_circle,
                    on_circle,
                    on_outer: on_rect_boundary(p, rect),
                }
            })
            .collect();
    }

    fn compute_boundary_edges(&mut self) -> Result<()> {
        // outer boundary: edges with exactly one adjacent triangle
        let mut edge_tris: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_tris.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut boundary = Vec::new();
        for (&(a, b), tris) in &edge_tris {
            match tris.len() {
                1 => boundary.push(BoundaryEdge { nodes: [a, b], marker: EdgeMarker::OuterOmega, triangle: tris[0] }),
                2 => {}
                n => {
                    return Err(WaveError::InvalidGeometry(format!(
                        "edge ({a}, {b}) shared by {n} triangles; mesh is not conforming"
                    )))
                }
            }
        }
        // circle interface: boundary of the all-in-circle triangle set,
        // associated with the inside triangle
        let circle_tris: Vec<usize> = (0..self.triangles.len())
            .filter(|&t| self.triangles[t].iter().all(|&n| self.node_markers[n].in_circle))
            .collect();
        if !circle_tris.is_empty() {
            let mut inner_edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
            for &t in &circle_tris {
                let tri = self.triangles[t];
                for k in 0..3 {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    inner_edges.entry((a.min(b), a.max(b))).or_default().push(t);
                }
            }
            for (&(a, b), tris) in &inner_edges {
                if tris.len() == 1 {
                    if !(self.node_markers[a].on_circle && self.node_markers[b].on_circle) {
                        return Err(WaveError::InvalidGeometry(format!(
                            "circle interface edge ({a}, {b}) has an endpoint off the circle"
                        )));
                    }
                    boundary.push(BoundaryEdge { nodes: [a, b], marker: EdgeMarker::Circle, triangle: tris[0] });
                }
            }
        }
        self.boundary_edges = boundary;
        Ok(())
    }

    /// Type-invariant checks: positive orientation, conformity and the
    /// area identity against the nominal domain area.
    fn validate(&self, expected_area: f64) -> Result<()> {
        let mut total = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            let area = signed_area(&self.nodes[tri[0]], &self.nodes[tri[1]], &self.nodes[tri[2]]);
            if area <= 0.0 {
                return Err(WaveError::InvalidGeometry(format!(
                    "triangle {t} has nonpositive signed area {area:.3e}"
                )));
            }
            total += area;
        }
        if ((total - expected_area) / expected_area).abs() > 1e-10 {
            return Err(WaveError::InvalidGeometry(format!(
                "triangle areas sum to {total}, expected {expected_area}"
            )));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(&self.nodes[a], &self.nodes[b], &self.nodes[c])
    }

    /// True for every node that lies on a boundary edge.
    pub fn boundary_node_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for e in &self.boundary_edges {
            mask[e.nodes[0]] = true;
            mask[e.nodes[1]] = true;
        }
        mask
    }

    /// One-ring adjacency (nodes sharing a triangle), sorted and unique.
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for tri in &self.triangles {
            for &i in tri {
                for &j in tri {
                    if i != j {
                        adj[i].push(j);
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Longest triangle edge in the mesh.
    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                let d = self.nodes[tri[k]].dist(&self.nodes[tri[(k + 1) % 3]]);
                m = m.max(d);
            }
        }
        m
    }

    /// Locate a point by exhaustive triangle scan, returning the triangle
    /// index and barycentric coordinates (all >= -1e-12, summing to 1).
    pub fn locate_point(&self, p: &Point2) -> Result<(usize, [f64; 3])> {
        for (t, tri) in self.triangles.iter().enumerate() {
            let (a, b, c) = (&self.nodes[tri[0]], &self.nodes[tri[1]], &self.nodes[tri[2]]);
            let total = signed_area(a, b, c);
            let l0 = signed_area(p, b, c) / total;
            let l1 = signed_area(a, p, c) / total;
            let l2 = 1.0 - l0 - l1;
            if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
                return Ok((t, [l0, l1, l2]));
            }
        }
        Err(WaveError::PointOutsideMesh { x: p.x, y: p.y })
    }

    /// Extract the conforming submesh of triangles fully inside the circle.
    pub fn circle_submesh(&self) -> Result<SubMesh> {
        let tris: Vec<usize> = (0..self.triangles.len())
            .filter(|&t| self.triangles[t].iter().all(|&n| self.node_markers[n].in_circle))
            .collect();
        if tris.is_empty() {
            return Err(WaveError::InvalidGeometry("no triangles inside the circle".into()));
        }
        let mut to_global = Vec::new();
        {
            let mut used = vec![false; self.nodes.len()];
            for &t in &tris {
                for &n in &self.triangles[t] {
                    used[n] = true;
                }
            }
            for (n, u) in used.iter().enumerate() {
                if *u {
                    to_global.push(n);
                }
            }
        }
        let mut local = vec![usize::MAX; self.nodes.len()];
        for (l, &g) in to_global.iter().enumerate() {
            local[g] = l;
        }
        let nodes: Vec<Point2> = to_global.iter().map(|&g| self.nodes[g]).collect();
        let triangles: Vec<[usize; 3]> = tris
            .iter()
            .map(|&t| {
                let tri = self.triangles[t];
                [local[tri[0]], local[tri[1]], local[tri[2]]]
            })
            .collect();
        let node_markers: Vec<NodeMarkers> = to_global.iter().map(|&g| self.node_markers[g]).collect();
        let mut mesh = TriMesh { nodes, triangles, boundary_edges: Vec::new(), node_markers };
        // submesh boundary = circle interface
        let mut edge_tris: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_tris.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        for (&(a, b), ts) in &edge_tris {
            if ts.len() == 1 {
                mesh.boundary_edges.push(BoundaryEdge { nodes: [a, b], marker: EdgeMarker::Circle, triangle: ts[0] });
            }
        }
        Ok(SubMesh { mesh, to_global })
    }
}

fn on_rect_boundary(p: &Point2, rect: &Rect) -> bool {
    (p.x - rect.xmin).abs() <= COINCIDENCE_TOL
        || (p.x - rect.xmax).abs() <= COINCIDENCE_TOL
        || (p.y - rect.ymin).abs() <= COINCIDENCE_TOL
        || (p.y - rect.ymax).abs() <= COINCIDENCE_TOL
}

/// Submesh with the mapping of its local node ids back to the parent mesh.
#[derive(Clone, Debug)]
pub struct SubMesh {
    pub mesh: TriMesh,
    pub to_global: Vec<usize>,
}

impl SubMesh {
    pub fn restrict(&self, global_field: &[f64]) -> Vec<f64> {
        self.to_global.iter().map(|&g| global_field[g]).collect()
    }

    /// Scatter a local field into a full-mesh field initialized to `fill`.
    pub fn embed(&self, local_field: &[f64], n_global: usize, fill: f64) -> Vec<f64> {
        let mut out = vec![fill; n_global];
        for (l, &g) in self.to_global.iter().enumerate() {
            out[g] = local_field[l];
        }
        out
    }
}

/// Uniform rectangular grid of the finite difference collar.
#[derive(Clone, Copy, Debug)]
pub struct StructuredGrid {
    pub origin: Point2,
    pub spacing: f64,
    /// cells per axis; nodes are (nx + 1) x (ny + 1)
    pub nx: usize,
    pub ny: usize,
}

impl StructuredGrid {
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn pos(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + i as f64 * self.spacing,
            self.origin.y + j as f64 * self.spacing,
        )
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.x + self.nx as f64 * self.spacing,
            self.origin.y,
            self.origin.y + self.ny as f64 * self.spacing,
        )
    }
}

/// Update role of a structured-grid node in the hybrid scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridRole {
    /// interior of G \ Omega: standard five-point update
    Exterior,
    /// top side of G (drive / absorbing)
    GTop,
    /// bottom side of G (absorbing)
    GBottom,
    /// left or right side of G (rigid Neumann)
    GSide,
    /// coincident with the FEM outer boundary; five-point update, value
    /// copied to the FEM mesh after each step
    OmegaBoundary,
    /// one cell inside Omega; receives the FEM value after each step
    OverlapInner,
    /// deeper inside Omega; not used by the finite difference update
    Unused,
}

/// Coincident node pair in the exchange band.
#[derive(Clone, Copy, Debug)]
pub struct OverlapPair {
    pub grid: usize,
    pub fem: usize,
    /// true: node on the FEM outer boundary (grid -> FEM copy);
    /// false: one layer inside (FEM -> grid copy)
    pub outer_layer: bool,
}

/// The full hybrid geometry: collar grid, FEM mesh and exchange maps.
#[derive(Clone, Debug)]
pub struct HybridDomain {
    pub grid: StructuredGrid,
    pub fem: TriMesh,
    pub overlap_map: Vec<OverlapPair>,
    pub grid_roles: Vec<GridRole>,
    pub omega: Rect,
    pub circle: Circle,
    pub h: f64,
}

fn is_multiple(len: f64, h: f64) -> bool {
    let n = (len / h).round();
    (len - n * h).abs() <= 1e-9 * len.abs().max(1.0)
}

/// Build the hybrid domain: structured grid over all of G with the
/// interior masked, FEM mesh over Omega, and the one-cell overlap maps.
pub fn build_hybrid(g_bounds: &Rect, omega_bounds: &Rect, circle: &Circle, h: f64) -> Result<HybridDomain> {
    build_hybrid_opts(g_bounds, omega_bounds, circle, h, true)
}

/// As `build_hybrid` but optionally without circle snapping (used to test
/// the overlap exchange on a fully structured FEM region).
pub fn build_hybrid_opts(
    g_bounds: &Rect,
    omega_bounds: &Rect,
    circle: &Circle,
    h: f64,
    resolve_circle: bool,
) -> Result<HybridDomain> {
    if h <= 0.0 {
        return Err(WaveError::InvalidGeometry(format!("spacing must be positive, got {h}")));
    }
    if !g_bounds.strictly_contains(omega_bounds) {
        return Err(WaveError::InvalidGeometry(
            "the FEM subdomain must lie strictly inside the computational domain".into(),
        ));
    }
    if circle.boundary_gap(omega_bounds) <= 0.0 {
        return Err(WaveError::InvalidGeometry(
            "the circle must lie strictly inside the FEM subdomain".into(),
        ));
    }
    let gap = g_bounds.boundary_gap(omega_bounds);
    if gap < h - 1e-12 {
        return Err(WaveError::MeshTooCoarse(format!(
            "spacing {h} exceeds the collar gap {gap}"
        )));
    }
    if resolve_circle && circle.boundary_gap(omega_bounds) < 2.0 * h - 1e-12 {
        return Err(WaveError::MeshTooCoarse(format!(
            "circle must stay at least two cells ({}) away from the FEM boundary",
            2.0 * h
        )));
    }
    for len in [g_bounds.width(), g_bounds.height(), omega_bounds.width(), omega_bounds.height()] {
        if !is_multiple(len, h) {
            return Err(WaveError::InvalidGeometry(format!(
                "domain extent {len} is not a multiple of the spacing {h}"
            )));
        }
    }
    for offset in [
        omega_bounds.xmin - g_bounds.xmin,
        omega_bounds.ymin - g_bounds.ymin,
    ] {
        if !is_multiple(offset, h) {
            return Err(WaveError::InvalidGeometry(format!(
                "FEM subdomain offset {offset} is not aligned with the grid spacing {h}"
            )));
        }
    }

    let nx = (g_bounds.width() / h).round() as usize;
    let ny = (g_bounds.height() / h).round() as usize;
    let grid = StructuredGrid {
        origin: Point2::new(g_bounds.xmin, g_bounds.ymin),
        spacing: h,
        nx,
        ny,
    };
    let fem = TriMesh::structured(omega_bounds, h, if resolve_circle { Some(circle) } else { None })?;
    if resolve_circle {
        if fem.max_edge_length() > 2.0 * h {
            return Err(WaveError::InvalidGeometry(format!(
                "snapped mesh contains an edge longer than 2 h = {}",
                2.0 * h
            )));
        }
        if !fem.node_markers.iter().any(|m| m.on_circle) {
            return Err(WaveError::MeshTooCoarse("circle not resolved by any node".into()));
        }
    }

    // grid node roles
    let tol = 1e-9 * h;
    let mut roles = Vec::with_capacity(grid.n_nodes());
    for j in 0..=ny {
        for i in 0..=nx {
            let p = grid.pos(i, j);
            let role = if j == ny {
                GridRole::GTop
            } else if j == 0 {
                GridRole::GBottom
            } else if i == 0 || i == nx {
                GridRole::GSide
            } else {
                let inside_x = p.x > omega_bounds.xmin + tol && p.x < omega_bounds.xmax - tol;
                let inside_y = p.y > omega_bounds.ymin + tol && p.y < omega_bounds.ymax - tol;
                if on_rect_boundary_tol(&p, omega_bounds, tol) {
                    GridRole::OmegaBoundary
                } else if inside_x && inside_y {
                    // distance from the FEM boundary in cells
                    let dmin = [
                        p.x - omega_bounds.xmin,
                        omega_bounds.xmax - p.x,
                        p.y - omega_bounds.ymin,
                        omega_bounds.ymax - p.y,
                    ]
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                    if dmin <= h + tol {
                        GridRole::OverlapInner
                    } else {
                        GridRole::Unused
                    }
                } else {
                    GridRole::Exterior
                }
            };
            roles.push(role);
        }
    }

    // coincident-node maps via exact coordinate lookup
    let mut fem_lookup: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let quant = |v: f64| (v / (0.5 * h)).round() as i64;
    for (n, p) in fem.nodes.iter().enumerate() {
        fem_lookup.insert((quant(p.x), quant(p.y)), n);
    }
    let mut overlap_map = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let g = grid.idx(i, j);
            let (role, p) = (roles[g], grid.pos(i, j));
            if role == GridRole::OmegaBoundary || role == GridRole::OverlapInner {
                let fem_node = fem_lookup
                    .get(&(quant(p.x), quant(p.y)))
                    .copied()
                    .filter(|&n| fem.nodes[n].dist(&p) <= COINCIDENCE_TOL)
                    .ok_or_else(|| {
                        WaveError::InvalidGeometry(format!(
                            "no coincident FEM node at overlap grid node ({}, {})",
                            p.x, p.y
                        ))
                    })?;
                overlap_map.push(OverlapPair {
                    grid: g,
                    fem: fem_node,
                    outer_layer: role == GridRole::OmegaBoundary,
                });
            }
        }
    }

    Ok(HybridDomain {
        grid,
        fem,
        overlap_map,
        grid_roles: roles,
        omega: *omega_bounds,
        circle: *circle,
        h,
    })
}

fn on_rect_boundary_tol(p: &Point2, rect: &Rect, tol: f64) -> bool {
    let on_x = (p.x - rect.xmin).abs() <= tol || (p.x - rect.xmax).abs() <= tol;
    let on_y = (p.y - rect.ymin).abs() <= tol || (p.y - rect.ymax).abs() <= tol;
    let in_x = p.x >= rect.xmin - tol && p.x <= rect.xmax + tol;
    let in_y = p.y >= rect.ymin - tol && p.y <= rect.ymax + tol;
    (on_x && in_y) || (on_y && in_x)
}

/// Reference experiment geometry: G = (-0.7, 0.7)^2, Omega = (-0.52, 0.52)^2,
/// circle of radius 0.4 at the origin, spacing 0.02.
pub fn reference_geometry() -> (Rect, Rect, Circle, f64) {
    (
        Rect::new(-0.7, 0.7, -0.7, 0.7),
        Rect::new(-0.52, 0.52, -0.52, 0.52),
        Circle::new(Point2::new(0.0, 0.0), 0.4),
        0.02,
    )
}
