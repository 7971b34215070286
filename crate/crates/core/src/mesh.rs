//! Triangulations of the unit square with newest-vertex bisection, graded
//! interval meshes in the extended direction, and the prism cylinder mesh.
//!
//! Local edge `i` of a triangle is the edge opposite its vertex `i`. The
//! refinement edge is stored by that local index, so the vertex opposite it
//! is the newest vertex ("peak").

use std::collections::{BTreeMap, HashMap};

use crate::error::{ensure, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub refinement_edge: Vec<u8>,
    /// Index of the triangle in the previous mesh this one was cut from.
    pub parent: Vec<Option<usize>>,
}

#[inline]
fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Signed area of `(a, b, c)`; positive when counterclockwise.
#[inline]
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn uniform_tri_mesh(m: usize) -> TriMesh {
    assert!(m >= 1, "uniform_tri_mesh needs m >= 1");
    let n = m + 1;
    let h = 1.0 / m as f64;
    let mut vertices = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            // exact 1.0 on the far boundary
            let x = if j == m { 1.0 } else { j as f64 * h };
            let y = if i == m { 1.0 } else { i as f64 * h };
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * m * m);
    let mut refinement_edge = Vec::with_capacity(2 * m * m);
    for i in 0..m {
        for j in 0..m {
            let v00 = i * n + j;
            let v10 = v00 + 1;
            let v01 = v00 + n;
            let v11 = v01 + 1;
            // hypotenuse v00–v11 is opposite the right-angle vertex
            triangles.push([v00, v10, v11]);
            refinement_edge.push(1);
            triangles.push([v00, v11, v01]);
            refinement_edge.push(2);
        }
    }
    let parent = vec![None; triangles.len()];
    TriMesh { vertices, triangles, refinement_edge, parent }
}

impl TriMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Longest edge length of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        let d = |p: Point, q: Point| (p[0] - q[0]).hypot(p[1] - q[1]);
        d(a, b).max(d(b, c)).max(d(c, a))
    }

    /// Endpoints of the refinement edge and the peak vertex of triangle `t`.
    fn split_data(&self, t: usize) -> (usize, usize, usize) {
        let r = self.refinement_edge[t] as usize;
        let v = self.triangles[t];
        (v[r], v[(r + 1) % 3], v[(r + 2) % 3])
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.num_triangles() {
            let p = self.corners(t);
            for k in 0..3 {
                let a = p[k];
                let b = p[(k + 1) % 3];
                let c = p[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cross = u[0] * v[1] - u[1] * v[0];
                let dotp = u[0] * v[0] + u[1] * v[1];
                best = best.min(cross.abs().atan2(dotp));
            }
        }
        best
    }

    /// Map from undirected edge to the triangles containing it.
    pub fn edge_map(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, v) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(v[(k + 1) % 3], v[(k + 2) % 3])).or_default().push(t);
            }
        }
        map
    }

    /// Checks the structural invariants: positive orientation, every edge
    /// shared by at most two triangles, single-owner edges lying on ∂Ω, and
    /// total area 1.
    pub fn check(&self) -> Result<()> {
        ensure!(
            self.refinement_edge.len() == self.triangles.len()
                && self.parent.len() == self.triangles.len(),
            "per-triangle arrays out of sync"
        );
        for t in 0..self.num_triangles() {
            ensure!(self.area(t) > 0.0, "triangle {t} has non-positive area {}", self.area(t));
            ensure!(self.refinement_edge[t] < 3, "bad refinement edge on triangle {t}");
        }
        let on_boundary = |p: Point| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
        for ((a, b), owners) in self.edge_map() {
            ensure!(owners.len() <= 2, "edge ({a},{b}) shared by {} triangles", owners.len());
            if owners.len() == 1 {
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                let same_side = (pa[0] == pb[0] && (pa[0] == 0.0 || pa[0] == 1.0))
                    || (pa[1] == pb[1] && (pa[1] == 0.0 || pa[1] == 1.0));
                ensure!(
                    on_boundary(pa) && on_boundary(pb) && same_side,
                    "interior edge ({a},{b}) has one neighbor (hanging vertex)"
                );
            }
        }
        let area = self.total_area();
        ensure!((area - 1.0).abs() < 1e-12, "triangles cover area {area}, expected 1");
        Ok(())
    }
}

/// Newest-vertex bisection of every marked triangle plus the closure needed
/// to keep the mesh conforming.
pub fn bisect(mesh: &TriMesh, marked: &[usize]) -> Result<TriMesh> {
    for &t in marked {
        ensure!(t < mesh.num_triangles(), "marked triangle {t} out of range");
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }
    let edges = mesh.edge_map();
    let ref_edge = |t: usize| {
        let (_, a, b) = mesh.split_data(t);
        edge_key(a, b)
    };

    // closure: a triangle with any marked edge must also split its refinement edge
    let mut marked_edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut queue: Vec<(usize, usize)> = Vec::new();
    for &t in marked {
        let e = ref_edge(t);
        if marked_edges.insert(e, usize::MAX).is_none() {
            queue.push(e);
        }
    }
    while let Some(e) = queue.pop() {
        for &t in &edges[&e] {
            let r = ref_edge(t);
            if !marked_edges.contains_key(&r) {
                marked_edges.insert(r, usize::MAX);
                queue.push(r);
            }
        }
    }

    let mut vertices = mesh.vertices.clone();
    for (&(a, b), slot) in marked_edges.iter_mut() {
        let (pa, pb) = (vertices[a], vertices[b]);
        *slot = vertices.len();
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
    }

    let mut out = TriMesh {
        vertices,
        triangles: Vec::with_capacity(mesh.num_triangles() + 2 * marked_edges.len()),
        refinement_edge: Vec::new(),
        parent: Vec::new(),
    };
    for t in 0..mesh.num_triangles() {
        let (peak, a, b) = mesh.split_data(t);
        split_recursive(&mut out, &marked_edges, [peak, a, b], t);
    }
    Ok(out)
}

/// Emits `(peak, a, b)` (refinement edge `a–b`), splitting while its
/// refinement edge carries a midpoint.
fn split_recursive(
    out: &mut TriMesh,
    midpoints: &BTreeMap<(usize, usize), usize>,
    tri: [usize; 3],
    origin: usize,
) {
    let [peak, a, b] = tri;
    match midpoints.get(&edge_key(a, b)) {
        Some(&m) => {
            // children (peak, a, m) and (b, peak, m); m becomes the peak of each
            split_recursive(out, midpoints, [m, peak, a], origin);
            split_recursive(out, midpoints, [m, b, peak], origin);
        }
        None => {
            out.triangles.push([peak, a, b]);
            out.refinement_edge.push(0);
            out.parent.push(Some(origin));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradedIntervalMesh {
    pub nodes: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
}

impl GradedIntervalMesh {
    /// Number of intervals `K`.
    pub fn num_intervals(&self) -> usize {
        self.nodes.len() - 1
    }
}

pub fn graded_interval_mesh(k: usize, gamma: f64, tau: f64) -> Result<GradedIntervalMesh> {
    ensure!(k >= 1, "need at least one interval");
    ensure!(gamma >= 1.0, "grading exponent must be >= 1, got {gamma}");
    ensure!(tau > 0.0 && tau.is_finite(), "truncation height must be positive, got {tau}");
    let mut nodes: Vec<f64> = (0..=k).map(|i| tau * (i as f64 / k as f64).powf(gamma)).collect();
    nodes[k] = tau;
    Ok(GradedIntervalMesh { nodes, tau, gamma })
}

#[derive(Debug, Clone)]
pub struct PrismMesh {
    pub tri: TriMesh,
    pub interval: GradedIntervalMesh,
}

impl PrismMesh {
    pub fn new(tri: TriMesh, interval: GradedIntervalMesh) -> Self {
        Self { tri, interval }
    }

    pub fn num_vertices(&self) -> usize {
        self.tri.num_vertices()
    }

    pub fn num_layers(&self) -> usize {
        self.interval.nodes.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.num_layers() * self.num_vertices()
    }

    /// Global index of vertex `vertex` on layer `layer`; layer 0 is the trace.
    pub fn cylinder_dof(&self, vertex: usize, layer: usize) -> Result<usize> {
        ensure!(vertex < self.num_vertices(), "vertex {vertex} out of range");
        ensure!(layer < self.num_layers(), "layer {layer} out of range");
        Ok(layer * self.num_vertices() + vertex)
    }
}

/// Bucket grid over the unit square for point location.
pub struct PointLocator<'a> {
    mesh: &'a TriMesh,
    n: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        let n = ((mesh.num_triangles() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let mut buckets = vec![Vec::new(); n * n];
        let cell = |v: f64| ((v * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        for t in 0..mesh.num_triangles() {
            let p = mesh.corners(t);
            let (x0, x1) = (p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min), p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min), p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max));
            for i in cell(y0)..=cell(y1) {
                for j in cell(x0)..=cell(x1) {
                    buckets[i * n + j].push(t);
                }
            }
        }
        Self { mesh, n, buckets }
    }

    /// Triangle containing `x` and its barycentric coordinates. Points that
    /// slip outside every candidate get the triangle whose barycentric
    /// coordinates are least negative, with coordinates clipped and
    /// renormalized.
    pub fn locate(&self, x: Point) -> (usize, [f64; 3]) {
        let n = self.n;
        let cell = |v: f64| ((v * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        let cands = &self.buckets[cell(x[1]) * n + cell(x[0])];
        let mut best = (usize::MAX, f64::NEG_INFINITY, [0.0; 3]);
        let scan = |t: usize, best: &mut (usize, f64, [f64; 3])| {
            let bc = self.barycentric(t, x);
            let worst = bc[0].min(bc[1]).min(bc[2]);
            if worst > best.1 {
                *best = (t, worst, bc);
            }
            worst >= -1e-12
        };
        for &t in cands {
            if scan(t, &mut best) {
                return (best.0, best.2);
            }
        }
        if best.0 == usize::MAX {
            for t in 0..self.mesh.num_triangles() {
                if scan(t, &mut best) {
                    break;
                }
            }
        }
        let mut bc = best.2.map(|v| v.max(0.0));
        let s: f64 = bc.iter().sum();
        bc.iter_mut().for_each(|v| *v /= s);
        (best.0, bc)
    }

    fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.mesh.corners(t);
        let area = signed_area(a, b, c);
        [
            signed_area(x, b, c) / area,
            signed_area(a, x, c) / area,
            signed_area(a, b, x) / area,
        ]
    }
}

/// Legacy ASCII VTK writer for triangle meshes with optional cell data.
pub fn to_vtk(mesh: &TriMesh, cell_scalars: &[(&str, &[f64])]) -> String {
    use std::fmt::Write as _;
    let mut s = String::from("# vtk DataFile Version 3.0\ntriangulation\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{:.17e} {:.17e} 0", p[0], p[1]);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    if !cell_scalars.is_empty() {
        let _ = writeln!(s, "CELL_DATA {nt}");
        for (name, vals) in cell_scalars {
            assert_eq!(vals.len(), nt, "cell data {name} has wrong length");
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in vals.iter() {
                let _ = writeln!(s, "{v:.17e}");
            }
        }
    }
    s
}
