//! Structured triangulations of the unit square and nested coarse
//! observation lattices.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Boundary classification of a vertex or edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// The moving top wall `y = 1`, including both top corners.
    Lid,
    /// The no-slip walls `x = 0`, `x = 1` and `y = 0`.
    Wall,
    Interior,
}

impl BoundaryTag {
    pub fn is_boundary(self) -> bool {
        !matches!(self, BoundaryTag::Interior)
    }

    fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Lid => "lid",
            BoundaryTag::Wall => "wall",
            BoundaryTag::Interior => "interior",
        }
    }
}

/// A conforming triangulation of `[0,1]^2` built from an `n x n` grid of
/// square cells, each cut along its bottom-left to top-right diagonal.
#[derive(Clone, Debug)]
pub struct Mesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    /// Per triangle, the edges opposite to local vertices 0, 1, 2.
    triangle_edges: Vec<[usize; 3]>,
    vertex_tags: Vec<BoundaryTag>,
    edge_tags: Vec<BoundaryTag>,
}

/// Lattice coordinate `i / n`. Both the fine and the coarse grids go through
/// this function so that nested lattice points agree bitwise.
#[inline]
pub fn lattice_coord(i: usize, n: usize) -> f64 {
    i as f64 / n as f64
}

fn classify_vertex(x: f64, y: f64) -> BoundaryTag {
    if y == 1.0 {
        BoundaryTag::Lid
    } else if x == 0.0 || x == 1.0 || y == 0.0 {
        BoundaryTag::Wall
    } else {
        BoundaryTag::Interior
    }
}

fn classify_edge(a: [f64; 2], b: [f64; 2]) -> BoundaryTag {
    if a[1] == 1.0 && b[1] == 1.0 {
        BoundaryTag::Lid
    } else if (a[0] == 0.0 && b[0] == 0.0)
        || (a[0] == 1.0 && b[0] == 1.0)
        || (a[1] == 0.0 && b[1] == 0.0)
    {
        BoundaryTag::Wall
    } else {
        BoundaryTag::Interior
    }
}

/// Right-angled triangulation of `(n+1)^2` grid points with `2 n^2`
/// counterclockwise triangles.
pub fn build_uniform_triangulation(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("mesh resolution must be at least 1".into()));
    }
    let (vertices, triangles) = lattice_triangles(n);

    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * n * n + 2 * n);
    let mut edges = Vec::with_capacity(3 * n * n + 2 * n);
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let mut local = [0usize; 3];
        for (k, slot) in local.iter_mut().enumerate() {
            let a = tri[(k + 1) % 3];
            let b = tri[(k + 2) % 3];
            let key = (a.min(b), a.max(b));
            *slot = *edge_index.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edges.len() - 1
            });
        }
        triangle_edges.push(local);
    }

    let vertex_tags = vertices.iter().map(|p| classify_vertex(p[0], p[1])).collect();
    let edge_tags = edges
        .iter()
        .map(|e| classify_edge(vertices[e[0]], vertices[e[1]]))
        .collect();

    let mesh = Mesh {
        n,
        vertices,
        triangles,
        edges,
        triangle_edges,
        vertex_tags,
        edge_tags,
    };
    debug_assert_eq!(mesh.vertices.len(), (n + 1) * (n + 1));
    debug_assert_eq!(mesh.triangles.len(), 2 * n * n);
    debug_assert_eq!(mesh.edges.len(), 3 * n * n + 2 * n);
    Ok(mesh)
}

fn lattice_triangles(n: usize) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([lattice_coord(i, n), lattice_coord(j, n)]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    (vertices, triangles)
}

impl Mesh {
    /// Number of cells per side.
    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Local edges of each triangle, opposite to local vertices 0, 1, 2.
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn vertex_tag(&self, v: usize) -> BoundaryTag {
        self.vertex_tags[v]
    }

    pub fn edge_tag(&self, e: usize) -> BoundaryTag {
        self.edge_tags[e]
    }

    pub fn vertex_tags(&self) -> &[BoundaryTag] {
        &self.vertex_tags
    }

    pub fn edge_tags(&self) -> &[BoundaryTag] {
        &self.edge_tags
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    /// Index of the grid vertex `(i, j)`.
    pub fn vertex_at(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Plain-text listing with `vtx x y tag` and `tri a b c` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (p, tag) in self.vertices.iter().zip(&self.vertex_tags) {
            let _ = writeln!(out, "vtx {} {} {}", p[0], p[1], tag.as_str());
        }
        for t in &self.triangles {
            let _ = writeln!(out, "tri {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

fn signed_area(vertices: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Coarse observation lattice `tau_H` whose nodes are fine-mesh vertices.
#[derive(Clone, Debug)]
pub struct ObservationNodeSet {
    n_coarse: usize,
    fine_vertex_indices: Vec<usize>,
    coordinates: Vec<[f64; 2]>,
    coarse_triangles: Vec<[usize; 3]>,
}

/// Selects the `(n_H+1)^2` lattice points of spacing `H = 1/n_H` from the
/// fine mesh. `n_H` must divide the fine resolution.
pub fn observation_nodes(fine: &Mesh, n_coarse: usize) -> Result<ObservationNodeSet> {
    let n = fine.resolution();
    if n_coarse == 0 {
        return Err(Error::InvalidArgument("observation resolution must be at least 1".into()));
    }
    if !n.is_multiple_of(n_coarse) {
        return Err(Error::InvalidArgument(format!(
            "observation resolution {n_coarse} does not divide the fine resolution {n}"
        )));
    }
    let stride = n / n_coarse;
    let (coordinates, coarse_triangles) = lattice_triangles(n_coarse);
    let mut fine_vertex_indices = Vec::with_capacity(coordinates.len());
    for j in 0..=n_coarse {
        for i in 0..=n_coarse {
            let v = fine.vertex_at(i * stride, j * stride);
            debug_assert_eq!(fine.vertices()[v], coordinates[j * (n_coarse + 1) + i]);
            fine_vertex_indices.push(v);
        }
    }
    Ok(ObservationNodeSet {
        n_coarse,
        fine_vertex_indices,
        coordinates,
        coarse_triangles,
    })
}

impl ObservationNodeSet {
    pub fn len(&self) -> usize {
        self.fine_vertex_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine_vertex_indices.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.n_coarse
    }

    /// Coarse spacing `H`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    pub fn fine_vertex_indices(&self) -> &[usize] {
        &self.fine_vertex_indices
    }

    pub fn coordinates(&self) -> &[[f64; 2]] {
        &self.coordinates
    }

    /// Triangles over node positions (indices into this set, not the fine mesh).
    pub fn coarse_triangles(&self) -> &[[usize; 3]] {
        &self.coarse_triangles
    }

    pub fn coarse_signed_area(&self, t: usize) -> f64 {
        signed_area(&self.coordinates, self.coarse_triangles[t])
    }

    /// Coarse triangle containing `p` together with its barycentric
    /// coordinates.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        let nh = self.n_coarse;
        let fx = (p[0] * nh as f64).clamp(0.0, nh as f64);
        let fy = (p[1] * nh as f64).clamp(0.0, nh as f64);
        let i = (fx.floor() as usize).min(nh - 1);
        let j = (fy.floor() as usize).min(nh - 1);
        let (s, t) = (fx - i as f64, fy - j as f64);
        let cell = 2 * (j * nh + i);
        // lower triangle (v00, v10, v11) when s >= t
        if s >= t {
            (cell, [1.0 - s, s - t, t])
        } else {
            (cell + 1, [1.0 - t, s, t - s])
        }
    }

    /// Piecewise-linear interpolant of nodal values evaluated at `p`.
    pub fn interpolate(&self, nodal: &[f64], p: [f64; 2]) -> f64 {
        let (t, bary) = self.locate(p);
        let tri = self.coarse_triangles[t];
        bary[0] * nodal[tri[0]] + bary[1] * nodal[tri[1]] + bary[2] * nodal[tri[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_mesh() {
        let m = build_uniform_triangulation(1).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles().len(), 2);
        assert_eq!(m.total_area(), 1.0);
    }

    #[test]
    fn counts_at_64() {
        let m = build_uniform_triangulation(64).unwrap();
        assert_eq!(m.vertices().len(), 4225);
        assert_eq!(m.triangles().len(), 8192);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        assert!((0..m.triangles().len()).all(|t| m.signed_area(t) > 0.0));
    }

    #[test]
    fn rejects_zero() {
        assert!(build_uniform_triangulation(0).is_err());
    }

    #[test]
    fn tags() {
        let m = build_uniform_triangulation(2).unwrap();
        assert_eq!(m.vertex_tag(m.vertex_at(1, 2)), BoundaryTag::Lid);
        assert_eq!(m.vertex_tag(m.vertex_at(1, 0)), BoundaryTag::Wall);
        assert_eq!(m.vertex_tag(m.vertex_at(0, 2)), BoundaryTag::Lid);
        assert_eq!(m.vertex_tag(m.vertex_at(2, 2)), BoundaryTag::Lid);
        assert_eq!(m.vertex_tag(m.vertex_at(1, 1)), BoundaryTag::Interior);
        for (k, e) in m.edges().iter().enumerate() {
            let on_boundary =
                m.vertex_tag(e[0]).is_boundary() && m.vertex_tag(e[1]).is_boundary();
            let mid = m.edge_midpoint(k);
            let geometric = mid[0] == 0.0 || mid[0] == 1.0 || mid[1] == 0.0 || mid[1] == 1.0;
            assert_eq!(m.edge_tag(k).is_boundary(), geometric);
            if geometric {
                assert!(on_boundary);
            }
            if mid[1] == 1.0 {
                assert_eq!(m.edge_tag(k), BoundaryTag::Lid);
            }
        }
    }

    #[test]
    fn every_boundary_vertex_has_one_tag() {
        let m = build_uniform_triangulation(8).unwrap();
        for (p, tag) in m.vertices().iter().zip(m.vertex_tags()) {
            let on = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            assert_eq!(on, tag.is_boundary());
        }
    }

    #[test]
    fn edge_midpoints_unique() {
        let m = build_uniform_triangulation(6).unwrap();
        let mut seen = std::collections::HashSet::new();
        for k in 0..m.edges().len() {
            let p = m.edge_midpoint(k);
            assert!(seen.insert((p[0].to_bits(), p[1].to_bits())));
        }
    }

    #[test]
    fn observation_lattice() {
        let m = build_uniform_triangulation(64).unwrap();
        let obs = observation_nodes(&m, 4).unwrap();
        assert_eq!(obs.len(), 25);
        assert_eq!(obs.spacing(), 0.25);
        for (k, &v) in obs.fine_vertex_indices().iter().enumerate() {
            let p = m.vertices()[v];
            assert_eq!(p[0].to_bits(), obs.coordinates()[k][0].to_bits());
            assert_eq!(p[1].to_bits(), obs.coordinates()[k][1].to_bits());
        }
        let area: f64 = (0..obs.coarse_triangles().len()).map(|t| obs.coarse_signed_area(t)).sum();
        assert!((area - 1.0).abs() < 1e-12);

        let full = observation_nodes(&m, 64).unwrap();
        assert_eq!(full.len(), m.vertices().len());
        assert_eq!(full.spacing(), m.h());

        assert!(observation_nodes(&m, 3).is_err());
    }

    #[test]
    fn locate_reproduces_linears() {
        let m = build_uniform_triangulation(8).unwrap();
        let obs = observation_nodes(&m, 2).unwrap();
        let f = |p: [f64; 2]| 1.0 + 2.0 * p[0] - 3.0 * p[1];
        let nodal: Vec<f64> = obs.coordinates().iter().map(|&p| f(p)).collect();
        for p in m.vertices() {
            assert!((obs.interpolate(&nodal, *p) - f(*p)).abs() < 1e-13);
        }
    }

    #[test]
    fn dump_lists_everything() {
        let m = build_uniform_triangulation(1).unwrap();
        let d = m.dump();
        assert_eq!(d.lines().filter(|l| l.starts_with("vtx")).count(), 4);
        assert_eq!(d.lines().filter(|l| l.starts_with("tri")).count(), 2);
        assert!(d.contains("vtx 0 1 lid"));
    }
}
