//! Triangle-mesh connectivity with stored edge orientations and quadrisection.
//!
//! Faces are CCW vertex triples. Local edge `k` of a face runs from corner `k`
//! to corner `k + 1`. Every edge has a stored direction; a face whose local edge
//! agrees with that direction is the edge's left face and has sign `+1` on it.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// CCW one-ring of a vertex.
///
/// `faces[i]` is the face `(v, neighbors[i], neighbors[i + 1])`. Interior rings
/// have as many faces as neighbors (indices wrap); boundary rings start at a
/// boundary edge and have one more neighbor than faces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ring {
    pub neighbors: Vec<usize>,
    pub faces: Vec<usize>,
    pub boundary: bool,
}

impl Ring {
    pub fn valence(&self) -> usize {
        self.neighbors.len()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub positions: Vec<Point>,
    pub faces: Vec<[usize; 3]>,
    /// Stored direction of each edge as `[tail, head]`.
    pub edges: Vec<[usize; 2]>,
    /// `face_edges[f][k]` is the edge between corners `k` and `k + 1`.
    pub face_edges: Vec<[usize; 3]>,
    pub face_signs: Vec<[f64; 3]>,
    /// `[left, right]`; boundary edges have exactly one of the two.
    pub edge_faces: Vec<[Option<usize>; 2]>,
    pub boundary_vertex: Vec<bool>,
    pub boundary_edge: Vec<bool>,
    pub rings: Vec<Ring>,
    lookup: HashMap<(usize, usize), usize>,
}

/// Index maps between a coarse mesh and its quadrisection.
#[derive(Clone, Debug)]
pub struct RefinementMaps {
    pub even_vertex_map: Vec<usize>,
    pub odd_vertex_map: Vec<usize>,
    /// Children of coarse edge `tail -> head`: `[tail -> mid, mid -> head]`.
    pub even_edge_map: Vec<[usize; 2]>,
    /// `odd_edge_map[f][k]` is the interior fine edge parallel to local edge `k`.
    pub odd_edge_map: Vec<[usize; 3]>,
    /// Fine faces `(a, ab, ca)`, `(b, bc, ab)`, `(c, ca, bc)`, `(ab, bc, ca)`.
    pub face_map: Vec<[usize; 4]>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh with edges oriented from the lower to the higher vertex index.
    pub fn new(positions: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_orientation(positions, faces, |a, b| (a, b))
    }

    /// Builds a mesh whose edge directions come from `orient(lo, hi)`, which
    /// must return either `(lo, hi)` or `(hi, lo)`.
    pub fn with_orientation<F>(positions: Vec<Point>, faces: Vec<[usize; 3]>, orient: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> (usize, usize),
    {
        let nv = positions.len();
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                if v >= nv {
                    return Err(Error::IndexOutOfRange { face: f, vertex: v, count: nv });
                }
            }
        }
        let diag = bbox_diagonal(&positions);
        for (f, &[a, b, c]) in faces.iter().enumerate() {
            let area = 0.5 * (positions[b] - positions[a]).cross(&(positions[c] - positions[a])).norm();
            if a == b || b == c || a == c || area <= 1e-12 * diag * diag {
                return Err(Error::DegenerateFace { face: f, area });
            }
        }

        let mut lookup = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_faces: Vec<[Option<usize>; 2]> = Vec::new();
        let mut face_edges = Vec::with_capacity(faces.len());
        let mut face_signs = Vec::with_capacity(faces.len());
        for (f, face) in faces.iter().enumerate() {
            let mut fe = [0; 3];
            let mut fs = [0.0; 3];
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                let kk = key(a, b);
                let e = *lookup.entry(kk).or_insert_with(|| {
                    let (t, h) = orient(kk.0, kk.1);
                    debug_assert!(key(t, h) == kk);
                    edges.push([t, h]);
                    edge_faces.push([None, None]);
                    edges.len() - 1
                });
                let side = if edges[e] == [a, b] { 0 } else { 1 };
                if edge_faces[e][side].is_some() {
                    let other = edge_faces[e][1 - side];
                    return Err(if other.is_some() {
                        Error::NonManifold(kk.0, kk.1)
                    } else {
                        Error::InconsistentOrientation(kk.0, kk.1)
                    });
                }
                edge_faces[e][side] = Some(f);
                fe[k] = e;
                fs[k] = if side == 0 { 1.0 } else { -1.0 };
            }
            face_edges.push(fe);
            face_signs.push(fs);
        }

        let boundary_edge: Vec<bool> = edge_faces.iter().map(|lr| lr[0].is_none() || lr[1].is_none()).collect();
        let mut boundary_vertex = vec![false; nv];
        for (e, &[a, b]) in edges.iter().enumerate() {
            if boundary_edge[e] {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }

        let mut vertex_faces = vec![Vec::new(); nv];
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                vertex_faces[v].push(f);
            }
        }
        let mut rings = Vec::with_capacity(nv);
        for v in 0..nv {
            if vertex_faces[v].is_empty() {
                return Err(Error::IsolatedVertex(v));
            }
            rings.push(build_ring(v, &vertex_faces[v], &faces)?);
        }

        Ok(Mesh {
            positions,
            faces,
            edges,
            face_edges,
            face_signs,
            edge_faces,
            boundary_vertex,
            boundary_edge,
            rings,
            lookup,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64
    }

    pub fn is_closed(&self) -> bool {
        !self.boundary_edge.iter().any(|&b| b)
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<usize> {
        self.lookup.get(&key(a, b)).copied()
    }

    /// `+1` if the edge between `a` and `b` is stored as `a -> b`, else `-1`.
    pub fn edge_sign(&self, a: usize, b: usize) -> f64 {
        let e = self.edge(a, b).expect("vertices are not adjacent");
        if self.edges[e][0] == a {
            1.0
        } else {
            -1.0
        }
    }

    pub fn left(&self, e: usize) -> Option<usize> {
        self.edge_faces[e][0]
    }

    pub fn right(&self, e: usize) -> Option<usize> {
        self.edge_faces[e][1]
    }

    /// The face across edge `e` from face `f`.
    pub fn other_face(&self, e: usize, f: usize) -> Option<usize> {
        match self.edge_faces[e] {
            [Some(l), r] if l == f => r,
            [l, Some(r)] if r == f => l,
            _ => None,
        }
    }

    /// Local index of edge `e` in face `f`.
    pub fn local_edge(&self, f: usize, e: usize) -> usize {
        self.face_edges[f].iter().position(|&x| x == e).expect("edge not in face")
    }

    /// The vertex of face `f` that is neither `a` nor `b`.
    pub fn third_vertex(&self, f: usize, a: usize, b: usize) -> usize {
        *self.faces[f].iter().find(|&&x| x != a && x != b).expect("face has no third vertex")
    }

    /// Face corners rotated so that `v` comes first.
    pub fn face_from(&self, f: usize, v: usize) -> [usize; 3] {
        let face = self.faces[f];
        let k = face.iter().position(|&x| x == v).expect("vertex not in face");
        [face[k], face[(k + 1) % 3], face[(k + 2) % 3]]
    }

    /// Stored-direction edge vector `head - tail`.
    pub fn edge_vector(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        self.positions[b] - self.positions[a]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn face_normal(&self, f: usize) -> Point {
        self.face_cross(f).normalize()
    }

    fn face_cross(&self, f: usize) -> Point {
        let [a, b, c] = self.faces[f];
        let p = &self.positions;
        (p[b] - p[a]).cross(&(p[c] - p[a]))
    }

    pub fn face_centroid(&self, f: usize) -> Point {
        let [a, b, c] = self.faces[f];
        (self.positions[a] + self.positions[b] + self.positions[c]) / 3.0
    }

    /// Cotangents of the angles at the three corners of face `f`.
    pub fn corner_cotangents(&self, f: usize) -> [f64; 3] {
        let p = &self.positions;
        let face = self.faces[f];
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let x = p[face[k]];
            let u = p[face[(k + 1) % 3]] - x;
            let w = p[face[(k + 2) % 3]] - x;
            *o = u.dot(&w) / u.cross(&w).norm();
        }
        out
    }

    /// Cotangent of the angle opposite local edge `k` (the angle at corner `k + 2`).
    pub fn opposite_cotangents(&self, f: usize) -> [f64; 3] {
        let c = self.corner_cotangents(f);
        [c[2], c[0], c[1]]
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.positions)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let s: f64 = (0..self.n_edges()).map(|e| self.edge_vector(e).norm()).sum();
        s / self.n_edges() as f64
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_faces()).map(|f| self.face_area(f)).sum()
    }

    /// Number of closed boundary loops.
    pub fn boundary_loops(&self) -> usize {
        let mut next = HashMap::new();
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if self.boundary_edge[e] {
                if self.left(e).is_some() {
                    next.insert(a, b);
                } else {
                    next.insert(b, a);
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut loops = 0;
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        for s in starts {
            if seen.contains(&s) {
                continue;
            }
            loops += 1;
            let mut v = s;
            while seen.insert(v) {
                v = next[&v];
            }
        }
        loops
    }

    /// Number of connected components (by face adjacency).
    pub fn components(&self) -> usize {
        let mut comp = vec![usize::MAX; self.n_faces()];
        let mut count = 0;
        for s in 0..self.n_faces() {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = count;
            while let Some(f) = stack.pop() {
                for &e in &self.face_edges[f] {
                    if let Some(g) = self.other_face(e, f) {
                        if comp[g] == usize::MAX {
                            comp[g] = count;
                            stack.push(g);
                        }
                    }
                }
            }
            count += 1;
        }
        count
    }

    /// Topological quadrisection with midpoint positions.
    pub fn quadrisect(&self) -> Result<(Mesh, RefinementMaps)> {
        let nv = self.n_vertices();
        let mid = |e: usize| nv + e;
        let mut positions = self.positions.clone();
        for &[a, b] in &self.edges {
            positions.push(0.5 * (self.positions[a] + self.positions[b]));
        }
        let mut faces = Vec::with_capacity(4 * self.n_faces());
        for (f, &[a, b, c]) in self.faces.iter().enumerate() {
            let [eab, ebc, eca] = self.face_edges[f];
            let (ab, bc, ca) = (mid(eab), mid(ebc), mid(eca));
            faces.push([a, ab, ca]);
            faces.push([b, bc, ab]);
            faces.push([c, ca, bc]);
            faces.push([ab, bc, ca]);
        }
        let mut orient = HashMap::new();
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            let m = mid(e);
            orient.insert(key(a, m), (a, m));
            orient.insert(key(m, b), (m, b));
        }
        let fine = Mesh::with_orientation(positions, faces, |lo, hi| *orient.get(&(lo, hi)).unwrap_or(&(lo, hi)))?;

        let even_edge_map = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &[a, b])| [fine.edge(a, mid(e)).unwrap(), fine.edge(mid(e), b).unwrap()])
            .collect();
        let odd_edge_map = self
            .face_edges
            .iter()
            .map(|fe| {
                let m = [mid(fe[0]), mid(fe[1]), mid(fe[2])];
                [fine.edge(m[1], m[2]).unwrap(), fine.edge(m[2], m[0]).unwrap(), fine.edge(m[0], m[1]).unwrap()]
            })
            .collect();
        let maps = RefinementMaps {
            even_vertex_map: (0..nv).collect(),
            odd_vertex_map: (0..self.n_edges()).map(mid).collect(),
            even_edge_map,
            odd_edge_map,
            face_map: (0..self.n_faces()).map(|f| [4 * f, 4 * f + 1, 4 * f + 2, 4 * f + 3]).collect(),
        };
        Ok((fine, maps))
    }

    /// Replaces vertex positions, keeping connectivity.
    pub fn with_positions(&self, positions: Vec<Point>) -> Result<Mesh> {
        if positions.len() != self.n_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions for {} vertices",
                positions.len(),
                self.n_vertices()
            )));
        }
        let edges = &self.edges;
        let lookup = &self.lookup;
        Mesh::with_orientation(positions, self.faces.clone(), |lo, hi| {
            let [a, b] = edges[lookup[&(lo, hi)]];
            (a, b)
        })
    }
}

fn bbox_diagonal(positions: &[Point]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let mut lo = positions[0];
    let mut hi = positions[0];
    for p in positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn build_ring(v: usize, incident: &[usize], faces: &[[usize; 3]]) -> Result<Ring> {
    // next[a] = (b, f) for each face (v, a, b)
    let mut next: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut targets = std::collections::HashSet::new();
    for &f in incident {
        let face = faces[f];
        let k = face.iter().position(|&x| x == v).unwrap();
        let (a, b) = (face[(k + 1) % 3], face[(k + 2) % 3]);
        if next.insert(a, (b, f)).is_some() {
            return Err(Error::NonManifoldVertex(v));
        }
        targets.insert(b);
    }
    let mut starts: Vec<usize> = next.keys().copied().filter(|a| !targets.contains(a)).collect();
    starts.sort_unstable();
    let boundary = !starts.is_empty();
    if starts.len() > 1 {
        return Err(Error::NonManifoldVertex(v));
    }
    let start = if boundary { starts[0] } else { *next.keys().min().unwrap() };
    let mut neighbors = vec![start];
    let mut ring_faces = Vec::new();
    let mut cur = start;
    while let Some(&(b, f)) = next.get(&cur) {
        ring_faces.push(f);
        if b == start {
            break;
        }
        neighbors.push(b);
        cur = b;
        if ring_faces.len() > incident.len() {
            return Err(Error::NonManifoldVertex(v));
        }
    }
    if ring_faces.len() != incident.len() {
        return Err(Error::NonManifoldVertex(v));
    }
    Ok(Ring { neighbors, faces: ring_faces, boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn single_triangle_counts() {
        let m = shapes::triangle();
        assert_eq!((m.n_vertices(), m.n_edges(), m.n_faces()), (3, 3, 1));
        assert!(m.boundary_edge.iter().all(|&b| b));
        assert_eq!(m.face_signs[0], [1.0, 1.0, -1.0]);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn tetrahedron_is_closed() {
        let m = shapes::tetrahedron();
        assert_eq!(m.n_edges(), 6);
        assert!(m.is_closed());
        for lr in &m.edge_faces {
            assert!(lr[0].is_some() && lr[1].is_some());
        }
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn flap_shared_edge_signs() {
        let m = shapes::flap();
        let e = m.edge(1, 2).unwrap();
        let (l, r) = (m.left(e).unwrap(), m.right(e).unwrap());
        assert_eq!(m.face_signs[l][m.local_edge(l, e)], 1.0);
        assert_eq!(m.face_signs[r][m.local_edge(r, e)], -1.0);
        assert_eq!(m.edges[e], [1, 2]);
    }

    #[test]
    fn signed_edges_close_per_face() {
        let m = shapes::icosphere(1);
        for f in 0..m.n_faces() {
            let s: Point = (0..3).map(|k| m.face_signs[f][k] * m.edge_vector(m.face_edges[f][k])).sum();
            assert!(s.norm() <= 1e-12 * m.bbox_diagonal());
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = vec![Point::zeros(), Point::x(), Point::y(), Point::z()];
        assert!(matches!(Mesh::new(p.clone(), vec![[0, 1, 2], [0, 1, 3]]), Err(Error::InconsistentOrientation(0, 1))));
        assert!(matches!(
            Mesh::new(p.clone(), vec![[0, 1, 2], [1, 0, 3], [0, 1, 3]]),
            Err(Error::NonManifold(0, 1)) | Err(Error::InconsistentOrientation(0, 1))
        ));
        assert!(matches!(Mesh::new(p.clone(), vec![[0, 1, 1]]), Err(Error::DegenerateFace { .. })));
        let line = vec![Point::zeros(), Point::x(), 2.0 * Point::x()];
        assert!(matches!(Mesh::new(line, vec![[0, 1, 2]]), Err(Error::DegenerateFace { .. })));
        assert!(matches!(Mesh::new(p, vec![[0, 1, 7]]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn quadrisect_counts() {
        let (f, _) = shapes::tetrahedron().quadrisect().unwrap();
        assert_eq!((f.n_vertices(), f.n_edges(), f.n_faces()), (10, 24, 16));
        let (f, _) = shapes::triangle().quadrisect().unwrap();
        assert_eq!((f.n_vertices(), f.n_edges(), f.n_faces()), (6, 9, 4));
        assert_eq!(f.boundary_edge.iter().filter(|&&b| b).count(), 6);
    }

    #[test]
    fn quadrisect_flap_shared_edge() {
        let c = shapes::flap();
        let (f, maps) = c.quadrisect().unwrap();
        assert_eq!(f.n_faces(), 8);
        let e = c.edge(1, 2).unwrap();
        for &child in &maps.even_edge_map[e] {
            assert!(!f.boundary_edge[child]);
        }
    }

    #[test]
    fn quadrisect_inherits_orientation() {
        let c = shapes::octahedron();
        let (f, maps) = c.quadrisect().unwrap();
        for (e, &[a, b]) in c.edges.iter().enumerate() {
            let m = maps.odd_vertex_map[e];
            assert_eq!(f.edges[maps.even_edge_map[e][0]], [a, m]);
            assert_eq!(f.edges[maps.even_edge_map[e][1]], [m, b]);
        }
        for fe in &maps.odd_edge_map {
            for &e in fe {
                assert!(f.edges[e][0] < f.edges[e][1]);
            }
        }
    }

    #[test]
    fn rebuild_is_idempotent() {
        let m = shapes::torus(6, 4, 1.0, 0.4);
        let r = Mesh::new(m.positions.clone(), m.faces.clone()).unwrap();
        assert_eq!(m.edges, r.edges);
        assert_eq!(m.edge_faces, r.edge_faces);
        assert_eq!(m.face_signs, r.face_signs);
        assert_eq!(m.rings, r.rings);
    }

    #[test]
    fn euler_and_boundaries_preserved() {
        for m in [shapes::torus(6, 4, 1.0, 0.4), shapes::disk(2), shapes::flap()] {
            let (f, _) = m.quadrisect().unwrap();
            assert_eq!(f.euler_characteristic(), m.euler_characteristic());
            assert_eq!(f.boundary_loops(), m.boundary_loops());
        }
        assert_eq!(shapes::torus(6, 4, 1.0, 0.4).euler_characteristic(), 0);
    }

    #[test]
    fn rings_are_ccw() {
        let m = shapes::disk(2);
        for v in 0..m.n_vertices() {
            let r = &m.rings[v];
            for (i, &f) in r.faces.iter().enumerate() {
                let w = r.neighbors[i];
                let w2 = r.neighbors[(i + 1) % r.valence()];
                assert_eq!(m.face_from(f, v), [v, w, w2]);
            }
            assert_eq!(r.boundary, m.boundary_vertex[v]);
        }
    }
}
