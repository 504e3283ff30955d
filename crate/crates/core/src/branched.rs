//! N-directional fields with matchings: singularity indices, combing,
//! unfolding, and differential and subdivision operators on the branched
//! cover.
//!
//! Vector `k` on face `left(e)` is matched to vector `k + I_e` on `right(e)`.
//! Stacked per-vector quantities are sheet-major: entry `(k, f)` of a
//! per-face space lives at block `k·F + f`.

use std::collections::HashMap;

use nalgebra::DVector;
use num_integer::Integer;
use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::halfedge::{curl_gamma, d0_gamma, project_p, project_p_inv, to_mean_curl_op};
use crate::mesh::{Mesh, Point, RefinementMaps};
use crate::operators::{cograd_nonconforming, curl_nc, grad_conforming, rotation_j, Masses};
use crate::sparse::{Space, SparseOperator};
use crate::subdivision::{build_subdivision_set, commutation_report, stencils_for, CommutationReport};

/// Representative of `i mod n` in `(-n/2, n/2]`.
pub fn reduce_matching(i: i64, n: usize) -> i64 {
    let n = n as i64;
    let r = i.rem_euclid(n);
    if 2 * r > n {
        r - n
    } else {
        r
    }
}

#[derive(Clone, Debug)]
pub struct DirectionalField {
    pub n: usize,
    /// `vectors[f·N + k]`.
    pub vectors: Vec<Point>,
    /// `None` exactly on boundary edges.
    pub matching: Vec<Option<i64>>,
}

impl DirectionalField {
    pub fn new(mesh: &Mesh, n: usize, vectors: Vec<Point>, matching: Vec<Option<i64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch("degree N must be at least 1".into()));
        }
        if vectors.len() != n * mesh.n_faces() {
            return Err(Error::DimensionMismatch(format!("{} vectors for N = {n} on {} faces", vectors.len(), mesh.n_faces())));
        }
        let matching = check_matching(mesh, n, matching)?;
        for (i, v) in vectors.iter().enumerate() {
            let f = i / n;
            let r = mesh.face_normal(f).dot(v).abs();
            if r > 1e-10 * v.norm() {
                return Err(Error::NotTangent { face: f, residual: r / v.norm() });
            }
        }
        Ok(DirectionalField { n, vectors, matching })
    }

    /// Field with the identity matching on every interior edge.
    pub fn trivial(mesh: &Mesh, n: usize, vectors: Vec<Point>) -> Result<Self> {
        let matching = trivial_matching(mesh);
        Self::new(mesh, n, vectors, matching)
    }

    pub fn vector(&self, f: usize, k: usize) -> Point {
        self.vectors[f * self.n + k]
    }

    /// Packed halfedge values `Γᴺ`, sheet-major.
    pub fn to_gamma(&self, mesh: &Mesh) -> DVector<f64> {
        let nf = mesh.n_faces();
        let p = project_p(mesh);
        let mut out = DVector::zeros(2 * self.n * nf);
        for k in 0..self.n {
            let x = DVector::from_fn(3 * nf, |i, _| self.vector(i / 3, k)[i % 3]);
            out.rows_mut(2 * k * nf, 2 * nf).copy_from(&p.apply(&x));
        }
        out
    }

    pub fn from_gamma(mesh: &Mesh, n: usize, gamma: &DVector<f64>, matching: Vec<Option<i64>>) -> Result<Self> {
        let nf = mesh.n_faces();
        if gamma.len() != 2 * n * nf {
            return Err(Error::DimensionMismatch(format!("Γᴺ of length {} for N = {n}, {nf} faces", gamma.len())));
        }
        let pinv = project_p_inv(mesh);
        let mut vectors = vec![Point::zeros(); n * nf];
        for k in 0..n {
            let x = pinv.apply(&gamma.rows(2 * k * nf, 2 * nf).into_owned());
            for f in 0..nf {
                vectors[f * n + k] = Point::new(x[3 * f], x[3 * f + 1], x[3 * f + 2]);
            }
        }
        Ok(DirectionalField { n, vectors, matching: check_matching(mesh, n, matching)? })
    }
}

pub fn trivial_matching(mesh: &Mesh) -> Vec<Option<i64>> {
    mesh.boundary_edge.iter().map(|&b| (!b).then_some(0)).collect()
}

fn check_matching(mesh: &Mesh, n: usize, matching: Vec<Option<i64>>) -> Result<Vec<Option<i64>>> {
    if matching.len() != mesh.n_edges() {
        return Err(Error::DimensionMismatch(format!("{} matchings for {} edges", matching.len(), mesh.n_edges())));
    }
    matching
        .into_iter()
        .enumerate()
        .map(|(e, m)| match (m, mesh.boundary_edge[e]) {
            (Some(i), false) => Ok(Some(reduce_matching(i, n))),
            (None, true) => Ok(None),
            (Some(_), true) => Err(Error::DimensionMismatch(format!("boundary edge {e} carries a matching"))),
            (None, false) => Err(Error::DimensionMismatch(format!("interior edge {e} has no matching"))),
        })
        .collect()
}

/// Index shift when crossing edge `e` out of face `from`.
fn transition(mesh: &Mesh, matching: &[Option<i64>], e: usize, from: usize) -> i64 {
    let i = matching[e].unwrap_or(0);
    if mesh.left(e) == Some(from) {
        i
    } else {
        -i
    }
}

/// Shifts `t_i` from ring face `i` to ring face `i + 1` (cyclic for interior
/// vertices).
pub fn ring_transitions(mesh: &Mesh, matching: &[Option<i64>], v: usize) -> Vec<i64> {
    let ring = &mesh.rings[v];
    let d = ring.faces.len();
    let steps = if ring.boundary { d.saturating_sub(1) } else { d };
    (0..steps)
        .map(|i| {
            let spoke = mesh.edge(v, ring.neighbors[(i + 1) % ring.neighbors.len()]).unwrap();
            transition(mesh, matching, spoke, ring.faces[i])
        })
        .collect()
}

/// `(d0ᵀ I)_v`: sum of incident matchings, `+` where `v` is the head.
pub fn ring_shift(mesh: &Mesh, matching: &[Option<i64>], v: usize) -> i64 {
    mesh.rings[v]
        .neighbors
        .iter()
        .map(|&w| {
            let e = mesh.edge(v, w).unwrap();
            let i = matching[e].unwrap_or(0);
            if mesh.edges[e][1] == v {
                i
            } else {
                -i
            }
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexClass {
    Unclassified,
    Regular,
    Integral,
    Fractional,
}

#[derive(Clone, Debug, Serialize)]
pub struct SingularityReport {
    pub n: usize,
    /// Unreduced `(d0ᵀ I)_v`.
    pub shift: Vec<i64>,
    /// `shift / N` reduced into `(-1/2, 1/2]`; `None` on the boundary.
    pub index: Vec<Option<f64>>,
    pub class: Vec<VertexClass>,
}

impl SingularityReport {
    pub fn fractional(&self) -> Vec<usize> {
        (0..self.class.len()).filter(|&v| self.class[v] == VertexClass::Fractional).collect()
    }
}

pub fn vertex_indices(mesh: &Mesh, field: &DirectionalField) -> SingularityReport {
    matching_indices(mesh, &field.matching, field.n)
}

pub fn matching_indices(mesh: &Mesh, matching: &[Option<i64>], n: usize) -> SingularityReport {
    let nv = mesh.n_vertices();
    let mut shift = Vec::with_capacity(nv);
    let mut index = Vec::with_capacity(nv);
    let mut class = Vec::with_capacity(nv);
    for v in 0..nv {
        let s = ring_shift(mesh, matching, v);
        shift.push(s);
        if mesh.boundary_vertex[v] {
            index.push(None);
            class.push(VertexClass::Unclassified);
            continue;
        }
        let r = s.rem_euclid(n as i64) as f64 / n as f64;
        index.push(Some(if r > 0.5 { r - 1.0 } else { r }));
        class.push(if s == 0 {
            VertexClass::Regular
        } else if s % n as i64 == 0 {
            VertexClass::Integral
        } else {
            VertexClass::Fractional
        });
    }
    SingularityReport { n, shift, index, class }
}

/// Permutation `k -> k + shift (mod N)`.
pub fn ring_permutation(n: usize, shift: i64) -> Vec<usize> {
    (0..n).map(|k| (k as i64 + shift).rem_euclid(n as i64) as usize).collect()
}

pub fn compose(p: &[usize], q: &[usize]) -> Vec<usize> {
    q.iter().map(|&i| p[i]).collect()
}

pub fn permutation_power(p: &[usize], m: usize) -> Vec<usize> {
    (0..m).fold((0..p.len()).collect(), |acc: Vec<usize>, _| compose(p, &acc))
}

/// Local re-indexing around a vertex: on ring face `faces[i]`, new vector `k`
/// is old vector `k + shifts[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Combing {
    pub vertex: usize,
    pub n: usize,
    pub faces: Vec<usize>,
    pub shifts: Vec<usize>,
}

impl Combing {
    pub fn is_identity(&self) -> bool {
        self.shifts.iter().all(|&s| s == 0)
    }

    pub fn inverse(&self) -> Combing {
        Combing { shifts: self.shifts.iter().map(|&s| (self.n - s) % self.n).collect(), ..self.clone() }
    }

    /// Re-indexes vectors and updates the matching of every edge of the ring
    /// faces.
    pub fn apply(&self, mesh: &Mesh, field: &DirectionalField) -> DirectionalField {
        let n = self.n;
        let shift: HashMap<usize, i64> = self.faces.iter().zip(&self.shifts).map(|(&f, &s)| (f, s as i64)).collect();
        let s = |f: Option<usize>| f.and_then(|f| shift.get(&f).copied()).unwrap_or(0);
        let mut out = field.clone();
        for (&f, &sf) in self.faces.iter().zip(&self.shifts) {
            for k in 0..n {
                out.vectors[f * n + k] = field.vector(f, (k + sf) % n);
            }
        }
        for &f in &self.faces {
            for e in mesh.face_edges[f] {
                if let Some(i) = field.matching[e] {
                    out.matching[e] = Some(reduce_matching(i + s(mesh.left(e)) - s(mesh.right(e)), n));
                }
            }
        }
        out
    }
}

pub fn comb(mesh: &Mesh, field: &DirectionalField, v: usize) -> Result<Combing> {
    comb_from(mesh, field, v, 0)
}

/// Combs the ring of `v` holding ring face `start` fixed.
pub fn comb_from(mesh: &Mesh, field: &DirectionalField, v: usize, start: usize) -> Result<Combing> {
    let ring = &mesh.rings[v];
    let d = ring.faces.len();
    let t = ring_transitions(mesh, &field.matching, v);
    let mut s = vec![0i64; d];
    if ring.boundary {
        for i in start..d - 1 {
            s[i + 1] = s[i] + t[i];
        }
        for i in (0..start).rev() {
            s[i] = s[i + 1] - t[i];
        }
    } else {
        for step in 0..d - 1 {
            let i = (start + step) % d;
            s[(i + 1) % d] = s[i] + t[i];
        }
        let last = (start + d - 1) % d;
        if (s[last] + t[last] - s[start]).rem_euclid(field.n as i64) != 0 {
            return Err(Error::SingularVertex(v));
        }
    }
    let n = field.n as i64;
    Ok(Combing { vertex: v, n: field.n, faces: ring.faces.clone(), shifts: s.iter().map(|x| x.rem_euclid(n) as usize).collect() })
}

/// Single-vector rings around a vertex; `rings[r][p]` is `(face, k)`.
#[derive(Clone, Debug)]
pub struct Unfolding {
    pub vertex: usize,
    pub rings: Vec<Vec<(usize, usize)>>,
    index: HashMap<(usize, usize), (usize, usize)>,
}

impl Unfolding {
    pub fn valences(&self) -> Vec<usize> {
        self.rings.iter().map(Vec::len).collect()
    }

    /// `Φ`: unfolded position to `(face, k)`.
    pub fn fold(&self, ring: usize, pos: usize) -> (usize, usize) {
        self.rings[ring][pos]
    }

    /// `Φ⁻¹`.
    pub fn unfold(&self, face: usize, k: usize) -> Option<(usize, usize)> {
        self.index.get(&(face, k)).copied()
    }
}

/// Number of unfolded rings `gcd(shift, N)` (`N` for a zero shift).
pub fn expected_ring_count(n: usize, shift: i64) -> usize {
    (shift.rem_euclid(n as i64) as usize).gcd(&n)
}

pub fn unfold(mesh: &Mesh, vertex: usize, matching: &[Option<i64>], n: usize) -> Unfolding {
    let ring = &mesh.rings[vertex];
    let d = ring.faces.len();
    let t = ring_transitions(mesh, matching, vertex);
    let step = |i: usize, k: usize| ((i + 1) % d, (k as i64 + t[i]).rem_euclid(n as i64) as usize);
    let mut rings = Vec::new();
    let mut index = HashMap::new();
    for k0 in 0..n {
        if index.contains_key(&(ring.faces[0], k0)) {
            continue;
        }
        let r = rings.len();
        let mut cur = Vec::new();
        let (mut i, mut k) = (0, k0);
        loop {
            index.insert((ring.faces[i], k), (r, cur.len()));
            cur.push((ring.faces[i], k));
            if ring.boundary && i + 1 == d {
                break;
            }
            (i, k) = step(i, k);
            if i == 0 && k == k0 {
                break;
            }
        }
        rings.push(cur);
    }
    Unfolding { vertex, rings, index }
}

/// Vertex identification of the branched cover: `N` copies of every face,
/// glued across edges according to the matching.
#[derive(Clone, Debug)]
pub struct Cover {
    pub n: usize,
    pub matching: Vec<Option<i64>>,
    /// Cover vertex of each corner of face copy `k·F + f`.
    pub corners: Vec<[usize; 3]>,
    pub base_vertex: Vec<usize>,
    /// Number of face copies around each cover vertex.
    pub valence: Vec<usize>,
    /// Cover vertices whose ring winds through several sheets.
    pub branch: Vec<bool>,
    n_faces: usize,
    n_edges: usize,
}

impl Cover {
    pub fn new(mesh: &Mesh, matching: &[Option<i64>], n: usize) -> Result<Self> {
        let matching = check_matching(mesh, n, matching.to_vec())?;
        let nf = mesh.n_faces();
        let slot = |c: usize, j: usize| 3 * c + j;
        let mut uf = UnionFind::<usize>::new(3 * n * nf);
        for e in 0..mesh.n_edges() {
            let (Some(l), Some(r), Some(i)) = (mesh.left(e), mesh.right(e), matching[e]) else { continue };
            for k in 0..n {
                let kr = (k as i64 + i).rem_euclid(n as i64) as usize;
                let (cl, cr) = (k * nf + l, kr * nf + r);
                for v in mesh.edges[e] {
                    let jl = mesh.faces[l].iter().position(|&x| x == v).unwrap();
                    let jr = mesh.faces[r].iter().position(|&x| x == v).unwrap();
                    uf.union(slot(cl, jl), slot(cr, jr));
                }
            }
        }
        let labels = uf.into_labeling();
        let mut key: HashMap<usize, (usize, usize)> = HashMap::new();
        for c in 0..n * nf {
            for j in 0..3 {
                let kv = (c / nf, mesh.faces[c % nf][j]);
                key.entry(labels[slot(c, j)]).and_modify(|m| *m = (*m).min(kv)).or_insert(kv);
            }
        }
        let mut classes: Vec<(usize, usize)> = key.iter().map(|(&label, &kv)| (label, kv.0 * mesh.n_vertices() + kv.1)).collect();
        classes.sort_by_key(|c| c.1);
        let id: HashMap<usize, usize> = classes.iter().enumerate().map(|(i, c)| (c.0, i)).collect();
        let nc = classes.len();
        let mut corners = vec![[0; 3]; n * nf];
        let mut base_vertex = vec![0; nc];
        let mut valence = vec![0; nc];
        for c in 0..n * nf {
            for j in 0..3 {
                let cv = id[&labels[slot(c, j)]];
                corners[c][j] = cv;
                base_vertex[cv] = mesh.faces[c % nf][j];
                valence[cv] += 1;
            }
        }
        let branch = (0..nc).map(|cv| valence[cv] > mesh.rings[base_vertex[cv]].faces.len()).collect();
        Ok(Cover { n, matching, corners, base_vertex, valence, branch, n_faces: nf, n_edges: mesh.n_edges() })
    }

    pub fn n_vertices(&self) -> usize {
        self.base_vertex.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n * self.n_edges
    }

    pub fn branch_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.branch[v]).collect()
    }

    /// Sheet of face `f` seen from sheet `k` of edge `e`'s left side.
    fn face_sheet(&self, mesh: &Mesh, e: usize, k: usize, f: usize) -> usize {
        match (mesh.left(e), self.matching[e]) {
            (Some(l), Some(i)) if l != f => (k as i64 + i).rem_euclid(self.n as i64) as usize,
            _ => k,
        }
    }

    /// Cover edge `k·E + e` where `k` is the sheet of the left face (or of
    /// the only face).
    fn edge_of(&self, mesh: &Mesh, f: usize, k: usize, e: usize) -> usize {
        let k_left = match (mesh.left(e), self.matching[e]) {
            (Some(l), Some(i)) if l != f => (k as i64 - i).rem_euclid(self.n as i64) as usize,
            _ => k,
        };
        k_left * self.n_edges + e
    }

    fn vertex_of(&self, mesh: &Mesh, f: usize, k: usize, v: usize) -> usize {
        let j = mesh.faces[f].iter().position(|&x| x == v).expect("vertex not in face");
        self.corners[k * self.n_faces + f][j]
    }

    /// The cover as a triangle mesh. Fails with `NonManifold` when two
    /// adjacent vertices both branch, since their edge copies coincide.
    pub fn mesh(&self, base: &Mesh) -> Result<Mesh> {
        let positions = self.base_vertex.iter().map(|&v| base.positions[v]).collect();
        Mesh::new(positions, self.corners.clone())
    }

    /// Diagonal `±1` map from sheet-major `Γᴺ` (base edge directions) to `Γ`
    /// on the cover mesh.
    pub fn gamma_signs(&self, base: &Mesh, cover: &Mesh) -> SparseOperator {
        gamma_signs(base, cover, self.n)
    }
}

fn gamma_signs(base: &Mesh, cover: &Mesh, n: usize) -> SparseOperator {
    let nf = base.n_faces();
    let d: Vec<f64> = (0..2 * n * nf).map(|i| cover.face_signs[i / 2][i % 2] * base.face_signs[(i / 2) % nf][i % 2]).collect();
    SparseOperator::diagonal(&d, Space::Gamma)
}

/// Operators on the cover: `N` sheets of the single-field operators glued by
/// the matching. Conforming operators are zeroed at branch vertices, which
/// are listed in `flagged`.
#[derive(Clone, Debug)]
pub struct BranchedOperators {
    pub cover: Cover,
    /// Conforming gradient `Gᴺ`, `X → V`.
    pub g: SparseOperator,
    /// Conforming divergence `Dᴺ = (Gᴺ)ᵀ M_X`.
    pub d: SparseOperator,
    /// Non-conforming curl `Cᴺ`, `X → E*`.
    pub c: SparseOperator,
    /// Non-conforming cogradient `G_Eᴺ`.
    pub g_e: SparseOperator,
    pub j: SparseOperator,
    pub d0_gamma: SparseOperator,
    pub curl_gamma: SparseOperator,
    /// Mean-curl conversion `Wᴺ`.
    pub w: SparseOperator,
    pub flagged: Vec<usize>,
}

pub fn branched_operators(mesh: &Mesh, matching: &[Option<i64>], n: usize) -> Result<BranchedOperators> {
    let cover = Cover::new(mesh, matching, n)?;
    let (nf, ne, nv) = (mesh.n_faces(), mesh.n_edges(), cover.n_vertices());

    // Rows grouped per face (`per` rows each), columns in V.
    let face_rows_vertex_cols = |op: &SparseOperator, per: usize| {
        let mut t = Vec::new();
        for (r, c, x) in op.triplets() {
            let f = r / per;
            for k in 0..n {
                t.push((k * per * nf + r, cover.vertex_of(mesh, f, k, c), x));
            }
        }
        SparseOperator::from_triplets(n * op.nrows(), nv, op.row_space, op.col_space, &t)
    };
    let face_rows_edge_cols = |op: &SparseOperator, per: usize| {
        let mut t = Vec::new();
        for (r, c, x) in op.triplets() {
            let f = r / per;
            for k in 0..n {
                t.push((k * per * nf + r, cover.edge_of(mesh, f, k, c), x));
            }
        }
        SparseOperator::from_triplets(n * op.nrows(), n * ne, op.row_space, op.col_space, &t)
    };
    // Rows in stacked edge blocks, columns grouped per face.
    let edge_rows_face_cols = |op: &SparseOperator, per: usize| {
        let mut t = Vec::new();
        for (r, c, x) in op.triplets() {
            let (block, e) = (r / ne, r % ne);
            let f = c / per;
            for k in 0..n {
                let kf = cover.face_sheet(mesh, e, k, f);
                t.push((block * n * ne + k * ne + e, kf * per * nf + c, x));
            }
        }
        SparseOperator::from_triplets(n * op.nrows(), n * op.ncols(), op.row_space, op.col_space, &t)
    };
    let sheets = |op: &SparseOperator| {
        let blocks: Vec<&SparseOperator> = (0..n).map(|_| op).collect();
        SparseOperator::block_diag(&blocks, op.row_space, op.col_space)
    };

    let flagged = cover.branch_vertices();
    let mask: Vec<f64> = cover.branch.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect();
    let mask = SparseOperator::diagonal(&mask, Space::V);
    let g = (&face_rows_vertex_cols(&grad_conforming(mesh), 3) * &mask).with_spaces(Space::X, Space::V);
    let mx = sheets(&Masses::new(mesh).x);
    let d = (&mask * &(&g.transpose() * &mx)).with_spaces(Space::VStar, Space::X);
    let c = edge_rows_face_cols(&curl_nc(mesh), 3);
    let g_e = face_rows_edge_cols(&cograd_nonconforming(mesh), 3);
    let j = sheets(&rotation_j(mesh));
    let d0g = face_rows_vertex_cols(&d0_gamma(mesh), 2);
    let cg = edge_rows_face_cols(&curl_gamma(mesh), 2);
    let w = edge_rows_face_cols(&to_mean_curl_op(mesh), 2);
    Ok(BranchedOperators { cover, g, d, c, g_e, j, d0_gamma: d0g, curl_gamma: cg, w, flagged })
}

/// Fine matching: even edges inherit the parent gluing, odd edges are
/// identity.
pub fn fine_matching(coarse: &Mesh, fine: &Mesh, maps: &RefinementMaps, matching: &[Option<i64>], n: usize) -> Vec<Option<i64>> {
    let mut out: Vec<Option<i64>> = vec![None; fine.n_edges()];
    for odd in &maps.odd_edge_map {
        for &e in odd {
            out[e] = Some(0);
        }
    }
    for (e, children) in maps.even_edge_map.iter().enumerate() {
        let Some(i) = matching[e] else { continue };
        for &c in children {
            let parent = fine.left(c).map(|f| f / 4);
            let ic = if parent == coarse.left(e) { i } else { -i };
            out[c] = Some(reduce_matching(ic, n));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct BranchedSubdivision {
    pub fine: Mesh,
    pub maps: RefinementMaps,
    pub fine_matching: Vec<Option<i64>>,
    /// Fine `Γᴺ` rows, coarse `Γᴺ` columns.
    pub operator: SparseOperator,
    /// Commutation residuals on the cover.
    pub commutation: CommutationReport,
}

impl BranchedSubdivision {
    pub fn apply(&self, gamma: &DVector<f64>) -> DVector<f64> {
        self.operator.apply(gamma)
    }
}

/// One subdivision step of `Γᴺ`: the halfedge subdivision of the cover, with
/// the sign change between base and cover edge directions on both levels.
pub fn branched_subdivision(mesh: &Mesh, matching: &[Option<i64>], n: usize) -> Result<BranchedSubdivision> {
    let cover = Cover::new(mesh, matching, n)?;
    let cm = cover.mesh(mesh)?;
    let (cf, cmaps) = cm.quadrisect()?;
    let set = build_subdivision_set(&cm, &cf, &cmaps, &*stencils_for(&cm)?)?;
    let (fine, maps) = mesh.quadrisect()?;
    let q0 = gamma_signs(mesh, &cm, n);
    let q1 = gamma_signs(&fine, &cf, n);
    let operator = (&q1 * &(&set.gamma * &q0)).with_spaces(Space::Gamma, Space::Gamma);
    let fine_matching = fine_matching(mesh, &fine, &maps, &cover.matching, n);
    let commutation = commutation_report(&cm, &cf, &set);
    Ok(BranchedSubdivision { fine, maps, fine_matching, operator, commutation })
}

/// Subdivides a directional field given as `Γᴺ`; returns the step and the
/// fine values.
pub fn branched_subdivide(mesh: &Mesh, field: &DirectionalField) -> Result<(BranchedSubdivision, DVector<f64>)> {
    let step = branched_subdivision(mesh, &field.matching, field.n)?;
    let fine = step.apply(&field.to_gamma(mesh));
    Ok((step, fine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn gauge(mesh: &Mesh, n: usize, seed: u64) -> (Vec<usize>, Vec<Option<i64>>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let s: Vec<usize> = (0..mesh.n_faces()).map(|_| rng.gen_range(0..n)).collect();
        let m = (0..mesh.n_edges())
            .map(|e| match mesh.edge_faces[e] {
                [Some(l), Some(r)] => Some(reduce_matching(s[r] as i64 - s[l] as i64, n)),
                _ => None,
            })
            .collect();
        (s, m)
    }

    fn random_field(mesh: &Mesh, n: usize, matching: Vec<Option<i64>>, seed: u64) -> DirectionalField {
        let mut rng = StdRng::seed_from_u64(seed);
        let vectors = (0..mesh.n_faces() * n)
            .map(|i| {
                let nrm = mesh.face_normal(i / n);
                let x = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                x - nrm * nrm.dot(&x)
            })
            .collect();
        DirectionalField::new(mesh, n, vectors, matching).unwrap()
    }

    /// Matching `±1` along a vertex path, leaving `∓1` shifts at its ends.
    fn path_matching(mesh: &Mesh, path: &[usize]) -> Vec<Option<i64>> {
        let mut m = trivial_matching(mesh);
        for w in path.windows(2) {
            let e = mesh.edge(w[0], w[1]).unwrap();
            m[e] = Some(if mesh.edges[e][0] == w[0] { 1 } else { -1 });
        }
        m
    }

    /// Path `a, mid, b` between two non-adjacent vertices.
    fn two_step_path(mesh: &Mesh) -> [usize; 3] {
        let a = 0;
        let nv = mesh.n_vertices();
        let b = (1..nv).find(|&v| mesh.edge(a, v).is_none()).unwrap();
        let mid = (1..nv).find(|&v| mesh.edge(a, v).is_some() && mesh.edge(b, v).is_some()).unwrap();
        [a, mid, b]
    }

    fn valence_vertex(mesh: &Mesh, d: usize) -> usize {
        (0..mesh.n_vertices()).find(|&v| mesh.rings[v].valence() == d).unwrap()
    }

    #[test]
    fn reduction_is_symmetric() {
        assert_eq!(reduce_matching(3, 4), -1);
        assert_eq!(reduce_matching(2, 4), 2);
        assert_eq!(reduce_matching(-2, 4), 2);
        assert_eq!(reduce_matching(-1, 3), -1);
    }

    #[test]
    fn trivial_matching_is_regular() {
        let m = shapes::icosphere(1);
        let rep = matching_indices(&m, &trivial_matching(&m), 3);
        assert!(rep.index.iter().all(|i| *i == Some(0.0)));
        assert!(rep.class.iter().all(|c| *c == VertexClass::Regular));
    }

    #[test]
    fn single_edge_half_indices() {
        let m = shapes::octahedron();
        let mut matching = trivial_matching(&m);
        matching[0] = Some(1);
        let rep = matching_indices(&m, &matching, 2);
        let [a, b] = m.edges[0];
        for v in 0..m.n_vertices() {
            if v == a || v == b {
                assert_eq!(rep.index[v].map(f64::abs), Some(0.5));
                assert_eq!(rep.class[v], VertexClass::Fractional);
            } else {
                assert_eq!(rep.index[v], Some(0.0));
            }
        }
        // head gets +1, tail −1
        assert_eq!((rep.shift[a], rep.shift[b]), (-1, 1));
    }

    #[test]
    fn order_two_ring_is_fractional() {
        let m = shapes::icosphere(1);
        let v = valence_vertex(&m, 6);
        let mut matching = trivial_matching(&m);
        matching[m.edge(v, m.rings[v].neighbors[2]).unwrap()] = Some(1);
        let t = ring_transitions(&m, &matching, v);
        let p = t.iter().fold(vec![0, 1], |acc, &s| compose(&ring_permutation(2, s), &acc));
        assert_ne!(p, vec![0, 1]);
        assert_eq!(permutation_power(&p, 2), vec![0, 1]);
        let rep = matching_indices(&m, &matching, 2);
        assert_eq!(rep.class[v], VertexClass::Fractional);
        assert_eq!(rep.index[v], Some(0.5));
    }

    #[test]
    fn transitions_sum_to_shift() {
        let m = shapes::icosphere(1);
        let mut rng = StdRng::seed_from_u64(5);
        let matching: Vec<Option<i64>> = (0..m.n_edges()).map(|_| Some(rng.gen_range(-3..4))).collect();
        for v in 0..m.n_vertices() {
            assert_eq!(ring_transitions(&m, &matching, v).iter().sum::<i64>(), ring_shift(&m, &matching, v));
        }
    }

    #[test]
    fn combing_already_combed_is_identity() {
        let m = shapes::icosphere(1);
        let f = random_field(&m, 3, trivial_matching(&m), 1);
        for v in 0..m.n_vertices() {
            assert!(comb(&m, &f, v).unwrap().is_identity());
        }
    }

    #[test]
    fn combing_zeroes_spokes() {
        let m = shapes::icosphere(1);
        let (_, matching) = gauge(&m, 4, 2);
        let f = random_field(&m, 4, matching, 3);
        for v in 0..m.n_vertices() {
            let c = comb(&m, &f, v).unwrap();
            let g = c.apply(&m, &f);
            for &w in &m.rings[v].neighbors {
                assert_eq!(g.matching[m.edge(v, w).unwrap()], Some(0));
            }
            for &face in &c.faces {
                let mut a: Vec<[u64; 3]> = (0..4).map(|k| f.vector(face, k).map(f64::to_bits).into()).collect();
                let mut b: Vec<[u64; 3]> = (0..4).map(|k| g.vector(face, k).map(f64::to_bits).into()).collect();
                a.sort();
                b.sort();
                assert_eq!(a, b);
            }
            let back = c.inverse().apply(&m, &g);
            assert_eq!(back.vectors, f.vectors);
            assert_eq!(back.matching, f.matching);
        }
    }

    #[test]
    fn combing_start_changes_global_shift_only() {
        let m = shapes::icosphere(1);
        let (_, matching) = gauge(&m, 3, 4);
        let f = random_field(&m, 3, matching, 5);
        let v = valence_vertex(&m, 6);
        let a = comb_from(&m, &f, v, 0).unwrap();
        let b = comb_from(&m, &f, v, 3).unwrap();
        let delta = (b.shifts[0] + 3 - a.shifts[0]) % 3;
        for (x, y) in a.shifts.iter().zip(&b.shifts) {
            assert_eq!((y + 3 - x) % 3, delta);
        }
    }

    #[test]
    fn combing_singular_vertex_fails() {
        let m = shapes::octahedron();
        let mut matching = trivial_matching(&m);
        matching[0] = Some(1);
        let f = random_field(&m, 2, matching, 6);
        let v = m.edges[0][0];
        assert!(matches!(comb(&m, &f, v), Err(Error::SingularVertex(x)) if x == v));
    }

    #[test]
    fn unfold_half_singularity_into_one_ring() {
        let m = shapes::icosphere(1);
        let v = valence_vertex(&m, 6);
        let mut matching = trivial_matching(&m);
        let e = m.edge(v, m.rings[v].neighbors[0]).unwrap();
        matching[e] = Some(if m.edges[e][0] == v { 1 } else { -1 });
        assert_eq!(ring_shift(&m, &matching, v), -1);
        assert_eq!(matching_indices(&m, &matching, 2).index[v], Some(0.5));
        let u = unfold(&m, v, &matching, 2);
        assert_eq!(u.valences(), vec![12]);
    }

    #[test]
    fn unfold_regular_into_copies() {
        let m = shapes::icosphere(1);
        let (_, matching) = gauge(&m, 3, 7);
        for v in 0..m.n_vertices() {
            let u = unfold(&m, v, &matching, 3);
            let d = m.rings[v].valence();
            assert_eq!(u.valences(), vec![d; 3]);
        }
    }

    #[test]
    fn unfold_round_trip_and_counts() {
        let m = shapes::icosphere(1);
        let mut rng = StdRng::seed_from_u64(8);
        for n in 1..=5 {
            let matching: Vec<Option<i64>> = (0..m.n_edges()).map(|_| Some(rng.gen_range(0..n as i64))).collect();
            for v in 0..m.n_vertices() {
                let shift = ring_shift(&m, &matching, v);
                assert_eq!(permutation_power(&ring_permutation(n, shift), n), (0..n).collect::<Vec<_>>());
                let u = unfold(&m, v, &matching, n);
                assert_eq!(u.rings.len(), expected_ring_count(n, shift));
                assert_eq!(u.valences().iter().sum::<usize>(), n * m.rings[v].valence());
                for &f in &m.rings[v].faces {
                    for k in 0..n {
                        let (r, p) = u.unfold(f, k).unwrap();
                        assert_eq!(u.fold(r, p), (f, k));
                    }
                }
            }
        }
    }

    #[test]
    fn cover_valences_match_unfolding() {
        let m = shapes::icosphere(1);
        let mut rng = StdRng::seed_from_u64(9);
        let n = 4;
        let matching: Vec<Option<i64>> = (0..m.n_edges()).map(|_| Some(rng.gen_range(0..4))).collect();
        let cover = Cover::new(&m, &matching, n).unwrap();
        for v in 0..m.n_vertices() {
            let mut a: Vec<usize> = (0..cover.n_vertices()).filter(|&c| cover.base_vertex[c] == v).map(|c| cover.valence[c]).collect();
            let mut b = unfold(&m, v, &cover.matching, n).valences();
            a.sort();
            b.sort();
            assert_eq!(a, b, "vertex {v}");
        }
    }

    #[test]
    fn trivial_matching_gives_block_operators() {
        let m = shapes::icosphere(1);
        let ops = branched_operators(&m, &trivial_matching(&m), 3).unwrap();
        let blocks = |op: &SparseOperator| SparseOperator::block_diag(&[op, op, op], op.row_space, op.col_space);
        let close = |a: &SparseOperator, b: &SparseOperator| (a - b).max_abs() <= 1e-14 * b.max_abs().max(1.0);
        assert!(close(&ops.g, &blocks(&grad_conforming(&m))));
        assert!(close(&ops.c, &blocks(&curl_nc(&m))));
        assert!(close(&ops.d0_gamma, &blocks(&d0_gamma(&m))));
        assert!(close(&ops.curl_gamma, &blocks(&curl_gamma(&m))));
        assert!(close(&ops.g_e, &blocks(&cograd_nonconforming(&m))));
        assert!(ops.flagged.is_empty());
    }

    #[test]
    fn gradient_is_per_face_local() {
        let m = shapes::icosphere(1);
        let (s, matching) = gauge(&m, 3, 10);
        let ops = branched_operators(&m, &matching, 3).unwrap();
        let single = grad_conforming(&m);
        let nf = m.n_faces();
        for (r, c, x) in ops.g.triplets() {
            let f = (r / 3) % nf;
            assert_eq!(single.get(r % (3 * nf), ops.cover.base_vertex[c]), x);
            assert!(m.faces[f].contains(&ops.cover.base_vertex[c]));
        }
        assert_eq!(s.len(), nf);
    }

    #[test]
    fn exact_sequences_hold() {
        let m = shapes::icosphere(1);
        for (n, matching) in [(3, gauge(&m, 3, 11).1), (4, path_matching(&m, &two_step_path(&m)))] {
            let ops = branched_operators(&m, &matching, n).unwrap();
            assert!((&ops.c * &ops.g).max_abs() <= 1e-12);
            assert!((&ops.d * &(&ops.j * &ops.g_e)).max_abs() <= 1e-12 * ops.d.max_abs());
            assert!((&ops.curl_gamma * &ops.d0_gamma).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn singular_rows_are_flagged() {
        let m = shapes::icosphere(1);
        let ops = branched_operators(&m, &path_matching(&m, &two_step_path(&m)), 4).unwrap();
        let rep = matching_indices(&m, &ops.cover.matching, 4);
        let mut flagged_base: Vec<usize> = ops.flagged.iter().map(|&c| ops.cover.base_vertex[c]).collect();
        flagged_base.sort();
        assert_eq!(flagged_base, rep.fractional());
        let dense = ops.d.to_dense();
        for &c in &ops.flagged {
            assert_eq!(dense.row(c).amax(), 0.0);
        }
    }

    #[test]
    fn cover_mesh_agrees_with_lifted_operators() {
        let m = shapes::icosphere(1);
        let (_, matching) = gauge(&m, 3, 12);
        let ops = branched_operators(&m, &matching, 3).unwrap();
        let cm = ops.cover.mesh(&m).unwrap();
        let q = ops.cover.gamma_signs(&m, &cm);
        let via_mesh = &(&q * &d0_gamma(&cm)) * &DVector::from_fn(cm.n_vertices(), |i, _| (i as f64 * 0.37).sin());
        let lifted = ops.d0_gamma.apply(&DVector::from_fn(cm.n_vertices(), |i, _| (i as f64 * 0.37).sin()));
        assert!((via_mesh - lifted).amax() <= 1e-13);
    }

    #[test]
    fn degree_one_is_plain_subdivision() {
        let m = shapes::icosphere(1);
        let step = branched_subdivision(&m, &trivial_matching(&m), 1).unwrap();
        let (fine, maps) = m.quadrisect().unwrap();
        let plain = build_subdivision_set(&m, &fine, &maps, &*stencils_for(&m).unwrap()).unwrap();
        assert!((&step.operator - &plain.gamma).max_abs() <= 1e-14);
    }

    #[test]
    fn regular_branches_subdivide_independently() {
        let m = shapes::icosphere(1);
        let n = 3;
        let (s, matching) = gauge(&m, n, 13);
        let step = branched_subdivision(&m, &matching, n).unwrap();
        let (fine, maps) = m.quadrisect().unwrap();
        let plain = build_subdivision_set(&m, &fine, &maps, &*stencils_for(&m).unwrap()).unwrap();
        let (nf, nff) = (m.n_faces(), fine.n_faces());
        let gamma = DVector::from_fn(2 * n * nf, |i, _| ((i * 7 + 3) as f64).sin());
        // combed sheet k of face f holds original sheet k + s_f
        let mut combed = DVector::zeros(2 * n * nf);
        for k in 0..n {
            for f in 0..nf {
                for j in 0..2 {
                    combed[2 * (k * nf + f) + j] = gamma[2 * (((k + s[f]) % n) * nf + f) + j];
                }
            }
        }
        let mut fine_combed = DVector::zeros(2 * n * nff);
        for k in 0..n {
            let x = plain.gamma.apply(&combed.rows(2 * k * nf, 2 * nf).into_owned());
            fine_combed.rows_mut(2 * k * nff, 2 * nff).copy_from(&x);
        }
        let ours = step.operator.apply(&gamma);
        for k in 0..n {
            for g in 0..nff {
                for j in 0..2 {
                    let orig = ours[2 * (((k + s[g / 4]) % n) * nff + g) + j];
                    assert!((orig - fine_combed[2 * (k * nff + g) + j]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradient_stays_curl_free() {
        let m = shapes::icosphere(1);
        let (_, matching) = gauge(&m, 3, 14);
        let ops = branched_operators(&m, &matching, 3).unwrap();
        let phi = DVector::from_fn(ops.cover.n_vertices(), |i, _| (i as f64 * 0.91).cos());
        let gamma = ops.d0_gamma.apply(&phi);
        let step = branched_subdivision(&m, &matching, 3).unwrap();
        let fine_gamma = step.apply(&gamma);
        let fine_ops = branched_operators(&step.fine, &step.fine_matching, 3).unwrap();
        let curl = fine_ops.curl_gamma.apply(&fine_gamma);
        assert!(curl.norm() <= 1e-10 * gamma.norm(), "{}", curl.norm());
        assert!(step.commutation.max() <= 1e-12);
    }

    #[test]
    fn subdivision_preserves_singularities() {
        let m = shapes::octahedron();
        let path = two_step_path(&m);
        let (a, b) = (path[0], path[2]);
        let matching = path_matching(&m, &path);
        let coarse = matching_indices(&m, &matching, 4);
        assert_eq!(coarse.fractional(), {
            let mut x = vec![a, b];
            x.sort();
            x
        });
        assert_eq!(coarse.index[a], Some(-0.25));
        assert_eq!(coarse.index[b], Some(0.25));
        let step = branched_subdivision(&m, &matching, 4).unwrap();
        let fine = matching_indices(&step.fine, &step.fine_matching, 4);
        for v in 0..m.n_vertices() {
            assert_eq!(fine.index[v], coarse.index[v]);
            assert_eq!(fine.class[v], coarse.class[v]);
        }
        for v in m.n_vertices()..step.fine.n_vertices() {
            assert_eq!(fine.class[v], VertexClass::Regular);
        }
        assert!(step.commutation.max() <= 1e-12, "{:?}", step.commutation);
    }
}
