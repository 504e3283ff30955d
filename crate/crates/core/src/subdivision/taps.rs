//! Per-row stencil taps on a coarse/fine pair.
//!
//! A tap is `(coarse column, coefficient)` where the coefficient is either a
//! constant or a signed reference to a stencil key. The same taps drive matrix
//! assembly and the linear constraint system used to derive unknown stencils.

use super::stencils::{boundary_class, loop_alpha, ring_class, spoke_class, BoundaryTap, EdgeOp, Key, OddTap};
use crate::mesh::{Mesh, RefinementMaps};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coef {
    Const(f64),
    Param(Key, f64),
}

pub type Row = Vec<(usize, Coef)>;

/// `Interior` refuses rows whose stencil touches the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Interior,
    Full,
}

#[derive(Clone, Copy, Debug)]
enum FineEdge {
    /// Child of coarse edge `e` incident to even vertex `v`.
    Even { v: usize, e: usize },
    /// Interior edge of coarse face `f` parallel to local edge `k`.
    Odd { f: usize, k: usize },
}

#[derive(Clone, Copy, Debug)]
enum FineFace {
    Corner { f: usize, k: usize },
    Center { f: usize },
}

pub struct Taps<'a> {
    pub coarse: &'a Mesh,
    pub fine: &'a Mesh,
    mode: Mode,
    edge_kind: Vec<FineEdge>,
    face_kind: Vec<FineFace>,
}

impl<'a> Taps<'a> {
    pub fn new(coarse: &'a Mesh, fine: &'a Mesh, maps: &RefinementMaps, mode: Mode) -> Self {
        let mut edge_kind = vec![FineEdge::Odd { f: 0, k: 0 }; fine.n_edges()];
        for (e, ch) in maps.even_edge_map.iter().enumerate() {
            edge_kind[ch[0]] = FineEdge::Even { v: coarse.edges[e][0], e };
            edge_kind[ch[1]] = FineEdge::Even { v: coarse.edges[e][1], e };
        }
        for (f, odd) in maps.odd_edge_map.iter().enumerate() {
            for k in 0..3 {
                edge_kind[odd[k]] = FineEdge::Odd { f, k };
            }
        }
        let mut face_kind = vec![FineFace::Center { f: 0 }; fine.n_faces()];
        for (f, ch) in maps.face_map.iter().enumerate() {
            for k in 0..3 {
                face_kind[ch[k]] = FineFace::Corner { f, k };
            }
            face_kind[ch[3]] = FineFace::Center { f };
        }
        Taps { coarse, fine, mode, edge_kind, face_kind }
    }

    fn mid(&self, a: usize, b: usize) -> usize {
        self.coarse.n_vertices() + self.coarse.edge(a, b).unwrap()
    }

    fn e(&self, a: usize, b: usize) -> usize {
        self.coarse.edge(a, b).unwrap()
    }

    fn across(&self, f: usize, a: usize, b: usize) -> Option<usize> {
        let e = self.e(a, b);
        self.coarse.other_face(e, f).map(|g| self.coarse.third_vertex(g, a, b))
    }

    /// Interior ring of `v` rotated so that neighbor `w0` comes first.
    fn frame(&self, v: usize, w0: usize) -> (Vec<usize>, Vec<usize>) {
        let ring = &self.coarse.rings[v];
        let k = ring.neighbors.iter().position(|&x| x == w0).unwrap();
        let mut w = ring.neighbors.clone();
        let mut t = ring.faces.clone();
        w.rotate_left(k);
        t.rotate_left(k);
        (w, t)
    }

    /// Loop row of fine vertex `fv`.
    pub fn vertex_row(&self, fv: usize) -> Option<Row> {
        let m = self.coarse;
        let nv = m.n_vertices();
        let mut row = Row::new();
        if fv < nv {
            let ring = &m.rings[fv];
            if ring.boundary {
                if self.mode == Mode::Interior {
                    return None;
                }
                row.push((fv, Coef::Const(0.75)));
                row.push((ring.neighbors[0], Coef::Const(0.125)));
                row.push((*ring.neighbors.last().unwrap(), Coef::Const(0.125)));
            } else {
                let d = ring.valence();
                let a = loop_alpha(d);
                row.push((fv, Coef::Const(1.0 - d as f64 * a)));
                row.extend(ring.neighbors.iter().map(|&w| (w, Coef::Const(a))));
            }
        } else {
            let e = fv - nv;
            let [a, b] = m.edges[e];
            if m.boundary_edge[e] {
                if self.mode == Mode::Interior {
                    return None;
                }
                row.push((a, Coef::Const(0.5)));
                row.push((b, Coef::Const(0.5)));
            } else {
                let c = m.third_vertex(m.left(e).unwrap(), a, b);
                let d = m.third_vertex(m.right(e).unwrap(), a, b);
                row.extend([(a, 0.375), (b, 0.375), (c, 0.125), (d, 0.125)].map(|(x, w)| (x, Coef::Const(w))));
            }
        }
        Some(row)
    }

    /// Row of fine edge `fe` for the oriented (`S1`) or unsigned (`SE`) scheme.
    pub fn edge_row(&self, fe: usize, op: EdgeOp) -> Option<Row> {
        match self.edge_kind[fe] {
            FineEdge::Even { v, e } => self.even_row(v, e, op),
            FineEdge::Odd { f, k } => self.odd_row(f, k, op),
        }
    }

    fn even_row(&self, v: usize, e: usize, op: EdgeOp) -> Option<Row> {
        let m = self.coarse;
        let oriented = op == EdgeOp::S1;
        let [a, b] = m.edges[e];
        let w0 = if a == v { b } else { a };
        let mm = m.n_vertices() + e;
        let tsign = if oriented { self.fine.edge_sign(v, mm) } else { 1.0 };
        let sgn = |x: usize, y: usize| if oriented { m.edge_sign(x, y) } else { 1.0 };
        let mut row = Row::new();
        if !m.rings[v].boundary {
            let (w, _) = self.frame(v, w0);
            let d = w.len();
            for i in 0..d {
                let key = Key::EvenSpoke { op, d, i: spoke_class(d, i) };
                row.push((self.e(v, w[i]), Coef::Param(key, sgn(v, w[i]) * tsign)));
                let j = (i + 1) % d;
                let (c, flipped) = ring_class(d, i);
                if oriented && d - 1 - i == i {
                    continue;
                }
                let s = if oriented && flipped { -1.0 } else { 1.0 };
                let key = Key::EvenRing { op, d, i: c };
                row.push((self.e(w[i], w[j]), Coef::Param(key, s * sgn(w[i], w[j]) * tsign)));
            }
            return Some(row);
        }
        if self.mode == Mode::Interior {
            return None;
        }
        let w = &m.rings[v].neighbors;
        let k = m.rings[v].faces.len();
        let j = w.iter().position(|&x| x == w0).unwrap();
        let end = j == 0 || j == k;
        for i in 0..=k {
            let i_end = i == 0 || i == k;
            if end && !i_end {
                continue;
            }
            if !oriented && end && i != j {
                continue;
            }
            if !end && i.abs_diff(j) > 1 && !(oriented && i_end) {
                continue;
            }
            let ((kj, ki), _) = boundary_class(j, i, k - j, k - i);
            let key = Key::BoundaryEvenSpoke { op, k, j: kj, i: ki };
            row.push((self.e(v, w[i]), Coef::Param(key, sgn(v, w[i]) * tsign)));
        }
        if !end && !oriented {
            for i in 0..k {
                if i + 1 < j || i > j {
                    continue;
                }
                let ((kj, ki), _) = boundary_class(j, i, k - j, k - 1 - i);
                let key = Key::BoundaryEvenRing { op, k, j: kj, i: ki };
                row.push((self.e(w[i], w[i + 1]), Coef::Param(key, 1.0)));
            }
        }
        Some(row)
    }

    fn odd_row(&self, f: usize, k: usize, op: EdgeOp) -> Option<Row> {
        let m = self.coarse;
        let oriented = op == EdgeOp::S1;
        let corners = m.faces[f];
        let p = corners[(k + 2) % 3];
        let (mut q, mut r) = (corners[k], corners[(k + 1) % 3]);
        let bpq = m.boundary_edge[self.e(p, q)];
        let bpr = m.boundary_edge[self.e(p, r)];
        if (bpq || bpr) && self.mode == Mode::Interior {
            return None;
        }
        if bpr && !bpq {
            std::mem::swap(&mut q, &mut r);
        }
        let tsign = if oriented { self.fine.edge_sign(self.mid(p, q), self.mid(p, r)) } else { 1.0 };
        let mut row = Row::new();
        let mut put = |u: usize, v: usize, key: Key, sg: f64| {
            let s = if oriented { sg * m.edge_sign(u, v) * tsign } else { 1.0 };
            row.push((self.e(u, v), Coef::Param(key, s)));
        };
        if !(bpq || bpr) {
            let a = self.across(f, p, q).unwrap();
            let b = self.across(f, p, r).unwrap();
            let key = |tap| Key::Odd { op, tap };
            put(q, r, key(OddTap::C1), 1.0);
            put(p, q, key(OddTap::C2), 1.0);
            put(p, r, key(OddTap::C2), -1.0);
            put(q, a, key(OddTap::C4), 1.0);
            put(r, b, key(OddTap::C4), -1.0);
            put(p, a, key(OddTap::C5), 1.0);
            put(p, b, key(OddTap::C5), -1.0);
        } else if bpq && bpr {
            let key = |tap| Key::BoundaryOdd2 { op, tap };
            put(q, r, key(BoundaryTap::QR), 1.0);
            put(p, q, key(BoundaryTap::PQ), 1.0);
            put(p, r, key(BoundaryTap::PQ), -1.0);
        } else {
            let b = self.across(f, p, r).unwrap();
            let key = |tap| Key::BoundaryOdd { op, tap };
            put(q, r, key(BoundaryTap::QR), 1.0);
            put(p, q, key(BoundaryTap::PQ), 1.0);
            put(p, r, key(BoundaryTap::PR), 1.0);
            put(r, b, key(BoundaryTap::RB), 1.0);
            put(p, b, key(BoundaryTap::PB), 1.0);
        }
        Some(row)
    }

    /// Row of fine face `ff` (dual 2-form scheme).
    pub fn face_row(&self, ff: usize) -> Option<Row> {
        let m = self.coarse;
        let mut row = Row::new();
        match self.face_kind[ff] {
            FineFace::Corner { f, k } => {
                let v = m.faces[f][k];
                let w1 = m.faces[f][(k + 1) % 3];
                if !m.rings[v].boundary {
                    let (w, t) = self.frame(v, w1);
                    let d = w.len();
                    for j in 0..d {
                        row.push((t[j], Coef::Param(Key::Corner { d, j: spoke_class(d, j) }, 1.0)));
                    }
                } else {
                    if self.mode == Mode::Interior {
                        return None;
                    }
                    let ring = &m.rings[v];
                    let nk = ring.faces.len();
                    let j = ring.neighbors.iter().position(|&x| x == w1).unwrap();
                    for i in 0..nk {
                        if i.abs_diff(j) > 1 {
                            continue;
                        }
                        let ((kj, ki), _) = boundary_class(j, i, nk - 1 - j, nk - 1 - i);
                        row.push((ring.faces[i], Coef::Param(Key::BoundaryCorner { k: nk, j: kj, i: ki }, 1.0)));
                    }
                }
            }
            FineFace::Center { f } => {
                let es = m.face_edges[f];
                let nb = es.iter().filter(|&&e| m.boundary_edge[e]).count();
                if nb > 0 && self.mode == Mode::Interior {
                    return None;
                }
                let key = |neighbor| if nb == 0 { Key::Center { neighbor } } else { Key::BoundaryCenter { nb, neighbor } };
                row.push((f, Coef::Param(key(false), 1.0)));
                for &e in &es {
                    if let Some(o) = m.other_face(e, f) {
                        row.push((o, Coef::Param(key(true), 1.0)));
                    }
                }
            }
        }
        Some(row)
    }
}
