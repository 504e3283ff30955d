//! Stencil coefficient keys, closed-form interior rules and the coefficient table.

use std::collections::BTreeMap;

use serde::Serialize;

/// Edge-based scheme a key belongs to: oriented 1-forms or unsigned dual edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeOp {
    S1,
    SE,
}

/// Named taps of the odd edge stencil (target `m_pq -> m_pr` inside face `pqr`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum OddTap {
    /// `q -> r`
    C1,
    /// `p -> q`, mirrored on `p -> r`
    C2,
    /// `q -> A`, mirrored on `r -> B`
    C4,
    /// `p -> A`, mirrored on `p -> B`
    C5,
}

/// Taps of the odd stencils next to the boundary; `pq` is a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BoundaryTap {
    QR,
    PQ,
    PR,
    RB,
    PB,
}

/// One stencil coefficient. Interior even keys use mirror-canonical indices;
/// boundary keys carry the canonical `(target, source)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Key {
    EvenSpoke { op: EdgeOp, d: usize, i: usize },
    EvenRing { op: EdgeOp, d: usize, i: usize },
    Odd { op: EdgeOp, tap: OddTap },
    Corner { d: usize, j: usize },
    Center { neighbor: bool },
    BoundaryEvenSpoke { op: EdgeOp, k: usize, j: usize, i: usize },
    BoundaryEvenRing { op: EdgeOp, k: usize, j: usize, i: usize },
    /// One boundary edge among `pq`, `pr`.
    BoundaryOdd { op: EdgeOp, tap: BoundaryTap },
    /// Both `pq` and `pr` on the boundary.
    BoundaryOdd2 { op: EdgeOp, tap: BoundaryTap },
    BoundaryCorner { k: usize, j: usize, i: usize },
    BoundaryCenter { nb: usize, neighbor: bool },
}

impl Key {
    /// Interior valence the key depends on, if any.
    pub fn valence(&self) -> Option<usize> {
        match *self {
            Key::EvenSpoke { d, .. } | Key::EvenRing { d, .. } | Key::Corner { d, .. } => Some(d),
            _ => None,
        }
    }

    /// Boundary face count the key depends on, if any.
    pub fn boundary_faces(&self) -> Option<usize> {
        match *self {
            Key::BoundaryEvenSpoke { k, .. } | Key::BoundaryEvenRing { k, .. } | Key::BoundaryCorner { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(
            self,
            Key::BoundaryEvenSpoke { .. }
                | Key::BoundaryEvenRing { .. }
                | Key::BoundaryOdd { .. }
                | Key::BoundaryOdd2 { .. }
                | Key::BoundaryCorner { .. }
                | Key::BoundaryCenter { .. }
        )
    }

    pub fn operator(&self) -> &'static str {
        match self {
            Key::EvenSpoke { op, .. }
            | Key::EvenRing { op, .. }
            | Key::Odd { op, .. }
            | Key::BoundaryEvenSpoke { op, .. }
            | Key::BoundaryEvenRing { op, .. }
            | Key::BoundaryOdd { op, .. }
            | Key::BoundaryOdd2 { op, .. } => match op {
                EdgeOp::S1 => "S1",
                EdgeOp::SE => "SEstar",
            },
            _ => "SFstar",
        }
    }

    pub fn parity(&self) -> &'static str {
        match self {
            Key::EvenSpoke { .. } | Key::EvenRing { .. } | Key::BoundaryEvenSpoke { .. } | Key::BoundaryEvenRing { .. } => "even",
            Key::Odd { .. } | Key::BoundaryOdd { .. } | Key::BoundaryOdd2 { .. } => "odd",
            Key::Corner { .. } | Key::BoundaryCorner { .. } => "corner",
            Key::Center { .. } | Key::BoundaryCenter { .. } => "center",
        }
    }

    pub fn position(&self) -> String {
        match *self {
            Key::EvenSpoke { i, .. } => format!("spoke {i}"),
            Key::EvenRing { i, .. } => format!("ring {i}"),
            Key::Odd { tap, .. } => format!("{tap:?}").to_lowercase(),
            Key::Corner { j, .. } => format!("face {j}"),
            Key::Center { neighbor } => (if neighbor { "neighbor" } else { "parent" }).into(),
            Key::BoundaryEvenSpoke { j, i, .. } => format!("target {j} spoke {i}"),
            Key::BoundaryEvenRing { j, i, .. } => format!("target {j} ring {i}"),
            Key::BoundaryOdd { tap, .. } => format!("one-boundary {tap:?}").to_lowercase(),
            Key::BoundaryOdd2 { tap, .. } => format!("two-boundary {tap:?}").to_lowercase(),
            Key::BoundaryCorner { j, i, .. } => format!("target {j} face {i}"),
            Key::BoundaryCenter { nb, neighbor } => format!("{nb} boundary edges {}", if neighbor { "neighbor" } else { "parent" }),
        }
    }
}

/// Loop weight per neighbor.
pub fn loop_alpha(d: usize) -> f64 {
    if d == 3 {
        3.0 / 16.0
    } else {
        3.0 / (8.0 * d as f64)
    }
}

/// Half-box spline parameter.
pub fn halfbox_beta(d: usize) -> f64 {
    match d {
        3 => 1.0 / 12.0,
        4 => 1.0 / 8.0,
        5 => (5.0 + 5f64.sqrt()) / 40.0,
        _ => 0.25,
    }
}

/// `(δ1, δ2, δ3)` of the half-box corner rule.
pub fn halfbox_delta(d: usize) -> (f64, f64, f64) {
    let b = halfbox_beta(d);
    (0.75 - b, 0.125, 0.5 * b)
}

pub fn zeta() -> f64 {
    1.0 / 16.0 / (5f64.sqrt() + 5.0)
}

fn ring_hits(i: usize, d: usize, offsets: &[i64]) -> f64 {
    let d = d as i64;
    offsets.iter().filter(|&&o| (i as i64 - o).rem_euclid(d) == 0).count() as f64
}

/// Oriented 1-form even stencil on spoke `i` (`v -> w_i`, target `v -> m_0`).
pub fn s1_even_spoke(d: usize, i: usize) -> f64 {
    let (a, b) = (loop_alpha(d), halfbox_beta(d));
    -a + ring_hits(i, d, &[0]) * (0.375 - 0.25 * b) + ring_hits(i, d, &[1, -1]) * 0.125 + ring_hits(i, d, &[2, -2]) * b / 8.0
}

/// Oriented 1-form even stencil on ring edge `i` (`w_i -> w_{i+1}`).
pub fn s1_even_ring(d: usize, i: usize) -> f64 {
    let b = halfbox_beta(d);
    -b / 8.0 * ring_hits(i, d, &[0, 1]) + b / 8.0 * ring_hits(i, d, &[-1, -2])
}

/// Half-box corner weight on ring face `j` (`(v, w_j, w_{j+1})`) for the fine
/// corner face inside ring face 0.
pub fn sf_corner(d: usize, j: usize) -> f64 {
    let (d1, d2, d3) = halfbox_delta(d);
    (d1 * ring_hits(j, d, &[0]) + d2 * ring_hits(j, d, &[1, -1]) + d3 * ring_hits(j, d, &[2, -2])) / 4.0
}

pub const S1_ODD: [(OddTap, f64); 4] = [(OddTap::C1, 3.0 / 16.0), (OddTap::C2, -3.0 / 32.0), (OddTap::C4, -1.0 / 32.0), (OddTap::C5, -3.0 / 32.0)];
pub const SF_CENTER: f64 = 1.0 / 16.0;

/// Canonical spoke index under the mirror `i -> d - i`.
pub fn spoke_class(d: usize, i: usize) -> usize {
    i.min(d - i)
}

/// Canonical ring index under the mirror `i -> d - 1 - i`, with the orientation
/// flip of the mirrored ring edge (`None` for a self-mirrored oriented ring).
pub fn ring_class(d: usize, i: usize) -> (usize, bool) {
    let m = d - 1 - i;
    if i <= m {
        (i, false)
    } else {
        (m, true)
    }
}

/// Lexicographically smaller of a boundary `(target, source)` pair and its mirror.
pub fn boundary_class(a: usize, b: usize, ma: usize, mb: usize) -> ((usize, usize), bool) {
    if (a, b) <= (ma, mb) {
        ((a, b), false)
    } else {
        ((ma, mb), true)
    }
}

/// Closed-form interior coefficients for valence `d`.
pub fn closed_form_interior(d: usize) -> BTreeMap<Key, f64> {
    let mut t = BTreeMap::new();
    for i in 0..=d / 2 {
        t.insert(Key::EvenSpoke { op: EdgeOp::S1, d, i }, s1_even_spoke(d, i));
    }
    for i in 0..d {
        let (c, _) = ring_class(d, i);
        if c == i && d - 1 - i != i {
            t.insert(Key::EvenRing { op: EdgeOp::S1, d, i }, s1_even_ring(d, i));
        }
    }
    for j in 0..=d / 2 {
        t.insert(Key::Corner { d, j }, sf_corner(d, j));
    }
    t
}

/// Closed-form valence-independent interior coefficients.
pub fn closed_form_common() -> BTreeMap<Key, f64> {
    let mut t = BTreeMap::new();
    for (tap, v) in S1_ODD {
        t.insert(Key::Odd { op: EdgeOp::S1, tap }, v);
    }
    t.insert(Key::Center { neighbor: false }, SF_CENTER);
    t.insert(Key::Center { neighbor: true }, SF_CENTER);
    t
}

/// Default regular-valence value used for the derivation anchor.
pub const REGULAR: usize = 6;
