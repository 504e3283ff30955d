//! Stencil derivation from the commutation constraints on local patches.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::stencils::{closed_form_common, closed_form_interior, EdgeOp, Key, REGULAR};
use super::taps::{Coef, Mode, Row, Taps};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, RefinementMaps};
use crate::shapes;

/// Maximum absolute constraint residual accepted by the solve.
pub const RESIDUAL_GATE: f64 = 1e-12;
/// Relative singular-value threshold for the constraint null space.
const NULL_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_VALENCE: usize = 12;

/// A coarse mesh, its quadrisection and the tap mode used on it.
pub struct Patch {
    pub name: String,
    pub coarse: Mesh,
    pub fine: Mesh,
    pub maps: RefinementMaps,
    pub mode: Mode,
}

impl Patch {
    pub fn new(name: impl Into<String>, coarse: Mesh, mode: Mode) -> Self {
        let (fine, maps) = coarse.quadrisect().expect("patch quadrisection");
        Patch { name: name.into(), coarse, fine, maps, mode }
    }

    pub fn interior(d: usize) -> Self {
        Patch::new(format!("interior valence {d}"), shapes::wedge(d, 5, false), Mode::Interior)
    }

    pub fn boundary(k: usize) -> Self {
        Patch::new(format!("boundary {k} faces"), shapes::wedge(k, 4, true), Mode::Full)
    }
}

#[derive(Clone, Debug, Default)]
struct Lin {
    terms: BTreeMap<usize, f64>,
    c: f64,
}

#[derive(Clone, Debug)]
struct Equation {
    terms: Vec<(usize, f64)>,
    c: f64,
    tag: String,
}

/// Linear system in the unknown stencil keys; fixed keys fold into constants.
pub struct System<'a> {
    fixed: &'a BTreeMap<Key, f64>,
    keys: Vec<Key>,
    index: HashMap<Key, usize>,
    eqs: Vec<Equation>,
}

impl<'a> System<'a> {
    pub fn new(fixed: &'a BTreeMap<Key, f64>) -> Self {
        System { fixed, keys: Vec::new(), index: HashMap::new(), eqs: Vec::new() }
    }

    pub fn unknowns(&self) -> &[Key] {
        &self.keys
    }

    pub fn n_equations(&self) -> usize {
        self.eqs.len()
    }

    fn add(&mut self, lin: &mut Lin, coef: &Coef, scale: f64) {
        match *coef {
            Coef::Const(v) => lin.c += v * scale,
            Coef::Param(key, s) => {
                if let Some(v) = self.fixed.get(&key) {
                    lin.c += v * s * scale;
                } else {
                    let n = self.keys.len();
                    let i = *self.index.entry(key).or_insert(n);
                    if i == n {
                        self.keys.push(key);
                    }
                    *lin.terms.entry(i).or_insert(0.0) += s * scale;
                }
            }
        }
    }

    fn push(&mut self, acc: BTreeMap<usize, Lin>, tag: impl Fn(usize) -> String) {
        for (col, lin) in acc {
            let terms: Vec<_> = lin.terms.into_iter().filter(|(_, v)| *v != 0.0).collect();
            if terms.is_empty() && lin.c == 0.0 {
                continue;
            }
            self.eqs.push(Equation { terms, c: lin.c, tag: tag(col) });
        }
    }

    /// Adds the three commutation relations instantiated on `patch`.
    pub fn add_patch(&mut self, patch: &Patch) {
        let (m, f) = (&patch.coarse, &patch.fine);
        let taps = Taps::new(m, f, &patch.maps, patch.mode);
        let sv: Vec<Option<Row>> = (0..f.n_vertices()).map(|v| taps.vertex_row(v)).collect();
        let s1: Vec<Option<Row>> = (0..f.n_edges()).map(|e| taps.edge_row(e, EdgeOp::S1)).collect();
        let se: Vec<Option<Row>> = (0..f.n_edges()).map(|e| taps.edge_row(e, EdgeOp::SE)).collect();
        let sf: Vec<Option<Row>> = (0..f.n_faces()).map(|g| taps.face_row(g)).collect();

        for fe in 0..f.n_edges() {
            let [a, b] = f.edges[fe];
            let (Some(r), Some(ra), Some(rb)) = (&s1[fe], &sv[a], &sv[b]) else { continue };
            let mut acc: BTreeMap<usize, Lin> = BTreeMap::new();
            for (ce, coef) in r {
                let [t, h] = m.edges[*ce];
                self.add(acc.entry(h).or_default(), coef, 1.0);
                self.add(acc.entry(t).or_default(), coef, -1.0);
            }
            for (c, coef) in rb {
                self.add(acc.entry(*c).or_default(), coef, -1.0);
            }
            for (c, coef) in ra {
                self.add(acc.entry(*c).or_default(), coef, 1.0);
            }
            self.push(acc, |c| format!("S1 d0 = d0 SV on {}, fine edge {fe}, coarse vertex {c}", patch.name));
        }

        for ff in 0..f.n_faces() {
            let es = f.face_edges[ff];
            let Some(rf) = &sf[ff] else { continue };
            if es.iter().any(|&e| s1[e].is_none() || se[e].is_none()) {
                continue;
            }
            let mut acc: BTreeMap<usize, Lin> = BTreeMap::new();
            for (cf, coef) in rf {
                for k in 0..3 {
                    self.add(acc.entry(m.face_edges[*cf][k]).or_default(), coef, m.face_signs[*cf][k]);
                }
            }
            for k in 0..3 {
                for (c, coef) in s1[es[k]].as_ref().unwrap() {
                    self.add(acc.entry(*c).or_default(), coef, -f.face_signs[ff][k]);
                }
            }
            self.push(acc, |c| format!("SF d1 = d1 S1 on {}, fine face {ff}, coarse edge {c}", patch.name));

            let mut acc: BTreeMap<usize, Lin> = BTreeMap::new();
            for (cf, coef) in rf {
                for k in 0..3 {
                    self.add(acc.entry(m.face_edges[*cf][k]).or_default(), coef, 1.0);
                }
            }
            for &e in &es {
                for (c, coef) in se[e].as_ref().unwrap() {
                    self.add(acc.entry(*c).or_default(), coef, -1.0);
                }
            }
            self.push(acc, |c| format!("SF A = A SE on {}, fine face {ff}, coarse edge {c}", patch.name));
        }
    }

    /// Adds `key = value` if `key` is an unknown of the system.
    pub fn pin(&mut self, key: Key, value: f64) -> bool {
        match self.index.get(&key) {
            Some(&i) => {
                self.eqs.push(Equation { terms: vec![(i, 1.0)], c: -value, tag: format!("pin {key:?}") });
                true
            }
            None => false,
        }
    }

    /// Least-squares solution, worst equation residual and null-space basis.
    pub fn solve(&self) -> Result<Solution> {
        let n = self.keys.len();
        let rows = self.eqs.len();
        let mut a = DMatrix::zeros(rows, n);
        let mut b = DVector::zeros(rows);
        for (i, eq) in self.eqs.iter().enumerate() {
            for &(j, v) in &eq.terms {
                a[(i, j)] += v;
            }
            b[i] = -eq.c;
        }
        let (x, null) = if n == 0 {
            (DVector::zeros(0), DMatrix::zeros(0, 0))
        } else {
            // Pad short systems so the SVD exposes all `n` right singular vectors.
            let padded = if rows < n { a.clone().resize_vertically(n, 0.0) } else { a.clone() };
            let bp = if rows < n { b.clone().resize_vertically(n, 0.0) } else { b.clone() };
            let svd = padded.svd(true, true);
            let smax = svd.singular_values.max();
            let x = svd.solve(&bp, NULL_TOL * smax).map_err(|e| Error::SolverFailure(e.to_string()))?;
            let vt = svd.v_t.as_ref().unwrap();
            let cols: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] <= NULL_TOL * smax).collect();
            (x, DMatrix::from_fn(n, cols.len(), |i, j| vt[(cols[j], i)]))
        };
        let r = &a * &x - &b;
        let (worst, residual) = r.iter().enumerate().fold((0, 0.0), |(wi, wv), (i, v)| if v.abs() > wv { (i, v.abs()) } else { (wi, wv) });
        let worst_tag = self.eqs.get(worst).map(|e| e.tag.clone()).unwrap_or_default();
        Ok(Solution { x, residual, worst_tag, null })
    }

    /// Residual of the constant-only system (every key fixed).
    pub fn fixed_residual(&self) -> Result<(f64, String)> {
        if !self.keys.is_empty() {
            return Err(Error::MissingStencil(format!("{:?}", self.keys[0])));
        }
        let s = self.solve()?;
        Ok((s.residual, s.worst_tag))
    }
}

pub struct Solution {
    pub x: DVector<f64>,
    pub residual: f64,
    pub worst_tag: String,
    /// Columns span the null space.
    pub null: DMatrix<f64>,
}

/// Picks the unique point of `{x0 + N t}` whose listed entries are nonnegative.
fn positive_point(x0: &DVector<f64>, null: &DMatrix<f64>, idx: &[usize], context: &str) -> Result<DVector<f64>> {
    let r = null.ncols();
    let tol = 1e-12;
    let unresolved = || Error::UnresolvedDOF { count: r, context: context.to_string() };
    let g = |t: &[f64], i: usize| x0[i] + (0..r).map(|j| null[(i, j)] * t[j]).sum::<f64>();
    match r {
        0 => Ok(x0.clone()),
        1 => {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for &i in idx {
                let (a, b) = (x0[i], null[(i, 0)]);
                if b.abs() < 1e-14 {
                    if a < -tol {
                        return Err(Error::InfeasibleConstraints { residual: -a, relation: format!("positivity in {context}") });
                    }
                } else if b > 0.0 {
                    lo = lo.max(-a / b);
                } else {
                    hi = hi.min(-a / b);
                }
            }
            if !(lo.is_finite() && hi.is_finite()) || hi - lo > 1e-10 {
                return Err(unresolved());
            }
            if lo > hi + 1e-10 {
                return Err(Error::InfeasibleConstraints { residual: lo - hi, relation: format!("positivity in {context}") });
            }
            let t = 0.5 * (lo + hi);
            Ok(x0 + null.column(0) * t)
        }
        2 => {
            let mut vertices: Vec<[f64; 2]> = Vec::new();
            for (p, &i) in idx.iter().enumerate() {
                for &j in &idx[p + 1..] {
                    let (a11, a12, a21, a22) = (null[(i, 0)], null[(i, 1)], null[(j, 0)], null[(j, 1)]);
                    let det = a11 * a22 - a12 * a21;
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    let (b1, b2) = (-x0[i], -x0[j]);
                    let t = [(b1 * a22 - a12 * b2) / det, (a11 * b2 - b1 * a21) / det];
                    if idx.iter().all(|&k| g(&t, k) >= -tol) && !vertices.iter().any(|v| (v[0] - t[0]).hypot(v[1] - t[1]) < 1e-9) {
                        vertices.push(t);
                    }
                }
            }
            if vertices.len() != 1 {
                return Err(if vertices.is_empty() {
                    Error::InfeasibleConstraints { residual: f64::NAN, relation: format!("positivity in {context}") }
                } else {
                    unresolved()
                });
            }
            let t = vertices[0];
            let active: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&k| g(&t, k).abs() <= 1e-10 && null[(k, 0)].hypot(null[(k, 1)]) > 1e-9)
                .collect();
            for &k in &active {
                let len = null[(k, 0)].hypot(null[(k, 1)]);
                for s in [1.0, -1.0] {
                    let u = [-null[(k, 1)] * s / len, null[(k, 0)] * s / len];
                    if active.iter().all(|&l| null[(l, 0)] * u[0] + null[(l, 1)] * u[1] >= -1e-12) {
                        return Err(unresolved());
                    }
                }
            }
            Ok(x0 + null.column(0) * t[0] + null.column(1) * t[1])
        }
        _ => Err(unresolved()),
    }
}

/// One solve of the derivation.
#[derive(Clone, Debug, Serialize)]
pub struct DeriveStep {
    pub context: String,
    pub unknowns: usize,
    pub equations: usize,
    pub residual: f64,
    pub nullity: usize,
    pub tie_breaks: Vec<String>,
}

/// Complete table of stencil coefficients.
#[derive(Clone, Debug)]
pub struct StencilSet {
    table: BTreeMap<Key, f64>,
    interior: BTreeSet<usize>,
    boundary: BTreeSet<usize>,
    pub steps: Vec<DeriveStep>,
}

fn check_residual(s: &Solution) -> Result<()> {
    if s.residual > RESIDUAL_GATE {
        return Err(Error::InfeasibleConstraints { residual: s.residual, relation: s.worst_tag.clone() });
    }
    Ok(())
}

impl StencilSet {
    /// Closed forms plus derived coefficients for interior valences
    /// `3..=max_valence` and boundary vertices with `1..=max_valence` faces.
    pub fn derive(max_valence: usize) -> Result<Self> {
        let mut table = closed_form_common();
        let mut set = StencilSet { table: BTreeMap::new(), interior: BTreeSet::new(), boundary: BTreeSet::new(), steps: Vec::new() };
        table.extend(closed_form_interior(REGULAR));
        set.table = table;
        set.derive_regular()?;
        for d in 3..=max_valence.max(REGULAR) {
            set.ensure_valence(d)?;
        }
        set.derive_boundary_base()?;
        for k in 4..=max_valence.max(3) {
            set.ensure_boundary(k)?;
        }
        Ok(set)
    }

    pub fn get(&self, key: &Key) -> Option<f64> {
        self.table.get(key).copied()
    }

    pub fn table(&self) -> &BTreeMap<Key, f64> {
        &self.table
    }

    pub fn valences(&self) -> &BTreeSet<usize> {
        &self.interior
    }

    pub fn boundary_counts(&self) -> &BTreeSet<usize> {
        &self.boundary
    }

    fn derive_regular(&mut self) -> Result<()> {
        let patch = Patch::interior(REGULAR);
        let mut sys = System::new(&self.table);
        sys.add_patch(&patch);
        let s = sys.solve()?;
        check_residual(&s)?;
        let keys = sys.unknowns().to_vec();
        let idx: Vec<usize> = keys
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, Key::EvenSpoke { op: EdgeOp::SE, .. } | Key::EvenRing { op: EdgeOp::SE, .. } | Key::Odd { op: EdgeOp::SE, .. }))
            .map(|(i, _)| i)
            .collect();
        let nullity = s.null.ncols();
        let x = positive_point(&s.x, &s.null, &idx, &patch.name)?;
        self.steps.push(DeriveStep {
            context: patch.name.clone(),
            unknowns: keys.len(),
            equations: sys.n_equations(),
            residual: s.residual,
            nullity,
            tie_breaks: vec![format!("nonnegative regular SEstar coefficients ({nullity} free parameters)")],
        });
        self.commit(&keys, &x);
        self.interior.insert(REGULAR);
        Ok(())
    }

    fn commit(&mut self, keys: &[Key], x: &DVector<f64>) {
        for (k, v) in keys.iter().zip(x.iter()) {
            // Clean round-off so exact zeros stay exact.
            self.table.insert(*k, if v.abs() < 1e-14 { 0.0 } else { *v });
        }
    }

    /// Derives interior stencils of valence `d` if missing.
    pub fn ensure_valence(&mut self, d: usize) -> Result<()> {
        if self.interior.contains(&d) {
            return Ok(());
        }
        if d < 3 {
            return Err(Error::MissingStencil(format!("interior valence {d}")));
        }
        self.table.extend(closed_form_interior(d));
        let patch = Patch::interior(d);
        let mut sys = System::new(&self.table);
        sys.add_patch(&patch);
        let mut ties = Vec::new();
        if d == 4 && sys.pin(Key::EvenSpoke { op: EdgeOp::SE, d, i: 1 }, 1.0 / 32.0) {
            ties.push("z = 1/32 on spoke 1".to_string());
        }
        if d >= 7 {
            for i in 4..=d / 2 {
                sys.pin(Key::EvenSpoke { op: EdgeOp::SE, d, i }, 0.0);
            }
            for i in 3..d {
                sys.pin(Key::EvenRing { op: EdgeOp::SE, d, i }, 0.0);
            }
            ties.push("support limited to spokes 0..3 and rings 0..2".to_string());
        }
        let s = sys.solve()?;
        check_residual(&s)?;
        if s.null.ncols() > 0 {
            return Err(Error::UnresolvedDOF { count: s.null.ncols(), context: patch.name });
        }
        let keys = sys.unknowns().to_vec();
        self.steps.push(DeriveStep {
            context: patch.name.clone(),
            unknowns: keys.len(),
            equations: sys.n_equations(),
            residual: s.residual,
            nullity: 0,
            tie_breaks: ties,
        });
        self.commit(&keys, &s.x);
        self.interior.insert(d);
        Ok(())
    }

    fn derive_boundary_base(&mut self) -> Result<()> {
        let patches = vec![
            Patch::new("triangle", shapes::triangle(), Mode::Full),
            Patch::new("flap", shapes::flap(), Mode::Full),
            Patch::boundary(1),
            Patch::boundary(2),
            Patch::boundary(3),
        ];
        self.solve_boundary(&patches, "boundary 1..3 faces joint")?;
        for k in 1..=3 {
            self.boundary.insert(k);
        }
        let negative: Vec<_> = self
            .table
            .iter()
            .filter(|(k, v)| matches!(k, Key::BoundaryCorner { .. } | Key::BoundaryCenter { .. }) && **v < -1e-14)
            .collect();
        if let Some((k, v)) = negative.first() {
            return Err(Error::InfeasibleConstraints { residual: -**v, relation: format!("nonnegative {k:?}") });
        }
        Ok(())
    }

    fn solve_boundary(&mut self, patches: &[Patch], context: &str) -> Result<()> {
        for p in patches {
            for r in &p.coarse.rings {
                if !r.boundary {
                    self.ensure_valence(r.valence())?;
                }
            }
        }
        let mut sys = System::new(&self.table);
        for p in patches {
            sys.add_patch(p);
        }
        let s = sys.solve()?;
        check_residual(&s)?;
        if s.null.ncols() > 0 {
            return Err(Error::UnresolvedDOF { count: s.null.ncols(), context: context.to_string() });
        }
        let keys = sys.unknowns().to_vec();
        self.steps.push(DeriveStep {
            context: context.to_string(),
            unknowns: keys.len(),
            equations: sys.n_equations(),
            residual: s.residual,
            nullity: 0,
            tie_breaks: Vec::new(),
        });
        self.commit(&keys, &s.x);
        Ok(())
    }

    /// Derives boundary stencils for boundary vertices with `k` faces if missing.
    pub fn ensure_boundary(&mut self, k: usize) -> Result<()> {
        if self.boundary.contains(&k) {
            return Ok(());
        }
        if k == 0 {
            return Err(Error::MissingStencil("boundary vertex without faces".into()));
        }
        if k <= 3 {
            return self.derive_boundary_base();
        }
        self.solve_boundary(&[Patch::boundary(k)], &format!("boundary {k} faces"))?;
        self.boundary.insert(k);
        Ok(())
    }

    /// Makes sure every vertex configuration of `mesh` has stencils.
    pub fn ensure_mesh(&mut self, mesh: &Mesh) -> Result<()> {
        let mut need_i = BTreeSet::new();
        let mut need_b = BTreeSet::new();
        for r in &mesh.rings {
            if r.boundary {
                need_b.insert(r.faces.len());
            } else {
                need_i.insert(r.valence());
            }
        }
        for d in need_i {
            self.ensure_valence(d)?;
        }
        for k in need_b {
            self.ensure_boundary(k)?;
        }
        Ok(())
    }

    pub fn covers(&self, mesh: &Mesh) -> bool {
        mesh.rings.iter().all(|r| if r.boundary { self.boundary.contains(&r.faces.len()) } else { self.interior.contains(&r.valence()) })
    }

    /// Re-verifies every relation on the derivation patches with all
    /// coefficients fixed; returns the worst residual and where it occurred.
    pub fn verify(&self) -> Result<(f64, String)> {
        let mut worst = (0.0, String::new());
        let mut patches: Vec<Patch> = self.interior.iter().map(|&d| Patch::interior(d)).collect();
        patches.extend(self.boundary.iter().map(|&k| Patch::boundary(k)));
        patches.push(Patch::new("triangle", shapes::triangle(), Mode::Full));
        patches.push(Patch::new("flap", shapes::flap(), Mode::Full));
        for p in &patches {
            let mut sys = System::new(&self.table);
            sys.add_patch(p);
            let (r, tag) = sys.fixed_residual()?;
            if r > worst.0 {
                worst = (r, tag);
            }
        }
        Ok(worst)
    }

    /// JSON dump keyed by operator, valence, parity and boundary flag.
    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .table
            .iter()
            .map(|(k, v)| {
                serde_json::json!({
                    "operator": k.operator(),
                    "valence": k.valence().or(k.boundary_faces()),
                    "parity": k.parity(),
                    "boundary": k.is_boundary(),
                    "position": k.position(),
                    "value": v,
                })
            })
            .collect();
        serde_json::json!({ "coefficients": entries, "derivation": self.steps })
    }
}

static CACHE: OnceLock<Mutex<Arc<StencilSet>>> = OnceLock::new();

/// Shared stencil table, derived once and extended on demand for meshes
/// with configurations beyond the default range.
pub fn stencils_for(mesh: &Mesh) -> Result<Arc<StencilSet>> {
    let cell = match CACHE.get() {
        Some(c) => c,
        None => {
            let set = StencilSet::derive(DEFAULT_MAX_VALENCE)?;
            CACHE.get_or_init(|| Mutex::new(Arc::new(set)))
        }
    };
    let mut guard = cell.lock().unwrap();
    if !guard.covers(mesh) {
        let mut set = (**guard).clone();
        set.ensure_mesh(mesh)?;
        *guard = Arc::new(set);
    }
    Ok(guard.clone())
}

/// The shared table for the default valence range.
pub fn standard_stencils() -> Result<Arc<StencilSet>> {
    stencils_for(&shapes::triangle())
}
