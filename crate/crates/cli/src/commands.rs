use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use pcvf::branched::{branched_subdivision, matching_indices, DirectionalField, VertexClass};
use pcvf::halfedge::{curl_gamma, HalfedgeForm};
use pcvf::io;
use pcvf::sem::{
    design_field, operator_error_experiment, projection_error_experiment, sample_field, sem_hodge_decompose, smooth_test_field,
    spectrum_experiment, SemContext,
};
use pcvf::subdivision::{commutation_report, spectral_check, standard_stencils, Hierarchy, StencilSet};
use pcvf::{Error, Mesh, Result};
use serde_json::{json, Value};

use crate::report::Report;
use crate::{Experiment, RunConfig, StencilAction};

const BUNDLED: [(&str, &str); 5] = [
    ("tet", include_str!("../../../meshes/tet.obj")),
    ("octahedron", include_str!("../../../meshes/octahedron.obj")),
    ("icosphere", include_str!("../../../meshes/icosphere.obj")),
    ("torus", include_str!("../../../meshes/torus.obj")),
    ("disk", include_str!("../../../meshes/disk.obj")),
];

/// A bundled mesh by name, or an OBJ file.
pub fn load_mesh(name: &str) -> Result<Mesh> {
    match BUNDLED.iter().find(|b| b.0 == name) {
        Some((_, src)) => io::read_obj(src.as_bytes()),
        None => io::load_obj(name),
    }
}

fn save_gamma(cfg: &RunConfig, name: &str, values: &DVector<f64>) -> Result<()> {
    let mut w = io::create(cfg.out.join(name))?;
    io::write_gamma(&HalfedgeForm { values: values.clone() }, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load_gamma(path: &Path, mesh: &Mesh) -> Result<DVector<f64>> {
    let g = io::read_gamma(io::open(path)?)?.values;
    if g.len() != 2 * mesh.n_faces() {
        return Err(Error::DimensionMismatch(format!("field has {} faces, mesh has {}", g.len() / 2, mesh.n_faces())));
    }
    Ok(g)
}

/// Fine positions `S_V x` through every level of the hierarchy.
fn subdivided_mesh(h: &Hierarchy) -> Result<Mesh> {
    let mut pos = h.meshes[0].positions.clone();
    for s in &h.sets {
        let cols: Vec<DVector<f64>> = (0..3).map(|c| s.v.apply(&DVector::from_iterator(pos.len(), pos.iter().map(|p| p[c])))).collect();
        pos = (0..cols[0].len()).map(|i| pcvf::Point::new(cols[0][i], cols[1][i], cols[2][i])).collect();
    }
    h.finest().with_positions(pos)
}

fn commutation_json(h: &Hierarchy) -> (f64, Vec<Value>) {
    let mut worst = 0.0f64;
    let levels = (0..h.levels())
        .map(|k| {
            let r = commutation_report(&h.meshes[k], &h.meshes[k + 1], &h.sets[k]);
            worst = worst.max(r.max());
            json!({ "level": k + 1, "residuals": r, "max": r.max() })
        })
        .collect();
    (worst, levels)
}

pub fn subdivide(cfg: &RunConfig, mesh: &str, field: Option<&Path>) -> Result<Report> {
    let mesh = load_mesh(mesh)?;
    let tol = cfg.tol.unwrap_or(1e-10);
    fs::create_dir_all(&cfg.out)?;
    let h = Hierarchy::build(&mesh, cfg.level)?;
    io::save_obj(&subdivided_mesh(&h)?, cfg.out.join("fine.obj"))?;
    let (worst, levels) = commutation_json(&h);
    let mut details = json!({ "levels": levels, "fine_vertices": h.finest().n_vertices(), "fine_faces": h.finest().n_faces() });
    if let Some(path) = field {
        let g = load_gamma(path, &mesh)?;
        if cfg.level == 0 {
            fs::copy(path, cfg.out.join("fine.gamma"))?;
        } else {
            let fine = h.sets.iter().fold(g.clone(), |acc, s| s.gamma.apply(&acc));
            details["coarse_curl_linf"] = json!(curl_gamma(&mesh).apply(&g).amax());
            details["fine_curl_linf"] = json!(curl_gamma(h.finest()).apply(&fine).amax());
            details["field_norm"] = json!(g.norm());
            save_gamma(cfg, "fine.gamma", &fine)?;
        }
    }
    Ok(Report::new("subdivide", tol, worst, details))
}

pub fn subdivide_directional(cfg: &RunConfig, mesh: &str, dirfield: &Path, matching: &Path) -> Result<Report> {
    let mesh = load_mesh(mesh)?;
    let tol = cfg.tol.unwrap_or(1e-10);
    let (n, vectors) = io::read_dirfield(io::open(dirfield)?)?;
    let field = DirectionalField::new(&mesh, n, vectors, io::read_matching(io::open(matching)?)?)?;
    fs::create_dir_all(&cfg.out)?;
    let h = Hierarchy::build(&mesh, cfg.level)?;
    let fine_mesh = subdivided_mesh(&h)?;
    io::save_obj(&fine_mesh, cfg.out.join("fine.obj"))?;
    if cfg.level == 0 {
        fs::copy(dirfield, cfg.out.join("fine.dirfield"))?;
        fs::copy(matching, cfg.out.join("fine.matching"))?;
        return Ok(Report::new("subdivide", tol, 0.0, json!({ "n": n, "levels": [] })));
    }
    let coarse_idx = matching_indices(&mesh, &field.matching, n);
    let mut cur = mesh.clone();
    let mut m = field.matching.clone();
    let mut gamma = field.to_gamma(&mesh);
    let mut worst = 0.0f64;
    let mut levels = Vec::new();
    for k in 0..cfg.level {
        let step = branched_subdivision(&cur, &m, n)?;
        gamma = step.apply(&gamma);
        worst = worst.max(step.commutation.max());
        levels.push(json!({ "level": k + 1, "residuals": step.commutation, "max": step.commutation.max() }));
        cur = step.fine;
        m = step.fine_matching;
    }
    let fine_idx = matching_indices(&cur, &m, n);
    let preserved = (0..mesh.n_vertices()).all(|v| fine_idx.index[v] == coarse_idx.index[v])
        && (mesh.n_vertices()..cur.n_vertices()).all(|v| matches!(fine_idx.class[v], VertexClass::Regular | VertexClass::Unclassified));
    let fine = DirectionalField::from_gamma(&fine_mesh, n, &gamma, m.clone())?;
    let mut w = io::create(cfg.out.join("fine.dirfield"))?;
    io::write_dirfield(n, &fine.vectors, &mut w)?;
    w.flush()?;
    let mut w = io::create(cfg.out.join("fine.matching"))?;
    io::write_matching(&m, &mut w)?;
    w.flush()?;
    let singular: Vec<Value> =
        coarse_idx.fractional().iter().map(|&v| json!({ "vertex": v, "index": coarse_idx.index[v] })).collect();
    let mut r = Report::new(
        "subdivide",
        tol,
        worst,
        json!({ "n": n, "levels": levels, "singularities": singular, "singularities_preserved": preserved }),
    );
    r.pass &= preserved;
    Ok(r)
}

pub fn hodge(cfg: &RunConfig, mesh: &str, field: Option<&Path>) -> Result<Report> {
    let mesh = load_mesh(mesh)?;
    let tol = cfg.tol.unwrap_or(1e-8);
    let gamma = match field {
        Some(p) => load_gamma(p, &mesh)?,
        None => sample_field(&mesh, &smooth_test_field),
    };
    let ctx = SemContext::build(&mesh, cfg.level)?;
    let d = sem_hodge_decompose(&ctx, &HalfedgeForm { values: gamma.clone() })?;
    fs::create_dir_all(&cfg.out)?;
    save_gamma(cfg, "exact.gamma", &d.parts.exact)?;
    save_gamma(cfg, "coexact.gamma", &d.parts.coexact)?;
    save_gamma(cfg, "harmonic.gamma", &d.parts.harmonic)?;
    let norm = |x: &DVector<f64>| x.dot(&ctx.system.masses.gamma.apply(x)).max(0.0).sqrt();
    let details = json!({
        "reconstruction": d.reconstruction,
        "orthogonality": d.orthogonality,
        "harmonic_dimension": d.harmonic_dim,
        "norms": { "input": norm(&gamma), "exact": norm(&d.parts.exact), "coexact": norm(&d.parts.coexact), "harmonic": norm(&d.parts.harmonic) },
        "divergence": d.divergence,
    });
    Ok(Report::new("hodge", tol, d.reconstruction.max(d.orthogonality), details))
}

fn to_rows(rows: Value) -> Vec<Value> {
    rows.as_array().cloned().unwrap_or_default()
}

pub fn experiment(cfg: &RunConfig, name: Experiment, mesh: &str, count: usize) -> Result<Report> {
    let mesh = load_mesh(mesh)?;
    let h = Hierarchy::build(&mesh, cfg.level)?;
    let l = cfg.level;
    let mut report = match name {
        Experiment::ProjectionError => {
            let r = projection_error_experiment(&h, &smooth_test_field)?;
            let l2 = |k: usize, m: &str| {
                r.rows.iter().find(|x| x.level == k && serde_json::to_value(x.method).unwrap() == m).map_or(0.0, |x| x.l2)
            };
            // Largest relative excess of the SEM error over the FEM error.
            let excess = (0..l).map(|k| (l2(k, "SEM") - l2(k, "FEM")) / l2(k, "FEM").max(f64::MIN_POSITIVE)).fold(f64::NEG_INFINITY, f64::max);
            let slope_ok = r.sem_slope.map_or(l < 3, |s| (1.5..=3.0).contains(&s));
            let mut rep = Report::new(
                "experiment projection-error",
                cfg.tol.unwrap_or(0.0),
                excess.max(0.0),
                json!({ "rows": r.rows, "sem_slope": r.sem_slope, "fem_slope": r.fem_slope, "slope_range": [1.5, 3.0], "slope_ok": slope_ok }),
            );
            rep.pass &= slope_ok;
            rep.rows = Some(to_rows(json!(r.rows)));
            rep
        }
        Experiment::OperatorError => {
            let r = operator_error_experiment(&h, &smooth_test_field)?;
            let e: Vec<f64> = r.rows.iter().map(|x| x.l2).collect();
            let head = l.min(2);
            let decreasing = (0..head).all(|k| e[k + 1] < e[k]);
            let plateau = if l >= 1 { (e[l] - e[l - 1]).abs() / e[l - 1].max(f64::MIN_POSITIVE) } else { 0.0 };
            let mut rep = Report::new(
                "experiment operator-error",
                cfg.tol.unwrap_or(0.10),
                plateau,
                json!({ "rows": r.rows, "decreasing_to_k2": decreasing, "last_step_change": plateau }),
            );
            rep.pass &= decreasing;
            rep.rows = Some(to_rows(json!(r.rows)));
            rep
        }
        Experiment::Spectrum => {
            let r = spectrum_experiment(&h, count)?;
            let rows: Vec<Value> = (0..r.sem_relative.len())
                .map(|i| json!({ "index": i + 1, "reference": r.reference[i], "SEM": r.sem[i], "FEM": r.fem[i], "SEM_relative": r.sem_relative[i], "FEM_relative": r.fem_relative[i] }))
                .collect();
            let mut rep = Report::new(
                "experiment spectrum",
                cfg.tol.unwrap_or(0.40),
                1.0 - r.sem_better_fraction,
                json!({ "report": r, "required_fraction": 0.60 }),
            );
            rep.rows = Some(rows);
            rep
        }
    };
    report.details["level"] = json!(l);
    report.details["coarse_vertices"] = json!(mesh.n_vertices());
    Ok(report)
}

fn stencil_table(max_valence: usize) -> Result<std::sync::Arc<StencilSet>> {
    if max_valence <= 12 {
        standard_stencils()
    } else {
        Ok(std::sync::Arc::new(StencilSet::derive(max_valence)?))
    }
}

pub fn stencil(cfg: &RunConfig, action: StencilAction, max_valence: usize) -> Result<Report> {
    fs::create_dir_all(&cfg.out)?;
    match action {
        StencilAction::Derive => {
            let set = StencilSet::derive(max_valence)?;
            let worst = set.steps.iter().map(|s| s.residual).fold(0.0, f64::max);
            fs::write(cfg.out.join("derivation.json"), serde_json::to_string_pretty(&set.steps).expect("steps serialize"))?;
            Ok(Report::new(
                "stencil derive",
                cfg.tol.unwrap_or(1e-12),
                worst,
                json!({ "steps": set.steps.len(), "coefficients": set.table().len(), "max_valence": max_valence }),
            ))
        }
        StencilAction::Dump => {
            let set = stencil_table(max_valence)?;
            fs::write(cfg.out.join("stencils.json"), serde_json::to_string_pretty(&set.to_json()).expect("table serializes"))?;
            Ok(Report::new("stencil dump", cfg.tol.unwrap_or(1e-12), 0.0, json!({ "coefficients": set.table().len(), "zeta": pcvf::subdivision::stencils::zeta() })))
        }
        StencilAction::Check => {
            let set = stencil_table(max_valence)?;
            let (residual, worst) = set.verify()?;
            let mut flagged = Vec::new();
            let mut max_sub = 0.0f64;
            for d in 3..=max_valence {
                for boundary in [false, true] {
                    for sp in spectral_check(&set, d, boundary)? {
                        max_sub = max_sub.max(sp.subdominant);
                        if sp.flagged {
                            flagged.push(json!({ "op": sp.op, "valence": d, "boundary": boundary, "subdominant": sp.subdominant }));
                        }
                    }
                }
            }
            let v4: Vec<f64> = pcvf::subdivision::spectral::local_spectrum(&set, pcvf::subdivision::LocalOp::DualEdge, 4, false)?
                .eigenvalues
                .iter()
                .map(|e| e.0)
                .collect();
            let mut r = Report::new(
                "stencil check",
                cfg.tol.unwrap_or(1e-12),
                residual,
                json!({ "worst_relation": worst, "max_subdominant": max_sub, "flagged": flagged, "valence4_dual_edge_spectrum": v4 }),
            );
            r.pass &= flagged.is_empty();
            Ok(r)
        }
    }
}

pub fn design(cfg: &RunConfig, mesh: &str, constraints: &Path) -> Result<Report> {
    let mesh = load_mesh(mesh)?;
    let cons = io::read_constraints(io::open(constraints)?)?;
    let ctx = SemContext::build(&mesh, cfg.level)?;
    let d = design_field(&ctx, &cons)?;
    fs::create_dir_all(&cfg.out)?;
    save_gamma(cfg, "coarse.gamma", &d.coarse.values)?;
    save_gamma(cfg, "fine.gamma", &d.fine.values)?;
    let residual = cons
        .iter()
        .map(|(f, v)| {
            let p = pcvf::sem::pack_face_vector(&mesh, *f, v);
            let got = [d.coarse.values[2 * f], d.coarse.values[2 * f + 1]];
            ((got[0] - p[0]).abs().max((got[1] - p[1]).abs())) / p[0].abs().max(p[1].abs()).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    Ok(Report::new(
        "design",
        cfg.tol.unwrap_or(1e-10),
        residual,
        json!({ "constraints": cons.len(), "energy": d.energy, "projection_residual": d.projection_residual }),
    ))
}
