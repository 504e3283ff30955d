//! Text formats: OBJ meshes, halfedge and mean-curl forms, directional fields,
//! matchings and design constraints.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::halfedge::{HalfedgeForm, MeanCurlForm};
use crate::mesh::{Mesh, Point};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn content_lines<R: Read>(r: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push((i + 1, t.to_string()));
        }
    }
    Ok(out)
}

pub fn read_obj<R: Read>(r: R) -> Result<Mesh> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in content_lines(r)? {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = num(toks.next(), ln, "x")?;
                let y = num(toks.next(), ln, "y")?;
                let z = num(toks.next(), ln, "z")?;
                positions.push(Point::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<&str> = toks.collect();
                if idx.len() != 3 {
                    return Err(parse_err(ln, format!("face with {} vertices; only triangles are supported", idx.len())));
                }
                let mut face = [0usize; 3];
                for (k, tok) in idx.iter().enumerate() {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = num(Some(head), ln, "vertex index")?;
                    let n = positions.len() as i64;
                    let abs = if i < 0 { n + i } else { i - 1 };
                    if i == 0 || abs < 0 {
                        return Err(parse_err(ln, format!("vertex index {i} out of range")));
                    }
                    face[k] = abs as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Mesh::new(positions, faces)
}

pub fn write_obj<W: Write>(mesh: &Mesh, mut w: W) -> Result<()> {
    for p in &mesh.positions {
        writeln!(w, "v {:.17e} {:.17e} {:.17e}", p.x, p.y, p.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

fn header(lines: &[(usize, String)], tag: &str, arity: usize) -> Result<Vec<usize>> {
    let (ln, line) = lines.first().ok_or_else(|| parse_err(1, format!("missing `{tag}` header")))?;
    let mut toks = line.split_whitespace();
    if toks.next() != Some(tag) {
        return Err(parse_err(*ln, format!("expected `{tag}` header")));
    }
    let vals = (0..arity).map(|_| num(toks.next(), *ln, "header count")).collect::<Result<Vec<usize>>>()?;
    if toks.next().is_some() {
        return Err(parse_err(*ln, "trailing tokens in header"));
    }
    Ok(vals)
}

fn rows(lines: &[(usize, String)], count: usize, width: usize, what: &str) -> Result<Vec<Vec<f64>>> {
    let body = &lines[1..];
    if body.len() != count {
        let ln = body.last().map(|l| l.0).unwrap_or(lines[0].0);
        return Err(parse_err(ln, format!("expected {count} {what} lines, found {}", body.len())));
    }
    body.iter()
        .map(|(ln, line)| {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != width {
                return Err(parse_err(*ln, format!("expected {width} values, found {}", toks.len())));
            }
            toks.iter().map(|t| num(Some(t), *ln, "value")).collect()
        })
        .collect()
}

pub fn read_gamma<R: Read>(r: R) -> Result<HalfedgeForm> {
    let lines = content_lines(r)?;
    let nf = header(&lines, "GAMMA", 1)?[0];
    let vals: Vec<f64> = rows(&lines, nf, 2, "face")?.concat();
    Ok(HalfedgeForm { values: DVector::from_vec(vals) })
}

pub fn write_gamma<W: Write>(gamma: &HalfedgeForm, mut w: W) -> Result<()> {
    let nf = gamma.values.len() / 2;
    writeln!(w, "GAMMA {nf}")?;
    for f in 0..nf {
        writeln!(w, "{:.17e} {:.17e}", gamma.values[2 * f], gamma.values[2 * f + 1])?;
    }
    Ok(())
}

pub fn read_mean_curl<R: Read>(r: R) -> Result<MeanCurlForm> {
    let lines = content_lines(r)?;
    let ne = header(&lines, "MEANCURL", 1)?[0];
    let body = rows(&lines, ne, 2, "edge")?;
    Ok(MeanCurlForm {
        z1: DVector::from_iterator(ne, body.iter().map(|r| r[0])),
        eps: DVector::from_iterator(ne, body.iter().map(|r| r[1])),
    })
}

pub fn write_mean_curl<W: Write>(mc: &MeanCurlForm, mut w: W) -> Result<()> {
    writeln!(w, "MEANCURL {}", mc.z1.len())?;
    for (z, e) in mc.z1.iter().zip(mc.eps.iter()) {
        writeln!(w, "{z:.17e} {e:.17e}")?;
    }
    Ok(())
}

/// `(N, vectors)` with `vectors[f·N + k]`.
pub fn read_dirfield<R: Read>(r: R) -> Result<(usize, Vec<Point>)> {
    let lines = content_lines(r)?;
    let h = header(&lines, "DIRFIELD", 2)?;
    let (n, nf) = (h[0], h[1]);
    if n == 0 {
        return Err(parse_err(lines[0].0, "degree N must be at least 1"));
    }
    let body = rows(&lines, nf, 3 * n, "face")?;
    Ok((n, body.iter().flat_map(|r| r.chunks(3).map(|c| Point::new(c[0], c[1], c[2])).collect::<Vec<_>>()).collect()))
}

pub fn write_dirfield<W: Write>(n: usize, vectors: &[Point], mut w: W) -> Result<()> {
    let nf = vectors.len() / n.max(1);
    writeln!(w, "DIRFIELD {n} {nf}")?;
    for f in 0..nf {
        let row: Vec<String> = vectors[f * n..(f + 1) * n].iter().map(|v| format!("{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z)).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// One entry per edge in canonical order; `*` marks boundary edges.
pub fn read_matching<R: Read>(r: R) -> Result<Vec<Option<i64>>> {
    let lines = content_lines(r)?;
    let ne = header(&lines, "MATCHING", 1)?[0];
    let body = &lines[1..];
    if body.len() != ne {
        let ln = body.last().map(|l| l.0).unwrap_or(lines[0].0);
        return Err(parse_err(ln, format!("expected {ne} edge lines, found {}", body.len())));
    }
    body.iter().map(|(ln, t)| if t == "*" { Ok(None) } else { num(Some(t), *ln, "matching").map(Some) }).collect()
}

pub fn write_matching<W: Write>(matching: &[Option<i64>], mut w: W) -> Result<()> {
    writeln!(w, "MATCHING {}", matching.len())?;
    for m in matching {
        match m {
            Some(i) => writeln!(w, "{i}")?,
            None => writeln!(w, "*")?,
        }
    }
    Ok(())
}

/// Lines `face vx vy vz`.
pub fn read_constraints<R: Read>(r: R) -> Result<Vec<(usize, Point)>> {
    content_lines(r)?
        .into_iter()
        .map(|(ln, line)| {
            let mut toks = line.split_whitespace();
            let f = num(toks.next(), ln, "face index")?;
            let x = num(toks.next(), ln, "vx")?;
            let y = num(toks.next(), ln, "vy")?;
            let z = num(toks.next(), ln, "vz")?;
            if toks.next().is_some() {
                return Err(parse_err(ln, "expected `face vx vy vz`"));
            }
            Ok((f, Point::new(x, y, z)))
        })
        .collect()
}

pub fn open(path: impl AsRef<Path>) -> Result<File> {
    Ok(File::open(path)?)
}

pub fn create(path: impl AsRef<Path>) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    read_obj(open(path)?)
}

pub fn save_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path)?;
    write_obj(mesh, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn roundtrip_obj(m: &Mesh) -> Mesh {
        let mut buf = Vec::new();
        write_obj(m, &mut buf).unwrap();
        read_obj(buf.as_slice()).unwrap()
    }

    #[test]
    fn obj_roundtrip_is_exact() {
        let m = shapes::icosphere(1);
        let r = roundtrip_obj(&m);
        assert_eq!(r.faces, m.faces);
        assert_eq!(r.positions, m.positions);
        assert_eq!(r.edges, m.edges);
    }

    #[test]
    fn obj_ignores_other_records() {
        let src = "# comment\nmtllib x.mtl\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nvt 0 0\nf 1/1/1 2//1 -1\n";
        let m = read_obj(src.as_bytes()).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_rejects_quads_with_line() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(read_obj(src.as_bytes()), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn gamma_roundtrip() {
        let g = HalfedgeForm { values: DVector::from_vec(vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0]) };
        let mut buf = Vec::new();
        write_gamma(&g, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("GAMMA 2\n"));
        assert_eq!(read_gamma(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn mean_curl_roundtrip() {
        let mc = MeanCurlForm { z1: DVector::from_vec(vec![1.0, 2.0]), eps: DVector::from_vec(vec![-0.5, 0.25]) };
        let mut buf = Vec::new();
        write_mean_curl(&mc, &mut buf).unwrap();
        assert_eq!(read_mean_curl(buf.as_slice()).unwrap(), mc);
    }

    #[test]
    fn gamma_count_mismatch_reports_line() {
        let src = "GAMMA 2\n1 2\n3\n";
        assert!(matches!(read_gamma(src.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn dirfield_and_matching_roundtrip() {
        let v = vec![Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0), Point::new(0.5, 0.5, 0.0), Point::new(-1.0, 0.0, 0.0)];
        let mut buf = Vec::new();
        write_dirfield(2, &v, &mut buf).unwrap();
        assert_eq!(read_dirfield(buf.as_slice()).unwrap(), (2, v));
        let m = vec![Some(0), None, Some(-1), Some(3)];
        let mut buf = Vec::new();
        write_matching(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "MATCHING 4\n0\n*\n-1\n3\n");
        assert_eq!(read_matching(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn constraints_parse_and_errors() {
        let c = read_constraints("# design\n0 1 0 0\n\n3 0 1 0\n".as_bytes()).unwrap();
        assert_eq!(c, vec![(0, Point::new(1.0, 0.0, 0.0)), (3, Point::new(0.0, 1.0, 0.0))]);
        let bad = read_constraints("0 1 0 0\n2 1 x 0\n".as_bytes());
        assert!(matches!(bad, Err(Error::Parse { line: 2, .. })), "{bad:?}");
        assert!(read_constraints("".as_bytes()).unwrap().is_empty());
    }
}
