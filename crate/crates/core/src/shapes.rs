//! Bundled procedural meshes.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::mesh::{Mesh, Point};

fn p(x: f64, y: f64, z: f64) -> Point {
    Point::new(x, y, z)
}

pub fn triangle() -> Mesh {
    Mesh::new(vec![p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.)], vec![[0, 1, 2]]).unwrap()
}

/// Equilateral triangle with unit edges.
pub fn equilateral() -> Mesh {
    Mesh::new(vec![p(0., 0., 0.), p(1., 0., 0.), p(0.5, 3f64.sqrt() / 2.0, 0.)], vec![[0, 1, 2]]).unwrap()
}

/// Two faces sharing edge (1, 2).
pub fn flap() -> Mesh {
    Mesh::new(
        vec![p(0., 0., 0.), p(1., -0.2, 0.1), p(0.3, 1., -0.1), p(1.2, 0.9, 0.2)],
        vec![[0, 1, 2], [1, 3, 2]],
    )
    .unwrap()
}

pub fn tetrahedron() -> Mesh {
    Mesh::new(
        vec![p(1., 1., 1.), p(1., -1., -1.), p(-1., 1., -1.), p(-1., -1., 1.)],
        vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]],
    )
    .unwrap()
}

pub fn octahedron() -> Mesh {
    Mesh::new(
        vec![p(1., 0., 0.), p(-1., 0., 0.), p(0., 1., 0.), p(0., -1., 0.), p(0., 0., 1.), p(0., 0., -1.)],
        vec![
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ],
    )
    .unwrap()
}

pub fn icosahedron() -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v = vec![
        p(-1., t, 0.),
        p(1., t, 0.),
        p(-1., -t, 0.),
        p(1., -t, 0.),
        p(0., -1., t),
        p(0., 1., t),
        p(0., -1., -t),
        p(0., 1., -t),
        p(t, 0., -1.),
        p(t, 0., 1.),
        p(-t, 0., -1.),
        p(-t, 0., 1.),
    ];
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let v = v.into_iter().map(|x| x.normalize()).collect();
    Mesh::new(v, f).unwrap()
}

/// Unit icosphere after `n` quadrisections with vertices pushed to the sphere.
pub fn icosphere(n: usize) -> Mesh {
    let mut m = icosahedron();
    for _ in 0..n {
        let (f, _) = m.quadrisect().unwrap();
        let pos = f.positions.iter().map(|x| x.normalize()).collect();
        m = Mesh::new(pos, f.faces).unwrap();
    }
    m
}

/// Icosphere with radial bumps `r = 1 + amp * sin(3x) sin(3y) sin(3z)`.
pub fn bumpy_icosphere(n: usize, amp: f64) -> Mesh {
    let m = icosphere(n);
    let pos = m.positions.iter().map(|x| x * (1.0 + amp * (3.0 * x.x).sin() * (3.0 * x.y).sin() * (3.0 * x.z).sin())).collect();
    Mesh::new(pos, m.faces).unwrap()
}

/// Cube subdivided into `n x n` cells per side, projected to the unit sphere and
/// radially perturbed; `6 n^2 + 2` vertices.
pub fn bumpy_cube_sphere(n: usize, amp: f64) -> Mesh {
    let mut ids: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut pos = Vec::new();
    let mut faces = Vec::new();
    let h = n as i64;
    let mut vid = |c: (i64, i64, i64), pos: &mut Vec<Point>| -> usize {
        *ids.entry(c).or_insert_with(|| {
            let x = p(c.0 as f64, c.1 as f64, c.2 as f64) * (2.0 / n as f64) - p(1., 1., 1.);
            pos.push(x);
            pos.len() - 1
        })
    };
    // each side: fixed axis a at value s, spanned by (u, w) with u x w along the outward normal
    let sides: [(usize, i64, usize, usize); 6] = [(0, h, 1, 2), (0, 0, 2, 1), (1, h, 2, 0), (1, 0, 0, 2), (2, h, 0, 1), (2, 0, 1, 0)];
    for &(a, s, u, w) in &sides {
        for i in 0..h {
            for j in 0..h {
                let mut quad = [(0, 0, 0); 4];
                for (q, (di, dj)) in [(0, 0), (1, 0), (1, 1), (0, 1)].iter().enumerate() {
                    let mut c = [0i64; 3];
                    c[a] = s;
                    c[u] = i + di;
                    c[w] = j + dj;
                    quad[q] = (c[0], c[1], c[2]);
                }
                let q: Vec<usize> = quad.iter().map(|&c| vid(c, &mut pos)).collect();
                if (i + j) % 2 == 0 {
                    faces.push([q[0], q[1], q[2]]);
                    faces.push([q[0], q[2], q[3]]);
                } else {
                    faces.push([q[0], q[1], q[3]]);
                    faces.push([q[1], q[2], q[3]]);
                }
            }
        }
    }
    let pos: Vec<Point> = pos
        .into_iter()
        .map(|x| {
            let y = x.normalize();
            y * (1.0 + amp * (2.0 * y.x + 1.0).sin() * (3.0 * y.y).cos() * (2.5 * y.z + 0.5).sin())
        })
        .collect();
    let m = Mesh::new(pos.clone(), faces.clone()).unwrap();
    // fix orientation so that normals point outward
    if (0..m.n_faces()).map(|f| m.face_normal(f).dot(&m.face_centroid(f))).sum::<f64>() < 0.0 {
        let faces = faces.into_iter().map(|[a, b, c]| [a, c, b]).collect();
        return Mesh::new(pos, faces).unwrap();
    }
    m
}

/// Torus with `nu x nv` quads split into triangles.
pub fn torus(nu: usize, nv: usize, big: f64, small: f64) -> Mesh {
    let mut pos = Vec::new();
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            pos.push(p((big + small * v.cos()) * u.cos(), (big + small * v.cos()) * u.sin(), small * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(pos, faces).unwrap()
}

/// Hexagonal patch of the regular triangular lattice with `n` rings.
pub fn disk(n: usize) -> Mesh {
    let n = n as i64;
    let inside = |i: i64, j: i64| i.abs() <= n && j.abs() <= n && (i + j).abs() <= n;
    let mut ids = HashMap::new();
    let mut pos = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            if inside(i, j) {
                ids.insert((i, j), pos.len());
                pos.push(p(i as f64 + 0.5 * j as f64, 0.5 * 3f64.sqrt() * j as f64, 0.0));
            }
        }
    }
    let mut faces = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            let tri = [[(i, j), (i + 1, j), (i, j + 1)], [(i + 1, j), (i + 1, j + 1), (i, j + 1)]];
            for t in tri {
                if t.iter().all(|&(a, b)| inside(a, b)) {
                    faces.push([ids[&t[0]], ids[&t[1]], ids[&t[2]]]);
                }
            }
        }
    }
    Mesh::new(pos, faces).unwrap()
}

/// Disk patch around vertex 0 built from `sectors` lattice wedges of depth `depth`.
///
/// Without `boundary` vertex 0 is interior with valence `sectors`; with
/// `boundary` it lies on the boundary with `sectors` incident faces.
pub fn wedge(sectors: usize, depth: usize, boundary: bool) -> Mesh {
    let total = if !boundary {
        2.0 * PI
    } else if sectors == 1 {
        PI / 2.0
    } else {
        PI
    };
    let span = total / sectors as f64;
    let mut ids: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut pos = vec![Point::zeros()];
    let mut vid = |k: usize, a: usize, b: usize, pos: &mut Vec<Point>| -> usize {
        if a == 0 && b == 0 {
            return 0;
        }
        let key = if a == 0 { (if boundary { k + 1 } else { (k + 1) % sectors }, b, 0) } else { (k, a, b) };
        *ids.entry(key).or_insert_with(|| {
            let (kk, aa, bb) = key;
            let u0 = p((kk as f64 * span).cos(), (kk as f64 * span).sin(), 0.);
            let u1 = p(((kk + 1) as f64 * span).cos(), ((kk + 1) as f64 * span).sin(), 0.);
            pos.push(u0 * aa as f64 + u1 * bb as f64);
            pos.len() - 1
        })
    };
    let mut faces = Vec::new();
    for k in 0..sectors {
        for a in 0..depth {
            for b in 0..depth {
                if a + b < depth {
                    faces.push([vid(k, a, b, &mut pos), vid(k, a + 1, b, &mut pos), vid(k, a, b + 1, &mut pos)]);
                }
                if a + b + 1 < depth {
                    faces.push([vid(k, a + 1, b, &mut pos), vid(k, a + 1, b + 1, &mut pos), vid(k, a, b + 1, &mut pos)]);
                }
            }
        }
    }
    Mesh::new(pos, faces).unwrap()
}
