use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{Mat3, SimError, Vec3};

const MIN_AREA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, SimError> {
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(SimError::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        for (i, t) in triangles.iter().enumerate() {
            if let Some(&bad) = t.iter().find(|&&k| k >= vertices.len()) {
                return Err(SimError::InvalidMesh(format!(
                    "triangle {i} references vertex {bad} of {}",
                    vertices.len()
                )));
            }
            let [a, b, c] = t.map(|k| vertices[k]);
            if 0.5 * (b - a).cross(c - a).norm() <= MIN_AREA {
                return Err(SimError::InvalidMesh(format!("triangle {i} is degenerate")));
            }
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|k| self.vertices[k])
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let inf = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        self.vertices
            .iter()
            .fold((inf, -inf), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Rotates every vertex then translates it.
    pub fn transformed(&self, rotation: &Mat3, translation: Vec3) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|&v| rotation.apply(v) + translation)
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Use count of every undirected edge.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn is_closed(&self) -> bool {
        self.edge_counts().values().all(|&c| c == 2)
    }

    /// Positive when triangles wind counter-clockwise seen from outside.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|k| self.vertices[k]);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    /// Writes `v x y z` / `f i j k` lines (1-based indices).
    pub fn write_obj<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    /// Reads the `v` / `f` subset written by [`TriangleMesh::write_obj`].
    /// Blank lines and `#` comments are skipped.
    pub fn read_obj<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| SimError::ObjParse { line: n + 1, msg: e.to_string() })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| SimError::ObjParse { line: n + 1, msg: msg.to_string() };
            let mut parts = line.split_whitespace();
            let tag = parts.next().unwrap_or_default();
            let fields: Vec<&str> = parts.collect();
            if fields.len() != 3 {
                return Err(err("expected exactly 3 fields"));
            }
            match tag {
                "v" => {
                    let c: Vec<f64> = fields
                        .iter()
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err("bad coordinate"))?;
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                "f" => {
                    let mut idx = [0usize; 3];
                    for (slot, s) in idx.iter_mut().zip(&fields) {
                        let k: usize = s.parse().map_err(|_| err("bad face index"))?;
                        if k == 0 {
                            return Err(err("face indices are 1-based"));
                        }
                        *slot = k - 1;
                    }
                    triangles.push(idx);
                }
                _ => return Err(err("unsupported record")),
            }
        }
        Self::new(vertices, triangles)
    }
}

/// Canonical object shapes. All rest on the local `z = 0` plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    Cuboid,
    Hemisphere,
    TriangularPrism,
    Cylinder,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] = [
        ObjectKind::Cuboid,
        ObjectKind::Hemisphere,
        ObjectKind::TriangularPrism,
        ObjectKind::Cylinder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Cuboid => "cuboid",
            ObjectKind::Hemisphere => "hemisphere",
            ObjectKind::TriangularPrism => "prism",
            ObjectKind::Cylinder => "cylinder",
        }
    }

    pub fn mesh(self) -> TriangleMesh {
        match self {
            ObjectKind::Cuboid => cuboid(CUBOID_HALF_WIDTH, CUBOID_HEIGHT),
            ObjectKind::Hemisphere => hemisphere(HEMISPHERE_RADIUS, 24, 8),
            ObjectKind::TriangularPrism => prism(PRISM_HALF_WIDTH, PRISM_HEIGHT),
            ObjectKind::Cylinder => cylinder(CYLINDER_RADIUS, CYLINDER_HALF_LENGTH, CYLINDER_SEGMENTS),
        }
    }
}

pub const CUBOID_HALF_WIDTH: f64 = 0.4;
pub const CUBOID_HEIGHT: f64 = 0.3;
pub const HEMISPHERE_RADIUS: f64 = 0.4;
pub const PRISM_HALF_WIDTH: f64 = 0.4;
pub const PRISM_HEIGHT: f64 = 0.4;
pub const CYLINDER_RADIUS: f64 = 0.25;
pub const CYLINDER_HALF_LENGTH: f64 = 0.4;
pub const CYLINDER_SEGMENTS: usize = 32;

/// The four canonical objects, indexed by object id.
pub fn build_object_set() -> Vec<TriangleMesh> {
    ObjectKind::ALL.iter().map(|k| k.mesh()).collect()
}

fn quad(tris: &mut Vec<[usize; 3]>, a: usize, b: usize, c: usize, d: usize) {
    // a-b-c-d counter-clockwise seen from outside
    tris.push([a, b, c]);
    tris.push([a, c, d]);
}

fn cuboid(half: f64, height: f64) -> TriangleMesh {
    let v = vec![
        Vec3::new(-half, -half, 0.0),
        Vec3::new(half, -half, 0.0),
        Vec3::new(half, half, 0.0),
        Vec3::new(-half, half, 0.0),
        Vec3::new(-half, -half, height),
        Vec3::new(half, -half, height),
        Vec3::new(half, half, height),
        Vec3::new(-half, half, height),
    ];
    let mut t = Vec::new();
    quad(&mut t, 0, 3, 2, 1); // bottom
    quad(&mut t, 4, 5, 6, 7); // top
    quad(&mut t, 0, 1, 5, 4);
    quad(&mut t, 1, 2, 6, 5);
    quad(&mut t, 2, 3, 7, 6);
    quad(&mut t, 3, 0, 4, 7);
    TriangleMesh::new(v, t).expect("valid cuboid")
}

/// Dome of `rings` latitude bands and `segments` meridians over a flat disc.
fn hemisphere(radius: f64, segments: usize, rings: usize) -> TriangleMesh {
    let mut v = vec![Vec3::new(0.0, 0.0, 0.0)];
    // ring r = 0 is the equator, r = rings - 1 the last ring before the pole
    for r in 0..rings {
        let lat = std::f64::consts::FRAC_PI_2 * r as f64 / rings as f64;
        let (z, rr) = (radius * lat.sin(), radius * lat.cos());
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            v.push(Vec3::new(rr * phi.cos(), rr * phi.sin(), z));
        }
    }
    let pole = v.len();
    v.push(Vec3::new(0.0, 0.0, radius));
    let at = |r: usize, s: usize| 1 + r * segments + s % segments;
    let mut t = Vec::new();
    for s in 0..segments {
        t.push([0, at(0, s + 1), at(0, s)]);
    }
    for r in 0..rings - 1 {
        for s in 0..segments {
            quad(&mut t, at(r, s), at(r, s + 1), at(r + 1, s + 1), at(r + 1, s));
        }
    }
    for s in 0..segments {
        t.push([at(rings - 1, s), at(rings - 1, s + 1), pole]);
    }
    TriangleMesh::new(v, t).expect("valid hemisphere")
}

/// Ridge along x; triangular cross-section in the y-z plane.
fn prism(half: f64, height: f64) -> TriangleMesh {
    let v = vec![
        Vec3::new(-half, -half, 0.0),
        Vec3::new(-half, half, 0.0),
        Vec3::new(-half, 0.0, height),
        Vec3::new(half, -half, 0.0),
        Vec3::new(half, half, 0.0),
        Vec3::new(half, 0.0, height),
    ];
    let mut t = vec![[0, 2, 1], [3, 4, 5]];
    quad(&mut t, 0, 1, 4, 3); // bottom
    quad(&mut t, 0, 3, 5, 2); // -y slope
    quad(&mut t, 1, 2, 5, 4); // +y slope
    TriangleMesh::new(v, t).expect("valid prism")
}

/// Cylinder lying along x, resting on `z = 0`.
fn cylinder(radius: f64, half_len: f64, segments: usize) -> TriangleMesh {
    let mut v = Vec::new();
    for &x in &[-half_len, half_len] {
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            v.push(Vec3::new(x, radius * phi.cos(), radius + radius * phi.sin()));
        }
    }
    let (c0, c1) = (v.len(), v.len() + 1);
    v.push(Vec3::new(-half_len, 0.0, radius));
    v.push(Vec3::new(half_len, 0.0, radius));
    let at = |end: usize, s: usize| end * segments + s % segments;
    let mut t = Vec::new();
    for s in 0..segments {
        t.push([c0, at(0, s + 1), at(0, s)]);
        t.push([c1, at(1, s), at(1, s + 1)]);
        quad(&mut t, at(0, s), at(0, s + 1), at(1, s + 1), at(1, s));
    }
    TriangleMesh::new(v, t).expect("valid cylinder")
}
