//! Triangle meshes with the point queries the grasp sweep needs:
//! inside/outside by ray-crossing parity and nearest surface point by
//! exhaustive triangle scan. Meshes are small enough that brute force,
//! behind a bounding-sphere reject, is fast and has no tuning knobs.

use nalgebra::Vector3;
use std::collections::BTreeSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

use crate::geometry::Pose;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no vertices")]
    Empty,
    #[error("face {face} references vertex {index} out of range (vertex count {count})")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {face} is degenerate (area {area:.3e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("line {line}: {msg}")]
    ObjParse { line: usize, msg: String },
    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangularFace { line: usize, count: usize },
    #[error("line {line}: vertex index {index} out of range (vertex count {count})")]
    ObjIndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("invalid primitive dimensions: {0}")]
    InvalidPrimitive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const MIN_FACE_AREA: f64 = 1e-12;

/// Indexed triangle mesh in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    centroid: Vector3<f64>,
    bounding_radius: f64,
}

impl Mesh {
    /// Validates face indices and rejects degenerate faces.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() {
            return Err(MeshError::Empty);
        }
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx >= vertices.len() {
                    return Err(MeshError::FaceIndexOutOfRange {
                        face: fi,
                        index: idx,
                        count: vertices.len(),
                    });
                }
            }
            let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if area <= MIN_FACE_AREA {
                return Err(MeshError::DegenerateFace { face: fi, area });
            }
        }
        let centroid = vertices.iter().sum::<Vector3<f64>>() / vertices.len() as f64;
        let bounding_radius = vertices
            .iter()
            .map(|v| (v - centroid).norm())
            .fold(0.0, f64::max);
        Ok(Mesh {
            vertices,
            faces,
            centroid,
            bounding_radius,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.centroid
    }

    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            for c in 0..3 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        (lo, hi)
    }

    /// Rigidly transformed copy.
    pub fn transformed(&self, pose: &Pose) -> Mesh {
        let vertices = self
            .vertices
            .iter()
            .map(|v| pose.transform_point(*v))
            .collect();
        Mesh::new(vertices, self.faces.clone()).expect("rigid motion preserves validity")
    }

    /// Signed volume by the divergence theorem; positive for outward-wound
    /// closed surfaces.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = (
                    self.vertices[f[0]],
                    self.vertices[f[1]],
                    self.vertices[f[2]],
                );
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// V - E + F with E the number of distinct undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    /// Inside test by ray-crossing parity. The ray is aimed at the mesh
    /// centroid so the outcome co-moves with the mesh under rigid motion;
    /// duplicate hits through shared edges are merged by hit distance.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        if (p - self.centroid).norm() > self.bounding_radius {
            return false;
        }
        let mut dir = self.centroid - p;
        if dir.norm() < 1e-12 {
            dir = Vector3::z();
        } else {
            dir /= dir.norm();
        }
        let mut hits: Vec<f64> = Vec::new();
        for f in &self.faces {
            if let Some(t) = ray_triangle(
                p,
                &dir,
                &self.vertices[f[0]],
                &self.vertices[f[1]],
                &self.vertices[f[2]],
            ) {
                hits.push(t);
            }
        }
        hits.sort_by(|a, b| a.partial_cmp(b).expect("hit distances are finite"));
        let mut crossings = 0u32;
        let mut last: Option<f64> = None;
        for t in hits {
            if let Some(prev) = last {
                if (t - prev).abs() < 1e-9 {
                    continue; // same crossing seen via a shared edge
                }
            }
            crossings += 1;
            last = Some(t);
        }
        crossings % 2 == 1
    }

    /// Closest point on the mesh surface, by exhaustive scan.
    pub fn nearest_surface_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let mut best = self.vertices[self.faces[0][0]];
        let mut best_d2 = f64::INFINITY;
        for f in &self.faces {
            let q = closest_point_on_triangle(
                p,
                &self.vertices[f[0]],
                &self.vertices[f[1]],
                &self.vertices[f[2]],
            );
            let d2 = (p - q).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = q;
            }
        }
        best
    }

    /// Reads the plain-text OBJ subset: `v x y z` and triangular `f` records
    /// (1-based indices, `i/j/k` attribute suffixes ignored). Anything else
    /// except comments and known no-op records is rejected.
    pub fn load_obj(path: &Path) -> Result<Mesh, MeshError> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut vertices: Vec<Vector3<f64>> = Vec::new();
        let mut faces: Vec<([i64; 3], usize)> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut tokens = trimmed.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let coords: Vec<&str> = tokens.collect();
                    if coords.len() != 3 {
                        return Err(MeshError::ObjParse {
                            line: lineno,
                            msg: format!("vertex has {} coordinates, expected 3", coords.len()),
                        });
                    }
                    let mut v = [0.0; 3];
                    for (i, c) in coords.iter().enumerate() {
                        v[i] = c.parse::<f64>().map_err(|e| MeshError::ObjParse {
                            line: lineno,
                            msg: format!("bad coordinate {c:?}: {e}"),
                        })?;
                    }
                    vertices.push(Vector3::from(v));
                }
                Some("f") => {
                    let refs: Vec<&str> = tokens.collect();
                    if refs.len() != 3 {
                        return Err(MeshError::NonTriangularFace {
                            line: lineno,
                            count: refs.len(),
                        });
                    }
                    let mut idx = [0i64; 3];
                    for (i, r) in refs.iter().enumerate() {
                        let head = r.split('/').next().unwrap_or("");
                        idx[i] = head.parse::<i64>().map_err(|e| MeshError::ObjParse {
                            line: lineno,
                            msg: format!("bad face index {r:?}: {e}"),
                        })?;
                    }
                    faces.push((idx, lineno));
                }
                // structural records we don't use
                Some("vn") | Some("vt") | Some("o") | Some("g") | Some("s") | Some("usemtl")
                | Some("mtllib") => {}
                Some(other) => {
                    return Err(MeshError::ObjParse {
                        line: lineno,
                        msg: format!("unsupported record {other:?}"),
                    });
                }
                None => {}
            }
        }
        let mut resolved = Vec::with_capacity(faces.len());
        for (idx, lineno) in faces {
            let mut f = [0usize; 3];
            for (i, &raw) in idx.iter().enumerate() {
                if raw < 1 || raw as usize > vertices.len() {
                    return Err(MeshError::ObjIndexOutOfRange {
                        line: lineno,
                        index: raw,
                        count: vertices.len(),
                    });
                }
                f[i] = (raw - 1) as usize;
            }
            resolved.push(f);
        }
        Mesh::new(vertices, resolved)
    }

    /// Writes the same OBJ subset `load_obj` reads. Coordinates use the
    /// shortest decimal form that parses back to the identical f64.
    pub fn save_obj(&self, path: &Path) -> Result<(), MeshError> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Moller-Trumbore with slightly inclusive edge bounds, so a crossing
/// through a shared edge registers on both triangles (merged by the caller).
fn ray_triangle(
    orig: &Vector3<f64>,
    dir: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = orig - v0;
    let u = s.dot(&p) * inv;
    if !(-1e-10..=1.0 + 1e-10).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -1e-10 || u + v > 1.0 + 1e-10 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-10).then_some(t)
}

/// Closest point on a triangle to a query point (region-by-region walk of
/// the barycentric Voronoi regions).
fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
