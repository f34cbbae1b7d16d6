//! Parametric test-object meshes. All generators weld shared vertices so
//! edge counts (and hence the Euler characteristic) come out right, and
//! wind faces outward where a solid orientation is well defined.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::mesh::{Mesh, MeshError};

/// Shape families the simulator can generate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveKind {
    Sphere {
        radius: f64,
    },
    Box {
        x: f64,
        y: f64,
        z: f64,
    },
    Cylinder {
        radius: f64,
        height: f64,
    },
    /// Cylindrical cup with a wall of finite thickness, closed bottom and
    /// an open rim.
    OpenCup {
        radius: f64,
        height: f64,
        thickness: f64,
    },
    /// Hemispherical shell opening upward, open rim.
    Bowl {
        radius: f64,
        thickness: f64,
    },
    /// Closed cylinder with a torus-segment handle whose open tube ends
    /// are buried in the body.
    HandleMug {
        radius: f64,
        height: f64,
        handle_radius: f64,
        handle_tube: f64,
    },
}

struct Builder {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    fn vertex(&mut self, v: Vector3<f64>) -> usize {
        self.vertices.push(v);
        self.vertices.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize) {
        self.faces.push([a, b, c]);
    }

    /// Band of quads between two rings of equal length; `flip` reverses
    /// the winding. Upper/lower in +z sense gives outward normals for a
    /// surface whose outside is radially away from the axis.
    fn band(&mut self, upper: &[usize], lower: &[usize], flip: bool) {
        let n = upper.len();
        for k in 0..n {
            let k1 = (k + 1) % n;
            if !flip {
                self.tri(upper[k], lower[k], lower[k1]);
                self.tri(upper[k], lower[k1], upper[k1]);
            } else {
                self.tri(upper[k], lower[k1], lower[k]);
                self.tri(upper[k], upper[k1], lower[k1]);
            }
        }
    }

    /// Triangle fan from a center vertex over a closed ring. `up` selects
    /// the +z-facing winding.
    fn fan(&mut self, center: usize, ring: &[usize], up: bool) {
        let n = ring.len();
        for k in 0..n {
            let k1 = (k + 1) % n;
            if up {
                self.tri(center, ring[k], ring[k1]);
            } else {
                self.tri(center, ring[k1], ring[k]);
            }
        }
    }

    fn ring(&mut self, radius: f64, z: f64, n: u32) -> Vec<usize> {
        (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                self.vertex(Vector3::new(radius * a.cos(), radius * a.sin(), z))
            })
            .collect()
    }

    fn build(self) -> Result<Mesh, MeshError> {
        Mesh::new(self.vertices, self.faces)
    }
}

fn positive(name: &str, v: f64) -> Result<(), MeshError> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(MeshError::InvalidPrimitive(format!("{name} = {v}")));
    }
    Ok(())
}

/// Generates a test-object mesh. `tessellation` is the azimuthal segment
/// count (at least 3); other resolutions are derived from it.
pub fn make_primitive(kind: &PrimitiveKind, tessellation: u32) -> Result<Mesh, MeshError> {
    if tessellation < 3 {
        return Err(MeshError::InvalidPrimitive(format!(
            "tessellation = {tessellation}, need at least 3"
        )));
    }
    let n = tessellation;
    match *kind {
        PrimitiveKind::Sphere { radius } => {
            positive("radius", radius)?;
            Ok(sphere(radius, n))
        }
        PrimitiveKind::Box { x, y, z } => {
            positive("x", x)?;
            positive("y", y)?;
            positive("z", z)?;
            Ok(cuboid(x, y, z))
        }
        PrimitiveKind::Cylinder { radius, height } => {
            positive("radius", radius)?;
            positive("height", height)?;
            let mut b = Builder::new();
            cylinder_into(&mut b, radius, height, n);
            b.build()
        }
        PrimitiveKind::OpenCup {
            radius,
            height,
            thickness,
        } => {
            positive("radius", radius)?;
            positive("height", height)?;
            positive("thickness", thickness)?;
            if thickness >= radius {
                return Err(MeshError::InvalidPrimitive(format!(
                    "thickness {thickness} must be below radius {radius}"
                )));
            }
            if 2.0 * thickness >= height {
                return Err(MeshError::InvalidPrimitive(format!(
                    "thickness {thickness} too large for height {height}"
                )));
            }
            Ok(open_cup(radius, height, thickness, n))
        }
        PrimitiveKind::Bowl { radius, thickness } => {
            positive("radius", radius)?;
            positive("thickness", thickness)?;
            if thickness >= radius {
                return Err(MeshError::InvalidPrimitive(format!(
                    "thickness {thickness} must be below radius {radius}"
                )));
            }
            Ok(bowl(radius, thickness, n))
        }
        PrimitiveKind::HandleMug {
            radius,
            height,
            handle_radius,
            handle_tube,
        } => {
            positive("radius", radius)?;
            positive("height", height)?;
            positive("handle_radius", handle_radius)?;
            positive("handle_tube", handle_tube)?;
            if 1.2 * handle_tube >= handle_radius {
                return Err(MeshError::InvalidPrimitive(format!(
                    "handle tube {handle_tube} too thick for handle radius {handle_radius}"
                )));
            }
            if handle_radius + handle_tube >= height / 2.0 {
                return Err(MeshError::InvalidPrimitive(format!(
                    "handle radius {handle_radius} does not fit on height {height}"
                )));
            }
            Ok(handle_mug(radius, height, handle_radius, handle_tube, n))
        }
    }
}

fn sphere(radius: f64, n: u32) -> Mesh {
    let mut b = Builder::new();
    let bands = (n / 2).max(3);
    let top = b.vertex(Vector3::new(0.0, 0.0, radius));
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for j in 1..bands {
        let theta = PI * j as f64 / bands as f64;
        rings.push(b.ring(radius * theta.sin(), radius * theta.cos(), n));
    }
    let bottom = b.vertex(Vector3::new(0.0, 0.0, -radius));
    b.fan(top, &rings[0], true);
    for w in 0..rings.len() - 1 {
        let (upper, lower) = (rings[w].clone(), rings[w + 1].clone());
        b.band(&upper, &lower, false);
    }
    b.fan(bottom, rings.last().unwrap(), false);
    b.build().expect("sphere generator yields a valid mesh")
}

fn cuboid(x: f64, y: f64, z: f64) -> Mesh {
    let (hx, hy, hz) = (x / 2.0, y / 2.0, z / 2.0);
    let mut vertices = Vec::with_capacity(8);
    for xi in [-1.0, 1.0] {
        for yi in [-1.0, 1.0] {
            for zi in [-1.0, 1.0] {
                vertices.push(Vector3::new(hx * xi, hy * yi, hz * zi));
            }
        }
    }
    // index bit layout: (x << 2) | (y << 1) | z, bit set = positive side
    let quads = [
        [0b001, 0b101, 0b111, 0b011], // +z
        [0b000, 0b010, 0b110, 0b100], // -z
        [0b100, 0b110, 0b111, 0b101], // +x
        [0b000, 0b001, 0b011, 0b010], // -x
        [0b010, 0b011, 0b111, 0b110], // +y
        [0b000, 0b100, 0b101, 0b001], // -y
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
            // enforce outward winding relative to the box center
            let (a, bb, c) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            let normal = (bb - a).cross(&(c - a));
            let outward = (a + bb + c) / 3.0;
            if normal.dot(&outward) >= 0.0 {
                faces.push(tri);
            } else {
                faces.push([tri[0], tri[2], tri[1]]);
            }
        }
    }
    Mesh::new(vertices, faces).expect("box generator yields a valid mesh")
}

fn cylinder_into(b: &mut Builder, radius: f64, height: f64, n: u32) {
    let hz = height / 2.0;
    let top_ring = b.ring(radius, hz, n);
    let bot_ring = b.ring(radius, -hz, n);
    let c_top = b.vertex(Vector3::new(0.0, 0.0, hz));
    let c_bot = b.vertex(Vector3::new(0.0, 0.0, -hz));
    b.band(&top_ring, &bot_ring, false);
    b.fan(c_top, &top_ring, true);
    b.fan(c_bot, &bot_ring, false);
}

fn open_cup(radius: f64, height: f64, thickness: f64, n: u32) -> Mesh {
    let mut b = Builder::new();
    let hz = height / 2.0;
    let ri = radius - thickness;
    let outer_top = b.ring(radius, hz, n);
    let outer_bot = b.ring(radius, -hz, n);
    let inner_top = b.ring(ri, hz, n);
    let inner_bot = b.ring(ri, -hz + thickness, n);
    let c_outer = b.vertex(Vector3::new(0.0, 0.0, -hz));
    let c_inner = b.vertex(Vector3::new(0.0, 0.0, -hz + thickness));
    b.band(&outer_top, &outer_bot, false);
    b.band(&inner_top, &inner_bot, true); // faces the cavity
    b.fan(c_outer, &outer_bot, false);
    b.fan(c_inner, &inner_bot, true);
    b.build().expect("cup generator yields a valid mesh")
}

fn hemisphere_into(b: &mut Builder, radius: f64, n: u32, flip: bool) {
    let bands = (n / 4).max(2);
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for j in 0..bands {
        let alpha = (PI / 2.0) * j as f64 / bands as f64;
        rings.push(b.ring(radius * alpha.cos(), -radius * alpha.sin(), n));
    }
    let pole = b.vertex(Vector3::new(0.0, 0.0, -radius));
    for w in 0..rings.len() - 1 {
        let (upper, lower) = (rings[w].clone(), rings[w + 1].clone());
        b.band(&upper, &lower, flip);
    }
    b.fan(pole, rings.last().unwrap(), flip);
}

fn bowl(radius: f64, thickness: f64, n: u32) -> Mesh {
    let mut b = Builder::new();
    hemisphere_into(&mut b, radius, n, false);
    hemisphere_into(&mut b, radius - thickness, n, true);
    b.build().expect("bowl generator yields a valid mesh")
}

fn handle_mug(radius: f64, height: f64, handle_radius: f64, handle_tube: f64, n: u32) -> Mesh {
    let mut b = Builder::new();
    cylinder_into(&mut b, radius, height, n);

    // torus segment in the x-z plane, ends dipped below the wall surface
    let bury = (1.2 * handle_tube / handle_radius).asin();
    let psi_lo = -(PI / 2.0 + bury);
    let psi_hi = PI / 2.0 + bury;
    let segs = (n / 2).max(6);
    let around = (n / 2).max(6);
    let mut prev: Option<Vec<usize>> = None;
    for s in 0..=segs {
        let psi = psi_lo + (psi_hi - psi_lo) * s as f64 / segs as f64;
        let center = Vector3::new(radius + handle_radius * psi.cos(), 0.0, handle_radius * psi.sin());
        let normal = Vector3::new(psi.cos(), 0.0, psi.sin());
        let side = Vector3::new(0.0, 1.0, 0.0);
        let ring: Vec<usize> = (0..around)
            .map(|k| {
                let phi = 2.0 * PI * k as f64 / around as f64;
                b.vertex(center + (normal * phi.cos() + side * phi.sin()) * handle_tube)
            })
            .collect();
        if let Some(p) = prev {
            b.band(&p, &ring, false);
        }
        prev = Some(ring);
    }
    b.build().expect("mug generator yields a valid mesh")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_vertices_on_radius() {
        let m = make_primitive(&PrimitiveKind::Sphere { radius: 0.04 }, 24).unwrap();
        for v in m.vertices() {
            assert!((v.norm() - 0.04).abs() <= 1e-9, "vertex {v:?}");
        }
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn box_volume_by_divergence() {
        let m = make_primitive(
            &PrimitiveKind::Box {
                x: 0.1,
                y: 0.1,
                z: 0.1,
            },
            8,
        )
        .unwrap();
        assert!((m.signed_volume() - 1e-3).abs() <= 1e-12);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn cylinder_closed_surface() {
        let m = make_primitive(
            &PrimitiveKind::Cylinder {
                radius: 0.03,
                height: 0.1,
            },
            20,
        )
        .unwrap();
        assert_eq!(m.euler_characteristic(), 2);
        // volume approaches pi r^2 h from below (inscribed prism)
        let exact = PI * 0.03f64.powi(2) * 0.1;
        let v = m.signed_volume();
        assert!(v > 0.9 * exact && v <= exact, "volume {v} vs {exact}");
    }

    #[test]
    fn cup_is_open_and_hollow() {
        let m = make_primitive(
            &PrimitiveKind::OpenCup {
                radius: 0.04,
                height: 0.08,
                thickness: 0.006,
            },
            24,
        )
        .unwrap();
        // inside the wall material
        assert!(m.contains(&Vector3::new(0.037, 0.0, 0.0)));
        // inside the cavity
        assert!(!m.contains(&Vector3::new(0.0, 0.0, 0.01)));
        // in the bottom slab
        assert!(m.contains(&Vector3::new(0.0, 0.0, -0.038)));
        // above the rim
        assert!(!m.contains(&Vector3::new(0.0, 0.0, 0.06)));
    }

    #[test]
    fn bowl_is_open_and_hollow() {
        let m = make_primitive(
            &PrimitiveKind::Bowl {
                radius: 0.05,
                thickness: 0.006,
            },
            24,
        )
        .unwrap();
        // inside the shell near the bottom
        assert!(m.contains(&Vector3::new(0.0, 0.0, -0.047)));
        // inside the cavity
        assert!(!m.contains(&Vector3::new(0.0, 0.0, -0.02)));
    }

    /// Closed cylinder (V-E+F = 2) plus an open tube (V-E+F = 0) as a
    /// disjoint soup: the combined characteristic must be exactly 2.
    #[test]
    fn mug_euler_characteristic() {
        let m = make_primitive(
            &PrimitiveKind::HandleMug {
                radius: 0.035,
                height: 0.09,
                handle_radius: 0.025,
                handle_tube: 0.008,
            },
            20,
        )
        .unwrap();
        assert_eq!(m.euler_characteristic(), 2);
        // point inside the handle tube counts as inside
        let grip = Vector3::new(0.035 + 0.025, 0.0, 0.0);
        assert!(m.contains(&grip));
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(make_primitive(&PrimitiveKind::Sphere { radius: 0.0 }, 16).is_err());
        assert!(make_primitive(&PrimitiveKind::Sphere { radius: 0.05 }, 2).is_err());
        assert!(make_primitive(
            &PrimitiveKind::OpenCup {
                radius: 0.03,
                height: 0.08,
                thickness: 0.05
            },
            16
        )
        .is_err());
        assert!(make_primitive(
            &PrimitiveKind::HandleMug {
                radius: 0.03,
                height: 0.05,
                handle_radius: 0.03,
                handle_tube: 0.01
            },
            16
        )
        .is_err());
    }
}
