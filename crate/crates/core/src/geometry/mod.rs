//! Triangle meshes: validation, plain-text IO, primitive generators, and the
//! supporting machinery for voxelization and charge initialization.

mod charge;
mod inertia;
mod voxelize;

pub use charge::{ignite_charge, temperature_trigger_met, Charge, IgniteOutcome, Trigger};
pub use inertia::rigid_inertia;
pub use voxelize::{voxelize, OccupancyField, VoxelizeSpec};

use crate::{Point3, Vec3};
use nalgebra::UnitQuaternion;
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {tri} references vertex {index} out of range")]
    IndexOutOfRange { tri: usize, index: u32 },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("edge ({v0}, {v1}) is shared by {count} triangles, expected 2")]
    NonManifoldEdge { v0: u32, v1: u32, count: usize },
    #[error("edge ({v0}, {v1}) is traversed twice in the same direction (inconsistent winding)")]
    InconsistentWinding { v0: u32, v1: u32 },
    #[error("mesh signed volume {0} is not positive; normals must point outward")]
    NonPositiveVolume(f64),
    #[error("mesh parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Indexed triangle list. Winding is right-handed with outward normals.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(MeshError::NonFiniteVertex(i));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &ix in tri {
                if ix as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange { tri: t, index: ix });
                }
            }
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    #[inline]
    pub fn triangle_points(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Outward unit normal; zero vector for degenerate triangles.
    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_points(t);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len == 0.0 {
            Vec3::zeros()
        } else {
            n / len
        }
    }

    pub fn triangle_centroid(&self, t: usize) -> Point3 {
        let [a, b, c] = self.triangle_points(t);
        Point3::new(
            (a.x + b.x + c.x) / 3.0,
            (a.y + b.y + c.y) / 3.0,
            (a.z + b.z + c.z) / 3.0,
        )
    }

    /// Checks that every edge is shared by exactly two triangles, once in
    /// each direction, and that the enclosed volume is positive.
    pub fn validate_closed_manifold(&self) -> Result<(), MeshError> {
        let mut edges: HashMap<(u32, u32), (usize, usize)> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let v0 = tri[e];
                let v1 = tri[(e + 1) % 3];
                let key = (v0.min(v1), v0.max(v1));
                let entry = edges.entry(key).or_insert((0, 0));
                if v0 < v1 {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
            }
        }
        for (&(v0, v1), &(fwd, rev)) in &edges {
            let count = fwd + rev;
            if count != 2 {
                return Err(MeshError::NonManifoldEdge { v0, v1, count });
            }
            if fwd != 1 || rev != 1 {
                return Err(MeshError::InconsistentWinding { v0, v1 });
            }
        }
        let vol = self.signed_volume();
        if !(vol > 0.0) {
            return Err(MeshError::NonPositiveVolume(vol));
        }
        Ok(())
    }

    /// Signed volume via the divergence theorem; positive for outward
    /// winding.
    pub fn signed_volume(&self) -> f64 {
        let mut six_v = 0.0;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            six_v += a.coords.dot(&b.coords.cross(&c.coords));
        }
        six_v / 6.0
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut max = 0.0f64;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            max = max.max((b - a).norm()).max((c - b).norm()).max((a - c).norm());
        }
        max
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Rigid transform: rotate about the origin, then translate.
    pub fn transformed(&self, rotation: &UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|v| Point3::from(rotation * v.coords + translation))
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Splits every triangle in four until no edge exceeds `max_edge`.
    /// Midpoints are shared so the result stays closed and manifold.
    pub fn subdivided_until_max_edge(&self, max_edge: f64) -> Self {
        let mut mesh = self.clone();
        while mesh.max_edge_length() > max_edge {
            mesh = mesh.subdivide_once();
        }
        mesh
    }

    fn subdivide_once(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut triangles = Vec::with_capacity(self.triangles.len() * 4);
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Point3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let pa = vertices[a as usize];
                let pb = vertices[b as usize];
                let m = Point3::new(
                    0.5 * (pa.x + pb.x),
                    0.5 * (pa.y + pb.y),
                    0.5 * (pa.z + pb.z),
                );
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        for tri in &self.triangles {
            let [a, b, c] = *tri;
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        Self { vertices, triangles }
    }

    /// Serializes to the plain-text mesh format: `v x y z` vertex lines then
    /// `f i j k` face lines (1-based, right-handed winding). Vertex
    /// coordinates round-trip bit-exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        out
    }

    /// Parses the plain-text mesh format. `#` starts a comment; blank lines
    /// are ignored.
    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let mut coord = [0.0f64; 3];
                    for c in &mut coord {
                        let tok = parts.next().ok_or_else(|| MeshError::Parse {
                            line,
                            message: "vertex needs three coordinates".into(),
                        })?;
                        *c = tok.parse().map_err(|_| MeshError::Parse {
                            line,
                            message: format!("bad coordinate {tok:?}"),
                        })?;
                    }
                    vertices.push(Point3::new(coord[0], coord[1], coord[2]));
                }
                Some("f") => {
                    let mut ix = [0u32; 3];
                    for i in &mut ix {
                        let tok = parts.next().ok_or_else(|| MeshError::Parse {
                            line,
                            message: "face needs three indices".into(),
                        })?;
                        let one_based: u32 = tok.parse().map_err(|_| MeshError::Parse {
                            line,
                            message: format!("bad index {tok:?}"),
                        })?;
                        if one_based == 0 {
                            return Err(MeshError::Parse {
                                line,
                                message: "face indices are 1-based".into(),
                            });
                        }
                        *i = one_based - 1;
                    }
                    triangles.push(ix);
                }
                Some(other) => {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("unknown record {other:?}"),
                    })
                }
                None => {}
            }
            if parts.next().is_some() {
                return Err(MeshError::Parse { line, message: "trailing tokens".into() });
            }
        }
        Self::new(vertices, triangles)
    }
}

/// Axis-aligned box between two corners.
pub fn box_mesh(min: Point3, max: Point3) -> TriangleMesh {
    let v = vec![
        Point3::new(min.x, min.y, min.z),
        Point3::new(max.x, min.y, min.z),
        Point3::new(max.x, max.y, min.z),
        Point3::new(min.x, max.y, min.z),
        Point3::new(min.x, min.y, max.z),
        Point3::new(max.x, min.y, max.z),
        Point3::new(max.x, max.y, max.z),
        Point3::new(min.x, max.y, max.z),
    ];
    let t = vec![
        [0, 2, 1], [0, 3, 2], // bottom (z = min)
        [4, 5, 6], [4, 6, 7], // top
        [0, 1, 5], [0, 5, 4], // y = min
        [3, 7, 6], [3, 6, 2], // y = max
        [0, 4, 7], [0, 7, 3], // x = min
        [1, 2, 6], [1, 6, 5], // x = max
    ];
    TriangleMesh::new(v, t).expect("box mesh is well formed")
}

/// Sphere built by subdividing an octahedron and projecting onto the sphere.
/// The eight octants are exact sign-flipped copies of one another, so the
/// tessellation carries the full 48-element octahedral symmetry bit-exactly.
pub fn sphere_mesh(center: Point3, radius: f64, subdivisions: u32) -> TriangleMesh {
    // Canonical octant face of the octahedron, subdivided barycentrically
    // and normalized onto the unit sphere.
    let n = 1usize << subdivisions; // edge segments per octant face
    let mut vertices: Vec<Point3> = Vec::new();
    let mut index: HashMap<[u64; 3], u32> = HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    let canon = |x: f64| if x == 0.0 { 0.0 } else { x };
    let mut vertex_id = |p: [f64; 3], vertices: &mut Vec<Point3>| -> u32 {
        let p = [canon(p[0]), canon(p[1]), canon(p[2])];
        let key = [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
        *index.entry(key).or_insert_with(|| {
            vertices.push(Point3::new(
                center.x + radius * p[0],
                center.y + radius * p[1],
                center.z + radius * p[2],
            ));
            (vertices.len() - 1) as u32
        })
    };

    // Unit-sphere point for barycentric lattice coordinates (i, j) on the
    // (+x, +y, +z) octant: direction (i, j, n - i - j) normalized.
    let unit = |i: usize, j: usize| -> [f64; 3] {
        let a = i as f64;
        let b = j as f64;
        let c = (n - i - j) as f64;
        let len = (a * a + b * b + c * c).sqrt();
        [a / len, b / len, c / len]
    };

    for sx in [1.0f64, -1.0] {
        for sy in [1.0f64, -1.0] {
            for sz in [1.0f64, -1.0] {
                let flip = (sx * sy * sz) < 0.0;
                for i in 0..n {
                    for j in 0..(n - i) {
                        // Lattice cell (i, j): lower triangle always, upper
                        // triangle when inside the face.
                        let p00 = unit(i, j);
                        let p10 = unit(i + 1, j);
                        let p01 = unit(i, j + 1);
                        let s = |p: [f64; 3]| [p[0] * sx, p[1] * sy, p[2] * sz];
                        let a = vertex_id(s(p00), &mut vertices);
                        let b = vertex_id(s(p10), &mut vertices);
                        let c = vertex_id(s(p01), &mut vertices);
                        if flip {
                            triangles.push([a, c, b]);
                        } else {
                            triangles.push([a, b, c]);
                        }
                        if i + j + 1 < n {
                            let p11 = unit(i + 1, j + 1);
                            let d = vertex_id(s(p11), &mut vertices);
                            if flip {
                                triangles.push([b, c, d]);
                            } else {
                                triangles.push([b, d, c]);
                            }
                        }
                    }
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles).expect("sphere mesh is well formed")
}

/// Closed cylinder along the z axis.
pub fn cylinder_mesh(center: Point3, radius: f64, height: f64, segments: usize) -> TriangleMesh {
    assert!(segments >= 3);
    let half = height * 0.5;
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for &z in &[-half, half] {
        for k in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
            vertices.push(Point3::new(
                center.x + radius * theta.cos(),
                center.y + radius * theta.sin(),
                center.z + z,
            ));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(Point3::new(center.x, center.y, center.z - half));
    let top_center = vertices.len() as u32;
    vertices.push(Point3::new(center.x, center.y, center.z + half));

    let mut triangles = Vec::new();
    let seg = segments as u32;
    for k in 0..seg {
        let k1 = (k + 1) % seg;
        // Side quad: bottom ring k..k1, top ring offset by seg.
        triangles.push([k, k1, seg + k1]);
        triangles.push([k, seg + k1, seg + k]);
        // Bottom cap (normal -z): wind clockwise seen from +z.
        triangles.push([bottom_center, k1, k]);
        // Top cap (+z).
        triangles.push([top_center, seg + k, seg + k1]);
    }
    TriangleMesh::new(vertices, triangles).expect("cylinder mesh is well formed")
}

/// Torus around the z axis: major radius to the tube center, minor radius of
/// the tube.
pub fn torus_mesh(
    center: Point3,
    major_radius: f64,
    minor_radius: f64,
    major_segments: usize,
    minor_segments: usize,
) -> TriangleMesh {
    assert!(major_segments >= 3 && minor_segments >= 3);
    let mut vertices = Vec::with_capacity(major_segments * minor_segments);
    for i in 0..major_segments {
        let u = 2.0 * std::f64::consts::PI * i as f64 / major_segments as f64;
        let (su, cu) = u.sin_cos();
        for j in 0..minor_segments {
            let v = 2.0 * std::f64::consts::PI * j as f64 / minor_segments as f64;
            let (sv, cv) = v.sin_cos();
            let r = major_radius + minor_radius * cv;
            vertices.push(Point3::new(
                center.x + r * cu,
                center.y + r * su,
                center.z + minor_radius * sv,
            ));
        }
    }
    let mut triangles = Vec::new();
    let (nm, nn) = (major_segments as u32, minor_segments as u32);
    for i in 0..nm {
        let i1 = (i + 1) % nm;
        for j in 0..nn {
            let j1 = (j + 1) % nn;
            let a = i * nn + j;
            let b = i1 * nn + j;
            let c = i1 * nn + j1;
            let d = i * nn + j1;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, triangles).expect("torus mesh is well formed")
}

/// Triangular prism: a right-triangle cross-section in the x-y plane (legs
/// along +x and +y from the corner) extruded along z. Concentrates the open
/// face toward +x.
pub fn wedge_mesh(corner: Point3, leg_x: f64, leg_y: f64, depth: f64) -> TriangleMesh {
    let v = vec![
        corner,
        Point3::new(corner.x + leg_x, corner.y, corner.z),
        Point3::new(corner.x, corner.y + leg_y, corner.z),
        Point3::new(corner.x, corner.y, corner.z + depth),
        Point3::new(corner.x + leg_x, corner.y, corner.z + depth),
        Point3::new(corner.x, corner.y + leg_y, corner.z + depth),
    ];
    let t = vec![
        [0, 2, 1],           // bottom
        [3, 4, 5],           // top
        [0, 1, 4], [0, 4, 3], // y = corner.y side
        [0, 3, 5], [0, 5, 2], // x = corner.x side
        [1, 2, 5], [1, 5, 4], // hypotenuse side
    ];
    TriangleMesh::new(v, t).expect("wedge mesh is well formed")
}
