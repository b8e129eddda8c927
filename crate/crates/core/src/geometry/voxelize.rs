//! Mesh to fractional-occupancy conversion.
//!
//! Each voxel is classified by a stratified lattice of sample points tested
//! against the mesh with x-direction scanline parity. The returned value per
//! voxel is the free fraction: 1 means fully outside every solid, 0 fully
//! interior. No sub-voxel geometry survives the conversion.
//!
//! Column/triangle intersection uses a half-open fill rule on the (y, z)
//! projection so a column passing exactly through a shared edge is counted
//! by exactly one of the adjacent triangles. All intersection arithmetic
//! runs in coordinates relative to the column, which keeps the result
//! bit-stable under translations that are exact in floating point (the
//! translation-consistency guarantee for mesh and grid shifts by whole
//! voxel widths with exactly representable coordinates).

use super::{MeshError, TriangleMesh};
use crate::fluid::GridDims;
use crate::Point3;
use rayon::prelude::*;

/// Description of the voxel lattice a mesh is rasterized into.
#[derive(Debug, Clone, Copy)]
pub struct VoxelizeSpec {
    /// World position of the low corner of cell (0, 0, 0).
    pub origin: Point3,
    /// Voxel width.
    pub h: f64,
    /// Lattice extents.
    pub dims: GridDims,
    /// Sample points per axis per voxel (so samples_per_axis^3 per voxel).
    pub samples_per_axis: usize,
    /// Free fractions strictly below this snap to zero for stability.
    pub zero_threshold: f64,
}

impl VoxelizeSpec {
    pub fn for_grid(dims: GridDims, h: f64) -> Self {
        Self {
            origin: Point3::origin(),
            h,
            dims,
            samples_per_axis: 4,
            zero_threshold: 0.1,
        }
    }
}

/// Free-fraction field over a sub-box of the voxel lattice.
#[derive(Debug, Clone)]
pub struct OccupancyField {
    /// Extents of the stored region.
    pub region: GridDims,
    /// Cell offset of the region inside the parent lattice.
    pub offset: (usize, usize, usize),
    /// Free fraction per region voxel, x fastest.
    pub free: Vec<f64>,
}

impl OccupancyField {
    /// Free fraction of a global lattice cell; cells outside the stored
    /// region are fully free.
    #[inline]
    pub fn free_at(&self, x: usize, y: usize, z: usize) -> f64 {
        let (ox, oy, oz) = self.offset;
        if x < ox || y < oy || z < oz {
            return 1.0;
        }
        let (rx, ry, rz) = (x - ox, y - oy, z - oz);
        if rx >= self.region.nx || ry >= self.region.ny || rz >= self.region.nz {
            return 1.0;
        }
        self.free[self.region.index(rx, ry, rz)]
    }

    /// Solid-occupied fraction of a global lattice cell.
    #[inline]
    pub fn occupancy_at(&self, x: usize, y: usize, z: usize) -> f64 {
        1.0 - self.free_at(x, y, z)
    }

    /// Iterates (global cell coords, free fraction) over the stored region.
    pub fn iter_region(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        let (ox, oy, oz) = self.offset;
        let r = self.region;
        (0..r.nz).flat_map(move |z| {
            (0..r.ny).flat_map(move |y| {
                (0..r.nx).map(move |x| {
                    ((ox + x, oy + y, oz + z), self.free[r.index(x, y, z)])
                })
            })
        })
    }

    /// Total solid volume in the stored region.
    pub fn solid_volume(&self, h: f64) -> f64 {
        let cell = h * h * h;
        self.free.iter().map(|f| (1.0 - f) * cell).sum()
    }
}

/// Scale pulling sample offsets toward the voxel center. Irrational, so
/// sample planes cannot coincide with rational mesh geometry; symmetric
/// about the center, so the lattice keeps every mirror and permutation
/// symmetry of the voxel.
const STRATIFY_SCALE: f64 = 0.978_397_420_781_904_6;

/// Rasterizes a closed manifold mesh to per-voxel free fractions.
///
/// The stored region covers the mesh bounding box clipped to the lattice;
/// everything outside is implicitly free. Rejects meshes that are not
/// closed manifolds.
pub fn voxelize(mesh: &TriangleMesh, spec: &VoxelizeSpec) -> Result<OccupancyField, MeshError> {
    mesh.validate_closed_manifold()?;
    let s = spec.samples_per_axis.max(1);
    let h = spec.h;
    let dims = spec.dims;

    let (lo, hi) = mesh.bounds();
    let cell_of = |w: f64, axis: usize| -> i64 {
        (((w - spec.origin[axis]) / h).floor()) as i64
    };
    let clamp = |v: i64, n: usize| -> usize { v.clamp(0, n as i64 - 1) as usize };
    let x0 = clamp(cell_of(lo.x, 0), dims.nx);
    let x1 = clamp(cell_of(hi.x, 0), dims.nx);
    let y0 = clamp(cell_of(lo.y, 1), dims.ny);
    let y1 = clamp(cell_of(hi.y, 1), dims.ny);
    let z0 = clamp(cell_of(lo.z, 2), dims.nz);
    let z1 = clamp(cell_of(hi.z, 2), dims.nz);
    let region = GridDims::new(x1 - x0 + 1, y1 - y0 + 1, z1 - z0 + 1);

    // Bin triangles by their (y, z) bounding boxes over region cells.
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); region.ny * region.nz];
    for (t, _) in mesh.triangles().iter().enumerate() {
        let [a, b, c] = mesh.triangle_points(t);
        let ty0 = a.y.min(b.y).min(c.y);
        let ty1 = a.y.max(b.y).max(c.y);
        let tz0 = a.z.min(b.z).min(c.z);
        let tz1 = a.z.max(b.z).max(c.z);
        let by0 = clamp(cell_of(ty0, 1), dims.ny).max(y0) - y0;
        let by1 = clamp(cell_of(ty1, 1), dims.ny).min(y1) - y0;
        let bz0 = clamp(cell_of(tz0, 2), dims.nz).max(z0) - z0;
        let bz1 = clamp(cell_of(tz1, 2), dims.nz).min(z1) - z0;
        for bz in bz0..=bz1 {
            for by in by0..=by1 {
                bins[by + region.ny * bz].push(t as u32);
            }
        }
    }

    // Symmetric stratified offsets within a voxel, scaled so isolated sample
    // planes rarely sit on rational geometry. Symmetry about the center is
    // required (it preserves the mirror and permutation symmetries of the
    // lattice) but it also means offset pairs sum to exactly one, so samples
    // do land exactly on 45-degree faces through cell corners; those are
    // counted as half inside below.
    let sub: Vec<f64> = (0..s)
        .map(|k| 0.5 + ((k as f64 + 0.5) / s as f64 - 0.5) * STRATIFY_SCALE)
        .collect();
    let half_units_per_voxel = (2 * s * s * s) as f64;
    // Sample x positions relative to the column reference (the first sample
    // of the first region cell).
    let rel_x: Vec<f64> = (0..region.nx * s)
        .map(|k| {
            let cx = (k / s) as f64;
            let jx = k % s;
            (cx + (sub[jx] - sub[0])) * h
        })
        .collect();

    // One (y, z) region-cell column at a time; inside counts per x cell.
    let columns: Vec<Vec<u32>> = (0..region.ny * region.nz)
        .into_par_iter()
        .map(|col| {
            let by = col % region.ny;
            let bz = col / region.ny;
            let mut inside_count = vec![0u32; region.nx];
            let tris = &bins[col];
            if tris.is_empty() {
                return inside_count;
            }
            let mut crossings: Vec<f64> = Vec::new();
            for jy in 0..s {
                for jz in 0..s {
                    // Column position, kept in pieces so every subtraction
                    // against mesh coordinates is translation-covariant.
                    let column = ColumnRef {
                        origin: spec.origin,
                        cell_y: ((y0 + by) as f64) * h,
                        cell_z: ((z0 + bz) as f64) * h,
                        off_y: sub[jy] * h,
                        off_z: sub[jz] * h,
                        cell_x: (x0 as f64) * h,
                        off_x: sub[0] * h,
                    };
                    crossings.clear();
                    for &t in tris {
                        if let Some(x_rel) = column_crossing(mesh, t as usize, &column) {
                            crossings.push(x_rel);
                        }
                    }
                    if crossings.is_empty() {
                        continue;
                    }
                    crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    // Walk samples and crossings together. The parity of
                    // crossings strictly beyond a sample decides inside or
                    // outside (2 or 0 half-units); a sample exactly on a
                    // crossing counts half.
                    let total = crossings.len();
                    let mut passed = 0usize;
                    for (k, &rel) in rel_x.iter().enumerate() {
                        while passed < total && crossings[passed] < rel {
                            passed += 1;
                        }
                        let mut q = passed;
                        while q < total && crossings[q] == rel {
                            q += 1;
                        }
                        let units = if q > passed {
                            1
                        } else if (total - q) % 2 == 1 {
                            2
                        } else {
                            0
                        };
                        inside_count[k / s] += units;
                        passed = q;
                    }
                }
            }
            inside_count
        })
        .collect();

    let mut free = vec![1.0f64; region.cell_count()];
    for (col, counts) in columns.iter().enumerate() {
        let by = col % region.ny;
        let bz = col / region.ny;
        for (cx, &inside) in counts.iter().enumerate() {
            let f = 1.0 - inside as f64 / half_units_per_voxel;
            let f = if f < spec.zero_threshold { 0.0 } else { f };
            free[region.index(cx, by, bz)] = f;
        }
    }
    Ok(OccupancyField { region, offset: (x0, y0, z0), free })
}

/// A sample column, stored as origin / cell / sub-offset pieces so all
/// mesh-vs-column arithmetic happens on translation-covariant differences.
struct ColumnRef {
    origin: Point3,
    cell_x: f64,
    cell_y: f64,
    cell_z: f64,
    off_x: f64,
    off_y: f64,
    off_z: f64,
}

impl ColumnRef {
    #[inline]
    fn rel_y(&self, w: f64) -> f64 {
        ((w - self.origin.y) - self.cell_y) - self.off_y
    }
    #[inline]
    fn rel_z(&self, w: f64) -> f64 {
        ((w - self.origin.z) - self.cell_z) - self.off_z
    }
    #[inline]
    fn rel_x(&self, w: f64) -> f64 {
        ((w - self.origin.x) - self.cell_x) - self.off_x
    }
}

/// Intersection of the +x ray through a sample column with a triangle,
/// returned as an x coordinate relative to the column reference, or None if
/// the column misses the triangle's (y, z) projection under the half-open
/// fill rule.
fn column_crossing(mesh: &TriangleMesh, t: usize, col: &ColumnRef) -> Option<f64> {
    let [a, b, c] = mesh.triangle_points(t);
    // 2-D projected positions relative to the column.
    let p = [
        (col.rel_y(a.y), col.rel_z(a.z)),
        (col.rel_y(b.y), col.rel_z(b.z)),
        (col.rel_y(c.y), col.rel_z(c.z)),
    ];
    let cross2 = |u: (f64, f64), v: (f64, f64)| u.0 * v.1 - u.1 * v.0;
    // Edge functions at the column point (the 2-D origin): e_i for edge
    // (p_i -> p_{i+1}); the barycentric weight of vertex i is the edge
    // function of the opposite edge.
    let e = [
        cross2(p[0], p[1]),
        cross2(p[1], p[2]),
        cross2(p[2], p[0]),
    ];
    let area2 = e[0] + e[1] + e[2];
    if area2 == 0.0 {
        // Projection degenerate: triangle parallel to the ray.
        return None;
    }
    let orient = if area2 > 0.0 { 1.0 } else { -1.0 };
    for i in 0..3 {
        let ei = e[i] * orient;
        if ei < 0.0 {
            return None;
        }
        if ei == 0.0 {
            // On this edge: half-open rule keyed to the oriented edge
            // direction, so exactly one of two adjacent triangles claims it.
            let j = (i + 1) % 3;
            let d = (
                (p[j].0 - p[i].0) * orient,
                (p[j].1 - p[i].1) * orient,
            );
            let counts = d.1 > 0.0 || (d.1 == 0.0 && d.0 < 0.0);
            if !counts {
                return None;
            }
        }
    }
    // Barycentric interpolation of x, relative to the column reference.
    let w0 = e[1] / area2;
    let w1 = e[2] / area2;
    let w2 = e[0] / area2;
    Some(w0 * col.rel_x(a.x) + w1 * col.rel_x(b.x) + w2 * col.rel_x(c.x))
}

#[cfg(test)]
mod tests {
    use super::super::{box_mesh, sphere_mesh};
    use super::*;

    fn spec(n: usize, h: f64) -> VoxelizeSpec {
        VoxelizeSpec::for_grid(GridDims::new(n, n, n), h)
    }

    #[test]
    fn unit_cube_exactly_covers_one_voxel() {
        let m = box_mesh(Point3::new(2.0, 2.0, 2.0), Point3::new(3.0, 3.0, 3.0));
        let occ = voxelize(&m, &spec(6, 1.0)).unwrap();
        for z in 0..6 {
            for y in 0..6 {
                for x in 0..6 {
                    let f = occ.free_at(x, y, z);
                    if (x, y, z) == (2, 2, 2) {
                        assert_eq!(f, 0.0, "covered voxel must be fully solid");
                    } else {
                        assert_eq!(f, 1.0, "voxel ({x},{y},{z}) must be free");
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_volume_within_two_percent() {
        // Sphere of radius 2h centered on a voxel corner.
        let r = 2.0;
        let m = sphere_mesh(Point3::new(8.0, 8.0, 8.0), r, 4);
        let occ = voxelize(&m, &spec(16, 1.0)).unwrap();
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let solid = occ.solid_volume(1.0);
        let rel = ((solid - analytic) / analytic).abs();
        println!("sphere voxelization: {solid:.3} vs {analytic:.3} ({:.2}%)", rel * 100.0);
        assert!(rel < 0.02, "volume error {:.2}% exceeds 2%", rel * 100.0);
    }

    #[test]
    fn halving_h_reduces_volume_error_monotonically() {
        // Converges to the polyhedron's own volume, measured exactly by the
        // divergence theorem. The zero-threshold snap is disabled here: it
        // deliberately trades an O(h) volume bias for stability, which would
        // mask the convergence of the rasterization itself.
        let m = sphere_mesh(Point3::new(8.0, 8.0, 8.0), 2.3, 4);
        let mesh_volume = m.signed_volume();
        let mut errs = Vec::new();
        for (n, h) in [(16, 1.0), (32, 0.5), (64, 0.25)] {
            let mut sp = spec(n, h);
            sp.zero_threshold = 0.0;
            let occ = voxelize(&m, &sp).unwrap();
            errs.push(((occ.solid_volume(h) - mesh_volume) / mesh_volume).abs());
        }
        println!("voxelization errors vs h: {errs:?}");
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "errors must shrink: {errs:?}");
    }

    #[test]
    fn thin_wall_leaves_no_fully_occupied_voxel() {
        // A wall 0.4 voxels thick: partial volumes everywhere it passes, but
        // no fully solid voxel, so fluid can pass through.
        let m = box_mesh(Point3::new(4.3, 1.0, 1.0), Point3::new(4.7, 7.0, 7.0));
        let mut sp = spec(8, 1.0);
        sp.zero_threshold = 0.1;
        let occ = voxelize(&m, &sp).unwrap();
        let mut any_partial = false;
        for ((x, y, z), f) in occ.iter_region() {
            assert!(f > 0.0, "voxel ({x},{y},{z}) fully occupied by a thin wall");
            if f < 1.0 {
                any_partial = true;
            }
        }
        assert!(any_partial, "the wall must register partial volumes");
    }

    #[test]
    fn zero_threshold_snaps_small_free_fractions() {
        // A box covering 63 of 64 sample points in depth: free fraction
        // 1/16 < 0.1 snaps to zero.
        let m = box_mesh(Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 2.0, 1.95));
        let occ = voxelize(&m, &spec(4, 1.0)).unwrap();
        assert_eq!(occ.free_at(1, 1, 1), 0.0);
    }

    #[test]
    fn translation_by_one_voxel_shifts_field_bit_exactly() {
        // Dyadic-rational vertices and a unit voxel width keep every
        // intermediate difference exact, so the shifted mesh produces the
        // identical fractions one cell over.
        let m = box_mesh(
            Point3::new(2.125, 2.375, 2.25),
            Point3::new(4.625, 3.875, 3.75),
        );
        let occ = voxelize(&m, &spec(10, 1.0)).unwrap();
        let shifted = voxelize(&m.translated(crate::Vec3::new(1.0, 0.0, 0.0)), &spec(10, 1.0)).unwrap();
        for z in 0..10 {
            for y in 0..10 {
                for x in 0..9 {
                    assert_eq!(
                        occ.free_at(x, y, z),
                        shifted.free_at(x + 1, y, z),
                        "mismatch at ({x},{y},{z})"
                    );
                }
            }
        }
    }

    #[test]
    fn equal_volume_shaped_charges_match_target_volume() {
        use super::super::{cylinder_mesh, torus_mesh, wedge_mesh};
        // Sphere, cylinder, torus, and wedge, all at 1000 m^3, h = 1.
        let target = 1000.0;
        let center = Point3::new(16.0, 16.0, 16.0);
        let r_sphere = (3.0 * target / (4.0 * std::f64::consts::PI)).cbrt();
        let shapes: Vec<(&str, TriangleMesh)> = vec![
            ("sphere", sphere_mesh(center, r_sphere, 5)),
            ("cylinder", {
                let r: f64 = 5.0;
                let height = target / (std::f64::consts::PI * r * r);
                cylinder_mesh(center, r, height, 96)
            }),
            ("torus", {
                let major: f64 = 8.0;
                let minor = (target / (2.0 * std::f64::consts::PI.powi(2) * major)).sqrt();
                torus_mesh(center, major, minor, 96, 48)
            }),
            ("wedge", {
                let (lx, ly) = (14.0, 14.0);
                let depth = 2.0 * target / (lx * ly);
                wedge_mesh(
                    Point3::new(center.x - lx / 2.0, center.y - ly / 2.0, center.z - depth / 2.0),
                    lx,
                    ly,
                    depth,
                )
            }),
        ];
        for (name, mesh) in shapes {
            let occ = voxelize(&mesh, &spec(32, 1.0)).unwrap();
            let solid = occ.solid_volume(1.0);
            let rel = ((solid - target) / target).abs();
            println!("{name}: {solid:.1} m^3 ({:.2}% off)", rel * 100.0);
            assert!(rel < 0.03, "{name} volume {solid:.1} deviates {:.2}%", rel * 100.0);
        }
    }
}
