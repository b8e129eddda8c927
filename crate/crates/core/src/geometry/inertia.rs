//! Exact rigid-body mass properties of closed triangle meshes, assuming
//! uniform density, via signed polynomial integrals over the surface.

use super::{MeshError, TriangleMesh};
use crate::Point3;
use nalgebra::Matrix3;

/// Center of mass and inertia tensor about the center of mass for a closed
/// manifold mesh of the given total mass.
pub fn rigid_inertia(mesh: &TriangleMesh, mass: f64) -> Result<(Point3, Matrix3<f64>), MeshError> {
    mesh.validate_closed_manifold()?;
    assert!(mass > 0.0, "mass must be positive");

    // Order: volume, x, y, z, x^2, y^2, z^2, xy, yz, zx (all over volume).
    let mut intg = [0.0f64; 10];
    for t in 0..mesh.triangles().len() {
        let [v0, v1, v2] = mesh.triangle_points(t);
        let (x0, y0, z0) = (v0.x, v0.y, v0.z);
        let (x1, y1, z1) = (v1.x, v1.y, v1.z);
        let (x2, y2, z2) = (v2.x, v2.y, v2.z);
        let a1 = x1 - x0;
        let b1 = y1 - y0;
        let c1 = z1 - z0;
        let a2 = x2 - x0;
        let b2 = y2 - y0;
        let c2 = z2 - z0;
        let d0 = b1 * c2 - b2 * c1;
        let d1 = a2 * c1 - a1 * c2;
        let d2 = a1 * b2 - a2 * b1;

        let (f1x, f2x, f3x, g0x, g1x, g2x) = subexpressions(x0, x1, x2);
        let (_f1y, f2y, f3y, g0y, g1y, g2y) = subexpressions(y0, y1, y2);
        let (_f1z, f2z, f3z, g0z, g1z, g2z) = subexpressions(z0, z1, z2);

        intg[0] += d0 * f1x;
        intg[1] += d0 * f2x;
        intg[2] += d1 * f2y;
        intg[3] += d2 * f2z;
        intg[4] += d0 * f3x;
        intg[5] += d1 * f3y;
        intg[6] += d2 * f3z;
        intg[7] += d0 * (y0 * g0x + y1 * g1x + y2 * g2x);
        intg[8] += d1 * (z0 * g0y + z1 * g1y + z2 * g2y);
        intg[9] += d2 * (x0 * g0z + x1 * g1z + x2 * g2z);
    }
    const MULT: [f64; 10] = [
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 24.0,
        1.0 / 24.0,
        1.0 / 60.0,
        1.0 / 60.0,
        1.0 / 60.0,
        1.0 / 120.0,
        1.0 / 120.0,
        1.0 / 120.0,
    ];
    for (v, m) in intg.iter_mut().zip(MULT) {
        *v *= m;
    }
    let volume = intg[0];
    if !(volume > 0.0) {
        return Err(MeshError::NonPositiveVolume(volume));
    }
    let density = mass / volume;
    let cm = Point3::new(intg[1] / volume, intg[2] / volume, intg[3] / volume);

    // Inertia about the origin, then shifted to the center of mass.
    let ixx = density * (intg[5] + intg[6]) - mass * (cm.y * cm.y + cm.z * cm.z);
    let iyy = density * (intg[4] + intg[6]) - mass * (cm.x * cm.x + cm.z * cm.z);
    let izz = density * (intg[4] + intg[5]) - mass * (cm.x * cm.x + cm.y * cm.y);
    let ixy = -(density * intg[7] - mass * cm.x * cm.y);
    let iyz = -(density * intg[8] - mass * cm.y * cm.z);
    let izx = -(density * intg[9] - mass * cm.z * cm.x);

    let inertia = Matrix3::new(ixx, ixy, izx, ixy, iyy, iyz, izx, iyz, izz);
    Ok((cm, inertia))
}

#[inline]
#[allow(clippy::type_complexity)]
fn subexpressions(w0: f64, w1: f64, w2: f64) -> (f64, f64, f64, f64, f64, f64) {
    let temp0 = w0 + w1;
    let f1 = temp0 + w2;
    let temp1 = w0 * w0;
    let temp2 = temp1 + w1 * temp0;
    let f2 = temp2 + w2 * f1;
    let f3 = w0 * temp1 + w1 * temp2 + w2 * f2;
    let g0 = f2 + w0 * (f1 + w0);
    let g1 = f2 + w1 * (f1 + w1);
    let g2 = f2 + w2 * (f1 + w2);
    (f1, f2, f3, g0, g1, g2)
}

#[cfg(test)]
mod tests {
    use super::super::{box_mesh, sphere_mesh};
    use super::*;
    use crate::Vec3;
    use approx::assert_relative_eq;

    #[test]
    fn unit_cube_inertia_is_m_over_six() {
        let m = box_mesh(Point3::new(-0.5, -0.5, -0.5), Point3::new(0.5, 0.5, 0.5));
        let mass = 12.0;
        let (cm, inertia) = rigid_inertia(&m, mass).unwrap();
        assert_relative_eq!(cm.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cm.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cm.z, 0.0, epsilon = 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { mass / 6.0 } else { 0.0 };
                assert_relative_eq!(inertia[(i, j)], expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn translation_moves_com_but_not_inertia() {
        let m = box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 1.0, 1.0));
        let mass = 5.0;
        let (cm0, i0) = rigid_inertia(&m, mass).unwrap();
        let t = Vec3::new(3.0, -2.0, 7.0);
        let (cm1, i1) = rigid_inertia(&m.translated(t), mass).unwrap();
        assert_relative_eq!(cm1.x, cm0.x + t.x, max_relative = 1e-12);
        assert_relative_eq!(cm1.y, cm0.y + t.y, max_relative = 1e-12);
        assert_relative_eq!(cm1.z, cm0.z + t.z, max_relative = 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(i1[(i, j)], i0[(i, j)], epsilon = 1e-9 * mass);
            }
        }
    }

    #[test]
    fn sphere_inertia_matches_analytic_within_one_percent() {
        let r = 1.7;
        let mass = 3.0;
        // Subdivision 5: 8192 triangles.
        let m = sphere_mesh(Point3::origin(), r, 5);
        assert!(m.triangles().len() >= 5000);
        let (_cm, inertia) = rigid_inertia(&m, mass).unwrap();
        let expect = 0.4 * mass * r * r;
        for k in 0..3 {
            let rel = ((inertia[(k, k)] - expect) / expect).abs();
            assert!(rel < 0.01, "axis {k}: {} vs {expect} ({rel:.4})", inertia[(k, k)]);
        }
    }

    #[test]
    fn degenerate_mesh_is_rejected() {
        // A flat "mesh" with zero volume.
        let flat = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 1]],
        )
        .unwrap();
        assert!(rigid_inertia(&flat, 1.0).is_err());
    }
}
