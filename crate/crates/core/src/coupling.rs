//! Two-way fluid/solid interaction.
//!
//! Fluid to solid: every mesh triangle is loaded with the dynamic
//! overpressure sampled at its centroid, and the resulting force and torque
//! drive the rigid state. Solid to fluid: moving bodies are re-voxelized and
//! the change in each voxel's free volume is applied as a one-axis piston
//! that compresses or expands the resident gas adiabatically over time
//! rather than instantaneously. Voxels that open from or close to zero are
//! merged with a neighbor along the motion axis so mass, momentum, and
//! energy stay accounted for.

use crate::boundary::BoundarySpec;
use crate::constants::PhysicalConstants;
use crate::fluid::{CellFlag, FluidGrid, VoxelState};
use crate::geometry::{rigid_inertia, voxelize, MeshError, OccupancyField, TriangleMesh, VoxelizeSpec};
use crate::integrate::StepContext;
use crate::{Point3, Vec3};
use nalgebra::{Matrix3, UnitQuaternion};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::{self, BufRead, Read, Write};

/// How a rigid body moves.
#[derive(Debug, Clone)]
pub enum BodyMotion {
    /// Never moves.
    Static,
    /// Prescribed constant velocity, unaffected by fluid forces.
    Kinematic { velocity: Vec3 },
    /// Integrated from fluid forces and gravity.
    Dynamic {
        mass: f64,
        /// Inertia tensor about the center of mass, body frame.
        inertia_body: Matrix3<f64>,
        /// Center of mass in body coordinates.
        com_body: Point3,
        linear_velocity: Vec3,
        /// Angular momentum in world coordinates.
        angular_momentum: Vec3,
    },
}

/// A solid object coupled to the fluid.
#[derive(Debug, Clone)]
pub struct RigidBody {
    pub name: String,
    mesh_body: TriangleMesh,
    pub motion: BodyMotion,
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
    last_vox_position: Vec3,
    last_vox_orientation: UnitQuaternion<f64>,
    /// Greatest vertex distance from the body origin, for motion bounds.
    radius: f64,
    pub occupancy: Option<OccupancyField>,
    warned_coarse_triangles: bool,
}

impl RigidBody {
    /// Builds a body from a closed manifold mesh, pre-subdividing triangles
    /// until no edge exceeds the voxel width so the constant-force-per-
    /// triangle assumption holds.
    pub fn new(
        name: impl Into<String>,
        mesh: TriangleMesh,
        motion: BodyMotion,
        position: Vec3,
        orientation: UnitQuaternion<f64>,
        h: f64,
    ) -> Result<Self, MeshError> {
        mesh.validate_closed_manifold()?;
        let mesh_body = mesh.subdivided_until_max_edge(h);
        let radius = mesh_body
            .vertices()
            .iter()
            .map(|v| v.coords.norm())
            .fold(0.0, f64::max);
        Ok(Self {
            name: name.into(),
            mesh_body,
            motion,
            position,
            orientation,
            last_vox_position: position,
            last_vox_orientation: orientation,
            radius,
            occupancy: None,
            warned_coarse_triangles: false,
        })
    }

    /// Convenience constructor for a fully dynamic body: mass properties
    /// from the mesh assuming uniform density.
    pub fn new_dynamic(
        name: impl Into<String>,
        mesh: TriangleMesh,
        mass: f64,
        position: Vec3,
        h: f64,
    ) -> Result<Self, MeshError> {
        let (com, inertia) = rigid_inertia(&mesh, mass)?;
        Self::new(
            name,
            mesh,
            BodyMotion::Dynamic {
                mass,
                inertia_body: inertia,
                com_body: com,
                linear_velocity: Vec3::zeros(),
                angular_momentum: Vec3::zeros(),
            },
            position,
            UnitQuaternion::identity(),
            h,
        )
    }

    pub fn mesh_body(&self) -> &TriangleMesh {
        &self.mesh_body
    }

    /// The mesh in world coordinates at the current pose.
    pub fn world_mesh(&self) -> TriangleMesh {
        self.mesh_body.transformed(&self.orientation, self.position)
    }

    pub fn is_movable(&self) -> bool {
        !matches!(self.motion, BodyMotion::Static)
    }

    /// Center of mass in world coordinates (body origin for non-dynamic
    /// bodies).
    pub fn com_world(&self) -> Point3 {
        match &self.motion {
            BodyMotion::Dynamic { com_body, .. } => {
                Point3::from(self.orientation * com_body.coords + self.position)
            }
            _ => Point3::from(self.position),
        }
    }

    /// Velocity of the body surface at a world point.
    pub fn point_velocity(&self, p: Point3) -> Vec3 {
        match &self.motion {
            BodyMotion::Static => Vec3::zeros(),
            BodyMotion::Kinematic { velocity } => *velocity,
            BodyMotion::Dynamic { linear_velocity, .. } => {
                let omega = self.angular_velocity();
                linear_velocity + omega.cross(&(p - self.com_world()))
            }
        }
    }

    /// Angular velocity from the angular momentum and the world-frame
    /// inertia tensor. Zero for non-dynamic bodies.
    pub fn angular_velocity(&self) -> Vec3 {
        match &self.motion {
            BodyMotion::Dynamic { inertia_body, angular_momentum, .. } => {
                let r = self.orientation.to_rotation_matrix();
                let i_world = r * inertia_body * r.transpose();
                i_world
                    .try_inverse()
                    .map(|inv| inv * angular_momentum)
                    .unwrap_or_else(Vec3::zeros)
            }
            _ => Vec3::zeros(),
        }
    }

    /// Explicit Euler update of the rigid state from the applied force and
    /// torque (about the center of mass) plus gravity. Immovable bodies
    /// never change pose.
    pub fn integrate_motion(&mut self, force: Vec3, torque: Vec3, gravity: Vec3, dt: f64) {
        match &mut self.motion {
            BodyMotion::Static => {}
            BodyMotion::Kinematic { velocity } => {
                self.position += *velocity * dt;
            }
            BodyMotion::Dynamic { mass, linear_velocity, angular_momentum, .. } => {
                *linear_velocity += (force / *mass + gravity) * dt;
                *angular_momentum += torque * dt;
                self.position += *linear_velocity * dt;
                let omega = self.angular_velocity();
                let spin = UnitQuaternion::from_scaled_axis(omega * dt);
                self.orientation = spin * self.orientation;
                self.orientation.renormalize();
            }
        }
    }

    /// Upper bound on how far any surface point has moved since the last
    /// voxelization.
    pub fn displacement_since_voxelization(&self) -> f64 {
        let translation = (self.position - self.last_vox_position).norm();
        let rotation = self.orientation.angle_to(&self.last_vox_orientation);
        translation + rotation * self.radius
    }

    /// Re-voxelizes the body at its current pose.
    pub fn revoxelize(&mut self, spec: &VoxelizeSpec) -> Result<(), MeshError> {
        let occ = voxelize(&self.world_mesh(), spec)?;
        self.occupancy = Some(occ);
        self.last_vox_position = self.position;
        self.last_vox_orientation = self.orientation;
        Ok(())
    }
}

/// Normal load per unit area on a surface element: the overpressure relative
/// to ambient plus the stagnation pressure of the motion of the fluid
/// relative to the surface, projected on the outward normal. Tangential
/// shear is neglected.
#[inline]
pub fn dynamic_overpressure(
    pressure: f64,
    ambient_pressure: f64,
    rho: f64,
    v_fluid: Vec3,
    v_surface: Vec3,
    normal: Vec3,
) -> f64 {
    let v_rel_n = (v_fluid - v_surface).dot(&normal);
    (pressure - ambient_pressure) + 0.5 * rho * v_rel_n * v_rel_n
}

/// Per-triangle forces plus their resultant.
#[derive(Debug, Clone)]
pub struct AppliedForces {
    pub per_triangle: Vec<Vec3>,
    pub net: Vec3,
    /// Torque about `about` (the body's center of mass when available).
    pub torque: Vec3,
    pub about: Point3,
}

/// Computes the fluid force on every triangle of a mesh: f = -n A P_dyn
/// with fluid quantities sampled at the triangle centroid. Triangles whose
/// centroid lies outside the grid or inside a fully solid voxel contribute
/// nothing. `point_velocity` supplies the surface velocity at a world point.
pub fn apply_fluid_forces_to_mesh(
    grid: &FluidGrid,
    mesh: &TriangleMesh,
    about: Point3,
    point_velocity: &(dyn Fn(Point3) -> Vec3 + Sync),
) -> AppliedForces {
    let per_triangle: Vec<Vec3> = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| {
            let centroid = mesh.triangle_centroid(t);
            if !grid.contains_point(centroid) {
                return Vec3::zeros();
            }
            let (cx, cy, cz) = cell_of_point(grid, centroid);
            if grid.cell(grid.dims.index(cx, cy, cz)).is_solid() {
                return Vec3::zeros();
            }
            let sample = grid.sample_trilinear(centroid);
            let normal = mesh.triangle_normal(t);
            if normal == Vec3::zeros() {
                return Vec3::zeros();
            }
            let p_dyn = dynamic_overpressure(
                sample.pressure,
                grid.ambient_pressure,
                sample.rho,
                sample.velocity,
                point_velocity(centroid),
                normal,
            );
            -normal * (mesh.triangle_area(t) * p_dyn)
        })
        .collect();

    let mut net = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for (t, f) in per_triangle.iter().enumerate() {
        net += f;
        torque += (mesh.triangle_centroid(t) - about).cross(f);
    }
    AppliedForces { per_triangle, net, torque, about }
}

/// Fluid forces on a rigid body at its current pose.
pub fn apply_fluid_forces(grid: &FluidGrid, body: &mut RigidBody) -> AppliedForces {
    let mesh = body.world_mesh();
    if !body.warned_coarse_triangles && mesh.max_edge_length() > grid.h {
        log::warn!(
            "body {}: triangles larger than a voxel; per-triangle constant force is inaccurate",
            body.name
        );
        body.warned_coarse_triangles = true;
    }
    let about = body.com_world();
    let b = &*body;
    apply_fluid_forces_to_mesh(grid, &mesh, about, &move |p| b.point_velocity(p))
}

#[inline]
fn cell_of_point(grid: &FluidGrid, p: Point3) -> (usize, usize, usize) {
    let f = |w: f64, n: usize| -> usize {
        ((w / grid.h).floor() as i64).clamp(0, n as i64 - 1) as usize
    };
    (f(p.x, grid.dims.nx), f(p.y, grid.dims.ny), f(p.z, grid.dims.nz))
}

/// Adiabatic volume change of the gas in a cell from fluid volume `v1` to
/// `v2` (same units, both positive): density scales by v1/v2, temperature by
/// (v1/v2)^(gamma-1), and internal energy and pressure follow from the state
/// equations. The cell's partial volume is not touched; callers own it.
pub fn adiabatic_compress(
    cell: &VoxelState,
    v1: f64,
    v2: f64,
    consts: &PhysicalConstants,
) -> VoxelState {
    assert!(v1 > 0.0 && v2 > 0.0, "zero volumes must use the merge path");
    let mut s = *cell;
    if s.rho == 0.0 {
        return s;
    }
    let ratio = v1 / v2;
    let gamma = consts.gamma();
    s.rho = cell.rho * ratio;
    s.temperature = cell.temperature * ratio.powf(gamma - 1.0);
    s.internal_energy = consts.c_v * s.temperature;
    s.pressure = s.rho * consts.r_gas * s.temperature;
    s
}

/// Volume bookkeeping when voxel A opens from zero to `v_a2` with neighbor B
/// going from `v_b1` to `v_b2` (all partial-volume fractions). Returns the
/// initial internal volumes (treating the pair as one larger voxel) and the
/// remaining changes to drain: (v_tilde_a1, v_tilde_b1, dv_a, dv_b).
pub fn merge_zero_to_nonzero(v_a2: f64, v_b1: f64, v_b2: f64) -> (f64, f64, f64, f64) {
    let denom = v_a2 + v_b2;
    if denom == 0.0 {
        return (0.0, v_b1, 0.0, v_b2 - v_b1);
    }
    let v_ta1 = v_a2 * v_b1 / denom;
    let v_tb1 = v_b2 * v_b1 / denom;
    (v_ta1, v_tb1, v_a2 - v_ta1, v_b2 - v_tb1)
}

/// State bookkeeping when voxel A closes to zero: A's contents are absorbed
/// into B, mass-averaging velocity and transferring lost kinetic energy to
/// internal energy. Returns B's merged state, its initial internal volume
/// fraction, and the remaining change to drain toward `v_b2`.
pub fn merge_nonzero_to_zero(
    a: &VoxelState,
    v_a1: f64,
    b: &VoxelState,
    v_b1: f64,
    v_b2: f64,
    consts: &PhysicalConstants,
) -> (VoxelState, f64, f64) {
    let m_a = a.rho * v_a1;
    let m_b = b.rho * v_b1;
    let m = m_a + m_b;
    let v_tb1 = v_a1 + v_b1;
    let mut merged = *b;
    if m > 0.0 && v_tb1 > 0.0 {
        merged.rho = m / v_tb1;
        let p_total = a.velocity * m_a + b.velocity * m_b;
        merged.velocity = p_total / m;
        let ke_before = 0.5 * m_a * a.velocity.norm_squared() + 0.5 * m_b * b.velocity.norm_squared();
        let ke_after = 0.5 * m * merged.velocity.norm_squared();
        let n_total = m_a * a.internal_energy + m_b * b.internal_energy + (ke_before - ke_after);
        merged.internal_energy = n_total / m;
        merged = merged.sync_state_equations(consts);
    } else {
        merged.rho = 0.0;
        merged.velocity = Vec3::zeros();
        merged.internal_energy = 0.0;
        merged = merged.sync_state_equations(consts);
    }
    (merged, v_tb1, v_b2 - v_tb1)
}

/// In-flight volume transition of one voxel.
#[derive(Debug, Clone, Copy)]
pub struct VoxelTransition {
    /// Remaining fluid-volume change (m^3); positive is expansion.
    pub pending_dv: f64,
    /// Drain rate (m^3/s); `None` drains in a single step (pure rotation).
    pub rate: Option<f64>,
}

/// All pending displacement work, keyed by voxel index in deterministic
/// order.
#[derive(Debug, Clone, Default)]
pub struct DisplacementState {
    pub pending: BTreeMap<u32, VoxelTransition>,
    /// Cells fully closed while their merge partner was also closed.
    pub stranded_merges: u64,
}

/// The moving-solid part of a simulation: bodies plus displacement-in-flight
/// bookkeeping.
pub struct CouplingSystem {
    pub bodies: Vec<RigidBody>,
    pub displacement: DisplacementState,
    /// Re-voxelize after any surface point moves this fraction of a voxel.
    pub move_threshold: f64,
    vox_spec: VoxelizeSpec,
}

impl CouplingSystem {
    pub fn new(bodies: Vec<RigidBody>, vox_spec: VoxelizeSpec) -> Self {
        Self {
            bodies,
            displacement: DisplacementState::default(),
            move_threshold: 0.25,
            vox_spec,
        }
    }

    pub fn vox_spec(&self) -> &VoxelizeSpec {
        &self.vox_spec
    }

    /// Voxelizes every body and stamps the solid cells directly into the
    /// grid (initial conditions; no smoothing).
    pub fn initialize_grid(&mut self, grid: &mut FluidGrid) -> Result<(), MeshError> {
        for body in &mut self.bodies {
            body.revoxelize(&self.vox_spec)?;
        }
        let dims = grid.dims;
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    let free = self.combined_free(x, y, z);
                    let idx = dims.index(x, y, z);
                    let mut s = *grid.cell(idx);
                    if free == s.partial_volume {
                        continue;
                    }
                    s.partial_volume = free;
                    if free == 0.0 {
                        s.rho = 0.0;
                        s.velocity = Vec3::zeros();
                        s.internal_energy = 0.0;
                        s.temperature = 0.0;
                        s.pressure = 0.0;
                        s.flag = CellFlag::HardBoundary;
                    }
                    grid.set_cell(idx, s);
                }
            }
        }
        Ok(())
    }

    /// Free fraction at a cell combined across all bodies.
    fn combined_free(&self, x: usize, y: usize, z: usize) -> f64 {
        let mut free = 1.0;
        for body in &self.bodies {
            if let Some(occ) = &body.occupancy {
                free *= occ.free_at(x, y, z);
            }
        }
        free
    }

    /// The coupling sequence that precedes each fluid step:
    /// 1. fluid forces drive the rigid state of every movable body,
    /// 2. bodies that moved beyond the threshold are re-voxelized,
    /// 3. displaced fluid is scheduled and drained through the piston model.
    ///
    /// Returns the forces applied to each body this step (index-aligned with
    /// `self.bodies`). Voxels touched by displacement are forced active.
    pub fn pre_step(
        &mut self,
        grid: &mut FluidGrid,
        ctx: &mut StepContext,
        consts: &PhysicalConstants,
        dt: f64,
    ) -> Vec<AppliedForces> {
        let mut all_forces = Vec::with_capacity(self.bodies.len());
        for i in 0..self.bodies.len() {
            let forces = if matches!(self.bodies[i].motion, BodyMotion::Dynamic { .. }) {
                let f = apply_fluid_forces(grid, &mut self.bodies[i]);
                self.bodies[i].integrate_motion(f.net, f.torque, consts.gravity, dt);
                f
            } else {
                let about = self.bodies[i].com_world();
                let empty = AppliedForces {
                    per_triangle: Vec::new(),
                    net: Vec3::zeros(),
                    torque: Vec3::zeros(),
                    about,
                };
                self.bodies[i].integrate_motion(Vec3::zeros(), Vec3::zeros(), consts.gravity, dt);
                empty
            };
            all_forces.push(forces);
        }

        let threshold = self.move_threshold * grid.h;
        for i in 0..self.bodies.len() {
            if self.bodies[i].is_movable()
                && self.bodies[i].displacement_since_voxelization() > threshold
            {
                let spec = self.vox_spec;
                self.bodies[i]
                    .revoxelize(&spec)
                    .expect("moving body became non-manifold");
                self.schedule_displacement(grid, i, consts);
            }
        }

        self.apply_displacement_step(grid, consts, dt);

        // Everything near in-flight transitions must stay active.
        for &idx in self.displacement.pending.keys() {
            ctx.force_core.push(idx);
        }
        all_forces
    }

    /// Diffs the grid's internal partial volumes against the re-voxelized
    /// targets around body `moved` and schedules piston transitions,
    /// handling the zero-to-nonzero and nonzero-to-zero merges immediately.
    fn schedule_displacement(&mut self, grid: &mut FluidGrid, moved: usize, consts: &PhysicalConstants) {
        let dims = grid.dims;
        let h3 = grid.h * grid.h * grid.h;
        let occ = self.bodies[moved]
            .occupancy
            .as_ref()
            .expect("moved body has an occupancy field")
            .clone();

        let cells: Vec<(usize, usize, usize)> = occ.iter_region().map(|(c, _)| c).collect();
        for (x, y, z) in cells {
            let idx = dims.index(x, y, z);
            let target = self.combined_free(x, y, z);
            let cell = *grid.cell(idx);
            let current = cell.partial_volume;
            if target == current && !self.displacement.pending.contains_key(&(idx as u32)) {
                continue;
            }
            let v_p = self.bodies[moved].point_velocity(grid.cell_center(x, y, z));
            let axis = dominant_axis(v_p);
            let speed = axis.map(|a| v_p[a].abs());

            if current == 0.0 && target > 0.0 {
                // Opening: merge with the trailing neighbor and split its
                // contents over the pair.
                let dir = axis.map(|a| (a, -v_p[a].signum())).unwrap_or((0, -1.0));
                if let Some(nidx) = neighbor_index(dims, (x, y, z), dir) {
                    let b_state = *grid.cell(nidx);
                    if !b_state.is_solid() {
                        let v_b1 = b_state.partial_volume;
                        let (nbx, nby, nbz) = dims.coords(nidx);
                        let v_b2 = self.combined_free(nbx, nby, nbz);
                        let (v_ta1, v_tb1, dv_a, dv_b) =
                            merge_zero_to_nonzero(target, v_b1, v_b2);
                        let mut a_new = b_state;
                        a_new.partial_volume = v_ta1;
                        a_new.flag = CellFlag::Interior;
                        grid.set_cell(idx, a_new);
                        let mut b_new = b_state;
                        b_new.partial_volume = v_tb1;
                        grid.set_cell(nidx, b_new);
                        self.push_transition(idx as u32, dv_a * h3, speed, grid.h);
                        self.push_transition(nidx as u32, dv_b * h3, speed, grid.h);
                        continue;
                    }
                }
                // No open partner: open instantly at ambient-free state.
                let mut a_new = cell;
                a_new.partial_volume = target;
                a_new.rho = 0.0;
                a_new.velocity = Vec3::zeros();
                a_new.internal_energy = 0.0;
                a_new.flag = CellFlag::Interior;
                grid.set_cell(idx, a_new.sync_state_equations(consts));
                self.displacement.stranded_merges += 1;
            } else if current > 0.0 && target == 0.0 {
                // Closing: absorb into the leading neighbor.
                let dir = axis.map(|a| (a, v_p[a].signum())).unwrap_or((0, 1.0));
                let receiver = find_open_neighbor(grid, (x, y, z), dir);
                match receiver {
                    Some(nidx) => {
                        let b_state = *grid.cell(nidx);
                        let (nbx, nby, nbz) = dims.coords(nidx);
                        let v_b2 = self.combined_free(nbx, nby, nbz);
                        let (merged, v_tb1, dv_b) = merge_nonzero_to_zero(
                            &cell,
                            current,
                            &b_state,
                            b_state.partial_volume,
                            v_b2,
                            consts,
                        );
                        let mut b_new = merged;
                        b_new.partial_volume = v_tb1;
                        grid.set_cell(nidx, b_new);
                        self.push_transition(nidx as u32, dv_b * h3, speed, grid.h);
                    }
                    None => {
                        self.displacement.stranded_merges += 1;
                        log::warn!("voxel ({x},{y},{z}) closed with no open neighbor; mass dropped");
                    }
                }
                let mut a_new = cell;
                a_new.partial_volume = 0.0;
                a_new.rho = 0.0;
                a_new.velocity = Vec3::zeros();
                a_new.internal_energy = 0.0;
                a_new.temperature = 0.0;
                a_new.pressure = 0.0;
                a_new.flag = CellFlag::HardBoundary;
                grid.set_cell(idx, a_new);
                self.displacement.pending.remove(&(idx as u32));
            } else if current > 0.0 && target > 0.0 {
                self.push_transition(idx as u32, (target - current) * h3, speed, grid.h);
            }
        }
    }

    fn push_transition(&mut self, idx: u32, dv: f64, speed: Option<f64>, h: f64) {
        if dv == 0.0 {
            self.displacement.pending.remove(&idx);
            return;
        }
        let rate = match speed {
            Some(s) if s > 0.0 => Some(h * h * s),
            _ => None,
        };
        self.displacement.pending.insert(idx, VoxelTransition { pending_dv: dv, rate });
    }

    /// Drains every pending transition by one step's worth of volume,
    /// applying the adiabatic relation to the affected cell.
    fn apply_displacement_step(&mut self, grid: &mut FluidGrid, consts: &PhysicalConstants, dt: f64) {
        let h3 = grid.h * grid.h * grid.h;
        let keys: Vec<u32> = self.displacement.pending.keys().copied().collect();
        for idx in keys {
            let mut tr = self.displacement.pending[&idx];
            let dv = match tr.rate {
                Some(rate) => {
                    let step = rate * dt;
                    if tr.pending_dv.abs() <= step {
                        tr.pending_dv
                    } else {
                        step * tr.pending_dv.signum()
                    }
                }
                // Rotation-only (or zero-speed) transitions drain at once.
                None => tr.pending_dv,
            };
            let cell = *grid.cell(idx as usize);
            let v1 = cell.partial_volume * h3;
            let v2 = v1 + dv;
            if v1 > 0.0 && v2 > 0.0 {
                let mut s = adiabatic_compress(&cell, v1, v2, consts);
                s.partial_volume = v2 / h3;
                grid.set_cell(idx as usize, s);
            } else {
                // Degenerate volumes are the merge paths' job; just move the
                // partial volume.
                let mut s = cell;
                s.partial_volume = (v2 / h3).max(0.0);
                grid.set_cell(idx as usize, s);
            }
            tr.pending_dv -= dv;
            if tr.pending_dv == 0.0 {
                self.displacement.pending.remove(&idx);
            } else {
                self.displacement.pending.insert(idx, tr);
            }
        }
    }
}

/// Axis with the largest velocity component, or None for zero velocity.
fn dominant_axis(v: Vec3) -> Option<usize> {
    let a = [v.x.abs(), v.y.abs(), v.z.abs()];
    let mut best = 0;
    for k in 1..3 {
        if a[k] > a[best] {
            best = k;
        }
    }
    if a[best] == 0.0 {
        None
    } else {
        Some(best)
    }
}

fn neighbor_index(
    dims: crate::fluid::GridDims,
    (x, y, z): (usize, usize, usize),
    (axis, sign): (usize, f64),
) -> Option<usize> {
    let mut c = [x as i64, y as i64, z as i64];
    c[axis] += if sign >= 0.0 { 1 } else { -1 };
    if dims.contains(c[0], c[1], c[2]) {
        Some(dims.index(c[0] as usize, c[1] as usize, c[2] as usize))
    } else {
        None
    }
}

/// Nearest open voxel walking from `start` along `dir`, then the reverse
/// direction if the forward walk hits only solids.
fn find_open_neighbor(
    grid: &FluidGrid,
    start: (usize, usize, usize),
    dir: (usize, f64),
) -> Option<usize> {
    for sign in [dir.1, -dir.1] {
        let mut pos = [start.0 as i64, start.1 as i64, start.2 as i64];
        loop {
            pos[dir.0] += if sign >= 0.0 { 1 } else { -1 };
            if !grid.dims.contains(pos[0], pos[1], pos[2]) {
                break;
            }
            let idx = grid.dims.index(pos[0] as usize, pos[1] as usize, pos[2] as usize);
            if !grid.cell(idx).is_solid() {
                return Some(idx);
            }
        }
    }
    None
}

/// Writes per-triangle force records: an ASCII header describing the layout,
/// then one record per step of little-endian binary. Consumed by external
/// fracture tools.
pub struct ForceFieldWriter<W: Write> {
    out: W,
    triangle_count: u32,
}

impl<W: Write> ForceFieldWriter<W> {
    /// Header: `blastforce 1`, the triangle count, then `end`. Each record
    /// is the simulation time (f64) followed by triangle_count force vectors
    /// (3 x f64 each), all little-endian, triangles in mesh order.
    pub fn new(mut out: W, triangle_count: u32) -> io::Result<Self> {
        writeln!(out, "blastforce 1")?;
        writeln!(out, "triangles {triangle_count}")?;
        writeln!(out, "record time:f64 forces:[f64;3]*triangles")?;
        writeln!(out, "end")?;
        Ok(Self { out, triangle_count })
    }

    pub fn write_record(&mut self, time: f64, forces: &[Vec3]) -> io::Result<()> {
        assert_eq!(forces.len(), self.triangle_count as usize);
        self.out.write_all(&time.to_le_bytes())?;
        for f in forces {
            for k in 0..3 {
                self.out.write_all(&f[k].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Reads force records produced by [`ForceFieldWriter`].
pub struct ForceFieldReader<R: Read> {
    input: R,
    pub triangle_count: u32,
}

impl<R: BufRead> ForceFieldReader<R> {
    pub fn new(mut input: R) -> io::Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        if line.trim() != "blastforce 1" {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
        }
        let mut triangle_count = None;
        loop {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated header"));
            }
            let t = line.trim();
            if t == "end" {
                break;
            }
            if let Some(rest) = t.strip_prefix("triangles ") {
                triangle_count = rest.parse::<u32>().ok();
            }
        }
        let triangle_count = triangle_count
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing triangle count"))?;
        Ok(Self { input, triangle_count })
    }

    /// Next (time, per-triangle forces) record, or None at end of stream.
    pub fn read_record(&mut self) -> io::Result<Option<(f64, Vec<Vec3>)>> {
        let mut buf = [0u8; 8];
        match self.input.read_exact(&mut buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        let time = f64::from_le_bytes(buf);
        let mut forces = Vec::with_capacity(self.triangle_count as usize);
        for _ in 0..self.triangle_count {
            let mut v = Vec3::zeros();
            for k in 0..3 {
                self.input.read_exact(&mut buf)?;
                v[k] = f64::from_le_bytes(buf);
            }
            forces.push(v);
        }
        Ok(Some((time, forces)))
    }
}

/// Convenience wrapper matching the export interface: compute the current
/// per-triangle force record for a mesh (no body motion).
pub fn export_force_record(grid: &FluidGrid, mesh: &TriangleMesh) -> Vec<Vec3> {
    let centroid = Point3::from(
        mesh.vertices()
            .iter()
            .map(|v| v.coords)
            .sum::<Vec3>()
            / mesh.vertices().len() as f64,
    );
    apply_fluid_forces_to_mesh(grid, mesh, centroid, &|_| Vec3::zeros()).per_triangle
}

#[allow(unused_imports)]
use crate::boundary as _boundary_used_in_tests;
