//! Boundary semantics for stencil reads and the active-set pruning
//! optimization.
//!
//! Free outer faces read as the ambient state, so waves exit as if the volume
//! were arbitrarily large. Hard faces (outer walls and fully solid voxels)
//! mirror the reading cell with the normal velocity component negated, which
//! zeroes the face-interpolated normal velocity while leaving scalars and
//! tangential flow untouched.

use crate::fluid::{CellFlag, FluidGrid, VoxelState};

/// Outer-face boundary type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Free,
    Hard,
}

/// Per-face outer boundary choices plus pruning thresholds.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySpec {
    /// Face order: x low, x high, y low, y high, z low, z high.
    pub outer_faces: [FaceKind; 6],
    pub prune_enabled: bool,
    /// A voxel is core-active if any face-neighbor pressure difference is at
    /// least this threshold (Pa).
    pub prune_pressure_threshold: f64,
    /// ... or if its speed is at least this threshold (m/s).
    pub prune_velocity_threshold: f64,
    /// Chebyshev radius of the halo kept active around every voxel that has
    /// ever been core-active. Must comfortably exceed the per-step stencil
    /// reach so frozen cells only ever carry sub-threshold leakage.
    pub halo_radius: usize,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            outer_faces: [FaceKind::Free; 6],
            prune_enabled: false,
            prune_pressure_threshold: 10.0,
            prune_velocity_threshold: 1e-3,
            halo_radius: 6,
        }
    }
}

impl BoundarySpec {
    pub fn all_free() -> Self {
        Self::default()
    }

    pub fn all_hard() -> Self {
        Self { outer_faces: [FaceKind::Hard; 6], ..Self::default() }
    }

    #[inline]
    pub fn face(&self, axis: usize, high: bool) -> FaceKind {
        self.outer_faces[axis * 2 + usize::from(high)]
    }
}

/// Result of resolving a stencil read at `base + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolved {
    /// An ordinary in-domain fluid cell.
    Cell(usize),
    /// A mirror ghost: read `cell`, negating the velocity components for
    /// which `negate` is set.
    Mirror { cell: usize, negate: [bool; 3] },
    /// A free-boundary ghost: read the ambient state.
    Ambient,
}

/// Resolves a neighbor read, applying outer-face rules per axis and the
/// solid-cell mirror rule.
///
/// Offsets are limited to the stencil reach (|offset| <= halo of 2 per axis).
pub fn resolve(
    grid: &FluidGrid,
    spec: &BoundarySpec,
    base: (usize, usize, usize),
    offset: (i64, i64, i64),
) -> Resolved {
    let dims = grid.dims;
    let n = [dims.nx as i64, dims.ny as i64, dims.nz as i64];
    let mut t = [
        base.0 as i64 + offset.0,
        base.1 as i64 + offset.1,
        base.2 as i64 + offset.2,
    ];
    let mut negate = [false; 3];
    let mut mirrored = false;
    for axis in 0..3 {
        if t[axis] < 0 {
            match spec.face(axis, false) {
                FaceKind::Free => return Resolved::Ambient,
                FaceKind::Hard => {
                    t[axis] = -1 - t[axis];
                    negate[axis] = !negate[axis];
                    mirrored = true;
                }
            }
        } else if t[axis] >= n[axis] {
            match spec.face(axis, true) {
                FaceKind::Free => return Resolved::Ambient,
                FaceKind::Hard => {
                    t[axis] = 2 * n[axis] - 1 - t[axis];
                    negate[axis] = !negate[axis];
                    mirrored = true;
                }
            }
        }
    }
    let idx = dims.index(t[0] as usize, t[1] as usize, t[2] as usize);
    if grid.cell(idx).is_solid() {
        // Solid target: mirror the reading cell, negating the velocity along
        // every axis the offset stepped across.
        let mut neg = [false; 3];
        let off = [offset.0, offset.1, offset.2];
        for axis in 0..3 {
            neg[axis] = off[axis] != 0;
        }
        return Resolved::Mirror { cell: dims.index(base.0, base.1, base.2), negate: neg };
    }
    if mirrored {
        Resolved::Mirror { cell: idx, negate }
    } else {
        Resolved::Cell(idx)
    }
}

/// Materializes the `VoxelState` view a stencil read sees, including ghost
/// construction for boundaries.
pub fn ghost_value(
    grid: &FluidGrid,
    spec: &BoundarySpec,
    ambient: &VoxelState,
    base: (usize, usize, usize),
    offset: (i64, i64, i64),
) -> VoxelState {
    match resolve(grid, spec, base, offset) {
        Resolved::Cell(idx) => *grid.cell(idx),
        Resolved::Mirror { cell, negate } => {
            let mut s = *grid.cell(cell);
            for axis in 0..3 {
                if negate[axis] {
                    s.velocity[axis] = -s.velocity[axis];
                }
            }
            s.flag = CellFlag::HardBoundary;
            s
        }
        Resolved::Ambient => {
            let mut s = *ambient;
            s.flag = CellFlag::FreeBoundary;
            s
        }
    }
}

/// The set of voxels evaluated by the integration passes.
///
/// A voxel is core-active if its neighborhood pressure differences or its
/// own speed exceed the pruning thresholds. Once core-active, a voxel stays
/// in the ever-core mask for the rest of the run, and the active set is the
/// Chebyshev dilation of that mask, so the halo always leads the wave front.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    /// Sorted linear indices of active voxels (solids excluded).
    pub indices: Vec<u32>,
    /// Per-voxel active mark, indexable by linear index.
    pub mark: Vec<bool>,
    /// Voxels that have ever met the core-activity rule.
    pub core_ever: Vec<bool>,
}

impl ActiveSet {
    /// Active set covering the whole grid (pruning disabled). Solid voxels
    /// are excluded from the index list but marked active for sampling.
    pub fn all(grid: &FluidGrid) -> Self {
        let n = grid.dims.cell_count();
        let indices = (0..n as u32)
            .filter(|&i| !grid.cell(i as usize).is_solid())
            .collect();
        Self { indices, mark: vec![true; n], core_ever: vec![true; n] }
    }

    pub fn empty(cell_count: usize) -> Self {
        Self {
            indices: Vec::new(),
            mark: vec![false; cell_count],
            core_ever: vec![false; cell_count],
        }
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.mark[idx]
    }

    /// Recomputes the active set from the current grid state.
    ///
    /// `force_core` lists voxels that must be treated as core-active this
    /// step regardless of thresholds (e.g. voxels touched by moving solids).
    pub fn update(&mut self, grid: &FluidGrid, spec: &BoundarySpec, force_core: &[u32]) {
        let n = grid.dims.cell_count();
        if !spec.prune_enabled {
            *self = Self::all(grid);
            return;
        }
        let dims = grid.dims;
        let p_thresh = spec.prune_pressure_threshold;
        let v_thresh_sq = spec.prune_velocity_threshold * spec.prune_velocity_threshold;

        // Core rule, evaluated on the full grid in index order.
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    let idx = dims.index(x, y, z);
                    if self.core_ever[idx] {
                        continue;
                    }
                    let c = grid.cell(idx);
                    if c.is_solid() {
                        continue;
                    }
                    if c.velocity.norm_squared() >= v_thresh_sq {
                        self.core_ever[idx] = true;
                        continue;
                    }
                    let p = c.pressure;
                    let mut hit = false;
                    for (dx, dy, dz) in FACE_OFFSETS {
                        let xx = x as i64 + dx;
                        let yy = y as i64 + dy;
                        let zz = z as i64 + dz;
                        let np = if dims.contains(xx, yy, zz) {
                            let nc = grid.cell(dims.index(xx as usize, yy as usize, zz as usize));
                            if nc.is_solid() {
                                continue;
                            }
                            nc.pressure
                        } else {
                            // Free ghost is ambient; hard ghost copies our own
                            // pressure, contributing no difference.
                            match spec.face(axis_of(dx, dy, dz), dx + dy + dz > 0) {
                                FaceKind::Free => grid.ambient_pressure,
                                FaceKind::Hard => continue,
                            }
                        };
                        if (np - p).abs() >= p_thresh {
                            hit = true;
                            break;
                        }
                    }
                    if hit {
                        self.core_ever[idx] = true;
                    }
                }
            }
        }
        for &idx in force_core {
            self.core_ever[idx as usize] = true;
        }

        // Chebyshev dilation of the ever-core mask by the halo radius,
        // separable along the three axes.
        let r = spec.halo_radius;
        let mut a = self.core_ever.clone();
        let mut b = vec![false; n];
        dilate_axis(&a, &mut b, dims, 0, r);
        dilate_axis(&b, &mut a, dims, 1, r);
        dilate_axis(&a, &mut b, dims, 2, r);
        self.mark = b;

        self.indices.clear();
        for idx in 0..n {
            if self.mark[idx] && !grid.cell(idx).is_solid() {
                self.indices.push(idx as u32);
            }
        }
    }
}

const FACE_OFFSETS: [(i64, i64, i64); 6] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];

#[inline]
fn axis_of(dx: i64, dy: i64, dz: i64) -> usize {
    if dx != 0 {
        0
    } else if dy != 0 {
        1
    } else {
        debug_assert!(dz != 0);
        2
    }
}

/// 1-D dilation of a boolean mask along `axis` by radius `r`.
fn dilate_axis(src: &[bool], dst: &mut [bool], dims: crate::fluid::GridDims, axis: usize, r: usize) {
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let len = [nx, ny, nz][axis];
    let r = r as i64;
    dst.iter_mut().for_each(|v| *v = false);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let idx = dims.index(x, y, z);
                if !src[idx] {
                    continue;
                }
                let pos = [x, y, z][axis] as i64;
                let lo = (pos - r).max(0) as usize;
                let hi = ((pos + r) as usize).min(len - 1);
                let mut coord = [x, y, z];
                for k in lo..=hi {
                    coord[axis] = k;
                    dst[dims.index(coord[0], coord[1], coord[2])] = true;
                }
            }
        }
    }
}
