//! The voxel grid data model and thermodynamic state relations.
//!
//! All fluid quantities live at voxel centers and are assumed constant across
//! the voxel. The grid is double-buffered: integration passes read one buffer
//! and stage writes into the other, with a single swap per step.

use crate::constants::PhysicalConstants;
use crate::{Point3, Vec3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must all be positive, got {0}x{1}x{2}")]
    EmptyDims(usize, usize, usize),
    #[error("voxel width must be positive, got {0}")]
    BadVoxelWidth(f64),
    #[error("ambient {name} must be positive, got {value}")]
    BadAmbient { name: &'static str, value: f64 },
}

/// Classification of a voxel for boundary handling and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CellFlag {
    /// Ordinary fluid cell.
    Interior = 0,
    /// Ghost view synthesized from the ambient state (free boundary).
    FreeBoundary = 1,
    /// Fully solid cell (partial volume zero); stencil reads mirror off it.
    HardBoundary = 2,
    /// Skipped by the pruning optimization; state is frozen.
    Pruned = 3,
}

impl CellFlag {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Interior),
            1 => Some(Self::FreeBoundary),
            2 => Some(Self::HardBoundary),
            3 => Some(Self::Pruned),
            _ => None,
        }
    }
}

/// Full per-voxel fluid state.
///
/// `internal_energy` is N, the internal energy per unit mass. The total
/// specific energy E = N + |v|^2 / 2 is derived on demand and never stored,
/// so there is exactly one source of truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelState {
    /// Density of the fluid occupying the free fraction (kg/m^3).
    pub rho: f64,
    /// Velocity (m/s).
    pub velocity: Vec3,
    /// Internal energy per unit mass N (J/kg).
    pub internal_energy: f64,
    /// Temperature (K).
    pub temperature: f64,
    /// Pressure (Pa).
    pub pressure: f64,
    /// Fraction of the voxel not occupied by solids, in [0, 1].
    pub partial_volume: f64,
    pub flag: CellFlag,
}

impl VoxelState {
    /// Quiescent state at the given pressure and temperature, with density
    /// and internal energy given by the state equations.
    pub fn ambient(pressure: f64, temperature: f64, consts: &PhysicalConstants) -> Self {
        Self {
            rho: pressure / (consts.r_gas * temperature),
            velocity: Vec3::zeros(),
            internal_energy: consts.c_v * temperature,
            temperature,
            pressure,
            partial_volume: 1.0,
            flag: CellFlag::Interior,
        }
    }

    /// Applies the state equations N = c_V T and P = rho R T, deriving
    /// temperature and pressure from internal energy and density.
    ///
    /// Idempotent: temperature and pressure are pure functions of `rho` and
    /// `internal_energy`, which are left untouched.
    #[inline]
    pub fn sync_state_equations(mut self, consts: &PhysicalConstants) -> Self {
        self.temperature = self.internal_energy / consts.c_v;
        self.pressure = self.rho * consts.r_gas * self.temperature;
        self
    }

    /// Total energy per unit mass E = N + |v|^2 / 2.
    #[inline]
    pub fn total_specific_energy(&self) -> f64 {
        self.internal_energy + 0.5 * self.velocity.norm_squared()
    }

    /// True if the voxel is fully occupied by solid geometry.
    #[inline]
    pub fn is_solid(&self) -> bool {
        self.partial_volume == 0.0
    }
}

/// Grid extents in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Linear index of the voxel at (x, y, z). x varies fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    /// Inverse of [`Self::index`].
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.nx;
        let y = (idx / self.nx) % self.ny;
        let z = idx / (self.nx * self.ny);
        (x, y, z)
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }
}

/// Double-buffered voxel grid.
///
/// The grid occupies the axis-aligned box from the origin (0, 0, 0) to
/// `(nx h, ny h, nz h)`; the center of voxel (x, y, z) is at
/// `((x + 1/2) h, (y + 1/2) h, (z + 1/2) h)`.
#[derive(Debug, Clone)]
pub struct FluidGrid {
    pub dims: GridDims,
    /// Voxel width h (m).
    pub h: f64,
    pub ambient_pressure: f64,
    pub ambient_temperature: f64,
    cells: Vec<VoxelState>,
    back: Vec<VoxelState>,
}

impl FluidGrid {
    /// Creates a grid with every cell in the quiescent ambient state.
    pub fn new_ambient(
        dims: GridDims,
        h: f64,
        pressure: f64,
        temperature: f64,
        consts: &PhysicalConstants,
    ) -> Result<Self, GridError> {
        if dims.nx == 0 || dims.ny == 0 || dims.nz == 0 {
            return Err(GridError::EmptyDims(dims.nx, dims.ny, dims.nz));
        }
        if !(h > 0.0) {
            return Err(GridError::BadVoxelWidth(h));
        }
        if !(pressure > 0.0) {
            return Err(GridError::BadAmbient { name: "pressure", value: pressure });
        }
        if !(temperature > 0.0) {
            return Err(GridError::BadAmbient { name: "temperature", value: temperature });
        }
        let cell = VoxelState::ambient(pressure, temperature, consts);
        let cells = vec![cell; dims.cell_count()];
        Ok(Self {
            dims,
            h,
            ambient_pressure: pressure,
            ambient_temperature: temperature,
            back: cells.clone(),
            cells,
        })
    }

    /// Reinitializes every cell to the ambient state (velocity zero, full
    /// partial volume).
    pub fn init_ambient(
        &mut self,
        pressure: f64,
        temperature: f64,
        consts: &PhysicalConstants,
    ) -> Result<(), GridError> {
        if !(pressure > 0.0) {
            return Err(GridError::BadAmbient { name: "pressure", value: pressure });
        }
        if !(temperature > 0.0) {
            return Err(GridError::BadAmbient { name: "temperature", value: temperature });
        }
        self.ambient_pressure = pressure;
        self.ambient_temperature = temperature;
        let cell = VoxelState::ambient(pressure, temperature, consts);
        self.cells.fill(cell);
        self.back.fill(cell);
        Ok(())
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> &VoxelState {
        &self.cells[idx]
    }

    #[inline]
    pub fn cell_mut(&mut self, idx: usize) -> &mut VoxelState {
        &mut self.cells[idx]
    }

    /// Read buffer: the current state of the fluid.
    #[inline]
    pub fn cells(&self) -> &[VoxelState] {
        &self.cells
    }

    /// Write buffer for the integration passes.
    #[inline]
    pub fn back_mut(&mut self) -> &mut [VoxelState] {
        &mut self.back
    }

    /// Split access: immutable read buffer plus mutable write buffer.
    #[inline]
    pub fn buffers_mut(&mut self) -> (&[VoxelState], &mut [VoxelState]) {
        (&self.cells, &mut self.back)
    }

    /// Swaps read and write buffers. Serialized barrier between passes.
    #[inline]
    pub fn swap_buffers(&mut self) {
        std::mem::swap(&mut self.cells, &mut self.back);
    }

    /// Overwrites a cell in both buffers. Used by initialization, charge
    /// ignition, and the displacement machinery, which operate outside the
    /// double-buffered integration passes.
    pub fn set_cell(&mut self, idx: usize, state: VoxelState) {
        self.cells[idx] = state;
        self.back[idx] = state;
    }

    /// World position of a voxel center.
    #[inline]
    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Point3 {
        Point3::new(
            (x as f64 + 0.5) * self.h,
            (y as f64 + 0.5) * self.h,
            (z as f64 + 0.5) * self.h,
        )
    }

    /// Total fluid mass, sum of rho * partial_volume * h^3 over all voxels.
    ///
    /// Deterministic: fixed index-order summation regardless of worker count.
    pub fn total_mass(&self) -> f64 {
        let vol = self.h * self.h * self.h;
        let mut sum = 0.0;
        for c in &self.cells {
            sum += c.rho * c.partial_volume * vol;
        }
        sum
    }

    /// Total energy, using E = N + |v|^2 / 2 per unit mass.
    pub fn total_energy(&self) -> f64 {
        let vol = self.h * self.h * self.h;
        let mut sum = 0.0;
        for c in &self.cells {
            sum += c.rho * c.partial_volume * vol * c.total_specific_energy();
        }
        sum
    }

    /// Total momentum vector.
    pub fn total_momentum(&self) -> Vec3 {
        let vol = self.h * self.h * self.h;
        let mut sum = Vec3::zeros();
        for c in &self.cells {
            sum += c.velocity * (c.rho * c.partial_volume * vol);
        }
        sum
    }

    /// Trilinear interpolation of (rho, velocity, temperature, pressure) at a
    /// world position, clamped to the domain of cell centers.
    ///
    /// Implemented as nested lerps so constant fields are reproduced exactly
    /// and linear fields to rounding.
    pub fn sample_trilinear(&self, pos: Point3) -> InterpolatedFluid {
        let (c, f) = self.interp_cell_weights(pos);
        let at = |dx: usize, dy: usize, dz: usize| -> &VoxelState {
            &self.cells[self.dims.index(c.0 + dx, c.1 + dy, c.2 + dz)]
        };
        #[inline]
        fn lerp(a: f64, b: f64, t: f64) -> f64 {
            a + t * (b - a)
        }
        #[inline]
        fn lerp3(a: Vec3, b: Vec3, t: f64) -> Vec3 {
            a + (b - a) * t
        }

        macro_rules! tri {
            ($get:expr, $lerp:ident) => {{
                let c00 = $lerp($get(0, 0, 0), $get(1, 0, 0), f.0);
                let c10 = $lerp($get(0, 1, 0), $get(1, 1, 0), f.0);
                let c01 = $lerp($get(0, 0, 1), $get(1, 0, 1), f.0);
                let c11 = $lerp($get(0, 1, 1), $get(1, 1, 1), f.0);
                let c0 = $lerp(c00, c10, f.1);
                let c1 = $lerp(c01, c11, f.1);
                $lerp(c0, c1, f.2)
            }};
        }

        InterpolatedFluid {
            rho: tri!(|x, y, z| at(x, y, z).rho, lerp),
            velocity: tri!(|x, y, z| at(x, y, z).velocity, lerp3),
            temperature: tri!(|x, y, z| at(x, y, z).temperature, lerp),
            pressure: tri!(|x, y, z| at(x, y, z).pressure, lerp),
        }
    }

    /// Gradient of the trilinearly interpolated density at a world position.
    pub fn density_gradient(&self, pos: Point3) -> Vec3 {
        let (c, f) = self.interp_cell_weights(pos);
        let rho = |dx: usize, dy: usize, dz: usize| -> f64 {
            self.cells[self.dims.index(c.0 + dx, c.1 + dy, c.2 + dz)].rho
        };
        let (tx, ty, tz) = f;
        let inv_h = 1.0 / self.h;
        // Analytic partial derivatives of the trilinear interpolant.
        let dx = (rho(1, 0, 0) - rho(0, 0, 0)) * (1.0 - ty) * (1.0 - tz)
            + (rho(1, 1, 0) - rho(0, 1, 0)) * ty * (1.0 - tz)
            + (rho(1, 0, 1) - rho(0, 0, 1)) * (1.0 - ty) * tz
            + (rho(1, 1, 1) - rho(0, 1, 1)) * ty * tz;
        let dy = (rho(0, 1, 0) - rho(0, 0, 0)) * (1.0 - tx) * (1.0 - tz)
            + (rho(1, 1, 0) - rho(1, 0, 0)) * tx * (1.0 - tz)
            + (rho(0, 1, 1) - rho(0, 0, 1)) * (1.0 - tx) * tz
            + (rho(1, 1, 1) - rho(1, 0, 1)) * tx * tz;
        let dz = (rho(0, 0, 1) - rho(0, 0, 0)) * (1.0 - tx) * (1.0 - ty)
            + (rho(1, 0, 1) - rho(1, 0, 0)) * tx * (1.0 - ty)
            + (rho(0, 1, 1) - rho(0, 1, 0)) * (1.0 - tx) * ty
            + (rho(1, 1, 1) - rho(1, 1, 0)) * tx * ty;
        Vec3::new(dx * inv_h, dy * inv_h, dz * inv_h)
    }

    /// True if `pos` lies inside the grid box.
    pub fn contains_point(&self, pos: Point3) -> bool {
        let max = Vec3::new(
            self.dims.nx as f64 * self.h,
            self.dims.ny as f64 * self.h,
            self.dims.nz as f64 * self.h,
        );
        (0.0..=max.x).contains(&pos.x)
            && (0.0..=max.y).contains(&pos.y)
            && (0.0..=max.z).contains(&pos.z)
    }

    /// Base cell and fractional weights for interpolation among the 2x2x2
    /// block of voxel centers surrounding `pos`, clamped at the boundary.
    fn interp_cell_weights(&self, pos: Point3) -> ((usize, usize, usize), (f64, f64, f64)) {
        let clamp_axis = |p: f64, n: usize| -> (usize, f64) {
            let u = p / self.h - 0.5;
            if u <= 0.0 || n == 1 {
                (0, 0.0)
            } else if u >= (n - 1) as f64 {
                (n - 2, 1.0)
            } else {
                let base = u.floor() as usize;
                let base = base.min(n - 2);
                (base, u - base as f64)
            }
        };
        let (bx, tx) = clamp_axis(pos.x, self.dims.nx);
        let (by, ty) = clamp_axis(pos.y, self.dims.ny);
        let (bz, tz) = clamp_axis(pos.z, self.dims.nz);
        ((bx, by, bz), (tx, ty, tz))
    }
}

/// Fluid quantities sampled at an arbitrary point.
#[derive(Debug, Clone, Copy)]
pub struct InterpolatedFluid {
    pub rho: f64,
    pub velocity: Vec3,
    pub temperature: f64,
    pub pressure: f64,
}
