//! Explosive charges: a mesh-shaped region initialized to detonation
//! pressure and temperature when its trigger fires.

use super::{OccupancyField, TriangleMesh};
use crate::constants::PhysicalConstants;
use crate::fluid::FluidGrid;

/// When a charge ignites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trigger {
    Immediate,
    /// Fires once simulation time reaches the given instant (s).
    AtTime(f64),
    /// Fires once any voxel adjacent to the charge region reaches the given
    /// temperature (K).
    Temperature(f64),
}

/// An explosive region awaiting ignition.
#[derive(Debug, Clone)]
pub struct Charge {
    pub name: String,
    pub mesh: TriangleMesh,
    /// Detonation pressure (Pa).
    pub p0: f64,
    /// Detonation temperature (K).
    pub t0: f64,
    pub trigger: Trigger,
    pub ignited: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IgniteOutcome {
    pub ignited_cells: usize,
    pub skipped_solid: usize,
}

/// Sets detonation pressure and temperature on every voxel the charge
/// occupies by more than half, deriving density and internal energy from the
/// state equations. Velocity is left unchanged. Voxels fully occupied by
/// solids are skipped with a warning.
pub fn ignite_charge(
    grid: &mut FluidGrid,
    occupancy: &OccupancyField,
    p0: f64,
    t0: f64,
    consts: &PhysicalConstants,
) -> IgniteOutcome {
    let mut outcome = IgniteOutcome::default();
    let cells: Vec<(usize, usize, usize)> = occupancy
        .iter_region()
        .filter(|&(_, free)| 1.0 - free > 0.5)
        .map(|(c, _)| c)
        .collect();
    for (x, y, z) in cells {
        let idx = grid.dims.index(x, y, z);
        let cell = *grid.cell(idx);
        if cell.is_solid() {
            outcome.skipped_solid += 1;
            continue;
        }
        let mut s = cell;
        s.temperature = t0;
        s.rho = p0 / (consts.r_gas * t0);
        s.internal_energy = consts.c_v * t0;
        // Recomputing the pressure from the state equation keeps the cell
        // exactly synced (it lands within an ulp of the requested p0).
        s.pressure = s.rho * consts.r_gas * t0;
        grid.set_cell(idx, s);
        outcome.ignited_cells += 1;
    }
    if outcome.skipped_solid > 0 {
        log::warn!(
            "charge overlaps solid geometry: {} voxels skipped",
            outcome.skipped_solid
        );
    }
    outcome
}

/// True if any voxel face-adjacent to the charge's ignition region (but not
/// inside it) has reached the threshold temperature.
pub fn temperature_trigger_met(
    grid: &FluidGrid,
    occupancy: &OccupancyField,
    threshold: f64,
) -> bool {
    let dims = grid.dims;
    for ((x, y, z), free) in occupancy.iter_region() {
        if 1.0 - free <= 0.5 {
            continue;
        }
        for (dx, dy, dz) in [
            (-1i64, 0i64, 0i64),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ] {
            let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
            if !dims.contains(nx, ny, nz) {
                continue;
            }
            let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
            if occupancy.occupancy_at(nx, ny, nz) > 0.5 {
                continue;
            }
            let cell = grid.cell(dims.index(nx, ny, nz));
            if !cell.is_solid() && cell.temperature >= threshold {
                return true;
            }
        }
    }
    false
}
