//! Sod shock tube against the exact Riemann solution.
//!
//! An effectively one-dimensional channel (hard side walls) with the classic
//! diaphragm initial condition: the simulated density profile must match the
//! analytic self-similar solution in L1, and the captured shock front must
//! land within a few cells of the analytic position.

#[path = "common/riemann.rs"]
mod riemann;

use blastsim_core::boundary::BoundarySpec;
use blastsim_core::fluid::{FluidGrid, GridDims};
use blastsim_core::integrate::{step, StepContext};
use blastsim_core::{PhysicalConstants, ATM};
use riemann::GasState;

#[test]
fn riemann_oracle_matches_literature_star_values() {
    // Classic Sod in nondimensional units: p* = 0.30313, u* = 0.92745.
    let left = GasState { rho: 1.0, u: 0.0, p: 1.0 };
    let right = GasState { rho: 0.125, u: 0.0, p: 0.1 };
    let (p_star, u_star) = riemann::solve_star(&left, &right, 1.4);
    assert!((p_star - 0.30313).abs() < 5e-4, "p* = {p_star}");
    assert!((u_star - 0.92745).abs() < 5e-4, "u* = {u_star}");
}

#[test]
fn sod_shock_tube_matches_exact_solution() {
    let c = PhysicalConstants::default();
    let gamma = c.gamma();
    let n = 400usize;
    let h = 1.0;
    let mid = n / 2;

    // Scaled Sod states: unit density at one atmosphere on the left.
    let left = GasState { rho: 1.0, u: 0.0, p: ATM };
    let right = GasState { rho: 0.125, u: 0.0, p: 0.1 * ATM };

    let mut grid = FluidGrid::new_ambient(GridDims::new(n, 1, 1), h, ATM, 290.0, &c).unwrap();
    for x in 0..n {
        let s = if x < mid { left } else { right };
        let idx = grid.dims.index(x, 0, 0);
        let mut cell = *grid.cell(idx);
        cell.rho = s.rho;
        cell.pressure = s.p;
        cell.temperature = s.p / (s.rho * c.r_gas);
        cell.internal_energy = c.c_v * cell.temperature;
        grid.set_cell(idx, cell);
    }

    let dt = 2.5e-4_f64;
    let t_final = 0.15_f64;
    let steps = (t_final / dt).round() as usize;
    let mut ctx = StepContext::new(&grid, dt, c, BoundarySpec::all_hard());
    for _ in 0..steps {
        step(&mut grid, &mut ctx);
    }
    let t = steps as f64 * dt;

    // The diaphragm sits on the boundary between cells mid-1 and mid.
    let x0 = mid as f64 * h;
    let mut l1 = 0.0;
    let mut mean_exact = 0.0;
    for x in 0..n {
        let xc = (x as f64 + 0.5) * h;
        let exact = riemann::sample(&left, &right, gamma, (xc - x0) / t);
        let sim = grid.cell(grid.dims.index(x, 0, 0)).rho;
        l1 += (sim - exact.rho).abs();
        mean_exact += exact.rho;
    }
    l1 /= n as f64;
    mean_exact /= n as f64;
    let rel = l1 / mean_exact;
    println!("Sod tube: L1 density error {l1:.5} ({:.2}% of mean {mean_exact:.4})", rel * 100.0);
    assert!(rel < 0.05, "L1 density error {:.2}% exceeds 5%", rel * 100.0);

    // Shock front position: first cell from the right where density crosses
    // the midpoint between the post-shock and undisturbed states.
    let (p_star, _) = riemann::solve_star(&left, &right, gamma);
    let g1 = (gamma - 1.0) / (gamma + 1.0);
    let rho_post = right.rho * ((p_star / right.p + g1) / (g1 * p_star / right.p + 1.0));
    let thresh = 0.5 * (right.rho + rho_post);
    let mut sim_shock = None;
    for x in (0..n).rev() {
        if grid.cell(grid.dims.index(x, 0, 0)).rho >= thresh {
            sim_shock = Some((x as f64 + 0.5) * h);
            break;
        }
    }
    let sim_shock = sim_shock.expect("no shock found in the simulated profile");
    let exact_shock = x0 + riemann::right_shock_speed(&left, &right, gamma) * t;
    let err_cells = (sim_shock - exact_shock).abs() / h;
    println!("Sod tube: shock at {sim_shock:.1} m vs exact {exact_shock:.1} m ({err_cells:.2} cells)");
    assert!(err_cells <= 3.0, "shock front off by {err_cells:.2} cells");
}
