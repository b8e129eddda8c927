//! Exact Riemann solver for the 1-D Euler equations of an ideal gas.
//!
//! Independent oracle for shock-tube validation: solves the star-region
//! pressure with Newton iteration on the pressure function and samples the
//! self-similar solution at x/t. Derived from the Rankine-Hugoniot and
//! isentropic relations only; it shares no code with the grid solver.

#[derive(Debug, Clone, Copy)]
pub struct GasState {
    pub rho: f64,
    pub u: f64,
    pub p: f64,
}

impl GasState {
    pub fn sound_speed(&self, gamma: f64) -> f64 {
        (gamma * self.p / self.rho).sqrt()
    }
}

/// Pressure function f_K(p): velocity change across the left or right wave
/// when the star pressure is `p`.
fn wave_fn(p: f64, s: &GasState, gamma: f64) -> f64 {
    if p > s.p {
        // Shock branch.
        let a = 2.0 / ((gamma + 1.0) * s.rho);
        let b = (gamma - 1.0) / (gamma + 1.0) * s.p;
        (p - s.p) * (a / (p + b)).sqrt()
    } else {
        // Rarefaction branch.
        let a = s.sound_speed(gamma);
        2.0 * a / (gamma - 1.0) * ((p / s.p).powf((gamma - 1.0) / (2.0 * gamma)) - 1.0)
    }
}

fn wave_fn_derivative(p: f64, s: &GasState, gamma: f64) -> f64 {
    if p > s.p {
        let a = 2.0 / ((gamma + 1.0) * s.rho);
        let b = (gamma - 1.0) / (gamma + 1.0) * s.p;
        (a / (p + b)).sqrt() * (1.0 - (p - s.p) / (2.0 * (p + b)))
    } else {
        let a = s.sound_speed(gamma);
        (p / s.p).powf(-(gamma + 1.0) / (2.0 * gamma)) / (s.rho * a)
    }
}

/// Star-region pressure and velocity between the two waves.
pub fn solve_star(left: &GasState, right: &GasState, gamma: f64) -> (f64, f64) {
    // Two-rarefaction initial guess keeps Newton in the basin for both
    // shock and rarefaction outcomes.
    let al = left.sound_speed(gamma);
    let ar = right.sound_speed(gamma);
    let z = (gamma - 1.0) / (2.0 * gamma);
    let mut p = ((al + ar - 0.5 * (gamma - 1.0) * (right.u - left.u))
        / (al / left.p.powf(z) + ar / right.p.powf(z)))
    .powf(1.0 / z);
    if !p.is_finite() || p <= 0.0 {
        p = 0.5 * (left.p + right.p);
    }
    for _ in 0..100 {
        let f = wave_fn(p, left, gamma) + wave_fn(p, right, gamma) + (right.u - left.u);
        let df = wave_fn_derivative(p, left, gamma) + wave_fn_derivative(p, right, gamma);
        let step = f / df;
        let next = (p - step).max(1e-12 * (left.p + right.p));
        if ((next - p) / p).abs() < 1e-14 {
            p = next;
            break;
        }
        p = next;
    }
    let u = 0.5 * (left.u + right.u)
        + 0.5 * (wave_fn(p, right, gamma) - wave_fn(p, left, gamma));
    (p, u)
}

/// Samples the exact solution at similarity coordinate xi = x / t.
pub fn sample(left: &GasState, right: &GasState, gamma: f64, xi: f64) -> GasState {
    let (p_star, u_star) = solve_star(left, right, gamma);
    let g1 = (gamma - 1.0) / (gamma + 1.0);
    if xi <= u_star {
        // Left of the contact.
        let al = left.sound_speed(gamma);
        if p_star > left.p {
            // Left shock.
            let sl = left.u - al * ((gamma + 1.0) / (2.0 * gamma) * p_star / left.p
                + (gamma - 1.0) / (2.0 * gamma))
                .sqrt();
            if xi <= sl {
                *left
            } else {
                let rho = left.rho * ((p_star / left.p + g1) / (g1 * p_star / left.p + 1.0));
                GasState { rho, u: u_star, p: p_star }
            }
        } else {
            // Left rarefaction fan.
            let a_star = al * (p_star / left.p).powf((gamma - 1.0) / (2.0 * gamma));
            let head = left.u - al;
            let tail = u_star - a_star;
            if xi <= head {
                *left
            } else if xi >= tail {
                let rho = left.rho * (p_star / left.p).powf(1.0 / gamma);
                GasState { rho, u: u_star, p: p_star }
            } else {
                let u = 2.0 / (gamma + 1.0) * (al + 0.5 * (gamma - 1.0) * left.u + xi);
                let a = 2.0 / (gamma + 1.0) * (al + 0.5 * (gamma - 1.0) * (left.u - xi));
                let rho = left.rho * (a / al).powf(2.0 / (gamma - 1.0));
                let p = left.p * (a / al).powf(2.0 * gamma / (gamma - 1.0));
                GasState { rho, u, p }
            }
        }
    } else {
        // Right of the contact: mirror of the left logic.
        let ar = right.sound_speed(gamma);
        if p_star > right.p {
            let sr = right.u + ar * ((gamma + 1.0) / (2.0 * gamma) * p_star / right.p
                + (gamma - 1.0) / (2.0 * gamma))
                .sqrt();
            if xi >= sr {
                *right
            } else {
                let rho = right.rho * ((p_star / right.p + g1) / (g1 * p_star / right.p + 1.0));
                GasState { rho, u: u_star, p: p_star }
            }
        } else {
            let a_star = ar * (p_star / right.p).powf((gamma - 1.0) / (2.0 * gamma));
            let head = right.u + ar;
            let tail = u_star + a_star;
            if xi >= head {
                *right
            } else if xi <= tail {
                let rho = right.rho * (p_star / right.p).powf(1.0 / gamma);
                GasState { rho, u: u_star, p: p_star }
            } else {
                let u = 2.0 / (gamma + 1.0) * (-ar + 0.5 * (gamma - 1.0) * right.u + xi);
                let a = 2.0 / (gamma + 1.0) * (ar - 0.5 * (gamma - 1.0) * (right.u - xi));
                let rho = right.rho * (a / ar).powf(2.0 / (gamma - 1.0));
                let p = right.p * (a / ar).powf(2.0 * gamma / (gamma - 1.0));
                GasState { rho, u, p }
            }
        }
    }
}

/// Speed of the right-running shock for a classic shock-tube setup (star
/// pressure above the right pressure).
pub fn right_shock_speed(left: &GasState, right: &GasState, gamma: f64) -> f64 {
    let (p_star, _) = solve_star(left, right, gamma);
    assert!(p_star > right.p, "right wave is not a shock");
    let ar = right.sound_speed(gamma);
    right.u
        + ar * ((gamma + 1.0) / (2.0 * gamma) * p_star / right.p
            + (gamma - 1.0) / (2.0 * gamma))
            .sqrt()
}
