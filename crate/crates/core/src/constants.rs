//! Physical constants for the working gas and the body force.
//!
//! Defaults are standard sea-level air. Every value can be overridden from
//! scenario configuration; the heat-capacity ratio gamma is always derived
//! from `r_gas` and `c_v`, never stored on its own.

use crate::Vec3;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConstantsError {
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Material and transport constants used by the governing equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Viscosity coefficient mu (N s / m^2).
    pub mu: f64,
    /// Thermal conductivity k (W / (m K)).
    pub k_thermal: f64,
    /// Specific heat at constant volume c_V (J / (kg K)).
    pub c_v: f64,
    /// Gas constant of air R (J / (kg K)).
    pub r_gas: f64,
    /// Dale-Gladstone constant linking refractive index to density (m^3 / kg).
    pub k_gladstone: f64,
    /// Body-force acceleration (m / s^2), e.g. gravity. Zero by default so
    /// that a uniform ambient field is an exact fixed point.
    pub gravity: Vec3,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mu: 1.8e-5,
            k_thermal: 0.026,
            c_v: 717.5,
            r_gas: 287.0,
            k_gladstone: 2.26e-4,
            gravity: Vec3::zeros(),
        }
    }
}

impl PhysicalConstants {
    /// Builds a constants set, rejecting non-positive material coefficients.
    pub fn new(
        mu: f64,
        k_thermal: f64,
        c_v: f64,
        r_gas: f64,
        k_gladstone: f64,
        gravity: Vec3,
    ) -> Result<Self, ConstantsError> {
        for (name, value) in [
            ("mu", mu),
            ("k_thermal", k_thermal),
            ("c_v", c_v),
            ("r_gas", r_gas),
        ] {
            if !(value > 0.0) {
                return Err(ConstantsError::NonPositive { name, value });
            }
        }
        Ok(Self { mu, k_thermal, c_v, r_gas, k_gladstone, gravity })
    }

    /// Heat-capacity ratio gamma = 1 + R / c_V. About 1.4 for air.
    #[inline]
    pub fn gamma(&self) -> f64 {
        1.0 + self.r_gas / self.c_v
    }

    /// Speed of sound sqrt(gamma R T) at temperature `t`.
    #[inline]
    pub fn sound_speed(&self, t: f64) -> f64 {
        (self.gamma() * self.r_gas * t.max(0.0)).sqrt()
    }
}
