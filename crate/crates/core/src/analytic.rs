//! Closed-form relaxation solutions.
//!
//! Case 1 (no deformation, F = 1) in nondimensional time t̄ = t/τ0 solves
//! `dσ/dt̄ = -a·σ^(1/m)`:
//!
//! * m < 1: algebraic decay, `σ = [σ0^((m-1)/m) + a(1-m)/m·t̄]^(-m/(1-m))`
//! * m = 1: exponential decay, `σ = σ0·e^(-a·t̄)` with a = 1/k
//! * m > 1: extinction, `σ = [σ0^((m-1)/m) - a(m-1)/m·t̄]^(m/(m-1))` up to
//!   `t̄_c = m/(m-1)·σ0^((m-1)/m)/a`, and exactly zero afterwards.
//!
//! Negative initial stresses use the odd symmetry of the ODE.

use crate::constitutive::PowerLawFluid;
use crate::error::{domain, Result};

/// Below this distance from m = 1 the exponential branch is used.
pub const NEWTONIAN_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case1Params {
    pub fluid: PowerLawFluid,
    pub sigma0: f64,
}

impl Case1Params {
    pub fn new(fluid: PowerLawFluid, sigma0: f64) -> Result<Self> {
        if !sigma0.is_finite() {
            return domain(format!("sigma0 must be finite, got {sigma0}"));
        }
        Ok(Self { fluid, sigma0 })
    }
}

pub fn case1_solution(p: &Case1Params, tbar: f64) -> Result<f64> {
    if !(tbar >= 0.0) {
        return domain(format!("nondimensional time must be nonnegative, got {tbar}"));
    }
    let s0 = p.sigma0.abs();
    if s0 == 0.0 {
        return Ok(0.0);
    }
    let m = p.fluid.m();
    let a = p.fluid.a_coeff();
    let magnitude = if (m - 1.0).abs() < NEWTONIAN_BAND {
        s0 * (-a * tbar).exp()
    } else if m < 1.0 {
        let base = s0.powf((m - 1.0) / m) + a * (1.0 - m) / m * tbar;
        base.powf(-m / (1.0 - m))
    } else if tbar >= extinction_time(p)? {
        0.0
    } else {
        let base = (s0.powf((m - 1.0) / m) - a * (m - 1.0) / m * tbar).max(0.0);
        if base == 0.0 {
            0.0
        } else {
            base.powf(m / (m - 1.0))
        }
    };
    Ok(p.sigma0.signum() * magnitude)
}

/// Nondimensional time at which a shear-thickening (m > 1) stress vanishes.
pub fn extinction_time(p: &Case1Params) -> Result<f64> {
    let m = p.fluid.m();
    if !(m > 1.0) || (m - 1.0).abs() < NEWTONIAN_BAND {
        return domain(format!("finite extinction requires m > 1, got m = {m}"));
    }
    let s0 = p.sigma0.abs();
    Ok(m / (m - 1.0) * s0.powf((m - 1.0) / m) / p.fluid.a_coeff())
}

/// Homogeneous shear at constant velocity gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyShearParams {
    pub vx0: f64,
    pub f0: f64,
    pub tau0: f64,
    pub fluid: PowerLawFluid,
}

impl SteadyShearParams {
    pub fn new(vx0: f64, f0: f64, tau0: f64, fluid: PowerLawFluid) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return domain(format!("F0 must be positive, got {f0}"));
        }
        if !(tau0 > 0.0 && tau0.is_finite()) {
            return domain(format!("tau0 must be positive, got {tau0}"));
        }
        if !vx0.is_finite() {
            return domain(format!("vx0 must be finite, got {vx0}"));
        }
        Ok(Self { vx0, f0, tau0, fluid })
    }
}

/// Stress at which production balances the imposed shear: the power law.
pub fn steady_sigma(p: &SteadyShearParams) -> f64 {
    p.fluid.stress_from_rate(p.vx0)
}

/// Linear relaxation `τ1·σ' = σ∞ - σ` started from rest.
pub fn maxwell_comparator(t: f64, sigma_inf: f64, tau1: f64) -> Result<f64> {
    if !(tau1 > 0.0 && tau1.is_finite()) {
        return domain(format!("tau1 must be positive, got {tau1}"));
    }
    if !(t >= 0.0) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    Ok(sigma_inf * -(-t / tau1).exp_m1())
}
