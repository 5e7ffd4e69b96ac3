//! Hyperbolic relaxation model for one-dimensional, isothermal power-law
//! fluids with finite relaxation time.
//!
//! The stress σ is an independent field with its own balance law. In
//! Lagrangian coordinates (X, t):
//!
//! ```text
//! ρ*·v_t + (p(F) - σ)_X = ρ*·b
//! F_t - v_X             = 0
//! Z(σ)_t - v_X          = -F·a(m, k)·sign(σ)|σ|^(1/m)
//! ```
//!
//! with `Z' = τ(σ) > 0`. As τ → 0 the last equation collapses to the
//! power law `v_x = a·sign(σ)|σ|^(1/m)`.
//!
//! ```
//! use ret_core::{simulate_homogeneous, ElasticLaw, Material, OdeOptions, PowerLawFluid, ShearProtocol, ViscousEnergy};
//!
//! # fn main() -> ret_core::Result<()> {
//! let fluid = PowerLawFluid::conventional(0.7)?; // k = 10·e^(-1.4)
//! let mat = Material::new(1.0, ElasticLaw::linear(1.0)?, ViscousEnergy::quadratic(0.1)?, fluid)?;
//! let traj = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.1 }, 0.0, 1.0, &OdeOptions::until(30.0))?;
//! assert!((traj.final_sigma() - fluid.stress_from_rate(0.1)).abs() < 1e-8);
//! # Ok(())
//! # }
//! ```

// `!(x > 0.0)` is deliberate: it rejects NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod constitutive;
pub mod diagnostics;
pub mod error;
pub mod format;
pub mod ode;
pub mod pde;

mod quad;
mod roots;

pub use analytic::{case1_solution, extinction_time, maxwell_comparator, steady_sigma, Case1Params, SteadyShearParams};
pub use constitutive::{
    a_coeff, conventional_consistency, CustomViscous, ElasticLaw, Material, PowerLawFluid, ViscousEnergy,
};
pub use diagnostics::{energy_budget, observed_order, total_energy, EnergyReport};
pub use error::{Error, Result};
pub use ode::{simulate_homogeneous, superexp_ratio_test, OdeOptions, ShearProtocol, Trajectory};
pub use pde::{BoundaryCondition, Conserved, Field1D, Grid1D, State1D, StepMode};
