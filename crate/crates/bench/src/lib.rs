//! Fixtures shared by the criterion benches.

use ret_core::pde::State1D;
use ret_core::{BoundaryCondition, ElasticLaw, Field1D, Grid1D, Material, PowerLawFluid, ViscousEnergy};

pub fn material(tau0: f64, m: f64) -> Material {
    Material::new(
        1.0,
        ElasticLaw::linear(1.0).expect("valid modulus"),
        ViscousEnergy::quadratic(tau0).expect("valid tau0"),
        PowerLawFluid::conventional(m).expect("valid flow index"),
    )
    .expect("valid material")
}

/// Periodic box of compressed, stressed fluid in a quiescent column.
pub fn riemann_field(cells: usize, tau0: f64) -> Field1D {
    let grid = Grid1D::new(0.0, 1.0, cells).expect("valid grid");
    Field1D::from_primitives(grid, material(tau0, 0.7), BoundaryCondition::Periodic, |x| {
        if (0.4..0.6).contains(&x) {
            State1D::new(0.0, 1.2, 0.5)
        } else {
            State1D::rest()
        }
    })
    .expect("admissible initial state")
}
