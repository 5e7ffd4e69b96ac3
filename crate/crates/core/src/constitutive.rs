//! Pointwise constitutive functions: the power law and its inverse, the
//! production term, viscous and elastic energies, and the relaxation
//! function τ(σ) with its primitive Z(σ).
//!
//! Signed powers are always evaluated as `sign(σ)·|σ|^(1/m)`. The
//! equivalent form `|σ|^((1-m)/m)·σ` is `0·∞` at σ = 0 when m > 1.

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::quad;
use crate::roots;

/// `sign(x)·|x|^p`, continuous at zero for every p > 0.
#[inline]
pub fn signed_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(p)
    }
}

/// Coefficient `2^(1/m - 1) · k^(-1/m)` of the inverted power law.
pub fn a_coeff(m: f64, k: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return domain(format!("flow index m must be positive, got {m}"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return domain(format!("consistency k must be positive, got {k}"));
    }
    let inv_m = 1.0 / m;
    let a = 2f64.powf(inv_m - 1.0) * k.powf(-inv_m);
    if !(a.is_finite() && a > 0.0) {
        return domain(format!("a(m = {m}, k = {k}) = {a} is not a positive finite number"));
    }
    Ok(a)
}

/// Consistency used for the illustrative relaxation curves: `k = 10·e^(-2m)`.
pub fn conventional_consistency(m: f64) -> f64 {
    10.0 * (-2.0 * m).exp()
}

/// Power-law fluid `σ = k·γ̇^(m-1)·D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFluid {
    k: f64,
    m: f64,
    a: f64,
}

impl PowerLawFluid {
    pub fn new(k: f64, m: f64) -> Result<Self> {
        let a = a_coeff(m, k)?;
        Ok(Self { k, m, a })
    }

    /// Fluid with `k = 10·e^(-2m)`.
    pub fn conventional(m: f64) -> Result<Self> {
        Self::new(conventional_consistency(m), m)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn a_coeff(&self) -> f64 {
        self.a
    }

    /// One-dimensional velocity gradient sustained by the stress σ.
    pub fn rate_from_stress(&self, sigma: f64) -> f64 {
        self.a * signed_pow(sigma, 1.0 / self.m)
    }

    /// Inverse of [`rate_from_stress`](Self::rate_from_stress).
    pub fn stress_from_rate(&self, vx: f64) -> f64 {
        signed_pow(vx / self.a, self.m)
    }

    /// Production term `P(F, σ) = -F·a·sign(σ)|σ|^(1/m)`.
    pub fn production(&self, f: f64, sigma: f64) -> Result<f64> {
        check_deformation(f)?;
        Ok(-f * self.rate_from_stress(sigma))
    }

    /// `∂P/∂σ`; infinite at σ = 0 when m > 1.
    pub fn production_dsigma(&self, f: f64, sigma: f64) -> f64 {
        let p = 1.0 / self.m;
        if sigma == 0.0 {
            return if self.m > 1.0 {
                f64::NEG_INFINITY
            } else if self.m == 1.0 {
                -f * self.a
            } else {
                0.0
            };
        }
        -f * self.a * p * sigma.abs().powf(p - 1.0)
    }

    /// Dissipated power density `σ·P(F, σ) = -F·a·|σ|^(1/m + 1)`.
    pub fn dissipation_rate(&self, f: f64, sigma: f64) -> Result<f64> {
        check_deformation(f)?;
        Ok(-f * self.a * sigma.abs().powf(1.0 / self.m + 1.0))
    }
}

pub(crate) fn check_deformation(f: f64) -> Result<()> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        domain(format!("deformation gradient must be positive, got F = {f}"))
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied convex viscous energy `e_v(σ)`, `e_v(0) = 0`.
#[derive(Clone)]
pub struct CustomViscous {
    energy: ScalarFn,
    derivative: ScalarFn,
    ratio_at_zero: f64,
    ratio_integral: Option<ScalarFn>,
}

impl CustomViscous {
    /// `ratio_at_zero` is the limit of `e_v'(σ)/σ` as σ → 0.
    pub fn new<E, D>(energy: E, derivative: D, ratio_at_zero: f64) -> Self
    where
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            energy: Arc::new(energy),
            derivative: Arc::new(derivative),
            ratio_at_zero,
            ratio_integral: None,
        }
    }

    /// Supplies `∫₀^σ e_v'(s)/s ds` in closed form instead of by quadrature.
    pub fn with_ratio_integral<I>(mut self, integral: I) -> Self
    where
        I: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.ratio_integral = Some(Arc::new(integral));
        self
    }

    fn ratio(&self, sigma: f64) -> f64 {
        if sigma.abs() < 1e-150 {
            self.ratio_at_zero
        } else {
            (self.derivative)(sigma) / sigma
        }
    }
}

impl fmt::Debug for CustomViscous {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomViscous")
            .field("ratio_at_zero", &self.ratio_at_zero)
            .field("closed_form_z", &self.ratio_integral.is_some())
            .finish()
    }
}

/// Viscous energy density e^(V)(σ), which fixes τ(σ) and Z(σ).
#[derive(Debug, Clone)]
pub enum ViscousEnergy {
    /// `e^(V) = τ0·σ²/(2ρ*)`, giving constant τ = τ0.
    Quadratic {
        tau0: f64,
    },
    Custom(CustomViscous),
}

const Z_QUAD_RTOL: f64 = 1e-15;

impl ViscousEnergy {
    pub fn quadratic(tau0: f64) -> Result<Self> {
        if !(tau0 > 0.0 && tau0.is_finite()) {
            return domain(format!("tau0 must be positive, got {tau0}"));
        }
        Ok(Self::Quadratic { tau0 })
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Self::Quadratic { .. })
    }

    /// Specific viscous energy e^(V)(σ) in J/kg.
    pub fn energy(&self, sigma: f64, rho_star: f64) -> f64 {
        match self {
            Self::Quadratic { tau0 } => tau0 * sigma * sigma / (2.0 * rho_star),
            Self::Custom(c) => (c.energy)(sigma),
        }
    }

    /// Relaxation function τ(σ) = ρ*·e^(V)'(σ)/σ.
    pub fn tau(&self, sigma: f64, rho_star: f64) -> Result<f64> {
        let t = self.tau_unchecked(sigma, rho_star);
        if t > 0.0 && t.is_finite() {
            Ok(t)
        } else {
            domain(format!("relaxation function must be positive, got tau({sigma}) = {t}"))
        }
    }

    fn tau_unchecked(&self, sigma: f64, rho_star: f64) -> f64 {
        match self {
            Self::Quadratic { tau0 } => *tau0,
            Self::Custom(c) => rho_star * c.ratio(sigma),
        }
    }

    /// Conserved stress variable `Z(σ) = ∫₀^σ τ(s) ds`.
    pub fn z(&self, sigma: f64, rho_star: f64) -> f64 {
        match self {
            Self::Quadratic { tau0 } => tau0 * sigma,
            Self::Custom(c) => match &c.ratio_integral {
                Some(i) => rho_star * i(sigma),
                None => rho_star * quad::integrate(|s| c.ratio(s), 0.0, sigma, Z_QUAD_RTOL),
            },
        }
    }

    /// Inverse of [`z`](Self::z), exact to `1e-12·max(1, |z|)` in Z.
    pub fn invert_z(&self, z: f64, rho_star: f64) -> Result<f64> {
        if z == 0.0 {
            return Ok(0.0);
        }
        match self {
            Self::Quadratic { tau0 } => Ok(z / tau0),
            Self::Custom(_) => {
                let tau0 = self.tau(0.0, rho_star)?;
                let residual = |s: f64| self.z(s, rho_star) - z;
                let (lo, hi) = roots::expand_bracket(residual, z / tau0)?;
                let ftol = 1e-13 * z.abs().max(1.0);
                roots::monotone_root(lo, hi, 1e-16, ftol, |s| {
                    (self.z(s, rho_star) - z, self.tau_unchecked(s, rho_star))
                })
                .map_err(|e| match e {
                    Error::Convergence { iterations, target } => Error::Convergence { iterations, target },
                    other => Error::Domain(format!("invalid viscous energy: {other}")),
                })
            }
        }
    }
}

/// Elastic law `T(F) = ρ*·e^(E)'(F)`, with `p = -T` for fluids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElasticLaw {
    /// `T = E·(F - 1)`.
    LinearElastic { modulus: f64 },
    /// `p = p0·F^(-γ)`.
    PowerGas { p0: f64, gamma: f64 },
}

impl ElasticLaw {
    pub fn linear(modulus: f64) -> Result<Self> {
        let law = Self::LinearElastic { modulus };
        law.validate()?;
        Ok(law)
    }

    pub fn power_gas(p0: f64, gamma: f64) -> Result<Self> {
        let law = Self::PowerGas { p0, gamma };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::LinearElastic { modulus } if modulus > 0.0 && modulus.is_finite() => Ok(()),
            Self::LinearElastic { modulus } => domain(format!("elastic modulus must be positive, got {modulus}")),
            Self::PowerGas { p0, gamma } => {
                if !(p0 > 0.0 && p0.is_finite()) {
                    return domain(format!("p0 must be positive, got {p0}"));
                }
                if !(gamma >= 1.0 && gamma.is_finite()) {
                    return domain(format!("gamma must be >= 1, got {gamma}"));
                }
                Ok(())
            }
        }
    }

    pub fn pressure(&self, f: f64) -> Result<f64> {
        check_deformation(f)?;
        Ok(match *self {
            Self::LinearElastic { modulus } => -modulus * (f - 1.0),
            Self::PowerGas { p0, gamma } => p0 * f.powf(-gamma),
        })
    }

    pub fn dpressure_df(&self, f: f64) -> Result<f64> {
        check_deformation(f)?;
        Ok(match *self {
            Self::LinearElastic { modulus } => -modulus,
            Self::PowerGas { p0, gamma } => -gamma * p0 * f.powf(-gamma - 1.0),
        })
    }

    /// Specific elastic energy e^(E)(F) in J/kg.
    pub fn elastic_energy(&self, f: f64, rho_star: f64) -> Result<f64> {
        check_deformation(f)?;
        Ok(match *self {
            Self::LinearElastic { modulus } => modulus * (f - 1.0).powi(2) / (2.0 * rho_star),
            Self::PowerGas { p0, gamma } => {
                if gamma == 1.0 {
                    -(p0 / rho_star) * f.ln()
                } else {
                    p0 * f.powf(1.0 - gamma) / (rho_star * (gamma - 1.0))
                }
            }
        })
    }

    /// Elastic energy measured from the reference state F = 1, with the
    /// tangent at F = 1 removed so the result is nonnegative by convexity.
    pub fn relative_elastic_energy(&self, f: f64, rho_star: f64) -> Result<f64> {
        let e = self.elastic_energy(f, rho_star)?;
        let e_ref = self.elastic_energy(1.0, rho_star)?;
        let p_ref = self.pressure(1.0)?;
        Ok(e - e_ref + p_ref * (f - 1.0) / rho_star)
    }
}

/// All material data of the model.
#[derive(Debug, Clone)]
pub struct Material {
    pub rho_star: f64,
    pub elastic: ElasticLaw,
    pub viscous: ViscousEnergy,
    pub fluid: PowerLawFluid,
    pub body_force: f64,
}

impl Material {
    pub fn new(rho_star: f64, elastic: ElasticLaw, viscous: ViscousEnergy, fluid: PowerLawFluid) -> Result<Self> {
        if !(rho_star > 0.0 && rho_star.is_finite()) {
            return domain(format!("reference density must be positive, got {rho_star}"));
        }
        elastic.validate()?;
        viscous.tau(0.0, rho_star)?;
        Ok(Self {
            rho_star,
            elastic,
            viscous,
            fluid,
            body_force: 0.0,
        })
    }

    pub fn with_body_force(mut self, b: f64) -> Self {
        self.body_force = b;
        self
    }

    pub fn tau(&self, sigma: f64) -> Result<f64> {
        self.viscous.tau(sigma, self.rho_star)
    }

    pub fn z(&self, sigma: f64) -> f64 {
        self.viscous.z(sigma, self.rho_star)
    }

    pub fn invert_z(&self, z: f64) -> Result<f64> {
        self.viscous.invert_z(z, self.rho_star)
    }

    pub fn pressure(&self, f: f64) -> Result<f64> {
        self.elastic.pressure(f)
    }

    pub fn dpressure_df(&self, f: f64) -> Result<f64> {
        self.elastic.dpressure_df(f)
    }

    pub fn production(&self, f: f64, sigma: f64) -> Result<f64> {
        self.fluid.production(f, sigma)
    }

    pub fn dissipation_rate(&self, f: f64, sigma: f64) -> Result<f64> {
        self.fluid.dissipation_rate(f, sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fluid(k: f64, m: f64) -> PowerLawFluid {
        PowerLawFluid::new(k, m).unwrap()
    }

    #[test]
    fn a_coeff_values() {
        assert_eq!(a_coeff(1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(
            a_coeff(0.7, 10.0 * (-1.4f64).exp()).unwrap(),
            0.370_706_661_725_135_6,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            a_coeff(2.0, 10.0 * (-4.0f64).exp()).unwrap(),
            1.652_243_172_676_834_6,
            epsilon = 1e-14
        );
    }

    #[test]
    fn a_coeff_rejects_nonpositive() {
        assert!(a_coeff(0.0, 1.0).is_err());
        assert!(a_coeff(1.0, -1.0).is_err());
        assert!(a_coeff(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn rate_from_stress_examples() {
        assert_eq!(fluid(1.0, 2.0).rate_from_stress(0.0), 0.0);
        assert_relative_eq!(fluid(2.0, 1.0).rate_from_stress(4.0), 2.0, epsilon = 1e-15);
        assert_relative_eq!(fluid(1.0, 0.5).rate_from_stress(2.0), 8.0, epsilon = 1e-14);
    }

    #[test]
    fn forward_law_round_trip_at_d8() {
        // σ = k·γ̇^(m-1)·D with γ̇ = 2|D|
        let (k, m, d) = (1.0f64, 0.5f64, 8.0f64);
        let sigma = k * (2.0 * d).powf(m - 1.0) * d;
        assert_relative_eq!(sigma, 2.0, epsilon = 1e-15);
        assert_relative_eq!(fluid(k, m).rate_from_stress(sigma), d, epsilon = 1e-14);
    }

    #[test]
    fn stress_from_rate_examples() {
        assert_eq!(fluid(1.0, 3.0).stress_from_rate(0.0), 0.0);
        assert_relative_eq!(fluid(2.0, 1.0).stress_from_rate(2.0), 4.0, epsilon = 1e-15);
        assert_relative_eq!(fluid(1.0, 0.5).stress_from_rate(8.0), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn production_examples() {
        let f = fluid(1.0, 1.0);
        assert_eq!(fluid(1.0, 2.5).production(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(f.production(1.0, 1.0).unwrap(), -1.0);
        let f07 = PowerLawFluid::conventional(0.7).unwrap();
        assert_relative_eq!(
            f07.production(2.0, -1.0).unwrap(),
            2.0 * 0.370_706_661_725_135_6,
            epsilon = 1e-14
        );
        assert!(f.production(0.0, 1.0).is_err());
        assert!(f.production(-1.0, 1.0).is_err());
    }

    #[test]
    fn dissipation_examples() {
        assert_eq!(fluid(1.0, 0.3).dissipation_rate(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(fluid(1.0, 1.0).dissipation_rate(1.0, 1.0).unwrap(), -1.0);
        assert_relative_eq!(
            fluid(1.0, 0.5).dissipation_rate(1.0, 2.0).unwrap(),
            -16.0,
            epsilon = 1e-13
        );
        assert!(fluid(1.0, 1.0).dissipation_rate(0.0, 1.0).is_err());
    }

    #[test]
    fn production_derivative_singular_at_zero_for_thickening() {
        assert_eq!(fluid(1.0, 2.0).production_dsigma(1.0, 0.0), f64::NEG_INFINITY);
        assert_eq!(fluid(1.0, 0.5).production_dsigma(1.0, 0.0), 0.0);
        let f = fluid(1.3, 0.7);
        let (s, h) = (0.8, 1e-6);
        let fd = (f.production(1.5, s + h).unwrap() - f.production(1.5, s - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(f.production_dsigma(1.5, s), fd, max_relative = 1e-8);
    }

    fn custom_quadratic(tau0: f64, rho: f64) -> ViscousEnergy {
        ViscousEnergy::Custom(CustomViscous::new(
            move |s| tau0 * s * s / (2.0 * rho),
            move |s| tau0 * s / rho,
            tau0 / rho,
        ))
    }

    #[test]
    fn tau_quadratic() {
        let v = ViscousEnergy::quadratic(0.1).unwrap();
        assert_eq!(v.tau(5.0, 1.0).unwrap(), 0.1);
        assert_eq!(v.tau(0.0, 1.0).unwrap(), 0.1);
        assert!(ViscousEnergy::quadratic(0.0).is_err());
    }

    #[test]
    fn custom_quadratic_matches_quadratic() {
        let rho = 1.7;
        let q = ViscousEnergy::quadratic(0.1).unwrap();
        let c = custom_quadratic(0.1, rho);
        for i in 0..=200 {
            let s = -10.0 + 0.1 * i as f64;
            assert_relative_eq!(q.tau(s, rho).unwrap(), c.tau(s, rho).unwrap(), epsilon = 1e-12);
            assert!((q.z(s, rho) - c.z(s, rho)).abs() <= 1e-12);
            assert!((q.energy(s, rho) - c.energy(s, rho)).abs() <= 1e-12);
            let z = q.z(s, rho);
            assert!((q.invert_z(z, rho).unwrap() - c.invert_z(z, rho).unwrap()).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }

    #[test]
    fn z_quadratic_examples() {
        let v = ViscousEnergy::quadratic(0.1).unwrap();
        assert_relative_eq!(v.z(3.0, 1.0), 0.3, epsilon = 1e-15);
        assert_relative_eq!(v.invert_z(0.3, 1.0).unwrap(), 3.0, epsilon = 1e-14);
        assert_eq!(v.invert_z(0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn invert_z_nonlinear_custom() {
        // τ(σ) = τ0(1 + βσ²)
        let (tau0, beta) = (0.2, 3.0);
        let v = ViscousEnergy::Custom(CustomViscous::new(
            move |s| tau0 * (s * s / 2.0 + beta * s.powi(4) / 4.0),
            move |s| tau0 * (s + beta * s.powi(3)),
            tau0,
        ));
        for &z in &[-1e3, -2.5, -1e-7, 1e-9, 0.4, 17.0, 5e4] {
            let s = v.invert_z(z, 1.0).unwrap();
            assert!((v.z(s, 1.0) - z).abs() <= 1e-12 * z.abs().max(1.0), "z = {z}");
            let exact = tau0 * (s + beta * s.powi(3) / 3.0);
            assert!((v.z(s, 1.0) - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn invalid_custom_energy_is_reported() {
        let v = ViscousEnergy::Custom(CustomViscous::new(|s| -s * s, |s| -2.0 * s, -2.0));
        assert!(v.tau(1.0, 1.0).is_err());
        assert!(v.invert_z(1.0, 1.0).is_err());
    }

    #[test]
    fn pressure_reference_states() {
        let gas = ElasticLaw::power_gas(1.0, 1.0).unwrap();
        assert_eq!(gas.pressure(1.0).unwrap(), 1.0);
        assert_eq!(gas.elastic_energy(1.0, 1.0).unwrap(), 0.0);
        let lin = ElasticLaw::linear(1.0).unwrap();
        assert_eq!(lin.pressure(1.0).unwrap(), 0.0);
        assert_eq!(lin.elastic_energy(1.0, 1.0).unwrap(), 0.0);
        assert!(gas.pressure(0.0).is_err());
        assert!(ElasticLaw::power_gas(1.0, 0.5).is_err());
        assert!(ElasticLaw::linear(0.0).is_err());
    }

    #[test]
    fn dpressure_matches_finite_difference() {
        let laws = [
            ElasticLaw::power_gas(1.0, 1.0).unwrap(),
            ElasticLaw::power_gas(2.0, 1.4).unwrap(),
            ElasticLaw::linear(3.0).unwrap(),
        ];
        for law in laws {
            for f in [0.5, 1.0, 2.0] {
                let h = 1e-5 * f;
                let fd = (law.pressure(f + h).unwrap() - law.pressure(f - h).unwrap()) / (2.0 * h);
                assert_relative_eq!(law.dpressure_df(f).unwrap(), fd, max_relative = 1e-6);
                assert!(-law.dpressure_df(f).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn elastic_energy_derivative_is_minus_pressure() {
        let rho = 2.0;
        for law in [
            ElasticLaw::power_gas(1.5, 1.0).unwrap(),
            ElasticLaw::power_gas(1.0, 1.4).unwrap(),
        ] {
            for f in [0.6, 1.0, 1.8] {
                let h = 1e-6;
                let de =
                    (law.elastic_energy(f + h, rho).unwrap() - law.elastic_energy(f - h, rho).unwrap()) / (2.0 * h);
                assert_relative_eq!(rho * de, -law.pressure(f).unwrap(), max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn relative_elastic_energy_is_nonnegative() {
        for law in [
            ElasticLaw::power_gas(1.0, 1.0).unwrap(),
            ElasticLaw::power_gas(1.0, 1.4).unwrap(),
            ElasticLaw::linear(2.0).unwrap(),
        ] {
            assert_eq!(law.relative_elastic_energy(1.0, 1.0).unwrap(), 0.0);
            for f in [0.1, 0.5, 0.99, 1.01, 2.0, 10.0] {
                assert!(law.relative_elastic_energy(f, 1.0).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn material_validation() {
        let ok = Material::new(
            1.0,
            ElasticLaw::power_gas(1.0, 1.0).unwrap(),
            ViscousEnergy::quadratic(0.1).unwrap(),
            fluid(1.0, 1.0),
        );
        assert!(ok.is_ok());
        let bad = Material::new(
            0.0,
            ElasticLaw::power_gas(1.0, 1.0).unwrap(),
            ViscousEnergy::quadratic(0.1).unwrap(),
            fluid(1.0, 1.0),
        );
        assert!(bad.is_err());
    }
}
