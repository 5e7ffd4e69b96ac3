//! Energy bookkeeping and convergence measurement.
//!
//! Smooth solutions satisfy
//! `(ρ*v²/2 + ρ*e^(E) + ρ*e^(V))_t + ((p - σ)v)_X = σ·P(F, σ) ≤ 0`.
//! Elastic energy is measured from F = 1 with the reference tangent
//! removed, so every component of a report is nonnegative for the
//! bundled laws.

use std::fmt::Write as _;

use crate::constitutive::Material;
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::ode::Trajectory;
use crate::pde::{primitives, Field1D, Observer, StepInfo};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyReport {
    pub time: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub viscous: f64,
    pub total: f64,
    /// `∫ 𝓔 dt` since the first report; filled by [`energy_budget`].
    pub diss_integral: f64,
    /// `E(t) - E(t0) - ∫ (𝓔 + external power) dt`; filled by [`energy_budget`].
    pub residual: f64,
}

impl EnergyReport {
    fn new(time: f64, kinetic: f64, elastic: f64, viscous: f64) -> Self {
        Self {
            time,
            kinetic,
            elastic,
            viscous,
            total: kinetic + elastic + viscous,
            diss_integral: 0.0,
            residual: 0.0,
        }
    }
}

pub fn total_energy(field: &Field1D) -> Result<EnergyReport> {
    let rho = field.material.rho_star;
    let dx = field.grid.dx();
    let (mut kinetic, mut elastic, mut viscous) = (0.0, 0.0, 0.0);
    for c in &field.cells {
        let s = primitives(c, &field.material)?;
        kinetic += 0.5 * rho * s.v * s.v;
        elastic += rho * field.material.elastic.relative_elastic_energy(s.f, rho)?;
        viscous += rho * field.material.viscous.energy(s.sigma, rho);
    }
    Ok(EnergyReport::new(field.time, kinetic * dx, elastic * dx, viscous * dx))
}

/// `Σ σ·P(F, σ)·ΔX`, never positive.
pub fn total_dissipation(field: &Field1D) -> Result<f64> {
    let mut acc = 0.0;
    for c in &field.cells {
        let s = primitives(c, &field.material)?;
        acc += field.material.dissipation_rate(s.f, s.sigma)?;
    }
    Ok(acc * field.grid.dx())
}

/// Energy per unit reference volume of a spatially uniform state at rest.
pub fn homogeneous_energy(material: &Material, time: f64, sigma: f64, f: f64) -> Result<EnergyReport> {
    let rho = material.rho_star;
    Ok(EnergyReport::new(
        time,
        0.0,
        rho * material.elastic.relative_elastic_energy(f, rho)?,
        rho * material.viscous.energy(sigma, rho),
    ))
}

/// Energy history, dissipation and stress power `(σ - p_rel)·F·v_x` of a
/// homogeneous trajectory under the Eulerian rate `rate(t)`, evaluated on
/// the dense output at `times`.
pub fn homogeneous_history<R: Fn(f64) -> f64>(
    material: &Material,
    traj: &Trajectory,
    rate: R,
    times: &[f64],
) -> Result<(Vec<EnergyReport>, Vec<f64>, Vec<f64>)> {
    let p_ref = material.pressure(1.0)?;
    let mut reports = Vec::with_capacity(times.len());
    let mut diss = Vec::with_capacity(times.len());
    let mut power = Vec::with_capacity(times.len());
    for &t in times {
        let (s, f) = (traj.sigma_at(t), traj.f_at(t));
        reports.push(homogeneous_energy(material, t, s, f)?);
        diss.push(material.dissipation_rate(f, s)?);
        let p = material.pressure(f)?;
        power.push((s - (p - p_ref)) * rate(t) * f);
    }
    Ok((reports, diss, power))
}

/// Fills `diss_integral` and `residual` by trapezoidal quadrature and
/// returns the residual series.
///
/// `external_power` accounts for work done through the boundaries or by an
/// imposed deformation; `None` means a closed system.
pub fn energy_budget(
    history: &mut [EnergyReport],
    dissipation: &[f64],
    external_power: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if history.len() != dissipation.len() {
        return Err(Error::Domain(format!(
            "{} energy reports but {} dissipation samples",
            history.len(),
            dissipation.len()
        )));
    }
    if let Some(p) = external_power {
        if p.len() != history.len() {
            return Err(Error::Domain("external power series has the wrong length".into()));
        }
    }
    let Some(first) = history.first().copied() else {
        return Ok(Vec::new());
    };
    let rate = |i: usize| dissipation[i] + external_power.map_or(0.0, |p| p[i]);
    let mut diss_integral = 0.0;
    let mut supplied = 0.0;
    let mut residuals = Vec::with_capacity(history.len());
    for i in 0..history.len() {
        if i > 0 {
            let dt = history[i].time - history[i - 1].time;
            diss_integral += 0.5 * dt * (dissipation[i] + dissipation[i - 1]);
            supplied += 0.5 * dt * (rate(i) + rate(i - 1));
        }
        let r = history[i].total - first.total - supplied;
        history[i].diss_integral = diss_integral;
        history[i].residual = r;
        residuals.push(r);
    }
    Ok(residuals)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderEstimate {
    Orders(f64, f64),
    /// At least one error sits at round-off level.
    Saturated,
}

/// `(log2(e_coarse/e_mid), log2(e_mid/e_fine))` for errors at ΔX, ΔX/2, ΔX/4.
pub fn observed_order(coarse: f64, mid: f64, fine: f64) -> Result<OrderEstimate> {
    if !(coarse > 0.0 && mid > 0.0 && fine > 0.0) {
        return Err(Error::Domain("errors must be positive".into()));
    }
    if coarse.min(mid).min(fine) < 1e-13 {
        return Ok(OrderEstimate::Saturated);
    }
    Ok(OrderEstimate::Orders((coarse / mid).log2(), (mid / fine).log2()))
}

/// Records energy and dissipation at a fixed interval (every step when 0).
#[derive(Debug, Clone, Default)]
pub struct EnergyObserver {
    pub interval: f64,
    next: f64,
    pub reports: Vec<EnergyReport>,
    pub dissipation: Vec<f64>,
}

impl EnergyObserver {
    pub fn new(interval: f64) -> Self {
        Self {
            interval,
            ..Self::default()
        }
    }

    /// Runs [`energy_budget`] over the recorded samples.
    pub fn budget(&mut self) -> Result<Vec<f64>> {
        energy_budget(&mut self.reports, &self.dissipation, None)
    }
}

impl Observer for EnergyObserver {
    fn observe(&mut self, field: &Field1D, _step: Option<&StepInfo>) -> Result<()> {
        if self.reports.is_empty() || field.time >= self.next {
            self.reports.push(total_energy(field)?);
            self.dissipation.push(total_dissipation(field)?);
            self.next = field.time + self.interval;
        }
        Ok(())
    }
}

/// `time,kinetic,elastic,viscous,total,diss_integral,residual`.
pub fn reports_to_csv(reports: &[EnergyReport]) -> String {
    let mut out = String::from("time,kinetic,elastic,viscous,total,diss_integral,residual\n");
    for r in reports {
        let row = [
            r.time,
            r.kinetic,
            r.elastic,
            r.viscous,
            r.total,
            r.diss_integral,
            r.residual,
        ];
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}
