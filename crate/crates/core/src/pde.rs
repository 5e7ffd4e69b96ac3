//! Finite-volume solver for the full balance-law system in Lagrangian
//! coordinates.
//!
//! Conserved variables are `w = (ρ*·v, F, Z(σ))` with flux
//! `f(w) = (p(F) - σ, -v, -v)` and source `(ρ*·b, 0, P(F, σ))`. Interfaces
//! use the Rusanov flux, time integration is two-stage SSP Runge–Kutta.
//! In IMEX mode each stage advances the flux explicitly and then solves the
//! production term implicitly, cell by cell, for σ.

use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use rayon::prelude::*;

use crate::constitutive::{check_deformation, Material};
use crate::error::{domain, Error, Result};
use crate::format::fmt_f64;
use crate::roots;

/// Cells per rayon task; smaller grids run on one thread.
const PAR_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return domain(format!("grid needs x_max > x_min, got [{x_min}, {x_max}]"));
        }
        if n_cells < 2 {
            return domain(format!("grid needs at least 2 cells, got {n_cells}"));
        }
        Ok(Self { x_min, x_max, n_cells })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.center(i))
    }
}

/// `(ρ*·v, F, Z(σ))`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Conserved {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Conserved {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Self {
        Self { w1, w2, w3 }
    }

    pub fn abs_sum(&self) -> f64 {
        self.w1.abs() + self.w2.abs() + self.w3.abs()
    }
}

impl Add for Conserved {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.w1 + o.w1, self.w2 + o.w2, self.w3 + o.w3)
    }
}

impl Sub for Conserved {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.w1 - o.w1, self.w2 - o.w2, self.w3 - o.w3)
    }
}

impl Mul<Conserved> for f64 {
    type Output = Conserved;
    fn mul(self, c: Conserved) -> Conserved {
        Conserved::new(self * c.w1, self * c.w2, self * c.w3)
    }
}

/// Primitive state `(v, F, σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State1D {
    pub v: f64,
    pub f: f64,
    pub sigma: f64,
}

impl State1D {
    pub fn new(v: f64, f: f64, sigma: f64) -> Self {
        Self { v, f, sigma }
    }

    pub fn rest() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    pub fn to_conserved(&self, material: &Material) -> Conserved {
        Conserved::new(material.rho_star * self.v, self.f, material.z(self.sigma))
    }
}

pub fn primitives(c: &Conserved, material: &Material) -> Result<State1D> {
    check_deformation(c.w2)?;
    Ok(State1D::new(c.w1 / material.rho_star, c.w2, material.invert_z(c.w3)?))
}

pub fn physical_flux(s: &State1D, material: &Material) -> Result<Conserved> {
    let p = material.pressure(s.f)?;
    Ok(Conserved::new(p - s.sigma, -s.v, -s.v))
}

/// Sound speed `c = sqrt((-p'(F) + 1/τ(σ))/ρ*)` of the acoustic pair.
pub fn sound_speed(s: &State1D, material: &Material) -> Result<f64> {
    let stiffness = -material.dpressure_df(s.f)?;
    let tau = material.tau(s.sigma)?;
    let radicand = (stiffness + 1.0 / tau) / material.rho_star;
    if !(radicand > 0.0 && radicand.is_finite()) {
        return domain(format!("characteristic speeds are not real: c^2 = {radicand}"));
    }
    Ok(radicand.sqrt())
}

/// Characteristic speeds `(-c, 0, c)`.
pub fn char_speeds(s: &State1D, material: &Material) -> Result<[f64; 3]> {
    let c = sound_speed(s, material)?;
    Ok([-c, 0.0, c])
}

pub fn rusanov_flux(left: &State1D, right: &State1D, material: &Material) -> Result<Conserved> {
    let fl = physical_flux(left, material)?;
    let fr = physical_flux(right, material)?;
    let s_max = sound_speed(left, material)?.max(sound_speed(right, material)?);
    let wl = left.to_conserved(material);
    let wr = right.to_conserved(material);
    Ok(0.5 * (fl + fr) - (0.5 * s_max) * (wr - wl))
}

type VelocityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryCondition {
    Periodic,
    /// Zero-gradient ghost cells.
    Transmissive,
    /// Prescribed wall velocities; F and σ are mirrored into the ghost cell.
    Piston {
        left: VelocityFn,
        right: VelocityFn,
    },
}

impl std::fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Periodic => write!(f, "Periodic"),
            Self::Transmissive => write!(f, "Transmissive"),
            Self::Piston { .. } => write!(f, "Piston(..)"),
        }
    }
}

impl BoundaryCondition {
    pub fn piston<L, R>(left: L, right: R) -> Self
    where
        L: Fn(f64) -> f64 + Send + Sync + 'static,
        R: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Piston {
            left: Arc::new(left),
            right: Arc::new(right),
        }
    }

    pub fn constant_piston(v_left: f64, v_right: f64) -> Self {
        Self::piston(move |_| v_left, move |_| v_right)
    }

    fn ghosts(&self, t: f64, states: &[State1D]) -> Result<(State1D, State1D)> {
        let n = states.len();
        let (first, last) = (states[0], states[n - 1]);
        match self {
            Self::Periodic => Ok((last, first)),
            Self::Transmissive => Ok((first, last)),
            Self::Piston { left, right } => {
                let (vl, vr) = (left(t), right(t));
                if !(vl.is_finite() && vr.is_finite()) {
                    return domain(format!("piston velocities must be finite at t = {t}"));
                }
                Ok((
                    State1D::new(2.0 * vl - first.v, first.f, first.sigma),
                    State1D::new(2.0 * vr - last.v, last.f, last.sigma),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Explicit,
    Imex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    /// Largest sound speed at the start of the step.
    pub c_max: f64,
}

#[derive(Debug, Clone)]
pub struct Field1D {
    pub grid: Grid1D,
    pub cells: Vec<Conserved>,
    pub time: f64,
    pub material: Material,
    pub bc: BoundaryCondition,
}

impl Field1D {
    pub fn from_primitives<I>(grid: Grid1D, material: Material, bc: BoundaryCondition, initial: I) -> Result<Self>
    where
        I: Fn(f64) -> State1D,
    {
        let cells = grid
            .centers()
            .map(|x| {
                let s = initial(x);
                check_deformation(s.f)?;
                Ok(s.to_conserved(&material))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            cells,
            time: 0.0,
            material,
            bc,
        })
    }

    pub fn states(&self) -> Result<Vec<State1D>> {
        to_states(&self.cells, &self.material)
    }

    pub fn max_speed(&self) -> Result<f64> {
        let states = self.states()?;
        max_speed(&states, &self.material)
    }

    /// `(Σ w1, Σ w2, Σ w3)·ΔX`, summed in index order.
    pub fn totals(&self) -> Conserved {
        let dx = self.grid.dx();
        let mut acc = Conserved::default();
        for c in &self.cells {
            acc = acc + *c;
        }
        dx * acc
    }

    /// Advances one step of size `cfl·ΔX/c_max`.
    pub fn step(&mut self, cfl: f64, mode: StepMode) -> Result<StepInfo> {
        self.step_capped(cfl, mode, f64::INFINITY)
    }

    /// As [`step`](Self::step) but never past `dt_max`.
    pub fn step_capped(&mut self, cfl: f64, mode: StepMode, dt_max: f64) -> Result<StepInfo> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return domain(format!("CFL number must lie in (0, 1], got {cfl}"));
        }
        let states = self.states()?;
        let c_max = max_speed(&states, &self.material)?;
        let dt = (cfl * self.grid.dx() / c_max).min(dt_max);
        if !(dt > 0.0) {
            return domain(format!("nonpositive time step {dt}"));
        }

        let t = self.time;
        let stage1 = self.stage(&self.cells, &states, t, dt, mode)?;
        let states1 = to_states(&stage1, &self.material)?;
        let stage2 = self.stage(&stage1, &states1, t + dt, dt, mode)?;
        self.cells
            .iter_mut()
            .zip(&stage2)
            .for_each(|(w, w2)| *w = 0.5 * *w + 0.5 * *w2);
        self.time = t + dt;
        Ok(StepInfo { dt, c_max })
    }

    /// One forward-Euler flux stage followed by the source update.
    fn stage(
        &self,
        cells: &[Conserved],
        states: &[State1D],
        t: f64,
        dt: f64,
        mode: StepMode,
    ) -> Result<Vec<Conserved>> {
        let n = cells.len();
        let material = &self.material;
        let (ghost_l, ghost_r) = self.bc.ghosts(t, states)?;
        let at = |j: usize| -> &State1D {
            // j indexes the extended array: 0 is the left ghost
            if j == 0 {
                &ghost_l
            } else if j == n + 1 {
                &ghost_r
            } else {
                &states[j - 1]
            }
        };
        let fluxes: Vec<Result<Conserved>> = (0..n + 1)
            .into_par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|j| rusanov_flux(at(j), at(j + 1), material))
            .collect();
        let fluxes = fluxes.into_iter().collect::<Result<Vec<_>>>()?;

        let lambda = dt / self.grid.dx();
        let momentum_source = dt * material.rho_star * material.body_force;
        let updated: Vec<Result<Conserved>> = (0..n)
            .into_par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|i| {
                let mut w = cells[i] - (lambda * (fluxes[i + 1] - fluxes[i]));
                w.w1 += momentum_source;
                check_deformation(w.w2).map_err(|e| Error::SourceSolve {
                    cell: i,
                    reason: e.to_string(),
                })?;
                match mode {
                    StepMode::Explicit => {
                        w.w3 += dt * material.production(states[i].f, states[i].sigma)?;
                    }
                    StepMode::Imex => {
                        w.w3 = implicit_source(w.w2, w.w3, dt, material).map_err(|e| Error::SourceSolve {
                            cell: i,
                            reason: e.to_string(),
                        })?;
                    }
                }
                Ok(w)
            })
            .collect();
        updated.into_iter().collect()
    }

    /// Cell-center table: `X_center,v,F,sigma,Z,p,energy_density`.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::from("X_center,v,F,sigma,Z,p,energy_density\n");
        let rho = self.material.rho_star;
        for (i, c) in self.cells.iter().enumerate() {
            let s = primitives(c, &self.material)?;
            let p = self.material.pressure(s.f)?;
            let e = rho
                * (0.5 * s.v * s.v
                    + self.material.elastic.relative_elastic_energy(s.f, rho)?
                    + self.material.viscous.energy(s.sigma, rho));
            let row = [self.grid.center(i), s.v, s.f, s.sigma, c.w3, p, e];
            let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        Ok(out)
    }
}

fn to_states(cells: &[Conserved], material: &Material) -> Result<Vec<State1D>> {
    let states: Vec<Result<State1D>> = cells
        .par_iter()
        .with_min_len(PAR_CHUNK)
        .map(|c| primitives(c, material))
        .collect();
    states.into_iter().collect()
}

fn max_speed(states: &[State1D], material: &Material) -> Result<f64> {
    let mut c_max = 0.0f64;
    for s in states {
        c_max = c_max.max(sound_speed(s, material)?);
    }
    Ok(c_max)
}

/// Solves `Z(σ) = z_star + dt·P(F, σ)` for σ and returns the new Z.
///
/// The production term drives σ toward zero, so the root lies between 0
/// and the stress without production.
fn implicit_source(f: f64, z_star: f64, dt: f64, material: &Material) -> Result<f64> {
    let free = material.invert_z(z_star)?;
    if free == 0.0 {
        return Ok(0.0);
    }
    // Measuring from Z(free) rather than z_star keeps the bracket signs
    // exact when the production is below the round-off of Z.
    let z_free = material.z(free);
    let fluid = &material.fluid;
    let residual = |s: f64| {
        let val = material.z(s) - z_free - dt * fluid.production(f, s).unwrap_or(f64::NAN);
        let slope = material.tau(s).unwrap_or(f64::NAN) - dt * fluid.production_dsigma(f, s);
        (val, slope)
    };
    let ftol = 1e-15 * z_star.abs();
    let sigma = roots::monotone_root(0.0f64.min(free), 0.0f64.max(free), 1e-16 * free.abs(), ftol, residual)?;
    Ok(material.z(sigma))
}

/// Receives the field after initialization and after every step.
pub trait Observer {
    fn observe(&mut self, field: &Field1D, step: Option<&StepInfo>) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub c_max: f64,
}

/// Advances `field` to `t_end`, shortening the last step to land on it.
pub fn run(
    field: &mut Field1D,
    t_end: f64,
    cfl: f64,
    mode: StepMode,
    observers: &mut [&mut dyn Observer],
) -> Result<RunSummary> {
    if !(t_end >= field.time) {
        return domain(format!("t_end = {t_end} precedes the field time {}", field.time));
    }
    for o in observers.iter_mut() {
        o.observe(field, None)?;
    }
    let mut summary = RunSummary { steps: 0, c_max: 0.0 };
    while field.time < t_end {
        let remaining = t_end - field.time;
        let info = field.step_capped(cfl, mode, remaining)?;
        if (t_end - field.time).abs() <= 1e-14 * t_end.abs().max(1.0) {
            field.time = t_end;
        }
        summary.steps += 1;
        summary.c_max = summary.c_max.max(info.c_max);
        for o in observers.iter_mut() {
            o.observe(field, Some(&info))?;
        }
    }
    Ok(summary)
}

/// Snapshots of the field at (approximately) uniform time intervals.
#[derive(Debug, Clone)]
pub struct ProfileObserver {
    pub interval: f64,
    next: f64,
    pub snapshots: Vec<(f64, Vec<Conserved>)>,
}

impl ProfileObserver {
    pub fn new(interval: f64) -> Self {
        Self {
            interval,
            next: 0.0,
            snapshots: Vec::new(),
        }
    }
}

impl Observer for ProfileObserver {
    fn observe(&mut self, field: &Field1D, _step: Option<&StepInfo>) -> Result<()> {
        if field.time >= self.next {
            self.snapshots.push((field.time, field.cells.clone()));
            self.next = field.time + self.interval;
        }
        Ok(())
    }
}

/// One wavefront measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontSample {
    pub time: f64,
    /// Largest sound speed seen so far.
    pub c_max: f64,
    /// Outer half-maximum position of the disturbance on each side, if any.
    pub left: Option<f64>,
    pub right: Option<f64>,
    pub cone_left: f64,
    pub cone_right: f64,
}

/// Locates the outermost wavefronts leaving an initially disturbed region.
///
/// The disturbance is `Σ|w - w(0)|` per cell. On each side of the initial
/// support the front is where the disturbance, interpolated linearly
/// between cell centers, last falls through half of its maximum on that
/// side; a smeared discontinuity is centered on that level.
#[derive(Debug, Clone)]
pub struct WavefrontTracker {
    initial: Vec<Conserved>,
    support: (f64, f64),
    c_max: f64,
    t0: f64,
    pub samples: Vec<FrontSample>,
}

impl WavefrontTracker {
    pub fn new(initial: &Field1D, support: (f64, f64)) -> Self {
        Self {
            initial: initial.cells.clone(),
            support,
            c_max: 0.0,
            t0: initial.time,
            samples: Vec::new(),
        }
    }

    /// Largest excursion beyond the cone, in units of ΔX (≤ 0 means inside).
    pub fn worst_excess(&self, dx: f64) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| {
                let l = s.left.map(|x| (s.cone_left - x) / dx);
                let r = s.right.map(|x| (x - s.cone_right) / dx);
                [l, r].into_iter().flatten()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `cells` lists indices moving away from the support; `step` is the
/// signed spacing in that direction.
fn half_level_crossing(dist: &[f64], centers: &[f64], cells: &[usize], step: f64) -> Option<f64> {
    let peak = cells.iter().map(|&i| dist[i]).fold(0.0f64, f64::max);
    if peak <= f64::MIN_POSITIVE {
        return None;
    }
    let half = 0.5 * peak;
    let last = cells.iter().rposition(|&i| dist[i] >= half)?;
    let inner = cells[last];
    match cells.get(last + 1) {
        Some(&outer) => {
            let frac = (dist[inner] - half) / (dist[inner] - dist[outer]);
            Some(centers[inner] + frac * step)
        }
        None => Some(centers[inner] + 0.5 * step),
    }
}

impl Observer for WavefrontTracker {
    fn observe(&mut self, field: &Field1D, step: Option<&StepInfo>) -> Result<()> {
        if let Some(info) = step {
            self.c_max = self.c_max.max(info.c_max);
        } else {
            self.c_max = self.c_max.max(field.max_speed()?);
        }
        let dx = field.grid.dx();
        let dist: Vec<f64> = field
            .cells
            .iter()
            .zip(&self.initial)
            .map(|(w, w0)| (*w - *w0).abs_sum())
            .collect();
        let (lo, hi) = self.support;
        let centers: Vec<f64> = field.grid.centers().collect();
        let right_idx: Vec<usize> = (0..dist.len()).filter(|&i| centers[i] > hi).collect();
        let left_idx: Vec<usize> = (0..dist.len()).rev().filter(|&i| centers[i] < lo).collect();
        let right = half_level_crossing(&dist, &centers, &right_idx, dx);
        let left = half_level_crossing(&dist, &centers, &left_idx, -dx);
        let elapsed = field.time - self.t0;
        self.samples.push(FrontSample {
            time: field.time,
            c_max: self.c_max,
            left,
            right,
            cone_left: lo - self.c_max * elapsed,
            cone_right: hi + self.c_max * elapsed,
        });
        Ok(())
    }
}
