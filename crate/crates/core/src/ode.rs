//! Homogeneous relaxation dynamics under a prescribed shear history.
//!
//! With a spatially uniform Eulerian velocity gradient v_x(t) the balance
//! laws reduce to
//!
//! ```text
//! F'  = v_x·F
//! Z(σ)' = F·v_x + P(F, σ)
//! ```
//!
//! integrated with an adaptive Dormand–Prince 5(4) pair. When the explicit
//! step collapses below a threshold, or keeps hitting the stability limit
//! (the relaxation rate grows like F), the integrator switches to backward
//! Euler on σ. It hands back once h·|J| is small again.

use std::sync::Arc;

use crate::analytic::SteadyShearParams;
use crate::constitutive::{check_deformation, Material};
use crate::error::{domain, Error, Result};
use crate::roots;

type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Prescribed Eulerian velocity gradient v_x(t).
#[derive(Clone)]
pub enum ShearProtocol {
    ZeroRate,
    ConstantRate {
        vx0: f64,
    },
    /// `rates[0]` applies before `breakpoints[0]`, `rates[i]` on
    /// `[breakpoints[i-1], breakpoints[i])`, the last rate afterwards.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        rates: Vec<f64>,
    },
    Custom(RateFn),
}

impl std::fmt::Debug for ShearProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ZeroRate => write!(f, "ZeroRate"),
            Self::ConstantRate { vx0 } => write!(f, "ConstantRate({vx0})"),
            Self::PiecewiseConstant { breakpoints, rates } => {
                write!(f, "PiecewiseConstant({breakpoints:?}, {rates:?})")
            }
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ShearProtocol {
    pub fn piecewise(breakpoints: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != breakpoints.len() + 1 {
            return domain(format!(
                "piecewise protocol needs one more rate than breakpoints ({} rates, {} breakpoints)",
                rates.len(),
                breakpoints.len()
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("piecewise breakpoints must be strictly increasing");
        }
        if rates.iter().chain(&breakpoints).any(|x| !x.is_finite()) {
            return domain("piecewise protocol values must be finite");
        }
        Ok(Self::PiecewiseConstant { breakpoints, rates })
    }

    pub fn custom<R: Fn(f64) -> f64 + Send + Sync + 'static>(rate: R) -> Self {
        Self::Custom(Arc::new(rate))
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Self::ZeroRate => 0.0,
            Self::ConstantRate { vx0 } => *vx0,
            Self::PiecewiseConstant { breakpoints, rates } => rates[breakpoints.partition_point(|&b| b <= t)],
            Self::Custom(r) => r(t),
        }
    }

    /// `∫₀^t v_x`, when available in closed form.
    fn integrated_rate(&self, t: f64) -> Option<f64> {
        match self {
            Self::ZeroRate => Some(0.0),
            Self::ConstantRate { vx0 } => Some(vx0 * t),
            Self::PiecewiseConstant { breakpoints, rates } => {
                let mut acc = 0.0;
                let mut start = 0.0f64;
                for (i, &b) in breakpoints.iter().enumerate() {
                    if b <= start {
                        continue;
                    }
                    let end = b.min(t);
                    if end > start {
                        acc += rates[i] * (end - start);
                    }
                    start = b;
                    if b >= t {
                        return Some(acc);
                    }
                }
                if t > start {
                    acc += rates[breakpoints.len()] * (t - start);
                }
                Some(acc)
            }
            Self::Custom(_) => None,
        }
    }

    fn breakpoints_in(&self, t0: f64, t1: f64) -> Vec<f64> {
        match self {
            Self::PiecewiseConstant { breakpoints, .. } => {
                breakpoints.iter().copied().filter(|&b| b > t0 && b < t1).collect()
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// First trial step; `None` selects one from the initial derivatives.
    pub initial_step: Option<f64>,
    pub t_end: f64,
    /// Backward Euler may take over once the explicit step falls below this
    /// fraction of `t_end`. `None` keeps the explicit pair throughout.
    pub implicit_switch: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 1_000_000,
            initial_step: None,
            t_end: 1.0,
            implicit_switch: Some(1e-7),
        }
    }
}

impl OdeOptions {
    pub fn until(t_end: f64) -> Self {
        Self {
            t_end,
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return domain("tolerances must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return domain(format!("t_end must be finite and nonnegative, got {}", self.t_end));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub implicit_steps: usize,
}

/// Accepted solution nodes with slopes for cubic Hermite dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub sigma: Vec<f64>,
    pub f: Vec<f64>,
    pub dsigma: Vec<f64>,
    pub df: Vec<f64>,
    pub stats: SolverStats,
}

impl Trajectory {
    /// Builds a trajectory from externally computed samples at F = 1.
    pub fn from_samples(times: Vec<f64>, sigma: Vec<f64>, dsigma: Vec<f64>) -> Result<Self> {
        if times.len() != sigma.len() || times.len() != dsigma.len() || times.is_empty() {
            return domain("trajectory samples must be nonempty and of equal length");
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("trajectory times must be strictly increasing");
        }
        let n = times.len();
        Ok(Self {
            times,
            sigma,
            f: vec![1.0; n],
            dsigma,
            df: vec![0.0; n],
            stats: SolverStats::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one node")
    }

    pub fn final_sigma(&self) -> f64 {
        *self.sigma.last().expect("trajectory has at least one node")
    }

    /// Stress at time `t` by cubic Hermite interpolation; clamps outside the range.
    pub fn sigma_at(&self, t: f64) -> f64 {
        self.hermite(t, &self.sigma, &self.dsigma)
    }

    pub fn f_at(&self, t: f64) -> f64 {
        self.hermite(t, &self.f, &self.df)
    }

    fn hermite(&self, t: f64, y: &[f64], dy: &[f64]) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] || n == 1 {
            return y[0];
        }
        if t >= self.times[n - 1] {
            return y[n - 1];
        }
        let i = self.times.partition_point(|&ti| ti <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * y[i] + h10 * h * dy[i] + h01 * y[i + 1] + h11 * h * dy[i + 1]
    }

    /// Samples σ and F on `n + 1` equally spaced times spanning the trajectory.
    pub fn sample_uniform(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let (t0, t1) = (self.t_start(), self.t_end());
        if n == 0 || t1 == t0 {
            return vec![(t0, self.sigma[0], self.f[0])];
        }
        (0..=n)
            .map(|i| {
                let t = if i == n {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / n as f64
                };
                (t, self.sigma_at(t), self.f_at(t))
            })
            .collect()
    }
}

/// Right side of `τ0·σ' = F0·e^(vx0·t)·(vx0 - a·sign(σ)|σ|^(1/m))`.
pub fn rhs_case2(t: f64, sigma: f64, p: &SteadyShearParams) -> f64 {
    p.f0 * (p.vx0 * t).exp() / p.tau0 * (p.vx0 - p.fluid.rate_from_stress(sigma))
}

struct System<'a> {
    material: &'a Material,
    protocol: &'a ShearProtocol,
    f0: f64,
    exact_f: bool,
    quadratic_tau: Option<f64>,
}

impl System<'_> {
    fn f_exact(&self, t: f64) -> f64 {
        self.f0 * self.protocol.integrated_rate(t).unwrap_or(0.0).exp()
    }

    /// The integrated variable is σ itself for constant τ, Z(σ) otherwise.
    fn sigma_of(&self, s: f64) -> Result<f64> {
        match self.quadratic_tau {
            Some(_) => Ok(s),
            None => self.material.invert_z(s),
        }
    }

    fn s_of(&self, sigma: f64) -> f64 {
        match self.quadratic_tau {
            Some(_) => sigma,
            None => self.material.z(sigma),
        }
    }

    /// `(ds/dt, dF/dt)` and the F actually used.
    fn rhs(&self, t: f64, y: [f64; 2]) -> Result<([f64; 2], f64)> {
        let f = if self.exact_f { self.f_exact(t) } else { y[1] };
        check_deformation(f)?;
        let v = self.protocol.rate(t);
        let sigma = self.sigma_of(y[0])?;
        let dz = f * v + self.material.fluid.production(f, sigma)?;
        let ds = match self.quadratic_tau {
            Some(tau0) => dz / tau0,
            None => dz,
        };
        Ok(([ds, v * f], f))
    }

    /// `∂(ds/dt)/∂s`, the local relaxation rate (negative, possibly infinite).
    fn stiffness(&self, t: f64, sigma: f64, f_state: f64) -> f64 {
        let f = if self.exact_f { self.f_exact(t) } else { f_state };
        let tau = self.material.tau(sigma).unwrap_or(f64::NAN);
        self.material.fluid.production_dsigma(f, sigma) / tau
    }

    fn dsigma_dt(&self, ds: f64, sigma: f64) -> Result<f64> {
        match self.quadratic_tau {
            Some(_) => Ok(ds),
            None => Ok(ds / self.material.tau(sigma)?),
        }
    }
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// b5 - b4
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// `h·|J|` above this for more than `STIFF_RUN` consecutive trial steps
/// hands the integration to backward Euler.
const STIFF_PRODUCT: f64 = 2.0;
const STIFF_RUN: usize = 50;
/// Backward Euler hands back to the explicit pair below this `h·|J|`.
const NONSTIFF_PRODUCT: f64 = 0.1;
/// Explicit steps stay inside the real-axis stability interval of the pair.
const STABILITY_LIMIT: f64 = 3.0;

/// Integrates the homogeneous relaxation dynamics from `(σ0, F0)` at t = 0.
pub fn simulate_homogeneous(
    material: &Material,
    protocol: &ShearProtocol,
    sigma0: f64,
    f0: f64,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    check_deformation(f0)?;
    if !sigma0.is_finite() {
        return domain(format!("sigma0 must be finite, got {sigma0}"));
    }
    if let ShearProtocol::PiecewiseConstant { breakpoints, rates } = protocol {
        ShearProtocol::piecewise(breakpoints.clone(), rates.clone())?;
    }
    let quadratic_tau = match material.viscous {
        crate::constitutive::ViscousEnergy::Quadratic { tau0 } => Some(tau0),
        _ => None,
    };
    let sys = System {
        material,
        protocol,
        f0,
        exact_f: protocol.integrated_rate(0.0).is_some(),
        quadratic_tau,
    };
    Integrator::new(&sys, opts).run(sigma0)
}

struct Integrator<'a, 'b> {
    sys: &'a System<'b>,
    opts: &'a OdeOptions,
    stats: SolverStats,
}

impl<'a, 'b> Integrator<'a, 'b> {
    fn new(sys: &'a System<'b>, opts: &'a OdeOptions) -> Self {
        Self {
            sys,
            opts,
            stats: SolverStats::default(),
        }
    }

    fn eval(&mut self, t: f64, y: [f64; 2]) -> Result<([f64; 2], f64)> {
        self.stats.rhs_evals += 1;
        self.sys.rhs(t, y)
    }

    fn weight(&self, a: f64, b: f64) -> f64 {
        self.opts.atol + self.opts.rtol * a.abs().max(b.abs())
    }

    fn run(mut self, sigma0: f64) -> Result<Trajectory> {
        let t_end = self.opts.t_end;
        let mut t = 0.0;
        let mut y = [self.sys.s_of(sigma0), self.sys.f0];
        let (mut k1, _) = self.eval(t, y)?;
        let mut sigma = sigma0;

        let mut traj = Trajectory {
            times: vec![t],
            sigma: vec![sigma],
            f: vec![y[1]],
            dsigma: vec![self.sys.dsigma_dt(k1[0], sigma)?],
            df: vec![k1[1]],
            stats: SolverStats::default(),
        };
        if t_end == 0.0 {
            traj.stats = self.stats;
            return Ok(traj);
        }

        let mut stops = self.sys.protocol.breakpoints_in(0.0, t_end);
        stops.push(t_end);
        let mut next_stop = 0;

        let mut h = match self.opts.initial_step {
            Some(h0) if h0 > 0.0 => h0,
            _ => self.initial_step(t, y, k1)?,
        };
        let switch_below = self.opts.implicit_switch.map(|frac| frac * t_end);
        let mut implicit = false;
        let mut near_boundary = 0usize;

        while t < t_end {
            if self.stats.steps >= self.opts.max_steps {
                return Err(Error::MaxStepsExceeded {
                    max_steps: self.opts.max_steps,
                    t,
                });
            }
            let rate = self.sys.stiffness(t, sigma, y[1]).abs();
            // h·|J| well inside the stability interval: nothing stiff here
            let nonstiff = rate.is_finite() && h * rate < NONSTIFF_PRODUCT;
            if implicit && nonstiff {
                implicit = false;
                near_boundary = 0;
            }
            if !implicit {
                if rate.is_finite() && rate > 0.0 {
                    h = h.min(STABILITY_LIMIT / rate);
                    // steps pinned near the stability boundary mean stiffness
                    if h * rate > STIFF_PRODUCT {
                        near_boundary += 1;
                    } else {
                        near_boundary = 0;
                    }
                }
                let stiff = near_boundary > STIFF_RUN;
                if let Some(threshold) = switch_below {
                    if ((h < threshold && !nonstiff) || stiff) && self.stats.steps > 0 {
                        implicit = true;
                    }
                }
            }
            let stop = stops[next_stop];
            let mut hit_stop = false;
            if t + h >= stop || stop - (t + h) < 1e-12 * stop.abs().max(1.0) {
                h = stop - t;
                hit_stop = true;
            }
            if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::StepFailure { t, h, sigma, f: y[1] });
            }

            let attempt = if implicit {
                self.implicit_step(t, y, sigma, k1, h)
            } else {
                self.explicit_step(t, y, k1, h)
            };
            let (t_new, y_new, k_new, sigma_new, err) = match attempt {
                Ok(v) => v,
                Err(Error::Domain(_)) | Err(Error::Convergence { .. }) => {
                    // e.g. F left its domain during a trial stage
                    self.stats.rejected += 1;
                    h *= MIN_FACTOR;
                    continue;
                }
                Err(e) => return Err(e),
            };

            if err <= 1.0 {
                let accepted_h = h;
                t = if hit_stop { stop } else { t_new };
                y = y_new;
                k1 = k_new;
                sigma = sigma_new;
                self.stats.steps += 1;
                if implicit {
                    self.stats.implicit_steps += 1;
                }
                traj.times.push(t);
                traj.sigma.push(sigma);
                traj.f.push(y[1]);
                traj.dsigma.push(self.sys.dsigma_dt(k1[0], sigma)?);
                traj.df.push(k1[1]);
                if hit_stop && next_stop + 1 < stops.len() {
                    next_stop += 1;
                }
                let factor = if implicit {
                    (SAFETY * err.max(1e-10).powf(-0.5)).clamp(MIN_FACTOR, 2.0)
                } else {
                    (SAFETY * err.max(1e-10).powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                h = accepted_h * factor;
            } else {
                self.stats.rejected += 1;
                let order = if implicit { 0.5 } else { 0.2 };
                h *= (SAFETY * err.powf(-order)).clamp(MIN_FACTOR, 1.0);
            }
        }
        traj.stats = self.stats;
        Ok(traj)
    }

    fn initial_step(&mut self, t: f64, y: [f64; 2], f0: [f64; 2]) -> Result<f64> {
        let span = self.opts.t_end - t;
        let sc0 = self.weight(y[0], y[0]);
        let d0 = (y[0] / sc0).abs();
        let d1 = (f0[0] / sc0).abs();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1 = [y[0] + h0 * f0[0], y[1] + h0 * f0[1]];
        let h1 = match self.eval(t + h0, y1) {
            Ok((f1, _)) => {
                let d2 = ((f1[0] - f0[0]) / sc0).abs() / h0;
                if d1.max(d2) <= 1e-15 {
                    (h0 * 1e-3).max(1e-6)
                } else {
                    (0.01 / d1.max(d2)).powf(0.2)
                }
            }
            Err(_) => h0 * 1e-3,
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    #[allow(clippy::type_complexity)]
    fn explicit_step(
        &mut self,
        t: f64,
        y: [f64; 2],
        k1: [f64; 2],
        h: f64,
    ) -> Result<(f64, [f64; 2], [f64; 2], f64, f64)> {
        let mut k = [[0.0; 2]; 7];
        k[0] = k1;
        for stage in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = A[stage][j];
                if a != 0.0 {
                    ys[0] += h * a * kj[0];
                    ys[1] += h * a * kj[1];
                }
            }
            if stage == 6 {
                let (kk, f_used) = self.eval(t + C[stage] * h, ys)?;
                k[stage] = kk;
                let mut y_new = ys;
                let mut err = [0.0; 2];
                for (j, kj) in k.iter().enumerate() {
                    err[0] += h * E[j] * kj[0];
                    err[1] += h * E[j] * kj[1];
                }
                let t_new = t + h;
                if self.sys.exact_f {
                    y_new[1] = f_used;
                }
                let mut norm = (err[0] / self.weight(y[0], y_new[0])).abs();
                if !self.sys.exact_f {
                    norm = norm.max((err[1] / self.weight(y[1], y_new[1])).abs());
                    if y_new[1] <= 0.0 {
                        return Ok((t_new, y, k1, 0.0, 10.0));
                    }
                }
                let sigma_new = self.sys.sigma_of(y_new[0])?;
                return Ok((t_new, y_new, k[6], sigma_new, norm));
            }
            let (kk, _) = self.eval(t + C[stage] * h, ys)?;
            k[stage] = kk;
        }
        unreachable!("Dormand–Prince has seven stages")
    }

    /// Backward Euler in s with the error estimate `h/2·|f(y_{n+1}) - f(y_n)|`.
    #[allow(clippy::type_complexity)]
    fn implicit_step(
        &mut self,
        t: f64,
        y: [f64; 2],
        sigma: f64,
        k1: [f64; 2],
        h: f64,
    ) -> Result<(f64, [f64; 2], [f64; 2], f64, f64)> {
        let t_new = t + h;
        let v = self.sys.protocol.rate(t_new);
        let f_new = if self.sys.exact_f {
            self.sys.f_exact(t_new)
        } else {
            let denom = 1.0 - h * v;
            if denom <= 0.0 {
                return Ok((t_new, y, k1, sigma, 10.0));
            }
            y[1] / denom
        };
        check_deformation(f_new)?;
        let fluid = &self.sys.material.fluid;
        let sys = self.sys;
        // solve in Z: Z(σ) = Z_n + h·F·(v - a·sign(σ)|σ|^(1/m))
        let z_n = match sys.quadratic_tau {
            Some(tau0) => tau0 * y[0],
            None => y[0],
        };
        let target = z_n + h * f_new * v;
        let material = sys.material;
        let free = material.invert_z(target)?;
        let residual = |s: f64| -> (f64, f64) {
            let val = material.z(s) - target + h * f_new * fluid.rate_from_stress(s);
            let dz = material.viscous.tau(s, material.rho_star).unwrap_or(f64::NAN);
            (val, dz - h * fluid.production_dsigma(f_new, s))
        };
        let tol = 1e-3 * self.weight(target, target);
        let sigma_new = roots::monotone_root(0.0f64.min(free), 0.0f64.max(free), 1e-15, tol * 1e-3, residual)?;
        let s_new = sys.s_of(sigma_new);
        let y_new = [s_new, f_new];
        let (k_new, _) = self.eval(t_new, y_new)?;
        let est = 0.5 * h * (k_new[0] - k1[0]).abs();
        let err = est / self.weight(y[0], s_new);
        Ok((t_new, y_new, k_new, sigma_new, err))
    }
}

/// Ratios `(σ∞ - σ(t + Δ))/(σ∞ - σ(t))` on the grid `t_i = t_start + iΔ`.
///
/// The sequence stops where a residual drops below `100·atol`. A single
/// exponential gives constant ratios; a strictly decreasing sequence means
/// the approach to σ∞ is faster than any exponential.
pub fn superexp_ratio_test(traj: &Trajectory, sigma_inf: f64, delta: f64, atol: f64) -> Vec<f64> {
    assert!(delta > 0.0, "ratio spacing must be positive");
    let floor = 100.0 * atol;
    let t0 = traj.t_start();
    let t_end = traj.t_end();
    let mut ratios = Vec::new();
    let mut i = 0usize;
    loop {
        let t = t0 + delta * i as f64;
        let t_next = t0 + delta * (i + 1) as f64;
        if t_next > t_end * (1.0 + 1e-12) {
            break;
        }
        let r0 = sigma_inf - traj.sigma_at(t);
        let r1 = sigma_inf - traj.sigma_at(t_next.min(t_end));
        if r0.abs() < floor || r1.abs() < floor {
            break;
        }
        ratios.push(r1 / r0);
        i += 1;
    }
    ratios
}

pub fn is_strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{case1_solution, steady_sigma, Case1Params};
    use crate::constitutive::{CustomViscous, ElasticLaw, PowerLawFluid, ViscousEnergy};
    use approx::assert_relative_eq;

    fn material(m: f64, tau0: f64) -> Material {
        Material::new(
            1.0,
            ElasticLaw::power_gas(1.0, 1.0).unwrap(),
            ViscousEnergy::quadratic(tau0).unwrap(),
            PowerLawFluid::conventional(m).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rhs_case2_examples() {
        let fluid = PowerLawFluid::conventional(0.7).unwrap();
        let p = SteadyShearParams::new(0.1, 1.0, 0.1, fluid).unwrap();
        assert_relative_eq!(rhs_case2(0.0, 0.0, &p), 1.0, epsilon = 1e-15);
        assert!(rhs_case2(3.0, steady_sigma(&p), &p).abs() < 1e-14);
        let rest = SteadyShearParams::new(0.0, 1.0, 0.1, fluid).unwrap();
        let expect = -fluid.a_coeff() * 0.5f64.powf(1.0 / 0.7) / 0.1;
        assert_relative_eq!(rhs_case2(2.0, 0.5, &rest), expect, max_relative = 1e-15);
    }

    #[test]
    fn zero_rate_newtonian_matches_exponential() {
        let mat = material(1.0, 0.3);
        let k = mat.fluid.k();
        let opts = OdeOptions::until(2.0);
        let traj = simulate_homogeneous(&mat, &ShearProtocol::ZeroRate, 1.0, 1.0, &opts).unwrap();
        for (&t, &s) in traj.times.iter().zip(&traj.sigma) {
            let exact = (-t / (k * 0.3)).exp();
            assert!((s - exact).abs() <= 1e-6 * exact.max(1e-3), "t = {t}");
        }
        assert_eq!(traj.t_end(), 2.0);
    }

    #[test]
    fn zero_rate_all_regimes_match_closed_form() {
        for m in [0.5, 1.0, 2.0] {
            let mat = material(m, 1.0);
            let p = Case1Params::new(mat.fluid, 1.0).unwrap();
            let opts = OdeOptions::until(1.0).with_tolerances(1e-9, 1e-13);
            let traj = simulate_homogeneous(&mat, &ShearProtocol::ZeroRate, 1.0, 1.0, &opts).unwrap();
            for (&t, &s) in traj.times.iter().zip(&traj.sigma) {
                let exact = case1_solution(&p, t).unwrap();
                if exact > 1e-4 {
                    assert!((s - exact).abs() <= 1e-6 * exact, "m = {m}, t = {t}: {s} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn extinct_tail_does_not_stall_explicit_steps() {
        // σ' = -a·σ^(2/3) chatters at the atol scale after extinction
        let mat = material(1.5, 1.0);
        let opts = OdeOptions::until(5.0).with_tolerances(1e-12, 1e-14);
        let traj = simulate_homogeneous(&mat, &ShearProtocol::ZeroRate, 1.0, 1.0, &opts).unwrap();
        assert!(traj.stats.steps < 5_000, "{:?}", traj.stats);
        assert!(traj.stats.implicit_steps > 0);
        assert!(traj.final_sigma().abs() < 1e-13);
    }

    #[test]
    fn constant_rate_reaches_power_law() {
        let mat = material(0.7, 0.1);
        let opts = OdeOptions::until(30.0);
        let traj = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.1 }, 0.0, 1.0, &opts).unwrap();
        assert!((traj.final_sigma() - 0.399_648_996_336_371_8).abs() < 1e-6);
        for (&t, &f) in traj.times.iter().zip(&traj.f) {
            assert_eq!(f, (0.1 * t).exp());
        }
    }

    #[test]
    fn equilibrium_is_invariant() {
        let mat = material(0.7, 0.1);
        let sinf = mat.fluid.stress_from_rate(0.1);
        let opts = OdeOptions::until(10.0);
        let traj = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.1 }, sinf, 1.0, &opts).unwrap();
        assert!(traj.sigma.iter().all(|&s| (s - sinf).abs() <= opts.atol));
    }

    #[test]
    fn monotone_approach_from_rest() {
        let mat = material(1.5, 0.2);
        let sinf = mat.fluid.stress_from_rate(0.3);
        let opts = OdeOptions::until(8.0);
        let traj = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.3 }, 0.0, 1.0, &opts).unwrap();
        for w in traj.sigma.windows(2) {
            assert!(w[1] >= w[0] - opts.atol);
        }
        assert!(traj.sigma.iter().all(|&s| s <= sinf + opts.atol));
    }

    #[test]
    fn implicit_phase_engages_for_long_runs() {
        let mat = material(0.7, 0.1);
        let mut opts = OdeOptions::until(120.0);
        opts.implicit_switch = Some(1e-4);
        let traj = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.1 }, 0.0, 1.0, &opts).unwrap();
        assert!(traj.stats.implicit_steps > 0);
        assert!((traj.final_sigma() - 0.399_648_996_336_371_8).abs() < 1e-6);
    }

    #[test]
    fn piecewise_protocol_and_exact_deformation() {
        let p = ShearProtocol::piecewise(vec![1.0, 2.0], vec![0.5, -0.25, 0.0]).unwrap();
        assert_eq!(p.rate(0.5), 0.5);
        assert_eq!(p.rate(1.0), -0.25);
        assert_eq!(p.rate(5.0), 0.0);
        assert_relative_eq!(p.integrated_rate(1.5).unwrap(), 0.5 - 0.125, epsilon = 1e-15);
        assert_relative_eq!(p.integrated_rate(3.0).unwrap(), 0.25, epsilon = 1e-15);
        assert!(ShearProtocol::piecewise(vec![2.0, 1.0], vec![0.0; 3]).is_err());
        assert!(ShearProtocol::piecewise(vec![1.0], vec![0.0]).is_err());

        let mat = material(1.0, 0.5);
        let opts = OdeOptions::until(3.0);
        let traj = simulate_homogeneous(&mat, &p, 0.0, 1.0, &opts).unwrap();
        assert!(traj.times.contains(&1.0) && traj.times.contains(&2.0));
        assert_relative_eq!(*traj.f.last().unwrap(), 0.25f64.exp(), epsilon = 1e-14);
    }

    #[test]
    fn custom_protocol_integrates_deformation() {
        let mat = material(1.0, 0.5);
        let opts = OdeOptions::until(2.0);
        let traj = simulate_homogeneous(&mat, &ShearProtocol::custom(|_| 0.2), 0.5, 1.3, &opts).unwrap();
        let exact = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.2 }, 0.5, 1.3, &opts).unwrap();
        assert_relative_eq!(*traj.f.last().unwrap(), 1.3 * 0.4f64.exp(), max_relative = 1e-7);
        assert_relative_eq!(traj.final_sigma(), exact.final_sigma(), max_relative = 1e-7);
    }

    #[test]
    fn custom_viscous_integrates_in_z() {
        let tau0 = 0.2;
        let quad = material(0.8, tau0);
        let mut custom = quad.clone();
        custom.viscous =
            ViscousEnergy::Custom(CustomViscous::new(move |s| tau0 * s * s / 2.0, move |s| tau0 * s, tau0));
        let opts = OdeOptions::until(2.0);
        let proto = ShearProtocol::ConstantRate { vx0: 0.5 };
        let a = simulate_homogeneous(&quad, &proto, 0.1, 1.0, &opts).unwrap();
        let b = simulate_homogeneous(&custom, &proto, 0.1, 1.0, &opts).unwrap();
        assert_relative_eq!(a.final_sigma(), b.final_sigma(), max_relative = 1e-7);
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let mat = material(0.7, 0.1);
        let traj = simulate_homogeneous(&mat, &ShearProtocol::ZeroRate, 0.3, 1.0, &OdeOptions::until(0.0)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.sigma[0], 0.3);
    }

    #[test]
    fn max_steps_is_reported() {
        let mat = material(0.7, 0.1);
        let mut opts = OdeOptions::until(10.0);
        opts.max_steps = 3;
        let err = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.1 }, 0.0, 1.0, &opts).unwrap_err();
        assert!(matches!(err, Error::MaxStepsExceeded { max_steps: 3, .. }));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mat = material(0.7, 0.1);
        assert!(simulate_homogeneous(&mat, &ShearProtocol::ZeroRate, 0.0, 0.0, &OdeOptions::until(1.0)).is_err());
        let bad = OdeOptions::until(1.0).with_tolerances(0.0, 1e-10);
        assert!(simulate_homogeneous(&mat, &ShearProtocol::ZeroRate, 0.0, 1.0, &bad).is_err());
    }

    #[test]
    fn deterministic() {
        let mat = material(0.7, 0.1);
        let opts = OdeOptions::until(5.0);
        let a = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.1 }, 0.0, 1.0, &opts).unwrap();
        let b = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0: 0.1 }, 0.0, 1.0, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ratio_test_on_exact_exponential() {
        let tau1 = 0.1;
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.005).collect();
        let sigma: Vec<f64> = times
            .iter()
            .map(|&t| crate::analytic::maxwell_comparator(t, 1.0, tau1).unwrap())
            .collect();
        let dsigma: Vec<f64> = times.iter().map(|&t| (-t / tau1).exp() / tau1).collect();
        let traj = Trajectory::from_samples(times, sigma, dsigma).unwrap();
        let ratios = superexp_ratio_test(&traj, 1.0, 0.1, 1e-10);
        assert!(ratios.len() > 5);
        for r in ratios {
            assert_relative_eq!(r, (-1.0f64).exp(), max_relative = 1e-6);
        }
    }

    #[test]
    fn ratio_test_on_constant_is_empty() {
        let traj = Trajectory::from_samples(vec![0.0, 1.0, 2.0], vec![0.4; 3], vec![0.0; 3]).unwrap();
        assert!(superexp_ratio_test(&traj, 0.4, 0.5, 1e-10).is_empty());
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let times = vec![0.0, 0.7, 2.0];
        let f = |t: f64| t * t * t - 2.0 * t + 1.0;
        let df = |t: f64| 3.0 * t * t - 2.0;
        let traj = Trajectory::from_samples(
            times.clone(),
            times.iter().map(|&t| f(t)).collect(),
            times.iter().map(|&t| df(t)).collect(),
        )
        .unwrap();
        for t in [0.1, 0.69, 1.3, 1.99] {
            assert_relative_eq!(traj.sigma_at(t), f(t), epsilon = 1e-13);
        }
    }
}
