//! Scenario execution and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use ret_core::analytic::NEWTONIAN_BAND;
use ret_core::diagnostics::{reports_to_csv, EnergyObserver};
use ret_core::format::fmt_f64;
use ret_core::pde::{run, FrontSample, WavefrontTracker};
use ret_core::{
    case1_solution, extinction_time, maxwell_comparator, simulate_homogeneous, BoundaryCondition, Case1Params,
    CustomViscous, ElasticLaw, Field1D, Grid1D, Material, OdeOptions, PowerLawFluid, ShearProtocol, State1D,
    ViscousEnergy,
};

use crate::config::{Axis, BcSpec, ElasticSpec, InitialSpec, Kind, MaterialSpec, ScenarioConfig, ViscousSpec};
use crate::error::CliError;
use crate::svg::{LinePlot, Series};

/// Files written and a short human-readable account of the run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

pub fn build_viscous(spec: ViscousSpec, rho_star: f64) -> ret_core::Result<ViscousEnergy> {
    match spec {
        ViscousSpec::Quadratic { tau0 } => ViscousEnergy::quadratic(tau0),
        ViscousSpec::Quartic { tau0, beta } => {
            ViscousEnergy::quadratic(tau0)?;
            let energy = move |s: f64| tau0 * (0.5 * s * s + 0.25 * beta * s.powi(4)) / rho_star;
            let derivative = move |s: f64| tau0 * (s + beta * s.powi(3)) / rho_star;
            let custom = CustomViscous::new(energy, derivative, tau0 / rho_star)
                .with_ratio_integral(move |s: f64| tau0 * (s + beta * s.powi(3) / 3.0) / rho_star);
            Ok(ViscousEnergy::Custom(custom))
        }
    }
}

pub fn build_material(spec: &MaterialSpec, m: f64, k: f64) -> ret_core::Result<Material> {
    build_material_with(spec, m, k, spec.viscous)
}

fn build_material_with(spec: &MaterialSpec, m: f64, k: f64, viscous: ViscousSpec) -> ret_core::Result<Material> {
    let elastic = match spec.elastic {
        ElasticSpec::Linear { modulus } => ElasticLaw::linear(modulus)?,
        ElasticSpec::PowerGas { p0, gamma } => ElasticLaw::power_gas(p0, gamma)?,
    };
    let mat = Material::new(
        spec.rho_star,
        elastic,
        build_viscous(viscous, spec.rho_star)?,
        PowerLawFluid::new(k, m)?,
    )?;
    Ok(mat.with_body_force(spec.body_force))
}

fn write(path: PathBuf, contents: &str, outcome: &mut Outcome) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|source| CliError::Output {
        path: path.clone(),
        source,
    })?;
    outcome.files.push(path);
    Ok(())
}

fn ode_options(cfg: &ScenarioConfig) -> OdeOptions {
    let s = &cfg.solver;
    OdeOptions {
        rtol: s.rtol,
        atol: s.atol,
        max_steps: s.max_steps,
        implicit_switch: s.implicit_switch,
        ..OdeOptions::until(cfg.protocol.t_end)
    }
}

/// Uniform grid of `samples` times on `[0, t_end]`; a single time when t_end = 0.
fn sample_times(t_end: f64, samples: usize) -> Vec<f64> {
    if t_end == 0.0 {
        return vec![0.0];
    }
    let n = samples - 1;
    (0..=n)
        .map(|i| if i == n { t_end } else { t_end * i as f64 / n as f64 })
        .collect()
}

fn csv_row(values: &[f64]) -> String {
    values.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

/// Runs any scenario kind and writes its artifacts into `out_dir`.
///
/// The metadata sidecar is written before any solving, so a failed run
/// still leaves its resolved configuration behind.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out_dir).map_err(|source| CliError::Output {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut outcome = Outcome::default();
    let sidecar = sidecar_text(cfg)?;
    write(
        out_dir.join(format!("{}.meta.cfg", cfg.output.name)),
        &sidecar,
        &mut outcome,
    )?;
    match cfg.kind {
        Kind::Case1 => run_case1(cfg, out_dir, &mut outcome)?,
        Kind::Case2 => run_case2(cfg, out_dir, &mut outcome)?,
        Kind::Pde => run_pde(cfg, out_dir, &mut outcome)?,
        Kind::Sweep => run_sweep(cfg, out_dir, &mut outcome)?,
    }
    Ok(outcome)
}

/// Resolved configuration plus derived quantities and assumptions as comments.
pub fn sidecar_text(cfg: &ScenarioConfig) -> Result<String, CliError> {
    let mut notes: Vec<String> = Vec::new();
    let spec = &cfg.material;
    for &m in &spec.m {
        let k = spec.k.resolve(m);
        let fluid = PowerLawFluid::new(k, m)?;
        notes.push(format!(
            "m = {}: k = {}, a = {}",
            fmt_f64(m),
            fmt_f64(k),
            fmt_f64(fluid.a_coeff())
        ));
        match cfg.kind {
            Kind::Case1 => {
                if m > 1.0 && (m - 1.0).abs() >= NEWTONIAN_BAND {
                    let t_c = extinction_time(&Case1Params::new(fluid, cfg.protocol.sigma0)?)?;
                    notes.push(format!("m = {}: extinction at t_bar = {}", fmt_f64(m), fmt_f64(t_c)));
                }
            }
            Kind::Case2 => {
                let s_inf = fluid.stress_from_rate(cfg.protocol.vx0);
                notes.push(format!("steady stress (power law at vx0) = {}", fmt_f64(s_inf)));
            }
            _ => {}
        }
    }
    match cfg.kind {
        Kind::Case1 => {
            notes.push("closed-form curves in nondimensional time t_bar = t/tau0 with F = 1".into());
            notes.push(format!(
                "horizon and sampling: t_bar in [0, {}] with {} samples",
                fmt_f64(cfg.protocol.t_end),
                cfg.output.samples
            ));
        }
        Kind::Case2 => {
            notes.push("constant Eulerian shear rate vx0 with F(t) = f0*exp(vx0*t)".into());
            if cfg.protocol.tau1.is_some() {
                notes.push("linear comparator: tau1*s' = s_inf - s with s(0) = sigma0".into());
            }
        }
        Kind::Pde => {
            notes.push("Lagrangian finite volumes: Rusanov flux, SSP-RK2, one ghost cell".into());
            notes.push("energy budget residual counts no boundary work".into());
        }
        Kind::Sweep => {
            notes.push("each row integrates the constant-rate homogeneous problem".into());
            notes.push("extinction_t_bar is t/tau0 at extinction for relaxation from relax_sigma0 with F = 1 (NA unless m > 1)".into());
        }
    }
    if matches!(spec.k, crate::config::Consistency::Conventional) {
        notes.push("consistency convention k = 10*exp(-2m)".into());
    }

    let mut out = String::from("# resolved scenario written by retsim; valid as input\n");
    for n in notes {
        let _ = writeln!(out, "# {n}");
    }
    out.push('\n');
    out.push_str(&cfg.to_config_text());
    Ok(out)
}

fn run_case1(cfg: &ScenarioConfig, out_dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let spec = &cfg.material;
    let params = spec
        .m
        .iter()
        .map(|&m| {
            Ok(Case1Params::new(
                PowerLawFluid::new(spec.k.resolve(m), m)?,
                cfg.protocol.sigma0,
            )?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let times = sample_times(cfg.protocol.t_end, cfg.output.samples);

    let mut csv = String::from("t_bar");
    for &m in &spec.m {
        let _ = write!(csv, ",sigma_m{}", fmt_f64(m));
    }
    csv.push('\n');
    let mut curves: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(times.len()); params.len()];
    for &t in &times {
        let mut row = vec![t];
        for (p, curve) in params.iter().zip(curves.iter_mut()) {
            let s = case1_solution(p, t)?;
            row.push(s);
            curve.push((t, s));
        }
        let _ = writeln!(csv, "{}", csv_row(&row));
    }
    write(out_dir.join(format!("{}.csv", cfg.output.name)), &csv, outcome)?;

    if cfg.output.svg {
        let series = spec
            .m
            .iter()
            .zip(curves)
            .map(|(&m, pts)| Series::new(format!("m = {}", fmt_f64(m)), pts))
            .collect();
        let plot = LinePlot {
            title: "Decay of viscous stress".into(),
            x_label: "t_bar = t / tau0".into(),
            y_label: "sigma".into(),
            series,
        };
        write(
            out_dir.join(format!("{}.svg", cfg.output.name)),
            &plot.render(),
            outcome,
        )?;
    }
    outcome
        .summary
        .push(format!("case1: {} curves, {} samples", params.len(), times.len()));
    Ok(())
}

fn run_case2(cfg: &ScenarioConfig, out_dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let spec = &cfg.material;
    let m = spec.m[0];
    let mat = build_material(spec, m, spec.k.resolve(m))?;
    let p = &cfg.protocol;
    let s_inf = mat.fluid.stress_from_rate(p.vx0);
    let traj = simulate_homogeneous(
        &mat,
        &ShearProtocol::ConstantRate { vx0: p.vx0 },
        p.sigma0,
        p.f0,
        &ode_options(cfg),
    )?;
    let times = sample_times(p.t_end, cfg.output.samples);

    let mut csv = String::from("t,sigma,F");
    if p.tau1.is_some() {
        csv.push_str(",sigma_linear");
    }
    csv.push('\n');
    let mut model = Vec::with_capacity(times.len());
    let mut linear = Vec::with_capacity(times.len());
    for &t in &times {
        let (s, f) = (traj.sigma_at(t), traj.f_at(t));
        let mut row = vec![t, s, f];
        model.push((t, s));
        if let Some(tau1) = p.tau1 {
            let l = maxwell_comparator(t, s_inf, tau1)? + p.sigma0 * (-t / tau1).exp();
            row.push(l);
            linear.push((t, l));
        }
        let _ = writeln!(csv, "{}", csv_row(&row));
    }
    write(out_dir.join(format!("{}.csv", cfg.output.name)), &csv, outcome)?;

    if cfg.output.svg {
        let mut series = vec![Series::new("present model", model)];
        if p.tau1.is_some() {
            series.push(Series::new("linear relaxation", linear));
        }
        let t_last = times[times.len() - 1];
        series.push(Series::new("power-law limit", vec![(0.0, s_inf), (t_last, s_inf)]).dashed());
        let plot = LinePlot {
            title: "Stress response under constant shear".into(),
            x_label: "t".into(),
            y_label: "sigma".into(),
            series,
        };
        write(
            out_dir.join(format!("{}.svg", cfg.output.name)),
            &plot.render(),
            outcome,
        )?;
    }
    outcome.summary.push(format!(
        "case2: sigma(T) = {}, steady = {}, {} steps ({} rejected, {} implicit)",
        fmt_f64(traj.final_sigma()),
        fmt_f64(s_inf),
        traj.stats.steps,
        traj.stats.rejected,
        traj.stats.implicit_steps
    ));
    Ok(())
}

struct SweepRow {
    m: f64,
    k: f64,
    tau0: f64,
    vx0: f64,
    result: Result<SweepValues, String>,
}

struct SweepValues {
    sigma_inf: f64,
    sigma_final: f64,
    extinction: Option<f64>,
    stats: ret_core::ode::SolverStats,
}

fn sweep_row(cfg: &ScenarioConfig, axis: Axis, value: f64) -> SweepRow {
    let spec = &cfg.material;
    let mut m = spec.m.first().copied().unwrap_or(value);
    let mut tau0 = spec.viscous.tau0();
    let mut vx0 = cfg.protocol.vx0;
    let mut k_override = None;
    match axis {
        Axis::M => m = value,
        Axis::K => k_override = Some(value),
        Axis::Tau0 => tau0 = value,
        Axis::Vx0 => vx0 = value,
    }
    let k = k_override.unwrap_or_else(|| spec.k.resolve(m));
    let relax_sigma0 = cfg.sweep.as_ref().map_or(1.0, |s| s.relax_sigma0);
    let compute = || -> ret_core::Result<SweepValues> {
        let mat = build_material_with(spec, m, k, spec.viscous.with_tau0(tau0))?;
        let p = &cfg.protocol;
        let traj = simulate_homogeneous(
            &mat,
            &ShearProtocol::ConstantRate { vx0 },
            p.sigma0,
            p.f0,
            &ode_options(cfg),
        )?;
        let extinction = if m > 1.0 && (m - 1.0).abs() >= NEWTONIAN_BAND {
            Some(extinction_time(&Case1Params::new(mat.fluid, relax_sigma0)?)?)
        } else {
            None
        };
        Ok(SweepValues {
            sigma_inf: mat.fluid.stress_from_rate(vx0),
            sigma_final: traj.final_sigma(),
            extinction,
            stats: traj.stats,
        })
    };
    SweepRow {
        m,
        k,
        tau0,
        vx0,
        result: compute().map_err(|e| e.to_string()),
    }
}

pub const NA: &str = "NA";

fn run_sweep(cfg: &ScenarioConfig, out_dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let sweep = cfg.sweep.as_ref().expect("sweep scenarios carry a sweep section");
    let rows: Vec<SweepRow> = sweep
        .values
        .par_iter()
        .map(|&v| sweep_row(cfg, sweep.axis, v))
        .collect();

    let mut csv = String::from(
        "m,k,tau0,vx0,sigma_inf,sigma_final,abs_error,extinction_t_bar,steps,rejected,rhs_evals,implicit_steps,status\n",
    );
    let mut failed = 0;
    for r in &rows {
        let params = csv_row(&[r.m, r.k, r.tau0, r.vx0]);
        match &r.result {
            Ok(v) => {
                let ext = v.extinction.map_or(NA.to_string(), fmt_f64);
                let _ = writeln!(
                    csv,
                    "{params},{},{},{},{ext},{},{},{},{},ok",
                    fmt_f64(v.sigma_inf),
                    fmt_f64(v.sigma_final),
                    fmt_f64((v.sigma_final - v.sigma_inf).abs()),
                    v.stats.steps,
                    v.stats.rejected,
                    v.stats.rhs_evals,
                    v.stats.implicit_steps
                );
            }
            Err(msg) => {
                failed += 1;
                let msg = msg.replace([',', '\n', '"'], ";");
                let _ = writeln!(csv, "{params},{NA},{NA},{NA},{NA},{NA},{NA},{NA},{NA},failed: {msg}");
            }
        }
    }
    write(out_dir.join(format!("{}.csv", cfg.output.name)), &csv, outcome)?;
    outcome.summary.push(format!(
        "sweep over {}: {} rows, {} failed",
        sweep.axis.name(),
        rows.len(),
        failed
    ));
    if failed > 0 {
        return Err(CliError::SweepRows {
            failed,
            total: rows.len(),
        });
    }
    Ok(())
}

fn initial_state(init: &InitialSpec, x: f64) -> State1D {
    let st = |t: &[f64; 3]| State1D::new(t[0], t[1], t[2]);
    match *init {
        InitialSpec::Riemann { x_split, left, right } => {
            if x < x_split {
                st(&left)
            } else {
                st(&right)
            }
        }
        InitialSpec::Box {
            support,
            inside,
            outside,
        } => {
            if (support.0..support.1).contains(&x) {
                st(&inside)
            } else {
                st(&outside)
            }
        }
        InitialSpec::Pulse {
            center,
            width,
            base,
            amplitude,
        } => {
            let g = (-((x - center) / width).powi(2)).exp();
            State1D::new(
                base[0] + amplitude[0] * g,
                base[1] + amplitude[1] * g,
                base[2] + amplitude[2] * g,
            )
        }
        InitialSpec::UniformShear { rate, f, sigma } => State1D::new(rate * x, f, sigma),
    }
}

fn front_csv(samples: &[FrontSample]) -> String {
    let opt = |x: Option<f64>| x.map_or(NA.to_string(), fmt_f64);
    let mut out = String::from("time,c_max,left,right,cone_left,cone_right\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(s.time),
            fmt_f64(s.c_max),
            opt(s.left),
            opt(s.right),
            fmt_f64(s.cone_left),
            fmt_f64(s.cone_right)
        );
    }
    out
}

fn run_pde(cfg: &ScenarioConfig, out_dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let spec = &cfg.material;
    let gspec = cfg.grid.expect("pde scenarios carry a grid");
    let init = cfg.initial.expect("pde scenarios carry initial data");
    let m = spec.m[0];
    let mat = build_material(spec, m, spec.k.resolve(m))?;
    let grid = Grid1D::new(gspec.x_min, gspec.x_max, gspec.cells)?;
    let bc = match gspec.bc {
        BcSpec::Periodic => BoundaryCondition::Periodic,
        BcSpec::Transmissive => BoundaryCondition::Transmissive,
        BcSpec::Piston { v_left, v_right } => BoundaryCondition::constant_piston(v_left, v_right),
    };
    let mut field = Field1D::from_primitives(grid, mat, bc, |x| initial_state(&init, x))?;
    let support = match init {
        InitialSpec::Box { support, .. } => Some(support),
        InitialSpec::Riemann { x_split, .. } => Some((x_split, x_split)),
        _ => None,
    };

    let mut energy = EnergyObserver::new(cfg.output.interval);
    let mut front = support.map(|s| WavefrontTracker::new(&field, s));
    let result = {
        let mut observers: Vec<&mut dyn ret_core::pde::Observer> = vec![&mut energy];
        if let Some(fr) = front.as_mut() {
            observers.push(fr);
        }
        run(
            &mut field,
            cfg.protocol.t_end,
            cfg.solver.cfl,
            cfg.solver.mode,
            &mut observers,
        )
    };

    // written whether or not the run finished: the field holds its last good state
    let name = &cfg.output.name;
    write(out_dir.join(format!("{name}_field.csv")), &field.to_csv()?, outcome)?;
    energy.budget()?;
    write(
        out_dir.join(format!("{name}_energy.csv")),
        &reports_to_csv(&energy.reports),
        outcome,
    )?;
    if let Some(fr) = &front {
        write(
            out_dir.join(format!("{name}_front.csv")),
            &front_csv(&fr.samples),
            outcome,
        )?;
    }
    let summary = result?;

    if cfg.output.svg {
        let states = field.states()?;
        let xs: Vec<f64> = field.grid.centers().collect();
        let pick = |f: fn(&State1D) -> f64| xs.iter().zip(&states).map(|(&x, s)| (x, f(s))).collect::<Vec<_>>();
        let plot = LinePlot {
            title: format!("Profiles at t = {}", fmt_f64(field.time)),
            x_label: "X".into(),
            y_label: "value".into(),
            series: vec![
                Series::new("v", pick(|s| s.v)),
                Series::new("F", pick(|s| s.f)),
                Series::new("sigma", pick(|s| s.sigma)),
            ],
        };
        write(out_dir.join(format!("{name}.svg")), &plot.render(), outcome)?;
    }
    let last = energy.reports.last().copied().unwrap_or_default();
    outcome.summary.push(format!(
        "pde: {} steps to t = {}, c_max = {}, energy {} -> {}",
        summary.steps,
        fmt_f64(field.time),
        fmt_f64(summary.c_max),
        fmt_f64(energy.reports.first().map_or(0.0, |r| r.total)),
        fmt_f64(last.total)
    ));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn run_text(text: &str) -> (tempfile::TempDir, Result<Outcome, CliError>) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::parse("t.cfg", text, "t").unwrap();
        let res = run_scenario(&cfg, dir.path());
        (dir, res)
    }

    #[test]
    fn zero_horizon_case1_writes_initial_row() {
        let (dir, res) =
            run_text("[scenario]\nkind = case1\n[material]\nm = 0.7, 2\nk = conventional\n[protocol]\nt_end = 0\n");
        res.unwrap();
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(csv, "t_bar,sigma_m0.7,sigma_m2\n0,1,1\n");
    }

    #[test]
    fn zero_horizon_case2_writes_initial_row() {
        let (dir, res) = run_text(
            "[scenario]\nkind = case2\n[material]\nm = 0.7\nk = 1\ntau0 = 0.1\n[protocol]\nvx0 = 0.1\nt_end = 0\ntau1 = 0.1\n",
        );
        res.unwrap();
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(csv, "t,sigma,F,sigma_linear\n0,0,1,0\n");
    }

    #[test]
    fn quartic_with_zero_beta_is_quadratic() {
        let q = build_viscous(ViscousSpec::Quartic { tau0: 0.3, beta: 0.0 }, 2.0).unwrap();
        for s in [-2.0, 0.0, 0.5, 3.0] {
            assert_eq!(q.tau(s, 2.0).unwrap(), 0.3);
            assert!((q.z(s, 2.0) - 0.3 * s).abs() <= 1e-15 * s.abs());
        }
        let q = build_viscous(ViscousSpec::Quartic { tau0: 0.3, beta: 2.0 }, 1.0).unwrap();
        assert!((q.tau(2.0, 1.0).unwrap() - 0.3 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn failing_sweep_row_is_recorded() {
        let (dir, res) = run_text(
            "[scenario]\nkind = sweep\n[material]\nm = 0.7\nk = 1\n[protocol]\nvx0 = 0.1\nt_end = 10\n[solver]\nmax_steps = 200\n[sweep]\naxis = tau0\nvalues = 1, 1e-5\n",
        );
        assert!(
            matches!(res, Err(CliError::SweepRows { failed: 1, total: 2 })),
            "{res:?}"
        );
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",ok"));
        assert!(lines[2].contains(",failed: "));
    }

    #[test]
    fn sidecar_reads_back() {
        let text = "[scenario]\nkind = case2\n[material]\nm = 0.7\nk = conventional\ntau0 = 0.1\n[protocol]\nvx0 = 0.1\nt_end = 1\n";
        let cfg = ScenarioConfig::parse("t.cfg", text, "t").unwrap();
        let side = sidecar_text(&cfg).unwrap();
        assert!(side.contains("k = 10*exp(-2m)"));
        assert_eq!(ScenarioConfig::parse("side", &side, "other").unwrap(), cfg);
    }
}
