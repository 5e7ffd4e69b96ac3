use approx::assert_relative_eq;
use ret_core::diagnostics::{energy_budget, homogeneous_history, observed_order, EnergyObserver, OrderEstimate};
use ret_core::pde::{run, State1D, WavefrontTracker};
use ret_core::{
    simulate_homogeneous, BoundaryCondition, ElasticLaw, Field1D, Grid1D, Material, OdeOptions, PowerLawFluid,
    ShearProtocol, StepMode, ViscousEnergy,
};

fn material(elastic: ElasticLaw, tau0: f64, m: f64) -> Material {
    Material::new(
        1.0,
        elastic,
        ViscousEnergy::quadratic(tau0).unwrap(),
        PowerLawFluid::conventional(m).unwrap(),
    )
    .unwrap()
}

fn pulse_f(n: usize) -> Vec<f64> {
    let mat = material(ElasticLaw::power_gas(1.0, 1.4).unwrap(), 0.1, 0.7);
    let grid = Grid1D::new(0.0, 1.0, n).unwrap();
    let mut field = Field1D::from_primitives(grid, mat, BoundaryCondition::Periodic, |x| {
        let g = (-((x - 0.5) / 0.2f64).powi(2)).exp();
        State1D::new(0.0, 1.0 + 0.1 * g, 0.05 * g)
    })
    .unwrap();
    run(&mut field, 0.1, 0.8, StepMode::Imex, &mut []).unwrap();
    field.states().unwrap().iter().map(|s| s.f).collect()
}

/// Mean absolute difference after averaging `fine` onto the coarse cells.
fn l1_distance(coarse: &[f64], fine: &[f64]) -> f64 {
    let r = fine.len() / coarse.len();
    let total: f64 = coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (c - fine[i * r..(i + 1) * r].iter().sum::<f64>() / r as f64).abs())
        .sum();
    total / coarse.len() as f64
}

#[test]
fn smooth_pulse_converges_at_first_order() {
    let solutions: Vec<Vec<f64>> = [100, 200, 400, 800, 1600].iter().map(|&n| pulse_f(n)).collect();
    let errors: Vec<f64> = (0..3).map(|i| l1_distance(&solutions[i], &solutions[i + 2])).collect();
    match observed_order(errors[0], errors[1], errors[2]).unwrap() {
        OrderEstimate::Orders(a, b) => {
            assert!((0.8..=1.5).contains(&a) && (0.8..=1.5).contains(&b), "orders {a}, {b}");
        }
        OrderEstimate::Saturated => panic!("errors unexpectedly at round-off: {errors:?}"),
    }
}

#[test]
fn uniform_piston_shear_matches_homogeneous_ode() {
    let (vx, f0, t_end) = (0.1, 1.0, 2.0);
    for mode in [StepMode::Explicit, StepMode::Imex] {
        let mat = material(ElasticLaw::linear(1.0).unwrap(), 0.1, 0.7);
        let grid = Grid1D::new(0.0, 1.0, 20).unwrap();
        let bc = BoundaryCondition::constant_piston(0.0, vx);
        let mut field = Field1D::from_primitives(grid, mat.clone(), bc, |x| State1D::new(vx * x, f0, 0.0)).unwrap();
        run(&mut field, t_end, 0.9, mode, &mut []).unwrap();
        let protocol = ShearProtocol::custom(move |t| vx / (f0 + vx * t));
        let traj = simulate_homogeneous(&mat, &protocol, 0.0, f0, &OdeOptions::until(t_end)).unwrap();
        for s in field.states().unwrap() {
            assert_relative_eq!(s.f, f0 + vx * t_end, epsilon = 1e-12);
            assert!(
                (s.sigma - traj.final_sigma()).abs() < 1e-4,
                "{mode:?}: {} vs {}",
                s.sigma,
                traj.final_sigma()
            );
        }
    }
}

#[test]
fn homogeneous_budget_closes() {
    let mat = material(ElasticLaw::power_gas(1.0, 1.4).unwrap(), 0.1, 0.7);
    let vx0 = 0.1;
    let opts = OdeOptions::until(5.0).with_tolerances(1e-11, 1e-13);
    let traj = simulate_homogeneous(&mat, &ShearProtocol::ConstantRate { vx0 }, 0.0, 1.0, &opts).unwrap();
    // sample the dense output finely so the trapezoid rule is not the limiting error
    let n = 20_000;
    let times: Vec<f64> = (0..=n).map(|i| 5.0 * i as f64 / n as f64).collect();
    let (mut reports, diss, power) = homogeneous_history(&mat, &traj, |_| vx0, &times).unwrap();
    let residual = energy_budget(&mut reports, &diss, Some(&power)).unwrap();
    let change = (reports.last().unwrap().total - reports[0].total).abs();
    let worst = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    assert!(worst <= 1e-6 * change + 1e-10, "residual {worst} vs change {change}");
    assert!(diss.iter().all(|&d| d <= 0.0));
}

#[test]
fn periodic_riemann_run_dissipates_inside_the_cone() {
    let mat = material(ElasticLaw::linear(1.0).unwrap(), 0.1, 0.7);
    let grid = Grid1D::new(0.0, 1.0, 200).unwrap();
    let support = (0.4, 0.6);
    let mut field = Field1D::from_primitives(grid, mat, BoundaryCondition::Periodic, |x| {
        if (support.0..support.1).contains(&x) {
            State1D::new(0.0, 1.2, 0.5)
        } else {
            State1D::rest()
        }
    })
    .unwrap();
    let mut energy = EnergyObserver::new(0.0);
    let mut front = WavefrontTracker::new(&field, support);
    run(&mut field, 0.1, 0.9, StepMode::Imex, &mut [&mut energy, &mut front]).unwrap();
    for w in energy.reports.windows(2) {
        assert!(w[1].total <= w[0].total + 1e-12 * w[0].total.abs());
    }
    assert!(energy.dissipation.iter().all(|&d| d <= 0.0));
    assert!(energy.budget().unwrap().iter().all(|&r| r <= 0.0));
    assert!(front.worst_excess(grid.dx()) <= 1.0);
}

#[test]
fn relaxation_limit_error_shrinks_with_tau() {
    let (vx, t_end) = (0.1, 2.0);
    let errors: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&tau0| {
            let mat = material(ElasticLaw::linear(1.0).unwrap(), tau0, 0.7);
            let grid = Grid1D::new(0.0, 1.0, 10).unwrap();
            let bc = BoundaryCondition::constant_piston(0.0, vx);
            let mut field =
                Field1D::from_primitives(grid, mat.clone(), bc, |x| State1D::new(vx * x, 1.0, 0.0)).unwrap();
            run(&mut field, t_end, 0.9, StepMode::Imex, &mut []).unwrap();
            let s = field.states().unwrap()[5];
            (s.sigma - mat.fluid.stress_from_rate(vx / s.f)).abs()
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}
