use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use porolab::analysis::{self, BarrierSpec, DecayMode, GrowthConstants, TailBounds};
use porolab::grid::{Field, Grid};
use porolab::kernel::PDECoefficients;
use porolab::solver::{self, IBVProblem, SolveOptions, Trajectory};
use porolab::statelaw::{IdealDomain, StateLaw};

fn law() -> StateLaw {
    StateLaw::ideal(1.0, IdealDomain::FullLine).unwrap()
}

fn heat(a: f64, grid: &Grid, u0: impl Fn(f64) -> f64, t_end: f64) -> Trajectory {
    let c = PDECoefficients::constant(
        DMatrix::from_element(1, 1, a),
        DMatrix::zeros(1, 1),
        DVector::zeros(1),
        law(),
    )
    .unwrap();
    let mut f = grid.sample(0.0, |x| u0(x[0]));
    for b in grid.boundary_indices() {
        f.values[b] = 0.0;
    }
    let p = IBVProblem::new(c, 0.0, f, grid).unwrap();
    let mut opts = SolveOptions::new(t_end, 0);
    opts.checkpoints = (1..)
        .map(|k| k as f64 * 0.05)
        .take_while(|t| *t <= t_end + 1e-12)
        .collect();
    solver::solve_with(&p, grid, &opts).unwrap()
}

fn grid() -> Grid {
    Grid::interval(1.0, 2.0, 40).unwrap()
}

fn hand_constants(traj: &Trajectory) -> GrowthConstants {
    let c = PDECoefficients::constant(
        DMatrix::identity(1, 1),
        DMatrix::zeros(1, 1),
        DVector::zeros(1),
        law(),
    )
    .unwrap();
    let b =
        analysis::coefficient_bounds(&c, &traj.grid, &[0.0], traj.m_star, traj.big_m_star).unwrap();
    let geom = analysis::geometry(&[1.0], &[2.0], &[0.0]).unwrap();
    analysis::growth_constants(
        &b,
        &geom,
        &law(),
        (0.0, 0.0),
        0.0,
        traj.m_star,
        traj.big_m_star,
    )
    .unwrap()
}

fn sine(x: f64) -> f64 {
    (PI * (x - 1.0)).sin()
}

#[test]
fn heat_constants_are_the_hand_values() {
    let traj = heat(1.0, &grid(), sine, 0.1);
    let gc = hand_constants(&traj);
    assert_eq!((gc.beta, gc.t_star, gc.eta_star), (0.5, 2.0, 0.5));
    assert!((gc.nu - 0.5 * 2f64.ln()).abs() < 1e-15);
    assert!((gc.nu0 - 2.0 * 2f64.ln()).abs() < 1e-15);
    assert!((gc.decay_prefactor().unwrap() - 2.0).abs() < 1e-15);
}

#[test]
fn ideal_law_lipschitz_constants() {
    let g = grid();
    let c = PDECoefficients::constant(
        DMatrix::identity(1, 1),
        DMatrix::zeros(1, 1),
        DVector::zeros(1),
        law(),
    )
    .unwrap();
    let b = analysis::coefficient_bounds(&c, &g, &[0.0], 0.0, 1.0).unwrap();
    let geom = analysis::geometry(&[1.0], &[2.0], &[0.0]).unwrap();
    let gc = analysis::growth_constants(&b, &geom, &law(), (1.0, -1.0), 0.0, 0.0, 1.0).unwrap();
    let e = std::f64::consts::E;
    assert!((gc.c1_lip.unwrap() - 1.0 / e).abs() < 1e-15);
    assert!((gc.c2_lip.unwrap() - e).abs() < 1e-15);
}

#[test]
fn max_principle_passes_on_heat_and_flags_a_spike() {
    let traj = heat(1.0, &grid(), sine, 1.0);
    let r = analysis::check_max_principle(&traj);
    assert!(r.passed());
    let maxes: Vec<f64> = traj.frames.iter().map(|f| f.max).collect();
    assert!(maxes.last().unwrap() < &1e-3 && maxes[0] > 0.99);

    let mut bad = traj.clone();
    let fr = &mut bad.frames[7];
    fr.field.values[12] = 1.5;
    fr.max = 1.5;
    let r = analysis::check_max_principle(&bad);
    assert!(!r.passed());
    let v = r
        .items
        .iter()
        .find(|i| !i.pass && i.check == "max")
        .unwrap();
    assert_eq!(v.node, Some(12));
    assert_eq!(v.t, Some(bad.frames[7].t()));
}

#[test]
fn constant_trajectory_passes_with_zero_margin() {
    let traj = heat(1.0, &grid(), |_| 0.0, 0.5);
    let r = analysis::check_max_principle(&traj);
    assert!(r.passed());
    assert!(r
        .items
        .iter()
        .filter(|i| i.check == "max")
        .all(|i| i.observed == 0.0));
}

#[test]
fn growth_lemma_windows_on_heat() {
    let traj = heat(1.0, &grid(), sine, 10.0);
    let gc = hand_constants(&traj);
    let r = analysis::check_growth_lemma(&traj, &gc, 5).unwrap();
    assert!(r.passed(), "{}", r.to_key_value());
    // exact first window: e^{-2π²} against η* = 0.5
    let j1 = r.get("J1").unwrap();
    assert!((j1 / (-2.0 * PI * PI).exp() - 1.0).abs() < 0.05);

    let zero = heat(1.0, &grid(), |_| 0.0, 10.0);
    let r = analysis::check_growth_lemma(&zero, &gc, 5).unwrap();
    assert!(r.passed());
    assert_eq!(r.get("J5"), Some(0.0));
}

#[test]
fn growth_lemma_needs_a_full_window() {
    let traj = heat(1.0, &grid(), sine, 1.0);
    let gc = hand_constants(&traj);
    assert!(analysis::check_growth_lemma(&traj, &gc, 5).is_err());
}

#[test]
fn decay_envelope_and_rate_on_heat() {
    let traj = heat(1.0, &grid(), sine, 10.0);
    let gc = hand_constants(&traj);
    let d = analysis::check_decay(&traj, 0.0, &gc, DecayMode::Interior, true).unwrap();
    assert!(d.report.passed(), "{}", d.report.to_key_value());
    let fit = d.nu_fit.unwrap();
    assert!((fit / (PI * PI) - 1.0).abs() < 0.01, "{fit}");

    let flat = heat(1.0, &grid(), |_| 0.0, 10.0);
    let d = analysis::check_decay(&flat, 0.0, &gc, DecayMode::Interior, true).unwrap();
    assert!(d.report.passed());
}

#[test]
fn rates_do_not_depend_on_the_profile() {
    let g = grid();
    let trajs: Vec<Trajectory> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&a| heat(1.0, &g, move |x| a * sine(x), 10.0))
        .collect();
    let c = PDECoefficients::constant(
        DMatrix::identity(1, 1),
        DMatrix::zeros(1, 1),
        DVector::zeros(1),
        law(),
    )
    .unwrap();
    let tail = TailBounds::from_samples(&c, &g, &trajs[0].times(), 1.0).unwrap();
    let geom = analysis::geometry(&[1.0], &[2.0], &[0.0]).unwrap();
    let r =
        analysis::check_rate_initial_data_independence(&trajs, 0.0, &law(), &tail, &geom).unwrap();
    assert!(r.passed());
    let fits: Vec<f64> = (0..3)
        .map(|i| r.get(&format!("profile{i}_nu_fit")).unwrap())
        .collect();
    for f in &fits {
        assert!((f / fits[0] - 1.0).abs() < 0.01, "{fits:?}");
    }

    let mut mixed = trajs.clone();
    mixed[2] = heat(2.0, &g, sine, 10.0);
    assert!(matches!(
        analysis::check_rate_initial_data_independence(&mixed, 0.0, &law(), &tail, &geom),
        Err(analysis::AnalysisError::MismatchedCoefficients)
    ));
}

#[test]
fn barrier_is_a_discrete_super_solution() {
    let geom = analysis::geometry(&[1.0], &[2.0], &[0.0]).unwrap();
    let spec = BarrierSpec::new(1.0, 1.0, &geom, 0.5).unwrap();
    let times: Vec<f64> = (1..=200).map(|k| 2.0 * k as f64 / 200.0).collect();
    for cells in [40, 80, 160] {
        let g = Grid::interval(1.0, 2.0, cells).unwrap();
        let r = analysis::check_barrier_residual(&spec, &geom, &g, 1.0, &times).unwrap();
        assert!(r.passed(), "{cells}: {}", r.to_key_value());
        assert!(r.get("unresolved_times").unwrap() < 200.0);
    }
}

#[test]
fn barrier_tilde_vanishes_at_its_minimum() {
    let geom = analysis::geometry(&[1.0], &[2.0], &[0.0]).unwrap();
    let spec = BarrierSpec::new(1.0, 1.0, &geom, 0.5).unwrap();
    // φ(x) = d0 at x = r0 ⇒ x = 1, t = d0/β
    let x = [1.0];
    let t = spec.d0 / spec.beta;
    assert!((analysis::barrier_phi(&spec, &geom, &x) - spec.d0).abs() < 1e-14);
    assert!(analysis::barrier_tilde(&spec, &geom, 3.0, &x, t).abs() < 1e-12);
    assert_eq!(analysis::barrier_eval(&spec, &geom, &x, 0.0), 0.0);
}

#[test]
fn residual_tolerance_scale_is_amplitude_for_the_heat_mode() {
    let g = Grid::interval(0.0, PI, 80).unwrap();
    let c = PDECoefficients::constant(
        DMatrix::identity(1, 1),
        DMatrix::zeros(1, 1),
        DVector::zeros(1),
        law(),
    )
    .unwrap();
    let f: Field = g.sample(0.0, |x| 0.3 * x[0].sin());
    let s = analysis::truncation_scale(&f, &g, &c);
    assert!((s / 0.3 - 1.0).abs() < 1e-3, "{s}");
}
