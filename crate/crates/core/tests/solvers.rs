use dynot_core::cost::energy;
use dynot_core::grid::{validate_and_normalize, GridDims};
use dynot_core::operators::interpolate;
use dynot_core::prox::{prox_energy, prox_energy_conjugate};
use dynot_core::solvers::{DrState, SolverState};
use dynot_core::{
    solve, Algorithm, CenteredField, CostModel, FieldOps, Problem, Solver, SolverConfig,
};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bump(n: usize, c: f64) -> Array2<f64> {
    Array2::from_shape_fn((n + 1, 1), |(i, _)| (-((i as f64 / n as f64 - c).powi(2)) / 0.02).exp())
}

fn pair_problem(dims: GridDims, c0: f64, c1: f64) -> Problem {
    let pair = validate_and_normalize(&bump(dims.n(0), c0), &bump(dims.n(0), c1), 1e-3, true).unwrap();
    Problem::new(dims, &pair.f0, &pair.f1, CostModel::quadratic()).unwrap()
}

fn config(algorithm: Algorithm, iters: usize) -> SolverConfig {
    let mut c = SolverConfig::new(algorithm);
    c.max_iter = iters;
    c.tol = 0.0;
    c
}

#[test]
fn identity_transport_has_zero_cost() {
    let dims = GridDims::new_1d(8, 8).unwrap();
    let problem = pair_problem(dims, 0.4, 0.4);
    for algorithm in Algorithm::ALL {
        let mut c = config(algorithm, 500);
        c.seed = Some(3);
        if algorithm == Algorithm::CenteredDr {
            c.seed = None;
        }
        let out = solve(&problem, &c).unwrap();
        let j = energy(&out.centered, problem.cost()).unwrap();
        let m = (0..dims.dim()).map(|a| out.centered.m(a).iter().fold(0.0f64, |s, v| s.max(v.abs()))).fold(0.0, f64::max);
        assert!(j <= 1e-8, "{algorithm}: J = {j:e}");
        assert!(m <= 1e-4, "{algorithm}: |m| = {m:e}");
    }
}

#[test]
fn zero_budget_returns_the_initialization() {
    let dims = GridDims::new_1d(6, 4).unwrap();
    let problem = pair_problem(dims, 0.3, 0.6);
    let out = solve(&problem, &config(Algorithm::ADr, 0)).unwrap();
    assert!(out.record.rows().is_empty());
    assert_eq!(out.iterations, 0);
    assert_eq!(out.staggered.unwrap(), problem.initial_staggered(None));
}

#[test]
fn runs_are_deterministic() {
    let dims = GridDims::new_1d(10, 6).unwrap();
    let problem = pair_problem(dims, 0.2, 0.7);
    for algorithm in Algorithm::ALL {
        let c = config(algorithm, 40);
        let a = solve(&problem, &c).unwrap();
        let b = solve(&problem, &c).unwrap();
        assert_eq!(a.record.to_csv(), b.record.to_csv(), "{algorithm}");
        assert_eq!(a.centered, b.centered, "{algorithm}");
    }
}

#[test]
fn a_dr_prime_keeps_v_coupled() {
    let dims = GridDims::new_2d(6, 5, 6).unwrap();
    let f0 = Array2::from_shape_fn((7, 6), |(i, j)| 1.0 + (i * j) as f64);
    let f1 = Array2::from_shape_fn((7, 6), |(i, j)| 1.0 + ((6 - i) * j) as f64);
    let pair = validate_and_normalize(&f0, &f1, 0.0, true).unwrap();
    let problem = Problem::new(dims, &pair.f0, &pair.f1, CostModel::quadratic()).unwrap();
    let mut solver = Solver::new(problem, config(Algorithm::ADrPrime, 0)).unwrap();
    for _ in 0..30 {
        solver.step().unwrap();
        let SolverState::Split(state) = solver.state() else { panic!("split state") };
        assert!(state.x.v.max_abs_diff(&interpolate(&state.x.u)) <= 1e-12);
    }
}

#[test]
fn symmetric_splittings_average_exactly() {
    let dims = GridDims::new_1d(8, 6).unwrap();
    let problem = pair_problem(dims, 0.3, 0.7);
    for (algorithm, averaged_is_z) in [(Algorithm::SDr, true), (Algorithm::SDrPrime, false)] {
        let mut solver = Solver::new(problem.clone(), config(algorithm, 0)).unwrap();
        for _ in 0..10 {
            solver.step().unwrap();
            let SolverState::Symmetric(s) = solver.state() else { panic!("symmetric state") };
            let (avg, src) = if averaged_is_z { (&s.z, &s.w) } else { (&s.x, &s.x) };
            assert_eq!(avg.primary, avg.copy);
            if averaged_is_z {
                for (p, (x, y)) in avg
                    .primary
                    .arrays()
                    .into_iter()
                    .zip(src.primary.arrays().into_iter().zip(src.copy.arrays()))
                {
                    ndarray::Zip::from(p).and(x).and(y).for_each(|&p, &x, &y| assert_eq!(p, 0.5 * (x + y)));
                }
            }
        }
    }
}

#[test]
fn dr_fixed_point_is_stationary() {
    let dims = GridDims::new_2d(3, 3, 2).unwrap();
    let z = CenteredField::from_parts(
        dims,
        vec![Array3::from_elem((4, 4, 3), 0.25); 2],
        Array3::from_elem((4, 4, 3), 1.5),
    )
    .unwrap();
    let mut state = DrState::new(z.clone());
    let target = z.clone();
    state
        .step(1.5, |_| Ok(target.clone()), |_| Ok(target.clone()))
        .unwrap();
    assert_eq!(state.z, z);
    assert_eq!(state.w, z);
}

#[test]
fn arrow_hurwicz_extrapolation_is_trivial() {
    let dims = GridDims::new_1d(8, 6).unwrap();
    let problem = pair_problem(dims, 0.3, 0.7);
    let mut c = config(Algorithm::PrimalDual, 0);
    c.theta = 0.0;
    let mut solver = Solver::new(problem, c).unwrap();
    for _ in 0..5 {
        solver.step().unwrap();
        let SolverState::PrimalDual(s) = solver.state() else { panic!("pd state") };
        assert_eq!(s.upsilon, s.u);
    }
}

#[test]
fn relaxation_outside_range_is_rejected() {
    let dims = GridDims::new_1d(4, 4).unwrap();
    let problem = pair_problem(dims, 0.3, 0.7);
    for alpha in [0.0, 2.0, 2.5] {
        let mut c = SolverConfig::new(Algorithm::ADr);
        c.alpha = alpha;
        assert!(matches!(Solver::new(problem.clone(), c), Err(dynot_core::Error::Configuration(_))));
    }
}

#[test]
fn conjugate_prox_satisfies_moreau() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let dims = GridDims::new_2d(4, 3, 3).unwrap();
    let weights = Array3::from_shape_simple_fn(dims.centered_shape(), || 0.5 + r.random::<f64>());
    let costs = [
        CostModel::quadratic(),
        CostModel::with_beta(0.5).unwrap().with_weights(weights, 1e-6).unwrap(),
        CostModel::with_beta(0.0).unwrap(),
    ];
    for cost in costs {
        for gamma in [0.1, 1.0, 10.0] {
            let x = CenteredField::from_parts(
                dims,
                (0..2)
                    .map(|_| Array3::from_shape_simple_fn(dims.centered_shape(), || 4.0 * r.random::<f64>() - 2.0))
                    .collect(),
                Array3::from_shape_simple_fn(dims.centered_shape(), || 4.0 * r.random::<f64>() - 2.0),
            )
            .unwrap();
            // prox_{J*/gamma}(x) + prox_{gamma J}(gamma x) / gamma = x
            let mut scaled = x.clone();
            scaled.scale(gamma);
            let mut sum = prox_energy(&scaled, gamma, &cost).unwrap();
            sum.scale(1.0 / gamma);
            sum.axpy(1.0, &prox_energy_conjugate(&x, gamma, &cost).unwrap());
            assert!(sum.max_abs_diff(&x) <= 1e-10, "gamma {gamma} beta {} weighted {} gap {:e}", cost.beta(), !cost.is_unweighted(), sum.max_abs_diff(&x));
        }
    }
}

#[test]
fn objective_tracks_transport_distance() {
    // a larger shift costs more
    let dims = GridDims::new_1d(16, 8).unwrap();
    let mut j = Vec::new();
    for shift in [0.1, 0.2, 0.3] {
        let problem = pair_problem(dims, 0.3, 0.3 + shift);
        let out = solve(&problem, &config(Algorithm::PrimalDual, 800)).unwrap();
        j.push(energy(&out.prox_density, problem.cost()).unwrap());
    }
    assert!(j[0] < j[1] && j[1] < j[2], "{j:?}");
}

#[test]
fn thread_count_does_not_change_results() {
    let dims = GridDims::new_1d(12, 8).unwrap();
    let problem = pair_problem(dims, 0.25, 0.65);
    let c = config(Algorithm::SDr, 30);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = single.install(|| solve(&problem, &c).unwrap());
    let b = many.install(|| solve(&problem, &c).unwrap());
    assert_eq!(a.centered, b.centered);
    assert_eq!(a.record.to_csv(), b.record.to_csv());
}
