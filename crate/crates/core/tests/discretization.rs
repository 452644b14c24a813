mod common;

use std::sync::Arc;

use cdanse::cda::{NudgingConfig, ObservationData};
use cdanse::fem::element::degree5_rule;
use cdanse::fem::norms::h1_seminorm;
use cdanse::fem::{assemble_convection, assemble_linear_blocks, load_vector, ConvectionMode, DualNorm, State};
use cdanse::mesh::observation_nodes;
use cdanse::solvers::{
    picard_step, reference_solution, solve_nonlinear, solve_nonlinear_observed, Method, Problem, SolverConfig, Status,
};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

#[test]
fn degree5_rule_integrates_monomials() {
    // reference triangle (0,0), (1,0), (0,1): int x^a y^b = a! b! / (a+b+2)!
    for a in 0..=5u32 {
        for b in 0..=(5 - a) {
            let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
            let got: f64 = degree5_rule()
                .iter()
                .map(|q| 0.5 * q.weight * q.bary[1].powi(a as i32) * q.bary[2].powi(b as i32))
                .sum();
            assert!((got - exact).abs() < 1e-15, "x^{a} y^{b}: {got} vs {exact}");
        }
    }
}

#[test]
fn oracle_rule_integrates_degree_ten() {
    let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let rule = triangle_rule(v);
    for a in 0..=10u32 {
        for b in 0..=(10 - a) {
            let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
            let got: f64 = rule.iter().map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
            assert!((got - exact).abs() < 1e-15, "x^{a} y^{b}");
        }
    }
}

#[test]
fn assembled_operators_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [1, 2] {
        let sp = space(n);
        let blocks = assemble_linear_blocks(&sp, 1.0).unwrap();
        let o = oracle_linear(&sp);
        assert!(max_diff(&dense(&blocks.k1), &o.k1) < 1e-12);
        assert!(max_diff(&dense(&blocks.mv), &o.mv) < 1e-12);
        assert!(max_diff(&dense(&blocks.mp), &o.mp) < 1e-12);
        assert!(max_diff(&dense(&blocks.b), &o.b) < 1e-12);

        let w = random_state(&mut rng, &sp, 1.0);
        let conv = assemble_convection(&sp, &w, ConvectionMode::Picard).unwrap();
        assert!(max_diff(&dense(&conv), &oracle_convection(&sp, &w.velocity)) < 1e-12);
        let newton = assemble_convection(&sp, &w, ConvectionMode::NewtonExtra).unwrap();
        assert!(max_diff(&dense(&newton), &oracle_newton(&sp, &w.velocity)) < 1e-12);
    }
}

#[test]
fn stiffness_and_mass_of_a_quadratic_field() {
    // v = (x^2, xy): int |grad v|^2 = 2, int |v|^2 = 1/5 + 1/9
    let sp = space(3);
    let blocks = assemble_linear_blocks(&sp, 1.0).unwrap();
    let v = sp.interpolate_velocity(|p| [p[0] * p[0], p[0] * p[1]]);
    assert!((blocks.k1.quad_form(&v) - 2.0).abs() < 1e-12);
    assert!((blocks.mv.quad_form(&v) - (1.0 / 5.0 + 1.0 / 9.0)).abs() < 1e-13);
}

/// One Picard step from zero with homogeneous data is a Stokes solve.
fn stokes_solve(n: usize, nu: f64) -> (cdanse::fem::MixedSpace, State) {
    let sp = Arc::new(space(n));
    let load = load_vector(&sp, mms_forcing(nu));
    let problem = Problem::new(sp.clone(), nu).unwrap().with_forcing(load).unwrap();
    let mut cfg = SolverConfig::new(Method::Picard, 1.0 / nu);
    cfg.lid_speed = 0.0;
    let u = picard_step(&problem, &State::zero(&sp), &cfg, None).unwrap();
    ((*sp).clone(), u)
}

#[test]
fn manufactured_stokes_converges_at_second_order() {
    let errs: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let (sp, u) = stokes_solve(n, 1.0);
            mms_h1_error(&sp, &u.velocity)
        })
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}, errors {errs:?}");
    }
}

#[test]
fn converged_states_are_discretely_divergence_free() {
    let problem = Problem::cavity(16, 0.01).unwrap();
    for method in [Method::Picard, Method::Newton] {
        let cfg = SolverConfig::new(method, 100.0);
        let res = solve_nonlinear(&problem, &cfg, None, None, None).unwrap();
        assert_eq!(res.trace.status, Status::Converged);
        let div = problem.blocks().b.mul_vec(&res.state.velocity);
        let norm = div.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-9, "{method}: |Bu| = {norm:e}");
    }
}

fn forced_problem(n: usize, nu: f64, amp: f64) -> Problem {
    let sp = Arc::new(space(n));
    let load = load_vector(&sp, |p| {
        let (x, y) = (p[0], p[1]);
        [amp * (std::f64::consts::PI * y).sin() * x, amp * (x - 0.5) * (2.0 * y - 1.0)]
    });
    Problem::new(sp, nu).unwrap().with_forcing(load).unwrap()
}

#[test]
fn picard_iterates_obey_the_energy_bound() {
    let nu = 0.01;
    let problem = forced_problem(16, nu, 5.0);
    let dual = DualNorm::new(problem.space(), problem.blocks()).unwrap();
    let bound = dual.norm_of_load(problem.forcing()).unwrap() / nu + 1e-8;
    let mut cfg = SolverConfig::new(Method::Picard, 1.0 / nu);
    cfg.lid_speed = 0.0;
    cfg.max_iters = 30;
    let mut worst: f64 = 0.0;
    solve_nonlinear_observed(&problem, &cfg, None, None, None, &mut |_, u| {
        worst = worst.max(h1_seminorm(problem.blocks(), &u.velocity));
    })
    .unwrap();
    assert!(worst > 0.0);
    assert!(worst <= bound, "{worst} > {bound}");
}

/// Largest `|b(u, v, w)| / (|u| |v| |w|)` seen over the given fields.
fn measured_trilinear_bound(problem: &Problem, fields: &[Vec<f64>]) -> f64 {
    let sp = problem.space();
    let mut m: f64 = 0.0;
    for u in fields {
        let n = assemble_convection(sp, &State::new(sp, u.clone(), vec![0.0; sp.pressure_dof_count()]).unwrap(), ConvectionMode::Picard).unwrap();
        for v in fields {
            for w in fields {
                let b = n.bilinear(w, v).abs();
                let s = h1_seminorm(problem.blocks(), u) * h1_seminorm(problem.blocks(), v) * h1_seminorm(problem.blocks(), w);
                if s > 0.0 {
                    m = m.max(b / s);
                }
            }
        }
    }
    m
}

#[test]
fn newton_iterates_stay_bounded_under_small_data() {
    let nu = 1.0;
    let problem = forced_problem(8, nu, 2.0);
    let sp = problem.space().clone();
    let dual = DualNorm::new(&sp, problem.blocks()).unwrap();
    let f = dual.norm_of_load(problem.forcing()).unwrap();
    let mut cfg = SolverConfig::new(Method::Newton, 1.0 / nu);
    cfg.lid_speed = 0.0;
    let mut iterates = Vec::new();
    let res = solve_nonlinear_observed(&problem, &cfg, None, None, None, &mut |_, u| iterates.push(u.velocity.clone()))
        .unwrap();
    assert_eq!(res.trace.status, Status::Converged);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mask = sp.dirichlet_mask();
    let mut fields = iterates.clone();
    for _ in 0..6 {
        let mut v = random_vec(&mut rng, sp.velocity_dof_count(), 1.0);
        for (x, &m) in v.iter_mut().zip(&mask) {
            if m {
                *x = 0.0;
            }
        }
        fields.push(v);
    }
    let m_hat = measured_trilinear_bound(&problem, &fields);
    let alpha = m_hat * f / (nu * nu);
    assert!(8.0 * alpha <= 1.0, "hypothesis not verifiable: alpha = {alpha}");
    for u in &iterates {
        assert!(h1_seminorm(problem.blocks(), u) <= 2.0 * f / nu);
    }
}

#[test]
fn divergence_is_reported_as_status() {
    let problem = Problem::cavity(8, 0.01).unwrap();
    let mut cfg = SolverConfig::new(Method::Picard, 100.0);
    cfg.divergence_threshold = 1e-3;
    let res = solve_nonlinear(&problem, &cfg, None, None, None).unwrap();
    assert_eq!(res.trace.status, Status::Diverged);
    assert_eq!(res.trace.iterations(), 1);
}

#[test]
fn reference_is_a_fixed_point_of_cda_steps() {
    let problem = Problem::cavity(16, 0.01).unwrap();
    let sp = problem.space().clone();
    let reference = reference_solution(sp.clone(), &[100.0], 1.0).unwrap();
    let nodes = Arc::new(observation_nodes(sp.mesh(), 4).unwrap());
    let data = ObservationData::sample(&sp, nodes, &reference.velocity).unwrap();
    for (method, nudging) in [
        (Method::Picard, NudgingConfig::direct()),
        (Method::Picard, NudgingConfig::penalty(1e3)),
        (Method::Newton, NudgingConfig::direct()),
    ] {
        let mut cfg = SolverConfig::new(method, 100.0);
        cfg.nudging = nudging;
        let next = if method == Method::Picard {
            picard_step(&problem, &reference, &cfg, Some(&data)).unwrap()
        } else {
            cdanse::solvers::newton_step(&problem, &reference, &cfg, Some(&data)).unwrap()
        };
        let d: Vec<f64> = next.velocity.iter().zip(&reference.velocity).map(|(a, b)| a - b).collect();
        let moved = h1_seminorm(problem.blocks(), &d);
        assert!(moved <= 1e-9, "{method}: moved {moved:e}");
    }
}
