mod common;

use std::sync::Arc;

use cdanse::anderson::{aa_update, AndersonConfig, AndersonHistory, InnerProduct, Metric};
use cdanse::cda::{NudgingConfig, ObservationData};
use cdanse::fem::State;
use cdanse::mesh::observation_nodes;
use cdanse::solvers::{picard_step, solve_nonlinear, solve_nonlinear_observed, Method, Problem, SolverConfig};

#[test]
fn scalar_secant_step_is_exact() {
    for (a, b) in [(0.5, 1.0), (-0.8, 0.3), (2.5, -1.0), (0.999, 4.0)] {
        let g = |x: f64| a * x + b;
        let fixed = b / (1.0 - a);
        let mut hist = AndersonHistory::new(1, Metric::Euclidean);
        let x0 = 0.25;
        let x1 = aa_update(&mut hist, &[x0], &[g(x0)], 1.0).x_next[0];
        assert_eq!(x1, g(x0));
        let x2 = aa_update(&mut hist, &[x1], &[g(x1)], 1.0).x_next[0];
        assert!((x2 - fixed).abs() <= 1e-13 * fixed.abs().max(1.0), "a={a}: {x2} vs {fixed}");
    }
}

fn run_with(problem: &Problem, aa: Option<AndersonConfig>, data: Option<&ObservationData>) -> Vec<State> {
    let mut cfg = SolverConfig::new(Method::Picard, 1.0 / problem.nu());
    cfg.anderson = aa;
    cfg.max_iters = 12;
    if data.is_some() {
        cfg.nudging = NudgingConfig::direct();
    }
    let mut iterates = Vec::new();
    solve_nonlinear_observed(problem, &cfg, data, None, None, &mut |_, u| iterates.push(u.clone())).unwrap();
    iterates
}

#[test]
fn depth_zero_with_unit_beta_is_plain_picard() {
    let problem = Problem::cavity(8, 1.0 / 400.0).unwrap();
    let sp = problem.space().clone();
    let nodes = Arc::new(observation_nodes(sp.mesh(), 4).unwrap());
    let data = ObservationData::sample(&sp, nodes, &sp.interpolate_velocity(|p| [p[1] * p[1], -p[0] * p[1]])).unwrap();
    for d in [None, Some(&data)] {
        let aa = AndersonConfig {
            depth: 0,
            beta: 1.0,
            inner_product: InnerProduct::H1,
        };
        let plain = run_with(&problem, None, d);
        let wrapped = run_with(&problem, Some(aa), d);
        assert_eq!(plain.len(), wrapped.len());
        assert_eq!(plain, wrapped);
    }
}

#[test]
fn depth_zero_is_relaxed_picard() {
    let beta = 0.6;
    let problem = Problem::cavity(8, 1.0 / 200.0).unwrap();
    let sp = problem.space().clone();
    let aa = AndersonConfig {
        depth: 0,
        beta,
        inner_product: InnerProduct::Euclidean,
    };
    let wrapped = run_with(&problem, Some(aa), None);

    let cfg = SolverConfig::new(Method::Picard, 200.0);
    let free = sp.free_velocity_dofs();
    let mut u = State::zero(&sp);
    for w in &wrapped {
        let g = picard_step(&problem, &u, &cfg, None).unwrap();
        let mut next = g.clone();
        for &i in &free {
            let (x, gi) = (u.velocity[i], g.velocity[i]);
            next.velocity[i] = x + beta * (gi - x);
        }
        assert_eq!(&next, w);
        u = next;
    }
}

#[test]
fn anderson_speeds_up_picard() {
    let problem = Problem::cavity(16, 1.0 / 1000.0).unwrap();
    let mut cfg = SolverConfig::new(Method::Picard, 1000.0);
    let plain = solve_nonlinear(&problem, &cfg, None, None, None).unwrap();
    cfg.anderson = Some(AndersonConfig::default());
    let acc = solve_nonlinear(&problem, &cfg, None, None, None).unwrap();
    assert!(plain.trace.converged() && acc.trace.converged());
    assert!(acc.trace.iterations() < plain.trace.iterations());
    assert!(acc.trace.gains().iter().all(|t| (0.0..=1.0).contains(t)));
}
