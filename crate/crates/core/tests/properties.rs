mod common;

use std::sync::Arc;

use cdanse::anderson::{AndersonHistory, Metric};
use cdanse::cda::{
    apply_direct_enforcement, build_coarse_mass, build_sampling_operator, estimate_interpolation, nudging_contribution,
    ObservationData,
};
use cdanse::fem::norms::h1_seminorm;
use cdanse::fem::{assemble_convection, assemble_linear_blocks, ConvectionMode, Constraints, State};
use cdanse::mesh::{build_uniform_triangulation, observation_nodes, BoundaryTag};
use cdanse::metrics::{fit_linear_rate, h_scaling_exponent, star_from_parts};
use cdanse::solvers::IterationTrace;
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convection_is_skew(n in 1usize..5, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let sp = space(n);
        let blocks = assemble_linear_blocks(&sp, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_state(&mut rng, &sp, scale);
        let v = random_vec(&mut rng, sp.velocity_dof_count(), 1.0);
        let nu = assemble_convection(&sp, &u, ConvectionMode::Picard).unwrap();
        let tol = 1e-12 * euclid(&v).powi(2) * (1.0 + h1_seminorm(&blocks, &u.velocity));
        prop_assert!(nu.bilinear(&v, &v).abs() <= tol);
    }

    #[test]
    fn meshes_cover_the_square(n in 1usize..40) {
        let mesh = build_uniform_triangulation(n).unwrap();
        prop_assert!((mesh.total_area() - 1.0).abs() <= 1e-12);
        for (v, p) in mesh.vertices().iter().enumerate() {
            let on_boundary = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            let tag = mesh.vertex_tag(v);
            prop_assert_eq!(on_boundary, tag.is_boundary());
            if on_boundary {
                prop_assert_eq!(tag == BoundaryTag::Lid, p[1] == 1.0);
            }
        }
    }

    #[test]
    fn observation_nodes_are_nested(k in 0usize..4, m in 1usize..5) {
        let n_h = m * (1 << k);
        let n = n_h * 2;
        let mesh = build_uniform_triangulation(n).unwrap();
        let nodes = observation_nodes(&mesh, n_h).unwrap();
        prop_assert_eq!(nodes.len(), (n_h + 1) * (n_h + 1));
        for (&v, c) in nodes.fine_vertex_indices().iter().zip(nodes.coordinates()) {
            prop_assert_eq!(mesh.vertices()[v], *c);
        }
    }

    #[test]
    fn rate_fit_ignores_scaling(rho in 0.05f64..0.9, c in 1e-3f64..1e3, noise in 0.0f64..0.1) {
        let e: Vec<f64> = (1..15).map(|k| rho.powi(k) * (1.0 + noise * ((k * 7 % 5) as f64 - 2.0) / 2.0)).collect();
        let scaled: Vec<f64> = e.iter().map(|x| c * x).collect();
        // keep both above the floor over the same window
        let cut = e.iter().zip(&scaled).position(|(a, b)| a.min(*b) < 1e-9).unwrap_or(e.len());
        prop_assume!(cut >= 5);
        let a = fit_linear_rate(&e[..cut]).unwrap();
        let b = fit_linear_rate(&scaled[..cut]).unwrap();
        prop_assert!((a.rate - b.rate).abs() <= 1e-12 * a.rate);
    }

    #[test]
    fn scaling_exponent_recovers_power(s in 0.1f64..2.0, c in 0.01f64..10.0) {
        let rates: Vec<(f64, f64)> = (2..7).map(|j| {
            let h = 0.5f64.powi(j);
            (h, c * h.powf(s))
        }).collect();
        for e in h_scaling_exponent(&rates).unwrap() {
            prop_assert!((e - s).abs() <= 1e-12);
        }
    }

    #[test]
    fn aa_gain_is_feasible_and_residual_orthogonal(seed in any::<u64>(), depth in 1usize..6, beta in 0.1f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 12;
        // a contractive affine map plus a mild nonlinearity
        let a: Vec<Vec<f64>> = (0..dim).map(|_| random_vec(&mut rng, dim, 0.25)).collect();
        let b = random_vec(&mut rng, dim, 1.0);
        let g = |x: &[f64]| -> Vec<f64> {
            (0..dim).map(|i| a[i].iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + b[i] + 0.05 * x[i].sin()).collect()
        };
        let mut hist = AndersonHistory::new(depth, Metric::Euclidean);
        let mut x = random_vec(&mut rng, dim, 1.0);
        for _ in 0..10 {
            let gx = g(&x);
            let y: Vec<f64> = gx.iter().zip(&x).map(|(p, q)| p - q).collect();
            let step = hist.update(&x, &gx, beta);
            if euclid(&y) > 0.0 {
                let t = step.gain.unwrap();
                prop_assert!((0.0..=1.0).contains(&t));
            }
            if !step.gamma.is_empty() && step.gain.unwrap() < 1.0 {
                let cols = hist.weighted_columns();
                let mut r = y.clone();
                for (gj, col) in step.gamma.iter().zip(&cols) {
                    for (ri, ci) in r.iter_mut().zip(col) {
                        *ri -= gj * ci;
                    }
                }
                for col in &cols {
                    let dot: f64 = col.iter().zip(&r).map(|(p, q)| p * q).sum();
                    prop_assert!(dot.abs() <= 1e-10 * euclid(col) * euclid(&y));
                }
            }
            x = step.x_next;
        }
    }

    #[test]
    fn observation_text_round_trips(seed in any::<u64>(), k in 0usize..3) {
        let mesh = Arc::new(build_uniform_triangulation(8).unwrap());
        let sp = cdanse::fem::MixedSpace::new(mesh.clone());
        let nodes = Arc::new(observation_nodes(&mesh, 1 << (k + 1)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_vec(&mut rng, sp.velocity_dof_count(), 1e3);
        let d = ObservationData::sample(&sp, nodes, &v).unwrap();
        let back = ObservationData::from_text(&d.to_text(), &mesh).unwrap();
        prop_assert_eq!(back.values(), d.values());
        prop_assert_eq!(back.spacing(), d.spacing());
    }

    #[test]
    fn penalty_addend_is_positive_semidefinite(seed in any::<u64>(), mu in 1e-3f64..1e8) {
        let mesh = Arc::new(build_uniform_triangulation(8).unwrap());
        let sp = cdanse::fem::MixedSpace::new(mesh.clone());
        let nodes = Arc::new(observation_nodes(&mesh, 4).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = ObservationData::sample(&sp, nodes.clone(), &random_vec(&mut rng, sp.velocity_dof_count(), 1.0)).unwrap();
        let s = build_sampling_operator(&sp, &nodes);
        let (p, _) = nudging_contribution(&s, &build_coarse_mass(&nodes), mu, &data).unwrap();
        prop_assert!(p.is_symmetric(1e-14));
        for _ in 0..5 {
            let v = random_vec(&mut rng, sp.velocity_dof_count(), 1.0);
            prop_assert!(p.quad_form(&v) >= -1e-12 * mu * euclid(&v).powi(2));
        }
    }
}

#[test]
fn direct_enforcement_is_exact_and_idempotent() {
    let mesh = Arc::new(build_uniform_triangulation(16).unwrap());
    let sp = cdanse::fem::MixedSpace::new(mesh.clone());
    let nodes = Arc::new(observation_nodes(&mesh, 4).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut v = random_vec(&mut rng, sp.velocity_dof_count(), 1.0);
    for (d, val) in sp.dirichlet_values(1.0) {
        v[d] = val;
    }
    let data = ObservationData::sample(&sp, nodes.clone(), &v).unwrap();
    let mut once = Constraints::dirichlet(&sp, 1.0);
    apply_direct_enforcement(&mut once, &sp, 1.0, &data, false).unwrap();
    let mut twice = once.clone();
    apply_direct_enforcement(&mut twice, &sp, 1.0, &data, false).unwrap();
    assert_eq!(once.mask(), twice.mask());
    assert_eq!(once.values(), twice.values());

    // a solver step honours the observations exactly
    let problem = cdanse::solvers::Problem::new(Arc::new(sp.clone()), 0.01).unwrap();
    let mut cfg = cdanse::solvers::SolverConfig::new(cdanse::solvers::Method::Picard, 100.0);
    cfg.nudging = cdanse::cda::NudgingConfig::direct();
    let next = cdanse::solvers::picard_step(&problem, &State::zero(&sp), &cfg, Some(&data)).unwrap();
    for (&vtx, val) in nodes.fine_vertex_indices().iter().zip(data.values()) {
        if !mesh.vertex_tag(vtx).is_boundary() {
            assert_eq!(next.velocity[sp.velocity_dof(0, vtx)], val[0]);
            assert_eq!(next.velocity[sp.velocity_dof(1, vtx)], val[1]);
        }
    }

    let mut bad = data.values().to_vec();
    bad[0][0] += 1.0;
    let bad = ObservationData::new(nodes, bad).unwrap();
    let mut c = Constraints::dirichlet(&sp, 1.0);
    assert!(apply_direct_enforcement(&mut c, &sp, 1.0, &bad, true).is_err());
}

#[test]
fn interpolation_constants_are_stable() {
    let mesh = build_uniform_triangulation(64).unwrap();
    let pi = std::f64::consts::PI;
    type Field = (Box<dyn Fn([f64; 2]) -> f64>, Box<dyn Fn([f64; 2]) -> [f64; 2]>);
    let smooth = || -> Vec<Field> {
        vec![
            (
                Box::new(|p: [f64; 2]| p[0] * p[0] * p[1] - p[1] * p[1] * p[1]),
                Box::new(|p: [f64; 2]| [2.0 * p[0] * p[1], p[0] * p[0] - 3.0 * p[1] * p[1]]),
            ),
            (
                Box::new(move |p: [f64; 2]| (pi * p[0]).sin() * (2.0 * pi * p[1]).cos()),
                Box::new(move |p: [f64; 2]| {
                    [
                        pi * (pi * p[0]).cos() * (2.0 * pi * p[1]).cos(),
                        -2.0 * pi * (pi * p[0]).sin() * (2.0 * pi * p[1]).sin(),
                    ]
                }),
            ),
        ]
    };
    // the constant is a supremum over fields; the family oscillating on the
    // observation scale attains it at every H
    let mut sup = Vec::new();
    let mut stability = Vec::new();
    for m in [4usize, 8, 16, 32] {
        let k = pi * m as f64;
        let mut fields = smooth();
        fields.push((
            Box::new(move |p: [f64; 2]| (k * p[0]).sin() * (k * p[1]).sin()),
            Box::new(move |p: [f64; 2]| [k * (k * p[0]).cos() * (k * p[1]).sin(), k * (k * p[0]).sin() * (k * p[1]).cos()]),
        ));
        let nodes = observation_nodes(&mesh, m).unwrap();
        let est: Vec<_> = fields.iter().map(|(v, g)| estimate_interpolation(&mesh, &nodes, v, g)).collect();
        sup.push(est.iter().map(|e| e.error_constant()).fold(0.0, f64::max));
        stability.push(est.iter().map(|e| e.stability_constant()).fold(0.0, f64::max));
    }
    let c_hat = sup[0];
    for c in &sup {
        assert!((c / c_hat - 1.0).abs() <= 0.2, "measured constants {sup:?}");
    }
    let c2_hat = stability[0];
    assert!(c2_hat <= 2.0);
    for c in &stability {
        assert!(*c <= 1.2 * c2_hat, "stability constants {stability:?}");
    }
}

#[test]
fn star_column_matches_its_parts() {
    let problem = cdanse::solvers::Problem::cavity(8, 0.01).unwrap();
    let sp = problem.space().clone();
    let reference = cdanse::solvers::reference_solution(sp.clone(), &[100.0], 1.0).unwrap();
    let nodes = Arc::new(observation_nodes(sp.mesh(), 4).unwrap());
    let data = ObservationData::sample(&sp, nodes, &reference.velocity).unwrap();
    let mut cfg = cdanse::solvers::SolverConfig::new(cdanse::solvers::Method::Picard, 100.0);
    cfg.nudging = cdanse::cda::NudgingConfig::direct();
    let res = cdanse::solvers::solve_nonlinear(&problem, &cfg, Some(&data), Some(&reference), None).unwrap();
    let recs = IterationTrace::records_from_csv(&res.trace.to_csv()).unwrap();
    for r in &recs {
        let s = star_from_parts(r.err_h1.unwrap(), r.err_l2.unwrap(), 0.25);
        assert_eq!(r.err_star.unwrap(), s);
    }
}
