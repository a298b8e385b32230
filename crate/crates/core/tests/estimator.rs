use anidwr::estimator::{
    adjoint_weights, effectivity, estimate, galerkin_orthogonality, primal_weights, EstimatorTotals,
};
use anidwr::mesh::{build_hemker_mesh, build_rect_mesh, Mesh, Obstacle, RefinementFlags};
use anidwr::problem::{
    constant_problem, hemker_problem, interior_layer_problem, ConstantData, ExactSolution,
    GoalFunctional, GoalKind, ProblemSpec,
};
use anidwr::solver::{Discretization, GoalContext, Settings};
use anidwr::time::TimePartition;
use anidwr::transfer::Operators;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn settings(p: usize, r: usize) -> Settings<f64> {
    Settings { p, r, delta0: 0.1 }
}

fn refined_unit_pattern() -> Mesh<f64> {
    let mut mesh = build_rect_mesh([[0.0, 0.0], [1.0, 1.0]], 1, 1, false).unwrap();
    let mut f = RefinementFlags::new();
    for c in mesh.leaves() {
        f.refine_both(c);
    }
    mesh.refine_in_place(&f);
    mesh
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn effectivity_reproduces_tabulated_loop_one() {
    let t = EstimatorTotals {
        eta_tau: 2.584e-3f64,
        eta_hx: 6.143e-3,
        eta_hy: 9.954e-3,
        eta_h: 1.9008e-2,
        eta_he: 0.0,
    };
    let (iso, aniso) = effectivity(&t, 5.333e-2);
    assert!((aniso.unwrap() - 0.35).abs() < 0.005);
    let (iso2, _) = effectivity(&t, 5.3333e-2);
    assert!((iso2.unwrap() - 0.405).abs() < 0.005);
    assert!(iso.is_some());
    let exact = EstimatorTotals {
        eta_tau: 0.25,
        eta_hx: 0.5,
        eta_hy: 0.25,
        eta_h: 0.75,
        eta_he: 0.0,
    };
    let (i, a) = effectivity(&exact, 1.0);
    assert_eq!(i, Some(1.0));
    assert_eq!(a, Some(1.0));
    assert_eq!(effectivity(&exact, 0.0), (None, None));
}

#[test]
fn weights_vanish_on_the_primal_space() {
    let ops = Operators::<f64>::new(1);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let coarse: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = ops.embed.mul_vec(&coarse);
    let w = adjoint_weights(&ops, &z);
    for j in 0..z.len() {
        assert!((w.rz[j] - z[j]).abs() < 1e-14);
        assert!((w.riz[0][j] - z[j]).abs() < 1e-14);
        assert!((w.riz[1][j] - z[j]).abs() < 1e-14);
        assert!(w.ez[j].abs() < 1e-14);
    }
    let pw = primal_weights(&ops, &z, &z);
    for v in pw.iso.iter().chain(&pw.dir[0]).chain(&pw.dir[1]).chain(&pw.rem) {
        assert!(v.abs() < 1e-14);
    }
    // a field varying only in x has no y-directional weight
    let fx: Vec<f64> = (0..9).map(|k| ((k % 3) as f64 * 0.5).powi(2)).collect();
    let w = adjoint_weights(&ops, &fx);
    for j in 0..9 {
        assert!((w.riz[1][j] - fx[j]).abs() < 1e-14);
        assert!(w.ez[j].abs() < 1e-14);
    }
}

fn check_identities(disc: &Discretization<'_, f64>, label: &str) {
    let u = disc.solve_primal().unwrap();
    let goal = GoalContext::new(disc, &u).unwrap();
    let z = disc.solve_adjoint(&goal, &u).unwrap();
    let field = estimate(disc, &goal, &u, &z).unwrap();
    let t = field.totals;
    let scale = t.eta_h.abs() + t.eta_hx.abs() + t.eta_hy.abs() + t.eta_he.abs();
    assert!(
        (t.eta_h - t.split_sum()).abs() <= 1e-12 * scale,
        "{label}: splitting {t:?}"
    );
    for k in 0..field.n_cells() {
        for n in 0..field.n_slabs {
            let i = field.index(n, k);
            let s = field.eta_dir[0][i] + field.eta_dir[1][i] + field.eta_rem[i];
            let m = field.eta_iso[i].abs() + field.eta_dir[0][i].abs() + field.eta_dir[1][i].abs();
            assert!((field.eta_iso[i] - s).abs() <= 1e-12 * m.max(1e-300), "{label}");
        }
    }
    let hx: f64 = field.cell_dir(0).iter().sum();
    assert!(close(hx, t.eta_hx, 1e-12), "{label}");
    let tau: f64 = field.slab_tau().iter().sum();
    assert!((tau - t.eta_tau).abs() <= 1e-12 * t.eta_tau.abs().max(1e-300), "{label}");
    let o = galerkin_orthogonality(disc, &goal, &u, &z).unwrap();
    assert!(o.primal < 1e-8, "{label}: primal orthogonality {}", o.primal);
    assert!(o.adjoint < 1e-8, "{label}: adjoint orthogonality {}", o.adjoint);
}

#[test]
fn identities_and_orthogonality_on_interior_layer() {
    let prob = interior_layer_problem(1e-4);
    let mesh = refined_unit_pattern();
    let part = TimePartition::uniform(1.0, 6).unwrap();
    for (p, r) in [(1, 0), (1, 1)] {
        let disc = Discretization::new(&mesh, &prob, part.clone(), settings(p, r)).unwrap();
        check_identities(&disc, &format!("interior layer p={p} r={r}"));
    }
}

#[test]
fn identities_and_orthogonality_with_hanging_nodes() {
    let mut mesh = build_rect_mesh([[0.0, 0.0], [1.0, 1.0]], 3, 3, true).unwrap();
    let mut f = RefinementFlags::new();
    f.refine(mesh.leaves()[4], 0);
    f.refine_both(mesh.leaves()[0]);
    mesh.refine_in_place(&f);
    let prob = constant_problem(ConstantData {
        epsilon: 1e-2,
        b: [1.0, 0.3],
        alpha: 0.5,
        source: 1.0,
        boundary: 0.0,
        initial: 0.5,
        t_end: 1.0,
        stationary: false,
    });
    let part = TimePartition::from_points(vec![0.0, 0.3, 0.5, 1.0]).unwrap();
    let disc = Discretization::new(&mesh, &prob, part, settings(1, 1)).unwrap();
    assert!(!disc.primal.dofs.constraints.is_empty());
    check_identities(&disc, "constant data, hanging nodes");
}

#[test]
fn identities_and_orthogonality_on_hemker() {
    let mesh = build_hemker_mesh::<f64>(Obstacle::Square);
    let prob = hemker_problem(true, Obstacle::Square, 1e-2);
    let part = TimePartition::uniform(1.0, 1).unwrap();
    let disc = Discretization::new(&mesh, &prob, part, settings(1, 0)).unwrap();
    check_identities(&disc, "stationary hemker");
    let prob = hemker_problem(false, Obstacle::Square, 1e-2);
    let part = TimePartition::uniform(10.0, 4).unwrap();
    let disc = Discretization::new(&mesh, &prob, part, settings(1, 0)).unwrap();
    check_identities(&disc, "transient hemker");
}

#[test]
fn temporal_estimator_vanishes_for_steady_solutions() {
    let mesh = build_rect_mesh([[0.0, 0.0], [1.0, 1.0]], 4, 4, true).unwrap();
    let prob = constant_problem(ConstantData {
        epsilon: 1e-2,
        b: [1.0, 0.5],
        alpha: 1.0,
        source: 2.0,
        boundary: 2.0,
        initial: 2.0,
        t_end: 1.0,
        stationary: false,
    });
    let part = TimePartition::uniform(1.0, 4).unwrap();
    for r in [0, 1] {
        let disc = Discretization::new(&mesh, &prob, part.clone(), settings(1, r)).unwrap();
        let u = disc.solve_primal().unwrap();
        let goal = GoalContext::new(&disc, &u).unwrap();
        let z = disc.solve_adjoint(&goal, &u).unwrap();
        let field = estimate(&disc, &goal, &u, &z).unwrap();
        assert!(field.totals.eta_tau.abs() < 1e-10, "{:?}", field.totals);
        // u is exact, so every spatial primal weight vanishes and the
        // residual is zero
        assert!(field.totals.eta_h.abs() < 1e-10, "{:?}", field.totals);
    }
}

#[test]
fn zero_data_gives_zero_estimators() {
    let mesh = build_rect_mesh([[0.0, 0.0], [1.0, 1.0]], 3, 3, true).unwrap();
    let prob = constant_problem(ConstantData {
        source: 0.0,
        boundary: 0.0,
        initial: 0.0,
        ..ConstantData::default()
    });
    let part = TimePartition::uniform(1.0, 3).unwrap();
    let disc = Discretization::new(&mesh, &prob, part, settings(1, 0)).unwrap();
    let u = disc.solve_primal().unwrap();
    let goal = GoalContext::new(&disc, &u).unwrap();
    let z = disc.solve_adjoint(&goal, &u).unwrap();
    let t = estimate(&disc, &goal, &u, &z).unwrap().totals;
    for v in [t.eta_tau, t.eta_h, t.eta_hx, t.eta_hy, t.eta_he] {
        assert_eq!(v, 0.0);
    }
}

#[test]
fn estimators_scale_with_the_goal() {
    let mesh = refined_unit_pattern();
    let base = interior_layer_problem(1e-3);
    let part = TimePartition::uniform(1.0, 4).unwrap();
    let run = |prob: &ProblemSpec<f64>| {
        let disc = Discretization::new(&mesh, prob, part.clone(), settings(1, 0)).unwrap();
        let u = disc.solve_primal().unwrap();
        let goal = GoalContext::new(&disc, &u).unwrap();
        let z = disc.solve_adjoint(&goal, &u).unwrap();
        let t = estimate(&disc, &goal, &u, &z).unwrap().totals;
        (t, goal.error(&disc, &u).unwrap())
    };
    let (t1, e1) = run(&base);
    let mut scaled = base.clone();
    scaled.goal.scale = 3.0;
    let (t3, e3) = run(&scaled);
    for (a, b) in [
        (t1.eta_tau, t3.eta_tau),
        (t1.eta_h, t3.eta_h),
        (t1.eta_hx, t3.eta_hx),
        (t1.eta_hy, t3.eta_hy),
        (e1, e3),
    ] {
        assert!(close(3.0 * a, b, 1e-12), "{a} {b}");
    }
    let (i1, a1) = effectivity(&t1, e1);
    let (i3, a3) = effectivity(&t3, e3);
    assert!((i1.unwrap() - i3.unwrap()).abs() < 1e-13);
    assert!((a1.unwrap() - a3.unwrap()).abs() < 1e-13);
}

#[test]
fn layer_in_x_loads_the_x_indicator() {
    // boundary layer at x = 1 of −εu'' + u' = 1, constant in y
    let eps = 2e-2;
    let layer = move |x: f64| x - ((x - 1.0) / eps).exp();
    let mut prob = constant_problem(ConstantData {
        epsilon: eps,
        b: [1.0, 0.0],
        alpha: 0.0,
        stationary: true,
        ..ConstantData::default()
    });
    prob.f = Arc::new(|_, _| 1.0);
    prob.dirichlet = Arc::new(move |x, _| layer(x[0]));
    prob.exact = Some(ExactSolution {
        value: Arc::new(move |x, _| layer(x[0])),
        grad: Arc::new(move |x, _| [1.0 - ((x[0] - 1.0) / eps).exp() / eps, 0.0]),
    });
    prob.goal = GoalFunctional::new(GoalKind::L2L2);
    let mesh = build_rect_mesh([[0.0, 0.0], [1.0, 1.0]], 8, 8, true).unwrap();
    let part = TimePartition::uniform(1.0, 1).unwrap();
    let run = |delta0: f64| {
        let s = Settings { p: 1, r: 0, delta0 };
        let disc = Discretization::new(&mesh, &prob, part.clone(), s).unwrap();
        let u = disc.solve_primal().unwrap();
        let goal = GoalContext::new(&disc, &u).unwrap();
        let z = disc.solve_adjoint(&goal, &u).unwrap();
        estimate(&disc, &goal, &u, &z).unwrap().totals
    };
    let t = run(0.0);
    assert!(t.eta_hx.abs() > 10.0 * t.eta_hy.abs(), "{t:?}");
    // the stabilization terms are shared between both directions
    let t = run(0.1);
    assert!(t.eta_hx.abs() > 2.0 * t.eta_hy.abs(), "{t:?}");
}
