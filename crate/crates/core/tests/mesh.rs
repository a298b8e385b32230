use anidwr::elements::{gauss_rule, map_frame};
use anidwr::mesh::{
    build_hemker_mesh, build_rect_mesh, refine, DofHandler, Mesh, Obstacle, PatchDescriptor,
    RefinementFlags,
};
use proptest::prelude::*;

fn unit() -> Mesh<f64> {
    build_rect_mesh::<f64>([[0.0, 0.0], [1.0, 1.0]], 1, 1, true).unwrap()
}

#[test]
fn rect_mesh_counts() {
    let m = build_rect_mesh::<f64>([[0.0, 0.0], [1.0, 1.0]], 2, 2, true).unwrap();
    assert_eq!(m.n_leaves(), 4);
    assert_eq!(m.vertices.len(), 9);
    assert_eq!(unit().aspect_ratio_max(), 1.0);

    let m = build_rect_mesh::<f64>([[-3.0, -3.0], [8.0, 3.0]], 11, 6, true).unwrap();
    assert_eq!(m.n_leaves(), 66);
    for c in m.leaves() {
        assert!((m.area(c) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn degenerate_rect_is_rejected() {
    assert!(build_rect_mesh::<f64>([[0.0, 0.0], [1.0, 0.0]], 1, 1, true).is_err());
    assert!(build_rect_mesh::<f64>([[0.0, 0.0], [1.0, 1.0]], 0, 1, true).is_err());
}

#[test]
fn unstructured_pattern_covers_square() {
    let m = build_rect_mesh::<f64>([[0.0, 0.0], [1.0, 1.0]], 1, 1, false).unwrap();
    assert_eq!(m.n_leaves(), 10);
    assert!((m.total_area() - 1.0).abs() < 1e-14);
    let m = build_rect_mesh::<f64>([[0.0, 0.0], [2.0, 1.0]], 2, 1, false).unwrap();
    assert!((m.total_area() - 2.0).abs() < 1e-14);
    assert!(m.is_one_irregular());
}

#[test]
fn single_direction_splits() {
    let m = unit();
    let mut f = RefinementFlags::new();
    f.refine(0, 0);
    let m1 = refine(&m, &f);
    let leaves = m1.leaves();
    assert_eq!(leaves.len(), 2);
    for &c in &leaves {
        assert_eq!(m1.cells[c].levels, [1, 0]);
    }
    assert!((m1.aspect_ratio_max() - 2.0).abs() < 1e-12);

    let mut f = RefinementFlags::new();
    f.refine_both(0);
    let m2 = refine(&m, &f);
    assert_eq!(m2.n_leaves(), 4);
    assert!((m2.aspect_ratio_max() - 1.0).abs() < 1e-12);
}

#[test]
fn three_x_splits_give_aspect_ratio_eight() {
    let mut m = unit();
    for _ in 0..3 {
        let mut f = RefinementFlags::new();
        for c in m.leaves() {
            f.refine(c, 0);
        }
        m.refine_in_place(&f);
    }
    assert_eq!(m.n_leaves(), 8);
    assert!((m.aspect_ratio_max() - 8.0).abs() < 1e-12);
}

#[test]
fn closure_propagates_directional_refinement() {
    let mut m = build_rect_mesh::<f64>([[0.0, 0.0], [2.0, 1.0]], 2, 1, true).unwrap();
    let left = 0;
    let mut f = RefinementFlags::new();
    f.refine(left, 0);
    m.refine_in_place(&f);
    // refine the left child touching the right cell once more in x
    let touching = *m
        .leaves()
        .iter()
        .filter(|&&c| m.cells[c].root == left)
        .max_by(|&&a, &&b| {
            let ca = m.geometry(a).map([0.5, 0.5])[0];
            let cb = m.geometry(b).map([0.5, 0.5])[0];
            ca.partial_cmp(&cb).unwrap()
        })
        .unwrap();
    let mut f = RefinementFlags::new();
    f.refine(touching, 0);
    m.refine_in_place(&f);
    assert!(m.is_one_irregular());
    let right: Vec<usize> = m.leaves().into_iter().filter(|&c| m.cells[c].root == 1).collect();
    assert_eq!(right.len(), 2);
    for c in right {
        assert_eq!(m.cells[c].levels, [1, 0]);
    }
}

#[test]
fn patch_descriptors() {
    let m = unit();
    assert_eq!(m.patch_of(0), PatchDescriptor::None);
    let mut f = RefinementFlags::new();
    f.refine_both(0);
    let m1 = refine(&m, &f);
    assert!(matches!(m1.patch_of(m1.leaves()[0]), PatchDescriptor::Isotropic { .. }));
    let mut f = RefinementFlags::new();
    f.refine(0, 0);
    let m2 = refine(&m, &f);
    assert!(matches!(
        m2.patch_of(m2.leaves()[0]),
        PatchDescriptor::Directional { dir: 0, .. }
    ));
}

fn hang_one(p: usize) -> (Mesh<f64>, DofHandler<f64>) {
    let mut m = build_rect_mesh::<f64>([[0.0, 0.0], [2.0, 1.0]], 2, 1, true).unwrap();
    let mut f = RefinementFlags::new();
    f.refine(0, 1);
    m.refine_in_place(&f);
    let d = DofHandler::new(&m, p);
    (m, d)
}

#[test]
fn linear_hanging_node_weights() {
    let (_, d) = hang_one(1);
    assert_eq!(d.constraints.len(), 1);
    let c = &d.constraints[0];
    assert_eq!(d.positions[c.constrained], [1.0, 0.5]);
    assert_eq!(c.weights, vec![0.5, 0.5]);
}

#[test]
fn quadratic_hanging_node_weights() {
    let (_, d) = hang_one(2);
    // constrained DoF at facet parameter 1/4 measured from y = 0
    let c = d
        .constraints
        .iter()
        .find(|c| (d.positions[c.constrained][1] - 0.25).abs() < 1e-14)
        .expect("quarter-point constraint");
    let mut w: Vec<(f64, f64)> = c
        .masters
        .iter()
        .zip(&c.weights)
        .map(|(&m, &w)| (d.positions[m][1], w))
        .collect();
    w.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let expect = [(0.0, 3.0 / 8.0), (0.5, 3.0 / 4.0), (1.0, -1.0 / 8.0)];
    for (got, want) in w.iter().zip(expect) {
        assert!((got.0 - want.0).abs() < 1e-14);
        assert!((got.1 - want.1).abs() < 1e-14);
    }
}

#[test]
fn conforming_mesh_has_no_constraints() {
    let m = build_rect_mesh::<f64>([[0.0, 0.0], [1.0, 1.0]], 3, 2, true).unwrap();
    assert!(DofHandler::new(&m, 2).constraints.is_empty());
}

#[test]
fn hemker_meshes() {
    let sq = build_hemker_mesh::<f64>(Obstacle::Square);
    assert!((sq.total_area() - 62.0).abs() < 1e-12);

    let mut c = build_hemker_mesh::<f64>(Obstacle::Circle);
    let q = gauss_rule::<f64>(3);
    for l in c.leaves() {
        let frame = map_frame(&c.geometry(l), &q).unwrap();
        assert!(frame.dets.iter().all(|&d| d > 0.0));
    }
    let old = c.vertices.len();
    let mut f = RefinementFlags::new();
    for l in c.leaves() {
        f.refine_both(l);
    }
    c.refine_in_place(&f);
    let mut on_circle = 0;
    for v in &c.vertices[old..] {
        let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if r < 1.1 {
            assert!((r - 1.0).abs() < 1e-12);
            on_circle += 1;
        }
    }
    assert_eq!(on_circle, 8);
    for l in c.leaves() {
        let frame = map_frame(&c.geometry(l), &q).unwrap();
        assert!(frame.dets.iter().all(|&d| d > 0.0));
    }
}

#[test]
fn only_x_flags_keep_y_levels() {
    let mut m = build_rect_mesh::<f64>([[0.0, 0.0], [1.0, 1.0]], 3, 3, true).unwrap();
    let mut f = RefinementFlags::new();
    f.refine(4, 0);
    f.refine(0, 0);
    m.refine_in_place(&f);
    let mut f = RefinementFlags::new();
    for c in m.leaves().into_iter().step_by(2) {
        f.refine(c, 0);
    }
    m.refine_in_place(&f);
    for c in m.leaves() {
        assert_eq!(m.cells[c].levels[1], 0);
    }
}

#[test]
fn coarsening_merges_sibling_groups() {
    let mut m = build_rect_mesh::<f64>([[0.0, 0.0], [1.0, 1.0]], 2, 2, true).unwrap();
    let mut f = RefinementFlags::new();
    f.refine_both(0);
    m.refine_in_place(&f);
    assert_eq!(m.n_leaves(), 7);
    let mut f = RefinementFlags::new();
    for c in m.leaves() {
        if m.cells[c].parent.is_some() {
            f.coarsen(c);
        }
    }
    m.refine_in_place(&f);
    assert_eq!(m.n_leaves(), 4);
    assert!((m.total_area() - 1.0).abs() < 1e-14);
}

/// Random flags on a random coarse grid, applied a few times.
fn random_mesh(nx: usize, ny: usize, structured: bool, rounds: Vec<Vec<(usize, u8)>>) -> Mesh<f64> {
    let mut m = build_rect_mesh::<f64>([[0.0, 0.0], [1.5, 1.0]], nx, ny, structured).unwrap();
    for round in rounds {
        let leaves = m.leaves();
        let mut f = RefinementFlags::new();
        for (pick, kind) in round {
            let c = leaves[pick % leaves.len()];
            match kind % 4 {
                0 => f.refine(c, 0),
                1 => f.refine(c, 1),
                2 => f.refine_both(c),
                _ => f.coarsen(c),
            }
        }
        m.refine_in_place(&f);
    }
    m
}

fn mesh_strategy() -> impl Strategy<Value = Mesh<f64>> {
    (
        1usize..4,
        1usize..3,
        any::<bool>(),
        prop::collection::vec(prop::collection::vec((any::<usize>(), any::<u8>()), 1..6), 1..4),
    )
        .prop_map(|(nx, ny, s, r)| random_mesh(nx, ny, s, r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn linear_functions_pass_the_patch_test(
        m in mesh_strategy(),
        p in 1usize..3,
        a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
    ) {
        let d = DofHandler::new(&m, p);
        let f = |x: [f64; 2]| a + b * x[0] + c * x[1];
        let raw: Vec<f64> = d.positions.iter().map(|&x| f(x)).collect();
        let con = d.interpolate(f);
        for (x, y) in raw.iter().zip(&con) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for c in &d.constraints {
            let s: f64 = c.weights.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-14);
            for mm in &c.masters {
                prop_assert!(d.constraint_of[*mm].is_none());
            }
        }
    }

    #[test]
    fn refinement_keeps_area_and_regularity(m in mesh_strategy()) {
        prop_assert!(((m.total_area() - 1.5) / 1.5).abs() < 1e-12);
        prop_assert!(m.is_one_irregular());
        for c in m.leaves() {
            let cell = &m.cells[c];
            if let Some(p) = cell.parent {
                let n = m.cells[p].children.as_ref().unwrap().1.len();
                prop_assert!(n == 2 || n == 4);
            }
            let a = m.area(c);
            prop_assert!(a > 0.0 && a.is_finite());
            let r = m.aspect_ratio(c);
            prop_assert!(r >= 1.0 && r.is_finite());
        }
    }

    #[test]
    fn closure_is_idempotent(m in mesh_strategy()) {
        let mut again = m.clone();
        again.closure();
        prop_assert_eq!(again.leaves(), m.leaves());
    }

    #[test]
    fn split_increments_one_level(m in mesh_strategy()) {
        for c in m.leaves() {
            if let Some(p) = m.cells[c].parent {
                let (lp, lc) = (m.cells[p].levels, m.cells[c].levels);
                let inc = [lc[0] - lp[0], lc[1] - lp[1]];
                prop_assert!(inc == [1, 0] || inc == [0, 1] || inc == [1, 1]);
            }
        }
    }
}
