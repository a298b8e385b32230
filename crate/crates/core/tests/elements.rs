use anidwr::elements::{gauss_rule, make_element, Bilinear};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = [f64; 2]> {
    (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(x, y)| [x, y])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn partition_of_unity(p1 in 1usize..=4, p2 in 1usize..=4, x in unit()) {
        let e = make_element::<f64>(p1, p2);
        let b = e.eval_basis(x);
        let s: f64 = b.values.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        for d in 0..2 {
            let g: f64 = b.grads.iter().map(|g| g[d]).sum();
            prop_assert!(g.abs() < 1e-10);
        }
        for h in 0..3 {
            let v: f64 = b.hessians.iter().map(|v| v[h]).sum();
            prop_assert!(v.abs() < 1e-8);
        }
    }

    // interpolation is exact on Q_{p1,p2}
    #[test]
    fn interpolation_reproduces_tensor_polynomials(
        p in 1usize..=3,
        c in prop::collection::vec(-3.0f64..3.0, 16),
        x in unit(),
    ) {
        let e = make_element::<f64>(p, p);
        let f = |y: [f64; 2]| {
            let mut s = 0.0;
            for a in 0..=p {
                for b in 0..=p {
                    s += c[a * 4 + b] * y[0].powi(a as i32) * y[1].powi(b as i32);
                }
            }
            s
        };
        let coeffs = e.interpolate(f);
        prop_assert!((e.evaluate(&coeffs, x) - f(x)).abs() < 1e-11);
    }

    #[test]
    fn gauss_rule_is_exact(n in 1usize..=5, a in 0usize..10, b in 0usize..10) {
        prop_assume!(a < 2 * n && b < 2 * n);
        let q = gauss_rule::<f64>(n);
        let s: f64 = q
            .points
            .iter()
            .zip(&q.weights)
            .map(|(x, w)| w * x[0].powi(a as i32) * x[1].powi(b as i32))
            .sum();
        let exact = 1.0 / ((a + 1) * (b + 1)) as f64;
        prop_assert!((s - exact).abs() < 1e-13);
    }

    // perturbed rectangles stay convex, so the map is invertible
    #[test]
    fn bilinear_inverse_roundtrip(
        h in (0.1f64..2.0, 0.1f64..2.0),
        jitter in prop::collection::vec(-0.2f64..0.2, 8),
        x in unit(),
    ) {
        let (hx, hy) = h;
        let j = |k: usize, s: f64| jitter[k] * s;
        let g = Bilinear::new([
            [j(0, hx), j(1, hy)],
            [hx + j(2, hx), j(3, hy)],
            [hx + j(4, hx), hy + j(5, hy)],
            [j(6, hx), hy + j(7, hy)],
        ]);
        prop_assert!(g.det(x) > 0.0);
        let back = g.inverse(g.map(x));
        prop_assert!((back[0] - x[0]).abs() < 1e-9 && (back[1] - x[1]).abs() < 1e-9, "{back:?} vs {x:?}");
    }
}
