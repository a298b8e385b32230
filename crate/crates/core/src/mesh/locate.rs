use super::Mesh;
use crate::real::{Point, Real};

/// Bucket grid over leaf bounding boxes for point location.
#[derive(Debug, Clone)]
pub struct PointLocator<T> {
    lo: Point<T>,
    size: Point<T>,
    n: usize,
    buckets: Vec<Vec<usize>>,
}

impl<T: Real> PointLocator<T> {
    pub fn new(mesh: &Mesh<T>) -> Self {
        let leaves = mesh.leaves();
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        let boxes: Vec<(usize, [Point<T>; 2])> = leaves
            .iter()
            .map(|&c| {
                let mut a = [T::infinity(); 2];
                let mut b = [T::neg_infinity(); 2];
                for &v in &mesh.cells[c].vertices {
                    for d in 0..2 {
                        a[d] = a[d].min(mesh.vertices[v][d]);
                        b[d] = b[d].max(mesh.vertices[v][d]);
                    }
                }
                for d in 0..2 {
                    lo[d] = lo[d].min(a[d]);
                    hi[d] = hi[d].max(b[d]);
                }
                (c, [a, b])
            })
            .collect();
        let n = ((leaves.len() as f64).sqrt().ceil() as usize).max(1);
        let size = [
            (hi[0] - lo[0]) / T::of_usize(n),
            (hi[1] - lo[1]) / T::of_usize(n),
        ];
        let mut loc = Self {
            lo,
            size,
            n,
            buckets: vec![Vec::new(); n * n],
        };
        for (c, [a, b]) in boxes {
            let (i0, j0) = loc.bucket(a);
            let (i1, j1) = loc.bucket(b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * n + i].push(c);
                }
            }
        }
        loc
    }

    fn bucket(&self, x: Point<T>) -> (usize, usize) {
        let f = |d: usize| {
            let s = ((x[d] - self.lo[d]) / self.size[d]).floor();
            let s = s.max(T::zero()).min(T::of_usize(self.n - 1));
            s.to_usize().unwrap_or(0)
        };
        (f(0), f(1))
    }

    /// Leaf containing `x` and the reference coordinates of `x` in it.
    pub fn locate(&self, mesh: &Mesh<T>, x: Point<T>) -> Option<(usize, Point<T>)> {
        let (i, j) = self.bucket(x);
        let tol = T::of(1e-9);
        for &c in &self.buckets[j * self.n + i] {
            let xi = mesh.geometry(c).inverse(x);
            if xi.iter().all(|&s| s >= -tol && s <= T::one() + tol) {
                let clamp = |s: T| s.max(T::zero()).min(T::one());
                return Some((c, [clamp(xi[0]), clamp(xi[1])]));
            }
        }
        None
    }
}
