//! Tensor-product Lagrange elements on Gauss–Lobatto lattices, Gauss quadrature
//! and the geometry of bilinear cell maps.

use crate::real::{Point, Real};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-positive mapping Jacobian {det:e} at reference point ({x:.4}, {y:.4})")]
    NonPositiveJacobian { det: f64, x: f64, y: f64 },
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
}

/// Gauss–Legendre nodes and weights on [0,1] (weights sum to 1).
pub fn gauss_legendre_1d<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "at least one Gauss point");
    let mut pts = vec![0.0f64; n];
    let mut wts = vec![0.0f64; n];
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        pts[n - 1 - i] = 0.5 * (1.0 + x);
        wts[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (
        pts.into_iter().map(T::of).collect(),
        wts.into_iter().map(T::of).collect(),
    )
}

/// Gauss–Lobatto nodes on [0,1]: endpoints plus the roots of P'_p.
/// Degree 0 gives the midpoint.
pub fn gauss_lobatto_1d<T: Real>(p: usize) -> Vec<T> {
    if p == 0 {
        return vec![T::of(0.5)];
    }
    let mut pts = vec![0.0f64; p + 1];
    pts[0] = -1.0;
    pts[p] = 1.0;
    for i in 1..p {
        let mut x = -(std::f64::consts::PI * i as f64 / p as f64).cos();
        for _ in 0..100 {
            // Newton on (1-x^2) P'_p(x), whose interior roots are the GL nodes.
            let (pn, _) = legendre(p, x);
            let (pm, _) = legendre(p - 1, x);
            let q = p as f64 * (pm - x * pn); // (1-x^2) P'_p
            let dq = -(p as f64) * (p as f64 + 1.0) * pn; // Legendre ODE
            let dx = q / dq;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        pts[i] = x;
    }
    let mut out: Vec<f64> = pts.iter().map(|x| 0.5 * (1.0 + x)).collect();
    // exact symmetry and exact midpoint
    for i in 0..=p / 2 {
        let a = 0.5 * (out[i] + 1.0 - out[p - i]);
        out[i] = a;
        out[p - i] = 1.0 - a;
    }
    if p % 2 == 0 {
        out[p / 2] = 0.5;
    }
    out.into_iter().map(T::of).collect()
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * n * (n + 1.0) * x.powi(n as i32 + 1)
    } else {
        n * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// One-dimensional Lagrange basis on a node set (barycentric form).
#[derive(Debug, Clone, PartialEq)]
pub struct Lagrange1d<T> {
    pub nodes: Vec<T>,
    bary: Vec<T>,
}

impl<T: Real> Lagrange1d<T> {
    pub fn new(nodes: Vec<T>) -> Self {
        let n = nodes.len();
        let bary = (0..n)
            .map(|j| {
                let mut d = T::one();
                for m in 0..n {
                    if m != j {
                        d *= nodes[j] - nodes[m];
                    }
                }
                T::one() / d
            })
            .collect();
        Self { nodes, bary }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of all basis polynomials at `x`.
    pub fn values(&self, x: T) -> Vec<T> {
        let n = self.nodes.len();
        (0..n)
            .map(|j| {
                let mut v = self.bary[j];
                for m in 0..n {
                    if m != j {
                        v *= x - self.nodes[m];
                    }
                }
                v
            })
            .collect()
    }

    /// Values, first and second derivatives of all basis polynomials at `x`.
    pub fn eval_all(&self, x: T) -> (Vec<T>, Vec<T>, Vec<T>) {
        let n = self.nodes.len();
        let mut v = vec![T::zero(); n];
        let mut d1 = vec![T::zero(); n];
        let mut d2 = vec![T::zero(); n];
        let diff: Vec<T> = self.nodes.iter().map(|&xm| x - xm).collect();
        for j in 0..n {
            let prod_except = |skip: &[usize]| -> T {
                let mut p = T::one();
                for (m, &dm) in diff.iter().enumerate() {
                    if m != j && !skip.contains(&m) {
                        p *= dm;
                    }
                }
                p
            };
            v[j] = self.bary[j] * prod_except(&[]);
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for k in 0..n {
                if k == j {
                    continue;
                }
                s1 += prod_except(&[k]);
                for l in 0..n {
                    if l == j || l == k {
                        continue;
                    }
                    s2 += prod_except(&[k, l]);
                }
            }
            d1[j] = self.bary[j] * s1;
            d2[j] = self.bary[j] * s2;
        }
        (v, d1, d2)
    }
}

/// Tensor-product Lagrange element Q_{p1,p2} on [0,1]² with Gauss–Lobatto nodes.
/// Local index of lattice node (i, j) is `j * (p1 + 1) + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceElement<T> {
    pub degrees: [usize; 2],
    pub basis: [Lagrange1d<T>; 2],
}

/// Basis values, reference gradients and Hessians `[xx, xy, yy]` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval<T> {
    pub values: Vec<T>,
    pub grads: Vec<[T; 2]>,
    pub hessians: Vec<[T; 3]>,
}

pub fn make_element<T: Real>(p1: usize, p2: usize) -> ReferenceElement<T> {
    ReferenceElement {
        degrees: [p1, p2],
        basis: [
            Lagrange1d::new(gauss_lobatto_1d(p1)),
            Lagrange1d::new(gauss_lobatto_1d(p2)),
        ],
    }
}

impl<T: Real> ReferenceElement<T> {
    pub fn isotropic(p: usize) -> Self {
        make_element(p, p)
    }

    pub fn n_dofs(&self) -> usize {
        (self.degrees[0] + 1) * (self.degrees[1] + 1)
    }

    pub fn node(&self, k: usize) -> Point<T> {
        let n1 = self.degrees[0] + 1;
        [self.basis[0].nodes[k % n1], self.basis[1].nodes[k / n1]]
    }

    pub fn nodes(&self) -> Vec<Point<T>> {
        (0..self.n_dofs()).map(|k| self.node(k)).collect()
    }

    pub fn values(&self, x: Point<T>) -> Vec<T> {
        let vx = self.basis[0].values(x[0]);
        let vy = self.basis[1].values(x[1]);
        let mut out = Vec::with_capacity(vx.len() * vy.len());
        for &b in &vy {
            for &a in &vx {
                out.push(a * b);
            }
        }
        out
    }

    pub fn eval_basis(&self, x: Point<T>) -> BasisEval<T> {
        let (vx, dx, ddx) = self.basis[0].eval_all(x[0]);
        let (vy, dy, ddy) = self.basis[1].eval_all(x[1]);
        let n = vx.len() * vy.len();
        let mut values = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        let mut hessians = Vec::with_capacity(n);
        for j in 0..vy.len() {
            for i in 0..vx.len() {
                values.push(vx[i] * vy[j]);
                grads.push([dx[i] * vy[j], vx[i] * dy[j]]);
                hessians.push([ddx[i] * vy[j], dx[i] * dy[j], vx[i] * ddy[j]]);
            }
        }
        BasisEval {
            values,
            grads,
            hessians,
        }
    }

    /// Nodal interpolation of a function on the reference square.
    pub fn interpolate(&self, f: impl Fn(Point<T>) -> T) -> Vec<T> {
        (0..self.n_dofs()).map(|k| f(self.node(k))).collect()
    }

    /// Evaluates a field with the given nodal coefficients.
    pub fn evaluate(&self, coeffs: &[T], x: Point<T>) -> T {
        self.values(x)
            .iter()
            .zip(coeffs)
            .map(|(&a, &b)| a * b)
            .sum()
    }
}

/// Tensor-product quadrature on [0,1]²; weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature<T> {
    pub points: Vec<Point<T>>,
    pub weights: Vec<T>,
}

pub fn gauss_rule<T: Real>(n: usize) -> Quadrature<T> {
    let (x, w) = gauss_legendre_1d::<T>(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    Quadrature { points, weights }
}

impl<T: Real> Quadrature<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Bilinear map of the reference square onto a quadrilateral with
/// counter-clockwise vertices `v[0..4]` (v0 at (0,0), v1 at (1,0), v2 at (1,1), v3 at (0,1)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bilinear<T> {
    pub v: [Point<T>; 4],
}

impl<T: Real> Bilinear<T> {
    pub fn new(v: [Point<T>; 4]) -> Self {
        Self { v }
    }

    pub fn map(&self, x: Point<T>) -> Point<T> {
        let (s, t) = (x[0], x[1]);
        let one = T::one();
        let w = [(one - s) * (one - t), s * (one - t), s * t, (one - s) * t];
        let mut out = [T::zero(); 2];
        for k in 0..4 {
            out[0] += w[k] * self.v[k][0];
            out[1] += w[k] * self.v[k][1];
        }
        out
    }

    /// `jac[i][a] = ∂x_i / ∂ξ_a`.
    pub fn jacobian(&self, x: Point<T>) -> [[T; 2]; 2] {
        let (s, t) = (x[0], x[1]);
        let one = T::one();
        let v = &self.v;
        let mut j = [[T::zero(); 2]; 2];
        for i in 0..2 {
            j[i][0] = (v[1][i] - v[0][i]) * (one - t) + (v[2][i] - v[3][i]) * t;
            j[i][1] = (v[3][i] - v[0][i]) * (one - s) + (v[2][i] - v[1][i]) * s;
        }
        j
    }

    /// The only nonzero second derivative of a bilinear map, ∂²x/∂ξ∂η.
    pub fn mixed_second(&self) -> Point<T> {
        let v = &self.v;
        [
            v[0][0] - v[1][0] + v[2][0] - v[3][0],
            v[0][1] - v[1][1] + v[2][1] - v[3][1],
        ]
    }

    pub fn det(&self, x: Point<T>) -> T {
        let j = self.jacobian(x);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    pub fn area(&self) -> T {
        // exact for bilinear maps: shoelace formula
        let v = &self.v;
        let mut a = T::zero();
        for k in 0..4 {
            let n = (k + 1) % 4;
            a += v[k][0] * v[n][1] - v[n][0] * v[k][1];
        }
        a * T::of(0.5)
    }

    /// Inverse map by Newton iteration; works for points outside the cell too
    /// as long as the bilinear extension stays invertible.
    pub fn inverse(&self, x: Point<T>) -> Point<T> {
        let mut xi = [T::of(0.5); 2];
        for _ in 0..50 {
            let y = self.map(xi);
            let r = [x[0] - y[0], x[1] - y[1]];
            let j = self.jacobian(xi);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() <= T::min_positive_value() {
                break;
            }
            let d0 = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            let d1 = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            xi[0] += d0;
            xi[1] += d1;
            if d0.abs() + d1.abs() <= T::eps() * T::of(4.0) * (T::one() + xi[0].abs() + xi[1].abs()) {
                break;
            }
        }
        xi
    }
}

/// Geometry of one cell evaluated at the points of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedFrame<T> {
    pub points: Vec<Point<T>>,
    pub jacobians: Vec<[[T; 2]; 2]>,
    /// `inv[a][i] = ∂ξ_a / ∂x_i`.
    pub inverses: Vec<[[T; 2]; 2]>,
    pub dets: Vec<T>,
    /// Quadrature weight times determinant.
    pub jxw: Vec<T>,
    pub mixed_second: Point<T>,
}

pub fn map_frame<T: Real>(
    cell: &Bilinear<T>,
    quad: &Quadrature<T>,
) -> Result<MappedFrame<T>, GeometryError> {
    let n = quad.len();
    let mut frame = MappedFrame {
        points: Vec::with_capacity(n),
        jacobians: Vec::with_capacity(n),
        inverses: Vec::with_capacity(n),
        dets: Vec::with_capacity(n),
        jxw: Vec::with_capacity(n),
        mixed_second: cell.mixed_second(),
    };
    for (q, &xq) in quad.points.iter().enumerate() {
        let j = cell.jacobian(xq);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !(det > T::zero()) {
            return Err(GeometryError::NonPositiveJacobian {
                det: det.as_f64(),
                x: xq[0].as_f64(),
                y: xq[1].as_f64(),
            });
        }
        let inv = [
            [j[1][1] / det, -j[0][1] / det],
            [-j[1][0] / det, j[0][0] / det],
        ];
        frame.points.push(cell.map(xq));
        frame.jacobians.push(j);
        frame.inverses.push(inv);
        frame.dets.push(det);
        frame.jxw.push(det * quad.weights[q]);
    }
    Ok(frame)
}

impl<T: Real> MappedFrame<T> {
    /// Physical gradient `(∇T)^{-T} g_ref` at quadrature point `q`.
    #[inline]
    pub fn grad(&self, q: usize, g: [T; 2]) -> [T; 2] {
        let inv = &self.inverses[q];
        [
            inv[0][0] * g[0] + inv[1][0] * g[1],
            inv[0][1] * g[0] + inv[1][1] * g[1],
        ]
    }

    /// Physical Hessian `[xx, xy, yy]` from the reference Hessian and the
    /// already mapped physical gradient.
    #[inline]
    pub fn hessian(&self, q: usize, h: [T; 3], g_phys: [T; 2]) -> [T; 3] {
        let inv = &self.inverses[q];
        let m = self.mixed_second;
        // remove the curvature of the map from the mixed reference derivative
        let corr = g_phys[0] * m[0] + g_phys[1] * m[1];
        let hr = [[h[0], h[1] - corr], [h[1] - corr, h[2]]];
        let mut out = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                let mut s = T::zero();
                for a in 0..2 {
                    for b in 0..2 {
                        s += inv[a][i] * hr[a][b] * inv[b][k];
                    }
                }
                out[i][k] = s;
            }
        }
        [out[0][0], out[0][1], out[1][1]]
    }

    /// Physical Laplacian from the reference Hessian and physical gradient.
    #[inline]
    pub fn laplacian(&self, q: usize, h: [T; 3], g_phys: [T; 2]) -> T {
        let hp = self.hessian(q, h, g_phys);
        hp[0] + hp[2]
    }
}

/// Basis data of one element tabulated at the points of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTable<T> {
    pub n_dofs: usize,
    pub n_points: usize,
    /// `values[q * n_dofs + j]`
    pub values: Vec<T>,
    pub grads: Vec<[T; 2]>,
    pub hessians: Vec<[T; 3]>,
}

impl<T: Real> BasisTable<T> {
    pub fn new(elem: &ReferenceElement<T>, points: &[Point<T>]) -> Self {
        let n_dofs = elem.n_dofs();
        let mut values = Vec::with_capacity(n_dofs * points.len());
        let mut grads = Vec::with_capacity(n_dofs * points.len());
        let mut hessians = Vec::with_capacity(n_dofs * points.len());
        for &x in points {
            let e = elem.eval_basis(x);
            values.extend(e.values);
            grads.extend(e.grads);
            hessians.extend(e.hessians);
        }
        Self {
            n_dofs,
            n_points: points.len(),
            values,
            grads,
            hessians,
        }
    }
}

/// Physical basis values, gradients and Laplacians on one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalBasis<T> {
    pub n_dofs: usize,
    pub values: Vec<T>,
    pub grads: Vec<[T; 2]>,
    pub laplacians: Vec<T>,
}

impl<T: Real> PhysicalBasis<T> {
    pub fn new(table: &BasisTable<T>, frame: &MappedFrame<T>) -> Self {
        let n = table.n_dofs * table.n_points;
        let mut grads = Vec::with_capacity(n);
        let mut laplacians = Vec::with_capacity(n);
        for q in 0..table.n_points {
            for j in 0..table.n_dofs {
                let k = q * table.n_dofs + j;
                let g = frame.grad(q, table.grads[k]);
                grads.push(g);
                laplacians.push(frame.laplacian(q, table.hessians[k], g));
            }
        }
        Self {
            n_dofs: table.n_dofs,
            values: table.values.clone(),
            grads,
            laplacians,
        }
    }

    /// Value, gradient and Laplacian of a field at quadrature point `q`.
    #[inline]
    pub fn field(&self, q: usize, c: &[T]) -> (T, [T; 2], T) {
        let base = q * self.n_dofs;
        let mut v = T::zero();
        let mut g = [T::zero(); 2];
        let mut l = T::zero();
        for j in 0..self.n_dofs {
            let cj = c[j];
            v += cj * self.values[base + j];
            g[0] += cj * self.grads[base + j][0];
            g[1] += cj * self.grads[base + j][1];
            l += cj * self.laplacians[base + j];
        }
        (v, g, l)
    }
}
