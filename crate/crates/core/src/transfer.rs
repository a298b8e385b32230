//! Restrictions, patch-wise higher-order recovery, directional interpolation
//! and the anisotropic remainder on the reference square.

use crate::elements::{gauss_lobatto_1d, make_element, Lagrange1d, ReferenceElement};
use crate::linalg::DenseMatrix;
use crate::mesh::{DofHandler, FacetNeighbor, Mesh, PatchDescriptor};
use crate::real::{Point, Real};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("expected degrees {expected:?}, got {got:?}")]
    Degree { expected: [usize; 2], got: [usize; 2] },
    #[error("patch is not an isotropic four-child patch")]
    NotIsotropic,
    #[error("coefficient count {got} does not match element size {expected}")]
    Length { expected: usize, got: usize },
}

/// Nodal coefficients of a Q_{p1,p2} function on the reference square.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalField<T> {
    pub degrees: [usize; 2],
    pub coeffs: Vec<T>,
}

impl<T: Real> LocalField<T> {
    pub fn new(degrees: [usize; 2], coeffs: Vec<T>) -> Result<Self, TransferError> {
        let n = (degrees[0] + 1) * (degrees[1] + 1);
        if coeffs.len() != n {
            return Err(TransferError::Length {
                expected: n,
                got: coeffs.len(),
            });
        }
        Ok(Self { degrees, coeffs })
    }

    pub fn interpolate(degrees: [usize; 2], f: impl Fn(Point<T>) -> T) -> Self {
        let e = make_element::<T>(degrees[0], degrees[1]);
        Self {
            degrees,
            coeffs: e.interpolate(f),
        }
    }

    pub fn element(&self) -> ReferenceElement<T> {
        make_element(self.degrees[0], self.degrees[1])
    }

    pub fn eval(&self, x: Point<T>) -> T {
        self.element().evaluate(&self.coeffs, x)
    }

    /// Nodal interpolation into another element (exact embedding if the
    /// target space contains this one).
    pub fn to_degrees(&self, degrees: [usize; 2]) -> Self {
        let m = transfer_matrix::<T>(self.degrees, degrees);
        Self {
            degrees,
            coeffs: m.mul_vec(&self.coeffs),
        }
    }

    fn combine(&self, other: &Self, a: T) -> Self {
        assert_eq!(self.degrees, other.degrees);
        Self {
            degrees: self.degrees,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&x, &y)| x + a * y)
                .collect(),
        }
    }
}

/// `M[t][s] = φ_s(N_t)`: interpolation of the `from` basis at the `to` lattice.
pub fn transfer_matrix<T: Real>(from: [usize; 2], to: [usize; 2]) -> DenseMatrix<T> {
    let src = make_element::<T>(from[0], from[1]);
    let dst = make_element::<T>(to[0], to[1]);
    let rows: Vec<Vec<T>> = dst.nodes().into_iter().map(|x| src.values(x)).collect();
    DenseMatrix::from_fn(dst.n_dofs(), src.n_dofs(), |t, s| rows[t][s])
}

fn check_iso<T>(v: &LocalField<T>) -> Result<usize, TransferError> {
    let [a, b] = v.degrees;
    if a != b || a % 2 != 0 || a == 0 {
        return Err(TransferError::Degree {
            expected: [2 * (a / 2).max(1), 2 * (a / 2).max(1)],
            got: v.degrees,
        });
    }
    Ok(a / 2)
}

/// R̂^{2p,p}: interpolation of a Q_{2p} field on the Q_p lattice.
pub fn restrict_iso<T: Real>(v: &LocalField<T>) -> Result<LocalField<T>, TransferError> {
    let p = check_iso(v)?;
    Ok(v.to_degrees([p, p]))
}

/// R̂_i^{2p,p}: keeps degree 2p in direction `i` (0 or 1) and reduces the other to p.
pub fn restrict_dir<T: Real>(i: usize, v: &LocalField<T>) -> Result<LocalField<T>, TransferError> {
    let p = check_iso(v)?;
    let mut d = [p, p];
    d[i] = 2 * p;
    Ok(v.to_degrees(d))
}

/// Ê^{2p} v = v + R̂v − R̂_1 v − R̂_2 v, returned in Q_{2p}.
pub fn remainder<T: Real>(v: &LocalField<T>) -> Result<LocalField<T>, TransferError> {
    let d = v.degrees;
    let r = restrict_iso(v)?.to_degrees(d);
    let r1 = restrict_dir(0, v)?.to_degrees(d);
    let r2 = restrict_dir(1, v)?.to_degrees(d);
    Ok(v.combine(&r, T::one())
        .combine(&r1, -T::one())
        .combine(&r2, -T::one()))
}

/// Child coefficient vectors of a patch, in the mesh's child position order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchField<T> {
    pub patch: PatchDescriptor,
    pub degree: usize,
    pub children: Vec<Vec<T>>,
}

/// Nodes of the union lattice of two children of degree p on [0,1].
fn union_nodes<T: Real>(p: usize) -> Vec<T> {
    let g: Vec<T> = gauss_lobatto_1d(p);
    let h = T::of(0.5);
    let mut n: Vec<T> = g.iter().map(|&x| x * h).collect();
    n.extend(g.iter().skip(1).map(|&x| h + x * h));
    n
}

/// I_{2h}^{(2p)}: the Q_{2p} function on the parent interpolating all child DoFs.
pub fn patch_interpolate<T: Real>(patch: &PatchField<T>) -> Result<LocalField<T>, TransferError> {
    if !matches!(patch.patch, PatchDescriptor::Isotropic { .. }) {
        return Err(TransferError::NotIsotropic);
    }
    let p = patch.degree;
    let n1 = p + 1;
    let nu = 2 * p + 1;
    // union lattice values
    let mut vals = vec![T::zero(); nu * nu];
    for jj in 0..nu {
        for ii in 0..nu {
            let (cx, i) = if ii <= p { (0, ii) } else { (1, ii - p) };
            let (cy, j) = if jj <= p { (0, jj) } else { (1, jj - p) };
            vals[jj * nu + ii] = patch.children[cy * 2 + cx][j * n1 + i];
        }
    }
    let basis = Lagrange1d::new(union_nodes::<T>(p));
    let target = make_element::<T>(2 * p, 2 * p);
    let coeffs = target
        .nodes()
        .into_iter()
        .map(|x| {
            let bx = basis.values(x[0]);
            let by = basis.values(x[1]);
            let mut s = T::zero();
            for jj in 0..nu {
                for ii in 0..nu {
                    s += bx[ii] * by[jj] * vals[jj * nu + ii];
                }
            }
            s
        })
        .collect();
    Ok(LocalField {
        degrees: [2 * p, 2 * p],
        coeffs,
    })
}

/// I_{2h,i}^{(2p)} = R_i ∘ I_{2h}^{(2p)} on the parent.
pub fn patch_interpolate_dir<T: Real>(
    i: usize,
    patch: &PatchField<T>,
) -> Result<LocalField<T>, TransferError> {
    restrict_dir(i, &patch_interpolate(patch)?)
}

/// Reference-level operator matrices acting on Q_{2p} nodal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Operators<T> {
    pub p: usize,
    /// Q_p → Q_{2p} embedding.
    pub embed: DenseMatrix<T>,
    /// Q_{2p} → Q_p restriction.
    pub restrict: DenseMatrix<T>,
    /// R_h, R_1, R_2 and Ê as maps of Q_{2p} into itself.
    pub r_iso: DenseMatrix<T>,
    pub r_dir: [DenseMatrix<T>; 2],
    pub remainder: DenseMatrix<T>,
}

impl<T: Real> Operators<T> {
    pub fn new(p: usize) -> Self {
        let q = 2 * p;
        let embed = transfer_matrix::<T>([p, p], [q, q]);
        let restrict = transfer_matrix::<T>([q, q], [p, p]);
        let r_iso = embed.matmul(&restrict);
        let r_dir = [[q, p], [p, q]].map(|d| {
            transfer_matrix::<T>(d, [q, q]).matmul(&transfer_matrix::<T>([q, q], d))
        });
        let n = (q + 1) * (q + 1);
        let remainder = DenseMatrix::from_fn(n, n, |a, b| {
            let id = if a == b { T::one() } else { T::zero() };
            id + r_iso[(a, b)] - r_dir[0][(a, b)] - r_dir[1][(a, b)]
        });
        Self {
            p,
            embed,
            restrict,
            r_iso,
            r_dir,
            remainder,
        }
    }
}

/// Linear recovery of a Q_{2p} field on one leaf from global Q_p DoF values.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecovery<T> {
    pub stencil: Vec<usize>,
    /// `(2p+1)² × stencil.len()`.
    pub map: DenseMatrix<T>,
    pub exact_patch: bool,
}

impl<T: Real> CellRecovery<T> {
    pub fn apply(&self, global: &[T]) -> Vec<T> {
        let s: Vec<T> = self.stencil.iter().map(|&g| global[g]).collect();
        self.map.mul_vec(&s)
    }
}

/// Patch recovery I_{2h}^{(2p)} for all leaves: exact lattice interpolation on
/// isotropic four-leaf patches, constrained least squares over the facet and
/// vertex neighbors otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery<T> {
    pub p: usize,
    pub cells: Vec<CellRecovery<T>>,
}

impl<T: Real> Recovery<T> {
    pub fn build(mesh: &Mesh<T>, dofs: &DofHandler<T>) -> Self {
        let p = dofs.degree;
        let iso = iso_child_maps::<T>(p);
        let neighbors = mesh.facet_neighbors();
        let mut at_vertex: HashMap<usize, Vec<usize>> = HashMap::new();
        for &c in &dofs.leaves {
            for &v in &mesh.cells[c].vertices {
                at_vertex.entry(v).or_default().push(c);
            }
        }
        let cells = dofs
            .leaves
            .iter()
            .map(|&c| {
                if let PatchDescriptor::Isotropic {
                    children, position, ..
                } = mesh.patch_of(c)
                {
                    if children.iter().all(|&k| mesh.cells[k].is_leaf()) {
                        return iso_recovery(dofs, &children, position, &iso[position]);
                    }
                }
                let mut near: Vec<usize> = Vec::new();
                for nb in &neighbors[&c] {
                    match nb {
                        FacetNeighbor::Same(o, _) | FacetNeighbor::Coarser(o, _, _) => near.push(*o),
                        FacetNeighbor::Finer(list) => near.extend(list.iter().map(|x| x.0)),
                        FacetNeighbor::Boundary => {}
                    }
                }
                for v in &mesh.cells[c].vertices {
                    near.extend(at_vertex[v].iter().copied().filter(|&o| o != c));
                }
                ls_recovery(mesh, dofs, c, &near)
            })
            .collect();
        Self { p, cells }
    }

    /// Recovered Q_{2p} nodal coefficients on leaf `leaf` (leaf index).
    pub fn recover(&self, leaf: usize, global: &[T]) -> Vec<T> {
        self.cells[leaf].apply(global)
    }
}

/// For each child position: union-lattice values → the child's Q_{2p} nodes.
fn iso_child_maps<T: Real>(p: usize) -> Vec<DenseMatrix<T>> {
    let nu = 2 * p + 1;
    let basis = Lagrange1d::new(union_nodes::<T>(p));
    let g: Vec<T> = gauss_lobatto_1d(2 * p);
    let h = T::of(0.5);
    (0..4)
        .map(|pos| {
            let (ox, oy) = (T::of_usize(pos % 2) * h, T::of_usize(pos / 2) * h);
            let rows: Vec<Vec<T>> = (0..nu * nu)
                .map(|k| {
                    let x = ox + g[k % nu] * h;
                    let y = oy + g[k / nu] * h;
                    let bx = basis.values(x);
                    let by = basis.values(y);
                    (0..nu * nu).map(|u| bx[u % nu] * by[u / nu]).collect()
                })
                .collect();
            DenseMatrix::from_fn(nu * nu, nu * nu, |a, b| rows[a][b])
        })
        .collect()
}

fn iso_recovery<T: Real>(
    dofs: &DofHandler<T>,
    children: &[usize; 4],
    _position: usize,
    map: &DenseMatrix<T>,
) -> CellRecovery<T> {
    let p = dofs.degree;
    let n1 = p + 1;
    let nu = 2 * p + 1;
    let mut stencil = vec![0; nu * nu];
    for jj in 0..nu {
        for ii in 0..nu {
            let (cx, i) = if ii <= p { (0, ii) } else { (1, ii - p) };
            let (cy, j) = if jj <= p { (0, jj) } else { (1, jj - p) };
            let leaf = dofs.leaf_index[&children[cy * 2 + cx]];
            stencil[jj * nu + ii] = dofs.cell_dofs[leaf][j * n1 + i];
        }
    }
    CellRecovery {
        stencil,
        map: map.clone(),
        exact_patch: true,
    }
}

fn ls_recovery<T: Real>(
    mesh: &Mesh<T>,
    dofs: &DofHandler<T>,
    cell: usize,
    near: &[usize],
) -> CellRecovery<T> {
    let p = dofs.degree;
    let q = 2 * p;
    let li = dofs.leaf_index[&cell];
    let own = dofs.cell_dofs[li].clone();
    let mut others: Vec<usize> = Vec::new();
    let push_cell = |c: usize, others: &mut Vec<usize>| {
        for &g in &dofs.cell_dofs[dofs.leaf_index[&c]] {
            if !own.contains(&g) && !others.contains(&g) {
                others.push(g);
            }
        }
    };
    for &o in near {
        push_cell(o, &mut others);
    }
    let low = make_element::<T>(p, p);
    let high = make_element::<T>(q, q);
    let embed = transfer_matrix::<T>([p, p], [q, q]);
    let n2 = high.n_dofs();
    let n1 = low.n_dofs();
    // bubble nodes: high-order nodes that are not low-order nodes
    let low_nodes = low.nodes();
    let bubbles: Vec<usize> = (0..n2)
        .filter(|&k| {
            let x = high.node(k);
            !low_nodes
                .iter()
                .any(|y| (x[0] - y[0]).abs() < T::of(1e-12) && (x[1] - y[1]).abs() < T::of(1e-12))
        })
        .collect();
    let ns = n1 + others.len();
    let mut map = DenseMatrix::zeros(n2, ns);
    for a in 0..n2 {
        for b in 0..n1 {
            map[(a, b)] = embed[(a, b)];
        }
    }
    let mut stencil = own.clone();
    stencil.extend(others.iter().copied());
    if others.is_empty() {
        return CellRecovery {
            stencil,
            map,
            exact_patch: false,
        };
    }
    let geo = mesh.geometry(cell);
    let m = others.len();
    let mut a = DenseMatrix::zeros(m, bubbles.len());
    let mut low_at = DenseMatrix::zeros(m, n1);
    let mut weights = Vec::with_capacity(m);
    for (r, &g) in others.iter().enumerate() {
        let xi = geo.inverse(dofs.positions[g]);
        let dist2: T = xi
            .iter()
            .map(|&s| {
                let d = if s < T::zero() {
                    -s
                } else if s > T::one() {
                    s - T::one()
                } else {
                    T::zero()
                };
                d * d
            })
            .sum();
        let w = (T::one() / (T::one() + dist2)).sqrt();
        let hv = high.values(xi);
        let lv = low.values(xi);
        for (c, &k) in bubbles.iter().enumerate() {
            a[(r, c)] = w * hv[k];
        }
        for k in 0..n1 {
            low_at[(r, k)] = w * lv[k];
        }
        weights.push(w);
    }
    // bubble coefficients d = A⁺ W (u_nb − N u_own)
    let pinv = a.pseudo_inverse(T::of(1e-10));
    for (c, &k) in bubbles.iter().enumerate() {
        for r in 0..m {
            let coef = pinv[(c, r)];
            map[(k, n1 + r)] += coef * weights[r];
            for b in 0..n1 {
                map[(k, b)] -= coef * low_at[(r, b)];
            }
        }
    }
    CellRecovery {
        stencil,
        map,
        exact_patch: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, DofHandler, Mesh, RefinementFlags};

    fn poly(x: [f64; 2]) -> f64 {
        x[0] * x[0] * x[1] * x[1] + 0.3 * x[0] * x[1] - x[1] + 0.5
    }

    #[test]
    fn restriction_keeps_low_order_functions() {
        for p in 1..=2 {
            let v = LocalField::<f64>::interpolate([p, p], |x| 1.0 + x[0] - 2.0 * x[0] * x[1]);
            let hi = v.to_degrees([2 * p, 2 * p]);
            let back = restrict_iso(&hi).unwrap();
            for (a, b) in back.coeffs.iter().zip(&v.coeffs) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn remainder_of_tensor_square_for_p1() {
        let v = LocalField::<f64>::interpolate([2, 2], |x| x[0] * x[0] * x[1] * x[1]);
        let e = remainder(&v).unwrap();
        for &(x, y) in &[(0.3, 0.7), (0.5, 0.5), (0.11, 0.93)] {
            let want = (x * x - x) * (y * y - y);
            assert!((e.eval([x, y]) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn splitting_identity() {
        for p in 1..=2 {
            let v = LocalField::<f64>::interpolate([2 * p, 2 * p], |x| (3.0 * x[0]).sin() * (x[1] + 0.2).exp());
            let d = v.degrees;
            let r = restrict_iso(&v).unwrap().to_degrees(d);
            let r1 = restrict_dir(0, &v).unwrap().to_degrees(d);
            let r2 = restrict_dir(1, &v).unwrap().to_degrees(d);
            let e = remainder(&v).unwrap();
            for k in 0..v.coeffs.len() {
                let lhs = v.coeffs[k] - r.coeffs[k];
                let rhs = (v.coeffs[k] - r1.coeffs[k]) + (v.coeffs[k] - r2.coeffs[k]) - e.coeffs[k];
                assert!((lhs - rhs).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn remainder_scales_with_both_sizes() {
        // x²y² on [0,h1]×[0,h2]: remainder (x²−h1x)(y²−h2y), maximum h1²h2²/16
        for &(h1, h2) in &[(1.0, 1.0), (0.1, 1.0), (0.01, 0.5)] {
            let v = LocalField::<f64>::interpolate([2, 2], |x| {
                let (a, b) = (h1 * x[0], h2 * x[1]);
                a * a * b * b
            });
            let e = remainder(&v).unwrap();
            let m = e.eval([0.5, 0.5]).abs();
            assert!((m - h1 * h1 * h2 * h2 / 16.0).abs() < 1e-12 * (1.0 + m));
        }
    }

    #[test]
    fn operators_are_projections() {
        for p in 1..=2 {
            let ops = Operators::<f64>::new(p);
            for m in [&ops.r_iso, &ops.r_dir[0], &ops.r_dir[1]] {
                let m2 = m.matmul(m);
                let n = m.rows;
                for a in 0..n {
                    for b in 0..n {
                        assert!((m2[(a, b)] - m[(a, b)]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn patch_interpolation_is_exact_on_q2p() {
        for p in 1..=2 {
            let f = |x: [f64; 2]| poly(x) + x[0].powi(2 * p as i32) * x[1];
            let n1 = p + 1;
            let g: Vec<f64> = gauss_lobatto_1d(p);
            let children = (0..4)
                .map(|pos| {
                    let (ox, oy) = ((pos % 2) as f64 * 0.5, (pos / 2) as f64 * 0.5);
                    (0..n1 * n1)
                        .map(|k| f([ox + 0.5 * g[k % n1], oy + 0.5 * g[k / n1]]))
                        .collect()
                })
                .collect();
            let patch = PatchField {
                patch: PatchDescriptor::Isotropic {
                    parent: 0,
                    children: [1, 2, 3, 4],
                    position: 0,
                },
                degree: p,
                children,
            };
            let v = patch_interpolate(&patch).unwrap();
            for &x in &[[0.2, 0.9], [0.77, 0.31]] {
                assert!((v.eval(x) - f(x)).abs() < 1e-12);
            }
            let d = patch_interpolate_dir(1, &patch).unwrap();
            assert_eq!(d.degrees, [p, 2 * p]);
        }
    }

    #[test]
    fn directional_patch_is_rejected() {
        let patch = PatchField::<f64> {
            patch: PatchDescriptor::None,
            degree: 1,
            children: vec![],
        };
        assert_eq!(patch_interpolate(&patch), Err(TransferError::NotIsotropic));
    }

    fn check_recovery(mesh: &Mesh<f64>, p: usize, f: impl Fn([f64; 2]) -> f64) {
        let dofs = DofHandler::new(mesh, p);
        let rec = Recovery::build(mesh, &dofs);
        let u = dofs.interpolate(&f);
        let hi = crate::elements::make_element::<f64>(2 * p, 2 * p);
        for (li, &c) in dofs.leaves.iter().enumerate() {
            let coeffs = rec.recover(li, &u);
            let geo = mesh.geometry(c);
            for xi in [[0.25, 0.25], [0.5, 0.8], [0.9, 0.1]] {
                let got = hi.evaluate(&coeffs, xi);
                let want = f(geo.map(xi));
                assert!((got - want).abs() < 1e-9, "cell {c}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn least_squares_recovery_reproduces_biquadratics() {
        let mesh = build_rect_mesh([[0.0, 0.0], [1.0, 2.0]], 3, 3, true).unwrap();
        check_recovery(&mesh, 1, |x| x[0] * x[0] * x[1] * x[1] - x[0] + 0.25 * x[1]);
    }

    #[test]
    fn patch_recovery_reproduces_biquadratics() {
        let mut mesh = build_rect_mesh([[0.0, 0.0], [1.0, 1.0]], 2, 2, true).unwrap();
        let mut flags = RefinementFlags::default();
        for c in mesh.leaves() {
            flags.refine_both(c);
        }
        mesh.refine_in_place(&flags);
        let dofs = DofHandler::new(&mesh, 1);
        let rec = Recovery::build(&mesh, &dofs);
        assert!(rec.cells.iter().all(|c| c.exact_patch));
        check_recovery(&mesh, 1, |x| x[0] * x[0] * x[1] * x[1] + x[0] * x[1]);
        check_recovery(&mesh, 2, |x| x[0].powi(4) * x[1].powi(3) - x[1]);
    }
}
