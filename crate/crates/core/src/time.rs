//! Time partitions, the dG(r) slab basis, space-time fields and the
//! higher-order temporal reconstruction.

use crate::elements::{gauss_legendre_1d, Lagrange1d};
use crate::real::Real;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeError {
    #[error("time points must be strictly increasing (slab {slab})")]
    NotIncreasing { slab: usize },
    #[error("a partition needs at least one slab")]
    Empty,
    #[error("unsupported time degree r = {0}")]
    Degree(usize),
}

/// `0 = t_0 < t_1 < … < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition<T> {
    points: Vec<T>,
}

impl<T: Real> TimePartition<T> {
    pub fn uniform(t_end: T, n: usize) -> Result<Self, TimeError> {
        if n == 0 {
            return Err(TimeError::Empty);
        }
        Self::from_points(
            (0..=n)
                .map(|k| t_end * T::of_usize(k) / T::of_usize(n))
                .collect(),
        )
    }

    pub fn from_points(points: Vec<T>) -> Result<Self, TimeError> {
        if points.len() < 2 {
            return Err(TimeError::Empty);
        }
        for (k, w) in points.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(TimeError::NotIncreasing { slab: k });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn n_slabs(&self) -> usize {
        self.points.len() - 1
    }

    /// Slab `n` (zero-based) as `(t_{n}, t_{n+1})`.
    pub fn slab(&self, n: usize) -> (T, T) {
        (self.points[n], self.points[n + 1])
    }

    pub fn tau(&self, n: usize) -> T {
        self.points[n + 1] - self.points[n]
    }

    pub fn t_end(&self) -> T {
        *self.points.last().unwrap()
    }

    /// Bisects every slab whose flag is set.
    pub fn bisect(&self, flags: &[bool]) -> Self {
        let mut p = vec![self.points[0]];
        for n in 0..self.n_slabs() {
            let (a, b) = self.slab(n);
            if flags.get(n).copied().unwrap_or(false) {
                p.push((a + b) * T::of(0.5));
            }
            p.push(b);
        }
        Self { points: p }
    }

    /// Merges adjacent slab pairs `(2k, 2k+1)` when both are flagged.
    pub fn merge_pairs(&self, flags: &[bool]) -> Self {
        let mut p = vec![self.points[0]];
        let n = self.n_slabs();
        let mut k = 0;
        while k < n {
            if k + 1 < n && flags[k] && flags[k + 1] {
                p.push(self.points[k + 2]);
                k += 2;
            } else {
                p.push(self.points[k + 1]);
                k += 1;
            }
        }
        Self { points: p }
    }
}

/// Right Gauss–Radau nodes on [0,1] for r ∈ {0,1,2}.
pub fn radau_nodes<T: Real>(r: usize) -> Result<Vec<T>, TimeError> {
    Ok(match r {
        0 => vec![T::one()],
        1 => vec![T::one() / T::of(3.0), T::one()],
        2 => {
            let s6 = T::of(6.0).sqrt();
            vec![
                (T::of(4.0) - s6) / T::of(10.0),
                (T::of(4.0) + s6) / T::of(10.0),
                T::one(),
            ]
        }
        _ => return Err(TimeError::Degree(r)),
    })
}

/// Lagrange basis of degree r on the reference slab [0,1] together with the
/// slab matrices and a Gauss rule with r+2 points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBasis<T> {
    pub r: usize,
    pub basis: Lagrange1d<T>,
    /// `mass[b][a] = ∫ ℓ_a ℓ_b ds`.
    pub mass: Vec<Vec<T>>,
    /// `deriv[b][a] = ∫ ℓ_a' ℓ_b ds`.
    pub deriv: Vec<Vec<T>>,
    pub at0: Vec<T>,
    pub at1: Vec<T>,
    pub quad_points: Vec<T>,
    pub quad_weights: Vec<T>,
    /// `values[q][a] = ℓ_a(s_q)`, `derivs[q][a] = ℓ_a'(s_q)`.
    pub values: Vec<Vec<T>>,
    pub derivs: Vec<Vec<T>>,
}

impl<T: Real> TimeBasis<T> {
    pub fn radau(r: usize) -> Result<Self, TimeError> {
        Ok(Self::with_nodes(r, radau_nodes(r)?, r + 2))
    }

    /// Basis through arbitrary nodes with an `nq`-point Gauss rule.
    pub fn with_nodes(r: usize, nodes: Vec<T>, nq: usize) -> Self {
        let basis = Lagrange1d::new(nodes);
        let (quad_points, quad_weights) = gauss_legendre_1d::<T>(nq);
        let m = basis.len();
        let mut values = Vec::with_capacity(nq);
        let mut derivs = Vec::with_capacity(nq);
        for &s in &quad_points {
            let (v, d, _) = basis.eval_all(s);
            values.push(v);
            derivs.push(d);
        }
        let mut mass = vec![vec![T::zero(); m]; m];
        let mut deriv = vec![vec![T::zero(); m]; m];
        for q in 0..nq {
            for b in 0..m {
                for a in 0..m {
                    mass[b][a] += quad_weights[q] * values[q][a] * values[q][b];
                    deriv[b][a] += quad_weights[q] * derivs[q][a] * values[q][b];
                }
            }
        }
        let at0 = basis.values(T::zero());
        let at1 = basis.values(T::one());
        Self {
            r,
            basis,
            mass,
            deriv,
            at0,
            at1,
            quad_points,
            quad_weights,
            values,
            derivs,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }
}

/// Piecewise polynomial in time with spatial coefficient vectors at the
/// reference time nodes of every slab.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeFunction<T> {
    pub time_nodes: Vec<T>,
    /// `slabs[n][a][dof]`.
    pub slabs: Vec<Vec<Vec<T>>>,
    /// Initial trace `u(0⁻)`, empty for fields without one.
    pub initial: Vec<T>,
}

impl<T: Real> SpaceTimeFunction<T> {
    pub fn zeros(time_nodes: Vec<T>, n_slabs: usize, n_space: usize) -> Self {
        let m = time_nodes.len();
        Self {
            time_nodes,
            slabs: vec![vec![vec![T::zero(); n_space]; m]; n_slabs],
            initial: Vec::new(),
        }
    }

    pub fn n_slabs(&self) -> usize {
        self.slabs.len()
    }

    pub fn n_space(&self) -> usize {
        self.slabs.first().and_then(|s| s.first()).map_or(0, |v| v.len())
    }

    pub fn degree(&self) -> usize {
        self.time_nodes.len() - 1
    }

    fn basis(&self) -> Lagrange1d<T> {
        Lagrange1d::new(self.time_nodes.clone())
    }

    /// Spatial coefficients at reference time `s ∈ [0,1]` of slab `n`.
    pub fn eval(&self, n: usize, s: T) -> Vec<T> {
        let w = self.basis().values(s);
        let mut out = vec![T::zero(); self.n_space()];
        for (a, coeffs) in self.slabs[n].iter().enumerate() {
            for (o, &c) in out.iter_mut().zip(coeffs) {
                *o += w[a] * c;
            }
        }
        out
    }

    /// `u(t_{n+1}⁻)`.
    pub fn right_value(&self, n: usize) -> Vec<T> {
        self.eval(n, T::one())
    }

    /// `u(t_n⁺)`.
    pub fn left_value(&self, n: usize) -> Vec<T> {
        self.eval(n, T::zero())
    }

    /// Same field on the same nodes with every spatial vector mapped by `f`.
    pub fn map_space(&self, f: impl Fn(&[T]) -> Vec<T>) -> Self {
        Self {
            time_nodes: self.time_nodes.clone(),
            slabs: self
                .slabs
                .iter()
                .map(|s| s.iter().map(|v| f(v)).collect())
                .collect(),
            initial: if self.initial.is_empty() {
                Vec::new()
            } else {
                f(&self.initial)
            },
        }
    }
}

/// Lifts a degree-r field to a degree-(r+1) field: on every slab the values
/// at the r+1 Gauss points are kept and one more value is taken from the
/// neighbor, the last Gauss value of the previous slab or, on the first slab,
/// `anchor` at `t = 0` (the first Gauss value of the second slab without
/// anchor). The result may jump at slab ends by the interpolation error.
pub fn reconstruct_in_time<T: Real>(
    field: &SpaceTimeFunction<T>,
    taus: &[T],
    anchor: Option<&[T]>,
) -> SpaceTimeFunction<T> {
    let r = field.degree();
    let ns = field.n_slabs();
    assert_eq!(taus.len(), ns, "one width per slab");
    let (g, _) = gauss_legendre_1d::<T>(r + 1);
    let mut nodes = vec![T::zero()];
    nodes.extend(g.iter().copied());
    let mut slabs = Vec::with_capacity(ns);
    for n in 0..ns {
        let gauss: Vec<Vec<T>> = g.iter().map(|&s| field.eval(n, s)).collect();
        let extra = if n > 0 {
            let s = g[r];
            Some(((s - T::one()) * taus[n - 1] / taus[n], field.eval(n - 1, s)))
        } else if let Some(a) = anchor {
            Some((T::zero(), a.to_vec()))
        } else if ns > 1 {
            Some((T::one() + g[0] * taus[1] / taus[0], field.eval(1, g[0])))
        } else {
            None
        };
        let left = match extra {
            Some((x, v)) => {
                let mut pts = vec![x];
                pts.extend(g.iter().copied());
                let w = Lagrange1d::new(pts).values(T::zero());
                let mut left = vec![T::zero(); field.n_space()];
                for (wa, va) in w.iter().zip(std::iter::once(&v).chain(&gauss)) {
                    for (o, &c) in left.iter_mut().zip(va) {
                        *o += *wa * c;
                    }
                }
                left
            }
            None => field.eval(n, T::zero()),
        };
        let mut vals = vec![left];
        vals.extend(gauss);
        slabs.push(vals);
    }
    SpaceTimeFunction {
        time_nodes: nodes,
        slabs,
        initial: anchor.map(|a| a.to_vec()).unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_validation() {
        assert!(TimePartition::<f64>::from_points(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimePartition::<f64>::uniform(1.0, 0).is_err());
        let p = TimePartition::<f64>::uniform(1.0, 4).unwrap();
        assert_eq!(p.n_slabs(), 4);
        assert!((p.tau(2) - 0.25).abs() < 1e-15);
        let b = p.bisect(&[true, false, true, false]);
        assert_eq!(b.n_slabs(), 6);
        let m = b.merge_pairs(&[true, true, false, false, true, true]);
        assert_eq!(m.points(), &[0.0, 0.25, 0.5, 0.625, 1.0][..]);
    }

    #[test]
    fn radau_slab_matrices() {
        let b0 = TimeBasis::<f64>::radau(0).unwrap();
        assert!((b0.mass[0][0] - 1.0).abs() < 1e-15);
        assert!(b0.deriv[0][0].abs() < 1e-15);
        assert!((b0.at0[0] - 1.0).abs() < 1e-15);

        let b1 = TimeBasis::<f64>::radau(1).unwrap();
        // ∫ℓ_a' ℓ_b summed over b equals ℓ_a(1) − ℓ_a(0)
        for a in 0..2 {
            let s: f64 = (0..2).map(|b| b1.deriv[b][a]).sum();
            assert!((s - (b1.at1[a] - b1.at0[a])).abs() < 1e-14);
        }
        let total: f64 = b1.mass.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reconstruction_reproduces_linear_in_time() {
        // two slabs of width ½ sampled at the midpoints of g(t) = t
        let f = SpaceTimeFunction {
            time_nodes: vec![1.0],
            slabs: vec![vec![vec![0.25]], vec![vec![0.75]]],
            initial: vec![0.0],
        };
        let e = reconstruct_in_time(&f, &[0.5, 0.5], Some(&[0.0]));
        for n in 0..2 {
            for s in [0.0, 0.3, 1.0] {
                let t = 0.5 * (n as f64 + s);
                assert!((e.eval(n, s)[0] - t).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reconstruction_keeps_constants() {
        let f = SpaceTimeFunction {
            time_nodes: vec![1.0f64 / 3.0, 1.0],
            slabs: vec![vec![vec![2.0, -1.0]; 2]; 3],
            initial: vec![2.0, -1.0],
        };
        let e = reconstruct_in_time(&f, &[0.2, 0.3, 0.5], Some(&[2.0, -1.0]));
        for n in 0..3 {
            for s in [0.0, 0.5, 1.0] {
                assert_eq!(e.eval(n, s).len(), 2);
                let v = e.eval(n, s);
                assert!((v[0] - 2.0).abs() < 1e-14 && (v[1] + 1.0).abs() < 1e-14);
            }
        }
    }
}
