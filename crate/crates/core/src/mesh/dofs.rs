use super::{edge_key, Facet, FacetNeighbor, Mesh, FACET_VERTICES};
use crate::elements::{gauss_lobatto_1d, Lagrange1d};
use crate::real::{Point, Real};
use std::collections::HashMap;

/// `constrained = Σ weights[k] · masters[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HangingConstraint<T> {
    pub constrained: usize,
    pub masters: Vec<usize>,
    pub weights: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DofKind {
    Vertex(usize),
    /// Edge key and index along the edge counted from the lower vertex id.
    Edge((usize, usize), usize),
    Interior(usize, usize),
}

/// Continuous Q_p numbering on the leaves of a mesh with resolved hanging-node
/// constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct DofHandler<T> {
    pub degree: usize,
    pub leaves: Vec<usize>,
    pub leaf_index: HashMap<usize, usize>,
    /// Global DoFs of each leaf in local lattice order `j * (p+1) + i`.
    pub cell_dofs: Vec<Vec<usize>>,
    pub n_dofs: usize,
    pub kinds: Vec<DofKind>,
    pub positions: Vec<Point<T>>,
    pub boundary: Vec<Option<Facet>>,
    pub constraints: Vec<HangingConstraint<T>>,
    /// Index into `constraints` for constrained DoFs.
    pub constraint_of: Vec<Option<usize>>,
}

impl<T: Real> DofHandler<T> {
    pub fn new(mesh: &Mesh<T>, p: usize) -> Self {
        assert!(p >= 1, "continuous elements need p ≥ 1");
        let leaves = mesh.leaves();
        let leaf_index: HashMap<usize, usize> =
            leaves.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let gl: Vec<T> = gauss_lobatto_1d(p);
        let mut index: HashMap<DofKind, usize> = HashMap::new();
        let mut kinds = Vec::new();
        let mut positions = Vec::new();
        let mut cell_dofs = Vec::with_capacity(leaves.len());
        let n1 = p + 1;
        for &c in &leaves {
            let cell = &mesh.cells[c];
            let geo = mesh.geometry(c);
            let mut dofs = Vec::with_capacity(n1 * n1);
            for j in 0..n1 {
                for i in 0..n1 {
                    let kind = lattice_kind(cell.vertices, c, p, i, j);
                    let id = *index.entry(kind).or_insert_with(|| {
                        kinds.push(kind);
                        positions.push(match kind {
                            DofKind::Vertex(v) => mesh.vertices[v],
                            _ => geo.map([gl[i], gl[j]]),
                        });
                        kinds.len() - 1
                    });
                    dofs.push(id);
                }
            }
            cell_dofs.push(dofs);
        }
        let n_dofs = kinds.len();

        let mut boundary: Vec<Option<Facet>> = vec![None; n_dofs];
        for (li, &c) in leaves.iter().enumerate() {
            for (e, f) in mesh.cells[c].boundary.iter().enumerate() {
                let Some(f) = f else { continue };
                for d in facet_lattice(p, e) {
                    let g = cell_dofs[li][d];
                    let stronger = match boundary[g] {
                        None => true,
                        Some(old) => !old.tag.is_dirichlet() && f.tag.is_dirichlet(),
                    };
                    if stronger {
                        boundary[g] = Some(*f);
                    }
                }
            }
        }

        // raw constraints from facets whose neighbor is coarser
        let basis = Lagrange1d::new(gl.clone());
        let neighbors = mesh.facet_neighbors();
        let mut raw: HashMap<usize, Vec<(usize, T)>> = HashMap::new();
        for (li, &c) in leaves.iter().enumerate() {
            for (e, nb) in neighbors[&c].iter().enumerate() {
                let FacetNeighbor::Coarser(_, _, depth) = *nb else { continue };
                assert_eq!(depth, 1, "mesh is not one-irregular");
                let v = mesh.cells[c].vertices;
                let (a, b) = (v[FACET_VERTICES[e][0]], v[FACET_VERTICES[e][1]]);
                let parent = mesh.edge_parent(a, b).expect("hanging facet has a parent edge");
                let m = mesh.edge_midpoint(parent.0, parent.1).unwrap();
                // parent edge DoFs ordered from parent.0 to parent.1
                let mut pd = vec![index[&DofKind::Vertex(parent.0)]];
                for k in 1..p {
                    pd.push(index[&DofKind::Edge(parent, k)]);
                }
                pd.push(index[&DofKind::Vertex(parent.1)]);
                let sub = edge_key(a, b);
                // parameter on the parent edge of node k on the sub-edge
                let to_parent = |tau: T| -> T {
                    if sub.0 == parent.0 {
                        tau * T::of(0.5)
                    } else {
                        T::one() - tau * T::of(0.5)
                    }
                };
                let mut nodes: Vec<(usize, T)> = vec![(index[&DofKind::Vertex(m)], T::of(0.5))];
                for (k, &g) in gl.iter().enumerate().take(p).skip(1) {
                    nodes.push((index[&DofKind::Edge(sub, k)], to_parent(g)));
                }
                let _ = li;
                for (dof, t) in nodes {
                    let w = basis.values(t);
                    raw.entry(dof)
                        .or_insert_with(|| pd.iter().copied().zip(w).collect());
                }
            }
        }
        let constraints = resolve_chains(raw);
        let mut constraint_of = vec![None; n_dofs];
        for (k, c) in constraints.iter().enumerate() {
            constraint_of[c.constrained] = Some(k);
        }
        Self {
            degree: p,
            leaves,
            leaf_index,
            cell_dofs,
            n_dofs,
            kinds,
            positions,
            boundary,
            constraints,
            constraint_of,
        }
    }

    /// Expansion of a DoF into unconstrained DoFs.
    pub fn expand(&self, dof: usize) -> Vec<(usize, T)> {
        match self.constraint_of[dof] {
            None => vec![(dof, T::one())],
            Some(k) => {
                let c = &self.constraints[k];
                c.masters.iter().copied().zip(c.weights.iter().copied()).collect()
            }
        }
    }

    /// Overwrites constrained values with the combination of their masters.
    pub fn distribute(&self, values: &mut [T]) {
        for c in &self.constraints {
            values[c.constrained] = c
                .masters
                .iter()
                .zip(&c.weights)
                .map(|(&m, &w)| w * values[m])
                .sum();
        }
    }

    /// Nodal interpolation of a function of position.
    pub fn interpolate(&self, f: impl Fn(Point<T>) -> T) -> Vec<T> {
        let mut v: Vec<T> = self.positions.iter().map(|&x| f(x)).collect();
        self.distribute(&mut v);
        v
    }

    pub fn local_values(&self, leaf: usize, global: &[T]) -> Vec<T> {
        self.cell_dofs[leaf].iter().map(|&g| global[g]).collect()
    }
}

/// Resolved hanging-node constraints of the Q_p space on `mesh`.
pub fn build_constraints<T: Real>(mesh: &Mesh<T>, p: usize) -> Vec<HangingConstraint<T>> {
    DofHandler::new(mesh, p).constraints
}

fn resolve_chains<T: Real>(raw: HashMap<usize, Vec<(usize, T)>>) -> Vec<HangingConstraint<T>> {
    let mut keys: Vec<usize> = raw.keys().copied().collect();
    keys.sort_unstable();
    let mut resolved: HashMap<usize, Vec<(usize, T)>> = HashMap::new();
    fn expand<T: Real>(
        d: usize,
        raw: &HashMap<usize, Vec<(usize, T)>>,
        resolved: &mut HashMap<usize, Vec<(usize, T)>>,
        depth: usize,
    ) -> Vec<(usize, T)> {
        assert!(depth < 64, "cyclic hanging-node constraints");
        if let Some(r) = resolved.get(&d) {
            return r.clone();
        }
        let Some(list) = raw.get(&d) else {
            return vec![(d, T::one())];
        };
        let mut acc: Vec<(usize, T)> = Vec::new();
        for &(m, w) in list {
            for (mm, ww) in expand(m, raw, resolved, depth + 1) {
                match acc.iter_mut().find(|(k, _)| *k == mm) {
                    Some(e) => e.1 += w * ww,
                    None => acc.push((mm, w * ww)),
                }
            }
        }
        acc.retain(|&(_, w)| w != T::zero());
        acc.sort_by_key(|&(k, _)| k);
        resolved.insert(d, acc.clone());
        acc
    }
    keys.iter()
        .map(|&d| {
            let list = expand(d, &raw, &mut resolved, 0);
            HangingConstraint {
                constrained: d,
                masters: list.iter().map(|x| x.0).collect(),
                weights: list.iter().map(|x| x.1).collect(),
            }
        })
        .collect()
}

fn lattice_kind(v: [usize; 4], cell: usize, p: usize, i: usize, j: usize) -> DofKind {
    let corner = match (i, j) {
        (0, 0) => Some(v[0]),
        (a, 0) if a == p => Some(v[1]),
        (a, b) if a == p && b == p => Some(v[2]),
        (0, b) if b == p => Some(v[3]),
        _ => None,
    };
    if let Some(c) = corner {
        return DofKind::Vertex(c);
    }
    let edge = |e: usize, k: usize| {
        let (a, b) = (v[FACET_VERTICES[e][0]], v[FACET_VERTICES[e][1]]);
        let key = edge_key(a, b);
        DofKind::Edge(key, if a == key.0 { k } else { p - k })
    };
    if j == 0 {
        edge(0, i)
    } else if i == p {
        edge(1, j)
    } else if j == p {
        edge(2, i)
    } else if i == 0 {
        edge(3, j)
    } else {
        DofKind::Interior(cell, (j - 1) * (p - 1) + (i - 1))
    }
}

/// Local lattice indices on facet `e`, in facet parameter order.
pub fn facet_lattice(p: usize, e: usize) -> Vec<usize> {
    let n1 = p + 1;
    (0..n1)
        .map(|k| match e {
            0 => k,
            1 => k * n1 + p,
            2 => p * n1 + k,
            _ => k * n1,
        })
        .collect()
}
