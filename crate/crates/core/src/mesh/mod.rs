//! Hierarchical quadrilateral meshes with independent refinement per reference
//! direction and hanging nodes.

mod builders;
mod dofs;
mod locate;

pub use builders::{build_hemker_mesh, build_rect_mesh, Obstacle};
pub use dofs::{build_constraints, DofHandler, DofKind, HangingConstraint};
pub use locate::PointLocator;
pub use dofs::facet_lattice;

use crate::elements::{gauss_rule, Bilinear, GeometryError};
use crate::real::{Point, Real};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    DirichletHomogeneous,
    DirichletInhomogeneous,
    Neumann,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        !matches!(self, BoundaryTag::Neumann)
    }
}

/// Boundary facet data: condition tag and optional curve id for projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub tag: BoundaryTag,
    pub curve: Option<usize>,
}

/// Boundary curve onto which refinement-created vertices are projected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projector<T> {
    Circle { center: Point<T>, radius: T },
}

impl<T: Real> Projector<T> {
    pub fn project(&self, x: Point<T>) -> Point<T> {
        match *self {
            Projector::Circle { center, radius } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
                [center[0] + d[0] * radius / r, center[1] + d[1] * radius / r]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    /// Split in reference direction 1 (new vertical facet).
    X,
    /// Split in reference direction 2.
    Y,
    Both,
}

impl SplitKind {
    pub fn n_children(self) -> usize {
        match self {
            SplitKind::Both => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: usize,
    /// Counter-clockwise: (0,0), (1,0), (1,1), (0,1) in reference coordinates.
    pub vertices: [usize; 4],
    pub levels: [u32; 2],
    pub parent: Option<usize>,
    /// Children ordered by position: X → [left, right], Y → [bottom, top],
    /// Both → [lower-left, lower-right, upper-left, upper-right].
    pub children: Option<(SplitKind, Vec<usize>)>,
    /// Local facets: 0 bottom, 1 right, 2 top, 3 left.
    pub boundary: [Option<Facet>; 4],
    pub root: usize,
    pub active: bool,
}

impl Cell {
    pub fn is_leaf(&self) -> bool {
        self.active && self.children.is_none()
    }
}

/// Local facet vertex pairs in facet parameter direction.
pub const FACET_VERTICES: [[usize; 2]; 4] = [[0, 1], [1, 2], [3, 2], [0, 3]];

/// Reference direction normal to a local facet.
pub fn facet_normal_dir(e: usize) -> usize {
    if e == 1 || e == 3 {
        0
    } else {
        1
    }
}

pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellFlag {
    Refine { x: bool, y: bool },
    Coarsen,
}

/// Per-leaf flags; refine and coarsen are exclusive by construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinementFlags {
    pub cells: BTreeMap<usize, CellFlag>,
}

impl RefinementFlags {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a refinement direction, replacing a coarsen flag.
    pub fn refine(&mut self, cell: usize, dir: usize) {
        let e = self
            .cells
            .entry(cell)
            .or_insert(CellFlag::Refine { x: false, y: false });
        let (mut x, mut y) = match *e {
            CellFlag::Refine { x, y } => (x, y),
            CellFlag::Coarsen => (false, false),
        };
        if dir == 0 {
            x = true;
        } else {
            y = true;
        }
        *e = CellFlag::Refine { x, y };
    }

    pub fn refine_both(&mut self, cell: usize) {
        self.refine(cell, 0);
        self.refine(cell, 1);
    }

    /// Flags for coarsening unless the cell is already marked for refinement.
    pub fn coarsen(&mut self, cell: usize) {
        self.cells.entry(cell).or_insert(CellFlag::Coarsen);
    }
}

/// Patch of siblings that a leaf belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchDescriptor {
    None,
    Isotropic {
        parent: usize,
        children: [usize; 4],
        position: usize,
    },
    Directional {
        parent: usize,
        dir: usize,
        children: [usize; 2],
        position: usize,
    },
}

/// Neighbor across one facet of a leaf.
#[derive(Debug, Clone, PartialEq)]
pub enum FacetNeighbor {
    Boundary,
    /// Conforming neighbor and its local facet.
    Same(usize, usize),
    /// Coarser neighbor, its local facet, and how many edge bisections apart.
    Coarser(usize, usize, u32),
    /// Finer neighbors with their local facets.
    Finer(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub vertices: Vec<Point<T>>,
    pub cells: Vec<Cell>,
    pub curves: Vec<Projector<T>>,
    edge_mid: HashMap<(usize, usize), usize>,
    edge_parent: HashMap<(usize, usize), (usize, usize)>,
    merged_children: HashMap<usize, (SplitKind, Vec<usize>)>,
}

impl<T: Real> Mesh<T> {
    /// Creates a mesh from root cells given as counter-clockwise vertex ids.
    pub fn from_cells(
        vertices: Vec<Point<T>>,
        cells: Vec<([usize; 4], [Option<Facet>; 4])>,
        curves: Vec<Projector<T>>,
    ) -> Result<Self, GeometryError> {
        let cells: Vec<Cell> = cells
            .into_iter()
            .enumerate()
            .map(|(id, (v, b))| Cell {
                id,
                vertices: v,
                levels: [0, 0],
                parent: None,
                children: None,
                boundary: b,
                root: id,
                active: true,
            })
            .collect();
        let mesh = Self {
            vertices,
            cells,
            curves,
            edge_mid: HashMap::new(),
            edge_parent: HashMap::new(),
            merged_children: HashMap::new(),
        };
        let quad = gauss_rule::<T>(3);
        for c in &mesh.cells {
            let g = mesh.geometry(c.id);
            for &x in &quad.points {
                let det = g.det(x);
                if !(det > T::zero()) {
                    return Err(GeometryError::NonPositiveJacobian {
                        det: det.as_f64(),
                        x: x[0].as_f64(),
                        y: x[1].as_f64(),
                    });
                }
            }
        }
        Ok(mesh)
    }

    pub fn geometry(&self, cell: usize) -> Bilinear<T> {
        let v = self.cells[cell].vertices;
        Bilinear::new([
            self.vertices[v[0]],
            self.vertices[v[1]],
            self.vertices[v[2]],
            self.vertices[v[3]],
        ])
    }

    /// Leaf cell ids in ascending order.
    pub fn leaves(&self) -> Vec<usize> {
        self.cells.iter().filter(|c| c.is_leaf()).map(|c| c.id).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.cells.iter().filter(|c| c.is_leaf()).count()
    }

    pub fn area(&self, cell: usize) -> T {
        self.geometry(cell).area()
    }

    pub fn total_area(&self) -> T {
        self.leaves().iter().map(|&c| self.area(c)).sum()
    }

    /// h_K = sqrt(|K|).
    pub fn diameter(&self, cell: usize) -> T {
        self.area(cell).sqrt()
    }

    /// Lengths of the mapped midlines in reference directions 1 and 2.
    pub fn directional_sizes(&self, cell: usize) -> [T; 2] {
        let g = self.geometry(cell);
        let h = T::of(0.5);
        let d = |a: Point<T>, b: Point<T>| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        [
            d(g.map([T::one(), h]), g.map([T::zero(), h])),
            d(g.map([h, T::one()]), g.map([h, T::zero()])),
        ]
    }

    /// Maximum singular-value ratio of the mapping gradient over 2×2 Gauss points.
    pub fn aspect_ratio(&self, cell: usize) -> T {
        let g = self.geometry(cell);
        let quad = gauss_rule::<T>(2);
        let mut ar = T::one();
        for &x in &quad.points {
            ar = ar.max(singular_ratio(g.jacobian(x)));
        }
        ar
    }

    pub fn aspect_ratio_max(&self) -> T {
        self.leaves()
            .iter()
            .map(|&c| self.aspect_ratio(c))
            .fold(T::one(), |a, b| a.max(b))
    }

    pub fn patch_of(&self, cell: usize) -> PatchDescriptor {
        let Some(parent) = self.cells[cell].parent else {
            return PatchDescriptor::None;
        };
        let (kind, ch) = self.cells[parent]
            .children
            .as_ref()
            .expect("parent has children");
        let position = ch.iter().position(|&c| c == cell).expect("child of parent");
        match kind {
            SplitKind::Both => PatchDescriptor::Isotropic {
                parent,
                children: [ch[0], ch[1], ch[2], ch[3]],
                position,
            },
            SplitKind::X | SplitKind::Y => PatchDescriptor::Directional {
                parent,
                dir: if *kind == SplitKind::X { 0 } else { 1 },
                children: [ch[0], ch[1]],
                position,
            },
        }
    }

    fn midpoint(&mut self, a: usize, b: usize, curve: Option<usize>) -> usize {
        let key = edge_key(a, b);
        if let Some(&m) = self.edge_mid.get(&key) {
            return m;
        }
        let (pa, pb) = (self.vertices[key.0], self.vertices[key.1]);
        let mut x = [(pa[0] + pb[0]) * T::of(0.5), (pa[1] + pb[1]) * T::of(0.5)];
        if let Some(c) = curve {
            x = self.curves[c].project(x);
        }
        let m = self.vertices.len();
        self.vertices.push(x);
        self.edge_mid.insert(key, m);
        self.edge_parent.insert(edge_key(key.0, m), key);
        self.edge_parent.insert(edge_key(m, key.1), key);
        m
    }

    /// Midpoint vertex of an edge if it has been split.
    pub fn edge_midpoint(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_mid.get(&edge_key(a, b)).copied()
    }

    pub fn edge_parent(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        self.edge_parent.get(&edge_key(a, b)).copied()
    }

    /// Splits a leaf; returns the children ids.
    pub fn split_cell(&mut self, id: usize, kind: SplitKind) -> Vec<usize> {
        let cell = self.cells[id].clone();
        assert!(cell.is_leaf(), "only leaves can be split");
        let [v0, v1, v2, v3] = cell.vertices;
        let b = cell.boundary;
        let curve = |e: usize| b[e].and_then(|f| f.curve);
        let [lx, ly] = cell.levels;
        let mut specs: Vec<([usize; 4], [Option<Facet>; 4], [u32; 2])> = Vec::new();
        match kind {
            SplitKind::X => {
                let m01 = self.midpoint(v0, v1, curve(0));
                let m32 = self.midpoint(v3, v2, curve(2));
                specs.push(([v0, m01, m32, v3], [b[0], None, b[2], b[3]], [lx + 1, ly]));
                specs.push(([m01, v1, v2, m32], [b[0], b[1], b[2], None], [lx + 1, ly]));
            }
            SplitKind::Y => {
                let m03 = self.midpoint(v0, v3, curve(3));
                let m12 = self.midpoint(v1, v2, curve(1));
                specs.push(([v0, v1, m12, m03], [b[0], b[1], None, b[3]], [lx, ly + 1]));
                specs.push(([m03, m12, v2, v3], [None, b[1], b[2], b[3]], [lx, ly + 1]));
            }
            SplitKind::Both => {
                let m01 = self.midpoint(v0, v1, curve(0));
                let m12 = self.midpoint(v1, v2, curve(1));
                let m32 = self.midpoint(v3, v2, curve(2));
                let m03 = self.midpoint(v0, v3, curve(3));
                let g = self.geometry(id);
                let c = self.vertices.len();
                self.vertices.push(g.map([T::of(0.5), T::of(0.5)]));
                let l = [lx + 1, ly + 1];
                specs.push(([v0, m01, c, m03], [b[0], None, None, b[3]], l));
                specs.push(([m01, v1, m12, c], [b[0], b[1], None, None], l));
                specs.push(([m03, c, m32, v3], [None, None, b[2], b[3]], l));
                specs.push(([c, m12, v2, m32], [None, b[1], b[2], None], l));
            }
        }
        let mut ids = Vec::with_capacity(specs.len());
        for (v, bd, levels) in specs {
            let cid = self.cells.len();
            self.cells.push(Cell {
                id: cid,
                vertices: v,
                levels,
                parent: Some(id),
                children: None,
                boundary: bd,
                root: cell.root,
                active: true,
            });
            ids.push(cid);
        }
        self.cells[id].children = Some((kind, ids.clone()));
        ids
    }

    /// Facet neighbors of every leaf, keyed by leaf id.
    pub fn facet_neighbors(&self) -> HashMap<usize, [FacetNeighbor; 4]> {
        let leaves = self.leaves();
        let mut users: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for &c in &leaves {
            let v = self.cells[c].vertices;
            for (e, fv) in FACET_VERTICES.iter().enumerate() {
                users
                    .entry(edge_key(v[fv[0]], v[fv[1]]))
                    .or_default()
                    .push((c, e));
            }
        }
        let mut out = HashMap::with_capacity(leaves.len());
        for &c in &leaves {
            let v = self.cells[c].vertices;
            let nb: [FacetNeighbor; 4] = std::array::from_fn(|e| {
                let fv = FACET_VERTICES[e];
                let key = edge_key(v[fv[0]], v[fv[1]]);
                if let Some(&(o, oe)) = users[&key].iter().find(|&&(o, _)| o != c) {
                    return FacetNeighbor::Same(o, oe);
                }
                let mut k = key;
                let mut depth = 0;
                while let Some(&pk) = self.edge_parent.get(&k) {
                    depth += 1;
                    if let Some(u) = users.get(&pk) {
                        if let Some(&(o, oe)) = u.first() {
                            return FacetNeighbor::Coarser(o, oe, depth);
                        }
                    }
                    k = pk;
                }
                let mut finer = Vec::new();
                self.collect_finer(key, &users, &mut finer);
                if finer.is_empty() {
                    FacetNeighbor::Boundary
                } else {
                    FacetNeighbor::Finer(finer)
                }
            });
            out.insert(c, nb);
        }
        out
    }

    fn collect_finer(
        &self,
        key: (usize, usize),
        users: &HashMap<(usize, usize), Vec<(usize, usize)>>,
        out: &mut Vec<(usize, usize)>,
    ) {
        if let Some(&m) = self.edge_mid.get(&key) {
            for sub in [edge_key(key.0, m), edge_key(m, key.1)] {
                if let Some(u) = users.get(&sub) {
                    out.extend(u.iter().copied());
                } else {
                    self.collect_finer(sub, users, out);
                }
            }
        }
    }

    /// Cells that must be split (with the direction) to restore one-irregularity.
    fn irregular(&self) -> BTreeMap<usize, [bool; 2]> {
        let nbs = self.facet_neighbors();
        let mut need: BTreeMap<usize, [bool; 2]> = BTreeMap::new();
        let mut leaves: Vec<_> = nbs.keys().copied().collect();
        leaves.sort_unstable();
        for c in leaves {
            for (e, nb) in nbs[&c].iter().enumerate() {
                let (o, oe, depth) = match *nb {
                    FacetNeighbor::Same(o, oe) => (o, oe, 0),
                    FacetNeighbor::Coarser(o, oe, d) => (o, oe, d),
                    _ => continue,
                };
                if depth >= 2 {
                    // the coarse facet must be bisected: split along its tangent
                    need.entry(o).or_default()[1 - facet_normal_dir(oe)] = true;
                }
                let nk = self.cells[c].levels[facet_normal_dir(e)];
                let no = self.cells[o].levels[facet_normal_dir(oe)];
                if nk >= no + 2 {
                    need.entry(o).or_default()[facet_normal_dir(oe)] = true;
                } else if no >= nk + 2 {
                    need.entry(c).or_default()[facet_normal_dir(e)] = true;
                }
            }
        }
        need
    }

    fn apply_splits(&mut self, need: &BTreeMap<usize, [bool; 2]>) {
        for (&c, d) in need {
            if !self.cells[c].is_leaf() {
                continue;
            }
            let kind = match d {
                [true, true] => SplitKind::Both,
                [true, false] => SplitKind::X,
                [false, true] => SplitKind::Y,
                _ => continue,
            };
            self.split_cell(c, kind);
        }
    }

    /// Refines until every facet pair is one-irregular per direction.
    pub fn closure(&mut self) {
        loop {
            let need = self.irregular();
            if need.is_empty() {
                break;
            }
            self.apply_splits(&need);
        }
    }

    pub fn is_one_irregular(&self) -> bool {
        self.irregular().is_empty()
    }

    /// Applies refinement and coarsening flags, then the closure.
    pub fn refine_in_place(&mut self, flags: &RefinementFlags) {
        let mut need = BTreeMap::new();
        for (&c, f) in &flags.cells {
            if let CellFlag::Refine { x, y } = *f {
                if self.cells[c].is_leaf() && (x || y) {
                    need.insert(c, [x, y]);
                }
            }
        }
        self.apply_splits(&need);
        self.closure();
        self.coarsen(flags);
    }

    fn coarsen(&mut self, flags: &RefinementFlags) {
        let mut parents = std::collections::BTreeSet::new();
        for (&c, f) in &flags.cells {
            if *f != CellFlag::Coarsen || !self.cells[c].is_leaf() {
                continue;
            }
            let Some(p) = self.cells[c].parent else { continue };
            let (_, ch) = self.cells[p].children.as_ref().unwrap();
            let ok = ch.iter().all(|&s| {
                self.cells[s].is_leaf() && flags.cells.get(&s) == Some(&CellFlag::Coarsen)
            });
            if ok {
                parents.insert(p);
            }
        }
        let mut merged: Vec<usize> = parents.into_iter().collect();
        for &p in &merged {
            self.merge(p);
        }
        // a merge only lowers the merged cell's levels, so every violation it
        // causes flags the merged cell itself
        loop {
            let need = self.irregular();
            let bad: Vec<usize> = merged
                .iter()
                .copied()
                .filter(|p| need.contains_key(p))
                .collect();
            if bad.is_empty() {
                if !need.is_empty() {
                    self.closure();
                }
                break;
            }
            for p in &bad {
                self.unmerge(*p);
            }
            merged.retain(|p| !bad.contains(p));
        }
        self.merged_children.clear();
    }

    fn merge(&mut self, p: usize) {
        let (_, ch) = self.cells[p].children.clone().unwrap();
        for c in ch {
            self.cells[c].active = false;
        }
        let saved = self.cells[p].children.take();
        self.merged_children.insert(p, saved.unwrap());
    }

    fn unmerge(&mut self, p: usize) {
        if let Some(saved) = self.merged_children.remove(&p) {
            for &c in &saved.1 {
                self.cells[c].active = true;
            }
            self.cells[p].children = Some(saved);
        }
    }
}

/// Non-mutating refinement.
pub fn refine<T: Real>(mesh: &Mesh<T>, flags: &RefinementFlags) -> Mesh<T> {
    let mut m = mesh.clone();
    m.refine_in_place(flags);
    m
}

fn singular_ratio<T: Real>(j: [[T; 2]; 2]) -> T {
    // eigenvalues of JᵀJ
    let a = j[0][0] * j[0][0] + j[1][0] * j[1][0];
    let b = j[0][0] * j[0][1] + j[1][0] * j[1][1];
    let d = j[0][1] * j[0][1] + j[1][1] * j[1][1];
    let tr = a + d;
    let det = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs();
    let disc = ((a - d) * (a - d) + T::of(4.0) * b * b).sqrt();
    let l1 = (tr + disc) * T::of(0.5);
    // σ_max / σ_min = σ_max² / det
    l1 / det
}
