use super::{BoundaryTag, Facet, Mesh, Projector, FACET_VERTICES};
use crate::elements::GeometryError;
use crate::real::{Point, Real};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Obstacle {
    Circle,
    Square,
}

// Diagonal-aligned coarse pattern on the unit square in units of 1/12.
const PATTERN_VERTICES: [[i64; 2]; 17] = [
    [0, 0],
    [3, 0],
    [6, 0],
    [9, 0],
    [12, 0],
    [0, 6],
    [3, 6],
    [6, 6],
    [9, 6],
    [12, 6],
    [0, 12],
    [3, 12],
    [6, 12],
    [9, 12],
    [12, 12],
    [5, 8],
    [7, 4],
];

const PATTERN_CELLS: [[usize; 4]; 10] = [
    [0, 1, 6, 5],
    [5, 6, 11, 10],
    [3, 4, 9, 8],
    [8, 9, 14, 13],
    [1, 7, 15, 6],
    [6, 15, 12, 11],
    [15, 7, 13, 12],
    [1, 2, 16, 7],
    [2, 3, 8, 16],
    [16, 8, 13, 7],
];

/// Rectangle `[x0,x1]×[y0,y1]` split into `nx × ny` blocks. Structured blocks are
/// single cells; unstructured blocks carry a ten-cell pattern aligned with the
/// diagonal `2x − y = 1/2` of the unit square. All boundary facets are Dirichlet.
pub fn build_rect_mesh<T: Real>(
    extents: [Point<T>; 2],
    nx: usize,
    ny: usize,
    structured: bool,
) -> Result<Mesh<T>, GeometryError> {
    let [lo, hi] = extents;
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    if !(w > T::zero() && h > T::zero()) || !(w * h).is_finite() {
        return Err(GeometryError::Degenerate(format!(
            "rectangle extents {:?}",
            [lo[0].as_f64(), lo[1].as_f64(), hi[0].as_f64(), hi[1].as_f64()]
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(GeometryError::Degenerate("zero cell count".into()));
    }
    let (unit, local_v, local_c): (i64, Vec<[i64; 2]>, Vec<[usize; 4]>) = if structured {
        (1, vec![[0, 0], [1, 0], [0, 1], [1, 1]], vec![[0, 1, 3, 2]])
    } else {
        (12, PATTERN_VERTICES.to_vec(), PATTERN_CELLS.to_vec())
    };
    let mut ids: HashMap<[i64; 2], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut cells = Vec::new();
    for by in 0..ny as i64 {
        for bx in 0..nx as i64 {
            let gid: Vec<usize> = local_v
                .iter()
                .map(|v| {
                    let key = [bx * unit + v[0], by * unit + v[1]];
                    *ids.entry(key).or_insert_with(|| {
                        let sx = T::of(key[0] as f64) / T::of((nx as i64 * unit) as f64);
                        let sy = T::of(key[1] as f64) / T::of((ny as i64 * unit) as f64);
                        vertices.push([lo[0] + w * sx, lo[1] + h * sy]);
                        vertices.len() - 1
                    })
                })
                .collect();
            for c in &local_c {
                cells.push([gid[c[0]], gid[c[1]], gid[c[2]], gid[c[3]]]);
            }
        }
    }
    let facets = boundary_facets(&vertices, &cells, |_| Facet {
        tag: BoundaryTag::DirichletInhomogeneous,
        curve: None,
    });
    Mesh::from_cells(vertices, cells.into_iter().zip(facets).collect(), Vec::new())
}

/// Channel `(−3,8)×(−3,3)` around an obstacle centered at the origin: the unit
/// circle or the square `[−1,1]²`. Inflow `x = −3` is homogeneous Dirichlet,
/// the obstacle inhomogeneous Dirichlet, the rest Neumann.
pub fn build_hemker_mesh<T: Real>(obstacle: Obstacle) -> Mesh<T> {
    let mut vertices: Vec<Point<T>> = Vec::new();
    let outer = [
        [3.0, 0.0],
        [3.0, 3.0],
        [0.0, 3.0],
        [-3.0, 3.0],
        [-3.0, 0.0],
        [-3.0, -3.0],
        [0.0, -3.0],
        [3.0, -3.0],
    ];
    for k in 0..8 {
        let p = match obstacle {
            Obstacle::Circle => {
                let a = T::FRAC_PI_4() * T::of_usize(k);
                [a.cos(), a.sin()]
            }
            Obstacle::Square => [T::of(outer[k][0] / 3.0), T::of(outer[k][1] / 3.0)],
        };
        vertices.push(p);
    }
    for o in outer {
        vertices.push([T::of(o[0]), T::of(o[1])]);
    }
    for o in [[8.0, -3.0], [8.0, 0.0], [8.0, 3.0]] {
        vertices.push([T::of(o[0]), T::of(o[1])]);
    }
    let mut cells = Vec::new();
    for k in 0..8 {
        let n = (k + 1) % 8;
        cells.push([k, 8 + k, 8 + n, n]);
    }
    cells.push([15, 16, 17, 8]);
    cells.push([8, 17, 18, 9]);
    let curves = match obstacle {
        Obstacle::Circle => vec![Projector::Circle {
            center: [T::zero(), T::zero()],
            radius: T::one(),
        }],
        Obstacle::Square => Vec::new(),
    };
    let facets = boundary_facets(&vertices, &cells, |m| {
        if m[0] < T::of(-2.999) {
            Facet {
                tag: BoundaryTag::DirichletHomogeneous,
                curve: None,
            }
        } else if m[0].abs() < T::of(1.5) && m[1].abs() < T::of(1.5) {
            Facet {
                tag: BoundaryTag::DirichletInhomogeneous,
                curve: if obstacle == Obstacle::Circle { Some(0) } else { None },
            }
        } else {
            Facet {
                tag: BoundaryTag::Neumann,
                curve: None,
            }
        }
    });
    Mesh::from_cells(vertices, cells.into_iter().zip(facets).collect(), curves)
        .expect("valid Hemker coarse mesh")
}

fn boundary_facets<T: Real>(
    vertices: &[Point<T>],
    cells: &[[usize; 4]],
    tag: impl Fn(Point<T>) -> Facet,
) -> Vec<[Option<Facet>; 4]> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for c in cells {
        for fv in FACET_VERTICES {
            *count.entry(super::edge_key(c[fv[0]], c[fv[1]])).or_default() += 1;
        }
    }
    cells
        .iter()
        .map(|c| {
            std::array::from_fn(|e| {
                let fv = FACET_VERTICES[e];
                let (a, b) = (c[fv[0]], c[fv[1]]);
                if count[&super::edge_key(a, b)] == 1 {
                    let m = [
                        (vertices[a][0] + vertices[b][0]) * T::of(0.5),
                        (vertices[a][1] + vertices[b][1]) * T::of(0.5),
                    ];
                    Some(tag(m))
                } else {
                    None
                }
            })
        })
        .collect()
}
