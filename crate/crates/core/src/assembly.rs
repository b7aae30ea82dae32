//! P1 finite element assembly on a fixed triangulation.
//!
//! Every matrix is built on the vertex-adjacency pattern of the mesh. The
//! nonlinear `H_eps(g)` weights are integrated with the edge-midpoint rule
//! applied to the linear interpolant of `g`; with that rule the element mass
//! with weights `w_q` on the three edges reduces to
//!
//! ```text
//! M_aa = area/12 * (w of the two edges through a)
//! M_ab = area/12 * (w of edge ab)
//! ```
//!
//! Elements are accumulated in index order, so repeated assemblies are
//! bitwise identical.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::mesh::{Mesh, Point, Subdomain};
use crate::penalty::{CoefficientSample, PenaltyParams};
use crate::sparse::{SparseMatrix, SparsityPattern};

pub type NodalVector = Vec<f64>;

/// Which `H_eps`-dependent weight multiplies a weighted mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassWeight {
    H,
    OneMinusH,
}

/// Local edge `e` joins local nodes `EDGES[e]`, matching the midpoint rule order.
const EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Per-mesh assembly cache: pattern, element-to-slot map and geometric factors.
#[derive(Debug, Clone)]
pub struct Assembler {
    mesh: Arc<Mesh>,
    pattern: Arc<SparsityPattern>,
    slots: Vec<[[usize; 3]; 3]>,
    unit_stiffness: Vec<[[f64; 3]; 3]>,
    areas: Vec<f64>,
}

impl Assembler {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let pattern = Arc::new(SparsityPattern::from_mesh(&mesh));
        let mut slots = Vec::with_capacity(mesh.n_triangles());
        let mut unit_stiffness = Vec::with_capacity(mesh.n_triangles());
        let mut areas = Vec::with_capacity(mesh.n_triangles());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut s = [[0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    s[a][b] = pattern.slot(tri[a], tri[b]).expect("element entry in pattern");
                }
            }
            slots.push(s);
            let (k, area) = unit_element_stiffness(&mesh.corners(t));
            unit_stiffness.push(k);
            areas.push(area);
        }
        Self {
            mesh,
            pattern,
            slots,
            unit_stiffness,
            areas,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    fn check_nodal(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.mesh.n_vertices() {
            return invalid(format!(
                "{what} has {} entries, mesh has {} vertices",
                v.len(),
                self.mesh.n_vertices()
            ));
        }
        Ok(())
    }

    fn check_sample(&self, sample: &CoefficientSample) -> Result<()> {
        if sample.eta.len() != self.mesh.n_triangles() {
            return invalid(format!(
                "coefficient sample has {} entries, mesh has {} triangles",
                sample.eta.len(),
                self.mesh.n_triangles()
            ));
        }
        Ok(())
    }

    /// Adds `scale * area/12 * w` edge-weighted element masses.
    fn add_edge_weighted_mass(&self, m: &mut SparseMatrix, weights: impl Fn(usize) -> [f64; 3], scale: f64) {
        let values = m.values_mut();
        for (t, s) in self.slots.iter().enumerate() {
            let w = weights(t);
            let c = scale * self.areas[t] / 12.0;
            for (e, &[a, b]) in EDGES.iter().enumerate() {
                let v = c * w[e];
                values[s[a][a]] += v;
                values[s[b][b]] += v;
                values[s[a][b]] += v;
                values[s[b][a]] += v;
            }
        }
    }

    /// Values of `g` at the edge midpoints of triangle `t`.
    #[inline]
    pub fn midpoint_values(&self, t: usize, g: &[f64]) -> [f64; 3] {
        let tri = self.mesh.triangles[t];
        [
            0.5 * (g[tri[0]] + g[tri[1]]),
            0.5 * (g[tri[1]] + g[tri[2]]),
            0.5 * (g[tri[2]] + g[tri[0]]),
        ]
    }

    /// `(alpha grad u, grad v) + (1/eps) ((1 - H_eps(g)) u, v)` without boundary treatment.
    pub fn assemble_stiffness_raw(&self, sample: &CoefficientSample, g: &[f64], eps: f64) -> Result<SparseMatrix> {
        let pen = PenaltyParams::new(eps)?;
        self.check_nodal(g, "shape field")?;
        self.check_sample(sample)?;
        let mut a = SparseMatrix::zeros(Arc::clone(&self.pattern), true);
        {
            let values = a.values_mut();
            for (t, s) in self.slots.iter().enumerate() {
                let alpha = sample.alpha(t);
                let k = &self.unit_stiffness[t];
                for i in 0..3 {
                    for j in 0..3 {
                        values[s[i][j]] += alpha * k[i][j];
                    }
                }
            }
        }
        self.add_edge_weighted_mass(
            &mut a,
            |t| self.midpoint_values(t, g).map(|gq| 1.0 - pen.h(gq)),
            1.0 / eps,
        );
        Ok(a)
    }

    /// Penalized operator `A(omega)` with homogeneous Dirichlet rows eliminated.
    pub fn assemble_stiffness(&self, sample: &CoefficientSample, g: &[f64], eps: f64) -> Result<SparseMatrix> {
        let mut a = self.assemble_stiffness_raw(sample, g, eps)?;
        a.eliminate_rows(&self.mesh.boundary_vertex);
        Ok(a)
    }

    /// Standard P1 mass matrix `B1`.
    pub fn assemble_mass(&self) -> SparseMatrix {
        let mut m = SparseMatrix::zeros(Arc::clone(&self.pattern), true);
        self.add_edge_weighted_mass(&mut m, |_| [1.0; 3], 1.0);
        m
    }

    /// Mass matrix weighted by `H_eps(g)` or `1 - H_eps(g)`.
    pub fn assemble_weighted_mass(&self, g: &[f64], eps: f64, weight: MassWeight) -> Result<SparseMatrix> {
        let pen = PenaltyParams::new(eps)?;
        self.check_nodal(g, "shape field")?;
        let mut m = SparseMatrix::zeros(Arc::clone(&self.pattern), true);
        self.add_edge_weighted_mass(
            &mut m,
            |t| {
                self.midpoint_values(t, g).map(|gq| match weight {
                    MassWeight::H => pen.h(gq),
                    MassWeight::OneMinusH => 1.0 - pen.h(gq),
                })
            },
            1.0,
        );
        Ok(m)
    }

    /// Mass restricted to the triangles whose centroid lies in `region`.
    pub fn assemble_subdomain_mass(&self, region: &Subdomain) -> Result<SparseMatrix> {
        if region.is_none() {
            return invalid("subdomain mass needs a subdomain");
        }
        region.validate()?;
        let inside: Vec<f64> = (0..self.mesh.n_triangles())
            .map(|t| if region.contains(self.mesh.centroid(t)) { 1.0 } else { 0.0 })
            .collect();
        let mut m = SparseMatrix::zeros(Arc::clone(&self.pattern), true);
        self.add_edge_weighted_mass(&mut m, |t| [inside[t]; 3], 1.0);
        Ok(m)
    }

    /// Matrix-free product with the `H_eps(g)`- or `(1 - H_eps(g))`-weighted mass.
    pub fn apply_weighted_mass(&self, g: &[f64], eps: f64, weight: MassWeight, x: &[f64]) -> Result<NodalVector> {
        let pen = PenaltyParams::new(eps)?;
        self.check_nodal(g, "shape field")?;
        self.check_nodal(x, "vector")?;
        let mut y = vec![0.0; x.len()];
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let gq = self.midpoint_values(t, g);
            let c = self.areas[t] / 12.0;
            for (e, &[a, b]) in EDGES.iter().enumerate() {
                let h = pen.h(gq[e]);
                let w = c * match weight {
                    MassWeight::H => h,
                    MassWeight::OneMinusH => 1.0 - h,
                };
                let (va, vb) = (tri[a], tri[b]);
                let s = x[va] + x[vb];
                y[va] += w * s;
                y[vb] += w * s;
            }
        }
        Ok(y)
    }

    /// Row sums of `B1`: one third of the area of every incident triangle.
    pub fn lumped_areas(&self) -> NodalVector {
        let mut out = vec![0.0; self.mesh.n_vertices()];
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            for &v in tri {
                out[v] += self.areas[t] / 3.0;
            }
        }
        out
    }

    /// `sum_T sum_q (area/3) weight(g_q) * a_q * b_q` over the edge-midpoint
    /// nodes, with `a`, `b` and `g` interpolated linearly.
    pub fn midpoint_integral(&self, g: &[f64], a: &[f64], b: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for t in 0..self.mesh.n_triangles() {
            let gq = self.midpoint_values(t, g);
            let aq = self.midpoint_values(t, a);
            let bq = self.midpoint_values(t, b);
            let mut acc = 0.0;
            for q in 0..3 {
                acc += weight(gq[q]) * aq[q] * bq[q];
            }
            total += acc * self.areas[t] / 3.0;
        }
        total
    }

    /// Interpolates a pointwise function at the mesh vertices.
    pub fn interpolate_nodal(&self, func: impl Fn(Point) -> f64) -> NodalVector {
        interpolate_nodal(&self.mesh, func)
    }
}

pub fn interpolate_nodal(mesh: &Mesh, func: impl Fn(Point) -> f64) -> NodalVector {
    mesh.vertices.iter().map(|&p| func(p)).collect()
}

/// Unit-coefficient P1 stiffness of one triangle, and its area.
fn unit_element_stiffness(p: &[Point; 3]) -> ([[f64; 3]; 3], f64) {
    let area = crate::mesh::signed_area(p);
    let mut grad = [[0.0; 2]; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        grad[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
    }
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
        }
    }
    (k, area.abs())
}
