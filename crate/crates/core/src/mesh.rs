//! Structured triangulation of the hold-all square D = (-1, 1)^2.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, io_err, Result};

pub type Point = [f64; 2];

/// Slack used by the closed-set membership tests.
const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_vertex: Vec<bool>,
    /// Vertices per side of the structured grid.
    pub grid_n: usize,
}

/// Builds an `n x n` vertex grid on `[-1, 1]^2`, splitting every cell along
/// its lower-left to upper-right diagonal.
pub fn build_structured_mesh(n: usize) -> Result<Mesh> {
    if n < 2 {
        return invalid(format!("grid_n must be at least 2, got {n}"));
    }
    let last = (n - 1) as f64;
    let coord = |i: usize| -> f64 {
        if i == n - 1 {
            1.0
        } else {
            2.0 * i as f64 / last - 1.0
        }
    };

    let mut vertices = Vec::with_capacity(n * n);
    let mut boundary_vertex = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push([coord(i), coord(j)]);
            boundary_vertex.push(i == 0 || j == 0 || i == n - 1 || j == n - 1);
        }
    }

    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = j * n + i;
            let b = a + 1;
            let c = a + n + 1;
            let d = a + n;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    Ok(Mesh {
        vertices,
        triangles,
        boundary_vertex,
        grid_n: n,
    })
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Grid spacing `2 / (grid_n - 1)`.
    pub fn spacing(&self) -> f64 {
        2.0 / (self.grid_n - 1) as f64
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area, positive for counterclockwise triangles.
    pub fn signed_area(&self, t: usize) -> f64 {
        signed_area(&self.corners(t))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [p, q, r] = self.corners(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Edge-midpoint rule: nodes at the three edge midpoints, weights area/3.
    /// The local node order is edges (0,1), (1,2), (2,0).
    pub fn element_quadrature(&self, t: usize) -> [(Point, f64); 3] {
        midpoint_rule(&self.corners(t))
    }

    pub fn vertex_in_subdomain(&self, region: &Subdomain, i: usize) -> bool {
        region.contains(self.vertices[i])
    }

    /// Vertex mask of a subdomain (all false for [`Subdomain::None`]).
    pub fn vertex_mask(&self, region: &Subdomain) -> Vec<bool> {
        self.vertices.iter().map(|&p| region.contains(p)).collect()
    }

    /// Plain-text export: a `vertices <nv> triangles <nt>` header, one `x y`
    /// line per vertex, then one `i j k` line per triangle.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.n_vertices() + self.n_triangles()));
        let _ = writeln!(out, "vertices {} triangles {}", self.n_vertices(), self.n_triangles());
        for p in &self.vertices {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }
}

pub fn signed_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

pub fn midpoint_rule(p: &[Point; 3]) -> [(Point, f64); 3] {
    let w = signed_area(p).abs() / 3.0;
    let mid = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    [
        (mid(p[0], p[1]), w),
        (mid(p[1], p[2]), w),
        (mid(p[2], p[0]), w),
    ]
}

/// Six-point degree-4 rule in barycentric coordinates, weights normalized to 1.
pub(crate) const DEGREE4_RULE: [([f64; 3], f64); 6] = [
    ([0.108103018168070, 0.445948490915965, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.108103018168070, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.445948490915965, 0.108103018168070], 0.223381589678011),
    ([0.816847572980459, 0.091576213509771, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.816847572980459, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.091576213509771, 0.816847572980459], 0.109951743655322),
];

/// Observation / constraint region inside D. Membership is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Subdomain {
    Square { half_width: f64, center: Point },
    Disk { radius: f64, center: Point },
    None,
}

impl Subdomain {
    pub fn square(half_width: f64, center: Point) -> Result<Self> {
        let s = Subdomain::Square { half_width, center };
        s.validate()?;
        Ok(s)
    }

    pub fn disk(radius: f64, center: Point) -> Result<Self> {
        let s = Subdomain::Disk { radius, center };
        s.validate()?;
        Ok(s)
    }

    /// Checks positivity and that the closure lies in the closed hold-all domain.
    pub fn validate(&self) -> Result<()> {
        let (extent, c) = match *self {
            Subdomain::Square { half_width, center } => (half_width, center),
            Subdomain::Disk { radius, center } => (radius, center),
            Subdomain::None => return Ok(()),
        };
        if !(extent > 0.0) || !extent.is_finite() {
            return invalid(format!("subdomain size must be positive, got {extent}"));
        }
        if c.iter().any(|v| v.abs() + extent > 1.0 + MEMBERSHIP_TOL) {
            return invalid("subdomain must lie inside [-1, 1]^2");
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Subdomain::None)
    }

    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Subdomain::Square { half_width, center } => {
                (p[0] - center[0]).abs() <= half_width + MEMBERSHIP_TOL
                    && (p[1] - center[1]).abs() <= half_width + MEMBERSHIP_TOL
            }
            Subdomain::Disk { radius, center } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy <= radius * radius + MEMBERSHIP_TOL
            }
            Subdomain::None => false,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Subdomain::Square { half_width, .. } => 4.0 * half_width * half_width,
            Subdomain::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Subdomain::None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_counts() {
        let m = build_structured_mesh(128).unwrap();
        assert_eq!(m.n_vertices(), 16384);
        assert_eq!(m.n_triangles(), 32258);
    }

    #[test]
    fn single_cell() {
        let m = build_structured_mesh(2).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (4, 2));
        assert!(m.boundary_vertex.iter().all(|&b| b));
    }

    #[test]
    fn three_by_three_has_one_interior_vertex() {
        let m = build_structured_mesh(3).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (9, 8));
        let interior: Vec<_> = (0..9).filter(|&i| !m.boundary_vertex[i]).collect();
        assert_eq!(interior, vec![4]);
        assert_eq!(m.vertices[4], [0.0, 0.0]);
    }

    #[test]
    fn rejects_degenerate_grid() {
        assert!(build_structured_mesh(1).is_err());
        assert!(build_structured_mesh(0).is_err());
    }

    #[test]
    fn invariants_hold_for_several_sizes() {
        for n in [2, 3, 5, 17, 64] {
            let m = build_structured_mesh(n).unwrap();
            assert_eq!(m.n_vertices(), n * n);
            assert_eq!(m.n_triangles(), 2 * (n - 1) * (n - 1));
            let mut total = 0.0;
            for t in 0..m.n_triangles() {
                let a = m.signed_area(t);
                assert!(a > 0.0);
                total += a;
            }
            assert!((total - 4.0).abs() <= 4.0 * 1e-12, "n={n} total={total}");
            for (p, &b) in m.vertices.iter().zip(&m.boundary_vertex) {
                let on_edge = p[0].abs() == 1.0 || p[1].abs() == 1.0;
                assert_eq!(on_edge, b);
            }
        }
    }

    #[test]
    fn subdomain_membership() {
        let m = Mesh {
            vertices: vec![[0.0, 0.0], [0.6, 0.0], [0.5, 0.0]],
            triangles: vec![],
            boundary_vertex: vec![false; 3],
            grid_n: 2,
        };
        let sq = Subdomain::square(0.5, [0.0, 0.0]).unwrap();
        assert!(m.vertex_in_subdomain(&sq, 0));
        assert!(!m.vertex_in_subdomain(&sq, 1));
        let disk = Subdomain::disk(0.5, [0.0, 0.0]).unwrap();
        assert!(m.vertex_in_subdomain(&disk, 2));
        assert!(!m.vertex_in_subdomain(&Subdomain::None, 0));
    }

    #[test]
    fn subdomain_validation() {
        assert!(Subdomain::square(0.0, [0.0, 0.0]).is_err());
        assert!(Subdomain::disk(-1.0, [0.0, 0.0]).is_err());
        assert!(Subdomain::disk(0.5, [0.8, 0.0]).is_err());
        assert!(Subdomain::square(1.0, [0.0, 0.0]).is_ok());
    }

    #[test]
    fn masks_grow_with_subdomain() {
        let m = build_structured_mesh(33).unwrap();
        let mut prev = vec![false; m.n_vertices()];
        for k in 1..=10 {
            let r = 0.1 * k as f64;
            let mask = m.vertex_mask(&Subdomain::disk(r, [0.0, 0.0]).unwrap());
            assert!(prev.iter().zip(&mask).all(|(&a, &b)| !a || b));
            prev = mask;
        }
    }

    #[test]
    fn midpoint_rule_on_unit_triangle() {
        let q = midpoint_rule(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(q[0].0, [0.5, 0.0]);
        assert_eq!(q[1].0, [0.5, 0.5]);
        assert_eq!(q[2].0, [0.0, 0.5]);
        for (_, w) in q {
            assert!((w - 1.0 / 6.0).abs() < 1e-16);
        }
        // x^2 integrates to 1/12 on the unit right triangle
        let integral: f64 = q.iter().map(|(p, w)| w * p[0] * p[0]).sum();
        assert!((integral - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn export_header() {
        let m = build_structured_mesh(3).unwrap();
        let text = m.to_text();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("vertices 9 triangles 8"));
        assert_eq!(text.lines().count(), 1 + 9 + 8);
        assert_eq!(text.lines().last(), Some("4 8 7"));
    }
}
