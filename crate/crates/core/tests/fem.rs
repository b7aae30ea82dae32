//! Discretization checks against independent quadrature and analytic bounds.

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use penshape::mesh::{midpoint_rule, signed_area};
use penshape::pde::l2_error;
use penshape::{
    build_structured_mesh, cg_solve, sample_coefficient, Assembler, CgOptions, CoefficientSample, FieldTag, Mesh,
    PenaltyParams, Point, RunConfig,
};

/// `int_T p` for `p = c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2`, from the
/// closed-form vertex/centroid moments of a triangle.
fn exact_quadratic_integral(t: &[Point; 3], c: &[f64; 6]) -> f64 {
    let area = signed_area(t).abs();
    let cx = (t[0][0] + t[1][0] + t[2][0]) / 3.0;
    let cy = (t[0][1] + t[1][1] + t[2][1]) / 3.0;
    let second = |f: &dyn Fn(Point) -> f64, fc: f64| area / 12.0 * (t.iter().map(|p| f(*p)).sum::<f64>() + 9.0 * fc);
    c[0] * area
        + c[1] * area * cx
        + c[2] * area * cy
        + c[3] * second(&|p| p[0] * p[0], cx * cx)
        + c[4] * second(&|p| p[0] * p[1], cx * cy)
        + c[5] * second(&|p| p[1] * p[1], cy * cy)
}

fn point() -> impl Strategy<Value = Point> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(x, y)| [x, y])
}

proptest! {
    #[test]
    fn midpoint_rule_is_exact_for_quadratics(
        t in (point(), point(), point()).prop_map(|(a, b, c)| [a, b, c]),
        c in prop::array::uniform6(-2.0f64..2.0),
    ) {
        prop_assume!(signed_area(&t).abs() > 1e-3);
        let p = |x: Point| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[0] + c[4] * x[0] * x[1] + c[5] * x[1] * x[1];
        let rule: f64 = midpoint_rule(&t).iter().map(|(x, w)| w * p(*x)).sum();
        let exact = exact_quadratic_integral(&t, &c);
        prop_assert!((rule - exact).abs() <= 1e-10 * (1.0 + exact.abs()), "{rule} vs {exact}");
    }
}

fn p1_gradients(p: &[Point; 3]) -> [[f64; 2]; 3] {
    let det = 2.0 * signed_area(p);
    [
        [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
        [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
        [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
    ]
}

/// `a(u, v)` evaluated element by element from the definition.
fn bilinear_form(mesh: &Mesh, sample: &CoefficientSample, g: &[f64], eps: f64, u: &[f64], v: &[f64]) -> f64 {
    let pen = PenaltyParams::new(eps).unwrap();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let corners = mesh.corners(t);
        let grads = p1_gradients(&corners);
        let gu = (0..3).fold([0.0; 2], |acc, k| [acc[0] + u[tri[k]] * grads[k][0], acc[1] + u[tri[k]] * grads[k][1]]);
        let gv = (0..3).fold([0.0; 2], |acc, k| [acc[0] + v[tri[k]] * grads[k][0], acc[1] + v[tri[k]] * grads[k][1]]);
        let area = signed_area(&corners).abs();
        total += sample.alpha(t) * area * (gu[0] * gv[0] + gu[1] * gv[1]);
        for (e, (_, w)) in midpoint_rule(&corners).iter().enumerate() {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            let at = |f: &[f64]| 0.5 * (f[a] + f[b]);
            total += w / eps * (1.0 - pen.h(at(g))) * at(u) * at(v);
        }
    }
    total
}

#[test]
fn assembled_operator_matches_the_bilinear_form() {
    let mesh = Arc::new(build_structured_mesh(9).unwrap());
    let assembler = Assembler::new(Arc::clone(&mesh));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..5 {
        let eps = [1.0, 0.1, 1e-3, 0.3, 0.05][k];
        let sample = sample_coefficient(&mesh, 0.4, 9, k as u64).unwrap();
        let g: Vec<f64> = mesh.vertices.iter().map(|p| 0.3 - p[0] * p[0] - 0.6 * p[1] * p[1]).collect();
        let a = assembler.assemble_stiffness_raw(&sample, &g, eps).unwrap();
        let u: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let expected = bilinear_form(&mesh, &sample, &g, eps, &u, &v);
        let got = a.bilinear(&u, &v);
        assert!((got - expected).abs() <= 1e-11 * expected.abs().max(1.0), "{got} vs {expected}");
    }
}

#[test]
fn stiffness_annihilates_constants_without_penalty() {
    let mesh = Arc::new(build_structured_mesh(11).unwrap());
    let assembler = Assembler::new(Arc::clone(&mesh));
    let sample = sample_coefficient(&mesh, 0.5, 3, 0).unwrap();
    let g = vec![1.0; mesh.n_vertices()];
    let a = assembler.assemble_stiffness_raw(&sample, &g, 1e-3).unwrap();
    for s in a.row_sums() {
        assert!(s.abs() < 1e-12);
    }
}

#[test]
fn mass_matrix_integrates_products() {
    let mesh = Arc::new(build_structured_mesh(7).unwrap());
    let m = Assembler::new(Arc::clone(&mesh)).assemble_mass();
    assert!((m.total() - 4.0).abs() < 1e-13);
    let x: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
    // int x^2 over (-1,1)^2 is exact for P1 products under the midpoint rule
    assert!((m.bilinear(&x, &x) - 4.0 / 3.0).abs() < 1e-13);
}

fn nodal_state(n: usize, rho: f64, sample_id: u64, g_of: impl Fn(Point) -> f64) -> (RunConfig, Vec<f64>) {
    let config = RunConfig {
        grid_n: n,
        rho,
        ..RunConfig::default()
    };
    let solver = config.state_solver().unwrap();
    let mesh = solver.mesh();
    let sample = if rho == 0.0 {
        CoefficientSample::unit(mesh.n_triangles())
    } else {
        sample_coefficient(mesh, rho, 21, sample_id).unwrap()
    };
    let g: Vec<f64> = mesh.vertices.iter().map(|p| g_of(*p)).collect();
    let a = solver.operator(&sample, &g).unwrap();
    let (u, _) = solver.solve_primal(&a, None).unwrap();
    (config, u)
}

#[test]
fn constant_force_converges_at_second_order() {
    let sols: Vec<(usize, Vec<f64>)> = [17, 33, 65]
        .into_iter()
        .map(|n| (n, nodal_state(n, 0.0, 0, |_| 1.0).1))
        .collect();
    // nested grids: vertex (i, j) of grid n sits at (2i, 2j) on grid 2n - 1
    let coarse_n = sols[0].0;
    let at = |k: usize, i: usize, j: usize| {
        let (n, u) = &sols[k];
        let s = (n - 1) / (coarse_n - 1);
        u[j * s * n + i * s]
    };
    let mut d1: f64 = 0.0;
    let mut d2: f64 = 0.0;
    for j in 0..coarse_n {
        for i in 0..coarse_n {
            d1 = d1.max((at(0, i, j) - at(1, i, j)).abs());
            d2 = d2.max((at(1, i, j) - at(2, i, j)).abs());
        }
    }
    let order = (d1 / d2).log2();
    assert!(order > 1.8, "observed order {order}");
}

#[test]
fn manufactured_solution_order_on_acceptance_grids() {
    let exact = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sin();
    let errors: Vec<f64> = [17, 33, 65]
        .into_iter()
        .map(|n| {
            let config = RunConfig {
                grid_n: n,
                rho: 0.0,
                force: FieldTag::ManufacturedForce,
                ..RunConfig::default()
            };
            let solver = config.state_solver().unwrap();
            let g = vec![1.0; solver.mesh().n_vertices()];
            let a = solver.operator(&CoefficientSample::unit(solver.mesh().n_triangles()), &g).unwrap();
            let (u, _) = solver.solve_primal(&a, None).unwrap();
            l2_error(solver.mesh(), &u, exact)
        })
        .collect();
    for w in errors.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.9, "{errors:?}");
    }
}

#[test]
fn a_priori_bound_holds_uniformly_in_h() {
    // ||u|| <= ||f|| / ((1 - rho) lambda_1) with lambda_1 = pi^2 / 2 on (-1, 1)^2
    let rho = 0.5;
    let bound = 1.0 / ((1.0 - rho) * PI * PI / 2.0);
    let f_norm = 2.0 * 2.0;
    let mut ratios = vec![];
    for n in [17, 33, 65] {
        let (config, u) = nodal_state(n, rho, 2, |p| 0.5 - p[0].abs() - 0.3 * p[1]);
        let mesh = config.mesh().unwrap();
        let c = l2_error(&mesh, &u, |_| 0.0) / f_norm;
        assert!(c <= bound, "grid {n}: {c} > {bound}");
        ratios.push(c);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    assert!(hi / lo < 1.1, "{ratios:?}");
}

#[test]
fn warm_start_reaches_the_same_solution_faster() {
    let config = RunConfig {
        grid_n: 33,
        ..RunConfig::default()
    };
    let solver = config.state_solver().unwrap();
    let mesh = solver.mesh();
    let sample = sample_coefficient(mesh, 0.01, 1, 0).unwrap();
    let g0: Vec<f64> = config.initial_shape.interpolate(mesh);
    let g1: Vec<f64> = g0.iter().map(|v| v + 1e-3).collect();
    let (u0, _) = solver.solve_primal(&solver.operator(&sample, &g0).unwrap(), None).unwrap();
    let a1 = solver.operator(&sample, &g1).unwrap();
    let (cold, cold_report) = solver.solve_primal(&a1, None).unwrap();
    let (warm, warm_report) = solver.solve_primal(&a1, Some(&u0)).unwrap();
    assert!(warm_report.iterations < cold_report.iterations);
    let scale = cold.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in cold.iter().zip(&warm) {
        assert!((a - b).abs() < 1e-7 * scale);
    }
}

#[test]
fn cg_residual_meets_tolerance() {
    let config = RunConfig {
        grid_n: 33,
        ..RunConfig::default()
    };
    let solver = config.state_solver().unwrap();
    let mesh = solver.mesh();
    let sample = sample_coefficient(mesh, 0.3, 1, 4).unwrap();
    let g = config.initial_shape.interpolate(mesh);
    let a = solver.operator(&sample, &g).unwrap();
    let b = solver.load();
    let (x, report) = CgOptions::default().solve(&a, b, None);
    assert!(report.converged);
    let ax = a.matvec(&x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(r / bn <= 1e-10);
    let (_, capped) = cg_solve(&a, b, 1e-14, 3, None);
    assert!(!capped.converged && capped.iterations == 3);
}
