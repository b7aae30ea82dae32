//! Verification runs: adjoint gradient against finite differences, and the
//! decay of the penalty integral as `eps` shrinks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::assembly::NodalVector;
use crate::error::{invalid, Result};
use crate::optimizer::{directional_derivative, DensityInputs};
use crate::pde::expected_cost;
use crate::penalty::CoefficientSample;
use crate::problems::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckOptions {
    /// Problem data, mesh, `eps`, `rho` and samples are taken from here.
    pub base: RunConfig,
    pub directions: usize,
    pub fd_step: f64,
    pub seed: u64,
}

impl GradientCheckOptions {
    /// Coarse deterministic setup: example 1 data on a 17x17 grid with
    /// `rho = 0`, one sample, and a penalty band wide enough to be resolved.
    pub fn coarse(base: RunConfig) -> Self {
        let base = RunConfig {
            grid_n: 17,
            eps: 0.25,
            rho: 0.0,
            n_samples: 1,
            cg_tol: 1e-13,
            ..base
        };
        Self {
            base,
            directions: 5,
            fd_step: 1e-4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionCheck {
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub checks: Vec<DirectionCheck>,
}

impl GradientCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.relative_error))
    }
}

/// Low-frequency cosine field with random coefficients in `[-1, 1]`.
pub fn smooth_direction(points: &[[f64; 2]], rng: &mut impl Rng) -> NodalVector {
    let mut c = [[0.0; 3]; 3];
    for row in &mut c {
        for v in row.iter_mut() {
            *v = rng.gen_range(-1.0..=1.0);
        }
    }
    points
        .iter()
        .map(|p| {
            let mut s = 0.0;
            for (a, row) in c.iter().enumerate() {
                for (b, &coef) in row.iter().enumerate() {
                    s += coef * (a as f64 * PI * (p[0] + 1.0) / 2.0).cos() * (b as f64 * PI * (p[1] + 1.0) / 2.0).cos();
                }
            }
            s
        })
        .collect()
}

/// Compares the adjoint directional derivative of the expected cost with a
/// centered difference along random smooth directions.
pub fn gradient_check(options: &GradientCheckOptions) -> Result<GradientCheckReport> {
    if options.directions == 0 {
        return invalid("at least one direction is required");
    }
    if !(options.fd_step > 0.0 && options.fd_step.is_finite()) {
        return invalid(format!("fd_step must be positive, got {}", options.fd_step));
    }
    let config = &options.base;
    let solver = config.state_solver()?;
    let mesh = solver.mesh();
    let samples = config.draw_samples(mesh, 0)?;
    let g = config.initial_shape.interpolate(mesh);
    let solutions = solver.solve_ensemble(&samples, &g, None)?;
    let inputs = DensityInputs {
        g: &g,
        target: &solver.objective().target,
        penalty: solver.penalty(),
        objective: solver.objective().kind,
    };

    let cost_at = |shift: &[f64], sign: f64| -> Result<f64> {
        let gs: NodalVector = g.iter().zip(shift).map(|(a, b)| a + sign * options.fd_step * b).collect();
        let states = solver.primal_ensemble(&samples, &gs, None)?;
        expected_cost(states.iter().map(|s| (s.sample_id, s.cost)))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut checks = Vec::with_capacity(options.directions);
    for _ in 0..options.directions {
        let q = smooth_direction(&mesh.vertices, &mut rng);
        let adjoint = directional_derivative(solver.assembler(), &solutions, inputs, &q)?;
        let finite_difference = (cost_at(&q, 1.0)? - cost_at(&q, -1.0)?) / (2.0 * options.fd_step);
        let scale = adjoint.abs().max(finite_difference.abs());
        let relative_error = if scale == 0.0 {
            0.0
        } else {
            (adjoint - finite_difference).abs() / scale
        };
        checks.push(DirectionCheck {
            adjoint,
            finite_difference,
            relative_error,
        });
    }
    Ok(GradientCheckReport { checks })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub penalty_integral: f64,
}

/// `int (1 - H_eps(g)) u^2` at the initial shape of `base`, with the unit
/// coefficient, for each `eps`.
pub fn eps_sweep(base: &RunConfig, eps_values: &[f64]) -> Result<Vec<SweepRow>> {
    if eps_values.is_empty() {
        return invalid("no eps values given");
    }
    if let Some(bad) = eps_values.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return invalid(format!("eps must be positive, got {bad}"));
    }
    let solver = RunConfig {
        eps: eps_values[0],
        ..base.clone()
    }
    .state_solver()?;
    let g = base.initial_shape.interpolate(solver.mesh());
    let sample = CoefficientSample::unit(solver.mesh().n_triangles());
    eps_values
        .iter()
        .map(|&eps| {
            let s = solver.with_eps(eps)?;
            let a = s.operator(&sample, &g)?;
            let (u, _) = s.solve_primal(&a, None)?;
            Ok(SweepRow {
                eps,
                penalty_integral: s.penalty_mass_integral(&u, &g),
            })
        })
        .collect()
}

pub fn strictly_decreasing(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| w[1].penalty_integral < w[0].penalty_integral)
}
