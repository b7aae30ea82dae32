//! Gradient densities, descent directions and momentum smoothing.

use std::fmt;
use std::str::FromStr;

use crate::assembly::{Assembler, NodalVector};
use crate::error::{invalid, Error, Result};
use crate::pde::{mc_expect, mc_expect_nodal, ObjectiveKind, SampleSolution};
use crate::penalty::PenaltyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMode {
    /// `(1/eps) H'_eps(g) u z`, the exact shape derivative density.
    Full,
    /// `(1/eps) u z`, with the `H'_eps` factor dropped.
    Simplified,
    /// `1/2 (u - u_d)^2 + (1/eps) u z`.
    Reduced,
}

impl DirectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DirectionMode::Full => "full",
            DirectionMode::Simplified => "simplified",
            DirectionMode::Reduced => "reduced",
        }
    }
}

impl fmt::Display for DirectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DirectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(DirectionMode::Full),
            "simplified" => Ok(DirectionMode::Simplified),
            "reduced" => Ok(DirectionMode::Reduced),
            other => invalid(format!("unknown direction mode `{other}`")),
        }
    }
}

/// Inputs shared by every density evaluation at one shape.
#[derive(Debug, Clone, Copy)]
pub struct DensityInputs<'a> {
    pub g: &'a [f64],
    pub target: &'a [f64],
    pub penalty: PenaltyParams,
    pub objective: ObjectiveKind,
}

/// Monte Carlo mean of the nodal gradient density. The descent direction is
/// its negative.
pub fn gradient_density(mode: DirectionMode, solutions: &[SampleSolution], inputs: DensityInputs<'_>) -> Result<NodalVector> {
    if solutions.is_empty() {
        return invalid("no sample solutions");
    }
    let n = inputs.g.len();
    if inputs.target.len() != n || solutions.iter().any(|s| s.u.len() != n || s.z.len() != n) {
        return invalid("sample states and shape field differ in length");
    }
    let inv_eps = 1.0 / inputs.penalty.eps();
    let uz: Vec<NodalVector> = solutions
        .iter()
        .map(|s| s.u.iter().zip(&s.z).map(|(u, z)| u * z).collect())
        .collect();
    let half_r2 = || -> Vec<NodalVector> {
        solutions
            .iter()
            .map(|s| s.u.iter().zip(inputs.target).map(|(u, d)| 0.5 * (u - d) * (u - d)).collect())
            .collect()
    };

    let mean_uz = mc_expect_nodal(&uz)?;
    let density = match mode {
        DirectionMode::Simplified => mean_uz.iter().map(|v| inv_eps * v).collect(),
        DirectionMode::Full => {
            let mut out: NodalVector = mean_uz
                .iter()
                .zip(inputs.g)
                .map(|(v, &g)| inv_eps * inputs.penalty.h_prime(g) * v)
                .collect();
            if inputs.objective == ObjectiveKind::Shape {
                let mean_r2 = mc_expect_nodal(&half_r2())?;
                for ((o, r), &g) in out.iter_mut().zip(&mean_r2).zip(inputs.g) {
                    *o += inputs.penalty.h_prime(g) * r;
                }
            }
            out
        }
        DirectionMode::Reduced => {
            let per_sample: Vec<NodalVector> = half_r2()
                .into_iter()
                .zip(&uz)
                .map(|(r, p)| r.iter().zip(p).map(|(a, b)| a + inv_eps * b).collect())
                .collect();
            mc_expect_nodal(&per_sample)?
        }
    };
    Ok(density)
}

pub fn descent_direction(mode: DirectionMode, solutions: &[SampleSolution], inputs: DensityInputs<'_>) -> Result<NodalVector> {
    Ok(gradient_density(mode, solutions, inputs)?.into_iter().map(|v| -v).collect())
}

/// `beta * d_prev + (1 - beta) * d_new`, or `d_new` when there is no history.
pub fn momentum_update(d_prev: Option<&[f64]>, d_new: &[f64], beta: f64) -> NodalVector {
    match d_prev {
        None => d_new.to_vec(),
        Some(prev) => prev.iter().zip(d_new).map(|(p, n)| beta * p + (1.0 - beta) * n).collect(),
    }
}

/// Slope `sum_i m_i density_i d_i` with lumped nodal areas `m_i`.
pub fn armijo_slope(lumped: &[f64], density: &[f64], direction: &[f64]) -> f64 {
    lumped
        .iter()
        .zip(density)
        .zip(direction)
        .map(|((m, g), d)| m * g * d)
        .sum()
}

/// Exact derivative of the discrete expected cost along `q`, using the same
/// edge-midpoint quadrature as the assembly.
pub fn directional_derivative(assembler: &Assembler, solutions: &[SampleSolution], inputs: DensityInputs<'_>, q: &[f64]) -> Result<f64> {
    if solutions.is_empty() {
        return invalid("no sample solutions");
    }
    let pen = inputs.penalty;
    let inv_eps = 1.0 / pen.eps();
    let values: Vec<f64> = solutions
        .iter()
        .map(|s| {
            let mut total = 0.0;
            for t in 0..assembler.mesh().n_triangles() {
                let gq = assembler.midpoint_values(t, inputs.g);
                let qq = assembler.midpoint_values(t, q);
                let uq = assembler.midpoint_values(t, &s.u);
                let zq = assembler.midpoint_values(t, &s.z);
                let dq = assembler.midpoint_values(t, inputs.target);
                let mut acc = 0.0;
                for k in 0..3 {
                    let hp = pen.h_prime(gq[k]);
                    acc += inv_eps * hp * qq[k] * uq[k] * zq[k];
                    if inputs.objective == ObjectiveKind::Shape {
                        let r = uq[k] - dq[k];
                        acc += 0.5 * hp * qq[k] * r * r;
                    }
                }
                total += acc * assembler.area(t) / 3.0;
            }
            total
        })
        .collect();
    mc_expect(&values)
}
