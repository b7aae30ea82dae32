//! Three-point quadratic step selection with an Armijo safeguard.

use crate::error::Result;

use super::OptimizerParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearchOutcome {
    Accepted { alpha: f64, cost: f64 },
    /// No admissible step; `cost` is the last trial value at `alpha`.
    Stalled { alpha: f64, cost: f64 },
}

/// Picks a step along a fixed direction.
///
/// `cost_at(alpha)` evaluates the objective after stepping by `alpha`; it is
/// called at most once per distinct step. `cost0` is the current cost and
/// `slope` the directional derivative along the search direction.
pub fn line_search(
    mut cost_at: impl FnMut(f64) -> Result<f64>,
    cost0: f64,
    slope: f64,
    alpha_prev: f64,
    params: &OptimizerParams,
) -> Result<LineSearchOutcome> {
    let (lo, hi) = (params.alpha_min, params.alpha_max);
    let mut seen: Vec<(f64, f64)> = Vec::with_capacity(8);
    let mut eval = |alpha: f64| -> Result<f64> {
        if let Some(&(_, c)) = seen.iter().find(|(a, _)| a.to_bits() == alpha.to_bits()) {
            return Ok(c);
        }
        let c = cost_at(alpha)?;
        seen.push((alpha, c));
        Ok(c)
    };

    let h = 0.5 * alpha_prev;
    let probes = [alpha_prev - h, alpha_prev, alpha_prev + h];
    let mut costs = [0.0; 3];
    for (c, &a) in costs.iter_mut().zip(&probes) {
        *c = eval(a)?;
        if !c.is_finite() {
            return Ok(LineSearchOutcome::Stalled { alpha: a, cost: *c });
        }
    }

    let curvature = costs[0] - 2.0 * costs[1] + costs[2];
    let mut alpha = if curvature > 0.0 {
        alpha_prev - h * (costs[2] - costs[0]) / (2.0 * curvature)
    } else {
        let best = (0..3).fold(0, |b, i| if costs[i] < costs[b] { i } else { b });
        probes[best]
    };
    if !alpha.is_finite() {
        alpha = alpha_prev;
    }
    alpha = alpha.clamp(lo, hi);

    loop {
        let c = eval(alpha)?;
        if !c.is_finite() {
            return Ok(LineSearchOutcome::Stalled { alpha, cost: c });
        }
        if c < cost0 && c <= cost0 + params.armijo_c * alpha * slope {
            return Ok(LineSearchOutcome::Accepted { alpha, cost: c });
        }
        if alpha <= lo {
            // Armijo failed at the smallest step: any strict decrease will do
            return Ok(if c < cost0 {
                LineSearchOutcome::Accepted { alpha, cost: c }
            } else {
                LineSearchOutcome::Stalled { alpha, cost: c }
            });
        }
        alpha = (0.5 * alpha).max(lo);
    }
}
