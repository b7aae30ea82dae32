//! Accelerated gradient descent on the nodal level-set field.
//!
//! Each iteration solves the primal and adjoint problems for every sample,
//! forms the Monte Carlo direction, smooths it with momentum, picks a step
//! with [`line_search`], projects onto the constraint set and checks the
//! stopping tests.

mod direction;
mod line_search;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

pub use direction::{
    armijo_slope, descent_direction, directional_derivative, gradient_density, momentum_update, DensityInputs,
    DirectionMode,
};
pub use line_search::{line_search, LineSearchOutcome};

use crate::assembly::NodalVector;
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::pde::{expected_cost, PrimalState, SampleSolution, StateSolver};
use crate::penalty::CoefficientSample;
use crate::problems::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerParams {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub armijo_c: f64,
    pub momentum_beta: f64,
    pub max_iters: usize,
    pub tol_cost: f64,
    pub tol_g: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            alpha_min: 1.0,
            alpha_max: 10.0,
            armijo_c: 1e-4,
            momentum_beta: 0.9,
            max_iters: 1000,
            tol_cost: 1e-8,
            tol_g: 1e-8,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max && self.alpha_max.is_finite()) {
            return invalid(format!(
                "step bounds must satisfy 0 < alpha_min <= alpha_max, got [{}, {}]",
                self.alpha_min, self.alpha_max
            ));
        }
        if !(0.0..1.0).contains(&self.momentum_beta) {
            return invalid(format!("momentum_beta must lie in [0, 1), got {}", self.momentum_beta));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return invalid(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c));
        }
        if !(self.tol_cost >= 0.0 && self.tol_g >= 0.0) {
            return invalid("stopping tolerances must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    CostConverged,
    ShapeConverged,
    Stalled,
    SolverFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::MaxIters => "max_iters",
            Termination::CostConverged => "cost_converged",
            Termination::ShapeConverged => "shape_converged",
            Termination::Stalled => "stalled",
            Termination::SolverFailure => "solver_failure",
        }
    }

    /// Whether the run ended normally.
    pub fn is_success(self) -> bool {
        !matches!(self, Termination::Stalled | Termination::SolverFailure)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "max_iters" => Termination::MaxIters,
            "cost_converged" => Termination::CostConverged,
            "shape_converged" => Termination::ShapeConverged,
            "stalled" => Termination::Stalled,
            "solver_failure" => Termination::SolverFailure,
            other => return invalid(format!("unknown termination reason `{other}`")),
        })
    }
}

/// One row of the run history. `dcost` and `dg` are the quantities compared
/// against the stopping tolerances (relative once the new value reaches 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub step: f64,
    pub dcost: f64,
    pub dg: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl RunHistory {
    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.cost)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: RunHistory,
    pub final_g: NodalVector,
    pub mesh: Arc<Mesh>,
}

/// Clamps `g` to be nonnegative on the masked vertices.
pub fn project_feasible(g: &[f64], mask: &[bool]) -> NodalVector {
    g.iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v.max(0.0) } else { v })
        .collect()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b|`, divided by `|a|` when `|a| >= 1`.
fn scaled_change(new: f64, change: f64) -> f64 {
    if new.abs() >= 1.0 {
        change / new.abs()
    } else {
        change
    }
}

pub fn run_optimization(config: &RunConfig) -> Result<RunOutcome> {
    run_optimization_with(config, |_, _| Ok(()))
}

/// Runs the descent loop, calling `observer` after every recorded iteration
/// (including iteration 0) with the record and the current shape field.
pub fn run_optimization_with(
    config: &RunConfig,
    mut observer: impl FnMut(&IterationRecord, &[f64]) -> Result<()>,
) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    let params = config.optimizer;
    let solver = config.state_solver()?;
    let mesh = Arc::clone(solver.assembler().mesh());
    let mask = mesh.vertex_mask(&config.constraint);
    let lumped = solver.assembler().lumped_areas();
    let target = solver.objective().target.clone();

    let mut samples = config.draw_samples(&mesh, 0)?;
    let mut g = project_feasible(&config.initial_shape.interpolate(&mesh), &mask);
    let mut records = Vec::new();

    let finish = |records: Vec<IterationRecord>, termination, g: NodalVector| RunOutcome {
        history: RunHistory { records, termination },
        final_g: g,
        mesh: Arc::clone(&mesh),
    };

    let mut solutions = match solver.solve_ensemble(&samples, &g, None) {
        Ok(s) => s,
        Err(Error::SolverFailure { .. }) => return Ok(finish(records, Termination::SolverFailure, g)),
        Err(e) => return Err(e),
    };
    let mut cost = ensemble_cost(&solutions)?;
    let first = IterationRecord {
        iter: 0,
        cost,
        step: 0.0,
        dcost: 0.0,
        dg: 0.0,
        seconds: start.elapsed().as_secs_f64(),
    };
    records.push(first);
    observer(&first, &g)?;

    let mut alpha_prev = params.alpha_min;
    let mut d_prev: Option<NodalVector> = None;
    let mut stalls = 0;
    let mut termination = Termination::MaxIters;

    for iter in 1..=params.max_iters {
        let inputs = DensityInputs {
            g: &g,
            target: &target,
            penalty: solver.penalty(),
            objective: solver.objective().kind,
        };
        let density = gradient_density(config.direction, &solutions, inputs)?;
        let d_new: NodalVector = density.iter().map(|v| -v).collect();
        let mut d = momentum_update(d_prev.as_deref(), &d_new, params.momentum_beta);
        let mut slope = armijo_slope(&lumped, &density, &d);
        if !(slope < 0.0) {
            d = d_new;
            slope = armijo_slope(&lumped, &density, &d);
        }

        let warm: Vec<NodalVector> = solutions.iter().map(|s| s.u.clone()).collect();
        let mut trials: Vec<(f64, NodalVector, Vec<PrimalState>)> = Vec::new();
        let outcome = line_search(
            |alpha| {
                let stepped: NodalVector = g.iter().zip(&d).map(|(x, y)| x + alpha * y).collect();
                let g_trial = project_feasible(&stepped, &mask);
                let states = solver.primal_ensemble(&samples, &g_trial, Some(&warm))?;
                let c = expected_cost(states.iter().map(|s| (s.sample_id, s.cost)))?;
                trials.push((alpha, g_trial, states));
                Ok(c)
            },
            cost,
            slope,
            alpha_prev,
            &params,
        );
        let outcome = match outcome {
            Ok(o) => o,
            Err(Error::SolverFailure { .. }) => {
                termination = Termination::SolverFailure;
                break;
            }
            Err(e) => return Err(e),
        };

        let (alpha, new_cost) = match outcome {
            LineSearchOutcome::Accepted { alpha, cost } => (alpha, cost),
            LineSearchOutcome::Stalled { cost: trial, .. } => {
                if trial.is_finite() && scaled_change(trial, (trial - cost).abs()) < params.tol_cost {
                    termination = Termination::CostConverged;
                    break;
                }
                stalls += 1;
                d_prev = None;
                if stalls >= 2 {
                    termination = Termination::Stalled;
                    break;
                }
                continue;
            }
        };
        stalls = 0;

        let (_, g_new, states) = trials
            .into_iter()
            .find(|(a, _, _)| a.to_bits() == alpha.to_bits())
            .expect("accepted step was evaluated");
        if config.resample {
            samples = config.draw_samples(&mesh, iter)?;
        }
        let next = if config.resample {
            solver.solve_ensemble(&samples, &g_new, Some(&solutions))
        } else {
            complete_ensemble(&solver, &samples, &g_new, states, &solutions)
        };
        solutions = match next {
            Ok(s) => s,
            Err(Error::SolverFailure { .. }) => {
                termination = Termination::SolverFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        let recorded = if config.resample { ensemble_cost(&solutions)? } else { new_cost };

        let dg_abs = l2_norm(&g_new.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dcost = scaled_change(recorded, (recorded - cost).abs());
        let dg = if l2_norm(&g_new) >= 1.0 { dg_abs / l2_norm(&g_new) } else { dg_abs };
        let record = IterationRecord {
            iter,
            cost: recorded,
            step: alpha,
            dcost,
            dg,
            seconds: start.elapsed().as_secs_f64(),
        };
        records.push(record);
        g = g_new;
        cost = recorded;
        alpha_prev = alpha;
        d_prev = Some(d);
        observer(&record, &g)?;

        if dcost < params.tol_cost {
            termination = Termination::CostConverged;
            break;
        }
        if dg < params.tol_g {
            termination = Termination::ShapeConverged;
            break;
        }
    }

    Ok(finish(records, termination, g))
}

fn ensemble_cost(solutions: &[SampleSolution]) -> Result<f64> {
    expected_cost(solutions.iter().map(|s| (s.sample_id, s.cost)))
}

/// Adjoint solves for primal states already computed at `g`.
fn complete_ensemble(
    solver: &StateSolver,
    samples: &[CoefficientSample],
    g: &[f64],
    states: Vec<PrimalState>,
    previous: &[SampleSolution],
) -> Result<Vec<SampleSolution>> {
    use rayon::prelude::*;
    samples
        .par_iter()
        .zip(states.into_par_iter())
        .enumerate()
        .map(|(i, (sample, state))| solver.complete_sample(sample, g, state.u, previous.get(i).map(|p| p.z.as_slice())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_cases() {
        let g = vec![-0.3, 0.2, -0.1];
        assert_eq!(project_feasible(&g, &[false; 3]), g);
        assert_eq!(project_feasible(&g, &[true, false, false]), vec![0.0, 0.2, -0.1]);
        let ok = vec![0.0, 0.5, 1.0];
        assert_eq!(project_feasible(&ok, &[true; 3]), ok);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(g in prop::collection::vec(-1.0f64..1.0, 10), mask in prop::collection::vec(any::<bool>(), 10)) {
            let once = project_feasible(&g, &mask);
            prop_assert_eq!(project_feasible(&once, &mask), once);
        }
    }

    #[test]
    fn termination_names_round_trip() {
        for t in [
            Termination::MaxIters,
            Termination::CostConverged,
            Termination::ShapeConverged,
            Termination::Stalled,
            Termination::SolverFailure,
        ] {
            assert_eq!(t.as_str().parse::<Termination>().unwrap(), t);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(OptimizerParams::default().validate().is_ok());
        let bad = OptimizerParams {
            momentum_beta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerParams {
            alpha_min: 5.0,
            alpha_max: 2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn relative_switch() {
        assert_eq!(scaled_change(0.5, 0.1), 0.1);
        assert_eq!(scaled_change(-4.0, 1.0), 0.25);
    }
}
