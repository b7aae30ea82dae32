//! Penalized primal and adjoint solves per coefficient sample, costs, and
//! Monte Carlo averages.

use rayon::prelude::*;

use crate::assembly::{Assembler, MassWeight, NodalVector};
use crate::error::{invalid, Result};
use crate::mesh::{Mesh, Point, Subdomain, DEGREE4_RULE};
use crate::penalty::{CoefficientSample, PenaltyParams};
use crate::solver::{CgOptions, SolveReport};
use crate::sparse::SparseMatrix;

/// Where the tracking cost is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// `1/2 int_O (u - u_d)^2` over a fixed observation region.
    Subdomain,
    /// `1/2 int_D H_eps(g) (u - u_d)^2`, i.e. over the shape itself.
    Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Nodal values of the desired state `u_d`.
    pub target: NodalVector,
    pub subdomain: Subdomain,
}

impl ObjectiveSpec {
    pub fn on_subdomain(target: NodalVector, subdomain: Subdomain) -> Result<Self> {
        if subdomain.is_none() {
            return invalid("subdomain objective needs an observation region");
        }
        subdomain.validate()?;
        Ok(Self {
            kind: ObjectiveKind::Subdomain,
            target,
            subdomain,
        })
    }

    pub fn on_shape(target: NodalVector) -> Self {
        Self {
            kind: ObjectiveKind::Shape,
            target,
            subdomain: Subdomain::None,
        }
    }
}

/// Primal and adjoint states of one sample at the current shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSolution {
    pub sample_id: u64,
    pub u: NodalVector,
    pub z: NodalVector,
    pub cost: f64,
    pub primal_report: SolveReport,
    pub adjoint_report: SolveReport,
}

/// Primal state only, as needed when probing step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalState {
    pub sample_id: u64,
    pub u: NodalVector,
    pub cost: f64,
}

/// Everything that stays fixed while the shape changes: mesh operators, the
/// load vector, the objective and the solver settings.
#[derive(Debug, Clone)]
pub struct StateSolver {
    assembler: Assembler,
    penalty: PenaltyParams,
    mass: SparseMatrix,
    observation_mass: Option<SparseMatrix>,
    load: NodalVector,
    objective: ObjectiveSpec,
    cg: CgOptions,
}

impl StateSolver {
    pub fn new(assembler: Assembler, eps: f64, force: &[f64], objective: ObjectiveSpec, cg: CgOptions) -> Result<Self> {
        let penalty = PenaltyParams::new(eps)?;
        let n = assembler.mesh().n_vertices();
        if force.len() != n || objective.target.len() != n {
            return invalid("force and target must have one value per vertex");
        }
        let mass = assembler.assemble_mass();
        let observation_mass = match objective.kind {
            ObjectiveKind::Subdomain => Some(assembler.assemble_subdomain_mass(&objective.subdomain)?),
            ObjectiveKind::Shape => None,
        };
        let mut load = mass.matvec(force);
        zero_boundary(assembler.mesh(), &mut load);
        Ok(Self {
            assembler,
            penalty,
            mass,
            observation_mass,
            load,
            objective,
            cg,
        })
    }

    /// Same operators with a different penalty parameter.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut out = self.clone();
        out.penalty = PenaltyParams::new(eps)?;
        Ok(out)
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn mesh(&self) -> &Mesh {
        self.assembler.mesh()
    }

    pub fn eps(&self) -> f64 {
        self.penalty.eps()
    }

    pub fn penalty(&self) -> PenaltyParams {
        self.penalty
    }

    pub fn objective(&self) -> &ObjectiveSpec {
        &self.objective
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// `A(omega)` for this sample and shape, Dirichlet rows eliminated.
    pub fn operator(&self, sample: &CoefficientSample, g: &[f64]) -> Result<SparseMatrix> {
        self.assembler.assemble_stiffness(sample, g, self.eps())
    }

    /// Solves `A u = B1 f`.
    pub fn solve_primal(&self, a: &SparseMatrix, x0: Option<&[f64]>) -> Result<(NodalVector, SolveReport)> {
        let (u, report) = self.cg.solve(a, &self.load, x0);
        Ok((u, report.check()?))
    }

    /// Right-hand side of the adjoint system: `B3 (u - u_d)` for a subdomain
    /// objective, `M_{H_eps(g)} (u - u_d)` for the shape objective.
    pub fn adjoint_rhs(&self, g: &[f64], u: &[f64]) -> Result<NodalVector> {
        let r = self.residual(u);
        let mut rhs = match &self.observation_mass {
            Some(b3) => b3.matvec(&r),
            None => self.assembler.apply_weighted_mass(g, self.eps(), MassWeight::H, &r)?,
        };
        zero_boundary(self.mesh(), &mut rhs);
        Ok(rhs)
    }

    /// Solves `A z = rhs` with the operator already assembled for the primal.
    pub fn solve_adjoint(&self, a: &SparseMatrix, g: &[f64], u: &[f64], x0: Option<&[f64]>) -> Result<(NodalVector, SolveReport)> {
        let rhs = self.adjoint_rhs(g, u)?;
        let (z, report) = self.cg.solve(a, &rhs, x0);
        Ok((z, report.check()?))
    }

    pub fn residual(&self, u: &[f64]) -> NodalVector {
        u.iter().zip(&self.objective.target).map(|(a, b)| a - b).collect()
    }

    /// Tracking cost of one state.
    pub fn eval_cost(&self, u: &[f64], g: &[f64]) -> f64 {
        let r = self.residual(u);
        match &self.observation_mass {
            Some(b3) => 0.5 * b3.bilinear(&r, &r),
            None => {
                let pen = self.penalty;
                0.5 * self.assembler.midpoint_integral(g, &r, &r, |gq| pen.h(gq))
            }
        }
    }

    /// `int_D (1 - H_eps(g)) u^2`.
    pub fn penalty_mass_integral(&self, u: &[f64], g: &[f64]) -> f64 {
        let pen = self.penalty;
        self.assembler.midpoint_integral(g, u, u, |gq| 1.0 - pen.h(gq))
    }

    /// Assemble once, then primal solve, cost and adjoint solve.
    pub fn solve_sample(&self, sample: &CoefficientSample, g: &[f64], warm: Option<&SampleSolution>) -> Result<SampleSolution> {
        let a = self.operator(sample, g)?;
        let (u, primal_report) = self.solve_primal(&a, warm.map(|w| w.u.as_slice()))?;
        self.finish_sample(sample.sample_id, &a, g, u, primal_report, warm.map(|w| w.z.as_slice()))
    }

    /// Completes a sample whose primal state is already known at `g`.
    pub fn complete_sample(&self, sample: &CoefficientSample, g: &[f64], u: NodalVector, z_guess: Option<&[f64]>) -> Result<SampleSolution> {
        let a = self.operator(sample, g)?;
        let report = SolveReport {
            iterations: 0,
            final_residual: 0.0,
            converged: true,
        };
        self.finish_sample(sample.sample_id, &a, g, u, report, z_guess)
    }

    fn finish_sample(
        &self,
        sample_id: u64,
        a: &SparseMatrix,
        g: &[f64],
        u: NodalVector,
        primal_report: SolveReport,
        z_guess: Option<&[f64]>,
    ) -> Result<SampleSolution> {
        let cost = self.eval_cost(&u, g);
        let (z, adjoint_report) = self.solve_adjoint(a, g, &u, z_guess)?;
        Ok(SampleSolution {
            sample_id,
            u,
            z,
            cost,
            primal_report,
            adjoint_report,
        })
    }

    pub fn primal_sample(&self, sample: &CoefficientSample, g: &[f64], warm_u: Option<&[f64]>) -> Result<PrimalState> {
        let a = self.operator(sample, g)?;
        let (u, _) = self.solve_primal(&a, warm_u)?;
        let cost = self.eval_cost(&u, g);
        Ok(PrimalState {
            sample_id: sample.sample_id,
            u,
            cost,
        })
    }

    /// Primal and adjoint states for every sample, in sample order. Samples
    /// are distributed over the current rayon pool; each one is solved on a
    /// single thread so the result does not depend on the worker count.
    pub fn solve_ensemble(&self, samples: &[CoefficientSample], g: &[f64], warm: Option<&[SampleSolution]>) -> Result<Vec<SampleSolution>> {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| self.solve_sample(s, g, warm.and_then(|w| w.get(i))))
            .collect()
    }

    pub fn primal_ensemble(&self, samples: &[CoefficientSample], g: &[f64], warm: Option<&[NodalVector]>) -> Result<Vec<PrimalState>> {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| self.primal_sample(s, g, warm.and_then(|w| w.get(i)).map(Vec::as_slice)))
            .collect()
    }
}

pub fn zero_boundary(mesh: &Mesh, v: &mut [f64]) {
    for (x, &fixed) in v.iter_mut().zip(&mesh.boundary_vertex) {
        if fixed {
            *x = 0.0;
        }
    }
}

/// Arithmetic mean accumulated in index order as a running mean, so a list
/// of identical values averages to exactly that value.
pub fn mc_expect(values: &[f64]) -> Result<f64> {
    let (first, rest) = match values.split_first() {
        Some(split) => split,
        None => return invalid("cannot average an empty sample list"),
    };
    let mut mean = *first;
    for (k, &v) in rest.iter().enumerate() {
        mean += (v - mean) / (k + 2) as f64;
    }
    Ok(mean)
}

/// Vertex-wise running mean of nodal fields.
pub fn mc_expect_nodal<V: AsRef<[f64]>>(values: &[V]) -> Result<NodalVector> {
    let (first, rest) = match values.split_first() {
        Some(split) => split,
        None => return invalid("cannot average an empty sample list"),
    };
    let mut mean = first.as_ref().to_vec();
    for (k, v) in rest.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != mean.len() {
            return invalid("nodal fields differ in length");
        }
        let w = 1.0 / (k + 2) as f64;
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += (x - *m) * w;
        }
    }
    Ok(mean)
}

/// Expected cost over sample solutions, averaged in `sample_id` order.
pub fn expected_cost(costs: impl IntoIterator<Item = (u64, f64)>) -> Result<f64> {
    let mut pairs: Vec<(u64, f64)> = costs.into_iter().collect();
    pairs.sort_by_key(|p| p.0);
    let values: Vec<f64> = pairs.into_iter().map(|p| p.1).collect();
    mc_expect(&values)
}

/// `||u_h - u||_{L2(D)}` with a degree-4 rule on every triangle.
pub fn l2_error(mesh: &Mesh, u_h: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.corners(t);
        let area = mesh.area(t);
        for (bary, w) in DEGREE4_RULE {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let uh = bary[0] * u_h[tri[0]] + bary[1] * u_h[tri[1]] + bary[2] * u_h[tri[2]];
            let e = uh - exact(x);
            total += w * area * e * e;
        }
    }
    total.sqrt()
}
