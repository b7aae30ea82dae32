//! Jacobi-preconditioned conjugate gradients for SPD systems.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual `||b - A x|| / ||b||`.
    pub final_residual: f64,
    pub converged: bool,
}

impl SolveReport {
    pub fn check(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::SolverFailure {
                iterations: self.iterations,
                residual: self.final_residual,
            })
        }
    }
}

/// Linear solver settings; `max_iter = None` means `10 * n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

impl CgOptions {
    pub fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n.max(1))
    }

    pub fn solve(&self, a: &SparseMatrix, b: &[f64], x0: Option<&[f64]>) -> (Vec<f64>, SolveReport) {
        cg_solve(a, b, self.tol, self.max_iter_for(a.n()), x0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` to relative residual `tol`, warm-starting from `x0`.
///
/// Non-convergence is reported through [`SolveReport::converged`]; the
/// caller decides whether that is fatal. On exit the residual is recomputed
/// from scratch, and iteration restarts from the true residual if the
/// recursive one drifted below tolerance early.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize, x0: Option<&[f64]>) -> (Vec<f64>, SolveReport) {
    let n = a.n();
    assert_eq!(b.len(), n, "right-hand side length");
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
            },
        );
    }

    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n, "initial guess length");
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    let true_residual = |x: &[f64], r: &mut [f64], ap: &mut [f64]| {
        a.matvec_into(x, ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        norm(r) / b_norm
    };

    let mut rel = true_residual(&x, &mut r, &mut ap);
    while rel > tol && iterations < max_iter {
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            a.matvec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            iterations += 1;
            if norm(&r) / b_norm <= tol {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let prev = rel;
        rel = true_residual(&x, &mut r, &mut ap);
        if rel > tol && rel >= prev {
            // breakdown without progress
            break;
        }
    }

    let converged = rel <= tol;
    (
        x,
        SolveReport {
            iterations,
            final_residual: rel,
            converged,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_in_one_iteration() {
        let a = SparseMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        let (x, rep) = cg_solve(&a, &b, 1e-12, 50, None);
        assert!(rep.converged && rep.iterations <= 1);
        assert_eq!(x, b);
    }

    #[test]
    fn zero_rhs() {
        let a = SparseMatrix::identity(3);
        let (x, rep) = cg_solve(&a, &[0.0; 3], 1e-10, 10, Some(&[1.0, 2.0, 3.0]));
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn two_by_two() {
        let a = SparseMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]], true);
        let (x, rep) = cg_solve(&a, &[1.0, 2.0], 1e-14, 10, None);
        assert!(rep.converged);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let n = 50;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match (i as i64 - j as i64).abs() {
                        0 => 2.0,
                        1 => -1.0,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        let a = SparseMatrix::from_dense(&rows, true);
        let b = vec![1.0; n];
        let (_, rep) = cg_solve(&a, &b, 1e-12, 3, None);
        assert!(!rep.converged);
        assert!(rep.check().is_err());
        let (x, rep) = cg_solve(&a, &b, 1e-12, 500, None);
        assert!(rep.converged);
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| q - p).collect();
        assert!(norm(&r) / norm(&b) <= 1e-12);
    }
}
