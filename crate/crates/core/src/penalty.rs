//! Smoothed cutoff `H_eps`, its derivative, and the random diffusion field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::mesh::Mesh;

/// Penalty parameter `eps > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    eps: f64,
}

impl PenaltyParams {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return invalid(format!("eps must be positive and finite, got {eps}"));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// 1 on `g >= 0`, 0 on `g <= -eps`, cubic blend `(eps - 2g)(g + eps)^2 / eps^3` in between.
    #[inline]
    pub fn h(&self, g: f64) -> f64 {
        let e = self.eps;
        if g >= 0.0 {
            1.0
        } else if g <= -e {
            0.0
        } else {
            let s = g + e;
            (e - 2.0 * g) * s * s / (e * e * e)
        }
    }

    /// Derivative of [`Self::h`]; zero at both kinks.
    #[inline]
    pub fn h_prime(&self, g: f64) -> f64 {
        let e = self.eps;
        if g >= 0.0 || g <= -e {
            0.0
        } else {
            -6.0 * g * (g + e) / (e * e * e)
        }
    }

    /// Lipschitz constant of `h`, attained at `g = -eps/2`.
    pub fn lipschitz(&self) -> f64 {
        1.5 / self.eps
    }
}

pub fn h_eps(g: f64, eps: f64) -> Result<f64> {
    Ok(PenaltyParams::new(eps)?.h(g))
}

pub fn h_eps_prime(g: f64, eps: f64) -> Result<f64> {
    Ok(PenaltyParams::new(eps)?.h_prime(g))
}

/// One realization of the elementwise-constant perturbation `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSample {
    /// Per-triangle values in `[-1, 1]`.
    pub eta: Vec<f64>,
    pub rho: f64,
    pub sample_id: u64,
}

impl CoefficientSample {
    /// Deterministic sample with `alpha = 1` everywhere.
    pub fn unit(n_triangles: usize) -> Self {
        Self {
            eta: vec![0.0; n_triangles],
            rho: 0.0,
            sample_id: 0,
        }
    }

    /// Diffusion coefficient `1 + rho * eta` on triangle `t`.
    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        1.0 + self.rho * self.eta[t]
    }
}

/// Draws iid uniform `[-1, 1]` values, one per triangle.
///
/// The stream is keyed by `(seed, sample_id)`: the ChaCha stream id carries
/// the sample id and element `t` consumes the `t`-th draw, so a sample never
/// depends on how many other samples exist or which thread builds it.
pub fn sample_coefficient(mesh: &Mesh, rho: f64, seed: u64, sample_id: u64) -> Result<CoefficientSample> {
    if !(0.0..1.0).contains(&rho) {
        return invalid(format!("rho must lie in [0, 1), got {rho}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_id);
    let eta = (0..mesh.n_triangles()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Ok(CoefficientSample { eta, rho, sample_id })
}
