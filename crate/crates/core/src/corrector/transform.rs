//! Coefficients of the transformed equation for `Y = Φ(X)`:
//! `b̂ = (λu + ∇Φ b2) ∘ Φ⁻¹` and `σ̂ = (∇Φ σ) ∘ Φ⁻¹`.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use super::CorrectorField;
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::qmc::ball_points;
use crate::sampler::EvalFlags;

pub const INVERSE_TOL: f64 = 1e-10;
pub const INVERSE_MAX_ITER: usize = 100;

#[derive(Debug)]
pub struct TransformedCoefficients {
    pub problem: Problem,
    pub field: CorrectorField,
    /// Radius of the trusted ball, `R - max(4, R/3)`.
    pub inner_radius: f64,
    untrusted: AtomicU64,
}

impl Clone for TransformedCoefficients {
    fn clone(&self) -> Self {
        TransformedCoefficients {
            problem: self.problem.clone(),
            field: self.field.clone(),
            inner_radius: self.inner_radius,
            untrusted: AtomicU64::new(self.untrusted.load(Ordering::Relaxed)),
        }
    }
}

/// Least-squares fit of `<y, b̂(y)> ≈ -θ̂1 |y|² + c` on a ball sample, with
/// `θ̂2` the smallest constant making the bound hold on that sample.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FittedDissipativity {
    pub theta1_hat: f64,
    pub theta2_hat: f64,
    pub n_points: usize,
}

impl TransformedCoefficients {
    pub fn new(problem: Problem, field: CorrectorField) -> Result<Self> {
        if field.grid.dim != problem.dim {
            return Err(Error::DimensionMismatch(format!(
                "corrector has dim {}, problem has dim {}",
                field.grid.dim, problem.dim
            )));
        }
        if !(field.sup_grad_u <= 0.5) {
            return Err(Error::invalid(
                "sup_grad_u",
                field.sup_grad_u,
                "corrector gradient must not exceed 1/2",
            ));
        }
        let r = field.grid.radius;
        let inner_radius = r - (4.0f64).max(r / 3.0);
        if !(inner_radius > 0.0 && inner_radius <= r - 2.0 * field.grid.spacing()) {
            return Err(Error::invalid("R", r, "grid radius too small for a trusted inner ball"));
        }
        Ok(TransformedCoefficients {
            problem,
            field,
            inner_radius,
            untrusted: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.problem.dim
    }

    pub fn lambda(&self) -> f64 {
        self.field.lambda
    }

    /// Lower ellipticity constant of `σ̂σ̂'`.
    pub fn lambda1(&self) -> f64 {
        0.5 * self.problem.lambda_sigma
    }

    /// Upper ellipticity constant of `σ̂σ̂'`.
    pub fn lambda2(&self) -> f64 {
        2.0 / self.problem.lambda_sigma
    }

    /// Evaluations whose preimage fell outside the trusted ball.
    pub fn untrusted_hits(&self) -> u64 {
        self.untrusted.load(Ordering::Relaxed)
    }

    /// Writes `b̂(y)` and `σ̂(y)` (row-major) and flags preimages `Φ⁻¹(y)`
    /// outside the grid box or the trusted ball.
    pub fn evaluate(&self, y: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<EvalFlags> {
        let d = self.dim();
        let mut x = [0.0; 2];
        let mut u = [0.0; 2];
        let mut g = [0.0; 4];
        let mut b2 = [0.0; 2];
        let mut s = [0.0; 4];
        let (x, u, g, b2, s) = (&mut x[..d], &mut u[..d], &mut g[..d * d], &mut b2[..d], &mut s[..d * d]);
        self.field.phi_inverse_into(y, INVERSE_TOL, INVERSE_MAX_ITER, x)?;
        let out_of_domain = self.field.eval_into(x, u, g);
        self.problem.b2.eval_vector(x, b2);
        self.problem.sigma.eval_matrix(x, s);
        let lambda = self.field.lambda;
        for i in 0..d {
            // (I + ∇u) row i
            let mut acc = lambda * u[i] + b2[i];
            for k in 0..d {
                acc += g[i * d + k] * b2[k];
            }
            drift[i] = acc;
            for j in 0..d {
                let mut v = s[i * d + j];
                for k in 0..d {
                    v += g[i * d + k] * s[k * d + j];
                }
                diffusion[i * d + j] = v;
            }
        }
        let untrusted = x.iter().map(|v| v * v).sum::<f64>().sqrt() > self.inner_radius;
        if untrusted {
            self.untrusted.fetch_add(1, Ordering::Relaxed);
        }
        Ok(EvalFlags {
            out_of_domain,
            untrusted,
        })
    }

    pub fn transformed_drift(&self, y: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * d];
        self.evaluate(y, &mut b, &mut s)?;
        Ok(b)
    }

    pub fn transformed_diffusion(&self, y: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * d];
        self.evaluate(y, &mut b, &mut s)?;
        Ok(s)
    }

    /// Fits the linear-growth constants of `b̂` on `n_points` quasi-random
    /// points of the ball of radius `radius`.
    pub fn fit_dissipativity(&self, radius: f64, n_points: usize, seed: u64) -> Result<FittedDissipativity> {
        if n_points < 3 {
            return Err(Error::InsufficientPoints {
                needed: 3,
                got: n_points,
            });
        }
        let pts = ball_points(self.dim(), n_points, radius, seed);
        let mut r2 = Vec::with_capacity(pts.len());
        let mut ip = Vec::with_capacity(pts.len());
        for y in &pts {
            let b = self.transformed_drift(y)?;
            r2.push(y.iter().map(|v| v * v).sum::<f64>());
            ip.push(y.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>());
        }
        let n = r2.len() as f64;
        let mx = r2.iter().sum::<f64>() / n;
        let my = ip.iter().sum::<f64>() / n;
        let sxx: f64 = r2.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = r2.iter().zip(&ip).map(|(x, y)| (x - mx) * (y - my)).sum();
        let theta1_hat = -sxy / sxx;
        let theta2_hat = r2
            .iter()
            .zip(&ip)
            .map(|(x, y)| y + theta1_hat * x)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        Ok(FittedDissipativity {
            theta1_hat,
            theta2_hat,
            n_points: pts.len(),
        })
    }
}
