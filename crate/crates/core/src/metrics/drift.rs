use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::{chain_seed, em_step_into, Coefficients, NoiseStream, StepBuffers};

/// Monte-Carlo check of `E V(Z_1^x) <= (1 - θ̂1 η/2) V(x) + c3 η 1_B(x)`
/// with `V(x) = 1 + |x|²`.
#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub eta: f64,
    pub probe_points: Vec<Vec<f64>>,
    /// Estimated `E V(Z_1^x)`.
    pub lhs: Vec<f64>,
    /// Standard errors of `lhs`.
    pub lhs_se: Vec<f64>,
    pub rhs: Vec<f64>,
    pub violations: usize,
    pub fitted_theta1_hat: f64,
    pub theta1_se: f64,
    pub fitted_c3: f64,
    /// `B = {x : |x|² <= 2 c3 / θ̂1 - 1}` as a radius.
    pub ball_radius: f64,
}

impl DriftReport {
    /// No 3σ violations and `θ̂1` positive beyond three standard errors.
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.fitted_theta1_hat - 3.0 * self.theta1_se > 0.0
    }
}

fn lyapunov(x: &[f64]) -> f64 {
    1.0 + x.iter().map(|v| v * v).sum::<f64>()
}

/// Estimates `E V(Z_1^x)` at each probe from `n_draws` one-step draws.
///
/// The constants are fitted on the even-indexed probes: `θ̂1` from the least
/// squares slope of `E V(Z_1^x) ≈ (1 - θ̂1 η) V(x) + c`, and `c3` as the
/// smallest constant with `E V(Z_1^x) <= (1 - θ̂1 η) V(x) + c3 η` on those
/// probes (at least `θ̂1`). Every probe is then checked against the one-step
/// drift inequality with the halved contraction, so the odd-indexed probes
/// act as held-out points.
pub fn lyapunov_drift_probe<C: Coefficients + ?Sized>(
    coeffs: &C,
    probe_points: &[Vec<f64>],
    eta: f64,
    n_draws: usize,
    seed: u64,
) -> Result<DriftReport> {
    if n_draws < 1000 {
        return Err(Error::InvalidArgument(format!("n_draws must be at least 1000, got {n_draws}")));
    }
    if probe_points.len() < 5 {
        return Err(Error::InsufficientPoints {
            needed: 5,
            got: probe_points.len(),
        });
    }
    if !(eta > 0.0) {
        return Err(Error::invalid("eta", eta, "step size must be positive"));
    }
    let d = coeffs.dim();
    let mut buf = StepBuffers::new(d);
    let mut xi = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut lhs = Vec::with_capacity(probe_points.len());
    let mut lhs_se = Vec::with_capacity(probe_points.len());
    for (p, x) in probe_points.iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch(format!("probe {p} has the wrong dimension")));
        }
        let mut noise = NoiseStream::new(chain_seed(seed, p), d);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n_draws {
            noise.fill(&mut xi);
            em_step_into(coeffs, x, eta, &xi, &mut buf, &mut next)?;
            let v = lyapunov(&next);
            s1 += v;
            s2 += v * v;
        }
        let n = n_draws as f64;
        let mean = s1 / n;
        let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
        lhs.push(mean);
        lhs_se.push((var / n).sqrt());
    }

    let vs: Vec<f64> = probe_points.iter().map(|x| lyapunov(x)).collect();
    let fit: Vec<usize> = (0..vs.len()).step_by(2).collect();
    let n = fit.len() as f64;
    let mv = fit.iter().map(|&i| vs[i]).sum::<f64>() / n;
    let ml = fit.iter().map(|&i| lhs[i]).sum::<f64>() / n;
    let sxx: f64 = fit.iter().map(|&i| (vs[i] - mv).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("probe points must span several radii".into()));
    }
    let sxy: f64 = fit.iter().map(|&i| (vs[i] - mv) * (lhs[i] - ml)).sum();
    let slope = sxy / sxx;
    let intercept = ml - slope * mv;
    let resid2: f64 = fit
        .iter()
        .map(|&i| (lhs[i] - intercept - slope * vs[i]).powi(2))
        .sum();
    let slope_se = (resid2 / (n - 2.0) / sxx).sqrt();
    let theta1 = (1.0 - slope) / eta;
    let theta1_se = slope_se / eta;
    let c3 = fit
        .iter()
        .map(|&i| (lhs[i] - (1.0 - theta1 * eta) * vs[i]) / eta)
        .fold(theta1, f64::max);
    let ball_radius = if theta1 > 0.0 {
        (2.0 * c3 / theta1 - 1.0).max(0.0).sqrt()
    } else {
        f64::INFINITY
    };

    let mut rhs = Vec::with_capacity(vs.len());
    let mut violations = 0;
    for i in 0..vs.len() {
        let in_ball = (vs[i] - 1.0).sqrt() <= ball_radius;
        let bound = (1.0 - 0.5 * theta1 * eta) * vs[i] + if in_ball { c3 * eta } else { 0.0 };
        if lhs[i] - 3.0 * lhs_se[i] > bound {
            violations += 1;
        }
        rhs.push(bound);
    }
    Ok(DriftReport {
        eta,
        probe_points: probe_points.to_vec(),
        lhs,
        lhs_se,
        rhs,
        violations,
        fitted_theta1_hat: theta1,
        theta1_se,
        fitted_c3: c3,
        ball_radius,
    })
}
