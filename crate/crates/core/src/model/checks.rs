//! Sampling-based certificates for the standing assumptions. These are
//! evidence over a finite quasi-random sample, not proofs.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::Problem;
use crate::error::{Error, Result};
use crate::qmc;

#[derive(Debug, Clone, Serialize)]
pub struct DissipativityReport {
    /// Largest sampled `<x, b2(x)> + theta1 |x|^2 - theta2`; `<= 0` means
    /// the condition holds on the sample.
    pub max_violation: f64,
    pub worst_point: Vec<f64>,
}

impl DissipativityReport {
    pub fn holds(&self) -> bool {
        self.max_violation <= 0.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub estimate: f64,
    /// Set when the estimate exceeds `theta3 (1 + 1e-6)`.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub passed: bool,
}

fn finite_or_fail(x: &[f64], v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::EvaluationFailure {
            point: x.to_vec(),
            reason: format!("{what} is not finite"),
        })
    }
}

fn check_args(n: usize, radius: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    Ok(())
}

pub fn check_dissipativity(
    problem: &Problem,
    n_points: usize,
    radius: f64,
    seed: u64,
) -> Result<DissipativityReport> {
    check_args(n_points, radius)?;
    let d = problem.dim;
    let mut b2 = vec![0.0; d];
    let mut report = DissipativityReport {
        max_violation: f64::NEG_INFINITY,
        worst_point: vec![0.0; d],
    };
    for x in qmc::ball_points(d, n_points, radius, seed) {
        problem.b2.eval_vector(&x, &mut b2);
        finite_or_fail(&x, &b2, "b2")?;
        let inner: f64 = x.iter().zip(&b2).map(|(a, b)| a * b).sum();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let v = inner + problem.theta1 * norm2 - problem.theta2;
        if v > report.max_violation {
            report.max_violation = v;
            report.worst_point = x;
        }
    }
    Ok(report)
}

pub fn check_lipschitz_b2(
    problem: &Problem,
    n_pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<LipschitzReport> {
    check_args(n_pairs, radius)?;
    let d = problem.dim;
    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    let mut estimate: f64 = 0.0;
    for pair in qmc::ball_tuples(d, 2, n_pairs, radius, seed) {
        let (x, y) = (&pair[0], &pair[1]);
        let dist = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        problem.b2.eval_vector(x, &mut bx);
        problem.b2.eval_vector(y, &mut by);
        finite_or_fail(x, &bx, "b2")?;
        finite_or_fail(y, &by, "b2")?;
        let diff = bx.iter().zip(&by).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        estimate = estimate.max(diff / dist);
    }
    Ok(LipschitzReport {
        estimate,
        flagged: estimate > problem.theta3 * (1.0 + 1e-6),
    })
}

/// Extreme eigenvalues of a symmetric row-major matrix.
pub(crate) fn symmetric_eig_range(a: &[f64], d: usize) -> (f64, f64) {
    match d {
        1 => (a[0], a[0]),
        2 => {
            let (p, q, r) = (a[0], a[1], a[3]);
            let mean = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            (mean - rad, mean + rad)
        }
        _ => {
            let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, a));
            let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    }
}

/// Row-major `s s'` with an exact-symmetry check.
pub(crate) fn outer_product(s: &[f64], d: usize, out: &mut [f64]) -> Result<()> {
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
        }
    }
    let mut asym: f64 = 0.0;
    for i in 0..d {
        for j in 0..i {
            asym = asym.max((out[i * d + j] - out[j * d + i]).abs());
        }
    }
    if asym > 1e-12 {
        return Err(Error::NonSymmetricProduct(asym));
    }
    Ok(())
}

pub fn check_ellipticity(
    problem: &Problem,
    n_points: usize,
    radius: f64,
    seed: u64,
) -> Result<EllipticityReport> {
    check_args(n_points, radius)?;
    let d = problem.dim;
    let mut s = vec![0.0; d * d];
    let mut a = vec![0.0; d * d];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in qmc::ball_points(d, n_points, radius, seed) {
        problem.diffusion(&x, &mut s);
        finite_or_fail(&x, &s, "sigma")?;
        outer_product(&s, d, &mut a)?;
        let (l, h) = symmetric_eig_range(&a, d);
        lo = lo.min(l);
        hi = hi.max(h);
    }
    let ls = problem.lambda_sigma;
    Ok(EllipticityReport {
        min_eig: lo,
        max_eig: hi,
        passed: lo >= ls && hi <= 1.0 / ls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_problem, registry, FunctionDesc, ProblemSpec};
    use proptest::prelude::*;

    fn with_b2(b2: FunctionDesc, dim: usize, theta1: f64, theta2: f64) -> Problem {
        let mut s = if dim == 1 { registry::ou_1d() } else { registry::bump_2d() };
        s.b2 = b2;
        s.theta1 = theta1;
        s.theta2 = theta2;
        make_problem(&s).unwrap()
    }

    #[test]
    fn ou_drift_is_exactly_critical() {
        let p = with_b2(FunctionDesc::linear_scale(-1.0), 1, 1.0, 0.0);
        let r = check_dissipativity(&p, 10_000, 10.0, 1).unwrap();
        assert_eq!(r.max_violation, 0.0);
        let p = with_b2(FunctionDesc::linear_scale(-1.0), 2, 1.0, 0.0);
        assert_eq!(check_dissipativity(&p, 1000, 10.0, 1).unwrap().max_violation, 0.0);
    }

    #[test]
    fn too_large_theta1_is_violated() {
        let p = with_b2(FunctionDesc::linear_scale(-1.0), 1, 2.0, 0.0);
        let r = check_dissipativity(&p, 100, 10.0, 1).unwrap();
        assert!(r.max_violation > 0.0);
        assert!(!r.holds());
    }

    #[test]
    fn perturbed_drift_matches_dense_grid_oracle() {
        // b2 = -x + 0.1 sin x with theta1 = 0.8, theta2 = 1.
        let b2 = FunctionDesc::composite(vec![
            FunctionDesc::linear_scale(-1.0),
            FunctionDesc::sine(0.1, 1.0),
        ]);
        let p = with_b2(b2, 1, 0.8, 1.0);
        let r = check_dissipativity(&p, 10_000, 10.0, 3).unwrap();
        // Oracle: dense uniform grid on [-10, 10].
        let oracle = (0..=200_000)
            .map(|i| -10.0 + 1e-4 * i as f64)
            .map(|x: f64| x * (-x + 0.1 * x.sin()) + 0.8 * x * x - 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(oracle <= 0.0);
        assert!(r.max_violation <= 0.0);
        assert!(r.max_violation <= oracle + 1e-12);
    }

    #[test]
    fn lipschitz_estimates() {
        let p = with_b2(FunctionDesc::linear_scale(-1.0), 1, 1.0, 0.0);
        let r = check_lipschitz_b2(&p, 1000, 10.0, 0).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-12);
        assert!(!r.flagged);

        let p = with_b2(FunctionDesc::linear(&[vec![-1.0, 0.0], vec![0.0, -3.0]]), 2, 1.0, 0.0);
        let r = check_lipschitz_b2(&p, 10_000, 10.0, 0).unwrap();
        assert!((2.9..=3.0 + 1e-12).contains(&r.estimate), "{}", r.estimate);
        assert!(r.flagged, "theta3 = 1 understates the operator norm 3");

        let p = with_b2(FunctionDesc::linear_scale(0.0), 1, 1.0, 0.0);
        assert_eq!(check_lipschitz_b2(&p, 100, 10.0, 0).unwrap().estimate, 0.0);
    }

    fn with_sigma(sigma: FunctionDesc, dim: usize, lambda_sigma: f64) -> Problem {
        let mut s: ProblemSpec = if dim == 1 { registry::ou_1d() } else { registry::bump_2d() };
        s.sigma = sigma;
        s.lambda_sigma = lambda_sigma;
        make_problem(&s).unwrap()
    }

    #[test]
    fn ellipticity_reports() {
        let p = with_sigma(FunctionDesc::constant_scale(1.0), 1, 0.9);
        let r = check_ellipticity(&p, 100, 10.0, 0).unwrap();
        assert_eq!((r.min_eig, r.max_eig), (1.0, 1.0));
        assert!(r.passed);

        let p = with_sigma(FunctionDesc::diagonal_sine_matrix(1.0, 0.2, 1.0), 2, 0.6);
        let r = check_ellipticity(&p, 10_000, 10.0, 0).unwrap();
        assert!(r.min_eig >= 0.64 - 1e-12 && r.max_eig <= 1.44 + 1e-12);
        // Dense sampling gets close to the (1 -/+ 0.2)^2 extremes.
        assert!(r.min_eig < 0.65 && r.max_eig > 1.43);
        assert!(r.passed);

        let p = with_sigma(FunctionDesc::constant_scale(0.0), 1, 0.5);
        let r = check_ellipticity(&p, 10, 10.0, 0).unwrap();
        assert_eq!(r.min_eig, 0.0);
        assert!(!r.passed);
    }

    #[test]
    fn eig_range_matches_nalgebra() {
        let a = [2.0, 0.5, 0.5, 1.0];
        let (lo, hi) = symmetric_eig_range(&a, 2);
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(2, 2, &a));
        let mut e: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        assert!((lo - e[0]).abs() < 1e-14 && (hi - e[1]).abs() < 1e-14);
    }

    #[test]
    fn zero_samples_is_an_argument_error() {
        let p = with_b2(FunctionDesc::linear_scale(-1.0), 1, 1.0, 0.0);
        assert!(check_dissipativity(&p, 0, 1.0, 0).is_err());
        assert!(check_ellipticity(&p, 5, -1.0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dissipative_linear_drift_never_violates(
            a11 in -3.0f64..-1.0, a22 in -3.0f64..-1.0, off in -0.5f64..0.5, seed in any::<u64>()
        ) {
            // A + A' <= -2 theta1 I with theta1 = 0.5: eigenvalues of the
            // symmetric part are at most max(a11, a22) + |off| <= -0.5.
            let theta1 = 0.5;
            let b2 = FunctionDesc::linear(&[vec![a11, off], vec![off, a22]]);
            let p = with_b2(b2, 2, theta1, 0.0);
            let r = check_dissipativity(&p, 200, 10.0, seed).unwrap();
            prop_assert!(r.max_violation <= 1e-12);
        }
    }
}
