use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// `PurePower`: `w1 = C η^p`. `PowerLog`: `w1 = C η^p |log η|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateModel {
    PurePower,
    PowerLog,
}

/// One measured step size. `replicates[b]` is the metric recomputed on the
/// `b`-th bootstrap resample of chains; all points of a fit must carry the
/// same number of replicates for the bootstrap interval to be used.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatePoint {
    pub eta: f64,
    pub w1: f64,
    pub floor: f64,
    pub replicates: Vec<f64>,
}

impl RatePoint {
    pub fn new(eta: f64, w1: f64, floor: f64) -> Self {
        RatePoint {
            eta,
            w1,
            floor,
            replicates: Vec::new(),
        }
    }

    /// Dropped points are those with `w1 <= 2 floor` (or a non-finite `w1`).
    pub fn is_bias_dominated(&self) -> bool {
        self.w1.is_finite() && self.w1 > 2.0 * self.floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// Percentiles of the exponent refitted on chain-bootstrap replicates.
    ChainBootstrap,
    /// Student-t interval from the regression residuals.
    StudentT,
    /// Exponent fixed in advance.
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: RateModel,
    pub exponent: f64,
    /// Intercept of the log-log regression, `log C`.
    pub log_constant: f64,
    /// Root mean square of the log-space residuals.
    pub residual_rms: f64,
    /// 95% interval for the exponent.
    pub ci: (f64, f64),
    pub ci_method: CiMethod,
    /// `(eta, w1, floor)` triples entering the regression.
    pub points_used: Vec<(f64, f64, f64)>,
    pub points_dropped: Vec<(f64, f64, f64)>,
}

impl RateFit {
    pub fn ci_width(&self) -> f64 {
        self.ci.1 - self.ci.0
    }
}

fn response(model: RateModel, eta: f64, w1: f64) -> f64 {
    match model {
        RateModel::PurePower => w1.ln(),
        RateModel::PowerLog => (w1 / eta.ln().abs()).ln(),
    }
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    (slope, intercept, ss, sxx)
}

type Split = (Vec<RatePoint>, Vec<(f64, f64, f64)>);

fn split_points(points: &[RatePoint]) -> Result<Split> {
    let (kept, dropped): (Vec<&RatePoint>, Vec<&RatePoint>) =
        points.iter().partition(|p| p.is_bias_dominated());
    if kept.len() < 4 {
        return Err(Error::InsufficientPoints {
            needed: 4,
            got: kept.len(),
        });
    }
    if kept.iter().all(|p| p.eta == kept[0].eta) {
        return Err(Error::DegenerateFit);
    }
    if kept.iter().any(|p| !(p.eta > 0.0 && p.eta < 1.0)) {
        return Err(Error::InvalidArgument("step sizes must lie in (0, 1)".into()));
    }
    Ok((
        kept.into_iter().cloned().collect(),
        dropped.iter().map(|p| (p.eta, p.w1, p.floor)).collect(),
    ))
}

/// Least squares of `log w1` (divided by `|log η|` for
/// [`RateModel::PowerLog`]) against `log η` over the bias-dominated points.
pub fn fit_rate(points: &[RatePoint], model: RateModel) -> Result<RateFit> {
    let (kept, dropped) = split_points(points)?;
    let x: Vec<f64> = kept.iter().map(|p| p.eta.ln()).collect();
    let y: Vec<f64> = kept.iter().map(|p| response(model, p.eta, p.w1)).collect();
    let (slope, intercept, ss, sxx) = ols(&x, &y);
    let n = x.len();

    let n_rep = kept[0].replicates.len();
    let bootstrap = n_rep >= 20 && kept.iter().all(|p| p.replicates.len() == n_rep);
    let (mut lo, mut hi, method) = if bootstrap {
        let mut slopes: Vec<f64> = (0..n_rep)
            .filter_map(|b| {
                let yb: Vec<f64> = kept
                    .iter()
                    .map(|p| response(model, p.eta, p.replicates[b]))
                    .collect();
                yb.iter().all(|v| v.is_finite()).then(|| ols(&x, &yb).0)
            })
            .collect();
        if slopes.len() < 20 {
            return Err(Error::InvalidArgument(
                "too few usable bootstrap replicates for an interval".into(),
            ));
        }
        slopes.sort_by(f64::total_cmp);
        let q = |p: f64| slopes[(p * (slopes.len() - 1) as f64).round() as usize];
        (q(0.025), q(0.975), CiMethod::ChainBootstrap)
    } else {
        let dof = (n - 2) as f64;
        let se = (ss / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(0.975);
        (slope - t * se, slope + t * se, CiMethod::StudentT)
    };
    lo = lo.min(slope);
    hi = hi.max(slope);

    Ok(RateFit {
        model,
        exponent: slope,
        log_constant: intercept,
        residual_rms: (ss / n as f64).sqrt(),
        ci: (lo, hi),
        ci_method: method,
        points_used: kept.iter().map(|p| (p.eta, p.w1, p.floor)).collect(),
        points_dropped: dropped,
    })
}

/// Pure power law with the exponent fixed to `exponent`; only `log C` is
/// fitted.
pub fn fit_pinned_power(points: &[RatePoint], exponent: f64) -> Result<RateFit> {
    let (kept, dropped) = split_points(points)?;
    let n = kept.len() as f64;
    let r: Vec<f64> = kept.iter().map(|p| p.w1.ln() - exponent * p.eta.ln()).collect();
    let c = r.iter().sum::<f64>() / n;
    let ss: f64 = r.iter().map(|v| (v - c) * (v - c)).sum();
    Ok(RateFit {
        model: RateModel::PurePower,
        exponent,
        log_constant: c,
        residual_rms: (ss / n).sqrt(),
        ci: (exponent, exponent),
        ci_method: CiMethod::Pinned,
        points_used: kept.iter().map(|p| (p.eta, p.w1, p.floor)).collect(),
        points_dropped: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand::Rng;

    fn grid() -> Vec<f64> {
        (4..=9).map(|k| 0.5f64.powi(k)).collect()
    }

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<RatePoint> = grid().iter().map(|&e| RatePoint::new(e, e.sqrt(), 0.0)).collect();
        let f = fit_rate(&pts, RateModel::PurePower).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-12);
        assert!(f.log_constant.abs() < 1e-12);
        assert!(f.residual_rms <= 1e-12);
        assert!(f.ci.0 <= f.exponent && f.exponent <= f.ci.1);
        assert_eq!(f.ci_method, CiMethod::StudentT);
    }

    #[test]
    fn power_log_recovers_its_generator() {
        let pts: Vec<RatePoint> = grid()
            .iter()
            .map(|&e| RatePoint::new(e, 3.0 * e.sqrt() * e.ln().abs(), 0.0))
            .collect();
        let f = fit_rate(&pts, RateModel::PowerLog).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-10);
        assert!((f.log_constant - 3f64.ln()).abs() < 1e-10);
        let pure = fit_rate(&pts, RateModel::PurePower).unwrap();
        assert!(pure.exponent < 0.5 && pure.residual_rms > f.residual_rms);
    }

    #[test]
    fn calibration_over_noisy_power_laws() {
        let mut covered = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<RatePoint> = grid()
                .iter()
                .map(|&e| RatePoint::new(e, e.sqrt() * (1.0 + 0.05 * gaussian(&mut rng)), 0.0))
                .collect();
            let f = fit_rate(&pts, RateModel::PurePower).unwrap();
            assert!((0.45..=0.55).contains(&f.exponent), "seed {seed}: {}", f.exponent);
            if f.ci.0 <= 0.5 && 0.5 <= f.ci.1 {
                covered += 1;
            }
        }
        assert!(covered >= 90, "coverage {covered}/100");
    }

    #[test]
    fn floor_dominated_points_are_dropped() {
        let mut pts: Vec<RatePoint> = grid().iter().map(|&e| RatePoint::new(e, e, 0.0005)).collect();
        pts.push(RatePoint::new(0.0004, 0.00099, 0.0005));
        pts.push(RatePoint::new(0.0003, 0.001, 0.0005));
        let f = fit_rate(&pts, RateModel::PurePower).unwrap();
        assert_eq!(f.points_used.len(), 6);
        assert_eq!(f.points_dropped, vec![(0.0004, 0.00099, 0.0005), (0.0003, 0.001, 0.0005)]);
        assert!((f.exponent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_interval_from_replicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<RatePoint> = grid()
            .iter()
            .map(|&e| RatePoint {
                eta: e,
                w1: e.sqrt(),
                floor: 0.0,
                replicates: (0..200).map(|_| e.sqrt() * (1.0 + 0.02 * gaussian(&mut rng))).collect(),
            })
            .collect();
        let f = fit_rate(&pts, RateModel::PurePower).unwrap();
        assert_eq!(f.ci_method, CiMethod::ChainBootstrap);
        assert!(f.ci.0 < 0.5 && f.ci.1 > 0.5 && f.ci_width() < 0.05, "{:?}", f.ci);
    }

    #[test]
    fn pinned_exponent_only_fits_the_constant() {
        let pts: Vec<RatePoint> = grid().iter().map(|&e| RatePoint::new(e, 2.0 * e.powf(0.125), 0.0)).collect();
        let f = fit_pinned_power(&pts, 0.125).unwrap();
        assert!(f.residual_rms < 1e-12 && (f.log_constant - 2f64.ln()).abs() < 1e-12);
        let off = fit_pinned_power(&pts, 0.5).unwrap();
        assert!(off.residual_rms > 0.1);
    }

    #[test]
    fn errors() {
        let few: Vec<RatePoint> = grid()[..3].iter().map(|&e| RatePoint::new(e, e, 0.0)).collect();
        assert!(matches!(
            fit_rate(&few, RateModel::PurePower),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
        let same = vec![RatePoint::new(0.1, 0.2, 0.0); 5];
        assert!(matches!(fit_rate(&same, RateModel::PowerLog), Err(Error::DegenerateFit)));
    }
}
