//! Wasserstein-1 distances, moments and the one-step Lyapunov probe.

mod drift;
mod w1;

pub use drift::{lyapunov_drift_probe, DriftReport};
pub use w1::{
    sliced_w1, w1_bootstrap_replicates, w1_exact_1d, w1_sorted, w1_to_reference_1d, W1Method, W1Result, BOOTSTRAP_RESAMPLES,
};

use crate::error::{Error, Result};
use crate::sampler::SampleSet;

/// `(1/n) Σ |x_i|^k` with the Euclidean norm.
pub fn empirical_moment(s: &SampleSet, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("moment order must be at least 1".into()));
    }
    if s.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let sum: f64 = s
        .values()
        .chunks(s.dim)
        .map(|x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if k % 2 == 0 {
                r2.powi(k as i32 / 2)
            } else {
                r2.sqrt().powi(k as i32)
            }
        })
        .sum();
    Ok(sum / s.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn moments_by_hand() {
        let zero = SampleSet::from_scalars(vec![0.0; 5]).unwrap();
        assert_eq!(empirical_moment(&zero, 2).unwrap(), 0.0);
        let pm = SampleSet::from_scalars(vec![1.0, -1.0]).unwrap();
        assert_eq!(empirical_moment(&pm, 2).unwrap(), 1.0);
        assert_eq!(empirical_moment(&pm, 3).unwrap(), 1.0);
        let empty = SampleSet::from_scalars(vec![]).unwrap();
        assert!(matches!(empirical_moment(&empty, 2), Err(Error::EmptySampleSet)));
        assert!(empirical_moment(&pm, 0).is_err());
    }

    proptest! {
        #[test]
        fn moments_scale_and_ignore_order(
            mut v in proptest::collection::vec(-5.0f64..5.0, 1..50),
            c in -3.0f64..3.0,
            k in 1u32..7,
        ) {
            let m = empirical_moment(&SampleSet::from_scalars(v.clone()).unwrap(), k).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let ms = empirical_moment(&SampleSet::from_scalars(scaled).unwrap(), k).unwrap();
            prop_assert!((ms - c.abs().powi(k as i32) * m).abs() <= 1e-9 * (1.0 + ms.abs()));
            v.reverse();
            let mr = empirical_moment(&SampleSet::from_scalars(v).unwrap(), k).unwrap();
            prop_assert!((mr - m).abs() <= 1e-12 * (1.0 + m.abs()));
        }
    }
}
