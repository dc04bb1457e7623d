//! Nonparametric percentile bootstrap.

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::Interval;
use crate::scalar::Scalar;
use crate::seeds::stream_rng;

/// Resamples on which the estimator fails are dropped; more than this share
/// of drops is an error.
pub const MAX_DROP_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapSummary {
    /// Replicate estimates that succeeded, in resample order.
    pub draws: Vec<f64>,
    pub se: f64,
    pub ci: Interval,
    pub requested: usize,
    pub dropped: usize,
}

/// Sample quantile with linear interpolation between order statistics
/// (`sorted` must be ascending and non-empty).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn percentile_interval(draws: &[f64], level: f64) -> Interval {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Interval { lo: quantile(&s, a), hi: quantile(&s, 1.0 - a), level }
}

/// Draws `b` with-replacement resamples (resample r uses seed stream r) and
/// applies `estimator`, which returns one value per quantity of interest.
/// Returns one summary per quantity.
pub fn bootstrap<T: Scalar>(
    ds: &Dataset<T>,
    b: usize,
    seed: u64,
    level: f64,
    estimator: &(dyn Fn(&Dataset<T>) -> Result<Vec<f64>> + Sync),
) -> Result<Vec<BootstrapSummary>> {
    if b < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 resamples, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let n = ds.n();
    let results: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            match estimator(&ds.select(&idx)) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => Some(v),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("bootstrap resample {r} dropped: {e}");
                    None
                }
            }
        })
        .collect();

    let kept: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let dropped = b - kept.len();
    if dropped as f64 > MAX_DROP_FRACTION * b as f64 || kept.len() < 2 {
        return Err(Error::Estimation(format!("{dropped} of {b} bootstrap resamples failed")));
    }
    if dropped > 0 {
        warn!("{dropped} of {b} bootstrap resamples dropped");
    }
    let k = kept[0].len();
    if kept.iter().any(|v| v.len() != k) {
        return Err(Error::Estimation("bootstrap estimator returned vectors of varying length".into()));
    }
    Ok((0..k)
        .map(|j| {
            let draws: Vec<f64> = kept.iter().map(|v| v[j]).collect();
            let m = draws.iter().sum::<f64>() / draws.len() as f64;
            let se = (draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
            BootstrapSummary { ci: percentile_interval(&draws, level), draws, se, requested: b, dropped }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolated_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.125), 1.5);
        let ci = percentile_interval(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5);
        assert_eq!((ci.lo, ci.hi), (2.0, 4.0));
    }
}
