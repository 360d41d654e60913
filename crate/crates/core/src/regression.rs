//! Moment-scaling (log-regression) Hurst estimator.
//!
//! `m(q, lag)` is the mean of `|X(t_{i+lag}) - X(t_i)|^q`. For each `q` the
//! slope `zeta_q` of `ln m` against `ln lag` is fitted by OLS, and `H` is the
//! slope of `zeta_q` against `q` through the origin. Callers pass log-vol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::TimeSeriesPath;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RegressionError {
    #[error("invalid regression config: {0}")]
    InvalidConfig(String),
    #[error("lag {lag} must be below the path length {n}")]
    LagTooLarge { lag: usize, n: usize },
    #[error("{n} observations is too few for max lag {max_lag} (need {needed})")]
    InsufficientData { n: usize, max_lag: usize, needed: usize },
    #[error("moment m(q={q}, lag={lag}) is zero")]
    DegenerateMoment { q: f64, lag: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub q_list: Vec<f64>,
    /// `None` selects `floor(n / max_lag_div)`.
    pub max_lag: Option<usize>,
    pub max_lag_div: usize,
    pub min_lag: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            q_list: vec![0.5, 1.0, 1.5, 2.0, 3.0],
            max_lag: None,
            max_lag_div: 40,
            min_lag: 1,
        }
    }
}

impl RegressionConfig {
    pub fn resolved_max_lag(&self, n: usize) -> usize {
        self.max_lag.unwrap_or(n / self.max_lag_div.max(1))
    }

    fn validate(&self, n: usize) -> Result<usize, RegressionError> {
        let bad = |m: String| Err(RegressionError::InvalidConfig(m));
        if self.q_list.is_empty() || self.q_list.iter().any(|&q| !(q > 0.0)) {
            return bad("q_list must be nonempty with all q > 0".into());
        }
        let max_lag = self.resolved_max_lag(n);
        if self.min_lag < 1 || self.min_lag >= max_lag || max_lag >= n {
            return bad(format!(
                "need 1 <= min_lag ({}) < max_lag ({max_lag}) < n ({n})",
                self.min_lag
            ));
        }
        if n < 4 * max_lag {
            return Err(RegressionError::InsufficientData {
                n,
                max_lag,
                needed: 4 * max_lag,
            });
        }
        Ok(max_lag)
    }
}

pub fn moment(path: &TimeSeriesPath, q: f64, lag: usize) -> Result<f64, RegressionError> {
    let v = path.values();
    if lag >= v.len() {
        return Err(RegressionError::LagTooLarge { lag, n: v.len() });
    }
    let count = v.len() - lag;
    let sum: f64 = v.iter().zip(&v[lag..]).map(|(a, b)| (b - a).abs().powf(q)).sum();
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub q: f64,
    pub lag: usize,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub q: f64,
    pub zeta: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub h: f64,
    pub slopes: Vec<ScalingFit>,
    pub moments: Vec<MomentPoint>,
    pub min_lag: usize,
    pub max_lag: usize,
    /// Same fit with `max_lag / 2`, when that still leaves two lags.
    pub h_half_max_lag: Option<f64>,
    /// Lags enter the OLS fits with equal weight.
    pub weighting: String,
}

impl RegressionFit {
    /// `q,lag,m,log_m` rows for plotting the scaling panels.
    pub fn write_moments_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "q,lag,m,log_m")?;
        for p in &self.moments {
            writeln!(out, "{},{},{:.16e},{:.16e}", p.q, p.lag, p.m, p.m.ln())?;
        }
        Ok(())
    }
}

/// Ordinary least squares `y = a + b x`; returns `(b, r^2)`.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

fn fit_lags(
    path: &TimeSeriesPath,
    q_list: &[f64],
    min_lag: usize,
    max_lag: usize,
) -> Result<(f64, Vec<ScalingFit>, Vec<MomentPoint>), RegressionError> {
    let lags: Vec<usize> = (min_lag..=max_lag).collect();
    let log_lags: Vec<f64> = lags.iter().map(|&l| (l as f64).ln()).collect();
    let mut slopes = Vec::with_capacity(q_list.len());
    let mut moments = Vec::with_capacity(q_list.len() * lags.len());
    for &q in q_list {
        let mut log_m = Vec::with_capacity(lags.len());
        for &lag in &lags {
            let m = moment(path, q, lag)?;
            if m <= 0.0 {
                return Err(RegressionError::DegenerateMoment { q, lag });
            }
            moments.push(MomentPoint { q, lag, m });
            log_m.push(m.ln());
        }
        let (zeta, r_squared) = ols(&log_lags, &log_m);
        slopes.push(ScalingFit { q, zeta, r_squared });
    }
    // zeta_0 = 0, so fit through the origin
    let num: f64 = slopes.iter().map(|s| s.q * s.zeta).sum();
    let den: f64 = slopes.iter().map(|s| s.q * s.q).sum();
    Ok((num / den, slopes, moments))
}

pub fn estimate_h_regression(
    path: &TimeSeriesPath,
    cfg: &RegressionConfig,
) -> Result<RegressionFit, RegressionError> {
    let max_lag = cfg.validate(path.len())?;
    let (h, slopes, moments) = fit_lags(path, &cfg.q_list, cfg.min_lag, max_lag)?;
    let half = max_lag / 2;
    let h_half_max_lag = if half > cfg.min_lag {
        Some(fit_lags(path, &cfg.q_list, cfg.min_lag, half)?.0)
    } else {
        None
    };
    Ok(RegressionFit {
        h,
        slopes,
        moments,
        min_lag: cfg.min_lag,
        max_lag,
        h_half_max_lag,
        weighting: "equal".to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bm(n: usize, seed: u64) -> TimeSeriesPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        let v = (0..n)
            .map(|_| {
                x += rng.sample::<f64, _>(rand_distr::StandardNormal);
                x
            })
            .collect();
        TimeSeriesPath::business_daily(v).unwrap()
    }

    #[test]
    fn moment_examples() {
        let flat = TimeSeriesPath::business_daily(vec![3.0; 10]).unwrap();
        assert_eq!(moment(&flat, 1.5, 3).unwrap(), 0.0);

        let zigzag = TimeSeriesPath::business_daily((0..20).map(|i| (i % 2) as f64).collect()).unwrap();
        assert_eq!(moment(&zigzag, 2.0, 1).unwrap(), 1.0);

        let c = 0.37;
        let lin = TimeSeriesPath::business_daily((0..50).map(|i| i as f64 * c).collect()).unwrap();
        for lag in [1, 4, 17] {
            assert!((moment(&lin, 1.0, lag).unwrap() - c * lag as f64).abs() < 1e-12);
        }
        assert!(matches!(moment(&lin, 1.0, 50), Err(RegressionError::LagTooLarge { .. })));
    }

    #[test]
    fn degenerate_and_config_errors() {
        let flat = TimeSeriesPath::business_daily(vec![1.0; 400]).unwrap();
        assert!(matches!(
            estimate_h_regression(&flat, &RegressionConfig::default()),
            Err(RegressionError::DegenerateMoment { .. })
        ));
        let short = bm(60, 1);
        assert!(estimate_h_regression(&short, &RegressionConfig::default()).is_err());
        let cfg = RegressionConfig {
            max_lag: Some(30),
            ..Default::default()
        };
        assert!(matches!(
            estimate_h_regression(&short, &cfg),
            Err(RegressionError::InsufficientData { .. })
        ));
    }

    #[test]
    fn brownian_paths_give_one_half_on_average() {
        let hs: Vec<f64> = (0..40)
            .map(|s| estimate_h_regression(&bm(4000, s), &RegressionConfig::default()).unwrap().h)
            .collect();
        let mean = hs.iter().sum::<f64>() / hs.len() as f64;
        assert!((0.45..=0.55).contains(&mean), "mean {mean}");
    }

    #[test]
    fn diagnostics_are_reported() {
        let fit = estimate_h_regression(&bm(2000, 5), &RegressionConfig::default()).unwrap();
        assert_eq!(fit.max_lag, 50);
        assert_eq!(fit.slopes.len(), 5);
        assert_eq!(fit.moments.len(), 5 * 50);
        assert!(fit.h_half_max_lag.is_some());
        assert!(fit.slopes.iter().all(|s| s.r_squared > 0.9));
        let mut buf = Vec::new();
        fit.write_moments_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 251);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn affine_maps_leave_h_unchanged(seed in 0u64..500, c in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0], shift in -50.0f64..50.0) {
            let p = bm(400, seed);
            let base = estimate_h_regression(&p, &RegressionConfig::default()).unwrap();
            let moved = estimate_h_regression(&p.map_values(|v| c * v + shift).unwrap(), &RegressionConfig::default()).unwrap();
            prop_assert!((base.h - moved.h).abs() < 1e-9);
            for (a, b) in base.slopes.iter().zip(&moved.slopes) {
                prop_assert!((a.zeta - b.zeta).abs() < 1e-9);
            }
        }
    }
}
