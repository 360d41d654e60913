//! Expected Hurst estimate of the implied-vol proxy.
//!
//! For an option expiry of `T` days and a regression span of `K` days,
//!
//! ```text
//! H_hat = (ln f(T / K) - ln f(T)) / (2 ln K) + H
//! ```
//!
//! which is the two-point (`q = 2`, first and last lag) slope of the log
//! moment regression. The scale function `f` is supplied by the caller.
//! An empirical alternative fits measured estimates against model `H`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BiasError {
    #[error("invalid bias config: {0}")]
    InvalidConfig(String),
    #[error("f_hat({theta}) = {value} is not positive")]
    NonPositive { theta: f64, value: f64 },
    #[error("need at least two distinct model H values for a line fit")]
    TooFewPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub t_days: f64,
    pub k_days: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            t_days: 1.0,
            k_days: 25.0,
        }
    }
}

/// `f_hat` may depend on the model `H` as well as on `theta`.
pub fn theoretical_h_hat<F>(h: f64, cfg: &BiasConfig, f_hat: F) -> Result<f64, BiasError>
where
    F: Fn(f64, f64) -> f64,
{
    if !(cfg.t_days > 0.0) || !(cfg.k_days > 1.0) {
        return Err(BiasError::InvalidConfig(format!(
            "need t_days > 0 and k_days > 1, got {cfg:?}"
        )));
    }
    let eval = |theta: f64| {
        let value = f_hat(theta, h);
        if value > 0.0 {
            Ok(value.ln())
        } else {
            Err(BiasError::NonPositive { theta, value })
        }
    };
    let short = eval(cfg.t_days / cfg.k_days)?;
    let long = eval(cfg.t_days)?;
    Ok((short - long) / (2.0 * cfg.k_days.ln()) + h)
}

/// Least-squares line of measured estimates against model `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasLine {
    pub slope: f64,
    pub intercept: f64,
}

impl BiasLine {
    pub fn fit(model_h: &[f64], measured: &[f64]) -> Result<Self, BiasError> {
        let n = model_h.len().min(measured.len());
        if n < 2 {
            return Err(BiasError::TooFewPoints);
        }
        let (xs, ys) = (&model_h[..n], &measured[..n]);
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(BiasError::TooFewPoints);
        }
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        Ok(Self {
            slope,
            intercept: my - slope * mx,
        })
    }

    /// Model `H` implied by a measured estimate.
    pub fn invert(&self, measured: f64) -> f64 {
        (measured - self.intercept) / self.slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scale_means_no_bias() {
        for h in [0.05, 0.2, 0.45] {
            let got = theoretical_h_hat(h, &BiasConfig { t_days: 10.0, k_days: 25.0 }, |_, _| 3.7).unwrap();
            assert!((got - h).abs() < 1e-15);
        }
    }

    #[test]
    fn power_scale_shifts_by_minus_a() {
        for a in [-0.3, 0.1, 0.25] {
            for t in [1.0, 10.0, 20.0] {
                let cfg = BiasConfig { t_days: t, k_days: 25.0 };
                let got = theoretical_h_hat(0.1, &cfg, |theta, _| theta.powf(2.0 * a)).unwrap();
                assert!((got - (0.1 - a)).abs() < 1e-12, "a {a} t {t}: {got}");
            }
        }
    }

    #[test]
    fn additive_in_h_when_scale_ignores_h() {
        let cfg = BiasConfig { t_days: 10.0, k_days: 25.0 };
        let f = |theta: f64, _h: f64| 1.0 + theta.sqrt();
        let a = theoretical_h_hat(0.1, &cfg, f).unwrap();
        let b = theoretical_h_hat(0.13, &cfg, f).unwrap();
        assert!((b - a - 0.03).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = BiasConfig::default();
        assert!(matches!(
            theoretical_h_hat(0.1, &cfg, |theta, _| theta - 0.5),
            Err(BiasError::NonPositive { .. })
        ));
        assert!(theoretical_h_hat(0.1, &BiasConfig { t_days: 1.0, k_days: 1.0 }, |_, _| 1.0).is_err());
        assert!(theoretical_h_hat(0.1, &BiasConfig { t_days: 0.0, k_days: 25.0 }, |_, _| 1.0).is_err());
    }

    #[test]
    fn line_fit_and_inverse() {
        let xs = [0.05, 0.1, 0.2, 0.3];
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 + 0.6 * x).collect();
        let line = BiasLine::fit(&xs, &ys).unwrap();
        assert!((line.slope - 0.6).abs() < 1e-12 && (line.intercept - 0.3).abs() < 1e-12);
        assert!((line.invert(0.36) - 0.1).abs() < 1e-12);
        assert_eq!(BiasLine::fit(&[0.1], &[0.2]), Err(BiasError::TooFewPoints));
        assert_eq!(BiasLine::fit(&[0.1, 0.1], &[0.2, 0.3]), Err(BiasError::TooFewPoints));
    }
}
