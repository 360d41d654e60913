//! ATM Black-76 pricing, total-variance quadratures and the Monte-Carlo
//! implied vol of the rough exponential model.
//!
//! With the spot driver independent of the volatility driver, the conditional
//! ATM call price given a variance path is the Black-76 price at its total
//! variance, so the Monte-Carlo estimate averages `C_BS(1, 1, tau, w)` over
//! simulated continuations of the volatility path and inverts the average.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};
use thiserror::Error;

use crate::fbm::{FbmEngine, FbmError};
use crate::models::RoughExpParams;
use crate::stream::{GaussianStream, Purpose, SamplingMode, SobolNormals};
use crate::timeseries::BUSINESS_DAY;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PricingError {
    #[error("total variance {0} is negative")]
    NegativeVariance(f64),
    #[error("price {price} outside (0, 1) has no implied vol")]
    NoImpliedVol { price: f64 },
    #[error("Monte-Carlo price {price} (se {se}) outside (0, 1) on day {day}")]
    Inversion { day: usize, price: f64, se: f64 },
    #[error("segment needs at least {needed} points, got {got}")]
    SegmentTooShort { needed: usize, got: usize },
    #[error("invalid Monte-Carlo config: {0}")]
    InvalidConfig(String),
    #[error("day {day} + {maturity} days exceeds the simulated {days} days")]
    BeyondHorizon { day: usize, maturity: usize, days: usize },
    #[error(transparent)]
    Fbm(#[from] FbmError),
}

/// Forward-normalized ATM call, `2 Phi(sqrt(w) / 2) - 1`.
pub fn black76_atm_call(total_variance: f64) -> Result<f64, PricingError> {
    if total_variance < 0.0 {
        return Err(PricingError::NegativeVariance(total_variance));
    }
    Ok(erf(total_variance.sqrt() / (2.0 * SQRT_2)))
}

/// Total variance reproducing an ATM price: `(2 Phi^{-1}((c + 1) / 2))^2`.
pub fn total_variance_from_price(price: f64) -> Result<f64, PricingError> {
    if !(price > 0.0 && price < 1.0) {
        return Err(PricingError::NoImpliedVol { price });
    }
    // erf_inv alone is good to ~1e-10; polish against erf with Newton steps
    let mut y = erf_inv(price);
    for _ in 0..2 {
        let slope = std::f64::consts::FRAC_2_SQRT_PI * (-y * y).exp();
        y -= (erf(y) - price) / slope;
    }
    let x = 2.0 * SQRT_2 * y;
    Ok(x * x)
}

pub fn implied_vol_from_price(price: f64, tau: f64) -> Result<f64, PricingError> {
    Ok((total_variance_from_price(price)? / tau).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    LeftRectangular,
    RightRectangular,
    Trapezoidal,
}

impl QuadratureRule {
    pub const ALL: [QuadratureRule; 3] = [
        QuadratureRule::Trapezoidal,
        QuadratureRule::RightRectangular,
        QuadratureRule::LeftRectangular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuadratureRule::LeftRectangular => "left-rectangular",
            QuadratureRule::RightRectangular => "right-rectangular",
            QuadratureRule::Trapezoidal => "trapezoidal",
        }
    }
}

/// `sigma^2 * integral v^2` over `seg[0], seg[stride], ..., seg[n * stride]`
/// with step `dt * stride`.
#[inline]
fn quadrature(seg: &[f64], stride: usize, dt: f64, sigma: f64, rule: QuadratureRule) -> f64 {
    let n = (seg.len() - 1) / stride;
    let h = dt * stride as f64;
    let sq = |p: usize| {
        let v = seg[p * stride];
        v * v
    };
    let interior: f64 = (1..n).map(sq).sum();
    let sum = match rule {
        QuadratureRule::LeftRectangular => sq(0) + interior,
        QuadratureRule::RightRectangular => interior + sq(n),
        QuadratureRule::Trapezoidal => 0.5 * sq(0) + interior + 0.5 * sq(n),
    };
    sigma * sigma * sum * h
}

/// Total variance of a uniformly spaced vol segment `v(t_i), ..., v(t_{i+k})`.
pub fn total_variance(segment: &[f64], dt: f64, sigma: f64, rule: QuadratureRule) -> Result<f64, PricingError> {
    if segment.len() < 2 {
        return Err(PricingError::SegmentTooShort {
            needed: 2,
            got: segment.len(),
        });
    }
    Ok(quadrature(segment, 1, dt, sigma, rule))
}

/// A rule applied every `stride` fine steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    pub stride: usize,
}

impl QuadratureSpec {
    pub fn new(rule: QuadratureRule, stride: usize) -> Self {
        Self { rule, stride }
    }
}

/// Total variance along a fine-grid vol path over `[t_start, t_start + n_fine]`.
pub fn path_total_variance(
    vol: &[f64],
    start: usize,
    n_fine: usize,
    dt: f64,
    sigma: f64,
    spec: QuadratureSpec,
) -> f64 {
    quadrature(&vol[start..=start + n_fine], spec.stride, dt, sigma, spec.rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Continuations per valuation day (pairs count twice when antithetic).
    pub m_paths: usize,
    pub antithetic: bool,
    pub seed: u64,
    /// Scrambled Sobol fresh normals instead of pseudorandom streams.
    pub qmc: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            m_paths: 8192,
            antithetic: true,
            seed: 1,
            qmc: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), PricingError> {
        if self.m_paths == 0 {
            return Err(PricingError::InvalidConfig("m_paths must be positive".into()));
        }
        if self.antithetic && self.m_paths % 2 != 0 {
            return Err(PricingError::InvalidConfig("antithetic sampling needs an even m_paths".into()));
        }
        Ok(())
    }

    /// Independent samples: pairs when antithetic, single paths otherwise.
    pub fn n_samples(&self) -> usize {
        if self.antithetic {
            self.m_paths / 2
        } else {
            self.m_paths
        }
    }

    pub fn mode(&self) -> SamplingMode {
        if self.qmc {
            SamplingMode::ScrambledSobol
        } else {
            SamplingMode::Pseudorandom
        }
    }
}

/// Monte-Carlo valuation of one quadrature spec on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McQuote {
    pub price: f64,
    pub price_se: f64,
    /// Mean total variance over the continuations.
    pub mean_total_variance: f64,
    /// Total variance realized on the first continuation alone.
    pub first_total_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedVolPoint {
    pub day: usize,
    pub maturity_days: usize,
    pub implied_vol: f64,
    pub price: f64,
    pub price_se: f64,
}

/// An initial rough-exp path on the engine's grid, ready for conditional
/// valuation on any of its business days.
pub struct Valuation<'a> {
    pub engine: &'a FbmEngine,
    pub params: RoughExpParams,
    /// Fine step of the engine grid.
    pub dt: f64,
    pub steps_per_day: usize,
    /// `v` on the fine grid including `t = 0`.
    pub vol: &'a [f64],
    pub normals: &'a [f64],
}

impl<'a> Valuation<'a> {
    pub fn days(&self) -> usize {
        self.engine.len() / self.steps_per_day
    }

    /// Prices the `maturity`-day ATM call seen from `day` under every spec,
    /// sharing the same continuations across specs.
    pub fn quote(
        &self,
        day: usize,
        maturity: usize,
        mc: &McConfig,
        specs: &[QuadratureSpec],
    ) -> Result<Vec<McQuote>, PricingError> {
        mc.validate()?;
        if maturity == 0 || day + maturity > self.days() {
            return Err(PricingError::BeyondHorizon {
                day,
                maturity,
                days: self.days(),
            });
        }
        let n_fine = maturity * self.steps_per_day;
        if let Some(s) = specs.iter().find(|s| s.stride == 0 || n_fine % s.stride != 0) {
            return Err(PricingError::InvalidConfig(format!(
                "quadrature stride {} does not divide {n_fine} fine steps",
                s.stride
            )));
        }
        let start = day * self.steps_per_day;
        let known = &self.normals[..start];
        let mean = self.engine.conditional_mean(known, start + n_fine)?;
        let v0 = self.vol[start];
        let eta = self.params.eta;
        let sigma = self.params.sigma;
        let n_samples = mc.n_samples();
        let signs: &[f64] = if mc.antithetic { &[1.0, -1.0] } else { &[1.0] };

        let fresh_normals: Option<Vec<f64>> = mc.qmc.then(|| {
            let mut sobol = SobolNormals::new(n_fine, mc.seed, Purpose::SubPath, day as u64);
            let mut all = vec![0.0; n_samples * n_fine];
            for chunk in all.chunks_mut(n_fine) {
                sobol.next_into(chunk);
            }
            all
        });

        // per sample: [price, w] for each spec, averaged over the antithetic pair
        let samples: Vec<Vec<f64>> = (0..n_samples)
            .into_par_iter()
            .map_init(
                || (vec![0.0; n_fine], vec![0.0; n_fine], vec![0.0; n_fine + 1]),
                |(z, fresh, seg), q| {
                    match &fresh_normals {
                        Some(all) => z.copy_from_slice(&all[q * n_fine..(q + 1) * n_fine]),
                        None => GaussianStream::new(mc.seed, Purpose::SubPath, day as u64, q as u64).fill(z),
                    }
                    fresh.iter_mut().for_each(|x| *x = 0.0);
                    self.engine.add_fresh(start, z, 1.0, fresh);
                    let mut acc = vec![0.0; 3 * specs.len()];
                    seg[0] = v0;
                    for &sign in signs {
                        for r in 0..n_fine {
                            seg[r + 1] = (eta * (mean[r] + sign * fresh[r])).exp();
                        }
                        for (s, spec) in specs.iter().enumerate() {
                            let w = quadrature(seg, spec.stride, self.dt, sigma, spec.rule);
                            acc[2 * s] += erf(w.sqrt() / (2.0 * SQRT_2));
                            acc[2 * s + 1] += w;
                            if sign > 0.0 {
                                acc[2 * specs.len() + s] = w;
                            }
                        }
                    }
                    let k = signs.len() as f64;
                    acc[..2 * specs.len()].iter_mut().for_each(|x| *x /= k);
                    acc
                },
            )
            .collect();

        let n = n_samples as f64;
        Ok((0..specs.len())
            .map(|s| {
                let price = samples.iter().map(|a| a[2 * s]).sum::<f64>() / n;
                let var = if n_samples > 1 {
                    samples.iter().map(|a| (a[2 * s] - price).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                McQuote {
                    price,
                    price_se: (var / n).sqrt(),
                    mean_total_variance: samples.iter().map(|a| a[2 * s + 1]).sum::<f64>() / n,
                    first_total_variance: samples[0][2 * specs.len() + s],
                }
            })
            .collect())
    }

    /// Implied vol of the `maturity`-day ATM call on `day`.
    pub fn implied_vol(
        &self,
        day: usize,
        maturity: usize,
        mc: &McConfig,
        spec: QuadratureSpec,
    ) -> Result<ImpliedVolPoint, PricingError> {
        let q = self.quote(day, maturity, mc, &[spec])?[0];
        quote_to_point(day, maturity, q)
    }
}

/// Inverts a Monte-Carlo quote at `tau = maturity * 0.004`.
pub fn quote_to_point(day: usize, maturity: usize, q: McQuote) -> Result<ImpliedVolPoint, PricingError> {
    let tau = maturity as f64 * BUSINESS_DAY;
    let implied_vol = implied_vol_from_price(q.price, tau).map_err(|_| PricingError::Inversion {
        day,
        price: q.price,
        se: q.price_se,
    })?;
    Ok(ImpliedVolPoint {
        day,
        maturity_days: maturity,
        implied_vol,
        price: q.price,
        price_se: q.price_se,
    })
}

/// `day,t,tau_days,implied_vol,price_se` rows.
pub fn write_implied_vol_csv<W: std::io::Write>(points: &[ImpliedVolPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "day,t,tau_days,implied_vol,price_se")?;
    for p in points {
        writeln!(
            out,
            "{},{:.16e},{},{:.16e},{:.16e}",
            p.day,
            p.day as f64 * BUSINESS_DAY,
            p.maturity_days,
            p.implied_vol,
            p.price_se
        )?;
    }
    Ok(())
}
