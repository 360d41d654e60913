//! Volatility path simulators.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbm::{FbmEngine, FbmError};
use crate::stream::GaussianStream;
use crate::timeseries::BUSINESS_DAY;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("time step {dt} does not divide one business day")]
    MisalignedStep { dt: f64 },
    #[error("engine Hurst index {engine} differs from model {model}")]
    EngineMismatch { engine: f64, model: f64 },
    #[error("negative radicand {0} in vol proxy")]
    NegativeRadicand(f64),
    #[error(transparent)]
    Fbm(#[from] FbmError),
}

/// `dF/F = sigma v dW_F`, `d ln v = eta dW^H`, `v(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoughExpParams {
    pub sigma: f64,
    pub eta: f64,
    pub h: f64,
}

impl RoughExpParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma > 0.0) || !(self.eta >= 0.0) || !(self.h > 0.0 && self.h < 1.0) {
            return Err(ModelError::InvalidParams(format!(
                "need sigma > 0, eta >= 0, 0 < h < 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Square-root variance process with correlated spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub v0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
}

impl Default for HestonParams {
    fn default() -> Self {
        Self {
            v0: 0.04,
            kappa: 1.0,
            theta: 0.04,
            xi: 0.5,
            rho: -0.7,
        }
    }
}

impl HestonParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.v0 > 0.0
            && self.kappa > 0.0
            && self.theta > 0.0
            && self.xi >= 0.0
            && (-1.0..=1.0).contains(&self.rho);
        if !ok {
            return Err(ModelError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn satisfies_feller(&self) -> bool {
        2.0 * self.kappa * self.theta >= self.xi * self.xi
    }
}

/// Uniform simulation grid whose step divides one business day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub dt: f64,
    /// Business days simulated after `t = 0`.
    pub days: usize,
}

impl SimGrid {
    pub fn new(dt: f64, days: usize) -> Result<Self, ModelError> {
        let g = Self { dt, days };
        g.steps_per_day()?;
        Ok(g)
    }

    pub fn steps_per_day(&self) -> Result<usize, ModelError> {
        let ratio = BUSINESS_DAY / self.dt;
        let spd = ratio.round();
        if !(self.dt > 0.0) || spd < 1.0 || (ratio - spd).abs() > 1e-9 {
            return Err(ModelError::MisalignedStep { dt: self.dt });
        }
        Ok(spd as usize)
    }

    pub fn n_steps(&self) -> usize {
        self.days * self.steps_per_day().unwrap_or(1)
    }

    pub fn horizon(&self) -> f64 {
        self.days as f64 * BUSINESS_DAY
    }

    /// `dt, 2 dt, ..., horizon` (excluding 0).
    pub fn fbm_grid(&self) -> Vec<f64> {
        (1..=self.n_steps()).map(|i| i as f64 * self.dt).collect()
    }

    pub fn engine(&self, h: f64) -> Result<FbmEngine, ModelError> {
        self.steps_per_day()?;
        Ok(FbmEngine::build(h, self.fbm_grid())?)
    }
}

/// Instantaneous vol on the fine grid, `v[0] = 1` at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughVolPath {
    pub dt: f64,
    pub vol: Vec<f64>,
    /// Whitened normals behind the driving fBm, one per grid step.
    pub normals: Vec<f64>,
}

impl RoughVolPath {
    /// `v` on business days, `steps_per_day` fine steps apart.
    pub fn daily(&self, steps_per_day: usize) -> Vec<f64> {
        self.vol.iter().step_by(steps_per_day).copied().collect()
    }
}

/// `v(t_p) = exp(eta W^H(t_p))` on the engine's grid.
pub fn simulate_rough_exp_vol_on(
    engine: &FbmEngine,
    params: &RoughExpParams,
    dt: f64,
    stream: &GaussianStream,
) -> Result<RoughVolPath, ModelError> {
    params.validate()?;
    if engine.hurst() != params.h {
        return Err(ModelError::EngineMismatch {
            engine: engine.hurst(),
            model: params.h,
        });
    }
    let draw = engine.draw_path(stream);
    let vol = draw
        .with_origin()
        .into_iter()
        .map(|w| (params.eta * w).exp())
        .collect();
    Ok(RoughVolPath {
        dt,
        vol,
        normals: draw.normals,
    })
}

/// Builds the engine for `grid` and draws one path. Reuse an engine via
/// [`simulate_rough_exp_vol_on`] when drawing many.
pub fn simulate_rough_exp_vol(
    params: &RoughExpParams,
    grid: &SimGrid,
    stream: &GaussianStream,
) -> Result<RoughVolPath, ModelError> {
    params.validate()?;
    let engine = grid.engine(params.h)?;
    simulate_rough_exp_vol_on(&engine, params, grid.dt, stream)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HestonPath {
    pub dt: f64,
    /// Pre-truncation Euler variance; may dip below zero.
    pub variance: Vec<f64>,
    pub spot: Vec<f64>,
}

impl HestonPath {
    /// `sqrt(max(v, 0))`.
    pub fn vol(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Full-truncation Euler scheme, spot started at 1 and evolved in logs.
pub fn simulate_heston(
    params: &HestonParams,
    grid: &SimGrid,
    stream: &GaussianStream,
) -> Result<HestonPath, ModelError> {
    params.validate()?;
    let n = grid.n_steps();
    let dt = grid.dt;
    let sq = dt.sqrt();
    let rho_perp = (1.0 - params.rho * params.rho).sqrt();
    let mut rng = stream.rng();
    let mut variance = Vec::with_capacity(n + 1);
    let mut spot = Vec::with_capacity(n + 1);
    let (mut v, mut ln_s) = (params.v0, 0.0f64);
    variance.push(v);
    spot.push(1.0);
    for _ in 0..n {
        let zv: f64 = rng.sample(StandardNormal);
        let zp: f64 = rng.sample(StandardNormal);
        let zs = params.rho * zv + rho_perp * zp;
        let vp = v.max(0.0);
        ln_s += -0.5 * vp * dt + (vp).sqrt() * sq * zs;
        v += params.kappa * (params.theta - vp) * dt + params.xi * vp.sqrt() * sq * zv;
        variance.push(v);
        spot.push(ln_s.exp());
    }
    Ok(HestonPath { dt, variance, spot })
}

/// Square root of the expected average variance over `(0, tau)` given the
/// current variance: a proxy for the ATM implied vol, not the exact Heston
/// implied vol.
pub fn heston_atm_vol_proxy(params: &HestonParams, v: f64, tau: f64) -> Result<f64, ModelError> {
    if !(tau > 0.0) {
        return Err(ModelError::InvalidParams(format!("tau must be positive, got {tau}")));
    }
    let x = params.kappa * tau;
    let weight = -(-x).exp_m1() / x;
    let radicand = params.theta + (v - params.theta) * weight;
    if radicand < 0.0 {
        return Err(ModelError::NegativeRadicand(radicand));
    }
    Ok(radicand.sqrt())
}
