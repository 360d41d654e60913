//! Named, fully serializable experiments with CSV/JSON artifacts.
//!
//! Every experiment comes in a `paper` preset (full scale, long running) and
//! a `smoke` preset small enough for CI. Runs are deterministic in
//! pseudorandom mode: all randomness is keyed by `(seed, purpose, day, path)`
//! and parallel results are reduced in index order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias::{BiasError, BiasLine};
use crate::fbm::{FbmEngine, FbmError};
use crate::models::{
    heston_atm_vol_proxy, simulate_heston, simulate_rough_exp_vol_on, HestonParams, ModelError, RoughExpParams,
    RoughVolPath, SimGrid,
};
use crate::pricing::{
    quote_to_point, write_implied_vol_csv, ImpliedVolPoint, McConfig, PricingError,
    QuadratureRule, QuadratureSpec, Valuation,
};
use crate::pvariation::{mean_std, sliding_at, EstimatorConfig, EstimatorError, SlidingSummary};
use crate::regression::{estimate_h_regression, RegressionConfig, RegressionError, RegressionFit};
use crate::stream::{GaussianStream, Purpose, SobolNormals};
use crate::timeseries::{ingest_csv, IngestSpec, TimeSeriesError, TimeSeriesPath, BUSINESS_DAY};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{context}: {source}")]
    Data {
        context: String,
        #[source]
        source: TimeSeriesError,
    },
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("{context}: {source}")]
    Estimator {
        context: String,
        #[source]
        source: EstimatorError,
    },
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Fbm(#[from] FbmError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// 2 for input/data problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Data { .. }
            | ExperimentError::InvalidSpec(_)
            | ExperimentError::Io(_)
            | ExperimentError::Json(_) => 2,
            _ => 3,
        }
    }

    fn estimator(context: impl Into<String>) -> impl FnOnce(EstimatorError) -> Self {
        let context = context.into();
        move |source| ExperimentError::Estimator { context, source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Paper,
    Smoke,
}

/// Which window starts enter a sliding estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub stride: usize,
    /// Keep only the first `n` window starts.
    pub max_windows: Option<usize>,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            stride: 1,
            max_windows: None,
        }
    }
}

impl WindowPolicy {
    pub fn starts(&self, n_obs: usize, cfg: &EstimatorConfig) -> Vec<usize> {
        if n_obs < cfg.window_len() {
            return Vec::new();
        }
        let last = n_obs - cfg.window_len();
        (0..=last)
            .step_by(self.stride.max(1))
            .take(self.max_windows.unwrap_or(usize::MAX))
            .collect()
    }
}

/// Sliding p-variation estimate of a series, optionally on its logarithm.
pub fn slide(
    path: &TimeSeriesPath,
    cfg: &EstimatorConfig,
    windows: &WindowPolicy,
    log: bool,
) -> Result<SlidingSummary, EstimatorError> {
    let series = if log {
        path.log_transform()
            .map_err(|e| EstimatorError::InvalidConfig(format!("log transform: {e}")))?
    } else {
        path.clone()
    };
    let starts = windows.starts(series.len(), cfg);
    if starts.is_empty() {
        return Err(EstimatorError::InsufficientData {
            window_start: 0,
            needed: cfg.window_len(),
            got: series.len(),
        });
    }
    sliding_at(&series, cfg, &starts)
}

/// Output directory writer that stamps every file with the resolved spec.
pub struct Artifacts {
    dir: PathBuf,
    spec_json: String,
}

impl Artifacts {
    pub fn new<S: Serialize>(dir: &Path, spec: &S) -> Result<Self, ExperimentError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_owned(),
            spec_json: serde_json::to_string(spec)?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes a CSV whose first line is `# spec=<json>`.
    pub fn csv(&self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<PathBuf, ExperimentError> {
        let mut buf = Vec::new();
        writeln!(buf, "# spec={}", self.spec_json)?;
        body(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, buf)?;
        Ok(path)
    }

    /// Writes `summary.json` as `{"spec": ..., "result": ...}`.
    pub fn summary(&self, result: serde_json::Value) -> Result<PathBuf, ExperimentError> {
        let spec: serde_json::Value = serde_json::from_str(&self.spec_json)?;
        let doc = serde_json::json!({ "spec": spec, "result": result });
        let path = self.dir.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(path)
    }
}

// ---------------------------------------------------------------------------
// Market data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub name: String,
    pub input: PathBuf,
    pub ingest: IngestSpec,
    pub estimator: EstimatorConfig,
    pub windows: WindowPolicy,
    /// Estimate on `ln X` instead of `X`.
    pub log: bool,
}

impl MarketSpec {
    pub fn new(name: &str, input: PathBuf, ingest: IngestSpec, k: usize) -> Self {
        Self {
            name: name.to_owned(),
            input,
            ingest,
            estimator: EstimatorConfig::new(k),
            windows: WindowPolicy::default(),
            log: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarketResult {
    pub summary: SlidingSummary,
    pub n_observations: usize,
    pub dropped_rows: usize,
}

pub fn run_market_roughness(spec: &MarketSpec) -> Result<MarketResult, ExperimentError> {
    let context = spec.input.display().to_string();
    let file = fs::File::open(&spec.input).map_err(|e| ExperimentError::Data {
        context: context.clone(),
        source: e.into(),
    })?;
    let ingested = ingest_csv(file, &spec.ingest).map_err(|source| ExperimentError::Data {
        context: context.clone(),
        source,
    })?;
    let summary = slide(&ingested.path, &spec.estimator, &spec.windows, spec.log)
        .map_err(ExperimentError::estimator(context))?;
    Ok(MarketResult {
        summary,
        n_observations: ingested.path.len(),
        dropped_rows: ingested.dropped_rows,
    })
}

pub fn write_market(out: &Artifacts, spec: &MarketSpec, r: &MarketResult) -> Result<(), ExperimentError> {
    out.csv("sliding.csv", |b| r.summary.write_csv(b))?;
    let mut result = r.summary.summary_json();
    result["metadata"] = serde_json::json!({
        "k": spec.estimator.k,
        "l": spec.estimator.l,
        "transform": if spec.log { "log" } else { "level" },
        "stride": spec.windows.stride,
        "n_observations": r.n_observations,
        "dropped_rows": r.dropped_rows,
    });
    out.summary(result)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Heston

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HestonSpec {
    pub name: String,
    pub seed: u64,
    pub params: HestonParams,
    pub grid: SimGrid,
    pub estimator: EstimatorConfig,
    pub n_paths: usize,
    /// Maturity of the ATM vol proxy in years.
    pub proxy_tau: f64,
}

impl HestonSpec {
    pub fn preset(scale: Scale) -> Self {
        Self {
            name: "heston-roughness".into(),
            seed: 2024,
            params: HestonParams::default(),
            grid: SimGrid { dt: BUSINESS_DAY, days: 1250 },
            estimator: EstimatorConfig::new(25),
            n_paths: match scale {
                Scale::Paper => 100,
                Scale::Smoke => 20,
            },
            proxy_tau: 1.0 / 12.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HestonPathEstimate {
    pub path: usize,
    pub vol_mean: f64,
    pub vol_std: f64,
    pub proxy_mean: f64,
    pub proxy_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HestonResult {
    pub paths: Vec<HestonPathEstimate>,
    pub vol_mean: f64,
    pub vol_std: f64,
    pub proxy_mean: f64,
    pub proxy_std: f64,
    pub feller: bool,
}

/// Sliding roughness of `sqrt(v)` and of the ATM proxy on Heston paths.
pub fn run_heston_roughness(spec: &HestonSpec) -> Result<HestonResult, ExperimentError> {
    let spd = spec.grid.steps_per_day()?;
    let paths = (0..spec.n_paths)
        .into_par_iter()
        .map(|m| {
            let sim = simulate_heston(&spec.params, &spec.grid, &GaussianStream::new(spec.seed, Purpose::Heston, 0, m as u64))?;
            let vol: Vec<f64> = sim.vol().into_iter().step_by(spd).collect();
            let proxy = vol
                .iter()
                .map(|v| heston_atm_vol_proxy(&spec.params, v * v, spec.proxy_tau))
                .collect::<Result<Vec<_>, _>>()?;
            let est = |values: Vec<f64>, what: &str| {
                let path = TimeSeriesPath::business_daily(values).map_err(|source| ExperimentError::Data {
                    context: format!("heston path {m}"),
                    source,
                })?;
                slide(&path, &spec.estimator, &WindowPolicy::default(), false)
                    .map_err(ExperimentError::estimator(format!("heston path {m} {what}")))
            };
            let v = est(vol, "vol")?;
            let p = est(proxy, "proxy")?;
            Ok(HestonPathEstimate {
                path: m,
                vol_mean: v.mean,
                vol_std: v.std,
                proxy_mean: p.mean,
                proxy_std: p.std,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let vm: Vec<f64> = paths.iter().map(|p| p.vol_mean).collect();
    let pm: Vec<f64> = paths.iter().map(|p| p.proxy_mean).collect();
    let (vol_mean, _) = mean_std(&vm);
    let (proxy_mean, _) = mean_std(&pm);
    let n = paths.len() as f64;
    Ok(HestonResult {
        vol_mean,
        vol_std: paths.iter().map(|p| p.vol_std).sum::<f64>() / n,
        proxy_mean,
        proxy_std: paths.iter().map(|p| p.proxy_std).sum::<f64>() / n,
        feller: spec.params.satisfies_feller(),
        paths,
    })
}

/// Instantaneous-vol roughness of independent rough exponential paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughExpSpec {
    pub name: String,
    pub seed: u64,
    pub params: RoughExpParams,
    pub grid: SimGrid,
    pub estimator: EstimatorConfig,
    pub n_paths: usize,
    pub log: bool,
}

impl RoughExpSpec {
    pub fn preset(scale: Scale) -> Self {
        let (grid, n_paths, k) = match scale {
            Scale::Paper => (SimGrid { dt: 0.001, days: 1000 }, 20, 25),
            Scale::Smoke => (SimGrid { dt: 0.002, days: 250 }, 5, 12),
        };
        Self {
            name: "roughexp-instantaneous".into(),
            seed: 3,
            params: RoughExpParams { sigma: 0.5, eta: 0.5, h: 0.1 },
            grid,
            estimator: EstimatorConfig::new(k),
            n_paths,
            log: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedEstimate {
    pub path: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoughExpResult {
    pub paths: Vec<SimulatedEstimate>,
    pub mean: f64,
    pub std: f64,
    /// Daily `sigma * v` of path 0.
    #[serde(skip)]
    pub first_path: Vec<f64>,
}

pub fn run_rough_exp(spec: &RoughExpSpec) -> Result<RoughExpResult, ExperimentError> {
    spec.params.validate()?;
    let spd = spec.grid.steps_per_day()?;
    let engine = spec.grid.engine(spec.params.h)?;
    let mut paths = Vec::with_capacity(spec.n_paths);
    let mut first_path = Vec::new();
    for j in 0..spec.n_paths {
        let path = initial_path(&engine, &spec.params, spec.grid.dt, spec.seed, j, None)?;
        let daily: Vec<f64> = path.daily(spd).iter().map(|v| spec.params.sigma * v).collect();
        let ctx = format!("roughexp path {j}");
        let s = slide(&series(daily.clone(), &ctx)?, &spec.estimator, &WindowPolicy::default(), spec.log)
            .map_err(ExperimentError::estimator(ctx))?;
        paths.push(SimulatedEstimate { path: j, mean: s.mean, std: s.std });
        if j == 0 {
            first_path = daily;
        }
    }
    let n = paths.len() as f64;
    let (mean, _) = mean_std(&paths.iter().map(|p| p.mean).collect::<Vec<_>>());
    Ok(RoughExpResult {
        mean,
        std: paths.iter().map(|p| p.std).sum::<f64>() / n,
        paths,
        first_path,
    })
}

pub fn write_rough_exp(out: &Artifacts, r: &RoughExpResult) -> Result<(), ExperimentError> {
    out.csv("paths.csv", |b| write_path_estimates(b, &r.paths))?;
    let path = TimeSeriesPath::business_daily(r.first_path.clone()).map_err(|source| ExperimentError::Data {
        context: "path 0".into(),
        source,
    })?;
    out.csv("vol_path0.csv", |b| path.write_csv(b))?;
    out.summary(serde_json::to_value(r)?)?;
    Ok(())
}

fn write_path_estimates<W: Write>(mut out: W, paths: &[SimulatedEstimate]) -> std::io::Result<()> {
    writeln!(out, "path,h_mean,h_std")?;
    for p in paths {
        writeln!(out, "{},{},{}", p.path, json_f64(p.mean), json_f64(p.std))?;
    }
    Ok(())
}

pub fn write_heston(out: &Artifacts, r: &HestonResult) -> Result<(), ExperimentError> {
    out.csv("paths.csv", |b| {
        writeln!(b, "path,vol_h_mean,vol_h_std,proxy_h_mean,proxy_h_std")?;
        for p in &r.paths {
            writeln!(
                b,
                "{},{},{},{},{}",
                p.path,
                json_f64(p.vol_mean),
                json_f64(p.vol_std),
                json_f64(p.proxy_mean),
                json_f64(p.proxy_std)
            )?;
        }
        Ok(())
    })?;
    out.summary(serde_json::to_value(r)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Rough exponential model: shared machinery

/// Initial vol path `j` for a model, on the engine's grid.
fn initial_path(
    engine: &FbmEngine,
    params: &RoughExpParams,
    dt: f64,
    seed: u64,
    j: usize,
    qmc: Option<&[Vec<f64>]>,
) -> Result<RoughVolPath, ExperimentError> {
    match qmc {
        None => Ok(simulate_rough_exp_vol_on(
            engine,
            params,
            dt,
            &GaussianStream::new(seed, Purpose::InitialPath, 0, j as u64),
        )?),
        Some(points) => {
            let normals = points[j].clone();
            let w = engine.path_from_normals(&normals)?;
            let vol = std::iter::once(1.0)
                .chain(w.iter().map(|x| (params.eta * x).exp()))
                .collect();
            Ok(RoughVolPath { dt, vol, normals })
        }
    }
}

fn sobol_initial_normals(dims: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, ExperimentError> {
    if dims > SobolNormals::max_dims() {
        return Err(ExperimentError::InvalidSpec(format!(
            "{dims} grid steps exceed the {} Sobol dimensions available",
            SobolNormals::max_dims()
        )));
    }
    let mut s = SobolNormals::new(dims, seed, Purpose::InitialPath, 0);
    Ok((0..count)
        .map(|_| {
            let mut v = vec![0.0; dims];
            s.next_into(&mut v);
            v
        })
        .collect())
}

fn series(values: Vec<f64>, context: &str) -> Result<TimeSeriesPath, ExperimentError> {
    TimeSeriesPath::business_daily(values).map_err(|source| ExperimentError::Data {
        context: context.to_owned(),
        source,
    })
}

/// Daily implied vols (and the matching quotes) for one maturity.
fn implied_series(
    val: &Valuation<'_>,
    days: usize,
    maturity: usize,
    mc: &McConfig,
    specs: &[QuadratureSpec],
) -> Result<Vec<Vec<crate::pricing::McQuote>>, ExperimentError> {
    Ok((0..=days)
        .into_par_iter()
        .map(|d| val.quote(d, maturity, mc, specs))
        .collect::<Result<Vec<_>, _>>()?)
}

/// Mean/std of a slide, `None` when every window failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlideStats {
    pub mean: f64,
    pub std: f64,
    pub n_windows: usize,
    pub n_failed: usize,
}

fn slide_stats(
    path: &TimeSeriesPath,
    cfg: &EstimatorConfig,
    windows: &WindowPolicy,
    log: bool,
    context: &str,
) -> Result<Option<SlideStats>, ExperimentError> {
    match slide(path, cfg, windows, log) {
        Ok(s) => Ok(Some(SlideStats {
            mean: s.mean,
            std: s.std,
            n_windows: s.n_windows(),
            n_failed: s.failures.len(),
        })),
        Err(EstimatorError::AllWindowsFailed { .. }) => Ok(None),
        Err(e) => Err(ExperimentError::estimator(context)(e)),
    }
}

/// Aggregate of per-initial-path estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathAggregate {
    pub mean: f64,
    /// Sample standard deviation across initial paths.
    pub sd: f64,
    pub se: f64,
    pub min: f64,
    pub max: f64,
    /// Mean of the per-path sliding standard deviations.
    pub sliding_std: f64,
    pub n_paths: usize,
    pub n_failed_paths: usize,
}

impl PathAggregate {
    fn from_stats(stats: &[Option<SlideStats>]) -> Option<Self> {
        let ok: Vec<&SlideStats> = stats.iter().flatten().collect();
        if ok.is_empty() {
            return None;
        }
        let n = ok.len() as f64;
        let means: Vec<f64> = ok.iter().map(|s| s.mean).collect();
        let mean = means.iter().sum::<f64>() / n;
        let sd = if ok.len() > 1 {
            (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            sd,
            se: sd / n.sqrt(),
            min: means.iter().cloned().fold(f64::INFINITY, f64::min),
            max: means.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            sliding_std: ok.iter().map(|s| s.std).sum::<f64>() / n,
            n_paths: stats.len(),
            n_failed_paths: stats.len() - ok.len(),
        })
    }

    /// Normal-approximation 95% interval of the mean.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.se, self.mean + 1.96 * self.se)
    }
}

fn json_f64(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Discretization study (Table 1)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Spec {
    pub name: String,
    pub seed: u64,
    pub model: RoughExpParams,
    /// Quadrature steps; each must be a multiple of the smallest, which is
    /// the simulation step.
    pub dts: Vec<f64>,
    pub rules: Vec<QuadratureRule>,
    pub days: usize,
    pub maturity_days: usize,
    pub n_initial_paths: usize,
    pub mc: McConfig,
    pub estimator: EstimatorConfig,
    pub windows: WindowPolicy,
    pub log: bool,
}

impl Table1Spec {
    pub fn preset(scale: Scale) -> Self {
        let model = RoughExpParams { sigma: 0.5, eta: 0.5, h: 0.1 };
        match scale {
            Scale::Paper => Self {
                name: "table1-paper".into(),
                seed: 1,
                model,
                dts: vec![0.001, 0.0004, 0.0002],
                rules: QuadratureRule::ALL.to_vec(),
                days: 1000,
                maturity_days: 1,
                n_initial_paths: 20,
                mc: McConfig { m_paths: 8192, antithetic: true, seed: 101, qmc: false },
                estimator: EstimatorConfig::new(25),
                windows: WindowPolicy { stride: 1, max_windows: Some(365) },
                log: false,
            },
            Scale::Smoke => Self {
                name: "table1-smoke".into(),
                seed: 1,
                model,
                dts: vec![0.002, 0.0005],
                rules: QuadratureRule::ALL.to_vec(),
                days: 250,
                maturity_days: 1,
                n_initial_paths: 5,
                mc: McConfig { m_paths: 1024, antithetic: true, seed: 101, qmc: false },
                estimator: EstimatorConfig::new(12),
                windows: WindowPolicy::default(),
                log: false,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Cell {
    pub dt: f64,
    pub rule: QuadratureRule,
    pub per_path: Vec<Option<SlideStats>>,
    pub aggregate: Option<PathAggregate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Result {
    pub cells: Vec<Table1Cell>,
}

impl Table1Result {
    pub fn cell(&self, dt: f64, rule: QuadratureRule) -> Option<&Table1Cell> {
        self.cells.iter().find(|c| c.rule == rule && (c.dt - dt).abs() < 1e-12)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dt,rule,h_mean,h_se,h_sd,sliding_std,n_paths,n_failed_paths")?;
        for c in &self.cells {
            match &c.aggregate {
                Some(a) => writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    c.dt,
                    c.rule.name(),
                    json_f64(a.mean),
                    json_f64(a.se),
                    json_f64(a.sd),
                    json_f64(a.sliding_std),
                    a.n_paths,
                    a.n_failed_paths
                )?,
                None => writeln!(out, "{},{},,,,,{},{}", c.dt, c.rule.name(), c.per_path.len(), c.per_path.len())?,
            }
        }
        Ok(())
    }
}

/// Ratio `dt / base` when it is a positive integer.
fn step_ratio(dt: f64, base: f64) -> Option<usize> {
    let r = dt / base;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() < 1e-9).then_some(n as usize)
}

/// Every `(dt, rule)` cell is priced from the same simulations on the finest
/// grid; coarser steps apply the rule on a subsampled grid, which has the
/// same law as simulating on the coarse grid directly.
pub fn run_table1(spec: &Table1Spec) -> Result<Table1Result, ExperimentError> {
    if spec.dts.is_empty() || spec.rules.is_empty() || spec.n_initial_paths == 0 {
        return Err(ExperimentError::InvalidSpec("table1 needs dts, rules and initial paths".into()));
    }
    let base = spec.dts.iter().cloned().fold(f64::INFINITY, f64::min);
    let grid = SimGrid::new(base, spec.days + spec.maturity_days)?;
    let spd = grid.steps_per_day()?;
    let mut specs = Vec::new();
    for &dt in &spec.dts {
        let stride = step_ratio(dt, base)
            .filter(|s| spd % s == 0)
            .ok_or_else(|| ExperimentError::InvalidSpec(format!("dt {dt} is not a multiple of {base} dividing a day")))?;
        for &rule in &spec.rules {
            specs.push((dt, QuadratureSpec::new(rule, stride)));
        }
    }
    let quad: Vec<QuadratureSpec> = specs.iter().map(|(_, q)| *q).collect();
    let engine = grid.engine(spec.model.h)?;

    let mut per_cell: Vec<Vec<Option<SlideStats>>> = vec![Vec::new(); specs.len()];
    for j in 0..spec.n_initial_paths {
        let path = initial_path(&engine, &spec.model, base, spec.seed, j, None)?;
        let val = valuation(&engine, spec.model, base, spd, &path);
        let quotes = implied_series(&val, spec.days, spec.maturity_days, &spec.mc, &quad)?;
        for (c, cell) in per_cell.iter_mut().enumerate() {
            let vols = quotes
                .iter()
                .enumerate()
                .map(|(d, q)| quote_to_point(d, spec.maturity_days, q[c]).map(|p| p.implied_vol))
                .collect::<Result<Vec<_>, _>>()?;
            let ctx = format!("table1 path {j} cell {c}");
            cell.push(slide_stats(&series(vols, &ctx)?, &spec.estimator, &spec.windows, spec.log, &ctx)?);
        }
    }
    Ok(Table1Result {
        cells: specs
            .iter()
            .zip(per_cell)
            .map(|((dt, q), per_path)| Table1Cell {
                dt: *dt,
                rule: q.rule,
                aggregate: PathAggregate::from_stats(&per_path),
                per_path,
            })
            .collect(),
    })
}

pub fn write_table1(out: &Artifacts, r: &Table1Result) -> Result<(), ExperimentError> {
    out.csv("table1.csv", |b| r.write_csv(b))?;
    out.summary(serde_json::to_value(r)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Roughness by maturity and proxy (Table 2)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proxy {
    Instantaneous,
    /// `sqrt(w / tau)` along the first Monte-Carlo continuation of each day.
    IntegratedOnPath,
    /// `sqrt(mean(w) / tau)` over the Monte-Carlo continuations.
    IntegratedOnAverage,
    Implied,
}

impl Proxy {
    pub fn name(self) -> &'static str {
        match self {
            Proxy::Instantaneous => "instantaneous",
            Proxy::IntegratedOnPath => "integrated-on-path",
            Proxy::IntegratedOnAverage => "integrated-on-average",
            Proxy::Implied => "implied",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Spec {
    pub name: String,
    pub seed: u64,
    pub sigma: f64,
    pub eta: f64,
    pub hs: Vec<f64>,
    pub maturities: Vec<usize>,
    pub dt: f64,
    pub days: usize,
    pub n_initial_paths: usize,
    pub mc: McConfig,
    pub rule: QuadratureRule,
    pub estimator: EstimatorConfig,
    /// Window starts used for each sliding estimate ("365 points" at full scale).
    pub windows: WindowPolicy,
    pub log: bool,
    pub regression: RegressionConfig,
}

impl Table2Spec {
    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Paper => Self {
                name: "table2-paper".into(),
                seed: 7,
                sigma: 0.5,
                eta: 0.5,
                hs: vec![0.05, 0.10],
                maturities: vec![1, 10, 20],
                dt: 0.001,
                days: 1000,
                n_initial_paths: 1,
                mc: McConfig { m_paths: 8192, antithetic: true, seed: 202, qmc: false },
                rule: QuadratureRule::Trapezoidal,
                estimator: EstimatorConfig::new(25),
                windows: WindowPolicy { stride: 1, max_windows: Some(365) },
                log: false,
                regression: RegressionConfig::default(),
            },
            Scale::Smoke => Self {
                name: "table2-smoke".into(),
                seed: 7,
                sigma: 0.5,
                eta: 0.5,
                hs: vec![0.05],
                maturities: vec![1, 10, 20],
                dt: 0.002,
                days: 250,
                n_initial_paths: 1,
                mc: McConfig { m_paths: 1024, antithetic: true, seed: 202, qmc: false },
                rule: QuadratureRule::Trapezoidal,
                estimator: EstimatorConfig::new(12),
                windows: WindowPolicy::default(),
                log: false,
                regression: RegressionConfig::default(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table2Cell {
    pub h: f64,
    /// 0 for the instantaneous vol.
    pub maturity_days: usize,
    pub proxy: Proxy,
    pub per_path: Vec<Option<SlideStats>>,
    pub aggregate: Option<PathAggregate>,
}

/// p-variation vs log-regression on the 1-day implied series of path 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossCheck {
    pub h: f64,
    pub maturity_days: usize,
    pub pvariation: f64,
    pub regression: RegressionFit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table2Result {
    pub cells: Vec<Table2Cell>,
    pub cross_checks: Vec<CrossCheck>,
    /// Daily implied vols of initial path 0, per `(h, maturity)`.
    #[serde(skip)]
    pub implied_series: Vec<(f64, usize, Vec<ImpliedVolPoint>)>,
}

impl Table2Result {
    pub fn cell(&self, h: f64, maturity: usize, proxy: Proxy) -> Option<&Table2Cell> {
        self.cells
            .iter()
            .find(|c| (c.h - h).abs() < 1e-12 && c.maturity_days == maturity && c.proxy == proxy)
    }

    pub fn estimate(&self, h: f64, maturity: usize, proxy: Proxy) -> Option<f64> {
        self.cell(h, maturity, proxy)?.aggregate.map(|a| a.mean)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "model_h,maturity_days,proxy,h_mean,sliding_std,h_se,n_paths,n_failed_paths")?;
        for c in &self.cells {
            match &c.aggregate {
                Some(a) => writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    c.h,
                    c.maturity_days,
                    c.proxy.name(),
                    json_f64(a.mean),
                    json_f64(a.sliding_std),
                    json_f64(a.se),
                    a.n_paths,
                    a.n_failed_paths
                )?,
                None => writeln!(
                    out,
                    "{},{},{},,,,{},{}",
                    c.h,
                    c.maturity_days,
                    c.proxy.name(),
                    c.per_path.len(),
                    c.per_path.len()
                )?,
            }
        }
        Ok(())
    }
}

struct MaturitySeries {
    maturity: usize,
    on_path: Vec<f64>,
    on_average: Vec<f64>,
    implied: Vec<ImpliedVolPoint>,
}

/// Per-path series of each proxy for one model H.
struct ProxySeries {
    instantaneous: Vec<f64>,
    by_maturity: Vec<MaturitySeries>,
}

fn proxy_series(
    val: &Valuation<'_>,
    days: usize,
    maturities: &[usize],
    mc: &McConfig,
    rule: QuadratureRule,
) -> Result<ProxySeries, ExperimentError> {
    let spec = QuadratureSpec::new(rule, 1);
    let sigma = val.params.sigma;
    let instantaneous = (0..=days).map(|d| sigma * val.vol[d * val.steps_per_day]).collect();
    let mut by_maturity = Vec::new();
    for &k in maturities {
        let tau = k as f64 * BUSINESS_DAY;
        let quotes = implied_series(val, days, k, mc, &[spec])?;
        let implied = quotes
            .iter()
            .enumerate()
            .map(|(d, q)| quote_to_point(d, k, q[0]))
            .collect::<Result<Vec<_>, _>>()?;
        by_maturity.push(MaturitySeries {
            maturity: k,
            on_path: quotes.iter().map(|q| (q[0].first_total_variance / tau).sqrt()).collect(),
            on_average: quotes.iter().map(|q| (q[0].mean_total_variance / tau).sqrt()).collect(),
            implied,
        });
    }
    Ok(ProxySeries {
        instantaneous,
        by_maturity,
    })
}

fn valuation<'a>(engine: &'a FbmEngine, params: RoughExpParams, dt: f64, spd: usize, path: &'a RoughVolPath) -> Valuation<'a> {
    Valuation {
        engine,
        params,
        dt,
        steps_per_day: spd,
        vol: &path.vol,
        normals: &path.normals,
    }
}

pub fn run_table2(spec: &Table2Spec) -> Result<Table2Result, ExperimentError> {
    if spec.hs.is_empty() || spec.maturities.is_empty() || spec.n_initial_paths == 0 {
        return Err(ExperimentError::InvalidSpec("table2 needs hs, maturities and initial paths".into()));
    }
    let max_k = *spec.maturities.iter().max().unwrap();
    let grid = SimGrid::new(spec.dt, spec.days + max_k)?;
    let spd = grid.steps_per_day()?;
    let mut cells = Vec::new();
    let mut cross_checks = Vec::new();
    let mut implied_out = Vec::new();

    for &h in &spec.hs {
        let params = RoughExpParams { sigma: spec.sigma, eta: spec.eta, h };
        params.validate()?;
        let engine = grid.engine(h)?;
        let mut all = Vec::with_capacity(spec.n_initial_paths);
        for j in 0..spec.n_initial_paths {
            let path = initial_path(&engine, &params, spec.dt, spec.seed, j, None)?;
            let val = valuation(&engine, params, spec.dt, spd, &path);
            all.push(proxy_series(&val, spec.days, &spec.maturities, &spec.mc, spec.rule)?);
        }

        let stats = |values: &[f64], ctx: String| -> Result<Option<SlideStats>, ExperimentError> {
            slide_stats(&series(values.to_vec(), &ctx)?, &spec.estimator, &spec.windows, spec.log, &ctx)
        };
        let mut push = |maturity: usize, proxy: Proxy, per_path: Vec<Option<SlideStats>>| {
            cells.push(Table2Cell {
                h,
                maturity_days: maturity,
                proxy,
                aggregate: PathAggregate::from_stats(&per_path),
                per_path,
            })
        };

        let inst = all
            .iter()
            .enumerate()
            .map(|(j, s)| stats(&s.instantaneous, format!("h {h} path {j} instantaneous")))
            .collect::<Result<Vec<_>, _>>()?;
        push(0, Proxy::Instantaneous, inst);

        for (mi, &k) in spec.maturities.iter().enumerate() {
            for proxy in [Proxy::IntegratedOnPath, Proxy::IntegratedOnAverage, Proxy::Implied] {
                let per_path = all
                    .iter()
                    .enumerate()
                    .map(|(j, s)| {
                        let m = &s.by_maturity[mi];
                        let values: Vec<f64> = match proxy {
                            Proxy::IntegratedOnPath => m.on_path.clone(),
                            Proxy::IntegratedOnAverage => m.on_average.clone(),
                            _ => m.implied.iter().map(|p| p.implied_vol).collect(),
                        };
                        stats(&values, format!("h {h} path {j} {k}d {}", proxy.name()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                push(k, proxy, per_path);
            }
            let points = &all[0].by_maturity[mi].implied;
            implied_out.push((h, k, points.clone()));
        }

        if let Some(mi) = spec.maturities.iter().position(|&k| k == 1) {
            let points = &all[0].by_maturity[mi].implied;
            let iv = series(points.iter().map(|p| p.implied_vol).collect(), "cross-check")?;
            let pvar = slide(&iv, &spec.estimator, &spec.windows, spec.log)
                .map_err(ExperimentError::estimator("cross-check p-variation"))?;
            let log_iv = iv.log_transform().map_err(|source| ExperimentError::Data {
                context: "cross-check".into(),
                source,
            })?;
            cross_checks.push(CrossCheck {
                h,
                maturity_days: 1,
                pvariation: pvar.mean,
                regression: estimate_h_regression(&log_iv, &spec.regression)?,
            });
        }
    }
    Ok(Table2Result {
        cells,
        cross_checks,
        implied_series: implied_out,
    })
}

pub fn write_table2(out: &Artifacts, r: &Table2Result) -> Result<(), ExperimentError> {
    out.csv("table2.csv", |b| r.write_csv(b))?;
    for (h, k, points) in &r.implied_series {
        out.csv(&format!("implied_h{h}_{k}d.csv"), |b| write_implied_vol_csv(points, b))?;
    }
    for c in &r.cross_checks {
        out.csv(&format!("regression_h{}_{}d.csv", c.h, c.maturity_days), |b| c.regression.write_moments_csv(b))?;
    }
    out.summary(serde_json::json!({
        "table": r.cells,
        "cross_checks": r.cross_checks,
        "metadata": {
            "windows": "consecutive window starts from day 0",
            "regression_input": "log implied vol",
            "regression_weighting": "equal",
        }
    }))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Measured vs model H (bias curve)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCurveSpec {
    pub name: String,
    pub seed: u64,
    pub sigma: f64,
    pub eta: f64,
    pub hs: Vec<f64>,
    pub maturities: Vec<usize>,
    pub dt: f64,
    pub days: usize,
    pub n_initial_paths: usize,
    /// Scrambled Sobol initial paths.
    pub initial_qmc: bool,
    pub mc: McConfig,
    pub rule: QuadratureRule,
    pub estimator: EstimatorConfig,
    pub windows: WindowPolicy,
    pub log: bool,
}

impl BiasCurveSpec {
    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Paper => Self {
                name: "bias-curve-paper".into(),
                seed: 11,
                sigma: 0.5,
                eta: 0.5,
                hs: vec![0.05, 0.10, 0.20, 0.30, 0.40],
                maturities: vec![1, 10, 20],
                dt: 0.001,
                days: 1000,
                n_initial_paths: 32,
                initial_qmc: true,
                mc: McConfig { m_paths: 8192, antithetic: true, seed: 303, qmc: false },
                rule: QuadratureRule::Trapezoidal,
                estimator: EstimatorConfig::new(25),
                windows: WindowPolicy { stride: 1, max_windows: Some(365) },
                log: false,
            },
            Scale::Smoke => Self {
                name: "bias-curve-smoke".into(),
                seed: 11,
                sigma: 0.5,
                eta: 0.5,
                hs: vec![0.05, 0.20, 0.40],
                maturities: vec![1, 10, 20],
                dt: 0.002,
                days: 250,
                n_initial_paths: 4,
                initial_qmc: false,
                mc: McConfig { m_paths: 1024, antithetic: true, seed: 303, qmc: false },
                rule: QuadratureRule::Trapezoidal,
                estimator: EstimatorConfig::new(12),
                windows: WindowPolicy::default(),
                log: false,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasPoint {
    pub model_h: f64,
    pub t_days: usize,
    pub aggregate: Option<PathAggregate>,
    pub n_paths: usize,
    /// Initial paths on which every window failed.
    pub n_failed_paths: usize,
    pub theoretical_h_hat: Option<f64>,
}

/// Fitted line of measured against model H for one maturity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaturityLine {
    pub t_days: usize,
    pub line: Option<BiasLine>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasCurveResult {
    pub points: Vec<BiasPoint>,
    pub lines: Vec<MaturityLine>,
    /// Slopes strictly decrease with maturity.
    pub flattens_with_maturity: bool,
}

impl BiasCurveResult {
    pub fn point(&self, h: f64, t_days: usize) -> Option<&BiasPoint> {
        self.points.iter().find(|p| (p.model_h - h).abs() < 1e-12 && p.t_days == t_days)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "model_h,t_days,theoretical_h_hat,mc_h_hat_mean,mc_h_hat_ci_low,mc_h_hat_ci_high,n_paths,n_failed_paths"
        )?;
        let fmt = |x: Option<f64>| x.map(json_f64).unwrap_or_default();
        for p in &self.points {
            let ci = p.aggregate.map(|a| a.ci95());
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.model_h,
                p.t_days,
                fmt(p.theoretical_h_hat),
                fmt(p.aggregate.map(|a| a.mean)),
                fmt(ci.map(|c| c.0)),
                fmt(ci.map(|c| c.1)),
                p.n_paths,
                p.n_failed_paths
            )?;
        }
        Ok(())
    }
}

/// Scale function `f(theta, H)` used for the theoretical overlay.
pub type ScaleFn<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

pub fn run_bias_curve(spec: &BiasCurveSpec, f_hat: Option<ScaleFn<'_>>) -> Result<BiasCurveResult, ExperimentError> {
    if spec.hs.is_empty() || spec.maturities.is_empty() || spec.n_initial_paths == 0 {
        return Err(ExperimentError::InvalidSpec("bias curve needs hs, maturities and initial paths".into()));
    }
    let max_k = *spec.maturities.iter().max().unwrap();
    let grid = SimGrid::new(spec.dt, spec.days + max_k)?;
    let spd = grid.steps_per_day()?;
    let qmc_points = if spec.initial_qmc {
        Some(sobol_initial_normals(grid.n_steps(), spec.n_initial_paths, spec.seed)?)
    } else {
        None
    };
    let mut points = Vec::new();
    for &h in &spec.hs {
        let params = RoughExpParams { sigma: spec.sigma, eta: spec.eta, h };
        params.validate()?;
        let engine = grid.engine(h)?;
        let mut per_maturity: Vec<Vec<Option<SlideStats>>> = vec![Vec::new(); spec.maturities.len()];
        for j in 0..spec.n_initial_paths {
            let path = initial_path(&engine, &params, spec.dt, spec.seed, j, qmc_points.as_deref())?;
            let val = valuation(&engine, params, spec.dt, spd, &path);
            let s = proxy_series(&val, spec.days, &spec.maturities, &spec.mc, spec.rule)?;
            for (mi, m) in s.by_maturity.iter().enumerate() {
                let ctx = format!("bias h {h} path {j} {}d", m.maturity);
                let iv = series(m.implied.iter().map(|p| p.implied_vol).collect(), &ctx)?;
                per_maturity[mi].push(slide_stats(&iv, &spec.estimator, &spec.windows, spec.log, &ctx)?);
            }
        }
        for (mi, &k) in spec.maturities.iter().enumerate() {
            let theoretical_h_hat = match f_hat {
                Some(f) => Some(crate::bias::theoretical_h_hat(
                    h,
                    &crate::bias::BiasConfig { t_days: k as f64, k_days: 25.0 },
                    f,
                )?),
                None => None,
            };
            points.push(BiasPoint {
                model_h: h,
                t_days: k,
                aggregate: PathAggregate::from_stats(&per_maturity[mi]),
                n_paths: per_maturity[mi].len(),
                n_failed_paths: per_maturity[mi].iter().filter(|s| s.is_none()).count(),
                theoretical_h_hat,
            });
        }
    }

    let lines: Vec<MaturityLine> = spec
        .maturities
        .iter()
        .map(|&k| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter(|p| p.t_days == k)
                .filter_map(|p| p.aggregate.map(|a| (p.model_h, a.mean)))
                .unzip();
            MaturityLine {
                t_days: k,
                line: BiasLine::fit(&xs, &ys).ok(),
            }
        })
        .collect();
    let mut by_maturity: Vec<(usize, Option<f64>)> =
        lines.iter().map(|l| (l.t_days, l.line.map(|l| l.slope))).collect();
    by_maturity.sort_by_key(|(k, _)| *k);
    let flattens_with_maturity = by_maturity.windows(2).all(|w| match (w[0].1, w[1].1) {
        (Some(a), Some(b)) => b < a,
        _ => false,
    });
    Ok(BiasCurveResult {
        points,
        lines,
        flattens_with_maturity,
    })
}

pub fn write_bias_curve(out: &Artifacts, r: &BiasCurveResult) -> Result<(), ExperimentError> {
    out.csv("bias_curve.csv", |b| r.write_csv(b))?;
    out.summary(serde_json::to_value(r)?)?;
    Ok(())
}
