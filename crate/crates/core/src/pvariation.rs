//! Normalized p-variation roughness estimator.
//!
//! For a window of `L + 1` observations split into `K` coarse blocks of
//! `L / K` fine steps each, the statistic is
//!
//! ```text
//! W(p) = sum_k |X(end_k) - X(start_k)|^p / sum_{l in block k} |X(t_{l+1}) - X(t_l)|^p * (end_k - start_k)
//! ```
//!
//! and the roughness estimate is `H = 1 / p*` where `W(p*) = T`, the time
//! span of the window. At `p = 1` every block ratio is at most one, so
//! `W(1) <= T` and the root is searched upward from there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::TimeSeriesPath;

const SCAN_STEP: f64 = 0.25;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EstimatorError {
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("window needs exactly {expected} observations, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("window starting at {window_start} needs {needed} observations, path has {got}")]
    InsufficientData {
        window_start: usize,
        needed: usize,
        got: usize,
    },
    #[error("coarse block {block} of window {window_start} is constant")]
    DegenerateBlock { window_start: usize, block: usize },
    #[error("W(p) - T has no sign change in [{p_lo}, {p_hi}]: W = {w_lo} .. {w_hi}, T = {target}")]
    NoRoot {
        p_lo: f64,
        p_hi: f64,
        w_lo: f64,
        w_hi: f64,
        target: f64,
    },
    #[error("all {n_windows} windows failed")]
    AllWindowsFailed { n_windows: usize },
}

/// Partition sizes and root-search controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Number of coarse blocks.
    pub k: usize,
    /// Number of fine steps in the window; must be a multiple of `k`.
    pub l: usize,
    pub p_lo: f64,
    pub p_hi: f64,
    /// Bisection stops once the bracket on `p` is narrower than this.
    pub p_tol: f64,
}

impl EstimatorConfig {
    /// Uniform partition with `L = K^2`.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            l: k * k,
            p_lo: 1.0,
            p_hi: 20.0,
            p_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::InvalidConfig(m.to_owned()));
        if self.k < 2 {
            return bad("K must be at least 2");
        }
        if self.l < self.k || self.l % self.k != 0 {
            return bad("L must be a positive multiple of K");
        }
        if !(self.p_lo >= 1.0) || !(self.p_hi > self.p_lo) {
            return bad("p bracket must satisfy 1 <= p_lo < p_hi");
        }
        if !(self.p_tol > 0.0) {
            return bad("p tolerance must be positive");
        }
        Ok(())
    }

    /// Observations consumed by one window.
    pub fn window_len(&self) -> usize {
        self.l + 1
    }
}

/// One window's estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub h: f64,
    pub p: f64,
    pub window_start: usize,
    pub t_start: f64,
    /// `|W(p) - T|` at the returned `p`.
    pub w_residual: f64,
}

/// Log-increments of one window, normalized per block so that `exp(p * x)`
/// never overflows for `p` up to the bracket end.
struct WindowBlocks {
    /// ln(|coarse increment| / block scale); `-inf` for a zero increment.
    coarse: Vec<f64>,
    /// ln(|fine increment| / block scale), `k` rows of `l / k`.
    fine: Vec<f64>,
    lengths: Vec<f64>,
    per_block: usize,
    span: f64,
}

impl WindowBlocks {
    fn new(
        times: &[f64],
        values: &[f64],
        cfg: &EstimatorConfig,
        window_start: usize,
    ) -> Result<Self, EstimatorError> {
        let per_block = cfg.l / cfg.k;
        let mut coarse = Vec::with_capacity(cfg.k);
        let mut fine = Vec::with_capacity(cfg.l);
        let mut lengths = Vec::with_capacity(cfg.k);
        for block in 0..cfg.k {
            let a = block * per_block;
            let b = a + per_block;
            let incs: Vec<f64> = values[a..=b].windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            let scale = incs.iter().cloned().fold(0.0, f64::max);
            if scale == 0.0 {
                return Err(EstimatorError::DegenerateBlock {
                    window_start,
                    block,
                });
            }
            coarse.push(((values[b] - values[a]).abs() / scale).ln());
            fine.extend(incs.iter().map(|d| (d / scale).ln()));
            lengths.push(times[b] - times[a]);
        }
        Ok(Self {
            coarse,
            fine,
            lengths,
            per_block,
            span: times[cfg.l] - times[0],
        })
    }

    fn term(&self, block: usize, p: f64) -> f64 {
        let denom: f64 = self.fine[block * self.per_block..(block + 1) * self.per_block]
            .iter()
            .map(|x| (p * x).exp())
            .sum();
        (p * self.coarse[block]).exp() / denom * self.lengths[block]
    }

    fn terms(&self, p: f64) -> Vec<f64> {
        (0..self.coarse.len()).map(|k| self.term(k, p)).collect()
    }

    fn w(&self, p: f64) -> f64 {
        (0..self.coarse.len()).map(|k| self.term(k, p)).sum()
    }
}

fn window_blocks(
    path: &TimeSeriesPath,
    cfg: &EstimatorConfig,
    window_start: usize,
) -> Result<WindowBlocks, EstimatorError> {
    cfg.validate()?;
    let needed = window_start + cfg.window_len();
    if path.len() < needed {
        return Err(EstimatorError::InsufficientData {
            window_start,
            needed,
            got: path.len(),
        });
    }
    let range = window_start..needed;
    WindowBlocks::new(
        &path.times()[range.clone()],
        &path.values()[range],
        cfg,
        window_start,
    )
}

/// `W(L, K, p, T, X)` for a path of exactly `L + 1` observations.
pub fn w_statistic(path: &TimeSeriesPath, cfg: &EstimatorConfig, p: f64) -> Result<f64, EstimatorError> {
    if path.len() != cfg.window_len() {
        return Err(EstimatorError::WrongLength {
            expected: cfg.window_len(),
            got: path.len(),
        });
    }
    Ok(window_blocks(path, cfg, 0)?.w(p))
}

/// Per-block contributions to `W(p)` for the window starting at `window_start`.
pub fn w_terms(
    path: &TimeSeriesPath,
    cfg: &EstimatorConfig,
    window_start: usize,
    p: f64,
) -> Result<Vec<f64>, EstimatorError> {
    Ok(window_blocks(path, cfg, window_start)?.terms(p))
}

/// Solves `W(p) = T` on the window starting at `window_start`.
pub fn estimate_h(
    path: &TimeSeriesPath,
    cfg: &EstimatorConfig,
    window_start: usize,
) -> Result<HurstEstimate, EstimatorError> {
    let blocks = window_blocks(path, cfg, window_start)?;
    let target = blocks.span;
    let f = |p: f64| blocks.w(p) - target;

    // W(1) == T exactly for piecewise-monotone blocks; accept rounding noise.
    let root_eps = 1e-12 * target;
    let f_lo = f(cfg.p_lo);
    let p = if f_lo.abs() <= root_eps {
        cfg.p_lo
    } else {
        let mut a = cfg.p_lo;
        let mut fa = f_lo;
        let mut bracket = None;
        while a < cfg.p_hi {
            let b = (a + SCAN_STEP).min(cfg.p_hi);
            let fb = f(b);
            if fb == 0.0 || fa.signum() != fb.signum() {
                bracket = Some((a, fa, b));
                break;
            }
            a = b;
            fa = fb;
        }
        let Some((mut a, mut fa, mut b)) = bracket else {
            return Err(EstimatorError::NoRoot {
                p_lo: cfg.p_lo,
                p_hi: cfg.p_hi,
                w_lo: f_lo + target,
                w_hi: f(cfg.p_hi) + target,
                target,
            });
        };
        while b - a > cfg.p_tol {
            let mid = 0.5 * (a + b);
            let fm = f(mid);
            if fm == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };

    Ok(HurstEstimate {
        h: 1.0 / p,
        p,
        window_start,
        t_start: path.times()[window_start],
        w_residual: f(p).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_samples(samples: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if samples.is_empty() || hi <= lo {
            let c = if samples.is_empty() { 0.0 } else { lo };
            return Self {
                edges: vec![c, c],
                counts: vec![samples.len()],
            };
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &s in samples {
            let idx = (((s - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFailure {
    pub window_start: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingSummary {
    pub estimates: Vec<HurstEstimate>,
    pub failures: Vec<WindowFailure>,
    pub mean: f64,
    /// Population standard deviation of the window estimates.
    pub std: f64,
    pub histogram: Histogram,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

impl SlidingSummary {
    pub fn from_results(results: Vec<Result<HurstEstimate, (usize, EstimatorError)>>) -> Result<Self, EstimatorError> {
        let n_windows = results.len();
        let mut estimates = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(e) => estimates.push(e),
                Err((window_start, err)) => failures.push(WindowFailure {
                    window_start,
                    reason: err.to_string(),
                }),
            }
        }
        if estimates.is_empty() {
            return Err(EstimatorError::AllWindowsFailed { n_windows });
        }
        let hs: Vec<f64> = estimates.iter().map(|e| e.h).collect();
        let (mean, std) = mean_std(&hs);
        Ok(Self {
            histogram: Histogram::from_samples(&hs, DEFAULT_HISTOGRAM_BINS),
            estimates,
            failures,
            mean,
            std,
        })
    }

    pub fn hs(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.h).collect()
    }

    pub fn n_windows(&self) -> usize {
        self.estimates.len() + self.failures.len()
    }

    /// `window_start,t_start,h,p,residual` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "window_start,t_start,h,p,residual")?;
        for e in &self.estimates {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                e.window_start, e.t_start, e.h, e.p, e.w_residual
            )?;
        }
        Ok(())
    }

    /// `{mean, std, n_windows, n_failed, histogram}`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mean": self.mean,
            "std": self.std,
            "n_windows": self.n_windows(),
            "n_failed": self.failures.len(),
            "histogram": self.histogram,
        })
    }
}

/// Estimates every full window starting at `0, stride, 2 * stride, ...`.
///
/// Windows that fail are recorded in `failures` and left out of the moments.
pub fn sliding_estimate(
    path: &TimeSeriesPath,
    cfg: &EstimatorConfig,
    stride: usize,
) -> Result<SlidingSummary, EstimatorError> {
    cfg.validate()?;
    if stride == 0 {
        return Err(EstimatorError::InvalidConfig("stride must be at least 1".into()));
    }
    if path.len() < cfg.window_len() {
        return Err(EstimatorError::InsufficientData {
            window_start: 0,
            needed: cfg.window_len(),
            got: path.len(),
        });
    }
    let last = path.len() - cfg.window_len();
    let starts: Vec<usize> = (0..=last).step_by(stride).collect();
    sliding_at(path, cfg, &starts)
}

/// Estimates the windows starting at each of `starts`, in that order.
pub fn sliding_at(
    path: &TimeSeriesPath,
    cfg: &EstimatorConfig,
    starts: &[usize],
) -> Result<SlidingSummary, EstimatorError> {
    let results = starts
        .par_iter()
        .map(|&s| estimate_h(path, cfg, s).map_err(|e| (s, e)))
        .collect();
    SlidingSummary::from_results(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear(n: usize, t_end: f64) -> TimeSeriesPath {
        let dt = t_end / (n - 1) as f64;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        TimeSeriesPath::new(ts.clone(), ts).unwrap()
    }

    fn random_walk(n: usize, seed: u64) -> TimeSeriesPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        let vals = (0..n)
            .map(|_| {
                let v = x;
                x += rng.sample::<f64, _>(rand_distr::StandardNormal);
                v
            })
            .collect();
        TimeSeriesPath::uniform(0.004, vals).unwrap()
    }

    #[test]
    fn linear_path_w_is_k_pow_p_minus_one_times_t() {
        let cfg = EstimatorConfig::new(4);
        let p = linear(17, 1.0);
        assert!((w_statistic(&p, &cfg, 2.0).unwrap() - 4.0).abs() < 1e-12);
        assert!((w_statistic(&p, &cfg, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((w_statistic(&p, &cfg, 3.0).unwrap() - 16.0).abs() < 1e-11);
    }

    #[test]
    fn linear_path_estimate_is_one() {
        for k in [4, 10, 70] {
            let cfg = EstimatorConfig::new(k);
            let est = estimate_h(&linear(k * k + 1, 2.0), &cfg, 0).unwrap();
            assert!((est.p - 1.0).abs() <= 1e-8, "p = {}", est.p);
            assert!((est.h - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn wrong_length_and_degenerate_block() {
        let cfg = EstimatorConfig::new(3);
        assert!(matches!(
            w_statistic(&linear(9, 1.0), &cfg, 2.0),
            Err(EstimatorError::WrongLength { expected: 10, got: 9 })
        ));
        let mut v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        for x in &mut v[3..=6] {
            *x = 3.0;
        }
        let flat = TimeSeriesPath::uniform(0.1, v).unwrap();
        assert_eq!(
            w_statistic(&flat, &cfg, 2.0),
            Err(EstimatorError::DegenerateBlock { window_start: 0, block: 1 })
        );
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::new(1).validate().is_err());
        let mut c = EstimatorConfig::new(5);
        c.l = 27;
        assert!(c.validate().is_err());
        let mut c = EstimatorConfig::new(5);
        c.p_lo = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn no_root_when_bracket_too_short() {
        let mut cfg = EstimatorConfig::new(10);
        cfg.p_hi = 1.1; // a BM path needs p near 2
        let err = estimate_h(&random_walk(101, 3), &cfg, 0).unwrap_err();
        assert!(matches!(err, EstimatorError::NoRoot { .. }));
    }

    #[test]
    fn root_brackets_target() {
        let cfg = EstimatorConfig::new(10);
        let path = random_walk(101, 9);
        let est = estimate_h(&path, &cfg, 0).unwrap();
        let t = path.span();
        let lo = w_statistic(&path, &cfg, est.p - cfg.p_tol).unwrap() - t;
        let hi = w_statistic(&path, &cfg, est.p + cfg.p_tol).unwrap() - t;
        assert!(lo * hi <= 0.0, "{lo} {hi}");
        assert!(est.w_residual <= lo.abs().max(hi.abs()));
    }

    #[test]
    fn single_window_summary() {
        let cfg = EstimatorConfig::new(6);
        let s = sliding_estimate(&random_walk(37, 1), &cfg, 1).unwrap();
        assert_eq!(s.estimates.len(), 1);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn sliding_strides_and_moments() {
        let cfg = EstimatorConfig::new(5);
        let path = random_walk(60, 4);
        let s = sliding_estimate(&path, &cfg, 3).unwrap();
        let starts: Vec<usize> = s.estimates.iter().map(|e| e.window_start).collect();
        assert_eq!(starts, (0..=34).step_by(3).collect::<Vec<_>>());
        let (m, sd) = mean_std(&s.hs());
        assert!((m - s.mean).abs() < 1e-12 && (sd - s.std).abs() < 1e-12);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), s.estimates.len());
    }

    #[test]
    fn all_failed_windows() {
        let cfg = EstimatorConfig::new(3);
        let flat = TimeSeriesPath::uniform(0.1, vec![1.0; 12]).unwrap();
        assert_eq!(
            sliding_estimate(&flat, &cfg, 1),
            Err(EstimatorError::AllWindowsFailed { n_windows: 3 })
        );
    }

    #[test]
    fn shifting_by_k_changes_one_term() {
        let cfg = EstimatorConfig::new(8);
        let path = random_walk(200, 11);
        let a = w_terms(&path, &cfg, 5, 2.0).unwrap();
        let b = w_terms(&path, &cfg, 5 + 8, 2.0).unwrap();
        assert_eq!(&a[1..], &b[..7]);
        let c = w_terms(&path, &cfg, 6, 2.0).unwrap();
        assert!(a.iter().zip(&c).all(|(x, y)| x != y));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn invariant_to_scale_shift_and_clock(seed in 0u64..1000, c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], shift in -100.0f64..100.0, tc in 0.01f64..100.0) {
            let cfg = EstimatorConfig::new(8);
            let path = random_walk(65, seed);
            let base = estimate_h(&path, &cfg, 0);
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            let scaled = path.map_values(|v| c * v + shift).unwrap();
            let retimed = TimeSeriesPath::new(
                path.times().iter().map(|t| t * tc).collect(),
                path.values().to_vec(),
            ).unwrap();
            for other in [scaled, retimed] {
                let e = estimate_h(&other, &cfg, 0).unwrap();
                prop_assert!((e.p - base.p).abs() < 1e-6, "{} vs {}", e.p, base.p);
            }
        }
    }
}
