//! Exact fractional Brownian motion on a fixed grid by Cholesky factorization.
//!
//! `W(t_j) = sum_{p <= j} l_{jp} Z_p` with `l` the lower Cholesky factor of
//! the covariance `C_ij = (t_i^{2H} + t_j^{2H} - |t_i - t_j|^{2H}) / 2`.
//! Keeping the whitened normals `Z` of a path makes it possible to continue
//! that path from any grid index with its exact conditional law: the first
//! `i` normals are reused and the remainder drawn fresh.

use thiserror::Error;

use crate::stream::GaussianStream;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FbmError {
    #[error("Hurst index {0} outside (0, 1)")]
    InvalidHurst(f64),
    #[error("grid must be strictly increasing with t_1 > 0 (violated at index {0})")]
    InvalidGrid(usize),
    #[error("covariance not positive definite at pivot {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("continuation from {known} known points to horizon {horizon} is empty or past the grid end ({n})")]
    EmptyContinuation { known: usize, horizon: usize, n: usize },
    #[error("expected {expected} normals, got {got}")]
    NormalCount { expected: usize, got: usize },
}

/// fBm covariance `E[W(s) W(t)]`.
pub fn fbm_covariance(h: f64, s: f64, t: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (s.powf(e) + t.powf(e) - (s - t).abs().powf(e))
}

/// Dot product with independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let x = &a[c * 8..c * 8 + 8];
        let y = &b[c * 8..c * 8 + 8];
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 8..n {
        tail += a[k] * b[k];
    }
    acc.iter().sum::<f64>() + tail
}

/// Cholesky factor of the fBm covariance on a grid, shared read-only by
/// every path drawn on that grid.
#[derive(Debug, Clone)]
pub struct FbmEngine {
    h: f64,
    grid: Vec<f64>,
    /// Row `j` occupies `chol[j (j + 1) / 2 ..][..j + 1]`.
    chol: Vec<f64>,
}

/// An unconditional draw together with the normals that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    /// `W(t_1), ..., W(t_N)`; `W(0) = 0` is implicit.
    pub values: Vec<f64>,
    pub normals: Vec<f64>,
}

impl FbmPath {
    /// Values with the implicit `W(0) = 0` prepended.
    pub fn with_origin(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.values.iter().copied()).collect()
    }
}

fn factorize(h: f64, grid: &[f64], jitter: f64) -> Result<Vec<f64>, usize> {
    let n = grid.len();
    let mut chol = vec![0.0; n * (n + 1) / 2];
    let pow: Vec<f64> = grid.iter().map(|t| t.powf(2.0 * h)).collect();
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let c = 0.5 * (pow[i] + pow[j] - (grid[i] - grid[j]).abs().powf(2.0 * h));
            let s = c - dot(&chol[ri..ri + j], &chol[rj..rj + j]);
            if j < i {
                chol[ri + j] = s / chol[rj + j];
            } else {
                let d = s + jitter;
                if !(d > 0.0) {
                    return Err(i);
                }
                chol[ri + i] = d.sqrt();
            }
        }
    }
    Ok(chol)
}

impl FbmEngine {
    /// Factorizes the covariance on `grid` (`t_1 > 0`, strictly increasing).
    ///
    /// A failed factorization is retried once with `1e-12 * t_N^{2H}` added
    /// to the diagonal.
    pub fn build(h: f64, grid: Vec<f64>) -> Result<Self, FbmError> {
        if !(h > 0.0 && h < 1.0) {
            return Err(FbmError::InvalidHurst(h));
        }
        if grid.is_empty() || !(grid[0] > 0.0) {
            return Err(FbmError::InvalidGrid(0));
        }
        if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(FbmError::InvalidGrid(i + 1));
        }
        let chol = match factorize(h, &grid, 0.0) {
            Ok(c) => c,
            Err(_) => {
                let jitter = 1e-12 * grid[grid.len() - 1].powf(2.0 * h);
                factorize(h, &grid, jitter).map_err(|pivot| FbmError::NotPositiveDefinite { pivot })?
            }
        };
        Ok(Self { h, grid, chol })
    }

    /// Grid `dt, 2 dt, ..., n dt`.
    pub fn uniform(h: f64, dt: f64, n: usize) -> Result<Self, FbmError> {
        Self::build(h, (1..=n).map(|i| i as f64 * dt).collect())
    }

    pub fn hurst(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Row `j` of the factor, entries `l_{j0} .. l_{jj}`.
    pub fn row(&self, j: usize) -> &[f64] {
        let start = j * (j + 1) / 2;
        &self.chol[start..start + j + 1]
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        fbm_covariance(self.h, self.grid[i], self.grid[j])
    }

    /// `L Z` for a full set of whitened normals.
    pub fn path_from_normals(&self, normals: &[f64]) -> Result<Vec<f64>, FbmError> {
        if normals.len() != self.len() {
            return Err(FbmError::NormalCount {
                expected: self.len(),
                got: normals.len(),
            });
        }
        Ok((0..self.len()).map(|j| dot(self.row(j), normals)).collect())
    }

    pub fn draw_path(&self, stream: &GaussianStream) -> FbmPath {
        let normals = stream.normals(self.len());
        let values = self
            .path_from_normals(&normals)
            .expect("normal count matches grid");
        FbmPath { values, normals }
    }

    /// `sum_{p < known.len()} l_{jp} X_p` for rows `known.len() .. horizon`.
    pub fn conditional_mean(&self, known: &[f64], horizon: usize) -> Result<Vec<f64>, FbmError> {
        let i = known.len();
        if horizon <= i || horizon > self.len() {
            return Err(FbmError::EmptyContinuation {
                known: i,
                horizon,
                n: self.len(),
            });
        }
        Ok((i..horizon).map(|j| dot(&self.row(j)[..i], known)).collect())
    }

    /// Adds the fresh-normal part `sum_{p = i}^{j} l_{jp} Z_{p - i}` onto
    /// `out[j - i]` for rows `i .. i + out.len()`, scaled by `sign`.
    pub fn add_fresh(&self, known: usize, fresh: &[f64], sign: f64, out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(known + r);
            *o += sign * dot(&row[known..], &fresh[..=r]);
        }
    }

    /// Continues a path whose first `known.len()` normals are fixed, up to
    /// grid row `horizon` (exclusive), with fresh normals for the rest.
    pub fn continue_with(&self, known: &[f64], fresh: &[f64], horizon: usize) -> Result<Vec<f64>, FbmError> {
        let mut out = self.conditional_mean(known, horizon)?;
        if fresh.len() != out.len() {
            return Err(FbmError::NormalCount {
                expected: out.len(),
                got: fresh.len(),
            });
        }
        self.add_fresh(known.len(), fresh, 1.0, &mut out);
        Ok(out)
    }

    /// Values `W(t_{i+1}), ..., W(t_horizon)` with fresh normals from `stream`.
    pub fn continue_path(
        &self,
        known: &[f64],
        stream: &GaussianStream,
        horizon: usize,
    ) -> Result<Vec<f64>, FbmError> {
        let n_fresh = horizon.saturating_sub(known.len());
        self.continue_with(known, &stream.normals(n_fresh), horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Purpose;

    fn relative_frobenius(engine: &FbmEngine) -> f64 {
        let n = engine.len();
        let (mut err, mut norm) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..=i {
                let lhs = dot(&engine.row(i)[..=j], &engine.row(j)[..=j]);
                let c = engine.covariance(i, j);
                err += (lhs - c).powi(2);
                norm += c * c;
            }
        }
        (err / norm).sqrt()
    }

    #[test]
    fn covariance_identities() {
        for (s, t) in [(0.3, 1.7), (2.0, 0.5), (1.0, 1.0)] {
            assert!((fbm_covariance(0.5, s, t) - f64::min(s, t)).abs() < 1e-15);
        }
        for h in [0.05, 0.3, 0.8] {
            assert!((fbm_covariance(h, 1.7, 1.7) - 1.7f64.powf(2.0 * h)).abs() < 1e-15);
        }
        let c12 = fbm_covariance(0.25, 1.0, 2.0);
        assert!((c12 - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        assert!((fbm_covariance(0.25, 2.0, 2.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn factor_reproduces_covariance() {
        for h in [0.05, 0.1, 0.5, 0.9] {
            let e = FbmEngine::uniform(h, 0.004, 300).unwrap();
            assert!(relative_frobenius(&e) < 1e-8, "h = {h}");
            assert!((0..e.len()).all(|j| e.row(j)[j] > 0.0));
        }
    }

    #[test]
    fn bad_inputs() {
        assert_eq!(FbmEngine::uniform(0.0, 0.1, 5).unwrap_err(), FbmError::InvalidHurst(0.0));
        assert_eq!(FbmEngine::uniform(1.0, 0.1, 5).unwrap_err(), FbmError::InvalidHurst(1.0));
        assert_eq!(
            FbmEngine::build(0.3, vec![0.0, 1.0]).unwrap_err(),
            FbmError::InvalidGrid(0)
        );
        assert_eq!(
            FbmEngine::build(0.3, vec![0.5, 1.0, 1.0]).unwrap_err(),
            FbmError::InvalidGrid(2)
        );
        let e = FbmEngine::uniform(0.3, 0.1, 5).unwrap();
        assert!(matches!(
            e.conditional_mean(&[0.1, 0.2, 0.3], 3),
            Err(FbmError::EmptyContinuation { .. })
        ));
    }

    #[test]
    fn zero_normals_zero_path() {
        let e = FbmEngine::uniform(0.2, 0.01, 50).unwrap();
        assert!(e.path_from_normals(&[0.0; 50]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_fresh_gives_conditional_mean() {
        let e = FbmEngine::uniform(0.1, 0.01, 40).unwrap();
        let known = GaussianStream::new(1, Purpose::InitialPath, 0, 0).normals(15);
        let mean = e.conditional_mean(&known, 30).unwrap();
        let cont = e.continue_with(&known, &[0.0; 15], 30).unwrap();
        assert_eq!(mean, cont);
    }

    #[test]
    fn continuation_matches_full_draw_on_same_normals() {
        let e = FbmEngine::uniform(0.3, 0.01, 40).unwrap();
        let z = GaussianStream::new(2, Purpose::InitialPath, 0, 0).normals(40);
        let full = e.path_from_normals(&z).unwrap();
        let cont = e.continue_with(&z[..12], &z[12..], 40).unwrap();
        for (a, b) in full[12..].iter().zip(&cont) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_variance_matches_covariance() {
        let h = 0.3;
        let e = FbmEngine::uniform(h, 0.05, 20).unwrap();
        let draws = 100_000;
        let samples: Vec<f64> = (0..draws)
            .map(|m| *e.draw_path(&GaussianStream::new(5, Purpose::InitialPath, 0, m)).values.last().unwrap())
            .collect();
        let var = samples.iter().map(|x| x * x).sum::<f64>() / draws as f64;
        let target = 1.0f64.powf(2.0 * h);
        // SE of a sample second moment of a centred Gaussian is var * sqrt(2 / n)
        let se = target * (2.0 / draws as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "{var} vs {target}");
    }

    #[test]
    fn brownian_increments_are_uncorrelated() {
        let e = FbmEngine::uniform(0.5, 0.01, 2000).unwrap();
        let p = e.draw_path(&GaussianStream::new(3, Purpose::InitialPath, 0, 0));
        let v = p.with_origin();
        let inc: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
        let n = inc.len() as f64;
        let mean = inc.iter().sum::<f64>() / n;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let cov = inc.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
        assert!((cov / var).abs() < 3.0 / n.sqrt());
    }

    #[test]
    fn unconditional_continuation_has_draw_law() {
        // With nothing known, a continuation is a full draw: compare the
        // sample covariance of two coordinates with the analytic value.
        let h = 0.2;
        let e = FbmEngine::uniform(h, 0.1, 6).unwrap();
        let draws = 10_000;
        let (mut s, mut s5, mut s55) = (0.0, 0.0, 0.0);
        for m in 0..draws {
            let c = e
                .continue_path(&[], &GaussianStream::new(9, Purpose::SubPath, 0, m), 6)
                .unwrap();
            s += c[1] * c[5];
            s5 += c[5];
            s55 += c[5] * c[5];
        }
        let n = draws as f64;
        let cov = s / n;
        let target = e.covariance(1, 5);
        let var5 = s55 / n - (s5 / n).powi(2);
        // conservative SE for a product moment of Gaussians
        let se = ((e.covariance(1, 1) * e.covariance(5, 5) + target * target) / n).sqrt();
        assert!((cov - target).abs() < 3.0 * se, "{cov} vs {target}");
        assert!((var5 - e.covariance(5, 5)).abs() < 3.0 * e.covariance(5, 5) * (2.0 / n).sqrt());
    }

    #[test]
    fn continuation_average_converges_to_conditional_mean() {
        let e = FbmEngine::uniform(0.1, 0.004, 30).unwrap();
        let known = GaussianStream::new(4, Purpose::InitialPath, 0, 0).normals(20);
        let mean = e.conditional_mean(&known, 30).unwrap();
        let m = 10_000;
        let mut acc = vec![0.0; 10];
        let mut acc2 = vec![0.0; 10];
        for k in 0..m {
            let c = e.continue_path(&known, &GaussianStream::new(4, Purpose::SubPath, 20, k), 30).unwrap();
            for r in 0..10 {
                acc[r] += c[r];
                acc2[r] += c[r] * c[r];
            }
        }
        for r in 0..10 {
            let avg = acc[r] / m as f64;
            let sd = (acc2[r] / m as f64 - avg * avg).sqrt();
            assert!((avg - mean[r]).abs() < 3.0 * sd / (m as f64).sqrt(), "row {r}");
        }
    }

    #[test]
    fn self_similarity_of_terminal_std() {
        let h = 0.25;
        let c = 4.0;
        let draws = 20_000;
        let base = FbmEngine::uniform(h, 0.1, 10).unwrap();
        let scaled = FbmEngine::uniform(h, 0.1 * c, 10).unwrap();
        let sd = |e: &FbmEngine, seed: u64| {
            let s: f64 = (0..draws)
                .map(|m| e.draw_path(&GaussianStream::new(seed, Purpose::InitialPath, 0, m)).values[9].powi(2))
                .sum();
            (s / draws as f64).sqrt()
        };
        let (a, b) = (sd(&base, 1), sd(&scaled, 2));
        // SE of a sample std is about sd / sqrt(2n)
        let se = c.powf(h) * a / (2.0 * draws as f64).sqrt();
        assert!((b - c.powf(h) * a).abs() < 3.0 * se * std::f64::consts::SQRT_2);
    }

    #[test]
    fn deterministic_bits() {
        let e = FbmEngine::uniform(0.1, 0.004, 100).unwrap();
        let s = GaussianStream::new(42, Purpose::InitialPath, 0, 7);
        assert_eq!(e.draw_path(&s), e.draw_path(&s));
    }
}
