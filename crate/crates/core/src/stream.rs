//! Reproducible Gaussian variates.
//!
//! Pseudorandom streams are ChaCha8 generators keyed by `(seed, purpose, day)`
//! with the path index as the ChaCha stream number, so any `(day, path)` pair
//! can be regenerated independently of scheduling order.
//!
//! Low-discrepancy blocks use Joe–Kuo Sobol points with a random digital
//! shift per dimension, mapped to normals through the inverse CDF.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use statrs::function::erf::erfc_inv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    /// Whitened normals of an unconditional path.
    InitialPath,
    /// Fresh normals of a conditional continuation.
    SubPath,
    /// Variance and spot drivers of a Heston path.
    Heston,
}

impl Purpose {
    fn tag(self) -> u32 {
        match self {
            Purpose::InitialPath => 1,
            Purpose::SubPath => 2,
            Purpose::Heston => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub purpose: Purpose,
    pub day: u64,
    pub path: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Pseudorandom,
    /// Digitally shifted Sobol points.
    ScrambledSobol,
}

fn key(seed: u64, purpose: Purpose, day: u64) -> [u8; 32] {
    let mut k = [0u8; 32];
    k[..8].copy_from_slice(&seed.to_le_bytes());
    k[8..12].copy_from_slice(&purpose.tag().to_le_bytes());
    k[12..20].copy_from_slice(&day.to_le_bytes());
    k
}

/// A pseudorandom normal stream identified by `(seed, stream id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianStream {
    pub seed: u64,
    pub id: StreamId,
}

impl GaussianStream {
    pub fn new(seed: u64, purpose: Purpose, day: u64, path: u64) -> Self {
        Self {
            seed,
            id: StreamId { purpose, day, path },
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(key(self.seed, self.id.purpose, self.id.day));
        rng.set_stream(self.id.path);
        rng
    }

    pub fn fill(&self, out: &mut [f64]) {
        let mut rng = self.rng();
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
    }

    pub fn normals(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill(&mut v);
        v
    }
}

/// Standard normal quantile.
pub fn normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Sequential scrambled-Sobol normal vectors of a fixed dimension.
pub struct SobolNormals {
    seq: Sobol<u64>,
    shifts: Vec<u64>,
}

impl SobolNormals {
    /// Largest dimension supported by the direction numbers.
    pub fn max_dims() -> usize {
        21201
    }

    /// The scrambling is determined by `(seed, purpose, day)`.
    pub fn new(dims: usize, seed: u64, purpose: Purpose, day: u64) -> Self {
        let params = JoeKuoD6::extended();
        let mut rng = ChaCha8Rng::from_seed(key(seed, purpose, day));
        rng.set_stream(u64::MAX);
        let shifts = (0..dims).map(|_| rng.random::<u64>()).collect();
        Self {
            seq: Sobol::<u64>::new(dims, &params),
            shifts,
        }
    }

    /// Writes the next point into `out` (length `dims`).
    pub fn next_into(&mut self, out: &mut [f64]) {
        let point = self.seq.next().expect("Sobol sequence exhausted");
        for ((o, x), s) in out.iter_mut().zip(point).zip(&self.shifts) {
            let u = (((x ^ s) >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            *o = normal_quantile(u);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_id_same_variates() {
        let a = GaussianStream::new(7, Purpose::SubPath, 3, 11).normals(64);
        let b = GaussianStream::new(7, Purpose::SubPath, 3, 11).normals(64);
        assert_eq!(a, b);
        for other in [
            GaussianStream::new(8, Purpose::SubPath, 3, 11),
            GaussianStream::new(7, Purpose::InitialPath, 3, 11),
            GaussianStream::new(7, Purpose::SubPath, 4, 11),
            GaussianStream::new(7, Purpose::SubPath, 3, 12),
        ] {
            assert_ne!(a, other.normals(64));
        }
    }

    #[test]
    fn distinct_paths_are_uncorrelated() {
        let n = 20_000;
        let a = GaussianStream::new(1, Purpose::SubPath, 0, 0).normals(n);
        let b = GaussianStream::new(1, Purpose::SubPath, 0, 1).normals(n);
        let rho: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(rho.abs() < 4.0 / (n as f64).sqrt());
        let mean = a.iter().sum::<f64>() / n as f64;
        let var = a.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn quantile_matches_known_values() {
        assert!(normal_quantile(0.5).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.75) - 0.6744897501960817).abs() < 1e-12);
    }

    #[test]
    fn sobol_block_moments() {
        let dims = 8;
        let mut s = SobolNormals::new(dims, 3, Purpose::SubPath, 0);
        let m = 4096;
        let mut sum = vec![0.0; dims];
        let mut sq = vec![0.0; dims];
        let mut buf = vec![0.0; dims];
        for _ in 0..m {
            s.next_into(&mut buf);
            for d in 0..dims {
                sum[d] += buf[d];
                sq[d] += buf[d] * buf[d];
            }
        }
        for d in 0..dims {
            assert!((sum[d] / m as f64).abs() < 0.01, "dim {d} mean {}", sum[d] / m as f64);
            assert!((sq[d] / m as f64 - 1.0).abs() < 0.02);
        }
    }
}
