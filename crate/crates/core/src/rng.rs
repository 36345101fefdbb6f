//! Reproducible random streams and batch-means Monte Carlo estimates.
//!
//! Samples are grouped in chunks of `CHUNK` consecutive indices; chunk `j`
//! draws from the ChaCha8 stream `j` of the run seed. Results therefore depend
//! only on the seed and the sample count, never on how work is scheduled.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Vec3;

pub type Rng = ChaCha8Rng;

pub const CHUNK: u64 = 256;
pub const BATCHES: usize = 32;
/// Smallest sample count accepted by the estimators.
pub const MIN_SAMPLES: u64 = 4 * BATCHES as u64;

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

pub fn unit_sphere(rng: &mut Rng) -> Vec3 {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

pub fn normal3(rng: &mut Rng) -> Vec3 {
    Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Scalar Monte Carlo estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl McEstimate {
    /// Exact value with zero uncertainty.
    pub fn exact(value: f64) -> Self {
        McEstimate { value, std_error: 0.0, n_samples: 0, seed: 0 }
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    pub fn within(&self, target: f64, k_sigma: f64) -> bool {
        self.z_score(target) <= k_sigma
    }

    pub fn relative_error(&self) -> f64 {
        self.std_error / self.value.abs()
    }

    pub fn scaled(self, c: f64) -> Self {
        McEstimate { value: c * self.value, std_error: c.abs() * self.std_error, ..self }
    }
}

/// Vector-valued estimate; `batch_means` keeps the per-batch averages so that
/// derived quantities can be given jackknife errors.
#[derive(Debug, Clone, PartialEq)]
pub struct VecEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub batch_means: Vec<Vec<f64>>,
    pub n_samples: u64,
    pub seed: u64,
}

fn check_count(n: u64) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!("sample count {n} is below the minimum {MIN_SAMPLES}")));
    }
    Ok(())
}

fn batch_of(k: u64, n: u64) -> usize {
    ((k as u128 * BATCHES as u128) / n as u128) as usize
}

/// Runs `n` samples of `f(index, rng)` and returns the batch-means estimate.
pub fn batch_means<F>(n: u64, seed: u64, mut f: F) -> Result<McEstimate>
where
    F: FnMut(u64, &mut Rng) -> Result<f64>,
{
    let v = batch_means_vec(n, seed, 1, |k, rng, out| {
        out[0] = f(k, rng)?;
        Ok(())
    })?;
    Ok(McEstimate { value: v.mean[0], std_error: v.std_error[0], n_samples: n, seed })
}

/// Vector version of [`batch_means`]: `f` writes one sample of every
/// component into its output slice.
pub fn batch_means_vec<F>(n: u64, seed: u64, dim: usize, mut f: F) -> Result<VecEstimate>
where
    F: FnMut(u64, &mut Rng, &mut [f64]) -> Result<()>,
{
    check_count(n)?;
    let mut sums = vec![vec![0.0; dim]; BATCHES];
    let mut counts = [0u64; BATCHES];
    let mut sample = vec![0.0; dim];
    let mut rng = stream(seed, 0);
    for k in 0..n {
        if k % CHUNK == 0 {
            rng = stream(seed, k / CHUNK);
        }
        sample.iter_mut().for_each(|x| *x = 0.0);
        f(k, &mut rng, &mut sample)?;
        if let Some(bad) = sample.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("sample {k} (seed {seed}), component {bad}: {}", sample[bad])));
        }
        let b = batch_of(k, n);
        counts[b] += 1;
        for (s, x) in sums[b].iter_mut().zip(&sample) {
            *s += x;
        }
    }
    Ok(summarize(sums, &counts, n, seed))
}

fn summarize(sums: Vec<Vec<f64>>, counts: &[u64], n: u64, seed: u64) -> VecEstimate {
    let dim = sums[0].len();
    let mut mean = vec![0.0; dim];
    for s in &sums {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let batch_means: Vec<Vec<f64>> =
        sums.iter().zip(counts).map(|(s, &c)| s.iter().map(|x| x / c as f64).collect()).collect();
    let b = BATCHES as f64;
    let std_error = (0..dim)
        .map(|j| {
            let ss: f64 = batch_means.iter().map(|bm| (bm[j] - mean[j]).powi(2)).sum();
            (ss / (b * (b - 1.0))).sqrt()
        })
        .collect();
    VecEstimate { mean, std_error, batch_means, n_samples: n, seed }
}

/// Jackknife over batches of a derived scalar g(batch-averaged vector).
pub fn jackknife<G>(est: &VecEstimate, mut g: G) -> Result<McEstimate>
where
    G: FnMut(&[f64]) -> Result<f64>,
{
    let b = est.batch_means.len();
    let full = g(&est.mean)?;
    let mut loo = Vec::with_capacity(b);
    for skip in 0..b {
        let mut m = vec![0.0; est.mean.len()];
        for (k, bm) in est.batch_means.iter().enumerate() {
            if k != skip {
                for (a, x) in m.iter_mut().zip(bm) {
                    *a += x / (b - 1) as f64;
                }
            }
        }
        loo.push(g(&m)?);
    }
    let avg = loo.iter().sum::<f64>() / b as f64;
    let var = (b - 1) as f64 / b as f64 * loo.iter().map(|x| (x - avg).powi(2)).sum::<f64>();
    Ok(McEstimate { value: full, std_error: var.sqrt(), n_samples: est.n_samples, seed: est.seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_estimate() {
        let a = batch_means(10_000, 7, |_, r| Ok(r.random::<f64>())).unwrap();
        let b = batch_means(10_000, 7, |_, r| Ok(r.random::<f64>())).unwrap();
        assert_eq!(a, b);
        let c = batch_means(10_000, 8, |_, r| Ok(r.random::<f64>())).unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn uniform_mean_within_error() {
        let e = batch_means(200_000, 3, |_, r| Ok(r.random::<f64>())).unwrap();
        assert!(e.within(0.5, 4.0), "{e:?}");
        let expected = (1.0f64 / 12.0 / 200_000.0).sqrt();
        assert!((e.std_error / expected - 1.0).abs() < 0.5);
    }

    #[test]
    fn sphere_points_are_isotropic() {
        let e = batch_means_vec(100_000, 1, 3, |_, r, out| {
            let s = unit_sphere(r);
            out[0] = s.z;
            out[1] = s.x * s.x;
            out[2] = (s.norm() - 1.0).abs();
            Ok(())
        })
        .unwrap();
        assert!(e.mean[0].abs() < 4.0 * e.std_error[0]);
        assert!((e.mean[1] - 1.0 / 3.0).abs() < 4.0 * e.std_error[1]);
        assert!(e.mean[2] < 1e-15);
    }

    #[test]
    fn rejects_tiny_counts() {
        assert!(batch_means(10, 1, |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn nonfinite_sample_is_reported() {
        let e = batch_means(1000, 1, |k, _| Ok(if k == 17 { f64::NAN } else { 1.0 }));
        assert!(matches!(e, Err(Error::NonFinite(m)) if m.contains("sample 17")));
    }

    #[test]
    fn jackknife_of_ratio() {
        let est = batch_means_vec(64_000, 5, 2, |_, r, out| {
            let x: f64 = r.random();
            out[0] = x;
            out[1] = 1.0;
            Ok(())
        })
        .unwrap();
        let j = jackknife(&est, |m| Ok(m[0] / m[1])).unwrap();
        assert!(j.within(0.5, 4.0));
        assert!(j.std_error > 0.0);
    }
}
