//! Streaming moments and a deterministic chunked Monte Carlo driver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{fill_normal, stream_rng, STREAM_MC_BASE};

/// Number of samples per Monte Carlo chunk. Each chunk owns its own random
/// stream and partial results are merged in chunk order, so estimates do not
/// depend on the thread count.
pub const MC_CHUNK: usize = 8192;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl EstimateWithError {
    pub fn new(value: f64, stderr: f64, n: usize) -> Self {
        Self { value, stderr, n }
    }
}

/// Running central moments up to fourth order, mergeable across chunks
/// (Pebay's pairwise update formulas).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n, o.n);
        let n = na + nb;
        let delta = o.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + o.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * o.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + o.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * o.m3 - nb * self.m3) / n;
        *self = Moments {
            n,
            mean,
            m2,
            m3,
            m4,
        };
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2.0 {
            return f64::NAN;
        }
        self.m2 / (self.n - 1.0)
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn se_variance(&self) -> f64 {
        let n = self.n;
        if n < 4.0 {
            return f64::NAN;
        }
        let mu4 = self.m4 / n;
        let var = self.variance();
        ((mu4 - var * var * (n - 3.0) / (n - 1.0)) / n)
            .max(0.0)
            .sqrt()
    }

    pub fn mean_estimate(&self) -> EstimateWithError {
        EstimateWithError::new(self.mean(), self.se_mean(), self.count())
    }
}

/// Types whose partial results combine associatively.
pub trait Merge {
    fn merge_from(&mut self, other: &Self);
}

impl Merge for Moments {
    fn merge_from(&mut self, other: &Self) {
        self.merge(other)
    }
}

impl<const N: usize> Merge for [Moments; N] {
    fn merge_from(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

/// Draw `n` standard-normal vectors of length `dim` and fold them into an
/// accumulator. The sample set is a function of `(seed, n, dim)` only.
pub fn monte_carlo<A, I, F>(n: usize, dim: usize, seed: u64, init: I, sample: F) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &[f64]) + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, STREAM_MC_BASE + k as u64);
            let count = MC_CHUNK.min(n - k * MC_CHUNK);
            let mut acc = init();
            let mut z = vec![0.0; dim];
            for _ in 0..count {
                fill_normal(&mut rng, &mut z);
                sample(&mut acc, &z);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in &parts {
        total.merge_from(p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let m4: f64 = xs.iter().map(|x| (x - mean).powi(4)).sum();
        (mean, m2 / (n - 1.0), m4 / n)
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(
            xs in proptest::collection::vec(-1e3f64..1e3, 8..200),
            split in 1usize..7,
        ) {
            let cut = xs.len() * split / 8;
            let mut whole = Moments::default();
            xs.iter().for_each(|&x| whole.push(x));
            let mut a = Moments::default();
            let mut b = Moments::default();
            xs[..cut].iter().for_each(|&x| a.push(x));
            xs[cut..].iter().for_each(|&x| b.push(x));
            a.merge(&b);
            let (mean, var, mu4) = direct(&xs);
            for m in [whole, a] {
                prop_assert!((m.mean() - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
                prop_assert!((m.variance() - var).abs() <= 1e-9 * (1.0 + var));
                prop_assert!((m.m4 / m.n - mu4).abs() <= 1e-8 * (1.0 + mu4));
            }
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_and_accurate() {
        let run = |seed| {
            monte_carlo(100_000, 3, seed, Moments::default, |acc, z| {
                acc.push(z.iter().map(|v| v * v).sum())
            })
        };
        let a = run(9);
        assert_eq!(a, run(9));
        assert_ne!(a, run(10));
        // chi-square(3): mean 3, variance 6
        assert!((a.mean() - 3.0).abs() < 4.0 * a.se_mean());
        assert!((a.variance() - 6.0).abs() < 4.0 * a.se_variance());
    }

    #[test]
    fn stderr_scales_as_inverse_sqrt_n() {
        let est = |n| monte_carlo(n, 1, 4, Moments::default, |acc, z| acc.push(z[0])).se_mean();
        let ratio = est(16_384) / est(262_144);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }
}
