//! Streaming moment accumulation and the stream-parallel Monte-Carlo driver.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::haar::{HaarSampler, SamplerConfig};
use crate::linalg::CMatrix;

/// Number of sampler substreams one Monte-Carlo run is split into. Fixed so
/// results do not depend on the thread count.
pub const STREAMS_PER_RUN: u64 = 16;

/// Single-pass central moments up to fourth order, mergeable across workers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
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

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        *self = Moments {
            n: self.n + other.n,
            mean,
            m2,
            m3,
            m4,
        };
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn se_mean(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Standard error of the sample variance, `sqrt((μ₄ − σ⁴(n−3)/(n−1))/n)`.
    pub fn se_variance(&self) -> f64 {
        if self.n < 4 {
            return 0.0;
        }
        let n = self.n as f64;
        let mu4 = self.m4 / n;
        let s2 = self.variance();
        ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }

    /// Sample skewness `g₁`.
    pub fn skewness(&self) -> f64 {
        if self.m2 == 0.0 {
            return 0.0;
        }
        let n = self.n as f64;
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// Large-sample standard error of the skewness, `sqrt(6/n)`.
    pub fn se_skewness(&self) -> f64 {
        (6.0 / self.n.max(1) as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Mean and variance of a work-like quantity; analytic results have
/// `n_samples = 0` and zero standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkStatistics {
    pub mean: f64,
    pub variance: f64,
    pub n_samples: u64,
    pub se_mean: f64,
    pub se_variance: f64,
}

impl WorkStatistics {
    pub fn analytic(mean: f64, variance: f64) -> Self {
        Self {
            mean,
            variance,
            n_samples: 0,
            se_mean: 0.0,
            se_variance: 0.0,
        }
    }

    pub fn from_moments(m: &Moments) -> Self {
        Self {
            mean: m.mean(),
            variance: m.variance(),
            n_samples: m.count(),
            se_mean: m.se_mean(),
            se_variance: m.se_variance(),
        }
    }

    /// `|variance − target|` in units of the variance standard error.
    pub fn variance_z(&self, target: f64) -> f64 {
        z_score(self.variance - target, self.se_variance)
    }

    pub fn mean_z(&self, target: f64) -> f64 {
        z_score(self.mean - target, self.se_mean)
    }
}

/// A Monte-Carlo point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n_samples: u64,
}

impl Estimate {
    pub fn from_moments(m: &Moments) -> Self {
        Self {
            value: m.mean(),
            se: m.se_mean(),
            n_samples: m.count(),
        }
    }

    pub fn z(&self, target: f64) -> f64 {
        z_score(self.value - target, self.se)
    }
}

/// Deviation over standard error; an exact match with zero error is 0.
pub fn z_score(deviation: f64, se: f64) -> f64 {
    if deviation == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        deviation.abs() / se
    }
}

/// Elementwise moments of complex matrices (real and imaginary parts tracked
/// separately).
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixMoments {
    rows: usize,
    cols: usize,
    re: Vec<Moments>,
    im: Vec<Moments>,
}

impl MatrixMoments {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            re: vec![Moments::new(); rows * cols],
            im: vec![Moments::new(); rows * cols],
        }
    }

    pub fn push(&mut self, m: &CMatrix) {
        for (k, z) in m.iter().enumerate() {
            self.re[k].push(z.re);
            self.im[k].push(z.im);
        }
    }

    pub fn merge(&mut self, other: &MatrixMoments) {
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            a.merge(b);
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.re.first().map_or(0, Moments::count)
    }

    pub fn mean(&self) -> CMatrix {
        // nalgebra storage is column-major, matching the push order
        CMatrix::from_iterator(
            self.rows,
            self.cols,
            self.re
                .iter()
                .zip(&self.im)
                .map(|(r, i)| Complex64::new(r.mean(), i.mean())),
        )
    }

    /// Compares the elementwise sample mean against `exact`, component by
    /// component, in units of the estimated standard error.
    pub fn compare(&self, exact: &CMatrix, n_se: f64, abs_floor: f64) -> MatrixComparison {
        let mut max_dev = 0.0f64;
        let mut max_z = 0.0f64;
        let mut pass = true;
        for (k, z) in exact.iter().enumerate() {
            for (mom, target) in [(&self.re[k], z.re), (&self.im[k], z.im)] {
                let dev = (mom.mean() - target).abs();
                let se = mom.se_mean();
                max_dev = max_dev.max(dev);
                if dev > abs_floor {
                    max_z = max_z.max(z_score(dev, se));
                }
                if dev > n_se * se + abs_floor {
                    pass = false;
                }
            }
        }
        MatrixComparison {
            max_deviation: max_dev,
            max_z,
            pass,
        }
    }

    pub fn se(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(
            self.rows,
            self.cols,
            self.re
                .iter()
                .zip(&self.im)
                .map(|(r, i)| r.se_mean().hypot(i.se_mean())),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MatrixComparison {
    pub max_deviation: f64,
    pub max_z: f64,
    pub pass: bool,
}

/// Sampler configuration of worker `w` within the run addressed by `cfg`.
pub fn worker_config(cfg: SamplerConfig, worker: u64) -> SamplerConfig {
    cfg.with_stream(cfg.stream.wrapping_mul(1 << 20).wrapping_add(worker))
}

/// Splits `n` samples over [`STREAMS_PER_RUN`] sampler substreams, runs them in
/// parallel and returns the per-stream accumulators in stream order.
pub fn run_streams<A, I, F>(n: usize, cfg: SamplerConfig, init: I, step: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &mut HaarSampler) + Sync,
{
    let streams = STREAMS_PER_RUN as usize;
    let base = n / streams;
    let extra = n % streams;
    (0..streams)
        .into_par_iter()
        .map(|w| {
            let count = base + usize::from(w < extra);
            let mut sampler = HaarSampler::new(worker_config(cfg, w as u64));
            let mut acc = init();
            for _ in 0..count {
                step(&mut acc, &mut sampler);
            }
            acc
        })
        .collect()
}

/// Moments of a scalar sampled `n` times; merge order is by stream index.
pub fn sample_moments<F>(n: usize, cfg: SamplerConfig, sample: F) -> Moments
where
    F: Fn(&mut HaarSampler) -> f64 + Sync,
{
    let parts = run_streams(n, cfg, Moments::new, |acc, s| acc.push(sample(s)));
    let mut total = Moments::new();
    for p in &parts {
        total.merge(p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>();
        (mean, c(2), c(3), c(4))
    }

    #[test]
    fn streaming_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>().powi(3) * 5.0 + 1e3).collect();
        let m: Moments = xs.iter().copied().collect();
        let (mean, m2, m3, m4) = naive(&xs);
        assert!((m.mean - mean).abs() < 1e-9);
        assert!((m.m2 - m2).abs() / m2 < 1e-9);
        assert!((m.m3 - m3).abs() / m3.abs() < 1e-6);
        assert!((m.m4 - m4).abs() / m4 < 1e-9);
    }

    #[test]
    fn merge_equals_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..777).map(|_| rng.random::<f64>() - 0.3).collect();
        let whole: Moments = xs.iter().copied().collect();
        let mut left: Moments = xs[..300].iter().copied().collect();
        let right: Moments = xs[300..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.count(), whole.count());
        assert!((left.mean - whole.mean).abs() < 1e-14);
        assert!((left.m2 - whole.m2).abs() < 1e-10);
        assert!((left.m3 - whole.m3).abs() < 1e-10);
        assert!((left.m4 - whole.m4).abs() < 1e-10);
    }

    #[test]
    fn variance_standard_error_for_gaussian() {
        // for N(0,1): Var(s²) ≈ 2/n
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = rand_distr::StandardNormal;
        let m: Moments = (0..200_000)
            .map(|_| rng.sample::<f64, _>(normal))
            .collect();
        let expected = (2.0 / 200_000f64).sqrt();
        assert!((m.se_variance() / expected - 1.0).abs() < 0.05);
        assert!(m.skewness().abs() < 5.0 * m.se_skewness());
    }

    #[test]
    fn run_streams_is_deterministic_and_complete() {
        let cfg = SamplerConfig::new(2, 5);
        let f = |s: &mut HaarSampler| s.sample()[(0, 0)].re;
        let a = sample_moments(1001, cfg, f);
        let b = sample_moments(1001, cfg, f);
        assert_eq!(a, b);
        assert_eq!(a.count(), 1001);
    }
}
