use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Occupancy, Site, Window};
use crate::measures::{theta_pmf, RateFunction, TAIL_EPS};
use crate::rng::replica_seed;

/// Per-site occupancy histograms truncated at `m` (bin `m` holds `n >= m`,
/// including `INF`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalStats {
    window: Window,
    m: u64,
    counts: Vec<Vec<u64>>,
    samples: u64,
}

impl MarginalStats {
    pub fn new(window: Window, m: u64) -> Self {
        Self {
            window,
            m,
            counts: vec![vec![0; m as usize + 1]; window.len()],
            samples: 0,
        }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn truncation(&self) -> u64 {
        self.m
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Add one sample; `occ` lists the occupancies of `window` in order.
    pub fn record(&mut self, occ: &[Occupancy]) {
        assert_eq!(occ.len(), self.window.len(), "sample does not cover the window");
        for (hist, o) in self.counts.iter_mut().zip(occ) {
            hist[o.truncated(self.m) as usize] += 1;
        }
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &MarginalStats) -> Result<()> {
        self.window.ensure_same(&other.window)?;
        if self.m != other.m {
            return Err(Error::param("histograms use different truncation levels"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.samples += other.samples;
        Ok(())
    }

    pub fn counts(&self, site: Site) -> &[u64] {
        &self.counts[self.slot(site)]
    }

    pub fn pmf(&self, site: Site) -> Vec<f64> {
        let k = self.samples.max(1) as f64;
        self.counts(site).iter().map(|&n| n as f64 / k).collect()
    }

    /// Empirical mean of `min(eta(site), m)`.
    pub fn truncated_mean(&self, site: Site) -> f64 {
        self.pmf(site)
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn tv_to(&self, site: Site, reference: &[f64]) -> f64 {
        tv_distance(&self.pmf(site), reference)
    }

    fn slot(&self, site: Site) -> usize {
        self.window
            .index(site)
            .unwrap_or_else(|| panic!("site {site} outside the histogram window"))
    }
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Law of `min(N, m)` for `N ~ theta_{beta / alpha}`, as `m + 1` bins.
/// At `beta = alpha` the site is critical and all mass sits in bin `m`.
pub fn truncated_reference(alpha: f64, beta: f64, g: &RateFunction, m: u64) -> Result<Vec<f64>> {
    if beta > alpha {
        return Err(Error::FugacityTooLarge { beta, limit: alpha });
    }
    let mut bins = vec![0.0; m as usize + 1];
    if beta == alpha {
        bins[m as usize] = 1.0;
        return Ok(bins);
    }
    let law = theta_pmf(beta / alpha, g, TAIL_EPS)?;
    for (n, b) in bins.iter_mut().enumerate().take(m as usize) {
        *b = law.prob(n as u64);
    }
    bins[m as usize] = law.survival(m);
    Ok(bins)
}

/// Mean of a truncated law given as bins.
pub fn bins_mean(bins: &[f64]) -> f64 {
    bins.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

/// Sample mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Run `job(k, seed_k)` for `k < replicas` on `workers` threads.
///
/// Replica `k` always receives `replica_seed(seed, k)` and results come back
/// in replica order, so the output does not depend on `workers`.
pub fn fan_out<T, F>(replicas: usize, workers: usize, seed: u64, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let run = || {
        (0..replicas)
            .into_par_iter()
            .map(|k| job(k, replica_seed(seed, k)))
            .collect::<Result<Vec<T>>>()
    };
    if workers == 0 {
        return run();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))?
        .install(run)
}
