use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::kinetics::{Boundary, CurrentTracker, Dynamics, Evolution, HarrisStream, JumpKernel};
use crate::lattice::{Configuration, Occupancy, Site, Window};
use crate::measures::RateFunction;

use super::stats::{fan_out, mean_se};

/// A single loaded site at `peak_site < 0` with rate `c`, every other site
/// at rate 1 and vacant; the current is counted on the bond `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub c: f64,
    pub peak_site: Site,
    pub peak_mass: u64,
    pub horizon: f64,
    /// Averaging starts at `warmup * horizon`.
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    /// Sites simulated to the right of the origin.
    #[serde(default = "default_right")]
    pub right_extent: i64,
    pub replicas: usize,
    /// Number of points in the reported trace.
    #[serde(default = "default_trace")]
    pub trace_points: usize,
}

fn default_warmup() -> f64 {
    0.2
}

fn default_right() -> i64 {
    8
}

fn default_trace() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurrentTrace {
    /// `(t, mean cumulative count)` across replicas.
    pub trace: Vec<(f64, f64)>,
    /// Time-averaged current over `[warmup T, T]` and its standard error.
    pub current: f64,
    pub se: f64,
    /// `c * sum_z z p(z)`, the current carried by the critical measure.
    pub target: f64,
    pub ratio: f64,
}

/// Current through the origin fed by an isolated peak.
pub fn peak_current(
    g: &RateFunction,
    kernel: &JumpKernel,
    params: &PeakParams,
    seed: u64,
    workers: usize,
) -> Result<CurrentTrace> {
    let p = params;
    if !(p.c > 0.0 && p.c <= 1.0) {
        return Err(Error::RateOutOfRange(p.c));
    }
    if p.peak_site >= 0 || p.right_extent < 1 {
        return Err(Error::param("peak must sit left of the origin with room to the right"));
    }
    if !(p.horizon > 0.0) || !(0.0..1.0).contains(&p.warmup) || p.replicas == 0 || p.trace_points == 0 {
        return Err(Error::param("need horizon > 0, warmup in [0, 1), replicas > 0, trace_points > 0"));
    }
    let window = Window::new(p.peak_site, p.right_extent)?;
    let mut alpha = vec![1.0; window.len()];
    alpha[0] = p.c;
    let env = Environment::from_rates(window, alpha, vec![p.peak_site])?;
    let mut eta0 = Configuration::empty(window);
    eta0.set(p.peak_site, Occupancy::finite(p.peak_mass));
    let dynamics = Dynamics::new(&env, kernel, g, Boundary::AbsorbingRightBlockedLeft);
    let start = p.warmup * p.horizon;
    let times: Vec<f64> = (1..=p.trace_points)
        .map(|i| p.horizon * i as f64 / p.trace_points as f64)
        .collect();
    let per_replica = fan_out(p.replicas, workers, seed, |_, s| {
        let tracker = [CurrentTracker::fixed(0)];
        let mut evo = Evolution::new(dynamics, vec![eta0.clone()], &tracker, HarrisStream::new(s, &env))?;
        evo.advance_to(start)?;
        let at_start = evo.trackers(0)[0].count();
        let mut counts = Vec::with_capacity(times.len());
        for &t in &times {
            evo.advance_to(t.max(start))?;
            counts.push(evo.trackers(0)[0].count());
        }
        Ok((at_start, counts))
    })?;
    let trace = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mean = per_replica.iter().map(|r| r.1[i] as f64).sum::<f64>() / p.replicas as f64;
            (t, mean)
        })
        .collect();
    let span = p.horizon - start;
    let currents: Vec<f64> = per_replica
        .iter()
        .map(|(s, c)| (c[c.len() - 1] - s) as f64 / span)
        .collect();
    let (current, se) = mean_se(&currents);
    let target = p.c * kernel.drift();
    Ok(CurrentTrace {
        trace,
        current,
        se,
        target,
        ratio: current / target,
    })
}

/// [`peak_current`] for a kernel that is not nearest-neighbour.
pub fn counterexample_demo(
    g: &RateFunction,
    kernel: &JumpKernel,
    params: &PeakParams,
    seed: u64,
    workers: usize,
) -> Result<CurrentTrace> {
    if kernel.is_nearest_neighbor() {
        return Err(Error::param("the peak demo needs a kernel with jumps longer than 1"));
    }
    peak_current(g, kernel, params, seed, workers)
}
