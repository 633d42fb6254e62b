use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::flux::FluxFunction;
use crate::kinetics::{run, Boundary, Dynamics, HarrisStream, JumpKernel, RunSpec};
use crate::lattice::{Configuration, Site};
use crate::measures::FugacityCurve;
use crate::pde::{godunov_solve, Profile, CFL};
use crate::rng::derive_seed;

use super::stats::fan_out;
use super::{propagation_window, sample_initial, InitialProfile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HydroParams {
    pub profile: InitialProfile,
    pub n_list: Vec<u64>,
    pub t: f64,
    pub replicas: usize,
    /// Macroscopic observation interval `[a, b]`.
    pub observation: (f64, f64),
    /// Block half-width in sites; `floor(sqrt(N))` when absent.
    #[serde(default)]
    pub half_width: Option<usize>,
    /// Cell width of the Godunov reference.
    #[serde(default = "default_dx")]
    pub dx_ref: f64,
}

fn default_dx() -> f64 {
    1.0 / 1600.0
}

impl HydroParams {
    fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        let (a, b) = self.observation;
        if !(b > a) {
            return Err(Error::param("observation interval must have b > a"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::param("t must be positive"));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::param("n_list must hold positive scalings"));
        }
        if self.replicas == 0 {
            return Err(Error::param("at least one replica is needed"));
        }
        if !(self.dx_ref > 0.0) {
            return Err(Error::param("dx_ref must be positive"));
        }
        Ok(())
    }
}

/// Block-averaged occupancy over replicas.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalProfile {
    pub n: u64,
    pub half_width: usize,
    pub replicas: usize,
    /// First and last site of each block.
    pub blocks: Vec<(Site, Site)>,
    /// Block centres `x / N`.
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of `INF` occupancies left out of the averages.
    pub infinite_excluded: usize,
}

/// Disjoint blocks of `2 b + 1` sites tiling `[ceil(a N), floor(b N)]`.
pub fn block_profile(
    configs: &[Configuration],
    n: u64,
    half_width: usize,
    observation: (f64, f64),
) -> Result<EmpiricalProfile> {
    let nf = n as f64;
    let first = (observation.0 * nf).ceil() as Site;
    let last = (observation.1 * nf).floor() as Site;
    let width = 2 * half_width as Site + 1;
    let mut blocks = Vec::new();
    let mut lo = first;
    while lo + width - 1 <= last {
        blocks.push((lo, lo + width - 1));
        lo += width;
    }
    let mut values = Vec::with_capacity(blocks.len());
    let mut infinite_excluded = 0;
    for &(lo, hi) in &blocks {
        let mut sum = 0u64;
        let mut count = 0u64;
        for c in configs {
            for x in lo..=hi {
                let occ = c.try_get(x).ok_or(Error::OutsideWindow(x))?;
                match occ.count() {
                    Some(k) => {
                        sum += k;
                        count += 1;
                    }
                    None => infinite_excluded += 1,
                }
            }
        }
        values.push(if count == 0 { 0.0 } else { sum as f64 / count as f64 });
    }
    let centers = blocks
        .iter()
        .map(|&(lo, hi)| (lo + hi) as f64 / (2.0 * nf))
        .collect();
    Ok(EmpiricalProfile {
        n,
        half_width,
        replicas: configs.len(),
        blocks,
        centers,
        values,
        infinite_excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HydroRow {
    pub n: u64,
    pub l1: f64,
    pub events: u64,
    pub empirical: EmpiricalProfile,
    /// Godunov reference averaged over each block's sites.
    pub reference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HydroReport {
    pub t: f64,
    pub rows: Vec<HydroRow>,
}

impl HydroReport {
    pub fn distances(&self) -> Vec<(u64, f64)> {
        self.rows.iter().map(|r| (r.n, r.l1)).collect()
    }
}

/// Run `replicas` copies to time `N t` for each `N` and compare block
/// averages with the Godunov solution in `L1` over the observation interval.
pub fn hydro_compare(
    env: &Environment,
    curve: &FugacityCurve,
    flux: &FluxFunction,
    kernel: &JumpKernel,
    params: &HydroParams,
    seed: u64,
    workers: usize,
) -> Result<HydroReport> {
    params.validate()?;
    let (a, b) = params.observation;
    let margin = flux.lipschitz() * params.t + 0.25;
    let cells = ((b - a + 2.0 * margin) / params.dx_ref).ceil() as usize;
    let init = Profile::from_fn(a - margin, b + margin, cells, |x| params.profile.eval(x))?;
    let reference = godunov_solve(&init, flux, params.t, CFL, &[])?.profile;
    let mut rows = Vec::with_capacity(params.n_list.len());
    for &n in &params.n_list {
        let nf = n as f64;
        let horizon = nf * params.t;
        let window = propagation_window(
            env,
            (a * nf).floor() as Site,
            (b * nf).ceil() as Site,
            kernel.range(),
            horizon,
        )?;
        let local = env.restrict(window)?;
        let g = curve.g();
        let dynamics = Dynamics::new(&local, kernel, g, Boundary::Frozen);
        let spec = RunSpec::until(horizon);
        let run_seed = derive_seed(seed, n);
        let outputs = fan_out(params.replicas, workers, run_seed, |_, s| {
            let config = sample_initial(&local, curve, &params.profile, n, s)?;
            let out = run(config, dynamics, HarrisStream::new(s, &local), &spec)?;
            Ok((out.final_config, out.events))
        })?;
        let events = outputs.iter().map(|o| o.1).sum();
        let configs: Vec<Configuration> = outputs.into_iter().map(|o| o.0).collect();
        let half_width = params
            .half_width
            .unwrap_or_else(|| (nf.sqrt().floor() as usize).max(1));
        let empirical = block_profile(&configs, n, half_width, params.observation)?;
        let reference: Vec<f64> = empirical
            .blocks
            .iter()
            .map(|&(lo, hi)| {
                (lo..=hi).map(|x| reference.value_at(x as f64 / nf)).sum::<f64>()
                    / (hi - lo + 1) as f64
            })
            .collect();
        let block_len = (2 * half_width + 1) as f64 / nf;
        let l1 = empirical
            .values
            .iter()
            .zip(&reference)
            .map(|(e, r)| (e - r).abs() * block_len)
            .sum();
        rows.push(HydroRow {
            n,
            l1,
            events,
            empirical,
            reference,
        });
    }
    Ok(HydroReport { t: params.t, rows })
}
