use serde::{Deserialize, Serialize};

use crate::env::{find_typical_site, Environment};
use crate::error::{Error, Result};
use crate::flux::FluxFunction;
use crate::kinetics::{Boundary, Dynamics, Evolution, HarrisStream, JumpKernel};
use crate::lattice::Site;
use crate::measures::FugacityCurve;
use crate::pde::{godunov_solve, Profile, CFL};

use super::stats::{bins_mean, fan_out, mean_se, truncated_reference};
use super::{propagation_window, sample_initial, InitialProfile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalEqParams {
    pub profile: InitialProfile,
    pub n: u64,
    pub t: f64,
    pub u: f64,
    /// Typicality margin: `alpha(x_N) >= c + delta`.
    pub delta: f64,
    /// Offsets `-radius..=radius` around `x_N`.
    pub radius: i64,
    pub replicas: usize,
    #[serde(default = "default_truncation")]
    pub truncation: u64,
    #[serde(default = "default_dx")]
    pub dx_ref: f64,
    #[serde(default = "default_flat_tol")]
    pub flat_tol: f64,
}

fn default_truncation() -> u64 {
    20
}

fn default_dx() -> f64 {
    1.0 / 800.0
}

fn default_flat_tol() -> f64 {
    0.01
}

const FLAT_CELLS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalEqRow {
    pub offset: i64,
    pub site: Site,
    pub alpha: f64,
    /// Mean of `min(eta, M)` over replicas and its standard error.
    pub empirical: f64,
    pub se: f64,
    pub reference: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalEqReport {
    pub site: Site,
    /// Hydrodynamic density `rho(t, u)`.
    pub rho: f64,
    /// Whether the reference is the critical measure.
    pub critical: bool,
    /// Fugacity of the reference product measure.
    pub beta: f64,
    pub rows: Vec<LocalEqRow>,
}

impl LocalEqReport {
    /// Largest `|gap| / se` over the rows (gaps with zero error count as
    /// exact when they vanish).
    pub fn max_z(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                if r.se > 0.0 {
                    r.gap.abs() / r.se
                } else if r.gap == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap.abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CesaroReport {
    pub delta: f64,
    pub samples: usize,
    pub report: LocalEqReport,
}

struct Setup {
    rho: f64,
    beta: f64,
    critical: bool,
}

fn hydro_value(curve: &FugacityCurve, flux: &FluxFunction, p: &LocalEqParams) -> Result<Setup> {
    p.profile.validate()?;
    if !(p.t > 0.0) || p.n == 0 || p.replicas == 0 || p.radius < 0 {
        return Err(Error::param("need t > 0, n > 0, replicas > 0 and radius >= 0"));
    }
    let margin = flux.lipschitz() * p.t + 0.25;
    let cells = ((2.0 * margin) / p.dx_ref).ceil() as usize;
    let init = Profile::from_fn(p.u - margin, p.u + margin, cells, |x| p.profile.eval(x))?;
    let sol = godunov_solve(&init, flux, p.t, CFL, &[])?.profile;
    let oscillation = sol.oscillation(p.u, FLAT_CELLS);
    if oscillation >= p.flat_tol {
        return Err(Error::NotLocallyFlat { u: p.u, oscillation });
    }
    let rho = sol.value_at(p.u);
    let rho_c = curve.rho_c();
    let critical = rho >= rho_c * (1.0 - 1e-3);
    let beta = if critical {
        curve.c()
    } else {
        curve.density_to_fugacity(rho)?
    };
    Ok(Setup { rho, beta, critical })
}

/// Replica samples of `min(eta(site + j), M)` averaged over `times`.
#[allow(clippy::too_many_arguments)]
fn sample_functionals(
    env: &Environment,
    curve: &FugacityCurve,
    kernel: &JumpKernel,
    p: &LocalEqParams,
    site: Site,
    times: &[f64],
    seed: u64,
    workers: usize,
) -> Result<(Vec<Vec<f64>>, Environment)> {
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let window = propagation_window(env, site - p.radius, site + p.radius, kernel.range(), horizon)?;
    let local = env.restrict(window)?;
    let dynamics = Dynamics::new(&local, kernel, curve.g(), Boundary::Frozen);
    let first = (site - p.radius - window.lo) as usize;
    let width = (2 * p.radius + 1) as usize;
    let m = p.truncation;
    let per_replica = fan_out(p.replicas, workers, seed, |_, s| {
        let config = sample_initial(&local, curve, &p.profile, p.n, s)?;
        let mut evo = Evolution::new(dynamics, vec![config], &[], HarrisStream::new(s, &local))?;
        let mut acc = vec![0.0; width];
        for &t in times {
            evo.advance_to(t)?;
            for (a, o) in acc.iter_mut().zip(&evo.occupancy(0)[first..first + width]) {
                *a += o.truncated(m) as f64;
            }
        }
        Ok(acc.into_iter().map(|a| a / times.len() as f64).collect::<Vec<f64>>())
    })?;
    Ok((per_replica, local))
}

fn build_report(
    setup: &Setup,
    curve: &FugacityCurve,
    p: &LocalEqParams,
    site: Site,
    local: &Environment,
    samples: &[Vec<f64>],
) -> Result<LocalEqReport> {
    let mut rows = Vec::with_capacity(samples.first().map_or(0, Vec::len));
    for (k, j) in (-p.radius..=p.radius).enumerate() {
        let x = site + j;
        let alpha = local.alpha(x);
        let column: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let (empirical, se) = mean_se(&column);
        let reference = bins_mean(&truncated_reference(alpha, setup.beta, curve.g(), p.truncation)?);
        rows.push(LocalEqRow {
            offset: j,
            site: x,
            alpha,
            empirical,
            se,
            reference,
            gap: empirical - reference,
        });
    }
    Ok(LocalEqReport {
        site,
        rho: setup.rho,
        critical: setup.critical,
        beta: setup.beta,
        rows,
    })
}

/// Marginal functionals `E[min(eta(x_N + j), M)]` at time `N t` around a
/// typical site `x_N`, against the equilibrium (or critical) measure at the
/// hydrodynamic density `rho(t, u)`.
pub fn local_eq_stats(
    env: &Environment,
    curve: &FugacityCurve,
    flux: &FluxFunction,
    kernel: &JumpKernel,
    params: &LocalEqParams,
    seed: u64,
    workers: usize,
) -> Result<LocalEqReport> {
    let setup = hydro_value(curve, flux, params)?;
    let site = find_typical_site(env, params.u, params.n, params.delta)?;
    let horizon = params.n as f64 * params.t;
    let (samples, local) = sample_functionals(env, curve, kernel, params, site, &[horizon], seed, workers)?;
    build_report(&setup, curve, params, site, &local, &samples)
}

/// Time-averaged version over `[N (t - delta), N t]` with `samples`
/// equally spaced observation times, for each `delta`. The observation site
/// is `floor(u N)`, typical or not.
#[allow(clippy::too_many_arguments)]
pub fn cesaro_local_eq(
    env: &Environment,
    curve: &FugacityCurve,
    flux: &FluxFunction,
    kernel: &JumpKernel,
    params: &LocalEqParams,
    deltas: &[f64],
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<CesaroReport>> {
    if samples == 0 {
        return Err(Error::param("need at least one sampling time"));
    }
    let setup = hydro_value(curve, flux, params)?;
    let site = (params.u * params.n as f64).floor() as Site;
    let nf = params.n as f64;
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if !(delta >= 0.0 && delta <= params.t) {
            return Err(Error::param(format!("delta = {delta} must lie in [0, t]")));
        }
        let times: Vec<f64> = if delta == 0.0 {
            vec![nf * params.t]
        } else {
            (0..samples)
                .map(|i| nf * (params.t - delta) + nf * delta * (i as f64 + 0.5) / samples as f64)
                .collect()
        };
        let (rows, local) = sample_functionals(env, curve, kernel, params, site, &times, seed, workers)?;
        out.push(CesaroReport {
            delta,
            samples: times.len(),
            report: build_report(&setup, curve, params, site, &local, &rows)?,
        });
    }
    Ok(out)
}
