use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::kinetics::{Boundary, Dynamics, Evolution, HarrisStream, JumpKernel};
use crate::lattice::{Configuration, Window};
use crate::measures::{sample_product_measure, FugacityCurve};
use crate::rng::{derive_seed, TAG_INITIAL};

use super::stats::{bins_mean, fan_out, truncated_reference, MarginalStats};
use super::{sample_initial, InitialProfile};

/// Initial state for [`convergence_to_critical`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriticalStart {
    /// `eta0 = occupancy` on every site.
    Constant { occupancy: u64 },
    /// Product measure `mu^{alpha, rho}` with `rho < rho_c`.
    Product { density: f64 },
    /// The critical measure itself.
    Critical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    pub start: CriticalStart,
    pub times: Vec<f64>,
    pub observation: Window,
    /// Sites simulated to the left of the observation window; nothing
    /// enters from beyond them.
    pub left_extent: i64,
    /// Sites simulated to the right; `2 range ceil(T)` when the kernel has
    /// leftward jumps, none otherwise.
    #[serde(default)]
    pub right_extent: Option<i64>,
    pub replicas: usize,
    #[serde(default = "default_truncation")]
    pub truncation: u64,
}

fn default_truncation() -> u64 {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub time: f64,
    /// Max over the window of the per-site truncated TV distance.
    pub distance: f64,
    pub per_site: Vec<f64>,
    pub truncated_means: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub c: f64,
    pub rho_c: f64,
    pub observation: Window,
    pub reference_means: Vec<f64>,
    /// Distance of `replicas` exact draws from the reference itself.
    pub noise_floor: f64,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceReport {
    pub fn distances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.distance).collect()
    }
}

/// Truncated-TV distance of the observed marginals to `mu^alpha_c` at each
/// report time, over `replicas` independent runs.
pub fn convergence_to_critical(
    env: &Environment,
    curve: &FugacityCurve,
    kernel: &JumpKernel,
    params: &ConvergenceParams,
    seed: u64,
    workers: usize,
) -> Result<ConvergenceReport> {
    let rho_c = curve.rho_c_finite().ok_or(Error::InfiniteCriticalDensity)?;
    if params.times.is_empty() || params.times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("report times must be nonempty and nondecreasing"));
    }
    if params.times[0] < 0.0 || !params.times.iter().all(|t| t.is_finite()) {
        return Err(Error::param("report times must be finite and >= 0"));
    }
    if params.replicas == 0 || params.left_extent < 0 {
        return Err(Error::param("need replicas > 0 and left_extent >= 0"));
    }
    let t_max = *params.times.last().expect("nonempty");
    let leftward = kernel.jumps().any(|(z, p)| z < 0 && p > 0.0);
    let right = params
        .right_extent
        .unwrap_or(if leftward { 2 * kernel.range() * t_max.ceil() as i64 } else { 0 });
    let obs = params.observation;
    let domain = Window::new(obs.lo - params.left_extent, obs.hi + right)?;
    let local = env.restrict(domain)?;
    let c = curve.c();
    let g = curve.g();
    let m = params.truncation;
    let reference: Vec<Vec<f64>> = obs
        .sites()
        .map(|x| truncated_reference(local.alpha(x), c, g, m))
        .collect::<Result<_>>()?;

    let dynamics = Dynamics::new(&local, kernel, g, Boundary::AbsorbingRightBlockedLeft);
    let offset = (obs.lo - domain.lo) as usize;
    let per_replica = fan_out(params.replicas, workers, seed, |_, s| {
        let config = match &params.start {
            CriticalStart::Constant { occupancy } => Configuration::constant(domain, *occupancy),
            CriticalStart::Product { density } => {
                if *density >= rho_c {
                    return Err(Error::SupercriticalDensity { rho: *density, rho_c });
                }
                sample_initial(&local, curve, &InitialProfile::Constant { rho: *density }, 1, s)?
            }
            CriticalStart::Critical => sample_product_measure(&local, c, g, s)?,
        };
        let mut evo = Evolution::new(dynamics, vec![config], &[], HarrisStream::new(s, &local))?;
        let mut stats = Vec::with_capacity(params.times.len());
        for &t in &params.times {
            evo.advance_to(t)?;
            let mut h = MarginalStats::new(obs, m);
            h.record(&evo.occupancy(0)[offset..offset + obs.len()]);
            stats.push(h);
        }
        Ok(stats)
    })?;

    let mut merged: Vec<MarginalStats> = params.times.iter().map(|_| MarginalStats::new(obs, m)).collect();
    for stats in &per_replica {
        for (acc, h) in merged.iter_mut().zip(stats) {
            acc.merge(h)?;
        }
    }
    let points = params
        .times
        .iter()
        .zip(&merged)
        .map(|(&time, h)| {
            let per_site: Vec<f64> = obs
                .sites()
                .zip(&reference)
                .map(|(x, r)| h.tv_to(x, r))
                .collect();
            ConvergencePoint {
                time,
                distance: per_site.iter().copied().fold(0.0, f64::max),
                per_site,
                truncated_means: obs.sites().map(|x| h.truncated_mean(x)).collect(),
            }
        })
        .collect();

    let obs_env = local.restrict(obs)?;
    let mut exact = MarginalStats::new(obs, m);
    let floor_seed = derive_seed(seed, TAG_INITIAL);
    for k in 0..params.replicas {
        let draw = sample_product_measure(&obs_env, c, g, derive_seed(floor_seed, k as u64))?;
        exact.record(draw.as_slice());
    }
    let noise_floor = obs
        .sites()
        .zip(&reference)
        .map(|(x, r)| exact.tv_to(x, r))
        .fold(0.0, f64::max);

    Ok(ConvergenceReport {
        c,
        rho_c,
        observation: obs,
        reference_means: reference.iter().map(|r| bins_mean(r)).collect(),
        noise_floor,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_defect_env, DefectRule, DisorderLaw};
    use crate::measures::{mean_density_curve, RateFunction};

    fn setup() -> (Environment, FugacityCurve) {
        let rule = DefectRule::power(0.2, 1.5, 0.6, 0.5);
        let env = build_defect_env(&rule, Window::new(-500, 100).unwrap()).unwrap();
        let law = DisorderLaw::Deterministic { rule };
        let curve = mean_density_curve(&law, &RateFunction::mm1(), 0.2, 128).unwrap();
        (env, curve)
    }

    #[test]
    fn critical_start_stays_near_reference() {
        let (env, curve) = setup();
        let params = ConvergenceParams {
            start: CriticalStart::Critical,
            times: vec![0.0, 50.0],
            observation: Window::new(0, 4).unwrap(),
            left_extent: 200,
            right_extent: None,
            replicas: 200,
            truncation: 20,
        };
        let kernel = JumpKernel::totally_asymmetric();
        let report = convergence_to_critical(&env, &curve, &kernel, &params, 9, 1).unwrap();
        assert!((report.rho_c - 0.25).abs() < 1e-12);
        // Noise-floor scale: a few multiples of the exact-sample distance.
        for p in &report.points {
            assert!(p.distance < 0.15, "{p:?}");
        }
        assert!(report.noise_floor < 0.15);
    }

    #[test]
    fn infinite_critical_density_is_rejected() {
        let env = Environment::homogeneous(Window::new(-10, 10).unwrap());
        let curve = mean_density_curve(&DisorderLaw::point(1.0), &RateFunction::mm1(), 1.0, 64).unwrap();
        let params = ConvergenceParams {
            start: CriticalStart::Constant { occupancy: 1 },
            times: vec![1.0],
            observation: Window::new(0, 2).unwrap(),
            left_extent: 5,
            right_extent: None,
            replicas: 1,
            truncation: 20,
        };
        let err = convergence_to_critical(&env, &curve, &JumpKernel::totally_asymmetric(), &params, 1, 1);
        assert!(matches!(err, Err(Error::InfiniteCriticalDensity)));
    }
}
