//! Desk-scale experiments: hydrodynamic comparison, convergence to the
//! critical measure, local equilibrium and the non-nearest-neighbour peak.

mod counterexample;
mod critical;
mod hydro;
mod local_eq;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Occupancy, Site, Window};
use crate::measures::{sample_fugacity_profile, FugacityCurve};

pub use counterexample::{counterexample_demo, peak_current, CurrentTrace, PeakParams};
pub use critical::{
    convergence_to_critical, ConvergenceParams, ConvergencePoint, ConvergenceReport, CriticalStart,
};
pub use hydro::{block_profile, hydro_compare, EmpiricalProfile, HydroParams, HydroReport, HydroRow};
pub use local_eq::{
    cesaro_local_eq, local_eq_stats, CesaroReport, LocalEqParams, LocalEqReport, LocalEqRow,
};
pub use stats::{fan_out, mean_se, tv_distance, MarginalStats};

/// Macroscopic initial density `rho0(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    Constant { rho: f64 },
    /// `left` on `u <= 0`, `right` on `u > 0`.
    Step { left: f64, right: f64 },
}

impl InitialProfile {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            InitialProfile::Constant { rho } => rho,
            InitialProfile::Step { left, right } => {
                if u <= 0.0 {
                    left
                } else {
                    right
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let fine = match *self {
            InitialProfile::Constant { rho } => ok(rho),
            InitialProfile::Step { left, right } => ok(left) && ok(right),
        };
        if fine {
            Ok(())
        } else {
            Err(Error::param("initial densities must be finite and >= 0"))
        }
    }
}

/// Configuration on `env`'s window with density profile `rho0(x / n)`.
///
/// Subcritical sites draw from `theta_{beta / alpha(x)}` with
/// `beta = Rbar^{-1}(rho0)`; sites where `rho0 >= rho_c` receive the
/// deterministic pattern `floor((x + 1) rho0) - floor(x rho0)`.
pub fn sample_initial(
    env: &Environment,
    curve: &FugacityCurve,
    profile: &InitialProfile,
    n: u64,
    seed: u64,
) -> Result<Configuration> {
    profile.validate()?;
    let w = env.window();
    let n = n as f64;
    let mut betas = Vec::with_capacity(w.len());
    let mut cache: Option<(f64, f64)> = None;
    for x in w.sites() {
        let rho = profile.eval(x as f64 / n);
        let beta = if rho >= curve.rho_c() {
            0.0
        } else {
            match cache {
                Some((r, b)) if r == rho => b,
                _ => {
                    let b = curve.density_to_fugacity(rho)?;
                    cache = Some((rho, b));
                    b
                }
            }
        };
        betas.push(beta);
    }
    let mut config = sample_fugacity_profile(env, |x| betas[(x - w.lo) as usize], curve.g(), seed)?;
    for x in w.sites() {
        let rho = profile.eval(x as f64 / n);
        if rho >= curve.rho_c() {
            config.set(x, Occupancy::finite(fill_count(x, rho)));
        }
    }
    Ok(config)
}

fn fill_count(x: Site, rho: f64) -> u64 {
    (((x + 1) as f64 * rho).floor() as i64 - (x as f64 * rho).floor() as i64) as u64
}

/// Window `[lo - pad, hi + pad]` with `pad = 2 range ceil(horizon)`, which
/// must fit inside `env`.
pub fn propagation_window(env: &Environment, lo: Site, hi: Site, range: i64, horizon: f64) -> Result<Window> {
    let pad = 2 * range * horizon.ceil() as i64;
    let need = Window::new(lo - pad, hi + pad)?;
    let have = env.window();
    if !have.contains_window(&need) {
        return Err(Error::WindowTooSmall {
            need_lo: need.lo,
            need_hi: need.hi,
            have_lo: have.lo,
            have_hi: have.hi,
        });
    }
    Ok(need)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DisorderLaw;
    use crate::measures::{mean_density_curve, RateFunction};

    #[test]
    fn supercritical_fill_has_exact_density() {
        let total: u64 = (-500..500).map(|x| fill_count(x, 1.3)).sum();
        assert_eq!(total, 1300);
        assert!((-50..50).all(|x| fill_count(x, 1.0) == 1));
    }

    #[test]
    fn step_initial_condition() {
        let env = Environment::homogeneous(Window::new(-20, 20).unwrap());
        let law = DisorderLaw::point(1.0);
        let curve = mean_density_curve(&law, &RateFunction::mm1(), 0.2, 64).unwrap();
        let profile = InitialProfile::Step { left: 1.0, right: 0.0 };
        let c = sample_initial(&env, &curve, &profile, 10, 3).unwrap();
        assert!((-20..=0).all(|x| c.get(x) == Occupancy::finite(1)));
        assert!((1..=20).all(|x| c.get(x) == Occupancy::ZERO));
    }

    #[test]
    fn propagation_rule() {
        let env = Environment::homogeneous(Window::new(-100, 100).unwrap());
        assert_eq!(propagation_window(&env, -10, 10, 1, 45.0).unwrap(), Window::new(-100, 100).unwrap());
        assert!(matches!(
            propagation_window(&env, -10, 10, 1, 45.5),
            Err(Error::WindowTooSmall { .. })
        ));
    }
}
