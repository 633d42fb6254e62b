//! Command configurations and the shared model block.

use serde::{Deserialize, Serialize};

use dzrp::env::{build_defect_env, build_iid_env, DefectRule, DisorderLaw, Environment};
use dzrp::experiments::{ConvergenceParams, HydroParams, InitialProfile, LocalEqParams, PeakParams};
use dzrp::flux::{build_flux, build_flux_to, dilute_flux, FluxFunction};
use dzrp::kinetics::{Boundary, JumpKernel};
use dzrp::measures::{mean_density_curve, mean_density_curve_env, FugacityCurve, RateFunction};
use dzrp::pde::CFL;
use dzrp::{Site, Window};

use crate::CliError;

fn mm1() -> RateFunction {
    RateFunction::mm1()
}

fn tasep() -> JumpKernel {
    JumpKernel::totally_asymmetric()
}

fn default_grid() -> usize {
    512
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Homogeneous { window: [Site; 2] },
    /// I.i.d. or dilute law, drawn with the run seed.
    Iid { law: DisorderLaw, window: [Site; 2] },
    Defect { rule: DefectRule, window: [Site; 2] },
}

impl EnvSpec {
    fn window(&self) -> dzrp::Result<Window> {
        let [lo, hi] = match self {
            EnvSpec::Homogeneous { window } | EnvSpec::Iid { window, .. } | EnvSpec::Defect { window, .. } => *window,
        };
        Window::new(lo, hi)
    }

    fn law(&self) -> DisorderLaw {
        match self {
            EnvSpec::Homogeneous { .. } => DisorderLaw::point(1.0),
            EnvSpec::Iid { law, .. } => law.clone(),
            EnvSpec::Defect { rule, .. } => DisorderLaw::Deterministic { rule: rule.clone() },
        }
    }

    fn build(&self, seed: u64) -> dzrp::Result<Environment> {
        let w = self.window()?;
        match self {
            EnvSpec::Homogeneous { .. } => Ok(Environment::homogeneous(w)),
            EnvSpec::Iid { law, .. } => build_iid_env(law, w, seed),
            EnvSpec::Defect { rule, .. } => build_defect_env(rule, w),
        }
    }
}

/// Environment, rate function, kernel and the fugacity curve built from them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub env: Option<EnvSpec>,
    #[serde(default = "mm1")]
    pub g: RateFunction,
    #[serde(default = "tasep")]
    pub kernel: JumpKernel,
    /// Critical fugacity; the infimum of the disorder when absent.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            env: None,
            g: mm1(),
            kernel: tasep(),
            c: None,
            grid_size: default_grid(),
        }
    }
}

pub struct Model {
    pub env: Environment,
    pub curve: FugacityCurve,
}

impl ModelConfig {
    /// Builds the environment and the curve, filling in `c`.
    ///
    /// A `--env-file` environment replaces the built one for the dynamics;
    /// the curve still comes from `model.env`'s law when that is set, and
    /// from the file's rates otherwise.
    pub fn resolve(&mut self, env_file: Option<&Environment>, seed: u64) -> Result<Model, CliError> {
        let law = self.env.as_ref().map(EnvSpec::law);
        let env = match (env_file, &self.env) {
            (Some(env), _) => env.clone(),
            (None, Some(spec)) => spec.build(seed).map_err(CliError::config)?,
            (None, None) => return Err(CliError::Config("no environment: set model.env or pass --env-file".into())),
        };
        let c = match self.c {
            Some(c) => c,
            None => match &law {
                Some(law) => law.support_inf().map_err(CliError::config)?,
                None => env.c(),
            },
        };
        check_c(c)?;
        self.c = Some(c);
        let curve = match &law {
            Some(law) => mean_density_curve(law, &self.g, c, self.grid_size),
            None => mean_density_curve_env(&env, &self.g, c, self.grid_size),
        }
        .map_err(CliError::config)?;
        Ok(Model { env, curve })
    }
}

pub fn check_c(c: f64) -> Result<(), CliError> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(CliError::Config(format!("c = {c} must lie in (0, 1]")));
    }
    Ok(())
}

/// Flux from the model's curve, or the dilute-limit flux when `dilute_c` is set.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub dilute_c: Option<f64>,
    /// Upper end of the table when `rho_c` is infinite.
    #[serde(default)]
    pub rho_max: Option<f64>,
}

impl FluxConfig {
    pub fn resolve(&mut self, env_file: Option<&Environment>, seed: u64) -> Result<(FluxFunction, Option<FugacityCurve>), CliError> {
        if let Some(c) = self.dilute_c {
            if !(c > 0.0 && c < 1.0) {
                return Err(CliError::Config(format!("dilute_c = {c} must lie in (0, 1)")));
            }
            let flux = dilute_flux(c, &self.model.g, &self.model.kernel).map_err(CliError::config)?;
            return Ok((flux, None));
        }
        let model = self.model.resolve(env_file, seed)?;
        let flux = flux_for(&model.curve, &self.model.kernel, &mut self.rho_max, None)?;
        Ok((flux, Some(model.curve)))
    }
}

/// `build_flux`, or `build_flux_to(rho_max)` when `rho_c` is infinite.
/// A missing `rho_max` falls back to `fallback` and is written back.
pub fn flux_for(
    curve: &FugacityCurve,
    kernel: &JumpKernel,
    rho_max: &mut Option<f64>,
    fallback: Option<f64>,
) -> Result<FluxFunction, CliError> {
    if curve.rho_c_finite().is_some() && rho_max.is_none() {
        return build_flux(curve, kernel).map_err(CliError::config);
    }
    let top = rho_max
        .or(fallback)
        .ok_or_else(|| CliError::Config("rho_c is infinite: set rho_max".into()))?;
    if !(top > 0.0 && top.is_finite()) {
        return Err(CliError::Config(format!("density range [0, {top}] is empty")));
    }
    *rho_max = Some(top);
    build_flux_to(curve, kernel, top).map_err(CliError::config)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Empty,
    Constant { occupancy: u64 },
    /// Product measure with fugacity `beta`.
    Product { beta: f64 },
    /// Product measure conditioned on its mass; the expected mass when absent.
    Canonical {
        beta: f64,
        #[serde(default)]
        mass: Option<u64>,
    },
    /// Density profile `rho0(x / n)`.
    Profile { profile: InitialProfile, n: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSpec {
    pub x0: Site,
    #[serde(default)]
    pub velocity: f64,
}

fn ring() -> Boundary {
    Boundary::Ring
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "ring")]
    pub boundary: Boundary,
    pub initial: InitialSpec,
    pub horizon: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub trackers: Vec<TrackerSpec>,
    #[serde(default = "one")]
    pub replicas: usize,
}

fn default_t() -> f64 {
    1.0
}

fn default_range() -> [f64; 2] {
    [-1.0, 2.0]
}

fn default_points() -> usize {
    601
}

fn default_dx() -> f64 {
    1.0 / 400.0
}

fn default_cfl() -> f64 {
    CFL
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GodunovConfig {
    #[serde(default = "default_dx")]
    pub dx: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiemannConfig {
    #[serde(default)]
    pub flux: FluxConfig,
    pub lam: f64,
    pub rho: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub godunov: Option<GodunovConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub rho_max: Option<f64>,
    pub experiment: HydroParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    #[serde(default)]
    pub model: ModelConfig,
    pub experiment: ConvergenceParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CesaroConfig {
    pub deltas: Vec<f64>,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalEqConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub rho_max: Option<f64>,
    pub experiment: LocalEqParams,
    #[serde(default)]
    pub cesaro: Option<CesaroConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakConfig {
    #[serde(default = "mm1")]
    pub g: RateFunction,
    pub kernel: JumpKernel,
    pub experiment: PeakParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub env: EnvSpec,
}

impl EnvConfig {
    pub fn build(&self, seed: u64) -> Result<Environment, CliError> {
        self.env.build(seed).map_err(CliError::config)
    }
}
