use std::io::Write;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use dzrp::env::Environment;
use dzrp::experiments::{
    cesaro_local_eq, convergence_to_critical, fan_out, hydro_compare, local_eq_stats, mean_se, peak_current,
    sample_initial, CriticalStart, LocalEqReport,
};
use dzrp::flux::check_assumption_h;
use dzrp::io::{write_snapshots, write_tracker_log};
use dzrp::kinetics::{run, CurrentTracker, Dynamics, HarrisStream, RunSpec};
use dzrp::measures::{mean_occupancy, sample_canonical, sample_product_measure};
use dzrp::pde::{check_supercritical_facts, godunov_solve, l1_distance, riemann_solution, Profile};
use dzrp::Configuration;

use crate::config::{
    flux_for, ConvergeConfig, EnvConfig, FluxConfig, HydroConfig, InitialSpec, LocalEqConfig, PeakConfig,
    RiemannConfig, SimulateConfig,
};
use crate::manifest::sha256_hex;
use crate::CliError;

pub struct Ctx {
    pub seed: u64,
    pub workers: usize,
    pub env_file: Option<Environment>,
}

/// Resolved configuration plus the files a command produced.
pub struct Outcome {
    pub config: Value,
    pub env_sha256: Option<String>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(config: &impl Serialize, env: Option<&Environment>) -> Self {
        Self {
            config: serde_json::to_value(config).expect("config serializes"),
            env_sha256: env.map(|e| sha256_hex(e.to_json().as_bytes())),
            files: Vec::new(),
        }
    }

    fn file(mut self, name: &str, bytes: Vec<u8>) -> Self {
        self.files.push((name.into(), bytes));
        self
    }

    fn summary(self, value: Value) -> Self {
        let mut bytes = serde_json::to_vec_pretty(&value).expect("summary serializes");
        bytes.push(b'\n');
        self.file("summary.json", bytes)
    }
}

fn parse<T: DeserializeOwned>(raw: Value) -> Result<T, CliError> {
    serde_json::from_value(raw).map_err(|e| CliError::Config(format!("config: {e}")))
}

fn csv(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(buf)
}

pub fn flux(raw: Value, ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut cfg: FluxConfig = parse(raw)?;
    let (flux, curve) = cfg.resolve(ctx.env_file.as_ref(), ctx.seed)?;
    let mut table = Vec::new();
    flux.write_csv(&mut table).map_err(CliError::runtime)?;
    let assumption_h = curve.as_ref().and_then(|c| check_assumption_h(c).ok());
    let summary = json!({
        "c": flux.c(),
        "drift": flux.drift(),
        "plateau": flux.plateau(),
        "rho_c": finite_or_null(flux.rho_c()),
        "lipschitz": flux.lipschitz(),
        "v_c0": flux.critical_speed(0.0).ok(),
        "assumption_h": assumption_h.map(|h| json!({
            "holds": h.holds,
            "margin": h.margin,
            "slope_at_c": h.slope_at_c,
            "advisory": "grid check, not a proof",
        })),
    });
    let mut out = Outcome::new(&cfg, None).file("flux.csv", table);
    if let Some(curve) = curve {
        let mut text = Vec::new();
        curve.write_csv(&mut text).map_err(CliError::runtime)?;
        out = out.file("curve.csv", text);
    }
    Ok(out.summary(summary))
}

fn finite_or_null(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn simulate(raw: Value, ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut cfg: SimulateConfig = parse(raw)?;
    let model = cfg.model.resolve(ctx.env_file.as_ref(), ctx.seed)?;
    let env = &model.env;
    if !(cfg.horizon >= 0.0 && cfg.horizon.is_finite()) {
        return Err(CliError::Config(format!("horizon {} must be finite and >= 0", cfg.horizon)));
    }
    if cfg.replicas == 0 {
        return Err(CliError::Config("replicas must be positive".into()));
    }
    let g = cfg.model.g.clone();
    match &mut cfg.initial {
        InitialSpec::Product { beta } if !(*beta >= 0.0 && *beta <= env.c()) => {
            return Err(CliError::Config(format!("beta = {beta} exceeds c = {}", env.c())));
        }
        InitialSpec::Canonical { beta, mass } => {
            if !(*beta >= 0.0 && *beta < env.c()) {
                return Err(CliError::Config(format!("beta = {beta} must lie in [0, c = {})", env.c())));
            }
            if mass.is_none() {
                let mut total = 0.0;
                for &a in env.rates() {
                    total += mean_occupancy(*beta / a, &g).map_err(CliError::config)?;
                }
                *mass = Some(total.round() as u64);
            }
        }
        InitialSpec::Profile { profile, n } => {
            profile.validate().map_err(CliError::config)?;
            if *n == 0 {
                return Err(CliError::Config("profile scaling n must be positive".into()));
            }
        }
        _ => {}
    }
    let dynamics = Dynamics::new(env, &cfg.model.kernel, &g, cfg.boundary);
    let trackers: Vec<CurrentTracker> = cfg.trackers.iter().map(|t| CurrentTracker::new(t.x0, t.velocity)).collect();
    let spec = RunSpec::until(cfg.horizon)
        .with_snapshots(cfg.snapshots.clone())
        .with_trackers(trackers);
    let w = env.window();
    let outputs = fan_out(cfg.replicas, ctx.workers, ctx.seed, |_, s| {
        let eta = match &cfg.initial {
            InitialSpec::Empty => Configuration::empty(w),
            InitialSpec::Constant { occupancy } => Configuration::constant(w, *occupancy),
            InitialSpec::Product { beta } => sample_product_measure(env, *beta, &g, s)?,
            InitialSpec::Canonical { beta, mass } => sample_canonical(env, *beta, &g, mass.unwrap_or(0), s)?,
            InitialSpec::Profile { profile, n } => sample_initial(env, &model.curve, profile, *n, s)?,
        };
        run(eta, dynamics, HarrisStream::new(s, env), &spec)
    })
    .map_err(CliError::runtime)?;

    let scale = w.len() as f64 * cfg.horizon;
    let currents: Vec<f64> = outputs.iter().map(|o| o.displacement as f64 / scale).collect();
    let (mean, se) = mean_se(&currents);
    let replicas: Vec<Value> = outputs
        .iter()
        .zip(&currents)
        .map(|(o, &current)| {
            json!({
                "current": current,
                "displacement": o.displacement,
                "accepted": o.accepted,
                "events": o.events,
                "final_mass": o.final_config.finite_mass(),
                "tracker_counts": o.trackers.iter().map(|t| t.count()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let first = &outputs[0];
    let snapshots = csv(|b| write_snapshots(b, &first.snapshots).map_err(into_io))?;
    let trackers = csv(|b| write_tracker_log(b, &first.tracker_log).map_err(into_io))?;
    let summary = json!({ "mean_current": mean, "se_current": se, "replicas": replicas });
    Ok(Outcome::new(&cfg, Some(env))
        .file("snapshots.csv", snapshots)
        .file("trackers.csv", trackers)
        .summary(summary))
}

fn into_io(e: dzrp::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

pub fn riemann(raw: Value, ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut cfg: RiemannConfig = parse(raw)?;
    let (flux, _) = cfg.flux.resolve(ctx.env_file.as_ref(), ctx.seed)?;
    let [a, b] = cfg.range;
    if !(cfg.t > 0.0) || !(b > a) || cfg.points < 2 {
        return Err(CliError::Config("need t > 0, range with b > a and at least 2 points".into()));
    }
    if !(cfg.lam >= 0.0 && cfg.rho >= 0.0) {
        return Err(CliError::Config("Riemann states must be >= 0".into()));
    }
    let xs: Vec<f64> = (0..cfg.points).map(|i| a + (b - a) * i as f64 / (cfg.points - 1) as f64).collect();
    let exact = |x: f64| riemann_solution(&flux, cfg.lam, cfg.rho, cfg.t, x);
    let mut summary = json!({ "rho_c": finite_or_null(flux.rho_c()) });
    let godunov = match &cfg.godunov {
        Some(gc) => {
            if !(gc.cfl > 0.0 && gc.cfl < 1.0) {
                return Err(CliError::Config(format!("CFL {} not in (0, 1)", gc.cfl)));
            }
            if !(gc.dx > 0.0) {
                return Err(CliError::Config("dx must be positive".into()));
            }
            let margin = flux.lipschitz() * cfg.t + 0.25;
            let (lo, hi) = (a.min(0.0) - margin, b.max(0.0) + margin);
            let cells = ((hi - lo) / gc.dx).round() as usize;
            let init = Profile::riemann(lo, hi, cells, cfg.lam, cfg.rho).map_err(CliError::config)?;
            let sol = godunov_solve(&init, &flux, cfg.t, gc.cfl, &[]).map_err(CliError::config)?.profile;
            let l1 = l1_distance(&sol, |x| exact(x).unwrap_or(f64::NAN), a, b, 8);
            if l1.is_nan() {
                return Err(CliError::Runtime("exact solution undefined on the range".into()));
            }
            summary["l1"] = json!(l1);
            summary["cells"] = json!(cells);
            Some(sol)
        }
        None => None,
    };
    let rho_c = flux.rho_c();
    if rho_c.is_finite() && cfg.lam >= rho_c && cfg.rho < rho_c {
        let r = check_supercritical_facts(&flux, cfg.lam, cfg.rho, cfg.t, &xs).map_err(CliError::runtime)?;
        summary["supercritical"] = json!({
            "v_c": r.v_c,
            "left_deviation": r.left_deviation,
            "right_deviation": r.right_deviation,
            "front_deviation": r.front_deviation,
            "beyond_front_excess": r.beyond_front_excess,
            "plateau_points": r.plateau_points,
            "front_skipped": r.front_skipped,
            "passed": r.passed(1e-10),
        });
    }
    let mut table = Vec::new();
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    match &godunov {
        Some(_) => writeln!(table, "x,exact,godunov").map_err(io)?,
        None => writeln!(table, "x,exact").map_err(io)?,
    }
    for &x in &xs {
        let r = exact(x).map_err(CliError::runtime)?;
        match &godunov {
            Some(sol) => writeln!(table, "{x},{r},{}", sol.value_at(x)).map_err(io)?,
            None => writeln!(table, "{x},{r}").map_err(io)?,
        }
    }
    Ok(Outcome::new(&cfg, None).file("riemann.csv", table).summary(summary))
}

pub fn hydro(raw: Value, ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut cfg: HydroConfig = parse(raw)?;
    let model = cfg.model.resolve(ctx.env_file.as_ref(), ctx.seed)?;
    cfg.experiment.profile.validate().map_err(CliError::config)?;
    let top = profile_top(&cfg.experiment.profile);
    let flux = flux_for(&model.curve, &cfg.model.kernel, &mut cfg.rho_max, Some(2.0 * top + 1.0))?;
    let report = hydro_compare(&model.env, &model.curve, &flux, &cfg.model.kernel, &cfg.experiment, ctx.seed, ctx.workers)
        .map_err(classify)?;
    let mut table = b"n,center,empirical,reference\n".to_vec();
    for row in &report.rows {
        for ((c, e), r) in row.empirical.centers.iter().zip(&row.empirical.values).zip(&row.reference) {
            writeln!(table, "{},{c},{e},{r}", row.n).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| json!({ "n": r.n, "l1": r.l1, "events": r.events, "half_width": r.empirical.half_width }))
        .collect();
    Ok(Outcome::new(&cfg, Some(&model.env))
        .file("hydro.csv", table)
        .summary(json!({ "t": report.t, "rows": rows })))
}

fn profile_top(p: &dzrp::experiments::InitialProfile) -> f64 {
    use dzrp::experiments::InitialProfile::*;
    match *p {
        Constant { rho } => rho,
        Step { left, right } => left.max(right),
    }
}

/// Parameter errors found while running are still configuration errors.
fn classify(e: dzrp::Error) -> CliError {
    match e {
        dzrp::Error::InvalidParameter(_)
        | dzrp::Error::WindowTooSmall { .. }
        | dzrp::Error::SupercriticalDensity { .. }
        | dzrp::Error::FugacityTooLarge { .. }
        | dzrp::Error::NoTypicalSite(_)
        | dzrp::Error::InfiniteCriticalDensity
        | dzrp::Error::NotLocallyFlat { .. } => CliError::config(e),
        e => CliError::runtime(e),
    }
}

pub fn converge(raw: Value, ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut cfg: ConvergeConfig = parse(raw)?;
    let model = cfg.model.resolve(ctx.env_file.as_ref(), ctx.seed)?;
    let rho_c = model
        .curve
        .rho_c_finite()
        .ok_or_else(|| {
            let hint = if cfg.model.env.is_none() { "; set model.env to supply the disorder law" } else { "" };
            CliError::Config(format!("critical density is infinite{hint}"))
        })?;
    if let CriticalStart::Product { density } = cfg.experiment.start {
        if !(density >= 0.0 && density < rho_c) {
            return Err(CliError::Config(format!("product start density {density} must lie in [0, rho_c = {rho_c})")));
        }
    }
    let report = convergence_to_critical(&model.env, &model.curve, &cfg.model.kernel, &cfg.experiment, ctx.seed, ctx.workers)
        .map_err(classify)?;
    let mut table = b"time,site,distance,truncated_mean,reference_mean\n".to_vec();
    for p in &report.points {
        for (((x, d), m), r) in report
            .observation
            .sites()
            .zip(&p.per_site)
            .zip(&p.truncated_means)
            .zip(&report.reference_means)
        {
            writeln!(table, "{},{x},{d},{m},{r}", p.time).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    let summary = json!({
        "c": report.c,
        "rho_c": report.rho_c,
        "noise_floor": report.noise_floor,
        "times": cfg.experiment.times,
        "distances": report.distances(),
    });
    Ok(Outcome::new(&cfg, Some(&model.env)).file("converge.csv", table).summary(summary))
}

fn local_rows(table: &mut Vec<u8>, delta: Option<f64>, r: &LocalEqReport) -> std::io::Result<()> {
    for row in &r.rows {
        let d = delta.map_or(String::new(), |d| d.to_string());
        writeln!(
            table,
            "{d},{},{},{},{},{},{},{}",
            row.offset, row.site, row.alpha, row.empirical, row.se, row.reference, row.gap
        )?;
    }
    Ok(())
}

fn local_summary(r: &LocalEqReport) -> Value {
    json!({
        "site": r.site,
        "rho": r.rho,
        "critical": r.critical,
        "beta": r.beta,
        "max_z": r.max_z(),
        "max_gap": r.max_gap(),
    })
}

pub fn localeq(raw: Value, ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut cfg: LocalEqConfig = parse(raw)?;
    let model = cfg.model.resolve(ctx.env_file.as_ref(), ctx.seed)?;
    cfg.experiment.profile.validate().map_err(CliError::config)?;
    let top = profile_top(&cfg.experiment.profile);
    let flux = flux_for(&model.curve, &cfg.model.kernel, &mut cfg.rho_max, Some(2.0 * top + 1.0))?;
    let kernel = &cfg.model.kernel;
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    let mut table = b"delta,offset,site,alpha,empirical,se,reference,gap\n".to_vec();
    let summary = match &cfg.cesaro {
        None => {
            let r = local_eq_stats(&model.env, &model.curve, &flux, kernel, &cfg.experiment, ctx.seed, ctx.workers)
                .map_err(classify)?;
            local_rows(&mut table, None, &r).map_err(io)?;
            local_summary(&r)
        }
        Some(c) => {
            let reports = cesaro_local_eq(
                &model.env,
                &model.curve,
                &flux,
                kernel,
                &cfg.experiment,
                &c.deltas,
                c.samples,
                ctx.seed,
                ctx.workers,
            )
            .map_err(classify)?;
            let mut items = Vec::new();
            for r in &reports {
                local_rows(&mut table, Some(r.delta), &r.report).map_err(io)?;
                let mut s = local_summary(&r.report);
                s["delta"] = json!(r.delta);
                s["samples"] = json!(r.samples);
                items.push(s);
            }
            json!({ "cesaro": items })
        }
    };
    Ok(Outcome::new(&cfg, Some(&model.env)).file("localeq.csv", table).summary(summary))
}

pub fn peak(raw: Value, ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg: PeakConfig = parse(raw)?;
    let r = peak_current(&cfg.g, &cfg.kernel, &cfg.experiment, ctx.seed, ctx.workers).map_err(classify)?;
    let mut table = b"t,mean_count\n".to_vec();
    for (t, n) in &r.trace {
        writeln!(table, "{t},{n}").map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let summary = json!({
        "nearest_neighbor": cfg.kernel.is_nearest_neighbor(),
        "current": r.current,
        "se": r.se,
        "target": r.target,
        "ratio": r.ratio,
    });
    Ok(Outcome::new(&cfg, None).file("trace.csv", table).summary(summary))
}

pub fn env(raw: Value, ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg: EnvConfig = parse(raw)?;
    let env = cfg.build(ctx.seed)?;
    let summary = json!({
        "window": [env.window().lo, env.window().hi],
        "c": env.c(),
        "nominal_c": env.nominal_c(),
        "c_unrealized": env.c_unrealized(),
        "defects": env.defects().len(),
        "critical_sites": env.critical_sites().len(),
    });
    let mut text = env.to_json().into_bytes();
    text.push(b'\n');
    Ok(Outcome::new(&cfg, Some(&env)).file("env.json", text).summary(summary))
}
