//! Single-site laws `theta_beta`, product invariant measures and the density
//! reparametrization `beta -> Rbar(beta)`.
//!
//! The rate function is tabulated on `0..=K` and constant (`g_inf = 1` after
//! normalization) beyond, so every series over occupancies splits into a finite
//! head and an exact geometric tail.

use std::collections::HashMap;
use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::env::{Atom, DisorderLaw, Environment};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Occupancy, Site, Window};
use crate::rng::{derive_seed, keyed_rng, open_unit_f64, unit_f64, TAG_INITIAL};

/// Default truncation of the single-site pmf.
pub const TAIL_EPS: f64 = 1e-12;

const PMF_CAP: usize = 1 << 20;

/// Nondecreasing jump-rate function `g` with `g(0) = 0 < g(1)` and
/// `g(n) = 1` for `n` beyond the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateFunctionRecord", into = "RateFunctionRecord")]
pub struct RateFunction {
    values: Vec<f64>,
    id: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RateFunctionRecord {
    values: Vec<f64>,
    #[serde(default = "one")]
    g_inf: f64,
    #[serde(default)]
    id: Option<String>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RateFunctionRecord> for RateFunction {
    type Error = Error;

    fn try_from(r: RateFunctionRecord) -> Result<Self> {
        let mut g = RateFunction::new(&r.values, r.g_inf)?;
        if let Some(id) = r.id {
            g.id = id;
        }
        Ok(g)
    }
}

impl From<RateFunction> for RateFunctionRecord {
    fn from(g: RateFunction) -> Self {
        RateFunctionRecord {
            values: g.values,
            g_inf: 1.0,
            id: Some(g.id),
        }
    }
}

impl RateFunction {
    /// `g(n) = min(n, 1)`: the M/M/1 queue.
    pub fn mm1() -> Self {
        Self {
            values: vec![0.0, 1.0],
            id: "mm1".into(),
        }
    }

    /// Table `g(0..=K)` with tail constant `g_inf`, normalized by `g_inf`.
    pub fn new(values: &[f64], g_inf: f64) -> Result<Self> {
        if !(g_inf > 0.0 && g_inf.is_finite()) {
            return Err(Error::InvalidRateFunction(format!("g_inf = {g_inf}")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidRateFunction("table needs g(0) and g(1)".into()));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidRateFunction("g(0) must be 0".into()));
        }
        if !(values[1] > 0.0) {
            return Err(Error::InvalidRateFunction("g(1) must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidRateFunction("g must be nondecreasing".into()));
        }
        if values.iter().any(|&v| v > g_inf) {
            return Err(Error::InvalidRateFunction("table exceeds g_inf".into()));
        }
        let mut values: Vec<f64> = values.iter().map(|v| v / g_inf).collect();
        while values.len() > 2 && values[values.len() - 1] == 1.0 && values[values.len() - 2] == 1.0
        {
            values.pop();
        }
        let id = format!(
            "table[{}]",
            values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        );
        Ok(Self { values, id })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index beyond which `g` equals 1: `g(n) = 1` for all `n >= K`.
    fn tail_start(&self) -> usize {
        let k = self.values.len() - 1;
        if self.values[k] == 1.0 {
            k
        } else {
            k + 1
        }
    }

    #[inline]
    pub fn g(&self, n: u64) -> f64 {
        self.values.get(n as usize).copied().unwrap_or(1.0)
    }

    /// `g` on extended occupancies; `g(INF) = 1`.
    #[inline]
    pub fn g_occ(&self, occ: Occupancy) -> f64 {
        match occ.count() {
            Some(n) => self.g(n),
            None => 1.0,
        }
    }

    /// Weights `beta^n / g(n)!` for `n = 0..=K` with `g(n) = 1` for `n >= K`.
    fn head_weights(&self, beta: f64) -> Vec<f64> {
        let k = self.tail_start();
        let mut w = Vec::with_capacity(k + 1);
        w.push(1.0);
        for n in 1..=k {
            let prev = w[n - 1];
            w.push(prev * beta / self.g(n as u64));
        }
        w
    }
}

/// Exact normalization data for `theta_beta`.
#[derive(Clone, Debug)]
struct ThetaCore {
    beta: f64,
    weights: Vec<f64>,
    z: f64,
}

impl ThetaCore {
    fn new(beta: f64, g: &RateFunction) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::FugacityTooLarge { beta, limit: 1.0 });
        }
        let weights = g.head_weights(beta);
        let k = weights.len() - 1;
        let z = weights[..k].iter().sum::<f64>() + weights[k] / (1.0 - beta);
        Ok(Self { beta, weights, z })
    }

    fn k(&self) -> usize {
        self.weights.len() - 1
    }

    fn prob(&self, n: u64) -> f64 {
        let k = self.k();
        if (n as usize) < k {
            self.weights[n as usize] / self.z
        } else {
            self.weights[k] * self.beta.powf((n - k as u64) as f64) / self.z
        }
    }

    /// `P(N >= n)`.
    fn survival(&self, n: u64) -> f64 {
        let k = self.k();
        if (n as usize) >= k {
            self.weights[k] * self.beta.powf((n - k as u64) as f64) / ((1.0 - self.beta) * self.z)
        } else {
            let head: f64 = self.weights[n as usize..k].iter().sum();
            (head + self.weights[k] / (1.0 - self.beta)) / self.z
        }
    }

    fn mean(&self) -> f64 {
        let k = self.k();
        let b = self.beta;
        let head: f64 = self.weights[..k]
            .iter()
            .enumerate()
            .map(|(n, w)| n as f64 * w)
            .sum();
        let tail = self.weights[k] * (k as f64 / (1.0 - b) + b / ((1.0 - b) * (1.0 - b)));
        (head + tail) / self.z
    }

    fn variance(&self) -> f64 {
        let k = self.k();
        let b = self.beta;
        let kf = k as f64;
        let head: f64 = self.weights[..k]
            .iter()
            .enumerate()
            .map(|(n, w)| (n * n) as f64 * w)
            .sum();
        let tail = self.weights[k]
            * (kf * kf / (1.0 - b)
                + 2.0 * kf * b / ((1.0 - b) * (1.0 - b))
                + b * (1.0 + b) / ((1.0 - b) * (1.0 - b) * (1.0 - b)));
        let mean = self.mean();
        (head + tail) / self.z - mean * mean
    }

    /// `E[min(N, m)]`.
    fn truncated_mean(&self, m: u64) -> f64 {
        (0..m).map(|n| self.survival(n + 1)).sum()
    }

    fn sample(&self, rng: &mut impl RngCore) -> u64 {
        let k = self.k();
        let mut u = unit_f64(rng) * self.z;
        for (n, &w) in self.weights[..k].iter().enumerate() {
            if u < w {
                return n as u64;
            }
            u -= w;
        }
        if self.beta == 0.0 {
            return k as u64;
        }
        // Beyond K the law is geometric: P(N - K >= m | N >= K) = beta^m.
        let extra = (open_unit_f64(rng).ln() / self.beta.ln()).floor();
        k as u64 + extra.min((u64::MAX / 2) as f64) as u64
    }
}

/// `theta_beta` with its pmf tabulated up to a residual tail below `tail_eps`.
#[derive(Clone, Debug)]
pub struct SiteLaw {
    core: ThetaCore,
    pmf: Vec<f64>,
    tail: f64,
    mean: f64,
}

impl SiteLaw {
    pub fn beta(&self) -> f64 {
        self.core.beta
    }

    pub fn z(&self) -> f64 {
        self.core.z
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Mass beyond the tabulated pmf.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// `R(beta)`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn prob(&self, n: u64) -> f64 {
        self.core.prob(n)
    }

    pub fn survival(&self, n: u64) -> f64 {
        self.core.survival(n)
    }

    pub fn truncated_mean(&self, m: u64) -> f64 {
        self.core.truncated_mean(m)
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> u64 {
        self.core.sample(rng)
    }
}

pub fn theta_pmf(beta: f64, g: &RateFunction, tail_eps: f64) -> Result<SiteLaw> {
    if !(tail_eps > 0.0) {
        return Err(Error::param("tail_eps must be positive"));
    }
    let core = ThetaCore::new(beta, g)?;
    let mut pmf = Vec::new();
    let mut n = 0u64;
    loop {
        pmf.push(core.prob(n));
        n += 1;
        if n as usize >= core.k() && core.survival(n) < tail_eps {
            break;
        }
        if pmf.len() >= PMF_CAP {
            break;
        }
    }
    let tail = core.survival(n);
    let mean = core.mean();
    Ok(SiteLaw {
        core,
        pmf,
        tail,
        mean,
    })
}

/// `R(beta)`, the mean of `theta_beta`; infinite at `beta = 1`.
pub fn mean_occupancy(beta: f64, g: &RateFunction) -> Result<f64> {
    if beta == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(ThetaCore::new(beta, g)?.mean())
}

/// `R(beta / a)` with the conventions `0 / a = 0`.
fn r_scaled(beta: f64, a: f64, g: &RateFunction) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    let b = beta / a;
    if b >= 1.0 {
        return f64::INFINITY;
    }
    ThetaCore::new(b, g).expect("fugacity below 1").mean()
}

/// Tabulated `beta -> Rbar(beta)` on `[0, c)` with its inverse.
#[derive(Clone, Debug)]
pub struct FugacityCurve {
    g: RateFunction,
    c: f64,
    atoms: Vec<Atom>,
    grid: Vec<f64>,
    rbar: Vec<f64>,
    rho_c: f64,
    one_sided_gap: Option<f64>,
}

impl FugacityCurve {
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn g(&self) -> &RateFunction {
        &self.g
    }

    /// Atoms of the averaging law (empirical frequencies for a realized env).
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn rbar_table(&self) -> &[f64] {
        &self.rbar
    }

    /// `Rbar(c-)`; `f64::INFINITY` when some atom sits at `c`.
    pub fn rho_c(&self) -> f64 {
        self.rho_c
    }

    pub fn rho_c_finite(&self) -> Option<f64> {
        self.rho_c.is_finite().then_some(self.rho_c)
    }

    /// Largest difference between left and right half-window averages over
    /// the grid, for curves built from a realized environment.
    pub fn one_sided_gap(&self) -> Option<f64> {
        self.one_sided_gap
    }

    /// Exact `Rbar(beta)` for `0 <= beta <= c`.
    pub fn rbar(&self, beta: f64) -> Result<f64> {
        if beta < 0.0 || beta > self.c {
            return Err(Error::FugacityTooLarge {
                beta,
                limit: self.c,
            });
        }
        if beta == self.c {
            return Ok(self.rho_c);
        }
        Ok(rbar_atoms(&self.atoms, beta, &self.g))
    }

    /// `Rbar'(beta)`, from `d/dbeta R(beta / a) = Var(theta_{beta/a}) / beta`.
    pub fn rbar_derivative(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0 && beta <= self.c) {
            return Err(Error::FugacityTooLarge {
                beta,
                limit: self.c,
            });
        }
        let mut total = 0.0;
        for a in &self.atoms {
            let b = beta / a.value;
            if b >= 1.0 {
                return Ok(f64::INFINITY);
            }
            total += a.prob * ThetaCore::new(b, &self.g)?.variance() / beta;
        }
        Ok(total)
    }

    /// `Rbar^{-1}(rho)` for `0 <= rho < rho_c`.
    pub fn density_to_fugacity(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return Err(Error::DensityOutOfRange {
                rho,
                max: self.rho_c,
            });
        }
        if rho >= self.rho_c {
            return Err(Error::SupercriticalDensity {
                rho,
                rho_c: self.rho_c,
            });
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        let i = self.rbar.partition_point(|&r| r < rho);
        if i < self.rbar.len() && self.rbar[i] == rho {
            return Ok(self.grid[i]);
        }
        let (mut lo, mut hi) = if i < self.grid.len() {
            (self.grid[i - 1], self.grid[i])
        } else {
            (self.grid[self.grid.len() - 1], self.c)
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if rbar_atoms(&self.atoms, mid, &self.g) < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r_lo = rbar_atoms(&self.atoms, lo, &self.g);
        let r_hi = if hi < self.c {
            rbar_atoms(&self.atoms, hi, &self.g)
        } else {
            f64::INFINITY
        };
        Ok(if (rho - r_lo).abs() <= (r_hi - rho).abs() {
            lo
        } else {
            hi
        })
    }

    /// CSV table `beta,Rbar` preceded by `#` metadata lines.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "# c={}", self.c)?;
        writeln!(out, "# rho_c={}", fmt_extended(self.rho_c))?;
        writeln!(out, "# g={}", self.g.id())?;
        if let Some(gap) = self.one_sided_gap {
            writeln!(out, "# one_sided_gap={gap}")?;
        }
        writeln!(out, "beta,Rbar")?;
        for (b, r) in self.grid.iter().zip(&self.rbar) {
            writeln!(out, "{b},{r}")?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_extended(x: f64) -> String {
    if x.is_infinite() {
        "INF".into()
    } else {
        x.to_string()
    }
}

fn rbar_atoms(atoms: &[Atom], beta: f64, g: &RateFunction) -> f64 {
    atoms
        .iter()
        .map(|a| a.prob * r_scaled(beta, a.value, g))
        .sum()
}

/// Grid on `[0, c)`: half the points uniform with spacing `c / n`, the rest
/// geometric toward `c` from a gap of `c / 2n` down to `1e-10 c`.
pub fn fugacity_grid(c: f64, size: usize) -> Vec<f64> {
    let size = size.max(4);
    let n1 = size / 2;
    let n2 = size - n1;
    let mut grid: Vec<f64> = (0..n1).map(|i| c * i as f64 / n1 as f64).collect();
    let first = 0.5 / n1 as f64;
    let q = (1e-10 / first).powf(1.0 / (n2 - 1) as f64);
    let mut gap = first;
    for _ in 0..n2 {
        let b = c - c * gap;
        if grid.last().is_some_and(|&last| b <= last) {
            break;
        }
        grid.push(b);
        gap *= q;
    }
    grid
}

fn build_curve(
    atoms: Vec<Atom>,
    g: &RateFunction,
    c: f64,
    grid_size: usize,
    one_sided: Option<(Vec<Atom>, Vec<Atom>)>,
) -> Result<FugacityCurve> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveCritical(c));
    }
    if let Some(min) = atoms.iter().map(|a| a.value).reduce(f64::min) {
        if min < c {
            return Err(Error::RateBelowInfimum {
                site: 0,
                rate: min,
                c,
            });
        }
    }
    let grid = fugacity_grid(c, grid_size);
    let rbar: Vec<f64> = grid.iter().map(|&b| rbar_atoms(&atoms, b, g)).collect();
    let rho_c = if atoms.iter().any(|a| a.value == c && a.prob > 0.0) {
        f64::INFINITY
    } else {
        atoms.iter().map(|a| a.prob * r_scaled(c, a.value, g)).sum()
    };
    let one_sided_gap = one_sided.map(|(left, right)| {
        grid.iter()
            .map(|&b| (rbar_atoms(&left, b, g) - rbar_atoms(&right, b, g)).abs())
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    });
    Ok(FugacityCurve {
        g: g.clone(),
        c,
        atoms,
        grid,
        rbar,
        rho_c,
        one_sided_gap,
    })
}

/// `Rbar(beta) = sum_a p_a R(beta / a)` for a finite-atom law.
pub fn mean_density_curve(
    law: &DisorderLaw,
    g: &RateFunction,
    c: f64,
    grid_size: usize,
) -> Result<FugacityCurve> {
    build_curve(law.atoms()?, g, c, grid_size, None)
}

fn grouped_atoms(rates: impl Iterator<Item = f64>) -> Vec<Atom> {
    let mut counts: HashMap<u64, usize> = HashMap::new();
    let mut total = 0usize;
    for a in rates {
        *counts.entry(a.to_bits()).or_default() += 1;
        total += 1;
    }
    let mut atoms: Vec<Atom> = counts
        .into_iter()
        .map(|(bits, n)| Atom::new(f64::from_bits(bits), n as f64 / total as f64))
        .collect();
    atoms.sort_by(|a, b| a.value.total_cmp(&b.value));
    atoms
}

/// `Rbar` as the window average of `R(beta / alpha(x))` over a realized
/// environment; also records the gap between the two half-window averages.
pub fn mean_density_curve_env(
    env: &Environment,
    g: &RateFunction,
    c: f64,
    grid_size: usize,
) -> Result<FugacityCurve> {
    let w = env.window();
    let atoms = grouped_atoms(env.rates().iter().copied());
    let side = |lo: Site, hi: Site| -> Vec<Atom> {
        match Window::new(lo.max(w.lo), hi.min(w.hi)) {
            Ok(sub) => grouped_atoms(sub.sites().map(|x| env.alpha(x))),
            Err(_) => Vec::new(),
        }
    };
    let (left, right) = (side(w.lo, 0), side(0, w.hi));
    let one_sided = (!left.is_empty() && !right.is_empty()).then_some((left, right));
    build_curve(atoms, g, c, grid_size, one_sided)
}

/// Product-measure sampler with per-fugacity caching.
#[derive(Clone, Debug)]
pub struct ProductSampler {
    g: RateFunction,
    cache: HashMap<u64, ThetaCore>,
}

impl ProductSampler {
    pub fn new(g: &RateFunction) -> Self {
        Self {
            g: g.clone(),
            cache: HashMap::new(),
        }
    }

    /// One draw from `theta_{beta / alpha}`; `INF` when `beta = alpha`.
    pub fn draw(&mut self, alpha: f64, beta: f64, rng: &mut impl RngCore) -> Result<Occupancy> {
        if beta == 0.0 {
            return Ok(Occupancy::ZERO);
        }
        if beta > alpha {
            return Err(Error::FugacityTooLarge { beta, limit: alpha });
        }
        if beta == alpha {
            return Ok(Occupancy::INF);
        }
        let b = beta / alpha;
        let core = match self.cache.entry(b.to_bits()) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(ThetaCore::new(b, &self.g)?),
        };
        Ok(Occupancy::finite(core.sample(rng)))
    }
}

/// Per-site fugacities `beta(x)`, each site drawing from its own position of
/// the keyed stream.
pub fn sample_fugacity_profile(
    env: &Environment,
    beta: impl Fn(Site) -> f64,
    g: &RateFunction,
    seed: u64,
) -> Result<Configuration> {
    let w = env.window();
    let mut sampler = ProductSampler::new(g);
    let mut rng = keyed_rng(derive_seed(seed, TAG_INITIAL), 0);
    let mut occ = Vec::with_capacity(w.len());
    for x in w.sites() {
        rng.set_word_pos(((x as i128 - i64::MIN as i128) as u128) * 4);
        occ.push(sampler.draw(env.alpha(x), beta(x), &mut rng)?);
    }
    Configuration::from_occupancies(w, occ)
}

/// Independent draws from `theta_{beta / alpha(x)}`; `INF` where
/// `alpha(x) = beta = c`.
pub fn sample_product_measure(
    env: &Environment,
    beta: f64,
    g: &RateFunction,
    seed: u64,
) -> Result<Configuration> {
    if !(beta >= 0.0) || beta > env.c() {
        return Err(Error::FugacityTooLarge {
            beta,
            limit: env.c(),
        });
    }
    sample_fugacity_profile(env, |_| beta, g, seed)
}

/// Product measure conditioned on total mass `mass`, by rejection.
///
/// Used where grand-canonical mass fluctuations would swamp a small
/// stationary observable on a closed system.
pub fn sample_canonical(
    env: &Environment,
    beta: f64,
    g: &RateFunction,
    mass: u64,
    seed: u64,
) -> Result<Configuration> {
    if beta >= env.c() {
        return Err(Error::FugacityTooLarge {
            beta,
            limit: env.c(),
        });
    }
    for attempt in 0..1_000_000u64 {
        let conf = sample_product_measure(env, beta, g, derive_seed(seed, attempt))?;
        if conf.finite_mass() == mass {
            return Ok(conf);
        }
    }
    Err(Error::param(format!(
        "mass {mass} not reached by rejection sampling at beta = {beta}"
    )))
}
