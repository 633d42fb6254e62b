//! Disorder environments: per-site rate multipliers `alpha(x)` in `(0, 1]`.
//!
//! Environments are finite windows of the lattice. They are built either by
//! i.i.d. sampling from a finite-atom law (optionally diluted toward the
//! homogeneous value 1) or deterministically from a sequence of defect sites
//! whose rates decrease toward the infimum `c`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Site, Window};
use crate::rng::{derive_seed, keyed_rng, unit_f64, TAG_ENVIRONMENT};

const PROB_TOL: f64 = 1e-12;

/// One atom `(value, prob)` of a finite disorder law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

impl Atom {
    pub fn new(value: f64, prob: f64) -> Self {
        Self { value, prob }
    }
}

/// Rates `c + amplitude * ratio^|n|` along the defect sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSequence {
    pub amplitude: f64,
    pub ratio: f64,
}

impl RateSequence {
    pub fn rate(&self, c: f64, n: i64) -> f64 {
        c + self.amplitude * self.ratio.powi(n.unsigned_abs().min(i32::MAX as u64) as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefectLayout {
    /// Defects at `x_n = sign(n) * floor(|n|^exponent)` for all integers `n`.
    Power { exponent: f64, rates: RateSequence },
    /// Explicit `(site, rate)` pairs.
    Explicit { defects: Vec<(Site, f64)> },
}

/// Deterministic environment equal to 1 off a sparse defect set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectRule {
    pub c: f64,
    pub layout: DefectLayout,
}

impl DefectRule {
    /// `x_n = ±floor(|n|^1.5)`, `alpha(x_n) = c + amplitude * ratio^|n|`.
    pub fn power(c: f64, exponent: f64, amplitude: f64, ratio: f64) -> Self {
        Self {
            c,
            layout: DefectLayout::Power {
                exponent,
                rates: RateSequence { amplitude, ratio },
            },
        }
    }

    pub fn explicit(c: f64, defects: Vec<(Site, f64)>) -> Self {
        Self {
            c,
            layout: DefectLayout::Explicit { defects },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::param(format!("defect infimum c = {} not in (0, 1)", self.c)));
        }
        match &self.layout {
            DefectLayout::Power { exponent, rates } => {
                if !(*exponent > 1.0) {
                    return Err(Error::param("defect spacing exponent must exceed 1"));
                }
                if !(rates.amplitude > 0.0 && self.c + rates.amplitude <= 1.0) {
                    return Err(Error::param("defect amplitude must lie in (0, 1 - c]"));
                }
                if !(rates.ratio > 0.0 && rates.ratio < 1.0) {
                    return Err(Error::param("defect rate ratio must lie in (0, 1)"));
                }
            }
            DefectLayout::Explicit { defects } => {
                for &(site, rate) in defects {
                    if !(rate > 0.0 && rate <= 1.0) {
                        return Err(Error::RateOutOfRange(rate));
                    }
                    if rate < self.c {
                        return Err(Error::RateBelowInfimum { site, rate, c: self.c });
                    }
                }
            }
        }
        Ok(())
    }

    /// Defect sites and rates inside `window`, ordered by site.
    pub fn defects_in(&self, window: Window) -> Vec<(Site, f64)> {
        let mut out = match &self.layout {
            DefectLayout::Power { exponent, rates } => {
                let mut v = Vec::new();
                for sign in [1i64, -1] {
                    let mut n: i64 = if sign > 0 { 0 } else { 1 };
                    loop {
                        let x = sign * ((n as f64).powf(*exponent).floor() as i64);
                        if (sign > 0 && x > window.hi) || (sign < 0 && x < window.lo) {
                            break;
                        }
                        if window.contains(x) {
                            v.push((x, rates.rate(self.c, n)));
                        }
                        n += 1;
                    }
                }
                v
            }
            DefectLayout::Explicit { defects } => defects
                .iter()
                .copied()
                .filter(|(x, _)| window.contains(*x))
                .collect(),
        };
        out.sort_by_key(|&(x, _)| x);
        out.dedup_by_key(|&mut (x, _)| x);
        out
    }
}

/// Distribution of the disorder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderLaw {
    Iid { atoms: Vec<Atom> },
    /// `(1 - epsilon) * delta_1 + epsilon * base`.
    Dilute { base: Box<DisorderLaw>, epsilon: f64 },
    Deterministic { rule: DefectRule },
}

impl DisorderLaw {
    pub fn point(value: f64) -> Self {
        DisorderLaw::Iid {
            atoms: vec![Atom::new(value, 1.0)],
        }
    }

    pub fn atoms_from(pairs: &[(f64, f64)]) -> Self {
        DisorderLaw::Iid {
            atoms: pairs.iter().map(|&(v, p)| Atom::new(v, p)).collect(),
        }
    }

    pub fn dilute(base: DisorderLaw, epsilon: f64) -> Self {
        DisorderLaw::Dilute {
            base: Box::new(base),
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DisorderLaw::Iid { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidDistribution("no atoms".into()));
                }
                for a in atoms {
                    if !(a.value > 0.0 && a.value <= 1.0) {
                        return Err(Error::RateOutOfRange(a.value));
                    }
                    if !(a.prob >= 0.0 && a.prob <= 1.0) {
                        return Err(Error::InvalidDistribution(format!("probability {}", a.prob)));
                    }
                }
                let total: f64 = atoms.iter().map(|a| a.prob).sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidDistribution(format!(
                        "probabilities sum to {total}"
                    )));
                }
                Ok(())
            }
            DisorderLaw::Dilute { base, epsilon } => {
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(Error::InvalidDistribution(format!("dilution {epsilon}")));
                }
                base.validate()
            }
            DisorderLaw::Deterministic { rule } => rule.validate(),
        }
    }

    /// Marginal law as merged atoms sorted by value.
    ///
    /// A deterministic defect environment has zero-density defects, so its
    /// empirical marginal is `delta_1`.
    pub fn atoms(&self) -> Result<Vec<Atom>> {
        self.validate()?;
        let mut raw = Vec::new();
        self.collect_atoms(1.0, &mut raw);
        raw.retain(|a| a.prob > 0.0);
        raw.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut merged: Vec<Atom> = Vec::with_capacity(raw.len());
        for a in raw {
            match merged.last_mut() {
                Some(last) if last.value == a.value => last.prob += a.prob,
                _ => merged.push(a),
            }
        }
        Ok(merged)
    }

    fn collect_atoms(&self, weight: f64, out: &mut Vec<Atom>) {
        match self {
            DisorderLaw::Iid { atoms } => {
                out.extend(atoms.iter().map(|a| Atom::new(a.value, weight * a.prob)))
            }
            DisorderLaw::Dilute { base, epsilon } => {
                out.push(Atom::new(1.0, weight * (1.0 - epsilon)));
                base.collect_atoms(weight * epsilon, out);
            }
            DisorderLaw::Deterministic { .. } => out.push(Atom::new(1.0, weight)),
        }
    }

    /// Infimum of the support (the defect infimum for deterministic rules).
    pub fn support_inf(&self) -> Result<f64> {
        if let DisorderLaw::Deterministic { rule } = self {
            rule.validate()?;
            return Ok(rule.c);
        }
        Ok(self
            .atoms()?
            .first()
            .map(|a| a.value)
            .expect("validated law has atoms"))
    }
}

/// A realized environment on a finite window.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    window: Window,
    alpha: Vec<f64>,
    c: f64,
    defects: Vec<Site>,
    origin_offset: i64,
    nominal_c: Option<f64>,
}

impl Environment {
    /// Environment from explicit rates; `c` is the realized minimum.
    pub fn from_rates(window: Window, alpha: Vec<f64>, defects: Vec<Site>) -> Result<Self> {
        if alpha.len() != window.len() {
            return Err(Error::param(format!(
                "{} rates for a window of {} sites",
                alpha.len(),
                window.len()
            )));
        }
        if let Some(&bad) = alpha.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::RateOutOfRange(bad));
        }
        if defects.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("defect sites must be strictly increasing"));
        }
        if let Some(&d) = defects.iter().find(|&&d| !window.contains(d)) {
            return Err(Error::OutsideWindow(d));
        }
        let c = alpha.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            window,
            alpha,
            c,
            defects,
            origin_offset: 0,
            nominal_c: None,
        })
    }

    pub fn homogeneous(window: Window) -> Self {
        Self::from_rates(window, vec![1.0; window.len()], Vec::new()).expect("valid rates")
    }

    pub fn window(&self) -> Window {
        self.window
    }

    #[inline]
    pub fn alpha(&self, site: Site) -> f64 {
        self.alpha[self.window.index(site).expect("site outside environment window")]
    }

    pub fn rates(&self) -> &[f64] {
        &self.alpha
    }

    /// Realized infimum over the window.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn defects(&self) -> &[Site] {
        &self.defects
    }

    pub fn origin_offset(&self) -> i64 {
        self.origin_offset
    }

    /// Infimum requested by the construction rule, when one was given.
    pub fn nominal_c(&self) -> Option<f64> {
        self.nominal_c
    }

    /// Set when the rule's nominal infimum is not attained in the window.
    pub fn c_unrealized(&self) -> bool {
        self.nominal_c.is_some_and(|n| n < self.c)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.alpha.iter().all(|&a| a == 1.0)
    }

    /// Sites achieving the realized infimum.
    pub fn critical_sites(&self) -> Vec<Site> {
        self.window
            .sites()
            .zip(&self.alpha)
            .filter(|&(_, &a)| a == self.c)
            .map(|(x, _)| x)
            .collect()
    }

    /// Sub-environment on `window`; `c` is recomputed over the sub-window.
    pub fn restrict(&self, window: Window) -> Result<Environment> {
        if !self.window.contains_window(&window) {
            return Err(Error::WindowTooSmall {
                need_lo: window.lo,
                need_hi: window.hi,
                have_lo: self.window.lo,
                have_hi: self.window.hi,
            });
        }
        let start = (window.lo - self.window.lo) as usize;
        let alpha = self.alpha[start..start + window.len()].to_vec();
        let defects = self
            .defects
            .iter()
            .copied()
            .filter(|&d| window.contains(d))
            .collect();
        let mut env = Environment::from_rates(window, alpha, defects)?;
        env.origin_offset = self.origin_offset;
        env.nominal_c = self.nominal_c;
        Ok(env)
    }

    /// The environment seen from `site`: `tau_site alpha`, re-indexed so that
    /// `site` becomes the origin.
    pub fn shifted(&self, site: Site) -> Environment {
        let mut env = self.clone();
        env.window = Window {
            lo: self.window.lo - site,
            hi: self.window.hi - site,
        };
        env.defects = self.defects.iter().map(|d| d - site).collect();
        env.origin_offset = self.origin_offset + site;
        env
    }

    pub fn to_record(&self) -> EnvRecord {
        EnvRecord {
            version: EnvRecord::VERSION,
            window: [self.window.lo, self.window.hi],
            alpha: self.alpha.clone(),
            c: self.c,
            defects: self.defects.clone(),
            origin_offset: self.origin_offset,
            nominal_c: self.nominal_c,
        }
    }

    pub fn from_record(record: EnvRecord) -> Result<Self> {
        if record.version != EnvRecord::VERSION {
            return Err(Error::Format(format!(
                "unsupported environment record version {}",
                record.version
            )));
        }
        let window = Window::new(record.window[0], record.window[1])?;
        let mut env = Environment::from_rates(window, record.alpha, record.defects)?;
        if env.c.to_bits() != record.c.to_bits() {
            return Err(Error::Format(format!(
                "recorded c = {} differs from the realized minimum {}",
                record.c, env.c
            )));
        }
        env.origin_offset = record.origin_offset;
        env.nominal_c = record.nominal_c;
        Ok(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("environment record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: EnvRecord =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_record(record)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Versioned on-disk form of an [`Environment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvRecord {
    pub version: u32,
    pub window: [Site; 2],
    pub alpha: Vec<f64>,
    pub c: f64,
    pub defects: Vec<Site>,
    #[serde(default)]
    pub origin_offset: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_c: Option<f64>,
}

impl EnvRecord {
    pub const VERSION: u32 = 1;
}

/// Independent draws of `alpha(x)` from an i.i.d. or dilute law.
///
/// Site `x` always reads the same position of the keyed stream, so the
/// realization on a sub-window does not depend on the enclosing window.
pub fn build_iid_env(law: &DisorderLaw, window: Window, seed: u64) -> Result<Environment> {
    if matches!(law, DisorderLaw::Deterministic { .. }) {
        return Err(Error::param("deterministic laws are built with build_defect_env"));
    }
    let atoms = law.atoms()?;
    let mut cumulative = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in &atoms {
        acc += a.prob;
        cumulative.push(acc);
    }
    let mut rng = keyed_rng(derive_seed(seed, TAG_ENVIRONMENT), 0);
    let alpha: Vec<f64> = window
        .sites()
        .map(|x| {
            rng.set_word_pos(((x as i128 - i64::MIN as i128) as u128) * 2);
            let u = unit_f64(&mut rng) * acc;
            let k = cumulative.partition_point(|&cdf| cdf <= u).min(atoms.len() - 1);
            atoms[k].value
        })
        .collect();
    let defects = window
        .sites()
        .zip(&alpha)
        .filter(|&(_, &a)| a < 1.0)
        .map(|(x, _)| x)
        .collect();
    Environment::from_rates(window, alpha, defects)
}

/// Deterministic environment: 1 off the defect set, prescribed rates on it.
pub fn build_defect_env(rule: &DefectRule, window: Window) -> Result<Environment> {
    rule.validate()?;
    let defects = rule.defects_in(window);
    let mut alpha = vec![1.0; window.len()];
    for &(x, a) in &defects {
        if a < rule.c {
            return Err(Error::RateBelowInfimum { site: x, rate: a, c: rule.c });
        }
        alpha[window.index(x).expect("defect filtered to window")] = a;
    }
    let mut env =
        Environment::from_rates(window, alpha, defects.iter().map(|&(x, _)| x).collect())?;
    env.nominal_c = Some(rule.c);
    Ok(env)
}

/// Site nearest `floor(u N)` whose rate is at least `c + delta`.
///
/// In a homogeneous environment no site is slow, so every site is typical.
pub fn find_typical_site(env: &Environment, u: f64, n: u64, delta: f64) -> Result<Site> {
    if !(delta > 0.0) {
        return Err(Error::param(format!("typicality margin delta = {delta} must be positive")));
    }
    let target = (u * n as f64).floor() as Site;
    let threshold = if env.is_homogeneous() {
        1.0
    } else {
        if delta >= 1.0 - env.c() {
            return Err(Error::NoTypicalSite(format!(
                "delta = {delta} leaves no rate in [c + delta, 1] with c = {}",
                env.c()
            )));
        }
        env.c() + delta
    };
    let w = env.window();
    let reach = (target - w.lo).abs().max((w.hi - target).abs());
    for d in 0..=reach {
        for x in [target - d, target + d] {
            if w.contains(x) && env.alpha(x) >= threshold {
                return Ok(x);
            }
        }
    }
    Err(Error::NoTypicalSite(format!(
        "no site with alpha >= {threshold} in [{}, {}]",
        w.lo, w.hi
    )))
}
