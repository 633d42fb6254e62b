//! Macroscopic flux `f(rho) = drift * Rbar^{-1}(rho)`, truncated at
//! `drift * c` beyond the critical density, and its concave envelope.
//!
//! The flux is represented by the piecewise-linear interpolant of exact nodes
//! `(Rbar(beta_i), drift * beta_i)`; everything downstream (Riemann solver,
//! Godunov scheme, envelope) is exact for that interpolant.

use std::io::Write;

use crate::error::{Error, Result};
use crate::kinetics::JumpKernel;
use crate::measures::{fmt_extended, mean_density_curve, FugacityCurve, RateFunction};

/// Default number of fugacity nodes.
pub const FLUX_POINTS: usize = 2048;

const LIPSCHITZ_SAFETY: f64 = 1.1;

#[derive(Clone, Debug)]
pub struct FluxFunction {
    c: f64,
    drift: f64,
    rho_c: f64,
    rho: Vec<f64>,
    f: Vec<f64>,
    lipschitz: f64,
    g_id: String,
}

impl FluxFunction {
    /// Flux from an explicit nondecreasing table.
    ///
    /// With a finite `rho_c` the table must reach it and the flux is constant
    /// from there on; otherwise it is only defined up to the last node.
    pub fn from_table(rho: Vec<f64>, f: Vec<f64>, rho_c: f64, drift: f64, c: f64) -> Result<Self> {
        if rho.len() < 2 || rho.len() != f.len() {
            return Err(Error::param("flux table needs at least two matching nodes"));
        }
        if rho[0] != 0.0 || f[0] != 0.0 {
            return Err(Error::param("flux table must start at (0, 0)"));
        }
        if rho.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("flux densities must be strictly increasing"));
        }
        if f.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("flux must be nondecreasing"));
        }
        if rho_c.is_finite() && *rho.last().unwrap() < rho_c {
            return Err(Error::param("flux table does not reach rho_c"));
        }
        let lipschitz = LIPSCHITZ_SAFETY
            * rho
                .windows(2)
                .zip(f.windows(2))
                .map(|(r, v)| (v[1] - v[0]) / (r[1] - r[0]))
                .fold(0.0, f64::max);
        Ok(Self {
            c,
            drift,
            rho_c,
            rho,
            f,
            lipschitz,
            g_id: "table".into(),
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn plateau(&self) -> f64 {
        self.drift * self.c
    }

    /// Critical density; infinite for a range-limited flux.
    pub fn rho_c(&self) -> f64 {
        self.rho_c
    }

    /// Largest density at which the flux is defined.
    pub fn rho_max(&self) -> f64 {
        if self.rho_c.is_finite() {
            f64::INFINITY
        } else {
            *self.rho.last().unwrap()
        }
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.rho, &self.f)
    }

    /// Upper bound on `|f'|`, inflated by 10%.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn g_id(&self) -> &str {
        &self.g_id
    }

    /// Piecewise-linear flux; constant beyond the last node.
    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        let n = self.rho.len();
        if rho >= self.rho[n - 1] {
            return self.f[n - 1];
        }
        if rho <= 0.0 {
            return 0.0;
        }
        let k = self.rho.partition_point(|&r| r <= rho);
        let (r0, r1) = (self.rho[k - 1], self.rho[k]);
        let (f0, f1) = (self.f[k - 1], self.f[k]);
        f0 + (f1 - f0) * (rho - r0) / (r1 - r0)
    }

    pub fn try_eval(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) || rho > self.rho_max() {
            return Err(Error::DensityOutOfRange {
                rho,
                max: self.rho_max(),
            });
        }
        Ok(self.eval(rho))
    }

    /// Indices of nodes strictly inside `(lo, hi)`.
    pub(crate) fn interior_nodes(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.rho.partition_point(|&r| r <= lo);
        let b = self.rho.partition_point(|&r| r < hi);
        a..b.max(a)
    }

    /// Upper concave hull of the graph of `f` on `[lo, hi]`.
    pub fn concave_envelope(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(self.rho.len() + 2);
        pts.push((lo, self.eval(lo)));
        for k in self.interior_nodes(lo, hi) {
            pts.push((self.rho[k], self.f[k]));
        }
        if hi > lo {
            pts.push((hi, self.eval(hi)));
        }
        upper_hull(&pts)
    }

    /// `v_c(rho)`: left derivative at `rho_c` of the concave envelope of `f`
    /// on `[rho, rho_c]`.
    pub fn critical_speed(&self, rho: f64) -> Result<f64> {
        if !self.rho_c.is_finite() {
            return Err(Error::InfiniteCriticalDensity);
        }
        if !(rho >= 0.0 && rho < self.rho_c) {
            return Err(Error::SupercriticalDensity {
                rho,
                rho_c: self.rho_c,
            });
        }
        let hull = self.concave_envelope(rho, self.rho_c);
        let n = hull.len();
        let (a, b) = (hull[n - 2], hull[n - 1]);
        Ok((b.1 - a.1) / (b.0 - a.0))
    }

    /// CSV `rho,f,envelope` on the nodes, with `#` metadata lines.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let hi = *self.rho.last().unwrap();
        let hull = self.concave_envelope(0.0, hi);
        writeln!(out, "# c={}", self.c)?;
        writeln!(out, "# drift={}", self.drift)?;
        writeln!(out, "# rho_c={}", fmt_extended(self.rho_c))?;
        if let Ok(v) = self.critical_speed(0.0) {
            writeln!(out, "# v_c0={v}")?;
        }
        writeln!(out, "# g={}", self.g_id)?;
        writeln!(out, "rho,f,envelope")?;
        for (&r, &f) in self.rho.iter().zip(&self.f) {
            writeln!(out, "{r},{f},{}", eval_polyline(&hull, r))?;
        }
        Ok(())
    }
}

/// Monotone-chain upper hull of points sorted by abscissa.
pub fn upper_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        if hull.last().is_some_and(|q| q.0 == p.0) {
            let q = hull.pop().unwrap();
            hull.push(if p.1 > q.1 { p } else { q });
            continue;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // Drop b unless it lies strictly above the chord a-p.
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Linear interpolation along a polyline sorted by abscissa.
pub fn eval_polyline(points: &[(f64, f64)], x: f64) -> f64 {
    let k = points.partition_point(|p| p.0 <= x);
    if k == 0 {
        return points[0].1;
    }
    if k == points.len() {
        return points[k - 1].1;
    }
    let (a, b) = (points[k - 1], points[k]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Flux over the curve's fugacity grid, with the plateau continued to
/// `2 rho_c`.
pub fn build_flux(curve: &FugacityCurve, kernel: &JumpKernel) -> Result<FluxFunction> {
    let rho_c = curve.rho_c_finite().ok_or(Error::InfiniteCriticalDensity)?;
    let drift = kernel.drift();
    let mut rho: Vec<f64> = curve.rbar_table().to_vec();
    let mut f: Vec<f64> = curve.grid().iter().map(|b| drift * b).collect();
    while rho.last().is_some_and(|&r| r >= rho_c) {
        rho.pop();
        f.pop();
    }
    rho.push(rho_c);
    f.push(drift * curve.c());
    rho.push(2.0 * rho_c);
    f.push(drift * curve.c());
    let mut flux = FluxFunction::from_table(rho, f, rho_c, drift, curve.c())?;
    flux.g_id = curve.g().id().to_string();
    Ok(flux)
}

/// Flux on `[0, rho_max]` only, for laws whose critical density is infinite
/// or lies above the range of interest.
pub fn build_flux_to(curve: &FugacityCurve, kernel: &JumpKernel, rho_max: f64) -> Result<FluxFunction> {
    if curve.rho_c().is_finite() && rho_max >= curve.rho_c() {
        return build_flux(curve, kernel);
    }
    if !(rho_max > 0.0) {
        return Err(Error::param("density range must be nonempty"));
    }
    let drift = kernel.drift();
    let beta_max = curve.density_to_fugacity(rho_max)?;
    let n = FLUX_POINTS.max(curve.grid().len());
    let mut rho = Vec::with_capacity(n + 1);
    let mut f = Vec::with_capacity(n + 1);
    for i in 0..n {
        let b = beta_max * i as f64 / n as f64;
        rho.push(curve.rbar(b)?);
        f.push(drift * b);
    }
    rho.push(rho_max);
    f.push(drift * beta_max);
    let mut flux = FluxFunction::from_table(rho, f, f64::INFINITY, drift, curve.c())?;
    flux.g_id = curve.g().id().to_string();
    Ok(flux)
}

/// `f_d = f_hom ∧ drift * c`: the limit of vanishing defect density.
pub fn dilute_flux(c: f64, g: &RateFunction, kernel: &JumpKernel) -> Result<FluxFunction> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::param(format!("c = {c} not in (0, 1)")));
    }
    let curve = mean_density_curve(&crate::env::DisorderLaw::point(1.0), g, c, FLUX_POINTS)?;
    build_flux(&curve, kernel)
}

/// Numerical check of `Rbar(beta) - Rbar(c) - (beta - c) Rbar'(c-) > 0` on
/// the grid. Advisory: a pass on the grid is evidence, not proof.
///
/// The margin is the smallest value of that gap divided by `(c - beta)^2`;
/// grid points within `1e-6 c` of `c` are skipped since the gap there is
/// below rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityCheck {
    pub holds: bool,
    pub margin: f64,
    pub slope_at_c: f64,
}

pub fn check_assumption_h(curve: &FugacityCurve) -> Result<ConvexityCheck> {
    let rho_c = curve.rho_c_finite().ok_or(Error::InfiniteCriticalDensity)?;
    let c = curve.c();
    let slope_at_c = curve.rbar_derivative(c)?;
    let margin = curve
        .grid()
        .iter()
        .zip(curve.rbar_table())
        .filter(|(&b, _)| c - b >= 1e-6 * c)
        .map(|(&b, &r)| (r - rho_c - (b - c) * slope_at_c) / ((c - b) * (c - b)))
        .fold(f64::INFINITY, f64::min);
    Ok(ConvexityCheck {
        holds: margin > 0.0,
        margin,
        slope_at_c,
    })
}
