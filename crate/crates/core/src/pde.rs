//! Entropy solutions of `d_t rho + d_x f(rho) = 0`: exact Riemann solutions
//! through the variational formula and a first-order Godunov scheme.

use std::io::Write;

use crate::error::{Error, Result};
use crate::flux::FluxFunction;

/// Default CFL number.
pub const CFL: f64 = 0.45;

/// `G(v)`: min of `f(r) - v r` over `[lam, rho]` when `lam <= rho`, max over
/// `[rho, lam]` otherwise. Returns `(G, r*)` with the smallest optimizer.
///
/// The flux is piecewise linear, so the optimum is attained at an endpoint
/// or a node.
pub fn riemann_optimum(flux: &FluxFunction, lam: f64, rho: f64, v: f64) -> (f64, f64) {
    let (lo, hi) = if lam <= rho { (lam, rho) } else { (rho, lam) };
    let minimize = lam <= rho;
    let objective = |r: f64, fr: f64| fr - v * r;
    let mut best_r = lo;
    let mut best = objective(lo, flux.eval(lo));
    let better = |cand: f64, best: f64| if minimize { cand < best } else { cand > best };
    let (nodes_r, nodes_f) = flux.nodes();
    for k in flux.interior_nodes(lo, hi) {
        let val = objective(nodes_r[k], nodes_f[k]);
        if better(val, best) {
            best = val;
            best_r = nodes_r[k];
        }
    }
    if hi > lo {
        let val = objective(hi, flux.eval(hi));
        if better(val, best) {
            best = val;
            best_r = hi;
        }
    }
    (best, best_r)
}

/// Density of the Riemann solution with data `(lam, rho)` at `(t, x)`.
pub fn riemann_solution(flux: &FluxFunction, lam: f64, rho: f64, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param(format!("time t = {t} must be positive")));
    }
    Ok(riemann_optimum(flux, lam, rho, x / t).1)
}

/// Godunov interface flux: `riemann_optimum` at speed 0.
pub fn godunov_flux(flux: &FluxFunction, ul: f64, ur: f64) -> f64 {
    riemann_optimum(flux, ul, ur, 0.0).0
}

/// Cell averages on a uniform grid of `[a, a + n dx]`, with frozen lateral
/// states outside.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub a: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    pub left: f64,
    pub right: f64,
}

impl Profile {
    /// Sample `rho0` at cell centres of `[a, b]` with `n` cells.
    pub fn from_fn(a: f64, b: f64, n: usize, rho0: impl Fn(f64) -> f64) -> Result<Self> {
        if !(b > a) || n == 0 {
            return Err(Error::param("profile needs b > a and at least one cell"));
        }
        let dx = (b - a) / n as f64;
        let values: Vec<f64> = (0..n).map(|i| rho0(a + (i as f64 + 0.5) * dx)).collect();
        let profile = Self {
            a,
            dx,
            left: rho0(a - 0.5 * dx),
            right: rho0(b + 0.5 * dx),
            values,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Riemann data `lam` for `x < 0`, `rho` for `x > 0`.
    pub fn riemann(a: f64, b: f64, n: usize, lam: f64, rho: f64) -> Result<Self> {
        Self::from_fn(a, b, n, |x| if x < 0.0 { lam } else { rho })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn b(&self) -> f64 {
        self.a + self.dx * self.values.len() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.a + (i as f64 + 0.5) * self.dx
    }

    /// `dx * sum of cells`.
    pub fn mass(&self) -> f64 {
        self.dx * self.values.iter().sum::<f64>()
    }

    /// Piecewise-constant value at `x`; lateral states outside.
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.a {
            return self.left;
        }
        let i = ((x - self.a) / self.dx).floor() as usize;
        self.values.get(i).copied().unwrap_or(self.right)
    }

    /// Oscillation over the `cells` cells centred at `x`.
    pub fn oscillation(&self, x: f64, cells: usize) -> f64 {
        let i = ((x - self.a) / self.dx).floor() as i64;
        let half = cells as i64 / 2;
        let vals: Vec<f64> = (i - half..=i + half)
            .filter(|&k| k >= 0 && (k as usize) < self.values.len())
            .map(|k| self.values[k as usize])
            .collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    fn validate(&self) -> Result<()> {
        let bad = self
            .values
            .iter()
            .chain([&self.left, &self.right])
            .find(|v| !(v.is_finite() && **v >= 0.0));
        match bad {
            Some(v) => Err(Error::param(format!("profile value {v} must be finite and >= 0"))),
            None => Ok(()),
        }
    }

    /// CSV rows `t,x,density`.
    pub fn write_csv_rows(&self, t: f64, mut out: impl Write) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{t},{},{v}", self.center(i))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GodunovOutput {
    pub profile: Profile,
    pub snapshots: Vec<(f64, Profile)>,
    pub steps: usize,
    pub dt: f64,
}

/// One explicit step with interface fluxes `F(u_l, u_r)`.
///
/// `f` is nondecreasing, so `F(u_l, u_r) = f(u_l)`: the scheme is upwind.
pub fn godunov_step(profile: &mut Profile, flux: &FluxFunction, dt: f64, scratch: &mut Vec<f64>) {
    let n = profile.values.len();
    scratch.clear();
    scratch.push(flux.eval(profile.left));
    scratch.extend(profile.values.iter().map(|&u| flux.eval(u)));
    let r = dt / profile.dx;
    for i in 0..n {
        profile.values[i] -= r * (scratch[i + 1] - scratch[i]);
    }
}

/// Godunov solution at time `horizon`, with snapshots at `snapshot_times`.
pub fn godunov_solve(
    init: &Profile,
    flux: &FluxFunction,
    horizon: f64,
    cfl: f64,
    snapshot_times: &[f64],
) -> Result<GodunovOutput> {
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(Error::param(format!("CFL {cfl} not in (0, 1)")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon must be finite and >= 0"));
    }
    init.validate()?;
    let top = init
        .values
        .iter()
        .chain([&init.left, &init.right])
        .copied()
        .fold(0.0, f64::max);
    if top > flux.rho_max() {
        return Err(Error::DensityOutOfRange {
            rho: top,
            max: flux.rho_max(),
        });
    }
    let dt_max = cfl * init.dx / flux.lipschitz().max(f64::MIN_POSITIVE);
    let mut stops: Vec<f64> = snapshot_times
        .iter()
        .copied()
        .filter(|&t| t <= horizon)
        .collect();
    stops.push(horizon);
    let mut profile = init.clone();
    let mut snapshots = Vec::new();
    let mut scratch = Vec::with_capacity(init.len() + 1);
    let mut t = 0.0;
    let mut steps = 0;
    for (k, &stop) in stops.iter().enumerate() {
        while t < stop {
            let remaining = stop - t;
            let dt = if remaining <= dt_max * (1.0 + 1e-12) {
                remaining
            } else {
                dt_max
            };
            godunov_step(&mut profile, flux, dt, &mut scratch);
            t = if dt == remaining { stop } else { t + dt };
            steps += 1;
        }
        if k < stops.len() - 1 {
            snapshots.push((stop, profile.clone()));
        }
    }
    Ok(GodunovOutput {
        profile,
        snapshots,
        steps,
        dt: dt_max,
    })
}

/// `L1` distance between a profile and a function on `[lo, hi]`, using
/// `sub` midpoint samples per cell.
pub fn l1_distance(profile: &Profile, exact: impl Fn(f64) -> f64, lo: f64, hi: f64, sub: usize) -> f64 {
    let sub = sub.max(1);
    let h = profile.dx / sub as f64;
    let mut total = 0.0;
    for i in 0..profile.len() {
        let cell_lo = profile.a + i as f64 * profile.dx;
        if cell_lo + profile.dx <= lo || cell_lo >= hi {
            continue;
        }
        for s in 0..sub {
            let x = cell_lo + (s as f64 + 0.5) * h;
            if x >= lo && x < hi {
                total += (profile.values[i] - exact(x)).abs() * h;
            }
        }
    }
    total
}

/// Outcome of the supercritical Riemann checks with `lam >= rho_c > rho`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupercriticalReport {
    pub v_c: f64,
    /// Largest `|R - lam|` over grid points `x < 0`.
    pub left_deviation: f64,
    /// Largest `|R_{lam,rho} - R_{rho_c,rho}|` over grid points `x > 0`.
    pub right_deviation: f64,
    /// Largest `|R - rho_c|` on `(0, t v_c)`.
    pub front_deviation: f64,
    /// Largest `R - rho_c` beyond `t v_c` (negative when below).
    pub beyond_front_excess: f64,
    pub plateau_points: usize,
    /// Front check skipped when `v_c < 10 dx / t`.
    pub front_skipped: bool,
}

impl SupercriticalReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.left_deviation <= tol
            && self.right_deviation <= tol
            && (self.front_skipped || self.front_deviation == 0.0)
            && self.beyond_front_excess < 0.0
    }
}

pub fn check_supercritical_facts(
    flux: &FluxFunction,
    lam: f64,
    rho: f64,
    t: f64,
    grid: &[f64],
) -> Result<SupercriticalReport> {
    let rho_c = flux.rho_c();
    if !rho_c.is_finite() {
        return Err(Error::InfiniteCriticalDensity);
    }
    if !(lam >= rho_c) {
        return Err(Error::param(format!("lambda = {lam} is below rho_c = {rho_c}")));
    }
    if !(rho >= 0.0 && rho < rho_c) {
        return Err(Error::SupercriticalDensity { rho, rho_c });
    }
    if grid.len() < 2 {
        return Err(Error::param("grid needs at least two points"));
    }
    let v_c = flux.critical_speed(rho)?;
    let dx = grid.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
    let front_skipped = v_c < 10.0 * dx / t;
    let mut report = SupercriticalReport {
        v_c,
        left_deviation: 0.0,
        right_deviation: 0.0,
        front_deviation: 0.0,
        beyond_front_excess: f64::NEG_INFINITY,
        plateau_points: 0,
        front_skipped,
    };
    for &x in grid {
        let r = riemann_solution(flux, lam, rho, t, x)?;
        if x < 0.0 {
            report.left_deviation = report.left_deviation.max((r - lam).abs());
        } else if x > 0.0 {
            let reference = riemann_solution(flux, rho_c, rho, t, x)?;
            report.right_deviation = report.right_deviation.max((r - reference).abs());
            if x < t * v_c {
                report.plateau_points += 1;
                report.front_deviation = report.front_deviation.max((r - rho_c).abs());
            } else if x > t * v_c {
                report.beyond_front_excess = report.beyond_front_excess.max(r - rho_c);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::dilute_flux;
    use crate::kinetics::JumpKernel;
    use crate::measures::RateFunction;
    use crate::rng::{keyed_rng, unit_f64};

    fn dilute() -> FluxFunction {
        dilute_flux(0.2, &RateFunction::mm1(), &JumpKernel::totally_asymmetric()).unwrap()
    }

    /// Four-piece solution for `lam = 1 > rho_c = 0.25`, `rho = 0`, `c = 0.2`.
    fn closed_form(x: f64, t: f64) -> f64 {
        let v = x / t;
        if v < 0.0 {
            1.0
        } else if v < 0.64 {
            0.25
        } else if v < 1.0 {
            (1.0 / v).sqrt() - 1.0
        } else {
            0.0
        }
    }

    #[test]
    fn singleton_interval() {
        let flux = dilute();
        let (g, r) = riemann_optimum(&flux, 0.1, 0.1, 0.3);
        assert_eq!(r, 0.1);
        assert!((g - (flux.eval(0.1) - 0.03)).abs() < 1e-15);
    }

    #[test]
    fn increasing_data_at_zero_speed() {
        let (g, r) = riemann_optimum(&dilute(), 0.0, 1.0, 0.0);
        assert_eq!((g, r), (0.0, 0.0));
    }

    #[test]
    fn decreasing_data_matches_grid_scan() {
        let flux = dilute();
        let (g, _) = riemann_optimum(&flux, 1.0, 0.0, 0.3);
        let scan = (0..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|r| flux.eval(r) - 0.3 * r)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((g - scan).abs() < 1e-8);
    }

    #[test]
    fn four_piece_solution() {
        let flux = dilute();
        for &x in &[-0.5, -0.01, 0.01, 0.3, 0.63, 0.65, 0.8, 0.99, 1.01, 1.7] {
            let r = riemann_solution(&flux, 1.0, 0.0, 1.0, x).unwrap();
            // Within one tabulation step of the exact rarefaction.
            assert!((r - closed_form(x, 1.0)).abs() < 5e-4, "x={x}: {r}");
        }
        assert!(riemann_solution(&flux, 1.0, 0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn shock_satisfies_rankine_hugoniot() {
        let flux = dilute();
        let s = (flux.eval(1.0) - flux.eval(0.0)) / 1.0;
        let before = riemann_solution(&flux, 0.0, 1.0, 1.0, s - 1e-6).unwrap();
        let after = riemann_solution(&flux, 0.0, 1.0, 1.0, s + 1e-6).unwrap();
        assert_eq!((before, after), (0.0, 1.0));
        let jump = (flux.eval(after) - flux.eval(before)) - s * (after - before);
        assert!(jump.abs() < 1e-8);
    }

    #[test]
    fn solution_is_self_similar_and_monotone() {
        let flux = dilute();
        let xs: Vec<f64> = (0..400).map(|i| -1.0 + 3.0 * i as f64 / 400.0).collect();
        for k in [2.0, 10.0] {
            for &x in &xs {
                assert_eq!(
                    riemann_solution(&flux, 1.0, 0.0, 1.0, x).unwrap(),
                    riemann_solution(&flux, 1.0, 0.0, k, k * x).unwrap()
                );
            }
        }
        let dec: Vec<f64> = xs.iter().map(|&x| riemann_solution(&flux, 1.0, 0.0, 1.0, x).unwrap()).collect();
        assert!(dec.windows(2).all(|w| w[1] <= w[0]));
        let inc: Vec<f64> = xs.iter().map(|&x| riemann_solution(&flux, 0.1, 0.9, 1.0, x).unwrap()).collect();
        assert!(inc.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn constant_data_is_fixed_point() {
        let flux = dilute();
        let init = Profile::riemann(-1.0, 1.0, 200, 0.2, 0.2).unwrap();
        let out = godunov_solve(&init, &flux, 1.0, CFL, &[]).unwrap();
        assert_eq!(out.profile.values, init.values);
    }

    #[test]
    fn upwind_identity_on_random_pairs() {
        let flux = dilute();
        let mut rng = keyed_rng(1, 0);
        for _ in 0..10_000 {
            let ul = 1.2 * unit_f64(&mut rng);
            let ur = 1.2 * unit_f64(&mut rng);
            assert_eq!(godunov_flux(&flux, ul, ur), flux.eval(ul));
        }
    }

    #[test]
    fn godunov_converges_to_closed_form() {
        let flux = dilute();
        let init = Profile::riemann(-1.5, 2.5, 1600, 1.0, 0.0).unwrap();
        let out = godunov_solve(&init, &flux, 1.0, CFL, &[]).unwrap();
        let err = l1_distance(&out.profile, |x| closed_form(x, 1.0), -1.0, 2.0, 8);
        assert!(err <= 0.02, "L1 error {err}");
    }

    #[test]
    fn conservation_and_maximum_principle() {
        let flux = dilute();
        let init = Profile::from_fn(-1.0, 1.0, 300, |x| 0.6 + 0.5 * (7.0 * x).sin()).unwrap();
        let mut p = init.clone();
        let dt = CFL * p.dx / flux.lipschitz();
        let mut scratch = Vec::new();
        let (lo, hi) = (0.1, 1.1);
        for _ in 0..200 {
            let before = p.mass();
            let inflow = dt * (flux.eval(p.left) - flux.eval(*p.values.last().unwrap()));
            godunov_step(&mut p, &flux, dt, &mut scratch);
            assert!((p.mass() - before - inflow).abs() < 1e-10);
            assert!(p.values.iter().all(|&v| v >= lo - 1e-15 && v <= hi + 1e-15));
        }
    }

    #[test]
    fn supercritical_facts_hold_for_dilute_mm1() {
        let flux = dilute();
        let grid: Vec<f64> = (0..2000).map(|i| -1.0 + 3.0 * i as f64 / 2000.0).collect();
        for lam in [0.5, 2.0] {
            let rep = check_supercritical_facts(&flux, lam, 0.0, 1.0, &grid).unwrap();
            assert!(rep.passed(1e-10), "{rep:?}");
            assert!((rep.v_c - 0.64).abs() < 1e-4);
        }
        let r = riemann_solution(&flux, 1.0, 0.0, 1.0, 0.32).unwrap();
        assert_eq!(r, flux.rho_c());
        assert!(check_supercritical_facts(&flux, 0.1, 0.0, 1.0, &grid).is_err());
    }

    #[test]
    fn bad_inputs_rejected() {
        let flux = dilute();
        let init = Profile::riemann(-1.0, 1.0, 10, 1.0, 0.0).unwrap();
        assert!(godunov_solve(&init, &flux, 1.0, 1.0, &[]).is_err());
        assert!(Profile::riemann(-1.0, 1.0, 10, -1.0, 0.0).is_err());
    }
}
