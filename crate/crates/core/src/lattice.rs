//! Lattice windows, extended-natural occupancies and particle configurations.
//!
//! The process lives on a finite window `[lo, hi]` of the integer line. An
//! occupancy is either a finite particle count or the infinite sentinel used
//! for sources and for critical sites under the maximal invariant measure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Site = i64;

/// Inclusive integer interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub lo: Site,
    pub hi: Site,
}

impl Window {
    pub fn new(lo: Site, hi: Site) -> Result<Self> {
        if lo > hi {
            return Err(Error::EmptyWindow { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: Site) -> bool {
        site >= self.lo && site <= self.hi
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    #[inline]
    pub fn index(&self, site: Site) -> Option<usize> {
        self.contains(site).then(|| (site - self.lo) as usize)
    }

    #[inline]
    pub fn site(&self, index: usize) -> Site {
        self.lo + index as Site
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        self.lo..=self.hi
    }

    pub(crate) fn ensure_same(&self, other: &Window) -> Result<()> {
        if self != other {
            return Err(Error::WindowMismatch(self.lo, self.hi, other.lo, other.hi));
        }
        Ok(())
    }
}

/// Occupancy over the extended naturals.
///
/// Arithmetic follows the source/sink conventions: `INF - 1 = INF` and
/// `INF + 1 = INF`. The derived order places `INF` above every count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occupancy(u64);

impl Occupancy {
    pub const ZERO: Occupancy = Occupancy(0);
    pub const INF: Occupancy = Occupancy(u64::MAX);

    pub fn finite(n: u64) -> Self {
        assert!(n < u64::MAX, "occupancy overflow");
        Occupancy(n)
    }

    #[inline]
    pub fn is_infinite(self) -> bool {
        self.0 == u64::MAX
    }

    #[inline]
    pub fn count(self) -> Option<u64> {
        (!self.is_infinite()).then_some(self.0)
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn increment(self) -> Self {
        if self.is_infinite() {
            self
        } else {
            Occupancy::finite(self.0 + 1)
        }
    }

    #[inline]
    pub fn decrement(self) -> Self {
        if self.is_infinite() {
            self
        } else {
            debug_assert!(self.0 > 0, "decrement of an empty site");
            Occupancy(self.0 - 1)
        }
    }

    /// `min(n, m)` as a real number; `INF` maps to `m`.
    #[inline]
    pub fn truncated(self, m: u64) -> u64 {
        self.0.min(m)
    }
}

impl From<u64> for Occupancy {
    fn from(n: u64) -> Self {
        Occupancy::finite(n)
    }
}

impl fmt::Display for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.count() {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("INF"),
        }
    }
}

impl FromStr for Occupancy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "INF" {
            return Ok(Occupancy::INF);
        }
        s.parse::<u64>()
            .ok()
            .filter(|&n| n < u64::MAX)
            .map(Occupancy)
            .ok_or_else(|| Error::Format(format!("bad occupancy token {s:?}")))
    }
}

impl Serialize for Occupancy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.count() {
            Some(n) => s.serialize_u64(n),
            None => s.serialize_str("INF"),
        }
    }
}

impl<'de> Deserialize<'de> for Occupancy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u64),
            Token(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(n) if n < u64::MAX => Ok(Occupancy(n)),
            Repr::Count(_) => Err(serde::de::Error::custom("occupancy overflow")),
            Repr::Token(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Particle configuration on a window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    window: Window,
    occupancy: Vec<Occupancy>,
}

impl Configuration {
    pub fn empty(window: Window) -> Self {
        Self {
            window,
            occupancy: vec![Occupancy::ZERO; window.len()],
        }
    }

    pub fn from_occupancies(window: Window, occupancy: Vec<Occupancy>) -> Result<Self> {
        if occupancy.len() != window.len() {
            return Err(Error::param(format!(
                "{} occupancies for a window of {} sites",
                occupancy.len(),
                window.len()
            )));
        }
        Ok(Self { window, occupancy })
    }

    pub fn from_counts(window: Window, counts: &[u64]) -> Result<Self> {
        Self::from_occupancies(window, counts.iter().map(|&n| Occupancy::finite(n)).collect())
    }

    /// Constant finite occupancy on every site.
    pub fn constant(window: Window, n: u64) -> Self {
        Self {
            window,
            occupancy: vec![Occupancy::finite(n); window.len()],
        }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    #[inline]
    pub fn get(&self, site: Site) -> Occupancy {
        self.occupancy[self.window.index(site).expect("site outside window")]
    }

    pub fn try_get(&self, site: Site) -> Option<Occupancy> {
        self.window.index(site).map(|i| self.occupancy[i])
    }

    #[inline]
    pub fn set(&mut self, site: Site, occ: Occupancy) {
        let i = self.window.index(site).expect("site outside window");
        self.occupancy[i] = occ;
    }

    pub fn as_slice(&self) -> &[Occupancy] {
        &self.occupancy
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, Occupancy)> + '_ {
        self.window.sites().zip(self.occupancy.iter().copied())
    }

    /// Total number of particles on finite sites.
    pub fn finite_mass(&self) -> u64 {
        self.occupancy.iter().filter_map(|o| o.count()).sum()
    }

    pub fn infinite_sites(&self) -> usize {
        self.occupancy.iter().filter(|o| o.is_infinite()).count()
    }

    pub fn is_finite(&self) -> bool {
        self.infinite_sites() == 0
    }

    /// Pointwise order `self <= other` on a common window.
    pub fn le(&self, other: &Configuration) -> bool {
        self.window == other.window
            && self
                .occupancy
                .iter()
                .zip(&other.occupancy)
                .all(|(a, b)| a <= b)
    }

    /// Copy of the configuration restricted to a sub-window.
    pub fn restrict(&self, window: Window) -> Result<Configuration> {
        if !self.window.contains_window(&window) {
            return Err(Error::OutsideWindow(if window.lo < self.window.lo {
                window.lo
            } else {
                window.hi
            }));
        }
        let start = (window.lo - self.window.lo) as usize;
        Ok(Configuration {
            window,
            occupancy: self.occupancy[start..start + window.len()].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inf_arithmetic_is_absorbing() {
        assert_eq!(Occupancy::INF.increment(), Occupancy::INF);
        assert_eq!(Occupancy::INF.decrement(), Occupancy::INF);
        assert!(Occupancy::INF > Occupancy::finite(1 << 40));
        assert_eq!(Occupancy::finite(3).decrement(), Occupancy::finite(2));
    }

    #[test]
    fn occupancy_tokens() {
        assert_eq!("INF".parse::<Occupancy>().unwrap(), Occupancy::INF);
        assert_eq!(" 17 ".parse::<Occupancy>().unwrap(), Occupancy::finite(17));
        assert!("-1".parse::<Occupancy>().is_err());
        assert_eq!(Occupancy::INF.to_string(), "INF");
        let json = serde_json::to_string(&vec![Occupancy::finite(2), Occupancy::INF]).unwrap();
        assert_eq!(json, r#"[2,"INF"]"#);
        let back: Vec<Occupancy> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Occupancy::finite(2), Occupancy::INF]);
    }

    #[test]
    fn window_indexing() {
        let w = Window::new(-3, 4).unwrap();
        assert_eq!(w.len(), 8);
        assert_eq!(w.index(-3), Some(0));
        assert_eq!(w.index(5), None);
        assert_eq!(w.site(7), 4);
        assert!(Window::new(2, 1).is_err());
    }

    #[test]
    fn mass_ignores_infinite_sites() {
        let w = Window::new(0, 3).unwrap();
        let mut c = Configuration::from_counts(w, &[1, 2, 0, 4]).unwrap();
        c.set(2, Occupancy::INF);
        assert_eq!(c.finite_mass(), 7);
        assert_eq!(c.infinite_sites(), 1);
        assert!(Configuration::empty(w).le(&c));
    }
}
