use crate::error::{Error, Result};
use crate::lattice::{Configuration, Occupancy, Site, Window};

/// Single ordered crossing between two coupled configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InterfaceStatus {
    /// Minimal `x0` with `eta <= xi` on `(-inf, x0]` and `eta >= xi` beyond.
    pub crossing: Option<Site>,
    pub well_formed: bool,
}

/// Locate the interface of the pair `(eta, xi)`.
///
/// When `eta >= xi` on the whole window with strict inequality at its left
/// end, the crossing lies just left of the window (`lo - 1`). Identical
/// configurations report the window minimum.
pub fn interface_status(eta: &Configuration, xi: &Configuration) -> Result<InterfaceStatus> {
    let w = eta.window();
    w.ensure_same(&xi.window())?;
    let mut last_below: Option<Site> = None;
    let mut first_above: Option<Site> = None;
    for ((x, a), b) in eta.iter().zip(xi.as_slice()) {
        if a < *b {
            last_below = Some(x);
        } else if a > *b && first_above.is_none() {
            first_above = Some(x);
        }
    }
    let status = match (last_below, first_above) {
        (Some(lb), Some(fa)) if lb > fa => InterfaceStatus {
            crossing: None,
            well_formed: false,
        },
        (Some(lb), _) => InterfaceStatus {
            crossing: Some(lb),
            well_formed: true,
        },
        (None, Some(fa)) if fa == w.lo => InterfaceStatus {
            crossing: Some(w.lo - 1),
            well_formed: true,
        },
        (None, _) => InterfaceStatus {
            crossing: Some(w.lo),
            well_formed: true,
        },
    };
    Ok(status)
}

/// `INF` on `[lo, x_src]`, `right` occupancies on `(x_src, hi]`.
///
/// `right` must cover the window; its values left of `x_src + 1` are ignored.
pub fn make_source_config(x_src: Site, right: &Configuration) -> Result<Configuration> {
    let w = right.window();
    if !w.contains(x_src) {
        return Err(Error::OutsideWindow(x_src));
    }
    let mut conf = right.clone();
    for x in w.lo..=x_src {
        conf.set(x, Occupancy::INF);
    }
    Ok(conf)
}

/// Exclusion-process picture: car `n` at position `x_n` with
/// `x_n = x_{n-1} + eta(n) + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TasepView {
    pub anchor: i64,
    pub positions: Vec<i64>,
}

pub fn tasep_view(config: &Configuration, anchor: i64) -> Result<TasepView> {
    let mut x = anchor;
    let mut positions = Vec::with_capacity(config.window().len());
    for (site, occ) in config.iter() {
        let n = occ.count().ok_or(Error::InfiniteOccupancy(site))?;
        x += n as i64 + 1;
        positions.push(x);
    }
    Ok(TasepView { anchor, positions })
}

/// Inverse of [`tasep_view`] on the window starting at `lo`.
pub fn from_tasep(view: &TasepView, lo: Site) -> Result<Configuration> {
    if view.positions.is_empty() {
        return Err(Error::param("no cars"));
    }
    let w = Window::new(lo, lo + view.positions.len() as Site - 1)?;
    let mut prev = view.anchor;
    let mut counts = Vec::with_capacity(view.positions.len());
    for &x in &view.positions {
        if x <= prev {
            return Err(Error::param("car positions must be strictly increasing"));
        }
        counts.push((x - prev - 1) as u64);
        prev = x;
    }
    Configuration::from_counts(w, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf(lo: Site, counts: &[u64]) -> Configuration {
        Configuration::from_counts(Window::new(lo, lo + counts.len() as Site - 1).unwrap(), counts)
            .unwrap()
    }

    #[test]
    fn identical_pair_reports_window_minimum() {
        let a = conf(-3, &[1, 2, 0, 4]);
        let s = interface_status(&a, &a).unwrap();
        assert_eq!(s, InterfaceStatus { crossing: Some(-3), well_formed: true });
    }

    #[test]
    fn single_crossing_at_origin() {
        // eta = 1{x > 0}, xi = 1{x <= 0} on [-3, 3].
        let eta = conf(-3, &[0, 0, 0, 0, 1, 1, 1]);
        let xi = conf(-3, &[1, 1, 1, 1, 0, 0, 0]);
        let s = interface_status(&eta, &xi).unwrap();
        assert_eq!(s.crossing, Some(0));
        assert!(s.well_formed);
    }

    #[test]
    fn two_sign_changes_are_malformed() {
        let eta = conf(0, &[0, 2, 0, 1]);
        let xi = conf(0, &[1, 1, 1, 1]);
        let s = interface_status(&eta, &xi).unwrap();
        assert!(!s.well_formed);
        assert_eq!(s.crossing, None);
    }

    #[test]
    fn dominating_pair_crosses_left_of_window() {
        let eta = conf(0, &[2, 1, 1]);
        let xi = conf(0, &[1, 1, 1]);
        assert_eq!(interface_status(&eta, &xi).unwrap().crossing, Some(-1));
        assert_eq!(interface_status(&xi, &eta).unwrap().crossing, Some(0));
    }

    #[test]
    fn source_configuration() {
        let w = Window::new(-100, 100).unwrap();
        let c = make_source_config(-50, &Configuration::empty(w)).unwrap();
        assert!((-100..=-50).all(|x| c.get(x) == Occupancy::INF));
        assert!((-49..=100).all(|x| c.get(x) == Occupancy::ZERO));
        let full = make_source_config(100, &Configuration::empty(w)).unwrap();
        assert_eq!(full.infinite_sites(), w.len());
        assert!(make_source_config(101, &Configuration::empty(w)).is_err());
    }

    #[test]
    fn tasep_hand_recursion() {
        let v = tasep_view(&conf(1, &[2, 0, 1]), 0).unwrap();
        assert_eq!(v.positions, vec![3, 4, 6]);
        let empty = tasep_view(&conf(0, &[0, 0, 0]), 10).unwrap();
        assert_eq!(empty.positions, vec![11, 12, 13]);
        assert_eq!(from_tasep(&v, 1).unwrap(), conf(1, &[2, 0, 1]));
    }

    #[test]
    fn tasep_rejects_infinite() {
        let mut c = conf(0, &[1, 1]);
        c.set(1, Occupancy::INF);
        assert!(matches!(tasep_view(&c, 0), Err(Error::InfiniteOccupancy(1))));
    }
}
