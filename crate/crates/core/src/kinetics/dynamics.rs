use crate::env::Environment;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Occupancy, Site, Window};
use crate::measures::RateFunction;

use super::{Boundary, HarrisEvent, HarrisStream, JumpKernel};

/// Model parameters shared by every replica of a run.
#[derive(Clone, Copy, Debug)]
pub struct Dynamics<'a> {
    pub env: &'a Environment,
    pub kernel: &'a JumpKernel,
    pub g: &'a RateFunction,
    pub boundary: Boundary,
}

impl<'a> Dynamics<'a> {
    pub fn new(
        env: &'a Environment,
        kernel: &'a JumpKernel,
        g: &'a RateFunction,
        boundary: Boundary,
    ) -> Self {
        Self {
            env,
            kernel,
            g,
            boundary,
        }
    }

    fn pinned_width(&self) -> usize {
        match self.boundary {
            Boundary::Frozen => self.kernel.range() as usize,
            _ => 0,
        }
    }
}

/// Observer on the path `x_t = x0 + floor(v t)`, sitting on the bond
/// between `x_t` and `x_t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentTracker {
    x0: Site,
    velocity: f64,
    position: Site,
    count: i64,
    swept: i64,
    swept_infinite: bool,
}

impl CurrentTracker {
    pub fn new(x0: Site, velocity: f64) -> Self {
        Self {
            x0,
            velocity,
            position: x0,
            count: 0,
            swept: 0,
            swept_infinite: false,
        }
    }

    /// Observer fixed on the bond `(x0, x0 + 1)`.
    pub fn fixed(x0: Site) -> Self {
        Self::new(x0, 0.0)
    }

    pub fn path_at(&self, t: f64) -> Site {
        self.x0 + (self.velocity * t).floor() as Site
    }

    pub fn position(&self) -> Site {
        self.position
    }

    /// Net number of jumps across the observer to the right.
    pub fn count(&self) -> i64 {
        self.count
    }

    /// Particles passed by the observer's own motion (positive when the
    /// observer overtakes particles moving right).
    pub fn swept(&self) -> i64 {
        self.swept
    }

    /// Whether the observer moved across an infinite site.
    pub fn swept_infinite(&self) -> bool {
        self.swept_infinite
    }

    fn move_to(&mut self, t: f64, occ: &[Occupancy], window: Window, ring: bool) {
        let target = self.path_at(t);
        while self.position != target {
            let (site, sign) = if target > self.position {
                (self.position + 1, 1)
            } else {
                (self.position, -1)
            };
            let idx = if ring {
                Some((site - window.lo).rem_euclid(window.len() as i64) as usize)
            } else {
                window.index(site)
            };
            if let Some(i) = idx {
                match occ[i].count() {
                    Some(n) => self.swept += sign * n as i64,
                    None => self.swept_infinite = true,
                }
            }
            self.position += sign;
        }
    }

    #[inline]
    fn record_jump(&mut self, from: i64, z: i64, lo: Site, len: i64, ring: bool) {
        let p = self.position - lo;
        if ring {
            if z > 0 && (p - from).rem_euclid(len) < z {
                self.count += 1;
            } else if z < 0 && (from - 1 - p).rem_euclid(len) < -z {
                self.count -= 1;
            }
        } else {
            let to = from + z;
            if from <= p && p < to {
                self.count += 1;
            } else if to <= p && p < from {
                self.count -= 1;
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Replica {
    occ: Vec<Occupancy>,
    trackers: Vec<CurrentTracker>,
    displacement: i64,
    accepted: u64,
}

/// Several replicas driven by one shared event stream.
#[derive(Clone, Debug)]
pub struct Evolution<'a> {
    dynamics: Dynamics<'a>,
    stream: HarrisStream,
    replicas: Vec<Replica>,
    time: f64,
    pinned: usize,
}

impl<'a> Evolution<'a> {
    pub fn new(
        dynamics: Dynamics<'a>,
        configs: Vec<Configuration>,
        trackers: &[CurrentTracker],
        stream: HarrisStream,
    ) -> Result<Self> {
        let window = dynamics.env.window();
        window.ensure_same(&stream.window())?;
        for c in &configs {
            window.ensure_same(&c.window())?;
        }
        let pinned = dynamics.pinned_width();
        if 2 * pinned >= window.len() && dynamics.boundary == Boundary::Frozen {
            return Err(Error::param("window too small for frozen boundary cells"));
        }
        let replicas = configs
            .into_iter()
            .map(|c| Replica {
                occ: c.as_slice().to_vec(),
                trackers: trackers.to_vec(),
                displacement: 0,
                accepted: 0,
            })
            .collect();
        Ok(Self {
            dynamics,
            stream,
            replicas,
            time: 0.0,
            pinned,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn replicas(&self) -> usize {
        self.replicas.len()
    }

    pub fn events(&self) -> u64 {
        self.stream.emitted()
    }

    pub fn occupancy(&self, replica: usize) -> &[Occupancy] {
        &self.replicas[replica].occ
    }

    pub fn config(&self, replica: usize) -> Configuration {
        Configuration::from_occupancies(self.dynamics.env.window(), self.replicas[replica].occ.clone())
            .expect("window length")
    }

    pub fn trackers(&self, replica: usize) -> &[CurrentTracker] {
        &self.replicas[replica].trackers
    }

    /// Sum of displacements of accepted jumps.
    pub fn displacement(&self, replica: usize) -> i64 {
        self.replicas[replica].displacement
    }

    pub fn accepted(&self, replica: usize) -> u64 {
        self.replicas[replica].accepted
    }

    pub fn next_event_time(&self) -> f64 {
        self.stream.peek_time()
    }

    /// Process the next event on every replica.
    pub fn step(&mut self) -> Result<HarrisEvent> {
        let (i, time, u_dir, u_acc) = self.stream.next_raw();
        self.time = time;
        self.apply(i, time, u_dir, u_acc)?;
        Ok(HarrisEvent {
            time,
            site: self.dynamics.env.window().site(i),
            u_dir,
            u_acc,
        })
    }

    /// Process every event up to time `t` and move the observers to `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        while self.stream.peek_time() <= t {
            let (i, time, u_dir, u_acc) = self.stream.next_raw();
            self.time = time;
            self.apply(i, time, u_dir, u_acc)?;
        }
        self.time = self.time.max(t);
        let window = self.dynamics.env.window();
        let ring = self.dynamics.boundary == Boundary::Ring;
        for rep in &mut self.replicas {
            for tr in &mut rep.trackers {
                tr.move_to(t, &rep.occ, window, ring);
            }
        }
        Ok(())
    }

    #[inline]
    fn apply(&mut self, i: usize, time: f64, u_dir: f64, u_acc: f64) -> Result<()> {
        let d = &self.dynamics;
        let window = d.env.window();
        let len = window.len() as i64;
        let z = d.kernel.displacement(u_dir);
        let ring = d.boundary == Boundary::Ring;
        let pinned = self.pinned;
        for rep in &mut self.replicas {
            for tr in &mut rep.trackers {
                if tr.velocity != 0.0 {
                    tr.move_to(time, &rep.occ, window, ring);
                }
            }
            let occ = rep.occ[i];
            if !(u_acc < d.g.g_occ(occ)) {
                continue;
            }
            let raw = i as i64 + z;
            match d.boundary {
                Boundary::Ring => {
                    let to = raw.rem_euclid(len) as usize;
                    rep.occ[i] = occ.decrement();
                    rep.occ[to] = rep.occ[to].increment();
                }
                Boundary::Frozen => {
                    let is_pinned = |k: i64| k < pinned as i64 || k >= len - pinned as i64;
                    let from_pinned = is_pinned(i as i64);
                    if raw < 0 || raw >= len {
                        if from_pinned {
                            continue;
                        }
                        return Err(Error::BoundaryViolation {
                            from: window.site(i),
                            to: window.lo + raw,
                        });
                    }
                    if !from_pinned {
                        rep.occ[i] = occ.decrement();
                    }
                    if !is_pinned(raw) {
                        let to = raw as usize;
                        rep.occ[to] = rep.occ[to].increment();
                    }
                }
                Boundary::AbsorbingRightBlockedLeft => {
                    if raw < 0 {
                        continue;
                    }
                    rep.occ[i] = occ.decrement();
                    if raw < len {
                        let to = raw as usize;
                        rep.occ[to] = rep.occ[to].increment();
                    }
                }
            }
            rep.displacement += z;
            rep.accepted += 1;
            for tr in &mut rep.trackers {
                tr.record_jump(i as i64, z, window.lo, len, ring);
            }
        }
        Ok(())
    }
}

/// Horizon, snapshot times and optional snapshot sub-window of a run.
#[derive(Clone, Debug, Default)]
pub struct RunSpec {
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    pub snapshot_window: Option<Window>,
    pub trackers: Vec<CurrentTracker>,
}

impl RunSpec {
    pub fn until(horizon: f64) -> Self {
        Self {
            horizon,
            ..Default::default()
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.snapshot_window = Some(window);
        self
    }

    pub fn with_trackers(mut self, trackers: Vec<CurrentTracker>) -> Self {
        self.trackers = trackers;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::param(format!("horizon {} must be finite and >= 0", self.horizon)));
        }
        if self.snapshot_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::param("snapshot times must be nondecreasing"));
        }
        if self
            .snapshot_times
            .iter()
            .any(|&t| !(0.0..=self.horizon).contains(&t))
        {
            return Err(Error::param("snapshot times must lie in [0, horizon]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub config: Configuration,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerRecord {
    pub time: f64,
    pub tracker: usize,
    pub position: Site,
    pub count: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub final_config: Configuration,
    pub trackers: Vec<CurrentTracker>,
    pub snapshots: Vec<Snapshot>,
    pub tracker_log: Vec<TrackerRecord>,
    pub displacement: i64,
    pub accepted: u64,
    pub events: u64,
}

/// Run coupled replicas on one stream to `spec.horizon`.
pub fn couple_run(
    configs: Vec<Configuration>,
    dynamics: Dynamics<'_>,
    stream: HarrisStream,
    spec: &RunSpec,
) -> Result<Vec<RunOutput>> {
    spec.validate()?;
    let ring = dynamics.boundary == Boundary::Ring;
    let masses: Vec<Option<u64>> = configs
        .iter()
        .map(|c| (ring && c.is_finite()).then(|| c.finite_mass()))
        .collect();
    let mut evo = Evolution::new(dynamics, configs, &spec.trackers, stream)?;
    let n = evo.replicas();
    let mut snapshots: Vec<Vec<Snapshot>> = vec![Vec::new(); n];
    let mut logs: Vec<Vec<TrackerRecord>> = vec![Vec::new(); n];
    for &t in &spec.snapshot_times {
        evo.advance_to(t)?;
        for r in 0..n {
            let config = evo.config(r);
            if let Some(m) = masses[r] {
                assert_eq!(config.finite_mass(), m, "mass not conserved on the ring");
            }
            let config = match spec.snapshot_window {
                Some(w) => config.restrict(w)?,
                None => config,
            };
            snapshots[r].push(Snapshot { time: t, config });
            for (k, tr) in evo.trackers(r).iter().enumerate() {
                logs[r].push(TrackerRecord {
                    time: t,
                    tracker: k,
                    position: tr.position(),
                    count: tr.count(),
                });
            }
        }
    }
    evo.advance_to(spec.horizon)?;
    let events = evo.events();
    Ok((0..n)
        .zip(snapshots.into_iter().zip(logs))
        .map(|(r, (snapshots, tracker_log))| RunOutput {
            final_config: evo.config(r),
            trackers: evo.trackers(r).to_vec(),
            snapshots,
            tracker_log,
            displacement: evo.displacement(r),
            accepted: evo.accepted(r),
            events,
        })
        .collect())
}

/// Single-replica run.
pub fn run(
    config: Configuration,
    dynamics: Dynamics<'_>,
    stream: HarrisStream,
    spec: &RunSpec,
) -> Result<RunOutput> {
    Ok(couple_run(vec![config], dynamics, stream, spec)?
        .pop()
        .expect("one replica"))
}
