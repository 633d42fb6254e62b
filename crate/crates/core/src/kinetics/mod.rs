//! Event-driven simulation of the disordered zero-range process.

mod dynamics;
mod harris;
mod interface;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dynamics::{
    couple_run, run, CurrentTracker, Dynamics, Evolution, RunOutput, RunSpec, Snapshot,
    TrackerRecord,
};
pub use harris::{HarrisEvent, HarrisStream};
pub use interface::{
    from_tasep, interface_status, make_source_config, tasep_view, InterfaceStatus, TasepView,
};

/// Finite-support jump distribution `p(z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRecord", into = "KernelRecord")]
pub struct JumpKernel {
    displacements: Vec<i64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct KernelRecord {
    jumps: Vec<(i64, f64)>,
}

impl TryFrom<KernelRecord> for JumpKernel {
    type Error = Error;

    fn try_from(r: KernelRecord) -> Result<Self> {
        JumpKernel::new(&r.jumps)
    }
}

impl From<JumpKernel> for KernelRecord {
    fn from(k: JumpKernel) -> Self {
        KernelRecord {
            jumps: k.displacements.into_iter().zip(k.probs).collect(),
        }
    }
}

impl JumpKernel {
    pub fn new(jumps: &[(i64, f64)]) -> Result<Self> {
        let mut jumps: Vec<(i64, f64)> = jumps.iter().copied().filter(|&(_, p)| p != 0.0).collect();
        jumps.sort_by_key(|&(z, _)| z);
        if jumps.is_empty() {
            return Err(Error::InvalidDistribution("empty jump kernel".into()));
        }
        if jumps.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidDistribution("repeated displacement".into()));
        }
        if jumps.iter().any(|&(z, p)| z == 0 || !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidDistribution(
                "displacements must be nonzero with probabilities in (0, 1]".into(),
            ));
        }
        let total: f64 = jumps.iter().map(|j| j.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("kernel mass {total}")));
        }
        let mut acc = 0.0;
        let cdf = jumps
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc / total
            })
            .collect();
        Ok(Self {
            displacements: jumps.iter().map(|j| j.0).collect(),
            probs: jumps.iter().map(|j| j.1).collect(),
            cdf,
        })
    }

    /// Nearest-neighbour kernel with `p(1) = p`, `p(-1) = 1 - p`.
    pub fn nearest_neighbor(p: f64) -> Result<Self> {
        if !(p > 0.5 && p <= 1.0) {
            return Err(Error::param(format!("right jump probability {p} not in (1/2, 1]")));
        }
        Self::new(&[(-1, 1.0 - p), (1, p)])
    }

    pub fn totally_asymmetric() -> Self {
        Self::new(&[(1, 1.0)]).expect("valid kernel")
    }

    pub fn jumps(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.displacements.iter().copied().zip(self.probs.iter().copied())
    }

    /// `sum_z z p(z)`, the `p - q` of the nearest-neighbour case.
    pub fn drift(&self) -> f64 {
        self.jumps().map(|(z, p)| z as f64 * p).sum()
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        self.displacements.iter().all(|z| z.abs() == 1)
    }

    /// Largest `|z|` in the support.
    pub fn range(&self) -> i64 {
        self.displacements.iter().map(|z| z.abs()).max().unwrap_or(0)
    }

    /// Displacement read from a direction uniform through the CDF.
    #[inline]
    pub fn displacement(&self, u_dir: f64) -> i64 {
        let k = self.cdf.partition_point(|&c| c <= u_dir);
        self.displacements[k.min(self.displacements.len() - 1)]
    }
}

/// Treatment of the window edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Periodic window.
    Ring,
    /// The outermost `range` cells on each side keep their occupancy: they
    /// emit according to it and absorb arrivals.
    Frozen,
    /// Jumps leaving to the left are suppressed; jumps leaving to the right
    /// remove the particle.
    AbsorbingRightBlockedLeft,
}
