//! CSV emission for snapshots and current trackers.
//!
//! Floats are written with Rust's shortest round-trip formatting and
//! infinite occupancies as `INF`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::kinetics::{Snapshot, TrackerRecord};
use crate::lattice::{Occupancy, Site};

pub fn write_snapshots(mut out: impl Write, snapshots: &[Snapshot]) -> Result<()> {
    writeln!(out, "t,site,occupancy")?;
    for s in snapshots {
        for (x, occ) in s.config.iter() {
            writeln!(out, "{},{x},{occ}", s.time)?;
        }
    }
    Ok(())
}

/// Rows `(t, site, occupancy)` of a snapshot table.
pub fn read_snapshot_rows(input: impl BufRead) -> Result<Vec<(f64, Site, Occupancy)>> {
    let mut rows = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        if k == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("line {}: {line:?}", k + 1));
        let mut parts = line.split(',');
        let t = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let x = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let occ = parts.next().ok_or_else(bad)?.parse()?;
        rows.push((t, x, occ));
    }
    Ok(rows)
}

pub fn write_tracker_log(mut out: impl Write, log: &[TrackerRecord]) -> Result<()> {
    writeln!(out, "t,tracker,path_position,count")?;
    for r in log {
        writeln!(out, "{},{},{},{}", r.time, r.tracker, r.position, r.count)?;
    }
    Ok(())
}
