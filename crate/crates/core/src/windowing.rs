//! Timeunit bucketing and the sliding window.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{NodeId, Record};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WindowError {
    #[error("record at t={} lies outside the window [{start}, {end})", .record.timestamp)]
    OutOfWindow { record: Record, start: i64, end: i64 },
    #[error("record at t={} is older than the open timeunit starting at {unit_start}", .record.timestamp)]
    Late { record: Record, unit_start: i64 },
}

/// Leaf tallies for one timeunit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnitCounts {
    counts: BTreeMap<NodeId, u64>,
}

impl UnitCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, leaf: NodeId, n: u64) {
        if n > 0 {
            *self.counts.entry(leaf).or_insert(0) += n;
        }
    }

    pub fn get(&self, leaf: NodeId) -> u64 {
        self.counts.get(&leaf).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

impl FromIterator<(NodeId, u64)> for UnitCounts {
    fn from_iter<T: IntoIterator<Item = (NodeId, u64)>>(iter: T) -> Self {
        let mut u = UnitCounts::new();
        for (k, v) in iter {
            u.add(k, v);
        }
        u
    }
}

/// A window of `len` timeunits of `unit` seconds starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: i64,
    pub unit: i64,
    pub len: usize,
}

impl Window {
    pub fn new(start: i64, unit: i64, len: usize) -> Self {
        assert!(unit > 0, "timeunit must be positive");
        Self { start, unit, len }
    }

    pub fn end(&self) -> i64 {
        self.start + self.len as i64 * self.unit
    }

    /// Start time of the detection (last) unit.
    pub fn detection_start(&self) -> i64 {
        self.end() - self.unit
    }

    /// Unit index within the window for a timestamp, using `[t, t + unit)`.
    pub fn unit_of(&self, t: i64) -> Option<usize> {
        if t < self.start || t >= self.end() {
            return None;
        }
        Some(((t - self.start) / self.unit) as usize)
    }

    /// Advances the window by `by` seconds.
    pub fn shift(&self, by: i64) -> Window {
        Window {
            start: self.start + by,
            ..*self
        }
    }
}

/// Tallies a batch of records per unit of `window`.
///
/// Records outside the window are returned as errors alongside the
/// counts of everything that was accepted.
pub fn bucket(window: &Window, batch: &[Record]) -> (BTreeMap<usize, UnitCounts>, Vec<WindowError>) {
    let mut out: BTreeMap<usize, UnitCounts> = BTreeMap::new();
    let mut rejects = Vec::new();
    for r in batch {
        match window.unit_of(r.timestamp) {
            Some(u) => out.entry(u).or_default().add(r.leaf, 1),
            None => rejects.push(WindowError::OutOfWindow {
                record: *r,
                start: window.start,
                end: window.end(),
            }),
        }
    }
    (out, rejects)
}

/// Turns a record stream into consecutive closed timeunits.
///
/// Records may arrive out of order inside the open unit. A record for an
/// already closed unit is rejected; a record beyond the open unit closes
/// it (and emits any empty units in between).
#[derive(Debug, Clone)]
pub struct UnitAssembler {
    unit: i64,
    open_start: i64,
    open: UnitCounts,
}

impl UnitAssembler {
    pub fn new(first_unit_start: i64, unit: i64) -> Self {
        assert!(unit > 0);
        Self {
            unit,
            open_start: first_unit_start,
            open: UnitCounts::new(),
        }
    }

    pub fn open_start(&self) -> i64 {
        self.open_start
    }

    /// Feeds one record; returns the units (with start times) it closed.
    pub fn push(&mut self, r: Record) -> Result<Vec<(i64, UnitCounts)>, WindowError> {
        if r.timestamp < self.open_start {
            return Err(WindowError::Late {
                record: r,
                unit_start: self.open_start,
            });
        }
        let mut closed = Vec::new();
        while r.timestamp >= self.open_start + self.unit {
            closed.push((self.open_start, std::mem::take(&mut self.open)));
            self.open_start += self.unit;
        }
        self.open.add(r.leaf, 1);
        Ok(closed)
    }

    /// Closes the open unit.
    pub fn finish(self) -> (i64, UnitCounts) {
        (self.open_start, self.open)
    }
}

/// Floors a timestamp to a multiple of `unit`.
pub fn align_down(t: i64, unit: i64) -> i64 {
    t.div_euclid(unit) * unit
}
