//! Drives a detector over a record stream: bucketing, bootstrap, per-unit
//! steps, anomaly detection and per-stage timing.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::ada::Ada;
use crate::detect::{detect, remove_redundant, AnomalyEvent};
use crate::domain::{ConfigError, DetectorConfig, HierarchySchema, Mass, NodeId, Record, TimeSeries};
use crate::forecast::ForecastError;
use crate::hierarchy::{ShhhSet, Sta};
use crate::windowing::{align_down, UnitAssembler, UnitCounts, WindowError};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("insufficient bootstrap history: need {needed} timeunits, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
}

/// A heavy hitter's value and forecast for the detection unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub node: NodeId,
    pub actual: Mass,
    pub forecast: f64,
}

/// What a detector reports for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceOutput {
    pub shhh: ShhhSet,
    pub observations: Vec<Observation>,
}

/// Wall time per processing stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub reading: Duration,
    pub hierarchy: Duration,
    pub series: Duration,
    pub detection: Duration,
}

impl StageTimes {
    pub const NAMES: [&'static str; 4] = [
        "Reading Traces",
        "Updating Hierarchies",
        "Creating Time Series",
        "Detecting Anomalies",
    ];

    pub fn as_array(&self) -> [Duration; 4] {
        [self.reading, self.hierarchy, self.series, self.detection]
    }

    pub fn total(&self) -> Duration {
        self.as_array().iter().sum()
    }

    pub fn excluding_reading(&self) -> Duration {
        self.hierarchy + self.series + self.detection
    }
}

/// Common surface of the strawman and adaptive algorithms.
pub trait Detector {
    fn name(&self) -> &'static str;

    /// Consumes the first `l` units and reports on the last of them.
    fn bootstrap(&mut self, units: &[UnitCounts]) -> Result<InstanceOutput, DetectorError>;

    /// Consumes one new unit and reports on it.
    fn step(&mut self, counts: &UnitCounts) -> InstanceOutput;

    /// Current actual series of a heavy hitter.
    fn series(&self, node: NodeId) -> Option<&TimeSeries>;

    fn stage_times(&self) -> StageTimes;

    /// Number of per-node series (or per-unit trees) currently held.
    fn live_series(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sta,
    Ada,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sta" => Ok(Algorithm::Sta),
            "ada" => Ok(Algorithm::Ada),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

pub fn make_detector(
    algo: Algorithm,
    schema: Arc<HierarchySchema>,
    cfg: &DetectorConfig,
) -> Result<Box<dyn Detector>, DetectorError> {
    Ok(match algo {
        Algorithm::Sta => Box::new(Sta::new(schema, cfg)?),
        Algorithm::Ada => Box::new(Ada::new(schema, cfg)?),
    })
}

/// Result of detection for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub unit_start: i64,
    pub shhh: ShhhSet,
    pub events: Vec<AnomalyEvent>,
}

impl InstanceReport {
    /// Heavy hitters of this unit that did not raise an event.
    pub fn quiet_members(&self) -> BTreeSet<NodeId> {
        let flagged: BTreeSet<NodeId> = self.events.iter().map(|e| e.node).collect();
        self.shhh.difference(&flagged).copied().collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub instances: Vec<InstanceReport>,
    pub times: StageTimes,
    /// Records dropped for arriving after their unit was closed.
    pub late_records: usize,
    pub peak_live_series: usize,
}

impl RunOutput {
    /// All events after removing ancestors of same-unit events.
    pub fn report_events(&self, schema: &HierarchySchema) -> Vec<AnomalyEvent> {
        self.instances
            .iter()
            .flat_map(|i| remove_redundant(schema, &i.events))
            .collect()
    }
}

/// Splits a stream into consecutive closed units starting at the unit that
/// contains `start` (or the earliest record). Returns the first unit start,
/// the units and the number of late records.
pub fn assemble_units(records: &[Record], unit: i64, start: Option<i64>) -> (i64, Vec<UnitCounts>, usize) {
    let first = match start {
        Some(s) => align_down(s, unit),
        None => match records.iter().map(|r| r.timestamp).min() {
            Some(t) => align_down(t, unit),
            None => return (0, Vec::new(), 0),
        },
    };
    let mut asm = UnitAssembler::new(first, unit);
    let mut units = Vec::new();
    let mut late = 0;
    for r in records {
        match asm.push(*r) {
            Ok(closed) => units.extend(closed.into_iter().map(|(_, c)| c)),
            Err(WindowError::Late { .. } | WindowError::OutOfWindow { .. }) => late += 1,
        }
    }
    let (_, last) = asm.finish();
    units.push(last);
    (first, units, late)
}

/// Runs one detector over already bucketed units.
///
/// The first `l` units bootstrap the detector; every unit from the `l`-th
/// on is a detection unit.
pub fn run_units(
    detector: &mut dyn Detector,
    cfg: &DetectorConfig,
    first_unit_start: i64,
    units: &[UnitCounts],
) -> Result<RunOutput, DetectorError> {
    if units.len() < cfg.window {
        return Err(DetectorError::InsufficientHistory {
            needed: cfg.window,
            got: units.len(),
        });
    }
    let mut out = RunOutput::default();
    let mut detect_time = Duration::ZERO;
    let report = |unit_idx: usize, inst: InstanceOutput, detect_time: &mut Duration| -> InstanceReport {
        let t = Instant::now();
        let events = inst
            .observations
            .iter()
            .filter(|o| detect(o.actual.to_f64(), o.forecast, cfg.rt, cfg.dt))
            .map(|o| AnomalyEvent::new(o.node, first_unit_start + unit_idx as i64 * cfg.timeunit, o.actual, o.forecast))
            .collect();
        *detect_time += t.elapsed();
        InstanceReport {
            unit_start: first_unit_start + unit_idx as i64 * cfg.timeunit,
            shhh: inst.shhh,
            events,
        }
    };

    let boot = detector.bootstrap(&units[..cfg.window])?;
    out.instances.push(report(cfg.window - 1, boot, &mut detect_time));
    out.peak_live_series = detector.live_series();
    for (i, u) in units.iter().enumerate().skip(cfg.window) {
        let inst = detector.step(u);
        out.peak_live_series = out.peak_live_series.max(detector.live_series());
        out.instances.push(report(i, inst, &mut detect_time));
    }
    out.times = detector.stage_times();
    out.times.detection += detect_time;
    Ok(out)
}

/// Buckets a record stream and runs the chosen algorithm over it.
pub fn run_records(
    algo: Algorithm,
    schema: Arc<HierarchySchema>,
    cfg: &DetectorConfig,
    records: &[Record],
) -> Result<RunOutput, DetectorError> {
    cfg.validate()?;
    let cfg = &cfg.effective();
    let t = Instant::now();
    let (first, units, late) = assemble_units(records, cfg.timeunit, cfg.start);
    let reading = t.elapsed();
    let mut det = make_detector(algo, schema, cfg)?;
    let mut out = run_units(det.as_mut(), cfg, first, &units)?;
    out.times.reading += reading;
    out.late_records = late;
    Ok(out)
}

/// Runs both algorithms in lockstep over `units` and returns the mean
/// absolute difference between their heavy-hitter series, over every
/// member and window position of every instance.
pub fn series_error(schema: Arc<HierarchySchema>, cfg: &DetectorConfig, units: &[UnitCounts]) -> Result<f64, DetectorError> {
    if units.len() < cfg.window {
        return Err(DetectorError::InsufficientHistory {
            needed: cfg.window,
            got: units.len(),
        });
    }
    let mut sta = Sta::new(Arc::clone(&schema), cfg)?;
    let mut ada = Ada::new(schema, cfg)?;
    let mut total = 0.0;
    let mut points = 0usize;
    let mut tally = |set: &ShhhSet, sta: &Sta, ada: &Ada| {
        for &n in set {
            if let (Some(a), Some(b)) = (sta.series(n), ada.series(n)) {
                for (x, y) in a.iter().zip(b.iter()) {
                    total += (x.to_f64() - y.to_f64()).abs();
                    points += 1;
                }
            }
        }
    };
    let s = sta.bootstrap(&units[..cfg.window])?;
    ada.bootstrap(&units[..cfg.window])?;
    tally(&s.shhh, &sta, &ada);
    for u in &units[cfg.window..] {
        let s = sta.step(u);
        ada.step(u);
        tally(&s.shhh, &sta, &ada);
    }
    Ok(if points == 0 { 0.0 } else { total / points as f64 })
}
