//! Streaming anomaly detection over hierarchical event counts.
//!
//! Records carry a leaf of a category tree and a timestamp. They are
//! bucketed into fixed timeunits; in every unit the succinct hierarchical
//! heavy hitters are found, each keeps a sliding-window series of its
//! residual counts with a seasonal forecast, and a unit whose count
//! exceeds its forecast by both a ratio and a margin is reported.
//!
//! Two detectors share the [`pipeline::Detector`] trait: [`hierarchy::Sta`]
//! rebuilds every series from per-unit history (exact, cost grows with the
//! window) and [`ada::Ada`] relocates series incrementally.

pub mod ada;
pub mod cli;
pub mod detect;
pub mod domain;
pub mod forecast;
pub mod hierarchy;
pub mod pipeline;
pub mod seasonality;
pub mod synth;
pub mod windowing;

pub use ada::Ada;
pub use domain::{CategoryPath, DetectorConfig, HierarchySchema, Mass, NodeId, Record, SplitRule, TimeSeries, ROOT};
pub use hierarchy::Sta;
pub use pipeline::{run_records, run_units, Algorithm, Detector, RunOutput};
