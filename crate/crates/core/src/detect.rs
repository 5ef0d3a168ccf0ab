//! The anomaly rule and the comparators used to evaluate detections.

use std::collections::BTreeSet;

use crate::domain::{HierarchySchema, Mass, NodeId};

/// Forecasts below this are clamped before the ratio test.
pub const FORECAST_FLOOR: f64 = 1e-6;

/// True when `actual` exceeds `forecast` by more than `rt` times and by
/// more than `dt` in absolute terms. Negative forecasts count as zero.
pub fn detect(actual: f64, forecast: f64, rt: f64, dt: f64) -> bool {
    let forecast = forecast.max(0.0);
    actual / forecast.max(FORECAST_FLOOR) > rt && actual - forecast > dt
}

/// One flagged (node, unit) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyEvent {
    pub node: NodeId,
    pub unit_start: i64,
    pub actual: Mass,
    pub forecast: f64,
    pub ratio: f64,
    pub diff: f64,
}

impl AnomalyEvent {
    /// Records the forecast clamped at zero, as the rule sees it.
    pub fn new(node: NodeId, unit_start: i64, actual: Mass, forecast: f64) -> Self {
        let a = actual.to_f64();
        let forecast = forecast.max(0.0);
        Self {
            node,
            unit_start,
            actual,
            forecast,
            ratio: a / forecast.max(FORECAST_FLOOR),
            diff: a - forecast,
        }
    }

    pub fn key(&self) -> (NodeId, i64) {
        (self.node, self.unit_start)
    }
}

/// Drops every event whose node is a strict ancestor of another event in
/// the same unit.
pub fn remove_redundant(schema: &HierarchySchema, events: &[AnomalyEvent]) -> Vec<AnomalyEvent> {
    events
        .iter()
        .filter(|e| {
            !events.iter().any(|o| {
                o.unit_start == e.unit_start && o.node != e.node && schema.is_ancestor_or_self(e.node, o.node)
            })
        })
        .copied()
        .collect()
}

/// Confusion-matrix summary against a ground-truth detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores `found` against `truth`. `negatives` are the heavy-hitter units
/// the ground truth did not flag. Empty denominators score 1.
pub fn score_vs_oracle(
    found: &BTreeSet<(NodeId, i64)>,
    truth: &BTreeSet<(NodeId, i64)>,
    negatives: &BTreeSet<(NodeId, i64)>,
) -> Scores {
    let tp = found.intersection(truth).count();
    let fp = found.difference(truth).count();
    let fn_ = truth.difference(found).count();
    let tn = negatives.difference(found).count();
    Scores {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    }
}

/// Outcome of checking detections against a reference anomaly list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    /// Reference anomalies matched by a detection at or below them.
    pub true_alarms: usize,
    /// Reference anomalies with no such detection.
    pub missed: usize,
    /// Detections unrelated to any reference anomaly.
    pub new_anomalies: usize,
    /// Quiet heavy hitters unrelated to any reference anomaly.
    pub true_negatives: usize,
}

impl ComparisonReport {
    pub fn cases(&self) -> usize {
        self.true_alarms + self.missed + self.new_anomalies + self.true_negatives
    }

    /// Share of all cases that agree with the reference.
    pub fn type1(&self) -> f64 {
        ratio(self.true_alarms + self.true_negatives, self.cases())
    }

    /// Share of reference anomalies that were found.
    pub fn type2(&self) -> f64 {
        ratio(self.true_alarms, self.true_alarms + self.missed)
    }

    /// Share of unrelated cases that stayed quiet.
    pub fn type3(&self) -> f64 {
        ratio(self.true_negatives, self.true_negatives + self.new_anomalies)
    }
}

/// Matches detections against reference anomalies. A reference anomaly is
/// a true alarm when some detection in the same unit sits at or below its
/// node. Detections and quiet heavy hitters are "related" to a reference
/// anomaly in the same unit when either node is an ancestor of the other.
pub fn compare_with_reference(
    schema: &HierarchySchema,
    detected: &[(NodeId, i64)],
    reference: &[(NodeId, i64)],
    not_flagged: &[(NodeId, i64)],
) -> ComparisonReport {
    let detected: BTreeSet<(NodeId, i64)> = detected.iter().copied().collect();
    let reference: BTreeSet<(NodeId, i64)> = reference.iter().copied().collect();
    let not_flagged: BTreeSet<(NodeId, i64)> = not_flagged.iter().copied().collect();
    let related = |(n, u): (NodeId, i64)| {
        reference
            .iter()
            .any(|&(r, ru)| ru == u && (schema.is_ancestor_or_self(r, n) || schema.is_ancestor_or_self(n, r)))
    };
    let true_alarms = reference
        .iter()
        .filter(|&&(r, u)| detected.iter().any(|&(d, du)| du == u && schema.is_ancestor_or_self(r, d)))
        .count();
    ComparisonReport {
        true_alarms,
        missed: reference.len() - true_alarms,
        new_anomalies: detected.iter().filter(|&&k| !related(k)).count(),
        true_negatives: not_flagged.iter().filter(|&&k| !related(k)).count(),
    }
}
