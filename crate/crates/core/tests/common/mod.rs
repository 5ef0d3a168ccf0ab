#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use hierwatch::detect::{detect, AnomalyEvent};
use hierwatch::domain::{CategoryPath, DetectorConfig, HierarchySchema, ModelKind, NodeId, SplitRule};
use hierwatch::pipeline::{Detector, InstanceOutput};
use hierwatch::windowing::UnitCounts;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random tree of the given depth; every interior node gets 1..=`max_fanout`
/// children, and the leaf count is capped at `max_leaves`.
pub fn random_tree(rng: &mut ChaCha8Rng, depth: usize, max_fanout: usize, max_leaves: usize) -> HierarchySchema {
    let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
    for level in 0..depth {
        let mut next = Vec::new();
        for p in &frontier {
            let remaining = max_leaves.saturating_sub(next.len()).max(1);
            let k = rng.random_range(1..=max_fanout).min(remaining);
            for i in 0..k {
                let mut q = p.clone();
                q.push(format!("n{level}_{i}"));
                next.push(q);
            }
        }
        frontier = next;
    }
    let paths: Vec<CategoryPath> = frontier.into_iter().map(|p| CategoryPath::new(p).unwrap()).collect();
    HierarchySchema::from_paths(paths.iter()).unwrap()
}

/// A unit with heavy churn: a random set of leaves gets random counts,
/// and sometimes a random subtree bursts.
pub fn churn_unit(rng: &mut ChaCha8Rng, schema: &HierarchySchema, theta: u64) -> UnitCounts {
    let leaves: Vec<NodeId> = schema.leaves().collect();
    let mut u = UnitCounts::new();
    let active = rng.random_range(0..=leaves.len());
    for _ in 0..active {
        let l = leaves[rng.random_range(0..leaves.len())];
        u.add(l, rng.random_range(0..=2 * theta));
    }
    if rng.random_bool(0.3) {
        let node = rng.random_range(0..schema.len());
        for &l in &leaves {
            if schema.is_ancestor_or_self(node, l) {
                u.add(l, rng.random_range(0..=theta / 2 + 1));
            }
        }
    }
    u
}

/// A small config that runs on unit-second timeunits with an EWMA model.
pub fn ewma_config(theta: u64, window: usize, rule: SplitRule, h: usize) -> DetectorConfig {
    DetectorConfig {
        timeunit: 1,
        shift: 1,
        window,
        theta,
        seasonal_periods: vec![],
        split_rule: rule,
        ref_levels: h,
        model: ModelKind::Ewma,
        ..DetectorConfig::default()
    }
}

pub fn rules() -> [SplitRule; 4] {
    [
        SplitRule::Uniform,
        SplitRule::LastTimeUnit,
        SplitRule::LongTermHistory,
        SplitRule::Ewma(0.4),
    ]
}

/// (node, unit index) keys flagged by the detection rule.
pub fn flagged(out: &InstanceOutput, unit: i64, cfg: &DetectorConfig) -> BTreeSet<(NodeId, i64)> {
    out.observations
        .iter()
        .filter(|o| detect(o.actual.to_f64(), o.forecast, cfg.rt, cfg.dt))
        .map(|o| (o.node, unit))
        .collect()
}

pub fn events(out: &InstanceOutput, unit: i64, cfg: &DetectorConfig) -> Vec<AnomalyEvent> {
    out.observations
        .iter()
        .filter(|o| detect(o.actual.to_f64(), o.forecast, cfg.rt, cfg.dt))
        .map(|o| AnomalyEvent::new(o.node, unit, o.actual, o.forecast))
        .collect()
}

/// Drives two detectors in lockstep and hands every instance to `visit`.
pub fn lockstep(
    a: &mut dyn Detector,
    b: &mut dyn Detector,
    window: usize,
    units: &[UnitCounts],
    mut visit: impl FnMut(usize, &InstanceOutput, &InstanceOutput, &dyn Detector, &dyn Detector),
) {
    let oa = a.bootstrap(&units[..window]).unwrap();
    let ob = b.bootstrap(&units[..window]).unwrap();
    visit(window - 1, &oa, &ob, a, b);
    for (i, u) in units.iter().enumerate().skip(window) {
        let oa = a.step(u);
        let ob = b.step(u);
        visit(i, &oa, &ob, a, b);
    }
}

pub fn shared(schema: HierarchySchema) -> Arc<HierarchySchema> {
    Arc::new(schema)
}
