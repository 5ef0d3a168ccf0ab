//! Weighted trees, succinct hierarchical heavy hitters (SHHH) and the
//! strawman algorithm that rebuilds every heavy hitter's series from `l`
//! per-unit trees on each instance.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use crate::domain::{DetectorConfig, HierarchySchema, Mass, NodeId, TimeSeries, ROOT};
use crate::forecast::{ForecastModel, ForecastState};
use crate::pipeline::{Detector, DetectorError, InstanceOutput, Observation, StageTimes};
use crate::windowing::UnitCounts;

/// Heavy-hitter node ids, ordered for deterministic iteration.
pub type ShhhSet = BTreeSet<NodeId>;

/// Raw (unmodified) weights of every node for one unit: leaves hold their
/// counts and interior nodes the sum of their children.
pub fn accumulate(schema: &HierarchySchema, counts: &UnitCounts) -> Vec<u64> {
    let mut raw = vec![0u64; schema.len()];
    accumulate_into(schema, counts, &mut raw);
    raw
}

pub fn accumulate_into(schema: &HierarchySchema, counts: &UnitCounts, raw: &mut [u64]) {
    raw.iter_mut().for_each(|w| *w = 0);
    for (leaf, c) in counts.iter() {
        raw[leaf] += c;
    }
    for n in schema.bottom_up() {
        if let Some(p) = schema.parent(n) {
            raw[p] += raw[n];
        }
    }
}

/// One bottom-up pass: a node's modified weight is its own count (leaves)
/// or the sum of modified weights of children that are not heavy hitters;
/// nodes with modified weight `>= theta` are heavy hitters.
pub fn compute_shhh(schema: &HierarchySchema, raw: &[u64], theta: u64) -> (ShhhSet, Vec<u64>) {
    let mut modified = vec![0u64; schema.len()];
    let mut set = ShhhSet::new();
    for n in schema.bottom_up() {
        let w = if schema.is_leaf(n) {
            raw[n]
        } else {
            schema
                .children(n)
                .iter()
                .filter(|c| !set.contains(c))
                .map(|&c| modified[c])
                .sum()
        };
        modified[n] = w;
        if w >= theta {
            set.insert(n);
        }
    }
    (set, modified)
}

/// Membership mask for a set.
pub fn mask_of(schema: &HierarchySchema, set: &ShhhSet) -> Vec<bool> {
    let mut m = vec![false; schema.len()];
    for &n in set {
        m[n] = true;
    }
    m
}

/// Residual weights for a fixed heavy-hitter set: each node's raw weight
/// minus the raw weights of its nearest heavy-hitter descendants.
pub fn residuals(schema: &HierarchySchema, raw: &[u64], members: &[bool]) -> Vec<u64> {
    let mut claimed = vec![0u64; schema.len()];
    for n in schema.bottom_up() {
        if let Some(p) = schema.parent(n) {
            claimed[p] += if members[n] { raw[n] } else { claimed[n] };
        }
    }
    raw.iter().zip(&claimed).map(|(a, c)| a - c).collect()
}

/// Strawman step over `l` per-unit leaf tallies (oldest first): the SHHH of
/// the last unit, and every member's residual series over all units.
pub fn sta_step(
    schema: &HierarchySchema,
    units: &[UnitCounts],
    theta: u64,
) -> (ShhhSet, BTreeMap<NodeId, TimeSeries>) {
    let Some(last) = units.last() else {
        return (ShhhSet::new(), BTreeMap::new());
    };
    let (set, _) = compute_shhh(schema, &accumulate(schema, last), theta);
    let mask = mask_of(schema, &set);
    let mut series: BTreeMap<NodeId, TimeSeries> = set.iter().map(|&n| (n, TimeSeries::default())).collect();
    let mut raw = vec![0u64; schema.len()];
    for u in units {
        accumulate_into(schema, u, &mut raw);
        let res = residuals(schema, &raw, &mask);
        for (&n, s) in series.iter_mut() {
            s.push(Mass::from_count(res[n]));
        }
    }
    (set, series)
}

/// The strawman detector. Keeps `l` unit trees and, per instance,
/// re-derives each heavy hitter's series with one traversal per tree.
///
/// Forecasts come from Holt-Winters states kept on the raw weight of every
/// node; a member's forecast is its raw forecast minus those of its nearest
/// heavy-hitter descendants, which by linearity equals the model run on the
/// member's residual series.
pub struct Sta {
    schema: Arc<HierarchySchema>,
    theta: u64,
    window: usize,
    model: ForecastModel,
    units: VecDeque<UnitCounts>,
    raw_states: Vec<ForecastState>,
    raw_forecast: Vec<f64>,
    series: BTreeMap<NodeId, TimeSeries>,
    shhh: ShhhSet,
    scratch: Vec<u64>,
    times: StageTimes,
}

impl Sta {
    pub fn new(schema: Arc<HierarchySchema>, cfg: &DetectorConfig) -> Result<Self, DetectorError> {
        cfg.validate()?;
        let model = ForecastModel::from_config(cfg)?;
        let n = schema.len();
        Ok(Self {
            schema,
            theta: cfg.theta,
            window: cfg.window,
            model,
            units: VecDeque::with_capacity(cfg.window + 1),
            raw_states: Vec::new(),
            raw_forecast: vec![0.0; n],
            series: BTreeMap::new(),
            shhh: ShhhSet::new(),
            scratch: vec![0; n],
            times: StageTimes::default(),
        })
    }

    pub fn schema(&self) -> &HierarchySchema {
        &self.schema
    }

    fn rebuild_series(&mut self) -> Vec<Observation> {
        let (set, series) = sta_step(&self.schema, self.units.make_contiguous(), self.theta);
        debug_assert_eq!(set, self.shhh);
        self.series = series;

        let mask = mask_of(&self.schema, &self.shhh);
        let mut claimed = vec![0.0; self.schema.len()];
        for n in self.schema.bottom_up() {
            if let Some(p) = self.schema.parent(n) {
                claimed[p] += if mask[n] { self.raw_forecast[n] } else { claimed[n] };
            }
        }
        self.series
            .iter()
            .map(|(&node, s)| Observation {
                node,
                actual: s.last().unwrap_or(Mass::ZERO),
                forecast: self.raw_forecast[node] - claimed[node],
            })
            .collect()
    }
}

impl Detector for Sta {
    fn name(&self) -> &'static str {
        "sta"
    }

    fn bootstrap(&mut self, units: &[UnitCounts]) -> Result<InstanceOutput, DetectorError> {
        if units.len() != self.window {
            return Err(DetectorError::InsufficientHistory {
                needed: self.window,
                got: units.len(),
            });
        }
        let t0 = Instant::now();
        self.units = units.iter().cloned().collect();
        let n = self.schema.len();
        let mut per_node: Vec<Vec<f64>> = vec![Vec::with_capacity(self.window); n];
        for u in units {
            accumulate_into(&self.schema, u, &mut self.scratch);
            for (node, &w) in self.scratch.iter().enumerate() {
                per_node[node].push(w as f64);
            }
        }
        let (set, _) = compute_shhh(&self.schema, &self.scratch, self.theta);
        self.shhh = set;
        self.times.hierarchy += t0.elapsed();

        let t1 = Instant::now();
        self.raw_states.clear();
        for (node, series) in per_node.iter().enumerate() {
            let (state, fitted) = self.model.fit(series)?;
            self.raw_forecast[node] = *fitted.last().expect("window is non-empty");
            self.raw_states.push(state);
        }
        let observations = self.rebuild_series();
        self.times.series += t1.elapsed();
        Ok(InstanceOutput {
            shhh: self.shhh.clone(),
            observations,
        })
    }

    fn step(&mut self, counts: &UnitCounts) -> InstanceOutput {
        let t0 = Instant::now();
        self.units.push_back(counts.clone());
        self.units.pop_front();
        accumulate_into(&self.schema, counts, &mut self.scratch);
        let (set, _) = compute_shhh(&self.schema, &self.scratch, self.theta);
        self.shhh = set;
        self.times.hierarchy += t0.elapsed();

        let t1 = Instant::now();
        for (node, state) in self.raw_states.iter_mut().enumerate() {
            self.raw_forecast[node] = self.model.forecast(state);
            self.model.update(state, self.scratch[node] as f64);
        }
        let observations = self.rebuild_series();
        self.times.series += t1.elapsed();
        InstanceOutput {
            shhh: self.shhh.clone(),
            observations,
        }
    }

    fn series(&self, node: NodeId) -> Option<&TimeSeries> {
        self.series.get(&node)
    }

    fn stage_times(&self) -> StageTimes {
        self.times
    }

    fn live_series(&self) -> usize {
        self.series.len() + self.units.len()
    }
}

/// Checks per-unit mass conservation: heavy hitters' modified weights plus
/// the root's leftover (when the root is not a member) equal the total.
pub fn mass_conserved(set: &ShhhSet, modified: &[u64], total: u64) -> bool {
    let members: u64 = set.iter().map(|&n| modified[n]).sum();
    let rest = if set.contains(&ROOT) { 0 } else { modified[ROOT] };
    members + rest == total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CategoryPath;
    use proptest::prelude::*;

    fn schema(paths: &[&str]) -> HierarchySchema {
        let p: Vec<CategoryPath> = paths.iter().map(|s| s.parse().unwrap()).collect();
        HierarchySchema::from_paths(p.iter()).unwrap()
    }

    fn counts(s: &HierarchySchema, xs: &[(&str, u64)]) -> UnitCounts {
        xs.iter()
            .map(|(p, c)| (s.resolve_path(&p.parse().unwrap()).unwrap(), *c))
            .collect()
    }

    #[test]
    fn accumulate_sums_children() {
        let s = schema(&["a", "b"]);
        let raw = accumulate(&s, &counts(&s, &[("a", 3), ("b", 2)]));
        assert_eq!(raw[ROOT], 5);
        assert!(accumulate(&s, &UnitCounts::new()).iter().all(|&w| w == 0));
        let chain = schema(&["x/y/z"]);
        let raw = accumulate(&chain, &counts(&chain, &[("x/y/z", 7)]));
        assert_eq!(raw, vec![7, 7, 7, 7]);
    }

    #[test]
    fn shhh_small_trees() {
        let s = schema(&["a", "b"]);
        let (set, w) = compute_shhh(&s, &accumulate(&s, &counts(&s, &[("a", 4), ("b", 2)])), 5);
        assert_eq!(set, ShhhSet::from([ROOT]));
        assert_eq!(w[ROOT], 6);

        let a = s.resolve_path(&"a".parse().unwrap()).unwrap();
        let (set, w) = compute_shhh(&s, &accumulate(&s, &counts(&s, &[("a", 6), ("b", 2)])), 5);
        assert_eq!(set, ShhhSet::from([a]));
        assert_eq!(w[ROOT], 2);
    }

    #[test]
    fn unit_threshold_takes_every_nonzero_leaf() {
        let s = schema(&["a/x", "a/y", "b/z"]);
        let raw = accumulate(&s, &counts(&s, &[("a/x", 1), ("a/y", 1), ("b/z", 1)]));
        let (set, w) = compute_shhh(&s, &raw, 1);
        assert_eq!(set.len(), 3);
        assert!(set.iter().all(|&n| s.is_leaf(n)));
        assert!(s.top_down().filter(|&n| !s.is_leaf(n)).all(|n| w[n] == 0));
    }

    #[test]
    fn tie_at_threshold_is_heavy() {
        let s = schema(&["a", "b"]);
        let a = s.resolve_path(&"a".parse().unwrap()).unwrap();
        let (set, _) = compute_shhh(&s, &accumulate(&s, &counts(&s, &[("a", 5)])), 5);
        assert_eq!(set, ShhhSet::from([a]));
    }

    #[test]
    fn sta_single_unit_matches_modified_weights() {
        let s = schema(&["a/x", "a/y", "b"]);
        let u = counts(&s, &[("a/x", 6), ("a/y", 3), ("b", 9)]);
        let (set, series) = sta_step(&s, std::slice::from_ref(&u), 5);
        let (_, w) = compute_shhh(&s, &accumulate(&s, &u), 5);
        for n in &set {
            assert_eq!(series[n].len(), 1);
            assert_eq!(series[n].last().unwrap(), Mass::from_count(w[*n]));
        }
    }

    #[test]
    fn sta_history_uses_current_members() {
        // "a/x" is heavy only in the last unit; earlier units had nothing there.
        let s = schema(&["a/x", "a/y"]);
        let units = vec![
            counts(&s, &[("a/y", 2)]),
            counts(&s, &[("a/y", 1)]),
            counts(&s, &[("a/x", 9), ("a/y", 1)]),
        ];
        let (set, series) = sta_step(&s, &units, 5);
        let x = s.resolve_path(&"a/x".parse().unwrap()).unwrap();
        assert!(set.contains(&x));
        assert_eq!(series[&x], TimeSeries::from_counts([0, 0, 9]));
    }

    /// Residual re-derived directly: raw weight minus the raw weight
    /// of every heavy-hitter descendant that has no heavy-hitter ancestor
    /// strictly between it and the node.
    fn brute_residual(s: &HierarchySchema, raw: &[u64], set: &ShhhSet, n: NodeId) -> u64 {
        let nearest: u64 = set
            .iter()
            .filter(|&&m| m != n && s.is_ancestor_or_self(n, m))
            .filter(|&&m| {
                let mut cur = s.parent(m);
                while let Some(a) = cur {
                    if a == n {
                        return true;
                    }
                    if set.contains(&a) {
                        return false;
                    }
                    cur = s.parent(a);
                }
                false
            })
            .map(|&m| raw[m])
            .sum();
        raw[n] - nearest
    }

    fn random_tree(seed: u64) -> HierarchySchema {
        let mut paths = Vec::new();
        let mut x = seed | 1;
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x
        };
        let f1 = 2 + next() % 3;
        for i in 0..f1 {
            let f2 = 1 + next() % 3;
            for j in 0..f2 {
                let f3 = 1 + next() % 3;
                for k in 0..f3 {
                    paths.push(format!("n{i}/m{j}/l{k}"));
                }
            }
        }
        let p: Vec<CategoryPath> = paths.iter().map(|s| s.parse().unwrap()).collect();
        HierarchySchema::from_paths(p.iter()).unwrap()
    }

    proptest! {
        #[test]
        fn sta_matches_brute_force(seed in 1u64..u64::MAX, theta in 1u64..12, draws in proptest::collection::vec(0u64..6, 20 * 27)) {
            let s = random_tree(seed);
            let leaves: Vec<NodeId> = s.leaves().collect();
            let units: Vec<UnitCounts> = (0..20)
                .map(|u| leaves.iter().enumerate().map(|(i, &l)| (l, draws[(u * 27 + i) % draws.len()])).collect())
                .collect();
            let (set, series) = sta_step(&s, &units, theta);
            for (i, u) in units.iter().enumerate() {
                let raw = accumulate(&s, u);
                for &n in &set {
                    prop_assert_eq!(series[&n].get(i).unwrap(), Mass::from_count(brute_residual(&s, &raw, &set, n)));
                }
            }
        }

        #[test]
        fn shhh_invariants(seed in 1u64..u64::MAX, theta in 1u64..15, draws in proptest::collection::vec(0u64..8, 27)) {
            let s = random_tree(seed);
            let u: UnitCounts = s.leaves().zip(draws.iter().copied()).collect();
            let raw = accumulate(&s, &u);
            let (set, w) = compute_shhh(&s, &raw, theta);
            prop_assert!(mass_conserved(&set, &w, u.total()));
            prop_assert!(set.iter().all(|&n| w[n] >= theta));
            // Idempotent.
            prop_assert_eq!(compute_shhh(&s, &raw, theta), (set.clone(), w.clone()));
            // Modified weight equals the residual on the same unit.
            for n in s.top_down() {
                prop_assert_eq!(w[n], brute_residual(&s, &raw, &set, n));
            }
            // Per-unit series totals (members plus root leftover) reproduce the unit total.
            let res = residuals(&s, &raw, &mask_of(&s, &set));
            let sum: u64 = set.iter().map(|&n| res[n]).sum::<u64>() + if set.contains(&ROOT) { 0 } else { res[ROOT] };
            prop_assert_eq!(sum, u.total());
        }
    }
}
