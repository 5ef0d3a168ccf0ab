//! The adaptive algorithm: one tree, with heavy-hitter series relocated by
//! split and merge instead of being rebuilt from history.
//!
//! Per instance:
//!
//! 1. reset flags, add the unit's leaf counts, recompute modified weights
//!    and `ishh` bottom-up;
//! 2. flag `tosplit` on every ancestor chain above a node that is heavy (or
//!    already flagged) but not yet a member;
//! 3. top-down, split flagged members (and the root) into their non-member
//!    children; children with reference series get exact residuals;
//! 4. bottom-up, merge members that are no longer heavy into their parent;
//! 5. add or drop the root by its weight;
//! 6. append the new weight and forecast to every member in O(1).
//!
//! The root always holds a series: when it is not a heavy hitter it keeps
//! the residual mass not claimed by any member.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use crate::domain::{DetectorConfig, HierarchySchema, Mass, NodeId, SplitRule, TimeSeries, ROOT};
use crate::forecast::{ForecastModel, ForecastState};
use crate::hierarchy::{accumulate_into, compute_shhh, mask_of, residuals, ShhhSet};
use crate::pipeline::{Detector, DetectorError, InstanceOutput, Observation, StageTimes};
use crate::windowing::UnitCounts;

/// Bottom-up pass over pre-loaded leaf weights: every node adds the
/// residuals returned by its children, becomes heavy when its weight
/// reaches `theta` (returning 0) and otherwise passes its weight up.
///
/// Returns the root's residual.
pub fn update_ishh_and_weight(schema: &HierarchySchema, weight: &mut [u64], ishh: &mut [bool], theta: u64) -> u64 {
    let mut root_ret = 0;
    for n in schema.bottom_up() {
        let ret = if weight[n] >= theta {
            ishh[n] = true;
            0
        } else {
            ishh[n] = false;
            weight[n]
        };
        match schema.parent(n) {
            Some(p) => weight[p] += ret,
            None => root_ret = ret,
        }
    }
    root_ret
}

/// Propagates `tosplit` upward from every node that is heavy (or already
/// flagged) and not a current member.
pub fn mark_tosplit(schema: &HierarchySchema, ishh: &[bool], member: &[bool], tosplit: &mut [bool]) {
    for n in schema.bottom_up() {
        if let Some(p) = schema.parent(n) {
            if (ishh[n] || tosplit[n]) && !member[n] {
                tosplit[p] = true;
            }
        }
    }
}

/// Split ratios `X_c / sum(X)`; uniform when every statistic is zero.
pub fn split_ratios(rule: SplitRule, stats: &[f64]) -> Vec<f64> {
    let k = stats.len();
    if k == 0 {
        return Vec::new();
    }
    let total: f64 = match rule {
        SplitRule::Uniform => 0.0,
        _ => stats.iter().sum(),
    };
    if total > 0.0 {
        stats.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

/// Series kept at `eta` geometric timescales; scale `i + 1` holds sums of
/// `base` consecutive scale-`i` values, each scale with an EWMA forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    base: usize,
    len: usize,
    alpha: f64,
    actual: Vec<VecDeque<Mass>>,
    forecast: Vec<VecDeque<f64>>,
    calls: u64,
}

impl Ladder {
    pub fn new(base: usize, scales: usize, len: usize, alpha: f64) -> Self {
        assert!(base >= 1 && scales >= 1);
        Self {
            base,
            len,
            alpha,
            actual: vec![VecDeque::new(); scales],
            forecast: vec![VecDeque::new(); scales],
            calls: 0,
        }
    }

    pub fn scales(&self) -> usize {
        self.actual.len()
    }

    pub fn actual(&self, scale: usize) -> &VecDeque<Mass> {
        &self.actual[scale]
    }

    pub fn forecast(&self, scale: usize) -> &VecDeque<f64> {
        &self.forecast[scale]
    }

    /// Number of `update_ts` invocations so far, recursive ones included.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Appends `w` at the finest scale.
    pub fn push(&mut self, w: Mass) {
        self.update_ts(w, 0);
    }

    /// Appends `w` at `scale` (0-based); every `base` appends roll up into
    /// the next scale, and a scale is trimmed back by `base` values once it
    /// holds `len + base`.
    pub fn update_ts(&mut self, w: Mass, scale: usize) {
        self.calls += 1;
        let prev = self.forecast[scale].back().copied().unwrap_or(w.to_f64());
        self.forecast[scale].push_back(self.alpha * w.to_f64() + (1.0 - self.alpha) * prev);
        self.actual[scale].push_back(w);
        let s = self.actual[scale].len();
        if scale + 1 < self.scales() && s.is_multiple_of(self.base) {
            let rolled: Mass = self.actual[scale].iter().rev().take(self.base).copied().sum();
            self.update_ts(rolled, scale + 1);
        }
        if s >= self.len + self.base {
            self.actual[scale].drain(..self.base);
            self.forecast[scale].drain(..self.base);
        }
    }

    fn zip_apply(&mut self, other: &Ladder, fm: impl Fn(&mut Mass, Mass), ff: impl Fn(&mut f64, f64)) {
        for (a, b) in self.actual.iter_mut().zip(&other.actual) {
            debug_assert_eq!(a.len(), b.len());
            a.iter_mut().zip(b).for_each(|(x, y)| fm(x, *y));
        }
        for (a, b) in self.forecast.iter_mut().zip(&other.forecast) {
            a.iter_mut().zip(b).for_each(|(x, y)| ff(x, *y));
        }
    }

    fn split(&self, ratios: &[f64]) -> Vec<Ladder> {
        let mut out: Vec<Ladder> = ratios.iter().map(|_| self.clone()).collect();
        for (s, scale) in self.actual.iter().enumerate() {
            for (i, &v) in scale.iter().enumerate() {
                for (o, share) in out.iter_mut().zip(crate::domain::split_mass(v, ratios)) {
                    o.actual[s][i] = share;
                }
            }
        }
        for (o, &r) in out.iter_mut().zip(ratios) {
            o.forecast.iter_mut().flatten().for_each(|f| *f *= r);
        }
        out
    }
}

/// A node's actual series with its aligned forecasts and model state.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub actual: TimeSeries,
    pub forecast: VecDeque<f64>,
    pub state: ForecastState,
    pub ladder: Option<Ladder>,
}

impl Track {
    fn fit(model: &ForecastModel, actual: TimeSeries, ladder: Option<Ladder>) -> Result<Self, DetectorError> {
        let values = actual.to_f64_vec();
        let (state, fitted) = model.fit(&values)?;
        let ladder = ladder.map(|mut l| {
            for v in actual.iter() {
                l.push(v);
            }
            l
        });
        Ok(Self {
            actual,
            forecast: fitted.into(),
            state,
            ladder,
        })
    }

    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.actual = TimeSeries::zeros(self.actual.len());
        z.forecast.iter_mut().for_each(|f| *f = 0.0);
        z.state.scale(0.0);
        if let Some(l) = &mut z.ladder {
            l.actual.iter_mut().flatten().for_each(|m| *m = Mass::ZERO);
            l.forecast.iter_mut().flatten().for_each(|f| *f = 0.0);
        }
        z
    }

    /// Forecasts the next unit, then observes `w`. Returns the forecast.
    fn advance(&mut self, model: &ForecastModel, w: Mass) -> f64 {
        let f = model.forecast(&self.state);
        model.update(&mut self.state, w.to_f64());
        self.actual.slide(w);
        self.forecast.push_back(f);
        self.forecast.pop_front();
        if let Some(l) = &mut self.ladder {
            l.push(w);
        }
        f
    }

    fn add_assign(&mut self, o: &Track) {
        self.actual.add_assign(&o.actual);
        self.forecast.iter_mut().zip(&o.forecast).for_each(|(a, b)| *a += b);
        self.state.add_assign(&o.state);
        if let (Some(a), Some(b)) = (&mut self.ladder, &o.ladder) {
            a.zip_apply(b, |x, y| *x += y, |x, y| *x += y);
        }
    }

    fn sub_assign(&mut self, o: &Track) {
        self.actual.sub_assign(&o.actual);
        self.forecast.iter_mut().zip(&o.forecast).for_each(|(a, b)| *a -= b);
        self.state.sub_assign(&o.state);
        if let (Some(a), Some(b)) = (&mut self.ladder, &o.ladder) {
            a.zip_apply(b, |x, y| *x -= y, |x, y| *x -= y);
        }
    }

    fn split(&self, ratios: &[f64]) -> Vec<Track> {
        let actual = self.actual.split(ratios);
        let ladders: Vec<Option<Ladder>> = match &self.ladder {
            Some(l) => l.split(ratios).into_iter().map(Some).collect(),
            None => vec![None; ratios.len()],
        };
        actual
            .into_iter()
            .zip(ladders)
            .zip(ratios)
            .map(|((actual, ladder), &r)| Track {
                actual,
                forecast: self.forecast.iter().map(|f| f * r).collect(),
                state: self.state.scaled(r),
                ladder,
            })
            .collect()
    }
}

/// Counters and violations recorded when auditing is on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    pub instances: usize,
    pub splits: usize,
    pub merges: usize,
    pub reference_corrections: usize,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Default)]
struct NodeState {
    weight: u64,
    raw: u64,
    ishh: bool,
    washh: bool,
    tosplit: bool,
    member: bool,
    stat: f64,
    track: Option<Box<Track>>,
    reference: Option<Box<Track>>,
}

/// The adaptive detector.
pub struct Ada {
    schema: Arc<HierarchySchema>,
    theta: u64,
    window: usize,
    rule: SplitRule,
    ref_levels: usize,
    ladder: Option<(usize, usize, f64)>,
    model: ForecastModel,
    nodes: Vec<NodeState>,
    times: StageTimes,
    audit: Option<Audit>,
    bootstrapped: bool,
}

impl Ada {
    pub fn new(schema: Arc<HierarchySchema>, cfg: &DetectorConfig) -> Result<Self, DetectorError> {
        cfg.validate()?;
        let model = ForecastModel::from_config(cfg)?;
        let n = schema.len();
        Ok(Self {
            schema,
            theta: cfg.theta,
            window: cfg.window,
            rule: cfg.split_rule,
            ref_levels: cfg.ref_levels,
            ladder: (cfg.timescales > 1).then_some((cfg.timescale_base, cfg.timescales, cfg.alpha)),
            model,
            nodes: vec![NodeState::default(); n],
            times: StageTimes::default(),
            audit: None,
            bootstrapped: false,
        })
    }

    /// Turns on conservation and consistency checks for every operation.
    pub fn enable_audit(&mut self) {
        self.audit = Some(Audit::default());
    }

    pub fn audit(&self) -> Option<&Audit> {
        self.audit.as_ref()
    }

    pub fn schema(&self) -> &HierarchySchema {
        &self.schema
    }

    pub fn shhh(&self) -> ShhhSet {
        (0..self.nodes.len()).filter(|&n| self.nodes[n].member).collect()
    }

    /// Nodes currently flagged heavy by weight.
    pub fn ishh_set(&self) -> ShhhSet {
        (0..self.nodes.len()).filter(|&n| self.nodes[n].ishh).collect()
    }

    /// Modified weight of a node for the latest unit.
    pub fn weight(&self, node: NodeId) -> u64 {
        self.nodes[node].weight
    }

    pub fn track(&self, node: NodeId) -> Option<&Track> {
        self.nodes[node].track.as_deref()
    }

    pub fn reference(&self, node: NodeId) -> Option<&Track> {
        self.nodes[node].reference.as_deref()
    }

    pub fn reference_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.reference.is_some()).count()
    }

    fn has_reference_level(&self, node: NodeId) -> bool {
        let d = self.schema.depth(node);
        d >= 1 && d <= self.ref_levels
    }

    fn new_ladder(&self) -> Option<Ladder> {
        self.ladder
            .map(|(base, scales, alpha)| Ladder::new(base, scales, self.window, alpha))
    }

    fn violation(&mut self, msg: String) {
        if let Some(a) = &mut self.audit {
            a.violations.push(msg);
        }
    }

    fn update_stats(&mut self) {
        for node in &mut self.nodes {
            let raw = node.raw as f64;
            match self.rule {
                SplitRule::Uniform => {}
                SplitRule::LastTimeUnit => node.stat = raw,
                SplitRule::LongTermHistory => node.stat += raw,
                SplitRule::Ewma(r) => node.stat = r * raw + (1.0 - r) * node.stat,
            }
        }
    }

    /// Moves `node`'s series to its non-member children in proportion to
    /// the split rule, then replaces children that have reference series
    /// with their exact residuals. No-op unless some candidate child is
    /// heavy or has a heavy hitter waiting below it.
    pub fn split(&mut self, node: NodeId) -> bool {
        let theta = self.theta;
        let candidates: Vec<NodeId> = self
            .schema
            .children(node)
            .iter()
            .copied()
            .filter(|&c| !self.nodes[c].member)
            .collect();
        if !candidates
            .iter()
            .any(|&c| self.nodes[c].weight >= theta || self.nodes[c].tosplit)
        {
            return false;
        }
        let Some(track) = self.nodes[node].track.take() else {
            self.violation(format!("split of node {node} without a series"));
            return false;
        };
        let stats: Vec<f64> = candidates.iter().map(|&c| self.nodes[c].stat).collect();
        let ratios = split_ratios(self.rule, &stats);
        let parts = track.split(&ratios);

        if self.audit.is_some() {
            let mut sum = TimeSeries::zeros(track.actual.len());
            parts.iter().for_each(|p| sum.add_assign(&p.actual));
            if sum != track.actual {
                self.violation(format!("split of node {node} does not conserve its series"));
            }
            if let Some(a) = &mut self.audit {
                a.splits += 1;
            }
        }

        if node == ROOT {
            self.nodes[ROOT].track = Some(Box::new(track.zeroed()));
        }
        self.nodes[node].member = false;
        for (&c, part) in candidates.iter().zip(parts) {
            self.nodes[c].track = Some(Box::new(part));
            self.nodes[c].member = true;
        }
        for &c in &candidates {
            if self.nodes[c].reference.is_some() {
                self.correct_from_reference(c);
            }
        }
        true
    }

    /// Replaces a node's series by its reference (raw) series minus the
    /// series of every member below it.
    fn correct_from_reference(&mut self, node: NodeId) {
        let mut exact = (**self.nodes[node].reference.as_ref().expect("reference present")).clone();
        let mut stack: Vec<NodeId> = self.schema.children(node).to_vec();
        while let Some(m) = stack.pop() {
            if self.nodes[m].member {
                if let Some(t) = &self.nodes[m].track {
                    exact.sub_assign(t);
                }
            }
            stack.extend_from_slice(self.schema.children(m));
        }
        self.nodes[node].track = Some(Box::new(exact));
        if let Some(a) = &mut self.audit {
            a.reference_corrections += 1;
        }
    }

    /// Folds `node`, its parent and its siblings that are members below
    /// the threshold into the parent, summing their series.
    pub fn merge(&mut self, node: NodeId) -> bool {
        let theta = self.theta;
        if self.nodes[node].weight >= theta {
            return false;
        }
        let Some(parent) = self.schema.parent(node) else {
            return false;
        };
        let group: Vec<NodeId> = std::iter::once(parent)
            .chain(self.schema.children(parent).iter().copied())
            .filter(|&c| self.nodes[c].member && self.nodes[c].weight < theta)
            .collect();

        let mut target = match self.nodes[parent].track.take() {
            Some(t) => *t,
            None => {
                let sample = group
                    .iter()
                    .find_map(|&c| self.nodes[c].track.as_deref())
                    .expect("merge group holds at least one series");
                sample.zeroed()
            }
        };
        let mut expected = target.actual.clone();
        for &c in group.iter().filter(|&&c| c != parent) {
            if let Some(t) = self.nodes[c].track.take() {
                expected.add_assign(&t.actual);
                target.add_assign(&t);
            }
            self.nodes[c].member = false;
        }
        if self.audit.is_some() {
            if expected != target.actual {
                self.violation(format!("merge into node {parent} does not conserve mass"));
            }
            if let Some(a) = &mut self.audit {
                a.merges += 1;
            }
        }
        self.nodes[parent].track = Some(Box::new(target));
        self.nodes[parent].member = true;
        true
    }

    fn observe(&mut self) -> Vec<Observation> {
        let mut obs = Vec::new();
        for n in 0..self.nodes.len() {
            let holds = self.nodes[n].member || n == ROOT;
            if !holds {
                continue;
            }
            let w = Mass::from_count(self.nodes[n].weight);
            let model = &self.model;
            let Some(track) = self.nodes[n].track.as_deref_mut() else {
                continue;
            };
            let forecast = track.advance(model, w);
            if self.nodes[n].member {
                obs.push(Observation {
                    node: n,
                    actual: w,
                    forecast,
                });
            }
        }
        for n in 0..self.nodes.len() {
            let raw = Mass::from_count(self.nodes[n].raw);
            let model = &self.model;
            if let Some(r) = self.nodes[n].reference.as_deref_mut() {
                r.advance(model, raw);
            }
        }
        obs
    }

    fn check_instance(&mut self, total: u64) {
        if self.audit.is_none() {
            return;
        }
        let mut msgs = Vec::new();
        for (n, s) in self.nodes.iter().enumerate() {
            if s.ishh != s.member {
                msgs.push(format!("node {n}: ishh={} but member={}", s.ishh, s.member));
            }
            if s.member != s.track.is_some() && n != ROOT {
                msgs.push(format!("node {n}: membership and series disagree"));
            }
        }
        let members: u64 = self
            .nodes
            .iter()
            .filter(|s| s.member)
            .map(|s| s.weight)
            .sum();
        let rest = if self.nodes[ROOT].member { 0 } else { self.nodes[ROOT].weight };
        if members + rest != total {
            msgs.push(format!("mass {} + {} != unit total {}", members, rest, total));
        }
        let a = self.audit.as_mut().expect("audit on");
        a.instances += 1;
        a.violations.extend(msgs);
    }

    fn output(&self, observations: Vec<Observation>) -> InstanceOutput {
        InstanceOutput {
            shhh: self.shhh(),
            observations,
        }
    }
}

impl Detector for Ada {
    fn name(&self) -> &'static str {
        "ada"
    }

    fn bootstrap(&mut self, units: &[UnitCounts]) -> Result<InstanceOutput, DetectorError> {
        if units.len() != self.window {
            return Err(DetectorError::InsufficientHistory {
                needed: self.window,
                got: units.len(),
            });
        }
        let t0 = Instant::now();
        let n = self.schema.len();
        let mut raw_units: Vec<Vec<u64>> = Vec::with_capacity(units.len());
        let mut raw = vec![0u64; n];
        for u in units {
            accumulate_into(&self.schema, u, &mut raw);
            raw_units.push(raw.clone());
        }
        let last = raw_units.last().expect("window is non-empty");
        let (set, modified) = compute_shhh(&self.schema, last, self.theta);
        let mask = mask_of(&self.schema, &set);
        for (i, node) in self.nodes.iter_mut().enumerate() {
            *node = NodeState {
                weight: modified[i],
                raw: last[i],
                ishh: mask[i],
                washh: mask[i],
                member: mask[i],
                ..NodeState::default()
            };
        }
        self.times.hierarchy += t0.elapsed();

        let t1 = Instant::now();
        let mut tracked = set.clone();
        tracked.insert(ROOT);
        let mut per_node: Vec<Vec<u64>> = vec![Vec::with_capacity(self.window); n];
        for r in &raw_units {
            let res = residuals(&self.schema, r, &mask);
            for &m in &tracked {
                per_node[m].push(res[m]);
            }
        }
        for &m in &tracked {
            if self.nodes[m].track.is_none() {
                let series = TimeSeries::from_counts(std::mem::take(&mut per_node[m]));
                let track = Track::fit(&self.model, series, self.new_ladder())?;
                self.nodes[m].track = Some(Box::new(track));
            }
        }
        for m in 0..n {
            if self.has_reference_level(m) {
                let series = TimeSeries::from_counts(raw_units.iter().map(|r| r[m]));
                let track = Track::fit(&self.model, series, self.new_ladder())?;
                self.nodes[m].reference = Some(Box::new(track));
            }
        }
        for r in &raw_units {
            for (node, &w) in self.nodes.iter_mut().zip(r) {
                node.raw = w;
            }
            self.update_stats();
        }
        self.times.series += t1.elapsed();

        self.bootstrapped = true;
        let observations = set
            .iter()
            .map(|&m| {
                let t = self.nodes[m].track.as_deref().expect("member series");
                Observation {
                    node: m,
                    actual: t.actual.last().unwrap_or(Mass::ZERO),
                    forecast: t.forecast.back().copied().unwrap_or(0.0),
                }
            })
            .collect();
        let total = units.last().map(UnitCounts::total).unwrap_or(0);
        self.check_instance(total);
        Ok(self.output(observations))
    }

    fn step(&mut self, counts: &UnitCounts) -> InstanceOutput {
        assert!(self.bootstrapped, "bootstrap must run before step");
        let t0 = Instant::now();
        let schema = Arc::clone(&self.schema);
        for node in &mut self.nodes {
            node.washh = node.ishh;
            node.weight = 0;
            node.tosplit = false;
        }
        for (leaf, c) in counts.iter() {
            self.nodes[leaf].weight += c;
        }
        let mut raw = vec![0u64; schema.len()];
        accumulate_into(&schema, counts, &mut raw);
        let mut weight: Vec<u64> = self.nodes.iter().map(|s| s.weight).collect();
        let mut ishh: Vec<bool> = vec![false; schema.len()];
        update_ishh_and_weight(&schema, &mut weight, &mut ishh, self.theta);
        let member: Vec<bool> = self.nodes.iter().map(|s| s.member).collect();
        let mut tosplit = vec![false; schema.len()];
        mark_tosplit(&schema, &ishh, &member, &mut tosplit);
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.raw = raw[i];
            node.weight = weight[i];
            node.ishh = ishh[i];
            node.tosplit = tosplit[i];
        }

        for n in schema.top_down() {
            if (self.nodes[n].member || n == ROOT) && self.nodes[n].tosplit {
                self.split(n);
            }
        }
        for n in schema.bottom_up() {
            if n != ROOT && self.nodes[n].member && !self.nodes[n].ishh {
                self.merge(n);
            }
        }
        self.nodes[ROOT].member = self.nodes[ROOT].weight >= self.theta;
        self.times.hierarchy += t0.elapsed();

        let t1 = Instant::now();
        let observations = self.observe();
        self.update_stats();
        self.times.series += t1.elapsed();
        self.check_instance(counts.total());
        self.output(observations)
    }

    fn series(&self, node: NodeId) -> Option<&TimeSeries> {
        if !self.nodes[node].member {
            return None;
        }
        self.nodes[node].track.as_ref().map(|t| &t.actual)
    }

    fn stage_times(&self) -> StageTimes {
        self.times
    }

    fn live_series(&self) -> usize {
        self.nodes
            .iter()
            .map(|s| s.track.is_some() as usize + s.reference.is_some() as usize)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CategoryPath;
    use crate::hierarchy::sta_step;

    fn schema(paths: &[&str]) -> Arc<HierarchySchema> {
        let p: Vec<CategoryPath> = paths.iter().map(|s| s.parse().unwrap()).collect();
        Arc::new(HierarchySchema::from_paths(p.iter()).unwrap())
    }

    fn id(s: &HierarchySchema, p: &str) -> NodeId {
        s.resolve_path(&p.parse().unwrap()).unwrap()
    }

    fn unit(s: &HierarchySchema, xs: &[(&str, u64)]) -> UnitCounts {
        xs.iter().map(|(p, c)| (id(s, p), *c)).collect()
    }

    fn cfg(theta: u64, window: usize, rule: SplitRule, h: usize) -> DetectorConfig {
        DetectorConfig {
            timeunit: 1,
            shift: 1,
            window,
            theta,
            seasonal_periods: vec![2],
            split_rule: rule,
            ref_levels: h,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn weight_pass_two_leaves() {
        let s = schema(&["a", "b"]);
        let mut w = vec![0, 4, 2];
        let mut ishh = vec![false; 3];
        let ret = update_ishh_and_weight(&s, &mut w, &mut ishh, 5);
        assert_eq!(ret, 0);
        assert_eq!(w, vec![6, 4, 2]);
        assert_eq!(ishh, vec![true, false, false]);

        let mut w = vec![0, 5, 0];
        update_ishh_and_weight(&s, &mut w, &mut ishh, 5);
        assert_eq!(ishh, vec![false, true, false]);
        assert_eq!(w[ROOT], 0);

        let mut w = vec![0, 0, 0];
        assert_eq!(update_ishh_and_weight(&s, &mut w, &mut ishh, 5), 0);
        assert!(ishh.iter().all(|x| !x));
    }

    #[test]
    fn tosplit_propagation() {
        let s = schema(&["p/c/g", "p/c/h", "q"]);
        let (p, c, g) = (id(&s, "p"), id(&s, "p/c"), id(&s, "p/c/g"));
        let n = s.len();
        // New heavy child under an old heavy parent.
        let mut ishh = vec![false; n];
        let mut member = vec![false; n];
        ishh[c] = true;
        member[p] = true;
        let mut tosplit = vec![false; n];
        mark_tosplit(&s, &ishh, &member, &mut tosplit);
        assert!(tosplit[p]);
        assert!(!tosplit[ROOT]);

        // New heavy grandchild under a non-heavy parent under an old heavy grandparent.
        let mut ishh = vec![false; n];
        ishh[g] = true;
        let mut tosplit = vec![false; n];
        mark_tosplit(&s, &ishh, &member, &mut tosplit);
        assert!(tosplit[c] && tosplit[p]);
        assert!(!tosplit[ROOT]);

        // Unchanged set: nothing flagged.
        let mut member = vec![false; n];
        member[g] = true;
        let mut tosplit = vec![false; n];
        mark_tosplit(&s, &ishh, &member, &mut tosplit);
        assert!(tosplit.iter().all(|x| !x));
    }

    #[test]
    fn ratio_rules() {
        assert_eq!(split_ratios(SplitRule::Uniform, &[9.0, 1.0]), vec![0.5, 0.5]);
        assert_eq!(split_ratios(SplitRule::LastTimeUnit, &[3.0, 1.0]), vec![0.75, 0.25]);
        assert_eq!(split_ratios(SplitRule::Ewma(0.4), &[2.0, 6.0]), vec![0.25, 0.75]);
        assert_eq!(split_ratios(SplitRule::LongTermHistory, &[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn ewma_split_statistic_tracks_smoothed_weight() {
        let s = schema(&["a", "b"]);
        let mut ada = Ada::new(s.clone(), &cfg(5, 4, SplitRule::Ewma(0.5), 0)).unwrap();
        let units = vec![unit(&s, &[("a", 4)]); 4];
        ada.bootstrap(&units).unwrap();
        // Stat starts at 0 and sees 4 four times: 4 * (1 - 0.5^4).
        assert!((ada.nodes[id(&s, "a")].stat - 3.75).abs() < 1e-12);
    }

    #[test]
    fn children_merge_into_root() {
        let s = schema(&["a", "b"]);
        let (a, b) = (id(&s, "a"), id(&s, "b"));
        let mut ada = Ada::new(s.clone(), &cfg(5, 4, SplitRule::Uniform, 0)).unwrap();
        ada.enable_audit();
        let boot: Vec<UnitCounts> = (0..4).map(|i| unit(&s, &[("a", 5 + i), ("b", 6)])).collect();
        let out = ada.bootstrap(&boot).unwrap();
        assert_eq!(out.shhh, ShhhSet::from([a, b]));
        let before_a = ada.track(a).unwrap().actual.clone();
        let before_b = ada.track(b).unwrap().actual.clone();

        let out = ada.step(&unit(&s, &[("a", 3), ("b", 3)]));
        assert_eq!(out.shhh, ShhhSet::from([ROOT]));
        let root = &ada.track(ROOT).unwrap().actual;
        // Window slid by one: old sum on positions 1.., new weight at the end.
        let mut want = before_a.clone();
        want.add_assign(&before_b);
        want.slide(Mass::from_count(6));
        assert_eq!(root, &want);
        assert_eq!(ada.audit().unwrap().violations, Vec::<String>::new());
    }

    #[test]
    fn sibling_merge_and_cascade() {
        let s = schema(&["x/a", "x/b", "y"]);
        let (x, a, b) = (id(&s, "x"), id(&s, "x/a"), id(&s, "x/b"));
        let mut ada = Ada::new(s.clone(), &cfg(5, 4, SplitRule::Uniform, 0)).unwrap();
        ada.enable_audit();
        let boot = vec![unit(&s, &[("x/a", 6), ("x/b", 7), ("y", 1)]); 4];
        ada.bootstrap(&boot).unwrap();
        assert_eq!(ada.shhh(), ShhhSet::from([a, b]));

        // Siblings drop to 2 each: they fold into x (weight 4, still light),
        // and x then folds into the root.
        let out = ada.step(&unit(&s, &[("x/a", 2), ("x/b", 2), ("y", 1)]));
        assert_eq!(out.shhh, ShhhSet::from([ROOT]));
        assert_eq!(ada.weight(x), 4);
        let audit = ada.audit().unwrap();
        assert!(audit.merges >= 2);
        assert!(audit.violations.is_empty(), "{:?}", audit.violations);
    }

    #[test]
    fn split_reaches_grandchild_through_light_parent() {
        let s = schema(&["p/c/g", "p/c/h", "p/d", "q"]);
        let (p, g) = (id(&s, "p"), id(&s, "p/c/g"));
        let mut ada = Ada::new(s.clone(), &cfg(5, 4, SplitRule::LongTermHistory, 0)).unwrap();
        ada.enable_audit();
        let boot = vec![unit(&s, &[("p/c/g", 2), ("p/c/h", 1), ("p/d", 3)]); 4];
        ada.bootstrap(&boot).unwrap();
        assert_eq!(ada.shhh(), ShhhSet::from([p]));
        let out = ada.step(&unit(&s, &[("p/c/g", 8), ("p/d", 1)]));
        assert_eq!(out.shhh, ShhhSet::from([g]));
        assert!(ada.audit().unwrap().violations.is_empty());
    }

    #[test]
    fn full_references_reproduce_sta_series() {
        let s = schema(&["p/c/g", "p/c/h", "p/d", "q/r", "q/s"]);
        let mut ada = Ada::new(s.clone(), &cfg(4, 6, SplitRule::Uniform, 3)).unwrap();
        ada.enable_audit();
        let script: Vec<UnitCounts> = vec![
            unit(&s, &[("p/c/g", 2), ("p/d", 3), ("q/r", 1)]),
            unit(&s, &[("p/c/g", 1), ("p/c/h", 2), ("q/s", 2)]),
            unit(&s, &[("p/d", 5), ("q/r", 3)]),
            unit(&s, &[("p/c/h", 1), ("q/s", 4)]),
            unit(&s, &[("p/c/g", 3), ("p/d", 1)]),
            unit(&s, &[("q/r", 2), ("q/s", 2)]),
            unit(&s, &[("p/c/g", 9), ("q/r", 1)]),
            unit(&s, &[("p/c/g", 1), ("p/c/h", 1), ("p/d", 1), ("q/s", 6)]),
            unit(&s, &[("p/d", 7), ("q/r", 4), ("q/s", 4)]),
            unit(&s, &[("p/c/g", 2), ("p/c/h", 2)]),
        ];
        ada.bootstrap(&script[..6]).unwrap();
        for end in 7..=script.len() {
            ada.step(&script[end - 1]);
            let (set, series) = sta_step(&s, &script[end - 6..end], 4);
            assert_eq!(ada.shhh(), set);
            for (n, want) in &series {
                assert_eq!(ada.series(*n), Some(want), "node {n} at unit {end}");
            }
        }
        assert!(ada.audit().unwrap().violations.is_empty());
    }

    #[test]
    fn ladder_rolls_up_every_base_appends() {
        let mut l = Ladder::new(4, 2, 100, 0.5);
        for v in 1..=4 {
            l.push(Mass::from_count(v));
        }
        assert_eq!(l.actual(1).iter().copied().collect::<Vec<_>>(), vec![Mass::from_count(10)]);
        assert_eq!(l.calls(), 5);

        let mut flat = Ladder::new(4, 1, 100, 0.5);
        for v in 0..40 {
            flat.push(Mass::from_count(v));
        }
        assert_eq!(flat.calls(), 40);
    }

    #[test]
    fn ladder_trims_to_window() {
        let mut l = Ladder::new(4, 2, 8, 0.5);
        for v in 0..100 {
            l.push(Mass::from_count(v));
            assert!(l.actual(0).len() < 8 + 4);
            assert!(l.actual(1).len() < 8 + 4);
        }
        assert_eq!(l.actual(0).back(), Some(&Mass::from_count(99)));
        // Scale 1 always sums the last four finest values at a roll-up.
        let top: Mass = (96..100).map(Mass::from_count).sum();
        assert_eq!(l.actual(1).back(), Some(&top));
    }
}
