//! Core types shared by every stage: the category hierarchy, records,
//! fixed-point series values and the detector configuration.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use thiserror::Error;

/// Index of a node inside a [`HierarchySchema`]. The root is always `0`.
pub type NodeId = usize;

/// Root node id of every schema.
pub const ROOT: NodeId = 0;

/// Default bound on path depth (segments below the root).
pub const DEFAULT_MAX_DEPTH: usize = 5;

/// Separator between labels in a textual category path.
pub const PATH_SEPARATOR: char = '/';

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("empty category path")]
    EmptyPath,
    #[error("empty label at segment {0}")]
    EmptySegment(usize),
    #[error("path depth {depth} exceeds the schema maximum {max}")]
    TooDeep { depth: usize, max: usize },
    #[error("unknown segment at position {0}")]
    UnknownSegment(usize),
    #[error("category `{0}` is not a leaf of the schema")]
    InteriorCategory(String),
}

/// A root-to-node sequence of labels; the root itself is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryPath {
    segments: Vec<String>,
}

impl CategoryPath {
    pub fn new<I, S>(segments: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err(SchemaError::EmptyPath);
        }
        for (i, s) in segments.iter().enumerate() {
            if s.is_empty() || s.contains(PATH_SEPARATOR) {
                return Err(SchemaError::EmptySegment(i + 1));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }
}

impl FromStr for CategoryPath {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(SchemaError::EmptyPath);
        }
        Self::new(s.split(PATH_SEPARATOR))
    }
}

impl fmt::Display for CategoryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            f.write_str(s)?;
        }
        Ok(())
    }
}

/// An immutable category tree. Node ids are assigned in breadth-first
/// order, so ids at a smaller depth always come first.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySchema {
    labels: Vec<String>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    depth: Vec<usize>,
    lookup: HashMap<(NodeId, String), NodeId>,
    max_depth: usize,
}

impl HierarchySchema {
    /// Builds a schema from root-to-leaf paths with the default depth bound.
    pub fn from_paths<'a, I>(paths: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = &'a CategoryPath>,
    {
        Self::from_paths_with_max_depth(paths, DEFAULT_MAX_DEPTH)
    }

    pub fn from_paths_with_max_depth<'a, I>(paths: I, max_depth: usize) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = &'a CategoryPath>,
    {
        // Insert into a temporary trie, then renumber breadth-first.
        let mut t_children: Vec<Vec<usize>> = vec![Vec::new()];
        let mut t_labels: Vec<String> = vec![String::new()];
        let mut t_lookup: HashMap<(usize, String), usize> = HashMap::new();
        for path in paths {
            if path.depth() > max_depth {
                return Err(SchemaError::TooDeep {
                    depth: path.depth(),
                    max: max_depth,
                });
            }
            let mut cur = 0;
            for seg in path.segments() {
                cur = match t_lookup.get(&(cur, seg.clone())) {
                    Some(&id) => id,
                    None => {
                        let id = t_labels.len();
                        t_labels.push(seg.clone());
                        t_children.push(Vec::new());
                        t_children[cur].push(id);
                        t_lookup.insert((cur, seg.clone()), id);
                        id
                    }
                };
            }
        }

        let n = t_labels.len();
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([0usize]);
        while let Some(x) = queue.pop_front() {
            order.push(x);
            queue.extend(t_children[x].iter().copied());
        }
        let mut new_id = vec![0usize; n];
        for (i, &old) in order.iter().enumerate() {
            new_id[old] = i;
        }

        let mut labels = vec![String::new(); n];
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut depth = vec![0usize; n];
        let mut lookup = HashMap::with_capacity(n);
        for &old in &order {
            let id = new_id[old];
            labels[id] = t_labels[old].clone();
            for &c_old in &t_children[old] {
                let c = new_id[c_old];
                children[id].push(c);
                parent[c] = Some(id);
                depth[c] = depth[id] + 1;
                lookup.insert((id, t_labels[c_old].clone()), c);
            }
        }

        Ok(Self {
            labels,
            parent,
            children,
            depth,
            lookup,
            max_depth,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Depth of the deepest node actually present.
    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent[id]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.depth[id]
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.children[id].is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).filter(move |&n| self.is_leaf(n))
    }

    /// Node ids in top-down level order (root first).
    pub fn top_down(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        0..self.len()
    }

    /// Node ids in bottom-up level order (deepest level first).
    pub fn bottom_up(&self) -> impl ExactSizeIterator<Item = NodeId> {
        (0..self.len()).rev()
    }

    /// Returns true when `a` equals `b` or is an ancestor of it.
    pub fn is_ancestor_or_self(&self, a: NodeId, b: NodeId) -> bool {
        let mut cur = Some(b);
        while let Some(x) = cur {
            if x == a {
                return true;
            }
            if self.depth[x] <= self.depth[a] {
                return false;
            }
            cur = self.parent[x];
        }
        false
    }

    /// Resolves a path to its node. Segment positions in errors are 1-based.
    pub fn resolve_path(&self, path: &CategoryPath) -> Result<NodeId, SchemaError> {
        let mut cur = ROOT;
        for (i, seg) in path.segments().iter().enumerate() {
            cur = *self
                .lookup
                .get(&(cur, seg.clone()))
                .ok_or(SchemaError::UnknownSegment(i + 1))?;
        }
        Ok(cur)
    }

    /// Resolves a path that must name a leaf.
    pub fn resolve_leaf(&self, path: &CategoryPath) -> Result<NodeId, SchemaError> {
        let id = self.resolve_path(path)?;
        if !self.is_leaf(id) {
            return Err(SchemaError::InteriorCategory(path.to_string()));
        }
        Ok(id)
    }

    /// Path of a node; `None` for the root.
    pub fn path_of(&self, id: NodeId) -> Option<CategoryPath> {
        if id == ROOT {
            return None;
        }
        let mut segs = Vec::with_capacity(self.depth[id]);
        let mut cur = id;
        while let Some(p) = self.parent[cur] {
            segs.push(self.labels[cur].clone());
            cur = p;
        }
        segs.reverse();
        Some(CategoryPath { segments: segs })
    }

    /// Path rendered for reports; the root renders as `*`.
    pub fn display_path(&self, id: NodeId) -> String {
        self.path_of(id)
            .map(|p| p.to_string())
            .unwrap_or_else(|| "*".to_string())
    }

    /// Root-to-leaf paths of every leaf, in node-id order.
    pub fn leaf_paths(&self) -> Vec<CategoryPath> {
        self.leaves().filter_map(|l| self.path_of(l)).collect()
    }

    /// Creates a record after checking that the category is a leaf.
    pub fn record(&self, path: &CategoryPath, timestamp: i64) -> Result<Record, SchemaError> {
        Ok(Record {
            leaf: self.resolve_leaf(path)?,
            timestamp,
        })
    }
}

/// One operational data item: a leaf category and a timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Record {
    pub leaf: NodeId,
    pub timestamp: i64,
}

const MASS_FRAC_BITS: u32 = 16;
const MASS_ONE: i64 = 1 << MASS_FRAC_BITS;

/// Fixed-point series value with 16 fractional bits.
///
/// Counts are integral; fractional values only arise from ratio splits.
/// Sums and differences are exact, which keeps split and merge
/// conservation checks exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mass(i64);

impl Mass {
    pub const ZERO: Mass = Mass(0);

    pub fn from_count(c: u64) -> Self {
        Mass(c as i64 * MASS_ONE)
    }

    pub fn from_f64(v: f64) -> Self {
        Mass((v * MASS_ONE as f64).round() as i64)
    }

    pub fn from_raw(raw: i64) -> Self {
        Mass(raw)
    }

    pub fn raw(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MASS_ONE as f64
    }

    pub fn scale(self, ratio: f64) -> Self {
        Mass((self.0 as f64 * ratio).round() as i64)
    }
}

impl Add for Mass {
    type Output = Mass;
    fn add(self, rhs: Mass) -> Mass {
        Mass(self.0 + rhs.0)
    }
}

impl Sub for Mass {
    type Output = Mass;
    fn sub(self, rhs: Mass) -> Mass {
        Mass(self.0 - rhs.0)
    }
}

impl Neg for Mass {
    type Output = Mass;
    fn neg(self) -> Mass {
        Mass(-self.0)
    }
}

impl AddAssign for Mass {
    fn add_assign(&mut self, rhs: Mass) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Mass {
    fn sub_assign(&mut self, rhs: Mass) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for Mass {
    fn sum<I: Iterator<Item = Mass>>(iter: I) -> Mass {
        Mass(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Mass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % MASS_ONE == 0 {
            write!(f, "{}", self.0 / MASS_ONE)
        } else {
            write!(f, "{:.4}", self.to_f64())
        }
    }
}

/// Splits `value` into shares proportional to `ratios` so that the shares
/// sum to `value` exactly. The rounding remainder goes to the largest ratio.
pub fn split_mass(value: Mass, ratios: &[f64]) -> Vec<Mass> {
    if ratios.is_empty() {
        return Vec::new();
    }
    let mut shares: Vec<Mass> = ratios.iter().map(|&r| value.scale(r)).collect();
    let assigned: Mass = shares.iter().copied().sum();
    let largest = ratios
        .iter()
        .enumerate()
        .fold(0, |best, (i, &r)| if r > ratios[best] { i } else { best });
    shares[largest] += value - assigned;
    shares
}

/// Fixed-length per-timeunit series, oldest value first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimeSeries {
    values: VecDeque<Mass>,
}

impl TimeSeries {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: VecDeque::from(vec![Mass::ZERO; len]),
        }
    }

    pub fn from_values<I: IntoIterator<Item = Mass>>(values: I) -> Self {
        Self {
            values: values.into_iter().collect(),
        }
    }

    pub fn from_counts<I: IntoIterator<Item = u64>>(counts: I) -> Self {
        Self::from_values(counts.into_iter().map(Mass::from_count))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<Mass> {
        self.values.get(i).copied()
    }

    pub fn last(&self) -> Option<Mass> {
        self.values.back().copied()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = Mass> + ExactSizeIterator + '_ {
        self.values.iter().copied()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values.iter().map(|m| m.to_f64()).collect()
    }

    /// Appends the newest value and drops the oldest, keeping the length.
    pub fn slide(&mut self, v: Mass) {
        self.values.push_back(v);
        self.values.pop_front();
    }

    pub fn push(&mut self, v: Mass) {
        self.values.push_back(v);
    }

    pub fn add_assign(&mut self, other: &TimeSeries) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += *b;
        }
    }

    pub fn sub_assign(&mut self, other: &TimeSeries) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a -= *b;
        }
    }

    /// Splits elementwise with [`split_mass`]; the outputs sum to `self`.
    pub fn split(&self, ratios: &[f64]) -> Vec<TimeSeries> {
        let mut out = vec![
            TimeSeries {
                values: VecDeque::with_capacity(self.len())
            };
            ratios.len()
        ];
        for &v in &self.values {
            for (o, share) in out.iter_mut().zip(split_mass(v, ratios)) {
                o.values.push_back(share);
            }
        }
        out
    }
}

/// Policy for the ratio used when a heavy hitter's series moves to its children.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    Uniform,
    LastTimeUnit,
    LongTermHistory,
    Ewma(f64),
}

impl FromStr for SplitRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "uniform" => Ok(SplitRule::Uniform),
            "last_time_unit" => Ok(SplitRule::LastTimeUnit),
            "long_term_history" => Ok(SplitRule::LongTermHistory),
            _ => {
                let rate = s
                    .strip_prefix("ewma")
                    .map(|r| r.trim_start_matches([':', '(']).trim_end_matches(')'))
                    .ok_or_else(|| format!("unknown split rule `{s}`"))?;
                let rate: f64 = rate
                    .parse()
                    .map_err(|_| format!("bad ewma rate in `{s}`"))?;
                Ok(SplitRule::Ewma(rate))
            }
        }
    }
}

impl fmt::Display for SplitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitRule::Uniform => f.write_str("uniform"),
            SplitRule::LastTimeUnit => f.write_str("last_time_unit"),
            SplitRule::LongTermHistory => f.write_str("long_term_history"),
            SplitRule::Ewma(r) => write!(f, "ewma({r})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    HoltWinters,
    Ewma,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "holt_winters" | "hw" => Ok(ModelKind::HoltWinters),
            "ewma" => Ok(ModelKind::Ewma),
            other => Err(format!("unknown forecast model `{other}`")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::HoltWinters => f.write_str("holt_winters"),
            ModelKind::Ewma => f.write_str("ewma"),
        }
    }
}

/// Every tunable of a detector instance. Times are in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Timeunit size.
    pub timeunit: i64,
    /// Window shift per instance.
    pub shift: i64,
    /// Window length in timeunits.
    pub window: usize,
    /// Heavy-hitter threshold on modified weight.
    pub theta: u64,
    /// Relative anomaly threshold.
    pub rt: f64,
    /// Absolute anomaly threshold.
    pub dt: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// One or two seasonal periods, each a multiple of `timeunit`.
    pub seasonal_periods: Vec<i64>,
    /// Weight of the first (daily) seasonal factor when two are configured.
    pub xi: f64,
    pub split_rule: SplitRule,
    /// Number of non-root levels carrying reference series.
    pub ref_levels: usize,
    /// Multi-timescale base (lambda).
    pub timescale_base: usize,
    /// Number of timescales (eta); `1` disables the ladder.
    pub timescales: usize,
    pub model: ModelKind,
    /// Optional alignment of the first timeunit (seconds since epoch).
    pub start: Option<i64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            timeunit: 900,
            shift: 900,
            window: 8064,
            theta: 10,
            rt: 2.8,
            dt: 8.0,
            alpha: 0.2,
            beta: 0.01,
            gamma: 0.2,
            seasonal_periods: vec![86_400],
            xi: 1.0,
            split_rule: SplitRule::LongTermHistory,
            ref_levels: 2,
            timescale_base: 4,
            timescales: 1,
            model: ModelKind::HoltWinters,
            start: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid configuration: {}", .issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect::<Vec<_>>().join("; "))]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub field: &'static str,
    pub message: String,
}

impl ConfigError {
    pub fn fields(&self) -> Vec<&'static str> {
        self.issues.iter().map(|i| i.field).collect()
    }
}

impl DetectorConfig {
    /// Seasonal periods expressed in timeunits.
    pub fn period_units(&self) -> Vec<usize> {
        if self.timeunit <= 0 {
            return Vec::new();
        }
        self.seasonal_periods
            .iter()
            .map(|&p| (p / self.timeunit).max(0) as usize)
            .collect()
    }

    /// Number of unit steps per window shift, when the shift is a multiple
    /// of the timeunit.
    pub fn steps_per_shift(&self) -> usize {
        if self.shift >= self.timeunit && self.timeunit > 0 {
            (self.shift / self.timeunit) as usize
        } else {
            1
        }
    }

    /// Configuration actually run. A shift finer than the timeunit makes the
    /// shift the base unit: the window is rescaled to keep its duration and
    /// a timescale ladder with base `timeunit / shift` rebuilds the coarser
    /// series.
    pub fn effective(&self) -> DetectorConfig {
        let mut c = self.clone();
        if self.shift > 0 && self.timeunit > 0 && self.shift < self.timeunit && self.timeunit % self.shift == 0 {
            let k = (self.timeunit / self.shift) as usize;
            c.timeunit = self.shift;
            c.window = self.window * k;
            c.timescale_base = k;
            c.timescales = self.timescales.max(2);
        }
        c
    }

    /// Checks every invariant and reports all violations together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |field: &'static str, message: String| issues.push(ConfigIssue { field, message });

        if self.timeunit <= 0 {
            bad("timeunit", "must be positive".into());
        }
        if self.shift < 0 {
            bad("shift", "must be non-negative".into());
        } else if self.timeunit > 0
            && self.shift > 0
            && self.shift % self.timeunit != 0
            && self.timeunit % self.shift != 0
        {
            bad("shift", "must divide or be a multiple of the timeunit".into());
        }
        if self.window < 1 {
            bad("window", "must be at least one timeunit".into());
        }
        if self.theta == 0 {
            bad("theta", "must be positive".into());
        }
        if !(self.rt > 1.0) {
            bad("rt", format!("must exceed 1 (got {})", self.rt));
        }
        if !(self.dt >= 0.0) {
            bad("dt", format!("must be non-negative (got {})", self.dt));
        }
        for (field, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("xi", self.xi)] {
            if !(0.0..=1.0).contains(&v) {
                bad(field, format!("must lie in [0, 1] (got {v})"));
            }
        }
        if let SplitRule::Ewma(r) = self.split_rule {
            if !(r > 0.0 && r <= 1.0) {
                bad("split_rule", format!("ewma rate must lie in (0, 1] (got {r})"));
            }
        }
        if self.timescale_base < 1 {
            bad("timescale_base", "must be a positive integer".into());
        }
        if self.timescales < 1 {
            bad("timescales", "must be a positive integer".into());
        }
        if self.model == ModelKind::HoltWinters {
            if self.seasonal_periods.is_empty() || self.seasonal_periods.len() > 2 {
                bad("seasonal_periods", "need one or two entries".into());
            }
            for &p in &self.seasonal_periods {
                if p <= 0 || (self.timeunit > 0 && p % self.timeunit != 0) {
                    bad("seasonal_periods", format!("{p} is not a positive multiple of the timeunit"));
                }
            }
            if let Some(&max_units) = self.period_units().iter().max() {
                if max_units > 0 && self.window < 2 * max_units {
                    bad(
                        "window",
                        format!(
                            "{} timeunits is shorter than two seasonal cycles ({})",
                            self.window,
                            2 * max_units
                        ),
                    );
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(s: &str) -> CategoryPath {
        s.parse().unwrap()
    }

    fn tv_schema() -> HierarchySchema {
        let paths = [path("TV/NoService"), path("TV/Remote"), path("Internet/Slow")];
        HierarchySchema::from_paths(paths.iter()).unwrap()
    }

    #[test]
    fn resolves_leaf_interior_and_unknown() {
        let s = tv_schema();
        let ns = s.resolve_path(&path("TV/NoService")).unwrap();
        assert!(s.is_leaf(ns));
        assert_eq!(s.label(ns), "NoService");
        let tv = s.resolve_path(&path("TV")).unwrap();
        assert_eq!(s.children(tv).len(), 2);
        assert_eq!(
            s.resolve_path(&path("TV/Billing")),
            Err(SchemaError::UnknownSegment(2))
        );
    }

    #[test]
    fn records_must_name_leaves() {
        let s = tv_schema();
        assert!(s.record(&path("TV/Remote"), 5).is_ok());
        assert!(matches!(
            s.record(&path("TV"), 5),
            Err(SchemaError::InteriorCategory(_))
        ));
    }

    #[test]
    fn path_round_trip_and_leaf_count() {
        let s = tv_schema();
        for n in 1..s.len() {
            assert_eq!(s.resolve_path(&s.path_of(n).unwrap()).unwrap(), n);
        }
        assert_eq!(s.leaves().count(), 3);
        assert_eq!(s.path_of(ROOT), None);
    }

    #[test]
    fn ids_are_level_ordered() {
        let s = tv_schema();
        for n in 1..s.len() {
            assert!(s.depth(n - 1) <= s.depth(n));
            assert!(s.parent(n).unwrap() < n);
        }
    }

    #[test]
    fn rejects_bad_paths() {
        assert_eq!("".parse::<CategoryPath>(), Err(SchemaError::EmptyPath));
        assert_eq!("a//b".parse::<CategoryPath>(), Err(SchemaError::EmptySegment(2)));
        let deep = path("a/b/c/d/e/f");
        assert!(matches!(
            HierarchySchema::from_paths([&deep]),
            Err(SchemaError::TooDeep { depth: 6, max: 5 })
        ));
    }

    #[test]
    fn split_mass_conserves() {
        let v = Mass::from_count(7);
        let parts = split_mass(v, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(parts.iter().copied().sum::<Mass>(), v);
        let parts = split_mass(Mass::from_count(4), &[0.75, 0.25]);
        assert_eq!(parts, vec![Mass::from_count(3), Mass::from_count(1)]);
    }

    #[test]
    fn config_reference_defaults_are_valid() {
        let cfg = DetectorConfig {
            timeunit: 900,
            window: 8064,
            seasonal_periods: vec![86_400],
            ..DetectorConfig::default()
        };
        assert_eq!(cfg.period_units(), vec![96]);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_reports_every_violation() {
        let cfg = DetectorConfig {
            window: 100,
            rt: 0.5,
            theta: 0,
            ..DetectorConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        let fields = err.fields();
        assert!(fields.contains(&"window"));
        assert!(fields.contains(&"rt"));
        assert!(fields.contains(&"theta"));
    }

    #[test]
    fn split_rule_parsing() {
        assert_eq!("uniform".parse(), Ok(SplitRule::Uniform));
        assert_eq!("ewma:0.4".parse(), Ok(SplitRule::Ewma(0.4)));
        assert_eq!("ewma(0.6)".parse(), Ok(SplitRule::Ewma(0.6)));
        assert!("bogus".parse::<SplitRule>().is_err());
    }
}
