//! Seeded generator of hierarchical event streams with daily and weekly
//! seasonality, leaf sparsity, a rotating hot subtree and labelled spikes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::domain::{CategoryPath, ConfigError, ConfigIssue, HierarchySchema, NodeId, Record, DEFAULT_MAX_DEPTH};
use crate::windowing::UnitCounts;

/// A rate multiplier applied to every leaf under `path` for `duration`
/// units starting at unit `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spike {
    pub path: String,
    pub start: usize,
    pub duration: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Children per node at each level, top first.
    pub fanouts: Vec<usize>,
    /// Mean events per leaf per unit before modulation.
    pub base_rate: f64,
    pub diurnal_amplitude: f64,
    /// Phase of the daily wave, radians.
    pub diurnal_phase: f64,
    /// Daily period in units.
    pub diurnal_period: usize,
    pub weekly_amplitude: f64,
    /// Weekly period in units.
    pub weekly_period: usize,
    /// Target fraction of leaf-units with no events.
    pub sparsity: f64,
    /// Units between moves of the hot top-level subtree; 0 disables churn.
    pub churn_period: usize,
    /// Rate multiplier of the hot subtree.
    pub churn_boost: f64,
    pub spikes: Vec<Spike>,
    /// Number of units to generate.
    pub units: usize,
    /// Unit length in seconds.
    pub timeunit: i64,
    /// Start of the first unit, seconds since the epoch.
    pub start: i64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            fanouts: vec![4, 3, 3],
            base_rate: 2.0,
            diurnal_amplitude: 0.6,
            diurnal_phase: 0.0,
            diurnal_period: 96,
            weekly_amplitude: 0.2,
            weekly_period: 672,
            sparsity: 0.0,
            churn_period: 0,
            churn_boost: 1.0,
            spikes: Vec::new(),
            units: 4 * 672,
            timeunit: 900,
            start: 1_704_067_200,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |field: &'static str, message: String| issues.push(ConfigIssue { field, message });
        if self.fanouts.is_empty() {
            bad("fanouts", "at least one level is required".into());
        }
        if self.fanouts.len() > DEFAULT_MAX_DEPTH {
            bad("fanouts", format!("at most {DEFAULT_MAX_DEPTH} levels are supported"));
        }
        if self.fanouts.contains(&0) {
            bad("fanouts", "every fanout must be at least 1".into());
        }
        if !(self.base_rate >= 0.0 && self.base_rate.is_finite()) {
            bad("base_rate", "must be finite and non-negative".into());
        }
        for (field, v) in [("diurnal_amplitude", self.diurnal_amplitude), ("weekly_amplitude", self.weekly_amplitude)] {
            if !(0.0..=1.0).contains(&v) {
                bad(field, format!("must lie in [0, 1] (got {v})"));
            }
        }
        for (field, v) in [("diurnal_period", self.diurnal_period), ("weekly_period", self.weekly_period)] {
            if v < 2 {
                bad(field, "must be at least 2 units".into());
            }
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            bad("sparsity", format!("must lie in [0, 1) (got {})", self.sparsity));
        }
        if !(self.churn_boost > 0.0) {
            bad("churn_boost", "must be positive".into());
        }
        if self.units == 0 {
            bad("units", "must be positive".into());
        }
        if self.timeunit <= 0 {
            bad("timeunit", "must be positive".into());
        }
        for s in &self.spikes {
            if !(s.multiplier > 0.0) || s.duration == 0 {
                bad("spike", format!("spike at {} needs a positive multiplier and duration", s.path));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }

    /// Builds the complete tree described by the fanouts. Level `i`
    /// labels start with the `i`-th lowercase letter.
    pub fn schema(&self) -> Result<HierarchySchema, ConfigError> {
        self.validate()?;
        let mut paths: Vec<Vec<String>> = vec![Vec::new()];
        for (level, &f) in self.fanouts.iter().enumerate() {
            let prefix = (b'a' + level as u8) as char;
            paths = paths
                .into_iter()
                .flat_map(|p| {
                    (0..f).map(move |i| {
                        let mut q = p.clone();
                        q.push(format!("{prefix}{i}"));
                        q
                    })
                })
                .collect();
        }
        let paths: Vec<CategoryPath> = paths
            .into_iter()
            .map(|p| CategoryPath::new(p).expect("generated segments are non-empty"))
            .collect();
        Ok(HierarchySchema::from_paths(paths.iter()).expect("generated tree is valid"))
    }

    /// Seasonal factor for unit `t`.
    pub fn seasonal(&self, t: usize) -> f64 {
        let t = t as f64;
        (1.0 + self.diurnal_amplitude * (2.0 * PI * t / self.diurnal_period as f64 + self.diurnal_phase).sin())
            * (1.0 + self.weekly_amplitude * (2.0 * PI * t / self.weekly_period as f64).sin())
    }
}

/// A ground-truth anomaly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Label {
    pub unit_start: i64,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub schema: HierarchySchema,
    /// Leaf counts per unit.
    pub units: Vec<UnitCounts>,
    pub labels: Vec<Label>,
    pub timeunit: i64,
    pub start: i64,
    seed: u64,
}

impl LabeledStream {
    pub fn unit_start(&self, unit: usize) -> i64 {
        self.start + unit as i64 * self.timeunit
    }

    /// Total count per unit.
    pub fn totals(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.total() as f64).collect()
    }

    /// Expands the counts into timestamped records, sorted by time. Times
    /// within a unit are drawn from a generator seeded by the stream seed.
    pub fn records(&self) -> Vec<Record> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::new();
        for (u, counts) in self.units.iter().enumerate() {
            let base = self.unit_start(u);
            let first = out.len();
            for (leaf, c) in counts.iter() {
                for _ in 0..c {
                    out.push(Record {
                        leaf,
                        timestamp: base + rng.random_range(0..self.timeunit),
                    });
                }
            }
            out[first..].sort_by_key(|r| (r.timestamp, r.leaf));
        }
        out
    }
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Draws the stream. Identical configurations give identical streams.
pub fn generate(cfg: &GeneratorConfig) -> Result<LabeledStream, ConfigError> {
    let schema = cfg.schema()?;
    let mut spikes: Vec<(NodeId, &Spike)> = Vec::new();
    let mut issues = Vec::new();
    for s in &cfg.spikes {
        match s.path.parse::<CategoryPath>().map_err(|e| e.to_string()).and_then(|p| {
            schema.resolve_path(&p).map_err(|e| e.to_string())
        }) {
            Ok(n) => spikes.push((n, s)),
            Err(e) => issues.push(ConfigIssue {
                field: "spike",
                message: format!("{}: {e}", s.path),
            }),
        }
    }
    if !issues.is_empty() {
        return Err(ConfigError { issues });
    }

    let leaves: Vec<NodeId> = schema.leaves().collect();
    let top: Vec<NodeId> = schema.children(crate::domain::ROOT).to_vec();
    let top_of: Vec<NodeId> = leaves
        .iter()
        .map(|&l| *top.iter().find(|&&t| schema.is_ancestor_or_self(t, l)).expect("leaf under a top node"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut units = Vec::with_capacity(cfg.units);
    let mut labels = Vec::new();

    for t in 0..cfg.units {
        let season = cfg.seasonal(t);
        let hot = (cfg.churn_period > 0).then(|| top[(t / cfg.churn_period) % top.len()]);
        let mut counts = UnitCounts::new();
        for (i, &leaf) in leaves.iter().enumerate() {
            let mut lambda = cfg.base_rate * season;
            if hot == Some(top_of[i]) {
                lambda *= cfg.churn_boost;
            }
            let mut spiked = 1.0;
            for (node, s) in &spikes {
                if (s.start..s.start + s.duration).contains(&t) && schema.is_ancestor_or_self(*node, leaf) {
                    spiked *= s.multiplier;
                }
            }
            // Zero-inflate the baseline so P(count = 0) hits the target;
            // spiked units skip it so labelled bursts are never erased.
            let keep = if spiked != 1.0 || cfg.sparsity == 0.0 {
                true
            } else {
                let p0 = (-lambda).exp();
                let pi = if p0 >= cfg.sparsity { 0.0 } else { (cfg.sparsity - p0) / (1.0 - p0) };
                rng.random::<f64>() >= pi
            };
            let c = poisson(&mut rng, lambda * spiked);
            if keep {
                counts.add(leaf, c);
            }
        }
        units.push(counts);
    }
    for (node, s) in &spikes {
        for t in s.start..(s.start + s.duration).min(cfg.units) {
            labels.push(Label {
                unit_start: cfg.start + t as i64 * cfg.timeunit,
                node: *node,
            });
        }
    }
    labels.sort();
    labels.dedup();
    Ok(LabeledStream {
        schema,
        units,
        labels,
        timeunit: cfg.timeunit,
        start: cfg.start,
        seed: cfg.seed,
    })
}
