//! Text formats read and written by the command-line tool.
//!
//! * stream: `#path<TAB>a/b/c` header lines declaring the leaves, then
//!   `timestamp<TAB>a/b/c` body lines;
//! * config: flat `key = value` lines, `#` starts a comment;
//! * report: one tab-separated `key:value` record per event;
//! * labels: `timestamp<TAB>path` lines;
//! * trace: `unit_start:<ts><TAB>shhh:<path>,<path>...` per unit.
//!
//! Timestamps are RFC 3339 (`2024-01-01T00:00:00Z`); a value without an
//! offset is read as UTC.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, NaiveDateTime, Utc};
use thiserror::Error;

use crate::detect::AnomalyEvent;
use crate::domain::{CategoryPath, DetectorConfig, HierarchySchema, ModelKind, NodeId, Record, SplitRule, ROOT};
use crate::pipeline::InstanceReport;
use crate::synth::{GeneratorConfig, Label, Spike};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError {
        line,
        message: message.into(),
    })
}

pub fn parse_time(s: &str) -> Result<i64, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc().timestamp());
        }
    }
    Err(format!("bad timestamp `{s}`"))
}

pub fn format_time(t: i64) -> String {
    match DateTime::<Utc>::from_timestamp(t, 0) {
        Some(d) => d.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

/// Reads `*` as the root, anything else as a category path.
pub fn parse_node(schema: &HierarchySchema, s: &str) -> Result<NodeId, String> {
    if s == "*" {
        return Ok(ROOT);
    }
    let p: CategoryPath = s.parse().map_err(|e| format!("{s}: {e}"))?;
    schema.resolve_path(&p).map_err(|e| format!("{s}: {e}"))
}

/// A parsed stream file.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFile {
    pub schema: HierarchySchema,
    pub records: Vec<Record>,
}

pub fn parse_stream(text: &str) -> Result<StreamFile, FormatError> {
    let mut declared = Vec::new();
    let mut body = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#path\t") {
            match rest.trim().parse::<CategoryPath>() {
                Ok(p) => declared.push(p),
                Err(e) => return err(n, e.to_string()),
            }
        } else if line.starts_with('#') {
            continue;
        } else {
            body.push((n, line));
        }
    }
    if declared.is_empty() {
        return err(1, "no `#path` header lines");
    }
    let schema = match HierarchySchema::from_paths(declared.iter()) {
        Ok(s) => s,
        Err(e) => return err(1, e.to_string()),
    };
    let mut records = Vec::with_capacity(body.len());
    for (n, line) in body {
        let Some((ts, path)) = line.split_once('\t') else {
            return err(n, "expected `timestamp<TAB>path`");
        };
        let timestamp = parse_time(ts).or_else(|m| err(n, m))?;
        let path: CategoryPath = path.trim().parse().or_else(|e: crate::domain::SchemaError| err(n, e.to_string()))?;
        match schema.record(&path, timestamp) {
            Ok(r) => records.push(r),
            Err(e) => return err(n, format!("{path}: {e}")),
        }
    }
    Ok(StreamFile { schema, records })
}

pub fn write_stream(schema: &HierarchySchema, records: &[Record]) -> String {
    let mut out = String::new();
    for p in schema.leaf_paths() {
        let _ = writeln!(out, "#path\t{p}");
    }
    for r in records {
        let _ = writeln!(out, "{}\t{}", format_time(r.timestamp), schema.display_path(r.leaf));
    }
    out
}

/// `key = value` pairs in file order, with their line numbers.
fn key_values(text: &str) -> Result<Vec<(usize, String, String)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(i + 1, format!("expected `key = value`, got `{line}`"));
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Seconds, or a number with an `s`, `m`, `h`, `d` or `w` suffix.
pub fn parse_duration(v: &str) -> Result<i64, String> {
    let v = v.trim();
    let (num, mult) = match v.char_indices().last() {
        Some((i, 's')) => (&v[..i], 1),
        Some((i, 'm')) => (&v[..i], 60),
        Some((i, 'h')) => (&v[..i], 3600),
        Some((i, 'd')) => (&v[..i], 86_400),
        Some((i, 'w')) => (&v[..i], 604_800),
        _ => (v, 1),
    };
    num.trim()
        .parse::<i64>()
        .map(|n| n * mult)
        .map_err(|_| format!("bad duration `{v}`"))
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad number `{v}`"))
}

/// Applies one config key to `cfg`.
pub fn set_config_key(cfg: &mut DetectorConfig, key: &str, v: &str) -> Result<(), String> {
    match key {
        "timeunit" => cfg.timeunit = parse_duration(v)?,
        "shift" => cfg.shift = parse_duration(v)?,
        "window" => cfg.window = num(v)?,
        "theta" => cfg.theta = num(v)?,
        "rt" => cfg.rt = num(v)?,
        "dt" => cfg.dt = num(v)?,
        "alpha" => cfg.alpha = num(v)?,
        "beta" => cfg.beta = num(v)?,
        "gamma" => cfg.gamma = num(v)?,
        "seasonal_periods" => {
            cfg.seasonal_periods = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(parse_duration)
                .collect::<Result<_, _>>()?
        }
        "xi" => cfg.xi = num(v)?,
        "split_rule" => cfg.split_rule = v.parse::<SplitRule>().map_err(|e| e.to_string())?,
        "ref_levels" => cfg.ref_levels = num(v)?,
        "timescale_base" => cfg.timescale_base = num(v)?,
        "timescales" => cfg.timescales = num(v)?,
        "model" => {
            cfg.model = match v {
                "holt_winters" => ModelKind::HoltWinters,
                "ewma" => ModelKind::Ewma,
                _ => return Err(format!("unknown model `{v}`")),
            }
        }
        "start" => cfg.start = if v == "none" { None } else { Some(parse_time(v).or_else(|_| num(v))?) },
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Reads a detector config on top of the defaults.
pub fn parse_config(text: &str) -> Result<DetectorConfig, FormatError> {
    let mut cfg = DetectorConfig::default();
    for (n, k, v) in key_values(text)? {
        set_config_key(&mut cfg, &k, &v).or_else(|m| err(n, m))?;
    }
    Ok(cfg)
}

pub fn write_config(cfg: &DetectorConfig) -> String {
    let periods: Vec<String> = cfg.seasonal_periods.iter().map(|p| p.to_string()).collect();
    let model = match cfg.model {
        ModelKind::HoltWinters => "holt_winters",
        ModelKind::Ewma => "ewma",
    };
    let mut out = String::new();
    let _ = writeln!(out, "timeunit = {}", cfg.timeunit);
    let _ = writeln!(out, "shift = {}", cfg.shift);
    let _ = writeln!(out, "window = {}", cfg.window);
    let _ = writeln!(out, "theta = {}", cfg.theta);
    let _ = writeln!(out, "rt = {}", cfg.rt);
    let _ = writeln!(out, "dt = {}", cfg.dt);
    let _ = writeln!(out, "alpha = {}", cfg.alpha);
    let _ = writeln!(out, "beta = {}", cfg.beta);
    let _ = writeln!(out, "gamma = {}", cfg.gamma);
    let _ = writeln!(out, "seasonal_periods = {}", periods.join(","));
    let _ = writeln!(out, "xi = {}", cfg.xi);
    let _ = writeln!(out, "split_rule = {}", cfg.split_rule);
    let _ = writeln!(out, "ref_levels = {}", cfg.ref_levels);
    let _ = writeln!(out, "timescale_base = {}", cfg.timescale_base);
    let _ = writeln!(out, "timescales = {}", cfg.timescales);
    let _ = writeln!(out, "model = {model}");
    if let Some(s) = cfg.start {
        let _ = writeln!(out, "start = {}", format_time(s));
    }
    out
}

/// Reads a generator config on top of the defaults. `spike` may repeat,
/// each as `path,start,duration,multiplier`.
pub fn parse_generator_config(text: &str) -> Result<GeneratorConfig, FormatError> {
    let mut g = GeneratorConfig::default();
    for (n, k, v) in key_values(text)? {
        let r: Result<(), String> = (|| {
            match k.as_str() {
                "fanouts" => g.fanouts = v.split(',').map(|s| num(s.trim())).collect::<Result<_, _>>()?,
                "base_rate" => g.base_rate = num(&v)?,
                "diurnal_amplitude" => g.diurnal_amplitude = num(&v)?,
                "diurnal_phase" => g.diurnal_phase = num(&v)?,
                "diurnal_period" => g.diurnal_period = num(&v)?,
                "weekly_amplitude" => g.weekly_amplitude = num(&v)?,
                "weekly_period" => g.weekly_period = num(&v)?,
                "sparsity" => g.sparsity = num(&v)?,
                "churn_period" => g.churn_period = num(&v)?,
                "churn_boost" => g.churn_boost = num(&v)?,
                "units" => g.units = num(&v)?,
                "timeunit" => g.timeunit = parse_duration(&v)?,
                "start" => g.start = parse_time(&v).or_else(|_| num(&v))?,
                "seed" => g.seed = num(&v)?,
                "spike" => {
                    let f: Vec<&str> = v.split(',').map(str::trim).collect();
                    let [path, start, duration, multiplier] = f[..] else {
                        return Err("spike needs `path,start,duration,multiplier`".into());
                    };
                    g.spikes.push(Spike {
                        path: path.to_string(),
                        start: num(start)?,
                        duration: num(duration)?,
                        multiplier: num(multiplier)?,
                    });
                }
                _ => return Err(format!("unknown key `{k}`")),
            }
            Ok(())
        })();
        r.or_else(|m| err(n, m))?;
    }
    Ok(g)
}

/// Events sorted by unit start, then path.
pub fn write_report(schema: &HierarchySchema, events: &[AnomalyEvent]) -> String {
    let mut rows: Vec<(i64, String, &AnomalyEvent)> =
        events.iter().map(|e| (e.unit_start, schema.display_path(e.node), e)).collect();
    rows.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let mut out = String::new();
    for (t, path, e) in rows {
        let _ = writeln!(
            out,
            "unit_start:{}\tpath:{}\tactual:{}\tforecast:{:.4}\tratio:{:.4}\tdiff:{:.4}",
            format_time(t),
            path,
            e.actual,
            e.forecast,
            e.ratio,
            e.diff
        );
    }
    out
}

fn fields(line: &str) -> BTreeMap<&str, &str> {
    line.split('\t').filter_map(|kv| kv.split_once(':')).collect()
}

/// `(unit_start, path)` of every report line.
pub fn parse_report(text: &str) -> Result<Vec<(i64, String)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line);
        let (Some(t), Some(p)) = (f.get("unit_start"), f.get("path")) else {
            return err(i + 1, "missing unit_start or path");
        };
        out.push((parse_time(t).or_else(|m| err(i + 1, m))?, p.to_string()));
    }
    Ok(out)
}

pub fn write_labels(schema: &HierarchySchema, labels: &[Label]) -> String {
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{}\t{}", format_time(l.unit_start), schema.display_path(l.node));
    }
    out
}

/// Reads `timestamp<TAB>path` lines; report lines are accepted too.
pub fn parse_labels(text: &str) -> Result<Vec<(i64, String)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with("unit_start:") {
            out.extend(parse_report(line).or_else(|e| err(i + 1, e.message))?);
            continue;
        }
        let Some((t, p)) = line.split_once('\t') else {
            return err(i + 1, "expected `timestamp<TAB>path`");
        };
        out.push((parse_time(t).or_else(|m| err(i + 1, m))?, p.trim().to_string()));
    }
    Ok(out)
}

pub fn write_trace(schema: &HierarchySchema, instances: &[InstanceReport]) -> String {
    let mut out = String::new();
    for inst in instances {
        let mut paths: Vec<String> = inst.shhh.iter().map(|&n| schema.display_path(n)).collect();
        paths.sort();
        let _ = writeln!(out, "unit_start:{}\tshhh:{}", format_time(inst.unit_start), paths.join(","));
    }
    out
}

/// `(unit_start, member paths)` per trace line.
pub fn parse_trace(text: &str) -> Result<Vec<(i64, Vec<String>)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line);
        let (Some(t), Some(s)) = (f.get("unit_start"), f.get("shhh")) else {
            return err(i + 1, "missing unit_start or shhh");
        };
        let members = s.split(',').filter(|p| !p.is_empty()).map(str::to_string).collect();
        out.push((parse_time(t).or_else(|m| err(i + 1, m))?, members));
    }
    Ok(out)
}
