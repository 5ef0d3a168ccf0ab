//! The `hierwatch` command line: `run`, `compare`, `seasonality`, `gen`
//! and `eval`.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for unreadable or
//! invalid input.

pub mod files;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::detect::{compare_with_reference, score_vs_oracle};
use crate::domain::{CategoryPath, DetectorConfig, HierarchySchema, NodeId, SplitRule};
use crate::pipeline::{assemble_units, make_detector, run_units, series_error, Algorithm, RunOutput};
use crate::seasonality::{atrous_decompose, dft_magnitude, scale_period, seasonal_weight, spectral_peaks};
use crate::synth::generate;

use files::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hierwatch", about = "Anomaly detection over hierarchical event streams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// Detector config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reference levels below the root.
    #[arg(long = "h")]
    h: Option<usize>,
    /// Split rule: uniform, last_time_unit, long_term_history or ewma(rate).
    #[arg(long)]
    rule: Option<SplitRule>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Detect anomalies in a stream file.
    Run {
        stream: PathBuf,
        #[command(flatten)]
        opts: Overrides,
        #[arg(long, default_value = "ada")]
        algo: Algorithm,
        /// Report file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the heavy-hitter set of every unit to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run both algorithms and compare timings, series and detections.
    Compare {
        stream: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Spectral and wavelet analysis of the stream's total counts.
    Seasonality {
        stream: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        max_scale: usize,
    },
    /// Generate a synthetic stream and its anomaly labels.
    Gen {
        /// Generator config file; defaults when absent.
        config: Option<PathBuf>,
        /// Output prefix: writes PREFIX.stream and PREFIX.labels.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a report against reference anomaly labels.
    Eval {
        report: PathBuf,
        labels: PathBuf,
        /// Trace from the same run, used to count quiet heavy hitters.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

struct Failure(i32, String);

fn data<E: std::fmt::Display>(ctx: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure(EXIT_DATA, format!("{ctx}: {e}"))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(data(path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(data(path.display()))
}

fn load_config(path: Option<&Path>) -> Result<DetectorConfig, Failure> {
    match path {
        Some(p) => parse_config(&read(p)?).map_err(data(p.display())),
        None => Ok(DetectorConfig::default()),
    }
}

fn configure(opts: &Overrides) -> Result<DetectorConfig, Failure> {
    let mut cfg = load_config(opts.config.as_deref())?;
    if let Some(h) = opts.h {
        cfg.ref_levels = h;
    }
    if let Some(r) = opts.rule {
        cfg.split_rule = r;
    }
    cfg.validate().map_err(data("config"))?;
    Ok(cfg.effective())
}

fn load_stream(path: &Path) -> Result<(StreamFile, std::time::Duration), Failure> {
    let t = Instant::now();
    let s = parse_stream(&read(path)?).map_err(data(path.display()))?;
    Ok((s, t.elapsed()))
}

fn run_algo(algo: Algorithm, schema: &Arc<HierarchySchema>, cfg: &DetectorConfig, s: &StreamFile) -> Result<RunOutput, Failure> {
    let t = Instant::now();
    let (first, units, late) = assemble_units(&s.records, cfg.timeunit, cfg.start);
    let bucketing = t.elapsed();
    let mut det = make_detector(algo, Arc::clone(schema), cfg).map_err(data("detector"))?;
    let mut out = run_units(det.as_mut(), cfg, first, &units).map_err(data("run"))?;
    out.times.reading += bucketing;
    out.late_records = late;
    Ok(out)
}

fn cmd_run(
    stream: &Path,
    opts: &Overrides,
    algo: Algorithm,
    out_path: Option<&Path>,
    trace: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let cfg = configure(opts)?;
    let (s, _) = load_stream(stream)?;
    let schema = Arc::new(s.schema.clone());
    let res = run_algo(algo, &schema, &cfg, &s)?;
    let report = write_report(&schema, &res.report_events(&schema));
    if let Some(t) = trace {
        write(t, &write_trace(&schema, &res.instances))?;
    }
    match out_path {
        Some(p) => write(p, &report)?,
        None => out.write_all(report.as_bytes()).map_err(data("stdout"))?,
    }
    Ok(())
}

fn cmd_compare(stream: &Path, opts: &Overrides, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = configure(opts)?;
    let (s, reading) = load_stream(stream)?;
    let schema = Arc::new(s.schema.clone());
    let sta = run_algo(Algorithm::Sta, &schema, &cfg, &s)?;
    let ada = run_algo(Algorithm::Ada, &schema, &cfg, &s)?;
    let (_, units, _) = assemble_units(&s.records, cfg.timeunit, cfg.start);
    let err = series_error(Arc::clone(&schema), &cfg, &units).map_err(data("run"))?;

    let keys = |r: &RunOutput| -> BTreeSet<(NodeId, i64)> {
        r.instances.iter().flat_map(|i| i.events.iter().map(|e| e.key())).collect()
    };
    let truth = keys(&sta);
    let negatives: BTreeSet<(NodeId, i64)> = sta
        .instances
        .iter()
        .flat_map(|i| i.quiet_members().into_iter().map(move |n| (n, i.unit_start)))
        .collect();
    let scores = score_vs_oracle(&keys(&ada), &truth, &negatives);

    let mut text = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(text, "instances\t{}", sta.instances.len());
    let _ = writeln!(text, "stage\tsta_seconds\tada_seconds");
    let names = crate::pipeline::StageTimes::NAMES;
    let (st, at) = (sta.times.as_array(), ada.times.as_array());
    for i in 0..4 {
        let extra = if i == 0 { reading } else { Default::default() };
        let _ = writeln!(text, "{}\t{:.6}\t{:.6}", names[i], (st[i] + extra).as_secs_f64(), (at[i] + extra).as_secs_f64());
    }
    let _ = writeln!(text, "Total\t{:.6}\t{:.6}", (sta.times.total() + reading).as_secs_f64(), (ada.times.total() + reading).as_secs_f64());
    let _ = writeln!(text, "peak_live_series\t{}\t{}", sta.peak_live_series, ada.peak_live_series);
    let _ = writeln!(text, "mean_abs_series_error\t{:.6}", err);
    let _ = writeln!(text, "accuracy\t{:.6}", scores.accuracy);
    let _ = writeln!(text, "precision\t{:.6}", scores.precision);
    let _ = writeln!(text, "recall\t{:.6}", scores.recall);
    out.write_all(text.as_bytes()).map_err(data("stdout"))
}

fn cmd_seasonality(stream: &Path, config: Option<&Path>, max_scale: usize, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load_config(config)?.effective();
    let (s, _) = load_stream(stream)?;
    let (_, units, _) = assemble_units(&s.records, cfg.timeunit, cfg.start);
    let take = if units.len() >= cfg.window { cfg.window } else { units.len() };
    let series: Vec<f64> = units[..take].iter().map(|u| u.total() as f64).collect();
    let spectrum = dft_magnitude(&series).map_err(data("seasonality"))?;
    let peaks = spectral_peaks(&spectrum);

    use std::fmt::Write as _;
    let mut text = String::new();
    let _ = writeln!(text, "units\t{}", series.len());
    let _ = writeln!(text, "period_units\tmagnitude");
    for p in peaks.iter().take(5) {
        let _ = writeln!(text, "{:.2}\t{:.4}", p.period, p.magnitude);
    }
    let mut scales = max_scale.max(1);
    while scales > 1 && series.len() <= 4 << scales {
        scales -= 1;
    }
    if let Ok(w) = atrous_decompose(&series, scales) {
        let _ = writeln!(text, "scale\tcentre_period\tenergy");
        for (j, e) in w.energies.iter().enumerate() {
            let _ = writeln!(text, "{}\t{:.1}\t{:.4}", j + 1, scale_period(j + 1), e);
        }
    }
    let periods = cfg.period_units();
    let pair = if periods.len() == 2 {
        Some((periods[0] as f64, periods[1] as f64))
    } else if peaks.len() >= 2 {
        let (a, b) = (peaks[0].period, peaks[1].period);
        Some((a.min(b), a.max(b)))
    } else {
        None
    };
    let xi = pair.map(|(d, w)| seasonal_weight(&spectrum, d, w)).unwrap_or(1.0);
    let _ = writeln!(text, "xi\t{xi:.4}");
    out.write_all(text.as_bytes()).map_err(data("stdout"))
}

fn cmd_gen(config: Option<&Path>, prefix: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut g = match config {
        Some(p) => parse_generator_config(&read(p)?).map_err(data(p.display()))?,
        None => Default::default(),
    };
    if let Some(s) = seed {
        g.seed = s;
    }
    let stream = generate(&g).map_err(data("generator"))?;
    let with_ext = |ext: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    write(&with_ext(".stream"), &write_stream(&stream.schema, &stream.records()))?;
    write(&with_ext(".labels"), &write_labels(&stream.schema, &stream.labels))
}

fn cmd_eval(report: &Path, labels: &Path, trace: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    let found = parse_report(&read(report)?).map_err(data(report.display()))?;
    let refs = parse_labels(&read(labels)?).map_err(data(labels.display()))?;
    let traced = match trace {
        Some(t) => parse_trace(&read(t)?).map_err(data(t.display()))?,
        None => Vec::new(),
    };
    let mut paths: BTreeSet<CategoryPath> = BTreeSet::new();
    let all = found
        .iter()
        .map(|(_, p)| p)
        .chain(refs.iter().map(|(_, p)| p))
        .chain(traced.iter().flat_map(|(_, m)| m.iter()));
    for p in all.filter(|p| p.as_str() != "*") {
        paths.insert(p.parse().map_err(data(p))?);
    }
    let schema = HierarchySchema::from_paths(paths.iter()).map_err(data("paths"))?;
    let resolve = |v: &[(i64, String)]| -> Result<Vec<(NodeId, i64)>, Failure> {
        v.iter()
            .map(|(t, p)| parse_node(&schema, p).map(|n| (n, *t)).map_err(|m| Failure(EXIT_DATA, m)))
            .collect()
    };
    let detected = resolve(&found)?;
    let reference = resolve(&refs)?;
    let flagged: BTreeSet<(NodeId, i64)> = detected.iter().copied().collect();
    let mut quiet = Vec::new();
    for (t, members) in &traced {
        for m in members {
            let n = parse_node(&schema, m).map_err(|e| Failure(EXIT_DATA, e))?;
            if !flagged.contains(&(n, *t)) {
                quiet.push((n, *t));
            }
        }
    }
    let r = compare_with_reference(&schema, &detected, &reference, &quiet);
    let text = format!(
        "TA\t{}\nMA\t{}\nNA\t{}\nTN\t{}\ntype1\t{:.4}\ntype2\t{:.4}\ntype3\t{:.4}\n",
        r.true_alarms,
        r.missed,
        r.new_anomalies,
        r.true_negatives,
        r.type1(),
        r.type2(),
        r.type3()
    );
    out.write_all(text.as_bytes()).map_err(data("stdout"))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Normal output goes to `out`, diagnostics to `err`.
pub fn main_with(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let res = match &cli.cmd {
        Cmd::Run {
            stream,
            opts,
            algo,
            out: report,
            trace,
        } => cmd_run(stream, opts, *algo, report.as_deref(), trace.as_deref(), out),
        Cmd::Compare { stream, opts } => cmd_compare(stream, opts, out),
        Cmd::Seasonality {
            stream,
            config,
            max_scale,
        } => cmd_seasonality(stream, config.as_deref(), *max_scale, out),
        Cmd::Gen { config, out: prefix, seed } => cmd_gen(config.as_deref(), prefix, *seed),
        Cmd::Eval { report, labels, trace } => cmd_eval(report, labels, trace.as_deref(), out),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}
