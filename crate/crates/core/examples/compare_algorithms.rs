//! Runs the batch oracle and the adaptive detector over the same churning
//! stream and compares stage times, series error and detections.
//!
//! cargo run --release --example compare_algorithms

use std::collections::BTreeSet;
use std::sync::Arc;

use hierwatch::detect::score_vs_oracle;
use hierwatch::pipeline::{run_records, series_error, Algorithm, RunOutput, StageTimes};
use hierwatch::synth::{generate, GeneratorConfig};
use hierwatch::{DetectorConfig, NodeId, SplitRule};

fn keys(r: &RunOutput) -> BTreeSet<(NodeId, i64)> {
    r.instances.iter().flat_map(|i| i.events.iter().map(|e| e.key())).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stream = generate(&GeneratorConfig {
        fanouts: vec![4, 4, 4],
        base_rate: 1.5,
        diurnal_period: 24,
        weekly_amplitude: 0.0,
        churn_period: 12,
        churn_boost: 5.0,
        sparsity: 0.3,
        units: 1000,
        ..GeneratorConfig::default()
    })?;
    let schema = Arc::new(stream.schema.clone());
    let records = stream.records();

    println!("h  rule                stage-time ratio  series error  accuracy  precision  recall");
    for h in [0, 2, 3] {
        for rule in [SplitRule::Uniform, SplitRule::LongTermHistory, SplitRule::Ewma(0.4)] {
            let cfg = DetectorConfig {
                window: 96,
                seasonal_periods: vec![6 * 3600],
                ref_levels: h,
                split_rule: rule,
                ..DetectorConfig::default()
            };
            let sta = run_records(Algorithm::Sta, Arc::clone(&schema), &cfg, &records)?;
            let ada = run_records(Algorithm::Ada, Arc::clone(&schema), &cfg, &records)?;
            let (_, units, _) = hierwatch::pipeline::assemble_units(&records, cfg.timeunit, None);
            let err = series_error(Arc::clone(&schema), &cfg, &units)?;
            let negatives = sta
                .instances
                .iter()
                .flat_map(|i| i.quiet_members().into_iter().map(move |n| (n, i.unit_start)))
                .collect();
            let s = score_vs_oracle(&keys(&ada), &keys(&sta), &negatives);
            let t = |x: &StageTimes| x.excluding_reading().as_secs_f64();
            println!(
                "{h}  {:<18}  {:>16.1}  {err:>12.4}  {:>8.4}  {:>9.4}  {:>6.4}",
                rule.to_string(),
                t(&sta.times) / t(&ada.times),
                s.accuracy,
                s.precision,
                s.recall
            );
        }
    }
    Ok(())
}
