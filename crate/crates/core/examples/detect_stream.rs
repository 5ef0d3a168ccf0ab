//! Streams records through the adaptive detector one timeunit at a time and
//! prints anomalies as each unit closes.
//!
//! cargo run --example detect_stream

use std::sync::Arc;

use hierwatch::ada::Ada;
use hierwatch::detect::{detect, remove_redundant, AnomalyEvent};
use hierwatch::pipeline::Detector;
use hierwatch::synth::{generate, GeneratorConfig, Spike};
use hierwatch::windowing::UnitAssembler;
use hierwatch::DetectorConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stream = generate(&GeneratorConfig {
        fanouts: vec![3, 4],
        base_rate: 20.0,
        units: 3 * 96,
        spikes: vec![Spike {
            path: "a1/b2".into(),
            start: 250,
            duration: 2,
            multiplier: 10.0,
        }],
        ..GeneratorConfig::default()
    })?;
    let cfg = DetectorConfig {
        window: 2 * 96,
        ..DetectorConfig::default()
    };
    let schema = Arc::new(stream.schema.clone());
    let mut ada = Ada::new(Arc::clone(&schema), &cfg)?;

    let mut assembler = UnitAssembler::new(stream.start, cfg.timeunit);
    let mut history = Vec::new();
    let mut on_unit = |start: i64, counts| -> Result<(), Box<dyn std::error::Error>> {
        if history.len() < cfg.window {
            history.push(counts);
            if history.len() == cfg.window {
                ada.bootstrap(&history)?;
                println!("bootstrapped on {} units, {} heavy hitters", cfg.window, ada.shhh().len());
            }
            return Ok(());
        }
        let out = ada.step(&counts);
        let events: Vec<AnomalyEvent> = out
            .observations
            .iter()
            .filter(|o| detect(o.actual.to_f64(), o.forecast, cfg.rt, cfg.dt))
            .map(|o| AnomalyEvent::new(o.node, start, o.actual, o.forecast))
            .collect();
        for e in remove_redundant(&schema, &events) {
            println!(
                "{}  {:<8} actual {:>5.0}  forecast {:>7.2}  ratio {:.2}",
                hierwatch::cli::files::format_time(e.unit_start),
                schema.display_path(e.node),
                e.actual.to_f64(),
                e.forecast,
                e.ratio
            );
        }
        Ok(())
    };
    for r in stream.records() {
        for (start, counts) in assembler.push(r)? {
            on_unit(start, counts)?;
        }
    }
    let (start, counts) = assembler.finish();
    on_unit(start, counts)?;
    println!("labelled spike units:");
    for l in &stream.labels {
        println!("{}  {}", hierwatch::cli::files::format_time(l.unit_start), schema.display_path(l.node));
    }
    Ok(())
}
