//! Shows the heavy-hitter set following traffic as it moves through the
//! hierarchy, with series split and merged instead of rebuilt.
//!
//! cargo run --example adaptive_hierarchy

use std::sync::Arc;

use hierwatch::ada::Ada;
use hierwatch::pipeline::Detector;
use hierwatch::windowing::UnitCounts;
use hierwatch::domain::ModelKind;
use hierwatch::{CategoryPath, DetectorConfig, HierarchySchema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let paths: Vec<CategoryPath> = ["tv/hd/ch1", "tv/hd/ch2", "tv/sd/ch3", "net/dsl/port1", "net/dsl/port2", "net/fiber/port3"]
        .iter()
        .map(|p| p.parse())
        .collect::<Result<_, _>>()?;
    let schema = Arc::new(HierarchySchema::from_paths(paths.iter())?);
    let cfg = DetectorConfig {
        timeunit: 60,
        shift: 60,
        window: 6,
        theta: 10,
        seasonal_periods: vec![],
        model: ModelKind::Ewma,
        ref_levels: 1,
        ..DetectorConfig::default()
    };
    let leaf = |p: &str| schema.resolve_leaf(&p.parse().unwrap()).unwrap();
    let unit = |xs: &[(&str, u64)]| -> UnitCounts { xs.iter().map(|&(p, c)| (leaf(p), c)).collect() };

    // Calm traffic spread thin, then one channel heats up, then a port.
    let calm = unit(&[("tv/hd/ch1", 3), ("tv/sd/ch3", 4), ("net/dsl/port1", 4), ("net/fiber/port3", 3)]);
    let hot_channel = unit(&[("tv/hd/ch1", 25), ("tv/sd/ch3", 4), ("net/dsl/port1", 4)]);
    let hot_port = unit(&[("tv/hd/ch1", 2), ("net/dsl/port2", 18), ("net/dsl/port1", 3)]);

    let mut ada = Ada::new(Arc::clone(&schema), &cfg)?;
    ada.enable_audit();
    ada.bootstrap(&vec![calm.clone(); cfg.window])?;
    let show = |label: &str, ada: &Ada| {
        let set: Vec<String> = ada.shhh().iter().map(|&n| schema.display_path(n)).collect();
        println!("{label:<12} heavy hitters {set:?}");
    };
    show("calm", &ada);
    for (label, u) in [("hot channel", &hot_channel), ("hot channel", &hot_channel), ("hot port", &hot_port), ("calm", &calm)] {
        let out = ada.step(u);
        show(label, &ada);
        for o in &out.observations {
            println!("    {:<14} actual {:>5.1} forecast {:>6.2}", schema.display_path(o.node), o.actual.to_f64(), o.forecast);
        }
    }
    let a = ada.audit().expect("audit enabled");
    println!(
        "{} splits, {} merges, {} reference corrections, {} violations",
        a.splits,
        a.merges,
        a.reference_corrections,
        a.violations.len()
    );
    Ok(())
}
