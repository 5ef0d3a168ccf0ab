//! Scores detections against a reference anomaly set: a reference anomaly
//! counts as found when a same-unit detection sits at or below it.
//!
//! cargo run --example evaluate_reference

use hierwatch::detect::compare_with_reference;
use hierwatch::{CategoryPath, HierarchySchema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let paths: Vec<CategoryPath> = ["east/co1/dslam1", "east/co1/dslam2", "east/co2/dslam3", "west/co3/dslam4"]
        .iter()
        .map(|p| p.parse())
        .collect::<Result<_, _>>()?;
    let schema = HierarchySchema::from_paths(paths.iter())?;
    let id = |p: &str| -> Result<_, Box<dyn std::error::Error>> { Ok(schema.resolve_path(&p.parse()?)?) };

    // The reference flags whole regions; the detector points at offices.
    let reference = [(id("east")?, 0), (id("west")?, 900)];
    let detected = [(id("east/co1")?, 0), (id("east/co2/dslam3")?, 1800)];
    let quiet = [(id("west/co3")?, 0), (id("east/co1")?, 900)];

    let r = compare_with_reference(&schema, &detected, &reference, &quiet);
    println!("true alarms     {}", r.true_alarms);
    println!("missed          {}", r.missed);
    println!("new anomalies   {}", r.new_anomalies);
    println!("true negatives  {}", r.true_negatives);
    println!("type 1 {:.3}  type 2 {:.3}  type 3 {:.3}", r.type1(), r.type2(), r.type3());
    Ok(())
}
