//! Generates a labelled synthetic stream and writes it in the command-line
//! file formats.
//!
//! cargo run --example generate_stream -- [OUTPUT_DIR]

use hierwatch::cli::files::{write_labels, write_stream};
use hierwatch::synth::{generate, GeneratorConfig, Spike};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(std::env::temp_dir);
    let cfg = GeneratorConfig {
        fanouts: vec![3, 3, 4],
        sparsity: 0.5,
        churn_period: 96,
        churn_boost: 3.0,
        spikes: vec![
            Spike {
                path: "a0/b1".into(),
                start: 1500,
                duration: 3,
                multiplier: 10.0,
            },
            Spike {
                path: "a2/b0/c3".into(),
                start: 2100,
                duration: 2,
                multiplier: 8.0,
            },
        ],
        ..GeneratorConfig::default()
    };
    let stream = generate(&cfg)?;
    let records = stream.records();
    let stream_path = dir.join("synthetic.stream");
    let labels_path = dir.join("synthetic.labels");
    std::fs::write(&stream_path, write_stream(&stream.schema, &records))?;
    std::fs::write(&labels_path, write_labels(&stream.schema, &stream.labels))?;
    println!(
        "{} nodes, {} leaves, {} units, {} records, {} labelled units",
        stream.schema.len(),
        stream.schema.leaves().count(),
        stream.units.len(),
        records.len(),
        stream.labels.len()
    );
    println!("wrote {} and {}", stream_path.display(), labels_path.display());
    Ok(())
}
