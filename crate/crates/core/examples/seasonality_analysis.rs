//! Finds the daily and weekly periods of a synthetic stream with the
//! spectrum and the à-trous wavelet energies, then derives the seasonal
//! mixing weight.
//!
//! cargo run --example seasonality_analysis

use hierwatch::seasonality::{atrous_decompose, dft_magnitude, dominant_periods, nearest_scale, scale_period, seasonal_weight};
use hierwatch::synth::{generate, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stream = generate(&GeneratorConfig {
        units: 4 * 672,
        weekly_amplitude: 0.4,
        ..GeneratorConfig::default()
    })?;
    let totals = stream.totals();

    let spectrum = dft_magnitude(&totals)?;
    let periods = dominant_periods(&spectrum, 2);
    println!("dominant periods (units): {periods:.1?}");
    println!("noise floor: {:.4}", spectrum.noise_floor());

    let w = atrous_decompose(&totals, 9)?;
    for (j, e) in w.energies.iter().enumerate() {
        println!("scale {:>2}  centre {:>6.1}  energy {:>12.1}", j + 1, scale_period(j + 1), e);
    }
    println!("energy peaks at scale {}, daily period maps to {}", w.peak_scale(), nearest_scale(96.0));
    println!("xi = {:.3}", seasonal_weight(&spectrum, 96.0, 672.0));
    Ok(())
}
