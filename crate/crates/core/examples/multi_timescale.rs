//! Maintains coarser views of a series: every `base` appends at one scale
//! roll up into one value at the next, with amortised constant work.
//!
//! cargo run --example multi_timescale

use hierwatch::ada::Ladder;
use hierwatch::Mass;

fn main() {
    let (base, scales, len) = (4, 3, 32);
    let mut ladder = Ladder::new(base, scales, len, 0.3);
    let appends = 10_000u64;
    for t in 0..appends {
        let daily = 10.0 + 5.0 * (2.0 * std::f64::consts::PI * t as f64 / 96.0).sin();
        ladder.push(Mass::from_f64(daily));
    }
    for s in 0..ladder.scales() {
        let actual = ladder.actual(s);
        let last: Vec<String> = actual.iter().rev().take(4).map(|m| format!("{:.1}", m.to_f64())).collect();
        println!(
            "scale {s}: unit = {:>2} base units, {} values, newest {:?}, next forecast {:.1}",
            base.pow(s as u32),
            actual.len(),
            last,
            ladder.forecast(s).back().copied().unwrap_or(0.0)
        );
    }
    println!(
        "{} series updates for {appends} appends ({:.3} per append)",
        ladder.calls(),
        ladder.calls() as f64 / appends as f64
    );
}
