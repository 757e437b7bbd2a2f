//! The projection micro-benchmark: SUM over 1..4 lineitem columns in both
//! engines, with per-run bandwidth estimates against the calibrated
//! per-core sequential ceiling. The fused compiled loop approaches the
//! ceiling as projectivity grows; the vectorized engine's materialized
//! intermediates cut its memory pressure.
//!
//!     cargo run --release --example projection_bandwidth

use olaplab::driver::{run, Engine, RunSpec};
use olaplab::profiler::calibrate::sequential_read_gbs;
use olaplab::query::QuerySpec;

fn main() -> olaplab::Result<()> {
    let sf = 2.0; // out of cache
    println!("calibrating per-core sequential read bandwidth...");
    let ceiling = sequential_read_gbs(1)?;
    println!("per-core sequential ceiling: {ceiling:.2} GB/s\n");

    println!(
        "{:<12} {:>7} {:>14} {:>12} {:>12} {:>9}",
        "engine", "degree", "sum", "ms/iter", "est GB/s", "of ceiling"
    );
    for engine in [Engine::Compiled, Engine::Vectorized] {
        for degree in 1..=4u8 {
            let mut spec = RunSpec::new(engine, QuerySpec::Projection { degree }, sf, 42);
            spec.repeats = 3;
            spec.warmup_secs = 0.2;
            spec.measure_secs = 1.5;
            let result = run(&spec)?;
            let est = result
                .repeats
                .iter()
                .map(|r| r.bandwidth.estimated_gbs)
                .sum::<f64>()
                / result.repeats.len() as f64;
            let olaplab::query::QueryOutput::Scalar(s) = &result.output else {
                unreachable!()
            };
            println!(
                "{:<12} {:>7} {:>14} {:>12.3} {:>12.2} {:>8.0}%",
                engine.as_str(),
                degree,
                s.value,
                result.median_secs_per_iter * 1e3,
                est,
                est / ceiling * 100.0
            );
        }
        println!();
    }
    Ok(())
}
