//! The selection micro-benchmark: three date predicates over the degree-4
//! sum, per-predicate selectivity swept over {0.1, 0.5, 0.9}, branched vs
//! predicated, both engines. With counters available the table shows
//! mispredictions per input row (hardest at 50%; predication eliminates
//! them); without counters it falls back to timings.
//!
//!     cargo run --release --example selection_mispredictions

use olaplab::driver::{run, Engine, RunSpec};
use olaplab::profiler;
use olaplab::query::{QuerySpec, SelectionMode};

fn main() -> olaplab::Result<()> {
    let counters = profiler::perf::counters_available();
    if let Err(e) = &counters {
        println!("note: {e}; reporting timings only\n");
    }

    println!(
        "{:<12} {:<11} {:>5} {:>12} {:>16} {:>14}",
        "engine", "mode", "p", "ms/iter", "mispred/row", "matched"
    );
    for engine in [Engine::Compiled, Engine::Vectorized] {
        for mode in [SelectionMode::Branched, SelectionMode::Predicated] {
            for p in [0.1, 0.5, 0.9] {
                let mut spec =
                    RunSpec::new(engine, QuerySpec::Selection { p, mode }, 0.1, 42);
                spec.exact_selectivity = true; // exact match fractions
                spec.repeats = 3;
                spec.warmup_secs = 0.2;
                spec.measure_secs = if counters.is_ok() { 1.5 } else { 0.5 };
                let result = run(&spec)?;

                let mispred = result
                    .repeats
                    .iter()
                    .filter_map(|r| {
                        let s = r.sample.as_ref()?;
                        let rows = r.iterations * result.rows_per_iter;
                        Some(s.branch_mispredictions? as f64 / rows as f64)
                    })
                    .next()
                    .map(|m| format!("{m:.5}"))
                    .unwrap_or_else(|| "-".into());
                let olaplab::query::QueryOutput::Scalar(s) = &result.output else {
                    unreachable!()
                };
                println!(
                    "{:<12} {:<11} {:>5} {:>12.3} {:>16} {:>14}",
                    engine.as_str(),
                    mode.as_str(),
                    p,
                    result.median_secs_per_iter * 1e3,
                    mispred,
                    s.rows_matched
                );
            }
        }
        println!();
    }
    Ok(())
}
