//! Morsel-parallel scaling: bandwidth of the compiled projection and the
//! large join as worker threads increase. Scan-heavy work saturates the
//! aggregate sequential bandwidth; the join's random probes leave it far
//! below the random-access ceiling.
//!
//!     cargo run --release --example parallel_scaling

use olaplab::driver::{physical_cores, run, Engine, RunSpec};
use olaplab::profiler::calibrate::{random_read_gbs, sequential_read_gbs};
use olaplab::query::{JoinSize, QuerySpec};

fn main() -> olaplab::Result<()> {
    let max = physical_cores();
    println!("calibrating aggregate bandwidth ceilings ({max} cores)...");
    let seq_ceiling = sequential_read_gbs(max)?;
    let rand_ceiling = random_read_gbs(max)?;
    println!("sequential {seq_ceiling:.2} GB/s, random {rand_ceiling:.2} GB/s\n");

    for (label, query, ceiling) in [
        (
            "compiled projection degree 4",
            QuerySpec::Projection { degree: 4 },
            seq_ceiling,
        ),
        (
            "compiled large join",
            QuerySpec::Join {
                size: JoinSize::Large,
            },
            rand_ceiling,
        ),
    ] {
        println!("{label}:");
        println!(
            "{:>8} {:>12} {:>12} {:>11}",
            "threads", "ms/iter", "est GB/s", "of ceiling"
        );
        for threads in 1..=max {
            let mut spec = RunSpec::new(Engine::Compiled, query, 2.0, 42);
            spec.threads = threads;
            spec.repeats = 3;
            spec.warmup_secs = 0.2;
            spec.measure_secs = 1.5;
            let result = run(&spec)?;
            let mut est: Vec<f64> = result
                .repeats
                .iter()
                .map(|r| r.bandwidth.estimated_gbs)
                .collect();
            est.sort_by(|a, b| a.total_cmp(b));
            let est = est[est.len() / 2];
            println!(
                "{threads:>8} {:>12.3} {:>12.2} {:>10.0}%",
                result.median_secs_per_iter * 1e3,
                est,
                est / ceiling * 100.0
            );
        }
        println!();
    }
    Ok(())
}
