//! Hardware-prefetcher study: the compiled projection under the six
//! on/off configurations. Requires root plus the `msr` kernel module and
//! an explicit privilege acknowledgment; without them the run matrix is
//! printed with each run annotated "default prefetchers".
//!
//!     sudo modprobe msr
//!     sudo cargo run --release --example prefetcher_study -- --i-have-privilege

use olaplab::driver::{run, Engine, RunSpec};
use olaplab::profiler::{prefetch, PrefetcherConfig};
use olaplab::query::QuerySpec;

fn main() -> olaplab::Result<()> {
    let acknowledged = std::env::args().any(|a| a == "--i-have-privilege");
    if !acknowledged {
        println!("pass --i-have-privilege to actually toggle MSR 0x1a4 (needs root)");
    }
    if !prefetch::msr_available() {
        println!("note: no /dev/cpu/*/msr access; runs execute under default prefetchers\n");
    }

    println!(
        "{:<10} {:>12} {:>12} {:>16}",
        "config", "ms/iter", "est GB/s", "effective mask"
    );
    for config in PrefetcherConfig::ALL {
        let mut spec = RunSpec::new(
            Engine::Compiled,
            QuerySpec::Projection { degree: 4 },
            2.0,
            42,
        );
        spec.prefetchers = Some(config);
        spec.privilege_acknowledged = acknowledged;
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
        println!(
            "{:<10} {:>12.3} {:>12.2} {:>16}",
            config.as_str(),
            result.median_secs_per_iter * 1e3,
            est,
            result.prefetchers
        );
    }
    Ok(())
}
