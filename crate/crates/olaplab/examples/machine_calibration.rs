//! Calibrate the machine: per-core and aggregate sequential/random read
//! bandwidth plus dependent-load latencies across the cache hierarchy.
//! Run on an otherwise idle machine.
//!
//!     cargo run --release --example machine_calibration [-- <cores>]

use olaplab::driver::physical_cores;
use olaplab::profiler::calibrate_machine;

fn main() -> olaplab::Result<()> {
    let cores: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().unwrap())
        .unwrap_or_else(physical_cores);
    println!("calibrating with up to {cores} worker(s); this takes a few seconds...");
    let profile = calibrate_machine(cores)?;
    println!();
    println!("sequential read  per-core {:>8.2} GB/s", profile.per_core_seq_gbs);
    println!("                 aggregate {:>7.2} GB/s", profile.per_socket_seq_gbs);
    println!("random read      per-core {:>8.2} GB/s", profile.per_core_rand_gbs);
    println!("                 aggregate {:>7.2} GB/s", profile.per_socket_rand_gbs);
    let l = &profile.cache_latencies;
    println!(
        "load-to-use latency (tsc cycles): L1 {:.1}  L2 {:.1}  L3 {:.1}  mem {:.1}",
        l.l1_cycles, l.l2_cycles, l.l3_cycles, l.mem_cycles
    );
    println!(
        "cores: {}   cacheline: {} B",
        profile.core_count, profile.cacheline_bytes
    );
    println!("\nas JSON:\n{}", serde_json::to_string_pretty(&profile).unwrap());
    Ok(())
}
