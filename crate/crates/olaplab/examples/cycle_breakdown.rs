//! Two-level cycle breakdown (retiring vs. five stall components) for a
//! set of workloads: synthetic kernels with known shapes plus the
//! micro-benchmarks on both engines. Needs performance-counter access;
//! otherwise it prints the capability notice and demonstrates the
//! breakdown arithmetic on synthetic samples.
//!
//!     cargo run --release --example cycle_breakdown

use olaplab::driver::{run, Engine, RunSpec};
use olaplab::profiler::{self, breakdown, BreakdownParams, CounterSample, EventMapping};
use olaplab::query::{JoinSize, QuerySpec, SelectionMode};

fn print_row(label: &str, b: &olaplab::profiler::CycleBreakdown) {
    println!(
        "{label:<28} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
        b.retiring, b.branch_misp, b.icache, b.decoding, b.dcache, b.execution, b.unknown
    );
}

fn header() {
    println!(
        "{:<28} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "workload", "retiring", "br_misp", "icache", "decode", "dcache", "exec", "unknown"
    );
}

fn main() -> olaplab::Result<()> {
    if let Err(e) = profiler::perf::counters_available() {
        println!("{e}\n");
        println!("demonstrating breakdown arithmetic on synthetic samples:\n");
        header();
        let mut retire_heavy = CounterSample::synthetic(1.0, BreakdownParams::default());
        retire_heavy.core_cycles = Some(1_000_000);
        retire_heavy.instructions_retired = Some(3_600_000);
        retire_heavy.branch_mispredictions = Some(0);
        retire_heavy.icache_miss_events = Some(0);
        retire_heavy.decode_stall_events = Some(20_000);
        retire_heavy.dcache_stall_events = Some(60_000);
        retire_heavy.execution_stall_events = Some(20_000);
        print_row("synthetic arithmetic-dense", &breakdown(&retire_heavy));

        let mut load_chain = CounterSample::synthetic(1.0, BreakdownParams::default());
        load_chain.core_cycles = Some(1_000_000);
        load_chain.instructions_retired = Some(200_000);
        load_chain.branch_mispredictions = Some(1_000);
        load_chain.icache_miss_events = Some(0);
        load_chain.decode_stall_events = Some(30_000);
        load_chain.dcache_stall_events = Some(850_000);
        load_chain.execution_stall_events = Some(50_000);
        print_row("synthetic load-chain", &breakdown(&load_chain));
        return Ok(());
    }

    let mapping = EventMapping::generic();
    header();

    // Synthetic anchors: an arithmetic spin (retiring-heavy) and an
    // out-of-cache pointer chase (dcache-heavy).
    let (spin, _) = profiler::profile_region(&mapping, || {
        let (mut a, mut b, mut c, mut d) = (1u64, 2u64, 3u64, 4u64);
        for i in 0..400_000_000u64 {
            a = a.wrapping_add(i);
            b = b.wrapping_add(3);
            c = c.wrapping_mul(5).wrapping_add(1);
            d ^= i;
        }
        std::hint::black_box((a, b, c, d))
    })?;
    print_row("arithmetic spin", &breakdown(&spin));

    let (chase, _) = profiler::profile_region(&mapping, || {
        profiler::calibrate::chase_latency_cycles(256 << 20)
    })?;
    print_row("dependent-load chase", &breakdown(&chase));

    // Engine workloads.
    let workloads = [
        ("projection degree 4", QuerySpec::Projection { degree: 4 }),
        (
            "selection p=0.5 branched",
            QuerySpec::Selection {
                p: 0.5,
                mode: SelectionMode::Branched,
            },
        ),
        (
            "join large",
            QuerySpec::Join {
                size: JoinSize::Large,
            },
        ),
        ("q1", QuerySpec::Q1),
        ("q6", QuerySpec::Q6),
    ];
    for engine in [Engine::Compiled, Engine::Vectorized] {
        for (name, query) in workloads {
            let mut spec = RunSpec::new(engine, query, 0.5, 42);
            spec.exact_selectivity = matches!(query, QuerySpec::Selection { .. });
            spec.repeats = 1;
            spec.warmup_secs = 0.3;
            spec.measure_secs = 2.0;
            let result = run(&spec)?;
            if let Some(b) = result.repeats.iter().find_map(|r| r.breakdown) {
                print_row(&format!("{}/{name}", engine.as_str()), &b);
            }
        }
    }
    Ok(())
}
