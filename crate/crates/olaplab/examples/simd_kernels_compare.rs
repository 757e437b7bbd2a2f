//! Lane-parallel kernels vs their scalar counterparts: raw kernel timings
//! for sum/filter/hash, then whole-query effect on the vectorized engine
//! (projection and predicated selection with `simd` on/off). Results are
//! bit-identical by construction; only the speed differs.
//!
//!     cargo run --release --example simd_kernels_compare

use std::hint::black_box;
use std::time::Instant;

use olaplab::driver::{run, Engine, RunSpec};
use olaplab::query::{QuerySpec, SelectionMode};
use olaplab::simd;

fn time_it(mut f: impl FnMut()) -> f64 {
    f(); // warm
    let start = Instant::now();
    let mut iters = 0u32;
    while start.elapsed().as_secs_f64() < 0.3 {
        f();
        iters += 1;
    }
    start.elapsed().as_secs_f64() / iters as f64 * 1e3
}

fn main() -> olaplab::Result<()> {
    println!("lane kernels available: {}\n", simd::lanes_available());

    let n = 4 << 20;
    let wide: Vec<i64> = (0..n as i64).map(|i| i * 37 % 1013).collect();
    let narrow: Vec<i32> = (0..n as i32).map(|i| i * 17 % 2557).collect();
    let mut out_sel = Vec::new();
    let mut out_hash = Vec::new();

    println!("{:<26} {:>12} {:>12} {:>9}", "kernel (4Mi elements)", "scalar ms", "lanes ms", "speedup");
    let scalar = time_it(|| {
        black_box(simd::scalar_sum(black_box(&wide)));
    });
    let lanes = time_it(|| {
        black_box(simd::lanes_sum(black_box(&wide), None));
    });
    println!("{:<26} {scalar:>12.3} {lanes:>12.3} {:>8.2}x", "sum", scalar / lanes);

    let scalar = time_it(|| {
        simd::scalar_filter_lt_i32(black_box(&narrow), 1278, None, &mut out_sel);
        black_box(out_sel.len());
    });
    let lanes = time_it(|| {
        simd::lanes_filter_lt_i32(black_box(&narrow), 1278, None, &mut out_sel);
        black_box(out_sel.len());
    });
    println!("{:<26} {scalar:>12.3} {lanes:>12.3} {:>8.2}x", "filter (p=0.5)", scalar / lanes);

    let scalar = time_it(|| {
        simd::scalar_probe_hash(black_box(&wide), 42, &mut out_hash);
        black_box(out_hash.len());
    });
    let lanes = time_it(|| {
        simd::lanes_probe_hash(black_box(&wide), 42, &mut out_hash);
        black_box(out_hash.len());
    });
    println!("{:<26} {scalar:>12.3} {lanes:>12.3} {:>8.2}x\n", "probe hash", scalar / lanes);

    println!(
        "{:<34} {:>12} {:>12} {:>9}",
        "vectorized query (sf=0.1)", "scalar ms", "lanes ms", "speedup"
    );
    for (label, query) in [
        ("projection degree 4", QuerySpec::Projection { degree: 4 }),
        (
            "selection p=0.5 predicated",
            QuerySpec::Selection {
                p: 0.5,
                mode: SelectionMode::Predicated,
            },
        ),
    ] {
        let mut times = [0f64; 2];
        for (i, lanes_on) in [false, true].into_iter().enumerate() {
            let mut spec = RunSpec::new(Engine::Vectorized, query, 0.1, 42);
            spec.simd = lanes_on;
            spec.repeats = 3;
            spec.warmup_secs = 0.2;
            spec.measure_secs = 1.0;
            times[i] = run(&spec)?.median_secs_per_iter * 1e3;
        }
        println!(
            "{label:<34} {:>12.3} {:>12.3} {:>8.2}x",
            times[0],
            times[1],
            times[0] / times[1]
        );
    }
    Ok(())
}
