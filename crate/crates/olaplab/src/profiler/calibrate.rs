//! Machine calibration: bandwidth ceilings and cache-hierarchy latencies.
//!
//! Sequential bandwidth comes from multi-stream reads over buffers far
//! larger than any cache; random bandwidth from index-shuffled gathers;
//! latencies from a dependent-load pointer chase over working sets sized
//! per cache level. Latencies are reported in timestamp-counter cycles on
//! x86-64 (invariant TSC), or estimated via a dependent-add loop
//! elsewhere. Calibration wants an otherwise idle machine.

use std::hint::black_box;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Working-set bytes per calibration thread for the bandwidth kernels.
const BANDWIDTH_BUFFER_BYTES: usize = 256 << 20;
/// Minimum measured time per kernel, seconds.
const MIN_KERNEL_SECONDS: f64 = 0.25;

/// Pointer-chase working sets per hierarchy level.
const CHASE_L1_BYTES: usize = 16 << 10;
const CHASE_L2_BYTES: usize = 128 << 10;
const CHASE_L3_BYTES: usize = 4 << 20;
const CHASE_MEM_BYTES: usize = 192 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheLatencies {
    pub l1_cycles: f64,
    pub l2_cycles: f64,
    pub l3_cycles: f64,
    pub mem_cycles: f64,
}

/// Calibrated machine ceilings used to interpret per-run bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineProfile {
    pub per_core_seq_gbs: f64,
    pub per_core_rand_gbs: f64,
    pub per_socket_seq_gbs: f64,
    pub per_socket_rand_gbs: f64,
    pub cache_latencies: CacheLatencies,
    pub core_count: usize,
    pub cacheline_bytes: usize,
}

/// Cycle timestamp for latency measurement.
#[inline(always)]
fn timestamp_cycles() -> u64 {
    #[cfg(target_arch = "x86_64")]
    unsafe {
        std::arch::x86_64::_rdtsc()
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        // Approximate cycles by nanoseconds; relative ordering is what the
        // consumers rely on.
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    }
}

fn alloc_stream_buffer(words: usize, seed: u64) -> Vec<i64> {
    (0..words).map(|i| (i as i64) ^ (seed as i64)).collect()
}

/// Best effort; containers commonly refuse affinity syscalls.
pub(crate) fn try_pin_to_core(core: usize) {
    #[cfg(target_os = "linux")]
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(core, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
    #[cfg(not(target_os = "linux"))]
    let _ = core;
}

/// One multi-stream sequential read pass: four concurrent streams over
/// quarters of the buffer with independent accumulators, the shape memory
/// controllers reward and the fused scan loops mirror.
fn seq_read_pass(buf: &[i64]) -> i64 {
    let n = buf.len() / 4;
    let (s0, rest) = buf.split_at(n);
    let (s1, rest) = rest.split_at(n);
    let (s2, s3) = rest.split_at(n);
    let (mut a, mut b, mut c, mut d) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        a = a.wrapping_add(s0[i]);
        b = b.wrapping_add(s1[i]);
        c = c.wrapping_add(s2[i]);
        d = d.wrapping_add(s3[i]);
    }
    a.wrapping_add(b).wrapping_add(c).wrapping_add(d)
}

/// One random read pass: eight interleaved index streams so consecutive
/// loads are independent and the out-of-order window keeps many misses in
/// flight. Counts only the gathered bytes.
fn rand_read_pass(buf: &[i64], idx: &[u32]) -> i64 {
    const STREAMS: usize = 8;
    let n = idx.len() / STREAMS;
    let mut acc = [0i64; STREAMS];
    for i in 0..n {
        for (k, slot) in acc.iter_mut().enumerate() {
            *slot = slot.wrapping_add(buf[idx[k * n + i] as usize]);
        }
    }
    acc.iter().fold(0i64, |s, &v| s.wrapping_add(v))
}

fn timed_passes(mut pass: impl FnMut() -> i64, bytes_per_pass: usize) -> f64 {
    black_box(pass()); // warm pass faults the pages in
    let start = Instant::now();
    let mut passes = 0u64;
    while start.elapsed().as_secs_f64() < MIN_KERNEL_SECONDS {
        black_box(pass());
        passes += 1;
    }
    passes as f64 * bytes_per_pass as f64 / start.elapsed().as_secs_f64() / 1e9
}

/// Streaming read bandwidth with `threads` workers on disjoint buffers.
pub fn sequential_read_gbs(threads: usize) -> Result<f64> {
    if threads == 0 {
        return Err(Error::spec("bandwidth calibration needs >= 1 thread"));
    }
    let words = BANDWIDTH_BUFFER_BYTES / 8;
    let results: Vec<f64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    try_pin_to_core(t);
                    let buf = alloc_stream_buffer(words, t as u64);
                    timed_passes(|| seq_read_pass(&buf), words * 8)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    Ok(results.iter().sum())
}

/// Random-access read bandwidth: each worker gathers through a shuffled
/// index array.
pub fn random_read_gbs(threads: usize) -> Result<f64> {
    if threads == 0 {
        return Err(Error::spec("bandwidth calibration needs >= 1 thread"));
    }
    let words = BANDWIDTH_BUFFER_BYTES / 8;
    let results: Vec<f64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    try_pin_to_core(t);
                    let buf = alloc_stream_buffer(words, t as u64);
                    let mut idx: Vec<u32> = (0..words as u32).collect();
                    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(t as u64 + 1));
                    timed_passes(|| rand_read_pass(&buf, &idx), words * 8)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    Ok(results.iter().sum())
}

/// Average dependent-load latency (cycles) over a working set of `bytes`.
///
/// The buffer holds a single random permutation cycle, so each load's
/// address depends on the previous load's value.
pub fn chase_latency_cycles(bytes: usize) -> f64 {
    let n = (bytes / 8).max(16);
    let mut order: Vec<u32> = (1..n as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(bytes as u64));
    // Sattolo-style single cycle through all slots.
    let mut next = vec![0u32; n];
    let mut prev = 0u32;
    for &slot in &order {
        next[prev as usize] = slot;
        prev = slot;
    }
    next[prev as usize] = 0;

    let steps = (4 * n).max(2_000_000);
    let mut i = 0u32;
    // Warm traversal.
    for _ in 0..n {
        i = next[i as usize];
    }
    let start = timestamp_cycles();
    for _ in 0..steps {
        i = next[i as usize];
    }
    let cycles = timestamp_cycles().wrapping_sub(start);
    black_box(i);
    cycles as f64 / steps as f64
}

/// Calibrates bandwidth ceilings and latencies using up to `cores`
/// workers for the per-socket figures.
pub fn calibrate_machine(cores: usize) -> Result<MachineProfile> {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cores == 0 || cores > available {
        return Err(Error::spec(format!(
            "calibration cores must lie in 1..={available}, got {cores}"
        )));
    }
    let per_core_seq_gbs = sequential_read_gbs(1)?;
    let per_core_rand_gbs = random_read_gbs(1)?;
    let (per_socket_seq_gbs, per_socket_rand_gbs) = if cores == 1 {
        (per_core_seq_gbs, per_core_rand_gbs)
    } else {
        (sequential_read_gbs(cores)?, random_read_gbs(cores)?)
    };
    let cache_latencies = CacheLatencies {
        l1_cycles: chase_latency_cycles(CHASE_L1_BYTES),
        l2_cycles: chase_latency_cycles(CHASE_L2_BYTES),
        l3_cycles: chase_latency_cycles(CHASE_L3_BYTES),
        mem_cycles: chase_latency_cycles(CHASE_MEM_BYTES),
    };
    Ok(MachineProfile {
        per_core_seq_gbs,
        per_core_rand_gbs,
        // Aggregate throughput can dip below a single stream under noisy
        // schedulers; the profile keeps the ceiling interpretation.
        per_socket_seq_gbs: per_socket_seq_gbs.max(per_core_seq_gbs),
        per_socket_rand_gbs: per_socket_rand_gbs.max(per_core_rand_gbs),
        cache_latencies,
        core_count: available,
        cacheline_bytes: cacheline_bytes(),
    })
}

fn cacheline_bytes() -> usize {
    std::fs::read_to_string("/sys/devices/system/cpu/cpu0/cache/index0/coherency_line_size")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chase_latency_orders_with_working_set() {
        // Hierarchy ordering: an L1-resident chase is faster than an
        // out-of-cache chase. Generous factor to stay robust under noise.
        let l1 = chase_latency_cycles(CHASE_L1_BYTES);
        let mem = chase_latency_cycles(64 << 20);
        assert!(l1 > 0.0);
        assert!(mem > l1 * 2.0, "l1 {l1:.1} vs mem {mem:.1}");
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(sequential_read_gbs(0).is_err());
        assert!(random_read_gbs(0).is_err());
        assert!(calibrate_machine(0).is_err());
        assert!(calibrate_machine(10_000).is_err());
    }
}
