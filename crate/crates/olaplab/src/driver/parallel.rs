//! Morsel-driven parallel execution.
//!
//! Workers pull fixed-size row ranges from a shared atomic cursor, fold
//! them into worker-private partials, and the driver merges the partials
//! after joining. Join builds run as key-partitioned sub-builds with the
//! scope join as the barrier before probing. When counters are requested,
//! every worker profiles its own loop and the driver aggregates the
//! per-worker samples.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::columnar::{hash64, ChainedHashTable, PartitionedHashTable};
use crate::compiled::ENGINE_HASH_SEED;
use crate::error::Result;
use crate::profiler::{self, CounterSample, EventMapping};

pub const DEFAULT_MORSEL_ROWS: usize = 16_384;

/// Shared dispatch queue over `0..rows` in morsel-sized ranges.
pub struct MorselQueue {
    next: AtomicUsize,
    rows: usize,
    morsel_rows: usize,
}

impl MorselQueue {
    pub fn new(rows: usize, morsel_rows: usize) -> Self {
        MorselQueue {
            next: AtomicUsize::new(0),
            rows,
            morsel_rows: morsel_rows.max(1),
        }
    }

    #[inline]
    pub fn next_range(&self) -> Option<Range<usize>> {
        let start = self.next.fetch_add(self.morsel_rows, Ordering::Relaxed);
        if start >= self.rows {
            return None;
        }
        Some(start..(start + self.morsel_rows).min(self.rows))
    }
}

/// One worker's contribution.
pub struct WorkerOutcome<P> {
    pub worker: usize,
    pub partial: P,
    pub sample: Option<CounterSample>,
}

/// Runs `worker` on `threads` scoped threads over a shared morsel queue
/// and returns exactly one partial per worker (the merge audit).
///
/// With one thread the closure runs inline on the caller. When `mapping`
/// is set, each worker wraps its loop in a profiling session; capability
/// errors must be resolved by the caller beforehand (pass `None` to run
/// timing-only).
pub fn run_partials<P, F>(
    rows: usize,
    morsel_rows: usize,
    threads: usize,
    pin_cores: bool,
    mapping: Option<&EventMapping>,
    worker: F,
) -> Result<Vec<WorkerOutcome<P>>>
where
    P: Send,
    F: Fn(usize, &MorselQueue) -> Result<P> + Sync,
{
    let queue = MorselQueue::new(rows, morsel_rows);
    // Pinning happens only on spawned workers; pinning the inline
    // single-thread path would constrict the caller's affinity for the
    // rest of the process.
    let pin_workers = pin_cores && threads > 1;
    let run_one = |w: usize| -> Result<WorkerOutcome<P>> {
        if pin_workers {
            profiler::calibrate::try_pin_to_core(w);
        }
        match mapping {
            Some(m) => {
                let (sample, partial) = profiler::profile_region(m, || worker(w, &queue))?;
                Ok(WorkerOutcome {
                    worker: w,
                    partial: partial?,
                    sample: Some(sample),
                })
            }
            None => Ok(WorkerOutcome {
                worker: w,
                partial: worker(w, &queue)?,
                sample: None,
            }),
        }
    };

    if threads <= 1 {
        return Ok(vec![run_one(0)?]);
    }
    let outcomes: Vec<Result<WorkerOutcome<P>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| scope.spawn(move || run_one(w)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let collected = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    debug_assert_eq!(collected.len(), threads, "one partial per worker");
    Ok(collected)
}

/// Key-partitioned parallel hash-table build: workers stage rows into
/// per-partition buffers, then each partition is built independently.
pub fn parallel_build_join_table(
    keys: &[i64],
    threads: usize,
    morsel_rows: usize,
    pin_cores: bool,
    mapping: Option<&EventMapping>,
) -> Result<(PartitionedHashTable, Option<CounterSample>)> {
    let parts = PartitionedHashTable::partition_count_for(threads);
    let bits = parts.trailing_zeros();

    let staged_outcomes = run_partials(
        keys.len(),
        morsel_rows,
        threads,
        pin_cores,
        mapping,
        |_, queue| {
            let mut local: Vec<(Vec<i64>, Vec<i64>)> = vec![Default::default(); parts];
            while let Some(range) = queue.next_range() {
                for &k in &keys[range] {
                    let part = PartitionedHashTable::partition_of_hash(
                        hash64(k, ENGINE_HASH_SEED),
                        bits,
                    );
                    local[part].0.push(k);
                    local[part].1.push(k);
                }
            }
            Ok(local)
        },
    )?;

    let mut sample: Option<CounterSample> = None;
    let mut staged: Vec<(Vec<i64>, Vec<i64>)> = vec![Default::default(); parts];
    for outcome in staged_outcomes {
        for (p, (ks, ps)) in outcome.partial.into_iter().enumerate() {
            staged[p].0.extend(ks);
            staged[p].1.extend(ps);
        }
        sample = merge_sample(sample, outcome.sample);
    }

    // Sub-builds: one worker per partition; the scope join is the barrier
    // before any probe sees the table.
    let built: Vec<Result<(ChainedHashTable, Option<CounterSample>)>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = staged
                .into_iter()
                .map(|(ks, ps)| {
                    scope.spawn(move || match mapping {
                        Some(m) => {
                            let (s, t) = profiler::profile_region(m, || {
                                ChainedHashTable::build(&ks, &ps, ENGINE_HASH_SEED)
                            })?;
                            Ok((t?, Some(s)))
                        }
                        None => Ok((ChainedHashTable::build(&ks, &ps, ENGINE_HASH_SEED)?, None)),
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
    let mut tables = Vec::new();
    for r in built {
        let (t, s) = r?;
        tables.push(t);
        sample = merge_sample(sample, s);
    }
    Ok((
        PartitionedHashTable::from_tables(tables, ENGINE_HASH_SEED)?,
        sample,
    ))
}

/// Concurrent-merge for per-worker samples: counts sum, elapsed takes the
/// longest worker.
pub fn merge_sample(
    a: Option<CounterSample>,
    b: Option<CounterSample>,
) -> Option<CounterSample> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.merge(&y)),
        (x, None) => x,
        (None, y) => y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_covers_all_rows_exactly_once() {
        let q = MorselQueue::new(100, 16);
        let mut seen = vec![false; 100];
        while let Some(r) = q.next_range() {
            for i in r {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn one_partial_per_worker() {
        for threads in [1, 2, 4] {
            let outcomes = run_partials(1000, 64, threads, false, None, |_, q| {
                let mut sum = 0usize;
                while let Some(r) = q.next_range() {
                    sum += r.len();
                }
                Ok(sum)
            })
            .unwrap();
            assert_eq!(outcomes.len(), threads);
            let mut workers: Vec<usize> = outcomes.iter().map(|o| o.worker).collect();
            workers.sort_unstable();
            workers.dedup();
            assert_eq!(workers.len(), threads, "each worker merged exactly once");
            let total: usize = outcomes.iter().map(|o| o.partial).sum();
            assert_eq!(total, 1000);
        }
    }

    #[test]
    fn parallel_build_probes_like_flat_build() {
        let keys: Vec<i64> = (0..5000).map(|i| i % 997).collect();
        let (pt, _) = parallel_build_join_table(&keys, 4, 256, false, None).unwrap();
        let flat = ChainedHashTable::build(&keys, &keys, ENGINE_HASH_SEED).unwrap();
        assert_eq!(pt.entry_count(), flat.entry_count());
        for probe in 0..1200i64 {
            let mut a: Vec<i64> = pt.probe(probe).collect();
            let mut b: Vec<i64> = flat.probe(probe).collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b, "key {probe}");
        }
    }
}
