//! Allocation discipline: fused compiled loops perform no heap allocation
//! proportional to row count, and the vectorized engine's scratch reuse
//! keeps its allocations row-count independent too.
//!
//! A counting global allocator records every allocation; all assertions
//! live in one test function so counts never interleave.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicU64, Ordering};

use olaplab::columnar::ChainedHashTable;
use olaplab::compiled::{self, ENGINE_HASH_SEED};
use olaplab::datagen::{generate_database, GenSpec};
use olaplab::query::{JoinSize, SelectionMode};
use olaplab::vectorized::{self, VectorConfig};

struct CountingAllocator;

static ALLOCATIONS: AtomicU64 = AtomicU64::new(0);
static ALLOCATED_BYTES: AtomicU64 = AtomicU64::new(0);

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        ALLOCATED_BYTES.fetch_add(layout.size() as u64, Ordering::Relaxed);
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        ALLOCATED_BYTES.fetch_add(new_size as u64, Ordering::Relaxed);
        System.realloc(ptr, layout, new_size)
    }
}

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

fn counted<R>(f: impl FnOnce() -> R) -> (R, u64, u64) {
    let a0 = ALLOCATIONS.load(Ordering::Relaxed);
    let b0 = ALLOCATED_BYTES.load(Ordering::Relaxed);
    let value = f();
    (
        value,
        ALLOCATIONS.load(Ordering::Relaxed) - a0,
        ALLOCATED_BYTES.load(Ordering::Relaxed) - b0,
    )
}

#[test]
fn allocation_discipline() {
    let small = generate_database(&GenSpec::new(0.005, 42)).unwrap();
    let large = generate_database(&GenSpec::new(0.01, 42)).unwrap();
    let (small_sel, thr) = small.with_selection(0.5).unwrap();
    let (large_sel, _) = large.with_selection(0.5).unwrap();

    // Compiled scan queries: a handful of setup allocations (column
    // lookups), none proportional to rows.
    for (name, f) in [
        (
            "projection",
            Box::new(|db: &olaplab::datagen::Database| {
                compiled::c_projection(db.lineitem(), 4).unwrap();
            }) as Box<dyn Fn(&olaplab::datagen::Database)>,
        ),
        (
            "selection-branched",
            Box::new(move |db: &olaplab::datagen::Database| {
                compiled::c_selection(db.lineitem(), &thr, SelectionMode::Branched).unwrap();
            }),
        ),
        (
            "selection-predicated",
            Box::new(move |db: &olaplab::datagen::Database| {
                compiled::c_selection(db.lineitem(), &thr, SelectionMode::Predicated).unwrap();
            }),
        ),
        (
            "q6",
            Box::new(|db: &olaplab::datagen::Database| {
                compiled::c_q6(db.lineitem()).unwrap();
            }),
        ),
    ] {
        let dbs = if name.starts_with("selection") {
            [&small_sel, &large_sel]
        } else {
            [&small, &large]
        };
        let (_, small_allocs, small_bytes) = counted(|| f(dbs[0]));
        let (_, large_allocs, large_bytes) = counted(|| f(dbs[1]));
        assert!(
            small_allocs < 32,
            "compiled {name}: {small_allocs} allocations"
        );
        assert_eq!(
            small_allocs, large_allocs,
            "compiled {name}: allocation count grew with rows"
        );
        assert_eq!(
            small_bytes, large_bytes,
            "compiled {name}: allocated bytes grew with rows"
        );
    }

    // Fused probe loop over a prebuilt table: zero allocations, however
    // large the probe side.
    let build_keys: Vec<i64> = (0..1000).collect();
    let table = ChainedHashTable::build(&build_keys, &build_keys, ENGINE_HASH_SEED).unwrap();
    for db in [&small, &large] {
        let probe = compiled::join_probe_side(db, JoinSize::Large).unwrap();
        let (_, allocs, _) = counted(|| {
            compiled::join_probe_range(&table, &probe, 0..probe.keys.len());
        });
        assert_eq!(allocs, 0, "compiled probe loop allocated");
    }

    // Vectorized queries: scratch is allocated once per run (sized by
    // vector_size), so counts match across row counts.
    let cfg = VectorConfig {
        vector_size: 1024,
        simd: false,
    };
    let (_, small_allocs, _) =
        counted(|| vectorized::v_projection(small.lineitem(), 4, &cfg).unwrap());
    let (_, large_allocs, _) =
        counted(|| vectorized::v_projection(large.lineitem(), 4, &cfg).unwrap());
    assert_eq!(
        small_allocs, large_allocs,
        "vectorized projection allocations grew with rows"
    );

    let (_, small_allocs, _) = counted(|| {
        vectorized::v_selection(small_sel.lineitem(), &thr, SelectionMode::Predicated, &cfg)
            .unwrap()
    });
    let (_, large_allocs, _) = counted(|| {
        vectorized::v_selection(large_sel.lineitem(), &thr, SelectionMode::Predicated, &cfg)
            .unwrap()
    });
    assert_eq!(
        small_allocs, large_allocs,
        "vectorized selection allocations grew with rows"
    );
}
