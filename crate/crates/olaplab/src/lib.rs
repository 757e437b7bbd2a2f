//! An in-memory columnar OLAP laboratory for micro-architectural analysis.
//!
//! Two execution paradigms over the same TPC-H-subset data — compiled-style
//! fused loops and vectorized batch-at-a-time operators with selection
//! vectors — plus the micro-benchmarks (projection, selection, hash join,
//! group-by) and TPC-H Q1/Q6 in both, predicated and lane-parallel kernel
//! variants, a hardware-counter harness with a two-level cycle breakdown,
//! memory-bandwidth measurement, machine calibration, and a morsel-parallel
//! benchmark driver.
//!
//! Start with the runnable programs under `examples/`, or the `bench`
//! binary (`bench gen|run|matrix|calibrate|oracle`).

pub mod columnar;
pub mod compiled;
pub mod datagen;
pub mod driver;
pub mod error;
pub mod oracle;
pub mod profiler;
pub mod query;
pub mod simd;
pub mod vectorized;

pub use error::{Error, Result};
