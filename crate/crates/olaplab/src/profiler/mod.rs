//! Hardware-counter harness: two-level cycle breakdown, bandwidth
//! measurement, machine calibration and prefetcher control.
//!
//! The first level splits CPU cycles into Retiring vs. Stall cycles; the
//! second splits stalls into branch-misprediction, icache, decoding,
//! dcache and execution components. Raw counts come from the events named
//! in an `EventMapping`; the counter-to-component formulas are:
//!
//! ```text
//! retiring    = instructions_retired / (slots_per_cycle * core_cycles)
//! branch_misp = branch_mispredictions * branch_miss_penalty / core_cycles
//! <stall c>   = <c events> * <c penalty> / core_cycles
//! ```
//!
//! On a full sample (all six components collected) the raw shares are
//! normalized to sum to one and the pre-normalization excess is reported
//! as the residual; on a partial sample the raw shares stand and the
//! uncovered remainder is reported as explicit unknown mass.

pub mod calibrate;
pub mod events;
pub mod perf;
pub mod prefetch;

pub use calibrate::{calibrate_machine, CacheLatencies, MachineProfile};
pub use events::{BreakdownParams, CounterField, EventMapping};
pub use prefetch::{set_prefetchers, PrefetcherConfig};

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};

/// Raw counter reads around one profiled region.
#[derive(Debug, Clone, Serialize)]
pub struct CounterSample {
    /// Wall-clock seconds of the region.
    pub elapsed: f64,
    pub core_cycles: Option<u64>,
    pub instructions_retired: Option<u64>,
    pub branches_retired: Option<u64>,
    pub branch_mispredictions: Option<u64>,
    pub icache_miss_events: Option<u64>,
    pub decode_stall_events: Option<u64>,
    pub dcache_stall_events: Option<u64>,
    pub execution_stall_events: Option<u64>,
    pub offcore_data_bytes: Option<u64>,
    /// Worst multiplexing scale factor across the collected counters.
    pub max_multiplex_scale: f64,
    /// True when a counter never got scheduled (its value is dropped).
    pub flagged: bool,
    /// Breakdown parameters copied from the mapping at collection time.
    pub params: BreakdownParams,
}

impl CounterSample {
    /// An empty sample shell (tests construct synthetic samples this way).
    pub fn synthetic(elapsed: f64, params: BreakdownParams) -> CounterSample {
        CounterSample {
            elapsed,
            core_cycles: None,
            instructions_retired: None,
            branches_retired: None,
            branch_mispredictions: None,
            icache_miss_events: None,
            decode_stall_events: None,
            dcache_stall_events: None,
            execution_stall_events: None,
            offcore_data_bytes: None,
            max_multiplex_scale: 1.0,
            flagged: false,
            params,
        }
    }

    fn set(&mut self, field: CounterField, value: u64) {
        let slot = match field {
            CounterField::CoreCycles => &mut self.core_cycles,
            CounterField::InstructionsRetired => &mut self.instructions_retired,
            CounterField::BranchesRetired => &mut self.branches_retired,
            CounterField::BranchMispredictions => &mut self.branch_mispredictions,
            CounterField::IcacheMissEvents => &mut self.icache_miss_events,
            CounterField::DecodeStallEvents => &mut self.decode_stall_events,
            CounterField::DcacheStallEvents => &mut self.dcache_stall_events,
            CounterField::ExecutionStallEvents => &mut self.execution_stall_events,
            CounterField::OffcoreDataBytes => &mut self.offcore_data_bytes,
        };
        *slot = Some(value);
    }

    /// Sums counters and elapsed of two sequential samples (accumulating
    /// across iterations of the same workload).
    pub fn accumulate(self, other: &CounterSample) -> CounterSample {
        let elapsed = self.elapsed + other.elapsed;
        let mut merged = self.merge(other);
        merged.elapsed = elapsed;
        merged
    }

    /// Sums counters of two samples (per-worker aggregation); elapsed
    /// takes the max, scale the worst.
    pub fn merge(mut self, other: &CounterSample) -> CounterSample {
        fn add(a: &mut Option<u64>, b: Option<u64>) {
            *a = match (*a, b) {
                (Some(x), Some(y)) => Some(x + y),
                (x, None) => x,
                (None, y) => y,
            };
        }
        add(&mut self.core_cycles, other.core_cycles);
        add(&mut self.instructions_retired, other.instructions_retired);
        add(&mut self.branches_retired, other.branches_retired);
        add(&mut self.branch_mispredictions, other.branch_mispredictions);
        add(&mut self.icache_miss_events, other.icache_miss_events);
        add(&mut self.decode_stall_events, other.decode_stall_events);
        add(&mut self.dcache_stall_events, other.dcache_stall_events);
        add(&mut self.execution_stall_events, other.execution_stall_events);
        add(&mut self.offcore_data_bytes, other.offcore_data_bytes);
        self.elapsed = self.elapsed.max(other.elapsed);
        self.max_multiplex_scale = self.max_multiplex_scale.max(other.max_multiplex_scale);
        self.flagged |= other.flagged;
        self
    }
}

/// Two-level cycle accounting as fractions of total cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleBreakdown {
    pub retiring: f64,
    pub branch_misp: f64,
    pub icache: f64,
    pub decoding: f64,
    pub dcache: f64,
    pub execution: f64,
    /// Mass not covered by collected components (partial samples).
    pub unknown: f64,
    /// Pre-normalization excess of a full sample (diagnostic).
    pub residual: f64,
}

impl CycleBreakdown {
    pub fn components_sum(&self) -> f64 {
        self.retiring + self.branch_misp + self.icache + self.decoding + self.dcache
            + self.execution + self.unknown
    }

    pub fn stall_components(&self) -> [(&'static str, f64); 5] {
        [
            ("branch_misp", self.branch_misp),
            ("icache", self.icache),
            ("decoding", self.decoding),
            ("dcache", self.dcache),
            ("execution", self.execution),
        ]
    }

    /// Largest stall component by share.
    pub fn dominant_stall(&self) -> (&'static str, f64) {
        self.stall_components()
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }
}

/// Computes the two-level breakdown from one sample (see module docs).
pub fn breakdown(sample: &CounterSample) -> CycleBreakdown {
    let p = &sample.params;
    let cycles = sample.core_cycles.unwrap_or(0) as f64;
    if cycles <= 0.0 {
        return CycleBreakdown {
            retiring: 0.0,
            branch_misp: 0.0,
            icache: 0.0,
            decoding: 0.0,
            dcache: 0.0,
            execution: 0.0,
            unknown: 1.0,
            residual: 0.0,
        };
    }
    let share = |count: Option<u64>, penalty: f64| count.map(|c| c as f64 * penalty / cycles);
    let raw = [
        share(sample.instructions_retired, 1.0 / p.slots_per_cycle),
        share(sample.branch_mispredictions, p.branch_miss_penalty_cycles),
        share(sample.icache_miss_events, p.icache_penalty),
        share(sample.decode_stall_events, p.decode_penalty),
        share(sample.dcache_stall_events, p.dcache_penalty),
        share(sample.execution_stall_events, p.execution_penalty),
    ];
    let full = raw.iter().all(|r| r.is_some());
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    if full {
        let total: f64 = raw.iter().map(|r| r.unwrap()).sum();
        let norm = if total > 0.0 { total } else { 1.0 };
        CycleBreakdown {
            retiring: clamp(raw[0].unwrap() / norm),
            branch_misp: clamp(raw[1].unwrap() / norm),
            icache: clamp(raw[2].unwrap() / norm),
            decoding: clamp(raw[3].unwrap() / norm),
            dcache: clamp(raw[4].unwrap() / norm),
            execution: clamp(raw[5].unwrap() / norm),
            unknown: 0.0,
            residual: total - 1.0,
        }
    } else {
        let covered: f64 = raw.iter().flatten().map(|&v| clamp(v)).sum();
        CycleBreakdown {
            retiring: clamp(raw[0].unwrap_or(0.0)),
            branch_misp: clamp(raw[1].unwrap_or(0.0)),
            icache: clamp(raw[2].unwrap_or(0.0)),
            decoding: clamp(raw[3].unwrap_or(0.0)),
            dcache: clamp(raw[4].unwrap_or(0.0)),
            execution: clamp(raw[5].unwrap_or(0.0)),
            unknown: (1.0 - covered).max(0.0),
            residual: (covered - 1.0).max(0.0),
        }
    }
}

/// Runs `work` with the mapping's counters read immediately around it.
///
/// Counters that fail to open are simply not collected (their breakdown
/// mass shows up as unknown); if none can be opened the environment lacks
/// counter access and a capability error is returned.
pub fn profile_region<R>(
    mapping: &EventMapping,
    work: impl FnOnce() -> R,
) -> Result<(CounterSample, R)> {
    perf::counters_available()?;
    let mut counters = Vec::new();
    for (field, code) in mapping.mapped_fields() {
        if let Ok(c) = perf::Counter::open(code) {
            counters.push((field, c));
        }
    }
    if counters.is_empty() {
        return Err(Error::capability(format!(
            "no counter of mapping `{}` could be opened",
            mapping.name
        )));
    }
    for (_, c) in &counters {
        c.reset()?;
    }
    for (_, c) in &counters {
        c.enable()?;
    }
    let start = Instant::now();
    let value = work();
    let elapsed = start.elapsed().as_secs_f64();
    for (_, c) in &counters {
        c.disable()?;
    }

    let mut sample = CounterSample::synthetic(elapsed, mapping.params);
    for (field, c) in &counters {
        let reading = c.read()?;
        if reading.flagged {
            sample.flagged = true;
            continue;
        }
        sample.set(*field, reading.value);
        sample.max_multiplex_scale = sample.max_multiplex_scale.max(reading.scale);
    }
    Ok((sample, value))
}

/// Per-run memory bandwidth; `socket_id` is 0 for the single-socket
/// localized runs this harness performs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandwidthReport {
    /// Counter-based socket traffic, when offcore events are available.
    pub measured_gbs: Option<f64>,
    /// `bytes_touched / elapsed`: a lower bound on true traffic (excludes
    /// prefetch overshoot and hash-table traffic).
    pub estimated_gbs: f64,
    pub socket_id: u32,
    pub elapsed: f64,
}

/// Times `work` (which reports the demand bytes it touched) and derives
/// bandwidth. Counter-based measurement is attached when the mapping has
/// an offcore event and counters are usable; otherwise only the estimate
/// is reported.
pub fn measure_bandwidth<R>(
    mapping: Option<&EventMapping>,
    work: impl FnOnce() -> (u64, R),
) -> (BandwidthReport, R) {
    let offcore = mapping
        .and_then(|m| m.event(CounterField::OffcoreDataBytes))
        .filter(|_| perf::counters_available().is_ok())
        .and_then(|code| perf::Counter::open(code).ok());
    if let Some(c) = &offcore {
        let _ = c.reset();
        let _ = c.enable();
    }
    let start = Instant::now();
    let (bytes, value) = work();
    let elapsed = start.elapsed().as_secs_f64().max(1e-9);
    let measured_gbs = offcore.and_then(|c| {
        let _ = c.disable();
        let reading = c.read().ok()?;
        if reading.flagged {
            return None;
        }
        let per_event = mapping.map(|m| m.params.offcore_bytes_per_event).unwrap_or(64.0);
        Some(reading.value as f64 * per_event / elapsed / 1e9)
    });
    (
        BandwidthReport {
            measured_gbs,
            estimated_gbs: bytes as f64 / elapsed / 1e9,
            socket_id: 0,
            elapsed,
        },
        value,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_with(values: [Option<u64>; 7]) -> CounterSample {
        let mut s = CounterSample::synthetic(1.0, BreakdownParams::default());
        s.core_cycles = values[0];
        s.instructions_retired = values[1];
        s.branch_mispredictions = values[2];
        s.icache_miss_events = values[3];
        s.decode_stall_events = values[4];
        s.dcache_stall_events = values[5];
        s.execution_stall_events = values[6];
        s
    }

    #[test]
    fn all_retiring_synthetic_sample() {
        // 4 instructions per cycle, zero stalls -> retiring ~ 1.0.
        let s = sample_with([
            Some(1_000_000),
            Some(4_000_000),
            Some(0),
            Some(0),
            Some(0),
            Some(0),
            Some(0),
        ]);
        let b = breakdown(&s);
        assert!((b.retiring - 1.0).abs() < 1e-12, "{b:?}");
        assert_eq!(b.unknown, 0.0);
        assert!((b.components_sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_sample_normalizes_and_reports_residual() {
        // Raw shares: retiring 0.5, dcache 0.75 -> total 1.25.
        let s = sample_with([
            Some(1_000_000),
            Some(2_000_000),
            Some(0),
            Some(0),
            Some(0),
            Some(750_000),
            Some(0),
        ]);
        let b = breakdown(&s);
        assert!((b.residual - 0.25).abs() < 1e-9, "{b:?}");
        assert!((b.components_sum() - 1.0).abs() < 1e-9);
        assert!((b.retiring - 0.4).abs() < 1e-9);
        assert!((b.dcache - 0.6).abs() < 1e-9);
        assert_eq!(b.dominant_stall().0, "dcache");
    }

    #[test]
    fn partial_sample_reports_unknown_mass() {
        let s = sample_with([
            Some(1_000_000),
            Some(2_000_000),
            None,
            None,
            None,
            Some(100_000),
            None,
        ]);
        let b = breakdown(&s);
        assert!((b.retiring - 0.5).abs() < 1e-9);
        assert!((b.dcache - 0.1).abs() < 1e-9);
        assert!((b.unknown - 0.4).abs() < 1e-9);
        assert!((b.components_sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_cycles_is_all_unknown() {
        let s = sample_with([None, Some(10), None, None, None, None, None]);
        let b = breakdown(&s);
        assert_eq!(b.unknown, 1.0);
    }

    #[test]
    fn breakdown_clamps_to_unit_interval() {
        let s = sample_with([
            Some(100),
            Some(100_000),
            None,
            None,
            None,
            None,
            None,
        ]);
        let b = breakdown(&s);
        assert!(b.retiring <= 1.0 && b.retiring >= 0.0);
    }

    #[test]
    fn sample_merge_sums_counts() {
        let a = sample_with([Some(10), Some(20), None, None, None, None, None]);
        let b = sample_with([Some(5), None, Some(7), None, None, None, None]);
        let m = a.merge(&b);
        assert_eq!(m.core_cycles, Some(15));
        assert_eq!(m.instructions_retired, Some(20));
        assert_eq!(m.branch_mispredictions, Some(7));
    }

    #[test]
    fn sleeping_region_estimates_near_zero_bandwidth() {
        let (report, ()) = measure_bandwidth(None, || {
            std::thread::sleep(std::time::Duration::from_millis(30));
            (0u64, ())
        });
        assert!(report.estimated_gbs < 1e-3, "{report:?}");
        assert!(report.elapsed >= 0.025);
    }

    #[test]
    fn profile_region_errors_or_counts() {
        let mapping = EventMapping::generic();
        match profile_region(&mapping, || {
            let mut x = 0u64;
            for i in 0..10_000u64 {
                x = x.wrapping_add(std::hint::black_box(i));
            }
            x
        }) {
            Ok((sample, _)) => {
                assert!(sample.core_cycles.is_some());
                assert!(sample.elapsed > 0.0);
            }
            Err(e) => {
                assert!(matches!(e, Error::Capability(_)), "{e}");
                eprintln!("SKIP (capability): {e}");
            }
        }
    }
}
