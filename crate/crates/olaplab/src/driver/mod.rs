//! Benchmark driver: composes datagen, the two engines, the kernels and
//! the profiler into runnable specs with a warmup/measure protocol,
//! morsel-parallel execution and machine-readable reports.

pub mod matrix;
pub mod parallel;
pub mod report;

pub use parallel::DEFAULT_MORSEL_ROWS;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::columnar::{HashTableBuilder, ProbeTable, DEFAULT_VECTOR_SIZE};
use crate::compiled::{self, ScalarAcc, WideAcc, ENGINE_HASH_SEED};
use crate::datagen::{self, Database, GenSpec};
use crate::error::{Error, Result};
use crate::oracle;
use crate::profiler::{
    self, breakdown, BandwidthReport, CounterSample, CycleBreakdown, EventMapping,
    PrefetcherConfig,
};
use crate::query::{Evaluation, QueryOutput, QuerySpec, ThresholdSet, TouchStats};
use crate::vectorized::{self, Scratch, VectorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Compiled,
    Vectorized,
}

impl Engine {
    pub fn parse(s: &str) -> Result<Engine> {
        match s {
            "compiled" => Ok(Engine::Compiled),
            "vectorized" => Ok(Engine::Vectorized),
            other => Err(Error::spec(format!("unknown engine `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Compiled => "compiled",
            Engine::Vectorized => "vectorized",
        }
    }
}

/// One benchmark run: engine, query, data, execution and measurement
/// parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSpec {
    pub engine: Engine,
    pub query: QuerySpec,
    pub sf: f64,
    pub seed: u64,
    #[serde(default)]
    pub exact_selectivity: bool,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_vector_size")]
    pub vector_size: usize,
    #[serde(default)]
    pub simd: bool,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Warmup/measure protocol, scaled for desk use; override for full
    /// profiling sessions.
    #[serde(default = "default_warmup_secs")]
    pub warmup_secs: f64,
    #[serde(default = "default_measure_secs")]
    pub measure_secs: f64,
    #[serde(default)]
    pub prefetchers: Option<PrefetcherConfig>,
    #[serde(default)]
    pub privilege_acknowledged: bool,
    #[serde(default = "default_true")]
    pub pin_cores: bool,
    #[serde(default)]
    pub verify: bool,
    #[serde(default)]
    pub events_file: Option<PathBuf>,
    #[serde(default = "default_morsel_rows")]
    pub morsel_rows: usize,
    /// Load the database from this directory instead of generating.
    #[serde(default)]
    pub db_dir: Option<PathBuf>,
}

fn default_threads() -> usize {
    1
}
fn default_vector_size() -> usize {
    DEFAULT_VECTOR_SIZE
}
fn default_repeats() -> usize {
    3
}
fn default_warmup_secs() -> f64 {
    5.0
}
fn default_measure_secs() -> f64 {
    20.0
}
fn default_true() -> bool {
    true
}
fn default_morsel_rows() -> usize {
    DEFAULT_MORSEL_ROWS
}

impl RunSpec {
    pub fn new(engine: Engine, query: QuerySpec, sf: f64, seed: u64) -> RunSpec {
        RunSpec {
            engine,
            query,
            sf,
            seed,
            exact_selectivity: false,
            threads: 1,
            vector_size: DEFAULT_VECTOR_SIZE,
            simd: false,
            repeats: default_repeats(),
            warmup_secs: default_warmup_secs(),
            measure_secs: default_measure_secs(),
            prefetchers: None,
            privilege_acknowledged: false,
            pin_cores: true,
            verify: false,
            events_file: None,
            morsel_rows: DEFAULT_MORSEL_ROWS,
            db_dir: None,
        }
    }

    /// Quick-turnaround measurement settings for tests and examples.
    pub fn quick(mut self) -> RunSpec {
        self.repeats = 1;
        self.warmup_secs = 0.05;
        self.measure_secs = 0.1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.query.validate()?;
        GenSpec::new(self.sf, self.seed).validate()?;
        let cores = physical_cores();
        if self.threads == 0 || self.threads > cores {
            return Err(Error::spec(format!(
                "threads must lie in 1..={cores}, got {}",
                self.threads
            )));
        }
        if self.vector_size == 0 {
            return Err(Error::spec("vector_size must be >= 1"));
        }
        if self.repeats == 0 {
            return Err(Error::spec("repeats must be >= 1"));
        }
        if self.morsel_rows == 0 {
            return Err(Error::spec("morsel size must be >= 1"));
        }
        if !(self.warmup_secs >= 0.0 && self.measure_secs > 0.0) {
            return Err(Error::spec("warmup >= 0 and measure > 0 required"));
        }
        Ok(())
    }
}

pub fn physical_cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Process-wide cache of generated databases keyed by (sf, seed, exact).
fn db_cache(spec: &GenSpec) -> Result<Arc<Database>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64, bool), Arc<Database>>>> = OnceLock::new();
    let key = (spec.scale_factor.to_bits(), spec.seed, spec.exact_selectivity);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(db) = cache.lock().unwrap().get(&key) {
        return Ok(db.clone());
    }
    let db = Arc::new(datagen::generate_database(spec)?);
    cache.lock().unwrap().insert(key, db.clone());
    Ok(db)
}

/// Fetches (and caches) the database for a spec, installing selection
/// thresholds when the query needs them.
pub fn prepare_database(spec: &RunSpec) -> Result<(Arc<Database>, Option<ThresholdSet>)> {
    let base = match &spec.db_dir {
        Some(dir) => Arc::new(datagen::io::load_database(dir)?),
        None => db_cache(&GenSpec {
            scale_factor: spec.sf,
            seed: spec.seed,
            exact_selectivity: spec.exact_selectivity,
        })?,
    };
    if let QuerySpec::Selection { p, .. } = spec.query {
        let (db, thr) = base.with_selection(p)?;
        Ok((Arc::new(db), Some(thr)))
    } else {
        Ok((base, None))
    }
}

/// Executes one query once at the requested parallelism; returns the
/// evaluation plus the aggregated per-worker counter sample (when a
/// mapping is provided).
pub fn execute_query(
    db: &Database,
    thresholds: Option<&ThresholdSet>,
    spec: &RunSpec,
    mapping: Option<&EventMapping>,
) -> Result<(Evaluation, Option<CounterSample>)> {
    let threads = spec.threads;
    let morsel = spec.morsel_rows;
    let pin = spec.pin_cores;
    let vcfg = VectorConfig {
        vector_size: spec.vector_size,
        simd: spec.simd,
    };
    let li = db.lineitem();
    let rows = li.row_count();

    match (spec.engine, spec.query) {
        (Engine::Compiled, QuerySpec::Projection { degree }) => {
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut acc = ScalarAcc::default();
                while let Some(r) = q.next_range() {
                    acc = acc.merge(compiled::projection_range(li, degree, r)?);
                }
                Ok(acc)
            })?;
            let (acc, sample) = fold_scalar(outcomes);
            Ok((
                Evaluation {
                    output: QueryOutput::scalar(acc.sum, acc.matched),
                    touch: TouchStats {
                        rows_scanned: rows as u64,
                        bytes_touched: rows as u64 * 8 * degree as u64,
                        intermediate_bytes: 0,
                    },
                },
                sample,
            ))
        }
        (Engine::Vectorized, QuerySpec::Projection { degree }) => {
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut scratch = Scratch::new(vcfg.vector_size);
                let mut p = vectorized::VProjPartial::default();
                while let Some(r) = q.next_range() {
                    p = p.merge(vectorized::projection_range(li, degree, &vcfg, &mut scratch, r)?);
                }
                Ok(p)
            })?;
            let mut sample = None;
            let mut p = vectorized::VProjPartial::default();
            for o in outcomes {
                p = p.merge(o.partial);
                sample = parallel::merge_sample(sample, o.sample);
            }
            Ok((
                Evaluation {
                    output: QueryOutput::scalar(p.sum, p.rows),
                    touch: TouchStats {
                        rows_scanned: p.rows,
                        bytes_touched: p.rows * 8 * degree as u64,
                        intermediate_bytes: p.intermediate_bytes,
                    },
                },
                sample,
            ))
        }
        (Engine::Compiled, QuerySpec::Selection { mode, .. }) => {
            let thr = thresholds.ok_or_else(|| Error::spec("selection needs thresholds"))?;
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut acc = ScalarAcc::default();
                while let Some(r) = q.next_range() {
                    acc = acc.merge(compiled::selection_range(li, thr, mode, r)?);
                }
                Ok(acc)
            })?;
            let (acc, sample) = fold_scalar(outcomes);
            let agg_rows = match mode {
                crate::query::SelectionMode::Branched => acc.matched,
                crate::query::SelectionMode::Predicated => rows as u64,
            };
            Ok((
                Evaluation {
                    output: QueryOutput::scalar(acc.sum, acc.matched),
                    touch: TouchStats {
                        rows_scanned: rows as u64,
                        bytes_touched: rows as u64 * 12 + agg_rows * 32,
                        intermediate_bytes: 0,
                    },
                },
                sample,
            ))
        }
        (Engine::Vectorized, QuerySpec::Selection { mode, .. }) => {
            let thr = thresholds.ok_or_else(|| Error::spec("selection needs thresholds"))?;
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut scratch = Scratch::new(vcfg.vector_size);
                let mut p = vectorized::VSelPartial::default();
                while let Some(r) = q.next_range() {
                    p = p.merge(vectorized::selection_range(li, thr, mode, &vcfg, &mut scratch, r)?);
                }
                Ok(p)
            })?;
            let mut sample = None;
            let mut p = vectorized::VSelPartial::default();
            for o in outcomes {
                p = p.merge(o.partial);
                sample = parallel::merge_sample(sample, o.sample);
            }
            Ok((
                Evaluation {
                    output: QueryOutput::scalar(p.sum, p.matched),
                    touch: p.touch(),
                },
                sample,
            ))
        }
        (engine, QuerySpec::Join { size }) => {
            let probe = compiled::join_probe_side(db, size)?;
            let build_keys = compiled::join_build_keys(db, size)?.i64();
            if threads <= 1 {
                let table = compiled::build_join_table(db, size)?;
                execute_join_probe(engine, &table, &probe, build_keys.len(), spec, mapping, &vcfg)
            } else {
                let (table, build_sample) = parallel::parallel_build_join_table(
                    build_keys, threads, morsel, pin, mapping,
                )?;
                let (eval, probe_sample) = execute_join_probe(
                    engine,
                    &table,
                    &probe,
                    build_keys.len(),
                    spec,
                    mapping,
                    &vcfg,
                )?;
                Ok((eval, parallel::merge_sample(build_sample, probe_sample)))
            }
        }
        (Engine::Compiled, QuerySpec::GroupBy { groups }) => {
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut builder: Option<HashTableBuilder> = None;
                while let Some(r) = q.next_range() {
                    let part = compiled::groupby_range(li, groups, r)?;
                    builder = Some(merge_group_builders(builder, part));
                }
                Ok(builder.unwrap_or_else(|| HashTableBuilder::new(ENGINE_HASH_SEED)))
            })?;
            let (table, sample) = fold_groups(outcomes);
            Ok((
                Evaluation {
                    output: compiled::groups_output(&table),
                    touch: groupby_touch_of(rows as u64),
                },
                sample,
            ))
        }
        (Engine::Vectorized, QuerySpec::GroupBy { groups }) => {
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut scratch = Scratch::new(vcfg.vector_size);
                let mut builder = HashTableBuilder::new(ENGINE_HASH_SEED);
                let mut inter = 0u64;
                while let Some(r) = q.next_range() {
                    inter +=
                        vectorized::groupby_range(li, groups, &vcfg, &mut scratch, r, &mut builder)?;
                }
                Ok((builder, inter))
            })?;
            let mut sample = None;
            let mut merged: Option<HashTableBuilder> = None;
            let mut inter = 0u64;
            for o in outcomes {
                let (b, i) = o.partial;
                inter += i;
                merged = Some(merge_group_builders(merged, b));
                sample = parallel::merge_sample(sample, o.sample);
            }
            let table = merged
                .unwrap_or_else(|| HashTableBuilder::new(ENGINE_HASH_SEED))
                .finish();
            let mut touch = groupby_touch_of(rows as u64);
            touch.intermediate_bytes = inter;
            Ok((
                Evaluation {
                    output: compiled::groups_output(&table),
                    touch,
                },
                sample,
            ))
        }
        (Engine::Compiled, QuerySpec::Q1) => {
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut slots: compiled::Q1Slots = Default::default();
                while let Some(r) = q.next_range() {
                    slots = compiled::merge_q1(slots, &compiled::q1_range(li, r)?);
                }
                Ok(slots)
            })?;
            let mut sample = None;
            let mut slots: compiled::Q1Slots = Default::default();
            for o in outcomes {
                slots = compiled::merge_q1(slots, &o.partial);
                sample = parallel::merge_sample(sample, o.sample);
            }
            let matched: u64 = slots.iter().map(|s| s[4] as u64).sum();
            Ok((
                Evaluation {
                    output: compiled::q1_output(&slots),
                    touch: q1_touch_of(rows as u64, matched),
                },
                sample,
            ))
        }
        (Engine::Vectorized, QuerySpec::Q1) => {
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut scratch = Scratch::new(vcfg.vector_size);
                let mut slots: compiled::Q1Slots = Default::default();
                let mut stats = (0u64, 0u64);
                while let Some(r) = q.next_range() {
                    let (m, i) = vectorized::q1_range(li, &vcfg, &mut scratch, r, &mut slots)?;
                    stats.0 += m;
                    stats.1 += i;
                }
                Ok((slots, stats))
            })?;
            let mut sample = None;
            let mut slots: compiled::Q1Slots = Default::default();
            let mut inter = 0u64;
            let mut matched = 0u64;
            for o in outcomes {
                let (s, (m, i)) = o.partial;
                slots = compiled::merge_q1(slots, &s);
                matched += m;
                inter += i;
                sample = parallel::merge_sample(sample, o.sample);
            }
            let mut touch = q1_touch_of(rows as u64, matched);
            touch.intermediate_bytes = inter;
            Ok((
                Evaluation {
                    output: compiled::q1_output(&slots),
                    touch,
                },
                sample,
            ))
        }
        (Engine::Compiled, QuerySpec::Q6) => {
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut acc = ScalarAcc::default();
                while let Some(r) = q.next_range() {
                    acc = acc.merge(compiled::q6_range(li, r)?);
                }
                Ok(acc)
            })?;
            let (acc, sample) = fold_scalar(outcomes);
            Ok((
                Evaluation {
                    output: QueryOutput::scalar(acc.sum, acc.matched),
                    touch: q6_touch_of(rows as u64, acc.matched),
                },
                sample,
            ))
        }
        (Engine::Vectorized, QuerySpec::Q6) => {
            let outcomes = parallel::run_partials(rows, morsel, threads, pin, mapping, |_, q| {
                let mut scratch = Scratch::new(vcfg.vector_size);
                let mut p = vectorized::VQ6Partial::default();
                while let Some(r) = q.next_range() {
                    p = p.merge(vectorized::q6_range(li, &vcfg, &mut scratch, r)?);
                }
                Ok(p)
            })?;
            let mut sample = None;
            let mut p = vectorized::VQ6Partial::default();
            for o in outcomes {
                p = p.merge(o.partial);
                sample = parallel::merge_sample(sample, o.sample);
            }
            Ok((
                Evaluation {
                    output: QueryOutput::scalar(p.sum, p.matched),
                    touch: p.touch(),
                },
                sample,
            ))
        }
    }
}

fn execute_join_probe<T: ProbeTable>(
    engine: Engine,
    table: &T,
    probe: &compiled::JoinProbe<'_>,
    build_rows: usize,
    spec: &RunSpec,
    mapping: Option<&EventMapping>,
    vcfg: &VectorConfig,
) -> Result<(Evaluation, Option<CounterSample>)> {
    let rows = probe.keys.len();
    match engine {
        Engine::Compiled => {
            let outcomes = parallel::run_partials(
                rows,
                spec.morsel_rows,
                spec.threads,
                spec.pin_cores,
                mapping,
                |_, q| {
                    let mut acc = WideAcc::default();
                    while let Some(r) = q.next_range() {
                        acc = acc.merge(compiled::join_probe_range(table, probe, r));
                    }
                    Ok(acc)
                },
            )?;
            let mut sample = None;
            let mut acc = WideAcc::default();
            for o in outcomes {
                acc = acc.merge(o.partial);
                sample = parallel::merge_sample(sample, o.sample);
            }
            let acc = acc.into_scalar("join")?;
            Ok((
                Evaluation {
                    output: QueryOutput::scalar(acc.sum, acc.matched),
                    touch: join_touch_of(build_rows as u64, rows as u64, acc.matched, probe, 0),
                },
                sample,
            ))
        }
        Engine::Vectorized => {
            let outcomes = parallel::run_partials(
                rows,
                spec.morsel_rows,
                spec.threads,
                spec.pin_cores,
                mapping,
                |_, q| {
                    let mut scratch = Scratch::new(vcfg.vector_size);
                    let mut p = vectorized::VJoinPartial::default();
                    while let Some(r) = q.next_range() {
                        p = p.merge(vectorized::join_probe_range(table, probe, vcfg, &mut scratch, r)?);
                    }
                    Ok(p)
                },
            )?;
            let mut sample = None;
            let mut p = vectorized::VJoinPartial::default();
            for o in outcomes {
                p = p.merge(o.partial);
                sample = parallel::merge_sample(sample, o.sample);
            }
            let acc = p.acc.into_scalar("join")?;
            Ok((
                Evaluation {
                    output: QueryOutput::scalar(acc.sum, acc.matched),
                    touch: join_touch_of(
                        build_rows as u64,
                        rows as u64,
                        acc.matched,
                        probe,
                        p.intermediate_bytes,
                    ),
                },
                sample,
            ))
        }
    }
}

fn fold_scalar(
    outcomes: Vec<parallel::WorkerOutcome<ScalarAcc>>,
) -> (ScalarAcc, Option<CounterSample>) {
    let mut acc = ScalarAcc::default();
    let mut sample = None;
    for o in outcomes {
        acc = acc.merge(o.partial);
        sample = parallel::merge_sample(sample, o.sample);
    }
    (acc, sample)
}

fn fold_groups(
    outcomes: Vec<parallel::WorkerOutcome<HashTableBuilder>>,
) -> (crate::columnar::ChainedHashTable, Option<CounterSample>) {
    let mut merged: Option<HashTableBuilder> = None;
    let mut sample = None;
    for o in outcomes {
        merged = Some(merge_group_builders(merged, o.partial));
        sample = parallel::merge_sample(sample, o.sample);
    }
    (
        merged
            .unwrap_or_else(|| HashTableBuilder::new(ENGINE_HASH_SEED))
            .finish(),
        sample,
    )
}

fn merge_group_builders(
    into: Option<HashTableBuilder>,
    from: HashTableBuilder,
) -> HashTableBuilder {
    match into {
        None => from,
        Some(mut target) => {
            for (key, value) in from.finish().iter_entries() {
                target.upsert_add(key, value);
            }
            target
        }
    }
}

fn groupby_touch_of(rows: u64) -> TouchStats {
    TouchStats {
        rows_scanned: rows,
        bytes_touched: rows * (8 + 4 + 8 + 8),
        intermediate_bytes: 0,
    }
}

fn q1_touch_of(rows: u64, matched: u64) -> TouchStats {
    TouchStats {
        rows_scanned: rows,
        bytes_touched: rows * 12 + matched * 32,
        intermediate_bytes: 0,
    }
}

fn q6_touch_of(rows: u64, matched: u64) -> TouchStats {
    TouchStats {
        rows_scanned: rows,
        bytes_touched: rows * 20 + matched * 8,
        intermediate_bytes: 0,
    }
}

fn join_touch_of(
    build_rows: u64,
    probe_rows: u64,
    matched: u64,
    probe: &compiled::JoinProbe<'_>,
    intermediate_bytes: u64,
) -> TouchStats {
    TouchStats {
        rows_scanned: build_rows + probe_rows,
        bytes_touched: build_rows * 8 + probe_rows * 8 + matched * 8 * probe.agg_cols.len() as u64,
        intermediate_bytes,
    }
}

/// Per-repeat measurement: iterations timed and (when available) counted.
#[derive(Debug, Clone, Serialize)]
pub struct RepeatStats {
    pub iterations: u64,
    pub secs_per_iter: f64,
    pub sample: Option<CounterSample>,
    pub breakdown: Option<CycleBreakdown>,
    pub bandwidth: BandwidthReport,
}

/// Everything a run produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub spec: RunSpec,
    pub output: QueryOutput,
    pub touch: TouchStats,
    pub rows_per_iter: u64,
    pub repeats: Vec<RepeatStats>,
    pub median_secs_per_iter: f64,
    /// Some(true) after a successful `--verify`; None when not requested.
    pub verified: Option<bool>,
    /// Capability notices accumulated while degrading (counters,
    /// prefetchers).
    pub degraded: Vec<String>,
    /// Prefetcher configuration the run executed under.
    pub prefetchers: String,
}

impl RunResult {
    pub fn is_degraded(&self) -> bool {
        !self.degraded.is_empty()
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Runs one spec through the full protocol: prepare data, optional
/// prefetcher configuration, warmup (unprofiled), measured repeats with
/// per-worker counter sessions, optional oracle verification.
pub fn run(spec: &RunSpec) -> Result<RunResult> {
    spec.validate()?;
    let mut degraded = Vec::new();

    let (db, thresholds) = prepare_database(spec)?;

    // Counter capability is decided once; runs proceed timing-only when
    // counters are unavailable.
    let mapping = match &spec.events_file {
        Some(path) => Some(EventMapping::load(path)?),
        None => Some(EventMapping::generic()),
    };
    let mapping = match profiler::perf::counters_available() {
        Ok(()) => mapping,
        Err(Error::Capability(reason)) => {
            degraded.push(format!("counters unavailable: {reason}"));
            None
        }
        Err(other) => return Err(other),
    };

    let _prefetch_guard = match spec.prefetchers {
        None => None,
        Some(config) => {
            match profiler::set_prefetchers(config, spec.privilege_acknowledged) {
                Ok(guard) => Some(guard),
                Err(e) => {
                    degraded.push(format!("default prefetchers: {e}"));
                    None
                }
            }
        }
    };
    let prefetchers = match (&_prefetch_guard, spec.prefetchers) {
        (Some(g), _) => g.applied.as_str().to_string(),
        (None, _) => "default".to_string(),
    };

    let oracle_output = if spec.verify {
        Some(oracle::ref_eval(&spec.query, &db)?)
    } else {
        None
    };

    // Warmup, unprofiled.
    let warmup_deadline = Instant::now() + std::time::Duration::from_secs_f64(spec.warmup_secs);
    if spec.warmup_secs > 0.0 {
        loop {
            execute_query(&db, thresholds.as_ref(), spec, None)?;
            if Instant::now() >= warmup_deadline {
                break;
            }
        }
    }

    // Measured repeats.
    let budget_per_repeat = spec.measure_secs / spec.repeats as f64;
    let mut repeats = Vec::with_capacity(spec.repeats);
    let mut canonical: Option<(Evaluation, u64)> = None;
    for _ in 0..spec.repeats {
        let repeat_start = Instant::now();
        let mut iterations = 0u64;
        let mut sample_acc: Option<CounterSample> = None;
        let mut eval_out: Option<Evaluation>;
        loop {
            let (eval, sample) = execute_query(&db, thresholds.as_ref(), spec, mapping.as_ref())?;
            iterations += 1;
            if let Some(want) = &oracle_output {
                if eval.output != *want {
                    return Err(Error::Verification {
                        query: spec.query.label(),
                        engine: format!("{:?}", eval.output),
                        oracle: format!("{want:?}"),
                    });
                }
            }
            if let Some((prev, _)) = &canonical {
                if prev.output != eval.output {
                    return Err(Error::Verification {
                        query: spec.query.label(),
                        engine: format!("{:?}", eval.output),
                        oracle: "nondeterministic result across iterations".to_string(),
                    });
                }
            }
            sample_acc = match (sample_acc, sample) {
                (Some(a), Some(b)) => Some(a.accumulate(&b)),
                (a, b) => a.or(b),
            };
            eval_out = Some(eval);
            if repeat_start.elapsed().as_secs_f64() >= budget_per_repeat {
                break;
            }
        }
        let elapsed = repeat_start.elapsed().as_secs_f64();
        let eval = eval_out.expect("at least one iteration ran");
        let secs_per_iter = elapsed / iterations as f64;
        let bandwidth = BandwidthReport {
            measured_gbs: None,
            estimated_gbs: (eval.touch.bytes_touched * iterations) as f64 / elapsed / 1e9,
            socket_id: 0,
            elapsed,
        };
        let bd = sample_acc.as_ref().map(breakdown);
        repeats.push(RepeatStats {
            iterations,
            secs_per_iter,
            sample: sample_acc,
            breakdown: bd,
            bandwidth,
        });
        let rows = eval.touch.rows_scanned;
        canonical = Some((eval, rows));
    }

    let (eval, rows_per_iter) = canonical.expect("repeats >= 1");
    let median_secs = median(repeats.iter().map(|r| r.secs_per_iter).collect());
    Ok(RunResult {
        spec: spec.clone(),
        output: eval.output,
        touch: eval.touch,
        rows_per_iter,
        repeats,
        median_secs_per_iter: median_secs,
        verified: oracle_output.map(|_| true),
        degraded,
        prefetchers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::SelectionMode;

    fn quick_spec(engine: Engine, query: QuerySpec) -> RunSpec {
        RunSpec::new(engine, query, 0.001, 42).quick()
    }

    #[test]
    fn validate_rejects_bad_specs() {
        let mut s = quick_spec(Engine::Compiled, QuerySpec::Projection { degree: 4 });
        s.threads = physical_cores() + 1;
        assert!(s.validate().is_err());
        s.threads = 0;
        assert!(s.validate().is_err());
        let s = quick_spec(Engine::Compiled, QuerySpec::Projection { degree: 9 });
        assert!(s.validate().is_err());
        let mut s = quick_spec(Engine::Compiled, QuerySpec::Q6);
        s.repeats = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn run_verifies_against_oracle() {
        let mut spec = quick_spec(Engine::Vectorized, QuerySpec::Q1);
        spec.verify = true;
        let result = run(&spec).unwrap();
        assert_eq!(result.verified, Some(true));
        assert_eq!(result.output.group_count(), Some(4));
        assert!(result.median_secs_per_iter > 0.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let max = physical_cores();
        for query in [
            QuerySpec::Projection { degree: 4 },
            QuerySpec::Selection {
                p: 0.5,
                mode: SelectionMode::Branched,
            },
            QuerySpec::Join {
                size: crate::query::JoinSize::Medium,
            },
            QuerySpec::GroupBy { groups: 100 },
            QuerySpec::Q1,
            QuerySpec::Q6,
        ] {
            for engine in [Engine::Compiled, Engine::Vectorized] {
                let mut outputs = Vec::new();
                for threads in [1, 2, 4, max] {
                    if threads > max {
                        continue;
                    }
                    let mut spec = quick_spec(engine, query);
                    spec.threads = threads;
                    spec.warmup_secs = 0.0;
                    spec.measure_secs = 0.01;
                    let result = run(&spec).unwrap();
                    outputs.push(result.output);
                }
                assert!(
                    outputs.windows(2).all(|w| w[0] == w[1]),
                    "{engine:?} {query:?} differs across thread counts"
                );
            }
        }
    }

    #[test]
    fn parallel_morsel_sizes_do_not_change_results() {
        let mut spec = quick_spec(Engine::Compiled, QuerySpec::GroupBy { groups: 77 });
        spec.threads = physical_cores().min(2);
        spec.warmup_secs = 0.0;
        spec.measure_secs = 0.01;
        let mut outputs = Vec::new();
        for morsel in [128, 1000, 16_384] {
            spec.morsel_rows = morsel;
            outputs.push(run(&spec).unwrap().output);
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn degraded_runs_note_capabilities() {
        let mut spec = quick_spec(Engine::Compiled, QuerySpec::Projection { degree: 1 });
        spec.prefetchers = Some(PrefetcherConfig::AllOff);
        spec.privilege_acknowledged = false;
        let result = run(&spec).unwrap();
        assert_eq!(result.prefetchers, "default");
        assert!(result
            .degraded
            .iter()
            .any(|d| d.contains("default prefetchers")));
    }
}
