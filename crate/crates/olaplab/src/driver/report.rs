//! Machine-readable result emission: versioned JSON, a stable CSV, and
//! per-figure plot-data files (plain numeric tables).
//!
//! CSV columns, in order:
//! `run_id, status, engine, query, sf, seed, exact, threads, vector_size,
//! simd, prefetchers, repeats, iterations, median_secs_per_iter,
//! result_kind, scalar_value, rows_matched, group_count, rows_scanned,
//! bytes_touched, intermediate_bytes, est_gbs, meas_gbs, cycles_per_row,
//! instructions_per_row, mispred_per_row, retiring, branch_misp, icache,
//! decoding, dcache, execution, unknown, verified, degraded, error`

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{RunResult, RunSpec};
use crate::error::Result;
use crate::query::QueryOutput;

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// One matrix record: a run that either completed or failed in isolation.
#[derive(Debug, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunRecord {
    Ok(Box<RunResult>),
    Error { spec: RunSpec, error: String },
}

impl RunRecord {
    pub fn spec(&self) -> &RunSpec {
        match self {
            RunRecord::Ok(r) => &r.spec,
            RunRecord::Error { spec, .. } => spec,
        }
    }
}

#[derive(Serialize)]
struct ResultsFile<'a> {
    schema_version: u32,
    results: &'a [RunRecord],
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str = "run_id,status,engine,query,sf,seed,exact,threads,vector_size,simd,\
prefetchers,repeats,iterations,median_secs_per_iter,result_kind,scalar_value,rows_matched,\
group_count,rows_scanned,bytes_touched,intermediate_bytes,est_gbs,meas_gbs,cycles_per_row,\
instructions_per_row,mispred_per_row,retiring,branch_misp,icache,decoding,dcache,execution,\
unknown,verified,degraded,error";

fn csv_row(run_id: usize, record: &RunRecord) -> String {
    let spec = record.spec();
    let mut row = String::new();
    let _ = write!(
        row,
        "{run_id},{status},{engine},{query},{sf},{seed},{exact},{threads},{vs},{simd},",
        status = match record {
            RunRecord::Ok(_) => "ok",
            RunRecord::Error { .. } => "error",
        },
        engine = spec.engine.as_str(),
        query = csv_quote(&spec.query.label()),
        sf = spec.sf,
        seed = spec.seed,
        exact = spec.exact_selectivity,
        threads = spec.threads,
        vs = spec.vector_size,
        simd = spec.simd,
    );
    match record {
        RunRecord::Error { error, .. } => {
            // prefetchers..degraded stay blank; error last.
            row.push_str(&",".repeat(24));
            row.push_str(&csv_quote(error));
        }
        RunRecord::Ok(r) => {
            let iterations: u64 = r.repeats.iter().map(|x| x.iterations).sum();
            let (kind, scalar, matched, groups) = match &r.output {
                QueryOutput::Scalar(s) => {
                    ("scalar", Some(s.value), Some(s.rows_matched), None)
                }
                QueryOutput::Groups(g) => ("groups", None, None, Some(g.len())),
            };
            let total_rows: f64 = r.repeats.iter().map(|x| x.iterations).sum::<u64>() as f64
                * r.rows_per_iter as f64;
            let sample = r.repeats.iter().filter_map(|x| x.sample.as_ref()).next();
            let per_row = |v: Option<u64>| -> String {
                match (v, total_rows > 0.0) {
                    (Some(count), true) => format!("{:.6}", count as f64 / total_rows),
                    _ => String::new(),
                }
            };
            let bd = r.repeats.iter().filter_map(|x| x.breakdown.as_ref()).next();
            let est_gbs = median_f64(r.repeats.iter().map(|x| x.bandwidth.estimated_gbs));
            let meas: Vec<f64> = r
                .repeats
                .iter()
                .filter_map(|x| x.bandwidth.measured_gbs)
                .collect();
            let _ = write!(
                row,
                "{prefetchers},{repeats},{iterations},{median:.9},{kind},{scalar},{matched},{groups},\
{rows_scanned},{bytes},{inter},{est:.4},{meas},{cyc},{ins},{mis},{ret},{bm},{ic},{de},{dc},{ex},{un},\
{verified},{degraded},",
                prefetchers = r.prefetchers,
                repeats = r.repeats.len(),
                median = r.median_secs_per_iter,
                scalar = fmt_opt(scalar),
                matched = fmt_opt(matched),
                groups = fmt_opt(groups),
                rows_scanned = r.touch.rows_scanned,
                bytes = r.touch.bytes_touched,
                inter = r.touch.intermediate_bytes,
                est = est_gbs,
                meas = if meas.is_empty() {
                    String::new()
                } else {
                    format!("{:.4}", median_f64(meas.iter().copied()))
                },
                cyc = per_row(sample.and_then(|s| s.core_cycles)),
                ins = per_row(sample.and_then(|s| s.instructions_retired)),
                mis = per_row(sample.and_then(|s| s.branch_mispredictions)),
                ret = fmt_opt(bd.map(|b| format!("{:.4}", b.retiring))),
                bm = fmt_opt(bd.map(|b| format!("{:.4}", b.branch_misp))),
                ic = fmt_opt(bd.map(|b| format!("{:.4}", b.icache))),
                de = fmt_opt(bd.map(|b| format!("{:.4}", b.decoding))),
                dc = fmt_opt(bd.map(|b| format!("{:.4}", b.dcache))),
                ex = fmt_opt(bd.map(|b| format!("{:.4}", b.execution))),
                un = fmt_opt(bd.map(|b| format!("{:.4}", b.unknown))),
                verified = fmt_opt(r.verified),
                degraded = csv_quote(&r.degraded.join("; ")),
            );
        }
    }
    row
}

fn median_f64(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Renders the results CSV (header + one row per record).
pub fn to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        out.push_str(&csv_row(i, r));
        out.push('\n');
    }
    out
}

/// Renders the versioned results JSON.
pub fn to_json(records: &[RunRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ResultsFile {
        schema_version: RESULTS_SCHEMA_VERSION,
        results: records,
    })?)
}

/// Breakdown stack rows: one line per completed, counter-covered run.
pub fn breakdown_stack_tsv(records: &[RunRecord]) -> String {
    let mut out =
        String::from("label\tretiring\tbranch_misp\ticache\tdecoding\tdcache\texecution\tunknown\n");
    for r in records {
        if let RunRecord::Ok(res) = r {
            if let Some(bd) = res.repeats.iter().filter_map(|x| x.breakdown.as_ref()).next() {
                let _ = writeln!(
                    out,
                    "{}/{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                    res.spec.engine.as_str(),
                    res.spec.query.label(),
                    bd.retiring,
                    bd.branch_misp,
                    bd.icache,
                    bd.decoding,
                    bd.dcache,
                    bd.execution,
                    bd.unknown
                );
            }
        }
    }
    out
}

/// Bandwidth-vs-threads rows for scan-heavy figures.
pub fn bandwidth_vs_threads_tsv(records: &[RunRecord]) -> String {
    let mut rows: Vec<(String, usize, f64, Option<f64>)> = Vec::new();
    for r in records {
        if let RunRecord::Ok(res) = r {
            let est = median_f64(res.repeats.iter().map(|x| x.bandwidth.estimated_gbs));
            let meas: Vec<f64> = res
                .repeats
                .iter()
                .filter_map(|x| x.bandwidth.measured_gbs)
                .collect();
            rows.push((
                format!("{}/{}", res.spec.engine.as_str(), res.spec.query.label()),
                res.spec.threads,
                est,
                if meas.is_empty() {
                    None
                } else {
                    Some(median_f64(meas.iter().copied()))
                },
            ));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = String::from("label\tthreads\test_gbs\tmeas_gbs\n");
    for (label, threads, est, meas) in rows {
        let _ = writeln!(
            out,
            "{label}\t{threads}\t{est:.4}\t{}",
            meas.map(|m| format!("{m:.4}")).unwrap_or_default()
        );
    }
    out
}

/// Misprediction-per-row vs selectivity rows (selection runs only).
pub fn mispred_vs_selectivity_tsv(records: &[RunRecord]) -> String {
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    for r in records {
        if let RunRecord::Ok(res) = r {
            let crate::query::QuerySpec::Selection { p, mode } = res.spec.query else {
                continue;
            };
            let total_rows: f64 = res.repeats.iter().map(|x| x.iterations).sum::<u64>() as f64
                * res.rows_per_iter as f64;
            let misp: u64 = res
                .repeats
                .iter()
                .filter_map(|x| x.sample.as_ref().and_then(|s| s.branch_mispredictions))
                .sum();
            if total_rows > 0.0 && misp > 0 {
                rows.push((
                    format!("{}/{}", res.spec.engine.as_str(), mode.as_str()),
                    p,
                    misp as f64 / total_rows,
                ));
            }
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = String::from("label\tselectivity\tmispred_per_row\n");
    for (label, p, m) in rows {
        let _ = writeln!(out, "{label}\t{p}\t{m:.6}");
    }
    out
}

/// Writes results.json, results.csv and the plot-data files into `dir`.
pub fn write_all(records: &[RunRecord], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.json"), to_json(records)?)?;
    fs::write(dir.join("results.csv"), to_csv(records))?;
    fs::write(dir.join("plot_breakdown_stack.tsv"), breakdown_stack_tsv(records))?;
    fs::write(
        dir.join("plot_bandwidth_vs_threads.tsv"),
        bandwidth_vs_threads_tsv(records),
    )?;
    fs::write(
        dir.join("plot_mispred_vs_selectivity.tsv"),
        mispred_vs_selectivity_tsv(records),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{run, Engine, RunSpec};
    use crate::query::QuerySpec;

    fn one_record() -> RunRecord {
        let spec = RunSpec::new(
            Engine::Compiled,
            QuerySpec::Projection { degree: 2 },
            0.001,
            42,
        )
        .quick();
        RunRecord::Ok(Box::new(run(&spec).unwrap()))
    }

    #[test]
    fn empty_results_emit_header_only() {
        let csv = to_csv(&[]);
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("run_id,status,engine"));
        let json = to_json(&[]).unwrap();
        assert!(json.contains("\"schema_version\": 1"));
    }

    #[test]
    fn single_result_round_trips_through_json() {
        let rec = one_record();
        let json = to_json(std::slice::from_ref(&rec)).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["schema_version"], 1);
        let r0 = &parsed["results"][0];
        assert_eq!(r0["status"], "ok");
        assert_eq!(r0["spec"]["engine"], "compiled");
        assert_eq!(
            r0["output"]["data"]["value"].as_i64().unwrap(),
            match &rec {
                RunRecord::Ok(r) => match &r.output {
                    QueryOutput::Scalar(s) => s.value,
                    _ => panic!(),
                },
                _ => panic!(),
            }
        );
        let csv = to_csv(&[rec]);
        assert_eq!(csv.lines().count(), 2);
        let header_cols = CSV_HEADER.split(',').count();
        let row_cols = csv_field_count(csv.lines().nth(1).unwrap());
        assert_eq!(header_cols, row_cols);
    }

    /// Quote-aware CSV field counter.
    fn csv_field_count(line: &str) -> usize {
        let mut fields = 1;
        let mut in_quotes = false;
        for c in line.chars() {
            match c {
                '"' => in_quotes = !in_quotes,
                ',' if !in_quotes => fields += 1,
                _ => {}
            }
        }
        fields
    }

    fn with_synthetic_sample(
        spec: RunSpec,
        cycles: u64,
        instructions: u64,
        mispredictions: u64,
        dcache: u64,
    ) -> RunRecord {
        use crate::profiler::{breakdown, BreakdownParams, CounterSample};
        let mut result = run(&spec).unwrap();
        let mut sample = CounterSample::synthetic(1.0, BreakdownParams::default());
        sample.core_cycles = Some(cycles);
        sample.instructions_retired = Some(instructions);
        sample.branch_mispredictions = Some(mispredictions);
        sample.icache_miss_events = Some(0);
        sample.decode_stall_events = Some(0);
        sample.dcache_stall_events = Some(dcache);
        sample.execution_stall_events = Some(0);
        result.repeats[0].breakdown = Some(breakdown(&sample));
        result.repeats[0].sample = Some(sample);
        RunRecord::Ok(Box::new(result))
    }

    /// Stack rows inherit the breakdown invariant: components sum to one
    /// within 0.05.
    #[test]
    fn breakdown_stack_rows_sum_to_one() {
        let spec = RunSpec::new(
            Engine::Vectorized,
            QuerySpec::Projection { degree: 3 },
            0.001,
            42,
        )
        .quick();
        let rec = with_synthetic_sample(spec, 1_000_000, 2_000_000, 10_000, 400_000);
        let tsv = breakdown_stack_tsv(std::slice::from_ref(&rec));
        let row = tsv.lines().nth(1).expect("one stack row");
        let parts: Vec<f64> = row
            .split('\t')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        let sum: f64 = parts.iter().sum();
        assert!((sum - 1.0).abs() <= 0.05, "stack row sums to {sum}");
    }

    /// The misprediction figure peaks at p = 0.5 for branched vectorized
    /// runs (synthetic counts shaped like the measured curve).
    #[test]
    fn mispred_figure_peaks_at_half_selectivity() {
        use crate::query::SelectionMode;
        let mut records = Vec::new();
        for (p, mispred) in [(0.1, 12_000u64), (0.5, 90_000), (0.9, 20_000)] {
            let mut spec = RunSpec::new(
                Engine::Vectorized,
                QuerySpec::Selection {
                    p,
                    mode: SelectionMode::Branched,
                },
                0.001,
                42,
            )
            .quick();
            spec.exact_selectivity = true;
            records.push(with_synthetic_sample(spec, 1_000_000, 500_000, mispred, 0));
        }
        let tsv = mispred_vs_selectivity_tsv(&records);
        let mut best: Option<(f64, f64)> = None;
        for line in tsv.lines().skip(1) {
            let mut cols = line.split('\t');
            let _label = cols.next().unwrap();
            let p: f64 = cols.next().unwrap().parse().unwrap();
            let m: f64 = cols.next().unwrap().parse().unwrap();
            if best.map_or(true, |(_, bm)| m > bm) {
                best = Some((p, m));
            }
        }
        assert_eq!(best.unwrap().0, 0.5, "curve must peak at p = 0.5");
    }

    #[test]
    fn files_land_in_out_dir() {
        let dir = tempfile::tempdir().unwrap();
        write_all(&[one_record()], dir.path()).unwrap();
        for f in [
            "results.json",
            "results.csv",
            "plot_breakdown_stack.tsv",
            "plot_bandwidth_vs_threads.tsv",
            "plot_mispred_vs_selectivity.tsv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
