//! Run-matrix workflow end to end: expand a cross-product config, execute
//! every record with verification, and emit the report files (versioned
//! JSON, stable CSV, per-figure plot data).
//!
//!     cargo run --release --example run_matrix [-- <out-dir>]

use olaplab::driver::{self, matrix::MatrixConfig, report};

const CONFIG: &str = r#"{
    "defaults": {
        "query": "selection", "sf": 0.05, "seed": 42,
        "exact_selectivity": true, "verify": true,
        "repeats": 2, "warmup_secs": 0.1, "measure_secs": 0.4
    },
    "axes": {
        "engine": ["compiled", "vectorized"],
        "selectivity": [0.1, 0.5, 0.9],
        "mode": ["branched", "predicated"]
    }
}"#;

fn main() -> olaplab::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "matrix-results".to_string());
    let specs = MatrixConfig::parse(CONFIG)?.expand()?;
    println!("selection replication matrix: {} runs", specs.len());

    let mut records = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        println!(
            "[{}/{}] {} {}",
            i + 1,
            specs.len(),
            spec.engine.as_str(),
            spec.query.label()
        );
        match driver::run(spec) {
            Ok(r) => records.push(report::RunRecord::Ok(Box::new(r))),
            Err(e) => records.push(report::RunRecord::Error {
                spec: spec.clone(),
                error: e.to_string(),
            }),
        }
    }
    report::write_all(&records, std::path::Path::new(&out))?;
    println!("\nwrote results.json, results.csv and plot_*.tsv under {out}/");

    let csv = report::to_csv(&records);
    for line in csv.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
