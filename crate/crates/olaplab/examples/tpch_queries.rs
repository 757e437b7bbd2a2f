//! TPC-H Q1 (low-cardinality group-by, 4 groups) and Q6 (five-predicate
//! highly selective filter) in both engines, verified against the
//! reference interpreter.
//!
//!     cargo run --release --example tpch_queries

use olaplab::driver::{run, Engine, RunSpec};
use olaplab::query::{QueryOutput, QuerySpec};

fn main() -> olaplab::Result<()> {
    for query in [QuerySpec::Q1, QuerySpec::Q6] {
        println!("== {} ==", query.label());
        for engine in [Engine::Compiled, Engine::Vectorized] {
            let mut spec = RunSpec::new(engine, query, 0.1, 42);
            spec.verify = true;
            spec.repeats = 3;
            spec.warmup_secs = 0.2;
            spec.measure_secs = 0.8;
            let result = run(&spec)?;
            print!(
                "{:<12} {:>9.3} ms/iter  verified={:?}  ",
                engine.as_str(),
                result.median_secs_per_iter * 1e3,
                result.verified.unwrap()
            );
            match &result.output {
                QueryOutput::Groups(groups) => {
                    println!("{} groups", groups.len());
                    if engine == Engine::Compiled {
                        println!(
                            "  {:<6} {:>12} {:>16} {:>18} {:>20} {:>9}",
                            "key", "sum_qty", "sum_base", "sum_disc_price", "sum_charge", "count"
                        );
                        for g in groups {
                            println!(
                                "  {:<6} {:>12} {:>16} {:>18} {:>20} {:>9}",
                                g.key, g.values[0], g.values[1], g.values[2], g.values[3],
                                g.values[4]
                            );
                        }
                    }
                }
                QueryOutput::Scalar(s) => {
                    let total = result.rows_per_iter.max(1);
                    println!(
                        "revenue={} rows={} (selectivity {:.2}%)",
                        s.value,
                        s.rows_matched,
                        s.rows_matched as f64 / total as f64 * 100.0
                    );
                }
            }
        }
        println!();
    }
    Ok(())
}
