//! The three hash-join micro-benchmarks (small: supplier x nation,
//! medium: partsupp x supplier, large: lineitem x orders) plus the
//! group-by, with chain-length statistics of the underlying hash tables:
//! the join build over unique keys keeps chains in {0, 1, 2}, while group
//! tables grow through doubling and land at a lower load factor with a
//! different histogram shape.
//!
//!     cargo run --release --example join_chain_stats

use olaplab::compiled::{build_join_table, c_groupby, c_hash_join, groupby_range};
use olaplab::datagen::{generate_database, GenSpec};
use olaplab::query::{JoinSize, QueryOutput};

fn main() -> olaplab::Result<()> {
    let db = generate_database(&GenSpec::new(0.1, 42))?;

    println!("joins at sf=0.1:");
    println!(
        "{:<8} {:>10} {:>10} {:>16} {:>10} {:>8} {:>8}",
        "size", "build", "matches", "sum", "mean", "stddev", "max"
    );
    for size in [JoinSize::Small, JoinSize::Medium, JoinSize::Large] {
        let table = build_join_table(&db, size)?;
        let stats = table.chain_stats();
        let out = c_hash_join(&db, size)?;
        let QueryOutput::Scalar(s) = out.output else { unreachable!() };
        println!(
            "{:<8} {:>10} {:>10} {:>16} {:>10.3} {:>8.3} {:>8}",
            size.as_str(),
            table.entry_count(),
            s.rows_matched,
            s.value,
            stats.mean,
            stats.stddev,
            stats.max
        );
    }

    // Group table built by upserts; its stats come out of the same audit.
    let groups = 10_000;
    let builder = groupby_range(db.lineitem(), groups, 0..db.lineitem().row_count())?;
    let table = builder.finish();
    let stats = table.chain_stats();
    let out = c_groupby(db.lineitem(), groups)?;
    println!("\ngroup-by with {groups} groups:");
    println!(
        "  groups={} buckets={} mean={:.3} stddev={:.3} max={}",
        out.output.group_count().unwrap(),
        stats.bucket_count(),
        stats.mean,
        stats.stddev,
        stats.max
    );
    println!("  chain-length histogram: {:?}", stats.histogram);
    Ok(())
}
