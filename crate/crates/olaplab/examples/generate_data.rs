//! Generate the TPC-H-subset database, inspect its shape, and write it to
//! disk in the columnar binary format.
//!
//!     cargo run --release --example generate_data [-- <sf> <seed> <out-dir>]

use olaplab::datagen::{generate_database, io, GenSpec};

fn main() -> olaplab::Result<()> {
    let mut args = std::env::args().skip(1);
    let sf: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let seed: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(42);
    let out = args.next();

    let spec = GenSpec::new(sf, seed);
    let db = generate_database(&spec)?;

    println!("database sf={sf} seed={seed}");
    println!("{:<10} {:>10} {:>14} columns", "table", "rows", "bytes");
    for table in db.tables() {
        println!(
            "{:<10} {:>10} {:>14} {}",
            table.name(),
            table.row_count(),
            table.byte_size(),
            table
                .columns()
                .iter()
                .map(|c| c.name())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    println!("total resident bytes: {}", db.resident_bytes());

    // Selection thresholds are analytic; exact mode makes them exact.
    for p in [0.1, 0.5, 0.9] {
        let (db_p, thr) = db.with_selection(p)?;
        let ship = db_p.lineitem().column("l_shipdate")?.i32();
        let measured =
            ship.iter().filter(|&&v| v < thr.shipdate).count() as f64 / ship.len() as f64;
        println!("p={p}: threshold day {} -> measured {measured:.5}", thr.shipdate);
    }

    if let Some(dir) = out {
        io::write_database(&db, std::path::Path::new(&dir))?;
        println!("written to {dir}");
    }
    Ok(())
}
