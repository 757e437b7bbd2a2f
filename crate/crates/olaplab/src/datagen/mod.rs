//! Deterministic generation of the TPC-H-subset tables with analytically
//! controlled predicate selectivities.
//!
//! The generator keeps the TPC-H schema and cardinality ratios but replaces
//! dbgen's distributions with seeded uniform ones so that selection
//! thresholds are analytic. Money is stored as exact scaled integers
//! (hundredths), dates as day offsets from 1992-01-01 over a 7-year range.
//! Only the columns the in-scope workloads touch are generated.

pub mod io;
mod thresholds;

pub use thresholds::{install_selection, threshold_for_selectivity};

use rand::distributions::uniform::SampleUniform;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::columnar::{hash64, Column, ColumnKind, ColumnarTable};
use crate::error::{Error, Result};
use crate::query::{ThresholdSet, DATE_DAYS};

/// Lineitems per order; fixed so `lineitem = 4 * orders` and the dense
/// `(l_orderkey, l_linenumber)` pair enumerates rows exactly.
pub const LINES_PER_ORDER: usize = 4;

/// Return-flag codes: A=0, N=1, R=2.
pub const RETURNFLAG_A: i32 = 0;
pub const RETURNFLAG_N: i32 = 1;
pub const RETURNFLAG_R: i32 = 2;
/// Line-status codes: F=0, O=1.
pub const LINESTATUS_F: i32 = 0;
pub const LINESTATUS_O: i32 = 1;

/// Documented value ranges (inclusive) for the uniform columns.
pub const QUANTITY_RANGE: (i64, i64) = (1, 50);
pub const EXTENDEDPRICE_RANGE: (i64, i64) = (90_000, 10_000_000); // cents
pub const DISCOUNT_RANGE: (i64, i64) = (0, 10); // hundredths
pub const TAX_RANGE: (i64, i64) = (0, 8); // hundredths
pub const ACCTBAL_RANGE: (i64, i64) = (-99_999, 999_999); // cents
pub const AVAILQTY_RANGE: (i64, i64) = (1, 9_999);
pub const SUPPLYCOST_RANGE: (i64, i64) = (100, 100_000); // cents

/// Generator parameters. Equal specs reproduce byte-identical tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub scale_factor: f64,
    pub seed: u64,
    #[serde(default)]
    pub exact_selectivity: bool,
}

impl GenSpec {
    pub fn new(scale_factor: f64, seed: u64) -> Self {
        GenSpec {
            scale_factor,
            seed,
            exact_selectivity: false,
        }
    }

    pub fn exact(mut self) -> Self {
        self.exact_selectivity = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale_factor.is_finite() || self.scale_factor < 0.0 {
            return Err(Error::spec(format!(
                "scale factor must be a non-negative finite number, got {}",
                self.scale_factor
            )));
        }
        // Row-count representation guard: lineitem is the largest table.
        if 6_000_000.0 * self.scale_factor > 1e15 {
            return Err(Error::spec(format!(
                "scale factor {} overflows row-count representation",
                self.scale_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    Lineitem,
    Orders,
    Supplier,
    Nation,
    Partsupp,
}

impl TableId {
    pub const ALL: [TableId; 5] = [
        TableId::Lineitem,
        TableId::Orders,
        TableId::Supplier,
        TableId::Nation,
        TableId::Partsupp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableId::Lineitem => "lineitem",
            TableId::Orders => "orders",
            TableId::Supplier => "supplier",
            TableId::Nation => "nation",
            TableId::Partsupp => "partsupp",
        }
    }
}

/// The generated TPC-H-subset database.
#[derive(Debug, Clone)]
pub struct Database {
    pub spec: GenSpec,
    tables: Vec<ColumnarTable>,
}

impl Database {
    pub fn tables(&self) -> &[ColumnarTable] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Result<&ColumnarTable> {
        self.tables
            .iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::spec(format!("no table `{name}` in database")))
    }

    pub fn lineitem(&self) -> &ColumnarTable {
        self.table("lineitem").unwrap()
    }

    pub fn orders(&self) -> &ColumnarTable {
        self.table("orders").unwrap()
    }

    pub fn supplier(&self) -> &ColumnarTable {
        self.table("supplier").unwrap()
    }

    pub fn nation(&self) -> &ColumnarTable {
        self.table("nation").unwrap()
    }

    pub fn partsupp(&self) -> &ColumnarTable {
        self.table("partsupp").unwrap()
    }

    /// Total bytes held by generated columns.
    pub fn resident_bytes(&self) -> u64 {
        self.tables.iter().map(|t| t.byte_size()).sum()
    }

    /// Installs selection thresholds for per-predicate selectivity `p`.
    ///
    /// In default mode this only computes the thresholds (the stratified
    /// date columns already realize `p` to within one day of resolution).
    /// In exact mode the three date columns are rewritten so the threshold
    /// matches exactly `floor(p*n)` rows per predicate; see
    /// `datagen::thresholds` for the marking construction.
    pub fn with_selection(&self, p: f64) -> Result<(Database, ThresholdSet)> {
        install_selection(self, p)
    }

    pub(crate) fn from_tables(spec: GenSpec, tables: Vec<ColumnarTable>) -> Database {
        Database { spec, tables }
    }

    pub(crate) fn replace_lineitem_column(&mut self, column: Column) {
        let li = self
            .tables
            .iter_mut()
            .find(|t| t.name() == "lineitem")
            .expect("lineitem present");
        li.replace_column(column);
    }
}

/// Deterministic per-column RNG stream.
fn column_rng(seed: u64, table: &str, column: &str) -> ChaCha8Rng {
    let mut h = seed;
    for b in table.bytes().chain([b'.']).chain(column.bytes()) {
        h = hash64(b as i64, h);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn uniform_vec<T: SampleUniform + Copy + PartialOrd>(
    rng: &mut ChaCha8Rng,
    n: usize,
    lo: T,
    hi: T,
) -> Vec<T> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// Evenly stratified values over `[0, days)`, then shuffled. Any day
/// threshold then realizes its target fraction to within one part in
/// `days`, independent of the seed.
pub(crate) fn stratified_days(rng: &mut ChaCha8Rng, n: usize, days: i32) -> Vec<i32> {
    let mut values: Vec<i32> = (0..n)
        .map(|i| ((i as i64 * days as i64) / n.max(1) as i64) as i32)
        .collect();
    values.shuffle(rng);
    values
}

fn rounded_count(per_sf: f64, sf: f64) -> usize {
    (per_sf * sf).round() as usize
}

/// Generates one table of the subset. Tables are seeded independently, so
/// generating a single table is cheap and matches the same table inside a
/// full `generate_database` run byte for byte.
pub fn generate_table(spec: &GenSpec, id: TableId) -> Result<ColumnarTable> {
    spec.validate()?;
    let sf = spec.scale_factor;
    let seed = spec.seed;
    let orders_count = rounded_count(1_500_000.0, sf);
    let supplier_count = rounded_count(10_000.0, sf);

    match id {
        TableId::Nation => {
            let keys: Vec<i64> = (0..25).collect();
            ColumnarTable::new(
                "nation",
                25,
                vec![Column::new_i64("n_nationkey", ColumnKind::Int64, keys)],
            )
        }
        TableId::Orders => {
            let keys: Vec<i64> = (1..=orders_count as i64).collect();
            ColumnarTable::new(
                "orders",
                orders_count,
                vec![Column::new_i64("o_orderkey", ColumnKind::Int64, keys)],
            )
        }
        TableId::Supplier => {
            let n = supplier_count;
            let keys: Vec<i64> = (1..=n as i64).collect();
            let mut rng = column_rng(seed, "supplier", "s_nationkey");
            let nationkeys = uniform_vec(&mut rng, n, 0i64, 24);
            let mut rng = column_rng(seed, "supplier", "s_acctbal");
            let acctbal = uniform_vec(&mut rng, n, ACCTBAL_RANGE.0, ACCTBAL_RANGE.1);
            ColumnarTable::new(
                "supplier",
                n,
                vec![
                    Column::new_i64("s_suppkey", ColumnKind::Int64, keys),
                    Column::new_i64("s_nationkey", ColumnKind::Int64, nationkeys),
                    Column::new_i64("s_acctbal", ColumnKind::Money, acctbal),
                ],
            )
        }
        TableId::Partsupp => {
            // Referential integrity: no suppliers means no partsupp rows.
            let n = if supplier_count == 0 {
                0
            } else {
                rounded_count(800_000.0, sf)
            };
            let mut rng = column_rng(seed, "partsupp", "ps_suppkey");
            let suppkeys = uniform_vec(&mut rng, n, 1i64, supplier_count.max(1) as i64);
            let mut rng = column_rng(seed, "partsupp", "ps_availqty");
            let availqty = uniform_vec(&mut rng, n, AVAILQTY_RANGE.0, AVAILQTY_RANGE.1);
            let mut rng = column_rng(seed, "partsupp", "ps_supplycost");
            let supplycost = uniform_vec(&mut rng, n, SUPPLYCOST_RANGE.0, SUPPLYCOST_RANGE.1);
            ColumnarTable::new(
                "partsupp",
                n,
                vec![
                    Column::new_i64("ps_suppkey", ColumnKind::Int64, suppkeys),
                    Column::new_i64("ps_availqty", ColumnKind::Int64, availqty),
                    Column::new_i64("ps_supplycost", ColumnKind::Money, supplycost),
                ],
            )
        }
        TableId::Lineitem => {
            let n = orders_count * LINES_PER_ORDER;
            let orderkey: Vec<i64> = (0..n).map(|i| (i / LINES_PER_ORDER) as i64 + 1).collect();
            let linenumber: Vec<i32> = (0..n).map(|i| (i % LINES_PER_ORDER) as i32 + 1).collect();

            let mut rng = column_rng(seed, "lineitem", "l_quantity");
            let quantity = uniform_vec(&mut rng, n, QUANTITY_RANGE.0, QUANTITY_RANGE.1);
            let mut rng = column_rng(seed, "lineitem", "l_extendedprice");
            let extendedprice =
                uniform_vec(&mut rng, n, EXTENDEDPRICE_RANGE.0, EXTENDEDPRICE_RANGE.1);
            let mut rng = column_rng(seed, "lineitem", "l_discount");
            let discount = uniform_vec(&mut rng, n, DISCOUNT_RANGE.0, DISCOUNT_RANGE.1);
            let mut rng = column_rng(seed, "lineitem", "l_tax");
            let tax = uniform_vec(&mut rng, n, TAX_RANGE.0, TAX_RANGE.1);

            let mut rng = column_rng(seed, "lineitem", "l_shipdate");
            let shipdate = stratified_days(&mut rng, n, DATE_DAYS);
            let mut rng = column_rng(seed, "lineitem", "l_commitdate");
            let commitdate = stratified_days(&mut rng, n, DATE_DAYS);
            let mut rng = column_rng(seed, "lineitem", "l_receiptdate");
            let receiptdate = stratified_days(&mut rng, n, DATE_DAYS);

            // Joint flag/status distribution populating exactly the four
            // groups A/F, N/F, N/O, R/F.
            let mut rng = column_rng(seed, "lineitem", "l_returnflag");
            let returnflag: Vec<i32> = (0..n).map(|_| rng.gen_range(0..=2)).collect();
            let mut rng = column_rng(seed, "lineitem", "l_linestatus");
            let linestatus: Vec<i32> = returnflag
                .iter()
                .map(|&f| {
                    if f == RETURNFLAG_N {
                        rng.gen_range(0..=1)
                    } else {
                        LINESTATUS_F
                    }
                })
                .collect();

            ColumnarTable::new(
                "lineitem",
                n,
                vec![
                    Column::new_i64("l_orderkey", ColumnKind::Int64, orderkey),
                    Column::new_i32("l_linenumber", ColumnKind::Int32, linenumber),
                    Column::new_i64("l_quantity", ColumnKind::Int64, quantity),
                    Column::new_i64("l_extendedprice", ColumnKind::Money, extendedprice),
                    Column::new_i64("l_discount", ColumnKind::Money, discount),
                    Column::new_i64("l_tax", ColumnKind::Money, tax),
                    Column::new_i32("l_shipdate", ColumnKind::Date, shipdate),
                    Column::new_i32("l_commitdate", ColumnKind::Date, commitdate),
                    Column::new_i32("l_receiptdate", ColumnKind::Date, receiptdate),
                    Column::new_i32("l_returnflag", ColumnKind::Int32, returnflag),
                    Column::new_i32("l_linestatus", ColumnKind::Int32, linestatus),
                ],
            )
        }
    }
}

/// Generates the full five-table subset.
pub fn generate_database(spec: &GenSpec) -> Result<Database> {
    spec.validate()?;
    let tables = TableId::ALL
        .iter()
        .map(|&id| generate_table(spec, id))
        .collect::<Result<Vec<_>>>()?;
    Ok(Database::from_tables(*spec, tables))
}
