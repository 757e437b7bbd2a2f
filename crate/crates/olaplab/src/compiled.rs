//! Compiled-style execution: each query is one fused loop over rows with
//! no intermediate materialization.
//!
//! "Compiled" here means statically written fused loops per query shape,
//! not runtime code generation; the micro-architectural behavior under
//! study comes from the fused-loop shape. Scan aggregates are exact i64
//! with an up-front overflow feasibility proof from column stats; join
//! aggregates accumulate in i128 (match multiplicity is data-dependent)
//! and convert checked at the end.

use std::ops::Range;

use crate::columnar::{ChainedHashTable, Column, ColumnarTable, HashTableBuilder, ProbeTable};
use crate::datagen::Database;
use crate::error::{Error, Result};
use crate::query::{
    Evaluation, GroupRow, JoinSize, QueryOutput, SelectionMode, ThresholdSet, TouchStats,
    Q1_GROUP_SLOTS, Q1_SHIP_CUTOFF, Q6_DISCOUNT_HI, Q6_DISCOUNT_LO, Q6_QUANTITY_BOUND, Q6_SHIP_HI,
    Q6_SHIP_LO,
};

/// Hash seed used for all engine-side hash tables.
pub const ENGINE_HASH_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Opaque to the optimizer: keeps the enclosing data-dependent `if` a real
/// branch instead of letting if-conversion or masked vectorization remove
/// it, which would void the misprediction measurements.
#[inline(always)]
pub(crate) fn branch_sink() {
    #[cfg(any(
        target_arch = "x86_64",
        target_arch = "x86",
        target_arch = "aarch64",
        target_arch = "arm"
    ))]
    unsafe {
        std::arch::asm!("", options(nomem, nostack, preserves_flags));
    }
}

/// Proves `rows * max_abs_per_row` fits an i64 before entering a fused
/// loop, so the loop itself can use plain adds.
pub(crate) fn ensure_sum_feasible(rows: usize, max_abs_per_row: u128, what: &str) -> Result<()> {
    if rows as u128 * max_abs_per_row > i64::MAX as u128 {
        return Err(Error::Overflow(format!(
            "{what}: {rows} rows x {max_abs_per_row} per-row bound"
        )));
    }
    Ok(())
}

pub(crate) fn projection_columns<'a>(
    lineitem: &'a ColumnarTable,
    degree: u8,
) -> Result<Vec<&'a Column>> {
    if !(1..=4).contains(&degree) {
        return Err(Error::spec(format!("projection degree {degree} not in 1..=4")));
    }
    ["l_extendedprice", "l_discount", "l_tax", "l_quantity"][..degree as usize]
        .iter()
        .map(|n| lineitem.column(n))
        .collect()
}

pub(crate) fn max_abs_projection(cols: &[&Column]) -> u128 {
    cols.iter().map(|c| c.stats().max_abs() as u128).sum()
}

/// Scalar accumulator merged across morsels.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarAcc {
    pub sum: i64,
    pub matched: u64,
}

impl ScalarAcc {
    pub fn merge(self, other: ScalarAcc) -> ScalarAcc {
        ScalarAcc {
            sum: self.sum + other.sum,
            matched: self.matched + other.matched,
        }
    }
}

/// Wide accumulator for data-dependent multiplicities (joins).
#[derive(Debug, Clone, Copy, Default)]
pub struct WideAcc {
    pub sum: i128,
    pub matched: u64,
}

impl WideAcc {
    pub fn merge(self, other: WideAcc) -> WideAcc {
        WideAcc {
            sum: self.sum + other.sum,
            matched: self.matched + other.matched,
        }
    }

    pub fn into_scalar(self, what: &str) -> Result<ScalarAcc> {
        let sum = i64::try_from(self.sum)
            .map_err(|_| Error::Overflow(format!("{what}: {}", self.sum)))?;
        Ok(ScalarAcc {
            sum,
            matched: self.matched,
        })
    }
}

// ---------------------------------------------------------------------------
// Projection: SUM over the first `degree` of price/discount/tax/quantity.
// ---------------------------------------------------------------------------

pub fn projection_range(
    lineitem: &ColumnarTable,
    degree: u8,
    range: Range<usize>,
) -> Result<ScalarAcc> {
    let cols = projection_columns(lineitem, degree)?;
    ensure_sum_feasible(lineitem.row_count(), max_abs_projection(&cols), "projection")?;
    let mut sum: i64 = 0;
    match *cols.as_slice() {
        [a] => {
            for &v in &a.i64()[range.clone()] {
                sum += v;
            }
        }
        [a, b] => {
            let (a, b) = (a.i64(), b.i64());
            for i in range.clone() {
                sum += a[i] + b[i];
            }
        }
        [a, b, c] => {
            let (a, b, c) = (a.i64(), b.i64(), c.i64());
            for i in range.clone() {
                sum += a[i] + b[i] + c[i];
            }
        }
        [a, b, c, d] => {
            let (a, b, c, d) = (a.i64(), b.i64(), c.i64(), d.i64());
            for i in range.clone() {
                sum += a[i] + b[i] + c[i] + d[i];
            }
        }
        _ => unreachable!(),
    }
    Ok(ScalarAcc {
        sum,
        matched: range.len() as u64,
    })
}

fn projection_touch(rows: u64, degree: u8) -> TouchStats {
    TouchStats {
        rows_scanned: rows,
        bytes_touched: rows * 8 * degree as u64,
        intermediate_bytes: 0,
    }
}

pub fn c_projection(lineitem: &ColumnarTable, degree: u8) -> Result<Evaluation> {
    let acc = projection_range(lineitem, degree, 0..lineitem.row_count())?;
    Ok(Evaluation {
        output: QueryOutput::scalar(acc.sum, acc.matched),
        touch: projection_touch(lineitem.row_count() as u64, degree),
    })
}

// ---------------------------------------------------------------------------
// Selection: three date predicates over the degree-4 sum.
// ---------------------------------------------------------------------------

pub fn selection_range(
    lineitem: &ColumnarTable,
    thresholds: &ThresholdSet,
    mode: SelectionMode,
    range: Range<usize>,
) -> Result<ScalarAcc> {
    let cols = projection_columns(lineitem, 4)?;
    ensure_sum_feasible(lineitem.row_count(), max_abs_projection(&cols), "selection")?;
    let (e, d, t, q) = (cols[0].i64(), cols[1].i64(), cols[2].i64(), cols[3].i64());
    let ship = lineitem.column("l_shipdate")?.i32();
    let commit = lineitem.column("l_commitdate")?.i32();
    let receipt = lineitem.column("l_receiptdate")?.i32();
    let (t1, t2, t3) = (thresholds.shipdate, thresholds.commitdate, thresholds.receiptdate);

    let mut sum: i64 = 0;
    let mut matched: u64 = 0;
    match mode {
        SelectionMode::Branched => {
            // All three predicates combine into one branch per row, so the
            // predictor faces the conjunctive selectivity.
            for i in range {
                let qualify = (ship[i] < t1) & (commit[i] < t2) & (receipt[i] < t3);
                if qualify {
                    branch_sink();
                    sum += e[i] + d[i] + t[i] + q[i];
                    matched += 1;
                }
            }
        }
        SelectionMode::Predicated => {
            // Control dependence converted to data dependence: the full
            // degree-4 sum is computed for every row.
            for i in range {
                let qualify =
                    ((ship[i] < t1) & (commit[i] < t2) & (receipt[i] < t3)) as i64;
                sum += qualify * (e[i] + d[i] + t[i] + q[i]);
                matched += qualify as u64;
            }
        }
    }
    Ok(ScalarAcc { sum, matched })
}

fn selection_touch(rows: u64, matched: u64, mode: SelectionMode) -> TouchStats {
    let agg_rows = match mode {
        SelectionMode::Branched => matched,
        SelectionMode::Predicated => rows,
    };
    TouchStats {
        rows_scanned: rows,
        bytes_touched: rows * (4 * 3) + agg_rows * (8 * 4),
        intermediate_bytes: 0,
    }
}

pub fn c_selection(
    lineitem: &ColumnarTable,
    thresholds: &ThresholdSet,
    mode: SelectionMode,
) -> Result<Evaluation> {
    let acc = selection_range(lineitem, thresholds, mode, 0..lineitem.row_count())?;
    Ok(Evaluation {
        output: QueryOutput::scalar(acc.sum, acc.matched),
        touch: selection_touch(lineitem.row_count() as u64, acc.matched, mode),
    })
}

// ---------------------------------------------------------------------------
// Hash join: build the smaller side, probe fused with the aggregation loop.
// ---------------------------------------------------------------------------

/// The probe side of a join: key column plus the probe-side columns the
/// fused aggregation reads on every match.
pub struct JoinProbe<'a> {
    pub keys: &'a [i64],
    pub agg_cols: Vec<&'a [i64]>,
}

pub fn join_build_keys<'a>(db: &'a Database, size: JoinSize) -> Result<&'a Column> {
    match size {
        JoinSize::Small => db.nation().column("n_nationkey"),
        JoinSize::Medium => db.supplier().column("s_suppkey"),
        JoinSize::Large => db.orders().column("o_orderkey"),
    }
}

pub fn join_probe_side<'a>(db: &'a Database, size: JoinSize) -> Result<JoinProbe<'a>> {
    Ok(match size {
        JoinSize::Small => JoinProbe {
            keys: db.supplier().column("s_nationkey")?.i64(),
            agg_cols: vec![
                db.supplier().column("s_acctbal")?.i64(),
                db.supplier().column("s_suppkey")?.i64(),
            ],
        },
        JoinSize::Medium => JoinProbe {
            keys: db.partsupp().column("ps_suppkey")?.i64(),
            agg_cols: vec![
                db.partsupp().column("ps_availqty")?.i64(),
                db.partsupp().column("ps_supplycost")?.i64(),
            ],
        },
        JoinSize::Large => JoinProbe {
            keys: db.lineitem().column("l_orderkey")?.i64(),
            agg_cols: vec![
                db.lineitem().column("l_extendedprice")?.i64(),
                db.lineitem().column("l_discount")?.i64(),
                db.lineitem().column("l_tax")?.i64(),
                db.lineitem().column("l_quantity")?.i64(),
            ],
        },
    })
}

pub fn build_join_table(db: &Database, size: JoinSize) -> Result<ChainedHashTable> {
    let keys = join_build_keys(db, size)?.i64();
    ChainedHashTable::build(keys, keys, ENGINE_HASH_SEED)
}

/// Fused probe + aggregate over a probe-row range.
pub fn join_probe_range<T: ProbeTable>(
    table: &T,
    probe: &JoinProbe<'_>,
    range: Range<usize>,
) -> WideAcc {
    let mut acc = WideAcc::default();
    match *probe.agg_cols.as_slice() {
        [a, b] => {
            for i in range {
                let key = probe.keys[i];
                for _payload in table.probe(key) {
                    acc.sum += (a[i] + b[i]) as i128;
                    acc.matched += 1;
                }
            }
        }
        [a, b, c, d] => {
            for i in range {
                let key = probe.keys[i];
                for _payload in table.probe(key) {
                    acc.sum += (a[i] + b[i] + c[i] + d[i]) as i128;
                    acc.matched += 1;
                }
            }
        }
        _ => {
            for i in range {
                let key = probe.keys[i];
                for _payload in table.probe(key) {
                    let mut row_sum = 0i128;
                    for col in &probe.agg_cols {
                        row_sum += col[i] as i128;
                    }
                    acc.sum += row_sum;
                    acc.matched += 1;
                }
            }
        }
    }
    acc
}

pub(crate) fn join_touch(
    build_rows: u64,
    probe_rows: u64,
    matched: u64,
    agg_cols: usize,
    intermediate_bytes: u64,
) -> TouchStats {
    TouchStats {
        rows_scanned: build_rows + probe_rows,
        bytes_touched: build_rows * 8 + probe_rows * 8 + matched * 8 * agg_cols as u64,
        intermediate_bytes,
    }
}

pub fn c_hash_join(db: &Database, size: JoinSize) -> Result<Evaluation> {
    let table = build_join_table(db, size)?;
    let probe = join_probe_side(db, size)?;
    let acc = join_probe_range(&table, &probe, 0..probe.keys.len()).into_scalar("join")?;
    Ok(Evaluation {
        output: QueryOutput::scalar(acc.sum, acc.matched),
        touch: join_touch(
            table.entry_count() as u64,
            probe.keys.len() as u64,
            acc.matched,
            probe.agg_cols.len(),
            0,
        ),
    })
}

// ---------------------------------------------------------------------------
// Group-by: SUM(l_extendedprice + l_discount) grouped by dense line id
// modulo a cardinality knob.
// ---------------------------------------------------------------------------

pub fn groupby_range(
    lineitem: &ColumnarTable,
    groups: u64,
    range: Range<usize>,
) -> Result<HashTableBuilder> {
    if groups == 0 {
        return Err(Error::spec("group-by cardinality knob must be >= 1"));
    }
    let price = lineitem.column("l_extendedprice")?;
    let discount = lineitem.column("l_discount")?;
    let bound = price.stats().max_abs() as u128 + discount.stats().max_abs() as u128;
    ensure_sum_feasible(lineitem.row_count(), bound, "group-by")?;
    let orderkey = lineitem.column("l_orderkey")?.i64();
    let linenumber = lineitem.column("l_linenumber")?.i32();
    let (price, discount) = (price.i64(), discount.i64());

    let mut builder = HashTableBuilder::new(ENGINE_HASH_SEED);
    let groups = groups as i64;
    for i in range {
        let line_id = (orderkey[i] - 1) * 4 + (linenumber[i] as i64 - 1);
        builder.upsert_add(line_id.rem_euclid(groups), price[i] + discount[i]);
    }
    Ok(builder)
}

pub(crate) fn groupby_touch(rows: u64) -> TouchStats {
    TouchStats {
        rows_scanned: rows,
        bytes_touched: rows * (8 + 4 + 8 + 8),
        intermediate_bytes: 0,
    }
}

pub fn groups_output(table: &ChainedHashTable) -> QueryOutput {
    QueryOutput::Groups(crate::query::sort_groups(
        table
            .iter_entries()
            .map(|(key, sum)| GroupRow {
                key,
                values: vec![sum],
            })
            .collect(),
    ))
}

pub fn c_groupby(lineitem: &ColumnarTable, groups: u64) -> Result<Evaluation> {
    let builder = groupby_range(lineitem, groups, 0..lineitem.row_count())?;
    Ok(Evaluation {
        output: groups_output(&builder.finish()),
        touch: groupby_touch(lineitem.row_count() as u64),
    })
}

// ---------------------------------------------------------------------------
// TPC-H Q1 and Q6.
// ---------------------------------------------------------------------------

/// Q1 aggregates: [sum_qty, sum_base_price, sum_disc_price, sum_charge,
/// count] per (returnflag, linestatus) slot. The key domain is tiny and
/// known, so the fused loop updates a direct-indexed table.
pub type Q1Slots = [[i64; 5]; Q1_GROUP_SLOTS];

pub fn q1_range(lineitem: &ColumnarTable, range: Range<usize>) -> Result<Q1Slots> {
    let price = lineitem.column("l_extendedprice")?;
    let disc = lineitem.column("l_discount")?;
    let tax = lineitem.column("l_tax")?;
    // Charge bound: price * (100 +- disc) * (100 +- tax), all from stats.
    let d = disc.stats();
    let t = tax.stats();
    let a = (100 - d.min).unsigned_abs().max((100 - d.max).unsigned_abs()) as u128;
    let b = (100 + t.min).unsigned_abs().max((100 + t.max).unsigned_abs()) as u128;
    ensure_sum_feasible(
        lineitem.row_count(),
        price.stats().max_abs() as u128 * a * b,
        "q1 charge",
    )?;

    let flag = lineitem.column("l_returnflag")?.i32();
    let status = lineitem.column("l_linestatus")?.i32();
    let ship = lineitem.column("l_shipdate")?.i32();
    let qty = lineitem.column("l_quantity")?.i64();
    let (price, disc, tax) = (price.i64(), disc.i64(), tax.i64());

    let mut slots: Q1Slots = [[0; 5]; Q1_GROUP_SLOTS];
    for i in range {
        if ship[i] <= Q1_SHIP_CUTOFF {
            let slot = &mut slots[(flag[i] * 2 + status[i]) as usize];
            let disc_price = price[i] * (100 - disc[i]);
            slot[0] += qty[i];
            slot[1] += price[i];
            slot[2] += disc_price;
            slot[3] += disc_price * (100 + tax[i]);
            slot[4] += 1;
        }
    }
    Ok(slots)
}

pub fn merge_q1(mut a: Q1Slots, b: &Q1Slots) -> Q1Slots {
    for (sa, sb) in a.iter_mut().zip(b) {
        for (va, vb) in sa.iter_mut().zip(sb) {
            *va += vb;
        }
    }
    a
}

pub fn q1_output(slots: &Q1Slots) -> QueryOutput {
    QueryOutput::Groups(
        slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s[4] > 0)
            .map(|(key, s)| GroupRow {
                key: key as i64,
                values: s.to_vec(),
            })
            .collect(),
    )
}

pub(crate) fn q1_touch(rows: u64, matched: u64) -> TouchStats {
    TouchStats {
        rows_scanned: rows,
        // shipdate/flag/status scanned for all rows, the four wide columns
        // only for qualifying rows.
        bytes_touched: rows * (4 * 3) + matched * (8 * 4),
        intermediate_bytes: 0,
    }
}

pub fn c_q1(lineitem: &ColumnarTable) -> Result<Evaluation> {
    let slots = q1_range(lineitem, 0..lineitem.row_count())?;
    let matched: u64 = slots.iter().map(|s| s[4] as u64).sum();
    Ok(Evaluation {
        output: q1_output(&slots),
        touch: q1_touch(lineitem.row_count() as u64, matched),
    })
}

pub fn q6_range(lineitem: &ColumnarTable, range: Range<usize>) -> Result<ScalarAcc> {
    let price = lineitem.column("l_extendedprice")?;
    let disc = lineitem.column("l_discount")?;
    ensure_sum_feasible(
        lineitem.row_count(),
        price.stats().max_abs() as u128 * disc.stats().max_abs() as u128,
        "q6",
    )?;
    let ship = lineitem.column("l_shipdate")?.i32();
    let qty = lineitem.column("l_quantity")?.i64();
    let (price, disc) = (price.i64(), disc.i64());

    let mut sum: i64 = 0;
    let mut matched: u64 = 0;
    // Five predicates, evaluated at once behind a single branch.
    for i in range {
        let qualify = (ship[i] >= Q6_SHIP_LO)
            & (ship[i] < Q6_SHIP_HI)
            & (disc[i] >= Q6_DISCOUNT_LO)
            & (disc[i] <= Q6_DISCOUNT_HI)
            & (qty[i] < Q6_QUANTITY_BOUND);
        if qualify {
            branch_sink();
            sum += price[i] * disc[i];
            matched += 1;
        }
    }
    Ok(ScalarAcc { sum, matched })
}

pub(crate) fn q6_touch(rows: u64, matched: u64) -> TouchStats {
    TouchStats {
        rows_scanned: rows,
        bytes_touched: rows * (4 + 8 + 8) + matched * 8,
        intermediate_bytes: 0,
    }
}

pub fn c_q6(lineitem: &ColumnarTable) -> Result<Evaluation> {
    let acc = q6_range(lineitem, 0..lineitem.row_count())?;
    Ok(Evaluation {
        output: QueryOutput::scalar(acc.sum, acc.matched),
        touch: q6_touch(lineitem.row_count() as u64, acc.matched),
    })
}
