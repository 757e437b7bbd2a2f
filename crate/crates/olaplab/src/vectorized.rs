//! Vectorized execution: operators consume and produce fixed-size column
//! batches, filters chain selection vectors, arithmetic materializes
//! intermediate vectors.
//!
//! Operator state (intermediates, selection vectors) lives in a per-worker
//! `Scratch` allocated once and reused every batch, so cache behavior is
//! attributable to the data and not the allocator. With `simd` enabled the
//! hot primitives dispatch to the lane kernels in `crate::simd`; results
//! are bit-identical either way.

use std::ops::Range;

use crate::columnar::{ColumnarTable, HashTableBuilder, ProbeTable, SelectionVector, NO_ENTRY};
use crate::compiled::{
    branch_sink, build_join_table, ensure_sum_feasible, groupby_touch, groups_output,
    join_probe_side, join_touch, max_abs_projection, projection_columns, q1_output, JoinProbe,
    Q1Slots, WideAcc, ENGINE_HASH_SEED,
};
use crate::datagen::Database;
use crate::error::{Error, Result};
use crate::query::{
    Evaluation, JoinSize, QueryOutput, SelectionMode, ThresholdSet, TouchStats, Q1_SHIP_CUTOFF,
    Q6_DISCOUNT_HI, Q6_DISCOUNT_LO, Q6_QUANTITY_BOUND, Q6_SHIP_HI, Q6_SHIP_LO,
};
use crate::simd;

/// Batch-granularity configuration for the vectorized engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorConfig {
    pub vector_size: usize,
    pub simd: bool,
}

impl Default for VectorConfig {
    fn default() -> Self {
        VectorConfig {
            vector_size: crate::columnar::DEFAULT_VECTOR_SIZE,
            simd: false,
        }
    }
}

impl VectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vector_size < 1 {
            return Err(Error::spec("vector_size must be >= 1"));
        }
        Ok(())
    }
}

/// Per-worker operator state, allocated once per run.
pub struct Scratch {
    sel_a: SelectionVector,
    sel_b: SelectionVector,
    hashes: Vec<u64>,
    cand_entry: Vec<u32>,
    cand_part: Vec<u32>,
    active: Vec<u32>,
    next_active: Vec<u32>,
    match_rows: Vec<u32>,
    w: [Vec<i64>; 8],
}

impl Scratch {
    pub fn new(vector_size: usize) -> Self {
        Scratch {
            sel_a: SelectionVector::with_capacity(vector_size),
            sel_b: SelectionVector::with_capacity(vector_size),
            hashes: Vec::with_capacity(vector_size),
            cand_entry: Vec::with_capacity(vector_size),
            cand_part: Vec::with_capacity(vector_size),
            active: Vec::with_capacity(vector_size),
            next_active: Vec::with_capacity(vector_size),
            match_rows: Vec::with_capacity(vector_size),
            w: std::array::from_fn(|_| Vec::with_capacity(vector_size)),
        }
    }
}

fn batches_in(range: Range<usize>, vector_size: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut offset = range.start;
    std::iter::from_fn(move || {
        if offset >= range.end {
            return None;
        }
        let len = vector_size.min(range.end - offset);
        let item = (offset, len);
        offset += len;
        Some(item)
    })
}

// ---------------------------------------------------------------------------
// Primitives. All integer arithmetic wraps; callers prove feasibility from
// column stats before entering the batch loop.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cmp {
    Lt,
    Ge,
}

#[inline(always)]
fn cmp_i32(op: Cmp, v: i32, t: i32) -> bool {
    match op {
        Cmp::Lt => v < t,
        Cmp::Ge => v >= t,
    }
}

#[inline(always)]
fn cmp_i64(op: Cmp, v: i64, t: i64) -> bool {
    match op {
        Cmp::Lt => v < t,
        Cmp::Ge => v >= t,
    }
}

fn sum_batch(values: &[i64], use_lanes: bool) -> i64 {
    if use_lanes {
        simd::lanes_sum(values, None)
    } else {
        simd::scalar_sum(values)
    }
}

/// out[j] = a[j] + b[j], materialized.
fn add_dense(a: &[i64], b: &[i64], out: &mut Vec<i64>, use_lanes: bool) {
    if use_lanes {
        simd::lanes_add(a, b, out);
    } else {
        simd::scalar_add(a, b, out);
    }
}

/// out[j] = a[sel[j]] + b[sel[j]].
fn gather_add2(a: &[i64], b: &[i64], sel: &[u32], out: &mut Vec<i64>) {
    out.clear();
    out.extend(
        sel.iter()
            .map(|&i| a[i as usize].wrapping_add(b[i as usize])),
    );
}

/// out[j] = acc[j] + col[sel[j]].
fn add_gather(acc: &[i64], col: &[i64], sel: &[u32], out: &mut Vec<i64>) {
    out.clear();
    out.extend(
        acc.iter()
            .zip(sel)
            .map(|(&x, &i)| x.wrapping_add(col[i as usize])),
    );
}

/// out[j] = a[sel[j]] * b[sel[j]].
fn gather_mul2(a: &[i64], b: &[i64], sel: &[u32], out: &mut Vec<i64>) {
    out.clear();
    out.extend(
        sel.iter()
            .map(|&i| a[i as usize].wrapping_mul(b[i as usize])),
    );
}

/// Filter primitive over i32 values. Consumes the previous selection
/// vector (if any) and produces a narrower one. Branched mode takes a
/// data-dependent branch per candidate row; predicated mode appends the
/// index unconditionally and advances the cursor by the predicate value.
fn filter_i32(
    values: &[i32],
    threshold: i32,
    op: Cmp,
    mode: SelectionMode,
    in_sel: Option<&SelectionVector>,
    out: &mut SelectionVector,
    use_lanes: bool,
) {
    // The lane kernel is branch-free by construction; it stands in for the
    // predicated < filter.
    if use_lanes && mode == SelectionMode::Predicated && op == Cmp::Lt {
        simd::lanes_filter_lt_i32(
            values,
            threshold,
            in_sel.map(|s| s.as_slice()),
            out.storage_mut(),
        );
        debug_assert!(out.check_valid(values.len()).is_ok());
        return;
    }
    let buf = out.storage_mut();
    buf.clear();
    match mode {
        SelectionMode::Branched => match in_sel {
            None => {
                for (i, &v) in values.iter().enumerate() {
                    if cmp_i32(op, v, threshold) {
                        branch_sink();
                        buf.push(i as u32);
                    }
                }
            }
            Some(sel) => {
                for &i in sel.as_slice() {
                    if cmp_i32(op, values[i as usize], threshold) {
                        branch_sink();
                        buf.push(i);
                    }
                }
            }
        },
        SelectionMode::Predicated => match in_sel {
            None => {
                buf.resize(values.len(), 0);
                let mut k = 0usize;
                for (i, &v) in values.iter().enumerate() {
                    buf[k] = i as u32;
                    k += cmp_i32(op, v, threshold) as usize;
                }
                buf.truncate(k);
            }
            Some(sel) => {
                buf.resize(sel.len(), 0);
                let mut k = 0usize;
                for &i in sel.as_slice() {
                    buf[k] = i;
                    k += cmp_i32(op, values[i as usize], threshold) as usize;
                }
                buf.truncate(k);
            }
        },
    }
    debug_assert!(out.check_valid(values.len()).is_ok());
}

/// Filter primitive over i64 values (discount/quantity predicates).
fn filter_i64(
    values: &[i64],
    threshold: i64,
    op: Cmp,
    mode: SelectionMode,
    in_sel: Option<&SelectionVector>,
    out: &mut SelectionVector,
) {
    let buf = out.storage_mut();
    buf.clear();
    match mode {
        SelectionMode::Branched => match in_sel {
            None => {
                for (i, &v) in values.iter().enumerate() {
                    if cmp_i64(op, v, threshold) {
                        branch_sink();
                        buf.push(i as u32);
                    }
                }
            }
            Some(sel) => {
                for &i in sel.as_slice() {
                    if cmp_i64(op, values[i as usize], threshold) {
                        branch_sink();
                        buf.push(i);
                    }
                }
            }
        },
        SelectionMode::Predicated => match in_sel {
            None => {
                buf.resize(values.len(), 0);
                let mut k = 0usize;
                for (i, &v) in values.iter().enumerate() {
                    buf[k] = i as u32;
                    k += cmp_i64(op, v, threshold) as usize;
                }
                buf.truncate(k);
            }
            Some(sel) => {
                buf.resize(sel.len(), 0);
                let mut k = 0usize;
                for &i in sel.as_slice() {
                    buf[k] = i;
                    k += cmp_i64(op, values[i as usize], threshold) as usize;
                }
                buf.truncate(k);
            }
        },
    }
    debug_assert!(out.check_valid(values.len()).is_ok());
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, Copy)]
pub struct VProjPartial {
    pub sum: i64,
    pub rows: u64,
    pub intermediate_bytes: u64,
}

impl VProjPartial {
    pub fn merge(self, o: VProjPartial) -> VProjPartial {
        VProjPartial {
            sum: self.sum + o.sum,
            rows: self.rows + o.rows,
            intermediate_bytes: self.intermediate_bytes + o.intermediate_bytes,
        }
    }
}

/// Degree 1 aggregates column slices directly; degree >= 2 adds pairwise
/// into intermediates and aggregates the last one. Intermediate bytes per
/// batch: `(degree - 1) * 8 * batch_len`.
pub fn projection_range(
    lineitem: &ColumnarTable,
    degree: u8,
    cfg: &VectorConfig,
    scratch: &mut Scratch,
    range: Range<usize>,
) -> Result<VProjPartial> {
    cfg.validate()?;
    let cols = projection_columns(lineitem, degree)?;
    ensure_sum_feasible(lineitem.row_count(), max_abs_projection(&cols), "projection")?;
    let slices: Vec<&[i64]> = cols.iter().map(|c| c.i64()).collect();
    let lanes = cfg.simd;

    let mut p = VProjPartial::default();
    let [w0, w1, ..] = &mut scratch.w;
    for (off, len) in batches_in(range, cfg.vector_size) {
        let end = off + len;
        if degree == 1 {
            p.sum = p.sum.wrapping_add(sum_batch(&slices[0][off..end], lanes));
        } else {
            add_dense(&slices[0][off..end], &slices[1][off..end], w0, lanes);
            for k in 2..degree as usize {
                add_dense(w0, &slices[k][off..end], w1, lanes);
                std::mem::swap(w0, w1);
            }
            p.sum = p.sum.wrapping_add(sum_batch(w0, lanes));
            p.intermediate_bytes += (degree as u64 - 1) * 8 * len as u64;
        }
        p.rows += len as u64;
    }
    Ok(p)
}

pub fn v_projection(lineitem: &ColumnarTable, degree: u8, cfg: &VectorConfig) -> Result<Evaluation> {
    let mut scratch = Scratch::new(cfg.vector_size);
    let p = projection_range(lineitem, degree, cfg, &mut scratch, 0..lineitem.row_count())?;
    Ok(Evaluation {
        output: QueryOutput::scalar(p.sum, p.rows),
        touch: TouchStats {
            rows_scanned: p.rows,
            bytes_touched: p.rows * 8 * degree as u64,
            intermediate_bytes: p.intermediate_bytes,
        },
    })
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, Copy)]
pub struct VSelPartial {
    pub sum: i64,
    pub rows: u64,
    pub after_first: u64,
    pub after_second: u64,
    pub matched: u64,
    pub intermediate_bytes: u64,
}

impl VSelPartial {
    pub fn merge(self, o: VSelPartial) -> VSelPartial {
        VSelPartial {
            sum: self.sum + o.sum,
            rows: self.rows + o.rows,
            after_first: self.after_first + o.after_first,
            after_second: self.after_second + o.after_second,
            matched: self.matched + o.matched,
            intermediate_bytes: self.intermediate_bytes + o.intermediate_bytes,
        }
    }

    /// Element-read accounting: shipdate is scanned fully, each later
    /// filter reads only its surviving candidates, the four wide columns
    /// are gathered only for fully qualifying rows.
    pub fn touch(&self) -> TouchStats {
        TouchStats {
            rows_scanned: self.rows,
            bytes_touched: self.rows * 4
                + self.after_first * 4
                + self.after_second * 4
                + self.matched * 8 * 4,
            intermediate_bytes: self.intermediate_bytes,
        }
    }
}

/// Three filter primitives in sequence, each consuming the previous
/// selection vector, then the degree-4 aggregation gathered through the
/// final one. Intermediates: the selection vectors (4 B per surviving
/// index) and three aggregation vectors (8 B per qualifying row each).
pub fn selection_range(
    lineitem: &ColumnarTable,
    thresholds: &ThresholdSet,
    mode: SelectionMode,
    cfg: &VectorConfig,
    scratch: &mut Scratch,
    range: Range<usize>,
) -> Result<VSelPartial> {
    cfg.validate()?;
    let cols = projection_columns(lineitem, 4)?;
    ensure_sum_feasible(lineitem.row_count(), max_abs_projection(&cols), "selection")?;
    let (e, d, t, q) = (cols[0].i64(), cols[1].i64(), cols[2].i64(), cols[3].i64());
    let ship = lineitem.column("l_shipdate")?.i32();
    let commit = lineitem.column("l_commitdate")?.i32();
    let receipt = lineitem.column("l_receiptdate")?.i32();
    let lanes = cfg.simd;

    let mut p = VSelPartial::default();
    let Scratch {
        sel_a, sel_b, w, ..
    } = scratch;
    let [w0, w1, ..] = w;
    for (off, len) in batches_in(range, cfg.vector_size) {
        let end = off + len;
        filter_i32(&ship[off..end], thresholds.shipdate, Cmp::Lt, mode, None, sel_a, lanes);
        let s1 = sel_a.len() as u64;
        filter_i32(
            &commit[off..end],
            thresholds.commitdate,
            Cmp::Lt,
            mode,
            Some(sel_a),
            sel_b,
            lanes,
        );
        let s2 = sel_b.len() as u64;
        filter_i32(
            &receipt[off..end],
            thresholds.receiptdate,
            Cmp::Lt,
            mode,
            Some(sel_b),
            sel_a,
            lanes,
        );
        let m = sel_a.len() as u64;

        // Aggregation gathers batch-relative indices, so slice the wide
        // columns at the batch window too.
        let sel = sel_a.as_slice();
        gather_add2(&e[off..end], &d[off..end], sel, w0);
        add_gather(w0, &t[off..end], sel, w1);
        add_gather(w1, &q[off..end], sel, w0);
        p.sum = p.sum.wrapping_add(sum_batch(w0, lanes));

        p.after_first += s1;
        p.after_second += s2;
        p.matched += m;
        p.rows += len as u64;
        p.intermediate_bytes += 4 * (s1 + s2 + m) + 3 * 8 * m;
    }
    Ok(p)
}

pub fn v_selection(
    lineitem: &ColumnarTable,
    thresholds: &ThresholdSet,
    mode: SelectionMode,
    cfg: &VectorConfig,
) -> Result<Evaluation> {
    let mut scratch = Scratch::new(cfg.vector_size);
    let p = selection_range(
        lineitem,
        thresholds,
        mode,
        cfg,
        &mut scratch,
        0..lineitem.row_count(),
    )?;
    Ok(Evaluation {
        output: QueryOutput::scalar(p.sum, p.matched),
        touch: p.touch(),
    })
}

// ---------------------------------------------------------------------------
// Hash join
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, Copy)]
pub struct VJoinPartial {
    pub acc: WideAcc,
    pub probe_rows: u64,
    pub intermediate_bytes: u64,
}

impl VJoinPartial {
    pub fn merge(self, o: VJoinPartial) -> VJoinPartial {
        VJoinPartial {
            acc: self.acc.merge(o.acc),
            probe_rows: self.probe_rows + o.probe_rows,
            intermediate_bytes: self.intermediate_bytes + o.intermediate_bytes,
        }
    }
}

/// Per batch: materialize the hash vector, then the candidate-entry
/// vector, then walk chains with an active-row list, emitting match rows
/// and aggregating them through gathered intermediates after every pass.
pub fn join_probe_range<T: ProbeTable>(
    table: &T,
    probe: &JoinProbe<'_>,
    cfg: &VectorConfig,
    scratch: &mut Scratch,
    range: Range<usize>,
) -> Result<VJoinPartial> {
    cfg.validate()?;
    let lanes = cfg.simd;
    let mut p = VJoinPartial::default();
    let Scratch {
        hashes,
        cand_entry,
        cand_part,
        active,
        next_active,
        match_rows,
        w,
        ..
    } = scratch;
    let [w0, w1, ..] = w;

    for (off, len) in batches_in(range, cfg.vector_size) {
        let keys = &probe.keys[off..off + len];
        if lanes {
            simd::lanes_probe_hash(keys, table.hash_seed(), hashes);
        } else {
            simd::scalar_probe_hash(keys, table.hash_seed(), hashes);
        }
        p.intermediate_bytes += 8 * len as u64;

        cand_entry.clear();
        cand_part.clear();
        active.clear();
        for (j, &h) in hashes.iter().enumerate() {
            let (part, head) = table.head_for(h);
            cand_part.push(part);
            cand_entry.push(head);
            if head != NO_ENTRY {
                active.push(j as u32);
            }
        }
        p.intermediate_bytes += (4 + 4) * len as u64;

        while !active.is_empty() {
            match_rows.clear();
            next_active.clear();
            for &j in active.iter() {
                let (key, _payload, next) = table.entry_in(cand_part[j as usize], cand_entry[j as usize]);
                if key == keys[j as usize] {
                    match_rows.push(j);
                }
                cand_entry[j as usize] = next;
                if next != NO_ENTRY {
                    next_active.push(j);
                }
            }
            std::mem::swap(active, next_active);

            // Aggregate this pass's matches through intermediates.
            let m = match_rows.len();
            if m > 0 {
                let batch_sum = match *probe.agg_cols.as_slice() {
                    [a, b] => {
                        gather_add2(&a[off..off + len], &b[off..off + len], match_rows, w0);
                        sum_batch(w0, lanes)
                    }
                    [a, b, c, d] => {
                        gather_add2(&a[off..off + len], &b[off..off + len], match_rows, w0);
                        add_gather(w0, &c[off..off + len], match_rows, w1);
                        add_gather(w1, &d[off..off + len], match_rows, w0);
                        sum_batch(w0, lanes)
                    }
                    _ => unreachable!("join aggregation arity is 2 or 4"),
                };
                p.acc.sum += batch_sum as i128;
                p.acc.matched += m as u64;
                p.intermediate_bytes +=
                    4 * m as u64 + 8 * m as u64 * (probe.agg_cols.len() as u64 - 1);
            }
        }
        p.probe_rows += len as u64;
    }
    Ok(p)
}

pub fn v_hash_join(db: &Database, size: JoinSize, cfg: &VectorConfig) -> Result<Evaluation> {
    let table = build_join_table(db, size)?;
    let probe = join_probe_side(db, size)?;
    let mut scratch = Scratch::new(cfg.vector_size);
    let p = join_probe_range(&table, &probe, cfg, &mut scratch, 0..probe.keys.len())?;
    let acc = p.acc.into_scalar("join")?;
    Ok(Evaluation {
        output: QueryOutput::scalar(acc.sum, acc.matched),
        touch: join_touch(
            table.entry_count() as u64,
            p.probe_rows,
            acc.matched,
            probe.agg_cols.len(),
            p.intermediate_bytes,
        ),
    })
}

// ---------------------------------------------------------------------------
// Group-by
// ---------------------------------------------------------------------------

/// Per batch: materialize the group-key vector, then upsert row sums into
/// the (per-worker) group table.
pub fn groupby_range(
    lineitem: &ColumnarTable,
    groups: u64,
    cfg: &VectorConfig,
    scratch: &mut Scratch,
    range: Range<usize>,
    builder: &mut HashTableBuilder,
) -> Result<u64> {
    cfg.validate()?;
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
    let groups = groups as i64;

    let keys = &mut scratch.w[0];
    let mut intermediate_bytes = 0u64;
    for (off, len) in batches_in(range, cfg.vector_size) {
        keys.clear();
        for j in off..off + len {
            let line_id = (orderkey[j] - 1) * 4 + (linenumber[j] as i64 - 1);
            keys.push(line_id.rem_euclid(groups));
        }
        intermediate_bytes += 8 * len as u64;
        for (j, &key) in keys.iter().enumerate() {
            let row = off + j;
            builder.upsert_add(key, price[row] + discount[row]);
        }
    }
    Ok(intermediate_bytes)
}

pub fn v_groupby(lineitem: &ColumnarTable, groups: u64, cfg: &VectorConfig) -> Result<Evaluation> {
    let mut scratch = Scratch::new(cfg.vector_size);
    let mut builder = HashTableBuilder::new(ENGINE_HASH_SEED);
    let inter = groupby_range(
        lineitem,
        groups,
        cfg,
        &mut scratch,
        0..lineitem.row_count(),
        &mut builder,
    )?;
    let mut touch = groupby_touch(lineitem.row_count() as u64);
    touch.intermediate_bytes = inter;
    Ok(Evaluation {
        output: groups_output(&builder.finish()),
        touch,
    })
}

// ---------------------------------------------------------------------------
// Q1 / Q6
// ---------------------------------------------------------------------------

/// Per batch: filter on shipdate, gather the four wide columns, compute
/// disc_price and charge vectors, then scatter-add into the six group
/// slots.
pub fn q1_range(
    lineitem: &ColumnarTable,
    cfg: &VectorConfig,
    scratch: &mut Scratch,
    range: Range<usize>,
    slots: &mut Q1Slots,
) -> Result<(u64, u64)> {
    cfg.validate()?;
    let price_col = lineitem.column("l_extendedprice")?;
    let disc_col = lineitem.column("l_discount")?;
    let tax_col = lineitem.column("l_tax")?;
    let ds = disc_col.stats();
    let ts = tax_col.stats();
    let a = (100 - ds.min).unsigned_abs().max((100 - ds.max).unsigned_abs()) as u128;
    let b = (100 + ts.min).unsigned_abs().max((100 + ts.max).unsigned_abs()) as u128;
    ensure_sum_feasible(
        lineitem.row_count(),
        price_col.stats().max_abs() as u128 * a * b,
        "q1 charge",
    )?;

    let flag = lineitem.column("l_returnflag")?.i32();
    let status = lineitem.column("l_linestatus")?.i32();
    let ship = lineitem.column("l_shipdate")?.i32();
    let qty = lineitem.column("l_quantity")?.i64();
    let (price, disc, tax) = (price_col.i64(), disc_col.i64(), tax_col.i64());

    let mut matched = 0u64;
    let mut intermediate_bytes = 0u64;
    let Scratch { sel_a, w, .. } = scratch;
    let [pg, dg, tg, qg, dp, ch, ..] = w;
    for (off, len) in batches_in(range, cfg.vector_size) {
        let end = off + len;
        // `ship <= cutoff` as `ship < cutoff + 1`.
        filter_i32(
            &ship[off..end],
            Q1_SHIP_CUTOFF + 1,
            Cmp::Lt,
            SelectionMode::Branched,
            None,
            sel_a,
            false,
        );
        let sel = sel_a.as_slice();
        let m = sel.len();
        gather(&price[off..end], sel, pg);
        gather(&disc[off..end], sel, dg);
        gather(&tax[off..end], sel, tg);
        gather(&qty[off..end], sel, qg);
        dp.clear();
        dp.extend(
            pg.iter()
                .zip(dg.iter())
                .map(|(&p, &d)| p.wrapping_mul(100 - d)),
        );
        ch.clear();
        ch.extend(
            dp.iter()
                .zip(tg.iter())
                .map(|(&x, &t)| x.wrapping_mul(100 + t)),
        );
        for (j, &i) in sel.iter().enumerate() {
            let row = off + i as usize;
            let slot = &mut slots[(flag[row] * 2 + status[row]) as usize];
            slot[0] += qg[j];
            slot[1] += pg[j];
            slot[2] += dp[j];
            slot[3] += ch[j];
            slot[4] += 1;
        }
        matched += m as u64;
        intermediate_bytes += 4 * m as u64 + 6 * 8 * m as u64;
    }
    Ok((matched, intermediate_bytes))
}

fn gather(values: &[i64], sel: &[u32], out: &mut Vec<i64>) {
    out.clear();
    out.extend(sel.iter().map(|&i| values[i as usize]));
}

pub fn v_q1(lineitem: &ColumnarTable, cfg: &VectorConfig) -> Result<Evaluation> {
    let mut scratch = Scratch::new(cfg.vector_size);
    let mut slots: Q1Slots = Default::default();
    let (matched, inter) = q1_range(
        lineitem,
        cfg,
        &mut scratch,
        0..lineitem.row_count(),
        &mut slots,
    )?;
    let mut touch = crate::compiled::q1_touch(lineitem.row_count() as u64, matched);
    touch.intermediate_bytes = inter;
    Ok(Evaluation {
        output: q1_output(&slots),
        touch,
    })
}

#[derive(Debug, Default, Clone, Copy)]
pub struct VQ6Partial {
    pub sum: i64,
    pub rows: u64,
    pub matched: u64,
    pub intermediate_bytes: u64,
    /// Candidate rows seen by each of the five filters (for byte
    /// accounting: filters 1-2 read shipdate, 3-4 discount, 5 quantity).
    pub filter_inputs: [u64; 5],
}

impl VQ6Partial {
    pub fn merge(self, o: VQ6Partial) -> VQ6Partial {
        let mut filter_inputs = self.filter_inputs;
        for (a, b) in filter_inputs.iter_mut().zip(o.filter_inputs) {
            *a += b;
        }
        VQ6Partial {
            sum: self.sum + o.sum,
            rows: self.rows + o.rows,
            matched: self.matched + o.matched,
            intermediate_bytes: self.intermediate_bytes + o.intermediate_bytes,
            filter_inputs,
        }
    }

    pub fn touch(&self) -> TouchStats {
        TouchStats {
            rows_scanned: self.rows,
            bytes_touched: self.filter_inputs[0] * 4
                + self.filter_inputs[1] * 4
                + self.filter_inputs[2] * 8
                + self.filter_inputs[3] * 8
                + self.filter_inputs[4] * 8
                + self.matched * 8 * 2,
            intermediate_bytes: self.intermediate_bytes,
        }
    }
}

/// Five individual predicates, each its own filter primitive producing a
/// narrower selection vector, then revenue via a multiplied intermediate.
pub fn q6_range(
    lineitem: &ColumnarTable,
    cfg: &VectorConfig,
    scratch: &mut Scratch,
    range: Range<usize>,
) -> Result<VQ6Partial> {
    cfg.validate()?;
    let price_col = lineitem.column("l_extendedprice")?;
    let disc_col = lineitem.column("l_discount")?;
    ensure_sum_feasible(
        lineitem.row_count(),
        price_col.stats().max_abs() as u128 * disc_col.stats().max_abs() as u128,
        "q6",
    )?;
    let ship = lineitem.column("l_shipdate")?.i32();
    let qty = lineitem.column("l_quantity")?.i64();
    let (price, disc) = (price_col.i64(), disc_col.i64());

    let mut p = VQ6Partial::default();
    let Scratch { sel_a, sel_b, w, .. } = scratch;
    let [w0, ..] = w;
    let mode = SelectionMode::Branched;
    for (off, len) in batches_in(range, cfg.vector_size) {
        let end = off + len;
        p.filter_inputs[0] += len as u64;
        filter_i32(&ship[off..end], Q6_SHIP_LO, Cmp::Ge, mode, None, sel_a, false);
        let s1 = sel_a.len() as u64;
        filter_i32(&ship[off..end], Q6_SHIP_HI, Cmp::Lt, mode, Some(sel_a), sel_b, false);
        let s2 = sel_b.len() as u64;
        filter_i64(&disc[off..end], Q6_DISCOUNT_LO, Cmp::Ge, mode, Some(sel_b), sel_a);
        let s3 = sel_a.len() as u64;
        // `disc <= hi` as `disc < hi + 1`.
        filter_i64(&disc[off..end], Q6_DISCOUNT_HI + 1, Cmp::Lt, mode, Some(sel_a), sel_b);
        let s4 = sel_b.len() as u64;
        filter_i64(&qty[off..end], Q6_QUANTITY_BOUND, Cmp::Lt, mode, Some(sel_b), sel_a);

        let sel = sel_a.as_slice();
        let m = sel.len() as u64;
        gather_mul2(&price[off..end], &disc[off..end], sel, w0);
        p.sum = p.sum.wrapping_add(sum_batch(w0, cfg.simd));
        p.filter_inputs[1] += s1;
        p.filter_inputs[2] += s2;
        p.filter_inputs[3] += s3;
        p.filter_inputs[4] += s4;
        p.matched += m;
        p.rows += len as u64;
        p.intermediate_bytes += 4 * (s1 + s2 + s3 + s4 + m) + 8 * m;
    }
    Ok(p)
}

pub fn v_q6(lineitem: &ColumnarTable, cfg: &VectorConfig) -> Result<Evaluation> {
    let mut scratch = Scratch::new(cfg.vector_size);
    let p = q6_range(lineitem, cfg, &mut scratch, 0..lineitem.row_count())?;
    Ok(Evaluation {
        output: QueryOutput::scalar(p.sum, p.matched),
        touch: p.touch(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiled;
    use crate::datagen::{generate_database, GenSpec};
    use crate::oracle::ref_eval;
    use crate::query::QuerySpec;

    const SIZES: [usize; 4] = [64, 256, 1024, 4096];

    fn cfg(vector_size: usize, simd: bool) -> VectorConfig {
        VectorConfig { vector_size, simd }
    }

    #[test]
    fn vector_size_zero_rejected() {
        let db = generate_database(&GenSpec::new(0.001, 42)).unwrap();
        assert!(v_projection(db.lineitem(), 1, &cfg(0, false)).is_err());
    }

    #[test]
    fn projection_matches_compiled_and_oracle_across_batch_sizes() {
        let db = generate_database(&GenSpec::new(0.01, 42)).unwrap();
        for degree in 1..=4 {
            let want = ref_eval(&QuerySpec::Projection { degree }, &db).unwrap();
            let compiled = compiled::c_projection(db.lineitem(), degree).unwrap();
            assert_eq!(compiled.output, want);
            for vs in SIZES {
                for simd in [false, true] {
                    let got = v_projection(db.lineitem(), degree, &cfg(vs, simd)).unwrap();
                    assert_eq!(got.output, want, "degree={degree} vs={vs} simd={simd}");
                }
            }
        }
    }

    #[test]
    fn projection_intermediate_accounting() {
        let db = generate_database(&GenSpec::new(0.001, 42)).unwrap();
        let rows = db.lineitem().row_count() as u64;
        for degree in 1..=4u8 {
            let got = v_projection(db.lineitem(), degree, &cfg(1024, false)).unwrap();
            assert_eq!(
                got.touch.intermediate_bytes,
                (degree as u64 - 1) * 8 * rows,
                "degree {degree}"
            );
        }
    }

    #[test]
    fn selection_matches_compiled_all_modes() {
        let db = generate_database(&GenSpec::new(0.01, 42)).unwrap();
        for p in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let (db2, thr) = db.with_selection(p).unwrap();
            let want = compiled::c_selection(db2.lineitem(), &thr, SelectionMode::Branched)
                .unwrap()
                .output;
            for mode in [SelectionMode::Branched, SelectionMode::Predicated] {
                for simd in [false, true] {
                    let got =
                        v_selection(db2.lineitem(), &thr, mode, &cfg(1024, simd)).unwrap();
                    assert_eq!(got.output, want, "p={p} mode={mode:?} simd={simd}");
                }
            }
        }
    }

    #[test]
    fn selection_p1_gives_identity_selection_vectors() {
        let db = generate_database(&GenSpec::new(0.001, 42)).unwrap();
        let (db2, thr) = db.with_selection(1.0).unwrap();
        let got = v_selection(db2.lineitem(), &thr, SelectionMode::Branched, &cfg(256, false))
            .unwrap();
        let QueryOutput::Scalar(s) = got.output else { panic!() };
        assert_eq!(s.rows_matched, db2.lineitem().row_count() as u64);
    }

    #[test]
    fn joins_match_compiled_and_oracle() {
        let db = generate_database(&GenSpec::new(0.01, 42)).unwrap();
        for size in [JoinSize::Small, JoinSize::Medium, JoinSize::Large] {
            let want = ref_eval(&QuerySpec::Join { size }, &db).unwrap();
            for vs in [64, 1024] {
                for simd in [false, true] {
                    let got = v_hash_join(&db, size, &cfg(vs, simd)).unwrap();
                    assert_eq!(got.output, want, "{size:?} vs={vs} simd={simd}");
                }
            }
        }
    }

    #[test]
    fn join_handles_duplicate_build_keys() {
        use crate::columnar::{ChainedHashTable, Column, ColumnKind, ColumnarTable};
        // Build side with duplicate key 7 (twice); every probe hit must
        // surface both duplicates.
        let build = [7i64, 3, 7];
        let table = ChainedHashTable::build(&build, &build, ENGINE_HASH_SEED).unwrap();
        let probe_tbl = ColumnarTable::new(
            "probe",
            3,
            vec![
                Column::new_i64("k", ColumnKind::Int64, vec![7, 5, 3]),
                Column::new_i64("a", ColumnKind::Int64, vec![10, 20, 30]),
                Column::new_i64("b", ColumnKind::Int64, vec![1, 2, 3]),
            ],
        )
        .unwrap();
        let probe = JoinProbe {
            keys: probe_tbl.column("k").unwrap().i64(),
            agg_cols: vec![
                probe_tbl.column("a").unwrap().i64(),
                probe_tbl.column("b").unwrap().i64(),
            ],
        };
        let mut scratch = Scratch::new(4);
        let p = join_probe_range(&table, &probe, &cfg(4, false), &mut scratch, 0..3).unwrap();
        // Row 0 matches twice (11 * 2), row 2 once (33).
        assert_eq!(p.acc.matched, 3);
        assert_eq!(p.acc.sum, 22 + 33);
    }

    #[test]
    fn groupby_matches_oracle() {
        let db = generate_database(&GenSpec::new(0.01, 42)).unwrap();
        for groups in [1, 1000] {
            let want = ref_eval(&QuerySpec::GroupBy { groups }, &db).unwrap();
            let got = v_groupby(db.lineitem(), groups, &cfg(1024, false)).unwrap();
            assert_eq!(got.output, want, "groups {groups}");
        }
    }

    #[test]
    fn q1_q6_match_compiled_across_batch_sizes() {
        let db = generate_database(&GenSpec::new(0.01, 42)).unwrap();
        let q1_want = compiled::c_q1(db.lineitem()).unwrap().output;
        let q6_want = compiled::c_q6(db.lineitem()).unwrap().output;
        for vs in SIZES {
            assert_eq!(v_q1(db.lineitem(), &cfg(vs, false)).unwrap().output, q1_want);
            assert_eq!(v_q6(db.lineitem(), &cfg(vs, false)).unwrap().output, q6_want);
        }
        assert_eq!(v_q6(db.lineitem(), &cfg(1024, true)).unwrap().output, q6_want);
    }

    #[test]
    fn q1_group_count_is_four() {
        let db = generate_database(&GenSpec::new(0.01, 7)).unwrap();
        let out = v_q1(db.lineitem(), &cfg(1024, false)).unwrap();
        assert_eq!(out.output.group_count(), Some(4));
    }

    #[test]
    fn empty_lineitem_yields_zero_results() {
        let db = generate_database(&GenSpec::new(0.0, 1)).unwrap();
        let c = cfg(1024, false);
        assert_eq!(
            v_projection(db.lineitem(), 4, &c).unwrap().output,
            QueryOutput::scalar(0, 0)
        );
        let (db2, thr) = db.with_selection(0.5).unwrap();
        assert_eq!(
            v_selection(db2.lineitem(), &thr, SelectionMode::Predicated, &c)
                .unwrap()
                .output,
            QueryOutput::scalar(0, 0)
        );
        assert_eq!(
            v_q6(db.lineitem(), &c).unwrap().output,
            QueryOutput::scalar(0, 0)
        );
        let QueryOutput::Groups(g) = v_q1(db.lineitem(), &c).unwrap().output else {
            panic!()
        };
        assert!(g.is_empty());
    }
}
