//! Naive row-at-a-time reference interpreter.
//!
//! Ground truth for every in-scope query. Deliberately shares no kernels
//! with the engines: joins run as nested loops on small inputs or through
//! `std::collections::HashMap` (SipHash) otherwise, aggregation goes
//! through `BTreeMap`. All arithmetic is exact i64.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::datagen::Database;
use crate::error::{Error, Result};
use crate::query::{
    GroupRow, JoinSize, QueryOutput, QuerySpec, ThresholdSet, Q1_SHIP_CUTOFF, Q6_DISCOUNT_HI,
    Q6_DISCOUNT_LO, Q6_QUANTITY_BOUND, Q6_SHIP_HI, Q6_SHIP_LO,
};

/// Above this build*probe product the nested-loop join switches to a hash
/// map; keeps the oracle usable up to sf 1 while staying trivially correct.
const NESTED_LOOP_LIMIT: u128 = 100_000_000;

fn projection_sum(db: &Database, degree: u8, rows: Option<&[usize]>) -> Result<(i64, u64)> {
    let li = db.lineitem();
    let names = ["l_extendedprice", "l_discount", "l_tax", "l_quantity"];
    let cols: Vec<&[i64]> = names[..degree as usize]
        .iter()
        .map(|n| li.column(n).map(|c| c.i64()))
        .collect::<Result<_>>()?;
    let mut sum: i64 = 0;
    let mut add_row = |i: usize| -> Result<()> {
        for col in &cols {
            sum = sum
                .checked_add(col[i])
                .ok_or_else(|| Error::Overflow("oracle projection".into()))?;
        }
        Ok(())
    };
    let count = match rows {
        None => {
            for i in 0..li.row_count() {
                add_row(i)?;
            }
            li.row_count() as u64
        }
        Some(rows) => {
            for &i in rows {
                add_row(i)?;
            }
            rows.len() as u64
        }
    };
    Ok((sum, count))
}

fn eval_projection(db: &Database, degree: u8) -> Result<QueryOutput> {
    let (sum, rows) = projection_sum(db, degree, None)?;
    Ok(QueryOutput::scalar(sum, rows))
}

fn eval_selection(db: &Database, p: f64) -> Result<QueryOutput> {
    let t = crate::datagen::threshold_for_selectivity(crate::query::DATE_DAYS, p)?;
    let thr = ThresholdSet {
        p,
        shipdate: t,
        commitdate: t,
        receiptdate: t,
    };
    let li = db.lineitem();
    let ship = li.column("l_shipdate")?.i32();
    let commit = li.column("l_commitdate")?.i32();
    let receipt = li.column("l_receiptdate")?.i32();
    let qualifying: Vec<usize> = (0..li.row_count())
        .filter(|&i| {
            ship[i] < thr.shipdate && commit[i] < thr.commitdate && receipt[i] < thr.receiptdate
        })
        .collect();
    let (sum, rows) = projection_sum(db, 4, Some(&qualifying))?;
    Ok(QueryOutput::scalar(sum, rows))
}

struct JoinPlan<'a> {
    build_keys: &'a [i64],
    probe_keys: &'a [i64],
    agg_cols: Vec<&'a [i64]>,
}

fn join_plan<'a>(db: &'a Database, size: JoinSize) -> Result<JoinPlan<'a>> {
    Ok(match size {
        JoinSize::Small => JoinPlan {
            build_keys: db.nation().column("n_nationkey")?.i64(),
            probe_keys: db.supplier().column("s_nationkey")?.i64(),
            agg_cols: vec![
                db.supplier().column("s_acctbal")?.i64(),
                db.supplier().column("s_suppkey")?.i64(),
            ],
        },
        JoinSize::Medium => JoinPlan {
            build_keys: db.supplier().column("s_suppkey")?.i64(),
            probe_keys: db.partsupp().column("ps_suppkey")?.i64(),
            agg_cols: vec![
                db.partsupp().column("ps_availqty")?.i64(),
                db.partsupp().column("ps_supplycost")?.i64(),
            ],
        },
        JoinSize::Large => JoinPlan {
            build_keys: db.orders().column("o_orderkey")?.i64(),
            probe_keys: db.lineitem().column("l_orderkey")?.i64(),
            agg_cols: vec![
                db.lineitem().column("l_extendedprice")?.i64(),
                db.lineitem().column("l_discount")?.i64(),
                db.lineitem().column("l_tax")?.i64(),
                db.lineitem().column("l_quantity")?.i64(),
            ],
        },
    })
}

fn eval_join(db: &Database, size: JoinSize) -> Result<QueryOutput> {
    let plan = join_plan(db, size)?;
    let mut sum: i64 = 0;
    let mut matches: u64 = 0;
    let mut add_match = |probe_row: usize, times: u64| -> Result<()> {
        for _ in 0..times {
            for col in &plan.agg_cols {
                sum = sum
                    .checked_add(col[probe_row])
                    .ok_or_else(|| Error::Overflow("oracle join".into()))?;
            }
        }
        matches += times;
        Ok(())
    };
    let product = plan.build_keys.len() as u128 * plan.probe_keys.len() as u128;
    if product <= NESTED_LOOP_LIMIT {
        for (pi, &pk) in plan.probe_keys.iter().enumerate() {
            let hits = plan.build_keys.iter().filter(|&&bk| bk == pk).count() as u64;
            if hits > 0 {
                add_match(pi, hits)?;
            }
        }
    } else {
        let mut table: HashMap<i64, u64> = HashMap::new();
        for &bk in plan.build_keys {
            *table.entry(bk).or_insert(0) += 1;
        }
        for (pi, &pk) in plan.probe_keys.iter().enumerate() {
            if let Some(&hits) = table.get(&pk) {
                add_match(pi, hits)?;
            }
        }
    }
    Ok(QueryOutput::scalar(sum, matches))
}

fn eval_groupby(db: &Database, groups: u64) -> Result<QueryOutput> {
    let li = db.lineitem();
    let orderkey = li.column("l_orderkey")?.i64();
    let linenumber = li.column("l_linenumber")?.i32();
    let price = li.column("l_extendedprice")?.i64();
    let discount = li.column("l_discount")?.i64();
    let mut map: BTreeMap<i64, i64> = BTreeMap::new();
    for i in 0..li.row_count() {
        let line_id = (orderkey[i] - 1) * 4 + (linenumber[i] as i64 - 1);
        let key = line_id.rem_euclid(groups as i64);
        let entry = map.entry(key).or_insert(0);
        *entry = entry
            .checked_add(price[i] + discount[i])
            .ok_or_else(|| Error::Overflow("oracle group-by".into()))?;
    }
    Ok(QueryOutput::Groups(
        map.into_iter()
            .map(|(key, sum)| GroupRow {
                key,
                values: vec![sum],
            })
            .collect(),
    ))
}

fn eval_q1(db: &Database) -> Result<QueryOutput> {
    let li = db.lineitem();
    let flag = li.column("l_returnflag")?.i32();
    let status = li.column("l_linestatus")?.i32();
    let ship = li.column("l_shipdate")?.i32();
    let qty = li.column("l_quantity")?.i64();
    let price = li.column("l_extendedprice")?.i64();
    let disc = li.column("l_discount")?.i64();
    let tax = li.column("l_tax")?.i64();

    // values: [sum_qty, sum_base_price, sum_disc_price, sum_charge, count]
    let mut map: BTreeMap<i64, [i64; 5]> = BTreeMap::new();
    for i in 0..li.row_count() {
        if ship[i] > Q1_SHIP_CUTOFF {
            continue;
        }
        let key = flag[i] as i64 * 2 + status[i] as i64;
        let disc_price = price[i] * (100 - disc[i]);
        let charge = disc_price * (100 + tax[i]);
        let aggs = map.entry(key).or_insert([0; 5]);
        aggs[0] += qty[i];
        aggs[1] += price[i];
        aggs[2] += disc_price;
        aggs[3] = aggs[3]
            .checked_add(charge)
            .ok_or_else(|| Error::Overflow("oracle q1 charge".into()))?;
        aggs[4] += 1;
    }
    Ok(QueryOutput::Groups(
        map.into_iter()
            .map(|(key, aggs)| GroupRow {
                key,
                values: aggs.to_vec(),
            })
            .collect(),
    ))
}

fn eval_q6(db: &Database) -> Result<QueryOutput> {
    let li = db.lineitem();
    let ship = li.column("l_shipdate")?.i32();
    let disc = li.column("l_discount")?.i64();
    let qty = li.column("l_quantity")?.i64();
    let price = li.column("l_extendedprice")?.i64();
    let mut revenue: i64 = 0;
    let mut matches: u64 = 0;
    for i in 0..li.row_count() {
        if ship[i] >= Q6_SHIP_LO
            && ship[i] < Q6_SHIP_HI
            && disc[i] >= Q6_DISCOUNT_LO
            && disc[i] <= Q6_DISCOUNT_HI
            && qty[i] < Q6_QUANTITY_BOUND
        {
            revenue = revenue
                .checked_add(price[i] * disc[i])
                .ok_or_else(|| Error::Overflow("oracle q6".into()))?;
            matches += 1;
        }
    }
    Ok(QueryOutput::scalar(revenue, matches))
}

/// Evaluates a query straightforwardly, row at a time.
///
/// Selection runs against whatever date columns the database carries, so
/// exact-mode databases must be evaluated after `with_selection` — the
/// same flow the engines use.
pub fn ref_eval(query: &QuerySpec, db: &Database) -> Result<QueryOutput> {
    query.validate()?;
    match *query {
        QuerySpec::Projection { degree } => eval_projection(db, degree),
        QuerySpec::Selection { p, .. } => eval_selection(db, p),
        QuerySpec::Join { size } => eval_join(db, size),
        QuerySpec::GroupBy { groups } => eval_groupby(db, groups),
        QuerySpec::Q1 => eval_q1(db),
        QuerySpec::Q6 => eval_q6(db),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{Column, ColumnKind, ColumnarTable};
    use crate::datagen::{generate_database, GenSpec};

    /// Three-row toy lineitem with hand-checkable sums.
    pub(crate) fn toy_db() -> Database {
        let li = ColumnarTable::new(
            "lineitem",
            3,
            vec![
                Column::new_i64("l_orderkey", ColumnKind::Int64, vec![1, 1, 1]),
                Column::new_i32("l_linenumber", ColumnKind::Int32, vec![1, 2, 3]),
                Column::new_i64("l_quantity", ColumnKind::Int64, vec![1, 2, 3]),
                Column::new_i64("l_extendedprice", ColumnKind::Money, vec![100, 200, 300]),
                Column::new_i64("l_discount", ColumnKind::Money, vec![1, 2, 3]),
                Column::new_i64("l_tax", ColumnKind::Money, vec![0, 1, 2]),
                Column::new_i32("l_shipdate", ColumnKind::Date, vec![10, 20, 30]),
                Column::new_i32("l_commitdate", ColumnKind::Date, vec![10, 20, 30]),
                Column::new_i32("l_receiptdate", ColumnKind::Date, vec![10, 20, 30]),
                Column::new_i32("l_returnflag", ColumnKind::Int32, vec![0, 1, 1]),
                Column::new_i32("l_linestatus", ColumnKind::Int32, vec![0, 0, 1]),
            ],
        )
        .unwrap();
        let orders = ColumnarTable::new(
            "orders",
            1,
            vec![Column::new_i64("o_orderkey", ColumnKind::Int64, vec![1])],
        )
        .unwrap();
        let supplier = ColumnarTable::new(
            "supplier",
            2,
            vec![
                Column::new_i64("s_suppkey", ColumnKind::Int64, vec![1, 2]),
                Column::new_i64("s_nationkey", ColumnKind::Int64, vec![3, 3]),
                Column::new_i64("s_acctbal", ColumnKind::Money, vec![500, -100]),
            ],
        )
        .unwrap();
        let nation = ColumnarTable::new(
            "nation",
            2,
            vec![Column::new_i64("n_nationkey", ColumnKind::Int64, vec![3, 4])],
        )
        .unwrap();
        let partsupp = ColumnarTable::new(
            "partsupp",
            2,
            vec![
                Column::new_i64("ps_suppkey", ColumnKind::Int64, vec![1, 1]),
                Column::new_i64("ps_availqty", ColumnKind::Int64, vec![10, 20]),
                Column::new_i64("ps_supplycost", ColumnKind::Money, vec![7, 9]),
            ],
        )
        .unwrap();
        Database::from_tables(
            GenSpec::new(0.0, 0),
            vec![li, orders, supplier, nation, partsupp],
        )
    }

    #[test]
    fn projection_degree_one_toy() {
        let out = ref_eval(&QuerySpec::Projection { degree: 1 }, &toy_db()).unwrap();
        assert_eq!(out, QueryOutput::scalar(600, 3));
    }

    #[test]
    fn projection_degree_additivity() {
        let db = toy_db();
        let d1 = ref_eval(&QuerySpec::Projection { degree: 1 }, &db).unwrap();
        let d2 = ref_eval(&QuerySpec::Projection { degree: 2 }, &db).unwrap();
        let (QueryOutput::Scalar(a), QueryOutput::Scalar(b)) = (d1, d2) else {
            panic!()
        };
        assert_eq!(b.value, a.value + 6); // discounts sum to 6
    }

    #[test]
    fn selection_p1_equals_projection_4() {
        let db = toy_db();
        let sel = ref_eval(
            &QuerySpec::Selection {
                p: 1.0,
                mode: crate::query::SelectionMode::Branched,
            },
            &db,
        )
        .unwrap();
        let proj = ref_eval(&QuerySpec::Projection { degree: 4 }, &db).unwrap();
        assert_eq!(sel, proj);
    }

    #[test]
    fn selection_p0_matches_nothing() {
        let out = ref_eval(
            &QuerySpec::Selection {
                p: 0.0,
                mode: crate::query::SelectionMode::Branched,
            },
            &toy_db(),
        )
        .unwrap();
        assert_eq!(out, QueryOutput::scalar(0, 0));
    }

    #[test]
    fn small_join_counts_fk_matches() {
        // Both suppliers reference nation 3; nation 4 matches nothing.
        let out = ref_eval(
            &QuerySpec::Join {
                size: JoinSize::Small,
            },
            &toy_db(),
        )
        .unwrap();
        assert_eq!(out, QueryOutput::scalar(500 + 1 - 100 + 2, 2));
    }

    #[test]
    fn medium_join_toy() {
        let out = ref_eval(
            &QuerySpec::Join {
                size: JoinSize::Medium,
            },
            &toy_db(),
        )
        .unwrap();
        assert_eq!(out, QueryOutput::scalar(10 + 7 + 20 + 9, 2));
    }

    #[test]
    fn large_join_equals_projection_on_fk_total_data() {
        let db = generate_database(&GenSpec::new(0.001, 42)).unwrap();
        let join = ref_eval(
            &QuerySpec::Join {
                size: JoinSize::Large,
            },
            &db,
        )
        .unwrap();
        let proj = ref_eval(&QuerySpec::Projection { degree: 4 }, &db).unwrap();
        assert_eq!(join, proj);
    }

    #[test]
    fn small_join_match_count_equals_supplier_rows() {
        let db = generate_database(&GenSpec::new(0.1, 42)).unwrap();
        let out = ref_eval(
            &QuerySpec::Join {
                size: JoinSize::Small,
            },
            &db,
        )
        .unwrap();
        let QueryOutput::Scalar(s) = out else { panic!() };
        assert_eq!(s.rows_matched, db.supplier().row_count() as u64);
    }

    #[test]
    fn groupby_single_group_equals_projection_degree_2() {
        let db = toy_db();
        let gb = ref_eval(&QuerySpec::GroupBy { groups: 1 }, &db).unwrap();
        let proj = ref_eval(&QuerySpec::Projection { degree: 2 }, &db).unwrap();
        let QueryOutput::Groups(groups) = gb else { panic!() };
        let QueryOutput::Scalar(p) = proj else { panic!() };
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].values[0], p.value);
    }

    #[test]
    fn groupby_knob_equal_rows_gives_singleton_groups() {
        let db = generate_database(&GenSpec::new(0.001, 42)).unwrap();
        let rows = db.lineitem().row_count() as u64;
        let out = ref_eval(&QuerySpec::GroupBy { groups: rows }, &db).unwrap();
        let QueryOutput::Groups(groups) = out else { panic!() };
        assert_eq!(groups.len(), rows as usize);
    }

    #[test]
    fn q1_toy_aggregates() {
        let out = ref_eval(&QuerySpec::Q1, &toy_db()).unwrap();
        let QueryOutput::Groups(groups) = out else { panic!() };
        assert_eq!(groups.len(), 3);
        // Group A/F: row 0 only.
        assert_eq!(groups[0].key, 0);
        assert_eq!(
            groups[0].values,
            vec![1, 100, 100 * 99, 100 * 99 * 100, 1]
        );
        // Group N/F: row 1; N/O: row 2.
        assert_eq!(groups[1].key, 2);
        assert_eq!(groups[2].key, 3);
        assert_eq!(
            groups[2].values,
            vec![3, 300, 300 * 97, 300 * 97 * 102, 1]
        );
    }

    #[test]
    fn q6_toy_revenue() {
        // No toy row falls in the Q6 shipdate window.
        let out = ref_eval(&QuerySpec::Q6, &toy_db()).unwrap();
        assert_eq!(out, QueryOutput::scalar(0, 0));
    }
}
