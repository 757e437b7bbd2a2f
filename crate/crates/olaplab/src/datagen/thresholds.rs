//! Selectivity thresholds and the exact-mode column marking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Database;
use crate::columnar::{hash64, Column, ColumnKind};
use crate::error::{Error, Result};
use crate::query::{ThresholdSet, DATE_DAYS};

/// Day threshold such that `value < threshold` matches fraction `p` of a
/// column uniform over `[0, days)`. Resolution is one day, so realized
/// fractions are multiples of `1/days`.
pub fn threshold_for_selectivity(days: i32, p: f64) -> Result<i32> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::spec(format!("selectivity {p} outside [0, 1]")));
    }
    Ok((p * days as f64).floor() as i32)
}

fn selection_rng(seed: u64, p: f64, tag: &str) -> ChaCha8Rng {
    let mut h = hash64(p.to_bits() as i64, seed);
    for b in tag.bytes() {
        h = hash64(b as i64, h);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Stratified values over `[lo, hi)` for `n` rows, assigned in rank order.
fn stratified_range(n: usize, lo: i32, hi: i32) -> impl Iterator<Item = i32> {
    let span = (hi - lo) as i64;
    (0..n).map(move |i| lo + ((i as i64 * span) / n.max(1) as i64) as i32)
}

/// Installs thresholds for per-predicate selectivity `p`.
///
/// Default mode: thresholds only; the stratified date columns already
/// realize `p` within one day of resolution.
///
/// Exact mode rewrites the three date columns through a nested prefix
/// marking over one seeded master permutation of the rows. With
/// `m1 = floor(p*n)`, `m12 = floor(p*m1)`, `m123 = floor(p*m12)`, the
/// marked rank sets are
///
/// ```text
/// shipdate:    [0, m1)
/// commitdate:  [0, m12)  ∪ [m1, m1 + (m1 - m12))
/// receiptdate: [0, m123) ∪ [m12, m12 + (m1 - m123))
/// ```
///
/// Each set has exactly `m1` members, so every predicate matches exactly
/// `floor(p*n)` rows, and the conjunction matches exactly `m123` rows
/// (ranks `[0, m123)`). Marked rows receive values stratified below the
/// threshold, unmarked rows at or above it.
pub fn install_selection(db: &Database, p: f64) -> Result<(Database, ThresholdSet)> {
    let t = threshold_for_selectivity(DATE_DAYS, p)?;
    let thresholds = ThresholdSet {
        p,
        shipdate: t,
        commitdate: t,
        receiptdate: t,
    };
    if !db.spec.exact_selectivity {
        return Ok((db.clone(), thresholds));
    }

    let n = db.lineitem().row_count();
    let mut rows_by_rank: Vec<u32> = (0..n as u32).collect();
    rows_by_rank.shuffle(&mut selection_rng(db.spec.seed, p, "selection-perm"));

    let m1 = (p * n as f64).floor() as usize;
    let m12 = (p * m1 as f64).floor() as usize;
    let m123 = (p * m12 as f64).floor() as usize;

    // Day-threshold resolution bound: below one day of selectivity the
    // threshold is 0 and no row can match.
    let m1 = if t == 0 { 0 } else { m1 };
    let m12 = if t == 0 { 0 } else { m12 };
    let m123 = if t == 0 { 0 } else { m123 };

    let marked_ranges: [[(usize, usize); 2]; 3] = [
        [(0, m1), (0, 0)],
        [(0, m12), (m1, m1 + (m1 - m12))],
        [(0, m123), (m12, m12 + (m1 - m123))],
    ];

    let mut out = db.clone();
    for (col_name, ranges) in ["l_shipdate", "l_commitdate", "l_receiptdate"]
        .iter()
        .zip(marked_ranges)
    {
        let mut marked_rows: Vec<u32> = Vec::with_capacity(m1);
        for (lo, hi) in ranges {
            debug_assert!(hi <= n, "marking range exceeds row count");
            marked_rows.extend_from_slice(&rows_by_rank[lo..hi.min(n)]);
        }
        let unmarked_rows: Vec<u32> = {
            let mut in_marked = vec![false; n];
            for &r in &marked_rows {
                in_marked[r as usize] = true;
            }
            (0..n as u32).filter(|&r| !in_marked[r as usize]).collect()
        };

        let mut values = vec![0i32; n];
        for (row, v) in marked_rows
            .iter()
            .zip(stratified_range(marked_rows.len(), 0, t))
        {
            values[*row as usize] = v;
        }
        // p = 1 leaves no unmarked rows, so the empty [t, days) range is
        // never sampled.
        for (row, v) in unmarked_rows
            .iter()
            .zip(stratified_range(unmarked_rows.len(), t, DATE_DAYS))
        {
            values[*row as usize] = v;
        }
        out.replace_lineitem_column(Column::new_i32(*col_name, ColumnKind::Date, values));
    }
    Ok((out, thresholds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_database, GenSpec};

    #[test]
    fn threshold_edges() {
        assert_eq!(threshold_for_selectivity(DATE_DAYS, 0.0).unwrap(), 0);
        assert_eq!(threshold_for_selectivity(DATE_DAYS, 1.0).unwrap(), DATE_DAYS);
        assert!(threshold_for_selectivity(DATE_DAYS, -0.1).is_err());
        assert!(threshold_for_selectivity(DATE_DAYS, 1.1).is_err());
        assert!(threshold_for_selectivity(DATE_DAYS, f64::NAN).is_err());
    }

    fn measured_selectivity(values: &[i32], t: i32) -> f64 {
        values.iter().filter(|&&v| v < t).count() as f64 / values.len() as f64
    }

    /// Oracle scan: count qualifying rows per column and compare to target.
    #[test]
    fn default_mode_selectivity_within_tolerance() {
        let db = generate_database(&GenSpec::new(0.1, 42)).unwrap();
        for p in [0.1, 0.5, 0.9] {
            let (db2, thr) = db.with_selection(p).unwrap();
            for (name, t) in [
                ("l_shipdate", thr.shipdate),
                ("l_commitdate", thr.commitdate),
                ("l_receiptdate", thr.receiptdate),
            ] {
                let col = db2.lineitem().column(name).unwrap().i32();
                let got = measured_selectivity(col, t);
                assert!(
                    (got - p).abs() <= 0.002,
                    "{name} p={p}: measured {got}"
                );
            }
        }
    }

    #[test]
    fn exact_mode_selectivity_is_exact() {
        let db = generate_database(&GenSpec::new(0.01, 42).exact()).unwrap();
        let n = db.lineitem().row_count();
        for p in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let (db2, thr) = db.with_selection(p).unwrap();
            for (name, t) in [
                ("l_shipdate", thr.shipdate),
                ("l_commitdate", thr.commitdate),
                ("l_receiptdate", thr.receiptdate),
            ] {
                let col = db2.lineitem().column(name).unwrap().i32();
                let matches = col.iter().filter(|&&v| v < t).count();
                assert_eq!(matches, (p * n as f64).floor() as usize, "{name} p={p}");
            }
        }
    }

    #[test]
    fn exact_mode_conjunction_is_floor_cascade() {
        let db = generate_database(&GenSpec::new(0.01, 42).exact()).unwrap();
        let n = db.lineitem().row_count();
        for p in [0.1, 0.5, 0.9] {
            let (db2, thr) = db.with_selection(p).unwrap();
            let ship = db2.lineitem().column("l_shipdate").unwrap().i32();
            let commit = db2.lineitem().column("l_commitdate").unwrap().i32();
            let receipt = db2.lineitem().column("l_receiptdate").unwrap().i32();
            let got = (0..n)
                .filter(|&i| {
                    ship[i] < thr.shipdate
                        && commit[i] < thr.commitdate
                        && receipt[i] < thr.receiptdate
                })
                .count();
            let m1 = (p * n as f64).floor() as usize;
            let m12 = (p * m1 as f64).floor() as usize;
            let m123 = (p * m12 as f64).floor() as usize;
            assert_eq!(got, m123, "p={p}");
        }
    }

    #[test]
    fn exact_mode_values_stay_in_domain() {
        let db = generate_database(&GenSpec::new(0.01, 7).exact()).unwrap();
        let (db2, _) = db.with_selection(0.5).unwrap();
        for name in ["l_shipdate", "l_commitdate", "l_receiptdate"] {
            let stats = db2.lineitem().column(name).unwrap().stats();
            assert!(stats.min >= 0 && stats.max < DATE_DAYS as i64);
        }
    }

    #[test]
    fn install_is_deterministic() {
        let db = generate_database(&GenSpec::new(0.01, 42).exact()).unwrap();
        let (a, _) = db.with_selection(0.5).unwrap();
        let (b, _) = db.with_selection(0.5).unwrap();
        assert_eq!(
            a.lineitem().column("l_shipdate").unwrap().i32(),
            b.lineitem().column("l_shipdate").unwrap().i32()
        );
    }
}
