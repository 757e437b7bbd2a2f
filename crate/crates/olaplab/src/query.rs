//! Query identifiers, parameters and result types shared by both engines,
//! the oracle and the driver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day range shared by the three lineitem date columns: 7 years starting
/// 1992-01-01 (epoch day 0), 2557 distinct days.
pub const DATE_DAYS: i32 = 2557;

/// TPC-H Q6 constants over the generated domains: one year of shipdate
/// (1994), a three-value discount band, and a quantity upper bound.
/// Individual selectivities 365/2557, 3/11 and 23/50; product ~1.79%.
pub const Q6_SHIP_LO: i32 = 731; // 1994-01-01
pub const Q6_SHIP_HI: i32 = 1096; // 1995-01-01 (exclusive)
pub const Q6_DISCOUNT_LO: i64 = 5;
pub const Q6_DISCOUNT_HI: i64 = 7; // inclusive
pub const Q6_QUANTITY_BOUND: i64 = 24; // exclusive

/// TPC-H Q1 shipdate cutoff: 1998-12-01 minus 90 days (epoch day 2436,
/// inclusive).
pub const Q1_SHIP_CUTOFF: i32 = 2436;

/// Q1 group key encoding: `returnflag * 2 + linestatus` with the flag codes
/// of datagen (A=0, N=1, R=2) and status codes (F=0, O=1).
pub const Q1_GROUP_SLOTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JoinSize {
    Small,
    Medium,
    Large,
}

impl JoinSize {
    pub fn parse(s: &str) -> Result<JoinSize> {
        match s {
            "small" => Ok(JoinSize::Small),
            "medium" => Ok(JoinSize::Medium),
            "large" => Ok(JoinSize::Large),
            other => Err(Error::spec(format!("unknown join size `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JoinSize::Small => "small",
            JoinSize::Medium => "medium",
            JoinSize::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Branched,
    Predicated,
}

impl SelectionMode {
    pub fn parse(s: &str) -> Result<SelectionMode> {
        match s {
            "branched" => Ok(SelectionMode::Branched),
            "predicated" => Ok(SelectionMode::Predicated),
            other => Err(Error::spec(format!("unknown selection mode `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::Branched => "branched",
            SelectionMode::Predicated => "predicated",
        }
    }
}

/// Per-predicate thresholds installed on the three selection date columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub p: f64,
    pub shipdate: i32,
    pub commitdate: i32,
    pub receiptdate: i32,
}

/// One of the in-scope query shapes, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "lowercase")]
pub enum QuerySpec {
    Projection { degree: u8 },
    Selection { p: f64, mode: SelectionMode },
    Join { size: JoinSize },
    GroupBy { groups: u64 },
    Q1,
    Q6,
}

impl QuerySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuerySpec::Projection { degree } => {
                if !(1..=4).contains(&degree) {
                    return Err(Error::spec(format!(
                        "projection degree must be 1..=4, got {degree}"
                    )));
                }
            }
            QuerySpec::Selection { p, .. } => {
                if !(0.0..=1.0).contains(&p) || p.is_nan() {
                    return Err(Error::spec(format!(
                        "selectivity must lie in [0, 1], got {p}"
                    )));
                }
            }
            QuerySpec::GroupBy { groups } => {
                if groups == 0 {
                    return Err(Error::spec("group-by cardinality knob must be >= 1"));
                }
            }
            QuerySpec::Join { .. } | QuerySpec::Q1 | QuerySpec::Q6 => {}
        }
        Ok(())
    }

    /// Compact text form used by `bench oracle --query` and report rows:
    /// `projection:degree=3`, `selection:p=0.5,mode=branched`,
    /// `join:size=large`, `groupby:groups=1000`, `q1`, `q6`.
    pub fn parse(text: &str) -> Result<QuerySpec> {
        let (name, args) = match text.split_once(':') {
            Some((n, a)) => (n, a),
            None => (text, ""),
        };
        let mut kv = std::collections::HashMap::new();
        for part in args.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::spec(format!("bad query parameter `{part}`")))?;
            kv.insert(k.trim(), v.trim());
        }
        let spec = match name.trim() {
            "projection" => QuerySpec::Projection {
                degree: kv
                    .get("degree")
                    .ok_or_else(|| Error::spec("projection needs degree=1..4"))?
                    .parse()
                    .map_err(|e| Error::spec(format!("bad degree: {e}")))?,
            },
            "selection" => QuerySpec::Selection {
                p: kv
                    .get("p")
                    .ok_or_else(|| Error::spec("selection needs p=<fraction>"))?
                    .parse()
                    .map_err(|e| Error::spec(format!("bad p: {e}")))?,
                mode: kv
                    .get("mode")
                    .map(|m| SelectionMode::parse(m))
                    .transpose()?
                    .unwrap_or(SelectionMode::Branched),
            },
            "join" => QuerySpec::Join {
                size: JoinSize::parse(
                    kv.get("size")
                        .ok_or_else(|| Error::spec("join needs size=small|medium|large"))?,
                )?,
            },
            "groupby" => QuerySpec::GroupBy {
                groups: kv
                    .get("groups")
                    .ok_or_else(|| Error::spec("groupby needs groups=<count>"))?
                    .parse()
                    .map_err(|e| Error::spec(format!("bad groups: {e}")))?,
            },
            "q1" => QuerySpec::Q1,
            "q6" => QuerySpec::Q6,
            other => return Err(Error::spec(format!("unknown query `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match *self {
            QuerySpec::Projection { degree } => format!("projection:degree={degree}"),
            QuerySpec::Selection { p, mode } => {
                format!("selection:p={p},mode={}", mode.as_str())
            }
            QuerySpec::Join { size } => format!("join:size={}", size.as_str()),
            QuerySpec::GroupBy { groups } => format!("groupby:groups={groups}"),
            QuerySpec::Q1 => "q1".into(),
            QuerySpec::Q6 => "q6".into(),
        }
    }
}

/// Scalar query result: exact integer aggregate plus the number of rows
/// that fed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarResult {
    pub value: i64,
    pub rows_matched: u64,
}

/// One group of a grouped result; `values` layout is per query
/// (group-by: `[sum]`; Q1: `[sum_qty, sum_base_price, sum_disc_price,
/// sum_charge, count]`). Money sums keep their exact fixed-point scales:
/// disc_price is price*cents^2 (1e-4 dollars), charge 1e-6 dollars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRow {
    pub key: i64,
    pub values: Vec<i64>,
}

/// Exact result of a query; grouped results are canonically sorted by key
/// so equality is structural.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum QueryOutput {
    Scalar(ScalarResult),
    Groups(Vec<GroupRow>),
}

impl QueryOutput {
    pub fn scalar(value: i64, rows_matched: u64) -> Self {
        QueryOutput::Scalar(ScalarResult {
            value,
            rows_matched,
        })
    }

    pub fn group_count(&self) -> Option<usize> {
        match self {
            QueryOutput::Groups(g) => Some(g.len()),
            QueryOutput::Scalar(_) => None,
        }
    }
}

/// Data-volume accounting for a query execution. `bytes_touched` sums, per
/// accessed column, the exact number of element reads times the column
/// width; it deliberately excludes hash-table traffic so it stays a lower
/// bound on true memory traffic. `intermediate_bytes` counts bytes written
/// to materialized intermediates (vectorized engine only).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TouchStats {
    pub rows_scanned: u64,
    pub bytes_touched: u64,
    pub intermediate_bytes: u64,
}

/// A query execution outcome: the exact output plus volume accounting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub output: QueryOutput,
    pub touch: TouchStats,
}

/// Sorts group rows into the canonical (key-ascending) order.
pub fn sort_groups(mut groups: Vec<GroupRow>) -> Vec<GroupRow> {
    groups.sort_unstable_by_key(|g| g.key);
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trips() {
        for text in [
            "projection:degree=3",
            "selection:p=0.5,mode=branched",
            "selection:p=0.1,mode=predicated",
            "join:size=large",
            "groupby:groups=1000",
            "q1",
            "q6",
        ] {
            let spec = QuerySpec::parse(text).unwrap();
            assert_eq!(QuerySpec::parse(&spec.label()).unwrap(), spec);
        }
    }

    #[test]
    fn parse_rejects_bad_specs() {
        assert!(QuerySpec::parse("projection:degree=5").is_err());
        assert!(QuerySpec::parse("projection").is_err());
        assert!(QuerySpec::parse("selection:p=1.5").is_err());
        assert!(QuerySpec::parse("join:size=tiny").is_err());
        assert!(QuerySpec::parse("groupby:groups=0").is_err());
        assert!(QuerySpec::parse("q7").is_err());
    }

    #[test]
    fn q6_constants_give_two_percent_overall() {
        let ship = (Q6_SHIP_HI - Q6_SHIP_LO) as f64 / DATE_DAYS as f64;
        let disc = (Q6_DISCOUNT_HI - Q6_DISCOUNT_LO + 1) as f64 / 11.0;
        let qty = (Q6_QUANTITY_BOUND - 1) as f64 / 50.0;
        let overall = ship * disc * qty;
        assert!((0.015..=0.025).contains(&overall), "overall {overall}");
    }
}
