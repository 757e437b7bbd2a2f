//! Every in-scope query through three independent routes — the fused
//! compiled loops, the vectorized batch operators, and the row-at-a-time
//! reference interpreter — and exact equality across all of them.
//!
//!     cargo run --release --example engine_equivalence

use olaplab::compiled;
use olaplab::datagen::{generate_database, GenSpec};
use olaplab::oracle::ref_eval;
use olaplab::query::{JoinSize, QuerySpec, SelectionMode};
use olaplab::vectorized::{self, VectorConfig};

fn main() -> olaplab::Result<()> {
    let db = generate_database(&GenSpec::new(0.01, 42))?;
    let cfg = VectorConfig::default();

    let mut queries = vec![];
    for degree in 1..=4 {
        queries.push(QuerySpec::Projection { degree });
    }
    for p in [0.1, 0.5, 0.9] {
        queries.push(QuerySpec::Selection {
            p,
            mode: SelectionMode::Predicated,
        });
    }
    for size in [JoinSize::Small, JoinSize::Medium, JoinSize::Large] {
        queries.push(QuerySpec::Join { size });
    }
    queries.push(QuerySpec::GroupBy { groups: 1000 });
    queries.push(QuerySpec::Q1);
    queries.push(QuerySpec::Q6);

    println!("{:<28} {:>22} {:>10}", "query", "result", "agree");
    for query in queries {
        let (db_q, thr) = match query {
            QuerySpec::Selection { p, .. } => {
                let (d, t) = db.with_selection(p)?;
                (d, Some(t))
            }
            _ => (db.clone(), None),
        };
        let oracle = ref_eval(&query, &db_q)?;
        let compiled_out = match query {
            QuerySpec::Projection { degree } => compiled::c_projection(db_q.lineitem(), degree)?,
            QuerySpec::Selection { mode, .. } => {
                compiled::c_selection(db_q.lineitem(), &thr.unwrap(), mode)?
            }
            QuerySpec::Join { size } => compiled::c_hash_join(&db_q, size)?,
            QuerySpec::GroupBy { groups } => compiled::c_groupby(db_q.lineitem(), groups)?,
            QuerySpec::Q1 => compiled::c_q1(db_q.lineitem())?,
            QuerySpec::Q6 => compiled::c_q6(db_q.lineitem())?,
        };
        let vector_out = match query {
            QuerySpec::Projection { degree } => {
                vectorized::v_projection(db_q.lineitem(), degree, &cfg)?
            }
            QuerySpec::Selection { mode, .. } => {
                vectorized::v_selection(db_q.lineitem(), &thr.unwrap(), mode, &cfg)?
            }
            QuerySpec::Join { size } => vectorized::v_hash_join(&db_q, size, &cfg)?,
            QuerySpec::GroupBy { groups } => {
                vectorized::v_groupby(db_q.lineitem(), groups, &cfg)?
            }
            QuerySpec::Q1 => vectorized::v_q1(db_q.lineitem(), &cfg)?,
            QuerySpec::Q6 => vectorized::v_q6(db_q.lineitem(), &cfg)?,
        };
        let agree = compiled_out.output == oracle && vector_out.output == oracle;
        let summary = match &oracle {
            olaplab::query::QueryOutput::Scalar(s) => format!("{}", s.value),
            olaplab::query::QueryOutput::Groups(g) => format!("{} groups", g.len()),
        };
        println!("{:<28} {:>22} {:>10}", query.label(), summary, agree);
        assert!(agree, "route disagreement on {}", query.label());
    }
    println!("\nall three routes agree exactly on every query");
    Ok(())
}
