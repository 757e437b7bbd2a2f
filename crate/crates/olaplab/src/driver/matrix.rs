//! Run-matrix configuration: a JSON file enumerating RunSpec
//! cross-products, expanded deterministically.
//!
//! Two forms, combinable:
//!
//! ```json
//! {
//!   "runs": [ { "engine": "compiled", "query": "q6", "sf": 0.1, "seed": 42 } ],
//!   "defaults": { "engine": "compiled", "query": "selection",
//!                  "sf": 0.1, "seed": 42, "selectivity": 0.5 },
//!   "axes": { "engine": ["compiled", "vectorized"],
//!              "selectivity": [0.1, 0.5, 0.9],
//!              "mode": ["branched", "predicated"] }
//! }
//! ```
//!
//! `runs` entries execute as-is (after filling unset fields from built-in
//! defaults); `defaults` + `axes` expand to their cross-product in the
//! fixed axis order engine, degree, selectivity, mode, join_size, groups,
//! threads, vector_size, simd, prefetchers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Engine, RunSpec};
use crate::error::{Error, Result};
use crate::profiler::PrefetcherConfig;
use crate::query::{JoinSize, QuerySpec, SelectionMode};

/// Flat, everything-optional form of a run spec as written in config
/// files and on the CLI.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInput {
    pub engine: Option<String>,
    pub query: Option<String>,
    pub degree: Option<u8>,
    pub selectivity: Option<f64>,
    pub mode: Option<String>,
    pub join_size: Option<String>,
    pub groups: Option<u64>,
    pub sf: Option<f64>,
    pub seed: Option<u64>,
    pub exact_selectivity: Option<bool>,
    pub threads: Option<usize>,
    pub vector_size: Option<usize>,
    pub simd: Option<bool>,
    pub repeats: Option<usize>,
    pub warmup_secs: Option<f64>,
    pub measure_secs: Option<f64>,
    pub prefetchers: Option<String>,
    pub i_have_privilege: Option<bool>,
    pub pin_cores: Option<bool>,
    pub verify: Option<bool>,
    pub events: Option<String>,
    pub morsel_rows: Option<usize>,
    pub db: Option<String>,
}

impl RunInput {
    fn overlay(&self, base: &RunInput) -> RunInput {
        macro_rules! pick {
            ($field:ident) => {
                self.$field.clone().or_else(|| base.$field.clone())
            };
        }
        RunInput {
            engine: pick!(engine),
            query: pick!(query),
            degree: pick!(degree),
            selectivity: pick!(selectivity),
            mode: pick!(mode),
            join_size: pick!(join_size),
            groups: pick!(groups),
            sf: pick!(sf),
            seed: pick!(seed),
            exact_selectivity: pick!(exact_selectivity),
            threads: pick!(threads),
            vector_size: pick!(vector_size),
            simd: pick!(simd),
            repeats: pick!(repeats),
            warmup_secs: pick!(warmup_secs),
            measure_secs: pick!(measure_secs),
            prefetchers: pick!(prefetchers),
            i_have_privilege: pick!(i_have_privilege),
            pin_cores: pick!(pin_cores),
            verify: pick!(verify),
            events: pick!(events),
            morsel_rows: pick!(morsel_rows),
            db: pick!(db),
        }
    }

    /// Assembles the query from the flat fields.
    pub fn assemble_query(&self) -> Result<QuerySpec> {
        let name = self
            .query
            .as_deref()
            .ok_or_else(|| Error::spec("missing query"))?;
        let spec = match name {
            "projection" => QuerySpec::Projection {
                degree: self
                    .degree
                    .ok_or_else(|| Error::spec("projection needs --degree 1..4"))?,
            },
            "selection" => QuerySpec::Selection {
                p: self
                    .selectivity
                    .ok_or_else(|| Error::spec("selection needs --selectivity"))?,
                mode: match &self.mode {
                    Some(m) => SelectionMode::parse(m)?,
                    None => SelectionMode::Branched,
                },
            },
            "join" => QuerySpec::Join {
                size: JoinSize::parse(
                    self.join_size
                        .as_deref()
                        .ok_or_else(|| Error::spec("join needs --join-size"))?,
                )?,
            },
            "groupby" => QuerySpec::GroupBy {
                groups: self
                    .groups
                    .ok_or_else(|| Error::spec("groupby needs --groups"))?,
            },
            "q1" => QuerySpec::Q1,
            "q6" => QuerySpec::Q6,
            other => return Err(Error::spec(format!("unknown query `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Resolves into a full RunSpec, filling unset fields with defaults.
    pub fn resolve(&self) -> Result<RunSpec> {
        let engine = Engine::parse(
            self.engine
                .as_deref()
                .ok_or_else(|| Error::spec("missing engine"))?,
        )?;
        let query = self.assemble_query()?;
        let sf = self.sf.ok_or_else(|| Error::spec("missing sf"))?;
        let seed = self.seed.ok_or_else(|| Error::spec("missing seed"))?;
        let mut spec = RunSpec::new(engine, query, sf, seed);
        if let Some(v) = self.exact_selectivity {
            spec.exact_selectivity = v;
        }
        if let Some(v) = self.threads {
            spec.threads = v;
        }
        if let Some(v) = self.vector_size {
            spec.vector_size = v;
        }
        if let Some(v) = self.simd {
            spec.simd = v;
        }
        if let Some(v) = self.repeats {
            spec.repeats = v;
        }
        if let Some(v) = self.warmup_secs {
            spec.warmup_secs = v;
        }
        if let Some(v) = self.measure_secs {
            spec.measure_secs = v;
        }
        if let Some(p) = &self.prefetchers {
            spec.prefetchers = Some(PrefetcherConfig::parse(p)?);
        }
        if let Some(v) = self.i_have_privilege {
            spec.privilege_acknowledged = v;
        }
        if let Some(v) = self.pin_cores {
            spec.pin_cores = v;
        }
        if let Some(v) = self.verify {
            spec.verify = v;
        }
        if let Some(e) = &self.events {
            spec.events_file = Some(e.into());
        }
        if let Some(v) = self.morsel_rows {
            spec.morsel_rows = v;
        }
        if let Some(d) = &self.db {
            spec.db_dir = Some(d.into());
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub engine: Option<Vec<String>>,
    pub degree: Option<Vec<u8>>,
    pub selectivity: Option<Vec<f64>>,
    pub mode: Option<Vec<String>>,
    pub join_size: Option<Vec<String>>,
    pub groups: Option<Vec<u64>>,
    pub threads: Option<Vec<usize>>,
    pub vector_size: Option<Vec<usize>>,
    pub simd: Option<Vec<bool>>,
    pub prefetchers: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    #[serde(default)]
    pub runs: Vec<RunInput>,
    #[serde(default)]
    pub defaults: Option<RunInput>,
    #[serde(default)]
    pub axes: Option<Axes>,
}

impl MatrixConfig {
    pub fn parse(text: &str) -> Result<MatrixConfig> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<MatrixConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        MatrixConfig::parse(&text)
    }

    /// Expands into concrete RunSpecs in deterministic order: explicit
    /// `runs` first, then the `defaults`x`axes` cross-product.
    pub fn expand(&self) -> Result<Vec<RunSpec>> {
        let mut specs = Vec::new();
        for (i, input) in self.runs.iter().enumerate() {
            specs.push(
                input
                    .resolve()
                    .map_err(|e| Error::Config(format!("runs[{i}]: {e}")))?,
            );
        }
        if let Some(defaults) = &self.defaults {
            let axes = self.axes.clone().unwrap_or_default();
            fn axis<T: Clone>(values: &Option<Vec<T>>) -> Vec<Option<T>> {
                match values {
                    Some(vs) if !vs.is_empty() => vs.iter().cloned().map(Some).collect(),
                    _ => vec![None],
                }
            }
            for engine in axis(&axes.engine) {
                for degree in axis(&axes.degree) {
                    for selectivity in axis(&axes.selectivity) {
                        for mode in axis(&axes.mode) {
                            for join_size in axis(&axes.join_size) {
                                for groups in axis(&axes.groups) {
                                    for threads in axis(&axes.threads) {
                                        for vector_size in axis(&axes.vector_size) {
                                            for simd in axis(&axes.simd) {
                                                for prefetchers in axis(&axes.prefetchers) {
                                                    let over = RunInput {
                                                        engine: engine.clone(),
                                                        degree,
                                                        selectivity,
                                                        mode: mode.clone(),
                                                        join_size: join_size.clone(),
                                                        groups,
                                                        threads,
                                                        vector_size,
                                                        simd,
                                                        prefetchers: prefetchers.clone(),
                                                        ..Default::default()
                                                    };
                                                    specs.push(
                                                        over.overlay(defaults).resolve().map_err(
                                                            |e| {
                                                                Error::Config(format!(
                                                                    "axes expansion: {e}"
                                                                ))
                                                            },
                                                        )?,
                                                    );
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(specs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_matrix_expands_to_nothing() {
        let cfg = MatrixConfig::parse("{}").unwrap();
        assert!(cfg.expand().unwrap().is_empty());
    }

    #[test]
    fn malformed_config_reports_location() {
        let err = MatrixConfig::parse("{ \"runs\": [ { \"bogus\": 1 } ] }").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    /// The selection replication matrix: 3 selectivities x 2 engines x
    /// 2 modes = 12 records.
    #[test]
    fn selection_replication_matrix_has_12_records() {
        let cfg = MatrixConfig::parse(
            r#"{
                "defaults": {"query": "selection", "sf": 0.1, "seed": 42},
                "axes": {
                    "engine": ["compiled", "vectorized"],
                    "selectivity": [0.1, 0.5, 0.9],
                    "mode": ["branched", "predicated"]
                }
            }"#,
        )
        .unwrap();
        let specs = cfg.expand().unwrap();
        assert_eq!(specs.len(), 12);
        // Deterministic ordering: engine is the outermost axis.
        assert_eq!(specs[0].engine, Engine::Compiled);
        assert_eq!(specs[6].engine, Engine::Vectorized);
    }

    #[test]
    fn explicit_runs_resolve() {
        let cfg = MatrixConfig::parse(
            r#"{ "runs": [ {"engine":"compiled","query":"q6","sf":0.01,"seed":7} ] }"#,
        )
        .unwrap();
        let specs = cfg.expand().unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].query, QuerySpec::Q6);
    }

    #[test]
    fn missing_required_fields_are_config_errors() {
        let cfg =
            MatrixConfig::parse(r#"{ "runs": [ {"engine":"compiled","query":"q6"} ] }"#).unwrap();
        let err = cfg.expand().unwrap_err();
        assert!(err.to_string().contains("runs[0]"), "{err}");
    }
}
