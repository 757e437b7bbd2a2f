//! Thin CLI over the library: `bench gen|run|matrix|calibrate|oracle`.
//!
//! Exit codes: 0 ok, 2 spec/config error, 3 verification mismatch,
//! 4 capability degraded (counters or MSRs unavailable for a run that
//! asked for them).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use olaplab::datagen::{self, GenSpec};
use olaplab::driver::{self, matrix::MatrixConfig, matrix::RunInput, report};
use olaplab::error::Error;
use olaplab::oracle;
use olaplab::profiler;
use olaplab::query::QuerySpec;

#[derive(Parser)]
#[command(name = "bench", about = "Columnar OLAP micro-benchmark lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a database to disk (one binary file per column + manifest).
    Gen {
        #[arg(long)]
        sf: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        exact_selectivity: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute one benchmark run.
    Run(RunArgs),
    /// Execute a cross-product of runs from a JSON config.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate machine bandwidth ceilings and cache latencies.
    Calibrate {
        /// Worker threads for the per-socket figures (default: all cores).
        #[arg(long)]
        cores: Option<usize>,
        /// Write the machine profile JSON here (also printed).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a query with the reference interpreter, print JSON.
    Oracle {
        /// Query spec, e.g. `projection:degree=4`, `selection:p=0.5`,
        /// `join:size=large`, `groupby:groups=1000`, `q1`, `q6`.
        #[arg(long)]
        query: String,
        #[arg(long)]
        db: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    engine: String,
    /// Query name: projection|selection|join|groupby|q1|q6.
    #[arg(long)]
    query: String,
    #[arg(long)]
    degree: Option<u8>,
    #[arg(long)]
    selectivity: Option<f64>,
    /// branched|predicated (selection only).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    join_size: Option<String>,
    #[arg(long)]
    groups: Option<u64>,
    #[arg(long)]
    sf: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    exact_selectivity: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    vector_size: Option<usize>,
    /// on|off.
    #[arg(long)]
    simd: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    warmup_secs: Option<f64>,
    #[arg(long)]
    measure_secs: Option<f64>,
    /// Event-mapping file for the counter harness.
    #[arg(long)]
    events: Option<PathBuf>,
    /// all-off|l1-nl|l1-str|l2-nl|l2-str|all-on.
    #[arg(long)]
    prefetchers: Option<String>,
    /// Acknowledge that prefetcher control writes MSRs as root.
    #[arg(long)]
    i_have_privilege: bool,
    #[arg(long)]
    no_pin: bool,
    /// Check the result against the reference interpreter.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    morsel_rows: Option<usize>,
    /// Reuse a database directory written by `gen`.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Write results.json/results.csv (+ plot data) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn to_input(&self) -> Result<RunInput, Error> {
        let simd = match self.simd.as_deref() {
            None => None,
            Some("on") => Some(true),
            Some("off") => Some(false),
            Some(other) => {
                return Err(Error::spec(format!("--simd takes on|off, got `{other}`")))
            }
        };
        Ok(RunInput {
            engine: Some(self.engine.clone()),
            query: Some(self.query.clone()),
            degree: self.degree,
            selectivity: self.selectivity,
            mode: self.mode.clone(),
            join_size: self.join_size.clone(),
            groups: self.groups,
            sf: self.sf,
            seed: self.seed,
            exact_selectivity: Some(self.exact_selectivity),
            threads: self.threads,
            vector_size: self.vector_size,
            simd,
            repeats: self.repeats,
            warmup_secs: self.warmup_secs,
            measure_secs: self.measure_secs,
            prefetchers: self.prefetchers.clone(),
            i_have_privilege: Some(self.i_have_privilege),
            pin_cores: Some(!self.no_pin),
            verify: Some(self.verify),
            events: self.events.as_ref().map(|p| p.display().to_string()),
            morsel_rows: self.morsel_rows,
            db: self.db.as_ref().map(|p| p.display().to_string()),
        })
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen {
            sf,
            seed,
            exact_selectivity,
            out,
        } => {
            let mut spec = GenSpec::new(sf, seed);
            spec.exact_selectivity = exact_selectivity;
            let db = match datagen::generate_database(&spec) {
                Ok(db) => db,
                Err(e) => return fail(&e),
            };
            if let Err(e) = datagen::io::write_database(&db, &out) {
                return fail(&e);
            }
            println!(
                "wrote {} tables ({} bytes of columns) to {}",
                db.tables().len(),
                db.resident_bytes(),
                out.display()
            );
            ExitCode::SUCCESS
        }
        Command::Run(args) => {
            let spec = match args.to_input().and_then(|i| i.resolve()) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let result = match driver::run(&spec) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let degraded = result.is_degraded();
            for note in &result.degraded {
                eprintln!("capability: {note}");
            }
            let record = report::RunRecord::Ok(Box::new(result));
            match &args.out {
                Some(dir) => {
                    if let Err(e) = report::write_all(std::slice::from_ref(&record), dir) {
                        return fail(&e);
                    }
                    println!("results written to {}", dir.display());
                }
                None => match report::to_json(std::slice::from_ref(&record)) {
                    Ok(json) => println!("{json}"),
                    Err(e) => return fail(&e),
                },
            }
            if degraded {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Matrix { config, out } => {
            let specs = match MatrixConfig::load(&config).and_then(|c| c.expand()) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let mut records = Vec::with_capacity(specs.len());
            let mut verification_failed = false;
            let mut degraded = false;
            for (i, spec) in specs.iter().enumerate() {
                eprintln!(
                    "[{}/{}] {} {} threads={} simd={}",
                    i + 1,
                    specs.len(),
                    spec.engine.as_str(),
                    spec.query.label(),
                    spec.threads,
                    spec.simd
                );
                match driver::run(spec) {
                    Ok(r) => {
                        degraded |= r.is_degraded();
                        records.push(report::RunRecord::Ok(Box::new(r)));
                    }
                    Err(e) => {
                        verification_failed |= matches!(e, Error::Verification { .. });
                        records.push(report::RunRecord::Error {
                            spec: spec.clone(),
                            error: e.to_string(),
                        });
                    }
                }
            }
            if let Err(e) = report::write_all(&records, &out) {
                return fail(&e);
            }
            println!("{} records written to {}", records.len(), out.display());
            if verification_failed {
                ExitCode::from(3)
            } else if degraded {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Calibrate { cores, out } => {
            let cores = cores.unwrap_or_else(driver::physical_cores);
            let profile = match profiler::calibrate_machine(cores) {
                Ok(p) => p,
                Err(e) => return fail(&e),
            };
            let json = serde_json::to_string_pretty(&profile).expect("profile serializes");
            println!("{json}");
            if let Some(path) = out {
                if let Err(e) = std::fs::write(&path, &json) {
                    return fail(&e.into());
                }
            }
            ExitCode::SUCCESS
        }
        Command::Oracle { query, db } => {
            let spec = match QuerySpec::parse(&query) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let database = match datagen::io::load_database(&db) {
                Ok(d) => d,
                Err(e) => return fail(&e),
            };
            // Exact-mode databases carry base date columns; rebuild the
            // per-selectivity marking exactly as the engines would.
            let prepared = match spec {
                QuerySpec::Selection { p, .. } => match database.with_selection(p) {
                    Ok((d, _)) => d,
                    Err(e) => return fail(&e),
                },
                _ => database,
            };
            match oracle::ref_eval(&spec, &prepared) {
                Ok(output) => {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&output).expect("output serializes")
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
