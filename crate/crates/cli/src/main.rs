mod render;

use anyhow::{bail, Context, Result};
use aqp_core::config::Config;
use aqp_core::engine::{parse_schema, Store};
use aqp_core::montecarlo::Experiment;
use aqp_core::planner::{execute_planned, plan_query};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Approximate SQL aggregation with a priori error guarantees.
#[derive(Parser, Debug)]
#[command(name = "aqp", version)]
struct Cli {
    /// Directory holding ingested tables.
    #[arg(long, env = "AQP_STORE", default_value = ".aqp", global = true)]
    store: PathBuf,
    /// Planner configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set rate_cap=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Jsonl,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a CSV file (with header) into a table.
    Ingest {
        csv: PathBuf,
        #[arg(long)]
        table: String,
        /// Column types in header order, e.g. `id:int,name:str,price:float,day:date`.
        #[arg(long)]
        schema: String,
        #[arg(long, default_value_t = 100)]
        block_size: u64,
        /// Overwrite an existing table of the same name.
        #[arg(long)]
        replace: bool,
    },
    /// Run a query. With `ERROR WITHIN e% PROBABILITY p%` it is answered
    /// from samples when a cheaper plan meets the guarantee.
    Query {
        sql: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the plan before the result.
        #[arg(long)]
        explain: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the pilot and show candidate plans without running the final query.
    Explain {
        sql: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a verification experiment described by a config file.
    Verify {
        experiment: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// List tables with their sizes.
    Tables,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Ingest { csv, table, schema, block_size, replace } => {
            if *block_size == 0 {
                bail!("block size must be positive");
            }
            let schema = parse_schema(schema)?;
            let store = Store::open(&cli.store)?;
            let stats = store.ingest_csv(csv, table, &schema, *block_size, *replace)?;
            println!("ok, {} blocks, {} rows", stats.blocks, stats.rows);
        }
        Command::Query { sql, seed, explain, format } => {
            let store = Store::open(&cli.store)?;
            let seed = seed.unwrap_or(cfg.seed);
            let planned = plan_query(sql, &store, &cfg, seed)?;
            let out = execute_planned(&planned, &store, seed)?;
            match format {
                Format::Text => {
                    if *explain {
                        print!("{}", render::explain(&planned.report));
                        println!();
                    }
                    print!("{}", render::table(&out.result));
                    if let Some(f) = render::footer(&out.report) {
                        println!("{f}");
                    }
                }
                Format::Jsonl => {
                    for line in render::rows_jsonl(&out.result) {
                        println!("{line}");
                    }
                    if *explain || out.report.guarantee.is_some() {
                        println!("{}", serde_json::json!({ "plan": out.report }));
                    }
                }
            }
        }
        Command::Explain { sql, seed, format } => {
            let store = Store::open(&cli.store)?;
            let planned = plan_query(sql, &store, &cfg, seed.unwrap_or(cfg.seed))?;
            match format {
                Format::Text => print!("{}", render::explain(&planned.report)),
                Format::Jsonl => println!("{}", serde_json::json!({ "plan": planned.report })),
            }
        }
        Command::Verify { experiment, format } => {
            let text = std::fs::read_to_string(experiment).with_context(|| format!("reading {}", experiment.display()))?;
            let exp = Experiment::from_text(&text).with_context(|| format!("in {}", experiment.display()))?;
            let report = exp.run()?;
            match format {
                Format::Text => {
                    println!("{report}");
                    println!("result: {}", if report.passed() { "pass" } else { "FAIL" });
                }
                Format::Jsonl => println!("{}", report.to_jsonl()),
            }
            return Ok(report.passed());
        }
        Command::Tables => {
            let store = Store::open(&cli.store)?;
            for t in store.tables()? {
                let s = store.table_stats(&t)?;
                println!("{t}\t{} rows\t{} blocks\t{} bytes\tblock size {}", s.rows, s.blocks, s.bytes, s.block_size);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
