//! Command-line front end: configured grid scans, geodesic runs, DP atlases
//! and mean-field comparisons, emitting deterministic CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 config error, 2 numerical failure (partial
//! output under `<path>.partial`).

mod config;
mod output;
mod runner;

use clap::Parser;
use config::{Command, OutputFormat, RunConfig};
use runner::{Model, RunError};

#[derive(Parser, Debug)]
#[command(
    name = "qmanifold",
    version,
    about = "Ground-state manifold geometry scans for parametrized quantum Hamiltonians"
)]
struct Cli {
    /// Command to run; must match the config's command field, or `validate`.
    command: String,
    /// JSON run configuration.
    #[arg(long)]
    config: String,
    /// Override the configured worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the configured output path.
    #[arg(long)]
    output: Option<String>,
}

fn run(cli: &Cli) -> Result<(), (i32, String)> {
    let mut config = RunConfig::load(&cli.config).map_err(|e| (1, e.to_string()))?;
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if let Some(output) = &cli.output {
        config.output.path = output.clone();
    }
    config.validate().map_err(|e| (1, e.to_string()))?;

    if cli.command == "validate" {
        let effective = serde_json::to_string_pretty(&config).expect("config serializes");
        println!("OK");
        println!("{effective}");
        return Ok(());
    }

    if cli.command != config.command.as_kebab() {
        return Err((
            1,
            format!(
                "CLI command '{}' does not match config command '{}' (valid commands: {}, validate)",
                cli.command,
                config.command.as_kebab(),
                Command::all().join(", ")
            ),
        ));
    }

    let model = Model::from_config(&config.model).map_err(|e| (1, e.to_string()))?;

    let write_table = |table: output::CsvTable| -> Result<(), (i32, String)> {
        match config.output.format {
            OutputFormat::Csv => output::write_csv(&config.output.path, &config, &table)
                .map_err(|e| (2, format!("writing {}: {e}", config.output.path))),
            OutputFormat::Json => {
                let rows: Vec<serde_json::Value> = table
                    .rows
                    .iter()
                    .map(|row| {
                        let mut obj = serde_json::Map::new();
                        for (name, cell) in table.columns.iter().zip(row) {
                            let value = match cell {
                                output::Cell::Int(v) => serde_json::json!(v),
                                output::Cell::Float(v) => serde_json::json!(v),
                                output::Cell::Text(v) => serde_json::json!(v),
                                output::Cell::Blank => serde_json::Value::Null,
                            };
                            obj.insert((*name).into(), value);
                        }
                        serde_json::Value::Object(obj)
                    })
                    .collect();
                output::write_json(&config.output.path, &config, serde_json::json!(rows))
                    .map_err(|e| (2, format!("writing {}: {e}", config.output.path)))
            }
        }
    };

    let table_result = match config.command {
        Command::GapMap => Some(runner::gap_map(&model, &config)),
        Command::MetricMap => Some(runner::metric_map(&model, &config)),
        Command::RicciMap => Some(runner::ricci_map(&model, &config)),
        Command::ChristoffelMap => Some(runner::christoffel_map(&model, &config)),
        Command::HbCompare => Some(runner::hb_compare(&model, &config)),
        Command::DpFind => Some(runner::dp_find(&model, &config)),
        Command::DpZoom => Some(runner::dp_zoom(&model, &config)),
        Command::CircleLength => Some(runner::circle_length_cmd(&model, &config)),
        Command::FockHist => Some(runner::fock_hist(&model, &config)),
        Command::ApproxError => Some(runner::approx_error_cmd(&model, &config)),
        Command::GeodesicCauchy | Command::GeodesicDirichlet => None,
    };

    match table_result {
        Some(Ok(table)) => write_table(table),
        Some(Err(e)) => Err(classify(&config, e)),
        None => {
            let data = match config.command {
                Command::GeodesicCauchy => runner::geodesic_cauchy(&model, &config),
                Command::GeodesicDirichlet => runner::geodesic_dirichlet(&model, &config),
                _ => unreachable!(),
            };
            match data {
                Ok(value) => output::write_json(&config.output.path, &config, value)
                    .map_err(|e| (2, format!("writing {}: {e}", config.output.path))),
                Err(e) => Err(classify(&config, e)),
            }
        }
    }
}

/// Maps runner failures to exit codes, leaving a `.partial` marker for
/// numerical failures so downstream tooling never mistakes them for
/// complete artifacts.
fn classify(config: &RunConfig, err: RunError) -> (i32, String) {
    match err {
        RunError::Config(e) => (1, e.to_string()),
        RunError::Numerical(msg) => {
            let partial = format!("{}.partial", config.output.path);
            let _ = std::fs::write(&partial, format!("# qmanifold partial output\n# error: {msg}\n"));
            (2, format!("{msg} (partial marker at {partial})"))
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err((code, msg)) = run(&cli) {
        eprintln!("error: {msg}");
        std::process::exit(code);
    }
}
