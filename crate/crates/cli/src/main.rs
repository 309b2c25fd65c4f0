use std::path::PathBuf;
use std::process::ExitCode;

use agent_forest::Method;
use agent_forest_cli::analyze::AnalyzeOptions;
use agent_forest_cli::{cmd_analyze, cmd_compare, cmd_run, CliError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "agent-forest",
    version,
    about = "Long-context QA with clustered agent chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method over a dataset and write a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set backend.timeout_secs=30`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Skip malformed dataset lines instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Compare mean F1 of two or more run directories on their shared records.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
    },
    /// Audit traces and report query similarity statistics.
    Analyze {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown method `{s}`"))
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            mut set,
            method,
            k,
            seeds,
            output,
            lenient,
        } => {
            if let Some(m) = method {
                set.push(format!("method={}", toml_string(m.as_str())));
            }
            if let Some(k) = k {
                set.push(format!("k={k}"));
            }
            if let Some(seeds) = seeds {
                let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
                set.push(format!("seeds=[{}]", list.join(",")));
            }
            if let Some(dir) = output {
                let abs = std::path::absolute(&dir).unwrap_or(dir);
                set.push(format!(
                    "output_dir={}",
                    toml_string(&abs.to_string_lossy())
                ));
            }
            if lenient {
                set.push("lenient=true".into());
            }
            let outcome = cmd_run(&config, &set)?;
            print!("{}", outcome.table);
            println!("wrote {}", outcome.dir.display());
        }
        Command::Compare { dirs } => print!("{}", cmd_compare(&dirs)?.render()),
        Command::Analyze { dirs, config, out } => {
            let report = cmd_analyze(
                &dirs,
                &AnalyzeOptions {
                    config,
                    out_dir: out,
                },
            )?;
            println!(
                "{} traces, {} failed runs, {} forest paths ({} below best single chunk at the final step)",
                report.traces, report.failed_runs, report.forest_paths, report.final_step_shortfalls
            );
            print!("{}", report.stats_tsv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
