//! `kktx` — scenario runner for the KK transceiver simulation toolkit.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime/convergence error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kktx_core::experiment::{self, LinkScenario};

#[derive(Parser)]
#[command(name = "kktx", version, about = "Kramers-Kronig transceiver link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario TOML file, or a manifest JSON from a previous run.
    config: PathBuf,
    /// Output directory for CSV, theory curve and manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the scenario base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of symbols per frame.
    #[arg(long)]
    symbols: Option<usize>,
    /// Scenario overrides as dotted.path=value, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and emit results.
    Run(#[command(flatten)] RunArgs),
    /// Run a scenario with overrides (alias of `run`, overrides required).
    Sweep(#[command(flatten)] RunArgs),
    /// Parse and validate a scenario, printing its derived parameters.
    Validate { config: PathBuf },
    /// Run the built-in numerical property checks.
    Selftest,
}

fn parse_overrides(args: &RunArgs) -> anyhow::Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for item in &args.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("override '{item}' must be KEY=VALUE"))?;
        pairs.push((k.to_string(), v.to_string()));
    }
    if let Some(seed) = args.seed {
        pairs.push(("base_seed".into(), seed.to_string()));
    }
    if let Some(symbols) = args.symbols {
        pairs.push(("n_symbols".into(), symbols.to_string()));
    }
    Ok(pairs)
}

fn load_scenario(args: &RunArgs) -> anyhow::Result<LinkScenario> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", args.config.display()))?;
    let overrides = parse_overrides(args)?;
    let toml_text = if args.config.extension().is_some_and(|e| e == "json") {
        // manifest replay: pull the embedded scenario back out
        let manifest: serde_json::Value = serde_json::from_str(&text)?;
        let scenario = manifest
            .get("scenario")
            .ok_or_else(|| anyhow::anyhow!("manifest has no scenario section"))?;
        let scenario: LinkScenario = serde_json::from_value(scenario.clone())?;
        toml::to_string(&scenario)?
    } else {
        text
    };
    Ok(LinkScenario::from_toml_str_with_overrides(
        &toml_text, &overrides,
    )?)
}

fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    if let Some(core_err) = err.downcast_ref::<kktx_core::Error>() {
        if core_err.is_config_error() {
            return ExitCode::from(1);
        }
        return ExitCode::from(2);
    }
    ExitCode::from(1)
}

fn do_run(args: RunArgs) -> anyhow::Result<()> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let scenario = load_scenario(&args)?;
    let report = scenario.validate()?;
    for line in &report.lines {
        eprintln!("[{}] {line}", scenario.name);
    }
    let result = experiment::run_scenario(&scenario)?;
    let paths = experiment::emit_results(&result, &args.out)?;
    eprintln!(
        "[{}] {} rows in {:.1} s -> {}",
        scenario.name,
        result.rows.len(),
        result.wall_time_s,
        paths.csv.display()
    );
    if let Some(theory) = paths.theory {
        eprintln!("[{}] theory curve -> {}", scenario.name, theory.display());
    }
    eprintln!("[{}] manifest -> {}", scenario.name, paths.manifest.display());
    Ok(())
}

fn do_validate(config: PathBuf) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&config)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", config.display()))?;
    let scenario = LinkScenario::from_toml_str(&text)?;
    let report = scenario.validate()?;
    println!("scenario '{}' is valid", scenario.name);
    for line in report.lines {
        println!("  {line}");
    }
    Ok(())
}

fn do_selftest() -> anyhow::Result<()> {
    let mut failures = 0;
    for (name, result) in kktx_core::selftest::run_all() {
        match result {
            Ok(()) => println!("[PASS] {name}"),
            Err(msg) => {
                failures += 1;
                println!("[FAIL] {name}: {msg}");
            }
        }
    }
    if failures > 0 {
        anyhow::bail!("{failures} selftest check(s) failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => do_run(args),
        Command::Sweep(args) => do_run(args),
        Command::Validate { config } => do_validate(config),
        Command::Selftest => match do_selftest() {
            Ok(()) => Ok(()),
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    }
}
