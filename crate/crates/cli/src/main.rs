use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use manet_sim::experiment::{
    run_experiment, runs_csv, summary_csv, summary_stats, trust_events_csv, trust_events_file_name,
};
use manet_sim::metrics::MetricsReport;
use manet_sim::scenario::{
    parse_scenario, ModeSelection, ScenarioConfig, ScenarioError, SecurityMode,
};
use manet_sim::{run_once, RunOutput};

#[derive(Parser)]
#[command(
    name = "manet-sim",
    about = "Deterministic MANET routing simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML)
    scenario: PathBuf,
    /// Replace the scenario's seed list with 1..=N
    #[arg(long)]
    seeds: Option<u64>,
    /// Override a scenario value by dotted path, e.g. trust.alpha=0.6
    #[arg(long = "override", value_name = "KEY=VALUE", value_parser = parse_kv)]
    overrides: Vec<(String, String)>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario and write runs.csv, summary.csv, and trust logs
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run both security modes and print an A/B table (mean +/- sd)
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Dump the full event and trust log of one run
    Trace {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        seed: u64,
    },
    /// Parse and validate the scenario only
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

fn parse_kv(raw: &str) -> Result<(String, String), String> {
    match raw.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected KEY=VALUE, got '{raw}'")),
    }
}

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = parse_scenario(&args.scenario, &args.overrides)?;
    if let Some(n) = args.seeds {
        if n == 0 {
            return Err(ScenarioError::Validation(
                "--seeds must be at least 1".into(),
            ));
        }
        cfg.seeds = (1..=n).collect();
    }
    Ok(cfg)
}

fn cmd_run(args: &ScenarioArgs, out_dir: &Path) -> anyhow::Result<()> {
    let cfg = load(args)?;
    let result = run_experiment(&cfg);
    std::fs::create_dir_all(out_dir.join("trust_events"))
        .with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("runs.csv"), runs_csv(&result))?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(&result))?;
    for (row, output) in result.rows.iter().zip(&result.outputs) {
        let name = trust_events_file_name(row.mode, row.seed);
        std::fs::write(
            out_dir.join("trust_events").join(name),
            trust_events_csv(&output.trust_log),
        )?;
    }
    println!(
        "wrote {} runs ({} modes x {} seeds) to {}",
        result.rows.len(),
        cfg.security_mode.modes().len(),
        cfg.seeds.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_compare(args: &ScenarioArgs) -> anyhow::Result<()> {
    let mut cfg = load(args)?;
    cfg.security_mode = ModeSelection::Both;
    let result = run_experiment(&cfg);
    let stats = summary_stats(&result);
    println!(
        "{} on {} seeds ({})",
        cfg.protocol.name(),
        cfg.seeds.len(),
        args.scenario.display()
    );
    println!("{:<22} {:>24} {:>24}", "metric", "Baseline", "TripleFactor");
    for (i, field) in MetricsReport::CSV_FIELDS.iter().enumerate() {
        let b = stats[&(SecurityMode::Baseline, i)];
        let t = stats[&(SecurityMode::TripleFactor, i)];
        println!(
            "{:<22} {:>24} {:>24}",
            field,
            format!("{:.4} +/- {:.4}", b.mean, b.sd),
            format!("{:.4} +/- {:.4}", t.mean, t.sd)
        );
    }
    Ok(())
}

fn cmd_trace(args: &ScenarioArgs, seed: u64) -> anyhow::Result<()> {
    let cfg = load(args)?;
    // With "Both" in the file, trace the security-enabled run.
    let mode = *cfg.security_mode.modes().last().expect("at least one mode");
    let output: RunOutput = run_once(&cfg, mode, seed, true);
    println!("# mode={} seed={seed}", mode.name());
    println!("## events");
    for line in output.trace.as_deref().unwrap_or_default() {
        println!("{line}");
    }
    println!("## trust");
    print!("{}", trust_events_csv(&output.trust_log));
    println!("## metrics");
    for (field, value) in MetricsReport::CSV_FIELDS
        .iter()
        .zip(output.report.field_values())
    {
        println!("{field} = {value}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, out } => cmd_run(scenario, out),
        Command::Compare { scenario } => cmd_compare(scenario),
        Command::Trace { scenario, seed } => cmd_trace(scenario, *seed),
        Command::Validate { scenario } => {
            load(scenario).map(|_| println!("OK")).map_err(Into::into)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let config_error = err.downcast_ref::<ScenarioError>().is_some_and(|e| {
                matches!(e, ScenarioError::Parse(_) | ScenarioError::Validation(_))
            });
            if config_error {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
