use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tetra_sds::config::{ConfigError, ScenarioConfig, Sweep};
use tetra_sds::sweep::{emit_results, run_scenario, SimError};

/// Simulate SDS transfer over a TETRA cell's main control channel.
#[derive(Debug, Parser)]
#[command(name = "tetra-sds-sim", version)]
struct Cli {
    /// Scenario file of `key = value` lines. Defaults apply to missing keys.
    #[arg(long)]
    scenario: Option<PathBuf>,

    /// Sweep one parameter, e.g. `n_c=100,200,300`.
    #[arg(long)]
    sweep: Option<String>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// CSV destination. The resolved config goes next to it as `<name>.resolved.conf`.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,

    /// Replications per point.
    #[arg(long)]
    replications: Option<u32>,

    /// Override any config key, e.g. `--set traffic.lambda_o=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(cli: &Cli) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = match &cli.scenario {
        Some(path) => ScenarioConfig::from_file(path)?,
        None => ScenarioConfig::default(),
    };
    let mut errors = Vec::new();
    for o in &cli.overrides {
        match o.split_once('=') {
            Some((k, v)) => {
                if let Err(e) = cfg.set(k.trim(), v.trim()) {
                    errors.push(e);
                }
            }
            None => errors.push(tetra_sds::config::FieldError {
                key: o.clone(),
                message: "expected KEY=VALUE".into(),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(n) = cli.replications {
        cfg.replications = n;
    }
    if let Some(spec) = &cli.sweep {
        cfg.sweep = Some(Sweep::parse(spec)?);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), SimError> {
    let cfg = resolve(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let table = run_scenario(&cfg)?;
    for row in &table.rows {
        let a = &row.aggregate;
        let show = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let label = if table.axis == "base" {
            row.value.clone()
        } else {
            format!("{}={}", table.axis, row.value)
        };
        println!(
            "{label}: delay {} s, failure {}, paoi {} s",
            show(a.delay.mean),
            show(a.failure_probability.mean),
            show(a.paoi.mean)
        );
    }
    let (csv, sidecar) = emit_results(&table, &cli.out)?;
    eprintln!("wrote {} and {}", csv.display(), sidecar.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SimError::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
