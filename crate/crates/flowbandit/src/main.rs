use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowbandit::config::Config;
use flowbandit::{output, runner, ConfigError, Error};

#[derive(Parser)]
#[command(name = "flowbandit", version, about = "Simulate bandit agents on multi-page linear flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write regret.csv and summary.csv.
    Run(RunArgs),
    /// Run every point of the [sweep] section and write plot_<axis>.csv.
    Sweep(RunArgs),
    /// Parse and validate a config without running it.
    Validate(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment file; omitted means all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key after parsing, e.g. `--set flow.alpha2=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; overrides the file, 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

fn load(args: &ConfigArgs) -> Result<Config, ConfigError> {
    match &args.config {
        Some(path) => Config::load(path, &args.overrides),
        None => Config::parse("", &args.overrides),
    }
}

fn run(out: &Path, cfg: &Config, workers: usize) -> Result<(), Error> {
    let exp = runner::run_experiment(&cfg.experiment, workers)?;
    output::write_experiment(out, &exp, cfg.output)?;
    for kind in &exp.series.agents {
        let (m, s) = exp.series.final_regret(*kind).expect("agent was run");
        println!("{:<20} final cumulative regret {m:.4} ± {s:.4}", kind.name());
    }
    Ok(())
}

fn sweep(out: &Path, cfg: &Config, workers: usize) -> Result<(), Error> {
    let Some(sweep) = &cfg.sweep else {
        return Err(
            ConfigError::Invalid { key: "sweep".into(), reason: "the config has no [sweep] section".into() }.into()
        );
    };
    let result = runner::run_sweep(sweep, workers)?;
    output::write_sweep(out, &result, cfg.output)?;
    println!("wrote {}", out.join(format!("plot_{}.csv", sweep.axis)).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(args) => load(args).map_err(Error::from).map(|cfg| {
            let e = &cfg.experiment;
            println!(
                "ok: {} pages, {} layouts, {} runs of {} batches",
                e.shape.pages(),
                e.shape.combinations(),
                e.runs,
                e.batches()
            );
        }),
        Command::Run(args) | Command::Sweep(args) => load(&args.config).map_err(Error::from).and_then(|cfg| {
            let workers = args.workers.unwrap_or(cfg.workers);
            if matches!(cli.command, Command::Run(_)) {
                run(&args.out, &cfg, workers)
            } else {
                sweep(&args.out, &cfg, workers)
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
