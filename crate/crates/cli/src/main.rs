use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slpn_cli::commands::{cmd_eval, cmd_prepare, cmd_report_compare, cmd_synth, cmd_train, render_report};
use slpn_cli::config::RunConfig;
use slpn_cli::pipeline::Variant;
use slpn_core::evaluation::Aggregation;
use slpn_core::Result;

/// Uncertainty-aware sequence labeling: split a corpus, train evidential
/// taggers, evaluate OOD and wrong-span detection.
#[derive(Debug, Parser)]
#[command(name = "slpn", version)]
struct Cli {
    /// TOML run configuration; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Split seed for `prepare`, training seed for `train` and `eval`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// token_pn, slpn, slpn-no-softplus or dropout-baseline.
    #[arg(long, global = true, default_value = "slpn")]
    variant: Variant,
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Number of rarest labels left out as OOD.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Token-to-entity aggregation: mean or max.
    #[arg(long, global = true)]
    aggregation: Option<Aggregation>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split the corpus and write the manifest and summary.
    Prepare,
    /// Train one variant on the prepared split.
    Train,
    /// Predict the test sentences and write the dump and report.
    Eval {
        /// Checkpoint to evaluate instead of the run's own.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Average several reports per variant and compare them.
    ReportCompare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Write the configured synthetic corpus in CoNLL form.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.workdir {
        config.paths.workdir = dir.clone();
    }
    if let Some(m) = cli.m {
        config.split.m = m;
    }
    if let Some(a) = cli.aggregation {
        config.evaluation.aggregation = a;
    }
    if let Some(seed) = cli.seed {
        match cli.command {
            Some(Command::Prepare) => config.split.seed = seed,
            _ => config.training.seed = seed,
        }
    }
    config.training = cli.variant.apply(&config.training);
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    let config = effective_config(cli)?;
    if cli.show_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(slpn_core::Error::InvalidInput("no command given; see --help".into()));
    };
    match command {
        Command::Prepare => {
            let s = cmd_prepare(&config)?;
            println!("corpus {}", s.fingerprint);
            println!("left out {}", s.left_out_labels.join(", "));
            println!(
                "train {} / val {} / test_in {} / test_out {}",
                s.train, s.val, s.test_in, s.test_out
            );
        }
        Command::Train => {
            let run = cmd_train(&config, cli.variant)?;
            println!("wrote {}", run.display());
        }
        Command::Eval { checkpoint } => {
            let report = cmd_eval(&config, cli.variant, checkpoint.as_deref())?;
            print!("{}", render_report(&report));
        }
        Command::ReportCompare { reports } => print!("{}", cmd_report_compare(reports)?),
        Command::Synth { out } => {
            let n = cmd_synth(&config, out)?;
            println!("wrote {n} sentences to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
