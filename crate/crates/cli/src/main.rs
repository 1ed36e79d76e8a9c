use std::process::ExitCode;

use clap::{Parser, Subcommand};
use photonlab_cli::*;

/// Photon-limited imaging: simulate, train, reconstruct and compare
#[derive(Parser, Debug)]
#[command(name = "photonlab", version, about)]
struct Cli {
    /// Worker threads for per-image work (results do not depend on it)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    Synth(SynthArgs),
    DatasetPrepare(PrepareArgs),
    Simulate(SimulateArgs),
    Train(TrainArgs),
    Infer(InferArgs),
    Tv(TvArgs),
    Eval(EvalArgs),
    Profile(ProfileArgs),
    Bench(BenchArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::DatasetPrepare(a) => cmd_dataset_prepare(&a).map(drop),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Train(a) => cmd_train(&a).map(drop),
        Command::Infer(a) => cmd_infer(&a).map(drop),
        Command::Tv(a) => cmd_tv(&a).map(drop),
        Command::Eval(a) => cmd_eval(&a).map(drop),
        Command::Profile(a) => cmd_profile(&a).map(drop),
        Command::Bench(a) => cmd_bench(&a).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
