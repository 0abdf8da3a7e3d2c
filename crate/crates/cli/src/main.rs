use clap::{Parser, Subcommand};
use tscm_cli::commands::{self, Global};
use tscm_cli::UsageError;

#[derive(Parser)]
#[command(
    name = "tscm",
    about = "Spatio-temporal convolution toolkit: synthetic video recognition \
             with temporal channel shifts, multi-level CTC, and cost analysis",
    version
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic glyph-video dataset to disk
    Generate(commands::GenerateArgs),
    /// Train a network on a generated dataset
    Train(commands::TrainArgs),
    /// Score a checkpoint on a dataset split
    Eval(commands::EvalArgs),
    /// Analytical parameter, memory, and FLOP breakdown of one network
    Analyze(commands::AnalyzeArgs),
    /// Side-by-side cost table across the four temporal variants
    Compare(commands::CompareArgs),
    /// Wall-clock forward-pass timings across the four temporal variants
    Bench(commands::BenchArgs),
    /// Train one architecture axis over several values
    Ablate(commands::AblateArgs),
    /// Verify the shifted-stack equivalence of temporal convolution
    Equivcheck(commands::EquivcheckArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => commands::cmd_generate(&cli.global, args),
        Command::Train(args) => commands::cmd_train(&cli.global, args),
        Command::Eval(args) => commands::cmd_eval(&cli.global, args),
        Command::Analyze(args) => commands::cmd_analyze(&cli.global, args),
        Command::Compare(args) => commands::cmd_compare(&cli.global, args),
        Command::Bench(args) => commands::cmd_bench(&cli.global, args),
        Command::Ablate(args) => commands::cmd_ablate(&cli.global, args),
        Command::Equivcheck(args) => commands::cmd_equivcheck(&cli.global, args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        let code = if err.downcast_ref::<UsageError>().is_some() { 1 } else { 2 };
        std::process::exit(code);
    }
}
