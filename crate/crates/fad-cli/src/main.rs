use clap::{Parser, Subcommand};
use fad_cli::commands::{bench, eval, gen_data, generate, train};

#[derive(Parser)]
#[command(
    name = "fad",
    version,
    about = "Real-time listener facial motion: data synthesis, training, generation, evaluation, benchmarking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dyad dataset.
    #[command(name = "gen-data")]
    GenData(gen_data::GenDataArgs),
    /// Train the diffusion model on a dataset's train split.
    Train(train::TrainArgs),
    /// Generate listener motion for every clip of a dataset.
    Generate(generate::GenerateArgs),
    /// Score predictions against ground truth and classical baselines.
    Eval(eval::EvalArgs),
    /// Time single-clip inference across sampler step counts.
    Bench(bench::BenchArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(args) => gen_data::run(args).map(|_| ()),
        Command::Train(args) => train::run(args).map(|_| ()),
        Command::Generate(args) => generate::run(args).map(|_| ()),
        Command::Eval(args) => eval::run(args).map(|_| ()),
        Command::Bench(args) => bench::run(args).map(|_| ()),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
