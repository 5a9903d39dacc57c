//! `fad gen-data`: synthesize a dyad corpus and write it to disk.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use fad_data::{generate_corpus, write_dataset, DEFAULT_DELAY, DEFAULT_NOISE_SIGMA};

use crate::config::resolve_seed;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Directory to write the dataset into.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of dyad sequences to generate.
    #[arg(long)]
    pub sequences: usize,
    /// Frames per sequence.
    #[arg(long)]
    pub frames: usize,
    /// Speaker-to-listener delay in frames.
    #[arg(long, default_value_t = DEFAULT_DELAY)]
    pub delay: usize,
    /// Base seed for the corpus.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &GenDataArgs) -> Result<PathBuf> {
    let seed = resolve_seed(args.seed, 0)?;
    let corpus = generate_corpus(
        seed,
        args.sequences,
        args.frames,
        args.delay,
        DEFAULT_NOISE_SIGMA,
    )
    .context("cannot generate corpus")?;
    let manifest = write_dataset(&args.out, &corpus).context("cannot write dataset")?;
    println!("{}", manifest.display());
    Ok(manifest)
}
