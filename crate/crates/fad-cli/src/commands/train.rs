//! `fad train`: fit the diffusion model on the train split of a dataset.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use fad_data::{read_dataset, split_corpus};
use fad_model::{save_checkpoint, train, AdamWState, FadModel, Modality, TrainProgress};

use crate::commands::{check_resolution, train_sequences};
use crate::config::{load_run_config, resolve_seed};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory or manifest path.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint and loss trace.
    #[arg(long)]
    pub out: PathBuf,
    /// Conditioning modality: audio, video, or both.
    #[arg(long)]
    pub modality: Option<String>,
    /// Training seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &TrainArgs) -> Result<PathBuf> {
    let mut cfg = load_run_config(args.config.as_deref())?;
    if let Some(text) = &args.modality {
        cfg.train.modality = text.parse::<Modality>()?;
    }
    cfg.train.seed = resolve_seed(args.seed, cfg.train.seed)?;
    cfg.validate()?;

    let corpus = read_dataset(&args.data).context("cannot read dataset")?;
    check_resolution(&cfg.model, &corpus)?;
    let split = split_corpus(corpus.sequences.len(), corpus.seed);
    let dataset = train_sequences(&corpus, &split.train);

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory '{}'", args.out.display()))?;
    let ckpt_path = args.out.join("checkpoint.ckpt");

    let mut model = FadModel::init(cfg.model.clone(), cfg.train.seed)?;
    let mut state = AdamWState::new(&model.params);
    let mut progress = TrainProgress::default();
    let trace = train(
        &mut model,
        &dataset,
        &cfg.train,
        &mut state,
        &mut progress,
        |m, s, p| save_checkpoint(&ckpt_path, m, Some(s), *p),
    )?;

    let mut csv = String::from("step,loss,wall_ms\n");
    for row in &trace {
        csv.push_str(&format!("{},{},{:.3}\n", row.step, row.loss, row.wall_ms));
    }
    fs::write(args.out.join("loss_trace.csv"), csv).context("cannot write loss trace")?;
    let rendered = toml::to_string_pretty(&cfg).context("cannot serialize effective config")?;
    fs::write(args.out.join("config.toml"), rendered).context("cannot write effective config")?;

    println!("{}", ckpt_path.display());
    Ok(ckpt_path)
}
