//! `fad generate`: run clip-streaming inference over a dataset.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use fad_core::{derive_seed, segment_clips, Tensor32, MOTION_DIM};
use fad_data::{read_dataset, BlobSpec};
use fad_model::{load_checkpoint, MelExtractor, Modality};

use crate::commands::check_resolution;
use crate::config::resolve_seed;
use crate::predictions::{write_predictions, PredictionManifest, PREDICTIONS_VERSION};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Trained model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory or manifest to condition on.
    #[arg(long = "input-manifest")]
    pub input_manifest: PathBuf,
    /// Reverse-diffusion steps per clip.
    #[arg(long)]
    pub steps: usize,
    /// Output directory for predictions and the latency log.
    #[arg(long)]
    pub out: PathBuf,
    /// Conditioning modality: audio, video, or both.
    #[arg(long, default_value = "both")]
    pub modality: String,
    /// Base seed for per-clip sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &GenerateArgs) -> Result<PathBuf> {
    let ckpt = load_checkpoint(&args.checkpoint).context("cannot load checkpoint")?;
    let model = ckpt.model;
    let cfg = model.config().clone();
    if args.steps == 0 || args.steps > cfg.k_steps {
        bail!(
            "steps must be in 1..={}, got {}",
            cfg.k_steps,
            args.steps
        );
    }
    let modality = args.modality.parse::<Modality>()?;
    let seed = resolve_seed(args.seed, 0)?;

    let corpus = read_dataset(&args.input_manifest).context("cannot read dataset")?;
    check_resolution(&cfg, &corpus)?;
    let sched = model.schedule()?;
    let mel = MelExtractor::new(&cfg.mel)?;
    let l = cfg.clip_len;

    let mut predictions = Vec::with_capacity(corpus.sequences.len());
    let mut latency = String::from("sequence,clip,millis\n");
    let mut frames_out = None;
    for (i, seq) in corpus.sequences.iter().enumerate() {
        let stream = segment_clips(&seq.speaker_frames, &seq.speaker_audio, l)?;
        let n = stream.len();
        if n < 2 {
            bail!("sequence {i} has {n} clips of length {l}; need at least 2 to generate");
        }
        let mut rows = Vec::with_capacity((n - 1) * l * MOTION_DIM);
        for clip in &stream.clips()[..n - 1] {
            let clip_seed = derive_seed(seed, "generate", (i * (n - 1) + clip.index()) as u64);
            let started = Instant::now();
            let m = model.condition_for_clip(&mel, clip.video(), clip.audio(), modality)?;
            let x = model.generate_clip(&m, args.steps, &sched, clip_seed)?;
            let ms = started.elapsed().as_secs_f64() * 1e3;
            latency.push_str(&format!("{},{},{:.3}\n", i, clip.index(), ms));
            rows.extend_from_slice(x.data());
        }
        let seq_frames = (n - 1) * l;
        if *frames_out.get_or_insert(seq_frames) != seq_frames {
            bail!("sequence {i} produced {seq_frames} frames; sequences must agree");
        }
        predictions.push(Tensor32::new(vec![seq_frames, MOTION_DIM], rows)?);
    }
    let frames = frames_out.unwrap_or(0);

    let manifest = PredictionManifest {
        version: PREDICTIONS_VERSION,
        sequences: predictions.len(),
        frames,
        offset: l,
        clip_len: l,
        steps: args.steps,
        seed,
        motion: BlobSpec {
            path: String::new(),
            shape: vec![],
        },
    };
    let manifest_path = write_predictions(&args.out, manifest, &predictions)?;
    fs::write(args.out.join("latency.csv"), latency).context("cannot write latency log")?;
    println!("{}", manifest_path.display());
    Ok(manifest_path)
}
