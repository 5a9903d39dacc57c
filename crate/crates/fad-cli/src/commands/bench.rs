//! `fad bench`: the sampling-efficiency study. For each step count, time
//! single-clip inference (batch 1, warm-ups excluded), report analytic
//! FLOPs, and score generation quality on a held-out synthetic split.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use fad_core::{derive_seed, segment_clips, Tensor32, MOTION_DIM};
use fad_data::{generate_corpus, split_corpus, DyadCorpus, DEFAULT_DELAY, DEFAULT_NOISE_SIGMA};
use fad_eval::{evaluate_both_views, KMeansModel, TLCC_DEFAULT_MAX_LAG};
use fad_model::{count_flops, load_checkpoint, FadModel, MelExtractor, Modality, Schedule};

use crate::commands::{check_resolution, clamp_max_lag, fit_cluster_models};
use crate::config::resolve_seed;

/// Sequences in the internal benchmark corpus.
const BENCH_SEQUENCES: usize = 20;
/// Untimed runs before each measurement loop.
const WARM_UPS: usize = 3;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Trained model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated reverse-diffusion step counts.
    #[arg(long = "steps-list", default_value = "1,5,10")]
    pub steps_list: String,
    /// Timed repetitions per step count.
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
}

fn parse_steps_list(text: &str, k_steps: usize) -> Result<Vec<usize>> {
    let mut steps = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let s: usize = part
            .parse()
            .with_context(|| format!("invalid steps value '{part}'"))?;
        if s == 0 || s > k_steps {
            bail!("steps must be in 1..={k_steps}, got {s}");
        }
        steps.push(s);
    }
    if steps.is_empty() {
        bail!("steps list is empty");
    }
    Ok(steps)
}

/// Orders the timings and returns (median, p95) in milliseconds.
fn summarize(mut samples: Vec<f64>) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let median = if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    };
    let p95 = samples[(0.95 * n as f64).ceil() as usize - 1];
    (median, p95)
}

/// Generates predictions for `indices` at the given step count and scores
/// them against the held-out listener windows.
#[allow(clippy::too_many_arguments)]
fn score_split(
    model: &FadModel,
    mel: &MelExtractor,
    sched: &Schedule<f32>,
    corpus: &DyadCorpus,
    indices: &[usize],
    km: &(KMeansModel, KMeansModel),
    steps: usize,
    seed: u64,
) -> Result<(fad_eval::MetricReport, fad_eval::MetricReport)> {
    let l = model.config().clip_len;
    let mut preds = Vec::with_capacity(indices.len());
    let mut gts = Vec::with_capacity(indices.len());
    let mut speakers = Vec::with_capacity(indices.len());
    let mut window = 0;
    for (j, &i) in indices.iter().enumerate() {
        let seq = &corpus.sequences[i];
        let stream = segment_clips(&seq.speaker_frames, &seq.speaker_audio, l)?;
        let n = stream.len();
        if n < 2 {
            bail!("benchmark sequences need at least 2 clips, got {n}");
        }
        window = (n - 1) * l;
        let mut rows = Vec::with_capacity(window * MOTION_DIM);
        for clip in &stream.clips()[..n - 1] {
            let clip_seed = derive_seed(seed, "bench-gen", (j * (n - 1) + clip.index()) as u64);
            let m = model.condition_for_clip(mel, clip.video(), clip.audio(), Modality::Both)?;
            let x = model.generate_clip(&m, steps, sched, clip_seed)?;
            rows.extend_from_slice(x.data());
        }
        preds.push(Tensor32::new(vec![window, MOTION_DIM], rows)?);
        gts.push(seq.listener_motion.slice_rows(l, l + window)?);
        speakers.push(seq.speaker_motion.slice_rows(l, l + window)?);
    }
    let max_lag = clamp_max_lag(TLCC_DEFAULT_MAX_LAG, window);
    Ok(evaluate_both_views(
        &preds, &gts, &speakers, &km.0, &km.1, max_lag,
    )?)
}

pub fn run(args: &BenchArgs) -> Result<String> {
    let ckpt = load_checkpoint(&args.checkpoint).context("cannot load checkpoint")?;
    let model = ckpt.model;
    let cfg = model.config().clone();
    let steps_list = parse_steps_list(&args.steps_list, cfg.k_steps)?;
    if args.repeats == 0 {
        bail!("repeats must be positive");
    }
    let seed = resolve_seed(None, 0)?;

    let l = cfg.clip_len;
    let corpus = generate_corpus(
        derive_seed(seed, "bench-data", 0),
        BENCH_SEQUENCES,
        l * 8,
        DEFAULT_DELAY,
        DEFAULT_NOISE_SIGMA,
    )?;
    check_resolution(&cfg, &corpus)?;
    let split = split_corpus(BENCH_SEQUENCES, corpus.seed);
    let km = fit_cluster_models(&corpus, &split.train, seed)?;
    let mel = MelExtractor::new(&cfg.mel)?;
    let sched = model.schedule()?;

    let timing_seq = &corpus.sequences[split.test[0]];
    let stream = segment_clips(&timing_seq.speaker_frames, &timing_seq.speaker_audio, l)?;
    let clip = &stream.clips()[0];

    let mut csv = String::from(
        "steps,median_ms,p95_ms,flops_total,flops_denoiser_per_step,\
         l2_expression,si_expression,l2_rotation,si_rotation\n",
    );
    for &steps in &steps_list {
        let run_once = |rep: u64| -> Result<f64> {
            let clip_seed = derive_seed(seed, "bench-time", steps as u64 * 1000 + rep);
            let started = Instant::now();
            let m = model.condition_for_clip(&mel, clip.video(), clip.audio(), Modality::Both)?;
            let x = model.generate_clip(&m, steps, &sched, clip_seed)?;
            debug_assert_eq!(x.shape(), [l, MOTION_DIM]);
            Ok(started.elapsed().as_secs_f64() * 1e3)
        };
        for rep in 0..WARM_UPS {
            run_once(rep as u64)?;
        }
        let mut samples = Vec::with_capacity(args.repeats);
        for rep in 0..args.repeats {
            samples.push(run_once((WARM_UPS + rep) as u64)?);
        }
        let (median, p95) = summarize(samples);
        let flops = count_flops(&cfg, Modality::Both, steps);
        let (expr, rot) = score_split(
            &model, &mel, &sched, &corpus, &split.test, &km, steps, seed,
        )?;
        csv.push_str(&format!(
            "{},{:.3},{:.3},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            steps,
            median,
            p95,
            flops.total,
            flops.denoiser_per_step,
            expr.l2,
            expr.si,
            rot.l2,
            rot.si,
        ));
    }
    print!("{csv}");
    Ok(csv)
}
