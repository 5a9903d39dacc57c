//! `fad eval`: score predictions against ground truth and the five
//! classical baselines, one report row per method and metric view.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use fad_core::{derive_seed, flatten_motion, Tensor32};
use fad_data::{read_dataset, split_corpus};
use fad_eval::{
    evaluate_both_views, run_baseline, write_csv, write_json, BaselineKind, BaselineQuery,
    CorpusSequence, MetricView, ReportRow, TLCC_DEFAULT_MAX_LAG,
};
use fad_model::{MelConfig, MelExtractor};

use crate::commands::{clamp_max_lag, fit_cluster_models};
use crate::config::resolve_seed;
use crate::predictions::read_predictions;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions directory or manifest.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth dataset the predictions were generated from.
    #[arg(long)]
    pub gt: PathBuf,
    /// Training dataset: source of baseline corpora and cluster centers.
    #[arg(long = "train-data")]
    pub train_data: PathBuf,
    /// Output directory for report.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvalArgs) -> Result<(PathBuf, PathBuf)> {
    let preds = read_predictions(&args.pred)?;
    let gt = read_dataset(&args.gt).context("cannot read ground-truth dataset")?;
    let train = read_dataset(&args.train_data).context("cannot read training dataset")?;

    let n = preds.manifest.sequences;
    if n != gt.sequences.len() {
        bail!(
            "predictions cover {n} sequences but the ground-truth dataset has {}",
            gt.sequences.len()
        );
    }
    let offset = preds.manifest.offset;
    let frames = preds.manifest.frames;
    if offset + frames > gt.frames {
        bail!(
            "prediction window {}..{} exceeds the {}-frame ground truth",
            offset,
            offset + frames,
            gt.frames
        );
    }

    let gts: Vec<Tensor32> = gt
        .sequences
        .iter()
        .map(|s| s.listener_motion.slice_rows(offset, offset + frames))
        .collect::<fad_core::Result<_>>()?;
    let speakers: Vec<Tensor32> = gt
        .sequences
        .iter()
        .map(|s| s.speaker_motion.slice_rows(offset, offset + frames))
        .collect::<fad_core::Result<_>>()?;
    let max_lag = clamp_max_lag(TLCC_DEFAULT_MAX_LAG, frames);
    let seed = resolve_seed(None, 0)?;

    let split = split_corpus(train.sequences.len(), train.seed);
    let (km_expr, km_rot) = fit_cluster_models(&train, &split.train, seed)?;

    let mut rows = Vec::with_capacity(12);
    let (expr, rot) = evaluate_both_views(&preds.motion, &gts, &speakers, &km_expr, &km_rot, max_lag)?;
    rows.push(ReportRow::new("ours", MetricView::Expression, expr));
    rows.push(ReportRow::new("ours", MetricView::Rotation, rot));

    let mel = MelExtractor::new(&MelConfig::default())?;
    let corpus: Vec<CorpusSequence> = split
        .train
        .iter()
        .map(|&i| {
            let s = &train.sequences[i];
            Ok(CorpusSequence {
                speaker_motion: s.speaker_motion.clone(),
                listener_motion: s.listener_motion.clone(),
                audio_features: mel.extract(&s.speaker_audio, train.frames)?,
            })
        })
        .collect::<Result<_>>()?;
    let queries: Vec<BaselineQuery> = gt
        .sequences
        .iter()
        .map(|s| {
            Ok(BaselineQuery {
                speaker_motion: Some(s.speaker_motion.clone()),
                audio_features: Some(mel.extract(&s.speaker_audio, gt.frames)?),
                frames: gt.frames,
            })
        })
        .collect::<Result<_>>()?;

    for kind in BaselineKind::ALL {
        let mut outputs = Vec::with_capacity(n);
        for (i, query) in queries.iter().enumerate() {
            let generated =
                run_baseline(kind, &corpus, query, derive_seed(seed, "eval-random", i as u64))?;
            let motion = flatten_motion(&generated)?;
            if motion.shape()[0] < offset + frames {
                bail!(
                    "{kind} baseline produced {} frames; the window needs {}",
                    motion.shape()[0],
                    offset + frames
                );
            }
            outputs.push(motion.slice_rows(offset, offset + frames)?);
        }
        let (expr, rot) = evaluate_both_views(&outputs, &gts, &speakers, &km_expr, &km_rot, max_lag)?;
        rows.push(ReportRow::new(kind.name(), MetricView::Expression, expr));
        rows.push(ReportRow::new(kind.name(), MetricView::Rotation, rot));
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory '{}'", args.out.display()))?;
    let csv_path = args.out.join("report.csv");
    let json_path = args.out.join("report.json");
    write_csv(&csv_path, &rows)?;
    write_json(&json_path, &rows)?;
    println!("{}", csv_path.display());
    println!("{}", json_path.display());
    Ok((csv_path, json_path))
}
