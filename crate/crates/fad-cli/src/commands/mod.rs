//! Subcommand implementations and the helpers they share.

pub mod bench;
pub mod eval;
pub mod gen_data;
pub mod generate;
pub mod train;

use anyhow::{bail, Result};
use fad_core::{derive_seed, split_metric_views, Tensor32};
use fad_data::DyadCorpus;
use fad_eval::{kmeans_fit, pool_rows, KMeansModel, MetricView, KMEANS_DEFAULT_K};
use fad_model::{ModelConfig, TrainSequence};

/// Training views of the corpus sequences selected by `indices`.
pub fn train_sequences(corpus: &DyadCorpus, indices: &[usize]) -> Vec<TrainSequence> {
    indices
        .iter()
        .map(|&i| {
            let s = &corpus.sequences[i];
            TrainSequence {
                speaker_video: s.speaker_frames.clone(),
                speaker_audio: s.speaker_audio.clone(),
                listener_motion: s.listener_motion.clone(),
            }
        })
        .collect()
}

/// The dataset's frame geometry must match the configured visual encoder.
pub fn check_resolution(cfg: &ModelConfig, corpus: &DyadCorpus) -> Result<()> {
    if let Some(seq) = corpus.sequences.first() {
        let shape = seq.speaker_frames.shape();
        let want = [
            cfg.visual.in_channels,
            cfg.visual.resolution,
            cfg.visual.resolution,
        ];
        if shape[1..] != want {
            bail!(
                "dataset frames are {:?} but the visual encoder expects {:?}",
                &shape[1..],
                want
            );
        }
    }
    Ok(())
}

/// TLCC needs `T > 2*max_lag`; clamp the configured lag to the window.
pub fn clamp_max_lag(max_lag: usize, frames: usize) -> usize {
    max_lag.min(frames.saturating_sub(1) / 2)
}

/// Listener motion pooled from the sequences named by `indices`, clustered
/// per metric view for the diversity index.
pub fn fit_cluster_models(
    corpus: &DyadCorpus,
    indices: &[usize],
    seed: u64,
) -> Result<(KMeansModel, KMeansModel)> {
    let listeners: Vec<Tensor32> = indices
        .iter()
        .map(|&i| corpus.sequences[i].listener_motion.clone())
        .collect();
    let pooled = pool_rows(&listeners)?;
    let (expr, rot) = split_metric_views(&pooled)?;
    let km_expr = kmeans_fit(&expr, KMEANS_DEFAULT_K, derive_seed(seed, "eval-kmeans", 0))?
        .with_view(MetricView::Expression);
    let km_rot = kmeans_fit(&rot, KMEANS_DEFAULT_K, derive_seed(seed, "eval-kmeans", 1))?
        .with_view(MetricView::Rotation);
    Ok((km_expr, km_rot))
}
