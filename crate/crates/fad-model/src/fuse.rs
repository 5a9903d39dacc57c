//! Modality fusion with a fixed-width condition vector.
//!
//! The condition fed to the denoiser always has `d_v + d_a` columns, video
//! features first. An absent modality contributes exact zeros, so weights are
//! shared across modality settings and a model trained on both streams can be
//! queried with either one alone.

use fad_core::{Graph, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{ModelError, Result};

/// Which speaker streams condition the generated motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
    Both,
}

impl Modality {
    pub fn uses_audio(self) -> bool {
        matches!(self, Modality::Audio | Modality::Both)
    }

    pub fn uses_video(self) -> bool {
        matches!(self, Modality::Video | Modality::Both)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
            Modality::Both => "both",
        };
        f.write_str(s)
    }
}

impl FromStr for Modality {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Modality::Audio),
            "video" => Ok(Modality::Video),
            "both" => Ok(Modality::Both),
            other => Err(ModelError::invalid(format!(
                "unknown modality '{other}' (expected audio, video, or both)"
            ))),
        }
    }
}

/// Concatenates per-frame video and audio features into the condition matrix
/// `[l, d_v + d_a]`, zeroing whichever stream the modality masks out.
///
/// A masked stream is replaced by a zero leaf rather than multiplied by zero:
/// the output is identical and the dead encoder drops out of the graph.
pub fn fuse<T: Scalar>(
    g: &mut Graph<T>,
    video_feats: Var,
    audio_feats: Var,
    modality: Modality,
) -> Result<Var> {
    let vs = g.value(video_feats).shape().to_vec();
    let as_ = g.value(audio_feats).shape().to_vec();
    if vs.len() != 2 || as_.len() != 2 {
        return Err(ModelError::invalid(
            "fuse expects rank-2 [l, d] feature matrices",
        ));
    }
    if vs[0] != as_[0] {
        return Err(ModelError::invalid(format!(
            "video has {} rows but audio has {}",
            vs[0], as_[0]
        )));
    }
    let v = if modality.uses_video() {
        video_feats
    } else {
        g.leaf(Tensor::zeros(vs))
    };
    let a = if modality.uses_audio() {
        audio_feats
    } else {
        g.leaf(Tensor::zeros(as_))
    };
    Ok(g.concat(&[v, a], 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fad_core::derive_rng;

    fn feats(g: &mut Graph<f32>, rows: usize, cols: usize, tag: u64) -> Var {
        g.leaf(Tensor::randn(
            vec![rows, cols],
            &mut derive_rng(3, "fuse", tag),
        ))
    }

    #[test]
    fn both_concatenates_video_then_audio() {
        let mut g = Graph::new();
        let v = feats(&mut g, 4, 6, 0);
        let a = feats(&mut g, 4, 3, 1);
        let m = fuse(&mut g, v, a, Modality::Both).unwrap();
        assert_eq!(g.value(m).shape(), &[4, 9]);
        for r in 0..4 {
            for c in 0..6 {
                assert_eq!(g.value(m).at(&[r, c]), g.value(v).at(&[r, c]));
            }
            for c in 0..3 {
                assert_eq!(g.value(m).at(&[r, 6 + c]), g.value(a).at(&[r, c]));
            }
        }
    }

    #[test]
    fn masked_stream_matches_explicitly_zeroed_input() {
        let mut g = Graph::new();
        let v = feats(&mut g, 5, 6, 0);
        let a = feats(&mut g, 5, 3, 1);
        let zeros_v = g.leaf(Tensor::zeros(vec![5, 6]));
        let audio_only = fuse(&mut g, v, a, Modality::Audio).unwrap();
        let zeroed_both = fuse(&mut g, zeros_v, a, Modality::Both).unwrap();
        assert_eq!(g.value(audio_only).data(), g.value(zeroed_both).data());

        let zeros_a = g.leaf(Tensor::zeros(vec![5, 3]));
        let video_only = fuse(&mut g, v, a, Modality::Video).unwrap();
        let zeroed_audio = fuse(&mut g, v, zeros_a, Modality::Both).unwrap();
        assert_eq!(g.value(video_only).data(), g.value(zeroed_audio).data());
    }

    #[test]
    fn row_count_mismatch_is_rejected() {
        let mut g = Graph::new();
        let v = feats(&mut g, 4, 6, 0);
        let a = feats(&mut g, 5, 3, 1);
        assert!(fuse(&mut g, v, a, Modality::Both).is_err());
    }

    #[test]
    fn modality_parses_and_prints_round_trip() {
        for m in [Modality::Audio, Modality::Video, Modality::Both] {
            assert_eq!(m.to_string().parse::<Modality>().unwrap(), m);
        }
        assert!("video+audio".parse::<Modality>().is_err());
    }
}
