//! Classical listener-motion baselines: nearest-neighbor retrieval by
//! speaker motion or audio features, a seeded random pick, mirroring the
//! speaker, and the tiled median listener frame.

use std::fmt;
use std::str::FromStr;

use fad_core::{derive_rng, unflatten_motion, MotionSequence, Tensor32, MOTION_DIM};
use rand::Rng;

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    NnMotion,
    NnAudio,
    Random,
    Mirror,
    Median,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::NnMotion,
        BaselineKind::NnAudio,
        BaselineKind::Random,
        BaselineKind::Mirror,
        BaselineKind::Median,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::NnMotion => "nn_motion",
            BaselineKind::NnAudio => "nn_audio",
            BaselineKind::Random => "random",
            BaselineKind::Mirror => "mirror",
            BaselineKind::Median => "median",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn_motion" => Ok(BaselineKind::NnMotion),
            "nn_audio" => Ok(BaselineKind::NnAudio),
            "random" => Ok(BaselineKind::Random),
            "mirror" => Ok(BaselineKind::Mirror),
            "median" => Ok(BaselineKind::Median),
            other => Err(EvalError::invalid(format!(
                "unknown baseline '{other}' (expected one of nn_motion, nn_audio, random, mirror, median)"
            ))),
        }
    }
}

/// One training dyad as the baselines see it.
#[derive(Debug, Clone)]
pub struct CorpusSequence {
    /// `[T, 56]` speaker motion coefficients.
    pub speaker_motion: Tensor32,
    /// `[T, 56]` paired listener motion coefficients.
    pub listener_motion: Tensor32,
    /// Per-sequence audio feature matrix (any rank-2 shape).
    pub audio_features: Tensor32,
}

/// Query-side inputs; each baseline reads only the fields it needs.
#[derive(Debug, Clone, Default)]
pub struct BaselineQuery {
    pub speaker_motion: Option<Tensor32>,
    pub audio_features: Option<Tensor32>,
    /// Output length for baselines that synthesize frames (median).
    pub frames: usize,
}

fn flat_l2(a: &Tensor32, b: &Tensor32) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(EvalError::invalid(format!(
            "nearest-neighbor features must share a shape: query {:?} vs corpus {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

/// Index of the corpus entry minimizing flattened L2 distance; strict
/// comparison keeps the lowest index on ties.
fn nearest_index<'a>(
    query: &Tensor32,
    corpus: &'a [CorpusSequence],
    feature: impl Fn(&'a CorpusSequence) -> &'a Tensor32,
) -> Result<usize> {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, seq) in corpus.iter().enumerate() {
        let d = flat_l2(query, feature(seq))?;
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Runs one baseline against a training corpus.
///
/// `nn_motion`/`nn_audio` return the listener motion paired with the L2
/// nearest corpus sequence; `random` picks a corpus sequence uniformly from a
/// seeded stream; `mirror` echoes the query speaker motion verbatim; `median`
/// tiles the coordinate-wise median frame of all corpus listener motion
/// `query.frames` times.
pub fn run_baseline(
    kind: BaselineKind,
    corpus: &[CorpusSequence],
    query: &BaselineQuery,
    seed: u64,
) -> Result<MotionSequence> {
    if corpus.is_empty() {
        return Err(EvalError::invalid("baseline corpus must be non-empty"));
    }
    let motion = match kind {
        BaselineKind::NnMotion => {
            let q = query.speaker_motion.as_ref().ok_or_else(|| {
                EvalError::invalid("nn_motion baseline requires query speaker motion")
            })?;
            let i = nearest_index(q, corpus, |s| &s.speaker_motion)?;
            corpus[i].listener_motion.clone()
        }
        BaselineKind::NnAudio => {
            let q = query.audio_features.as_ref().ok_or_else(|| {
                EvalError::invalid("nn_audio baseline requires query audio features")
            })?;
            let i = nearest_index(q, corpus, |s| &s.audio_features)?;
            corpus[i].listener_motion.clone()
        }
        BaselineKind::Random => {
            let mut rng = derive_rng(seed, "baseline-random", 0);
            corpus[rng.random_range(0..corpus.len())].listener_motion.clone()
        }
        BaselineKind::Mirror => query
            .speaker_motion
            .as_ref()
            .ok_or_else(|| EvalError::invalid("mirror baseline requires query speaker motion"))?
            .clone(),
        BaselineKind::Median => {
            if query.frames == 0 {
                return Err(EvalError::invalid(
                    "median baseline requires a positive query frame count",
                ));
            }
            let median = median_frame(corpus)?;
            let mut data = Vec::with_capacity(query.frames * MOTION_DIM);
            for _ in 0..query.frames {
                data.extend_from_slice(&median);
            }
            Tensor32::new(vec![query.frames, MOTION_DIM], data)?
        }
    };
    Ok(unflatten_motion(&motion)?)
}

/// Coordinate-wise median over every listener frame in the corpus.
fn median_frame(corpus: &[CorpusSequence]) -> Result<Vec<f32>> {
    let mut columns: Vec<Vec<f32>> = vec![Vec::new(); MOTION_DIM];
    for seq in corpus {
        let m = &seq.listener_motion;
        if m.rank() != 2 || m.shape()[1] != MOTION_DIM {
            return Err(EvalError::invalid(format!(
                "corpus listener motion must be [T, {MOTION_DIM}], got {:?}",
                m.shape()
            )));
        }
        for r in 0..m.shape()[0] {
            for c in 0..MOTION_DIM {
                columns[c].push(m.data()[r * MOTION_DIM + c]);
            }
        }
    }
    columns
        .into_iter()
        .map(|mut col| {
            if col.is_empty() {
                return Err(EvalError::invalid("corpus has no listener frames"));
            }
            col.sort_by(f32::total_cmp);
            let n = col.len();
            Ok(if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            })
        })
        .collect()
}
