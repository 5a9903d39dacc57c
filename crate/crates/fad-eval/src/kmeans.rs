//! Seeded k-means (k-means++ init, Lloyd refinement) and the Shannon
//! diversity index over cluster assignments.

use fad_core::{derive_rng, Tensor32};
use rand::Rng;

use crate::error::{EvalError, Result};
use crate::report::MetricView;

pub const KMEANS_MAX_ITERS: usize = 200;
pub const KMEANS_DEFAULT_K: usize = 16;

/// Fitted clustering used by the Shannon index.
#[derive(Debug, Clone)]
pub struct KMeansModel {
    pub k: usize,
    /// `[k, D]` cluster centers.
    pub centroids: Tensor32,
    pub seed: u64,
    pub max_iters: usize,
    /// Which motion view the model was trained on, when known.
    pub view: Option<MetricView>,
}

impl KMeansModel {
    pub fn with_view(mut self, view: MetricView) -> Self {
        self.view = Some(view);
        self
    }

    pub fn dim(&self) -> usize {
        self.centroids.shape()[1]
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
}

/// Nearest centroid by Euclidean distance; strict comparison keeps the lowest
/// index on exact ties.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Fits k-means and also returns the within-cluster SSE recorded after every
/// assignment step, which Lloyd's algorithm guarantees is non-increasing.
pub fn kmeans_fit_traced(data: &Tensor32, k: usize, seed: u64) -> Result<(KMeansModel, Vec<f64>)> {
    if data.rank() != 2 {
        return Err(EvalError::invalid(format!(
            "k-means data must be [N, D], got {:?}",
            data.shape()
        )));
    }
    let n = data.shape()[0];
    let d = data.shape()[1];
    if k == 0 {
        return Err(EvalError::invalid("k must be positive"));
    }
    if n < k {
        return Err(EvalError::invalid(format!(
            "k-means needs at least k={k} samples, got {n}"
        )));
    }
    let row = |i: usize| -> Vec<f64> {
        data.data()[i * d..(i + 1) * d]
            .iter()
            .map(|&v| f64::from(v))
            .collect()
    };

    // k-means++ seeding: first center uniform, the rest proportional to the
    // squared distance from the nearest already-chosen center.
    let mut rng = derive_rng(seed, "kmeans", 0);
    let mut centroids: Vec<Vec<f64>> = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(&row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            // All points coincide with chosen centers; any pick is equivalent.
            rng.random_range(0..n)
        } else {
            let r: f64 = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > r {
                    pick = i;
                    break;
                }
            }
            pick
        };
        let c = row(idx);
        for i in 0..n {
            let dd = dist2(&row(i), &c);
            if dd < d2[i] {
                d2[i] = dd;
            }
        }
        centroids.push(c);
    }

    // Lloyd iterations to an assignment fixpoint or the iteration cap.
    let mut assignments = vec![usize::MAX; n];
    let mut sse_trace = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sse = 0.0;
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let p = row(i);
            let a = nearest(&p, &centroids);
            sse += dist2(&p, &centroids[a]);
            next.push(a);
        }
        sse_trace.push(sse);
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
        let mut sums = vec![vec![0.0f64; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for (c, (sum, &count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if count > 0 {
                for (cv, sv) in c.iter_mut().zip(sum) {
                    *cv = sv / count as f64;
                }
            }
            // Empty clusters keep their previous center.
        }
    }

    let flat: Vec<f32> = centroids.iter().flatten().map(|&v| v as f32).collect();
    let model = KMeansModel {
        k,
        centroids: Tensor32::new(vec![k, d], flat)?,
        seed,
        max_iters: KMEANS_MAX_ITERS,
        view: None,
    };
    Ok((model, sse_trace))
}

/// Fits k-means with k-means++ seeding; deterministic given `seed`.
pub fn kmeans_fit(data: &Tensor32, k: usize, seed: u64) -> Result<KMeansModel> {
    Ok(kmeans_fit_traced(data, k, seed)?.0)
}

/// Nearest-centroid assignment for every frame of `preds [T, D]`.
pub fn assignments(model: &KMeansModel, preds: &Tensor32) -> Result<Vec<usize>> {
    if preds.rank() != 2 || preds.shape()[1] != model.dim() {
        return Err(EvalError::invalid(format!(
            "dimension mismatch: model clusters D={}, predictions are {:?}",
            model.dim(),
            preds.shape()
        )));
    }
    let d = model.dim();
    let centroids: Vec<Vec<f64>> = (0..model.k)
        .map(|i| {
            model.centroids.data()[i * d..(i + 1) * d]
                .iter()
                .map(|&v| f64::from(v))
                .collect()
        })
        .collect();
    Ok((0..preds.shape()[0])
        .map(|t| {
            let p: Vec<f64> = preds.data()[t * d..(t + 1) * d]
                .iter()
                .map(|&v| f64::from(v))
                .collect();
            nearest(&p, &centroids)
        })
        .collect())
}

/// Shannon diversity of the cluster-assignment histogram:
/// `H = -sum_i p_i ln p_i`; empty clusters contribute nothing.
pub fn shannon_index(preds: &Tensor32, model: &KMeansModel) -> Result<f64> {
    let assign = assignments(model, preds)?;
    let t = assign.len();
    if t == 0 {
        return Err(EvalError::invalid("shannon index needs at least one frame"));
    }
    let mut counts = vec![0usize; model.k];
    for a in assign {
        counts[a] += 1;
    }
    let mut h = 0.0f64;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / t as f64;
            h -= p * p.ln();
        }
    }
    Ok(h)
}
