//! Frame-averaged Euclidean distance between two motion matrices.

use fad_core::Tensor32;

use crate::error::{EvalError, Result};

/// Mean over frames of the per-frame Euclidean distance between `pred` and
/// `gt`, both `[T, D]`. Dataset-level values are means of this over sequences.
pub fn l2_metric(pred: &Tensor32, gt: &Tensor32) -> Result<f64> {
    if pred.rank() != 2 || pred.shape() != gt.shape() {
        return Err(EvalError::invalid(format!(
            "shape mismatch: pred {:?} vs gt {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let t = pred.shape()[0];
    let d = pred.shape()[1];
    if t == 0 {
        return Err(EvalError::invalid("l2_metric needs at least one frame"));
    }
    let mut total = 0.0f64;
    for row in 0..t {
        let mut sq = 0.0f64;
        for col in 0..d {
            let diff = f64::from(pred.data()[row * d + col]) - f64::from(gt.data()[row * d + col]);
            sq += diff * diff;
        }
        total += sq.sqrt();
    }
    Ok(total / t as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_inputs_score_zero() {
        let m = Tensor32::new(vec![3, 4], (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(l2_metric(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn all_ones_offset_in_four_dims_scores_two() {
        // Each frame differs by the all-ones vector, distance sqrt(4) = 2.
        let gt = Tensor32::zeros(vec![5, 4]);
        let pred = Tensor32::filled(vec![5, 4], 1.0);
        assert!((l2_metric(&pred, &gt).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Tensor32::zeros(vec![3, 4]);
        let b = Tensor32::zeros(vec![4, 3]);
        assert!(l2_metric(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_shared_frame_permutation(
            rows in proptest::collection::vec(
                proptest::collection::vec(-5.0f32..5.0, 4),
                2..8,
            ),
            seed in 0u64..100,
        ) {
            let t = rows.len();
            let pred = Tensor32::new(vec![t, 4], rows.concat()).unwrap();
            let gt = pred.map(|v| v * 0.5 + 0.1);

            // Deterministic permutation applied to both matrices.
            let mut order: Vec<usize> = (0..t).collect();
            let mut state = seed;
            for i in (1..t).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                order.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let permute = |m: &Tensor32| {
                let mut data = Vec::with_capacity(t * 4);
                for &r in &order {
                    data.extend_from_slice(&m.data()[r * 4..(r + 1) * 4]);
                }
                Tensor32::new(vec![t, 4], data).unwrap()
            };
            let base = l2_metric(&pred, &gt).unwrap();
            let shuffled = l2_metric(&permute(&pred), &permute(&gt)).unwrap();
            prop_assert!((base - shuffled).abs() < 1e-9);
        }
    }
}
