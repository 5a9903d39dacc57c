//! Seed-stable 70/20/10 train/val/test split over sequence indices.

use fad_core::derive_rng;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with a seed-derived stream and partitions 70/20/10 by
/// floor counts (the test split absorbs the remainder). Each split is sorted.
pub fn split_corpus(n: usize, seed: u64) -> SplitIndices {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = derive_rng(seed, "split", 0);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = n * 7 / 10;
    let n_val = n * 2 / 10;
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    SplitIndices { train, val, test }
}
