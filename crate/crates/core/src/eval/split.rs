use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::PrivacyLabel;
use crate::error::{Error, Result};

/// Fold index for every input position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == f).collect()
    }

    /// Positions outside fold `f` and inside it, both in input order.
    pub fn train_test(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.fold_of.len()).partition(|&i| self.fold_of[i] != f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified assignment: each class is shuffled with the seed, public first
/// then private, and the concatenation is dealt round-robin over the folds.
/// Dealing continuously across classes keeps fold sizes within one of each
/// other and per-class fold counts within one of `n_class / k`.
pub fn stratified_folds(labels: &[PrivacyLabel], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![usize::MAX; labels.len()];
    let mut dealt = 0usize;
    for class in PrivacyLabel::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = dealt % k;
            dealt += 1;
        }
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

/// Train/Test split: `k` stratified folds, the last fold held out as Test.
/// Because dealing starts at fold 0, the last fold is never larger than any
/// other.
#[derive(Clone, Debug)]
pub struct HoldoutSplit {
    pub folds: FoldAssignment,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn holdout_split(labels: &[PrivacyLabel], k: usize, seed: u64) -> Result<HoldoutSplit> {
    let folds = stratified_folds(labels, k, seed)?;
    let (train, test) = folds.train_test(k - 1);
    Ok(HoldoutSplit { folds, train, test })
}
