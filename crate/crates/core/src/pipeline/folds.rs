use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;

pub const DEFAULT_FOLDS: usize = 5;

/// Fold index for every row, in row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<(String, usize)>,
}

impl FoldPlan {
    pub fn fold_of(&self, row: usize) -> usize {
        self.assignments[row].1
    }

    /// Row indices held out in `fold`, ascending.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.fold_of(i) == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.fold_of(i) != fold).collect()
    }
}

/// Stratified assignment: each class is shuffled, then dealt round-robin
/// over the folds. Negatives continue dealing where positives stopped so
/// fold sizes stay within one of each other.
pub fn kfold_indices(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>, PipelineError> {
    if k < 2 {
        return Err(PipelineError::Manifest(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for class in [1u8, 0u8] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.len() < k {
            return Err(PipelineError::TooFewSamples {
                class,
                got: rows.len(),
                needed: k,
            });
        }
        rows.shuffle(&mut rng);
        for (j, &r) in rows.iter().enumerate() {
            folds[r] = (offset + j) % k;
        }
        offset = (offset + rows.len()) % k;
    }
    Ok(folds)
}

pub fn kfold_split(rows: &[(String, u8)], k: usize, seed: u64) -> Result<FoldPlan, PipelineError> {
    let labels: Vec<u8> = rows.iter().map(|(_, y)| *y).collect();
    let folds = kfold_indices(&labels, k, seed)?;
    Ok(FoldPlan {
        k,
        assignments: rows.iter().map(|(u, _)| u.clone()).zip(folds).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(pos: usize, neg: usize) -> Vec<(String, u8)> {
        (0..pos + neg).map(|i| (format!("r{i}"), u8::from(i < pos))).collect()
    }

    #[test]
    fn ten_rows_one_of_each_per_fold() {
        let r = rows(5, 5);
        let plan = kfold_split(&r, 5, 42).unwrap();
        for f in 0..5 {
            let test = plan.test_rows(f);
            assert_eq!(test.len(), 2);
            assert_eq!(test.iter().filter(|&&i| r[i].1 == 1).count(), 1);
        }
        assert_eq!(plan, kfold_split(&r, 5, 42).unwrap());
    }

    #[test]
    fn too_few() {
        assert_eq!(
            kfold_indices(&[1, 1, 0, 0, 0, 0, 0], 5, 0),
            Err(PipelineError::TooFewSamples { class: 1, got: 2, needed: 5 })
        );
    }
}
