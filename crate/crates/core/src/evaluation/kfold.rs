use serde::{Deserialize, Serialize};

use crate::dataset::LabelVector;
use crate::error::{Error, Result};

/// Fold index per sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }
}

fn pick(candidates: impl Iterator<Item = usize>, primary: &[f64], capacity: &[f64]) -> usize {
    let mut best: Option<usize> = None;
    for j in candidates {
        best = match best {
            None => Some(j),
            Some(b) if primary[j] > primary[b] || (primary[j] == primary[b] && capacity[j] > capacity[b]) => Some(j),
            keep => keep,
        };
    }
    best.expect("k >= 2")
}

/// Iterative stratification. The seed fixes the order in which samples are
/// visited.
pub fn stratified_kfold(y: &[LabelVector], k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = y.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("{n} samples cannot fill {k} folds")));
    }
    let labels = y[0].len();
    if y.iter().any(|v| v.len() != labels) {
        return Err(Error::Validation("label rows differ in width".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    crate::rng::Rng::new(seed).shuffle(&mut order);

    let mut capacity = vec![n as f64 / k as f64; k];
    let mut desired: Vec<Vec<f64>> = (0..labels)
        .map(|l| {
            let count = y.iter().filter(|v| v.get(l)).count();
            vec![count as f64 / k as f64; k]
        })
        .collect();
    let mut folds = vec![usize::MAX; n];
    let mut remaining: Vec<usize> = (0..labels).map(|l| y.iter().filter(|v| v.get(l)).count()).collect();

    loop {
        let next = (0..labels)
            .filter(|&l| remaining[l] > 0)
            .min_by_key(|&l| (remaining[l], l));
        let Some(label) = next else { break };
        for &i in &order {
            if folds[i] != usize::MAX || !y[i].get(label) {
                continue;
            }
            let f = pick(0..k, &desired[label], &capacity);
            folds[i] = f;
            capacity[f] -= 1.0;
            for (l, bit) in y[i].bits().iter().enumerate() {
                if *bit {
                    desired[l][f] -= 1.0;
                    remaining[l] -= 1;
                }
            }
        }
    }
    for &i in &order {
        if folds[i] == usize::MAX {
            let f = pick(0..k, &capacity, &capacity);
            folds[i] = f;
            capacity[f] -= 1.0;
        }
    }

    // Label skew can starve a fold; move one sample over from the largest.
    let mut assignment = FoldAssignment { k, folds };
    loop {
        let sizes = assignment.fold_sizes();
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let largest = (0..k)
            .max_by_key(|&j| (sizes[j], std::cmp::Reverse(j)))
            .expect("k >= 2");
        let donor = *order
            .iter()
            .rev()
            .find(|&&i| assignment.folds[i] == largest)
            .expect("non-empty");
        assignment.folds[donor] = empty;
    }
    Ok(assignment)
}
