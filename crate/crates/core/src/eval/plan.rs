use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const DEFAULT_LOSO_TRIALS: usize = 10;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_RKF_TRIALS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "scheme")]
pub enum Scheme {
    Loso,
    Rkf { k: usize, repeats: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub repetition: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub scheme: Scheme,
    pub folds: Vec<Fold>,
    pub trials_per_fold: usize,
    pub base_seed: u64,
}

impl FoldPlan {
    /// Seed of one training run.
    pub fn trial_seed(&self, fold: usize, trial: usize) -> u64 {
        derive_seed(self.base_seed, &[fold as u64, trial as u64])
    }

    pub fn repetitions(&self) -> usize {
        match self.scheme {
            Scheme::Loso => 1,
            Scheme::Rkf { repeats, .. } => repeats,
        }
    }
}

fn check_unique(subjects: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in subjects {
        if !seen.insert(s) {
            return Err(Error::DuplicateSubject(s.clone()));
        }
    }
    Ok(())
}

pub fn plan_loso(subjects: &[String], trials: usize, seed: u64) -> Result<FoldPlan> {
    if subjects.len() < 2 {
        return Err(Error::TooFew(subjects.len()));
    }
    check_unique(subjects)?;
    let folds = subjects
        .iter()
        .map(|held| Fold {
            repetition: 0,
            train: subjects.iter().filter(|s| *s != held).cloned().collect(),
            test: vec![held.clone()],
        })
        .collect();
    Ok(FoldPlan { scheme: Scheme::Loso, folds, trials_per_fold: trials, base_seed: seed })
}

/// Per repetition: seeded shuffle, then `k` contiguous parts whose sizes
/// differ by at most one (larger parts first).
pub fn plan_rkf(subjects: &[String], k: usize, repeats: usize, trials: usize, seed: u64) -> Result<FoldPlan> {
    if subjects.len() < 2 {
        return Err(Error::TooFew(subjects.len()));
    }
    check_unique(subjects)?;
    if k < 2 || k > subjects.len() {
        return Err(Error::BadK { k, n: subjects.len() });
    }
    let n = subjects.len();
    let mut folds = Vec::with_capacity(k * repeats);
    for rep in 0..repeats {
        let mut order = subjects.to_vec();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[u64::MAX, rep as u64])));
        let mut start = 0;
        for f in 0..k {
            let size = n / k + usize::from(f < n % k);
            let test: Vec<String> = order[start..start + size].to_vec();
            let train = order[..start].iter().chain(&order[start + size..]).cloned().collect();
            folds.push(Fold { repetition: rep, train, test });
            start += size;
        }
    }
    Ok(FoldPlan { scheme: Scheme::Rkf { k, repeats }, folds, trials_per_fold: trials, base_seed: seed })
}
