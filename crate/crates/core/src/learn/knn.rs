//! Brute-force k-nearest-neighbour classifier over the four range channels.

use serde::{Deserialize, Serialize};

use super::tree::N_CLASSES;
use super::FitError;
use crate::dataset::{Dataset, LabeledSample};
use crate::reflex::Command;
use crate::sensor::ScanVector;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub samples: Vec<LabeledSample>,
}

pub fn fit_knn(train: &Dataset, k: usize) -> Result<KnnModel, FitError> {
    if train.is_empty() {
        return Err(FitError::Empty);
    }
    if k == 0 {
        return Err(FitError::InvalidParams("k must be at least 1".into()));
    }
    if k > train.len() {
        return Err(FitError::KTooLarge { k, n: train.len() });
    }
    Ok(KnnModel {
        k,
        samples: train.samples.clone(),
    })
}

fn dist2(a: &ScanVector, b: &ScanVector) -> f64 {
    a.channels()
        .iter()
        .zip(b.channels())
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

impl KnnModel {
    /// Indices of the `k` nearest samples, nearest first. Equal distances
    /// order by training index.
    pub fn neighbours(&self, scan: &ScanVector) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (dist2(&s.scan, scan), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.k.min(d.len());
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_unstable_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Majority among the neighbours; a tied vote goes to whichever tied
    /// class has the nearest member.
    pub fn predict(&self, scan: &ScanVector) -> Command {
        let nb = self.neighbours(scan);
        let mut votes = [0usize; N_CLASSES];
        for &i in &nb {
            votes[self.samples[i].label.index()] += 1;
        }
        let top = *votes.iter().max().expect("five classes");
        nb.iter()
            .map(|&i| self.samples[i].label)
            .find(|c| votes[c.index()] == top)
            .unwrap_or(Command::Stop)
    }
}
