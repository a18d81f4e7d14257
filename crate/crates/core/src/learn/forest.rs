//! Bagged random forest over CART trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, sample_features, TreeModel, TreeParams, N_CLASSES, N_FEATURES};
use super::{majority, FitError};
use crate::dataset::Dataset;
use crate::reflex::Command;
use crate::sensor::{derive_seed, ScanVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub features_per_split: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            features_per_split: 2,
            bootstrap: true,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    /// Plurality vote; ties go to the earlier command.
    pub fn predict(&self, scan: &ScanVector) -> Command {
        let mut votes = [0usize; N_CLASSES];
        for t in &self.trees {
            votes[t.predict(scan).index()] += 1;
        }
        majority(&votes)
    }
}

/// Seed of tree `i` under `master_seed`.
pub fn tree_seed(master_seed: u64, i: usize) -> u64 {
    derive_seed(master_seed, i as u64, 0x7EE5)
}

pub fn fit_forest(train: &Dataset, params: &ForestParams, master_seed: u64) -> Result<ForestModel, FitError> {
    if train.is_empty() {
        return Err(FitError::Empty);
    }
    if params.n_trees == 0 {
        return Err(FitError::InvalidParams("n_trees must be at least 1".into()));
    }
    if !(1..=N_FEATURES).contains(&params.features_per_split) {
        return Err(FitError::InvalidParams(format!(
            "features_per_split must be in 1..={N_FEATURES}"
        )));
    }
    let x: Vec<[f64; N_FEATURES]> = train.samples.iter().map(|s| s.scan.channels()).collect();
    let y = train.labels();
    let n = x.len();
    let trees = (0..params.n_trees)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(master_seed, i));
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let k = params.features_per_split;
            grow(&x, &y, rows, &params.tree, &mut |_| sample_features(&mut rng, k))
        })
        .collect();
    Ok(ForestModel {
        params: *params,
        seed: master_seed,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use crate::learn::tree::{fit_tree, Node};

    fn leaf(label: Command) -> TreeModel {
        TreeModel {
            params: TreeParams::default(),
            nodes: vec![Node::Leaf { label }],
        }
    }

    fn noisy_set(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(
            (0..n)
                .map(|_| {
                    let s = ScanVector::from_channels([(); 4].map(|_| rng.random_range(5.0..100.0)));
                    LabeledSample::new(s, Command::ALL[rng.random_range(0..5)])
                })
                .collect(),
        )
    }

    #[test]
    fn vote_tie_goes_to_earlier_command() {
        let f = ForestModel {
            params: ForestParams::default(),
            seed: 0,
            trees: vec![leaf(Command::Back), leaf(Command::Front)],
        };
        assert_eq!(f.predict(&ScanVector::default()), Command::Front);
    }

    #[test]
    fn degenerate_forest_is_the_tree() {
        let ds = noisy_set(300, 1);
        let p = ForestParams {
            n_trees: 1,
            features_per_split: 4,
            bootstrap: false,
            tree: TreeParams::default(),
        };
        let f = fit_forest(&ds, &p, 99).unwrap();
        let t = fit_tree(&ds, &p.tree).unwrap();
        assert_eq!(f.trees[0], t);
    }

    #[test]
    fn same_seed_same_forest() {
        let ds = noisy_set(200, 2);
        let p = ForestParams {
            n_trees: 10,
            ..Default::default()
        };
        assert_eq!(fit_forest(&ds, &p, 5).unwrap(), fit_forest(&ds, &p, 5).unwrap());
        assert_ne!(fit_forest(&ds, &p, 5).unwrap(), fit_forest(&ds, &p, 6).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            fit_forest(&Dataset::default(), &ForestParams::default(), 0),
            Err(FitError::Empty)
        );
        let p = ForestParams {
            n_trees: 0,
            ..Default::default()
        };
        assert!(fit_forest(&noisy_set(5, 0), &p, 0).is_err());
    }
}
