//! CART classification tree with Gini impurity.
//!
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values. Routing sends `value < threshold` to the left child. Split
//! quality is compared in exact integer arithmetic so ties resolve the same
//! way on every platform: lowest feature index first, then lowest threshold.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{majority, FitError};
use crate::dataset::Dataset;
use crate::reflex::Command;
use crate::sensor::ScanVector;

pub const N_FEATURES: usize = 4;
pub const N_CLASSES: usize = 5;

/// `1 − Σ p_i²` over the five command classes.
pub fn gini(counts: &[usize; N_CLASSES]) -> f64 {
    let total: usize = counts.iter().sum();
    assert!(total > 0, "gini of an empty node");
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

/// `n · gini` as the exact fraction `(n² − Σc²) / n`.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn of(counts: &[usize; N_CLASSES], n: usize) -> Score {
        let n = n as u128;
        let sq: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
        Score {
            num: n * n - sq,
            den: n,
        }
    }

    fn add(self, o: Score) -> Score {
        Score {
            num: self.num * o.den + o.num * self.den,
            den: self.den * o.den,
        }
    }

    fn lt(self, o: Score) -> bool {
        self.num * o.den < o.num * self.den
    }

    fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Child-count-weighted Gini of the two sides.
    pub weighted_gini: f64,
}

/// Best axis-aligned split of `samples` over `allowed_features`, or `None`
/// when the set is pure or no split lowers impurity.
pub fn best_split(samples: &[(ScanVector, Command)], allowed_features: &[usize]) -> Option<Split> {
    let x: Vec<[f64; N_FEATURES]> = samples.iter().map(|(s, _)| s.channels()).collect();
    let y: Vec<Command> = samples.iter().map(|&(_, c)| c).collect();
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut feats = allowed_features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    split_indices(&x, &y, &mut idx, &feats)
}

fn class_counts(y: &[Command], idx: &[usize]) -> [usize; N_CLASSES] {
    let mut c = [0; N_CLASSES];
    for &i in idx {
        c[y[i].index()] += 1;
    }
    c
}

/// `feats` must be sorted ascending. Reorders `idx`.
fn split_indices(x: &[[f64; N_FEATURES]], y: &[Command], idx: &mut [usize], feats: &[usize]) -> Option<Split> {
    let n = idx.len();
    if n < 2 {
        return None;
    }
    let total = class_counts(y, idx);
    if total.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let parent = Score::of(&total, n);
    let mut best: Option<(Score, usize, f64)> = None;
    for &f in feats {
        idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left = [0usize; N_CLASSES];
        for pos in 0..n - 1 {
            left[y[idx[pos]].index()] += 1;
            let (a, b) = (x[idx[pos]][f], x[idx[pos + 1]][f]);
            if a == b {
                continue;
            }
            let nl = pos + 1;
            let mut right = total;
            for k in 0..N_CLASSES {
                right[k] -= left[k];
            }
            let score = Score::of(&left, nl).add(Score::of(&right, n - nl));
            if best.is_none_or(|(s, _, _)| score.lt(s)) {
                best = Some((score, f, 0.5 * (a + b)));
            }
        }
    }
    let (score, feature, threshold) = best?;
    if !score.lt(parent) {
        return None;
    }
    Some(Split {
        feature,
        threshold,
        weighted_gini: score.value() / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 16,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Command,
    },
}

/// Flat node list; node 0 is the root and children always follow parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub params: TreeParams,
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn predict(&self, scan: &ScanVector) -> Command {
        let v = scan.channels();
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { label } => return label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if v[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Structural check used when loading untrusted model files: indices in
    /// range and strictly increasing along every edge, so traversal
    /// terminates.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = *n
            {
                if feature >= N_FEATURES {
                    return Err(format!("node {i}: feature {feature} out of range"));
                }
                if threshold.is_nan() {
                    return Err(format!("node {i}: NaN threshold"));
                }
                for c in [left, right] {
                    if c <= i || c >= self.nodes.len() {
                        return Err(format!("node {i}: bad child index {c}"));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn fit_tree(train: &Dataset, params: &TreeParams) -> Result<TreeModel, FitError> {
    if train.is_empty() {
        return Err(FitError::Empty);
    }
    let x: Vec<[f64; N_FEATURES]> = train.samples.iter().map(|s| s.scan.channels()).collect();
    let y: Vec<Command> = train.labels();
    let idx: Vec<usize> = (0..x.len()).collect();
    Ok(grow(&x, &y, idx, params, &mut |_| (0..N_FEATURES).collect()))
}

/// Grows a tree over the rows in `idx`. `features` picks the candidate
/// features for each node, in node creation order.
pub(crate) fn grow(
    x: &[[f64; N_FEATURES]],
    y: &[Command],
    idx: Vec<usize>,
    params: &TreeParams,
    features: &mut dyn FnMut(usize) -> Vec<usize>,
) -> TreeModel {
    let mut nodes: Vec<Node> = Vec::new();
    // (slot to fill, rows, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, idx, 0)];
    nodes.push(Node::Leaf { label: Command::Stop });
    while let Some((slot, mut rows, depth)) = stack.pop() {
        let counts = class_counts(y, &rows);
        let label = majority(&counts);
        let can_split = depth < params.max_depth && rows.len() >= params.min_samples_split.max(2);
        let split = if can_split {
            let mut feats = features(slot);
            feats.sort_unstable();
            split_indices(x, y, &mut rows, &feats)
        } else {
            None
        };
        match split {
            None => nodes[slot] = Node::Leaf { label },
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][s.feature] < s.threshold);
                let li = nodes.len();
                nodes.push(Node::Leaf { label });
                let ri = nodes.len();
                nodes.push(Node::Leaf { label });
                nodes[slot] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: li,
                    right: ri,
                };
                // Right first so the left subtree is expanded first.
                stack.push((ri, r, depth + 1));
                stack.push((li, l, depth + 1));
            }
        }
    }
    TreeModel { params: *params, nodes }
}

/// Random subset of `k` features, used by the forest.
pub(crate) fn sample_features<R: Rng>(rng: &mut R, k: usize) -> Vec<usize> {
    let k = k.clamp(1, N_FEATURES);
    let mut v = index::sample(rng, N_FEATURES, k).into_vec();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use proptest::prelude::*;

    fn s(v: [f64; 4]) -> ScanVector {
        ScanVector::from_channels(v)
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[3, 0, 0, 0, 0]), 0.0);
        assert_eq!(gini(&[1, 1, 0, 0, 0]), 0.5);
        assert_eq!(gini(&[2, 1, 1, 0, 0]), 0.625);
        assert!((gini(&[1, 1, 1, 1, 1]) - 0.8).abs() < 1e-15);
    }

    #[test]
    #[should_panic]
    fn gini_of_nothing_panics() {
        gini(&[0; 5]);
    }

    #[test]
    fn midpoint_threshold() {
        let data = [
            (s([10.0, 0.0, 0.0, 0.0]), Command::Front),
            (s([30.0, 0.0, 0.0, 0.0]), Command::Left),
        ];
        let sp = best_split(&data, &[0]).unwrap();
        assert_eq!(sp.feature, 0);
        assert_eq!(sp.threshold, 20.0);
        assert_eq!(sp.weighted_gini, 0.0);
    }

    #[test]
    fn pure_set_has_no_split() {
        let data = [
            (s([10.0, 1.0, 2.0, 3.0]), Command::Back),
            (s([30.0, 4.0, 5.0, 6.0]), Command::Back),
        ];
        assert!(best_split(&data, &[0, 1, 2, 3]).is_none());
    }

    #[test]
    fn tie_prefers_lowest_feature_then_threshold() {
        // Features 0 and 2 separate equally well.
        let data = [
            (s([1.0, 5.0, 1.0, 5.0]), Command::Front),
            (s([2.0, 5.0, 2.0, 5.0]), Command::Left),
        ];
        assert_eq!(best_split(&data, &[2, 0]).unwrap().feature, 0);
    }

    #[test]
    fn single_sample_tree_is_a_leaf() {
        let ds = Dataset::new(vec![LabeledSample::new(s([50.0, 60.0, 70.0, 80.0]), Command::Right)]);
        let t = fit_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&s([5.0, 5.0, 5.0, 5.0])), Command::Right);
    }

    #[test]
    fn empty_fit_fails() {
        assert_eq!(
            fit_tree(&Dataset::default(), &TreeParams::default()),
            Err(FitError::Empty)
        );
    }

    #[test]
    fn depth_budget_is_respected() {
        let ds = Dataset::new(
            (0..64)
                .map(|i| LabeledSample::new(s([i as f64, 0.0, 0.0, 0.0]), Command::ALL[i % 2]))
                .collect(),
        );
        let t = fit_tree(
            &ds,
            &TreeParams {
                max_depth: 3,
                min_samples_split: 2,
            },
        )
        .unwrap();
        assert!(t.depth() <= 3);
        assert!(t.validate().is_ok());
    }

    /// Tries every (feature, midpoint) pair with plain float Gini.
    fn exhaustive(data: &[(ScanVector, Command)], feats: &[usize]) -> Option<(usize, f64, f64)> {
        let counts = |rows: &mut dyn Iterator<Item = &(ScanVector, Command)>| {
            let mut c = [0usize; 5];
            let mut n = 0;
            for (_, l) in rows {
                c[l.index()] += 1;
                n += 1;
            }
            (c, n)
        };
        let (all, n) = counts(&mut data.iter());
        let parent = gini(&all);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut feats = feats.to_vec();
        feats.sort();
        for &f in &feats {
            let mut vals: Vec<f64> = data.iter().map(|(s, _)| s.channels()[f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (lc, ln) = counts(&mut data.iter().filter(|(s, _)| s.channels()[f] < t));
                let (rc, rn) = counts(&mut data.iter().filter(|(s, _)| s.channels()[f] >= t));
                let g = (ln as f64 * gini(&lc) + rn as f64 * gini(&rc)) / n as f64;
                if best.is_none_or(|(_, _, bg)| g < bg - 1e-12) {
                    best = Some((f, t, g));
                }
            }
        }
        best.filter(|&(_, _, g)| g < parent - 1e-12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn best_split_matches_exhaustive(
            rows in prop::collection::vec((prop::array::uniform4(0u8..6), 0usize..3), 2..=12),
            mask in 1u8..16,
        ) {
            let data: Vec<(ScanVector, Command)> = rows
                .iter()
                .map(|(v, c)| (s(v.map(|x| x as f64 * 10.0)), Command::ALL[*c]))
                .collect();
            let feats: Vec<usize> = (0..4).filter(|i| mask & (1 << i) != 0).collect();
            let got = best_split(&data, &feats);
            let want = exhaustive(&data, &feats);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some((f, t, wg))) => {
                    prop_assert_eq!(g.feature, f);
                    prop_assert_eq!(g.threshold, t);
                    prop_assert!((g.weighted_gini - wg).abs() < 1e-9);
                }
                (g, w) => prop_assert!(false, "got {:?}, oracle {:?}", g, w),
            }
        }
    }

    proptest! {
        #[test]
        fn label_consistent_data_is_memorised(
            rows in prop::collection::vec((prop::array::uniform4(0u16..500), 0usize..5), 1..200),
        ) {
            let mut seen = std::collections::HashMap::new();
            let samples: Vec<LabeledSample> = rows
                .iter()
                .filter(|(v, c)| *seen.entry(*v).or_insert(*c) == *c)
                .map(|(v, c)| LabeledSample::new(s(v.map(f64::from)), Command::ALL[*c]))
                .collect();
            let ds = Dataset::new(samples);
            let t = fit_tree(&ds, &TreeParams::default()).unwrap();
            prop_assume!(t.depth() < TreeParams::default().max_depth);
            for x in &ds.samples {
                prop_assert_eq!(t.predict(&x.scan), x.label);
            }
        }

        #[test]
        fn gini_bounds(c in prop::array::uniform5(0usize..50)) {
            prop_assume!(c.iter().sum::<usize>() > 0);
            let g = gini(&c);
            prop_assert!((0.0..=0.8 + 1e-12).contains(&g));
            let pure = c.iter().filter(|&&v| v > 0).count() == 1;
            prop_assert_eq!(g == 0.0, pure);
        }
    }
}
