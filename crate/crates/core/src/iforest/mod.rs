//! Isolation Forest anomaly scoring.
//!
//! Scores follow
//!
//! ```text
//! s(x, n) = 2^(-E(h(x)) / c(n))
//! c(n)    = 2 H(n - 1) - 2 (n - 1) / n,   H(i) = ln(i) + 0.5772156649
//! ```
//!
//! where `E(h(x))` is the mean path length of `x` over all trees and `n` is
//! the per-tree subsample size. `H` is the logarithmic approximation of the
//! harmonic number, used as-is for every `i >= 1`; `c(n)` is zero for
//! `n <= 1`.
//!
//! Flags are assigned by rank: the `ceil(contamination * n_rows)` highest
//! scores are flagged, with ties going to the earlier row.

mod report;
mod tree;
mod tune;

pub use report::{detect_series, ReportRow, SeriesReport, Side, REPORT_CSV_HEADER};
pub use tree::{height_limit, IsolationTree, Node};
pub use tune::{default_grid, tune_contamination, TunePoint, TuneResult};

use std::ops::RangeInclusive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Euler-Mascheroni constant as used in the harmonic-number approximation.
pub const EULER_GAMMA: f64 = 0.5772156649;

/// `c(2)`, handy in tests and docs.
pub const C_2: f64 = 2.0 * EULER_GAMMA - 1.0;

/// Contamination values the tuning sweep normally explores.
pub const CONTAMINATION_POLICY: RangeInclusive<f64> = 0.005..=0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForestError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("feature matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("event catalog is empty")]
    EmptyCatalog,
    #[error("no event kind maps to {0}")]
    UnmappedVariable(crate::ingest::Variable),
}

/// Approximate harmonic number `ln(i) + γ`.
pub fn harmonic(i: f64) -> f64 {
    i.ln() + EULER_GAMMA
}

/// Expected path length of an unsuccessful binary-search-tree lookup over `n`
/// items.
pub fn expected_path_c(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let n = n as f64;
    2.0 * harmonic(n - 1.0) - 2.0 * (n - 1.0) / n
}

/// `2^(-mean_path / c(n))`.
pub fn anomaly_score(mean_path: f64, n: usize) -> f64 {
    (-mean_path / expected_path_c(n)).exp2()
}

/// Number of rows flagged at a given contamination. A 1e-9 guard absorbs
/// representation error so that e.g. `0.01 * 100` flags exactly one row.
pub fn flag_count(contamination: f64, n_rows: usize) -> usize {
    let k = (contamination * n_rows as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n_rows)
}

/// Row-major numeric matrix without missing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_cols: usize) -> Result<Self, ForestError> {
        if n_cols == 0 {
            return Err(ForestError::InvalidMatrix("no features".into()));
        }
        if data.len() % n_cols != 0 {
            return Err(ForestError::InvalidMatrix(format!(
                "{} values do not fill rows of {n_cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::InvalidMatrix(format!(
                "non-finite value at row {}",
                i / n_cols
            )));
        }
        Ok(FeatureMatrix { data, n_cols })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ForestError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(ForestError::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.concat(), n_cols)
    }

    pub fn from_column(values: &[f64]) -> Result<Self, ForestError> {
        Self::new(values.to_vec(), 1)
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Capped at the number of rows when fitting.
    pub subsample_size: usize,
    pub contamination: f64,
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            subsample_size: 256,
            contamination: 0.01,
            rng_seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn with_contamination(self, contamination: f64) -> Self {
        ForestConfig {
            contamination,
            ..self
        }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        ForestConfig { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be positive".into()));
        }
        if self.subsample_size < 2 {
            return Err(ForestError::InvalidConfig(
                "subsample_size must be at least 2".into(),
            ));
        }
        if !(self.contamination > 0.0 && self.contamination < 0.5) {
            return Err(ForestError::InvalidConfig(format!(
                "contamination {} outside (0, 0.5)",
                self.contamination
            )));
        }
        Ok(())
    }

    pub fn within_policy(&self) -> bool {
        CONTAMINATION_POLICY.contains(&self.contamination)
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of tree `index`: `splitmix64(master XOR index)`.
pub fn tree_seed(master: u64, index: usize) -> u64 {
    splitmix64(master ^ index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    sample_size: usize,
}

impl IsolationForest {
    /// Grows `config.n_trees` trees, each on its own subsample drawn without
    /// replacement by a generator seeded from [`tree_seed`].
    pub fn fit(data: &FeatureMatrix, config: &ForestConfig) -> Result<Self, ForestError> {
        config.validate()?;
        let n = data.n_rows();
        if n < 2 {
            return Err(ForestError::TooFewRows(n));
        }
        let sample_size = config.subsample_size.min(n);
        let max_depth = height_limit(sample_size);
        let trees = (0..config.n_trees)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(config.rng_seed, i));
                let mut sample = rand::seq::index::sample(&mut rng, n, sample_size).into_vec();
                sample.sort_unstable();
                IsolationTree::build(data, &sample, &mut rng, max_depth)
            })
            .collect();
        Ok(IsolationForest { trees, sample_size })
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// `E(h(x))`. Per-tree lengths are summed in sorted order so instances
    /// with the same multiset of path lengths get bit-identical means.
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        let mut lengths: Vec<f64> = self.trees.iter().map(|t| t.path_length(x)).collect();
        lengths.sort_by(f64::total_cmp);
        lengths.iter().sum::<f64>() / lengths.len() as f64
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        anomaly_score(self.mean_path_length(x), self.sample_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowScore {
    pub score: f64,
    pub mean_path: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub rows: Vec<RowScore>,
    /// Lowest flagged score.
    pub threshold: f64,
    pub n_flagged: usize,
    /// Effective per-tree subsample size, the `n` in `c(n)`.
    pub sample_size: usize,
    pub config: ForestConfig,
}

impl AnomalyReport {
    /// Re-applies rank thresholding at a different contamination without
    /// refitting; scores depend only on seed, tree count and subsample size.
    pub fn rethreshold(&self, contamination: f64) -> Result<Self, ForestError> {
        let config = self.config.with_contamination(contamination);
        config.validate()?;
        let mut rows = self.rows.clone();
        let (threshold, n_flagged) = apply_flags(&mut rows, contamination);
        Ok(AnomalyReport {
            rows,
            threshold,
            n_flagged,
            sample_size: self.sample_size,
            config,
        })
    }

    pub fn flagged_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.flag)
            .map(|(i, _)| i)
    }
}

fn apply_flags(rows: &mut [RowScore], contamination: f64) -> (f64, usize) {
    let k = flag_count(contamination, rows.len());
    let mut order: Vec<usize> = (0..rows.len()).collect();
    // Stable sort keeps earlier rows first among equal scores.
    order.sort_by(|&a, &b| rows[b].score.total_cmp(&rows[a].score));
    for r in rows.iter_mut() {
        r.flag = false;
    }
    for &i in &order[..k] {
        rows[i].flag = true;
    }
    (rows[order[k - 1]].score, k)
}

/// Fits a forest on `data` and scores every row of it.
pub fn score_all(data: &FeatureMatrix, config: &ForestConfig) -> Result<AnomalyReport, ForestError> {
    let forest = IsolationForest::fit(data, config)?;
    let mut rows: Vec<RowScore> = (0..data.n_rows())
        .map(|i| {
            let mean_path = forest.mean_path_length(data.row(i));
            RowScore {
                score: anomaly_score(mean_path, forest.sample_size),
                mean_path,
                flag: false,
            }
        })
        .collect();
    let (threshold, n_flagged) = apply_flags(&mut rows, config.contamination);
    Ok(AnomalyReport {
        rows,
        threshold,
        n_flagged,
        sample_size: forest.sample_size,
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn c_of_small_n() {
        assert_eq!(expected_path_c(0), 0.0);
        assert_eq!(expected_path_c(1), 0.0);
        // 2 (ln 1 + γ) - 1
        assert!((expected_path_c(2) - 0.1544313).abs() < 1e-6);
        assert_eq!(expected_path_c(2), C_2);
    }

    #[test]
    fn c_of_256() {
        let direct = 2.0 * (255f64.ln() + 0.5772156649) - 2.0 * 255.0 / 256.0;
        assert!((expected_path_c(256) - 10.24477).abs() < 1e-4);
        assert_eq!(expected_path_c(256), direct);
    }

    #[test]
    fn c_of_4_for_root_leaf() {
        let direct = 2.0 * (3f64.ln() + 0.5772156649) - 1.5;
        assert_eq!(expected_path_c(4), direct);
    }

    #[test]
    fn score_anchor_points() {
        let n = 256;
        let c = expected_path_c(n);
        assert_eq!(anomaly_score(c, n), 0.5);
        assert_eq!(anomaly_score(0.0, n), 1.0);
        assert_eq!(anomaly_score(2.0 * c, n), 0.25);
    }

    #[test]
    fn c_increasing_up_to_a_million() {
        let mut prev = expected_path_c(2);
        assert!(prev > 0.0);
        for n in 3..=1_000_000 {
            let c = expected_path_c(n);
            assert!(c > prev, "c({n}) = {c} not above c({}) = {prev}", n - 1);
            prev = c;
        }
    }

    #[test]
    fn flag_count_guard() {
        assert_eq!(flag_count(0.01, 100), 1);
        assert_eq!(flag_count(0.005, 1005), 6);
        assert_eq!(flag_count(0.05, 20), 1);
        assert_eq!(flag_count(0.3, 7), 3);
        assert_eq!(flag_count(0.001, 10), 1);
    }

    #[test]
    fn too_few_rows() {
        let data = FeatureMatrix::from_column(&[1.0]).unwrap();
        assert_eq!(
            score_all(&data, &ForestConfig::default()).unwrap_err(),
            ForestError::TooFewRows(1)
        );
    }

    #[test]
    fn invalid_configs() {
        let base = ForestConfig::default();
        for bad in [
            base.with_contamination(0.0),
            base.with_contamination(0.5),
            base.with_contamination(f64::NAN),
            ForestConfig { n_trees: 0, ..base },
            ForestConfig { subsample_size: 1, ..base },
        ] {
            assert!(matches!(bad.validate(), Err(ForestError::InvalidConfig(_))));
        }
        assert!(base.within_policy());
        assert!(!base.with_contamination(0.1).within_policy());
    }

    #[test]
    fn matrix_validation() {
        assert!(FeatureMatrix::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(FeatureMatrix::new(vec![1.0, f64::NAN], 1).is_err());
        assert!(FeatureMatrix::new(vec![], 0).is_err());
        assert!(FeatureMatrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn identical_rows_flag_first_indices() {
        let data = FeatureMatrix::from_column(&[7.0; 50]).unwrap();
        let report = score_all(&data, &ForestConfig::default().with_contamination(0.05)).unwrap();
        let first = report.rows[0].score;
        assert!(report.rows.iter().all(|r| r.score == first));
        assert_eq!(report.flagged_indices().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn same_seed_same_report() {
        let values: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64).collect();
        let data = FeatureMatrix::from_column(&values).unwrap();
        let cfg = ForestConfig::default().with_seed(7);
        let a = score_all(&data, &cfg).unwrap();
        let b = score_all(&data, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = score_all(&data, &cfg.with_seed(8)).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn outlier_scores_highest() {
        let mut values: Vec<f64> = (0..200).map(|i| (i % 20) as f64 * 0.1).collect();
        values.push(50.0);
        let data = FeatureMatrix::from_column(&values).unwrap();
        // ceil(0.004 * 201) = 1 flag.
        let report = score_all(&data, &ForestConfig::default().with_contamination(0.004)).unwrap();
        assert_eq!(report.flagged_indices().collect::<Vec<_>>(), vec![200]);
        assert!(report.rows[200].score > 0.6);
    }

    #[test]
    fn rethreshold_matches_fresh_scoring() {
        let values: Vec<f64> = (0..400).map(|i| ((i * 7919) % 997) as f64).collect();
        let data = FeatureMatrix::from_column(&values).unwrap();
        let cfg = ForestConfig::default().with_contamination(0.01);
        let base = score_all(&data, &cfg).unwrap();
        for c in default_grid() {
            let fresh = score_all(&data, &cfg.with_contamination(c)).unwrap();
            assert_eq!(base.rethreshold(c).unwrap(), fresh);
        }
    }

    fn tree_sound(tree: &IsolationTree, data: &FeatureMatrix, sample: &[usize]) -> bool {
        let leaves: Vec<_> = tree.leaves().collect();
        leaves.iter().all(|&(count, depth)| count >= 1 && depth <= tree.max_depth())
            && leaves.iter().map(|l| l.0).sum::<usize>() == sample.len()
            && check_splits(tree, data, sample.to_vec(), 0)
    }

    fn check_splits(tree: &IsolationTree, data: &FeatureMatrix, rows: Vec<usize>, id: usize) -> bool {
        match tree.nodes()[id] {
            Node::Leaf { count, .. } => count == rows.len(),
            Node::Split { feature, value, left, right } => {
                let vals: Vec<f64> = rows.iter().map(|&r| data.get(r, feature)).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| data.get(r, feature) < value);
                value > lo && value < hi
                    && check_splits(tree, data, l, left)
                    && check_splits(tree, data, r, right)
            }
        }
    }

    proptest! {
        #[test]
        fn trees_are_sound(
            rows in prop::collection::vec(prop::collection::vec(-5i32..5, 2), 2..120),
            seed in any::<u64>(),
        ) {
            let data = FeatureMatrix::from_rows(
                rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
            ).unwrap();
            let forest = IsolationForest::fit(
                &data,
                &ForestConfig { n_trees: 5, subsample_size: 64, ..ForestConfig::default() }.with_seed(seed),
            ).unwrap();
            let n = data.n_rows();
            let sample_size = 64.min(n);
            for (i, tree) in forest.trees().iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, i));
                let mut sample = rand::seq::index::sample(&mut rng, n, sample_size).into_vec();
                sample.sort_unstable();
                prop_assert!(tree_sound(tree, &data, &sample));
            }
        }

        #[test]
        fn score_is_strictly_decreasing_in_path(a in 0.0f64..30.0, b in 0.0f64..30.0, n in 2usize..5000) {
            prop_assume!((a - b).abs() > 1e-9);
            let (sa, sb) = (anomaly_score(a, n), anomaly_score(b, n));
            prop_assert!(sa > 0.0 && sa <= 1.0);
            prop_assert_eq!(a < b, sa > sb);
        }
    }
}
