//! Boosted regression-tree surrogate over configurations, hold-out R²
//! scoring, permutation feature importance, and importance-driven
//! search-space reduction.
//!
//! The booster is plain least-squares gradient boosting with exact
//! greedy splits and no subsampling, so fits are deterministic for a
//! given input order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Configuration, Parameter, ParameterSpace, SpaceError};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("target has zero variance")]
    DegenerateTarget,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("model has {model} features but row has {row}")]
    FeatureMismatch { model: usize, row: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// True if any split in the tree tests the given feature.
    pub fn uses_feature(&self, feature: usize) -> bool {
        self.nodes.iter().any(|n| matches!(n, TreeNode::Split { feature: f, .. } if *f == feature))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionForest {
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub num_features: usize,
    pub trees: Vec<RegressionTree>,
}

impl RegressionForest {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.base_prediction
            + self.learning_rate
                * self
                    .trees
                    .iter()
                    .map(|t| t.predict(row))
                    .sum::<f64>()
    }

    pub fn uses_feature(&self, feature: usize) -> bool {
        self.trees.iter().any(|t| t.uses_feature(feature))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitParams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            trees: 200,
            depth: 6,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    residuals: &'a [f64],
    max_depth: usize,
    nodes: Vec<TreeNode>,
}

impl<'a> TreeBuilder<'a> {
    /// Finds the SSE-minimizing split of `rows` over all features.
    /// Thresholds sit halfway between two observed values; ties break
    /// to the lowest feature index, then the lowest threshold.
    fn best_split(&self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let num_features = self.features[0].len();
        let total_sum: f64 = rows.iter().map(|&r| self.residuals[r]).sum();
        let total_sq: f64 = rows
            .iter()
            .map(|&r| self.residuals[r] * self.residuals[r])
            .sum();
        let n = rows.len() as f64;
        let base_sse = total_sq - total_sum * total_sum / n;
        let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, gain)
        let mut sorted = rows.to_vec();
        for feature in 0..num_features {
            sorted.sort_by(|&a, &b| {
                self.features[a][feature]
                    .partial_cmp(&self.features[b][feature])
                    .unwrap()
            });
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for i in 0..sorted.len() - 1 {
                let r = self.residuals[sorted[i]];
                left_sum += r;
                left_sq += r * r;
                let here = self.features[sorted[i]][feature];
                let next = self.features[sorted[i + 1]][feature];
                if here == next {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = n - nl;
                let right_sum = total_sum - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / nl)
                    + (right_sq - right_sum * right_sum / nr);
                let gain = base_sse - sse;
                let threshold = here + (next - here) / 2.0;
                let better = match best {
                    None => gain > 1e-12,
                    Some((bf, bt, bg)) => {
                        gain > bg + 1e-12
                            || ((gain - bg).abs() <= 1e-12
                                && (feature < bf || (feature == bf && threshold < bt)))
                    }
                };
                if better {
                    best = Some((feature, threshold, gain));
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mean = rows.iter().map(|&r| self.residuals[r]).sum::<f64>() / rows.len() as f64;
        if depth >= self.max_depth || rows.len() < 2 {
            self.nodes.push(TreeNode::Leaf { value: mean });
            return self.nodes.len() - 1;
        }
        let Some((feature, threshold, _)) = self.best_split(&rows) else {
            self.nodes.push(TreeNode::Leaf { value: mean });
            return self.nodes.len() - 1;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.features[r][feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 }); // placeholder
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[slot] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Converts (configuration, objective) pairs into a numeric feature
/// matrix plus target vector. Features are the raw parameter values.
pub fn to_rows(train: &[(Configuration, f64)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let features = train
        .iter()
        .map(|(c, _)| c.values.iter().map(|&v| v as f64).collect())
        .collect();
    let targets = train.iter().map(|&(_, t)| t).collect();
    (features, targets)
}

/// Least-squares gradient boosting on raw numeric parameter values.
/// Deterministic for a given input (the seed is recorded for API
/// symmetry; no subsampling takes place).
pub fn fit(
    features: &[Vec<f64>],
    targets: &[f64],
    params: &FitParams,
) -> Result<RegressionForest, SurrogateError> {
    if features.len() < 2 {
        return Err(SurrogateError::TooFewRows(features.len()));
    }
    if variance(targets) == 0.0 {
        return Err(SurrogateError::DegenerateTarget);
    }
    let base = targets.iter().sum::<f64>() / targets.len() as f64;
    let mut predictions = vec![base; targets.len()];
    let mut trees = Vec::with_capacity(params.trees);
    let all_rows: Vec<usize> = (0..features.len()).collect();
    for _ in 0..params.trees {
        let residuals: Vec<f64> = targets
            .iter()
            .zip(&predictions)
            .map(|(t, p)| t - p)
            .collect();
        let mut builder = TreeBuilder {
            features,
            residuals: &residuals,
            max_depth: params.depth,
            nodes: Vec::new(),
        };
        builder.build(all_rows.clone(), 0);
        let tree = RegressionTree {
            nodes: builder.nodes,
        };
        for (i, row) in features.iter().enumerate() {
            predictions[i] += params.learning_rate * tree.predict(row);
        }
        trees.push(tree);
    }
    Ok(RegressionForest {
        base_prediction: base,
        learning_rate: params.learning_rate,
        num_features: features[0].len(),
        trees,
    })
}

/// Coefficient of determination, 1 - SS_res / SS_tot, on a hold-out set.
pub fn r2(
    model: &RegressionForest,
    features: &[Vec<f64>],
    targets: &[f64],
) -> Result<f64, SurrogateError> {
    if targets.is_empty() || variance(targets) == 0.0 {
        return Err(SurrogateError::DegenerateTarget);
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (row, &t) in features.iter().zip(targets) {
        if row.len() != model.num_features {
            return Err(SurrogateError::FeatureMismatch {
                model: model.num_features,
                row: row.len(),
            });
        }
        let p = model.predict(row);
        ss_res += (t - p) * (t - p);
        ss_tot += (t - mean) * (t - mean);
    }
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceMap {
    /// Mean R² drop per feature, aligned with parameter order.
    pub importances: Vec<f64>,
    pub r2_baseline: f64,
    pub repeats: usize,
}

impl ImportanceMap {
    /// A map that reports zero importance for every parameter.
    pub fn empty(num_features: usize) -> Self {
        ImportanceMap {
            importances: vec![0.0; num_features],
            r2_baseline: 0.0,
            repeats: 0,
        }
    }
}

/// Shuffle-only permutation feature importance: for each feature, the
/// mean over `repeats` shuffles of (baseline R² - shuffled R²) on the
/// hold-out set. No retraining. Deterministic given `seed`.
pub fn permutation_importance(
    model: &RegressionForest,
    features: &[Vec<f64>],
    targets: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceMap, SurrogateError> {
    let baseline = r2(model, features, targets)?;
    let num_features = model.num_features;
    let n = features.len();
    let mut importances = vec![0.0; num_features];
    for feature in 0..num_features {
        // A feature no split ever tests cannot change predictions;
        // skip the shuffles so its importance is exactly zero.
        if !model.uses_feature(feature) {
            continue;
        }
        let mut total_drop = 0.0;
        for repeat in 0..repeats {
            let mut rng = ChaCha12Rng::seed_from_u64(
                seed ^ (feature as u64) << 32 ^ repeat as u64,
            );
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = features
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let mut row = row.clone();
                    row[feature] = features[order[i]][feature];
                    row
                })
                .collect();
            total_drop += baseline - r2(model, &shuffled, targets)?;
        }
        importances[feature] = total_drop / repeats as f64;
    }
    Ok(ImportanceMap {
        importances,
        r2_baseline: baseline,
        repeats,
    })
}

/// Deterministic 80/20 train/hold-out split by seeded shuffle.
pub fn train_holdout_split(
    rows: &[(Configuration, f64)],
    seed: u64,
) -> (Vec<(Configuration, f64)>, Vec<(Configuration, f64)>) {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = (rows.len() * 4) / 5;
    let train = order[..cut].iter().map(|&i| rows[i].clone()).collect();
    let holdout = order[cut..].iter().map(|&i| rows[i].clone()).collect();
    (train, holdout)
}

/// Shrinks the space guided by importance: parameters whose
/// max-over-devices importance reaches `threshold` keep their full
/// domain; every other parameter's domain collapses to the values it
/// takes in the per-device anchor configurations. An empty importance
/// slice leaves the space unchanged. Constraints are inherited.
pub fn reduce_space(
    space: &ParameterSpace,
    importances: &[&ImportanceMap],
    threshold: f64,
    anchors: &[&Configuration],
) -> Result<ParameterSpace, SpaceError> {
    let constraints: Vec<String> = space
        .constraints()
        .iter()
        .map(|c| c.source.clone())
        .collect();
    let mut parameters = Vec::with_capacity(space.parameters().len());
    for (i, p) in space.parameters().iter().enumerate() {
        let max_importance = importances
            .iter()
            .map(|m| m.importances[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let keep_full = importances.is_empty() || max_importance >= threshold;
        let values = if keep_full {
            p.values.clone()
        } else {
            let mut anchor_values: Vec<i64> =
                anchors.iter().map(|a| a.values[i]).collect();
            anchor_values.sort_unstable();
            anchor_values.dedup();
            anchor_values
        };
        parameters.push(Parameter {
            name: p.name.clone(),
            values,
        });
    }
    ParameterSpace::new(space.name().to_string(), parameters, &constraints)
}
