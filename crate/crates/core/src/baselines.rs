//! Reference classifiers for comparison with the network.
//!
//! All four are written from scratch and are deterministic in
//! `(data, config, seed)`:
//!
//! | model | training |
//! |---|---|
//! | [`fit_logistic`] | full-batch gradient descent on L2-penalized log-loss |
//! | [`fit_sgd_linear`] | per-sample SGD on log-loss, step size `η₀ / t` |
//! | [`fit_tree`] | CART with Gini impurity and midpoint thresholds |
//! | [`fit_forest`] | bagged CART trees with per-split feature subsampling |
//!
//! Linear models start from zero weights and the prior log-odds as bias, so
//! an untrained model predicts the majority class everywhere.

use std::cmp::Ordering;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::nn::{self, MlpParams, NnError, TrainConfig};
use crate::seed::{self, Stream};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("training set must contain both classes")]
    DegenerateTrainingSet,
    #[error("{0} rows but {1} labels")]
    ShapeMismatch(usize, usize),
    #[error("model has {expected} input columns, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("predict called before fit")]
    NotFitted,
    #[error("empty training set")]
    Empty,
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Common interface over every comparison method.
pub trait Classifier {
    fn name(&self) -> &'static str;
    fn fit(&mut self, x: &Matrix, y: &[u8], seed: u64) -> Result<(), BaselineError>;
    fn predict(&self, x: &Matrix) -> Result<Vec<u8>, BaselineError>;
}

fn check_xy(x: &Matrix, y: &[u8]) -> Result<(), BaselineError> {
    if x.rows() != y.len() {
        return Err(BaselineError::ShapeMismatch(x.rows(), y.len()));
    }
    if y.is_empty() {
        return Err(BaselineError::Empty);
    }
    Ok(())
}

fn check_two_classes(y: &[u8]) -> Result<(), BaselineError> {
    if y.contains(&0) && y.contains(&1) {
        Ok(())
    } else {
        Err(BaselineError::DegenerateTrainingSet)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−[y ln σ(z) + (1−y) ln(1−σ(z))]`, computed without cancellation.
fn log_loss(z: f64, y: u8) -> f64 {
    let softplus = |t: f64| {
        if t > 0.0 {
            t + (-t).exp().ln_1p()
        } else {
            t.exp().ln_1p()
        }
    };
    if y == 1 {
        softplus(-z)
    } else {
        softplus(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    fn prior(x: &Matrix, y: &[u8]) -> LinearModel {
        let pos = y.iter().filter(|&&v| v == 1).count() as f64;
        let neg = y.len() as f64 - pos;
        LinearModel {
            weights: vec![0.0; x.cols()],
            bias: (pos / neg).ln(),
        }
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(row)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| sigmoid(self.decision(r))).collect()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>, BaselineError> {
        if x.cols() != self.weights.len() {
            return Err(BaselineError::WidthMismatch {
                expected: self.weights.len(),
                got: x.cols(),
            });
        }
        Ok(x.iter_rows()
            .map(|r| u8::from(self.decision(r) > 0.0))
            .collect())
    }

    /// Mean log-loss plus `λ/2 ‖w‖²`.
    pub fn objective(&self, x: &Matrix, y: &[u8], l2: f64) -> f64 {
        let data: f64 = x
            .iter_rows()
            .zip(y)
            .map(|(r, &t)| log_loss(self.decision(r), t))
            .sum();
        data / y.len() as f64 + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.1,
            iterations: 500,
            l2: 1e-3,
        }
    }
}

/// Full-batch gradient descent; also returns the objective before each
/// iteration and after the last.
pub fn fit_logistic_traced(
    x: &Matrix,
    y: &[u8],
    cfg: &LogisticConfig,
) -> Result<(LinearModel, Vec<f64>), BaselineError> {
    check_xy(x, y)?;
    check_two_classes(y)?;
    let n = y.len() as f64;
    let mut model = LinearModel::prior(x, y);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(model.objective(x, y, cfg.l2));
    for _ in 0..cfg.iterations {
        let mut gw = vec![0.0; x.cols()];
        let mut gb = 0.0;
        for (row, &t) in x.iter_rows().zip(y) {
            let err = sigmoid(model.decision(row)) - f64::from(t);
            gb += err;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += err * v;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * (g / n + cfg.l2 * *w);
        }
        model.bias -= cfg.learning_rate * gb / n;
        trace.push(model.objective(x, y, cfg.l2));
    }
    Ok((model, trace))
}

pub fn fit_logistic(
    x: &Matrix,
    y: &[u8],
    cfg: &LogisticConfig,
) -> Result<LinearModel, BaselineError> {
    fit_logistic_traced(x, y, cfg).map(|(m, _)| m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    /// Step size of the first update; step `t` uses `eta0 / t`.
    pub eta0: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            eta0: 1.0,
            epochs: 5,
            l2: 1e-4,
        }
    }
}

/// Per-sample SGD on log-loss, rows reshuffled every epoch.
pub fn fit_sgd_linear(
    x: &Matrix,
    y: &[u8],
    cfg: &SgdConfig,
    seed: u64,
) -> Result<LinearModel, BaselineError> {
    check_xy(x, y)?;
    check_two_classes(y)?;
    let mut rng = seed::rng(seed, Stream::Sgd);
    let mut model = LinearModel::prior(x, y);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = cfg.eta0 / t as f64;
            let row = x.row(i);
            let err = sigmoid(model.decision(row)) - f64::from(y[i]);
            for (w, v) in model.weights.iter_mut().zip(row) {
                *w -= eta * (err * v + cfg.l2 * *w);
            }
            model.bias -= eta * err;
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: u8,
        counts: [u64; 2],
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<u8> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        match self {
            TreeNode::Leaf { .. } => vec![self],
            TreeNode::Split { left, right, .. } => {
                let mut out = left.leaves();
                out.extend(right.leaves());
                out
            }
        }
    }

    /// Largest feature index referenced by any split.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature,
                left,
                right,
                ..
            } => Some(
                (*feature)
                    .max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            TreeNode::Leaf { .. } => true,
            TreeNode::Split {
                threshold,
                left,
                right,
                ..
            } => threshold.is_finite() && left.is_finite() && right.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    /// Minimum rows on each side of a split.
    pub min_leaf: usize,
    /// Features drawn per split; `None` considers every feature.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 5,
            min_leaf: 20,
            max_features: None,
        }
    }
}

/// Split quality `Σ_side (c₀² + c₁²) / n_side` as an exact fraction.
/// Larger is better; it is the weighted Gini impurity of the children,
/// rescaled and negated.
#[derive(Debug, Clone, Copy)]
pub struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    pub fn of_children(left: [u64; 2], right: [u64; 2]) -> SplitScore {
        let sq =
            |c: [u64; 2]| u128::from(c[0]) * u128::from(c[0]) + u128::from(c[1]) * u128::from(c[1]);
        let (nl, nr) = (
            u128::from(left[0] + left[1]),
            u128::from(right[0] + right[1]),
        );
        SplitScore {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    /// Score of leaving the node unsplit.
    pub fn of_parent(counts: [u64; 2]) -> SplitScore {
        let sq = u128::from(counts[0]).pow(2) + u128::from(counts[1]).pow(2);
        SplitScore {
            num: sq,
            den: u128::from(counts[0] + counts[1]),
        }
    }

    pub fn compare(&self, other: &SplitScore) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }

    /// Gini gain as a float, for reporting.
    pub fn gain_over(&self, parent: [u64; 2]) -> f64 {
        let n = (parent[0] + parent[1]) as f64;
        (self.num as f64 / self.den as f64 - SplitScore::of_parent(parent).num as f64 / n) / n
    }
}

pub fn gini(counts: [u64; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (counts[0] as f64 / n, counts[1] as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

/// Midpoint of consecutive distinct values, kept strictly below `hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
}

fn class_counts(y: &[u8], rows: &[usize]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for &i in rows {
        c[usize::from(y[i])] += 1;
    }
    c
}

/// Best Gini split of `rows` over `features` (ascending). Ties keep the
/// lowest feature, then the lowest threshold. `None` when no split gains.
pub fn best_split(
    x: &Matrix,
    y: &[u8],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let parent = class_counts(y, rows);
    let min_leaf = min_leaf.max(1);
    let mut best: Option<(SplitScore, BestSplit)> = None;
    let mut sorted: Vec<(f64, u8)> = Vec::with_capacity(rows.len());
    for &f in features {
        sorted.clear();
        sorted.extend(rows.iter().map(|&i| (x.get(i, f), y[i])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u64; 2];
        for i in 0..sorted.len().saturating_sub(1) {
            left[usize::from(sorted[i].1)] += 1;
            let (v, next) = (sorted[i].0, sorted[i + 1].0);
            if v == next {
                continue;
            }
            let n_left = i + 1;
            if n_left < min_leaf || sorted.len() - n_left < min_leaf {
                continue;
            }
            let right = [parent[0] - left[0], parent[1] - left[1]];
            let score = SplitScore::of_children(left, right);
            if best
                .as_ref()
                .is_none_or(|(b, _)| score.compare(b) == Ordering::Greater)
            {
                best = Some((
                    score,
                    BestSplit {
                        feature: f,
                        threshold: midpoint(v, next),
                    },
                ));
            }
        }
    }
    best.filter(|(s, _)| s.compare(&SplitScore::of_parent(parent)) == Ordering::Greater)
        .map(|(_, b)| b)
}

fn leaf(counts: [u64; 2]) -> TreeNode {
    TreeNode::Leaf {
        class: u8::from(counts[1] > counts[0]),
        counts,
    }
}

fn grow(
    x: &Matrix,
    y: &[u8],
    rows: &[usize],
    depth: usize,
    cfg: &TreeConfig,
    rng: &mut Option<ChaCha8Rng>,
) -> TreeNode {
    let counts = class_counts(y, rows);
    if depth >= cfg.max_depth
        || rows.len() < cfg.min_leaf.max(1)
        || counts[0] == 0
        || counts[1] == 0
    {
        return leaf(counts);
    }
    let d = x.cols();
    let features: Vec<usize> = match (cfg.max_features, rng.as_mut()) {
        (Some(k), Some(rng)) if k < d => {
            let mut f = index::sample(rng, d, k.max(1)).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..d).collect(),
    };
    let Some(split) = best_split(x, y, rows, &features, cfg.min_leaf) else {
        return leaf(counts);
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&i| x.get(i, split.feature) <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(x, y, &l, depth + 1, cfg, rng)),
        right: Box::new(grow(x, y, &r, depth + 1, cfg, rng)),
    }
}

pub fn fit_tree(x: &Matrix, y: &[u8], cfg: &TreeConfig) -> Result<TreeNode, BaselineError> {
    check_xy(x, y)?;
    let rows: Vec<usize> = (0..y.len()).collect();
    Ok(grow(x, y, &rows, 0, cfg, &mut None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// `None` means `⌊√d⌋`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 1,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
}

impl Forest {
    /// Majority vote; ties go to class 0.
    pub fn predict(&self, x: &Matrix) -> Vec<u8> {
        let mut votes = vec![0usize; x.rows()];
        for tree in &self.trees {
            for (v, p) in votes.iter_mut().zip(tree.predict(x)) {
                *v += usize::from(p);
            }
        }
        votes
            .into_iter()
            .map(|v| u8::from(2 * v > self.trees.len()))
            .collect()
    }
}

/// Trees are grown in parallel, each from its own seed stream, and stored
/// by index.
pub fn fit_forest(
    x: &Matrix,
    y: &[u8],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<Forest, BaselineError> {
    check_xy(x, y)?;
    let d = x.cols();
    let tree_cfg = TreeConfig {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        max_features: Some(
            cfg.max_features
                .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1)),
        ),
    };
    let n = y.len();
    let trees = (0..cfg.n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed, Stream::Tree(t));
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(x, y, &rows, 0, &tree_cfg, &mut Some(rng))
        })
        .collect();
    Ok(Forest { trees })
}

#[derive(Debug, Clone, Default)]
pub struct LogisticRegression {
    pub config: LogisticConfig,
    pub model: Option<LinearModel>,
}

impl Classifier for LogisticRegression {
    fn name(&self) -> &'static str {
        "LogisticRegression"
    }

    fn fit(&mut self, x: &Matrix, y: &[u8], _seed: u64) -> Result<(), BaselineError> {
        self.model = Some(fit_logistic(x, y, &self.config)?);
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<u8>, BaselineError> {
        self.model
            .as_ref()
            .ok_or(BaselineError::NotFitted)?
            .predict(x)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SgdClassifier {
    pub config: SgdConfig,
    pub model: Option<LinearModel>,
}

impl Classifier for SgdClassifier {
    fn name(&self) -> &'static str {
        "StochasticGradientDescent"
    }

    fn fit(&mut self, x: &Matrix, y: &[u8], seed: u64) -> Result<(), BaselineError> {
        self.model = Some(fit_sgd_linear(x, y, &self.config, seed)?);
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<u8>, BaselineError> {
        self.model
            .as_ref()
            .ok_or(BaselineError::NotFitted)?
            .predict(x)
    }
}

fn check_width(expected: usize, x: &Matrix) -> Result<(), BaselineError> {
    if x.cols() != expected {
        return Err(BaselineError::WidthMismatch {
            expected,
            got: x.cols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct DecisionTree {
    pub config: TreeConfig,
    pub root: Option<(TreeNode, usize)>,
}

impl Classifier for DecisionTree {
    fn name(&self) -> &'static str {
        "DecisionTreeClassifier"
    }

    fn fit(&mut self, x: &Matrix, y: &[u8], _seed: u64) -> Result<(), BaselineError> {
        self.root = Some((fit_tree(x, y, &self.config)?, x.cols()));
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<u8>, BaselineError> {
        let (root, width) = self.root.as_ref().ok_or(BaselineError::NotFitted)?;
        check_width(*width, x)?;
        Ok(root.predict(x))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub forest: Option<(Forest, usize)>,
}

impl Classifier for RandomForest {
    fn name(&self) -> &'static str {
        "RandomForestClassifier"
    }

    fn fit(&mut self, x: &Matrix, y: &[u8], seed: u64) -> Result<(), BaselineError> {
        self.forest = Some((fit_forest(x, y, &self.config, seed)?, x.cols()));
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<u8>, BaselineError> {
        let (forest, width) = self.forest.as_ref().ok_or(BaselineError::NotFitted)?;
        check_width(*width, x)?;
        Ok(forest.predict(x))
    }
}

/// The network behind the [`Classifier`] interface. `fit` overrides the
/// config seed with the one it is given.
#[derive(Debug, Clone, Default)]
pub struct MlpClassifier {
    pub config: TrainConfig,
    pub params: Option<MlpParams>,
    pub history: Option<nn::TrainHistory>,
}

impl Classifier for MlpClassifier {
    fn name(&self) -> &'static str {
        "MLP"
    }

    fn fit(&mut self, x: &Matrix, y: &[u8], seed: u64) -> Result<(), BaselineError> {
        check_xy(x, y)?;
        let cfg = TrainConfig {
            seed,
            ..self.config
        };
        let data = crate::pipeline::EncodedDataset::new(x.clone(), y.to_vec());
        let (params, history) = nn::train(&data, &cfg)?;
        self.params = Some(params);
        self.history = Some(history);
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<u8>, BaselineError> {
        Ok(nn::predict(
            self.params.as_ref().ok_or(BaselineError::NotFitted)?,
            x,
        )?)
    }
}
