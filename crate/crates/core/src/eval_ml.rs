//! Interpretable classifiers over expert-labeled pairs: L2-regularized
//! logistic regression, CART random forests, stratified cross-validation and
//! feature-importance reports.
//!
//! Features are `(sem_avg, nutr_avg, lexical)` taken from the score table,
//! used unstandardized.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::ScoreTable;

pub const FEATURE_NAMES: [&str; 3] = ["sem_avg", "nutr_avg", "lexical"];
pub const NUM_FEATURES: usize = 3;

pub type Features = [f64; NUM_FEATURES];

#[derive(Debug, Error)]
pub enum MlError {
    #[error("training data holds a single class")]
    SingleClass,
    #[error("need at least {needed} rows, have {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("feature {feature} = {value} outside [0, 1] for pair ({main_id}, {secondary_id})")]
    FeatureRange { main_id: String, secondary_id: String, feature: &'static str, value: f64 },
    #[error("class {class} has {count} rows, fewer than {folds} folds")]
    Stratify { class: u8, count: usize, folds: usize },
    #[error("importances are all zero")]
    AllZero,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ground truth line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub main_id: String,
    pub secondary_id: String,
    pub features: Features,
    /// 1 = similar, 0 = not similar.
    pub label: u8,
}

impl LabeledPair {
    pub fn new(main_id: impl Into<String>, secondary_id: impl Into<String>, features: Features, label: bool) -> Result<Self, MlError> {
        let (main_id, secondary_id) = (main_id.into(), secondary_id.into());
        for (i, &v) in features.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(MlError::FeatureRange { main_id, secondary_id, feature: FEATURE_NAMES[i], value: v });
            }
        }
        Ok(Self { main_id, secondary_id, features, label: label as u8 })
    }
}

fn check_classes(data: &[LabeledPair]) -> Result<(), MlError> {
    let ones = data.iter().filter(|p| p.label == 1).count();
    if ones == 0 || ones == data.len() {
        return Err(MlError::SingleClass);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// L2 penalty on the coefficients (not the intercept), added to the
    /// summed log-loss.
    pub l2_strength: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient norm.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { l2_strength: 1.0, max_iter: 100, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Features,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn score(&self, x: &Features) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn probability(&self, x: &Features) -> f64 {
        sigmoid(self.score(x))
    }

    pub fn predict(&self, x: &Features) -> u8 {
        (self.probability(x) >= 0.5) as u8
    }
}

/// Probability and label (threshold 0.5).
pub fn predict_logistic(model: &LogisticModel, x: &Features) -> (f64, u8) {
    let p = model.probability(x);
    (p, (p >= 0.5) as u8)
}

const P: usize = NUM_FEATURES + 1;

// theta = [intercept, w0, w1, w2]
fn penalized_loss(data: &[LabeledPair], theta: &[f64; P], l2: f64) -> f64 {
    let mut loss = 0.0;
    for d in data {
        let z = theta[0] + (0..NUM_FEATURES).map(|j| theta[j + 1] * d.features[j]).sum::<f64>();
        // log(1 + e^z) - y z, computed stably.
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        loss += softplus - d.label as f64 * z;
    }
    loss + 0.5 * l2 * theta[1..].iter().map(|w| w * w).sum::<f64>()
}

/// Newton's method with backtracking on the penalized log-loss.
pub fn train_logistic(data: &[LabeledPair], config: &LogisticConfig) -> Result<LogisticModel, MlError> {
    if data.len() < 10 {
        return Err(MlError::TooFewRows { needed: 10, have: data.len() });
    }
    check_classes(data)?;
    let valid = config.l2_strength >= 0.0 && config.tolerance > 0.0;
    if !valid {
        return Err(MlError::Config("l2_strength must be >= 0 and tolerance > 0".into()));
    }
    let l2 = config.l2_strength;
    let mut theta = [0.0; P];
    let mut loss = penalized_loss(data, &theta, l2);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        let mut grad = [0.0; P];
        let mut hess = [[0.0; P]; P];
        for d in data {
            let x = [1.0, d.features[0], d.features[1], d.features[2]];
            let z: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = sigmoid(z);
            let w = p * (1.0 - p);
            for i in 0..P {
                grad[i] += (p - d.label as f64) * x[i];
                for j in 0..P {
                    hess[i][j] += w * x[i] * x[j];
                }
            }
        }
        for i in 1..P {
            grad[i] += l2 * theta[i];
            hess[i][i] += l2;
        }
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let step = match solve(hess, grad) {
            Some(s) => s,
            None => grad,
        };
        let mut t = 1.0;
        loop {
            let mut candidate = theta;
            for i in 0..P {
                candidate[i] -= t * step[i];
            }
            let next = penalized_loss(data, &candidate, l2);
            if next <= loss || t < 1e-10 {
                theta = candidate;
                loss = next;
                break;
            }
            t *= 0.5;
        }
    }
    Ok(LogisticModel {
        coefficients: [theta[1], theta[2], theta[3]],
        intercept: theta[0],
        iterations,
        converged,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: [[f64; P]; P], mut b: [f64; P]) -> Option<[f64; P]> {
    for col in 0..P {
        let pivot = (col..P).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..P {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; P];
    for row in (0..P).rev() {
        let s: f64 = (row + 1..P).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Decision trees and forests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Features examined per split before falling back to the rest.
    pub max_features: usize,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_features: NUM_FEATURES, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { class: u8 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    /// Weighted Gini decrease per feature, unnormalized.
    impurity_decrease: Features,
}

fn gini(ones: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = ones as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl DecisionTree {
    /// Grows a CART tree on `sample` (row indices into `data`, repeats allowed).
    pub fn fit(data: &[LabeledPair], sample: &[usize], config: &TreeConfig, rng: &mut impl Rng) -> Result<Self, MlError> {
        if config.max_features == 0 || config.max_features > NUM_FEATURES || config.min_leaf == 0 {
            return Err(MlError::Config(format!("max_features must be in 1..={NUM_FEATURES} and min_leaf >= 1")));
        }
        if sample.is_empty() {
            return Err(MlError::TooFewRows { needed: 1, have: 0 });
        }
        let mut tree = DecisionTree { nodes: Vec::new(), impurity_decrease: [0.0; NUM_FEATURES] };
        tree.grow(data, sample.to_vec(), config, rng);
        Ok(tree)
    }

    fn grow(&mut self, data: &[LabeledPair], idx: Vec<usize>, config: &TreeConfig, rng: &mut impl Rng) -> usize {
        let id = self.nodes.len();
        let n = idx.len();
        let ones = idx.iter().filter(|&&i| data[i].label == 1).count();
        // Majority class; ties go to 0.
        let leaf = Node::Leaf { class: (2 * ones > n) as u8 };
        self.nodes.push(leaf);
        if ones == 0 || ones == n || n < 2 * config.min_leaf {
            return id;
        }
        let Some(split) = best_split(data, &idx, ones, config, rng) else {
            return id;
        };
        self.impurity_decrease[split.feature] += split.decrease;
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| data[i].features[split.feature] <= split.threshold);
        let left = self.grow(data, l, config, rng);
        let right = self.grow(data, r, config, rng);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }

    pub fn predict(&self, x: &Features) -> u8 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn impurity_decrease(&self) -> Features {
        self.impurity_decrease
    }
}

fn best_split(data: &[LabeledPair], idx: &[usize], ones: usize, config: &TreeConfig, rng: &mut impl Rng) -> Option<SplitChoice> {
    let mut order: Vec<usize> = (0..NUM_FEATURES).collect();
    order.shuffle(rng);
    let n = idx.len();
    let parent = n as f64 * gini(ones, n);
    let (drawn, rest) = order.split_at(config.max_features);
    let mut drawn = drawn.to_vec();
    drawn.sort_unstable();
    let mut best = scan_features(data, idx, &drawn, parent, config.min_leaf);
    // Keep looking through undrawn features until some valid split exists.
    for &f in rest {
        if best.is_some() {
            break;
        }
        best = scan_features(data, idx, &[f], parent, config.min_leaf);
    }
    best
}

/// Best split over `features` (ascending); ties keep the lower feature, then
/// the lower threshold.
fn scan_features(data: &[LabeledPair], idx: &[usize], features: &[usize], parent: f64, min_leaf: usize) -> Option<SplitChoice> {
    let n = idx.len();
    let total_ones = idx.iter().filter(|&&i| data[i].label == 1).count();
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        let mut sorted: Vec<(f64, u8)> = idx.iter().map(|&i| (data[i].features[f], data[i].label)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_ones = 0;
        for k in 0..n - 1 {
            left_ones += sorted[k].1 as usize;
            if sorted[k].0 == sorted[k + 1].0 {
                continue;
            }
            let nl = k + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let child = nl as f64 * gini(left_ones, nl) + nr as f64 * gini(total_ones - left_ones, nr);
            let decrease = parent - child;
            if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                let threshold = sorted[k].0 + (sorted[k + 1].0 - sorted[k].0) / 2.0;
                best = Some(SplitChoice { feature: f, threshold, decrease });
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_features: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { trees: 100, max_features: 1, min_leaf: 1, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    importances: Features,
}

impl RandomForest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Mean Gini importance, summing to 1.
    pub fn importances(&self) -> Features {
        self.importances
    }

    /// Majority vote over trees; ties go to 0.
    pub fn predict(&self, x: &Features) -> u8 {
        let votes = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        (2 * votes > self.trees.len()) as u8
    }
}

pub fn train_forest(data: &[LabeledPair], config: &ForestConfig) -> Result<RandomForest, MlError> {
    check_classes(data)?;
    if config.trees == 0 {
        return Err(MlError::Config("trees must be >= 1".into()));
    }
    let tree_config = TreeConfig { max_features: config.max_features, min_leaf: config.min_leaf };
    // Seeds are drawn up front so results do not depend on the thread count.
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..config.trees).map(|_| master.random()).collect();
    let n = data.len();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let sample: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::fit(data, &sample, &tree_config, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut importances = [0.0; NUM_FEATURES];
    for t in &trees {
        let raw = t.impurity_decrease();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            for (acc, v) in importances.iter_mut().zip(raw) {
                *acc += v / sum;
            }
        }
    }
    let total: f64 = importances.iter().sum();
    if total <= 0.0 {
        return Err(MlError::AllZero);
    }
    importances.iter_mut().for_each(|v| *v /= total);
    Ok(RandomForest { trees, importances })
}

// ---------------------------------------------------------------------------
// Models, cross-validation, importance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    Logistic(LogisticConfig),
    Forest(ForestConfig),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Logistic(_) => "logistic",
            ModelKind::Forest(_) => "forest",
        }
    }

    pub fn fit(&self, data: &[LabeledPair]) -> Result<TrainedModel, MlError> {
        Ok(match self {
            ModelKind::Logistic(c) => TrainedModel::Logistic(train_logistic(data, c)?),
            ModelKind::Forest(c) => TrainedModel::Forest(train_forest(data, c)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    Logistic(LogisticModel),
    Forest(RandomForest),
}

impl TrainedModel {
    pub fn predict(&self, x: &Features) -> u8 {
        match self {
            TrainedModel::Logistic(m) => m.predict(x),
            TrainedModel::Forest(f) => f.predict(x),
        }
    }

    /// Coefficients for logistic regression, Gini importances for forests.
    pub fn raw_importance(&self) -> Features {
        match self {
            TrainedModel::Logistic(m) => m.coefficients,
            TrainedModel::Forest(f) => f.importances(),
        }
    }

    pub fn importance_report(&self) -> Result<ImportanceReport, MlError> {
        let raw = self.raw_importance();
        let pct = normalized_importance(&raw)?;
        Ok(ImportanceReport {
            features: (0..NUM_FEATURES)
                .map(|i| FeatureImportance { name: FEATURE_NAMES[i].to_string(), raw: raw[i], percent: pct[i] })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub name: String,
    pub raw: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub features: Vec<FeatureImportance>,
}

/// `|v_i| / sum |v_j|` as percentages.
pub fn normalized_importance(raw: &[f64]) -> Result<Vec<f64>, MlError> {
    let total: f64 = raw.iter().map(|v| v.abs()).sum();
    if raw.is_empty() || total == 0.0 || !total.is_finite() {
        return Err(MlError::AllZero);
    }
    Ok(raw.iter().map(|v| 100.0 * v.abs() / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    pub fold_accuracies: Vec<f64>,
    pub accuracy_mean: f64,
    /// Population standard deviation across folds.
    pub accuracy_std: f64,
    /// Indexed by class label.
    pub classes: [ClassMetrics; 2],
}

/// Fold index per row: each class is shuffled with `seed` and dealt
/// round-robin, continuing where the previous class stopped.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>, MlError> {
    if k < 2 {
        return Err(MlError::Config("need at least 2 folds".into()));
    }
    if labels.len() < k {
        return Err(MlError::TooFewRows { needed: k, have: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(MlError::Stratify { class, count: members.len(), folds: k });
        }
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(fold_of)
}

pub fn cross_validate(kind: &ModelKind, data: &[LabeledPair], k: usize, seed: u64) -> Result<CvReport, MlError> {
    let labels: Vec<u8> = data.iter().map(|d| d.label).collect();
    let fold_of = stratified_folds(&labels, k, seed)?;
    let mut predicted = vec![0u8; data.len()];
    let mut fold_accuracies = Vec::with_capacity(k);
    for fold in 0..k {
        let train: Vec<LabeledPair> = data.iter().zip(&fold_of).filter(|(_, &f)| f != fold).map(|(d, _)| d.clone()).collect();
        let model = kind.fit(&train)?;
        let mut correct = 0;
        let mut total = 0;
        for (i, d) in data.iter().enumerate().filter(|(i, _)| fold_of[*i] == fold) {
            predicted[i] = model.predict(&d.features);
            correct += (predicted[i] == d.label) as usize;
            total += 1;
        }
        fold_accuracies.push(correct as f64 / total as f64);
    }
    let accuracy_mean = fold_accuracies.iter().sum::<f64>() / k as f64;
    let accuracy_std = (fold_accuracies.iter().map(|a| (a - accuracy_mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    let class_metrics = |c: u8| {
        let tp = (0..data.len()).filter(|&i| predicted[i] == c && labels[i] == c).count() as f64;
        let pred = predicted.iter().filter(|&&p| p == c).count() as f64;
        let support = labels.iter().filter(|&&l| l == c).count();
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        ClassMetrics { precision, recall, f1, support }
    };
    Ok(CvReport {
        folds: k,
        seed,
        fold_accuracies,
        accuracy_mean,
        accuracy_std,
        classes: [class_metrics(0), class_metrics(1)],
    })
}

/// Cross-validation plus a model fitted on all rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub model: &'static str,
    pub cv: CvReport,
    pub importance: ImportanceReport,
}

pub fn evaluate(kind: &ModelKind, data: &[LabeledPair], k: usize, seed: u64) -> Result<ModelReport, MlError> {
    let cv = cross_validate(kind, data, k, seed)?;
    let importance = kind.fit(data)?.importance_report()?;
    Ok(ModelReport { model: kind.name(), cv, importance })
}

impl ModelReport {
    /// `section,name,value` rows: accuracy, per-class metrics, importances.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,value\n");
        let cv = &self.cv;
        writeln!(out, "model,kind,{}", self.model).unwrap();
        writeln!(out, "cv,folds,{}", cv.folds).unwrap();
        writeln!(out, "cv,seed,{}", cv.seed).unwrap();
        writeln!(out, "cv,accuracy_mean,{:.6}", cv.accuracy_mean).unwrap();
        writeln!(out, "cv,accuracy_std,{:.6}", cv.accuracy_std).unwrap();
        for (c, m) in cv.classes.iter().enumerate() {
            writeln!(out, "class_{c},precision,{:.6}", m.precision).unwrap();
            writeln!(out, "class_{c},recall,{:.6}", m.recall).unwrap();
            writeln!(out, "class_{c},f1,{:.6}", m.f1).unwrap();
            writeln!(out, "class_{c},support,{}", m.support).unwrap();
        }
        for f in &self.importance.features {
            writeln!(out, "importance_raw,{},{:.6}", f.name, f.raw).unwrap();
        }
        for f in &self.importance.features {
            writeln!(out, "importance_pct,{},{:.1}", f.name, f.percent).unwrap();
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// One row of a ground-truth file: `main_id,secondary_id,label`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub main_id: String,
    pub secondary_id: String,
    pub label: u8,
}

pub fn write_ground_truth<W: Write>(rows: &[GroundTruthRow], out: W) -> Result<(), MlError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["main_id", "secondary_id", "label"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ground_truth<R: Read>(input: R) -> Result<Vec<GroundTruthRow>, MlError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["main_id", "secondary_id", "label"] {
        return Err(MlError::Format { line: 1, reason: format!("expected header main_id,secondary_id,label, got {}", headers.iter().collect::<Vec<_>>().join(",")) });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<GroundTruthRow>().enumerate() {
        let row = rec.map_err(|e| MlError::Format { line: i + 2, reason: e.to_string() })?;
        if row.label > 1 {
            return Err(MlError::Format { line: i + 2, reason: format!("label must be 0 or 1, got {}", row.label) });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExcludedPair {
    pub main_id: String,
    pub secondary_id: String,
    pub reason: String,
}

/// Joins ground-truth rows with score-table features. Pairs without scores
/// are reported rather than failing the whole set.
pub fn attach_features(rows: &[GroundTruthRow], table: &ScoreTable) -> (Vec<LabeledPair>, Vec<ExcludedPair>) {
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for row in rows {
        let exclude = |reason: String| ExcludedPair { main_id: row.main_id.clone(), secondary_id: row.secondary_id.clone(), reason };
        match table.find(&row.main_id, &row.secondary_id) {
            None => excluded.push(exclude("no scores for pair".into())),
            Some(rec) => match LabeledPair::new(
                row.main_id.clone(),
                row.secondary_id.clone(),
                [rec.sem_avg, rec.nutr_avg, rec.lexical],
                row.label == 1,
            ) {
                Ok(p) => pairs.push(p),
                Err(e) => excluded.push(exclude(e.to_string())),
            },
        }
    }
    (pairs, excluded)
}

/// One expert's verdict on a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertVerdict {
    pub expert: String,
    pub main_id: String,
    pub secondary_id: String,
    pub similar: bool,
}

/// Pairs judged by every expert with a unanimous verdict, canonicalized and
/// sorted. Pairs missing any expert's verdict are left out.
pub fn unanimous_labels(verdicts: &[ExpertVerdict]) -> Vec<GroundTruthRow> {
    let experts: BTreeSet<&str> = verdicts.iter().map(|v| v.expert.as_str()).collect();
    let mut by_pair: BTreeMap<(&str, &str), BTreeMap<&str, bool>> = BTreeMap::new();
    for v in verdicts {
        let key = if v.main_id <= v.secondary_id {
            (v.main_id.as_str(), v.secondary_id.as_str())
        } else {
            (v.secondary_id.as_str(), v.main_id.as_str())
        };
        by_pair.entry(key).or_default().insert(&v.expert, v.similar);
    }
    by_pair
        .into_iter()
        .filter(|(_, votes)| votes.len() == experts.len())
        .filter_map(|((a, b), votes)| {
            let first = *votes.values().next()?;
            votes.values().all(|&s| s == first).then(|| GroundTruthRow {
                main_id: a.to_string(),
                secondary_id: b.to_string(),
                label: first as u8,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub pairs: Vec<LabeledPair>,
    pub excluded: Vec<ExcludedPair>,
}

pub fn build_ground_truth(verdicts: &[ExpertVerdict], table: &ScoreTable) -> GroundTruth {
    let rows = unanimous_labels(verdicts);
    if rows.is_empty() {
        log::warn!("no pair was judged unanimously by all experts");
    }
    let (pairs, excluded) = attach_features(&rows, table);
    GroundTruth { pairs, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, seed: u64, label: impl Fn(&Features) -> bool) -> Vec<LabeledPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let f = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                LabeledPair::new(format!("m{i}"), format!("s{i}"), f, label(&f)).unwrap()
            })
            .collect()
    }

    #[test]
    fn sigmoid_edges() {
        let m = LogisticModel { coefficients: [0.0; 3], intercept: 0.0, iterations: 0, converged: true };
        assert_eq!(predict_logistic(&m, &[0.3, 0.2, 0.1]), (0.5, 1));
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) >= 0.0);
        let m = LogisticModel { coefficients: [1.0, -2.0, 0.5], intercept: 0.25, iterations: 0, converged: true };
        let x = [0.2, 0.4, 0.6];
        let z: f64 = 0.25 + 0.2 - 0.8 + 0.3;
        assert!((m.probability(&x) - 1.0 / (1.0 + (-z).exp())).abs() < 1e-15);
    }

    #[test]
    fn logistic_separable_prefers_lexical() {
        let data = synthetic(300, 1, |f| f[2] > 0.5);
        let m = train_logistic(&data, &LogisticConfig::default()).unwrap();
        assert!(m.converged);
        let acc = data.iter().filter(|d| m.predict(&d.features) == d.label).count() as f64 / 300.0;
        assert!(acc >= 0.99, "{acc}");
        assert!(m.coefficients[2].abs() > m.coefficients[0].abs().max(m.coefficients[1].abs()));
    }

    #[test]
    fn logistic_no_signal_is_prior_logit() {
        let data: Vec<LabeledPair> = (0..40).map(|i| LabeledPair::new("a", "b", [0.0; 3], i % 4 == 0).unwrap()).collect();
        let m = train_logistic(&data, &LogisticConfig::default()).unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-9));
        assert!((m.intercept - (0.25f64 / 0.75).ln()).abs() < 1e-9);
    }

    #[test]
    fn logistic_rejects_single_class() {
        let data = synthetic(20, 2, |_| true);
        assert!(matches!(train_logistic(&data, &LogisticConfig::default()), Err(MlError::SingleClass)));
        assert!(matches!(train_forest(&data, &ForestConfig::default()), Err(MlError::SingleClass)));
        let tiny = synthetic(5, 2, |f| f[0] > 0.5);
        assert!(matches!(train_logistic(&tiny, &LogisticConfig::default()), Err(MlError::TooFewRows { .. })));
    }

    #[test]
    fn forest_importance_and_determinism() {
        let data = synthetic(300, 3, |f| f[2] > 0.5);
        let a = train_forest(&data, &ForestConfig { seed: 9, ..Default::default() }).unwrap();
        let b = train_forest(&data, &ForestConfig { seed: 9, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        let imp = a.importances();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp[2] > 0.8, "{imp:?}");
    }

    #[test]
    fn single_full_tree_matches_cart() {
        let data = synthetic(120, 4, |f| f[0] + f[1] > 1.0);
        let cfg = ForestConfig { trees: 1, max_features: 3, min_leaf: 1, bootstrap: false, seed: 5 };
        let forest = train_forest(&data, &cfg).unwrap();
        let all: Vec<usize> = (0..data.len()).collect();
        let tree = DecisionTree::fit(&data, &all, &TreeConfig::default(), &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let probe = synthetic(200, 6, |_| false);
        for p in probe.iter().chain(&data) {
            assert_eq!(forest.predict(&p.features), tree.predict(&p.features));
        }
        // A full-depth tree fits the training set.
        assert!(data.iter().all(|d| tree.predict(&d.features) == d.label));
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<u8> = (0..53).map(|i| (i % 3 == 0) as u8).collect();
        let folds = stratified_folds(&labels, 5, 1).unwrap();
        for f in 0..5 {
            let ones = (0..53).filter(|&i| folds[i] == f && labels[i] == 1).count();
            let zeros = (0..53).filter(|&i| folds[i] == f && labels[i] == 0).count();
            assert!((3..=4).contains(&ones) && (7..=8).contains(&zeros), "{f}: {ones} {zeros}");
        }
        let few = [0, 0, 0, 0, 0, 1, 1];
        assert!(matches!(stratified_folds(&few, 5, 0), Err(MlError::Stratify { class: 1, count: 2, folds: 5 })));
        assert!(matches!(stratified_folds(&few, 7, 0), Err(MlError::Stratify { .. })));
    }

    #[test]
    fn cv_on_separable_and_noise() {
        let data = synthetic(300, 7, |f| f[2] > 0.5);
        let lr = cross_validate(&ModelKind::Logistic(LogisticConfig::default()), &data, 5, 3).unwrap();
        assert!(lr.accuracy_mean >= 0.95, "{lr:?}");
        assert_eq!(lr.classes[0].support + lr.classes[1].support, 300);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<LabeledPair> = synthetic(1000, 8, |_| false)
            .into_iter()
            .map(|mut p| {
                p.label = rng.random_bool(0.5) as u8;
                p
            })
            .collect();
        let lr = cross_validate(&ModelKind::Logistic(LogisticConfig::default()), &noise, 5, 3).unwrap();
        assert!((0.40..=0.60).contains(&lr.accuracy_mean), "{}", lr.accuracy_mean);
    }

    #[test]
    fn importance_normalization() {
        let p = normalized_importance(&[1.986991, 0.087156, 0.063678]).unwrap();
        assert!((p[0] - 92.9).abs() <= 0.05 && (p[1] - 4.1).abs() <= 0.05 && (p[2] - 3.0).abs() <= 0.05, "{p:?}");
        assert_eq!(normalized_importance(&[1.0, 1.0]).unwrap(), vec![50.0, 50.0]);
        assert_eq!(normalized_importance(&[-2.0, 1.0, 1.0]).unwrap(), vec![50.0, 25.0, 25.0]);
        assert!(matches!(normalized_importance(&[0.0, 0.0]), Err(MlError::AllZero)));
    }

    #[test]
    fn unanimity_across_three_experts() {
        let v = |e: &str, a: &str, b: &str, s: bool| ExpertVerdict { expert: e.into(), main_id: a.into(), secondary_id: b.into(), similar: s };
        let verdicts = vec![
            v("x", "r1", "r2", true),
            v("y", "r2", "r1", true),
            v("z", "r1", "r2", true),
            v("x", "r1", "r3", true),
            v("y", "r1", "r3", true),
            v("z", "r1", "r3", false),
            v("x", "r4", "r5", false),
            v("y", "r4", "r5", false),
        ];
        let rows = unanimous_labels(&verdicts);
        assert_eq!(rows, vec![GroundTruthRow { main_id: "r1".into(), secondary_id: "r2".into(), label: 1 }]);
    }

    #[test]
    fn ground_truth_csv_round_trip() {
        let rows = vec![
            GroundTruthRow { main_id: "a".into(), secondary_id: "b".into(), label: 1 },
            GroundTruthRow { main_id: "a".into(), secondary_id: "c".into(), label: 0 },
        ];
        let mut buf = Vec::new();
        write_ground_truth(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "main_id,secondary_id,label\na,b,1\na,c,0\n");
        assert_eq!(read_ground_truth(&buf[..]).unwrap(), rows);
        assert!(read_ground_truth("main_id,secondary_id,label\na,b,2\n".as_bytes()).is_err());
        assert!(read_ground_truth("a,b,c\n".as_bytes()).is_err());
    }
}
