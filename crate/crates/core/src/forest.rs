//! Random forest on a binary target with classifier (majority vote per
//! tree) and regressor (leaf mean per tree) score semantics, out-of-bag
//! evaluation and grid search.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::TabularDataset;
use crate::error::{Error, Result, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ForestKind {
    Classifier,
    Regressor,
}

impl ForestKind {
    pub fn name(self) -> &'static str {
        match self {
            ForestKind::Classifier => "classifier",
            ForestKind::Regressor => "regressor",
        }
    }
}

impl fmt::Display for ForestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classifier" => Ok(ForestKind::Classifier),
            "regressor" => Ok(ForestKind::Regressor),
            other => Err(Error::config(format!("unknown forest kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ForestConfig {
    pub kind: ForestKind,
    pub ntree: usize,
    pub mtry: usize,
    /// Minimum number of (bootstrap) rows in a terminal node.
    pub nodesize: usize,
    pub seed: u64,
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::config("forest needs at least one tree"));
        }
        if self.nodesize == 0 {
            return Err(Error::config("nodesize must be at least 1"));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(Error::config(format!(
                "mtry must lie in 1..={n_features}, got {}",
                self.mtry
            )));
        }
        Ok(())
    }

    fn order_key(&self) -> (usize, usize, usize) {
        (self.ntree, self.mtry, self.nodesize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Node {
    Leaf { value: f64, count: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Bootstrap multiplicity of every training row.
    inbag: Vec<u32>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn inbag(&self) -> &[u32] {
        &self.inbag
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Mean training label of the leaf reached by `x`.
    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    config: ForestConfig,
    n_features: usize,
    trees: Vec<Tree>,
    warnings: Vec<Warning>,
}

/// Weighted impurity of a node holding `count` rows of which `positives`
/// are labelled 1, under the forest's split criterion.
pub fn node_impurity(kind: ForestKind, count: f64, positives: f64) -> f64 {
    if count == 0.0 {
        return 0.0;
    }
    let p = positives / count;
    match kind {
        // Gini index times node size.
        ForestKind::Classifier => count * (1.0 - p * p - (1.0 - p) * (1.0 - p)),
        // Sum of squared deviations from the node mean.
        ForestKind::Regressor => positives - positives * positives / count,
    }
}

/// Minimum impurity decrease for a split to be accepted.
const MIN_DECREASE: f64 = 1e-12;

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn best_split(
    dataset: &TabularDataset,
    rows: &[usize],
    features: &[usize],
    config: &ForestConfig,
) -> Option<SplitChoice> {
    let labels = dataset.labels();
    let n = rows.len();
    let total_pos: f64 = rows.iter().map(|&i| f64::from(labels[i])).sum();
    let parent = node_impurity(config.kind, n as f64, total_pos);

    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&i| (dataset.value(i, f), labels[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0.0;
        for i in 1..n {
            left_pos += f64::from(pairs[i - 1].1);
            if pairs[i - 1].0 == pairs[i].0 || i < config.nodesize || n - i < config.nodesize {
                continue;
            }
            let impurity = node_impurity(config.kind, i as f64, left_pos)
                + node_impurity(config.kind, (n - i) as f64, total_pos - left_pos);
            if parent - impurity <= MIN_DECREASE {
                continue;
            }
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let (lo, hi) = (pairs[i - 1].0, pairs[i].0);
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(SplitChoice { feature: f, threshold, impurity });
            }
        }
    }
    best
}

fn grow_tree(dataset: &TabularDataset, config: &ForestConfig, tree_index: usize) -> Tree {
    let n = dataset.n_rows();
    let p = dataset.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(tree_index as u64);

    let mut inbag = vec![0u32; n];
    let mut sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    for &i in &sample {
        inbag[i] += 1;
    }
    sample.sort_unstable();

    let labels = dataset.labels();
    let mut nodes: Vec<Node> = Vec::new();
    // Work list of (node slot, rows); children are pushed left first and
    // processed depth-first so node numbering is deterministic.
    nodes.push(Node::Leaf { value: 0.0, count: 0 });
    let mut stack = vec![(0usize, sample)];
    while let Some((slot, rows)) = stack.pop() {
        let count = rows.len();
        let positives = rows.iter().filter(|&&i| labels[i] == 1).count();
        let pure = positives == 0 || positives == count;
        let split = if pure || count < 2 * config.nodesize {
            None
        } else {
            let features = index::sample(&mut rng, p, config.mtry).into_vec();
            best_split(dataset, &rows, &features, config)
        };
        match split {
            None => {
                nodes[slot] = Node::Leaf { value: positives as f64 / count as f64, count };
            }
            Some(choice) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| dataset.value(i, choice.feature) <= choice.threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                nodes[slot] = Node::Split { feature: choice.feature, threshold: choice.threshold, left, right };
                stack.push((right, right_rows));
                stack.push((left, left_rows));
            }
        }
    }
    Tree { nodes, inbag }
}

/// Trains `config.ntree` trees, each on its own bootstrap resample.
pub fn train(dataset: &TabularDataset, config: &ForestConfig) -> Result<Forest> {
    config.validate(dataset.n_features())?;
    if dataset.n_rows() < 2 * config.nodesize {
        return Err(Error::input(format!(
            "{} rows cannot support nodesize {}",
            dataset.n_rows(),
            config.nodesize
        )));
    }
    let trees: Vec<Tree> = (0..config.ntree)
        .into_par_iter()
        .map(|m| grow_tree(dataset, config, m))
        .collect();
    let warnings = if trees.iter().all(Tree::is_leaf) {
        vec![Warning::DegenerateForest]
    } else {
        Vec::new()
    };
    Ok(Forest { config: *config, n_features: dataset.n_features(), trees, warnings })
}

impl Forest {
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    fn tree_score(&self, tree: &Tree, x: &[f64]) -> f64 {
        let leaf = tree.leaf_value(x);
        match self.config.kind {
            // A leaf mean of exactly one half votes for the positive class.
            ForestKind::Classifier => {
                if leaf >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            ForestKind::Regressor => leaf,
        }
    }

    /// Mean of per-tree votes (classifier) or per-tree leaf means (regressor).
    pub fn predict_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::input(format!("expected {} features, got {}", self.n_features, x.len())));
        }
        let sum: f64 = self.trees.iter().map(|t| self.tree_score(t, x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict_dataset(&self, dataset: &TabularDataset) -> Result<Vec<f64>> {
        (0..dataset.n_rows()).map(|i| self.predict_score(dataset.row(i))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OobResult {
    /// Out-of-bag MSE (regressor) or misclassification rate at 0.5 (classifier).
    pub criterion: f64,
    pub evaluated: usize,
    /// Rows that were in-bag for every tree.
    pub skipped: usize,
}

/// Out-of-bag criterion on the training data the forest was grown on.
pub fn oob_criterion(forest: &Forest, dataset: &TabularDataset) -> Result<OobResult> {
    let n = dataset.n_rows();
    if forest.trees.iter().any(|t| t.inbag.len() != n) {
        return Err(Error::input("dataset does not match the forest's training data"));
    }
    let mut loss = 0.0;
    let mut evaluated = 0;
    for i in 0..n {
        let x = dataset.row(i);
        let (mut sum, mut count) = (0.0, 0usize);
        for tree in forest.trees.iter().filter(|t| t.inbag[i] == 0) {
            sum += forest.tree_score(tree, x);
            count += 1;
        }
        if count == 0 {
            continue;
        }
        let score = sum / count as f64;
        let label = f64::from(dataset.labels()[i]);
        loss += match forest.config.kind {
            ForestKind::Regressor => (score - label).powi(2),
            ForestKind::Classifier => f64::from(u8::from((score >= 0.5) != (label == 1.0))),
        };
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Numerical("every row is in-bag for every tree".into()));
    }
    Ok(OobResult { criterion: loss / evaluated as f64, evaluated, skipped: n - evaluated })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEntry {
    pub config: ForestConfig,
    pub oob: OobResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub entries: Vec<GridEntry>,
    pub best: usize,
}

impl GridResult {
    pub fn best_config(&self) -> &ForestConfig {
        &self.entries[self.best].config
    }
}

/// Index of the minimum criterion; ties go to the lexicographically
/// smallest `(ntree, mtry, nodesize)`. NaN criteria never win.
pub fn select_best(entries: &[GridEntry]) -> usize {
    let key = |e: &GridEntry| if e.oob.criterion.is_nan() { f64::INFINITY } else { e.oob.criterion };
    (0..entries.len())
        .min_by(|&a, &b| {
            key(&entries[a])
                .total_cmp(&key(&entries[b]))
                .then(entries[a].config.order_key().cmp(&entries[b].config.order_key()))
        })
        .expect("grid is non-empty")
}

/// Trains every configuration and keeps the one minimising the OOB criterion.
pub fn grid_search(dataset: &TabularDataset, grid: &[ForestConfig]) -> Result<GridResult> {
    grid_search_with(dataset, grid, |_, _| Ok(()))
}

/// Grid search that hands each trained forest to `visit` before dropping it.
pub fn grid_search_with<F>(dataset: &TabularDataset, grid: &[ForestConfig], mut visit: F) -> Result<GridResult>
where
    F: FnMut(usize, &Forest) -> Result<()>,
{
    if grid.is_empty() {
        return Err(Error::config("hyperparameter grid is empty"));
    }
    let mut entries = Vec::with_capacity(grid.len());
    for (i, config) in grid.iter().enumerate() {
        let forest = train(dataset, config)?;
        let oob = oob_criterion(&forest, dataset)?;
        visit(i, &forest)?;
        entries.push(GridEntry { config: *config, oob });
    }
    let best = select_best(&entries);
    Ok(GridResult { entries, best })
}

/// Cartesian grid; `mtry` values above the feature count are clamped to it
/// and duplicates dropped.
pub fn build_grid(
    kind: ForestKind,
    ntrees: &[usize],
    mtrys: &[usize],
    nodesizes: &[usize],
    n_features: usize,
    seed: u64,
) -> Vec<ForestConfig> {
    let mut mtry: Vec<usize> = mtrys.iter().map(|&m| m.clamp(1, n_features.max(1))).collect();
    mtry.sort_unstable();
    mtry.dedup();
    let mut grid = Vec::new();
    for &ntree in ntrees {
        for &m in &mtry {
            for &nodesize in nodesizes {
                grid.push(ForestConfig { kind, ntree, mtry: m, nodesize, seed });
            }
        }
    }
    grid
}

pub const DESK_NTREE: [usize; 2] = [50, 100];
pub const DESK_MTRY: [usize; 2] = [2, 5];
pub const DESK_NODESIZE: [usize; 2] = [5, 15];

pub fn desk_grid(kind: ForestKind, n_features: usize, seed: u64) -> Vec<ForestConfig> {
    build_grid(kind, &DESK_NTREE, &DESK_MTRY, &DESK_NODESIZE, n_features, seed)
}

/// ntree {100, 300, 500}, mtry 1..=half the features, nodesize {5, 10, 15, 20}.
pub fn paper_grid(kind: ForestKind, n_features: usize, seed: u64) -> Vec<ForestConfig> {
    let mtry: Vec<usize> = (1..=(n_features / 2).max(1)).collect();
    build_grid(kind, &[100, 300, 500], &mtry, &[5, 10, 15, 20], n_features, seed)
}
