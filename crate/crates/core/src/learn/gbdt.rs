//! Second-order gradient boosting with logistic loss.
//!
//! Each round fits a regression tree to the per-sample gradients
//! `g = p − y` and hessians `h = p(1 − p)`. Splits are found by exact greedy
//! enumeration over midpoints between consecutive distinct feature values;
//! a split's gain is
//!
//! ```text
//! ½ [ G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ) ]
//! ```
//!
//! and leaves take the Newton step `−G/(H+λ)`. Trees are grown level by
//! level: for every feature, one pass over the globally presorted sample
//! order feeds all open nodes of the level at once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A split is made only if its gain exceeds this.
pub const MIN_SPLIT_GAIN: f64 = 1e-12;

/// Gains within this relative distance of the incumbent are ties, which go
/// to the lower feature index and then the lower threshold.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub lambda_l2: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            learning_rate: 0.1,
            max_depth: 4,
            min_samples_leaf: 1,
            lambda_l2: 1.0,
        }
    }
}

impl GbdtParams {
    /// Deeper, slower, more strongly regularized configuration.
    pub fn regularized() -> Self {
        Self {
            n_trees: 300,
            learning_rate: 0.05,
            max_depth: 6,
            min_samples_leaf: 5,
            lambda_l2: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidParam(format!("learning_rate {}", self.learning_rate)));
        }
        if !(self.lambda_l2.is_finite() && self.lambda_l2 >= 0.0) {
            return Err(Error::InvalidParam(format!("lambda_l2 {}", self.lambda_l2)));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParam("min_samples_leaf must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] < threshold` go left.
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    #[serde(rename = "classifier_params")]
    pub params: GbdtParams,
    /// Log-odds of the training positive rate.
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss of raw scores.
pub fn logistic_loss(raw: &[f64], y: &[bool]) -> f64 {
    raw.iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - if t { z } else { 0.0 })
        .sum::<f64>()
        / raw.len() as f64
}

impl GbdtModel {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_score + self.params.learning_rate * sum
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }
}

pub(crate) fn check_xy<R: AsRef<[f64]>>(x: &[R], y: &[bool]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "need at least 2 training rows, got {}",
            x.len()
        )));
    }
    let d = x[0].as_ref().len();
    if let Some(r) = x.iter().find(|r| r.as_ref().len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: r.as_ref().len(),
        });
    }
    let pos = y.iter().filter(|&&t| t).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(d)
}

pub fn train_gbdt<R: AsRef<[f64]>>(x: &[R], y: &[bool], params: &GbdtParams) -> Result<GbdtModel> {
    train_gbdt_with_history(x, y, params).map(|(m, _)| m)
}

/// Train and also return the training logistic loss after each round
/// (entry 0 is the loss of the base score alone).
pub fn train_gbdt_with_history<R: AsRef<[f64]>>(
    x: &[R],
    y: &[bool],
    params: &GbdtParams,
) -> Result<(GbdtModel, Vec<f64>)> {
    params.validate()?;
    let d = check_xy(x, y)?;
    let n = x.len();
    let pos_rate = y.iter().filter(|&&t| t).count() as f64 / n as f64;
    let base_score = (pos_rate / (1.0 - pos_rate)).ln();

    let cols: Vec<Vec<f64>> = (0..d).map(|f| x.iter().map(|r| r.as_ref()[f]).collect()).collect();
    let order: Vec<Vec<usize>> = cols
        .iter()
        .map(|c| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut raw = vec![base_score; n];
    let mut history = vec![logistic_loss(&raw, y)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - if y[i] { 1.0 } else { 0.0 };
            hess[i] = p * (1.0 - p);
        }
        let (tree, leaf_of) = grow_tree(&cols, &order, &grad, &hess, params);
        for i in 0..n {
            if let Node::Leaf { value } = tree.nodes[leaf_of[i]] {
                raw[i] += params.learning_rate * value;
            }
        }
        history.push(logistic_loss(&raw, y));
        trees.push(tree);
    }
    Ok((
        GbdtModel {
            params: params.clone(),
            base_score,
            trees,
        },
        history,
    ))
}

struct OpenNode {
    node: usize,
    /// Member samples in ascending index order.
    members: Vec<usize>,
    g: f64,
    h: f64,
}

#[derive(Clone, Copy)]
struct Scan {
    gl: f64,
    hl: f64,
    count: usize,
    last: f64,
}

#[derive(Clone, Copy)]
struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn sums(members: &[usize], grad: &[f64], hess: &[f64]) -> (f64, f64) {
    members.iter().fold((0.0, 0.0), |(g, h), &i| (g + grad[i], h + hess[i]))
}

pub(crate) fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))
}

fn beats(candidate: f64, incumbent: Option<&BestSplit>) -> bool {
    match incumbent {
        None => candidate > MIN_SPLIT_GAIN,
        Some(b) => candidate > b.gain + GAIN_TIE_TOLERANCE * b.gain.abs().max(1.0),
    }
}

/// Grow one tree; also returns the leaf node index of every sample.
fn grow_tree(
    cols: &[Vec<f64>],
    order: &[Vec<usize>],
    grad: &[f64],
    hess: &[f64],
    params: &GbdtParams,
) -> (Tree, Vec<usize>) {
    let n = grad.len();
    let lambda = params.lambda_l2;
    let min_leaf = params.min_samples_leaf;
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut leaf_of = vec![0usize; n];
    let root_members: Vec<usize> = (0..n).collect();
    let (g, h) = sums(&root_members, grad, hess);
    let mut level = vec![OpenNode {
        node: 0,
        members: root_members,
        g,
        h,
    }];
    const CLOSED: usize = usize::MAX;
    let mut slot = vec![CLOSED; n];

    for _depth in 0..params.max_depth {
        if level.is_empty() {
            break;
        }
        slot.iter_mut().for_each(|s| *s = CLOSED);
        for (k, open) in level.iter().enumerate() {
            if open.members.len() >= 2 * min_leaf {
                open.members.iter().for_each(|&i| slot[i] = k);
            }
        }
        let mut best: Vec<Option<BestSplit>> = vec![None; level.len()];
        let fresh = Scan {
            gl: 0.0,
            hl: 0.0,
            count: 0,
            last: f64::NEG_INFINITY,
        };
        let mut scans = vec![fresh; level.len()];
        for (f, col) in cols.iter().enumerate() {
            scans.iter_mut().for_each(|s| *s = fresh);
            for &i in &order[f] {
                let k = slot[i];
                if k == CLOSED {
                    continue;
                }
                let v = col[i];
                let s = &mut scans[k];
                let open = &level[k];
                let right_count = open.members.len() - s.count;
                if s.count >= min_leaf && right_count >= min_leaf && v > s.last {
                    let gain = split_gain(s.gl, s.hl, open.g - s.gl, open.h - s.hl, lambda);
                    if beats(gain, best[k].as_ref()) {
                        let mut threshold = 0.5 * (s.last + v);
                        if threshold <= s.last {
                            threshold = v;
                        }
                        best[k] = Some(BestSplit {
                            gain,
                            feature: f,
                            threshold,
                        });
                    }
                }
                s.gl += grad[i];
                s.hl += hess[i];
                s.count += 1;
                s.last = v;
            }
        }

        let mut next = Vec::new();
        for (open, choice) in level.into_iter().zip(best) {
            let Some(b) = choice else {
                nodes[open.node] = Node::Leaf {
                    value: -open.g / (open.h + lambda),
                };
                open.members.iter().for_each(|&i| leaf_of[i] = open.node);
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) =
                open.members.iter().partition(|&&i| cols[b.feature][i] < b.threshold);
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[open.node] = Node::Split {
                feature: b.feature,
                threshold: b.threshold,
                left: li,
                right: ri,
            };
            for (node, members) in [(li, left), (ri, right)] {
                let (g, h) = sums(&members, grad, hess);
                next.push(OpenNode { node, members, g, h });
            }
        }
        level = next;
    }
    for open in level {
        nodes[open.node] = Node::Leaf {
            value: -open.g / (open.h + lambda),
        };
        open.members.iter().for_each(|&i| leaf_of[i] = open.node);
    }
    (Tree { nodes }, leaf_of)
}
