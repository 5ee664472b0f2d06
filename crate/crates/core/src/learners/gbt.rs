//! Gradient-boosted regression trees with exact greedy split search.
//!
//! Trees are grown level by level over feature columns presorted once per
//! training call. Leaf values are Newton steps computed on every training row
//! that lands in the leaf, then halved until the leaf's loss does not grow,
//! which keeps the training objective non-increasing round over round.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::matrix::NumericMatrix;

const NO_NODE: u32 = u32::MAX;
const MIN_GAIN: f64 = 1e-12;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostLoss {
    SquaredError,
    Logistic,
}

impl BoostLoss {
    #[inline]
    fn grad_hess(self, margin: f64, y: f64) -> (f64, f64) {
        match self {
            BoostLoss::SquaredError => (margin - y, 1.0),
            BoostLoss::Logistic => {
                let p = sigmoid(margin);
                (p - y, (p * (1.0 - p)).max(1e-16))
            }
        }
    }

    #[inline]
    pub fn loss(self, margin: f64, y: f64) -> f64 {
        match self {
            BoostLoss::SquaredError => 0.5 * (margin - y) * (margin - y),
            // log(1 + e^m) - y m, computed without overflow
            BoostLoss::Logistic => {
                let softplus = if margin > 0.0 {
                    margin + (-margin).exp().ln_1p()
                } else {
                    margin.exp().ln_1p()
                };
                softplus - y * margin
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
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
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left as usize } else { right as usize },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// One additive ensemble for a single margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl Booster {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_rows: usize,
    pub subsample: f64,
    pub reg_lambda: f64,
}

/// Feature columns sorted once by value; shared by every tree of a training call.
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &NumericMatrix) -> Self {
        let order = (0..x.n_cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { order }
    }
}

struct OpenNode {
    id: u32,
    g: f64,
    h: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy, Default)]
struct Scan {
    g: f64,
    h: f64,
    count: usize,
    last: f64,
    started: bool,
}

/// Grows one tree structure on the sampled rows. Leaves carry a placeholder value.
fn grow_tree(
    x: &NumericMatrix,
    presorted: &Presorted,
    grad: &[f64],
    hess: &[f64],
    sampled: &[u32],
    params: &GbtParams,
) -> Tree {
    let n = x.n_rows();
    let lambda = params.reg_lambda;
    let min_child = params.min_child_rows.max(1);
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut node_of = vec![NO_NODE; n];
    let (mut g0, mut h0) = (0.0, 0.0);
    for &r in sampled {
        node_of[r as usize] = 0;
        g0 += grad[r as usize];
        h0 += hess[r as usize];
    }
    let mut open = vec![OpenNode {
        id: 0,
        g: g0,
        h: h0,
        count: sampled.len(),
    }];
    // maps node id -> slot in `open` for the current level
    let mut slot_of = vec![0u32; 1];

    for _depth in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        let mut scans: Vec<Scan> = vec![Scan::default(); open.len()];
        for f in 0..x.n_cols() {
            scans.iter_mut().for_each(|s| *s = Scan::default());
            for &r in &presorted.order[f] {
                let node = node_of[r as usize];
                if node == NO_NODE {
                    continue;
                }
                let slot = slot_of[node as usize] as usize;
                let v = x.get(r as usize, f);
                let s = &mut scans[slot];
                if s.started && v > s.last {
                    let total = &open[slot];
                    let right_count = total.count - s.count;
                    if s.count >= min_child && right_count >= min_child {
                        let (gl, hl) = (s.g, s.h);
                        let (gr, hr) = (total.g - gl, total.h - hl);
                        let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
                            - total.g * total.g / (total.h + lambda);
                        if gain > MIN_GAIN && best[slot].is_none_or(|b| gain > b.gain) {
                            let mut threshold = s.last + (v - s.last) / 2.0;
                            if threshold >= v {
                                threshold = s.last;
                            }
                            best[slot] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                }
                s.g += grad[r as usize];
                s.h += hess[r as usize];
                s.count += 1;
                s.last = v;
                s.started = true;
            }
        }

        let mut next_open = Vec::new();
        let mut any_split = false;
        for (slot, node) in open.iter().enumerate() {
            if let Some(c) = best[slot] {
                let left = nodes.len() as u32;
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[node.id as usize] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right: left + 1,
                };
                any_split = true;
            }
        }
        if !any_split {
            break;
        }
        slot_of.resize(nodes.len(), 0);
        let mut stats: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0); nodes.len()];
        for &r in sampled {
            let node = node_of[r as usize];
            if node == NO_NODE {
                continue;
            }
            match nodes[node as usize] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let child = if x.get(r as usize, feature) <= threshold { left } else { right };
                    node_of[r as usize] = child;
                    let st = &mut stats[child as usize];
                    st.0 += grad[r as usize];
                    st.1 += hess[r as usize];
                    st.2 += 1;
                }
                Node::Leaf { .. } => node_of[r as usize] = NO_NODE,
            }
        }
        for (slot, node) in open.iter().enumerate() {
            if best[slot].is_some() {
                if let Node::Split { left, right, .. } = nodes[node.id as usize] {
                    for child in [left, right] {
                        let (g, h, count) = stats[child as usize];
                        slot_of[child as usize] = next_open.len() as u32;
                        next_open.push(OpenNode { id: child, g, h, count });
                    }
                }
            }
        }
        open = next_open;
    }
    Tree { nodes }
}

/// Sets leaf values from all training rows and applies them to the margins.
fn fit_leaves(
    tree: &mut Tree,
    x: &NumericMatrix,
    y: &[f64],
    w: &[f64],
    margin: &mut [f64],
    loss: BoostLoss,
    params: &GbtParams,
) {
    let n = x.n_rows();
    let leaf_of: Vec<usize> = (0..n).map(|i| tree.leaf_index(x.row(i))).collect();
    let n_nodes = tree.nodes.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (i, &l) in leaf_of.iter().enumerate() {
        members[l].push(i);
    }
    for (leaf, rows) in members.iter().enumerate() {
        if !matches!(tree.nodes[leaf], Node::Leaf { .. }) {
            continue;
        }
        let (mut g, mut h) = (0.0, 0.0);
        for &i in rows {
            let (gi, hi) = loss.grad_hess(margin[i], y[i]);
            g += w[i] * gi;
            h += w[i] * hi;
        }
        let mut value = if rows.is_empty() {
            0.0
        } else {
            -params.learning_rate * g / (h + params.reg_lambda)
        };
        let leaf_loss = |delta: f64| rows.iter().map(|&i| w[i] * loss.loss(margin[i] + delta, y[i])).sum::<f64>();
        if value != 0.0 {
            let before = leaf_loss(0.0);
            let mut halvings = 0;
            while leaf_loss(value) > before && halvings < MAX_HALVINGS {
                value *= 0.5;
                halvings += 1;
            }
            if leaf_loss(value) > before {
                value = 0.0;
            }
        }
        tree.nodes[leaf] = Node::Leaf { value };
        for &i in rows {
            margin[i] += value;
        }
    }
}

pub fn weighted_loss(loss: BoostLoss, margin: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let total_w: f64 = w.iter().sum();
    margin
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&m, &t), &wi)| wi * loss.loss(m, t))
        .sum::<f64>()
        / total_w.max(f64::MIN_POSITIVE)
}

/// Fits one booster. Returns it with the training objective after every round
/// (index 0 is the objective of the base score alone).
pub fn fit_booster(
    x: &NumericMatrix,
    presorted: &Presorted,
    y: &[f64],
    w: &[f64],
    loss: BoostLoss,
    params: &GbtParams,
    seed: u64,
    stream: u64,
) -> Result<(Booster, Vec<f64>), LearnerError> {
    let n = x.n_rows();
    let total_w: f64 = w.iter().sum();
    if n == 0 || total_w <= 0.0 {
        return Err(LearnerError::EmptyTrainingSet);
    }
    let mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total_w;
    let base_score = match loss {
        BoostLoss::SquaredError => mean,
        BoostLoss::Logistic => {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    };
    let mut margin = vec![base_score; n];
    let mut history = vec![weighted_loss(loss, &margin, y, w)];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let n_sample = ((params.subsample.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
    for t in 0..params.n_trees {
        for i in 0..n {
            let (g, h) = loss.grad_hess(margin[i], y[i]);
            grad[i] = w[i] * g;
            hess[i] = w[i] * h;
        }
        let sampled: Vec<u32> = if n_sample == n {
            (0..n as u32).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((stream << 32) | t as u64);
            let mut s: Vec<u32> = index::sample(&mut rng, n, n_sample).into_iter().map(|i| i as u32).collect();
            s.sort_unstable();
            s
        };
        let mut tree = grow_tree(x, presorted, &grad, &hess, &sampled, params);
        fit_leaves(&mut tree, x, y, w, &mut margin, loss, params);
        history.push(weighted_loss(loss, &margin, y, w));
        trees.push(tree);
    }
    Ok((Booster { base_score, trees }, history))
}
