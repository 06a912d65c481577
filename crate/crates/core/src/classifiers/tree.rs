//! CART classification trees grown with the Gini impurity.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Result};
use crate::data::Samples;

/// Two splits whose impurity decrease differs by less than this are ties.
pub(crate) const SPLIT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopRule {
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_leaf: 5,
            max_depth: 12,
        }
    }
}

/// Gini impurity `1 - p0² - p1²` of a two-class node.
pub fn gini_impurity(n0: usize, n1: usize) -> Result<f64> {
    if n0 + n1 == 0 {
        return Err(ClassifierError::EmptyNode);
    }
    Ok(gini(n0, n1))
}

fn gini(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    let (p0, p1) = (n0 as f64 / n, n1 as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: u8,
        score: f64,
        size: usize,
    },
}

/// Arena-allocated tree; node 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Parent impurity minus the size-weighted child impurity.
    pub decrease: f64,
}

/// Best Gini split of the rows `idx`, scanning every feature and every
/// midpoint between consecutive distinct sorted values. Ties keep the
/// lowest feature, then the lowest threshold.
pub fn best_split(samples: &Samples, idx: &[usize], min_leaf: usize) -> Option<Split> {
    let n = idx.len();
    let n1 = idx.iter().filter(|&&i| samples.y[i] == 1).count();
    let parent = gini(n - n1, n1);
    let min_leaf = min_leaf.max(1);
    let mut best: Option<Split> = None;
    let mut order = idx.to_vec();
    for feature in 0..samples.dim() {
        order.sort_by(|&a, &b| samples.x[a][feature].total_cmp(&samples.x[b][feature]));
        let mut left1 = 0;
        for pos in 1..n {
            left1 += usize::from(samples.y[order[pos - 1]] == 1);
            let lo = samples.x[order[pos - 1]][feature];
            let hi = samples.x[order[pos]][feature];
            if lo == hi || pos < min_leaf || n - pos < min_leaf {
                continue;
            }
            let right1 = n1 - left1;
            let weighted = (pos as f64 * gini(pos - left1, left1)
                + (n - pos) as f64 * gini(n - pos - right1, right1))
                / n as f64;
            let decrease = parent - weighted;
            if best.is_none_or(|b| decrease > b.decrease + SPLIT_EPS) {
                let mut threshold = 0.5 * (lo + hi);
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature,
                    threshold,
                    decrease,
                });
            }
        }
    }
    best
}

struct Builder<'a> {
    samples: &'a Samples,
    rule: StopRule,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let n1 = idx.iter().filter(|&&i| self.samples.y[i] == 1).count();
        let score = n1 as f64 / idx.len() as f64;
        Node::Leaf {
            class: u8::from(score >= 0.5),
            score,
            size: idx.len(),
        }
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(self.leaf(&idx));
        let n1 = idx.iter().filter(|&&i| self.samples.y[i] == 1).count();
        let pure = n1 == 0 || n1 == idx.len();
        if pure || depth >= self.rule.max_depth || idx.len() < 2 * self.rule.min_leaf.max(1) {
            return id;
        }
        let Some(split) = best_split(self.samples, &idx, self.rule.min_leaf) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.samples.x[i][split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

pub fn train_tree(samples: &Samples, rule: &StopRule) -> Result<TreeModel> {
    if samples.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let mut b = Builder {
        samples,
        rule: *rule,
        nodes: Vec::new(),
    };
    b.grow((0..samples.len()).collect(), 0);
    Ok(TreeModel {
        nodes: b.nodes,
        width: samples.dim(),
    })
}

impl TreeModel {
    pub fn input_width(&self) -> usize {
        self.width
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[at]
        {
            at = if x[feature] <= threshold { left } else { right };
        }
        at
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { score, .. } => score,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn internal_nodes(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }
}
