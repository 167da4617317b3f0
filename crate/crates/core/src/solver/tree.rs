use serde::{Deserialize, Serialize};

use crate::model::Owner;

/// A rolled-back decision tree. Chance layers carry branch probabilities,
/// decision layers carry states; every node stores its expected utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Decision {
        variable: String,
        owner: Owner,
        value: f64,
        branches: Vec<DecisionBranch>,
    },
    Chance {
        variable: String,
        value: f64,
        branches: Vec<ChanceBranch>,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionBranch {
    pub state: String,
    pub optimal: bool,
    pub child: TreeNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceBranch {
    pub state: String,
    pub probability: f64,
    pub child: TreeNode,
}

impl TreeNode {
    pub fn leaf(value: f64) -> TreeNode {
        TreeNode::Leaf { value }
    }

    pub fn value(&self) -> f64 {
        match self {
            TreeNode::Decision { value, .. } | TreeNode::Chance { value, .. } | TreeNode::Leaf { value } => *value,
        }
    }

    /// Largest absolute leaf utility.
    pub fn leaf_scale(&self) -> f64 {
        match self {
            TreeNode::Leaf { value } => value.abs(),
            TreeNode::Decision { branches, .. } => branches.iter().map(|b| b.child.leaf_scale()).fold(0.0, f64::max),
            TreeNode::Chance { branches, .. } => branches.iter().map(|b| b.child.leaf_scale()).fold(0.0, f64::max),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Decision { branches, .. } => branches.iter().map(|b| b.child.node_count()).sum(),
            TreeNode::Chance { branches, .. } => branches.iter().map(|b| b.child.node_count()).sum(),
        }
    }
}

/// Recomputes every internal value bottom-up: max at decision nodes,
/// probability-weighted mean at chance nodes. Decision branches within
/// `tie_eps` of the maximum are flagged optimal.
pub fn rollback(tree: &mut TreeNode, tie_eps: f64) -> f64 {
    match tree {
        TreeNode::Leaf { value } => *value,
        TreeNode::Chance { value, branches, .. } => {
            let mass: f64 = branches.iter().map(|b| b.probability).sum();
            let mut acc = 0.0;
            for b in branches.iter_mut() {
                acc += b.probability * rollback(&mut b.child, tie_eps);
            }
            *value = if mass > 0.0 { acc / mass } else { 0.0 };
            *value
        }
        TreeNode::Decision { value, branches, .. } => {
            let vals: Vec<f64> = branches.iter_mut().map(|b| rollback(&mut b.child, tie_eps)).collect();
            let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (b, v) in branches.iter_mut().zip(&vals) {
                b.optimal = *v >= best - tie_eps;
            }
            *value = best;
            best
        }
    }
}
