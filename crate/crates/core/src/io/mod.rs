//! File formats and export: solution documents, tree rendering and the
//! string-number encoding used on the wire.

mod format;

pub use format::format_sig;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{load_model, InfluenceDiagram, ModelError};
use crate::solver::{GameSolution, TreeNode};

/// Significant digits of numbers sent over HTTP.
pub const WIRE_DIGITS: usize = 9;

pub const SOLUTION_FORMAT: &str = "ara-solution/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Model { path: String, source: ModelError },
    #[error("solution document: {0}")]
    Document(#[from] serde_json::Error),
}

/// Hex SHA-256 of a model file's bytes.
pub fn model_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A model loaded from disk, with the hash of the exact bytes read.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub diagram: InfluenceDiagram,
    pub hash: String,
}

pub fn load_model_file(path: &Path) -> Result<LoadedModel, IoError> {
    let bytes = std::fs::read(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let diagram = load_model(&bytes).map_err(|source| IoError::Model {
        path: path.display().to_string(),
        source,
    })?;
    Ok(LoadedModel {
        diagram,
        hash: model_hash(&bytes),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub format: String,
    pub model_hash: String,
    pub solution: GameSolution,
}

impl SolutionDocument {
    pub fn new(model_hash: String, solution: GameSolution) -> Self {
        SolutionDocument {
            format: SOLUTION_FORMAT.to_string(),
            model_hash,
            solution,
        }
    }

    /// Pretty JSON with a trailing newline. All maps are ordered, so equal
    /// documents give equal bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("solutions serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeFormat {
    Text,
    Dot,
    Structured,
}

impl std::str::FromStr for TreeFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(TreeFormat::Text),
            "dot" => Ok(TreeFormat::Dot),
            "structured" | "json" => Ok(TreeFormat::Structured),
            _ => Err(format!("unknown tree format `{s}` (text, dot or structured)")),
        }
    }
}

pub fn export_tree(tree: &TreeNode, format: TreeFormat) -> Vec<u8> {
    match format {
        TreeFormat::Text => tree_text(tree).into_bytes(),
        TreeFormat::Dot => tree_dot(tree).into_bytes(),
        TreeFormat::Structured => {
            let mut s = serde_json::to_string_pretty(tree).expect("trees serialize");
            s.push('\n');
            s.into_bytes()
        }
    }
}

fn num(x: f64) -> String {
    format_sig(x, WIRE_DIGITS)
}

/// Indented outline; optimal decision branches start with `*`.
///
/// ```text
/// D  EU=-100
///   * Yes  EU=-100
///       S  EU=-100
///         False  p=1  EU=-100
///     No  EU=-160
/// ```
pub fn tree_text(tree: &TreeNode) -> String {
    let mut out = String::new();
    match tree {
        TreeNode::Leaf { value } => {
            let _ = writeln!(out, "EU={}", num(*value));
        }
        _ => text_node(tree, 0, &mut out),
    }
    out
}

fn text_node(node: &TreeNode, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        TreeNode::Leaf { .. } => {}
        TreeNode::Decision {
            variable,
            value,
            branches,
            ..
        } => {
            let _ = writeln!(out, "{pad}{variable}  EU={}", num(*value));
            for b in branches {
                let mark = if b.optimal { "* " } else { "  " };
                let _ = writeln!(out, "{pad}  {mark}{}  EU={}", b.state, num(b.child.value()));
                text_node(&b.child, depth + 3, out);
            }
        }
        TreeNode::Chance {
            variable,
            value,
            branches,
        } => {
            let _ = writeln!(out, "{pad}{variable}  EU={}", num(*value));
            for b in branches {
                let _ = writeln!(
                    out,
                    "{pad}  {}  p={}  EU={}",
                    b.state,
                    num(b.probability),
                    num(b.child.value())
                );
                text_node(&b.child, depth + 2, out);
            }
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph: decisions are boxes, chance nodes ellipses, leaves
/// plain text. Optimal edges are bold.
pub fn tree_dot(tree: &TreeNode) -> String {
    let mut out = String::from("digraph tree {\n  rankdir=LR;\n");
    let mut next = 0usize;
    dot_node(tree, &mut next, &mut out);
    out.push_str("}\n");
    out
}

fn dot_node(node: &TreeNode, next: &mut usize, out: &mut String) -> usize {
    let id = *next;
    *next += 1;
    match node {
        TreeNode::Leaf { value } => {
            let _ = writeln!(out, "  n{id} [shape=plaintext, label=\"{}\"];", num(*value));
        }
        TreeNode::Decision {
            variable,
            value,
            branches,
            ..
        } => {
            let _ = writeln!(
                out,
                "  n{id} [shape=box, label=\"{}\\nEU={}\"];",
                dot_escape(variable),
                num(*value)
            );
            for b in branches {
                let child = dot_node(&b.child, next, out);
                let style = if b.optimal { ", style=bold, penwidth=2" } else { "" };
                let _ = writeln!(out, "  n{id} -> n{child} [label=\"{}\"{style}];", dot_escape(&b.state));
            }
        }
        TreeNode::Chance {
            variable,
            value,
            branches,
        } => {
            let _ = writeln!(
                out,
                "  n{id} [shape=ellipse, label=\"{}\\nEU={}\"];",
                dot_escape(variable),
                num(*value)
            );
            for b in branches {
                let child = dot_node(&b.child, next, out);
                let _ = writeln!(
                    out,
                    "  n{id} -> n{child} [label=\"{} ({})\"];",
                    dot_escape(&b.state),
                    num(b.probability)
                );
            }
        }
    }
    id
}

/// Replaces every JSON number with its 9-significant-digit decimal string.
pub fn stringify_numbers(v: Value) -> Value {
    match v {
        Value::Number(n) => Value::String(match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.to_string(),
            (_, Some(u)) => u.to_string(),
            _ => num(n.as_f64().unwrap_or(f64::NAN)),
        }),
        Value::Array(a) => Value::Array(a.into_iter().map(stringify_numbers).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, stringify_numbers(v))).collect()),
        other => other,
    }
}
