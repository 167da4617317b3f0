//! Hybrid influence diagrams for sequential defend-attack games.
//!
//! A diagram holds decision, chance and utility variables. Decisions carry
//! an explicit owner and are ordered by `stage_order`; a decision's
//! conditional table is indexed by its informational parents, while chance
//! and utility nodes are indexed by their probabilistic parents. Parent
//! configurations are enumerated with the last parent varying fastest.
//!
//! Diagrams are plain values: every mutating operation returns a new one.

mod file;
mod validate;

pub use file::{canonical_json, load_model, parse_model, to_canonical_string};
pub use validate::{validate_diagram, Rule, ValidationReport, Violation};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::solver::StagePolicy;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VariableId(String);

impl VariableId {
    pub fn new(name: &str) -> Result<Self, ModelError> {
        let mut chars = name.chars();
        let head_ok = chars
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
        if head_ok && chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
            Ok(VariableId(name.to_string()))
        } else {
            Err(ModelError::InvalidId(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for VariableId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, ModelError> {
        VariableId::new(&s)
    }
}

impl From<VariableId> for String {
    fn from(v: VariableId) -> String {
        v.0
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for VariableId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Decision,
    Chance,
    Utility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Defender,
    Attacker,
}

impl Owner {
    pub fn other(self) -> Owner {
        match self {
            Owner::Defender => Owner::Attacker,
            Owner::Attacker => Owner::Defender,
        }
    }
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Owner::Defender => "defender",
            Owner::Attacker => "attacker",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDomain {
    pub states: Vec<String>,
    /// Optional numeric value per state, strictly increasing.
    pub values: Option<Vec<f64>>,
}

impl DiscreteDomain {
    pub fn labels(states: &[&str]) -> Self {
        DiscreteDomain {
            states: states.iter().map(|s| s.to_string()).collect(),
            values: None,
        }
    }

    /// States labelled by their numeric values.
    pub fn numeric(values: &[f64]) -> Self {
        DiscreteDomain {
            states: values.iter().map(|v| crate::io::format_sig(*v, 12)).collect(),
            values: Some(values.to_vec()),
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.values.as_ref().map(|v| v[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDomain {
    pub lower: f64,
    pub upper: f64,
}

impl ContinuousDomain {
    pub const REAL_LINE: ContinuousDomain = ContinuousDomain {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Discrete(DiscreteDomain),
    Continuous(ContinuousDomain),
}

impl Domain {
    pub fn as_discrete(&self) -> Option<&DiscreteDomain> {
        match self {
            Domain::Discrete(d) => Some(d),
            Domain::Continuous(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CpdSpec {
    /// Uniform over the node's states in every parent configuration.
    Uniform,
    /// One probability row per parent configuration.
    Table(Vec<Vec<f64>>),
    /// One utility value per parent configuration.
    Values(Vec<f64>),
    Expression { source: String, expr: Expr },
}

impl CpdSpec {
    pub fn expression(source: &str) -> Result<CpdSpec, ExprError> {
        Ok(CpdSpec::Expression {
            source: source.to_string(),
            expr: crate::expr::parse_expression(source)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub id: VariableId,
    pub kind: Kind,
    pub owner: Option<Owner>,
    pub domain: Domain,
    pub cpd: Option<CpdSpec>,
    pub parents: Vec<VariableId>,
    pub informational_parents: Vec<VariableId>,
    /// Per-node bin count for continuous chance nodes.
    pub bins: Option<usize>,
    /// The attacker's own belief about this node, when it differs.
    pub attacker_view: Option<CpdSpec>,
    /// For attacker decisions: the chance node recording whether the attack succeeded.
    pub consequence: Option<VariableId>,
}

impl Variable {
    pub fn is_discrete(&self) -> bool {
        matches!(self.domain, Domain::Discrete(_))
    }

    pub fn discrete(&self) -> Option<&DiscreteDomain> {
        self.domain.as_discrete()
    }

    pub fn cardinality(&self) -> Option<usize> {
        self.discrete().map(|d| d.states.len())
    }

    /// Parents that index this node's table.
    pub fn table_parents(&self) -> &[VariableId] {
        if self.kind == Kind::Decision {
            &self.informational_parents
        } else {
            &self.parents
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityAggregate {
    pub name: String,
    pub owner: Owner,
    pub components: Vec<VariableId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InfluenceDiagram {
    pub variables: IndexMap<VariableId, Variable>,
    pub stage_order: Vec<VariableId>,
    pub utility_aggregates: Vec<UtilityAggregate>,
    pub meta: BTreeMap<String, serde_json::Value>,
    /// Decisions whose realised state the defender cannot see.
    pub concealed: BTreeSet<VariableId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid variable id `{0}`")]
    InvalidId(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`{0}` is not a decision node")]
    NotADecision(String),
    #[error("unknown state `{state}` for `{variable}`")]
    UnknownState { variable: String, state: String },
    #[error("expression of `{variable}`: {source}")]
    Expression { variable: String, source: ExprError },
    #[error("variable `{variable}`: {message}")]
    Schema { variable: String, message: String },
    #[error("diagram failed validation: {0}")]
    Invalid(ValidationReport),
    #[error("no strict stage order exists: {0}")]
    NoStageOrder(String),
    #[error("policy for `{decision}` misses configuration {context:?}")]
    MissingConfiguration {
        decision: String,
        context: Vec<String>,
    },
    #[error("policy column for `{decision}` sums to {sum}")]
    PolicyMass { decision: String, sum: f64 },
}

impl InfluenceDiagram {
    pub fn get(&self, id: &str) -> Result<&Variable, ModelError> {
        self.variables
            .get(id)
            .ok_or_else(|| ModelError::UnknownVariable(id.to_string()))
    }

    pub fn decision(&self, id: &str) -> Result<&Variable, ModelError> {
        let v = self.get(id)?;
        if v.kind == Kind::Decision {
            Ok(v)
        } else {
            Err(ModelError::NotADecision(id.to_string()))
        }
    }

    pub fn children(&self, id: &str) -> Vec<&VariableId> {
        self.variables
            .values()
            .filter(|v| {
                v.parents.iter().any(|p| p.as_str() == id)
                    || v.informational_parents.iter().any(|p| p.as_str() == id)
            })
            .map(|v| &v.id)
            .collect()
    }

    pub fn is_hybrid(&self) -> bool {
        self.variables
            .values()
            .any(|v| v.kind == Kind::Chance && !v.is_discrete())
    }

    /// Number of configurations of the given discrete parents.
    pub fn configurations(&self, parents: &[VariableId]) -> Option<usize> {
        parents.iter().try_fold(1usize, |acc, p| {
            self.variables.get(p).and_then(|v| v.cardinality()).map(|c| acc * c)
        })
    }

    /// Utility nodes whose sum forms `owner`'s objective.
    pub fn utility_components(&self, owner: Owner) -> Vec<VariableId> {
        let aggregated: Vec<VariableId> = self
            .utility_aggregates
            .iter()
            .filter(|a| a.owner == owner)
            .flat_map(|a| a.components.iter().cloned())
            .collect();
        if !aggregated.is_empty() {
            return aggregated;
        }
        self.variables
            .values()
            .filter(|v| v.kind == Kind::Utility && v.owner == Some(owner))
            .map(|v| v.id.clone())
            .collect()
    }

    /// Decisions with their owners, in stage order.
    pub fn stages(&self) -> Vec<(VariableId, Owner)> {
        self.stage_order
            .iter()
            .filter_map(|id| {
                let v = self.variables.get(id)?;
                Some((id.clone(), v.owner?))
            })
            .collect()
    }

    pub fn set_decision_uniform(&self, decision: &str) -> Result<InfluenceDiagram, ModelError> {
        self.decision(decision)?;
        let mut out = self.clone();
        out.variables[decision].cpd = Some(CpdSpec::Uniform);
        Ok(out)
    }

    /// Replaces a decision's table by the policy: equal mass on each maximizer.
    pub fn overwrite_decision_cpd(
        &self,
        decision: &str,
        policy: &StagePolicy,
    ) -> Result<InfluenceDiagram, ModelError> {
        let var = self.decision(decision)?;
        let table = policy_table(self, var, policy)?;
        let mut out = self.clone();
        out.variables[decision].cpd = Some(CpdSpec::Table(table));
        Ok(out)
    }

    /// Labels of every configuration of `parents`, last parent fastest.
    pub fn configuration_labels(&self, parents: &[VariableId]) -> Result<Vec<Vec<String>>, ModelError> {
        let mut out = vec![Vec::new()];
        for p in parents {
            let v = self.get(p.as_str())?;
            let d = v.discrete().ok_or_else(|| ModelError::Schema {
                variable: p.to_string(),
                message: "expected a discrete variable".into(),
            })?;
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    d.states.iter().map(move |s| {
                        let mut next = prefix.clone();
                        next.push(s.clone());
                        next
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

fn policy_table(
    diagram: &InfluenceDiagram,
    var: &Variable,
    policy: &StagePolicy,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let domain = var.discrete().ok_or_else(|| ModelError::Schema {
        variable: var.id.to_string(),
        message: "decision nodes must be discrete".into(),
    })?;
    let mut rows = Vec::new();
    for config in diagram.configuration_labels(&var.informational_parents)? {
        // Match policy context by variable name, so column order may differ.
        let entry = policy.entries.iter().find(|e| {
            var.informational_parents.iter().zip(&config).all(|(p, s)| {
                policy
                    .context
                    .iter()
                    .position(|c| c == p)
                    .is_some_and(|k| e.context.get(k) == Some(s))
            }) && policy.context.len() == var.informational_parents.len()
        });
        let entry = entry.ok_or_else(|| ModelError::MissingConfiguration {
            decision: var.id.to_string(),
            context: config.clone(),
        })?;
        let mut row = vec![0.0; domain.states.len()];
        let share = 1.0 / entry.maximizers.len() as f64;
        for m in &entry.maximizers {
            let i = domain.index_of(m).ok_or_else(|| ModelError::UnknownState {
                variable: var.id.to_string(),
                state: m.clone(),
            })?;
            row[i] += share;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::PolicyMass {
                decision: var.id.to_string(),
                sum,
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Orders decisions by informational arcs, breaking ties by declaration order.
pub fn derive_stage_order(diagram: &InfluenceDiagram) -> Result<Vec<VariableId>, ModelError> {
    let decisions: Vec<&Variable> = diagram
        .variables
        .values()
        .filter(|v| v.kind == Kind::Decision)
        .collect();
    let ancestors = validate::ancestor_sets(diagram);
    let mut placed: Vec<VariableId> = Vec::new();
    let mut remaining: Vec<&Variable> = decisions.clone();
    while !remaining.is_empty() {
        let ready: Vec<usize> = remaining
            .iter()
            .enumerate()
            .filter(|(_, v)| {
                remaining.iter().all(|o| {
                    o.id == v.id || !ancestors.get(&v.id).is_some_and(|a| a.contains(&o.id))
                })
            })
            .map(|(i, _)| i)
            .collect();
        match ready.first() {
            Some(&i) => placed.push(remaining.remove(i).id.clone()),
            None => {
                let names: Vec<String> = remaining.iter().map(|v| v.id.to_string()).collect();
                return Err(ModelError::NoStageOrder(names.join(", ")));
            }
        }
    }
    Ok(placed)
}

/// Stage order paired with owners; errors when the diagram has no strict order.
pub fn stage_order(diagram: &InfluenceDiagram) -> Result<Vec<(VariableId, Owner)>, ModelError> {
    let report = validate_diagram(diagram);
    if let Some(v) = report
        .violations
        .iter()
        .find(|v| matches!(v.rule, Rule::Acyclic | Rule::StageOrder))
    {
        return Err(ModelError::NoStageOrder(v.message.clone()));
    }
    Ok(diagram.stages())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_tokens() {
        assert!(VariableId::new("U_D2").is_ok());
        assert!(VariableId::new("2D").is_err());
        assert!(VariableId::new("").is_err());
        assert!(VariableId::new("a b").is_err());
    }
}
