//! Static discretization of hybrid diagrams.
//!
//! Each continuous chance node gets a partition whose cut points are pooled
//! quantiles of the equal-weight mixture of its per-configuration
//! distributions. Interior intervals are represented by the mixture's
//! conditional mean; the two boundary intervals by the smallest (largest)
//! column conditional mean, so exact extremes such as 0 and 1 survive.
//! Within a column, the mass of each interval is split between the two
//! representatives that bracket the column's conditional mean there, which
//! keeps every column's mean exact.
//!
//! Continuous parents enter their children's expressions through their
//! interval representatives. Root nodes used only as distribution
//! parameters default to a coarser bin count.

mod dist;
mod partition;

pub use dist::{DistributionError, DistributionSpec, Support};
pub use partition::{build_partition, Partition, RepresentativeRule};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::{evaluate, Binding, Env, ExprError, Outcome};
use crate::infer::{DiscreteNetwork, Factor, NetVar};
use crate::model::{CpdSpec, Domain, InfluenceDiagram, Kind, Owner, Variable, VariableId};
use partition::{assign_column, build_partition_with_columns};

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_PARAMETER_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizationConfig {
    pub bins: usize,
    pub parameter_bins: usize,
    pub representative: RepresentativeRule,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig {
            bins: DEFAULT_BINS,
            parameter_bins: DEFAULT_PARAMETER_BINS,
            representative: RepresentativeRule::ConditionalMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("`{variable}`: {source}")]
    Expression { variable: String, source: ExprError },
    #[error("`{variable}`: {source}")]
    Distribution {
        variable: String,
        source: DistributionError,
    },
    #[error("`{variable}`: {message}")]
    Invalid { variable: String, message: String },
}

fn invalid(v: &VariableId, message: impl Into<String>) -> CompileError {
    CompileError::Invalid {
        variable: v.to_string(),
        message: message.into(),
    }
}

/// States of an already-discretized parent.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentStates {
    pub id: VariableId,
    pub labels: Vec<String>,
    pub values: Option<Vec<f64>>,
    pub continuous: bool,
}

impl ParentStates {
    fn binding(&self, i: usize) -> Binding {
        let value = self.values.as_ref().map(|v| v[i]);
        if self.continuous {
            Binding::Number(value.expect("representatives"))
        } else {
            Binding::State {
                label: self.labels[i].clone(),
                value,
            }
        }
    }
}

/// A node after discretization: its states and one row per parent
/// configuration (last parent fastest). Utility nodes have one-entry rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub states: Vec<String>,
    pub values: Option<Vec<f64>>,
    pub partition: Option<Partition>,
    pub rows: Vec<Vec<f64>>,
}

fn configurations(parents: &[ParentStates]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for p in parents {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..p.labels.len()).map(move |s| {
                    let mut next = prefix.clone();
                    next.push(s);
                    next
                })
            })
            .collect();
    }
    out
}

fn env_for(parents: &[ParentStates], config: &[usize]) -> Env {
    parents
        .iter()
        .zip(config)
        .map(|(p, &s)| (p.id.to_string(), p.binding(s)))
        .collect()
}

fn state_for_value(var: &Variable, states: &[String], values: Option<&Vec<f64>>, x: f64) -> Result<usize, CompileError> {
    let tol = 1e-9 * x.abs().max(1.0);
    if let Some(values) = values {
        if let Some(i) = values.iter().position(|v| (v - x).abs() <= tol) {
            return Ok(i);
        }
    } else if let Some(i) = states.iter().position(|s| s.parse::<f64>().is_ok_and(|v| (v - x).abs() <= tol)) {
        return Ok(i);
    }
    Err(invalid(&var.id, format!("value {x} is not one of the node's states")))
}

fn discrete_row(
    var: &Variable,
    states: &[String],
    values: Option<&Vec<f64>>,
    outcome: Outcome,
) -> Result<Vec<f64>, CompileError> {
    let mut row = vec![0.0; states.len()];
    let label_index = |l: &str| {
        states
            .iter()
            .position(|s| s == l)
            .ok_or_else(|| invalid(&var.id, format!("label \"{l}\" is not a state")))
    };
    match outcome {
        Outcome::Label(l) => row[label_index(&l)?] = 1.0,
        Outcome::Bool(b) => {
            let want = if b { "True" } else { "False" };
            let i = states
                .iter()
                .position(|s| s.eq_ignore_ascii_case(want))
                .ok_or_else(|| invalid(&var.id, format!("no `{want}` state for a comparison result")))?;
            row[i] = 1.0;
        }
        Outcome::Number(x) => row[state_for_value(var, states, values, x)?] = 1.0,
        Outcome::Distribution(d) => {
            let atoms = d.atoms().ok_or_else(|| {
                invalid(&var.id, format!("continuous {} distribution on a discrete node", d.family()))
            })?;
            for (x, w) in atoms {
                if w > 0.0 {
                    row[state_for_value(var, states, values, x)?] += w;
                }
            }
        }
    }
    Ok(row)
}

fn uniform_rows(configs: usize, card: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / card as f64; card]; configs]
}

fn expr_error(var: &Variable, source: ExprError) -> CompileError {
    CompileError::Expression {
        variable: var.id.to_string(),
        source,
    }
}

/// Discretizes one node given its (already discrete) parents.
pub fn discretize_node(
    var: &Variable,
    cpd: &CpdSpec,
    parents: &[ParentStates],
    bins: usize,
    rule: RepresentativeRule,
) -> Result<NodeTable, CompileError> {
    let configs = configurations(parents);
    match (&var.domain, var.kind) {
        (_, Kind::Utility) => {
            let rows = match cpd {
                CpdSpec::Values(v) if v.len() == configs.len() => v.iter().map(|x| vec![*x]).collect(),
                CpdSpec::Values(v) => {
                    return Err(invalid(&var.id, format!("{} values for {} configurations", v.len(), configs.len())))
                }
                CpdSpec::Expression { expr, .. } => configs
                    .iter()
                    .map(|c| {
                        crate::expr::evaluate_deterministic(expr, &env_for(parents, c))
                            .map(|x| vec![x])
                            .map_err(|e| expr_error(var, e))
                    })
                    .collect::<Result<_, _>>()?,
                _ => return Err(invalid(&var.id, "utility nodes need values or an expression")),
            };
            Ok(NodeTable {
                states: Vec::new(),
                values: None,
                partition: None,
                rows,
            })
        }
        (Domain::Discrete(dd), _) => {
            let card = dd.states.len();
            let rows = match cpd {
                CpdSpec::Uniform => uniform_rows(configs.len(), card),
                CpdSpec::Table(rows) => {
                    if rows.len() != configs.len() || rows.iter().any(|r| r.len() != card) {
                        return Err(invalid(&var.id, "table shape does not match parents and states"));
                    }
                    rows.clone()
                }
                CpdSpec::Values(_) => return Err(invalid(&var.id, "value lists are only for utility nodes")),
                CpdSpec::Expression { expr, .. } => configs
                    .iter()
                    .map(|c| {
                        let outcome = evaluate(expr, &env_for(parents, c)).map_err(|e| expr_error(var, e))?;
                        discrete_row(var, &dd.states, dd.values.as_ref(), outcome)
                    })
                    .collect::<Result<_, _>>()?,
            };
            Ok(NodeTable {
                states: dd.states.clone(),
                values: dd.values.clone(),
                partition: None,
                rows,
            })
        }
        (Domain::Continuous(cd), _) => {
            let CpdSpec::Expression { expr, .. } = cpd else {
                return Err(invalid(&var.id, "continuous nodes need an expression"));
            };
            let specs: Vec<DistributionSpec> = configs
                .iter()
                .map(|c| crate::expr::evaluate_distribution(expr, &env_for(parents, c)).map_err(|e| expr_error(var, e)))
                .collect::<Result<_, _>>()?;
            let (partition, columns) =
                build_partition_with_columns(&specs, cd, bins, rule).map_err(|source| CompileError::Distribution {
                    variable: var.id.to_string(),
                    source,
                })?;
            let rows = columns
                .iter()
                .map(|c| assign_column(c, &partition.representatives))
                .collect();
            let states = (0..partition.len()).map(|i| partition.label(i)).collect();
            Ok(NodeTable {
                states,
                values: Some(partition.representatives.clone()),
                partition: Some(partition),
                rows,
            })
        }
    }
}

/// The discrete network(s) derived from a diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledModel {
    pub network: DiscreteNetwork,
    /// Present when some node carries an attacker-specific belief.
    pub attacker_network: Option<DiscreteNetwork>,
    pub partitions: BTreeMap<VariableId, Partition>,
}

impl CompiledModel {
    pub fn view(&self, owner: Owner) -> &DiscreteNetwork {
        match (owner, &self.attacker_network) {
            (Owner::Attacker, Some(n)) => n,
            _ => &self.network,
        }
    }

    pub fn views_mut(&mut self) -> impl Iterator<Item = &mut DiscreteNetwork> {
        std::iter::once(&mut self.network).chain(self.attacker_network.as_mut())
    }
}

/// Variables in an order where parents come first; ties by declaration order.
pub fn topological_order(d: &InfluenceDiagram) -> Vec<VariableId> {
    let mut done: BTreeSet<VariableId> = BTreeSet::new();
    let mut order = Vec::new();
    while order.len() < d.variables.len() {
        let next = d.variables.values().find(|v| {
            !done.contains(&v.id)
                && v.parents
                    .iter()
                    .chain(&v.informational_parents)
                    .all(|p| done.contains(p) || !d.variables.contains_key(p))
        });
        match next {
            Some(v) => {
                done.insert(v.id.clone());
                order.push(v.id.clone());
            }
            None => break,
        }
    }
    order
}

fn is_parameter_root(d: &InfluenceDiagram, v: &Variable) -> bool {
    if !v.parents.is_empty() {
        return false;
    }
    let children = d.children(v.id.as_str());
    !children.is_empty()
        && children.iter().all(|c| {
            let cv = &d.variables[*c];
            [cv.cpd.as_ref(), cv.attacker_view.as_ref()]
                .into_iter()
                .flatten()
                .all(|cpd| match cpd {
                    CpdSpec::Expression { expr, .. } => {
                        !expr.variables().contains(v.id.as_str())
                            || expr.parameter_only_variables().contains(v.id.as_str())
                    }
                    _ => false,
                })
        })
}

fn compile_view(
    d: &InfluenceDiagram,
    config: &DiscretizationConfig,
    attacker: bool,
) -> Result<(DiscreteNetwork, BTreeMap<VariableId, Partition>), CompileError> {
    let mut net = DiscreteNetwork::new();
    let mut done: BTreeMap<VariableId, ParentStates> = BTreeMap::new();
    let mut partitions = BTreeMap::new();
    for id in topological_order(d) {
        let v = &d.variables[&id];
        let parents: Vec<ParentStates> = v
            .table_parents()
            .iter()
            .map(|p| done.get(p).cloned().ok_or_else(|| invalid(&v.id, format!("parent `{p}` unavailable"))))
            .collect::<Result<_, _>>()?;
        let cpd = match (attacker, &v.attacker_view, &v.cpd) {
            (true, Some(view), _) => view,
            (_, _, Some(c)) => c,
            (_, _, None) if v.kind == Kind::Decision => &CpdSpec::Uniform,
            _ => return Err(invalid(&v.id, "missing distribution")),
        };
        let bins = v.bins.unwrap_or(if is_parameter_root(d, v) {
            config.parameter_bins
        } else {
            config.bins
        });
        let node = discretize_node(v, cpd, &parents, bins, config.representative)?;
        let parent_idx: Vec<usize> = v
            .table_parents()
            .iter()
            .map(|p| net.index_of(p.as_str()).expect("parent added first"))
            .collect();
        let cards: Vec<usize> = parent_idx.iter().map(|&p| net.card(p)).collect();
        let i = net.len();
        let (scope, card) = if v.kind == Kind::Utility {
            (parent_idx.clone(), cards)
        } else {
            let mut s = parent_idx.clone();
            s.push(i);
            let mut c = cards;
            c.push(node.states.len());
            (s, c)
        };
        let values: Vec<f64> = node.rows.iter().flatten().copied().collect();
        net.add(
            NetVar {
                name: id.to_string(),
                kind: v.kind,
                owner: v.owner,
                states: node.states.clone(),
                values: node.values.clone(),
                parents: parent_idx,
            },
            Factor::new(scope, card, values),
        );
        if v.kind != Kind::Utility {
            done.insert(
                id.clone(),
                ParentStates {
                    id: id.clone(),
                    labels: node.states.clone(),
                    values: node.values.clone(),
                    continuous: node.partition.is_some(),
                },
            );
        }
        if let Some(p) = node.partition {
            partitions.insert(id.clone(), p);
        }
    }
    Ok((net, partitions))
}

/// Discretizes every continuous node and builds the inference networks.
pub fn compile(d: &InfluenceDiagram, config: &DiscretizationConfig) -> Result<CompiledModel, CompileError> {
    let (network, partitions) = compile_view(d, config, false)?;
    let attacker_network = if d.variables.values().any(|v| v.attacker_view.is_some()) {
        Some(compile_view(d, config, true)?.0)
    } else {
        None
    };
    Ok(CompiledModel {
        network,
        attacker_network,
        partitions,
    })
}
