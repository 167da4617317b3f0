//! Exact inference on discrete networks by variable elimination.
//!
//! Barren nodes (neither ancestors of a target nor of evidence) are pruned
//! first. Elimination order is greedy min-fill, ties broken by variable
//! name. Evidence on a non-target variable restricts its factors; evidence
//! on a target zeroes the other states. Utility nodes carry a value table
//! over their parents and never enter the probability product.

mod factor;

pub use factor::Factor;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{Kind, Owner, VariableId};

pub type Evidence = BTreeMap<VariableId, usize>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("state index {state} out of range for `{variable}`")]
    StateOutOfRange { variable: String, state: usize },
    #[error("impossible evidence: the observations have zero probability")]
    ImpossibleEvidence,
    #[error("`{0}` is not a utility node")]
    NotAUtility(String),
    #[error("`{0}` is not a decision node")]
    NotADecision(String),
    #[error("no target variables given")]
    EmptyTargets,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetVar {
    pub name: String,
    pub kind: Kind,
    pub owner: Option<Owner>,
    pub states: Vec<String>,
    /// Numeric value per state: state values or interval representatives.
    pub values: Option<Vec<f64>>,
    pub parents: Vec<usize>,
}

/// A fully discrete network: one table per chance/decision node, one value
/// table per utility node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscreteNetwork {
    vars: Vec<NetVar>,
    index: BTreeMap<String, usize>,
    tables: Vec<Factor>,
}

/// Expected utility of one utility node given decisions and evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityQuery {
    pub utility: VariableId,
    pub conditioning: BTreeMap<VariableId, usize>,
    pub evidence: Evidence,
}

impl DiscreteNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node whose table has scope `parents ++ [self]` (or just
    /// `parents` for utility nodes).
    pub fn add(&mut self, var: NetVar, table: Factor) -> usize {
        let i = self.vars.len();
        self.index.insert(var.name.clone(), i);
        self.vars.push(var);
        self.tables.push(table);
        i
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn var(&self, i: usize) -> &NetVar {
        &self.vars[i]
    }

    pub fn vars(&self) -> &[NetVar] {
        &self.vars
    }

    pub fn table(&self, i: usize) -> &Factor {
        &self.tables[i]
    }

    pub fn card(&self, i: usize) -> usize {
        self.vars[i].states.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, InferError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| InferError::UnknownVariable(name.to_string()))
    }

    /// Replaces the table of node `i`; the parents must already match.
    pub fn set_table(&mut self, i: usize, table: Factor) {
        self.tables[i] = table;
    }

    /// Rewires a decision to new parents with a uniform table.
    pub fn set_decision_parents(&mut self, i: usize, parents: Vec<usize>) {
        self.vars[i].parents = parents;
        self.set_uniform(i);
    }

    pub fn set_uniform(&mut self, i: usize) {
        let mut scope = self.vars[i].parents.clone();
        scope.push(i);
        let card: Vec<usize> = scope.iter().map(|&v| self.card(v)).collect();
        let n: usize = card.iter().product();
        let k = self.card(i) as f64;
        self.tables[i] = Factor::new(scope, card, vec![1.0 / k; n]);
    }

    pub fn evidence_indices(&self, evidence: &Evidence) -> Result<Vec<(usize, usize)>, InferError> {
        evidence
            .iter()
            .map(|(id, &s)| {
                let i = self.index_of(id.as_str())?;
                if s >= self.card(i) {
                    return Err(InferError::StateOutOfRange {
                        variable: id.to_string(),
                        state: s,
                    });
                }
                Ok((i, s))
            })
            .collect()
    }

    /// Unnormalized P(targets, evidence) with scope in `targets` order.
    pub fn joint(&self, targets: &[usize], evidence: &[(usize, usize)]) -> Factor {
        let n = self.vars.len();
        let mut keep = vec![false; n];
        let mut stack: Vec<usize> = targets.iter().copied().chain(evidence.iter().map(|e| e.0)).collect();
        while let Some(v) = stack.pop() {
            if !keep[v] {
                keep[v] = true;
                stack.extend(&self.vars[v].parents);
            }
        }
        let is_target = |v: usize| targets.contains(&v);
        let mut factors: Vec<Factor> = Vec::new();
        for v in (0..n).filter(|&v| keep[v] && self.vars[v].kind != Kind::Utility) {
            let mut f = self.tables[v].clone();
            for &(e, s) in evidence {
                if !is_target(e) && f.position(e).is_some() {
                    f = f.reduce(e, s);
                }
            }
            factors.push(f);
        }
        for &(e, s) in evidence {
            if is_target(e) {
                factors.push(Factor::indicator(e, self.card(e), s));
            }
        }

        let restricted: BTreeSet<usize> = evidence.iter().map(|e| e.0).filter(|&e| !is_target(e)).collect();
        let mut elim: BTreeSet<usize> = (0..n)
            .filter(|&v| keep[v] && !is_target(v) && !restricted.contains(&v) && self.vars[v].kind != Kind::Utility)
            .collect();
        while !elim.is_empty() {
            let v = self.min_fill(&factors, &elim);
            elim.remove(&v);
            let (with, without): (Vec<Factor>, Vec<Factor>) =
                factors.into_iter().partition(|f| f.position(v).is_some());
            factors = without;
            if let Some(prod) = with.into_iter().reduce(|a, b| a.product(&b)) {
                factors.push(prod.sum_out(v));
            }
        }
        let mut result = factors
            .into_iter()
            .reduce(|a, b| a.product(&b))
            .unwrap_or_else(|| Factor::scalar(1.0));
        // Targets absent from every factor (cannot happen for kept nodes) get a flat axis.
        for &t in targets {
            if result.position(t).is_none() {
                result = result.product(&Factor::new(vec![t], vec![self.card(t)], vec![1.0; self.card(t)]));
            }
        }
        result.reorder(targets)
    }

    fn min_fill(&self, factors: &[Factor], candidates: &BTreeSet<usize>) -> usize {
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for f in factors {
            for &a in &f.scope {
                for &b in &f.scope {
                    if a < b {
                        edges.insert((a, b));
                    }
                }
            }
        }
        let mut best: Option<(usize, &str, usize)> = None;
        for &v in candidates {
            let neigh: BTreeSet<usize> = factors
                .iter()
                .filter(|f| f.position(v).is_some())
                .flat_map(|f| f.scope.iter().copied())
                .filter(|&u| u != v)
                .collect();
            let neigh: Vec<usize> = neigh.into_iter().collect();
            let mut fill = 0;
            for (i, &a) in neigh.iter().enumerate() {
                for &b in &neigh[i + 1..] {
                    if !edges.contains(&(a.min(b), a.max(b))) {
                        fill += 1;
                    }
                }
            }
            let name = self.vars[v].name.as_str();
            let better = match best {
                None => true,
                Some((bf, bn, _)) => fill < bf || (fill == bf && name < bn),
            };
            if better {
                best = Some((fill, name, v));
            }
        }
        best.expect("non-empty candidates").2
    }

    fn targets(&self, names: &[&str]) -> Result<Vec<usize>, InferError> {
        if names.is_empty() {
            return Err(InferError::EmptyTargets);
        }
        let mut out = Vec::new();
        for n in names {
            let i = self.index_of(n)?;
            if !out.contains(&i) {
                out.push(i);
            }
        }
        Ok(out)
    }

    /// Value table of a utility node, scoped over its parents.
    pub fn utility_table(&self, i: usize) -> Result<&Factor, InferError> {
        if self.vars[i].kind != Kind::Utility {
            return Err(InferError::NotAUtility(self.vars[i].name.clone()));
        }
        Ok(&self.tables[i])
    }
}

/// Normalized joint marginal over `targets` given hard evidence.
pub fn eliminate(net: &DiscreteNetwork, targets: &[&str], evidence: &Evidence) -> Result<Factor, InferError> {
    let t = net.targets(targets)?;
    let ev = net.evidence_indices(evidence)?;
    let j = net.joint(&t, &ev);
    if !(j.total() > 0.0) {
        return Err(InferError::ImpossibleEvidence);
    }
    Ok(j.normalized())
}

pub fn posterior_marginal(net: &DiscreteNetwork, variable: &str, evidence: &Evidence) -> Result<Vec<f64>, InferError> {
    Ok(eliminate(net, &[variable], evidence)?.values)
}

/// Sum over utility-parent configurations of probability times value.
pub fn expected_utility(net: &DiscreteNetwork, query: &UtilityQuery) -> Result<f64, InferError> {
    let u = net.index_of(query.utility.as_str())?;
    let table = net.utility_table(u)?;
    let mut evidence = query.evidence.clone();
    for (d, s) in &query.conditioning {
        let i = net.index_of(d.as_str())?;
        if net.var(i).kind != Kind::Decision {
            return Err(InferError::NotADecision(d.to_string()));
        }
        if evidence.insert(d.clone(), *s).is_some_and(|prev| prev != *s) {
            return Err(InferError::ImpossibleEvidence);
        }
    }
    let ev = net.evidence_indices(&evidence)?;
    if table.scope.is_empty() {
        let mass = net.joint(&[], &ev).total();
        if !(mass > 0.0) {
            return Err(InferError::ImpossibleEvidence);
        }
        return Ok(table.values[0]);
    }
    let j = net.joint(&table.scope, &ev);
    let mass = j.total();
    if !(mass > 0.0) {
        return Err(InferError::ImpossibleEvidence);
    }
    Ok(j.values.iter().zip(&table.values).map(|(p, u)| p * u).sum::<f64>() / mass)
}
