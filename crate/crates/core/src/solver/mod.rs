//! Backward induction for sequential defend-attack games.
//!
//! Stages are solved from last to first. At each stage every decision
//! still ahead has already been replaced by its policy table, earlier
//! decisions stay uniform and act as chance context, and the stage owner's
//! utility components are summed. For each configuration of the
//! decision's informational parents the option maximizing expected utility
//! is kept; options within the tie tolerance share the column uniformly.
//!
//! Tie tolerance is `1e-9` (absolute) on fully discrete models and
//! `1e-6 * scale` on discretized ones, where `scale` is the largest
//! absolute leaf of the stage's decision tree. An explicit `tie_eps`
//! overrides both.
//!
//! Stage trees put the context variables first as chance layers, then the
//! decision, then (when it has at most 16 configurations) the remaining
//! utility parents as an outcome layer. Otherwise the leaves hold the
//! conditional expected utility directly.

mod tree;

pub use tree::{rollback, ChanceBranch, DecisionBranch, TreeNode};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{compile, CompileError, CompiledModel, DiscretizationConfig, RepresentativeRule};
use crate::infer::{eliminate, expected_utility, DiscreteNetwork, Evidence, Factor, InferError, UtilityQuery};
use crate::model::{self, InfluenceDiagram, Kind, ModelError, Owner, VariableId};

pub const DISCRETE_TIE_EPS: f64 = 1e-9;
pub const HYBRID_TIE_SCALE: f64 = 1e-6;
const OUTCOME_LAYER_LIMIT: usize = 16;
const REACHABLE_FLOOR: f64 = 1e-12;
/// Posterior probabilities this close count as tied; the first state wins.
const MODE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub bins: usize,
    pub param_bins: usize,
    pub tie_eps: Option<f64>,
    #[serde(default)]
    pub representative: RepresentativeRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            bins: crate::discretize::DEFAULT_BINS,
            param_bins: crate::discretize::DEFAULT_PARAMETER_BINS,
            tie_eps: None,
            representative: RepresentativeRule::ConditionalMean,
        }
    }
}

impl SolverConfig {
    pub fn discretization(&self) -> DiscretizationConfig {
        DiscretizationConfig {
            bins: self.bins,
            parameter_bins: self.param_bins,
            representative: self.representative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error("`{0}`: decision is irrelevant to utility")]
    Irrelevant(String),
    #[error("no utility nodes belong to the {0}")]
    NoUtility(Owner),
    #[error("unknown state `{state}` for `{variable}`")]
    UnknownState { variable: String, state: String },
    #[error("bins must be at least 2, got {0}")]
    Bins(usize),
}

/// Optimal choice for one configuration of the decision's context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub context: Vec<String>,
    /// False when the configuration has (numerically) zero probability.
    pub reachable: bool,
    /// Expected utility per option; `None` when the option has no mass.
    pub eu: Vec<Option<f64>>,
    pub maximizers: Vec<String>,
    pub max_eu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePolicy {
    pub decision: VariableId,
    pub owner: Owner,
    /// Informational parents, in table order (last fastest).
    pub context: Vec<VariableId>,
    pub states: Vec<String>,
    pub entries: Vec<PolicyEntry>,
}

impl StagePolicy {
    /// Entry whose context matches the given parent states.
    pub fn lookup(&self, assignment: &BTreeMap<VariableId, String>) -> Option<&PolicyEntry> {
        self.entries.iter().find(|e| {
            self.context
                .iter()
                .zip(&e.context)
                .all(|(c, s)| assignment.get(c).is_none_or(|a| a == s))
        })
    }

    /// Table row: equal mass on each maximizer.
    pub fn column(&self, entry: &PolicyEntry) -> Vec<f64> {
        let share = 1.0 / entry.maximizers.len() as f64;
        self.states
            .iter()
            .map(|s| if entry.maximizers.contains(s) { share } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSolution {
    pub decision: VariableId,
    pub owner: Owner,
    pub tie_eps: f64,
    pub policy: StagePolicy,
    pub tree: Option<TreeNode>,
}

/// A decision along the optimal path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub decision: VariableId,
    pub owner: Owner,
    pub context: BTreeMap<VariableId, String>,
    /// One state, or several when tied.
    pub choice: Vec<String>,
    pub eu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub bins: usize,
    pub cuts: Vec<f64>,
    pub representatives: Vec<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution {
    /// Solved stages in stage order.
    pub stages: Vec<StageSolution>,
    pub defender_strategy: Vec<PathStep>,
    pub anticipated_attacks: Vec<PathStep>,
    pub psi_defender: Option<f64>,
    pub psi_attacker: Option<f64>,
    pub config: SolverConfig,
    pub discretization: BTreeMap<VariableId, PartitionSummary>,
}

impl GameSolution {
    pub fn stage(&self, decision: &str) -> Option<&StageSolution> {
        self.stages.iter().find(|s| s.decision.as_str() == decision)
    }
}

/// Labels of hard evidence, keyed by variable.
pub type LabelEvidence = BTreeMap<VariableId, String>;

/// Solves every stage of the game.
pub fn solve(d: &InfluenceDiagram, config: &SolverConfig) -> Result<GameSolution, SolveError> {
    Ok(solve_pending(d, config, &LabelEvidence::new(), 0)?.0)
}

/// Same as [`solve`]; the name marks intent for models with continuous nodes.
pub fn solve_hybrid(d: &InfluenceDiagram, config: &SolverConfig) -> Result<GameSolution, SolveError> {
    solve(d, config)
}

/// Alias kept for callers that think in terms of the algorithm.
pub fn backward_induct(d: &InfluenceDiagram, config: &SolverConfig) -> Result<GameSolution, SolveError> {
    solve(d, config)
}

/// Solves stages `from..` under hard evidence. Returns the solution and
/// the compiled networks with those stages' policies written in.
pub fn solve_pending(
    d: &InfluenceDiagram,
    config: &SolverConfig,
    evidence: &LabelEvidence,
    from: usize,
) -> Result<(GameSolution, CompiledModel), SolveError> {
    if config.bins < 2 || config.param_bins < 2 {
        return Err(SolveError::Bins(config.bins.min(config.param_bins)));
    }
    let stages = model::stage_order(d)?;
    let mut compiled = compile(d, &config.discretization())?;
    let hybrid = d.is_hybrid();
    let mut solved = Vec::new();
    for (decision, owner) in stages.iter().skip(from).rev() {
        let net = compiled.view(*owner);
        let ev = evidence_indices(net, evidence)?;
        let stage = solve_stage(d, net, decision, *owner, &ev, config, hybrid)?;
        let di = compiled.network.index_of(decision.as_str())?;
        for net in compiled.views_mut() {
            let table = policy_factor(net, di, &stage.policy)?;
            net.set_table(di, table);
        }
        solved.push(stage);
    }
    solved.reverse();

    let (defender_strategy, anticipated_attacks, path) = optimal_path(&compiled, &solved, evidence)?;
    let psi = |owner: Owner| -> Result<Option<f64>, SolveError> {
        let comps = d.utility_components(owner);
        if comps.is_empty() {
            return Ok(None);
        }
        let net = compiled.view(owner);
        let ev = evidence_indices(net, &path)?;
        let mut total = 0.0;
        for u in comps {
            total += expected_utility(
                net,
                &UtilityQuery {
                    utility: u,
                    conditioning: BTreeMap::new(),
                    evidence: ev.clone(),
                },
            )?;
        }
        Ok(Some(total))
    };
    let solution = GameSolution {
        psi_defender: psi(Owner::Defender)?,
        psi_attacker: psi(Owner::Attacker)?,
        stages: solved,
        defender_strategy,
        anticipated_attacks,
        config: *config,
        discretization: compiled
            .partitions
            .iter()
            .map(|(k, p)| {
                let finite = |x: f64| x.is_finite().then_some(x);
                (
                    k.clone(),
                    PartitionSummary {
                        bins: p.len(),
                        cuts: p.cuts.clone(),
                        representatives: p.representatives.clone(),
                        lower: finite(p.lower),
                        upper: finite(p.upper),
                    },
                )
            })
            .collect(),
    };
    Ok((solution, compiled))
}

/// Converts labelled evidence into state indices of `net`.
pub fn evidence_indices(net: &DiscreteNetwork, evidence: &LabelEvidence) -> Result<Evidence, SolveError> {
    evidence
        .iter()
        .map(|(id, label)| {
            let i = net.index_of(id.as_str())?;
            let s = net
                .var(i)
                .states
                .iter()
                .position(|s| s == label)
                .ok_or_else(|| SolveError::UnknownState {
                    variable: id.to_string(),
                    state: label.clone(),
                })?;
            Ok((id.clone(), s))
        })
        .collect()
}

fn reaches(d: &InfluenceDiagram, from: &VariableId, to: &VariableId) -> bool {
    let mut stack = vec![to.clone()];
    let mut seen = BTreeSet::new();
    while let Some(v) = stack.pop() {
        if &v == from {
            return true;
        }
        if seen.insert(v.clone()) {
            if let Some(var) = d.variables.get(&v) {
                stack.extend(var.parents.iter().chain(&var.informational_parents).cloned());
            }
        }
    }
    false
}

/// Expands `table` (scope a subset of `targets`) to the full `targets` scope.
fn expand(table: &Factor, targets: &[usize], card: &[usize]) -> Factor {
    let ones = Factor::new(targets.to_vec(), card.to_vec(), vec![1.0; card.iter().product()]);
    table.product(&ones).reorder(targets)
}

/// Solves one stage in a network where every later decision is already a
/// policy table.
pub fn solve_stage(
    d: &InfluenceDiagram,
    net: &DiscreteNetwork,
    decision: &VariableId,
    owner: Owner,
    evidence: &Evidence,
    config: &SolverConfig,
    hybrid: bool,
) -> Result<StageSolution, SolveError> {
    d.decision(decision.as_str())?;
    let comps = d.utility_components(owner);
    if comps.is_empty() {
        return Err(SolveError::NoUtility(owner));
    }
    if !comps.iter().any(|u| reaches(d, decision, u)) {
        return Err(SolveError::Irrelevant(decision.to_string()));
    }
    let di = net.index_of(decision.as_str())?;
    let ctx: Vec<usize> = net.var(di).parents.clone();
    let k = net.card(di);
    let n_ctx: usize = ctx.iter().map(|&c| net.card(c)).product();
    let ev: Vec<(usize, usize)> = net.evidence_indices(evidence)?;

    let mut head = ctx.clone();
    head.push(di);
    let mut sum_ju = vec![0.0; n_ctx * k];
    let mut mass: Option<Vec<f64>> = None;
    let mut outcome_vars: BTreeSet<usize> = BTreeSet::new();
    let mut comp_idx = Vec::new();
    for u in &comps {
        let ui = net.index_of(u.as_str())?;
        comp_idx.push(ui);
        let table = net.utility_table(ui)?;
        let mut targets = head.clone();
        for &v in &table.scope {
            if !targets.contains(&v) {
                targets.push(v);
                outcome_vars.insert(v);
            }
        }
        let card: Vec<usize> = targets.iter().map(|&v| net.card(v)).collect();
        let j = net.joint(&targets, &ev);
        let uf = expand(table, &targets, &card);
        let r = j.values.len() / (n_ctx * k);
        let mut m = vec![0.0; n_ctx * k];
        for idx in 0..n_ctx * k {
            let block = idx * r..(idx + 1) * r;
            m[idx] = j.values[block.clone()].iter().sum();
            sum_ju[idx] += j.values[block.clone()]
                .iter()
                .zip(&uf.values[block])
                .map(|(p, u)| p * u)
                .sum::<f64>();
        }
        mass.get_or_insert(m);
    }
    let mass = mass.expect("at least one component");
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(InferError::ImpossibleEvidence.into());
    }

    let ctx_ids: Vec<VariableId> = ctx
        .iter()
        .map(|&c| VariableId::new(&net.var(c).name))
        .collect::<Result<_, _>>()?;
    let states = net.var(di).states.clone();
    let ctx_labels = config_labels(net, &ctx);
    let p_ctx: Vec<f64> = (0..n_ctx).map(|c| mass[c * k..(c + 1) * k].iter().sum()).collect();
    let mut eus: Vec<Vec<Option<f64>>> = Vec::with_capacity(n_ctx);
    for c in 0..n_ctx {
        let pc = p_ctx[c];
        let reachable = pc > REACHABLE_FLOOR * total;
        eus.push(
            (0..k)
                .map(|x| {
                    let m = mass[c * k + x];
                    (reachable && m > REACHABLE_FLOOR * pc).then(|| sum_ju[c * k + x] / m)
                })
                .collect(),
        );
    }

    // Outcome layer over the remaining utility parents, when small.
    let outcome: Vec<usize> = outcome_vars.into_iter().collect();
    let o_card: usize = outcome.iter().map(|&v| net.card(v)).product();
    let outcome_table = if !outcome.is_empty() && o_card <= OUTCOME_LAYER_LIMIT {
        let mut targets = head.clone();
        targets.extend(&outcome);
        let card: Vec<usize> = targets.iter().map(|&v| net.card(v)).collect();
        let j = net.joint(&targets, &ev);
        let mut leaves = vec![0.0; j.values.len()];
        for &ui in &comp_idx {
            let uf = expand(net.utility_table(ui)?, &targets, &card);
            leaves.iter_mut().zip(&uf.values).for_each(|(l, u)| *l += u);
        }
        Some((j.values, leaves))
    } else {
        None
    };

    let decision_name = decision.to_string();
    let mut build_decision = |c: usize| -> Option<TreeNode> {
        let branches: Vec<DecisionBranch> = (0..k)
            .filter_map(|x| {
                let eu = eus[c][x]?;
                let child = match &outcome_table {
                    Some((joint, leaves)) => {
                        let base = (c * k + x) * o_card;
                        let w = &joint[base..base + o_card];
                        layers(net, &outcome, w, 0, 0, 0.0, &mut |o| Some(TreeNode::leaf(leaves[base + o])))
                            .unwrap_or_else(|| TreeNode::leaf(eu))
                    }
                    None => TreeNode::leaf(eu),
                };
                Some(DecisionBranch {
                    state: states[x].clone(),
                    optimal: false,
                    child,
                })
            })
            .collect();
        (!branches.is_empty()).then(|| TreeNode::Decision {
            variable: decision_name.clone(),
            owner,
            value: 0.0,
            branches,
        })
    };
    let mut tree = layers(net, &ctx, &p_ctx, 0, 0, REACHABLE_FLOOR * total, &mut build_decision);

    let tie_eps = match config.tie_eps {
        Some(e) => e,
        None if hybrid => {
            let scale = tree.as_ref().map_or_else(
                || eus.iter().flatten().flatten().fold(0.0_f64, |a, b| a.max(b.abs())),
                TreeNode::leaf_scale,
            );
            HYBRID_TIE_SCALE * scale
        }
        None => DISCRETE_TIE_EPS,
    };
    if let Some(t) = tree.as_mut() {
        rollback(t, tie_eps);
    }

    let entries = eus
        .into_iter()
        .enumerate()
        .map(|(c, eu)| {
            let best = eu.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            if best == f64::NEG_INFINITY {
                return PolicyEntry {
                    context: ctx_labels[c].clone(),
                    reachable: false,
                    eu: vec![None; k],
                    maximizers: states.clone(),
                    max_eu: None,
                };
            }
            let maximizers = eu
                .iter()
                .zip(&states)
                .filter(|(e, _)| e.is_some_and(|e| e >= best - tie_eps))
                .map(|(_, s)| s.clone())
                .collect();
            PolicyEntry {
                context: ctx_labels[c].clone(),
                reachable: true,
                eu,
                maximizers,
                max_eu: Some(best),
            }
        })
        .collect();

    Ok(StageSolution {
        decision: decision.clone(),
        owner,
        tie_eps,
        policy: StagePolicy {
            decision: decision.clone(),
            owner,
            context: ctx_ids,
            states,
            entries,
        },
        tree,
    })
}

fn config_labels(net: &DiscreteNetwork, vars: &[usize]) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    for &v in vars {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                net.var(v).states.iter().map(move |s| {
                    let mut next = prefix.clone();
                    next.push(s.clone());
                    next
                })
            })
            .collect();
    }
    out
}

/// Nested chance layers over `vars` with joint weights `weights`
/// (row-major, last fastest). `leaf` receives the full configuration index.
fn layers(
    net: &DiscreteNetwork,
    vars: &[usize],
    weights: &[f64],
    depth: usize,
    prefix: usize,
    floor: f64,
    leaf: &mut dyn FnMut(usize) -> Option<TreeNode>,
) -> Option<TreeNode> {
    if depth == vars.len() {
        return leaf(prefix);
    }
    let card = net.card(vars[depth]);
    let size: usize = vars[depth..].iter().map(|&v| net.card(v)).product();
    let sub = size / card;
    let block: f64 = weights[prefix * size..(prefix + 1) * size].iter().sum();
    let mut branches = Vec::new();
    for s in 0..card {
        let child_prefix = prefix * card + s;
        let m: f64 = weights[child_prefix * sub..(child_prefix + 1) * sub].iter().sum();
        if m <= floor || m <= 0.0 {
            continue;
        }
        if let Some(child) = layers(net, vars, weights, depth + 1, child_prefix, floor, leaf) {
            branches.push(ChanceBranch {
                state: net.var(vars[depth]).states[s].clone(),
                probability: m / block,
                child,
            });
        }
    }
    (!branches.is_empty()).then(|| TreeNode::Chance {
        variable: net.var(vars[depth]).name.clone(),
        value: 0.0,
        branches,
    })
}

/// The decision's table implied by a policy.
pub fn policy_factor(net: &DiscreteNetwork, di: usize, policy: &StagePolicy) -> Result<Factor, SolveError> {
    let var = net.var(di);
    let mut scope = var.parents.clone();
    scope.push(di);
    let card: Vec<usize> = scope.iter().map(|&v| net.card(v)).collect();
    let mut values = Vec::with_capacity(card.iter().product());
    for entry in &policy.entries {
        let share = 1.0 / entry.maximizers.len() as f64;
        for s in &var.states {
            values.push(if entry.maximizers.contains(s) { share } else { 0.0 });
        }
    }
    if values.len() != card.iter().product::<usize>() {
        return Err(ModelError::MissingConfiguration {
            decision: var.name.clone(),
            context: Vec::new(),
        }
        .into());
    }
    Ok(Factor::new(scope, card, values))
}

type PathResult = (Vec<PathStep>, Vec<PathStep>, LabelEvidence);

/// Follows the solved policies forward. Context variables that are neither
/// observed nor decided on the path take their posterior mode; a stage with
/// a unique maximizer fixes that decision for the stages after it.
fn optimal_path(
    compiled: &CompiledModel,
    stages: &[StageSolution],
    evidence: &LabelEvidence,
) -> Result<PathResult, SolveError> {
    let mut assigned = evidence.clone();
    let (mut defender, mut attacker) = (Vec::new(), Vec::new());
    for st in stages {
        let net = compiled.view(st.owner);
        let mut context = BTreeMap::new();
        for c in &st.policy.context {
            let label = match assigned.get(c) {
                Some(l) => l.clone(),
                None => {
                    let ev = evidence_indices(net, &assigned)?;
                    let post = eliminate(net, &[c.as_str()], &ev)?;
                    let mode = post
                        .values
                        .iter()
                        .enumerate()
                        .fold(0, |best, (i, p)| if *p > post.values[best] + MODE_EPS { i } else { best });
                    net.var(net.index_of(c.as_str())?).states[mode].clone()
                }
            };
            context.insert(c.clone(), label);
        }
        let entry = st
            .policy
            .lookup(&context)
            .ok_or_else(|| ModelError::MissingConfiguration {
                decision: st.decision.to_string(),
                context: context.values().cloned().collect(),
            })?;
        if entry.maximizers.len() == 1 {
            assigned.insert(st.decision.clone(), entry.maximizers[0].clone());
        }
        let step = PathStep {
            decision: st.decision.clone(),
            owner: st.owner,
            context,
            choice: entry.maximizers.clone(),
            eu: entry.max_eu,
        };
        match st.owner {
            Owner::Defender => defender.push(step),
            Owner::Attacker => attacker.push(step),
        }
    }
    // Only decisions belong on the path used for the final utilities.
    let decisions: LabelEvidence = assigned
        .into_iter()
        .filter(|(id, _)| {
            compiled
                .network
                .index_of(id.as_str())
                .is_ok_and(|i| compiled.network.var(i).kind == Kind::Decision)
                || evidence.contains_key(id)
        })
        .collect();
    Ok((defender, attacker, decisions))
}

/// The diagram with every solved stage's table written in.
pub fn apply_policies(d: &InfluenceDiagram, solution: &GameSolution) -> Result<InfluenceDiagram, SolveError> {
    let mut out = d.clone();
    for st in &solution.stages {
        out = out.overwrite_decision_cpd(st.decision.as_str(), &st.policy)?;
    }
    Ok(out)
}
