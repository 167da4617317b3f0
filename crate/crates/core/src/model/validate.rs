use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CpdSpec, Domain, InfluenceDiagram, Kind, Owner, Variable, VariableId};
use crate::expr::ExprShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// References, domains and table shapes.
    Structure,
    Acyclic,
    /// Informational arcs and ancestry must agree with `stage_order`.
    StageOrder,
    /// Owners alternate along the stage order.
    Alternation,
    /// Every decision sees all earlier decisions.
    InformationalCompleteness,
    DiscreteDecisions,
    /// Expected dependence shapes of success and utility nodes (warnings only).
    DependenceShape,
    /// Decisions start uniform (warning only).
    UniformDecisions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
    pub variables: BTreeSet<VariableId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("[{:?}] {}", v.rule, v.message))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

#[derive(Default)]
struct Collector {
    found: BTreeMap<Rule, (Vec<String>, BTreeSet<VariableId>)>,
}

impl Collector {
    fn add<'a>(&mut self, rule: Rule, message: String, vars: impl IntoIterator<Item = &'a VariableId>) {
        let entry = self.found.entry(rule).or_default();
        if !entry.0.contains(&message) {
            entry.0.push(message);
        }
        entry.1.extend(vars.into_iter().cloned());
    }

    fn finish(self) -> Vec<Violation> {
        self.found
            .into_iter()
            .map(|(rule, (msgs, variables))| Violation {
                rule,
                message: msgs.join("; "),
                variables,
            })
            .collect()
    }
}

/// Ancestors of each variable over probabilistic and informational arcs.
pub(crate) fn ancestor_sets(d: &InfluenceDiagram) -> BTreeMap<VariableId, BTreeSet<VariableId>> {
    fn visit(
        d: &InfluenceDiagram,
        id: &VariableId,
        memo: &mut BTreeMap<VariableId, BTreeSet<VariableId>>,
        stack: &mut BTreeSet<VariableId>,
    ) -> BTreeSet<VariableId> {
        if let Some(a) = memo.get(id) {
            return a.clone();
        }
        let mut out = BTreeSet::new();
        if !stack.insert(id.clone()) {
            return out;
        }
        if let Some(v) = d.variables.get(id) {
            for p in v.parents.iter().chain(&v.informational_parents) {
                if d.variables.contains_key(p) {
                    out.insert(p.clone());
                    out.extend(visit(d, p, memo, stack));
                }
            }
        }
        stack.remove(id);
        memo.insert(id.clone(), out.clone());
        out
    }
    let mut memo = BTreeMap::new();
    for id in d.variables.keys() {
        let mut stack = BTreeSet::new();
        visit(d, id, &mut memo, &mut stack);
    }
    memo
}

/// Variables on a directed cycle, if any.
fn cyclic_variables(d: &InfluenceDiagram) -> BTreeSet<VariableId> {
    // Kahn's algorithm; whatever cannot be removed sits on or behind a cycle.
    let mut indegree: BTreeMap<&VariableId, usize> = BTreeMap::new();
    for v in d.variables.values() {
        let n = v
            .parents
            .iter()
            .chain(&v.informational_parents)
            .filter(|p| d.variables.contains_key(*p))
            .count();
        indegree.insert(&v.id, n);
    }
    let mut queue: Vec<&VariableId> = indegree
        .iter()
        .filter(|(_, n)| **n == 0)
        .map(|(k, _)| *k)
        .collect();
    while let Some(id) = queue.pop() {
        for child in d.children(id.as_str()) {
            let n = indegree.get_mut(child).expect("known child");
            let arcs = d.variables[child]
                .parents
                .iter()
                .chain(&d.variables[child].informational_parents)
                .filter(|p| *p == id)
                .count();
            *n -= arcs;
            if *n == 0 {
                queue.push(child);
            }
        }
    }
    indegree
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .map(|(k, _)| k.clone())
        .collect()
}

fn check_domain(v: &Variable, c: &mut Collector) {
    match &v.domain {
        Domain::Discrete(dd) => {
            if dd.states.is_empty() {
                c.add(Rule::Structure, format!("`{}` has no states", v.id), [&v.id]);
            }
            let unique: BTreeSet<&String> = dd.states.iter().collect();
            if unique.len() != dd.states.len() {
                c.add(Rule::Structure, format!("`{}` has duplicate state labels", v.id), [&v.id]);
            }
            if let Some(values) = &dd.values {
                if values.len() != dd.states.len() {
                    c.add(
                        Rule::Structure,
                        format!("`{}` has {} state values for {} states", v.id, values.len(), dd.states.len()),
                        [&v.id],
                    );
                } else if values.windows(2).any(|w| !(w[0] < w[1])) {
                    c.add(
                        Rule::Structure,
                        format!("state values of `{}` are not strictly increasing", v.id),
                        [&v.id],
                    );
                }
            }
        }
        Domain::Continuous(cd) => {
            if !(cd.lower < cd.upper) {
                c.add(Rule::Structure, format!("bounds of `{}` need lower < upper", v.id), [&v.id]);
            }
        }
    }
}

fn check_cpd(d: &InfluenceDiagram, v: &Variable, cpd: &CpdSpec, what: &str, c: &mut Collector) {
    let parents = v.table_parents();
    let configs = d.configurations(parents);
    let bad = |c: &mut Collector, msg: String| c.add(Rule::Structure, format!("{what} of `{}`: {msg}", v.id), [&v.id]);
    match cpd {
        CpdSpec::Uniform => {
            if !v.is_discrete() {
                bad(c, "a uniform table needs a discrete domain".into());
            }
        }
        CpdSpec::Table(rows) => {
            let (Some(configs), Some(card)) = (configs, v.cardinality()) else {
                bad(c, "tables need discrete parents and a discrete domain".into());
                return;
            };
            if v.kind == Kind::Utility {
                bad(c, "utility nodes take `table` as a flat list of values".into());
                return;
            }
            if rows.len() != configs {
                bad(c, format!("expected {configs} rows, found {}", rows.len()));
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != card {
                    bad(c, format!("row {i} has {} entries, expected {card}", row.len()));
                } else if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    bad(c, format!("row {i} is not a probability distribution"));
                }
            }
        }
        CpdSpec::Values(values) => {
            let Some(configs) = configs else {
                bad(c, "value tables need discrete parents".into());
                return;
            };
            if v.kind != Kind::Utility {
                bad(c, "flat value lists are only for utility nodes".into());
            }
            if values.len() != configs {
                bad(c, format!("expected {configs} values, found {}", values.len()));
            }
            if values.iter().any(|x| !x.is_finite()) {
                bad(c, "utility values must be finite".into());
            }
        }
        CpdSpec::Expression { expr, .. } => {
            let names: Vec<&str> = parents.iter().map(|p| p.as_str()).collect();
            match expr.check(&names) {
                Err(e) => bad(c, e.to_string()),
                Ok(shape) => {
                    let ok = match (v.kind, &v.domain) {
                        (Kind::Utility, _) => shape == ExprShape::Deterministic,
                        (Kind::Decision, _) => false,
                        (_, Domain::Continuous(_)) => shape != ExprShape::Label,
                        (_, Domain::Discrete(_)) => true,
                    };
                    if !ok {
                        bad(c, format!("expression shape {shape:?} does not fit a {:?} node", v.kind));
                    }
                }
            }
        }
    }
}

/// Checks the construction rules; every violated rule is reported once.
pub fn validate_diagram(d: &InfluenceDiagram) -> ValidationReport {
    let mut err = Collector::default();
    let mut warn = Collector::default();

    for v in d.variables.values() {
        for p in v.parents.iter().chain(&v.informational_parents) {
            if !d.variables.contains_key(p) {
                err.add(Rule::Structure, format!("`{}` references unknown variable `{p}`", v.id), [&v.id]);
            }
        }
        match v.kind {
            Kind::Decision => {
                if v.owner.is_none() {
                    err.add(Rule::Structure, format!("decision `{}` has no owner", v.id), [&v.id]);
                }
                if !v.parents.is_empty() {
                    err.add(
                        Rule::Structure,
                        format!("decision `{}` may only have informational parents", v.id),
                        [&v.id],
                    );
                }
                if !v.is_discrete() {
                    err.add(Rule::DiscreteDecisions, format!("decision `{}` is not discrete", v.id), [&v.id]);
                }
                for p in &v.informational_parents {
                    if d.variables.get(p).is_some_and(|pv| !pv.is_discrete() || pv.kind == Kind::Utility) {
                        err.add(
                            Rule::Structure,
                            format!("informational parent `{p}` of `{}` must be a discrete non-utility node", v.id),
                            [&v.id],
                        );
                    }
                }
                if !matches!(v.cpd, None | Some(CpdSpec::Uniform)) {
                    warn.add(Rule::UniformDecisions, format!("decision `{}` does not start uniform", v.id), [&v.id]);
                }
            }
            Kind::Utility => {
                if v.owner.is_none() {
                    err.add(Rule::Structure, format!("utility `{}` has no owner", v.id), [&v.id]);
                }
                if !d.children(v.id.as_str()).is_empty() {
                    err.add(Rule::Structure, format!("utility `{}` has children", v.id), [&v.id]);
                }
                if v.cpd.is_none() {
                    err.add(Rule::Structure, format!("utility `{}` has no values", v.id), [&v.id]);
                }
            }
            Kind::Chance => {
                if v.cpd.is_none() {
                    err.add(Rule::Structure, format!("chance node `{}` has no distribution", v.id), [&v.id]);
                }
            }
        }
        if v.kind != Kind::Decision && !v.informational_parents.is_empty() {
            err.add(
                Rule::Structure,
                format!("only decisions take informational parents (`{}`)", v.id),
                [&v.id],
            );
        }
        for p in &v.parents {
            if d.variables.get(p).is_some_and(|pv| pv.kind == Kind::Utility) {
                err.add(Rule::Structure, format!("`{}` has a utility parent `{p}`", v.id), [&v.id]);
            }
        }
        check_domain(v, &mut err);
        let known = v.parents.iter().chain(&v.informational_parents).all(|p| d.variables.contains_key(p));
        if known {
            if let Some(cpd) = &v.cpd {
                check_cpd(d, v, cpd, "distribution", &mut err);
            }
            if let Some(view) = &v.attacker_view {
                check_cpd(d, v, view, "attacker view", &mut err);
            }
        }
        if let Some(s) = &v.consequence {
            let ok = v.kind == Kind::Decision
                && d.variables.get(s).is_some_and(|sv| {
                    sv.kind == Kind::Chance && sv.is_discrete() && sv.parents.contains(&v.id)
                });
            if !ok {
                err.add(
                    Rule::Structure,
                    format!("consequence `{s}` of `{}` must be a discrete chance child of it", v.id),
                    [&v.id],
                );
            }
        }
    }

    for agg in &d.utility_aggregates {
        for comp in &agg.components {
            let ok = d
                .variables
                .get(comp)
                .is_some_and(|v| v.kind == Kind::Utility && v.owner == Some(agg.owner));
            if !ok {
                err.add(
                    Rule::Structure,
                    format!("aggregate `{}` lists `{comp}`, which is not a {} utility", agg.name, agg.owner),
                    [comp],
                );
            }
        }
    }

    let cyclic = cyclic_variables(d);
    if !cyclic.is_empty() {
        let names: Vec<&str> = cyclic.iter().map(|v| v.as_str()).collect();
        err.add(Rule::Acyclic, format!("directed cycle through {}", names.join(", ")), &cyclic);
    }

    // Stage order must list every decision once and agree with ancestry.
    let decisions: Vec<&VariableId> = d
        .variables
        .values()
        .filter(|v| v.kind == Kind::Decision)
        .map(|v| &v.id)
        .collect();
    let mut pos: BTreeMap<&VariableId, usize> = BTreeMap::new();
    for (i, s) in d.stage_order.iter().enumerate() {
        if !decisions.contains(&s) {
            err.add(Rule::StageOrder, format!("stage `{s}` is not a decision node"), [s]);
        } else if pos.insert(s, i).is_some() {
            err.add(Rule::StageOrder, format!("stage `{s}` is listed twice"), [s]);
        }
    }
    for dec in &decisions {
        if !pos.contains_key(dec) {
            err.add(Rule::StageOrder, format!("decision `{dec}` is missing from the stage order"), [*dec]);
        }
    }
    let ancestors = ancestor_sets(d);
    for dec in &decisions {
        let Some(&i) = pos.get(dec) else { continue };
        let v = &d.variables[*dec];
        for p in &v.informational_parents {
            if let Some(&j) = pos.get(p) {
                if j >= i {
                    err.add(
                        Rule::StageOrder,
                        "informational arc contradicts stage order".into(),
                        [*dec, p],
                    );
                }
            }
        }
        for other in &decisions {
            if let Some(&j) = pos.get(other) {
                if j > i && ancestors.get(*dec).is_some_and(|a| a.contains(*other)) {
                    err.add(
                        Rule::StageOrder,
                        format!("`{other}` influences `{dec}` but comes later in the stage order"),
                        [*dec, *other],
                    );
                }
            }
        }
    }

    let stages = d.stages();
    if stages.len() <= 1 {
        warn.add(Rule::Alternation, "no alternation possible".into(), stages.iter().map(|s| &s.0));
    }
    for w in stages.windows(2) {
        if w[0].1 == w[1].1 {
            err.add(
                Rule::Alternation,
                format!("`{}` and `{}` are consecutive {} decisions", w[0].0, w[1].0, w[0].1),
                [&w[0].0, &w[1].0],
            );
        }
    }
    for (i, (id, owner)) in stages.iter().enumerate() {
        let v = &d.variables[id];
        for (earlier, earlier_owner) in &stages[..i] {
            let hidden = d.concealed.contains(earlier) && earlier_owner != owner;
            if !hidden && !v.informational_parents.contains(earlier) {
                err.add(
                    Rule::InformationalCompleteness,
                    format!("`{id}` does not see earlier decision `{earlier}`"),
                    [id, earlier],
                );
            }
        }
    }

    // Dependence shapes.
    let owner_of = |id: &VariableId| d.variables.get(id).and_then(|v| (v.kind == Kind::Decision).then_some(v.owner).flatten());
    for v in d.variables.values().filter(|v| v.kind == Kind::Utility) {
        let Some(owner) = v.owner else { continue };
        for p in &v.parents {
            if owner_of(p) == Some(owner.other()) {
                warn.add(
                    Rule::DependenceShape,
                    format!("{owner} utility `{}` depends directly on {} decision `{p}`", v.id, owner.other()),
                    [&v.id],
                );
            }
        }
    }
    for (id, owner) in &stages {
        if *owner != Owner::Attacker {
            continue;
        }
        let affects = d.children(id.as_str()).into_iter().any(|c| {
            let cv = &d.variables[c];
            cv.kind == Kind::Chance
                && ancestors
                    .get(c)
                    .is_some_and(|a| a.iter().any(|x| owner_of(x) == Some(Owner::Defender)))
        });
        if !affects {
            warn.add(
                Rule::DependenceShape,
                format!("attacker decision `{id}` affects no chance node that also depends on a defender decision"),
                [id],
            );
        }
    }

    let violations = err.finish();
    ValidationReport {
        ok: violations.is_empty(),
        violations,
        warnings: warn.finish(),
    }
}
