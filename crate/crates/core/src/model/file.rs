//! JSON model files.
//!
//! ```json
//! {
//!   "variables": {
//!     "D": {"kind": "decision", "owner": "defender", "states": ["No", "Yes"]},
//!     "S": {"kind": "chance", "states": ["False", "True"], "parents": ["D", "A"],
//!           "table": [[1, 0], [0.2, 0.8], [1, 0], [0.8, 0.2]]},
//!     "AL": {"kind": "chance", "bounds": [0, null], "parents": ["a", "b"],
//!            "expression": "Gamma(a, b)"},
//!     "U_D": {"kind": "utility", "owner": "defender", "parents": ["D", "S"],
//!             "table": [0, -200, -100, -300]}
//!   },
//!   "stage_order": ["D", "A"],
//!   "utility_aggregates": [],
//!   "meta": {}
//! }
//! ```
//!
//! Table rows follow parent configurations with the last parent fastest.
//! Utility tables are flat, one value per configuration. `null` bounds are
//! infinite. Rows within 1e-4 of summing to one are renormalized on load.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    derive_stage_order, validate_diagram, ContinuousDomain, CpdSpec, DiscreteDomain, Domain,
    InfluenceDiagram, Kind, ModelError, Owner, UtilityAggregate, Variable, VariableId,
};
use crate::io::format_sig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    variables: IndexMap<String, VarDoc>,
    #[serde(default)]
    stage_order: Option<Vec<String>>,
    #[serde(default)]
    utility_aggregates: Vec<UtilityAggregate>,
    #[serde(default)]
    meta: BTreeMap<String, Value>,
    #[serde(default)]
    concealed: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum StateDoc {
    Label(String),
    Number(f64),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum TableDoc {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewDoc {
    #[serde(default)]
    table: Option<TableDoc>,
    #[serde(default)]
    expression: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarDoc {
    kind: Kind,
    #[serde(default)]
    owner: Option<Owner>,
    #[serde(default)]
    states: Option<Vec<StateDoc>>,
    #[serde(default)]
    state_values: Option<Vec<f64>>,
    #[serde(default)]
    bounds: Option<(Option<f64>, Option<f64>)>,
    #[serde(default)]
    parents: Vec<String>,
    #[serde(default)]
    informational_parents: Vec<String>,
    #[serde(default)]
    table: Option<TableDoc>,
    #[serde(default)]
    expression: Option<String>,
    #[serde(default)]
    bins: Option<usize>,
    #[serde(default)]
    attacker_view: Option<ViewDoc>,
    #[serde(default)]
    consequence: Option<String>,
}

fn ids(names: &[String]) -> Result<Vec<VariableId>, ModelError> {
    names.iter().map(|n| VariableId::new(n)).collect()
}

fn schema(variable: &str, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        variable: variable.to_string(),
        message: message.into(),
    }
}

fn renormalize(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.into_iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() <= 1e-4 && s > 0.0 {
                row.iter().map(|p| p / s).collect()
            } else {
                row
            }
        })
        .collect()
}

fn build_cpd(
    name: &str,
    kind: Kind,
    table: Option<TableDoc>,
    expression: Option<String>,
) -> Result<Option<CpdSpec>, ModelError> {
    match (table, expression) {
        (Some(_), Some(_)) => Err(schema(name, "give either `table` or `expression`, not both")),
        (Some(TableDoc::Rows(rows)), None) if kind != Kind::Utility => {
            Ok(Some(CpdSpec::Table(renormalize(rows))))
        }
        (Some(TableDoc::Flat(values)), None) if kind == Kind::Utility => Ok(Some(CpdSpec::Values(values))),
        (Some(TableDoc::Rows(rows)), None) if rows.is_empty() => Ok(Some(CpdSpec::Values(Vec::new()))),
        (Some(_), None) if kind == Kind::Utility => Err(schema(name, "utility tables are flat lists")),
        (Some(_), None) => Err(schema(name, "probability tables are lists of rows")),
        (None, Some(src)) => CpdSpec::expression(&src)
            .map(Some)
            .map_err(|source| ModelError::Expression {
                variable: name.to_string(),
                source,
            }),
        (None, None) => Ok(None),
    }
}

fn build_variable(name: &str, doc: VarDoc) -> Result<Variable, ModelError> {
    let id = VariableId::new(name)?;
    let domain = match (&doc.states, doc.bounds) {
        (Some(_), Some(_)) => return Err(schema(name, "give either `states` or `bounds`, not both")),
        (Some(states), None) => {
            let all_numbers = states.iter().all(|s| matches!(s, StateDoc::Number(_)));
            let labels: Vec<String> = states
                .iter()
                .map(|s| match s {
                    StateDoc::Label(l) => l.clone(),
                    StateDoc::Number(v) => format_sig(*v, 12),
                })
                .collect();
            let values = match (&doc.state_values, all_numbers) {
                (Some(v), _) => Some(v.clone()),
                (None, true) => Some(
                    states
                        .iter()
                        .map(|s| match s {
                            StateDoc::Number(v) => *v,
                            StateDoc::Label(_) => unreachable!(),
                        })
                        .collect(),
                ),
                (None, false) => None,
            };
            Domain::Discrete(DiscreteDomain {
                states: labels,
                values,
            })
        }
        (None, Some((lo, hi))) => Domain::Continuous(ContinuousDomain {
            lower: lo.unwrap_or(f64::NEG_INFINITY),
            upper: hi.unwrap_or(f64::INFINITY),
        }),
        (None, None) if doc.kind == Kind::Utility => Domain::Continuous(ContinuousDomain::REAL_LINE),
        (None, None) => return Err(schema(name, "needs `states` or `bounds`")),
    };
    if doc.state_values.is_some() && doc.states.is_none() {
        return Err(schema(name, "`state_values` needs `states`"));
    }
    let mut cpd = build_cpd(name, doc.kind, doc.table, doc.expression)?;
    if doc.kind == Kind::Decision && cpd.is_none() {
        cpd = Some(CpdSpec::Uniform);
    }
    let attacker_view = match doc.attacker_view {
        Some(v) => build_cpd(name, doc.kind, v.table, v.expression)?,
        None => None,
    };
    Ok(Variable {
        id,
        kind: doc.kind,
        owner: doc.owner,
        domain,
        cpd,
        parents: ids(&doc.parents)?,
        informational_parents: ids(&doc.informational_parents)?,
        bins: doc.bins,
        attacker_view,
        consequence: doc.consequence.as_deref().map(VariableId::new).transpose()?,
    })
}

/// Parses a model document without validating it.
pub fn parse_model(bytes: &[u8]) -> Result<InfluenceDiagram, ModelError> {
    let doc: ModelDoc = serde_json::from_slice(bytes).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut variables = IndexMap::new();
    for (name, vdoc) in doc.variables {
        let v = build_variable(&name, vdoc)?;
        variables.insert(v.id.clone(), v);
    }
    let mut diagram = InfluenceDiagram {
        variables,
        stage_order: Vec::new(),
        utility_aggregates: doc.utility_aggregates,
        meta: doc.meta,
        concealed: ids(&doc.concealed)?.into_iter().collect::<BTreeSet<_>>(),
    };
    diagram.stage_order = match doc.stage_order {
        Some(order) => ids(&order)?,
        None => derive_stage_order(&diagram)?,
    };
    Ok(diagram)
}

/// Parses and validates a model document.
pub fn load_model(bytes: &[u8]) -> Result<InfluenceDiagram, ModelError> {
    let diagram = parse_model(bytes)?;
    let report = validate_diagram(&diagram);
    if !report.ok {
        return Err(ModelError::Invalid(report));
    }
    Ok(diagram)
}

fn prob(p: f64) -> Value {
    let rounded: f64 = format_sig(p, 6).parse().unwrap_or(p);
    num(rounded)
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn strings<T: ToString>(items: impl IntoIterator<Item = T>) -> Value {
    Value::Array(items.into_iter().map(|s| Value::String(s.to_string())).collect())
}

fn cpd_fields(cpd: &CpdSpec, out: &mut serde_json::Map<String, Value>) {
    match cpd {
        CpdSpec::Uniform => {}
        CpdSpec::Table(rows) => {
            let rows = rows
                .iter()
                .map(|r| Value::Array(r.iter().map(|p| prob(*p)).collect()))
                .collect();
            out.insert("table".into(), Value::Array(rows));
        }
        CpdSpec::Values(values) => {
            out.insert("table".into(), Value::Array(values.iter().map(|v| num(*v)).collect()));
        }
        CpdSpec::Expression { expr, .. } => {
            out.insert("expression".into(), Value::String(expr.to_string()));
        }
    }
}

/// The canonical document as a JSON value.
pub fn canonical_json(d: &InfluenceDiagram) -> Value {
    let mut vars = serde_json::Map::new();
    for v in d.variables.values() {
        let mut o = serde_json::Map::new();
        o.insert("kind".into(), serde_json::to_value(v.kind).expect("kind"));
        if let Some(owner) = v.owner {
            o.insert("owner".into(), serde_json::to_value(owner).expect("owner"));
        }
        match &v.domain {
            Domain::Discrete(dd) => {
                o.insert("states".into(), strings(&dd.states));
                if let Some(values) = &dd.values {
                    o.insert("state_values".into(), Value::Array(values.iter().map(|x| num(*x)).collect()));
                }
            }
            Domain::Continuous(cd) if v.kind != Kind::Utility => {
                let b = |x: f64| if x.is_finite() { num(x) } else { Value::Null };
                o.insert("bounds".into(), Value::Array(vec![b(cd.lower), b(cd.upper)]));
            }
            Domain::Continuous(_) => {}
        }
        o.insert("parents".into(), strings(&v.parents));
        if v.kind == Kind::Decision {
            o.insert("informational_parents".into(), strings(&v.informational_parents));
        }
        if let Some(cpd) = &v.cpd {
            cpd_fields(cpd, &mut o);
        }
        if let Some(view) = &v.attacker_view {
            let mut vo = serde_json::Map::new();
            cpd_fields(view, &mut vo);
            o.insert("attacker_view".into(), Value::Object(vo));
        }
        if let Some(b) = v.bins {
            o.insert("bins".into(), Value::from(b));
        }
        if let Some(c) = &v.consequence {
            o.insert("consequence".into(), Value::String(c.to_string()));
        }
        vars.insert(v.id.to_string(), Value::Object(o));
    }
    let mut top = serde_json::Map::new();
    top.insert("variables".into(), Value::Object(vars));
    top.insert("stage_order".into(), strings(&d.stage_order));
    top.insert(
        "utility_aggregates".into(),
        serde_json::to_value(&d.utility_aggregates).expect("aggregates"),
    );
    top.insert(
        "meta".into(),
        Value::Object(d.meta.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
    );
    if !d.concealed.is_empty() {
        top.insert("concealed".into(), strings(&d.concealed));
    }
    Value::Object(top)
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize, out: &mut String| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Object(map) if !map.is_empty() => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(indent + 2, out);
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_value(&map[*k], indent + 2, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push('}');
        }
        Value::Array(items) if items.iter().any(|i| i.is_object() || i.is_array()) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(indent + 2, out);
                write_value(item, indent + 2, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push(']');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(item, indent, out);
            }
            out.push(']');
        }
        other => out.push_str(&serde_json::to_string(other).expect("scalar")),
    }
}

/// Byte-stable rendering: sorted keys, probabilities at 6 significant digits.
pub fn to_canonical_string(d: &InfluenceDiagram) -> String {
    let mut out = String::new();
    write_value(&canonical_json(d), 0, &mut out);
    out.push('\n');
    out
}
