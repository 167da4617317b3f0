//! Discretization helpers and the moment-fidelity grid.

use ara_core::discretize::{discretize_node, DistributionSpec, NodeTable, ParentStates, RepresentativeRule};
use ara_core::model::{ContinuousDomain, CpdSpec, Domain, Kind, Variable, VariableId};

pub fn continuous(name: &str, lower: f64, upper: f64) -> Variable {
    Variable {
        id: VariableId::new(name).unwrap(),
        kind: Kind::Chance,
        owner: None,
        domain: Domain::Continuous(ContinuousDomain { lower, upper }),
        cpd: None,
        parents: Vec::new(),
        informational_parents: Vec::new(),
        bins: None,
        attacker_view: None,
        consequence: None,
    }
}

pub fn node(src: &str, lower: f64, upper: f64, parents: &[ParentStates], bins: usize) -> NodeTable {
    let mut v = continuous("X", lower, upper);
    v.parents = parents.iter().map(|p| p.id.clone()).collect();
    discretize_node(&v, &CpdSpec::expression(src).unwrap(), parents, bins, RepresentativeRule::ConditionalMean)
        .unwrap()
}

pub fn moments(table: &NodeTable, row: usize) -> (f64, f64) {
    let reps = table.values.as_ref().unwrap();
    let w = &table.rows[row];
    let mean: f64 = w.iter().zip(reps).map(|(p, x)| p * x).sum();
    let var: f64 = w.iter().zip(reps).map(|(p, x)| p * (x - mean) * (x - mean)).sum();
    (mean, var)
}

pub fn grid() -> Vec<(&'static str, String, DistributionSpec, ContinuousDomain)> {
    let mut out = Vec::new();
    let real = ContinuousDomain::REAL_LINE;
    let pos = ContinuousDomain { lower: 0.0, upper: f64::INFINITY };
    for i in 0..20 {
        let f = i as f64;
        let (lo, hi) = (-5.0 + 3.0 * f, -5.0 + 3.0 * f + 0.5 + f * f);
        out.push(("uniform", format!("Uniform({lo}, {hi})"), DistributionSpec::uniform(lo, hi).unwrap(), ContinuousDomain {
            lower: lo,
            upper: hi,
        }));
        let (m, v) = (-100.0 + 17.0 * f, 0.01 * (1.6f64).powi(i));
        out.push(("normal", format!("Normal({m}, {v})"), DistributionSpec::normal(m, v).unwrap(), real));
        let (m, v, a, b) = (-30.0 + 4.0 * f, 4.0 + 10.0 * f, -10.0 - f, 10.0 + 2.0 * f);
        out.push((
            "tnormal",
            format!("TNormal({m}, {v}, {a}, {b})"),
            DistributionSpec::tnormal(m, v, a, b).unwrap(),
            ContinuousDomain { lower: a, upper: b },
        ));
        let (k, s) = (0.6 + 1.3 * f, 0.2 + 0.45 * f);
        out.push(("gamma", format!("Gamma({k}, {s})"), DistributionSpec::gamma(k, s).unwrap(), pos));
    }
    out
}

/// Grid entries whose 64-bin moments miss the fidelity bounds: mean
/// within 1% of the analytic sd, variance within 5%.
pub fn moment_failures() -> Vec<String> {
    let mut failures = Vec::new();
    for (family, src, spec, dom) in grid() {
        let t = node(&src, dom.lower, dom.upper, &[], 64);
        let (mean, var) = moments(&t, 0);
        let (m, v) = (spec.mean(), spec.variance());
        if (mean - m).abs() > 0.01 * v.sqrt() || (var - v).abs() > 0.05 * v {
            failures.push(format!("{family} {src}: mean {mean} vs {m}, variance {var} vs {v}"));
        }
    }
    failures
}
