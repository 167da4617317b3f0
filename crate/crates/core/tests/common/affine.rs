//! Positive affine transforms of every utility node in a fixture.

use ara_core::expr::{parse_expression, BinOp, Expr};
use ara_core::model::{load_model, InfluenceDiagram};
use ara_core::solver::{solve, SolverConfig};
use serde_json::{json, Value};

/// Applies `3 u + 5` to every utility node, inside partition branches
/// where present.
pub fn affine(e: &Expr) -> Expr {
    match e {
        Expr::Partition { parent, branches } => Expr::Partition {
            parent: parent.clone(),
            branches: branches.iter().map(|(s, b)| (s.clone(), affine(b))).collect(),
        },
        other => Expr::binary(BinOp::Add, Expr::binary(BinOp::Mul, Expr::Number(3.0), other.clone()), Expr::Number(5.0)),
    }
}

pub fn transformed(name: &str) -> InfluenceDiagram {
    let mut v: Value = serde_json::from_slice(&super::fixture_bytes(name)).unwrap();
    for (_, spec) in v["variables"].as_object_mut().unwrap() {
        if spec["kind"] != "utility" {
            continue;
        }
        if let Some(t) = spec.get_mut("table") {
            *t = json!(t.as_array().unwrap().iter().map(|x| 3.0 * x.as_f64().unwrap() + 5.0).collect::<Vec<_>>());
        } else {
            let src = spec["expression"].as_str().unwrap();
            spec["expression"] = json!(affine(&parse_expression(src).unwrap()).to_string());
        }
    }
    load_model(&serde_json::to_vec(&v).unwrap()).unwrap()
}

/// Solves the fixture before and after `3 u + 5` and compares every
/// maximizer set and expected utility.
pub fn check_invariance(name: &str) -> Result<(), String> {
    let d = super::fixture(name);
    let base = solve(&d, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let sol = solve(&transformed(name), &SolverConfig::default()).map_err(|e| e.to_string())?;
    for (a, b) in base.stages.iter().zip(&sol.stages) {
        let shift = 5.0 * d.utility_components(a.owner).len() as f64;
        for (x, y) in a.policy.entries.iter().zip(&b.policy.entries) {
            if x.maximizers != y.maximizers {
                return Err(format!("{name} {} {:?}: {:?} vs {:?}", a.decision, x.context, x.maximizers, y.maximizers));
            }
            for (p, q) in x.eu.iter().zip(&y.eu) {
                if let (Some(p), Some(q)) = (p, q) {
                    let want = 3.0 * p + shift;
                    if (q - want).abs() > 1e-9 * want.abs().max(1.0) {
                        return Err(format!("{name} {}: {q} vs {want}", a.decision));
                    }
                }
            }
        }
    }
    Ok(())
}
