#![allow(dead_code)]

pub mod affine;
pub mod game;
pub mod grid;
pub mod mc;
pub mod random;

use std::path::PathBuf;

use ara_core::model::{load_model, InfluenceDiagram};
use ara_core::solver::GameSolution;
use game::Solved;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).expect("fixture exists")
}

pub fn fixture(name: &str) -> InfluenceDiagram {
    load_model(&fixture_bytes(name)).expect("fixture loads")
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub const HOURS: [&str; 3] = ["0", "12", "24"];

pub fn hour_index(label: &str) -> usize {
    HOURS.iter().position(|h| *h == label).unwrap()
}

/// Compares every policy entry of the working-week solution against the
/// oracle, under the same evidence.
pub fn compare_working_week(sol: &GameSolution, oracle: &Solved, skip: usize) {
    let names = ["D1", "A2", "D3", "A4", "D5"];
    for (k, name) in names.iter().enumerate().skip(skip) {
        let st = sol.stage(name).unwrap();
        let pol = oracle.policies[k].as_ref().unwrap();
        for e in &st.policy.entries {
            let key: Vec<usize> = st
                .policy
                .context
                .iter()
                .zip(&e.context)
                .map(|(c, l)| match c.as_str() {
                    s if s.starts_with('S') => ["False", "True"].iter().position(|x| x == l).unwrap(),
                    _ => hour_index(l),
                })
                .collect();
            let o = &pol.entries[&key];
            assert_eq!(e.reachable, o.reachable, "{name} {:?}", e.context);
            if !e.reachable {
                continue;
            }
            let max: Vec<usize> = e.maximizers.iter().map(|m| hour_index(m)).collect();
            assert_eq!(max, o.maximizers, "{name} {:?}: {:?} vs {:?}", e.context, e.eu, o.eu);
            for (a, b) in e.eu.iter().zip(&o.eu) {
                match (a, b) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-6, "{name} {:?}: {a} vs {b}", e.context),
                    (None, None) => {}
                    other => panic!("{name} {:?}: {other:?}", e.context),
                }
            }
        }
    }
}
