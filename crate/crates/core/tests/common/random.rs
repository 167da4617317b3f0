//! Seeded random networks and games with brute-force oracles.

use std::collections::{BTreeMap, BTreeSet};

use ara_core::infer::{
    expected_utility, posterior_marginal, DiscreteNetwork, Evidence, Factor, InferError, NetVar, UtilityQuery,
};
use ara_core::model::{load_model, Kind, Owner, VariableId};
use ara_core::solver::{solve, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::game::{Game, Node, Side, Solved};

/// A random net: chance nodes in topological order plus one utility node.
#[derive(Debug, Clone)]
pub struct RandomNet {
    pub cards: Vec<usize>,
    pub parents: Vec<Vec<usize>>,
    pub tables: Vec<Vec<f64>>,
    pub utility_parents: Vec<usize>,
    pub utility: Vec<f64>,
}

impl RandomNet {
    pub fn build(&self, alpha: f64, beta: f64) -> DiscreteNetwork {
        let mut net = DiscreteNetwork::new();
        for i in 0..self.cards.len() {
            let mut scope = self.parents[i].clone();
            scope.push(i);
            let card = scope.iter().map(|&v| self.cards[v]).collect();
            net.add(
                NetVar {
                    name: format!("X{i}"),
                    kind: Kind::Chance,
                    owner: None,
                    states: (0..self.cards[i]).map(|s| format!("s{s}")).collect(),
                    values: None,
                    parents: self.parents[i].clone(),
                },
                Factor::new(scope, card, self.tables[i].clone()),
            );
        }
        let card = self.utility_parents.iter().map(|&v| self.cards[v]).collect();
        net.add(
            NetVar {
                name: "U".into(),
                kind: Kind::Utility,
                owner: Some(Owner::Defender),
                states: vec![],
                values: None,
                parents: self.utility_parents.clone(),
            },
            Factor::new(
                self.utility_parents.clone(),
                card,
                self.utility.iter().map(|u| alpha * u + beta).collect(),
            ),
        );
        net
    }

    pub fn assignments(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for &c in &self.cards {
            out = out
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    (0..c).map(move |s| {
                        let mut q = p.clone();
                        q.push(s);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn weight(&self, x: &[usize]) -> f64 {
        (0..self.cards.len())
            .map(|i| {
                let cfg = self.parents[i].iter().fold(0, |acc, &p| acc * self.cards[p] + x[p]);
                self.tables[i][cfg * self.cards[i] + x[i]]
            })
            .product()
    }

    pub fn utility_at(&self, x: &[usize]) -> f64 {
        let cfg = self.utility_parents.iter().fold(0, |acc, &p| acc * self.cards[p] + x[p]);
        self.utility[cfg]
    }

    /// Marginals and expected utility by full enumeration.
    pub fn enumerate(&self, evidence: &[(usize, usize)]) -> Option<(Vec<Vec<f64>>, f64)> {
        let mut marg: Vec<Vec<f64>> = self.cards.iter().map(|&c| vec![0.0; c]).collect();
        let (mut total, mut u) = (0.0, 0.0);
        for x in self.assignments() {
            if evidence.iter().any(|&(v, s)| x[v] != s) {
                continue;
            }
            let w = self.weight(&x);
            total += w;
            u += w * self.utility_at(&x);
            for (v, &s) in x.iter().enumerate() {
                marg[v][s] += w;
            }
        }
        if total <= 0.0 {
            return None;
        }
        marg.iter_mut().for_each(|m| m.iter_mut().for_each(|p| *p /= total));
        Some((marg, u / total))
    }
}


impl RandomNet {
    /// Up to 8 chance nodes of 2 to 4 states, some zero entries, and a
    /// utility over up to 3 of them; evidence on up to 3 nodes.
    pub fn seeded(seed: u64) -> (RandomNet, Vec<(usize, usize)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=8usize);
        let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=4)).collect();
        let parents: Vec<Vec<usize>> =
            (0..n).map(|i| (0..i).filter(|_| rng.random_bool(0.25)).take(3).collect()).collect();
        let tables = (0..n)
            .map(|i| {
                let k = cards[i];
                let cols: usize = parents[i].iter().map(|&p| cards[p]).product();
                let mut t: Vec<f64> = (0..cols * k)
                    .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.01..1.0) })
                    .collect();
                for col in t.chunks_mut(k) {
                    let s: f64 = col.iter().sum();
                    if s == 0.0 {
                        col.iter_mut().for_each(|x| *x = 1.0 / k as f64);
                    } else {
                        col.iter_mut().for_each(|x| *x /= s);
                    }
                }
                t
            })
            .collect();
        let utility_parents: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).take(3).collect();
        let k: usize = utility_parents.iter().map(|&p| cards[p]).product();
        let utility = (0..k).map(|_| rng.random_range(-100.0..100.0)).collect();
        let mut evidence: Vec<(usize, usize)> = Vec::new();
        for v in 0..n {
            if evidence.len() < 3 && rng.random_bool(0.3) {
                evidence.push((v, rng.random_range(0..cards[v])));
            }
        }
        let net = RandomNet {
            cards,
            parents,
            tables,
            utility_parents,
            utility,
        };
        (net, evidence)
    }

    /// Largest absolute gap between elimination and enumeration over all
    /// marginals and the expected utility. Impossible evidence must be
    /// reported as such.
    pub fn elimination_error(&self, evidence: &[(usize, usize)]) -> Result<f64, String> {
        let net = self.build(1.0, 0.0);
        let id = |v: usize| VariableId::new(&format!("X{v}")).unwrap();
        let e: Evidence = evidence.iter().map(|&(v, s)| (id(v), s)).collect();
        let Some((marg, u)) = self.enumerate(evidence) else {
            return match posterior_marginal(&net, "X0", &e) {
                Err(InferError::ImpossibleEvidence) => Ok(0.0),
                other => Err(format!("impossible evidence gave {other:?}")),
            };
        };
        let mut worst: f64 = 0.0;
        for (v, m) in marg.iter().enumerate() {
            let got = posterior_marginal(&net, &format!("X{v}"), &e).map_err(|err| err.to_string())?;
            for (a, b) in got.iter().zip(m) {
                worst = worst.max((a - b).abs());
            }
        }
        let q = UtilityQuery {
            utility: VariableId::new("U").unwrap(),
            conditioning: BTreeMap::new(),
            evidence: e,
        };
        let got = expected_utility(&net, &q).map_err(|err| err.to_string())?;
        Ok(worst.max((got - u).abs()))
    }
}

/// A random alternating game as a model document and its oracle.
pub fn random_game(seed: u64) -> (Value, Game) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_dec = rng.random_range(2..=3usize);
    let n_ch = rng.random_range(0..=3usize);
    let mut card = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut nodes = Vec::new();
    let mut vars = serde_json::Map::new();
    for k in 0..n_dec {
        let side = if k % 2 == 0 { Side::Defender } else { Side::Attacker };
        let name = format!("{}{k}", if side == Side::Defender { "D" } else { "A" });
        let c = rng.random_range(2..=4usize);
        let info: Vec<usize> = (0..k).collect();
        vars.insert(
            name.clone(),
            json!({
                "kind": "decision",
                "owner": if side == Side::Defender { "defender" } else { "attacker" },
                "states": (0..c).map(|s| format!("s{s}")).collect::<Vec<_>>(),
                "informational_parents": info.iter().map(|&i| names[i].clone()).collect::<Vec<String>>(),
            }),
        );
        card.push(c);
        names.push(name);
        nodes.push(Node::Decision { side, info });
    }
    for j in 0..n_ch {
        let name = format!("C{j}");
        let c = rng.random_range(2..=3usize);
        let mut parents: Vec<usize> = (0..n_dec + j).filter(|_| rng.random_bool(0.4)).collect();
        parents.truncate(2);
        let configs: usize = parents.iter().map(|&p| card[p]).product();
        let mut table = Vec::new();
        let mut rows = Vec::new();
        for _ in 0..configs {
            let mut w: Vec<f64> = (0..c).map(|_| f64::from(rng.random_range(0..=3u8))).collect();
            if w.iter().all(|x| *x == 0.0) {
                w[0] = 1.0;
            }
            let s: f64 = w.iter().sum();
            let row: Vec<f64> = w.iter().map(|x| x / s).collect();
            table.extend(&row);
            rows.push(row);
        }
        vars.insert(
            name.clone(),
            json!({
                "kind": "chance",
                "states": (0..c).map(|s| format!("s{s}")).collect::<Vec<_>>(),
                "parents": parents.iter().map(|&i| names[i].clone()).collect::<Vec<String>>(),
                "table": rows,
            }),
        );
        card.push(c);
        names.push(name);
        nodes.push(Node::Chance { parents, table });
    }
    let mut utilities = Vec::new();
    for (uname, owner) in [("U_D", "defender"), ("U_A", "attacker")] {
        let mut parents: Vec<usize> = (0..n_dec).collect();
        parents.extend((n_dec..n_dec + n_ch).filter(|_| rng.random_bool(0.5)).take(2));
        let configs: usize = parents.iter().map(|&p| card[p]).product();
        let values: Vec<f64> = (0..configs).map(|_| f64::from(rng.random_range(-5..=5i8))).collect();
        vars.insert(
            uname.into(),
            json!({
                "kind": "utility",
                "owner": owner,
                "parents": parents.iter().map(|&i| names[i].clone()).collect::<Vec<String>>(),
                "table": values,
            }),
        );
        utilities.push((parents, values));
    }
    let doc = json!({"variables": vars, "stage_order": names[..n_dec]});
    let cards = card.clone();
    let utility = move |side: Side, x: &[usize]| {
        let (parents, values) = &utilities[if side == Side::Defender { 0 } else { 1 }];
        let cfg = parents.iter().fold(0, |acc, &p| acc * cards[p] + x[p]);
        values[cfg]
    };
    let game = Game {
        card,
        nodes,
        stages: (0..n_dec).collect(),
        utility: Box::new(utility),
    };
    (doc, game)
}

pub fn state_index(label: &str) -> usize {
    label[1..].parse().unwrap()
}

/// The oracle's counterpart of the engine's optimal path: tied stages
/// are not fixed, and unfixed context variables take their posterior mode.
pub fn oracle_path(game: &Game, sol: &Solved) -> (Vec<Vec<usize>>, BTreeMap<usize, usize>) {
    let mut fixed: BTreeMap<usize, usize> = BTreeMap::new();
    let mut chosen = Vec::new();
    for (k, &var) in game.stages.iter().enumerate() {
        let pol = sol.policies[k].as_ref().unwrap();
        let key: Vec<usize> = pol
            .info
            .iter()
            .map(|&i| match fixed.get(&i) {
                Some(&s) => s,
                None => {
                    let f = fixed.clone();
                    let post = game.marginal(sol, i, &|x: &[usize]| f.iter().all(|(&v, &s)| x[v] == s));
                    post.iter().enumerate().fold(0, |b, (s, p)| if *p > post[b] + 1e-12 { s } else { b })
                }
            })
            .collect();
        let max = pol.entries[&key].maximizers.clone();
        if max.len() == 1 {
            fixed.insert(var, max[0]);
        }
        chosen.push(max);
    }
    (chosen, fixed)
}


/// Solves the seeded game with the engine and compares every policy entry,
/// the optimal path and both utilities with exhaustive search. Returns the
/// number of tied entries.
pub fn check_game(seed: u64, tol: f64) -> Result<usize, String> {
    let (doc, game) = random_game(seed);
    let d = load_model(&serde_json::to_vec(&doc).unwrap()).map_err(|e| format!("seed {seed}: {e}"))?;
    let sol = solve(&d, &SolverConfig::default()).map_err(|e| format!("seed {seed}: {e}"))?;
    let oracle = game.solve(0, &|_| true, 1e-9);
    let mut tied = 0;
    for (k, st) in sol.stages.iter().enumerate() {
        let pol = oracle.policies[k].as_ref().unwrap();
        for e in &st.policy.entries {
            let key: Vec<usize> = e.context.iter().map(|l| state_index(l)).collect();
            let o = &pol.entries[&key];
            let max: BTreeSet<usize> = e.maximizers.iter().map(|m| state_index(m)).collect();
            let omax: BTreeSet<usize> = o.maximizers.iter().copied().collect();
            if max != omax {
                return Err(format!("seed {seed} {} {:?}: {max:?} vs {omax:?}", st.decision, e.context));
            }
            tied += usize::from(max.len() > 1);
            for (a, b) in e.eu.iter().zip(&o.eu) {
                match (a, b) {
                    (Some(a), Some(b)) if (a - b).abs() <= tol => {}
                    (None, None) => {}
                    other => return Err(format!("seed {seed} {} {:?}: {other:?}", st.decision, e.context)),
                }
            }
        }
    }
    let (chosen, fixed) = oracle_path(&game, &oracle);
    let engine: Vec<Vec<usize>> = sol
        .stages
        .iter()
        .map(|st| {
            let mut steps = sol.defender_strategy.iter().chain(&sol.anticipated_attacks);
            let step = steps.find(|p| p.decision == st.decision).unwrap();
            step.choice.iter().map(|c| state_index(c)).collect()
        })
        .collect();
    if engine != chosen {
        return Err(format!("seed {seed}: path {engine:?} vs {chosen:?}"));
    }
    let ev = |x: &[usize]| fixed.iter().all(|(&v, &s)| x[v] == s);
    for (side, psi) in [(Side::Defender, sol.psi_defender), (Side::Attacker, sol.psi_attacker)] {
        let want = game.expected(&oracle, side, &ev, None).unwrap();
        match psi {
            Some(p) if (p - want).abs() <= tol => {}
            other => return Err(format!("seed {seed} {side:?}: {other:?} vs {want}")),
        }
    }
    Ok(tied)
}
