mod common;

use std::collections::BTreeMap;

use ara_core::discretize::{compile, DiscretizationConfig};
use ara_core::infer::{
    eliminate, expected_utility, posterior_marginal, DiscreteNetwork, Evidence, Factor, InferError, NetVar,
    UtilityQuery,
};
use ara_core::model::{InfluenceDiagram, Kind, VariableId};
use ara_core::solver::{solve, SolverConfig};
use common::random::RandomNet;
use proptest::prelude::*;

fn id(s: &str) -> VariableId {
    VariableId::new(s).unwrap()
}

fn network(d: &InfluenceDiagram) -> DiscreteNetwork {
    compile(d, &DiscretizationConfig::default()).unwrap().network
}

fn ev(net: &DiscreteNetwork, pairs: &[(&str, &str)]) -> Evidence {
    pairs
        .iter()
        .map(|(v, s)| {
            let i = net.index_of(v).unwrap();
            (id(v), net.var(i).states.iter().position(|x| x == s).unwrap())
        })
        .collect()
}

fn eu(net: &DiscreteNetwork, utility: &str, decisions: &[(&str, &str)]) -> f64 {
    let conditioning: BTreeMap<VariableId, usize> = ev(net, decisions).into_iter().collect();
    expected_utility(
        net,
        &UtilityQuery {
            utility: id(utility),
            conditioning,
            evidence: Evidence::new(),
        },
    )
    .unwrap()
}

#[test]
fn success_probabilities() {
    let net = network(&common::fixture("da.json"));
    let p = posterior_marginal(&net, "S", &ev(&net, &[("D", "No"), ("A", "Yes")])).unwrap();
    assert!((p[1] - 0.8).abs() < 1e-12);
    let p = posterior_marginal(&net, "S", &ev(&net, &[("A", "No")])).unwrap();
    assert_eq!(p[1], 0.0);
}

#[test]
fn defend_attack_utilities() {
    let net = network(&common::fixture("da.json"));
    assert!((eu(&net, "U_D", &[("D", "Yes"), ("A", "No")]) + 100.0).abs() < 1e-12);
    assert!((eu(&net, "U_D", &[("D", "No"), ("A", "Yes")]) + 160.0).abs() < 1e-12);
    assert!((eu(&net, "U_A", &[("D", "No"), ("A", "Yes")]) - 60.0).abs() < 1e-12);
    assert!((eu(&net, "U_A", &[("D", "Yes"), ("A", "Yes")]) + 60.0).abs() < 1e-12);
}

#[test]
fn posterior_after_the_attack_policy_is_written_in() {
    let d = common::fixture("da.json");
    let sol = solve(&d, &SolverConfig::default()).unwrap();
    let d = d.overwrite_decision_cpd("A", &sol.stage("A").unwrap().policy).unwrap();
    let net = network(&d);
    let p = posterior_marginal(&net, "A", &Evidence::new()).unwrap();
    assert!((p[1] - 0.5).abs() < 1e-12, "{p:?}");
    let p = posterior_marginal(&net, "A", &ev(&net, &[("D", "Yes")])).unwrap();
    assert_eq!(p, vec![1.0, 0.0]);
}

#[test]
fn evidence_on_the_target_is_a_point_mass() {
    let net = network(&common::fixture("dad.json"));
    for v in net.vars() {
        if v.kind == Kind::Utility {
            continue;
        }
        let i = net.index_of(&v.name).unwrap();
        let prior = posterior_marginal(&net, &v.name, &Evidence::new()).unwrap();
        for (s, &p) in prior.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let post = posterior_marginal(&net, &v.name, &[(id(&v.name), s)].into_iter().collect()).unwrap();
            let expected: Vec<f64> = (0..net.card(i)).map(|k| if k == s { 1.0 } else { 0.0 }).collect();
            assert_eq!(post, expected);
        }
    }
}

#[test]
fn impossible_evidence_is_an_error() {
    let net = network(&common::fixture("da.json"));
    let e = ev(&net, &[("A", "No"), ("S", "True")]);
    assert_eq!(posterior_marginal(&net, "D", &e), Err(InferError::ImpossibleEvidence));
    assert_eq!(
        expected_utility(
            &net,
            &UtilityQuery {
                utility: id("U_D"),
                conditioning: BTreeMap::new(),
                evidence: e,
            }
        ),
        Err(InferError::ImpossibleEvidence)
    );
    assert!(matches!(eliminate(&net, &[], &Evidence::new()), Err(InferError::EmptyTargets)));
}

#[test]
fn chain_matches_hand_enumeration() {
    let mut net = DiscreteNetwork::new();
    let var = |name: &str, parents: Vec<usize>| NetVar {
        name: name.into(),
        kind: Kind::Chance,
        owner: None,
        states: vec!["0".into(), "1".into()],
        values: None,
        parents,
    };
    net.add(var("X", vec![]), Factor::new(vec![0], vec![2], vec![0.3, 0.7]));
    net.add(var("Y", vec![0]), Factor::new(vec![0, 1], vec![2, 2], vec![0.9, 0.1, 0.4, 0.6]));
    net.add(var("Z", vec![1]), Factor::new(vec![1, 2], vec![2, 2], vec![0.2, 0.8, 0.5, 0.5]));
    let pz1 = 0.3 * (0.9 * 0.8 + 0.1 * 0.5) + 0.7 * (0.4 * 0.8 + 0.6 * 0.5);
    let p = posterior_marginal(&net, "Z", &Evidence::new()).unwrap();
    assert!((p[1] - pz1).abs() < 1e-12);
    // P(X=1 | Z=1) by Bayes.
    let joint = 0.7 * (0.4 * 0.8 + 0.6 * 0.5);
    let p = posterior_marginal(&net, "X", &[(id("Z"), 1)].into_iter().collect()).unwrap();
    assert!((p[1] - joint / pz1).abs() < 1e-12);
}

fn random_net() -> impl Strategy<Value = RandomNet> {
    (1usize..=8)
        .prop_flat_map(|n| (proptest::collection::vec(2usize..=4, n), proptest::collection::vec(any::<u64>(), n)))
        .prop_flat_map(|(cards, seeds)| {
            let n = cards.len();
            let parents: Vec<Vec<usize>> = (0..n)
                .map(|i| {
                    let s = seeds[i];
                    (0..i).filter(|&j| (s >> (j * 3)) & 3 == 0).take(3).collect()
                })
                .collect();
            let sizes: Vec<usize> = (0..n)
                .map(|i| parents[i].iter().map(|&p| cards[p]).product::<usize>() * cards[i])
                .collect();
            let tables = sizes
                .iter()
                .map(|&k| {
                    proptest::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.01f64..1.0], k)
                })
                .collect::<Vec<_>>();
            let uparents = proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 0..=n.min(3));
            (Just(cards), Just(parents), tables, uparents)
        })
        .prop_flat_map(|(cards, parents, tables, uparents)| {
            let k: usize = uparents.iter().map(|&p| cards[p]).product();
            (
                Just(cards),
                Just(parents),
                Just(tables),
                Just(uparents),
                proptest::collection::vec(-100.0f64..100.0, k),
            )
        })
        .prop_map(|(cards, parents, tables, utility_parents, utility)| {
            // Normalize each column; an all-zero column becomes uniform.
            let tables = tables
                .into_iter()
                .zip(&cards)
                .map(|(mut t, &k)| {
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
            RandomNet {
                cards,
                parents,
                tables,
                utility_parents,
                utility,
            }
        })
}

fn random_case() -> impl Strategy<Value = (RandomNet, Vec<(usize, usize)>)> {
    random_net().prop_flat_map(|net| {
        let n = net.cards.len();
        let cards = net.cards.clone();
        let ev = proptest::collection::btree_map(0..n, 0usize..4, 0..=n.min(3)).prop_map(move |m| {
            m.into_iter().map(|(v, s)| (v, s % cards[v])).collect::<Vec<_>>()
        });
        (Just(net), ev)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn elimination_matches_enumeration((rn, evidence) in random_case()) {
        let net = rn.build(1.0, 0.0);
        let e: Evidence = evidence.iter().map(|&(v, s)| (id(&format!("X{v}")), s)).collect();
        let oracle = rn.enumerate(&evidence);
        let prior = rn.enumerate(&[]).expect("prior has mass");
        for v in 0..rn.cards.len() {
            let got = posterior_marginal(&net, &format!("X{v}"), &e);
            match &oracle {
                None => prop_assert_eq!(got, Err(InferError::ImpossibleEvidence)),
                Some((marg, _)) => {
                    let got = got.unwrap();
                    for (a, b) in got.iter().zip(&marg[v]) {
                        prop_assert!((a - b).abs() <= 1e-10, "X{}: {:?} vs {:?}", v, got, marg[v]);
                    }
                    prop_assert!((got.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                    for (s, &p) in prior.0[v].iter().enumerate() {
                        if p == 0.0 {
                            prop_assert_eq!(got[s], 0.0);
                        }
                    }
                }
            }
        }
        if let Some((_, u)) = oracle {
            let q = UtilityQuery { utility: id("U"), conditioning: BTreeMap::new(), evidence: e.clone() };
            let got = expected_utility(&net, &q).unwrap();
            prop_assert!((got - u).abs() <= 1e-9 * u.abs().max(1.0), "{} vs {}", got, u);
        }
    }

    #[test]
    fn expected_utility_is_affine((rn, evidence) in random_case()) {
        prop_assume!(rn.enumerate(&evidence).is_some());
        let e: Evidence = evidence.iter().map(|&(v, s)| (id(&format!("X{v}")), s)).collect();
        let q = UtilityQuery { utility: id("U"), conditioning: BTreeMap::new(), evidence: e };
        let base = expected_utility(&rn.build(1.0, 0.0), &q).unwrap();
        let scaled = expected_utility(&rn.build(2.0, -7.0), &q).unwrap();
        prop_assert!((scaled - (2.0 * base - 7.0)).abs() <= 1e-9 * scaled.abs().max(1.0));
    }
}

#[test]
fn fixture_marginals_sum_to_one() {
    for name in ["da.json", "dad.json", "example2.json"] {
        let net = network(&common::fixture(name));
        for v in net.vars().iter().filter(|v| v.kind != Kind::Utility) {
            let p = posterior_marginal(&net, &v.name, &Evidence::new()).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{name} {}", v.name);
        }
    }
}

#[test]
fn conditioning_requires_a_decision() {
    let net = network(&common::fixture("da.json"));
    let q = UtilityQuery {
        utility: id("U_D"),
        conditioning: [(id("S"), 0)].into_iter().collect(),
        evidence: Evidence::new(),
    };
    assert_eq!(expected_utility(&net, &q), Err(InferError::NotADecision("S".into())));
    let q = UtilityQuery {
        utility: id("S"),
        conditioning: BTreeMap::new(),
        evidence: Evidence::new(),
    };
    assert_eq!(expected_utility(&net, &q), Err(InferError::NotAUtility("S".into())));
}
