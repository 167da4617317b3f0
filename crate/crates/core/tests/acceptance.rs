//! Acceptance report: one PASS or FAIL line per primary criterion, with
//! the measured values underneath. Exits 0 after reporting unless
//! `ARA_ACCEPTANCE_STRICT=1`, in which case any failure exits 1.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ara_core::discretize::compile;
use ara_core::dynamic::{ObservationMode, Session};
use ara_core::infer::{expected_utility, UtilityQuery};
use ara_core::model::VariableId;
use ara_core::solver::{solve, GameSolution, PathStep, SolverConfig};
use common::game::working_week;
use common::mc;

struct Report {
    failed: usize,
    total: usize,
}

/// Collects sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    notes: Vec<(bool, String)>,
}

impl Checks {
    fn check(&mut self, ok: bool, note: impl Into<String>) {
        self.notes.push((ok, note.into()));
    }
    fn ok(&self) -> bool {
        self.notes.iter().all(|(ok, _)| *ok)
    }
}

impl Report {
    fn record(&mut self, name: &str, elapsed: Duration, checks: Checks) {
        self.total += 1;
        let ok = checks.ok();
        self.failed += usize::from(!ok);
        println!("{}  {name}  ({:.2}s)", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
        for (ok, note) in checks.notes {
            println!("      {} {note}", if ok { "ok " } else { "BAD" });
        }
    }
}

fn choices(steps: &[PathStep]) -> Vec<(String, Vec<String>)> {
    steps.iter().map(|s| (s.decision.to_string(), s.choice.clone())).collect()
}

fn owned(pairs: &[(&str, &[&str])]) -> Vec<(String, Vec<String>)> {
    pairs.iter().map(|(d, c)| (d.to_string(), c.iter().map(|s| s.to_string()).collect())).collect()
}

fn entry_eu(sol: &GameSolution, stage: &str, context: &[&str], state: &str) -> Option<f64> {
    let p = &sol.stage(stage)?.policy;
    let e = p.entries.iter().find(|e| e.context.iter().map(String::as_str).eq(context.iter().copied()))?;
    let i = p.states.iter().position(|s| s == state)?;
    e.eu[i]
}

fn maximizers(sol: &GameSolution, stage: &str, context: &[&str]) -> Vec<String> {
    sol.stage(stage)
        .and_then(|st| st.policy.entries.iter().find(|e| e.context.iter().map(String::as_str).eq(context.iter().copied())))
        .map(|e| e.maximizers.clone())
        .unwrap_or_default()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn defend_attack(r: &mut Report) {
    let (sol, dt) = timed(|| solve(&common::fixture("da.json"), &SolverConfig::default()).unwrap());
    let mut c = Checks::default();
    c.check(choices(&sol.defender_strategy) == owned(&[("D", &["Yes"])]), format!("strategy {:?}", choices(&sol.defender_strategy)));
    let psi = sol.psi_defender.unwrap_or(f64::NAN);
    c.check((psi + 100.0).abs() <= 1e-9, format!("defender EU {psi}"));
    let pol = (maximizers(&sol, "A", &["Yes"]), maximizers(&sol, "A", &["No"]));
    c.check(pol == (vec!["No".to_string()], vec!["Yes".to_string()]), format!("attacker policy D=Yes->{:?}, D=No->{:?}", pol.0, pol.1));
    let eus = [
        entry_eu(&sol, "A", &["No"], "Yes"),
        entry_eu(&sol, "A", &["No"], "No"),
        entry_eu(&sol, "A", &["Yes"], "Yes"),
        entry_eu(&sol, "A", &["Yes"], "No"),
    ];
    let want = [60.0, 0.0, -60.0, 0.0];
    let ok = eus.iter().zip(want).all(|(g, w)| g.is_some_and(|g| (g - w).abs() <= 1e-9));
    c.check(ok, format!("attacker stage EUs {eus:?}"));
    c.check(dt < Duration::from_secs(1), "runtime under 1s");
    r.record("[1] Defend-Attack fixture", dt, c);
}

fn defend_attack_defend(r: &mut Report) {
    let (sol, dt) = timed(|| solve(&common::fixture("dad.json"), &SolverConfig::default()).unwrap());
    let mut c = Checks::default();
    let d1 = maximizers(&sol, "D1", &[]);
    c.check(d1 == ["3"], format!("d1* = {d1:?}"));
    // Columns by A2 (for D3) and by D1 (for A2), rows are the decision's states.
    let table1 = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.5, 0.0, 0.5, 0.0], [1.0, 0.0, 0.0, 0.0]];
    let third = 0.33333334;
    let table2 = [[0.0, third, third, third], [0.0, 0.0, 0.5, 0.5], [0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0]];
    let mut worst1: f64 = 0.0;
    let d3 = &sol.stage("D3").unwrap().policy;
    for e in &d3.entries {
        let a2: usize = e.context[1].parse().unwrap();
        for (g, w) in d3.column(e).iter().zip(&table1[a2]) {
            worst1 = worst1.max((g - w).abs());
        }
    }
    c.check(worst1 <= 1e-6, format!("D3 policy vs Table 1: max gap {worst1:.2e}"));
    let mut worst2: f64 = 0.0;
    let a2 = &sol.stage("A2").unwrap().policy;
    for e in &a2.entries {
        let d1: usize = e.context[0].parse().unwrap();
        for (g, w) in a2.column(e).iter().zip(&table2[d1]) {
            worst2 = worst2.max((g - w).abs());
        }
    }
    c.check(worst2 <= 1e-6, format!("A2 policy vs Table 2: max gap {worst2:.2e}"));
    let psi = sol.psi_defender.unwrap_or(f64::NAN);
    c.check(psi.abs() <= 1e-9, format!("defender EU {psi}"));
    c.check(dt < Duration::from_secs(5), "runtime under 5s");
    r.record("[2] Defend-Attack-Defend fixture", dt, c);
}

fn working_week_static(r: &mut Report) {
    let (sol, dt) = timed(|| solve(&common::fixture("example2.json"), &SolverConfig::default()).unwrap());
    let mut c = Checks::default();
    let d = choices(&sol.defender_strategy);
    c.check(d == owned(&[("D1", &["12"]), ("D3", &["12"]), ("D5", &["0"])]), format!("defender strategy {d:?}"));
    let a = choices(&sol.anticipated_attacks);
    c.check(a == owned(&[("A2", &["0"]), ("A4", &["0"])]), format!("anticipated attacks {a:?}"));
    let psi = sol.psi_defender.unwrap_or(f64::NAN);
    c.check((psi + 18.0).abs() <= 0.05 * 18.0, format!("defender EU {psi} (thousand GBP)"));
    c.check(dt < Duration::from_secs(60), "runtime under 60s");
    r.record("[3] Working-week fixture", dt, c);
}

/// Defender EU of one (d, a) cell on the unsolved network.
fn defender_cell(net: &ara_core::infer::DiscreteNetwork, d: usize, a: usize) -> f64 {
    let conditioning: BTreeMap<VariableId, usize> =
        [(VariableId::new("D").unwrap(), d), (VariableId::new("A").unwrap(), a)].into_iter().collect();
    expected_utility(
        net,
        &UtilityQuery {
            utility: VariableId::new("DU").unwrap(),
            conditioning,
            evidence: Default::default(),
        },
    )
    .unwrap()
}

fn denial_of_service(r: &mut Report) {
    let d = common::fixture("example1.json");
    let config = SolverConfig {
        bins: 64,
        ..SolverConfig::default()
    };
    let t = Instant::now();
    let sol = solve(&d, &config).unwrap();
    let mut c = Checks::default();
    let dstar = maximizers(&sol, "D", &[]);
    c.check(dstar == ["5"], format!("d* = {dstar:?} (published 5)"));
    let a5 = maximizers(&sol, "A", &["5"]);
    c.check(a5 == ["30"], format!("a*(5) = {a5:?}"));
    let psi = sol.psi_defender.unwrap_or(f64::NAN);
    c.check((-3605.0 * 1.02..=-3605.0 * 0.98).contains(&psi), format!("defender EU {psi} (published -3605)"));

    let net = compile(&d, &config.discretization()).unwrap().network;
    let a_states = sol.stage("A").unwrap().policy.states.clone();
    let mut outside = Vec::new();
    let mut cells = 0;
    for (di, dv) in mc::DEFENCES.iter().enumerate() {
        let dlabel = format!("{dv}");
        for (ai, alabel) in a_states.iter().enumerate() {
            let a: u64 = alabel.parse().unwrap();
            let oracle = mc::cell(*dv, a, 1_000_000, mc::SEED);
            let du = defender_cell(&net, di, ai);
            let au = entry_eu(&sol, "A", &[&dlabel], alabel).unwrap_or(f64::NAN);
            for (side, engine, est) in [("DU", du, oracle.defender), ("AU", au, oracle.attacker)] {
                cells += 1;
                if (engine - est.mean).abs() > 2.0 * est.se {
                    outside.push(format!(
                        "{side}(d={dv}, a={a}): engine {engine:.3}, oracle {:.3} +/- {:.3}",
                        est.mean, est.se
                    ));
                }
            }
        }
    }
    c.check(
        outside.is_empty(),
        format!("Monte Carlo (10^6 samples, seed {:#x}): {} of {cells} cell EUs outside 2 SE", mc::SEED, outside.len()),
    );
    for o in outside.iter().take(8) {
        c.check(false, format!("  {o}"));
    }
    let dt = t.elapsed();
    c.check(dt < Duration::from_secs(300), "runtime under 5min");
    r.record("[4] DDoS fixture at 64 bins", dt, c);
}

fn labels(xs: &[usize]) -> Vec<String> {
    xs.iter().map(|&i| common::HOURS[i].to_string()).collect()
}

fn example3(r: &mut Report) {
    let t = Instant::now();
    let mut c = Checks::default();
    let game = working_week(&[]);
    let mut s = Session::open(&common::fixture("example2.json"), ObservationMode::Attack, SolverConfig::default()).unwrap();
    s.commit("D1", "12").unwrap();
    s.observe_attack("A2", "24").unwrap();
    let got = s.recommend().unwrap().maximizers;
    let oracle = game.solve(2, &|x: &[usize]| x[0] == 1 && x[1] == 2, 1e-6);
    let (want, _) = game.recommendation(&oracle, &|x: &[usize]| x[0] == 1 && x[1] == 2, 1e-6);
    c.check(got == ["24"] && got == labels(&want), format!("after A2=24: D3 = {got:?} (oracle {:?})", labels(&want)));
    s.commit("D3", "24").unwrap();
    s.observe_attack("A4", "12").unwrap();
    let got = s.recommend().unwrap().maximizers;
    let ev = |x: &[usize]| x[0] == 1 && x[1] == 2 && x[2] == 2 && x[3] == 1;
    let oracle = game.solve(4, &ev, 1e-6);
    let (want, _) = game.recommendation(&oracle, &ev, 1e-6);
    c.check(got == ["12"] && got == labels(&want), format!("after A4=12: D5 = {got:?} (oracle {:?})", labels(&want)));
    r.record("[5] Dynamic script, observed attacks", t.elapsed(), c);
}

fn example4(r: &mut Report) {
    let t = Instant::now();
    let mut c = Checks::default();
    let mut s = Session::open(&common::fixture("example2.json"), ObservationMode::Consequence, SolverConfig::default()).unwrap();
    s.commit("D1", "12").unwrap();
    s.observe_consequence("A2", "False").unwrap();
    let rec = s.recommend().unwrap();
    c.check(rec.maximizers == ["12"], format!("after S2=False: D3 = {:?}", rec.maximizers));
    let plan: BTreeMap<String, Vec<String>> = rec
        .defender_plan
        .iter()
        .chain(&rec.anticipated_attacks)
        .map(|p| (p.decision.to_string(), p.choice.clone()))
        .collect();
    c.check(
        plan.get("A4").is_some_and(|a| a == &["0"]) && plan.get("D5").is_some_and(|d| d == &["0"]),
        format!("anticipated a4* = {:?}, d5* = {:?}", plan.get("A4"), plan.get("D5")),
    );
    s.commit("D3", "12").unwrap();
    s.observe_consequence("A4", "True").unwrap();
    let got = s.recommend().unwrap().maximizers;
    let game = working_week(&[2, 4]);
    let ev = |x: &[usize]| x[0] == 1 && x[5] == 0 && x[2] == 1 && x[7] == 1;
    let oracle = game.solve(4, &ev, 1e-6);
    let (want, best) = game.recommendation(&oracle, &ev, 1e-6);
    c.check(
        got == labels(&want),
        format!("after S4=True: D5 = {got:?}, brute-force oracle {:?} (EU {best:.6})", labels(&want)),
    );
    r.record("[6] Dynamic script, observed consequences", t.elapsed(), c);
}

fn property_suite(r: &mut Report) {
    let t = Instant::now();
    let mut c = Checks::default();

    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for seed in 0..200 {
        let (net, ev) = common::random::RandomNet::seeded(seed);
        match net.elimination_error(&ev) {
            Ok(e) => worst = worst.max(e),
            Err(e) => errors.push(format!("net {seed}: {e}")),
        }
    }
    c.check(worst <= 1e-10 && errors.is_empty(), format!("(a) 200 random nets: max abs error {worst:.2e} {errors:?}"));

    let mut bad = Vec::new();
    for seed in 0..100 {
        if let Err(e) = common::random::check_game(seed, 1e-9) {
            bad.push(e);
        }
    }
    c.check(bad.is_empty(), format!("(b) 100 random games vs exhaustive search {bad:?}"));

    let bad: Vec<String> = ["da.json", "dad.json", "example2.json", "example1.json"]
        .iter()
        .filter_map(|f| common::affine::check_invariance(f).err())
        .collect();
    c.check(bad.is_empty(), format!("(c) maximizers invariant under 3u + 5 on all fixtures {bad:?}"));

    let bad = common::grid::moment_failures();
    c.check(bad.is_empty(), format!("(d) moment fidelity over 80 grid specs at 64 bins {bad:?}"));

    c.check(replay_and_recovery().is_ok(), format!("(e) session replay and crash recovery {:?}", replay_and_recovery().err()));
    r.record("[7] Property suite", t.elapsed(), c);
}

fn replay_and_recovery() -> Result<(), String> {
    let mut s = Session::open(&common::fixture("example2.json"), ObservationMode::Attack, SolverConfig::default())
        .map_err(|e| e.to_string())?;
    s.commit("D1", "12").map_err(|e| e.to_string())?;
    s.observe_attack("A2", "24").map_err(|e| e.to_string())?;
    let r = Session::replay(&s.log).map_err(|e| e.to_string())?;
    if r != s || serde_json::to_string(&r.solution).unwrap() != serde_json::to_string(&s.solution).unwrap() {
        return Err("replayed session differs".into());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = ara_core::dynamic::SessionStore::new(dir.path()).map_err(|e| e.to_string())?;
    store.append(&s.id, &s.log).map_err(|e| e.to_string())?;
    let path = store.path(&s.id);
    let raw = std::fs::read(&path).map_err(|e| e.to_string())?;
    std::fs::write(&path, &raw[..raw.len() - 15]).map_err(|e| e.to_string())?;
    let restored = store.restore(&s.id).map_err(|e| e.to_string())?;
    if restored.solution != s.solution || restored.recommend().ok() != s.recommend().ok() {
        return Err("recovered session differs".into());
    }
    if store.read(&s.id).map_err(|e| e.to_string())?.len() != s.log.len() {
        return Err("regenerated tail was not persisted".into());
    }
    Ok(())
}

fn main() {
    let mut r = Report { failed: 0, total: 0 };
    println!("acceptance criteria");
    defend_attack(&mut r);
    defend_attack_defend(&mut r);
    working_week_static(&mut r);
    denial_of_service(&mut r);
    example3(&mut r);
    example4(&mut r);
    property_suite(&mut r);
    println!("acceptance: {} of {} criteria pass", r.total - r.failed, r.total);
    if r.failed > 0 && std::env::var("ARA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
