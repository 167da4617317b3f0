//! Live decision sessions.
//!
//! A session starts from a solved game and follows it as it is played:
//! the defender commits decisions (possibly deviating from the advice),
//! then either the attacker's action or only its consequence is observed,
//! and the remaining stages are re-solved under the accumulated evidence.
//! Decisions in the working diagram always stay uniform; what has happened
//! lives in the evidence map.
//!
//! When only a consequence `S` of attack `A` is seen, `A` is marked
//! concealed, dropped from the informational parents of later defender
//! decisions, and `S` becomes an informational parent of the next one.
//!
//! # Event log
//!
//! Each session persists as JSON lines, one event per line:
//!
//! ```text
//! {"seq":1,"kind":"opened","payload":{"id":"…","mode":"attack","config":{…},"model":{…}},"ts":"2024-05-06T09:00:00Z"}
//! {"seq":2,"kind":"solved","payload":{"pointer":0,"stage":"D1","maximizers":["12"],"eu":-18.0,…},"ts":"…"}
//! {"seq":3,"kind":"committed","payload":{"stage":"D1","state":"12"},"ts":"…"}
//! {"seq":5,"kind":"observed_attack","payload":{"stage":"A2","state":"24"},"ts":"…"}
//! {"seq":7,"kind":"observed_consequence","payload":{"stage":"A2","variable":"S2","state":"False"},"ts":"…"}
//! ```
//!
//! * `seq`: dense from 1.
//! * `kind`: `opened` (first line only), `committed`, `observed_attack`,
//!   `observed_consequence`, `solved`.
//! * `payload`: `opened` embeds the canonical model, the solver
//!   configuration and the observation mode; `solved` records the
//!   recommendation it produced and is informational on replay.
//! * `ts`: RFC 3339 UTC timestamp.
//!
//! Replaying a log re-applies the `opened`, `committed` and `observed_*`
//! events and re-solves, which reproduces the session exactly.

mod log;

pub use log::{parse_log, read_log, EventKind, SessionEvent, SessionStore};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::infer::{expected_utility, UtilityQuery};
use crate::model::{self, parse_model, to_canonical_string, InfluenceDiagram, Kind, ModelError, Owner, VariableId};
use crate::solver::{self, evidence_indices, GameSolution, LabelEvidence, PathStep, SolveError, SolverConfig, TreeNode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("out of order: {0}")]
    OutOfOrder(String),
    #[error("`{0}` is not a defender stage")]
    WrongRole(String),
    #[error("observation mode does not allow this: {0}")]
    Mode(String),
    #[error("the session is complete")]
    Complete,
    #[error("unknown state `{state}` for `{variable}`")]
    UnknownState { variable: String, state: String },
    #[error("`{variable}` is already `{existing}`, cannot set `{new}`")]
    Contradiction {
        variable: String,
        existing: String,
        new: String,
    },
    #[error("`{0}` has no consequence node")]
    NoConsequence(String),
    #[error("surgery left an invalid diagram: {0}")]
    Surgery(String),
    #[error("event log: {0}")]
    Log(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("session `{0}` not found")]
    NotFound(String),
}

impl SessionError {
    /// Whether the error is the operator's fault rather than the engine's.
    pub fn is_client_error(&self) -> bool {
        !matches!(self, SessionError::Io(_) | SessionError::Log(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// The attacker's actions are seen.
    Attack,
    /// Only whether each attack succeeded is seen.
    Consequence,
    /// Either, chosen per observation.
    Mixed,
}

impl ObservationMode {
    fn allows(self, kind: ObservationKind) -> bool {
        matches!(
            (self, kind),
            (ObservationMode::Mixed, _)
                | (ObservationMode::Attack, ObservationKind::Attack)
                | (ObservationMode::Consequence, ObservationKind::Consequence)
        )
    }

    pub fn default_kind(self) -> ObservationKind {
        match self {
            ObservationMode::Consequence => ObservationKind::Consequence,
            _ => ObservationKind::Attack,
        }
    }
}

impl std::str::FromStr for ObservationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "attack" => Ok(ObservationMode::Attack),
            "consequence" => Ok(ObservationMode::Consequence),
            "mixed" => Ok(ObservationMode::Mixed),
            _ => Err(format!("unknown mode `{s}` (attack, consequence or mixed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Attack,
    Consequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub stage: VariableId,
    pub variable: VariableId,
    pub state: String,
    pub kind: ObservationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Pending,
    Complete,
}

/// Advice for the current defender stage, or the outcome once complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub status: SessionStatus,
    pub stage: Option<VariableId>,
    pub maximizers: Vec<String>,
    pub eu: Option<f64>,
    /// State already committed at this stage, if any.
    pub committed: Option<String>,
    pub defender_plan: Vec<PathStep>,
    pub anticipated_attacks: Vec<PathStep>,
    /// Defender utility expected under all evidence, once complete.
    pub realized_eu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub base: InfluenceDiagram,
    pub current: InfluenceDiagram,
    pub mode: ObservationMode,
    pub config: SolverConfig,
    pub evidence: LabelEvidence,
    pub committed: BTreeMap<VariableId, String>,
    pub observations: Vec<Observation>,
    /// Index into the stage order of the current defender stage; equal to
    /// the number of stages once the game is over.
    pub pointer: usize,
    pub solution: Option<GameSolution>,
    pub log: Vec<SessionEvent>,
    stages: Vec<(VariableId, Owner)>,
}

impl Session {
    /// Opens a session on `diagram` and solves it.
    pub fn open(diagram: &InfluenceDiagram, mode: ObservationMode, config: SolverConfig) -> Result<Session, SessionError> {
        Self::open_with(uuid::Uuid::new_v4().to_string(), diagram, mode, config, log::now())
    }

    /// Like [`Session::open`] with a caller-chosen id.
    pub fn open_with_id(
        id: String,
        diagram: &InfluenceDiagram,
        mode: ObservationMode,
        config: SolverConfig,
    ) -> Result<Session, SessionError> {
        Self::open_with(id, diagram, mode, config, log::now())
    }

    fn open_with(
        id: String,
        diagram: &InfluenceDiagram,
        mode: ObservationMode,
        config: SolverConfig,
        ts: String,
    ) -> Result<Session, SessionError> {
        let report = model::validate_diagram(diagram);
        if !report.ok {
            return Err(ModelError::Invalid(report).into());
        }
        // Work from the canonical form so that replay sees the same numbers.
        let canonical = to_canonical_string(diagram);
        let base = parse_model(canonical.as_bytes())?;
        let stages = model::stage_order(&base)?;
        let pointer = next_defender(&stages, 0);
        let model_value: Value = serde_json::from_str(&canonical).expect("canonical model is JSON");
        let mut s = Session {
            id: id.clone(),
            current: base.clone(),
            base,
            mode,
            config,
            evidence: LabelEvidence::new(),
            committed: BTreeMap::new(),
            observations: Vec::new(),
            pointer,
            solution: None,
            log: Vec::new(),
            stages,
        };
        s.push(
            EventKind::Opened,
            json!({"id": id, "mode": mode, "config": config, "model": model_value}),
            Some(ts.clone()),
        );
        s.resolve(Some(ts))?;
        Ok(s)
    }

    pub fn stages(&self) -> &[(VariableId, Owner)] {
        &self.stages
    }

    pub fn is_complete(&self) -> bool {
        self.pointer >= self.stages.len()
    }

    /// The stage awaiting a commit, if any.
    pub fn current_stage(&self) -> Option<&VariableId> {
        self.stages.get(self.pointer).map(|(d, _)| d)
    }

    fn push(&mut self, kind: EventKind, payload: Value, ts: Option<String>) {
        self.log.push(SessionEvent {
            seq: self.log.len() as u64 + 1,
            kind,
            payload,
            ts: ts.unwrap_or_else(log::now),
        });
    }

    fn resolve(&mut self, ts: Option<String>) -> Result<(), SessionError> {
        if self.is_complete() {
            self.solution = None;
            return Ok(());
        }
        let (solution, _) = solver::solve_pending(&self.current, &self.config, &self.evidence, self.pointer)?;
        self.solution = Some(solution);
        let rec = self.recommend()?;
        self.push(
            EventKind::Solved,
            json!({
                "pointer": self.pointer,
                "stage": rec.stage,
                "maximizers": rec.maximizers,
                "eu": rec.eu,
            }),
            ts,
        );
        Ok(())
    }

    fn check_state(&self, d: &InfluenceDiagram, variable: &VariableId, state: &str) -> Result<(), SessionError> {
        let v = d.get(variable.as_str())?;
        let ok = v.discrete().is_some_and(|dd| dd.index_of(state).is_some());
        if ok {
            Ok(())
        } else {
            Err(SessionError::UnknownState {
                variable: variable.to_string(),
                state: state.to_string(),
            })
        }
    }

    fn enter(&mut self, variable: &VariableId, state: &str) -> Result<(), SessionError> {
        match self.evidence.get(variable) {
            Some(existing) if existing != state => Err(SessionError::Contradiction {
                variable: variable.to_string(),
                existing: existing.clone(),
                new: state.to_string(),
            }),
            _ => {
                self.evidence.insert(variable.clone(), state.to_string());
                Ok(())
            }
        }
    }

    /// Fixes the defender's decision at the current stage.
    pub fn commit(&mut self, stage: &str, state: &str) -> Result<(), SessionError> {
        self.commit_at(stage, state, None)
    }

    fn commit_at(&mut self, stage: &str, state: &str, ts: Option<String>) -> Result<(), SessionError> {
        let mut next = self.clone();
        let (current, owner) = next.stages.get(next.pointer).cloned().ok_or(SessionError::Complete)?;
        let var = next.current.decision(stage)?;
        if var.owner != Some(Owner::Defender) {
            return Err(SessionError::WrongRole(stage.to_string()));
        }
        if current.as_str() != stage || owner != Owner::Defender {
            return Err(SessionError::OutOfOrder(format!(
                "`{stage}` is not the current stage `{current}`"
            )));
        }
        if let Some(prev) = next.committed.get(&current) {
            return Err(SessionError::Contradiction {
                variable: stage.to_string(),
                existing: prev.clone(),
                new: state.to_string(),
            });
        }
        next.check_state(&next.current, &current, state)?;
        next.enter(&current, state)?;
        next.committed.insert(current.clone(), state.to_string());
        next.push(EventKind::Committed, json!({"stage": stage, "state": state}), ts.clone());
        if next.pointer + 1 == next.stages.len() {
            next.pointer = next.stages.len();
        }
        next.resolve(ts)?;
        *self = next;
        Ok(())
    }

    /// Records what happened at the attacker stage after the current
    /// defender stage. `kind` defaults to the session's mode.
    pub fn observe(&mut self, stage: &str, kind: Option<ObservationKind>, state: &str) -> Result<(), SessionError> {
        match kind.unwrap_or(self.mode.default_kind()) {
            ObservationKind::Attack => self.observe_attack(stage, state),
            ObservationKind::Consequence => self.observe_consequence(stage, state),
        }
    }

    pub fn observe_attack(&mut self, stage: &str, state: &str) -> Result<(), SessionError> {
        self.observe_at(stage, ObservationKind::Attack, state, None)
    }

    pub fn observe_consequence(&mut self, stage: &str, state: &str) -> Result<(), SessionError> {
        self.observe_at(stage, ObservationKind::Consequence, state, None)
    }

    fn observe_at(
        &mut self,
        stage: &str,
        kind: ObservationKind,
        state: &str,
        ts: Option<String>,
    ) -> Result<(), SessionError> {
        if !self.mode.allows(kind) {
            return Err(SessionError::Mode(format!(
                "{kind:?} observations in a {:?} session",
                self.mode
            )));
        }
        let mut next = self.clone();
        if next.is_complete() {
            return Err(SessionError::Complete);
        }
        let (defender, _) = next.stages[next.pointer].clone();
        if !next.committed.contains_key(&defender) {
            return Err(SessionError::OutOfOrder(format!("commit `{defender}` before observing")));
        }
        let (attack, owner) = next
            .stages
            .get(next.pointer + 1)
            .cloned()
            .ok_or_else(|| SessionError::OutOfOrder("no attacker stage is pending".into()))?;
        if attack.as_str() != stage || owner != Owner::Attacker {
            return Err(SessionError::OutOfOrder(format!(
                "the pending attacker stage is `{attack}`, not `{stage}`"
            )));
        }
        let after = next.pointer + 1;
        match kind {
            ObservationKind::Attack => {
                next.check_state(&next.current, &attack, state)?;
                next.enter(&attack, state)?;
                next.push(EventKind::ObservedAttack, json!({"stage": stage, "state": state}), ts.clone());
                next.observations.push(Observation {
                    stage: attack.clone(),
                    variable: attack.clone(),
                    state: state.to_string(),
                    kind,
                });
            }
            ObservationKind::Consequence => {
                let s = next
                    .current
                    .get(attack.as_str())?
                    .consequence
                    .clone()
                    .ok_or_else(|| SessionError::NoConsequence(attack.to_string()))?;
                next.check_state(&next.current, &s, state)?;
                next.current = surgery(&next.current, &next.stages, after, &attack, &s)?;
                next.enter(&s, state)?;
                next.push(
                    EventKind::ObservedConsequence,
                    json!({"stage": stage, "variable": s, "state": state}),
                    ts.clone(),
                );
                next.observations.push(Observation {
                    stage: attack.clone(),
                    variable: s,
                    state: state.to_string(),
                    kind,
                });
            }
        }
        next.pointer = next_defender(&next.stages, after + 1);
        next.resolve(ts)?;
        *self = next;
        Ok(())
    }

    /// Advice for the current stage.
    pub fn recommend(&self) -> Result<Recommendation, SessionError> {
        if self.is_complete() {
            return Ok(Recommendation {
                status: SessionStatus::Complete,
                stage: None,
                maximizers: Vec::new(),
                eu: None,
                committed: None,
                defender_plan: Vec::new(),
                anticipated_attacks: Vec::new(),
                realized_eu: Some(self.realized_eu()?),
            });
        }
        let stage = self.stages[self.pointer].0.clone();
        let solution = self.solution.as_ref().expect("pending sessions hold a solution");
        let step = solution.defender_strategy.iter().find(|s| s.decision == stage);
        Ok(Recommendation {
            status: SessionStatus::Pending,
            maximizers: step.map(|s| s.choice.clone()).unwrap_or_default(),
            eu: step.and_then(|s| s.eu),
            committed: self.committed.get(&stage).cloned(),
            stage: Some(stage),
            defender_plan: solution.defender_strategy.clone(),
            anticipated_attacks: solution.anticipated_attacks.clone(),
            realized_eu: None,
        })
    }

    /// Rolled-back tree of a stage in the latest solution (default: current stage).
    pub fn tree(&self, stage: Option<&str>) -> Result<Option<&TreeNode>, SessionError> {
        let solution = self.solution.as_ref().ok_or(SessionError::Complete)?;
        let name = match stage {
            Some(s) => s.to_string(),
            None => self.current_stage().ok_or(SessionError::Complete)?.to_string(),
        };
        let st = solution
            .stage(&name)
            .ok_or_else(|| SessionError::OutOfOrder(format!("`{name}` is not a pending stage")))?;
        Ok(st.tree.as_ref())
    }

    /// Defender's expected utility under every piece of evidence gathered.
    pub fn realized_eu(&self) -> Result<f64, SessionError> {
        let compiled = crate::discretize::compile(&self.current, &self.config.discretization()).map_err(SolveError::from)?;
        let net = &compiled.network;
        let ev = evidence_indices(net, &self.evidence)?;
        let mut total = 0.0;
        for u in self.current.utility_components(Owner::Defender) {
            total += expected_utility(
                net,
                &UtilityQuery {
                    utility: u,
                    conditioning: BTreeMap::new(),
                    evidence: ev.clone(),
                },
            )
            .map_err(SolveError::from)?;
        }
        Ok(total)
    }

    /// An independent copy with a fresh id, for what-if previews.
    pub fn fork(&self) -> Session {
        let mut s = self.clone();
        s.id = uuid::Uuid::new_v4().to_string();
        s
    }

    /// Rebuilds a session from its log.
    pub fn replay(events: &[SessionEvent]) -> Result<Session, SessionError> {
        let first = events
            .first()
            .filter(|e| e.kind == EventKind::Opened)
            .ok_or_else(|| SessionError::Log("log must start with an `opened` event".into()))?;
        let p = &first.payload;
        let bad = |what: &str| SessionError::Log(format!("`opened` payload: bad `{what}`"));
        let id = p["id"].as_str().ok_or_else(|| bad("id"))?.to_string();
        let mode: ObservationMode = serde_json::from_value(p["mode"].clone()).map_err(|_| bad("mode"))?;
        let config: SolverConfig = serde_json::from_value(p["config"].clone()).map_err(|_| bad("config"))?;
        let text = serde_json::to_string(&p["model"]).map_err(|_| bad("model"))?;
        let diagram = parse_model(text.as_bytes())?;
        let mut s = Session::open_with(id, &diagram, mode, config, first.ts.clone())?;
        for e in &events[1..] {
            let field = |k: &str| {
                e.payload[k]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| SessionError::Log(format!("event {}: missing `{k}`", e.seq)))
            };
            let ts = Some(e.ts.clone());
            match e.kind {
                EventKind::Opened => return Err(SessionError::Log(format!("event {}: second `opened`", e.seq))),
                // Derived from the events before it.
                EventKind::Solved => {}
                EventKind::Committed => s.commit_at(&field("stage")?, &field("state")?, ts)?,
                EventKind::ObservedAttack => {
                    s.observe_at(&field("stage")?, ObservationKind::Attack, &field("state")?, ts)?
                }
                EventKind::ObservedConsequence => {
                    s.observe_at(&field("stage")?, ObservationKind::Consequence, &field("state")?, ts)?
                }
            }
        }
        for (recorded, replayed) in events.iter().zip(&s.log) {
            let same = recorded.kind == replayed.kind
                && (recorded.kind != EventKind::Solved || recorded.payload == replayed.payload);
            if !same {
                return Err(SessionError::Log(format!("replay diverges at event {}", recorded.seq)));
            }
        }
        if s.log.len() < events.len() {
            return Err(SessionError::Log("log has events the replay does not reproduce".into()));
        }
        // Keep recorded timestamps; a `solved` lost in a crash is regenerated.
        let tail = s.log.split_off(events.len());
        s.log = events.to_vec();
        s.log.extend(tail);
        Ok(s)
    }
}

fn next_defender(stages: &[(VariableId, Owner)], from: usize) -> usize {
    (from..stages.len())
        .find(|&i| stages[i].1 == Owner::Defender)
        .unwrap_or(stages.len())
}

/// The consequence of `attack` becomes visible instead of the attack itself.
fn surgery(
    d: &InfluenceDiagram,
    stages: &[(VariableId, Owner)],
    attack_index: usize,
    attack: &VariableId,
    consequence: &VariableId,
) -> Result<InfluenceDiagram, SessionError> {
    let mut out = d.clone();
    let mut first = true;
    for (id, owner) in &stages[attack_index + 1..] {
        if *owner != Owner::Defender {
            continue;
        }
        let v = &mut out.variables[id];
        v.informational_parents.retain(|p| p != attack);
        if first && !v.informational_parents.contains(consequence) {
            v.informational_parents.push(consequence.clone());
        }
        first = false;
    }
    out.concealed.insert(attack.clone());
    let report = model::validate_diagram(&out);
    if !report.ok {
        return Err(SessionError::Surgery(report.to_string()));
    }
    debug_assert!(out.variables.values().all(|v| v.kind != Kind::Decision || v.cpd.is_some()));
    Ok(out)
}
