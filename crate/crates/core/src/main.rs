use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use ara_core::dynamic::{ObservationKind, ObservationMode, Recommendation, Session, SessionStatus, SessionStore};
use ara_core::infer::{expected_utility, posterior_marginal, Factor, UtilityQuery};
use ara_core::io::{export_tree, format_sig, load_model_file, SolutionDocument, TreeFormat, WIRE_DIGITS};
use ara_core::model::{parse_model, stage_order, validate_diagram, Kind, VariableId};
use ara_core::service::{serve, ServiceConfig};
use ara_core::solver::{self, evidence_indices, GameSolution, LabelEvidence, PathStep, SolverConfig};

#[derive(Parser)]
#[command(name = "ara", version, about = "Solve sequential defend-attack games and run live decision sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct SolverArgs {
    /// Bins per continuous variable.
    #[arg(long, env = "ARA_BINS", default_value_t = ara_core::discretize::DEFAULT_BINS)]
    bins: usize,
    /// Bins for continuous roots that only feed distribution parameters.
    #[arg(long, default_value_t = ara_core::discretize::DEFAULT_PARAMETER_BINS)]
    param_bins: usize,
    /// Absolute tie tolerance between expected utilities.
    #[arg(long, env = "ARA_TIE_EPS")]
    tie_eps: Option<f64>,
}

impl SolverArgs {
    fn config(self) -> SolverConfig {
        SolverConfig {
            bins: self.bins,
            param_bins: self.param_bins,
            tie_eps: self.tie_eps,
            ..SolverConfig::default()
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum OutputFormat {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every stage by backward induction.
    Solve {
        model: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the solution document here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
    },
    /// Check a model file against the structural rules.
    Validate { model: PathBuf },
    /// Print the rolled-back tree of one stage.
    Tree {
        model: PathBuf,
        #[arg(long)]
        stage: String,
        #[arg(long, default_value = "text")]
        format: TreeFormat,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Probabilities and expected utilities under the solved policies.
    Query {
        #[command(subcommand)]
        query: QueryCommand,
    },
    /// Live decision sessions stored as event logs.
    Session {
        #[arg(long, env = "ARA_SESSIONS_DIR", default_value = "ara-sessions")]
        sessions_dir: PathBuf,
        #[command(subcommand)]
        command: SessionCommand,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, env = "ARA_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "ARA_HOST", default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, env = "ARA_MODELS_DIR", default_value = "models")]
        models_dir: PathBuf,
        #[arg(long, env = "ARA_SESSIONS_DIR", default_value = "ara-sessions")]
        sessions_dir: PathBuf,
        /// Seconds a request waits for a solve before answering 202.
        #[arg(long, env = "ARA_SOLVE_TIMEOUT", default_value_t = 30.0)]
        solve_timeout: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Posterior marginal of one variable.
    Marginal {
        model: PathBuf,
        variable: String,
        /// Evidence, `VAR=STATE`; repeatable.
        #[arg(long = "given", value_parser = parse_assignment)]
        given: Vec<(String, String)>,
        /// Leave decisions uniform instead of applying the solved policies.
        #[arg(long)]
        unsolved: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Expected value of a utility node or aggregate.
    Eu {
        model: PathBuf,
        utility: String,
        #[arg(long = "given", value_parser = parse_assignment)]
        given: Vec<(String, String)>,
        #[arg(long)]
        unsolved: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Open a session and print the first recommendation.
    Start {
        model: PathBuf,
        #[arg(long, default_value = "attack")]
        mode: ObservationMode,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        json: bool,
    },
    /// Commit the defender's decision at the current stage.
    Commit {
        id: String,
        stage: String,
        state: String,
        #[arg(long)]
        json: bool,
    },
    /// Record the attacker stage that followed the last commit.
    Observe {
        id: String,
        stage: String,
        state: String,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<ObservationKind>,
        #[arg(long)]
        json: bool,
    },
    /// Show the current recommendation.
    Recommend {
        id: String,
        /// Also print the current stage's tree in this format.
        #[arg(long)]
        tree: Option<TreeFormat>,
        #[arg(long)]
        json: bool,
    },
    /// Print the raw event log.
    Log { id: String },
}

fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected VAR=STATE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_kind(s: &str) -> Result<ObservationKind, String> {
    match s {
        "attack" => Ok(ObservationKind::Attack),
        "consequence" => Ok(ObservationKind::Consequence),
        _ => Err(format!("unknown kind `{s}` (attack or consequence)")),
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Solve {
            model,
            solver,
            out,
            format,
        } => {
            let loaded = load_model_file(&model)?;
            let solution = solver::solve(&loaded.diagram, &solver.config())?;
            let text = match format {
                OutputFormat::Json => SolutionDocument::new(loaded.hash, solution).to_json(),
                OutputFormat::Text => solution_text(&solution),
            };
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Validate { model } => {
            let bytes = std::fs::read(&model).map_err(|e| format!("{}: {e}", model.display()))?;
            let d = parse_model(&bytes)?;
            let report = validate_diagram(&d);
            for v in &report.violations {
                println!("error [{:?}] {}", v.rule, v.message);
            }
            for w in &report.warnings {
                println!("warning [{:?}] {}", w.rule, w.message);
            }
            if !report.ok {
                return Err(format!("{} violation(s)", report.violations.len()).into());
            }
            let stages: Vec<String> = stage_order(&d)?.iter().map(|(s, _)| s.to_string()).collect();
            println!("ok: {} variables, stages {}", d.variables.len(), stages.join(" -> "));
            Ok(())
        }
        Command::Tree {
            model,
            stage,
            format,
            solver,
        } => {
            let loaded = load_model_file(&model)?;
            let solution = solver::solve(&loaded.diagram, &solver.config())?;
            let st = solution.stage(&stage).ok_or_else(|| format!("no decision stage `{stage}`"))?;
            let tree = st.tree.as_ref().ok_or_else(|| format!("no tree was built for `{stage}`"))?;
            print!("{}", String::from_utf8_lossy(&export_tree(tree, format)));
            Ok(())
        }
        Command::Query { query } => run_query(query),
        Command::Session { sessions_dir, command } => run_session(&SessionStore::new(sessions_dir)?, command),
        Command::Serve {
            port,
            host,
            models_dir,
            sessions_dir,
            solve_timeout,
            solver,
        } => {
            let config = ServiceConfig {
                models_dir,
                sessions_dir,
                solver: solver.config(),
                solve_timeout: Duration::from_secs_f64(solve_timeout),
            };
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            rt.block_on(serve(config, addr))?;
            Ok(())
        }
    }
}

fn num(x: f64) -> String {
    format_sig(x, WIRE_DIGITS)
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), num)
}

fn step_text(s: &PathStep) -> String {
    let ctx: Vec<String> = s.context.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let given = if ctx.is_empty() { String::new() } else { format!(" | {}", ctx.join(", ")) };
    format!("{} = {{{}}}{given}  EU={}", s.decision, s.choice.join(", "), opt_num(s.eu))
}

fn solution_text(solution: &GameSolution) -> String {
    let mut out = String::from("defender strategy:\n");
    for s in &solution.defender_strategy {
        out.push_str(&format!("  {}\n", step_text(s)));
    }
    out.push_str("anticipated attacks:\n");
    for s in &solution.anticipated_attacks {
        out.push_str(&format!("  {}\n", step_text(s)));
    }
    out.push_str(&format!("defender EU: {}\n", opt_num(solution.psi_defender)));
    out.push_str(&format!("attacker EU: {}\n", opt_num(solution.psi_attacker)));
    for st in &solution.stages {
        out.push_str(&format!("\n{} ({:?}) policy:\n", st.decision, st.owner));
        for e in &st.policy.entries {
            let ctx: Vec<String> = st.policy.context.iter().zip(&e.context).map(|(k, v)| format!("{k}={v}")).collect();
            let eus: Vec<String> = e.eu.iter().map(|x| opt_num(*x)).collect();
            let reach = if e.reachable { "" } else { "  (unreachable)" };
            out.push_str(&format!(
                "  [{}] -> {{{}}}  EU=[{}]{reach}\n",
                ctx.join(", "),
                e.maximizers.join(", "),
                eus.join(", ")
            ));
        }
    }
    out
}

fn run_query(query: QueryCommand) -> CliResult {
    let (model, given, unsolved, solver) = match &query {
        QueryCommand::Marginal {
            model,
            given,
            unsolved,
            solver,
            ..
        }
        | QueryCommand::Eu {
            model,
            given,
            unsolved,
            solver,
            ..
        } => (model, given, *unsolved, *solver),
    };
    let loaded = load_model_file(model)?;
    let d = &loaded.diagram;
    let config = solver.config();
    let mut net = if unsolved {
        ara_core::discretize::compile(d, &config.discretization())?.network
    } else {
        solver::solve_pending(d, &config, &LabelEvidence::new(), 0)?.1.network
    };
    // Decisions named in `--given` are set, not conditioned on.
    let mut labels = LabelEvidence::new();
    for (k, v) in given {
        let i = net.index_of(k)?;
        if net.var(i).kind == Kind::Decision {
            let s = net.var(i).states.iter().position(|x| x == v).ok_or_else(|| format!("unknown state `{v}` for `{k}`"))?;
            net.set_decision_parents(i, Vec::new());
            net.set_table(i, Factor::indicator(i, net.card(i), s));
        } else {
            labels.insert(VariableId::new(k)?, v.clone());
        }
    }
    let ev = evidence_indices(&net, &labels)?;
    match &query {
        QueryCommand::Marginal { variable, .. } => {
            let p = posterior_marginal(&net, variable, &ev)?;
            let i = net.index_of(variable)?;
            for (state, pr) in net.var(i).states.iter().zip(p) {
                println!("{state}\t{}", num(pr));
            }
        }
        QueryCommand::Eu { utility, .. } => {
            let components: Vec<VariableId> = match d.utility_aggregates.iter().find(|a| &a.name == utility) {
                Some(a) => a.components.clone(),
                None => vec![VariableId::new(utility)?],
            };
            let mut total = 0.0;
            for u in components {
                total += expected_utility(
                    &net,
                    &UtilityQuery {
                        utility: u,
                        conditioning: BTreeMap::new(),
                        evidence: ev.clone(),
                    },
                )?;
            }
            println!("{}", num(total));
        }
    }
    Ok(())
}

fn load_session(store: &SessionStore, id: &str) -> Result<Session, Box<dyn std::error::Error>> {
    Ok(store.restore(id)?)
}

fn print_recommendation(s: &Session, rec: &Recommendation, json: bool) {
    if json {
        let v = ara_core::io::stringify_numbers(serde_json::to_value(rec).expect("recommendations serialize"));
        println!("{}", serde_json::json!({"id": s.id, "recommendation": v}));
        return;
    }
    println!("session: {}", s.id);
    match rec.status {
        SessionStatus::Complete => {
            println!("status: complete");
            println!("realized EU: {}", opt_num(rec.realized_eu));
        }
        SessionStatus::Pending => {
            let stage = rec.stage.as_ref().map(|s| s.to_string()).unwrap_or_default();
            println!("stage: {stage}");
            println!("recommend: {}", rec.maximizers.join(", "));
            println!("EU: {}", opt_num(rec.eu));
            if let Some(c) = &rec.committed {
                println!("committed: {c}");
            }
            for step in rec.defender_plan.iter().chain(&rec.anticipated_attacks) {
                println!("  {}", step_text(step));
            }
        }
    }
}

/// Applies `op` to a stored session and appends the events it produced.
fn update(
    store: &SessionStore,
    id: &str,
    json: bool,
    op: impl FnOnce(&mut Session) -> Result<(), ara_core::dynamic::SessionError>,
) -> CliResult {
    let mut s = load_session(store, id)?;
    let before = s.log.len();
    op(&mut s)?;
    store.append(id, &s.log[before..])?;
    print_recommendation(&s, &s.recommend()?, json);
    Ok(())
}

fn run_session(store: &SessionStore, command: SessionCommand) -> CliResult {
    match command {
        SessionCommand::Start {
            model,
            mode,
            solver,
            json,
        } => {
            let loaded = load_model_file(&model)?;
            let s = Session::open(&loaded.diagram, mode, solver.config())?;
            store.append(&s.id, &s.log)?;
            print_recommendation(&s, &s.recommend()?, json);
            Ok(())
        }
        SessionCommand::Commit { id, stage, state, json } => update(store, &id, json, |s| s.commit(&stage, &state)),
        SessionCommand::Observe {
            id,
            stage,
            state,
            kind,
            json,
        } => update(store, &id, json, |s| s.observe(&stage, kind, &state)),
        SessionCommand::Recommend { id, tree, json } => {
            let s = load_session(store, &id)?;
            print_recommendation(&s, &s.recommend()?, json);
            if let Some(format) = tree {
                if let Some(t) = s.tree(None)? {
                    print!("{}", String::from_utf8_lossy(&export_tree(t, format)));
                }
            }
            Ok(())
        }
        SessionCommand::Log { id } => {
            let path = store.path(&id);
            if !Path::new(&path).exists() {
                return Err(format!("session `{id}` not found").into());
            }
            print!("{}", std::fs::read_to_string(path)?);
            Ok(())
        }
    }
}
