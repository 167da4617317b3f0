//! C interface.
//!
//! Objects are opaque handles created by `ara_*_open`/`load`/`solve` and
//! released with the matching `_free`. Functions return an `ARA_*` status
//! code; on failure `ara_last_error` gives a message for the calling
//! thread and pointer outputs are left NULL. Strings returned through
//! `char **` are owned by the caller and must be released with
//! `ara_string_free`. Strings passed in are UTF-8 and NUL-terminated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ara_core::dynamic::{ObservationKind, ObservationMode, Session, SessionError};
use ara_core::io::{export_tree, model_hash, SolutionDocument, TreeFormat};
use ara_core::model::{load_model, InfluenceDiagram};
use ara_core::solver::{self, SolverConfig};

pub const ARA_OK: i32 = 0;
pub const ARA_ERR_NULL: i32 = 1;
pub const ARA_ERR_UTF8: i32 = 2;
pub const ARA_ERR_IO: i32 = 3;
pub const ARA_ERR_MODEL: i32 = 4;
pub const ARA_ERR_SOLVE: i32 = 5;
pub const ARA_ERR_SESSION: i32 = 6;
pub const ARA_ERR_NOT_FOUND: i32 = 7;
pub const ARA_ERR_ARGUMENT: i32 = 8;
pub const ARA_ERR_PANIC: i32 = 9;

pub const ARA_MODE_ATTACK: i32 = 0;
pub const ARA_MODE_CONSEQUENCE: i32 = 1;
pub const ARA_MODE_MIXED: i32 = 2;

/// Observation kind: use the session's mode.
pub const ARA_KIND_DEFAULT: i32 = -1;
pub const ARA_KIND_ATTACK: i32 = 0;
pub const ARA_KIND_CONSEQUENCE: i32 = 1;

pub const ARA_TREE_TEXT: i32 = 0;
pub const ARA_TREE_DOT: i32 = 1;
pub const ARA_TREE_STRUCTURED: i32 = 2;

/// A validated model and the hash of its source bytes.
pub struct AraModel {
    diagram: InfluenceDiagram,
    hash: String,
}

pub struct AraSolution {
    doc: SolutionDocument,
}

pub struct AraSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(i32, String);

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::NotFound(_) => ARA_ERR_NOT_FOUND,
            SessionError::Io(_) => ARA_ERR_IO,
            SessionError::Model(_) => ARA_ERR_MODEL,
            SessionError::Solve(_) => ARA_ERR_SOLVE,
            _ => ARA_ERR_SESSION,
        };
        Failure(code, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ARA_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            ARA_ERR_PANIC
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ARA_ERR_NULL, format!("`{what}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ARA_ERR_UTF8, format!("`{what}` is not UTF-8")))
}

unsafe fn out_ptr<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(ARA_ERR_NULL, "output pointer is null".into()));
    }
    *out = ptr::null_mut();
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(ARA_ERR_NULL, format!("`{what}` is null")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    out_ptr(out)?;
    let c = CString::new(s).map_err(|_| Failure(ARA_ERR_UTF8, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn config(bins: u32, tie_eps: f64) -> SolverConfig {
    let mut c = SolverConfig::default();
    if bins > 0 {
        c.bins = bins as usize;
    }
    if tie_eps.is_finite() && tie_eps >= 0.0 {
        c.tie_eps = Some(tie_eps);
    }
    c
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ara_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ara_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a model document.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_model_load(bytes: *const u8, len: usize, out: *mut *mut AraModel) -> i32 {
    guard(|| {
        out_ptr(out)?;
        if bytes.is_null() {
            return Err(Failure(ARA_ERR_NULL, "`bytes` is null".into()));
        }
        let data = std::slice::from_raw_parts(bytes, len);
        let diagram = load_model(data).map_err(|e| Failure(ARA_ERR_MODEL, e.to_string()))?;
        *out = Box::into_raw(Box::new(AraModel {
            diagram,
            hash: model_hash(data),
        }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_model_load_file(path: *const c_char, out: *mut *mut AraModel) -> i32 {
    let bytes = match text(path, "path").and_then(|p| std::fs::read(p).map_err(|e| Failure(ARA_ERR_IO, format!("{p}: {e}")))) {
        Ok(b) => b,
        Err(Failure(code, msg)) => {
            set_error(&msg);
            return code;
        }
    };
    ara_model_load(bytes.as_ptr(), bytes.len(), out)
}

/// Hex SHA-256 of the bytes the model was loaded from.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_model_hash(model: *const AraModel, out: *mut *mut c_char) -> i32 {
    guard(|| {
        out_ptr(out)?;
        put_string(out, handle(model, "model")?.hash.clone())
    })
}

/// # Safety
/// `model` must come from `ara_model_load*`, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ara_model_free(model: *mut AraModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solves every stage. `bins` 0 and a negative or NaN `tie_eps` select
/// the defaults.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_solve(model: *const AraModel, bins: u32, tie_eps: f64, out: *mut *mut AraSolution) -> i32 {
    guard(|| {
        out_ptr(out)?;
        let m = handle(model, "model")?;
        let solution =
            solver::solve(&m.diagram, &config(bins, tie_eps)).map_err(|e| Failure(ARA_ERR_SOLVE, e.to_string()))?;
        *out = Box::into_raw(Box::new(AraSolution {
            doc: SolutionDocument::new(m.hash.clone(), solution),
        }));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from `ara_solve`, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ara_solution_free(solution: *mut AraSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// The solution document as JSON.
///
/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_solution_json(solution: *const AraSolution, out: *mut *mut c_char) -> i32 {
    guard(|| {
        out_ptr(out)?;
        put_string(out, handle(solution, "solution")?.doc.to_json())
    })
}

/// Defender's expected utility along the optimal path.
///
/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_solution_defender_eu(solution: *const AraSolution, out: *mut f64) -> i32 {
    guard(|| {
        let s = handle(solution, "solution")?;
        if out.is_null() {
            return Err(Failure(ARA_ERR_NULL, "output pointer is null".into()));
        }
        *out = s
            .doc
            .solution
            .psi_defender
            .ok_or_else(|| Failure(ARA_ERR_SOLVE, "the model has no defender utility".into()))?;
        Ok(())
    })
}

fn tree_format(f: i32) -> Result<TreeFormat, Failure> {
    match f {
        ARA_TREE_TEXT => Ok(TreeFormat::Text),
        ARA_TREE_DOT => Ok(TreeFormat::Dot),
        ARA_TREE_STRUCTURED => Ok(TreeFormat::Structured),
        _ => Err(Failure(ARA_ERR_ARGUMENT, format!("unknown tree format {f}"))),
    }
}

/// A stage's rolled-back tree in one of the `ARA_TREE_*` formats.
///
/// # Safety
/// `solution` must be a live handle; `stage` a NUL-terminated string;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ara_solution_tree(
    solution: *const AraSolution,
    stage: *const c_char,
    format: i32,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        out_ptr(out)?;
        let s = handle(solution, "solution")?;
        let name = text(stage, "stage")?;
        let format = tree_format(format)?;
        let st = s
            .doc
            .solution
            .stage(name)
            .ok_or_else(|| Failure(ARA_ERR_NOT_FOUND, format!("no decision stage `{name}`")))?;
        let tree = st
            .tree
            .as_ref()
            .ok_or_else(|| Failure(ARA_ERR_NOT_FOUND, format!("no tree was built for `{name}`")))?;
        put_string(out, String::from_utf8_lossy(&export_tree(tree, format)).into_owned())
    })
}

fn mode(m: i32) -> Result<ObservationMode, Failure> {
    match m {
        ARA_MODE_ATTACK => Ok(ObservationMode::Attack),
        ARA_MODE_CONSEQUENCE => Ok(ObservationMode::Consequence),
        ARA_MODE_MIXED => Ok(ObservationMode::Mixed),
        _ => Err(Failure(ARA_ERR_ARGUMENT, format!("unknown mode {m}"))),
    }
}

/// Opens a session and solves it.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_session_open(
    model: *const AraModel,
    mode_code: i32,
    bins: u32,
    tie_eps: f64,
    out: *mut *mut AraSession,
) -> i32 {
    guard(|| {
        out_ptr(out)?;
        let m = handle(model, "model")?;
        let session = Session::open(&m.diagram, mode(mode_code)?, config(bins, tie_eps))?;
        *out = Box::into_raw(Box::new(AraSession { session }));
        Ok(())
    })
}

/// Rebuilds a session from its JSON-lines event log.
///
/// # Safety
/// `log` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_session_replay(log: *const c_char, out: *mut *mut AraSession) -> i32 {
    guard(|| {
        out_ptr(out)?;
        let events = ara_core::dynamic::parse_log(text(log, "log")?)?;
        let session = Session::replay(&events)?;
        *out = Box::into_raw(Box::new(AraSession { session }));
        Ok(())
    })
}

/// # Safety
/// `session` must come from `ara_session_open`/`replay`, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ara_session_free(session: *mut AraSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

unsafe fn session_mut<'a>(p: *mut AraSession) -> Result<&'a mut Session, Failure> {
    p.as_mut()
        .map(|s| &mut s.session)
        .ok_or_else(|| Failure(ARA_ERR_NULL, "`session` is null".into()))
}

/// Commits the defender's decision at the current stage. On failure the
/// session is unchanged.
///
/// # Safety
/// `session` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ara_session_commit(session: *mut AraSession, stage: *const c_char, state: *const c_char) -> i32 {
    guard(|| {
        let s = session_mut(session)?;
        Ok(s.commit(text(stage, "stage")?, text(state, "state")?)?)
    })
}

/// Records an attacker stage. `kind` is an `ARA_KIND_*` code.
///
/// # Safety
/// `session` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ara_session_observe(
    session: *mut AraSession,
    stage: *const c_char,
    kind: i32,
    state: *const c_char,
) -> i32 {
    guard(|| {
        let kind = match kind {
            ARA_KIND_DEFAULT => None,
            ARA_KIND_ATTACK => Some(ObservationKind::Attack),
            ARA_KIND_CONSEQUENCE => Some(ObservationKind::Consequence),
            k => return Err(Failure(ARA_ERR_ARGUMENT, format!("unknown observation kind {k}"))),
        };
        let s = session_mut(session)?;
        Ok(s.observe(text(stage, "stage")?, kind, text(state, "state")?)?)
    })
}

/// The current recommendation as JSON.
///
/// # Safety
/// `session` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_session_recommendation(session: *const AraSession, out: *mut *mut c_char) -> i32 {
    guard(|| {
        out_ptr(out)?;
        let rec = handle(session, "session")?.session.recommend()?;
        put_string(out, serde_json::to_string(&rec).expect("recommendations serialize"))
    })
}

/// The session's event log as JSON lines.
///
/// # Safety
/// `session` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ara_session_log(session: *const AraSession, out: *mut *mut c_char) -> i32 {
    guard(|| {
        out_ptr(out)?;
        let s = &handle(session, "session")?.session;
        let mut text = String::new();
        for e in &s.log {
            text.push_str(&serde_json::to_string(e).expect("events serialize"));
            text.push('\n');
        }
        put_string(out, text)
    })
}
