//! C bindings for the evaluation kernel.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible function returns a `GbStatus`; on
//! failure `gb_last_error` describes what went wrong on the calling
//! thread. Strings handed out through `out` parameters are NUL-terminated
//! UTF-8 and must be released with `gb_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Mutex;

use gamebench::agent::build_agent;
use gamebench::canonical::{canonical_value_string, to_canonical_string};
use gamebench::control::NormalizedAction;
use gamebench::registry::Registry;
use gamebench::rng::mix;
use gamebench::runtime::{parse_preset, run_with_hooks, RunConfig, RunError, RunState, StepInput};

pub type GbStatus = i32;

pub const GB_OK: GbStatus = 0;
/// A required pointer argument was null.
pub const GB_ERR_NULL: GbStatus = 1;
/// A string argument was not valid UTF-8.
pub const GB_ERR_UTF8: GbStatus = 2;
/// A JSON argument did not parse or did not match the expected shape.
pub const GB_ERR_JSON: GbStatus = 3;
/// Registry or preset lookup failed.
pub const GB_ERR_CONFIG: GbStatus = 4;
/// The run has already finished; no more steps are accepted.
pub const GB_ERR_FINISHED: GbStatus = 5;
/// The run itself failed (kernel, agent or I/O error).
pub const GB_ERR_RUN: GbStatus = 6;
/// A panic was caught at the boundary.
pub const GB_ERR_PANIC: GbStatus = 7;

/// A loaded catalog of games, tasks and profiles.
pub struct GbRegistry(Registry);

/// One run in progress.
pub struct GbRun(Mutex<RunState>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(GbStatus, String);

impl From<RunError> for Fail {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Registry(_) | RunError::MalformedPreset(_) => GB_ERR_CONFIG,
            RunError::Finished(_) => GB_ERR_FINISHED,
            _ => GB_ERR_RUN,
        };
        Fail(code, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GB_OK
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            GB_ERR_PANIC
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(GB_ERR_NULL, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(GB_ERR_UTF8, format!("{what}: {e}")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(GB_ERR_NULL, "out is null".into()));
    }
    let c = CString::new(s).map_err(|e| Fail(GB_ERR_JSON, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn run_ref<'a>(run: *const GbRun) -> Result<&'a GbRun, Fail> {
    run.as_ref().ok_or_else(|| Fail(GB_ERR_NULL, "run is null".into()))
}

fn lock(run: &GbRun) -> std::sync::MutexGuard<'_, RunState> {
    run.0.lock().unwrap_or_else(|p| p.into_inner())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn gb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a registry. A null `dir` selects the bundled catalog.
///
/// # Safety
/// `dir` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_registry_open(dir: *const c_char, out: *mut *mut GbRegistry) -> GbStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(GB_ERR_NULL, "out is null".into()));
        }
        let reg = if dir.is_null() {
            Registry::bundled()
        } else {
            let d = text(dir, "dir")?;
            Registry::load_dir(Path::new(d)).map_err(|e| Fail(GB_ERR_CONFIG, e.to_string()))?
        };
        *out = Box::into_raw(Box::new(GbRegistry(reg)));
        Ok(())
    })
}

/// # Safety
/// `reg` must be null or a handle from `gb_registry_open`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gb_registry_free(reg: *mut GbRegistry) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Starts a run of `preset` (`game+task+model`). When `use_repeat` is
/// nonzero the game seed is mixed from the task seed and `repeat`;
/// otherwise `seed` is used as is.
///
/// # Safety
/// `reg` must be a live registry handle, `preset` a NUL-terminated
/// string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_run_open(
    reg: *const GbRegistry,
    preset: *const c_char,
    seed: u64,
    use_repeat: i32,
    repeat: u32,
    out: *mut *mut GbRun,
) -> GbStatus {
    guard(|| {
        let reg = &reg.as_ref().ok_or_else(|| Fail(GB_ERR_NULL, "registry is null".into()))?.0;
        let preset = text(preset, "preset")?;
        if out.is_null() {
            return Err(Fail(GB_ERR_NULL, "out is null".into()));
        }
        let p = parse_preset(preset, reg)?;
        let seed = if use_repeat != 0 {
            let task = reg
                .task(&p.game_id, &p.task_id)
                .ok_or_else(|| Fail(GB_ERR_CONFIG, format!("unknown task {}", p.task_id)))?;
            mix(task.seed, u64::from(repeat))
        } else {
            seed
        };
        let mut cfg = RunConfig::new(p, seed);
        cfg.repeat = if use_repeat != 0 { repeat } else { 0 };
        let state = RunState::start(reg, cfg)?;
        *out = Box::into_raw(Box::new(GbRun(Mutex::new(state))));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from `gb_run_open`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gb_run_free(run: *mut GbRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Applies one action, given as JSON (for example
/// `{"type":"press_key","key":"ArrowLeft"}`), and writes the trajectory
/// entry for the step as canonical JSON. Actions outside the game's
/// control space still consume a step and are scored as invalid.
///
/// # Safety
/// `run` must be a live run handle, `action_json` a NUL-terminated string
/// and `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gb_run_step(run: *const GbRun, action_json: *const c_char, out: *mut *mut c_char) -> GbStatus {
    guard(|| {
        let run = run_ref(run)?;
        let action: NormalizedAction = serde_json::from_str(text(action_json, "action")?)
            .map_err(|e| Fail(GB_ERR_JSON, format!("action: {e}")))?;
        let mut state = lock(run);
        if state.is_finished() {
            return Err(Fail(GB_ERR_FINISHED, format!("run already finished with status {}", state.record().status.as_str())));
        }
        let (_, obs) = state.observe();
        let entry = state.apply(&obs, StepInput::Direct(action))?;
        if out.is_null() {
            return Ok(());
        }
        put_string(out, to_canonical_string(&entry))
    })
}

/// Plays the rest of the run with the profile's own agent.
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gb_run_play(run: *const GbRun) -> GbStatus {
    guard(|| {
        let run = run_ref(run)?;
        let (profile, seed) = {
            let st = lock(run);
            (st.profile.clone(), st.cfg.seed)
        };
        let mut agent = build_agent(&profile, seed).map_err(|e| Fail(GB_ERR_CONFIG, e.to_string()))?;
        run_with_hooks(&run.0, agent.as_mut(), |_, _| {})?;
        Ok(())
    })
}

/// Current state snapshot as canonical JSON.
///
/// # Safety
/// `run` must be a live run handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_run_state_json(run: *const GbRun, out: *mut *mut c_char) -> GbStatus {
    guard(|| {
        let (snap, _) = lock(run_ref(run)?).observe();
        put_string(out, to_canonical_string(&snap))
    })
}

/// The run record as canonical JSON.
///
/// # Safety
/// `run` must be a live run handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_run_record_json(run: *const GbRun, out: *mut *mut c_char) -> GbStatus {
    guard(|| {
        let s = to_canonical_string(lock(run_ref(run)?).record());
        put_string(out, s)
    })
}

/// Hex digest at the head of the state hash chain.
///
/// # Safety
/// `run` must be a live run handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_run_chain(run: *const GbRun, out: *mut *mut c_char) -> GbStatus {
    guard(|| {
        let s = lock(run_ref(run)?).chain().to_string();
        put_string(out, s)
    })
}

/// 1 when finished, 0 while running, negative status on error.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gb_run_is_finished(run: *const GbRun) -> i32 {
    let mut done = false;
    let st = guard(|| {
        done = lock(run_ref(run)?).is_finished();
        Ok(())
    });
    if st != GB_OK {
        -st
    } else {
        i32::from(done)
    }
}

/// Rewrites any JSON document in canonical form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_canonicalize(json: *const c_char, out: *mut *mut c_char) -> GbStatus {
    guard(|| {
        let v: serde_json::Value =
            serde_json::from_str(text(json, "json")?).map_err(|e| Fail(GB_ERR_JSON, e.to_string()))?;
        put_string(out, canonical_value_string(&v))
    })
}

/// Seed for repeat `k` of a task with base seed `seed`.
#[no_mangle]
pub extern "C" fn gb_mix_seed(seed: u64, k: u64) -> u64 {
    mix(seed, k)
}
