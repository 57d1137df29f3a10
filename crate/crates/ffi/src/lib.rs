//! C ABI over the simulator.
//!
//! Worlds are opaque handles created with [`vl_world_new`] and released
//! with [`vl_world_free`]. Every fallible call returns a [`VlStatus`]; on
//! failure a description is available from [`vl_last_error_message`] on the
//! same thread. Strings handed out by the library are NUL-terminated UTF-8
//! and must be released with [`vl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use virtlab::chemistry::{balance_report, parse_equation};
use virtlab::dsl::{parse_script, run_script, RunError};
use virtlab::scene::{self, SceneError};
use virtlab::session::{apply_verb, parse_client_message, ClientMessage, Verb};
use virtlab::sim::{world_digest, Snapshot};
use virtlab::World;

/// Result of a library call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VlStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Script, equation or command text did not parse.
    ParseError = 3,
    UnknownScene = 4,
    /// The script or command named something the bench does not have, or
    /// was not allowed in the current state.
    Rejected = 5,
    /// The script ran but at least one assert failed.
    AssertFailed = 6,
    /// The equation parsed but is not balanced.
    Unbalanced = 7,
    /// The simulation hit a non-finite state.
    SimulationError = 8,
    /// A bug in the library; the handle should not be used again.
    Panic = 9,
}

/// Opaque simulation handle.
pub struct VlWorld {
    world: World,
    scene: String,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: VlStatus, message: impl Into<String>) -> VlStatus {
    set_error(message);
    status
}

/// Runs `f`, turning panics into [`VlStatus::Panic`].
fn guard(f: impl FnOnce() -> VlStatus) -> VlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == VlStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(VlStatus::Panic, "internal error"),
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, VlStatus> {
    if p.is_null() {
        return Err(fail(VlStatus::NullArgument, "null string argument"));
    }
    // SAFETY: non-null and NUL-terminated per the caller's contract
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| fail(VlStatus::InvalidUtf8, format!("invalid UTF-8: {e}")))
}

/// # Safety
/// `out` is null or valid for a pointer write.
unsafe fn hand_out(out: *mut *mut c_char, s: String) -> VlStatus {
    if out.is_null() {
        return fail(VlStatus::NullArgument, "null output pointer");
    }
    let c = CString::new(s.replace('\0', " ")).unwrap_or_default();
    // SAFETY: checked non-null above
    unsafe { *out = c.into_raw() };
    VlStatus::Ok
}

fn scene_status(e: &SceneError) -> VlStatus {
    match e {
        SceneError::Unknown(_) => VlStatus::UnknownScene,
        _ => VlStatus::SimulationError,
    }
}

fn run_status(e: &RunError) -> VlStatus {
    match e {
        RunError::Sim(_) => VlStatus::SimulationError,
        _ => VlStatus::Rejected,
    }
}

/// Builds a stock scene (`"brown_ring"` or `"single_bottle"`).
///
/// # Safety
/// `scene` is a NUL-terminated string; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vl_world_new(
    scene: *const c_char,
    seed: u64,
    out: *mut *mut VlWorld,
) -> VlStatus {
    guard(|| {
        if out.is_null() {
            return fail(VlStatus::NullArgument, "null output pointer");
        }
        // SAFETY: forwarded caller contract
        let name = match unsafe { text(scene) } {
            Ok(n) => n,
            Err(s) => return s,
        };
        match scene::build(name, seed) {
            Ok(world) => {
                let handle = Box::new(VlWorld {
                    world,
                    scene: name.to_string(),
                });
                // SAFETY: checked non-null above
                unsafe { *out = Box::into_raw(handle) };
                VlStatus::Ok
            }
            Err(e) => fail(scene_status(&e), e.to_string()),
        }
    })
}

/// Releases a world. Null is ignored.
///
/// # Safety
/// `world` is null or a handle from [`vl_world_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vl_world_free(world: *mut VlWorld) {
    if !world.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once
        drop(unsafe { Box::from_raw(world) });
    }
}

/// Advances the world by `ticks` ticks.
///
/// # Safety
/// `world` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn vl_world_step(world: *mut VlWorld, ticks: u64) -> VlStatus {
    guard(|| {
        // SAFETY: live handle per the caller's contract
        let Some(w) = (unsafe { world.as_mut() }) else {
            return fail(VlStatus::NullArgument, "null world");
        };
        match w.world.advance_by(ticks) {
            Ok(_) => VlStatus::Ok,
            Err(e) => fail(VlStatus::SimulationError, e.to_string()),
        }
    })
}

/// Current tick, or 0 for a null handle.
///
/// # Safety
/// `world` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vl_world_tick(world: *const VlWorld) -> u64 {
    // SAFETY: null or live per the caller's contract
    unsafe { world.as_ref() }.map_or(0, |w| w.world.tick)
}

/// Writes the 64-character hex digest of the world state to `out`.
///
/// # Safety
/// `world` is a live handle; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vl_world_digest(world: *const VlWorld, out: *mut *mut c_char) -> VlStatus {
    guard(|| {
        // SAFETY: live handle per the caller's contract
        let Some(w) = (unsafe { world.as_ref() }) else {
            return fail(VlStatus::NullArgument, "null world");
        };
        // SAFETY: forwarded caller contract
        unsafe { hand_out(out, world_digest(&w.world)) }
    })
}

/// Writes a JSON snapshot of the world to `out`.
///
/// # Safety
/// `world` is a live handle; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vl_world_snapshot_json(
    world: *const VlWorld,
    out: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        // SAFETY: live handle per the caller's contract
        let Some(w) = (unsafe { world.as_ref() }) else {
            return fail(VlStatus::NullArgument, "null world");
        };
        let json = serde_json::to_string(&Snapshot::capture(&w.world)).unwrap_or_default();
        // SAFETY: forwarded caller contract
        unsafe { hand_out(out, json) }
    })
}

/// Applies one session command at the current tick without advancing
/// time. `command` is either a full `cmd` message or just its verb object,
/// e.g. `{"verb":"grab","name":"bottle_feso4"}`.
///
/// # Safety
/// `world` is a live handle; `command` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vl_world_apply_command(
    world: *mut VlWorld,
    command: *const c_char,
) -> VlStatus {
    guard(|| {
        // SAFETY: live handle per the caller's contract
        let Some(w) = (unsafe { world.as_mut() }) else {
            return fail(VlStatus::NullArgument, "null world");
        };
        // SAFETY: forwarded caller contract
        let json = match unsafe { text(command) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let verb = match parse_verb(json) {
            Ok(v) => v,
            Err(m) => return fail(VlStatus::ParseError, m),
        };
        match apply_verb(&mut w.world, &verb) {
            Ok(_) => VlStatus::Ok,
            Err(e) => fail(VlStatus::Rejected, format!("{}: {}", e.code, e.message)),
        }
    })
}

fn parse_verb(json: &str) -> Result<Verb, String> {
    let mut value: serde_json::Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("type").or_insert_with(|| "cmd".into());
        obj.entry("seq").or_insert_with(|| 0.into());
    }
    match parse_client_message(&value.to_string()) {
        Ok(ClientMessage::Cmd { verb, .. }) => Ok(verb),
        Ok(ClientMessage::Hello { .. }) => Err("expected a command, got hello".into()),
        Err(e) => Err(format!("{}: {}", e.code, e.message)),
    }
}

/// Runs a lab script on the world and writes the JSON report to
/// `report_out`. Returns [`VlStatus::AssertFailed`] (with the report still
/// written) when an assert failed.
///
/// # Safety
/// `world` is a live handle; `script` is a NUL-terminated string;
/// `report_out` is null or valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vl_world_run_script(
    world: *mut VlWorld,
    script: *const c_char,
    report_out: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        // SAFETY: live handle per the caller's contract
        let Some(w) = (unsafe { world.as_mut() }) else {
            return fail(VlStatus::NullArgument, "null world");
        };
        // SAFETY: forwarded caller contract
        let source = match unsafe { text(script) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let parsed = match parse_script(source) {
            Ok(s) => s,
            Err(e) => return fail(VlStatus::ParseError, e.to_string()),
        };
        if let Err(e) = parsed.resolve(|n| w.world.vessel_by_name(n).is_some()) {
            return fail(VlStatus::Rejected, e.to_string());
        }
        let report = match run_script(&parsed, &mut w.world, &w.scene) {
            Ok(r) => r,
            Err(e) => return fail(run_status(&e), e.to_string()),
        };
        if !report_out.is_null() {
            let json = serde_json::to_string(&report).unwrap_or_default();
            // SAFETY: checked non-null; forwarded caller contract
            unsafe { hand_out(report_out, json) };
        }
        if report.passed {
            VlStatus::Ok
        } else {
            let failed: Vec<String> = report
                .failed_asserts()
                .map(|a| format!("line {}: {}", a.line, a.predicate))
                .collect();
            fail(VlStatus::AssertFailed, failed.join("; "))
        }
    })
}

/// Checks an equation such as `"2H2 + O2 -> 2H2O"`. Returns
/// [`VlStatus::Ok`] when balanced and [`VlStatus::Unbalanced`] when not;
/// the per-element tally is written to `tally_out` if it is not null.
///
/// # Safety
/// `equation` is a NUL-terminated string; `tally_out` is null or valid for
/// a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vl_check_balance(
    equation: *const c_char,
    tally_out: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        // SAFETY: forwarded caller contract
        let source = match unsafe { text(equation) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let eq = match parse_equation(source) {
            Ok(e) => e,
            Err(e) => return fail(VlStatus::ParseError, e.to_string()),
        };
        let report = balance_report(&eq);
        if !tally_out.is_null() {
            // SAFETY: checked non-null; forwarded caller contract
            unsafe { hand_out(tally_out, report.to_string()) };
        }
        if report.balanced {
            VlStatus::Ok
        } else {
            fail(VlStatus::Unbalanced, "equation is not balanced")
        }
    })
}

/// Description of the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call into the library on this
/// thread and must not be freed.
#[no_mangle]
pub extern "C" fn vl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vl_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: came from CString::into_raw and is freed once
        drop(unsafe { CString::from_raw(s) });
    }
}
