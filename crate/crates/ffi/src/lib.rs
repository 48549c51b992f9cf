//! C ABI over the chainswarm simulator.
//!
//! Handles are opaque; every fallible call returns a [`CsStatus`] and leaves
//! a message retrievable with [`cs_last_error`]. Strings passed in are
//! NUL-terminated UTF-8. Buffers passed out follow the usual two-call
//! pattern: a call with a too-small buffer reports the required size.

use chainswarm::engine::{metrics_csv_header, metrics_csv_row, RunStatus, Sim};
use chainswarm::msg::{RobotKind, Role};
use chainswarm::radio::{classify_zone, link_quality, RadioConfig, Zone};
use chainswarm::scenario::parse_scenario;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    OutOfRange = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Terminal state of a simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsRunState {
    Running = 0,
    Complete = 1,
    Incomplete = 2,
    Aborted = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsRole {
    Root = 0,
    Worker = 1,
    Networker = 2,
    Free = 3,
    Failed = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsZone {
    Safe = 0,
    Critical = 1,
    BreakAway = 2,
    OutOfRange = 3,
}

/// Snapshot of one robot. Absent chain/parent/child are -1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CsRobot {
    pub id: u32,
    /// 0 ground, 1 flying.
    pub kind: u32,
    pub role: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub chain: i64,
    pub parent: i64,
    pub child: i64,
}

/// Run metrics. Absent completion tick is -1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CsMetrics {
    pub ticks: u64,
    pub completion_tick: i64,
    pub messages: u64,
    pub violations: u64,
    pub heal_events: u64,
    pub failed: u64,
    pub max_link: f64,
}

/// Radio thresholds for the link-model helpers.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CsRadio {
    pub range: f64,
    pub near_field: f64,
    pub safe: f64,
    pub critical: f64,
    pub break_away: f64,
}

/// Opaque simulation handle.
pub struct CsSim {
    sim: Sim,
    name: String,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(code: CsStatus, msg: impl Into<String>) -> CsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    code
}

fn guard(f: impl FnOnce() -> CsStatus) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CsStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, CsStatus> {
    if p.is_null() {
        return Err(fail(CsStatus::NullArgument, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|e| fail(CsStatus::InvalidUtf8, e.to_string()))
}

unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> CsStatus {
    let bytes = s.as_bytes();
    if !needed.is_null() {
        *needed = bytes.len() + 1;
    }
    if buf.is_null() || len < bytes.len() + 1 {
        return CsStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    *buf.add(bytes.len()) = 0;
    CsStatus::Ok
}

fn run_state(s: Option<RunStatus>) -> CsRunState {
    match s {
        None => CsRunState::Running,
        Some(RunStatus::Complete) => CsRunState::Complete,
        Some(RunStatus::Incomplete) => CsRunState::Incomplete,
        Some(RunStatus::Aborted) => CsRunState::Aborted,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message. Never changes it.
///
/// # Safety
/// `buf` must point to `len` writable bytes (or be null to query the size);
/// `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn cs_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> CsStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    copy_out(&msg, buf, len, needed)
}

/// Builds a simulation from scenario text. `base_dir` resolves relative
/// map paths and may be null (current directory). `seed` overrides the
/// scenario seed unless it is negative.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_new(
    scenario: *const c_char,
    base_dir: *const c_char,
    seed: i64,
    out: *mut *mut CsSim,
) -> CsStatus {
    guard(|| {
        if out.is_null() {
            return fail(CsStatus::NullArgument, "null out pointer");
        }
        *out = std::ptr::null_mut();
        let src = match text(scenario) {
            Ok(s) => s,
            Err(e) => return e,
        };
        let base = if base_dir.is_null() {
            PathBuf::new()
        } else {
            match text(base_dir) {
                Ok(s) => PathBuf::from(s),
                Err(e) => return e,
            }
        };
        let mut spec = match parse_scenario(src, "<ffi>") {
            Ok(s) => s,
            Err(e) => return fail(CsStatus::InvalidScenario, e.to_string()),
        };
        if seed >= 0 {
            spec.seed = seed as u64;
        }
        let sim = match spec.resolve(&base).map_err(|e| e.to_string()).and_then(|s| Sim::new(s).map_err(|e| e.to_string())) {
            Ok(s) => s,
            Err(e) => return fail(CsStatus::InvalidScenario, e),
        };
        *out = Box::into_raw(Box::new(CsSim { sim, name: spec.name }));
        CsStatus::Ok
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from [`cs_sim_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_free(sim: *mut CsSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances up to `ticks` ticks, stopping early at a terminal state.
///
/// # Safety
/// `sim` must be a live handle; `state` may be null.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_step(sim: *mut CsSim, ticks: u64, state: *mut CsRunState) -> CsStatus {
    guard(|| {
        let Some(h) = sim.as_mut() else {
            return fail(CsStatus::NullArgument, "null handle");
        };
        for _ in 0..ticks {
            if h.sim.status().is_some() {
                break;
            }
            h.sim.step();
        }
        if !state.is_null() {
            *state = run_state(h.sim.status());
        }
        CsStatus::Ok
    })
}

/// Runs to a terminal state.
///
/// # Safety
/// `sim` must be a live handle; `state` may be null.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_run(sim: *mut CsSim, state: *mut CsRunState) -> CsStatus {
    guard(|| {
        let Some(h) = sim.as_mut() else {
            return fail(CsStatus::NullArgument, "null handle");
        };
        let out = h.sim.run();
        if !state.is_null() {
            *state = run_state(Some(out.status));
        }
        CsStatus::Ok
    })
}

/// Current tick; 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_tick(sim: *const CsSim) -> u64 {
    sim.as_ref().map(|h| h.sim.tick()).unwrap_or(0)
}

/// Number of robots; 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_robot_count(sim: *const CsSim) -> usize {
    sim.as_ref().map(|h| h.sim.robots().len()).unwrap_or(0)
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_robot(sim: *const CsSim, index: usize, out: *mut CsRobot) -> CsStatus {
    guard(|| {
        let (Some(h), false) = (sim.as_ref(), out.is_null()) else {
            return fail(CsStatus::NullArgument, "null argument");
        };
        let Some(r) = h.sim.robots().get(index) else {
            return fail(CsStatus::OutOfRange, format!("robot index {index} out of range"));
        };
        *out = CsRobot {
            id: r.id.0,
            kind: match r.kind {
                RobotKind::Ground => 0,
                RobotKind::Flying => 1,
            },
            role: match r.role {
                Role::Root => CsRole::Root,
                Role::Worker => CsRole::Worker,
                Role::Networker => CsRole::Networker,
                Role::Free => CsRole::Free,
                Role::Failed => CsRole::Failed,
            } as u32,
            x: r.position.x,
            y: r.position.y,
            z: r.position.z,
            chain: r.chain.map(|c| c.0 as i64).unwrap_or(-1),
            parent: r.parent.map(|p| p.0 as i64).unwrap_or(-1),
            child: r.child.map(|c| c.0 as i64).unwrap_or(-1),
        };
        CsStatus::Ok
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_metrics(sim: *const CsSim, out: *mut CsMetrics) -> CsStatus {
    guard(|| {
        let (Some(h), false) = (sim.as_ref(), out.is_null()) else {
            return fail(CsStatus::NullArgument, "null argument");
        };
        let m = h.sim.metrics();
        *out = CsMetrics {
            ticks: m.ticks,
            completion_tick: m.all_complete.map(|t| t as i64).unwrap_or(-1),
            messages: m.messages_total(),
            violations: m.violations as u64,
            heal_events: m.heal_events.len() as u64,
            failed: m.failed.len() as u64,
            max_link: m.max_link_distance(),
        };
        CsStatus::Ok
    })
}

/// Fails a robot immediately (it stops moving and transmitting).
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_fail_robot(sim: *mut CsSim, id: u32) -> CsStatus {
    guard(|| {
        let Some(h) = sim.as_mut() else {
            return fail(CsStatus::NullArgument, "null handle");
        };
        if id as usize >= h.sim.robots().len() {
            return fail(CsStatus::OutOfRange, format!("robot {id} out of range"));
        }
        h.sim.fail_robot(chainswarm::msg::RobotId(id));
        CsStatus::Ok
    })
}

/// Trajectory CSV recorded so far.
///
/// # Safety
/// `sim` must be a live handle; buffer rules as in [`cs_last_error`].
#[no_mangle]
pub unsafe extern "C" fn cs_sim_trajectory_csv(sim: *const CsSim, buf: *mut c_char, len: usize, needed: *mut usize) -> CsStatus {
    guard(|| match sim.as_ref() {
        Some(h) => copy_out(h.sim.trajectory_csv(), buf, len, needed),
        None => fail(CsStatus::NullArgument, "null handle"),
    })
}

/// Metrics CSV (header plus one row) for the current state.
///
/// # Safety
/// `sim` must be a live handle; buffer rules as in [`cs_last_error`].
#[no_mangle]
pub unsafe extern "C" fn cs_sim_metrics_csv(sim: *const CsSim, buf: *mut c_char, len: usize, needed: *mut usize) -> CsStatus {
    guard(|| {
        let Some(h) = sim.as_ref() else {
            return fail(CsStatus::NullArgument, "null handle");
        };
        let c = &h.sim.spec().control;
        let status = h.sim.status().unwrap_or(RunStatus::Incomplete);
        let csv = format!(
            "{}\n{}\n",
            metrics_csv_header(),
            metrics_csv_row(&h.name, h.sim.spec().seed, status, h.sim.metrics(), c.dt, c.v_max)
        );
        copy_out(&csv, buf, len, needed)
    })
}

fn radio(r: &CsRadio) -> RadioConfig {
    RadioConfig {
        range: r.range,
        near_field: r.near_field,
        safe: r.safe,
        critical: r.critical,
        break_away: r.break_away,
        ..RadioConfig::default()
    }
}

/// Link quality at distance `d`; NaN for a null config.
///
/// # Safety
/// `cfg` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn cs_link_quality(d: f64, cfg: *const CsRadio) -> f64 {
    cfg.as_ref().map(|c| link_quality(d, &radio(c))).unwrap_or(f64::NAN)
}

/// Distance zone at `d`.
///
/// # Safety
/// `cfg` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_classify_zone(d: f64, cfg: *const CsRadio, out: *mut CsZone) -> CsStatus {
    let (Some(c), false) = (cfg.as_ref(), out.is_null()) else {
        return fail(CsStatus::NullArgument, "null argument");
    };
    *out = match classify_zone(d, &radio(c)) {
        Zone::Safe => CsZone::Safe,
        Zone::Critical => CsZone::Critical,
        Zone::BreakAway => CsZone::BreakAway,
        Zone::OutOfRange => CsZone::OutOfRange,
    };
    CsStatus::Ok
}
