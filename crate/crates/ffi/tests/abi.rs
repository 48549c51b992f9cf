use chainswarm_ffi::*;
use std::ffi::{c_char, CString};
use std::ptr;

const SCENARIO: &str = r#"
version = 1
name = "ffi"
max_ticks = 3000
[map]
width = 20
height = 20
layers = 1
[control]
v_max = 0.5
r_col = 0.25
[mission]
targets = [[9.0, 10.0, 0.0]]
root = { mode = "fixed", id = 0 }
[robots]
ground = 6
spawn = { center = [5.0, 10.0], spacing = 0.6 }
"#;

fn new_sim(text: &str, seed: i64) -> Result<*mut CsSim, (CsStatus, String)> {
    let c = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { cs_sim_new(c.as_ptr(), ptr::null(), seed, &mut out) };
    if s == CsStatus::Ok {
        Ok(out)
    } else {
        Err((s, last_error()))
    }
}

fn last_error() -> String {
    let mut need = 0usize;
    unsafe { cs_last_error(ptr::null_mut(), 0, &mut need) };
    let mut buf = vec![0 as c_char; need];
    assert_eq!(unsafe { cs_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut()) }, CsStatus::Ok);
    unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn trajectory(sim: *const CsSim) -> String {
    let mut need = 0usize;
    assert_eq!(unsafe { cs_sim_trajectory_csv(sim, ptr::null_mut(), 0, &mut need) }, CsStatus::BufferTooSmall);
    let mut buf = vec![0u8; need];
    assert_eq!(unsafe { cs_sim_trajectory_csv(sim, buf.as_mut_ptr().cast(), need, ptr::null_mut()) }, CsStatus::Ok);
    buf.pop();
    String::from_utf8(buf).unwrap()
}

#[test]
fn run_to_completion() {
    let sim = new_sim(SCENARIO, 5).unwrap();
    let mut state = CsRunState::Running;
    assert_eq!(unsafe { cs_sim_run(sim, &mut state) }, CsStatus::Ok);
    assert_eq!(state, CsRunState::Complete);
    let mut m = CsMetrics::default();
    assert_eq!(unsafe { cs_sim_metrics(sim, &mut m) }, CsStatus::Ok);
    assert_eq!(m.violations, 0);
    assert!(m.completion_tick > 0 && m.completion_tick as u64 <= m.ticks);
    assert_eq!(unsafe { cs_sim_robot_count(sim) }, 6);
    let mut r = CsRobot::default();
    assert_eq!(unsafe { cs_sim_robot(sim, 0, &mut r) }, CsStatus::Ok);
    assert_eq!(r.role, CsRole::Root as u32);
    assert_eq!(r.parent, -1);
    unsafe { cs_sim_free(sim) };
}

#[test]
fn stepping_matches_run() {
    let a = new_sim(SCENARIO, 9).unwrap();
    let b = new_sim(SCENARIO, 9).unwrap();
    let mut sa = CsRunState::Running;
    unsafe { cs_sim_run(a, &mut sa) };
    let mut sb = CsRunState::Running;
    while sb == CsRunState::Running {
        assert_eq!(unsafe { cs_sim_step(b, 7, &mut sb) }, CsStatus::Ok);
    }
    assert_eq!(sa, sb);
    assert_eq!(unsafe { cs_sim_tick(a) }, unsafe { cs_sim_tick(b) });
    assert_eq!(trajectory(a), trajectory(b));
    unsafe {
        cs_sim_free(a);
        cs_sim_free(b);
    }
}

#[test]
fn schema_error_names_the_key() {
    let bad = SCENARIO.replace("r_col = 0.25", "r_col = 0.25\nbogus = 1");
    let (code, msg) = new_sim(&bad, -1).unwrap_err();
    assert_eq!(code, CsStatus::InvalidScenario);
    assert!(msg.contains("bogus"), "{msg}");
}

#[test]
fn null_and_range_errors() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cs_sim_new(ptr::null(), ptr::null(), 0, &mut out) }, CsStatus::NullArgument);
    assert!(out.is_null());
    assert_eq!(unsafe { cs_sim_step(ptr::null_mut(), 1, ptr::null_mut()) }, CsStatus::NullArgument);
    unsafe { cs_sim_free(ptr::null_mut()) };
    let sim = new_sim(SCENARIO, 1).unwrap();
    let mut r = CsRobot::default();
    assert_eq!(unsafe { cs_sim_robot(sim, 99, &mut r) }, CsStatus::OutOfRange);
    assert_eq!(unsafe { cs_sim_fail_robot(sim, 99) }, CsStatus::OutOfRange);
    assert_eq!(unsafe { cs_sim_fail_robot(sim, 3) }, CsStatus::Ok);
    assert_eq!(unsafe { cs_sim_robot(sim, 3, &mut r) }, CsStatus::Ok);
    assert_eq!(r.role, CsRole::Failed as u32);
    unsafe { cs_sim_free(sim) };
}

#[test]
fn invalid_utf8_rejected() {
    let bytes = [0xffu8, 0xfe, 0];
    let mut out = ptr::null_mut();
    let s = unsafe { cs_sim_new(bytes.as_ptr().cast(), ptr::null(), 0, &mut out) };
    assert_eq!(s, CsStatus::InvalidUtf8);
}

#[test]
fn link_helpers() {
    let cfg = CsRadio { range: 2.5, near_field: 0.1, safe: 1.4, critical: 1.6, break_away: 1.8 };
    let q = unsafe { cs_link_quality(1.0, &cfg) };
    assert!((q - (-5.0f64 * 1.0 / 2.5).exp()).abs() < 1e-12);
    assert_eq!(unsafe { cs_link_quality(2.5, &cfg) }, 0.0);
    assert!(unsafe { cs_link_quality(1.0, ptr::null()) }.is_nan());
    let mut z = CsZone::OutOfRange;
    for (d, want) in [(1.4, CsZone::Safe), (1.5, CsZone::Critical), (1.8, CsZone::BreakAway), (1.81, CsZone::OutOfRange)] {
        assert_eq!(unsafe { cs_classify_zone(d, &cfg, &mut z) }, CsStatus::Ok);
        assert_eq!(z, want, "d = {d}");
    }
}

#[test]
fn version_is_cstring() {
    let v = unsafe { std::ffi::CStr::from_ptr(cs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
