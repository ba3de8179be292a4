use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ledgerbench_ffi::*;

const SMALL: &str = r#"{"name":"small","nodes":4,"run":{"clients":2,"rate":10,"duration":3000}}"#;

fn scenario(json: &str) -> *mut LbScenario {
    let text = CString::new(json).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(
        unsafe { lb_scenario_from_json(text.as_ptr(), &mut sc) },
        LbStatus::Ok
    );
    sc
}

fn last_error() -> String {
    let p = lb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { lb_string_free(p) };
    s
}

#[test]
fn run_and_read_summary() {
    let sc = scenario(SMALL);
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { lb_run(sc, out.as_ptr(), &mut r) }, LbStatus::Ok);
    assert_eq!(unsafe { lb_result_fork_ratio(r) }, 1.0);
    assert!(unsafe { lb_result_throughput(r) } > 0.0);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { lb_result_summary_json(r, &mut s) }, LbStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(v, on_disk);
    unsafe {
        lb_result_free(r);
        lb_scenario_free(sc);
    }
}

#[test]
fn seed_override_reaches_summary() {
    let sc = scenario(SMALL);
    assert_eq!(unsafe { lb_scenario_set_seed(sc, 99) }, LbStatus::Ok);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { lb_run(sc, ptr::null(), &mut r) }, LbStatus::Ok);
    let mut s = ptr::null_mut();
    unsafe { lb_result_summary_json(r, &mut s) };
    let v: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
    assert_eq!(v["seed"], 99);
    unsafe {
        lb_result_free(r);
        lb_scenario_free(sc);
    }
}

#[test]
fn error_codes() {
    let mut sc = ptr::null_mut();
    assert_eq!(
        unsafe { lb_scenario_from_json(ptr::null(), &mut sc) },
        LbStatus::NullArgument
    );
    let bad = CString::new(r#"{"name":"x","nodez":3}"#).unwrap();
    assert_eq!(
        unsafe { lb_scenario_from_json(bad.as_ptr(), &mut sc) },
        LbStatus::Config
    );
    assert!(last_error().contains("nodez"));
    let missing = CString::new("no_such").unwrap();
    assert_eq!(
        unsafe { lb_scenario_bundled(missing.as_ptr(), &mut sc) },
        LbStatus::NotFound
    );
    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { lb_scenario_from_json(invalid.as_ptr().cast(), &mut sc) },
        LbStatus::InvalidUtf8
    );
    assert!(sc.is_null());
    assert!(unsafe { lb_result_throughput(ptr::null()) }.is_nan());
    let ok = CString::new("peak_pbft_8x8").unwrap();
    assert_eq!(
        unsafe { lb_scenario_bundled(ok.as_ptr(), &mut sc) },
        LbStatus::Ok
    );
    assert!(lb_last_error().is_null());
    unsafe { lb_scenario_free(sc) };
    let s = unsafe { CStr::from_ptr(lb_status_str(LbStatus::Config)) };
    assert_eq!(s.to_str().unwrap(), "configuration error");
}

#[test]
fn cluster_requests() {
    let sc = scenario(SMALL);
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { lb_cluster_new(sc, &mut c) }, LbStatus::Ok);
    let send = |req: &str| {
        let req = CString::new(req).unwrap();
        let mut resp = ptr::null_mut();
        assert_eq!(
            unsafe { lb_cluster_request(c, req.as_ptr(), &mut resp) },
            LbStatus::Ok
        );
        serde_json::from_str::<serde_json::Value>(&take_string(resp)).unwrap()
    };
    let r = send(r#"{"method":"advance","ticks":5000}"#);
    assert_eq!(r["ok"]["now"], 5000);
    let r = send(r#"{"method":"status"}"#);
    assert_eq!(r["ok"]["nodes"], 4);
    assert!(send(r#"{"method":"nope"}"#).get("error").is_some());
    unsafe {
        lb_cluster_free(c);
        lb_scenario_free(sc);
    }
}

#[test]
fn null_frees_are_noops() {
    unsafe {
        lb_scenario_free(ptr::null_mut());
        lb_result_free(ptr::null_mut());
        lb_cluster_free(ptr::null_mut());
        lb_string_free(ptr::null_mut());
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Directory holding the static library built alongside this test binary.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let lib = artifact_dir().join("libledgerbench_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
