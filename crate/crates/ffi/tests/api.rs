use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use serde_json::Value;

use gamebench::registry::Registry;
use gamebench::runtime::{run_task, split_preset, RunConfig};
use gamebench_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    gb_string_free(p);
    s
}

unsafe fn last_error() -> String {
    let p = gb_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

unsafe fn open(reg: *const GbRegistry, preset: &str, seed: u64) -> *mut GbRun {
    let mut run = ptr::null_mut();
    assert_eq!(gb_run_open(reg, c(preset).as_ptr(), seed, 0, 0, &mut run), GB_OK);
    run
}

unsafe fn bundled() -> *mut GbRegistry {
    let mut reg = ptr::null_mut();
    assert_eq!(gb_registry_open(ptr::null(), &mut reg), GB_OK);
    reg
}

#[test]
fn played_run_matches_the_library() {
    let expected = run_task(&Registry::bundled(), RunConfig::new(split_preset("snake+t01+oracle").unwrap(), 7)).unwrap();
    unsafe {
        let reg = bundled();
        let run = open(reg, "snake+t01+oracle", 7);
        assert_eq!(gb_run_is_finished(run), 0);
        assert_eq!(gb_run_play(run), GB_OK);
        assert_eq!(gb_run_is_finished(run), 1);

        let mut out = ptr::null_mut();
        assert_eq!(gb_run_chain(run, &mut out), GB_OK);
        assert_eq!(take(out), expected.chain);
        assert_eq!(gb_run_record_json(run, &mut out), GB_OK);
        let rec: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(rec["status"], "success");
        assert_eq!(rec["steps_used"], expected.record.steps_used);

        let left = c(r#"{"type":"press_key","key":"ArrowLeft"}"#);
        assert_eq!(gb_run_step(run, left.as_ptr(), ptr::null_mut()), GB_ERR_FINISHED);
        assert!(last_error().contains("finished"));
        gb_run_free(run);
        gb_registry_free(reg);
    }
}

#[test]
fn stepping_by_hand() {
    unsafe {
        let reg = bundled();
        let run = open(reg, "g2048+t04+oracle", 5);
        let mut out = ptr::null_mut();
        assert_eq!(gb_run_state_json(run, &mut out), GB_OK);
        let state: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(state["gameId"], "g2048");

        let down = c(r#"{"type":"press_key","key":"ArrowDown"}"#);
        assert_eq!(gb_run_step(run, down.as_ptr(), &mut out), GB_OK);
        let entry: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(entry["step"], 1);
        assert_eq!(entry["classification"], "valid");

        let click = c(r#"{"type":"click","x":3,"y":4}"#);
        assert_eq!(gb_run_step(run, click.as_ptr(), &mut out), GB_OK);
        let entry: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(entry["classification"], "OOS");

        let junk = c("{\"type\":\"teleport\"}");
        assert_eq!(gb_run_step(run, junk.as_ptr(), &mut out), GB_ERR_JSON);
        assert!(last_error().starts_with("action:"));

        assert_eq!(gb_run_record_json(run, &mut out), GB_OK);
        let rec: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(rec["steps_used"], 2);
        gb_run_free(run);
        gb_registry_free(reg);
    }
}

#[test]
fn repeat_seeds_follow_the_mix() {
    unsafe {
        let reg = bundled();
        let mut a = ptr::null_mut();
        assert_eq!(gb_run_open(reg, c("snake+t01+oracle").as_ptr(), 0, 1, 3, &mut a), GB_OK);
        let task_seed = Registry::bundled().task("snake", "t01").unwrap().seed;
        let b = open(reg, "snake+t01+oracle", gb_mix_seed(task_seed, 3));
        let (mut sa, mut sb) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(gb_run_state_json(a, &mut sa), GB_OK);
        assert_eq!(gb_run_state_json(b, &mut sb), GB_OK);
        assert_eq!(take(sa), take(sb));
        gb_run_free(a);
        gb_run_free(b);
        gb_registry_free(reg);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let reg = bundled();
        let mut run = ptr::null_mut();
        assert_eq!(gb_run_open(reg, c("snake").as_ptr(), 0, 0, 0, &mut run), GB_ERR_CONFIG);
        assert!(run.is_null());
        assert!(last_error().contains("snake"));
        assert_eq!(gb_run_open(reg, c("nosuch+t01+oracle").as_ptr(), 0, 0, 0, &mut run), GB_ERR_CONFIG);
        assert_eq!(gb_run_open(ptr::null(), c("snake+t01+oracle").as_ptr(), 0, 0, 0, &mut run), GB_ERR_NULL);
        assert_eq!(gb_run_open(reg, ptr::null(), 0, 0, 0, &mut run), GB_ERR_NULL);
        let bad = [0xffu8, 0];
        assert_eq!(gb_run_open(reg, bad.as_ptr().cast(), 0, 0, 0, &mut run), GB_ERR_UTF8);
        assert_eq!(gb_run_is_finished(ptr::null()), -GB_ERR_NULL);

        let mut missing = ptr::null_mut();
        assert_eq!(gb_registry_open(c("/nonexistent/registry").as_ptr(), &mut missing), GB_ERR_CONFIG);

        // Success clears the message.
        let mut out = ptr::null_mut();
        assert_eq!(gb_canonicalize(c("[1]").as_ptr(), &mut out), GB_OK);
        gb_string_free(out);
        assert!(gb_last_error().is_null());

        gb_string_free(ptr::null_mut());
        gb_run_free(ptr::null_mut());
        gb_registry_free(reg);
    }
}

#[test]
fn canonicalize_sorts_keys() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(gb_canonicalize(c(r#"{ "b": [1, {"z":0,"a":1}], "a": null }"#).as_ptr(), &mut out), GB_OK);
        assert_eq!(take(out), r#"{"a":null,"b":[1,{"a":1,"z":0}]}"#);
        assert_eq!(gb_canonicalize(c("{").as_ptr(), &mut out), GB_ERR_JSON);
    }
}

#[test]
fn header_declares_every_export() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/gamebench.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct GbRun GbRun;"));
}

fn target_dir() -> PathBuf {
    // CARGO_TARGET_TMPDIR is <target>/tmp; the cdylib sits in <target>/<profile>.
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let exe = std::env::current_exe().unwrap();
    let profile = exe.parent().unwrap().parent().unwrap().file_name().unwrap().to_owned();
    tmp.parent().unwrap().join(profile)
}

#[test]
fn c_program_links_against_the_header() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = target_dir();
    assert!(lib_dir.join("libgamebench_ffi.so").exists() || lib_dir.join("libgamebench_ffi.dylib").exists());
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("gamebench_smoke");
    let status = Command::new(cc)
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lgamebench_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .env("DYLD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let expected = run_task(&Registry::bundled(), RunConfig::new(split_preset("snake+t01+oracle").unwrap(), 7)).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), expected.chain);
}

fn which_cc() -> Result<String, ()> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc).arg("--version").output() {
        Ok(o) if o.status.success() => Ok(cc),
        _ => Err(()),
    }
}
