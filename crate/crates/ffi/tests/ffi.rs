use std::ffi::{c_char, CStr, CString};
use std::ptr;

use scentgen_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a library string.
fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { scentgen_string_free(p) };
    s
}

fn last_error() -> Option<String> {
    let p = scentgen_last_error();
    (!p.is_null()).then(|| take(p))
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(scentgen_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn canonicalize_and_errors() {
    let mut out = ptr::null_mut();
    let st = unsafe { scentgen_canonicalize(c("OCC").as_ptr(), &mut out) };
    assert_eq!(st, ScentgenStatus::Ok);
    let a = take(out);
    unsafe { scentgen_canonicalize(c("CCO").as_ptr(), &mut out) };
    assert_eq!(take(out), a);
    assert_eq!(last_error(), None);

    let st = unsafe { scentgen_canonicalize(c("C1CC").as_ptr(), &mut out) };
    assert_eq!(st, ScentgenStatus::BadInput);
    assert!(last_error().is_some());

    let st = unsafe { scentgen_canonicalize(ptr::null(), &mut out) };
    assert_eq!(st, ScentgenStatus::NullPointer);
    let st = unsafe { scentgen_canonicalize(c("C").as_ptr(), ptr::null_mut()) };
    assert_eq!(st, ScentgenStatus::NullPointer);

    let bad = [0xffu8, 0];
    let st = unsafe { scentgen_canonicalize(bad.as_ptr().cast(), &mut out) };
    assert_eq!(st, ScentgenStatus::InvalidUtf8);
}

#[test]
fn validate_reports_stage() {
    let mut passed = -1;
    let mut report = ptr::null_mut();
    let st = unsafe { scentgen_validate_smiles(c("c1ccccc1").as_ptr(), &mut passed, &mut report) };
    assert_eq!(st, ScentgenStatus::Ok);
    assert_eq!(passed, 1);
    take(report);

    let st = unsafe { scentgen_validate_smiles(c("C(C)(C)(C)(C)C").as_ptr(), &mut passed, &mut report) };
    assert_eq!(st, ScentgenStatus::Ok);
    assert_eq!(passed, 0);
    let v: serde_json::Value = serde_json::from_str(&take(report)).unwrap();
    assert_eq!(v["final_verdict"], false);
}

#[test]
fn select_sensors_modes() {
    let scenario = c(scentgen::sensorselect::AMMONIA_SCENARIO_JSON);
    let mut out = ptr::null_mut();
    for mode in [ScentgenSelectMode::Greedy, ScentgenSelectMode::Exact] {
        let st = unsafe { scentgen_select_sensors(scenario.as_ptr(), mode as i32, &mut out) };
        assert_eq!(st, ScentgenStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["chosen"].as_array().unwrap().len(), 4);
    }
    let st = unsafe { scentgen_select_sensors(scenario.as_ptr(), ScentgenSelectMode::Subtract as i32, &mut out) };
    assert_eq!(st, ScentgenStatus::Ok);
    take(out);
    let st = unsafe { scentgen_select_sensors(scenario.as_ptr(), 9, &mut out) };
    assert_eq!(st, ScentgenStatus::BadInput);
    let st = unsafe { scentgen_select_sensors(c("{}").as_ptr(), 0, &mut out) };
    assert_eq!(st, ScentgenStatus::BadInput);
}

#[test]
fn train_load_generate_free() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("scents.csv");
    std::fs::write(&data, scentgen::dataio::MINI_SCENTS_CSV).unwrap();
    let ckpt = dir.path().join("m.json");
    let metrics = dir.path().join("m.csv");
    let st = unsafe {
        scentgen_train(
            c(data.to_str().unwrap()).as_ptr(),
            c(r#"{"epochs": 2}"#).as_ptr(),
            c(ckpt.to_str().unwrap()).as_ptr(),
            c(metrics.to_str().unwrap()).as_ptr(),
        )
    };
    assert_eq!(st, ScentgenStatus::Ok, "{:?}", last_error());
    assert_eq!(std::fs::read_to_string(&metrics).unwrap().lines().count(), 3);

    let mut gen = ptr::null_mut();
    let st = unsafe { scentgen_generator_load(c(ckpt.to_str().unwrap()).as_ptr(), &mut gen) };
    assert_eq!(st, ScentgenStatus::Ok);
    let cfg = c(r#"{"mode":"constrained","allowlist":["C","O"],"n_atoms":3,"steps":800,"tau":0.5,"seed":1,"bond_source":"heuristic"}"#);
    assert_eq!(unsafe { scentgen_generator_configure(gen, cfg.as_ptr()) }, ScentgenStatus::Ok);

    let mut out = ptr::null_mut();
    let st = unsafe { scentgen_generate(gen, c(r#"{"descriptors":["fruity"],"count":2}"#).as_ptr(), &mut out) };
    assert_eq!(st, ScentgenStatus::Ok);
    let jsonl = take(out);
    assert_eq!(jsonl.lines().count(), 2);
    let st = unsafe { scentgen_generate(gen, c(r#"{"descriptors":[],"count":0}"#).as_ptr(), &mut out) };
    assert_eq!(st, ScentgenStatus::Ok);
    assert_eq!(take(out), "");

    let st = unsafe { scentgen_generator_configure(gen, c(r#"{"steps": 0}"#).as_ptr()) };
    assert_eq!(st, ScentgenStatus::BadInput);
    unsafe { scentgen_generator_free(gen) };
    unsafe { scentgen_generator_free(ptr::null_mut()) };
}

#[test]
fn train_errors_map_to_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = c(dir.path().join("m.json").to_str().unwrap());
    let st = unsafe { scentgen_train(c("/nonexistent.csv").as_ptr(), ptr::null(), out.as_ptr(), ptr::null()) };
    assert_eq!(st, ScentgenStatus::BadInput);

    let data = dir.path().join("scents.csv");
    std::fs::write(&data, scentgen::dataio::MINI_SCENTS_CSV).unwrap();
    let st = unsafe {
        scentgen_train(
            c(data.to_str().unwrap()).as_ptr(),
            c(r#"{"epochs": 50, "learning_rate": 1000.0}"#).as_ptr(),
            out.as_ptr(),
            ptr::null(),
        )
    };
    assert_eq!(st, ScentgenStatus::Diverged);
    assert!(last_error().unwrap().contains("diverged"));

    let mut gen = ptr::null_mut();
    let st = unsafe { scentgen_generator_load(c("/nonexistent.json").as_ptr(), &mut gen) };
    assert_eq!(st, ScentgenStatus::BadInput);
    assert!(gen.is_null());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/scentgen.h")).unwrap();
    for name in [
        "scentgen_version",
        "scentgen_last_error",
        "scentgen_string_free",
        "scentgen_canonicalize",
        "scentgen_validate_smiles",
        "scentgen_train",
        "scentgen_generator_load",
        "scentgen_generator_configure",
        "scentgen_generate",
        "scentgen_generator_free",
        "scentgen_select_sensors",
        "typedef struct ScentgenGenerator ScentgenGenerator",
        "SCENTGEN_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/scentgen.h"))
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
