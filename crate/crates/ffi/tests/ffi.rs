use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use spatialqa::metadata::{save_frame_metadata, save_scene_metadata};
use spatialqa::synth::{random_scene, SynthOptions};
use spatialqa_ffi::*;

fn last_error() -> String {
    let p = sqa_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn take(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    sqa_string_free(p);
    s
}

fn write_scene(dir: &Path) {
    let s = random_scene("ffi0", 3, &SynthOptions::default());
    save_scene_metadata(&s.scene, dir.join("scene_metadata.json")).unwrap();
    save_frame_metadata(&s.frames, dir.join("frame_metadata.json")).unwrap();
}

#[test]
fn mra_and_errors() {
    let mut v = 0.0;
    assert_eq!(unsafe { sqa_mra(2.2, 2.0, &mut v) }, SqaStatus::Ok);
    assert_eq!(v, 0.8);
    assert!(sqa_last_error_message().is_null());
    assert_eq!(unsafe { sqa_mra(1.0, 0.0, &mut v) }, SqaStatus::InvalidInput);
    assert!(last_error().contains("not positive"));
    assert_eq!(unsafe { sqa_mra(1.0, 1.0, ptr::null_mut()) }, SqaStatus::NullArgument);
}

#[test]
fn box_distance() {
    let a = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    let b = [3.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    let mut d = -1.0;
    assert_eq!(unsafe { sqa_box_box_distance(a.as_ptr(), b.as_ptr(), &mut d) }, SqaStatus::Ok);
    assert!((d - 2.0).abs() < 1e-6);
    let bad = [0.0, 0.0, 0.0, -1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    assert_eq!(unsafe { sqa_box_box_distance(bad.as_ptr(), b.as_ptr(), &mut d) }, SqaStatus::InvalidGeometry);
    assert!(last_error().starts_with("a:"));
}

#[test]
fn scene_generate_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path());
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { sqa_scene_load(path.as_ptr(), &mut scene) }, SqaStatus::Ok);
    assert!(unsafe { sqa_scene_object_count(scene) } >= 5);
    assert!(unsafe { sqa_scene_frame_count(scene) } >= 8);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sqa_scene_generate_jsonl(scene, 0, 40, &mut out) }, SqaStatus::Ok);
    let jsonl = unsafe { take(out) };
    unsafe { sqa_scene_free(scene) };
    let records = spatialqa::pipeline::parse_records_jsonl(&jsonl).unwrap();
    assert!(!records.is_empty());

    let preds: String = records.iter().map(|r| serde_json::json!({"qid": r.qid, "raw_text": r.ground_truth}).to_string() + "\n").collect();
    let (rc, pc) = (CString::new(jsonl.clone()).unwrap(), CString::new(preds.clone()).unwrap());
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { sqa_evaluate_jsonl(rc.as_ptr(), pc.as_ptr(), 0, &mut report) }, SqaStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&unsafe { take(report) }).unwrap();
    assert_eq!(report["overall"], 1.0);

    let first = preds.lines().next().unwrap();
    let dup = CString::new(format!("{first}\n{first}\n")).unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { sqa_evaluate_jsonl(rc.as_ptr(), dup.as_ptr(), 0, &mut report) }, SqaStatus::DuplicateQid);
    assert!(report.is_null());

    let mut counts = ptr::null_mut();
    assert_eq!(unsafe { sqa_task_counts_json(rc.as_ptr(), &mut counts) }, SqaStatus::Ok);
    let counts: serde_json::Value = serde_json::from_str(&unsafe { take(counts) }).unwrap();
    assert_eq!(counts.as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum::<u64>() as usize, records.len());
}

#[test]
fn missing_scene_reports_path() {
    let path = CString::new("/nonexistent/scene").unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { sqa_scene_load(path.as_ptr(), &mut scene) }, SqaStatus::InvalidInput);
    assert!(scene.is_null());
    assert!(last_error().contains("/nonexistent/scene"));
    assert_eq!(unsafe { sqa_scene_load(ptr::null(), &mut scene) }, SqaStatus::NullArgument);
    unsafe { sqa_scene_free(ptr::null_mut()) };
    unsafe { sqa_string_free(ptr::null_mut()) };
}

#[test]
fn header_declares_the_abi() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/spatialqa.h")).unwrap();
    for name in [
        "typedef struct SqaScene SqaScene;",
        "SQA_STATUS_DUPLICATE_QID = 6",
        "sqa_scene_load(",
        "sqa_scene_generate_jsonl(",
        "sqa_evaluate_jsonl(",
        "sqa_box_box_distance(",
        "sqa_last_error_message(void)",
        "sqa_string_free(",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "spatialqa.h"
int main(void) {
    double v = 0.0;
    if (sqa_mra(2.2, 2.0, &v) != SQA_STATUS_OK || v != 0.8) return 1;
    if (sqa_mra(1.0, -1.0, &v) != SQA_STATUS_INVALID_INPUT) return 2;
    if (sqa_last_error_message() == NULL) return 3;
    SqaScene *s = NULL;
    if (sqa_scene_load("/nonexistent", &s) != SQA_STATUS_INVALID_INPUT || s != NULL) return 4;
    printf("%s\n", sqa_version());
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_library() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler available; skipping");
        return;
    }
    // Integration test binaries live in <target>/<profile>/deps; the static library sits next to them.
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = [deps.join("libspatialqa_ffi.a"), deps.parent().unwrap().join("libspatialqa_ffi.a")].into_iter().find(|p| p.exists());
    let Some(lib) = lib else {
        eprintln!("static library not found next to {}; skipping", deps.display());
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
