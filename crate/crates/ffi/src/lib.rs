//! C ABI over `spatialqa`.
//!
//! Every fallible function returns an [`SqaStatus`]; on failure a message is
//! available from [`sqa_last_error_message`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and released with
//! [`sqa_string_free`]. Scenes are opaque handles released with
//! [`sqa_scene_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spatialqa::eval::{mra, parse_predictions_jsonl, score_run, EvalError, Weighting};
use spatialqa::geometry::{box_box_distance, OrientedBox3, Quat, Vec3};
use spatialqa::graph::DEFAULT_MIN_BBOX_AREA_PX;
use spatialqa::pipeline::{generate_scene, load_scene_input, parse_records_jsonl, records_to_jsonl, SceneInput};
use spatialqa::qa::{GenConfig, Task};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    InvalidGeometry = 4,
    Evaluation = 5,
    DuplicateQid = 6,
    Panic = 7,
}

/// Opaque scene handle: metadata, scene graph, and optional point cloud.
pub struct SqaScene {
    input: SceneInput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn fail(status: SqaStatus, msg: impl Into<String>) -> SqaStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> SqaStatus) -> SqaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SqaStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SqaStatus> {
    if p.is_null() {
        return Err(fail(SqaStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(SqaStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> SqaStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            SqaStatus::Ok
        }
        Err(_) => fail(SqaStatus::InvalidInput, "output contains a nul byte"),
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sqa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a scene directory (`scene_metadata.json`, `frame_metadata.json`,
/// optional `cloud.ply`).
///
/// # Safety
/// `dir` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sqa_scene_load(dir: *const c_char, out: *mut *mut SqaScene) -> SqaStatus {
    guard(|| {
        if out.is_null() {
            return fail(SqaStatus::NullArgument, "out is NULL");
        }
        let dir = match str_arg(dir, "dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match load_scene_input(Path::new(dir), DEFAULT_MIN_BBOX_AREA_PX) {
            Ok(input) => {
                *out = Box::into_raw(Box::new(SqaScene { input }));
                SqaStatus::Ok
            }
            Err(e) => fail(SqaStatus::InvalidInput, e.to_string()),
        }
    })
}

/// Releases a scene. NULL is ignored.
///
/// # Safety
/// `scene` must come from [`sqa_scene_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sqa_scene_free(scene: *mut SqaScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of objects in the scene, or 0 for NULL.
///
/// # Safety
/// `scene` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sqa_scene_object_count(scene: *const SqaScene) -> usize {
    scene.as_ref().map_or(0, |s| s.input.graph.objects().len())
}

/// Number of frames in the scene, or 0 for NULL.
///
/// # Safety
/// `scene` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sqa_scene_frame_count(scene: *const SqaScene) -> usize {
    scene.as_ref().map_or(0, |s| s.input.graph.frames().len())
}

/// Generates every task family for the scene with default thresholds and
/// writes record JSONL (no header line) to `out_jsonl`.
///
/// # Safety
/// `scene` must be a live handle; `out_jsonl` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sqa_scene_generate_jsonl(scene: *const SqaScene, seed: u64, max_per_task: usize, out_jsonl: *mut *mut c_char) -> SqaStatus {
    guard(|| {
        let Some(scene) = scene.as_ref() else { return fail(SqaStatus::NullArgument, "scene is NULL") };
        if out_jsonl.is_null() {
            return fail(SqaStatus::NullArgument, "out_jsonl is NULL");
        }
        let cfg = GenConfig { seed, max_per_task, ..GenConfig::default() };
        let records = generate_scene(&scene.input, None, &Task::ALL, &cfg);
        put_string(out_jsonl, records_to_jsonl(&records, None))
    })
}

/// Mean relative accuracy of `pred` against a positive `truth`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sqa_mra(pred: f64, truth: f64, out: *mut f64) -> SqaStatus {
    guard(|| {
        if out.is_null() {
            return fail(SqaStatus::NullArgument, "out is NULL");
        }
        match mra(pred, truth) {
            Ok(v) => {
                *out = v;
                SqaStatus::Ok
            }
            Err(e) => fail(SqaStatus::InvalidInput, e.to_string()),
        }
    })
}

unsafe fn read_box(p: *const f64, name: &str) -> Result<OrientedBox3, SqaStatus> {
    if p.is_null() {
        return Err(fail(SqaStatus::NullArgument, format!("{name} is NULL")));
    }
    let v = std::slice::from_raw_parts(p, 10);
    OrientedBox3::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]), Quat::from([v[6], v[7], v[8], v[9]]))
        .map_err(|e| fail(SqaStatus::InvalidGeometry, format!("{name}: {e}")))
}

/// Minimum distance between two solid oriented boxes, each given as 10
/// doubles: center xyz, size xyz, unit quaternion wxyz.
///
/// # Safety
/// `a` and `b` must point to 10 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sqa_box_box_distance(a: *const f64, b: *const f64, out: *mut f64) -> SqaStatus {
    guard(|| {
        if out.is_null() {
            return fail(SqaStatus::NullArgument, "out is NULL");
        }
        let boxes = read_box(a, "a").and_then(|a| Ok((a, read_box(b, "b")?)));
        match boxes {
            Ok((a, b)) => {
                *out = box_box_distance(&a, &b);
                SqaStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Scores prediction JSONL (`{"qid", "raw_text"}` per line) against record
/// JSONL and writes the JSON report to `out_report`. Overall is the mean of
/// per-task scores unless `per_question` is nonzero.
///
/// # Safety
/// Both inputs must be nul-terminated strings; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sqa_evaluate_jsonl(records_jsonl: *const c_char, predictions_jsonl: *const c_char, per_question: i32, out_report: *mut *mut c_char) -> SqaStatus {
    guard(|| {
        if out_report.is_null() {
            return fail(SqaStatus::NullArgument, "out_report is NULL");
        }
        let (recs, preds) = match str_arg(records_jsonl, "records_jsonl").and_then(|r| Ok((r, str_arg(predictions_jsonl, "predictions_jsonl")?))) {
            Ok(pair) => pair,
            Err(s) => return s,
        };
        let records = match parse_records_jsonl(recs) {
            Ok(r) => r,
            Err(e) => return fail(SqaStatus::InvalidInput, format!("records: {e}")),
        };
        let preds = match parse_predictions_jsonl(preds) {
            Ok(p) => p,
            Err(e) => return fail(SqaStatus::InvalidInput, format!("predictions: {e}")),
        };
        let weighting = if per_question != 0 { Weighting::QuestionMean } else { Weighting::TaskMean };
        match score_run(&records, &preds, weighting) {
            Ok(rep) => put_string(out_report, rep.to_json()),
            Err(e @ EvalError::DuplicateQid(_)) => fail(SqaStatus::DuplicateQid, e.to_string()),
            Err(e) => fail(SqaStatus::Evaluation, e.to_string()),
        }
    })
}

/// Per-task record counts of record JSONL as a JSON object.
///
/// # Safety
/// `records_jsonl` must be a nul-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sqa_task_counts_json(records_jsonl: *const c_char, out_json: *mut *mut c_char) -> SqaStatus {
    guard(|| {
        if out_json.is_null() {
            return fail(SqaStatus::NullArgument, "out_json is NULL");
        }
        let text = match str_arg(records_jsonl, "records_jsonl") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match spatialqa::pipeline::task_counts(text) {
            Ok(c) => put_string(out_json, serde_json::to_string(&c).expect("counts serialize")),
            Err(e) => fail(SqaStatus::InvalidInput, e.to_string()),
        }
    })
}
