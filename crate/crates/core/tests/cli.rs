use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spatialqa::pipeline::{parse_records_jsonl, records_to_jsonl};
use spatialqa::qa::{QaRecord, Task};

fn spatialqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spatialqa")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = spatialqa(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

fn golden_records() -> Vec<QaRecord> {
    parse_records_jsonl(&fs::read_to_string(golden().join("records.jsonl")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pred(qid: &str, text: &str) -> String {
    serde_json::json!({ "qid": qid, "raw_text": text }).to_string() + "\n"
}

#[test]
fn missing_input_exits_with_input_error() {
    let out = spatialqa(&["gen", "--input", "/nonexistent/scenes", "--out", "/tmp/never.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/scenes"));
    let out = spatialqa(&["stats", "/nonexistent/records.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn duplicate_prediction_exits_with_evaluation_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = &golden_records()[0];
    let preds = dir.path().join("preds.jsonl");
    fs::write(&preds, pred(&r.qid, &r.ground_truth).repeat(2)).unwrap();
    let out = spatialqa(&["eval", "--records", s(&golden().join("records.jsonl")), "--predictions", s(&preds)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&r.qid));
}

#[test]
fn eval_scores_a_small_run() {
    let all = golden_records();
    let pick = |t: Task, n: usize| all.iter().filter(|r| r.task == t).take(n).cloned().collect::<Vec<_>>();
    let rel_dir = pick(Task::RelDir, 2);
    let move_dir = pick(Task::CamMoveDir, 1);
    let mut dist = pick(Task::AbsDist, 2);
    dist[0].ground_truth = "2.0".into();
    dist[1].ground_truth = "1.0".into();
    let count = pick(Task::ObjCount, 1);
    let wrong = rel_dir[1].options.iter().find(|o| **o != rel_dir[1].ground_truth).unwrap();
    let records: Vec<QaRecord> = [rel_dir.clone(), move_dir, dist.clone(), count.clone()].concat();
    assert_eq!(records.len(), 6);

    let dir = tempfile::tempdir().unwrap();
    let rec_path = dir.path().join("records.jsonl");
    fs::write(&rec_path, records_to_jsonl(&records, None)).unwrap();
    let preds = dir.path().join("preds.jsonl");
    fs::write(
        &preds,
        [
            pred(&rel_dir[0].qid, &rel_dir[0].ground_truth),
            pred(&rel_dir[1].qid, wrong),
            pred(&dist[0].qid, "2.2"),
            pred(&dist[1].qid, "1.5"),
            pred(&count[0].qid, &count[0].ground_truth),
            pred("not-a-record", "1"),
        ]
        .concat(),
    )
    .unwrap();

    let report = |extra: &[&str]| -> Value {
        let path = dir.path().join("report.json");
        let mut args = vec!["eval", "--records", s(&rec_path), "--predictions", s(&preds), "--report", s(&path)];
        args.extend_from_slice(extra);
        let table = ok(&args);
        assert!(table.contains("overall"));
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
    };
    let by_task = report(&[]);
    let score = |t: &str| by_task["per_task"][t]["score"].as_f64().unwrap();
    assert_eq!(score("rel_dir"), 0.5);
    assert_eq!(score("cam_move_dir"), 0.0);
    assert!((score("abs_dist") - 0.4).abs() < 1e-12);
    assert_eq!(score("obj_count"), 1.0);
    assert_eq!(by_task["per_task"]["cam_move_dir"]["missing"], 1);
    assert_eq!(by_task["unmatched_predictions"], 1);
    assert!((by_task["overall"].as_f64().unwrap() - 1.9 / 4.0).abs() < 1e-12);

    let by_question = report(&["--per-question"]);
    assert!((by_question["overall"].as_f64().unwrap() - 2.8 / 6.0).abs() < 1e-12);
}

#[test]
fn stats_counts_files_and_directories() {
    let all = golden_records();
    let pick = |t: Task, n: usize| all.iter().filter(|r| r.task == t).take(n).cloned().collect::<Vec<_>>();
    let groups = [pick(Task::RelDir, 5), pick(Task::AbsDist, 3), pick(Task::RoomSize, 1), pick(Task::ObjCount, 1)];
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("all.jsonl");
    fs::write(&file, records_to_jsonl(&groups.concat(), None)).unwrap();
    let v: Value = serde_json::from_str(&ok(&["stats", s(&file), "--json"])).unwrap();
    assert_eq!(v["total"], 10);
    assert_eq!(v["per_task"]["rel_dir"], 5);
    assert_eq!(v["per_task"]["abs_dist"], 3);
    assert_eq!(v["per_task"]["room_size"], 1);
    assert_eq!(v["per_task"]["obj_count"], 1);

    let split = dir.path().join("split");
    fs::create_dir(&split).unwrap();
    for g in &groups {
        fs::write(split.join(format!("{}.jsonl", g[0].task.name())), records_to_jsonl(g, None)).unwrap();
    }
    let w: Value = serde_json::from_str(&ok(&["stats", s(&split), "--json"])).unwrap();
    assert_eq!(w, v);
    let table = ok(&["stats", s(&split)]);
    assert!(table.contains("rel_dir") && table.contains("10"));
}

#[test]
fn gen_task_subset_matches_the_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("count.jsonl");
    let summary = ok(&["gen", "--input", s(&golden()), "--out", s(&out), "--tasks", "obj_count,room_size"]);
    assert!(summary.contains("records from 1 scenes"));
    let got = parse_records_jsonl(&fs::read_to_string(&out).unwrap()).unwrap();
    let expected: Vec<QaRecord> = golden_records().into_iter().filter(|r| matches!(r.task, Task::ObjCount | Task::RoomSize)).collect();
    assert!(!expected.is_empty());
    assert_eq!(got, expected);
}

#[test]
fn ingest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("synth");
    ok(&["synth", "--out", s(&root), "--seed", "5", "--cloud"]);
    let scene = root.join("synth000");
    let (ply, labels, frames) = (scene.join("cloud.ply"), scene.join("label_map.json"), scene.join("frame_metadata.json"));
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("ingest{k}"));
        let args = [
            "ingest",
            "--ply",
            s(&ply),
            "--labels",
            s(&labels),
            "--scene-id",
            "synth000",
            "--out",
            s(&out),
            "--frames",
            s(&frames),
        ];
        assert!(ok(&args).starts_with("synth000:"));
        outputs.push(fs::read(out.join("scene_metadata.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let v: Value = serde_json::from_slice(&outputs[0]).unwrap();
    assert!(!v["objects"].as_array().unwrap().is_empty());
}
