//! End-to-end plumbing shared by the CLI and the C ABI: config resolution,
//! scene directory loading, scene-parallel generation, record JSONL, ingest,
//! and task counts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::CONVENTION;
use crate::graph::{SceneGraph, DEFAULT_MIN_BBOX_AREA_PX};
use crate::metadata::{
    derive_instance_boxes, load_frame_metadata, load_label_map, load_scene_metadata, save_frame_metadata, save_scene_metadata,
    scene_from_cloud, BoxFitOptions, BoxOrientation, DropReason,
};
use crate::ply::{parse_ply, LabeledPointCloud};
use crate::qa::{spatial, temporal, GenConfig, QaRecord, Task};
use crate::route::{gen_route_plan, parse_trajectories_jsonl, planned_trajectories, Trajectory};

pub const SCENE_METADATA_FILE: &str = "scene_metadata.json";
pub const FRAME_METADATA_FILE: &str = "frame_metadata.json";
pub const CLOUD_FILE: &str = "cloud.ply";

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Missing or malformed input; CLI exit code 2.
    #[error("{0}")]
    Input(String),
    /// Evaluation failure such as duplicate prediction ids; CLI exit code 3.
    #[error("{0}")]
    Evaluation(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) => 2,
            PipelineError::Evaluation(_) => 3,
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Input(format!("{}: {e}", path.display()))
}

fn read_to_string(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| input_err(path, e))
}

/// Resolved settings for a pipeline run; read from TOML and embedded in the
/// header of every generated file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tasks: Vec<Task>,
    /// Not written to headers: output is identical for any worker count.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub min_bbox_area_px: f64,
    pub generator: GenConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { tasks: Task::ALL.to_vec(), workers: 1, min_bbox_area_px: DEFAULT_MIN_BBOX_AREA_PX, generator: GenConfig::default() }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        PipelineConfig::from_toml(&read_to_string(path)?).map_err(|e| input_err(path, e))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.generator.validate().map_err(|e| PipelineError::Input(e.to_string()))?;
        if self.workers == 0 {
            return Err(PipelineError::Input("workers must be at least 1".into()));
        }
        if !(self.min_bbox_area_px >= 0.0) {
            return Err(PipelineError::Input("min_bbox_area_px must be non-negative".into()));
        }
        Ok(())
    }
}

/// One scene ready for generation.
#[derive(Debug, Clone)]
pub struct SceneInput {
    pub graph: SceneGraph,
    pub cloud: Option<LabeledPointCloud>,
}

pub fn is_scene_dir(dir: &Path) -> bool {
    dir.join(SCENE_METADATA_FILE).is_file() && dir.join(FRAME_METADATA_FILE).is_file()
}

/// `root` itself if it is a scene directory, else its scene subdirectories
/// in name order.
pub fn discover_scenes(root: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if is_scene_dir(root) {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| input_err(root, e))?;
    let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| is_scene_dir(p)).collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(input_err(root, format!("no scene directories (need {SCENE_METADATA_FILE} and {FRAME_METADATA_FILE})")));
    }
    Ok(dirs)
}

pub fn load_scene_input(dir: &Path, min_bbox_area_px: f64) -> Result<SceneInput, PipelineError> {
    let scene_path = dir.join(SCENE_METADATA_FILE);
    let frames_path = dir.join(FRAME_METADATA_FILE);
    let scene = load_scene_metadata(&scene_path).map_err(|e| input_err(&scene_path, e))?;
    let frames = load_frame_metadata(&frames_path).map_err(|e| input_err(&frames_path, e))?;
    let graph = SceneGraph::build(scene, frames, min_bbox_area_px).map_err(|e| input_err(dir, e))?;
    let cloud_path = dir.join(CLOUD_FILE);
    let cloud = if cloud_path.is_file() { Some(parse_ply(&cloud_path).map_err(|e| input_err(&cloud_path, e))?) } else { None };
    Ok(SceneInput { graph, cloud })
}

/// Trajectories grouped by scene id.
pub fn load_trajectories(path: &Path) -> Result<BTreeMap<String, Vec<Trajectory>>, PipelineError> {
    let parsed = parse_trajectories_jsonl(&read_to_string(path)?).map_err(|e| input_err(path, e))?;
    let mut out: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for (scene, t) in parsed {
        out.entry(scene).or_default().push(t);
    }
    Ok(out)
}

/// All selected task families for one scene, in task order. Temporal tasks
/// are skipped for scenes with fewer than two frames.
pub fn generate_scene(input: &SceneInput, trajectories: Option<&[Trajectory]>, tasks: &[Task], cfg: &GenConfig) -> Vec<QaRecord> {
    let g = &input.graph;
    let seq = g.sample_frame_sequence(cfg.sequence_len).ok();
    let mut selected = tasks.to_vec();
    selected.sort();
    selected.dedup();
    let mut out = Vec::new();
    for task in selected {
        let recs = match (task, &seq) {
            (Task::ObjCount, _) => spatial::gen_object_count(g, cfg),
            (Task::AbsDist, _) => spatial::gen_absolute_distance(g, cfg),
            (Task::RelDist, _) => spatial::gen_relative_distance(g, cfg),
            (Task::RelDir, _) => spatial::gen_relative_direction(g, cfg),
            (Task::ObjSize, _) => spatial::gen_object_size(g, cfg),
            (Task::RoomSize, _) => spatial::gen_room_size(g, cfg, input.cloud.as_ref()),
            (Task::AppearanceOrder, _) => spatial::gen_appearance_order(g, cfg),
            (Task::RoutePlan, _) => match trajectories {
                Some(t) if !t.is_empty() => gen_route_plan(g, cfg, t).0,
                _ => gen_route_plan(g, cfg, &planned_trajectories(g, cfg)).0,
            },
            (_, None) => Vec::new(),
            (Task::CamObjAbsDist, Some(s)) => temporal::gen_cam_obj_abs_dist(g, s, cfg),
            (Task::CamObjRelDist, Some(s)) => temporal::gen_cam_obj_rel_dist(g, s, cfg),
            (Task::ObjObjRelPos, Some(s)) => temporal::gen_obj_obj_rel_pos(g, s, cfg),
            (Task::CamDisplacement, Some(s)) => temporal::gen_cam_displacement(g, s, cfg),
            (Task::CamMoveDir, Some(s)) => temporal::gen_cam_move_dir(g, s, cfg),
        };
        out.extend(recs);
    }
    out
}

/// Generates every scene on a pool of `cfg.workers` threads; records come
/// back ordered by `(scene_id, task, counter)` regardless of scheduling.
pub fn generate(scenes: &[SceneInput], trajectories: &BTreeMap<String, Vec<Trajectory>>, cfg: &PipelineConfig) -> Result<Vec<QaRecord>, PipelineError> {
    use rayon::prelude::*;
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Input(format!("thread pool: {e}")))?;
    let per_scene: Vec<Vec<QaRecord>> = pool.install(|| {
        scenes
            .par_iter()
            .map(|s| generate_scene(s, trajectories.get(s.graph.scene_id()).map(|v| v.as_slice()), &cfg.tasks, &cfg.generator))
            .collect()
    });
    let mut records: Vec<QaRecord> = per_scene.into_iter().flatten().collect();
    // Stable: counters are already increasing within a (scene, task) run.
    records.sort_by(|a, b| a.scene_id.cmp(&b.scene_id).then(a.task.cmp(&b.task)));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub version: String,
    pub convention: String,
    pub config: PipelineConfig,
}

impl Header {
    pub fn new(config: &PipelineConfig) -> Header {
        Header { kind: "header".into(), version: env!("CARGO_PKG_VERSION").into(), convention: CONVENTION.into(), config: config.clone() }
    }
}

/// Header line (if any) followed by one record per line.
pub fn records_to_jsonl(records: &[QaRecord], header: Option<&Header>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&serde_json::to_string(h).expect("header serializes"));
        out.push('\n');
    }
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn is_header(v: &Value) -> bool {
    v.get("kind").and_then(Value::as_str) == Some("header")
}

/// Reads record JSONL, skipping header lines and validating every record.
pub fn parse_records_jsonl(text: &str) -> Result<Vec<QaRecord>, PipelineError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: &dyn std::fmt::Display| PipelineError::Input(format!("line {}: {e}", n + 1));
        let v: Value = serde_json::from_str(line).map_err(|e| bad(&e))?;
        if is_header(&v) {
            continue;
        }
        let r: QaRecord = serde_json::from_value(v).map_err(|e| bad(&e))?;
        r.validate().map_err(|e| bad(&e))?;
        out.push(r);
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<QaRecord>, PipelineError> {
    parse_records_jsonl(&read_to_string(path)?).map_err(|e| input_err(path, e))
}

/// Maps task names used by released benchmark files onto task names here.
pub fn canonical_task_name(raw: &str) -> String {
    let name = match raw {
        "object_counting" => "obj_count",
        "object_abs_distance" => "abs_dist",
        "object_rel_distance" => "rel_dist",
        "object_size_estimation" => "obj_size",
        "room_size_estimation" => "room_size",
        "route_planning" => "route_plan",
        "obj_appearance_order" | "object_appearance_order" => "appearance_order",
        "camera_displacement" => "cam_displacement",
        "camera_movement_direction" => "cam_move_dir",
        "camera_obj_abs_dist" => "cam_obj_abs_dist",
        "camera_obj_rel_dist" => "cam_obj_rel_dist",
        "obj_obj_relative_pos" => "obj_obj_rel_pos",
        s if s.starts_with("object_rel_direction") => "rel_dir",
        s => s,
    };
    name.to_string()
}

const TASK_KEYS: [&str; 3] = ["task", "question_type", "type"];

fn task_of(v: &Value) -> Option<String> {
    TASK_KEYS.iter().find_map(|k| v.get(*k).and_then(Value::as_str)).map(canonical_task_name)
}

/// Counts items per task in a JSONL file or a JSON array. Items name their
/// task under `task`, `question_type`, or `type`; items without one are
/// counted under `"unknown"`.
pub fn task_counts(text: &str) -> Result<BTreeMap<String, usize>, PipelineError> {
    let mut counts = BTreeMap::new();
    let mut add = |v: &Value| {
        if !is_header(v) {
            *counts.entry(task_of(v).unwrap_or_else(|| "unknown".into())).or_insert(0) += 1;
        }
    };
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let items: Vec<Value> = serde_json::from_str(trimmed).map_err(|e| PipelineError::Input(e.to_string()))?;
        items.iter().for_each(&mut add);
    } else {
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(line).map_err(|e| PipelineError::Input(format!("line {}: {e}", n + 1)))?;
            add(&v);
        }
    }
    Ok(counts)
}

/// [`task_counts`] over a file, or over every `.json`/`.jsonl` file in a
/// directory. In a directory, items without a task name are counted under
/// the file stem (released splits ship one file per task).
pub fn task_counts_path(path: &Path) -> Result<BTreeMap<String, usize>, PipelineError> {
    if !path.is_dir() {
        return task_counts(&read_to_string(path)?).map_err(|e| input_err(path, e));
    }
    let entries = fs::read_dir(path).map_err(|e| input_err(path, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")))
        .collect();
    files.sort();
    let mut counts = BTreeMap::new();
    for f in files {
        let stem = canonical_task_name(f.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown"));
        for (task, n) in task_counts(&read_to_string(&f)?).map_err(|e| input_err(&f, e))? {
            let key = if task == "unknown" { stem.clone() } else { task };
            *counts.entry(key).or_insert(0) += n;
        }
    }
    Ok(counts)
}

pub fn stats_table(counts: &BTreeMap<String, usize>) -> String {
    let mut out = format!("{:<22} {:>9}\n", "task", "count");
    for (t, c) in counts {
        out.push_str(&format!("{t:<22} {c:>9}\n"));
    }
    out.push_str(&format!("{:<22} {:>9}\n", "total", counts.values().sum::<usize>()));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub scene_id: String,
    pub points: usize,
    pub instances: usize,
    pub dropped: Vec<(u32, DropReason)>,
}

#[derive(Debug, Clone)]
pub struct IngestArgs<'a> {
    pub ply: &'a Path,
    pub label_map: &'a Path,
    pub scene_id: &'a str,
    pub out_dir: &'a Path,
    pub frames: Option<&'a Path>,
    pub min_points: usize,
    pub orientation: BoxOrientation,
}

/// Fits instance boxes from a labeled cloud and writes scene metadata, plus
/// frame metadata when a frames file is given (checked against the scene).
pub fn ingest(args: &IngestArgs) -> Result<IngestReport, PipelineError> {
    let cloud = parse_ply(args.ply).map_err(|e| input_err(args.ply, e))?;
    let labels = load_label_map(args.label_map).map_err(|e| input_err(args.label_map, e))?;
    let opts = BoxFitOptions { min_points: args.min_points, orientation: args.orientation };
    let boxes = derive_instance_boxes(&cloud, &labels, &opts).map_err(|e| input_err(args.ply, e))?;
    let instances = boxes.objects.len();
    let scene = scene_from_cloud(args.scene_id, &cloud, boxes.objects).map_err(|e| input_err(args.ply, e))?;
    fs::create_dir_all(args.out_dir).map_err(|e| input_err(args.out_dir, e))?;
    if let Some(frames_path) = args.frames {
        let frames = load_frame_metadata(frames_path).map_err(|e| input_err(frames_path, e))?;
        SceneGraph::build(scene.clone(), frames.clone(), DEFAULT_MIN_BBOX_AREA_PX).map_err(|e| input_err(frames_path, e))?;
        let out = args.out_dir.join(FRAME_METADATA_FILE);
        save_frame_metadata(&frames, &out).map_err(|e| input_err(&out, e))?;
    }
    let out = args.out_dir.join(SCENE_METADATA_FILE);
    save_scene_metadata(&scene, &out).map_err(|e| input_err(&out, e))?;
    Ok(IngestReport { scene_id: args.scene_id.into(), points: cloud.len(), instances, dropped: boxes.dropped })
}
