//! Question-answer records and the generators that emit them.

pub mod spatial;
pub mod temporal;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::CONVENTION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ObjCount,
    AbsDist,
    RelDist,
    RelDir,
    ObjSize,
    RoomSize,
    AppearanceOrder,
    RoutePlan,
    CamObjAbsDist,
    CamObjRelDist,
    ObjObjRelPos,
    CamDisplacement,
    CamMoveDir,
}

impl Task {
    pub const ALL: [Task; 13] = [
        Task::ObjCount,
        Task::AbsDist,
        Task::RelDist,
        Task::RelDir,
        Task::ObjSize,
        Task::RoomSize,
        Task::AppearanceOrder,
        Task::RoutePlan,
        Task::CamObjAbsDist,
        Task::CamObjRelDist,
        Task::ObjObjRelPos,
        Task::CamDisplacement,
        Task::CamMoveDir,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::ObjCount => "obj_count",
            Task::AbsDist => "abs_dist",
            Task::RelDist => "rel_dist",
            Task::RelDir => "rel_dir",
            Task::ObjSize => "obj_size",
            Task::RoomSize => "room_size",
            Task::AppearanceOrder => "appearance_order",
            Task::RoutePlan => "route_plan",
            Task::CamObjAbsDist => "cam_obj_abs_dist",
            Task::CamObjRelDist => "cam_obj_rel_dist",
            Task::ObjObjRelPos => "obj_obj_rel_pos",
            Task::CamDisplacement => "cam_displacement",
            Task::CamMoveDir => "cam_move_dir",
        }
    }

    pub fn answer_type(self) -> AnswerType {
        match self {
            Task::ObjCount
            | Task::AbsDist
            | Task::ObjSize
            | Task::RoomSize
            | Task::CamObjAbsDist
            | Task::CamDisplacement => AnswerType::Na,
            _ => AnswerType::Mca,
        }
    }

    /// Allowed MCA option counts.
    fn option_arity(self) -> std::ops::RangeInclusive<usize> {
        match self {
            Task::ObjObjRelPos => 2..=2,
            Task::RelDir | Task::RoutePlan => 3..=3,
            _ => 4..=4,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown task '{0}'")]
pub struct UnknownTask(pub String);

impl FromStr for Task {
    type Err = UnknownTask;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerType {
    #[serde(rename = "NA")]
    Na,
    #[serde(rename = "MCA")]
    Mca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub qid: String,
    pub scene_id: String,
    pub task: Task,
    pub answer_type: AnswerType,
    pub question: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    pub ground_truth: String,
    pub frame_refs: Vec<u64>,
    pub meta: BTreeMap<String, Value>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("record {qid}: {message}")]
    Invalid { qid: String, message: String },
}

impl QaRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        let bad = |m: String| Err(RecordError::Invalid { qid: self.qid.clone(), message: m });
        if self.qid.is_empty() {
            return bad("empty qid".into());
        }
        if self.answer_type != self.task.answer_type() {
            return bad(format!("answer type {:?} does not match task {}", self.answer_type, self.task));
        }
        match self.answer_type {
            AnswerType::Mca => {
                if !self.task.option_arity().contains(&self.options.len()) {
                    return bad(format!("{} options for task {}", self.options.len(), self.task));
                }
                for (i, o) in self.options.iter().enumerate() {
                    if self.options[..i].contains(o) {
                        return bad(format!("duplicate option '{o}'"));
                    }
                }
                if !self.options.contains(&self.ground_truth) {
                    return bad(format!("ground truth '{}' not among options", self.ground_truth));
                }
            }
            AnswerType::Na => {
                if !self.options.is_empty() {
                    return bad("numerical record carries options".into());
                }
                match self.ground_truth.parse::<f64>() {
                    Ok(v) if v.is_finite() => {}
                    _ => return bad(format!("ground truth '{}' is not a decimal number", self.ground_truth)),
                }
            }
        }
        Ok(())
    }
}

/// Thresholds and seed material for every generator. All values are logged
/// into record metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub ambiguity_margin_m: f64,
    pub min_pair_dist_m: f64,
    pub rel_dir_side_min_deg: f64,
    pub rel_dir_back_min_deg: f64,
    pub rel_dir_min_planar_dist_m: f64,
    pub appearance_gap_frames: u64,
    pub rel_pos_margin_m: f64,
    pub min_displacement_m: f64,
    pub move_dir_dominance: f64,
    pub sequence_len: usize,
    /// Per-scene, per-task record cap; 0 keeps every eligible question.
    pub max_per_task: usize,
    pub route_turn_deg: f64,
    pub route_alt_min_deg: f64,
    pub route_window: usize,
    pub route_max_anchor_dist_m: f64,
    pub route_alternative_mode: bool,
    pub route_grid_cell_m: f64,
    pub route_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            ambiguity_margin_m: 0.15,
            min_pair_dist_m: 0.1,
            rel_dir_side_min_deg: 30.0,
            rel_dir_back_min_deg: 150.0,
            rel_dir_min_planar_dist_m: 0.3,
            appearance_gap_frames: 5,
            rel_pos_margin_m: 0.15,
            min_displacement_m: 0.5,
            move_dir_dominance: 1.5,
            sequence_len: 32,
            max_per_task: 40,
            route_turn_deg: 30.0,
            route_alt_min_deg: 45.0,
            route_window: 3,
            route_max_anchor_dist_m: 2.0,
            route_alternative_mode: false,
            route_grid_cell_m: 0.25,
            route_attempts: 24,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid generator config: {0}")]
pub struct ConfigError(pub String);

impl GenConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("ambiguity_margin_m", self.ambiguity_margin_m),
            ("min_pair_dist_m", self.min_pair_dist_m),
            ("rel_dir_side_min_deg", self.rel_dir_side_min_deg),
            ("rel_dir_min_planar_dist_m", self.rel_dir_min_planar_dist_m),
            ("rel_pos_margin_m", self.rel_pos_margin_m),
            ("min_displacement_m", self.min_displacement_m),
            ("move_dir_dominance", self.move_dir_dominance),
            ("route_turn_deg", self.route_turn_deg),
            ("route_max_anchor_dist_m", self.route_max_anchor_dist_m),
            ("route_grid_cell_m", self.route_grid_cell_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rel_dir_side_min_deg < self.rel_dir_back_min_deg && self.rel_dir_back_min_deg <= 180.0) {
            return Err(ConfigError("relative-direction bins must satisfy side < back <= 180".into()));
        }
        if self.appearance_gap_frames == 0 || self.sequence_len < 2 || self.route_window == 0 {
            return Err(ConfigError("appearance_gap_frames, route_window must be ≥ 1 and sequence_len ≥ 2".into()));
        }
        Ok(())
    }

    /// Independent random stream for `(seed, scene, task, counter)`.
    pub fn rng(&self, scene_id: &str, task: Task, counter: u64) -> ChaCha8Rng {
        stream_rng(self.seed, scene_id, task.name(), counter)
    }
}

/// Derives a ChaCha stream from hashed seed material, so each
/// `(scene, task, counter)` stream is fixed regardless of scheduling.
pub fn stream_rng(seed: u64, scene_id: &str, stream: &str, counter: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([0u8]);
    h.update(scene_id.as_bytes());
    h.update([0u8]);
    h.update(stream.as_bytes());
    h.update([0u8]);
    h.update(counter.to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Round to 0.1 and print with one decimal.
pub fn fmt_tenths(x: f64) -> String {
    format!("{:.1}", (x * 10.0).round() / 10.0)
}

/// Round to an integer and print.
pub fn fmt_integer(x: f64) -> String {
    format!("{}", x.round() as i64)
}

/// Keeps at most `cap` candidates, chosen by the stream and returned in
/// their original enumeration order.
pub(crate) fn cap_candidates<T>(cands: Vec<T>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if cap == 0 || cands.len() <= cap {
        return cands;
    }
    let mut keep = rand::seq::index::sample(rng, cands.len(), cap).into_vec();
    keep.sort_unstable();
    let mut slots: Vec<Option<T>> = cands.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().expect("indices are distinct")).collect()
}

/// Accumulates records for one `(scene, task)` stream and assigns qids.
pub(crate) struct RecordSink<'a> {
    scene_id: &'a str,
    task: Task,
    records: Vec<QaRecord>,
}

impl<'a> RecordSink<'a> {
    pub(crate) fn new(scene_id: &'a str, task: Task) -> Self {
        RecordSink { scene_id, task, records: Vec::new() }
    }

    pub(crate) fn push(
        &mut self,
        question: String,
        options: Vec<String>,
        ground_truth: String,
        frame_refs: Vec<u64>,
        mut meta: BTreeMap<String, Value>,
    ) {
        meta.insert("convention".into(), json!(CONVENTION));
        let record = QaRecord {
            qid: format!("{}:{}:{:05}", self.scene_id, self.task.name(), self.records.len()),
            scene_id: self.scene_id.to_string(),
            task: self.task,
            answer_type: self.task.answer_type(),
            question,
            options,
            ground_truth,
            frame_refs,
            meta,
        };
        debug_assert!(record.validate().is_ok(), "{:?}", record.validate());
        self.records.push(record);
    }

    pub(crate) fn finish(self) -> Vec<QaRecord> {
        self.records
    }
}

/// Builds a `meta` map from `(key, value)` pairs.
#[macro_export]
#[doc(hidden)]
macro_rules! meta {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut m = ::std::collections::BTreeMap::<String, ::serde_json::Value>::new();
        $( m.insert($k.to_string(), ::serde_json::json!($v)); )*
        m
    }};
}
