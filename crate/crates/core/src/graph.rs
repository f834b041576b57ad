//! Spatio-temporal scene graph: object nodes, per-frame camera nodes, and
//! visibility edges filtered by 2D box area.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{world_to_camera, Vec3};
use crate::metadata::{CameraFrame, FrameMetadata, ObjectInstance, SceneMetadata};

pub const DEFAULT_MIN_BBOX_AREA_PX: f64 = 400.0;
pub const DEFAULT_SEQUENCE_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("frame {frame_id} references unknown instance {instance_id}")]
    DanglingInstanceRef { frame_id: u64, instance_id: u32 },
    #[error("scene id mismatch: scene metadata '{scene}' vs frame metadata '{frames}'")]
    SceneIdMismatch { scene: String, frames: String },
    #[error("unknown frame {0}")]
    UnknownFrame(u64),
    #[error("unknown instance {0}")]
    UnknownInstance(u32),
    #[error("need at least 2 frames, graph has {0}")]
    TooFewFrames(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    scene: SceneMetadata,
    frames: FrameMetadata,
    min_bbox_area_px: f64,
    visibility: BTreeMap<u64, BTreeSet<u32>>,
    first_seen: BTreeMap<u32, u64>,
    category_first_seen: BTreeMap<String, u64>,
}

impl SceneGraph {
    pub fn build(scene: SceneMetadata, frames: FrameMetadata, min_bbox_area_px: f64) -> Result<Self, GraphError> {
        if scene.scene_id != frames.scene_id {
            return Err(GraphError::SceneIdMismatch { scene: scene.scene_id.clone(), frames: frames.scene_id.clone() });
        }
        let known: BTreeMap<u32, &ObjectInstance> = scene.objects.iter().map(|o| (o.instance_id, o)).collect();
        let mut visibility = BTreeMap::new();
        let mut first_seen = BTreeMap::new();
        let mut category_first_seen: BTreeMap<String, u64> = BTreeMap::new();
        // Frames are validated to be in strictly increasing id order, so the
        // first insertion is the minimum.
        for f in &frames.frames {
            let mut visible = BTreeSet::new();
            for v in &f.visible_objects {
                let Some(obj) = known.get(&v.instance_id) else {
                    return Err(GraphError::DanglingInstanceRef { frame_id: f.frame_id, instance_id: v.instance_id });
                };
                if v.area() >= min_bbox_area_px {
                    visible.insert(v.instance_id);
                    first_seen.entry(v.instance_id).or_insert(f.frame_id);
                    category_first_seen.entry(obj.category.clone()).or_insert(f.frame_id);
                }
            }
            visibility.insert(f.frame_id, visible);
        }
        Ok(SceneGraph { scene, frames, min_bbox_area_px, visibility, first_seen, category_first_seen })
    }

    pub fn scene(&self) -> &SceneMetadata {
        &self.scene
    }

    pub fn scene_id(&self) -> &str {
        &self.scene.scene_id
    }

    pub fn frame_metadata(&self) -> &FrameMetadata {
        &self.frames
    }

    pub fn frames(&self) -> &[CameraFrame] {
        &self.frames.frames
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.scene.objects
    }

    pub fn min_bbox_area_px(&self) -> f64 {
        self.min_bbox_area_px
    }

    pub fn visibility(&self) -> &BTreeMap<u64, BTreeSet<u32>> {
        &self.visibility
    }

    pub fn first_seen(&self) -> &BTreeMap<u32, u64> {
        &self.first_seen
    }

    pub fn category_first_seen(&self) -> &BTreeMap<String, u64> {
        &self.category_first_seen
    }

    pub fn frame(&self, frame_id: u64) -> Result<&CameraFrame, GraphError> {
        self.frames.frame(frame_id).ok_or(GraphError::UnknownFrame(frame_id))
    }

    pub fn object(&self, instance_id: u32) -> Result<&ObjectInstance, GraphError> {
        self.scene.object(instance_id).ok_or(GraphError::UnknownInstance(instance_id))
    }

    pub fn visible_in(&self, frame_id: u64) -> Result<&BTreeSet<u32>, GraphError> {
        self.visibility.get(&frame_id).ok_or(GraphError::UnknownFrame(frame_id))
    }

    pub fn category_count(&self, category: &str) -> usize {
        self.scene.category_counts.get(category).copied().unwrap_or(0)
    }

    /// Objects whose category has exactly one instance, in instance-id order.
    pub fn unique_objects(&self) -> Vec<&ObjectInstance> {
        let mut out: Vec<&ObjectInstance> =
            self.scene.objects.iter().filter(|o| self.category_count(&o.category) == 1).collect();
        out.sort_by_key(|o| o.instance_id);
        out
    }

    pub fn is_category_unique(&self, instance_id: u32) -> bool {
        self.scene.object(instance_id).is_some_and(|o| self.category_count(&o.category) == 1)
    }

    pub fn camera_position(&self, frame_id: u64) -> Result<Vec3, GraphError> {
        Ok(self.frame(frame_id)?.pose.translation())
    }

    /// The instance's 8 box corners in the camera frame of `frame_id`.
    pub fn object_in_camera(&self, frame_id: u64, instance_id: u32) -> Result<[Vec3; 8], GraphError> {
        let pose = self.frame(frame_id)?.pose;
        let obj = self.object(instance_id)?;
        Ok(obj.bbox.corners().map(|c| world_to_camera(c, &pose)))
    }

    /// `n` frame ids uniformly spaced over the frame list, first and last included.
    pub fn sample_frame_sequence(&self, n: usize) -> Result<Vec<u64>, GraphError> {
        let total = self.frames.frames.len();
        if total < 2 {
            return Err(GraphError::TooFewFrames(total));
        }
        Ok(uniform_indices(total, n).into_iter().map(|i| self.frames.frames[i].frame_id).collect())
    }

    pub fn to_json(&self) -> String {
        let dump = GraphDump {
            scene_id: self.scene_id(),
            min_bbox_area_px: self.min_bbox_area_px,
            objects: self
                .scene
                .objects
                .iter()
                .map(|o| ObjectNode {
                    instance_id: o.instance_id,
                    category: &o.category,
                    center: o.bbox.center().into(),
                    size: o.bbox.size().into(),
                    rotation: o.bbox.rotation().into(),
                    first_seen: self.first_seen.get(&o.instance_id).copied(),
                })
                .collect(),
            frames: self
                .frames
                .frames
                .iter()
                .map(|f| FrameNode {
                    frame_id: f.frame_id,
                    camera_position: f.pose.translation().into(),
                    visible: self.visibility[&f.frame_id].iter().copied().collect(),
                })
                .collect(),
            category_first_seen: &self.category_first_seen,
        };
        serde_json::to_string_pretty(&dump).expect("graph dump serializes") + "\n"
    }
}

/// Rounded uniform spacing `round(k (total − 1) / (n − 1))`, in integer
/// arithmetic. Saturates to every index when `n >= total`.
pub fn uniform_indices(total: usize, n: usize) -> Vec<usize> {
    if total == 0 {
        return Vec::new();
    }
    if n >= total {
        return (0..total).collect();
    }
    if n <= 1 {
        return vec![0];
    }
    let (span, steps) = (total - 1, n - 1);
    (0..n).map(|k| (2 * k * span + steps) / (2 * steps)).collect()
}

#[derive(Serialize)]
struct ObjectNode<'a> {
    instance_id: u32,
    category: &'a str,
    center: [f64; 3],
    size: [f64; 3],
    rotation: [f64; 4],
    first_seen: Option<u64>,
}

#[derive(Serialize)]
struct FrameNode {
    frame_id: u64,
    camera_position: [f64; 3],
    visible: Vec<u32>,
}

#[derive(Serialize)]
struct GraphDump<'a> {
    scene_id: &'a str,
    min_bbox_area_px: f64,
    objects: Vec<ObjectNode<'a>>,
    frames: Vec<FrameNode>,
    category_first_seen: &'a BTreeMap<String, u64>,
}
