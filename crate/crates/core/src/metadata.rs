//! Scene and frame metadata: JSON schemas, validation, and box fitting from
//! labeled point clouds.
//!
//! `scene_metadata.json`:
//! ```json
//! { "scene_id": "s0",
//!   "scene_extents": { "min": [x, y, z], "max": [x, y, z] },
//!   "room_center": [x, y, z],
//!   "category_counts": { "chair": 2 },
//!   "objects": [ { "instance_id": 1, "category": "chair",
//!                  "center": [x, y, z], "size": [dx, dy, dz],
//!                  "rotation": [w, x, y, z] } ] }
//! ```
//! `frame_metadata.json`:
//! ```json
//! { "scene_id": "s0",
//!   "intrinsics": { "fx": 500, "fy": 500, "cx": 320, "cy": 240, "width": 640, "height": 480 },
//!   "frames": [ { "frame_id": 0, "pose_c2w": [16 row-major reals],
//!                 "color_path": "color/0.jpg", "depth_path": "depth/0.png",
//!                 "visible_objects": [ { "instance_id": 1, "bbox_2d": [xmin, ymin, xmax, ymax] } ] } ] }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Intrinsics, OrientedBox3, Pose, Quat, Vec3, TRANSFORM_TOL};
use crate::ply::LabeledPointCloud;

#[derive(Debug, Error)]
pub enum MetadataError {
    #[error("schema violation at '{path}': {message}")]
    SchemaViolation { path: String, message: String },
    #[error("no instance survived filtering ({dropped} dropped)")]
    EmptyAfterFiltering { dropped: usize },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl MetadataError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        MetadataError::SchemaViolation { path: path.into(), message: message.into() }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            MetadataError::SchemaViolation { path, .. } => Some(path),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extents {
    pub min: Vec3,
    pub max: Vec3,
}

impl Extents {
    pub fn footprint_area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub instance_id: u32,
    pub category: String,
    pub bbox: OrientedBox3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMetadata {
    pub scene_id: String,
    pub scene_extents: Extents,
    pub room_center: Vec3,
    pub category_counts: BTreeMap<String, usize>,
    pub objects: Vec<ObjectInstance>,
}

impl SceneMetadata {
    /// Assembles metadata from objects, deriving `room_center` and
    /// `category_counts`.
    pub fn from_objects(
        scene_id: impl Into<String>,
        scene_extents: Extents,
        objects: Vec<ObjectInstance>,
    ) -> Result<Self, MetadataError> {
        let meta = SceneMetadata {
            scene_id: scene_id.into(),
            room_center: scene_extents.center(),
            category_counts: count_categories(&objects),
            scene_extents,
            objects,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), MetadataError> {
        if self.scene_id.is_empty() {
            return Err(MetadataError::schema("scene_id", "must be nonempty"));
        }
        let Extents { min, max } = self.scene_extents;
        if !min.is_finite() || !max.is_finite() {
            return Err(MetadataError::schema("scene_extents", "non-finite extents"));
        }
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(MetadataError::schema("scene_extents", "min exceeds max"));
        }
        if !self.room_center.is_finite() {
            return Err(MetadataError::schema("room_center", "non-finite"));
        }
        let mut seen = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.category.trim().is_empty() {
                return Err(MetadataError::schema(format!("objects[{i}].category"), "must be nonempty"));
            }
            if !seen.insert(o.instance_id) {
                return Err(MetadataError::schema(
                    format!("objects[{i}].instance_id"),
                    format!("duplicate instance id {}", o.instance_id),
                ));
            }
        }
        if count_categories(&self.objects) != self.category_counts {
            return Err(MetadataError::schema("category_counts", "inconsistent with objects list"));
        }
        Ok(())
    }

    pub fn object(&self, instance_id: u32) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }
}

fn count_categories(objects: &[ObjectInstance]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for o in objects {
        *counts.entry(o.category.clone()).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibleObject {
    pub instance_id: u32,
    pub bbox_2d: [f64; 4],
}

impl VisibleObject {
    pub fn area(&self) -> f64 {
        let [x0, y0, x1, y1] = self.bbox_2d;
        (x1 - x0) * (y1 - y0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame_id: u64,
    pub pose: Pose,
    pub color_path: String,
    pub depth_path: String,
    pub visible_objects: Vec<VisibleObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMetadata {
    pub scene_id: String,
    pub intrinsics: Intrinsics,
    pub frames: Vec<CameraFrame>,
}

impl FrameMetadata {
    pub fn validate(&self) -> Result<(), MetadataError> {
        if self.scene_id.is_empty() {
            return Err(MetadataError::schema("scene_id", "must be nonempty"));
        }
        self.intrinsics.validate().map_err(|e| MetadataError::schema("intrinsics", e.to_string()))?;
        let (w, h) = (self.intrinsics.width as f64, self.intrinsics.height as f64);
        for (i, f) in self.frames.iter().enumerate() {
            if i > 0 && f.frame_id <= self.frames[i - 1].frame_id {
                return Err(MetadataError::schema(format!("frames[{i}].frame_id"), "frame ids must strictly increase"));
            }
            for (j, v) in f.visible_objects.iter().enumerate() {
                let [x0, y0, x1, y1] = v.bbox_2d;
                let ok = [x0, y0, x1, y1].iter().all(|c| c.is_finite())
                    && x0 >= 0.0
                    && y0 >= 0.0
                    && x1 <= w
                    && y1 <= h
                    && x0 < x1
                    && y0 < y1;
                if !ok {
                    return Err(MetadataError::schema(
                        format!("frames[{i}].visible_objects[{j}].bbox_2d"),
                        format!("{:?} is not a nonempty box inside the {w}x{h} image", v.bbox_2d),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self, frame_id: u64) -> Option<&CameraFrame> {
        self.frames.binary_search_by_key(&frame_id, |f| f.frame_id).ok().map(|i| &self.frames[i])
    }
}

// ---- wire documents --------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    instance_id: u32,
    category: String,
    center: [f64; 3],
    size: [f64; 3],
    rotation: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    scene_id: String,
    scene_extents: Extents,
    room_center: [f64; 3],
    category_counts: BTreeMap<String, usize>,
    objects: Vec<ObjectDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    frame_id: u64,
    pose_c2w: [f64; 16],
    color_path: String,
    depth_path: String,
    visible_objects: Vec<VisibleObject>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameMetadataDoc {
    scene_id: String,
    intrinsics: Intrinsics,
    frames: Vec<FrameDoc>,
}

fn decode<T: DeserializeOwned>(text: &str) -> Result<T, MetadataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        MetadataError::schema(path, e.into_inner().to_string())
    })
}

fn read_text(path: &Path) -> Result<String, MetadataError> {
    std::fs::read_to_string(path).map_err(|source| MetadataError::Io { path: path.display().to_string(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), MetadataError> {
    std::fs::write(path, text).map_err(|source| MetadataError::Io { path: path.display().to_string(), source })
}

pub fn parse_scene_metadata(text: &str) -> Result<SceneMetadata, MetadataError> {
    let doc: SceneDoc = decode(text)?;
    let mut objects = Vec::with_capacity(doc.objects.len());
    for (i, o) in doc.objects.into_iter().enumerate() {
        let rotation = Quat::from(o.rotation);
        if !((rotation.norm() - 1.0).abs() <= TRANSFORM_TOL) {
            return Err(MetadataError::schema(format!("objects[{i}].rotation"), "quaternion (w,x,y,z) must have unit norm"));
        }
        let bbox = OrientedBox3::new(o.center.into(), o.size.into(), rotation)
            .map_err(|e| MetadataError::schema(format!("objects[{i}].size"), e.to_string()))?;
        objects.push(ObjectInstance { instance_id: o.instance_id, category: o.category, bbox });
    }
    let meta = SceneMetadata {
        scene_id: doc.scene_id,
        scene_extents: doc.scene_extents,
        room_center: doc.room_center.into(),
        category_counts: doc.category_counts,
        objects,
    };
    meta.validate()?;
    Ok(meta)
}

pub fn parse_frame_metadata(text: &str) -> Result<FrameMetadata, MetadataError> {
    let doc: FrameMetadataDoc = decode(text)?;
    let mut frames = Vec::with_capacity(doc.frames.len());
    for (i, f) in doc.frames.into_iter().enumerate() {
        let m = &f.pose_c2w;
        if [m[12], m[13], m[14], m[15]].iter().zip([0.0, 0.0, 0.0, 1.0]).any(|(a, b)| !((a - b).abs() <= TRANSFORM_TOL)) {
            return Err(MetadataError::schema(format!("frames[{i}].pose_c2w"), "last row must be (0, 0, 0, 1)"));
        }
        let pose = Pose::from_row_major(m)
            .map_err(|e| MetadataError::schema(format!("frames[{i}].pose.rotation"), e.to_string()))?;
        frames.push(CameraFrame {
            frame_id: f.frame_id,
            pose,
            color_path: f.color_path,
            depth_path: f.depth_path,
            visible_objects: f.visible_objects,
        });
    }
    let meta = FrameMetadata { scene_id: doc.scene_id, intrinsics: doc.intrinsics, frames };
    meta.validate()?;
    Ok(meta)
}

pub fn load_scene_metadata(path: impl AsRef<Path>) -> Result<SceneMetadata, MetadataError> {
    parse_scene_metadata(&read_text(path.as_ref())?)
}

pub fn load_frame_metadata(path: impl AsRef<Path>) -> Result<FrameMetadata, MetadataError> {
    parse_frame_metadata(&read_text(path.as_ref())?)
}

pub fn scene_metadata_to_json(meta: &SceneMetadata) -> String {
    let doc = SceneDoc {
        scene_id: meta.scene_id.clone(),
        scene_extents: meta.scene_extents,
        room_center: meta.room_center.into(),
        category_counts: meta.category_counts.clone(),
        objects: meta
            .objects
            .iter()
            .map(|o| ObjectDoc {
                instance_id: o.instance_id,
                category: o.category.clone(),
                center: o.bbox.center().into(),
                size: o.bbox.size().into(),
                rotation: o.bbox.rotation().into(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("scene metadata serializes") + "\n"
}

pub fn frame_metadata_to_json(meta: &FrameMetadata) -> String {
    let doc = FrameMetadataDoc {
        scene_id: meta.scene_id.clone(),
        intrinsics: meta.intrinsics,
        frames: meta
            .frames
            .iter()
            .map(|f| FrameDoc {
                frame_id: f.frame_id,
                pose_c2w: f.pose.to_row_major(),
                color_path: f.color_path.clone(),
                depth_path: f.depth_path.clone(),
                visible_objects: f.visible_objects.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("frame metadata serializes") + "\n"
}

pub fn save_scene_metadata(meta: &SceneMetadata, path: impl AsRef<Path>) -> Result<(), MetadataError> {
    write_text(path.as_ref(), &scene_metadata_to_json(meta))
}

pub fn save_frame_metadata(meta: &FrameMetadata, path: impl AsRef<Path>) -> Result<(), MetadataError> {
    write_text(path.as_ref(), &frame_metadata_to_json(meta))
}

// ---- box fitting -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxOrientation {
    #[default]
    AxisAligned,
    /// Yaw from the principal axis of the floor-projected points.
    PcaYaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxFitOptions {
    pub min_points: usize,
    pub orientation: BoxOrientation,
}

impl Default for BoxFitOptions {
    fn default() -> Self {
        BoxFitOptions { min_points: 50, orientation: BoxOrientation::AxisAligned }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooFewPoints,
    UnmappedLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceBoxes {
    pub objects: Vec<ObjectInstance>,
    pub dropped: Vec<(u32, DropReason)>,
}

/// Boxes thinner than this along any axis are padded (planar clusters).
const MIN_BOX_EXTENT: f64 = 1e-3;

/// Fits one box per instance id with at least `min_points` points. The
/// category is the label-map name of the instance's majority semantic label.
pub fn derive_instance_boxes(
    cloud: &LabeledPointCloud,
    label_map: &BTreeMap<i64, String>,
    opts: &BoxFitOptions,
) -> Result<InstanceBoxes, MetadataError> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        groups.entry(p.instance_label).or_default().push(i);
    }
    let mut objects = Vec::new();
    let mut dropped = Vec::new();
    for (instance_id, idx) in groups {
        if idx.len() < opts.min_points {
            dropped.push((instance_id, DropReason::TooFewPoints));
            continue;
        }
        let mut votes: BTreeMap<i64, usize> = BTreeMap::new();
        for &i in &idx {
            *votes.entry(cloud.points()[i].semantic_label).or_insert(0) += 1;
        }
        // Ties resolve to the smallest label id.
        let (label, _) = votes.iter().fold((0i64, 0usize), |best, (&l, &c)| if c > best.1 { (l, c) } else { best });
        let Some(category) = label_map.get(&label) else {
            dropped.push((instance_id, DropReason::UnmappedLabel));
            continue;
        };
        let positions: Vec<Vec3> = idx.iter().map(|&i| cloud.points()[i].position).collect();
        let bbox = match opts.orientation {
            BoxOrientation::AxisAligned => fit_box(&positions, 0.0),
            BoxOrientation::PcaYaw => fit_box(&positions, principal_yaw_deg(&positions)),
        };
        objects.push(ObjectInstance { instance_id, category: category.clone(), bbox });
    }
    if objects.is_empty() {
        return Err(MetadataError::EmptyAfterFiltering { dropped: dropped.len() });
    }
    Ok(InstanceBoxes { objects, dropped })
}

fn fit_box(points: &[Vec3], yaw_deg: f64) -> OrientedBox3 {
    let rotation = if yaw_deg == 0.0 { Quat::IDENTITY } else { Quat::yaw(yaw_deg) };
    let m = rotation.to_mat3();
    let local: Vec<Vec3> = points.iter().map(|&p| m.tmul_vec(p)).collect();
    let (lo, hi) = local.iter().skip(1).fold((local[0], local[0]), |(lo, hi), p| (lo.min(*p), hi.max(*p)));
    let size = hi - lo;
    let size = Vec3::new(size.x.max(MIN_BOX_EXTENT), size.y.max(MIN_BOX_EXTENT), size.z.max(MIN_BOX_EXTENT));
    let center = m.mul_vec((lo + hi) * 0.5);
    OrientedBox3::new(center, size, rotation).expect("fitted box has positive size")
}

fn principal_yaw_deg(points: &[Vec3]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    let (mx, my) = (mx / n, my / n);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    0.5 * (2.0 * cxy).atan2(cxx - cyy).to_degrees()
}

/// Builds scene metadata for a cloud: extents are the cloud bounds.
pub fn scene_from_cloud(
    scene_id: &str,
    cloud: &LabeledPointCloud,
    objects: Vec<ObjectInstance>,
) -> Result<SceneMetadata, MetadataError> {
    let (min, max) = cloud.bounds();
    SceneMetadata::from_objects(scene_id, Extents { min, max }, objects)
}

/// Label maps are JSON objects from semantic id (as a string key) to category.
pub fn parse_label_map(text: &str) -> Result<BTreeMap<i64, String>, MetadataError> {
    let raw: BTreeMap<String, String> = decode(text)?;
    raw.into_iter()
        .map(|(k, v)| {
            let id = k.trim().parse::<i64>().map_err(|_| MetadataError::schema(k.clone(), "label id must be an integer"))?;
            if v.trim().is_empty() {
                return Err(MetadataError::schema(k, "category must be nonempty"));
            }
            Ok((id, v))
        })
        .collect()
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<BTreeMap<i64, String>, MetadataError> {
    parse_label_map(&read_text(path.as_ref())?)
}
