//! Synthetic scenes: a small builder for hand-made fixtures and a seeded
//! random room generator for smoke tests and demos.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{world_to_camera, Intrinsics, OrientedBox3, Pose, Quat, Vec3};
use crate::graph::{SceneGraph, DEFAULT_MIN_BBOX_AREA_PX};
use crate::metadata::{CameraFrame, Extents, FrameMetadata, MetadataError, ObjectInstance, SceneMetadata, VisibleObject};
use crate::ply::{LabeledPoint, LabeledPointCloud};
use crate::qa::stream_rng;

pub const DEFAULT_INTRINSICS: Intrinsics = Intrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640, height: 480 };

/// Fixture builder. Frames get ids 0, 1, 2, ... and every listed object is
/// visible with a 100×100 px box.
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    scene_id: String,
    objects: Vec<ObjectInstance>,
    frames: Vec<CameraFrame>,
    extents: Option<Extents>,
    intrinsics: Intrinsics,
}

impl SceneBuilder {
    pub fn new(scene_id: &str) -> Self {
        SceneBuilder { scene_id: scene_id.into(), objects: vec![], frames: vec![], extents: None, intrinsics: DEFAULT_INTRINSICS }
    }

    pub fn object(mut self, instance_id: u32, category: &str, bbox: OrientedBox3) -> Self {
        self.objects.push(ObjectInstance { instance_id, category: category.into(), bbox });
        self
    }

    pub fn frame(mut self, pose: Pose, visible: &[u32]) -> Self {
        let frame_id = self.frames.len() as u64;
        self.frames.push(CameraFrame {
            frame_id,
            pose,
            color_path: format!("color/{frame_id}.jpg"),
            depth_path: format!("depth/{frame_id}.png"),
            visible_objects: visible.iter().map(|&instance_id| VisibleObject { instance_id, bbox_2d: [0.0, 0.0, 100.0, 100.0] }).collect(),
        });
        self
    }

    pub fn extents(mut self, min: Vec3, max: Vec3) -> Self {
        self.extents = Some(Extents { min, max });
        self
    }

    pub fn try_build(self) -> Result<SceneGraph, String> {
        let extents = self.extents.unwrap_or_else(|| padded_bounds(&self.objects, 0.5));
        let scene = SceneMetadata::from_objects(self.scene_id.clone(), extents, self.objects).map_err(|e| e.to_string())?;
        let frames = FrameMetadata { scene_id: self.scene_id, intrinsics: self.intrinsics, frames: self.frames };
        frames.validate().map_err(|e| e.to_string())?;
        SceneGraph::build(scene, frames, DEFAULT_MIN_BBOX_AREA_PX).map_err(|e| e.to_string())
    }

    /// Panics on inconsistent input.
    pub fn build(self) -> SceneGraph {
        self.try_build().expect("invalid fixture scene")
    }
}

fn padded_bounds(objects: &[ObjectInstance], pad: f64) -> Extents {
    if objects.is_empty() {
        return Extents { min: Vec3::ZERO, max: Vec3::new(1.0, 1.0, 1.0) };
    }
    let (mut lo, mut hi) = objects[0].bbox.aabb();
    for o in &objects[1..] {
        let (a, b) = o.bbox.aabb();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let p = Vec3::new(pad, pad, 0.0);
    Extents { min: lo - p, max: hi + p }
}

const CATEGORIES: [&str; 24] = [
    "chair", "table", "sofa", "bed", "lamp", "tv", "door", "window", "desk", "shelf", "cabinet", "toilet", "sink",
    "bathtub", "refrigerator", "stove", "plant", "monitor", "dresser", "mirror", "pillow", "trash can", "bench", "stool",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub objects: (usize, usize),
    pub frames: (usize, usize),
    pub duplicate_prob: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { objects: (5, 15), frames: (8, 64), duplicate_prob: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub scene: SceneMetadata,
    pub frames: FrameMetadata,
}

impl SynthScene {
    pub fn graph(&self) -> SceneGraph {
        SceneGraph::build(self.scene.clone(), self.frames.clone(), DEFAULT_MIN_BBOX_AREA_PX).expect("synthetic scenes are consistent")
    }
}

/// A rectangular room with non-overlapping yawed boxes and a camera orbiting
/// inside it. Deterministic in `(seed, scene_id)`.
pub fn random_scene(scene_id: &str, seed: u64, opts: &SynthOptions) -> SynthScene {
    let mut rng = stream_rng(seed, scene_id, "synth", 0);
    let n_obj = rng.random_range(opts.objects.0..=opts.objects.1);
    let (mut w, mut d, h) = (rng.random_range(4.0..8.0), rng.random_range(4.0..8.0), 2.6);
    let grow = (3.0 * n_obj as f64 / (w * d)).sqrt().max(1.0);
    (w, d) = (w * grow, d * grow);
    let extents = Extents { min: Vec3::ZERO, max: Vec3::new(w, d, h) };

    let mut objects: Vec<ObjectInstance> = Vec::new();
    let mut footprints: Vec<(Vec3, f64)> = Vec::new();
    for id in 1..=n_obj as u32 {
        let category = if !objects.is_empty() && rng.random_bool(opts.duplicate_prob) {
            objects.choose(&mut rng).expect("nonempty").category.clone()
        } else {
            CATEGORIES.choose(&mut rng).expect("nonempty").to_string()
        };
        let mut size = Vec3::new(rng.random_range(0.3..1.6), rng.random_range(0.3..1.6), rng.random_range(0.3..1.8));
        let yaw = rng.random_range(0.0..360.0);
        // Shrink the footprint until it fits; a 0.1 m box always finds room.
        'place: loop {
            let radius = 0.5 * size.x.hypot(size.y);
            for _ in 0..100 {
                let c = Vec3::new(rng.random_range(radius..w - radius), rng.random_range(radius..d - radius), 0.5 * size.z);
                if footprints.iter().all(|(p, r)| p.distance(c.floor()) > r + radius + 0.1) {
                    footprints.push((c.floor(), radius));
                    let bbox = OrientedBox3::new(c, size, Quat::yaw(yaw)).expect("valid box");
                    objects.push(ObjectInstance { instance_id: id, category, bbox });
                    break 'place;
                }
            }
            size = Vec3::new((size.x * 0.8).max(0.1), (size.y * 0.8).max(0.1), size.z);
        }
    }
    let scene = SceneMetadata::from_objects(scene_id, extents, objects).expect("valid synthetic scene");

    let n_frames = rng.random_range(opts.frames.0..=opts.frames.1);
    let center = Vec3::new(w / 2.0, d / 2.0, 0.0);
    let phase = rng.random_range(0.0..TAU);
    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let phi = phase + 0.9 * TAU * k as f64 / n_frames as f64;
        let eye = center + Vec3::new(0.3 * w * phi.cos(), 0.3 * d * phi.sin(), 1.4 + rng.random_range(-0.05..0.05));
        // Look roughly along the walking direction so objects enter view over time.
        let heading = phi + std::f64::consts::FRAC_PI_2 + rng.random_range(-0.6..0.6f64);
        let forward = Vec3::new(heading.cos(), heading.sin(), -0.35);
        let pose = Pose::look_along(eye, forward).expect("forward is not vertical");
        let frame_id = k as u64;
        frames.push(CameraFrame {
            frame_id,
            visible_objects: scene.objects.iter().filter_map(|o| project_box(&o.bbox, &pose, &DEFAULT_INTRINSICS).map(|bbox_2d| VisibleObject { instance_id: o.instance_id, bbox_2d })).collect(),
            pose,
            color_path: format!("color/{frame_id:05}.jpg"),
            depth_path: format!("depth/{frame_id:05}.png"),
        });
    }
    let frames = FrameMetadata { scene_id: scene_id.into(), intrinsics: DEFAULT_INTRINSICS, frames };
    SynthScene { scene, frames }
}

/// Image-clipped 2D box of a fully-in-front 3D box; `None` if any corner is
/// behind the near plane or the clipped box is empty.
pub fn project_box(b: &OrientedBox3, pose: &Pose, k: &Intrinsics) -> Option<[f64; 4]> {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in b.corners() {
        let p = world_to_camera(c, pose);
        if p.z < 0.05 {
            return None;
        }
        let (u, v) = k.project(p)?;
        lo = (lo.0.min(u), lo.1.min(v));
        hi = (hi.0.max(u), hi.1.max(v));
    }
    let (w, h) = (k.width as f64, k.height as f64);
    let clip = [lo.0.clamp(0.0, w), lo.1.clamp(0.0, h), hi.0.clamp(0.0, w), hi.1.clamp(0.0, h)];
    (clip[0] < clip[2] && clip[1] < clip[3]).then_some(clip)
}

/// Labeled points filling each object box plus a floor grid, with the
/// semantic label map (`0` is floor).
pub fn synth_cloud(scene: &SceneMetadata, points_per_object: usize, rng: &mut ChaCha8Rng) -> Result<(LabeledPointCloud, BTreeMap<i64, String>), MetadataError> {
    let mut labels: BTreeMap<String, i64> = BTreeMap::new();
    for o in &scene.objects {
        let next = labels.len() as i64 + 1;
        labels.entry(o.category.clone()).or_insert(next);
    }
    let mut points = Vec::new();
    let Extents { min, max } = scene.scene_extents;
    let step = 0.1;
    let (nx, ny) = (((max.x - min.x) / step) as usize, ((max.y - min.y) / step) as usize);
    for i in 0..=nx {
        for j in 0..=ny {
            points.push(LabeledPoint { position: Vec3::new(min.x + i as f64 * step, min.y + j as f64 * step, min.z), color: [128, 128, 128], semantic_label: 0, instance_label: 0 });
        }
    }
    for o in &scene.objects {
        let he = o.bbox.half_extents();
        for _ in 0..points_per_object {
            let local = Vec3::new(rng.random_range(-he.x..=he.x), rng.random_range(-he.y..=he.y), rng.random_range(-he.z..=he.z));
            points.push(LabeledPoint { position: o.bbox.to_world(local), color: [200, 80, 40], semantic_label: labels[&o.category], instance_label: o.instance_id });
        }
    }
    let cloud = LabeledPointCloud::new(points).map_err(|e| MetadataError::schema("cloud", e.to_string()))?;
    let mut map: BTreeMap<i64, String> = labels.into_iter().map(|(k, v)| (v, k)).collect();
    map.insert(0, "floor".into());
    Ok((cloud, map))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_assigns_sequential_frames() {
        let b = OrientedBox3::axis_aligned(Vec3::new(1.0, 1.0, 0.5), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let g = SceneBuilder::new("b").object(3, "lamp", b).frame(Pose::IDENTITY, &[3]).frame(Pose::IDENTITY, &[]).build();
        assert_eq!(g.frames().iter().map(|f| f.frame_id).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(g.first_seen()[&3], 0);
        assert_eq!(g.scene().scene_extents.min, Vec3::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn random_scene_is_deterministic_and_valid() {
        let a = random_scene("syn0", 9, &SynthOptions::default());
        assert_eq!(a, random_scene("syn0", 9, &SynthOptions::default()));
        assert_ne!(a, random_scene("syn1", 9, &SynthOptions::default()));
        a.scene.validate().unwrap();
        a.frames.validate().unwrap();
        let g = a.graph();
        assert!(g.objects().len() >= 5);
        assert!(g.visibility().values().any(|v| !v.is_empty()));
    }

    #[test]
    fn projected_box_contains_projected_center() {
        let b = OrientedBox3::new(Vec3::new(0.0, 3.0, 1.0), Vec3::new(1.0, 0.5, 0.8), Quat::yaw(30.0)).unwrap();
        let pose = Pose::look_along(Vec3::new(0.0, 0.0, 1.2), Vec3::Y).unwrap();
        let [x0, y0, x1, y1] = project_box(&b, &pose, &DEFAULT_INTRINSICS).unwrap();
        let (u, v) = DEFAULT_INTRINSICS.project(world_to_camera(b.center(), &pose)).unwrap();
        assert!(x0 < u && u < x1 && y0 < v && v < y1);
        let behind = Pose::look_along(Vec3::new(0.0, 0.0, 1.2), -Vec3::Y).unwrap();
        assert!(project_box(&b, &behind, &DEFAULT_INTRINSICS).is_none());
    }
}
