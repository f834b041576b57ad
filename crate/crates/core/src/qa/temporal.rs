//! Frame-level and sequence-level questions over a sampled frame sequence.
//! Frame numbers in question text are 1-based positions in the sequence.

use rand::seq::IndexedRandom;

use super::spatial::winner_with_margin;
use super::{cap_candidates, fmt_tenths, GenConfig, QaRecord, RecordSink, Task};
use crate::geometry::{closest_point_on_box, Vec3};
use crate::graph::SceneGraph;
use crate::meta;
use crate::metadata::ObjectInstance;

/// Category-unique objects visible in `frame_id`, in instance-id order.
fn unique_visible<'g>(g: &'g SceneGraph, frame_id: u64) -> Vec<&'g ObjectInstance> {
    let Ok(vis) = g.visible_in(frame_id) else { return Vec::new() };
    vis.iter().filter(|&&id| g.is_category_unique(id)).filter_map(|&id| g.object(id).ok()).collect()
}

pub fn gen_cam_obj_abs_dist(g: &SceneGraph, seq: &[u64], cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::CamObjAbsDist, 0);
    let n = seq.len();
    let mut cands = Vec::new();
    for (k, &fid) in seq.iter().enumerate() {
        let Ok(cam) = g.camera_position(fid) else { continue };
        for o in unique_visible(g, fid) {
            let d = closest_point_on_box(cam, &o.bbox).distance;
            // Camera inside the box (or rounding to zero) has no usable answer.
            if (d * 10.0).round() >= 1.0 {
                cands.push((k, fid, o, d));
            }
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::CamObjAbsDist);
    for (k, fid, o, d) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        sink.push(
            format!(
                "In frame {} of {n}, approximately how far (in meters) is the camera from the closest point of the {}?",
                k + 1,
                o.category
            ),
            vec![],
            fmt_tenths(d),
            vec![fid],
            meta! { "frame_index" => k + 1, "sequence_len" => n, "instance_id" => o.instance_id, "distance_m" => d },
        );
    }
    sink.finish()
}

pub fn gen_cam_obj_rel_dist(g: &SceneGraph, seq: &[u64], cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::CamObjRelDist, 0);
    let n = seq.len();
    let mut cands = Vec::new();
    for (k, &fid) in seq.iter().enumerate() {
        let vis = unique_visible(g, fid);
        if vis.len() < 4 {
            continue;
        }
        let Ok(cam) = g.camera_position(fid) else { continue };
        let picked: Vec<&ObjectInstance> = vis.choose_multiple(&mut rng, 4).copied().collect();
        let dists: Vec<f64> = picked.iter().map(|o| closest_point_on_box(cam, &o.bbox).distance).collect();
        let Some((best, margin)) = winner_with_margin(&dists) else { continue };
        if margin >= cfg.ambiguity_margin_m {
            cands.push((k, fid, picked, dists, best, margin));
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::CamObjRelDist);
    for (k, fid, picked, dists, best, margin) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        let options: Vec<String> = picked.iter().map(|o| o.category.clone()).collect();
        sink.push(
            format!(
                "In frame {} of {n}, which of these objects ({}) is the closest to the camera?",
                k + 1,
                options.join(", ")
            ),
            options.clone(),
            options[best].clone(),
            vec![fid],
            meta! {
                "frame_index" => k + 1,
                "sequence_len" => n,
                "candidate_ids" => picked.iter().map(|o| o.instance_id).collect::<Vec<_>>(),
                "distances_m" => dists,
                "margin_m" => margin,
                "ambiguity_margin_m" => cfg.ambiguity_margin_m,
            },
        );
    }
    sink.finish()
}

/// Camera axis compared by an object-object relative position question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelAxis {
    /// Camera Z (depth): near/far.
    Depth,
    /// Camera X (+ right): left/right.
    Horizontal,
    /// Camera Y (+ down): up/down.
    Vertical,
}

impl RelAxis {
    pub const ALL: [RelAxis; 3] = [RelAxis::Depth, RelAxis::Horizontal, RelAxis::Vertical];

    fn index(self) -> usize {
        match self {
            RelAxis::Horizontal => 0,
            RelAxis::Vertical => 1,
            RelAxis::Depth => 2,
        }
    }

    /// Labels for (smaller coordinate, larger coordinate).
    pub fn labels(self) -> [&'static str; 2] {
        match self {
            RelAxis::Depth => ["near", "far"],
            RelAxis::Horizontal => ["left", "right"],
            RelAxis::Vertical => ["up", "down"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelAxis::Depth => "depth",
            RelAxis::Horizontal => "horizontal",
            RelAxis::Vertical => "vertical",
        }
    }
}

fn interval(corners: &[Vec3; 8], axis: usize) -> (f64, f64) {
    corners.iter().map(|c| c.component(axis)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Label for A relative to B when their camera-frame intervals on `axis`
/// are separated by at least `margin`.
pub fn separated_label(a: &[Vec3; 8], b: &[Vec3; 8], axis: RelAxis, margin: f64) -> Option<&'static str> {
    let (a_lo, a_hi) = interval(a, axis.index());
    let (b_lo, b_hi) = interval(b, axis.index());
    let [smaller, larger] = axis.labels();
    if a_hi + margin <= b_lo {
        Some(smaller)
    } else if b_hi + margin <= a_lo {
        Some(larger)
    } else {
        None
    }
}

pub fn gen_obj_obj_rel_pos(g: &SceneGraph, seq: &[u64], cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::ObjObjRelPos, 0);
    let n = seq.len();
    let mut cands = Vec::new();
    for (k, &fid) in seq.iter().enumerate() {
        let vis = unique_visible(g, fid);
        for (i, a) in vis.iter().enumerate() {
            let Ok(ca) = g.object_in_camera(fid, a.instance_id) else { continue };
            for b in &vis[i + 1..] {
                let Ok(cb) = g.object_in_camera(fid, b.instance_id) else { continue };
                for axis in RelAxis::ALL {
                    if let Some(label) = separated_label(&ca, &cb, axis, cfg.rel_pos_margin_m) {
                        cands.push((k, fid, *a, *b, axis, label));
                    }
                }
            }
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::ObjObjRelPos);
    for (k, fid, a, b, axis, label) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        let relation = match axis {
            RelAxis::Depth => format!("is the {} nearer or farther than the {}", a.category, b.category),
            RelAxis::Horizontal => format!("is the {} to the left or to the right of the {}", a.category, b.category),
            RelAxis::Vertical => format!("is the {} above (up) or below (down) the {}", a.category, b.category),
        };
        sink.push(
            format!("In frame {} of {n}, from the camera's viewpoint, {relation}?", k + 1),
            axis.labels().map(String::from).to_vec(),
            label.to_string(),
            vec![fid],
            meta! {
                "frame_index" => k + 1,
                "sequence_len" => n,
                "subject_id" => a.instance_id,
                "reference_id" => b.instance_id,
                "axis" => axis.name(),
                "margin_m" => cfg.rel_pos_margin_m,
            },
        );
    }
    sink.finish()
}

pub fn gen_cam_displacement(g: &SceneGraph, seq: &[u64], cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::CamDisplacement, 0);
    let n = seq.len();
    let positions: Vec<Option<Vec3>> = seq.iter().map(|&f| g.camera_position(f).ok()).collect();
    let mut cands = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (Some(pi), Some(pj)) = (positions[i], positions[j]) else { continue };
            let d = pi.distance(pj);
            if d >= cfg.min_displacement_m {
                cands.push((i, j, d));
            }
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::CamDisplacement);
    for (i, j, d) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        sink.push(
            displacement_question(i + 1, j + 1, n),
            vec![],
            fmt_tenths(d),
            vec![seq[i], seq[j]],
            meta! {
                "frame_indices" => [i + 1, j + 1],
                "sequence_len" => n,
                "displacement_m" => d,
                "min_displacement_m" => cfg.min_displacement_m,
            },
        );
    }
    sink.finish()
}

pub fn displacement_question(i: usize, j: usize, n: usize) -> String {
    format!("Approximately how far (in meters) did the camera move between frame {i} and frame {j} of {n}?")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveDir {
    Forward,
    Backward,
    Left,
    Right,
}

impl MoveDir {
    pub const OPTIONS: [&'static str; 4] = ["Forward", "Backward", "Left", "Right"];

    pub fn label(self) -> &'static str {
        match self {
            MoveDir::Forward => "Forward",
            MoveDir::Backward => "Backward",
            MoveDir::Left => "Left",
            MoveDir::Right => "Right",
        }
    }
}

/// Classifies a start-frame displacement (`x` right, `z` forward; vertical
/// ignored). The dominant axis must exceed the other by `dominance`.
pub fn classify_move(local: Vec3, min_disp: f64, dominance: f64) -> Option<MoveDir> {
    let (x, z) = (local.x, local.z);
    if (x * x + z * z).sqrt() < min_disp {
        return None;
    }
    if z.abs() >= dominance * x.abs() {
        Some(if z > 0.0 { MoveDir::Forward } else { MoveDir::Backward })
    } else if x.abs() >= dominance * z.abs() {
        Some(if x > 0.0 { MoveDir::Right } else { MoveDir::Left })
    } else {
        None
    }
}

pub fn gen_cam_move_dir(g: &SceneGraph, seq: &[u64], cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::CamMoveDir, 0);
    let n = seq.len();
    let poses: Vec<_> = seq.iter().map(|&f| g.frame(f).ok().map(|fr| fr.pose)).collect();
    let mut cands = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (Some(start), Some(end)) = (poses[i], poses[j]) else { continue };
            let local = start.rotation().tmul_vec(end.translation() - start.translation());
            if let Some(dir) = classify_move(local, cfg.min_displacement_m, cfg.move_dir_dominance) {
                cands.push((i, j, local, dir));
            }
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::CamMoveDir);
    for (i, j, local, dir) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        sink.push(
            format!(
                "Between frame {} and frame {} of {n}, in which direction did the camera mainly move, relative to where it was facing in frame {}?",
                i + 1,
                j + 1,
                i + 1
            ),
            MoveDir::OPTIONS.map(String::from).to_vec(),
            dir.label().to_string(),
            vec![seq[i], seq[j]],
            meta! {
                "frame_indices" => [i + 1, j + 1],
                "sequence_len" => n,
                "local_displacement" => local.to_array(),
                "dominance" => cfg.move_dir_dominance,
                "min_displacement_m" => cfg.min_displacement_m,
            },
        );
    }
    sink.finish()
}
