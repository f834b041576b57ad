//! Configurational and measurement question families over a whole scene.

use rand::seq::{IndexedRandom, SliceRandom};
use rand_chacha::ChaCha8Rng;

use super::{cap_candidates, fmt_integer, fmt_tenths, GenConfig, QaRecord, RecordSink, Task};
use crate::geometry::{box_box_distance, planar_signed_angle, Vec3};
use crate::graph::SceneGraph;
use crate::meta;
use crate::metadata::ObjectInstance;
use crate::ply::LabeledPointCloud;

pub fn gen_object_count(g: &SceneGraph, cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::ObjCount, 0);
    let cands: Vec<(&String, usize)> =
        g.scene().category_counts.iter().filter(|(_, &n)| n >= 2).map(|(c, &n)| (c, n)).collect();
    let mut sink = RecordSink::new(g.scene_id(), Task::ObjCount);
    for (cat, n) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        let ids: Vec<u32> = g.objects().iter().filter(|o| &o.category == cat).map(|o| o.instance_id).collect();
        sink.push(
            format!("How many {cat}(s) are in this room?"),
            vec![],
            n.to_string(),
            vec![],
            meta! { "category" => cat, "instance_ids" => ids },
        );
    }
    sink.finish()
}

pub fn gen_absolute_distance(g: &SceneGraph, cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::AbsDist, 0);
    let uniq = g.unique_objects();
    let mut cands = Vec::new();
    for (i, a) in uniq.iter().enumerate() {
        for b in &uniq[i + 1..] {
            let d = box_box_distance(&a.bbox, &b.bbox);
            if d >= cfg.min_pair_dist_m {
                cands.push((*a, *b, d));
            }
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::AbsDist);
    for (a, b, d) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        sink.push(
            format!(
                "Measuring from the closest point of each object, what is the direct distance between the {} and the {} (in meters)?",
                a.category, b.category
            ),
            vec![],
            fmt_tenths(d),
            vec![],
            meta! {
                "instance_ids" => [a.instance_id, b.instance_id],
                "distance_m" => d,
                "min_pair_dist_m" => cfg.min_pair_dist_m,
            },
        );
    }
    sink.finish()
}

pub fn gen_relative_distance(g: &SceneGraph, cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::RelDist, 0);
    let uniq = g.unique_objects();
    let mut cands = Vec::new();
    if uniq.len() >= 5 {
        for target in &uniq {
            let others: Vec<&ObjectInstance> =
                uniq.iter().copied().filter(|o| o.instance_id != target.instance_id).collect();
            let picked: Vec<&ObjectInstance> = others.choose_multiple(&mut rng, 4).copied().collect();
            let dists: Vec<f64> = picked.iter().map(|o| box_box_distance(&target.bbox, &o.bbox)).collect();
            let Some((best, margin)) = winner_with_margin(&dists) else { continue };
            if margin >= cfg.ambiguity_margin_m {
                cands.push((*target, picked, dists, best, margin));
            }
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::RelDist);
    for (target, picked, dists, best, margin) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        let options: Vec<String> = picked.iter().map(|o| o.category.clone()).collect();
        sink.push(
            format!(
                "Measuring from the closest point of each object, which of these objects ({}) is the closest to the {}?",
                options.join(", "),
                target.category
            ),
            options.clone(),
            options[best].clone(),
            vec![],
            meta! {
                "target_id" => target.instance_id,
                "candidate_ids" => picked.iter().map(|o| o.instance_id).collect::<Vec<_>>(),
                "distances_m" => dists,
                "margin_m" => margin,
                "ambiguity_margin_m" => cfg.ambiguity_margin_m,
            },
        );
    }
    sink.finish()
}

/// Index of the strict minimum and its gap to the runner-up.
pub(crate) fn winner_with_margin(values: &[f64]) -> Option<(usize, f64)> {
    if values.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    Some((order[0], values[order[1]] - values[order[0]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Back,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Back => "back",
        }
    }
}

/// Buckets a signed planar angle; `None` for the front cone and bin edges.
pub fn direction_bin(theta_deg: f64, side_min: f64, back_min: f64) -> Option<Side> {
    if theta_deg.abs() >= back_min {
        Some(Side::Back)
    } else if theta_deg > side_min && theta_deg < back_min {
        Some(Side::Left)
    } else if theta_deg < -side_min && theta_deg > -back_min {
        Some(Side::Right)
    } else {
        None
    }
}

pub fn gen_relative_direction(g: &SceneGraph, cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::RelDir, 0);
    let uniq = g.unique_objects();
    let mut cands = Vec::new();
    for a in &uniq {
        for b in &uniq {
            if a.instance_id == b.instance_id {
                continue;
            }
            let forward = b.bbox.center() - a.bbox.center();
            for c in &uniq {
                if c.instance_id == a.instance_id || c.instance_id == b.instance_id {
                    continue;
                }
                let to_query = c.bbox.center() - a.bbox.center();
                if to_query.floor().norm() < cfg.rel_dir_min_planar_dist_m {
                    continue;
                }
                let Ok(theta) = planar_signed_angle(forward, to_query) else { continue };
                if let Some(side) = direction_bin(theta, cfg.rel_dir_side_min_deg, cfg.rel_dir_back_min_deg) {
                    cands.push((*a, *b, *c, theta, side));
                }
            }
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::RelDir);
    for (a, b, c, theta, side) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        sink.push(
            format!(
                "If I am standing by the {} and facing the {}, is the {} to my left, right, or back?",
                a.category, b.category, c.category
            ),
            ["left", "right", "back"].map(String::from).to_vec(),
            side.label().to_string(),
            vec![],
            meta! {
                "standing_id" => a.instance_id,
                "facing_id" => b.instance_id,
                "query_id" => c.instance_id,
                "angle_deg" => theta,
                "side_min_deg" => cfg.rel_dir_side_min_deg,
                "back_min_deg" => cfg.rel_dir_back_min_deg,
            },
        );
    }
    sink.finish()
}

pub fn gen_object_size(g: &SceneGraph, cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::ObjSize, 0);
    let cands: Vec<(&ObjectInstance, f64)> = g
        .unique_objects()
        .into_iter()
        .map(|o| {
            let s = o.bbox.size();
            (o, s.x.max(s.y).max(s.z) * 100.0)
        })
        .filter(|(_, cm)| cm.round() >= 1.0)
        .collect();
    let mut sink = RecordSink::new(g.scene_id(), Task::ObjSize);
    for (o, cm) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        sink.push(
            format!(
                "What is the length of the longest dimension (length, width, or height) of the {}, measured in centimeters?",
                o.category
            ),
            vec![],
            fmt_integer(cm),
            vec![],
            meta! { "instance_id" => o.instance_id, "longest_cm" => cm },
        );
    }
    sink.finish()
}

/// Area of the convex hull of 2D points (monotone chain + shoelace).
pub fn convex_hull_area(points: &[(f64, f64)]) -> f64 {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..hull.len())
        .map(|i| {
            let (x0, y0) = hull[i];
            let (x1, y1) = hull[(i + 1) % hull.len()];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice.abs() * 0.5
}

/// Counter-clockwise hull without collinear points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn gen_room_size(g: &SceneGraph, _cfg: &GenConfig, cloud: Option<&LabeledPointCloud>) -> Vec<QaRecord> {
    let (area, method) = match cloud {
        Some(c) => {
            let floor: Vec<(f64, f64)> = c.points().iter().map(|p| (p.position.x, p.position.y)).collect();
            (convex_hull_area(&floor), "convex_hull")
        }
        None => (g.scene().scene_extents.footprint_area(), "extents"),
    };
    let mut sink = RecordSink::new(g.scene_id(), Task::RoomSize);
    if (area * 10.0).round() >= 1.0 {
        sink.push(
            "What is the size of this room (in square meters)? If multiple rooms are shown, estimate the size of the combined space."
                .to_string(),
            vec![],
            fmt_tenths(area),
            vec![],
            meta! { "area_m2" => area, "method" => method },
        );
    }
    sink.finish()
}

pub fn gen_appearance_order(g: &SceneGraph, cfg: &GenConfig) -> Vec<QaRecord> {
    let mut rng = cfg.rng(g.scene_id(), Task::AppearanceOrder, 0);
    let mut seen: Vec<(&String, u64)> = g.category_first_seen().iter().map(|(c, &f)| (c, f)).collect();
    seen.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)));
    let gap = cfg.appearance_gap_frames;
    let mut cands = Vec::new();
    let n = seen.len();
    // Sorted by frame, so pairwise separation reduces to consecutive gaps.
    for i in 0..n {
        for j in i + 1..n {
            if seen[j].1 < seen[i].1 + gap {
                continue;
            }
            for k in j + 1..n {
                if seen[k].1 < seen[j].1 + gap {
                    continue;
                }
                for l in k + 1..n {
                    if seen[l].1 >= seen[k].1 + gap {
                        cands.push([seen[i], seen[j], seen[k], seen[l]]);
                    }
                }
            }
        }
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::AppearanceOrder);
    for quad in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        let truth: Vec<&str> = quad.iter().map(|(c, _)| c.as_str()).collect();
        let options = order_options(&truth, &mut rng);
        let mut listed = truth.clone();
        listed.sort_unstable();
        sink.push(
            format!(
                "What will be the first-time appearance order of the following categories in the video: {}?",
                listed.join(", ")
            ),
            options,
            truth.join(", "),
            quad.iter().map(|(_, f)| *f).collect(),
            meta! {
                "categories" => truth,
                "first_seen_frames" => quad.iter().map(|(_, f)| *f).collect::<Vec<_>>(),
                "appearance_gap_frames" => gap,
            },
        );
    }
    sink.finish()
}

/// Truth plus three distinct random permutations, shuffled.
fn order_options(truth: &[&str], rng: &mut ChaCha8Rng) -> Vec<String> {
    let truth_text = truth.join(", ");
    let mut options = vec![truth_text.clone()];
    while options.len() < 4 {
        let mut perm = truth.to_vec();
        perm.shuffle(rng);
        let text = perm.join(", ");
        if !options.contains(&text) {
            options.push(text);
        }
    }
    options.shuffle(rng);
    options
}

/// Center of the floor-projected box, used by anchor labeling.
pub(crate) fn planar_center(o: &ObjectInstance) -> Vec3 {
    o.bbox.center().floor()
}
