//! Brute-force re-derivations of generated answers, built on raw scene and
//! frame metadata with local geometry.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use spatialqa::geometry::{OrientedBox3, Pose};
use spatialqa::metadata::{FrameMetadata, SceneMetadata};
use spatialqa::ply::LabeledPointCloud;
use spatialqa::qa::QaRecord;
use spatialqa::route::Trajectory;

pub type V = [f64; 3];

pub fn sub(a: V, b: V) -> V {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
pub fn add(a: V, b: V) -> V {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
pub fn scale(a: V, s: f64) -> V {
    [a[0] * s, a[1] * s, a[2] * s]
}
pub fn dot(a: V, b: V) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
pub fn norm(a: V) -> f64 {
    dot(a, a).sqrt()
}

/// Box as center, unit axes, half extents.
#[derive(Clone, Copy, Debug)]
pub struct Obb {
    pub c: V,
    pub axes: [V; 3],
    pub h: V,
}

impl Obb {
    pub fn from_box(b: &OrientedBox3) -> Obb {
        let q = b.rotation();
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        // Columns of the rotation matrix.
        let ax = [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y + w * z), 2.0 * (x * z - w * y)];
        let ay = [2.0 * (x * y - w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z + w * x)];
        let az = [2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)];
        let s = b.size();
        Obb { c: b.center().to_array(), axes: [ax, ay, az], h: [s.x / 2.0, s.y / 2.0, s.z / 2.0] }
    }

    pub fn point(&self, u: [f64; 3]) -> V {
        let mut p = self.c;
        for k in 0..3 {
            p = add(p, scale(self.axes[k], u[k] * self.h[k]));
        }
        p
    }

    pub fn corners(&self) -> Vec<V> {
        let mut out = Vec::with_capacity(8);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    out.push(self.point([sx, sy, sz]));
                }
            }
        }
        out
    }

    pub fn edges(&self) -> Vec<(V, V)> {
        let mut out = Vec::with_capacity(12);
        for axis in 0..3 {
            let (o1, o2) = ((axis + 1) % 3, (axis + 2) % 3);
            for s1 in [-1.0, 1.0] {
                for s2 in [-1.0, 1.0] {
                    let mut a = [0.0; 3];
                    a[o1] = s1;
                    a[o2] = s2;
                    let mut b = a;
                    a[axis] = -1.0;
                    b[axis] = 1.0;
                    out.push((self.point(a), self.point(b)));
                }
            }
        }
        out
    }

    /// Distance from `p` to the solid box.
    pub fn dist(&self, p: V) -> f64 {
        let d = sub(p, self.c);
        let mut s = 0.0;
        for k in 0..3 {
            let t = dot(d, self.axes[k]);
            let excess = t.abs() - self.h[k];
            if excess > 0.0 {
                s += excess * excess;
            }
        }
        s.sqrt()
    }

    /// Grid samples over the six faces with spacing at most `h`.
    pub fn surface_samples(&self, h: f64) -> Vec<V> {
        let mut out = Vec::new();
        for axis in 0..3 {
            let (o1, o2) = ((axis + 1) % 3, (axis + 2) % 3);
            let n1 = ((2.0 * self.h[o1]) / h).ceil().max(1.0) as usize;
            let n2 = ((2.0 * self.h[o2]) / h).ceil().max(1.0) as usize;
            for side in [-1.0, 1.0] {
                for i in 0..=n1 {
                    for j in 0..=n2 {
                        let mut u = [0.0; 3];
                        u[axis] = side;
                        u[o1] = -1.0 + 2.0 * i as f64 / n1 as f64;
                        u[o2] = -1.0 + 2.0 * j as f64 / n2 as f64;
                        out.push(self.point(u));
                    }
                }
            }
        }
        out
    }
}

fn point_segment_dist(p: V, a: V, b: V) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    norm(sub(p, add(a, scale(ab, t))))
}

/// Segment-segment distance by ternary search over the first segment; the
/// distance from a moving point to a fixed segment is convex.
pub fn segment_dist(a0: V, a1: V, b0: V, b1: V) -> f64 {
    let f = |s: f64| point_segment_dist(add(a0, scale(sub(a1, a0), s)), b0, b1);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.0).min(f(1.0)).min(f(0.5 * (lo + hi)))
}

/// Exact distance between two disjoint boxes from every vertex-solid and
/// edge-edge feature pair.
pub fn disjoint_box_dist(a: &Obb, b: &Obb) -> f64 {
    let mut best = f64::INFINITY;
    for p in a.corners() {
        best = best.min(b.dist(p));
    }
    for p in b.corners() {
        best = best.min(a.dist(p));
    }
    for (a0, a1) in a.edges() {
        for (b0, b1) in b.edges() {
            best = best.min(segment_dist(a0, a1, b0, b1));
        }
    }
    best
}

/// Sampled distance: each box's surface against the other solid. Never
/// below the true distance, and above it by at most `h / sqrt(2)`.
pub fn sampled_box_dist(a: &Obb, b: &Obb, h: f64) -> f64 {
    let ab = a.surface_samples(h).into_iter().map(|p| b.dist(p)).fold(f64::INFINITY, f64::min);
    let ba = b.surface_samples(h).into_iter().map(|p| a.dist(p)).fold(f64::INFINITY, f64::min);
    ab.min(ba)
}

pub struct RawPose {
    pub r: [[f64; 3]; 3],
    pub t: V,
}

impl RawPose {
    pub fn from_pose(p: &Pose) -> RawPose {
        let m = p.to_row_major();
        RawPose { r: [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]], t: [m[3], m[7], m[11]] }
    }

    /// Rᵀ v.
    pub fn to_local(&self, v: V) -> V {
        let r = &self.r;
        [
            r[0][0] * v[0] + r[1][0] * v[1] + r[2][0] * v[2],
            r[0][1] * v[0] + r[1][1] * v[1] + r[2][1] * v[2],
            r[0][2] * v[0] + r[1][2] * v[1] + r[2][2] * v[2],
        ]
    }

    pub fn world_to_camera(&self, p: V) -> V {
        self.to_local(sub(p, self.t))
    }
}

/// Signed angle from `a` to `b` in the floor plane, degrees, CCW positive.
pub fn planar_angle(a: V, b: V) -> f64 {
    (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]).to_degrees()
}

pub fn tenths(x: f64) -> String {
    format!("{:.1}", (x * 10.0).round() / 10.0)
}

/// Whether `x` sits within `eps` of a rounding boundary at 0.1 resolution.
pub fn near_tenths_boundary(x: f64, eps: f64) -> bool {
    let f = (x * 10.0).fract();
    (f - 0.5).abs() * 0.1 < eps
}

pub fn hull_area(points: &[(f64, f64)]) -> f64 {
    // Gift wrapping from the leftmost point.
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let mut hull = vec![pts[0]];
    loop {
        let cur = *hull.last().unwrap();
        let mut next = if pts[0] == cur { pts[1] } else { pts[0] };
        for &p in &pts {
            if p == cur {
                continue;
            }
            let c = cross(cur, next, p);
            if c < 0.0 || (c == 0.0 && d2(cur, p) > d2(cur, next)) {
                next = p;
            }
        }
        if next == hull[0] {
            break;
        }
        hull.push(next);
        assert!(hull.len() <= pts.len(), "gift wrapping did not close");
    }
    let twice: f64 = (0..hull.len()).map(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        a.0 * b.1 - b.0 * a.1
    }).sum();
    twice.abs() / 2.0
}

pub struct SceneOracle<'a> {
    pub scene: &'a SceneMetadata,
    pub frames: &'a FrameMetadata,
    pub cloud: Option<&'a LabeledPointCloud>,
    pub min_area: f64,
    boxes: BTreeMap<u32, Obb>,
    by_category: BTreeMap<String, Vec<u32>>,
}

fn caps<'t>(re: &str, text: &'t str) -> Result<Vec<&'t str>, String> {
    let re = Regex::new(re).unwrap();
    let c = re.captures(text).ok_or_else(|| format!("question does not match /{}/: {text}", re.as_str()))?;
    Ok((1..c.len()).map(|i| c.get(i).unwrap().as_str()).collect())
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

impl<'a> SceneOracle<'a> {
    pub fn new(scene: &'a SceneMetadata, frames: &'a FrameMetadata, cloud: Option<&'a LabeledPointCloud>, min_area: f64) -> Self {
        let boxes = scene.objects.iter().map(|o| (o.instance_id, Obb::from_box(&o.bbox))).collect();
        let mut by_category: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for o in &scene.objects {
            by_category.entry(o.category.clone()).or_default().push(o.instance_id);
        }
        SceneOracle { scene, frames, cloud, min_area, boxes, by_category }
    }

    fn unique(&self, category: &str) -> Result<u32, String> {
        match self.by_category.get(category).map(|v| v.as_slice()) {
            Some([id]) => Ok(*id),
            Some(ids) => Err(format!("category '{category}' has {} instances", ids.len())),
            None => Err(format!("category '{category}' not in scene")),
        }
    }

    fn visible(&self, frame_id: u64) -> BTreeSet<u32> {
        let f = self.frames.frames.iter().find(|f| f.frame_id == frame_id).expect("frame exists");
        f.visible_objects
            .iter()
            .filter(|v| (v.bbox_2d[2] - v.bbox_2d[0]) * (v.bbox_2d[3] - v.bbox_2d[1]) >= self.min_area)
            .map(|v| v.instance_id)
            .collect()
    }

    fn pose(&self, frame_id: u64) -> RawPose {
        RawPose::from_pose(&self.frames.frames.iter().find(|f| f.frame_id == frame_id).expect("frame exists").pose)
    }

    /// The `n`-frame sample, first and last included.
    pub fn sequence(&self, n: usize) -> Vec<u64> {
        let total = self.frames.frames.len();
        if n >= total {
            return self.frames.frames.iter().map(|f| f.frame_id).collect();
        }
        (0..n)
            .map(|k| {
                let x = k as f64 * (total - 1) as f64 / (n - 1) as f64;
                self.frames.frames[x.round() as usize].frame_id
            })
            .collect()
    }

    fn category_first_seen(&self) -> BTreeMap<String, u64> {
        let cat: BTreeMap<u32, &str> = self.scene.objects.iter().map(|o| (o.instance_id, o.category.as_str())).collect();
        let mut out: BTreeMap<String, u64> = BTreeMap::new();
        for f in &self.frames.frames {
            for id in self.visible(f.frame_id) {
                let e = out.entry(cat[&id].to_string()).or_insert(f.frame_id);
                *e = (*e).min(f.frame_id);
            }
        }
        out
    }

    fn frame_ref(&self, k: usize, seq: &[u64]) -> Result<u64, String> {
        check((1..=seq.len()).contains(&k), || format!("frame index {k} outside 1..={}", seq.len()))?;
        Ok(seq[k - 1])
    }

    fn na_match(&self, r: &QaRecord, value: f64, boundary_hits: &mut usize) -> Result<(), String> {
        if tenths(value) == r.ground_truth {
            return Ok(());
        }
        if near_tenths_boundary(value, 1e-9) {
            *boundary_hits += 1;
            let gt: f64 = r.ground_truth.parse().unwrap();
            return check((gt - value).abs() <= 0.05 + 1e-9, || format!("{}: oracle {value} vs {}", r.qid, r.ground_truth));
        }
        Err(format!("{}: oracle {value} ({}) vs emitted {}", r.qid, tenths(value), r.ground_truth))
    }

    /// Re-derives one record. `boundary_hits` counts NA answers whose oracle
    /// value lies on a rounding boundary.
    pub fn verify(&self, r: &QaRecord, seq_len: usize, boundary_hits: &mut usize) -> Result<(), String> {
        use spatialqa::qa::Task::*;
        let q = r.question.as_str();
        let seq = self.sequence(seq_len);
        let n = seq.len();
        match r.task {
            ObjCount => {
                let c = caps(r"^How many (.+)\(s\) are in this room\?$", q)?;
                let count = self.scene.objects.iter().filter(|o| o.category == c[0]).count();
                check(count >= 2, || format!("{}: count {count} < 2", r.qid))?;
                check(count.to_string() == r.ground_truth, || format!("{}: count {count} vs {}", r.qid, r.ground_truth))
            }
            AbsDist => {
                let c = caps(r"between the (.+) and the (.+) \(in meters\)\?$", q)?;
                let (a, b) = (self.unique(c[0])?, self.unique(c[1])?);
                let d = disjoint_box_dist(&self.boxes[&a], &self.boxes[&b]);
                check(d >= 0.1 - 1e-9, || format!("{}: pair distance {d} under threshold", r.qid))?;
                self.na_match(r, d, boundary_hits)
            }
            RelDist => {
                let c = caps(r"which of these objects \((.+)\) is the closest to the (.+)\?$", q)?;
                let target = self.boxes[&self.unique(c[1])?];
                check(c[0].split(", ").collect::<Vec<_>>() == r.options, || format!("{}: options differ from question", r.qid))?;
                let dists: Vec<f64> = r.options.iter().map(|o| Ok(disjoint_box_dist(&target, &self.boxes[&self.unique(o)?]))).collect::<Result<_, String>>()?;
                let best = (0..4).min_by(|&i, &j| dists[i].partial_cmp(&dists[j]).unwrap()).unwrap();
                let runner = (0..4).filter(|&i| i != best).map(|i| dists[i]).fold(f64::INFINITY, f64::min);
                check(runner - dists[best] >= 0.15 - 1e-9, || format!("{}: margin {} too small", r.qid, runner - dists[best]))?;
                check(r.options[best] == r.ground_truth, || format!("{}: closest {} vs {}", r.qid, r.options[best], r.ground_truth))
            }
            RelDir => {
                let c = caps(r"^If I am standing by the (.+) and facing the (.+), is the (.+) to my left, right, or back\?$", q)?;
                let [a, b, cq] = [c[0], c[1], c[2]].map(|x| self.unique(x).map(|id| self.boxes[&id].c));
                let (a, b, cq) = (a?, b?, cq?);
                let (fwd, to) = (sub(b, a), sub(cq, a));
                check(to[0].hypot(to[1]) >= 0.3, || format!("{}: query too close", r.qid))?;
                let theta = planar_angle(fwd, to);
                let side = if theta.abs() >= 150.0 {
                    "back"
                } else if theta > 30.0 {
                    "left"
                } else if theta < -30.0 {
                    "right"
                } else {
                    return Err(format!("{}: angle {theta} is in the front cone", r.qid));
                };
                check(side == r.ground_truth, || format!("{}: {side} vs {}", r.qid, r.ground_truth))
            }
            ObjSize => {
                let c = caps(r"dimension \(length, width, or height\) of the (.+), measured in centimeters\?$", q)?;
                let b = self.boxes[&self.unique(c[0])?];
                let cm = 200.0 * b.h[0].max(b.h[1]).max(b.h[2]);
                check(format!("{}", cm.round() as i64) == r.ground_truth, || format!("{}: {cm} cm vs {}", r.qid, r.ground_truth))
            }
            RoomSize => {
                let area = match self.cloud {
                    Some(c) => hull_area(&c.points().iter().map(|p| (p.position.x, p.position.y)).collect::<Vec<_>>()),
                    None => {
                        let e = &self.scene.scene_extents;
                        (e.max.x - e.min.x) * (e.max.y - e.min.y)
                    }
                };
                self.na_match(r, area, boundary_hits)
            }
            AppearanceOrder => {
                let c = caps(r"categories in the video: (.+)\?$", q)?;
                let cats: Vec<&str> = c[0].split(", ").collect();
                check(cats.len() == 4, || format!("{}: {} categories", r.qid, cats.len()))?;
                let first = self.category_first_seen();
                let f: Vec<u64> = cats.iter().map(|c| first.get(*c).copied().ok_or_else(|| format!("{}: {c} never seen", r.qid))).collect::<Result<_, _>>()?;
                let mut increasing = Vec::new();
                for p in permutations(4) {
                    if p.windows(2).all(|w| f[w[0]] < f[w[1]]) {
                        increasing.push(p);
                    }
                }
                check(increasing.len() == 1, || format!("{}: {} increasing orders", r.qid, increasing.len()))?;
                for i in 0..4 {
                    for j in i + 1..4 {
                        check(f[i].abs_diff(f[j]) >= 5, || format!("{}: first-seen gap {} < 5", r.qid, f[i].abs_diff(f[j])))?;
                    }
                }
                let truth: Vec<&str> = increasing[0].iter().map(|&i| cats[i]).collect();
                check(truth.join(", ") == r.ground_truth, || format!("{}: {} vs {}", r.qid, truth.join(", "), r.ground_truth))
            }
            RoutePlan => Err("route records are verified against their trajectories".into()),
            CamObjAbsDist => {
                let c = caps(r"^In frame (\d+) of (\d+), approximately how far \(in meters\) is the camera from the closest point of the (.+)\?$", q)?;
                check(c[1].parse::<usize>().unwrap() == n, || format!("{}: sequence length", r.qid))?;
                let fid = self.frame_ref(c[0].parse().unwrap(), &seq)?;
                check(r.frame_refs == [fid], || format!("{}: frame refs", r.qid))?;
                let id = self.unique(c[2])?;
                check(self.visible(fid).contains(&id), || format!("{}: object not visible", r.qid))?;
                let d = self.boxes[&id].dist(self.pose(fid).t);
                self.na_match(r, d, boundary_hits)
            }
            CamObjRelDist => {
                let c = caps(r"^In frame (\d+) of (\d+), which of these objects \((.+)\) is the closest to the camera\?$", q)?;
                check(c[1].parse::<usize>().unwrap() == n, || format!("{}: sequence length", r.qid))?;
                let fid = self.frame_ref(c[0].parse().unwrap(), &seq)?;
                let cam = self.pose(fid).t;
                let vis = self.visible(fid);
                let mut dists = Vec::new();
                for o in &r.options {
                    let id = self.unique(o)?;
                    check(vis.contains(&id), || format!("{}: {o} not visible", r.qid))?;
                    dists.push(self.boxes[&id].dist(cam));
                }
                let best = (0..4).min_by(|&i, &j| dists[i].partial_cmp(&dists[j]).unwrap()).unwrap();
                let runner = (0..4).filter(|&i| i != best).map(|i| dists[i]).fold(f64::INFINITY, f64::min);
                check(runner - dists[best] >= 0.15 - 1e-9, || format!("{}: margin {}", r.qid, runner - dists[best]))?;
                check(r.options[best] == r.ground_truth, || format!("{}: {} vs {}", r.qid, r.options[best], r.ground_truth))
            }
            ObjObjRelPos => {
                let c = caps(r"^In frame (\d+) of (\d+), from the camera's viewpoint, is the (.+?) (nearer or farther than|to the left or to the right of|above \(up\) or below \(down\)) the (.+)\?$", q)?;
                check(c[1].parse::<usize>().unwrap() == n, || format!("{}: sequence length", r.qid))?;
                let fid = self.frame_ref(c[0].parse().unwrap(), &seq)?;
                let (a, b) = (self.unique(c[2])?, self.unique(c[4])?);
                let vis = self.visible(fid);
                check(vis.contains(&a) && vis.contains(&b), || format!("{}: pair not visible", r.qid))?;
                let (axis, labels) = match c[3] {
                    "nearer or farther than" => (2, ["near", "far"]),
                    "to the left or to the right of" => (0, ["left", "right"]),
                    _ => (1, ["up", "down"]),
                };
                let pose = self.pose(fid);
                let span = |id: u32| {
                    self.boxes[&id].corners().into_iter().map(|p| pose.world_to_camera(p)[axis]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
                };
                let ((alo, ahi), (blo, bhi)) = (span(a), span(b));
                let label = if ahi + 0.15 <= blo {
                    labels[0]
                } else if bhi + 0.15 <= alo {
                    labels[1]
                } else {
                    return Err(format!("{}: intervals not separated", r.qid));
                };
                check(label == r.ground_truth, || format!("{}: {label} vs {}", r.qid, r.ground_truth))
            }
            CamDisplacement => {
                let c = caps(r"between frame (\d+) and frame (\d+) of (\d+)\?$", q)?;
                check(c[2].parse::<usize>().unwrap() == n, || format!("{}: sequence length", r.qid))?;
                let (fi, fj) = (self.frame_ref(c[0].parse().unwrap(), &seq)?, self.frame_ref(c[1].parse().unwrap(), &seq)?);
                let d = norm(sub(self.pose(fj).t, self.pose(fi).t));
                check(d >= 0.5, || format!("{}: displacement {d} under threshold", r.qid))?;
                self.na_match(r, d, boundary_hits)
            }
            CamMoveDir => {
                let c = caps(r"^Between frame (\d+) and frame (\d+) of (\d+), ", q)?;
                check(c[2].parse::<usize>().unwrap() == n, || format!("{}: sequence length", r.qid))?;
                let (fi, fj) = (self.frame_ref(c[0].parse().unwrap(), &seq)?, self.frame_ref(c[1].parse().unwrap(), &seq)?);
                let start = self.pose(fi);
                let local = start.to_local(sub(self.pose(fj).t, start.t));
                let (x, z) = (local[0], local[2]);
                check(x.hypot(z) >= 0.5, || format!("{}: planar displacement too small", r.qid))?;
                let label = if z.abs() >= 1.5 * x.abs() {
                    if z > 0.0 { "Forward" } else { "Backward" }
                } else if x.abs() >= 1.5 * z.abs() {
                    if x > 0.0 { "Right" } else { "Left" }
                } else {
                    return Err(format!("{}: no dominant axis", r.qid));
                };
                check(label == r.ground_truth, || format!("{}: {label} vs {}", r.qid, r.ground_truth))
            }
        }
    }

    fn nearest_object(&self, p: V) -> (u32, f64) {
        let mut best = (u32::MAX, f64::INFINITY);
        for (&id, b) in &self.boxes {
            let d = (b.c[0] - p[0]).hypot(b.c[1] - p[1]);
            if d < best.1 {
                best = (id, d);
            }
        }
        best
    }

    fn category(&self, id: u32) -> &str {
        &self.scene.objects.iter().find(|o| o.instance_id == id).unwrap().category
    }

    /// Checks a route record against the trajectory it came from.
    pub fn verify_route(&self, r: &QaRecord, t: &Trajectory, alternative: bool) -> Result<(), String> {
        let w: Vec<V> = t.waypoints().iter().map(|p| p.to_array()).collect();
        let kind = classify_route(&w)?;
        let anchors = [w[0], kind.anchor, w[w.len() - 1]];
        let mut ids = [0u32; 3];
        for (k, a) in anchors.iter().enumerate() {
            let (id, d) = self.nearest_object(*a);
            check(d <= 2.0, || format!("{}: anchor {k} is {d} m from any object", r.qid))?;
            ids[k] = id;
        }
        check(ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2], || format!("{}: shared anchor", r.qid))?;
        let [src, mid, tgt] = ids.map(|id| self.category(id).to_string());
        let pivot = |facing: V, dest: V| {
            let theta = planar_angle(sub(facing, anchors[1]), sub(dest, anchors[1]));
            if theta.abs() >= 150.0 {
                Some("turn back")
            } else if theta > 30.0 {
                Some("turn left")
            } else if theta < -30.0 {
                Some("turn right")
            } else {
                None
            }
        };
        let template2 = match kind.action {
            "turn back" => pivot(anchors[0], anchors[2]).map(|a| (a, &mid, &src, &tgt)),
            _ if alternative && kind.angle.abs() > 45.0 => pivot(anchors[2], anchors[0]).map(|a| (a, &mid, &tgt, &src)),
            _ => None,
        };
        let steps = match template2 {
            Some((_, _, _, dest)) => format!("1. [please fill in] 2. Go forward until the {dest}. You have reached the final destination."),
            None => format!("1. Go forward until the {mid}. 2. [please fill in] 3. Go forward until the {tgt}. You have reached the final destination."),
        };
        let (answer, begin, facing, dest) = template2.unwrap_or((kind.action, &src, &mid, &tgt));
        let clause = format!("beginning at the {begin} facing the {facing}. You want to navigate to the {dest}.");
        check(r.question.contains(&clause), || format!("{}: question lacks '{clause}': {}", r.qid, r.question))?;
        check(r.question.ends_with(&steps), || format!("{}: question lacks '{steps}': {}", r.qid, r.question))?;
        check(r.question.contains("choose either 'turn back,' 'turn left,' or 'turn right.'"), || format!("{}: missing action clause", r.qid))?;
        check(answer == r.ground_truth, || format!("{}: {answer} vs {}", r.qid, r.ground_truth))
    }
}

pub struct RouteOracle {
    pub action: &'static str,
    pub anchor: V,
    pub angle: f64,
}

/// Windowed heading-change classification over pairs of consecutive turns.
pub fn classify_route(w: &[V]) -> Result<RouteOracle, String> {
    if w.len() < 2 {
        return Err("too short".into());
    }
    let segs: Vec<V> = w.windows(2).map(|p| sub(p[1], p[0])).collect();
    if segs.iter().any(|s| s[0].hypot(s[1]) < 1e-9) {
        return Err("degenerate segment".into());
    }
    let turns: Vec<f64> = segs.windows(2).map(|s| planar_angle(s[0], s[1])).collect();
    let sums: Vec<f64> = match turns.len() {
        0 => vec![],
        1 => vec![turns[0]],
        n => (0..n - 1).map(|j| turns[j] + turns[j + 1]).collect(),
    };
    let sign = |s: f64| if s > 30.0 { 1 } else if s < -30.0 { -1 } else { 0 };
    // Runs of equal nonzero sign: (first window, last window, signed peak).
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (j, &s) in sums.iter().enumerate() {
        let sg = sign(s);
        if sg == 0 {
            continue;
        }
        match runs.last_mut() {
            Some(run) if run.1 + 1 == j && sign(sums[run.1]) == sg => {
                run.1 = j;
                if s.abs() > run.2.abs() {
                    run.2 = s;
                }
            }
            _ => runs.push((j, j, s)),
        }
    }
    match runs.as_slice() {
        [] => {
            let total: f64 = segs.iter().map(|s| norm(*s)).sum();
            let mut left = total / 2.0;
            let mut mid = w[0];
            for (k, s) in segs.iter().enumerate() {
                let len = norm(*s);
                if left <= len {
                    mid = add(w[k], scale(*s, left / len));
                    break;
                }
                left -= len;
            }
            Ok(RouteOracle { action: "turn back", anchor: mid, angle: 0.0 })
        }
        [(a, b, peak)] => {
            let last_turn = if turns.len() == 1 { 0 } else { b + 1 };
            let mut sharpest = *a;
            for k in *a..=last_turn {
                if turns[k].abs() > turns[sharpest].abs() {
                    sharpest = k;
                }
            }
            Ok(RouteOracle { action: if *peak > 0.0 { "turn left" } else { "turn right" }, anchor: w[sharpest + 1], angle: *peak })
        }
        many => Err(format!("{} turns", many.len())),
    }
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}
