//! Route-plan questions: trajectory turn classification, anchor labeling,
//! template rendering, and a grid planner used when no trajectories are
//! ingested.

use std::collections::VecDeque;

use rand::Rng;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{planar_signed_angle, GeometryError, Vec3};
use crate::graph::SceneGraph;
use crate::meta;
use crate::metadata::SceneMetadata;
use crate::qa::spatial::{direction_bin, planar_center, Side};
use crate::qa::{cap_candidates, GenConfig, QaRecord, RecordSink, Task};

/// Minimum spacing between consecutive waypoints.
pub const MIN_WAYPOINT_SPACING_M: f64 = 1e-6;
/// A single pivot at least this large reads as "turn back".
pub const TURN_BACK_MIN_DEG: f64 = 150.0;

pub const ACTION_OPTIONS: [&str; 3] = ["turn back", "turn left", "turn right"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("trajectory too short")]
    TooShort,
    #[error("consecutive waypoints {0} and {1} coincide")]
    RepeatedWaypoint(usize, usize),
    #[error("trajectory has {0} qualifying turns")]
    MultiTurn(usize),
    #[error("degenerate heading: {0}")]
    Degenerate(#[from] GeometryError),
    #[error("no object within range of the {0} anchor")]
    NoNearbyObject(&'static str),
    #[error("{0} and {1} anchors resolve to the same object")]
    SharedAnchor(&'static str, &'static str),
    #[error("no path between grid cells")]
    NoPath,
    #[error("grid cell {0:?} is outside the grid or occupied")]
    BlockedCell((usize, usize)),
    #[error("invalid trajectory document: {0}")]
    BadDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    Ingested,
    GridPlanner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Vec3>,
    source: TrajectorySource,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Vec3>, source: TrajectorySource) -> Result<Self, RouteError> {
        if waypoints.len() < 2 {
            return Err(RouteError::TooShort);
        }
        for (i, w) in waypoints.windows(2).enumerate() {
            if w[0].distance(w[1]) <= MIN_WAYPOINT_SPACING_M {
                return Err(RouteError::RepeatedWaypoint(i, i + 1));
            }
        }
        Ok(Trajectory { waypoints, source })
    }

    pub fn waypoints(&self) -> &[Vec3] {
        &self.waypoints
    }

    pub fn source(&self) -> TrajectorySource {
        self.source
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Point at half the polyline length.
    pub fn arclength_midpoint(&self) -> Vec3 {
        let mut remaining = self.length() * 0.5;
        for w in self.waypoints.windows(2) {
            let seg = w[0].distance(w[1]);
            if remaining <= seg {
                return w[0] + (w[1] - w[0]) * (remaining / seg);
            }
            remaining -= seg;
        }
        *self.waypoints.last().expect("nonempty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum RouteKind {
    TurnLeft,
    TurnRight,
    TurnBack,
}

impl RouteKind {
    pub fn action(self) -> &'static str {
        match self {
            RouteKind::TurnLeft => "turn left",
            RouteKind::TurnRight => "turn right",
            RouteKind::TurnBack => "turn back",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TemplateMode {
    Template1,
    Template2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedRoute {
    pub kind: RouteKind,
    /// (start, turn point or arclength midpoint, end).
    pub anchors: [Vec3; 3],
    pub turn_angle_deg: f64,
    pub template_mode: TemplateMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyParams {
    pub turn_deg: f64,
    /// Number of consecutive segments over which heading change accumulates.
    pub window: usize,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams { turn_deg: 30.0, window: 3 }
    }
}

pub fn classify_trajectory(t: &Trajectory) -> Result<ClassifiedRoute, RouteError> {
    classify_trajectory_with(t, &ClassifyParams::default())
}

/// Heading changes at interior waypoints are summed over every run of
/// `window` consecutive segments. A turn is a maximal run of windows whose
/// cumulative change exceeds `turn_deg` with a consistent sign; its angle is
/// the largest such sum and its anchor the sharpest waypoint inside it.
pub fn classify_trajectory_with(t: &Trajectory, p: &ClassifyParams) -> Result<ClassifiedRoute, RouteError> {
    let w = t.waypoints();
    let (start, end) = (w[0], w[w.len() - 1]);
    let segs: Vec<Vec3> = w.windows(2).map(|s| s[1] - s[0]).collect();
    let deltas: Vec<f64> = segs.windows(2).map(|s| planar_signed_angle(s[0], s[1])).collect::<Result<_, _>>()?;
    if segs.len() == 1 {
        planar_signed_angle(segs[0], segs[0])?;
    }
    let span = p.window.saturating_sub(1).max(1);
    let windows: Vec<(usize, f64)> = if deltas.is_empty() {
        Vec::new()
    } else {
        (0..=deltas.len().saturating_sub(span)).map(|j| (j, deltas[j..(j + span).min(deltas.len())].iter().sum())).collect()
    };

    struct Locus {
        first: usize,
        last: usize,
        angle: f64,
    }
    let mut loci: Vec<Locus> = Vec::new();
    let mut prev_sign = 0i8;
    for &(j, sum) in &windows {
        let sign = if sum > p.turn_deg {
            1
        } else if sum < -p.turn_deg {
            -1
        } else {
            0
        };
        if sign != 0 {
            let hi = (j + span).min(deltas.len()) - 1;
            match loci.last_mut() {
                Some(l) if prev_sign == sign => {
                    l.last = hi;
                    if sum.abs() > l.angle.abs() {
                        l.angle = sum;
                    }
                }
                _ => loci.push(Locus { first: j, last: hi, angle: sum }),
            }
        }
        prev_sign = sign;
    }

    match loci.len() {
        0 => {
            let angle = windows.iter().map(|w| w.1).fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
            Ok(ClassifiedRoute {
                kind: RouteKind::TurnBack,
                anchors: [start, t.arclength_midpoint(), end],
                turn_angle_deg: angle,
                template_mode: TemplateMode::Template2,
            })
        }
        1 => {
            let l = &loci[0];
            let sharpest = (l.first..=l.last).max_by(|&a, &b| deltas[a].abs().total_cmp(&deltas[b].abs()).then(b.cmp(&a)));
            let turn_vertex = sharpest.expect("locus is nonempty") + 1;
            Ok(ClassifiedRoute {
                kind: if l.angle > 0.0 { RouteKind::TurnLeft } else { RouteKind::TurnRight },
                anchors: [start, w[turn_vertex], end],
                turn_angle_deg: l.angle,
                template_mode: TemplateMode::Template1,
            })
        }
        n => Err(RouteError::MultiTurn(n)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLabel {
    pub instance_id: u32,
    pub category: String,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLabels {
    pub src: AnchorLabel,
    pub mid: AnchorLabel,
    pub tgt: AnchorLabel,
}

/// Names each anchor after the object whose floor-projected center is nearest.
pub fn label_anchors(route: &ClassifiedRoute, g: &SceneGraph, max_anchor_dist_m: f64) -> Result<AnchorLabels, RouteError> {
    let names = ["src", "mid", "tgt"];
    let mut out = Vec::with_capacity(3);
    for (anchor, name) in route.anchors.iter().zip(names) {
        let p = anchor.floor();
        let nearest = g
            .objects()
            .iter()
            .map(|o| (o, planar_center(o).distance(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.instance_id.cmp(&b.0.instance_id)));
        match nearest {
            Some((o, d)) if d <= max_anchor_dist_m => {
                out.push(AnchorLabel { instance_id: o.instance_id, category: o.category.clone(), distance_m: d })
            }
            _ => return Err(RouteError::NoNearbyObject(name)),
        }
    }
    for i in 0..3 {
        for j in i + 1..3 {
            if out[i].instance_id == out[j].instance_id {
                return Err(RouteError::SharedAnchor(names[i], names[j]));
            }
        }
    }
    let tgt = out.pop().expect("3 labels");
    let mid = out.pop().expect("3 labels");
    let src = out.pop().expect("3 labels");
    Ok(AnchorLabels { src, mid, tgt })
}

pub fn template1(src: &str, mid: &str, tgt: &str) -> String {
    format!(
        "You are a robot beginning at the {src} facing the {mid}. You want to navigate to the {tgt}. \
You will perform the following actions (Note: for each [please fill in], choose either 'turn back,' 'turn left,' or 'turn right.'):  \
1. Go forward until the {mid}. 2. [please fill in] 3. Go forward until the {tgt}. You have reached the final destination."
    )
}

pub fn template2(src: &str, mid: &str, tgt: &str) -> String {
    format!(
        "You are a robot beginning at the {mid} facing the {tgt}. You want to navigate to the {src}. \
You will perform the following actions (Note: for each [please fill in], choose either 'turn back,' 'turn left,' or 'turn right.'):  \
1. [please fill in] 2. Go forward until the {src}. You have reached the final destination."
    )
}

/// Action for a single in-place pivot of `theta_deg`.
pub fn pivot_action(theta_deg: f64, turn_deg: f64) -> Option<&'static str> {
    direction_bin(theta_deg, turn_deg, TURN_BACK_MIN_DEG).map(|s| match s {
        Side::Left => "turn left",
        Side::Right => "turn right",
        Side::Back => "turn back",
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedRoute {
    pub template: TemplateMode,
    pub question: String,
    pub options: Vec<String>,
    pub ground_truth: String,
    pub meta: std::collections::BTreeMap<String, Value>,
}

/// Instantiates the route template. Template 1 answers with the route's own
/// turn; Template 2 (turn-back routes, and sharp turns in alternative mode)
/// re-derives the answer from the pivot the agent actually makes at the
/// midpoint.
pub fn render_route_qa(route: &ClassifiedRoute, labels: &AnchorLabels, cfg: &GenConfig) -> RenderedRoute {
    let [start, mid, end] = route.anchors;
    let alternative = route.kind != RouteKind::TurnBack
        && cfg.route_alternative_mode
        && route.turn_angle_deg.abs() > cfg.route_alt_min_deg;

    // (template slot SRC, slot TGT) positions and labels for Template 2.
    let template2_slots = match route.kind {
        // Begin at the midpoint facing the start, then walk to the end.
        RouteKind::TurnBack => Some(((end, &labels.tgt), (start, &labels.src))),
        // Begin at the turn point facing the end, then walk back to the start.
        _ if alternative => Some(((start, &labels.src), (end, &labels.tgt))),
        _ => None,
    };
    let rederived = template2_slots.and_then(|((dest, _), (facing, _))| {
        planar_signed_angle(facing - mid, dest - mid).ok().map(|theta| (theta, pivot_action(theta, cfg.route_turn_deg)))
    });

    let mut meta = meta! {
        "route_kind" => route.kind,
        "turn_angle_deg" => route.turn_angle_deg,
        "anchors" => route.anchors.map(|a| a.to_array()),
        "anchor_ids" => [labels.src.instance_id, labels.mid.instance_id, labels.tgt.instance_id],
        "turn_deg" => cfg.route_turn_deg,
        "alternative_mode" => alternative,
    };

    let (template, question, answer) = match (template2_slots, rederived) {
        (Some(((_, src_label), (_, tgt_label))), Some((theta, Some(action)))) => {
            meta.insert("pivot_deg".into(), theta.into());
            meta.insert("rederived_action".into(), action.into());
            (TemplateMode::Template2, template2(&src_label.category, &labels.mid.category, &tgt_label.category), action)
        }
        _ => (
            TemplateMode::Template1,
            template1(&labels.src.category, &labels.mid.category, &labels.tgt.category),
            route.kind.action(),
        ),
    };
    meta.insert("template".into(), serde_json::to_value(template).expect("serializable"));
    RenderedRoute {
        template,
        question,
        options: ACTION_OPTIONS.map(String::from).to_vec(),
        ground_truth: answer.to_string(),
        meta,
    }
}

/// Skipped-trajectory tallies from [`gen_route_plan`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteStats {
    pub emitted: usize,
    pub multi_turn: usize,
    pub unlabeled: usize,
    pub degenerate: usize,
}

pub fn gen_route_plan(g: &SceneGraph, cfg: &GenConfig, trajectories: &[Trajectory]) -> (Vec<QaRecord>, RouteStats) {
    let mut rng = cfg.rng(g.scene_id(), Task::RoutePlan, 0);
    let params = ClassifyParams { turn_deg: cfg.route_turn_deg, window: cfg.route_window };
    let mut stats = RouteStats::default();
    let mut cands = Vec::new();
    for t in trajectories {
        let route = match classify_trajectory_with(t, &params) {
            Ok(r) => r,
            Err(RouteError::MultiTurn(_)) => {
                stats.multi_turn += 1;
                continue;
            }
            Err(_) => {
                stats.degenerate += 1;
                continue;
            }
        };
        let Ok(labels) = label_anchors(&route, g, cfg.route_max_anchor_dist_m) else {
            stats.unlabeled += 1;
            continue;
        };
        cands.push((t.source(), render_route_qa(&route, &labels, cfg)));
    }
    let mut sink = RecordSink::new(g.scene_id(), Task::RoutePlan);
    for (source, mut r) in cap_candidates(cands, cfg.max_per_task, &mut rng) {
        r.meta.insert("trajectory_source".into(), serde_json::to_value(source).expect("serializable"));
        sink.push(r.question, r.options, r.ground_truth, vec![], r.meta);
    }
    let records = sink.finish();
    stats.emitted = records.len();
    (records, stats)
}

/// Boolean occupancy over the floor plane; cell `(i, j)` covers
/// `origin + [i, i+1) × [j, j+1)` cells of side `cell_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: Vec3,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: Vec3) -> Self {
        OccupancyGrid { width, height, cell_size, origin, occupied: vec![false; width * height] }
    }

    /// Marks cells whose centers fall inside any object's floor footprint.
    pub fn from_scene(scene: &SceneMetadata, cell_size: f64) -> Self {
        let ext = scene.scene_extents;
        let width = (((ext.max.x - ext.min.x) / cell_size).floor() as usize).max(1);
        let height = (((ext.max.y - ext.min.y) / cell_size).floor() as usize).max(1);
        let mut grid = OccupancyGrid::new(width, height, cell_size, ext.min);
        for j in 0..height {
            for i in 0..width {
                let c = grid.cell_center(i, j);
                let blocked = scene.objects.iter().any(|o| {
                    let probe = Vec3::new(c.x, c.y, o.bbox.center().z);
                    o.bbox.contains(probe)
                });
                grid.set(i, j, blocked);
            }
        }
        grid
    }

    pub fn set(&mut self, i: usize, j: usize, occupied: bool) {
        self.occupied[j * self.width + i] = occupied;
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        i < self.width && j < self.height && !self.occupied[j * self.width + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec3 {
        self.origin + Vec3::new((i as f64 + 0.5) * self.cell_size, (j as f64 + 0.5) * self.cell_size, 0.0)
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height).flat_map(|j| (0..self.width).map(move |i| (i, j))).filter(|&(i, j)| self.is_free(i, j)).collect()
    }

    /// 4-connected breadth-first search, expanding +X, +Y, −X, −Y in that order.
    pub fn shortest_cells(&self, start: (usize, usize), goal: (usize, usize)) -> Result<Vec<(usize, usize)>, RouteError> {
        for c in [start, goal] {
            if !self.is_free(c.0, c.1) {
                return Err(RouteError::BlockedCell(c));
            }
        }
        let idx = |(i, j): (usize, usize)| j * self.width + i;
        let mut parent: Vec<Option<usize>> = vec![None; self.width * self.height];
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::from([start]);
        seen[idx(start)] = true;
        while let Some(cell) = queue.pop_front() {
            if cell == goal {
                break;
            }
            let (i, j) = (cell.0 as isize, cell.1 as isize);
            for (di, dj) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 {
                    continue;
                }
                let next = (ni as usize, nj as usize);
                if self.is_free(next.0, next.1) && !seen[idx(next)] {
                    seen[idx(next)] = true;
                    parent[idx(next)] = Some(idx(cell));
                    queue.push_back(next);
                }
            }
        }
        if !seen[idx(goal)] {
            return Err(RouteError::NoPath);
        }
        let mut path = vec![goal];
        let mut cur = idx(goal);
        while let Some(p) = parent[cur] {
            path.push((p % self.width, p / self.width));
            cur = p;
        }
        path.reverse();
        Ok(path)
    }
}

/// Shortest grid path between two free cells, with collinear runs merged
/// into single segments.
pub fn plan_grid_path(grid: &OccupancyGrid, start: (usize, usize), goal: (usize, usize)) -> Result<Trajectory, RouteError> {
    let cells = grid.shortest_cells(start, goal)?;
    if cells.len() < 2 {
        return Err(RouteError::TooShort);
    }
    let mut kept = vec![cells[0]];
    for k in 1..cells.len() - 1 {
        let (a, b, c) = (cells[k - 1], cells[k], cells[k + 1]);
        let d1 = (b.0 as isize - a.0 as isize, b.1 as isize - a.1 as isize);
        let d2 = (c.0 as isize - b.0 as isize, c.1 as isize - b.1 as isize);
        if d1 != d2 {
            kept.push(b);
        }
    }
    kept.push(cells[cells.len() - 1]);
    Trajectory::new(kept.into_iter().map(|(i, j)| grid.cell_center(i, j)).collect(), TrajectorySource::GridPlanner)
}

/// Plans `cfg.route_attempts` paths between seeded random free cells.
pub fn planned_trajectories(g: &SceneGraph, cfg: &GenConfig) -> Vec<Trajectory> {
    let grid = OccupancyGrid::from_scene(g.scene(), cfg.route_grid_cell_m);
    let free = grid.free_cells();
    if free.len() < 2 {
        return Vec::new();
    }
    let mut rng = cfg.rng(g.scene_id(), Task::RoutePlan, 1);
    let mut out = Vec::new();
    for _ in 0..cfg.route_attempts {
        let a = free[rng.random_range(0..free.len())];
        let b = free[rng.random_range(0..free.len())];
        if let Ok(t) = plan_grid_path(&grid, a, b) {
            out.push(t);
        }
    }
    out
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    scene_id: String,
    waypoints: Vec<Vec<f64>>,
}

/// Parses trajectory JSONL: `{"scene_id": ..., "waypoints": [[x, y, z?], ...]}`
/// per line, z defaulting to 0.
pub fn parse_trajectories_jsonl(text: &str) -> Result<Vec<(String, Trajectory)>, RouteError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: TrajectoryDoc =
            serde_json::from_str(line).map_err(|e| RouteError::BadDocument(format!("line {}: {e}", n + 1)))?;
        let mut pts = Vec::with_capacity(doc.waypoints.len());
        for w in &doc.waypoints {
            let p = match w.as_slice() {
                [x, y] => Vec3::new(*x, *y, 0.0),
                [x, y, z] => Vec3::new(*x, *y, *z),
                _ => return Err(RouteError::BadDocument(format!("line {}: waypoint needs 2 or 3 coordinates", n + 1))),
            };
            if !p.is_finite() {
                return Err(RouteError::BadDocument(format!("line {}: non-finite waypoint", n + 1)));
            }
            pts.push(p);
        }
        let t = Trajectory::new(pts, TrajectorySource::Ingested)
            .map_err(|e| RouteError::BadDocument(format!("line {}: {e}", n + 1)))?;
        out.push((doc.scene_id, t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrientedBox3;
    use crate::synth::SceneBuilder;

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::new(pts.iter().map(|&(x, y)| Vec3::new(x, y, 0.0)).collect(), TrajectorySource::Ingested).unwrap()
    }

    #[test]
    fn right_angle_paths() {
        let left = classify_trajectory(&traj(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)])).unwrap();
        assert_eq!(left.kind, RouteKind::TurnLeft);
        assert!((left.turn_angle_deg - 90.0).abs() < 1e-9);
        assert_eq!(left.anchors[1], Vec3::new(2.0, 0.0, 0.0));
        let right = classify_trajectory(&traj(&[(0.0, 0.0), (2.0, 0.0), (2.0, -2.0)])).unwrap();
        assert_eq!(right.kind, RouteKind::TurnRight);
    }

    #[test]
    fn straight_path_turns_back_at_midpoint() {
        let r = classify_trajectory(&traj(&[(0.0, 0.0), (4.0, 0.0)])).unwrap();
        assert_eq!(r.kind, RouteKind::TurnBack);
        assert_eq!(r.anchors[1], Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(r.template_mode, TemplateMode::Template2);
    }

    #[test]
    fn jitter_merges_into_one_turn() {
        let t = traj(&[(0.0, 0.0), (2.0, 0.0), (2.5, 0.1), (2.9, 0.5), (3.0, 1.0), (3.0, 3.0)]);
        let r = classify_trajectory(&t).unwrap();
        assert_eq!(r.kind, RouteKind::TurnLeft);
    }

    #[test]
    fn two_turns_are_rejected() {
        let t = traj(&[(0.0, 0.0), (3.0, 0.0), (3.0, 3.0), (3.0, 6.0), (6.0, 6.0)]);
        assert_eq!(classify_trajectory(&t).unwrap_err(), RouteError::MultiTurn(2));
        assert_eq!(Trajectory::new(vec![Vec3::ZERO], TrajectorySource::Ingested).unwrap_err(), RouteError::TooShort);
    }

    fn anchor_scene() -> SceneGraph {
        let cube = |x: f64, y: f64| OrientedBox3::axis_aligned(Vec3::new(x, y, 0.4), Vec3::new(0.6, 0.6, 0.8)).unwrap();
        SceneBuilder::new("route")
            .object(1, "table", cube(-0.4, 0.0))
            .object(2, "sofa", cube(2.4, 0.0))
            .object(3, "door", cube(2.0, 2.5))
            .build()
    }

    #[test]
    fn anchors_labeled_by_nearest_object() {
        let g = anchor_scene();
        let r = classify_trajectory(&traj(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)])).unwrap();
        let labels = label_anchors(&r, &g, 2.0).unwrap();
        assert_eq!((labels.src.category.as_str(), labels.mid.category.as_str(), labels.tgt.category.as_str()), ("table", "sofa", "door"));
        assert!((labels.mid.distance_m - 0.4).abs() < 1e-12);

        let far = classify_trajectory(&traj(&[(0.0, 0.0), (2.0, 0.0), (2.0, -5.0)])).unwrap();
        assert_eq!(label_anchors(&far, &g, 2.0).unwrap_err(), RouteError::NoNearbyObject("tgt"));

        let shared = classify_trajectory(&traj(&[(0.0, 0.0), (0.5, 0.0), (0.5, 3.0)])).unwrap();
        assert!(matches!(label_anchors(&shared, &g, 2.0), Err(RouteError::SharedAnchor("src", "mid"))));
    }

    #[test]
    fn template1_for_left_turn() {
        let g = anchor_scene();
        let r = classify_trajectory(&traj(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)])).unwrap();
        let labels = label_anchors(&r, &g, 2.0).unwrap();
        let out = render_route_qa(&r, &labels, &GenConfig::default());
        assert_eq!(out.template, TemplateMode::Template1);
        assert_eq!(out.ground_truth, "turn left");
        assert!(out.question.starts_with("You are a robot beginning at the table facing the sofa."));
        assert!(out.question.contains("choose either 'turn back,' 'turn left,' or 'turn right.'"));
        assert!(out.question.contains("3. Go forward until the door."));
        assert_eq!(out.question.matches("table").count(), 1);
        assert_eq!(out.options, vec!["turn back", "turn left", "turn right"]);
    }

    #[test]
    fn template2_for_turn_back() {
        let cube = |x: f64, y: f64| OrientedBox3::axis_aligned(Vec3::new(x, y, 0.4), Vec3::new(0.6, 0.6, 0.8)).unwrap();
        let g = SceneBuilder::new("tb")
            .object(1, "bed", cube(0.0, 0.5))
            .object(2, "rug", cube(2.0, 0.5))
            .object(3, "tv", cube(4.0, 0.5))
            .build();
        let r = classify_trajectory(&traj(&[(0.0, 0.0), (4.0, 0.0)])).unwrap();
        let labels = label_anchors(&r, &g, 2.0).unwrap();
        let out = render_route_qa(&r, &labels, &GenConfig::default());
        assert_eq!(out.template, TemplateMode::Template2);
        assert_eq!(out.ground_truth, "turn back");
        // Agent starts at the midpoint facing the start (bed) and walks to the end (tv).
        assert!(out.question.starts_with("You are a robot beginning at the rug facing the bed. You want to navigate to the tv."));
    }

    #[test]
    fn alternative_mode_rederives_answer() {
        // 50° right turn at (2, 0).
        let (s, c) = (-50f64).to_radians().sin_cos();
        let end = (2.0 + 2.0 * c, 2.0 * s);
        let t = traj(&[(0.0, 0.0), (2.0, 0.0), end]);
        let r = classify_trajectory(&t).unwrap();
        assert_eq!(r.kind, RouteKind::TurnRight);
        let cube = |x: f64, y: f64| OrientedBox3::axis_aligned(Vec3::new(x, y, 0.4), Vec3::new(0.3, 0.3, 0.8)).unwrap();
        let g = SceneBuilder::new("alt")
            .object(1, "bed", cube(0.0, 0.2))
            .object(2, "rug", cube(2.0, 0.2))
            .object(3, "tv", cube(end.0, end.1 - 0.2))
            .build();
        let labels = label_anchors(&r, &g, 2.0).unwrap();
        let cfg = GenConfig { route_alternative_mode: true, ..Default::default() };
        let out = render_route_qa(&r, &labels, &cfg);
        assert_eq!(out.template, TemplateMode::Template2);
        // Oracle: re-classify the reversed traversal (face the end from the turn point, then head to start).
        let (mid, tgt, src) = (Vec3::new(2.0, 0.0, 0.0), Vec3::new(end.0, end.1, 0.0), Vec3::ZERO);
        let virtual_prev = mid - (tgt - mid);
        let reversed = Trajectory::new(vec![virtual_prev, mid, src], TrajectorySource::Ingested).unwrap();
        let rc = classify_trajectory(&reversed).unwrap();
        assert_eq!(out.ground_truth, rc.kind.action());
        assert_eq!(out.ground_truth, "turn right");
        assert_eq!(out.meta["route_kind"], "TurnRight");
    }

    #[test]
    fn grid_path_corner_to_corner() {
        let grid = OccupancyGrid::new(10, 10, 1.0, Vec3::ZERO);
        let t = plan_grid_path(&grid, (0, 0), (9, 9)).unwrap();
        assert_eq!(t.waypoints().len(), 3);
        let cells = grid.shortest_cells((0, 0), (9, 9)).unwrap();
        // BFS oracle: on an empty grid the shortest 4-connected path has Manhattan length.
        assert_eq!(cells.len() - 1, 18);
        assert_eq!(t.waypoints()[1], grid.cell_center(9, 0));
    }

    #[test]
    fn grid_degenerate_and_walled() {
        let mut grid = OccupancyGrid::new(5, 5, 1.0, Vec3::ZERO);
        assert_eq!(plan_grid_path(&grid, (1, 1), (1, 1)).unwrap_err(), RouteError::TooShort);
        for (i, j) in [(3, 4), (4, 3), (3, 3)] {
            grid.set(i, j, true);
        }
        assert_eq!(plan_grid_path(&grid, (0, 0), (4, 4)).unwrap_err(), RouteError::NoPath);
    }

    #[test]
    fn trajectory_jsonl() {
        let text = "{\"scene_id\": \"a\", \"waypoints\": [[0, 0], [1, 0, 0.5]]}\n\n{\"scene_id\": \"b\", \"waypoints\": [[0,0],[0,0]]}\n";
        assert!(matches!(parse_trajectories_jsonl(text), Err(RouteError::BadDocument(m)) if m.starts_with("line 3")));
        let ok = parse_trajectories_jsonl("{\"scene_id\": \"a\", \"waypoints\": [[0, 0], [1, 0, 0.5]]}").unwrap();
        assert_eq!(ok[0].1.waypoints()[1], Vec3::new(1.0, 0.0, 0.5));
    }
}
