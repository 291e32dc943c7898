//! Collision-free RRT planning in Cartesian or TPSD space, path validation,
//! shortcut smoothing and JSON Lines path files.
//!
//! TPSD configurations are `[tilt, pan, spin, depth]`; distances use a
//! weighted Euclidean metric (defaults: 1 per degree, 0.1 per mm), and step
//! sizes and tolerances are expressed in that metric.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::DeflectSpheresEnv;
use crate::kinematics::{pose_to_ptsd, ptsd_to_pose, Aabb, PtsdState, RcmFrame, Vec3};
use crate::softbody::{closest_point_on_segment, segment_segment_distance};

pub const PATH_FORMAT: &str = "lapkit-path";
pub const PATH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no path found after {iterations} iterations")]
    NotFound { iterations: usize },
    #[error("start configuration is in collision")]
    StartInCollision,
    #[error("invalid plan request: {0}")]
    InvalidRequest(String),
    #[error("corrupt path file at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSpace {
    Cartesian,
    Tpsd,
}

impl PlanSpace {
    pub fn dims(self) -> usize {
        match self {
            PlanSpace::Cartesian => 3,
            PlanSpace::Tpsd => 4,
        }
    }

    pub fn default_weights(self) -> Vec<f64> {
        match self {
            PlanSpace::Cartesian => vec![1.0; 3],
            PlanSpace::Tpsd => vec![1.0, 1.0, 1.0, 0.1],
        }
    }
}

/// Static collision proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Obstacle {
    /// Distance from a segment to the obstacle surface (0 when touching or inside).
    fn segment_clearance(&self, p: &Vec3, q: &Vec3) -> f64 {
        match self {
            Obstacle::Capsule { a, b, radius } => {
                (segment_segment_distance(p, q, &Vec3::from(*a), &Vec3::from(*b)) - radius).max(0.0)
            }
            Obstacle::Box { min, max } => segment_box_distance(p, q, &Aabb { min: *min, max: *max }),
        }
    }
}

/// Distance between a segment and a box, by golden-section search along the
/// segment (the point-to-box distance is convex along a line).
fn segment_box_distance(p: &Vec3, q: &Vec3, aabb: &Aabb) -> f64 {
    let dist = |t: f64| {
        let x = p + (q - p) * t;
        (aabb.clamp(&x) - x).norm()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if dist(m1) <= dist(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    dist(0.5 * (lo + hi)).min(dist(0.0)).min(dist(1.0))
}

/// Geometry and bounds the planner checks configurations against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningWorld {
    /// Configuration-space bounds (3 or 4 entries).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub obstacles: Vec<Obstacle>,
    /// Radius of the end-effector sphere or instrument shaft, mm.
    pub tool_radius: f64,
    /// RCM frame for TPSD planning.
    pub rcm: Option<RcmFrame>,
    /// Length of the shaft checked back from the tip, mm.
    pub shaft_length: f64,
    /// Box the tip must stay inside.
    pub cartesian_box: Option<Aabb>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub space: PlanSpace,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub step_size: f64,
    pub goal_tolerance: f64,
    pub goal_bias: f64,
    pub max_iterations: usize,
    pub world: PlanningWorld,
    pub seed: u64,
    /// Per-axis metric weights; defaults depend on the space.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

pub type Path = Vec<Vec<f64>>;

impl PlanRequest {
    pub fn weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| self.space.default_weights())
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        metric(&self.weights(), a, b)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let d = self.space.dims();
        let bad = |m: &str| Err(PlanError::InvalidRequest(m.to_string()));
        if self.start.len() != d || self.goal.len() != d {
            return bad("start and goal must match the space dimension");
        }
        if self.world.lower.len() != d || self.world.upper.len() != d {
            return bad("bounds must match the space dimension");
        }
        if self.weights().len() != d || self.weights().iter().any(|w| !(*w > 0.0)) {
            return bad("weights must be positive, one per axis");
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return bad("step_size must be > 0");
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return bad("goal_bias must lie in [0, 1]");
        }
        if !(self.goal_tolerance >= 0.0) {
            return bad("goal_tolerance must be >= 0");
        }
        if self.world.lower.iter().zip(&self.world.upper).any(|(l, u)| !(l <= u)) {
            return bad("lower bounds must not exceed upper bounds");
        }
        if !self.world.in_bounds(&self.start) || !self.world.in_bounds(&self.goal) {
            return bad("start and goal must lie within the bounds");
        }
        if self.space == PlanSpace::Tpsd && self.world.rcm.is_none() {
            return bad("tpsd planning requires an rcm frame");
        }
        Ok(())
    }

    /// Whether a configuration is inside the bounds and collision-free.
    pub fn is_free(&self, q: &[f64]) -> bool {
        self.world.is_free(self.space, q)
    }

    /// Whether the straight segment `a → b` is free at the given resolution.
    pub fn motion_free(&self, a: &[f64], b: &[f64], resolution: f64) -> bool {
        let d = self.distance(a, b);
        let n = (d / resolution).ceil().max(1.0) as usize;
        (0..=n).all(|k| self.is_free(&lerp(a, b, k as f64 / n as f64)))
    }
}

impl PlanningWorld {
    pub fn in_bounds(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| v.is_finite() && *v >= *l && *v <= *u)
    }

    /// Tool geometry as a segment for a configuration.
    fn tool_segment(&self, space: PlanSpace, q: &[f64]) -> (Vec3, Vec3) {
        match space {
            PlanSpace::Cartesian => {
                let p = Vec3::new(q[0], q[1], q[2]);
                (p, p)
            }
            PlanSpace::Tpsd => {
                let rcm = self.rcm.unwrap_or_default();
                let ptsd = PtsdState::new(q[0], q[1], q[2], q[3]);
                let pose = ptsd_to_pose(&ptsd, &rcm);
                let back = self.shaft_length.min(ptsd.depth.max(0.0));
                (pose.position - pose.z_axis() * back, pose.position)
            }
        }
    }

    pub fn is_free(&self, space: PlanSpace, q: &[f64]) -> bool {
        if !self.in_bounds(q) {
            return false;
        }
        let (a, tip) = self.tool_segment(space, q);
        if let Some(b) = &self.cartesian_box {
            if !b.contains(&tip) {
                return false;
            }
        }
        self.obstacles
            .iter()
            .all(|o| o.segment_clearance(&a, &tip) > self.tool_radius)
    }
}

fn metric(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(weights)
        .map(|((x, y), w)| (w * (x - y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect()
}

/// Moves from `from` toward `to` by at most `step` in the metric.
fn steer(request: &PlanRequest, from: &[f64], to: &[f64]) -> Vec<f64> {
    let d = request.distance(from, to);
    if d <= request.step_size {
        to.to_vec()
    } else {
        lerp(from, to, request.step_size / d)
    }
}

/// Plans a path with a goal-biased RRT. Deterministic given the seed.
pub fn rrt_plan(request: &PlanRequest) -> Result<Path, PlanError> {
    request.validate()?;
    let resolution = request.step_size / 4.0;
    if !request.is_free(&request.start) {
        return Err(PlanError::StartInCollision);
    }
    if request.distance(&request.start, &request.goal) <= request.goal_tolerance {
        return Ok(vec![request.start.clone()]);
    }
    if !request.is_free(&request.goal) {
        return Err(PlanError::NotFound { iterations: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut nodes: Vec<Vec<f64>> = vec![request.start.clone()];
    let mut parents: Vec<usize> = vec![0];
    let w = &request.world;
    let goal_reachable_from = |nodes: &Vec<Vec<f64>>, idx: usize| {
        request.distance(&nodes[idx], &request.goal) <= request.step_size
            && request.motion_free(&nodes[idx], &request.goal, resolution)
    };
    if goal_reachable_from(&nodes, 0) {
        return Ok(vec![request.start.clone(), request.goal.clone()]);
    }
    for _ in 0..request.max_iterations {
        let sample: Vec<f64> = if rng.gen::<f64>() < request.goal_bias {
            request.goal.clone()
        } else {
            w.lower
                .iter()
                .zip(&w.upper)
                .map(|(l, u)| if l == u { *l } else { rng.gen_range(*l..=*u) })
                .collect()
        };
        let nearest = (0..nodes.len())
            .min_by(|&a, &b| {
                request
                    .distance(&nodes[a], &sample)
                    .total_cmp(&request.distance(&nodes[b], &sample))
            })
            .unwrap_or(0);
        let new = steer(request, &nodes[nearest], &sample);
        if request.distance(&new, &nodes[nearest]) < 1e-12 || !request.motion_free(&nodes[nearest], &new, resolution) {
            continue;
        }
        nodes.push(new);
        parents.push(nearest);
        let idx = nodes.len() - 1;
        if goal_reachable_from(&nodes, idx) {
            let mut path = vec![request.goal.clone()];
            if request.distance(&nodes[idx], &request.goal) > 0.0 {
                path.push(nodes[idx].clone());
            }
            let mut cur = idx;
            while cur != 0 {
                cur = parents[cur];
                path.push(nodes[cur].clone());
            }
            path.reverse();
            return Ok(path);
        }
    }
    Err(PlanError::NotFound {
        iterations: request.max_iterations,
    })
}

/// Checks endpoint, spacing, bounds and dense collision invariants.
pub fn validate_path(path: &[Vec<f64>], request: &PlanRequest, resolution: f64) -> bool {
    let (Some(first), Some(last)) = (path.first(), path.last()) else {
        return false;
    };
    if !(resolution > 0.0) || path.iter().any(|q| q.len() != request.space.dims()) {
        return false;
    }
    if request.distance(first, &request.start) > 1e-9 {
        return false;
    }
    if request.distance(last, &request.goal) > request.goal_tolerance + 1e-9 {
        return false;
    }
    if !request.is_free(first) {
        return false;
    }
    path.windows(2).all(|pair| {
        request.distance(&pair[0], &pair[1]) <= request.step_size + 1e-9
            && request.motion_free(&pair[0], &pair[1], resolution)
    })
}

/// Replaces random sub-paths by straight, evenly spaced interpolations when
/// that is collision-free and uses fewer waypoints.
pub fn shortcut_smooth(path: &[Vec<f64>], request: &PlanRequest, attempts: usize, seed: u64) -> Path {
    let mut out: Path = path.to_vec();
    let resolution = request.step_size / 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..attempts {
        if out.len() < 3 {
            break;
        }
        let i = rng.gen_range(0..out.len() - 2);
        let j = rng.gen_range(i + 2..out.len());
        let d = request.distance(&out[i], &out[j]);
        let segments = (d / request.step_size).ceil().max(1.0) as usize;
        let replacement = segments - 1;
        if replacement >= j - i - 1 || !request.motion_free(&out[i], &out[j], resolution) {
            continue;
        }
        let middle: Vec<Vec<f64>> = (1..segments)
            .map(|k| lerp(&out[i], &out[j], k as f64 / segments as f64))
            .collect();
        let mut next = Vec::with_capacity(out.len());
        next.extend_from_slice(&out[..=i]);
        next.extend(middle);
        next.extend_from_slice(&out[j..]);
        out = next;
    }
    out
}

/// Planning world for the DeflectSpheres geometry: stalks as capsules, the
/// board as a box, the instrument's joint bounds with spin fixed.
pub fn deflect_planning_world(env: &DeflectSpheresEnv, instrument: usize) -> PlanningWorld {
    let inst = &env.instruments()[instrument];
    let mut obstacles: Vec<Obstacle> = env
        .obstacle_capsules()
        .into_iter()
        .map(|(a, b, radius)| Obstacle::Capsule {
            a: a.into(),
            b: b.into(),
            radius,
        })
        .collect();
    obstacles.push(Obstacle::Box {
        min: [-500.0, -500.0, -50.0],
        max: [500.0, 500.0, 0.0],
    });
    let lo = inst.limits.ptsd_low.to_array();
    let hi = inst.limits.ptsd_high.to_array();
    let spin = inst.ptsd.spin;
    PlanningWorld {
        lower: vec![lo[0], lo[1], spin, lo[3]],
        upper: vec![hi[0], hi[1], spin, hi[3]],
        obstacles,
        tool_radius: inst.radius,
        rcm: Some(inst.rcm),
        shaft_length: inst.shaft_length,
        cartesian_box: Some(inst.limits.cartesian_box),
    }
}

/// Request from the instrument's current pose to a point `clearance` mm above
/// the active sphere.
pub fn deflect_plan_request(env: &DeflectSpheresEnv, clearance: f64, seed: u64) -> Result<PlanRequest, PlanError> {
    let i = env.active_instrument();
    let inst = &env.instruments()[i];
    let stalk = env.stalks()[env.active_sphere()];
    let above = stalk.rest_tip + Vec3::new(0.0, 0.0, env.params().sphere_radius + clearance);
    let goal = pose_to_ptsd(&above, &inst.rcm, inst.ptsd.spin).map_err(|e| PlanError::InvalidRequest(e.to_string()))?;
    Ok(PlanRequest {
        space: PlanSpace::Tpsd,
        start: inst.ptsd.to_array().to_vec(),
        goal: goal.to_array().to_vec(),
        step_size: 5.0,
        goal_tolerance: 0.5,
        goal_bias: 0.2,
        max_iterations: 5000,
        world: deflect_planning_world(env, i),
        seed,
        weights: None,
    })
}

/// Tip clearance of a Cartesian point from all obstacles, for diagnostics.
pub fn point_clearance(world: &PlanningWorld, p: &Vec3) -> f64 {
    world
        .obstacles
        .iter()
        .map(|o| match o {
            Obstacle::Capsule { a, b, radius } => {
                (closest_point_on_segment(p, &Vec3::from(*a), &Vec3::from(*b)) - p).norm() - radius
            }
            Obstacle::Box { min, max } => {
                let aabb = Aabb { min: *min, max: *max };
                (aabb.clamp(p) - p).norm()
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// First line of a path file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathHeader {
    pub format: String,
    pub version: u32,
    pub space: PlanSpace,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step_size: f64,
    pub seed: u64,
}

impl PathHeader {
    pub fn for_request(request: &PlanRequest) -> Self {
        Self {
            format: PATH_FORMAT.into(),
            version: PATH_VERSION,
            space: request.space,
            lower: request.world.lower.clone(),
            upper: request.world.upper.clone(),
            step_size: request.step_size,
            seed: request.seed,
        }
    }
}

pub fn write_path(mut out: impl Write, header: &PathHeader, path: &[Vec<f64>]) -> Result<(), PlanError> {
    writeln!(out, "{}", serde_json::to_string(header).map_err(io::Error::other)?)?;
    for q in path {
        writeln!(out, "{}", serde_json::to_string(q).map_err(io::Error::other)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_path(input: impl BufRead) -> Result<(PathHeader, Path), PlanError> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines.next().ok_or(PlanError::Corrupt {
        line: 1,
        reason: "missing header".into(),
    })?;
    let header: PathHeader = serde_json::from_str(&first?).map_err(|e| PlanError::Corrupt {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.format != PATH_FORMAT || header.version != PATH_VERSION {
        return Err(PlanError::Corrupt {
            line: 1,
            reason: format!("unsupported format {} v{}", header.format, header.version),
        });
    }
    let dims = header.space.dims();
    let mut path = Vec::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Vec<f64> = serde_json::from_str(&line).map_err(|e| PlanError::Corrupt {
            line: n + 1,
            reason: e.to_string(),
        })?;
        if q.len() != dims {
            return Err(PlanError::Corrupt {
                line: n + 1,
                reason: format!("expected {dims} values"),
            });
        }
        path.push(q);
    }
    Ok((header, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_cartesian(start: [f64; 3], goal: [f64; 3]) -> PlanRequest {
        PlanRequest {
            space: PlanSpace::Cartesian,
            start: start.to_vec(),
            goal: goal.to_vec(),
            step_size: 5.0,
            goal_tolerance: 0.1,
            goal_bias: 0.1,
            max_iterations: 2000,
            world: PlanningWorld {
                lower: vec![-100.0; 3],
                upper: vec![100.0; 3],
                obstacles: vec![],
                tool_radius: 1.0,
                rcm: None,
                shaft_length: 0.0,
                cartesian_box: None,
            },
            seed: 3,
            weights: None,
        }
    }

    #[test]
    fn start_equals_goal() {
        let r = empty_cartesian([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]);
        assert_eq!(rrt_plan(&r).unwrap(), vec![vec![1.0, 2.0, 3.0]]);
    }

    #[test]
    fn empty_world_finds_path_quickly() {
        let mut r = empty_cartesian([0.0; 3], [40.0, 0.0, 0.0]);
        r.max_iterations = 50;
        r.goal_bias = 1.0;
        let path = rrt_plan(&r).unwrap();
        assert!(validate_path(&path, &r, r.step_size / 4.0));
    }

    #[test]
    fn goal_in_obstacle_not_found() {
        let mut r = empty_cartesian([0.0; 3], [40.0, 0.0, 0.0]);
        r.world.obstacles.push(Obstacle::Box {
            min: [35.0, -5.0, -5.0],
            max: [45.0, 5.0, 5.0],
        });
        r.max_iterations = 200;
        assert!(matches!(rrt_plan(&r), Err(PlanError::NotFound { .. })));
    }

    #[test]
    fn start_in_collision() {
        let mut r = empty_cartesian([0.0; 3], [40.0, 0.0, 0.0]);
        r.world.obstacles.push(Obstacle::Capsule {
            a: [0.0, 0.0, -10.0],
            b: [0.0, 0.0, 10.0],
            radius: 3.0,
        });
        assert!(matches!(rrt_plan(&r), Err(PlanError::StartInCollision)));
    }

    #[test]
    fn wall_detour_validates() {
        let mut r = empty_cartesian([-30.0, 0.0, 0.0], [30.0, 0.0, 0.0]);
        r.world.obstacles.push(Obstacle::Box {
            min: [-2.0, -40.0, -100.0],
            max: [2.0, 40.0, 100.0],
        });
        r.max_iterations = 20_000;
        let path = rrt_plan(&r).unwrap();
        assert!(validate_path(&path, &r, r.step_size / 4.0));
        let crossing = vec![r.start.clone(), r.goal.clone()];
        assert!(!validate_path(&crossing, &r, r.step_size / 4.0));
        let smooth = shortcut_smooth(&path, &r, 100, 1);
        assert!(smooth.len() <= path.len());
        assert!(validate_path(&smooth, &r, r.step_size / 4.0));
    }

    #[test]
    fn single_point_path_valid() {
        let r = empty_cartesian([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]);
        assert!(validate_path(&[vec![1.0, 2.0, 3.0]], &r, 1.0));
    }

    #[test]
    fn straight_path_unchanged() {
        let r = empty_cartesian([0.0; 3], [20.0, 0.0, 0.0]);
        let straight: Path = (0..=4).map(|k| vec![5.0 * k as f64, 0.0, 0.0]).collect();
        assert_eq!(shortcut_smooth(&straight, &r, 100, 7), straight);
    }

    #[test]
    fn zigzag_gets_shorter() {
        let r = empty_cartesian([0.0; 3], [20.0, 0.0, 0.0]);
        let mut zig: Path = vec![vec![0.0, 0.0, 0.0]];
        for k in 1..8 {
            zig.push(vec![2.5 * k as f64, if k % 2 == 1 { 3.0 } else { 0.0 }, 0.0]);
        }
        zig.push(vec![20.0, 0.0, 0.0]);
        assert!(validate_path(&zig, &r, 1.0));
        let smooth = shortcut_smooth(&zig, &r, 100, 1);
        assert!(smooth.len() < zig.len());
        assert!(validate_path(&smooth, &r, 1.0));
    }

    #[test]
    fn path_file_round_trip() {
        let r = empty_cartesian([0.0; 3], [20.0, 0.0, 0.0]);
        let path = rrt_plan(&r).unwrap();
        let mut buf = Vec::new();
        write_path(&mut buf, &PathHeader::for_request(&r), &path).unwrap();
        let (h, back) = read_path(io::Cursor::new(buf)).unwrap();
        assert_eq!(h.space, PlanSpace::Cartesian);
        assert_eq!(back, path);
    }
}
