//! Cut the highlighted rope spanning two walls with an electrocautery hook.

use std::any::Any;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{chain_sample_indices, require, EnvParams, Instrument};
use crate::envcore::{EnvConfig, EnvError, Evaluation, Task};
use crate::kinematics::{InstrumentLimits, LimitFlags, PtsdState, RcmFrame, Vec3};
use crate::sensors::{CameraModel, CameraSettings, Scene, Shape};
use crate::softbody::{closest_point_on_segment, segment_segment_distance, SoftWorld, ToolCapsule};

pub const FEATURES: &[&str] = &[
    "distance_to_active_rope",
    "delta_distance_to_active_rope",
    "cut_active_rope",
    "cut_inactive_rope",
    "state_limit_violation",
    "workspace_violation",
    "failed_task",
    "successful_task",
];

const HOOK_RADIUS: f64 = 1.5;
/// Length of the hook section that burns through ropes, mm.
const HOOK_LENGTH: f64 = 8.0;
const SETTLE_FRAMES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RopeCuttingParams {
    pub num_ropes: usize,
    pub ropes_to_cut: usize,
    /// Total mass of one rope, g.
    pub rope_mass: f64,
    pub rope_stiffness: f64,
    pub rope_radius: f64,
    pub particles_per_rope: usize,
    /// Minimum distance between any two ropes, mm.
    pub min_rope_distance: f64,
    /// Wall extent along x, mm.
    pub wall_width: f64,
    /// Wall extent along z above `wall_bottom`, mm.
    pub wall_height: f64,
    pub wall_bottom: f64,
    /// Distance between the two walls along y, mm.
    pub wall_separation: f64,
    pub points_per_rope: usize,
    pub camera_eye: [f64; 3],
    pub camera_target: [f64; 3],
}

impl Default for RopeCuttingParams {
    fn default() -> Self {
        Self {
            num_ropes: 5,
            ropes_to_cut: 1,
            rope_mass: 5.0,
            rope_stiffness: 0.9,
            rope_radius: 1.0,
            particles_per_rope: 12,
            min_rope_distance: 5.0,
            wall_width: 100.0,
            wall_height: 60.0,
            wall_bottom: 10.0,
            wall_separation: 100.0,
            points_per_rope: 3,
            camera_eye: [-200.0, -150.0, 200.0],
            camera_target: [0.0, 0.0, 40.0],
        }
    }
}

impl RopeCuttingParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        require(self.ropes_to_cut >= 1, "rope_cutting.ropes_to_cut must be >= 1")?;
        require(
            self.num_ropes >= self.ropes_to_cut,
            "rope_cutting.num_ropes must be >= ropes_to_cut",
        )?;
        require(self.rope_mass > 0.0, "rope_cutting.rope_mass must be > 0")?;
        require(
            self.rope_stiffness > 0.0 && self.rope_stiffness <= 1.0,
            "rope_cutting.rope_stiffness must lie in (0, 1]",
        )?;
        require(self.rope_radius > 0.0, "rope_cutting.rope_radius must be > 0")?;
        require(
            self.particles_per_rope >= 3,
            "rope_cutting.particles_per_rope must be >= 3",
        )?;
        require(
            self.points_per_rope >= 1 && self.points_per_rope <= self.particles_per_rope,
            "rope_cutting.points_per_rope must lie in 1..=particles_per_rope",
        )?;
        require(
            self.min_rope_distance >= 0.0,
            "rope_cutting.min_rope_distance must be >= 0",
        )?;
        require(
            self.wall_width > 10.0 && self.wall_height > 10.0 && self.wall_separation > 0.0,
            "rope_cutting wall dimensions must exceed 10 mm",
        )
    }
}

#[derive(Debug, Clone)]
pub struct RopeCuttingEnv {
    params: RopeCuttingParams,
    limits: InstrumentLimits,
    camera_settings: CameraSettings,
    resolution: u32,
    substeps: usize,
    iterations: usize,
    delta_t: f64,
    world: SoftWorld,
    hook: Instrument,
    active: bool,
    ropes: Vec<usize>,
    rope_cut: Vec<bool>,
    pending_cuts: Vec<usize>,
    active_rope: usize,
    successes: usize,
    flags: LimitFlags,
    previous_distance: f64,
}

impl RopeCuttingEnv {
    pub fn new(config: &EnvConfig) -> Result<Self, EnvError> {
        let EnvParams::RopeCutting(params) = &config.params else {
            return Err(EnvError::InvalidConfig("rope_cutting requires its params".into()));
        };
        let limits = *config
            .limits
            .tpsd()
            .ok_or_else(|| EnvError::InvalidConfig("rope_cutting requires tpsd limits".into()))?;
        let hook = Instrument {
            rcm: RcmFrame {
                position: [0.0, 0.0, 180.0],
                orientation: [180.0, 0.0, 0.0],
            },
            ptsd: PtsdState::new(0.0, 0.0, 0.0, 100.0),
            limits,
            radius: HOOK_RADIUS,
            shaft_length: 60.0,
        };
        Ok(Self {
            params: params.clone(),
            limits,
            camera_settings: config.camera,
            resolution: config.image_resolution,
            substeps: config.solver.substeps,
            iterations: config.solver.iterations,
            delta_t: config.sim.delta_t_s,
            world: SoftWorld::new(),
            hook,
            active: false,
            ropes: Vec::new(),
            rope_cut: Vec::new(),
            pending_cuts: Vec::new(),
            active_rope: 0,
            successes: 0,
            flags: LimitFlags::default(),
            previous_distance: 0.0,
        })
    }

    pub fn world(&self) -> &SoftWorld {
        &self.world
    }

    pub fn hook(&self) -> &Instrument {
        &self.hook
    }

    pub fn active_rope(&self) -> usize {
        self.active_rope
    }

    pub fn is_cut(&self, rope: usize) -> bool {
        self.rope_cut[rope]
    }

    pub fn successes(&self) -> usize {
        self.successes
    }

    /// Severs `rope` at its middle regardless of the hook, as if cut this step.
    pub fn force_cut_rope(&mut self, rope: usize) -> Result<(), EnvError> {
        let body = *self
            .ropes
            .get(rope)
            .ok_or_else(|| EnvError::InvalidAction(format!("no rope {rope}")))?;
        let range = self.world.bodies[body].range.clone();
        let mid = range.start + range.len() / 2 - 1;
        let id = self
            .world
            .distance_constraints
            .iter()
            .find(|c| c.i == mid && c.j == mid + 1)
            .map(|c| c.id);
        if let Some(id) = id {
            self.world.remove_distance_constraint(id);
        }
        self.mark_cut(rope);
        Ok(())
    }

    fn mark_cut(&mut self, rope: usize) {
        if !self.rope_cut[rope] {
            self.rope_cut[rope] = true;
            self.pending_cuts.push(rope);
        }
    }

    fn cutting_capsule(&self) -> ToolCapsule {
        let pose = self.hook.pose();
        let mut c = ToolCapsule::new(
            pose.position - pose.z_axis() * HOOK_LENGTH,
            pose.position,
            HOOK_RADIUS + self.params.rope_radius + 1.0,
        );
        c.active = self.active;
        c
    }

    fn rope_particles(&self, rope: usize) -> std::ops::Range<usize> {
        self.world.bodies[self.ropes[rope]].range.clone()
    }

    fn distance_to_rope(&self, rope: usize) -> f64 {
        let tip = self.hook.tip();
        let range = self.rope_particles(rope);
        let ps = &self.world.particles;
        (range.start..range.end - 1)
            .map(|i| (closest_point_on_segment(&tip, &ps[i].position, &ps[i + 1].position) - tip).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn sample_ropes(&self, rng: &mut ChaCha8Rng) -> Result<Vec<(Vec3, Vec3)>, EnvError> {
        let p = &self.params;
        let half_w = p.wall_width / 2.0 - 5.0;
        let (z_lo, z_hi) = (p.wall_bottom + 5.0, p.wall_bottom + p.wall_height - 5.0);
        let y = p.wall_separation / 2.0;
        let mut ends: Vec<(Vec3, Vec3)> = Vec::with_capacity(p.num_ropes);
        let mut attempts = 0;
        while ends.len() < p.num_ropes {
            let a = Vec3::new(rng.gen_range(-half_w..=half_w), -y, rng.gen_range(z_lo..=z_hi));
            let b = Vec3::new(rng.gen_range(-half_w..=half_w), y, rng.gen_range(z_lo..=z_hi));
            if ends
                .iter()
                .all(|(c, d)| segment_segment_distance(&a, &b, c, d) >= p.min_rope_distance)
            {
                ends.push((a, b));
            }
            attempts += 1;
            if attempts > 10_000 {
                return Err(EnvError::InvalidConfig(
                    "rope_cutting: ropes do not fit at the requested minimum distance".into(),
                ));
            }
        }
        Ok(ends)
    }

    fn choose_active(&mut self, rng: &mut ChaCha8Rng) {
        let uncut: Vec<usize> = (0..self.ropes.len()).filter(|&k| !self.rope_cut[k]).collect();
        if !uncut.is_empty() {
            self.active_rope = uncut[rng.gen_range(0..uncut.len())];
        }
        self.previous_distance = self.distance_to_rope(self.active_rope);
    }
}

impl Task for RopeCuttingEnv {
    fn action_dim(&self) -> usize {
        5
    }

    fn state_dim(&self) -> usize {
        12 + 3 * self.params.points_per_rope * (self.params.num_ropes + 1)
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<(), EnvError> {
        let ends = self.sample_ropes(rng)?;
        let p = &self.params;
        let n = p.particles_per_rope;
        let mut world = SoftWorld::new();
        world.damping = 4.0;
        let mut ropes = Vec::with_capacity(ends.len());
        for (k, (a, b)) in ends.iter().enumerate() {
            let points: Vec<Vec3> = (0..n).map(|m| a + (b - a) * (m as f64 / (n - 1) as f64)).collect();
            let body = world.add_rope(
                &format!("rope {k}"),
                &points,
                p.rope_mass / n as f64,
                p.rope_radius,
                p.rope_stiffness,
                0.0,
                &[0, n - 1],
            )?;
            ropes.push(body);
        }
        self.world = world;
        self.ropes = ropes;
        self.rope_cut = vec![false; self.ropes.len()];
        self.pending_cuts.clear();
        self.hook.ptsd = PtsdState::new(0.0, 0.0, 0.0, 100.0);
        self.hook.limits = self.limits;
        self.active = false;
        self.successes = 0;
        self.flags = LimitFlags::default();
        for _ in 0..SETTLE_FRAMES {
            let tools = [self.hook.capsule()];
            self.world.step(&tools, self.delta_t, self.substeps, self.iterations)?;
        }
        self.choose_active(rng);
        Ok(())
    }

    fn apply_action(&mut self, action: &[f64], dt: f64) -> Result<(), EnvError> {
        let flags = self.hook.apply(&action[..4], dt)?;
        self.flags.merge(flags);
        self.active = action[4] > 0.0;
        let removed = self.world.cut(&self.cutting_capsule());
        if !removed.is_empty() {
            for rope in 0..self.ropes.len() {
                if !self.rope_cut[rope] && self.world.connected_components(self.ropes[rope]) > 1 {
                    self.mark_cut(rope);
                }
            }
        }
        Ok(())
    }

    fn simulate(&mut self, dt: f64) -> Result<(), EnvError> {
        let tools = [self.hook.capsule()];
        self.world.step(&tools, dt, self.substeps, self.iterations)?;
        Ok(())
    }

    fn evaluate(&mut self, rng: &mut ChaCha8Rng) -> Evaluation {
        let mut cut_active = 0usize;
        let mut cut_inactive = 0usize;
        let mut events = std::mem::take(&mut self.pending_cuts);
        events.sort_unstable();
        // the active rope is judged before any rope that replaces it
        if let Some(pos) = events.iter().position(|&r| r == self.active_rope) {
            let r = events.remove(pos);
            events.insert(0, r);
        }
        for rope in events {
            if rope == self.active_rope && self.successes < self.params.ropes_to_cut {
                cut_active += 1;
                self.successes += 1;
                if self.successes < self.params.ropes_to_cut {
                    self.choose_active(rng);
                }
            } else {
                cut_inactive += 1;
            }
        }
        let success = self.successes >= self.params.ropes_to_cut;
        let remaining = self.rope_cut.iter().filter(|c| !**c).count();
        let failure = !success && remaining < self.params.ropes_to_cut - self.successes;

        let distance = self.distance_to_rope(self.active_rope);
        let mut eval = Evaluation {
            success,
            failure,
            state_limit_violated: self.flags.state_limit_violated,
            workspace_violated: self.flags.workspace_violated,
            ..Default::default()
        };
        eval.set("distance_to_active_rope", distance);
        eval.set("delta_distance_to_active_rope", distance - self.previous_distance);
        eval.set("cut_active_rope", cut_active as f64);
        eval.set("cut_inactive_rope", cut_inactive as f64);
        eval.set(
            "state_limit_violation",
            f64::from(u8::from(self.flags.state_limit_violated)),
        );
        eval.set(
            "workspace_violation",
            f64::from(u8::from(self.flags.workspace_violated)),
        );
        eval.set("failed_task", f64::from(u8::from(failure)));
        eval.set("successful_task", f64::from(u8::from(success)));
        self.previous_distance = distance;
        self.flags = LimitFlags::default();
        eval
    }

    fn state_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.state_dim());
        v.extend(self.hook.state());
        v.push(f64::from(u8::from(self.active)));
        let samples = chain_sample_indices(self.params.particles_per_rope, self.params.points_per_rope, false);
        let push_rope = |v: &mut Vec<f64>, rope: usize| {
            let start = self.rope_particles(rope).start;
            for &s in &samples {
                v.extend(self.world.particles[start + s].position.iter());
            }
        };
        for rope in 0..self.ropes.len() {
            push_rope(&mut v, rope);
        }
        push_rope(&mut v, self.active_rope);
        v
    }

    fn scene(&self) -> Scene {
        let mut scene = Scene::default();
        let p = &self.params;
        let hw = p.wall_width / 2.0;
        let (z0, z1) = (p.wall_bottom, p.wall_bottom + p.wall_height);
        scene.push_floor(
            1,
            [100, 90, 80],
            [-hw - 40.0, -p.wall_separation],
            [hw + 40.0, p.wall_separation],
            0.0,
        );
        for sign in [-1.0, 1.0] {
            let y = sign * (p.wall_separation / 2.0 + 1.0);
            let q = [
                Vec3::new(-hw, y, z0),
                Vec3::new(hw, y, z0),
                Vec3::new(hw, y, z1),
                Vec3::new(-hw, y, z1),
            ];
            scene.push(2, [150, 150, 160], Shape::Triangle([q[0], q[1], q[2]]));
            scene.push(2, [150, 150, 160], Shape::Triangle([q[0], q[2], q[3]]));
        }
        for c in &self.world.distance_constraints {
            let Some(body) = self.world.body_of(c.i) else {
                continue;
            };
            let rope = self.ropes.iter().position(|&b| b == body).unwrap_or(0);
            let color = if rope == self.active_rope {
                [60, 200, 80]
            } else {
                [220, 220, 210]
            };
            scene.push(
                10 + rope as u32,
                color,
                Shape::Capsule {
                    a: self.world.particles[c.i].position,
                    b: self.world.particles[c.j].position,
                    radius: p.rope_radius,
                },
            );
        }
        let color = if self.active { [240, 80, 60] } else { [190, 190, 200] };
        scene.push(3, color, self.hook.shape());
        scene
    }

    fn camera(&self) -> CameraModel {
        CameraModel::look_at(
            Vec3::from(self.params.camera_eye),
            Vec3::from(self.params.camera_target),
            Vec3::z(),
            self.camera_settings,
            self.resolution,
        )
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{default_config, make_env, EnvId};

    #[test]
    fn cutting_active_rope_with_one_required_succeeds() {
        let mut env = make_env(EnvId::RopeCutting, default_config(EnvId::RopeCutting)).unwrap();
        env.reset(3).unwrap();
        let task = env.task_as_mut::<RopeCuttingEnv>().unwrap();
        let active = task.active_rope();
        task.force_cut_rope(active).unwrap();
        let r = env.step(&[0.0; 5]).unwrap();
        assert!(r.terminated && r.info.success && !r.info.failure);
        assert_eq!(r.info.features["cut_active_rope"], 1.0);
    }

    #[test]
    fn hook_sweep_cuts_a_rope() {
        let mut env = make_env(EnvId::RopeCutting, default_config(EnvId::RopeCutting)).unwrap();
        env.reset(11).unwrap();
        // sink the active hook through the rope layer
        let mut cut_any = false;
        for _ in 0..60 {
            let r = env.step(&[0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
            if r.info.features["cut_active_rope"] + r.info.features["cut_inactive_rope"] > 0.0 {
                cut_any = true;
            }
            if r.terminated || r.truncated {
                break;
            }
        }
        let task = env.task_as::<RopeCuttingEnv>().unwrap();
        let hit = (0..5).any(|k| task.is_cut(k));
        assert_eq!(cut_any, hit);
    }

    #[test]
    fn inactive_hook_never_cuts() {
        let mut env = make_env(EnvId::RopeCutting, default_config(EnvId::RopeCutting)).unwrap();
        env.reset(11).unwrap();
        for _ in 0..60 {
            env.step(&[0.0, 0.0, 0.0, 1.0, -1.0]).unwrap();
        }
        let task = env.task_as::<RopeCuttingEnv>().unwrap();
        assert!((0..5).all(|k| !task.is_cut(k)));
    }
}
