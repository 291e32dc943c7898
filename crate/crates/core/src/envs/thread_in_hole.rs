//! Guide the hanging end of a grasped thread into a hollow cylinder.

use std::any::Any;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{chain_sample_indices, require, EnvParams, Instrument};
use crate::envcore::{EnvConfig, EnvError, Evaluation, Task};
use crate::kinematics::{pose_to_ptsd, InstrumentLimits, LimitFlags, PtsdState, RcmFrame, Vec3};
use crate::sensors::{CameraModel, CameraSettings, Scene, Shape};
use crate::softbody::{segment_segment_distance, Collider, SoftWorld};

pub const FEATURES: &[&str] = &[
    "distance_tip_to_hole",
    "delta_distance_tip_to_hole",
    "distance_com_to_hole",
    "delta_distance_com_to_hole",
    "unstable_simulation",
    "thread_velocity",
    "gripper_velocity",
    "state_limit_violation",
    "workspace_violation",
    "ratio_in_hole",
    "delta_ratio_in_hole",
    "gripper_collision",
    "successful_task",
];

const GRASPER_RADIUS: f64 = 2.0;
const THREAD_RADIUS: f64 = 1.0;
const THREAD_PARTICLE_MASS: f64 = 0.1;
const START_TIP: [f64; 3] = [30.0, 20.0, 95.0];

/// Mechanical presets for thread and hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadMechanics {
    Normal,
    /// Longer, more flexible thread.
    Flexible,
    /// Stiff thread and a narrow hole.
    Inverted,
}

/// Resolved geometry and stiffness of a [`ThreadMechanics`] preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicsPreset {
    pub thread_length: f64,
    pub thread_particles: usize,
    pub bending_stiffness: f64,
    pub hole_inner_radius: f64,
    pub hole_outer_radius: f64,
    pub hole_height: f64,
}

impl ThreadMechanics {
    pub fn preset(self) -> MechanicsPreset {
        match self {
            ThreadMechanics::Normal => MechanicsPreset {
                thread_length: 50.0,
                thread_particles: 11,
                bending_stiffness: 0.3,
                hole_inner_radius: 6.0,
                hole_outer_radius: 9.0,
                hole_height: 25.0,
            },
            ThreadMechanics::Flexible => MechanicsPreset {
                thread_length: 80.0,
                thread_particles: 17,
                bending_stiffness: 0.02,
                hole_inner_radius: 6.0,
                hole_outer_radius: 9.0,
                hole_height: 25.0,
            },
            ThreadMechanics::Inverted => MechanicsPreset {
                thread_length: 50.0,
                thread_particles: 11,
                bending_stiffness: 0.9,
                hole_inner_radius: 3.0,
                hole_outer_radius: 7.0,
                hole_height: 25.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreadInHoleParams {
    pub mechanics: ThreadMechanics,
    /// Fraction of thread particles inside the hole that completes the task.
    pub insertion_ratio: f64,
    /// Uniform noise on the hole position in x and y, mm.
    pub hole_pose_noise: f64,
    /// Uniform noise on reset tilt and pan, degrees.
    pub instrument_pose_noise: f64,
    pub camera_noise: bool,
    /// Magnitude of the camera eye perturbation when `camera_noise` is set, mm.
    pub camera_noise_mm: f64,
    pub thread_points: usize,
    pub camera_eye: [f64; 3],
    pub camera_target: [f64; 3],
}

impl Default for ThreadInHoleParams {
    fn default() -> Self {
        Self {
            mechanics: ThreadMechanics::Normal,
            insertion_ratio: 0.5,
            hole_pose_noise: 0.0,
            instrument_pose_noise: 0.0,
            camera_noise: false,
            camera_noise_mm: 20.0,
            thread_points: 4,
            camera_eye: [0.0, -160.0, 140.0],
            camera_target: [0.0, 0.0, 25.0],
        }
    }
}

impl ThreadInHoleParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        require(
            self.insertion_ratio > 0.0 && self.insertion_ratio <= 1.0,
            "thread_in_hole.insertion_ratio must lie in (0, 1]",
        )?;
        require(
            self.hole_pose_noise >= 0.0,
            "thread_in_hole.hole_pose_noise must be >= 0",
        )?;
        require(
            self.instrument_pose_noise >= 0.0,
            "thread_in_hole.instrument_pose_noise must be >= 0",
        )?;
        require(
            self.camera_noise_mm >= 0.0,
            "thread_in_hole.camera_noise_mm must be >= 0",
        )?;
        require(
            self.thread_points >= 1 && self.thread_points <= self.mechanics.preset().thread_particles,
            "thread_in_hole.thread_points must lie in 1..=thread particle count",
        )
    }
}

#[derive(Debug, Clone)]
pub struct ThreadInHoleEnv {
    params: ThreadInHoleParams,
    preset: MechanicsPreset,
    limits: InstrumentLimits,
    camera_settings: CameraSettings,
    resolution: u32,
    substeps: usize,
    iterations: usize,
    observation_period: f64,
    world: SoftWorld,
    grasper: Instrument,
    hole_base: Vec3,
    camera_eye: Vec3,
    thread: std::ops::Range<usize>,
    flags: LimitFlags,
    unstable: bool,
    previous_tip_distance: f64,
    previous_com_distance: f64,
    previous_ratio: f64,
    previous_grasper_tip: Vec3,
}

impl ThreadInHoleEnv {
    pub fn new(config: &EnvConfig) -> Result<Self, EnvError> {
        let EnvParams::ThreadInHole(params) = &config.params else {
            return Err(EnvError::InvalidConfig("thread_in_hole requires its params".into()));
        };
        let limits = *config
            .limits
            .tpsd()
            .ok_or_else(|| EnvError::InvalidConfig("thread_in_hole requires tpsd limits".into()))?;
        let rcm = RcmFrame {
            position: [0.0, -40.0, 180.0],
            orientation: [180.0, 0.0, 0.0],
        };
        Ok(Self {
            params: params.clone(),
            preset: params.mechanics.preset(),
            limits,
            camera_settings: config.camera,
            resolution: config.image_resolution,
            substeps: config.solver.substeps,
            iterations: config.solver.iterations,
            observation_period: config.sim.observation_period(),
            world: SoftWorld::new(),
            grasper: Instrument {
                rcm,
                ptsd: PtsdState::default(),
                limits,
                radius: GRASPER_RADIUS,
                shaft_length: 120.0,
            },
            hole_base: Vec3::zeros(),
            camera_eye: Vec3::from(params.camera_eye),
            thread: 0..0,
            flags: LimitFlags::default(),
            unstable: false,
            previous_tip_distance: 0.0,
            previous_com_distance: 0.0,
            previous_ratio: 0.0,
            previous_grasper_tip: Vec3::zeros(),
        })
    }

    pub fn world(&self) -> &SoftWorld {
        &self.world
    }

    pub fn grasper(&self) -> &Instrument {
        &self.grasper
    }

    pub fn preset(&self) -> MechanicsPreset {
        self.preset
    }

    /// Center of the hole's top opening.
    pub fn hole_opening(&self) -> Vec3 {
        self.hole_base + Vec3::new(0.0, 0.0, self.preset.hole_height)
    }

    pub fn thread_tip(&self) -> Vec3 {
        self.world.particles[self.thread.end - 1].position
    }

    pub fn thread_com(&self) -> Vec3 {
        let sum: Vec3 = self.thread.clone().map(|i| self.world.particles[i].position).sum();
        sum / self.thread.len() as f64
    }

    /// Fraction of thread particles strictly inside the cylinder volume.
    pub fn ratio_in_hole(&self) -> f64 {
        let inside = self
            .thread
            .clone()
            .filter(|&i| {
                let rel = self.world.particles[i].position - self.hole_base;
                (rel.x * rel.x + rel.y * rel.y).sqrt() < self.preset.hole_inner_radius
                    && rel.z > 0.0
                    && rel.z < self.preset.hole_height
            })
            .count();
        inside as f64 / self.thread.len() as f64
    }

    /// Places the thread particles directly, for tests and scripted scenarios.
    pub fn set_thread_positions(&mut self, positions: &[Vec3]) {
        for (i, p) in self.thread.clone().zip(positions) {
            self.world.particles[i].position = *p;
            self.world.particles[i].previous_position = *p;
            self.world.particles[i].velocity = Vec3::zeros();
        }
    }

    fn tools(&self) -> [crate::softbody::ToolCapsule; 1] {
        [self.grasper.capsule()]
    }

    fn gripper_collides(&self) -> bool {
        let c = self.grasper.capsule();
        let top = self.hole_opening();
        segment_segment_distance(&c.endpoint_a, &c.endpoint_b, &self.hole_base, &top)
            < self.preset.hole_outer_radius + c.radius
    }
}

impl Task for ThreadInHoleEnv {
    fn action_dim(&self) -> usize {
        4
    }

    fn state_dim(&self) -> usize {
        7 + 4 + 3 + 3 + 3 * self.params.thread_points
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<(), EnvError> {
        let p = &self.params;
        let hn = p.hole_pose_noise;
        let sample = |rng: &mut ChaCha8Rng, m: f64| if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
        self.hole_base = Vec3::new(sample(rng, hn), sample(rng, hn), 0.0);
        let mut ptsd = pose_to_ptsd(&Vec3::from(START_TIP), &self.grasper.rcm, 0.0)?;
        ptsd.tilt += sample(rng, p.instrument_pose_noise);
        ptsd.pan += sample(rng, p.instrument_pose_noise);
        self.grasper.ptsd = ptsd;
        self.grasper.limits = self.limits;
        self.camera_eye = Vec3::from(p.camera_eye);
        if p.camera_noise {
            let m = p.camera_noise_mm;
            self.camera_eye += Vec3::new(sample(rng, m), sample(rng, m), sample(rng, m));
        }

        let mut world = SoftWorld::new();
        world.damping = 2.0;
        world.colliders.push(Collider::HalfSpace {
            normal: Vec3::z(),
            offset: 0.0,
        });
        world.colliders.push(Collider::Tube {
            base: self.hole_base,
            height: self.preset.hole_height,
            inner_radius: self.preset.hole_inner_radius,
            outer_radius: self.preset.hole_outer_radius,
        });
        let tip = self.grasper.tip();
        let n = self.preset.thread_particles;
        let spacing = self.preset.thread_length / (n - 1) as f64;
        let points: Vec<Vec3> = (0..n).map(|m| tip - Vec3::new(0.0, 0.0, spacing * m as f64)).collect();
        let body = world.add_rope(
            "thread",
            &points,
            THREAD_PARTICLE_MASS,
            THREAD_RADIUS,
            1.0,
            self.preset.bending_stiffness,
            &[],
        )?;
        self.thread = world.bodies[body].range.clone();
        world.attach(self.thread.start, 0, Vec3::zeros())?;
        self.world = world;
        self.flags = LimitFlags::default();
        self.unstable = false;
        self.previous_tip_distance = (self.thread_tip() - self.hole_opening()).norm();
        self.previous_com_distance = (self.thread_com() - self.hole_opening()).norm();
        self.previous_ratio = self.ratio_in_hole();
        self.previous_grasper_tip = tip;
        Ok(())
    }

    fn apply_action(&mut self, action: &[f64], dt: f64) -> Result<(), EnvError> {
        let flags = self.grasper.apply(action, dt)?;
        self.flags.merge(flags);
        Ok(())
    }

    fn simulate(&mut self, dt: f64) -> Result<(), EnvError> {
        let snapshot = self.world.clone();
        let tools = self.tools();
        match self.world.step(&tools, dt, self.substeps, self.iterations) {
            Ok(()) => Ok(()),
            Err(crate::softbody::SoftBodyError::UnstableSimulation { .. }) => {
                self.world = snapshot;
                for p in &mut self.world.particles {
                    p.velocity = Vec3::zeros();
                }
                self.unstable = true;
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn evaluate(&mut self, _rng: &mut ChaCha8Rng) -> Evaluation {
        let opening = self.hole_opening();
        let tip_distance = (self.thread_tip() - opening).norm();
        let com_distance = (self.thread_com() - opening).norm();
        let ratio = self.ratio_in_hole();
        let thread_velocity = self
            .thread
            .clone()
            .map(|i| self.world.particles[i].velocity.norm())
            .sum::<f64>()
            / self.thread.len() as f64;
        let grasper_tip = self.grasper.tip();
        let gripper_velocity = (grasper_tip - self.previous_grasper_tip).norm() / self.observation_period;
        let success = ratio >= self.params.insertion_ratio;
        let mut eval = Evaluation {
            success,
            state_limit_violated: self.flags.state_limit_violated,
            workspace_violated: self.flags.workspace_violated,
            ..Default::default()
        };
        eval.set("distance_tip_to_hole", tip_distance);
        eval.set("delta_distance_tip_to_hole", tip_distance - self.previous_tip_distance);
        eval.set("distance_com_to_hole", com_distance);
        eval.set("delta_distance_com_to_hole", com_distance - self.previous_com_distance);
        eval.set("unstable_simulation", f64::from(u8::from(self.unstable)));
        eval.set("thread_velocity", thread_velocity);
        eval.set("gripper_velocity", gripper_velocity);
        eval.set(
            "state_limit_violation",
            f64::from(u8::from(self.flags.state_limit_violated)),
        );
        eval.set(
            "workspace_violation",
            f64::from(u8::from(self.flags.workspace_violated)),
        );
        eval.set("ratio_in_hole", ratio);
        eval.set("delta_ratio_in_hole", ratio - self.previous_ratio);
        eval.set("gripper_collision", f64::from(u8::from(self.gripper_collides())));
        eval.set("successful_task", f64::from(u8::from(success)));
        self.previous_tip_distance = tip_distance;
        self.previous_com_distance = com_distance;
        self.previous_ratio = ratio;
        self.previous_grasper_tip = grasper_tip;
        self.flags = LimitFlags::default();
        self.unstable = false;
        eval
    }

    fn state_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.state_dim());
        v.extend(self.grasper.state());
        v.extend(self.thread_com().iter());
        v.extend(self.hole_opening().iter());
        for s in chain_sample_indices(self.thread.len(), self.params.thread_points, true) {
            v.extend(self.world.particles[self.thread.start + s].position.iter());
        }
        v
    }

    fn scene(&self) -> Scene {
        let mut scene = Scene::default();
        scene.push_floor(1, [110, 100, 90], [-120.0, -120.0], [120.0, 120.0], 0.0);
        let segments = 24;
        let (r_in, r_out, h) = (
            self.preset.hole_inner_radius,
            self.preset.hole_outer_radius,
            self.preset.hole_height,
        );
        let ring = |r: f64, k: usize, z: f64| {
            let a = std::f64::consts::TAU * k as f64 / segments as f64;
            self.hole_base + Vec3::new(r * a.cos(), r * a.sin(), z)
        };
        for k in 0..segments {
            let color = [80, 160, 200];
            let (o0, o1) = (ring(r_out, k, 0.0), ring(r_out, k + 1, 0.0));
            let (t0, t1) = (ring(r_out, k, h), ring(r_out, k + 1, h));
            scene.push(2, color, Shape::Triangle([o0, o1, t1]));
            scene.push(2, color, Shape::Triangle([o0, t1, t0]));
            let (i0, i1) = (ring(r_in, k, h), ring(r_in, k + 1, h));
            scene.push(2, [60, 130, 170], Shape::Triangle([t0, t1, i1]));
            scene.push(2, [60, 130, 170], Shape::Triangle([t0, i1, i0]));
            let (b0, b1) = (ring(r_in, k, 0.0), ring(r_in, k + 1, 0.0));
            scene.push(2, [40, 90, 120], Shape::Triangle([b0, i1, b1]));
            scene.push(2, [40, 90, 120], Shape::Triangle([b0, i0, i1]));
        }
        for i in self.thread.start..self.thread.end - 1 {
            scene.push(
                3,
                [230, 230, 120],
                Shape::Capsule {
                    a: self.world.particles[i].position,
                    b: self.world.particles[i + 1].position,
                    radius: THREAD_RADIUS,
                },
            );
        }
        scene.push(4, [190, 190, 200], self.grasper.shape());
        scene
    }

    fn camera(&self) -> CameraModel {
        CameraModel::look_at(
            self.camera_eye,
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
