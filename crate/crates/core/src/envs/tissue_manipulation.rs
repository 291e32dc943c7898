//! Move a tissue landmark onto a target point in the image by pulling the
//! grasped tissue edge.

use std::any::Any;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require, EnvParams};
use crate::envcore::{EnvConfig, EnvError, Evaluation, Task};
use crate::kinematics::{clamp_cartesian_action, Aabb, Vec3};
use crate::sensors::{project, CameraModel, CameraSettings, Scene, Shape};
use crate::softbody::{Particle, SoftWorld, ToolCapsule};

pub const FEATURES: &[&str] = &[
    "distance_to_target",
    "policy_stuck",
    "workspace_violation",
    "unstable_simulation",
    "successful_task",
];

const GRASPER_RADIUS: f64 = 2.0;
const SETTLE_FRAMES: usize = 30;
/// Image distance reported when a point cannot be projected, mm.
const UNPROJECTABLE_DISTANCE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TissueManipulationParams {
    /// Particles per side of the tissue patch.
    pub grid_size: usize,
    pub spacing: f64,
    pub particle_mass: f64,
    pub structural_stiffness: f64,
    pub shear_stiffness: f64,
    /// Success when the image-plane distance is strictly below this, mm.
    pub success_threshold: f64,
    pub randomize_landmark: bool,
    pub randomize_grasp_point: bool,
    /// Minimum image-plane distance between landmark and target after reset, mm.
    pub min_reset_distance: f64,
    /// Largest 3D offset of the target from the settled landmark, mm.
    pub max_target_offset: f64,
    pub stuck_steps: u32,
    /// Landmark motion per step below which the policy counts as stuck, mm.
    pub stuck_motion: f64,
    pub camera_eye: [f64; 3],
    pub camera_target: [f64; 3],
}

impl Default for TissueManipulationParams {
    fn default() -> Self {
        Self {
            grid_size: 9,
            spacing: 10.0,
            particle_mass: 0.5,
            structural_stiffness: 0.9,
            shear_stiffness: 0.5,
            success_threshold: 5.0,
            randomize_landmark: true,
            randomize_grasp_point: false,
            min_reset_distance: 10.0,
            max_target_offset: 25.0,
            stuck_steps: 50,
            stuck_motion: 0.01,
            camera_eye: [0.0, 40.0, 260.0],
            camera_target: [0.0, 40.0, 50.0],
        }
    }
}

impl TissueManipulationParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        require(self.grid_size >= 3, "tissue_manipulation.grid_size must be >= 3")?;
        require(self.spacing > 0.0, "tissue_manipulation.spacing must be > 0")?;
        require(
            self.particle_mass > 0.0,
            "tissue_manipulation.particle_mass must be > 0",
        )?;
        require(
            (0.0..=1.0).contains(&self.structural_stiffness) && (0.0..=1.0).contains(&self.shear_stiffness),
            "tissue_manipulation stiffness values must lie in [0, 1]",
        )?;
        require(
            self.success_threshold > 0.0,
            "tissue_manipulation.success_threshold must be > 0",
        )?;
        require(
            self.min_reset_distance >= 0.0,
            "tissue_manipulation.min_reset_distance must be >= 0",
        )?;
        require(
            self.max_target_offset > self.min_reset_distance,
            "tissue_manipulation.max_target_offset must exceed min_reset_distance",
        )?;
        require(self.stuck_steps >= 1, "tissue_manipulation.stuck_steps must be >= 1")?;
        require(
            self.stuck_motion >= 0.0,
            "tissue_manipulation.stuck_motion must be >= 0",
        )
    }
}

#[derive(Debug, Clone)]
pub struct TissueManipulationEnv {
    params: TissueManipulationParams,
    workspace: Aabb,
    velocity_limits: [f64; 3],
    camera_settings: CameraSettings,
    resolution: u32,
    substeps: usize,
    iterations: usize,
    delta_t: f64,
    world: SoftWorld,
    grasper: Vec3,
    grasp_particle: usize,
    landmark: usize,
    target: Vec3,
    previous_landmark: Vec3,
    still_steps: u32,
    workspace_violated: bool,
    unstable: bool,
}

impl TissueManipulationEnv {
    pub fn new(config: &EnvConfig) -> Result<Self, EnvError> {
        let EnvParams::TissueManipulation(params) = &config.params else {
            return Err(EnvError::InvalidConfig(
                "tissue_manipulation requires its params".into(),
            ));
        };
        let (workspace, velocity_limits) = config
            .limits
            .cartesian()
            .ok_or_else(|| EnvError::InvalidConfig("tissue_manipulation requires cartesian limits".into()))?;
        Ok(Self {
            params: params.clone(),
            workspace: *workspace,
            velocity_limits: *velocity_limits,
            camera_settings: config.camera,
            resolution: config.image_resolution,
            substeps: config.solver.substeps,
            iterations: config.solver.iterations,
            delta_t: config.sim.delta_t_s,
            world: SoftWorld::new(),
            grasper: Vec3::zeros(),
            grasp_particle: 0,
            landmark: 0,
            target: Vec3::zeros(),
            previous_landmark: Vec3::zeros(),
            still_steps: 0,
            workspace_violated: false,
            unstable: false,
        })
    }

    pub fn world(&self) -> &SoftWorld {
        &self.world
    }

    pub fn grasper(&self) -> Vec3 {
        self.grasper
    }

    pub fn landmark(&self) -> Vec3 {
        self.world.particles[self.landmark].position
    }

    pub fn landmark_index(&self) -> usize {
        self.landmark
    }

    pub fn target(&self) -> Vec3 {
        self.target
    }

    /// Overrides the target point (for tests and scripted scenarios).
    pub fn set_target(&mut self, target: Vec3) {
        self.target = target;
    }

    /// Distance between projected landmark and target, in mm at the target's depth.
    pub fn image_distance(&self) -> f64 {
        let camera = self.camera();
        match (project(&self.landmark(), &camera), project(&self.target, &camera)) {
            (Ok(a), Ok(b)) => {
                let px = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                px * camera.pixel_size_at(camera.to_camera(&self.target).z)
            }
            _ => UNPROJECTABLE_DISTANCE,
        }
    }

    fn tool(&self) -> ToolCapsule {
        ToolCapsule::new(self.grasper + Vec3::new(0.0, 0.0, 60.0), self.grasper, GRASPER_RADIUS)
    }

    fn build_world(&mut self, rng: &mut ChaCha8Rng) -> Result<(), EnvError> {
        let p = &self.params;
        let n = p.grid_size;
        let half = (n - 1) as f64 * p.spacing / 2.0;
        let mut world = SoftWorld::new();
        world.damping = 3.0;
        let idx = |i: usize, j: usize| j * n + i;
        for j in 0..n {
            for i in 0..n {
                let position = Vec3::new(-half + i as f64 * p.spacing, j as f64 * p.spacing, 50.0);
                let inv = if j == 0 { 0.0 } else { 1.0 / p.particle_mass };
                world.add_particle(Particle::new(position, inv).with_radius(1.0));
            }
        }
        for j in 0..n {
            for i in 0..n {
                if i + 1 < n {
                    world.add_distance(idx(i, j), idx(i + 1, j), p.structural_stiffness)?;
                }
                if j + 1 < n {
                    world.add_distance(idx(i, j), idx(i, j + 1), p.structural_stiffness)?;
                }
                if i + 1 < n && j + 1 < n {
                    world.add_distance(idx(i, j), idx(i + 1, j + 1), p.shear_stiffness)?;
                    world.add_distance(idx(i + 1, j), idx(i, j + 1), p.shear_stiffness)?;
                }
            }
        }
        world.add_body("tissue", 0..n * n, true)?;
        let grasp = if p.randomize_grasp_point {
            idx(rng.gen_range(1..n - 1), n - 1)
        } else {
            idx(n / 2, n - 1)
        };
        let landmark = if p.randomize_landmark {
            loop {
                let candidate = idx(rng.gen_range(0..n), rng.gen_range(1..n));
                if candidate != grasp {
                    break candidate;
                }
            }
        } else {
            idx(n / 2, n / 2)
        };
        world.attach(grasp, 0, Vec3::zeros())?;
        self.grasper = world.particles[grasp].position;
        self.world = world;
        self.grasp_particle = grasp;
        self.landmark = landmark;
        Ok(())
    }

    fn step_world(&mut self, dt: f64) -> Result<(), EnvError> {
        let tools = [self.tool()];
        self.world.step(&tools, dt, self.substeps, self.iterations)?;
        Ok(())
    }
}

impl Task for TissueManipulationEnv {
    fn action_dim(&self) -> usize {
        3
    }

    fn state_dim(&self) -> usize {
        9
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<(), EnvError> {
        self.build_world(rng)?;
        for _ in 0..SETTLE_FRAMES {
            self.step_world(self.delta_t)?;
        }
        let landmark = self.landmark();
        let max = self.params.max_target_offset;
        let mut attempts = 0;
        loop {
            let offset = Vec3::new(
                rng.gen_range(-max..=max),
                rng.gen_range(-max..=max),
                rng.gen_range(-max..=max),
            );
            let norm = offset.norm();
            self.target = landmark + offset;
            if norm <= max && self.image_distance() >= self.params.min_reset_distance {
                break;
            }
            attempts += 1;
            if attempts > 10_000 {
                return Err(EnvError::InvalidConfig(
                    "tissue_manipulation: cannot place a target at the requested distance".into(),
                ));
            }
        }
        self.previous_landmark = landmark;
        self.still_steps = 0;
        self.workspace_violated = false;
        self.unstable = false;
        Ok(())
    }

    fn apply_action(&mut self, action: &[f64], dt: f64) -> Result<(), EnvError> {
        let a = [action[0], action[1], action[2]];
        let (next, flags) = clamp_cartesian_action(&self.grasper, &a, &self.velocity_limits, &self.workspace, dt)?;
        self.grasper = next;
        self.workspace_violated |= flags.workspace_violated;
        Ok(())
    }

    fn simulate(&mut self, dt: f64) -> Result<(), EnvError> {
        let snapshot = self.world.clone();
        match self.step_world(dt) {
            Ok(()) => Ok(()),
            Err(EnvError::UnstableSimulation(_)) => {
                self.world = snapshot;
                for p in &mut self.world.particles {
                    p.velocity = Vec3::zeros();
                }
                self.unstable = true;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn evaluate(&mut self, _rng: &mut ChaCha8Rng) -> Evaluation {
        let landmark = self.landmark();
        if (landmark - self.previous_landmark).norm() < self.params.stuck_motion {
            self.still_steps += 1;
        } else {
            self.still_steps = 0;
        }
        self.previous_landmark = landmark;
        let stuck = self.still_steps >= self.params.stuck_steps;
        let distance = self.image_distance();
        let success = distance < self.params.success_threshold;
        let mut eval = Evaluation {
            success,
            workspace_violated: self.workspace_violated,
            ..Default::default()
        };
        eval.set("distance_to_target", distance);
        eval.set("policy_stuck", f64::from(u8::from(stuck)));
        eval.set("workspace_violation", f64::from(u8::from(self.workspace_violated)));
        eval.set("unstable_simulation", f64::from(u8::from(self.unstable)));
        eval.set("successful_task", f64::from(u8::from(success)));
        self.workspace_violated = false;
        self.unstable = false;
        eval
    }

    fn state_vector(&self) -> Vec<f64> {
        let l = self.landmark();
        vec![
            self.grasper.x,
            self.grasper.y,
            self.grasper.z,
            l.x,
            l.y,
            l.z,
            self.target.x,
            self.target.y,
            self.target.z,
        ]
    }

    fn scene(&self) -> Scene {
        let mut scene = Scene::default();
        scene.push_floor(5, [110, 40, 40], [-120.0, -60.0], [120.0, 160.0], 0.0);
        let n = self.params.grid_size;
        let pos = |i: usize, j: usize| self.world.particles[j * n + i].position;
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                scene.push(
                    1,
                    [230, 200, 60],
                    Shape::Triangle([pos(i, j), pos(i + 1, j), pos(i + 1, j + 1)]),
                );
                scene.push(
                    1,
                    [230, 200, 60],
                    Shape::Triangle([pos(i, j), pos(i + 1, j + 1), pos(i, j + 1)]),
                );
            }
        }
        scene.push(
            2,
            [10, 10, 10],
            Shape::Sphere {
                center: self.landmark() + Vec3::new(0.0, 0.0, 1.0),
                radius: 2.0,
            },
        );
        scene.push(
            3,
            [40, 80, 240],
            Shape::Sphere {
                center: self.target,
                radius: 2.0,
            },
        );
        let tool = self.tool();
        scene.push(
            4,
            [190, 190, 200],
            Shape::Capsule {
                a: tool.endpoint_a,
                b: tool.endpoint_b,
                radius: tool.radius,
            },
        );
        scene
    }

    fn camera(&self) -> CameraModel {
        CameraModel::look_at(
            Vec3::from(self.params.camera_eye),
            Vec3::from(self.params.camera_target),
            Vec3::y(),
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
