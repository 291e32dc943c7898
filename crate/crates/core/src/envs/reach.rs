//! Reach a target point with an end-effector controlled in Cartesian space.

use std::any::Any;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require, sample_in_box};
use crate::envcore::{EnvConfig, EnvError, Evaluation, Task};
use crate::kinematics::{clamp_cartesian_action, Aabb, Vec3};
use crate::sensors::{CameraModel, CameraSettings, Scene, Shape};

pub const FEATURES: &[&str] = &[
    "distance_to_target",
    "delta_distance_to_target",
    "time_step_cost",
    "workspace_violation",
    "successful_task",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachParams {
    /// Visual radius of the target sphere, mm.
    pub sphere_radius: f64,
    /// Success when the distance is strictly below this, mm.
    pub success_threshold: f64,
    pub randomize_start: bool,
    /// Minimum end-effector to target distance after reset, mm.
    pub min_reset_distance: f64,
    /// Keeps targets away from the workspace boundary, mm.
    pub target_margin: f64,
    pub camera_eye: [f64; 3],
    pub camera_target: [f64; 3],
}

impl Default for ReachParams {
    fn default() -> Self {
        Self {
            sphere_radius: 8.0,
            success_threshold: 3.0,
            randomize_start: true,
            min_reset_distance: 20.0,
            target_margin: 10.0,
            camera_eye: [0.0, -200.0, 220.0],
            camera_target: [0.0, 0.0, 40.0],
        }
    }
}

impl ReachParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        require(self.sphere_radius > 0.0, "reach.sphere_radius must be > 0")?;
        require(self.success_threshold > 0.0, "reach.success_threshold must be > 0")?;
        require(self.min_reset_distance >= 0.0, "reach.min_reset_distance must be >= 0")?;
        require(self.target_margin >= 0.0, "reach.target_margin must be >= 0")
    }
}

#[derive(Debug, Clone)]
pub struct ReachEnv {
    params: ReachParams,
    workspace: Aabb,
    velocity_limits: [f64; 3],
    camera_settings: CameraSettings,
    resolution: u32,
    observation_period: f64,
    end_effector: Vec3,
    target: Vec3,
    previous_distance: f64,
    workspace_violated: bool,
}

impl ReachEnv {
    pub fn new(config: &EnvConfig) -> Result<Self, EnvError> {
        let super::EnvParams::Reach(params) = &config.params else {
            return Err(EnvError::InvalidConfig("reach requires reach params".into()));
        };
        let (workspace, velocity_limits) = config
            .limits
            .cartesian()
            .ok_or_else(|| EnvError::InvalidConfig("reach requires cartesian limits".into()))?;
        let extent = (0..3)
            .map(|i| workspace.max[i] - workspace.min[i])
            .fold(f64::INFINITY, f64::min);
        require(
            extent > 2.0 * params.target_margin,
            "reach workspace is too small for target_margin",
        )?;
        let center = workspace.center();
        Ok(Self {
            params: params.clone(),
            workspace: *workspace,
            velocity_limits: *velocity_limits,
            camera_settings: config.camera,
            resolution: config.image_resolution,
            observation_period: config.sim.observation_period(),
            end_effector: center,
            target: center,
            previous_distance: 0.0,
            workspace_violated: false,
        })
    }

    pub fn end_effector(&self) -> Vec3 {
        self.end_effector
    }

    pub fn target(&self) -> Vec3 {
        self.target
    }

    pub fn distance(&self) -> f64 {
        (self.end_effector - self.target).norm()
    }

    /// Moves the end-effector directly (clamped into the workspace).
    pub fn set_end_effector(&mut self, position: Vec3) {
        self.end_effector = self.workspace.clamp(&position);
        self.previous_distance = self.distance();
    }

    pub fn params(&self) -> &ReachParams {
        &self.params
    }
}

impl Task for ReachEnv {
    fn action_dim(&self) -> usize {
        3
    }

    fn state_dim(&self) -> usize {
        6
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<(), EnvError> {
        let m = self.params.target_margin;
        let lo = [
            self.workspace.min[0] + m,
            self.workspace.min[1] + m,
            self.workspace.min[2] + m,
        ];
        let hi = [
            self.workspace.max[0] - m,
            self.workspace.max[1] - m,
            self.workspace.max[2] - m,
        ];
        let mut attempts = 0;
        loop {
            self.end_effector = if self.params.randomize_start {
                sample_in_box(rng, self.workspace.min, self.workspace.max)
            } else {
                self.workspace.center()
            };
            self.target = sample_in_box(rng, lo, hi);
            if self.distance() >= self.params.min_reset_distance {
                break;
            }
            attempts += 1;
            if attempts > 1000 {
                return Err(EnvError::InvalidConfig(
                    "reach.min_reset_distance cannot be satisfied in this workspace".into(),
                ));
            }
        }
        self.previous_distance = self.distance();
        self.workspace_violated = false;
        Ok(())
    }

    fn apply_action(&mut self, action: &[f64], dt: f64) -> Result<(), EnvError> {
        let a = [action[0], action[1], action[2]];
        let (next, flags) = clamp_cartesian_action(&self.end_effector, &a, &self.velocity_limits, &self.workspace, dt)?;
        self.end_effector = next;
        self.workspace_violated |= flags.workspace_violated;
        Ok(())
    }

    fn simulate(&mut self, _dt: f64) -> Result<(), EnvError> {
        Ok(())
    }

    fn evaluate(&mut self, _rng: &mut ChaCha8Rng) -> Evaluation {
        let distance = self.distance();
        let success = distance < self.params.success_threshold;
        let mut eval = Evaluation {
            success,
            workspace_violated: self.workspace_violated,
            ..Default::default()
        };
        eval.set("distance_to_target", distance);
        eval.set("delta_distance_to_target", distance - self.previous_distance);
        eval.set("time_step_cost", 1.0);
        eval.set("workspace_violation", f64::from(u8::from(self.workspace_violated)));
        eval.set("successful_task", f64::from(u8::from(success)));
        self.previous_distance = distance;
        self.workspace_violated = false;
        eval
    }

    fn state_vector(&self) -> Vec<f64> {
        vec![
            self.end_effector.x,
            self.end_effector.y,
            self.end_effector.z,
            self.target.x,
            self.target.y,
            self.target.z,
        ]
    }

    fn scene(&self) -> Scene {
        let mut scene = Scene::default();
        let (lo, hi) = (self.workspace.min, self.workspace.max);
        scene.push_floor(
            3,
            [90, 90, 100],
            [lo[0] - 40.0, lo[1] - 40.0],
            [hi[0] + 40.0, hi[1] + 40.0],
            lo[2] - 1.0,
        );
        scene.push(
            2,
            [40, 200, 60],
            Shape::Sphere {
                center: self.target,
                radius: self.params.sphere_radius,
            },
        );
        scene.push(
            1,
            [220, 220, 230],
            Shape::Sphere {
                center: self.end_effector,
                radius: 5.0,
            },
        );
        scene.push(
            1,
            [160, 160, 170],
            Shape::Capsule {
                a: self.end_effector + Vec3::new(0.0, 0.0, 150.0),
                b: self.end_effector,
                radius: 2.5,
            },
        );
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

    fn expert_action(&self) -> Option<Vec<f64>> {
        let delta = self.target - self.end_effector;
        if delta.norm() < self.params.success_threshold {
            return Some(vec![0.0; 3]);
        }
        Some(
            (0..3)
                .map(|k| (delta[k] / (self.velocity_limits[k] * self.observation_period).max(1e-12)).clamp(-1.0, 1.0))
                .collect(),
        )
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
