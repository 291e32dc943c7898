//! The five shipped environments and their default configurations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envcore::{
    ActionMode, ControlLimits, EnvConfig, EnvError, Environment, ObservationType, RewardSpec, SimParams,
    SolverSettings, Task,
};
use crate::kinematics::{
    clamp_action, ptsd_to_pose, Aabb, InstrumentLimits, LimitFlags, Pose, PtsdState, RcmFrame, Vec3,
};
use crate::sensors::{CameraSettings, Shape};
use crate::softbody::{SoftBodyError, ToolCapsule};

pub mod deflect_spheres;
pub mod reach;
pub mod rope_cutting;
pub mod thread_in_hole;
pub mod tissue_manipulation;

pub use deflect_spheres::{DeflectSpheresEnv, DeflectSpheresParams};
pub use reach::{ReachEnv, ReachParams};
pub use rope_cutting::{RopeCuttingEnv, RopeCuttingParams};
pub use thread_in_hole::{ThreadInHoleEnv, ThreadInHoleParams, ThreadMechanics};
pub use tissue_manipulation::{TissueManipulationEnv, TissueManipulationParams};

/// Default image side length in pixels.
pub const DEFAULT_RESOLUTION: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Reach,
    DeflectSpheres,
    TissueManipulation,
    RopeCutting,
    ThreadInHole,
}

impl EnvId {
    pub const ALL: [EnvId; 5] = [
        EnvId::Reach,
        EnvId::DeflectSpheres,
        EnvId::TissueManipulation,
        EnvId::RopeCutting,
        EnvId::ThreadInHole,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Reach => "reach",
            EnvId::DeflectSpheres => "deflect_spheres",
            EnvId::TissueManipulation => "tissue_manipulation",
            EnvId::RopeCutting => "rope_cutting",
            EnvId::ThreadInHole => "thread_in_hole",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| EnvError::UnknownEnv(s.to_string()))
    }
}

/// Environment-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvParams {
    Reach(ReachParams),
    DeflectSpheres(DeflectSpheresParams),
    TissueManipulation(TissueManipulationParams),
    RopeCutting(RopeCuttingParams),
    ThreadInHole(ThreadInHoleParams),
}

impl EnvParams {
    pub fn default_for(env: EnvId) -> Self {
        match env {
            EnvId::Reach => EnvParams::Reach(ReachParams::default()),
            EnvId::DeflectSpheres => EnvParams::DeflectSpheres(DeflectSpheresParams::default()),
            EnvId::TissueManipulation => EnvParams::TissueManipulation(TissueManipulationParams::default()),
            EnvId::RopeCutting => EnvParams::RopeCutting(RopeCuttingParams::default()),
            EnvId::ThreadInHole => EnvParams::ThreadInHole(ThreadInHoleParams::default()),
        }
    }

    pub fn env_id(&self) -> EnvId {
        match self {
            EnvParams::Reach(_) => EnvId::Reach,
            EnvParams::DeflectSpheres(_) => EnvId::DeflectSpheres,
            EnvParams::TissueManipulation(_) => EnvId::TissueManipulation,
            EnvParams::RopeCutting(_) => EnvId::RopeCutting,
            EnvParams::ThreadInHole(_) => EnvId::ThreadInHole,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            EnvParams::Reach(p) => p.validate(),
            EnvParams::DeflectSpheres(p) => p.validate(),
            EnvParams::TissueManipulation(p) => p.validate(),
            EnvParams::RopeCutting(p) => p.validate(),
            EnvParams::ThreadInHole(p) => p.validate(),
        }
    }

    /// Frame timing and episode length derived from the parameters.
    pub fn default_sim(&self) -> SimParams {
        match self {
            EnvParams::Reach(_) => SimParams::new(0.1, 1, 500),
            EnvParams::DeflectSpheres(p) => SimParams::new(0.1, 1, 500 * p.deflections_to_win as u64),
            EnvParams::TissueManipulation(_) => SimParams::new(0.1, 1, 500),
            EnvParams::RopeCutting(p) => SimParams::new(0.1, 1, 400.max(200 * p.ropes_to_cut as u64)),
            EnvParams::ThreadInHole(_) => SimParams::new(0.01, 10, 300),
        }
    }

    /// Reward feature ids the environment reports.
    pub fn feature_ids(&self) -> &'static [&'static str] {
        match self {
            EnvParams::Reach(_) => reach::FEATURES,
            EnvParams::DeflectSpheres(_) => deflect_spheres::FEATURES,
            EnvParams::TissueManipulation(_) => tissue_manipulation::FEATURES,
            EnvParams::RopeCutting(_) => rope_cutting::FEATURES,
            EnvParams::ThreadInHole(_) => thread_in_hole::FEATURES,
        }
    }
}

/// Default reward weights for an environment.
pub fn default_reward_spec(env: EnvId) -> RewardSpec {
    match env {
        EnvId::Reach => RewardSpec::from_pairs(&[
            ("distance_to_target", -1.0),
            ("delta_distance_to_target", -10.0),
            ("time_step_cost", 0.0),
            ("workspace_violation", 0.0),
            ("successful_task", 100.0),
        ]),
        EnvId::DeflectSpheres => RewardSpec::from_pairs(&[
            ("workspace_violation", 0.0),
            ("state_limit_violation", 0.0),
            ("instrument_collision", 0.0),
            ("distance_to_active_sphere", 0.0),
            ("delta_distance_to_active_sphere", -5.0),
            ("inactive_sphere_deflection", -0.005),
            ("active_sphere_deflection", 0.0),
            ("delta_active_sphere_deflection", 1.0),
            ("done_with_active_sphere", 10.0),
            ("successful_task", 100.0),
        ]),
        EnvId::TissueManipulation => RewardSpec::from_pairs(&[
            ("distance_to_target", -1.0),
            ("policy_stuck", -5.0),
            ("workspace_violation", 0.0),
            ("unstable_simulation", 0.0),
            ("successful_task", 10.0),
        ]),
        EnvId::RopeCutting => RewardSpec::from_pairs(&[
            ("distance_to_active_rope", 0.0),
            ("delta_distance_to_active_rope", -5.0),
            ("cut_active_rope", 5.0),
            ("cut_inactive_rope", -5.0),
            ("state_limit_violation", 0.0),
            ("workspace_violation", 0.0),
            ("failed_task", -20.0),
            ("successful_task", 10.0),
        ]),
        EnvId::ThreadInHole => RewardSpec::from_pairs(&[
            ("distance_tip_to_hole", -0.1),
            ("delta_distance_tip_to_hole", -0.1),
            ("distance_com_to_hole", -0.0),
            ("delta_distance_com_to_hole", -0.0),
            ("unstable_simulation", 0.0),
            ("thread_velocity", 0.0),
            ("gripper_velocity", 0.0),
            ("state_limit_violation", 0.0),
            ("workspace_violation", 0.0),
            ("ratio_in_hole", 0.1),
            ("delta_ratio_in_hole", 1.0),
            ("gripper_collision", -0.1),
            ("successful_task", 100.0),
        ]),
    }
}

fn tpsd_limits(low: [f64; 4], high: [f64; 4], min: [f64; 3], max: [f64; 3], velocity: [f64; 4]) -> ControlLimits {
    ControlLimits::Tpsd(InstrumentLimits {
        ptsd_low: PtsdState::from_array(low),
        ptsd_high: PtsdState::from_array(high),
        cartesian_box: Aabb { min, max },
        velocity_limits: velocity,
    })
}

/// Shipped default configuration for `env`.
pub fn default_config(env: EnvId) -> EnvConfig {
    let params = EnvParams::default_for(env);
    let (limits, solver) = match env {
        EnvId::Reach => (
            ControlLimits::Cartesian {
                workspace: Aabb {
                    min: [-60.0, -60.0, 0.0],
                    max: [60.0, 60.0, 100.0],
                },
                velocity_limits: [30.0, 30.0, 30.0],
            },
            SolverSettings {
                substeps: 1,
                iterations: 1,
            },
        ),
        EnvId::DeflectSpheres => (
            tpsd_limits(
                [-60.0, -60.0, -180.0, 0.0],
                [60.0, 60.0, 180.0, 250.0],
                [-100.0, -100.0, 1.0],
                [100.0, 100.0, 200.0],
                [15.0, 15.0, 30.0, 25.0],
            ),
            SolverSettings {
                substeps: 5,
                iterations: 10,
            },
        ),
        EnvId::TissueManipulation => (
            ControlLimits::Cartesian {
                workspace: Aabb {
                    min: [-60.0, 20.0, 10.0],
                    max: [60.0, 130.0, 110.0],
                },
                velocity_limits: [15.0, 15.0, 15.0],
            },
            SolverSettings {
                substeps: 4,
                iterations: 10,
            },
        ),
        EnvId::RopeCutting => (
            tpsd_limits(
                [-45.0, -45.0, -180.0, 0.0],
                [45.0, 45.0, 180.0, 250.0],
                [-80.0, -60.0, 0.0],
                [80.0, 60.0, 200.0],
                [15.0, 15.0, 30.0, 25.0],
            ),
            SolverSettings {
                substeps: 4,
                iterations: 10,
            },
        ),
        EnvId::ThreadInHole => (
            tpsd_limits(
                [-45.0, -45.0, -180.0, 0.0],
                [45.0, 45.0, 180.0, 250.0],
                [-80.0, -80.0, 5.0],
                [80.0, 80.0, 200.0],
                [10.0, 10.0, 20.0, 15.0],
            ),
            SolverSettings {
                substeps: 2,
                iterations: 10,
            },
        ),
    };
    EnvConfig {
        env,
        observation_type: ObservationType::State,
        image_resolution: DEFAULT_RESOLUTION,
        action_mode: ActionMode::Continuous,
        discrete_step_size: 0.5,
        limits,
        reward_spec: default_reward_spec(env),
        sim: params.default_sim(),
        solver,
        camera: CameraSettings::default(),
        params,
    }
}

/// Builds an environment. The config must belong to `id`.
pub fn make_env(id: EnvId, config: EnvConfig) -> Result<Environment, EnvError> {
    if config.env != id {
        return Err(EnvError::InvalidConfig(format!(
            "config is for '{}', not '{id}'",
            config.env
        )));
    }
    config.validate()?;
    let task: Box<dyn Task> = match &config.params {
        EnvParams::Reach(_) => Box::new(ReachEnv::new(&config)?),
        EnvParams::DeflectSpheres(_) => Box::new(DeflectSpheresEnv::new(&config)?),
        EnvParams::TissueManipulation(_) => Box::new(TissueManipulationEnv::new(&config)?),
        EnvParams::RopeCutting(_) => Box::new(RopeCuttingEnv::new(&config)?),
        EnvParams::ThreadInHole(_) => Box::new(ThreadInHoleEnv::new(&config)?),
    };
    Ok(Environment::from_task(config, task))
}

/// Builds an environment from its string id and default config.
pub fn make_env_by_name(name: &str) -> Result<Environment, EnvError> {
    let id: EnvId = name.parse()?;
    make_env(id, default_config(id))
}

/// Greedy expert action for the current state of `env`.
pub fn scripted_expert(env: &Environment) -> Result<Vec<f64>, EnvError> {
    env.scripted_expert()
}

impl From<SoftBodyError> for EnvError {
    fn from(e: SoftBodyError) -> Self {
        match e {
            SoftBodyError::UnstableSimulation { .. } => EnvError::UnstableSimulation(e.to_string()),
            other => EnvError::InvalidConfig(other.to_string()),
        }
    }
}

/// A pivotized instrument: RCM frame, TPSD state and limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    pub rcm: RcmFrame,
    pub ptsd: PtsdState,
    pub limits: InstrumentLimits,
    pub radius: f64,
    /// Length of the collision capsule measured back from the tip.
    pub shaft_length: f64,
}

impl Instrument {
    pub fn pose(&self) -> Pose {
        ptsd_to_pose(&self.ptsd, &self.rcm)
    }

    pub fn tip(&self) -> Vec3 {
        self.pose().position
    }

    pub fn capsule(&self) -> ToolCapsule {
        let pose = self.pose();
        let back = self.shaft_length.min(self.ptsd.depth.max(1e-3));
        ToolCapsule::new(pose.position - pose.z_axis() * back, pose.position, self.radius)
    }

    pub fn apply(&mut self, action: &[f64], dt: f64) -> Result<LimitFlags, EnvError> {
        let a = [action[0], action[1], action[2], action[3]];
        let (next, flags) = clamp_action(&self.ptsd, &a, &self.limits, &self.rcm, dt)?;
        self.ptsd = next;
        Ok(flags)
    }

    /// Pose (7) followed by TPSD state (4).
    pub fn state(&self) -> [f64; 11] {
        let mut out = [0.0; 11];
        out[..7].copy_from_slice(&self.pose().to_array());
        out[7..].copy_from_slice(&self.ptsd.to_array());
        out
    }

    pub fn shape(&self) -> Shape {
        let c = self.capsule();
        Shape::Capsule {
            a: c.endpoint_a,
            b: c.endpoint_b,
            radius: c.radius,
        }
    }
}

/// Uniform sample in the box `[min, max]`.
pub(crate) fn sample_in_box(rng: &mut ChaCha8Rng, min: [f64; 3], max: [f64; 3]) -> Vec3 {
    Vec3::new(
        rng.gen_range(min[0]..=max[0]),
        rng.gen_range(min[1]..=max[1]),
        rng.gen_range(min[2]..=max[2]),
    )
}

/// Evenly spaced sample indices into a chain of `n` particles.
pub(crate) fn chain_sample_indices(n: usize, count: usize, include_ends: bool) -> Vec<usize> {
    if include_ends {
        if count == 1 {
            return vec![0];
        }
        (0..count)
            .map(|m| ((m * (n - 1)) as f64 / (count - 1) as f64).round() as usize)
            .collect()
    } else {
        (0..count)
            .map(|m| (((m + 1) * (n - 1)) as f64 / (count + 1) as f64).round() as usize)
            .collect()
    }
}

pub(crate) fn require(cond: bool, message: &str) -> Result<(), EnvError> {
    if cond {
        Ok(())
    } else {
        Err(EnvError::InvalidConfig(message.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_ids_round_trip() {
        for id in EnvId::ALL {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{id}\""));
        }
        assert_eq!("bogus".parse::<EnvId>(), Err(EnvError::UnknownEnv("bogus".into())));
    }

    #[test]
    fn defaults_validate() {
        for id in EnvId::ALL {
            default_config(id).validate().unwrap();
        }
    }

    #[test]
    fn chain_samples() {
        assert_eq!(chain_sample_indices(12, 3, false), vec![3, 6, 8]);
        assert_eq!(chain_sample_indices(11, 4, true), vec![0, 3, 7, 10]);
    }
}
