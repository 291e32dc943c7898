//! Environment lifecycle (reset / step), frame skipping, time limits,
//! action handling and the weighted-feature reward engine.

use std::any::Any;
use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::envs::{EnvId, EnvParams};
use crate::kinematics::{Aabb, InstrumentLimits, KinematicsError};
use crate::sensors::{render, CameraModel, CameraSettings, FrameBuffer, Scene};

/// Simulated time between observations for every shipped default, seconds.
pub const OBSERVATION_PERIOD: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(
        "unknown environment '{0}' (valid: reach, deflect_spheres, tissue_manipulation, rope_cutting, thread_in_hole)"
    )]
    UnknownEnv(String),
    #[error("environment has not been reset")]
    NotReset,
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("action has {got} components, expected {expected}")]
    ActionShapeMismatch { expected: usize, got: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("reward feature '{0}' missing from features")]
    MissingFeature(String),
    #[error("discrete action index {index} out of range (0..{count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("unstable simulation: {0}")]
    UnstableSimulation(String),
    #[error("unsupported environment for this operation: {0}")]
    UnsupportedEnv(String),
}

impl From<KinematicsError> for EnvError {
    fn from(e: KinematicsError) -> Self {
        match e {
            KinematicsError::InvalidAction(m) => EnvError::InvalidAction(m),
            other => EnvError::InvalidAction(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationType {
    State,
    Rgb,
    Rgbd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    /// Physics time step in seconds.
    pub delta_t_s: f64,
    /// Physics steps per environment step.
    pub frame_skip: u32,
    /// Max environment steps per episode.
    pub time_limit: u64,
}

impl SimParams {
    pub const fn new(delta_t_s: f64, frame_skip: u32, time_limit: u64) -> Self {
        Self {
            delta_t_s,
            frame_skip,
            time_limit,
        }
    }

    pub fn observation_period(&self) -> f64 {
        self.delta_t_s * self.frame_skip as f64
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.delta_t_s > 0.0) || !self.delta_t_s.is_finite() {
            return Err(EnvError::InvalidConfig("sim.delta_t_s must be positive".into()));
        }
        if self.frame_skip < 1 {
            return Err(EnvError::InvalidConfig("sim.frame_skip must be >= 1".into()));
        }
        if self.time_limit < 1 {
            return Err(EnvError::InvalidConfig("sim.time_limit must be >= 1".into()));
        }
        Ok(())
    }
}

/// Soft-body solver settings, recorded with every config for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub substeps: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardTerm {
    pub feature: String,
    pub weight: f64,
}

/// Ordered `(feature, weight)` pairs; reward is their dot product with the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardSpec(pub Vec<RewardTerm>);

impl RewardSpec {
    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Self(
            pairs
                .iter()
                .map(|(f, w)| RewardTerm {
                    feature: (*f).to_string(),
                    weight: *w,
                })
                .collect(),
        )
    }

    pub fn weight(&self, feature: &str) -> Option<f64> {
        self.0.iter().find(|t| t.feature == feature).map(|t| t.weight)
    }

    pub fn validate(&self, available: &[&str]) -> Result<(), EnvError> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.0 {
            if !seen.insert(t.feature.as_str()) {
                return Err(EnvError::InvalidConfig(format!(
                    "duplicate reward feature '{}'",
                    t.feature
                )));
            }
            if !t.weight.is_finite() {
                return Err(EnvError::InvalidConfig(format!(
                    "weight of '{}' is not finite",
                    t.feature
                )));
            }
            if !available.contains(&t.feature.as_str()) {
                return Err(EnvError::InvalidConfig(format!(
                    "unknown reward feature '{}' (available: {})",
                    t.feature,
                    available.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Instrument limits: task-space control or pivotized TPSD control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlLimits {
    Cartesian {
        workspace: Aabb,
        /// mm/s per axis
        velocity_limits: [f64; 3],
    },
    Tpsd(InstrumentLimits),
}

impl ControlLimits {
    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            ControlLimits::Cartesian {
                workspace,
                velocity_limits,
            } => {
                if !workspace.is_valid() {
                    return Err(EnvError::InvalidConfig("workspace has negative extent".into()));
                }
                if velocity_limits.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(EnvError::InvalidConfig("velocity limits must be non-negative".into()));
                }
                Ok(())
            }
            ControlLimits::Tpsd(l) => l.validate().map_err(EnvError::InvalidConfig),
        }
    }

    pub fn tpsd(&self) -> Option<&InstrumentLimits> {
        match self {
            ControlLimits::Tpsd(l) => Some(l),
            _ => None,
        }
    }

    pub fn cartesian(&self) -> Option<(&Aabb, &[f64; 3])> {
        match self {
            ControlLimits::Cartesian {
                workspace,
                velocity_limits,
            } => Some((workspace, velocity_limits)),
            _ => None,
        }
    }
}

/// Full environment configuration. See `docs/config.md` for the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub env: EnvId,
    pub observation_type: ObservationType,
    pub image_resolution: u32,
    pub action_mode: ActionMode,
    pub discrete_step_size: f64,
    pub limits: ControlLimits,
    pub reward_spec: RewardSpec,
    pub sim: SimParams,
    pub solver: SolverSettings,
    pub camera: CameraSettings,
    pub params: EnvParams,
}

impl EnvConfig {
    pub fn default_for(env: EnvId) -> Self {
        crate::envs::default_config(env)
    }

    /// Overlays a (partial) JSON object onto the defaults of `env`.
    ///
    /// Unknown keys are rejected. When `sim` is not overridden it is derived
    /// from the final env parameters (time limits depend on them).
    pub fn resolve(env: EnvId, overrides: &Value) -> Result<Self, EnvError> {
        let base_cfg = Self::default_for(env);
        if overrides.is_null() {
            return Ok(base_cfg);
        }
        let Value::Object(map) = overrides else {
            return Err(EnvError::InvalidConfig("config must be a JSON object".into()));
        };
        if let Some(v) = map.get("env") {
            let requested: EnvId =
                serde_json::from_value(v.clone()).map_err(|_| EnvError::InvalidConfig(format!("bad env id {v}")))?;
            if requested != env {
                return Err(EnvError::InvalidConfig(format!(
                    "config is for '{requested}', not '{env}'"
                )));
            }
        }
        let mut base = serde_json::to_value(&base_cfg).expect("config serializes");
        merge_strict(&mut base, overrides, "")?;
        let mut cfg: EnvConfig = serde_json::from_value(base).map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        if !map.contains_key("sim") {
            cfg.sim = cfg.params.default_sim();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(env: EnvId, text: &str) -> Result<Self, EnvError> {
        let value: Value = serde_json::from_str(text).map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        Self::resolve(env, &value)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.sim.validate()?;
        self.limits.validate()?;
        if self.params.env_id() != self.env {
            return Err(EnvError::InvalidConfig("params do not match env".into()));
        }
        if self.image_resolution == 0 || self.image_resolution > 1024 {
            return Err(EnvError::InvalidConfig("image_resolution must lie in 1..=1024".into()));
        }
        if !(self.discrete_step_size > 0.0 && self.discrete_step_size <= 1.0) {
            return Err(EnvError::InvalidConfig("discrete_step_size must lie in (0, 1]".into()));
        }
        if self.solver.substeps == 0 || self.solver.iterations == 0 {
            return Err(EnvError::InvalidConfig(
                "solver substeps and iterations must be >= 1".into(),
            ));
        }
        let c = &self.camera;
        if !(c.near > 0.0 && c.near < c.far && c.fov_deg > 0.0 && c.fov_deg < 180.0) {
            return Err(EnvError::InvalidConfig(
                "camera requires 0 < near < far and fov in (0, 180)".into(),
            ));
        }
        self.params.validate()?;
        self.reward_spec.validate(self.params.feature_ids())?;
        Ok(())
    }
}

fn merge_strict(base: &mut Value, over: &Value, path: &str) -> Result<(), EnvError> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let sub = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match b.get_mut(k) {
                    Some(slot) => merge_strict(slot, v, &sub)?,
                    None => return Err(EnvError::InvalidConfig(format!("unknown key '{sub}'"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v.clone();
            Ok(())
        }
    }
}

/// `reward = Σ w_i ψ_i` in spec order, with the per-term breakdown.
pub fn compute_reward(
    features: &BTreeMap<String, f64>,
    spec: &RewardSpec,
) -> Result<(f64, Vec<(String, f64)>), EnvError> {
    let mut total = 0.0;
    let mut breakdown = Vec::with_capacity(spec.0.len());
    for term in &spec.0 {
        let value = features
            .get(&term.feature)
            .ok_or_else(|| EnvError::MissingFeature(term.feature.clone()))?;
        let contribution = term.weight * value;
        total += contribution;
        breakdown.push((term.feature.clone(), contribution));
    }
    Ok((total, breakdown))
}

/// Maps a discrete index to a continuous action.
///
/// Index 0 is the no-op; `2k + 1` and `2k + 2` are `+step` and `-step` on axis `k`.
pub fn discretize_action(index: usize, dims: usize, step_size: f64) -> Result<Vec<f64>, EnvError> {
    let count = 2 * dims + 1;
    if index >= count {
        return Err(EnvError::IndexOutOfRange { index, count });
    }
    let mut action = vec![0.0; dims];
    if index > 0 {
        let axis = (index - 1) / 2;
        action[axis] = if index % 2 == 1 { step_size } else { -step_size };
    }
    Ok(action)
}

/// Result of evaluating a task's features on the current world state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub features: BTreeMap<String, f64>,
    pub success: bool,
    pub failure: bool,
    pub state_limit_violated: bool,
    pub workspace_violated: bool,
}

impl Evaluation {
    pub fn set(&mut self, feature: &str, value: f64) {
        self.features.insert(feature.to_string(), value);
    }
}

/// Per-environment behavior driven by [`Environment`].
pub trait Task: Send {
    fn action_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// Rebuilds the world; all sampling must draw from `rng`.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<(), EnvError>;
    /// Applies one frame of a validated continuous action.
    fn apply_action(&mut self, action: &[f64], dt: f64) -> Result<(), EnvError>;
    /// Advances physics by one frame.
    fn simulate(&mut self, dt: f64) -> Result<(), EnvError>;
    /// Computes features once per environment step and advances task state.
    fn evaluate(&mut self, rng: &mut ChaCha8Rng) -> Evaluation;
    fn state_vector(&self) -> Vec<f64>;
    fn scene(&self) -> Scene;
    fn camera(&self) -> CameraModel;
    /// Greedy expert action, for tasks that have one.
    fn expert_action(&self) -> Option<Vec<f64>> {
        None
    }
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// An observation returned by `reset` and `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ObservationPayload", try_from = "ObservationPayload")]
pub enum Observation {
    State(Vec<f64>),
    /// H×W×3 bytes.
    Rgb {
        resolution: u32,
        data: Vec<u8>,
    },
    /// H×W×4 floats: RGB in `[0, 1]` and normalized depth.
    Rgbd {
        resolution: u32,
        data: Vec<f32>,
    },
}

impl Observation {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Observation::State(v) => vec![v.len()],
            Observation::Rgb { resolution, .. } => vec![*resolution as usize, *resolution as usize, 3],
            Observation::Rgbd { resolution, .. } => vec![*resolution as usize, *resolution as usize, 4],
        }
    }

    /// Little-endian byte image of the observation, for hashing and comparison.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Observation::State(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Observation::Rgb { data, .. } => data.clone(),
            Observation::Rgbd { data, .. } => data.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

/// Wire / file form of an [`Observation`]: state vectors inline, images as
/// base64 raw bytes with shape and encoding tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObservationPayload {
    State {
        values: Vec<f64>,
    },
    Image {
        shape: [usize; 3],
        encoding: String,
        data: String,
    },
}

impl From<Observation> for ObservationPayload {
    fn from(o: Observation) -> Self {
        match o {
            Observation::State(values) => ObservationPayload::State { values },
            Observation::Rgb { resolution, data } => ObservationPayload::Image {
                shape: [resolution as usize, resolution as usize, 3],
                encoding: "u8".into(),
                data: BASE64.encode(&data),
            },
            Observation::Rgbd { resolution, data } => {
                let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
                ObservationPayload::Image {
                    shape: [resolution as usize, resolution as usize, 4],
                    encoding: "f32le".into(),
                    data: BASE64.encode(bytes),
                }
            }
        }
    }
}

impl TryFrom<ObservationPayload> for Observation {
    type Error = String;

    fn try_from(p: ObservationPayload) -> Result<Self, String> {
        match p {
            ObservationPayload::State { values } => Ok(Observation::State(values)),
            ObservationPayload::Image { shape, encoding, data } => {
                let bytes = BASE64.decode(data.as_bytes()).map_err(|e| e.to_string())?;
                if shape[0] != shape[1] {
                    return Err("image observations are square".into());
                }
                let cells = shape[0] * shape[1] * shape[2];
                match (encoding.as_str(), shape[2]) {
                    ("u8", 3) if bytes.len() == cells => Ok(Observation::Rgb {
                        resolution: shape[0] as u32,
                        data: bytes,
                    }),
                    ("f32le", 4) if bytes.len() == cells * 4 => Ok(Observation::Rgbd {
                        resolution: shape[0] as u32,
                        data: bytes
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                            .collect(),
                    }),
                    _ => Err(format!(
                        "bad image payload: encoding {encoding}, shape {shape:?}, {} bytes",
                        bytes.len()
                    )),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Feature values ψ.
    pub features: BTreeMap<String, f64>,
    /// `w_i ψ_i` per reward term, in spec order.
    pub contributions: Vec<(String, f64)>,
    pub success: bool,
    pub failure: bool,
    pub state_limit_violated: bool,
    pub workspace_violated: bool,
    pub step: u64,
    pub sim_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// A task plus the shared Gym-style lifecycle.
pub struct Environment {
    config: EnvConfig,
    task: Box<dyn Task>,
    rng: ChaCha8Rng,
    seed: Option<u64>,
    steps: u64,
    sim_time: f64,
    done: bool,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("env", &self.config.env)
            .field("seed", &self.seed)
            .field("steps", &self.steps)
            .finish()
    }
}

impl Environment {
    pub fn from_task(config: EnvConfig, task: Box<dyn Task>) -> Self {
        Self {
            config,
            task,
            rng: ChaCha8Rng::seed_from_u64(0),
            seed: None,
            steps: 0,
            sim_time: 0.0,
            done: false,
        }
    }

    pub fn id(&self) -> EnvId {
        self.config.env
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn elapsed_steps(&self) -> u64 {
        self.steps
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Continuous action dimension of the task.
    pub fn action_dim(&self) -> usize {
        self.task.action_dim()
    }

    /// Number of discrete actions in discrete mode.
    pub fn discrete_action_count(&self) -> usize {
        2 * self.task.action_dim() + 1
    }

    /// Length the `step` action slice must have.
    pub fn action_len(&self) -> usize {
        match self.config.action_mode {
            ActionMode::Continuous => self.task.action_dim(),
            ActionMode::Discrete => 1,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.task.state_dim()
    }

    pub fn observation_shape(&self) -> Vec<usize> {
        let r = self.config.image_resolution as usize;
        match self.config.observation_type {
            ObservationType::State => vec![self.task.state_dim()],
            ObservationType::Rgb => vec![r, r, 3],
            ObservationType::Rgbd => vec![r, r, 4],
        }
    }

    pub fn task(&self) -> &dyn Task {
        self.task.as_ref()
    }

    pub fn task_as<T: 'static>(&self) -> Option<&T> {
        self.task.as_any().downcast_ref()
    }

    pub fn task_as_mut<T: 'static>(&mut self) -> Option<&mut T> {
        self.task.as_any_mut().downcast_mut()
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.task.reset(&mut self.rng)?;
        self.seed = Some(seed);
        self.steps = 0;
        self.sim_time = 0.0;
        self.done = false;
        Ok(self.observe())
    }

    fn continuous_action(&self, action: &[f64]) -> Result<Vec<f64>, EnvError> {
        let dims = self.task.action_dim();
        match self.config.action_mode {
            ActionMode::Continuous => {
                if action.len() != dims {
                    return Err(EnvError::ActionShapeMismatch {
                        expected: dims,
                        got: action.len(),
                    });
                }
                crate::kinematics::check_action(action)?;
                Ok(action.to_vec())
            }
            ActionMode::Discrete => {
                if action.len() != 1 {
                    return Err(EnvError::ActionShapeMismatch {
                        expected: 1,
                        got: action.len(),
                    });
                }
                let raw = action[0];
                if !(raw >= 0.0) || raw.fract() != 0.0 || !raw.is_finite() {
                    return Err(EnvError::InvalidAction(format!(
                        "discrete index {raw} is not a non-negative integer"
                    )));
                }
                discretize_action(raw as usize, dims, self.config.discrete_step_size)
            }
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.seed.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let action = self.continuous_action(action)?;
        let dt = self.config.sim.delta_t_s;
        for _ in 0..self.config.sim.frame_skip {
            self.task.apply_action(&action, dt)?;
            self.task.simulate(dt)?;
            self.sim_time += dt;
        }
        let eval = self.task.evaluate(&mut self.rng);
        self.steps += 1;
        let (reward, contributions) = compute_reward(&eval.features, &self.config.reward_spec)?;
        let terminated = eval.success || eval.failure;
        let truncated = !terminated && self.steps >= self.config.sim.time_limit;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            terminated,
            truncated,
            info: StepInfo {
                features: eval.features,
                contributions,
                success: eval.success,
                failure: eval.failure,
                state_limit_violated: eval.state_limit_violated,
                workspace_violated: eval.workspace_violated,
                step: self.steps,
                sim_time: self.sim_time,
            },
        })
    }

    pub fn camera(&self) -> CameraModel {
        self.task.camera()
    }

    pub fn render(&self) -> FrameBuffer {
        render(&self.task.scene(), &self.task.camera())
    }

    pub fn state_vector(&self) -> Vec<f64> {
        self.task.state_vector()
    }

    pub fn observe(&self) -> Observation {
        match self.config.observation_type {
            ObservationType::State => Observation::State(self.task.state_vector()),
            ObservationType::Rgb => {
                let frame = self.render();
                Observation::Rgb {
                    resolution: frame.resolution,
                    data: frame.rgb,
                }
            }
            ObservationType::Rgbd => {
                let camera = self.task.camera();
                let frame = render(&self.task.scene(), &camera);
                let depth = frame.normalized_depth(&camera);
                let mut data = Vec::with_capacity(depth.len() * 4);
                for (px, d) in frame.rgb.chunks_exact(3).zip(depth) {
                    data.extend(px.iter().map(|&c| c as f32 / 255.0));
                    data.push(d);
                }
                Observation::Rgbd {
                    resolution: frame.resolution,
                    data,
                }
            }
        }
    }

    /// Greedy expert action for Reach and DeflectSpheres.
    pub fn scripted_expert(&self) -> Result<Vec<f64>, EnvError> {
        if self.seed.is_none() {
            return Err(EnvError::NotReset);
        }
        self.task
            .expert_action()
            .ok_or_else(|| EnvError::UnsupportedEnv(self.config.env.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_features_zero_reward() {
        let spec = RewardSpec::from_pairs(&[("a", -1.0), ("b", 3.0)]);
        let f: BTreeMap<String, f64> = [("a".into(), 0.0), ("b".into(), 0.0)].into();
        assert_eq!(compute_reward(&f, &spec).unwrap().0, 0.0);
    }

    #[test]
    fn reach_weighted_sum_by_hand() {
        // -1.0 * 0.05 + (-10.0) * (-0.01) + 100 * 0 = 0.05
        let spec = RewardSpec::from_pairs(&[
            ("distance_to_target", -1.0),
            ("delta_distance_to_target", -10.0),
            ("successful_task", 100.0),
        ]);
        let f: BTreeMap<String, f64> = [
            ("distance_to_target".into(), 0.05),
            ("delta_distance_to_target".into(), -0.01),
            ("successful_task".into(), 0.0),
        ]
        .into();
        let (r, breakdown) = compute_reward(&f, &spec).unwrap();
        assert!((r - 0.05).abs() < 1e-15);
        assert_eq!(breakdown.len(), 3);
        assert_eq!(breakdown[0].0, "distance_to_target");
    }

    #[test]
    fn missing_feature_named() {
        let spec = RewardSpec::from_pairs(&[("gone", 1.0)]);
        assert_eq!(
            compute_reward(&BTreeMap::new(), &spec),
            Err(EnvError::MissingFeature("gone".into()))
        );
    }

    #[test]
    fn discrete_actions() {
        assert_eq!(discretize_action(0, 4, 0.3).unwrap(), vec![0.0; 4]);
        assert_eq!(discretize_action(1, 4, 0.3).unwrap(), vec![0.3, 0.0, 0.0, 0.0]);
        assert_eq!(discretize_action(8, 4, 0.3).unwrap(), vec![0.0, 0.0, 0.0, -0.3]);
        assert_eq!(
            discretize_action(9, 4, 0.3),
            Err(EnvError::IndexOutOfRange { index: 9, count: 9 })
        );
    }

    #[test]
    fn discrete_actions_are_a_bijection() {
        // enumerate: each nonzero action is a distinct signed unit axis
        let all: Vec<Vec<f64>> = (0..9).map(|i| discretize_action(i, 4, 0.3).unwrap()).collect();
        for (i, a) in all.iter().enumerate() {
            let nonzero = a.iter().filter(|v| **v != 0.0).count();
            assert_eq!(nonzero, usize::from(i != 0));
            for b in &all[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn observation_payload_round_trip() {
        let rgb = Observation::Rgb {
            resolution: 2,
            data: (0..12).collect(),
        };
        let json = serde_json::to_string(&rgb).unwrap();
        assert!(json.contains("\"encoding\":\"u8\""));
        assert_eq!(serde_json::from_str::<Observation>(&json).unwrap(), rgb);
        let rgbd = Observation::Rgbd {
            resolution: 1,
            data: vec![0.1, 0.2, 0.3, 0.9],
        };
        let json = serde_json::to_string(&rgbd).unwrap();
        assert_eq!(serde_json::from_str::<Observation>(&json).unwrap(), rgbd);
        let bad = r#"{"kind":"image","shape":[2,2,3],"encoding":"u8","data":"AAAA"}"#;
        assert!(serde_json::from_str::<Observation>(bad).is_err());
    }
}
