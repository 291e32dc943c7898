//! Deflect the highlighted sphere on a flexible stalk with a pivotized instrument.

use std::any::Any;
use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require, EnvParams, Instrument};
use crate::envcore::{EnvConfig, EnvError, Evaluation, Task};
use crate::kinematics::{pose_to_ptsd, wrap_degrees, InstrumentLimits, LimitFlags, PtsdState, RcmFrame, Vec3};
use crate::sensors::{CameraModel, CameraSettings, Scene, Shape};
use crate::softbody::{segment_segment_distance, Particle, SoftWorld};

pub const FEATURES: &[&str] = &[
    "workspace_violation",
    "state_limit_violation",
    "instrument_collision",
    "distance_to_active_sphere",
    "delta_distance_to_active_sphere",
    "inactive_sphere_deflection",
    "active_sphere_deflection",
    "delta_active_sphere_deflection",
    "done_with_active_sphere",
    "successful_task",
];

const INSTRUMENT_RADIUS: f64 = 2.0;
const STALK_PARTICLE_MASS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeflectSpheresParams {
    pub num_spheres: usize,
    pub deflections_to_win: usize,
    /// Minimum distance between stalk bases, mm.
    pub min_sphere_spacing: f64,
    /// Bending stiffness of the stalks in `(0, 1]`.
    pub stalk_stiffness: f64,
    pub stalk_height: f64,
    pub sphere_radius: f64,
    /// Spheres are placed in `[-e, e]²`, mm.
    pub board_half_extent: f64,
    pub bimanual: bool,
    /// Tip displacement that completes a sphere, mm.
    pub min_deflection: f64,
    /// Uniform noise on reset tilt and pan, degrees.
    pub instrument_pose_noise: f64,
    pub allow_shaft_deflection: bool,
    /// Completed spheres may become active again.
    pub sample_with_replacement: bool,
    pub camera_eye: [f64; 3],
    pub camera_target: [f64; 3],
}

impl Default for DeflectSpheresParams {
    fn default() -> Self {
        Self {
            num_spheres: 5,
            deflections_to_win: 1,
            min_sphere_spacing: 25.0,
            stalk_stiffness: 0.5,
            stalk_height: 30.0,
            sphere_radius: 5.0,
            board_half_extent: 50.0,
            bimanual: false,
            min_deflection: 8.0,
            instrument_pose_noise: 0.0,
            allow_shaft_deflection: true,
            sample_with_replacement: false,
            camera_eye: [0.0, -190.0, 210.0],
            camera_target: [0.0, 0.0, 20.0],
        }
    }
}

impl DeflectSpheresParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        require(self.num_spheres >= 1, "deflect_spheres.num_spheres must be >= 1")?;
        require(
            self.deflections_to_win >= 1,
            "deflect_spheres.deflections_to_win must be >= 1",
        )?;
        require(
            self.sample_with_replacement || self.deflections_to_win <= self.num_spheres,
            "deflect_spheres.deflections_to_win must not exceed num_spheres",
        )?;
        require(
            self.sample_with_replacement || self.num_spheres >= 1,
            "deflect_spheres needs spheres",
        )?;
        require(
            self.min_sphere_spacing >= 0.0,
            "deflect_spheres.min_sphere_spacing must be >= 0",
        )?;
        require(
            self.stalk_stiffness > 0.0 && self.stalk_stiffness <= 1.0,
            "deflect_spheres.stalk_stiffness must lie in (0, 1]",
        )?;
        require(self.stalk_height > 0.0, "deflect_spheres.stalk_height must be > 0")?;
        require(self.sphere_radius > 0.0, "deflect_spheres.sphere_radius must be > 0")?;
        require(
            self.board_half_extent > 0.0,
            "deflect_spheres.board_half_extent must be > 0",
        )?;
        require(self.min_deflection > 0.0, "deflect_spheres.min_deflection must be > 0")?;
        require(
            self.instrument_pose_noise >= 0.0,
            "deflect_spheres.instrument_pose_noise must be >= 0",
        )
    }
}

/// One stalk: body particle range and its sphere (tip) particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stalk {
    pub base: Vec3,
    pub tip_particle: usize,
    pub rest_tip: Vec3,
}

#[derive(Debug, Clone)]
pub struct DeflectSpheresEnv {
    params: DeflectSpheresParams,
    limits: InstrumentLimits,
    camera_settings: CameraSettings,
    resolution: u32,
    substeps: usize,
    iterations: usize,
    observation_period: f64,
    world: SoftWorld,
    stalks: Vec<Stalk>,
    instruments: Vec<Instrument>,
    active_sphere: usize,
    active_instrument: usize,
    completed: BTreeSet<usize>,
    completions: usize,
    touched_active: bool,
    frame_contacts: BTreeSet<(usize, usize)>,
    flags: Vec<LimitFlags>,
    previous_distance: f64,
    previous_active_deflection: f64,
}

impl DeflectSpheresEnv {
    pub fn new(config: &EnvConfig) -> Result<Self, EnvError> {
        let EnvParams::DeflectSpheres(params) = &config.params else {
            return Err(EnvError::InvalidConfig("deflect_spheres requires its params".into()));
        };
        let limits = *config
            .limits
            .tpsd()
            .ok_or_else(|| EnvError::InvalidConfig("deflect_spheres requires tpsd limits".into()))?;
        Ok(Self {
            params: params.clone(),
            limits,
            camera_settings: config.camera,
            resolution: config.image_resolution,
            substeps: config.solver.substeps,
            iterations: config.solver.iterations,
            observation_period: config.sim.observation_period(),
            world: SoftWorld::new(),
            stalks: Vec::new(),
            instruments: Vec::new(),
            active_sphere: 0,
            active_instrument: 0,
            completed: BTreeSet::new(),
            completions: 0,
            touched_active: false,
            frame_contacts: BTreeSet::new(),
            flags: Vec::new(),
            previous_distance: 0.0,
            previous_active_deflection: 0.0,
        })
    }

    pub fn params(&self) -> &DeflectSpheresParams {
        &self.params
    }

    pub fn stalks(&self) -> &[Stalk] {
        &self.stalks
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    pub fn world(&self) -> &SoftWorld {
        &self.world
    }

    pub fn active_sphere(&self) -> usize {
        self.active_sphere
    }

    pub fn active_instrument(&self) -> usize {
        self.active_instrument
    }

    pub fn completions(&self) -> usize {
        self.completions
    }

    pub fn sphere_position(&self, k: usize) -> Vec3 {
        self.world.particles[self.stalks[k].tip_particle].position
    }

    pub fn deflection(&self, k: usize) -> f64 {
        (self.sphere_position(k) - self.stalks[k].rest_tip).norm()
    }

    /// Static capsule proxies of the stalks and spheres at rest, for planning.
    pub fn obstacle_capsules(&self) -> Vec<(Vec3, Vec3, f64)> {
        self.stalks
            .iter()
            .map(|s| (s.base, s.rest_tip, self.params.sphere_radius))
            .collect()
    }

    fn rcm_frames(&self) -> Vec<RcmFrame> {
        if self.params.bimanual {
            vec![
                RcmFrame {
                    position: [-50.0, 0.0, 150.0],
                    orientation: [180.0, 0.0, 0.0],
                },
                RcmFrame {
                    position: [50.0, 0.0, 150.0],
                    orientation: [180.0, 0.0, 0.0],
                },
            ]
        } else {
            vec![RcmFrame {
                position: [0.0, 0.0, 150.0],
                orientation: [180.0, 0.0, 0.0],
            }]
        }
    }

    fn build_world(&mut self, bases: &[Vec3]) -> Result<(), EnvError> {
        let p = &self.params;
        let mut world = SoftWorld::new();
        world.gravity = Vec3::zeros();
        world.damping = 5.0;
        let mut stalks = Vec::with_capacity(bases.len());
        for (k, base) in bases.iter().enumerate() {
            let anchor = world.add_particle(Particle::new(base - Vec3::new(0.0, 0.0, p.stalk_height / 3.0), 0.0));
            let start = world.particles.len();
            for n in 0..4 {
                let position = base + Vec3::new(0.0, 0.0, p.stalk_height * n as f64 / 3.0);
                let inv = if n == 0 { 0.0 } else { 1.0 / STALK_PARTICLE_MASS };
                let radius = if n == 3 { p.sphere_radius } else { 1.0 };
                world.add_particle(Particle::new(position, inv).with_radius(radius));
            }
            for n in start..start + 3 {
                world.add_distance(n, n + 1, 1.0)?;
            }
            world.add_bending(anchor, start, start + 1, p.stalk_stiffness)?;
            world.add_bending(start, start + 1, start + 2, p.stalk_stiffness)?;
            world.add_bending(start + 1, start + 2, start + 3, p.stalk_stiffness)?;
            world.add_body(&format!("stalk {k}"), start..start + 4, false)?;
            stalks.push(Stalk {
                base: *base,
                tip_particle: start + 3,
                rest_tip: world.particles[start + 3].position,
            });
        }
        self.world = world;
        self.stalks = stalks;
        Ok(())
    }

    fn choose_active(&mut self, rng: &mut ChaCha8Rng) {
        let candidates: Vec<usize> = (0..self.stalks.len())
            .filter(|&k| {
                if self.params.sample_with_replacement {
                    k != self.active_sphere || self.stalks.len() == 1
                } else {
                    !self.completed.contains(&k)
                }
            })
            .collect();
        if let Some(&k) = candidates.get(rng.gen_range(0..candidates.len().max(1))) {
            self.active_sphere = k;
        }
        self.active_instrument = if self.params.bimanual { rng.gen_range(0..2) } else { 0 };
        self.touched_active = false;
        self.previous_distance = self.active_distance();
        self.previous_active_deflection = self.deflection(self.active_sphere);
    }

    fn active_distance(&self) -> f64 {
        (self.instruments[self.active_instrument].tip() - self.sphere_position(self.active_sphere)).norm()
    }

    fn tools(&self) -> Vec<crate::softbody::ToolCapsule> {
        self.instruments.iter().map(Instrument::capsule).collect()
    }

    fn counts_as_touch(&self, particle: usize, tool: usize) -> bool {
        if self.params.allow_shaft_deflection {
            return true;
        }
        let tip = self.instruments[tool].tip();
        (self.world.particles[particle].position - tip).norm() <= self.params.sphere_radius + INSTRUMENT_RADIUS + 0.5
    }

    /// Subgoal for the expert: first beside the sphere, then through it.
    fn expert_goal(&self) -> Vec3 {
        let inst = &self.instruments[self.active_instrument];
        let stalk = &self.stalks[self.active_sphere];
        let rest = stalk.rest_tip;
        let rcm = inst.rcm.position();
        let mut dir = Vec3::new(rest.x - rcm.x, rest.y - rcm.y, 0.0);
        if dir.norm() < 1e-3 {
            dir = Vec3::x();
        }
        let dir = dir.normalize();
        let standoff = self.params.sphere_radius + INSTRUMENT_RADIUS + 5.0;
        let pre = rest - dir * standoff;
        let push = rest + dir * (self.params.min_deflection + 6.0);
        let tip = inst.tip();
        let rel = tip - rest;
        let along = rel.x * dir.x + rel.y * dir.y;
        let lateral = (Vec3::new(rel.x, rel.y, 0.0) - dir * along).norm();
        let engaged = (tip - pre).norm() < 3.0
            || (rel.z.abs() < 6.0 && along >= -standoff - 1.0 && lateral < self.params.sphere_radius);
        if engaged {
            push
        } else {
            pre
        }
    }
}

impl Task for DeflectSpheresEnv {
    fn action_dim(&self) -> usize {
        if self.params.bimanual {
            8
        } else {
            4
        }
    }

    fn state_dim(&self) -> usize {
        let n = self.params.num_spheres;
        if self.params.bimanual {
            3 * n + 3 + 11 + 11 + 1
        } else {
            3 * n + 3 + 11
        }
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<(), EnvError> {
        let e = self.params.board_half_extent;
        let mut bases: Vec<Vec3> = Vec::with_capacity(self.params.num_spheres);
        let mut attempts = 0;
        while bases.len() < self.params.num_spheres {
            let candidate = Vec3::new(rng.gen_range(-e..=e), rng.gen_range(-e..=e), 0.0);
            if bases
                .iter()
                .all(|b| (b - candidate).norm() >= self.params.min_sphere_spacing)
            {
                bases.push(candidate);
            }
            attempts += 1;
            if attempts > 10_000 {
                return Err(EnvError::InvalidConfig(
                    "deflect_spheres: spheres do not fit on the board at the requested spacing".into(),
                ));
            }
        }
        self.build_world(&bases)?;
        let noise = self.params.instrument_pose_noise;
        self.instruments = self
            .rcm_frames()
            .into_iter()
            .map(|rcm| {
                let mut sample = || {
                    if noise > 0.0 {
                        rng.gen_range(-noise..=noise)
                    } else {
                        0.0
                    }
                };
                let tilt = sample();
                let pan = sample();
                let ptsd = PtsdState::new(tilt, pan, 0.0, 70.0);
                Instrument {
                    rcm,
                    ptsd,
                    limits: self.limits,
                    radius: INSTRUMENT_RADIUS,
                    shaft_length: 150.0,
                }
            })
            .collect();
        self.flags = vec![LimitFlags::default(); self.instruments.len()];
        self.completed.clear();
        self.completions = 0;
        self.frame_contacts.clear();
        self.active_sphere = usize::MAX;
        self.choose_active(rng);
        Ok(())
    }

    fn apply_action(&mut self, action: &[f64], dt: f64) -> Result<(), EnvError> {
        for (i, inst) in self.instruments.iter_mut().enumerate() {
            let flags = inst.apply(&action[4 * i..4 * i + 4], dt)?;
            self.flags[i].merge(flags);
        }
        Ok(())
    }

    fn simulate(&mut self, dt: f64) -> Result<(), EnvError> {
        let tools = self.tools();
        self.world.step(&tools, dt, self.substeps, self.iterations)?;
        let contacts: Vec<(usize, usize)> = self.world.contacts.iter().copied().collect();
        for (particle, tool) in contacts {
            if self.counts_as_touch(particle, tool) {
                self.frame_contacts.insert((particle, tool));
            }
        }
        Ok(())
    }

    fn evaluate(&mut self, rng: &mut ChaCha8Rng) -> Evaluation {
        let active_tip = self.stalks[self.active_sphere].tip_particle;
        if self.frame_contacts.contains(&(active_tip, self.active_instrument)) {
            self.touched_active = true;
        }
        self.frame_contacts.clear();

        let distance = self.active_distance();
        let active_deflection = self.deflection(self.active_sphere);
        let inactive: f64 = (0..self.stalks.len())
            .filter(|&k| k != self.active_sphere)
            .map(|k| self.deflection(k))
            .sum();
        let collision = if self.instruments.len() == 2 {
            let (a, b) = (self.instruments[0].capsule(), self.instruments[1].capsule());
            let d = segment_segment_distance(&a.endpoint_a, &a.endpoint_b, &b.endpoint_a, &b.endpoint_b);
            d < a.radius + b.radius
        } else {
            false
        };
        let done = self.touched_active && active_deflection >= self.params.min_deflection;

        let mut eval = Evaluation::default();
        let workspace: usize = self.flags.iter().filter(|f| f.workspace_violated).count();
        let state: usize = self.flags.iter().filter(|f| f.state_limit_violated).count();
        eval.workspace_violated = workspace > 0;
        eval.state_limit_violated = state > 0;
        eval.set("workspace_violation", workspace as f64);
        eval.set("state_limit_violation", state as f64);
        eval.set("instrument_collision", f64::from(u8::from(collision)));
        eval.set("distance_to_active_sphere", distance);
        eval.set("delta_distance_to_active_sphere", distance - self.previous_distance);
        eval.set("inactive_sphere_deflection", inactive);
        eval.set("active_sphere_deflection", active_deflection);
        eval.set(
            "delta_active_sphere_deflection",
            active_deflection - self.previous_active_deflection,
        );
        eval.set("done_with_active_sphere", f64::from(u8::from(done)));
        for f in &mut self.flags {
            *f = LimitFlags::default();
        }
        self.previous_distance = distance;
        self.previous_active_deflection = active_deflection;

        if done {
            self.completions += 1;
            self.completed.insert(self.active_sphere);
            if self.completions >= self.params.deflections_to_win {
                eval.success = true;
            } else {
                self.choose_active(rng);
            }
        }
        eval.set("successful_task", f64::from(u8::from(eval.success)));
        eval
    }

    fn state_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.state_dim());
        for k in 0..self.stalks.len() {
            v.extend(self.sphere_position(k).iter());
        }
        v.extend(self.sphere_position(self.active_sphere).iter());
        for inst in &self.instruments {
            v.extend(inst.state());
        }
        if self.params.bimanual {
            v.push(self.active_instrument as f64);
        }
        v
    }

    fn scene(&self) -> Scene {
        let mut scene = Scene::default();
        let e = self.params.board_half_extent + 20.0;
        scene.push_floor(1, [120, 110, 100], [-e, -e], [e, e], -0.5);
        let instrument_colors = [[60, 120, 230], [230, 150, 40]];
        for (k, stalk) in self.stalks.iter().enumerate() {
            let id = 10 + k as u32;
            let first = stalk.tip_particle - 3;
            for n in first..stalk.tip_particle {
                scene.push(
                    id,
                    [200, 200, 190],
                    Shape::Capsule {
                        a: self.world.particles[n].position,
                        b: self.world.particles[n + 1].position,
                        radius: 1.0,
                    },
                );
            }
            let color = if k == self.active_sphere {
                instrument_colors[self.active_instrument]
            } else if self.completed.contains(&k) {
                [90, 90, 90]
            } else {
                [200, 60, 60]
            };
            scene.push(
                id,
                color,
                Shape::Sphere {
                    center: self.sphere_position(k),
                    radius: self.params.sphere_radius,
                },
            );
        }
        for (i, inst) in self.instruments.iter().enumerate() {
            scene.push(2 + i as u32, [190, 190, 200], inst.shape());
        }
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
        let mut action = vec![0.0; self.action_dim()];
        let i = self.active_instrument;
        let inst = &self.instruments[i];
        let goal = self.expert_goal();
        let Ok(desired) = pose_to_ptsd(&goal, &inst.rcm, inst.ptsd.spin) else {
            return Some(action);
        };
        let delta = [
            wrap_degrees(desired.tilt - inst.ptsd.tilt),
            wrap_degrees(desired.pan - inst.ptsd.pan),
            0.0,
            desired.depth - inst.ptsd.depth,
        ];
        for k in 0..4 {
            let step = inst.limits.velocity_limits[k] * self.observation_period;
            if step > 0.0 {
                action[4 * i + k] = (delta[k] / step).clamp(-1.0, 1.0);
            }
        }
        Some(action)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
