//! Pivotized instrument kinematics around a remote center of motion (RCM).
//!
//! An instrument inserted through a trocar has four controllable degrees of
//! freedom: tilt, pan and spin (rotations in the RCM frame) and depth
//! (translation along the shaft). The shaft axis is the local `+z` axis of the
//! returned pose.
//!
//! Rotations use intrinsic XYZ Euler angles: `R = Rx(a) * Ry(b) * Rz(c)`.
//! Angles are degrees at the API boundary and radians internally.

use nalgebra::{Matrix4, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("tip coincides with the remote center of motion")]
    DegenerateTip,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid time step {0}")]
    InvalidTimeStep(f64),
}

/// Instrument configuration: tilt, pan, spin in degrees, depth in mm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PtsdState {
    pub tilt: f64,
    pub pan: f64,
    pub spin: f64,
    pub depth: f64,
}

impl PtsdState {
    pub const fn new(tilt: f64, pan: f64, spin: f64, depth: f64) -> Self {
        Self { tilt, pan, spin, depth }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.tilt, self.pan, self.spin, self.depth]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Wraps the three angles into `(-180, 180]`.
    pub fn wrapped(self) -> Self {
        Self {
            tilt: wrap_degrees(self.tilt),
            pan: wrap_degrees(self.pan),
            spin: wrap_degrees(self.spin),
            depth: self.depth,
        }
    }
}

/// Normalizes an angle in degrees to `(-180, 180]`.
pub fn wrap_degrees(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Position (mm) and intrinsic XYZ Euler orientation (degrees) of an RCM.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RcmFrame {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
}

impl RcmFrame {
    pub const fn new(position: [f64; 3], orientation: [f64; 3]) -> Self {
        Self { position, orientation }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        euler_xyz(self.orientation[0], self.orientation[1], self.orientation[2])
    }
}

/// Rotation from intrinsic XYZ Euler angles given in degrees.
pub fn euler_xyz(x_deg: f64, y_deg: f64, z_deg: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), x_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::y_axis(), y_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::z_axis(), z_deg.to_radians())
}

/// A rigid pose: position in mm and a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn from_rotation(position: Vec3, rotation: Rotation3<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::from_rotation_matrix(&rotation),
        }
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        self.orientation.to_rotation_matrix()
    }

    /// Local `+z` axis in world coordinates (shaft / viewing direction).
    pub fn z_axis(&self) -> Vec3 {
        self.orientation * Vec3::z()
    }

    pub fn x_axis(&self) -> Vec3 {
        self.orientation * Vec3::x()
    }

    pub fn y_axis(&self) -> Vec3 {
        self.orientation * Vec3::y()
    }

    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.position + self.orientation * local
    }

    pub fn inverse_transform_point(&self, world: &Vec3) -> Vec3 {
        self.orientation.inverse() * (world - self.position)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        Translation3::from(self.position).to_homogeneous() * self.orientation.to_homogeneous()
    }

    /// `[x, y, z, qx, qy, qz, qw]` with the quaternion in the `w >= 0` hemisphere.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
        [
            self.position.x,
            self.position.y,
            self.position.z,
            sign * q.i,
            sign * q.j,
            sign * q.k,
            sign * q.w,
        ]
    }
}

/// Axis-aligned box in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub const fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
            p.z.clamp(self.min[2], self.max[2]),
        )
    }

    pub fn center(&self) -> Vec3 {
        (Vec3::from(self.min) + Vec3::from(self.max)) * 0.5
    }
}

/// Joint bounds, Cartesian workspace and velocity limits of one instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentLimits {
    pub ptsd_low: PtsdState,
    pub ptsd_high: PtsdState,
    pub cartesian_box: Aabb,
    /// Max rates for (tilt, pan, spin, depth) in deg/s and mm/s.
    pub velocity_limits: [f64; 4],
}

impl InstrumentLimits {
    pub fn validate(&self) -> Result<(), String> {
        let lo = self.ptsd_low.to_array();
        let hi = self.ptsd_high.to_array();
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err("ptsd_low must be <= ptsd_high componentwise".into());
        }
        if !self.cartesian_box.is_valid() {
            return Err("cartesian_box has negative extent".into());
        }
        if self.velocity_limits.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("velocity limits must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Outcome flags of [`clamp_action`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitFlags {
    pub state_limit_violated: bool,
    pub workspace_violated: bool,
}

impl LimitFlags {
    pub fn merge(&mut self, other: LimitFlags) {
        self.state_limit_violated |= other.state_limit_violated;
        self.workspace_violated |= other.workspace_violated;
    }
}

/// Forward kinematics: `T_t(rcm) * T_xyz(rcm orientation) * T_xyz(tilt, pan, spin) * T_t([0, 0, depth])`.
pub fn ptsd_to_pose(ptsd: &PtsdState, rcm: &RcmFrame) -> Pose {
    let rotation = rcm.rotation() * euler_xyz(ptsd.tilt, ptsd.pan, ptsd.spin);
    let position = rcm.position() + rotation * Vec3::new(0.0, 0.0, ptsd.depth);
    Pose::from_rotation(position, rotation)
}

/// Geometric inverse of [`ptsd_to_pose`] for a tip position.
///
/// Spin cannot be recovered from a position and is passed through. The
/// solution uses the `|pan| <= 90` branch with non-negative depth.
pub fn pose_to_ptsd(tip: &Vec3, rcm: &RcmFrame, spin: f64) -> Result<PtsdState, KinematicsError> {
    let local = rcm.rotation().inverse() * (tip - rcm.position());
    let depth = local.norm();
    if depth <= 1e-6 {
        return Err(KinematicsError::DegenerateTip);
    }
    let dir = local / depth;
    // Rx(t) * Ry(p) * e_z = (sin p, -sin t cos p, cos t cos p)
    let pan = dir.x.clamp(-1.0, 1.0).asin();
    let tilt = (-dir.y).atan2(dir.z);
    Ok(PtsdState {
        tilt: wrap_degrees(tilt.to_degrees()),
        pan: wrap_degrees(pan.to_degrees()),
        spin: wrap_degrees(spin),
        depth,
    })
}

/// Validates a normalized action vector.
pub fn check_action(action: &[f64]) -> Result<(), KinematicsError> {
    for (i, a) in action.iter().enumerate() {
        if !a.is_finite() || !(-1.0..=1.0).contains(a) {
            return Err(KinematicsError::InvalidAction(format!(
                "component {i} = {a} is outside [-1, 1]"
            )));
        }
    }
    Ok(())
}

/// Scales a normalized action by the velocity limits, clamps to the joint
/// bounds and rejects the move if the tip would leave the Cartesian box.
pub fn clamp_action(
    ptsd: &PtsdState,
    action: &[f64; 4],
    limits: &InstrumentLimits,
    rcm: &RcmFrame,
    dt: f64,
) -> Result<(PtsdState, LimitFlags), KinematicsError> {
    check_action(action)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(KinematicsError::InvalidTimeStep(dt));
    }
    let current = ptsd.to_array();
    let lo = limits.ptsd_low.to_array();
    let hi = limits.ptsd_high.to_array();
    let mut flags = LimitFlags::default();
    let mut next = [0.0; 4];
    for i in 0..4 {
        let candidate = current[i] + action[i] * limits.velocity_limits[i] * dt;
        let clamped = candidate.clamp(lo[i], hi[i]);
        if clamped != candidate {
            flags.state_limit_violated = true;
        }
        next[i] = clamped;
    }
    let next = PtsdState::from_array(next);
    let tip = ptsd_to_pose(&next, rcm).position;
    if !limits.cartesian_box.contains(&tip) {
        flags.workspace_violated = true;
        return Ok((*ptsd, flags));
    }
    Ok((next, flags))
}

/// Cartesian counterpart of [`clamp_action`] for end-effectors controlled
/// directly in task space. The position is clamped to the box.
pub fn clamp_cartesian_action(
    position: &Vec3,
    action: &[f64; 3],
    velocity_limits: &[f64; 3],
    workspace: &Aabb,
    dt: f64,
) -> Result<(Vec3, LimitFlags), KinematicsError> {
    check_action(action)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(KinematicsError::InvalidTimeStep(dt));
    }
    let candidate = Vec3::new(
        position.x + action[0] * velocity_limits[0] * dt,
        position.y + action[1] * velocity_limits[1] * dt,
        position.z + action[2] * velocity_limits[2] * dt,
    );
    let clamped = workspace.clamp(&candidate);
    let flags = LimitFlags {
        state_limit_violated: false,
        workspace_violated: clamped != candidate,
    };
    Ok((clamped, flags))
}

/// Camera pose of an oblique-viewing endoscope.
///
/// The optic is tilted by `optic_angle` about the shaft-perpendicular axis,
/// and that axis is rotated by `optic_rotation` about the shaft. The image
/// horizon stays fixed to the camera head: `R = R_shaft * Rz(rot) * Rx(angle) * Rz(-rot)`.
/// At `optic_rotation = 90` the view tilts toward the local `+x` axis.
pub fn oblique_camera_pose(ptsd: &PtsdState, rcm: &RcmFrame, optic_angle: f64, optic_rotation: f64) -> Pose {
    let shaft = ptsd_to_pose(ptsd, rcm);
    if optic_angle == 0.0 {
        return shaft;
    }
    let optic =
        euler_xyz(0.0, 0.0, optic_rotation) * euler_xyz(optic_angle, 0.0, 0.0) * euler_xyz(0.0, 0.0, -optic_rotation);
    Pose::from_rotation(shaft.position, shaft.rotation() * optic)
}
