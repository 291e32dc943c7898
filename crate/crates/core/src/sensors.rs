//! Observation generation: pinhole cameras, a software rasterizer producing
//! RGB, depth and segmentation planes, and depth unprojection to point clouds.
//!
//! Camera frame convention: `+z` looks forward along the optical axis, `+x`
//! is image right and `+y` is image down. This matches the instrument
//! convention where the shaft (and an endoscope's view) is local `+z`.
//!
//! Spheres and capsules are ray-cast per pixel (exact surfaces); triangles
//! are rasterized with perspective-correct depth. Shading is Lambertian with
//! a single directional light.

use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{Pose, Vec3};

pub const DEPTH_MAGIC: &[u8; 8] = b"LGDEPTH1";
pub const SEGMENTATION_MAGIC: &[u8; 8] = b"LGSEG001";

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("point is behind the camera")]
    BehindCamera,
    #[error("frame resolution {frame} does not match camera resolution {camera}")]
    ResolutionMismatch { frame: u32, camera: u32 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("bad frame dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Intrinsics shared by environment cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSettings {
    pub fov_deg: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraSettings {
    fn default() -> Self {
        Self {
            fov_deg: 45.0,
            near: 1.0,
            far: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub pose: Pose,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    /// Square image side in pixels.
    pub resolution: u32,
    pub near: f64,
    pub far: f64,
}

impl CameraModel {
    pub fn new(pose: Pose, settings: CameraSettings, resolution: u32) -> Self {
        Self {
            pose,
            fov_deg: settings.fov_deg,
            resolution,
            near: settings.near,
            far: settings.far,
        }
    }

    /// Camera at `eye` looking at `target`, with `up` pointing toward image top.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, settings: CameraSettings, resolution: u32) -> Self {
        let z = (target - eye).normalize();
        let mut down = -(up - z * up.dot(&z));
        if down.norm() < 1e-9 {
            down = -(Vec3::y() - z * Vec3::y().dot(&z));
        }
        let y = down.normalize();
        let x = y.cross(&z);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        let pose = Pose {
            position: eye,
            orientation: UnitQuaternion::from_rotation_matrix(&rot),
        };
        Self::new(pose, settings, resolution)
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(SensorError::InvalidCamera("require 0 < near < far".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(SensorError::InvalidCamera("fov must lie in (0, 180)".into()));
        }
        if self.resolution == 0 {
            return Err(SensorError::InvalidCamera("resolution must be positive".into()));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        (self.resolution as f64 / 2.0) / (self.fov_deg.to_radians() / 2.0).tan()
    }

    pub fn principal_point(&self) -> f64 {
        self.resolution as f64 / 2.0
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(world)
    }

    /// Camera-space ray direction (with unit `z`) through a pixel center.
    pub fn pixel_ray(&self, col: u32, row: u32) -> Vec3 {
        let f = self.focal();
        let c = self.principal_point();
        Vec3::new((col as f64 + 0.5 - c) / f, (row as f64 + 0.5 - c) / f, 1.0)
    }

    /// World-space size of one pixel on the plane at camera depth `z`.
    pub fn pixel_size_at(&self, z: f64) -> f64 {
        z / self.focal()
    }
}

/// Pinhole projection to continuous pixel coordinates `(u, v)`.
pub fn project(point: &Vec3, camera: &CameraModel) -> Result<(f64, f64), SensorError> {
    let p = camera.to_camera(point);
    if p.z <= camera.near {
        return Err(SensorError::BehindCamera);
    }
    let f = camera.focal();
    let c = camera.principal_point();
    Ok((c + f * p.x / p.z, c + f * p.y / p.z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Capsule { a: Vec3, b: Vec3, radius: f64 },
    Triangle([Vec3; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    /// Segmentation id; 0 is reserved for background.
    pub id: u32,
    pub color: [u8; 3],
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub background: [u8; 3],
    /// Direction the light travels, world frame.
    pub light_direction: Vec3,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            objects: Vec::new(),
            background: [20, 20, 28],
            light_direction: Vec3::new(0.3, 0.2, -1.0),
        }
    }
}

impl Scene {
    pub fn push(&mut self, id: u32, color: [u8; 3], shape: Shape) {
        self.objects.push(SceneObject { id, color, shape });
    }

    /// Adds an axis-aligned quad at height `z` as two triangles.
    pub fn push_floor(&mut self, id: u32, color: [u8; 3], min: [f64; 2], max: [f64; 2], z: f64) {
        let p00 = Vec3::new(min[0], min[1], z);
        let p10 = Vec3::new(max[0], min[1], z);
        let p11 = Vec3::new(max[0], max[1], z);
        let p01 = Vec3::new(min[0], max[1], z);
        self.push(id, color, Shape::Triangle([p00, p10, p11]));
        self.push(id, color, Shape::Triangle([p00, p11, p01]));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffer {
    pub resolution: u32,
    /// Row-major H×W×3.
    pub rgb: Vec<u8>,
    /// Row-major camera-space depth in mm; `far` where empty.
    pub depth: Vec<f32>,
    /// Row-major object ids; 0 is background.
    pub segmentation: Vec<u32>,
}

impl FrameBuffer {
    fn empty(resolution: u32, background: [u8; 3], far: f64) -> Self {
        let n = (resolution * resolution) as usize;
        let mut rgb = Vec::with_capacity(n * 3);
        for _ in 0..n {
            rgb.extend_from_slice(&background);
        }
        Self {
            resolution,
            rgb,
            depth: vec![far as f32; n],
            segmentation: vec![0; n],
        }
    }

    pub fn index(&self, col: u32, row: u32) -> usize {
        (row * self.resolution + col) as usize
    }

    pub fn depth_at(&self, col: u32, row: u32) -> f32 {
        self.depth[self.index(col, row)]
    }

    pub fn id_at(&self, col: u32, row: u32) -> u32 {
        self.segmentation[self.index(col, row)]
    }

    /// Depth normalized to `[0, 1]` as `(d - near) / (far - near)`.
    pub fn normalized_depth(&self, camera: &CameraModel) -> Vec<f32> {
        let span = camera.far - camera.near;
        self.depth
            .iter()
            .map(|&d| (((d as f64) - camera.near) / span).clamp(0.0, 1.0) as f32)
            .collect()
    }

    pub fn write_ppm(&self, mut out: impl Write) -> io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.resolution, self.resolution)?;
        out.write_all(&self.rgb)
    }

    pub fn write_depth(&self, mut out: impl Write) -> io::Result<()> {
        out.write_all(DEPTH_MAGIC)?;
        for d in &self.depth {
            out.write_all(&d.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_segmentation(&self, mut out: impl Write) -> io::Result<()> {
        out.write_all(SEGMENTATION_MAGIC)?;
        for s in &self.segmentation {
            out.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save_ppm(&self, path: &Path) -> io::Result<()> {
        self.write_ppm(io::BufWriter::new(std::fs::File::create(path)?))
    }
}

fn read_plane(mut input: impl Read, magic: &[u8; 8]) -> Result<Vec<[u8; 4]>, SensorError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(SensorError::BadDump("missing magic header".into()));
    }
    let body = &bytes[8..];
    if body.len() % 4 != 0 {
        return Err(SensorError::BadDump("plane size is not a multiple of 4 bytes".into()));
    }
    let cells: Vec<[u8; 4]> = body.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
    let side = (cells.len() as f64).sqrt() as usize;
    if side * side != cells.len() {
        return Err(SensorError::BadDump("plane is not square".into()));
    }
    Ok(cells)
}

/// Reads an `LGDEPTH1` dump.
pub fn read_depth(input: impl Read) -> Result<Vec<f32>, SensorError> {
    Ok(read_plane(input, DEPTH_MAGIC)?
        .into_iter()
        .map(f32::from_le_bytes)
        .collect())
}

/// Reads an `LGSEG001` dump.
pub fn read_segmentation(input: impl Read) -> Result<Vec<u32>, SensorError> {
    Ok(read_plane(input, SEGMENTATION_MAGIC)?
        .into_iter()
        .map(u32::from_le_bytes)
        .collect())
}

enum CamShape {
    Sphere { center: Vec3, radius: f64 },
    Capsule { a: Vec3, b: Vec3, radius: f64 },
}

/// Smallest `t >= t_min` where the ray `t * dir` (origin at the camera) hits the sphere.
fn ray_sphere(dir: &Vec3, center: &Vec3, radius: f64, t_min: f64) -> Option<f64> {
    let a = dir.norm_squared();
    let b = dir.dot(center);
    let c = center.norm_squared() - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [(b - s) / a, (b + s) / a].into_iter().find(|&t| t >= t_min)
}

/// Ray-capsule intersection for a unit direction; returns distance along the ray.
fn ray_capsule(rd: &Vec3, a: &Vec3, b: &Vec3, r: f64) -> Option<f64> {
    let ba = b - a;
    let oa = -a;
    let baba = ba.dot(&ba);
    if baba < 1e-18 {
        return ray_sphere(rd, a, r, 0.0);
    }
    let bard = ba.dot(rd);
    let baoa = ba.dot(&oa);
    let rdoa = rd.dot(&oa);
    let oaoa = oa.dot(&oa);
    let qa = baba - bard * bard;
    let qb = baba * rdoa - baoa * bard;
    let qc = baba * oaoa - baoa * baoa - r * r * baba;
    let h = qb * qb - qa * qc;
    let mut best: Option<f64> = None;
    if h >= 0.0 && qa.abs() > 1e-18 {
        let t = (-qb - h.sqrt()) / qa;
        let y = baoa + t * bard;
        if t > 0.0 && y > 0.0 && y < baba {
            best = Some(t);
        }
    }
    for cap in [a, b] {
        if let Some(t) = ray_sphere(rd, cap, r, 0.0) {
            if t > 0.0 && best.is_none_or(|bt| t < bt) {
                best = Some(t);
            }
        }
    }
    best
}

fn shade(color: [u8; 3], normal: &Vec3, light_cam: &Vec3) -> [u8; 3] {
    let lambert = (-normal.dot(light_cam)).max(0.0);
    let k = 0.35 + 0.65 * lambert;
    color.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8)
}

/// Pixel-rectangle bound of a camera-space sphere, or the full image when it
/// crosses the near plane.
fn screen_bounds(camera: &CameraModel, center: &Vec3, radius: f64) -> Option<(u32, u32, u32, u32)> {
    let res = camera.resolution;
    if center.z + radius < camera.near {
        return None;
    }
    if center.z - radius <= camera.near {
        return Some((0, res - 1, 0, res - 1));
    }
    let f = camera.focal();
    let c = camera.principal_point();
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let p = center + Vec3::new(sx, sy, sz) * radius;
                let u = c + f * p.x / p.z;
                let v = c + f * p.y / p.z;
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    clip_rect(umin, umax, vmin, vmax, res)
}

fn clip_rect(umin: f64, umax: f64, vmin: f64, vmax: f64, res: u32) -> Option<(u32, u32, u32, u32)> {
    let hi = res as f64 - 1.0;
    if umax < 0.0 || vmax < 0.0 || umin > res as f64 || vmin > res as f64 {
        return None;
    }
    let c0 = (umin.floor() - 1.0).clamp(0.0, hi) as u32;
    let c1 = (umax.ceil() + 1.0).clamp(0.0, hi) as u32;
    let r0 = (vmin.floor() - 1.0).clamp(0.0, hi) as u32;
    let r1 = (vmax.ceil() + 1.0).clamp(0.0, hi) as u32;
    Some((c0, c1, r0, r1))
}

/// Renders a scene into RGB, depth and segmentation planes.
pub fn render(scene: &Scene, camera: &CameraModel) -> FrameBuffer {
    let res = camera.resolution;
    let mut frame = FrameBuffer::empty(res, scene.background, camera.far);
    let inv_rot = camera.pose.orientation.inverse();
    let light_cam = (inv_rot * scene.light_direction).normalize();

    let mut write = |frame: &mut FrameBuffer, col: u32, row: u32, z: f64, id: u32, rgb: [u8; 3]| {
        if z < camera.near || z > camera.far {
            return;
        }
        let idx = frame.index(col, row);
        let zf = z as f32;
        if zf < frame.depth[idx] {
            frame.depth[idx] = zf;
            frame.segmentation[idx] = id;
            frame.rgb[idx * 3..idx * 3 + 3].copy_from_slice(&rgb);
        }
    };

    for obj in &scene.objects {
        match obj.shape {
            Shape::Triangle(verts) => {
                let v = verts.map(|p| camera.to_camera(&p));
                if v.iter().any(|p| p.z < camera.near) {
                    continue;
                }
                let mut n = (v[1] - v[0]).cross(&(v[2] - v[0]));
                if n.norm() < 1e-18 {
                    continue;
                }
                n = n.normalize();
                if n.dot(&v[0]) > 0.0 {
                    n = -n;
                }
                let color = shade(obj.color, &n, &light_cam);
                let f = camera.focal();
                let c = camera.principal_point();
                let s = v.map(|p| (c + f * p.x / p.z, c + f * p.y / p.z));
                let umin = s.iter().map(|p| p.0).fold(f64::MAX, f64::min);
                let umax = s.iter().map(|p| p.0).fold(f64::MIN, f64::max);
                let vmin = s.iter().map(|p| p.1).fold(f64::MAX, f64::min);
                let vmax = s.iter().map(|p| p.1).fold(f64::MIN, f64::max);
                let Some((c0, c1, r0, r1)) = clip_rect(umin, umax, vmin, vmax, res) else {
                    continue;
                };
                let edge =
                    |a: (f64, f64), b: (f64, f64), p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                let area = edge(s[0], s[1], s[2]);
                if area.abs() < 1e-12 {
                    continue;
                }
                for row in r0..=r1 {
                    for col in c0..=c1 {
                        let p = (col as f64 + 0.5, row as f64 + 0.5);
                        let w0 = edge(s[1], s[2], p) / area;
                        let w1 = edge(s[2], s[0], p) / area;
                        let w2 = edge(s[0], s[1], p) / area;
                        if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                            continue;
                        }
                        let inv_z = w0 / v[0].z + w1 / v[1].z + w2 / v[2].z;
                        write(&mut frame, col, row, 1.0 / inv_z, obj.id, color);
                    }
                }
            }
            Shape::Sphere { center, radius } => {
                let shape = CamShape::Sphere {
                    center: camera.to_camera(&center),
                    radius,
                };
                raycast_shape(&mut frame, camera, &shape, obj, &light_cam, &mut write);
            }
            Shape::Capsule { a, b, radius } => {
                let shape = CamShape::Capsule {
                    a: camera.to_camera(&a),
                    b: camera.to_camera(&b),
                    radius,
                };
                raycast_shape(&mut frame, camera, &shape, obj, &light_cam, &mut write);
            }
        }
    }
    frame
}

fn raycast_shape(
    frame: &mut FrameBuffer,
    camera: &CameraModel,
    shape: &CamShape,
    obj: &SceneObject,
    light_cam: &Vec3,
    write: &mut impl FnMut(&mut FrameBuffer, u32, u32, f64, u32, [u8; 3]),
) {
    let (bound_center, bound_radius) = match shape {
        CamShape::Sphere { center, radius } => (*center, *radius),
        CamShape::Capsule { a, b, radius } => ((a + b) * 0.5, (b - a).norm() * 0.5 + radius),
    };
    let Some((c0, c1, r0, r1)) = screen_bounds(camera, &bound_center, bound_radius) else {
        return;
    };
    for row in r0..=r1 {
        for col in c0..=c1 {
            let dir = camera.pixel_ray(col, row);
            let (z, normal) = match shape {
                CamShape::Sphere { center, radius } => {
                    let Some(t) = ray_sphere(&dir, center, *radius, camera.near) else {
                        continue;
                    };
                    let hit = dir * t;
                    (hit.z, (hit - center) / *radius)
                }
                CamShape::Capsule { a, b, radius } => {
                    let unit = dir.normalize();
                    let Some(t) = ray_capsule(&unit, a, b, *radius) else {
                        continue;
                    };
                    let hit = unit * t;
                    let q = crate::softbody::closest_point_on_segment(&hit, a, b);
                    let n = hit - q;
                    let n = if n.norm() > 0.0 { n.normalize() } else { -unit };
                    (hit.z, n)
                }
            };
            let color = shade(obj.color, &normal, light_cam);
            write(frame, col, row, z, obj.id, color);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Vec3,
    pub id: u32,
}

/// Unprojects every non-empty pixel into world coordinates.
pub fn depth_to_pointcloud(frame: &FrameBuffer, camera: &CameraModel) -> Result<Vec<CloudPoint>, SensorError> {
    if frame.resolution != camera.resolution {
        return Err(SensorError::ResolutionMismatch {
            frame: frame.resolution,
            camera: camera.resolution,
        });
    }
    let far = camera.far as f32;
    let mut cloud = Vec::new();
    for row in 0..frame.resolution {
        for col in 0..frame.resolution {
            let idx = frame.index(col, row);
            let d = frame.depth[idx];
            if d >= far {
                continue;
            }
            let local = camera.pixel_ray(col, row) * d as f64;
            cloud.push(CloudPoint {
                position: camera.pose.transform_point(&local),
                id: frame.segmentation[idx],
            });
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn axis_camera(res: u32) -> CameraModel {
        CameraModel::new(Pose::identity(), CameraSettings::default(), res)
    }

    #[test]
    fn empty_scene_is_background() {
        let cam = axis_camera(16);
        let scene = Scene::default();
        let f = render(&scene, &cam);
        assert!(f.depth.iter().all(|&d| d == 1000.0));
        assert!(f.segmentation.iter().all(|&s| s == 0));
        assert!(f.rgb.chunks(3).all(|c| c == scene.background));
        assert!(depth_to_pointcloud(&f, &cam).unwrap().is_empty());
    }

    #[test]
    fn on_axis_point_projects_to_center() {
        let cam = axis_camera(64);
        let (u, v) = project(&Vec3::new(0.0, 0.0, 100.0), &cam).unwrap();
        assert_abs_diff_eq!(u, 32.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 32.0, epsilon = 1e-12);
    }

    #[test]
    fn behind_camera() {
        let cam = axis_camera(64);
        assert!(matches!(
            project(&Vec3::new(0.0, 0.0, -5.0), &cam),
            Err(SensorError::BehindCamera)
        ));
        assert!(matches!(
            project(&Vec3::new(0.0, 0.0, 0.5), &cam),
            Err(SensorError::BehindCamera)
        ));
    }

    #[test]
    fn off_axis_projection_hand_evaluated() {
        // res 64, fov 90 => f = 32; (10, -5, 50) => u = 32 + 32*10/50 = 38.4, v = 32 - 32*5/50 = 28.8
        let settings = CameraSettings {
            fov_deg: 90.0,
            ..Default::default()
        };
        let cam = CameraModel::new(Pose::identity(), settings, 64);
        let (u, v) = project(&Vec3::new(10.0, -5.0, 50.0), &cam).unwrap();
        assert_abs_diff_eq!(u, 38.4, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 28.8, epsilon = 1e-9);
    }

    #[test]
    fn nearer_sphere_wins() {
        let cam = axis_camera(32);
        let mut scene = Scene::default();
        scene.push(
            1,
            [200, 0, 0],
            Shape::Sphere {
                center: Vec3::new(0.0, 0.0, 200.0),
                radius: 20.0,
            },
        );
        scene.push(
            2,
            [0, 200, 0],
            Shape::Sphere {
                center: Vec3::new(0.0, 0.0, 100.0),
                radius: 5.0,
            },
        );
        let f = render(&scene, &cam);
        assert_eq!(f.id_at(16, 16), 2);
        // same result regardless of draw order
        scene.objects.reverse();
        assert_eq!(render(&scene, &cam).id_at(16, 16), 2);
    }

    #[test]
    fn look_at_points_forward() {
        let cam = CameraModel::look_at(
            Vec3::new(0.0, -100.0, 100.0),
            Vec3::zeros(),
            Vec3::z(),
            CameraSettings::default(),
            64,
        );
        let (u, v) = project(&Vec3::zeros(), &cam).unwrap();
        assert_abs_diff_eq!(u, 32.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 32.0, epsilon = 1e-9);
        // a point above the target appears above the image center
        let (_, v_up) = project(&Vec3::new(0.0, 0.0, 10.0), &cam).unwrap();
        assert!(v_up < 32.0);
    }

    #[test]
    fn triangle_floor_depth() {
        let cam = CameraModel::look_at(
            Vec3::new(0.0, 0.0, 100.0),
            Vec3::zeros(),
            Vec3::y(),
            CameraSettings::default(),
            32,
        );
        let mut scene = Scene::default();
        scene.push_floor(3, [100, 100, 100], [-50.0, -50.0], [50.0, 50.0], 0.0);
        let f = render(&scene, &cam);
        assert_eq!(f.id_at(16, 16), 3);
        assert_abs_diff_eq!(f.depth_at(16, 16) as f64, 100.0, epsilon = 1e-3);
    }

    #[test]
    fn dumps_round_trip() {
        let cam = axis_camera(8);
        let mut scene = Scene::default();
        scene.push(
            7,
            [10, 20, 30],
            Shape::Capsule {
                a: Vec3::new(-5.0, 0.0, 50.0),
                b: Vec3::new(5.0, 0.0, 50.0),
                radius: 3.0,
            },
        );
        let f = render(&scene, &cam);
        let mut d = Vec::new();
        f.write_depth(&mut d).unwrap();
        assert_eq!(&d[..8], DEPTH_MAGIC);
        assert_eq!(read_depth(&d[..]).unwrap(), f.depth);
        let mut s = Vec::new();
        f.write_segmentation(&mut s).unwrap();
        assert_eq!(read_segmentation(&s[..]).unwrap(), f.segmentation);
        let mut p = Vec::new();
        f.write_ppm(&mut p).unwrap();
        assert!(p.starts_with(b"P6\n8 8\n255\n"));
        assert_eq!(p.len(), 11 + 8 * 8 * 3);
        assert!(read_depth(&s[..]).is_err());
    }

    #[test]
    fn pointcloud_resolution_mismatch() {
        let f = render(&Scene::default(), &axis_camera(8));
        assert!(matches!(
            depth_to_pointcloud(&f, &axis_camera(16)),
            Err(SensorError::ResolutionMismatch { .. })
        ));
    }
}
