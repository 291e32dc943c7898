//! Position-based dynamics for ropes, stalks and tissue patches.
//!
//! The solver is classic PBD: explicit prediction under gravity, a fixed
//! number of Gauss-Seidel sweeps over all constraints per substep, and
//! velocities recovered from position deltas. Iteration order follows the
//! stable particle and constraint indices, so identical inputs produce
//! bitwise-identical outputs.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Vec3;

pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9810.0];
pub const DEFAULT_SPEED_CEILING: f64 = 1e5;
const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoftBodyError {
    #[error("unstable simulation: particle {particle} {reason}")]
    UnstableSimulation { particle: usize, reason: String },
    #[error("particles are coincident; constraint direction undefined")]
    CoincidentParticles,
    #[error("invalid step parameters: {0}")]
    InvalidStep(String),
    #[error("invalid world construction: {0}")]
    InvalidConstruction(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: Vec3,
    pub previous_position: Vec3,
    pub velocity: Vec3,
    /// 1/g; zero pins the particle.
    pub inverse_mass: f64,
    /// Collision radius in mm.
    pub radius: f64,
}

impl Particle {
    pub fn new(position: Vec3, inverse_mass: f64) -> Self {
        Self {
            position,
            previous_position: position,
            velocity: Vec3::zeros(),
            inverse_mass,
            radius: 0.0,
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn is_pinned(&self) -> bool {
        self.inverse_mass == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConstraintId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceConstraint {
    pub id: ConstraintId,
    pub i: usize,
    pub j: usize,
    pub rest_length: f64,
    pub stiffness: f64,
}

/// Keeps the angle at `j` between segments `j-i` and `j-k` near its rest
/// value by constraining the `i-k` span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendingConstraint {
    pub id: ConstraintId,
    pub i: usize,
    pub j: usize,
    pub k: usize,
    /// Rest angle at `j` in degrees (180 = straight).
    pub rest_angle: f64,
    pub rest_span: f64,
    pub stiffness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    pub particle: usize,
    pub tool: usize,
    /// World-frame offset from the tool tip captured at grasp time.
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub name: String,
    pub range: Range<usize>,
    pub graspable: bool,
}

/// A tool shaft segment. `endpoint_b` is the tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolCapsule {
    pub endpoint_a: Vec3,
    pub endpoint_b: Vec3,
    pub radius: f64,
    /// Electrocautery on/off.
    pub active: bool,
    pub jaw_closed: bool,
}

impl ToolCapsule {
    pub fn new(endpoint_a: Vec3, endpoint_b: Vec3, radius: f64) -> Self {
        Self {
            endpoint_a,
            endpoint_b,
            radius,
            active: false,
            jaw_closed: false,
        }
    }

    pub fn tip(&self) -> Vec3 {
        self.endpoint_b
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            radius: self.radius + margin,
            ..*self
        }
    }
}

/// Static collision proxies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Collider {
    /// Keeps particles on the side where `normal · p >= offset`.
    HalfSpace { normal: Vec3, offset: f64 },
    /// Solid capsule.
    Capsule { a: Vec3, b: Vec3, radius: f64 },
    /// Vertical hollow cylinder wall, open at the top.
    Tube {
        base: Vec3,
        height: f64,
        inner_radius: f64,
        outer_radius: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SoftWorld {
    pub particles: Vec<Particle>,
    pub distance_constraints: Vec<DistanceConstraint>,
    pub bending_constraints: Vec<BendingConstraint>,
    pub attachments: Vec<Attachment>,
    pub bodies: Vec<Body>,
    pub colliders: Vec<Collider>,
    /// mm/s^2
    pub gravity: Vec3,
    /// Fraction of velocity removed per second.
    pub damping: f64,
    /// Max particle speed in mm/s before the step is declared unstable.
    pub speed_ceiling: f64,
    /// (particle, tool) pairs that touched during the last step.
    pub contacts: BTreeSet<(usize, usize)>,
    jaw_state: Vec<bool>,
    next_constraint_id: u32,
}

impl Default for SoftWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl SoftWorld {
    pub fn new() -> Self {
        Self {
            particles: Vec::new(),
            distance_constraints: Vec::new(),
            bending_constraints: Vec::new(),
            attachments: Vec::new(),
            bodies: Vec::new(),
            colliders: Vec::new(),
            gravity: Vec3::from(DEFAULT_GRAVITY),
            damping: 0.0,
            speed_ceiling: DEFAULT_SPEED_CEILING,
            contacts: BTreeSet::new(),
            jaw_state: Vec::new(),
            next_constraint_id: 0,
        }
    }

    pub fn add_particle(&mut self, particle: Particle) -> usize {
        self.particles.push(particle);
        self.particles.len() - 1
    }

    fn fresh_id(&mut self) -> ConstraintId {
        let id = ConstraintId(self.next_constraint_id);
        self.next_constraint_id += 1;
        id
    }

    fn check_index(&self, idx: usize) -> Result<(), SoftBodyError> {
        if idx >= self.particles.len() {
            return Err(SoftBodyError::InvalidConstruction(format!(
                "particle index {idx} out of range"
            )));
        }
        Ok(())
    }

    /// Adds a distance constraint whose rest length is the current separation.
    pub fn add_distance(&mut self, i: usize, j: usize, stiffness: f64) -> Result<ConstraintId, SoftBodyError> {
        self.check_index(i)?;
        self.check_index(j)?;
        let rest = (self.particles[i].position - self.particles[j].position).norm();
        self.add_distance_with_rest(i, j, rest, stiffness)
    }

    pub fn add_distance_with_rest(
        &mut self,
        i: usize,
        j: usize,
        rest_length: f64,
        stiffness: f64,
    ) -> Result<ConstraintId, SoftBodyError> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(SoftBodyError::InvalidConstruction(
                "constraint endpoints must differ".into(),
            ));
        }
        if !(rest_length > 0.0) {
            return Err(SoftBodyError::InvalidConstruction(
                "rest length must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&stiffness) {
            return Err(SoftBodyError::InvalidConstruction(
                "stiffness must lie in [0, 1]".into(),
            ));
        }
        let id = self.fresh_id();
        self.distance_constraints.push(DistanceConstraint {
            id,
            i,
            j,
            rest_length,
            stiffness,
        });
        Ok(id)
    }

    /// Adds a bending constraint at `j` with the current angle as rest angle.
    pub fn add_bending(&mut self, i: usize, j: usize, k: usize, stiffness: f64) -> Result<ConstraintId, SoftBodyError> {
        for idx in [i, j, k] {
            self.check_index(idx)?;
        }
        if i == j || j == k || i == k {
            return Err(SoftBodyError::InvalidConstruction("bending indices must differ".into()));
        }
        if !(0.0..=1.0).contains(&stiffness) {
            return Err(SoftBodyError::InvalidConstruction(
                "stiffness must lie in [0, 1]".into(),
            ));
        }
        let pi = self.particles[i].position;
        let pj = self.particles[j].position;
        let pk = self.particles[k].position;
        let a = pi - pj;
        let b = pk - pj;
        let rest_angle = a.angle(&b).to_degrees();
        let rest_span = (pi - pk).norm();
        if !(rest_span > 0.0) {
            return Err(SoftBodyError::InvalidConstruction(
                "bending span must be positive".into(),
            ));
        }
        let id = self.fresh_id();
        self.bending_constraints.push(BendingConstraint {
            id,
            i,
            j,
            k,
            rest_angle,
            rest_span,
            stiffness,
        });
        Ok(id)
    }

    /// Registers a named body over a particle range; ranges must be disjoint.
    pub fn add_body(&mut self, name: &str, range: Range<usize>, graspable: bool) -> Result<usize, SoftBodyError> {
        if range.end > self.particles.len() || range.start >= range.end {
            return Err(SoftBodyError::InvalidConstruction(format!("bad body range {range:?}")));
        }
        if self
            .bodies
            .iter()
            .any(|b| b.range.start < range.end && range.start < b.range.end)
        {
            return Err(SoftBodyError::InvalidConstruction(format!(
                "body range {range:?} overlaps an existing body"
            )));
        }
        self.bodies.push(Body {
            name: name.to_string(),
            range,
            graspable,
        });
        Ok(self.bodies.len() - 1)
    }

    /// Builds a chain through `points`, registering it as a body.
    #[allow(clippy::too_many_arguments)]
    pub fn add_rope(
        &mut self,
        name: &str,
        points: &[Vec3],
        particle_mass: f64,
        radius: f64,
        stiffness: f64,
        bending_stiffness: f64,
        pinned: &[usize],
    ) -> Result<usize, SoftBodyError> {
        if points.len() < 2 || !(particle_mass > 0.0) {
            return Err(SoftBodyError::InvalidConstruction(
                "rope needs >= 2 points and positive mass".into(),
            ));
        }
        let start = self.particles.len();
        for (n, p) in points.iter().enumerate() {
            let inv = if pinned.contains(&n) { 0.0 } else { 1.0 / particle_mass };
            self.add_particle(Particle::new(*p, inv).with_radius(radius));
        }
        for n in start..start + points.len() - 1 {
            self.add_distance(n, n + 1, stiffness)?;
        }
        if bending_stiffness > 0.0 {
            for n in start..start + points.len().saturating_sub(2) {
                self.add_bending(n, n + 1, n + 2, bending_stiffness)?;
            }
        }
        self.add_body(name, start..start + points.len(), true)
    }

    pub fn body(&self, name: &str) -> Option<&Body> {
        self.bodies.iter().find(|b| b.name == name)
    }

    pub fn body_of(&self, particle: usize) -> Option<usize> {
        self.bodies.iter().position(|b| b.range.contains(&particle))
    }

    pub fn attach(&mut self, particle: usize, tool: usize, offset: Vec3) -> Result<(), SoftBodyError> {
        self.check_index(particle)?;
        self.attachments.retain(|a| a.particle != particle);
        self.attachments.push(Attachment { particle, tool, offset });
        Ok(())
    }

    fn attachment_of(&self, particle: usize) -> Option<&Attachment> {
        self.attachments.iter().find(|a| a.particle == particle)
    }

    /// Attaches the nearest graspable particle when the jaw closes.
    ///
    /// Returns the attached particle index. A jaw opening releases the
    /// tool's attachments.
    pub fn grasp(&mut self, tool_index: usize, tool: &ToolCapsule, grasp_radius: f64) -> Option<usize> {
        if self.jaw_state.len() <= tool_index {
            self.jaw_state.resize(tool_index + 1, false);
        }
        let was_closed = self.jaw_state[tool_index];
        self.jaw_state[tool_index] = tool.jaw_closed;
        if !tool.jaw_closed {
            if was_closed {
                self.release(tool_index);
            }
            return None;
        }
        if was_closed {
            return None;
        }
        let tip = tool.tip();
        let mut best: Option<(usize, f64)> = None;
        for body in self.bodies.iter().filter(|b| b.graspable) {
            for idx in body.range.clone() {
                let d = (self.particles[idx].position - tip).norm();
                if d <= grasp_radius && best.is_none_or(|(b_idx, b_d)| d < b_d || (d == b_d && idx < b_idx)) {
                    best = Some((idx, d));
                }
            }
        }
        let (idx, _) = best?;
        let offset = self.particles[idx].position - tip;
        self.attachments.retain(|a| a.particle != idx);
        self.attachments.push(Attachment {
            particle: idx,
            tool: tool_index,
            offset,
        });
        Some(idx)
    }

    /// Removes all attachments held by `tool_index`; returns how many.
    pub fn release(&mut self, tool_index: usize) -> usize {
        let before = self.attachments.len();
        self.attachments.retain(|a| a.tool != tool_index);
        before - self.attachments.len()
    }

    /// Removes every constraint whose segment intersects an active tool.
    ///
    /// Bending constraints that span a removed distance edge are removed too,
    /// so a cut chain falls apart into independent pieces. Particles are
    /// never removed.
    pub fn cut(&mut self, tool: &ToolCapsule) -> Vec<ConstraintId> {
        if !tool.active {
            return Vec::new();
        }
        let hits =
            |p: &Vec3, q: &Vec3| segment_segment_distance(p, q, &tool.endpoint_a, &tool.endpoint_b) <= tool.radius;
        let mut removed = Vec::new();
        let mut severed = BTreeSet::new();
        let particles = &self.particles;
        self.distance_constraints.retain(|c| {
            let cut = hits(&particles[c.i].position, &particles[c.j].position);
            if cut {
                removed.push(c.id);
                severed.insert((c.i.min(c.j), c.i.max(c.j)));
            }
            !cut
        });
        self.bending_constraints.retain(|b| {
            let cut = hits(&particles[b.i].position, &particles[b.j].position)
                || hits(&particles[b.j].position, &particles[b.k].position)
                || spans_edge(b, &severed);
            if cut {
                removed.push(b.id);
            }
            !cut
        });
        removed
    }

    /// Removes a distance constraint, and bending constraints across its
    /// edge, regardless of geometry.
    pub fn remove_distance_constraint(&mut self, id: ConstraintId) -> Vec<ConstraintId> {
        let mut removed = Vec::new();
        let mut severed = BTreeSet::new();
        self.distance_constraints.retain(|c| {
            let hit = c.id == id;
            if hit {
                removed.push(c.id);
                severed.insert((c.i.min(c.j), c.i.max(c.j)));
            }
            !hit
        });
        self.bending_constraints.retain(|b| {
            let hit = spans_edge(b, &severed);
            if hit {
                removed.push(b.id);
            }
            !hit
        });
        removed
    }

    /// Number of connected pieces of a body under the live constraints.
    pub fn connected_components(&self, body: usize) -> usize {
        let range = self.bodies[body].range.clone();
        let n = range.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut union = |a: usize, b: usize| {
            if range.contains(&a) && range.contains(&b) {
                let ra = find(&mut parent, a - range.start);
                let rb = find(&mut parent, b - range.start);
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        };
        for c in &self.distance_constraints {
            union(c.i, c.j);
        }
        for b in &self.bending_constraints {
            union(b.i, b.j);
            union(b.j, b.k);
        }
        (0..n).filter(|&x| find(&mut parent, x) == x).count()
    }

    /// Advances the world by `dt`, split into `substeps`.
    pub fn step(
        &mut self,
        tools: &[ToolCapsule],
        dt: f64,
        substeps: usize,
        iterations: usize,
    ) -> Result<(), SoftBodyError> {
        if !(dt > 0.0) || !dt.is_finite() || substeps == 0 || iterations == 0 {
            return Err(SoftBodyError::InvalidStep(format!(
                "dt={dt}, substeps={substeps}, iterations={iterations}"
            )));
        }
        self.contacts.clear();
        let h = dt / substeps as f64;
        // effective inverse masses; attached particles are kinematic
        let mut inv: Vec<f64> = self.particles.iter().map(|p| p.inverse_mass).collect();
        let mut targets: Vec<Option<Vec3>> = vec![None; self.particles.len()];
        for a in &self.attachments {
            if let Some(tool) = tools.get(a.tool) {
                inv[a.particle] = 0.0;
                targets[a.particle] = Some(tool.tip() + a.offset);
            }
        }
        let attached_tool: Vec<Option<usize>> = (0..self.particles.len())
            .map(|i| self.attachment_of(i).filter(|a| a.tool < tools.len()).map(|a| a.tool))
            .collect();

        for _ in 0..substeps {
            for (idx, p) in self.particles.iter_mut().enumerate() {
                p.previous_position = p.position;
                if let Some(t) = targets[idx] {
                    p.position = t;
                } else if inv[idx] > 0.0 {
                    p.velocity += self.gravity * h;
                    p.position += p.velocity * h;
                }
            }
            for _ in 0..iterations {
                for c in &self.distance_constraints {
                    let (pi, pj) = (&self.particles[c.i], &self.particles[c.j]);
                    if let Ok((di, dj)) = distance_correction(
                        &pi.position,
                        &pj.position,
                        inv[c.i],
                        inv[c.j],
                        c.rest_length,
                        c.stiffness,
                    ) {
                        self.particles[c.i].position += di;
                        self.particles[c.j].position += dj;
                    }
                }
                for b in &self.bending_constraints {
                    let (pi, pk) = (&self.particles[b.i], &self.particles[b.k]);
                    if let Ok((di, dk)) =
                        distance_correction(&pi.position, &pk.position, inv[b.i], inv[b.k], b.rest_span, b.stiffness)
                    {
                        self.particles[b.i].position += di;
                        self.particles[b.k].position += dk;
                    }
                }
                for (idx, p) in self.particles.iter_mut().enumerate() {
                    if inv[idx] == 0.0 {
                        if let Some(t) = targets[idx] {
                            p.position = t;
                        }
                        continue;
                    }
                    for collider in &self.colliders {
                        p.position = resolve_static_collision(&p.position, p.radius, collider);
                    }
                    for (t_idx, tool) in tools.iter().enumerate() {
                        if attached_tool[idx] == Some(t_idx) {
                            continue;
                        }
                        let moved = resolve_capsule_collision(&p.position, &tool.inflated(p.radius));
                        if moved != p.position {
                            self.contacts.insert((idx, t_idx));
                            p.position = moved;
                        }
                    }
                }
            }
            let keep = (1.0 - self.damping * h).max(0.0);
            for (idx, p) in self.particles.iter_mut().enumerate() {
                p.velocity = (p.position - p.previous_position) / h;
                if inv[idx] > 0.0 {
                    p.velocity *= keep;
                }
                if !p.position.iter().all(|v| v.is_finite()) || !p.velocity.iter().all(|v| v.is_finite()) {
                    return Err(SoftBodyError::UnstableSimulation {
                        particle: idx,
                        reason: "has a non-finite state".into(),
                    });
                }
                let speed = p.velocity.norm();
                if speed > self.speed_ceiling {
                    return Err(SoftBodyError::UnstableSimulation {
                        particle: idx,
                        reason: format!("speed {speed:.1} mm/s exceeds ceiling"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest relative violation `|len - rest| / rest` over distance constraints.
    pub fn max_distance_violation(&self) -> f64 {
        self.distance_constraints
            .iter()
            .map(|c| {
                let len = (self.particles[c.i].position - self.particles[c.j].position).norm();
                (len - c.rest_length).abs() / c.rest_length
            })
            .fold(0.0, f64::max)
    }
}

fn spans_edge(b: &BendingConstraint, edges: &BTreeSet<(usize, usize)>) -> bool {
    edges.contains(&(b.i.min(b.j), b.i.max(b.j))) || edges.contains(&(b.j.min(b.k), b.j.max(b.k)))
}

/// Position corrections for a distance constraint.
///
/// Returns `(delta_i, delta_j)`; corrections act along the inter-particle
/// axis, split by inverse mass and scaled by stiffness.
pub fn project_distance(p_i: &Particle, p_j: &Particle, c: &DistanceConstraint) -> Result<(Vec3, Vec3), SoftBodyError> {
    distance_correction(
        &p_i.position,
        &p_j.position,
        p_i.inverse_mass,
        p_j.inverse_mass,
        c.rest_length,
        c.stiffness,
    )
}

fn distance_correction(
    xi: &Vec3,
    xj: &Vec3,
    wi: f64,
    wj: f64,
    rest: f64,
    stiffness: f64,
) -> Result<(Vec3, Vec3), SoftBodyError> {
    let d = xi - xj;
    let len = d.norm();
    if len < COINCIDENT_EPS {
        return Err(SoftBodyError::CoincidentParticles);
    }
    let w = wi + wj;
    if w == 0.0 {
        return Ok((Vec3::zeros(), Vec3::zeros()));
    }
    let n = d / len;
    let s = (len - rest) * stiffness / w;
    Ok((-n * (wi * s), n * (wj * s)))
}

/// Closest point on segment `[a, b]` to `p`.
pub fn closest_point_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Minimum distance between segments `[p1, q1]` and `[p2, q2]`.
pub fn segment_segment_distance(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return r.norm();
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = p1 + d1 * s;
    let c2 = p2 + d2 * t;
    (c1 - c2).norm()
}

/// Fallback push direction for a point on the capsule axis: world `+x`
/// projected perpendicular to the axis (world `+y` if the axis is along x).
fn capsule_frame_x(capsule: &ToolCapsule) -> Vec3 {
    let axis = capsule.endpoint_b - capsule.endpoint_a;
    let len = axis.norm();
    if len == 0.0 {
        return Vec3::x();
    }
    let axis = axis / len;
    for reference in [Vec3::x(), Vec3::y()] {
        let perp = reference - axis * axis.dot(&reference);
        let n = perp.norm();
        if n > 1e-6 {
            return perp / n;
        }
    }
    Vec3::z()
}

/// Projects a point strictly inside the capsule onto its surface.
pub fn resolve_capsule_collision(position: &Vec3, capsule: &ToolCapsule) -> Vec3 {
    let q = closest_point_on_segment(position, &capsule.endpoint_a, &capsule.endpoint_b);
    let d = position - q;
    let dist = d.norm();
    if dist >= capsule.radius {
        return *position;
    }
    let normal = if dist < 1e-12 {
        capsule_frame_x(capsule)
    } else {
        d / dist
    };
    q + normal * capsule.radius
}

fn resolve_static_collision(position: &Vec3, radius: f64, collider: &Collider) -> Vec3 {
    match *collider {
        Collider::HalfSpace { normal, offset } => {
            let s = normal.dot(position) - offset - radius;
            if s < 0.0 {
                position - normal * s
            } else {
                *position
            }
        }
        Collider::Capsule { a, b, radius: r } => {
            resolve_capsule_collision(position, &ToolCapsule::new(a, b, r + radius))
        }
        Collider::Tube {
            base,
            height,
            inner_radius,
            outer_radius,
        } => {
            let rel = position - base;
            if rel.z < 0.0 || rel.z > height {
                return *position;
            }
            let rho = (rel.x * rel.x + rel.y * rel.y).sqrt();
            let lo = inner_radius - radius;
            let hi = outer_radius + radius;
            if rho <= lo || rho >= hi || rho < 1e-12 {
                return *position;
            }
            let target = if rho - lo < hi - rho { lo.max(0.0) } else { hi };
            let scale = target / rho;
            Vec3::new(base.x + rel.x * scale, base.y + rel.y * scale, position.z)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn constraint(rest: f64) -> DistanceConstraint {
        DistanceConstraint {
            id: ConstraintId(0),
            i: 0,
            j: 1,
            rest_length: rest,
            stiffness: 1.0,
        }
    }

    #[test]
    fn free_particle_gains_gravity_velocity() {
        let mut w = SoftWorld::new();
        w.add_particle(Particle::new(Vec3::zeros(), 1.0));
        w.step(&[], 0.1, 1, 1).unwrap();
        assert_abs_diff_eq!(w.particles[0].velocity, Vec3::new(0.0, 0.0, -981.0), epsilon = 1e-9);
    }

    #[test]
    fn pinned_particle_stays() {
        let mut w = SoftWorld::new();
        w.add_particle(Particle::new(Vec3::new(1.0, 2.0, 3.0), 0.0));
        for _ in 0..10 {
            w.step(&[], 0.1, 2, 5).unwrap();
        }
        assert_eq!(w.particles[0].position, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn stretched_pair_relaxes_to_rest() {
        let mut w = SoftWorld::new();
        w.gravity = Vec3::zeros();
        w.add_particle(Particle::new(Vec3::new(0.0, 0.0, 0.0), 1.0));
        w.add_particle(Particle::new(Vec3::new(20.0, 0.0, 0.0), 1.0));
        w.add_distance_with_rest(0, 1, 10.0, 1.0).unwrap();
        w.step(&[], 0.01, 1, 20).unwrap();
        let sep = (w.particles[0].position - w.particles[1].position).norm();
        assert!((sep - 10.0).abs() <= 0.1, "separation {sep}");
    }

    #[test]
    fn equal_mass_projection() {
        let a = Particle::new(Vec3::zeros(), 1.0);
        let b = Particle::new(Vec3::new(20.0, 0.0, 0.0), 1.0);
        let (da, db) = project_distance(&a, &b, &constraint(10.0)).unwrap();
        assert_abs_diff_eq!(da, Vec3::new(5.0, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(db, Vec3::new(-5.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn pinned_endpoint_takes_nothing() {
        let a = Particle::new(Vec3::zeros(), 0.0);
        let b = Particle::new(Vec3::new(20.0, 0.0, 0.0), 1.0);
        let (da, db) = project_distance(&a, &b, &constraint(10.0)).unwrap();
        assert_eq!(da, Vec3::zeros());
        assert_abs_diff_eq!(db, Vec3::new(-10.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn inverse_mass_ratio_splits_correction() {
        // w_i : w_j = 1 : 3, C = 8, so |d_i| = 8 * 1/4 = 2 and |d_j| = 8 * 3/4 = 6
        let a = Particle::new(Vec3::zeros(), 1.0);
        let b = Particle::new(Vec3::new(0.0, 18.0, 0.0), 3.0);
        let (da, db) = project_distance(&a, &b, &constraint(10.0)).unwrap();
        assert_abs_diff_eq!(da, Vec3::new(0.0, 2.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(db, Vec3::new(0.0, -6.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn coincident_particles_error() {
        let a = Particle::new(Vec3::zeros(), 1.0);
        let b = Particle::new(Vec3::new(1e-12, 0.0, 0.0), 1.0);
        assert_eq!(
            project_distance(&a, &b, &constraint(1.0)),
            Err(SoftBodyError::CoincidentParticles)
        );
    }

    #[test]
    fn capsule_axis_point_uses_fallback_normal() {
        let cap = ToolCapsule::new(Vec3::new(0.0, 0.0, -10.0), Vec3::new(0.0, 0.0, 10.0), 2.0);
        let out = resolve_capsule_collision(&Vec3::zeros(), &cap);
        assert_abs_diff_eq!(out, Vec3::new(2.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn capsule_outside_unchanged() {
        let cap = ToolCapsule::new(Vec3::new(0.0, 0.0, -10.0), Vec3::new(0.0, 0.0, 10.0), 2.0);
        let p = Vec3::new(0.0, 4.0, 3.0);
        assert_eq!(resolve_capsule_collision(&p, &cap), p);
    }

    #[test]
    fn capsule_half_radius_pushed_radially() {
        // closed form: axis point (0,0,3), radial dir +y, surface at y = r
        let cap = ToolCapsule::new(Vec3::new(0.0, 0.0, -10.0), Vec3::new(0.0, 0.0, 10.0), 2.0);
        let out = resolve_capsule_collision(&Vec3::new(0.0, 1.0, 3.0), &cap);
        assert_abs_diff_eq!(out, Vec3::new(0.0, 2.0, 3.0), epsilon = 1e-12);
    }

    fn rope(n: usize) -> SoftWorld {
        let mut w = SoftWorld::new();
        let pts: Vec<Vec3> = (0..n).map(|k| Vec3::new(k as f64 * 10.0, 0.0, 0.0)).collect();
        w.add_rope("rope", &pts, 1.0, 0.5, 1.0, 0.5, &[0]).unwrap();
        w
    }

    #[test]
    fn grasp_in_range_and_tie_break() {
        let mut w = SoftWorld::new();
        w.add_particle(Particle::new(Vec3::new(1.0, 0.0, 0.0), 1.0));
        w.add_particle(Particle::new(Vec3::new(-1.0, 0.0, 0.0), 1.0));
        w.add_body("pair", 0..2, true).unwrap();
        let mut tool = ToolCapsule::new(Vec3::new(0.0, 0.0, 10.0), Vec3::zeros(), 1.0);
        tool.jaw_closed = true;
        assert_eq!(w.grasp(0, &tool, 2.0), Some(0));
        // no re-grasp while held closed
        assert_eq!(w.grasp(0, &tool, 2.0), None);
        tool.jaw_closed = false;
        assert_eq!(w.grasp(0, &tool, 2.0), None);
        assert!(w.attachments.is_empty());
    }

    #[test]
    fn grasp_out_of_range() {
        let mut w = SoftWorld::new();
        w.add_particle(Particle::new(Vec3::new(3.0, 0.0, 0.0), 1.0));
        w.add_body("p", 0..1, true).unwrap();
        let mut tool = ToolCapsule::new(Vec3::new(0.0, 0.0, 10.0), Vec3::zeros(), 1.0);
        tool.jaw_closed = true;
        assert_eq!(w.grasp(0, &tool, 2.0), None);
        assert!(w.attachments.is_empty());
    }

    #[test]
    fn grasp_in_half_radius() {
        let mut w = SoftWorld::new();
        w.add_particle(Particle::new(Vec3::new(1.0, 0.0, 0.0), 1.0));
        w.add_body("p", 0..1, true).unwrap();
        let mut tool = ToolCapsule::new(Vec3::new(0.0, 0.0, 10.0), Vec3::zeros(), 1.0);
        tool.jaw_closed = true;
        assert_eq!(w.grasp(0, &tool, 2.0), Some(0));
        assert_eq!(w.release(0), 1);
    }

    #[test]
    fn inactive_tool_cuts_nothing() {
        let mut w = rope(10);
        let tool = ToolCapsule::new(Vec3::new(45.0, 0.0, 10.0), Vec3::new(45.0, 0.0, -10.0), 1.0);
        let before = w.distance_constraints.len();
        assert!(w.cut(&tool).is_empty());
        assert_eq!(w.distance_constraints.len(), before);
    }

    #[test]
    fn active_tool_missing_rope_cuts_nothing() {
        let mut w = rope(10);
        let mut tool = ToolCapsule::new(Vec3::new(45.0, 30.0, 10.0), Vec3::new(45.0, 30.0, -10.0), 1.0);
        tool.active = true;
        assert!(w.cut(&tool).is_empty());
    }

    #[test]
    fn attached_particle_follows_tool() {
        let mut w = rope(5);
        let tool = ToolCapsule::new(Vec3::new(40.0, 0.0, 20.0), Vec3::new(40.0, 0.0, 5.0), 1.0);
        w.attach(4, 0, Vec3::zeros()).unwrap();
        w.step(&[tool], 0.01, 2, 10).unwrap();
        assert_eq!(w.particles[4].position, Vec3::new(40.0, 0.0, 5.0));
    }

    #[test]
    fn body_ranges_must_be_disjoint() {
        let mut w = rope(5);
        assert!(w.add_body("again", 2..4, false).is_err());
    }

    #[test]
    fn segment_distance_cases() {
        let d = segment_segment_distance(
            &Vec3::new(0.0, 0.0, 0.0),
            &Vec3::new(10.0, 0.0, 0.0),
            &Vec3::new(5.0, -5.0, 3.0),
            &Vec3::new(5.0, 5.0, 3.0),
        );
        assert_abs_diff_eq!(d, 3.0, epsilon = 1e-12);
        let d = segment_segment_distance(
            &Vec3::new(0.0, 0.0, 0.0),
            &Vec3::new(1.0, 0.0, 0.0),
            &Vec3::new(4.0, 0.0, 0.0),
            &Vec3::new(6.0, 0.0, 0.0),
        );
        assert_abs_diff_eq!(d, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn unstable_detection() {
        let mut w = SoftWorld::new();
        w.speed_ceiling = 10.0;
        w.add_particle(Particle::new(Vec3::zeros(), 1.0));
        let err = w.step(&[], 0.1, 1, 1).unwrap_err();
        assert!(matches!(err, SoftBodyError::UnstableSimulation { .. }));
    }
}
