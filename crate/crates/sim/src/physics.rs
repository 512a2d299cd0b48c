//! Reduced-coordinate dynamics of a floating-base tree of hinge joints.
//!
//! Generalized velocity layout: `[ω_base (3), v_base (3), q̇ (n)]`, with the
//! base twist expressed in torso coordinates. Fixed-base models drop the
//! first six entries. The mass matrix comes from the composite-rigid-body
//! algorithm, the bias forces from recursive Newton–Euler.

use crate::morphology::{Geom, RobotSpec};
use crate::spatial::{axis_angle, Force, Mat3, Motion, RbInertia, Vec3, Xform};
use crate::terrain::{GroundContact, Terrain};
use nalgebra::{DMatrix, DVector, UnitQuaternion};
use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhysicsError {
    #[error("mass matrix is singular or ill-conditioned")]
    SingularMassMatrix,
    #[error("expected {expected} joint torques, got {got}")]
    TorqueDimension { expected: usize, got: usize },
    #[error("expected wrenches for {expected} links, got {got}")]
    WrenchDimension { expected: usize, got: usize },
    #[error("state has {got} joint coordinates, model has {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error("time step must be nonnegative and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("simulation produced a non-finite state at t = {time}")]
    Unstable { time: f64 },
}

/// Penalty contact constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactParams {
    /// Normal stiffness, N/m.
    pub stiffness: f64,
    /// Normal damping, N·s/m.
    pub damping: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Below this slip speed friction is viscous (regularized Coulomb), m/s.
    pub slip_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { stiffness: 1e5, damping: 1e3, friction: 0.8, slip_velocity: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    /// Gravitational acceleration along −z, m/s².
    pub gravity: f64,
    pub contact: ContactParams,
    /// Maximum integration substep, s.
    pub substep: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { gravity: GRAVITY, contact: ContactParams::default(), substep: 1e-3 }
    }
}

/// Generalized state of the articulated body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub base_pos: Vec3,
    pub base_rot: UnitQuaternion<f64>,
    /// Angular velocity of the torso in torso coordinates.
    pub base_ang_vel: Vec3,
    /// Velocity of the torso origin in torso coordinates.
    pub base_lin_vel: Vec3,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub time: f64,
}

impl SimState {
    /// Robot at rest with the given joint angles.
    pub fn at_rest(base_pos: Vec3, base_rot: UnitQuaternion<f64>, q: Vec<f64>) -> Self {
        let n = q.len();
        Self {
            base_pos,
            base_rot,
            base_ang_vel: Vec3::zeros(),
            base_lin_vel: Vec3::zeros(),
            q,
            qdot: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn base_twist(&self) -> Motion {
        Motion::new(self.base_ang_vel, self.base_lin_vel)
    }

    pub fn world_linear_velocity(&self) -> Vec3 {
        self.base_rot * self.base_lin_vel
    }

    pub fn world_angular_velocity(&self) -> Vec3 {
        self.base_rot * self.base_ang_vel
    }

    pub fn set_world_linear_velocity(&mut self, v: Vec3) {
        self.base_lin_vel = self.base_rot.inverse() * v;
    }

    pub fn set_world_angular_velocity(&mut self, w: Vec3) {
        self.base_ang_vel = self.base_rot.inverse() * w;
    }

    pub fn is_finite(&self) -> bool {
        self.base_pos.iter().all(|v| v.is_finite())
            && self.base_rot.coords.iter().all(|v| v.is_finite())
            && self.base_ang_vel.iter().all(|v| v.is_finite())
            && self.base_lin_vel.iter().all(|v| v.is_finite())
            && self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// Wrench applied to a link: world-frame force plus world-frame torque about
/// the link frame origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinkWrench {
    pub force: Vec3,
    pub torque: Vec3,
}

/// Spatial acceleration of the torso (torso coordinates) and joint accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedAccel {
    pub base: Motion,
    pub joints: Vec<f64>,
}

/// World poses produced by forward kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    /// Orientation (columns are link axes in world) and origin of each link, in link order.
    pub link_rot: Vec<Mat3>,
    pub link_pos: Vec<Vec3>,
    /// Reference points of every foot, in world coordinates.
    pub foot_points: Vec<Vec<Vec3>>,
}

/// Smallest accepted ratio between a squared Cholesky pivot and the largest
/// diagonal entry of the matrix.
const MIN_PIVOT_RATIO: f64 = 1e-12;

fn factor(m: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, PhysicsError> {
    let scale = m.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let chol = m.cholesky().ok_or(PhysicsError::SingularMassMatrix)?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if !(scale > 0.0 && min_pivot >= MIN_PIVOT_RATIO * scale) {
        return Err(PhysicsError::SingularMassMatrix);
    }
    Ok(chol)
}

#[derive(Debug, Clone)]
struct Body {
    parent: usize,
    link: usize,
    /// Joint frame placement in the parent frame.
    origin_rot: Mat3,
    origin_pos: Vec3,
    axis: Vec3,
    damping: f64,
    limits: [f64; 2],
}

#[derive(Debug, Clone, Copy)]
struct ContactSite {
    body: usize,
    local: Vec3,
    radius: f64,
}

#[derive(Debug, Clone)]
struct Frames {
    /// Parent-to-body transform per body (body 0: world-to-torso).
    x_up: Vec<Xform>,
    rot: Vec<Mat3>,
    pos: Vec<Vec3>,
}

#[derive(Debug, Clone)]
struct ActiveContact {
    body: usize,
    point: Vec3,
    force: Vec3,
    jac: DMatrix<f64>,
    /// Linearized force derivative with respect to contact-point velocity.
    gain: Mat3,
}

/// Simulation model compiled from a [`RobotSpec`].
#[derive(Debug, Clone)]
pub struct Simulator {
    pub config: PhysicsConfig,
    fixed_base: bool,
    torso_link: usize,
    /// Body index 0 is the torso; body `j + 1` is the child of joint `j`.
    bodies: Vec<Body>,
    inertia: Vec<RbInertia>,
    link_to_body: Vec<usize>,
    sites: Vec<ContactSite>,
    feet: Vec<(usize, Vec<Vec3>)>,
    total_mass: f64,
}

impl Simulator {
    pub fn new(spec: &RobotSpec, config: PhysicsConfig) -> Result<Self, PhysicsError> {
        let torso_link = spec.link_index(&spec.torso_link).expect("validated spec");
        let mut link_to_body = vec![usize::MAX; spec.links.len()];
        link_to_body[torso_link] = 0;
        let mut bodies = vec![Body {
            parent: usize::MAX,
            link: torso_link,
            origin_rot: Mat3::identity(),
            origin_pos: Vec3::zeros(),
            axis: Vec3::zeros(),
            damping: 0.0,
            limits: [f64::NEG_INFINITY, f64::INFINITY],
        }];
        for (j, joint) in spec.joints.iter().enumerate() {
            let parent_link = spec.link_index(&joint.parent).expect("validated spec");
            let child_link = spec.link_index(&joint.child).expect("validated spec");
            link_to_body[child_link] = j + 1;
            bodies.push(Body {
                parent: link_to_body[parent_link],
                link: child_link,
                origin_rot: joint.origin.rotation(),
                origin_pos: joint.origin.translation(),
                axis: joint.axis_vec(),
                damping: joint.damping,
                limits: joint.limits,
            });
        }
        let inertia: Vec<RbInertia> = bodies
            .iter()
            .map(|b| {
                let l = &spec.links[b.link];
                RbInertia::from_com(l.mass, Vec3::from(l.com), l.inertia_matrix())
            })
            .collect();

        // Only the torso and the feet touch the ground.
        let mut colliding = vec![false; spec.links.len()];
        colliding[torso_link] = true;
        let mut feet = Vec::new();
        for foot in &spec.feet {
            let link = spec.link_index(&foot.link).expect("validated spec");
            colliding[link] = true;
            feet.push((link, foot.points.iter().map(|p| Vec3::from(*p)).collect()));
        }
        let mut sites = Vec::new();
        for (link, l) in spec.links.iter().enumerate() {
            if !colliding[link] {
                continue;
            }
            let body = link_to_body[link];
            for g in &l.geoms {
                match g {
                    Geom::Sphere { radius, position } => {
                        sites.push(ContactSite { body, local: Vec3::from(*position), radius: *radius })
                    }
                    Geom::Box { half_extents, pose } => {
                        let r = pose.rotation();
                        let c = pose.translation();
                        for corner in 0..8 {
                            let sign = |bit: usize| if corner & (1 << bit) == 0 { -1.0 } else { 1.0 };
                            let local = Vec3::new(
                                sign(0) * half_extents[0],
                                sign(1) * half_extents[1],
                                sign(2) * half_extents[2],
                            );
                            sites.push(ContactSite { body, local: c + r * local, radius: 0.0 });
                        }
                    }
                }
            }
        }
        let total_mass = inertia.iter().map(|i| i.mass).sum();
        let sim = Self {
            config,
            fixed_base: spec.fixed_base,
            torso_link,
            bodies,
            inertia,
            link_to_body,
            sites,
            feet,
            total_mass,
        };
        // Reject morphologies whose mass matrix cannot be factored.
        let probe = SimState::at_rest(Vec3::zeros(), UnitQuaternion::identity(), spec.default_pose());
        let frames = sim.frames(&probe);
        factor(sim.mass_matrix_from(&frames))?;
        Ok(sim)
    }

    pub fn num_joints(&self) -> usize {
        self.bodies.len() - 1
    }

    /// Dimension of the generalized velocity.
    pub fn nv(&self) -> usize {
        self.base_dofs() + self.num_joints()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn fixed_base(&self) -> bool {
        self.fixed_base
    }

    fn base_dofs(&self) -> usize {
        if self.fixed_base {
            0
        } else {
            6
        }
    }

    fn check_state(&self, state: &SimState) -> Result<(), PhysicsError> {
        let n = self.num_joints();
        if state.q.len() != n || state.qdot.len() != n {
            return Err(PhysicsError::StateDimension { expected: n, got: state.q.len().min(state.qdot.len()) });
        }
        Ok(())
    }

    fn frames(&self, state: &SimState) -> Frames {
        self.frames_at(state.base_rot.to_rotation_matrix().into_inner(), state.base_pos, &state.q)
    }

    fn frames_at(&self, base_rot: Mat3, base_pos: Vec3, q: &[f64]) -> Frames {
        let nb = self.bodies.len();
        let mut x_up = Vec::with_capacity(nb);
        let mut rot = Vec::with_capacity(nb);
        let mut pos = Vec::with_capacity(nb);
        x_up.push(Xform::from_pose(&base_rot, base_pos));
        rot.push(base_rot);
        pos.push(base_pos);
        for (i, b) in self.bodies.iter().enumerate().skip(1) {
            let local_rot = b.origin_rot * axis_angle(&b.axis, q[i - 1]);
            x_up.push(Xform::from_pose(&local_rot, b.origin_pos));
            let r = rot[b.parent] * local_rot;
            let p = pos[b.parent] + rot[b.parent] * b.origin_pos;
            rot.push(r);
            pos.push(p);
        }
        Frames { x_up, rot, pos }
    }

    /// Motion subspace columns of body `i`, in body coordinates.
    fn dof_columns(&self, i: usize) -> (usize, Vec<Motion>) {
        let nb = self.base_dofs();
        if i == 0 {
            let cols = (0..nb)
                .map(|k| {
                    let mut m = [0.0; 6];
                    m[k] = 1.0;
                    Motion::from_slice(&m)
                })
                .collect();
            (0, cols)
        } else {
            (nb + i - 1, vec![Motion::new(self.bodies[i].axis, Vec3::zeros())])
        }
    }

    fn body_velocities(&self, frames: &Frames, state: &SimState) -> Vec<Motion> {
        let mut vel = Vec::with_capacity(self.bodies.len());
        vel.push(if self.fixed_base { Motion::zero() } else { state.base_twist() });
        for (i, b) in self.bodies.iter().enumerate().skip(1) {
            let v = frames.x_up[i].apply_motion(&vel[b.parent]) + Motion::new(b.axis * state.qdot[i - 1], Vec3::zeros());
            vel.push(v);
        }
        vel
    }

    fn gen_velocity(&self, state: &SimState) -> DVector<f64> {
        let mut v = DVector::zeros(self.nv());
        let nb = self.base_dofs();
        if !self.fixed_base {
            v.rows_mut(0, 6).copy_from_slice(&state.base_twist().to_array());
        }
        v.rows_mut(nb, self.num_joints()).copy_from_slice(&state.qdot);
        v
    }

    fn set_gen_velocity(&self, state: &mut SimState, v: &DVector<f64>) {
        let nb = self.base_dofs();
        if !self.fixed_base {
            state.base_ang_vel = Vec3::new(v[0], v[1], v[2]);
            state.base_lin_vel = Vec3::new(v[3], v[4], v[5]);
        }
        state.qdot.copy_from_slice(v.rows(nb, self.num_joints()).as_slice());
    }

    fn mass_matrix_from(&self, frames: &Frames) -> DMatrix<f64> {
        let nb = self.bodies.len();
        let nv = self.nv();
        let mut ic = self.inertia.clone();
        for i in (1..nb).rev() {
            let p = self.bodies[i].parent;
            let contrib = ic[i].to_parent(&frames.x_up[i]);
            ic[p] += contrib;
        }
        let mut m = DMatrix::zeros(nv, nv);
        for i in 0..nb {
            let (off, cols) = self.dof_columns(i);
            for (a, s) in cols.iter().enumerate() {
                let mut f = ic[i].mul_motion(s);
                let row = off + a;
                for (b, s2) in cols.iter().enumerate() {
                    m[(off + b, row)] = s2.dot(&f);
                }
                let mut j = i;
                while j != 0 {
                    f = frames.x_up[j].inv_apply_force(&f);
                    j = self.bodies[j].parent;
                    if j == 0 && self.fixed_base {
                        break;
                    }
                    let (off_j, cols_j) = self.dof_columns(j);
                    for (b, s2) in cols_j.iter().enumerate() {
                        let val = s2.dot(&f);
                        m[(off_j + b, row)] = val;
                        m[(row, off_j + b)] = val;
                    }
                }
            }
        }
        m
    }

    /// Bias forces `C(q, q̇)` including gravity.
    fn bias_from(&self, frames: &Frames, vel: &[Motion]) -> DVector<f64> {
        let nb = self.bodies.len();
        let g_up = Motion::new(Vec3::zeros(), Vec3::new(0.0, 0.0, self.config.gravity));
        let mut acc = Vec::with_capacity(nb);
        acc.push(frames.x_up[0].apply_motion(&g_up));
        for (i, b) in self.bodies.iter().enumerate().skip(1) {
            let joint_vel = vel[i] - frames.x_up[i].apply_motion(&vel[b.parent]);
            acc.push(frames.x_up[i].apply_motion(&acc[b.parent]) + vel[i].cross_motion(&joint_vel));
        }
        let mut f: Vec<Force> = (0..nb)
            .map(|i| self.inertia[i].mul_motion(&acc[i]) + vel[i].cross_force(&self.inertia[i].mul_motion(&vel[i])))
            .collect();
        let mut c = DVector::zeros(self.nv());
        self.project_forces(frames, &mut f, &mut c);
        c
    }

    /// Accumulate body-coordinate forces up the tree into generalized forces.
    fn project_forces(&self, frames: &Frames, f: &mut [Force], out: &mut DVector<f64>) {
        for i in (0..self.bodies.len()).rev() {
            let (off, cols) = self.dof_columns(i);
            for (a, s) in cols.iter().enumerate() {
                out[off + a] += s.dot(&f[i]);
            }
            if i != 0 {
                let up = frames.x_up[i].inv_apply_force(&f[i]);
                f[self.bodies[i].parent] += up;
            }
        }
    }

    /// Generalized force of world wrenches acting on links.
    fn wrench_forces(&self, frames: &Frames, ext: &[LinkWrench]) -> DVector<f64> {
        let mut f = vec![Force::zero(); self.bodies.len()];
        for (link, w) in ext.iter().enumerate() {
            let b = self.link_to_body[link];
            let r = &frames.rot[b];
            f[b] += Force::new(r.tr_mul(&w.torque), r.tr_mul(&w.force));
        }
        let mut out = DVector::zeros(self.nv());
        self.project_forces(frames, &mut f, &mut out);
        out
    }

    /// World-frame linear velocity Jacobian of a point fixed to `body`.
    fn point_jacobian(&self, frames: &Frames, body: usize, point: &Vec3) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, self.nv());
        let mut k = body;
        loop {
            if k == 0 && self.fixed_base {
                break;
            }
            let (off, cols) = self.dof_columns(k);
            let r = &frames.rot[k];
            let lever = point - frames.pos[k];
            for (a, s) in cols.iter().enumerate() {
                let w = r * s.ang;
                let v = r * s.lin + w.cross(&lever);
                jac.column_mut(off + a).copy_from(&v);
            }
            if k == 0 {
                break;
            }
            k = self.bodies[k].parent;
        }
        jac
    }

    pub fn mass_matrix(&self, state: &SimState) -> DMatrix<f64> {
        self.mass_matrix_from(&self.frames(state))
    }

    /// Solves `M a = τ − C + Jᵀ f_ext`. `ext` is either empty or one wrench per link.
    pub fn forward_dynamics(
        &self,
        state: &SimState,
        joint_torques: &[f64],
        ext: &[LinkWrench],
    ) -> Result<GeneralizedAccel, PhysicsError> {
        self.check_state(state)?;
        let n = self.num_joints();
        if joint_torques.len() != n {
            return Err(PhysicsError::TorqueDimension { expected: n, got: joint_torques.len() });
        }
        let n_links = self.link_to_body.len();
        if !ext.is_empty() && ext.len() != n_links {
            return Err(PhysicsError::WrenchDimension { expected: n_links, got: ext.len() });
        }
        let frames = self.frames(state);
        let vel = self.body_velocities(&frames, state);
        let m = self.mass_matrix_from(&frames);
        let mut rhs = -self.bias_from(&frames, &vel);
        let nb = self.base_dofs();
        for (j, t) in joint_torques.iter().enumerate() {
            rhs[nb + j] += t - self.bodies[j + 1].damping * state.qdot[j];
        }
        if !ext.is_empty() {
            rhs += self.wrench_forces(&frames, ext);
        }
        let chol = factor(m)?;
        let a = chol.solve(&rhs);
        let base = if self.fixed_base { Motion::zero() } else { Motion::from_slice(&a.as_slice()[..6]) };
        Ok(GeneralizedAccel { base, joints: a.as_slice()[nb..].to_vec() })
    }

    /// Classical (non-spatial) acceleration of the torso origin in world coordinates.
    pub fn base_linear_acceleration_world(&self, state: &SimState, acc: &GeneralizedAccel) -> Vec3 {
        state.base_rot * (acc.base.lin + state.base_ang_vel.cross(&state.base_lin_vel))
    }

    fn detect_contacts(&self, frames: &Frames, terrain: &Terrain) -> Vec<(usize, Vec3, GroundContact)> {
        let mut hits = Vec::new();
        let mut scratch = Vec::new();
        for site in &self.sites {
            let center = frames.pos[site.body] + frames.rot[site.body] * site.local;
            scratch.clear();
            terrain.collide(&center, site.radius, &mut scratch);
            for c in &scratch {
                let point = center - c.normal * (site.radius - 0.5 * c.depth).max(0.0);
                hits.push((site.body, point, *c));
            }
        }
        hits
    }

    fn active_contacts(&self, frames: &Frames, v: &DVector<f64>, terrain: &Terrain, dt: f64) -> Vec<ActiveContact> {
        let cp = &self.config.contact;
        let mut out = Vec::new();
        for (body, point, c) in self.detect_contacts(frames, terrain) {
            let jac = self.point_jacobian(frames, body, &point);
            let vp: Vec3 = Vec3::from_iterator((&jac * v).iter().copied());
            let n = c.normal;
            let vn = n.dot(&vp);
            let f_n = cp.stiffness * c.depth - cp.damping * vn;
            if f_n <= 0.0 {
                continue;
            }
            let vt = vp - n * vn;
            let slope = cp.friction * f_n / vt.norm().max(cp.slip_velocity);
            let force = n * f_n - vt * slope;
            let nn = n * n.transpose();
            let gain = nn * (cp.damping + dt * cp.stiffness) + (Mat3::identity() - nn) * slope;
            out.push(ActiveContact { body, point, force, jac, gain });
        }
        out
    }

    /// Penalty contact wrenches per link (world frame, torque about link origin).
    pub fn contact_forces(&self, state: &SimState, terrain: &Terrain) -> Vec<LinkWrench> {
        let frames = self.frames(state);
        let v = self.gen_velocity(state);
        let mut out = vec![LinkWrench::default(); self.link_to_body.len()];
        for c in self.active_contacts(&frames, &v, terrain, 0.0) {
            let link = self.bodies[c.body].link;
            let lever = c.point - frames.pos[c.body];
            out[link].force += c.force;
            out[link].torque += lever.cross(&c.force);
        }
        out
    }

    /// Advance by `dt` with joint torques held constant, using as many equal
    /// substeps as needed to respect the configured maximum substep.
    pub fn step(&self, state: &SimState, joint_torques: &[f64], terrain: &Terrain, dt: f64) -> Result<SimState, PhysicsError> {
        self.step_linearized(state, joint_torques, &[], &[], terrain, dt)
    }

    /// Like [`Simulator::step`], for joint torques that depend on the joint
    /// state with `∂τ/∂q = -stiffness` and `∂τ/∂q̇ = -damping` (per joint,
    /// empty slices meaning zero). The torques are still evaluated by the
    /// caller; the derivatives make the update linearly implicit in them.
    pub fn step_linearized(
        &self,
        state: &SimState,
        joint_torques: &[f64],
        stiffness: &[f64],
        damping: &[f64],
        terrain: &Terrain,
        dt: f64,
    ) -> Result<SimState, PhysicsError> {
        self.check_state(state)?;
        let n = self.num_joints();
        for len in [joint_torques.len(), stiffness.len().max(n), damping.len().max(n)] {
            if len != n {
                return Err(PhysicsError::TorqueDimension { expected: n, got: len });
            }
        }
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(PhysicsError::InvalidTimeStep(dt));
        }
        if dt == 0.0 {
            return Ok(state.clone());
        }
        let n_sub = (dt / self.config.substep - 1e-9).ceil().max(1.0) as usize;
        let h = dt / n_sub as f64;
        let mut s = state.clone();
        for _ in 0..n_sub {
            s = self.substep(&s, joint_torques, stiffness, damping, terrain, h)?;
        }
        Ok(s)
    }

    fn substep(
        &self,
        state: &SimState,
        joint_torques: &[f64],
        stiffness: &[f64],
        damping: &[f64],
        terrain: &Terrain,
        h: f64,
    ) -> Result<SimState, PhysicsError> {
        let nb = self.base_dofs();
        let n = self.num_joints();
        let frames = self.frames(state);
        let vel = self.body_velocities(&frames, state);
        let v = self.gen_velocity(state);
        let mut lhs = self.mass_matrix_from(&frames);
        let bias = self.bias_from(&frames, &vel);
        let mut rhs = -&bias;
        for j in 0..n {
            let d = self.bodies[j + 1].damping;
            let k_ext = stiffness.get(j).copied().unwrap_or(0.0);
            let d_ext = damping.get(j).copied().unwrap_or(0.0);
            // q⁺ = q + h q̇⁺, so the stiffness enters as h²k and also acts on h q̇.
            rhs[nb + j] += joint_torques[j] - d * state.qdot[j] - h * k_ext * state.qdot[j];
            lhs[(nb + j, nb + j)] += h * (d + d_ext) + h * h * k_ext;
        }
        let contacts = self.active_contacts(&frames, &v, terrain, h);
        for c in &contacts {
            rhs += c.jac.tr_mul(&DVector::from_column_slice(c.force.as_slice()));
            let gj = c.gain * &c.jac;
            lhs += c.jac.tr_mul(&gj) * h;
        }
        let chol = factor(lhs)?;
        // Velocity-product terms are evaluated at a predicted midpoint
        // velocity; light links on a tumbling base make them too stiff for a
        // plain explicit evaluation.
        let dv_half = chol.solve(&(&rhs * (0.5 * h)));
        let mut mid = state.clone();
        self.set_gen_velocity(&mut mid, &(&v + &dv_half));
        let vel_mid = self.body_velocities(&frames, &mid);
        rhs += bias - self.bias_from(&frames, &vel_mid);
        let dv = chol.solve(&(rhs * h));
        let v_new = &v + &dv;

        let mut next = state.clone();
        next.time += h;
        for j in 0..n {
            let b = &self.bodies[j + 1];
            let mut qd = v_new[nb + j];
            let mut q = state.q[j] + h * qd;
            if q < b.limits[0] {
                q = b.limits[0];
                qd = qd.max(0.0);
            } else if q > b.limits[1] {
                q = b.limits[1];
                qd = qd.min(0.0);
            }
            next.q[j] = q;
            next.qdot[j] = qd;
        }
        if !self.fixed_base {
            let w = Vec3::new(v_new[0], v_new[1], v_new[2]);
            let vl = Vec3::new(v_new[3], v_new[4], v_new[5]);
            next.base_pos = state.base_pos + state.base_rot * vl * h;
            let rot = state.base_rot * UnitQuaternion::from_scaled_axis(w * h);
            next.base_rot = UnitQuaternion::new_normalize(rot.into_inner());
            next.base_ang_vel = w;
            next.base_lin_vel = vl;

            // Re-impose the discrete momentum balance at the new configuration:
            // h⁺ = h + dt·(gravity + effective contact wrenches), so internal
            // motion can neither create nor destroy momentum.
            let mut target = self.momentum_from(&frames, &v);
            let com = self.com_from(&frames);
            let weight = Vec3::new(0.0, 0.0, -self.config.gravity * self.total_mass);
            target.ang += com.cross(&weight) * h;
            target.lin += weight * h;
            for c in &contacts {
                let jdv = Vec3::from_iterator((&c.jac * &dv).iter().copied());
                let f_eff = c.force - c.gain * jdv;
                target.ang += c.point.cross(&f_eff) * h;
                target.lin += f_eff * h;
            }
            self.project_base_velocity(&mut next, &target)?;
        }
        if !next.is_finite() {
            return Err(PhysicsError::Unstable { time: next.time });
        }
        Ok(next)
    }

    /// Choose the base twist so the total world momentum equals `target`.
    fn project_base_velocity(&self, state: &mut SimState, target: &Force) -> Result<(), PhysicsError> {
        let frames = self.frames(state);
        let m = self.mass_matrix_from(&frames);
        let n = self.num_joints();
        let base_target = frames.x_up[0].apply_force(target).to_array();
        let mut rhs = nalgebra::Vector6::from_column_slice(&base_target);
        for j in 0..n {
            for r in 0..6 {
                rhs[r] -= m[(r, 6 + j)] * state.qdot[j];
            }
        }
        let m00 = m.fixed_view::<6, 6>(0, 0).into_owned();
        let sol = m00.cholesky().ok_or(PhysicsError::SingularMassMatrix)?.solve(&rhs);
        state.base_ang_vel = Vec3::new(sol[0], sol[1], sol[2]);
        state.base_lin_vel = Vec3::new(sol[3], sol[4], sol[5]);
        Ok(())
    }

    fn momentum_from(&self, frames: &Frames, v: &DVector<f64>) -> Force {
        if self.fixed_base {
            return Force::zero();
        }
        let m = self.mass_matrix_from(frames);
        let h = m.rows(0, 6) * v;
        frames.x_up[0].inv_apply_force(&Force::new(Vec3::new(h[0], h[1], h[2]), Vec3::new(h[3], h[4], h[5])))
    }

    fn com_from(&self, frames: &Frames) -> Vec3 {
        let mut acc = Vec3::zeros();
        for (i, inertia) in self.inertia.iter().enumerate() {
            acc += (frames.pos[i] + frames.rot[i] * inertia.com()) * inertia.mass;
        }
        acc / self.total_mass
    }

    /// Total spatial momentum about the world origin, world coordinates
    /// (`ang` = angular momentum, `lin` = linear momentum).
    pub fn momentum(&self, state: &SimState) -> Force {
        let frames = self.frames(state);
        let v = self.gen_velocity(state);
        self.momentum_from(&frames, &v)
    }

    pub fn center_of_mass(&self, state: &SimState) -> Vec3 {
        self.com_from(&self.frames(state))
    }

    pub fn kinetic_energy(&self, state: &SimState) -> f64 {
        let frames = self.frames(state);
        let v = self.gen_velocity(state);
        let m = self.mass_matrix_from(&frames);
        0.5 * v.dot(&(m * &v))
    }

    pub fn potential_energy(&self, state: &SimState) -> f64 {
        self.total_mass * self.config.gravity * self.center_of_mass(state).z
    }

    pub fn forward_kinematics(&self, state: &SimState) -> Kinematics {
        let frames = self.frames(state);
        self.kinematics_from(&frames)
    }

    /// Link poses and foot points with the torso placed at `base_rot`, `base_pos`.
    pub fn kinematics_at(&self, base_rot: &Mat3, base_pos: &Vec3, q: &[f64]) -> Kinematics {
        self.kinematics_from(&self.frames_at(*base_rot, *base_pos, q))
    }

    fn kinematics_from(&self, frames: &Frames) -> Kinematics {
        let n_links = self.link_to_body.len();
        let mut link_rot = vec![Mat3::identity(); n_links];
        let mut link_pos = vec![Vec3::zeros(); n_links];
        for (link, &b) in self.link_to_body.iter().enumerate() {
            link_rot[link] = frames.rot[b];
            link_pos[link] = frames.pos[b];
        }
        let foot_points = self
            .feet
            .iter()
            .map(|(link, pts)| {
                let b = self.link_to_body[*link];
                pts.iter().map(|p| frames.pos[b] + frames.rot[b] * p).collect()
            })
            .collect();
        Kinematics { link_rot, link_pos, foot_points }
    }

    pub fn torso_link(&self) -> usize {
        self.torso_link
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{box_inertia, FootDef, JointDef, Pose, RigidLink, SCHEMA_VERSION};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    pub(crate) fn block(mass: f64) -> RigidLink {
        RigidLink {
            name: "torso".into(),
            mass,
            com: [0.0; 3],
            inertia: box_inertia(mass, [0.2, 0.2, 0.2]),
            geoms: vec![Geom::Sphere { radius: 0.1, position: [0.0; 3] }],
        }
    }

    fn single_body(mass: f64) -> RobotSpec {
        RobotSpec {
            schema_version: SCHEMA_VERSION,
            name: "block".into(),
            notes: String::new(),
            torso_link: "torso".into(),
            fixed_base: false,
            initial_base_height: 0.1,
            actuator_models: BTreeMap::new(),
            links: vec![block(mass)],
            joints: vec![],
            feet: vec![],
        }
    }

    #[test]
    fn free_body_falls_at_g() {
        let spec = single_body(2.0);
        let sim = Simulator::new(&spec, PhysicsConfig::default()).unwrap();
        let mut s = SimState::at_rest(Vec3::new(0.0, 0.0, 1.0), UnitQuaternion::from_euler_angles(0.3, 0.2, 0.1), vec![]);
        let a = sim.forward_dynamics(&s, &[], &[]).unwrap();
        let lin = sim.base_linear_acceleration_world(&s, &a);
        assert_relative_eq!(lin, Vec3::new(0.0, 0.0, -GRAVITY), epsilon = 1e-12);
        assert_relative_eq!(a.base.ang, Vec3::zeros(), epsilon = 1e-12);
        s.set_world_angular_velocity(Vec3::new(0.0, 0.0, 2.0));
        let a = sim.forward_dynamics(&s, &[], &[]).unwrap();
        assert_relative_eq!(sim.base_linear_acceleration_world(&s, &a), Vec3::new(0.0, 0.0, -GRAVITY), epsilon = 1e-12);
    }

    #[test]
    fn resting_sphere_balances_gravity() {
        let spec = single_body(2.0);
        let cfg = PhysicsConfig::default();
        let sim = Simulator::new(&spec, cfg).unwrap();
        let d = 2.0 * GRAVITY / cfg.contact.stiffness;
        let s = SimState::at_rest(Vec3::new(0.0, 0.0, 0.1 - d), UnitQuaternion::identity(), vec![]);
        let w = sim.contact_forces(&s, &Terrain::flat());
        assert_relative_eq!(w[0].force.z, 2.0 * GRAVITY, epsilon = 1e-9);
        let a = sim.forward_dynamics(&s, &[], &w).unwrap();
        assert!(sim.base_linear_acceleration_world(&s, &a).norm() < 1e-9);
    }

    #[test]
    fn separated_geometry_has_no_wrench() {
        let spec = single_body(2.0);
        let sim = Simulator::new(&spec, PhysicsConfig::default()).unwrap();
        let s = SimState::at_rest(Vec3::new(0.0, 0.0, 0.11), UnitQuaternion::identity(), vec![]);
        let w = sim.contact_forces(&s, &Terrain::flat());
        assert_eq!(w[0], LinkWrench::default());
    }

    #[test]
    fn zero_dt_is_identity() {
        let spec = single_body(1.0);
        let sim = Simulator::new(&spec, PhysicsConfig::default()).unwrap();
        let s = SimState::at_rest(Vec3::new(0.0, 0.0, 1.0), UnitQuaternion::identity(), vec![]);
        assert_eq!(sim.step(&s, &[], &Terrain::flat(), 0.0).unwrap(), s);
        assert!(matches!(sim.step(&s, &[], &Terrain::flat(), -1.0), Err(PhysicsError::InvalidTimeStep(_))));
    }

    #[test]
    fn torque_and_wrench_dimensions_are_checked() {
        let spec = single_body(1.0);
        let sim = Simulator::new(&spec, PhysicsConfig::default()).unwrap();
        let s = SimState::at_rest(Vec3::zeros(), UnitQuaternion::identity(), vec![]);
        assert!(matches!(sim.forward_dynamics(&s, &[1.0], &[]), Err(PhysicsError::TorqueDimension { .. })));
        let w = vec![LinkWrench::default(); 3];
        assert!(matches!(sim.forward_dynamics(&s, &[], &w), Err(PhysicsError::WrenchDimension { .. })));
    }

    #[test]
    fn massless_chain_is_rejected() {
        let mut spec = single_body(1.0);
        spec.links.push(RigidLink {
            name: "stick".into(),
            mass: 1e-300,
            com: [0.0; 3],
            inertia: [[1e-300, 0.0, 0.0], [0.0, 1e-300, 0.0], [0.0, 0.0, 1e-300]],
            geoms: vec![],
        });
        spec.actuator_models.insert("a".into(), Default::default());
        spec.joints.push(JointDef {
            name: "j".into(),
            parent: "torso".into(),
            child: "stick".into(),
            axis: [0.0, 1.0, 0.0],
            limits: [-1.0, 1.0],
            origin: Pose { xyz: [0.3, 0.0, 0.0], rpy: [0.0; 3] },
            default_angle: 0.0,
            action_bounds: [-0.5, 0.5],
            actuator: "a".into(),
            damping: 0.0,
        });
        spec.feet.push(FootDef { link: "torso".into(), points: vec![[0.0; 3]] });
        assert!(matches!(Simulator::new(&spec, PhysicsConfig::default()), Err(PhysicsError::SingularMassMatrix)));
    }
}
