//! Spatial (6D) vector algebra in Plücker coordinates.
//!
//! Motion and force vectors are stored as an (angular, linear) pair of
//! 3-vectors. Transforms map coordinates from a parent frame into a child
//! frame, following the usual rigid-body-dynamics convention.

use nalgebra::{Matrix3, Vector3};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Motion {
    pub ang: Vec3,
    pub lin: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Force {
    pub ang: Vec3,
    pub lin: Vec3,
}

impl Motion {
    pub const fn new(ang: Vec3, lin: Vec3) -> Self {
        Self { ang, lin }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Motion cross product `self × m`.
    pub fn cross_motion(&self, m: &Motion) -> Motion {
        Motion {
            ang: self.ang.cross(&m.ang),
            lin: self.ang.cross(&m.lin) + self.lin.cross(&m.ang),
        }
    }

    /// Force cross product `self ×* f`.
    pub fn cross_force(&self, f: &Force) -> Force {
        Force {
            ang: self.ang.cross(&f.ang) + self.lin.cross(&f.lin),
            lin: self.ang.cross(&f.lin),
        }
    }

    /// Power pairing with a force vector.
    pub fn dot(&self, f: &Force) -> f64 {
        self.ang.dot(&f.ang) + self.lin.dot(&f.lin)
    }

    pub fn is_finite(&self) -> bool {
        self.ang.iter().chain(self.lin.iter()).all(|x| x.is_finite())
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.ang.x, self.ang.y, self.ang.z, self.lin.x, self.lin.y, self.lin.z]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            ang: Vec3::new(s[0], s[1], s[2]),
            lin: Vec3::new(s[3], s[4], s[5]),
        }
    }
}

impl Force {
    pub const fn new(ang: Vec3, lin: Vec3) -> Self {
        Self { ang, lin }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.ang.x, self.ang.y, self.ang.z, self.lin.x, self.lin.y, self.lin.z]
    }
}

macro_rules! impl_vec_ops {
    ($t:ty) => {
        impl Add for $t {
            type Output = $t;
            fn add(self, o: $t) -> $t {
                Self { ang: self.ang + o.ang, lin: self.lin + o.lin }
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(self, o: $t) -> $t {
                Self { ang: self.ang - o.ang, lin: self.lin - o.lin }
            }
        }
        impl AddAssign for $t {
            fn add_assign(&mut self, o: $t) {
                self.ang += o.ang;
                self.lin += o.lin;
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                Self { ang: -self.ang, lin: -self.lin }
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(self, s: f64) -> $t {
                Self { ang: self.ang * s, lin: self.lin * s }
            }
        }
    };
}

impl_vec_ops!(Motion);
impl_vec_ops!(Force);

/// Plücker transform from frame A (parent) to frame B (child).
///
/// `rot` maps A coordinates into B coordinates; `pos` is the origin of B
/// expressed in A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Xform {
    pub rot: Mat3,
    pub pos: Vec3,
}

impl Default for Xform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Xform {
    pub fn identity() -> Self {
        Self { rot: Mat3::identity(), pos: Vec3::zeros() }
    }

    /// Transform into a frame located at `pos` whose axes are `orient` (columns
    /// are the child axes in parent coordinates).
    pub fn from_pose(orient: &Mat3, pos: Vec3) -> Self {
        Self { rot: orient.transpose(), pos }
    }

    pub fn apply_motion(&self, m: &Motion) -> Motion {
        Motion {
            ang: self.rot * m.ang,
            lin: self.rot * (m.lin - self.pos.cross(&m.ang)),
        }
    }

    pub fn apply_force(&self, f: &Force) -> Force {
        Force {
            ang: self.rot * (f.ang - self.pos.cross(&f.lin)),
            lin: self.rot * f.lin,
        }
    }

    /// Child-to-parent mapping of a motion vector.
    pub fn inv_apply_motion(&self, m: &Motion) -> Motion {
        let ang = self.rot.tr_mul(&m.ang);
        Motion { ang, lin: self.rot.tr_mul(&m.lin) + self.pos.cross(&ang) }
    }

    /// Child-to-parent mapping of a force vector.
    pub fn inv_apply_force(&self, f: &Force) -> Force {
        let lin = self.rot.tr_mul(&f.lin);
        Force { ang: self.rot.tr_mul(&f.ang) + self.pos.cross(&lin), lin }
    }

    /// `self` maps A→B, `next` maps B→C; the result maps A→C.
    pub fn then(&self, next: &Xform) -> Xform {
        Xform {
            rot: next.rot * self.rot,
            pos: self.pos + self.rot.tr_mul(&next.pos),
        }
    }
}

/// Spatial inertia of a rigid body (or composite), about the frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbInertia {
    pub mass: f64,
    /// First mass moment `mass * com`.
    pub h: Vec3,
    /// Rotational inertia about the frame origin.
    pub i_o: Mat3,
}

impl Default for RbInertia {
    fn default() -> Self {
        Self::zero()
    }
}

fn parallel_axis(mass: f64, c: &Vec3) -> Mat3 {
    (Mat3::identity() * c.norm_squared() - c * c.transpose()) * mass
}

impl RbInertia {
    pub fn zero() -> Self {
        Self { mass: 0.0, h: Vec3::zeros(), i_o: Mat3::zeros() }
    }

    /// Build from mass, centre of mass and inertia about the centre of mass.
    pub fn from_com(mass: f64, com: Vec3, i_com: Mat3) -> Self {
        Self { mass, h: com * mass, i_o: i_com + parallel_axis(mass, &com) }
    }

    pub fn com(&self) -> Vec3 {
        if self.mass > 0.0 {
            self.h / self.mass
        } else {
            Vec3::zeros()
        }
    }

    pub fn mul_motion(&self, v: &Motion) -> Force {
        Force {
            ang: self.i_o * v.ang + self.h.cross(&v.lin),
            lin: v.lin * self.mass - self.h.cross(&v.ang),
        }
    }

    /// Express a child-frame inertia in parent coordinates (`Xᵀ I X`).
    pub fn to_parent(&self, x: &Xform) -> RbInertia {
        let r = x.pos;
        let i_rot = x.rot.transpose() * self.i_o * x.rot;
        let h_rot = x.rot.tr_mul(&self.h);
        let cross_terms = Mat3::identity() * (2.0 * r.dot(&h_rot)) - r * h_rot.transpose() - h_rot * r.transpose();
        RbInertia {
            mass: self.mass,
            h: h_rot + r * self.mass,
            i_o: i_rot + cross_terms + parallel_axis(self.mass, &r),
        }
    }
}

impl Add for RbInertia {
    type Output = RbInertia;
    fn add(self, o: RbInertia) -> RbInertia {
        RbInertia { mass: self.mass + o.mass, h: self.h + o.h, i_o: self.i_o + o.i_o }
    }
}

impl AddAssign for RbInertia {
    fn add_assign(&mut self, o: RbInertia) {
        self.mass += o.mass;
        self.h += o.h;
        self.i_o += o.i_o;
    }
}

/// Rotation matrix for a right-handed rotation of `angle` about unit `axis`.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let k = skew(axis);
    Mat3::identity() + k * s + k * k * (1.0 - c)
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation from roll/pitch/yaw (applied as Rz(yaw) Ry(pitch) Rx(roll)).
pub fn rpy(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
    *nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_xform() -> Xform {
        Xform::from_pose(&rpy(0.3, -0.2, 1.1), Vec3::new(0.1, -0.4, 0.25))
    }

    #[test]
    fn motion_force_duality_is_preserved() {
        let x = sample_xform();
        let m = Motion::new(Vec3::new(0.2, 1.0, -0.5), Vec3::new(-1.0, 0.3, 2.0));
        let f = Force::new(Vec3::new(1.5, -0.2, 0.1), Vec3::new(0.4, 0.7, -2.2));
        // power is frame invariant
        let p_child = x.apply_motion(&m).dot(&x.apply_force(&f));
        assert_relative_eq!(p_child, m.dot(&f), epsilon = 1e-12);
        let back = x.inv_apply_motion(&x.apply_motion(&m));
        assert_relative_eq!(back.ang, m.ang, epsilon = 1e-12);
        assert_relative_eq!(back.lin, m.lin, epsilon = 1e-12);
        let fb = x.inv_apply_force(&x.apply_force(&f));
        assert_relative_eq!(fb.ang, f.ang, epsilon = 1e-12);
        assert_relative_eq!(fb.lin, f.lin, epsilon = 1e-12);
    }

    #[test]
    fn composed_transform_matches_sequential_application() {
        let a = sample_xform();
        let b = Xform::from_pose(&rpy(-0.7, 0.4, 0.2), Vec3::new(-0.3, 0.2, 0.9));
        let m = Motion::new(Vec3::new(0.1, -0.3, 0.8), Vec3::new(0.5, 0.5, -0.1));
        let seq = b.apply_motion(&a.apply_motion(&m));
        let comp = a.then(&b).apply_motion(&m);
        assert_relative_eq!(seq.ang, comp.ang, epsilon = 1e-12);
        assert_relative_eq!(seq.lin, comp.lin, epsilon = 1e-12);
    }

    #[test]
    fn inertia_transform_agrees_with_force_mapping() {
        let x = sample_xform();
        let i_child = RbInertia::from_com(
            1.7,
            Vec3::new(0.05, -0.02, 0.1),
            Mat3::from_diagonal(&Vec3::new(0.02, 0.03, 0.015)),
        );
        let i_parent = i_child.to_parent(&x);
        let v = Motion::new(Vec3::new(0.4, -0.9, 0.3), Vec3::new(1.0, 0.2, -0.6));
        let direct = i_parent.mul_motion(&v);
        let via = x.inv_apply_force(&i_child.mul_motion(&x.apply_motion(&v)));
        assert_relative_eq!(direct.ang, via.ang, epsilon = 1e-12);
        assert_relative_eq!(direct.lin, via.lin, epsilon = 1e-12);
    }

    #[test]
    fn axis_angle_matches_nalgebra() {
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let r = axis_angle(&axis, 0.77);
        let reference = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), 0.77);
        assert_relative_eq!(r, *reference.matrix(), epsilon = 1e-12);
    }
}
