//! Declarative robot description.
//!
//! A [`RobotSpec`] is loaded from a TOML file (see `robots/SCHEMA.md`) and
//! validated once; afterwards it is immutable and freely shareable. All
//! lengths are in metres, masses in kilograms, angles in radians.

use crate::actuator::{ActuatorError, ActuatorParams};
use crate::spatial::{rpy, Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Default half-width of the action interval around the default pose.
pub const DEFAULT_ACTION_HALF_RANGE: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unsupported schema_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invariant violated by {element}: {message}")]
    Invariant { element: String, message: String },
    #[error("unknown robot `{0}`")]
    UnknownRobot(String),
    #[error("action has {got} entries, robot has {expected} joints")]
    ActionDimension { expected: usize, got: usize },
}

fn invariant(element: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Invariant { element: element.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    #[serde(default)]
    pub xyz: [f64; 3],
    /// Roll, pitch, yaw in radians, applied as Rz·Ry·Rx.
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Pose {
    pub fn translation(&self) -> Vec3 {
        Vec3::from(self.xyz)
    }

    pub fn rotation(&self) -> Mat3 {
        rpy(self.rpy[0], self.rpy[1], self.rpy[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geom {
    Sphere {
        radius: f64,
        #[serde(default)]
        position: [f64; 3],
    },
    Box {
        half_extents: [f64; 3],
        #[serde(default)]
        pose: Pose,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidLink {
    pub name: String,
    pub mass: f64,
    /// Centre of mass in the link frame.
    #[serde(default)]
    pub com: [f64; 3],
    /// Inertia about the centre of mass, link axes, kg·m².
    pub inertia: [[f64; 3]; 3],
    #[serde(default)]
    pub geoms: Vec<Geom>,
}

impl RigidLink {
    pub fn inertia_matrix(&self) -> Mat3 {
        let i = &self.inertia;
        Mat3::new(i[0][0], i[0][1], i[0][2], i[1][0], i[1][1], i[1][2], i[2][0], i[2][1], i[2][2])
    }
}

fn default_action_bounds() -> [f64; 2] {
    [-DEFAULT_ACTION_HALF_RANGE, DEFAULT_ACTION_HALF_RANGE]
}

/// A hinge joint; the child frame sits at `origin` in the parent frame and
/// rotates about `axis` (expressed in the child frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDef {
    pub name: String,
    pub parent: String,
    pub child: String,
    pub axis: [f64; 3],
    pub limits: [f64; 2],
    #[serde(default)]
    pub origin: Pose,
    /// Default pose angle α, also the zero of the action space.
    #[serde(default)]
    pub default_angle: f64,
    #[serde(default = "default_action_bounds")]
    pub action_bounds: [f64; 2],
    /// Key into [`RobotSpec::actuator_models`].
    pub actuator: String,
    /// Passive viscous joint friction, N·m·s/rad.
    #[serde(default)]
    pub damping: f64,
}

impl JointDef {
    pub fn axis_vec(&self) -> Vec3 {
        Vec3::from(self.axis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootDef {
    pub link: String,
    /// One point for sphere-like feet, eight corners for plate feet.
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    pub torso_link: String,
    /// Pin the torso to the world (used for test rigs, never by walkers).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fixed_base: bool,
    /// Torso height at reset such that the feet touch flat ground.
    pub initial_base_height: f64,
    pub actuator_models: BTreeMap<String, ActuatorParams>,
    pub links: Vec<RigidLink>,
    pub joints: Vec<JointDef>,
    #[serde(default)]
    pub feet: Vec<FootDef>,
}

impl RobotSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SpecError> {
        let spec: RobotSpec = toml::from_str(text).map_err(|e| SpecError::Schema(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("robot spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpecError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| SpecError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SpecError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string())
            .map_err(|source| SpecError::Io { path: path.display().to_string(), source })
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn action_dim(&self) -> usize {
        self.joints.len()
    }

    pub fn num_feet(&self) -> usize {
        self.feet.len()
    }

    /// Reference points per foot (identical for all feet of a robot).
    pub fn points_per_foot(&self) -> usize {
        self.feet.first().map_or(0, |f| f.points.len())
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn actuator(&self, joint: usize) -> &ActuatorParams {
        &self.actuator_models[&self.joints[joint].actuator]
    }

    pub fn default_pose(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.default_angle).collect()
    }

    /// Maps an action (offsets from the default pose) to position set-points,
    /// clamping each entry into its action bounds.
    pub fn action_to_setpoints(&self, action: &[f64]) -> Result<Vec<f64>, SpecError> {
        if action.len() != self.joints.len() {
            return Err(SpecError::ActionDimension { expected: self.joints.len(), got: action.len() });
        }
        Ok(self
            .joints
            .iter()
            .zip(action)
            .map(|(j, &a)| j.default_angle + a.clamp(j.action_bounds[0], j.action_bounds[1]))
            .collect())
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SpecError::Version { found: self.schema_version, expected: SCHEMA_VERSION });
        }
        let mut names = HashMap::new();
        for (i, link) in self.links.iter().enumerate() {
            if names.insert(link.name.as_str(), i).is_some() {
                return Err(invariant(format!("link `{}`", link.name), "duplicate link name"));
            }
            validate_link(link)?;
        }
        let torso = *names
            .get(self.torso_link.as_str())
            .ok_or_else(|| invariant("torso_link", format!("unknown link `{}`", self.torso_link)))?;
        if !(self.initial_base_height.is_finite() && self.initial_base_height >= 0.0) {
            return Err(invariant("initial_base_height", "must be finite and nonnegative"));
        }
        for (name, act) in &self.actuator_models {
            act.validate().map_err(|e: ActuatorError| invariant(format!("actuator model `{name}`"), e.to_string()))?;
        }

        // Joints must be listed parent-first so that the tree can be built in order.
        let mut attached = vec![false; self.links.len()];
        attached[torso] = true;
        for joint in &self.joints {
            let el = format!("joint `{}`", joint.name);
            let parent = *names
                .get(joint.parent.as_str())
                .ok_or_else(|| invariant(&el, format!("unknown parent link `{}`", joint.parent)))?;
            let child = *names
                .get(joint.child.as_str())
                .ok_or_else(|| invariant(&el, format!("unknown child link `{}`", joint.child)))?;
            if !attached[parent] {
                return Err(invariant(&el, "parent link is not yet attached to the torso (joints must be listed root-first)"));
            }
            if attached[child] {
                return Err(invariant(&el, "child link already attached (kinematic loops are not supported)"));
            }
            attached[child] = true;
            let axis = joint.axis_vec();
            if !axis.iter().all(|v| v.is_finite()) || (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(invariant(&el, format!("axis must have unit length (|axis| = {})", axis.norm())));
            }
            let [lo, hi] = joint.limits;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invariant(&el, "limits must satisfy lower < upper"));
            }
            let [dmin, dmax] = joint.action_bounds;
            if !(dmin.is_finite() && dmax.is_finite() && dmin < dmax) {
                return Err(invariant(&el, "action bounds must satisfy δ_min < δ_max"));
            }
            if joint.default_angle + dmin < lo - 1e-12 || joint.default_angle + dmax > hi + 1e-12 {
                return Err(invariant(&el, "default angle plus action bounds leaves the joint limits"));
            }
            if !self.actuator_models.contains_key(&joint.actuator) {
                return Err(invariant(&el, format!("unknown actuator model `{}`", joint.actuator)));
            }
            if !(joint.damping.is_finite() && joint.damping >= 0.0) {
                return Err(invariant(&el, "damping must be nonnegative"));
            }
        }
        if let Some(i) = attached.iter().position(|a| !a) {
            return Err(invariant(format!("link `{}`", self.links[i].name), "not connected to the torso"));
        }

        let mut per_foot = None;
        for (i, foot) in self.feet.iter().enumerate() {
            let el = format!("foot {i} (link `{}`)", foot.link);
            let link = *names.get(foot.link.as_str()).ok_or_else(|| invariant(&el, "unknown link"))?;
            let n = foot.points.len();
            if n != 1 && n != 8 {
                return Err(invariant(&el, format!("must have 1 or 8 reference points, found {n}")));
            }
            if *per_foot.get_or_insert(n) != n {
                return Err(invariant(&el, "all feet must use the same number of reference points"));
            }
            if self.links[link].geoms.is_empty() {
                return Err(invariant(&el, "foot link has no collision geometry"));
            }
        }
        if self.links[torso].geoms.is_empty() && !self.fixed_base {
            return Err(invariant(format!("link `{}`", self.torso_link), "torso has no collision geometry"));
        }
        Ok(())
    }
}

fn validate_link(link: &RigidLink) -> Result<(), SpecError> {
    let el = format!("link `{}`", link.name);
    if !(link.mass.is_finite() && link.mass > 0.0) {
        return Err(invariant(&el, "mass must be positive"));
    }
    let i = link.inertia_matrix();
    if !i.iter().all(|v| v.is_finite()) {
        return Err(invariant(&el, "inertia must be finite"));
    }
    let scale = i.abs().max().max(f64::MIN_POSITIVE);
    if (i - i.transpose()).abs().max() > 1e-9 * scale {
        return Err(invariant(&el, "inertia must be symmetric"));
    }
    if i.cholesky().is_none() {
        return Err(invariant(&el, "inertia must be positive definite"));
    }
    for g in &link.geoms {
        let ok = match g {
            Geom::Sphere { radius, .. } => radius.is_finite() && *radius > 0.0,
            Geom::Box { half_extents, .. } => half_extents.iter().all(|h| h.is_finite() && *h > 0.0),
        };
        if !ok {
            return Err(invariant(&el, "geometry dimensions must be positive"));
        }
    }
    Ok(())
}

/// Inertia about the centre of mass of a solid box with full side lengths `size`.
pub fn box_inertia(mass: f64, size: [f64; 3]) -> [[f64; 3]; 3] {
    let [x, y, z] = size;
    let k = mass / 12.0;
    [[k * (y * y + z * z), 0.0, 0.0], [0.0, k * (x * x + z * z), 0.0], [0.0, 0.0, k * (x * x + y * y)]]
}

/// Inertia of a solid cylinder of the given radius whose axis is `axis` (0=x, 1=y, 2=z).
pub fn rod_inertia(mass: f64, length: f64, radius: f64, axis: usize) -> [[f64; 3]; 3] {
    let along = 0.5 * mass * radius * radius;
    let across = mass * (3.0 * radius * radius + length * length) / 12.0;
    let mut out = [[0.0; 3]; 3];
    for (k, row) in out.iter_mut().enumerate() {
        row[k] = if k == axis { along } else { across };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RobotSpec {
        let text = r#"
schema_version = 1
name = "tiny"
torso_link = "torso"
initial_base_height = 0.3

[actuator_models.std]
kp = 30.0
spring_stiffness = 100.0
spring_damping = 0.5
torque_limit = 20.0
velocity_limit = 10.0
rotor_inertia = 0.02
motor_damping = 0.5
heat_per_torque_sq = 0.05
thermal_resistance_winding = 1.5
thermal_resistance_housing = 2.0
thermal_capacitance_winding = 15.0
thermal_capacitance_housing = 120.0
ambient_temp = 25.0
max_winding_temp = 120.0

[[links]]
name = "torso"
mass = 2.0
inertia = [[0.02, 0.0, 0.0], [0.0, 0.02, 0.0], [0.0, 0.0, 0.03]]
geoms = [{ shape = "box", half_extents = [0.1, 0.1, 0.03] }]

[[links]]
name = "leg"
mass = 0.3
com = [0.0, 0.0, -0.1]
inertia = [[0.001, 0.0, 0.0], [0.0, 0.001, 0.0], [0.0, 0.0, 0.0001]]
geoms = [{ shape = "sphere", radius = 0.02, position = [0.0, 0.0, -0.25] }]

[[joints]]
name = "hip"
parent = "torso"
child = "leg"
axis = [0.0, 1.0, 0.0]
limits = [-2.0, 2.0]
origin = { xyz = [0.0, 0.0, -0.03] }
default_angle = 0.1
actuator = "std"

[[feet]]
link = "leg"
points = [[0.0, 0.0, -0.25]]
"#;
        RobotSpec::from_toml_str(text).unwrap()
    }

    #[test]
    fn parses_and_defaults_action_bounds() {
        let s = tiny();
        assert_eq!(s.num_joints(), 1);
        assert_eq!(s.joints[0].action_bounds, [-0.8, 0.8]);
        assert_eq!(s.points_per_foot(), 1);
    }

    #[test]
    fn zero_axis_is_reported_with_joint_name() {
        let mut s = tiny();
        s.joints[0].axis = [0.0; 3];
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("joint `hip`"), "{err}");
        assert!(err.contains("axis"), "{err}");
    }

    #[test]
    fn three_reference_points_are_rejected() {
        let mut s = tiny();
        s.feet[0].points = vec![[0.0; 3]; 3];
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("1 or 8"), "{err}");
    }

    #[test]
    fn inverted_limits_and_bounds_are_rejected() {
        let mut s = tiny();
        s.joints[0].limits = [1.0, -1.0];
        assert!(s.validate().is_err());
        let mut s = tiny();
        s.joints[0].action_bounds = [0.5, 0.5];
        assert!(s.validate().is_err());
        let mut s = tiny();
        s.joints[0].default_angle = 1.5;
        assert!(s.validate().unwrap_err().to_string().contains("joint limits"));
    }

    #[test]
    fn nonpositive_mass_and_indefinite_inertia_are_rejected() {
        let mut s = tiny();
        s.links[1].mass = 0.0;
        assert!(s.validate().is_err());
        let mut s = tiny();
        s.links[1].inertia[2][2] = -1.0;
        assert!(s.validate().unwrap_err().to_string().contains("positive definite"));
        let mut s = tiny();
        s.links[1].inertia[0][1] = 0.0005;
        assert!(s.validate().unwrap_err().to_string().contains("symmetric"));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = RobotSpec::from_toml_str("schema_version = 1\nname = 3\n").unwrap_err().to_string();
        assert!(err.contains("name"), "{err}");
        let bad_version = tiny().to_toml_string().replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(RobotSpec::from_toml_str(&bad_version), Err(SpecError::Version { found: 9, .. })));
    }

    #[test]
    fn action_mapping_adds_default_and_clamps() {
        let s = tiny();
        assert_eq!(s.action_to_setpoints(&[0.0]).unwrap(), vec![0.1]);
        assert_eq!(s.action_to_setpoints(&[1.8]).unwrap(), vec![0.1 + 0.8]);
        assert_eq!(s.action_to_setpoints(&[-0.8]).unwrap(), vec![0.1 - 0.8]);
        assert!(matches!(s.action_to_setpoints(&[0.0, 0.0]), Err(SpecError::ActionDimension { .. })));
    }

    #[test]
    fn joints_must_be_listed_root_first() {
        let mut s = tiny();
        s.links.push(RigidLink { name: "orphan".into(), ..s.links[1].clone() });
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("orphan"), "{err}");
    }
}
