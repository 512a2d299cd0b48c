//! Regenerates the bundled robot files in `robots/`.
//!
//! The files are the source of truth at run time; this program only exists
//! so that the dimensions below stay in one readable place.
//!
//! ```text
//! cargo run -p walker-sim --example gen_zoo
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use walker_sim::actuator::ActuatorParams;
use walker_sim::morphology::{
    box_inertia, rod_inertia, FootDef, Geom, JointDef, Pose, RigidLink, RobotSpec, DEFAULT_ACTION_HALF_RANGE,
    SCHEMA_VERSION,
};
use walker_sim::physics::{PhysicsConfig, Simulator};
use walker_sim::spatial::{Mat3, Vec3};

const FOOT_RADIUS: f64 = 0.02;
const JOINT_DAMPING: f64 = 0.01;

struct Builder {
    spec: RobotSpec,
}

impl Builder {
    fn new(name: &str, notes: &str, torso: RigidLink) -> Self {
        let mut actuator_models = BTreeMap::new();
        actuator_models.insert("x_series".to_string(), ActuatorParams::default());
        Self {
            spec: RobotSpec {
                schema_version: SCHEMA_VERSION,
                name: name.into(),
                notes: notes.into(),
                torso_link: torso.name.clone(),
                fixed_base: false,
                initial_base_height: 0.0,
                actuator_models,
                links: vec![torso],
                joints: vec![],
                feet: vec![],
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn joint(&mut self, name: &str, parent: &str, child: RigidLink, axis: [f64; 3], origin: Pose, alpha: f64, limits: [f64; 2]) {
        self.spec.joints.push(JointDef {
            name: name.into(),
            parent: parent.into(),
            child: child.name.clone(),
            axis,
            limits,
            origin,
            default_angle: alpha,
            action_bounds: [-DEFAULT_ACTION_HALF_RANGE, DEFAULT_ACTION_HALF_RANGE],
            actuator: "x_series".into(),
            damping: JOINT_DAMPING,
        });
        self.spec.links.push(child);
    }

    fn foot(&mut self, link: &str, points: Vec<[f64; 3]>) {
        self.spec.feet.push(FootDef { link: link.into(), points });
    }

    /// Place the torso so the lowest foot geometry touches z = 0.
    fn finish(mut self) -> RobotSpec {
        let sim = Simulator::new(&self.spec, PhysicsConfig::default()).expect("zoo robot is well formed");
        let kin = sim.kinematics_at(&Mat3::identity(), &Vec3::zeros(), &self.spec.default_pose());
        let mut lowest = f64::INFINITY;
        for foot in &self.spec.feet {
            let l = self.spec.link_index(&foot.link).unwrap();
            for g in &self.spec.links[l].geoms {
                let (center, r) = match g {
                    Geom::Sphere { radius, position } => (Vec3::from(*position), *radius),
                    Geom::Box { .. } => continue,
                };
                let world = kin.link_pos[l] + kin.link_rot[l] * center;
                lowest = lowest.min(world.z - r);
            }
            for p in &foot.points {
                let world = kin.link_pos[l] + kin.link_rot[l] * Vec3::from(*p);
                lowest = lowest.min(world.z);
            }
        }
        self.spec.initial_base_height = round6(-lowest);
        self.spec.validate().expect("zoo robot validates");
        self.spec
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn link(name: &str, mass: f64, com: [f64; 3], inertia: [[f64; 3]; 3], geoms: Vec<Geom>) -> RigidLink {
    RigidLink { name: name.into(), mass, com, inertia, geoms }
}

fn at(xyz: [f64; 3]) -> Pose {
    Pose { xyz, rpy: [0.0; 3] }
}

fn box_geom(half_extents: [f64; 3], center: [f64; 3]) -> Geom {
    Geom::Box { half_extents, pose: at(center) }
}

fn box_corners(half: [f64; 3], center: [f64; 3]) -> Vec<[f64; 3]> {
    (0..8)
        .map(|c| {
            let s = |bit: usize| if c & (1 << bit) == 0 { -1.0 } else { 1.0 };
            [center[0] + s(0) * half[0], center[1] + s(1) * half[1], center[2] + s(2) * half[2]]
        })
        .collect()
}

const X: [f64; 3] = [1.0, 0.0, 0.0];
const Y: [f64; 3] = [0.0, 1.0, 0.0];
const Z: [f64; 3] = [0.0, 0.0, 1.0];

/// Daisy leg mounted on the torso rim at angle `psi` (rad from +x).
/// Hip yaw → shoulder pitch → elbow pitch; the leg extends along +x of the
/// hip frame and positive pitch bends it downwards.
fn daisy_leg(b: &mut Builder, tag: &str, psi: f64) {
    let r = 0.2;
    let (upper, lower) = (0.2, 0.25);
    b.joint(
        &format!("{tag}_hip_yaw"),
        "torso",
        link(&format!("{tag}_bracket"), 0.3, [0.03, 0.0, 0.0], box_inertia(0.3, [0.06, 0.05, 0.05]), vec![]),
        Z,
        Pose { xyz: [r * psi.cos(), r * psi.sin(), 0.0], rpy: [0.0, 0.0, psi] },
        0.0,
        [-1.5, 1.5],
    );
    b.joint(
        &format!("{tag}_shoulder"),
        &format!("{tag}_bracket"),
        link(&format!("{tag}_upper"), 0.35, [upper / 2.0, 0.0, 0.0], rod_inertia(0.35, upper, 0.025, 0), vec![]),
        Y,
        at([0.06, 0.0, 0.0]),
        -0.3,
        [-1.7, 1.7],
    );
    b.joint(
        &format!("{tag}_elbow"),
        &format!("{tag}_upper"),
        link(
            &format!("{tag}_lower"),
            0.15,
            [lower / 2.0, 0.0, 0.0],
            rod_inertia(0.15, lower, 0.015, 0),
            vec![Geom::Sphere { radius: FOOT_RADIUS, position: [lower, 0.0, 0.0] }],
        ),
        Y,
        at([upper, 0.0, 0.0]),
        1.7,
        [-0.2, 2.9],
    );
    b.foot(&format!("{tag}_lower"), vec![[lower, 0.0, 0.0]]);
}

fn daisy_torso() -> RigidLink {
    let half = [0.18, 0.2, 0.04];
    link("torso", 2.0, [0.0; 3], box_inertia(2.0, [0.36, 0.4, 0.08]), vec![box_geom(half, [0.0; 3])])
}

fn daisy(name: &str, notes: &str, legs: &[(&str, f64)]) -> RobotSpec {
    let mut b = Builder::new(name, notes, daisy_torso());
    for (tag, deg) in legs {
        daisy_leg(&mut b, tag, deg * PI / 180.0);
    }
    b.finish()
}

fn dog() -> RobotSpec {
    let notes = "Mammalian quadruped built from the same modules as the hexapod. Each leg: hip abduction (x), \
                 hip pitch (y), knee (y); thigh 0.20 m, shank 0.22 m; the knee points forward at rest. \
                 Dimensions and masses are plausible choices, not measured values.";
    let half = [0.27, 0.12, 0.05];
    let torso = link("torso", 3.0, [0.0; 3], box_inertia(3.0, [0.54, 0.24, 0.1]), vec![box_geom(half, [0.0; 3])]);
    let mut b = Builder::new("dog", notes, torso);
    let (thigh, shank) = (0.2, 0.22);
    for (tag, x, y) in [("fl", 0.22, 0.1), ("fr", 0.22, -0.1), ("hl", -0.22, 0.1), ("hr", -0.22, -0.1)] {
        b.joint(
            &format!("{tag}_hip_abduct"),
            "torso",
            link(&format!("{tag}_hip"), 0.3, [0.0; 3], box_inertia(0.3, [0.06, 0.05, 0.05]), vec![]),
            X,
            at([x, y, 0.0]),
            0.0,
            [-1.0, 1.0],
        );
        b.joint(
            &format!("{tag}_hip_pitch"),
            &format!("{tag}_hip"),
            link(&format!("{tag}_thigh"), 0.4, [0.0, 0.0, -thigh / 2.0], rod_inertia(0.4, thigh, 0.025, 2), vec![]),
            Y,
            at([0.0, 0.0, 0.0]),
            -0.5,
            [-1.8, 1.8],
        );
        b.joint(
            &format!("{tag}_knee"),
            &format!("{tag}_thigh"),
            link(
                &format!("{tag}_shank"),
                0.2,
                [0.0, 0.0, -shank / 2.0],
                rod_inertia(0.2, shank, 0.015, 2),
                vec![Geom::Sphere { radius: FOOT_RADIUS, position: [0.0, 0.0, -shank] }],
            ),
            Y,
            at([0.0, 0.0, -thigh]),
            1.0,
            [-0.2, 2.6],
        );
        b.foot(&format!("{tag}_shank"), vec![[0.0, 0.0, -shank]]);
    }
    b.finish()
}

/// Six-DOF leg: hip yaw, hip roll, hip pitch, knee, ankle pitch, ankle roll,
/// ending in a rectangular plate foot. `knee` is the rest knee angle; a
/// negative value puts the knee behind the hip line.
fn biped_leg(b: &mut Builder, tag: &str, y: f64, knee: f64) {
    let (thigh, shank) = (0.4, 0.4);
    let hip = -knee / 2.0;
    let knee_limits = if knee < 0.0 { [-2.2, 0.3] } else { [-0.3, 2.2] };
    let small = |name: String, m: f64| link(&name, m, [0.0; 3], box_inertia(m, [0.06, 0.06, 0.06]), vec![]);
    b.joint(&format!("{tag}_hip_yaw"), "torso", small(format!("{tag}_hip_a"), 0.3), Z, at([0.0, y, -0.1]), 0.0, [-1.0, 1.0]);
    b.joint(
        &format!("{tag}_hip_roll"),
        &format!("{tag}_hip_a"),
        small(format!("{tag}_hip_b"), 0.3),
        X,
        at([0.0, 0.0, -0.05]),
        0.0,
        [-1.0, 1.0],
    );
    b.joint(
        &format!("{tag}_hip_pitch"),
        &format!("{tag}_hip_b"),
        link(&format!("{tag}_thigh"), 1.0, [0.0, 0.0, -thigh / 2.0], rod_inertia(1.0, thigh, 0.03, 2), vec![]),
        Y,
        at([0.0, 0.0, 0.0]),
        round6(hip),
        [-1.8, 1.8],
    );
    b.joint(
        &format!("{tag}_knee"),
        &format!("{tag}_thigh"),
        link(&format!("{tag}_shank"), 0.8, [0.0, 0.0, -shank / 2.0], rod_inertia(0.8, shank, 0.025, 2), vec![]),
        Y,
        at([0.0, 0.0, -thigh]),
        knee,
        knee_limits,
    );
    b.joint(
        &format!("{tag}_ankle_pitch"),
        &format!("{tag}_shank"),
        small(format!("{tag}_ankle"), 0.2),
        Y,
        at([0.0, 0.0, -shank]),
        round6(hip),
        [-1.2, 1.2],
    );
    let half = [0.11, 0.06, 0.015];
    let center = [0.02, 0.0, -0.05];
    b.joint(
        &format!("{tag}_ankle_roll"),
        &format!("{tag}_ankle"),
        link(&format!("{tag}_foot"), 0.4, center, box_inertia(0.4, [0.22, 0.12, 0.03]), vec![box_geom(half, center)]),
        X,
        at([0.0, 0.0, 0.0]),
        0.0,
        [-1.0, 1.0],
    );
    b.foot(&format!("{tag}_foot"), box_corners(half, center));
}

fn biped_torso() -> RigidLink {
    let half = [0.1, 0.15, 0.1];
    link("torso", 4.0, [0.0; 3], box_inertia(4.0, [0.2, 0.3, 0.2]), vec![box_geom(half, [0.0; 3])])
}

fn biped(name: &str, notes: &str, knee: f64, arms: bool) -> RobotSpec {
    let mut b = Builder::new(name, notes, biped_torso());
    biped_leg(&mut b, "l", 0.1, knee);
    biped_leg(&mut b, "r", -0.1, knee);
    if arms {
        for (tag, y) in [("la", 0.19), ("ra", -0.19)] {
            b.joint(
                &format!("{tag}_shoulder"),
                "torso",
                link(&format!("{tag}_upper"), 0.4, [0.0, 0.0, -0.125], rod_inertia(0.4, 0.25, 0.025, 2), vec![]),
                Y,
                at([0.0, y, 0.05]),
                0.0,
                [-2.5, 2.5],
            );
            b.joint(
                &format!("{tag}_elbow"),
                &format!("{tag}_upper"),
                link(&format!("{tag}_fore"), 0.3, [0.0, 0.0, -0.125], rod_inertia(0.3, 0.25, 0.02, 2), vec![]),
                Y,
                at([0.0, 0.0, -0.25]),
                -0.5,
                [-2.0, 0.5],
            );
        }
    }
    b.finish()
}

fn main() {
    let out = Path::new(env!("CARGO_MANIFEST_DIR")).join("robots");
    let hex = "Hexapod: six legs on a hexagonal torso (mount radius 0.2 m at ±30°, ±90°, ±150°). Each leg: hip yaw (z), \
               shoulder pitch (y), elbow pitch (y); bracket 0.06 m, upper 0.20 m, lower 0.25 m, sphere foot r = 0.02 m. \
               Dimensions and masses are plausible choices, not measured values.";
    let quad = "Hexapod torso with the two middle legs (±90°) removed, leaving legs at ±30° and ±150°. Which legs the real \
                robot drops is an assumption. Leg geometry as in daisy6.";
    let tri = "Hexapod torso with three legs at 90°, -30° and -150° (an equilateral tripod). The choice of remaining legs \
               is an assumption. Leg geometry as in daisy6.";
    let florence = "Biped: hip yaw (z), hip roll (x), hip pitch (y), knee (y), ankle pitch (y), ankle roll (x) per leg; \
                    0.4 m thigh and shank, plate feet with eight corner reference points. The knee rests flexed \
                    backwards (behind the hip line).";
    let flori = "Biped with the same joints as florence, knee resting flexed forwards like a human leg.";
    let arms = "flori plus two arms with shoulder pitch and elbow pitch each. Arms do not collide.";
    let zoo = [
        daisy("daisy6", hex, &[("fl", 30.0), ("ml", 90.0), ("hl", 150.0), ("hr", -150.0), ("mr", -90.0), ("fr", -30.0)]),
        daisy("daisy4", quad, &[("fl", 30.0), ("hl", 150.0), ("hr", -150.0), ("fr", -30.0)]),
        daisy("daisy3", tri, &[("ml", 90.0), ("hr", -150.0), ("fr", -30.0)]),
        dog(),
        biped("florence", florence, -0.6, false),
        biped("flori", flori, 0.6, false),
        biped("floriarms", arms, 0.6, true),
    ];
    for spec in zoo {
        let path = out.join(format!("{}.toml", spec.name));
        spec.save(&path).expect("write robot file");
        println!("wrote {} ({} joints, base height {:.4} m)", path.display(), spec.num_joints(), spec.initial_base_height);
    }
}
