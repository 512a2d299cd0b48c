use approx::assert_relative_eq;
use nalgebra::UnitQuaternion;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walker_sim::actuator::{actuator_torque, thermal_step, ActuatorParams, ActuatorState, SetpointFilter};
use walker_sim::morphology::RobotSpec;
use walker_sim::physics::{PhysicsConfig, SimState, Simulator};
use walker_sim::spatial::Vec3;
use walker_sim::{zoo, Terrain};

const ROBOTS_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/robots");

/// Winding temperature of the two-node network under constant heat input,
/// from the eigen-decomposition of its 2×2 system matrix.
fn winding_temp_closed_form(p: &ActuatorParams, heat: f64, t: f64) -> f64 {
    let (rw, rh, cw, ch) = (
        p.thermal_resistance_winding,
        p.thermal_resistance_housing,
        p.thermal_capacitance_winding,
        p.thermal_capacitance_housing,
    );
    // x = temperatures above ambient; x' = A x + b.
    let a11 = -1.0 / (rw * cw);
    let a12 = 1.0 / (rw * cw);
    let a21 = 1.0 / (rw * ch);
    let a22 = -(1.0 / rw + 1.0 / rh) / ch;
    let xw_ss = heat * (rw + rh);
    let xh_ss = heat * rh;
    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a21;
    let disc = (tr * tr / 4.0 - det).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    // Deviation e = x - x_ss starts at -x_ss and decays as c1 e^{l1 t} + c2 e^{l2 t}.
    // Eigenvectors (a12, l - a11); solve for coefficients on the winding row.
    let (v1, v2) = ((a12, l1 - a11), (a12, l2 - a11));
    let (e0w, e0h) = (-xw_ss, -xh_ss);
    let d = v1.0 * v2.1 - v2.0 * v1.1;
    let c1 = (e0w * v2.1 - v2.0 * e0h) / d;
    let c2 = (v1.0 * e0h - e0w * v1.1) / d;
    p.ambient_temp + xw_ss + c1 * v1.0 * (l1 * t).exp() + c2 * v2.0 * (l2 * t).exp()
}

#[test]
fn saturated_motor_heats_like_the_closed_form_network() {
    let p = ActuatorParams::default();
    let mut s = ActuatorState::at_rest(&p, 0.0, 5).unwrap();
    let dt = 1e-3;
    let heat = p.heat_per_torque_sq * p.torque_limit * p.torque_limit;
    let mut worst: f64 = 0.0;
    for k in 1..=60_000 {
        // Joint pinned at zero, command far away: the motor stays saturated.
        let (_, next) = actuator_torque(&p, &s, 0.0, 0.0, 10.0, dt);
        s = next;
        assert_eq!(s.motor_torque, p.torque_limit);
        if k % 1000 == 0 {
            let exact = winding_temp_closed_form(&p, heat, k as f64 * dt);
            let rise = exact - p.ambient_temp;
            worst = worst.max((s.winding_temp - exact).abs() / rise);
        }
    }
    assert!(worst < 0.01, "relative deviation {worst}");
    assert!(s.winding_temp > p.ambient_temp + 10.0);
}

proptest! {
    #[test]
    fn idle_motor_cools_monotonically(tw in 25.0f64..150.0, th in 25.0f64..150.0, dt in 1e-4f64..0.05) {
        let p = ActuatorParams::default();
        let mut s = ActuatorState::at_rest(&p, 0.0, 5).unwrap();
        s.winding_temp = tw;
        s.housing_temp = th;
        let mut prev = s.winding_temp.max(s.housing_temp);
        for _ in 0..200 {
            thermal_step(&p, &mut s, 0.0, dt);
            let hottest = s.winding_temp.max(s.housing_temp);
            prop_assert!(hottest <= prev + 1e-12);
            prop_assert!(s.winding_temp >= p.ambient_temp - 1e-9 && s.housing_temp >= p.ambient_temp - 1e-9);
            prev = hottest;
        }
    }

    #[test]
    fn motor_torque_never_exceeds_limit(
        cmd in -50.0f64..50.0, motor in -5.0f64..5.0, motor_vel in -10.0f64..10.0,
        q in -3.0f64..3.0, qd in -20.0f64..20.0, temp in 25.0f64..200.0,
    ) {
        let p = ActuatorParams::default();
        let mut s = ActuatorState::at_rest(&p, motor, 5).unwrap();
        s.motor_vel = motor_vel;
        s.winding_temp = temp;
        let (_, next) = actuator_torque(&p, &s, q, qd, cmd, 1e-3);
        prop_assert!(next.motor_torque.abs() <= p.torque_limit);
        prop_assert!(next.motor_vel.abs() <= p.velocity_limit);
    }

    #[test]
    fn filter_output_ignores_order(values in prop::collection::vec(-2.0f64..2.0, 5), shift in 0usize..5) {
        let mut a = SetpointFilter::new(5, 0.0).unwrap();
        let mut b = SetpointFilter::new(5, 0.0).unwrap();
        let mut out_a = 0.0;
        let mut out_b = 0.0;
        for v in &values {
            out_a = a.push(*v);
        }
        let mut rev = values.clone();
        rev.reverse();
        rev.rotate_left(shift);
        for v in &rev {
            out_b = b.push(*v);
        }
        prop_assert!((out_a - out_b).abs() < 1e-12);
        let mean = values.iter().sum::<f64>() / 5.0;
        prop_assert!((out_a - mean).abs() < 1e-12);
    }
}

#[test]
fn bundled_daisy6_file_has_eighteen_joints() {
    let spec = RobotSpec::load(format!("{ROBOTS_DIR}/daisy6.toml")).unwrap();
    assert_eq!(spec.num_joints(), 18);
    assert_eq!(spec.num_feet(), 6);
}

#[test]
fn zoo_action_dimensions_and_foot_points() {
    let expected = [
        ("daisy3", 9, 1),
        ("daisy4", 12, 1),
        ("daisy6", 18, 1),
        ("dog", 12, 1),
        ("florence", 12, 8),
        ("flori", 12, 8),
        ("floriarms", 16, 8),
    ];
    for (name, dim, points) in expected {
        let spec = zoo::zoo(name).unwrap();
        assert_eq!(spec.action_dim(), dim, "{name}");
        assert_eq!(spec.points_per_foot(), points, "{name}");
    }
}

#[test]
fn specs_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in zoo::NAMES {
        let spec = zoo::zoo(name).unwrap();
        let path = dir.path().join(format!("{name}.toml"));
        spec.save(&path).unwrap();
        let back = RobotSpec::load(&path).unwrap();
        assert_eq!(back, spec, "{name}");
    }
}

#[test]
fn invalid_files_are_rejected_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let base = zoo::zoo("daisy6").unwrap();

    let mut spec = base.clone();
    spec.joints[4].axis = [0.0; 3];
    let path = dir.path().join("zero_axis.toml");
    spec.save(&path).unwrap();
    let err = RobotSpec::load(&path).unwrap_err().to_string();
    assert!(err.contains(&format!("joint `{}`", base.joints[4].name)), "{err}");

    let mut spec = base.clone();
    spec.feet[2].points = vec![[0.0; 3]; 3];
    let path = dir.path().join("three_points.toml");
    spec.save(&path).unwrap();
    let err = RobotSpec::load(&path).unwrap_err().to_string();
    assert!(err.contains("1 or 8"), "{err}");

    let path = dir.path().join("garbage.toml");
    std::fs::write(&path, "schema_version = 1\nname = 3\n").unwrap();
    let err = RobotSpec::load(&path).unwrap_err().to_string();
    assert!(err.contains("schema"), "{err}");

    assert!(RobotSpec::load(dir.path().join("missing.toml")).is_err());
}

#[test]
fn action_mapping_examples() {
    let spec = zoo::zoo("daisy4").unwrap();
    let n = spec.num_joints();
    let alpha = spec.default_pose();
    assert_eq!(spec.action_to_setpoints(&vec![0.0; n]).unwrap(), alpha);
    let hi: Vec<f64> = spec.joints.iter().map(|j| j.action_bounds[1] + 1.0).collect();
    let lo: Vec<f64> = spec.joints.iter().map(|j| j.action_bounds[0]).collect();
    for (j, (p_hi, p_lo)) in spec.action_to_setpoints(&hi).unwrap().iter().zip(spec.action_to_setpoints(&lo).unwrap()).enumerate() {
        assert_eq!(*p_hi, alpha[j] + spec.joints[j].action_bounds[1]);
        assert_eq!(p_lo, alpha[j] + spec.joints[j].action_bounds[0]);
    }
    assert!(spec.action_to_setpoints(&vec![0.0; n + 1]).is_err());
}

#[test]
fn pedestal_heights_average_half_of_h_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h_max = 0.04;
    let t = Terrain::pedestals(h_max, 0.25, 100, 100, &mut rng).unwrap();
    assert_eq!(t.heights.len(), 10_000);
    assert!(t.heights.iter().all(|h| (0.0..=h_max).contains(h)));
    let mean = t.heights.iter().sum::<f64>() / t.heights.len() as f64;
    assert_relative_eq!(mean, h_max / 2.0, max_relative = 0.05);
    assert!(Terrain::pedestals(0.0, 0.25, 10, 10, &mut rng).unwrap().is_flat());
    assert!(Terrain::pedestals(-0.01, 0.25, 10, 10, &mut rng).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn friction_stays_inside_the_cone(
        depth in 1e-5f64..0.01, vx in -3.0f64..3.0, vy in -3.0f64..3.0, vz in -1.0f64..1.0,
        wx in -5.0f64..5.0, wy in -5.0f64..5.0, wz in -5.0f64..5.0,
    ) {
        let spec = zoo::zoo("daisy4").unwrap();
        let sim = Simulator::new(&spec, PhysicsConfig::default()).unwrap();
        let mut s = SimState::at_rest(Vec3::zeros(), UnitQuaternion::identity(), spec.default_pose());
        let lowest = sim.forward_kinematics(&s).foot_points.iter().flatten().map(|p| p.z).fold(f64::INFINITY, f64::min);
        // Foot spheres have radius 0.02 around the reference points.
        s.base_pos.z = 0.02 - lowest - depth;
        s.base_lin_vel = Vec3::new(vx, vy, vz);
        s.base_ang_vel = Vec3::new(wx, wy, wz);
        let mu = sim.config.contact.friction;
        let mut touching = 0;
        for w in sim.contact_forces(&s, &Terrain::flat()) {
            let fn_ = w.force.z;
            prop_assert!(fn_ >= 0.0);
            let ft = w.force.xy().norm();
            prop_assert!(ft <= mu * fn_ * (1.0 + 1e-12) + 1e-12, "ft {} fn {}", ft, fn_);
            if fn_ > 0.0 {
                touching += 1;
            }
        }
        prop_assert!(touching <= 4);
    }
}
