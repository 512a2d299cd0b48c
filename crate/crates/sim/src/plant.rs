//! A robot in the world: rigid-body state, actuator states and terrain,
//! advanced one control step at a time.

use crate::actuator::{actuator_torque, ActuatorError, ActuatorParams, ActuatorState};
use crate::morphology::{RobotSpec, SpecError};
use crate::physics::{PhysicsConfig, PhysicsError, SimState, Simulator};
use crate::spatial::Vec3;
use crate::terrain::Terrain;
use nalgebra::UnitQuaternion;

#[derive(Debug, thiserror::Error)]
pub enum PlantError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
}

#[derive(Debug, Clone)]
pub struct Plant {
    pub spec: RobotSpec,
    pub sim: Simulator,
    pub terrain: Terrain,
    pub state: SimState,
    pub actuators: Vec<ActuatorState>,
    params: Vec<ActuatorParams>,
    stiffness: Vec<f64>,
    damping: Vec<f64>,
    filter_width: usize,
    /// Commanded (filtered) set-points used during the last control step.
    pub commanded: Vec<f64>,
}

impl Plant {
    pub fn new(spec: RobotSpec, physics: PhysicsConfig, terrain: Terrain, filter_width: usize) -> Result<Self, PlantError> {
        let sim = Simulator::new(&spec, physics)?;
        let params: Vec<ActuatorParams> = (0..spec.num_joints()).map(|j| spec.actuator(j).clone()).collect();
        let q = spec.default_pose();
        let state = SimState::at_rest(Vec3::new(0.0, 0.0, spec.initial_base_height), UnitQuaternion::identity(), q.clone());
        let actuators = q
            .iter()
            .zip(&params)
            .map(|(&qi, p)| ActuatorState::at_rest(p, qi, filter_width))
            .collect::<Result<Vec<_>, _>>()?;
        let stiffness = params.iter().map(|p| p.spring_stiffness).collect();
        let damping = params.iter().map(|p| p.spring_damping).collect();
        Ok(Self { spec, sim, terrain, state, actuators, params, stiffness, damping, filter_width, commanded: q })
    }

    /// Place the robot at rest with joint angles `q`, motors aligned with the
    /// joints and filters holding `q`. The torso is raised by the local
    /// terrain height below it.
    pub fn reset(&mut self, q: &[f64], base_xy: [f64; 2], yaw: f64) -> Result<(), PlantError> {
        let n = self.spec.num_joints();
        if q.len() != n {
            return Err(SpecError::ActionDimension { expected: n, got: q.len() }.into());
        }
        let ground = self.terrain.height_at(base_xy[0], base_xy[1]);
        let pos = Vec3::new(base_xy[0], base_xy[1], self.spec.initial_base_height + ground);
        self.state = SimState::at_rest(pos, UnitQuaternion::from_euler_angles(0.0, 0.0, yaw), q.to_vec());
        for ((a, p), &qi) in self.actuators.iter_mut().zip(&self.params).zip(q) {
            *a = ActuatorState::at_rest(p, qi, self.filter_width)?;
        }
        self.commanded = q.to_vec();
        Ok(())
    }

    pub fn params(&self, joint: usize) -> &ActuatorParams {
        &self.params[joint]
    }

    /// Push raw set-points through the window filters and simulate `dt`
    /// seconds, holding the filtered commands constant.
    pub fn control_step(&mut self, setpoints: &[f64], dt: f64) -> Result<(), PlantError> {
        let n = self.spec.num_joints();
        if setpoints.len() != n {
            return Err(SpecError::ActionDimension { expected: n, got: setpoints.len() }.into());
        }
        for (j, &sp) in setpoints.iter().enumerate() {
            self.commanded[j] = self.actuators[j].filter_push(sp);
        }
        self.advance(dt)
    }

    /// Simulate `dt` seconds with the current commands.
    pub fn advance(&mut self, dt: f64) -> Result<(), PlantError> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(PhysicsError::InvalidTimeStep(dt).into());
        }
        if dt == 0.0 {
            return Ok(());
        }
        let substep = self.sim.config.substep;
        let n_sub = (dt / substep - 1e-9).ceil().max(1.0) as usize;
        let h = dt / n_sub as f64;
        let n = self.spec.num_joints();
        let mut torques = vec![0.0; n];
        for _ in 0..n_sub {
            for j in 0..n {
                let (tau, next) = actuator_torque(
                    &self.params[j],
                    &self.actuators[j],
                    self.state.q[j],
                    self.state.qdot[j],
                    self.commanded[j],
                    h,
                );
                torques[j] = tau;
                self.actuators[j] = next;
            }
            self.state = self.sim.step_linearized(&self.state, &torques, &self.stiffness, &self.damping, &self.terrain, h)?;
        }
        Ok(())
    }
}
