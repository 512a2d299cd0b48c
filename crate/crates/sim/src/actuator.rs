//! Series-elastic actuator: low-gain position P-controller on the motor side,
//! a torsional spring to the joint, a set-point window filter and a
//! two-node thermal model (winding → housing → ambient).

use serde::{Deserialize, Serialize};

/// Physical constants of one actuator module.
///
/// Temperatures are in °C, thermal resistances in K/W, capacitances in J/K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorParams {
    /// Position gain of the motor-side controller, N·m/rad.
    pub kp: f64,
    /// Series spring stiffness, N·m/rad.
    pub spring_stiffness: f64,
    /// Series spring damping, N·m·s/rad.
    pub spring_damping: f64,
    /// Peak motor torque, N·m.
    pub torque_limit: f64,
    /// Motor velocity limit, rad/s.
    pub velocity_limit: f64,
    /// Reflected rotor inertia, kg·m².
    pub rotor_inertia: f64,
    /// Viscous friction on the motor side, N·m·s/rad.
    pub motor_damping: f64,
    /// Copper-loss coefficient: heat = coefficient · τ², W/(N·m)².
    pub heat_per_torque_sq: f64,
    /// Winding → housing thermal resistance.
    pub thermal_resistance_winding: f64,
    /// Housing → ambient thermal resistance.
    pub thermal_resistance_housing: f64,
    pub thermal_capacitance_winding: f64,
    pub thermal_capacitance_housing: f64,
    pub ambient_temp: f64,
    /// Above this winding temperature the torque limit is halved.
    pub max_winding_temp: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            kp: 30.0,
            spring_stiffness: 100.0,
            spring_damping: 0.5,
            torque_limit: 20.0,
            velocity_limit: 10.0,
            rotor_inertia: 0.02,
            motor_damping: 2.0,
            heat_per_torque_sq: 0.05,
            thermal_resistance_winding: 1.5,
            thermal_resistance_housing: 2.0,
            thermal_capacitance_winding: 15.0,
            thermal_capacitance_housing: 120.0,
            ambient_temp: 25.0,
            max_winding_temp: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActuatorError {
    #[error("actuator parameter `{0}` must be positive and finite")]
    NonPositive(&'static str),
    #[error("max_winding_temp must exceed ambient_temp")]
    TemperatureOrder,
    #[error("filter width must be at least 1")]
    EmptyFilter,
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<(), ActuatorError> {
        let positive = [
            ("kp", self.kp),
            ("spring_stiffness", self.spring_stiffness),
            ("spring_damping", self.spring_damping),
            ("torque_limit", self.torque_limit),
            ("velocity_limit", self.velocity_limit),
            ("rotor_inertia", self.rotor_inertia),
            ("motor_damping", self.motor_damping),
            ("heat_per_torque_sq", self.heat_per_torque_sq),
            ("thermal_resistance_winding", self.thermal_resistance_winding),
            ("thermal_resistance_housing", self.thermal_resistance_housing),
            ("thermal_capacitance_winding", self.thermal_capacitance_winding),
            ("thermal_capacitance_housing", self.thermal_capacitance_housing),
            ("ambient_temp", self.ambient_temp),
            ("max_winding_temp", self.max_winding_temp),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ActuatorError::NonPositive(name));
            }
        }
        if self.max_winding_temp <= self.ambient_temp {
            return Err(ActuatorError::TemperatureOrder);
        }
        Ok(())
    }

    /// Torque limit after thermal derating.
    pub fn effective_torque_limit(&self, winding_temp: f64) -> f64 {
        if winding_temp > self.max_winding_temp {
            0.5 * self.torque_limit
        } else {
            self.torque_limit
        }
    }
}

/// Sliding-window mean over the last `width` set-points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointFilter {
    window: Vec<f64>,
    head: usize,
}

impl SetpointFilter {
    pub fn new(width: usize, initial: f64) -> Result<Self, ActuatorError> {
        if width == 0 {
            return Err(ActuatorError::EmptyFilter);
        }
        Ok(Self { window: vec![initial; width], head: 0 })
    }

    pub fn width(&self) -> usize {
        self.window.len()
    }

    /// Replaces the oldest entry with `setpoint` and returns the window mean.
    pub fn push(&mut self, setpoint: f64) -> f64 {
        self.window[self.head] = setpoint;
        self.head = (self.head + 1) % self.window.len();
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        self.window.iter().sum::<f64>() / self.window.len() as f64
    }

    /// Window contents ordered oldest to newest.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let (newer, older) = self.window.split_at(self.head);
        older.iter().chain(newer.iter()).copied()
    }

    pub fn fill(&mut self, value: f64) {
        self.window.iter_mut().for_each(|v| *v = value);
        self.head = 0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    pub motor_pos: f64,
    pub motor_vel: f64,
    pub winding_temp: f64,
    pub housing_temp: f64,
    pub filter: SetpointFilter,
    /// Motor torque applied during the last update (after clamping).
    pub motor_torque: f64,
}

impl ActuatorState {
    /// Actuator at rest at `position`, at ambient temperature, with the
    /// filter window filled with `position`.
    pub fn at_rest(params: &ActuatorParams, position: f64, filter_width: usize) -> Result<Self, ActuatorError> {
        Ok(Self {
            motor_pos: position,
            motor_vel: 0.0,
            winding_temp: params.ambient_temp,
            housing_temp: params.ambient_temp,
            filter: SetpointFilter::new(filter_width, position)?,
            motor_torque: 0.0,
        })
    }

    pub fn deflection(&self, joint_pos: f64) -> f64 {
        self.motor_pos - joint_pos
    }

    pub fn deflection_velocity(&self, joint_vel: f64) -> f64 {
        self.motor_vel - joint_vel
    }

    /// Feed a new set-point through the window filter; returns the command.
    pub fn filter_push(&mut self, setpoint: f64) -> f64 {
        self.filter.push(setpoint)
    }
}

/// Torque the series spring applies to the joint.
pub fn spring_torque(params: &ActuatorParams, state: &ActuatorState, joint_pos: f64, joint_vel: f64) -> f64 {
    params.spring_stiffness * state.deflection(joint_pos) + params.spring_damping * state.deflection_velocity(joint_vel)
}

/// Advance the motor side by `dt` and return the joint torque.
///
/// The joint torque is the spring torque at the start of the interval, so the
/// caller can hold it constant over a physics substep of the same length.
pub fn actuator_torque(
    params: &ActuatorParams,
    state: &ActuatorState,
    joint_pos: f64,
    joint_vel: f64,
    commanded_pos: f64,
    dt: f64,
) -> (f64, ActuatorState) {
    let mut next = state.clone();
    if dt <= 0.0 {
        return (spring_torque(params, state, joint_pos, joint_vel), next);
    }
    let limit = params.effective_torque_limit(state.winding_temp);
    let motor_torque = (params.kp * (commanded_pos - state.motor_pos)).clamp(-limit, limit);
    let tau_spring = spring_torque(params, state, joint_pos, joint_vel);

    // Semi-implicit in the motor damping so that stiff damping stays stable.
    let accel_explicit = (motor_torque - tau_spring) / params.rotor_inertia;
    let damping_rate = params.motor_damping / params.rotor_inertia;
    let vel = (state.motor_vel + dt * accel_explicit) / (1.0 + dt * damping_rate);
    next.motor_vel = vel.clamp(-params.velocity_limit, params.velocity_limit);
    next.motor_pos = state.motor_pos + dt * next.motor_vel;
    next.motor_torque = motor_torque;
    thermal_step(params, &mut next, motor_torque, dt);
    (tau_spring, next)
}

/// Forward-Euler update of the two-node thermal network.
pub fn thermal_step(params: &ActuatorParams, state: &mut ActuatorState, motor_torque: f64, dt: f64) {
    let heat = params.heat_per_torque_sq * motor_torque * motor_torque;
    let q_wh = (state.winding_temp - state.housing_temp) / params.thermal_resistance_winding;
    let q_ha = (state.housing_temp - params.ambient_temp) / params.thermal_resistance_housing;
    state.winding_temp += dt * (heat - q_wh) / params.thermal_capacitance_winding;
    state.housing_temp += dt * (q_wh - q_ha) / params.thermal_capacitance_housing;
}
