//! Quadcopter plant: rigid-body dynamics, X-configuration mixer and sensors.
//!
//! Frames follow the usual multicopter convention: world NED, body FRD, and
//! the attitude quaternion maps body vectors into the world frame.

mod dynamics;
mod mixer;
mod sensors;

pub use dynamics::{state_derivative, step_dynamics, StateDerivative, MAX_STEP};
pub use mixer::{Mixer, MixerOutput};
pub use sensors::{Measurement, SensorNoiseConfig, Sensors};

use nalgebra::{UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    /// NED position, m.
    pub position: Vector3<f64>,
    /// NED velocity, m/s.
    pub velocity: Vector3<f64>,
    /// Body-to-world rotation.
    pub attitude: UnitQuaternion<f64>,
    /// Body rates, rad/s.
    pub omega: Vector3<f64>,
}

impl RigidBodyState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        RigidBodyState {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            omega: Vector3::zeros(),
        }
    }
}

/// Rigid body plus the rotor speeds that lag behind their commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub body: RigidBodyState,
    /// Rotor speeds, rad/s, in motor order 1..4.
    pub rotor_speeds: Vector4<f64>,
}

impl VehicleState {
    /// At rest in hover trim at `position`.
    pub fn hovering(position: Vector3<f64>, params: &VehicleParams) -> Self {
        VehicleState {
            body: RigidBodyState::at_rest(position),
            rotor_speeds: Vector4::repeat(params.hover_rotor_speed()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    /// Diagonal inertia, kg m^2.
    pub inertia: [f64; 3],
    pub arm_length: f64,
    /// N / (rad/s)^2
    pub thrust_coeff: f64,
    /// N m / (rad/s)^2
    pub torque_coeff: f64,
    pub rotor_max: f64,
    pub rotor_time_constant: f64,
    /// Linear drag, N / (m/s), per world axis.
    pub drag_coeff: [f64; 3],
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 2.0,
            inertia: [0.021, 0.021, 0.036],
            arm_length: 0.25,
            thrust_coeff: 8e-6,
            torque_coeff: 1e-7,
            rotor_max: 1100.0,
            rotor_time_constant: 0.02,
            drag_coeff: [0.3, 0.3, 0.3],
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("mass", self.mass),
            ("arm_length", self.arm_length),
            ("thrust_coeff", self.thrust_coeff),
            ("torque_coeff", self.torque_coeff),
            ("rotor_max", self.rotor_max),
            ("rotor_time_constant", self.rotor_time_constant),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if self.inertia.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("inertia", "all entries must be > 0"));
        }
        if self.drag_coeff.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("drag_coeff", "all entries must be >= 0"));
        }
        if 4.0 * self.thrust_coeff * self.rotor_max * self.rotor_max <= self.mass * GRAVITY {
            return Err(Error::invalid("rotor_max", "vehicle cannot lift its own weight"));
        }
        Ok(())
    }

    pub fn inertia_vec(&self) -> Vector3<f64> {
        Vector3::from(self.inertia)
    }

    pub fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }

    /// Rotor speed at which four rotors carry the weight.
    pub fn hover_rotor_speed(&self) -> f64 {
        (self.weight() / (4.0 * self.thrust_coeff)).sqrt()
    }

    pub fn max_total_thrust(&self) -> f64 {
        4.0 * self.thrust_coeff * self.rotor_max * self.rotor_max
    }
}
