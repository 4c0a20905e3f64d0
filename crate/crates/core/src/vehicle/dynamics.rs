use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};

use super::{Mixer, RigidBodyState, VehicleParams, VehicleState, GRAVITY};
use crate::error::{Error, Result};

/// Largest integration step accepted by [`step_dynamics`].
pub const MAX_STEP: f64 = 1.0 / 200.0;

/// Time derivative of a [`VehicleState`], with the attitude rate kept as a
/// raw quaternion.
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Quaternion<f64>,
    pub omega: Vector3<f64>,
    pub rotor_speeds: Vector4<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Flat {
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    attitude: Quaternion<f64>,
    omega: Vector3<f64>,
    rotor_speeds: Vector4<f64>,
}

impl Flat {
    fn of(s: &VehicleState) -> Self {
        Flat {
            position: s.body.position,
            velocity: s.body.velocity,
            attitude: *s.body.attitude.quaternion(),
            omega: s.body.omega,
            rotor_speeds: s.rotor_speeds,
        }
    }

    fn advanced(&self, d: &StateDerivative, h: f64) -> Self {
        Flat {
            position: self.position + d.position * h,
            velocity: self.velocity + d.velocity * h,
            attitude: self.attitude + d.attitude * h,
            omega: self.omega + d.omega * h,
            rotor_speeds: self.rotor_speeds + d.rotor_speeds * h,
        }
    }
}

fn derivative(
    s: &Flat,
    rotor_cmd: &Vector4<f64>,
    params: &VehicleParams,
    mixer: &Mixer,
) -> StateDerivative {
    let (thrust, moment) = mixer.wrench(&s.rotor_speeds);
    // The attitude is only approximately unit inside an RK4 stage.
    let q = UnitQuaternion::new_normalize(s.attitude);
    let f_world = q * Vector3::new(0.0, 0.0, -thrust);
    let drag = Vector3::from(params.drag_coeff).component_mul(&s.velocity);
    let accel = (f_world - drag) / params.mass + Vector3::new(0.0, 0.0, GRAVITY);

    let j = params.inertia_vec();
    let jw = j.component_mul(&s.omega);
    let omega_dot = (moment - s.omega.cross(&jw)).component_div(&j);

    let omega_q = Quaternion::from_parts(0.0, s.omega);
    let q_dot = s.attitude * omega_q * 0.5;

    StateDerivative {
        position: s.velocity,
        velocity: accel,
        attitude: q_dot,
        omega: omega_dot,
        rotor_speeds: (rotor_cmd - s.rotor_speeds) / params.rotor_time_constant,
    }
}

/// Derivative of `state` under the commanded rotor speeds.
pub fn state_derivative(
    state: &VehicleState,
    rotor_cmd: &Vector4<f64>,
    params: &VehicleParams,
    mixer: &Mixer,
) -> StateDerivative {
    derivative(&Flat::of(state), rotor_cmd, params, mixer)
}

/// One fixed RK4 step of length `dt` with the rotor command held constant.
/// The attitude is renormalized afterwards.
pub fn step_dynamics(
    state: &VehicleState,
    rotor_cmd: &Vector4<f64>,
    params: &VehicleParams,
    mixer: &Mixer,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::invalid("dt", format!("must lie in (0, {MAX_STEP}], got {dt}")));
    }
    let y0 = Flat::of(state);
    let k1 = derivative(&y0, rotor_cmd, params, mixer);
    let k2 = derivative(&y0.advanced(&k1, dt / 2.0), rotor_cmd, params, mixer);
    let k3 = derivative(&y0.advanced(&k2, dt / 2.0), rotor_cmd, params, mixer);
    let k4 = derivative(&y0.advanced(&k3, dt), rotor_cmd, params, mixer);

    let w = dt / 6.0;
    let next = Flat {
        position: y0.position + (k1.position + k2.position * 2.0 + k3.position * 2.0 + k4.position) * w,
        velocity: y0.velocity + (k1.velocity + k2.velocity * 2.0 + k3.velocity * 2.0 + k4.velocity) * w,
        attitude: y0.attitude + (k1.attitude + k2.attitude * 2.0 + k3.attitude * 2.0 + k4.attitude) * w,
        omega: y0.omega + (k1.omega + k2.omega * 2.0 + k3.omega * 2.0 + k4.omega) * w,
        rotor_speeds: y0.rotor_speeds
            + (k1.rotor_speeds + k2.rotor_speeds * 2.0 + k3.rotor_speeds * 2.0 + k4.rotor_speeds) * w,
    };

    let finite = next.position.iter().all(|v| v.is_finite())
        && next.velocity.iter().all(|v| v.is_finite())
        && next.attitude.coords.iter().all(|v| v.is_finite())
        && next.omega.iter().all(|v| v.is_finite())
        && next.rotor_speeds.iter().all(|v| v.is_finite());
    if !finite || next.attitude.norm() == 0.0 {
        return Err(Error::Numeric("non-finite vehicle state after integration".into()));
    }

    Ok(VehicleState {
        body: RigidBodyState {
            position: next.position,
            velocity: next.velocity,
            attitude: UnitQuaternion::new_normalize(next.attitude),
            omega: next.omega,
        },
        rotor_speeds: next.rotor_speeds,
    })
}
