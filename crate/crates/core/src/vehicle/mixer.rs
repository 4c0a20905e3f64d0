use nalgebra::{Matrix4, Vector3, Vector4};

use super::VehicleParams;
use crate::error::{Error, Result};

/// X-configuration allocation between squared rotor speeds and
/// `(thrust, roll, pitch, yaw)` moments.
///
/// ```text
///        front
///    m3        m1
///       \    /
///       /    \
///    m2        m4
/// ```
///
/// m1 and m2 spin counter-clockwise seen from above, m3 and m4 clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    allocation: Matrix4<f64>,
    inverse: Matrix4<f64>,
    rotor_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixerOutput {
    pub rotor_speeds: Vector4<f64>,
    /// Some rotor hit zero or `rotor_max`.
    pub saturated: bool,
}

/// Body-frame rotor positions `(x, y)` in units of `arm / sqrt(2)`.
const ROTOR_XY: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
/// Reaction-torque sign about body z (down) for each rotor.
const ROTOR_SPIN: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

impl Mixer {
    pub fn new(params: &VehicleParams) -> Result<Self> {
        let d = params.arm_length / std::f64::consts::SQRT_2;
        let kt = params.thrust_coeff;
        let km = params.torque_coeff;
        let mut allocation = Matrix4::zeros();
        for (i, (&(x, y), &spin)) in ROTOR_XY.iter().zip(&ROTOR_SPIN).enumerate() {
            // Thrust along -z_body gives r x F = (-y f, x f, 0).
            allocation[(0, i)] = kt;
            allocation[(1, i)] = -y * d * kt;
            allocation[(2, i)] = x * d * kt;
            allocation[(3, i)] = spin * km;
        }
        let inverse = allocation
            .try_inverse()
            .ok_or_else(|| Error::config("vehicle", "singular rotor allocation matrix"))?;
        Ok(Mixer {
            allocation,
            inverse,
            rotor_max: params.rotor_max,
        })
    }

    pub fn allocation(&self) -> &Matrix4<f64> {
        &self.allocation
    }

    /// Rotor speeds realizing `thrust` (N) and body `moment` (N m), clipped to
    /// the feasible range.
    pub fn mix(&self, thrust: f64, moment: &Vector3<f64>) -> MixerOutput {
        let wrench = Vector4::new(thrust.max(0.0), moment.x, moment.y, moment.z);
        let squared = self.inverse * wrench;
        let mut saturated = false;
        let max_sq = self.rotor_max * self.rotor_max;
        let rotor_speeds = squared.map(|w| {
            if w < 0.0 {
                saturated = true;
                0.0
            } else if w > max_sq {
                saturated = true;
                self.rotor_max
            } else {
                w.sqrt()
            }
        });
        MixerOutput {
            rotor_speeds,
            saturated,
        }
    }

    /// `(thrust, moment)` produced by the given rotor speeds.
    pub fn wrench(&self, rotor_speeds: &Vector4<f64>) -> (f64, Vector3<f64>) {
        let w = self.allocation * rotor_speeds.component_mul(rotor_speeds);
        (w[0], Vector3::new(w[1], w[2], w[3]))
    }
}
