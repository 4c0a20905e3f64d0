//! Cascaded multicopter autopilot with additive RCAC augmentation.
//!
//! Outer loop (position): `G_r` proportional position law feeding a velocity
//! setpoint to `G_v`, a PID velocity law producing the thrust vector. Inner
//! loop (attitude): a quaternion-error proportional law `G_q` producing body
//! rate setpoints, then `G_omega`, a PI rate law producing body moments.
//! Every linear block may be augmented by an RCAC controller whose output is
//! summed after the block. The rate-loop RCAC sees the rate error through a
//! deadzone; the fixed PI always acts on the raw rate error.
//!
//! The thrust vector setpoint is expressed in NED with the sign of the body
//! `+z` axis it commands, i.e. it is the negated rotor force: hover is
//! `(0, 0, m g)`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::deadzone::DeadzoneConfig;
use crate::error::{Error, Result};
use crate::log::sat;
use crate::mission::SetpointFrame;
use crate::rcac::{GainStructure, RcacConfig, RcacState};
use crate::vehicle::{Measurement, GRAVITY};

/// Thrust vectors shorter than this do not define an attitude, N.
pub const MIN_THRUST_FOR_ATTITUDE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub max_tilt: f64,
    /// Collective thrust bounds, N.
    pub min_thrust: f64,
    pub max_thrust: f64,
    /// Per-axis body moment bound, N m.
    pub max_moment: f64,
    /// Horizontal speed bound, m/s; vertical uses the same value.
    pub max_velocity: f64,
    /// Per-axis body rate setpoint bound, rad/s.
    pub max_rate: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_tilt: 0.6,
            min_thrust: 2.0,
            max_thrust: 36.0,
            max_moment: 2.0,
            max_velocity: 3.0,
            max_rate: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveFlags {
    pub position: bool,
    pub velocity: bool,
    pub attitude: bool,
    pub rate: bool,
}

impl AdaptiveFlags {
    pub fn all() -> Self {
        AdaptiveFlags {
            position: true,
            velocity: true,
            attitude: true,
            rate: true,
        }
    }

    pub fn any(&self) -> bool {
        self.position || self.velocity || self.attitude || self.rate
    }
}

/// RCAC hyperparameters for each adaptive block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopRcac {
    pub position: RcacConfig,
    pub velocity: RcacConfig,
    pub attitude: RcacConfig,
    pub rate: RcacConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutopilotConfig {
    /// `G_r` proportional gain per axis, (m/s)/m.
    pub gr_gains: [f64; 3],
    /// `G_v` (P, I, D) per axis in N per (m/s), N per m, N per (m/s^2).
    pub gv_gains: [[f64; 3]; 3],
    /// `G_v` integrator bound per axis, m.
    pub gv_integrator_limit: f64,
    /// `G_q` time constant, s.
    pub gq_time_constant: f64,
    /// `G_omega` (P, I) per axis in N m per (rad/s), N m per rad.
    pub gw_gains: [[f64; 2]; 3],
    /// `G_omega` integrator bound per axis, rad.
    pub gw_integrator_limit: f64,
    pub outer_rate_hz: f64,
    pub inner_rate_hz: f64,
    pub adaptive: AdaptiveFlags,
    pub rcac: LoopRcac,
    /// Applied to the rate error seen by the rate-loop RCAC.
    pub deadzone: DeadzoneConfig,
    pub limits: Limits,
}

impl AutopilotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_rate_hz > 0.0 && self.inner_rate_hz > 0.0) {
            return Err(Error::invalid("loop_rates", "must be positive"));
        }
        let ratio = self.inner_rate_hz / self.outer_rate_hz;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::invalid(
                "loop_rates",
                "inner rate must be an integer multiple of the outer rate",
            ));
        }
        if !(self.gq_time_constant > 0.0) {
            return Err(Error::invalid("gq_time_constant", "must be > 0"));
        }
        let gains = self
            .gr_gains
            .iter()
            .chain(self.gv_gains.iter().flatten())
            .chain(self.gw_gains.iter().flatten());
        if gains.clone().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gains", "must be finite"));
        }
        if !(self.gv_integrator_limit > 0.0 && self.gw_integrator_limit > 0.0) {
            return Err(Error::invalid("integrator_limit", "must be > 0"));
        }
        let l = &self.limits;
        for (name, v) in [
            ("limits.max_tilt", l.max_tilt),
            ("limits.max_thrust", l.max_thrust),
            ("limits.max_moment", l.max_moment),
            ("limits.max_velocity", l.max_velocity),
            ("limits.max_rate", l.max_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(l.max_tilt < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("limits.max_tilt", "must be below pi/2"));
        }
        if !(l.min_thrust >= 0.0 && l.min_thrust < l.max_thrust) {
            return Err(Error::invalid("limits.min_thrust", "must lie in [0, max_thrust)"));
        }
        for (name, rc, n) in [
            ("rcac.position", &self.rcac.position, 3),
            ("rcac.velocity", &self.rcac.velocity, 9),
            ("rcac.attitude", &self.rcac.attitude, 3),
            ("rcac.rate", &self.rcac.rate, 6),
        ] {
            rc.validate(n).map_err(|e| match e {
                Error::InvalidParameter { name: field, reason } => Error::config(format!("{name}.{field}"), reason),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Inner steps per outer step.
    pub fn outer_divider(&self) -> usize {
        (self.inner_rate_hz / self.outer_rate_hz).round() as usize
    }

    pub fn inner_dt(&self) -> f64 {
        1.0 / self.inner_rate_hz
    }

    pub fn outer_dt(&self) -> f64 {
        1.0 / self.outer_rate_hz
    }

    /// Same controller with every adaptive block switched off.
    pub fn fixed_gain(&self) -> Self {
        AutopilotConfig {
            adaptive: AdaptiveFlags::default(),
            deadzone: DeadzoneConfig::None,
            ..self.clone()
        }
    }
}

/// Quaternion whose body `+z` axis points along `thrust_vector` and whose
/// heading is `azimuth`. `None` when the thrust vector is too short.
pub fn attitude_from_thrust(thrust_vector: &Vector3<f64>, azimuth: f64) -> Option<UnitQuaternion<f64>> {
    let norm = thrust_vector.norm();
    if !(norm > MIN_THRUST_FOR_ATTITUDE) {
        return None;
    }
    let body_z = thrust_vector / norm;
    let heading_y = Vector3::new(-azimuth.sin(), azimuth.cos(), 0.0);
    let mut body_x = heading_y.cross(&body_z);
    if body_x.norm() < 1e-9 {
        // Thrust horizontal and along the heading's y axis.
        body_x = Vector3::new(0.0, 0.0, 1.0).cross(&body_z);
    }
    let body_x = body_x.normalize();
    let body_y = body_z.cross(&body_x);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[body_x, body_y, body_z]));
    Some(UnitQuaternion::from_rotation_matrix(&r))
}

/// Vector part of the attitude error `q_meas^-1 q_sp`, taken on the
/// short-way hemisphere. Zero scalar part counts as positive.
pub fn attitude_error(q_sp: &UnitQuaternion<f64>, q_meas: &UnitQuaternion<f64>) -> Vector3<f64> {
    let qe = q_meas.inverse() * q_sp;
    let sign = if qe.w < 0.0 { -1.0 } else { 1.0 };
    qe.imag() * sign
}

/// Fixed `G_q` law: body rate setpoint `(2 / tau) * attitude_error`.
pub fn attitude_rate_law(q_sp: &UnitQuaternion<f64>, q_meas: &UnitQuaternion<f64>, tau: f64) -> Vector3<f64> {
    attitude_error(q_sp, q_meas) * (2.0 / tau)
}

/// Outputs of one inner-loop step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutputs {
    /// Negated rotor force demand, NED, N.
    pub thrust_vector_sp: Vector3<f64>,
    /// Collective thrust for the mixer, N.
    pub thrust_sp: f64,
    pub moment_sp: Vector3<f64>,
    pub q_sp: UnitQuaternion<f64>,
    pub rate_sp: Vector3<f64>,
    /// Body rate fed back to the rate loop.
    pub rate_meas: Vector3<f64>,
    /// Velocity setpoint after `G_r`.
    pub velocity_sp: Vector3<f64>,
    /// Rate error before the deadzone.
    pub z_omega: Vector3<f64>,
    /// Rate error after the deadzone.
    pub z_omega_dz: Vector3<f64>,
    pub sat_flags: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionOutput {
    pub velocity_sp: Vector3<f64>,
    pub thrust_vector_sp: Vector3<f64>,
    pub sat_flags: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOutput {
    pub moment_sp: Vector3<f64>,
    pub z_omega: Vector3<f64>,
    pub z_omega_dz: Vector3<f64>,
    pub sat_flags: u32,
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn to_vec3(v: &nalgebra::DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

#[derive(Debug, Clone)]
pub struct Autopilot {
    cfg: AutopilotConfig,
    mass: f64,
    gv_integ: Vector3<f64>,
    prev_vel: Option<Vector3<f64>>,
    gw_integ: Vector3<f64>,
    rcac_r: RcacState,
    rcac_v: RcacState,
    rcac_q: RcacState,
    rcac_w: RcacState,
    thrust_vector_sp: Vector3<f64>,
    velocity_sp: Vector3<f64>,
    q_sp: UnitQuaternion<f64>,
    outer_flags: u32,
}

impl Autopilot {
    pub fn new(cfg: AutopilotConfig, mass: f64) -> Result<Self> {
        cfg.validate()?;
        if !(mass > 0.0) {
            return Err(Error::invalid("mass", "must be > 0"));
        }
        Ok(Autopilot {
            rcac_r: RcacState::new(3, GainStructure::P, cfg.rcac.position.clone())?,
            rcac_v: RcacState::new(3, GainStructure::Pid, cfg.rcac.velocity.clone())?,
            rcac_q: RcacState::new(3, GainStructure::P, cfg.rcac.attitude.clone())?,
            rcac_w: RcacState::new(3, GainStructure::Pi, cfg.rcac.rate.clone())?,
            mass,
            gv_integ: Vector3::zeros(),
            prev_vel: None,
            gw_integ: Vector3::zeros(),
            thrust_vector_sp: Vector3::new(0.0, 0.0, mass * GRAVITY),
            velocity_sp: Vector3::zeros(),
            q_sp: UnitQuaternion::identity(),
            outer_flags: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &AutopilotConfig {
        &self.cfg
    }

    pub fn rcac_position(&self) -> &RcacState {
        &self.rcac_r
    }
    pub fn rcac_velocity(&self) -> &RcacState {
        &self.rcac_v
    }
    pub fn rcac_attitude(&self) -> &RcacState {
        &self.rcac_q
    }
    pub fn rcac_rate(&self) -> &RcacState {
        &self.rcac_w
    }

    /// Thrust vector hover feedforward.
    pub fn hover_thrust_vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.mass * GRAVITY)
    }

    /// Outer loop: `G_r` then `G_v`, each with its adaptive term added after
    /// the block, followed by tilt and thrust saturation.
    pub fn position_control(
        &mut self,
        sp: &SetpointFrame,
        meas_pos: &Vector3<f64>,
        meas_vel: &Vector3<f64>,
        dt: f64,
    ) -> Result<PositionOutput> {
        check_finite(sp.position_sp.as_slice())?;
        check_finite(sp.velocity_sp.as_slice())?;
        check_finite(meas_pos.as_slice())?;
        check_finite(meas_vel.as_slice())?;
        let mut flags = 0;
        let cfg = &self.cfg;

        let pos_err = sp.position_sp - meas_pos;
        let mut vel_sp = pos_err.component_mul(&Vector3::from(cfg.gr_gains)) + sp.velocity_sp;
        if cfg.adaptive.position {
            let out = self.rcac_r.update(pos_err.as_slice(), dt)?;
            flags |= reset_flag(out.covariance_reset);
            vel_sp += to_vec3(&out.u);
        }
        let vmax = cfg.limits.max_velocity;
        let h = vel_sp.xy().norm();
        if h > vmax {
            vel_sp.x *= vmax / h;
            vel_sp.y *= vmax / h;
            flags |= sat::VELOCITY;
        }
        if vel_sp.z.abs() > vmax {
            vel_sp.z = vel_sp.z.signum() * vmax;
            flags |= sat::VELOCITY;
        }

        let vel_err = vel_sp - meas_vel;
        let lim = cfg.gv_integrator_limit;
        self.gv_integ = (self.gv_integ + vel_err * dt).map(|v| v.clamp(-lim, lim));
        let vel_rate = match self.prev_vel {
            Some(prev) => (meas_vel - prev) / dt,
            None => Vector3::zeros(),
        };
        self.prev_vel = Some(*meas_vel);
        let mut force = Vector3::zeros();
        for i in 0..3 {
            let [p, ki, d] = cfg.gv_gains[i];
            force[i] = p * vel_err[i] + ki * self.gv_integ[i] - d * vel_rate[i];
        }
        if cfg.adaptive.velocity {
            let out = self.rcac_v.update(vel_err.as_slice(), dt)?;
            flags |= reset_flag(out.covariance_reset);
            force += to_vec3(&out.u);
        }

        // Rotor force is -thrust_vector; a positive force demand reduces it.
        let mut tv = self.hover_thrust_vector() - force;
        let l = &cfg.limits;
        if tv.z < l.min_thrust || tv.z > l.max_thrust {
            tv.z = tv.z.clamp(l.min_thrust, l.max_thrust);
            flags |= sat::THRUST;
        }
        let h_tilt = tv.z * l.max_tilt.tan();
        let h_thrust = (l.max_thrust * l.max_thrust - tv.z * tv.z).max(0.0).sqrt();
        let h_max = h_tilt.min(h_thrust);
        let h = tv.xy().norm();
        if h > h_max {
            tv.x *= h_max / h;
            tv.y *= h_max / h;
            flags |= if h_tilt <= h_thrust { sat::TILT } else { sat::THRUST };
        }

        Ok(PositionOutput {
            velocity_sp: vel_sp,
            thrust_vector_sp: tv,
            sat_flags: flags,
        })
    }

    /// `G_q` plus its adaptive term, with the azimuth-rate feedforward on the
    /// body yaw axis.
    pub fn attitude_control(
        &mut self,
        q_sp: &UnitQuaternion<f64>,
        q_meas: &UnitQuaternion<f64>,
        azimuth_rate_sp: f64,
        dt: f64,
    ) -> Result<(Vector3<f64>, u32)> {
        let mut flags = 0;
        let err = attitude_error(q_sp, q_meas);
        check_finite(err.as_slice())?;
        let mut rate_sp = err * (2.0 / self.cfg.gq_time_constant);
        rate_sp.z += azimuth_rate_sp;
        if self.cfg.adaptive.attitude {
            let out = self.rcac_q.update(err.as_slice(), dt)?;
            flags |= reset_flag(out.covariance_reset);
            rate_sp += to_vec3(&out.u);
        }
        let rmax = self.cfg.limits.max_rate;
        Ok((rate_sp.map(|v| v.clamp(-rmax, rmax)), flags))
    }

    /// `G_omega` on the raw rate error plus the adaptive term driven by the
    /// deadzoned rate error; moments saturated per axis.
    pub fn rate_control(
        &mut self,
        rate_sp: &Vector3<f64>,
        rate_meas: &Vector3<f64>,
        dt: f64,
    ) -> Result<RateOutput> {
        check_finite(rate_sp.as_slice())?;
        check_finite(rate_meas.as_slice())?;
        let mut flags = 0;
        let z = rate_sp - rate_meas;
        let z_dz = Vector3::from_iterator(self.cfg.deadzone.apply(z.as_slice())?);

        let lim = self.cfg.gw_integrator_limit;
        self.gw_integ = (self.gw_integ + z * dt).map(|v| v.clamp(-lim, lim));
        let mut moment = Vector3::zeros();
        for i in 0..3 {
            let [p, ki] = self.cfg.gw_gains[i];
            moment[i] = p * z[i] + ki * self.gw_integ[i];
        }
        if self.cfg.adaptive.rate {
            let out = self.rcac_w.update(z_dz.as_slice(), dt)?;
            flags |= reset_flag(out.covariance_reset);
            moment += to_vec3(&out.u);
        }
        let mmax = self.cfg.limits.max_moment;
        if moment.iter().any(|m| m.abs() > mmax) {
            flags |= sat::MOMENT;
            moment = moment.map(|m| m.clamp(-mmax, mmax));
        }
        Ok(RateOutput {
            moment_sp: moment,
            z_omega: z,
            z_omega_dz: z_dz,
            sat_flags: flags,
        })
    }

    /// One inner-loop step. Pass the mission setpoint on steps where the outer
    /// loop runs and `None` otherwise; the last outer-loop result is held in
    /// between.
    pub fn step(&mut self, sp: Option<&SetpointFrame>, meas: &Measurement) -> Result<ControlOutputs> {
        let mut flags = 0;
        let mut azimuth_rate = 0.0;
        if let Some(sp) = sp {
            let out = self.position_control(sp, &meas.position, &meas.velocity, self.cfg.outer_dt())?;
            self.thrust_vector_sp = out.thrust_vector_sp;
            self.velocity_sp = out.velocity_sp;
            self.outer_flags = out.sat_flags;
            match attitude_from_thrust(&out.thrust_vector_sp, sp.azimuth_sp) {
                Some(q) => self.q_sp = q,
                None => self.outer_flags |= sat::ATTITUDE_HOLD,
            }
            azimuth_rate = sp.azimuth_rate_sp;
        }
        flags |= self.outer_flags;
        let dt = self.cfg.inner_dt();
        let q_sp = self.q_sp;
        let (rate_sp, f) = self.attitude_control(&q_sp, &meas.attitude, azimuth_rate, dt)?;
        flags |= f;
        let omega = meas.omega;
        let rate = self.rate_control(&rate_sp, &omega, dt)?;
        flags |= rate.sat_flags;
        Ok(ControlOutputs {
            thrust_vector_sp: self.thrust_vector_sp,
            thrust_sp: self.thrust_vector_sp.norm(),
            moment_sp: rate.moment_sp,
            q_sp,
            rate_sp,
            rate_meas: omega,
            velocity_sp: self.velocity_sp,
            z_omega: rate.z_omega,
            z_omega_dz: rate.z_omega_dz,
            sat_flags: flags,
        })
    }
}

fn reset_flag(reset: bool) -> u32 {
    if reset {
        sat::COVARIANCE_RESET
    } else {
        0
    }
}
