use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::RigidBodyState;
use crate::error::{Error, Result};
use crate::filter::LowPass2p;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoiseConfig {
    /// Per raw gyro sample, rad/s.
    pub gyro_std: f64,
    /// Raw gyro sampling rate, Hz. An integer multiple of the control rate.
    pub imu_rate_hz: f64,
    /// Low-pass cutoff applied at the IMU rate, Hz; 0 disables the filter.
    pub gyro_cutoff_hz: f64,
    /// m
    pub pos_std: f64,
    /// m/s
    pub vel_std: f64,
    pub seed: u64,
}

impl Default for SensorNoiseConfig {
    fn default() -> Self {
        SensorNoiseConfig {
            gyro_std: 0.05,
            imu_rate_hz: 8000.0,
            gyro_cutoff_hz: 40.0,
            pos_std: 0.0,
            vel_std: 0.0,
            seed: 1,
        }
    }
}

impl SensorNoiseConfig {
    pub fn noiseless(seed: u64) -> Self {
        SensorNoiseConfig {
            gyro_std: 0.0,
            imu_rate_hz: 1000.0,
            gyro_cutoff_hz: 0.0,
            pos_std: 0.0,
            vel_std: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.imu_rate_hz.is_finite() && self.imu_rate_hz > 0.0) {
            return Err(Error::invalid("imu_rate_hz", "must be > 0"));
        }
        if self.gyro_cutoff_hz != 0.0 {
            LowPass2p::new(self.imu_rate_hz, self.gyro_cutoff_hz)?;
        }
        for (name, v) in [
            ("gyro_std", self.gyro_std),
            ("pos_std", self.pos_std),
            ("vel_std", self.vel_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// IMU samples per control step at `control_rate_hz`.
    pub fn oversample(&self, control_rate_hz: f64) -> Result<usize> {
        let ratio = self.imu_rate_hz / control_rate_hz;
        if !ratio.is_finite() || (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::invalid(
                "imu_rate_hz",
                format!("must be an integer multiple of the control rate {control_rate_hz} Hz"),
            ));
        }
        Ok(ratio.round() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub omega: Vector3<f64>,
}

/// Seeded sensor model. The gyro is sampled at the IMU rate, holding the
/// body rate of the current control step, and low-pass filtered there; the
/// last filtered sample is reported. Every call draws the gyro normals
/// first, then three for position and three for velocity, so the gyro
/// stream does not depend on the other noise levels.
#[derive(Debug, Clone)]
pub struct Sensors {
    noise: SensorNoiseConfig,
    rng: ChaCha8Rng,
    oversample: usize,
    gyro_lpf: Option<[LowPass2p; 3]>,
}

impl Sensors {
    pub fn new(noise: SensorNoiseConfig, control_rate_hz: f64) -> Result<Self> {
        noise.validate()?;
        let oversample = noise.oversample(control_rate_hz)?;
        let gyro_lpf = if noise.gyro_cutoff_hz == 0.0 {
            None
        } else {
            let lp = LowPass2p::new(noise.imu_rate_hz, noise.gyro_cutoff_hz)?;
            Some([lp.clone(), lp.clone(), lp])
        };
        let rng = ChaCha8Rng::seed_from_u64(noise.seed);
        Ok(Sensors {
            noise,
            rng,
            oversample,
            gyro_lpf,
        })
    }

    fn draw3(&mut self, std: f64) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        for c in v.iter_mut() {
            let n: f64 = self.rng.sample(StandardNormal);
            *c = n * std;
        }
        v
    }

    /// Noisy measurement of `state`. Attitude is passed through exactly.
    pub fn sense(&mut self, state: &RigidBodyState) -> Measurement {
        let mut omega = state.omega;
        for _ in 0..self.oversample {
            let raw = state.omega + self.draw3(self.noise.gyro_std);
            omega = match &mut self.gyro_lpf {
                Some(lp) => Vector3::new(lp[0].apply(raw.x), lp[1].apply(raw.y), lp[2].apply(raw.z)),
                None => raw,
            };
        }
        let pos = self.draw3(self.noise.pos_std);
        let vel = self.draw3(self.noise.vel_std);
        Measurement {
            position: state.position + pos,
            velocity: state.velocity + vel,
            attitude: state.attitude,
            omega,
        }
    }
}
