//! Second-order Butterworth low-pass filter in the form PX4 applies to gyro
//! samples.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LowPass2p {
    b: [f64; 3],
    a: [f64; 2],
    d1: f64,
    d2: f64,
    initialized: bool,
}

impl LowPass2p {
    pub fn new(sample_hz: f64, cutoff_hz: f64) -> Result<Self> {
        if !(sample_hz > 0.0 && cutoff_hz > 0.0 && cutoff_hz < sample_hz / 2.0) {
            return Err(Error::invalid(
                "gyro_cutoff_hz",
                format!("must lie in (0, {}) Hz", sample_hz / 2.0),
            ));
        }
        let ohm = (PI * cutoff_hz / sample_hz).tan();
        let k = 2.0 * FRAC_PI_4.cos() * ohm;
        let c = 1.0 + k + ohm * ohm;
        let b0 = ohm * ohm / c;
        Ok(LowPass2p {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (ohm * ohm - 1.0) / c, (1.0 - k + ohm * ohm) / c],
            d1: 0.0,
            d2: 0.0,
            initialized: false,
        })
    }

    /// Sets the internal state to the steady state for a constant `x`.
    pub fn reset(&mut self, x: f64) {
        let d = x / (self.b[0] + self.b[1] + self.b[2]);
        self.d1 = d;
        self.d2 = d;
        self.initialized = true;
    }

    /// Filters one sample. The first sample primes the filter at steady state.
    pub fn apply(&mut self, x: f64) -> f64 {
        if !self.initialized {
            self.reset(x);
        }
        let d0 = x - self.d1 * self.a[0] - self.d2 * self.a[1];
        let y = d0 * self.b[0] + self.d1 * self.b[1] + self.d2 * self.b[2];
        self.d2 = self.d1;
        self.d1 = d0;
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain_at(f: f64) -> f64 {
        let mut lp = LowPass2p::new(250.0, 30.0).unwrap();
        lp.reset(0.0);
        let n = 5000;
        let mut peak: f64 = 0.0;
        for k in 0..n {
            let y = lp.apply((2.0 * PI * f * k as f64 / 250.0).sin());
            if k > n / 2 {
                peak = peak.max(y.abs());
            }
        }
        peak
    }

    #[test]
    fn unity_dc_gain() {
        let mut lp = LowPass2p::new(250.0, 30.0).unwrap();
        let mut y = 0.0;
        for _ in 0..500 {
            y = lp.apply(0.7);
        }
        assert!((y - 0.7).abs() < 1e-12);
    }

    #[test]
    fn half_power_at_cutoff() {
        assert!((gain_at(30.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01);
        assert!(gain_at(2.0) > 0.99);
        assert!(gain_at(100.0) < 0.12);
    }

    #[test]
    fn rejects_cutoff_above_nyquist() {
        assert!(LowPass2p::new(250.0, 125.0).is_err());
        assert!(LowPass2p::new(250.0, 0.0).is_err());
    }
}
