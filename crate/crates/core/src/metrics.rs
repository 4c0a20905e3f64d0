//! Offline flight-log metrics: RMS tracking costs, pitching-moment spectrum
//! and rate-gain drift.

use std::ops::Range;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::FlightLog;

pub const MIN_SPECTRUM_LEN: usize = 64;
/// Pitch is the second body axis.
pub const PITCH: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Leading seconds excluded from RMS and spectra (takeoff hold).
    pub skip_start_s: f64,
    /// Trailing seconds excluded (landing hold).
    pub skip_end_s: f64,
    pub cutoff_hz: f64,
    /// Band-power ratio above which the run counts as oscillating.
    pub oscillation_threshold: f64,
    /// Time of the reference gain norm for the drift ratio.
    pub drift_reference_s: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            skip_start_s: 5.0,
            skip_end_s: 5.0,
            cutoff_hz: 10.0,
            oscillation_threshold: 0.2,
            drift_reference_s: 10.0,
        }
    }
}

impl MetricsConfig {
    /// No trimming; every row counts.
    pub fn whole_log() -> Self {
        MetricsConfig {
            skip_start_s: 0.0,
            skip_end_s: 0.0,
            ..MetricsConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("skip_start_s", self.skip_start_s),
            ("skip_end_s", self.skip_end_s),
            ("drift_reference_s", self.drift_reference_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.cutoff_hz.is_finite() && self.cutoff_hz > 0.0) {
            return Err(Error::invalid("cutoff_hz", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.oscillation_threshold) {
            return Err(Error::invalid("oscillation_threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Row range of the active window.
    pub fn window(&self, log: &FlightLog) -> Result<Range<usize>> {
        let rows = log.rows();
        if rows.is_empty() {
            return Err(Error::EmptyLog);
        }
        let t0 = rows[0].t + self.skip_start_s;
        let t1 = rows[rows.len() - 1].t - self.skip_end_s;
        let start = rows.partition_point(|r| r.t < t0);
        let end = rows.partition_point(|r| r.t <= t1);
        if start >= end {
            return Err(Error::EmptyLog);
        }
        Ok(start..end)
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (sum / n as f64).sqrt()
}

/// RMS position error over the active window, m.
pub fn j_r(log: &FlightLog, cfg: &MetricsConfig) -> Result<f64> {
    let w = cfg.window(log)?;
    Ok(rms(log.rows()[w].iter().map(|r| {
        (0..3).map(|i| (r.pos_sp[i] - r.pos[i]).powi(2)).sum::<f64>()
    })))
}

/// RMS pitch-rate error over the active window, rad/s.
pub fn j_omega(log: &FlightLog, cfg: &MetricsConfig) -> Result<f64> {
    let w = cfg.window(log)?;
    Ok(rms(log.rows()[w].iter().map(|r| r.z_w[PITCH].powi(2))))
}

/// One-sided DFT magnitude spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Length of the transformed signal.
    pub n: usize,
}

impl Spectrum {
    /// Weight of bin `k` in the one-sided power sum: interior bins stand in
    /// for their negative-frequency mirror.
    fn weight(&self, k: usize) -> f64 {
        let nyquist_bin = self.n % 2 == 0 && k == self.n / 2;
        if k == 0 || nyquist_bin {
            1.0
        } else {
            2.0
        }
    }

    /// `(1/n) sum |X_k|^2` over both halves, which equals the time-domain
    /// energy of the transformed signal.
    pub fn energy(&self) -> f64 {
        self.band_energy(|_| true)
    }

    fn band_energy(&self, keep: impl Fn(f64) -> bool) -> f64 {
        self.magnitudes
            .iter()
            .enumerate()
            .filter(|(k, _)| keep(self.freqs[*k]))
            .map(|(k, m)| self.weight(k) * m * m)
            .sum::<f64>()
            / self.n as f64
    }

    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1]
        } else {
            0.0
        }
    }

    pub fn peak_frequency(&self) -> f64 {
        let (k, _) = self
            .magnitudes
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (k, &m)| if m > best.1 { (k, m) } else { best });
        self.freqs[k]
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Mean-removed, Hann-windowed signal as fed to the transform.
pub fn windowed(signal: &[f64]) -> Vec<f64> {
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    signal
        .iter()
        .zip(hann(signal.len()))
        .map(|(x, w)| (x - mean) * w)
        .collect()
}

pub fn spectrum(signal: &[f64], dt: f64) -> Result<Spectrum> {
    if signal.len() < MIN_SPECTRUM_LEN {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            min: MIN_SPECTRUM_LEN,
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if let Some(index) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let n = signal.len();
    let mut buf: Vec<Complex<f64>> = windowed(signal).into_iter().map(|x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    let df = 1.0 / (n as f64 * dt);
    Ok(Spectrum {
        freqs: (0..bins).map(|k| k as f64 * df).collect(),
        magnitudes: buf[..bins].iter().map(|c| c.norm()).collect(),
        n,
    })
}

/// Fraction of spectral power strictly above `cutoff_hz`. A spectrum with
/// no power reports 0.
pub fn band_power_ratio(spec: &Spectrum, cutoff_hz: f64) -> f64 {
    let total = spec.energy();
    if total <= 0.0 {
        return 0.0;
    }
    (spec.band_energy(|f| f > cutoff_hz) / total).clamp(0.0, 1.0)
}

/// Per-step Euclidean norm of the six rate-loop gains.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTrace {
    pub t: Vec<f64>,
    pub norms: Vec<f64>,
}

impl DriftTrace {
    pub fn max(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn last(&self) -> f64 {
        self.norms.last().copied().unwrap_or(0.0)
    }

    /// Norm at the last sample not after `t`.
    pub fn at(&self, t: f64) -> f64 {
        let i = self.t.partition_point(|v| *v <= t).saturating_sub(1);
        self.norms.get(i).copied().unwrap_or(0.0)
    }
}

pub fn drift_trace(log: &FlightLog) -> Result<DriftTrace> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(DriftTrace {
        t: log.rows().iter().map(|r| r.t).collect(),
        norms: log
            .rows()
            .iter()
            .map(|r| r.theta_w.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub j_r: f64,
    pub j_omega: f64,
    /// Pitching-moment power above the cutoff, as a fraction of the total.
    pub band_power_ratio: f64,
    pub theta_final_norm: f64,
    pub theta_max_norm: f64,
    /// Gain norm at the drift reference time.
    pub theta_reference_norm: f64,
    pub oscillation_flag: bool,
}

impl MetricsReport {
    /// `theta_max_norm / theta_reference_norm`; infinite when the reference
    /// norm is zero but the gains moved later.
    pub fn drift_ratio(&self) -> f64 {
        if self.theta_reference_norm > 0.0 {
            self.theta_max_norm / self.theta_reference_norm
        } else if self.theta_max_norm > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    }
}

/// Pitching-moment spectrum over the active window.
pub fn pitch_moment_spectrum(log: &FlightLog, cfg: &MetricsConfig) -> Result<Spectrum> {
    let w = cfg.window(log)?;
    let signal: Vec<f64> = log.rows()[w].iter().map(|r| r.moment_sp[PITCH]).collect();
    spectrum(&signal, log.dt())
}

pub fn evaluate(log: &FlightLog, cfg: &MetricsConfig) -> Result<MetricsReport> {
    let spec = pitch_moment_spectrum(log, cfg)?;
    let ratio = band_power_ratio(&spec, cfg.cutoff_hz);
    let trace = drift_trace(log)?;
    let t0 = log.rows()[0].t;
    Ok(MetricsReport {
        j_r: j_r(log, cfg)?,
        j_omega: j_omega(log, cfg)?,
        band_power_ratio: ratio,
        theta_final_norm: trace.last(),
        theta_max_norm: trace.max(),
        theta_reference_norm: trace.at(t0 + cfg.drift_reference_s),
        oscillation_flag: ratio > cfg.oscillation_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::LogRow;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn log_with(n: usize, dt: f64, f: impl Fn(usize, &mut LogRow)) -> FlightLog {
        let rows = (0..n)
            .map(|k| {
                let mut r = LogRow {
                    t: k as f64 * dt,
                    ..LogRow::default()
                };
                f(k, &mut r);
                r
            })
            .collect();
        FlightLog::from_rows(dt, rows).unwrap()
    }

    #[test]
    fn rms_simple_cases() {
        let cfg = MetricsConfig::whole_log();
        let perfect = log_with(100, 0.01, |_, _| {});
        assert_eq!(j_r(&perfect, &cfg).unwrap(), 0.0);
        assert_eq!(j_omega(&perfect, &cfg).unwrap(), 0.0);

        let offset = log_with(100, 0.01, |_, r| {
            r.pos_sp = [1.0, 0.0, -2.0];
            r.pos = [0.0, 0.0, -2.0];
            r.z_w = [0.5, 0.1, -0.3];
        });
        assert_relative_eq!(j_r(&offset, &cfg).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(j_omega(&offset, &cfg).unwrap(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert!(matches!(
            j_r(&FlightLog::new(0.01), &MetricsConfig::whole_log()),
            Err(Error::EmptyLog)
        ));
        let short = log_with(100, 0.01, |_, _| {});
        assert!(matches!(j_r(&short, &MetricsConfig::default()), Err(Error::EmptyLog)));
    }

    #[test]
    fn window_trims_holds() {
        let cfg = MetricsConfig::default();
        // Error only during the first 5 s.
        let log = log_with(2000, 0.01, |k, r| {
            if k < 500 {
                r.pos_sp = [3.0, 0.0, 0.0];
            }
        });
        assert_eq!(j_r(&log, &cfg).unwrap(), 0.0);
        assert!(j_r(&log, &MetricsConfig::whole_log()).unwrap() > 0.0);
    }

    #[test]
    fn constant_signal_has_no_spectrum() {
        let s = spectrum(&vec![3.7; 256], 0.004).unwrap();
        assert!(s.magnitudes.iter().all(|m| *m < 1e-10));
        let zero = spectrum(&vec![0.0; 256], 0.004).unwrap();
        assert_eq!(band_power_ratio(&zero, 10.0), 0.0);
    }

    #[test]
    fn too_short_signal() {
        assert!(matches!(
            spectrum(&[0.0; 10], 0.01),
            Err(Error::SignalTooShort { len: 10, .. })
        ));
    }

    #[test]
    fn band_ratio_extremes() {
        let dt = 1.0 / 250.0;
        let tone = |f: f64| -> Vec<f64> { (0..5000).map(|k| (2.0 * PI * f * k as f64 * dt).sin()).collect() };
        let low = spectrum(&tone(1.0), dt).unwrap();
        assert!(band_power_ratio(&low, 10.0) < 1e-6);
        let high = spectrum(&tone(20.0), dt).unwrap();
        assert!(band_power_ratio(&high, 10.0) > 1.0 - 1e-6);
    }

    #[test]
    fn drift_trace_shapes() {
        let flat = log_with(50, 0.1, |_, r| r.theta_w = [0.3, 0.4, 0.0, 0.0, 0.0, 0.0]);
        let tr = drift_trace(&flat).unwrap();
        assert!(tr.norms.iter().all(|v| (*v - 0.5).abs() < 1e-15));
        assert_eq!(tr.max(), tr.last());

        let growing = log_with(50, 0.1, |k, r| r.theta_w = [0.0, 0.0, 0.6 * k as f64, 0.8 * k as f64, 0.0, 0.0]);
        let tr = drift_trace(&growing).unwrap();
        for (k, v) in tr.norms.iter().enumerate() {
            assert_relative_eq!(*v, k as f64, epsilon = 1e-12);
        }
        assert_relative_eq!(tr.at(2.0), 20.0, epsilon = 1e-12);
    }
}
