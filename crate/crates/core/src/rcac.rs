//! Retrospective cost adaptive control (RCAC) for digital P/PI/PID gains.
//!
//! Each adaptive loop owns an [`RcacState`]. At step `k` the controller
//! output is `u(k) = Phi(k) theta`, where `Phi(k)` is a block-diagonal
//! regressor built from the performance variable `z` of every channel
//! (current value, clamped running integral, backward difference).
//!
//! The gains are refit every step against the retrospective performance
//!
//! ```text
//! zhat(k, theta) = z(k) + Phi_f(k) theta - u_f(k)
//! Phi_f(k) = sum_i N_i Phi(k - i),   u_f(k) = sum_i N_i u(k - i)
//! ```
//!
//! where `N_1 .. N_nf` are the FIR target-model coefficients. The minimizer
//! of the discounted sum of `|zhat|^2` plus the initial regularization
//! `(theta - theta0)' P0^-1 (theta - theta0)` is tracked by one recursive
//! least-squares step per sample, regressing `u_f - z` onto `Phi_f`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which terms each channel of an adaptive controller carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainStructure {
    P,
    Pi,
    Pid,
}

impl GainStructure {
    pub fn gains_per_channel(self) -> usize {
        match self {
            GainStructure::P => 1,
            GainStructure::Pi => 2,
            GainStructure::Pid => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcacConfig {
    /// Initial covariance scale; the regularization is `(1/p0) I`.
    pub p0: f64,
    /// Initial gains. Empty means all zero.
    #[serde(default)]
    pub theta0: Vec<f64>,
    /// Target-model FIR coefficients `N_1, N_2, ...` multiplying `q^-1, q^-2, ...`.
    pub filter_coeffs: Vec<f64>,
    pub forgetting: f64,
    pub integrator_clamp: f64,
    pub adaptation_enabled: bool,
    /// Upper bound on the covariance trace. Forgetting is skipped on steps
    /// where dividing by the forgetting factor would exceed it.
    #[serde(default)]
    pub max_covariance_trace: Option<f64>,
}

impl Default for RcacConfig {
    fn default() -> Self {
        RcacConfig {
            p0: 1.0,
            theta0: Vec::new(),
            filter_coeffs: vec![1.0],
            forgetting: 1.0,
            integrator_clamp: 1.0,
            adaptation_enabled: true,
            max_covariance_trace: None,
        }
    }
}

impl RcacConfig {
    pub fn validate(&self, n_gains: usize) -> Result<()> {
        if !(self.p0.is_finite() && self.p0 > 0.0) {
            return Err(Error::invalid("p0", format!("must be > 0, got {}", self.p0)));
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err(Error::invalid(
                "forgetting",
                format!("must lie in (0, 1], got {}", self.forgetting),
            ));
        }
        if self.filter_coeffs.is_empty() || self.filter_coeffs.iter().all(|c| *c == 0.0) {
            return Err(Error::invalid("filter_coeffs", "must contain a nonzero coefficient"));
        }
        if self.filter_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("filter_coeffs", "must be finite"));
        }
        if !(self.integrator_clamp > 0.0) {
            return Err(Error::invalid(
                "integrator_clamp",
                format!("must be > 0, got {}", self.integrator_clamp),
            ));
        }
        if !self.theta0.is_empty() && self.theta0.len() != n_gains {
            return Err(Error::invalid(
                "theta0",
                format!("expected {n_gains} gains, got {}", self.theta0.len()),
            ));
        }
        if self.theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta0", "must be finite"));
        }
        if let Some(bound) = self.max_covariance_trace {
            if !(bound >= self.p0 * n_gains as f64) {
                return Err(Error::invalid(
                    "max_covariance_trace",
                    format!("must be at least p0 * n_gains = {}", self.p0 * n_gains as f64),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of one RLS step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RlsEvent {
    /// The covariance lost positive-definiteness and was reset to `p0 I`.
    pub covariance_reset: bool,
}

/// Recursive least squares with exponential forgetting and a vector
/// measurement per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Rls {
    theta: DVector<f64>,
    covariance: DMatrix<f64>,
    forgetting: f64,
    p0: f64,
    max_trace: Option<f64>,
}

impl Rls {
    pub fn new(theta0: DVector<f64>, p0: f64, forgetting: f64) -> Self {
        let n = theta0.len();
        Rls {
            theta: theta0,
            covariance: DMatrix::identity(n, n) * p0,
            forgetting,
            p0,
            max_trace: None,
        }
    }

    pub fn with_max_trace(mut self, bound: Option<f64>) -> Self {
        self.max_trace = bound;
        self
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Folds in the rows `regressor * theta ~ target`.
    pub fn update(&mut self, regressor: &DMatrix<f64>, target: &DVector<f64>) -> Result<RlsEvent> {
        let rows = regressor.nrows();
        let p_phi_t = &self.covariance * regressor.transpose();
        let innovation_cov =
            DMatrix::identity(rows, rows) * self.forgetting + regressor * &p_phi_t;
        let inv = innovation_cov
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular RLS innovation covariance".into()))?;
        let gain = &p_phi_t * inv;
        let innovation = target - regressor * &self.theta;
        self.theta += &gain * innovation;

        let mut next = &self.covariance - &gain * p_phi_t.transpose();
        let discounted_trace = next.trace() / self.forgetting;
        let forget = match self.max_trace {
            Some(bound) => discounted_trace <= bound,
            None => true,
        };
        if forget {
            next /= self.forgetting;
        }
        let sym = (&next + next.transpose()) * 0.5;
        self.covariance = sym;

        let mut event = RlsEvent::default();
        if self.covariance.clone().cholesky().is_none()
            || self.covariance.iter().any(|v| !v.is_finite())
        {
            log::warn!("RLS covariance lost positive-definiteness; resetting to p0 I");
            let n = self.theta.len();
            self.covariance = DMatrix::identity(n, n) * self.p0;
            event.covariance_reset = true;
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("RLS produced non-finite gains".into()));
        }
        Ok(event)
    }
}

/// Result of one [`RcacState::update`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct RcacOutput {
    /// Adaptive control contribution per channel.
    pub u: DVector<f64>,
    /// The gains were refit this step.
    pub updated: bool,
    pub covariance_reset: bool,
}

/// Per-loop adaptive controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct RcacState {
    channels: usize,
    structure: GainStructure,
    config: RcacConfig,
    theta0: DVector<f64>,
    rls: Rls,
    phi_history: VecDeque<DMatrix<f64>>,
    u_history: VecDeque<DVector<f64>>,
    integ: Vec<f64>,
    prev_z: Option<Vec<f64>>,
    steps: u64,
    last_regression: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl RcacState {
    pub fn new(channels: usize, structure: GainStructure, config: RcacConfig) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("channels", "must be at least 1"));
        }
        let n_gains = channels * structure.gains_per_channel();
        config.validate(n_gains)?;
        let theta0 = if config.theta0.is_empty() {
            DVector::zeros(n_gains)
        } else {
            DVector::from_column_slice(&config.theta0)
        };
        let rls = Rls::new(theta0.clone(), config.p0, config.forgetting)
            .with_max_trace(config.max_covariance_trace);
        let depth = config.filter_coeffs.len();
        Ok(RcacState {
            channels,
            structure,
            theta0,
            rls,
            phi_history: VecDeque::with_capacity(depth),
            u_history: VecDeque::with_capacity(depth),
            integ: vec![0.0; channels],
            prev_z: None,
            steps: 0,
            last_regression: None,
            config,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_gains(&self) -> usize {
        self.theta0.len()
    }

    pub fn config(&self) -> &RcacConfig {
        &self.config
    }

    pub fn theta(&self) -> &DVector<f64> {
        self.rls.theta()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        self.rls.covariance()
    }

    pub fn integrators(&self) -> &[f64] {
        &self.integ
    }

    /// Number of regressor rows currently buffered.
    pub fn history_len(&self) -> usize {
        self.phi_history.len()
    }

    /// The `(Phi_f, u_f - z)` pair used by the most recent gain refit.
    pub fn last_regression(&self) -> Option<&(DMatrix<f64>, DVector<f64>)> {
        self.last_regression.as_ref()
    }

    fn warmup_steps(&self) -> u64 {
        self.config.filter_coeffs.len().max(2) as u64
    }

    /// Advances integrator and difference state and returns `Phi(k)`.
    pub fn build_regressor(&mut self, z: &[f64], dt: f64) -> Result<DMatrix<f64>> {
        if z.len() != self.channels {
            return Err(Error::invalid(
                "z",
                format!("expected {} channels, got {}", self.channels, z.len()),
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        if let Some(index) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let g = self.structure.gains_per_channel();
        let clamp = self.config.integrator_clamp;
        let mut phi = DMatrix::zeros(self.channels, self.channels * g);
        for (i, &zi) in z.iter().enumerate() {
            let col = i * g;
            phi[(i, col)] = zi;
            if g >= 2 {
                self.integ[i] = (self.integ[i] + zi * dt).clamp(-clamp, clamp);
                phi[(i, col + 1)] = self.integ[i];
            }
            if g >= 3 {
                let prev = self.prev_z.as_ref().map_or(zi, |p| p[i]);
                phi[(i, col + 2)] = (zi - prev) / dt;
            }
        }
        self.prev_z = Some(z.to_vec());
        Ok(phi)
    }

    /// One control step: refit the gains on the retrospective cost and return
    /// the adaptive output for the current regressor.
    pub fn update(&mut self, z: &[f64], dt: f64) -> Result<RcacOutput> {
        let phi = self.build_regressor(z, dt)?;
        let mut updated = false;
        let mut covariance_reset = false;

        if self.config.adaptation_enabled && self.steps >= self.warmup_steps() {
            let n = self.n_gains();
            let mut phi_f = DMatrix::zeros(self.channels, n);
            let mut u_f = DVector::zeros(self.channels);
            // history front is the most recent sample, i.e. lag 1
            for ((coeff, past_phi), past_u) in self
                .config
                .filter_coeffs
                .iter()
                .zip(&self.phi_history)
                .zip(&self.u_history)
            {
                phi_f += past_phi * *coeff;
                u_f += past_u * *coeff;
            }
            let z_vec = DVector::from_column_slice(z);
            let target = u_f - z_vec;
            let event = self.rls.update(&phi_f, &target)?;
            covariance_reset = event.covariance_reset;
            updated = true;
            self.last_regression = Some((phi_f, target));
        }

        let u = &phi * self.rls.theta();
        let depth = self.config.filter_coeffs.len();
        self.phi_history.push_front(phi);
        self.u_history.push_front(u.clone());
        self.phi_history.truncate(depth);
        self.u_history.truncate(depth);
        self.steps += 1;

        Ok(RcacOutput {
            u,
            updated,
            covariance_reset,
        })
    }

    /// Returns the state to its freshly constructed condition.
    pub fn reset(&mut self) {
        self.rls = Rls::new(self.theta0.clone(), self.config.p0, self.config.forgetting)
            .with_max_trace(self.config.max_covariance_trace);
        self.phi_history.clear();
        self.u_history.clear();
        self.integ.iter_mut().for_each(|v| *v = 0.0);
        self.prev_z = None;
        self.steps = 0;
        self.last_regression = None;
    }
}
