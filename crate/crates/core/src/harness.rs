//! Closed-loop experiment runner and the five-way variant comparison.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autopilot::{AdaptiveFlags, Autopilot, ControlOutputs};
use crate::config::ScenarioConfig;
use crate::deadzone::{DeadzoneConfig, DeadzoneKind};
use crate::error::{Error, Result};
use crate::log::{fmt_f64, sat, FlightLog, LogRow};
use crate::metrics::{evaluate, MetricsReport};
use crate::mission::MissionPlan;
use crate::vehicle::{step_dynamics, Mixer, Sensors, VehicleState};

/// Position magnitude treated as divergence, m.
pub const DIVERGENCE_POSITION: f64 = 1.0e3;
/// Body rate magnitude treated as divergence, rad/s.
pub const DIVERGENCE_RATE: f64 = 200.0;

/// One autopilot variant of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fixed,
    None,
    N1,
    N2,
    N3,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Fixed, Variant::None, Variant::N1, Variant::N2, Variant::N3];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Fixed => "fixed",
            Variant::None => "none",
            Variant::N1 => "n1",
            Variant::N2 => "n2",
            Variant::N3 => "n3",
        }
    }

    pub fn deadzone_kind(self) -> Option<DeadzoneKind> {
        match self {
            Variant::Fixed => Option::None,
            Variant::None => Some(DeadzoneKind::None),
            Variant::N1 => Some(DeadzoneKind::N1),
            Variant::N2 => Some(DeadzoneKind::N2),
            Variant::N3 => Some(DeadzoneKind::N3),
        }
    }

    /// `cfg` switched to this variant. Adaptive variants keep the adaptive
    /// flags of `cfg` (all loops when none is set) and take the default
    /// shape parameters for their deadzone unless `cfg` already carries a
    /// deadzone of the same kind.
    pub fn apply(self, cfg: &ScenarioConfig) -> ScenarioConfig {
        let mut out = cfg.clone();
        match self.deadzone_kind() {
            Option::None => out.autopilot = cfg.autopilot.fixed_gain(),
            Some(kind) => {
                if !out.autopilot.adaptive.any() {
                    out.autopilot.adaptive = AdaptiveFlags::all();
                }
                if out.autopilot.deadzone.kind() != kind {
                    out.autopilot.deadzone = DeadzoneConfig::default_for(kind);
                }
            }
        }
        out
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }
}

/// Result of a closed-loop run. `error` is set when the run stopped early;
/// `log` then holds every row up to the failure.
#[derive(Debug)]
pub struct SimOutcome {
    pub log: FlightLog,
    pub error: Option<Error>,
}

fn quat_array(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn theta_array<const N: usize>(theta: &nalgebra::DVector<f64>) -> [f64; N] {
    let mut out = [0.0; N];
    out.copy_from_slice(theta.as_slice());
    out
}

/// Closed-loop simulation: mission, outer loop at the outer rate, inner loop
/// at the inner rate, mixer, dynamics, sensors. One row is logged per inner
/// step, before the dynamics advance.
pub struct Simulation {
    cfg: ScenarioConfig,
    plan: MissionPlan,
    autopilot: Autopilot,
    mixer: Mixer,
    sensors: Sensors,
    state: VehicleState,
    step: usize,
    divider: usize,
    dt: f64,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = cfg.mission.build()?;
        let start = plan.setpoints_at(0.0).position_sp;
        Ok(Simulation {
            autopilot: Autopilot::new(cfg.autopilot.clone(), cfg.vehicle.mass)?,
            mixer: Mixer::new(&cfg.vehicle)?,
            sensors: Sensors::new(cfg.noise.clone(), cfg.autopilot.inner_rate_hz)?,
            state: VehicleState::hovering(start, &cfg.vehicle),
            divider: cfg.autopilot.outer_divider(),
            dt: cfg.autopilot.inner_dt(),
            step: 0,
            plan,
            cfg: cfg.clone(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn autopilot(&self) -> &Autopilot {
        &self.autopilot
    }

    pub fn plan(&self) -> &MissionPlan {
        &self.plan
    }

    /// Advances one inner step and returns the logged row.
    pub fn advance(&mut self) -> Result<(LogRow, ControlOutputs)> {
        let t = self.time();
        let sp = self.plan.setpoints_at(t);
        let meas = self.sensors.sense(&self.state.body);
        let outer = (self.step % self.divider == 0).then_some(&sp);
        let out = self.autopilot.step(outer, &meas)?;
        let mix = self.mixer.mix(out.thrust_sp, &out.moment_sp);
        let mut flags = out.sat_flags;
        if mix.saturated {
            flags |= sat::ROTOR;
        }
        let b = &self.state.body;
        let ap = &self.autopilot;
        let row = LogRow {
            t,
            pos_sp: sp.position_sp.into(),
            pos: b.position.into(),
            vel_sp: out.velocity_sp.into(),
            vel: b.velocity.into(),
            q: quat_array(&b.attitude),
            q_sp: quat_array(&out.q_sp),
            rate_sp: out.rate_sp.into(),
            rate_meas: out.rate_meas.into(),
            z_w: out.z_omega.into(),
            z_w_dz: out.z_omega_dz.into(),
            moment_sp: out.moment_sp.into(),
            thrust_sp: out.thrust_sp,
            theta_w: theta_array(ap.rcac_rate().theta()),
            theta_v: theta_array(ap.rcac_velocity().theta()),
            theta_r: theta_array(ap.rcac_position().theta()),
            theta_q: theta_array(ap.rcac_attitude().theta()),
            sat_flags: flags,
        };
        let next = step_dynamics(&self.state, &mix.rotor_speeds, &self.cfg.vehicle, &self.mixer, self.dt)
            .map_err(|e| Error::Divergence {
                t,
                reason: e.to_string(),
            })?;
        if next.body.position.norm() > DIVERGENCE_POSITION {
            return Err(Error::Divergence {
                t,
                reason: "position left the flight volume".into(),
            });
        }
        if next.body.omega.norm() > DIVERGENCE_RATE {
            return Err(Error::Divergence {
                t,
                reason: "body rate unbounded".into(),
            });
        }
        self.state = next;
        self.step += 1;
        Ok((row, out))
    }
}

/// Runs the closed loop for `cfg.duration_s`, keeping the partial log on
/// failure.
pub fn simulate(cfg: &ScenarioConfig) -> SimOutcome {
    let mut sim = match Simulation::new(cfg) {
        Ok(s) => s,
        Err(e) => {
            return SimOutcome {
                log: FlightLog::new(cfg.autopilot.inner_dt()),
                error: Some(e),
            }
        }
    };
    let steps = (cfg.duration_s / sim.dt).round() as usize;
    let mut log = FlightLog::new(sim.dt);
    for _ in 0..steps {
        match sim.advance() {
            Ok((row, _)) => log.push(row),
            Err(e) => {
                let error = match e {
                    Error::NonFinite { .. } | Error::Numeric(_) => Error::Divergence {
                        t: sim.time(),
                        reason: e.to_string(),
                    },
                    other => other,
                };
                return SimOutcome { log, error: Some(error) };
            }
        }
    }
    SimOutcome { log, error: None }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(FlightLog, MetricsReport)> {
    let out = simulate(cfg);
    if let Some(e) = out.error {
        return Err(e);
    }
    let report = evaluate(&out.log, &cfg.metrics)?;
    Ok((out.log, report))
}

/// Structured report written next to each log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub deadzone: String,
    pub adaptive: AdaptiveFlags,
    pub duration_s: f64,
    pub simulated_s: f64,
    pub status: String,
    pub metrics: Option<MetricsReport>,
}

/// Runs `cfg` and writes its log, report and resolved config into `dir`.
/// On divergence the partial log and report are still written and the
/// divergence error is returned.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cfg.save(&dir.join("config.toml"))?;
    let out = simulate(cfg);
    out.log.save_csv(&dir.join(&cfg.output.log_file))?;
    let metrics = match &out.error {
        Some(_) => Option::None,
        None => Some(evaluate(&out.log, &cfg.metrics)?),
    };
    let report = RunReport {
        schema_version: cfg.log_schema_version,
        config_hash: cfg.hash()?,
        seed: cfg.noise.seed,
        deadzone: cfg.autopilot.deadzone.kind().as_str().into(),
        adaptive: cfg.autopilot.adaptive,
        duration_s: cfg.duration_s,
        simulated_s: out.log.len() as f64 * out.log.dt(),
        status: match &out.error {
            Some(e) => format!("failed: {e}"),
            None => "ok".into(),
        },
        metrics,
    };
    write_json(&dir.join(&cfg.output.report_file), &report)?;
    match out.error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub config_hash: String,
    /// `None` when the run succeeded.
    pub error: Option<String>,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, v: Variant) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn metrics(&self, v: Variant) -> Option<&MetricsReport> {
        self.row(v).and_then(|r| r.metrics.as_ref())
    }

    /// Table as CSV: one row per variant.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "variant",
            "status",
            "j_r",
            "j_omega",
            "band_power_ratio",
            "theta_max_norm",
            "oscillation_flag",
            "config_hash",
        ])?;
        for r in &self.rows {
            let status = r.error.clone().unwrap_or_else(|| "ok".into());
            let vals: [String; 5] = match &r.metrics {
                Some(m) => [
                    fmt_f64(m.j_r),
                    fmt_f64(m.j_omega),
                    fmt_f64(m.band_power_ratio),
                    fmt_f64(m.theta_max_norm),
                    m.oscillation_flag.to_string(),
                ],
                None => Default::default(),
            };
            let mut rec = vec![r.variant.to_string(), status];
            rec.extend(vals);
            rec.push(r.config_hash.clone());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Log(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Long-form bar-chart data: `metric,variant,value`.
    pub fn bar_chart_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "variant", "value"])?;
        for (name, get) in [
            ("j_r", (|m: &MetricsReport| m.j_r) as fn(&MetricsReport) -> f64),
            ("j_omega", |m| m.j_omega),
        ] {
            for r in &self.rows {
                if let Some(m) = &r.metrics {
                    w.write_record([name, r.variant.as_str(), &fmt_f64(get(m))])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Log(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Runs every variant on the same seed and mission, in parallel, and merges
/// the results in the order given. With `out_dir`, each variant writes into
/// its own subdirectory and the table and bar-chart data land in `out_dir`.
pub fn compare(base: &ScenarioConfig, variants: &[Variant], out_dir: Option<&Path>) -> Result<ComparisonTable> {
    if variants.len() < 2 {
        return Err(Error::config("variants", "need at least two variants"));
    }
    base.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let rows: Vec<ComparisonRow> = variants
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let cfg = v.apply(base);
            let config_hash = cfg.hash().unwrap_or_default();
            let result = match out_dir {
                Some(dir) => {
                    let sub: PathBuf = dir.join(format!("{:02}_{}", i, v.as_str()));
                    run_to_dir(&cfg, &sub).map(|r| r.metrics)
                }
                None => run_scenario(&cfg).map(|(_, m)| Some(m)),
            };
            match result {
                Ok(metrics) => ComparisonRow {
                    variant: *v,
                    config_hash,
                    error: Option::None,
                    metrics,
                },
                Err(e) => ComparisonRow {
                    variant: *v,
                    config_hash,
                    error: Some(e.to_string()),
                    metrics: Option::None,
                },
            }
        })
        .collect();
    let table = ComparisonTable {
        seed: base.noise.seed,
        rows,
    };
    if let Some(dir) = out_dir {
        let p = dir.join("comparison.csv");
        std::fs::write(&p, table.to_csv()?).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("bar_chart.csv");
        std::fs::write(&p, table.bar_chart_csv()?).map_err(|e| Error::io(&p, e))?;
        write_json(&dir.join("comparison.json"), &table)?;
    }
    Ok(table)
}

/// Hover start position of the configured mission.
pub fn start_position(cfg: &ScenarioConfig) -> Result<Vector3<f64>> {
    Ok(cfg.mission.build()?.setpoints_at(0.0).position_sp)
}
