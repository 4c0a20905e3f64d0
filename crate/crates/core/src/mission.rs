//! Mission planner: Hilbert-curve waypoints and a time-parameterized
//! setpoint generator that stops at every corner.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acceleration/deceleration time at each end of a leg, s.
pub const CORNER_RAMP_S: f64 = 0.5;
pub const MAX_HILBERT_ORDER: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetpointFrame {
    pub t: f64,
    pub position_sp: Vector3<f64>,
    pub velocity_sp: Vector3<f64>,
    pub azimuth_sp: f64,
    pub azimuth_rate_sp: f64,
}

/// Grid cell `(x, y)` of index `d` on a Hilbert curve over an `n x n` grid
/// (`n` a power of two).
pub fn hilbert_d2xy(n: u64, d: u64) -> (u64, u64) {
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = d;
    let mut s = 1u64;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x, y)
}

/// Vertices of the order-`order` Hilbert curve spread over a square of side
/// `side_length`, in curve order, starting at the origin corner.
///
/// `x` runs north and `y` east; `altitude` is height above the origin, so
/// the NED down coordinate is `-altitude`.
pub fn hilbert_waypoints(order: u32, side_length: f64, altitude: f64) -> Result<Vec<Vector3<f64>>> {
    if order == 0 {
        return Err(Error::invalid("order", "must be at least 1"));
    }
    if order > MAX_HILBERT_ORDER {
        return Err(Error::invalid(
            "order",
            format!("at most {MAX_HILBERT_ORDER} supported, got {order}"),
        ));
    }
    if !(side_length.is_finite() && side_length > 0.0) {
        return Err(Error::invalid("side_length", format!("must be > 0, got {side_length}")));
    }
    let n = 1u64 << order;
    let step = side_length / (n - 1) as f64;
    Ok((0..n * n)
        .map(|d| {
            let (x, y) = hilbert_d2xy(n, d);
            Vector3::new(x as f64 * step, y as f64 * step, -altitude)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
struct Leg {
    start: Vector3<f64>,
    direction: Vector3<f64>,
    length: f64,
    t_start: f64,
    duration: f64,
    /// Time spent accelerating (and decelerating).
    ramp: f64,
    peak_speed: f64,
}

impl Leg {
    /// Distance and speed along the leg at local time `tau`.
    fn progress(&self, tau: f64) -> (f64, f64) {
        let accel = self.peak_speed / self.ramp;
        if tau <= self.ramp {
            (0.5 * accel * tau * tau, accel * tau)
        } else if tau < self.duration - self.ramp {
            (0.5 * accel * self.ramp * self.ramp + self.peak_speed * (tau - self.ramp), self.peak_speed)
        } else {
            let rem = (self.duration - tau).max(0.0);
            (self.length - 0.5 * accel * rem * rem, accel * rem)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    waypoints: Vec<Vector3<f64>>,
    cruise_speed: f64,
    hold_time_s: f64,
    legs: Vec<Leg>,
}

impl MissionPlan {
    pub fn new(waypoints: Vec<Vector3<f64>>, cruise_speed: f64, hold_time_s: f64) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::invalid("waypoints", "need at least two"));
        }
        if waypoints.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("waypoints", "must be finite"));
        }
        if !(cruise_speed.is_finite() && cruise_speed > 0.0) {
            return Err(Error::invalid("cruise_speed", format!("must be > 0, got {cruise_speed}")));
        }
        if !(hold_time_s.is_finite() && hold_time_s >= 0.0) {
            return Err(Error::invalid("hold_time_s", format!("must be >= 0, got {hold_time_s}")));
        }
        let accel = cruise_speed / CORNER_RAMP_S;
        let mut t = hold_time_s;
        let mut legs = Vec::with_capacity(waypoints.len() - 1);
        for pair in waypoints.windows(2) {
            let delta = pair[1] - pair[0];
            let length = delta.norm();
            if length == 0.0 {
                continue;
            }
            let (duration, ramp, peak_speed) = if length >= cruise_speed * CORNER_RAMP_S {
                (length / cruise_speed + CORNER_RAMP_S, CORNER_RAMP_S, cruise_speed)
            } else {
                let half = (length / accel).sqrt();
                (2.0 * half, half, accel * half)
            };
            legs.push(Leg {
                start: pair[0],
                direction: delta / length,
                length,
                t_start: t,
                duration,
                ramp,
                peak_speed,
            });
            t += duration;
        }
        Ok(MissionPlan {
            waypoints,
            cruise_speed,
            hold_time_s,
            legs,
        })
    }

    pub fn waypoints(&self) -> &[Vector3<f64>] {
        &self.waypoints
    }

    pub fn cruise_speed(&self) -> f64 {
        self.cruise_speed
    }

    pub fn hold_time_s(&self) -> f64 {
        self.hold_time_s
    }

    pub fn path_length(&self) -> f64 {
        self.legs.iter().map(|l| l.length).sum()
    }

    /// Time at which the last waypoint is reached.
    pub fn arrival_time(&self) -> f64 {
        self.legs
            .last()
            .map_or(self.hold_time_s, |l| l.t_start + l.duration)
    }

    /// Arrival plus the final hold.
    pub fn total_duration(&self) -> f64 {
        self.arrival_time() + self.hold_time_s
    }

    pub fn setpoints_at(&self, t: f64) -> SetpointFrame {
        let hold = |p: Vector3<f64>| SetpointFrame {
            t,
            position_sp: p,
            velocity_sp: Vector3::zeros(),
            azimuth_sp: 0.0,
            azimuth_rate_sp: 0.0,
        };
        let first = self.waypoints[0];
        let last = *self.waypoints.last().expect("at least two waypoints");
        if self.legs.is_empty() || t <= self.hold_time_s {
            return hold(first);
        }
        if t >= self.arrival_time() {
            return hold(last);
        }
        // Legs are sorted by start time.
        let idx = self.legs.partition_point(|l| l.t_start <= t).saturating_sub(1);
        let leg = &self.legs[idx];
        let (dist, speed) = leg.progress(t - leg.t_start);
        SetpointFrame {
            t,
            position_sp: leg.start + leg.direction * dist,
            velocity_sp: leg.direction * speed,
            azimuth_sp: 0.0,
            azimuth_rate_sp: 0.0,
        }
    }

    pub fn write_waypoints_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut body = String::from("index,north,east,down\n");
        for (i, w) in self.waypoints.iter().enumerate() {
            body.push_str(&format!("{i},{:.17e},{:.17e},{:.17e}\n", w.x, w.y, w.z));
        }
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Mission section of the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub hilbert_order: u32,
    pub side_length: f64,
    /// Height above the start point, m.
    pub altitude: f64,
    pub cruise_speed: f64,
    pub hold_time_s: f64,
    /// Explicit NED waypoints; replaces the Hilbert curve when present.
    #[serde(default)]
    pub waypoints: Option<Vec<[f64; 3]>>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            hilbert_order: 2,
            side_length: 6.0,
            altitude: 2.0,
            cruise_speed: 1.0,
            hold_time_s: 5.0,
            waypoints: None,
        }
    }
}

impl MissionConfig {
    pub fn build(&self) -> Result<MissionPlan> {
        let waypoints = match &self.waypoints {
            Some(w) => w.iter().map(|p| Vector3::from(*p)).collect(),
            None => hilbert_waypoints(self.hilbert_order, self.side_length, self.altitude)?,
        };
        MissionPlan::new(waypoints, self.cruise_speed, self.hold_time_s)
    }
}
