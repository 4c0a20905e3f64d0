//! Uniform-rate flight log and its CSV form.
//!
//! Column order is fixed by [`LOG_SCHEMA_VERSION`]; readers look columns up
//! by header name, so files with reordered columns load identically.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const LOG_SCHEMA_VERSION: u32 = 1;

/// Bits of the per-row saturation mask.
pub mod sat {
    /// Horizontal thrust limited by the tilt bound.
    pub const TILT: u32 = 1 << 0;
    /// Collective thrust clipped.
    pub const THRUST: u32 = 1 << 1;
    /// Some body moment clipped.
    pub const MOMENT: u32 = 1 << 2;
    /// Some rotor speed clipped by the mixer.
    pub const ROTOR: u32 = 1 << 3;
    /// Velocity setpoint limited.
    pub const VELOCITY: u32 = 1 << 4;
    /// Thrust vector too small to define an attitude; previous setpoint held.
    pub const ATTITUDE_HOLD: u32 = 1 << 5;
    /// An RCAC covariance was reset.
    pub const COVARIANCE_RESET: u32 = 1 << 6;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogRow {
    pub t: f64,
    pub pos_sp: [f64; 3],
    pub pos: [f64; 3],
    pub vel_sp: [f64; 3],
    pub vel: [f64; 3],
    /// Measured attitude `(w, x, y, z)`.
    pub q: [f64; 4],
    pub q_sp: [f64; 4],
    pub rate_sp: [f64; 3],
    pub rate_meas: [f64; 3],
    pub z_w: [f64; 3],
    pub z_w_dz: [f64; 3],
    pub moment_sp: [f64; 3],
    pub thrust_sp: f64,
    /// Rate-loop gains `(P, I)` per axis: roll, pitch, yaw.
    pub theta_w: [f64; 6],
    pub theta_v: [f64; 9],
    pub theta_r: [f64; 3],
    pub theta_q: [f64; 3],
    pub sat_flags: u32,
}

const XYZ: [&str; 3] = ["x", "y", "z"];
const WXYZ: [&str; 4] = ["w", "x", "y", "z"];

fn push_group(out: &mut Vec<String>, base: &str, suffixes: &[&str]) {
    out.extend(suffixes.iter().map(|s| format!("{base}_{s}")));
}

fn push_indexed(out: &mut Vec<String>, base: &str, n: usize) {
    out.extend((0..n).map(|i| format!("{base}_{i}")));
}

/// Header row in schema order.
pub fn header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    push_group(&mut h, "pos_sp", &XYZ);
    push_group(&mut h, "pos", &XYZ);
    push_group(&mut h, "vel_sp", &XYZ);
    push_group(&mut h, "vel", &XYZ);
    push_group(&mut h, "q", &WXYZ);
    push_group(&mut h, "q_sp", &WXYZ);
    push_group(&mut h, "rate_sp", &XYZ);
    push_group(&mut h, "rate_meas", &XYZ);
    push_group(&mut h, "z_w", &XYZ);
    push_group(&mut h, "z_w_dz", &XYZ);
    push_group(&mut h, "moment_sp", &XYZ);
    h.push("thrust_sp".into());
    push_indexed(&mut h, "theta_w", 6);
    push_indexed(&mut h, "theta_v", 9);
    push_indexed(&mut h, "theta_r", 3);
    push_indexed(&mut h, "theta_q", 3);
    h.push("sat_flags".into());
    h
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl LogRow {
    /// Float fields in schema order (everything but `sat_flags`).
    fn floats(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(60);
        v.push(self.t);
        for g in [&self.pos_sp, &self.pos, &self.vel_sp, &self.vel] {
            v.extend_from_slice(g);
        }
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.q_sp);
        for g in [&self.rate_sp, &self.rate_meas, &self.z_w, &self.z_w_dz, &self.moment_sp] {
            v.extend_from_slice(g);
        }
        v.push(self.thrust_sp);
        v.extend_from_slice(&self.theta_w);
        v.extend_from_slice(&self.theta_v);
        v.extend_from_slice(&self.theta_r);
        v.extend_from_slice(&self.theta_q);
        v
    }

    fn from_floats(v: &[f64], sat_flags: u32) -> Self {
        let mut it = v.iter().copied();
        let mut take = |out: &mut [f64]| out.iter_mut().for_each(|o| *o = it.next().unwrap());
        let mut r = LogRow {
            sat_flags,
            ..LogRow::default()
        };
        let mut t = [0.0];
        take(&mut t);
        r.t = t[0];
        take(&mut r.pos_sp);
        take(&mut r.pos);
        take(&mut r.vel_sp);
        take(&mut r.vel);
        take(&mut r.q);
        take(&mut r.q_sp);
        take(&mut r.rate_sp);
        take(&mut r.rate_meas);
        take(&mut r.z_w);
        take(&mut r.z_w_dz);
        take(&mut r.moment_sp);
        let mut th = [0.0];
        take(&mut th);
        r.thrust_sp = th[0];
        take(&mut r.theta_w);
        take(&mut r.theta_v);
        take(&mut r.theta_r);
        take(&mut r.theta_q);
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightLog {
    dt: f64,
    rows: Vec<LogRow>,
}

impl FlightLog {
    pub fn new(dt: f64) -> Self {
        FlightLog {
            dt,
            rows: Vec::new(),
        }
    }

    /// Builds a log from rows, checking the uniform time grid.
    pub fn from_rows(dt: f64, rows: Vec<LogRow>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Log(format!("invalid sample period {dt}")));
        }
        let tol = 1e-6 * dt;
        for (k, pair) in rows.windows(2).enumerate() {
            let step = pair[1].t - pair[0].t;
            if !(step > 0.0) || (step - dt).abs() > tol {
                return Err(Error::Log(format!(
                    "non-uniform time grid between rows {k} and {}",
                    k + 1
                )));
            }
        }
        Ok(FlightLog { dt, rows })
    }

    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header())?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.floats().into_iter().map(fmt_f64).collect();
            rec.push(row.sat_flags.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a log written by [`FlightLog::write_csv`]. Columns are matched
    /// by name, in any order; the sample period is taken from the first two
    /// rows.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let position: HashMap<&str, usize> =
            headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let names = header();
        let mut index = Vec::with_capacity(names.len());
        for name in &names {
            let i = position
                .get(name.as_str())
                .ok_or_else(|| Error::Log(format!("missing column `{name}`")))?;
            index.push(*i);
        }
        let (float_idx, flag_idx) = index.split_at(index.len() - 1);
        let mut rows = Vec::new();
        let mut vals = vec![0.0; float_idx.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for (slot, &col) in vals.iter_mut().zip(float_idx) {
                let field = rec.get(col).unwrap_or("");
                *slot = field.trim().parse().map_err(|_| {
                    Error::Log(format!("row {}: bad number `{field}` in column {col}", line + 1))
                })?;
            }
            let flag_field = rec.get(flag_idx[0]).unwrap_or("");
            let flags = flag_field
                .trim()
                .parse()
                .map_err(|_| Error::Log(format!("row {}: bad sat_flags `{flag_field}`", line + 1)))?;
            rows.push(LogRow::from_floats(&vals, flags));
        }
        let dt = match rows.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => 1.0,
        };
        FlightLog::from_rows(dt, rows)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}
