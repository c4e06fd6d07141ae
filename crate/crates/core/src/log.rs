//! Column-oriented time-series log and its CSV form.
//!
//! Values are rounded to nine significant digits when recorded, so the
//! in-memory log and the CSV written from it hold exactly the same numbers.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::airframe::RotorSpeeds;
use crate::control::{ActuatorOutputs, Diagnostics, Setpoint, DIAGNOSTIC_CHANNELS};
use crate::dynamics::VehicleState;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("log has no header")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Rounds to nine significant digits.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub const STATE_CHANNELS: [&str; 20] = [
    "x",
    "y",
    "z",
    "vx",
    "vy",
    "vz",
    "roll",
    "pitch",
    "yaw",
    "p",
    "q",
    "r",
    "top_roll",
    "top_pitch",
    "top_roll_rate",
    "top_pitch_rate",
    "bottom_roll",
    "bottom_pitch",
    "bottom_roll_rate",
    "bottom_pitch_rate",
];

pub const SETPOINT_CHANNELS: [&str; 6] = [
    "ref_x",
    "ref_y",
    "ref_z",
    "ref_roll",
    "ref_pitch",
    "ref_yaw",
];
pub const OUTPUT_CHANNELS: [&str; 6] = ["u1", "u2", "u3", "u4", "u5", "u6"];
pub const SPEED_CHANNELS: [&str; 6] = ["w1", "w2", "w3", "w4", "w5", "w6"];

/// Header of a simulation log, in column order.
pub fn standard_header() -> Vec<String> {
    std::iter::once("time")
        .chain(STATE_CHANNELS)
        .chain(SETPOINT_CHANNELS)
        .chain(DIAGNOSTIC_CHANNELS)
        .chain(OUTPUT_CHANNELS)
        .chain(SPEED_CHANNELS)
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SimLog {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn standard() -> Self {
        Self::new(standard_header())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn push_row(&mut self, row: impl IntoIterator<Item = f64>) {
        let row: Vec<f64> = row.into_iter().map(quantize).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn record(
        &mut self,
        time: f64,
        state: &VehicleState,
        setpoint: &Setpoint,
        diagnostics: &Diagnostics,
        outputs: &ActuatorOutputs,
        speeds: &RotorSpeeds,
    ) {
        let s = state;
        let state_vals = [
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.body_attitude.roll,
            s.body_attitude.pitch,
            s.body_attitude.yaw,
            s.body_rates.x,
            s.body_rates.y,
            s.body_rates.z,
            s.top_tilt.x,
            s.top_tilt.y,
            s.top_tilt_rates.x,
            s.top_tilt_rates.y,
            s.bottom_tilt.x,
            s.bottom_tilt.y,
            s.bottom_tilt_rates.x,
            s.bottom_tilt_rates.y,
        ];
        let sp = [
            setpoint.position.x,
            setpoint.position.y,
            setpoint.position.z,
            setpoint.attitude.roll,
            setpoint.attitude.pitch,
            setpoint.attitude.yaw,
        ];
        self.push_row(
            std::iter::once(time)
                .chain(state_vals)
                .chain(sp)
                .chain(diagnostics.values())
                .chain(outputs.u)
                .chain(speeds.0),
        );
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                write!(line, "{v}").expect("writing to a String");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), LogError> {
        let file = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, LogError> {
        let mut lines = r.lines();
        let header = match lines.next() {
            Some(h) => h?,
            None => return Err(LogError::Empty),
        };
        let header: Vec<String> = header.trim().split(',').map(str::to_string).collect();
        if header.len() < 2 || header[0] != "time" {
            return Err(LogError::Malformed {
                line: 1,
                message: "header must start with `time`".into(),
            });
        }
        let mut log = SimLog::new(header);
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| LogError::Malformed {
                line: n + 2,
                message: e.to_string(),
            })?;
            if row.len() != log.header.len() {
                return Err(LogError::Malformed {
                    line: n + 2,
                    message: format!("expected {} fields, found {}", log.header.len(), row.len()),
                });
            }
            log.rows.push(row);
        }
        Ok(log)
    }

    pub fn load_csv(path: &Path) -> Result<Self, LogError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(io::BufReader::new(file))
    }
}
