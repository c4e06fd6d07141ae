//! Minimal SVG line plots of a simulation log.

use std::fmt::Write as _;

use crate::log::SimLog;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PlotError {
    #[error("log has no rows")]
    EmptyLog,
    #[error("log is missing column `{0}`")]
    MissingColumn(String),
}

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in series.iter().flat_map(|s| &s.points) {
        b = (b.0.min(*x), b.1.max(*x), b.2.min(*y), b.3.max(*y));
    }
    let pad = |lo: f64, hi: f64| {
        let span = hi - lo;
        let p = if span > 1e-12 { 0.05 * span } else { 0.5 };
        (lo - p, hi + p)
    };
    let (x0, x1) = pad(b.0, b.1);
    let (y0, y1) = pad(b.2, b.3);
    (x0, x1, y0, y1)
}

/// Renders series as polylines on shared axes.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    equal_aspect: bool,
) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = bounds(series);
    let (pw, ph) = (W - 2.0 * MARGIN, H - 2.0 * MARGIN);
    if equal_aspect {
        let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        (x0, x1) = (cx - 0.5 * scale * pw, cx + 0.5 * scale * pw);
        (y0, y1) = (cy - 0.5 * scale * ph, cy + 0.5 * scale * ph);
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            H - MARGIN + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    for (i, ser) in series.iter().enumerate() {
        let mut pts = String::new();
        for (x, y) in &ser.points {
            let _ = write!(pts, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let dash = if ser.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            ser.color,
            pts.trim_end()
        );
        let ly = MARGIN + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            W - MARGIN - 110.0,
            W - MARGIN - 86.0,
            ser.color,
            W - MARGIN - 80.0,
            ly + 4.0,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let t = format!("{v:.2}");
    if t == "-0.00" {
        "0.00".into()
    } else {
        t
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn col(log: &SimLog, name: &str) -> Result<Vec<f64>, PlotError> {
    log.column(name)
        .ok_or_else(|| PlotError::MissingColumn(name.into()))
}

fn zip(a: &[f64], b: &[f64], scale: f64) -> Vec<(f64, f64)> {
    a.iter().zip(b).map(|(x, y)| (*x, y * scale)).collect()
}

/// Horizontal path of the vehicle over its reference.
pub fn trajectory_svg(log: &SimLog) -> Result<String, PlotError> {
    if log.is_empty() {
        return Err(PlotError::EmptyLog);
    }
    let (x, y, rx, ry) = (
        col(log, "x")?,
        col(log, "y")?,
        col(log, "ref_x")?,
        col(log, "ref_y")?,
    );
    let series = [
        Series {
            label: "reference",
            color: "#888888",
            dashed: true,
            points: zip(&rx, &ry, 1.0),
        },
        Series {
            label: "vehicle",
            color: "#1f77b4",
            dashed: false,
            points: zip(&x, &y, 1.0),
        },
    ];
    Ok(line_plot("Trajectory", "x [m]", "y [m]", &series, true))
}

/// Body roll, pitch and yaw in degrees against time.
pub fn attitude_svg(log: &SimLog) -> Result<String, PlotError> {
    if log.is_empty() {
        return Err(PlotError::EmptyLog);
    }
    let t = col(log, "time")?;
    let deg = 180.0 / std::f64::consts::PI;
    let series = [
        Series {
            label: "roll",
            color: "#d62728",
            dashed: false,
            points: zip(&t, &col(log, "roll")?, deg),
        },
        Series {
            label: "pitch",
            color: "#2ca02c",
            dashed: false,
            points: zip(&t, &col(log, "pitch")?, deg),
        },
        Series {
            label: "yaw",
            color: "#1f77b4",
            dashed: false,
            points: zip(&t, &col(log, "yaw")?, deg),
        },
    ];
    Ok(line_plot(
        "Attitude",
        "time [s]",
        "angle [deg]",
        &series,
        false,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::standard_header;

    #[test]
    fn empty_log_is_rejected() {
        let log = SimLog::standard();
        assert_eq!(trajectory_svg(&log), Err(PlotError::EmptyLog));
        assert_eq!(attitude_svg(&log), Err(PlotError::EmptyLog));
    }

    #[test]
    fn plots_contain_one_polyline_per_series() {
        let mut log = SimLog::standard();
        let n = standard_header().len();
        for i in 0..5 {
            log.push_row((0..n).map(|c| (i * c) as f64 * 0.01));
        }
        let svg = trajectory_svg(&log).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(attitude_svg(&log).unwrap().matches("<polyline").count(), 3);
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let series = [Series {
            label: "c",
            color: "black",
            dashed: false,
            points: vec![(1.0, 2.0), (1.0, 2.0)],
        }];
        let svg = line_plot("t", "x", "y", &series, true);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
