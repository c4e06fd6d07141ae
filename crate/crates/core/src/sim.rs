//! Scenario definition, reference trajectories, closed-loop execution and
//! tracking metrics.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::airframe::{AirframeConfig, AirframeJson, RotorSpeeds};
use crate::config::{apply_override, ConfigError, Violations};
use crate::control::{
    controller_tick, outputs_to_speeds, ActuatorOutputs, ControllerConfig, ControllerMemory,
    Diagnostics, ResolvedController, Setpoint,
};
use crate::dynamics::{step, DynamicsError, Vec2, VehicleState, MAX_STEP};
use crate::geometry::{wrap_angle, EulerAngles, Vec3};
use crate::log::SimLog;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("divergence at t = {time:.3} s: {reason}")]
    DivergenceDetected {
        time: f64,
        reason: String,
        partial: Box<SimLog>,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no log records at or after the metric window start")]
    EmptyWindow,
    #[error("log is missing column `{0}`")]
    MissingColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
    Roll,
    Pitch,
    Yaw,
}

impl Axis {
    pub fn is_translational(self) -> bool {
        matches!(self, Axis::X | Axis::Y | Axis::Z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Time from which this waypoint is held, s.
    pub t: f64,
    pub position: [f64; 3],
    #[serde(default)]
    pub attitude_deg: [f64; 3],
}

fn default_phase() -> f64 {
    180.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Hold a pose; defaults to the initial position, zero attitude.
    Hover {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<[f64; 3]>,
        #[serde(default)]
        yaw_deg: f64,
    },
    /// Horizontal circle `center + radius·(cos, sin)(2πt/period + phase)`.
    Circle {
        center: [f64; 3],
        radius: f64,
        period: f64,
        /// Overrides `center[2]` when given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        altitude: Option<f64>,
        #[serde(default = "default_phase")]
        phase_deg: f64,
    },
    SetpointSequence {
        points: Vec<Waypoint>,
    },
    /// Step of `magnitude` (m for x/y/z, degrees for roll/pitch/yaw) on one
    /// axis at time `at`, from a hover at the initial position.
    StepTest {
        axis: Axis,
        magnitude: f64,
        #[serde(default)]
        at: f64,
    },
}

/// Circle reference: position on the circle, zero attitude, analytic
/// velocity and acceleration feedforward.
pub fn circle_reference(t: f64, center: &Vec3, radius: f64, period: f64, phase: f64) -> Setpoint {
    let w = 2.0 * PI / period;
    let (s, c) = (w * t + phase).sin_cos();
    Setpoint {
        position: center + Vec3::new(radius * c, radius * s, 0.0),
        attitude: EulerAngles::ZERO,
        velocity_ff: Vec3::new(-radius * w * s, radius * w * c, 0.0),
        acceleration_ff: Vec3::new(-radius * w * w * c, -radius * w * w * s, 0.0),
    }
}

impl TrajectorySpec {
    pub fn setpoint(&self, t: f64, initial_position: &Vec3) -> Setpoint {
        match self {
            TrajectorySpec::Hover { position, yaw_deg } => Setpoint::hold(
                position.map(Vec3::from).unwrap_or(*initial_position),
                EulerAngles::new(0.0, 0.0, yaw_deg.to_radians()),
            ),
            TrajectorySpec::Circle {
                center,
                radius,
                period,
                altitude,
                phase_deg,
            } => {
                let mut c = Vec3::from(*center);
                if let Some(a) = altitude {
                    c.z = *a;
                }
                circle_reference(t, &c, *radius, *period, phase_deg.to_radians())
            }
            TrajectorySpec::SetpointSequence { points } => {
                let current = points.iter().rev().find(|p| p.t <= t).or(points.first());
                match current {
                    Some(p) => Setpoint::hold(
                        Vec3::from(p.position),
                        EulerAngles::from_degrees(
                            p.attitude_deg[0],
                            p.attitude_deg[1],
                            p.attitude_deg[2],
                        ),
                    ),
                    None => Setpoint::hold(*initial_position, EulerAngles::ZERO),
                }
            }
            TrajectorySpec::StepTest {
                axis,
                magnitude,
                at,
            } => {
                let mut sp = Setpoint::hold(*initial_position, EulerAngles::ZERO);
                if t >= *at {
                    let m = *magnitude;
                    match axis {
                        Axis::X => sp.position.x += m,
                        Axis::Y => sp.position.y += m,
                        Axis::Z => sp.position.z += m,
                        Axis::Roll => sp.attitude.roll = m.to_radians(),
                        Axis::Pitch => sp.attitude.pitch = m.to_radians(),
                        Axis::Yaw => sp.attitude.yaw = wrap_angle(m.to_radians()),
                    }
                }
                sp
            }
        }
    }

    fn violations(&self, v: &mut Violations) {
        match self {
            TrajectorySpec::Hover { position, yaw_deg } => {
                for x in position.iter().flatten() {
                    v.finite("trajectory.position", *x);
                }
                v.finite("trajectory.yaw_deg", *yaw_deg);
            }
            TrajectorySpec::Circle {
                center,
                radius,
                period,
                altitude,
                phase_deg,
            } => {
                for x in center {
                    v.finite("trajectory.center", *x);
                }
                v.positive("trajectory.radius", *radius);
                v.positive("trajectory.period", *period);
                if let Some(a) = altitude {
                    v.finite("trajectory.altitude", *a);
                }
                v.finite("trajectory.phase_deg", *phase_deg);
            }
            TrajectorySpec::SetpointSequence { points } => {
                v.check(!points.is_empty(), || {
                    "trajectory.points must not be empty".into()
                });
                for (i, p) in points.iter().enumerate() {
                    v.non_negative(&format!("trajectory.points[{i}].t"), p.t);
                    for x in p.position.iter().chain(&p.attitude_deg) {
                        v.finite(&format!("trajectory.points[{i}]"), *x);
                    }
                    v.check(p.attitude_deg[0].abs() <= 20.0 && p.attitude_deg[1].abs() <= 20.0, || {
                        format!("trajectory.points[{i}].attitude_deg roll/pitch must be within ±20°")
                    });
                }
            }
            TrajectorySpec::StepTest {
                axis,
                magnitude,
                at,
            } => {
                v.finite("trajectory.magnitude", *magnitude);
                v.non_negative("trajectory.at", *at);
                if matches!(axis, Axis::Roll | Axis::Pitch) {
                    v.check(magnitude.abs() <= 20.0, || {
                        format!(
                            "trajectory.magnitude {magnitude}° exceeds the ±20° attitude envelope"
                        )
                    });
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub attitude_deg: [f64; 3],
    pub body_rates: [f64; 3],
}

impl InitialState {
    pub fn to_state(&self) -> VehicleState {
        let a = self.attitude_deg;
        VehicleState {
            position: Vec3::from(self.position),
            velocity: Vec3::from(self.velocity),
            body_attitude: EulerAngles::from_degrees(a[0], a[1], a[2]),
            body_rates: Vec3::from(self.body_rates),
            ..Default::default()
        }
    }
}

/// Standard deviations of additive Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub position: f64,
    pub velocity: f64,
    pub attitude: f64,
    pub body_rates: f64,
    pub frame_tilt: f64,
    pub frame_rates: f64,
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        *self == NoiseConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Start of the metric window, s. Defaults to half the duration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_start: Option<f64>,
    /// Position error below which the vehicle counts as settled, m.
    pub settling_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window_start: None,
            settling_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DivergenceConfig {
    pub max_position_error: f64,
    /// Touchdown faster than this counts as a crash, m/s.
    pub max_impact_speed: f64,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            max_position_error: 10.0,
            max_impact_speed: 2.0,
        }
    }
}

/// Pass/fail bounds carried by a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptanceBounds {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_position_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_attitude_max_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_attitude_excursion_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_horizontal_excursion: Option<f64>,
    /// The stepped axis must be within `settle_tolerance_deg` by this time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle_within: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle_tolerance_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_error_max_deg: Option<f64>,
}

fn default_decimation() -> usize {
    10
}

fn default_true() -> bool {
    true
}

/// On-disk scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub airframe: AirframeJson,
    #[serde(default)]
    pub controller: ControllerConfig,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub initial_state: InitialState,
    pub duration: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub divergence: DivergenceConfig,
    #[serde(default = "default_true")]
    pub ground_contact: bool,
    #[serde(default = "default_true")]
    pub actuators_enabled: bool,
    #[serde(default)]
    pub measurement_noise: NoiseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<AcceptanceBounds>,
}

/// A validated, fully-resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub airframe: AirframeConfig,
    pub controller: ControllerConfig,
    pub trajectory: TrajectorySpec,
    pub initial_state: InitialState,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub decimation: usize,
    pub metrics: MetricsConfig,
    pub divergence: DivergenceConfig,
    pub ground_contact: bool,
    pub actuators_enabled: bool,
    pub noise: NoiseConfig,
    pub acceptance: Option<AcceptanceBounds>,
}

impl ScenarioConfig {
    /// A hover at `position` with default airframe and gains.
    pub fn hover(position: Vec3, duration: f64) -> Self {
        Self {
            name: "hover".into(),
            airframe: AirframeConfig::default(),
            controller: ControllerConfig::default(),
            trajectory: TrajectorySpec::Hover {
                position: None,
                yaw_deg: 0.0,
            },
            initial_state: InitialState {
                position: position.into(),
                ..Default::default()
            },
            duration,
            dt: 1e-3,
            seed: 0,
            decimation: default_decimation(),
            metrics: MetricsConfig::default(),
            divergence: DivergenceConfig::default(),
            ground_contact: true,
            actuators_enabled: true,
            noise: NoiseConfig::default(),
            acceptance: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        Self::load_value(serde_json::from_str(text)?, &[])
    }

    /// Parses a scenario document, applying `key=value` overrides first.
    pub fn load_value(mut doc: Value, overrides: &[String]) -> Result<Self, ConfigError> {
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let file: ScenarioFile =
            serde_json::from_value(doc).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)?;
        let doc: Value = serde_json::from_str(&text).map_err(ConfigError::from)?;
        Ok(Self::load_value(doc, overrides)?)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ConfigError> {
        let mut v = Violations::new();
        let airframe = match file.airframe.into_config() {
            Ok(a) => Some(a),
            Err(e) => {
                v.extend_prefixed("airframe", e.violations());
                None
            }
        };
        v.extend_prefixed("controller", file.controller.violations(airframe.as_ref()));
        file.trajectory.violations(&mut v);
        for x in file
            .initial_state
            .position
            .iter()
            .chain(&file.initial_state.velocity)
            .chain(&file.initial_state.attitude_deg)
            .chain(&file.initial_state.body_rates)
        {
            v.finite("initial_state", *x);
        }
        v.check(file.initial_state.attitude_deg[1].abs() < 89.0, || {
            "initial_state.attitude_deg pitch must stay clear of ±90°".into()
        });
        v.positive("duration", file.duration);
        v.check(file.dt > 0.0 && file.dt <= MAX_STEP, || {
            format!("dt must be in (0, {MAX_STEP}] (got {})", file.dt)
        });
        v.check(file.decimation >= 1, || {
            "decimation must be at least 1".into()
        });
        if let Some(w) = file.metrics.window_start {
            v.non_negative("metrics.window_start", w);
            v.check(w < file.duration, || {
                format!("metrics.window_start {w} must be before the end of the run")
            });
        }
        v.positive(
            "metrics.settling_threshold",
            file.metrics.settling_threshold,
        );
        v.positive(
            "divergence.max_position_error",
            file.divergence.max_position_error,
        );
        v.positive(
            "divergence.max_impact_speed",
            file.divergence.max_impact_speed,
        );
        let n = file.measurement_noise;
        for (name, s) in [
            ("position", n.position),
            ("velocity", n.velocity),
            ("attitude", n.attitude),
            ("body_rates", n.body_rates),
            ("frame_tilt", n.frame_tilt),
            ("frame_rates", n.frame_rates),
        ] {
            v.non_negative(&format!("measurement_noise.{name}"), s);
        }
        if file.dt > 0.0 && file.controller.rate_inner_hz > 0.0 {
            let ticks = 1.0 / (file.controller.rate_inner_hz * file.dt);
            v.check(ticks.round() >= 1.0, || {
                format!(
                    "controller.rate_inner_hz {} is faster than the physics rate {}",
                    file.controller.rate_inner_hz,
                    1.0 / file.dt
                )
            });
        }
        v.into_result()?;

        Ok(Self {
            name: file.name,
            airframe: airframe.expect("validated"),
            controller: file.controller,
            trajectory: file.trajectory,
            initial_state: file.initial_state,
            duration: file.duration,
            dt: file.dt,
            seed: file.seed,
            decimation: file.decimation,
            metrics: file.metrics,
            divergence: file.divergence,
            ground_contact: file.ground_contact,
            actuators_enabled: file.actuators_enabled,
            noise: file.measurement_noise,
            acceptance: file.acceptance,
        })
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            name: self.name.clone(),
            airframe: self.airframe.to_json(),
            controller: self.controller.clone(),
            trajectory: self.trajectory.clone(),
            initial_state: self.initial_state.clone(),
            duration: self.duration,
            dt: self.dt,
            seed: self.seed,
            decimation: self.decimation,
            metrics: self.metrics,
            divergence: self.divergence,
            ground_contact: self.ground_contact,
            actuators_enabled: self.actuators_enabled,
            measurement_noise: self.noise,
            acceptance: self.acceptance,
        }
    }

    pub fn physics_ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    /// Physics ticks between controller updates.
    pub fn controller_period_ticks(&self) -> u64 {
        (1.0 / (self.controller.rate_inner_hz * self.dt))
            .round()
            .max(1.0) as u64
    }

    pub fn window_start(&self) -> f64 {
        self.metrics.window_start.unwrap_or(0.5 * self.duration)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.airframe.warnings()
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub rms_position_error: f64,
    pub max_position_error: f64,
    pub rms_attitude_error: f64,
    pub max_attitude_error: f64,
    /// First time after which the position error stays under the threshold;
    /// `None` if it never settles.
    pub settling_time: Option<f64>,
    pub saturation_fraction: f64,
    pub window_start: f64,
    pub samples: usize,
}

fn columns(log: &SimLog, names: &[&str]) -> Result<Vec<usize>, MetricsError> {
    names
        .iter()
        .map(|n| {
            log.column_index(n)
                .ok_or_else(|| MetricsError::MissingColumn((*n).into()))
        })
        .collect()
}

/// Tracking metrics over the records at or after `window_start`. Settling
/// time is measured over the whole log.
pub fn compute_metrics(
    log: &SimLog,
    window_start: f64,
    settling_threshold: f64,
) -> Result<TrackingMetrics, MetricsError> {
    let idx = columns(
        log,
        &[
            "time",
            "x",
            "y",
            "z",
            "ref_x",
            "ref_y",
            "ref_z",
            "roll",
            "pitch",
            "yaw",
            "ref_roll",
            "ref_pitch",
            "ref_yaw",
        ],
    )?;
    let sat = log.column_index("saturated");

    let pos_err = |r: &[f64]| {
        let d = Vec3::new(
            r[idx[1]] - r[idx[4]],
            r[idx[2]] - r[idx[5]],
            r[idx[3]] - r[idx[6]],
        );
        d.norm()
    };
    let att_err = |r: &[f64]| {
        let actual = EulerAngles::new(r[idx[7]], r[idx[8]], r[idx[9]]);
        let target = EulerAngles::new(r[idx[10]], r[idx[11]], r[idx[12]]);
        actual.error_to(&target).norm()
    };

    let mut n = 0usize;
    let (mut sp, mut mp, mut sa, mut ma, mut ns) = (0.0, 0.0f64, 0.0, 0.0f64, 0usize);
    for r in log.rows.iter().filter(|r| r[idx[0]] >= window_start) {
        let ep = pos_err(r);
        let ea = att_err(r);
        sp += ep * ep;
        mp = mp.max(ep);
        sa += ea * ea;
        ma = ma.max(ea);
        if sat.is_some_and(|i| r[i] != 0.0) {
            ns += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::EmptyWindow);
    }

    let settling_time = match log
        .rows
        .iter()
        .rposition(|r| pos_err(r) >= settling_threshold)
    {
        None => log.rows.first().map(|r| r[idx[0]]),
        Some(last) if last + 1 < log.rows.len() => Some(log.rows[last + 1][idx[0]]),
        Some(_) => None,
    };

    Ok(TrackingMetrics {
        rms_position_error: (sp / n as f64).sqrt(),
        max_position_error: mp,
        rms_attitude_error: (sa / n as f64).sqrt(),
        max_attitude_error: ma,
        settling_time,
        saturation_fraction: ns as f64 / n as f64,
        window_start,
        samples: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: SimLog,
    pub metrics: TrackingMetrics,
}

struct Sensor {
    rng: Option<ChaCha8Rng>,
    noise: NoiseConfig,
}

impl Sensor {
    fn new(noise: NoiseConfig, seed: u64) -> Self {
        let rng = (!noise.is_zero()).then(|| ChaCha8Rng::seed_from_u64(seed));
        Self { rng, noise }
    }

    fn measure(&mut self, truth: &VehicleState) -> VehicleState {
        let Some(rng) = self.rng.as_mut() else {
            return *truth;
        };
        let n = self.noise;
        let mut draw3 = |sigma: f64| -> Vec3 {
            if sigma == 0.0 {
                return Vec3::zeros();
            }
            let d = Normal::new(0.0, sigma).expect("validated sigma");
            Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng))
        };
        let mut m = *truth;
        m.position += draw3(n.position);
        m.velocity += draw3(n.velocity);
        m.body_attitude = EulerAngles::from_vec(&(m.body_attitude.to_vec() + draw3(n.attitude)));
        m.body_rates += draw3(n.body_rates);
        let t = draw3(n.frame_tilt);
        let b = draw3(n.frame_tilt);
        m.top_tilt += Vec2::new(t.x, t.y);
        m.bottom_tilt += Vec2::new(b.x, b.y);
        let t = draw3(n.frame_rates);
        let b = draw3(n.frame_rates);
        m.top_tilt_rates += Vec2::new(t.x, t.y);
        m.bottom_tilt_rates += Vec2::new(b.x, b.y);
        m
    }
}

fn diverged(time: f64, reason: impl Into<String>, log: SimLog) -> SimError {
    SimError::DivergenceDetected {
        time,
        reason: reason.into(),
        partial: Box::new(log),
    }
}

/// Runs a scenario to completion and computes its metrics over the
/// configured window.
pub fn run_scenario(scenario: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let ctrl = ResolvedController::new(&scenario.controller, &scenario.airframe);
    let airframe = &scenario.airframe;
    let dt = scenario.dt;
    let period = scenario.controller_period_ticks();
    let ctrl_dt = period as f64 * dt;
    let initial = scenario.initial_state.to_state();
    let origin = initial.position;

    let mut state = initial;
    let mut memory = ControllerMemory::default();
    let mut sensor = Sensor::new(scenario.noise, scenario.seed);
    let mut log = SimLog::standard();
    let mut outputs = ActuatorOutputs::hover(ctrl.allocation.u_hover);
    let mut diagnostics = Diagnostics::default();

    for tick in 0..scenario.physics_ticks() {
        let t = tick as f64 * dt;
        let setpoint = scenario.trajectory.setpoint(t, &origin);

        if scenario.actuators_enabled {
            if tick % period == 0 {
                let measured = sensor.measure(&state);
                let out = controller_tick(&ctrl, &setpoint, &measured, &mut memory, ctrl_dt);
                outputs = out.outputs;
                diagnostics = out.diagnostics;
            }
        } else {
            outputs = ActuatorOutputs::default();
        }
        let speeds = if scenario.actuators_enabled {
            outputs_to_speeds(&outputs, airframe)
        } else {
            RotorSpeeds::default()
        };

        if tick % scenario.decimation as u64 == 0 {
            log.record(t, &state, &setpoint, &diagnostics, &outputs, &speeds);
        }

        let mut next = match step(&state, &speeds, dt, airframe) {
            Ok(s) => s,
            Err(DynamicsError::NonFiniteState) => {
                return Err(diverged(t + dt, "state became non-finite", log))
            }
            Err(e) => return Err(diverged(t + dt, e.to_string(), log)),
        };
        if scenario.ground_contact && next.position.z < 0.0 {
            if -next.velocity.z > scenario.divergence.max_impact_speed {
                return Err(diverged(
                    t + dt,
                    format!("ground impact at {:.2} m/s", -next.velocity.z),
                    log,
                ));
            }
            next.position.z = 0.0;
            next.velocity.z = next.velocity.z.max(0.0);
        }
        let err = (next.position - scenario.trajectory.setpoint(t + dt, &origin).position).norm();
        if err > scenario.divergence.max_position_error {
            return Err(diverged(t + dt, format!("position error {err:.2} m"), log));
        }
        state = next;
    }

    let metrics = compute_metrics(
        &log,
        scenario.window_start(),
        scenario.metrics.settling_threshold,
    )?;
    Ok(RunOutput { log, metrics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

fn bound(name: &str, value: f64, limit: f64) -> BoundCheck {
    BoundCheck {
        name: name.into(),
        value,
        limit,
        passed: value < limit,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest horizontal distance from `origin` over the log.
pub fn max_horizontal_excursion(log: &SimLog, origin: &Vec3) -> f64 {
    let (x, y) = (
        log.column("x").unwrap_or_default(),
        log.column("y").unwrap_or_default(),
    );
    x.iter()
        .zip(&y)
        .map(|(x, y)| (x - origin.x).hypot(y - origin.y))
        .fold(0.0, f64::max)
}

/// Largest |roll| or |pitch| over the log, rad.
pub fn max_tilt_excursion(log: &SimLog) -> f64 {
    max_abs(&log.column("roll").unwrap_or_default())
        .max(max_abs(&log.column("pitch").unwrap_or_default()))
}

/// Tracking error of the stepped axis at every row (m or rad).
fn step_axis_error(log: &SimLog, axis: Axis) -> Vec<f64> {
    let (a, r) = match axis {
        Axis::X => ("x", "ref_x"),
        Axis::Y => ("y", "ref_y"),
        Axis::Z => ("z", "ref_z"),
        Axis::Roll => ("roll", "ref_roll"),
        Axis::Pitch => ("pitch", "ref_pitch"),
        Axis::Yaw => ("yaw", "ref_yaw"),
    };
    let (a, r) = (
        log.column(a).unwrap_or_default(),
        log.column(r).unwrap_or_default(),
    );
    a.iter()
        .zip(&r)
        .map(|(a, r)| {
            if axis.is_translational() {
                r - a
            } else {
                wrap_angle(r - a)
            }
        })
        .collect()
}

impl AcceptanceBounds {
    /// Evaluates every bound that is set. Degrees in, degrees reported.
    pub fn evaluate(&self, scenario: &ScenarioConfig, run: &RunOutput) -> Vec<BoundCheck> {
        let log = &run.log;
        let mut out = Vec::new();
        if let Some(l) = self.rms_position_max {
            out.push(bound(
                "rms_position_error",
                run.metrics.rms_position_error,
                l,
            ));
        }
        if let Some(l) = self.rms_attitude_max_deg {
            out.push(bound(
                "rms_attitude_error_deg",
                run.metrics.rms_attitude_error.to_degrees(),
                l,
            ));
        }
        if let Some(l) = self.max_attitude_excursion_deg {
            out.push(bound(
                "max_attitude_excursion_deg",
                max_tilt_excursion(log).to_degrees(),
                l,
            ));
        }
        if let Some(l) = self.max_horizontal_excursion {
            let origin = Vec3::from(scenario.initial_state.position);
            out.push(bound(
                "max_horizontal_excursion",
                max_horizontal_excursion(log, &origin),
                l,
            ));
        }
        if let TrajectorySpec::StepTest { axis, at, .. } = scenario.trajectory {
            let unit = |e: f64| {
                if axis.is_translational() {
                    e
                } else {
                    e.to_degrees()
                }
            };
            let err = step_axis_error(log, axis);
            let time = log.column("time").unwrap_or_default();
            if let (Some(within), Some(tol)) = (self.settle_within, self.settle_tolerance_deg) {
                let settled_at = match err.iter().rposition(|e| unit(e.abs()) > tol) {
                    None => at,
                    Some(i) if i + 1 < time.len() => time[i + 1],
                    Some(_) => f64::INFINITY,
                };
                out.push(bound("settling_time", settled_at - at, within));
            }
            if let Some(l) = self.final_error_max_deg {
                let last = err.last().copied().unwrap_or(f64::NAN);
                out.push(bound("final_error_deg", unit(last.abs()), l));
            }
        }
        out
    }
}

/// Sidecar describing a run: what was simulated and how it ended.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub name: String,
    pub version: String,
    pub status: RunStatus,
    pub physics_ticks: u64,
    pub logged_rows: usize,
    pub columns: Vec<String>,
    pub scenario: ScenarioFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { time: f64, reason: String },
}

impl RunMeta {
    pub fn new(scenario: &ScenarioConfig, log: &SimLog, status: RunStatus) -> Self {
        Self {
            name: scenario.name.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            status,
            physics_ticks: scenario.physics_ticks(),
            logged_rows: log.len(),
            columns: log.header.clone(),
            scenario: scenario.to_file(),
        }
    }
}

/// Writes `log.csv`, `meta.json` and, when present, `metrics.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    log: &SimLog,
    metrics: Option<&TrackingMetrics>,
    meta: &RunMeta,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    log.save_csv(&dir.join("log.csv")).map_err(|e| match e {
        crate::log::LogError::Io(io) => io,
        other => std::io::Error::other(other.to_string()),
    })?;
    std::fs::write(dir.join("meta.json"), pretty_json(meta))?;
    if let Some(m) = metrics {
        std::fs::write(dir.join("metrics.json"), pretty_json(m))?;
    }
    Ok(())
}

fn pretty_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

/// Step response on one axis and the largest excursion it causes on the
/// complementary axes.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingResult {
    pub step: TrackingMetrics,
    /// For a translational step: max |roll| or |pitch| (rad). For a
    /// rotational step: max horizontal distance from the start (m).
    pub cross_axis_excursion: f64,
    pub log: SimLog,
}

/// Runs a step on `axis` from hover at the base scenario's initial position.
pub fn decoupling_test(
    axis: Axis,
    magnitude: f64,
    base: &ScenarioConfig,
) -> Result<DecouplingResult, SimError> {
    let mut scenario = base.clone();
    scenario.trajectory = TrajectorySpec::StepTest {
        axis,
        magnitude,
        at: 0.0,
    };
    let out = run_scenario(&scenario)?;
    let log = out.log;
    let excursion = if axis.is_translational() {
        max_tilt_excursion(&log)
    } else {
        max_horizontal_excursion(&log, &Vec3::from(base.initial_state.position))
    };
    Ok(DecouplingResult {
        step: out.metrics,
        cross_axis_excursion: excursion,
        log,
    })
}
