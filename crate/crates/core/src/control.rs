//! Hierarchical controller.
//!
//! Body layer: cascaded position→velocity and attitude→rate PID loops produce
//! body acceleration commands. Mixing turns those into roll/pitch references
//! for the two passive frames: translation moves both frames the same way,
//! attitude moves them in opposition so their thrust lines form a couple about
//! the centre of mass. Frame layer: a tilt→tilt-rate cascade per frame yields
//! tilt acceleration channels. Allocation maps altitude, frame and yaw
//! channels onto six PWM outputs.

use serde::{Deserialize, Serialize};

use crate::airframe::AirframeConfig;
use crate::config::{ConfigError, Violations};
use crate::dynamics::{Vec2, VehicleState};
use crate::geometry::{body_rotation, euler_rate_matrix, EulerAngles, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
    /// Bound on the error integral (error units × s).
    pub integral_limit: f64,
    /// Symmetric bound on the loop output.
    pub output_limit: f64,
}

impl PidGains {
    pub const fn new(kp: f64, ki: f64, kd: f64, integral_limit: f64, output_limit: f64) -> Self {
        Self {
            kp,
            ki,
            kd,
            integral_limit,
            output_limit,
        }
    }

    pub const fn p(kp: f64, output_limit: f64) -> Self {
        Self::new(kp, 0.0, 0.0, 1.0, output_limit)
    }

    fn violations(&self, name: &str, v: &mut Violations) {
        v.non_negative(&format!("{name}.kp"), self.kp);
        v.non_negative(&format!("{name}.ki"), self.ki);
        v.non_negative(&format!("{name}.kd"), self.kd);
        v.positive(&format!("{name}.integral_limit"), self.integral_limit);
        v.positive(&format!("{name}.output_limit"), self.output_limit);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
    pub prev_time: f64,
}

/// `u = kp·e + kd·(target_rate − measured_rate) + ki·∫e`, with the integral
/// clamped to `integral_limit` and the output to `output_limit`.
///
/// The integral is accumulated with the rectangle rule before the output is
/// formed, so the first call already contributes `ki·e·dt`.
pub fn pid_step(
    gains: &PidGains,
    state: &PidState,
    target: f64,
    measured: f64,
    target_rate: f64,
    measured_rate: f64,
    dt: f64,
) -> (f64, PidState) {
    let error = target - measured;
    pid_step_error(gains, state, error, target_rate - measured_rate, dt)
}

fn pid_step_error(
    gains: &PidGains,
    state: &PidState,
    error: f64,
    error_rate: f64,
    dt: f64,
) -> (f64, PidState) {
    let integral = (state.integral + error * dt).clamp(-gains.integral_limit, gains.integral_limit);
    let out = gains.kp * error + gains.kd * error_rate + gains.ki * integral;
    let out = out.clamp(-gains.output_limit, gains.output_limit);
    (
        out,
        PidState {
            integral,
            prev_error: error,
            prev_time: state.prev_time + dt,
        },
    )
}

/// Channel-keyed gains for every loop of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainSet {
    pub pos_x: PidGains,
    pub pos_y: PidGains,
    pub pos_z: PidGains,
    pub vel_x: PidGains,
    pub vel_y: PidGains,
    pub vel_z: PidGains,
    pub att_roll: PidGains,
    pub att_pitch: PidGains,
    pub att_yaw: PidGains,
    pub rate_roll: PidGains,
    pub rate_pitch: PidGains,
    pub rate_yaw: PidGains,
    pub frame_att_roll: PidGains,
    pub frame_att_pitch: PidGains,
    pub frame_rate_roll: PidGains,
    pub frame_rate_pitch: PidGains,
}

impl Default for GainSet {
    fn default() -> Self {
        let pos_xy = PidGains::p(0.8, 1.5);
        let vel_xy = PidGains::p(2.0, 3.0);
        let att = PidGains::p(6.0, 2.0);
        let rate = PidGains::new(16.0, 2.0, 0.0, 0.5, 20.0);
        let frame_att = PidGains::p(25.0, 4.0);
        let frame_rate = PidGains::new(60.0, 0.0, 0.0, 1.0, 120.0);
        Self {
            pos_x: pos_xy,
            pos_y: pos_xy,
            pos_z: PidGains::p(1.5, 1.0),
            vel_x: vel_xy,
            vel_y: vel_xy,
            vel_z: PidGains::p(4.0, 4.0),
            att_roll: att,
            att_pitch: att,
            att_yaw: PidGains::p(2.0, 1.5),
            rate_roll: rate,
            rate_pitch: rate,
            rate_yaw: PidGains::new(4.0, 4.0, 0.0, 1.0, 6.0),
            frame_att_roll: frame_att,
            frame_att_pitch: frame_att,
            frame_rate_roll: frame_rate,
            frame_rate_pitch: frame_rate,
        }
    }
}

impl GainSet {
    fn named(&self) -> [(&'static str, &PidGains); 16] {
        [
            ("pos_x", &self.pos_x),
            ("pos_y", &self.pos_y),
            ("pos_z", &self.pos_z),
            ("vel_x", &self.vel_x),
            ("vel_y", &self.vel_y),
            ("vel_z", &self.vel_z),
            ("att_roll", &self.att_roll),
            ("att_pitch", &self.att_pitch),
            ("att_yaw", &self.att_yaw),
            ("rate_roll", &self.rate_roll),
            ("rate_pitch", &self.rate_pitch),
            ("rate_yaw", &self.rate_yaw),
            ("frame_att_roll", &self.frame_att_roll),
            ("frame_att_pitch", &self.frame_att_pitch),
            ("frame_rate_roll", &self.frame_rate_roll),
            ("frame_rate_pitch", &self.frame_rate_pitch),
        ]
    }
}

/// Scale gains turning body acceleration commands into frame tilt references.
///
/// A translation command in m/s² becomes a common-mode tilt through
/// `trans_*`; an attitude command in rad/s² becomes a differential tilt
/// through `att_*`. The signs follow the frame rotation convention: positive
/// pitch tilts thrust toward +x, positive roll toward −y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingGains {
    pub trans_x: f64,
    pub trans_y: f64,
    pub att_roll: f64,
    pub att_pitch: f64,
}

impl MixingGains {
    /// Small-angle inversion of the frame-force and lever-arm model at hover.
    pub fn for_airframe(a: &AirframeConfig) -> Self {
        let couple = 0.5 * (a.h_top + a.h_bottom) * a.weight();
        Self {
            trans_x: 1.0 / a.gravity,
            trans_y: -1.0 / a.gravity,
            att_roll: a.inertia_body.x / couple,
            att_pitch: a.inertia_body.y / couple,
        }
    }
}

/// Per-rotor thrust (N) produced by one unit of each allocation channel
/// before the output coefficient is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelScale {
    pub z: f64,
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
}

impl ChannelScale {
    /// Converts channel units (m/s², rad/s² of frame tilt, rad/s² of body
    /// yaw) into per-rotor thrust through the allocation columns.
    pub fn for_airframe(a: &AirframeConfig) -> Self {
        let d = a.arm_length;
        Self {
            z: a.mass / 6.0,
            pitch: a.inertia_frame[1] / (1.5 * d),
            roll: a.inertia_frame[0] / (3f64.sqrt() * d),
            yaw: a.inertia_body.z * a.c_lift / (6.0 * a.c_drag),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub rate_outer_hz: f64,
    pub rate_inner_hz: f64,
    pub gains: GainSet,
    /// Derived from the airframe when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingGains>,
    /// PWM per newton. Defaults to `1 / (C_L ω_max²)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_coefficient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_scale: Option<ChannelScale>,
    /// Frame tilt references are saturated here; defaults to the airframe stop.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt_reference_limit_deg: Option<f64>,
    /// Cancel the roll/pitch part of the rotor drag torque acting on each
    /// tilted frame.
    pub disturbance_feedforward: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            rate_outer_hz: 250.0,
            rate_inner_hz: 1000.0,
            gains: GainSet::default(),
            mixing: None,
            output_coefficient: None,
            channel_scale: None,
            tilt_reference_limit_deg: None,
            disturbance_feedforward: false,
        }
    }
}

impl ControllerConfig {
    pub fn violations(&self, airframe: Option<&AirframeConfig>) -> Vec<String> {
        let mut v = Violations::new();
        v.positive("rate_outer_hz", self.rate_outer_hz);
        v.positive("rate_inner_hz", self.rate_inner_hz);
        if v.is_empty() {
            let ratio = self.rate_inner_hz / self.rate_outer_hz;
            v.check(
                ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-9,
                || {
                    format!(
                        "rate_inner_hz / rate_outer_hz must be a positive integer (got {ratio})"
                    )
                },
            );
        }
        for (name, g) in self.gains.named() {
            g.violations(&format!("gains.{name}"), &mut v);
        }
        if let Some(m) = &self.mixing {
            v.finite("mixing.trans_x", m.trans_x);
            v.finite("mixing.trans_y", m.trans_y);
            v.finite("mixing.att_roll", m.att_roll);
            v.finite("mixing.att_pitch", m.att_pitch);
        }
        if let Some(k) = self.output_coefficient {
            v.positive("output_coefficient", k);
        }
        if let Some(s) = &self.channel_scale {
            v.positive("channel_scale.z", s.z);
            v.positive("channel_scale.pitch", s.pitch);
            v.positive("channel_scale.roll", s.roll);
            v.positive("channel_scale.yaw", s.yaw);
        }
        if let Some(l) = self.tilt_reference_limit_deg {
            v.positive("tilt_reference_limit_deg", l);
            if let Some(a) = airframe {
                v.check(l.to_radians() <= a.tilt_limit + 1e-12, || {
                    format!(
                        "tilt_reference_limit_deg {l} exceeds the mechanical stop {}",
                        a.tilt_limit.to_degrees()
                    )
                });
            }
        }
        v.into_messages()
    }

    pub fn validate(&self, airframe: Option<&AirframeConfig>) -> Result<(), ConfigError> {
        let v = self.violations(airframe);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Inner-loop ticks per outer-loop tick.
    pub fn outer_ratio(&self) -> u64 {
        (self.rate_inner_hz / self.rate_outer_hz).round().max(1.0) as u64
    }
}

/// Controller configuration with every airframe-derived default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedController {
    pub gains: GainSet,
    pub mixing: MixingGains,
    pub allocation: Allocation,
    pub tilt_reference_limit: f64,
    pub outer_ratio: u64,
    pub disturbance_feedforward: bool,
    pub gravity: f64,
    pub drag_ratio: f64,
    pub frame_inertia: [f64; 2],
}

impl ResolvedController {
    pub fn new(config: &ControllerConfig, airframe: &AirframeConfig) -> Self {
        let k = config
            .output_coefficient
            .unwrap_or_else(|| 1.0 / airframe.max_rotor_thrust());
        Self {
            gains: config.gains,
            mixing: config
                .mixing
                .unwrap_or_else(|| MixingGains::for_airframe(airframe)),
            allocation: Allocation {
                k,
                scale: config
                    .channel_scale
                    .unwrap_or_else(|| ChannelScale::for_airframe(airframe)),
                u_hover: hover_trim(airframe),
            },
            tilt_reference_limit: config
                .tilt_reference_limit_deg
                .map(f64::to_radians)
                .unwrap_or(airframe.tilt_limit),
            outer_ratio: config.outer_ratio(),
            disturbance_feedforward: config.disturbance_feedforward,
            gravity: airframe.gravity,
            drag_ratio: airframe.c_drag / airframe.c_lift,
            frame_inertia: airframe.inertia_frame,
        }
    }
}

/// PWM at which each rotor carries one sixth of the weight.
pub fn hover_trim(airframe: &AirframeConfig) -> f64 {
    (airframe.weight() / 6.0) / airframe.max_rotor_thrust()
}

/// Desired pose, with optional trajectory feedforward terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Setpoint {
    pub position: Vec3,
    pub attitude: EulerAngles,
    pub velocity_ff: Vec3,
    pub acceleration_ff: Vec3,
}

impl Setpoint {
    pub fn hold(position: Vec3, attitude: EulerAngles) -> Self {
        Self {
            position,
            attitude,
            ..Default::default()
        }
    }
}

/// Channel inputs of one frame's allocation block: altitude, frame pitch,
/// frame roll and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommandVector {
    pub z: f64,
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
}

/// Allocation block for rotors 1 to 3, columns `[z, pitch, roll, yaw]`.
pub const ALLOCATION_TOP: [[f64; 4]; 3] = [
    [1.0, -0.5, 1.0, -1.0],
    [1.0, 1.0, 0.0, -1.0],
    [1.0, -0.5, -1.0, -1.0],
];

/// Allocation block for rotors 4 to 6.
pub const ALLOCATION_BOTTOM: [[f64; 4]; 3] = [
    [1.0, -1.0, 0.0, 1.0],
    [1.0, 0.5, 1.0, 1.0],
    [1.0, 0.5, -1.0, 1.0],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    /// Output coefficient, PWM per newton.
    pub k: f64,
    pub scale: ChannelScale,
    pub u_hover: f64,
}

/// PWM commands for the six motors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorOutputs {
    pub u: [f64; 6],
    /// Values before clamping to [0, 1].
    pub unclamped: [f64; 6],
    /// Set when any output was clamped.
    pub saturated: bool,
}

impl ActuatorOutputs {
    pub fn hover(u_hover: f64) -> Self {
        Self {
            u: [u_hover; 6],
            unclamped: [u_hover; 6],
            saturated: false,
        }
    }
}

/// Maps the two frames' channel vectors onto six clamped PWM outputs.
pub fn allocate(
    top: &CommandVector,
    bottom: &CommandVector,
    alloc: &Allocation,
) -> ActuatorOutputs {
    let s = &alloc.scale;
    let scaled = |c: &CommandVector| [c.z * s.z, c.pitch * s.pitch, c.roll * s.roll, c.yaw * s.yaw];
    let blocks = [
        (ALLOCATION_TOP, scaled(top)),
        (ALLOCATION_BOTTOM, scaled(bottom)),
    ];

    let mut out = ActuatorOutputs::default();
    for (b, (matrix, cmd)) in blocks.iter().enumerate() {
        for (r, row) in matrix.iter().enumerate() {
            let v: f64 = row.iter().zip(cmd).map(|(a, c)| a * c).sum();
            out.unclamped[3 * b + r] = alloc.k * v + alloc.u_hover;
        }
    }
    for (u, raw) in out.u.iter_mut().zip(out.unclamped) {
        *u = raw.clamp(0.0, 1.0);
        out.saturated |= *u != raw;
    }
    out
}

/// Rotor speed for a PWM command; PWM is linear in thrust.
pub fn pwm_to_speed(u: f64, airframe: &AirframeConfig) -> f64 {
    airframe.omega_max * u.clamp(0.0, 1.0).sqrt()
}

pub fn outputs_to_speeds(
    out: &ActuatorOutputs,
    airframe: &AirframeConfig,
) -> crate::airframe::RotorSpeeds {
    crate::airframe::RotorSpeeds(out.u.map(|u| pwm_to_speed(u, airframe)))
}

/// Outer-loop products: desired world velocity and desired Euler-angle rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OuterCommands {
    pub velocity: Vec3,
    pub euler_rates: Vec3,
}

/// Inner-loop products: desired world acceleration and Euler-angle
/// accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerCommands {
    pub acceleration: Vec3,
    pub angular_accel: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyLoopState {
    pub position: [PidState; 3],
    pub velocity: [PidState; 3],
    pub attitude: [PidState; 3],
    pub rate: [PidState; 3],
}

fn axis_gains(
    g: &GainSet,
) -> (
    [&PidGains; 3],
    [&PidGains; 3],
    [&PidGains; 3],
    [&PidGains; 3],
) {
    (
        [&g.pos_x, &g.pos_y, &g.pos_z],
        [&g.vel_x, &g.vel_y, &g.vel_z],
        [&g.att_roll, &g.att_pitch, &g.att_yaw],
        [&g.rate_roll, &g.rate_pitch, &g.rate_yaw],
    )
}

/// Measured Euler-angle rates; falls back to body rates near gimbal lock.
pub fn measured_euler_rates(state: &VehicleState) -> Vec3 {
    euler_rate_matrix(&state.body_attitude)
        .map(|e| e * state.body_rates)
        .unwrap_or(state.body_rates)
}

/// Position→velocity and attitude→rate loops. Attitude errors are taken on
/// the circle, so a yaw step never unwinds the long way round.
pub fn body_outer_loop(
    setpoint: &Setpoint,
    state: &VehicleState,
    gains: &GainSet,
    loops: &mut BodyLoopState,
    dt: f64,
) -> OuterCommands {
    let (pos, _, att, _) = axis_gains(gains);
    let euler_rates = measured_euler_rates(state);
    let att_err = state.body_attitude.error_to(&setpoint.attitude);
    let mut out = OuterCommands::default();
    for i in 0..3 {
        let (v, s) = pid_step(
            pos[i],
            &loops.position[i],
            setpoint.position[i],
            state.position[i],
            setpoint.velocity_ff[i],
            state.velocity[i],
            dt,
        );
        loops.position[i] = s;
        out.velocity[i] = v + setpoint.velocity_ff[i];

        let (r, s) = pid_step_error(att[i], &loops.attitude[i], att_err[i], -euler_rates[i], dt);
        loops.attitude[i] = s;
        out.euler_rates[i] = r;
    }
    out
}

/// Velocity and rate loops.
pub fn body_inner_loop(
    outer: &OuterCommands,
    setpoint: &Setpoint,
    state: &VehicleState,
    gains: &GainSet,
    loops: &mut BodyLoopState,
    dt: f64,
) -> InnerCommands {
    let (_, vel, _, rate) = axis_gains(gains);
    let euler_rates = measured_euler_rates(state);
    let mut out = InnerCommands::default();
    for i in 0..3 {
        let (a, s) = pid_step(
            vel[i],
            &loops.velocity[i],
            outer.velocity[i],
            state.velocity[i],
            0.0,
            0.0,
            dt,
        );
        loops.velocity[i] = s;
        out.acceleration[i] = a + setpoint.acceleration_ff[i];

        let (w, s) = pid_step(
            rate[i],
            &loops.rate[i],
            outer.euler_rates[i],
            euler_rates[i],
            0.0,
            0.0,
            dt,
        );
        loops.rate[i] = s;
        out.angular_accel[i] = w;
    }
    out
}

/// Roll/pitch references for both frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameReferences {
    /// `(roll, pitch)` of the top frame.
    pub top: Vec2,
    pub bottom: Vec2,
}

/// Frame reference mixing. `body_accel` is the translational command in body
/// axes (m/s²), `angular_accel` the roll/pitch/yaw acceleration command.
///
/// ```text
/// roll_top   =  att_roll·φ̈ + trans_y·ÿ      roll_bottom  = −att_roll·φ̈ + trans_y·ÿ
/// pitch_top  =  att_pitch·θ̈ + trans_x·ẍ     pitch_bottom = −att_pitch·θ̈ + trans_x·ẍ
/// ```
/// Each reference is then saturated at `limit`.
pub fn frame_reference_mix(
    body_accel: &Vec3,
    angular_accel: &Vec3,
    mixing: &MixingGains,
    limit: f64,
) -> FrameReferences {
    let common = Vec2::new(mixing.trans_y * body_accel.y, mixing.trans_x * body_accel.x);
    let diff = Vec2::new(
        mixing.att_roll * angular_accel.x,
        mixing.att_pitch * angular_accel.y,
    );
    let sat = |v: Vec2| v.map(|x| x.clamp(-limit, limit));
    FrameReferences {
        top: sat(common + diff),
        bottom: sat(common - diff),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameLoopState {
    /// Indexed `[roll, pitch]`.
    pub attitude: [PidState; 2],
    pub rate: [PidState; 2],
}

/// One frame's tilt→rate→acceleration cascade. Returns the desired tilt
/// rates and the `(roll, pitch)` tilt acceleration channels.
pub fn frame_loop(
    reference: &Vec2,
    tilt: &Vec2,
    tilt_rates: &Vec2,
    gains: &GainSet,
    loops: &mut FrameLoopState,
    dt: f64,
) -> (Vec2, Vec2) {
    let att = [&gains.frame_att_roll, &gains.frame_att_pitch];
    let rate = [&gains.frame_rate_roll, &gains.frame_rate_pitch];
    let mut rate_d = Vec2::zeros();
    let mut accel = Vec2::zeros();
    for i in 0..2 {
        let (r, s) = pid_step(
            att[i],
            &loops.attitude[i],
            reference[i],
            tilt[i],
            0.0,
            tilt_rates[i],
            dt,
        );
        loops.attitude[i] = s;
        rate_d[i] = r;
        let (a, s) = pid_step(rate[i], &loops.rate[i], r, tilt_rates[i], 0.0, 0.0, dt);
        loops.rate[i] = s;
        accel[i] = a;
    }
    (rate_d, accel)
}

/// Everything the controller carries between ticks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerMemory {
    pub body: BodyLoopState,
    pub top: FrameLoopState,
    pub bottom: FrameLoopState,
    pub outer: OuterCommands,
    pub ticks: u64,
    pub last_outputs: Option<ActuatorOutputs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TickStatus {
    #[default]
    Ok,
    /// Measurements were not finite; previous outputs were reused.
    HoldLastOutput,
}

/// Every intermediate channel of one controller tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub velocity_cmd: Vec3,
    pub euler_rate_cmd: Vec3,
    pub accel_cmd: Vec3,
    pub body_accel_cmd: Vec3,
    pub angular_accel_cmd: Vec3,
    pub ref_top: Vec2,
    pub ref_bottom: Vec2,
    pub tilt_rate_cmd_top: Vec2,
    pub tilt_rate_cmd_bottom: Vec2,
    pub channels_top: CommandVector,
    pub channels_bottom: CommandVector,
    pub saturated: bool,
    pub outer_updated: bool,
    pub status: TickStatus,
}

/// Stable column names for [`Diagnostics::values`].
pub const DIAGNOSTIC_CHANNELS: [&str; 32] = [
    "cmd_vel_x",
    "cmd_vel_y",
    "cmd_vel_z",
    "cmd_roll_rate",
    "cmd_pitch_rate",
    "cmd_yaw_rate",
    "cmd_acc_x",
    "cmd_acc_y",
    "cmd_acc_z",
    "cmd_body_acc_x",
    "cmd_body_acc_y",
    "cmd_body_acc_z",
    "cmd_roll_acc",
    "cmd_pitch_acc",
    "cmd_yaw_acc",
    "ref_top_roll",
    "ref_top_pitch",
    "ref_bottom_roll",
    "ref_bottom_pitch",
    "cmd_top_roll_rate",
    "cmd_top_pitch_rate",
    "cmd_bottom_roll_rate",
    "cmd_bottom_pitch_rate",
    "ch_z",
    "ch_yaw",
    "ch_top_pitch",
    "ch_top_roll",
    "ch_bottom_pitch",
    "ch_bottom_roll",
    "saturated",
    "outer_updated",
    "hold_last_output",
];

impl Diagnostics {
    pub fn values(&self) -> [f64; DIAGNOSTIC_CHANNELS.len()] {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        [
            self.velocity_cmd.x,
            self.velocity_cmd.y,
            self.velocity_cmd.z,
            self.euler_rate_cmd.x,
            self.euler_rate_cmd.y,
            self.euler_rate_cmd.z,
            self.accel_cmd.x,
            self.accel_cmd.y,
            self.accel_cmd.z,
            self.body_accel_cmd.x,
            self.body_accel_cmd.y,
            self.body_accel_cmd.z,
            self.angular_accel_cmd.x,
            self.angular_accel_cmd.y,
            self.angular_accel_cmd.z,
            self.ref_top.x,
            self.ref_top.y,
            self.ref_bottom.x,
            self.ref_bottom.y,
            self.tilt_rate_cmd_top.x,
            self.tilt_rate_cmd_top.y,
            self.tilt_rate_cmd_bottom.x,
            self.tilt_rate_cmd_bottom.y,
            self.channels_top.z,
            self.channels_top.yaw,
            self.channels_top.pitch,
            self.channels_top.roll,
            self.channels_bottom.pitch,
            self.channels_bottom.roll,
            b(self.saturated),
            b(self.outer_updated),
            b(self.status == TickStatus::HoldLastOutput),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub outputs: ActuatorOutputs,
    pub diagnostics: Diagnostics,
}

/// Runs one inner-rate controller tick.
///
/// The outer loops run on every `outer_ratio`-th call (including the first)
/// with step `outer_ratio·dt`; between outer updates their outputs are held.
pub fn controller_tick(
    ctrl: &ResolvedController,
    setpoint: &Setpoint,
    measured: &VehicleState,
    memory: &mut ControllerMemory,
    dt: f64,
) -> TickOutput {
    if !measured.is_finite() {
        let outputs = memory
            .last_outputs
            .unwrap_or_else(|| ActuatorOutputs::hover(ctrl.allocation.u_hover));
        memory.ticks += 1;
        return TickOutput {
            outputs,
            diagnostics: Diagnostics {
                status: TickStatus::HoldLastOutput,
                saturated: outputs.saturated,
                ..Default::default()
            },
        };
    }

    let outer_updated = memory.ticks.is_multiple_of(ctrl.outer_ratio);
    if outer_updated {
        let outer_dt = dt * ctrl.outer_ratio as f64;
        memory.outer = body_outer_loop(setpoint, measured, &ctrl.gains, &mut memory.body, outer_dt);
    }
    memory.ticks += 1;

    let outer = memory.outer;
    let inner = body_inner_loop(
        &outer,
        setpoint,
        measured,
        &ctrl.gains,
        &mut memory.body,
        dt,
    );

    // Specific force the frames must deliver, in body axes, with gravity
    // compensated through the current attitude.
    let g = ctrl.gravity;
    let rot = body_rotation(&measured.body_attitude);
    let specific = rot.transpose() * (inner.acceleration + Vec3::new(0.0, 0.0, g));
    let body_accel = Vec3::new(specific.x, specific.y, specific.z - g);

    let refs = frame_reference_mix(
        &body_accel,
        &inner.angular_accel,
        &ctrl.mixing,
        ctrl.tilt_reference_limit,
    );
    let (rate_top, mut acc_top) = frame_loop(
        &refs.top,
        &measured.top_tilt,
        &measured.top_tilt_rates,
        &ctrl.gains,
        &mut memory.top,
        dt,
    );
    let (rate_bottom, mut acc_bottom) = frame_loop(
        &refs.bottom,
        &measured.bottom_tilt,
        &measured.bottom_tilt_rates,
        &ctrl.gains,
        &mut memory.bottom,
        dt,
    );

    if ctrl.disturbance_feedforward {
        // Tilted drag couples leak into the frame roll/pitch axes; at
        // near-hover thrust they are about ±ratio·T·sin(tilt).
        let thrust = (g + body_accel.z) * ctrl.allocation.scale.z * 3.0;
        let torque = ctrl.drag_ratio * thrust;
        let leak = |tilt: &Vec2, sign: f64| {
            let m = crate::geometry::frame_tilt_rotation(tilt.x, tilt.y)
                * Vec3::new(0.0, 0.0, sign * torque);
            Vec2::new(m.x / ctrl.frame_inertia[0], m.y / ctrl.frame_inertia[1])
        };
        acc_top -= leak(&measured.top_tilt, -1.0);
        acc_bottom -= leak(&measured.bottom_tilt, 1.0);
    }

    let yaw = inner.angular_accel.z;
    let channels_top = CommandVector {
        z: body_accel.z,
        pitch: acc_top.y,
        roll: acc_top.x,
        yaw,
    };
    let channels_bottom = CommandVector {
        z: body_accel.z,
        pitch: acc_bottom.y,
        roll: acc_bottom.x,
        yaw,
    };
    let outputs = allocate(&channels_top, &channels_bottom, &ctrl.allocation);
    memory.last_outputs = Some(outputs);

    TickOutput {
        outputs,
        diagnostics: Diagnostics {
            velocity_cmd: outer.velocity,
            euler_rate_cmd: outer.euler_rates,
            accel_cmd: inner.acceleration,
            body_accel_cmd: body_accel,
            angular_accel_cmd: inner.angular_accel,
            ref_top: refs.top,
            ref_bottom: refs.bottom,
            tilt_rate_cmd_top: rate_top,
            tilt_rate_cmd_bottom: rate_bottom,
            channels_top,
            channels_bottom,
            saturated: outputs.saturated,
            outer_updated,
            status: TickStatus::Ok,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SMatrix};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn rank(m: &DMatrix<f64>) -> usize {
        m.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|s| **s > 1e-9)
            .count()
    }

    fn resolved() -> (AirframeConfig, ResolvedController) {
        let a = AirframeConfig::default();
        let c = ResolvedController::new(&ControllerConfig::default(), &a);
        (a, c)
    }

    #[test]
    fn pid_basic_examples() {
        let g = PidGains::new(2.0, 0.0, 0.0, 1.0, 10.0);
        assert_eq!(
            pid_step(&g, &PidState::default(), 0.0, 0.0, 0.0, 0.0, 1e-3).0,
            0.0
        );
        assert_eq!(
            pid_step(&g, &PidState::default(), 1.0, 0.0, 0.0, 0.0, 1e-3).0,
            2.0
        );
    }

    #[test]
    fn pid_integral_is_a_rectangle_sum() {
        let g = PidGains::new(0.0, 0.5, 0.0, 10.0, 10.0);
        let dt = 1e-3;
        let n = 2000;
        let mut s = PidState::default();
        let mut out = 0.0;
        for _ in 0..n {
            (out, s) = pid_step(&g, &s, 1.0, 0.0, 0.0, 0.0, dt);
        }
        let oracle: f64 = (0..n).map(|_| 0.5 * dt).sum();
        assert!((out - oracle).abs() < 1e-12);
        assert!((out - 1.0).abs() <= 0.5 * dt);
    }

    #[test]
    fn pid_clamps_integral_and_output() {
        let g = PidGains::new(100.0, 1.0, 0.0, 0.2, 3.0);
        let mut s = PidState::default();
        for _ in 0..1000 {
            let (u, n) = pid_step(&g, &s, 1.0, 0.0, 0.0, 0.0, 0.01);
            assert!(u.abs() <= 3.0);
            s = n;
        }
        assert_eq!(s.integral, 0.2);
    }

    #[test]
    fn outer_loop_examples() {
        let mut gains = GainSet::default();
        let mut loops = BodyLoopState::default();
        let st = VehicleState::at_rest(Vec3::new(0.0, 0.0, 1.0), EulerAngles::ZERO);
        let sp = Setpoint::hold(st.position, EulerAngles::ZERO);
        let o = body_outer_loop(&sp, &st, &gains, &mut loops, 4e-3);
        assert_eq!(o.velocity, Vec3::zeros());
        assert_eq!(o.euler_rates, Vec3::zeros());

        gains.pos_x = PidGains::p(1.0, 10.0);
        let sp = Setpoint::hold(Vec3::new(1.0, 0.0, 1.0), EulerAngles::ZERO);
        let o = body_outer_loop(&sp, &st, &gains, &mut BodyLoopState::default(), 4e-3);
        assert_eq!(o.velocity.x, 1.0);
    }

    #[test]
    fn outer_loop_yaw_error_wraps() {
        let gains = GainSet {
            att_yaw: PidGains::p(1.0, 10.0),
            ..Default::default()
        };
        let yaw = PI - 0.05;
        let st = VehicleState::at_rest(Vec3::zeros(), EulerAngles::new(0.0, 0.0, yaw));
        let target = -PI + 0.05;
        let sp = Setpoint::hold(Vec3::zeros(), EulerAngles::new(0.0, 0.0, target));
        let o = body_outer_loop(&sp, &st, &gains, &mut BodyLoopState::default(), 4e-3);
        // Shortest way round: the angle from yaw to target, reduced to (−π, π].
        let d = target - yaw;
        let oracle = d - 2.0 * PI * (d / (2.0 * PI)).round();
        assert!((o.euler_rates.z - oracle).abs() < 1e-12);
        assert!((o.euler_rates.z - 0.1).abs() < 1e-12);
    }

    #[test]
    fn inner_loop_examples() {
        let mut gains = GainSet::default();
        let st = VehicleState::default();
        let sp = Setpoint::default();
        let zero = body_inner_loop(
            &OuterCommands::default(),
            &sp,
            &st,
            &gains,
            &mut BodyLoopState::default(),
            1e-3,
        );
        assert_eq!(zero, InnerCommands::default());

        gains.vel_z = PidGains::p(2.0, 10.0);
        let outer = OuterCommands {
            velocity: Vec3::new(0.0, 0.0, 0.5),
            euler_rates: Vec3::zeros(),
        };
        let i = body_inner_loop(
            &outer,
            &sp,
            &st,
            &gains,
            &mut BodyLoopState::default(),
            1e-3,
        );
        assert_eq!(i.acceleration.z, 1.0);
    }

    #[test]
    fn velocity_step_is_monotone() {
        let gains = GainSet::default();
        let dt = 1e-3;
        for g in [gains.vel_x, gains.vel_y, gains.vel_z] {
            let (mut v, mut s, mut prev) = (0.0, PidState::default(), 0.0);
            for _ in 0..20_000 {
                let (a, n) = pid_step(&g, &s, 1.0, v, 0.0, 0.0, dt);
                s = n;
                v += a * dt;
                assert!(v >= prev && v <= 1.0 + 1e-12, "v = {v}");
                prev = v;
            }
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mixing_examples() {
        let m = MixingGains::for_airframe(&AirframeConfig::default());
        let lim = 1.0;
        let c = 0.7;
        let r = frame_reference_mix(&Vec3::new(c, 0.0, 0.0), &Vec3::zeros(), &m, lim);
        assert_eq!(r.top.y, m.trans_x * c);
        assert_eq!(r.bottom.y, m.trans_x * c);
        assert_eq!(r.top.x, 0.0);
        let r = frame_reference_mix(&Vec3::zeros(), &Vec3::new(0.0, c, 0.0), &m, lim);
        assert_eq!(r.top.y, m.att_pitch * c);
        assert_eq!(r.bottom.y, -m.att_pitch * c);
        let r = frame_reference_mix(&Vec3::zeros(), &Vec3::zeros(), &m, lim);
        assert_eq!(r, FrameReferences::default());
    }

    #[test]
    fn mixing_saturates_at_limit() {
        let m = MixingGains::for_airframe(&AirframeConfig::default());
        let lim = 20f64.to_radians();
        let r = frame_reference_mix(
            &Vec3::new(1e3, -1e3, 0.0),
            &Vec3::new(1e3, 1e3, 0.0),
            &m,
            lim,
        );
        for v in [r.top, r.bottom] {
            assert!(v.x.abs() <= lim && v.y.abs() <= lim);
        }
    }

    #[test]
    fn frame_loop_examples() {
        let g = GainSet::default();
        let (rate, acc) = frame_loop(
            &Vec2::zeros(),
            &Vec2::zeros(),
            &Vec2::zeros(),
            &g,
            &mut FrameLoopState::default(),
            1e-3,
        );
        assert_eq!((rate, acc), (Vec2::zeros(), Vec2::zeros()));
        let reference = Vec2::new(0.0, 10f64.to_radians());
        let (_, acc) = frame_loop(
            &reference,
            &Vec2::zeros(),
            &Vec2::zeros(),
            &g,
            &mut FrameLoopState::default(),
            1e-3,
        );
        assert!(acc.y > 0.0);
        assert_eq!(acc.x, 0.0);
    }

    #[test]
    fn frame_loop_settles_without_large_overshoot() {
        let g = GainSet::default();
        let dt = 1e-3;
        let r = 10f64.to_radians();
        let reference = Vec2::new(r, r);
        let (mut x, mut v) = (Vec2::zeros(), Vec2::zeros());
        let mut s = FrameLoopState::default();
        let mut peak: f64 = 0.0;
        for _ in 0..3000 {
            let (_, a) = frame_loop(&reference, &x, &v, &g, &mut s, dt);
            v += a * dt;
            x += v * dt;
            peak = peak.max(x.x).max(x.y);
        }
        assert!(peak <= 1.2 * r, "peak {}", peak.to_degrees());
        assert!((x - reference).amax() < 1e-3 * r);
    }

    #[test]
    fn allocation_hover_trim_and_columns() {
        let (_, c) = resolved();
        let al = &c.allocation;
        let out = allocate(&CommandVector::default(), &CommandVector::default(), al);
        assert_eq!(out.u, [al.u_hover; 6]);
        assert!(!out.saturated);

        let y = 0.3;
        let cmd = CommandVector {
            yaw: y,
            ..Default::default()
        };
        let out = allocate(&cmd, &cmd, al);
        let dy = al.k * al.scale.yaw * y;
        for i in 0..3 {
            assert!((out.unclamped[i] - (al.u_hover - dy)).abs() < 1e-15);
            assert!((out.unclamped[i + 3] - (al.u_hover + dy)).abs() < 1e-15);
        }

        let p = 0.8;
        let top = CommandVector {
            pitch: p,
            ..Default::default()
        };
        let out = allocate(&top, &CommandVector::default(), al);
        let dp = al.k * al.scale.pitch * p;
        for (i, w) in [-0.5, 1.0, -0.5].iter().enumerate() {
            assert!((out.unclamped[i] - al.u_hover - w * dp).abs() < 1e-15);
            assert_eq!(out.unclamped[i + 3], al.u_hover);
        }
    }

    #[test]
    fn allocation_matrices_have_full_rank() {
        let top = DMatrix::from_fn(3, 4, |r, c| ALLOCATION_TOP[r][c]);
        let bot = DMatrix::from_fn(3, 4, |r, c| ALLOCATION_BOTTOM[r][c]);
        assert_eq!(rank(&top), 3);
        assert_eq!(rank(&bot), 3);
        let mut stacked = DMatrix::zeros(6, 8);
        stacked.view_mut((0, 0), (3, 4)).copy_from(&top);
        stacked.view_mut((3, 4), (3, 4)).copy_from(&bot);
        assert_eq!(rank(&stacked), 6);
    }

    #[test]
    fn pwm_examples() {
        let a = AirframeConfig::default();
        assert_eq!(pwm_to_speed(0.0, &a), 0.0);
        assert_eq!(pwm_to_speed(1.0, &a), a.omega_max);
        let w = pwm_to_speed(hover_trim(&a), &a);
        let thrust = a.c_lift * w * w;
        assert!((thrust - a.weight() / 6.0).abs() < 1e-12);
    }

    #[test]
    fn tick_at_hover_gives_trim() {
        let (_, c) = resolved();
        let st = VehicleState::at_rest(Vec3::new(1.0, 2.0, 1.5), EulerAngles::ZERO);
        let sp = Setpoint::hold(st.position, EulerAngles::ZERO);
        let out = controller_tick(&c, &sp, &st, &mut ControllerMemory::default(), 1e-3);
        assert_eq!(out.outputs.u, [c.allocation.u_hover; 6]);
        assert_eq!(out.diagnostics.status, TickStatus::Ok);
    }

    #[test]
    fn x_step_tilts_both_frames_together() {
        let (_, c) = resolved();
        let st = VehicleState::at_rest(Vec3::new(0.0, 0.0, 1.5), EulerAngles::ZERO);
        let sp = Setpoint::hold(Vec3::new(0.5, 0.0, 1.5), EulerAngles::ZERO);
        let d = controller_tick(&c, &sp, &st, &mut ControllerMemory::default(), 1e-3).diagnostics;
        assert!(d.ref_top.y > 0.0);
        assert_eq!(d.ref_top, d.ref_bottom);
        assert_eq!(d.angular_accel_cmd, Vec3::zeros());
    }

    #[test]
    fn yaw_step_is_a_pure_differential() {
        let (_, c) = resolved();
        let st = VehicleState::at_rest(Vec3::new(0.0, 0.0, 1.5), EulerAngles::ZERO);
        let sp = Setpoint::hold(st.position, EulerAngles::new(0.0, 0.0, 0.3));
        let out = controller_tick(&c, &sp, &st, &mut ControllerMemory::default(), 1e-3);
        let d = out.diagnostics;
        assert_eq!(d.ref_top, Vec2::zeros());
        assert_eq!(d.ref_bottom, Vec2::zeros());
        let u = out.outputs.unclamped;
        let h = c.allocation.u_hover;
        let delta = h - u[0];
        assert!(delta > 0.0);
        for i in 0..3 {
            assert!((h - u[i] - delta).abs() < 1e-15);
            assert!((u[i + 3] - h - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn nan_measurement_before_any_output_holds_trim() {
        let (_, c) = resolved();
        let mut st = VehicleState::default();
        st.velocity.y = f64::NAN;
        let out = controller_tick(
            &c,
            &Setpoint::default(),
            &st,
            &mut ControllerMemory::default(),
            1e-3,
        );
        assert_eq!(out.outputs.u, [c.allocation.u_hover; 6]);
        assert_eq!(out.diagnostics.status, TickStatus::HoldLastOutput);
    }

    #[test]
    fn outer_loop_runs_every_ratio_ticks() {
        let (_, c) = resolved();
        let st = VehicleState::at_rest(Vec3::new(0.0, 0.0, 1.0), EulerAngles::ZERO);
        let sp = Setpoint::hold(Vec3::new(0.2, 0.0, 1.0), EulerAngles::ZERO);
        let mut mem = ControllerMemory::default();
        let flags: Vec<bool> = (0..12)
            .map(|_| {
                controller_tick(&c, &sp, &st, &mut mem, 1e-3)
                    .diagnostics
                    .outer_updated
            })
            .collect();
        for (i, f) in flags.iter().enumerate() {
            assert_eq!(*f, (i as u64).is_multiple_of(c.outer_ratio));
        }
    }

    #[test]
    fn default_config_validates() {
        let a = AirframeConfig::default();
        assert!(ControllerConfig::default().validate(Some(&a)).is_ok());
        let mut bad = ControllerConfig {
            rate_outer_hz: 300.0,
            ..Default::default()
        };
        bad.gains.pos_x.kp = -1.0;
        let v = bad.violations(Some(&a));
        assert_eq!(v.len(), 2, "{v:?}");
    }

    fn channels() -> impl Strategy<Value = CommandVector> {
        (-5.0..5.0f64, -50.0..50.0f64, -50.0..50.0f64, -5.0..5.0f64).prop_map(
            |(z, pitch, roll, yaw)| CommandVector {
                z,
                pitch,
                roll,
                yaw,
            },
        )
    }

    fn add(a: &CommandVector, b: &CommandVector) -> CommandVector {
        CommandVector {
            z: a.z + b.z,
            pitch: a.pitch + b.pitch,
            roll: a.roll + b.roll,
            yaw: a.yaw + b.yaw,
        }
    }

    proptest! {
        #[test]
        fn allocation_is_affine(a in channels(), b in channels(), c in channels(), d in channels()) {
            let (_, ctrl) = resolved();
            let al = &ctrl.allocation;
            let h = al.u_hover;
            let f = |t: &CommandVector, b: &CommandVector| allocate(t, b, al).unclamped;
            let ab = f(&add(&a, &c), &add(&b, &d));
            let x = f(&a, &b);
            let y = f(&c, &d);
            for i in 0..6 {
                prop_assert!((ab[i] - h - (x[i] - h) - (y[i] - h)).abs() < 1e-12);
            }
        }

        #[test]
        fn yaw_keeps_total_thrust(y in -10.0..10.0f64) {
            let (_, ctrl) = resolved();
            let cmd = CommandVector { yaw: y, ..Default::default() };
            let u = allocate(&cmd, &cmd, &ctrl.allocation).unclamped;
            let top: f64 = u[..3].iter().sum();
            let bot: f64 = u[3..].iter().sum();
            let h = ctrl.allocation.u_hover;
            prop_assert!((top + bot - 6.0 * h).abs() < 1e-12);
            prop_assert!(((top - 3.0 * h) + (bot - 3.0 * h)).abs() < 1e-12);
            if y != 0.0 {
                prop_assert!((top - 3.0 * h).signum() == -(bot - 3.0 * h).signum());
            }
        }

        #[test]
        fn mixing_modes_do_not_leak(ax in -3.0..3.0f64, ay in -3.0..3.0f64, wr in -3.0..3.0f64, wp in -3.0..3.0f64) {
            let m = MixingGains::for_airframe(&AirframeConfig::default());
            let common = frame_reference_mix(&Vec3::new(ax, ay, 0.0), &Vec3::zeros(), &m, 10.0);
            prop_assert_eq!(common.top, common.bottom);
            let diff = frame_reference_mix(&Vec3::zeros(), &Vec3::new(wr, wp, 0.0), &m, 10.0);
            prop_assert_eq!(diff.top, -diff.bottom);
        }

        #[test]
        fn pid_is_deterministic(errs in proptest::collection::vec(-2.0..2.0f64, 1..50)) {
            let g = PidGains::new(1.5, 0.7, 0.1, 0.5, 2.0);
            let run = || {
                let mut s = PidState::default();
                errs.iter().map(|e| { let (u, n) = pid_step(&g, &s, *e, 0.0, 0.0, 0.1, 1e-3); s = n; u.to_bits() }).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn pwm_to_speed_is_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let cfg = AirframeConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(pwm_to_speed(lo, &cfg) <= pwm_to_speed(hi, &cfg));
        }
    }

    #[test]
    fn allocation_matches_dense_product() {
        let (_, c) = resolved();
        let al = &c.allocation;
        let t = CommandVector {
            z: 0.3,
            pitch: -2.0,
            roll: 4.0,
            yaw: 0.1,
        };
        let b = CommandVector {
            z: 0.3,
            pitch: 1.0,
            roll: -3.0,
            yaw: 0.1,
        };
        let s = al.scale;
        let at = SMatrix::<f64, 3, 4>::from_fn(|r, c| ALLOCATION_TOP[r][c]);
        let ab = SMatrix::<f64, 3, 4>::from_fn(|r, c| ALLOCATION_BOTTOM[r][c]);
        let vt =
            nalgebra::Vector4::new(t.z * s.z, t.pitch * s.pitch, t.roll * s.roll, t.yaw * s.yaw);
        let vb =
            nalgebra::Vector4::new(b.z * s.z, b.pitch * s.pitch, b.roll * s.roll, b.yaw * s.yaw);
        let ut = at * vt * al.k;
        let ub = ab * vb * al.k;
        let out = allocate(&t, &b, al).unclamped;
        for i in 0..3 {
            assert!((out[i] - ut[i] - al.u_hover).abs() < 1e-14);
            assert!((out[i + 3] - ub[i] - al.u_hover).abs() < 1e-14);
        }
    }
}
