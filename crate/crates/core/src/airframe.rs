//! Vehicle description and the rotor force/torque model.
//!
//! Each passive frame carries three rotors whose thrust acts along the frame
//! z axis. Frame-level wrenches are expressed in the body-parallel frame that
//! shares the frame's origin; [`body_moment`] and [`body_force_world`] fold
//! the two frame wrenches into the body equations of motion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Violations};
use crate::geometry::{body_rotation, frame_tilt_rotation, EulerAngles, Vec3};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum AirframeError {
    #[error("rotor {rotor} speed {omega} rad/s outside [0, {omega_max}]")]
    OutOfRange {
        rotor: usize,
        omega: f64,
        omega_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Top,
    Bottom,
}

/// Layout of the bottom-frame rotors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottomGeometry {
    /// Rotors at 0°, 120° and 240°, interleaved 60° with the top frame.
    #[default]
    Balanced,
    /// Rotor 6 at `[d/2, -√3 d/2, 0]`. The three positions do not sum to
    /// zero, so equal thrusts produce a net tilting moment.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AirframeConfig {
    pub mass: f64,
    pub gravity: f64,
    /// Diagonal of the body inertia matrix, kg·m².
    pub inertia_body: Vec3,
    pub h_top: f64,
    pub h_bottom: f64,
    pub arm_length: f64,
    pub c_lift: f64,
    pub c_drag: f64,
    /// Mechanical stop on each frame tilt axis, radians.
    pub tilt_limit: f64,
    pub omega_max: f64,
    /// Roll and pitch inertia of each passive frame about its joint, kg·m².
    pub inertia_frame: [f64; 2],
    /// Viscous damping at the universal joint, N·m·s/rad.
    pub frame_damping: f64,
    pub bottom_geometry: BottomGeometry,
    pub rotor_positions_top: [Vec3; 3],
    pub rotor_positions_bottom: [Vec3; 3],
    /// Sign of the reaction torque about the frame z axis.
    pub spin_direction_top: f64,
    pub spin_direction_bottom: f64,
}

impl Default for AirframeConfig {
    fn default() -> Self {
        Self::new(
            0.8,
            Vec3::new(0.0120, 0.0115, 0.0024),
            0.15,
            0.10,
            0.10,
            1.0e-5,
            2.0e-7,
        )
    }
}

impl AirframeConfig {
    /// Builds a configuration with the default secondary parameters (20° stop,
    /// 1200 rad/s ceiling, 0.002 kg·m² frames, 0.01 N·m·s/rad joint damping).
    pub fn new(
        mass: f64,
        inertia_body: Vec3,
        arm_length: f64,
        h_top: f64,
        h_bottom: f64,
        c_lift: f64,
        c_drag: f64,
    ) -> Self {
        let mut cfg = Self {
            mass,
            gravity: 9.8,
            inertia_body,
            h_top,
            h_bottom,
            arm_length,
            c_lift,
            c_drag,
            tilt_limit: 20f64.to_radians(),
            omega_max: 1200.0,
            inertia_frame: [0.002, 0.002],
            frame_damping: 0.01,
            bottom_geometry: BottomGeometry::Balanced,
            rotor_positions_top: [Vec3::zeros(); 3],
            rotor_positions_bottom: [Vec3::zeros(); 3],
            spin_direction_top: -1.0,
            spin_direction_bottom: 1.0,
        };
        cfg.rebuild_rotor_positions();
        cfg
    }

    pub fn with_bottom_geometry(mut self, geometry: BottomGeometry) -> Self {
        self.bottom_geometry = geometry;
        self.rebuild_rotor_positions();
        self
    }

    fn rebuild_rotor_positions(&mut self) {
        let d = self.arm_length;
        let s = 3f64.sqrt() / 2.0 * d;
        self.rotor_positions_top = [
            Vec3::new(d / 2.0, s, 0.0),
            Vec3::new(-d, 0.0, 0.0),
            Vec3::new(d / 2.0, -s, 0.0),
        ];
        let r6 = match self.bottom_geometry {
            BottomGeometry::Balanced => Vec3::new(-d / 2.0, -s, 0.0),
            BottomGeometry::Literal => Vec3::new(d / 2.0, -s, 0.0),
        };
        self.rotor_positions_bottom = [Vec3::new(d, 0.0, 0.0), Vec3::new(-d / 2.0, s, 0.0), r6];
    }

    pub fn rotor_positions(&self, frame: Frame) -> &[Vec3; 3] {
        match frame {
            Frame::Top => &self.rotor_positions_top,
            Frame::Bottom => &self.rotor_positions_bottom,
        }
    }

    pub fn spin_direction(&self, frame: Frame) -> f64 {
        match frame {
            Frame::Top => self.spin_direction_top,
            Frame::Bottom => self.spin_direction_bottom,
        }
    }

    /// Joint position relative to the body centre of mass.
    pub fn frame_offset(&self, frame: Frame) -> Vec3 {
        match frame {
            Frame::Top => Vec3::new(0.0, 0.0, self.h_top),
            Frame::Bottom => Vec3::new(0.0, 0.0, -self.h_bottom),
        }
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Largest thrust a single rotor can produce, N.
    pub fn max_rotor_thrust(&self) -> f64 {
        self.c_lift * self.omega_max * self.omega_max
    }

    /// Rotor speed at which six equal rotors carry the vehicle weight.
    pub fn hover_rotor_speed(&self) -> f64 {
        (self.weight() / (6.0 * self.c_lift)).sqrt()
    }

    pub fn hover_speeds(&self) -> RotorSpeeds {
        RotorSpeeds([self.hover_rotor_speed(); 6])
    }

    /// Residual of the zero-sum rotor condition for a frame.
    pub fn rotor_imbalance(&self, frame: Frame) -> Vec3 {
        self.rotor_positions(frame).iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.violations().into_result()
    }

    fn violations(&self) -> Violations {
        let mut v = Violations::new();
        v.positive("mass", self.mass);
        v.positive("gravity", self.gravity);
        for (i, name) in ["inertia_body[0]", "inertia_body[1]", "inertia_body[2]"]
            .iter()
            .enumerate()
        {
            v.positive(name, self.inertia_body[i]);
        }
        v.positive("h_top", self.h_top);
        v.positive("h_bottom", self.h_bottom);
        v.positive("arm_length", self.arm_length);
        v.positive("c_lift", self.c_lift);
        v.positive("c_drag", self.c_drag);
        v.positive("omega_max", self.omega_max);
        v.check(
            self.tilt_limit > 0.0 && self.tilt_limit < std::f64::consts::FRAC_PI_2,
            || {
                format!(
                    "tilt_limit_deg must be in (0, 90) (got {})",
                    self.tilt_limit.to_degrees()
                )
            },
        );
        v.positive("inertia_frame[0]", self.inertia_frame[0]);
        v.positive("inertia_frame[1]", self.inertia_frame[1]);
        v.non_negative("frame_damping", self.frame_damping);
        if v.is_empty() && self.hover_rotor_speed() >= self.omega_max {
            v.push(format!(
                "omega_max {} rad/s cannot carry the vehicle weight (hover needs {} rad/s)",
                self.omega_max,
                self.hover_rotor_speed()
            ));
        }
        v
    }

    /// Warnings that do not invalidate the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        for frame in [Frame::Top, Frame::Bottom] {
            let r = self.rotor_imbalance(frame);
            if r.norm() > 1e-12 * self.arm_length.max(1.0) {
                w.push(format!(
                    "{frame:?} frame rotor positions do not sum to zero (residual [{:.4}, {:.4}, {:.4}] m); \
                     equal rotor speeds will tilt the frame",
                    r.x, r.y, r.z
                ));
            }
        }
        w
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let raw: AirframeJson = serde_json::from_str(text)?;
        raw.into_config()
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, ConfigError> {
        let raw: AirframeJson = serde_json::from_value(value)?;
        raw.into_config()
    }

    pub fn to_json(&self) -> AirframeJson {
        AirframeJson {
            mass: Some(self.mass),
            gravity: Some(self.gravity),
            inertia_body: Some([
                self.inertia_body.x,
                self.inertia_body.y,
                self.inertia_body.z,
            ]),
            h_top: Some(self.h_top),
            h_bottom: Some(self.h_bottom),
            arm_length: Some(self.arm_length),
            c_lift: Some(self.c_lift),
            c_drag: Some(self.c_drag),
            tilt_limit_deg: Some(self.tilt_limit.to_degrees()),
            omega_max: Some(self.omega_max),
            inertia_frame: Some(self.inertia_frame),
            frame_damping: Some(self.frame_damping),
            bottom_geometry: Some(self.bottom_geometry),
        }
    }
}

/// On-disk form of [`AirframeConfig`]: flat keys, SI units, degrees only on
/// `_deg` keys.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirframeJson {
    pub mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gravity: Option<f64>,
    pub inertia_body: Option<[f64; 3]>,
    pub h_top: Option<f64>,
    pub h_bottom: Option<f64>,
    pub arm_length: Option<f64>,
    pub c_lift: Option<f64>,
    pub c_drag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt_limit_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inertia_frame: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bottom_geometry: Option<BottomGeometry>,
}

impl AirframeJson {
    pub fn into_config(self) -> Result<AirframeConfig, ConfigError> {
        let mut missing: Vec<&str> = Vec::new();
        let mut req = |name: &'static str, v: Option<f64>| {
            if v.is_none() {
                missing.push(name);
            }
            v.unwrap_or(f64::NAN)
        };
        let mass = req("mass", self.mass);
        let h_top = req("h_top", self.h_top);
        let h_bottom = req("h_bottom", self.h_bottom);
        let arm_length = req("arm_length", self.arm_length);
        let c_lift = req("c_lift", self.c_lift);
        let c_drag = req("c_drag", self.c_drag);
        if self.inertia_body.is_none() {
            missing.push("inertia_body");
        }
        let inertia = self.inertia_body.unwrap_or([f64::NAN; 3]);

        let mut cfg = AirframeConfig::new(
            mass,
            Vec3::from(inertia),
            arm_length,
            h_top,
            h_bottom,
            c_lift,
            c_drag,
        );
        if let Some(g) = self.gravity {
            cfg.gravity = g;
        }
        if let Some(t) = self.tilt_limit_deg {
            cfg.tilt_limit = t.to_radians();
        }
        if let Some(w) = self.omega_max {
            cfg.omega_max = w;
        }
        if let Some(j) = self.inertia_frame {
            cfg.inertia_frame = j;
        }
        if let Some(c) = self.frame_damping {
            cfg.frame_damping = c;
        }
        cfg = cfg.with_bottom_geometry(self.bottom_geometry.unwrap_or_default());

        let mut all = Violations::new();
        for name in &missing {
            all.push(format!("{name} is required"));
        }
        // A missing field is reported once, not again as a non-finite value.
        for msg in cfg.violations().into_messages() {
            if !missing.iter().any(|n| msg.starts_with(n)) {
                all.push(msg);
            }
        }
        all.into_result().map(|_| cfg)
    }
}

/// Six rotor speeds in rad/s; indices 0..3 are the top frame, 3..6 the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorSpeeds(pub [f64; 6]);

impl RotorSpeeds {
    pub fn top(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn bottom(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn frame(&self, frame: Frame) -> [f64; 3] {
        match frame {
            Frame::Top => self.top(),
            Frame::Bottom => self.bottom(),
        }
    }

    pub fn validate(&self, config: &AirframeConfig) -> Result<(), AirframeError> {
        for (i, &w) in self.0.iter().enumerate() {
            check_speed(i + 1, w, config)?;
        }
        Ok(())
    }
}

/// Force and moment produced by one frame's rotors, in the body-parallel frame
/// at the frame centre.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameWrench {
    pub force: Vec3,
    pub moment: Vec3,
}

fn check_speed(rotor: usize, omega: f64, config: &AirframeConfig) -> Result<(), AirframeError> {
    if !(0.0..=config.omega_max).contains(&omega) {
        return Err(AirframeError::OutOfRange {
            rotor,
            omega,
            omega_max: config.omega_max,
        });
    }
    Ok(())
}

/// Thrust of one rotor, `C_L * omega²`.
pub fn rotor_thrust(omega: f64, config: &AirframeConfig) -> Result<f64, AirframeError> {
    check_speed(0, omega, config)?;
    Ok(config.c_lift * omega * omega)
}

fn frame_thrusts(
    speeds: &[f64; 3],
    config: &AirframeConfig,
    frame: Frame,
) -> Result<[f64; 3], AirframeError> {
    let base = match frame {
        Frame::Top => 1,
        Frame::Bottom => 4,
    };
    let mut out = [0.0; 3];
    for (i, (&w, t)) in speeds.iter().zip(out.iter_mut()).enumerate() {
        check_speed(base + i, w, config)?;
        *t = config.c_lift * w * w;
    }
    Ok(out)
}

/// Resultant rotor force of one frame.
pub fn frame_force(
    tilt: &EulerAngles,
    speeds: &[f64; 3],
    config: &AirframeConfig,
    frame: Frame,
) -> Result<Vec3, AirframeError> {
    Ok(frame_wrench(tilt, speeds, config, frame)?.force)
}

/// Resultant rotor moment of one frame: thrust lever arms plus drag reaction
/// torques, both rotated out of the tilted frame.
pub fn frame_moment(
    tilt: &EulerAngles,
    speeds: &[f64; 3],
    config: &AirframeConfig,
    frame: Frame,
) -> Result<Vec3, AirframeError> {
    Ok(frame_wrench(tilt, speeds, config, frame)?.moment)
}

pub fn frame_wrench(
    tilt: &EulerAngles,
    speeds: &[f64; 3],
    config: &AirframeConfig,
    frame: Frame,
) -> Result<FrameWrench, AirframeError> {
    let thrusts = frame_thrusts(speeds, config, frame)?;
    let rot = frame_tilt_rotation(tilt.roll, tilt.pitch);
    let positions = config.rotor_positions(frame);

    // r x [0, 0, f] = [r_y f, -r_x f, 0]
    let mut lever = Vec3::zeros();
    let mut total = 0.0;
    for (r, &f) in positions.iter().zip(&thrusts) {
        lever.x += r.y * f;
        lever.y -= r.x * f;
        total += f;
    }
    let ratio = config.c_drag / config.c_lift;
    let reaction = Vec3::new(0.0, 0.0, config.spin_direction(frame) * ratio * total);

    Ok(FrameWrench {
        force: rot * Vec3::new(0.0, 0.0, total),
        moment: rot * (lever + reaction),
    })
}

/// Total moment on the body about its centre of mass.
///
/// Frame forces act through the joint offsets; of the frame moments only the
/// z components reach the body, the joint being free in roll and pitch.
pub fn body_moment(top: &FrameWrench, bottom: &FrameWrench, config: &AirframeConfig) -> Vec3 {
    config.frame_offset(Frame::Top).cross(&top.force)
        + config.frame_offset(Frame::Bottom).cross(&bottom.force)
        + Vec3::new(0.0, 0.0, top.moment.z + bottom.moment.z)
}

/// Net world-frame force on the vehicle, gravity included.
pub fn body_force_world(
    body_att: &EulerAngles,
    top_force: &Vec3,
    bottom_force: &Vec3,
    config: &AirframeConfig,
) -> Vec3 {
    let gravity = Vec3::new(0.0, 0.0, -config.mass * config.gravity);
    gravity + body_rotation(body_att) * (top_force + bottom_force)
}
