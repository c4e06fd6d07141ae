//! Continuous-time vehicle model and its fixed-step integrator.
//!
//! The body is a 6-DOF rigid body driven by the two frame wrenches. Each
//! passive frame is a two-axis rotor on its universal joint, driven by the
//! roll/pitch components of its own rotor moment, damped at the joint, and
//! dragged along by the body's angular acceleration. Frames carry no
//! translational mass of their own. Tilt travel ends at an inelastic stop.

use nalgebra::{SVector, Vector2};
use thiserror::Error;

use crate::airframe::{
    body_force_world, body_moment, frame_wrench, AirframeConfig, AirframeError, Frame, RotorSpeeds,
};
use crate::geometry::{euler_rate_matrix, wrap_angle, EulerAngles, GeometryError, Vec3};

pub type Vec2 = Vector2<f64>;

/// Number of scalar entries in a packed [`VehicleState`].
pub const STATE_DIM: usize = 20;
pub type StateVector = SVector<f64, STATE_DIM>;

/// Largest accepted physics step.
pub const MAX_STEP: f64 = 0.01;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Rotor(#[from] AirframeError),
    #[error("state left the finite domain")]
    NonFiniteState,
    #[error("step size {0} s outside (0, {MAX_STEP}]")]
    InvalidStep(f64),
}

/// Full simulation state. Tilt vectors hold `(roll, pitch)` of a frame
/// relative to the body; body rates are expressed in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub body_attitude: EulerAngles,
    pub body_rates: Vec3,
    pub top_tilt: Vec2,
    pub top_tilt_rates: Vec2,
    pub bottom_tilt: Vec2,
    pub bottom_tilt_rates: Vec2,
}

impl VehicleState {
    /// At rest, level, frames centred.
    pub fn at_rest(position: Vec3, attitude: EulerAngles) -> Self {
        Self {
            position,
            body_attitude: attitude,
            ..Default::default()
        }
    }

    pub fn tilt(&self, frame: Frame) -> Vec2 {
        match frame {
            Frame::Top => self.top_tilt,
            Frame::Bottom => self.bottom_tilt,
        }
    }

    pub fn tilt_rates(&self, frame: Frame) -> Vec2 {
        match frame {
            Frame::Top => self.top_tilt_rates,
            Frame::Bottom => self.bottom_tilt_rates,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    pub fn to_vector(&self) -> StateVector {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        v.fixed_rows_mut::<3>(6)
            .copy_from(&self.body_attitude.to_vec());
        v.fixed_rows_mut::<3>(9).copy_from(&self.body_rates);
        v.fixed_rows_mut::<2>(12).copy_from(&self.top_tilt);
        v.fixed_rows_mut::<2>(14).copy_from(&self.top_tilt_rates);
        v.fixed_rows_mut::<2>(16).copy_from(&self.bottom_tilt);
        v.fixed_rows_mut::<2>(18).copy_from(&self.bottom_tilt_rates);
        v
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self {
            position: v.fixed_rows::<3>(0).into(),
            velocity: v.fixed_rows::<3>(3).into(),
            body_attitude: EulerAngles::from_vec(&v.fixed_rows::<3>(6).into()),
            body_rates: v.fixed_rows::<3>(9).into(),
            top_tilt: v.fixed_rows::<2>(12).into(),
            top_tilt_rates: v.fixed_rows::<2>(14).into(),
            bottom_tilt: v.fixed_rows::<2>(16).into(),
            bottom_tilt_rates: v.fixed_rows::<2>(18).into(),
        }
    }

    /// Clamps both frames onto their stops, zeroing any outward tilt rate.
    pub fn enforce_tilt_stops(&mut self, limit: f64) {
        clamp_axis_pair(&mut self.top_tilt, &mut self.top_tilt_rates, limit);
        clamp_axis_pair(&mut self.bottom_tilt, &mut self.bottom_tilt_rates, limit);
    }
}

fn clamp_axis_pair(tilt: &mut Vec2, rates: &mut Vec2, limit: f64) {
    for i in 0..2 {
        if tilt[i] >= limit {
            tilt[i] = limit;
            rates[i] = rates[i].min(0.0);
        } else if tilt[i] <= -limit {
            tilt[i] = -limit;
            rates[i] = rates[i].max(0.0);
        }
    }
}

/// Time derivative of a [`VehicleState`], field for field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub attitude_rates: Vec3,
    pub body_accel: Vec3,
    pub top_tilt_rates: Vec2,
    pub top_tilt_accel: Vec2,
    pub bottom_tilt_rates: Vec2,
    pub bottom_tilt_accel: Vec2,
}

impl StateDerivative {
    pub fn to_vector(&self) -> StateVector {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.velocity);
        v.fixed_rows_mut::<3>(3).copy_from(&self.acceleration);
        v.fixed_rows_mut::<3>(6).copy_from(&self.attitude_rates);
        v.fixed_rows_mut::<3>(9).copy_from(&self.body_accel);
        v.fixed_rows_mut::<2>(12).copy_from(&self.top_tilt_rates);
        v.fixed_rows_mut::<2>(14).copy_from(&self.top_tilt_accel);
        v.fixed_rows_mut::<2>(16).copy_from(&self.bottom_tilt_rates);
        v.fixed_rows_mut::<2>(18).copy_from(&self.bottom_tilt_accel);
        v
    }
}

/// Euler's rotation equation with a diagonal inertia.
pub fn body_rotational_accel(state: &VehicleState, moment: &Vec3, config: &AirframeConfig) -> Vec3 {
    let w = &state.body_rates;
    let inertia = &config.inertia_body;
    let gyro = w.cross(&inertia.component_mul(w));
    (moment - gyro).component_div(inertia)
}

/// Newton's second law; `world_force` already contains gravity.
pub fn body_translational_accel(
    _state: &VehicleState,
    world_force: &Vec3,
    config: &AirframeConfig,
) -> Vec3 {
    world_force / config.mass
}

/// Tilt acceleration of one frame relative to the body.
///
/// `moment_xy` is the frame's own rotor moment (roll, pitch components);
/// `body_coupling` is added as-is and normally carries the negated body
/// angular acceleration. At a stop, acceleration pushing further out is
/// removed.
pub fn frame_tilt_accel(
    tilt: &Vec2,
    rates: &Vec2,
    moment_xy: &Vec2,
    body_coupling: &Vec2,
    config: &AirframeConfig,
) -> Vec2 {
    let c = config.frame_damping;
    let mut acc = Vec2::new(
        (moment_xy.x - c * rates.x) / config.inertia_frame[0],
        (moment_xy.y - c * rates.y) / config.inertia_frame[1],
    ) + body_coupling;
    for i in 0..2 {
        if (tilt[i] >= config.tilt_limit && acc[i] > 0.0)
            || (tilt[i] <= -config.tilt_limit && acc[i] < 0.0)
        {
            acc[i] = 0.0;
        }
    }
    acc
}

fn stopped_rates(tilt: &Vec2, rates: &Vec2, limit: f64) -> Vec2 {
    let mut r = *rates;
    for i in 0..2 {
        if (tilt[i] >= limit && r[i] > 0.0) || (tilt[i] <= -limit && r[i] < 0.0) {
            r[i] = 0.0;
        }
    }
    r
}

/// Everything the right-hand side computes, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceBreakdown {
    pub top: crate::airframe::FrameWrench,
    pub bottom: crate::airframe::FrameWrench,
    pub body_moment: Vec3,
    pub world_force: Vec3,
}

pub fn force_breakdown(
    state: &VehicleState,
    speeds: &RotorSpeeds,
    config: &AirframeConfig,
) -> Result<ForceBreakdown, DynamicsError> {
    let tt = EulerAngles::tilt(state.top_tilt.x, state.top_tilt.y);
    let bt = EulerAngles::tilt(state.bottom_tilt.x, state.bottom_tilt.y);
    let top = frame_wrench(&tt, &speeds.top(), config, Frame::Top)?;
    let bottom = frame_wrench(&bt, &speeds.bottom(), config, Frame::Bottom)?;

    // Joint damping acts between frame and body; the body takes the reaction.
    let damping = config.frame_damping * (state.top_tilt_rates + state.bottom_tilt_rates);
    let moment = body_moment(&top, &bottom, config) + Vec3::new(damping.x, damping.y, 0.0);
    let world_force = body_force_world(&state.body_attitude, &top.force, &bottom.force, config);
    Ok(ForceBreakdown {
        top,
        bottom,
        body_moment: moment,
        world_force,
    })
}

/// Full right-hand side of the equations of motion.
pub fn state_derivative(
    state: &VehicleState,
    speeds: &RotorSpeeds,
    config: &AirframeConfig,
) -> Result<StateDerivative, DynamicsError> {
    let forces = force_breakdown(state, speeds, config)?;
    let body_accel = body_rotational_accel(state, &forces.body_moment, config);
    let acceleration = body_translational_accel(state, &forces.world_force, config);
    let attitude_rates = euler_rate_matrix(&state.body_attitude)? * state.body_rates;

    let coupling = -Vec2::new(body_accel.x, body_accel.y);
    let limit = config.tilt_limit;
    let top_tilt_accel = frame_tilt_accel(
        &state.top_tilt,
        &state.top_tilt_rates,
        &forces.top.moment.xy(),
        &coupling,
        config,
    );
    let bottom_tilt_accel = frame_tilt_accel(
        &state.bottom_tilt,
        &state.bottom_tilt_rates,
        &forces.bottom.moment.xy(),
        &coupling,
        config,
    );

    Ok(StateDerivative {
        velocity: state.velocity,
        acceleration,
        attitude_rates,
        body_accel,
        top_tilt_rates: stopped_rates(&state.top_tilt, &state.top_tilt_rates, limit),
        top_tilt_accel,
        bottom_tilt_rates: stopped_rates(&state.bottom_tilt, &state.bottom_tilt_rates, limit),
        bottom_tilt_accel,
    })
}

/// One classical fourth-order Runge-Kutta step on a fixed-size vector state.
pub fn rk4_step<const N: usize, E>(
    x: &SVector<f64, N>,
    dt: f64,
    mut f: impl FnMut(&SVector<f64, N>) -> Result<SVector<f64, N>, E>,
) -> Result<SVector<f64, N>, E> {
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (dt / 2.0)))?;
    let k3 = f(&(x + k2 * (dt / 2.0)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Advances the state by `dt` with rotor speeds held constant.
pub fn step(
    state: &VehicleState,
    speeds: &RotorSpeeds,
    dt: f64,
    config: &AirframeConfig,
) -> Result<VehicleState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let next = rk4_step(&state.to_vector(), dt, |x| {
        let s = VehicleState::from_vector(x);
        state_derivative(&s, speeds, config).map(|d| d.to_vector())
    })?;
    let mut next = VehicleState::from_vector(&next);
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    next.enforce_tilt_stops(config.tilt_limit);
    next.body_attitude.roll = wrap_angle(next.body_attitude.roll);
    next.body_attitude.yaw = wrap_angle(next.body_attitude.yaw);
    Ok(next)
}

/// Rotational kinetic energy of the body, `½ ωᵀ I ω`.
pub fn rotational_energy(state: &VehicleState, config: &AirframeConfig) -> f64 {
    0.5 * state
        .body_rates
        .dot(&config.inertia_body.component_mul(&state.body_rates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airframe::FrameWrench;

    fn cfg() -> AirframeConfig {
        AirframeConfig::default()
    }

    fn hover_state() -> VehicleState {
        VehicleState::at_rest(Vec3::new(0.0, 0.0, 1.5), EulerAngles::ZERO)
    }

    #[test]
    fn rotational_accel_cases() {
        let c = cfg();
        let s = hover_state();
        assert_eq!(body_rotational_accel(&s, &Vec3::zeros(), &c), Vec3::zeros());
        let a = body_rotational_accel(&s, &Vec3::new(0.012, 0.0, 0.0), &c);
        assert!((a - Vec3::new(1.0, 0.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn translational_accel_cases() {
        let c = cfg();
        let s = hover_state();
        let a = body_translational_accel(&s, &Vec3::new(0.8, 0.0, 0.0), &c);
        assert!((a - Vec3::new(1.0, 0.0, 0.0)).amax() < 1e-15);
        let a = body_translational_accel(&s, &Vec3::new(0.0, 0.0, -c.weight()), &c);
        assert!((a.z + 9.8).abs() < 1e-15);
    }

    #[test]
    fn frame_tilt_accel_cases() {
        let c = cfg();
        let z = Vec2::zeros();
        assert_eq!(frame_tilt_accel(&z, &z, &z, &z, &c), z);

        let at_stop = Vec2::new(c.tilt_limit, 0.0);
        let a = frame_tilt_accel(&at_stop, &z, &Vec2::new(0.1, 0.0), &z, &c);
        assert_eq!(a.x, 0.0);
        let a = frame_tilt_accel(&at_stop, &z, &Vec2::new(-0.1, 0.0), &z, &c);
        assert!(a.x < 0.0);

        let a = frame_tilt_accel(&z, &z, &Vec2::new(0.004, -0.002), &Vec2::new(0.5, 0.0), &c);
        assert!((a - Vec2::new(2.5, -1.0)).amax() < 1e-15);
    }

    #[test]
    fn constant_moment_double_integrator() {
        let mut c = cfg();
        c.frame_damping = 0.0;
        let tau = 1e-4;
        let jf = c.inertia_frame[1];
        let dt = 1e-3;
        let mut tilt = Vec2::zeros();
        let mut rate = Vec2::zeros();
        let n = 500;
        for _ in 0..n {
            let x = nalgebra::Vector4::new(tilt.x, tilt.y, rate.x, rate.y);
            let x = rk4_step(&x, dt, |x| {
                let a = frame_tilt_accel(
                    &Vec2::new(x[0], x[1]),
                    &Vec2::new(x[2], x[3]),
                    &Vec2::new(0.0, tau),
                    &Vec2::zeros(),
                    &c,
                );
                Ok::<_, ()>(nalgebra::Vector4::new(x[2], x[3], a.x, a.y))
            })
            .unwrap();
            tilt = Vec2::new(x[0], x[1]);
            rate = Vec2::new(x[2], x[3]);
        }
        let t = n as f64 * dt;
        assert!((tilt.y - 0.5 * tau / jf * t * t).abs() < 1e-6);
        assert_eq!(tilt.x, 0.0);
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let c = cfg();
        let d = state_derivative(&hover_state(), &c.hover_speeds(), &c).unwrap();
        assert!(d.to_vector().amax() < 1e-12, "{d:?}");
    }

    #[test]
    fn zero_speeds_fall_at_gravity() {
        let c = cfg();
        let mut s = hover_state();
        s.body_attitude = EulerAngles::new(0.1, -0.2, 0.3);
        s.body_rates = Vec3::new(0.1, 0.2, -0.1);
        let d = state_derivative(&s, &RotorSpeeds::default(), &c).unwrap();
        assert_eq!(d.acceleration, Vec3::new(0.0, 0.0, -9.8));
    }

    #[test]
    fn top_differential_tilts_frame_first() {
        let c = cfg();
        let mut speeds = c.hover_speeds();
        speeds.0[1] += 10.0; // rotor 2 sits at -x: positive pitch moment
        speeds.0[0] -= 5.0;
        speeds.0[2] -= 5.0;
        let d = state_derivative(&hover_state(), &speeds, &c).unwrap();
        assert!(d.top_tilt_accel.y > 0.0);
        assert_eq!(d.bottom_tilt_accel, Vec2::zeros());
        // Tilt has not developed, so the body sees no lateral force or torque.
        assert!(d.acceleration.x.abs() < 1e-12 && d.acceleration.y.abs() < 1e-12);
        assert!(d.body_accel.x.abs() < 1e-12 && d.body_accel.y.abs() < 1e-12);
    }

    #[test]
    fn step_rejects_bad_dt() {
        let c = cfg();
        let s = hover_state();
        assert!(matches!(
            step(&s, &c.hover_speeds(), 0.0, &c),
            Err(DynamicsError::InvalidStep(_))
        ));
        assert!(matches!(
            step(&s, &c.hover_speeds(), 0.02, &c),
            Err(DynamicsError::InvalidStep(_))
        ));
    }

    #[test]
    fn step_reports_divergence() {
        let c = cfg();
        let mut s = hover_state();
        s.velocity.x = f64::NAN;
        assert_eq!(
            step(&s, &c.hover_speeds(), 1e-3, &c),
            Err(DynamicsError::NonFiniteState)
        );
    }

    #[test]
    fn hover_drift_over_ten_seconds() {
        let c = cfg();
        let speeds = c.hover_speeds();
        let mut s = hover_state();
        for _ in 0..1000 {
            s = step(&s, &speeds, 0.01, &c).unwrap();
        }
        assert!((s.position - hover_state().position).amax() < 1e-6);
        assert!(s.body_attitude.to_vec().amax() < 1e-6);
    }

    #[test]
    fn free_fall_one_second() {
        let c = cfg();
        let mut s = VehicleState::default();
        for _ in 0..100 {
            s = step(&s, &RotorSpeeds::default(), 0.01, &c).unwrap();
        }
        assert!((s.position.z + 4.9).abs() < 1e-6);
    }

    #[test]
    fn stops_hold_under_sustained_moment() {
        let c = cfg();
        let mut speeds = c.hover_speeds();
        speeds.0[1] += 60.0;
        let mut s = hover_state();
        let mut max_tilt: f64 = 0.0;
        for _ in 0..2000 {
            s = step(&s, &speeds, 1e-3, &c).unwrap();
            max_tilt = max_tilt.max(s.top_tilt.amax());
        }
        assert!(max_tilt <= c.tilt_limit + 1e-12);
        assert_eq!(s.top_tilt.y, c.tilt_limit);
    }

    #[test]
    fn body_torque_free_of_frame_xy_moments() {
        let c = cfg();
        let top = FrameWrench {
            force: Vec3::zeros(),
            moment: Vec3::new(0.3, 0.4, 0.0),
        };
        assert_eq!(
            body_moment(&top, &FrameWrench::default(), &c),
            Vec3::zeros()
        );
    }

    #[test]
    fn jacobian_is_smooth_at_hover() {
        let c = cfg();
        let speeds = c.hover_speeds();
        let x0 = hover_state().to_vector();
        let f = |x: &StateVector| {
            state_derivative(&VehicleState::from_vector(x), &speeds, &c)
                .unwrap()
                .to_vector()
        };
        let central = |h: f64, j: usize| {
            let mut e = StateVector::zeros();
            e[j] = h;
            (f(&(x0 + e)) - f(&(x0 - e))) / (2.0 * h)
        };
        for j in 0..STATE_DIM {
            let coarse = central(1e-6, j);
            // Richardson extrapolation of two wider central differences.
            let fine = (central(1e-4, j) * 4.0 - central(2e-4, j)) / 3.0;
            assert!(coarse.iter().all(|v| v.is_finite()));
            let scale = fine.amax().max(1.0);
            assert!(
                (coarse - fine).amax() / scale < 1e-4,
                "column {j}: {coarse:?} vs {fine:?}"
            );
        }
    }
}
