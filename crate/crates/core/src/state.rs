//! Simulator state types: single-quad state and the structure-of-arrays
//! batch layout.

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};

/// Full state of one simulated quadrotor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadState {
    /// Position in the world frame (m).
    pub pos: Vec3,
    /// Velocity in the world frame (m/s).
    pub vel: Vec3,
    /// Attitude quaternion, scalar-first, body→world.
    pub attitude: Quat,
    /// Angular velocity in the body frame (rad/s).
    pub body_rates: Vec3,
    /// Rotor speeds (rad/s).
    pub motor_speeds: [f64; 4],
}

impl QuadState {
    /// Hover state at `pos`: level attitude, zero rates, motors at the
    /// weight-carrying speed.
    pub fn hover_at(pos: Vec3, hover_motor_speed: f64) -> Self {
        QuadState {
            pos,
            vel: Vec3::zero(),
            attitude: Quat::identity(),
            body_rates: Vec3::zero(),
            motor_speeds: [hover_motor_speed; 4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.is_finite()
            && self.vel.is_finite()
            && self.attitude.is_finite()
            && self.body_rates.is_finite()
            && self.motor_speeds.iter().all(|m| m.is_finite())
    }
}

/// Desired rotor speeds (rad/s) for the four motors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotorCommand {
    pub speeds: [f64; 4],
}

impl RotorCommand {
    pub fn new(speeds: [f64; 4]) -> Self {
        RotorCommand { speeds }
    }

    pub fn is_finite(&self) -> bool {
        self.speeds.iter().all(|s| s.is_finite())
    }
}

/// A batch of quadrotor states in structure-of-arrays layout: one contiguous
/// array per state component, so batched kernels stream each field linearly.
#[derive(Clone, Debug, Default)]
pub struct BatchState {
    pub pos_x: Vec<f64>,
    pub pos_y: Vec<f64>,
    pub pos_z: Vec<f64>,
    pub vel_x: Vec<f64>,
    pub vel_y: Vec<f64>,
    pub vel_z: Vec<f64>,
    pub att_w: Vec<f64>,
    pub att_x: Vec<f64>,
    pub att_y: Vec<f64>,
    pub att_z: Vec<f64>,
    pub rate_x: Vec<f64>,
    pub rate_y: Vec<f64>,
    pub rate_z: Vec<f64>,
    pub motor: [Vec<f64>; 4],
}

impl BatchState {
    pub fn with_capacity(n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        BatchState {
            pos_x: v(),
            pos_y: v(),
            pos_z: v(),
            vel_x: v(),
            vel_y: v(),
            vel_z: v(),
            att_w: v(),
            att_x: v(),
            att_y: v(),
            att_z: v(),
            rate_x: v(),
            rate_y: v(),
            rate_z: v(),
            motor: [v(), v(), v(), v()],
        }
    }

    pub fn from_states(states: &[QuadState]) -> Self {
        let mut b = BatchState::with_capacity(states.len());
        for s in states {
            b.push(*s);
        }
        b
    }

    pub fn push(&mut self, s: QuadState) {
        self.pos_x.push(s.pos.x);
        self.pos_y.push(s.pos.y);
        self.pos_z.push(s.pos.z);
        self.vel_x.push(s.vel.x);
        self.vel_y.push(s.vel.y);
        self.vel_z.push(s.vel.z);
        self.att_w.push(s.attitude.w);
        self.att_x.push(s.attitude.x);
        self.att_y.push(s.attitude.y);
        self.att_z.push(s.attitude.z);
        self.rate_x.push(s.body_rates.x);
        self.rate_y.push(s.body_rates.y);
        self.rate_z.push(s.body_rates.z);
        for (k, m) in self.motor.iter_mut().enumerate() {
            m.push(s.motor_speeds[k]);
        }
    }

    pub fn len(&self) -> usize {
        self.pos_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos_x.is_empty()
    }

    pub fn get(&self, i: usize) -> QuadState {
        QuadState {
            pos: Vec3::new(self.pos_x[i], self.pos_y[i], self.pos_z[i]),
            vel: Vec3::new(self.vel_x[i], self.vel_y[i], self.vel_z[i]),
            attitude: Quat::new(self.att_w[i], self.att_x[i], self.att_y[i], self.att_z[i]),
            body_rates: Vec3::new(self.rate_x[i], self.rate_y[i], self.rate_z[i]),
            motor_speeds: [
                self.motor[0][i],
                self.motor[1][i],
                self.motor[2][i],
                self.motor[3][i],
            ],
        }
    }

    pub fn set(&mut self, i: usize, s: QuadState) {
        self.pos_x[i] = s.pos.x;
        self.pos_y[i] = s.pos.y;
        self.pos_z[i] = s.pos.z;
        self.vel_x[i] = s.vel.x;
        self.vel_y[i] = s.vel.y;
        self.vel_z[i] = s.vel.z;
        self.att_w[i] = s.attitude.w;
        self.att_x[i] = s.attitude.x;
        self.att_y[i] = s.attitude.y;
        self.att_z[i] = s.attitude.z;
        self.rate_x[i] = s.body_rates.x;
        self.rate_y[i] = s.body_rates.y;
        self.rate_z[i] = s.body_rates.z;
        for k in 0..4 {
            self.motor[k][i] = s.motor_speeds[k];
        }
    }

    /// Checks that every per-field array has the same length.
    pub fn check_consistent(&self) -> Result<()> {
        let n = self.len();
        let ok = self.pos_y.len() == n
            && self.pos_z.len() == n
            && self.vel_x.len() == n
            && self.vel_y.len() == n
            && self.vel_z.len() == n
            && self.att_w.len() == n
            && self.att_x.len() == n
            && self.att_y.len() == n
            && self.att_z.len() == n
            && self.rate_x.len() == n
            && self.rate_y.len() == n
            && self.rate_z.len() == n
            && self.motor.iter().all(|m| m.len() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(
                "batch state field arrays have differing lengths".into(),
            ))
        }
    }
}
