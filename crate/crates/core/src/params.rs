//! Quadrotor physical parameters and the `key = value` parameter file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Physical parameters of the simulated quadrotor.
///
/// The allocation matrix maps per-rotor thrusts `[t0..t3]` to the collective
/// wrench `[f, Mx, My, Mz]`; its inverse is what converts a commanded wrench
/// back into rotor thrusts.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadParams {
    /// Mass (kg).
    pub mass: f64,
    /// Diagonal of the inertia matrix (kg·m²).
    pub inertia: Vec3,
    /// Distance from center to each rotor (m).
    pub arm_length: f64,
    /// Thrust coefficient k_f (N/(rad/s)²): thrust_i = k_f ω_i².
    pub thrust_coefficient: f64,
    /// Torque coefficient k_m (N·m/(rad/s)²): drag torque_i = k_m ω_i².
    pub torque_coefficient: f64,
    /// Motor first-order lag time constant (s).
    pub motor_time_constant: f64,
    /// Motor speed limits (rad/s).
    pub motor_speed_min: f64,
    pub motor_speed_max: f64,
    /// Wrench-from-thrusts mixing matrix (row-major).
    pub allocation_matrix: [[f64; 4]; 4],
    /// Linear drag coefficient (N/(m/s)).
    pub drag_coefficient: f64,
    /// Gravitational acceleration (m/s², positive down).
    pub gravity: f64,
}

impl QuadParams {
    /// CrazyFlie 2.0-like defaults, from the publicly documented parameter
    /// set for that platform (mass/arm/inertia/k_f/k_m) plus motor-lag and
    /// drag magnitudes documented in `configs/crazyflie.params`.
    pub fn crazyflie() -> Self {
        let arm_length = 0.046;
        let thrust_coefficient = 2.3e-8;
        let torque_coefficient = 7.8e-10;
        QuadParams {
            mass: 0.03,
            inertia: Vec3::new(1.4e-5, 1.4e-5, 2.2e-5),
            arm_length,
            thrust_coefficient,
            torque_coefficient,
            motor_time_constant: 0.02,
            motor_speed_min: 0.0,
            motor_speed_max: 2500.0,
            allocation_matrix: x_config_allocation(
                arm_length,
                torque_coefficient / thrust_coefficient,
            ),
            drag_coefficient: 4.0e-3,
            gravity: 9.81,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParams(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.inertia.x > 0.0 && self.inertia.y > 0.0 && self.inertia.z > 0.0) {
            return Err(Error::InvalidParams("inertia diagonal entries must be > 0".into()));
        }
        if !(self.motor_speed_min >= 0.0 && self.motor_speed_max > self.motor_speed_min) {
            return Err(Error::InvalidParams(format!(
                "motor speed limits must satisfy max > min >= 0, got [{}, {}]",
                self.motor_speed_min, self.motor_speed_max
            )));
        }
        if !(self.thrust_coefficient > 0.0) {
            return Err(Error::InvalidParams("thrust_coefficient must be > 0".into()));
        }
        if !(self.motor_time_constant > 0.0) {
            return Err(Error::InvalidParams("motor_time_constant must be > 0".into()));
        }
        invert4(&self.allocation_matrix)
            .ok_or_else(|| Error::InvalidParams("allocation_matrix is singular".into()))?;
        Ok(())
    }

    /// Inverse of the allocation matrix, mapping `[f, Mx, My, Mz]` to
    /// per-rotor thrusts.
    pub fn allocation_inverse(&self) -> [[f64; 4]; 4] {
        // validate() guarantees invertibility for any params in circulation
        invert4(&self.allocation_matrix).expect("allocation matrix must be invertible")
    }

    /// Motor speed that makes four rotors carry the weight exactly.
    pub fn hover_motor_speed(&self) -> f64 {
        (self.mass * self.gravity / (4.0 * self.thrust_coefficient)).sqrt()
    }

    /// Largest thrust a single rotor can produce.
    pub fn max_rotor_thrust(&self) -> f64 {
        self.thrust_coefficient * self.motor_speed_max * self.motor_speed_max
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|detail| Error::format(path, detail))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut p = QuadParams::crazyflie();
        let mut allocation_given = false;
        let mut arm_or_torque_changed = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let scalar = || -> std::result::Result<f64, String> {
                value
                    .parse::<f64>()
                    .map_err(|_| format!("line {}: bad number `{}`", lineno + 1, value))
            };
            match key {
                "mass" => p.mass = scalar()?,
                "inertia" => p.inertia = Vec3::from_array(parse_floats::<3>(value, lineno)?),
                "arm_length" => {
                    p.arm_length = scalar()?;
                    arm_or_torque_changed = true;
                }
                "thrust_coefficient" => {
                    p.thrust_coefficient = scalar()?;
                    arm_or_torque_changed = true;
                }
                "torque_coefficient" => {
                    p.torque_coefficient = scalar()?;
                    arm_or_torque_changed = true;
                }
                "motor_time_constant" => p.motor_time_constant = scalar()?,
                "motor_speed_min" => p.motor_speed_min = scalar()?,
                "motor_speed_max" => p.motor_speed_max = scalar()?,
                "drag_coefficient" => p.drag_coefficient = scalar()?,
                "gravity" => p.gravity = scalar()?,
                "allocation_matrix" => {
                    let vals = parse_floats::<16>(value, lineno)?;
                    for i in 0..4 {
                        for j in 0..4 {
                            p.allocation_matrix[i][j] = vals[4 * i + j];
                        }
                    }
                    allocation_given = true;
                }
                other => return Err(format!("line {}: unknown key `{}`", lineno + 1, other)),
            }
        }
        if !allocation_given && arm_or_torque_changed {
            p.allocation_matrix = x_config_allocation(
                p.arm_length,
                p.torque_coefficient / p.thrust_coefficient,
            );
        }
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        s.push_str("# Quadrotor physical parameters\n");
        s.push_str(&format!("mass = {:?}\n", self.mass));
        s.push_str(&format!(
            "inertia = {:?} {:?} {:?}\n",
            self.inertia.x, self.inertia.y, self.inertia.z
        ));
        s.push_str(&format!("arm_length = {:?}\n", self.arm_length));
        s.push_str(&format!("thrust_coefficient = {:?}\n", self.thrust_coefficient));
        s.push_str(&format!("torque_coefficient = {:?}\n", self.torque_coefficient));
        s.push_str(&format!("motor_time_constant = {:?}\n", self.motor_time_constant));
        s.push_str(&format!("motor_speed_min = {:?}\n", self.motor_speed_min));
        s.push_str(&format!("motor_speed_max = {:?}\n", self.motor_speed_max));
        s.push_str(&format!("drag_coefficient = {:?}\n", self.drag_coefficient));
        s.push_str(&format!("gravity = {:?}\n", self.gravity));
        s.push_str("allocation_matrix =");
        for row in &self.allocation_matrix {
            for v in row {
                s.push_str(&format!(" {:?}", v));
            }
        }
        s.push('\n');
        s
    }
}

fn parse_floats<const N: usize>(value: &str, lineno: usize) -> std::result::Result<[f64; N], String> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != N {
        return Err(format!(
            "line {}: expected {} numbers, got {}",
            lineno + 1,
            N,
            parts.len()
        ));
    }
    let mut out = [0.0; N];
    for (i, part) in parts.iter().enumerate() {
        out[i] = part
            .parse::<f64>()
            .map_err(|_| format!("line {}: bad number `{}`", lineno + 1, part))?;
    }
    Ok(out)
}

/// Mixing matrix for an X configuration.
///
/// Motor layout (x forward, y left, z up), with l = arm/√2:
/// m0 front-right (+l,−l) CCW, m1 back-left (−l,+l) CCW,
/// m2 front-left (+l,+l) CW, m3 back-right (−l,−l) CW.
/// `c` is the torque-per-thrust ratio k_m/k_f.
pub fn x_config_allocation(arm_length: f64, c: f64) -> [[f64; 4]; 4] {
    let l = arm_length / std::f64::consts::SQRT_2;
    [
        [1.0, 1.0, 1.0, 1.0],
        [-l, l, l, -l],
        [-l, l, -l, l],
        [-c, -c, c, c],
    ]
}

/// Gauss-Jordan inverse of a 4×4 matrix with partial pivoting.
fn invert4(m: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut a = *m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..4 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for row in 0..4 {
            if row != col {
                let f = a[row][col];
                for j in 0..4 {
                    a[row][j] -= f * a[col][j];
                    inv[row][j] -= f * inv[col][j];
                }
            }
        }
    }
    Some(inv)
}
