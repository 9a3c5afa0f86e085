//! SE(3) geometric tracking controller and control allocation.
//!
//! The controller computes a collective thrust along the current body z axis
//! plus a body moment from attitude/rate errors with gyroscopic and reference
//! feedforward terms. The desired attitude tilts toward the total desired
//! force (feedback included); the desired body rates come from
//! differentiating the reference flat outputs, with snap taken as zero.

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::params::QuadParams;
use crate::state::{QuadState, RotorCommand};

/// The 8 controller parameters: per-axis position and velocity gains plus
/// scalar attitude and rate gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains {
    pub k_pos: Vec3,
    pub k_vel: Vec3,
    pub k_att: f64,
    pub k_rate: f64,
}

impl Gains {
    /// Flattened layout `[k_p^x, k_p^y, k_p^z, k_v^x, k_v^y, k_v^z, k_R, k_Ω]`.
    pub fn from_array(g: [f64; 8]) -> Self {
        Gains {
            k_pos: Vec3::new(g[0], g[1], g[2]),
            k_vel: Vec3::new(g[3], g[4], g[5]),
            k_att: g[6],
            k_rate: g[7],
        }
    }

    pub fn to_array(self) -> [f64; 8] {
        [
            self.k_pos.x, self.k_pos.y, self.k_pos.z, self.k_vel.x, self.k_vel.y, self.k_vel.z,
            self.k_att, self.k_rate,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|g| *g >= 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("gains must be finite and >= 0: {self:?}")))
        }
    }

    /// Hand-tuned static gains used as the fixed baseline: stable hover and
    /// a well-damped step response on the CrazyFlie-like parameter set.
    pub fn nominal() -> Self {
        Gains::from_array([0.5, 0.5, 0.6, 0.2, 0.2, 0.25, 0.03, 0.0012])
    }

    /// Search-space box for gain sampling and tuning. Derived from a coarse
    /// per-dimension hover-stability sweep on the CrazyFlie-like parameters
    /// (holding the other gains at nominal), widened 2x and rounded; see the
    /// gain_sweep test. Corners of the box are intentionally unstable.
    pub fn default_bounds() -> (Gains, Gains) {
        (
            Gains::from_array([0.01, 0.01, 0.01, 0.004, 0.004, 0.004, 0.0013, 0.0004]),
            Gains::from_array([8.0, 8.0, 8.0, 3.0, 3.0, 3.0, 0.09, 0.02]),
        )
    }
}

/// Reference point on a differentially flat trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatReference {
    pub pos: Vec3,
    pub vel: Vec3,
    pub acc: Vec3,
    pub jerk: Vec3,
    pub yaw: f64,
}

impl FlatReference {
    pub fn stationary(pos: Vec3) -> Self {
        FlatReference {
            pos,
            vel: Vec3::zero(),
            acc: Vec3::zero(),
            jerk: Vec3::zero(),
            yaw: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.is_finite()
            && self.vel.is_finite()
            && self.acc.is_finite()
            && self.jerk.is_finite()
            && self.yaw.is_finite()
    }
}

const DEGENERATE_FORCE: f64 = 1e-9;

/// Value, first and second time derivative of the unit vector along `f`.
fn unit_derivs(f: Vec3, df: Vec3, ddf: Vec3) -> (Vec3, Vec3, Vec3) {
    let n = f.norm();
    let u = f.scale(1.0 / n);
    let dn = u.dot(df);
    let du = (df - u.scale(dn)).scale(1.0 / n);
    let ddn = (df.dot(df) + f.dot(ddf) - dn * dn) / n;
    let ddu = (ddf - du.scale(2.0 * dn) - u.scale(ddn)).scale(1.0 / n);
    (u, du, ddu)
}

/// Desired rotation and its first two derivatives from a thrust direction
/// curve `(b3, ḃ3, b̈3)` and a fixed yaw.
fn frame_derivs(
    b3: Vec3,
    db3: Vec3,
    ddb3: Vec3,
    yaw: f64,
) -> (Mat3, Mat3, Mat3) {
    let xc = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    // w = b3 × xc, differentiated with xc constant (yaw is held fixed)
    let w = b3.cross(xc);
    let dw = db3.cross(xc);
    let ddw = ddb3.cross(xc);
    let (b2, db2, ddb2) = if w.norm() > DEGENERATE_FORCE {
        unit_derivs(w, dw, ddw)
    } else {
        // thrust axis parallel to the yaw direction; hold a fixed lateral axis
        (Vec3::new(0.0, 1.0, 0.0), Vec3::zero(), Vec3::zero())
    };
    let b1 = b2.cross(b3);
    let db1 = db2.cross(b3) + b2.cross(db3);
    let ddb1 = ddb2.cross(b3) + db2.cross(db3).scale(2.0) + b2.cross(ddb3);
    (
        Mat3::from_columns(b1, b2, b3),
        Mat3::from_columns(db1, db2, db3),
        Mat3::from_columns(ddb1, ddb2, ddb3),
    )
}

fn vee_skew_part(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m.m[2][1] - m.m[1][2]),
        0.5 * (m.m[0][2] - m.m[2][0]),
        0.5 * (m.m[1][0] - m.m[0][1]),
    )
}

/// Map a flat reference to the desired attitude, body rates, and body-rate
/// derivative. Snap is taken as zero, so `Ω̇_d` is exact for references with
/// vanishing fourth derivative and a small feedforward approximation
/// otherwise.
pub fn flat_to_attitude(r: &FlatReference, params: &QuadParams) -> Result<(Mat3, Vec3, Vec3)> {
    let force = (r.acc + Vec3::new(0.0, 0.0, params.gravity)).scale(params.mass);
    if force.norm() <= DEGENERATE_FORCE {
        return Err(Error::InvalidParams(
            "free-fall reference: desired force direction is degenerate".into(),
        ));
    }
    let dforce = r.jerk.scale(params.mass);
    let ddforce = Vec3::zero();
    let (b3, db3, ddb3) = unit_derivs(force, dforce, ddforce);
    let (rd, drd, ddrd) = frame_derivs(b3, db3, ddb3, r.yaw);

    // Ω̂_d = R_dᵀ Ṙ_d and its derivative Ṙ_dᵀ Ṙ_d + R_dᵀ R̈_d
    let omega_hat = rd.transpose().mul_mat(&drd);
    let omega_d = vee_skew_part(&omega_hat);
    let domega_hat_a = drd.transpose().mul_mat(&drd);
    let domega_hat_b = rd.transpose().mul_mat(&ddrd);
    let sum = Mat3 {
        m: [
            [
                domega_hat_a.m[0][0] + domega_hat_b.m[0][0],
                domega_hat_a.m[0][1] + domega_hat_b.m[0][1],
                domega_hat_a.m[0][2] + domega_hat_b.m[0][2],
            ],
            [
                domega_hat_a.m[1][0] + domega_hat_b.m[1][0],
                domega_hat_a.m[1][1] + domega_hat_b.m[1][1],
                domega_hat_a.m[1][2] + domega_hat_b.m[1][2],
            ],
            [
                domega_hat_a.m[2][0] + domega_hat_b.m[2][0],
                domega_hat_a.m[2][1] + domega_hat_b.m[2][1],
                domega_hat_a.m[2][2] + domega_hat_b.m[2][2],
            ],
        ],
    };
    let domega_d = vee_skew_part(&sum);
    Ok((rd, omega_d, domega_d))
}

/// Commanded collective thrust (N) and body moment (N·m).
///
/// The desired force is `-k_p∘e_p - k_v∘e_v + m g e₃ + m p̈_d` with
/// `e_p = p - p_d`, which yields `f = m g` at hover. If the desired force is
/// degenerate the thrust direction falls back to the current body z axis.
pub fn compute_wrench(
    state: &QuadState,
    reference: &FlatReference,
    gains: &Gains,
    params: &QuadParams,
) -> (f64, Vec3) {
    let e_p = state.pos - reference.pos;
    let e_v = state.vel - reference.vel;
    let f_des = -gains.k_pos.mul_elem(e_p) - gains.k_vel.mul_elem(e_v)
        + Vec3::new(0.0, 0.0, params.mass * params.gravity)
        + reference.acc.scale(params.mass);

    let r = state.attitude.to_mat();
    let body_z = r.column(2);
    let thrust = f_des.dot(body_z);

    let b3d = f_des.try_normalize(DEGENERATE_FORCE).unwrap_or(body_z);
    let (rd, _, _) = frame_derivs(b3d, Vec3::zero(), Vec3::zero(), reference.yaw);

    // Reference-only feedforward rates; zero in the degenerate case.
    let (omega_d, domega_d) = match flat_to_attitude(reference, params) {
        Ok((_, w, dw)) => (w, dw),
        Err(_) => (Vec3::zero(), Vec3::zero()),
    };

    // e_R = ½(R_dᵀR − RᵀR_d)^∨; vee_skew_part applied to R_dᵀR computes exactly that
    let rt_rd = r.transpose().mul_mat(&rd);
    let e_att = vee_skew_part(&rt_rd.transpose());
    let omega_d_body = rt_rd.mul_vec(omega_d);
    let e_rate = state.body_rates - omega_d_body;

    let j_omega = params.inertia.mul_elem(state.body_rates);
    let gyro = state.body_rates.cross(j_omega);
    let ff = state.body_rates.cross(omega_d_body) - rt_rd.mul_vec(domega_d);
    let moment =
        -e_att.scale(gains.k_att) - e_rate.scale(gains.k_rate) + gyro - params.inertia.mul_elem(ff);

    (thrust, moment)
}

/// Batched controller: element `i` equals `compute_wrench` on the `i`-th
/// state/reference pair.
pub fn compute_wrench_batch(
    states: &[QuadState],
    references: &[FlatReference],
    gains: &Gains,
    params: &QuadParams,
) -> Result<Vec<(f64, Vec3)>> {
    if states.len() != references.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} states vs {} references",
            states.len(),
            references.len()
        )));
    }
    Ok(states
        .iter()
        .zip(references)
        .map(|(s, r)| compute_wrench(s, r, gains, params))
        .collect())
}

/// Convert a wrench to rotor-speed commands: invert the allocation matrix,
/// clamp thrusts to what the rotors can produce, then map to speeds.
pub fn allocate(thrust: f64, moment: Vec3, params: &QuadParams) -> RotorCommand {
    let inv = params.allocation_inverse();
    let w = [thrust, moment.x, moment.y, moment.z];
    let t_max = params.max_rotor_thrust();
    let mut speeds = [0.0; 4];
    for (i, out) in speeds.iter_mut().enumerate() {
        let mut t = 0.0;
        for (j, wj) in w.iter().enumerate() {
            t += inv[i][j] * wj;
        }
        let t = t.clamp(0.0, t_max);
        *out = (t / params.thrust_coefficient)
            .sqrt()
            .clamp(params.motor_speed_min, params.motor_speed_max);
    }
    RotorCommand::new(speeds)
}

/// Wrench actually produced by rotor speeds, through the forward mixing
/// matrix. Used to check allocation round trips and saturation effects.
pub fn mix_forward(command: &RotorCommand, params: &QuadParams) -> (f64, Vec3) {
    let mut thrusts = [0.0; 4];
    for (t, w) in thrusts.iter_mut().zip(command.speeds) {
        *t = params.thrust_coefficient * w * w;
    }
    let a = &params.allocation_matrix;
    let mut wrench = [0.0; 4];
    for (i, out) in wrench.iter_mut().enumerate() {
        for (j, t) in thrusts.iter().enumerate() {
            *out += a[i][j] * t;
        }
    }
    (wrench[0], Vec3::new(wrench[1], wrench[2], wrench[3]))
}
