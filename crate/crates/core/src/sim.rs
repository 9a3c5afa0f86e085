//! Quadrotor rigid-body dynamics: single-step integration, batched stepping,
//! and closed-loop rollouts.
//!
//! One step advances the motors by an exact first-order lag sub-step (the lag
//! ODE has a closed-form solution), then integrates the rigid body with RK4
//! holding the rotor wrench constant. The per-element arithmetic is written
//! once, generic over [`Real`], so the scalar path and the 8-lane batch path
//! execute identical operation sequences lane for lane.

use crate::controller::{self, FlatReference, Gains};
use crate::error::{Error, Result};
use crate::math::{Quat, Real, Vec3, W8};
use crate::params::QuadParams;
use crate::spline::TrajWindow;
use crate::state::{BatchState, QuadState, RotorCommand};

/// Per-step scalar constants derived from `(params, dt)`. The kernels splat
/// these on use; for the wide path that compiles to single broadcast loads
/// instead of keeping every constant live in a vector register.
struct StepConsts {
    motor_decay: f64,
    motor_min: f64,
    motor_max: f64,
    thrust_coeff: f64,
    /// Rows of the allocation (mixing) matrix.
    mix: [[f64; 4]; 4],
    inv_mass: f64,
    drag_over_mass: f64,
    gravity: f64,
    inertia: [f64; 3],
    inv_inertia: [f64; 3],
    half_dt: f64,
    dt: f64,
    sixth_dt: f64,
}

impl StepConsts {
    fn new(params: &QuadParams, dt: f64) -> Self {
        StepConsts {
            motor_decay: (-dt / params.motor_time_constant).exp(),
            motor_min: params.motor_speed_min,
            motor_max: params.motor_speed_max,
            thrust_coeff: params.thrust_coefficient,
            mix: params.allocation_matrix,
            inv_mass: 1.0 / params.mass,
            drag_over_mass: params.drag_coefficient / params.mass,
            gravity: params.gravity,
            inertia: params.inertia.to_array(),
            inv_inertia: [
                1.0 / params.inertia.x,
                1.0 / params.inertia.y,
                1.0 / params.inertia.z,
            ],
            half_dt: 0.5 * dt,
            dt,
            sixth_dt: dt / 6.0,
        }
    }
}

/// Lane-generic quadrotor state used inside the step kernel.
#[derive(Clone, Copy)]
struct Lane<R> {
    pos: Vec3<R>,
    vel: Vec3<R>,
    att: Quat<R>,
    rates: Vec3<R>,
    motors: [R; 4],
}

#[derive(Clone, Copy)]
struct LaneDeriv<R> {
    d_pos: Vec3<R>,
    d_vel: Vec3<R>,
    d_att: Quat<R>,
    d_rates: Vec3<R>,
}

/// Rigid-body vector field with the rotor wrench held fixed.
///
/// The thrust rotation is norm-compensated so the field is well defined for
/// the slightly off-unit quaternions produced by intermediate RK4 stages.
#[inline(always)]
fn deriv<R: Real>(s: &Lane<R>, thrust: R, moment: Vec3<R>, c: &StepConsts) -> LaneDeriv<R> {
    let thrust_world = s.att.rotate_z_scaled(thrust);
    let inv_mass = R::splat(c.inv_mass);
    let drag = R::splat(c.drag_over_mass);
    let d_vel = Vec3::new(
        thrust_world.x.mul_add(inv_mass, -(s.vel.x * drag)),
        thrust_world.y.mul_add(inv_mass, -(s.vel.y * drag)),
        thrust_world.z.mul_add(inv_mass, -s.vel.z.mul_add(drag, R::splat(c.gravity))),
    );
    let inertia = Vec3::splat3(c.inertia);
    let j_omega = inertia.mul_elem(s.rates);
    let coriolis = s.rates.cross(j_omega);
    let d_rates = (moment - coriolis).mul_elem(Vec3::splat3(c.inv_inertia));
    LaneDeriv {
        d_pos: s.vel,
        d_vel,
        d_att: s.att.rate(s.rates),
        d_rates,
    }
}

#[inline(always)]
fn advance<R: Real>(s: &Lane<R>, d: &LaneDeriv<R>, h: R) -> Lane<R> {
    Lane {
        pos: d.d_pos.fma_scale(h, s.pos),
        vel: d.d_vel.fma_scale(h, s.vel),
        att: Quat::new(
            d.d_att.w.mul_add(h, s.att.w),
            d.d_att.x.mul_add(h, s.att.x),
            d.d_att.y.mul_add(h, s.att.y),
            d.d_att.z.mul_add(h, s.att.z),
        ),
        rates: d.d_rates.fma_scale(h, s.rates),
        motors: s.motors,
    }
}

#[inline(always)]
fn accumulate<R: Real>(acc: &mut LaneDeriv<R>, k: &LaneDeriv<R>, w: R) {
    acc.d_pos = k.d_pos.fma_scale(w, acc.d_pos);
    acc.d_vel = k.d_vel.fma_scale(w, acc.d_vel);
    acc.d_att = Quat::new(
        k.d_att.w.mul_add(w, acc.d_att.w),
        k.d_att.x.mul_add(w, acc.d_att.x),
        k.d_att.y.mul_add(w, acc.d_att.y),
        k.d_att.z.mul_add(w, acc.d_att.z),
    );
    acc.d_rates = k.d_rates.fma_scale(w, acc.d_rates);
}

/// One simulation step for a single lane: exact motor lag, then RK4, then
/// quaternion renormalization. Stage derivatives fold into a running
/// accumulator to keep the live register set small in the wide instantiation.
#[inline(always)]
fn step_core<R: Real>(s: Lane<R>, cmd: [R; 4], c: &StepConsts) -> Lane<R> {
    // Motor lag has the closed-form solution ω(t+dt) = cmd + (ω - cmd) e^{-dt/τ}.
    let motor_min = R::splat(c.motor_min);
    let motor_max = R::splat(c.motor_max);
    let decay = R::splat(c.motor_decay);
    let mut motors = [R::zero(); 4];
    for k in 0..4 {
        let target = cmd[k].max(motor_min).min(motor_max);
        let next = target + (s.motors[k] - target) * decay;
        motors[k] = next.max(motor_min).min(motor_max);
    }

    let kf = R::splat(c.thrust_coeff);
    let mut thrusts = [R::zero(); 4];
    for k in 0..4 {
        thrusts[k] = kf * motors[k] * motors[k];
    }
    let mut wrench = [R::zero(); 4];
    for (i, w) in wrench.iter_mut().enumerate() {
        let t01 = R::splat(c.mix[i][0]).mul_add(thrusts[0], R::splat(c.mix[i][1]) * thrusts[1]);
        let t23 = R::splat(c.mix[i][2]).mul_add(thrusts[2], R::splat(c.mix[i][3]) * thrusts[3]);
        *w = t01 + t23;
    }
    let thrust = wrench[0];
    let moment = Vec3::new(wrench[1], wrench[2], wrench[3]);

    let s0 = Lane { motors, ..s };
    let two = R::splat(2.0);
    let half_dt = R::splat(c.half_dt);

    let k1 = deriv(&s0, thrust, moment, c);
    let s1 = advance(&s0, &k1, half_dt);
    let mut acc = k1;
    let k2 = deriv(&s1, thrust, moment, c);
    let s2 = advance(&s0, &k2, half_dt);
    accumulate(&mut acc, &k2, two);
    let k3 = deriv(&s2, thrust, moment, c);
    let s3 = advance(&s0, &k3, R::splat(c.dt));
    accumulate(&mut acc, &k3, two);
    let k4 = deriv(&s3, thrust, moment, c);
    accumulate(&mut acc, &k4, R::one());

    let mut out = advance(&s0, &acc, R::splat(c.sixth_dt));
    out.att = out.att.normalize();
    out
}

/// Advance one quadrotor by `dt` under the given rotor-speed command.
pub fn step(state: &QuadState, command: &RotorCommand, params: &QuadParams, dt: f64) -> Result<QuadState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::Diverged("non-finite state".into()));
    }
    if !command.is_finite() {
        return Err(Error::Diverged("non-finite rotor command".into()));
    }
    let c = StepConsts::new(params, dt);
    let lane = Lane {
        pos: state.pos,
        vel: state.vel,
        att: state.attitude,
        rates: state.body_rates,
        motors: state.motor_speeds,
    };
    let out = step_core(lane, command.speeds, &c);
    Ok(QuadState {
        pos: out.pos,
        vel: out.vel,
        attitude: out.att,
        body_rates: out.rates,
        motor_speeds: out.motors,
    })
}

/// Branch-free finiteness scan: an f64 is non-finite iff its exponent bits
/// are all ones. Eight independent OR accumulators keep the loop wide,
/// unlike short-circuiting `is_finite` chains.
fn all_finite_slice(v: &[f64]) -> bool {
    const EXP_MASK: u64 = 0x7ff0_0000_0000_0000;
    let mut acc = [0u64; 8];
    let mut chunks = v.chunks_exact(8);
    for c in chunks.by_ref() {
        for i in 0..8 {
            // saturates at EXP_MASK once any lane saw a full exponent
            acc[i] |= u64::from((c[i].to_bits() & EXP_MASK) == EXP_MASK);
        }
    }
    let mut bad = 0u64;
    for a in acc {
        bad |= a;
    }
    for x in chunks.remainder() {
        bad |= u64::from((x.to_bits() & EXP_MASK) == EXP_MASK);
    }
    bad == 0
}

fn all_finite_batch(states: &BatchState, commands: &[RotorCommand]) -> bool {
    let arrays: [&[f64]; 13] = [
        &states.pos_x,
        &states.pos_y,
        &states.pos_z,
        &states.vel_x,
        &states.vel_y,
        &states.vel_z,
        &states.att_w,
        &states.att_x,
        &states.att_y,
        &states.att_z,
        &states.rate_x,
        &states.rate_y,
        &states.rate_z,
    ];
    arrays.iter().all(|a| all_finite_slice(a))
        && states.motor.iter().all(|m| all_finite_slice(m))
        && commands.iter().all(|c| c.is_finite())
}

macro_rules! gather8 {
    ($arr:expr, $i:expr) => {
        W8($arr[$i..$i + 8].try_into().unwrap())
    };
}

/// Advance a whole batch in place. Element `i` of the result is identical to
/// `step(states[i], commands[i], ..)` up to the last bit: both paths run the
/// same generic kernel.
pub fn step_batch_mut(
    states: &mut BatchState,
    commands: &[RotorCommand],
    params: &QuadParams,
    dt: f64,
) -> Result<()> {
    states.check_consistent()?;
    if commands.len() != states.len() {
        return Err(Error::ShapeMismatch(format!(
            "batch of {} states but {} commands",
            states.len(),
            commands.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
    }
    let n = states.len();
    if !all_finite_batch(states, commands) {
        // locate the offender only on the slow path
        for i in 0..n {
            if !states.get(i).is_finite() {
                return Err(Error::Diverged(format!("non-finite state at batch index {i}")));
            }
            if !commands[i].is_finite() {
                return Err(Error::Diverged(format!("non-finite command at batch index {i}")));
            }
        }
    }

    let consts = StepConsts::new(params, dt);

    macro_rules! gather_chunk {
        ($i:expr) => {{
            let i = $i;
            let lane = Lane {
                pos: Vec3::new(
                    gather8!(states.pos_x, i),
                    gather8!(states.pos_y, i),
                    gather8!(states.pos_z, i),
                ),
                vel: Vec3::new(
                    gather8!(states.vel_x, i),
                    gather8!(states.vel_y, i),
                    gather8!(states.vel_z, i),
                ),
                att: Quat::new(
                    gather8!(states.att_w, i),
                    gather8!(states.att_x, i),
                    gather8!(states.att_y, i),
                    gather8!(states.att_z, i),
                ),
                rates: Vec3::new(
                    gather8!(states.rate_x, i),
                    gather8!(states.rate_y, i),
                    gather8!(states.rate_z, i),
                ),
                motors: [
                    gather8!(states.motor[0], i),
                    gather8!(states.motor[1], i),
                    gather8!(states.motor[2], i),
                    gather8!(states.motor[3], i),
                ],
            };
            let mut cmd = [W8([0.0; 8]); 4];
            for k in 0..4 {
                for j in 0..8 {
                    cmd[k].0[j] = commands[i + j].speeds[k];
                }
            }
            (lane, cmd)
        }};
    }

    macro_rules! scatter_chunk {
        ($out:expr, $i:expr) => {{
            let out = $out;
            let i = $i;
            states.pos_x[i..i + 8].copy_from_slice(&out.pos.x.0);
            states.pos_y[i..i + 8].copy_from_slice(&out.pos.y.0);
            states.pos_z[i..i + 8].copy_from_slice(&out.pos.z.0);
            states.vel_x[i..i + 8].copy_from_slice(&out.vel.x.0);
            states.vel_y[i..i + 8].copy_from_slice(&out.vel.y.0);
            states.vel_z[i..i + 8].copy_from_slice(&out.vel.z.0);
            states.att_w[i..i + 8].copy_from_slice(&out.att.w.0);
            states.att_x[i..i + 8].copy_from_slice(&out.att.x.0);
            states.att_y[i..i + 8].copy_from_slice(&out.att.y.0);
            states.att_z[i..i + 8].copy_from_slice(&out.att.z.0);
            states.rate_x[i..i + 8].copy_from_slice(&out.rates.x.0);
            states.rate_y[i..i + 8].copy_from_slice(&out.rates.y.0);
            states.rate_z[i..i + 8].copy_from_slice(&out.rates.z.0);
            for k in 0..4 {
                states.motor[k][i..i + 8].copy_from_slice(&out.motors[k].0);
            }
        }};
    }

    let main = n - n % 8;
    let mut i = 0;
    while i < main {
        let (lane, cmd) = gather_chunk!(i);
        let out = step_core(lane, cmd, &consts);
        scatter_chunk!(out, i);
        i += 8;
    }

    // Tail shorter than one vector width runs through the scalar kernel.
    for j in main..n {
        let s = states.get(j);
        let lane = Lane {
            pos: s.pos,
            vel: s.vel,
            att: s.attitude,
            rates: s.body_rates,
            motors: s.motor_speeds,
        };
        let out = step_core(lane, commands[j].speeds, &consts);
        states.set(
            j,
            QuadState {
                pos: out.pos,
                vel: out.vel,
                attitude: out.att,
                body_rates: out.rates,
                motor_speeds: out.motors,
            },
        );
    }
    Ok(())
}

/// Pure variant of [`step_batch_mut`] returning a fresh batch.
pub fn step_batch(
    states: &BatchState,
    commands: &[RotorCommand],
    params: &QuadParams,
    dt: f64,
) -> Result<BatchState> {
    let mut out = states.clone();
    step_batch_mut(&mut out, commands, params, dt)?;
    Ok(out)
}

/// Closed-loop log produced by [`rollout`].
#[derive(Clone, Debug)]
pub struct StateLog {
    pub dt: f64,
    pub initial: QuadState,
    /// State after each step; `states.len()` equals the number of steps taken.
    pub states: Vec<QuadState>,
    /// Commanded collective thrust (N) and body moment (N·m) at each step.
    pub wrench: Vec<(f64, Vec3)>,
    pub diverged: bool,
}

impl StateLog {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Roll out the closed loop (geometric controller + dynamics) over a
/// trajectory window. The log is truncated and flagged if the controller or
/// dynamics produce non-finite values.
pub fn rollout(
    initial: &QuadState,
    gains: &Gains,
    window: &TrajWindow<'_>,
    params: &QuadParams,
    dt: f64,
) -> StateLog {
    let steps = window.len();
    let mut log = StateLog {
        dt,
        initial: *initial,
        states: Vec::with_capacity(steps),
        wrench: Vec::with_capacity(steps),
        diverged: false,
    };
    let mut state = *initial;
    for i in 0..steps {
        let r: FlatReference = window.reference(i);
        let (thrust, moment) = controller::compute_wrench(&state, &r, gains, params);
        if !thrust.is_finite() || !moment.is_finite() {
            log.diverged = true;
            break;
        }
        let cmd = controller::allocate(thrust, moment, params);
        state = match step(&state, &cmd, params, dt) {
            Ok(s) => s,
            Err(_) => {
                log.diverged = true;
                break;
            }
        };
        if !state.is_finite() {
            log.diverged = true;
            break;
        }
        log.states.push(state);
        log.wrench.push((thrust, moment));
    }
    log
}
