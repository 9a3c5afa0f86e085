//! Batch/scalar equivalence and throughput checks for the simulator kernels,
//! plus the dual-implementation single-step oracle.

use std::time::Instant;

use nalgebra as na;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taco_core::math::{Quat, Vec3};
use taco_core::sim::{step, step_batch_mut};
use taco_core::state::{BatchState, QuadState, RotorCommand};
use taco_core::QuadParams;

fn random_state(rng: &mut impl Rng) -> QuadState {
    let axis = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    QuadState {
        pos: Vec3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ),
        vel: Vec3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ),
        attitude: Quat::from_axis_angle(axis, rng.random_range(-1.0..1.0)),
        body_rates: Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ),
        motor_speeds: std::array::from_fn(|_| rng.random_range(0.0..2500.0)),
    }
}

fn random_command(rng: &mut impl Rng) -> RotorCommand {
    RotorCommand::new(std::array::from_fn(|_| rng.random_range(0.0..2600.0)))
}

#[test]
fn batch_equals_scalar_loop_over_many_random_steps() {
    let params = QuadParams::crazyflie();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let dt = 0.01;
    // covers several batch sizes including non-multiples of the lane width
    for &batch_size in &[1usize, 3, 8, 33, 256, 1024] {
        let states: Vec<QuadState> = (0..batch_size)
            .map(|_| random_state(&mut rng))
            .collect();
        let commands: Vec<RotorCommand> = (0..batch_size).map(|_| random_command(&mut rng)).collect();

        let mut batch = BatchState::from_states(&states);
        step_batch_mut(&mut batch, &commands, &params, dt).unwrap();

        for i in 0..batch_size {
            let expect = step(&states[i], &commands[i], &params, dt).unwrap();
            let got = batch.get(i);
            assert!(
                (got.pos - expect.pos).norm() <= 1e-12
                    && (got.vel - expect.vel).norm() <= 1e-12
                    && (got.body_rates - expect.body_rates).norm() <= 1e-12,
                "batch {batch_size} element {i}"
            );
            for k in 0..4 {
                assert!((got.motor_speeds[k] - expect.motor_speeds[k]).abs() <= 1e-12);
            }
            let qd = (Quat::new(
                got.attitude.w - expect.attitude.w,
                got.attitude.x - expect.attitude.x,
                got.attitude.y - expect.attitude.y,
                got.attitude.z - expect.attitude.z,
            ))
            .norm();
            assert!(qd <= 1e-12, "batch {batch_size} element {i} attitude");
        }
    }
}

#[test]
fn thousand_random_single_steps_match_batch() {
    let params = QuadParams::crazyflie();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dt = 0.01;
    let n = 1000;
    let states: Vec<QuadState> = (0..n).map(|_| random_state(&mut rng)).collect();
    let commands: Vec<RotorCommand> = (0..n).map(|_| random_command(&mut rng)).collect();
    let mut batch = BatchState::from_states(&states);
    step_batch_mut(&mut batch, &commands, &params, dt).unwrap();
    for i in 0..n {
        let expect = step(&states[i], &commands[i], &params, dt).unwrap();
        let got = batch.get(i);
        assert!((got.pos - expect.pos).norm() <= 1e-12);
        assert!((got.vel - expect.vel).norm() <= 1e-12);
    }
}

/// Independent single-step oracle on a different code path: nalgebra state
/// vector, explicit rotation matrix, generic RK4 over the stacked 13-vector.
/// The motor lag sub-step is reproduced exactly; the rigid-body vector field
/// is the same model written with different machinery.
fn reference_step(s: &QuadState, cmd: &RotorCommand, p: &QuadParams, dt: f64) -> QuadState {
    // motor sub-step
    let decay = (-dt / p.motor_time_constant).exp();
    let mut motors = [0.0; 4];
    for k in 0..4 {
        let target = cmd.speeds[k].clamp(p.motor_speed_min, p.motor_speed_max);
        motors[k] = (target + (s.motor_speeds[k] - target) * decay)
            .clamp(p.motor_speed_min, p.motor_speed_max);
    }
    let thrusts = na::Vector4::from_fn(|i, _| p.thrust_coefficient * motors[i] * motors[i]);
    let alloc = na::Matrix4::from_fn(|i, j| p.allocation_matrix[i][j]);
    let wrench = alloc * thrusts;
    let f = wrench[0];
    let moment = na::Vector3::new(wrench[1], wrench[2], wrench[3]);

    let inertia = na::Vector3::new(p.inertia.x, p.inertia.y, p.inertia.z);
    let deriv = |x: &na::SVector<f64, 13>| -> na::SVector<f64, 13> {
        let vel = na::Vector3::new(x[3], x[4], x[5]);
        let q = na::Vector4::new(x[6], x[7], x[8], x[9]);
        let (w, xq, y, z) = (q[0], q[1], q[2], q[3]);
        // norm²-compensated rotation matrix of the raw quaternion: the exact
        // rotation for any nonzero q (2/‖q‖² replaces the usual factor 2)
        let s = 2.0 / q.norm_squared();
        let r = na::Matrix3::new(
            1.0 - s * (y * y + z * z),
            s * (xq * y - w * z),
            s * (xq * z + w * y),
            s * (xq * y + w * z),
            1.0 - s * (xq * xq + z * z),
            s * (y * z - w * xq),
            s * (xq * z - w * y),
            s * (y * z + w * xq),
            1.0 - s * (xq * xq + y * y),
        );
        let omega = na::Vector3::new(x[10], x[11], x[12]);
        let thrust_world = r * na::Vector3::new(0.0, 0.0, f);
        let acc = thrust_world / p.mass - vel * (p.drag_coefficient / p.mass)
            - na::Vector3::new(0.0, 0.0, p.gravity);
        // quaternion kinematics on the raw (unnormalized) quaternion
        let dq = 0.5
            * na::Vector4::new(
                -q[1] * omega[0] - q[2] * omega[1] - q[3] * omega[2],
                q[0] * omega[0] + q[2] * omega[2] - q[3] * omega[1],
                q[0] * omega[1] - q[1] * omega[2] + q[3] * omega[0],
                q[0] * omega[2] + q[1] * omega[1] - q[2] * omega[0],
            );
        let j_omega = inertia.component_mul(&omega);
        let domega = (moment - omega.cross(&j_omega)).component_div(&inertia);
        let mut dx = na::SVector::<f64, 13>::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&vel);
        dx.fixed_rows_mut::<3>(3).copy_from(&acc);
        dx.fixed_rows_mut::<4>(6).copy_from(&dq);
        dx.fixed_rows_mut::<3>(10).copy_from(&domega);
        dx
    };

    let mut x0 = na::SVector::<f64, 13>::zeros();
    x0.fixed_rows_mut::<3>(0)
        .copy_from(&na::Vector3::new(s.pos.x, s.pos.y, s.pos.z));
    x0.fixed_rows_mut::<3>(3)
        .copy_from(&na::Vector3::new(s.vel.x, s.vel.y, s.vel.z));
    x0.fixed_rows_mut::<4>(6).copy_from(&na::Vector4::new(
        s.attitude.w,
        s.attitude.x,
        s.attitude.y,
        s.attitude.z,
    ));
    x0.fixed_rows_mut::<3>(10).copy_from(&na::Vector3::new(
        s.body_rates.x,
        s.body_rates.y,
        s.body_rates.z,
    ));

    let k1 = deriv(&x0);
    let k2 = deriv(&(x0 + k1 * (dt / 2.0)));
    let k3 = deriv(&(x0 + k2 * (dt / 2.0)));
    let k4 = deriv(&(x0 + k3 * dt));
    let x = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

    let qn = na::Vector4::new(x[6], x[7], x[8], x[9]).normalize();
    QuadState {
        pos: Vec3::new(x[0], x[1], x[2]),
        vel: Vec3::new(x[3], x[4], x[5]),
        attitude: Quat::new(qn[0], qn[1], qn[2], qn[3]),
        body_rates: Vec3::new(x[10], x[11], x[12]),
        motor_speeds: motors,
    }
}

#[test]
fn single_step_matches_independent_reference_integrator() {
    let params = QuadParams::crazyflie();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let s = random_state(&mut rng);
        let cmd = random_command(&mut rng);
        let mine = step(&s, &cmd, &params, 0.01).unwrap();
        let reference = reference_step(&s, &cmd, &params, 0.01);
        assert!((mine.pos - reference.pos).norm() < 1e-12);
        assert!((mine.vel - reference.vel).norm() < 1e-12);
        assert!((mine.body_rates - reference.body_rates).norm() < 1e-12);
        let qd = Quat::new(
            mine.attitude.w - reference.attitude.w,
            mine.attitude.x - reference.attitude.x,
            mine.attitude.y - reference.attitude.y,
            mine.attitude.z - reference.attitude.z,
        )
        .norm();
        assert!(qd < 1e-12);
    }
}

#[test]
fn batched_stepping_is_faster_than_scalar_loop() {
    let params = QuadParams::crazyflie();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b = 1024;
    let dt = 0.01;
    let reps = 200;
    // mild near-hover states so chaining hundreds of steps stays finite
    let wh = params.hover_motor_speed();
    let states: Vec<QuadState> = (0..b)
        .map(|_| {
            let mut s = QuadState::hover_at(
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
                wh,
            );
            s.vel = Vec3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            );
            s
        })
        .collect();
    let commands: Vec<RotorCommand> = (0..b)
        .map(|_| RotorCommand::new(std::array::from_fn(|_| wh * rng.random_range(0.999..1.001))))
        .collect();

    // warmup + scalar loop timing
    let mut scalar_states = states.clone();
    for i in 0..b {
        scalar_states[i] = step(&states[i], &commands[i], &params, dt).unwrap();
    }
    let t0 = Instant::now();
    for _ in 0..reps {
        for i in 0..b {
            scalar_states[i] = step(&scalar_states[i], &commands[i], &params, dt).unwrap();
        }
    }
    let scalar_time = t0.elapsed();

    let mut batch = BatchState::from_states(&states);
    step_batch_mut(&mut batch, &commands, &params, dt).unwrap();
    let t1 = Instant::now();
    for _ in 0..reps {
        step_batch_mut(&mut batch, &commands, &params, dt).unwrap();
    }
    let batch_time = t1.elapsed();

    let scalar_sps = (b * reps) as f64 / scalar_time.as_secs_f64();
    let batch_sps = (b * reps) as f64 / batch_time.as_secs_f64();
    let speedup = batch_sps / scalar_sps;
    println!("scalar: {scalar_sps:.0} steps/s, batch(B={b}): {batch_sps:.0} steps/s, speedup {speedup:.2}x");
    // the full throughput gate lives in the acceptance suite; this guards
    // against regressions that lose the batch advantage outright
    assert!(
        speedup >= 1.5,
        "batched stepping at B={b} lost its advantage over the scalar loop: {speedup:.2}x"
    );
}
