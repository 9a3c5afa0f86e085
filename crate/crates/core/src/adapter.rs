//! Trajectory adaptation: gradient descent on the nullspace coordinates of a
//! spline through the predictor. Every iterate satisfies the keypoint and
//! smoothness constraints by construction, because the update never leaves
//! the constraint nullspace.

use nalgebra::{DMatrix, DVector};

use crate::controller::Gains;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::metrics::CostWeights;
use crate::mlp::Dtype;
use crate::params::QuadParams;
use crate::predictor::{MlpModel, COARSE_SAMPLES, COARSE_STRIDE, HORIZON_STEPS, INPUT_DIM_FULL};
use crate::spline::{SplineTrajectory, Trajectory};
use crate::state::QuadState;
use crate::tuner::{optimize_gains, run_on_sampled, GainPolicy, RunResult, SearchConfig};

/// Gradient-descent settings for one adaptation window.
#[derive(Clone, Debug)]
pub struct AdaptConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Gradient clipped to this norm before each update.
    pub clip_norm: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            steps: 50,
            learning_rate: 1e-2,
            clip_norm: 1.0,
        }
    }
}

/// Bookkeeping for one adapted window.
#[derive(Clone, Debug)]
pub struct AdaptInfo {
    pub cost_before: f64,
    pub cost_after: f64,
    pub phi_norm: f64,
    /// Set when the trajectory has no nullspace and adaptation was a no-op.
    pub no_nullspace: bool,
}

/// Coarse lookahead sample times for a window starting at `t_start`.
fn sample_times(t_start: f64, dt: f64) -> [f64; COARSE_SAMPLES] {
    std::array::from_fn(|k| t_start + (k * COARSE_STRIDE) as f64 * dt)
}

/// Encode the predictor input for a spline-tracked window directly from the
/// spline (positions clamp-held past the end, matching the padded dense
/// sampling used by the runners).
fn encode_from_spline(
    traj: &SplineTrajectory,
    t_start: f64,
    dt: f64,
    state: &QuadState,
    gains: &Gains,
) -> Vec<f64> {
    let mut x = Vec::with_capacity(INPUT_DIM_FULL);
    x.extend_from_slice(&gains.to_array());
    x.extend_from_slice(&state.vel.to_array());
    let q = if state.attitude.w < 0.0 {
        crate::math::Quat::new(
            -state.attitude.w,
            -state.attitude.x,
            -state.attitude.y,
            -state.attitude.z,
        )
    } else {
        state.attitude
    };
    x.extend_from_slice(&q.to_array());
    x.extend_from_slice(&state.body_rates.to_array());
    for t in sample_times(t_start, dt) {
        let (pos, _, _, _) = traj.sample(t);
        let rel = pos - state.pos;
        x.extend_from_slice(&rel.to_array());
    }
    x
}

/// Predicted scalar cost of tracking the window `[t_start, t_start + 1s]` of
/// the spline. This is the objective the adaptation descends.
pub fn window_cost<T: Dtype>(
    model: &MlpModel<T>,
    traj: &SplineTrajectory,
    t_start: f64,
    dt: f64,
    state: &QuadState,
    gains: &Gains,
    weights: &CostWeights,
) -> Result<f64> {
    let x = encode_from_spline(traj, t_start, dt, state, gains);
    let pred = model.predict(&x)?;
    Ok(pred.iter().zip(&weights.0).map(|(a, b)| a * b).sum())
}

/// Jacobian of the 63 lookahead entries with respect to the nullspace
/// coordinates: column `j` holds the nullspace basis column `j` evaluated at
/// the sample times. The position shift by `p_n` is constant in φ, so it
/// drops out of the derivative.
fn lookahead_jacobian(traj: &SplineTrajectory, t_start: f64, dt: f64) -> DMatrix<f64> {
    let nv = traj.nullspace_dim();
    let mut jac = DMatrix::zeros(3 * COARSE_SAMPLES, nv);
    let times = sample_times(t_start, dt);
    for j in 0..nv {
        let column = traj.nullspace().column(j).clone_owned();
        for (k, t) in times.iter().enumerate() {
            let p = traj.position_with_coeffs(&column, *t);
            jac[(3 * k, j)] = p.x;
            jac[(3 * k + 1, j)] = p.y;
            jac[(3 * k + 2, j)] = p.z;
        }
    }
    jac
}

/// Adapt the window of the trajectory ahead of `t_start`: descend the
/// predicted cost through the chain  φ → coefficients → lookahead samples →
/// predictor, with per-step gradient clipping. Constraints hold for every
/// iterate. Returns the adapted trajectory and before/after costs.
pub fn adapt_window<T: Dtype>(
    model: &MlpModel<T>,
    traj: &SplineTrajectory,
    t_start: f64,
    dt: f64,
    state: &QuadState,
    gains: &Gains,
    weights: &CostWeights,
    cfg: &AdaptConfig,
) -> Result<(SplineTrajectory, AdaptInfo)> {
    if traj.nullspace_dim() == 0 {
        let cost = window_cost(model, traj, t_start, dt, state, gains, weights)?;
        return Ok((
            traj.clone(),
            AdaptInfo {
                cost_before: cost,
                cost_after: cost,
                phi_norm: traj.phi().norm(),
                no_nullspace: true,
            },
        ));
    }
    let jac = lookahead_jacobian(traj, t_start, dt);
    let cost_before = window_cost(model, traj, t_start, dt, state, gains, weights)?;

    let mut current = traj.clone();
    let mut phi: DVector<f64> = traj.phi().clone();
    for _ in 0..cfg.steps {
        let x = encode_from_spline(&current, t_start, dt, state, gains);
        let gx = model.input_gradient(&x, weights)?;
        // chain through the linear sampling map: ∂J/∂φ = Gᵀ ∂J/∂τ̄
        let g_tau = DVector::from_iterator(3 * COARSE_SAMPLES, gx[18..].iter().copied());
        let mut g_phi = jac.transpose() * g_tau;
        let norm = g_phi.norm();
        if norm > cfg.clip_norm {
            g_phi *= cfg.clip_norm / norm;
        }
        phi -= g_phi * cfg.learning_rate;
        current = current.with_phi(phi.clone())?;
    }
    let cost_after = window_cost(model, &current, t_start, dt, state, gains, weights)?;
    let info = AdaptInfo {
        cost_before,
        cost_after,
        phi_norm: phi.norm(),
        no_nullspace: false,
    };
    Ok((current, info))
}

/// Whether the receding-horizon loop also re-tunes the gains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaptMode {
    TrajOnly,
    TrajAndGains,
}

/// Outcome of a receding-horizon adaptation run.
#[derive(Clone, Debug)]
pub struct AdaptRun {
    pub run: RunResult,
    /// Per-window adaptation bookkeeping.
    pub windows: Vec<AdaptInfo>,
    /// `(keypoint index, error)` at each interior keypoint's passage time.
    pub keypoint_errors: Vec<(usize, f64)>,
    pub mean_keypoint_error: f64,
}

/// Track a spline while re-adapting the upcoming window every
/// `period_steps`. The quadrotor always tracks the latest adapted
/// trajectory; the adaptation warm-starts from the current φ. In
/// `TrajAndGains` mode the gains are re-optimized at the same instants.
#[allow(clippy::too_many_arguments)]
pub fn receding_horizon_adapt<T: Dtype>(
    model: &MlpModel<T>,
    gain_model: Option<&MlpModel<f32>>,
    traj: &SplineTrajectory,
    params: &QuadParams,
    weights: &CostWeights,
    adapt_cfg: &AdaptConfig,
    gain_cfg: &SearchConfig,
    period_steps: usize,
    mode: AdaptMode,
    dt: f64,
) -> Result<AdaptRun> {
    if period_steps == 0 {
        return Err(Error::InvalidParams("period must be >= 1 step".into()));
    }
    if mode == AdaptMode::TrajAndGains && gain_model.is_none() {
        return Err(Error::InvalidParams(
            "TrajAndGains mode needs a gain-optimization model".into(),
        ));
    }
    let steps = (traj.duration() / dt).round() as usize;
    let mut current = traj.clone();
    let mut dense = Trajectory::Spline(current.clone()).sample_dense(dt, HORIZON_STEPS);
    let mut state = QuadState::hover_at(dense.reference(0).pos, params.hover_motor_speed());
    let mut gains = Gains::nominal();

    let mut out = AdaptRun {
        run: RunResult {
            log: crate::sim::StateLog {
                dt,
                initial: state,
                states: Vec::with_capacity(steps),
                wrench: Vec::with_capacity(steps),
                diverged: false,
            },
            schedule: Vec::new(),
            optimize_ms: Vec::new(),
            mean_error: 0.0,
            max_error: 0.0,
            crashed: false,
            steps: 0,
        },
        windows: Vec::new(),
        keypoint_errors: Vec::new(),
        mean_keypoint_error: 0.0,
    };

    // passage steps of the interior keypoints
    let key_steps: Vec<(usize, usize, Vec3)> = current
        .keypoints()
        .times
        .iter()
        .enumerate()
        .skip(1)
        .take(current.keypoints().len().saturating_sub(2))
        .map(|(i, t)| (i, (t / dt).round() as usize, current.keypoints().positions[i]))
        .collect();

    let mut err_sum = 0.0;
    for k in 0..steps {
        if k % period_steps == 0 {
            let t_start = k as f64 * dt;
            if mode == AdaptMode::TrajAndGains {
                let window = dense.window(k, HORIZON_STEPS)?;
                let mut call_cfg = gain_cfg.clone();
                call_cfg.seed = gain_cfg.seed.wrapping_add(k as u64);
                let (g, _) = optimize_gains(
                    gain_model.expect("checked above"),
                    &state,
                    &window,
                    weights,
                    &call_cfg,
                )?;
                gains = g;
            }
            let (adapted, info) =
                adapt_window(model, &current, t_start, dt, &state, &gains, weights, adapt_cfg)?;
            out.windows.push(info);
            current = adapted;
            dense = Trajectory::Spline(current.clone()).sample_dense(dt, HORIZON_STEPS);
        }

        let reference = dense.reference(k);
        let (thrust, moment) = crate::controller::compute_wrench(&state, &reference, &gains, params);
        if !thrust.is_finite() || !moment.is_finite() {
            out.run.log.diverged = true;
            out.run.crashed = true;
            break;
        }
        let cmd = crate::controller::allocate(thrust, moment, params);
        state = match crate::sim::step(&state, &cmd, params, dt) {
            Ok(s) => s,
            Err(_) => {
                out.run.log.diverged = true;
                out.run.crashed = true;
                break;
            }
        };
        out.run.log.states.push(state);
        out.run.log.wrench.push((thrust, moment));
        out.run.steps += 1;
        let err = (state.pos - dense.reference(k + 1).pos).norm();
        err_sum += err;
        out.run.max_error = out.run.max_error.max(err);
        if err > crate::tuner::CRASH_ERROR {
            out.run.crashed = true;
            break;
        }

        // keypoint passage: measure against the ORIGINAL keypoints, which
        // every adapted trajectory still interpolates
        for (idx, step_i, p) in &key_steps {
            if *step_i == k + 1 {
                out.keypoint_errors.push((*idx, (state.pos - *p).norm()));
            }
        }
    }
    if out.run.steps > 0 {
        out.run.mean_error = err_sum / out.run.steps as f64;
    }
    if !out.keypoint_errors.is_empty() {
        out.mean_keypoint_error =
            out.keypoint_errors.iter().map(|(_, e)| e).sum::<f64>() / out.keypoint_errors.len() as f64;
    }
    Ok(out)
}

/// Baseline for the adaptation experiments: track the unmodified spline with
/// static gains and measure the same keypoint errors.
pub fn static_keypoint_run(
    traj: &SplineTrajectory,
    params: &QuadParams,
    weights: &CostWeights,
    gains: &Gains,
    dt: f64,
) -> Result<AdaptRun> {
    let dense = Trajectory::Spline(traj.clone()).sample_dense(dt, HORIZON_STEPS);
    let cfg = SearchConfig::default();
    let run = run_on_sampled(&GainPolicy::Static(*gains), &dense, params, weights, &cfg, 50)?;
    let mut keypoint_errors = Vec::new();
    let kp = traj.keypoints();
    for (i, t) in kp.times.iter().enumerate().skip(1).take(kp.len().saturating_sub(2)) {
        let step_i = (t / dt).round() as usize;
        if step_i >= 1 && step_i <= run.log.states.len() {
            keypoint_errors.push((i, (run.log.states[step_i - 1].pos - kp.positions[i]).norm()));
        }
    }
    let mean = if keypoint_errors.is_empty() {
        0.0
    } else {
        keypoint_errors.iter().map(|(_, e)| e).sum::<f64>() / keypoint_errors.len() as f64
    };
    Ok(AdaptRun {
        run,
        windows: Vec::new(),
        keypoint_errors: keypoint_errors.clone(),
        mean_keypoint_error: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::InputVariant;
    use crate::spline::Keypoints;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spline() -> SplineTrajectory {
        SplineTrajectory::minsnap(
            Keypoints::new(
                vec![
                    Vec3::new(0.0, 0.0, 0.0),
                    Vec3::new(1.0, 0.4, 0.2),
                    Vec3::new(1.6, -0.4, 0.5),
                    Vec3::new(0.6, -1.0, 0.2),
                    Vec3::new(-0.2, 0.1, -0.1),
                ],
                vec![0.0, 1.2, 2.4, 3.5, 4.8],
            )
            .unwrap(),
            7,
        )
        .unwrap()
    }

    fn model() -> MlpModel<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        MlpModel::<f32>::init(InputVariant::Full, &mut rng).unwrap()
    }

    fn hover_state(traj: &SplineTrajectory) -> QuadState {
        let p = QuadParams::crazyflie();
        QuadState::hover_at(traj.keypoints().positions[0], p.hover_motor_speed())
    }

    #[test]
    fn zero_steps_or_zero_lr_leave_trajectory_unchanged() {
        let traj = spline();
        let m = model();
        let w = CostWeights::default_weights();
        let state = hover_state(&traj);
        for cfg in [
            AdaptConfig {
                steps: 0,
                ..AdaptConfig::default()
            },
            AdaptConfig {
                learning_rate: 0.0,
                ..AdaptConfig::default()
            },
        ] {
            let (adapted, info) =
                adapt_window(&m, &traj, 0.0, 0.01, &state, &Gains::nominal(), &w, &cfg).unwrap();
            assert_eq!(adapted.phi(), traj.phi());
            assert_eq!(info.cost_before, info.cost_after);
        }
    }

    #[test]
    fn adapted_trajectory_keeps_constraints() {
        let traj = spline();
        let m = model();
        let w = CostWeights::default_weights();
        let state = hover_state(&traj);
        let cfg = AdaptConfig {
            steps: 25,
            ..AdaptConfig::default()
        };
        let (adapted, info) =
            adapt_window(&m, &traj, 0.6, 0.01, &state, &Gains::nominal(), &w, &cfg).unwrap();
        assert!(!info.no_nullspace);
        assert!(info.phi_norm > 0.0);
        // keypoints still interpolated
        let kp = adapted.keypoints();
        for (p, t) in kp.positions.iter().zip(&kp.times) {
            let (pos, _, _, _) = adapted.sample(*t);
            assert!((pos - *p).norm() < 1e-8, "keypoint at t={t}");
        }
        // C3 continuity at interior knots
        let eps = 1e-9;
        for &t in &kp.times.clone()[1..kp.len() - 1] {
            let (pm, vm, am, jm) = adapted.sample(t - eps);
            let (pp, vp, ap, jp) = adapted.sample(t + eps);
            assert!((pm - pp).norm() < 1e-6);
            assert!((vm - vp).norm() < 1e-5);
            assert!((am - ap).norm() < 1e-4);
            assert!((jm - jp).norm() < 1e-3);
        }
        assert!(adapted.constraint_residual() <= 1e-8 * (1.0 + 1.0));
    }

    #[test]
    fn gradient_chain_matches_finite_differences() {
        // f64 twin of the production model so central differences resolve
        let traj = spline();
        let m64: MlpModel<f64> = model().convert();
        let w = CostWeights::default_weights();
        let state = hover_state(&traj);
        let gains = Gains::nominal();
        let t_start = 0.9;
        let dt = 0.01;

        let jac = lookahead_jacobian(&traj, t_start, dt);
        let x = encode_from_spline(&traj, t_start, dt, &state, &gains);
        let gx = m64.input_gradient(&x, &w).unwrap();
        let g_tau = DVector::from_iterator(3 * COARSE_SAMPLES, gx[18..].iter().copied());
        let g_phi = jac.transpose() * g_tau;

        let h = 1e-5;
        let nv = traj.nullspace_dim();
        let mut worst: f64 = 0.0;
        for j in (0..nv).step_by(3) {
            let mut phi = traj.phi().clone();
            phi[j] += h;
            let plus = window_cost(&m64, &traj.with_phi(phi.clone()).unwrap(), t_start, dt, &state, &gains, &w)
                .unwrap();
            phi[j] -= 2.0 * h;
            let minus = window_cost(&m64, &traj.with_phi(phi).unwrap(), t_start, dt, &state, &gains, &w)
                .unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let denom = g_phi[j].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((g_phi[j] - fd).abs() / denom);
        }
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn lookahead_is_affine_in_phi() {
        let traj = spline();
        let t_start = 1.3;
        let dt = 0.01;
        let nv = traj.nullspace_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        let phi1 = DVector::from_fn(nv, |_, _| rng.random_range(-0.5..0.5));
        let phi2 = DVector::from_fn(nv, |_, _| rng.random_range(-0.5..0.5));
        let sample_at = |traj: &SplineTrajectory| -> Vec<Vec3> {
            sample_times(t_start, dt)
                .iter()
                .map(|t| traj.sample(*t).0)
                .collect()
        };
        let base = sample_at(&traj);
        let a = sample_at(&traj.with_phi(phi1.clone()).unwrap());
        let b = sample_at(&traj.with_phi(phi2.clone()).unwrap());
        let ab = sample_at(&traj.with_phi(phi1 + phi2).unwrap());
        for k in 0..COARSE_SAMPLES {
            let lhs = ab[k] - base[k];
            let rhs = (a[k] - base[k]) + (b[k] - base[k]);
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn adaptation_run_executes_and_measures_keypoints() {
        let traj = spline();
        let m = model();
        let p = QuadParams::crazyflie();
        let w = CostWeights::default_weights();
        let cfg = AdaptConfig {
            steps: 3,
            ..AdaptConfig::default()
        };
        let run = receding_horizon_adapt(
            &m,
            None,
            &traj,
            &p,
            &w,
            &cfg,
            &SearchConfig::default(),
            100,
            AdaptMode::TrajOnly,
            0.01,
        )
        .unwrap();
        // 3 interior keypoints measured
        assert_eq!(run.keypoint_errors.len(), 3);
        assert!(run.mean_keypoint_error.is_finite());
        assert!(!run.windows.is_empty());
    }

    #[test]
    fn static_run_matches_plain_receding_horizon() {
        // adaptation disabled reduces to the plain static-gain runner
        let traj = spline();
        let p = QuadParams::crazyflie();
        let w = CostWeights::default_weights();
        let a = static_keypoint_run(&traj, &p, &w, &Gains::nominal(), 0.01).unwrap();
        let dense = Trajectory::Spline(traj.clone()).sample_dense(0.01, HORIZON_STEPS);
        let b = run_on_sampled(
            &GainPolicy::Static(Gains::nominal()),
            &dense,
            &p,
            &w,
            &SearchConfig::default(),
            50,
        )
        .unwrap();
        assert_eq!(a.run.mean_error, b.mean_error);
        assert_eq!(a.run.steps, b.steps);
    }
}
