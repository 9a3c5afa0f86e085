//! Online gain optimization: batched iterative random search through the
//! predictor, ground-truth oracle tuners, and the receding-horizon drivers
//! that re-tune while flying.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controller::Gains;
use crate::error::{Error, Result};
use crate::metrics::{compute_perf, ground_truth_cost, scalarize, CostWeights, PerfVector};
use crate::params::QuadParams;
use crate::predictor::{encode_suffix, MlpModel, HORIZON_STEPS};
use crate::sim::{rollout, StateLog};
use crate::spline::{SampledTrajectory, Trajectory};
use crate::state::QuadState;

/// Iterative random-search settings. The first iteration draws
/// `uniform_samples` from the gain box; later iterations add
/// `perturb_samples` Gaussian perturbations of the incumbent best.
#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub gain_min: [f64; 8],
    pub gain_max: [f64; 8],
    pub uniform_samples: usize,
    pub perturb_samples: usize,
    pub iterations: usize,
    /// Perturbation std as a fraction of each dimension's range.
    pub perturb_scale: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let (lo, hi) = Gains::default_bounds();
        SearchConfig {
            gain_min: lo.to_array(),
            gain_max: hi.to_array(),
            uniform_samples: 512,
            perturb_samples: 64,
            iterations: 4,
            perturb_scale: 0.05,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        for i in 0..8 {
            if !(self.gain_min[i] < self.gain_max[i]) {
                return Err(Error::InvalidParams(format!(
                    "gain bounds inverted in dimension {i}"
                )));
            }
        }
        if self.uniform_samples == 0 || self.iterations == 0 {
            return Err(Error::InvalidParams("need at least one sample and iteration".into()));
        }
        Ok(())
    }

    fn sample_uniform(&self, rng: &mut impl Rng) -> [f64; 8] {
        std::array::from_fn(|i| rng.random_range(self.gain_min[i]..self.gain_max[i]))
    }

    fn sample_perturbed(&self, center: &[f64; 8], rng: &mut impl Rng) -> [f64; 8] {
        std::array::from_fn(|i| {
            let range = self.gain_max[i] - self.gain_min[i];
            let z: f64 = rand_distr::StandardNormal.sample(rng);
            (center[i] + z * self.perturb_scale * range).clamp(self.gain_min[i], self.gain_max[i])
        })
    }
}

use rand_distr::Distribution;

/// One optimization call: explore the gain box through the predictor with
/// every sample of an iteration evaluated in a single batched forward pass.
/// Returns the lowest-predicted-cost gains seen and that predicted cost.
pub fn optimize_gains(
    model: &MlpModel<f32>,
    state: &QuadState,
    window: &crate::spline::TrajWindow<'_>,
    weights: &CostWeights,
    cfg: &SearchConfig,
) -> Result<(Gains, f64)> {
    cfg.validate()?;
    // the observation + trajectory block is shared by all gain samples
    let suffix = encode_suffix(model.variant, state, window)?;
    let dim = model.input_dim();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = cfg.uniform_samples + cfg.perturb_samples;
    let mut inputs = vec![0.0f64; rows * dim];
    let mut samples: Vec<[f64; 8]> = Vec::with_capacity(rows);
    let mut scratch = model.scratch(rows);
    let mut best: Option<([f64; 8], f64)> = None;

    for iter in 0..cfg.iterations {
        samples.clear();
        for _ in 0..cfg.uniform_samples {
            samples.push(cfg.sample_uniform(&mut rng));
        }
        // perturbations of the incumbent; the first iteration has no
        // incumbent yet and explores uniformly instead
        for _ in 0..cfg.perturb_samples {
            match (iter, &best) {
                (0, _) | (_, None) => samples.push(cfg.sample_uniform(&mut rng)),
                (_, Some((center, _))) => samples.push(cfg.sample_perturbed(center, &mut rng)),
            }
        }
        for (r, g) in samples.iter().enumerate() {
            let row = &mut inputs[r * dim..(r + 1) * dim];
            row[..8].copy_from_slice(g);
            row[8..].copy_from_slice(&suffix);
        }
        let costs = model.predict_cost_batch(&inputs, weights, &mut scratch)?;
        for (g, c) in samples.iter().zip(&costs) {
            if best.map_or(true, |(_, bc)| *c < bc) {
                best = Some((*g, *c));
            }
        }
    }
    let (g, c) = best.expect("at least one sample evaluated");
    Ok((Gains::from_array(g), c))
}

/// Random search against an arbitrary (possibly expensive) cost function,
/// with samples of one iteration evaluated in parallel.
pub fn search_gains<F>(cost: F, cfg: &SearchConfig) -> Result<(Gains, f64)>
where
    F: Fn(&Gains) -> f64 + Sync,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<([f64; 8], f64)> = None;
    for iter in 0..cfg.iterations {
        let mut samples: Vec<[f64; 8]> = Vec::new();
        for _ in 0..cfg.uniform_samples {
            samples.push(cfg.sample_uniform(&mut rng));
        }
        for _ in 0..cfg.perturb_samples {
            match (iter, &best) {
                (0, _) | (_, None) => samples.push(cfg.sample_uniform(&mut rng)),
                (_, Some((center, _))) => samples.push(cfg.sample_perturbed(center, &mut rng)),
            }
        }
        let costs: Vec<f64> = samples
            .par_iter()
            .map(|g| cost(&Gains::from_array(*g)))
            .collect();
        for (g, c) in samples.iter().zip(&costs) {
            if best.map_or(true, |(_, bc)| *c < bc) {
                best = Some((*g, *c));
            }
        }
    }
    let (g, c) = best.expect("at least one sample evaluated");
    Ok((Gains::from_array(g), c))
}

/// How the flying quadrotor chooses its gains.
pub enum GainPolicy<'m> {
    /// Fixed gains for the whole run.
    Static(Gains),
    /// Re-tune through the predictor every `retune_every` steps.
    Predictor(&'m MlpModel<f32>),
    /// Re-tune by ground-truth random search over the upcoming window.
    OracleAdaptive,
}

/// Outcome of one closed-loop run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub log: StateLog,
    /// `(step, gains, predicted_or_true_cost)` for every re-tune.
    pub schedule: Vec<(usize, Gains, f64)>,
    /// Wall-clock milliseconds of each optimization call.
    pub optimize_ms: Vec<f64>,
    /// Mean position-error norm over the executed steps.
    pub mean_error: f64,
    pub max_error: f64,
    /// Tracking error exceeded the failure threshold (5 m) or the sim diverged.
    pub crashed: bool,
    pub steps: usize,
}

/// Failure threshold on instantaneous tracking error (m).
pub const CRASH_ERROR: f64 = 5.0;

/// Track a trajectory start-to-end, starting from hover at its first point,
/// choosing gains per the policy every `retune_every` steps.
pub fn receding_horizon_run(
    policy: &GainPolicy<'_>,
    traj: &Trajectory,
    params: &QuadParams,
    weights: &CostWeights,
    cfg: &SearchConfig,
    retune_every: usize,
    dt: f64,
) -> Result<RunResult> {
    let dense = traj.sample_dense(dt, HORIZON_STEPS);
    run_on_sampled(policy, &dense, params, weights, cfg, retune_every)
}

/// As [`receding_horizon_run`], over an already sampled trajectory (must be
/// padded by at least the lookahead horizon).
pub fn run_on_sampled(
    policy: &GainPolicy<'_>,
    dense: &SampledTrajectory,
    params: &QuadParams,
    weights: &CostWeights,
    cfg: &SearchConfig,
    retune_every: usize,
) -> Result<RunResult> {
    if retune_every == 0 || retune_every > HORIZON_STEPS {
        return Err(Error::InvalidParams(format!(
            "retune period must be in [1, {HORIZON_STEPS}]"
        )));
    }
    let dt = dense.dt;
    let steps = dense.steps();
    if dense.samples() < steps + HORIZON_STEPS + 1 {
        return Err(Error::ShapeMismatch(
            "trajectory must be padded by the lookahead horizon".into(),
        ));
    }

    let mut state = QuadState::hover_at(dense.reference(0).pos, params.hover_motor_speed());
    let mut gains = match policy {
        GainPolicy::Static(g) => *g,
        _ => Gains::nominal(),
    };
    let mut result = RunResult {
        log: StateLog {
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
    };

    let mut err_sum = 0.0;
    for k in 0..steps {
        if k % retune_every == 0 {
            match policy {
                GainPolicy::Static(_) => {}
                GainPolicy::Predictor(model) => {
                    let window = dense.window(k, HORIZON_STEPS)?;
                    let t0 = Instant::now();
                    let mut call_cfg = cfg.clone();
                    call_cfg.seed = cfg.seed.wrapping_add(k as u64);
                    let (g, c) = optimize_gains(model, &state, &window, weights, &call_cfg)?;
                    result.optimize_ms.push(t0.elapsed().as_secs_f64() * 1e3);
                    gains = g;
                    result.schedule.push((k, g, c));
                }
                GainPolicy::OracleAdaptive => {
                    let window = dense.window(k, HORIZON_STEPS)?;
                    let t0 = Instant::now();
                    let mut call_cfg = cfg.clone();
                    call_cfg.seed = cfg.seed.wrapping_add(k as u64);
                    let (g, c) = search_gains(
                        |g| ground_truth_cost(&state, g, &window, params, weights).0,
                        &call_cfg,
                    )?;
                    result.optimize_ms.push(t0.elapsed().as_secs_f64() * 1e3);
                    gains = g;
                    result.schedule.push((k, g, c));
                }
            }
        }

        let reference = dense.reference(k);
        let (thrust, moment) = crate::controller::compute_wrench(&state, &reference, &gains, params);
        if !thrust.is_finite() || !moment.is_finite() {
            result.log.diverged = true;
            result.crashed = true;
            break;
        }
        let cmd = crate::controller::allocate(thrust, moment, params);
        state = match crate::sim::step(&state, &cmd, params, dt) {
            Ok(s) => s,
            Err(_) => {
                result.log.diverged = true;
                result.crashed = true;
                break;
            }
        };
        result.log.states.push(state);
        result.log.wrench.push((thrust, moment));
        result.steps += 1;

        let err = (state.pos - dense.reference(k + 1).pos).norm();
        err_sum += err;
        result.max_error = result.max_error.max(err);
        if err > CRASH_ERROR {
            result.crashed = true;
            break;
        }
    }
    if result.steps > 0 {
        result.mean_error = err_sum / result.steps as f64;
    }
    Ok(result)
}

/// Ground-truth static oracle: one gain vector for the whole trajectory,
/// chosen by random search over full-trajectory rollouts. The objective is
/// the whole-run cost without the terminal term.
pub fn oracle_static_tune(
    traj: &Trajectory,
    params: &QuadParams,
    weights: &CostWeights,
    cfg: &SearchConfig,
    dt: f64,
) -> Result<(Gains, f64)> {
    let dense = traj.sample_dense(dt, HORIZON_STEPS);
    let steps = dense.steps();
    let window = dense.window(0, steps)?;
    let mut no_terminal = *weights;
    no_terminal.0[7] = 0.0;
    let initial = QuadState::hover_at(dense.reference(0).pos, params.hover_motor_speed());
    search_gains(
        |g| {
            let log = rollout(&initial, g, &window, params, dt);
            let perf = compute_perf(&log, &window).unwrap_or_else(|_| PerfVector::sentinel());
            scalarize(&perf, &no_terminal)
        },
        cfg,
    )
}
