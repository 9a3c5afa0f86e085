//! Evaluation harness: seeded trajectory suites, the tuning methods under
//! comparison, failure-filtered summaries, and speed cross-validation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controller::Gains;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::metrics::CostWeights;
use crate::params::QuadParams;
use crate::predictor::{MlpModel, HORIZON_STEPS};
use crate::spline::{
    sample_eval_trajectory, times_from_speed, Keypoints, SplineTrajectory, Trajectory,
    TrajectoryConfig, TrajectoryFamily,
};
use crate::tuner::{
    oracle_static_tune, receding_horizon_run, GainPolicy, RunResult, SearchConfig,
};

/// Evaluation trajectory suites, each a family plus a speed band.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    MinSnap,
    MinSnapHard,
    MinSnapVarying,
    ZigZag,
    Lissajous,
}

impl Suite {
    pub fn tag(&self) -> &'static str {
        match self {
            Suite::MinSnap => "minsnap",
            Suite::MinSnapHard => "minsnap-hard",
            Suite::MinSnapVarying => "minsnap-varying",
            Suite::ZigZag => "zigzag",
            Suite::Lissajous => "lissajous",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "minsnap" => Some(Suite::MinSnap),
            "minsnap-hard" => Some(Suite::MinSnapHard),
            "minsnap-varying" => Some(Suite::MinSnapVarying),
            "zigzag" => Some(Suite::ZigZag),
            "lissajous" => Some(Suite::Lissajous),
            _ => None,
        }
    }

    pub fn family(&self) -> TrajectoryFamily {
        match self {
            Suite::MinSnap | Suite::MinSnapHard => TrajectoryFamily::MinSnap,
            Suite::MinSnapVarying => TrajectoryFamily::MinSnapVarying,
            Suite::ZigZag => TrajectoryFamily::ZigZag,
            Suite::Lissajous => TrajectoryFamily::Lissajous,
        }
    }

    pub fn speed_range(&self) -> (f64, f64) {
        match self {
            Suite::MinSnap => (1.0, 2.5),
            Suite::MinSnapHard => (1.5, 3.5),
            Suite::MinSnapVarying => (1.0, 2.5),
            Suite::ZigZag => (1.0, 2.5),
            Suite::Lissajous => (1.0, 2.5), // amplitude/frequency bands drive the difficulty
        }
    }
}

/// Deterministic suite: trajectory `i` comes from stream `i` of the seed.
pub fn suite_trajectories(suite: Suite, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let cfg = TrajectoryConfig {
        speed_range: suite.speed_range(),
        ..TrajectoryConfig::default()
    };
    (0..n as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            sample_eval_trajectory(suite.family(), &cfg, (6.0, 10.0), &mut rng)
        })
        .collect()
}

/// The gain-selection methods under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Taco,
    TacoNoTraj,
    Nominal,
    OracleStatic,
    OracleAdaptive,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Taco => "taco",
            Method::TacoNoTraj => "taco-no-traj",
            Method::Nominal => "nominal",
            Method::OracleStatic => "oracle-static",
            Method::OracleAdaptive => "oracle-adaptive",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "taco" => Some(Method::Taco),
            "taco-no-traj" => Some(Method::TacoNoTraj),
            "nominal" => Some(Method::Nominal),
            "oracle-static" => Some(Method::OracleStatic),
            "oracle-adaptive" => Some(Method::OracleAdaptive),
            _ => None,
        }
    }
}

/// Per-trajectory evaluation record.
#[derive(Clone, Debug)]
pub struct TrajOutcome {
    pub index: usize,
    pub mean_error: f64,
    pub max_error: f64,
    pub crashed: bool,
    pub steps: usize,
    pub mean_optimize_ms: f64,
    pub max_optimize_ms: f64,
}

/// Failure-filtered suite summary.
#[derive(Clone, Debug)]
pub struct SuiteSummary {
    pub outcomes: Vec<TrajOutcome>,
    /// Mean of per-trajectory mean errors over non-crashed runs.
    pub mean_error: f64,
    pub crashes: usize,
    pub mean_optimize_ms: f64,
    pub max_optimize_ms: f64,
}

fn summarize(outcomes: Vec<TrajOutcome>) -> SuiteSummary {
    let crashes = outcomes.iter().filter(|o| o.crashed).count();
    let ok: Vec<&TrajOutcome> = outcomes.iter().filter(|o| !o.crashed).collect();
    let mean_error = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().map(|o| o.mean_error).sum::<f64>() / ok.len() as f64
    };
    let with_opt: Vec<&TrajOutcome> = outcomes.iter().filter(|o| o.mean_optimize_ms > 0.0).collect();
    let mean_optimize_ms = if with_opt.is_empty() {
        0.0
    } else {
        with_opt.iter().map(|o| o.mean_optimize_ms).sum::<f64>() / with_opt.len() as f64
    };
    let max_optimize_ms = outcomes
        .iter()
        .map(|o| o.max_optimize_ms)
        .fold(0.0, f64::max);
    SuiteSummary {
        outcomes,
        mean_error,
        crashes,
        mean_optimize_ms,
        max_optimize_ms,
    }
}

/// Models available to the methods; the oracles and nominal need none.
#[derive(Clone, Copy, Default)]
pub struct Models<'m> {
    pub full: Option<&'m MlpModel<f32>>,
    pub no_traj: Option<&'m MlpModel<f32>>,
}

/// Run one method over a suite of trajectories. `retune_every` applies to
/// the adaptive methods; the static oracle gets `oracle_cfg` search budget
/// per trajectory.
pub fn run_method(
    method: Method,
    models: &Models<'_>,
    trajectories: &[Trajectory],
    params: &QuadParams,
    weights: &CostWeights,
    search_cfg: &SearchConfig,
    oracle_cfg: &SearchConfig,
    retune_every: usize,
    dt: f64,
) -> Result<SuiteSummary> {
    let mut outcomes = Vec::with_capacity(trajectories.len());
    for (index, traj) in trajectories.iter().enumerate() {
        let mut cfg = search_cfg.clone();
        cfg.seed = search_cfg.seed.wrapping_add((index as u64) << 20);
        let run: RunResult = match method {
            Method::Nominal => receding_horizon_run(
                &GainPolicy::Static(Gains::nominal()),
                traj,
                params,
                weights,
                &cfg,
                retune_every,
                dt,
            )?,
            Method::Taco => {
                let model = models
                    .full
                    .ok_or_else(|| Error::Model("taco needs the full model".into()))?;
                receding_horizon_run(
                    &GainPolicy::Predictor(model),
                    traj,
                    params,
                    weights,
                    &cfg,
                    retune_every,
                    dt,
                )?
            }
            Method::TacoNoTraj => {
                let model = models
                    .no_traj
                    .ok_or_else(|| Error::Model("taco-no-traj needs the lookahead-free model".into()))?;
                receding_horizon_run(
                    &GainPolicy::Predictor(model),
                    traj,
                    params,
                    weights,
                    &cfg,
                    retune_every,
                    dt,
                )?
            }
            Method::OracleAdaptive => {
                let mut ocfg = oracle_cfg.clone();
                ocfg.seed = oracle_cfg.seed.wrapping_add((index as u64) << 20);
                receding_horizon_run(
                    &GainPolicy::OracleAdaptive,
                    traj,
                    params,
                    weights,
                    &ocfg,
                    retune_every,
                    dt,
                )?
            }
            Method::OracleStatic => {
                let mut ocfg = oracle_cfg.clone();
                ocfg.seed = oracle_cfg.seed.wrapping_add((index as u64) << 20);
                let (gains, _) = oracle_static_tune(traj, params, weights, &ocfg, dt)?;
                receding_horizon_run(
                    &GainPolicy::Static(gains),
                    traj,
                    params,
                    weights,
                    &ocfg,
                    retune_every,
                    dt,
                )?
            }
        };
        let n_opt = run.optimize_ms.len().max(1) as f64;
        outcomes.push(TrajOutcome {
            index,
            mean_error: run.mean_error,
            max_error: run.max_error,
            crashed: run.crashed,
            steps: run.steps,
            mean_optimize_ms: run.optimize_ms.iter().sum::<f64>() / n_opt,
            max_optimize_ms: run.optimize_ms.iter().copied().fold(0.0, f64::max),
        });
    }
    Ok(summarize(outcomes))
}

/// The four speed labels of the cross-validation experiment.
pub const CROSSVAL_SPEEDS: [(&str, f64); 4] = [
    ("slow", 1.0),
    ("med", 1.75),
    ("fast", 2.5),
    ("xfast", 3.25),
];

/// One keypoint shape retimed to the four speeds.
pub fn crossval_trajectories(seed: u64) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = TrajectoryConfig::default();
    // a fixed shape, long enough to be interesting at the fastest speed
    let base = loop {
        let t = sample_eval_trajectory(
            TrajectoryFamily::MinSnap,
            &TrajectoryConfig {
                speed_range: (1.7, 1.8),
                ..cfg.clone()
            },
            (6.0, 8.0),
            &mut rng,
        )?;
        if let Trajectory::Spline(s) = &t {
            if s.keypoints().len() >= 5 {
                break s.keypoints().positions.clone();
            }
        }
    };
    CROSSVAL_SPEEDS
        .iter()
        .map(|(_, speed)| {
            let times = times_from_speed(&base, *speed);
            let kp = Keypoints::new(base.clone(), times)?;
            Ok(Trajectory::Spline(SplineTrajectory::minsnap(kp, 7)?))
        })
        .collect()
}

/// How gains are chosen for each cross-validation row.
pub enum CrossvalTuner<'m> {
    /// Ground-truth static oracle per trajectory.
    Oracle(SearchConfig),
    /// Predictor search on the first hover window of each trajectory.
    Predictor(&'m MlpModel<f32>, SearchConfig),
}

/// Evaluation matrix `m[test][tuned]`: gains tuned for column `j`'s speed,
/// applied statically while tracking row `i`'s trajectory. Row-minimum on
/// the diagonal means every trajectory is best tracked by its own gains.
pub fn crossval_matrix(
    tuner: &CrossvalTuner<'_>,
    trajectories: &[Trajectory],
    params: &QuadParams,
    weights: &CostWeights,
    dt: f64,
) -> Result<(Vec<Gains>, Vec<Vec<f64>>)> {
    let mut tuned = Vec::with_capacity(trajectories.len());
    for (i, traj) in trajectories.iter().enumerate() {
        let gains = match tuner {
            CrossvalTuner::Oracle(cfg) => {
                let mut c = cfg.clone();
                c.seed = cfg.seed.wrapping_add(i as u64);
                oracle_static_tune(traj, params, weights, &c, dt)?.0
            }
            CrossvalTuner::Predictor(model, cfg) => {
                let mut c = cfg.clone();
                c.seed = cfg.seed.wrapping_add(i as u64);
                let dense = traj.sample_dense(dt, HORIZON_STEPS);
                let window = dense.window(0, HORIZON_STEPS)?;
                let state = crate::state::QuadState::hover_at(
                    dense.reference(0).pos,
                    params.hover_motor_speed(),
                );
                crate::tuner::optimize_gains(model, &state, &window, weights, &c)?.0
            }
        };
        tuned.push(gains);
    }

    let mut matrix = vec![vec![0.0; trajectories.len()]; trajectories.len()];
    for (row, traj) in trajectories.iter().enumerate() {
        for (col, gains) in tuned.iter().enumerate() {
            let run = receding_horizon_run(
                &GainPolicy::Static(*gains),
                traj,
                params,
                weights,
                &SearchConfig::default(),
                50,
                dt,
            )?;
            matrix[row][col] = if run.crashed { f64::NAN } else { run.mean_error };
        }
    }
    Ok((tuned, matrix))
}

/// Count rows whose finite minimum sits on the diagonal.
pub fn diagonal_minima(matrix: &[Vec<f64>]) -> usize {
    let mut count = 0;
    for (i, row) in matrix.iter().enumerate() {
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        for (j, v) in row.iter().enumerate() {
            if v.is_finite() && *v < best {
                best = *v;
                best_j = j;
            }
        }
        if best_j == i {
            count += 1;
        }
    }
    count
}

/// The measured start position of every suite trajectory; used by sanity
/// checks on suite generation.
pub fn start_positions(trajs: &[Trajectory]) -> Vec<Vec3> {
    trajs.iter().map(|t| t.start_position()).collect()
}
