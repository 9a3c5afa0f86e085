//! Rollout performance measures and their scalarization.
//!
//! A rollout is summarized by eight nonnegative numbers: mean absolute
//! per-axis position errors, mean velocity-error norm, mean body-rate norm,
//! mean commanded thrust, mean commanded moment norm, and the terminal
//! position-error norm. Diverged rollouts saturate every entry at a large
//! sentinel so downstream learning sees crashes as uniformly terrible rather
//! than NaN.

use crate::controller::Gains;
use crate::error::{Error, Result};
use crate::params::QuadParams;
use crate::sim::{rollout, StateLog};
use crate::spline::TrajWindow;
use crate::state::QuadState;

/// Value assigned to every performance entry of a diverged rollout.
pub const DIVERGENCE_SENTINEL: f64 = 1e3;

/// The 8 performance measures of a closed-loop rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerfVector(pub [f64; 8]);

impl PerfVector {
    pub fn sentinel() -> Self {
        PerfVector([DIVERGENCE_SENTINEL; 8])
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Nonnegative weights for the scalar cost `J = wᵀc`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights(pub [f64; 8]);

impl CostWeights {
    /// Balanced so no single term dominates the cost of nominal-gain
    /// rollouts over the training trajectory distribution.
    pub fn default_weights() -> Self {
        CostWeights([1.0, 1.0, 1.0, 0.25, 0.05, 0.02, 0.5, 1.0])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.0.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::InvalidParams(format!("weights must be >= 0: {:?}", self.0)));
        }
        if self.0.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidParams("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

/// Compute the performance vector of a rollout log against the window it
/// tracked. State-based means run over all `H+1` states (initial included);
/// effort means run over the `H` commanded wrenches.
pub fn compute_perf(log: &StateLog, window: &TrajWindow<'_>) -> Result<PerfVector> {
    if !log.diverged && log.len() != window.len() {
        return Err(Error::ShapeMismatch(format!(
            "log has {} steps but window has {}",
            log.len(),
            window.len()
        )));
    }
    if log.diverged {
        return Ok(PerfVector::sentinel());
    }

    let h = log.len();
    let mut abs_ep = [0.0; 3];
    let mut ev_norm = 0.0;
    let mut rate_norm = 0.0;
    for i in 0..=h {
        let (state, reference) = if i == 0 {
            (&log.initial, window.reference(0))
        } else {
            (&log.states[i - 1], window.reference(i))
        };
        let e_p = state.pos - reference.pos;
        abs_ep[0] += e_p.x.abs();
        abs_ep[1] += e_p.y.abs();
        abs_ep[2] += e_p.z.abs();
        ev_norm += (state.vel - reference.vel).norm();
        rate_norm += state.body_rates.norm();
    }
    let n_states = (h + 1) as f64;

    let mut thrust = 0.0;
    let mut moment = 0.0;
    for (f, m) in &log.wrench {
        thrust += f.abs();
        moment += m.norm();
    }
    let n_steps = h as f64;

    let terminal = (log.states[h - 1].pos - window.reference(h).pos).norm();

    Ok(PerfVector([
        abs_ep[0] / n_states,
        abs_ep[1] / n_states,
        abs_ep[2] / n_states,
        ev_norm / n_states,
        rate_norm / n_states,
        thrust / n_steps,
        moment / n_steps,
        terminal,
    ]))
}

/// Scalar cost `J = wᵀc`.
pub fn scalarize(c: &PerfVector, w: &CostWeights) -> f64 {
    c.0.iter().zip(&w.0).map(|(ci, wi)| ci * wi).sum()
}

/// Ground-truth objective: roll out the closed loop over the window, compute
/// the performance vector, scalarize. This is the oracle that search-based
/// tuners query and the quantity the predictor learns to approximate.
pub fn ground_truth_cost(
    initial: &QuadState,
    gains: &Gains,
    window: &TrajWindow<'_>,
    params: &QuadParams,
    weights: &CostWeights,
) -> (f64, PerfVector) {
    let log = rollout(initial, gains, window, params, log_dt(window));
    let perf = compute_perf(&log, window).unwrap_or_else(|_| PerfVector::sentinel());
    (scalarize(&perf, weights), perf)
}

fn log_dt(window: &TrajWindow<'_>) -> f64 {
    window.dt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::FlatReference;
    use crate::math::Vec3;
    use crate::spline::{SampledTrajectory, Trajectory, ZigZag};
    use crate::spline::Keypoints;

    fn params() -> QuadParams {
        QuadParams::crazyflie()
    }

    fn nominal_gains() -> Gains {
        Gains::from_array([0.5, 0.5, 0.6, 0.2, 0.2, 0.25, 0.03, 0.0012])
    }

    fn stationary_sampled(pos: Vec3, steps: usize, dt: f64) -> SampledTrajectory {
        SampledTrajectory::from_refs(dt, vec![FlatReference::stationary(pos); steps + 1])
    }

    /// Straightforward second implementation of the eight formulas.
    fn perf_reference(log: &StateLog, window: &TrajWindow<'_>) -> [f64; 8] {
        let h = log.len();
        let states: Vec<QuadState> =
            std::iter::once(log.initial).chain(log.states.iter().copied()).collect();
        let mut c = [0.0; 8];
        for (i, s) in states.iter().enumerate() {
            let r = window.reference(i);
            c[0] += (s.pos.x - r.pos.x).abs();
            c[1] += (s.pos.y - r.pos.y).abs();
            c[2] += (s.pos.z - r.pos.z).abs();
            c[3] += (s.vel - r.vel).norm();
            c[4] += s.body_rates.norm();
        }
        for v in c.iter_mut().take(5) {
            *v /= (h + 1) as f64;
        }
        for (f, m) in &log.wrench {
            c[5] += f.abs();
            c[6] += m.norm();
        }
        c[5] /= h as f64;
        c[6] /= h as f64;
        c[7] = (states[h].pos - window.reference(h).pos).norm();
        c
    }

    #[test]
    fn perfect_hover_gives_effort_floor() {
        let p = params();
        let pos = Vec3::new(0.5, -0.5, 1.0);
        let traj = stationary_sampled(pos, 100, 0.01);
        let window = traj.window(0, 100).unwrap();
        let initial = QuadState::hover_at(pos, p.hover_motor_speed());
        let log = rollout(&initial, &nominal_gains(), &window, &p, 0.01);
        assert!(!log.diverged);
        let c = compute_perf(&log, &window).unwrap();
        for i in [0, 1, 2, 3, 4, 7] {
            assert!(c.0[i] < 1e-6, "entry {i} = {}", c.0[i]);
        }
        assert!((c.0[5] - p.mass * p.gravity).abs() < 1e-6);
        assert!(c.0[6] < 1e-9);
    }

    #[test]
    fn constant_offset_shows_up_in_position_terms() {
        let p = params();
        // a log that hovers perfectly at x+0.1 relative to the reference
        let pos = Vec3::new(0.1, 0.0, 1.0);
        let reference_pos = Vec3::new(0.0, 0.0, 1.0);
        let traj = stationary_sampled(reference_pos, 50, 0.01);
        let window = traj.window(0, 50).unwrap();
        let hover = QuadState::hover_at(pos, p.hover_motor_speed());
        let log = StateLog {
            dt: 0.01,
            initial: hover,
            states: vec![hover; 50],
            wrench: vec![(p.mass * p.gravity, Vec3::zero()); 50],
            diverged: false,
        };
        let c = compute_perf(&log, &window).unwrap();
        assert!((c.0[0] - 0.1).abs() < 1e-12);
        assert!(c.0[1].abs() < 1e-12);
        assert!((c.0[7] - 0.1).abs() < 1e-12);
        assert!(c.0[4].abs() < 1e-12);
    }

    #[test]
    fn matches_independent_reimplementation() {
        let p = params();
        let kp = Keypoints::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.5, 0.3), Vec3::new(0.2, -0.5, 0.6)],
            vec![0.0, 1.2, 2.5],
        )
        .unwrap();
        let traj = Trajectory::ZigZag(ZigZag::new(kp)).sample_dense(0.01, 100);
        let window = traj.window(30, 100).unwrap();
        let mut initial = QuadState::hover_at(window.reference(0).pos, p.hover_motor_speed());
        initial.vel = Vec3::new(0.3, -0.2, 0.1);
        let log = rollout(&initial, &nominal_gains(), &window, &p, 0.01);
        assert!(!log.diverged);
        let c = compute_perf(&log, &window).unwrap();
        let expect = perf_reference(&log, &window);
        for i in 0..8 {
            assert!((c.0[i] - expect[i]).abs() < 1e-12, "entry {i}");
        }
    }

    #[test]
    fn diverged_log_saturates() {
        let p = params();
        let pos = Vec3::zero();
        let traj = stationary_sampled(pos, 10, 0.01);
        let window = traj.window(0, 10).unwrap();
        let log = StateLog {
            dt: 0.01,
            initial: QuadState::hover_at(pos, p.hover_motor_speed()),
            states: vec![],
            wrench: vec![],
            diverged: true,
        };
        let c = compute_perf(&log, &window).unwrap();
        assert_eq!(c, PerfVector::sentinel());
        assert!(c.is_valid());
    }

    #[test]
    fn length_mismatch_is_error() {
        let p = params();
        let pos = Vec3::zero();
        let traj = stationary_sampled(pos, 20, 0.01);
        let window = traj.window(0, 20).unwrap();
        let log = StateLog {
            dt: 0.01,
            initial: QuadState::hover_at(pos, p.hover_motor_speed()),
            states: vec![QuadState::hover_at(pos, 100.0); 10],
            wrench: vec![(0.0, Vec3::zero()); 10],
            diverged: false,
        };
        assert!(compute_perf(&log, &window).is_err());
    }

    #[test]
    fn scalarize_is_bilinear_and_picks_entries() {
        let c = PerfVector([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let mut w = CostWeights([0.0; 8]);
        w.0[0] = 1.0;
        assert_eq!(scalarize(&c, &w), 1.0);
        assert_eq!(scalarize(&PerfVector([0.0; 8]), &CostWeights::default_weights()), 0.0);

        let w1 = CostWeights([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let dot: f64 = c.0.iter().zip(&w1.0).map(|(a, b)| a * b).sum();
        assert!((scalarize(&c, &w1) - dot).abs() < 1e-15);

        // linear in c: J(2c) = 2 J(c)
        let c2 = PerfVector(std::array::from_fn(|i| 2.0 * c.0[i]));
        assert!((scalarize(&c2, &w1) - 2.0 * scalarize(&c, &w1)).abs() < 1e-12);
    }

    #[test]
    fn positional_offset_monotonicity() {
        let p = params();
        let pos = Vec3::new(0.0, 0.0, 1.0);
        let traj = stationary_sampled(pos, 30, 0.01);
        let window = traj.window(0, 30).unwrap();
        let initial = QuadState::hover_at(pos, p.hover_motor_speed());
        let log = rollout(&initial, &nominal_gains(), &window, &p, 0.01);
        let base = compute_perf(&log, &window).unwrap();

        let mut shifted = log.clone();
        shifted.initial.pos.x += 0.2;
        for s in &mut shifted.states {
            s.pos.x += 0.2;
        }
        let moved = compute_perf(&shifted, &window).unwrap();
        assert!(moved.0[0] > base.0[0]);
        assert!(moved.0[7] > base.0[7]);
        for i in [4, 5, 6] {
            assert!((moved.0[i] - base.0[i]).abs() < 1e-12, "entry {i}");
        }
    }

    #[test]
    fn ground_truth_cost_deterministic_and_ordered() {
        let p = params();
        let w = CostWeights::default_weights();
        let kp = Keypoints::new(
            vec![Vec3::zero(), Vec3::new(1.0, 0.3, 0.2), Vec3::new(0.5, 1.0, -0.2)],
            vec![0.0, 1.0, 2.2],
        )
        .unwrap();
        let traj = Trajectory::ZigZag(ZigZag::new(kp)).sample_dense(0.01, 100);
        let window = traj.window(10, 100).unwrap();
        let initial = QuadState::hover_at(window.reference(0).pos, p.hover_motor_speed());

        let (cost1, _) = ground_truth_cost(&initial, &nominal_gains(), &window, &p, &w);
        let (cost2, _) = ground_truth_cost(&initial, &nominal_gains(), &window, &p, &w);
        assert_eq!(cost1, cost2);

        let (cost_zero, _) =
            ground_truth_cost(&initial, &Gains::from_array([0.0; 8]), &window, &p, &w);
        assert!(cost_zero > cost1, "zero gains {cost_zero} vs nominal {cost1}");
    }

    #[test]
    fn zero_gains_diverge_on_moving_trajectory() {
        // with zero gains the quad free-falls away from a moving reference;
        // position error grows monotonically over the first 50 steps
        let p = params();
        let kp = Keypoints::new(
            vec![Vec3::zero(), Vec3::new(2.0, 0.0, 1.0)],
            vec![0.0, 2.0],
        )
        .unwrap();
        let traj = Trajectory::ZigZag(ZigZag::new(kp)).sample_dense(0.01, 100);
        let window = traj.window(0, 100).unwrap();
        let initial = QuadState::hover_at(Vec3::zero(), p.hover_motor_speed());
        let log = rollout(&initial, &Gains::from_array([0.0; 8]), &window, &p, 0.01);
        let mut last = 0.0;
        for i in 0..50 {
            let err = (log.states[i].pos - window.reference(i + 1).pos).norm();
            assert!(err >= last, "step {i}: {err} < {last}");
            last = err;
        }
    }
}
