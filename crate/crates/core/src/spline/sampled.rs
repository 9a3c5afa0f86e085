//! Dense trajectory sampling for the simulator plus the window views used by
//! rollouts and the predictor encoding.

use crate::controller::FlatReference;
use crate::error::{Error, Result};
use crate::math::Vec3;

use super::{Keypoints, SplineTrajectory};

/// Piecewise-linear reference through keypoints: constant velocity on each
/// segment, so velocity is discontinuous at the knots.
#[derive(Clone, Debug, PartialEq)]
pub struct ZigZag {
    pub keypoints: Keypoints,
}

impl ZigZag {
    pub fn new(keypoints: Keypoints) -> Self {
        ZigZag { keypoints }
    }

    pub fn duration(&self) -> f64 {
        self.keypoints.duration()
    }

    /// Reference at `t`; at a knot the upcoming segment's velocity applies.
    pub fn eval(&self, t: f64) -> FlatReference {
        let kp = &self.keypoints;
        if t <= 0.0 {
            return FlatReference::stationary(kp.positions[0]);
        }
        if t >= kp.duration() {
            return FlatReference::stationary(*kp.positions.last().unwrap());
        }
        let times = &kp.times;
        let seg = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(kp.segments() - 1),
            Err(i) => i - 1,
        };
        let dt = times[seg + 1] - times[seg];
        let alpha = (t - times[seg]) / dt;
        let p0 = kp.positions[seg];
        let p1 = kp.positions[seg + 1];
        let vel = (p1 - p0).scale(1.0 / dt);
        FlatReference {
            pos: p0 + (p1 - p0).scale(alpha),
            vel,
            acc: Vec3::zero(),
            jerk: Vec3::zero(),
            yaw: 0.0,
        }
    }
}

/// Per-axis sinusoid `center + A sin(2π f t + φ)` with analytic derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Lissajous {
    pub amplitude: Vec3,
    pub frequency: Vec3,
    pub phase: Vec3,
    pub center: Vec3,
    pub duration: f64,
}

impl Lissajous {
    pub fn eval(&self, t: f64) -> FlatReference {
        let mut pos = [0.0; 3];
        let mut vel = [0.0; 3];
        let mut acc = [0.0; 3];
        let mut jerk = [0.0; 3];
        let amp = self.amplitude.to_array();
        let freq = self.frequency.to_array();
        let phase = self.phase.to_array();
        let center = self.center.to_array();
        for a in 0..3 {
            let w = 2.0 * std::f64::consts::PI * freq[a];
            let arg = w * t + phase[a];
            let (s, c) = arg.sin_cos();
            pos[a] = center[a] + amp[a] * s;
            vel[a] = amp[a] * w * c;
            acc[a] = -amp[a] * w * w * s;
            jerk[a] = -amp[a] * w * w * w * c;
        }
        FlatReference {
            pos: Vec3::from_array(pos),
            vel: Vec3::from_array(vel),
            acc: Vec3::from_array(acc),
            jerk: Vec3::from_array(jerk),
            yaw: 0.0,
        }
    }
}

/// Any reference trajectory the toolkit can track.
#[derive(Clone, Debug)]
pub enum Trajectory {
    Spline(SplineTrajectory),
    ZigZag(ZigZag),
    Lissajous(Lissajous),
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        match self {
            Trajectory::Spline(s) => s.duration(),
            Trajectory::ZigZag(z) => z.duration(),
            Trajectory::Lissajous(l) => l.duration,
        }
    }

    pub fn eval(&self, t: f64) -> FlatReference {
        match self {
            Trajectory::Spline(s) => {
                let (pos, vel, acc, jerk) = s.sample(t);
                FlatReference {
                    pos,
                    vel,
                    acc,
                    jerk,
                    yaw: 0.0,
                }
            }
            Trajectory::ZigZag(z) => z.eval(t),
            Trajectory::Lissajous(l) => l.eval(t),
        }
    }

    pub fn start_position(&self) -> Vec3 {
        self.eval(0.0).pos
    }

    /// Densely sample at the simulator rate, holding the final position with
    /// zero derivatives for `pad_steps` extra steps so every lookahead window
    /// near the end stays full length.
    pub fn sample_dense(&self, dt: f64, pad_steps: usize) -> SampledTrajectory {
        let duration = self.duration();
        let steps = (duration / dt).round().max(1.0) as usize;
        let mut refs = Vec::with_capacity(steps + 1 + pad_steps);
        for i in 0..=steps {
            refs.push(self.eval(i as f64 * dt));
        }
        let hold = FlatReference::stationary(refs.last().unwrap().pos);
        for _ in 0..pad_steps {
            refs.push(hold);
        }
        SampledTrajectory {
            dt,
            refs,
            unpadded_steps: steps,
        }
    }
}

/// A trajectory discretized at the simulator rate.
#[derive(Clone, Debug)]
pub struct SampledTrajectory {
    pub dt: f64,
    /// `refs[i]` is the reference at time `i·dt`.
    refs: Vec<FlatReference>,
    /// Number of steps covering the un-padded duration.
    unpadded_steps: usize,
}

impl SampledTrajectory {
    pub fn from_refs(dt: f64, refs: Vec<FlatReference>) -> Self {
        let unpadded_steps = refs.len().saturating_sub(1);
        SampledTrajectory {
            dt,
            refs,
            unpadded_steps,
        }
    }

    /// Steps spanning the original (un-padded) duration.
    pub fn steps(&self) -> usize {
        self.unpadded_steps
    }

    /// Total available reference samples, including padding.
    pub fn samples(&self) -> usize {
        self.refs.len()
    }

    pub fn reference(&self, i: usize) -> FlatReference {
        self.refs[i]
    }

    /// Window of `len` steps starting at step `start`. Needs references
    /// through `start + len` inclusive (the terminal sample).
    pub fn window(&self, start: usize, len: usize) -> Result<TrajWindow<'_>> {
        if start + len + 1 > self.refs.len() {
            return Err(Error::ShapeMismatch(format!(
                "window [{start}, {}] exceeds {} reference samples",
                start + len,
                self.refs.len()
            )));
        }
        Ok(TrajWindow {
            traj: self,
            start,
            len,
        })
    }

    /// Positions at `start + j·stride` for `j = 0..=len/stride` — the coarse
    /// lookahead samples fed to the predictor (a subsampling of the dense
    /// references).
    pub fn coarse_positions(&self, start: usize, len: usize, stride: usize) -> Result<Vec<Vec3>> {
        if start + len + 1 > self.refs.len() {
            return Err(Error::ShapeMismatch(format!(
                "coarse window [{start}, {}] exceeds {} reference samples",
                start + len,
                self.refs.len()
            )));
        }
        Ok((0..=len / stride)
            .map(|j| self.refs[start + j * stride].pos)
            .collect())
    }
}

/// Borrowed view of `len` steps of a [`SampledTrajectory`].
#[derive(Clone, Copy, Debug)]
pub struct TrajWindow<'a> {
    traj: &'a SampledTrajectory,
    start: usize,
    len: usize,
}

impl<'a> TrajWindow<'a> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn dt(&self) -> f64 {
        self.traj.dt
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Reference `i` steps into the window, `i = 0..=len`.
    pub fn reference(&self, i: usize) -> FlatReference {
        debug_assert!(i <= self.len);
        self.traj.reference(self.start + i)
    }

    pub fn coarse_positions(&self, stride: usize) -> Vec<Vec3> {
        self.traj
            .coarse_positions(self.start, self.len, stride)
            .expect("window already validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_keypoints() -> Keypoints {
        Keypoints::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
            ],
            vec![0.0, 1.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn zigzag_two_keypoints_constant_velocity() {
        let kp = Keypoints::new(
            vec![Vec3::zero(), Vec3::new(2.0, 0.0, 1.0)],
            vec![0.0, 4.0],
        )
        .unwrap();
        let z = ZigZag::new(kp);
        let r = z.eval(1.0);
        assert!((r.vel - Vec3::new(0.5, 0.0, 0.25)).norm() < 1e-12);
        assert!((r.pos - Vec3::new(0.5, 0.0, 0.25)).norm() < 1e-12);
        assert!(r.acc.norm() == 0.0 && r.jerk.norm() == 0.0);
    }

    #[test]
    fn zigzag_corner_flips_velocity() {
        let z = ZigZag::new(square_keypoints());
        let before = z.eval(1.0 - 1e-9);
        let after = z.eval(1.0);
        assert!((before.vel - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-6);
        assert!((after.vel - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zigzag_velocity_integrates_to_displacement() {
        // The velocity jump at each knot puts O(dt) error into the trapezoid
        // rule, so dt must be fine enough for the 1e-6 displacement check.
        let z = ZigZag::new(square_keypoints());
        let dt = 1e-6;
        let n = (z.duration() / dt) as usize;
        let mut integral = Vec3::zero();
        for i in 0..n {
            let v0 = z.eval(i as f64 * dt).vel;
            let v1 = z.eval((i + 1) as f64 * dt).vel;
            integral = integral + (v0 + v1).scale(0.5 * dt);
        }
        let expect = Vec3::new(1.0, 1.0, 0.0);
        assert!((integral - expect).norm() < 1e-6, "integral {integral:?}");
    }

    #[test]
    fn lissajous_zero_amplitude_is_stationary() {
        let l = Lissajous {
            amplitude: Vec3::zero(),
            frequency: Vec3::new(1.0, 2.0, 3.0),
            phase: Vec3::zero(),
            center: Vec3::new(1.0, 2.0, 3.0),
            duration: 5.0,
        };
        for t in [0.0, 1.3, 4.9] {
            let r = l.eval(t);
            assert_eq!(r.pos, l.center);
            assert!(r.vel.norm() == 0.0);
        }
    }

    #[test]
    fn lissajous_unit_1hz_velocity_at_zero() {
        let l = Lissajous {
            amplitude: Vec3::new(1.0, 0.0, 0.0),
            frequency: Vec3::new(1.0, 0.0, 0.0),
            phase: Vec3::zero(),
            center: Vec3::zero(),
            duration: 2.0,
        };
        let r = l.eval(0.0);
        assert!((r.vel.x - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn lissajous_derivatives_match_finite_differences() {
        let l = Lissajous {
            amplitude: Vec3::new(1.2, 0.8, 0.5),
            frequency: Vec3::new(0.4, 0.3, 0.5),
            phase: Vec3::new(0.1, 1.2, -0.4),
            center: Vec3::new(0.5, -0.25, 1.0),
            duration: 8.0,
        };
        let h = 1e-6;
        for &t in &[0.3, 2.2, 6.7] {
            let r = l.eval(t);
            let rp = l.eval(t + h);
            let rm = l.eval(t - h);
            let vel_fd = (rp.pos - rm.pos).scale(1.0 / (2.0 * h));
            let acc_fd = (rp.vel - rm.vel).scale(1.0 / (2.0 * h));
            let jerk_fd = (rp.acc - rm.acc).scale(1.0 / (2.0 * h));
            assert!((r.vel - vel_fd).norm() < 1e-6);
            assert!((r.acc - acc_fd).norm() < 1e-6);
            assert!((r.jerk - jerk_fd).norm() < 1e-5);
        }
    }

    #[test]
    fn dense_sampling_pads_with_hold() {
        let z = Trajectory::ZigZag(ZigZag::new(square_keypoints()));
        let dt = 0.01;
        let s = z.sample_dense(dt, 100);
        assert_eq!(s.steps(), 200);
        assert_eq!(s.samples(), 201 + 100);
        let last = s.reference(s.samples() - 1);
        assert_eq!(last.pos, Vec3::new(1.0, 1.0, 0.0));
        assert!(last.vel.norm() == 0.0);
    }

    #[test]
    fn window_bounds_are_checked() {
        let z = Trajectory::ZigZag(ZigZag::new(square_keypoints()));
        let s = z.sample_dense(0.01, 0);
        assert!(s.window(0, 200).is_ok());
        assert!(s.window(1, 200).is_err());
        assert!(s.window(150, 100).is_err());
    }

    #[test]
    fn coarse_positions_subsample_dense() {
        let z = Trajectory::ZigZag(ZigZag::new(square_keypoints()));
        let s = z.sample_dense(0.01, 100);
        let coarse = s.coarse_positions(40, 100, 5).unwrap();
        assert_eq!(coarse.len(), 21);
        for (j, c) in coarse.iter().enumerate() {
            assert_eq!(*c, s.reference(40 + 5 * j).pos);
        }
    }
}
