//! Random trajectory generation: the four training families plus the
//! out-of-distribution Lissajous family used for evaluation.

use rand::Rng;

use crate::error::Result;
use crate::math::Vec3;

use super::{random_polynomial, Keypoints, Lissajous, SplineTrajectory, Trajectory, ZigZag};

/// Per-segment durations are capped so long slow segments cannot blow up the
/// conditioning of the unnormalized monomial basis.
pub const SEGMENT_DURATION_CAP: f64 = 5.0;
const SEGMENT_DURATION_MIN: f64 = 0.05;

/// Trajectory family tags, matching the on-disk `type` field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryFamily {
    MinSnap,
    MinSnapVarying,
    RandomPoly,
    ZigZag,
    Lissajous,
}

impl TrajectoryFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            TrajectoryFamily::MinSnap => "minsnap",
            TrajectoryFamily::MinSnapVarying => "minsnap-varying",
            TrajectoryFamily::RandomPoly => "random-poly",
            TrajectoryFamily::ZigZag => "zigzag",
            TrajectoryFamily::Lissajous => "lissajous",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "minsnap" => Some(TrajectoryFamily::MinSnap),
            "minsnap-varying" => Some(TrajectoryFamily::MinSnapVarying),
            "random-poly" => Some(TrajectoryFamily::RandomPoly),
            "zigzag" => Some(TrajectoryFamily::ZigZag),
            "lissajous" => Some(TrajectoryFamily::Lissajous),
            _ => None,
        }
    }

    /// The four families sampled uniformly during dataset generation.
    pub const TRAINING: [TrajectoryFamily; 4] = [
        TrajectoryFamily::MinSnap,
        TrajectoryFamily::MinSnapVarying,
        TrajectoryFamily::RandomPoly,
        TrajectoryFamily::ZigZag,
    ];
}

/// Knobs for random trajectory sampling.
#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    /// Number of keypoints per trajectory.
    pub keypoint_count: usize,
    /// Keypoints are drawn uniformly from `[-half_extent, half_extent]³`.
    pub cube_half_extent: f64,
    /// Average-speed range (m/s) used to set segment durations.
    pub speed_range: (f64, f64),
    /// Std of the nullspace displacement for the random-polynomial family.
    pub random_poly_scale: f64,
    /// Per-axis amplitude range (m) for Lissajous sampling.
    pub lissajous_amplitude: (f64, f64),
    /// Per-axis frequency range (Hz) for Lissajous sampling.
    pub lissajous_frequency: (f64, f64),
    /// Duration range (s) for Lissajous sampling.
    pub lissajous_duration: (f64, f64),
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            keypoint_count: 5,
            cube_half_extent: 2.0,
            speed_range: (0.5, 3.0),
            random_poly_scale: 1.0,
            lissajous_amplitude: (0.5, 1.5),
            lissajous_frequency: (0.2, 0.6),
            lissajous_duration: (6.0, 10.0),
        }
    }
}

/// Uniform keypoint positions inside the configured cube.
pub fn random_keypoints(rng: &mut impl Rng, count: usize, half_extent: f64) -> Vec<Vec3> {
    (0..count)
        .map(|_| {
            Vec3::new(
                rng.random_range(-half_extent..half_extent),
                rng.random_range(-half_extent..half_extent),
                rng.random_range(-half_extent..half_extent),
            )
        })
        .collect()
}

fn clamp_duration(d: f64) -> f64 {
    d.clamp(SEGMENT_DURATION_MIN, SEGMENT_DURATION_CAP)
}

/// Passage times from one constant average speed.
pub fn times_from_speed(positions: &[Vec3], speed: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    for w in positions.windows(2) {
        let d = (w[1] - w[0]).norm();
        times.push(times.last().unwrap() + clamp_duration(d / speed));
    }
    times
}

/// Passage times from independent per-segment average speeds.
pub fn times_from_speeds(positions: &[Vec3], speeds: &[f64]) -> Vec<f64> {
    assert_eq!(speeds.len() + 1, positions.len());
    let mut times = vec![0.0];
    for (w, speed) in positions.windows(2).zip(speeds) {
        let d = (w[1] - w[0]).norm();
        times.push(times.last().unwrap() + clamp_duration(d / speed));
    }
    times
}

/// Sample one trajectory of the given family, as in dataset generation:
/// random keypoints in the cube, a random average speed (per segment for the
/// varying family), and the family's interpolation.
pub fn sample_trajectory(
    family: TrajectoryFamily,
    cfg: &TrajectoryConfig,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    if family == TrajectoryFamily::Lissajous {
        let range = |lo: f64, hi: f64, rng: &mut dyn rand::RngCore| -> f64 {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let (a_lo, a_hi) = cfg.lissajous_amplitude;
        let (f_lo, f_hi) = cfg.lissajous_frequency;
        let (d_lo, d_hi) = cfg.lissajous_duration;
        let two_pi = 2.0 * std::f64::consts::PI;
        return Ok(Trajectory::Lissajous(Lissajous {
            amplitude: Vec3::new(range(a_lo, a_hi, rng), range(a_lo, a_hi, rng), range(a_lo, a_hi, rng)),
            frequency: Vec3::new(range(f_lo, f_hi, rng), range(f_lo, f_hi, rng), range(f_lo, f_hi, rng)),
            phase: Vec3::new(
                rng.random_range(0.0..two_pi),
                rng.random_range(0.0..two_pi),
                rng.random_range(0.0..two_pi),
            ),
            center: Vec3::zero(),
            duration: range(d_lo, d_hi, rng),
        }));
    }

    let positions = random_keypoints(rng, cfg.keypoint_count, cfg.cube_half_extent);
    let (lo, hi) = cfg.speed_range;
    let times = match family {
        TrajectoryFamily::MinSnapVarying => {
            let speeds: Vec<f64> = (0..positions.len() - 1)
                .map(|_| rng.random_range(lo..hi))
                .collect();
            times_from_speeds(&positions, &speeds)
        }
        _ => times_from_speed(&positions, rng.random_range(lo..hi)),
    };
    let keypoints = Keypoints::new(positions, times)?;
    Ok(match family {
        TrajectoryFamily::MinSnap | TrajectoryFamily::MinSnapVarying => {
            Trajectory::Spline(SplineTrajectory::minsnap(keypoints, 7)?)
        }
        TrajectoryFamily::RandomPoly => {
            Trajectory::Spline(random_polynomial(keypoints, cfg.random_poly_scale, rng)?)
        }
        TrajectoryFamily::ZigZag => Trajectory::ZigZag(ZigZag::new(keypoints)),
        TrajectoryFamily::Lissajous => unreachable!(),
    })
}

/// Sample an evaluation trajectory with a target duration: keypoints are
/// appended along a random walk in the cube until the path is long enough
/// that traversing it at `speed` takes the sampled duration.
pub fn sample_eval_trajectory(
    family: TrajectoryFamily,
    cfg: &TrajectoryConfig,
    duration_range: (f64, f64),
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    if family == TrajectoryFamily::Lissajous {
        let mut lcfg = cfg.clone();
        lcfg.lissajous_duration = duration_range;
        return sample_trajectory(family, &lcfg, rng);
    }

    let (lo, hi) = cfg.speed_range;
    let speed = rng.random_range(lo..hi);
    let duration = rng.random_range(duration_range.0..duration_range.1);
    let target_length = speed * duration;

    let h = cfg.cube_half_extent;
    let mut positions = vec![Vec3::new(
        rng.random_range(-h..h),
        rng.random_range(-h..h),
        rng.random_range(-h..h),
    )];
    let mut length = 0.0;
    while length < target_length {
        // keep segments in a moderate band so knot spacing stays sane
        let prev = *positions.last().unwrap();
        let next = loop {
            let cand = Vec3::new(
                rng.random_range(-h..h),
                rng.random_range(-h..h),
                rng.random_range(-h..h),
            );
            let d = (cand - prev).norm();
            if (0.8..=3.0).contains(&d) {
                break cand;
            }
        };
        length += (next - prev).norm();
        positions.push(next);
    }

    let times = match family {
        TrajectoryFamily::MinSnapVarying => {
            let speeds: Vec<f64> = (0..positions.len() - 1)
                .map(|_| rng.random_range(lo..hi))
                .collect();
            times_from_speeds(&positions, &speeds)
        }
        _ => times_from_speed(&positions, speed),
    };
    let keypoints = Keypoints::new(positions, times)?;
    Ok(match family {
        TrajectoryFamily::MinSnap | TrajectoryFamily::MinSnapVarying => {
            Trajectory::Spline(SplineTrajectory::minsnap(keypoints, 7)?)
        }
        TrajectoryFamily::RandomPoly => {
            Trajectory::Spline(random_polynomial(keypoints, cfg.random_poly_scale, rng)?)
        }
        TrajectoryFamily::ZigZag => Trajectory::ZigZag(ZigZag::new(keypoints)),
        TrajectoryFamily::Lissajous => unreachable!(),
    })
}
