//! Dataset generation: sample (gains, state, trajectory window) queries,
//! roll them out, and store `(input, performance)` records in a flat binary
//! format.
//!
//! Each datapoint draws its own rng stream from the base seed, so the output
//! is byte-identical no matter how many worker threads run the generation.

use std::io::Read;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controller::{flat_to_attitude, Gains};
use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::metrics::compute_perf;
use crate::params::QuadParams;
use crate::predictor::{encode, HORIZON_STEPS, INPUT_DIM_FULL, OUTPUT_DIM};
use crate::sim::rollout;
use crate::spline::{sample_trajectory, TrajectoryConfig, TrajectoryFamily};
use crate::state::QuadState;

/// Flat in-memory dataset of input/output rows.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub input_dim: usize,
    pub output_dim: usize,
    pub inputs: Vec<f32>,
    pub outputs: Vec<f32>,
}

impl Dataset {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Dataset {
            input_dim,
            output_dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        if self.input_dim == 0 {
            0
        } else {
            self.inputs.len() / self.input_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn output(&self, i: usize) -> &[f32] {
        &self.outputs[i * self.output_dim..(i + 1) * self.output_dim]
    }

    pub fn push(&mut self, input: &[f32], output: &[f32]) {
        debug_assert_eq!(input.len(), self.input_dim);
        debug_assert_eq!(output.len(), self.output_dim);
        self.inputs.extend_from_slice(input);
        self.outputs.extend_from_slice(output);
    }
}

const DATASET_MAGIC: &[u8; 4] = b"TACD";
const DATASET_VERSION: u32 = 1;

/// Write the dataset: fixed header then per-record little-endian f32 rows.
pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(24 + 4 * (data.inputs.len() + data.outputs.len()));
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(data.input_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(data.output_dim as u32).to_le_bytes());
    for i in 0..data.len() {
        for v in data.input(i) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in data.output(i) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(path, "truncated magic"))?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let mut u32b = [0u8; 4];
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u32b)
        .map_err(|_| Error::format(path, "truncated version"))?;
    let version = u32::from_le_bytes(u32b);
    if version != DATASET_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    r.read_exact(&mut u64b)
        .map_err(|_| Error::format(path, "truncated count"))?;
    let count = u64::from_le_bytes(u64b) as usize;
    r.read_exact(&mut u32b)
        .map_err(|_| Error::format(path, "truncated input dim"))?;
    let input_dim = u32::from_le_bytes(u32b) as usize;
    r.read_exact(&mut u32b)
        .map_err(|_| Error::format(path, "truncated output dim"))?;
    let output_dim = u32::from_le_bytes(u32b) as usize;

    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    let record_bytes = 4 * (input_dim + output_dim);
    if body.len() != count * record_bytes {
        let full_records = body.len() / record_bytes.max(1);
        return Err(Error::format(
            path,
            format!(
                "expected {count} records, file truncated at record {full_records}"
            ),
        ));
    }
    let mut data = Dataset::new(input_dim, output_dim);
    data.inputs.reserve(count * input_dim);
    data.outputs.reserve(count * output_dim);
    for rec in body.chunks_exact(record_bytes) {
        for c in rec[..4 * input_dim].chunks_exact(4) {
            data.inputs.push(f32::from_le_bytes(c.try_into().unwrap()));
        }
        for c in rec[4 * input_dim..].chunks_exact(4) {
            data.outputs.push(f32::from_le_bytes(c.try_into().unwrap()));
        }
    }
    Ok(data)
}

/// Everything that shapes the sampled training distribution.
#[derive(Clone, Debug)]
pub struct DatagenConfig {
    pub count: usize,
    pub seed: u64,
    pub trajectory: TrajectoryConfig,
    /// Gain-space box the tuner will later search; samples are uniform in it.
    pub gain_min: [f64; 8],
    pub gain_max: [f64; 8],
    /// Initial-state offsets from the reference at the sampled time.
    pub position_offset: f64,
    pub velocity_offset: f64,
    pub attitude_offset_rad: f64,
    pub horizon: usize,
    pub dt: f64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            count: 200_000,
            seed: 0,
            trajectory: TrajectoryConfig::default(),
            gain_min: Gains::default_bounds().0.to_array(),
            gain_max: Gains::default_bounds().1.to_array(),
            position_offset: 0.25,
            velocity_offset: 0.5,
            attitude_offset_rad: 15.0_f64.to_radians(),
            horizon: HORIZON_STEPS,
            dt: 0.01,
        }
    }
}

/// Wall-time and resampling bookkeeping of one generation run.
#[derive(Clone, Debug)]
pub struct GenStats {
    pub count: usize,
    pub resamples: usize,
    pub crashes: usize,
    pub wall_seconds: f64,
}

/// Sample the initial state around the reference, as in the training recipe:
/// uniform position and velocity offsets, an attitude perturbation of
/// bounded angle around the reference attitude, reference body rates, and
/// hover motor speeds.
fn sample_initial_state(
    reference: &crate::controller::FlatReference,
    params: &QuadParams,
    cfg: &DatagenConfig,
    rng: &mut impl Rng,
) -> QuadState {
    let (att_ref, rates) = match flat_to_attitude(reference, params) {
        Ok((r, omega, _)) => (Quat::from_mat(&r), omega),
        Err(_) => (Quat::identity(), Vec3::zero()),
    };
    let axis = loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v.scale(1.0 / n);
        }
    };
    let angle = rng.random_range(0.0..cfg.attitude_offset_rad);
    let attitude = att_ref.mul_quat(Quat::from_axis_angle(axis, angle)).normalize();
    QuadState {
        pos: reference.pos
            + Vec3::new(
                rng.random_range(-cfg.position_offset..cfg.position_offset),
                rng.random_range(-cfg.position_offset..cfg.position_offset),
                rng.random_range(-cfg.position_offset..cfg.position_offset),
            ),
        vel: reference.vel
            + Vec3::new(
                rng.random_range(-cfg.velocity_offset..cfg.velocity_offset),
                rng.random_range(-cfg.velocity_offset..cfg.velocity_offset),
                rng.random_range(-cfg.velocity_offset..cfg.velocity_offset),
            ),
        attitude,
        body_rates: rates,
        motor_speeds: [params.hover_motor_speed(); 4],
    }
}

fn sample_gains(cfg: &DatagenConfig, rng: &mut impl Rng) -> Gains {
    let mut g = [0.0; 8];
    for i in 0..8 {
        g[i] = rng.random_range(cfg.gain_min[i]..cfg.gain_max[i]);
    }
    Gains::from_array(g)
}

/// One datapoint from its own derived rng stream. Trajectory-construction
/// failures resample from the same stream; the attempt count is returned.
fn generate_point(
    index: u64,
    cfg: &DatagenConfig,
    params: &QuadParams,
) -> Result<(Vec<f32>, Vec<f32>, usize, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut attempts = 0;
    loop {
        let family = TrajectoryFamily::TRAINING[rng.random_range(0..4)];
        let traj = match sample_trajectory(family, &cfg.trajectory, &mut rng) {
            Ok(t) => t,
            Err(_) if attempts < 16 => {
                attempts += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let dense = traj.sample_dense(cfg.dt, cfg.horizon);
        let start = rng.random_range(0..=dense.steps());
        let window = dense
            .window(start, cfg.horizon)
            .expect("padding keeps every start in range");
        let initial = sample_initial_state(&window.reference(0), params, cfg, &mut rng);
        let gains = sample_gains(cfg, &mut rng);

        let x = encode(&gains, &initial, &window)?;
        let log = rollout(&initial, &gains, &window, params, cfg.dt);
        let crashed = log.diverged;
        let c = compute_perf(&log, &window)?;
        let xs: Vec<f32> = x.iter().map(|v| *v as f32).collect();
        let cs: Vec<f32> = c.0.iter().map(|v| *v as f32).collect();
        return Ok((xs, cs, attempts, crashed));
    }
}

/// Generate `cfg.count` datapoints, parallelized across the rayon pool.
/// Deterministic for a fixed seed regardless of thread count.
pub fn generate_dataset(cfg: &DatagenConfig, params: &QuadParams) -> Result<(Dataset, GenStats)> {
    if cfg.count == 0 {
        return Err(Error::InvalidParams("count must be >= 1".into()));
    }
    params.validate()?;
    let t0 = Instant::now();
    let rows: Result<Vec<(Vec<f32>, Vec<f32>, usize, bool)>> = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| generate_point(i, cfg, params))
        .collect();
    let rows = rows?;

    let resamples: usize = rows.iter().map(|r| r.2).sum();
    if resamples * 100 > cfg.count {
        return Err(Error::Trajectory(format!(
            "resample rate too high: {resamples} resamples over {} points",
            cfg.count
        )));
    }
    let crashes = rows.iter().filter(|r| r.3).count();
    let mut data = Dataset::new(INPUT_DIM_FULL, OUTPUT_DIM);
    for (x, c, _, _) in &rows {
        data.push(x, c);
    }
    Ok((
        data,
        GenStats {
            count: cfg.count,
            resamples,
            crashes,
            wall_seconds: t0.elapsed().as_secs_f64(),
        },
    ))
}
