//! The learned performance predictor: input encoding, normalized forward
//! passes, input gradients, and the model file format.
//!
//! The full input is `[g (8) | v (3) q (4) ω (3) | τ̄ (63)]` where τ̄ holds 21
//! upcoming reference positions, sampled every 5 simulator steps across the
//! 100-step horizon, each shifted by the current position. The lookahead-free
//! variant replaces τ̄ with the current position error.

use std::io::Read;
use std::path::Path;

use crate::controller::Gains;
use crate::error::{Error, Result};

use crate::metrics::CostWeights;
use crate::mlp::{Dtype, Mlp, Scratch};
use crate::spline::TrajWindow;
use crate::state::QuadState;

/// Lookahead horizon in simulator steps.
pub const HORIZON_STEPS: usize = 100;
/// Simulator steps between coarse lookahead samples.
pub const COARSE_STRIDE: usize = 5;
/// Coarse lookahead samples over the horizon, endpoints included.
pub const COARSE_SAMPLES: usize = HORIZON_STEPS / COARSE_STRIDE + 1;
/// Full input dimension.
pub const INPUT_DIM_FULL: usize = 8 + 10 + 3 * COARSE_SAMPLES;
/// Input dimension of the lookahead-free variant.
pub const INPUT_DIM_NO_TRAJ: usize = 8 + 10 + 3;
/// Performance-vector dimension.
pub const OUTPUT_DIM: usize = 8;
/// Hidden layer sizes.
pub const HIDDEN_DIMS: [usize; 4] = [512, 512, 256, 256];

/// Which input encoding a model was trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputVariant {
    /// Gains, state observation, and the 21-sample trajectory lookahead.
    Full,
    /// Gains, state observation, and the current position error only.
    NoTraj,
}

impl InputVariant {
    pub fn input_dim(&self) -> usize {
        match self {
            InputVariant::Full => INPUT_DIM_FULL,
            InputVariant::NoTraj => INPUT_DIM_NO_TRAJ,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            InputVariant::Full => 0,
            InputVariant::NoTraj => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(InputVariant::Full),
            1 => Some(InputVariant::NoTraj),
            _ => None,
        }
    }
}

/// Encode one `(gains, state, window)` query as a full-variant input row.
///
/// The attitude quaternion is canonicalized to a nonnegative scalar part so
/// both representations of one rotation map to the same input.
pub fn encode(gains: &Gains, state: &QuadState, window: &TrajWindow<'_>) -> Result<Vec<f64>> {
    if window.len() < HORIZON_STEPS {
        return Err(Error::ShapeMismatch(format!(
            "window has {} steps, need {HORIZON_STEPS}",
            window.len()
        )));
    }
    let mut x = Vec::with_capacity(INPUT_DIM_FULL);
    x.extend_from_slice(&gains.to_array());
    encode_observation(state, &mut x);
    for p in window.coarse_positions(COARSE_STRIDE) {
        let rel = p - state.pos;
        x.extend_from_slice(&rel.to_array());
    }
    debug_assert_eq!(x.len(), INPUT_DIM_FULL);
    Ok(x)
}

fn encode_observation(state: &QuadState, x: &mut Vec<f64>) {
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
}

/// Everything after the 8 gain entries of an input row: the state
/// observation plus the variant's trajectory block. Gain search reuses one
/// suffix across every sampled gain vector.
pub fn encode_suffix(
    variant: InputVariant,
    state: &QuadState,
    window: &TrajWindow<'_>,
) -> Result<Vec<f64>> {
    if window.len() < HORIZON_STEPS {
        return Err(Error::ShapeMismatch(format!(
            "window has {} steps, need {HORIZON_STEPS}",
            window.len()
        )));
    }
    let mut x = Vec::with_capacity(variant.input_dim() - 8);
    encode_observation(state, &mut x);
    match variant {
        InputVariant::Full => {
            for p in window.coarse_positions(COARSE_STRIDE) {
                let rel = p - state.pos;
                x.extend_from_slice(&rel.to_array());
            }
        }
        InputVariant::NoTraj => {
            let e_p = state.pos - window.reference(0).pos;
            x.extend_from_slice(&e_p.to_array());
        }
    }
    Ok(x)
}

/// Project a full-variant input row onto the lookahead-free encoding:
/// `[g | o | e_p]` with `e_p = -τ̄₀` (the first lookahead sample is the
/// reference position minus the current position).
pub fn full_to_no_traj(full: &[f64]) -> Vec<f64> {
    debug_assert_eq!(full.len(), INPUT_DIM_FULL);
    let mut x = Vec::with_capacity(INPUT_DIM_NO_TRAJ);
    x.extend_from_slice(&full[..18]);
    x.push(-full[18]);
    x.push(-full[19]);
    x.push(-full[20]);
    x
}

/// A trained predictor: network weights plus input/output normalization.
#[derive(Clone, Debug)]
pub struct MlpModel<T> {
    pub variant: InputVariant,
    pub mlp: Mlp<T>,
    pub input_mean: Vec<T>,
    pub input_std: Vec<T>,
    pub output_mean: Vec<T>,
    pub output_std: Vec<T>,
}

impl<T: Dtype> MlpModel<T> {
    /// Freshly initialized network with identity normalization.
    pub fn init(variant: InputVariant, rng: &mut impl rand::Rng) -> Result<Self> {
        let mut dims = vec![variant.input_dim()];
        dims.extend_from_slice(&HIDDEN_DIMS);
        dims.push(OUTPUT_DIM);
        Ok(MlpModel {
            variant,
            mlp: Mlp::init(&dims, rng)?,
            input_mean: vec![T::zero(); variant.input_dim()],
            input_std: vec![T::one(); variant.input_dim()],
            output_mean: vec![T::zero(); OUTPUT_DIM],
            output_std: vec![T::one(); OUTPUT_DIM],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mlp.input_dim();
        if self.input_mean.len() != d
            || self.input_std.len() != d
            || self.output_mean.len() != OUTPUT_DIM
            || self.output_std.len() != OUTPUT_DIM
            || self.mlp.output_dim() != OUTPUT_DIM
        {
            return Err(Error::Model("normalization shape mismatch".into()));
        }
        let floor = T::cast_from(1e-8);
        if self.input_std.iter().chain(&self.output_std).any(|s| *s < floor) {
            return Err(Error::Model("normalization std below 1e-8".into()));
        }
        Ok(())
    }

    pub fn scratch(&self, batch: usize) -> Scratch<T> {
        self.mlp.scratch(batch)
    }

    fn normalize_into(&self, raw: &[f64], out: &mut Vec<T>) {
        let d = self.input_dim();
        debug_assert_eq!(raw.len() % d, 0);
        out.clear();
        out.reserve(raw.len());
        for (i, v) in raw.iter().enumerate() {
            let j = i % d;
            out.push((T::cast_from(*v) - self.input_mean[j]) / self.input_std[j]);
        }
    }

    /// Batched prediction: de-normalized performance vectors, row-major.
    pub fn predict_batch(
        &self,
        raw_inputs: &[f64],
        scratch: &mut Scratch<T>,
    ) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if raw_inputs.len() != scratch.batch() * d {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs vs batch {} × dim {d}",
                raw_inputs.len(),
                scratch.batch()
            )));
        }
        if !raw_inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::Model("non-finite predictor input".into()));
        }
        let mut normalized = Vec::new();
        self.normalize_into(raw_inputs, &mut normalized);
        let out = self.mlp.forward_batch(&normalized, scratch);
        let mut result = Vec::with_capacity(out.len());
        for (i, v) in out.iter().enumerate() {
            let j = i % OUTPUT_DIM;
            result.push((*v * self.output_std[j] + self.output_mean[j]).as_f64());
        }
        Ok(result)
    }

    /// Single prediction.
    pub fn predict(&self, raw_input: &[f64]) -> Result<Vec<f64>> {
        let mut scratch = self.scratch(1);
        self.predict_batch(raw_input, &mut scratch)
    }

    /// Predicted scalar costs `wᵀĉ` for a batch.
    pub fn predict_cost_batch(
        &self,
        raw_inputs: &[f64],
        weights: &CostWeights,
        scratch: &mut Scratch<T>,
    ) -> Result<Vec<f64>> {
        let preds = self.predict_batch(raw_inputs, scratch)?;
        Ok(preds
            .chunks_exact(OUTPUT_DIM)
            .map(|c| c.iter().zip(&weights.0).map(|(ci, wi)| ci * wi).sum())
            .collect())
    }

    /// Exact reverse-mode gradient of `wᵀĉ` with respect to the raw
    /// (un-normalized) input vector.
    pub fn input_gradient(&self, raw_input: &[f64], weights: &CostWeights) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if raw_input.len() != d {
            return Err(Error::ShapeMismatch(format!("input len {} != {d}", raw_input.len())));
        }
        if !raw_input.iter().all(|v| v.is_finite()) {
            return Err(Error::Model("non-finite predictor input".into()));
        }
        let mut normalized = Vec::new();
        self.normalize_into(raw_input, &mut normalized);
        // dJ/d(pred_norm) = w ∘ output_std, through the de-normalization
        let d_out: Vec<T> = (0..OUTPUT_DIM)
            .map(|j| T::cast_from(weights.0[j]) * self.output_std[j])
            .collect();
        let mut scratch = self.scratch(1);
        let g_norm = self.mlp.input_gradient(&normalized, &d_out, &mut scratch);
        Ok(g_norm
            .iter()
            .zip(&self.input_std)
            .map(|(g, s)| (*g / *s).as_f64())
            .collect())
    }

    /// Convert precision (used to build f64 twins of f32 models in tests).
    pub fn convert<U: Dtype>(&self) -> MlpModel<U> {
        let recast = |v: &[T]| -> Vec<U> { v.iter().map(|x| U::cast_from(x.as_f64())).collect() };
        let weights: Vec<Vec<U>> = self.mlp.weights().iter().map(|w| recast(w)).collect();
        let biases: Vec<Vec<U>> = self.mlp.biases().iter().map(|b| recast(b)).collect();
        MlpModel {
            variant: self.variant,
            mlp: Mlp::from_parts(self.mlp.dims().to_vec(), weights, biases)
                .expect("shapes preserved"),
            input_mean: recast(&self.input_mean),
            input_std: recast(&self.input_std),
            output_mean: recast(&self.output_mean),
            output_std: recast(&self.output_std),
        }
    }
}

const MODEL_MAGIC: &[u8; 4] = b"TACM";
const MODEL_VERSION: u32 = 1;

impl MlpModel<f32> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.push(self.variant.tag());
        buf.push(0); // activation tag: relu
        let dims = self.mlp.dims();
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        let write_f32s = |buf: &mut Vec<u8>, v: &[f32]| {
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        };
        for l in 0..self.mlp.layers() {
            write_f32s(&mut buf, &self.mlp.weights()[l]);
            write_f32s(&mut buf, &self.mlp.biases()[l]);
        }
        write_f32s(&mut buf, &self.input_mean);
        write_f32s(&mut buf, &self.input_std);
        write_f32s(&mut buf, &self.output_mean);
        write_f32s(&mut buf, &self.output_std);
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = std::io::BufReader::new(file);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format(path, "truncated header"))?;
        if &magic != MODEL_MAGIC {
            return Err(Error::format(path, "bad magic"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)
            .map_err(|_| Error::format(path, "truncated version"))?;
        let version = u32::from_le_bytes(u32buf);
        if version != MODEL_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let mut tags = [0u8; 2];
        r.read_exact(&mut tags)
            .map_err(|_| Error::format(path, "truncated tags"))?;
        let variant = InputVariant::from_tag(tags[0])
            .ok_or_else(|| Error::format(path, format!("unknown variant tag {}", tags[0])))?;
        if tags[1] != 0 {
            return Err(Error::format(path, format!("unknown activation tag {}", tags[1])));
        }
        r.read_exact(&mut u32buf)
            .map_err(|_| Error::format(path, "truncated dim count"))?;
        let n_dims = u32::from_le_bytes(u32buf) as usize;
        if !(2..=16).contains(&n_dims) {
            return Err(Error::format(path, format!("implausible dim count {n_dims}")));
        }
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            r.read_exact(&mut u32buf)
                .map_err(|_| Error::format(path, "truncated dims"))?;
            dims.push(u32::from_le_bytes(u32buf) as usize);
        }
        let mut read_f32s = |n: usize, what: &str| -> Result<Vec<f32>> {
            let mut bytes = vec![0u8; 4 * n];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::format(path, format!("truncated {what}")))?;
            Ok(bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..n_dims - 1 {
            weights.push(read_f32s(dims[l] * dims[l + 1], &format!("weights[{l}]"))?);
            biases.push(read_f32s(dims[l + 1], &format!("biases[{l}]"))?);
        }
        let in_dim = dims[0];
        let out_dim = dims[n_dims - 1];
        let input_mean = read_f32s(in_dim, "input mean")?;
        let input_std = read_f32s(in_dim, "input std")?;
        let output_mean = read_f32s(out_dim, "output mean")?;
        let output_std = read_f32s(out_dim, "output std")?;
        if in_dim != variant.input_dim() || out_dim != OUTPUT_DIM {
            return Err(Error::format(path, "dims inconsistent with variant"));
        }
        let model = MlpModel {
            variant,
            mlp: Mlp::from_parts(dims, weights, biases).map_err(|e| match e {
                Error::Model(m) => Error::format(path, m),
                other => other,
            })?,
            input_mean,
            input_std,
            output_mean,
            output_std,
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::FlatReference;
    use crate::math::{Quat, Vec3};
    use crate::params::QuadParams;
    use crate::spline::SampledTrajectory;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_trajectory(v: Vec3, steps: usize, dt: f64) -> SampledTrajectory {
        let refs = (0..=steps)
            .map(|i| {
                let t = i as f64 * dt;
                FlatReference {
                    pos: v.scale(t),
                    vel: v,
                    acc: Vec3::zero(),
                    jerk: Vec3::zero(),
                    yaw: 0.0,
                }
            })
            .collect();
        SampledTrajectory::from_refs(dt, refs)
    }

    fn nominal_gains() -> Gains {
        Gains::from_array([0.5, 0.5, 0.6, 0.2, 0.2, 0.25, 0.03, 0.0012])
    }

    #[test]
    fn stationary_trajectory_encodes_zero_lookahead() {
        let p = QuadParams::crazyflie();
        let traj = line_trajectory(Vec3::zero(), 200, 0.01);
        // the quad sits exactly at the (constant) reference
        let state = QuadState::hover_at(Vec3::zero(), p.hover_motor_speed());
        let window = traj.window(0, 100).unwrap();
        let x = encode(&nominal_gains(), &state, &window).unwrap();
        assert_eq!(x.len(), INPUT_DIM_FULL);
        for v in &x[18..] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn shifting_position_shifts_every_lookahead_sample() {
        let traj = line_trajectory(Vec3::new(1.0, 0.0, 0.0), 200, 0.01);
        let p = QuadParams::crazyflie();
        let mut state = QuadState::hover_at(Vec3::zero(), p.hover_motor_speed());
        let window = traj.window(0, 100).unwrap();
        let x0 = encode(&nominal_gains(), &state, &window).unwrap();
        state.pos = state.pos + Vec3::new(0.1, -0.2, 0.3);
        let x1 = encode(&nominal_gains(), &state, &window).unwrap();
        for j in 0..COARSE_SAMPLES {
            let base = 18 + 3 * j;
            assert!((x1[base] - (x0[base] - 0.1)).abs() < 1e-12);
            assert!((x1[base + 1] - (x0[base + 1] + 0.2)).abs() < 1e-12);
            assert!((x1[base + 2] - (x0[base + 2] - 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn lookahead_matches_analytic_line() {
        let v = Vec3::new(0.5, -0.25, 1.0);
        let traj = line_trajectory(v, 300, 0.01);
        let p = QuadParams::crazyflie();
        let mut state = QuadState::hover_at(Vec3::zero(), p.hover_motor_speed());
        state.pos = Vec3::new(0.05, 0.0, -0.05);
        let start = 40;
        let window = traj.window(start, 100).unwrap();
        let x = encode(&nominal_gains(), &state, &window).unwrap();
        for j in 0..COARSE_SAMPLES {
            let t = (start + j * COARSE_STRIDE) as f64 * 0.01;
            let expect = v.scale(t) - state.pos;
            let base = 18 + 3 * j;
            assert!((x[base] - expect.x).abs() < 1e-12);
            assert!((x[base + 1] - expect.y).abs() < 1e-12);
            assert!((x[base + 2] - expect.z).abs() < 1e-12);
        }
    }

    #[test]
    fn quaternion_double_cover_canonicalized() {
        let p = QuadParams::crazyflie();
        let traj = line_trajectory(Vec3::zero(), 200, 0.01);
        let window = traj.window(0, 100).unwrap();
        let mut state = QuadState::hover_at(Vec3::zero(), p.hover_motor_speed());
        state.attitude = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.8);
        let x_pos = encode(&nominal_gains(), &state, &window).unwrap();
        state.attitude = Quat::new(
            -state.attitude.w,
            -state.attitude.x,
            -state.attitude.y,
            -state.attitude.z,
        );
        let x_neg = encode(&nominal_gains(), &state, &window).unwrap();
        assert_eq!(x_pos, x_neg);
    }

    #[test]
    fn too_short_window_is_rejected() {
        let traj = line_trajectory(Vec3::zero(), 50, 0.01);
        let p = QuadParams::crazyflie();
        let state = QuadState::hover_at(Vec3::zero(), p.hover_motor_speed());
        let window = traj.window(0, 50).unwrap();
        assert!(encode(&nominal_gains(), &state, &window).is_err());
    }

    #[test]
    fn no_traj_projection_carries_position_error() {
        let traj = line_trajectory(Vec3::new(1.0, 0.0, 0.0), 200, 0.01);
        let p = QuadParams::crazyflie();
        let mut state = QuadState::hover_at(Vec3::zero(), p.hover_motor_speed());
        state.pos = Vec3::new(0.3, 0.1, -0.2);
        let window = traj.window(0, 100).unwrap();
        let full = encode(&nominal_gains(), &state, &window).unwrap();
        let small = full_to_no_traj(&full);
        assert_eq!(small.len(), INPUT_DIM_NO_TRAJ);
        // e_p = p - p_d(t) = (0.3, 0.1, -0.2) - (0,0,0)
        assert!((small[18] - 0.3).abs() < 1e-12);
        assert!((small[19] - 0.1).abs() < 1e-12);
        assert!((small[20] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_model_predicts_output_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = MlpModel::<f32>::init(InputVariant::Full, &mut rng).unwrap();
        for w in model.mlp.weights_mut() {
            w.fill(0.0);
        }
        for b in model.mlp.biases_mut() {
            b.fill(0.0);
        }
        model.output_mean = (0..8).map(|i| i as f32 * 0.5).collect();
        let x = vec![0.37; INPUT_DIM_FULL];
        let pred = model.predict(&x).unwrap();
        for (i, v) in pred.iter().enumerate() {
            assert!((v - i as f64 * 0.5).abs() < 1e-6);
        }
        let g = model
            .input_gradient(&x, &CostWeights::default_weights())
            .unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_predictions_equal_single_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = MlpModel::<f32>::init(InputVariant::NoTraj, &mut rng).unwrap();
        let batch = 17;
        let inputs: Vec<f64> = (0..batch * INPUT_DIM_NO_TRAJ)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let mut scratch = model.scratch(batch);
        let preds = model.predict_batch(&inputs, &mut scratch).unwrap();
        for r in 0..batch {
            let one = model
                .predict(&inputs[r * INPUT_DIM_NO_TRAJ..(r + 1) * INPUT_DIM_NO_TRAJ])
                .unwrap();
            for j in 0..OUTPUT_DIM {
                assert_eq!(preds[r * OUTPUT_DIM + j], one[j], "row {r} out {j}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // small custom twin keeps the test quick
        let model = MlpModel::<f64> {
            variant: InputVariant::NoTraj,
            mlp: Mlp::init(&[INPUT_DIM_NO_TRAJ, 24, 16, OUTPUT_DIM], &mut rng).unwrap(),
            input_mean: (0..INPUT_DIM_NO_TRAJ).map(|i| 0.01 * i as f64).collect(),
            input_std: (0..INPUT_DIM_NO_TRAJ).map(|i| 0.5 + 0.05 * i as f64).collect(),
            output_mean: (0..OUTPUT_DIM).map(|i| 0.1 * i as f64).collect(),
            output_std: (0..OUTPUT_DIM).map(|i| 0.3 + 0.1 * i as f64).collect(),
        };
        model.validate().unwrap();
        let w = CostWeights::default_weights();
        let x: Vec<f64> = (0..INPUT_DIM_NO_TRAJ)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let g = model.input_gradient(&x, &w).unwrap();

        let cost = |x: &[f64]| -> f64 {
            let pred = model.predict(x).unwrap();
            pred.iter().zip(&w.0).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        let mut xv = x.clone();
        for i in 0..x.len() {
            let orig = xv[i];
            xv[i] = orig + h;
            let plus = cost(&xv);
            xv[i] = orig - h;
            let minus = cost(&xv);
            xv[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let denom = g[i].abs().max(fd.abs()).max(1e-8);
            assert!((g[i] - fd).abs() / denom < 1e-4, "i={i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn model_file_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = MlpModel::<f32>::init(InputVariant::Full, &mut rng).unwrap();
        model.input_mean.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 0.01);
        model.output_std.iter_mut().for_each(|v| *v = 2.0);
        let dir = std::env::temp_dir().join("taco_model_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.bin");
        model.save(&path).unwrap();
        let loaded = MlpModel::<f32>::load(&path).unwrap();
        assert_eq!(loaded.variant, model.variant);
        assert_eq!(loaded.mlp.dims(), model.mlp.dims());
        let x = vec![0.1; INPUT_DIM_FULL];
        assert_eq!(model.predict(&x).unwrap(), loaded.predict(&x).unwrap());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn corrupted_model_files_are_rejected() {
        let dir = std::env::temp_dir().join("taco_model_test_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(MlpModel::<f32>::load(&path).is_err());
        std::fs::write(&path, [MODEL_MAGIC.as_slice(), &[1, 0, 0, 0], &[9, 0]].concat()).unwrap();
        assert!(MlpModel::<f32>::load(&path).is_err());
        std::fs::remove_file(&path).ok();
    }
}
