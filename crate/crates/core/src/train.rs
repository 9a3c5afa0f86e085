//! Predictor training: normalization, Adam, cosine decay, best-on-validation
//! selection. Deterministic for a fixed seed.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::mlp::{Gradients, Mlp};
use crate::predictor::{full_to_no_traj, InputVariant, MlpModel, INPUT_DIM_FULL, OUTPUT_DIM};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the dataset held out for validation.
    pub validation_fraction: f64,
    pub variant: InputVariant,
    /// Cosine-decay the learning rate to this fraction of its initial value.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 25,
            batch_size: 1024,
            learning_rate: 3e-3,
            validation_fraction: 0.1,
            variant: InputVariant::Full,
            final_lr_fraction: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| format!("line {}: bad {what} `{value}`", lineno + 1);
            match key {
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("epochs"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
                "learning_rate" => {
                    cfg.learning_rate = value.parse().map_err(|_| bad("learning_rate"))?
                }
                "validation_fraction" => {
                    cfg.validation_fraction =
                        value.parse().map_err(|_| bad("validation_fraction"))?
                }
                "final_lr_fraction" => {
                    cfg.final_lr_fraction = value.parse().map_err(|_| bad("final_lr_fraction"))?
                }
                "variant" => {
                    cfg.variant = match value {
                        "full" => InputVariant::Full,
                        "no-traj" => InputVariant::NoTraj,
                        _ => return Err(bad("variant")),
                    }
                }
                other => return Err(format!("line {}: unknown key `{other}`", lineno + 1)),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|d| Error::format(path, d))
    }

    pub fn to_file_string(&self) -> String {
        format!(
            "seed = {}\nepochs = {}\nbatch_size = {}\nlearning_rate = {:?}\nvalidation_fraction = {:?}\nfinal_lr_fraction = {:?}\nvariant = {}\n",
            self.seed,
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.validation_fraction,
            self.final_lr_fraction,
            match self.variant {
                InputVariant::Full => "full",
                InputVariant::NoTraj => "no-traj",
            }
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Mean squared error on normalized targets, per epoch.
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    /// Validation mean absolute error per target, de-normalized units.
    pub val_mae: [f64; 8],
    pub train_rows: usize,
    pub val_rows: usize,
    pub wall_seconds: f64,
}

struct Adam {
    m_w: Vec<Vec<f32>>,
    v_w: Vec<Vec<f32>>,
    m_b: Vec<Vec<f32>>,
    v_b: Vec<Vec<f32>>,
    step: u64,
}

impl Adam {
    fn new(mlp: &Mlp<f32>) -> Self {
        Adam {
            m_w: mlp.weights().iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: mlp.weights().iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: mlp.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: mlp.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, mlp: &mut Mlp<f32>, grads: &Gradients<f32>, lr: f32) {
        const B1: f32 = 0.9;
        const B2: f32 = 0.999;
        const EPS: f32 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - B1.powi(self.step as i32);
        let bc2 = 1.0 - B2.powi(self.step as i32);
        for l in 0..mlp.layers() {
            let apply = |p: &mut [f32], g: &[f32], m: &mut [f32], v: &mut [f32]| {
                for i in 0..p.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                }
            };
            apply(
                &mut mlp.weights_mut()[l],
                &grads.d_weights[l],
                &mut self.m_w[l],
                &mut self.v_w[l],
            );
            apply(
                &mut mlp.biases_mut()[l],
                &grads.d_biases[l],
                &mut self.m_b[l],
                &mut self.v_b[l],
            );
        }
    }
}

/// Feature-wise mean and std over the rows; near-constant features get
/// std 1 so they normalize to zero instead of exploding.
fn normalization_stats(rows: &[f32], dim: usize) -> (Vec<f32>, Vec<f32>) {
    let n = rows.len() / dim;
    let mut mean = vec![0.0f64; dim];
    for r in 0..n {
        for j in 0..dim {
            mean[j] += rows[r * dim + j] as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0f64; dim];
    for r in 0..n {
        for j in 0..dim {
            let d = rows[r * dim + j] as f64 - mean[j];
            var[j] += d * d;
        }
    }
    let std: Vec<f32> = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s < 1e-8 {
                1.0
            } else {
                s as f32
            }
        })
        .collect();
    (mean.iter().map(|m| *m as f32).collect(), std)
}

/// Project dataset inputs onto the requested variant's encoding.
fn variant_inputs(data: &Dataset, variant: InputVariant) -> Result<Vec<f32>> {
    match (variant, data.input_dim) {
        (InputVariant::Full, d) if d == INPUT_DIM_FULL => Ok(data.inputs.clone()),
        (InputVariant::NoTraj, d) if d == INPUT_DIM_FULL => {
            let mut out = Vec::with_capacity(data.len() * variant.input_dim());
            for i in 0..data.len() {
                let full: Vec<f64> = data.input(i).iter().map(|v| *v as f64).collect();
                out.extend(full_to_no_traj(&full).iter().map(|v| *v as f32));
            }
            Ok(out)
        }
        (v, d) if d == v.input_dim() => Ok(data.inputs.clone()),
        (v, d) => Err(Error::ShapeMismatch(format!(
            "dataset input dim {d} incompatible with variant {v:?}"
        ))),
    }
}

/// Train a predictor on the dataset. Returns the best-on-validation model
/// with its normalization baked in, plus the loss curves.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(MlpModel<f32>, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Model("empty dataset".into()));
    }
    if data.output_dim != OUTPUT_DIM {
        return Err(Error::ShapeMismatch(format!(
            "dataset output dim {} != {OUTPUT_DIM}",
            data.output_dim
        )));
    }
    if !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0) {
        return Err(Error::InvalidParams("validation_fraction must be in (0,1)".into()));
    }
    let t0 = Instant::now();
    let dim = config.variant.input_dim();
    let inputs = variant_inputs(data, config.variant)?;
    let n = data.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let val_rows = ((n as f64 * config.validation_fraction) as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = order.split_at(val_rows);
    let train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    // normalization from the training split only
    let mut train_inputs = Vec::with_capacity(train_idx.len() * dim);
    let mut train_targets = Vec::with_capacity(train_idx.len() * OUTPUT_DIM);
    for &i in &train_idx {
        train_inputs.extend_from_slice(&inputs[i * dim..(i + 1) * dim]);
        train_targets.extend_from_slice(data.output(i));
    }
    let (in_mean, in_std) = normalization_stats(&train_inputs, dim);
    let (out_mean, out_std) = normalization_stats(&train_targets, OUTPUT_DIM);

    let normalize = |rows: &[f32], mean: &[f32], std: &[f32], dim: usize| -> Vec<f32> {
        rows.iter()
            .enumerate()
            .map(|(i, v)| (v - mean[i % dim]) / std[i % dim])
            .collect()
    };
    let train_x = normalize(&train_inputs, &in_mean, &in_std, dim);
    let train_y = normalize(&train_targets, &out_mean, &out_std, OUTPUT_DIM);
    drop(train_inputs);
    drop(train_targets);

    let mut val_x = Vec::with_capacity(val_idx.len() * dim);
    let mut val_y_raw = Vec::with_capacity(val_idx.len() * OUTPUT_DIM);
    for &i in &val_idx {
        val_x.extend_from_slice(&inputs[i * dim..(i + 1) * dim]);
        val_y_raw.extend_from_slice(data.output(i));
    }
    let val_x = normalize(&val_x, &in_mean, &in_std, dim);
    let val_y = normalize(&val_y_raw, &out_mean, &out_std, OUTPUT_DIM);
    drop(inputs);

    let mut model = MlpModel::<f32>::init(config.variant, &mut rng)?;
    model.input_mean = in_mean;
    model.input_std = in_std;
    model.output_mean = out_mean;
    model.output_std = out_std;
    model.validate()?;

    let n_train = train_idx.len();
    let batch = config.batch_size.min(n_train).max(1);
    let mut scratch = model.mlp.scratch(batch);
    let mut grads = Gradients::zeros_like(&model.mlp);
    let mut adam = Adam::new(&model.mlp);
    let mut batch_x = vec![0.0f32; batch * dim];
    let mut batch_y = vec![0.0f32; batch * OUTPUT_DIM];
    let mut d_out = vec![0.0f32; batch * OUTPUT_DIM];
    let mut d_input = vec![0.0f32; batch * dim];

    let mut report = TrainReport {
        train_losses: Vec::with_capacity(config.epochs),
        val_losses: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        val_mae: [0.0; 8],
        train_rows: n_train,
        val_rows: val_idx.len(),
        wall_seconds: 0.0,
    };
    let mut best = (f64::INFINITY, model.mlp.clone());
    let mut row_order: Vec<usize> = (0..n_train).collect();

    for epoch in 0..config.epochs {
        // cosine decay from lr to final_lr_fraction * lr
        let progress = if config.epochs > 1 {
            epoch as f64 / (config.epochs - 1) as f64
        } else {
            0.0
        };
        let floor = config.final_lr_fraction;
        let lr = config.learning_rate
            * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));

        row_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0.0f64;
        for rows in row_order.chunks(batch) {
            if rows.len() < batch {
                break; // drop the ragged tail; rows reshuffle every epoch
            }
            for (bi, &r) in rows.iter().enumerate() {
                batch_x[bi * dim..(bi + 1) * dim].copy_from_slice(&train_x[r * dim..(r + 1) * dim]);
                batch_y[bi * OUTPUT_DIM..(bi + 1) * OUTPUT_DIM]
                    .copy_from_slice(&train_y[r * OUTPUT_DIM..(r + 1) * OUTPUT_DIM]);
            }
            let preds = model.mlp.forward_batch(&batch_x, &mut scratch);
            let mut loss = 0.0f64;
            let scale = 2.0 / batch as f32;
            for i in 0..preds.len() {
                let e = preds[i] - batch_y[i];
                loss += (e * e) as f64;
                d_out[i] = scale * e;
            }
            loss /= batch as f64;
            epoch_loss += loss;
            n_batches += 1.0;
            model
                .mlp
                .backward_batch(&batch_x, &scratch, &d_out, &mut grads, &mut d_input);
            adam.update(&mut model.mlp, &grads, lr as f32);
        }
        let train_loss = epoch_loss / n_batches.max(1.0);
        if !train_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                detail: format!("train loss {train_loss}"),
            });
        }
        let val_loss = eval_loss(&model.mlp, &val_x, &val_y, dim);
        report.train_losses.push(train_loss);
        report.val_losses.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, model.mlp.clone());
            report.best_epoch = epoch;
        }
    }
    model.mlp = best.1;

    // de-normalized per-target MAE of the selected model
    let mut mae = [0.0f64; 8];
    let mut vs = model.mlp.scratch(val_idx.len().min(4096));
    let vb = vs.batch();
    let mut row = 0;
    while row + vb <= val_idx.len() {
        let preds = model
            .mlp
            .forward_batch(&val_x[row * dim..(row + vb) * dim], &mut vs);
        for (i, p) in preds.iter().enumerate() {
            let j = i % OUTPUT_DIM;
            let denorm = p * model.output_std[j] + model.output_mean[j];
            mae[j] += (denorm as f64 - val_y_raw[row * OUTPUT_DIM + i] as f64).abs();
        }
        row += vb;
    }
    if row > 0 {
        for m in mae.iter_mut() {
            *m /= row as f64;
        }
    }
    report.val_mae = mae;
    report.wall_seconds = t0.elapsed().as_secs_f64();
    Ok((model, report))
}

fn eval_loss(mlp: &Mlp<f32>, x: &[f32], y: &[f32], dim: usize) -> f64 {
    let n = x.len() / dim;
    let batch = n.min(4096);
    let mut scratch = mlp.scratch(batch);
    let mut loss = 0.0f64;
    let mut rows = 0usize;
    let mut r = 0;
    while r + batch <= n {
        let preds = mlp.forward_batch(&x[r * dim..(r + batch) * dim], &mut scratch);
        for (i, p) in preds.iter().enumerate() {
            let e = (p - y[r * OUTPUT_DIM + i]) as f64;
            loss += e * e;
        }
        rows += batch;
        r += batch;
    }
    if r < n {
        let rem = n - r;
        let mut s = mlp.scratch(rem);
        let preds = mlp.forward_batch(&x[r * dim..n * dim], &mut s);
        for (i, p) in preds.iter().enumerate() {
            let e = (p - y[r * OUTPUT_DIM + i]) as f64;
            loss += e * e;
        }
        rows += rem;
    }
    loss / rows.max(1) as f64
}

/// Spearman rank correlation between two equally long samples.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap_or(std::cmp::Ordering::Equal));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            // average ranks over ties
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    };
    let ra = ranks(a);
    let rb = ranks(b);
    let mean = (n as f64 - 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..n {
        let xa = ra[i] - mean;
        let xb = rb[i] - mean;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}
