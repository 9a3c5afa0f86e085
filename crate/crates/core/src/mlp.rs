//! From-scratch multilayer perceptron: batched forward, backward, and
//! input-gradient passes.
//!
//! The arithmetic is generic over [`Dtype`] so the production f32 model and
//! the f64 instances used by gradient-checking tests share one
//! implementation. Every per-row computation accumulates in a fixed order
//! independent of the batch size, so a row of a batched pass is bit-identical
//! to the same row pushed through alone.

use num_traits::Float as NumFloat;
use rand::Rng;

use crate::error::{Error, Result};

/// Scalar type the network computes in.
pub trait Dtype:
    NumFloat + num_traits::FromPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn cast_from(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("finite conversion")
    }
    fn as_f64(self) -> f64;
}

impl Dtype for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Dtype for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

/// Sixteen-lane fused dot product with a fixed combine tree. The
/// accumulation order depends only on the vector length, never on batch
/// placement.
#[inline]
fn dot<T: Dtype>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 16];
    let mut ca = a.chunks_exact(16);
    let mut cb = b.chunks_exact(16);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for i in 0..16 {
            acc[i] = xa[i].mul_add(xb[i], acc[i]);
        }
    }
    let mut s = T::zero();
    for i in 0..16 {
        s = s + acc[i];
    }
    for (xa, xb) in ca.remainder().iter().zip(cb.remainder()) {
        s = xa.mul_add(*xb, s);
    }
    s
}

/// Four dot products of one weight row against four input rows, sharing the
/// weight loads. Each row's accumulation order is identical to [`dot`], so
/// results match the single-row path bit for bit.
#[inline]
fn dot4<T: Dtype>(w: &[T], x: [&[T]; 4]) -> [T; 4] {
    let k = w.len();
    let mut acc = [[T::zero(); 16]; 4];
    let chunks = k / 16;
    for c in 0..chunks {
        let base = c * 16;
        let wc = &w[base..base + 16];
        for r in 0..4 {
            let xc = &x[r][base..base + 16];
            for i in 0..16 {
                acc[r][i] = xc[i].mul_add(wc[i], acc[r][i]);
            }
        }
    }
    let mut out = [T::zero(); 4];
    for r in 0..4 {
        let mut s = T::zero();
        for i in 0..16 {
            s = s + acc[r][i];
        }
        for i in chunks * 16..k {
            s = x[r][i].mul_add(w[i], s);
        }
        out[r] = s;
    }
    out
}

/// y += alpha * x
#[inline]
fn axpy<T: Dtype>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = xi.mul_add(alpha, *yi);
    }
}

/// Feed-forward network with ReLU hidden layers and a linear head.
#[derive(Clone, Debug)]
pub struct Mlp<T> {
    dims: Vec<usize>,
    /// Row-major `[out][in]` weight matrices, one per layer.
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
}

impl<T: Dtype> Mlp<T> {
    /// He-uniform initialization, deterministic in the rng stream.
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Model("need at least input and output dims".into()));
        }
        if dims.iter().any(|d| *d == 0) {
            return Err(Error::Model("zero-width layer".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w: Vec<T> = (0..fan_in * fan_out)
                .map(|_| T::cast_from(rng.random_range(-bound..bound)))
                .collect();
            weights.push(w);
            biases.push(vec![T::zero(); fan_out]);
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parts(dims: Vec<usize>, weights: Vec<Vec<T>>, biases: Vec<Vec<T>>) -> Result<Self> {
        if dims.len() < 2 || weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::Model("layer count mismatch".into()));
        }
        for l in 0..weights.len() {
            if weights[l].len() != dims[l] * dims[l + 1] || biases[l].len() != dims[l + 1] {
                return Err(Error::Model(format!("layer {l} shape mismatch")));
            }
        }
        Ok(Mlp {
            dims,
            weights,
            biases,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<T>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Activations buffer for a batch of `batch` rows.
    pub fn scratch(&self, batch: usize) -> Scratch<T> {
        Scratch {
            acts: self
                .dims
                .iter()
                .skip(1)
                .map(|d| vec![T::zero(); batch * d])
                .collect(),
            batch,
        }
    }

    /// Batched forward pass. `inputs` is row-major `batch × input_dim`;
    /// returns the final linear activations (`batch × output_dim`) living in
    /// the scratch buffer.
    pub fn forward_batch<'s>(&self, inputs: &[T], scratch: &'s mut Scratch<T>) -> &'s [T] {
        let batch = scratch.batch;
        assert_eq!(inputs.len(), batch * self.input_dim(), "input shape");
        let layers = self.layers();
        for l in 0..layers {
            let (in_dim, out_dim) = (self.dims[l], self.dims[l + 1]);
            let w = &self.weights[l];
            let b = &self.biases[l];
            let relu = l + 1 < layers;
            // raw borrows: the input of layer l is the output of layer l-1
            let (prev_slice, out_slice) = scratch.layer_io(l);
            let input: &[T] = if l == 0 { inputs } else { prev_slice };
            // four rows at a time share each weight-row load
            let quads = batch / 4 * 4;
            let mut r = 0;
            while r < quads {
                let x = [
                    &input[r * in_dim..(r + 1) * in_dim],
                    &input[(r + 1) * in_dim..(r + 2) * in_dim],
                    &input[(r + 2) * in_dim..(r + 3) * in_dim],
                    &input[(r + 3) * in_dim..(r + 4) * in_dim],
                ];
                for o in 0..out_dim {
                    let z4 = dot4(&w[o * in_dim..(o + 1) * in_dim], x);
                    for q in 0..4 {
                        let z = z4[q] + b[o];
                        out_slice[(r + q) * out_dim + o] =
                            if relu && z < T::zero() { T::zero() } else { z };
                    }
                }
                r += 4;
            }
            for r in quads..batch {
                let x = &input[r * in_dim..(r + 1) * in_dim];
                let out = &mut out_slice[r * out_dim..(r + 1) * out_dim];
                for (o, out_v) in out.iter_mut().enumerate() {
                    let z = dot(&w[o * in_dim..(o + 1) * in_dim], x) + b[o];
                    *out_v = if relu && z < T::zero() { T::zero() } else { z };
                }
            }
        }
        scratch.output()
    }

    /// Backward pass for the batch most recently pushed through
    /// `forward_batch` with `scratch`. `d_out` holds dL/d(output) row-major;
    /// parameter gradients are accumulated over rows in row order into
    /// `grads` (overwritten), and dL/d(input) is written to `d_input`.
    pub fn backward_batch(
        &self,
        inputs: &[T],
        scratch: &Scratch<T>,
        d_out: &[T],
        grads: &mut Gradients<T>,
        d_input: &mut [T],
    ) {
        let batch = scratch.batch;
        assert_eq!(d_out.len(), batch * self.output_dim(), "d_out shape");
        assert_eq!(inputs.len(), batch * self.input_dim(), "input shape");
        assert_eq!(d_input.len(), inputs.len(), "d_input shape");
        let layers = self.layers();
        grads.zero();

        // delta of the current layer, batch-major
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (in_dim, out_dim) = (self.dims[l], self.dims[l + 1]);
            let w = &self.weights[l];
            let layer_in: &[T] = if l == 0 { inputs } else { scratch.act(l - 1) };
            let dw = &mut grads.d_weights[l];
            let db = &mut grads.d_biases[l];

            // parameter gradients, rows accumulated in order
            for r in 0..batch {
                let d = &delta[r * out_dim..(r + 1) * out_dim];
                let x = &layer_in[r * in_dim..(r + 1) * in_dim];
                for (o, d_o) in d.iter().enumerate() {
                    if *d_o != T::zero() {
                        axpy(*d_o, x, &mut dw[o * in_dim..(o + 1) * in_dim]);
                    }
                    db[o] = db[o] + *d_o;
                }
            }

            // propagate to the layer input: δ_in = Wᵀ δ, masked by ReLU'
            let next: &mut [T] = if l == 0 {
                d_input
            } else {
                // reuse: build into a fresh buffer sized batch × in_dim
                // (allocated once per layer iteration; small next to matmuls)
                &mut []
            };
            if l == 0 {
                for r in 0..batch {
                    let d = &delta[r * out_dim..(r + 1) * out_dim];
                    let dx = &mut next[r * in_dim..(r + 1) * in_dim];
                    for v in dx.iter_mut() {
                        *v = T::zero();
                    }
                    for (o, d_o) in d.iter().enumerate() {
                        if *d_o != T::zero() {
                            axpy(*d_o, &w[o * in_dim..(o + 1) * in_dim], dx);
                        }
                    }
                }
            } else {
                let mut d_prev = vec![T::zero(); batch * in_dim];
                let act_prev = scratch.act(l - 1);
                for r in 0..batch {
                    let d = &delta[r * out_dim..(r + 1) * out_dim];
                    let dx = &mut d_prev[r * in_dim..(r + 1) * in_dim];
                    for (o, d_o) in d.iter().enumerate() {
                        if *d_o != T::zero() {
                            axpy(*d_o, &w[o * in_dim..(o + 1) * in_dim], dx);
                        }
                    }
                    // ReLU mask: the stored activation is zero exactly where
                    // the unit was clamped
                    let a = &act_prev[r * in_dim..(r + 1) * in_dim];
                    for (dxi, ai) in dx.iter_mut().zip(a) {
                        if *ai <= T::zero() {
                            *dxi = T::zero();
                        }
                    }
                }
                delta = d_prev;
            }
        }
    }

    /// Gradient of a scalar function of the outputs with respect to one
    /// input vector: a single-row backward pass without parameter gradients.
    pub fn input_gradient(&self, input: &[T], d_out: &[T], scratch: &mut Scratch<T>) -> Vec<T> {
        assert_eq!(scratch.batch, 1, "input_gradient uses a batch-1 scratch");
        self.forward_batch(input, scratch);
        let layers = self.layers();
        let mut delta = d_out.to_vec();
        for l in (1..layers).rev() {
            let in_dim = self.dims[l];
            let w = &self.weights[l];
            let mut d_prev = vec![T::zero(); in_dim];
            for (o, d_o) in delta.iter().enumerate() {
                if *d_o != T::zero() {
                    axpy(*d_o, &w[o * in_dim..(o + 1) * in_dim], &mut d_prev);
                }
            }
            let a = scratch.act(l - 1);
            for (dxi, ai) in d_prev.iter_mut().zip(a) {
                if *ai <= T::zero() {
                    *dxi = T::zero();
                }
            }
            delta = d_prev;
        }
        let in_dim = self.dims[0];
        let w = &self.weights[0];
        let mut dx = vec![T::zero(); in_dim];
        debug_assert_eq!(delta.len(), self.dims[1]);
        for (o, d_o) in delta.iter().enumerate() {
            if *d_o != T::zero() {
                axpy(*d_o, &w[o * in_dim..(o + 1) * in_dim], &mut dx);
            }
        }
        dx
    }
}

/// Per-layer activation buffers for one batch size.
#[derive(Clone, Debug)]
pub struct Scratch<T> {
    acts: Vec<Vec<T>>,
    batch: usize,
}

impl<T: Dtype> Scratch<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn act(&self, layer: usize) -> &[T] {
        &self.acts[layer]
    }

    pub fn output(&self) -> &[T] {
        self.acts.last().unwrap()
    }

    /// Immutable view of layer `l-1`'s output together with a mutable view
    /// of layer `l`'s buffer.
    fn layer_io(&mut self, l: usize) -> (&[T], &mut [T]) {
        if l == 0 {
            (&[], &mut self.acts[0][..])
        } else {
            let (left, right) = self.acts.split_at_mut(l);
            (&left[l - 1][..], &mut right[0][..])
        }
    }
}

/// Parameter gradients matching an [`Mlp`]'s shape.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub d_weights: Vec<Vec<T>>,
    pub d_biases: Vec<Vec<T>>,
}

impl<T: Dtype> Gradients<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Gradients {
            d_weights: mlp.weights.iter().map(|w| vec![T::zero(); w.len()]).collect(),
            d_biases: mlp.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.d_weights {
            w.fill(T::zero());
        }
        for b in &mut self.d_biases {
            b.fill(T::zero());
        }
    }
}
