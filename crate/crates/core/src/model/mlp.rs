//! Fully connected 31 → 100 → 20 → 1 network: rectifier hidden layers, logistic output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// Input, hidden, hidden, output widths.
pub const LAYER_SIZES: [usize; 4] = [31, 100, 20, 1];
pub const N_INPUTS: usize = LAYER_SIZES[0];
const N_LAYERS: usize = LAYER_SIZES.len() - 1;

const fn layer_offsets() -> [usize; N_LAYERS + 1] {
    let mut off = [0; N_LAYERS + 1];
    let mut l = 0;
    while l < N_LAYERS {
        off[l + 1] = off[l] + LAYER_SIZES[l] * LAYER_SIZES[l + 1] + LAYER_SIZES[l + 1];
        l += 1;
    }
    off
}

const OFFSETS: [usize; N_LAYERS + 1] = layer_offsets();

/// Total number of weights and biases.
pub const N_PARAMS: usize = OFFSETS[N_LAYERS];

/// Network parameters stored flat, layer by layer: row-major weights
/// (`inputs × outputs`) followed by biases.
///
/// Gradients share this layout, so optimiser updates are plain vector arithmetic.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    data: Vec<T>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros() -> Self {
        MlpParams { data: vec![T::zero(); N_PARAMS] }
    }

    /// He-normal weights for the rectifier layers, Glorot-normal for the output,
    /// zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros();
        for l in 0..N_LAYERS {
            let (fan_in, fan_out) = (LAYER_SIZES[l], LAYER_SIZES[l + 1]);
            let std = if l + 1 < N_LAYERS {
                (2.0 / fan_in as f64).sqrt()
            } else {
                (2.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let dist = Normal::new(0.0, std).expect("positive std");
            let (w, _) = p.layer_mut(l);
            for v in w.iter_mut() {
                *v = T::lit(dist.sample(&mut rng));
            }
        }
        p
    }

    pub fn from_flat(data: Vec<T>) -> Result<Self> {
        if data.len() != N_PARAMS {
            return Err(Error::InvalidInput(format!(
                "expected {N_PARAMS} parameters, got {}",
                data.len()
            )));
        }
        Ok(MlpParams { data })
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// (weights, biases) of layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let (i, o) = (LAYER_SIZES[l], LAYER_SIZES[l + 1]);
        let s = &self.data[OFFSETS[l]..OFFSETS[l + 1]];
        s.split_at(i * o)
    }

    fn layer_mut(&mut self, l: usize) -> (&mut [T], &mut [T]) {
        let (i, o) = (LAYER_SIZES[l], LAYER_SIZES[l + 1]);
        let s = &mut self.data[OFFSETS[l]..OFFSETS[l + 1]];
        s.split_at_mut(i * o)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Risk score for one input, strictly inside (0, 1).
    pub fn forward(&self, x: &[T]) -> Result<T> {
        if x.len() != N_INPUTS {
            return Err(Error::InvalidInput(format!(
                "expected {N_INPUTS} inputs, got {}",
                x.len()
            )));
        }
        Ok(squash(self.logits(x, 1)[0]))
    }

    /// Risk scores for `n` row-major inputs.
    pub fn forward_batch(&self, xs: &[T], n: usize) -> Vec<T> {
        self.logits(xs, n).into_iter().map(squash).collect()
    }

    fn logits(&self, xs: &[T], n: usize) -> Vec<T> {
        let mut act = xs.to_vec();
        for l in 0..N_LAYERS {
            act = self.dense(l, &act, n);
            if l + 1 < N_LAYERS {
                relu_in_place(&mut act);
            }
        }
        act
    }

    fn dense(&self, l: usize, input: &[T], n: usize) -> Vec<T> {
        let (i, o) = (LAYER_SIZES[l], LAYER_SIZES[l + 1]);
        let (w, b) = self.layer(l);
        let mut out = Vec::with_capacity(n * o);
        for r in 0..n {
            out.extend_from_slice(b);
            let row = &mut out[r * o..(r + 1) * o];
            for (k, &a) in input[r * i..(r + 1) * i].iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (acc, &wk) in row.iter_mut().zip(&w[k * o..(k + 1) * o]) {
                    *acc += a * wk;
                }
            }
        }
        out
    }

    /// Mean binary cross-entropy over `n` row-major inputs and its gradient.
    pub fn loss_and_grad(&self, xs: &[T], ys: &[T]) -> (T, MlpParams<T>) {
        let n = ys.len();
        debug_assert_eq!(xs.len(), n * N_INPUTS);
        // forward with cached activations
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(N_LAYERS + 1);
        acts.push(xs.to_vec());
        for l in 0..N_LAYERS {
            let mut z = self.dense(l, &acts[l], n);
            if l + 1 < N_LAYERS {
                relu_in_place(&mut z);
            }
            acts.push(z);
        }
        let logits = &acts[N_LAYERS];
        let inv_n = T::one() / T::count(n);
        let mut loss = T::zero();
        let mut delta: Vec<T> = Vec::with_capacity(n);
        for (&z, &y) in logits.iter().zip(ys) {
            loss += softplus(z) - y * z;
            delta.push((sigmoid(z) - y) * inv_n);
        }
        loss *= inv_n;

        let mut grad = MlpParams::zeros();
        for l in (0..N_LAYERS).rev() {
            let (i, o) = (LAYER_SIZES[l], LAYER_SIZES[l + 1]);
            let input = &acts[l];
            {
                let (gw, gb) = grad.layer_mut(l);
                for r in 0..n {
                    let d = &delta[r * o..(r + 1) * o];
                    for (g, &dv) in gb.iter_mut().zip(d) {
                        *g += dv;
                    }
                    for (k, &a) in input[r * i..(r + 1) * i].iter().enumerate() {
                        if a == T::zero() {
                            continue;
                        }
                        for (g, &dv) in gw[k * o..(k + 1) * o].iter_mut().zip(d) {
                            *g += a * dv;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![T::zero(); n * i];
            for r in 0..n {
                let d = &delta[r * o..(r + 1) * o];
                let a_row = &input[r * i..(r + 1) * i];
                for k in 0..i {
                    // rectifier derivative: activation > 0
                    if a_row[k] > T::zero() {
                        prev[r * i + k] = w[k * o..(k + 1) * o]
                            .iter()
                            .zip(d)
                            .map(|(&wk, &dv)| wk * dv)
                            .sum();
                    }
                }
            }
            delta = prev;
        }
        (loss, grad)
    }

    /// Mean binary cross-entropy only.
    pub fn loss(&self, xs: &[T], ys: &[T]) -> T {
        let logits = self.logits(xs, ys.len());
        let s: T = logits.iter().zip(ys).map(|(&z, &y)| softplus(z) - y * z).sum();
        s / T::count(ys.len())
    }

    pub(crate) fn to_file(&self) -> Vec<LayerFile<T>> {
        (0..N_LAYERS)
            .map(|l| {
                let (w, b) = self.layer(l);
                LayerFile {
                    inputs: LAYER_SIZES[l],
                    outputs: LAYER_SIZES[l + 1],
                    activation: if l + 1 < N_LAYERS { "relu" } else { "sigmoid" }.to_owned(),
                    weights: w.to_vec(),
                    biases: b.to_vec(),
                }
            })
            .collect()
    }

    pub(crate) fn from_file(layers: Vec<LayerFile<T>>) -> Result<Self> {
        if layers.len() != N_LAYERS {
            return Err(Error::Parse(format!("expected {N_LAYERS} layers")));
        }
        let mut data = Vec::with_capacity(N_PARAMS);
        for (l, layer) in layers.into_iter().enumerate() {
            let (i, o) = (LAYER_SIZES[l], LAYER_SIZES[l + 1]);
            if layer.inputs != i || layer.outputs != o || layer.weights.len() != i * o || layer.biases.len() != o {
                return Err(Error::Parse(format!("layer {l} has wrong dimensions")));
            }
            data.extend(layer.weights);
            data.extend(layer.biases);
        }
        let p = MlpParams { data };
        if !p.is_finite() {
            return Err(Error::Parse("non-finite parameter".into()));
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub(crate) struct LayerFile<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: String,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

#[inline]
fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Logistic output kept strictly inside (0, 1).
#[inline]
fn squash<T: Scalar>(z: T) -> T {
    let eps = T::epsilon();
    sigmoid(z).max(eps).min(T::one() - eps)
}
