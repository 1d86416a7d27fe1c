//! Per-activity 1-D convolutional autoencoder, written out by hand.
//!
//! Layout for a flow feature vector of length `2r`:
//!
//! ```text
//! x [2 x r] -> conv1d(2->8, k=3, s=2, same) -> relu -> [8 x ceil(r/2)]
//!           -> dense(8*ceil(r/2) -> 8) -> relu            (bottleneck)
//!           -> dense(8 -> 8*ceil(r/2)) -> relu
//!           -> conv_transpose1d(8->2, k=3, s=2) -> sigmoid -> y [2 x r]
//! ```
//!
//! The transposed convolution is the exact adjoint of the encoder convolution
//! geometry, so the output has the input's shape. The anomaly score is the
//! mean squared reconstruction error.

mod gradcheck;
mod tensor;
mod train;

pub use gradcheck::{grad_check, Differentiable, GradCheckReport};
pub use tensor::Tensor;
pub use train::{fit, Optimizer, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub in_channels: usize,
    pub conv_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bottleneck: usize,
}

impl Architecture {
    /// Default layout for `r`-packet features.
    pub fn for_head_len(r: usize) -> Architecture {
        Architecture {
            input_len: 2 * r,
            in_channels: 2,
            conv_channels: 8,
            kernel: 3,
            stride: 2,
            bottleneck: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadArchitecture(msg));
        if self.in_channels == 0 || self.conv_channels == 0 || self.bottleneck == 0 {
            return bad("channel and bottleneck sizes must be positive".into());
        }
        if self.stride == 0 || self.kernel == 0 {
            return bad("kernel and stride must be positive".into());
        }
        if self.input_len == 0 || !self.input_len.is_multiple_of(self.in_channels) {
            return bad(format!(
                "input length {} does not split into {} channels",
                self.input_len, self.in_channels
            ));
        }
        if self.kernel > self.seq_len() {
            return bad(format!(
                "kernel {} exceeds sequence length {}",
                self.kernel,
                self.seq_len()
            ));
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        self.input_len / self.in_channels
    }

    pub fn conv_len(&self) -> usize {
        self.seq_len().div_ceil(self.stride)
    }

    pub fn hidden_len(&self) -> usize {
        self.conv_channels * self.conv_len()
    }

    fn pad_left(&self) -> usize {
        let total = ((self.conv_len() - 1) * self.stride + self.kernel).saturating_sub(self.seq_len());
        total / 2
    }

    /// Input position read by output `j` through kernel tap `k`, if in range.
    fn tap(&self, j: usize, k: usize) -> Option<usize> {
        let pos = (j * self.stride + k).checked_sub(self.pad_left())?;
        (pos < self.seq_len()).then_some(pos)
    }
}

/// Trainable parameters; the gradient has the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// `[conv_channels, in_channels, kernel]`
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    /// `[bottleneck, hidden]`
    pub enc_w: Tensor,
    pub enc_b: Tensor,
    /// `[hidden, bottleneck]`
    pub dec_w: Tensor,
    pub dec_b: Tensor,
    /// `[conv_channels, in_channels, kernel]`
    pub deconv_w: Tensor,
    pub deconv_b: Tensor,
}

impl Weights {
    pub fn zeros(arch: &Architecture) -> Weights {
        let (c_in, c1, k) = (arch.in_channels, arch.conv_channels, arch.kernel);
        let (h, b) = (arch.hidden_len(), arch.bottleneck);
        Weights {
            conv_w: Tensor::zeros(&[c1, c_in, k]),
            conv_b: Tensor::zeros(&[c1]),
            enc_w: Tensor::zeros(&[b, h]),
            enc_b: Tensor::zeros(&[b]),
            dec_w: Tensor::zeros(&[h, b]),
            dec_b: Tensor::zeros(&[h]),
            deconv_w: Tensor::zeros(&[c1, c_in, k]),
            deconv_b: Tensor::zeros(&[c_in]),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.conv_w,
            &self.conv_b,
            &self.enc_w,
            &self.enc_b,
            &self.dec_w,
            &self.dec_b,
            &self.deconv_w,
            &self.deconv_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.dec_w,
            &mut self.dec_b,
            &mut self.deconv_w,
            &mut self.deconv_b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors().into_iter().flat_map(|t| t.data().iter().copied())
    }

    fn slot_mut(&mut self, mut index: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if index < t.len() {
                return &mut t.data_mut()[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn add_scaled(&mut self, other: &Weights, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += scale * s;
            }
        }
    }

    fn matches(&self, arch: &Architecture) -> bool {
        let expected = Weights::zeros(arch);
        let same = self
            .tensors()
            .iter()
            .zip(expected.tensors())
            .all(|(a, b)| a.shape() == b.shape());
        same
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AEModel {
    pub architecture: Architecture,
    pub seed: u64,
    pub weights: Weights,
}

/// Intermediate activations kept for the backward pass.
struct Trace {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    z3: Vec<f64>,
    a3: Vec<f64>,
    y: Vec<f64>,
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&z| z.max(0.0)).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl AEModel {
    /// Uniform initialization in `±1/sqrt(fan_in)`, zero biases.
    pub fn init(architecture: Architecture, seed: u64) -> Result<AEModel> {
        architecture.validate()?;
        let mut weights = Weights::zeros(&architecture);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = &architecture;
        let fans = [
            a.in_channels * a.kernel,
            a.hidden_len(),
            a.bottleneck,
            a.conv_channels * a.kernel,
        ];
        let layers = [
            &mut weights.conv_w,
            &mut weights.enc_w,
            &mut weights.dec_w,
            &mut weights.deconv_w,
        ];
        for (tensor, fan_in) in layers.into_iter().zip(fans) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in tensor.data_mut() {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(AEModel {
            architecture,
            seed,
            weights,
        })
    }

    /// All parameters zero: every output is exactly 0.5.
    pub fn zeroed(architecture: Architecture) -> Result<AEModel> {
        architecture.validate()?;
        Ok(AEModel {
            weights: Weights::zeros(&architecture),
            architecture,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        if !self.weights.matches(&self.architecture) {
            return Err(Error::BadArchitecture("weight shapes do not match architecture".into()));
        }
        if self.weights.values().any(|w| !w.is_finite()) {
            return Err(Error::BadArchitecture("non-finite weight".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.architecture.input_len {
            return Err(Error::ShapeMismatch {
                expected: self.architecture.input_len,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn run(&self, x: &[f64]) -> Trace {
        let a = &self.architecture;
        let w = &self.weights;
        let (c_in, c1, k_len) = (a.in_channels, a.conv_channels, a.kernel);
        let (seq, conv_len, hidden, bott) = (a.seq_len(), a.conv_len(), a.hidden_len(), a.bottleneck);

        let mut z1 = vec![0.0; hidden];
        for o in 0..c1 {
            for j in 0..conv_len {
                let mut acc = w.conv_b.data()[o];
                for c in 0..c_in {
                    for k in 0..k_len {
                        if let Some(i) = a.tap(j, k) {
                            acc += w.conv_w.data()[(o * c_in + c) * k_len + k] * x[c * seq + i];
                        }
                    }
                }
                z1[o * conv_len + j] = acc;
            }
        }
        let a1 = relu(&z1);

        let z2: Vec<f64> = (0..bott)
            .map(|b| {
                let row = &w.enc_w.data()[b * hidden..(b + 1) * hidden];
                w.enc_b.data()[b] + row.iter().zip(&a1).map(|(p, q)| p * q).sum::<f64>()
            })
            .collect();
        let a2 = relu(&z2);

        let z3: Vec<f64> = (0..hidden)
            .map(|h| {
                let row = &w.dec_w.data()[h * bott..(h + 1) * bott];
                w.dec_b.data()[h] + row.iter().zip(&a2).map(|(p, q)| p * q).sum::<f64>()
            })
            .collect();
        let a3 = relu(&z3);

        let mut z4 = vec![0.0; a.input_len];
        for c in 0..c_in {
            z4[c * seq..(c + 1) * seq].fill(w.deconv_b.data()[c]);
        }
        for o in 0..c1 {
            for j in 0..conv_len {
                let act = a3[o * conv_len + j];
                if act == 0.0 {
                    continue;
                }
                for c in 0..c_in {
                    for k in 0..k_len {
                        if let Some(i) = a.tap(j, k) {
                            z4[c * seq + i] += w.deconv_w.data()[(o * c_in + c) * k_len + k] * act;
                        }
                    }
                }
            }
        }
        let y = z4.into_iter().map(sigmoid).collect();
        Trace {
            z1,
            a1,
            z2,
            a2,
            z3,
            a3,
            y,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x).y)
    }

    /// Mean squared error between `x` and its reconstruction.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(mse(x, &self.run(x).y))
    }

    /// Loss and its gradient with respect to every weight.
    pub fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Weights)> {
        self.check_input(x)?;
        let t = self.run(x);
        let mut g = Weights::zeros(&self.architecture);
        self.backward(x, &t, &mut g);
        Ok((mse(x, &t.y), g))
    }

    /// Accumulates d(loss)/d(weights) into `g`.
    fn backward(&self, x: &[f64], t: &Trace, g: &mut Weights) {
        let a = &self.architecture;
        let w = &self.weights;
        let (c_in, c1, k_len) = (a.in_channels, a.conv_channels, a.kernel);
        let (seq, conv_len, hidden, bott) = (a.seq_len(), a.conv_len(), a.hidden_len(), a.bottleneck);
        let n = a.input_len as f64;

        let dz4: Vec<f64> =
            t.y.iter()
                .zip(x)
                .map(|(&y, &xv)| 2.0 * (y - xv) / n * y * (1.0 - y))
                .collect();

        for c in 0..c_in {
            g.deconv_b.data_mut()[c] += dz4[c * seq..(c + 1) * seq].iter().sum::<f64>();
        }
        let mut da3 = vec![0.0; hidden];
        for o in 0..c1 {
            for j in 0..conv_len {
                let act = t.a3[o * conv_len + j];
                let mut acc = 0.0;
                for c in 0..c_in {
                    for k in 0..k_len {
                        if let Some(i) = a.tap(j, k) {
                            let idx = (o * c_in + c) * k_len + k;
                            let d = dz4[c * seq + i];
                            g.deconv_w.data_mut()[idx] += act * d;
                            acc += w.deconv_w.data()[idx] * d;
                        }
                    }
                }
                da3[o * conv_len + j] = acc;
            }
        }

        let dz3: Vec<f64> = da3
            .iter()
            .zip(&t.z3)
            .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
            .collect();
        let mut da2 = vec![0.0; bott];
        for h in 0..hidden {
            let d = dz3[h];
            if d == 0.0 {
                continue;
            }
            g.dec_b.data_mut()[h] += d;
            for b in 0..bott {
                g.dec_w.data_mut()[h * bott + b] += d * t.a2[b];
                da2[b] += w.dec_w.data()[h * bott + b] * d;
            }
        }

        let dz2: Vec<f64> = da2
            .iter()
            .zip(&t.z2)
            .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
            .collect();
        let mut da1 = vec![0.0; hidden];
        for b in 0..bott {
            let d = dz2[b];
            if d == 0.0 {
                continue;
            }
            g.enc_b.data_mut()[b] += d;
            for h in 0..hidden {
                g.enc_w.data_mut()[b * hidden + h] += d * t.a1[h];
                da1[h] += w.enc_w.data()[b * hidden + h] * d;
            }
        }

        for o in 0..c1 {
            for j in 0..conv_len {
                let pos = o * conv_len + j;
                if t.z1[pos] <= 0.0 {
                    continue;
                }
                let d = da1[pos];
                g.conv_b.data_mut()[o] += d;
                for c in 0..c_in {
                    for k in 0..k_len {
                        if let Some(i) = a.tap(j, k) {
                            g.conv_w.data_mut()[(o * c_in + c) * k_len + k] += d * x[c * seq + i];
                        }
                    }
                }
            }
        }
    }

    /// Signs of every hidden pre-activation; a change means a ReLU kink was crossed.
    fn activation_pattern(&self, x: &[f64]) -> Vec<bool> {
        let t = self.run(x);
        t.z1.iter().chain(&t.z2).chain(&t.z3).map(|&z| z > 0.0).collect()
    }
}

fn mse(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

impl Differentiable for AEModel {
    fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    fn param(&self, index: usize) -> f64 {
        self.weights.values().nth(index).expect("parameter index out of range")
    }

    fn set_param(&mut self, index: usize, value: f64) {
        *self.weights.slot_mut(index) = value;
    }

    fn input_len(&self) -> usize {
        self.architecture.input_len
    }

    fn loss(&self, x: &[f64]) -> f64 {
        mse(x, &self.run(x).y)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let t = self.run(x);
        let mut g = Weights::zeros(&self.architecture);
        self.backward(x, &t, &mut g);
        g.values().collect()
    }

    fn kink_signature(&self, x: &[f64]) -> Vec<bool> {
        self.activation_pattern(x)
    }
}
