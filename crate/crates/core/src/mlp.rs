//! Sigmoid multilayer perceptron trained by online backpropagation with momentum.
//!
//! Each sample contributes `E = ½‖y − t‖²`. After every sample, each
//! parameter θ moves by `Δθ(t) = −η ∂E/∂θ + α Δθ(t−1)`; the previous step
//! `Δθ(t−1)` lives in per-parameter momentum buffers that persist across
//! samples and epochs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecError};

pub const MAGIC: &[u8; 4] = b"FMLP";
pub const FORMAT_VERSION: u32 = 1;
pub const SCALE_FLOOR: f64 = 1e-8;
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("vector length {actual} does not match expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("I/O failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model file version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
}

impl From<CodecError> for MlpError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Corrupt(m) => MlpError::CorruptModel(m),
            CodecError::VersionMismatch { found, supported } => {
                MlpError::VersionMismatch { found, supported }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub target_loss: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 0.1,
            momentum: 0.9,
            max_epochs: 2000,
            target_loss: 1e-3,
            seed: 42,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), MlpError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlpError::InvalidHyperparameters(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        check_momentum(self.momentum)?;
        if self.max_epochs == 0 {
            return Err(MlpError::InvalidHyperparameters(
                "max_epochs must be at least 1".into(),
            ));
        }
        if self.target_loss.is_nan() || self.target_loss < 0.0 {
            return Err(MlpError::InvalidHyperparameters(format!(
                "target loss must be non-negative, got {}",
                self.target_loss
            )));
        }
        Ok(())
    }
}

fn check_momentum(momentum: f64) -> Result<(), MlpError> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(MlpError::InvalidHyperparameters(format!(
            "momentum must lie in [0, 1), got {momentum}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingHistory {
    /// Mean per-sample loss of each epoch, measured before each update.
    pub epoch_loss: Vec<f64>,
    pub stop_reason: StopReason,
}

impl TrainingHistory {
    pub fn epochs_run(&self) -> usize {
        self.epoch_loss.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(f64::NAN)
    }
}

/// Per-dimension standardization fit on training features.
#[derive(Clone, Debug, PartialEq)]
pub struct InputScaler {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl InputScaler {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self, MlpError> {
        let first = features.first().ok_or(MlpError::EmptyDataset)?;
        let dim = first.len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for f in features {
            if f.len() != dim {
                return Err(MlpError::LengthMismatch {
                    expected: dim,
                    actual: f.len(),
                });
            }
            mean.iter_mut().zip(f).for_each(|(m, &x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for f in features {
            for ((v, &x), &m) in var.iter_mut().zip(f).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| (v / n).sqrt().max(SCALE_FLOOR))
            .collect();
        Ok(InputScaler { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        if x.len() != self.dim() {
            return Err(MlpError::LengthMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// One training example: network input and desired output.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut t = vec![0.0; classes];
    t[class] = 1.0;
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub class: usize,
    pub confidence: f64,
    pub outputs: Vec<f64>,
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn sample_loss(output: &[f64], target: &[f64]) -> f64 {
    0.5 * output
        .iter()
        .zip(target)
        .map(|(y, t)| (y - t) * (y - t))
        .sum::<f64>()
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub weight_velocity: Vec<f64>,
    pub bias_velocity: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            weight_velocity: vec![0.0; inputs * outputs],
            bias_velocity: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| sigmoid(row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b))
            .collect()
    }
}

struct Gradients {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    scaler: Option<InputScaler>,
}

impl MlpModel {
    /// Weights uniform in `±1/√fan_in` from a seeded xoshiro256++ stream,
    /// drawn layer by layer in row-major order; biases and momentum zero.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self, MlpError> {
        if layer_sizes.len() < 2 {
            return Err(MlpError::InvalidArchitecture(format!(
                "need at least an input and an output layer, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(MlpError::InvalidArchitecture(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let mut layer = Layer::zeros(pair[0], pair[1]);
                let r = 1.0 / (pair[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-r, r).expect("finite bound");
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = dist.sample(&mut rng));
                layer
            })
            .collect();
        Ok(MlpModel {
            layers,
            scaler: None,
        })
    }

    /// Builds a model from explicit layers. Momentum buffers are reset.
    pub fn from_parameters(
        params: Vec<(Vec<f64>, Vec<f64>)>,
        layer_sizes: &[usize],
    ) -> Result<Self, MlpError> {
        let mut model = MlpModel::new(layer_sizes, 0)?;
        if params.len() != model.layers.len() {
            return Err(MlpError::InvalidArchitecture(format!(
                "{} parameter blocks for {} layers",
                params.len(),
                model.layers.len()
            )));
        }
        for (layer, (w, b)) in model.layers.iter_mut().zip(params) {
            if w.len() != layer.weights.len() || b.len() != layer.biases.len() {
                return Err(MlpError::InvalidArchitecture(
                    "parameter shape mismatch".into(),
                ));
            }
            layer.weights = w;
            layer.biases = b;
        }
        Ok(model)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn scaler(&self) -> Option<&InputScaler> {
        self.scaler.as_ref()
    }

    pub fn set_scaler(&mut self, scaler: Option<InputScaler>) -> Result<(), MlpError> {
        if let Some(s) = &scaler {
            if s.dim() != self.input_dim() {
                return Err(MlpError::LengthMismatch {
                    expected: self.input_dim(),
                    actual: s.dim(),
                });
            }
        }
        self.scaler = scaler;
        Ok(())
    }

    /// Applies the stored input scaler, if any, to a raw feature vector.
    pub fn prepare(&self, raw: &[f64]) -> Result<Vec<f64>, MlpError> {
        match &self.scaler {
            Some(s) => s.transform(raw),
            None => {
                self.check_input(raw)?;
                Ok(raw.to_vec())
            }
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<(), MlpError> {
        if input.len() != self.input_dim() {
            return Err(MlpError::LengthMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, starting with the input itself.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<Vec<f64>>, MlpError> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn output(&self, input: &[f64]) -> Result<Vec<f64>, MlpError> {
        Ok(self.forward(input)?.pop().unwrap())
    }

    pub fn loss(&self, sample: &Sample) -> Result<f64, MlpError> {
        self.check_target(&sample.target)?;
        Ok(sample_loss(&self.output(&sample.input)?, &sample.target))
    }

    fn check_target(&self, target: &[f64]) -> Result<(), MlpError> {
        if target.len() != self.output_dim() {
            return Err(MlpError::LengthMismatch {
                expected: self.output_dim(),
                actual: target.len(),
            });
        }
        Ok(())
    }

    fn backprop(&self, acts: &[Vec<f64>], target: &[f64]) -> Gradients {
        let depth = self.layers.len();
        let mut weights = vec![Vec::new(); depth];
        let mut biases = vec![Vec::new(); depth];
        let out = &acts[depth];
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(y, t)| (y - t) * y * (1.0 - y))
            .collect();
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            let mut gw = Vec::with_capacity(layer.weights.len());
            for &d in &delta {
                gw.extend(input.iter().map(|x| d * x));
            }
            weights[l] = gw;
            if l > 0 {
                let mut back = vec![0.0; layer.inputs];
                for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                    back.iter_mut().zip(row).for_each(|(b, w)| *b += w * d);
                }
                let next: Vec<f64> = back
                    .iter()
                    .zip(input)
                    .map(|(b, a)| b * a * (1.0 - a))
                    .collect();
                biases[l] = std::mem::replace(&mut delta, next);
            } else {
                biases[l] = std::mem::take(&mut delta);
            }
        }
        Gradients { weights, biases }
    }

    fn check_samples(&self, samples: &[Sample]) -> Result<(), MlpError> {
        if samples.is_empty() {
            return Err(MlpError::EmptyDataset);
        }
        for s in samples {
            self.check_input(&s.input)?;
            self.check_target(&s.target)?;
        }
        Ok(())
    }

    /// One pass of online updates over `samples` in order. Returns the mean
    /// per-sample loss, each measured before that sample's update.
    ///
    /// Accepts `learning_rate = 0` (a no-op pass), unlike [`Hyperparameters::validate`].
    pub fn train_epoch(
        &mut self,
        samples: &[Sample],
        hyper: &Hyperparameters,
    ) -> Result<f64, MlpError> {
        self.check_samples(samples)?;
        let (eta, alpha) = (hyper.learning_rate, hyper.momentum);
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(MlpError::InvalidHyperparameters(format!(
                "learning rate must be non-negative, got {eta}"
            )));
        }
        check_momentum(alpha)?;

        let mut total = 0.0;
        for s in samples {
            let acts = self.forward(&s.input)?;
            total += sample_loss(acts.last().unwrap(), &s.target);
            let grads = self.backprop(&acts, &s.target);
            for ((layer, gw), gb) in self
                .layers
                .iter_mut()
                .zip(&grads.weights)
                .zip(&grads.biases)
            {
                step(
                    &mut layer.weights,
                    &mut layer.weight_velocity,
                    gw,
                    eta,
                    alpha,
                );
                step(&mut layer.biases, &mut layer.bias_velocity, gb, eta, alpha);
            }
        }
        Ok(total / samples.len() as f64)
    }

    /// Repeats [`train_epoch`](Self::train_epoch) in fixed sample order until
    /// the epoch loss is at or below `target_loss` or `max_epochs` is reached.
    pub fn train(
        &mut self,
        samples: &[Sample],
        hyper: &Hyperparameters,
    ) -> Result<TrainingHistory, MlpError> {
        hyper.validate()?;
        self.check_samples(samples)?;
        let mut epoch_loss = Vec::new();
        for _ in 0..hyper.max_epochs {
            let loss = self.train_epoch(samples, hyper)?;
            epoch_loss.push(loss);
            if loss <= hyper.target_loss {
                return Ok(TrainingHistory {
                    epoch_loss,
                    stop_reason: StopReason::TargetReached,
                });
            }
        }
        Ok(TrainingHistory {
            epoch_loss,
            stop_reason: StopReason::MaxEpochs,
        })
    }

    /// Argmax over the output layer for an already-scaled input.
    pub fn classify(&self, input: &[f64]) -> Result<Classification, MlpError> {
        let outputs = self.output(input)?;
        let class = argmax(&outputs);
        Ok(Classification {
            class,
            confidence: outputs[class],
            outputs,
        })
    }

    fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if index < layer.weights.len() {
                return &mut layer.weights[index];
            }
            index -= layer.weights.len();
            if index < layer.biases.len() {
                return &mut layer.biases[index];
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range")
    }

    /// Largest relative disagreement between backprop gradients and central
    /// differences `(E(θ+ε) − E(θ−ε)) / 2ε`, over every weight and bias.
    pub fn gradient_check(&self, sample: &Sample, epsilon: f64) -> Result<f64, MlpError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(MlpError::InvalidEpsilon(epsilon));
        }
        self.check_samples(std::slice::from_ref(sample))?;
        let acts = self.forward(&sample.input)?;
        let grads = self.backprop(&acts, &sample.target);
        let analytic: Vec<f64> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect();

        let mut probe = self.clone();
        let mut worst = 0.0f64;
        for (i, &g_bp) in analytic.iter().enumerate().take(self.parameter_count()) {
            let original = *probe.parameter_mut(i);
            *probe.parameter_mut(i) = original + epsilon;
            let plus = probe.loss(sample)?;
            *probe.parameter_mut(i) = original - epsilon;
            let minus = probe.loss(sample)?;
            *probe.parameter_mut(i) = original;
            let g_fd = (plus - minus) / (2.0 * epsilon);
            let rel = (g_bp - g_fd).abs() / (g_bp.abs() + g_fd.abs()).max(1e-12);
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    /// `FMLP` container: layer count, sizes, then per layer weights, biases
    /// and both momentum buffers, then an optional input scaler.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = codec::Writer::new(MAGIC, FORMAT_VERSION);
        let sizes = self.layer_sizes();
        w.u32(sizes.len() as u32);
        sizes.iter().for_each(|&s| w.u32(s as u32));
        for layer in &self.layers {
            w.f64s(&layer.weights);
            w.f64s(&layer.biases);
            w.f64s(&layer.weight_velocity);
            w.f64s(&layer.bias_velocity);
        }
        match &self.scaler {
            Some(s) => {
                w.u8(1);
                w.f64s(&s.mean);
                w.f64s(&s.scale);
            }
            None => w.u8(0),
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MlpError> {
        let mut r = codec::Reader::open(bytes, MAGIC, FORMAT_VERSION)?;
        let count = r.u32()? as usize;
        if !(2..=64).contains(&count) {
            return Err(MlpError::CorruptModel(format!(
                "implausible layer count {count}"
            )));
        }
        let sizes = (0..count)
            .map(|_| r.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if sizes.contains(&0) {
            return Err(MlpError::CorruptModel("zero-width layer".into()));
        }
        let mut layers = Vec::with_capacity(count - 1);
        for pair in sizes.windows(2) {
            let (i, o) = (pair[0], pair[1]);
            let n = i
                .checked_mul(o)
                .ok_or_else(|| MlpError::CorruptModel("layer too large".into()))?;
            layers.push(Layer {
                inputs: i,
                outputs: o,
                weights: r.f64s(n)?,
                biases: r.f64s(o)?,
                weight_velocity: r.f64s(n)?,
                bias_velocity: r.f64s(o)?,
            });
        }
        let scaler = match r.u8()? {
            0 => None,
            1 => Some(InputScaler {
                mean: r.f64s(sizes[0])?,
                scale: r.f64s(sizes[0])?,
            }),
            other => return Err(MlpError::CorruptModel(format!("bad scaler flag {other}"))),
        };
        r.finish()?;
        Ok(MlpModel { layers, scaler })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlpError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| MlpError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MlpError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| MlpError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        MlpModel::from_bytes(&bytes)
    }
}

#[inline]
fn step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], eta: f64, alpha: f64) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = alpha * *v - eta * g;
        *p += *v;
    }
}
