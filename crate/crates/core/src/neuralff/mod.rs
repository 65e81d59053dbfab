//! Small spectrally-normalized MLP that learns the inverse steering map
//! `(κ, v) → δ`.
//!
//! Every linear layer is used through its normalized weight `W/σ`, where
//! `σ = uᵀWv` is computed from the power-iteration vectors stored in the
//! model. Training refreshes those vectors once per optimizer step;
//! inference reads them as they are.

mod checkpoint;
mod spectral;
mod train;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajgen::ClientId;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_json, write_checkpoint, write_checkpoint_json, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use spectral::{
    power_iteration, scaled, sigma, spectral_normalize, top_singular_value, Normalized, NORM_EPS,
};
pub use train::{backward, train_local, AdamState, Gradient, TrainConfig};

/// Hidden width used in all experiments.
pub const DEFAULT_NEURONS: usize = 10;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One fully-connected layer, weights row-major `rows × cols` (out × in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Left power-iteration vector, length `rows`.
    pub u: Vec<f64>,
    /// Right power-iteration vector, length `cols`.
    pub v: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weight: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
            u: vec![0.0; rows],
            v: vec![0.0; cols],
        }
    }

    pub fn sigma(&self) -> f64 {
        sigma(&self.weight, self.rows, self.cols, &self.u, &self.v)
    }

    /// Weight matrix as used in the forward pass.
    pub fn normalized_weight(&self) -> Vec<f64> {
        scaled(&self.weight, self.sigma())
    }

    /// Refreshes `u`, `v` by one power-iteration step.
    pub fn power_step(&mut self) -> f64 {
        power_iteration(&self.weight, self.rows, self.cols, &mut self.u, &mut self.v)
    }
}

/// ReLU MLP with a linear output layer and spectral normalization on every
/// layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

impl MlpModel {
    /// All-zero model with the given layer widths, e.g. `[2, 10, 10, 1]`.
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect(),
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers.first().map_or(0, |l| l.cols)];
        dims.extend(self.layers.iter().map(|l| l.rows));
        dims
    }

    /// Number of trainable parameters (weights and biases).
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.rows * l.cols + l.rows).sum()
    }

    /// Length of [`flat`](Self::flat): trainable parameters plus the
    /// power-iteration vectors.
    pub fn flat_len(&self) -> usize {
        self.param_count() + self.layers.iter().map(|l| l.rows + l.cols).sum::<usize>()
    }

    /// Parameters in checkpoint order: all weights, then all biases, then
    /// each layer's `u` followed by its `v`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
        }
        for l in &self.layers {
            out.extend_from_slice(&l.bias);
        }
        for l in &self.layers {
            out.extend_from_slice(&l.u);
            out.extend_from_slice(&l.v);
        }
        out
    }

    /// Inverse of [`flat`](Self::flat) for a model with the same shape.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.flat_len() {
            return Err(NnError::InvalidModel(format!(
                "expected {} values, got {}",
                self.flat_len(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
        for l in &mut self.layers {
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        for l in &mut self.layers {
            l.u.iter_mut().for_each(|x| *x = it.next().unwrap());
            l.v.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), NnError> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.len() != l.rows * l.cols
                || l.bias.len() != l.rows
                || l.u.len() != l.rows
                || l.v.len() != l.cols
            {
                return Err(NnError::InvalidModel(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && self.layers[i - 1].rows != l.cols {
                return Err(NnError::InvalidModel(format!("layer {i} input width mismatch")));
            }
        }
        if self.layers.last().is_some_and(|l| l.rows != 1) || self.layers.first().is_some_and(|l| l.cols != 2) {
            return Err(NnError::InvalidModel("network must map 2 inputs to 1 output".into()));
        }
        if self.flat().iter().any(|p| !p.is_finite()) {
            return Err(NnError::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Snapshot of the normalized weights for repeated evaluation.
    pub fn freeze(&self) -> FrozenNet {
        FrozenNet {
            layers: self
                .layers
                .iter()
                .map(|l| (l.rows, l.cols, l.normalized_weight(), l.bias.clone()))
                .collect(),
        }
    }
}

/// Normalized weights of an [`MlpModel`], ready for inference.
#[derive(Debug, Clone)]
pub struct FrozenNet {
    layers: Vec<(usize, usize, Vec<f64>, Vec<f64>)>,
}

impl FrozenNet {
    pub fn eval(&self, kappa: f64, v: f64) -> f64 {
        let mut act = vec![kappa, v];
        let last = self.layers.len().saturating_sub(1);
        for (i, (rows, cols, w, b)) in self.layers.iter().enumerate() {
            let mut next: Vec<f64> = (0..*rows)
                .map(|r| b[r] + spectral::dot(&w[r * cols..(r + 1) * cols], &act))
                .collect();
            if i != last {
                next.iter_mut().for_each(|z| *z = z.max(0.0));
            }
            act = next;
        }
        act.first().copied().unwrap_or(0.0)
    }
}

/// Network output for one input pair.
pub fn forward(model: &MlpModel, kappa: f64, v: f64) -> f64 {
    model.freeze().eval(kappa, v)
}

/// Power-iteration steps applied to the random vectors of a fresh model.
pub const INIT_POWER_STEPS: usize = 15;

/// Fresh model of shape `[2, n, n, 1]`: weights uniform in
/// `±1/√fan_in`, zero biases, random unit power-iteration vectors refined
/// by [`INIT_POWER_STEPS`] iterations so `σ` starts out accurate.
pub fn init_model(n_neurons: usize, seed: u64) -> MlpModel {
    assert!(n_neurons >= 1, "need at least one hidden neuron");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::zeros(&[2, n_neurons, n_neurons, 1]);
    for l in &mut model.layers {
        let bound = 1.0 / (l.cols as f64).sqrt();
        l.weight.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
    }
    for l in &mut model.layers {
        l.u.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        l.v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        spectral::normalize(&mut l.u);
        spectral::normalize(&mut l.v);
        for _ in 0..INIT_POWER_STEPS {
            l.power_step();
        }
    }
    model
}

/// One training triple harvested from a lap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub kappa: f64,
    pub v: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClientDataset {
    /// `None` for data pooled from several clients.
    pub client: Option<ClientId>,
    pub rows: Vec<Sample>,
}

impl ClientDataset {
    pub fn new(client: Option<ClientId>, rows: Vec<Sample>) -> Self {
        Self { client, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Mean squared steering residual over `batch`.
pub fn mse_loss(model: &MlpModel, batch: &[Sample]) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let net = model.freeze();
    let sum: f64 = batch
        .iter()
        .map(|s| (s.delta - net.eval(s.kappa, s.v)).powi(2))
        .sum();
    Ok(sum / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let m = MlpModel::zeros(&[2, 10, 10, 1]);
        assert_eq!(forward(&m, 0.7, 1.3), 0.0);
        assert_eq!(forward(&m, -1.1, 0.2), 0.0);
    }

    #[test]
    fn zero_input_with_zero_bias_gives_zero() {
        let m = init_model(DEFAULT_NEURONS, 42);
        assert_eq!(forward(&m, 0.0, 0.0), 0.0);
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let a = init_model(10, 7);
        let b = init_model(10, 7);
        let c = init_model(10, 8);
        assert_eq!(
            a.flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a.flat(), c.flat());
    }

    #[test]
    fn default_shape_has_151_parameters() {
        let m = init_model(10, 1);
        assert_eq!(m.param_count(), (2 * 10 + 10) + (10 * 10 + 10) + (10 + 1));
        assert_eq!(m.param_count(), 151);
        assert_eq!(m.layer_dims(), vec![2, 10, 10, 1]);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn init_weights_respect_fan_in_bound() {
        let m = init_model(10, 3);
        for l in &m.layers {
            let bound = 1.0 / (l.cols as f64).sqrt();
            assert!(l.weight.iter().all(|w| w.abs() < bound));
            assert!(l.bias.iter().all(|b| *b == 0.0));
            assert!((spectral::dot(&l.u, &l.u) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_roundtrip() {
        let a = init_model(10, 11);
        let mut b = MlpModel::zeros(&[2, 10, 10, 1]);
        b.set_flat(&a.flat()).unwrap();
        assert_eq!(a, b);
        assert!(b.set_flat(&[0.0; 3]).is_err());
    }

    #[test]
    fn mse_examples() {
        let zero = MlpModel::zeros(&[2, 10, 10, 1]);
        let one = [Sample { kappa: 0.5, v: 1.0, delta: 0.2 }];
        assert!((mse_loss(&zero, &one).unwrap() - 0.04).abs() < 1e-15);
        let two = [
            Sample { kappa: 0.5, v: 1.0, delta: 0.1 },
            Sample { kappa: 0.5, v: 1.0, delta: -0.3 },
        ];
        assert!((mse_loss(&zero, &two).unwrap() - 0.05).abs() < 1e-15);
        assert!(matches!(mse_loss(&zero, &[]), Err(NnError::EmptyBatch)));
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let m = init_model(10, 5);
        let rows: Vec<Sample> = (0..20)
            .map(|i| {
                let (kappa, v) = (i as f64 * 0.1 - 1.0, 0.5 + i as f64 * 0.05);
                Sample { kappa, v, delta: forward(&m, kappa, v) }
            })
            .collect();
        assert_eq!(mse_loss(&m, &rows).unwrap(), 0.0);
    }

    #[test]
    fn validate_catches_bad_shapes() {
        let mut m = init_model(4, 1);
        m.layers[1].bias.pop();
        assert!(m.validate().is_err());
        let mut m = init_model(4, 1);
        m.layers[0].weight[0] = f64::NAN;
        assert!(m.validate().is_err());
    }
}
