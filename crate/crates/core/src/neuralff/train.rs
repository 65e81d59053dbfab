//! Reverse-mode gradients of the MSE loss and Adam training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spectral::{dot, NORM_EPS};
use super::{MlpModel, NnError, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn is_valid(&self) -> bool {
        self.learning_rate > 0.0
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
    }
}

/// Loss gradient per layer, same shapes as the model's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradient {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weight: model.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Weights then biases, matching the head of [`MlpModel::flat`].
    pub fn flat(&self) -> Vec<f64> {
        self.weight.iter().chain(&self.bias).flatten().copied().collect()
    }
}

/// Gradient with respect to the normalized weights `W/σ` and the biases.
pub(crate) fn effective_gradient(model: &MlpModel, batch: &[Sample]) -> Result<Gradient, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let eff: Vec<Vec<f64>> = model.layers.iter().map(|l| l.normalized_weight()).collect();
    let last = model.layers.len() - 1;
    let scale = 2.0 / batch.len() as f64;
    let mut grad = Gradient::zeros_like(model);
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len() + 1);
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len());

    for s in batch {
        acts.clear();
        pre.clear();
        acts.push(vec![s.kappa, s.v]);
        for (i, l) in model.layers.iter().enumerate() {
            let input = &acts[i];
            let z: Vec<f64> = (0..l.rows)
                .map(|r| l.bias[r] + dot(&eff[i][r * l.cols..(r + 1) * l.cols], input))
                .collect();
            let a = if i == last {
                z.clone()
            } else {
                z.iter().map(|x| x.max(0.0)).collect()
            };
            pre.push(z);
            acts.push(a);
        }
        // d loss / d output
        let mut delta = vec![-scale * (s.delta - acts[last + 1][0])];
        for i in (0..=last).rev() {
            let l = &model.layers[i];
            if i != last {
                for (d, z) in delta.iter_mut().zip(&pre[i]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &acts[i];
            for r in 0..l.rows {
                grad.bias[i][r] += delta[r];
                let row = &mut grad.weight[i][r * l.cols..(r + 1) * l.cols];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += delta[r] * x;
                }
            }
            if i > 0 {
                delta = (0..l.cols)
                    .map(|c| (0..l.rows).map(|r| eff[i][r * l.cols + c] * delta[r]).sum())
                    .collect();
            }
        }
    }
    Ok(grad)
}

/// Exact gradient of [`mse_loss`](super::mse_loss) with respect to the raw
/// weights and biases. The power-iteration vectors are held constant, so
/// `∂σ/∂W = u vᵀ`.
pub fn backward(model: &MlpModel, batch: &[Sample]) -> Result<Gradient, NnError> {
    let mut grad = effective_gradient(model, batch)?;
    for (l, gw) in model.layers.iter().zip(grad.weight.iter_mut()) {
        let sigma = l.sigma();
        if sigma <= NORM_EPS {
            gw.iter_mut().for_each(|g| *g /= NORM_EPS);
            continue;
        }
        let coupling = dot(gw, &l.weight) / (sigma * sigma);
        for r in 0..l.rows {
            for c in 0..l.cols {
                let g = &mut gw[r * l.cols + c];
                *g = *g / sigma - coupling * l.u[r] * l.v[c];
            }
        }
    }
    Ok(grad)
}

/// First and second moment estimates for every trainable parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    /// Applies one bias-corrected Adam update to `params` in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
}

/// Trains a copy of `model` on `data` for `cfg.epochs` epochs of shuffled
/// mini-batches. The trailing partial batch of each epoch is kept. Adam
/// state starts fresh on every call.
pub fn train_local(model: &MlpModel, data: &[Sample], cfg: &TrainConfig) -> Result<MlpModel, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.param_count());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut params = Vec::with_capacity(model.param_count());

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            for l in &mut model.layers {
                l.power_step();
            }
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let grad = backward(&model, &batch)?.flat();

            params.clear();
            params.extend(model.layers.iter().flat_map(|l| l.weight.iter().copied()));
            params.extend(model.layers.iter().flat_map(|l| l.bias.iter().copied()));
            adam.update(&mut params, &grad, cfg);
            let mut it = params.iter().copied();
            for l in &mut model.layers {
                l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            }
            for l in &mut model.layers {
                l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::{init_model, mse_loss, Layer};
    use super::*;
    use rand::Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| Sample {
                kappa: rng.gen_range(-1.4..1.4),
                v: rng.gen_range(0.1..2.0),
                delta: rng.gen_range(-0.3..0.3),
            })
            .collect()
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let m = init_model(10, 9);
        let rows: Vec<Sample> = (0..8)
            .map(|i| {
                let (kappa, v) = (0.2 * i as f64 - 0.7, 0.3 + 0.1 * i as f64);
                Sample { kappa, v, delta: super::super::forward(&m, kappa, v) }
            })
            .collect();
        let g = backward(&m, &rows).unwrap();
        assert!(g.flat().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for draw in 0..5 {
            let m = init_model(10, 100 + draw);
            let batch = random_batch(&mut rng, 16);
            let g = backward(&m, &batch).unwrap().flat();
            let base = m.flat();
            let h = 1e-6;
            for (i, gi) in g.iter().enumerate() {
                let mut plus = m.clone();
                let mut p = base.clone();
                p[i] += h;
                plus.set_flat(&p).unwrap();
                let mut minus = m.clone();
                p[i] -= 2.0 * h;
                minus.set_flat(&p).unwrap();
                let fd = (mse_loss(&plus, &batch).unwrap() - mse_loss(&minus, &batch).unwrap()) / (2.0 * h);
                let err = (fd - gi).abs() / gi.abs().max(fd.abs()).max(1e-6);
                assert!(err < 1e-5, "draw {draw} coord {i}: fd {fd} vs {gi}");
            }
        }
    }

    #[test]
    fn single_linear_layer_closed_form() {
        let mut layer = Layer::zeros(1, 2);
        layer.weight = vec![0.3, -0.4];
        layer.bias = vec![0.1];
        layer.u = vec![1.0];
        layer.v = vec![0.6, -0.8];
        let m = MlpModel { layers: vec![layer] };
        let row = Sample { kappa: 0.7, v: 1.5, delta: 0.25 };
        let out = super::super::forward(&m, row.kappa, row.v);
        let residual = row.delta - out;
        let g = effective_gradient(&m, &[row]).unwrap();
        assert!((g.weight[0][0] - (-2.0 * residual * row.kappa)).abs() < 1e-15);
        assert!((g.weight[0][1] - (-2.0 * residual * row.v)).abs() < 1e-15);
        assert!((g.bias[0][0] - (-2.0 * residual)).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        let mut adam = AdamState::new(1);
        let mut p = [0.5];
        adam.update(&mut p, &[3.7], &cfg);
        assert!((p[0] - (0.5 - cfg.learning_rate)).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let m = init_model(10, 4);
        let data = [Sample { kappa: 0.1, v: 1.0, delta: 0.02 }];
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        assert_eq!(train_local(&m, &data, &cfg).unwrap(), m);
        assert!(matches!(train_local(&m, &[], &cfg), Err(NnError::EmptyDataset)));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let m = init_model(10, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Sample> = (0..100)
            .map(|_| {
                let kappa = rng.gen_range(-1.4..1.4);
                Sample { kappa, v: rng.gen_range(0.1..2.0), delta: (kappa * 0.17f64).atan() }
            })
            .collect();
        let cfg = TrainConfig { epochs: 3, seed: 77, ..Default::default() };
        let a = train_local(&m, &data, &cfg).unwrap();
        let b = train_local(&m, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(mse_loss(&a, &data).unwrap() < mse_loss(&m, &data).unwrap());
    }
}
