//! Federated averaging of neural feedforward controllers.
//!
//! A round hands the immutable global model to every sampled client, each
//! client drives one lap with it, trains on that lap's data, and returns its
//! parameters. The server forms the weighted coordinate mean once every
//! client has returned or failed, then scores the new model on the held-out
//! clients.

mod wire;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{mean_tracking_error, run_lap, ControlError, ControlGains, FeedforwardSource};
use crate::neuralff::{init_model, mse_loss, train_local, MlpModel, NnError, Sample, TrainConfig, DEFAULT_NEURONS};
use crate::seed::{self, stream};
use crate::trajgen::{ClientId, Trajectory};
use crate::vehicle::VehicleParams;

pub use wire::{
    decode_update, encode_update, read_update, send_update, write_update, UpdateListener, UPDATE_MAGIC,
    UPDATE_VERSION,
};

#[derive(Debug, Error)]
pub enum FedError {
    #[error("no updates to aggregate")]
    EmptyUpdateSet,
    #[error("parameter vector of length {found}, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("every sampled client diverged in round {round}")]
    AllClientsDiverged { round: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no trajectory for client {0}")]
    UnknownClient(ClientId),
    #[error("malformed update frame: {0}")]
    BadFrame(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters a client returns after its local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelUpdate {
    pub client_id: ClientId,
    pub round: u32,
    /// Rows the client trained on this round.
    pub sample_count: u64,
    /// Flat parameters in checkpoint order.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `w_i = n_i / Σ n_j`.
    #[default]
    SampleWeighted,
    /// `w_i = 1 / |updates|`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    /// Global communication rounds `G`.
    pub rounds: usize,
    /// Local epochs `E` per round.
    pub local_epochs: usize,
    /// Fraction of the training pool sampled each round, in `(0, 1]`.
    pub client_fraction: f64,
    pub seed: u64,
    pub weighting: Weighting,
    /// Keep earlier rounds' lap data instead of replacing it.
    pub accumulate_data: bool,
    /// Worker threads for client tasks; 0 uses the rayon default.
    pub workers: usize,
    pub hidden_neurons: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            local_epochs: 1,
            client_fraction: 1.0,
            seed: 0,
            weighting: Weighting::SampleWeighted,
            accumulate_data: false,
            workers: 0,
            hidden_neurons: DEFAULT_NEURONS,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<(), FedError> {
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(FedError::InvalidConfig(format!(
                "client fraction {} outside (0, 1]",
                self.client_fraction
            )));
        }
        if self.hidden_neurons == 0 {
            return Err(FedError::InvalidConfig("hidden layer needs at least one neuron".into()));
        }
        Ok(())
    }
}

/// Everything a client needs to run its task: the tracks and the shared
/// plant, controller and optimizer settings.
#[derive(Debug, Clone)]
pub struct World {
    pub trajectories: BTreeMap<ClientId, Trajectory>,
    pub vehicle: VehicleParams,
    pub gains: ControlGains,
    pub train: TrainConfig,
}

impl World {
    pub fn new(trajectories: BTreeMap<ClientId, Trajectory>) -> Self {
        Self {
            trajectories,
            vehicle: VehicleParams::default(),
            gains: ControlGains::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn trajectory(&self, id: ClientId) -> Result<&Trajectory, FedError> {
        self.trajectories.get(&id).ok_or(FedError::UnknownClient(id))
    }

    /// MTE of one lap on `id` with the given feedforward.
    pub fn lap_mte(&self, id: ClientId, ff: FeedforwardSource<'_>) -> Result<f64, FedError> {
        let log = run_lap(self.trajectory(id)?, ff, &self.gains, &self.vehicle)?;
        Ok(mean_tracking_error(&log)?)
    }

    /// Training rows from one lap on `id`.
    pub fn harvest(&self, id: ClientId, ff: FeedforwardSource<'_>) -> Result<(Vec<Sample>, f64), FedError> {
        let log = run_lap(self.trajectory(id)?, ff, &self.gains, &self.vehicle)?;
        let mte = mean_tracking_error(&log)?;
        Ok((log.samples(), mte))
    }
}

/// Sum with Neumaier compensation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Coordinate-wise weighted mean of the update parameters.
///
/// Updates are put in a canonical order first, and the mean is formed as
/// the first vector plus the compensated weighted sum of differences from
/// it, so identical inputs return that vector bit-exactly and the result
/// does not depend on the order of `updates`.
pub fn fedavg(updates: &[ModelUpdate], weighting: Weighting) -> Result<Vec<f64>, FedError> {
    let Some(first) = updates.first() else {
        return Err(FedError::EmptyUpdateSet);
    };
    let len = first.params.len();
    if let Some(bad) = updates.iter().find(|u| u.params.len() != len) {
        return Err(FedError::ShapeMismatch {
            expected: len,
            found: bad.params.len(),
        });
    }
    let mut sorted: Vec<&ModelUpdate> = updates.iter().collect();
    sorted.sort_by(|a, b| {
        (a.client_id, a.round, a.sample_count)
            .cmp(&(b.client_id, b.round, b.sample_count))
            .then_with(|| {
                let bits = |u: &ModelUpdate| u.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
                bits(a).cmp(&bits(b))
            })
    });
    let weights: Vec<f64> = match weighting {
        Weighting::Uniform => vec![1.0 / sorted.len() as f64; sorted.len()],
        Weighting::SampleWeighted => {
            let total: u64 = sorted.iter().map(|u| u.sample_count).sum();
            if total == 0 {
                return Err(FedError::InvalidConfig("all sample counts are zero".into()));
            }
            sorted.iter().map(|u| u.sample_count as f64 / total as f64).collect()
        }
    };
    let anchor = &sorted[0].params;
    Ok((0..len)
        .map(|j| {
            let base = anchor[j];
            base + compensated_sum(sorted.iter().zip(&weights).map(|(u, w)| w * (u.params[j] - base)))
        })
        .collect())
}

/// FedAvg into a model shaped like `template`, with each layer's
/// power-iteration vectors re-normalized to unit length.
pub fn fedavg_model(
    template: &MlpModel,
    updates: &[ModelUpdate],
    weighting: Weighting,
) -> Result<MlpModel, FedError> {
    let flat = fedavg(updates, weighting)?;
    if flat.len() != template.flat_len() {
        return Err(FedError::ShapeMismatch {
            expected: template.flat_len(),
            found: flat.len(),
        });
    }
    let mut model = template.clone();
    model.set_flat(&flat)?;
    for l in &mut model.layers {
        for vec in [&mut l.u, &mut l.v] {
            let norm = vec.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                vec.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
    Ok(model)
}

/// Clients taking part in round `round`: `⌈fraction·|pool|⌉` drawn without
/// replacement, returned sorted. The full pool is returned when the draw
/// would cover it.
pub fn sample_clients(pool: &BTreeSet<ClientId>, fraction: f64, round: usize, seed: u64) -> Vec<ClientId> {
    let all: Vec<ClientId> = pool.iter().copied().collect();
    let k = ((fraction * all.len() as f64).ceil() as usize).clamp(1, all.len().max(1));
    if k >= all.len() {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[stream::SAMPLE, round as u64]));
    let mut picked: Vec<ClientId> = all.choose_multiple(&mut rng, k).copied().collect();
    picked.sort();
    picked
}

/// Result of one client's round.
#[derive(Debug, Clone)]
pub struct ClientOutcome {
    pub update: ModelUpdate,
    /// MSE on the client's data after local training.
    pub train_loss: f64,
    /// MTE of the lap that produced the data.
    pub lap_mte: f64,
    /// The rows trained on, for callers that carry data across rounds.
    pub data: Vec<Sample>,
}

/// One client's round: drive a lap with the global model as feedforward,
/// append its rows to `carried`, and train `epochs` epochs from the global
/// parameters. With `epochs == 0` the global parameters come back unchanged.
#[allow(clippy::too_many_arguments)]
pub fn client_task(
    client: ClientId,
    global: &MlpModel,
    epochs: usize,
    round: usize,
    world: &World,
    seed: u64,
    carried: &[Sample],
) -> Result<ClientOutcome, FedError> {
    let (rows, lap_mte) = world.harvest(client, FeedforwardSource::Neural(global))?;
    let mut data = carried.to_vec();
    data.extend(rows);
    let local = if epochs == 0 {
        global.clone()
    } else {
        let cfg = TrainConfig {
            epochs,
            seed: seed::derive(seed, &[stream::TRAIN, u64::from(client.number()), round as u64]),
            ..world.train
        };
        train_local(global, &data, &cfg)?
    };
    let train_loss = mse_loss(&local, &data)?;
    Ok(ClientOutcome {
        update: ModelUpdate {
            client_id: client,
            round: round as u32,
            sample_count: data.len() as u64,
            params: local.flat(),
        },
        train_loss,
        lap_mte,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub client: ClientId,
    pub train_loss: Option<f64>,
    pub sample_count: u64,
    pub lap_mte: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub client: ClientId,
    /// `None` when the lap diverged.
    pub mte: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub clients: Vec<ClientReport>,
    pub test: Vec<TestReport>,
}

impl RoundReport {
    /// Mean test MTE over the clients that did not diverge.
    pub fn mean_test_mte(&self) -> Option<f64> {
        let vals: Vec<f64> = self.test.iter().filter_map(|t| t.mte).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub model: MlpModel,
    pub reports: Vec<RoundReport>,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, FedError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| FedError::InvalidConfig(e.to_string()))
}

/// Test MTE of `model` on every client in `test`, diverged laps as `None`.
pub fn evaluate(model: &MlpModel, test: &BTreeSet<ClientId>, world: &World) -> Result<Vec<TestReport>, FedError> {
    test.iter()
        .map(|&client| match world.lap_mte(client, FeedforwardSource::Neural(model)) {
            Ok(mte) => Ok(TestReport { client, mte: Some(mte) }),
            Err(FedError::Control(ControlError::Diverged { .. })) => Ok(TestReport { client, mte: None }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Runs `cfg.rounds` rounds of FedAvg over `train`, scoring the global
/// model on `test` after every aggregation.
pub fn run_federation(
    cfg: &FederationConfig,
    train: &BTreeSet<ClientId>,
    test: &BTreeSet<ClientId>,
    world: &World,
) -> Result<FederationOutcome, FedError> {
    cfg.validate()?;
    if let Some(c) = train.intersection(test).next() {
        return Err(FedError::InvalidConfig(format!("client {c} is in both train and test sets")));
    }
    if train.is_empty() {
        return Err(FedError::InvalidConfig("empty training set".into()));
    }
    for &c in train.iter().chain(test) {
        world.trajectory(c)?;
    }
    let workers = pool(cfg.workers)?;
    let mut model = init_model(cfg.hidden_neurons, seed::derive(cfg.seed, &[stream::INIT]));
    let mut carried: BTreeMap<ClientId, Vec<Sample>> = BTreeMap::new();
    let mut reports = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        let sampled = sample_clients(train, cfg.client_fraction, round, cfg.seed);
        let global = &model;
        let outcomes: Vec<(ClientId, Result<ClientOutcome, FedError>)> = workers.install(|| {
            sampled
                .par_iter()
                .map(|&c| {
                    let prior = carried.get(&c).map_or(&[][..], Vec::as_slice);
                    (c, client_task(c, global, cfg.local_epochs, round, world, cfg.seed, prior))
                })
                .collect()
        });

        let mut updates = Vec::new();
        let mut clients = Vec::new();
        for (client, outcome) in outcomes {
            match outcome {
                Ok(o) => {
                    clients.push(ClientReport {
                        client,
                        train_loss: Some(o.train_loss),
                        sample_count: o.update.sample_count,
                        lap_mte: Some(o.lap_mte),
                        diverged: false,
                    });
                    if cfg.accumulate_data {
                        carried.insert(client, o.data);
                    }
                    updates.push(o.update);
                }
                Err(FedError::Control(ControlError::Diverged { .. })) => clients.push(ClientReport {
                    client,
                    train_loss: None,
                    sample_count: 0,
                    lap_mte: None,
                    diverged: true,
                }),
                Err(e) => return Err(e),
            }
        }
        if updates.is_empty() {
            return Err(FedError::AllClientsDiverged { round });
        }
        model = fedavg_model(&model, &updates, cfg.weighting)?;
        let scored = &model;
        let test_reports = workers.install(|| {
            test.par_iter()
                .map(|&c| evaluate(scored, &BTreeSet::from([c]), world))
                .collect::<Result<Vec<_>, _>>()
        })?;
        reports.push(RoundReport {
            round,
            clients,
            test: test_reports.into_iter().flatten().collect(),
        });
    }
    Ok(FederationOutcome { model, reports })
}
