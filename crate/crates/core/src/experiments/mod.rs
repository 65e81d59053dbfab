//! Experiment drivers: the baseline comparison, centralized training, the
//! federated proof of concept, the local-epoch sweep and the local-versus-
//! federated comparison. Each `cmd_*` function writes its CSV tables and a
//! `run_meta.json` into the output directory and returns the table.

mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::write::GzEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{run_lap, ControlError, FeedforwardSource};
use crate::federation::{run_federation, FedError, FederationConfig, RoundReport, Weighting, World};
use crate::neuralff::{init_model, train_local, write_checkpoint, MlpModel, NnError, TrainConfig, DEFAULT_NEURONS};
use crate::seed::{self, stream};
use crate::trajgen::{
    default_specs, generate_path, split_schedule, write_trajectory_csv, ClientId, PathSpec, Split, TrajError,
    DEFAULT_DT, RUN_COUNT,
};

pub use table::{MteRow, ResultTable, RunMeta, Variant};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// True for problems with the requested configuration rather than
    /// failures while running it.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Self::Invalid(_)
                | Self::Traj(_)
                | Self::Fed(FedError::InvalidConfig(_) | FedError::UnknownClient(_))
        )
    }
}

/// How the train/test partition is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitChoice {
    /// One of the ten scheduled runs.
    Run(usize),
    /// Explicit held-out clients.
    Test(BTreeSet<ClientId>),
}

impl SplitChoice {
    pub fn resolve(&self) -> Result<Split, ExperimentError> {
        match self {
            Self::Run(n) => Ok(split_schedule(*n)?),
            Self::Test(t) if t.is_empty() || t.len() == 12 => {
                Err(ExperimentError::Invalid("test set must hold between 1 and 11 clients".into()))
            }
            Self::Test(t) => Ok(Split::from_test(t.iter().copied())),
        }
    }

    pub fn proof_of_concept() -> Self {
        Self::Test(Split::proof_of_concept().test)
    }
}

impl fmt::Display for SplitChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Run(n) => write!(f, "{n}"),
            Self::Test(t) => {
                let names: Vec<&str> = t.iter().map(|c| c.roman()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

impl FromStr for SplitChoice {
    type Err = ExperimentError;

    /// `"3"` selects scheduled run 3; `"I,VI,VIII,XI"` lists test clients.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if !s.contains(',') {
            if let Ok(n) = s.parse::<usize>() {
                if !(1..=RUN_COUNT).contains(&n) {
                    return Err(ExperimentError::Invalid(format!("run index {n} outside 1..={RUN_COUNT}")));
                }
                return Ok(Self::Run(n));
            }
        }
        let test = s
            .split(',')
            .map(|p| p.parse::<ClientId>())
            .collect::<Result<BTreeSet<_>, _>>()?;
        let choice = Self::Test(test);
        choice.resolve()?;
        Ok(choice)
    }
}

/// Knobs shared by all commands. `None` fields take each command's default.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub rounds: Option<usize>,
    pub epochs: Option<usize>,
    pub split: Option<SplitChoice>,
    pub weighting: Weighting,
    pub workers: usize,
    pub accumulate_data: bool,
    pub gzip_logs: bool,
    pub specs: Vec<PathSpec>,
}

impl ExperimentSpec {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            seed: 0,
            rounds: None,
            epochs: None,
            split: None,
            weighting: Weighting::SampleWeighted,
            workers: 0,
            accumulate_data: false,
            gzip_logs: false,
            specs: default_specs(),
        }
    }

    fn split_or_default(&self) -> Result<(SplitChoice, Split), ExperimentError> {
        let choice = self.split.clone().unwrap_or_else(SplitChoice::proof_of_concept);
        let split = choice.resolve()?;
        Ok((choice, split))
    }

    fn federation(&self, rounds: usize, epochs: usize) -> FederationConfig {
        FederationConfig {
            rounds,
            local_epochs: epochs,
            seed: self.seed,
            weighting: self.weighting,
            accumulate_data: self.accumulate_data,
            workers: self.workers,
            ..FederationConfig::default()
        }
    }

    fn meta(&self, command: &str, rounds: Option<usize>, epochs: Option<usize>, split: Option<String>) -> RunMeta {
        RunMeta::new(command, self, rounds, epochs, split)
    }

    fn create_out_dir(&self) -> Result<(), ExperimentError> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

/// Default global rounds of the proof of concept.
pub const POC_ROUNDS: usize = 5;
/// Default local epochs of the proof of concept.
pub const POC_EPOCHS: usize = 1;
/// Epochs of the centralized baseline.
pub const CENTRALIZED_EPOCHS: usize = 5;
/// Global rounds of the epoch sweep.
pub const SWEEP_ROUNDS: usize = 30;
/// Local epoch settings compared in the sweep.
pub const SWEEP_EPOCHS: [usize; 3] = [1, 2, 5];

/// Generates every spec's trajectory and wraps them with default plant,
/// gains and optimizer settings.
pub fn build_world(specs: &[PathSpec]) -> Result<World, ExperimentError> {
    let mut trajectories = BTreeMap::new();
    for spec in specs {
        if trajectories.insert(spec.id, generate_path(spec, DEFAULT_DT)?).is_some() {
            return Err(ExperimentError::Invalid(format!("duplicate spec for client {}", spec.id)));
        }
    }
    Ok(World::new(trajectories))
}

fn mte_or_diverged(r: Result<f64, FedError>) -> Result<Option<f64>, ExperimentError> {
    match r {
        Ok(m) => Ok(Some(m)),
        Err(FedError::Control(ControlError::Diverged { .. })) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// FB-only and FB+analytic MTE for each client.
pub fn baseline(world: &World, clients: &BTreeSet<ClientId>) -> Result<Vec<MteRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &c in clients {
        for (variant, ff) in [(Variant::Fb, FeedforwardSource::None), (Variant::FbAnalytic, FeedforwardSource::Analytic)] {
            rows.push(MteRow {
                client: c,
                variant,
                mte: mte_or_diverged(world.lap_mte(c, ff))?,
            });
        }
    }
    Ok(rows)
}

/// Trains a fresh model for `epochs` epochs on the pooled rows of one
/// FB+analytic lap per training client.
pub fn train_centralized(
    world: &World,
    train: &BTreeSet<ClientId>,
    epochs: usize,
    master_seed: u64,
) -> Result<MlpModel, ExperimentError> {
    let mut data = Vec::new();
    for &c in train {
        match world.harvest(c, FeedforwardSource::Analytic) {
            Ok((rows, _)) => data.extend(rows),
            Err(FedError::Control(ControlError::Diverged { .. })) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let init = init_model(DEFAULT_NEURONS, seed::derive(master_seed, &[stream::INIT]));
    let cfg = TrainConfig {
        epochs,
        seed: seed::derive(master_seed, &[stream::CENTRALIZED]),
        ..world.train
    };
    Ok(train_local(&init, &data, &cfg)?)
}

/// Per-client MTE of a neural feedforward model.
pub fn neural_rows(
    world: &World,
    model: &MlpModel,
    clients: &BTreeSet<ClientId>,
    variant: Variant,
) -> Result<Vec<MteRow>, ExperimentError> {
    clients
        .iter()
        .map(|&c| {
            Ok(MteRow {
                client: c,
                variant,
                mte: mte_or_diverged(world.lap_mte(c, FeedforwardSource::Neural(model)))?,
            })
        })
        .collect()
}

/// Mean and sample standard deviation of one sweep point across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub epochs: Vec<usize>,
    pub splits: Vec<(usize, Split)>,
    pub rounds: usize,
    pub seed: u64,
    pub weighting: Weighting,
    pub accumulate_data: bool,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Per epoch setting, one point per completed round `1..=rounds`.
    pub curves: BTreeMap<usize, Vec<SweepPoint>>,
    /// Mean test MTE after each round for every `(epochs, run)` pair.
    pub runs: BTreeMap<(usize, usize), Vec<Option<f64>>>,
}

/// Federations for every `(E, split)` pair, run in parallel. Each split
/// uses the same sub-seed for every `E`, so the epoch settings differ only
/// in their local training.
pub fn epoch_sweep(world: &World, cfg: &SweepConfig) -> Result<SweepResult, ExperimentError> {
    let jobs: Vec<(usize, usize, &Split)> = cfg
        .epochs
        .iter()
        .flat_map(|&e| cfg.splits.iter().map(move |(run, split)| (e, *run, split)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    let results: Vec<Result<((usize, usize), Vec<Option<f64>>), ExperimentError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(e, run, split)| {
                let fed = FederationConfig {
                    rounds: cfg.rounds,
                    local_epochs: e,
                    seed: seed::derive(cfg.seed, &[stream::SWEEP, run as u64]),
                    weighting: cfg.weighting,
                    accumulate_data: cfg.accumulate_data,
                    workers: 1,
                    ..FederationConfig::default()
                };
                let out = run_federation(&fed, &split.train, &split.test, world)?;
                Ok(((e, run), out.reports.iter().map(RoundReport::mean_test_mte).collect()))
            })
            .collect()
    });
    let runs: BTreeMap<(usize, usize), Vec<Option<f64>>> = results.into_iter().collect::<Result<_, _>>()?;
    let curves = cfg
        .epochs
        .iter()
        .map(|&e| {
            let points = (0..cfg.rounds)
                .map(|g| {
                    let vals: Vec<f64> = runs
                        .range((e, 0)..=(e, usize::MAX))
                        .filter_map(|(_, curve)| curve[g])
                        .collect();
                    summarize(&vals)
                })
                .collect();
            (e, points)
        })
        .collect();
    Ok(SweepResult { curves, runs })
}

fn summarize(vals: &[f64]) -> SweepPoint {
    let n = vals.len();
    if n == 0 {
        return SweepPoint { mean: f64::NAN, std: f64::NAN, runs: 0 };
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    SweepPoint { mean, std, runs: n }
}

/// MTE of each isolated local model and of the federated model on the
/// held-out clients.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalVsFed {
    pub federated: BTreeMap<ClientId, Option<f64>>,
    /// Keyed by `(local client, test client)`.
    pub local: BTreeMap<(ClientId, ClientId), Option<f64>>,
}

impl LocalVsFed {
    /// `MTE_local / MTE_fed`, `None` when either lap diverged.
    pub fn ratio(&self, local: ClientId, test: ClientId) -> Option<f64> {
        let l = self.local.get(&(local, test)).copied().flatten()?;
        let f = self.federated.get(&test).copied().flatten()?;
        Some(l / f)
    }
}

/// Trains one model per training client on its own laps only, with the
/// federated run's budget (`G` rounds of `E` epochs on a fresh lap each),
/// starting from the same initial parameters as the federation.
pub fn train_isolated(
    world: &World,
    client: ClientId,
    cfg: &FederationConfig,
) -> Result<MlpModel, ExperimentError> {
    let mut model = init_model(cfg.hidden_neurons, seed::derive(cfg.seed, &[stream::INIT]));
    let mut data = Vec::new();
    for g in 0..cfg.rounds {
        let rows = match world.harvest(client, FeedforwardSource::Neural(&model)) {
            Ok((rows, _)) => rows,
            Err(FedError::Control(ControlError::Diverged { .. })) => break,
            Err(e) => return Err(e.into()),
        };
        if !cfg.accumulate_data {
            data.clear();
        }
        data.extend(rows);
        if cfg.local_epochs == 0 {
            continue;
        }
        let train = TrainConfig {
            epochs: cfg.local_epochs,
            seed: seed::derive(cfg.seed, &[stream::LOCAL, u64::from(client.number()), g as u64]),
            ..world.train
        };
        model = train_local(&model, &data, &train)?;
    }
    Ok(model)
}

pub fn local_vs_fed(
    world: &World,
    split: &Split,
    cfg: &FederationConfig,
    federated: &MlpModel,
) -> Result<LocalVsFed, ExperimentError> {
    let fed_rows = neural_rows(world, federated, &split.test, Variant::FbFederated)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    let locals: Vec<Result<Vec<((ClientId, ClientId), Option<f64>)>, ExperimentError>> = pool.install(|| {
        split
            .train
            .par_iter()
            .map(|&c| {
                let model = train_isolated(world, c, cfg)?;
                let rows = neural_rows(world, &model, &split.test, Variant::FbLocal)?;
                Ok(rows.into_iter().map(|r| ((c, r.client), r.mte)).collect())
            })
            .collect()
    });
    let mut local = BTreeMap::new();
    for r in locals {
        local.extend(r?);
    }
    Ok(LocalVsFed {
        federated: fed_rows.into_iter().map(|r| (r.client, r.mte)).collect(),
        local,
    })
}

fn open_log(dir: &Path, stem: &str, gzip: bool) -> Result<Box<dyn Write>, ExperimentError> {
    fs::create_dir_all(dir)?;
    Ok(if gzip {
        let f = File::create(dir.join(format!("{stem}.csv.gz")))?;
        Box::new(GzEncoder::new(BufWriter::new(f), Compression::default()))
    } else {
        Box::new(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?))
    })
}

fn write_lap_log(
    world: &World,
    client: ClientId,
    ff: FeedforwardSource<'_>,
    dir: &Path,
    gzip: bool,
) -> Result<(), ExperimentError> {
    match run_lap(world.trajectory(client)?, ff, &world.gains, &world.vehicle) {
        Ok(log) => {
            let mut out = open_log(dir, &client.file_stem(), gzip)?;
            log.write_csv(&mut out)?;
            out.flush()?;
            Ok(())
        }
        Err(ControlError::Diverged { .. }) => Ok(()),
        Err(e) => Err(e.into()),
    }
}

/// Writes the twelve trajectory CSVs and a characteristics table.
pub fn cmd_gen_paths(spec: &ExperimentSpec) -> Result<ResultTable, ExperimentError> {
    spec.create_out_dir()?;
    let world = build_world(&spec.specs)?;
    let dir = spec.out_dir.join("trajectories");
    fs::create_dir_all(&dir)?;
    let mut chars = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(spec.out_dir.join("characteristics.csv"))?;
    chars.write_record([
        "client",
        "length",
        "max_abs_kappa",
        "v_max",
        "v_min",
        "duration",
        "target_length",
        "target_max_abs_kappa",
        "target_v_max",
        "target_v_min",
        "target_duration",
    ])?;
    for s in &spec.specs {
        let traj = &world.trajectories[&s.id];
        let f = File::create(dir.join(format!("{}.csv", s.id.file_stem())))?;
        write_trajectory_csv(traj, BufWriter::new(f))?;
        let c = traj.characteristics();
        let t = s.targets.map(|t| [t.length, t.max_abs_kappa, t.v_max, t.v_min, t.duration]);
        let mut rec = vec![s.id.to_string()];
        rec.extend([c.length, c.max_abs_kappa, c.v_max, c.v_min, c.duration].map(|v| v.to_string()));
        rec.extend(match t {
            Some(t) => t.map(|v| v.to_string()).to_vec(),
            None => vec![String::new(); 5],
        });
        chars.write_record(&rec)?;
    }
    chars.flush()?;
    let table = ResultTable::new(Vec::new(), spec.meta("gen-paths", None, None, None));
    table.write_meta(&spec.out_dir)?;
    Ok(table)
}

/// FB versus FB+analytic on all clients: `mte_fb_ff.csv`.
pub fn cmd_baseline(spec: &ExperimentSpec) -> Result<ResultTable, ExperimentError> {
    spec.create_out_dir()?;
    let world = build_world(&spec.specs)?;
    let clients: BTreeSet<ClientId> = world.trajectories.keys().copied().collect();
    let table = ResultTable::new(baseline(&world, &clients)?, spec.meta("baseline", None, None, None));
    table.write_csv(&spec.out_dir.join("mte_fb_ff.csv"))?;
    table.write_meta(&spec.out_dir)?;
    Ok(table)
}

/// Centralized neural FF on the test clients: `centralized_mte.csv`.
pub fn cmd_centralized(spec: &ExperimentSpec) -> Result<ResultTable, ExperimentError> {
    spec.create_out_dir()?;
    let world = build_world(&spec.specs)?;
    let (choice, split) = spec.split_or_default()?;
    let epochs = spec.epochs.unwrap_or(CENTRALIZED_EPOCHS);
    let model = train_centralized(&world, &split.train, epochs, spec.seed)?;
    let mut rows = baseline(&world, &split.test)?;
    rows.extend(neural_rows(&world, &model, &split.test, Variant::FbCentralized)?);
    let table = ResultTable::new(rows, spec.meta("centralized", None, Some(epochs), Some(choice.to_string())));
    table.write_csv(&spec.out_dir.join("centralized_mte.csv"))?;
    write_checkpoint(&model, BufWriter::new(File::create(spec.out_dir.join("centralized.ffnn"))?))?;
    table.write_meta(&spec.out_dir)?;
    Ok(table)
}

/// The federated proof of concept: `federated_rounds.csv`,
/// `federated_mte.csv` and the test-lap logs under `logs/`.
pub fn cmd_federated(spec: &ExperimentSpec) -> Result<ResultTable, ExperimentError> {
    spec.create_out_dir()?;
    let world = build_world(&spec.specs)?;
    let (choice, split) = spec.split_or_default()?;
    let rounds = spec.rounds.unwrap_or(POC_ROUNDS);
    let epochs = spec.epochs.unwrap_or(POC_EPOCHS);
    let cfg = spec.federation(rounds, epochs);
    let outcome = run_federation(&cfg, &split.train, &split.test, &world)?;
    let central = train_centralized(&world, &split.train, CENTRALIZED_EPOCHS, spec.seed)?;

    table::write_rounds_csv(&spec.out_dir.join("federated_rounds.csv"), &outcome.reports)?;
    let mut rows = baseline(&world, &split.test)?;
    rows.extend(neural_rows(&world, &central, &split.test, Variant::FbCentralized)?);
    rows.extend(neural_rows(&world, &outcome.model, &split.test, Variant::FbFederated)?);
    let table = ResultTable::new(rows, spec.meta("federated", Some(rounds), Some(epochs), Some(choice.to_string())));
    table.write_csv(&spec.out_dir.join("federated_mte.csv"))?;

    let logs = spec.out_dir.join("logs");
    for &c in &split.test {
        for (variant, ff) in [
            (Variant::Fb, FeedforwardSource::None),
            (Variant::FbAnalytic, FeedforwardSource::Analytic),
            (Variant::FbCentralized, FeedforwardSource::Neural(&central)),
            (Variant::FbFederated, FeedforwardSource::Neural(&outcome.model)),
        ] {
            write_lap_log(&world, c, ff, &logs.join(variant.dir_name()), spec.gzip_logs)?;
        }
    }
    write_checkpoint(&outcome.model, BufWriter::new(File::create(spec.out_dir.join("federated.ffnn"))?))?;
    table.write_meta(&spec.out_dir)?;
    Ok(table)
}

/// Local-epoch sweep over the scheduled splits: `epoch_sweep.csv` with the
/// per-`(E, g)` mean and spread, and `epoch_sweep_runs.csv` with each run.
pub fn cmd_epoch_sweep(spec: &ExperimentSpec) -> Result<(ResultTable, SweepResult), ExperimentError> {
    spec.create_out_dir()?;
    let world = build_world(&spec.specs)?;
    let splits = match &spec.split {
        None => (1..=RUN_COUNT).map(|r| Ok((r, split_schedule(r)?))).collect::<Result<Vec<_>, ExperimentError>>()?,
        Some(SplitChoice::Run(r)) => vec![(*r, split_schedule(*r)?)],
        Some(choice @ SplitChoice::Test(_)) => vec![(0, choice.resolve()?)],
    };
    let cfg = SweepConfig {
        epochs: spec.epochs.map_or_else(|| SWEEP_EPOCHS.to_vec(), |e| vec![e]),
        splits,
        rounds: spec.rounds.unwrap_or(SWEEP_ROUNDS),
        seed: spec.seed,
        weighting: spec.weighting,
        accumulate_data: spec.accumulate_data,
        workers: spec.workers,
    };
    let result = epoch_sweep(&world, &cfg)?;
    table::write_sweep_csv(&spec.out_dir.join("epoch_sweep.csv"), &result)?;
    table::write_sweep_runs_csv(&spec.out_dir.join("epoch_sweep_runs.csv"), &result)?;
    let split_label = spec.split.as_ref().map_or_else(|| "1-10".to_string(), ToString::to_string);
    let mut meta = spec.meta("sweep", Some(cfg.rounds), spec.epochs, Some(split_label));
    meta.partial = result.runs.values().flatten().any(Option::is_none);
    let table = ResultTable::new(Vec::new(), meta);
    table.write_meta(&spec.out_dir)?;
    Ok((table, result))
}

/// Isolated local models against the federated one:
/// `local_vs_fed_ratio.csv`.
pub fn cmd_local_vs_fed(spec: &ExperimentSpec) -> Result<(ResultTable, LocalVsFed), ExperimentError> {
    spec.create_out_dir()?;
    let world = build_world(&spec.specs)?;
    let (choice, split) = spec.split_or_default()?;
    let rounds = spec.rounds.unwrap_or(POC_ROUNDS);
    let epochs = spec.epochs.unwrap_or(POC_EPOCHS);
    let cfg = spec.federation(rounds, epochs);
    let outcome = run_federation(&cfg, &split.train, &split.test, &world)?;
    let result = local_vs_fed(&world, &split, &cfg, &outcome.model)?;
    table::write_ratio_csv(&spec.out_dir.join("local_vs_fed_ratio.csv"), &result)?;
    let mut meta = spec.meta("local-vs-fed", Some(rounds), Some(epochs), Some(choice.to_string()));
    meta.partial = result.local.values().chain(result.federated.values()).any(Option::is_none);
    let table = ResultTable::new(Vec::new(), meta);
    table.write_meta(&spec.out_dir)?;
    Ok((table, result))
}
