//! Lap simulation, network training and aggregation throughput.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fedff_core::control::{run_lap, ControlGains, FeedforwardSource};
use fedff_core::federation::{fedavg, ModelUpdate, Weighting};
use fedff_core::neuralff::{backward, init_model, train_local, TrainConfig};
use fedff_core::trajgen::{default_specs, generate_path, ClientId, DEFAULT_DT};
use fedff_core::vehicle::VehicleParams;

fn trajectories(c: &mut Criterion) {
    let spec = default_specs().into_iter().find(|s| s.id == ClientId::new(4).unwrap()).unwrap();
    c.bench_function("generate_path IV", |b| b.iter(|| generate_path(black_box(&spec), DEFAULT_DT).unwrap()));
}

fn laps(c: &mut Criterion) {
    let spec = default_specs().into_iter().find(|s| s.id == ClientId::new(4).unwrap()).unwrap();
    let traj = generate_path(&spec, DEFAULT_DT).unwrap();
    let (gains, params) = (ControlGains::default(), VehicleParams::default());
    let model = init_model(10, 0);
    c.bench_function("lap IV analytic", |b| {
        b.iter(|| run_lap(black_box(&traj), FeedforwardSource::Analytic, &gains, &params).unwrap())
    });
    c.bench_function("lap IV neural", |b| {
        b.iter(|| run_lap(black_box(&traj), FeedforwardSource::Neural(&model), &gains, &params))
    });
}

fn training(c: &mut Criterion) {
    let spec = default_specs().into_iter().find(|s| s.id == ClientId::new(4).unwrap()).unwrap();
    let traj = generate_path(&spec, DEFAULT_DT).unwrap();
    let log = run_lap(&traj, FeedforwardSource::Analytic, &ControlGains::default(), &VehicleParams::default())
        .unwrap();
    let data = log.samples();
    let model = init_model(10, 0);
    c.bench_function("backward batch 32", |b| b.iter(|| backward(black_box(&model), &data[..32]).unwrap()));
    c.bench_function("train one epoch IV", |b| {
        b.iter(|| train_local(black_box(&model), &data, &TrainConfig::default()).unwrap())
    });
}

fn aggregation(c: &mut Criterion) {
    let updates: Vec<ModelUpdate> = ClientId::all()
        .take(8)
        .map(|id| ModelUpdate {
            client_id: id,
            round: 0,
            sample_count: 500 + u64::from(id.number()),
            params: init_model(10, u64::from(id.number())).flat(),
        })
        .collect();
    c.bench_function("fedavg 8 clients", |b| {
        b.iter(|| fedavg(black_box(&updates), Weighting::SampleWeighted).unwrap())
    });
}

criterion_group!(benches, trajectories, laps, training, aggregation);
criterion_main!(benches);
