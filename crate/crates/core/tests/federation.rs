//! Aggregation, transport and orchestration of federated rounds.

use std::collections::BTreeSet;
use std::thread;

use fedff_core::experiments::build_world;
use fedff_core::federation::{
    fedavg, run_federation, send_update, FederationConfig, ModelUpdate, UpdateListener, Weighting, World,
};
use fedff_core::neuralff::init_model;
use fedff_core::seed::{derive, stream};
use fedff_core::trajgen::{default_specs, ClientId, Split};
use proptest::prelude::*;

fn id(n: u8) -> ClientId {
    ClientId::new(n).unwrap()
}

fn world() -> World {
    build_world(&default_specs()).unwrap()
}

/// Plain weighted mean, accumulated left to right.
fn naive_mean(updates: &[ModelUpdate], weighting: Weighting) -> Vec<f64> {
    let weights: Vec<f64> = match weighting {
        Weighting::SampleWeighted => updates.iter().map(|u| u.sample_count as f64).collect(),
        Weighting::Uniform => vec![1.0; updates.len()],
    };
    let total: f64 = weights.iter().sum();
    (0..updates[0].params.len())
        .map(|j| updates.iter().zip(&weights).map(|(u, w)| w * u.params[j]).sum::<f64>() / total)
        .collect()
}

fn updates_strategy() -> impl Strategy<Value = Vec<ModelUpdate>> {
    (1usize..6, 1usize..9).prop_flat_map(|(dim, n)| {
        prop::collection::vec((1u64..5000, prop::collection::vec(-3.0f64..3.0, dim)), n).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (count, params))| ModelUpdate {
                    client_id: id(i as u8 % 12 + 1),
                    round: 0,
                    sample_count: count,
                    params,
                })
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn aggregate_does_not_depend_on_arrival_order(
        updates in updates_strategy(),
        shuffle_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = updates.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        for w in [Weighting::SampleWeighted, Weighting::Uniform] {
            let a = fedavg(&updates, w).unwrap();
            let b = fedavg(&shuffled, w).unwrap();
            prop_assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn aggregate_matches_the_weighted_mean_and_stays_in_the_hull(updates in updates_strategy()) {
        for w in [Weighting::SampleWeighted, Weighting::Uniform] {
            let got = fedavg(&updates, w).unwrap();
            let want = naive_mean(&updates, w);
            for (j, (g, e)) in got.iter().zip(&want).enumerate() {
                prop_assert!((g - e).abs() <= 1e-12 * (1.0 + e.abs()), "coordinate {}: {} vs {}", j, g, e);
                let lo = updates.iter().map(|u| u.params[j]).fold(f64::INFINITY, f64::min);
                let hi = updates.iter().map(|u| u.params[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*g >= lo && *g <= hi);
            }
        }
    }

    #[test]
    fn equal_sample_counts_make_the_weightings_agree(updates in updates_strategy(), count in 1u64..1000) {
        let same: Vec<ModelUpdate> = updates.into_iter().map(|u| ModelUpdate { sample_count: count, ..u }).collect();
        let a = fedavg(&same, Weighting::SampleWeighted).unwrap();
        let b = fedavg(&same, Weighting::Uniform).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-15 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn loopback_transport_gives_the_in_process_aggregate() {
    let model = init_model(10, 7);
    let updates: Vec<ModelUpdate> = (1..=5u8)
        .map(|n| {
            let mut params = model.flat();
            for (i, p) in params.iter_mut().enumerate() {
                *p += f64::from(n) * 1e-3 * (i as f64).sin();
            }
            ModelUpdate { client_id: id(n), round: 2, sample_count: 100 * u64::from(n) + 3, params }
        })
        .collect();

    let listener = UpdateListener::bind_loopback().unwrap();
    let addr = listener.local_addr().unwrap();
    let senders: Vec<_> = updates
        .iter()
        .cloned()
        .map(|u| thread::spawn(move || send_update(addr, &u).unwrap()))
        .collect();
    let received = listener.collect(updates.len()).unwrap();
    for s in senders {
        s.join().unwrap();
    }

    let over_wire = fedavg(&received, Weighting::SampleWeighted).unwrap();
    let in_process = fedavg(&updates, Weighting::SampleWeighted).unwrap();
    assert_eq!(
        over_wire.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        in_process.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

fn small_split() -> (BTreeSet<ClientId>, BTreeSet<ClientId>) {
    let train = [5, 11, 3].map(id).into_iter().collect();
    let test = [1].map(id).into_iter().collect();
    (train, test)
}

#[test]
fn zero_local_epochs_leave_the_initial_parameters_untouched() {
    let w = world();
    let (train, test) = small_split();
    let cfg = FederationConfig { rounds: 2, local_epochs: 0, seed: 11, ..Default::default() };
    let out = run_federation(&cfg, &train, &test, &w).unwrap();
    let init = init_model(cfg.hidden_neurons, derive(cfg.seed, &[stream::INIT]));
    for (a, b) in out.model.layers.iter().zip(&init.layers) {
        assert_eq!(a.weight, b.weight);
        assert_eq!(a.bias, b.bias);
    }
    assert_eq!(out.reports.len(), 2);
}

#[test]
fn zero_rounds_return_the_initial_model_without_reports() {
    let w = world();
    let (train, test) = small_split();
    let cfg = FederationConfig { rounds: 0, seed: 3, ..Default::default() };
    let out = run_federation(&cfg, &train, &test, &w).unwrap();
    assert!(out.reports.is_empty());
    assert_eq!(out.model, init_model(cfg.hidden_neurons, derive(cfg.seed, &[stream::INIT])));
}

#[test]
fn runs_are_reproducible_across_worker_counts() {
    let w = world();
    let (train, test) = small_split();
    let run = |workers| {
        let cfg = FederationConfig { rounds: 2, local_epochs: 1, seed: 5, workers, ..Default::default() };
        run_federation(&cfg, &train, &test, &w).unwrap()
    };
    let (a, b, c) = (run(1), run(1), run(3));
    let bits = |m: &fedff_core::MlpModel| m.flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.model), bits(&b.model));
    assert_eq!(bits(&a.model), bits(&c.model));
    assert_eq!(a.reports, c.reports);

    let other = run_federation(
        &FederationConfig { rounds: 2, local_epochs: 1, seed: 6, workers: 1, ..Default::default() },
        &train,
        &test,
        &w,
    )
    .unwrap();
    assert_ne!(bits(&a.model), bits(&other.model));
}

#[test]
fn clients_contribute_one_row_per_reference_sample() {
    let w = world();
    let train: BTreeSet<ClientId> = [9, 11].map(id).into_iter().collect();
    let test: BTreeSet<ClientId> = [1].map(id).into_iter().collect();
    let cfg = FederationConfig { rounds: 1, local_epochs: 0, ..Default::default() };
    let out = run_federation(&cfg, &train, &test, &w).unwrap();
    for c in &out.reports[0].clients {
        let traj = w.trajectory(c.client).unwrap();
        assert_eq!(c.sample_count, traj.len() as u64, "{}", c.client);
        // both lap endpoints are sampled
        assert_eq!(c.sample_count, (traj.duration / traj.dt).round() as u64 + 1, "{}", c.client);
    }
    let count = |n| out.reports[0].clients.iter().find(|c| c.client == id(n)).unwrap().sample_count;
    assert!(count(9) > 5 * count(11), "IX {} vs XI {}", count(9), count(11));
}

#[test]
fn accumulating_data_grows_the_client_datasets() {
    let w = world();
    let (train, test) = small_split();
    let cfg = FederationConfig { rounds: 3, local_epochs: 1, accumulate_data: true, seed: 2, ..Default::default() };
    let out = run_federation(&cfg, &train, &test, &w).unwrap();
    let counts: Vec<u64> = out.reports.iter().map(|r| r.clients[0].sample_count).collect();
    assert!(counts[1] > counts[0] && counts[2] > counts[1], "{counts:?}");
}

#[test]
fn overlapping_split_is_rejected() {
    let w = world();
    let split = Split::proof_of_concept();
    let cfg = FederationConfig::default();
    assert!(run_federation(&cfg, &split.test, &split.test, &w).is_err());
    let bad = FederationConfig { client_fraction: 0.0, ..Default::default() };
    assert!(run_federation(&bad, &split.train, &split.test, &w).is_err());
}
