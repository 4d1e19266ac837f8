use std::hint::black_box;

use bhh_core::bhh::{bhh_train, init_priors, reselect, Bhh, BhhConfig, TrainSetup};
use bhh_core::data::{iris, prepare};
use bhh_core::ffnn::presets::model_preset;
use bhh_core::ffnn::Model;
use bhh_core::harness::average_rank;
use bhh_core::HeuristicSettings;
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(name: &str) -> Model {
    let p = model_preset(name).unwrap();
    Model::new(p.spec(), p.loss()).unwrap()
}

fn gradient(c: &mut Criterion) {
    let m = model("iris");
    let (train, _) = prepare(&iris(), 0.8, 0).unwrap();
    let batch = train.to_batch().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params: Vec<f64> = (0..m.param_count())
        .map(|_| rng.random_range(-0.5..0.5))
        .collect();
    c.bench_function("iris loss_and_gradient (120 rows)", |b| {
        b.iter(|| m.loss_and_gradient(black_box(&params), &batch).unwrap())
    });
}

fn selection(c: &mut Criterion) {
    let priors = init_priors(10, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("reselect K=10 J=5", |b| {
        b.iter(|| reselect(black_box(&priors), &mut rng).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let (train, test) = prepare(&iris(), 0.8, 0).unwrap();
    let setup = TrainSetup {
        model: model("iris"),
        train: &train,
        test: &test,
        batch_size: 16,
        epochs: 1,
        seed: 0,
    };
    let bhh = Bhh::new(BhhConfig::default(), HeuristicSettings::default()).unwrap();
    c.bench_function("bhh_train iris one epoch", |b| {
        b.iter(|| bhh_train(black_box(&setup), &bhh).unwrap())
    });
}

fn ranking(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let series: Vec<Vec<Vec<f64>>> = (0..13)
        .map(|_| {
            (0..30)
                .map(|_| (0..240).map(|_| rng.random()).collect())
                .collect()
        })
        .collect();
    let labels: Vec<String> = (0..13).map(|i| format!("c{i}")).collect();
    c.bench_function("average_rank 13x30x240", |b| {
        b.iter(|| average_rank(&labels, black_box(&series)).unwrap())
    });
}

criterion_group!(benches, gradient, selection, training, ranking);
criterion_main!(benches);
