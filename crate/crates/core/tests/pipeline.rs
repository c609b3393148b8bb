use polynormer::graphstore::{gen_sbm, Dataset, SbmParams, Split};
use polynormer::model::{init_model, GraphInput, ModelConfig, Stage};
use polynormer::training::{evaluate, train, AdamConfig, Metric, TrainConfig};

fn sbm(n: usize, seed: u64) -> Dataset {
    gen_sbm(&SbmParams {
        n,
        classes: 3,
        p_in: 0.08,
        p_out: 0.01,
        dim: 8,
        noise: 0.5,
        seed,
    })
    .unwrap()
}

fn cfg(warmup_epochs: usize, main_epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        warmup_epochs,
        main_epochs,
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn training_loss_trends_down() {
    let data = sbm(200, 1);
    let model = init_model(&ModelConfig::new(8, 16, 1, 1, 2, 3), 1).unwrap();
    let out = train(&model, &data, &cfg(0, 100, 0.01)).unwrap();
    let means: Vec<f64> = out
        .log
        .chunks(25)
        .map(|c| c.iter().map(|e| e.train_loss).sum::<f64>() / c.len() as f64)
        .collect();
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
}

#[test]
fn small_graph_is_memorised() {
    let data = sbm(30, 2);
    let model = init_model(&ModelConfig::new(8, 32, 1, 1, 2, 3), 2).unwrap();
    let out = train(&model, &data, &cfg(0, 300, 0.01)).unwrap();
    let input = GraphInput::new(&data.graph, &out.model.config).unwrap();
    let m = evaluate(&out.model, &input, &data, &data.mask(Split::Train), Metric::Accuracy, Stage::Full).unwrap();
    assert_eq!(m.accuracy, 1.0);
}

#[test]
fn returned_model_is_the_best_full_epoch() {
    let data = sbm(150, 4);
    let model = init_model(&ModelConfig::new(8, 16, 1, 1, 2, 3), 4).unwrap();
    let out = train(&model, &data, &cfg(10, 30, 0.01)).unwrap();
    let best = &out.log[out.best];
    assert_eq!(best.stage, Stage::Full);
    let top = out
        .log
        .iter()
        .filter(|e| e.stage == Stage::Full)
        .map(|e| e.val_metric)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best.val_metric, top);
    let first = out.log.iter().position(|e| e.stage == Stage::Full && e.val_metric == top).unwrap();
    assert_eq!(out.best, first);

    let input = GraphInput::new(&data.graph, &out.model.config).unwrap();
    let again = |split| evaluate(&out.model, &input, &data, &data.mask(split), Metric::Accuracy, Stage::Full).unwrap();
    assert_eq!(again(Split::Valid).accuracy, best.val_metric);
    assert_eq!(again(Split::Test).accuracy, best.test_metric);
    assert_eq!(again(Split::Test), again(Split::Test));
}

#[test]
fn minibatch_training_is_deterministic_and_learns() {
    let data = sbm(240, 5);
    let model = init_model(&ModelConfig::new(8, 16, 1, 1, 2, 3), 5).unwrap();
    let batched = TrainConfig {
        batch_parts: 3,
        ..cfg(0, 60, 0.01)
    };
    let a = train(&model, &data, &batched).unwrap();
    let b = train(&model, &data, &batched).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model, b.model);
    let first = a.log[0].train_loss;
    let last = a.log.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn warmup_only_selects_among_warmup_epochs() {
    let data = sbm(120, 6);
    let model = init_model(&ModelConfig::new(8, 16, 1, 1, 2, 3), 6).unwrap();
    let out = train(&model, &data, &cfg(15, 0, 0.01)).unwrap();
    assert!(out.log.iter().all(|e| e.stage == Stage::Warmup));
    let input = GraphInput::new(&data.graph, &out.model.config).unwrap();
    let m = evaluate(&out.model, &input, &data, &data.mask(Split::Valid), Metric::Accuracy, Stage::Warmup).unwrap();
    assert_eq!(m.accuracy, out.log[out.best].val_metric);
}

#[test]
fn zero_epochs_is_rejected() {
    let data = sbm(60, 7);
    let model = init_model(&ModelConfig::new(8, 8, 1, 0, 2, 3), 7).unwrap();
    assert!(train(&model, &data, &cfg(0, 0, 0.01)).is_err());
}
