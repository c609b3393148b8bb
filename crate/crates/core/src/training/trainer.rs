use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{accuracy, adam_step, nll_loss, roc_auc, AdamConfig, AdamState};
use crate::diffmath::{Matrix, Tape};
use crate::error::{invalid, Error, Result};
use crate::graphstore::{random_partition, Dataset, Split};
use crate::model::{forward, Dropout, GraphInput, PolynormerModel, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Auc,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Auc => "auc",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "auc" => Ok(Metric::Auc),
            other => Err(invalid(format!("unknown metric `{other}`, expected accuracy or auc"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub warmup_epochs: usize,
    pub main_epochs: usize,
    pub adam: AdamConfig,
    pub dropout: f64,
    /// Random node parts per epoch; 1 trains full-batch.
    pub batch_parts: usize,
    pub seed: u64,
    pub metric: Metric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 0,
            main_epochs: 100,
            adam: AdamConfig::default(),
            dropout: 0.0,
            batch_parts: 1,
            seed: 0,
            metric: Metric::Accuracy,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 10] = [
        "warmup_epochs",
        "main_epochs",
        "learning_rate",
        "beta1",
        "beta2",
        "adam_eps",
        "dropout",
        "batch_parts",
        "seed",
        "metric",
    ];

    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(invalid(format!("learning_rate must be positive, got {}", a.lr)));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            return Err(invalid("adam needs beta1, beta2 in [0, 1) and eps > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.batch_parts == 0 {
            return Err(invalid("batch_parts must be at least 1"));
        }
        Ok(())
    }

    /// Reads the keys in [`TrainConfig::KEYS`]; absent keys keep their defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()> {
            if let Some(v) = map.get(key) {
                *slot = v.parse().map_err(|_| invalid(format!("invalid value `{v}` for `{key}`")))?;
            }
            Ok(())
        }
        if let Some(k) = map.keys().find(|k| !Self::KEYS.contains(&k.as_str())) {
            return Err(invalid(format!("unknown training key `{k}`")));
        }
        let mut cfg = Self::default();
        get(map, "warmup_epochs", &mut cfg.warmup_epochs)?;
        get(map, "main_epochs", &mut cfg.main_epochs)?;
        get(map, "learning_rate", &mut cfg.adam.lr)?;
        get(map, "beta1", &mut cfg.adam.beta1)?;
        get(map, "beta2", &mut cfg.adam.beta2)?;
        get(map, "adam_eps", &mut cfg.adam.eps)?;
        get(map, "dropout", &mut cfg.dropout)?;
        get(map, "batch_parts", &mut cfg.batch_parts)?;
        get(map, "seed", &mut cfg.seed)?;
        if let Some(v) = map.get("metric") {
            cfg.metric = v.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Loss and metrics of one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    /// Present for two-class datasets when both classes occur in the mask.
    pub auc: Option<f64>,
}

impl Metrics {
    pub fn value(&self, metric: Metric) -> Result<f64> {
        match metric {
            Metric::Accuracy => Ok(self.accuracy),
            Metric::Auc => self.auc.ok_or_else(|| invalid("auc is unavailable for this mask")),
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: Stage,
    pub train_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation metric.
    pub model: PolynormerModel,
    pub log: Vec<EpochLog>,
    /// Index into `log` of the selected epoch.
    pub best: usize,
}

fn metrics_from_logits(logits: &Matrix, data: &Dataset, mask: &[usize], metric: Metric) -> Result<Metrics> {
    if mask.is_empty() {
        return Err(invalid("evaluate: empty mask"));
    }
    if metric == Metric::Auc && data.num_classes != 2 {
        return Err(invalid(format!(
            "auc needs binary labels, dataset has {} classes",
            data.num_classes
        )));
    }
    let tape = Tape::new();
    let lp = tape.leaf(logits.clone()).log_softmax_rows();
    let loss = nll_loss(lp, &data.labels, mask)?.value()[(0, 0)];
    let acc = accuracy(logits, &data.labels, mask)?;
    let auc = if data.num_classes == 2 {
        let lpv = lp.value();
        let scores: Vec<f64> = (0..lpv.rows()).map(|i| lpv[(i, 1)] - lpv[(i, 0)]).collect();
        match roc_auc(&scores, &data.labels, mask) {
            Ok(v) => Some(v),
            Err(e) if metric == Metric::Auc => return Err(e),
            Err(_) => None,
        }
    } else {
        None
    };
    Ok(Metrics { loss, accuracy: acc, auc })
}

/// Full-graph forward without dropout, scored on `mask`.
pub fn evaluate(
    model: &PolynormerModel,
    input: &GraphInput,
    data: &Dataset,
    mask: &[usize],
    metric: Metric,
    stage: Stage,
) -> Result<Metrics> {
    let logits = model.logits(input, &data.features, stage)?;
    metrics_from_logits(&logits, data, mask, metric)
}

/// Inputs of one optimisation step.
pub struct Batch<'a> {
    pub input: &'a GraphInput,
    pub features: &'a Matrix,
    pub labels: &'a [i64],
    /// Nodes the loss is averaged over.
    pub mask: &'a [usize],
}

/// One forward/backward pass and Adam update. Returns the loss before the update.
pub fn train_step(
    model: &mut PolynormerModel,
    batch: &Batch<'_>,
    stage: Stage,
    dropout: Option<Dropout<'_>>,
    state: &mut AdamState,
    adam: &AdamConfig,
) -> Result<f64> {
    let tape = Tape::new();
    let params = model.bind(&tape);
    let x = tape.leaf(batch.features.clone());
    let trace = forward(&model.config, &params, batch.input, x, stage, dropout)?;
    let loss = nll_loss(trace.logits.log_softmax_rows(), batch.labels, batch.mask)?;
    let value = loss.value()[(0, 0)];
    let grads = tape.backward(loss)?;
    let g: Vec<Matrix> = params.named().into_iter().map(|(_, v)| grads.wrt(*v)).collect();
    adam_step(&mut model.params.tensors_mut(), &g, state, adam)?;
    Ok(value)
}

struct Trainer<'a> {
    model: PolynormerModel,
    data: &'a Dataset,
    input: GraphInput,
    cfg: &'a TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
}

impl Trainer<'_> {
    fn step(&mut self, input: &GraphInput, features: &Matrix, labels: &[i64], mask: &[usize], stage: Stage) -> Result<f64> {
        let dropout = (self.cfg.dropout > 0.0).then(|| Dropout {
            rate: self.cfg.dropout,
            rng: &mut self.rng,
        });
        let batch = Batch {
            input,
            features,
            labels,
            mask,
        };
        train_step(&mut self.model, &batch, stage, dropout, &mut self.adam, &self.cfg.adam)
    }

    fn epoch(&mut self, stage: Stage) -> Result<f64> {
        let data = self.data;
        if self.cfg.batch_parts == 1 {
            let mask = data.mask(Split::Train);
            let input = self.input.clone();
            return self.step(&input, &data.features, &data.labels, &mask, stage);
        }
        let parts = random_partition(data.n(), self.cfg.batch_parts, self.rng.random())?;
        let (mut total, mut count) = (0.0, 0usize);
        for p in 0..parts.parts {
            let nodes = parts.members(p);
            let sub = data.induced(&nodes);
            let mask = sub.mask(Split::Train);
            if mask.is_empty() {
                continue;
            }
            let input = self.input.restrict(&sub.graph, &nodes)?;
            total += self.step(&input, &sub.features, &sub.labels, &mask, stage)? * mask.len() as f64;
            count += mask.len();
        }
        Ok(total / count as f64)
    }
}

/// Warmup epochs (local module and head only), then full epochs. The model
/// with the best validation metric among full-stage epochs is returned
/// (among warmup epochs if there are no full ones).
pub fn train(model: &PolynormerModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_mask = data.mask(Split::Train);
    let val_mask = data.mask(Split::Valid);
    let test_mask = data.mask(Split::Test);
    if train_mask.is_empty() {
        return Err(invalid("train: empty train mask"));
    }
    if val_mask.is_empty() {
        return Err(invalid("train: empty validation mask"));
    }
    let input = GraphInput::new(&data.graph, &model.config)?;
    let mut t = Trainer {
        model: model.clone(),
        data,
        input,
        cfg,
        adam: AdamState::default(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let stages = std::iter::repeat_n(Stage::Warmup, cfg.warmup_epochs).chain(std::iter::repeat_n(Stage::Full, cfg.main_epochs));
    let select_stage = if cfg.main_epochs > 0 { Stage::Full } else { Stage::Warmup };
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, PolynormerModel)> = None;
    for (epoch, stage) in stages.enumerate() {
        let train_loss = t.epoch(stage)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let logits = t.model.logits(&t.input, &data.features, stage)?;
        let val_metric = metrics_from_logits(&logits, data, &val_mask, cfg.metric)?.value(cfg.metric)?;
        let test_metric = if test_mask.is_empty() {
            f64::NAN
        } else {
            metrics_from_logits(&logits, data, &test_mask, cfg.metric)?.value(cfg.metric)?
        };
        log.push(EpochLog {
            epoch,
            stage,
            train_loss,
            val_metric,
            test_metric,
        });
        if stage == select_stage && best.as_ref().is_none_or(|b| val_metric > b.1) {
            best = Some((epoch, val_metric, t.model.clone()));
        }
    }
    let (best, model) = match best {
        Some((epoch, _, m)) => (epoch, m),
        None => return Err(invalid("train: zero epochs requested")),
    };
    Ok(TrainOutcome { model, log, best })
}

/// CSV with header `epoch,stage,train_loss,val_metric,test_metric`.
pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,stage,train_loss,val_metric,test_metric\n");
    for e in log {
        writeln!(s, "{},{},{},{},{}", e.epoch, e.stage, e.train_loss, e.val_metric, e.test_metric).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphstore::{gen_sbm, SbmParams};
    use crate::model::{init_model, ModelConfig};

    fn data() -> Dataset {
        gen_sbm(&SbmParams {
            n: 60,
            classes: 2,
            p_in: 0.2,
            p_out: 0.02,
            dim: 4,
            noise: 0.3,
            seed: 3,
        })
        .unwrap()
    }

    fn cfg(warmup: usize, main: usize) -> TrainConfig {
        TrainConfig {
            warmup_epochs: warmup,
            main_epochs: main,
            adam: AdamConfig { lr: 0.01, ..AdamConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn no_warmup_means_full_entries_only() {
        let d = data();
        let m = init_model(&ModelConfig::new(4, 8, 1, 1, 2, 2), 0).unwrap();
        let out = train(&m, &d, &cfg(0, 5)).unwrap();
        assert_eq!(out.log.len(), 5);
        assert!(out.log.iter().all(|e| e.stage == Stage::Full));
        let csv = log_to_csv(&out.log);
        assert!(csv.starts_with("epoch,stage,train_loss,val_metric,test_metric\n0,full,"));
    }

    #[test]
    fn best_model_matches_log_and_is_reproducible() {
        let d = data();
        let m = init_model(&ModelConfig::new(4, 8, 1, 1, 2, 2), 1).unwrap();
        let mut c = cfg(3, 10);
        c.dropout = 0.2;
        c.batch_parts = 3;
        let a = train(&m, &d, &c).unwrap();
        let b = train(&m, &d, &c).unwrap();
        assert_eq!(log_to_csv(&a.log), log_to_csv(&b.log));
        let best_val = a.log.iter().filter(|e| e.stage == Stage::Full).map(|e| e.val_metric).fold(f64::MIN, f64::max);
        assert_eq!(a.log[a.best].val_metric, best_val);
        let input = GraphInput::new(&d.graph, &a.model.config).unwrap();
        let val = evaluate(&a.model, &input, &d, &d.mask(Split::Valid), Metric::Accuracy, Stage::Full).unwrap();
        assert_eq!(val.accuracy, best_val);
        let test = evaluate(&a.model, &input, &d, &d.mask(Split::Test), Metric::Auc, Stage::Full).unwrap();
        assert!(test.auc.is_some());
    }

    #[test]
    fn evaluate_rejects_auc_on_multiclass() {
        let mut d = data();
        d.num_classes = 3;
        let m = init_model(&ModelConfig::new(4, 8, 1, 0, 2, 3), 0).unwrap();
        let input = GraphInput::new(&d.graph, &m.config).unwrap();
        assert!(evaluate(&m, &input, &d, &[0, 1], Metric::Auc, Stage::Full).is_err());
        let a = evaluate(&m, &input, &d, &[0, 1, 2], Metric::Accuracy, Stage::Full).unwrap();
        assert_eq!(a, evaluate(&m, &input, &d, &[0, 1, 2], Metric::Accuracy, Stage::Full).unwrap());
    }

    #[test]
    fn empty_train_mask_is_rejected() {
        let mut d = data();
        for s in &mut d.splits {
            if *s == Split::Train {
                *s = Split::None;
            }
        }
        let m = init_model(&ModelConfig::new(4, 8, 1, 0, 2, 2), 0).unwrap();
        assert!(train(&m, &d, &cfg(0, 2)).is_err());
    }

    #[test]
    fn config_keys() {
        let mut map = BTreeMap::new();
        map.insert("learning_rate".to_string(), "0.01".to_string());
        map.insert("metric".to_string(), "auc".to_string());
        let c = TrainConfig::from_map(&map).unwrap();
        assert_eq!(c.adam.lr, 0.01);
        assert_eq!(c.metric, Metric::Auc);
        map.insert("bogus".to_string(), "1".to_string());
        assert!(TrainConfig::from_map(&map).is_err());
    }
}
