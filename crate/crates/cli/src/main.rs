use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polynormer::bench::{bench_csv, run_bench, BenchConfig, PeakAlloc};
use polynormer::diffmath::Matrix;
use polynormer::error::Error;
use polynormer::graphstore::{
    edge_homophily, gen_csl, gen_er, gen_sbm, parse_dataset, write_dataset, Dataset, Graph, SbmParams, Split,
};
use polynormer::model::{
    attention_heatmap, init_model, load_checkpoint, parse_key_values, sample_nodes, save_checkpoint, GraphInput,
    ModelConfig, Stage,
};
use polynormer::training::{evaluate, log_to_csv, train, Metric, TrainConfig};
use polynormer::verify::{run_suite, Suite};

#[global_allocator]
static ALLOC: PeakAlloc = PeakAlloc::new();

#[derive(Parser)]
#[command(name = "polynormer", version, about = "Gated polynomial graph transformer on CPU")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as a PGRF file.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Train a model from a key=value config; writes a checkpoint and a CSV log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_checkpoint: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "valid", "test"])]
        split: String,
        #[arg(long, default_value = "accuracy")]
        metric: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a property suite; exits 1 if any check fails.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export last-global-layer attention among sampled nodes as CSV.
    Attention {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time full-batch epochs on Erdős–Rényi graphs of growing size.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 5.0)]
        p_degree: f64,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Erdős–Rényi G(n, p), unlabeled with constant features.
    Er {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stochastic block model with noisy one-hot features and a 60/20/20 split.
    Sbm {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Circular skip-link graph, unlabeled with constant features.
    Csl {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        skip: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Verification,
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(Error::Io(e))
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Error(Error::InvalidParam(msg.into()))
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { kind } => cmd_gen(kind),
        Command::Train {
            data,
            config,
            out_checkpoint,
            log,
            seed,
        } => cmd_train(&data, &config, &out_checkpoint, &log, seed),
        Command::Eval {
            data,
            checkpoint,
            split,
            metric,
            seed: _,
        } => cmd_eval(&data, &checkpoint, &split, &metric),
        Command::Verify { suite, seed } => cmd_verify(&suite, seed),
        Command::Attention {
            data,
            checkpoint,
            nodes,
            seed,
            out,
        } => cmd_attention(&data, &checkpoint, nodes, seed, &out),
        Command::Bench {
            n_list,
            p_degree,
            dim,
            epochs,
            seed,
            out,
        } => {
            let cfg = BenchConfig {
                n_list,
                avg_degree: p_degree,
                dim,
                epochs,
                seed,
                ..BenchConfig::default()
            };
            cmd_bench(&cfg, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFinite(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

/// Constant features, no labels, no split marks.
fn unlabeled(graph: Graph) -> Result<Dataset, Error> {
    let n = graph.n();
    Dataset::new(graph, Matrix::filled(n, 1, 1.0), vec![-1; n], vec![Split::None; n], 2)
}

fn cmd_gen(kind: GenKind) -> CmdResult {
    let (data, out) = match kind {
        GenKind::Er { n, p, seed, out } => (unlabeled(gen_er(n, p, seed)?)?, out),
        GenKind::Csl { n, skip, seed: _, out } => (unlabeled(gen_csl(n, skip)?)?, out),
        GenKind::Sbm {
            n,
            classes,
            p_in,
            p_out,
            dim,
            noise,
            seed,
            out,
        } => {
            let params = SbmParams {
                n,
                classes,
                p_in,
                p_out,
                dim,
                noise,
                seed,
            };
            (gen_sbm(&params)?, out)
        }
    };
    write_dataset(&data, &out)?;
    println!("n={}", data.n());
    println!("m={}", data.graph.num_edges());
    if data.labels.iter().any(|&y| y >= 0) {
        println!("homophily={}", edge_homophily(&data)?);
    }
    Ok(())
}

/// Splits a flat config into model and training keys. `dropout` feeds both;
/// `input_dim` and `num_classes` default to the dataset's.
fn split_config(text: &str, data: &Dataset, seed: Option<u64>) -> Result<(ModelConfig, TrainConfig), Error> {
    let map = parse_key_values(text)?;
    let is_model = |k: &str| ModelConfig::REQUIRED_KEYS.contains(&k) || ModelConfig::OPTIONAL_KEYS.contains(&k);
    let is_train = |k: &str| TrainConfig::KEYS.contains(&k);
    if let Some(k) = map.keys().find(|k| !is_model(k) && !is_train(k)) {
        return Err(Error::InvalidParam(format!("unknown config key `{k}`")));
    }
    let mut model_map: BTreeMap<String, String> = map.iter().filter(|(k, _)| is_model(k)).map(|(k, v)| (k.clone(), v.clone())).collect();
    let train_map: BTreeMap<String, String> = map.iter().filter(|(k, _)| is_train(k)).map(|(k, v)| (k.clone(), v.clone())).collect();
    model_map.entry("input_dim".into()).or_insert_with(|| data.feature_dim().to_string());
    model_map.entry("num_classes".into()).or_insert_with(|| data.num_classes.to_string());
    let model = ModelConfig::from_map(&model_map)?;
    check_compatible(&model, data)?;
    let mut train = TrainConfig::from_map(&train_map)?;
    if let Some(s) = seed {
        train.seed = s;
    }
    Ok((model, train))
}

fn check_compatible(config: &ModelConfig, data: &Dataset) -> Result<(), Error> {
    if config.input_dim != data.feature_dim() {
        return Err(Error::InvalidParam(format!(
            "model expects {} input features, dataset has {}",
            config.input_dim,
            data.feature_dim()
        )));
    }
    if config.num_classes != data.num_classes {
        return Err(Error::InvalidParam(format!(
            "model predicts {} classes, dataset has {}",
            config.num_classes, data.num_classes
        )));
    }
    Ok(())
}

fn cmd_train(data: &Path, config: &Path, checkpoint: &Path, log: &Path, seed: Option<u64>) -> CmdResult {
    let dataset = parse_dataset(data)?;
    let text = std::fs::read_to_string(config)?;
    let (model_cfg, train_cfg) = split_config(&text, &dataset, seed)?;
    let model = init_model(&model_cfg, train_cfg.seed)?;
    let outcome = train(&model, &dataset, &train_cfg)?;
    save_checkpoint(&outcome.model, checkpoint)?;
    std::fs::write(log, log_to_csv(&outcome.log))?;
    let best = &outcome.log[outcome.best];
    let metric = train_cfg.metric.as_str();
    println!("best_epoch={}", best.epoch);
    println!("val_{metric}={}", best.val_metric);
    println!("test_{metric}={}", best.test_metric);
    Ok(())
}

fn cmd_eval(data: &Path, checkpoint: &Path, split: &str, metric: &str) -> CmdResult {
    let metric: Metric = metric.parse()?;
    let split = match split {
        "train" => Split::Train,
        "valid" => Split::Valid,
        _ => Split::Test,
    };
    let dataset = parse_dataset(data)?;
    let model = load_checkpoint(checkpoint)?;
    check_compatible(&model.config, &dataset)?;
    let mask = dataset.mask(split);
    if mask.is_empty() {
        return Err(usage(format!("split `{}` has no nodes", split.code())));
    }
    let input = GraphInput::new(&dataset.graph, &model.config)?;
    let m = evaluate(&model, &input, &dataset, &mask, metric, Stage::Full)?;
    println!("{}={}", metric.as_str(), m.value(metric)?);
    println!("loss={}", m.loss);
    Ok(())
}

fn cmd_verify(suite: &str, seed: u64) -> CmdResult {
    let suite: Suite = suite.parse()?;
    let checks = run_suite(suite, seed)?;
    for c in &checks {
        println!("{c}");
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", checks.len());
    if passed == checks.len() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn cmd_attention(data: &Path, checkpoint: &Path, k: usize, seed: u64, out: &Path) -> CmdResult {
    let dataset = parse_dataset(data)?;
    let model = load_checkpoint(checkpoint)?;
    check_compatible(&model.config, &dataset)?;
    if model.config.global_layers == 0 {
        return Err(usage("attention export needs at least one global layer (global_layers = 0)"));
    }
    let nodes = sample_nodes(dataset.n(), k, seed)?;
    let input = GraphInput::new(&dataset.graph, &model.config)?;
    let map = attention_heatmap(&model, &input, &dataset.features, &nodes)?;
    let mut csv = String::from("node");
    for id in &map.nodes {
        write!(csv, ",{id}").unwrap();
    }
    csv.push('\n');
    for (a, id) in map.nodes.iter().enumerate() {
        write!(csv, "{id}").unwrap();
        for v in map.scores.row(a) {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    std::fs::write(out, csv)?;
    println!("nodes={}", map.nodes.len());
    Ok(())
}

fn cmd_bench(cfg: &BenchConfig, out: &Path) -> CmdResult {
    let rows = run_bench(cfg, Some(&ALLOC))?;
    let csv = bench_csv(&rows);
    std::fs::write(out, &csv)?;
    print!("{csv}");
    Ok(())
}
