//! Full model: input projection, summed local layers, global layers and
//! prediction head, plus the v2 carrier, the parallel ablation scheme, the
//! random-walk WL probe and binary checkpoints.

mod checkpoint;
mod config;
mod heatmap;
mod wl;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use config::{format_key_values, parse_key_values, Activation, LocalKind, ModelConfig, Scheme, Stage, Variant};
pub use heatmap::{attention_heatmap, sample_nodes, Heatmap};
pub use wl::{wl_probe, WlOutcome, WL_TOLERANCE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    global_layer, hybrid_layer, local_layer, GlobalLayerParams, HybridLayerParams, LocalLayerParams, LocalStructure,
};
use crate::diffmath::{DiffValue, Matrix, Tape};
use crate::error::{invalid, Result};
use crate::graphstore::{fiedler_vector, Graph};

/// Every trainable tensor of the model. `T` is `Matrix` for storage,
/// `DiffValue` once bound to a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub input_w: T,
    pub input_b: T,
    pub local: Vec<LocalLayerParams<T>>,
    pub global: Vec<GlobalLayerParams<T>>,
    pub hybrid: Vec<HybridLayerParams<T>>,
    pub head_w: T,
    pub head_b: T,
}

impl<T> ModelParams<T> {
    /// `(name, tensor)` in a fixed order, e.g. `local.1.w_v`.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = vec![("input.w".to_string(), &self.input_w), ("input.b".to_string(), &self.input_b)];
        for (i, p) in self.local.iter().enumerate() {
            out.extend(p.named().into_iter().map(|(n, t)| (format!("local.{i}.{n}"), t)));
        }
        for (i, p) in self.global.iter().enumerate() {
            out.extend(p.named().into_iter().map(|(n, t)| (format!("global.{i}.{n}"), t)));
        }
        for (i, p) in self.hybrid.iter().enumerate() {
            out.extend(p.named().into_iter().map(|(n, t)| (format!("hybrid.{i}.{n}"), t)));
        }
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    /// Same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![&mut self.input_w, &mut self.input_b];
        for p in &mut self.local {
            out.extend(p.named_mut().into_iter().map(|(_, t)| t));
        }
        for p in &mut self.global {
            out.extend(p.named_mut().into_iter().map(|(_, t)| t));
        }
        for p in &mut self.hybrid {
            out.extend(p.named_mut().into_iter().map(|(_, t)| t));
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParams<U> {
        ModelParams {
            input_w: f(&self.input_w),
            input_b: f(&self.input_b),
            local: self.local.iter().map(|p| p.map(&mut f)).collect(),
            global: self.global.iter().map(|p| p.map(&mut f)).collect(),
            hybrid: self.hybrid.iter().map(|p| p.map(&mut f)).collect(),
            head_w: f(&self.head_w),
            head_b: f(&self.head_b),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolynormerModel {
    pub config: ModelConfig,
    pub params: ModelParams<Matrix>,
}

/// Glorot-uniform weights, zero biases, `β = 0`, LayerNorm gain 1 and shift 0.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<PolynormerModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.hidden_dim;
    let gat = config.local_kind == LocalKind::Gat;
    let input_w = Matrix::glorot(config.input_dim, d, &mut rng);
    let input_b = Matrix::zeros(1, d);
    let (local, global, hybrid) = match config.scheme {
        Scheme::LocalToGlobal => (
            (0..config.local_layers).map(|_| LocalLayerParams::init(d, gat, &mut rng)).collect(),
            (0..config.global_layers).map(|_| GlobalLayerParams::init(d, &mut rng)).collect(),
            Vec::new(),
        ),
        Scheme::LocalAndGlobal => (
            Vec::new(),
            Vec::new(),
            (0..config.local_layers + config.global_layers)
                .map(|_| HybridLayerParams::init(d, gat, &mut rng))
                .collect(),
        ),
    };
    let head_w = Matrix::glorot(d, config.num_classes, &mut rng);
    let head_b = Matrix::zeros(1, config.num_classes);
    Ok(PolynormerModel {
        config: config.clone(),
        params: ModelParams {
            input_w,
            input_b,
            local,
            global,
            hybrid,
            head_w,
            head_b,
        },
    })
}

/// Per-graph inputs a forward pass needs: the self-looped local structure
/// and, for the v2 variant, the gate carrier (a Fiedler vector).
#[derive(Clone, Debug)]
pub struct GraphInput {
    structure: LocalStructure,
    carrier: Option<Vec<f64>>,
}

impl GraphInput {
    /// Computes the Fiedler vector when `config.variant` is v2.
    pub fn new(graph: &Graph, config: &ModelConfig) -> Result<Self> {
        let carrier = match config.variant {
            Variant::V1 => None,
            Variant::V2 => Some(fiedler_vector(graph)?.vector),
        };
        Self::with_carrier(graph, carrier)
    }

    /// Uses the given carrier instead of solving for one.
    pub fn with_carrier(graph: &Graph, carrier: Option<Vec<f64>>) -> Result<Self> {
        if let Some(c) = &carrier {
            if c.len() != graph.n() {
                return Err(invalid(format!("carrier has length {} for {} nodes", c.len(), graph.n())));
            }
        }
        Ok(Self {
            structure: LocalStructure::new(graph),
            carrier,
        })
    }

    /// Input for the subgraph induced by `nodes`, reusing this carrier's entries.
    pub fn restrict(&self, subgraph: &Graph, nodes: &[usize]) -> Result<Self> {
        let carrier = self.carrier.as_ref().map(|c| nodes.iter().map(|&i| c[i]).collect());
        Self::with_carrier(subgraph, carrier)
    }

    pub fn n(&self) -> usize {
        self.structure.n()
    }

    pub fn structure(&self) -> &LocalStructure {
        &self.structure
    }

    pub fn carrier(&self) -> Option<&[f64]> {
        self.carrier.as_deref()
    }
}

/// Inverted dropout with masks drawn from `rng`.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn apply<'t>(&mut self, x: DiffValue<'t>) -> Result<DiffValue<'t>> {
        if self.rate == 0.0 {
            return Ok(x);
        }
        let (r, c) = x.shape();
        let keep = 1.0 / (1.0 - self.rate);
        let mut mask = Matrix::zeros(r, c);
        for v in mask.data_mut() {
            *v = if self.rng.random::<f64>() < self.rate { 0.0 } else { keep };
        }
        x.hadamard(x.tape().leaf(mask))
    }
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<'t> {
    pub logits: DiffValue<'t>,
    /// Output of each local layer (local-to-global scheme only).
    pub local_outputs: Vec<DiffValue<'t>>,
    /// Sum of `local_outputs`, the input of the global stack.
    pub x_local: Option<DiffValue<'t>>,
    /// Output of each global layer, or of each parallel layer.
    pub global_outputs: Vec<DiffValue<'t>>,
}

/// Forward pass on an already-bound parameter set.
///
/// `dropout = None` is evaluation mode. In the warmup stage the global
/// stack is skipped and the head reads `X_local`; the parallel scheme has no
/// separate local module, so both stages run the full stack there.
pub fn forward<'t>(
    config: &ModelConfig,
    params: &ModelParams<DiffValue<'t>>,
    input: &GraphInput,
    features: DiffValue<'t>,
    stage: Stage,
    mut dropout: Option<Dropout<'_>>,
) -> Result<ForwardTrace<'t>> {
    let tape = features.tape();
    let (n, d_in) = features.shape();
    if d_in != config.input_dim {
        return Err(invalid(format!("features have dimension {d_in}, model expects {}", config.input_dim)));
    }
    if n != input.n() {
        return Err(invalid(format!("features have {n} rows but the graph has {} nodes", input.n())));
    }
    let mut drop = |x: DiffValue<'t>| -> Result<DiffValue<'t>> {
        match dropout.as_mut() {
            Some(d) => d.apply(x),
            None => Ok(x),
        }
    };
    let act = |x: DiffValue<'t>| match config.activation {
        Activation::None => x,
        Activation::Relu => x.relu(),
    };
    let carrier = input.carrier().map(|c| tape.leaf(Matrix::column(c)));
    let s = input.structure();
    let heads = config.heads;

    let mut x = features.matmul(params.input_w)?.add(params.input_b.broadcast_row(n)?)?;
    let mut trace = ForwardTrace {
        logits: x,
        local_outputs: Vec::new(),
        x_local: None,
        global_outputs: Vec::new(),
    };
    match config.scheme {
        Scheme::LocalToGlobal => {
            let mut x_local: Option<DiffValue<'t>> = None;
            for p in &params.local {
                x = act(local_layer(s, drop(x)?, p, heads, carrier)?);
                trace.local_outputs.push(x);
                x_local = Some(match x_local {
                    None => x,
                    Some(acc) => acc.add(x)?,
                });
            }
            x = x_local.ok_or_else(|| invalid("model has no local layers"))?;
            trace.x_local = Some(x);
            if stage == Stage::Full {
                for p in &params.global {
                    x = act(global_layer(drop(x)?, p, heads, carrier)?);
                    trace.global_outputs.push(x);
                }
            }
        }
        Scheme::LocalAndGlobal => {
            for p in &params.hybrid {
                x = act(hybrid_layer(s, drop(x)?, p, heads, carrier)?);
                trace.global_outputs.push(x);
            }
        }
    }
    trace.logits = drop(x)?.matmul(params.head_w)?.add(params.head_b.broadcast_row(n)?)?;
    Ok(trace)
}

impl PolynormerModel {
    pub fn parameter_count(&self) -> usize {
        self.params.named().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> ModelParams<DiffValue<'t>> {
        self.params.map(|m| tape.leaf(m.clone()))
    }

    /// Evaluation-mode logits (`n×c`).
    pub fn logits(&self, input: &GraphInput, features: &Matrix, stage: Stage) -> Result<Matrix> {
        let tape = Tape::new();
        let params = self.bind(&tape);
        let x = tape.leaf(features.clone());
        let trace = forward(&self.config, &params, input, x, stage, None)?;
        Ok((*trace.logits.value()).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphstore::{gen_er, random_permutation};

    fn features(n: usize, d: usize, seed: u64) -> Matrix {
        Matrix::random_uniform(n, d, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn parameter_count_matches_shapes() {
        let m = init_model(&ModelConfig::new(16, 64, 2, 1, 8, 4), 0).unwrap();
        // input 16·64+64, local 2·(2·64²+5·64), global 4·64²+3·64, head 64·4+4
        assert_eq!(m.parameter_count(), 1088 + 2 * 8512 + 16576 + 260);
        assert_eq!(m.parameter_count(), 34948);
    }

    #[test]
    fn init_is_deterministic_and_gates_start_at_half() {
        let cfg = ModelConfig::new(3, 8, 2, 2, 2, 3);
        let a = init_model(&cfg, 11).unwrap();
        assert_eq!(a, init_model(&cfg, 11).unwrap());
        assert_ne!(a, init_model(&cfg, 12).unwrap());
        for p in &a.params.local {
            assert!(p.beta.data().iter().all(|&b| crate::diffmath::sigmoid(b) == 0.5));
        }
        assert!(init_model(&ModelConfig::new(3, 8, 1, 1, 3, 2), 0).is_err());
    }

    #[test]
    fn empty_global_stack_matches_warmup() {
        let g = gen_er(15, 0.2, 1).unwrap();
        let cfg = ModelConfig::new(3, 8, 2, 0, 2, 3);
        let m = init_model(&cfg, 1).unwrap();
        let input = GraphInput::new(&g, &cfg).unwrap();
        let x = features(15, 3, 2);
        let full = m.logits(&input, &x, Stage::Full).unwrap();
        assert_eq!(full.shape(), (15, 3));
        assert_eq!(full, m.logits(&input, &x, Stage::Warmup).unwrap());
    }

    #[test]
    fn x_local_is_sum_of_local_outputs() {
        let g = gen_er(12, 0.3, 3).unwrap();
        let cfg = ModelConfig::new(2, 4, 3, 1, 2, 2);
        let m = init_model(&cfg, 4).unwrap();
        let input = GraphInput::new(&g, &cfg).unwrap();
        let tape = Tape::new();
        let p = m.bind(&tape);
        let t = forward(&cfg, &p, &input, tape.leaf(features(12, 2, 5)), Stage::Full, None).unwrap();
        let mut sum = Matrix::zeros(12, 4);
        for o in &t.local_outputs {
            sum.add_assign(&o.value());
        }
        assert!(sum.max_abs_diff(&t.x_local.unwrap().value()) < 1e-14);
    }

    #[test]
    fn gcn_kind_is_equivariant() {
        let g = gen_er(20, 0.2, 5).unwrap();
        let mut cfg = ModelConfig::new(3, 8, 2, 1, 2, 3);
        cfg.local_kind = LocalKind::Gcn;
        cfg.activation = Activation::Relu;
        let m = init_model(&cfg, 6).unwrap();
        let x = features(20, 3, 7);
        let perm = random_permutation(20, 8);
        let a = m.logits(&GraphInput::new(&g, &cfg).unwrap(), &x, Stage::Full).unwrap();
        let pg = g.permute(&perm).unwrap();
        let b = m.logits(&GraphInput::new(&pg, &cfg).unwrap(), &x.permute_rows(&perm), Stage::Full).unwrap();
        assert!(b.max_abs_diff(&a.permute_rows(&perm)) < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = gen_er(5, 0.5, 0).unwrap();
        let cfg = ModelConfig::new(3, 4, 1, 1, 1, 2);
        let m = init_model(&cfg, 0).unwrap();
        let input = GraphInput::new(&g, &cfg).unwrap();
        assert!(m.logits(&input, &features(5, 4, 0), Stage::Full).is_err());
    }
}
