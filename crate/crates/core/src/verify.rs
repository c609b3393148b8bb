//! Property suites behind `polynormer verify`: gradients, permutation
//! equivariance, kernel attention exactness, symbolic expressivity, and the
//! WL probe. Each check yields one PASS/FAIL line.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    dense_kernel_attention_matrices, dense_kernel_attention_oracle, gat_attention, gated_combine, global_attention,
    global_layer, hybrid_layer, local_layer, relu_kernel_denominator, sigmoid_kernel_denominator, Gate,
    GlobalLayerParams, HybridLayerParams, LocalLayerParams, LocalStructure,
};
use crate::diffmath::{grad_check, sigmoid, DiffValue, Matrix, Tape, LEAKY_RELU_SLOPE};
use crate::error::{invalid, Error, Result};
use crate::graphstore::{gen_csl, gen_er, random_permutation, Graph};
use crate::model::{
    init_model, wl_probe, Activation, GraphInput, LocalKind, ModelConfig, Scheme, Stage, Variant,
};
use crate::polyoracle::{
    base_expand, base_numeric, closed_form_expand, degree_spectrum, gt_layer_expand, select_monomial_params,
    square_times_witness, BaseModelWeights, MPoly,
};
use crate::training::nll_loss;

/// Central-difference step.
pub const GRAD_STEP: f64 = 1e-5;
/// Largest accepted relative gradient error.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Largest accepted `‖f(P·D) − P·f(D)‖∞`.
pub const EQUIVARIANCE_TOLERANCE: f64 = 1e-8;
/// Largest accepted deviation between linear and dense kernel attention.
pub const KERNEL_TOLERANCE: f64 = 1e-10;
/// Largest accepted deviation of a dense attention row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Coefficient tolerance of the symbolic checks.
pub const POLY_TOLERANCE: f64 = 1e-9;
/// Relative tolerance between symbolic evaluation and the numeric recurrence.
pub const NUMERIC_TOLERANCE: f64 = 1e-8;
/// Smallest sorted-output gap counted as distinguishing in the WL check.
pub const WL_SEPARATION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Grad,
    Equivariance,
    Kernel,
    Poly,
    Wl,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [Suite::Grad, Suite::Equivariance, Suite::Kernel, Suite::Poly, Suite::Wl];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Grad => "grad",
            Suite::Equivariance => "equivariance",
            Suite::Kernel => "kernel",
            Suite::Poly => "poly",
            Suite::Wl => "wl",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown suite `{s}`, expected grad, equivariance, kernel, poly, wl or all")))
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    /// The measured quantity the verdict rests on.
    pub value: f64,
    pub detail: String,
}

impl Check {
    fn at_most(suite: Suite, name: &str, value: f64, bound: f64, what: &str) -> Self {
        Self {
            suite,
            name: name.to_string(),
            passed: value <= bound,
            value,
            detail: format!("{what}={value:.3e} (<= {bound:e})"),
        }
    }

    fn flag(suite: Suite, name: &str, passed: bool, value: f64, detail: String) -> Self {
        Self {
            suite,
            name: name.to_string(),
            passed,
            value,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}.{} {}", self.suite, self.name, self.detail)
    }
}

/// Runs one suite, or all of them in order.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    match suite {
        Suite::Grad => grad_suite(seed),
        Suite::Equivariance => equivariance_suite(seed),
        Suite::Kernel => kernel_suite(seed),
        Suite::Poly => poly_suite(seed),
        Suite::Wl => wl_suite(),
        Suite::All => {
            let mut out = Vec::new();
            for s in Suite::EACH {
                out.extend(run_suite(s, seed)?);
            }
            Ok(out)
        }
    }
}

/// Inputs bounded away from zero so kinks of relu and leaky-relu stay out
/// of the difference stencil.
fn signed_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// `Σ out ⊙ r` for a fixed random `r`, so every output entry carries a
/// distinct cotangent.
fn probe<'t>(out: DiffValue<'t>, seed: u64) -> Result<DiffValue<'t>> {
    let (rows, cols) = out.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = out.tape().leaf(Matrix::random_uniform(rows, cols, -1.0, 1.0, &mut rng));
    Ok(out.hadamard(r)?.sum())
}

type Kernel = Box<dyn for<'t> Fn(&'t Tape, &[DiffValue<'t>]) -> Result<DiffValue<'t>>>;

fn small_graph() -> Graph {
    Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 4), (2, 5)]).expect("valid edges")
}

fn grad_cases(seed: u64) -> Vec<(&'static str, Kernel, Vec<Matrix>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = |r, c| signed_uniform(r, c, &mut rng);
    let graph = small_graph();
    let structure = Rc::new(LocalStructure::new(&graph));
    let adj = Rc::new(graph.adjacency_csr());
    let pattern = Rc::new(structure.pattern().clone());
    let offsets: Rc<[usize]> = Rc::from(pattern.offsets());
    let gather: Rc<[usize]> = Rc::from(vec![3, 0, 0, 5, 2]);
    let picks: Rc<[(usize, usize)]> = Rc::from(vec![(0, 1), (2, 0), (4, 2), (5, 1)]);
    let nnz = pattern.nnz();
    let s = seed;

    let positive = m(4, 3).map(|v| v.abs() + 0.5);
    let mut cases: Vec<(&'static str, Kernel, Vec<Matrix>)> = vec![
        ("matmul", Box::new(move |_, p| probe(p[0].matmul(p[1])?, s)), vec![m(4, 3), m(3, 5)]),
        ("transpose", Box::new(move |_, p| probe(p[0].transpose(), s)), vec![m(4, 3)]),
        (
            "add_sub",
            Box::new(move |_, p| probe(p[0].add(p[1])?.sub(p[0].scale(0.3))?.add_scalar(1.5), s)),
            vec![m(4, 3), m(4, 3)],
        ),
        ("hadamard", Box::new(move |_, p| probe(p[0].hadamard(p[1])?, s)), vec![m(4, 3), m(4, 3)]),
        ("divide", Box::new(move |_, p| probe(p[0].divide(p[1])?, s)), vec![m(4, 3), positive]),
        ("sigmoid", Box::new(move |_, p| probe(p[0].sigmoid().one_minus(), s)), vec![m(4, 3)]),
        ("relu", Box::new(move |_, p| probe(p[0].relu(), s)), vec![m(4, 3)]),
        (
            "leaky_relu",
            Box::new(move |_, p| probe(p[0].leaky_relu(LEAKY_RELU_SLOPE), s)),
            vec![m(4, 3)],
        ),
        ("exp", Box::new(move |_, p| probe(p[0].exp(), s)), vec![m(4, 3)]),
        (
            "reductions",
            Box::new(move |_, p| {
                let r = p[0].row_sum().broadcast_col(3)?;
                let c = p[0].col_sum().broadcast_row(4)?;
                probe(r.hadamard(c)?.add(p[0].sum().broadcast_row(4)?.broadcast_col(3)?)?, s)
            }),
            vec![m(4, 3)],
        ),
        (
            "concat_slice",
            Box::new(move |_, p| {
                let c = DiffValue::concat_cols(&[p[0], p[1]])?;
                probe(c.slice_cols(1, 4)?, s)
            }),
            vec![m(4, 2), m(4, 3)],
        ),
        (
            "gather_rows",
            Box::new(move |_, p| probe(p[0].gather_rows(Rc::clone(&gather))?, s)),
            vec![m(6, 3)],
        ),
        ("spmm", Box::new(move |t, p| probe(t.spmm(&adj, p[0])?, s)), vec![m(6, 3)]),
    ];
    let pat = Rc::clone(&pattern);
    cases.push((
        "spmm_weighted",
        Box::new(move |t, p| probe(t.spmm_weighted(&pat, p[0], p[1])?, s)),
        vec![m(nnz, 1), m(6, 3)],
    ));
    cases.push((
        "segment_softmax",
        Box::new(move |_, p| probe(p[0].segment_softmax(Rc::clone(&offsets))?, s)),
        vec![m(nnz, 1)],
    ));
    cases.push((
        "layer_norm_rows",
        Box::new(move |_, p| probe(p[0].layer_norm_rows(p[1], p[2], crate::attention::LAYER_NORM_EPS)?, s)),
        vec![m(5, 4), m(1, 4), m(1, 4)],
    ));
    cases.push((
        "log_softmax_pick",
        Box::new(move |_, p| Ok(p[0].log_softmax_rows().pick_entries(Rc::clone(&picks))?.sum())),
        vec![m(6, 3)],
    ));
    let labels = vec![1, 0, 2, -1, 2, 1];
    cases.push((
        "nll_loss",
        Box::new(move |_, p| nll_loss(p[0].log_softmax_rows(), &labels, &[0, 1, 2, 4, 5])),
        vec![m(6, 3)],
    ));

    let (d, heads) = (4, 2);
    let carrier = m(6, 1);
    let st = Rc::clone(&structure);
    let gat = LocalLayerParams::init(d, true, &mut rng);
    let mut tensors: Vec<Matrix> = vec![signed_uniform(6, d, &mut rng), carrier.clone()];
    tensors.extend(gat.named().into_iter().map(|(_, t)| perturb(t, &mut rng)));
    cases.push((
        "gat_attention",
        Box::new({
            let st = Rc::clone(&st);
            move |_, p| probe(gat_attention(&st, p[0], &local_from(&p[2..], true), heads, 1)?, s)
        }),
        tensors.clone(),
    ));
    cases.push((
        "local_layer_gat",
        Box::new({
            let st = Rc::clone(&st);
            move |_, p| probe(local_layer(&st, p[0], &local_from(&p[2..], true), heads, Some(p[1]))?, s)
        }),
        tensors,
    ));

    let gcn = LocalLayerParams::init(d, false, &mut rng);
    let mut tensors: Vec<Matrix> = vec![signed_uniform(6, d, &mut rng)];
    tensors.extend(gcn.named().into_iter().map(|(_, t)| perturb(t, &mut rng)));
    cases.push((
        "local_layer_gcn",
        Box::new({
            let st = Rc::clone(&st);
            move |_, p| probe(local_layer(&st, p[0], &local_from(&p[1..], false), heads, None)?, s)
        }),
        tensors,
    ));

    let global = GlobalLayerParams::init(d, &mut rng);
    let mut tensors: Vec<Matrix> = vec![signed_uniform(6, d, &mut rng), carrier.clone()];
    tensors.extend(global.named().into_iter().map(|(_, t)| perturb(t, &mut rng)));
    cases.push((
        "global_layer",
        Box::new(move |_, p| probe(global_layer(p[0], &global_from(&p[2..]), heads, Some(p[1]))?, s)),
        tensors,
    ));

    let hybrid = HybridLayerParams::init(d, true, &mut rng);
    let mut tensors: Vec<Matrix> = vec![signed_uniform(6, d, &mut rng)];
    tensors.extend(hybrid.named().into_iter().map(|(_, t)| perturb(t, &mut rng)));
    cases.push((
        "hybrid_layer",
        Box::new(move |_, p| probe(hybrid_layer(&st, p[0], &hybrid_from(&p[1..]), heads, None)?, s)),
        tensors,
    ));
    cases
}

/// Initial values plus noise, so zero-initialised gates and shifts are
/// checked away from their starting point.
fn perturb(m: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let noise = Matrix::random_uniform(m.rows(), m.cols(), -0.5, 0.5, rng);
    m.zip_map(&noise, |a, b| a + b)
}

fn local_from<'t>(p: &[DiffValue<'t>], gat: bool) -> LocalLayerParams<DiffValue<'t>> {
    if gat {
        LocalLayerParams {
            w_v: p[0],
            w_h: p[1],
            beta: p[2],
            attention: Some(crate::attention::AttentionVectors { src: p[3], dst: p[4] }),
            ln_gain: p[5],
            ln_shift: p[6],
        }
    } else {
        LocalLayerParams {
            w_v: p[0],
            w_h: p[1],
            beta: p[2],
            attention: None,
            ln_gain: p[3],
            ln_shift: p[4],
        }
    }
}

fn global_from<'t>(p: &[DiffValue<'t>]) -> GlobalLayerParams<DiffValue<'t>> {
    GlobalLayerParams {
        w_q: p[0],
        w_k: p[1],
        w_v: p[2],
        w_h: p[3],
        beta: p[4],
        ln_gain: p[5],
        ln_shift: p[6],
    }
}

fn hybrid_from<'t>(p: &[DiffValue<'t>]) -> HybridLayerParams<DiffValue<'t>> {
    HybridLayerParams {
        w_q: p[0],
        w_k: p[1],
        w_v: p[2],
        w_h: p[3],
        beta: p[4],
        attention: Some(crate::attention::AttentionVectors { src: p[5], dst: p[6] }),
        ln_gain: p[7],
        ln_shift: p[8],
    }
}

/// Central differences against reverse mode for every kernel and layer.
pub fn grad_suite(seed: u64) -> Result<Vec<Check>> {
    grad_cases(seed)
        .into_iter()
        .map(|(name, f, tensors)| {
            let named: Vec<(&str, Matrix)> = tensors.into_iter().map(|t| (name, t)).collect();
            let err = grad_check(|t, p| f(t, p), &named, GRAD_STEP)?;
            Ok(Check::at_most(Suite::Grad, name, err, GRAD_TOLERANCE, "max_rel_err"))
        })
        .collect()
}

fn random_config(rng: &mut ChaCha8Rng, input_dim: usize) -> ModelConfig {
    let heads = *[1usize, 2, 4].choose(rng).expect("nonempty");
    let mut c = ModelConfig::new(
        input_dim,
        heads * rng.random_range(1..=4),
        rng.random_range(1..=2),
        rng.random_range(0..=2),
        heads,
        rng.random_range(2..=5),
    );
    c.activation = if rng.random() { Activation::Relu } else { Activation::None };
    c.variant = if rng.random() { Variant::V2 } else { Variant::V1 };
    c.local_kind = if rng.random() { LocalKind::Gat } else { LocalKind::Gcn };
    c.scheme = if rng.random_range(0..4) == 0 {
        Scheme::LocalAndGlobal
    } else {
        Scheme::LocalToGlobal
    };
    c
}

/// Largest `‖f(P·D) − P·f(D)‖∞` over `trials` random graphs, configs and
/// permutations. The v2 carrier is computed once and permuted with the graph,
/// since an eigenvector is only defined up to sign and basis choice.
pub fn equivariance_deviation(seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.random_range(2..=64);
        let input_dim = rng.random_range(1..=6);
        let config = random_config(&mut rng, input_dim);
        let graph = gen_er(n, rng.random_range(0.05..0.3), rng.random())?;
        let features = Matrix::random_uniform(n, input_dim, -1.0, 1.0, &mut rng);
        let model = init_model(&config, rng.random())?;
        let input = GraphInput::new(&graph, &config)?;
        let perm = random_permutation(n, rng.random());
        let permuted_carrier = input.carrier().map(|c| {
            let mut out = vec![0.0; n];
            for (i, &v) in c.iter().enumerate() {
                out[perm[i]] = v;
            }
            out
        });
        let permuted = GraphInput::with_carrier(&graph.permute(&perm)?, permuted_carrier)?;
        let stage = if rng.random() { Stage::Full } else { Stage::Warmup };
        let base = model.logits(&input, &features, stage)?;
        let moved = model.logits(&permuted, &features.permute_rows(&perm), stage)?;
        worst = worst.max(moved.max_abs_diff(&base.permute_rows(&perm)));
    }
    Ok(worst)
}

pub fn equivariance_suite(seed: u64) -> Result<Vec<Check>> {
    let dev = equivariance_deviation(seed, 20)?;
    Ok(vec![Check::at_most(
        Suite::Equivariance,
        "model_logits",
        dev,
        EQUIVARIANCE_TOLERANCE,
        "max_dev",
    )])
}

/// Deviations of the linear kernel attention from the dense oracle over
/// random instances with `n <= 200`, `d <= 32`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelDeviation {
    /// Attention outputs before gating.
    pub attention: f64,
    /// Full gated layer outputs.
    pub layer: f64,
    /// Worst `|row sum − 1|` of the dense normalised attention matrix.
    pub row_sum: f64,
}

pub fn kernel_deviation(seed: u64, instances: usize) -> Result<KernelDeviation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = KernelDeviation {
        attention: 0.0,
        layer: 0.0,
        row_sum: 0.0,
    };
    for _ in 0..instances {
        let n = rng.random_range(1..=200);
        let heads = *[1usize, 2, 4, 8].choose(&mut rng).expect("nonempty");
        let d = heads * rng.random_range(1..=32 / heads);
        let x = Matrix::random_uniform(n, d, -2.0, 2.0, &mut rng);
        let params = GlobalLayerParams::init(d, &mut rng).map(|m| perturb(m, &mut rng));
        let tape = Tape::new();
        let p = params.map(|m| tape.leaf(m.clone()));
        let xv = tape.leaf(x.clone());
        let fast = global_attention(xv, &p, heads)?;
        let dense = dense_kernel_attention_oracle(xv, &p, heads)?;
        out.attention = out.attention.max(fast.value().max_abs_diff(&dense.value()));

        let gate = Gate {
            beta: p.beta,
            ln_gain: p.ln_gain,
            ln_shift: p.ln_shift,
        };
        let h = xv.matmul(p.w_h)?;
        let dense_layer = gated_combine(h, dense, gate, None)?;
        let fast_layer = global_layer(xv, &p, heads, None)?;
        out.layer = out.layer.max(fast_layer.value().max_abs_diff(&dense_layer.value()));

        for a in dense_kernel_attention_matrices(&x, &params, heads)? {
            for i in 0..n {
                out.row_sum = out.row_sum.max((a.row(i).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    Ok(out)
}

/// Largest normaliser `relu(q)·Σ_j relu(k_j)` when every query and key entry
/// equals `magnitude` over `n` rows and `d` channels.
pub fn relu_kernel_probe(n: usize, d: usize, magnitude: f64) -> f64 {
    let k = Matrix::filled(n, d, magnitude);
    let colsum = relu_kernel_denominator(&k);
    colsum.iter().map(|s| magnitude.max(0.0) * s).sum()
}

/// Same normaliser under the sigmoid kernel; bounded by `n·d` for any input.
pub fn sigmoid_kernel_probe(n: usize, d: usize, magnitude: f64) -> f64 {
    let k = Matrix::filled(n, d, magnitude);
    let colsum = sigmoid_kernel_denominator(&k);
    colsum.iter().map(|s| sigmoid(magnitude) * s).sum()
}

/// Input scales where `σ` stays strictly inside `(0, 1)` in f64.
pub const MODERATE_SCALES: [f64; 3] = [1e-3, 1.0, 30.0];
/// Input scales where `σ` rounds to exactly 0 or 1.
pub const SATURATING_SCALES: [f64; 2] = [1e6, 1e300];

/// `(min, max)` of sigmoid-kernel denominator entries divided by `n`, over
/// random keys drawn uniformly from `[−s, s]` for each scale `s`.
pub fn sigmoid_denominator_range(seed: u64, scales: &[f64]) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &scale in scales {
        let n = rng.random_range(1..=500);
        let k = Matrix::random_uniform(n, 8, -scale, scale, &mut rng);
        for v in sigmoid_kernel_denominator(&k) {
            lo = lo.min(v / n as f64);
            hi = hi.max(v / n as f64);
        }
    }
    (lo, hi)
}

pub fn kernel_suite(seed: u64) -> Result<Vec<Check>> {
    let dev = kernel_deviation(seed, 20)?;
    let (lo, hi) = sigmoid_denominator_range(seed, &MODERATE_SCALES);
    let (sat_lo, sat_hi) = sigmoid_denominator_range(seed, &SATURATING_SCALES);
    let relu = relu_kernel_probe(100_000, 1, 1e6);
    let sig = sigmoid_kernel_probe(100_000, 1, 1e6);
    Ok(vec![
        Check::at_most(Suite::Kernel, "linear_vs_dense", dev.attention.max(dev.layer), KERNEL_TOLERANCE, "max_dev"),
        Check::at_most(Suite::Kernel, "dense_row_sums", dev.row_sum, ROW_SUM_TOLERANCE, "max_dev"),
        Check::flag(
            Suite::Kernel,
            "sigmoid_denominator_bounded",
            lo > 0.0 && hi < 1.0 && sat_lo >= 0.0 && sat_hi <= 1.0,
            hi.max(sat_hi),
            format!("moderate min/n={lo:.3e} max/n={hi:.6}, saturating min/n={sat_lo:.3e} max/n={sat_hi:.6}"),
        ),
        Check::flag(
            Suite::Kernel,
            "relu_denominator_unbounded",
            relu > 100_000.0 && sig <= 100_000.0,
            relu,
            format!("relu={relu:.3e} sigmoid={sig:.3e} (n=1e5, entries 1e6)"),
        ),
    ])
}

fn single_term(poly: &MPoly, exps: &[u32]) -> f64 {
    let mut dev = (poly.coefficient(exps) - 1.0).abs();
    for (e, c) in poly.terms() {
        if e != exps {
            dev = dev.max(c.abs());
        }
    }
    dev
}

/// Exhaustive sweep over nodes and target tuples at `n = 3`, `L ∈ {1, 2}`.
/// Returns the number of targets and the worst deviation from a single
/// coefficient-1 term.
pub fn theorem_sweep() -> Result<(usize, f64)> {
    let n: usize = 3;
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for layers in 1..=2 {
        let len = (1usize << layers) - 1;
        for i in 0..n {
            for code in 0..n.pow(len as u32) {
                let targets: Vec<usize> = (0..len).map(|k| code / n.pow(k as u32) % n).collect();
                let w = select_monomial_params(i, &targets, n, layers)?;
                let polys = base_expand(&w, n)?;
                let mut exps = vec![0u32; n];
                exps[i] += 1;
                for &t in &targets {
                    exps[t] += 1;
                }
                worst = worst.max(single_term(&polys[i], &exps));
                count += 1;
            }
        }
    }
    Ok((count, worst))
}

/// Worst coefficient gap between the recurrence and the closed form over
/// `draws` random `B = 0` weights at each `(n, L) ∈ {2,3}×{1,2}`.
pub fn closed_form_deviation(seed: u64, draws: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for n in 2..=3 {
        for layers in 1..=2 {
            for _ in 0..draws {
                let w = BaseModelWeights::random(n, layers, false, &mut rng);
                let a = base_expand(&w, n)?;
                let b = closed_form_expand(&w, n, layers)?;
                for (p, q) in a.iter().zip(&b) {
                    worst = worst.max(p.max_coeff_diff(q));
                }
            }
        }
    }
    Ok(worst)
}

/// Worst relative gap between symbolic evaluation and the numeric recurrence.
pub fn numeric_consistency(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (n, layers) in [(2, 1), (3, 2), (4, 2), (2, 3)] {
        let w = BaseModelWeights::random(n, layers, true, &mut rng);
        let polys = base_expand(&w, n)?;
        for _ in 0..10 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let direct = base_numeric(&w, &x)?;
            for (p, d) in polys.iter().zip(&direct) {
                let s = p.evaluate(&x)?;
                worst = worst.max((s - d).abs() / d.abs().max(1.0));
            }
        }
    }
    Ok(worst)
}

/// Degree spectra at `n = 3`, `L = 2` with generic nonzero `B`, and with `B = 0`.
pub fn degree_spectra(seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_b = BaseModelWeights::random(3, 2, true, &mut rng);
    let without = BaseModelWeights::random(3, 2, false, &mut rng);
    Ok((
        degree_spectrum(&base_expand(&with_b, 3)?).into_iter().collect(),
        degree_spectrum(&base_expand(&without, 3)?).into_iter().collect(),
    ))
}

/// The softmax-free transformer layer's largest `|coef(x₀²x₁)|` in node 0
/// over random weights, and the base-model witness's deviation from exactly
/// `x₀²x₁`.
pub fn transformer_gap(seed: u64, draws: usize) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = [2u32, 1];
    let mut gt_max: f64 = 0.0;
    for _ in 0..draws {
        let (q, k, v) = (
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        let gt = gt_layer_expand(2, q, k, v)?;
        let listed = gt.degree3[0]
            .iter()
            .find(|(e, _)| e.as_slice() == target)
            .map_or(0.0, |(_, c)| *c);
        gt_max = gt_max.max(gt.polys[0].coefficient(&target).abs()).max(listed.abs());
    }
    let witness = base_expand(&square_times_witness(0, 1, 2)?, 2)?;
    Ok((gt_max, single_term(&witness[0], &target)))
}

/// Relabelling nodes and conjugating `W` (and permuting `B`) permutes the
/// expanded polynomials. Returns the worst coefficient gap.
pub fn symbolic_equivariance(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let w = BaseModelWeights::random(3, 2, true, &mut rng);
        let perm = random_permutation(3, rng.random());
        let base = base_expand(&w, 3)?;
        let moved = base_expand(&w.permute(&perm), 3)?;
        for (i, p) in base.iter().enumerate() {
            worst = worst.max(moved[perm[i]].max_coeff_diff(&p.relabel(&perm)));
        }
    }
    Ok(worst)
}

pub fn poly_suite(seed: u64) -> Result<Vec<Check>> {
    let (count, sweep) = theorem_sweep()?;
    let closed = closed_form_deviation(seed, 50)?;
    let numeric = numeric_consistency(seed)?;
    let (with_b, without) = degree_spectra(seed)?;
    let (gt, witness) = transformer_gap(seed, 50)?;
    let relabel = symbolic_equivariance(seed)?;
    let mut sweep_check = Check::at_most(Suite::Poly, "monomial_selection", sweep, POLY_TOLERANCE, "max_dev");
    sweep_check.detail = format!("{} over {count} targets", sweep_check.detail);
    Ok(vec![
        sweep_check,
        Check::at_most(Suite::Poly, "closed_form", closed, POLY_TOLERANCE, "max_coeff_diff"),
        Check::at_most(Suite::Poly, "numeric_consistency", numeric, NUMERIC_TOLERANCE, "max_rel_dev"),
        Check::flag(
            Suite::Poly,
            "degree_range",
            with_b == [1, 2, 3, 4] && without == [4],
            0.0,
            format!("with_b={with_b:?} b_zero={without:?}"),
        ),
        Check::flag(
            Suite::Poly,
            "transformer_gap",
            gt == 0.0 && witness <= POLY_TOLERANCE,
            witness,
            format!("gt_coef_max={gt:e} witness_dev={witness:.3e}"),
        ),
        Check::at_most(Suite::Poly, "relabel", relabel, POLY_TOLERANCE, "max_coeff_diff"),
    ])
}

/// Largest gap between the sorted probe outputs of two graphs.
fn sorted_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Sorted-output gaps on `C₆` vs `2×C₃` after two iterations with `β = 1`,
/// for v1 and v2.
pub fn wl_gaps() -> Result<(f64, f64)> {
    let c6 = crate::graphstore::generators::cycle(6)?;
    let c3 = crate::graphstore::generators::cycle(3)?;
    let two_c3 = crate::graphstore::generators::disjoint_union(&c3, &c3)?;
    let v1 = wl_probe(&c6, &two_c3, 2, 1.0, Variant::V1)?;
    let v2 = wl_probe(&c6, &two_c3, 2, 1.0, Variant::V2)?;
    Ok((sorted_gap(&v1.outputs_a, &v1.outputs_b), sorted_gap(&v2.outputs_a, &v2.outputs_b)))
}

pub fn wl_suite() -> Result<Vec<Check>> {
    let (v1, v2) = wl_gaps()?;
    let csl = wl_probe(&gen_csl(11, 2)?, &gen_csl(11, 3)?, 2, 1.0, Variant::V1)?;
    let csl_gap = sorted_gap(&csl.outputs_a, &csl.outputs_b);
    Ok(vec![
        Check::at_most(Suite::Wl, "v1_indistinguishable", v1, crate::model::WL_TOLERANCE, "gap"),
        Check::flag(
            Suite::Wl,
            "v2_distinguishes",
            v2 > WL_SEPARATION,
            v2,
            format!("gap={v2:.3e} (> {WL_SEPARATION:e})"),
        ),
        Check::at_most(Suite::Wl, "v1_csl_indistinguishable", csl_gap, crate::model::WL_TOLERANCE, "gap"),
    ])
}
