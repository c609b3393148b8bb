use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{forward, GraphInput, PolynormerModel, Scheme, Stage};
use crate::attention::{kernel_attention_scores, GlobalLayerParams};
use crate::diffmath::{Matrix, Tape};
use crate::error::{invalid, Result};

/// Pairwise attention of the last global layer among sampled nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// Sampled node ids, ascending.
    pub nodes: Vec<usize>,
    /// `k×k` head-averaged scores scaled so the largest equals 1.
    pub scores: Matrix,
}

/// `k` distinct nodes drawn uniformly with `seed`, ascending.
pub fn sample_nodes(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(invalid(format!("cannot sample {k} nodes from a graph with {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = sample(&mut rng, n, k).into_vec();
    nodes.sort_unstable();
    Ok(nodes)
}

/// Scores of the last global (or parallel) layer between `nodes`, from the
/// kernel factorisation restricted to those rows and columns. Heads are
/// averaged before scaling.
pub fn attention_heatmap(model: &PolynormerModel, input: &GraphInput, features: &Matrix, nodes: &[usize]) -> Result<Heatmap> {
    let config = &model.config;
    if config.global_layers == 0 {
        return Err(invalid("attention export needs at least one global layer (global_layers = 0)"));
    }
    let tape = Tape::new();
    let params = model.bind(&tape);
    let trace = forward(config, &params, input, tape.leaf(features.clone()), Stage::Full, None)?;
    let outs = &trace.global_outputs;
    let (x, last) = match config.scheme {
        Scheme::LocalToGlobal => {
            let x = if outs.len() >= 2 {
                outs[outs.len() - 2]
            } else {
                trace.x_local.ok_or_else(|| invalid("forward pass produced no local output"))?
            };
            (x, model.params.global.last().cloned())
        }
        Scheme::LocalAndGlobal => {
            let x = *outs
                .get(outs.len().wrapping_sub(2))
                .ok_or_else(|| invalid("parallel scheme needs at least two layers for export"))?;
            let last = model.params.hybrid.last().map(|p| GlobalLayerParams {
                w_q: p.w_q.clone(),
                w_k: p.w_k.clone(),
                w_v: p.w_v.clone(),
                w_h: p.w_h.clone(),
                beta: p.beta.clone(),
                ln_gain: p.ln_gain.clone(),
                ln_shift: p.ln_shift.clone(),
            });
            (x, last)
        }
    };
    let last = last.ok_or_else(|| invalid("model has no global layer parameters"))?;
    let per_head = kernel_attention_scores(&x.value(), &last, config.heads, nodes, nodes)?;
    let k = nodes.len();
    let mut scores = Matrix::zeros(k, k);
    for m in &per_head {
        scores.add_assign(m);
    }
    let max = scores.max_abs();
    if !(max > 0.0 && max.is_finite()) {
        return Err(crate::error::Error::NonFinite("attention scores".to_string()));
    }
    Ok(Heatmap {
        nodes: nodes.to_vec(),
        scores: scores.map(|v| v / max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphstore::gen_er;
    use crate::model::{init_model, ModelConfig};

    fn setup(global: usize, scheme: Scheme) -> (PolynormerModel, GraphInput, Matrix) {
        let mut config = ModelConfig::new(3, 8, 1, global, 2, 2);
        config.scheme = scheme;
        let model = init_model(&config, 4).unwrap();
        let g = gen_er(30, 0.2, 1).unwrap();
        let input = GraphInput::new(&g, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::random_uniform(30, 3, -1.0, 1.0, &mut rng);
        (model, input, x)
    }

    #[test]
    fn scaled_to_unit_maximum() {
        for scheme in [Scheme::LocalToGlobal, Scheme::LocalAndGlobal] {
            let (m, input, x) = setup(2, scheme);
            let nodes = sample_nodes(30, 10, 9).unwrap();
            let h = attention_heatmap(&m, &input, &x, &nodes).unwrap();
            assert!(h.scores.data().iter().all(|&v| v > 0.0 && v <= 1.0));
            assert!(h.scores.data().contains(&1.0));
        }
    }

    #[test]
    fn single_node_is_one() {
        let (m, input, x) = setup(1, Scheme::LocalToGlobal);
        let h = attention_heatmap(&m, &input, &x, &[7]).unwrap();
        assert_eq!(h.scores.data(), &[1.0]);
    }

    #[test]
    fn needs_global_layer() {
        let (m, input, x) = setup(0, Scheme::LocalToGlobal);
        assert!(attention_heatmap(&m, &input, &x, &[0, 1]).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_distinct() {
        let a = sample_nodes(100, 20, 3).unwrap();
        assert_eq!(a, sample_nodes(100, 20, 3).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_nodes(5, 6, 0).is_err());
    }
}
