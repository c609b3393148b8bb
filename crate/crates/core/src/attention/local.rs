use std::rc::Rc;

use super::{gated_combine, head_width, AttentionVectors, Gate, LocalLayerParams};
use crate::diffmath::{CsrMatrix, DiffValue, LEAKY_RELU_SLOPE};
use crate::error::{invalid, Result};
use crate::graphstore::Graph;

/// Sparsity pattern and index tables a local layer needs for one graph.
///
/// Rows of `pattern` are destinations; each row's entries are the sources
/// attending into it.
#[derive(Clone, Debug)]
pub struct LocalStructure {
    pattern: Rc<CsrMatrix>,
    offsets: Rc<[usize]>,
    dst: Rc<[usize]>,
    src: Rc<[usize]>,
    gcn: Rc<CsrMatrix>,
}

impl LocalStructure {
    /// Adds one self-loop per node, so every softmax segment is nonempty.
    pub fn new(graph: &Graph) -> Self {
        Self::from_graph(&graph.with_self_loops())
    }

    /// Uses the graph exactly as given; isolated nodes then make GAT fail.
    pub fn from_graph(graph: &Graph) -> Self {
        let pattern = graph.adjacency_csr();
        Self {
            offsets: pattern.offsets().into(),
            dst: pattern.row_of_entries().into(),
            src: pattern.indices().into(),
            pattern: Rc::new(pattern),
            gcn: Rc::new(graph.gcn_normalized()),
        }
    }

    pub fn n(&self) -> usize {
        self.pattern.rows()
    }

    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    pub fn gcn(&self) -> &CsrMatrix {
        &self.gcn
    }
}

fn head_weights<'t>(
    s: &LocalStructure,
    v: DiffValue<'t>,
    att: &AttentionVectors<DiffValue<'t>>,
    heads: usize,
    head: usize,
) -> Result<DiffValue<'t>> {
    let w = head_width(v.shape().1, heads)?;
    if head >= heads {
        return Err(invalid(format!("head {head} out of range for {heads} heads")));
    }
    if v.shape().0 != s.n() {
        return Err(invalid(format!("input has {} rows but graph has {} nodes", v.shape().0, s.n())));
    }
    let (lo, hi) = (head * w, head * w + w);
    let z = v.slice_cols(lo, hi)?;
    let dst_score = z.matmul(att.dst.slice_cols(lo, hi)?.transpose())?;
    let src_score = z.matmul(att.src.slice_cols(lo, hi)?.transpose())?;
    let e = dst_score
        .gather_rows(Rc::clone(&s.dst))?
        .add(src_score.gather_rows(Rc::clone(&s.src))?)?
        .leaky_relu(LEAKY_RELU_SLOPE);
    e.segment_softmax(Rc::clone(&s.offsets))
}

/// GAT attention for one head, as one weight per stored entry of
/// `s.pattern()` (an `nnz×1` column). Each destination's weights sum to 1.
pub fn gat_attention<'t>(
    s: &LocalStructure,
    x: DiffValue<'t>,
    params: &LocalLayerParams<DiffValue<'t>>,
    heads: usize,
    head: usize,
) -> Result<DiffValue<'t>> {
    let att = params
        .attention
        .as_ref()
        .ok_or_else(|| invalid("gat_attention: layer has no attention vectors (gcn kind)"))?;
    head_weights(s, x.matmul(params.w_v)?, att, heads, head)
}

/// `A V` with heads concatenated, before gating.
pub fn local_attention<'t>(
    s: &LocalStructure,
    x: DiffValue<'t>,
    params: &LocalLayerParams<DiffValue<'t>>,
    heads: usize,
) -> Result<DiffValue<'t>> {
    let v = x.matmul(params.w_v)?;
    propagate(s, v, params.attention.as_ref(), heads)
}

pub(crate) fn propagate<'t>(
    s: &LocalStructure,
    v: DiffValue<'t>,
    attention: Option<&AttentionVectors<DiffValue<'t>>>,
    heads: usize,
) -> Result<DiffValue<'t>> {
    let tape = v.tape();
    let Some(att) = attention else {
        return tape.spmm(&s.gcn, v);
    };
    let w = head_width(v.shape().1, heads)?;
    let outs = (0..heads)
        .map(|h| {
            let a = head_weights(s, v, att, heads, h)?;
            tape.spmm_weighted(&s.pattern, a, v.slice_cols(h * w, h * w + w)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if outs.len() == 1 {
        return Ok(outs[0]);
    }
    DiffValue::concat_cols(&outs)
}

/// Local attention layer in gated LayerNorm form.
pub fn local_layer<'t>(
    s: &LocalStructure,
    x: DiffValue<'t>,
    params: &LocalLayerParams<DiffValue<'t>>,
    heads: usize,
    carrier: Option<DiffValue<'t>>,
) -> Result<DiffValue<'t>> {
    let av = local_attention(s, x, params, heads)?;
    let h = x.matmul(params.w_h)?;
    let gate = Gate {
        beta: params.beta,
        ln_gain: params.ln_gain,
        ln_shift: params.ln_shift,
    };
    gated_combine(h, av, gate, carrier)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::{Matrix, Tape};
    use crate::graphstore::random_permutation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bind<'t>(tape: &'t Tape, p: &LocalLayerParams<Matrix>) -> LocalLayerParams<DiffValue<'t>> {
        p.map(|m| tape.leaf(m.clone()))
    }

    fn scalar_params(w_v: f64, w_h: f64, beta: f64) -> LocalLayerParams<Matrix> {
        LocalLayerParams {
            w_v: Matrix::filled(1, 1, w_v),
            w_h: Matrix::filled(1, 1, w_h),
            beta: Matrix::filled(1, 1, beta),
            attention: Some(AttentionVectors {
                src: Matrix::filled(1, 1, 0.3),
                dst: Matrix::filled(1, 1, -0.7),
            }),
            ln_gain: Matrix::filled(1, 1, 1.0),
            ln_shift: Matrix::zeros(1, 1),
        }
    }

    #[test]
    fn single_node_hand_value() {
        // A = [1], V = 2, H = 3, LN of a 1×1 row is 0, gate 0.5 → 0.5 · 2.
        let s = LocalStructure::new(&Graph::empty(1));
        let tape = Tape::new();
        let p = bind(&tape, &scalar_params(2.0, 3.0, 0.0));
        let x = tape.leaf(Matrix::filled(1, 1, 1.0));
        let a = gat_attention(&s, x, &p, 1, 0).unwrap();
        assert_eq!(a.value().data(), &[1.0]);
        let out = local_layer(&s, x, &p, 1, None).unwrap();
        assert!((out.value()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_gets_uniform_attention() {
        let s = LocalStructure::new(&Graph::from_edges(2, &[(0, 1)]).unwrap());
        let tape = Tape::new();
        let p = bind(&tape, &scalar_params(1.5, 1.0, 0.0));
        let x = tape.leaf(Matrix::filled(2, 1, 0.8));
        let a = gat_attention(&s, x, &p, 1, 0).unwrap();
        assert!(a.value().data().iter().all(|w| (w - 0.5).abs() < 1e-15));
    }

    #[test]
    fn isolated_node_without_self_loop_is_rejected() {
        let s = LocalStructure::from_graph(&Graph::from_edges(3, &[(0, 1)]).unwrap());
        let tape = Tape::new();
        let p = bind(&tape, &scalar_params(1.0, 1.0, 0.0));
        let x = tape.leaf(Matrix::filled(3, 1, 1.0));
        assert!(matches!(
            gat_attention(&s, x, &p, 1, 0),
            Err(crate::Error::EmptySegment(2))
        ));
    }

    #[test]
    fn saturated_gate_returns_attention_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = crate::graphstore::gen_er(12, 0.3, 1).unwrap();
        let s = LocalStructure::new(&g);
        let mut p = LocalLayerParams::init(8, true, &mut rng);
        p.beta = Matrix::filled(1, 8, 20.0);
        let tape = Tape::new();
        let bp = bind(&tape, &p);
        let x = tape.leaf(Matrix::random_uniform(12, 8, -1.0, 1.0, &mut rng));
        let out = local_layer(&s, x, &bp, 2, None).unwrap();
        let av = local_attention(&s, x, &bp, 2).unwrap();
        assert!(out.value().max_abs_diff(&av.value()) < 1e-6);
    }

    #[test]
    fn attention_matrix_relabels_with_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = crate::graphstore::gen_er(10, 0.3, 2).unwrap();
        let perm = random_permutation(10, 9);
        let p = LocalLayerParams::init(4, true, &mut rng);
        let x = Matrix::random_uniform(10, 4, -1.0, 1.0, &mut rng);

        let dense = |g: &Graph, x: &Matrix| {
            let s = LocalStructure::new(g);
            let tape = Tape::new();
            let w = gat_attention(&s, tape.leaf(x.clone()), &bind(&tape, &p), 2, 1).unwrap();
            s.pattern().with_values(w.value().data().to_vec()).unwrap().to_dense()
        };
        let a = dense(&g, &x);
        let b = dense(&g.permute(&perm).unwrap(), &x.permute_rows(&perm));
        for i in 0..10 {
            for j in 0..10 {
                assert!((b[(perm[i], perm[j])] - a[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
