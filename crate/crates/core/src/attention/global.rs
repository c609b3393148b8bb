use super::local::propagate;
use super::{gated_combine, head_width, Gate, GlobalLayerParams, HybridLayerParams, LocalStructure};
use crate::diffmath::{sigmoid, DiffValue, Matrix};
use crate::error::{invalid, Result};

/// Sigmoid-kernel linear attention, heads concatenated, before gating.
///
/// Per head: `σ(Q)(σ(K)ᵀ V) / (σ(Q) Σ_i σ(K_i)ᵀ)`, never materialising `n×n`.
fn kernel_attention<'t>(
    x: DiffValue<'t>,
    w_q: DiffValue<'t>,
    w_k: DiffValue<'t>,
    v: DiffValue<'t>,
    heads: usize,
) -> Result<DiffValue<'t>> {
    let w = head_width(v.shape().1, heads)?;
    let q = x.matmul(w_q)?.sigmoid();
    let k = x.matmul(w_k)?.sigmoid();
    let outs = (0..heads)
        .map(|h| {
            let (lo, hi) = (h * w, h * w + w);
            let (qh, kh, vh) = (q.slice_cols(lo, hi)?, k.slice_cols(lo, hi)?, v.slice_cols(lo, hi)?);
            let num = qh.matmul(kh.transpose().matmul(vh)?)?;
            let den = qh.matmul(kh.col_sum().transpose())?;
            num.divide(den.broadcast_col(w)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if outs.len() == 1 {
        return Ok(outs[0]);
    }
    DiffValue::concat_cols(&outs)
}

/// Global attention output before LayerNorm and gating.
pub fn global_attention<'t>(x: DiffValue<'t>, params: &GlobalLayerParams<DiffValue<'t>>, heads: usize) -> Result<DiffValue<'t>> {
    let v = x.matmul(params.w_v)?;
    kernel_attention(x, params.w_q, params.w_k, v, heads)
}

/// Global attention layer in gated LayerNorm form.
pub fn global_layer<'t>(
    x: DiffValue<'t>,
    params: &GlobalLayerParams<DiffValue<'t>>,
    heads: usize,
    carrier: Option<DiffValue<'t>>,
) -> Result<DiffValue<'t>> {
    let y = global_attention(x, params, heads)?;
    let h = x.matmul(params.w_h)?;
    let gate = Gate {
        beta: params.beta,
        ln_gain: params.ln_gain,
        ln_shift: params.ln_shift,
    };
    gated_combine(h, y, gate, carrier)
}

/// Local and global attention in parallel under one gate:
/// `Y = A V + KernelAttn(V)` with a shared `V = X W_V`.
pub fn hybrid_layer<'t>(
    s: &LocalStructure,
    x: DiffValue<'t>,
    params: &HybridLayerParams<DiffValue<'t>>,
    heads: usize,
    carrier: Option<DiffValue<'t>>,
) -> Result<DiffValue<'t>> {
    let v = x.matmul(params.w_v)?;
    let local = propagate(s, v, params.attention.as_ref(), heads)?;
    let global = kernel_attention(x, params.w_q, params.w_k, v, heads)?;
    let h = x.matmul(params.w_h)?;
    let gate = Gate {
        beta: params.beta,
        ln_gain: params.ln_gain,
        ln_shift: params.ln_shift,
    };
    gated_combine(h, local.add(global)?, gate, carrier)
}

/// Head-averaged kernel attention scores between selected query rows and
/// key columns: entry `(a, b)` is the weight node `rows[a]` puts on node
/// `cols[b]`, normalised over all `n` nodes. Returns one matrix per head.
pub fn kernel_attention_scores(
    x: &Matrix,
    params: &GlobalLayerParams<Matrix>,
    heads: usize,
    rows: &[usize],
    cols: &[usize],
) -> Result<Vec<Matrix>> {
    let n = x.rows();
    if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i >= n) {
        return Err(invalid(format!("node {bad} out of range for n = {n}")));
    }
    let w = head_width(params.w_q.cols(), heads)?;
    let q = x.matmul(&params.w_q)?.map(sigmoid);
    let k = x.matmul(&params.w_k)?.map(sigmoid);
    let mut ksum = vec![0.0; k.cols()];
    for i in 0..n {
        for (acc, v) in ksum.iter_mut().zip(k.row(i)) {
            *acc += v;
        }
    }
    let mut out = Vec::with_capacity(heads);
    for h in 0..heads {
        let span = h * w..h * w + w;
        let mut m = Matrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            let qi = &q.row(i)[span.clone()];
            let den: f64 = qi.iter().zip(&ksum[span.clone()]).map(|(x, y)| x * y).sum();
            for (b, &j) in cols.iter().enumerate() {
                let num: f64 = qi.iter().zip(&k.row(j)[span.clone()]).map(|(x, y)| x * y).sum();
                m[(a, b)] = num / den;
            }
        }
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_node_attention_is_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GlobalLayerParams::init(4, &mut rng);
        let x = Matrix::random_uniform(1, 4, -1.0, 1.0, &mut rng);
        let tape = Tape::new();
        let bp = p.map(|m| tape.leaf(m.clone()));
        let y = global_attention(tape.leaf(x.clone()), &bp, 2).unwrap();
        let v = x.matmul(&p.w_v).unwrap();
        assert!(y.value().max_abs_diff(&v) < 1e-14);
    }

    #[test]
    fn sampled_scores_match_full_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GlobalLayerParams::init(6, &mut rng);
        let x = Matrix::random_uniform(7, 6, -1.0, 1.0, &mut rng);
        let all: Vec<usize> = (0..7).collect();
        for m in kernel_attention_scores(&x, &p, 3, &all, &all).unwrap() {
            for i in 0..7 {
                assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
