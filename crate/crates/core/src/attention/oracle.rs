use super::{head_width, GlobalLayerParams};
use crate::diffmath::{sigmoid, DiffValue, Matrix};
use crate::error::{Error, Result};

/// Largest `n` for which the dense oracles materialise `n×n` matrices.
pub const MAX_DENSE_NODES: usize = 2000;

fn check_cap(n: usize) -> Result<()> {
    if n > MAX_DENSE_NODES {
        return Err(Error::TooLarge(format!("dense attention with n = {n} exceeds {MAX_DENSE_NODES}")));
    }
    Ok(())
}

/// Kernel attention computed the quadratic way: form `σ(Q)σ(K)ᵀ`,
/// normalise its rows, multiply by `V`. Heads concatenated.
pub fn dense_kernel_attention_oracle<'t>(
    x: DiffValue<'t>,
    params: &GlobalLayerParams<DiffValue<'t>>,
    heads: usize,
) -> Result<DiffValue<'t>> {
    let n = x.shape().0;
    check_cap(n)?;
    let w = head_width(params.w_v.shape().1, heads)?;
    let q = x.matmul(params.w_q)?.sigmoid();
    let k = x.matmul(params.w_k)?.sigmoid();
    let v = x.matmul(params.w_v)?;
    let outs = (0..heads)
        .map(|h| {
            let (lo, hi) = (h * w, h * w + w);
            let s = q.slice_cols(lo, hi)?.matmul(k.slice_cols(lo, hi)?.transpose())?;
            let a = s.divide(s.row_sum().broadcast_col(n)?)?;
            a.matmul(v.slice_cols(lo, hi)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if outs.len() == 1 {
        return Ok(outs[0]);
    }
    DiffValue::concat_cols(&outs)
}

/// The row-normalised dense kernel attention matrix of every head.
pub fn dense_kernel_attention_matrices(x: &Matrix, params: &GlobalLayerParams<Matrix>, heads: usize) -> Result<Vec<Matrix>> {
    let n = x.rows();
    check_cap(n)?;
    let w = head_width(params.w_q.cols(), heads)?;
    let q = x.matmul(&params.w_q)?.map(sigmoid);
    let k = x.matmul(&params.w_k)?.map(sigmoid);
    let mut out = Vec::with_capacity(heads);
    for h in 0..heads {
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = (h * w..h * w + w).map(|c| q[(i, c)] * k[(j, c)]).sum();
            }
            let total: f64 = s.row(i).iter().sum();
            for v in s.row_mut(i) {
                *v /= total;
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// `softmax(Q Kᵀ / √d_k) V` with `Q = X W_Q`, `K = X W_K`, `V = X W_V`.
pub fn dense_softmax_attention<'t>(
    x: DiffValue<'t>,
    wq: DiffValue<'t>,
    wk: DiffValue<'t>,
    wv: DiffValue<'t>,
) -> Result<DiffValue<'t>> {
    check_cap(x.shape().0)?;
    let q = x.matmul(wq)?;
    let k = x.matmul(wk)?;
    let scale = 1.0 / (q.shape().1 as f64).sqrt();
    let weights = q.matmul(k.transpose())?.scale(scale).log_softmax_rows().exp();
    weights.matmul(x.matmul(wv)?)
}

fn column_sums(k: &Matrix, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; k.cols()];
    for i in 0..k.rows() {
        for (acc, &v) in out.iter_mut().zip(k.row(i)) {
            *acc += f(v);
        }
    }
    out
}

/// `Σ_i σ(K_i,:)ᵀ`: every entry lies strictly inside `(0, n)`.
pub fn sigmoid_kernel_denominator(k: &Matrix) -> Vec<f64> {
    column_sums(k, sigmoid)
}

/// `Σ_i relu(K_i,:)ᵀ`: unbounded in the magnitude of `K`.
pub fn relu_kernel_denominator(k: &Matrix) -> Vec<f64> {
    column_sums(k, |v| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_denominator_of_zeros() {
        let d = sigmoid_kernel_denominator(&Matrix::zeros(6, 3));
        assert_eq!(d, vec![3.0; 3]);
    }

    #[test]
    fn relu_denominator_grows_with_magnitude() {
        let d = relu_kernel_denominator(&Matrix::filled(4, 2, 1e6));
        assert_eq!(d, vec![4e6; 2]);
        assert_eq!(relu_kernel_denominator(&Matrix::filled(4, 2, -1.0)), vec![0.0; 2]);
    }

    #[test]
    fn softmax_uniform_for_identical_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tape = Tape::new();
        let x = tape.leaf(Matrix::filled(5, 3, 0.7));
        let mut w = || tape.leaf(Matrix::glorot(3, 3, &mut rng));
        let (wq, wk, wv) = (w(), w(), w());
        let out = dense_softmax_attention(x, wq, wk, wv).unwrap().value();
        for i in 1..5 {
            assert!(out.row(i).iter().zip(out.row(0)).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn oracle_rejects_large_n() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = GlobalLayerParams::init(2, &mut rng).map(|m| tape.leaf(m.clone()));
        let x = tape.leaf(Matrix::zeros(MAX_DENSE_NODES + 1, 2));
        assert!(matches!(dense_kernel_attention_oracle(x, &p, 1), Err(Error::TooLarge(_))));
    }
}
