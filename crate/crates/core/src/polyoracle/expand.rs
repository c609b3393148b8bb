use rand::Rng;

use super::MPoly;
use crate::diffmath::Matrix;
use crate::error::{invalid, Error, Result};

/// Size caps for symbolic expansion; term counts grow like `n^(2^L)`.
pub const MAX_NODES: usize = 4;
pub const MAX_LAYERS: usize = 3;

/// Per-layer `W` (`n×n`) and `B` (length `n`) of the base model.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseModelWeights {
    pub w: Vec<Matrix>,
    pub b: Vec<Vec<f64>>,
}

impl BaseModelWeights {
    pub fn zeros(n: usize, layers: usize) -> Self {
        Self {
            w: vec![Matrix::zeros(n, n); layers],
            b: vec![vec![0.0; n]; layers],
        }
    }

    /// Entries drawn from `±[0.1, 1]`, so none is zero. `B` stays zero
    /// unless `with_b`.
    pub fn random<R: Rng + ?Sized>(n: usize, layers: usize, with_b: bool, rng: &mut R) -> Self {
        let mut draw = || {
            let m: f64 = rng.random_range(0.1..=1.0);
            if rng.random::<bool>() { m } else { -m }
        };
        let mut out = Self::zeros(n, layers);
        for l in 0..layers {
            for v in out.w[l].data_mut() {
                *v = draw();
            }
            if with_b {
                for v in &mut out.b[l] {
                    *v = draw();
                }
            }
        }
        out
    }

    pub fn layers(&self) -> usize {
        self.w.len()
    }

    pub fn n(&self) -> usize {
        self.w.first().map_or(0, Matrix::rows)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.w.len() != self.b.len() {
            return Err(invalid("W and B have different layer counts"));
        }
        for (l, (w, b)) in self.w.iter().zip(&self.b).enumerate() {
            if w.shape() != (n, n) || b.len() != n {
                return Err(invalid(format!("layer {l}: expected W {n}×{n} and B of length {n}")));
            }
        }
        Ok(())
    }

    /// Relabels nodes: `W' = P W Pᵀ`, `B' = P B` with `i ↦ perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let mut out = Self::zeros(n, self.layers());
        for l in 0..self.layers() {
            for i in 0..n {
                out.b[l][perm[i]] = self.b[l][i];
                for j in 0..n {
                    out.w[l][(perm[i], perm[j])] = self.w[l][(i, j)];
                }
            }
        }
        out
    }
}

fn check_caps(n: usize, layers: usize) -> Result<()> {
    if n == 0 || n > MAX_NODES || layers > MAX_LAYERS {
        return Err(Error::TooLarge(format!(
            "symbolic expansion supports 1 <= n <= {MAX_NODES} and L <= {MAX_LAYERS}, got n = {n}, L = {layers}"
        )));
    }
    Ok(())
}

/// Applies the recurrence symbolically from `X⁽⁰⁾_i = x_i`.
pub fn base_expand(weights: &BaseModelWeights, n: usize) -> Result<Vec<MPoly>> {
    check_caps(n, weights.layers())?;
    weights.validate(n)?;
    let mut x: Vec<MPoly> = (0..n).map(|i| MPoly::var(n, i)).collect();
    for (w, b) in weights.w.iter().zip(&weights.b) {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut wx = MPoly::zero(n);
            for (j, xj) in x.iter().enumerate() {
                if w[(i, j)] != 0.0 {
                    wx = wx.add(&xj.scale(w[(i, j)]))?;
                }
            }
            let shifted = x[i].add(&MPoly::constant(n, b[i]))?;
            next.push(wx.mul(&shifted)?);
        }
        x = next;
    }
    Ok(x)
}

/// The same recurrence evaluated numerically at a point.
pub fn base_numeric(weights: &BaseModelWeights, x0: &[f64]) -> Result<Vec<f64>> {
    let n = x0.len();
    weights.validate(n)?;
    let mut x = x0.to_vec();
    for (w, b) in weights.w.iter().zip(&weights.b) {
        x = (0..n)
            .map(|i| (0..n).map(|j| w[(i, j)] * x[j]).sum::<f64>() * (x[i] + b[i]))
            .collect();
    }
    Ok(x)
}

/// Coefficient of index tuple `t` (length `2^l`) after `l` layers.
///
/// The tuple splits into halves `I ∘ J`; the first half comes from the node
/// itself and the second from the neighbour `J₁` it reads through
/// `W⁽ˡ⁾[I₁][J₁]`, giving `c_l(I ∘ J) = c_{l-1}(I) · W⁽ˡ⁾[I₁][J₁] · c_{l-1}(J)`.
fn tree_coefficient(w: &[Matrix], t: &[usize]) -> f64 {
    if t.len() == 1 {
        return 1.0;
    }
    let (left, right) = t.split_at(t.len() / 2);
    let l = w.len();
    let link = w[l - 1][(left[0], right[0])];
    if link == 0.0 {
        return 0.0;
    }
    tree_coefficient(&w[..l - 1], left) * link * tree_coefficient(&w[..l - 1], right)
}

/// Builds each node polynomial directly as `Σ_{I: I₁ = i} c_L(I) Π_k x_{I_k}`
/// by enumerating all index tuples, without running the recurrence.
pub fn closed_form_expand(weights: &BaseModelWeights, n: usize, layers: usize) -> Result<Vec<MPoly>> {
    check_caps(n, layers)?;
    if weights.layers() != layers {
        return Err(invalid(format!("weights have {} layers, expected {layers}", weights.layers())));
    }
    weights.validate(n)?;
    if weights.b.iter().flatten().any(|&v| v != 0.0) {
        return Err(invalid("closed_form_expand requires B = 0"));
    }
    let len = 1usize << layers;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut p = MPoly::zero(n);
        let mut tuple = vec![0usize; len];
        tuple[0] = i;
        let free = n.pow((len - 1) as u32);
        for code in 0..free {
            let mut c = code;
            for slot in tuple.iter_mut().skip(1) {
                *slot = c % n;
                c /= n;
            }
            let coeff = tree_coefficient(&weights.w, &tuple);
            if coeff != 0.0 {
                let mut exps = vec![0u32; n];
                for &k in &tuple {
                    exps[k] += 1;
                }
                p = p.add(&MPoly::monomial(exps, coeff))?;
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Symbolic expansion of a softmax-free transformer layer on scalar features.
#[derive(Clone, Debug)]
pub struct GtExpansion {
    /// `x_i' = w_q w_k w_v · x_i · Σ_j x_j²`.
    pub polys: Vec<MPoly>,
    /// Per node, every degree-3 monomial with its coefficient (zero when absent).
    pub degree3: Vec<Vec<(Vec<u32>, f64)>>,
}

pub fn gt_layer_expand(n: usize, wq: f64, wk: f64, wv: f64) -> Result<GtExpansion> {
    check_caps(n, 0)?;
    let mut sum_sq = MPoly::zero(n);
    for j in 0..n {
        let xj = MPoly::var(n, j);
        sum_sq = sum_sq.add(&xj.mul(&xj)?)?;
    }
    let polys = (0..n)
        .map(|i| Ok(MPoly::var(n, i).mul(&sum_sq)?.scale(wq * wk * wv)))
        .collect::<Result<Vec<_>>>()?;
    let cubic = degree3_monomials(n);
    let degree3 = polys
        .iter()
        .map(|p| cubic.iter().map(|e| (e.clone(), p.coefficient(e))).collect())
        .collect();
    Ok(GtExpansion { polys, degree3 })
}

fn degree3_monomials(n: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            for c in b..n {
                let mut e = vec![0u32; n];
                e[a] += 1;
                e[b] += 1;
                e[c] += 1;
                out.push(e);
            }
        }
    }
    out
}
