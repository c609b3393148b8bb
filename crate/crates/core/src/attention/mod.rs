//! Local (sparse GAT or GCN) and global (sigmoid-kernel) attention layers,
//! their parameter containers, and dense oracles for testing.
//!
//! Every layer ends in the same gated form
//! `X' = (1 − G) ⊙ LN(H ⊙ Y) + G ⊙ Y` with `G = σ(c βᵀ)`, where `Y` is the
//! attention output, `H = X W_H`, and the carrier `c` is the all-ones vector
//! (v1) or a Fiedler vector (v2).

mod global;
mod local;
mod oracle;
mod params;

pub use global::{global_attention, global_layer, hybrid_layer, kernel_attention_scores};
pub use local::{gat_attention, local_attention, local_layer, LocalStructure};
pub use oracle::{
    dense_kernel_attention_matrices, dense_kernel_attention_oracle, dense_softmax_attention,
    relu_kernel_denominator, sigmoid_kernel_denominator, MAX_DENSE_NODES,
};
pub use params::{AttentionVectors, GlobalLayerParams, HybridLayerParams, LocalLayerParams};

use crate::diffmath::DiffValue;
use crate::error::{invalid, Result};

/// Epsilon inside the LayerNorm square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Gate vector and LayerNorm affine parameters shared by all layer kinds.
#[derive(Clone, Copy, Debug)]
pub struct Gate<'t> {
    pub beta: DiffValue<'t>,
    pub ln_gain: DiffValue<'t>,
    pub ln_shift: DiffValue<'t>,
}

/// `(1 − G) ⊙ LN(h ⊙ y) + G ⊙ y` with `G = σ(c βᵀ)`.
///
/// `carrier` is an `n×1` column; `None` stands for all ones.
pub fn gated_combine<'t>(
    h: DiffValue<'t>,
    y: DiffValue<'t>,
    gate: Gate<'t>,
    carrier: Option<DiffValue<'t>>,
) -> Result<DiffValue<'t>> {
    let n = y.shape().0;
    let pre = match carrier {
        None => gate.beta.broadcast_row(n)?,
        Some(c) => c.matmul(gate.beta)?,
    };
    let g = pre.sigmoid();
    let normed = h.hadamard(y)?.layer_norm_rows(gate.ln_gain, gate.ln_shift, LAYER_NORM_EPS)?;
    g.one_minus().hadamard(normed)?.add(g.hadamard(y)?)
}

pub(crate) fn head_width(d: usize, heads: usize) -> Result<usize> {
    if heads == 0 || d % heads != 0 {
        return Err(invalid(format!("width {d} is not divisible by {heads} heads")));
    }
    Ok(d / heads)
}
