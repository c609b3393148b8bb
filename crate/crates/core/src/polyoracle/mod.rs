//! Symbolic expansion of the base model `X ← (W X) ⊙ (X + B)` on scalar
//! node features, with the checks behind its polynomial-expressivity claims.

mod expand;
mod mpoly;
mod select;

pub use expand::{
    base_expand, base_numeric, closed_form_expand, gt_layer_expand, BaseModelWeights, GtExpansion, MAX_LAYERS, MAX_NODES,
};
pub use mpoly::{degree_spectrum, MPoly, PRUNE};
pub use select::{select_monomial_params, square_times_witness};
