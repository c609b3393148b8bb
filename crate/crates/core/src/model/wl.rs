use super::Variant;
use crate::error::{invalid, Result};
use crate::graphstore::{fiedler_vector, Graph};

/// Sorted node outputs of both graphs and whether they differ.
#[derive(Clone, Debug, PartialEq)]
pub struct WlOutcome {
    pub outputs_a: Vec<f64>,
    pub outputs_b: Vec<f64>,
    pub distinguishable: bool,
}

/// Tolerance below which sorted outputs count as equal.
pub const WL_TOLERANCE: f64 = 1e-9;

fn run(g: &Graph, layers: usize, beta: f64, variant: Variant) -> Result<Vec<f64>> {
    let n = g.n();
    let bias: Vec<f64> = match variant {
        Variant::V1 => vec![beta; n],
        Variant::V2 => fiedler_vector(g)?.vector.iter().map(|v| beta * v).collect(),
    };
    let deg: Vec<f64> = (0..n).map(|i| g.degree(i).max(1) as f64).collect();
    let mut x = vec![1.0; n];
    for _ in 0..layers {
        // Random-walk propagation Â = A D⁻¹: node i collects x_j / deg_j.
        let ax: Vec<f64> = (0..n)
            .map(|i| g.neighbors(i).iter().map(|&j| x[j] / deg[j]).sum())
            .collect();
        x = (0..n).map(|i| ax[i] * (x[i] + bias[i])).collect();
    }
    x.sort_by(f64::total_cmp);
    Ok(x)
}

/// Base-model probe with `W` replaced by the random-walk matrix and all
/// features equal to 1; `B = β·1` (v1) or `B = β·v₂` (v2).
pub fn wl_probe(a: &Graph, b: &Graph, layers: usize, beta: f64, variant: Variant) -> Result<WlOutcome> {
    if a.n() != b.n() {
        return Err(invalid(format!("wl_probe needs equal sizes, got {} and {}", a.n(), b.n())));
    }
    let outputs_a = run(a, layers, beta, variant)?;
    let outputs_b = run(b, layers, beta, variant)?;
    let distinguishable = outputs_a
        .iter()
        .zip(&outputs_b)
        .any(|(x, y)| (x - y).abs() > WL_TOLERANCE);
    Ok(WlOutcome {
        outputs_a,
        outputs_b,
        distinguishable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphstore::generators::{cycle, disjoint_union};

    fn pair() -> (Graph, Graph) {
        let c3 = cycle(3).unwrap();
        (cycle(6).unwrap(), disjoint_union(&c3, &c3).unwrap())
    }

    #[test]
    fn v1_cannot_separate_regular_pair() {
        let (a, b) = pair();
        let out = wl_probe(&a, &b, 2, 1.0, Variant::V1).unwrap();
        assert!(!out.distinguishable);
        // Â·1 = 1 on regular graphs: 1 → 2 → 6.
        assert!(out.outputs_a.iter().all(|&v| (v - 6.0).abs() < 1e-12));
    }

    #[test]
    fn v2_separates_regular_pair() {
        let (a, b) = pair();
        assert!(wl_probe(&a, &b, 2, 1.0, Variant::V2).unwrap().distinguishable);
    }

    #[test]
    fn v1_separates_different_degrees() {
        let path = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert!(wl_probe(&path, &star, 1, 0.5, Variant::V1).unwrap().distinguishable);
    }
}
