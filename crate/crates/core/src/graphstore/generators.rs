use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Graph, Split};
use crate::diffmath::Matrix;
use crate::error::{invalid, Result};

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Erdős–Rényi `G(n, p)`: every unordered pair independently with probability `p`.
pub fn gen_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    check_prob("p", p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// Parameters of the planted-partition generator.
#[derive(Clone, Debug)]
pub struct SbmParams {
    pub n: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Balanced stochastic block model with one-hot class-mean features plus
/// Gaussian noise, and a random 60/20/20 train/valid/test split.
///
/// Node `i` belongs to class `i * classes / n`.
pub fn gen_sbm(params: &SbmParams) -> Result<Dataset> {
    let SbmParams {
        n,
        classes,
        p_in,
        p_out,
        dim,
        noise,
        seed,
    } = *params;
    check_prob("p_in", p_in)?;
    check_prob("p_out", p_out)?;
    if classes < 2 {
        return Err(invalid(format!("classes must be at least 2, got {classes}")));
    }
    if dim < classes {
        return Err(invalid(format!("feature dim {dim} must be at least the class count {classes}")));
    }
    if n < classes {
        return Err(invalid(format!("n = {n} is smaller than the class count {classes}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(invalid(format!("noise must be a finite non-negative scale, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label_of = |i: usize| (i * classes / n) as i64;

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if label_of(u) == label_of(v) { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_edges(n, &edges)?;

    let mut features = Matrix::zeros(n, dim);
    for i in 0..n {
        let y = label_of(i) as usize;
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            features[(i, j)] = if j == y { 1.0 } else { 0.0 } + noise * z;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (n as f64 * 0.6).round() as usize;
    let n_valid = (n as f64 * 0.2).round() as usize;
    let mut splits = vec![Split::Test; n];
    for (k, &node) in order.iter().enumerate() {
        splits[node] = if k < n_train {
            Split::Train
        } else if k < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    let labels = (0..n).map(label_of).collect();
    Dataset::new(graph, features, labels, splits, classes)
}

/// Circular skip-link graph: cycle edges `(i, i+1)` plus skip edges `(i, i+skip)`, mod `n`.
///
/// Requires `2 <= skip <= n-2` and `2*skip != n`; under those conditions the
/// two edge families never coincide, so the result is 4-regular with `2n`
/// edges. `gcd(n, skip) > 1` is allowed: the skip edges then form several
/// disjoint cycles rather than one.
pub fn gen_csl(n: usize, skip: usize) -> Result<Graph> {
    if n < 5 || skip < 2 || skip > n - 2 || 2 * skip == n {
        return Err(invalid(format!(
            "csl: need 2 <= skip <= n-2 and skip != n/2, got n = {n}, skip = {skip}"
        )));
    }
    let mut edges = Vec::with_capacity(2 * n);
    for i in 0..n {
        edges.push((i, (i + 1) % n));
        edges.push((i, (i + skip) % n));
    }
    Graph::from_edges(n, &edges)
}

/// Cycle `C_n`.
pub fn cycle(n: usize) -> Result<Graph> {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::from_edges(n, &edges)
}

/// Disjoint union; nodes of `b` are shifted by `a.n()`.
pub fn disjoint_union(a: &Graph, b: &Graph) -> Result<Graph> {
    let mut edges = a.edges();
    edges.extend(b.edges().into_iter().map(|(u, v)| (u + a.n(), v + a.n())));
    Graph::from_edges(a.n() + b.n(), &edges)
}
