use super::Graph;
use crate::diffmath::Matrix;
use crate::error::{invalid, Result};

/// Largest graph accepted by the dense eigensolver.
pub const MAX_SPECTRAL_NODES: usize = 5000;

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the second matrix.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(invalid(format!("eigensolver needs a square matrix, got {:?}", a.shape())));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total: f64 = m.data().iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (c, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, c)] = v[(r, src)];
        }
    }
    Ok((values, vectors))
}

/// Degrees with isolated nodes clamped to one.
fn clamped_degrees(g: &Graph) -> Vec<f64> {
    (0..g.n())
        .map(|i| {
            let d = g.neighbors(i).iter().filter(|&&j| j != i).count();
            d.max(1) as f64
        })
        .collect()
}

/// Dense `I − D^{-1/2} A D^{-1/2}` (self-loops ignored, isolated degrees clamped to 1).
pub fn normalized_laplacian(g: &Graph) -> Matrix {
    let n = g.n();
    let inv_sqrt: Vec<f64> = clamped_degrees(g).iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut l = Matrix::identity(n);
    for i in 0..n {
        for &j in g.neighbors(i) {
            if i != j {
                l[(i, j)] -= inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    l
}

/// Second eigenpair of the normalized Laplacian.
#[derive(Clone, Debug, PartialEq)]
pub struct Fiedler {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Eigenvector for the second-smallest eigenvalue of the normalized Laplacian.
///
/// The trivial direction `D^{1/2}·1` is deflated before the solve, so when the
/// smallest eigenvalue is repeated (disconnected graphs) the returned vector
/// is still orthogonal to it. The sign is fixed so that the first entry with
/// magnitude above `1e-9` is positive.
pub fn fiedler_vector(g: &Graph) -> Result<Fiedler> {
    let n = g.n();
    if n < 2 {
        return Err(invalid(format!("fiedler_vector needs at least 2 nodes, got {n}")));
    }
    if n > MAX_SPECTRAL_NODES {
        return Err(crate::error::Error::TooLarge(format!(
            "fiedler_vector: n = {n} exceeds {MAX_SPECTRAL_NODES}"
        )));
    }
    let l = normalized_laplacian(g);
    let deg = clamped_degrees(g);
    let norm = deg.iter().sum::<f64>().sqrt();
    let u: Vec<f64> = deg.iter().map(|d| d.sqrt() / norm).collect();
    let lu_max = (0..n)
        .map(|i| (0..n).map(|j| l[(i, j)] * u[j]).sum::<f64>().abs())
        .fold(0.0, f64::max);

    let (value, mut vector) = if lu_max < 1e-12 {
        // Shift the trivial eigenvalue 0 above the spectrum (which lies in [0, 2]).
        let mut shifted = l.clone();
        for i in 0..n {
            for j in 0..n {
                shifted[(i, j)] += 3.0 * u[i] * u[j];
            }
        }
        let (vals, vecs) = symmetric_eigen(&shifted)?;
        (vals[0], (0..n).map(|r| vecs[(r, 0)]).collect::<Vec<_>>())
    } else {
        let (vals, vecs) = symmetric_eigen(&l)?;
        (vals[1], (0..n).map(|r| vecs[(r, 1)]).collect::<Vec<_>>())
    };

    let len = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut vector {
        *x /= len;
    }
    if let Some(first) = vector.iter().find(|x| x.abs() > 1e-9) {
        if *first < 0.0 {
            for x in &mut vector {
                *x = -*x;
            }
        }
    }
    Ok(Fiedler { value, vector })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphstore::generators::{cycle, disjoint_union};

    fn residual(g: &Graph, f: &Fiedler) -> f64 {
        let l = normalized_laplacian(g);
        (0..g.n())
            .map(|i| {
                let lv: f64 = (0..g.n()).map(|j| l[(i, j)] * f.vector[j]).sum();
                (lv - f.value * f.vector[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_node_path() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let f = fiedler_vector(&g).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((f.vector[0] - s).abs() < 1e-12);
        assert!((f.vector[1] + s).abs() < 1e-12);
        assert!((f.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_k3() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let f = fiedler_vector(&g).unwrap();
        assert!((f.value - 1.5).abs() < 1e-10);
        assert!(residual(&g, &f) < 1e-10);
    }

    #[test]
    fn two_triangles_stay_orthogonal_to_trivial_vector() {
        let tri = cycle(3).unwrap();
        let g = disjoint_union(&tri, &tri).unwrap();
        let (vals, _) = symmetric_eigen(&normalized_laplacian(&g)).unwrap();
        assert!(vals[0].abs() < 1e-12 && vals[1].abs() < 1e-12 && vals[2] > 0.1);
        let f = fiedler_vector(&g).unwrap();
        assert!(f.value.abs() < 1e-12);
        let dot: f64 = f.vector.iter().sum::<f64>();
        assert!(dot.abs() < 1e-8);
        assert!(residual(&g, &f) < 1e-8);
    }

    #[test]
    fn rejects_single_node() {
        assert!(fiedler_vector(&Graph::empty(1)).is_err());
    }

    #[test]
    fn handles_isolated_nodes() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        let f = fiedler_vector(&g).unwrap();
        assert!(residual(&g, &f) < 1e-8);
        assert!(f.vector[0] > 0.0 || f.vector[0].abs() <= 1e-9);
    }
}
