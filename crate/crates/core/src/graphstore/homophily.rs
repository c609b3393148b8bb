use super::Dataset;
use crate::error::{invalid, Result};

fn labeled_edges(data: &Dataset) -> Result<Vec<(usize, usize)>> {
    let edges = data.graph.edges();
    for &(u, v) in &edges {
        for w in [u, v] {
            if data.labels[w] < 0 {
                return Err(invalid(format!("homophily: edge ({u}, {v}) has unlabeled endpoint {w}")));
            }
        }
    }
    if edges.is_empty() {
        return Err(invalid("homophily: graph has no edges"));
    }
    Ok(edges)
}

/// Fraction of undirected edges whose endpoints share a label.
pub fn edge_homophily(data: &Dataset) -> Result<f64> {
    let edges = labeled_edges(data)?;
    let same = edges.iter().filter(|&&(u, v)| data.labels[u] == data.labels[v]).count();
    Ok(same as f64 / edges.len() as f64)
}

/// Class-insensitive homophily of Lim et al.:
/// `1/(c-1) · Σ_k max(0, h_k − |C_k|/n)` where `h_k` is the share of
/// same-class neighbours over all edge endpoints in class `k`.
pub fn class_adjusted_homophily(data: &Dataset) -> Result<f64> {
    let edges = labeled_edges(data)?;
    let c = data.num_classes;
    if c < 2 {
        return Err(invalid("class-adjusted homophily needs at least 2 classes"));
    }
    let mut same = vec![0usize; c];
    let mut total = vec![0usize; c];
    for &(u, v) in &edges {
        let (yu, yv) = (data.labels[u] as usize, data.labels[v] as usize);
        total[yu] += 1;
        total[yv] += 1;
        if yu == yv {
            same[yu] += 2;
        }
    }
    let labeled = data.labels.iter().filter(|&&y| y >= 0).count() as f64;
    let mut size = vec![0usize; c];
    for &y in data.labels.iter().filter(|&&y| y >= 0) {
        size[y as usize] += 1;
    }
    let h: f64 = (0..c)
        .filter(|&k| total[k] > 0)
        .map(|k| (same[k] as f64 / total[k] as f64 - size[k] as f64 / labeled).max(0.0))
        .sum();
    Ok(h / (c - 1) as f64)
}
