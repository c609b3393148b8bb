use std::rc::Rc;

use crate::diffmath::{DiffValue, Matrix};
use crate::error::{invalid, Result};

/// Mean of `−log p(label)` over `mask`.
pub fn nll_loss<'t>(log_probs: DiffValue<'t>, labels: &[i64], mask: &[usize]) -> Result<DiffValue<'t>> {
    if mask.is_empty() {
        return Err(invalid("nll_loss: empty mask"));
    }
    let coords = mask
        .iter()
        .map(|&i| match labels.get(i) {
            Some(&y) if y >= 0 => Ok((i, y as usize)),
            _ => Err(invalid(format!("nll_loss: node {i} has no label"))),
        })
        .collect::<Result<Rc<[(usize, usize)]>>>()?;
    Ok(log_probs.pick_entries(coords)?.sum().scale(-1.0 / mask.len() as f64))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Fraction of masked nodes whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &Matrix, labels: &[i64], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(invalid("accuracy: empty mask"));
    }
    let hits = mask
        .iter()
        .filter(|&&i| labels[i] >= 0 && argmax(logits.row(i)) == labels[i] as usize)
        .count();
    Ok(hits as f64 / mask.len() as f64)
}

/// ROC AUC as the Mann–Whitney statistic, with tied scores given their
/// average rank. Labels in the mask must be 0 or 1 and both must occur.
pub fn roc_auc(scores: &[f64], labels: &[i64], mask: &[usize]) -> Result<f64> {
    let mut pairs = Vec::with_capacity(mask.len());
    for &i in mask {
        match labels[i] {
            0 | 1 => pairs.push((scores[i], labels[i] == 1)),
            y => return Err(invalid(format!("roc_auc: label {y} at node {i} is not binary"))),
        }
    }
    let pos = pairs.iter().filter(|p| p.1).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(invalid("roc_auc: mask must contain both classes"));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end].0 == pairs[start].0 {
            end += 1;
        }
        // Ranks start..end (0-based) share the average 1-based rank.
        let avg = (start + end + 1) as f64 / 2.0;
        rank_sum += avg * pairs[start..end].iter().filter(|p| p.1).count() as f64;
        start = end;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::{grad_check, Tape};

    #[test]
    fn uniform_log_probs_give_ln_c() {
        let tape = Tape::new();
        let lp = tape.leaf(Matrix::filled(3, 4, -(4f64).ln()));
        let loss = nll_loss(lp, &[0, 3, 2], &[0, 1, 2]).unwrap();
        assert!((loss.value()[(0, 0)] - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_predictions_have_zero_loss() {
        let tape = Tape::new();
        let lp = tape.leaf(Matrix::from_rows(&[vec![0.0, -50.0], vec![-50.0, 0.0]]));
        let loss = nll_loss(lp, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(loss.value()[(0, 0)], 0.0);
        assert!(nll_loss(lp, &[0, 1], &[]).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let logits = Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![1.5, 0.2, -0.4], vec![0.0, 0.1, 0.0]]);
        let err = grad_check(
            |_, p| nll_loss(p[0].log_softmax_rows(), &[2, 0, 1], &[0, 1, 2]),
            &[("logits", logits)],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn accuracy_breaks_ties_low() {
        let logits = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]);
        assert_eq!(accuracy(&logits, &[0, 1], &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[1, 1], &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn auc_cases() {
        let labels = [0, 1, 0, 1];
        let all = [0, 1, 2, 3];
        assert_eq!(roc_auc(&[0.5; 4], &labels, &all).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.0, 1.0, 0.0, 1.0], &labels, &all).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.1, 0.8, 0.2], &labels, &all).unwrap(), 0.0);
        assert!(roc_auc(&[0.1, 0.2], &[1, 1], &[0, 1]).is_err());
        assert!(roc_auc(&[0.1, 0.2], &[0, 2], &[0, 1]).is_err());
    }
}
