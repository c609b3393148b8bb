use super::expand::{BaseModelWeights, MAX_LAYERS, MAX_NODES};
use crate::error::{invalid, Error, Result};

/// Row choices per layer: `rows[l][j] = Some(k)` puts a single 1 at
/// `W⁽ˡ⁺¹⁾[j][k]`; unset rows stay zero.
type Choice = Vec<Vec<Option<usize>>>;

/// Distinct sub-multisets of `counts` (value → multiplicity) of size `size`.
fn sub_multisets(counts: &[(usize, usize)], size: usize) -> Vec<Vec<usize>> {
    fn go(counts: &[(usize, usize)], size: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let Some((&(v, c), rest)) = counts.split_first() else {
            if size == 0 {
                out.push(acc.clone());
            }
            return;
        };
        for take in 0..=c.min(size) {
            acc.extend(std::iter::repeat_n(v, take));
            go(rest, size - take, acc, out);
            acc.truncate(acc.len() - take);
        }
    }
    let mut out = Vec::new();
    go(counts, size, &mut Vec::new(), &mut out);
    out
}

fn counts(sorted: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &v in sorted {
        match out.last_mut() {
            Some((u, c)) if *u == v => *c += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

fn minus(whole: &[usize], part: &[usize]) -> Vec<usize> {
    let mut rest = whole.to_vec();
    for v in part {
        let pos = rest.iter().position(|x| x == v).expect("part is a sub-multiset");
        rest.remove(pos);
    }
    rest
}

/// Tries to make node `j` after `l` layers equal the monomial `target`
/// (a sorted multiset of size `2^l`), extending `choice` consistently.
fn realize(l: usize, j: usize, target: &[usize], n: usize, choice: Choice) -> Option<Choice> {
    if l == 0 {
        return (target == [j]).then_some(choice);
    }
    if !target.contains(&j) {
        return None;
    }
    let half = target.len() / 2;
    let candidates: Vec<usize> = match choice[l - 1][j] {
        Some(k) => vec![k],
        None => (0..n).filter(|k| target.contains(k)).collect(),
    };
    let splits = sub_multisets(&counts(target), half);
    for k in candidates {
        for own in splits.iter().filter(|s| s.contains(&j)) {
            let other = minus(target, own);
            if !other.contains(&k) {
                continue;
            }
            let mut c = choice.clone();
            c[l - 1][j] = Some(k);
            if let Some(c) = realize(l - 1, j, own, n, c) {
                if let Some(c) = realize(l - 1, k, &other, n, c) {
                    return Some(c);
                }
            }
        }
    }
    None
}

/// 0/1 weights (`B = 0`) under which node `i` of the `L`-layer base model
/// outputs exactly `x_i · Π_k x_{targets[k]}`.
///
/// Each row of each `W` holds at most one 1, so every node polynomial is a
/// single monomial; a backtracking search picks the rows.
pub fn select_monomial_params(i: usize, targets: &[usize], n: usize, layers: usize) -> Result<BaseModelWeights> {
    if n == 0 || n > MAX_NODES || layers == 0 || layers > MAX_LAYERS {
        return Err(Error::TooLarge(format!(
            "select_monomial_params supports 1 <= n <= {MAX_NODES} and 1 <= L <= {MAX_LAYERS}"
        )));
    }
    if i >= n || targets.iter().any(|&t| t >= n) {
        return Err(invalid(format!("node indices must lie in [0, {n})")));
    }
    let want = (1usize << layers) - 1;
    if targets.len() != want {
        return Err(invalid(format!(
            "{layers} layers need {want} target indices, got {}",
            targets.len()
        )));
    }
    let mut full: Vec<usize> = targets.to_vec();
    full.push(i);
    full.sort_unstable();
    let choice = realize(layers, i, &full, n, vec![vec![None; n]; layers])
        .ok_or_else(|| invalid(format!("no 0/1 parameterization reaches x_{i}·{targets:?}")))?;
    let mut weights = BaseModelWeights::zeros(n, layers);
    for (l, rows) in choice.iter().enumerate() {
        for (j, k) in rows.iter().enumerate() {
            if let Some(k) = *k {
                weights.w[l][(j, k)] = 1.0;
            }
        }
    }
    Ok(weights)
}

/// Two-layer weights under which node `i` outputs exactly `x_i² x_j` (`i ≠ j`).
///
/// Layer 1 gives `X_i = x_i x_j` and `X_j = x_i (x_j − 1)`; layer 2 reads
/// `X_i − X_j = x_i` and multiplies by `X_i`.
pub fn square_times_witness(i: usize, j: usize, n: usize) -> Result<BaseModelWeights> {
    if i == j || i >= n || j >= n {
        return Err(invalid(format!("need distinct nodes below {n}, got {i} and {j}")));
    }
    let mut w = BaseModelWeights::zeros(n, 2);
    w.w[0][(i, j)] = 1.0;
    w.w[0][(j, i)] = 1.0;
    w.b[0][j] = -1.0;
    w.w[1][(i, i)] = 1.0;
    w.w[1][(i, j)] = -1.0;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyoracle::base_expand;

    fn exps(n: usize, idx: &[usize]) -> Vec<u32> {
        let mut e = vec![0; n];
        for &k in idx {
            e[k] += 1;
        }
        e
    }

    #[test]
    fn single_layer_target() {
        let w = select_monomial_params(0, &[2], 3, 1).unwrap();
        let p = &base_expand(&w, 3).unwrap()[0];
        assert_eq!(p.num_terms(), 1);
        assert_eq!(p.coefficient(&exps(3, &[0, 2])), 1.0);
    }

    #[test]
    fn two_layer_target() {
        let w = select_monomial_params(0, &[1, 2, 2], 3, 2).unwrap();
        let p = &base_expand(&w, 3).unwrap()[0];
        assert_eq!(p.num_terms(), 1);
        assert_eq!(p.coefficient(&exps(3, &[0, 1, 2, 2])), 1.0);
    }

    #[test]
    fn three_layer_target() {
        let w = select_monomial_params(1, &[0, 0, 2, 3, 3, 1, 2], 4, 3).unwrap();
        let p = &base_expand(&w, 4).unwrap()[1];
        assert_eq!(p.num_terms(), 1);
        assert_eq!(p.coefficient(&exps(4, &[1, 0, 0, 2, 3, 3, 1, 2])), 1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(select_monomial_params(3, &[0], 3, 1).is_err());
        assert!(select_monomial_params(0, &[0, 1], 3, 1).is_err());
    }

    #[test]
    fn witness_is_exact() {
        let w = square_times_witness(0, 1, 2).unwrap();
        let p = &base_expand(&w, 2).unwrap()[0];
        assert_eq!(p.num_terms(), 1);
        assert_eq!(p.coefficient(&[2, 1]), 1.0);
    }
}
