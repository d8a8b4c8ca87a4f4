//! Optimal one-to-one assignment and the clustering accuracy built on it.

use crate::error::{Error, Result};

/// Minimum-cost perfect matching on a square integer cost matrix.
///
/// Returns `m` with row `r` matched to column `m[r]`. Runs the
/// potential-based Hungarian method in O(n³).
pub fn solve_assignment(cost: &[Vec<i64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::shape("assignment cost matrix must be square"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based arrays; column 0 is a virtual start.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = i64::MAX;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for col in 1..=n {
        out[owner[col] - 1] = col - 1;
    }
    Ok(out)
}

/// Map arbitrary ids to 0..count in ascending id order.
pub(crate) fn densify(ids: &[usize]) -> (Vec<usize>, usize) {
    let mut uniq: Vec<usize> = ids.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let dense = ids
        .iter()
        .map(|id| uniq.binary_search(id).expect("id present"))
        .collect();
    (dense, uniq.len())
}

pub(crate) fn check_lengths(y: &[usize], c: &[usize]) -> Result<()> {
    if y.len() != c.len() {
        return Err(Error::shape(format!(
            "{} labels but {} cluster ids",
            y.len(),
            c.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("need at least one sample"));
    }
    Ok(())
}

/// Fraction of samples whose cluster maps to their class under the best
/// one-to-one mapping of cluster ids to classes.
pub fn hungarian_accuracy(y: &[usize], c: &[usize]) -> Result<f64> {
    check_lengths(y, c)?;
    let (y, ky) = densify(y);
    let (c, kc) = densify(c);
    let k = ky.max(kc);
    let mut counts = vec![vec![0i64; k]; k];
    for (&yi, &ci) in y.iter().zip(&c) {
        counts[ci][yi] += 1;
    }
    let cost: Vec<Vec<i64>> = counts
        .iter()
        .map(|r| r.iter().map(|&n| -n).collect())
        .collect();
    let m = solve_assignment(&cost)?;
    let hits: i64 = m.iter().enumerate().map(|(ci, &yi)| counts[ci][yi]).sum();
    Ok(hits as f64 / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        assert_eq!(hungarian_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(hungarian_accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(hungarian_accuracy(&[3, 1, 4, 1, 5], &[3, 1, 4, 1, 5]).unwrap(), 1.0);
    }

    #[test]
    fn more_clusters_than_classes() {
        // Two of the three clusters can be used; the best keeps 3 of 4.
        assert_eq!(hungarian_accuracy(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap(), 0.75);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(hungarian_accuracy(&[0, 1], &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn assignment_3x3() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let m = solve_assignment(&cost).unwrap();
        let total: i64 = m.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5);
    }
}
