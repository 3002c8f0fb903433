//! Clustering evaluation: accuracy under the best label matching, NMI and ARI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of (predicted cluster, true class) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Argument(format!(
                "{} predictions for {} labels",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Argument("cannot evaluate an empty labeling".into()));
        }
        let rows = pred.iter().max().unwrap() + 1;
        let cols = truth.iter().max().unwrap() + 1;
        let mut counts = vec![vec![0u64; cols]; rows];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        Ok(Self {
            counts,
            n: pred.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let mut out = vec![0; self.counts[0].len()];
        for row in &self.counts {
            for (o, &c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method,
/// O(n^3)). Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of samples matched under the best one-to-one cluster-to-class mapping.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let size = table.counts.len().max(table.counts[0].len());
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| {
                    let c = table.counts.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0);
                    -(c as f64)
                })
                .collect()
        })
        .collect();
    let matched: f64 = min_cost_assignment(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| -cost[i][j])
        .sum();
    Ok(matched / table.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let n = table.n as f64;
    let a = table.row_sums();
    let b = table.col_sums();
    let (ha, hb) = (entropy(&a, n), entropy(&b, n));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (a[i] as f64 * b[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

fn choose2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let index: f64 = table.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let sa: f64 = table.row_sums().into_iter().map(choose2).sum();
    let sb: f64 = table.col_sums().into_iter().map(choose2).sum();
    let total = choose2(table.n);
    // Scaled by C(n, 2) so that every intermediate is an exact integer or half-integer.
    let expected = sa * sb;
    let max = 0.5 * (sa + sb) * total;
    if max == expected {
        // Both partitions trivial in the same way (e.g. identical single clusters).
        return Ok(if index * total == max { 1.0 } else { 0.0 });
    }
    Ok((index * total - expected) / (max - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Scores> {
    Ok(Scores {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn perfect_and_relabeled() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let relabeled = [2, 2, 0, 0, 1, 1, 1];
        for pred in [&truth, &relabeled] {
            let s = evaluate(pred, &truth).unwrap();
            assert_abs_diff_eq!(s.acc, 1.0);
            assert_abs_diff_eq!(s.nmi, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.ari, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn four_sample_examples() {
        assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.75);
        let s = evaluate(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(s.acc, 0.5);
        assert_eq!(s.nmi, 0.0);
        assert_eq!(s.ari, -0.5);
    }

    #[test]
    fn degenerate_partitions() {
        assert_eq!(nmi(&[0, 1, 2, 3], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 0], &[0, 0, 0]).unwrap(), 1.0);
        assert!(accuracy(&[0, 1], &[0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(0..k, n)
    }

    proptest! {
        #[test]
        fn symmetric_and_label_invariant(pred in labels(12, 4), truth in labels(12, 3)) {
            prop_assert!((ari(&pred, &truth).unwrap() - ari(&truth, &pred).unwrap()).abs() < 1e-12);
            prop_assert!((nmi(&pred, &truth).unwrap() - nmi(&truth, &pred).unwrap()).abs() < 1e-12);
            let relabeled: Vec<usize> = pred.iter().map(|&p| (p + 1) % 4 + 4).collect();
            let a = evaluate(&pred, &truth).unwrap();
            let b = evaluate(&relabeled, &truth).unwrap();
            prop_assert!((a.acc - b.acc).abs() < 1e-12);
            prop_assert!((a.nmi - b.nmi).abs() < 1e-12);
            prop_assert!((a.ari - b.ari).abs() < 1e-12);
        }

        #[test]
        fn joint_permutation_invariance(pred in labels(9, 3), truth in labels(9, 3), shift in 1usize..9) {
            let rot = |v: &[usize]| -> Vec<usize> { (0..v.len()).map(|i| v[(i + shift) % v.len()]).collect() };
            let a = evaluate(&pred, &truth).unwrap();
            let b = evaluate(&rot(&pred), &rot(&truth)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
