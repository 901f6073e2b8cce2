use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::mdp::ROW_SUM_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitivity {
    /// Smallest `N` with `P^N` entrywise positive.
    pub exponent: usize,
    /// Minimum entry of `P^N`.
    pub omega: f64,
}

/// Upper bound on the primitivity exponent of an `n x n` primitive matrix.
pub fn wielandt_bound(n: usize) -> usize {
    if n <= 1 {
        1
    } else {
        n * n - 2 * n + 2
    }
}

pub fn check_stochastic(p: &[Vec<f64>]) -> Result<(), AnalysisError> {
    let n = p.len();
    if n == 0 {
        return Err(AnalysisError::NotStochastic("empty matrix".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != n {
            return Err(AnalysisError::NotStochastic(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(AnalysisError::NotStochastic(format!("row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL * n as f64 {
            return Err(AnalysisError::NotStochastic(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

fn support(p: &[Vec<f64>], with_diagonal: bool) -> Vec<Vec<bool>> {
    p.iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, &x)| x > 0.0 || (with_diagonal && i == j)).collect())
        .collect()
}

/// Smallest `k <= limit` with `B^k` all true, by repeated boolean products.
fn boolean_exponent(b: &[Vec<bool>], limit: usize) -> Option<usize> {
    let n = b.len();
    let mut cur = b.to_vec();
    for k in 1..=limit {
        if cur.iter().all(|row| row.iter().all(|&x| x)) {
            return Some(k);
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for j in (0..n).filter(|&j| cur[i][j]) {
                for (l, &e) in b[j].iter().enumerate() {
                    next[i][l] |= e;
                }
            }
        }
        cur = next;
    }
    None
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let x = a[i][k];
            if x != 0.0 {
                for j in 0..n {
                    out[i][j] += x * b[k][j];
                }
            }
        }
    }
    out
}

pub fn mat_pow(p: &[Vec<f64>], mut k: usize) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut result: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut base = p.to_vec();
    while k > 0 {
        if k & 1 == 1 {
            result = mat_mul(&result, &base);
        }
        k >>= 1;
        if k > 0 {
            base = mat_mul(&base, &base);
        }
    }
    result
}

/// Primitivity exponent and `omega` of a row-stochastic matrix, or `None`
/// when the matrix is not primitive.
pub fn primitivity(p: &[Vec<f64>]) -> Result<Option<Primitivity>, AnalysisError> {
    check_stochastic(p)?;
    let n = p.len();
    let Some(exponent) = boolean_exponent(&support(p, false), wielandt_bound(n)) else {
        return Ok(None);
    };
    let omega = mat_pow(p, exponent)
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(Some(Primitivity { exponent, omega }))
}

/// Smallest `k >= 1` with `(supp(P) + I)^k` entrywise positive; `None` when
/// `P` is reducible.
pub fn lazy_exponent(p: &[Vec<f64>]) -> Result<Option<usize>, AnalysisError> {
    check_stochastic(p)?;
    let n = p.len();
    Ok(boolean_exponent(&support(p, true), n.max(1)))
}

/// Smallest positive entry.
pub fn min_positive(p: &[Vec<f64>]) -> f64 {
    p.iter().flatten().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min)
}
