#![allow(dead_code)]

use std::io::Write;

use mdpgeo::{Action, Mdp};

/// Writes straight to stdout so the line survives test output capture.
pub fn report(criterion: usize, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance criterion {criterion}: {verdict} ({detail})");
    let _ = out.flush();
}

/// `r + gamma p.v - v(s)`, from the raw action.
pub fn adv_oracle(a: &Action, gamma: f64, v: &[f64]) -> f64 {
    let pv: f64 = a.probs.iter().zip(v).map(|(p, x)| p * x).sum();
    a.reward + gamma * pv - v[a.state]
}

pub fn span_oracle(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Values after rediscounting state `s` from `gamma` to `gamma_new`.
pub fn rediscount_values_oracle(v: &[f64], s: usize, gamma: f64, gamma_new: f64) -> Vec<f64> {
    let k = (1.0 - gamma) / (1.0 - gamma_new);
    let lift = (k - 1.0) * v[s];
    v.iter()
        .enumerate()
        .map(|(i, &x)| if i == s { k * x } else { x + lift })
        .collect()
}

/// Solves `(I - gamma P) v = r` by Gaussian elimination with partial pivoting.
pub fn evaluate_oracle(mdp: &Mdp, choice: &[usize]) -> Vec<f64> {
    let n = mdp.n_states();
    let g = mdp.gamma();
    let mut a = vec![vec![0.0; n + 1]; n];
    for s in 0..n {
        let act = &mdp.actions()[choice[s]];
        for j in 0..n {
            a[s][j] = if s == j { 1.0 } else { 0.0 } - g * act.probs[j];
        }
        a[s][n] = act.reward;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Optimal values by enumerating every deterministic policy.
pub fn brute_force_oracle(mdp: &Mdp) -> (Vec<usize>, Vec<f64>) {
    let n = mdp.n_states();
    let per_state: Vec<Vec<usize>> = (0..n)
        .map(|s| (0..mdp.n_actions()).filter(|&i| mdp.actions()[i].state == s).collect())
        .collect();
    let mut idx = vec![0usize; n];
    let mut best: Option<(Vec<usize>, Vec<f64>)> = None;
    loop {
        let choice: Vec<usize> = (0..n).map(|s| per_state[s][idx[s]]).collect();
        let v = evaluate_oracle(mdp, &choice);
        let total: f64 = v.iter().sum();
        if best.as_ref().is_none_or(|(_, b)| total > b.iter().sum::<f64>()) {
            best = Some((choice, v));
        }
        let mut s = n;
        loop {
            if s == 0 {
                return best.unwrap();
            }
            s -= 1;
            idx[s] += 1;
            if idx[s] < per_state[s].len() {
                break;
            }
            idx[s] = 0;
        }
    }
}
