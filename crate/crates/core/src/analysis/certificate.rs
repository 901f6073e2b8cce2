use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bellman::bellman_optimal;
use crate::error::AnalysisError;
use crate::mdp::{ActionSet, Mdp, ValueVector, ADV_TOL};
use crate::solvers::{solve_exact, ExactSolution, RunTrace};
use crate::transforms::effective_gamma;

use super::primitivity::{lazy_exponent, min_positive, primitivity};

/// Terms specific to runs with a learning rate below one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTerms {
    pub alpha: f64,
    pub n_alpha: usize,
    /// Smallest positive entry of `P*`.
    pub p_min: f64,
    pub delta_prime: f64,
    pub delta_alpha: f64,
    pub tau_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub n: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Primitivity exponent of `P*`.
    pub exponent: usize,
    pub omega: f64,
    pub delta: f64,
    /// `omega * prod_{t<N} min(1, delta / (gamma span(e_t)))`.
    pub phi: Option<f64>,
    /// `omega delta^N / (gamma^N prod_{t=1..N} span(e_t))`, unclamped.
    pub phi_literal: Option<f64>,
    pub tau: Option<f64>,
    /// Length of the checked block (`N`, or `N_alpha`).
    pub block_len: usize,
    /// Contraction factor claimed for the block.
    pub block_factor: f64,
    pub span_start: f64,
    pub span_end: f64,
    /// `block_factor * span_start - span_end`.
    pub margin: f64,
    pub holds: bool,
    pub epsilon: f64,
    pub predicted_vi_iters: f64,
    pub gamma_eff: f64,
    pub predicted_pi_iters: f64,
    pub alpha: Option<AlphaTerms>,
    pub trace_hash: String,
}

/// Iterations after which a span contracting by `gamma` per step and by
/// `tau` per block of `block` steps falls below `eps`.
pub fn predicted_vi_iterations(gamma: f64, eps: f64, tau: f64, block: usize) -> f64 {
    let num = (1.0 / eps).ln() + (1.0 / (1.0 - gamma)).ln();
    let den = (1.0 / gamma).ln() + (1.0 / tau.max(f64::MIN_POSITIVE)).ln() / block as f64;
    num / den
}

/// SHA-256 over gamma, alpha and every recorded value vector.
pub fn trace_hash(trace: &RunTrace) -> String {
    let mut h = Sha256::new();
    h.update(trace.gamma.to_le_bytes());
    h.update(trace.alpha.to_le_bytes());
    for r in &trace.records {
        h.update((r.t as u64).to_le_bytes());
        for x in r.values.iter() {
            h.update(x.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Setup {
    exact: ExactSolution,
    p_star: Vec<Vec<f64>>,
    exponent: usize,
    omega: f64,
}

fn setup(mdp: &Mdp) -> Result<Setup, AnalysisError> {
    let exact = solve_exact(mdp)?;
    if !(exact.delta > ADV_TOL) {
        return Err(AnalysisError::Assumption(format!(
            "optimal policy is not unique (delta = {:e})",
            exact.delta
        )));
    }
    let (p_star, _) = mdp.policy_matrix(&exact.policy);
    let prim = primitivity(&p_star)?
        .ok_or_else(|| AnalysisError::Assumption("optimal chain is not irreducible and aperiodic".into()))?;
    Ok(Setup {
        exact,
        p_star,
        exponent: prim.exponent,
        omega: prim.omega,
    })
}

/// Confirms that the first `steps` updates of `trace` are synchronous
/// backups of `mdp` with learning rate `alpha`.
fn check_dynamics(mdp: &Mdp, trace: &RunTrace, steps: usize) -> Result<(), AnalysisError> {
    if trace.iterations() < steps {
        return Err(AnalysisError::TraceTooShort {
            needed: steps,
            have: trace.iterations(),
        });
    }
    let full = ActionSet::full(mdp);
    let a = trace.alpha;
    for w in trace.records[..=steps].windows(2) {
        let v = &w[0].values;
        mdp.check_dims(v)?;
        let (tv, _) = bellman_optimal(mdp, v, &full)?;
        let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for s in 0..mdp.n_states() {
            let expect = (1.0 - a) * v[s] + a * tv[s];
            if (expect - w[1].values[s]).abs() > 1e-9 * scale {
                return Err(AnalysisError::Assumption(format!(
                    "trace step {} is not a synchronous backup of this model",
                    w[1].t
                )));
            }
        }
    }
    Ok(())
}

fn error_spans(trace: &RunTrace, v_star: &ValueVector, upto: usize) -> Vec<f64> {
    trace.records[..=upto].iter().map(|r| r.values.sub(v_star).span()).collect()
}

/// Lower bound on the mixing weight of the optimal matrix at step `t`.
fn mixing_weight(delta: f64, gamma: f64, span_e: f64) -> f64 {
    if span_e == 0.0 {
        1.0
    } else {
        (delta / (gamma * span_e)).min(1.0)
    }
}

/// Certificate for a standard (`alpha = 1`) synchronous trace.
///
/// Spans are measured on `e_t = V_t - V*`, which is the trace of the
/// normalized model, so `mdp` need not be normalized.
pub fn certify(mdp: &Mdp, trace: &RunTrace, epsilon: f64) -> Result<ConvergenceCertificate, AnalysisError> {
    if trace.alpha != 1.0 {
        return Err(AnalysisError::Assumption("trace uses a learning rate; use certify_alpha".into()));
    }
    let st = setup(mdp)?;
    let n_big = st.exponent;
    check_dynamics(mdp, trace, n_big)?;
    let g = mdp.gamma();
    let delta = st.exact.delta;
    let spans = error_spans(trace, &st.exact.values, n_big);
    let phi = st.omega * spans[..n_big].iter().map(|&s| mixing_weight(delta, g, s)).product::<f64>();
    let phi_literal = st.omega * delta.powi(n_big as i32)
        / (g.powi(n_big as i32) * spans[1..=n_big].iter().product::<f64>());
    let n = mdp.n_states();
    let tau = 1.0 - n as f64 * phi;
    let block_factor = g.powi(n_big as i32) * tau;
    let ge = effective_gamma(mdp)?;
    Ok(finish(
        mdp,
        trace,
        &st,
        Partial {
            phi: Some(phi),
            phi_literal: Some(phi_literal),
            tau: Some(tau),
            block_len: n_big,
            block_factor,
            spans,
            epsilon,
            predicted_vi_iters: predicted_vi_iterations(g, epsilon, tau, n_big),
            gamma_eff: ge.gamma_eff,
            alpha: None,
        },
    ))
}

/// Certificate for a synchronous trace with learning rate `alpha` in (0, 1).
pub fn certify_alpha(
    mdp: &Mdp,
    trace: &RunTrace,
    alpha: f64,
    epsilon: f64,
) -> Result<ConvergenceCertificate, AnalysisError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::AlphaOutOfRange(alpha));
    }
    if (trace.alpha - alpha).abs() > 0.0 {
        return Err(AnalysisError::Assumption(format!(
            "trace was produced with alpha = {}, not {alpha}",
            trace.alpha
        )));
    }
    let st = setup(mdp)?;
    let n_alpha = lazy_exponent(&st.p_star)?
        .ok_or_else(|| AnalysisError::Assumption("optimal chain is not irreducible".into()))?;
    check_dynamics(mdp, trace, n_alpha)?;
    let g = mdp.gamma();
    let n = mdp.n_states();
    let delta = st.exact.delta;
    let spans = error_spans(trace, &st.exact.values, n_alpha);
    let p_min = min_positive(&st.p_star);
    let d_min = spans[..n_alpha]
        .iter()
        .map(|&s| mixing_weight(delta, g, s))
        .fold(1.0f64, f64::min);
    let delta_prime = p_min * d_min;
    let delta_alpha = (alpha * delta_prime).min((1.0 - alpha) * g);
    let k = n_alpha as i32;
    let tau_alpha = ((1.0 - alpha) / g + alpha).powi(k) - n as f64 * delta_alpha.powi(k);
    let block_factor = g.powi(k) * tau_alpha;
    let ge = effective_gamma(mdp)?;
    Ok(finish(
        mdp,
        trace,
        &st,
        Partial {
            phi: None,
            phi_literal: None,
            tau: None,
            block_len: n_alpha,
            block_factor,
            spans,
            epsilon,
            predicted_vi_iters: predicted_vi_iterations(g, epsilon, tau_alpha, n_alpha),
            gamma_eff: ge.gamma_eff,
            alpha: Some(AlphaTerms {
                alpha,
                n_alpha,
                p_min,
                delta_prime,
                delta_alpha,
                tau_alpha,
            }),
        },
    ))
}

struct Partial {
    phi: Option<f64>,
    phi_literal: Option<f64>,
    tau: Option<f64>,
    block_len: usize,
    block_factor: f64,
    spans: Vec<f64>,
    epsilon: f64,
    predicted_vi_iters: f64,
    gamma_eff: f64,
    alpha: Option<AlphaTerms>,
}

fn finish(mdp: &Mdp, trace: &RunTrace, st: &Setup, p: Partial) -> ConvergenceCertificate {
    let span_start = p.spans[0];
    let span_end = p.spans[p.block_len];
    let margin = p.block_factor * span_start - span_end;
    ConvergenceCertificate {
        n: mdp.n_states(),
        n_actions: mdp.n_actions(),
        gamma: mdp.gamma(),
        exponent: st.exponent,
        omega: st.omega,
        delta: st.exact.delta,
        phi: p.phi,
        phi_literal: p.phi_literal,
        tau: p.tau,
        block_len: p.block_len,
        block_factor: p.block_factor,
        span_start,
        span_end,
        margin,
        holds: margin >= -1e-12 * (1.0 + span_start),
        epsilon: p.epsilon,
        predicted_vi_iters: p.predicted_vi_iters,
        gamma_eff: p.gamma_eff,
        predicted_pi_iters: mdp.n_actions() as f64 / (1.0 - p.gamma_eff),
        alpha: p.alpha,
        trace_hash: trace_hash(trace),
    }
}
