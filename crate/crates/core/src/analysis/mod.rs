//! Convergence certificates, predicted iteration counts and numeric checks
//! of the contraction arguments.

mod certificate;
mod checks;
mod primitivity;

pub use certificate::{certify, certify_alpha, predicted_vi_iterations, trace_hash, AlphaTerms, ConvergenceCertificate};
pub use checks::{
    check_error_recursion, check_adv_span_bound, check_mixing_bound, empirical_rate, AdvSpanReport, MixingReport, RecursionReport, DEFAULT_BURN_IN, SPAN_FLOOR,
};
pub use primitivity::{check_stochastic, lazy_exponent, mat_pow, min_positive, primitivity, wielandt_bound, Primitivity};
