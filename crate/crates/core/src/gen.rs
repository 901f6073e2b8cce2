//! Seeded random MDP generators.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::evaluate_policy;
use crate::error::GenError;
use crate::mdp::{Action, ActionId, Mdp, Policy, StateId};
use crate::solvers::solve_exact;

/// Attempts made to plant an optimal policy before giving up.
pub const PLANT_ATTEMPTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Structure {
    /// Every transition probability positive.
    Dense,
    /// `k` successor states per action.
    Sparse { k: usize },
    /// Dense rows; the first action of every state is made optimal with gap
    /// at least `beta`.
    PlantedOptimal { beta: f64 },
    /// Like `PlantedOptimal`, but the planted policy moves `s -> s + 1 (mod n)`.
    PeriodicOptimal { beta: f64 },
    /// Planted policy on the cycle with one shortcut `n-1 -> 1`.
    Wielandt { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub n_states: usize,
    /// Inclusive range of actions per state.
    pub actions_per_state: (usize, usize),
    pub gamma: f64,
    pub seed: u64,
    pub structure: Structure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub mdp: Mdp,
    /// Planted optimal policy, if the structure plants one.
    pub planted: Option<Policy>,
    /// Gap target used by the successful planting attempt.
    pub beta: Option<f64>,
}

impl GenSpec {
    pub fn new(n_states: usize, actions_per_state: (usize, usize), gamma: f64, seed: u64, structure: Structure) -> Self {
        Self {
            n_states,
            actions_per_state,
            gamma,
            seed,
            structure,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Spec(m));
        let n = self.n_states;
        let (lo, hi) = self.actions_per_state;
        if n == 0 {
            return bad("n_states must be positive".into());
        }
        if lo == 0 || lo > hi {
            return bad(format!("bad actions_per_state range ({lo}, {hi})"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        match self.structure {
            Structure::Sparse { k } if k == 0 || k > n => bad(format!("sparse k = {k} outside 1..={n}")),
            Structure::PlantedOptimal { beta } | Structure::PeriodicOptimal { beta } | Structure::Wielandt { beta }
                if !(beta > 0.0 && beta.is_finite()) =>
            {
                bad(format!("beta {beta} must be positive"))
            }
            Structure::PeriodicOptimal { .. } | Structure::Wielandt { .. } if n < 2 => {
                bad("cyclic structures need at least 2 states".into())
            }
            _ => Ok(()),
        }
    }
}

pub fn round_reward(r: f64) -> f64 {
    (r * 1e6).round() / 1e6
}

fn floor_reward(r: f64) -> f64 {
    (r * 1e6).floor() / 1e6
}

fn dense_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let u: Vec<f64> = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let sum: f64 = u.iter().sum();
    u.into_iter().map(|x| x / sum).collect()
}

fn sparse_row(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<f64> {
    let support = sample(rng, n, k).into_vec();
    let u: Vec<f64> = support.iter().map(|_| 1.0 - rng.gen::<f64>()).collect();
    let sum: f64 = u.iter().sum();
    let mut row = vec![0.0; n];
    for (&j, x) in support.iter().zip(u) {
        row[j] = x / sum;
    }
    row
}

fn cyclic_row(n: usize, s: StateId, wielandt: bool) -> Vec<f64> {
    let mut row = vec![0.0; n];
    if wielandt && s == n - 1 {
        row[0] = 0.5;
        row[1] = 0.5;
    } else {
        row[(s + 1) % n] = 1.0;
    }
    row
}

/// Generates an MDP; identical specs give identical models.
pub fn generate(spec: &GenSpec) -> Result<Mdp, GenError> {
    generate_with_info(spec).map(|g| g.mdp)
}

pub fn generate_with_info(spec: &GenSpec) -> Result<Generated, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_states;
    let (lo, hi) = spec.actions_per_state;
    let counts: Vec<usize> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    let planted_beta = match spec.structure {
        Structure::PlantedOptimal { beta } | Structure::PeriodicOptimal { beta } | Structure::Wielandt { beta } => Some(beta),
        _ => None,
    };
    let mut actions = Vec::new();
    for (s, &m) in counts.iter().enumerate() {
        for j in 0..m {
            let probs = match spec.structure {
                Structure::Sparse { k } => sparse_row(&mut rng, n, k),
                Structure::PeriodicOptimal { .. } if j == 0 => cyclic_row(n, s, false),
                Structure::Wielandt { .. } if j == 0 => cyclic_row(n, s, true),
                _ => dense_row(&mut rng, n),
            };
            let reward = round_reward(rng.gen::<f64>());
            actions.push(Action::new(format!("s{s}a{j}"), s, probs, reward));
        }
    }
    let mdp = Mdp::new(n, spec.gamma, actions)?;
    let Some(beta0) = planted_beta else {
        return Ok(Generated {
            mdp,
            planted: None,
            beta: None,
        });
    };
    let planted = Policy::new((0..n).map(|s| mdp.actions_at(s)[0]).collect());
    let mut beta = beta0;
    for _ in 0..PLANT_ATTEMPTS {
        let candidate = plant(&mdp, &planted, beta)?;
        let sol = solve_exact(&candidate)?;
        if sol.policy.same_actions(&planted) && sol.delta >= beta0 / 2.0 {
            return Ok(Generated {
                mdp: candidate,
                planted: Some(planted),
                beta: Some(beta),
            });
        }
        beta *= 2.0;
    }
    Err(GenError::PlantingFailed(PLANT_ATTEMPTS))
}

/// Lowers every non-planted reward until its advantage at the planted
/// values is at most `-beta`.
fn plant(mdp: &Mdp, planted: &Policy, beta: f64) -> Result<Mdp, GenError> {
    let v = evaluate_policy(mdp, planted)?;
    let actions: Vec<Action> = mdp
        .actions()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let id = ActionId(i);
            let mut a = a.clone();
            if !planted.contains(id) {
                let adv = mdp.advantage_unchecked(id, &v);
                if adv > -beta {
                    a.reward = floor_reward(a.reward - adv - beta);
                }
            }
            a
        })
        .collect();
    Ok(Mdp::new(mdp.n_states(), mdp.gamma(), actions)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::primitivity;

    fn spec(n: usize, structure: Structure) -> GenSpec {
        GenSpec::new(n, (1, 4), 0.95, 7, structure)
    }

    #[test]
    fn dense_has_positive_rows() {
        let m = generate(&spec(4, Structure::Dense)).unwrap();
        assert!(m.actions().iter().all(|a| a.probs.iter().all(|&p| p > 0.0)));
        let sol = solve_exact(&m).unwrap();
        let (p, _) = m.policy_matrix(&sol.policy);
        assert_eq!(primitivity(&p).unwrap().unwrap().exponent, 1);
    }

    #[test]
    fn same_spec_same_model() {
        let s = spec(5, Structure::Sparse { k: 2 });
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(generate(&s).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn sparse_rows_have_k_successors() {
        let m = generate(&spec(6, Structure::Sparse { k: 3 })).unwrap();
        assert!(m.actions().iter().all(|a| a.probs.iter().filter(|&&p| p > 0.0).count() == 3));
    }

    #[test]
    fn rewards_are_rounded() {
        let m = generate(&spec(3, Structure::Dense)).unwrap();
        for a in m.actions() {
            assert!((a.reward * 1e6 - (a.reward * 1e6).round()).abs() < 1e-6);
            assert!((0.0..=1.0).contains(&a.reward));
        }
    }

    #[test]
    fn planted_policy_is_optimal_with_gap() {
        for seed in 0..20 {
            let s = GenSpec::new(4, (2, 4), 0.9, seed, Structure::PlantedOptimal { beta: 0.05 });
            let g = generate_with_info(&s).unwrap();
            let sol = solve_exact(&g.mdp).unwrap();
            assert!(sol.policy.same_actions(g.planted.as_ref().unwrap()));
            assert!(sol.delta >= 0.025);
        }
    }

    #[test]
    fn periodic_optimum_is_not_primitive() {
        let s = GenSpec::new(3, (1, 3), 0.9, 3, Structure::PeriodicOptimal { beta: 0.1 });
        let m = generate(&s).unwrap();
        let sol = solve_exact(&m).unwrap();
        let (p, _) = m.policy_matrix(&sol.policy);
        assert_eq!(primitivity(&p).unwrap(), None);
    }

    #[test]
    fn wielandt_optimum_attains_bound() {
        for n in 4..=6 {
            let s = GenSpec::new(n, (1, 3), 0.9, n as u64, Structure::Wielandt { beta: 0.1 });
            let m = generate(&s).unwrap();
            let sol = solve_exact(&m).unwrap();
            let (p, _) = m.policy_matrix(&sol.policy);
            assert_eq!(primitivity(&p).unwrap().unwrap().exponent, n * n - 2 * n + 2);
        }
    }

    #[test]
    fn spec_errors() {
        assert!(generate(&spec(0, Structure::Dense)).is_err());
        assert!(generate(&spec(3, Structure::Sparse { k: 4 })).is_err());
        assert!(generate(&spec(3, Structure::PlantedOptimal { beta: 0.0 })).is_err());
        assert!(generate(&GenSpec::new(3, (2, 1), 0.9, 0, Structure::Dense)).is_err());
        assert!(generate(&GenSpec::new(3, (1, 2), 1.0, 0, Structure::Dense)).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = spec(3, Structure::Wielandt { beta: 0.2 });
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<GenSpec>(&text).unwrap(), s);
    }
}
