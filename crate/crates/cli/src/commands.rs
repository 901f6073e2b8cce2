use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mdpgeo::analysis::{certify, certify_alpha, ConvergenceCertificate};
use mdpgeo::gen::{generate, GenSpec, Structure};
use mdpgeo::transforms::{effective_gamma, normalize, TransformLog};
use mdpgeo::twostate::{inefficiency_certificate, random_suite, verify_pi_bound, Inefficiency, PiBoundReport, SuiteReport};
use mdpgeo::{
    policy_iteration, value_iteration, ActionSet, Mdp, Policy, RunTrace, SolverError, Stop, ValueVector,
    ViConfig,
};
use mdpgeo::solvers::{Filter, InitialValues, Schedule};
use serde::Serialize;

use crate::error::{CliError, EXIT_CAP, EXIT_OK};
use crate::files::{self, emit, read_mdp, to_json, MdpFile};

#[derive(Debug, Parser)]
#[command(name = "mdpgeo", version, about = "Value and policy iteration on finite discounted MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run value iteration.
    SolveVi(SolveViArgs),
    /// Run policy iteration.
    SolvePi(SolvePiArgs),
    /// Normalize a model so the optimal values are zero.
    Normalize(NormalizeArgs),
    /// Lower the discount factor as far as the transforms allow.
    GammaEff(GammaEffArgs),
    /// Convergence certificate for a value-iteration trace.
    Certify(CertifyArgs),
    /// Generate a random model.
    Generate(GenerateArgs),
    /// Two-state policy-iteration bounds.
    Twostate(TwostateArgs),
}

#[derive(Debug, Args)]
pub struct SolveViArgs {
    /// Model file (JSON).
    #[arg(long, env = "MDPGEO_MDP")]
    pub mdp: PathBuf,
    /// Step size in (0, 1].
    #[arg(long, env = "MDPGEO_ALPHA", default_value_t = 1.0)]
    pub alpha: f64,
    /// time:T, span:EPS, value-span:EPS or actions.
    #[arg(long, env = "MDPGEO_STOP", value_parser = parse_stop)]
    pub stop: Stop,
    /// none or appendix.
    #[arg(long, env = "MDPGEO_FILTER", default_value = "none", value_parser = parse_filter)]
    pub filter: Filter,
    /// sync or rr:K.
    #[arg(long, env = "MDPGEO_SCHEDULE", default_value = "sync", value_parser = parse_schedule)]
    pub schedule: Schedule,
    /// zeros, upper or file:PATH (JSON array of numbers).
    #[arg(long, env = "MDPGEO_V0", default_value = "zeros")]
    pub v0: String,
    /// Overrides the default iteration cap.
    #[arg(long, env = "MDPGEO_MAX_ITERS")]
    pub max_iters: Option<usize>,
    /// Trace output (CSV).
    #[arg(long, env = "MDPGEO_TRACE")]
    pub trace: Option<PathBuf>,
    /// Result output (JSON); stdout when absent.
    #[arg(long, env = "MDPGEO_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolvePiArgs {
    #[arg(long, env = "MDPGEO_MDP")]
    pub mdp: PathBuf,
    /// Initial policy as comma-separated action ids; greedy on rewards when absent.
    #[arg(long, env = "MDPGEO_START")]
    pub start: Option<String>,
    #[arg(long, env = "MDPGEO_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[arg(long, env = "MDPGEO_MDP")]
    pub mdp: PathBuf,
    /// Report output (JSON); stdout when absent.
    #[arg(long, env = "MDPGEO_OUT")]
    pub out: Option<PathBuf>,
    /// Also write the normalized model as a model file.
    #[arg(long, env = "MDPGEO_MDP_OUT")]
    pub mdp_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GammaEffArgs {
    #[arg(long, env = "MDPGEO_MDP")]
    pub mdp: PathBuf,
    #[arg(long, env = "MDPGEO_OUT")]
    pub out: Option<PathBuf>,
    /// Also write the rediscounted model as a model file.
    #[arg(long, env = "MDPGEO_MDP_OUT")]
    pub mdp_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, env = "MDPGEO_MDP")]
    pub mdp: PathBuf,
    /// Trace written by solve-vi; when absent a synchronous run of
    /// `--iters` iterations from zero is used.
    #[arg(long, env = "MDPGEO_TRACE")]
    pub trace: Option<PathBuf>,
    #[arg(long, env = "MDPGEO_ITERS", default_value_t = 50)]
    pub iters: usize,
    /// Step size of the traced run.
    #[arg(long, env = "MDPGEO_ALPHA", default_value_t = 1.0)]
    pub alpha: f64,
    /// Target accuracy for the iteration-count prediction.
    #[arg(long, env = "MDPGEO_EPSILON", default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, env = "MDPGEO_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, env = "MDPGEO_SEED")]
    pub seed: u64,
    #[arg(long, env = "MDPGEO_STATES", default_value_t = 5)]
    pub states: usize,
    /// Actions per state as MIN:MAX or a single count.
    #[arg(long, env = "MDPGEO_ACTIONS", default_value = "2:4", value_parser = parse_range)]
    pub actions: (usize, usize),
    #[arg(long, env = "MDPGEO_GAMMA", default_value_t = 0.9)]
    pub gamma: f64,
    /// dense, sparse:K, planted:BETA, periodic:BETA or wielandt:BETA.
    #[arg(long, env = "MDPGEO_STRUCTURE", default_value = "dense", value_parser = parse_structure)]
    pub structure: Structure,
    #[arg(long, env = "MDPGEO_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TwostateArgs {
    /// Check a single two-state model.
    #[arg(long, env = "MDPGEO_MDP", conflicts_with = "suite")]
    pub mdp: Option<PathBuf>,
    /// Number of random instances to check.
    #[arg(long, env = "MDPGEO_SUITE")]
    pub suite: Option<usize>,
    #[arg(long, env = "MDPGEO_MAX_ACTIONS", default_value_t = 12)]
    pub max_actions: usize,
    #[arg(long, env = "MDPGEO_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "MDPGEO_OUT")]
    pub out: Option<PathBuf>,
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("invalid {what} {s:?}"))
}

pub fn parse_stop(s: &str) -> Result<Stop, String> {
    match s.split_once(':') {
        None if s == "actions" => Ok(Stop::ActionCount),
        Some(("time", t)) => Ok(Stop::Time(parse_num(t, "iteration count")?)),
        Some(("span", e)) => Ok(Stop::SpanDelta(parse_num(e, "tolerance")?)),
        Some(("value-span", e)) => Ok(Stop::ValueSpan(parse_num(e, "tolerance")?)),
        _ => Err(format!("expected time:T, span:EPS, value-span:EPS or actions, got {s:?}")),
    }
}

pub fn parse_filter(s: &str) -> Result<Filter, String> {
    match s {
        "none" => Ok(Filter::None),
        "appendix" => Ok(Filter::Appendix),
        _ => Err(format!("expected none or appendix, got {s:?}")),
    }
}

pub fn parse_schedule(s: &str) -> Result<Schedule, String> {
    match s.split_once(':') {
        None if s == "sync" => Ok(Schedule::Sync),
        Some(("rr", k)) => Ok(Schedule::RoundRobin(parse_num(k, "block size")?)),
        _ => Err(format!("expected sync or rr:K, got {s:?}")),
    }
}

pub fn parse_range(s: &str) -> Result<(usize, usize), String> {
    match s.split_once(':') {
        Some((a, b)) => Ok((parse_num(a, "count")?, parse_num(b, "count")?)),
        None => {
            let k = parse_num(s, "count")?;
            Ok((k, k))
        }
    }
}

pub fn parse_structure(s: &str) -> Result<Structure, String> {
    match s.split_once(':') {
        None if s == "dense" => Ok(Structure::Dense),
        Some(("sparse", k)) => Ok(Structure::Sparse { k: parse_num(k, "support size")? }),
        Some(("planted", b)) => Ok(Structure::PlantedOptimal { beta: parse_num(b, "margin")? }),
        Some(("periodic", b)) => Ok(Structure::PeriodicOptimal { beta: parse_num(b, "margin")? }),
        Some(("wielandt", b)) => Ok(Structure::Wielandt { beta: parse_num(b, "margin")? }),
        _ => Err(format!("expected dense, sparse:K, planted:B, periodic:B or wielandt:B, got {s:?}")),
    }
}

/// A policy choice with its action name.
#[derive(Debug, Serialize)]
pub struct Choice {
    pub state: usize,
    pub action: usize,
    pub id: String,
}

fn choices(mdp: &Mdp, policy: &Policy) -> Vec<Choice> {
    policy
        .choice
        .iter()
        .enumerate()
        .map(|(s, a)| Choice {
            state: s,
            action: a.0,
            id: mdp.actions()[a.0].name.clone(),
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct ViOutput {
    input_sha256: String,
    gamma: f64,
    alpha: f64,
    stop_reason: String,
    iterations: usize,
    active_actions: usize,
    span_v: f64,
    span_dv: Option<f64>,
    policy: Vec<Choice>,
    values: Vec<f64>,
}

fn load_v0(spec: &str, mdp: &Mdp) -> Result<InitialValues, CliError> {
    match spec.split_once(':') {
        None if spec == "zeros" => Ok(InitialValues::Zeros),
        None if spec == "upper" => Ok(InitialValues::UpperBound),
        Some(("file", p)) => {
            let path = Path::new(p);
            let bytes = files::read_bytes(path)?;
            let v: Vec<f64> =
                serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            if v.len() != mdp.n_states() {
                return Err(CliError::Data(format!("initial values have {} entries, expected {}", v.len(), mdp.n_states())));
            }
            Ok(InitialValues::Given(ValueVector::new(v)))
        }
        _ => Err(CliError::Usage(format!("--v0: expected zeros, upper or file:PATH, got {spec:?}"))),
    }
}

fn solve_vi(a: &SolveViArgs) -> Result<i32, CliError> {
    let input = read_mdp(&a.mdp)?;
    let mdp = &input.value;
    let cfg = ViConfig {
        alpha: a.alpha,
        stop: a.stop.clone(),
        filter: a.filter,
        schedule: a.schedule.clone(),
        v0: load_v0(&a.v0, mdp)?,
        max_iters: a.max_iters,
    };
    // Configuration mistakes are usage errors; model/assumption mismatches are data errors.
    if let Err(e) = cfg.validate(mdp) {
        return Err(match e {
            SolverError::Config(m) => CliError::Usage(m),
            other => CliError::data(other),
        });
    }
    let (trace, reason, code) = match value_iteration(mdp, &cfg) {
        Ok(tr) => {
            let reason = tr.stop.map_or("none", |r| r.as_str()).to_string();
            (tr, reason, EXIT_OK)
        }
        Err(SolverError::IterationCap { trace, .. }) => (*trace, "cap".to_string(), EXIT_CAP),
        Err(SolverError::Config(m)) => return Err(CliError::Usage(m)),
        Err(e) => return Err(CliError::data(e)),
    };
    if let Some(p) = &a.trace {
        files::write_atomic(p, files::trace_csv(&trace, &reason).as_bytes())?;
    }
    let last = trace.last();
    let out = ViOutput {
        input_sha256: input.sha256,
        gamma: mdp.gamma(),
        alpha: a.alpha,
        stop_reason: reason,
        iterations: trace.iterations(),
        active_actions: last.active,
        span_v: last.span_v,
        span_dv: last.span_dv,
        policy: choices(mdp, &trace.final_policy),
        values: last.values.as_slice().to_vec(),
    };
    emit(a.out.as_deref(), &to_json(&out))?;
    if code == EXIT_CAP {
        eprintln!("mdpgeo: warning kind=cap code={EXIT_CAP} message=\"iteration cap reached before the stop criterion\"");
    }
    Ok(code)
}

#[derive(Debug, Serialize)]
struct PiRound {
    t: usize,
    policy: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct PiOutput {
    input_sha256: String,
    gamma: f64,
    rounds: usize,
    policy: Vec<Choice>,
    values: Vec<f64>,
    sequence: Vec<PiRound>,
}

fn parse_policy(spec: &str, mdp: &Mdp) -> Result<Policy, CliError> {
    let ids = spec
        .split(',')
        .map(|x| {
            let x = x.trim();
            mdp.actions()
                .iter()
                .position(|a| a.name == x)
                .or_else(|| x.parse::<usize>().ok().filter(|&i| i < mdp.n_actions()))
                .ok_or_else(|| CliError::Usage(format!("--start: unknown action {x:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ids.len() != mdp.n_states() || ids.iter().enumerate().any(|(s, &a)| mdp.actions()[a].state != s) {
        return Err(CliError::Usage("--start: need one action per state, in state order".into()));
    }
    Ok(Policy::new(ids.into_iter().map(mdpgeo::ActionId).collect()))
}

fn solve_pi(a: &SolvePiArgs) -> Result<i32, CliError> {
    let input = read_mdp(&a.mdp)?;
    let mdp = &input.value;
    let start = match &a.start {
        Some(s) => parse_policy(s, mdp)?,
        None => mdp.greedy_reward_policy(),
    };
    let (pi, trace) = policy_iteration(mdp, &start).map_err(CliError::data)?;
    let values = pi.values.clone().map(|v| v.as_slice().to_vec()).unwrap_or_default();
    let out = PiOutput {
        input_sha256: input.sha256,
        gamma: mdp.gamma(),
        rounds: trace.records.len(),
        policy: choices(mdp, &pi),
        values,
        sequence: trace
            .records
            .iter()
            .map(|r| PiRound {
                t: r.t,
                policy: r.policy.choice.iter().map(|a| a.0).collect(),
                values: r.values.as_slice().to_vec(),
            })
            .collect(),
    };
    emit(a.out.as_deref(), &to_json(&out))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct NormalizeOutput {
    input_sha256: String,
    unique: bool,
    policy: Vec<Choice>,
    values: Vec<f64>,
    log: TransformLog,
    mdp: MdpFile,
}

fn normalize_cmd(a: &NormalizeArgs) -> Result<i32, CliError> {
    let input = read_mdp(&a.mdp)?;
    let norm = normalize(&input.value).map_err(CliError::data)?;
    let file = MdpFile::from_mdp(&norm.mdp);
    if let Some(p) = &a.mdp_out {
        files::write_atomic(p, file.to_json().as_bytes())?;
    }
    let out = NormalizeOutput {
        input_sha256: input.sha256,
        unique: norm.unique,
        policy: choices(&input.value, &norm.policy),
        values: norm.policy.values.clone().map(|v| v.as_slice().to_vec()).unwrap_or_default(),
        log: norm.log,
        mdp: file,
    };
    emit(a.out.as_deref(), &to_json(&out))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct GammaEffOutput {
    input_sha256: String,
    gamma: f64,
    gamma_eff: f64,
    clamped: bool,
    min_cross: Vec<f64>,
    log: TransformLog,
}

fn gamma_eff_cmd(a: &GammaEffArgs) -> Result<i32, CliError> {
    let input = read_mdp(&a.mdp)?;
    let eg = effective_gamma(&input.value).map_err(CliError::data)?;
    if let Some(p) = &a.mdp_out {
        files::write_atomic(p, MdpFile::from_mdp(&eg.mdp).to_json().as_bytes())?;
    }
    let out = GammaEffOutput {
        input_sha256: input.sha256,
        gamma: eg.gamma,
        gamma_eff: eg.gamma_eff,
        clamped: eg.clamped,
        min_cross: eg.min_cross,
        log: eg.log,
    };
    emit(a.out.as_deref(), &to_json(&out))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct CertifyOutput {
    input_sha256: String,
    trace_sha256: Option<String>,
    certificate: ConvergenceCertificate,
}

fn certify_cmd(a: &CertifyArgs) -> Result<i32, CliError> {
    let input = read_mdp(&a.mdp)?;
    let mdp = &input.value;
    let (trace, trace_sha256): (RunTrace, _) = match &a.trace {
        Some(p) => {
            let bytes = files::read_bytes(p)?;
            let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            let rows = files::parse_trace_csv(text)?;
            (files::rebuild_trace(mdp, &rows, a.alpha)?, Some(files::sha256_hex(&bytes)))
        }
        None => {
            let cfg = ViConfig::standard(Stop::Time(a.iters)).with_alpha(a.alpha);
            cfg.validate(mdp).map_err(|e| CliError::Usage(e.to_string()))?;
            (value_iteration(mdp, &cfg).map_err(CliError::data)?, None)
        }
    };
    let cert = if a.alpha < 1.0 {
        certify_alpha(mdp, &trace, a.alpha, a.epsilon)
    } else {
        certify(mdp, &trace, a.epsilon)
    }
    .map_err(CliError::data)?;
    let out = CertifyOutput {
        input_sha256: input.sha256,
        trace_sha256,
        certificate: cert,
    };
    emit(a.out.as_deref(), &to_json(&out))?;
    Ok(EXIT_OK)
}

fn generate_cmd(a: &GenerateArgs) -> Result<i32, CliError> {
    let spec = GenSpec::new(a.states, a.actions, a.gamma, a.seed, a.structure.clone());
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mdp = generate(&spec).map_err(CliError::data)?;
    emit(a.out.as_deref(), &MdpFile::from_mdp(&mdp).to_json())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct TwostateSingle {
    input_sha256: String,
    violations: usize,
    report: Option<PiBoundReport>,
    failure: Option<String>,
    initial_step: Option<Inefficiency>,
}

#[derive(Debug, Serialize)]
struct TwostateSuite {
    violations: usize,
    report: SuiteReport,
}

fn twostate_cmd(a: &TwostateArgs) -> Result<i32, CliError> {
    match (&a.mdp, a.suite) {
        (Some(path), None) => {
            let input = read_mdp(path)?;
            let mdp = &input.value;
            if mdp.n_states() != 2 {
                return Err(CliError::Data(format!("model has {} states, expected 2", mdp.n_states())));
            }
            let initial_step = inefficiency_certificate(mdp, &ActionSet::full(mdp)).ok();
            let out = match verify_pi_bound(mdp) {
                Ok(r) => TwostateSingle {
                    input_sha256: input.sha256,
                    violations: 0,
                    report: Some(r),
                    failure: None,
                    initial_step,
                },
                Err(mdpgeo::TwoStateError::BoundViolated { reason, .. }) => TwostateSingle {
                    input_sha256: input.sha256,
                    violations: 1,
                    report: None,
                    failure: Some(reason),
                    initial_step,
                },
                Err(e) => return Err(CliError::data(e)),
            };
            emit(a.out.as_deref(), &to_json(&out))?;
            Ok(EXIT_OK)
        }
        (None, Some(count)) => {
            if a.max_actions < 2 {
                return Err(CliError::Usage("--max-actions must be at least 2".into()));
            }
            let report = random_suite(count, a.max_actions, a.seed).map_err(CliError::data)?;
            let out = TwostateSuite {
                violations: report.violations,
                report,
            };
            emit(a.out.as_deref(), &to_json(&out))?;
            Ok(EXIT_OK)
        }
        _ => Err(CliError::Usage("twostate needs exactly one of --mdp or --suite".into())),
    }
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::SolveVi(a) => solve_vi(a),
        Command::SolvePi(a) => solve_pi(a),
        Command::Normalize(a) => normalize_cmd(a),
        Command::GammaEff(a) => gamma_eff_cmd(a),
        Command::Certify(a) => certify_cmd(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Twostate(a) => twostate_cmd(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_grammar() {
        assert_eq!(parse_stop("time:0"), Ok(Stop::Time(0)));
        assert_eq!(parse_stop("span:1e-6"), Ok(Stop::SpanDelta(1e-6)));
        assert_eq!(parse_stop("value-span:0.5"), Ok(Stop::ValueSpan(0.5)));
        assert_eq!(parse_stop("actions"), Ok(Stop::ActionCount));
        assert!(parse_stop("time:x").is_err());
        assert!(parse_stop("forever").is_err());
    }

    #[test]
    fn other_grammars() {
        assert_eq!(parse_schedule("rr:3"), Ok(Schedule::RoundRobin(3)));
        assert!(parse_schedule("random").is_err());
        assert_eq!(parse_filter("appendix"), Ok(Filter::Appendix));
        assert_eq!(parse_range("3"), Ok((3, 3)));
        assert_eq!(parse_range("1:4"), Ok((1, 4)));
        assert_eq!(parse_structure("sparse:2"), Ok(Structure::Sparse { k: 2 }));
        assert!(parse_structure("planted").is_err());
    }
}
