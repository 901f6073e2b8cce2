//! Model (JSON) and trace (CSV) file formats.

use std::fs;
use std::io::Write;
use std::path::Path;

use mdpgeo::bellman_optimal;
use mdpgeo::solvers::{IterRecord, RunTrace};
use mdpgeo::{Action, ActionSet, Mdp, ValueVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MDP_FILE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionEntry {
    pub id: String,
    pub state: usize,
    pub probs: Vec<f64>,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub version: u32,
    pub n_states: usize,
    pub gamma: f64,
    pub actions: Vec<ActionEntry>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        Self {
            version: MDP_FILE_VERSION,
            n_states: mdp.n_states(),
            gamma: mdp.gamma(),
            actions: mdp
                .actions()
                .iter()
                .map(|a| ActionEntry {
                    id: a.name.clone(),
                    state: a.state,
                    probs: a.probs.clone(),
                    reward: a.reward,
                })
                .collect(),
        }
    }

    pub fn to_mdp(&self) -> Result<Mdp, CliError> {
        if self.version != MDP_FILE_VERSION {
            return Err(CliError::Data(format!("unsupported model file version {}", self.version)));
        }
        let actions = self
            .actions
            .iter()
            .map(|a| Action::new(a.id.clone(), a.state, a.probs.clone(), a.reward))
            .collect();
        Mdp::new(self.n_states, self.gamma, actions).map_err(CliError::data)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// An input file with its hash.
pub struct Loaded<T> {
    pub value: T,
    pub sha256: String,
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(path, e))
}

pub fn read_mdp(path: &Path) -> Result<Loaded<Mdp>, CliError> {
    let bytes = read_bytes(path)?;
    let file: MdpFile = serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        value: file.to_mdp()?,
        sha256: sha256_hex(&bytes),
    })
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::output(path, e))?;
    tmp.write_all(contents).map_err(|e| CliError::output(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::output(path, e))?;
    tmp.persist(path).map_err(|e| CliError::output(path, e.error))?;
    Ok(())
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_atomic(p, contents.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::output(Path::new("-"), e))
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document serializes");
    s.push('\n');
    s
}

/// Round-trip exact: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV trace: header, then one row per record. `final_reason` is written on
/// the last row only.
pub fn trace_csv(trace: &RunTrace, final_reason: &str) -> String {
    let n = trace.records.first().map_or(0, |r| r.values.len());
    let mut out = String::from("t,span_v,span_dv,active_actions,stop_reason_final");
    for i in 0..n {
        out.push_str(&format!(",value_{i}"));
    }
    out.push('\n');
    let last = trace.records.len().saturating_sub(1);
    for (k, r) in trace.records.iter().enumerate() {
        out.push_str(&r.t.to_string());
        out.push(',');
        out.push_str(&fmt_num(r.span_v));
        out.push(',');
        if let Some(d) = r.span_dv {
            out.push_str(&fmt_num(d));
        }
        out.push(',');
        out.push_str(&r.active.to_string());
        out.push(',');
        if k == last {
            out.push_str(final_reason);
        }
        for x in r.values.iter() {
            out.push(',');
            out.push_str(&fmt_num(*x));
        }
        out.push('\n');
    }
    out
}

/// One parsed trace row.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub values: Vec<f64>,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, CliError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CliError::Data("empty trace file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let fixed = ["t", "span_v", "span_dv", "active_actions", "stop_reason_final"];
    if cols.len() < fixed.len() || cols[..fixed.len()] != fixed {
        return Err(CliError::Data("trace header does not match the trace format".into()));
    }
    for (i, c) in cols[fixed.len()..].iter().enumerate() {
        if *c != format!("value_{i}") {
            return Err(CliError::Data(format!("unexpected trace column {c:?}")));
        }
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(CliError::Data(format!("trace row {} has {} fields, expected {}", ln + 1, f.len(), cols.len())));
        }
        let bad = |what: &str| CliError::Data(format!("trace row {}: bad {what}", ln + 1));
        let t = f[0].parse().map_err(|_| bad("t"))?;
        let values = f[fixed.len()..]
            .iter()
            .map(|x| x.parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(TraceRow { t, values });
    }
    if rows.is_empty() {
        return Err(CliError::Data("trace has no rows".into()));
    }
    if rows.iter().enumerate().any(|(i, r)| r.t != i) {
        return Err(CliError::Data("trace rows are not numbered 0, 1, 2, ...".into()));
    }
    Ok(rows)
}

/// Rebuilds a run trace of `mdp` from parsed rows. Greedy policies are
/// recomputed from the values.
pub fn rebuild_trace(mdp: &Mdp, rows: &[TraceRow], alpha: f64) -> Result<RunTrace, CliError> {
    let full = ActionSet::full(mdp);
    let mut records = Vec::with_capacity(rows.len());
    let mut prev: Option<ValueVector> = None;
    for r in rows {
        if r.values.len() != mdp.n_states() {
            return Err(CliError::Data(format!(
                "trace has {} value columns but the model has {} states",
                r.values.len(),
                mdp.n_states()
            )));
        }
        let v = ValueVector::new(r.values.clone());
        let (_, policy) = bellman_optimal(mdp, &v, &full).map_err(CliError::data)?;
        records.push(IterRecord {
            t: r.t,
            span_v: v.span(),
            span_dv: prev.as_ref().map(|p| v.sub(p).span()),
            policy,
            active: mdp.n_actions(),
            filtered: Vec::new(),
            elapsed: Default::default(),
            values: v.clone(),
        });
        prev = Some(v);
    }
    let final_policy = records.last().expect("non-empty").policy.clone();
    Ok(RunTrace {
        gamma: mdp.gamma(),
        alpha,
        records,
        final_policy,
        stop: None,
    })
}
