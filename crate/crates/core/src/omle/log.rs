use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;

/// Run parameters as resolved at the start of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub algorithm: String,
    pub class_size: usize,
    pub truth: usize,
    pub n_test: usize,
    pub eps_test: f64,
    pub eta: f64,
    pub beta: f64,
    pub k_max: usize,
    pub d: Option<usize>,
    pub seed: u64,
    /// Episodes collected before the first iteration.
    pub initial_episodes: u64,
    /// Membership before the first iteration.
    pub initial_mask: Vec<bool>,
}

/// One pass of the exploration loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub k: usize,
    /// Registry id of the discriminating policy `π^k` in the dataset.
    pub policy_id: usize,
    /// `π^k` as an action table in `(t, s)` order.
    pub policy: Vec<usize>,
    /// Class indices of the witnessing pair.
    pub pair: [usize; 2],
    pub tv: f64,
    /// Data-collection events of `n_test` episodes each.
    pub collections: usize,
    pub episodes: u64,
    pub total_episodes: u64,
    /// Membership after refitting on the enlarged dataset.
    pub mask: Vec<bool>,
    pub set_size: usize,
    /// `None` marks a member with zero likelihood.
    pub log_likelihoods: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// Outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub iterations: usize,
    /// The loop guard still fired when `k_max` was reached.
    pub truncated: bool,
    /// Lowest-index member of the final confidence set.
    pub survivor: usize,
    /// True value of the returned policy.
    pub returned_value: f64,
    /// Optimal value of the true model.
    pub optimal_value: f64,
    pub gap: f64,
    pub total_episodes: u64,
    pub mask: Vec<bool>,
    /// The true model was a member after every refit.
    pub truth_always_in_set: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header(RunHeader),
    Iteration(IterationRecord),
    Final(FinalRecord),
}

/// The full record of one exploration run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub iterations: Vec<IterationRecord>,
    pub final_record: FinalRecord,
    /// The policy returned by the run; not persisted.
    pub returned_policy: Option<Policy>,
}

impl RunLog {
    /// Line-delimited JSON: a header, one line per iteration, a final line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut line = |record: LogRecord| {
            out.push_str(&serde_json::to_string(&record).expect("run records serialize"));
            out.push('\n');
        };
        line(LogRecord::Header(self.header.clone()));
        for it in &self.iterations {
            line(LogRecord::Iteration(it.clone()));
        }
        line(LogRecord::Final(self.final_record.clone()));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<RunLog> {
        let parse_error = |line: usize, message: String| Error::Parse {
            context: format!("run log line {line}"),
            message,
        };
        let mut header = None;
        let mut iterations = Vec::new();
        let mut final_record = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: LogRecord = serde_json::from_str(line).map_err(|e| parse_error(i + 1, e.to_string()))?;
            match record {
                LogRecord::Header(h) if header.is_none() => header = Some(h),
                LogRecord::Iteration(it) if header.is_some() && final_record.is_none() => iterations.push(it),
                LogRecord::Final(f) if header.is_some() && final_record.is_none() => final_record = Some(f),
                _ => return Err(parse_error(i + 1, "record out of order".into())),
            }
        }
        match (header, final_record) {
            (Some(header), Some(final_record)) => Ok(RunLog {
                header,
                iterations,
                final_record,
                returned_policy: None,
            }),
            _ => Err(parse_error(0, "missing header or final record".into())),
        }
    }
}
