//! Repetition fan-out, per-repetition result files and the summary.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use lmdp::checkpoint::default_budget;
use lmdp::error::Error;
use lmdp::exact::Guards;
use lmdp::io::load_class;
use lmdp::lemmas::{
    check_memoryless_sufficiency, check_ope_lmdp, check_ope_mdp, doubling_diagnostic, DoublingReport, InequalityReport,
    ReportTally,
};
use lmdp::model::LmdpModel;
use lmdp::omle::{run_lmdp_omle, run_mdp_omle, run_rng, AlgoParams, ModelClass, RunLog};
use lmdp::policy::{MemorylessPolicy, Policy};
use lmdp::random::{random_deterministic_policy, random_stochastic_policy};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Algorithm, ExperimentConfig, InstanceSource};
use crate::generate::gen_class;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Optimality gap counted as a success in the summary.
pub const GAP_TOLERANCE: f64 = 0.1;

/// RNG stream for the random policies of the lemma suite.
const POLICY_STREAM: u64 = 2;

/// Seed of repetition `rep`; depends only on the master seed and the index.
pub fn rep_seed(master: u64, rep: usize) -> u64 {
    run_rng(master, rep as u64 + 1).gen()
}

pub fn rep_file_name(rep: usize) -> String {
    format!("rep-{rep:04}.jsonl")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub jobs: usize,
    pub timing: bool,
}

/// Per-repetition row of the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omle: Option<OmleRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lemmas: Vec<LemmaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmleRow {
    pub truth: usize,
    pub survivor: usize,
    pub iterations: usize,
    pub truncated: bool,
    pub total_episodes: u64,
    pub returned_value: f64,
    pub optimal_value: f64,
    pub gap: f64,
    pub truth_always_in_set: bool,
    pub doubling_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub lemma: String,
    pub holds: bool,
    pub vacuous: bool,
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmleSummary {
    pub mean_gap: f64,
    pub max_gap: f64,
    pub gap_tolerance: f64,
    pub within_tolerance: usize,
    pub mean_episodes: f64,
    pub mean_iterations: f64,
    pub truncated: usize,
    pub truth_always_in_set: usize,
    /// Mean over repetitions with at least one iteration.
    pub mean_doubling_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub lemma: String,
    pub tally: ReportTally,
    pub min_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config_hash: String,
    pub algorithm: String,
    pub reps: usize,
    pub completed: usize,
    pub failed: usize,
    pub misspecified: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omle: Option<OmleSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lemmas: Vec<LemmaSummary>,
    pub rows: Vec<RepRow>,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summaries serialize");
        s.push('\n');
        s
    }

    /// Every repetition finished without error.
    pub fn all_completed(&self) -> bool {
        self.failed == 0
    }
}

enum Outcome {
    Omle(Box<RunLog>, Option<DoublingReport>),
    Lemmas(Vec<InequalityReport>),
}

struct RepResult {
    row: RepRow,
    misspecified: bool,
    lines: Vec<String>,
}

fn line(value: impl Serialize) -> String {
    serde_json::to_string(&value).expect("records serialize")
}

/// Runs one repetition. `shared` is the class loaded from a file, if any.
fn run_rep(config: &ExperimentConfig, shared: Option<&ModelClass>, rep: usize, options: RunOptions) -> RepResult {
    let seed = rep_seed(config.seed, rep);
    let meta = json!({
        "record": "meta",
        "version": VERSION,
        "config_hash": config.hash(),
        "algorithm": config.algorithm.name(),
        "rep": rep,
        "seed": seed,
    });
    let mut lines = vec![line(meta)];
    let mut row = RepRow {
        rep,
        seed,
        error: None,
        omle: None,
        lemmas: Vec::new(),
    };
    match execute(config, shared, seed, options) {
        Ok(Outcome::Omle(log, doubling)) => {
            let f = &log.final_record;
            row.omle = Some(OmleRow {
                truth: log.header.truth,
                survivor: f.survivor,
                iterations: f.iterations,
                truncated: f.truncated,
                total_episodes: f.total_episodes,
                returned_value: f.returned_value,
                optimal_value: f.optimal_value,
                gap: f.gap,
                truth_always_in_set: f.truth_always_in_set,
                doubling_fraction: doubling.as_ref().and_then(|d| d.fraction),
            });
            lines.extend(log.to_jsonl().lines().map(str::to_owned));
            if let Some(d) = doubling {
                let mut value = serde_json::to_value(&d).expect("reports serialize");
                value["record"] = json!("doubling");
                lines.push(line(value));
            }
            RepResult {
                row,
                misspecified: false,
                lines,
            }
        }
        Ok(Outcome::Lemmas(reports)) => {
            for r in &reports {
                row.lemmas.push(LemmaRow {
                    lemma: r.lemma.clone(),
                    holds: r.holds,
                    vacuous: r.vacuous,
                    slack: r.slack,
                });
                let mut value = serde_json::to_value(r).expect("reports serialize");
                value["record"] = json!("lemma");
                lines.push(line(value));
            }
            RepResult {
                row,
                misspecified: false,
                lines,
            }
        }
        Err(e) => {
            let misspecified = matches!(e.downcast_ref::<Error>(), Some(Error::Misspecified));
            let message = format!("{e:#}");
            lines.push(line(json!({"record": "error", "message": message})));
            row.error = Some(message);
            RepResult {
                row,
                misspecified,
                lines,
            }
        }
    }
}

fn execute(config: &ExperimentConfig, shared: Option<&ModelClass>, seed: u64, options: RunOptions) -> Result<Outcome> {
    let generated;
    let class = match (shared, &config.instance) {
        (Some(c), _) => c,
        (None, InstanceSource::Generate(spec)) => {
            generated = gen_class(spec, seed)?;
            &generated
        }
        (None, InstanceSource::File { .. }) => unreachable!("file instances are loaded up front"),
    };
    let params = AlgoParams {
        seed,
        timing: options.timing || config.params.timing,
        ..config.params.clone()
    };
    let guards = &config.guards;
    match config.algorithm {
        Algorithm::MdpOmle | Algorithm::LmdpOmle => {
            let log = if config.algorithm == Algorithm::MdpOmle {
                run_mdp_omle(class, &params, guards)?
            } else {
                run_lmdp_omle(class, &params, guards)?
            };
            let doubling = doubling_diagnostic(&log, class, params.gamma)?;
            Ok(Outcome::Omle(Box::new(log), Some(doubling)))
        }
        Algorithm::LemmaSuite => Ok(Outcome::Lemmas(lemma_suite(class, &params, seed, guards)?)),
    }
}

/// The truth against the first other member, or against itself for a
/// singleton class.
fn lemma_suite(class: &ModelClass, params: &AlgoParams, seed: u64, guards: &Guards) -> Result<Vec<InequalityReport>> {
    let truth = class.true_model();
    let other: &LmdpModel = class
        .models()
        .iter()
        .enumerate()
        .find(|(i, _)| *i != class.truth())
        .map_or(truth, |(_, m)| m);
    let shape = truth.shape();
    let mut rng = run_rng(seed, POLICY_STREAM);
    let mut reports = Vec::new();
    if truth.num_contexts() == 1 && other.num_contexts() == 1 {
        let behavior: Policy = random_stochastic_policy(&mut rng, &shape).into();
        let target: Policy = random_deterministic_policy(&mut rng, &shape).into();
        reports.push(check_ope_mdp(truth, other, &behavior, &target, guards)?);
    }
    let d = params.d.unwrap_or_else(|| default_budget(truth.num_contexts()));
    let uniform: Policy = MemorylessPolicy::uniform(shape.horizon, shape.states, shape.actions).into();
    let target: Policy = random_deterministic_policy(&mut rng, &shape).into();
    reports.push(check_ope_lmdp(
        truth,
        other,
        &vec![uniform; d + 1],
        &target,
        Some(d),
        guards,
    )?);
    reports.push(check_memoryless_sufficiency(truth, other, params.d, guards)?);
    Ok(reports)
}

fn load_shared(config: &ExperimentConfig) -> Result<Option<ModelClass>> {
    match &config.instance {
        InstanceSource::Generate(_) => Ok(None),
        InstanceSource::File { path } => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let is_class = serde_json::from_str::<serde_json::Value>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
                .get("models")
                .is_some();
            let class = if is_class {
                let (models, truth) = load_class(path)?;
                ModelClass::new(models, truth)?
            } else {
                ModelClass::new(vec![lmdp::io::load_model(path)?], 0)?
            };
            Ok(Some(class))
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(config: &ExperimentConfig, results: &[RepResult]) -> Summary {
    let rows: Vec<RepRow> = results.iter().map(|r| r.row.clone()).collect();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let omle_rows: Vec<&OmleRow> = rows.iter().filter_map(|r| r.omle.as_ref()).collect();
    let omle = (!omle_rows.is_empty()).then(|| OmleSummary {
        mean_gap: mean(omle_rows.iter().map(|r| r.gap)).unwrap_or(0.0),
        max_gap: omle_rows.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max),
        gap_tolerance: GAP_TOLERANCE,
        within_tolerance: omle_rows.iter().filter(|r| r.gap <= GAP_TOLERANCE).count(),
        mean_episodes: mean(omle_rows.iter().map(|r| r.total_episodes as f64)).unwrap_or(0.0),
        mean_iterations: mean(omle_rows.iter().map(|r| r.iterations as f64)).unwrap_or(0.0),
        truncated: omle_rows.iter().filter(|r| r.truncated).count(),
        truth_always_in_set: omle_rows.iter().filter(|r| r.truth_always_in_set).count(),
        mean_doubling_fraction: mean(omle_rows.iter().filter_map(|r| r.doubling_fraction)),
    });
    let mut lemmas: Vec<LemmaSummary> = Vec::new();
    for row in rows.iter().flat_map(|r| &r.lemmas) {
        let entry = match lemmas.iter_mut().position(|l| l.lemma == row.lemma) {
            Some(i) => &mut lemmas[i],
            None => {
                lemmas.push(LemmaSummary {
                    lemma: row.lemma.clone(),
                    tally: ReportTally::default(),
                    min_slack: None,
                });
                lemmas.last_mut().expect("just pushed")
            }
        };
        entry.tally.total += 1;
        entry.tally.vacuous += usize::from(row.vacuous);
        if row.holds {
            entry.tally.holds += 1;
        } else {
            entry.tally.violations += 1;
        }
        if let Some(s) = row.slack {
            entry.min_slack = Some(entry.min_slack.map_or(s, |m: f64| m.min(s)));
        }
    }
    Summary {
        version: VERSION.into(),
        config_hash: config.hash(),
        algorithm: config.algorithm.name().into(),
        reps: config.reps,
        completed: rows.len() - failed,
        failed,
        misspecified: results.iter().filter(|r| r.misspecified).count(),
        omle,
        lemmas,
        rows,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs every repetition on up to `jobs` threads and writes
/// `rep-NNNN.jsonl` files plus `summary.json` into `out`, when given.
/// Results do not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>, options: RunOptions) -> Result<Summary> {
    config.check()?;
    let shared = load_shared(config)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let jobs = options.jobs.clamp(1, config.reps);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RepResult>>> = Mutex::new((0..config.reps).map(|_| None).collect());
    let write_error: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let rep = next.fetch_add(1, Ordering::Relaxed);
                if rep >= config.reps {
                    break;
                }
                let result = run_rep(config, shared.as_ref(), rep, options);
                if let Some(dir) = out {
                    let mut text = result.lines.join("\n");
                    text.push('\n');
                    if let Err(e) = write(&dir.join(rep_file_name(rep)), &text) {
                        write_error.lock().expect("no poisoned lock").get_or_insert(e);
                    }
                }
                slots.lock().expect("no poisoned lock")[rep] = Some(result);
            });
        }
    });
    if let Some(e) = write_error.into_inner().expect("no poisoned lock") {
        return Err(e);
    }
    let results: Vec<RepResult> = slots
        .into_inner()
        .expect("no poisoned lock")
        .into_iter()
        .map(|r| r.expect("every repetition ran"))
        .collect();
    let summary = summarize(config, &results);
    if let Some(dir) = out {
        write(&dir.join("summary.json"), &summary.to_text())?;
    }
    Ok(summary)
}

/// Output directory: the explicit one, else the config's, else `results`.
pub fn output_dir(explicit: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}
