//! Tab-separated tables from a results directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lmdp::omle::RunLog;
use serde_json::Value;

pub const SET_SIZE_TABLE: &str = "set_size.tsv";
pub const GAP_TABLE: &str = "gap.tsv";
pub const SLACK_TABLE: &str = "slack.tsv";

/// The three tables as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotTables {
    /// `rep, k, set_size`, with `k = 0` the membership before the first iteration.
    pub set_size: String,
    /// `rep, total_episodes, gap`, one row per run.
    pub gap: String,
    /// `lemma, bin, count`; bins are `violation`, `vacuous`, `zero` or the
    /// decade exponent `e` of slack in `[10^e, 10^(e+1))`.
    pub slack: String,
}

fn rep_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry.with_context(|| format!("reading {}", dir.display()))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("rep-") && name.ends_with(".jsonl") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn slack_bin(value: &Value) -> String {
    if value["holds"] == Value::Bool(false) {
        return "violation".into();
    }
    match value["slack"].as_f64() {
        None => "vacuous".into(),
        Some(s) if s <= 0.0 => "zero".into(),
        Some(s) => format!("{}", s.log10().floor() as i64),
    }
}

/// Reads every `rep-*.jsonl` file in `dir`.
pub fn plot_tables(dir: &Path) -> Result<PlotTables> {
    let mut set_size = String::from("rep\tk\tset_size\n");
    let mut gap = String::from("rep\ttotal_episodes\tgap\n");
    let mut slack: BTreeMap<(String, String), usize> = BTreeMap::new();
    for path in rep_files(dir)? {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut rep = None;
        let mut run_lines = String::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |m: String| anyhow!("{} line {}: {m}", path.display(), i + 1);
            let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            match value["record"].as_str() {
                Some("meta") => rep = value["rep"].as_u64(),
                Some("header" | "iteration" | "final") => {
                    run_lines.push_str(line);
                    run_lines.push('\n');
                }
                Some("lemma") => {
                    let lemma = value["lemma"]
                        .as_str()
                        .ok_or_else(|| bad("lemma without a name".into()))?;
                    *slack.entry((lemma.to_string(), slack_bin(&value))).or_default() += 1;
                }
                Some("doubling" | "error") => {}
                other => return Err(bad(format!("unknown record {other:?}"))),
            }
        }
        let Some(rep) = rep else {
            bail!("{}: missing meta record", path.display());
        };
        if run_lines.is_empty() {
            continue;
        }
        let log = RunLog::from_jsonl(&run_lines).with_context(|| format!("{}", path.display()))?;
        let initial = log.header.initial_mask.iter().filter(|&&m| m).count();
        let _ = writeln!(set_size, "{rep}\t0\t{initial}");
        for it in &log.iterations {
            let _ = writeln!(set_size, "{rep}\t{}\t{}", it.k, it.set_size);
        }
        let f = &log.final_record;
        let _ = writeln!(gap, "{rep}\t{}\t{}", f.total_episodes, f.gap);
    }
    let mut slack_text = String::from("lemma\tbin\tcount\n");
    for ((lemma, bin), count) in &slack {
        let _ = writeln!(slack_text, "{lemma}\t{bin}\t{count}");
    }
    Ok(PlotTables {
        set_size,
        gap,
        slack: slack_text,
    })
}

/// Writes the tables into `out`.
pub fn emit_plot_data(results: &Path, out: &Path) -> Result<PlotTables> {
    let tables = plot_tables(results)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, text) in [
        (SET_SIZE_TABLE, &tables.set_size),
        (GAP_TABLE, &tables.gap),
        (SLACK_TABLE, &tables.slack),
    ] {
        let path = out.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("lmdp-plot-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn empty_directory_gives_headers() {
        let dir = temp_dir("empty");
        let t = plot_tables(&dir).unwrap();
        assert_eq!(t.set_size, "rep\tk\tset_size\n");
        assert_eq!(t.gap, "rep\ttotal_episodes\tgap\n");
        assert_eq!(t.slack, "lemma\tbin\tcount\n");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn corrupt_file_is_named() {
        let dir = temp_dir("corrupt");
        std::fs::write(
            dir.join("rep-0000.jsonl"),
            "{\"record\": \"meta\", \"rep\": 0}\nnot json\n",
        )
        .unwrap();
        let err = format!("{:#}", plot_tables(&dir).unwrap_err());
        assert!(err.contains("rep-0000.jsonl line 2"), "{err}");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn slack_bins() {
        let v = |holds: bool, slack: Value| serde_json::json!({"holds": holds, "slack": slack});
        assert_eq!(slack_bin(&v(false, 1.0.into())), "violation");
        assert_eq!(slack_bin(&v(true, Value::Null)), "vacuous");
        assert_eq!(slack_bin(&v(true, 0.0.into())), "zero");
        assert_eq!(slack_bin(&v(true, 0.05.into())), "-2");
        assert_eq!(slack_bin(&v(true, 12.0.into())), "1");
    }
}
