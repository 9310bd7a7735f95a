//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lmdp::exact::Guards;
use lmdp::omle::AlgoParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Parameters of a random instance and the class built around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub contexts: usize,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub rewards: usize,
    /// Symmetric Dirichlet concentration for every random row.
    pub concentration: f64,
    /// Members of the model class, the truth included.
    #[serde(default = "one")]
    pub class_size: usize,
    /// Probability that a decoy re-draws a given row of the truth.
    #[serde(default = "default_fraction")]
    pub decoy_fraction: f64,
    /// Weight of the fresh draw in a re-drawn row.
    #[serde(default = "default_mix")]
    pub decoy_mix: f64,
}

fn one() -> usize {
    1
}

fn default_fraction() -> f64 {
    0.25
}

fn default_mix() -> f64 {
    1.0
}

impl GeneratorSpec {
    pub fn check(&self) -> Result<()> {
        if self.contexts == 0 || self.states == 0 || self.actions == 0 || self.horizon == 0 || self.rewards == 0 {
            bail!("generator dimensions must be positive");
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            bail!("concentration must be positive and finite, got {}", self.concentration);
        }
        if self.class_size == 0 {
            bail!("class_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.decoy_fraction) || !(0.0..=1.0).contains(&self.decoy_mix) {
            bail!("decoy_fraction and decoy_mix must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Where the model class comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    /// A model document (a singleton class) or a class document.
    File { path: PathBuf },
    /// A fresh seeded instance per repetition.
    Generate(GeneratorSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    MdpOmle,
    LmdpOmle,
    /// The three inequality checks on a seeded pair per repetition.
    LemmaSuite,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MdpOmle => "mdp-omle",
            Algorithm::LmdpOmle => "lmdp-omle",
            Algorithm::LemmaSuite => "lemma-suite",
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: AlgoParams,
    /// Master seed; repetition seeds are derived from it by index.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub reps: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub guards: Guards,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Instance paths are relative to the config file.
        if let InstanceSource::File { path: p } = &mut config.instance {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<()> {
        if self.reps == 0 {
            bail!("reps must be at least 1");
        }
        if let InstanceSource::Generate(spec) = &self.instance {
            spec.check()?;
        }
        self.params.check()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, in hex. The output directory and
    /// file-instance location do not take part.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        if let InstanceSource::File { path } = &mut canonical.instance {
            *path = path.file_name().map(PathBuf::from).unwrap_or_default();
        }
        let text = serde_json::to_string(&canonical).expect("configs serialize");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
