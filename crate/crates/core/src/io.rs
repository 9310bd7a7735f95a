//! JSON documents for models and model classes.
//!
//! Probabilities are kept as the decimal text they were read from, so a model
//! that is loaded and saved again reproduces every number verbatim. Numbers
//! produced in code are written in the shortest form that parses back to the
//! same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::model::{LmdpModel, Shape};

/// A JSON number together with its source text.
#[derive(Debug, Clone)]
pub struct Decimal {
    text: Box<RawValue>,
    value: f64,
}

impl Decimal {
    pub fn from_f64(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::OutOfRange {
                name: "number",
                value,
                expected: "finite",
            });
        }
        let text = serde_json::to_string(&value).expect("finite floats serialize");
        Ok(Decimal {
            text: RawValue::from_string(text).expect("a number is valid JSON"),
            value,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn text(&self) -> &str {
        self.text.get()
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.text.get() == other.text.get()
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = Box::<RawValue>::deserialize(deserializer)?;
        let raw = text.get();
        if !raw.starts_with(|c: char| c == '-' || c.is_ascii_digit()) {
            return Err(D::Error::custom(format!("expected a number, found {raw}")));
        }
        let value: f64 = serde_json::from_str(raw).map_err(D::Error::custom)?;
        Ok(Decimal { text, value })
    }
}

impl Serialize for Decimal {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.text.serialize(serializer)
    }
}

/// The on-disk form of a model. Nested arrays follow the index order
/// `transitions[m][s][a][s']`, `init[m][s]` and `rewards[m][s][a][r]`, where
/// `r` indexes `reward_support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    #[serde(rename = "M")]
    pub contexts: usize,
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub reward_support: Vec<Decimal>,
    pub weights: Vec<Decimal>,
    pub init: Vec<Vec<Decimal>>,
    pub transitions: Vec<Vec<Vec<Vec<Decimal>>>>,
    pub rewards: Vec<Vec<Vec<Vec<Decimal>>>>,
}

fn decimals(values: &[f64]) -> Result<Vec<Decimal>> {
    values.iter().map(|&v| Decimal::from_f64(v)).collect()
}

fn nested(
    shape: &Shape,
    row: impl Fn(usize, usize, usize) -> Result<Vec<Decimal>>,
) -> Result<Vec<Vec<Vec<Vec<Decimal>>>>> {
    (0..shape.contexts)
        .map(|m| {
            (0..shape.states)
                .map(|s| (0..shape.actions).map(|a| row(m, s, a)).collect())
                .collect()
        })
        .collect()
}

fn check_len(path: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{path} has {got} entries, expected {want}"
        )))
    }
}

fn flatten_rows(path: &str, rows: &[Vec<Vec<Vec<Decimal>>>], shape: &Shape, width: usize) -> Result<Vec<f64>> {
    check_len(path, rows.len(), shape.contexts)?;
    let mut out = Vec::with_capacity(shape.contexts * shape.states * shape.actions * width);
    for (m, per_state) in rows.iter().enumerate() {
        check_len(&format!("{path}[{m}]"), per_state.len(), shape.states)?;
        for (s, per_action) in per_state.iter().enumerate() {
            check_len(&format!("{path}[{m}][{s}]"), per_action.len(), shape.actions)?;
            for (a, row) in per_action.iter().enumerate() {
                check_len(&format!("{path}[{m}][{s}][{a}]"), row.len(), width)?;
                out.extend(row.iter().map(Decimal::value));
            }
        }
    }
    Ok(out)
}

impl ModelDocument {
    pub fn from_model(model: &LmdpModel) -> Result<Self> {
        let shape = model.shape();
        Ok(ModelDocument {
            contexts: shape.contexts,
            states: shape.states,
            actions: shape.actions,
            horizon: shape.horizon,
            reward_support: decimals(model.reward_support())?,
            weights: decimals(model.weights())?,
            init: (0..shape.contexts)
                .map(|m| decimals(model.init_row(m)))
                .collect::<Result<_>>()?,
            transitions: nested(&shape, |m, s, a| decimals(model.transition_row(m, s, a)))?,
            rewards: nested(&shape, |m, s, a| decimals(model.reward_row(m, s, a)))?,
        })
    }

    /// Builds and validates the model.
    pub fn to_model(&self) -> Result<LmdpModel> {
        let shape = Shape {
            contexts: self.contexts,
            states: self.states,
            actions: self.actions,
            horizon: self.horizon,
            rewards: self.reward_support.len(),
        };
        if shape.contexts == 0 || shape.states == 0 || shape.actions == 0 || shape.horizon == 0 || shape.rewards == 0 {
            return Err(Error::InvalidModel(
                "M, S, A, H and the reward support must be nonempty".into(),
            ));
        }
        check_len("weights", self.weights.len(), shape.contexts)?;
        check_len("init", self.init.len(), shape.contexts)?;
        let mut init = Vec::with_capacity(shape.contexts * shape.states);
        for (m, row) in self.init.iter().enumerate() {
            check_len(&format!("init[{m}]"), row.len(), shape.states)?;
            init.extend(row.iter().map(Decimal::value));
        }
        LmdpModel::new(
            shape,
            self.reward_support.iter().map(Decimal::value).collect(),
            self.weights.iter().map(Decimal::value).collect(),
            init,
            flatten_rows("transitions", &self.transitions, &shape, shape.states)?,
            flatten_rows("rewards", &self.rewards, &shape, shape.rewards)?,
        )?
        .validated()
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            context: "model document".into(),
            message: e.to_string(),
        })
    }

    /// Canonical layout: one key per line, innermost rows on one line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, "");
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, indent: &str) {
        let inner = format!("{indent}  ");
        let _ = writeln!(out, "{{");
        let _ = writeln!(out, "{inner}\"M\": {},", self.contexts);
        let _ = writeln!(out, "{inner}\"S\": {},", self.states);
        let _ = writeln!(out, "{inner}\"A\": {},", self.actions);
        let _ = writeln!(out, "{inner}\"H\": {},", self.horizon);
        let _ = writeln!(out, "{inner}\"reward_support\": {},", row_text(&self.reward_support));
        let _ = writeln!(out, "{inner}\"weights\": {},", row_text(&self.weights));
        let _ = write!(out, "{inner}\"init\": ");
        write_nested(out, &inner, &self.init, |out, _, row| out.push_str(&row_text(row)));
        let _ = write!(out, ",\n{inner}\"transitions\": ");
        write_tables(out, &inner, &self.transitions);
        let _ = write!(out, ",\n{inner}\"rewards\": ");
        write_tables(out, &inner, &self.rewards);
        let _ = write!(out, "\n{indent}}}");
    }
}

fn row_text(row: &[Decimal]) -> String {
    let parts: Vec<&str> = row.iter().map(Decimal::text).collect();
    format!("[{}]", parts.join(", "))
}

fn write_nested<T>(out: &mut String, indent: &str, items: &[T], mut item: impl FnMut(&mut String, &str, &T)) {
    let inner = format!("{indent}  ");
    out.push_str("[\n");
    for (i, x) in items.iter().enumerate() {
        out.push_str(&inner);
        item(out, &inner, x);
        if i + 1 < items.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str(indent);
    out.push(']');
}

fn write_tables(out: &mut String, indent: &str, tables: &[Vec<Vec<Vec<Decimal>>>]) {
    write_nested(out, indent, tables, |out, indent, per_state| {
        write_nested(out, indent, per_state, |out, indent, per_action| {
            write_nested(out, indent, per_action, |out, _, row| out.push_str(&row_text(row)));
        });
    });
}

/// A model class: the members and the index of the data-generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDocument {
    pub truth: usize,
    pub models: Vec<ModelDocument>,
}

impl ClassDocument {
    pub fn from_models(models: &[LmdpModel], truth: usize) -> Result<Self> {
        Ok(ClassDocument {
            truth,
            models: models.iter().map(ModelDocument::from_model).collect::<Result<_>>()?,
        })
    }

    pub fn to_models(&self) -> Result<Vec<LmdpModel>> {
        self.models
            .iter()
            .enumerate()
            .map(|(i, d)| {
                d.to_model()
                    .map_err(|e| Error::InvalidModel(format!("class member {i}: {e}")))
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            context: "class document".into(),
            message: e.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{{\n  \"truth\": {},\n  \"models\": ", self.truth);
        write_nested(&mut out, "  ", &self.models, |out, indent, doc| doc.write(out, indent));
        out.push_str("\n}\n");
        out
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { message, .. } => Error::Parse {
            context: path.display().to_string(),
            message,
        },
        other => other,
    }
}

pub fn load_model(path: &Path) -> Result<LmdpModel> {
    ModelDocument::parse(&read(path)?)
        .and_then(|d| d.to_model())
        .map_err(|e| located(path, e))
}

pub fn save_model(path: &Path, model: &LmdpModel) -> Result<()> {
    write_file(path, &ModelDocument::from_model(model)?.to_text())
}

/// Loads a class document; the truth index is checked by the caller's class type.
pub fn load_class(path: &Path) -> Result<(Vec<LmdpModel>, usize)> {
    let doc = ClassDocument::parse(&read(path)?).map_err(|e| located(path, e))?;
    Ok((doc.to_models()?, doc.truth))
}

pub fn save_class(path: &Path, models: &[LmdpModel], truth: usize) -> Result<()> {
    write_file(path, &ClassDocument::from_models(models, truth)?.to_text())
}
