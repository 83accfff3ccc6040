//! Relation records, their JSON form, the arithmetic dataset, and train/test splits.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded;

/// Marks where the subject goes in a prompt template.
pub const PLACEHOLDER: &str = "{}";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema violation in field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("duplicate relation name `{0}`")]
    DuplicateRelation(String),
    #[error("number_max {0} is smaller than the largest offset 100")]
    InvalidNumberMax(u32),
    #[error("ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("split leaves the {side} side empty ({context})")]
    EmptySide { side: &'static str, context: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub subject: String,
    pub object: String,
}

impl Sample {
    pub fn new(subject: impl Into<String>, object: impl Into<String>) -> Self {
        Self { subject: subject.into(), object: object.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationRecord {
    pub name: String,
    pub prompt_templates: Vec<String>,
    pub zs_prompt_templates: Vec<String>,
    pub relation_type: String,
    pub symmetric: bool,
    pub samples: Vec<Sample>,
}

impl RelationRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.name.is_empty() {
            return Err(schema("name", "relation name is empty"));
        }
        for (field, list) in [("prompt_templates", &self.prompt_templates), ("zs_prompt_templates", &self.zs_prompt_templates)] {
            for t in list {
                let n = t.matches(PLACEHOLDER).count();
                if n != 1 {
                    return Err(schema(field, &format!("template {t:?} of `{}` has {n} placeholders, expected 1", self.name)));
                }
            }
        }
        if self.samples.is_empty() {
            return Err(schema("samples", &format!("relation `{}` has no samples", self.name)));
        }
        Ok(())
    }
}

fn schema(field: &str, message: &str) -> DatasetError {
    DatasetError::Schema { field: field.to_string(), message: message.to_string() }
}

/// Checks every record and that names are unique.
pub fn validate_dataset(records: &[RelationRecord]) -> Result<(), DatasetError> {
    let mut names = HashSet::new();
    for r in records {
        r.validate()?;
        if !names.insert(r.name.as_str()) {
            return Err(DatasetError::DuplicateRelation(r.name.clone()));
        }
    }
    Ok(())
}

pub fn parse_dataset_json(text: &str) -> Result<Vec<RelationRecord>, DatasetError> {
    let records: Vec<RelationRecord> = serde_json::from_str(text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => DatasetError::Schema { field: missing_field(&e.to_string()), message: e.to_string() },
            _ => DatasetError::Parse { line: e.line(), column: e.column(), message: e.to_string() },
        }
    })?;
    validate_dataset(&records)?;
    Ok(records)
}

// serde reports "missing field `x`" / "unknown field `x`"; pull the name out
fn missing_field(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("<root>").to_string()
}

pub fn load_dataset_json(path: impl AsRef<Path>) -> Result<Vec<RelationRecord>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_dataset_json(&text)
}

pub fn save_dataset_json(records: &[RelationRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    validate_dataset(records)?;
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(records).expect("records serialize");
    text.push('\n');
    crate::store::write_atomic(path, text.as_bytes()).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

pub const PLUS_OFFSETS: [u32; 25] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 33, 50, 57, 73, 100];
pub const MINUS_OFFSETS: [u32; 25] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 33, 50, 57, 73, 100];

pub fn plus_name(x: u32) -> String {
    format!("number plus {x}")
}

pub fn minus_name(x: u32) -> String {
    format!("number minus {x}")
}

/// Expected sample counts of the 50 arithmetic relations (numbers 0..=200).
pub const REFERENCE_COUNTS: [(&str, usize); 50] = [
    ("number plus 0", 201), ("number plus 1", 200), ("number plus 2", 199), ("number plus 3", 198),
    ("number plus 4", 197), ("number plus 5", 196), ("number plus 6", 195), ("number plus 7", 194),
    ("number plus 8", 193), ("number plus 9", 192), ("number plus 10", 191), ("number plus 11", 190),
    ("number plus 12", 189), ("number plus 13", 188), ("number plus 14", 187), ("number plus 15", 186),
    ("number plus 16", 185), ("number plus 17", 184), ("number plus 18", 183), ("number plus 19", 182),
    ("number plus 33", 168), ("number plus 50", 151), ("number plus 57", 144), ("number plus 73", 128),
    ("number plus 100", 101),
    ("number minus 1", 201), ("number minus 2", 200), ("number minus 3", 199), ("number minus 4", 198),
    ("number minus 5", 197), ("number minus 6", 196), ("number minus 7", 195), ("number minus 8", 194),
    ("number minus 9", 193), ("number minus 10", 192), ("number minus 11", 191), ("number minus 12", 190),
    ("number minus 13", 189), ("number minus 14", 188), ("number minus 15", 187), ("number minus 16", 186),
    ("number minus 17", 185), ("number minus 18", 184), ("number minus 19", 183), ("number minus 20", 182),
    ("number minus 33", 168), ("number minus 50", 151), ("number minus 57", 144), ("number minus 73", 128),
    ("number minus 100", 101),
];

/// A generated relation whose sample count differs from [`REFERENCE_COUNTS`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountDeviation {
    pub relation: String,
    pub reference: usize,
    pub generated: usize,
}

/// The 50 addition/subtraction relations over `0..=number_max`.
///
/// Objects always stay inside `0..=number_max`: `plus X` uses subjects
/// `0..=number_max-X`, `minus X` uses `X..=number_max`. The expected-count table
/// lists one extra sample for `minus 1..=20`; those rows are reported by
/// [`reference_deviations`] and logged as warnings here.
pub fn generate_math_dataset(number_max: u32) -> Result<Vec<RelationRecord>, DatasetError> {
    if number_max < 100 {
        return Err(DatasetError::InvalidNumberMax(number_max));
    }
    let mut out = Vec::with_capacity(50);
    for x in PLUS_OFFSETS {
        out.push(RelationRecord {
            name: plus_name(x),
            prompt_templates: vec![format!("{{}} plus {x} equals")],
            zs_prompt_templates: vec![format!("{{}} plus {x} equals")],
            relation_type: "addition".into(),
            symmetric: false,
            samples: (0..=number_max - x).map(|n| Sample::new(n.to_string(), (n + x).to_string())).collect(),
        });
    }
    for x in MINUS_OFFSETS {
        out.push(RelationRecord {
            name: minus_name(x),
            prompt_templates: vec![format!("{{}} minus {x} equals")],
            zs_prompt_templates: vec![format!("{{}} minus {x} equals")],
            relation_type: "subtraction".into(),
            symmetric: false,
            samples: (x..=number_max).map(|n| Sample::new(n.to_string(), (n - x).to_string())).collect(),
        });
    }
    if number_max == 200 {
        for dev in reference_deviations(&out) {
            log::warn!(
                "`{}` has {} samples; the expected count is {} (which counts minus 1..20 as 202-X)",
                dev.relation,
                dev.generated,
                dev.reference
            );
        }
    }
    Ok(out)
}

/// Relations whose sample count disagrees with [`REFERENCE_COUNTS`].
pub fn reference_deviations(records: &[RelationRecord]) -> Vec<CountDeviation> {
    REFERENCE_COUNTS
        .iter()
        .filter_map(|(name, reference)| {
            let generated = records.iter().find(|r| r.name == *name).map_or(0, |r| r.samples.len());
            (generated != *reference).then(|| CountDeviation { relation: name.to_string(), reference: *reference, generated })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Every relation on both sides, samples disjoint.
    SampleWise,
    /// Relation names disjoint.
    RelationWise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<RelationRecord>,
    pub test: Vec<RelationRecord>,
    pub mode: SplitMode,
    pub ratio: f64,
    pub seed: u64,
}

fn train_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).floor() as usize
}

/// Seeded split; `floor(ratio·n)` items go to train, the rest to test.
pub fn split(dataset: &[RelationRecord], mode: SplitMode, ratio: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let mut rng = seeded(seed);
    let (train, test) = match mode {
        SplitMode::RelationWise => {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            let k = train_count(ratio, dataset.len());
            let ctx = || format!("{} relations at ratio {ratio}", dataset.len());
            if k == 0 {
                return Err(DatasetError::EmptySide { side: "train", context: ctx() });
            }
            if k == dataset.len() {
                return Err(DatasetError::EmptySide { side: "test", context: ctx() });
            }
            let pick = |idx: &[usize]| idx.iter().map(|&i| dataset[i].clone()).collect::<Vec<_>>();
            (pick(&order[..k]), pick(&order[k..]))
        }
        SplitMode::SampleWise => {
            let mut train = Vec::with_capacity(dataset.len());
            let mut test = Vec::with_capacity(dataset.len());
            for rel in dataset {
                let mut samples = rel.samples.clone();
                samples.shuffle(&mut rng);
                let k = train_count(ratio, samples.len());
                let ctx = || format!("relation `{}` with {} samples", rel.name, samples.len());
                if k == 0 {
                    return Err(DatasetError::EmptySide { side: "train", context: ctx() });
                }
                if k == samples.len() {
                    return Err(DatasetError::EmptySide { side: "test", context: ctx() });
                }
                let rest = samples.split_off(k);
                train.push(RelationRecord { samples, ..rel.clone() });
                test.push(RelationRecord { samples: rest, ..rel.clone() });
            }
            (train, test)
        }
    };
    Ok(DatasetSplit { train, test, mode, ratio, seed })
}
