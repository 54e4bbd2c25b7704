//! Unified sample model, task kinds, category dictionary and the
//! line-delimited unified file format.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extsort::{ExternalSorter, SortError};
use crate::geometry::Geometry;
use crate::loctok::{self, StructuredPrediction};

/// Version tag of the unified record layout.
pub const FORMAT_VERSION: &str = "falcon-sft-v1";

const BUILTIN_CATEGORIES: &str = include_str!("../data/categories.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Cls,
    Cap,
    #[serde(rename = "dcap")]
    DCap,
    Count,
    Vqa,
    ClsHbb,
    ClsObb,
    #[serde(rename = "rcap")]
    RCap,
    DetHbb,
    DetObb,
    Vg,
    ClsPoly,
    Seg,
    Cd,
}

impl TaskKind {
    pub const ALL: [TaskKind; 14] = [
        TaskKind::Cls,
        TaskKind::Cap,
        TaskKind::DCap,
        TaskKind::Count,
        TaskKind::Vqa,
        TaskKind::ClsHbb,
        TaskKind::ClsObb,
        TaskKind::RCap,
        TaskKind::DetHbb,
        TaskKind::DetObb,
        TaskKind::Vg,
        TaskKind::ClsPoly,
        TaskKind::Seg,
        TaskKind::Cd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Cls => "cls",
            TaskKind::Cap => "cap",
            TaskKind::DCap => "dcap",
            TaskKind::Count => "count",
            TaskKind::Vqa => "vqa",
            TaskKind::ClsHbb => "cls_hbb",
            TaskKind::ClsObb => "cls_obb",
            TaskKind::RCap => "rcap",
            TaskKind::DetHbb => "det_hbb",
            TaskKind::DetObb => "det_obb",
            TaskKind::Vg => "vg",
            TaskKind::ClsPoly => "cls_poly",
            TaskKind::Seg => "seg",
            TaskKind::Cd => "cd",
        }
    }

    /// Number of images a sample of this task refers to.
    pub fn image_count(self) -> usize {
        if self == TaskKind::Cd {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown task {0:?}")]
pub struct UnknownTask(pub String);

impl FromStr for TaskKind {
    type Err = UnknownTask;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown category {0:?}")]
pub struct UnknownCategory(pub String);

/// Lowercase, trim, and collapse runs of whitespace, underscores and
/// hyphens into single spaces.
pub fn normalize_label(raw: &str) -> String {
    raw.split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Error)]
pub enum DictError {
    #[error("category dictionary: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("category dictionary: {0}")]
    Invalid(String),
}

#[derive(Deserialize)]
struct DictFile {
    version: String,
    canonical: Vec<String>,
    #[serde(default)]
    aliases: HashMap<String, String>,
}

/// Canonical category names plus an alias table from normalized surface
/// forms to canonical names.
#[derive(Debug, Clone)]
pub struct CategoryDict {
    version: String,
    canonical: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl CategoryDict {
    pub fn from_toml_str(text: &str) -> Result<Self, DictError> {
        let file: DictFile = toml::from_str(text)?;
        let mut lookup = HashMap::with_capacity(file.canonical.len() + file.aliases.len());
        for (i, name) in file.canonical.iter().enumerate() {
            if normalize_label(name) != *name {
                return Err(DictError::Invalid(format!(
                    "canonical name {name:?} is not in normalized form"
                )));
            }
            if lookup.insert(name.clone(), i).is_some() {
                return Err(DictError::Invalid(format!("duplicate canonical name {name:?}")));
            }
        }
        for (alias, target) in &file.aliases {
            let &idx = lookup
                .get(target.as_str())
                .filter(|&&i| file.canonical[i] == *target)
                .ok_or_else(|| DictError::Invalid(format!("alias {alias:?} maps to unknown {target:?}")))?;
            let key = normalize_label(alias);
            match lookup.get(&key) {
                Some(&existing) if existing != idx => {
                    return Err(DictError::Invalid(format!(
                        "alias {alias:?} conflicts with {:?}",
                        file.canonical[existing]
                    )))
                }
                _ => {
                    lookup.insert(key, idx);
                }
            }
        }
        Ok(Self {
            version: file.version,
            canonical: file.canonical,
            lookup,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, DictError> {
        let text = std::fs::read_to_string(path).map_err(|e| DictError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// The shipped dictionary.
    pub fn builtin() -> &'static CategoryDict {
        static DICT: OnceLock<CategoryDict> = OnceLock::new();
        DICT.get_or_init(|| CategoryDict::from_toml_str(BUILTIN_CATEGORIES).expect("shipped dictionary is valid"))
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn canonical(&self) -> &[String] {
        &self.canonical
    }

    pub fn map_category(&self, raw: &str) -> Result<&str, UnknownCategory> {
        let key = normalize_label(raw);
        self.lookup
            .get(&key)
            .map(|&i| self.canonical[i].as_str())
            .ok_or(UnknownCategory(key))
    }
}

/// One (image(s), task, instruction, answer) record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedSample {
    pub id: String,
    pub source_dataset: String,
    pub image_refs: Vec<String>,
    pub image_w: u32,
    pub image_h: u32,
    pub task: TaskKind,
    pub instruction: String,
    pub answer: String,
    pub ground_truth: StructuredPrediction,
    pub prompt_variant_id: u32,
}

/// Builds the stable id `{source}/{split}/{original_id}/{task}/{k}`.
pub fn sample_id(source: &str, split: &str, original_id: &str, task: TaskKind, k: usize) -> String {
    format!("{source}/{split}/{original_id}/{task}/{k}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyId,
    CardinalityViolation {
        expected: usize,
        found: usize,
    },
    EmptyInstruction,
    InvalidDimensions,
    /// Ground truth is not the structured arm the task produces.
    GroundTruthKind,
    GrammarViolation(String),
    /// Re-emitting the ground truth does not reproduce the answer.
    AnswerMismatch {
        emitted: String,
    },
    GeometryOutOfBounds,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => write!(f, "empty id"),
            Violation::CardinalityViolation { expected, found } => {
                write!(f, "expected {expected} image refs, found {found}")
            }
            Violation::EmptyInstruction => write!(f, "empty instruction"),
            Violation::InvalidDimensions => write!(f, "image dimensions must be positive"),
            Violation::GroundTruthKind => write!(f, "ground truth kind does not match task"),
            Violation::GrammarViolation(e) => write!(f, "answer violates task grammar: {e}"),
            Violation::AnswerMismatch { emitted } => {
                write!(f, "answer differs from re-emitted ground truth {emitted:?}")
            }
            Violation::GeometryOutOfBounds => write!(f, "ground-truth geometry outside image"),
        }
    }
}

fn geometries(gt: &StructuredPrediction) -> Vec<Geometry> {
    match gt {
        StructuredPrediction::Detections { detections } => detections.iter().map(|d| d.geometry.clone()).collect(),
        StructuredPrediction::Regions { regions } => regions.clone(),
        StructuredPrediction::Masks { masks } => masks
            .iter()
            .flat_map(|m| m.polygons.iter().cloned().map(Geometry::Polygon))
            .collect(),
        _ => vec![],
    }
}

/// Checks every record invariant. An empty result means the sample is valid.
pub fn validate_sample(s: &UnifiedSample, dict: &CategoryDict) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.id.is_empty() {
        out.push(Violation::EmptyId);
    }
    let expected = s.task.image_count();
    if s.image_refs.len() != expected {
        out.push(Violation::CardinalityViolation {
            expected,
            found: s.image_refs.len(),
        });
    }
    if s.instruction.trim().is_empty() {
        out.push(Violation::EmptyInstruction);
    }
    if s.image_w == 0 || s.image_h == 0 {
        out.push(Violation::InvalidDimensions);
        return out;
    }
    let (w, h) = (s.image_w as f64, s.image_h as f64);
    if !s.ground_truth.matches_task(s.task) {
        out.push(Violation::GroundTruthKind);
    } else {
        if geometries(&s.ground_truth).iter().any(|g| !g.within(w, h)) {
            out.push(Violation::GeometryOutOfBounds);
        }
        match loctok::emit_answer(&s.ground_truth, s.task, w, h) {
            Ok(emitted) if emitted != s.answer => out.push(Violation::AnswerMismatch { emitted }),
            Ok(_) => {}
            Err(e) => out.push(Violation::GrammarViolation(e.to_string())),
        }
    }
    match loctok::parse_prediction(&s.answer, s.task, w, h, dict) {
        Ok(parsed) => {
            if parsed.matches_task(s.task) && s.ground_truth.matches_task(s.task) {
                if let Ok(reemitted) = loctok::emit_answer(&parsed, s.task, w, h) {
                    if reemitted != s.answer {
                        out.push(Violation::GrammarViolation("answer is not in canonical form".into()));
                    }
                }
            }
        }
        Err(e) => out.push(Violation::GrammarViolation(e.to_string())),
    }
    out
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
}

impl From<SortError> for SchemaError {
    fn from(e: SortError) -> Self {
        match e {
            SortError::Io(e) => SchemaError::Io(e),
            SortError::DuplicateKey(k) => SchemaError::DuplicateId(k),
        }
    }
}

/// Streaming reader over a unified file. Records must be sorted by id
/// (which is how [`write_unified`] stores them); duplicates are detected
/// against the previous record.
pub struct UnifiedReader<R> {
    lines: io::Lines<R>,
    line_no: u64,
    previous: Option<String>,
    failed: bool,
}

impl<R: BufRead> UnifiedReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            lines: inner.lines(),
            line_no: 0,
            previous: None,
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for UnifiedReader<R> {
    type Item = Result<UnifiedSample, SchemaError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let result = loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => break Err(e.into()),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            break self.decode(&line);
        };
        if result.is_err() {
            self.failed = true;
        }
        Some(result)
    }
}

impl<R: BufRead> UnifiedReader<R> {
    fn decode(&mut self, line: &str) -> Result<UnifiedSample, SchemaError> {
        let sample: UnifiedSample = serde_json::from_str(line).map_err(|e| SchemaError::Parse {
            line: self.line_no,
            message: e.to_string(),
        })?;
        if let Some(prev) = &self.previous {
            match sample.id.as_str().cmp(prev.as_str()) {
                std::cmp::Ordering::Equal => return Err(SchemaError::DuplicateId(sample.id)),
                std::cmp::Ordering::Less => {
                    return Err(SchemaError::Parse {
                        line: self.line_no,
                        message: format!("record {:?} is not sorted by id", sample.id),
                    })
                }
                std::cmp::Ordering::Greater => {}
            }
        }
        self.previous = Some(sample.id.clone());
        Ok(sample)
    }
}

pub fn read_unified(path: &Path) -> Result<UnifiedReader<BufReader<File>>, SchemaError> {
    Ok(UnifiedReader::new(BufReader::new(File::open(path)?)))
}

/// Writes samples sorted by id through a bounded-memory external sort.
pub fn write_unified<I>(samples: I, path: &Path) -> Result<u64, SchemaError>
where
    I: IntoIterator<Item = UnifiedSample>,
{
    let mut sorter = ExternalSorter::default();
    for s in samples {
        let line = serde_json::to_string(&s).map_err(io::Error::from)?;
        sorter.push(s.id, line)?;
    }
    let file = File::create(path)?;
    Ok(sorter.finish(file)?)
}
