//! Instruction templates and the paraphrase pool.
//!
//! Variant selection is a pure function of `(seed, sample_id)`: the pair is
//! hashed into a ChaCha seed, so the choice never depends on the order in
//! which records are processed.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::TaskKind;

const BUILTIN_POOL: &str = include_str!("../data/prompts.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("template for {task} is missing slot {{{slot}}}")]
    MissingSlot { task: TaskKind, slot: &'static str },
    #[error("unexpected slot {{{slot}}} for {task}")]
    UnexpectedSlot { task: TaskKind, slot: String },
    #[error("requested {requested} variants but the {task} pool has {available}")]
    PoolExhausted {
        task: TaskKind,
        requested: usize,
        available: usize,
    },
    #[error("prompt pool: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Class,
    Region,
    Question,
}

impl Slot {
    pub fn name(self) -> &'static str {
        match self {
            Slot::Class => "class",
            Slot::Region => "region",
            Slot::Question => "question",
        }
    }

    fn marker(self) -> &'static str {
        match self {
            Slot::Class => "{class}",
            Slot::Region => "{region}",
            Slot::Question => "{question}",
        }
    }
}

/// The single slot each task's templates must carry, if any.
pub fn required_slot(task: TaskKind) -> Option<Slot> {
    use TaskKind::*;
    match task {
        Count | DetHbb | DetObb | Seg => Some(Slot::Class),
        ClsHbb | ClsObb | ClsPoly | RCap => Some(Slot::Region),
        Vg | Vqa => Some(Slot::Question),
        Cls | Cap | DCap | Cd => None,
    }
}

/// Values substituted into a template.
#[derive(Debug, Clone, Copy, Default)]
pub struct Slots<'a> {
    pub class: Option<&'a str>,
    pub region: Option<&'a str>,
    pub question: Option<&'a str>,
}

impl<'a> Slots<'a> {
    pub fn class(v: &'a str) -> Self {
        Self {
            class: Some(v),
            ..Self::default()
        }
    }

    pub fn region(v: &'a str) -> Self {
        Self {
            region: Some(v),
            ..Self::default()
        }
    }

    pub fn question(v: &'a str) -> Self {
        Self {
            question: Some(v),
            ..Self::default()
        }
    }

    fn get(&self, slot: Slot) -> Option<&'a str> {
        match slot {
            Slot::Class => self.class,
            Slot::Region => self.region,
            Slot::Question => self.question,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub task: TaskKind,
    pub template_id: u32,
    pub text: String,
}

impl PromptTemplate {
    /// Substitutes the task's slot. Supplying a slot the task does not use,
    /// or omitting the one it needs, is an error.
    pub fn instantiate(&self, slots: &Slots<'_>) -> Result<String, PromptError> {
        let required = required_slot(self.task);
        for slot in [Slot::Class, Slot::Region, Slot::Question] {
            if Some(slot) != required && slots.get(slot).is_some() {
                return Err(PromptError::UnexpectedSlot {
                    task: self.task,
                    slot: slot.name().to_string(),
                });
            }
        }
        let Some(slot) = required else {
            return Ok(self.text.clone());
        };
        let value = slots.get(slot).ok_or(PromptError::MissingSlot {
            task: self.task,
            slot: slot.name(),
        })?;
        // single pass: a value containing a marker is not re-expanded
        Ok(self.text.replace(slot.marker(), value))
    }
}

#[derive(Deserialize)]
struct PoolFile {
    pool_version: String,
    tasks: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct PromptPool {
    version: String,
    templates: BTreeMap<TaskKind, Vec<PromptTemplate>>,
}

fn slot_markers(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                out.push(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

impl PromptPool {
    pub fn from_toml_str(text: &str) -> Result<Self, PromptError> {
        let file: PoolFile = toml::from_str(text).map_err(|e| PromptError::Invalid(e.to_string()))?;
        let mut templates = BTreeMap::new();
        for (name, texts) in file.tasks {
            let task: TaskKind = name
                .parse()
                .map_err(|e: crate::schema::UnknownTask| PromptError::Invalid(e.to_string()))?;
            let required = required_slot(task);
            let mut list = Vec::with_capacity(texts.len());
            for (i, text) in texts.into_iter().enumerate() {
                if text.trim().is_empty() {
                    return Err(PromptError::Invalid(format!("empty template for {task}")));
                }
                let markers = slot_markers(&text);
                for m in &markers {
                    if required.map(Slot::name) != Some(*m) {
                        return Err(PromptError::UnexpectedSlot {
                            task,
                            slot: m.to_string(),
                        });
                    }
                }
                if let Some(slot) = required {
                    if markers.len() != 1 {
                        return Err(PromptError::MissingSlot {
                            task,
                            slot: slot.name(),
                        });
                    }
                }
                list.push(PromptTemplate {
                    task,
                    template_id: i as u32,
                    text,
                });
            }
            templates.insert(task, list);
        }
        for task in TaskKind::ALL {
            if templates.get(&task).is_none_or(Vec::is_empty) {
                return Err(PromptError::Invalid(format!("no templates for {task}")));
            }
        }
        Ok(Self {
            version: file.pool_version,
            templates,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, PromptError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PromptError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn builtin() -> &'static PromptPool {
        static POOL: OnceLock<PromptPool> = OnceLock::new();
        POOL.get_or_init(|| PromptPool::from_toml_str(BUILTIN_POOL).expect("shipped pool is valid"))
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn templates(&self, task: TaskKind) -> &[PromptTemplate] {
        self.templates.get(&task).map_or(&[], Vec::as_slice)
    }

    /// Smallest per-task pool among `tasks`.
    pub fn min_size<I: IntoIterator<Item = TaskKind>>(&self, tasks: I) -> usize {
        tasks.into_iter().map(|t| self.templates(t).len()).min().unwrap_or(0)
    }

    /// Draws `m` distinct templates without replacement, keyed by
    /// `(seed, sample_id)`.
    pub fn sample_variants(
        &self,
        task: TaskKind,
        m: usize,
        seed: u64,
        sample_id: &str,
    ) -> Result<Vec<&PromptTemplate>, PromptError> {
        let pool = self.templates(task);
        if m == 0 || m > pool.len() {
            return Err(PromptError::PoolExhausted {
                task,
                requested: m,
                available: pool.len(),
            });
        }
        let mut rng = keyed_rng(seed, sample_id);
        Ok(rand::seq::index::sample(&mut rng, pool.len(), m)
            .into_iter()
            .map(|i| &pool[i])
            .collect())
    }
}

/// Deterministic generator for one sample, independent of any shared state.
pub fn keyed_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> &'static PromptPool {
        PromptPool::builtin()
    }

    #[test]
    fn paper_templates_instantiate() {
        let det = &pool().templates(TaskKind::DetObb)[0];
        assert_eq!(
            det.instantiate(&Slots::class("airplane")).unwrap(),
            "Detect airplane in the image. Use Rotated bounding boxes."
        );
        let rcap = &pool().templates(TaskKind::RCap)[0];
        assert_eq!(
            rcap.instantiate(&Slots::region("<box><loc_250><loc_250><loc_750><loc_750></box>"))
                .unwrap(),
            "Describe the <box><loc_250><loc_250><loc_750><loc_750></box> in the image."
        );
        assert!(matches!(
            det.instantiate(&Slots::default()),
            Err(PromptError::MissingSlot { slot: "class", .. })
        ));
        assert!(matches!(
            det.instantiate(&Slots::region("x")),
            Err(PromptError::UnexpectedSlot { .. })
        ));
        let cap: Vec<_> = pool()
            .templates(TaskKind::Cap)
            .iter()
            .map(|t| t.text.as_str())
            .collect();
        for quoted in [
            "Describe the contents of this image.",
            "Analyze the image and explain its visual content.",
            "Can you identify what this image shows?",
        ] {
            assert!(cap.contains(&quoted));
        }
    }

    #[test]
    fn pool_validation() {
        let bad = "pool_version='v'\n[tasks]\ncount=['How many?']";
        assert!(PromptPool::from_toml_str(bad).is_err());
        let bad = "pool_version='v'\n[tasks]\ncls=['{class}']";
        assert!(matches!(
            PromptPool::from_toml_str(bad),
            Err(PromptError::UnexpectedSlot { .. })
        ));
    }

    #[test]
    fn single_template_pool() {
        let mut text = String::from("pool_version='v'\n[tasks]\n");
        for t in TaskKind::ALL {
            let body = match required_slot(t) {
                Some(s) => format!("x {}", s.marker()),
                None => "x".to_string(),
            };
            text.push_str(&format!("{} = ['{}']\n", t.name(), body));
        }
        let p = PromptPool::from_toml_str(&text).unwrap();
        let got = p.sample_variants(TaskKind::Cls, 1, 3, "id").unwrap();
        assert_eq!(got[0].template_id, 0);
        assert!(matches!(
            p.sample_variants(TaskKind::Cls, 2, 3, "id"),
            Err(PromptError::PoolExhausted { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_distinct() {
        let a = pool()
            .sample_variants(TaskKind::Cap, 3, 11, "ds/train/1/cap/0")
            .unwrap();
        let b = pool()
            .sample_variants(TaskKind::Cap, 3, 11, "ds/train/1/cap/0")
            .unwrap();
        assert_eq!(a, b);
        let n = pool().templates(TaskKind::Cap).len();
        let mut all: Vec<u32> = pool()
            .sample_variants(TaskKind::Cap, n, 11, "x")
            .unwrap()
            .iter()
            .map(|t| t.template_id)
            .collect();
        all.sort();
        assert_eq!(all, (0..n as u32).collect::<Vec<_>>());
    }

    #[test]
    fn selection_frequencies_are_uniform() {
        let k = pool().templates(TaskKind::Vqa).len();
        let draws = 10_000usize;
        let mut counts = vec![0usize; k];
        for i in 0..draws {
            let t = pool()
                .sample_variants(TaskKind::Vqa, 1, 5, &format!("sample-{i}"))
                .unwrap();
            counts[t[0].template_id as usize] += 1;
        }
        let p = 1.0 / k as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "count {c} vs mean {mean}");
        }
    }
}
