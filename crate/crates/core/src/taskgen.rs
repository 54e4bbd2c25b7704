//! Expansion of raw source records into unified samples for every
//! applicable task.
//!
//! Ground-truth geometry is stored snapped to location-bin centers, so the
//! structured ground truth and the answer text describe exactly the same
//! shapes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{aabb_of, min_area_rect, Geometry, Hbb, Polygon, Quad};
use crate::ingest::{Payload, RawRecord, TraceStats};
use crate::loctok::{emit_answer, emit_location, snap_geometry, CategoryMask, Detection, StructuredPrediction};
use crate::prompts::{PromptError, PromptPool, Slots};
use crate::schema::{sample_id, validate_sample, CategoryDict, TaskKind, UnifiedSample};

#[derive(Debug, Error)]
pub enum TaskgenError {
    #[error("config: {0}")]
    Config(String),
    #[error("{record}: image sizes differ: {sizes:?}")]
    DimensionMismatch { record: String, sizes: Vec<(u32, u32)> },
    #[error("empty caption")]
    EmptyCaption,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("generated sample {id} is invalid: {violations}")]
    InvalidSample { id: String, violations: String },
}

pub type Result<T> = std::result::Result<T, TaskgenError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Connective {
    #[default]
    Or,
    And,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptionSplit {
    pub min_sentences: usize,
    pub min_words: usize,
    pub connective: Connective,
}

impl Default for CaptionSplit {
    fn default() -> Self {
        Self {
            min_sentences: 4,
            min_words: 35,
            connective: Connective::Or,
        }
    }
}

/// How boxes are derived from segmentation polygons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoxRule {
    /// HBB tasks take the axis-aligned enclosing box, OBB tasks the
    /// minimum-area rectangle.
    #[default]
    Semantic,
    /// The pairing as literally tabulated: OBB tasks get the axis-aligned
    /// rectangle as a quad, HBB tasks the bounds of the minimum-area
    /// rectangle.
    LiteralTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversionConfig {
    pub enabled_tasks: BTreeSet<TaskKind>,
    pub caption_split: CaptionSplit,
    pub include_zero_counts: bool,
    /// Canonical categories offered as zero-count negatives.
    pub zero_count_categories: Vec<String>,
    pub variants: usize,
    pub seed: u64,
    pub box_rule: BoxRule,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            enabled_tasks: TaskKind::ALL.into_iter().collect(),
            caption_split: CaptionSplit::default(),
            include_zero_counts: false,
            zero_count_categories: Vec::new(),
            variants: 3,
            seed: 0,
            box_rule: BoxRule::Semantic,
        }
    }
}

impl ConversionConfig {
    pub fn validate(&self, pool: &PromptPool, dict: &CategoryDict) -> Result<()> {
        if self.variants == 0 {
            return Err(TaskgenError::Config("variants must be at least 1".into()));
        }
        if self.caption_split.min_sentences == 0 || self.caption_split.min_words == 0 {
            return Err(TaskgenError::Config("caption thresholds must be at least 1".into()));
        }
        if self.enabled_tasks.is_empty() {
            return Err(TaskgenError::Config("no task enabled".into()));
        }
        let available = pool.min_size(self.enabled_tasks.iter().copied());
        if self.variants > available {
            return Err(TaskgenError::Config(format!(
                "{} variants requested but the smallest enabled pool has {available}",
                self.variants
            )));
        }
        if self.include_zero_counts && self.zero_count_categories.is_empty() {
            return Err(TaskgenError::Config(
                "include_zero_counts needs zero_count_categories".into(),
            ));
        }
        for c in &self.zero_count_categories {
            if dict.map_category(c).map_err(|e| TaskgenError::Config(e.to_string()))? != c {
                return Err(TaskgenError::Config(format!("{c:?} is not a canonical category")));
            }
        }
        Ok(())
    }

    fn on(&self, t: TaskKind) -> bool {
        self.enabled_tasks.contains(&t)
    }
}

fn sentence_count(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut pending = false;
    for (i, &c) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
            if boundary && pending {
                count += 1;
                pending = false;
            }
        } else if !c.is_whitespace() {
            pending = true;
        }
    }
    count + pending as usize
}

/// Classifies a caption as brief or detailed.
pub fn split_caption(text: &str, cfg: &CaptionSplit) -> Result<TaskKind> {
    if text.trim().is_empty() {
        return Err(TaskgenError::EmptyCaption);
    }
    let sentences = sentence_count(text) >= cfg.min_sentences;
    let words = text.split_whitespace().count() >= cfg.min_words;
    let detailed = match cfg.connective {
        Connective::Or => sentences || words,
        Connective::And => sentences && words,
    };
    Ok(if detailed { TaskKind::DCap } else { TaskKind::Cap })
}

/// Per-source accounting of annotation units. `annotations_in` always
/// equals `annotations_used` plus the rejects.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub records: u64,
    pub annotations_in: u64,
    pub annotations_used: u64,
    pub rejected: BTreeMap<String, u64>,
    /// Derived boxes that did not survive quantization; their source
    /// region is still used by other tasks.
    pub derived_skipped: u64,
    pub samples_by_task: BTreeMap<String, u64>,
    pub trace: TraceStats,
}

impl Reconciliation {
    pub fn merge(&mut self, o: &Reconciliation) {
        self.records += o.records;
        self.annotations_in += o.annotations_in;
        self.annotations_used += o.annotations_used;
        for (k, v) in &o.rejected {
            *self.rejected.entry(k.clone()).or_default() += v;
        }
        self.derived_skipped += o.derived_skipped;
        for (k, v) in &o.samples_by_task {
            *self.samples_by_task.entry(k.clone()).or_default() += v;
        }
        self.trace.merge(&o.trace);
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    /// Zero when every input annotation is accounted for.
    pub fn imbalance(&self) -> i128 {
        self.annotations_in as i128 - self.annotations_used as i128 - self.rejected_total() as i128
    }

    fn reject(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_default() += 1;
    }
}

pub const REJECT_UNKNOWN_CATEGORY: &str = "unknown_category";
pub const REJECT_BELOW_RESOLUTION: &str = "below_resolution";
pub const REJECT_TASK_DISABLED: &str = "task_disabled";
pub const REJECT_UNTRACEABLE: &str = "untraceable";

#[derive(Debug, Default)]
pub struct Generated {
    pub samples: Vec<UnifiedSample>,
    pub reconciliation: Reconciliation,
}

/// Stateless converter; one instance may serve many threads.
pub struct Generator<'a> {
    cfg: &'a ConversionConfig,
    dict: &'a CategoryDict,
    pool: &'a PromptPool,
}

struct Builder<'r> {
    rec: &'r RawRecord,
    out: Generated,
    next_base: BTreeMap<TaskKind, usize>,
}

fn snap(g: &Geometry, w: f64, h: f64) -> Option<Geometry> {
    let s = snap_geometry(g, w, h).ok()?;
    match &s {
        Geometry::Hbb(b) if b.width() <= 0.0 || b.height() <= 0.0 => None,
        _ => Some(s),
    }
}

impl<'a> Generator<'a> {
    pub fn new(cfg: &'a ConversionConfig, dict: &'a CategoryDict, pool: &'a PromptPool) -> Self {
        Self { cfg, dict, pool }
    }

    pub fn generate(&self, rec: &RawRecord) -> Result<Generated> {
        let mut b = Builder {
            rec,
            out: Generated::default(),
            next_base: BTreeMap::new(),
        };
        b.out.reconciliation.records = 1;
        b.out.reconciliation.trace = rec.trace;
        b.out.reconciliation.annotations_in = rec.payload.annotation_count() + rec.trace.untraceable;
        for _ in 0..rec.trace.untraceable {
            b.out.reconciliation.reject(REJECT_UNTRACEABLE);
        }
        match &rec.payload {
            Payload::Detections(objs) => self.expand_detection(&mut b, objs)?,
            Payload::SegmentationRegions(regions) => self.expand_segmentation(&mut b, regions)?,
            Payload::Captions(caps) => self.expand_captions(&mut b, caps)?,
            Payload::VqaPairs(qa) => {
                for p in qa {
                    if !self.cfg.on(TaskKind::Vqa) {
                        b.out.reconciliation.reject(REJECT_TASK_DISABLED);
                        continue;
                    }
                    let answer = p.answer.trim().to_string();
                    self.emit(
                        &mut b,
                        TaskKind::Vqa,
                        Slots::question(p.question.trim()),
                        StructuredPrediction::Caption { text: answer },
                    )?;
                    b.out.reconciliation.annotations_used += 1;
                }
            }
            Payload::Grounding(refs) => self.expand_grounding(&mut b, refs)?,
            Payload::ChangePair(polys) => self.expand_change(&mut b, polys)?,
            Payload::SceneLabel(label) => match self.dict.map_category(label) {
                Err(_) => b.out.reconciliation.reject(REJECT_UNKNOWN_CATEGORY),
                Ok(_) if !self.cfg.on(TaskKind::Cls) => b.out.reconciliation.reject(REJECT_TASK_DISABLED),
                Ok(c) => {
                    let labels = vec![c.to_string()];
                    self.emit(
                        &mut b,
                        TaskKind::Cls,
                        Slots::default(),
                        StructuredPrediction::Labels { labels },
                    )?;
                    b.out.reconciliation.annotations_used += 1;
                }
            },
        }
        Ok(b.out)
    }

    fn dims(&self, b: &Builder) -> (f64, f64) {
        (b.rec.image_w as f64, b.rec.image_h as f64)
    }

    /// Emits the `variants` instruction paraphrases of one base sample.
    fn emit(&self, b: &mut Builder, task: TaskKind, slots: Slots<'_>, gt: StructuredPrediction) -> Result<()> {
        let rec = b.rec;
        let (w, h) = self.dims(b);
        let base = {
            let n = b.next_base.entry(task).or_default();
            *n += 1;
            *n - 1
        };
        let answer = emit_answer(&gt, task, w, h).map_err(|e| TaskgenError::InvalidSample {
            id: sample_id(&rec.source_dataset, &rec.split, &rec.record_id, task, base),
            violations: e.to_string(),
        })?;
        let key = format!(
            "{}/{}/{}/{}/{}",
            rec.source_dataset, rec.split, rec.record_id, task, base
        );
        let m = self.cfg.variants;
        for (j, t) in self
            .pool
            .sample_variants(task, m, self.cfg.seed, &key)?
            .into_iter()
            .enumerate()
        {
            let s = UnifiedSample {
                id: sample_id(&rec.source_dataset, &rec.split, &rec.record_id, task, base * m + j),
                source_dataset: rec.source_dataset.clone(),
                image_refs: rec.image_refs.clone(),
                image_w: rec.image_w,
                image_h: rec.image_h,
                task,
                instruction: t.instantiate(&slots)?,
                answer: answer.clone(),
                ground_truth: gt.clone(),
                prompt_variant_id: t.template_id,
            };
            let violations = validate_sample(&s, self.dict);
            if !violations.is_empty() {
                let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Err(TaskgenError::InvalidSample {
                    id: s.id,
                    violations: text.join("; "),
                });
            }
            b.out.samples.push(s);
        }
        *b.out
            .reconciliation
            .samples_by_task
            .entry(task.name().to_string())
            .or_default() += m as u64;
        Ok(())
    }

    /// Shared tail of detection-like sources: classification, counting,
    /// region classification and per-category detection.
    fn labeled_geometries(
        &self,
        b: &mut Builder,
        items: &[(String, Geometry)],
        cls_task: TaskKind,
        det_task: TaskKind,
    ) -> Result<()> {
        let (w, h) = self.dims(b);
        let mut categories: Vec<&str> = Vec::new();
        for (c, g) in items {
            if !categories.contains(&c.as_str()) {
                categories.push(c);
            }
            if self.cfg.on(cls_task) {
                let region = emit_location(g, w, h).expect("snapped geometry emits");
                self.emit(
                    b,
                    cls_task,
                    Slots::region(&region),
                    StructuredPrediction::Label { label: c.clone() },
                )?;
            }
        }
        if self.cfg.on(det_task) {
            for &cat in &categories {
                let detections = items
                    .iter()
                    .filter(|(c, _)| c == cat)
                    .map(|(c, g)| Detection {
                        category: c.clone(),
                        geometry: g.clone(),
                    })
                    .collect();
                self.emit(
                    b,
                    det_task,
                    Slots::class(cat),
                    StructuredPrediction::Detections { detections },
                )?;
            }
        }
        Ok(())
    }

    fn classes_and_counts(&self, b: &mut Builder, labels: &[String], count: bool) -> Result<()> {
        let mut order: Vec<&str> = Vec::new();
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for l in labels {
            if !counts.contains_key(l.as_str()) {
                order.push(l);
            }
            *counts.entry(l).or_default() += 1;
        }
        if self.cfg.on(TaskKind::Cls) && !counts.is_empty() {
            let labels = counts.keys().map(|s| s.to_string()).collect();
            self.emit(
                b,
                TaskKind::Cls,
                Slots::default(),
                StructuredPrediction::Labels { labels },
            )?;
        }
        if count && self.cfg.on(TaskKind::Count) {
            for cat in &order {
                self.emit(
                    b,
                    TaskKind::Count,
                    Slots::class(cat),
                    StructuredPrediction::Count { count: counts[cat] },
                )?;
            }
            if self.cfg.include_zero_counts {
                for cat in &self.cfg.zero_count_categories {
                    if !counts.contains_key(cat.as_str()) {
                        self.emit(
                            b,
                            TaskKind::Count,
                            Slots::class(cat),
                            StructuredPrediction::Count { count: 0 },
                        )?;
                    }
                }
            }
        }
        Ok(())
    }

    fn expand_detection(&self, b: &mut Builder, objs: &[crate::ingest::RawObject]) -> Result<()> {
        let (w, h) = self.dims(b);
        let mut hbbs = Vec::new();
        let mut quads = Vec::new();
        for o in objs {
            let Ok(cat) = self.dict.map_category(&o.label) else {
                b.out.reconciliation.reject(REJECT_UNKNOWN_CATEGORY);
                continue;
            };
            let (cls, det) = match o.geometry {
                Geometry::Quad(_) => (TaskKind::ClsObb, TaskKind::DetObb),
                _ => (TaskKind::ClsHbb, TaskKind::DetHbb),
            };
            if ![TaskKind::Cls, TaskKind::Count, cls, det]
                .iter()
                .any(|t| self.cfg.on(*t))
            {
                b.out.reconciliation.reject(REJECT_TASK_DISABLED);
                continue;
            }
            let Some(g) = snap(&o.geometry, w, h) else {
                b.out.reconciliation.reject(REJECT_BELOW_RESOLUTION);
                continue;
            };
            b.out.reconciliation.annotations_used += 1;
            match g {
                Geometry::Quad(_) => quads.push((cat.to_string(), g)),
                _ => hbbs.push((cat.to_string(), g)),
            }
        }
        let labels: Vec<String> = hbbs.iter().chain(&quads).map(|(c, _)| c.clone()).collect();
        self.classes_and_counts(b, &labels, true)?;
        self.labeled_geometries(b, &hbbs, TaskKind::ClsHbb, TaskKind::DetHbb)?;
        self.labeled_geometries(b, &quads, TaskKind::ClsObb, TaskKind::DetObb)?;
        Ok(())
    }

    fn derived_boxes(&self, p: &Polygon, w: f64, h: f64) -> (Option<Geometry>, Option<Geometry>) {
        let aabb = aabb_of(p);
        let rect = min_area_rect(p).ok();
        match self.cfg.box_rule {
            BoxRule::Semantic => (
                snap(&Geometry::Hbb(aabb), w, h),
                rect.and_then(|q| snap(&Geometry::Quad(q), w, h)),
            ),
            BoxRule::LiteralTable => (
                rect.and_then(|q| Hbb::enclosing(q.vertices()).ok())
                    .and_then(|b| snap(&Geometry::Hbb(b), w, h)),
                Quad::new(aabb.corners())
                    .ok()
                    .and_then(|q| snap(&Geometry::Quad(q), w, h)),
            ),
        }
    }

    fn expand_segmentation(&self, b: &mut Builder, regions: &[crate::ingest::RawRegion]) -> Result<()> {
        let (w, h) = self.dims(b);
        let region_tasks = [
            TaskKind::Cls,
            TaskKind::ClsPoly,
            TaskKind::Seg,
            TaskKind::DetHbb,
            TaskKind::DetObb,
        ];
        if !region_tasks.iter().any(|t| self.cfg.on(*t)) {
            for _ in regions {
                b.out.reconciliation.reject(REJECT_TASK_DISABLED);
            }
            return Ok(());
        }
        let mut polys: Vec<(String, Polygon)> = Vec::new();
        for r in regions {
            let Ok(cat) = self.dict.map_category(&r.label) else {
                b.out.reconciliation.reject(REJECT_UNKNOWN_CATEGORY);
                continue;
            };
            let Some(Geometry::Polygon(p)) = snap(&Geometry::Polygon(r.polygon.clone()), w, h) else {
                b.out.reconciliation.reject(REJECT_BELOW_RESOLUTION);
                continue;
            };
            b.out.reconciliation.annotations_used += 1;
            polys.push((cat.to_string(), p));
        }
        let labels: Vec<String> = polys.iter().map(|(c, _)| c.clone()).collect();
        self.classes_and_counts(b, &labels, false)?;
        if self.cfg.on(TaskKind::ClsPoly) {
            for (c, p) in &polys {
                let region = emit_location(&Geometry::Polygon(p.clone()), w, h).expect("snapped polygon emits");
                self.emit(
                    b,
                    TaskKind::ClsPoly,
                    Slots::region(&region),
                    StructuredPrediction::Label { label: c.clone() },
                )?;
            }
        }
        let mut order: Vec<&str> = Vec::new();
        for (c, _) in &polys {
            if !order.contains(&c.as_str()) {
                order.push(c);
            }
        }
        if self.cfg.on(TaskKind::Seg) {
            for &cat in &order {
                let polygons = polys.iter().filter(|(c, _)| c == cat).map(|(_, p)| p.clone()).collect();
                let masks = vec![CategoryMask {
                    category: cat.to_string(),
                    polygons,
                }];
                self.emit(
                    b,
                    TaskKind::Seg,
                    Slots::class(cat),
                    StructuredPrediction::Masks { masks },
                )?;
            }
        }
        let want_h = self.cfg.on(TaskKind::DetHbb);
        let want_o = self.cfg.on(TaskKind::DetObb);
        if want_h || want_o {
            let mut hbbs = Vec::new();
            let mut quads = Vec::new();
            for (c, p) in &polys {
                let (hb, q) = self.derived_boxes(p, w, h);
                match hb {
                    Some(g) => hbbs.push((c.clone(), g)),
                    None if want_h => b.out.reconciliation.derived_skipped += 1,
                    None => {}
                }
                match q {
                    Some(g) => quads.push((c.clone(), g)),
                    None if want_o => b.out.reconciliation.derived_skipped += 1,
                    None => {}
                }
            }
            // region classification over derived boxes is not a tabulated
            // conversion, so only detection is emitted here
            if want_h {
                self.grouped_detection(b, &hbbs, TaskKind::DetHbb)?;
            }
            if want_o {
                self.grouped_detection(b, &quads, TaskKind::DetObb)?;
            }
        }
        Ok(())
    }

    fn grouped_detection(&self, b: &mut Builder, items: &[(String, Geometry)], task: TaskKind) -> Result<()> {
        let mut order: Vec<&str> = Vec::new();
        for (c, _) in items {
            if !order.contains(&c.as_str()) {
                order.push(c);
            }
        }
        for &cat in &order {
            let detections = items
                .iter()
                .filter(|(c, _)| c == cat)
                .map(|(c, g)| Detection {
                    category: c.clone(),
                    geometry: g.clone(),
                })
                .collect();
            self.emit(
                b,
                task,
                Slots::class(cat),
                StructuredPrediction::Detections { detections },
            )?;
        }
        Ok(())
    }

    fn expand_captions(&self, b: &mut Builder, caps: &[String]) -> Result<()> {
        for c in caps {
            let text = c.trim();
            let task = split_caption(text, &self.cfg.caption_split)?;
            if !self.cfg.on(task) {
                b.out.reconciliation.reject(REJECT_TASK_DISABLED);
                continue;
            }
            self.emit(
                b,
                task,
                Slots::default(),
                StructuredPrediction::Caption { text: text.to_string() },
            )?;
            b.out.reconciliation.annotations_used += 1;
        }
        Ok(())
    }

    fn expand_grounding(&self, b: &mut Builder, refs: &[crate::ingest::GroundingRef]) -> Result<()> {
        let (w, h) = self.dims(b);
        for r in refs {
            if !self.cfg.on(TaskKind::Vg) && !self.cfg.on(TaskKind::RCap) {
                b.out.reconciliation.reject(REJECT_TASK_DISABLED);
                continue;
            }
            let Some(g) = snap(&Geometry::Hbb(r.bbox), w, h) else {
                b.out.reconciliation.reject(REJECT_BELOW_RESOLUTION);
                continue;
            };
            let description = r.description.trim();
            b.out.reconciliation.annotations_used += 1;
            if self.cfg.on(TaskKind::Vg) {
                self.emit(
                    b,
                    TaskKind::Vg,
                    Slots::question(description),
                    StructuredPrediction::Regions {
                        regions: vec![g.clone()],
                    },
                )?;
            }
            if self.cfg.on(TaskKind::RCap) {
                let region = emit_location(&g, w, h).expect("snapped box emits");
                self.emit(
                    b,
                    TaskKind::RCap,
                    Slots::region(&region),
                    StructuredPrediction::Caption {
                        text: description.to_string(),
                    },
                )?;
            }
        }
        Ok(())
    }

    fn expand_change(&self, b: &mut Builder, polys: &[Polygon]) -> Result<()> {
        let rec = b.rec;
        if rec.image_sizes.windows(2).any(|p| p[0] != p[1]) {
            return Err(TaskgenError::DimensionMismatch {
                record: rec.record_id.clone(),
                sizes: rec.image_sizes.clone(),
            });
        }
        if !self.cfg.on(TaskKind::Cd) {
            for _ in polys {
                b.out.reconciliation.reject(REJECT_TASK_DISABLED);
            }
            return Ok(());
        }
        let (w, h) = self.dims(b);
        let mut regions = Vec::new();
        for p in polys {
            match snap(&Geometry::Polygon(p.clone()), w, h) {
                Some(g) => {
                    b.out.reconciliation.annotations_used += 1;
                    regions.push(g);
                }
                None => b.out.reconciliation.reject(REJECT_BELOW_RESOLUTION),
            }
        }
        self.emit(
            b,
            TaskKind::Cd,
            Slots::default(),
            StructuredPrediction::Regions { regions },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::ingest::{GroundingRef, QaPair, RawObject, RawRegion};
    use crate::loctok::parse_prediction;

    fn record(payload: Payload) -> RawRecord {
        RawRecord {
            source_dataset: "toy".into(),
            split: "train".into(),
            record_id: "r1".into(),
            image_refs: vec!["r1.png".into()],
            image_w: 448,
            image_h: 448,
            image_sizes: vec![(448, 448)],
            payload,
            trace: TraceStats::default(),
        }
    }

    fn run(cfg: &ConversionConfig, payload: Payload) -> Generated {
        Generator::new(cfg, CategoryDict::builtin(), PromptPool::builtin())
            .generate(&record(payload))
            .unwrap()
    }

    fn one_variant() -> ConversionConfig {
        ConversionConfig {
            variants: 1,
            ..ConversionConfig::default()
        }
    }

    fn hbb_obj(label: &str, x: f64) -> RawObject {
        RawObject {
            label: label.into(),
            geometry: Geometry::Hbb(Hbb::new(x, 10.0, x + 20.0, 40.0).unwrap()),
        }
    }

    fn of_task(g: &Generated, t: TaskKind) -> Vec<&UnifiedSample> {
        g.samples.iter().filter(|s| s.task == t).collect()
    }

    #[test]
    fn detection_counts_and_tasks() {
        let objs = vec![
            hbb_obj("plane", 0.0),
            hbb_obj("ship", 100.0),
            hbb_obj("airplane", 200.0),
            hbb_obj("ship", 300.0),
            hbb_obj("airplane", 400.0),
        ];
        let g = run(&one_variant(), Payload::Detections(objs));
        let counts: Vec<(&str, &str)> = of_task(&g, TaskKind::Count)
            .iter()
            .map(|s| (s.instruction.as_str(), s.answer.as_str()))
            .collect();
        assert_eq!(counts.len(), 2);
        assert!(counts[0].0.contains("airplane") && counts[0].1 == "3");
        assert!(counts[1].0.contains("ship") && counts[1].1 == "2");
        assert_eq!(of_task(&g, TaskKind::Cls)[0].answer, "airplane, ship");
        assert_eq!(of_task(&g, TaskKind::ClsHbb).len(), 5);
        assert_eq!(of_task(&g, TaskKind::DetHbb).len(), 2);
        assert_eq!(g.reconciliation.imbalance(), 0);
        assert_eq!(g.reconciliation.annotations_used, 5);
    }

    #[test]
    fn empty_detections_emit_nothing() {
        let g = run(&ConversionConfig::default(), Payload::Detections(vec![]));
        assert!(g.samples.is_empty());
    }

    #[test]
    fn single_box_region_instruction() {
        let g = run(&one_variant(), Payload::Detections(vec![hbb_obj("ship", 112.0)]));
        let s = of_task(&g, TaskKind::ClsHbb);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].instruction.matches("<box>").count(), 1);
        assert_eq!(s[0].answer, "ship");
    }

    #[test]
    fn unknown_and_tiny_objects_are_rejected() {
        let tiny = RawObject {
            label: "ship".into(),
            geometry: Geometry::Hbb(Hbb::new(10.0, 10.0, 10.1, 30.0).unwrap()),
        };
        let g = run(
            &one_variant(),
            Payload::Detections(vec![hbb_obj("spaceship", 0.0), tiny]),
        );
        assert!(g.samples.is_empty());
        assert_eq!(g.reconciliation.rejected[REJECT_UNKNOWN_CATEGORY], 1);
        assert_eq!(g.reconciliation.rejected[REJECT_BELOW_RESOLUTION], 1);
        assert_eq!(g.reconciliation.imbalance(), 0);
    }

    #[test]
    fn variants_have_distinct_templates() {
        let g = run(
            &ConversionConfig::default(),
            Payload::Detections(vec![hbb_obj("ship", 0.0)]),
        );
        let det = of_task(&g, TaskKind::DetHbb);
        assert_eq!(det.len(), 3);
        let ids: BTreeSet<u32> = det.iter().map(|s| s.prompt_variant_id).collect();
        assert_eq!(ids.len(), 3);
        assert!(det.iter().all(|s| s.answer == det[0].answer));
        assert!(det[2].id.ends_with("/det_hbb/2"));
    }

    #[test]
    fn segmentation_derivations() {
        let lake = Polygon::new(vec![
            Point::new(100.0, 50.0),
            Point::new(200.0, 100.0),
            Point::new(150.0, 200.0),
            Point::new(60.0, 120.0),
        ])
        .unwrap();
        let g = run(
            &one_variant(),
            Payload::SegmentationRegions(vec![RawRegion {
                label: "lake".into(),
                polygon: lake,
            }]),
        );
        let seg = of_task(&g, TaskKind::Seg);
        assert_eq!(seg.len(), 1);
        assert!(seg[0].answer.starts_with("lake<poly>"));
        let StructuredPrediction::Masks { masks } = &seg[0].ground_truth else {
            panic!()
        };
        let verts = masks[0].polygons[0].vertices().to_vec();
        let hbb = of_task(&g, TaskKind::DetHbb);
        let StructuredPrediction::Detections { detections } = &hbb[0].ground_truth else {
            panic!()
        };
        let b = detections[0].geometry.bounds();
        assert!(verts.iter().all(|p| b.contains(*p)));
        let obb = of_task(&g, TaskKind::DetObb);
        let StructuredPrediction::Detections { detections: q } = &obb[0].ground_truth else {
            panic!()
        };
        assert!(q[0].geometry.area() <= detections[0].geometry.area() + 1e-9);
        assert_eq!(of_task(&g, TaskKind::ClsPoly).len(), 1);
        assert_eq!(of_task(&g, TaskKind::Cls)[0].answer, "lake");
    }

    #[test]
    fn caption_thresholds() {
        let cfg = CaptionSplit::default();
        let words = |n: usize| vec!["word"; n].join(" ");
        assert_eq!(
            split_caption(&format!("{}. {}.", words(10), words(10)), &cfg).unwrap(),
            TaskKind::Cap
        );
        let four = format!("{}. {}. {}. {}.", words(8), words(8), words(7), words(7));
        assert_eq!(split_caption(&four, &cfg).unwrap(), TaskKind::DCap);
        assert_eq!(split_caption(&format!("{}.", words(35)), &cfg).unwrap(), TaskKind::DCap);
        let and = CaptionSplit {
            connective: Connective::And,
            ..cfg
        };
        assert_eq!(split_caption(&four, &and).unwrap(), TaskKind::Cap);
        assert!(matches!(split_caption("  ", &cfg), Err(TaskgenError::EmptyCaption)));
        assert_eq!(sentence_count("It is 3.5 m wide. Two"), 2);
        assert_eq!(sentence_count("Wow!!! Really?"), 2);
    }

    #[test]
    fn grounding_duality() {
        let r = GroundingRef {
            description: "the white ship".into(),
            bbox: Hbb::new(112.0, 112.0, 336.0, 336.0).unwrap(),
        };
        let g = run(&one_variant(), Payload::Grounding(vec![r]));
        assert_eq!(g.samples.len(), 2);
        let vg = of_task(&g, TaskKind::Vg)[0];
        let rcap = of_task(&g, TaskKind::RCap)[0];
        assert_eq!(vg.answer, "<box><loc_250><loc_250><loc_750><loc_750></box>");
        assert!(rcap.instruction.contains(&vg.answer));
        assert_eq!(rcap.answer, "the white ship");
        let parsed = parse_prediction(&vg.answer, TaskKind::Vg, 448.0, 448.0, CategoryDict::builtin()).unwrap();
        assert_eq!(parsed, vg.ground_truth);
        assert!(run(&one_variant(), Payload::Grounding(vec![])).samples.is_empty());
    }

    #[test]
    fn vqa_scene_and_change() {
        let g = run(
            &one_variant(),
            Payload::VqaPairs(vec![QaPair {
                question: "How many ships?".into(),
                answer: "2".into(),
            }]),
        );
        assert_eq!(g.samples.len(), 1);
        assert_eq!(g.samples[0].answer, "2");
        let g = run(&one_variant(), Payload::SceneLabel("beach".into()));
        assert_eq!(g.samples[0].answer, "beach");
        let mut cd = record(Payload::ChangePair(vec![]));
        cd.image_refs.push("r1_post.png".into());
        cd.image_sizes.push((448, 448));
        let cfg = one_variant();
        let gen = Generator::new(&cfg, CategoryDict::builtin(), PromptPool::builtin());
        let g = gen.generate(&cd).unwrap();
        assert_eq!(g.samples[0].answer, "no change");
        cd.image_sizes[1] = (224, 224);
        assert!(matches!(gen.generate(&cd), Err(TaskgenError::DimensionMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        let pool = PromptPool::builtin();
        let dict = CategoryDict::builtin();
        let mut cfg = ConversionConfig::default();
        assert!(cfg.validate(pool, dict).is_ok());
        cfg.variants = 0;
        assert!(cfg.validate(pool, dict).is_err());
        cfg.variants = 99;
        assert!(cfg.validate(pool, dict).is_err());
        cfg.variants = 1;
        cfg.include_zero_counts = true;
        assert!(cfg.validate(pool, dict).is_err());
        cfg.zero_count_categories = vec!["ship".into()];
        assert!(cfg.validate(pool, dict).is_ok());
        let g = Generator::new(&cfg, dict, pool)
            .generate(&record(Payload::Detections(vec![hbb_obj("plane", 0.0)])))
            .unwrap();
        let zero: Vec<_> = of_task(&g, TaskKind::Count)
            .into_iter()
            .filter(|s| s.answer == "0")
            .collect();
        assert_eq!(zero.len(), 1);
    }
}
