//! Scoring: accuracy, captioning metrics, AP at IoU 0.5 and mIoU.
//!
//! Text metrics share one tokenizer. Detection predictions carry no
//! confidence, so AP ranks predictions by emission order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rasterize, Geometry, GeometryError, Polygon};
use crate::loctok::{CategoryMask, StructuredPrediction};
use crate::schema::CategoryDict;

pub const TOKENIZER_VERSION: &str = "falcon-tok-v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty reference text")]
    EmptyText,
    #[error("{0} candidates but {1} reference sets")]
    LengthMismatch(usize, usize),
    #[error("sample has no references")]
    NoReferences,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Lowercases, drops punctuation except between two digits, and splits on
/// whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut cleaned = String::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || c.is_whitespace()
            || (i > 0 && chars[i - 1].is_ascii_digit() && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()));
        cleaned.push(if keep { c } else { ' ' });
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyTally {
    pub correct: u64,
    pub total: u64,
}

impl AccuracyTally {
    pub fn add(&mut self, correct: bool) {
        self.correct += correct as u64;
        self.total += 1;
    }

    pub fn merge(&mut self, o: &AccuracyTally) {
        self.correct += o.correct;
        self.total += o.total;
    }

    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Label equality after mapping both sides through the dictionary.
/// Unmappable text only matches identical normalized text.
pub fn labels_match(pred: &str, gt: &str, dict: &CategoryDict) -> bool {
    match (dict.map_category(pred), dict.map_category(gt)) {
        (Ok(a), Ok(b)) => a == b,
        (Err(_), Err(_)) => crate::schema::normalize_label(pred) == crate::schema::normalize_label(gt),
        _ => false,
    }
}

/// Closed-form answer equality on normalized tokens.
pub fn answers_match(pred: &str, gt: &str) -> bool {
    tokenize(pred) == tokenize(gt)
}

/// Correctness of one classification-family prediction.
pub fn is_correct(pred: &StructuredPrediction, gt: &StructuredPrediction, dict: &CategoryDict) -> bool {
    use StructuredPrediction as S;
    match (pred, gt) {
        (S::Labels { labels: p }, S::Labels { labels: g }) => {
            let map = |v: &[String]| -> BTreeSet<String> {
                v.iter()
                    .map(|l| dict.map_category(l).map(str::to_string).unwrap_or_else(|_| l.clone()))
                    .collect()
            };
            !g.is_empty() && map(p) == map(g)
        }
        (S::Label { label: p }, S::Label { label: g }) => labels_match(p, g, dict),
        (S::Count { count: p }, S::Count { count: g }) => p == g,
        (S::Caption { text: p }, S::Caption { text: g }) => answers_match(p, g),
        _ => false,
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<String, u64> {
    let mut out = HashMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w.join(" ")).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuOptions {
    pub max_n: usize,
    /// Add-one smoothing for orders above 1. Off reproduces the metric
    /// literally: any empty order gives 0.
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        Self {
            max_n: 4,
            smoothing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub candidate_len: u64,
    pub reference_len: u64,
}

/// Corpus-level clipped n-gram statistics, accumulated per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuAccumulator {
    opts: BleuOptions,
    matches: Vec<u64>,
    totals: Vec<u64>,
    cand_len: u64,
    ref_len: u64,
    samples: u64,
}

impl BleuAccumulator {
    pub fn new(opts: BleuOptions) -> Self {
        Self {
            opts,
            matches: vec![0; opts.max_n],
            totals: vec![0; opts.max_n],
            cand_len: 0,
            ref_len: 0,
            samples: 0,
        }
    }

    pub fn add(&mut self, cand: &[String], refs: &[Vec<String>]) -> Result<()> {
        if refs.is_empty() {
            return Err(MetricError::NoReferences);
        }
        self.samples += 1;
        for n in 1..=self.opts.max_n {
            let c = ngrams(cand, n);
            let mut max_ref: HashMap<&str, u64> = HashMap::new();
            let ref_grams: Vec<HashMap<String, u64>> = refs.iter().map(|r| ngrams(r, n)).collect();
            for g in &ref_grams {
                for (k, v) in g {
                    let e = max_ref.entry(k.as_str()).or_insert(0);
                    *e = (*e).max(*v);
                }
            }
            self.matches[n - 1] += c
                .iter()
                .map(|(k, v)| (*v).min(max_ref.get(k.as_str()).copied().unwrap_or(0)))
                .sum::<u64>();
            self.totals[n - 1] += cand.len().saturating_sub(n - 1) as u64;
        }
        self.cand_len += cand.len() as u64;
        let c = cand.len() as i64;
        let closest = refs
            .iter()
            .map(|r| r.len() as i64)
            .min_by_key(|&r| ((r - c).abs(), r))
            .unwrap_or(0);
        self.ref_len += closest as u64;
        Ok(())
    }

    pub fn merge(&mut self, o: &BleuAccumulator) {
        for n in 0..self.matches.len() {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.cand_len += o.cand_len;
        self.ref_len += o.ref_len;
        self.samples += o.samples;
    }

    pub fn finish(&self) -> Result<BleuScore> {
        if self.samples == 0 {
            return Err(MetricError::EmptyCorpus);
        }
        let precisions: Vec<f64> = (0..self.opts.max_n)
            .map(|i| {
                let (m, t) = (self.matches[i] as f64, self.totals[i] as f64);
                if self.opts.smoothing && i > 0 {
                    (m + 1.0) / (t + 1.0)
                } else if t == 0.0 {
                    0.0
                } else {
                    m / t
                }
            })
            .collect();
        let (c, r) = (self.cand_len as f64, self.ref_len as f64);
        let brevity_penalty = if c == 0.0 {
            0.0
        } else if c < r {
            (1.0 - r / c).exp()
        } else {
            1.0
        };
        let score = if precisions.contains(&0.0) {
            0.0
        } else {
            let w = 1.0 / self.opts.max_n as f64;
            brevity_penalty * precisions.iter().map(|p| w * p.ln()).sum::<f64>().exp()
        };
        Ok(BleuScore {
            score,
            precisions,
            brevity_penalty,
            candidate_len: self.cand_len,
            reference_len: self.ref_len,
        })
    }
}

pub fn bleu(cands: &[Vec<String>], refs: &[Vec<Vec<String>>], opts: BleuOptions) -> Result<BleuScore> {
    if cands.len() != refs.len() {
        return Err(MetricError::LengthMismatch(cands.len(), refs.len()));
    }
    let mut acc = BleuAccumulator::new(opts);
    for (c, r) in cands.iter().zip(refs) {
        acc.add(c, r)?;
    }
    acc.finish()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure. An empty candidate scores 0; an empty reference is an error.
pub fn rouge_l(cand: &[String], reference: &[String], beta: f64) -> Result<f64> {
    if reference.is_empty() {
        return Err(MetricError::EmptyText);
    }
    let l = lcs_len(cand, reference) as f64;
    if l == 0.0 {
        return Ok(0.0);
    }
    let r = l / reference.len() as f64;
    let p = l / cand.len() as f64;
    let b2 = beta * beta;
    Ok((1.0 + b2) * r * p / (r + b2 * p))
}

/// Best ROUGE-L over several references.
pub fn rouge_l_multi(cand: &[String], refs: &[Vec<String>]) -> Result<f64> {
    let mut best: Option<f64> = None;
    for r in refs {
        let s = rouge_l(cand, r, 1.0)?;
        best = Some(best.map_or(s, |b: f64| b.max(s)));
    }
    best.ok_or(MetricError::NoReferences)
}

#[allow(clippy::needless_range_loop)]
fn align(cand: &[String], reference: &[String], stemmer: &Stemmer) -> Vec<(usize, usize)> {
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let stem = |t: &String| stemmer.stem(t).into_owned();
    let cand_stems: Vec<String> = cand.iter().map(stem).collect();
    let ref_stems: Vec<String> = reference.iter().map(stem).collect();
    let stages: [&dyn Fn(usize, usize) -> bool; 2] =
        [&|i, j| cand[i] == reference[j], &|i, j| cand_stems[i] == ref_stems[j]];
    for matches in stages {
        let mut last: Option<(usize, usize)> = None;
        for i in 0..cand.len() {
            if cand_used[i] {
                last = pairs.iter().find(|p| p.0 == i).copied();
                continue;
            }
            let extend = last
                .filter(|&(li, lj)| li + 1 == i && lj + 1 < reference.len())
                .map(|(_, lj)| lj + 1)
                .filter(|&j| !ref_used[j] && matches(i, j));
            let j = extend.or_else(|| (0..reference.len()).find(|&j| !ref_used[j] && matches(i, j)));
            match j {
                Some(j) => {
                    cand_used[i] = true;
                    ref_used[j] = true;
                    pairs.push((i, j));
                    last = Some((i, j));
                }
                None => last = None,
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// METEOR against one reference: exact then stem alignment,
/// `F = 10PR / (R + 9P)`, penalty `0.5 (chunks / matches)^3`.
pub fn meteor_single(cand: &[String], reference: &[String]) -> Result<f64> {
    if reference.is_empty() {
        return Err(MetricError::EmptyText);
    }
    if cand.is_empty() {
        return Ok(0.0);
    }
    let stemmer = Stemmer::create(Algorithm::English);
    let pairs = align(cand, reference, &stemmer);
    let m = pairs.len() as f64;
    if m == 0.0 {
        return Ok(0.0);
    }
    let p = m / cand.len() as f64;
    let r = m / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks(&pairs) as f64 / m).powi(3);
    Ok(f * (1.0 - penalty))
}

/// Best METEOR over the references.
pub fn meteor(cand: &[String], refs: &[Vec<String>]) -> Result<f64> {
    let mut best: Option<f64> = None;
    for r in refs {
        let s = meteor_single(cand, r)?;
        best = Some(best.map_or(s, |b: f64| b.max(s)));
    }
    best.ok_or(MetricError::NoReferences)
}

/// Document frequencies over a reference corpus. A document is one
/// sample's reference set.
#[derive(Debug, Clone, Default)]
pub struct CiderIdf {
    max_n: usize,
    docs: u64,
    df: HashMap<String, u64>,
}

impl CiderIdf {
    pub fn new(max_n: usize) -> Self {
        Self {
            max_n,
            docs: 0,
            df: HashMap::new(),
        }
    }

    pub fn add_references(&mut self, refs: &[Vec<String>]) {
        self.docs += 1;
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for r in refs {
            for n in 1..=self.max_n {
                seen.extend(ngrams(r, n).into_keys());
            }
        }
        for g in seen {
            *self.df.entry(g).or_insert(0) += 1;
        }
    }

    pub fn documents(&self) -> u64 {
        self.docs
    }

    /// `log(N / (1 + n(t)))`; may be negative for very common n-grams.
    pub fn idf(&self, gram: &str) -> f64 {
        let n = self.df.get(gram).copied().unwrap_or(0) as f64;
        (self.docs as f64 / (1.0 + n)).ln()
    }

    fn vector(&self, tokens: &[String], n: usize) -> HashMap<String, f64> {
        ngrams(tokens, n)
            .into_iter()
            .map(|(g, tf)| {
                let w = tf as f64 * self.idf(&g);
                (g, w)
            })
            .collect()
    }

    /// Per-sample score: cosine per order, averaged over orders and then
    /// references. A zero-norm vector on either side scores 0 for that order.
    pub fn score(&self, cand: &[String], refs: &[Vec<String>]) -> Result<f64> {
        if refs.is_empty() {
            return Err(MetricError::NoReferences);
        }
        let mut total = 0.0;
        for r in refs {
            let mut per_ref = 0.0;
            for n in 1..=self.max_n {
                let c = self.vector(cand, n);
                let g = self.vector(r, n);
                let dot: f64 = c.iter().map(|(k, v)| v * g.get(k).copied().unwrap_or(0.0)).sum();
                let nc = c.values().map(|v| v * v).sum::<f64>().sqrt();
                let ng = g.values().map(|v| v * v).sum::<f64>().sqrt();
                if nc > 0.0 && ng > 0.0 {
                    per_ref += dot / (nc * ng);
                }
            }
            total += per_ref / self.max_n as f64;
        }
        Ok(total / refs.len() as f64)
    }
}

/// Corpus CIDEr: mean of per-sample scores, IDF from the references.
pub fn cider(cands: &[Vec<String>], refs: &[Vec<Vec<String>>], max_n: usize) -> Result<f64> {
    if cands.len() != refs.len() {
        return Err(MetricError::LengthMismatch(cands.len(), refs.len()));
    }
    if cands.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut idf = CiderIdf::new(max_n);
    for r in refs {
        idf.add_references(r);
    }
    let mut sum = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        sum += idf.score(c, r)?;
    }
    Ok(sum / cands.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// Mean over prediction prefixes of the prefix precision, times the
    /// recall of the full list.
    #[default]
    Paper,
    /// All-point interpolated AP.
    Voc,
}

impl std::str::FromStr for ApMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper" => Ok(ApMode::Paper),
            "voc" => Ok(ApMode::Voc),
            other => Err(format!("unknown AP mode {other:?} (expected paper or voc)")),
        }
    }
}

impl std::fmt::Display for ApMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ApMode::Paper => "paper",
            ApMode::Voc => "voc",
        })
    }
}

pub const IOU_THRESHOLD: f64 = 0.5;

/// Matching outcome for one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// For each prediction, the GT index it claimed.
    pub matched: Vec<Option<usize>>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy matching in emission order: each prediction claims the unmatched
/// same-category GT with the highest IoU at or above the threshold.
pub fn match_detections<F>(preds: &[(String, Geometry)], gts: &[(String, Geometry)], iou_fn: F) -> MatchResult
where
    F: Fn(&Geometry, &Geometry) -> f64,
{
    let mut taken = vec![false; gts.len()];
    let mut matched = Vec::with_capacity(preds.len());
    for (pc, pg) in preds {
        let mut best: Option<(usize, f64)> = None;
        for (j, (gc, gg)) in gts.iter().enumerate() {
            if taken[j] || gc != pc {
                continue;
            }
            let v = iou_fn(pg, gg);
            if v >= IOU_THRESHOLD && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
        }
        matched.push(best.map(|b| b.0));
    }
    let tp = matched.iter().filter(|m| m.is_some()).count();
    MatchResult {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
        matched,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct CategoryHits {
    gt: u64,
    hits: Vec<bool>,
}

/// Per-category AP over a dataset. Images must be added in a fixed order
/// (the harness uses id order); within an image predictions keep emission
/// order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApAccumulator {
    cats: BTreeMap<String, CategoryHits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub per_category: BTreeMap<String, f64>,
    pub mean: Option<f64>,
}

impl ApAccumulator {
    pub fn add_image(&mut self, preds: &[(String, Geometry)], gts: &[(String, Geometry)]) -> MatchResult {
        let m = match_detections(preds, gts, crate::geometry::iou);
        for (c, _) in gts {
            self.cats.entry(c.clone()).or_default().gt += 1;
        }
        for ((c, _), hit) in preds.iter().zip(&m.matched) {
            self.cats.entry(c.clone()).or_default().hits.push(hit.is_some());
        }
        m
    }

    pub fn finish(&self, mode: ApMode) -> ApReport {
        let per_category: BTreeMap<String, f64> = self
            .cats
            .iter()
            .filter(|(_, h)| h.gt > 0 || !h.hits.is_empty())
            .map(|(c, h)| (c.clone(), category_ap(&h.hits, h.gt, mode)))
            .collect();
        let mean = (!per_category.is_empty()).then(|| per_category.values().sum::<f64>() / per_category.len() as f64);
        ApReport { per_category, mean }
    }
}

/// AP of one category given the hit sequence in ranking order.
pub fn category_ap(hits: &[bool], n_gt: u64, mode: ApMode) -> f64 {
    if hits.is_empty() || n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0u64;
    let curve: Vec<(f64, f64)> = hits
        .iter()
        .enumerate()
        .map(|(d, &h)| {
            tp += h as u64;
            (tp as f64 / (d + 1) as f64, tp as f64 / n_gt as f64)
        })
        .collect();
    match mode {
        ApMode::Paper => {
            // recall of the whole list; precision of the prefix ending at d
            let recall = curve.last().map_or(0.0, |c| c.1);
            curve.iter().map(|(p, _)| p * recall).sum::<f64>() / hits.len() as f64
        }
        ApMode::Voc => {
            let mut ap = 0.0;
            let mut prev_r = 0.0;
            for i in 0..curve.len() {
                let r = curve[i].1;
                if r > prev_r {
                    let p_max = curve[i..].iter().map(|c| c.0).fold(0.0, f64::max);
                    ap += (r - prev_r) * p_max;
                    prev_r = r;
                }
            }
            ap
        }
    }
}

/// Category-labeled geometries of one image.
pub type Labeled = Vec<(String, Geometry)>;

pub fn ap_at_50(images: &[(Labeled, Labeled)], mode: ApMode) -> ApReport {
    let mut acc = ApAccumulator::default();
    for (p, g) in images {
        acc.add_image(p, g);
    }
    acc.finish(mode)
}

/// Pixel counts per class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionTally {
    pub fn iou(&self) -> Option<f64> {
        let d = self.tp + self.fp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PixelTally {
    per_class: BTreeMap<String, ConfusionTally>,
    gt_classes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouReport {
    pub per_class: BTreeMap<String, f64>,
    pub mean: Option<f64>,
}

pub const CHANGE_CLASS: &str = "changed";

fn class_masks<'a, I>(items: I) -> BTreeMap<&'a str, Vec<Polygon>>
where
    I: IntoIterator<Item = (&'a str, &'a Polygon)>,
{
    let mut out: BTreeMap<&str, Vec<Polygon>> = BTreeMap::new();
    for (c, p) in items {
        out.entry(c).or_default().push(p.clone());
    }
    out
}

impl PixelTally {
    /// Rasterizes both sides at the image resolution and accumulates counts.
    pub fn add_masks(&mut self, pred: &[CategoryMask], gt: &[CategoryMask], w: u32, h: u32) -> Result<()> {
        let p = class_masks(
            pred.iter()
                .flat_map(|m| m.polygons.iter().map(move |q| (m.category.as_str(), q))),
        );
        let g = class_masks(
            gt.iter()
                .flat_map(|m| m.polygons.iter().map(move |q| (m.category.as_str(), q))),
        );
        self.add_classes(&p, &g, w, h)
    }

    /// Change detection: every region belongs to one class.
    pub fn add_regions(&mut self, pred: &[Geometry], gt: &[Geometry], w: u32, h: u32) -> Result<()> {
        let pp: Vec<Polygon> = pred.iter().map(Geometry::to_polygon).collect();
        let gp: Vec<Polygon> = gt.iter().map(Geometry::to_polygon).collect();
        let p = class_masks(pp.iter().map(|q| (CHANGE_CLASS, q)));
        let g = class_masks(gp.iter().map(|q| (CHANGE_CLASS, q)));
        self.add_classes(&p, &g, w, h)
    }

    fn add_classes(
        &mut self,
        pred: &BTreeMap<&str, Vec<Polygon>>,
        gt: &BTreeMap<&str, Vec<Polygon>>,
        w: u32,
        h: u32,
    ) -> Result<()> {
        let classes: BTreeSet<&str> = pred.keys().chain(gt.keys()).copied().collect();
        for c in classes {
            let pm = rasterize(pred.get(c).map_or(&[][..], Vec::as_slice), w, h)?;
            let gm = rasterize(gt.get(c).map_or(&[][..], Vec::as_slice), w, h)?;
            let inter = pm.intersection_count(&gm).expect("same raster size");
            let (pc, gc) = (pm.count_ones(), gm.count_ones());
            let t = self.per_class.entry(c.to_string()).or_default();
            t.tp += inter;
            t.fp += pc - inter;
            t.fn_ += gc - inter;
            if gc > 0 {
                self.gt_classes.insert(c.to_string());
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, o: &PixelTally) {
        for (c, t) in &o.per_class {
            let e = self.per_class.entry(c.clone()).or_default();
            e.tp += t.tp;
            e.fp += t.fp;
            e.fn_ += t.fn_;
        }
        self.gt_classes.extend(o.gt_classes.iter().cloned());
    }

    pub fn tallies(&self) -> &BTreeMap<String, ConfusionTally> {
        &self.per_class
    }

    /// IoU per class present in ground truth, and their mean.
    pub fn finish(&self) -> MiouReport {
        let per_class: BTreeMap<String, f64> = self
            .gt_classes
            .iter()
            .filter_map(|c| Some((c.clone(), self.per_class.get(c)?.iou()?)))
            .collect();
        let mean = (!per_class.is_empty()).then(|| per_class.values().sum::<f64>() / per_class.len() as f64);
        MiouReport { per_class, mean }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Hbb, Point};

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(t("The Ship, 3.5 m long!"), vec!["the", "ship", "3.5", "m", "long"]);
        assert_eq!(t("a-b  c."), vec!["a", "b", "c"]);
        assert_eq!(t("1,000 cars"), vec!["1,000", "cars"]);
    }

    #[test]
    fn accuracy_cases() {
        let dict = CategoryDict::builtin();
        assert!(labels_match("car", "vehicle", dict));
        let c = |n| StructuredPrediction::Count { count: n };
        assert!(is_correct(&c(3), &c(3), dict));
        assert!(!is_correct(&c(3), &c(4), dict));
        let mut tally = AccuracyTally::default();
        tally.add(true);
        tally.add(false);
        assert_eq!(tally.value(), Some(0.5));
    }

    #[test]
    fn bleu_cases() {
        let same = vec![t("a small white ship near the dock")];
        let refs = vec![vec![same[0].clone()]];
        assert!((bleu(&same, &refs, BleuOptions::default()).unwrap().score - 1.0).abs() < 1e-12);
        let s = bleu(&[t("the the the the")], &[vec![t("the cat")]], BleuOptions::default()).unwrap();
        assert!((s.precisions[0] - 0.25).abs() < 1e-12);
        assert_eq!(s.score, 0.0);
        assert!(bleu(&[], &[], BleuOptions::default()).is_err());
    }

    #[test]
    fn meteor_cases() {
        let a = t("a b c d");
        assert!((meteor(&a, std::slice::from_ref(&a)).unwrap() - 0.9921875).abs() < 1e-12);
        assert_eq!(meteor(&t("x y"), &[t("a b")]).unwrap(), 0.0);
        assert!((meteor(&t("b a"), &[t("a b")]).unwrap() - 0.5).abs() < 1e-12);
        assert!(meteor(&t("ships docked"), &[t("ship docks")]).unwrap() > 0.0);
    }

    #[test]
    fn rouge_cases() {
        assert_eq!(rouge_l(&t("a b"), &t("a b"), 1.0).unwrap(), 1.0);
        assert!((rouge_l(&t("a b c d"), &t("a c d"), 1.0).unwrap() - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(rouge_l(&t("x"), &t("a"), 1.0).unwrap(), 0.0);
        assert!(rouge_l(&t("x"), &[], 1.0).is_err());
    }

    #[test]
    fn cider_cases() {
        let caps = [
            t("a ship near the dock"),
            t("two planes on the apron"),
            t("a green field"),
        ];
        let refs: Vec<Vec<Vec<String>>> = caps.iter().map(|c| vec![c.clone()]).collect();
        let mut idf = CiderIdf::new(4);
        for r in &refs {
            idf.add_references(r);
        }
        assert!((idf.score(&caps[0], &refs[0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((idf.score(&caps[2], &refs[2]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(idf.score(&t("xyz qqq"), &refs[0]).unwrap(), 0.0);
        let distinct = [
            t("a ship near the dock"),
            t("two planes on an apron"),
            t("green field beside river"),
        ];
        let drefs: Vec<Vec<Vec<String>>> = distinct.iter().map(|c| vec![c.clone()]).collect();
        assert!((cider(&distinct, &drefs, 4).unwrap() - 1.0).abs() < 1e-9);
    }

    fn boxed(c: &str, x: f64) -> (String, Geometry) {
        (c.to_string(), Geometry::Hbb(Hbb::new(x, 0.0, x + 10.0, 10.0).unwrap()))
    }

    #[test]
    fn ap_cases() {
        let one = ap_at_50(&[(vec![boxed("a", 2.0)], vec![boxed("a", 0.0)])], ApMode::Paper);
        assert_eq!(one.mean, Some(1.0));
        let voc = ap_at_50(&[(vec![boxed("a", 2.0)], vec![boxed("a", 0.0)])], ApMode::Voc);
        assert_eq!(voc.mean, Some(1.0));
        let half = ap_at_50(
            &[(vec![boxed("a", 0.0)], vec![boxed("a", 0.0), boxed("a", 50.0)])],
            ApMode::Paper,
        );
        assert!((half.mean.unwrap() - 0.5).abs() < 1e-12);
        let three_q = ap_at_50(
            &[(vec![boxed("a", 0.0), boxed("a", 80.0)], vec![boxed("a", 0.0)])],
            ApMode::Paper,
        );
        assert!((three_q.mean.unwrap() - 0.75).abs() < 1e-12);
        let voc2 = ap_at_50(
            &[(vec![boxed("a", 80.0), boxed("a", 0.0)], vec![boxed("a", 0.0)])],
            ApMode::Voc,
        );
        assert!((voc2.mean.unwrap() - 0.5).abs() < 1e-12);
        let xs = [0.0, 30.0, 60.0];
        let perfect: Vec<_> = xs.iter().map(|&x| boxed("a", x)).collect();
        let all = ap_at_50(&[(perfect.clone(), perfect)], ApMode::Paper);
        assert!((all.mean.unwrap() - 1.0).abs() < 1e-12);
        let empty = ap_at_50(&[(vec![], vec![])], ApMode::Paper);
        assert_eq!(empty.mean, None);
    }

    #[test]
    fn matching_claims_each_gt_once() {
        let m = match_detections(
            &[boxed("a", 0.0), boxed("a", 1.0), boxed("b", 0.0)],
            &[boxed("a", 0.0)],
            crate::geometry::iou,
        );
        assert_eq!(m.matched, vec![Some(0), None, None]);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 2, 0));
    }

    fn square(x: f64, y: f64, s: f64) -> Polygon {
        Polygon::new(vec![
            Point::new(x, y),
            Point::new(x + s, y),
            Point::new(x + s, y + s),
            Point::new(x, y + s),
        ])
        .unwrap()
    }

    #[test]
    fn miou_cases() {
        let m = |c: &str, p: Polygon| CategoryMask {
            category: c.into(),
            polygons: vec![p],
        };
        let gt = vec![m("a", square(0.0, 0.0, 10.0)), m("b", square(20.0, 20.0, 10.0))];
        let mut same = PixelTally::default();
        same.add_masks(&gt, &gt, 40, 40).unwrap();
        assert_eq!(same.finish().mean, Some(1.0));
        let pred = vec![m("a", square(0.0, 0.0, 10.0)), m("b", square(0.0, 20.0, 10.0))];
        let mut half = PixelTally::default();
        half.add_masks(&pred, &gt, 40, 40).unwrap();
        assert_eq!(half.finish().mean, Some(0.5));
        let mut none = PixelTally::default();
        none.add_masks(&[], &gt, 40, 40).unwrap();
        assert_eq!(none.finish().mean, Some(0.0));
        let mut cd = PixelTally::default();
        let g = vec![Geometry::Polygon(square(5.0, 5.0, 10.0))];
        cd.add_regions(&g, &g, 40, 40).unwrap();
        assert_eq!(cd.finish().per_class[CHANGE_CLASS], 1.0);
    }
}
