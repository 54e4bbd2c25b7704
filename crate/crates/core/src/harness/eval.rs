use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Seek, Write};
use std::iter::Peekable;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{Manifest, MetricReport, ReportFormat, ReportRow, Totals};
use super::{render_report, sidecar_path, ConvertSidecar, DatasetFilter, HarnessError, Result, TOOL_VERSION};
use crate::extsort::{ExternalSorter, SortError};
use crate::geometry::Geometry;
use crate::loctok::{parse_prediction_with, StructuredPrediction, UnknownPolicy, GRAMMAR_VERSION};
use crate::metrics::{
    is_correct, meteor, rouge_l_multi, tokenize, AccuracyTally, ApAccumulator, ApMode, BleuAccumulator, BleuOptions,
    CiderIdf, PixelTally, TOKENIZER_VERSION,
};
use crate::prompts::PromptPool;
use crate::schema::{read_unified, CategoryDict, TaskKind, UnifiedSample, FORMAT_VERSION};

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub task: TaskKind,
    pub output_text: String,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub gt: PathBuf,
    pub pred: PathBuf,
    pub ap_mode: ApMode,
    /// Directory receiving `report.json` and `report.md`.
    pub report_dir: Option<PathBuf>,
    /// Write oracle predictions to `pred` before evaluating.
    pub oracle: bool,
    pub bleu: BleuOptions,
    pub sort_budget: usize,
    /// Ground-truth samples of rejected datasets, and their predictions,
    /// are skipped.
    pub datasets: DatasetFilter,
}

impl EvalOptions {
    pub fn new(gt: impl Into<PathBuf>, pred: impl Into<PathBuf>) -> Self {
        Self {
            gt: gt.into(),
            pred: pred.into(),
            ap_mode: ApMode::Paper,
            report_dir: None,
            oracle: false,
            bleu: BleuOptions::default(),
            sort_budget: crate::extsort::DEFAULT_BUDGET_BYTES,
            datasets: DatasetFilter::default(),
        }
    }
}

/// Copies every ground-truth answer into a prediction file.
pub fn write_oracle_predictions(gt: &Path, out: &Path) -> Result<u64> {
    let file = File::create(out).map_err(|e| HarnessError::io(out, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for s in read_unified(gt)? {
        let s = s?;
        let rec = PredictionRecord {
            id: s.id,
            task: s.task,
            output_text: s.answer,
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| HarnessError::Data(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| HarnessError::io(out, e))?;
        n += 1;
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;
    Ok(n)
}

fn is_caption(t: TaskKind) -> bool {
    matches!(t, TaskKind::Cap | TaskKind::DCap | TaskKind::RCap)
}

enum Family {
    Accuracy(AccuracyTally),
    Caption {
        bleu: BleuAccumulator,
        meteor: f64,
        rouge: f64,
        cider: f64,
        n: u64,
    },
    Detection(ApAccumulator),
    Pixels(PixelTally),
}

struct Group {
    samples: u64,
    missing: u64,
    parse_failures: u64,
    unknown_categories: u64,
    family: Family,
}

impl Group {
    fn new(task: TaskKind, bleu: BleuOptions) -> Self {
        use TaskKind::*;
        let family = match task {
            Cap | DCap | RCap => Family::Caption {
                bleu: BleuAccumulator::new(bleu),
                meteor: 0.0,
                rouge: 0.0,
                cider: 0.0,
                n: 0,
            },
            DetHbb | DetObb | Vg => Family::Detection(ApAccumulator::default()),
            Seg | Cd => Family::Pixels(PixelTally::default()),
            Cls | ClsHbb | ClsObb | ClsPoly | Count | Vqa => Family::Accuracy(AccuracyTally::default()),
        };
        Self {
            samples: 0,
            missing: 0,
            parse_failures: 0,
            unknown_categories: 0,
            family,
        }
    }
}

const REGION_CLASS: &str = "region";

fn labeled(pred: &StructuredPrediction) -> Vec<(String, Geometry)> {
    match pred {
        StructuredPrediction::Detections { detections } => detections
            .iter()
            .map(|d| (d.category.clone(), d.geometry.clone()))
            .collect(),
        StructuredPrediction::Regions { regions } => {
            regions.iter().map(|g| (REGION_CLASS.to_string(), g.clone())).collect()
        }
        _ => vec![],
    }
}

fn has_unknown(pred: &StructuredPrediction, dict: &CategoryDict) -> bool {
    let unknown = |c: &str| dict.map_category(c) != Ok(c);
    match pred {
        StructuredPrediction::Labels { labels } => labels.iter().any(|l| unknown(l)),
        StructuredPrediction::Label { label } => !label.is_empty() && unknown(label),
        StructuredPrediction::Detections { detections } => detections.iter().any(|d| unknown(&d.category)),
        StructuredPrediction::Masks { masks } => masks.iter().any(|m| unknown(&m.category)),
        _ => false,
    }
}

/// Sorts the prediction file by id into a temporary file.
fn sorted_predictions(path: &Path, budget: usize) -> Result<File> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut sorter = ExternalSorter::with_budget(budget);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        sorter.push(rec.id, line).map_err(|e| sort_error(path, e))?;
    }
    let mut tmp = tempfile::tempfile().map_err(|e| HarnessError::io(path, e))?;
    sorter.finish(&mut tmp).map_err(|e| sort_error(path, e))?;
    tmp.rewind().map_err(|e| HarnessError::io(path, e))?;
    Ok(tmp)
}

fn sort_error(path: &Path, e: SortError) -> HarnessError {
    match e {
        SortError::Io(e) => HarnessError::io(path, e),
        SortError::DuplicateKey(k) => HarnessError::Data(format!("{}: duplicate prediction id {k:?}", path.display())),
    }
}

type PredIter = Peekable<Box<dyn Iterator<Item = Result<PredictionRecord>>>>;

fn pred_iter(file: File) -> PredIter {
    let it = BufReader::new(file).lines().map(|l| {
        let l = l.map_err(|e| HarnessError::Data(e.to_string()))?;
        serde_json::from_str::<PredictionRecord>(&l).map_err(|e| HarnessError::Data(e.to_string()))
    });
    (Box::new(it) as Box<dyn Iterator<Item = _>>).peekable()
}

fn id_mismatch(id: &str) -> HarnessError {
    HarnessError::Data(format!("IdMismatch: prediction id {id:?} is not in the ground truth"))
}

/// Takes the prediction for `id`, failing on any prediction id that sorts
/// before it (those cannot exist in the ground truth).
fn take_prediction(preds: &mut PredIter, id: &str) -> Result<Option<PredictionRecord>> {
    match preds.peek() {
        None => Ok(None),
        Some(Err(_)) => Err(preds.next().expect("peeked").unwrap_err()),
        Some(Ok(p)) if p.id.as_str() < id => Err(id_mismatch(&p.id)),
        Some(Ok(p)) if p.id == id => preds.next().transpose(),
        Some(Ok(_)) => Ok(None),
    }
}

fn read_sidecar(gt: &Path) -> Option<ConvertSidecar> {
    let text = std::fs::read_to_string(sidecar_path(gt)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Scores a prediction file against a unified ground-truth file.
pub fn run_eval(opts: &EvalOptions) -> Result<MetricReport> {
    let dict = CategoryDict::builtin();
    if opts.oracle {
        let n = write_oracle_predictions(&opts.gt, &opts.pred)?;
        log::info!("wrote {n} oracle predictions to {}", opts.pred.display());
    }

    // pass 1: reference document frequencies per caption group
    let mut idf: HashMap<(String, TaskKind), CiderIdf> = HashMap::new();
    for s in read_unified(&opts.gt)? {
        let s = s?;
        if is_caption(s.task) && opts.datasets.allows(&s.source_dataset) {
            idf.entry((s.source_dataset.clone(), s.task))
                .or_insert_with(|| CiderIdf::new(4))
                .add_references(&[tokenize(&s.answer)]);
        }
    }

    let mut preds = pred_iter(sorted_predictions(&opts.pred, opts.sort_budget)?);
    let mut groups: BTreeMap<(String, TaskKind), Group> = BTreeMap::new();
    let mut totals = Totals::default();
    for s in read_unified(&opts.gt)? {
        let s = s?;
        let pred = take_prediction(&mut preds, &s.id)?;
        if let Some(p) = &pred {
            if p.task != s.task {
                return Err(HarnessError::Data(format!(
                    "TaskMismatch: prediction {} is {} but ground truth is {}",
                    s.id, p.task, s.task
                )));
            }
        }
        if !opts.datasets.allows(&s.source_dataset) {
            continue;
        }
        if pred.is_some() {
            totals.predictions += 1;
        }
        let group = groups
            .entry((s.source_dataset.clone(), s.task))
            .or_insert_with(|| Group::new(s.task, opts.bleu));
        score_sample(&s, pred.map(|p| p.output_text), group, &idf, dict)?;
    }
    if let Some(p) = preds.next() {
        return Err(id_mismatch(&p?.id));
    }

    let sidecar = read_sidecar(&opts.gt);
    let mut rows = Vec::with_capacity(groups.len());
    for ((dataset, task), g) in groups {
        totals.samples += g.samples;
        totals.missing += g.missing;
        totals.parse_failures += g.parse_failures;
        let mut metrics = BTreeMap::new();
        match &g.family {
            Family::Accuracy(t) => {
                metrics.extend(t.value().map(|v| ("accuracy".to_string(), v)));
            }
            Family::Caption {
                bleu,
                meteor,
                rouge,
                cider,
                n,
            } => {
                let b = bleu.finish().map_err(|e| HarnessError::Data(e.to_string()))?;
                let n = *n as f64;
                metrics.insert("bleu".into(), b.score);
                metrics.insert("meteor".into(), meteor / n);
                metrics.insert("rouge_l".into(), rouge / n);
                metrics.insert("cider".into(), cider / n);
            }
            Family::Detection(acc) => {
                metrics.extend(acc.finish(opts.ap_mode).mean.map(|v| ("ap50".to_string(), v)));
            }
            Family::Pixels(t) => {
                metrics.extend(t.finish().mean.map(|v| ("miou".to_string(), v)));
            }
        }
        rows.push(ReportRow {
            dataset,
            task,
            samples: g.samples,
            missing: g.missing,
            parse_failures: g.parse_failures,
            unknown_categories: g.unknown_categories,
            metrics,
        });
    }
    let report = MetricReport {
        manifest: Manifest {
            tool_version: TOOL_VERSION.to_string(),
            format_version: FORMAT_VERSION.to_string(),
            grammar_version: GRAMMAR_VERSION.to_string(),
            tokenizer_version: TOKENIZER_VERSION.to_string(),
            pool_version: sidecar.as_ref().map_or_else(
                || PromptPool::builtin().version().to_string(),
                |s| s.pool_version.clone(),
            ),
            categories_version: dict.version().to_string(),
            ap_mode: opts.ap_mode,
            bleu_smoothing: opts.bleu.smoothing,
            seed: sidecar.as_ref().map(|s| s.seed),
            config_sha256: sidecar.map(|s| s.config_sha256),
        },
        rows,
        totals,
    };
    if let Some(dir) = &opts.report_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        for (name, fmt) in [
            ("report.json", ReportFormat::Machine),
            ("report.md", ReportFormat::Markdown),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, render_report(&report, fmt)).map_err(|e| HarnessError::io(&p, e))?;
        }
    }
    Ok(report)
}

fn score_sample(
    s: &UnifiedSample,
    output: Option<String>,
    g: &mut Group,
    idf: &HashMap<(String, TaskKind), CiderIdf>,
    dict: &CategoryDict,
) -> Result<()> {
    g.samples += 1;
    let (w, h) = (s.image_w as f64, s.image_h as f64);
    let pred = match &output {
        None => {
            g.missing += 1;
            StructuredPrediction::empty_for(s.task)
        }
        Some(text) => match parse_prediction_with(text, s.task, w, h, dict, UnknownPolicy::Keep) {
            Ok(p) => {
                g.unknown_categories += has_unknown(&p, dict) as u64;
                p
            }
            Err(e) => {
                log::debug!("{}: unparseable prediction: {e}", s.id);
                g.parse_failures += 1;
                StructuredPrediction::empty_for(s.task)
            }
        },
    };
    let data = |e: crate::metrics::MetricError| HarnessError::Data(format!("{}: {e}", s.id));
    match &mut g.family {
        Family::Accuracy(t) => t.add(is_correct(&pred, &s.ground_truth, dict)),
        Family::Caption {
            bleu,
            meteor: m,
            rouge,
            cider,
            n,
        } => {
            let cand = match &pred {
                StructuredPrediction::Caption { text } => tokenize(text),
                _ => vec![],
            };
            let refs = vec![tokenize(&s.answer)];
            bleu.add(&cand, &refs).map_err(data)?;
            *m += meteor(&cand, &refs).map_err(data)?;
            *rouge += rouge_l_multi(&cand, &refs).map_err(data)?;
            let table = idf
                .get(&(s.source_dataset.clone(), s.task))
                .expect("pass 1 covers every group");
            *cider += table.score(&cand, &refs).map_err(data)?;
            *n += 1;
        }
        Family::Detection(acc) => {
            acc.add_image(&labeled(&pred), &labeled(&s.ground_truth));
        }
        Family::Pixels(t) => match (&pred, &s.ground_truth) {
            (StructuredPrediction::Masks { masks: p }, StructuredPrediction::Masks { masks: gt }) => {
                t.add_masks(p, gt, s.image_w, s.image_h).map_err(data)?
            }
            (StructuredPrediction::Regions { regions: p }, StructuredPrediction::Regions { regions: gt }) => {
                t.add_regions(p, gt, s.image_w, s.image_h).map_err(data)?
            }
            _ => {
                return Err(HarnessError::Data(format!(
                    "{}: ground truth kind does not match task",
                    s.id
                )))
            }
        },
    }
    Ok(())
}
