use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::thread;

use crossbeam_channel::bounded;
use serde::{Deserialize, Serialize};

use super::{load_config, DatasetFilter, HarnessError, Result, TOOL_VERSION};
use crate::extsort::{ExternalSorter, SortError, DEFAULT_BUDGET_BYTES};
use crate::ingest::RawRecord;
use crate::loctok::GRAMMAR_VERSION;
use crate::schema::FORMAT_VERSION;
use crate::taskgen::{Generator, Reconciliation, TaskgenError};

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub workers: usize,
    /// Overrides the config's seed.
    pub seed: Option<u64>,
    pub sort_budget: usize,
    /// Sources whose dataset the filter rejects are skipped.
    pub datasets: DatasetFilter,
}

impl ConvertOptions {
    pub fn new(config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            out: out.into(),
            workers: 1,
            seed: None,
            sort_budget: DEFAULT_BUDGET_BYTES,
            datasets: DatasetFilter::default(),
        }
    }
}

/// Machine-readable summary written next to the unified file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertSidecar {
    pub tool_version: String,
    pub format_version: String,
    pub grammar_version: String,
    pub pool_version: String,
    pub categories_version: String,
    pub seed: u64,
    pub variants: usize,
    pub config_sha256: String,
    pub samples: u64,
    pub total: Reconciliation,
    pub per_dataset: BTreeMap<String, Reconciliation>,
}

/// `<out>.report.json`
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

struct Batch {
    dataset: String,
    lines: Vec<(String, String)>,
    reconciliation: Reconciliation,
}

fn context(rec: &RawRecord, e: TaskgenError) -> HarnessError {
    let msg = format!("{}/{}/{}: {e}", rec.source_dataset, rec.split, rec.record_id);
    match e {
        TaskgenError::Config(_) => HarnessError::Config(msg),
        _ => HarnessError::Data(msg),
    }
}

/// Converts every configured source into one id-sorted unified file plus
/// its reconciliation sidecar. Output bytes do not depend on `workers`.
pub fn run_convert(opts: &ConvertOptions) -> Result<ConvertSidecar> {
    if opts.workers == 0 {
        return Err(HarnessError::Config("workers must be at least 1".into()));
    }
    let mut cfg = load_config(&opts.config, opts.seed)?;
    cfg.sources.retain(|s| opts.datasets.allows(s.dataset()));
    if cfg.sources.is_empty() {
        return Err(HarnessError::Config("the dataset filter leaves no sources".into()));
    }
    let generator = Generator::new(&cfg.conversion, &cfg.dict, &cfg.pool);
    let mut sorter = ExternalSorter::with_budget(opts.sort_budget);
    let mut per_dataset: BTreeMap<String, Reconciliation> = BTreeMap::new();
    let mut failure: Option<HarnessError> = None;

    thread::scope(|s| {
        let (rec_tx, rec_rx) = bounded::<RawRecord>(opts.workers * 8);
        let (out_tx, out_rx) = bounded::<Result<Batch>>(opts.workers * 8);
        let sources = &cfg.sources;
        let trace = cfg.trace;
        let reader = s.spawn(move || -> Result<()> {
            for src in sources {
                log::info!("reading {} ({})", src.path().display(), src.dataset());
                for rec in src.open(trace)? {
                    if rec_tx.send(rec?).is_err() {
                        return Ok(());
                    }
                }
            }
            Ok(())
        });
        for _ in 0..opts.workers {
            let rx = rec_rx.clone();
            let tx = out_tx.clone();
            let generator = &generator;
            s.spawn(move || {
                for rec in rx {
                    let batch = generator.generate(&rec).map_err(|e| context(&rec, e)).and_then(|g| {
                        let lines = g
                            .samples
                            .into_iter()
                            .map(|smp| {
                                let line = serde_json::to_string(&smp)
                                    .map_err(|e| HarnessError::Data(format!("{}: {e}", smp.id)))?;
                                Ok((smp.id, line))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(Batch {
                            dataset: rec.source_dataset.clone(),
                            lines,
                            reconciliation: g.reconciliation,
                        })
                    });
                    if tx.send(batch).is_err() {
                        return;
                    }
                }
            });
        }
        drop(rec_rx);
        drop(out_tx);
        for item in out_rx {
            let pushed = item.and_then(|b| {
                per_dataset.entry(b.dataset).or_default().merge(&b.reconciliation);
                for (id, line) in b.lines {
                    sorter.push(id, line).map_err(sort_error)?;
                }
                Ok(())
            });
            if let Err(e) = pushed {
                failure = Some(e);
                break;
            }
        }
        match reader.join() {
            Ok(Err(e)) if failure.is_none() => failure = Some(e),
            Err(_) if failure.is_none() => failure = Some(HarnessError::Data("reader thread panicked".into())),
            _ => {}
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let file = File::create(&opts.out).map_err(|e| HarnessError::io(&opts.out, e))?;
    let samples = sorter.finish(file).map_err(sort_error)?;
    let mut total = Reconciliation::default();
    for r in per_dataset.values() {
        total.merge(r);
    }
    let sidecar = ConvertSidecar {
        tool_version: TOOL_VERSION.to_string(),
        format_version: FORMAT_VERSION.to_string(),
        grammar_version: GRAMMAR_VERSION.to_string(),
        pool_version: cfg.pool.version().to_string(),
        categories_version: cfg.dict.version().to_string(),
        seed: cfg.conversion.seed,
        variants: cfg.conversion.variants,
        config_sha256: cfg.sha256.clone(),
        samples,
        total,
        per_dataset,
    };
    let side = sidecar_path(&opts.out);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&side, text + "\n").map_err(|e| HarnessError::io(&side, e))?;
    log::info!("wrote {samples} samples to {}", opts.out.display());
    Ok(sidecar)
}

fn sort_error(e: SortError) -> HarnessError {
    match e {
        SortError::Io(e) => HarnessError::Data(format!("external sort: {e}")),
        SortError::DuplicateKey(k) => HarnessError::Data(format!("duplicate sample id {k:?}")),
    }
}
