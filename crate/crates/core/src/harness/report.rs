use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::metrics::ApMode;
use crate::schema::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub format_version: String,
    pub grammar_version: String,
    pub tokenizer_version: String,
    pub pool_version: String,
    pub categories_version: String,
    pub ap_mode: ApMode,
    pub bleu_smoothing: bool,
    /// Conversion seed and config digest, when the ground truth has a sidecar.
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub task: TaskKind,
    pub samples: u64,
    pub missing: u64,
    pub parse_failures: u64,
    pub unknown_categories: u64,
    /// Undefined metrics (for example mIoU with no ground-truth pixels) are
    /// absent.
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub samples: u64,
    pub predictions: u64,
    pub missing: u64,
    pub parse_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub manifest: Manifest,
    /// One row per (dataset, task), sorted.
    pub rows: Vec<ReportRow>,
    pub totals: Totals,
}

impl MetricReport {
    pub fn row(&self, dataset: &str, task: TaskKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.dataset == dataset && r.task == task)
    }

    /// Every value of one metric across rows.
    pub fn values(&self, metric: &str) -> Vec<(&str, TaskKind, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.metrics.get(metric).map(|v| (r.dataset.as_str(), r.task, *v)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Machine,
    Markdown,
}

struct Family {
    title: &'static str,
    tasks: &'static [TaskKind],
    columns: &'static [(&'static str, &'static str)],
}

const FAMILIES: [Family; 4] = [
    Family {
        title: "Classification",
        tasks: &[
            TaskKind::Cls,
            TaskKind::ClsHbb,
            TaskKind::ClsObb,
            TaskKind::ClsPoly,
            TaskKind::Count,
            TaskKind::Vqa,
        ],
        columns: &[("accuracy", "Accuracy")],
    },
    Family {
        title: "Captioning",
        tasks: &[TaskKind::Cap, TaskKind::DCap, TaskKind::RCap],
        columns: &[
            ("bleu", "BLEU-4"),
            ("meteor", "METEOR"),
            ("rouge_l", "ROUGE-L"),
            ("cider", "CIDEr"),
        ],
    },
    Family {
        title: "Detection",
        tasks: &[TaskKind::DetHbb, TaskKind::DetObb, TaskKind::Vg],
        columns: &[("ap50", "AP@50")],
    },
    Family {
        title: "Segmentation",
        tasks: &[TaskKind::Seg, TaskKind::Cd],
        columns: &[("miou", "mIoU")],
    },
];

/// Renders the report. The machine form is lossless JSON; markdown prints
/// four decimals and one table per task family.
pub fn render_report(report: &MetricReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Machine => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Markdown => markdown(report),
    }
}

fn markdown(r: &MetricReport) -> String {
    let m = &r.manifest;
    let mut out = String::from("# Evaluation report\n\n");
    let opt = |v: Option<String>| v.unwrap_or_else(|| "n/a".into());
    let _ = writeln!(out, "| field | value |\n|---|---|");
    for (k, v) in [
        ("tool", m.tool_version.clone()),
        ("format", m.format_version.clone()),
        ("grammar", m.grammar_version.clone()),
        ("tokenizer", m.tokenizer_version.clone()),
        ("prompt pool", m.pool_version.clone()),
        ("categories", m.categories_version.clone()),
        ("AP mode", m.ap_mode.to_string()),
        ("BLEU smoothing", m.bleu_smoothing.to_string()),
        ("seed", opt(m.seed.map(|s| s.to_string()))),
        ("config sha256", opt(m.config_sha256.clone())),
        ("samples", r.totals.samples.to_string()),
        ("predictions", r.totals.predictions.to_string()),
        ("missing", r.totals.missing.to_string()),
        ("parse failures", r.totals.parse_failures.to_string()),
    ] {
        let _ = writeln!(out, "| {k} | {v} |");
    }
    for fam in &FAMILIES {
        let rows: Vec<&ReportRow> = r.rows.iter().filter(|row| fam.tasks.contains(&row.task)).collect();
        if rows.is_empty() {
            continue;
        }
        let _ = write!(out, "\n## {}\n\n| dataset | task | samples | missing |", fam.title);
        for (_, label) in fam.columns {
            let _ = write!(out, " {label} |");
        }
        let _ = write!(out, "\n|---|---|---:|---:|");
        for _ in fam.columns {
            out.push_str("---:|");
        }
        out.push('\n');
        for row in rows {
            let _ = write!(
                out,
                "| {} | {} | {} | {} |",
                row.dataset, row.task, row.samples, row.missing
            );
            for (key, _) in fam.columns {
                match row.metrics.get(*key) {
                    Some(v) => {
                        let _ = write!(out, " {v:.4} |");
                    }
                    None => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        Manifest {
            tool_version: "0".into(),
            format_version: "f".into(),
            grammar_version: "g".into(),
            tokenizer_version: "t".into(),
            pool_version: "p".into(),
            categories_version: "c".into(),
            ap_mode: ApMode::Paper,
            bleu_smoothing: false,
            seed: Some(7),
            config_sha256: None,
        }
    }

    fn report(rows: Vec<ReportRow>) -> MetricReport {
        MetricReport {
            manifest: manifest(),
            rows,
            totals: Totals::default(),
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let md = render_report(&report(vec![]), ReportFormat::Markdown);
        assert!(md.starts_with("# Evaluation report"));
        assert!(!md.contains("##"));
    }

    #[test]
    fn one_row_and_round_trip() {
        let row = ReportRow {
            dataset: "toy".into(),
            task: TaskKind::DetHbb,
            samples: 3,
            missing: 0,
            parse_failures: 0,
            unknown_categories: 0,
            metrics: [("ap50".to_string(), 0.123456789)].into_iter().collect(),
        };
        let r = report(vec![row]);
        let md = render_report(&r, ReportFormat::Markdown);
        let table_rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| toy")).collect();
        assert_eq!(table_rows, vec!["| toy | det_hbb | 3 | 0 | 0.1235 |"]);
        let back: MetricReport = serde_json::from_str(&render_report(&r, ReportFormat::Machine)).unwrap();
        assert_eq!(back, r);
        assert_eq!(format!("{:.4}", back.rows[0].metrics["ap50"]), "0.1235");
    }
}
