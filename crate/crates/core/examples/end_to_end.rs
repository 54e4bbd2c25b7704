//! Fixture -> convert -> oracle predictions -> report.

use forge::harness::{make_fixture, render_report, run_convert, run_eval, ConvertOptions, EvalOptions, ReportFormat};
use forge::metrics::ApMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let manifest = make_fixture(7, 10, dir.path())?;
    let unified = dir.path().join("unified.jsonl");
    let mut conv = ConvertOptions::new(&manifest.config, &unified);
    conv.workers = 2;
    let sidecar = run_convert(&conv)?;
    println!(
        "converted {} samples (expected {})",
        sidecar.samples,
        manifest.expected_samples()
    );

    let mut eval = EvalOptions::new(&unified, dir.path().join("pred.jsonl"));
    eval.oracle = true;
    eval.ap_mode = ApMode::Voc;
    let report = run_eval(&eval)?;
    println!("{}", render_report(&report, ReportFormat::Markdown));
    Ok(())
}
