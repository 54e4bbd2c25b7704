//! Expand one detection record into instruction samples.

use forge::geometry::{Geometry, Hbb};
use forge::ingest::{Payload, RawObject, RawRecord, TraceStats};
use forge::prompts::PromptPool;
use forge::schema::CategoryDict;
use forge::taskgen::{ConversionConfig, Generator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let obj = |label: &str, x: f64| -> Result<RawObject, Box<dyn std::error::Error>> {
        Ok(RawObject {
            label: label.into(),
            geometry: Geometry::Hbb(Hbb::new(x, 40.0, x + 60.0, 90.0)?),
        })
    };
    let rec = RawRecord {
        source_dataset: "demo".into(),
        split: "train".into(),
        record_id: "0001".into(),
        image_refs: vec!["0001.png".into()],
        image_w: 512,
        image_h: 512,
        image_sizes: vec![(512, 512)],
        payload: Payload::Detections(vec![obj("plane", 10.0)?, obj("plane", 200.0)?, obj("ship", 300.0)?]),
        trace: TraceStats::default(),
    };
    let cfg = ConversionConfig {
        variants: 1,
        seed: 7,
        ..ConversionConfig::default()
    };
    let generated = Generator::new(&cfg, CategoryDict::builtin(), PromptPool::builtin()).generate(&rec)?;
    for s in &generated.samples {
        println!("{:<28} {:<60} => {}", s.id, s.instruction, s.answer);
    }
    println!("{:?}", generated.reconciliation.samples_by_task);
    Ok(())
}
