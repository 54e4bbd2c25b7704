use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::Result;
use crate::schema::{read_unified, validate_sample, CategoryDict};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub samples: u64,
    /// dataset -> task -> samples
    pub per_dataset: BTreeMap<String, BTreeMap<String, u64>>,
}

/// Streams a unified file, counting samples per dataset and task. `on_id`
/// sees every id in file order.
pub fn dataset_stats(path: &Path, mut on_id: impl FnMut(&str)) -> Result<DatasetStats> {
    let mut st = DatasetStats::default();
    for s in read_unified(path)? {
        let s = s?;
        on_id(&s.id);
        st.samples += 1;
        *st.per_dataset
            .entry(s.source_dataset)
            .or_default()
            .entry(s.task.name().to_string())
            .or_default() += 1;
    }
    Ok(st)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationSummary {
    pub samples: u64,
    pub invalid: u64,
}

/// Checks every sample; `on_violation` receives `(id, message)` pairs.
pub fn validate_file(
    path: &Path,
    dict: &CategoryDict,
    mut on_violation: impl FnMut(&str, &str),
) -> Result<ValidationSummary> {
    let mut sum = ValidationSummary::default();
    for s in read_unified(path)? {
        let s = s?;
        sum.samples += 1;
        let v = validate_sample(&s, dict);
        if !v.is_empty() {
            sum.invalid += 1;
            for x in v {
                on_violation(&s.id, &x.to_string());
            }
        }
    }
    Ok(sum)
}
