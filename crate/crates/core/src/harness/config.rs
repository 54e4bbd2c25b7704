use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{sha256_hex, HarnessError, Result};
use crate::contour::TraceOptions;
use crate::ingest::{self, DetectionFlavor, Palette, RecordStream};
use crate::prompts::PromptPool;
use crate::schema::{CategoryDict, TaskKind};
use crate::taskgen::{BoxRule, CaptionSplit, ConversionConfig};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    variants: Option<usize>,
    enabled_tasks: Option<Vec<String>>,
    #[serde(default)]
    include_zero_counts: bool,
    #[serde(default)]
    zero_count_categories: Vec<String>,
    #[serde(default)]
    caption_split: CaptionSplit,
    #[serde(default)]
    box_rule: BoxRule,
    min_hole_area: Option<f64>,
    simplify_tolerance: Option<f64>,
    categories: Option<String>,
    prompts: Option<String>,
    #[serde(default)]
    sources: Vec<SourceSpec>,
}

/// One input source. Paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Detection {
        path: PathBuf,
        dataset: String,
        flavor: DetectionFlavor,
    },
    Mask {
        path: PathBuf,
        dataset: String,
        palette: PathBuf,
    },
    Caption {
        path: PathBuf,
        dataset: String,
    },
    Vqa {
        path: PathBuf,
        dataset: String,
    },
    Grounding {
        path: PathBuf,
        dataset: String,
    },
    Cd {
        path: PathBuf,
        dataset: String,
    },
    Scene {
        path: PathBuf,
        dataset: String,
    },
}

impl SourceSpec {
    pub fn dataset(&self) -> &str {
        match self {
            SourceSpec::Detection { dataset, .. }
            | SourceSpec::Mask { dataset, .. }
            | SourceSpec::Caption { dataset, .. }
            | SourceSpec::Vqa { dataset, .. }
            | SourceSpec::Grounding { dataset, .. }
            | SourceSpec::Cd { dataset, .. }
            | SourceSpec::Scene { dataset, .. } => dataset,
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            SourceSpec::Detection { path, .. }
            | SourceSpec::Mask { path, .. }
            | SourceSpec::Caption { path, .. }
            | SourceSpec::Vqa { path, .. }
            | SourceSpec::Grounding { path, .. }
            | SourceSpec::Cd { path, .. }
            | SourceSpec::Scene { path, .. } => path,
        }
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| *p = base.join(&*p);
        match self {
            SourceSpec::Mask { path, palette, .. } => {
                join(path);
                join(palette);
            }
            SourceSpec::Detection { path, .. }
            | SourceSpec::Caption { path, .. }
            | SourceSpec::Vqa { path, .. }
            | SourceSpec::Grounding { path, .. }
            | SourceSpec::Cd { path, .. }
            | SourceSpec::Scene { path, .. } => join(path),
        }
    }

    /// Opens the source as a record stream.
    pub fn open(&self, trace: TraceOptions) -> Result<RecordStream> {
        let ds = self.dataset();
        Ok(match self {
            SourceSpec::Detection { path, flavor, .. } => ingest::read_detection_source(path, *flavor, ds)?,
            SourceSpec::Mask { path, palette, .. } => {
                ingest::read_mask_manifest(path, Palette::from_path(palette)?, trace, ds)?
            }
            SourceSpec::Caption { path, .. } => ingest::read_caption_source(path, ds)?,
            SourceSpec::Vqa { path, .. } => ingest::read_vqa_source(path, ds)?,
            SourceSpec::Grounding { path, .. } => ingest::read_grounding_source(path, ds)?,
            SourceSpec::Cd { path, .. } => ingest::read_cd_source(path, trace, ds)?,
            SourceSpec::Scene { path, .. } => ingest::read_scene_source(path, ds)?,
        })
    }
}

/// A validated conversion configuration with its resources loaded.
pub struct LoadedConfig {
    pub conversion: ConversionConfig,
    pub trace: TraceOptions,
    pub sources: Vec<SourceSpec>,
    pub dict: CategoryDict,
    pub pool: PromptPool,
    pub sha256: String,
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

/// Parses and checks a conversion config; nothing is converted yet.
pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let file: ConfigFile = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));

    let enabled_tasks: BTreeSet<TaskKind> = match file.enabled_tasks {
        None => TaskKind::ALL.into_iter().collect(),
        Some(names) => names
            .iter()
            .map(|n| n.parse::<TaskKind>().map_err(config_err))
            .collect::<Result<_>>()?,
    };
    let dict = match &file.categories {
        Some(p) => CategoryDict::from_path(&base.join(p)).map_err(config_err)?,
        None => CategoryDict::builtin().clone(),
    };
    let pool = match &file.prompts {
        Some(p) => PromptPool::from_path(&base.join(p)).map_err(config_err)?,
        None => PromptPool::builtin().clone(),
    };
    let defaults = ConversionConfig::default();
    let conversion = ConversionConfig {
        enabled_tasks,
        caption_split: file.caption_split,
        include_zero_counts: file.include_zero_counts,
        zero_count_categories: file.zero_count_categories,
        variants: file.variants.unwrap_or(defaults.variants),
        seed: seed_override.or(file.seed).unwrap_or(defaults.seed),
        box_rule: file.box_rule,
    };
    conversion.validate(&pool, &dict).map_err(config_err)?;

    let trace_defaults = TraceOptions::default();
    let trace = TraceOptions {
        min_hole_area: file.min_hole_area.unwrap_or(trace_defaults.min_hole_area),
        simplify_tolerance: file.simplify_tolerance.unwrap_or(trace_defaults.simplify_tolerance),
    };
    if !(trace.min_hole_area >= 0.0 && trace.simplify_tolerance >= 0.0) {
        return Err(config_err("min_hole_area and simplify_tolerance must be non-negative"));
    }

    if file.sources.is_empty() {
        return Err(config_err("no sources configured"));
    }
    let mut sources = file.sources;
    for s in &mut sources {
        let ds = s.dataset();
        if ds.is_empty() || ds.contains('/') || ds.contains(char::is_whitespace) {
            return Err(config_err(format!(
                "dataset name {ds:?} must be non-empty without '/' or spaces"
            )));
        }
        s.resolve(base);
        if !s.path().is_file() {
            return Err(config_err(format!("source {} does not exist", s.path().display())));
        }
        if let SourceSpec::Mask { palette, .. } = s {
            if !palette.is_file() {
                return Err(config_err(format!("palette {} does not exist", palette.display())));
            }
        }
    }
    let sha256 = sha256_hex(text.as_bytes());
    Ok(LoadedConfig {
        conversion,
        trace,
        sources,
        dict,
        pool,
        sha256,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        std::fs::write(dir.join("det.jsonl"), "").unwrap();
        let p = dir.join("convert.toml");
        std::fs::write(&p, body).unwrap();
        p
    }

    const SOURCE: &str =
        "[[sources]]\nkind = 'detection'\npath = 'det.jsonl'\ndataset = 'toy'\nflavor = 'axis_aligned'\n";

    #[test]
    fn loads_and_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_config(dir.path(), &format!("seed = 4\nvariants = 2\n{SOURCE}"));
        let c = load_config(&p, None).unwrap();
        assert_eq!(c.conversion.seed, 4);
        assert_eq!(c.conversion.variants, 2);
        assert_eq!(c.sources[0].path(), dir.path().join("det.jsonl"));
        assert_eq!(load_config(&p, Some(9)).unwrap().conversion.seed, 9);
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        for body in [
            format!("enabled_tasks = ['det_hbb', 'detect_everything']\n{SOURCE}"),
            format!("variants = 0\n{SOURCE}"),
            format!("colour = 'red'\n{SOURCE}"),
            "seed = 1\n".to_string(),
            SOURCE.replace("det.jsonl", "missing.jsonl"),
            SOURCE.replace("'toy'", "'a/b'"),
        ] {
            let p = write_config(dir.path(), &body);
            let err = load_config(&p, None).err().expect(&body);
            assert_eq!(err.exit_code(), 2, "{body}");
        }
    }
}
