//! Source readers lifting the interchange formats into [`RawRecord`]s.
//!
//! Every reader is a deterministic stream in file order. Formats are
//! described in `docs/interchange.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use image::GrayImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{trace, TraceOptions};
use crate::geometry::{Geometry, GeometryError, Hbb, Point, Polygon, Quad};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}:{line}: {source}")]
    Geometry {
        path: PathBuf,
        line: u64,
        source: GeometryError,
    },
    #[error("{what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: String,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("{path}: pixel value {index} is neither background nor a palette class")]
    UnknownPaletteIndex { path: PathBuf, index: u8 },
    #[error("{path}:{line}: incomplete change pair: {message}")]
    Pairing { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionFlavor {
    AxisAligned,
    Oriented,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawObject {
    pub label: String,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRegion {
    pub label: String,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingRef {
    pub description: String,
    pub bbox: Hbb,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Detections(Vec<RawObject>),
    SegmentationRegions(Vec<RawRegion>),
    Captions(Vec<String>),
    VqaPairs(Vec<QaPair>),
    Grounding(Vec<GroundingRef>),
    ChangePair(Vec<Polygon>),
    SceneLabel(String),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Detections(_) => "detections",
            Payload::SegmentationRegions(_) => "segmentation",
            Payload::Captions(_) => "captions",
            Payload::VqaPairs(_) => "vqa",
            Payload::Grounding(_) => "grounding",
            Payload::ChangePair(_) => "change",
            Payload::SceneLabel(_) => "scene",
        }
    }

    /// Annotation units this payload carries, for reconciliation.
    pub fn annotation_count(&self) -> u64 {
        (match self {
            Payload::Detections(v) => v.len(),
            Payload::SegmentationRegions(v) => v.len(),
            Payload::Captions(v) => v.len(),
            Payload::VqaPairs(v) => v.len(),
            Payload::Grounding(v) => v.len(),
            Payload::ChangePair(v) => v.len(),
            Payload::SceneLabel(_) => 1,
        }) as u64
    }
}

/// Mask-tracing bookkeeping for one record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStats {
    pub components: u64,
    /// Components whose contour could not form a valid polygon.
    pub untraceable: u64,
    pub small_holes: u64,
    /// Holes above the size threshold, lost in the flat polygon form.
    pub unrepresented_holes: u64,
}

impl TraceStats {
    pub fn merge(&mut self, o: &TraceStats) {
        self.components += o.components;
        self.untraceable += o.untraceable;
        self.small_holes += o.small_holes;
        self.unrepresented_holes += o.unrepresented_holes;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub source_dataset: String,
    pub split: String,
    pub record_id: String,
    pub image_refs: Vec<String>,
    pub image_w: u32,
    pub image_h: u32,
    /// Size of every entry of `image_refs`, in order.
    pub image_sizes: Vec<(u32, u32)>,
    pub payload: Payload,
    pub trace: TraceStats,
}

fn default_split() -> String {
    "train".to_string()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    id: String,
    #[serde(default = "default_split")]
    split: String,
    image: String,
    width: u32,
    height: u32,
    #[serde(default)]
    objects: Vec<ObjectLine>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectLine {
    label: String,
    #[serde(default, rename = "box")]
    bbox: Option<[f64; 4]>,
    #[serde(default)]
    quad: Option<[[f64; 2]; 4]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptionLine {
    id: String,
    #[serde(default = "default_split")]
    split: String,
    image: String,
    width: u32,
    height: u32,
    captions: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VqaLine {
    id: String,
    #[serde(default = "default_split")]
    split: String,
    image: String,
    width: u32,
    height: u32,
    qa: Vec<QaPair>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundingLine {
    id: String,
    #[serde(default = "default_split")]
    split: String,
    image: String,
    width: u32,
    height: u32,
    refs: Vec<RefLine>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RefLine {
    description: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneLine {
    id: String,
    #[serde(default = "default_split")]
    split: String,
    image: String,
    width: u32,
    height: u32,
    label: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskLine {
    id: String,
    #[serde(default = "default_split")]
    split: String,
    image: String,
    mask: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChangeLine {
    id: String,
    #[serde(default = "default_split")]
    split: String,
    pre: Option<String>,
    post: Option<String>,
    mask: String,
}

/// Class-index palette of a mask source.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub background: BTreeSet<u8>,
    pub classes: BTreeMap<u8, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PaletteFile {
    #[serde(default)]
    background: Vec<u8>,
    classes: BTreeMap<String, String>,
}

impl Palette {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let file: PaletteFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut classes = BTreeMap::new();
        for (k, v) in file.classes {
            let idx: u8 = k.parse().map_err(|_| format!("palette index {k:?} is not 0..=255"))?;
            if v.trim().is_empty() {
                return Err(format!("palette index {idx} has an empty label"));
            }
            if file.background.contains(&idx) {
                return Err(format!("palette index {idx} is both background and a class"));
            }
            classes.insert(idx, v);
        }
        Ok(Self {
            background: file.background.into_iter().collect(),
            classes,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|message| IngestError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        })
    }
}

struct Jsonl<T> {
    path: PathBuf,
    lines: io::Lines<BufReader<File>>,
    line_no: u64,
    _t: std::marker::PhantomData<T>,
}

fn open_jsonl<T>(path: &Path) -> Result<Jsonl<T>> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Jsonl {
        path: path.to_path_buf(),
        lines: BufReader::new(file).lines(),
        line_no: 0,
        _t: std::marker::PhantomData,
    })
}

impl<T: DeserializeOwned> Iterator for Jsonl<T> {
    type Item = Result<(u64, T)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(source) => {
                    return Some(Err(IngestError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(
                serde_json::from_str(&line)
                    .map(|t| (self.line_no, t))
                    .map_err(|e| IngestError::Parse {
                        path: self.path.clone(),
                        line: self.line_no,
                        message: e.to_string(),
                    }),
            );
        }
    }
}

/// Stream of records from one source file.
pub type RecordStream = Box<dyn Iterator<Item = Result<RawRecord>> + Send>;

struct Ctx {
    path: PathBuf,
    line: u64,
}

impl Ctx {
    fn parse(&self, message: impl Into<String>) -> IngestError {
        IngestError::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn geometry(&self, source: GeometryError) -> IngestError {
        IngestError::Geometry {
            path: self.path.clone(),
            line: self.line,
            source,
        }
    }

    fn check_dims(&self, w: u32, h: u32) -> Result<()> {
        if w == 0 || h == 0 {
            return Err(self.parse(format!("image size {w}x{h} must be positive")));
        }
        Ok(())
    }

    fn label(&self, s: String) -> Result<String> {
        if s.trim().is_empty() {
            return Err(self.parse("empty label"));
        }
        Ok(s)
    }

    fn clamp(&self, g: Geometry, w: u32, h: u32) -> Result<Geometry> {
        let (w, h) = (w as f64, h as f64);
        if g.within(w, h) {
            return Ok(g);
        }
        log::warn!(
            "{}:{}: geometry outside {w}x{h}, clamped",
            self.path.display(),
            self.line
        );
        g.clamped(w, h).map_err(|e| self.geometry(e))
    }
}

fn stream<T, F>(path: &Path, mut convert: F) -> Result<RecordStream>
where
    T: DeserializeOwned + Send + 'static,
    F: FnMut(T, &Ctx) -> Result<RawRecord> + Send + 'static,
{
    let lines = open_jsonl::<T>(path)?;
    let path = path.to_path_buf();
    Ok(Box::new(lines.map(move |item| {
        let (line, t) = item?;
        convert(
            t,
            &Ctx {
                path: path.clone(),
                line,
            },
        )
    })))
}

fn single_image(
    dataset: &str,
    split: String,
    id: String,
    image: String,
    w: u32,
    h: u32,
    payload: Payload,
) -> RawRecord {
    RawRecord {
        source_dataset: dataset.to_string(),
        split,
        record_id: id,
        image_refs: vec![image],
        image_w: w,
        image_h: h,
        image_sizes: vec![(w, h)],
        payload,
        trace: TraceStats::default(),
    }
}

fn hbb(b: [f64; 4], ctx: &Ctx) -> Result<Hbb> {
    Hbb::new(b[0], b[1], b[2], b[3]).map_err(|e| ctx.geometry(e))
}

pub fn read_detection_source(path: &Path, flavor: DetectionFlavor, dataset: &str) -> Result<RecordStream> {
    let dataset = dataset.to_string();
    stream(path, move |l: DetectionLine, ctx| {
        ctx.check_dims(l.width, l.height)?;
        let mut objects = Vec::with_capacity(l.objects.len());
        for o in l.objects {
            let geometry = match (flavor, o.bbox, o.quad) {
                (DetectionFlavor::AxisAligned, Some(b), None) => Geometry::Hbb(hbb(b, ctx)?),
                (DetectionFlavor::Oriented, None, Some(q)) => {
                    let v = q.map(|[x, y]| Point::new(x, y));
                    Geometry::Quad(Quad::new(v).map_err(|e| ctx.geometry(e))?)
                }
                (DetectionFlavor::AxisAligned, ..) => {
                    return Err(ctx.parse("axis-aligned objects need exactly a `box`"))
                }
                (DetectionFlavor::Oriented, ..) => return Err(ctx.parse("oriented objects need exactly a `quad`")),
            };
            objects.push(RawObject {
                label: ctx.label(o.label)?,
                geometry: ctx.clamp(geometry, l.width, l.height)?,
            });
        }
        Ok(single_image(
            &dataset,
            l.split,
            l.id,
            l.image,
            l.width,
            l.height,
            Payload::Detections(objects),
        ))
    })
}

pub fn read_caption_source(path: &Path, dataset: &str) -> Result<RecordStream> {
    let dataset = dataset.to_string();
    stream(path, move |l: CaptionLine, ctx| {
        ctx.check_dims(l.width, l.height)?;
        if l.captions.iter().any(|c| c.trim().is_empty()) {
            return Err(ctx.parse("empty caption"));
        }
        Ok(single_image(
            &dataset,
            l.split,
            l.id,
            l.image,
            l.width,
            l.height,
            Payload::Captions(l.captions),
        ))
    })
}

pub fn read_vqa_source(path: &Path, dataset: &str) -> Result<RecordStream> {
    let dataset = dataset.to_string();
    stream(path, move |l: VqaLine, ctx| {
        ctx.check_dims(l.width, l.height)?;
        if l.qa
            .iter()
            .any(|q| q.question.trim().is_empty() || q.answer.trim().is_empty())
        {
            return Err(ctx.parse("empty question or answer"));
        }
        Ok(single_image(
            &dataset,
            l.split,
            l.id,
            l.image,
            l.width,
            l.height,
            Payload::VqaPairs(l.qa),
        ))
    })
}

pub fn read_grounding_source(path: &Path, dataset: &str) -> Result<RecordStream> {
    let dataset = dataset.to_string();
    stream(path, move |l: GroundingLine, ctx| {
        ctx.check_dims(l.width, l.height)?;
        let mut refs = Vec::with_capacity(l.refs.len());
        for r in l.refs {
            if r.description.trim().is_empty() {
                return Err(ctx.parse("empty description"));
            }
            let Geometry::Hbb(bbox) = ctx.clamp(Geometry::Hbb(hbb(r.bbox, ctx)?), l.width, l.height)? else {
                unreachable!("clamping keeps the variant")
            };
            refs.push(GroundingRef {
                description: r.description,
                bbox,
            });
        }
        Ok(single_image(
            &dataset,
            l.split,
            l.id,
            l.image,
            l.width,
            l.height,
            Payload::Grounding(refs),
        ))
    })
}

pub fn read_scene_source(path: &Path, dataset: &str) -> Result<RecordStream> {
    let dataset = dataset.to_string();
    stream(path, move |l: SceneLine, ctx| {
        ctx.check_dims(l.width, l.height)?;
        let label = ctx.label(l.label)?;
        Ok(single_image(
            &dataset,
            l.split,
            l.id,
            l.image,
            l.width,
            l.height,
            Payload::SceneLabel(label),
        ))
    })
}

fn image_error(path: &Path, e: impl std::fmt::Display) -> IngestError {
    IngestError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn image_size(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| image_error(path, e))
}

/// Loads an 8-bit single-channel class-index raster.
pub fn load_index_mask(path: &Path) -> Result<GrayImage> {
    match image::open(path).map_err(|e| image_error(path, e))? {
        image::DynamicImage::ImageLuma8(m) => Ok(m),
        other => Err(image_error(
            path,
            format!("mask must be 8-bit grayscale, found {:?}", other.color()),
        )),
    }
}

/// Traces every palette class of an index mask into labeled polygons,
/// classes in ascending index order.
pub fn trace_index_mask(
    mask: &GrayImage,
    palette: &Palette,
    opts: &TraceOptions,
    mask_path: &Path,
) -> Result<(Vec<RawRegion>, TraceStats)> {
    let mut present = [false; 256];
    for p in mask.pixels() {
        present[p.0[0] as usize] = true;
    }
    for (idx, seen) in present.iter().enumerate() {
        let idx = idx as u8;
        if *seen && !palette.background.contains(&idx) && !palette.classes.contains_key(&idx) {
            return Err(IngestError::UnknownPaletteIndex {
                path: mask_path.to_path_buf(),
                index: idx,
            });
        }
    }
    let mut regions = Vec::new();
    let mut stats = TraceStats::default();
    for (&idx, label) in &palette.classes {
        if !present[idx as usize] {
            continue;
        }
        let (polys, s) = trace_binary(mask, |v| v == idx, opts);
        stats.merge(&s);
        regions.extend(polys.into_iter().map(|polygon| RawRegion {
            label: label.clone(),
            polygon,
        }));
    }
    Ok((regions, stats))
}

fn trace_binary<F: Fn(u8) -> bool>(mask: &GrayImage, f: F, opts: &TraceOptions) -> (Vec<Polygon>, TraceStats) {
    let (w, h) = mask.dimensions();
    let traced = trace(w, h, |x, y| f(mask.get_pixel(x, y).0[0]), opts);
    let mut stats = TraceStats::default();
    let mut polys = Vec::with_capacity(traced.len());
    for c in traced {
        stats.components += 1;
        let Ok(c) = c else {
            stats.untraceable += 1;
            continue;
        };
        stats.small_holes += c.small_holes as u64;
        stats.unrepresented_holes += c.large_holes as u64;
        polys.push(c.outer);
    }
    (polys, stats)
}

/// Reads one image/mask pair.
pub fn read_mask_source(
    image_path: &Path,
    mask_path: &Path,
    palette: &Palette,
    opts: &TraceOptions,
) -> Result<(Vec<RawRegion>, TraceStats, (u32, u32))> {
    let dims = image_size(image_path)?;
    let mask = load_index_mask(mask_path)?;
    if mask.dimensions() != dims {
        return Err(IngestError::DimensionMismatch {
            what: format!("mask {}", mask_path.display()),
            expected: dims,
            found: mask.dimensions(),
        });
    }
    let (regions, stats) = trace_index_mask(&mask, palette, opts, mask_path)?;
    Ok((regions, stats, dims))
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new(".")).join(rel)
}

/// Reads a mask manifest; image and mask paths are relative to the manifest.
pub fn read_mask_manifest(path: &Path, palette: Palette, opts: TraceOptions, dataset: &str) -> Result<RecordStream> {
    let dataset = dataset.to_string();
    let manifest = path.to_path_buf();
    stream(path, move |l: MaskLine, _ctx| {
        let (regions, trace, (w, h)) = read_mask_source(
            &resolve(&manifest, &l.image),
            &resolve(&manifest, &l.mask),
            &palette,
            &opts,
        )?;
        let mut r = single_image(
            &dataset,
            l.split,
            l.id,
            l.image,
            w,
            h,
            Payload::SegmentationRegions(regions),
        );
        r.trace = trace;
        Ok(r)
    })
}

/// Reads change pairs; any nonzero mask pixel is changed.
pub fn read_cd_source(path: &Path, opts: TraceOptions, dataset: &str) -> Result<RecordStream> {
    let dataset = dataset.to_string();
    let manifest = path.to_path_buf();
    stream(path, move |l: ChangeLine, ctx| {
        let pairing = |message: String| IngestError::Pairing {
            path: ctx.path.clone(),
            line: ctx.line,
            message,
        };
        let pre = l.pre.ok_or_else(|| pairing("missing `pre` image".into()))?;
        let post = l.post.ok_or_else(|| pairing("missing `post` image".into()))?;
        let mut sizes = Vec::with_capacity(2);
        for rel in [&pre, &post] {
            let p = resolve(&manifest, rel);
            if !p.is_file() {
                return Err(pairing(format!("{} does not exist", p.display())));
            }
            sizes.push(image_size(&p)?);
        }
        let mask_path = resolve(&manifest, &l.mask);
        let mask = load_index_mask(&mask_path)?;
        if mask.dimensions() != sizes[0] {
            return Err(IngestError::DimensionMismatch {
                what: format!("change mask {}", mask_path.display()),
                expected: sizes[0],
                found: mask.dimensions(),
            });
        }
        let (polys, trace) = trace_binary(&mask, |v| v != 0, &opts);
        Ok(RawRecord {
            source_dataset: dataset.clone(),
            split: l.split,
            record_id: l.id,
            image_refs: vec![pre, post],
            image_w: sizes[0].0,
            image_h: sizes[0].1,
            image_sizes: sizes,
            payload: Payload::ChangePair(polys),
            trace,
        })
    })
}
