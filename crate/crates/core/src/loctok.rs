//! Location tokens: 1000-bin coordinate quantization, serialization of
//! geometry to `<box>`/`<quad>`/`<poly>` strings, and strict parsing of
//! model output text back into structured predictions.
//!
//! Output grammars (version [`GRAMMAR_VERSION`]):
//!
//! ```text
//! det_hbb    := { category, { box } }
//! det_obb    := { category, { quad } }
//! seg        := { category, { poly } }
//! vg         := box
//! region_cls := category
//! count      := decimal-integer
//! cls        := category, { ",", category }
//! cd         := { poly } | "no change"
//! cap, dcap, vqa, rcap := free text
//!
//! box  := "<box>", loc x 4, "</box>"
//! quad := "<quad>", loc x 8, "</quad>"
//! poly := "<poly>", loc x 2n (n >= 3), "</poly>"
//! loc  := "<loc_", 0..999, ">"
//! ```
//!
//! `<sep>` may appear between groups and is ignored. Whitespace between
//! tokens is ignored.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Geometry, GeometryError, Hbb, Point, Polygon, Quad};
use crate::schema::{CategoryDict, TaskKind, UnknownCategory};

pub const GRAMMAR_VERSION: &str = "falcon-grammar-v1";
pub const NUM_BINS: u16 = 1000;
/// Answer text for a change-detection sample without changed regions.
pub const NO_CHANGE: &str = "no change";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("extent must be positive and finite, got {0}")]
    NonPositiveExtent(f64),
    #[error("malformed location: {0}")]
    MalformedLocation(String),
    #[error("unbalanced wrapper: {0}")]
    UnbalancedWrapper(String),
    #[error(transparent)]
    UnknownCategory(#[from] UnknownCategory),
    #[error("empty prediction for a task that requires a value")]
    EmptyPrediction,
    #[error("location group without a category")]
    MissingCategory,
    #[error("unexpected text {0:?}")]
    UnexpectedText(String),
    #[error("unexpected `{0}` for this task")]
    UnexpectedToken(String),
    #[error("invalid count {0:?}")]
    InvalidCount(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, ParseError>;

/// A quantized coordinate in `0..=999`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocationBin(u16);

impl LocationBin {
    pub fn new(value: u16) -> Option<Self> {
        (value < NUM_BINS).then_some(Self(value))
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

fn check_extent(extent: f64) -> Result<()> {
    if extent.is_finite() && extent > 0.0 {
        Ok(())
    } else {
        Err(ParseError::NonPositiveExtent(extent))
    }
}

/// `clamp(floor(coord / extent * 1000), 0, 999)`.
pub fn quantize(coord: f64, extent: f64) -> Result<LocationBin> {
    check_extent(extent)?;
    if !(0.0..=extent).contains(&coord) {
        log::debug!("coordinate {coord} outside [0, {extent}], clamping");
    }
    let scaled = (coord / extent * NUM_BINS as f64).floor();
    let bin = if scaled.is_nan() {
        0.0
    } else {
        scaled.clamp(0.0, (NUM_BINS - 1) as f64)
    };
    Ok(LocationBin(bin as u16))
}

/// Center of the bin, `(bin + 0.5) / 1000 * extent`.
pub fn dequantize(bin: LocationBin, extent: f64) -> Result<f64> {
    check_extent(extent)?;
    Ok((bin.0 as f64 + 0.5) / NUM_BINS as f64 * extent)
}

fn push_loc(out: &mut String, bin: LocationBin) {
    let _ = write!(out, "<loc_{}>", bin.0);
}

fn quantize_point(p: &Point, w: f64, h: f64) -> Result<(LocationBin, LocationBin)> {
    Ok((quantize(p.x, w)?, quantize(p.y, h)?))
}

/// Serializes a geometry into its location-token form. Coordinates are
/// quantized against the image width (x) and height (y).
pub fn emit_location(g: &Geometry, image_w: f64, image_h: f64) -> Result<String> {
    check_extent(image_w)?;
    check_extent(image_h)?;
    if !g.within(image_w, image_h) {
        log::warn!("geometry extends outside {image_w}x{image_h}; clamping");
    }
    let (open, close) = wrapper_tags(g);
    let mut out = String::with_capacity(16 + 10 * g.vertices().len() * 2);
    out.push_str(open);
    match g {
        Geometry::Hbb(b) => {
            for (v, e) in [
                (b.x_min(), image_w),
                (b.y_min(), image_h),
                (b.x_max(), image_w),
                (b.y_max(), image_h),
            ] {
                push_loc(&mut out, quantize(v, e)?);
            }
        }
        _ => {
            for p in g.vertices() {
                let (x, y) = quantize_point(&p, image_w, image_h)?;
                push_loc(&mut out, x);
                push_loc(&mut out, y);
            }
        }
    }
    out.push_str(close);
    Ok(out)
}

fn wrapper_tags(g: &Geometry) -> (&'static str, &'static str) {
    match g {
        Geometry::Hbb(_) => ("<box>", "</box>"),
        Geometry::Quad(_) => ("<quad>", "</quad>"),
        Geometry::Polygon(_) => ("<poly>", "</poly>"),
    }
}

/// Replaces a geometry by the bin-center geometry its tokens decode to.
///
/// Polygon vertices that collapse into the same bin pair as their
/// predecessor are dropped. The result emits to the same tokens as the
/// deduplicated input and parses back to itself exactly.
pub fn snap_geometry(g: &Geometry, image_w: f64, image_h: f64) -> Result<Geometry> {
    let snap_pt = |p: &Point| -> Result<(LocationBin, LocationBin)> { quantize_point(p, image_w, image_h) };
    let center = |(x, y): (LocationBin, LocationBin)| -> Result<Point> {
        Ok(Point::new(dequantize(x, image_w)?, dequantize(y, image_h)?))
    };
    Ok(match g {
        Geometry::Hbb(b) => {
            let lo = center(snap_pt(&Point::new(b.x_min(), b.y_min()))?)?;
            let hi = center(snap_pt(&Point::new(b.x_max(), b.y_max()))?)?;
            Geometry::Hbb(Hbb::new(lo.x, lo.y, hi.x, hi.y)?)
        }
        Geometry::Quad(q) => {
            let mut v = [Point::default(); 4];
            for (dst, src) in v.iter_mut().zip(q.vertices()) {
                *dst = center(snap_pt(src)?)?;
            }
            Geometry::Quad(Quad::new(v)?)
        }
        Geometry::Polygon(p) => {
            let mut bins: Vec<(LocationBin, LocationBin)> = Vec::with_capacity(p.len());
            for v in p.vertices() {
                let b = snap_pt(v)?;
                if bins.last() != Some(&b) {
                    bins.push(b);
                }
            }
            while bins.len() > 1 && bins.first() == bins.last() {
                bins.pop();
            }
            let pts = bins.into_iter().map(center).collect::<Result<Vec<_>>>()?;
            Geometry::Polygon(Polygon::new(pts)?)
        }
    })
}

/// One labeled location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: String,
    pub geometry: Geometry,
}

/// All polygons of one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMask {
    pub category: String,
    pub polygons: Vec<Polygon>,
}

/// Machine-checkable content of an answer, one arm per task family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuredPrediction {
    /// Image classification: one or more categories.
    Labels {
        labels: Vec<String>,
    },
    /// Region classification (box, quad or polygon as the question).
    Label {
        label: String,
    },
    Count {
        count: u64,
    },
    Caption {
        text: String,
    },
    Detections {
        detections: Vec<Detection>,
    },
    /// Category-less regions (visual grounding, change detection).
    Regions {
        regions: Vec<Geometry>,
    },
    Masks {
        masks: Vec<CategoryMask>,
    },
}

impl StructuredPrediction {
    /// The empty value of the task's family, used for missing predictions.
    pub fn empty_for(task: TaskKind) -> Self {
        use TaskKind::*;
        match task {
            Cls => Self::Labels { labels: vec![] },
            ClsHbb | ClsObb | ClsPoly => Self::Label { label: String::new() },
            Count => Self::Count { count: 0 },
            Cap | DCap | Vqa | RCap => Self::Caption { text: String::new() },
            DetHbb | DetObb => Self::Detections { detections: vec![] },
            Vg | Cd => Self::Regions { regions: vec![] },
            Seg => Self::Masks { masks: vec![] },
        }
    }

    /// True when this arm is the one `task` produces.
    pub fn matches_task(&self, task: TaskKind) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(&Self::empty_for(task))
    }
}

/// Renders a structured value as answer text in canonical form: canonical
/// category names, no `<sep>`, no whitespace between tokens, consecutive
/// detections of one category grouped under a single name.
pub fn emit_answer(pred: &StructuredPrediction, task: TaskKind, image_w: f64, image_h: f64) -> Result<String> {
    if !pred.matches_task(task) {
        return Err(ParseError::UnexpectedToken(format!("{pred:?}")));
    }
    let mut out = String::new();
    match pred {
        StructuredPrediction::Labels { labels } => out = labels.join(", "),
        StructuredPrediction::Label { label } => out.push_str(label),
        StructuredPrediction::Count { count } => out = count.to_string(),
        StructuredPrediction::Caption { text } => out.push_str(text),
        StructuredPrediction::Detections { detections } => {
            let mut current: Option<&str> = None;
            for d in detections {
                if current != Some(d.category.as_str()) {
                    out.push_str(&d.category);
                    current = Some(&d.category);
                }
                out.push_str(&emit_location(&d.geometry, image_w, image_h)?);
            }
        }
        StructuredPrediction::Regions { regions } => {
            if regions.is_empty() && task == TaskKind::Cd {
                out.push_str(NO_CHANGE);
            }
            for g in regions {
                out.push_str(&emit_location(g, image_w, image_h)?);
            }
        }
        StructuredPrediction::Masks { masks } => {
            for m in masks {
                out.push_str(&m.category);
                for p in &m.polygons {
                    out.push_str(&emit_location(&Geometry::Polygon(p.clone()), image_w, image_h)?);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wrapper {
    Box,
    Quad,
    Poly,
}

impl Wrapper {
    fn name(self) -> &'static str {
        match self {
            Wrapper::Box => "box",
            Wrapper::Quad => "quad",
            Wrapper::Poly => "poly",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token<'a> {
    Open(Wrapper),
    Close(Wrapper),
    Sep,
    Loc(LocationBin),
    Text(&'a str),
}

const TAGS: [(&str, Token<'static>); 7] = [
    ("<box>", Token::Open(Wrapper::Box)),
    ("</box>", Token::Close(Wrapper::Box)),
    ("<quad>", Token::Open(Wrapper::Quad)),
    ("</quad>", Token::Close(Wrapper::Quad)),
    ("<poly>", Token::Open(Wrapper::Poly)),
    ("</poly>", Token::Close(Wrapper::Poly)),
    ("<sep>", Token::Sep),
];

fn lex(text: &str) -> Result<Vec<Token<'_>>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    fn flush<'a>(text: &'a str, tokens: &mut Vec<Token<'a>>, start: usize, end: usize) {
        if start < end {
            let t = &text[start..end];
            if !t.trim().is_empty() {
                tokens.push(Token::Text(t));
            }
        }
    }
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        if let Some((tag, tok)) = TAGS.iter().find(|(tag, _)| rest.starts_with(tag)) {
            let tok = *tok;
            flush(text, &mut tokens, text_start, i);
            tokens.push(tok);
            i += tag.len();
            text_start = i;
        } else if let Some(after) = rest.strip_prefix("<loc_") {
            let digits = after.bytes().take_while(u8::is_ascii_digit).count();
            let closed = after.as_bytes().get(digits) == Some(&b'>');
            let value = after[..digits].parse::<u32>().ok();
            let bin = match (closed, value) {
                (true, Some(v)) if digits <= 3 && v < NUM_BINS as u32 => LocationBin(v as u16),
                _ => {
                    let end = rest.find('>').map_or(rest.len(), |e| e + 1).min(24);
                    let shown: String = rest.chars().take(end).collect();
                    return Err(ParseError::MalformedLocation(format!(
                        "invalid location token {shown:?}"
                    )));
                }
            };
            flush(text, &mut tokens, text_start, i);
            tokens.push(Token::Loc(bin));
            i += 5 + digits + 1;
            text_start = i;
        } else {
            i += 1;
        }
    }
    flush(text, &mut tokens, text_start, bytes.len());
    Ok(tokens)
}

/// What to do with category text the dictionary cannot map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownPolicy {
    /// Fail with [`ParseError::UnknownCategory`].
    #[default]
    Error,
    /// Keep the normalized raw text as the category. It will never match a
    /// canonical ground-truth category.
    Keep,
}

struct Parser<'d> {
    dict: &'d CategoryDict,
    policy: UnknownPolicy,
    w: f64,
    h: f64,
}

impl Parser<'_> {
    fn category(&self, raw: &str) -> Result<String> {
        match self.dict.map_category(raw) {
            Ok(c) => Ok(c.to_string()),
            Err(e) => match self.policy {
                UnknownPolicy::Error => Err(e.into()),
                UnknownPolicy::Keep => Ok(crate::schema::normalize_label(raw)),
            },
        }
    }

    fn point(&self, x: LocationBin, y: LocationBin) -> Result<Point> {
        Ok(Point::new(dequantize(x, self.w)?, dequantize(y, self.h)?))
    }

    fn build(&self, wrapper: Wrapper, locs: &[LocationBin]) -> Result<Geometry> {
        let arity_ok = match wrapper {
            Wrapper::Box => locs.len() == 4,
            Wrapper::Quad => locs.len() == 8,
            Wrapper::Poly => locs.len() >= 6 && locs.len().is_multiple_of(2),
        };
        if !arity_ok {
            return Err(ParseError::MalformedLocation(format!(
                "<{}> with {} location tokens",
                wrapper.name(),
                locs.len()
            )));
        }
        let pts = locs
            .chunks_exact(2)
            .map(|c| self.point(c[0], c[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(match wrapper {
            Wrapper::Box => Geometry::Hbb(Hbb::new(pts[0].x, pts[0].y, pts[1].x, pts[1].y)?),
            Wrapper::Quad => Geometry::Quad(Quad::new([pts[0], pts[1], pts[2], pts[3]])?),
            Wrapper::Poly => Geometry::Polygon(Polygon::new(pts)?),
        })
    }

    /// Parses `{ [text], { group } }` sequences. Returns (label, geometry)
    /// items; label is `None` for groups not preceded by any text.
    fn groups(&self, tokens: &[Token<'_>], expected: Wrapper) -> Result<Vec<(Option<String>, Geometry)>> {
        let mut out = Vec::new();
        let mut label: Option<String> = None;
        let mut iter = tokens.iter();
        while let Some(tok) = iter.next() {
            match *tok {
                Token::Text(t) => label = Some(self.category(t)?),
                Token::Sep => {}
                Token::Loc(_) => return Err(ParseError::MalformedLocation("location token outside a wrapper".into())),
                Token::Close(w) => {
                    return Err(ParseError::UnbalancedWrapper(format!(
                        "</{}> without opening tag",
                        w.name()
                    )))
                }
                Token::Open(w) => {
                    let mut locs = Vec::with_capacity(8);
                    let mut closed = false;
                    for inner in iter.by_ref() {
                        match *inner {
                            Token::Loc(b) => locs.push(b),
                            Token::Close(c) if c == w => {
                                closed = true;
                                break;
                            }
                            Token::Close(c) => {
                                return Err(ParseError::UnbalancedWrapper(format!(
                                    "<{}> closed by </{}>",
                                    w.name(),
                                    c.name()
                                )))
                            }
                            Token::Open(o) => {
                                return Err(ParseError::UnbalancedWrapper(format!(
                                    "<{}> opened inside <{}>",
                                    o.name(),
                                    w.name()
                                )))
                            }
                            Token::Sep => {
                                return Err(ParseError::MalformedLocation(format!("<sep> inside <{}>", w.name())))
                            }
                            Token::Text(t) => {
                                return Err(ParseError::MalformedLocation(format!(
                                    "text {t:?} inside <{}>",
                                    w.name()
                                )))
                            }
                        }
                    }
                    if !closed {
                        return Err(ParseError::UnbalancedWrapper(format!("<{}> never closed", w.name())));
                    }
                    if w != expected {
                        return Err(ParseError::UnexpectedToken(format!("<{}>", w.name())));
                    }
                    out.push((label.clone(), self.build(w, &locs)?));
                }
            }
        }
        Ok(out)
    }

    fn labeled(&self, tokens: &[Token<'_>], wrapper: Wrapper) -> Result<Vec<Detection>> {
        self.groups(tokens, wrapper)?
            .into_iter()
            .map(|(label, geometry)| {
                let category = label.ok_or(ParseError::MissingCategory)?;
                Ok(Detection { category, geometry })
            })
            .collect()
    }

    fn unlabeled(&self, tokens: &[Token<'_>], wrapper: Wrapper) -> Result<Vec<Geometry>> {
        if let Some(Token::Text(t)) = tokens.iter().find(|t| matches!(t, Token::Text(_))) {
            return Err(ParseError::UnexpectedText(t.trim().to_string()));
        }
        Ok(self.groups(tokens, wrapper)?.into_iter().map(|(_, g)| g).collect())
    }
}

/// Strict parse of model output under the task's grammar, with unknown
/// categories rejected.
pub fn parse_prediction(
    text: &str,
    task: TaskKind,
    image_w: f64,
    image_h: f64,
    dict: &CategoryDict,
) -> Result<StructuredPrediction> {
    parse_prediction_with(text, task, image_w, image_h, dict, UnknownPolicy::Error)
}

pub fn parse_prediction_with(
    text: &str,
    task: TaskKind,
    image_w: f64,
    image_h: f64,
    dict: &CategoryDict,
    policy: UnknownPolicy,
) -> Result<StructuredPrediction> {
    check_extent(image_w)?;
    check_extent(image_h)?;
    let parser = Parser {
        dict,
        policy,
        w: image_w,
        h: image_h,
    };
    use TaskKind::*;
    match task {
        Cap | DCap | Vqa | RCap => return Ok(StructuredPrediction::Caption { text: text.to_string() }),
        Count => {
            let t = text.trim();
            if t.is_empty() {
                return Err(ParseError::EmptyPrediction);
            }
            return t
                .parse::<u64>()
                .map(|count| StructuredPrediction::Count { count })
                .map_err(|_| ParseError::InvalidCount(t.chars().take(32).collect()));
        }
        _ => {}
    }
    let tokens = lex(text)?;
    match task {
        Cls | ClsHbb | ClsObb | ClsPoly => {
            if let Some(tok) = tokens.iter().find(|t| !matches!(t, Token::Text(_))) {
                return Err(ParseError::UnexpectedToken(format!("{tok:?}")));
            }
            let trimmed = text.trim();
            if task == Cls {
                let labels = if trimmed.is_empty() {
                    vec![]
                } else {
                    trimmed
                        .split(',')
                        .map(|s| parser.category(s))
                        .collect::<Result<Vec<_>>>()?
                };
                Ok(StructuredPrediction::Labels { labels })
            } else if trimmed.is_empty() {
                Err(ParseError::EmptyPrediction)
            } else {
                Ok(StructuredPrediction::Label {
                    label: parser.category(trimmed)?,
                })
            }
        }
        DetHbb => Ok(StructuredPrediction::Detections {
            detections: parser.labeled(&tokens, Wrapper::Box)?,
        }),
        DetObb => Ok(StructuredPrediction::Detections {
            detections: parser.labeled(&tokens, Wrapper::Quad)?,
        }),
        Seg => {
            let mut masks: Vec<CategoryMask> = Vec::new();
            for d in parser.labeled(&tokens, Wrapper::Poly)? {
                let Geometry::Polygon(p) = d.geometry else {
                    unreachable!("poly wrapper builds polygons")
                };
                match masks.last_mut() {
                    Some(m) if m.category == d.category => m.polygons.push(p),
                    _ => masks.push(CategoryMask {
                        category: d.category,
                        polygons: vec![p],
                    }),
                }
            }
            Ok(StructuredPrediction::Masks { masks })
        }
        Vg => Ok(StructuredPrediction::Regions {
            regions: parser.unlabeled(&tokens, Wrapper::Box)?,
        }),
        Cd => {
            if text.trim().eq_ignore_ascii_case(NO_CHANGE) {
                return Ok(StructuredPrediction::Regions { regions: vec![] });
            }
            Ok(StructuredPrediction::Regions {
                regions: parser.unlabeled(&tokens, Wrapper::Poly)?,
            })
        }
        Cap | DCap | Vqa | RCap | Count => unreachable!("handled above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict() -> CategoryDict {
        CategoryDict::builtin().clone()
    }

    fn bin(v: u16) -> LocationBin {
        LocationBin::new(v).unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, 512.0).unwrap(), bin(0));
        assert_eq!(quantize(512.0, 512.0).unwrap(), bin(999));
        assert_eq!(quantize(224.0, 448.0).unwrap(), bin(500));
        assert_eq!(quantize(-3.0, 10.0).unwrap(), bin(0));
        assert_eq!(quantize(99.0, 10.0).unwrap(), bin(999));
        assert!(matches!(quantize(1.0, 0.0), Err(ParseError::NonPositiveExtent(_))));
        assert!(matches!(quantize(1.0, f64::NAN), Err(ParseError::NonPositiveExtent(_))));
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(bin(0), 1000.0).unwrap(), 0.5);
        assert_eq!(dequantize(bin(999), 1000.0).unwrap(), 999.5);
        for e in [1.0, 7.0, 448.0, 1000.0, 20000.0] {
            for b in 0..NUM_BINS {
                assert_eq!(quantize(dequantize(bin(b), e).unwrap(), e).unwrap(), bin(b));
            }
        }
    }

    #[test]
    fn emit_examples() {
        let g = Geometry::Hbb(Hbb::new(0., 0., 448., 448.).unwrap());
        assert_eq!(
            emit_location(&g, 448., 448.).unwrap(),
            "<box><loc_0><loc_0><loc_999><loc_999></box>"
        );
        let g = Geometry::Hbb(Hbb::new(112., 112., 336., 336.).unwrap());
        assert_eq!(
            emit_location(&g, 448., 448.).unwrap(),
            "<box><loc_250><loc_250><loc_750><loc_750></box>"
        );
        let tri = Polygon::new(vec![Point::new(0., 0.), Point::new(448., 0.), Point::new(0., 448.)]).unwrap();
        assert_eq!(
            emit_location(&Geometry::Polygon(tri), 448., 448.).unwrap(),
            "<poly><loc_0><loc_0><loc_999><loc_0><loc_0><loc_999></poly>"
        );
    }

    #[test]
    fn parse_examples() {
        let d = dict();
        let p = parse_prediction(
            "airplane<box><loc_100><loc_100><loc_200><loc_200></box>",
            TaskKind::DetHbb,
            1000.,
            1000.,
            &d,
        )
        .unwrap();
        assert_eq!(
            p,
            StructuredPrediction::Detections {
                detections: vec![Detection {
                    category: "airplane".into(),
                    geometry: Geometry::Hbb(Hbb::new(100.5, 100.5, 200.5, 200.5).unwrap()),
                }]
            }
        );
        assert_eq!(
            parse_prediction("", TaskKind::DetHbb, 1000., 1000., &d).unwrap(),
            StructuredPrediction::Detections { detections: vec![] }
        );
        assert!(matches!(
            parse_prediction("<box><loc_5></box>", TaskKind::DetHbb, 10., 10., &d),
            Err(ParseError::MalformedLocation(_))
        ));
    }

    #[test]
    fn parse_errors_are_typed() {
        let d = dict();
        let det = |s: &str| parse_prediction(s, TaskKind::DetHbb, 100., 100., &d);
        assert!(matches!(
            det("ship<box><loc_1><loc_1><loc_2><loc_2>"),
            Err(ParseError::UnbalancedWrapper(_))
        ));
        assert!(matches!(det("</box>"), Err(ParseError::UnbalancedWrapper(_))));
        assert!(matches!(
            det("<box><loc_1><loc_1><loc_2><loc_2></box>"),
            Err(ParseError::MissingCategory)
        ));
        assert!(matches!(
            det("zeppelin<box><loc_1><loc_1><loc_2><loc_2></box>"),
            Err(ParseError::UnknownCategory(_))
        ));
        assert!(matches!(det("ship<loc_1000>"), Err(ParseError::MalformedLocation(_))));
        assert!(matches!(
            det("ship<quad><loc_1><loc_1><loc_2><loc_2><loc_1><loc_2><loc_2><loc_3></quad>"),
            Err(ParseError::UnexpectedToken(_))
        ));
        assert!(matches!(
            parse_prediction("three", TaskKind::Count, 10., 10., &d),
            Err(ParseError::InvalidCount(_))
        ));
        assert!(matches!(
            parse_prediction(" ", TaskKind::ClsHbb, 10., 10., &d),
            Err(ParseError::EmptyPrediction)
        ));
    }

    #[test]
    fn unknown_policy_keep() {
        let d = dict();
        let p = parse_prediction_with(
            "Zeppelin<box><loc_1><loc_1><loc_2><loc_2></box>",
            TaskKind::DetHbb,
            100.,
            100.,
            &d,
            UnknownPolicy::Keep,
        )
        .unwrap();
        let StructuredPrediction::Detections { detections } = p else {
            panic!()
        };
        assert_eq!(detections[0].category, "zeppelin");
    }

    #[test]
    fn aliases_and_sep_are_accepted() {
        let d = dict();
        let p = parse_prediction(
            "car <box><loc_1><loc_1><loc_2><loc_2></box><sep> plane<box> <loc_3> <loc_3><loc_4><loc_4></box>",
            TaskKind::DetHbb,
            1000.,
            1000.,
            &d,
        )
        .unwrap();
        let StructuredPrediction::Detections { detections } = p else {
            panic!()
        };
        let cats: Vec<_> = detections.iter().map(|d| d.category.as_str()).collect();
        assert_eq!(cats, ["vehicle", "airplane"]);
    }

    #[test]
    fn cd_sentinel_and_cls_list() {
        let d = dict();
        assert_eq!(
            parse_prediction("No change", TaskKind::Cd, 10., 10., &d).unwrap(),
            StructuredPrediction::Regions { regions: vec![] }
        );
        let empty = StructuredPrediction::Regions { regions: vec![] };
        assert_eq!(emit_answer(&empty, TaskKind::Cd, 10., 10.).unwrap(), NO_CHANGE);
        let p = parse_prediction("airplane, Storage_Tank", TaskKind::Cls, 10., 10., &d).unwrap();
        assert_eq!(
            p,
            StructuredPrediction::Labels {
                labels: vec!["airplane".into(), "storage tank".into()]
            }
        );
        assert_eq!(
            emit_answer(&p, TaskKind::Cls, 10., 10.).unwrap(),
            "airplane, storage tank"
        );
    }

    #[test]
    fn snapped_polygon_round_trips() {
        let poly = Polygon::new(vec![
            Point::new(10.21, 10.11),
            Point::new(10.25, 10.15),
            Point::new(60.0, 12.0),
            Point::new(40.0, 70.0),
        ])
        .unwrap();
        let g = Geometry::Polygon(poly);
        let snapped = snap_geometry(&g, 100., 100.).unwrap();
        assert_eq!(snapped.vertices().len(), 3);
        let text = emit_location(&snapped, 100., 100.).unwrap();
        assert_eq!(
            text,
            emit_location(&snap_geometry(&snapped, 100., 100.).unwrap(), 100., 100.).unwrap()
        );
        let parsed = parse_prediction(&format!("lake{text}"), TaskKind::Seg, 100., 100., &dict()).unwrap();
        let StructuredPrediction::Masks { masks } = parsed else {
            panic!()
        };
        assert_eq!(Geometry::Polygon(masks[0].polygons[0].clone()), snapped);
    }
}
