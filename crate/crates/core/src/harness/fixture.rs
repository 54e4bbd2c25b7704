//! Seeded synthetic corpus covering every source kind, with the number of
//! base samples each dataset should produce worked out while drawing.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{HarnessError, Result};
use crate::schema::CategoryDict;

pub const FIXTURE_SIZE: u32 = 256;
pub const FIXTURE_VARIANTS: usize = 3;
const CELL: u32 = 64;

const HBB_LABELS: &[&str] = &[
    "car",
    "plane",
    "ship",
    "storage tank",
    "small vehicle",
    "tennis court",
    "airplane",
];
const OBB_LABELS: &[&str] = &["ship", "plane", "harbor", "large vehicle", "bridge", "storage tank"];
const SEG_CLASSES: &[(u8, &str)] = &[(1, "building"), (2, "water"), (3, "forest"), (4, "road")];
const SCENES: &[&str] = &[
    "beach",
    "forest",
    "farmland",
    "residential",
    "airport",
    "desert",
    "harbor",
];
const COLORS: &[&str] = &["white", "gray", "red", "dark", "blue"];
const PLACES: &[&str] = &["top left", "top right", "bottom left", "bottom right", "center"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub seed: u64,
    pub images: usize,
    pub variants: usize,
    pub config: PathBuf,
    /// dataset -> task -> base samples (before paraphrase expansion)
    pub expected_base: BTreeMap<String, BTreeMap<String, u64>>,
    /// dataset -> annotations drawn
    pub annotations: BTreeMap<String, u64>,
}

impl FixtureManifest {
    pub fn expected_samples(&self) -> u64 {
        let base: u64 = self.expected_base.values().flat_map(|m| m.values()).sum();
        base * self.variants as u64
    }
}

struct Out {
    dir: PathBuf,
    expected: BTreeMap<String, BTreeMap<String, u64>>,
    annotations: BTreeMap<String, u64>,
}

impl Out {
    fn add(&mut self, ds: &str, task: &str, n: u64) {
        if n > 0 {
            *self
                .expected
                .entry(ds.into())
                .or_default()
                .entry(task.into())
                .or_default() += n;
        }
    }

    fn annotate(&mut self, ds: &str, n: u64) {
        *self.annotations.entry(ds.into()).or_default() += n;
    }

    fn jsonl(&self, name: &str) -> Result<JsonlWriter> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        Ok(JsonlWriter {
            path,
            w: BufWriter::new(f),
        })
    }

    fn png(&self, name: &str, img: &GrayImage) -> Result<()> {
        let path = self.dir.join(name);
        img.save(&path)
            .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
    }
}

struct JsonlWriter {
    path: PathBuf,
    w: BufWriter<File>,
}

impl JsonlWriter {
    fn line(&mut self, v: serde_json::Value) -> Result<()> {
        writeln!(self.w, "{v}").map_err(|e| HarnessError::io(&self.path, e))
    }

    fn close(mut self) -> Result<()> {
        self.w.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

fn canonical_set<'a>(labels: impl IntoIterator<Item = &'a str>) -> BTreeSet<&'static str> {
    let dict = CategoryDict::builtin();
    labels
        .into_iter()
        .map(|l| dict.map_category(l).expect("fixture labels are known"))
        .collect()
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty")
}

fn noise_image(rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::from_fn(FIXTURE_SIZE, FIXTURE_SIZE, |_, _| Luma([rng.gen_range(0..=255)]))
}

fn image_name(i: usize) -> String {
    format!("img_{i:05}.png")
}

/// Axis-aligned boxes, a few images left empty.
fn det_hbb(rng: &mut ChaCha8Rng, out: &mut Out, n: usize) -> Result<()> {
    let ds = "fx-det-hbb";
    let mut w = out.jsonl("det_hbb.jsonl")?;
    let s = FIXTURE_SIZE as f64;
    for i in 0..n {
        let k = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=5) };
        let mut objects = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..k {
            let bw = rng.gen_range(8.0..64.0f64).round();
            let bh = rng.gen_range(8.0..64.0f64).round();
            let x = rng.gen_range(0.0..s - bw).round();
            let y = rng.gen_range(0.0..s - bh).round();
            let label = pick(rng, HBB_LABELS);
            labels.push(label);
            objects.push(json!({"label": label, "box": [x, y, x + bw, y + bh]}));
        }
        let cats = canonical_set(labels.iter().copied()).len() as u64;
        out.annotate(ds, k as u64);
        if k > 0 {
            out.add(ds, "cls", 1);
            out.add(ds, "count", cats);
            out.add(ds, "cls_hbb", k as u64);
            out.add(ds, "det_hbb", cats);
        }
        w.line(
            json!({"id": format!("{i:05}"), "image": image_name(i), "width": FIXTURE_SIZE,
            "height": FIXTURE_SIZE, "objects": objects}),
        )?;
    }
    w.close()
}

/// Rotated rectangles given as quads.
fn det_obb(rng: &mut ChaCha8Rng, out: &mut Out, n: usize) -> Result<()> {
    let ds = "fx-det-obb";
    let mut w = out.jsonl("det_obb.jsonl")?;
    for i in 0..n {
        let k = rng.gen_range(1..=4);
        let mut objects = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..k {
            let (cx, cy) = (rng.gen_range(40.0..216.0f64), rng.gen_range(40.0..216.0f64));
            let (hw, hh) = (rng.gen_range(6.0..24.0f64), rng.gen_range(4.0..16.0f64));
            let t = rng.gen_range(0.0..TAU);
            let (c, s) = (t.cos(), t.sin());
            let quad: Vec<[f64; 2]> = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
                .iter()
                .map(|&(dx, dy)| {
                    let x: f64 = cx + dx * c - dy * s;
                    let y: f64 = cy + dx * s + dy * c;
                    [(x * 100.0).round() / 100.0, (y * 100.0).round() / 100.0]
                })
                .collect();
            let label = pick(rng, OBB_LABELS);
            labels.push(label);
            objects.push(json!({"label": label, "quad": quad}));
        }
        let cats = canonical_set(labels.iter().copied()).len() as u64;
        out.annotate(ds, k as u64);
        out.add(ds, "cls", 1);
        out.add(ds, "count", cats);
        out.add(ds, "cls_obb", k as u64);
        out.add(ds, "det_obb", cats);
        w.line(
            json!({"id": format!("{i:05}"), "image": image_name(i), "width": FIXTURE_SIZE,
            "height": FIXTURE_SIZE, "objects": objects}),
        )?;
    }
    w.close()
}

/// Star-shaped blobs, at most one per grid cell, so every blob is one
/// component without holes.
fn seg(rng: &mut ChaCha8Rng, out: &mut Out, n: usize) -> Result<()> {
    let ds = "fx-seg";
    let mut palette = String::from("background = [0]\n[classes]\n");
    for (idx, name) in SEG_CLASSES {
        palette.push_str(&format!("{idx} = '{name}'\n"));
    }
    std::fs::write(out.dir.join("seg_palette.toml"), palette).map_err(|e| HarnessError::io(&out.dir, e))?;
    let mut w = out.jsonl("seg.jsonl")?;
    let grid = FIXTURE_SIZE / CELL;
    for i in 0..n {
        let mut mask = GrayImage::new(FIXTURE_SIZE, FIXTURE_SIZE);
        let mut classes = Vec::new();
        for cell in 0..grid * grid {
            if !rng.gen_bool(0.35) {
                continue;
            }
            let (idx, name) = SEG_CLASSES[rng.gen_range(0..SEG_CLASSES.len())];
            let cx = ((cell % grid) * CELL + CELL / 2) as f64;
            let cy = ((cell / grid) * CELL + CELL / 2) as f64;
            let r0 = rng.gen_range(12.0..22.0f64);
            let k = rng.gen_range(2..=3) as f64;
            let a = rng.gen_range(0.0..0.2f64);
            let phase = rng.gen_range(0.0..TAU);
            let x0 = (cell % grid) * CELL;
            let y0 = (cell / grid) * CELL;
            for y in y0..y0 + CELL {
                for x in x0..x0 + CELL {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    let r = r0 * (1.0 + a * (k * dy.atan2(dx) + phase).cos());
                    if dx.hypot(dy) < r {
                        mask.put_pixel(x, y, Luma([idx]));
                    }
                }
            }
            classes.push(name);
        }
        let blobs = classes.len() as u64;
        let cats = canonical_set(classes.iter().copied()).len() as u64;
        out.annotate(ds, blobs);
        if blobs > 0 {
            out.add(ds, "cls", 1);
            out.add(ds, "cls_poly", blobs);
            for t in ["seg", "det_hbb", "det_obb"] {
                out.add(ds, t, cats);
            }
        }
        let (img, m) = (format!("seg_{}", image_name(i)), format!("seg_mask_{}", image_name(i)));
        out.png(&img, &noise_image(rng))?;
        out.png(&m, &mask)?;
        w.line(json!({"id": format!("{i:05}"), "image": img, "mask": m}))?;
    }
    w.close()
}

fn sentence(rng: &mut ChaCha8Rng, scene: &str) -> String {
    let things = ["buildings", "roads", "trees", "vehicles", "fields", "ponds", "ships"];
    let verbs = ["surround", "line", "border", "cross", "dot", "frame"];
    let (a, b) = (pick(rng, &things), pick(rng, &things));
    format!(
        "Several {} {} the {} {} near the {} edge of this {scene} area.",
        pick(rng, COLORS),
        a,
        pick(rng, &verbs),
        b,
        pick(rng, PLACES)
    )
}

/// One short and one detailed caption per image.
fn captions(rng: &mut ChaCha8Rng, out: &mut Out, n: usize) -> Result<()> {
    let ds = "fx-cap";
    let mut w = out.jsonl("captions.jsonl")?;
    for i in 0..n {
        let scene = pick(rng, SCENES);
        let short = format!("A {} {scene} scene.", pick(rng, COLORS));
        let detailed: Vec<String> = (0..rng.gen_range(4..=6)).map(|_| sentence(rng, scene)).collect();
        out.annotate(ds, 2);
        out.add(ds, "cap", 1);
        out.add(ds, "dcap", 1);
        w.line(
            json!({"id": format!("{i:05}"), "image": image_name(i), "width": FIXTURE_SIZE,
            "height": FIXTURE_SIZE, "captions": [short, detailed.join(" ")]}),
        )?;
    }
    w.close()
}

fn vqa(rng: &mut ChaCha8Rng, out: &mut Out, n: usize) -> Result<()> {
    let ds = "fx-vqa";
    let mut w = out.jsonl("vqa.jsonl")?;
    for i in 0..n {
        let thing = pick(rng, &["vehicles", "ships", "buildings", "tanks"]);
        let qa = vec![
            json!({"question": format!("How many {thing} are in the image?"),
                   "answer": rng.gen_range(0..12).to_string()}),
            json!({"question": format!("Is there a {} in the image?", pick(rng, &["bridge", "road", "river"])),
                   "answer": if rng.gen_bool(0.5) { "yes" } else { "no" }}),
        ];
        out.annotate(ds, 2);
        out.add(ds, "vqa", 2);
        w.line(
            json!({"id": format!("{i:05}"), "image": image_name(i), "width": FIXTURE_SIZE,
            "height": FIXTURE_SIZE, "qa": qa}),
        )?;
    }
    w.close()
}

fn grounding(rng: &mut ChaCha8Rng, out: &mut Out, n: usize) -> Result<()> {
    let ds = "fx-vg";
    let mut w = out.jsonl("grounding.jsonl")?;
    let s = FIXTURE_SIZE as f64;
    for i in 0..n {
        let k = rng.gen_range(1..=2);
        let refs: Vec<_> = (0..k)
            .map(|_| {
                let bw = rng.gen_range(8.0..80.0f64).round();
                let bh = rng.gen_range(8.0..80.0f64).round();
                let x = rng.gen_range(0.0..s - bw).round();
                let y = rng.gen_range(0.0..s - bh).round();
                let obj = pick(rng, &["ship", "building", "car", "tank", "plane"]);
                json!({"description": format!("the {} {obj} in the {}", pick(rng, COLORS), pick(rng, PLACES)),
                       "box": [x, y, x + bw, y + bh]})
            })
            .collect();
        out.annotate(ds, k as u64);
        out.add(ds, "vg", k as u64);
        out.add(ds, "rcap", k as u64);
        w.line(
            json!({"id": format!("{i:05}"), "image": image_name(i), "width": FIXTURE_SIZE,
            "height": FIXTURE_SIZE, "refs": refs}),
        )?;
    }
    w.close()
}

/// Changed areas are disjoint rectangles, one per grid cell at most.
fn change(rng: &mut ChaCha8Rng, out: &mut Out, n: usize) -> Result<()> {
    let ds = "fx-cd";
    let mut w = out.jsonl("cd.jsonl")?;
    let grid = FIXTURE_SIZE / CELL;
    for i in 0..n {
        let mut mask = GrayImage::new(FIXTURE_SIZE, FIXTURE_SIZE);
        let mut rects = 0u64;
        if !rng.gen_bool(0.2) {
            for cell in 0..grid * grid {
                if !rng.gen_bool(0.25) {
                    continue;
                }
                let bw = rng.gen_range(8..48);
                let bh = rng.gen_range(8..48);
                let x0 = (cell % grid) * CELL + rng.gen_range(4..CELL - bw - 3);
                let y0 = (cell / grid) * CELL + rng.gen_range(4..CELL - bh - 3);
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        mask.put_pixel(x, y, Luma([255]));
                    }
                }
                rects += 1;
            }
        }
        out.annotate(ds, rects);
        out.add(ds, "cd", 1);
        let names = ["cd_pre_", "cd_post_", "cd_mask_"].map(|p| format!("{p}{}", image_name(i)));
        out.png(&names[0], &noise_image(rng))?;
        out.png(&names[1], &noise_image(rng))?;
        out.png(&names[2], &mask)?;
        w.line(json!({"id": format!("{i:05}"), "pre": names[0], "post": names[1], "mask": names[2]}))?;
    }
    w.close()
}

fn scene(rng: &mut ChaCha8Rng, out: &mut Out, n: usize) -> Result<()> {
    let ds = "fx-scene";
    let mut w = out.jsonl("scene.jsonl")?;
    for i in 0..n {
        out.annotate(ds, 1);
        out.add(ds, "cls", 1);
        w.line(
            json!({"id": format!("{i:05}"), "image": image_name(i), "width": FIXTURE_SIZE,
            "height": FIXTURE_SIZE, "label": pick(rng, SCENES)}),
        )?;
    }
    w.close()
}

const CONFIG: &str = r#"variants = 3

[[sources]]
kind = "detection"
path = "det_hbb.jsonl"
dataset = "fx-det-hbb"
flavor = "axis_aligned"

[[sources]]
kind = "detection"
path = "det_obb.jsonl"
dataset = "fx-det-obb"
flavor = "oriented"

[[sources]]
kind = "mask"
path = "seg.jsonl"
dataset = "fx-seg"
palette = "seg_palette.toml"

[[sources]]
kind = "caption"
path = "captions.jsonl"
dataset = "fx-cap"

[[sources]]
kind = "vqa"
path = "vqa.jsonl"
dataset = "fx-vqa"

[[sources]]
kind = "grounding"
path = "grounding.jsonl"
dataset = "fx-vg"

[[sources]]
kind = "cd"
path = "cd.jsonl"
dataset = "fx-cd"

[[sources]]
kind = "scene"
path = "scene.jsonl"
dataset = "fx-scene"
"#;

/// Writes a fixture corpus of `images` records per source kind into
/// `out_dir`, plus `convert.toml` and `manifest.json`.
pub fn make_fixture(seed: u64, images: usize, out_dir: &Path) -> Result<FixtureManifest> {
    if images == 0 {
        return Err(HarnessError::Config("fixture needs at least one image".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut out = Out {
        dir: out_dir.to_path_buf(),
        expected: BTreeMap::new(),
        annotations: BTreeMap::new(),
    };
    // one stream per source so adding records to one leaves the others unchanged
    type Gen = fn(&mut ChaCha8Rng, &mut Out, usize) -> Result<()>;
    let gens: [Gen; 8] = [det_hbb, det_obb, seg, captions, vqa, grounding, change, scene];
    for (stream, g) in gens.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        g(&mut rng, &mut out, images)?;
    }
    let config = out_dir.join("convert.toml");
    std::fs::write(&config, format!("seed = {seed}\n{CONFIG}")).map_err(|e| HarnessError::io(&config, e))?;
    let manifest = FixtureManifest {
        seed,
        images,
        variants: FIXTURE_VARIANTS,
        config,
        expected_base: out.expected,
        annotations: out.annotations,
    };
    let mpath = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Data(e.to_string()))?;
    std::fs::write(&mpath, text).map_err(|e| HarnessError::io(&mpath, e))?;
    Ok(manifest)
}
