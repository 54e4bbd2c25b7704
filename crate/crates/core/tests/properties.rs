use std::collections::BTreeSet;

use forge::geometry::{
    aabb_of, convex_hull, iou, iou_convex, min_area_rect, polygon_area, rasterize, signed_area, Geometry, Hbb, Point,
    Polygon,
};
use forge::ingest::{Payload, RawObject, RawRecord, TraceStats};
use forge::loctok::{
    dequantize, emit_location, parse_prediction, quantize, CategoryMask, LocationBin, StructuredPrediction,
};
use forge::metrics::{ap_at_50, bleu, cider, meteor, rouge_l, ApMode, BleuOptions, PixelTally};
use forge::prompts::{PromptPool, Slots};
use forge::schema::{normalize_label, read_unified, write_unified, CategoryDict, TaskKind};
use forge::taskgen::{ConversionConfig, Generator};
use proptest::prelude::*;

fn star(center: (f64, f64), radii: Vec<f64>, jitter: Vec<f64>) -> Polygon {
    let n = radii.len();
    let step = std::f64::consts::TAU / n as f64;
    let pts = radii
        .iter()
        .zip(&jitter)
        .enumerate()
        .map(|(i, (r, j))| {
            let t = step * (i as f64 + j);
            Point::new(center.0 + r * t.cos(), center.1 + r * t.sin())
        })
        .collect();
    Polygon::new(pts).unwrap()
}

fn arb_star() -> impl Strategy<Value = Polygon> {
    (3usize..12).prop_flat_map(|n| {
        (
            (100.0..900.0f64, 100.0..900.0f64),
            prop::collection::vec(20.0..90.0f64, n),
            prop::collection::vec(0.0..0.45f64, n),
        )
            .prop_map(|(c, r, j)| star(c, r, j))
    })
}

fn arb_convex() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0..500.0f64, 0.0..500.0f64), 3..12)
        .prop_map(|pts| convex_hull(&pts.into_iter().map(Point::from).collect::<Vec<_>>()))
        .prop_filter("non-degenerate hull", |h| h.len() >= 3 && signed_area(h) > 1.0)
}

fn arb_hbb() -> impl Strategy<Value = Hbb> {
    (0.0..900.0f64, 0.0..900.0f64, 1.0..100.0f64, 1.0..100.0f64)
        .prop_map(|(x, y, w, h)| Hbb::new(x, y, x + w, y + h).unwrap())
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn shoelace_invariant_under_rotation_and_reversal(p in arb_star(), k in 0usize..12) {
        let v = p.vertices().to_vec();
        let a = signed_area(&v);
        let mut rotated = v.clone();
        rotated.rotate_left(k % v.len());
        let mut reversed = v.clone();
        reversed.reverse();
        prop_assert!((signed_area(&rotated) - a).abs() <= 1e-9 * a.abs().max(1.0));
        prop_assert!((signed_area(&reversed) + a).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn area_chain(p in arb_star()) {
        let rect = min_area_rect(&p).unwrap().area().abs();
        let aabb = aabb_of(&p).area();
        prop_assert!(polygon_area(&p) <= rect + 1e-6);
        prop_assert!(rect <= aabb + 1e-6);
    }

    #[test]
    fn iou_is_symmetric(a in arb_hbb(), b in arb_hbb(), ca in arb_convex(), cb in arb_convex()) {
        let (ga, gb) = (Geometry::Hbb(a), Geometry::Hbb(b));
        prop_assert_eq!(iou(&ga, &gb), iou(&gb, &ga));
        let x = iou_convex(&ca, &cb).unwrap();
        let y = iou_convex(&cb, &ca).unwrap();
        prop_assert!((x - y).abs() <= 1e-9);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
    }

    #[test]
    fn rasterize_is_monotone(a in arb_star(), b in arb_star()) {
        let scale = |p: &Polygon| Polygon::new(p.vertices().iter().map(|v| Point::new(v.x / 8.0, v.y / 8.0)).collect()).unwrap();
        let (a, b) = (scale(&a), scale(&b));
        let one = rasterize(std::slice::from_ref(&a), 128, 128).unwrap();
        let both = rasterize(&[a, b], 128, 128).unwrap();
        prop_assert_eq!(one.intersection_count(&both), Some(one.count_ones()));
    }

    #[test]
    fn quantize_is_monotone(x in -10.0..1100.0f64, d in 0.0..50.0f64, e in 1.0..20000.0f64) {
        prop_assert!(quantize(x, e).unwrap() <= quantize(x + d, e).unwrap());
    }

    #[test]
    fn bins_survive_dequantize(b in 0u16..1000, e in 1.0..20000.0f64) {
        let bin = LocationBin::new(b).unwrap();
        prop_assert_eq!(quantize(dequantize(bin, e).unwrap(), e).unwrap(), bin);
    }

    #[test]
    fn well_formed_boxes_round_trip(x0 in 0u16..999, y0 in 0u16..999, dx in 1u16..500, dy in 1u16..500, e in 1.0..5000.0f64) {
        let (x1, y1) = ((x0 + dx).min(999), (y0 + dy).min(999));
        let s = format!("<box><loc_{x0}><loc_{y0}><loc_{x1}><loc_{y1}></box>");
        let p = parse_prediction(&s, TaskKind::Vg, e, e, CategoryDict::builtin()).unwrap();
        let StructuredPrediction::Regions { regions } = p else { panic!("regions expected") };
        prop_assert_eq!(emit_location(&regions[0], e, e).unwrap(), s);
    }

    #[test]
    fn parser_never_panics(s in ".{0,80}", t in 0usize..14) {
        let _ = parse_prediction(&s, TaskKind::ALL[t], 256.0, 256.0, CategoryDict::builtin());
    }

    #[test]
    fn map_category_is_idempotent(raw in prop::sample::select(CategoryDict::builtin().canonical().to_vec()), noise in "[ _-]{0,2}") {
        let dict = CategoryDict::builtin();
        let input = format!("{noise}{}{noise}", raw.to_uppercase());
        let once = dict.map_category(&input).unwrap();
        prop_assert_eq!(dict.map_category(once).unwrap(), once);
        prop_assert_eq!(once, raw.as_str());
    }

    #[test]
    fn normalize_is_idempotent(s in ".{0,40}") {
        let n = normalize_label(&s);
        prop_assert_eq!(normalize_label(&n), n);
    }

    #[test]
    fn variants_are_distinct(seed in any::<u64>(), id in "[a-z0-9/]{1,30}", t in 0usize..14) {
        let pool = PromptPool::builtin();
        let task = TaskKind::ALL[t];
        let m = pool.templates(task).len().min(3);
        let picks = pool.sample_variants(task, m, seed, &id).unwrap();
        let ids: BTreeSet<u32> = picks.iter().map(|p| p.template_id).collect();
        prop_assert_eq!(ids.len(), m);
    }

    #[test]
    fn class_slot_appears_verbatim(class in "[a-z ]{1,20}", k in 0usize..16) {
        let pool = PromptPool::builtin();
        let ts = pool.templates(TaskKind::DetHbb);
        let text = ts[k % ts.len()].instantiate(&Slots::class(&class)).unwrap();
        prop_assert!(text.contains(&class));
    }

    #[test]
    fn text_metrics_in_range(c in words(), r in words()) {
        let refs = vec![r.clone()];
        let b = bleu(std::slice::from_ref(&c), std::slice::from_ref(&refs), BleuOptions { smoothing: true, ..BleuOptions::default() }).unwrap();
        for v in [b.score, rouge_l(&c, &r, 1.0).unwrap(), meteor(&c, &refs).unwrap()] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{v}");
        }
    }

    #[test]
    fn cider_ignores_sample_order(pairs in prop::collection::vec((words(), words()), 3..10), k in 1usize..9) {
        let (c, r): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(a, b)| (a, vec![b])).unzip();
        let before = cider(&c, &r, 4).unwrap();
        let (mut c2, mut r2) = (c.clone(), r.clone());
        c2.rotate_left(k % c.len());
        r2.rotate_left(k % r.len());
        prop_assert!((cider(&c2, &r2, 4).unwrap() - before).abs() <= 1e-9);
    }

    #[test]
    fn ap_ignores_gt_order(preds in prop::collection::vec(arb_hbb(), 0..6), gts in prop::collection::vec(arb_hbb(), 1..6), k in 0usize..6) {
        let lab = |v: &[Hbb]| v.iter().map(|b| ("a".to_string(), Geometry::Hbb(*b))).collect::<Vec<_>>();
        let mut shuffled = gts.clone();
        shuffled.rotate_left(k % gts.len());
        for mode in [ApMode::Paper, ApMode::Voc] {
            let x = ap_at_50(&[(lab(&preds), lab(&gts))], mode).mean;
            let y = ap_at_50(&[(lab(&preds), lab(&shuffled))], mode).mean;
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn miou_ignores_image_order(polys in prop::collection::vec((arb_star(), arb_star()), 1..4)) {
        let scale = |p: &Polygon| Polygon::new(p.vertices().iter().map(|v| Point::new(v.x / 16.0, v.y / 16.0)).collect()).unwrap();
        let m = |p: &Polygon| vec![CategoryMask { category: "lake".into(), polygons: vec![scale(p)] }];
        let run = |order: &mut dyn Iterator<Item = &(Polygon, Polygon)>| {
            let mut t = PixelTally::default();
            for (p, g) in order {
                t.add_masks(&m(p), &m(g), 64, 64).unwrap();
            }
            t.finish().mean
        };
        prop_assert_eq!(run(&mut polys.iter()), run(&mut polys.iter().rev()));
    }

    #[test]
    fn generated_samples_validate_and_conserve_counts(
        boxes in prop::collection::vec((arb_hbb(), prop::sample::select(vec!["car", "plane", "ship", "spaceship"])), 0..8),
        seed in any::<u64>(),
    ) {
        let dict = CategoryDict::builtin();
        let rec = RawRecord {
            source_dataset: "p".into(),
            split: "train".into(),
            record_id: "r".into(),
            image_refs: vec!["r.png".into()],
            image_w: 1000,
            image_h: 1000,
            image_sizes: vec![(1000, 1000)],
            payload: Payload::Detections(
                boxes.iter().map(|(b, l)| RawObject { label: l.to_string(), geometry: Geometry::Hbb(*b) }).collect(),
            ),
            trace: TraceStats::default(),
        };
        let cfg = ConversionConfig { seed, ..ConversionConfig::default() };
        let g = Generator::new(&cfg, dict, PromptPool::builtin()).generate(&rec).unwrap();
        prop_assert_eq!(g.reconciliation.imbalance(), 0);
        for s in g.samples.iter().filter(|s| s.task == TaskKind::Count) {
            let StructuredPrediction::Count { count } = s.ground_truth else { panic!("count gt") };
            let cat = ["vehicle", "airplane", "ship"].into_iter().find(|c| s.instruction.contains(c)).unwrap();
            let n = boxes.iter().filter(|(_, l)| dict.map_category(l).ok() == Some(cat)).count();
            prop_assert_eq!(count as usize, n);
        }
        let again = Generator::new(&cfg, dict, PromptPool::builtin()).generate(&rec).unwrap();
        prop_assert_eq!(&g.samples, &again.samples);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.jsonl");
        write_unified(g.samples.clone(), &path).unwrap();
        let mut back: Vec<_> = read_unified(&path).unwrap().map(Result::unwrap).collect();
        let mut orig = g.samples.clone();
        orig.sort_by(|a, b| a.id.cmp(&b.id));
        back.sort_by(|a, b| a.id.cmp(&b.id));
        prop_assert_eq!(back, orig);
    }
}
