//! AP@50 in both modes for a small set of images.

use forge::geometry::{Geometry, Hbb};
use forge::metrics::{ap_at_50, ApMode};

fn b(cat: &str, x: f64, y: f64) -> (String, Geometry) {
    (cat.into(), Geometry::Hbb(Hbb::new(x, y, x + 20.0, y + 20.0).unwrap()))
}

fn main() {
    let images = vec![
        (
            vec![b("ship", 0.0, 0.0), b("ship", 100.0, 0.0)],
            vec![b("ship", 2.0, 1.0)],
        ),
        (
            vec![b("ship", 50.0, 50.0)],
            vec![b("ship", 50.0, 52.0), b("ship", 0.0, 90.0)],
        ),
        (vec![b("airplane", 10.0, 10.0)], vec![b("airplane", 10.0, 10.0)]),
    ];
    for mode in [ApMode::Paper, ApMode::Voc] {
        let r = ap_at_50(&images, mode);
        println!(
            "{mode}: mean {:.4} per-category {:?}",
            r.mean.unwrap_or(0.0),
            r.per_category
        );
    }
}
